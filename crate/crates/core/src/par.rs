//! Index-ordered data-parallel maps.
//!
//! Every helper returns results in index order, so reductions done by the
//! caller are independent of the number of worker threads. With the
//! `parallel` feature disabled the same functions run sequentially.

use crate::error::Result;

/// Sequential indexed map.
pub fn map_indexed_seq<T, F>(n: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..n).map(f).collect()
}

/// Rayon-backed indexed map.
#[cfg(feature = "parallel")]
pub fn map_indexed_par<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..n).into_par_iter().map(f).collect()
}

/// Indexed map, parallel when the `parallel` feature is enabled.
pub fn map_indexed<T, F>(n: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    #[cfg(feature = "parallel")]
    {
        map_indexed_par(n, f)
    }
    #[cfg(not(feature = "parallel"))]
    {
        map_indexed_seq(n, f)
    }
}

/// Fallible indexed map; the first error in index order is returned.
pub fn try_map_indexed<T, F>(n: usize, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync + Send,
{
    map_indexed(n, f).into_iter().collect()
}

/// Apply `f` to every element in place; fallible, first error in index order wins.
pub fn try_for_each_mut<T, F>(items: &mut [T], f: F) -> Result<()>
where
    T: Send,
    F: Fn(usize, &mut T) -> Result<()> + Sync + Send,
{
    #[cfg(feature = "parallel")]
    let outcomes: Vec<Result<()>> = {
        use rayon::prelude::*;
        items
            .par_iter_mut()
            .enumerate()
            .map(|(i, item)| f(i, item))
            .collect()
    };
    #[cfg(not(feature = "parallel"))]
    let outcomes: Vec<Result<()>> = items
        .iter_mut()
        .enumerate()
        .map(|(i, item)| f(i, item))
        .collect();
    outcomes.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_preserved() {
        let v = map_indexed(1000, |i| i * i);
        assert!(v.iter().enumerate().all(|(i, &x)| x == i * i));
        assert_eq!(v, map_indexed_seq(1000, |i| i * i));
    }

    #[test]
    fn first_error_wins() {
        let r: Result<Vec<usize>> = try_map_indexed(50, |i| {
            if i >= 7 {
                Err(crate::Error::BlowUp { step: i, unit: 0 })
            } else {
                Ok(i)
            }
        });
        match r {
            Err(crate::Error::BlowUp { step, .. }) => assert_eq!(step, 7),
            other => panic!("unexpected {other:?}"),
        }
    }
}

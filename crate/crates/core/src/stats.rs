//! Monte Carlo summaries and least-squares fits.

use serde::Serialize;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn from_samples(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self { mean: f64::NAN, stderr: f64::NAN, n };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let stderr = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0);
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, stderr, n }
    }

    pub fn exact(v: f64) -> Self {
        Self { mean: v, stderr: 0.0, n: 0 }
    }
}

/// Ordinary least-squares line with standard error of the slope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
}

/// OLS fit of `ys` on `xs`. When `y_stderr` is given the slope error is
/// propagated from the per-point errors (treated as independent); otherwise
/// it comes from the residual scatter.
pub fn ols(xs: &[f64], ys: &[f64], y_stderr: Option<&[f64]>) -> LineFit {
    let n = xs.len() as f64;
    let xm = xs.iter().sum::<f64>() / n;
    let ym = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - xm).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - xm) * (y - ym)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = ym - slope * xm;
    let slope_stderr = match y_stderr {
        Some(se) if sxx > 0.0 => xs
            .iter()
            .zip(se)
            .map(|(x, s)| ((x - xm) / sxx * s).powi(2))
            .sum::<f64>()
            .sqrt(),
        _ if xs.len() > 2 && sxx > 0.0 => {
            let rss: f64 = xs
                .iter()
                .zip(ys)
                .map(|(x, y)| (y - intercept - slope * x).powi(2))
                .sum();
            (rss / (n - 2.0) / sxx).sqrt()
        }
        _ => 0.0,
    };
    LineFit { slope, intercept, slope_stderr }
}

/// Smallest `c` in `[0, hi]` with `pred(c)` true, for a predicate monotone in
/// `c`. Returns `None` if even `hi` fails.
pub fn bisect_min<F: Fn(f64) -> bool>(pred: F, hi: f64) -> Option<f64> {
    if pred(0.0) {
        return Some(0.0);
    }
    if !pred(hi) {
        return None;
    }
    let (mut lo, mut up) = (0.0, hi);
    for _ in 0..200 {
        let mid = 0.5 * (lo + up);
        if pred(mid) {
            up = mid;
        } else {
            lo = mid;
        }
        if up - lo <= 1e-12 * up.max(1e-300) {
            break;
        }
    }
    Some(up)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ols_recovers_line() {
        let xs: Vec<f64> = (0..10).map(|i| i as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 - 0.5 * x).collect();
        let f = ols(&xs, &ys, None);
        assert!((f.slope + 0.5).abs() < 1e-12);
        assert!((f.intercept - 3.0).abs() < 1e-12);
        assert!(f.slope_stderr < 1e-10);
    }

    #[test]
    fn bisection_finds_threshold() {
        let c = bisect_min(|c| c * c.exp() >= 2.0, 10.0).unwrap();
        assert!((c * c.exp() - 2.0).abs() < 1e-9);
        assert!(bisect_min(|c| c > 20.0, 10.0).is_none());
    }

    #[test]
    fn estimate_basic() {
        let e = Estimate::from_samples(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(e.mean, 2.5);
        assert!((e.stderr - (5.0f64 / 3.0 / 4.0).sqrt()).abs() < 1e-12);
    }
}

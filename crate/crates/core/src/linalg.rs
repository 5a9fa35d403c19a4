//! Small dense matrices for the state dimension (typically 1 or 2).

use nalgebra::DMatrix;

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    d: usize,
    a: Vec<f64>,
}

impl Mat {
    pub fn zeros(d: usize) -> Self {
        Self { d, a: vec![0.0; d * d] }
    }

    pub fn identity(d: usize) -> Self {
        Self::scaled_identity(d, 1.0)
    }

    pub fn scaled_identity(d: usize, s: f64) -> Self {
        let mut m = Self::zeros(d);
        for i in 0..d {
            m.a[i * d + i] = s;
        }
        m
    }

    /// Build from rows; all rows must have length `rows.len()`.
    pub fn from_rows(rows: &[Vec<f64>]) -> Option<Self> {
        let d = rows.len();
        if d == 0 || rows.iter().any(|r| r.len() != d) {
            return None;
        }
        Some(Self {
            d,
            a: rows.iter().flatten().copied().collect(),
        })
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.d
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i * self.d + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i * self.d + j] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.a
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn copy_from(&mut self, other: &Mat) {
        self.d = other.d;
        self.a.clear();
        self.a.extend_from_slice(&other.a);
    }

    /// `out = self * x`.
    #[inline]
    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        if d == 1 {
            out[0] = self.a[0] * x[0];
            return;
        }
        for i in 0..d {
            let row = &self.a[i * d..(i + 1) * d];
            out[i] = row.iter().zip(x).map(|(r, v)| r * v).sum();
        }
    }

    /// `out += self * x`.
    #[inline]
    pub fn mul_vec_add(&self, x: &[f64], out: &mut [f64]) {
        let d = self.d;
        for i in 0..d {
            let row = &self.a[i * d..(i + 1) * d];
            out[i] += row.iter().zip(x).map(|(r, v)| r * v).sum::<f64>();
        }
    }

    pub fn mul(&self, other: &Mat) -> Mat {
        let d = self.d;
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for k in 0..d {
                let aik = self.a[i * d + k];
                for j in 0..d {
                    m.a[i * d + j] += aik * other.a[k * d + j];
                }
            }
        }
        m
    }

    pub fn transpose(&self) -> Mat {
        let d = self.d;
        let mut m = Mat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                m.a[j * d + i] = self.a[i * d + j];
            }
        }
        m
    }

    pub fn sub(&self, other: &Mat) -> Mat {
        Mat {
            d: self.d,
            a: self.a.iter().zip(&other.a).map(|(x, y)| x - y).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().all(|v| v.is_finite())
    }

    /// Hilbert–Schmidt (Frobenius) norm.
    pub fn hs_norm(&self) -> f64 {
        self.a.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Operator 2-norm.
    pub fn op_norm(&self) -> f64 {
        if self.d == 1 {
            return self.a[0].abs();
        }
        let m = DMatrix::from_row_slice(self.d, self.d, &self.a);
        m.singular_values().max()
    }

    /// Solve `self * x = b` by Gaussian elimination with partial pivoting.
    /// Returns `None` when the matrix is numerically singular.
    pub fn solve(&self, b: &[f64], x: &mut [f64]) -> Option<()> {
        let d = self.d;
        if d == 1 {
            let p = self.a[0];
            if p.abs() < 1e-300 || !p.is_finite() {
                return None;
            }
            x[0] = b[0] / p;
            return Some(());
        }
        let scale = self.a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if scale == 0.0 || !scale.is_finite() {
            return None;
        }
        let mut m = self.a.clone();
        let mut rhs = b.to_vec();
        for col in 0..d {
            let piv = (col..d)
                .max_by(|&i, &j| m[i * d + col].abs().total_cmp(&m[j * d + col].abs()))
                .unwrap_or(col);
            if m[piv * d + col].abs() <= 1e-14 * scale {
                return None;
            }
            if piv != col {
                for j in 0..d {
                    m.swap(col * d + j, piv * d + j);
                }
                rhs.swap(col, piv);
            }
            for r in col + 1..d {
                let f = m[r * d + col] / m[col * d + col];
                for j in col..d {
                    m[r * d + j] -= f * m[col * d + j];
                }
                rhs[r] -= f * rhs[col];
            }
        }
        for i in (0..d).rev() {
            let s: f64 = (i + 1..d).map(|j| m[i * d + j] * x[j]).sum();
            x[i] = (rhs[i] - s) / m[i * d + i];
        }
        Some(())
    }

    pub fn inverse(&self) -> Option<Mat> {
        let d = self.d;
        let mut inv = Mat::zeros(d);
        let mut e = vec![0.0; d];
        let mut col = vec![0.0; d];
        for j in 0..d {
            e.iter_mut().for_each(|v| *v = 0.0);
            e[j] = 1.0;
            self.solve(&e, &mut col)?;
            for i in 0..d {
                inv.a[i * d + j] = col[i];
            }
        }
        Some(inv)
    }
}

#[inline]
pub fn norm2(x: &[f64]) -> f64 {
    if x.len() == 1 {
        return x[0].abs();
    }
    x.iter().map(|v| v * v).sum::<f64>().sqrt()
}

#[inline]
pub fn dist2(x: &[f64], y: &[f64]) -> f64 {
    if x.len() == 1 {
        return (x[0] - y[0]).abs();
    }
    x.iter()
        .zip(y)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt()
}

#[inline]
pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solve_and_inverse() {
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 3.0]]).unwrap();
        let inv = m.inverse().unwrap();
        let id = m.mul(&inv);
        for i in 0..2 {
            for j in 0..2 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((id.get(i, j) - e).abs() < 1e-14);
            }
        }
        assert!(Mat::zeros(2).inverse().is_none());
    }

    #[test]
    fn op_norm_of_symmetric() {
        let m = Mat::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        assert!((m.op_norm() - 3.0).abs() < 1e-12);
        assert!((m.hs_norm() - 10f64.sqrt()).abs() < 1e-12);
    }
}

//! Zvonkin transform for the singular drift part.
//!
//! Solves `b⁰·∇u + ½ tr(a ∇²u) − λu = −b⁰` componentwise on a box by centered
//! finite differences, selects `λ` so that `‖u‖∞ + ‖∇u‖∞ ≤ 1/2`, and builds
//! `Θ = id + u`, its inverse and the transformed coefficients
//! `b̂ = λu∘Θ⁻¹ + (∇Θ · b¹)∘Θ⁻¹`, `σ̂ = (∇Θ σ)∘Θ⁻¹`.

use std::path::Path;

use serde::Serialize;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::linalg::{dist2, Mat};
use crate::par;
use crate::pathspace::{PathSegment, PathSpaceConfig};
use crate::simulate::{Dynamics, LawSummary, PathState};

/// Box `[−L, L]^dim` with mesh `Δx`; `b⁰` is extended constantly outside.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EllipticGrid {
    pub dim: usize,
    pub half_width: f64,
    pub dx: f64,
    n: usize,
}

impl EllipticGrid {
    pub fn new(dim: usize, half_width: f64, dx: f64) -> Result<Self> {
        if !(dim == 1 || dim == 2) {
            return Err(Error::Config(format!("PDE solve supports d = 1 or 2, got {dim}")));
        }
        if !(half_width > 0.0 && dx > 0.0) {
            return Err(Error::Config("grid half-width and mesh must be positive".into()));
        }
        let r = half_width / dx;
        let k = r.round();
        if (r - k).abs() > 1e-9 * r.max(1.0) || k < 2.0 {
            return Err(Error::Config(format!(
                "half-width {half_width} must be a multiple (>= 2) of dx = {dx}"
            )));
        }
        Ok(Self {
            dim,
            half_width,
            dx,
            n: 2 * k as usize + 1,
        })
    }

    /// Points per axis.
    pub fn points_per_axis(&self) -> usize {
        self.n
    }

    pub fn node_count(&self) -> usize {
        self.n.pow(self.dim as u32)
    }

    #[inline]
    pub fn coord(&self, i: usize) -> f64 {
        -self.half_width + i as f64 * self.dx
    }

    /// Coordinates of a flat node index (x fastest).
    fn node(&self, idx: usize) -> [f64; 2] {
        if self.dim == 1 {
            [self.coord(idx), 0.0]
        } else {
            [self.coord(idx % self.n), self.coord(idx / self.n)]
        }
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.iter().all(|v| v.abs() <= self.half_width)
    }

    fn is_boundary(&self, idx: usize) -> bool {
        let last = self.n - 1;
        if self.dim == 1 {
            idx == 0 || idx == last
        } else {
            let (i, j) = (idx % self.n, idx / self.n);
            i == 0 || j == 0 || i == last || j == last
        }
    }

    /// Cell index and fractional position along one axis, clamped into the box.
    #[inline]
    fn locate(&self, x: f64) -> (usize, f64) {
        let f = ((x + self.half_width) / self.dx).clamp(0.0, (self.n - 1) as f64);
        let i = (f.floor() as usize).min(self.n - 2);
        (i, f - i as f64)
    }
}

/// Sup-norm diagnostics of a solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MapNorms {
    pub u_sup: f64,
    pub grad_sup: f64,
    pub hess_sup: f64,
}

impl MapNorms {
    pub fn smallness(&self) -> f64 {
        self.u_sup + self.grad_sup
    }
}

/// Grid solution `u` with its gradient, `λ` and diagnostics.
#[derive(Debug, Clone, Serialize)]
pub struct ZvonkinMap {
    pub grid: EllipticGrid,
    pub lambda: f64,
    pub d: usize,
    #[serde(skip)]
    u: Vec<f64>,
    #[serde(skip)]
    grad: Vec<f64>,
    pub norms: MapNorms,
    pub residual: f64,
    pub tolerance: f64,
    /// `(λ, ‖u‖∞ + ‖∇u‖∞)` for every swept value.
    pub sweep: Vec<(f64, f64)>,
}

fn b0_at(coeffs: &CoefficientSet, grid: &EllipticGrid, idx: usize) -> Vec<f64> {
    let p = grid.node(idx);
    coeffs.b0.eval_vec(&p[..grid.dim])
}

fn a_at(coeffs: &CoefficientSet, grid: &EllipticGrid, idx: usize) -> Mat {
    let p = grid.node(idx);
    let s = coeffs.sigma.eval_mat(&p[..grid.dim]);
    s.mul(&s.transpose())
}

/// Discrete resolvent operator applied to one component.
struct Operator<'a> {
    grid: &'a EllipticGrid,
    lambda: f64,
    b: Vec<[f64; 2]>,
    a: Vec<[f64; 3]>,
}

impl<'a> Operator<'a> {
    fn new(coeffs: &CoefficientSet, grid: &'a EllipticGrid, lambda: f64) -> Self {
        let nn = grid.node_count();
        let mut b = Vec::with_capacity(nn);
        let mut a = Vec::with_capacity(nn);
        for idx in 0..nn {
            let bv = b0_at(coeffs, grid, idx);
            let av = a_at(coeffs, grid, idx);
            if grid.dim == 1 {
                b.push([bv[0], 0.0]);
                a.push([av.get(0, 0), 0.0, 0.0]);
            } else {
                b.push([bv[0], bv[1]]);
                a.push([av.get(0, 0), 0.5 * (av.get(0, 1) + av.get(1, 0)), av.get(1, 1)]);
            }
        }
        Self { grid, lambda, b, a }
    }

    /// `(L u)_idx` at an interior node.
    #[inline]
    fn apply_at(&self, u: &[f64], idx: usize) -> f64 {
        let g = self.grid;
        let dx = g.dx;
        let [b1, b2] = self.b[idx];
        let [a11, a12, a22] = self.a[idx];
        if g.dim == 1 {
            let (um, u0, up) = (u[idx - 1], u[idx], u[idx + 1]);
            b1 * (up - um) / (2.0 * dx) + 0.5 * a11 * (up - 2.0 * u0 + um) / (dx * dx) - self.lambda * u0
        } else {
            let n = g.n;
            let u0 = u[idx];
            let (e, w, nn, s) = (u[idx + 1], u[idx - 1], u[idx + n], u[idx - n]);
            let dxx = (e - 2.0 * u0 + w) / (dx * dx);
            let dyy = (nn - 2.0 * u0 + s) / (dx * dx);
            let dxy = (u[idx + n + 1] - u[idx + n - 1] - u[idx - n + 1] + u[idx - n - 1]) / (4.0 * dx * dx);
            b1 * (e - w) / (2.0 * dx) + b2 * (nn - s) / (2.0 * dx)
                + 0.5 * (a11 * dxx + 2.0 * a12 * dxy + a22 * dyy)
                - self.lambda * u0
        }
    }

    fn diag_at(&self, idx: usize) -> f64 {
        let dx2 = self.grid.dx * self.grid.dx;
        let [a11, _, a22] = self.a[idx];
        if self.grid.dim == 1 {
            -a11 / dx2 - self.lambda
        } else {
            -(a11 + a22) / dx2 - self.lambda
        }
    }

    /// Max-norm residual `|L u + b⁰_c|` over interior nodes.
    fn residual(&self, u: &[f64], rhs: &[f64]) -> f64 {
        (0..u.len())
            .filter(|&i| !self.grid.is_boundary(i))
            .map(|i| (self.apply_at(u, i) - rhs[i]).abs())
            .fold(0.0, f64::max)
    }
}

/// Thomas algorithm for `lower[i] x[i−1] + diag[i] x[i] + upper[i] x[i+1] = r[i]`.
fn thomas(lower: &[f64], diag: &[f64], upper: &[f64], rhs: &[f64]) -> Vec<f64> {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut d = vec![0.0; n];
    c[0] = upper[0] / diag[0];
    d[0] = rhs[0] / diag[0];
    for i in 1..n {
        let m = diag[i] - lower[i] * c[i - 1];
        c[i] = if i + 1 < n { upper[i] / m } else { 0.0 };
        d[i] = (rhs[i] - lower[i] * d[i - 1]) / m;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = d[n - 1];
    for i in (0..n - 1).rev() {
        x[i] = d[i] - c[i] * x[i + 1];
    }
    x
}

fn solve_component_1d(op: &Operator, rhs: &[f64], boundary: (f64, f64), tol: f64) -> Result<(Vec<f64>, f64)> {
    let g = op.grid;
    let n = g.n;
    let dx = g.dx;
    let mut lower = vec![0.0; n];
    let mut diag = vec![1.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let b = op.b[i][0];
        let a = op.a[i][0];
        lower[i] = -b / (2.0 * dx) + 0.5 * a / (dx * dx);
        diag[i] = -a / (dx * dx) - op.lambda;
        upper[i] = b / (2.0 * dx) + 0.5 * a / (dx * dx);
    }
    let mut r = rhs.to_vec();
    r[0] = boundary.0;
    r[n - 1] = boundary.1;
    let mut u = thomas(&lower, &diag, &upper, &r);
    let mut res = op.residual(&u, rhs);
    // iterative refinement
    for _ in 0..3 {
        if res <= tol {
            break;
        }
        let mut corr_rhs = vec![0.0; n];
        for i in 1..n - 1 {
            corr_rhs[i] = rhs[i] - op.apply_at(&u, i);
        }
        let du = thomas(&lower, &diag, &upper, &corr_rhs);
        for (x, y) in u.iter_mut().zip(&du) {
            *x += y;
        }
        res = op.residual(&u, rhs);
    }
    Ok((u, res))
}

/// Jacobi-preconditioned BiCGSTAB on interior unknowns; boundary values fixed.
fn solve_component_2d(op: &Operator, rhs: &[f64], boundary: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    let g = op.grid;
    let nn = g.node_count();
    let interior: Vec<usize> = (0..nn).filter(|&i| !g.is_boundary(i)).collect();
    let mut u = vec![0.0; nn];
    for i in 0..nn {
        if g.is_boundary(i) {
            u[i] = boundary[i];
        }
    }
    // initial guess: the constant-coefficient local solution b/λ
    for &i in &interior {
        u[i] = -rhs[i] / op.lambda;
    }
    let apply_interior = |x: &[f64], out: &mut [f64]| {
        for &i in &interior {
            out[i] = op.apply_at(x, i);
        }
    };
    let dinv: Vec<f64> = (0..nn).map(|i| 1.0 / op.diag_at(i)).collect();
    // r = b − A u (boundary contributions included through u)
    let mut r = vec![0.0; nn];
    for &i in &interior {
        r[i] = rhs[i] - op.apply_at(&u, i);
    }
    let r_hat = r.clone();
    let (mut rho, mut alpha, mut omega) = (1.0f64, 1.0f64, 1.0f64);
    let mut v = vec![0.0; nn];
    let mut p = vec![0.0; nn];
    let mut y = vec![0.0; nn];
    let mut z = vec![0.0; nn];
    let mut s = vec![0.0; nn];
    let mut t = vec![0.0; nn];
    let dot = |a: &[f64], b: &[f64]| -> f64 { interior.iter().map(|&i| a[i] * b[i]).sum() };
    let mut res = interior.iter().map(|&i| r[i].abs()).fold(0.0, f64::max);
    let max_iter = 20_000;
    for _ in 0..max_iter {
        if res <= 0.5 * tol {
            break;
        }
        let rho_new = dot(&r_hat, &r);
        if rho_new == 0.0 {
            break;
        }
        let beta = (rho_new / rho) * (alpha / omega);
        rho = rho_new;
        for &i in &interior {
            p[i] = r[i] + beta * (p[i] - omega * v[i]);
            y[i] = dinv[i] * p[i];
        }
        apply_interior(&y, &mut v);
        alpha = rho / dot(&r_hat, &v);
        for &i in &interior {
            s[i] = r[i] - alpha * v[i];
            z[i] = dinv[i] * s[i];
        }
        apply_interior(&z, &mut t);
        let tt = dot(&t, &t);
        omega = if tt > 0.0 { dot(&t, &s) / tt } else { 0.0 };
        for &i in &interior {
            u[i] += alpha * y[i] + omega * z[i];
            r[i] = s[i] - omega * t[i];
        }
        res = interior.iter().map(|&i| r[i].abs()).fold(0.0, f64::max);
        if omega == 0.0 {
            break;
        }
    }
    let achieved = op.residual(&u, rhs);
    Ok((u, achieved))
}

/// Solve the resolvent equation for a fixed `λ`.
pub fn solve_resolvent(coeffs: &CoefficientSet, grid: &EllipticGrid, lambda: f64) -> Result<ZvonkinMap> {
    if !(lambda > 0.0) {
        return Err(Error::Precondition(format!("lambda must be positive, got {lambda}")));
    }
    if coeffs.dim() != grid.dim {
        return Err(Error::DimensionMismatch {
            expected: grid.dim,
            got: coeffs.dim(),
        });
    }
    let d = grid.dim;
    let nn = grid.node_count();
    let bsup = coeffs.b0.sup_norm();
    let tol = 1e-8 * (1.0 + bsup);
    let b0: Vec<Vec<f64>> = (0..nn).map(|i| b0_at(coeffs, grid, i)).collect();
    if b0.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidCoefficient {
            what: "b0 on the grid".into(),
            input: "grid node".into(),
        });
    }
    let op = Operator::new(coeffs, grid, lambda);
    let mut u = vec![0.0; nn * d];
    let mut worst = 0.0f64;
    for c in 0..d {
        let rhs: Vec<f64> = b0.iter().map(|v| -v[c]).collect();
        if rhs.iter().all(|v| *v == 0.0) {
            continue;
        }
        // constant extension of b⁰ beyond the box: u = b⁰/λ on the boundary
        let bnd: Vec<f64> = b0.iter().map(|v| v[c] / lambda).collect();
        let (uc, res) = if d == 1 {
            solve_component_1d(&op, &rhs, (bnd[0], bnd[nn - 1]), tol)?
        } else {
            solve_component_2d(&op, &rhs, &bnd, tol)?
        };
        worst = worst.max(res);
        for i in 0..nn {
            u[i * d + c] = uc[i];
        }
    }
    if !(worst <= tol) {
        return Err(Error::SolverFailure {
            achieved: worst,
            tolerance: tol,
        });
    }
    let grad = gradient(grid, &u, d);
    let norms = map_norms(grid, &u, &grad, d);
    Ok(ZvonkinMap {
        grid: *grid,
        lambda,
        d,
        u,
        grad,
        norms,
        residual: worst,
        tolerance: tol,
        sweep: vec![(lambda, norms.smallness())],
    })
}

/// Centered differences (one-sided at the box edge); row-major `∂_j u_i`.
fn gradient(grid: &EllipticGrid, u: &[f64], d: usize) -> Vec<f64> {
    let n = grid.n;
    let nn = grid.node_count();
    let dx = grid.dx;
    let mut g = vec![0.0; nn * d * d];
    let stride = |axis: usize| if axis == 0 { 1 } else { n };
    for idx in 0..nn {
        let pos = [idx % n, idx / n];
        for axis in 0..d {
            let k = if d == 1 { idx } else { pos[axis] };
            let st = stride(axis);
            let (lo, hi, span) = if k == 0 {
                (idx, idx + st, dx)
            } else if k == n - 1 {
                (idx - st, idx, dx)
            } else {
                (idx - st, idx + st, 2.0 * dx)
            };
            for c in 0..d {
                g[idx * d * d + c * d + axis] = (u[hi * d + c] - u[lo * d + c]) / span;
            }
        }
    }
    g
}

fn map_norms(grid: &EllipticGrid, u: &[f64], grad: &[f64], d: usize) -> MapNorms {
    let nn = grid.node_count();
    let mut u_sup = 0.0f64;
    let mut g_sup = 0.0f64;
    for idx in 0..nn {
        let uv = &u[idx * d..(idx + 1) * d];
        u_sup = u_sup.max(uv.iter().map(|v| v * v).sum::<f64>().sqrt());
        let gm = &grad[idx * d * d..(idx + 1) * d * d];
        let op = if d == 1 {
            gm[0].abs()
        } else {
            Mat::from_rows(&[gm[0..2].to_vec(), gm[2..4].to_vec()])
                .expect("2x2")
                .op_norm()
        };
        g_sup = g_sup.max(op);
    }
    // second differences, diagnostic only
    let n = grid.n;
    let dx2 = grid.dx * grid.dx;
    let mut h_sup = 0.0f64;
    for idx in 0..nn {
        if grid.is_boundary(idx) {
            continue;
        }
        for c in 0..d {
            let v = if d == 1 {
                (u[(idx + 1) * d + c] - 2.0 * u[idx * d + c] + u[(idx - 1) * d + c]) / dx2
            } else {
                let xx = (u[(idx + 1) * d + c] - 2.0 * u[idx * d + c] + u[(idx - 1) * d + c]) / dx2;
                let yy = (u[(idx + n) * d + c] - 2.0 * u[idx * d + c] + u[(idx - n) * d + c]) / dx2;
                xx.abs().max(yy.abs())
            };
            h_sup = h_sup.max(v.abs());
        }
    }
    MapNorms {
        u_sup,
        grad_sup: g_sup,
        hess_sup: h_sup,
    }
}

/// Geometric sweep of `count` values from `2‖b⁰‖∞` to `10³‖b⁰‖∞`.
pub fn default_lambda_grid(b0_sup: f64, count: usize) -> Vec<f64> {
    if b0_sup <= 0.0 {
        return vec![1.0];
    }
    let (lo, hi) = (2.0 * b0_sup, 1e3 * b0_sup);
    if count <= 1 {
        return vec![lo];
    }
    (0..count)
        .map(|k| lo * (hi / lo).powf(k as f64 / (count - 1) as f64))
        .collect()
}

/// Smallest `λ` of the sweep with `‖u‖∞ + ‖∇u‖∞ ≤ 1/2`; the whole sweep is recorded.
pub fn select_lambda(coeffs: &CoefficientSet, grid: &EllipticGrid, lambda_grid: &[f64]) -> Result<ZvonkinMap> {
    if lambda_grid.is_empty() {
        return Err(Error::Precondition("lambda grid is empty".into()));
    }
    if lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Precondition("lambda grid must be increasing".into()));
    }
    let maps = par::try_map_indexed(lambda_grid.len(), |k| solve_resolvent(coeffs, grid, lambda_grid[k]))?;
    let sweep: Vec<(f64, f64)> = maps.iter().map(|m| (m.lambda, m.norms.smallness())).collect();
    let best = sweep.iter().map(|s| s.1).fold(f64::INFINITY, f64::min);
    let mut chosen = maps
        .into_iter()
        .find(|m| m.norms.smallness() <= 0.5)
        .ok_or(Error::LambdaExhausted { best })?;
    chosen.sweep = sweep;
    Ok(chosen)
}

impl ZvonkinMap {
    /// `u ≡ c` on the grid, with the given `λ` (used for tests and `b⁰ ≡ 0`).
    pub fn constant(grid: &EllipticGrid, lambda: f64, value: &[f64]) -> Result<Self> {
        let d = grid.dim;
        if value.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                got: value.len(),
            });
        }
        let nn = grid.node_count();
        let mut u = Vec::with_capacity(nn * d);
        for _ in 0..nn {
            u.extend_from_slice(value);
        }
        let grad = vec![0.0; nn * d * d];
        let norms = map_norms(grid, &u, &grad, d);
        Ok(Self {
            grid: *grid,
            lambda,
            d,
            u,
            grad,
            norms,
            residual: 0.0,
            tolerance: 0.0,
            sweep: vec![(lambda, norms.smallness())],
        })
    }

    pub fn is_identity(&self) -> bool {
        self.u.iter().all(|v| *v == 0.0)
    }

    /// Interpolated `u(x)` and `∇u(x)`, clamping into the box. Returns
    /// whether `x` was inside.
    #[inline]
    pub fn eval_clamped(&self, x: &[f64], u: &mut [f64], grad: &mut [f64]) -> bool {
        let d = self.d;
        let g = &self.grid;
        let inside = g.contains(x);
        if d == 1 {
            let (i, w) = g.locate(x[0]);
            u[0] = (1.0 - w) * self.u[i] + w * self.u[i + 1];
            grad[0] = (1.0 - w) * self.grad[i] + w * self.grad[i + 1];
        } else {
            let n = g.n;
            let (i, wx) = g.locate(x[0]);
            let (j, wy) = g.locate(x[1]);
            let corners = [
                (j * n + i, (1.0 - wx) * (1.0 - wy)),
                (j * n + i + 1, wx * (1.0 - wy)),
                ((j + 1) * n + i, (1.0 - wx) * wy),
                ((j + 1) * n + i + 1, wx * wy),
            ];
            u.iter_mut().for_each(|v| *v = 0.0);
            grad.iter_mut().for_each(|v| *v = 0.0);
            for (idx, w) in corners {
                for c in 0..d {
                    u[c] += w * self.u[idx * d + c];
                }
                for k in 0..d * d {
                    grad[k] += w * self.grad[idx * d * d + k];
                }
            }
        }
        inside
    }

    fn u_clamped(&self, x: &[f64], out: &mut [f64]) -> bool {
        let mut g = [0.0; 4];
        self.eval_clamped(x, out, &mut g[..self.d * self.d])
    }

    fn check_inside(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        if !self.grid.contains(x) {
            return Err(Error::OutOfDomain {
                point: x.to_vec(),
                half_width: self.grid.half_width,
            });
        }
        Ok(())
    }

    /// `Θ(x) = x + u(x)`.
    pub fn theta(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_inside(x)?;
        let mut u = vec![0.0; self.d];
        self.u_clamped(x, &mut u);
        Ok(x.iter().zip(&u).map(|(a, b)| a + b).collect())
    }

    /// Fixed point of `x = y − u(x)` by Picard iteration to `1e−12`.
    pub fn theta_inv(&self, y: &[f64]) -> Result<Vec<f64>> {
        self.check_inside(y)?;
        let (x, _) = self.theta_inv_from(y, y);
        Ok(x)
    }

    /// Picard iteration from `start`; also reports whether every iterate
    /// stayed inside the box.
    pub fn theta_inv_from(&self, y: &[f64], start: &[f64]) -> (Vec<f64>, bool) {
        let d = self.d;
        let mut x = start.to_vec();
        let mut u = vec![0.0; d];
        let mut inside = true;
        for _ in 0..200 {
            inside &= self.u_clamped(&x, &mut u);
            let next: Vec<f64> = y.iter().zip(&u).map(|(a, b)| a - b).collect();
            let delta = dist2(&next, &x);
            x = next;
            if delta <= 1e-12 {
                break;
            }
        }
        inside &= self.grid.contains(&x);
        (x, inside)
    }

    /// `Θ^#`: apply `Θ` pointwise to a segment (clamped evaluation) and
    /// count the samples outside the box.
    pub fn push_segment(&self, seg: &PathSegment) -> Result<(PathSegment, u64)> {
        let mut exits = 0u64;
        let mut u = vec![0.0; self.d];
        let out = seg.map_points(|x| {
            if !self.u_clamped(x, &mut u) {
                exits += 1;
            }
            Ok(x.iter().zip(&u).map(|(a, b)| a + b).collect())
        })?;
        Ok((out, exits))
    }

    /// `(Θ^#)^{−1}` applied to a segment.
    pub fn pull_segment(&self, seg: &PathSegment) -> Result<PathSegment> {
        let mut prev: Option<Vec<f64>> = None;
        seg.map_points(|y| {
            let start = prev.clone().unwrap_or_else(|| y.to_vec());
            let (x, _) = self.theta_inv_from(y, &start);
            prev = Some(x.clone());
            Ok(x)
        })
    }

    /// CSV of `x, u, ∇u` at every grid node.
    pub fn to_csv(&self) -> String {
        use std::fmt::Write as _;
        let d = self.d;
        let mut out = String::new();
        let xs: Vec<String> = (1..=d).map(|i| format!("x{i}")).collect();
        let us: Vec<String> = (1..=d).map(|i| format!("u{i}")).collect();
        let gs: Vec<String> = (1..=d)
            .flat_map(|i| (1..=d).map(move |j| format!("du{i}_dx{j}")))
            .collect();
        let _ = writeln!(out, "{},{},{}", xs.join(","), us.join(","), gs.join(","));
        for idx in 0..self.grid.node_count() {
            let p = self.grid.node(idx);
            let mut row: Vec<String> = p[..d].iter().map(|v| format!("{v:.6}")).collect();
            row.extend(self.u[idx * d..(idx + 1) * d].iter().map(|v| format!("{v:.12e}")));
            row.extend(
                self.grad[idx * d * d..(idx + 1) * d * d]
                    .iter()
                    .map(|v| format!("{v:.12e}")),
            );
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }

    pub fn metadata_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plain data")
    }

    /// Write `<stem>.csv` and `<stem>.json` into `dir`.
    pub fn export(&self, dir: &Path, stem: &str) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.csv")), self.to_csv())?;
        std::fs::write(dir.join(format!("{stem}.json")), self.metadata_json())?;
        Ok(())
    }
}

/// Coefficients of the equation for `Y = Θ(X)`.
#[derive(Debug, Clone)]
pub struct TransformedCoefficients {
    pub map: ZvonkinMap,
    pub coeffs: CoefficientSet,
}

/// Build `(b̂, σ̂)` from a map and the original coefficients.
pub fn transformed_coeffs(map: &ZvonkinMap, coeffs: &CoefficientSet) -> Result<TransformedCoefficients> {
    if map.d != coeffs.dim() {
        return Err(Error::DimensionMismatch {
            expected: coeffs.dim(),
            got: map.d,
        });
    }
    Ok(TransformedCoefficients {
        map: map.clone(),
        coeffs: coeffs.clone(),
    })
}

impl TransformedCoefficients {
    #[inline]
    fn local(&self, x: &[f64]) -> ([f64; 2], [f64; 4]) {
        let mut u = [0.0; 2];
        let mut g = [0.0; 4];
        let d = self.map.d;
        self.map.eval_clamped(x, &mut u[..d], &mut g[..d * d]);
        (u, g)
    }

    /// `(I + ∇u(x)) v` into `out`.
    #[inline]
    fn jac_apply(g: &[f64; 4], d: usize, v: &[f64], out: &mut [f64]) {
        for i in 0..d {
            let mut s = v[i];
            for j in 0..d {
                s += g[i * d + j] * v[j];
            }
            out[i] = s;
        }
    }

    /// `b̂(ξ, μ)` for a segment `ξ` in transformed coordinates.
    pub fn drift_at(&self, seg: &PathSegment, law: &LawSummary) -> Result<Vec<f64>> {
        let x_seg = self.map.pull_segment(seg)?;
        let st = PathState::transformed(seg.clone(), x_seg, self.coeffs.b1.rate, false);
        let mut out = vec![0.0; self.map.d];
        self.drift(&st, law, &mut out);
        Ok(out)
    }

    /// `σ̂(y) = ((I + ∇u) σ)(Θ⁻¹(y))`.
    pub fn sigma_at(&self, y: &[f64]) -> Result<Mat> {
        let x = self.map.theta_inv(y)?;
        let d = self.map.d;
        let (_, g) = self.local(&x);
        let s = self.coeffs.sigma.eval_mat(&x);
        let mut jac = Mat::identity(d);
        for i in 0..d {
            for j in 0..d {
                jac.set(i, j, jac.get(i, j) + g[i * d + j]);
            }
        }
        Ok(jac.mul(&s))
    }
}

impl Dynamics for TransformedCoefficients {
    fn path(&self) -> &PathSpaceConfig {
        &self.coeffs.path
    }

    fn init_state(&self, xi: &PathSegment, track_norm: bool) -> Result<PathState> {
        if *xi.config() != self.coeffs.path {
            return Err(Error::Config("initial segment uses a different grid".into()));
        }
        let (y, exits) = self.map.push_segment(xi)?;
        let mut st = PathState::transformed(y, xi.clone(), self.coeffs.b1.rate, track_norm);
        st.exits = exits;
        Ok(st)
    }

    #[inline]
    fn drift(&self, st: &PathState, law: &LawSummary, out: &mut [f64]) {
        let d = self.map.d;
        let x = st.original_endpoint();
        let (u, g) = self.local(x);
        let mut b1 = [0.0; 2];
        self.coeffs
            .b1
            .eval_features(x, st.weighted(), &law.mean_endpoint, &mut b1[..d]);
        Self::jac_apply(&g, d, &b1[..d], out);
        for i in 0..d {
            out[i] += self.map.lambda * u[i];
        }
    }

    #[inline]
    fn sigma(&self, st: &PathState, out: &mut Mat) {
        let d = self.map.d;
        let x = st.original_endpoint();
        let (_, g) = self.local(x);
        if d == 1 {
            let s = match &self.coeffs.sigma {
                crate::coefficients::Diffusion::Constant(m) => m.get(0, 0),
                crate::coefficients::Diffusion::Modulated { base, amp } => base + amp * x[0].sin(),
            };
            if out.dim() != 1 {
                *out = Mat::zeros(1);
            }
            out.set(0, 0, (1.0 + g[0]) * s);
            return;
        }
        let s = self.coeffs.sigma.eval_mat(x);
        let mut jac = Mat::identity(d);
        for i in 0..d {
            for j in 0..d {
                jac.set(i, j, jac.get(i, j) + g[i * d + j]);
            }
        }
        *out = jac.mul(&s);
    }

    fn push(&self, st: &mut PathState, value: &[f64]) -> Result<()> {
        let start = st.original_endpoint().to_vec();
        let (x, inside) = self.map.theta_inv_from(value, &start);
        if !inside {
            st.exits += 1;
        }
        st.push_transformed(value, &x)
    }

    fn law_drift_delta(&self, _st: &PathState, mu: &LawSummary, nu: &LawSummary, out: &mut [f64]) {
        self.coeffs.b1.law_delta(&mu.mean_endpoint, &nu.mean_endpoint, out);
    }

    fn sigma_original(&self, st: &PathState, out: &mut Mat) {
        self.coeffs.sigma.eval(st.original_endpoint(), out);
    }

    fn law_dependent(&self) -> bool {
        self.coeffs.law_dependent()
    }
}

//! Discretised weighted path space.
//!
//! A [`PathSegment`] stores a history window `ξ(s)`, `s ∈ [−T_mem, 0]`, on a
//! uniform grid of step `h`. The weighted norm `‖ξ‖_τ = sup e^{τs}|ξ(s)|` is
//! taken as a grid supremum; the neglected tail beyond `T_mem` is bounded by
//! `e^{−τ T_mem} sup|ξ|` and reported via [`PathSpaceConfig::truncation_bound`].

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::norm2;

const GRID_EPS: f64 = 1e-9;

/// Grid of the discretised path space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSpaceConfig {
    pub d: usize,
    pub tau: f64,
    pub h: f64,
    pub t_mem: f64,
    steps: usize,
}

impl PathSpaceConfig {
    pub fn new(d: usize, tau: f64, h: f64, t_mem: f64) -> Result<Self> {
        if d == 0 {
            return Err(Error::Config("state dimension must be >= 1".into()));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::Config(format!("grid step must be positive, got {h}")));
        }
        let ratio = t_mem / h;
        let steps = ratio.round();
        if !(t_mem > 0.0) || steps < 1.0 || (ratio - steps).abs() > GRID_EPS * ratio.max(1.0) {
            return Err(Error::Config(format!(
                "memory horizon {t_mem} must be a positive multiple of h = {h}"
            )));
        }
        Ok(Self {
            d,
            tau,
            h,
            t_mem,
            steps: steps as usize,
        })
    }

    /// Number of grid steps `T_mem / h`.
    #[inline]
    pub fn steps(&self) -> usize {
        self.steps
    }

    /// Number of stored samples, `T_mem / h + 1`.
    #[inline]
    pub fn len(&self) -> usize {
        self.steps + 1
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        false
    }

    /// Time `s_i = −T_mem + i h` of logical index `i`.
    #[inline]
    pub fn grid_time(&self, i: usize) -> f64 {
        -self.t_mem + i as f64 * self.h
    }

    /// `e^{−τ T_mem}`: relative size of the history discarded by truncation.
    pub fn truncation_bound(&self) -> f64 {
        (-self.tau * self.t_mem).exp()
    }

    /// Number of grid steps in a truncation level `N` (must be a grid multiple).
    pub fn level_steps(&self, level: f64) -> Result<usize> {
        let ratio = level / self.h;
        let k = ratio.round();
        if !(level > 0.0) || (ratio - k).abs() > GRID_EPS * ratio.max(1.0) || k as usize > self.steps
        {
            return Err(Error::Precondition(format!(
                "truncation level {level} must lie on the grid in (0, {}]",
                self.t_mem
            )));
        }
        Ok(k as usize)
    }

    /// Weights `e^{τ s_i}` for every logical index.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| (self.tau * self.grid_time(i)).exp())
            .collect()
    }

    /// Same grid with a different dimension.
    pub fn with_dim(&self, d: usize) -> Self {
        Self { d, ..*self }
    }
}

/// Uniform-grid history window, stored as a ring buffer.
#[derive(Debug, Clone)]
pub struct PathSegment {
    cfg: PathSpaceConfig,
    data: Vec<f64>,
    head: usize,
}

impl PartialEq for PathSegment {
    fn eq(&self, other: &Self) -> bool {
        self.cfg == other.cfg && self.iter().zip(other.iter()).all(|(a, b)| a == b)
    }
}

impl PathSegment {
    pub fn zeros(cfg: PathSpaceConfig) -> Self {
        Self {
            cfg,
            data: vec![0.0; cfg.len() * cfg.d],
            head: 0,
        }
    }

    pub fn constant(cfg: PathSpaceConfig, value: &[f64]) -> Result<Self> {
        check_point(&cfg, value)?;
        let mut data = Vec::with_capacity(cfg.len() * cfg.d);
        for _ in 0..cfg.len() {
            data.extend_from_slice(value);
        }
        Ok(Self { cfg, data, head: 0 })
    }

    /// Sample a path `s ↦ f(s)` on the grid.
    pub fn from_fn<F: FnMut(f64) -> Vec<f64>>(cfg: PathSpaceConfig, mut f: F) -> Result<Self> {
        let mut data = Vec::with_capacity(cfg.len() * cfg.d);
        for i in 0..cfg.len() {
            let v = f(cfg.grid_time(i));
            check_point(&cfg, &v).map_err(|e| Error::InvalidSegment(format!("index {i}: {e}")))?;
            data.extend_from_slice(&v);
        }
        Ok(Self { cfg, data, head: 0 })
    }

    /// Build from a flat array of `len * d` values in logical order.
    pub fn from_flat(cfg: PathSpaceConfig, data: Vec<f64>) -> Result<Self> {
        if data.len() != cfg.len() * cfg.d {
            return Err(Error::InvalidSegment(format!(
                "expected {} values, got {}",
                cfg.len() * cfg.d,
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSegment(format!(
                "non-finite entry at grid index {}",
                pos / cfg.d
            )));
        }
        Ok(Self { cfg, data, head: 0 })
    }

    #[inline]
    pub fn config(&self) -> &PathSpaceConfig {
        &self.cfg
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.cfg.d
    }

    #[inline]
    fn slot(&self, i: usize) -> usize {
        let n = self.cfg.len();
        let s = self.head + i;
        if s >= n {
            s - n
        } else {
            s
        }
    }

    /// Value at logical index `i` (`0 ↔ s = −T_mem`, `len−1 ↔ s = 0`).
    #[inline]
    pub fn value(&self, i: usize) -> &[f64] {
        let d = self.cfg.d;
        let k = self.slot(i) * d;
        &self.data[k..k + d]
    }

    #[inline]
    pub fn endpoint(&self) -> &[f64] {
        self.value(self.cfg.steps)
    }

    #[inline]
    pub fn oldest(&self) -> &[f64] {
        self.value(0)
    }

    /// Values in logical order.
    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        (0..self.cfg.len()).map(move |i| self.value(i))
    }

    /// Flat copy in logical order.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.data.len());
        for v in self.iter() {
            out.extend_from_slice(v);
        }
        out
    }

    /// Grid approximation of `‖ξ‖_τ`.
    pub fn weighted_norm(&self) -> f64 {
        self.norm_over(self.cfg.steps)
    }

    /// Grid approximation of `‖ξ‖_{N,τ}`: supremum over `s ∈ [−N, 0]`.
    pub fn truncated_norm(&self, level: f64) -> Result<f64> {
        let k = self.cfg.level_steps(level)?;
        Ok(self.norm_over(k))
    }

    /// Supremum of `e^{τs}|ξ(s)|` over the last `k` steps (k+1 grid points).
    pub fn norm_over(&self, k: usize) -> f64 {
        let n = self.cfg.steps;
        let decay = (-self.cfg.tau * self.cfg.h).exp();
        let mut w = 1.0;
        let mut best = 0.0f64;
        for j in 0..=k {
            let v = norm2(self.value(n - j)) * w;
            if v > best {
                best = v;
            }
            w *= decay;
        }
        best
    }

    /// Shift by one grid step, appending `new_value` at `s = 0`.
    pub fn advance(&self, new_value: &[f64]) -> Result<Self> {
        let mut out = self.clone();
        out.advance_mut(new_value)?;
        Ok(out)
    }

    /// In-place shift (O(d)).
    #[inline]
    pub fn advance_mut(&mut self, new_value: &[f64]) -> Result<()> {
        if new_value.len() != self.cfg.d {
            return Err(Error::DimensionMismatch {
                expected: self.cfg.d,
                got: new_value.len(),
            });
        }
        if new_value.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSegment("non-finite value pushed".into()));
        }
        let d = self.cfg.d;
        let k = self.head * d;
        self.data[k..k + d].copy_from_slice(new_value);
        self.head += 1;
        if self.head == self.cfg.len() {
            self.head = 0;
        }
        Ok(())
    }

    /// Flat extension `ξ⁰(r) = ξ(0)`.
    pub fn flat(&self) -> Self {
        Self::constant(self.cfg, self.endpoint()).expect("endpoint is finite")
    }

    /// Pointwise `a·self + b·other`.
    pub fn lincomb(&self, a: f64, other: &PathSegment, b: f64) -> Result<Self> {
        self.check_same_grid(other)?;
        let mut data = Vec::with_capacity(self.data.len());
        for (x, y) in self.iter().zip(other.iter()) {
            data.extend(x.iter().zip(y).map(|(p, q)| a * p + b * q));
        }
        Self::from_flat(self.cfg, data)
    }

    pub fn sub(&self, other: &PathSegment) -> Result<Self> {
        self.lincomb(1.0, other, -1.0)
    }

    pub fn scale(&self, c: f64) -> Self {
        let data = self.to_flat().into_iter().map(|v| c * v).collect();
        Self::from_flat(self.cfg, data).expect("scaling preserves finiteness for finite c")
    }

    /// Apply a point map to every sample (`Θ^#`-style pushforward).
    pub fn map_points<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let mut data = Vec::with_capacity(self.data.len());
        for v in self.iter() {
            let w = f(v)?;
            data.extend_from_slice(&w);
        }
        Self::from_flat(self.cfg, data)
    }

    /// `sup_s e^{τs}|ξ(s) − η(s)|` without materialising the difference.
    pub fn distance(&self, other: &PathSegment) -> f64 {
        self.distance_over(other, self.cfg.steps)
    }

    /// Truncated distance `‖ξ − η‖_{N,τ}` over the last `k` steps.
    pub fn distance_over(&self, other: &PathSegment, k: usize) -> f64 {
        let n = self.cfg.steps;
        let decay = (-self.cfg.tau * self.cfg.h).exp();
        let mut w = 1.0;
        let mut best = 0.0f64;
        for j in 0..=k {
            let v = crate::linalg::dist2(self.value(n - j), other.value(n - j)) * w;
            if v > best {
                best = v;
            }
            w *= decay;
        }
        best
    }

    pub fn check_same_grid(&self, other: &PathSegment) -> Result<()> {
        if self.cfg != other.cfg {
            return Err(Error::Config(
                "segments live on different path-space grids".into(),
            ));
        }
        Ok(())
    }

    /// CSV with header `s,x1,…,xd`, rows from `s = −T_mem` to `s = 0`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("s");
        for c in 1..=self.cfg.d {
            let _ = write!(out, ",x{c}");
        }
        out.push('\n');
        let decimals = decimals_for(self.cfg.h);
        for (i, v) in self.iter().enumerate() {
            let _ = write!(out, "{:.*}", decimals, self.cfg.grid_time(i));
            for x in v {
                let _ = write!(out, ",{x:e}");
            }
            out.push('\n');
        }
        out
    }

    /// Parse the CSV produced by [`Self::to_csv`] on grid `cfg`.
    pub fn from_csv(cfg: PathSpaceConfig, text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let header = lines
            .next()
            .ok_or_else(|| Error::Parse("empty segment CSV".into()))?;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.len() != cfg.d + 1 || cols[0] != "s" {
            return Err(Error::Parse(format!("bad segment header '{header}'")));
        }
        let mut data = Vec::with_capacity(cfg.len() * cfg.d);
        let mut rows = 0;
        for (i, line) in lines.enumerate() {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() != cfg.d + 1 {
                return Err(Error::Parse(format!("row {i}: expected {} fields", cfg.d + 1)));
            }
            let s: f64 = fields[0]
                .parse()
                .map_err(|_| Error::Parse(format!("row {i}: bad time '{}'", fields[0])))?;
            if (s - cfg.grid_time(i)).abs() > 0.5 * cfg.h {
                return Err(Error::Parse(format!("row {i}: time {s} is off the grid")));
            }
            for f in &fields[1..] {
                data.push(
                    f.parse()
                        .map_err(|_| Error::Parse(format!("row {i}: bad value '{f}'")))?,
                );
            }
            rows += 1;
        }
        if rows != cfg.len() {
            return Err(Error::Parse(format!("expected {} rows, got {rows}", cfg.len())));
        }
        Self::from_flat(cfg, data)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

fn decimals_for(h: f64) -> usize {
    let mut d = 0;
    let mut x = h;
    while d < 12 && (x - x.round()).abs() > 1e-9 {
        x *= 10.0;
        d += 1;
    }
    d
}

fn check_point(cfg: &PathSpaceConfig, v: &[f64]) -> Result<()> {
    if v.len() != cfg.d {
        return Err(Error::DimensionMismatch {
            expected: cfg.d,
            got: v.len(),
        });
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidSegment("non-finite value".into()));
    }
    Ok(())
}

/// Free-function form of [`PathSegment::weighted_norm`].
pub fn weighted_norm(seg: &PathSegment) -> f64 {
    seg.weighted_norm()
}

/// Free-function form of [`PathSegment::truncated_norm`].
pub fn truncated_norm(seg: &PathSegment, level: f64) -> Result<f64> {
    seg.truncated_norm(level)
}

/// Free-function form of [`PathSegment::advance`].
pub fn advance(seg: &PathSegment, new_value: &[f64]) -> Result<PathSegment> {
    seg.advance(new_value)
}

/// Checks `e^{pτt}‖X_t‖_τ^p ≤ ‖X_0‖_τ^p + max_{s∈[0,t]} e^{pτs}|X(s)|^p` at every
/// grid time of the continuation `future_values` of `seg0`, allowing the
/// truncation slack `e^{−pτ T_mem} max|X|^p`.
pub fn check_history_inequality(seg0: &PathSegment, future_values: &[Vec<f64>], p: f64) -> bool {
    let cfg = *seg0.config();
    let tau = cfg.tau;
    let x0_norm_p = seg0.weighted_norm().powf(p);
    let mut max_abs = seg0.iter().map(norm2).fold(0.0f64, f64::max);
    let mut running_sup = norm2(seg0.endpoint()).powf(p);
    let mut seg = seg0.clone();
    for (k, v) in future_values.iter().enumerate() {
        if seg.advance_mut(v).is_err() {
            return false;
        }
        let t = (k + 1) as f64 * cfg.h;
        let a = norm2(v);
        max_abs = max_abs.max(a);
        running_sup = running_sup.max((p * tau * t).exp() * a.powf(p));
        let lhs = (p * tau * t).exp() * seg.weighted_norm().powf(p);
        let tol = (-p * tau * cfg.t_mem).exp() * max_abs.powf(p);
        let rhs = x0_norm_p + running_sup;
        if lhs > rhs + tol + 1e-12 * rhs.max(1.0) {
            return false;
        }
    }
    true
}

/// Exponentially weighted Riemann sum `J_ρ(ξ) = h Σ_i e^{ρ s_i} ξ(s_i)`.
pub fn exp_weighted_integral(seg: &PathSegment, rate: f64) -> Vec<f64> {
    let cfg = seg.config();
    let mut acc = vec![0.0; cfg.d];
    let decay = (-rate * cfg.h).exp();
    let mut w = cfg.h;
    for j in 0..cfg.len() {
        let v = seg.value(cfg.steps - j);
        for (a, x) in acc.iter_mut().zip(v) {
            *a += w * x;
        }
        w *= decay;
    }
    acc
}

/// Incrementally maintained `J_ρ` for a segment advanced one step at a time.
#[derive(Debug, Clone)]
pub struct ExpIntegral {
    h: f64,
    decay: f64,
    tail: f64,
    value: Vec<f64>,
}

impl ExpIntegral {
    pub fn new(seg: &PathSegment, rate: f64) -> Self {
        let cfg = seg.config();
        Self {
            h: cfg.h,
            decay: (-rate * cfg.h).exp(),
            tail: (-rate * cfg.t_mem).exp(),
            value: exp_weighted_integral(seg, rate),
        }
    }

    /// Update for a shift that drops `oldest` and appends `newest`.
    #[inline]
    pub fn shift(&mut self, oldest: &[f64], newest: &[f64]) {
        for ((j, o), n) in self.value.iter_mut().zip(oldest).zip(newest) {
            *j = self.decay * (*j - self.h * self.tail * o) + self.h * n;
        }
    }

    #[inline]
    pub fn value(&self) -> &[f64] {
        &self.value
    }
}

/// Sliding-window tracker of `‖ξ_t‖_τ`, O(1) amortised per step.
///
/// Keys are `ln|ξ(t_i)| + τ t_i` in absolute time, so shifting the window does
/// not rescale stored entries.
#[derive(Debug, Clone)]
pub struct NormTracker {
    tau_h: f64,
    window: u64,
    next: u64,
    deque: VecDeque<(u64, f64)>,
}

impl NormTracker {
    pub fn new(seg: &PathSegment) -> Self {
        let cfg = seg.config();
        let mut t = Self {
            tau_h: cfg.tau * cfg.h,
            window: cfg.len() as u64,
            next: 0,
            deque: VecDeque::new(),
        };
        for v in seg.iter() {
            t.push(norm2(v));
        }
        t
    }

    #[inline]
    pub fn push(&mut self, magnitude: f64) {
        let idx = self.next;
        self.next += 1;
        let key = if magnitude > 0.0 {
            magnitude.ln() + self.tau_h * idx as f64
        } else {
            f64::NEG_INFINITY
        };
        while let Some(&(_, k)) = self.deque.back() {
            if k <= key {
                self.deque.pop_back();
            } else {
                break;
            }
        }
        self.deque.push_back((idx, key));
        while let Some(&(i, _)) = self.deque.front() {
            if i + self.window <= idx {
                self.deque.pop_front();
            } else {
                break;
            }
        }
    }

    /// Current `‖ξ_t‖_τ`.
    #[inline]
    pub fn norm(&self) -> f64 {
        match self.deque.front() {
            Some(&(_, key)) if key.is_finite() => {
                (key - self.tau_h * (self.next - 1) as f64).exp()
            }
            _ => 0.0,
        }
    }
}

//! Coefficients `b = b⁰(ξ(0)) + b¹(ξ, μ)` and `σ`, the Dini modulus of `b⁰`,
//! and a sampled validator for the structural hypotheses.
//!
//! The builtin gallery:
//!
//! * `linear`: `b⁰ ≡ 0`, `b¹(ξ, μ) = −θξ(0) + β J_{2τ}(ξ) + L m(μ)`, `σ = I`;
//! * `dini_sqrt`: `b⁰(x) = min(√|x|, 1) e₁`, saturated path term, modulated `σ`;
//! * `dini_log`: `b⁰(x) = (log(e + 1/|x|))^{−2} e₁` (Dini but not Hölder);
//! * `brownian`: `b ≡ 0`, `σ = I`.
//!
//! Here `J_ρ(ξ) = h Σ e^{ρ s_i} ξ(s_i)` and `m(μ)` is the mean endpoint.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::{dist2, norm2, Mat};
use crate::par;
use crate::pathspace::{exp_weighted_integral, PathSegment, PathSpaceConfig};
use crate::rng::{NoiseStream, StreamKey};
use crate::simulate::{LawSummary, ParticleCloud};
use crate::wasserstein;

/// Closed-form family of a Dini modulus.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum DiniFamily {
    /// `φ(s) = c s^β`, `β ∈ (0, 1]`.
    Power { c: f64, beta: f64 },
    /// `φ(s) = c (log(e + 1/s))^{−p}`, `φ(0) = 0`.
    Log { c: f64, p: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DiniModulus {
    pub family: DiniFamily,
}

impl DiniModulus {
    pub fn power(c: f64, beta: f64) -> Result<Self> {
        if !(c > 0.0 && beta > 0.0 && beta <= 1.0) {
            return Err(Error::Config(format!(
                "power modulus needs c > 0 and beta in (0,1], got c={c}, beta={beta}"
            )));
        }
        Ok(Self {
            family: DiniFamily::Power { c, beta },
        })
    }

    pub fn log_type(c: f64, p: f64) -> Result<Self> {
        if !(c > 0.0 && p > 0.0) {
            return Err(Error::Config(format!(
                "log modulus needs c > 0 and p > 0, got c={c}, p={p}"
            )));
        }
        Ok(Self {
            family: DiniFamily::Log { c, p },
        })
    }

    #[inline]
    pub fn eval(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        match self.family {
            DiniFamily::Power { c, beta } => c * s.powf(beta),
            DiniFamily::Log { c, p } => c * log_e_plus_inv(s).powf(-p),
        }
    }

    /// `φ(e^{−u})`, evaluated without forming `1/s` for large `u`.
    fn eval_exp_neg(&self, u: f64) -> f64 {
        match self.family {
            DiniFamily::Power { c, beta } => c * (-beta * u).exp(),
            DiniFamily::Log { c, p } => {
                // log(e + e^u) = max(1,u) + log(1 + e^{−|u−1|})
                let l = u.max(1.0) + (-(u - 1.0).abs()).exp().ln_1p();
                c * l.powf(-p)
            }
        }
    }

    /// Checks `φ(0) = 0`, monotonicity and midpoint concavity on a sampled
    /// grid, and finiteness of the Dini integral.
    pub fn validate(&self) -> Result<()> {
        if self.eval(0.0) != 0.0 {
            return Err(Error::NotDini("phi(0) != 0".into()));
        }
        let grid: Vec<f64> = (0..=400).map(|k| 10f64.powf(-12.0 + k as f64 * 0.04)).collect();
        for w in grid.windows(2) {
            let (a, b) = (w[0], w[1]);
            let (fa, fb) = (self.eval(a), self.eval(b));
            if fb + 1e-15 < fa {
                return Err(Error::NotDini(format!("phi decreases between {a:e} and {b:e}")));
            }
            let fm = self.eval(0.5 * (a + b));
            if fm + 1e-12 * fm.abs().max(1.0) < 0.5 * (fa + fb) {
                return Err(Error::NotDini(format!("phi is not concave on [{a:e}, {b:e}]")));
            }
        }
        self.integral().map(|_| ())
    }

    /// `∫₀¹ φ(s)/s ds`; see [`dini_integral`].
    pub fn integral(&self) -> Result<f64> {
        dini_integral(self)
    }
}

#[inline]
fn log_e_plus_inv(s: f64) -> f64 {
    if s < 1e-200 {
        -s.ln() + (std::f64::consts::E * s).ln_1p()
    } else {
        (std::f64::consts::E + 1.0 / s).ln()
    }
}

/// Numerical value of `∫₀¹ φ(s)/s ds`.
///
/// With `s = e^{−u}` the integral becomes `∫₀^∞ φ(e^{−u}) du`, integrated by
/// adaptive Gauss–Kronrod on dyadic blocks `[2^{k−1}, 2^k]`. Once the block
/// contributions decay geometrically the remaining tail is added analytically;
/// blocks that stop shrinking signal divergence.
pub fn dini_integral(phi: &DiniModulus) -> Result<f64> {
    let f = |u: f64| phi.eval_exp_neg(u);
    let tol = 1e-13;
    let mut total = adaptive_gk15(&f, 0.0, 1.0, tol)?;
    let mut prev: Option<f64> = None;
    let mut lo = 1.0f64;
    for _ in 0..120 {
        let hi = 2.0 * lo;
        // integrate in w = ln u so that slowly decaying tails stay smooth
        let g = |w: f64| {
            let u = w.exp();
            f(u) * u
        };
        let block = adaptive_gk15(&g, lo.ln(), hi.ln(), tol)?;
        total += block;
        lo = hi;
        if let Some(p) = prev {
            if block <= 1e-16 * total {
                return Ok(total);
            }
            let ratio = block / p;
            if ratio < 0.75 {
                let tail = block * ratio / (1.0 - ratio);
                if tail <= 1e-13 * total {
                    return Ok(total + tail);
                }
            }
        }
        prev = Some(block);
        if !total.is_finite() {
            break;
        }
    }
    Err(Error::NotDini(format!(
        "partial integral reached {total:.6} with no sign of convergence"
    )))
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let hl = 0.5 * (b - a);
    let fc = f(c);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let x = hl * XGK[j];
        let s = f(c - x) + f(c + x);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * hl, ((k - g) * hl).abs())
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature.
pub fn adaptive_gk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let mut pieces = vec![(a, b, gk15(f, a, b))];
    for _ in 0..4000 {
        let total: f64 = pieces.iter().map(|p| p.2 .0).sum();
        let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
        if !total.is_finite() {
            return Err(Error::NotDini("integrand is not finite".into()));
        }
        if err <= tol * total.abs().max(1e-300) || err <= 1e-300 {
            return Ok(total);
        }
        let (idx, _) = pieces
            .iter()
            .enumerate()
            .max_by(|x, y| x.1 .2 .1.total_cmp(&y.1 .2 .1))
            .expect("nonempty");
        let (lo, hi, _) = pieces.swap_remove(idx);
        let mid = 0.5 * (lo + hi);
        pieces.push((lo, mid, gk15(f, lo, mid)));
        pieces.push((mid, hi, gk15(f, mid, hi)));
    }
    let total: f64 = pieces.iter().map(|p| p.2 .0).sum();
    let err: f64 = pieces.iter().map(|p| p.2 .1).sum();
    if err <= 1e-9 * total.abs() {
        Ok(total)
    } else {
        Err(Error::NotDini(format!(
            "quadrature did not converge (value {total:.6}, error {err:.2e})"
        )))
    }
}

/// The singular (Dini) part `b⁰` of the drift, acting on the endpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum SingularDrift {
    Zero,
    Constant(Vec<f64>),
    /// `scale · min(√|x|, 1) e₁`.
    SqrtCap { scale: f64 },
    /// `c (log(e + 1/|x|))^{−p} e₁`, zero at the origin.
    LogModulus { c: f64, p: f64 },
}

impl SingularDrift {
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut [f64]) {
        match self {
            SingularDrift::Zero => out.iter_mut().for_each(|v| *v = 0.0),
            SingularDrift::Constant(c) => out.copy_from_slice(c),
            SingularDrift::SqrtCap { scale } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                out[0] = scale * norm2(x).sqrt().min(1.0);
            }
            SingularDrift::LogModulus { c, p } => {
                out.iter_mut().for_each(|v| *v = 0.0);
                let r = norm2(x);
                out[0] = if r > 0.0 { c * log_e_plus_inv(r).powf(-p) } else { 0.0 };
            }
        }
    }

    pub fn eval_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; x.len()];
        self.eval(x, &mut out);
        out
    }

    /// `‖b⁰‖∞`.
    pub fn sup_norm(&self) -> f64 {
        match self {
            SingularDrift::Zero => 0.0,
            SingularDrift::Constant(c) => norm2(c),
            SingularDrift::SqrtCap { scale } => scale.abs(),
            SingularDrift::LogModulus { c, .. } => c.abs(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, SingularDrift::Zero)
    }
}

/// Path-level shaping of the memory term.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Saturation {
    Linear,
    Tanh,
}

/// `b¹(ξ, μ) = −Θ ξ(0) + B ψ(J_ρ(ξ)) + L m(μ)` with `ψ` identity or `tanh`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PathDrift {
    #[serde(skip)]
    pub theta: Mat,
    #[serde(skip)]
    pub beta: Mat,
    pub rate: f64,
    pub saturation: Saturation,
    #[serde(skip)]
    pub law: Mat,
}

impl PathDrift {
    pub fn zero(d: usize, rate: f64) -> Self {
        Self {
            theta: Mat::zeros(d),
            beta: Mat::zeros(d),
            rate,
            saturation: Saturation::Linear,
            law: Mat::zeros(d),
        }
    }

    /// Evaluate from precomputed features: endpoint, `J_ρ`, law mean.
    #[inline]
    pub fn eval_features(&self, endpoint: &[f64], weighted: &[f64], law_mean: &[f64], out: &mut [f64]) {
        let d = endpoint.len();
        if d == 1 {
            let j = match self.saturation {
                Saturation::Linear => weighted[0],
                Saturation::Tanh => weighted[0].tanh(),
            };
            out[0] = -self.theta.get(0, 0) * endpoint[0]
                + self.beta.get(0, 0) * j
                + self.law.get(0, 0) * law_mean[0];
            return;
        }
        let psi: Vec<f64> = match self.saturation {
            Saturation::Linear => weighted.to_vec(),
            Saturation::Tanh => weighted.iter().map(|v| v.tanh()).collect(),
        };
        self.beta.mul_vec(&psi, out);
        let mut tmp = vec![0.0; d];
        self.theta.mul_vec(endpoint, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o -= t;
        }
        self.law.mul_vec_add(law_mean, out);
    }

    pub fn eval(&self, seg: &PathSegment, law: &LawSummary, out: &mut [f64]) {
        let j = exp_weighted_integral(seg, self.rate);
        self.eval_features(seg.endpoint(), &j, &law.mean_endpoint, out);
    }

    /// `b¹(ξ, μ) − b¹(ξ, ν) = L (m(μ) − m(ν))`.
    pub fn law_delta(&self, mean_a: &[f64], mean_b: &[f64], out: &mut [f64]) {
        let diff: Vec<f64> = mean_a.iter().zip(mean_b).map(|(a, b)| a - b).collect();
        self.law.mul_vec(&diff, out);
    }

    pub fn law_dependent(&self) -> bool {
        self.law.as_slice().iter().any(|v| *v != 0.0)
    }

    /// `h Σ e^{(ρ−τ) s_i}`: Lipschitz constant of `J_ρ` w.r.t. `‖·‖_τ`.
    pub fn weighted_lipschitz(&self, cfg: &PathSpaceConfig) -> f64 {
        geometric_sum(cfg, self.rate - cfg.tau)
    }

    /// Lipschitz constant of `ξ ↦ b¹(ξ, μ)` in `‖·‖_τ`.
    pub fn path_lipschitz(&self, cfg: &PathSpaceConfig) -> f64 {
        self.theta.op_norm() + self.beta.op_norm() * self.weighted_lipschitz(cfg)
    }

    /// Constant `C` with `|b¹(ξ,μ) − b¹(ξ⁰,μ)| ≤ C·(1 + ‖ξ‖^α)` for the
    /// natural exponent of the saturation.
    pub fn growth_constant(&self, cfg: &PathSpaceConfig) -> f64 {
        let b = self.beta.op_norm();
        match self.saturation {
            Saturation::Linear => b * (self.weighted_lipschitz(cfg) + geometric_sum(cfg, self.rate)),
            Saturation::Tanh => 2.0 * b * (cfg.d as f64).sqrt(),
        }
    }
}

fn geometric_sum(cfg: &PathSpaceConfig, rate: f64) -> f64 {
    let q = (-rate * cfg.h).exp();
    let n = cfg.len() as f64;
    if (q - 1.0).abs() < 1e-15 {
        cfg.h * n
    } else {
        cfg.h * (1.0 - q.powf(n)) / (1.0 - q)
    }
}

/// Diffusion coefficient `σ(x)`.
#[derive(Debug, Clone, PartialEq)]
pub enum Diffusion {
    Constant(Mat),
    /// `(base + amp·sin x₁) I`.
    Modulated { base: f64, amp: f64 },
}

impl Diffusion {
    #[inline]
    pub fn eval(&self, x: &[f64], out: &mut Mat) {
        match self {
            Diffusion::Constant(m) => out.copy_from(m),
            Diffusion::Modulated { base, amp } => {
                let d = x.len();
                let s = base + amp * x[0].sin();
                if out.dim() != d {
                    *out = Mat::zeros(d);
                }
                let a = out.as_mut_slice();
                a.iter_mut().for_each(|v| *v = 0.0);
                for i in 0..d {
                    a[i * d + i] = s;
                }
            }
        }
    }

    pub fn eval_mat(&self, x: &[f64]) -> Mat {
        let mut m = Mat::zeros(x.len());
        self.eval(x, &mut m);
        m
    }

    pub fn is_constant(&self) -> bool {
        matches!(self, Diffusion::Constant(_))
    }

    /// HS-Lipschitz constant.
    pub fn lipschitz(&self, d: usize) -> f64 {
        match self {
            Diffusion::Constant(_) => 0.0,
            Diffusion::Modulated { amp, .. } => amp.abs() * (d as f64).sqrt(),
        }
    }

    /// `sup_x ‖a(x)‖ + ‖a(x)^{−1}‖`, `a = σσ*`; infinite when `a` can be singular.
    pub fn ellipticity_bound(&self) -> f64 {
        match self {
            Diffusion::Constant(m) => {
                let a = m.mul(&m.transpose());
                match a.inverse() {
                    Some(inv) => a.op_norm() + inv.op_norm(),
                    None => f64::INFINITY,
                }
            }
            Diffusion::Modulated { base, amp } => {
                let lo = base.abs() - amp.abs();
                if lo <= 0.0 {
                    return f64::INFINITY;
                }
                let hi = base.abs() + amp.abs();
                [lo, hi]
                    .iter()
                    .map(|s| s * s + 1.0 / (s * s))
                    .fold(0.0, f64::max)
            }
        }
    }

    /// `sup_x ‖σ(x)^{−1}‖`.
    pub fn inverse_bound(&self) -> f64 {
        match self {
            Diffusion::Constant(m) => m.inverse().map_or(f64::INFINITY, |i| i.op_norm()),
            Diffusion::Modulated { base, amp } => {
                let lo = base.abs() - amp.abs();
                if lo > 0.0 {
                    1.0 / lo
                } else {
                    f64::INFINITY
                }
            }
        }
    }
}

/// Full coefficient model with its declared constants.
#[derive(Debug, Clone)]
pub struct CoefficientSet {
    pub name: String,
    pub path: PathSpaceConfig,
    pub b0: SingularDrift,
    pub b1: PathDrift,
    pub sigma: Diffusion,
    pub k: f64,
    pub k1: f64,
    pub alpha: f64,
    pub phi: DiniModulus,
    pub b0_bound: f64,
}

/// Names accepted by [`CoefficientSet::builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["linear", "dini_sqrt", "dini_log", "brownian"];

impl CoefficientSet {
    #[inline]
    pub fn dim(&self) -> usize {
        self.path.d
    }

    pub fn builtin(name: &str, path: PathSpaceConfig) -> Result<Self> {
        match name {
            "linear" => Ok(Self::linear(path)),
            "dini_sqrt" => Ok(Self::dini_sqrt(path)),
            "dini_log" => Ok(Self::dini_log(path)),
            "brownian" => Ok(Self::brownian(path)),
            other => Err(Error::Config(format!(
                "unknown coefficient set '{other}' (known: {})",
                BUILTIN_NAMES.join(", ")
            ))),
        }
    }

    /// Linear-Gaussian baseline.
    pub fn linear(path: PathSpaceConfig) -> Self {
        let d = path.d;
        let b1 = PathDrift {
            theta: Mat::scaled_identity(d, 2.0),
            beta: Mat::scaled_identity(d, 0.5),
            rate: 2.0 * path.tau,
            saturation: Saturation::Linear,
            law: Mat::scaled_identity(d, 0.5),
        };
        Self::assemble(
            "linear",
            path,
            SingularDrift::Zero,
            b1,
            Diffusion::Constant(Mat::identity(d)),
            1.0,
            DiniModulus::power(1.0, 1.0).expect("valid"),
        )
    }

    /// Dini-but-not-Lipschitz drift `min(√|x|, 1) e₁`.
    pub fn dini_sqrt(path: PathSpaceConfig) -> Self {
        let d = path.d;
        let b1 = PathDrift {
            theta: Mat::scaled_identity(d, 2.0),
            beta: Mat::scaled_identity(d, 0.5),
            rate: 2.0 * path.tau,
            saturation: Saturation::Tanh,
            law: Mat::scaled_identity(d, 0.25),
        };
        Self::assemble(
            "dini_sqrt",
            path,
            SingularDrift::SqrtCap { scale: 1.0 },
            b1,
            Diffusion::Modulated { base: 1.0, amp: 0.25 },
            0.5,
            DiniModulus::power(1.0, 0.5).expect("valid"),
        )
    }

    /// Log-modulus drift (Dini, not Hölder).
    pub fn dini_log(path: PathSpaceConfig) -> Self {
        let d = path.d;
        let b1 = PathDrift {
            theta: Mat::scaled_identity(d, 2.0),
            beta: Mat::scaled_identity(d, 0.5),
            rate: 2.0 * path.tau,
            saturation: Saturation::Tanh,
            law: Mat::scaled_identity(d, 0.25),
        };
        Self::assemble(
            "dini_log",
            path,
            SingularDrift::LogModulus { c: 1.0, p: 2.0 },
            b1,
            Diffusion::Constant(Mat::identity(d)),
            0.0,
            DiniModulus::log_type(1.0, 2.0).expect("valid"),
        )
    }

    /// `b ≡ 0`, `σ = I`.
    pub fn brownian(path: PathSpaceConfig) -> Self {
        let d = path.d;
        Self::assemble(
            "brownian",
            path,
            SingularDrift::Zero,
            PathDrift::zero(d, 2.0 * path.tau),
            Diffusion::Constant(Mat::identity(d)),
            0.0,
            DiniModulus::power(1.0, 1.0).expect("valid"),
        )
    }

    /// Build a set and compute the tightest declared constants for it.
    pub fn assemble(
        name: &str,
        path: PathSpaceConfig,
        b0: SingularDrift,
        b1: PathDrift,
        sigma: Diffusion,
        alpha: f64,
        phi: DiniModulus,
    ) -> Self {
        let mut s = Self {
            name: name.to_string(),
            path,
            b0_bound: b0.sup_norm(),
            b0,
            b1,
            sigma,
            k: 0.0,
            k1: 0.0,
            alpha,
            phi,
        };
        s.declare_constants();
        s
    }

    /// Recompute `K`, `K₁` from the structural pieces.
    pub fn declare_constants(&mut self) {
        let d = self.dim();
        let growth = match self.b1.saturation {
            Saturation::Linear if self.alpha < 1.0 && self.b1.beta.op_norm() > 0.0 => f64::INFINITY,
            _ => self.b1.growth_constant(&self.path),
        };
        self.k = [
            self.sigma.ellipticity_bound(),
            self.sigma.lipschitz(d),
            self.b1.path_lipschitz(&self.path),
            growth,
        ]
        .into_iter()
        .fold(0.0, f64::max);
        self.k1 = self.b1.law.op_norm();
        self.b0_bound = self.b0.sup_norm();
    }

    /// Replace the law-interaction matrix by `k·I` and redeclare constants.
    pub fn with_law_coupling(mut self, k: f64) -> Self {
        self.b1.law = Mat::scaled_identity(self.dim(), k);
        self.declare_constants();
        self
    }

    /// Drop `b¹` entirely (useful for isolating `b⁰`).
    pub fn without_path_drift(mut self) -> Self {
        self.b1 = PathDrift::zero(self.dim(), self.b1.rate);
        self.declare_constants();
        self
    }

    pub fn law_dependent(&self) -> bool {
        self.b1.law_dependent()
    }

    /// `b(ξ, μ̂) = b⁰(ξ(0)) + b¹(ξ, μ̂)` for the empirical law of `law`.
    pub fn drift(&self, seg: &PathSegment, law: &ParticleCloud) -> Result<Vec<f64>> {
        if *seg.config() != self.path {
            return Err(Error::Config(format!(
                "segment grid {:?} does not match coefficient grid {:?}",
                seg.config(),
                self.path
            )));
        }
        if *law.config() != self.path {
            return Err(Error::Config("law uses a different path-space grid".into()));
        }
        let mut out = vec![0.0; self.dim()];
        self.drift_with(seg, &law.summary(), &mut out);
        Ok(out)
    }

    pub fn drift_with(&self, seg: &PathSegment, law: &LawSummary, out: &mut [f64]) {
        let mut tmp = vec![0.0; self.dim()];
        self.b0.eval(seg.endpoint(), out);
        self.b1.eval(seg, law, &mut tmp);
        for (o, t) in out.iter_mut().zip(&tmp) {
            *o += t;
        }
    }

    pub fn b1_eval(&self, seg: &PathSegment, law: &LawSummary) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        self.b1.eval(seg, law, &mut out);
        out
    }

    /// Sampled check of the structural hypotheses.
    pub fn validate(&self, sample_budget: usize, rng_seed: u64) -> Result<ValidationReport> {
        validate_h(self, sample_budget, rng_seed)
    }
}

/// Free-function form of [`CoefficientSet::drift`].
pub fn eval_drift(coeffs: &CoefficientSet, seg: &PathSegment, law: &ParticleCloud) -> Result<Vec<f64>> {
    coeffs.drift(seg, law)
}

/// Worst sampled ratio of one hypothesis.
#[derive(Debug, Clone, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub worst_ratio: f64,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub set: String,
    pub sample_budget: usize,
    pub seed: u64,
    pub checks: Vec<HypothesisCheck>,
}

impl ValidationReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

const RATIO_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
struct Worst {
    ratio: f64,
    what: &'static str,
    input: String,
}

impl Worst {
    fn new() -> Self {
        Self {
            ratio: 0.0,
            what: "",
            input: String::new(),
        }
    }

    fn offer(&mut self, ratio: f64, what: &'static str, input: impl FnOnce() -> String) {
        if ratio > self.ratio || (ratio.is_infinite() && !self.ratio.is_infinite()) {
            self.ratio = ratio;
            self.what = what;
            self.input = input();
        }
    }

    fn merge(&mut self, other: Worst) {
        if other.ratio > self.ratio {
            *self = other;
        }
    }
}

fn ratio(observed: f64, allowed: f64) -> f64 {
    if observed <= 0.0 {
        0.0
    } else if allowed <= 0.0 {
        f64::INFINITY
    } else {
        observed / allowed
    }
}

fn finite_or_err(v: &[f64], what: &str, input: impl FnOnce() -> String) -> Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidCoefficient {
            what: what.to_string(),
            input: input(),
        })
    }
}

/// Random piecewise-linear segment with knots every `spacing` time units and
/// amplitudes growing like `e^{−τ s/2}` into the past.
pub fn random_segment(cfg: &PathSpaceConfig, rng: &mut NoiseStream, scale: f64, spacing: f64) -> PathSegment {
    let n_knots = (cfg.t_mem / spacing).ceil() as usize + 1;
    let knots: Vec<Vec<f64>> = (0..n_knots)
        .map(|k| {
            let s = -(k as f64) * spacing;
            let env = (-0.5 * cfg.tau * s).exp();
            (0..cfg.d).map(|_| scale * env * rng.normal()).collect()
        })
        .collect();
    PathSegment::from_fn(*cfg, |s| {
        let pos = -s / spacing;
        let k = (pos.floor() as usize).min(n_knots - 2);
        let w = pos - k as f64;
        knots[k]
            .iter()
            .zip(&knots[k + 1])
            .map(|(a, b)| (1.0 - w) * a + w * b)
            .collect()
    })
    .expect("finite knots")
}

/// `Δ(s) = c e^{−τ s}` on the past, `−c` at `s = 0`: extremal for the
/// endpoint/memory Lipschitz split.
fn extremal_perturbation(cfg: &PathSpaceConfig, c: f64, dir: &[f64]) -> PathSegment {
    let last = cfg.steps();
    let mut data = Vec::with_capacity(cfg.len() * cfg.d);
    for i in 0..cfg.len() {
        let s = cfg.grid_time(i);
        let a = if i == last { -c } else { c * (-cfg.tau * s).exp() };
        data.extend(dir.iter().map(|u| a * u));
    }
    PathSegment::from_flat(*cfg, data).expect("finite")
}

fn random_unit(d: usize, rng: &mut NoiseStream) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
        let n = norm2(&v);
        if n > 1e-8 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

fn random_point(d: usize, rng: &mut NoiseStream, scale: f64) -> Vec<f64> {
    (0..d).map(|_| scale * rng.normal()).collect()
}

fn random_cloud(cfg: &PathSpaceConfig, rng: &mut NoiseStream, n: usize, scale: f64) -> ParticleCloud {
    let parts = (0..n).map(|_| random_segment(cfg, rng, scale, 1.0)).collect();
    ParticleCloud::uniform(parts).expect("nonempty")
}

struct SampleOutcome {
    h1: Worst,
    h2: Worst,
    h3: Worst,
}

fn validate_sample(c: &CoefficientSet, i: usize, seed: u64) -> Result<SampleOutcome> {
    let d = c.dim();
    let cfg = c.path;
    let mut rng = NoiseStream::new(StreamKey::new(seed, i as u64, 0));
    let mut h1 = Worst::new();
    let mut h2 = Worst::new();
    let mut h3 = Worst::new();

    // (H1)
    let x = random_point(d, &mut rng, if i % 4 == 0 { 20.0 } else { 3.0 });
    let sig = c.sigma.eval_mat(&x);
    finite_or_err(sig.as_slice(), "sigma", || format!("{x:?}"))?;
    let a = sig.mul(&sig.transpose());
    match a.inverse() {
        Some(inv) if inv.is_finite() => {
            let obs = a.op_norm() + inv.op_norm();
            h1.offer(ratio(obs, c.k), "||a|| + ||a^-1|| <= K", || format!("x={x:?}"));
        }
        _ => h1.offer(f64::INFINITY, "a not invertible", || format!("x={x:?}")),
    }

    // (H3)
    let base = match i % 3 {
        0 => vec![0.0; d],
        1 => random_point(d, &mut rng, 1e-3),
        _ => random_point(d, &mut rng, 3.0),
    };
    let r = 10f64.powf(-8.0 + 9.0 * rng.uniform());
    let u = random_unit(d, &mut rng);
    let y: Vec<f64> = base.iter().zip(&u).map(|(b, e)| b + r * e).collect();
    let bx = c.b0.eval_vec(&base);
    let by = c.b0.eval_vec(&y);
    finite_or_err(&bx, "b0", || format!("{base:?}"))?;
    finite_or_err(&by, "b0", || format!("{y:?}"))?;
    h3.offer(ratio(norm2(&bx), c.b0_bound), "|b0| <= bound", || format!("x={base:?}"));
    let dist = dist2(&base, &y);
    h3.offer(ratio(dist2(&bx, &by), c.phi.eval(dist)), "|b0(x)-b0(y)| <= phi(|x-y|)", || {
        format!("x={base:?}, y={y:?}")
    });
    let sx = c.sigma.eval_mat(&base);
    let sy = c.sigma.eval_mat(&y);
    h3.offer(
        ratio(sx.sub(&sy).hs_norm(), c.k * dist),
        "||sigma(x)-sigma(y)||_HS <= K|x-y|",
        || format!("x={base:?}, y={y:?}"),
    );

    // (H2), first line
    let scale = if i % 5 == 0 { 5.0 } else { 1.0 };
    let xi = if i % 2 == 0 {
        random_segment(&cfg, &mut rng, scale, 0.5)
    } else {
        PathSegment::zeros(cfg)
    };
    let (eta, mu, nu) = match i % 4 {
        0 | 1 => {
            // pure path perturbation, shared law
            let cmag = 10f64.powf(-4.0 + 4.0 * rng.uniform());
            let dir = random_unit(d, &mut rng);
            let pert = if i % 4 == 0 {
                extremal_perturbation(&cfg, cmag, &dir)
            } else {
                random_segment(&cfg, &mut rng, cmag, 0.25)
            };
            let eta = xi.lincomb(1.0, &pert, 1.0)?;
            let mu = random_cloud(&cfg, &mut rng, 1 + i % 8, 1.0);
            (eta, mu.clone(), mu)
        }
        2 => {
            let mu = random_cloud(&cfg, &mut rng, 1 + i % 8, 1.0);
            let nu = random_cloud(&cfg, &mut rng, 1 + (i / 4) % 8, 1.5);
            (xi.clone(), mu, nu)
        }
        _ => {
            let eta = random_segment(&cfg, &mut rng, scale, 0.5);
            let n = if i % 16 == 3 { 32 } else { 1 + i % 8 };
            let mu = random_cloud(&cfg, &mut rng, n, 1.0);
            let nu = random_cloud(&cfg, &mut rng, n, 1.0);
            (eta, mu, nu)
        }
    };
    let (ms, ns) = (mu.summary(), nu.summary());
    let b_xi = c.b1_eval(&xi, &ms);
    let b_eta = c.b1_eval(&eta, &ns);
    finite_or_err(&b_xi, "b1", || "sampled segment/law".into())?;
    finite_or_err(&b_eta, "b1", || "sampled segment/law".into())?;
    let w2 = if c.k1 > 0.0 || i % 4 == 2 {
        wasserstein::wk_full(&mu, &nu, 2.0)?
    } else {
        0.0
    };
    let allowed = c.k * xi.distance(&eta) + c.k1 * w2;
    h2.offer(
        ratio(dist2(&b_xi, &b_eta), allowed),
        "|b1(xi,mu)-b1(eta,nu)| <= K||xi-eta|| + K1 W2",
        || format!("||xi-eta||={:.3e}, W2={w2:.3e}", xi.distance(&eta)),
    );

    // (H2), second line
    let scale2 = 10f64.powf(-2.0 + 3.0 * rng.uniform());
    let xi2 = random_segment(&cfg, &mut rng, scale2, 0.5);
    let flat = xi2.flat();
    let b_a = c.b1_eval(&xi2, &ms);
    let b_b = c.b1_eval(&flat, &ms);
    let nrm = xi2.weighted_norm();
    let allowed2 = c.k * (1.0 + nrm.powf(c.alpha)) + c.k1 * ms.second_moment;
    h2.offer(
        ratio(dist2(&b_a, &b_b), allowed2),
        "|b1(xi,mu)-b1(xi0,mu)| <= K(1+||xi||^alpha) + K1||mu||_2",
        || format!("||xi||={nrm:.3e}"),
    );

    Ok(SampleOutcome { h1, h2, h3 })
}

/// Draw `sample_budget` random inputs and evaluate every inequality of the
/// hypotheses; ratios are observed/allowed and pass at `≤ 1 + 1e−9`.
pub fn validate_h(coeffs: &CoefficientSet, sample_budget: usize, rng_seed: u64) -> Result<ValidationReport> {
    if sample_budget == 0 {
        return Err(Error::Precondition("sample budget must be >= 1".into()));
    }
    let outcomes = par::try_map_indexed(sample_budget, |i| validate_sample(coeffs, i, rng_seed))?;
    let mut h1 = Worst::new();
    let mut h2 = Worst::new();
    let mut h3 = Worst::new();
    for o in outcomes {
        h1.merge(o.h1);
        h2.merge(o.h2);
        h3.merge(o.h3);
    }
    let mk = |name: &str, w: Worst| HypothesisCheck {
        name: name.to_string(),
        worst_ratio: w.ratio,
        pass: w.ratio <= 1.0 + RATIO_SLACK,
        detail: if w.what.is_empty() {
            "no violation observed".into()
        } else {
            format!("{} [{}]", w.what, w.input)
        },
    };
    Ok(ValidationReport {
        set: coeffs.name.clone(),
        sample_budget,
        seed: rng_seed,
        checks: vec![mk("H1", h1), mk("H2", h2), mk("H3", h3)],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> PathSpaceConfig {
        PathSpaceConfig::new(1, 1.0, 0.01, 10.0).unwrap()
    }

    #[test]
    fn dini_integrals_closed_forms() {
        let sqrt = DiniModulus::power(1.0, 0.5).unwrap();
        assert!((dini_integral(&sqrt).unwrap() - 2.0).abs() < 2e-6 * 2.0);
        let lin = DiniModulus::power(1.0, 1.0).unwrap();
        assert!((dini_integral(&lin).unwrap() - 1.0).abs() < 1e-6);
        let p3 = DiniModulus::power(2.0, 0.25).unwrap();
        assert!((dini_integral(&p3).unwrap() - 8.0).abs() < 8e-6);
    }

    #[test]
    fn dini_integral_log_family() {
        // Reference value of ∫₀^∞ (log(e + e^u))^{−2} du from 30-digit quadrature.
        let phi = DiniModulus::log_type(1.0, 2.0).unwrap();
        let v = dini_integral(&phi).unwrap();
        assert!((v - 1.189_883_970_344_35).abs() < 1e-9, "got {v}");
    }

    #[test]
    fn non_dini_modulus_is_detected() {
        let phi = DiniModulus::log_type(1.0, 1.0).unwrap();
        assert!(matches!(dini_integral(&phi), Err(Error::NotDini(_))));
        assert!(matches!(phi.validate(), Err(Error::NotDini(_))));
    }

    #[test]
    fn builtin_moduli_are_valid() {
        for s in BUILTIN_NAMES {
            CoefficientSet::builtin(s, path()).unwrap().phi.validate().unwrap();
        }
    }

    #[test]
    fn sqrt_drift_closed_form() {
        let c = CoefficientSet::dini_sqrt(path());
        assert_eq!(c.b0.eval_vec(&[0.25]), vec![0.5]);
        assert_eq!(c.b0.eval_vec(&[0.0]), vec![0.0]);
        assert_eq!(c.b0.eval_vec(&[-9.0]), vec![1.0]);
        let c2 = CoefficientSet::dini_sqrt(PathSpaceConfig::new(2, 1.0, 0.1, 1.0).unwrap());
        assert_eq!(c2.b0.eval_vec(&[0.0, 0.25]), vec![0.5, 0.0]);
    }

    #[test]
    fn eval_drift_examples() {
        let p = path();
        let zero = PathSegment::zeros(p);
        let cloud = ParticleCloud::point_mass(zero.clone());
        let sq = CoefficientSet::dini_sqrt(p);
        assert_eq!(sq.drift(&zero, &cloud).unwrap(), vec![0.0]);

        // tanh memory + mean endpoint term, zero inputs
        let b1 = PathDrift {
            theta: Mat::zeros(1),
            beta: Mat::identity(1),
            rate: 2.0,
            saturation: Saturation::Tanh,
            law: Mat::scaled_identity(1, 0.7),
        };
        let c = CoefficientSet::assemble(
            "custom",
            p,
            SingularDrift::Zero,
            b1,
            Diffusion::Constant(Mat::identity(1)),
            0.0,
            DiniModulus::power(1.0, 1.0).unwrap(),
        );
        assert_eq!(c.drift(&zero, &cloud).unwrap(), vec![0.0]);

        let bare = CoefficientSet::dini_sqrt(p).without_path_drift();
        let x = PathSegment::constant(p, &[0.25]).unwrap();
        let v = bare.drift(&x, &ParticleCloud::point_mass(zero)).unwrap();
        assert!((v[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn drift_rejects_mismatched_grid() {
        let c = CoefficientSet::linear(path());
        let other = PathSpaceConfig::new(2, 1.0, 0.01, 10.0).unwrap();
        let s = PathSegment::zeros(other);
        assert!(matches!(
            c.drift(&s, &ParticleCloud::point_mass(s.clone())),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn builtins_pass_their_own_validation() {
        let p = PathSpaceConfig::new(1, 1.0, 0.05, 5.0).unwrap();
        for s in BUILTIN_NAMES {
            let c = CoefficientSet::builtin(s, p).unwrap();
            let r = c.validate(256, 11).unwrap();
            assert!(r.pass(), "{s}: {r:?}");
        }
    }

    #[test]
    fn singular_diffusion_fails_h1() {
        let p = PathSpaceConfig::new(1, 1.0, 0.05, 5.0).unwrap();
        let mut c = CoefficientSet::brownian(p);
        c.sigma = Diffusion::Constant(Mat::zeros(1));
        let r = c.validate(16, 1).unwrap();
        let h1 = r.check("H1").unwrap();
        assert!(!h1.pass);
        assert!(h1.detail.contains("a not invertible"));
    }

    #[test]
    fn halving_k_doubles_h2_ratio() {
        let p = PathSpaceConfig::new(1, 1.0, 0.05, 5.0).unwrap();
        let mut c = CoefficientSet::linear(p);
        let full = c.validate(400, 5).unwrap().check("H2").unwrap().worst_ratio;
        c.k *= 0.5;
        let r = c.validate(400, 5).unwrap();
        let h2 = r.check("H2").unwrap();
        assert!(!h2.pass);
        assert!((h2.worst_ratio - 2.0).abs() < 0.05, "ratio {}", h2.worst_ratio);
        assert!(full > 0.97 && full <= 1.0 + 1e-9);
    }

    #[test]
    fn validation_rejects_zero_budget() {
        let c = CoefficientSet::linear(path());
        assert!(c.validate(0, 1).is_err());
    }
}

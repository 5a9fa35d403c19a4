//! Drift-corrected couplings, Girsanov weights and the law-shift coupling.

use serde::Serialize;

use super::{finite_state, Dynamics, LawPath, McKeanRun, PathState, TimeGrid};
use crate::error::{Error, Result};
use crate::linalg::{dot, norm2, Mat};
use crate::par;
use crate::pathspace::{NormTracker, PathSegment};
use crate::rng::{NoiseStream, StreamKey};
use crate::wasserstein;

/// Coupling strength and the `A(t) = c_A ∫ ‖Ŷ_s‖_τ^α ds` accumulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CouplingParams {
    pub kappa: f64,
    pub c_a: f64,
    pub alpha: f64,
}

impl CouplingParams {
    pub fn new(kappa: f64) -> Self {
        Self {
            kappa,
            c_a: 1.0,
            alpha: 0.0,
        }
    }
}

/// One coupled trajectory, sampled at save times.
#[derive(Debug, Clone, Serialize)]
pub struct CouplingRun {
    pub kappa: f64,
    pub times: Vec<f64>,
    /// `‖X̂_t − Ŷ_t‖_τ`.
    pub z_norm: Vec<f64>,
    pub gamma: Vec<Vec<f64>>,
    /// `½∫₀ᵗ|γ|²`.
    pub half_int_gamma_sq: Vec<f64>,
    pub log_r: Vec<f64>,
    pub a: Vec<f64>,
    pub x_end: Vec<Vec<f64>>,
    pub y_end: Vec<Vec<f64>>,
    /// Original-coordinate endpoint of `Ŷ`.
    pub y_original: Vec<Vec<f64>>,
    pub exits: u64,
    /// Set when `|log R|` exceeded 700 under `P`.
    pub degenerate: bool,
}

impl CouplingRun {
    fn with_capacity(kappa: f64, n: usize) -> Self {
        Self {
            kappa,
            times: Vec::with_capacity(n),
            z_norm: Vec::with_capacity(n),
            gamma: Vec::with_capacity(n),
            half_int_gamma_sq: Vec::with_capacity(n),
            log_r: Vec::with_capacity(n),
            a: Vec::with_capacity(n),
            x_end: Vec::with_capacity(n),
            y_end: Vec::with_capacity(n),
            y_original: Vec::with_capacity(n),
            exits: 0,
            degenerate: false,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum Measure {
    /// Fresh Brownian motion of `Q`: correction on `X̂`.
    Q,
    /// Reference measure: correction on `Ŷ`, folded into the weight.
    P,
}

struct Pair {
    x: PathState,
    y: PathState,
    z: NormTracker,
    bx: Vec<f64>,
    by: Vec<f64>,
    sx: Mat,
    sy: Mat,
    dw: Vec<f64>,
    z0: Vec<f64>,
    gamma: Vec<f64>,
    nx: Vec<f64>,
    ny: Vec<f64>,
}

impl Pair {
    fn new<D: Dynamics + ?Sized>(dynamics: &D, xi: &PathSegment, eta: &PathSegment, track_y: bool) -> Result<Self> {
        let d = dynamics.path().d;
        let x = dynamics.init_state(xi, false)?;
        let y = dynamics.init_state(eta, track_y)?;
        let diff = x.segment().sub(y.segment())?;
        Ok(Self {
            z: NormTracker::new(&diff),
            x,
            y,
            bx: vec![0.0; d],
            by: vec![0.0; d],
            sx: Mat::zeros(d),
            sy: Mat::zeros(d),
            dw: vec![0.0; d],
            z0: vec![0.0; d],
            gamma: vec![0.0; d],
            nx: vec![0.0; d],
            ny: vec![0.0; d],
        })
    }

    /// `γ = κ σ̂(X̂)^{−1}(X̂ − Ŷ)` at the current endpoints.
    fn gamma<D: Dynamics + ?Sized>(&mut self, dynamics: &D, kappa: f64) -> Result<()> {
        for ((z, a), b) in self.z0.iter_mut().zip(self.x.endpoint()).zip(self.y.endpoint()) {
            *z = a - b;
        }
        dynamics.sigma(&self.x, &mut self.sx);
        if kappa == 0.0 {
            self.gamma.iter_mut().for_each(|g| *g = 0.0);
            return Ok(());
        }
        if self.sx.dim() == 1 {
            let s = self.sx.get(0, 0);
            if s == 0.0 || !s.is_finite() {
                return Err(Error::SingularDiffusion {
                    point: self.x.endpoint().to_vec(),
                });
            }
            self.gamma[0] = kappa * self.z0[0] / s;
            return Ok(());
        }
        let z = self.z0.clone();
        self.sx
            .solve(&z, &mut self.gamma)
            .ok_or_else(|| Error::SingularDiffusion {
                point: self.x.endpoint().to_vec(),
            })?;
        self.gamma.iter_mut().for_each(|g| *g *= kappa);
        Ok(())
    }
}

fn record(run: &mut CouplingRun, t: f64, pair: &Pair, half: f64, log_r: f64, a: f64) {
    run.times.push(t);
    run.z_norm.push(pair.z.norm());
    run.gamma.push(pair.gamma.clone());
    run.half_int_gamma_sq.push(half);
    run.log_r.push(log_r);
    run.a.push(a);
    run.x_end.push(pair.x.endpoint().to_vec());
    run.y_end.push(pair.y.endpoint().to_vec());
    run.y_original.push(pair.y.original_endpoint().to_vec());
}

type StepHook<'a> = dyn FnMut(&PathState, usize, bool) -> Result<()> + 'a;

#[allow(clippy::too_many_arguments)]
fn simulate_coupled<D: Dynamics + ?Sized>(
    dynamics: &D,
    xi: &PathSegment,
    eta: &PathSegment,
    law: &LawPath,
    params: &CouplingParams,
    grid: &TimeGrid,
    key: StreamKey,
    measure: Measure,
    mut hook: Option<&mut StepHook<'_>>,
) -> Result<CouplingRun> {
    let kappa = params.kappa;
    let track_y = params.alpha != 0.0;
    let mut pair = Pair::new(dynamics, xi, eta, track_y)?;
    let mut rng = NoiseStream::new(key);
    let sqrt_h = grid.h.sqrt();
    let h = grid.h;
    let unit = key.replica as usize;
    let mut run = CouplingRun::with_capacity(kappa, grid.n_saves());
    let (mut half, mut log_r, mut a) = (0.0f64, 0.0f64, 0.0f64);

    pair.gamma(dynamics, kappa)?;
    record(&mut run, 0.0, &pair, 0.0, 0.0, 0.0);
    for n in 0..grid.steps {
        let lw = law.at(n);
        let step = n + 1;
        if let Some(f) = hook.as_mut() {
            f(&pair.x, n, grid.save_index(n).is_some())?;
        }
        // left-endpoint quantities
        let g2 = dot(&pair.gamma, &pair.gamma);
        let y_norm_pow = if params.alpha == 0.0 {
            1.0
        } else {
            pair.y.norm().powf(params.alpha)
        };
        rng.increments(sqrt_h, &mut pair.dw);
        let g_dw = dot(&pair.gamma, &pair.dw);
        half += 0.5 * g2 * h;
        a += params.c_a * y_norm_pow * h;
        match measure {
            Measure::Q => log_r += -g_dw + 0.5 * g2 * h,
            Measure::P => log_r += -g_dw - 0.5 * g2 * h,
        }

        dynamics.drift(&pair.x, lw, &mut pair.bx);
        dynamics.drift(&pair.y, lw, &mut pair.by);
        dynamics.sigma(&pair.y, &mut pair.sy);
        pair.nx.copy_from_slice(pair.x.endpoint());
        pair.ny.copy_from_slice(pair.y.endpoint());
        match measure {
            Measure::Q => {
                for i in 0..pair.nx.len() {
                    pair.nx[i] += (pair.bx[i] - kappa * pair.z0[i]) * h;
                    pair.ny[i] += pair.by[i] * h;
                }
                pair.sx.mul_vec_add(&pair.dw, &mut pair.nx);
                pair.sy.mul_vec_add(&pair.dw, &mut pair.ny);
            }
            Measure::P => {
                for i in 0..pair.nx.len() {
                    pair.nx[i] += pair.bx[i] * h;
                    pair.ny[i] += pair.by[i] * h;
                }
                pair.sx.mul_vec_add(&pair.dw, &mut pair.nx);
                // σ̂(Ŷ)(dW + γ h) carries the correction κσ̂(Ŷ)σ̂(X̂)^{−1}Z
                let shifted: Vec<f64> = pair.dw.iter().zip(&pair.gamma).map(|(w, g)| w + g * h).collect();
                pair.sy.mul_vec_add(&shifted, &mut pair.ny);
            }
        }
        if !finite_state(&pair.nx) || !finite_state(&pair.ny) || !log_r.is_finite() {
            return Err(Error::BlowUp { step, unit });
        }
        dynamics
            .push(&mut pair.x, &pair.nx)
            .map_err(|_| Error::BlowUp { step, unit })?;
        dynamics
            .push(&mut pair.y, &pair.ny)
            .map_err(|_| Error::BlowUp { step, unit })?;
        let zn: f64 = norm2(
            &pair
                .x
                .endpoint()
                .iter()
                .zip(pair.y.endpoint())
                .map(|(p, q)| p - q)
                .collect::<Vec<_>>(),
        );
        pair.z.push(zn);
        pair.gamma(dynamics, kappa)?;
        if measure == Measure::P && log_r.abs() > 700.0 {
            run.degenerate = true;
        }
        if grid.save_index(step).is_some() {
            record(&mut run, step as f64 * h, &pair, half, log_r, a);
        }
    }
    if let Some(f) = hook.as_mut() {
        f(&pair.x, grid.steps, grid.save_index(grid.steps).is_some())?;
    }
    run.exits = pair.x.exits + pair.y.exits;
    Ok(run)
}

/// Coupled pair simulated directly under `Q`: `X̂` from `xi` with drift
/// `b̂(X̂) − κ(X̂(t) − Ŷ(t))`, `Ŷ` from `eta` with drift `b̂(Ŷ)`, both driven by
/// the same increments. `log_r` is `log R` expressed through the `Q`-noise.
pub fn simulate_coupled_q<D: Dynamics + ?Sized>(
    dynamics: &D,
    xi: &PathSegment,
    eta: &PathSegment,
    law: &LawPath,
    params: &CouplingParams,
    grid: &TimeGrid,
    key: StreamKey,
) -> Result<CouplingRun> {
    let tau = dynamics.path().tau;
    if !(params.kappa > tau) {
        return Err(Error::Precondition(format!(
            "coupling strength kappa = {} must exceed tau = {tau}",
            params.kappa
        )));
    }
    simulate_coupled(dynamics, xi, eta, law, params, grid, key, Measure::Q, None)
}

/// Same coupling under the reference measure `P`: `X̂` uncorrected, `Ŷ`
/// corrected by `κσ̂(Ŷ)σ̂(X̂)^{−1}(X̂ − Ŷ)`, and
/// `log R = −∫⟨γ, dW⟩ − ½∫|γ|²`. Any `κ ≥ 0` is accepted.
pub fn simulate_coupled_p<D: Dynamics + ?Sized>(
    dynamics: &D,
    xi: &PathSegment,
    eta: &PathSegment,
    law: &LawPath,
    params: &CouplingParams,
    grid: &TimeGrid,
    key: StreamKey,
) -> Result<CouplingRun> {
    if !(params.kappa >= 0.0) {
        return Err(Error::Precondition("kappa must be nonnegative".into()));
    }
    simulate_coupled(dynamics, xi, eta, law, params, grid, key, Measure::P, None)
}

/// `n` replicas of [`simulate_coupled_q`]; replica `r` uses stream `(seed, r, 0)`.
#[allow(clippy::too_many_arguments)]
pub fn coupled_q_replicas<D: Dynamics + ?Sized>(
    dynamics: &D,
    xi: &PathSegment,
    eta: &PathSegment,
    law: &LawPath,
    params: &CouplingParams,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
) -> Vec<Result<CouplingRun>> {
    par::map_indexed(n, |r| {
        simulate_coupled_q(dynamics, xi, eta, law, params, grid, StreamKey::new(seed, r as u64, 0))
    })
}

/// Two-layer coupling for distribution-dependent equations.
#[derive(Debug, Clone, Serialize)]
pub struct DistCouplingRun {
    pub times: Vec<f64>,
    /// `bar ζ` at save times.
    pub bar_zeta: Vec<Vec<f64>>,
    /// `½∫|bar ζ|²`.
    pub bar_entropy: Vec<f64>,
    /// The κ-coupling; its `half_int_gamma_sq` is `½∫|tilde ζ|²`.
    pub tilde: CouplingRun,
    /// Empirical `W₂(μ_t, ν_t)` at save times.
    pub w2: Vec<f64>,
    /// `c₁K₁` with `c₁ = sup ‖σ^{−1}‖`.
    pub bound_constant: f64,
    /// Largest `|bar ζ_s| / (c₁K₁ W₂(μ_s, ν_s))` over save times.
    pub worst_bound_ratio: f64,
}

/// Law-shift coupling: `X̂` and `Ŷ` are simulated under the measure where
/// both see the frozen law trajectory `ν_s`, `X̂` carrying the κ-correction.
/// Along `X̂` the law-shift drift `bar ζ = σ^{−1}(X)[b¹(X, μ_s) − b¹(X, ν_s)]`
/// is integrated separately from `tilde ζ = κσ̂^{−1}(X̂)(X̂ − Ŷ)`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_law_shift<D: Dynamics + ?Sized>(
    dynamics: &D,
    mu: &McKeanRun,
    nu: &McKeanRun,
    xi: &PathSegment,
    eta: &PathSegment,
    params: &CouplingParams,
    grid: &TimeGrid,
    key: StreamKey,
    c1: f64,
    k1: f64,
) -> Result<DistCouplingRun> {
    let n_saves = grid.n_saves();
    if mu.laws.len() < grid.steps || nu.laws.len() < grid.steps {
        return Err(Error::Precondition("law trajectories shorter than the horizon".into()));
    }
    if mu.clouds.len() < n_saves || nu.clouds.len() < n_saves {
        return Err(Error::Precondition("cloud trajectories shorter than the save grid".into()));
    }
    let tau = dynamics.path().tau;
    if !(params.kappa > tau) {
        return Err(Error::Precondition(format!(
            "coupling strength kappa = {} must exceed tau = {tau}",
            params.kappa
        )));
    }
    let law_nu = LawPath::PerStep(nu.laws.clone());
    let d = dynamics.path().d;
    let mut delta = vec![0.0; d];
    let mut so = Mat::zeros(d);
    let mut zeta = vec![0.0; d];
    let mut bar_half = 0.0;
    let mut bar_zeta = Vec::with_capacity(n_saves);
    let mut bar_entropy = Vec::with_capacity(n_saves);
    let mut hook = |x: &PathState, step: usize, save: bool| -> Result<()> {
        let lw = step.min(mu.laws.len() - 1).min(nu.laws.len() - 1);
        dynamics.law_drift_delta(x, &mu.laws[lw], &nu.laws[lw], &mut delta);
        if delta.iter().all(|v| *v == 0.0) {
            zeta.iter_mut().for_each(|v| *v = 0.0);
        } else {
            dynamics.sigma_original(x, &mut so);
            so.solve(&delta, &mut zeta).ok_or_else(|| Error::SingularDiffusion {
                point: x.original_endpoint().to_vec(),
            })?;
        }
        if save {
            bar_zeta.push(zeta.clone());
            bar_entropy.push(bar_half);
        }
        if step < grid.steps {
            bar_half += 0.5 * dot(&zeta, &zeta) * grid.h;
        }
        Ok(())
    };
    let tilde = simulate_coupled(dynamics, xi, eta, &law_nu, params, grid, key, Measure::Q, Some(&mut hook))?;
    let w2: Vec<f64> = (0..n_saves)
        .map(|k| wasserstein::wk_full(&mu.clouds[k], &nu.clouds[k], 2.0))
        .collect::<Result<_>>()?;
    let c = c1 * k1;
    let mut worst = 0.0f64;
    for (z, w) in bar_zeta.iter().zip(&w2) {
        let zn = norm2(z);
        let r = if zn == 0.0 {
            0.0
        } else if c * w > 0.0 {
            zn / (c * w)
        } else {
            f64::INFINITY
        };
        worst = worst.max(r);
    }
    Ok(DistCouplingRun {
        times: grid.save_times(),
        bar_zeta,
        bar_entropy,
        tilde,
        w2,
        bound_constant: c,
        worst_bound_ratio: worst,
    })
}

/// Estimate of `E[e^{βA(t)}]` at one save time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentEstimate {
    pub t: f64,
    pub value: f64,
    pub stderr: f64,
    pub ess: f64,
    /// False when the effective sample size is below 10.
    pub reliable: bool,
}

/// Monte Carlo `E[e^{βA(t)}]` at every save time of `runs`.
pub fn exp_moment_a(runs: &[CouplingRun], beta: f64) -> Result<Vec<MomentEstimate>> {
    let first = runs
        .first()
        .ok_or_else(|| Error::Precondition("no runs given".into()))?;
    let n_t = first.times.len();
    if runs.iter().any(|r| r.times.len() != n_t) {
        return Err(Error::Precondition("runs use different save grids".into()));
    }
    let n = runs.len() as f64;
    let mut out = Vec::with_capacity(n_t);
    for k in 0..n_t {
        if beta == 0.0 {
            out.push(MomentEstimate {
                t: first.times[k],
                value: 1.0,
                stderr: 0.0,
                ess: n,
                reliable: n >= 10.0,
            });
            continue;
        }
        let xs: Vec<f64> = runs.iter().map(|r| beta * r.a[k]).collect();
        let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let w: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
        let s1: f64 = w.iter().sum();
        let s2: f64 = w.iter().map(|v| v * v).sum();
        let mean_w = s1 / n;
        let var_w = if n > 1.0 {
            (s2 - n * mean_w * mean_w).max(0.0) / (n - 1.0)
        } else {
            0.0
        };
        let scale = m.exp();
        let ess = s1 * s1 / s2;
        out.push(MomentEstimate {
            t: first.times[k],
            value: mean_w * scale,
            stderr: (var_w / n).sqrt() * scale,
            ess,
            reliable: ess >= 10.0,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::CoefficientSet;
    use crate::pathspace::PathSpaceConfig;
    use crate::simulate::{simulate_mckean, LawSummary, ParticleCloud};
    use crate::stats::Estimate;

    fn path(h: f64) -> PathSpaceConfig {
        PathSpaceConfig::new(1, 1.0, h, 1.0).unwrap()
    }

    fn zero_law() -> LawPath {
        LawPath::Static(LawSummary::zero(1))
    }

    fn seg(p: PathSpaceConfig, v: f64) -> PathSegment {
        PathSegment::constant(p, &[v]).unwrap()
    }

    #[test]
    fn identical_starts_stay_together() {
        let p = path(0.01);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 2.0, 0.5).unwrap();
        let xi = seg(p, 0.7);
        let run = simulate_coupled_q(&c, &xi, &xi, &zero_law(), &CouplingParams::new(4.0), &grid, StreamKey::new(1, 0, 0))
            .unwrap();
        assert!(run.z_norm.iter().all(|z| *z == 0.0));
        assert!(run.gamma.iter().all(|g| g[0] == 0.0));
        assert!(run.half_int_gamma_sq.iter().all(|h| *h == 0.0));
    }

    #[test]
    fn brownian_entropy_matches_closed_form() {
        let p = path(1e-3);
        let c = CoefficientSet::brownian(p);
        let kappa = 4.0;
        let grid = TimeGrid::new(&p, 2.0, 0.5).unwrap();
        let run = simulate_coupled_q(&c, &seg(p, 0.5), &seg(p, 0.0), &zero_law(), &CouplingParams::new(kappa), &grid, StreamKey::new(2, 0, 0))
            .unwrap();
        for (t, h) in run.times.iter().zip(&run.half_int_gamma_sq).skip(1) {
            let exact = kappa / 4.0 * (1.0 - (-2.0 * kappa * t).exp()) * 0.25;
            assert!((h - exact).abs() <= 0.02 * exact, "t={t}: {h} vs {exact}");
        }
        // Z(t) = e^{−κt} Z(0) up to O(h)
        let z_end = run.x_end.last().unwrap()[0] - run.y_end.last().unwrap()[0];
        assert!((z_end - 0.5 * (-kappa * 2.0f64).exp()).abs() < 1e-3);
    }

    #[test]
    fn kappa_must_exceed_tau_under_q() {
        let p = path(0.01);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 1.0, 1.0).unwrap();
        let r = simulate_coupled_q(&c, &seg(p, 1.0), &seg(p, 0.0), &zero_law(), &CouplingParams::new(1.0), &grid, StreamKey::new(1, 0, 0));
        assert!(matches!(r, Err(Error::Precondition(_))));
    }

    #[test]
    fn zero_kappa_gives_unit_weight() {
        let p = path(0.01);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 1.0, 0.25).unwrap();
        let run = simulate_coupled_p(&c, &seg(p, 1.0), &seg(p, 0.0), &zero_law(), &CouplingParams::new(0.0), &grid, StreamKey::new(1, 0, 0))
            .unwrap();
        assert!(run.log_r.iter().all(|l| *l == 0.0));
        assert!(run.gamma.iter().all(|g| g[0] == 0.0));
    }

    fn p_runs(n: usize, kappa: f64) -> Vec<CouplingRun> {
        let p = path(0.01);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 1.0, 1.0).unwrap();
        par::map_indexed(n, |r| {
            simulate_coupled_p(&c, &seg(p, 0.5), &seg(p, 0.0), &zero_law(), &CouplingParams::new(kappa), &grid, StreamKey::new(5, r as u64, 0))
                .unwrap()
        })
    }

    #[test]
    fn girsanov_weight_has_unit_mean() {
        let runs = p_runs(4000, 2.0);
        let r: Vec<f64> = runs.iter().map(|x| x.log_r[1].exp()).collect();
        let e = Estimate::from_samples(&r);
        assert!((e.mean - 1.0).abs() <= 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn weighted_log_weight_matches_entropy_under_q() {
        let p = path(0.01);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 1.0, 1.0).unwrap();
        let runs = p_runs(4000, 2.0);
        let rlogr: Vec<f64> = runs.iter().map(|x| x.log_r[1].exp() * x.log_r[1]).collect();
        let lhs = Estimate::from_samples(&rlogr);
        let q = coupled_q_replicas(&c, &seg(p, 0.5), &seg(p, 0.0), &zero_law(), &CouplingParams::new(2.0), &grid, 6, 4000);
        let h: Vec<f64> = q.into_iter().map(|r| r.unwrap().half_int_gamma_sq[1]).collect();
        let rhs = Estimate::from_samples(&h);
        let se = lhs.stderr.hypot(rhs.stderr);
        assert!((lhs.mean - rhs.mean).abs() <= 3.0 * se, "{lhs:?} vs {rhs:?}");
    }

    #[test]
    fn exp_moment_trivial_cases() {
        let p = path(0.01);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 2.0, 1.0).unwrap();
        let params = CouplingParams { kappa: 2.0, c_a: 0.3, alpha: 0.0 };
        let runs: Vec<CouplingRun> = (0..5)
            .map(|r| {
                simulate_coupled_q(&c, &seg(p, 0.5), &seg(p, 0.0), &zero_law(), &params, &grid, StreamKey::new(1, r, 0))
                    .unwrap()
            })
            .collect();
        let m = exp_moment_a(&runs, 0.7).unwrap();
        for e in &m {
            let exact = (0.7 * 0.3 * e.t).exp();
            assert!((e.value - exact).abs() < 1e-9 * exact);
            assert!(e.stderr < 1e-9);
        }
        assert!(exp_moment_a(&runs, 0.0).unwrap().iter().all(|e| e.value == 1.0));
        assert!(exp_moment_a(&[], 1.0).is_err());
    }

    fn law_shift(k1: f64, same: bool) -> DistCouplingRun {
        let p = path(0.02);
        let c = CoefficientSet::linear(p).with_law_coupling(k1);
        let grid = TimeGrid::new(&p, 1.0, 0.5).unwrap();
        let mu0 = ParticleCloud::uniform((0..8).map(|i| seg(p, 0.1 * i as f64)).collect()).unwrap();
        let nu0 = if same {
            mu0.clone()
        } else {
            ParticleCloud::uniform((0..8).map(|i| seg(p, 0.5 + 0.1 * i as f64)).collect()).unwrap()
        };
        let mu = simulate_mckean(&c, &mu0, &grid, 3, 0).unwrap();
        let nu = simulate_mckean(&c, &nu0, &grid, 3, 0).unwrap();
        let c1 = c.sigma.inverse_bound();
        simulate_law_shift(&c, &mu, &nu, &seg(p, 0.4), &seg(p, 0.2), &CouplingParams::new(4.0), &grid, StreamKey::new(9, 0, 0), c1, k1)
            .unwrap()
    }

    #[test]
    fn equal_laws_need_no_shift() {
        let r = law_shift(0.5, true);
        assert!(r.bar_zeta.iter().all(|z| z[0] == 0.0));
        assert!(r.bar_entropy.iter().all(|h| *h == 0.0));
    }

    #[test]
    fn law_free_drift_needs_no_shift() {
        let r = law_shift(0.0, false);
        assert!(r.bar_zeta.iter().all(|z| z[0] == 0.0));
        assert!(r.w2.iter().all(|w| *w > 0.0));
    }

    #[test]
    fn law_shift_obeys_wasserstein_bound() {
        let r = law_shift(0.5, false);
        assert!(r.bar_entropy.last().unwrap() > &0.0);
        assert!(r.worst_bound_ratio <= 1.0 + 1e-9, "{}", r.worst_bound_ratio);
    }
}

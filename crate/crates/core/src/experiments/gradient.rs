//! Gradient estimate `|∇P_t f| ≤ √(2Λ(P_t f² − (P_t f)²)) + ‖∇f‖∞ Γ_t`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::pathspace::PathSegment;
use crate::rng::StreamKey;
use crate::simulate::{simulate_path, LawPath, LawSummary, TimeGrid};
use crate::stats::Estimate;

use super::config::ExperimentConfig;
use super::decay::{decay_constant, decay_pair, meta};
use super::ensemble::{coupled_ensemble, MAX_BLOWUP_FRACTION};
use super::entropy::{fit_entropy_constant, grid_points, moment_weight};
use super::functions::TestFunction;
use super::laws::{base_segment, pair_grid, shifted, TRAINING_SHIFTS};
use super::model::Model;
use super::report::{num, Check, Report, Table, Verdict};

pub const GRADIENT_TIMES: [f64; 3] = [1.0, 2.0, 4.0];
/// Shrinking perturbation sizes of the difference quotient.
pub const GRADIENT_STEPS: [f64; 3] = [0.2, 0.1, 0.05];

/// Constants entering the right-hand side, fitted on the same configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientConstants {
    /// Entropy constant `c` of `H ≤ c e^{δ‖η‖^{2α}} ‖ξ−η‖²`.
    pub entropy: f64,
    /// `ĉ` of `E‖Z_t‖ ≤ ĉ e^{−τ₀t} ‖ξ−η‖`.
    pub decay: f64,
    /// Lipschitz constant of the inverse transform.
    pub inverse_lipschitz: f64,
}

/// Fit the entropy constant on the training pairs and the decay constant on
/// the decay pair.
pub fn gradient_constants(cfg: &ExperimentConfig, model: &Model) -> Result<GradientConstants> {
    let path = model.coefficients().path;
    let grid = TimeGrid::new(&path, cfg.t_end, cfg.save_dt)?;
    let base = base_segment(&path);
    let pts = grid_points(
        cfg,
        model,
        &pair_grid(&base, &TRAINING_SHIFTS),
        &grid,
        cfg.seed.wrapping_add(1),
        cfg.n_replicas,
    )?;
    let (xi, eta) = decay_pair(cfg)?;
    let ens = coupled_ensemble(model, cfg, &xi, &eta, &grid, cfg.seed, cfg.n_replicas)?;
    Ok(GradientConstants {
        entropy: fit_entropy_constant(&pts),
        decay: decay_constant(&ens, cfg.tau0, xi.distance(&eta)),
        inverse_lipschitz: model.inverse_lipschitz(),
    })
}

/// One function at one time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GradientPoint {
    pub t: f64,
    /// Largest `|P_t f(ξ+εe₁) − P_t f(ξ)|/‖εe₁‖` over the steps.
    pub quotient: f64,
    pub quotient_stderr: f64,
    pub variance: f64,
    pub rhs: f64,
}

impl GradientPoint {
    pub fn margin(&self) -> f64 {
        self.rhs - self.quotient
    }

    pub fn verdict(&self) -> Verdict {
        if self.margin() >= 0.0 {
            Verdict::Pass
        } else if self.margin() >= -3.0 * self.quotient_stderr {
            Verdict::Inconclusive
        } else {
            Verdict::Fail
        }
    }
}

/// Values `f(X_t)` for every function and target time, `[fn][target][path]`,
/// from `start` under common random numbers.
fn sample_values(
    model: &Model,
    start: &PathSegment,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
    targets: &[usize],
    fs: &[TestFunction],
) -> Result<Vec<Vec<Vec<f64>>>> {
    let d = model.coefficients().dim();
    let law = LawPath::Static(LawSummary::zero(d));
    let per_path = par::map_indexed(n, |j| {
        let mut vals = vec![vec![0.0; targets.len()]; fs.len()];
        simulate_path(model, start, &law, grid, StreamKey::new(seed, 0, j as u64), false, |k, st| {
            if let Some(pos) = targets.iter().position(|t| *t == k) {
                for (v, f) in vals.iter_mut().zip(fs) {
                    v[pos] = f.value(st.original());
                }
            }
        })?;
        Ok(vals)
    });
    let mut out = vec![vec![Vec::with_capacity(n); targets.len()]; fs.len()];
    let mut blown = 0usize;
    for r in per_path {
        match r {
            Ok(v) => {
                for (o, vf) in out.iter_mut().zip(v) {
                    for (ot, x) in o.iter_mut().zip(vf) {
                        ot.push(x);
                    }
                }
            }
            Err(Error::BlowUp { .. }) => blown += 1,
            Err(e) => return Err(e),
        }
    }
    if blown as f64 > MAX_BLOWUP_FRACTION * n as f64 {
        return Err(Error::BlowUp { step: 0, unit: 0 });
    }
    Ok(out)
}

/// Difference quotients and variance terms of `fs` at `xi`. Perturbed and
/// base runs share noise path by path.
pub fn gradient_points(
    cfg: &ExperimentConfig,
    model: &Model,
    xi: &PathSegment,
    fs: &[TestFunction],
    times: &[f64],
    consts: &GradientConstants,
) -> Result<Vec<Vec<GradientPoint>>> {
    let path = model.coefficients().path;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let grid = TimeGrid::new(&path, t_max, cfg.save_dt.min(t_max))?;
    let st = grid.save_times();
    let targets: Vec<usize> = times
        .iter()
        .map(|t| {
            st.iter()
                .position(|s| (s - t).abs() < 1e-9)
                .ok_or_else(|| Error::Config(format!("time {t} is not a save time")))
        })
        .collect::<Result<_>>()?;
    let seed = cfg.seed.wrapping_add(50);
    let n = cfg.n_replicas;
    let base = sample_values(model, xi, &grid, seed, n, &targets, fs)?;
    let moved = GRADIENT_STEPS
        .iter()
        .map(|e| sample_values(model, &shifted(xi, *e), &grid, seed, n, &targets, fs))
        .collect::<Result<Vec<_>>>()?;
    let alpha = model.coefficients().alpha;
    let w = moment_weight(cfg.delta, alpha, xi.weighted_norm());
    let lambda = consts.entropy * w;
    let mut out = Vec::with_capacity(fs.len());
    for (fi, f) in fs.iter().enumerate() {
        let grad = f.grad_bound(&path);
        let mut row = Vec::with_capacity(times.len());
        for (k, &t) in times.iter().enumerate() {
            let b = &base[fi][k];
            let variance = {
                let e = Estimate::from_samples(b);
                b.iter().map(|v| (v - e.mean).powi(2)).sum::<f64>() / b.len() as f64
            };
            let mut quotient = 0.0;
            let mut quotient_stderr = 0.0;
            for (ei, &eps) in GRADIENT_STEPS.iter().enumerate() {
                let dist = shifted(xi, eps).distance(xi);
                let m = &moved[ei][fi][k];
                // shorter vector when paths blew up on one side only
                let len = m.len().min(b.len());
                let diff: Vec<f64> = m[..len].iter().zip(&b[..len]).map(|(x, y)| x - y).collect();
                let e = Estimate::from_samples(&diff);
                let q = e.mean.abs() / dist;
                if q >= quotient {
                    quotient = q;
                    quotient_stderr = e.stderr / dist;
                }
            }
            let gamma = consts.inverse_lipschitz * consts.decay * (-cfg.tau0 * t).exp();
            let rhs = (2.0 * lambda * variance).sqrt() + grad * gamma;
            row.push(GradientPoint {
                t,
                quotient,
                quotient_stderr,
                variance,
                rhs,
            });
        }
        out.push(row);
    }
    Ok(out)
}

pub fn run_gradient(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    cfg.check_kappa()?;
    let model = Model::prepare(cfg, cfg.coefficient_set()?)?;
    run_gradient_with(cfg, &model)
}

pub fn run_gradient_with(cfg: &ExperimentConfig, model: &Model) -> Result<Report> {
    cfg.check_kappa()?;
    let path = model.coefficients().path;
    let fs = TestFunction::gradient_pair(cfg);
    for f in &fs {
        f.check(&path)?;
    }
    let times: Vec<f64> = GRADIENT_TIMES.iter().cloned().filter(|t| *t <= cfg.t_end + 1e-9).collect();
    let consts = gradient_constants(cfg, model)?;
    let xi = base_segment(&path);
    let pts = gradient_points(cfg, model, &xi, &fs, &times, &consts)?;
    let mut meta = meta(cfg, model, cfg.n_replicas, 0);
    meta.constants.push(("entropy_constant".into(), consts.entropy));
    meta.constants.push(("decay_constant".into(), consts.decay));
    meta.constants.push(("inverse_lipschitz".into(), consts.inverse_lipschitz));
    let mut table = Table::new(
        "gradient.csv",
        &["function", "t", "quotient", "quotient_se", "variance", "rhs", "margin"],
    );
    let mut checks = Vec::new();
    for (fi, row) in pts.iter().enumerate() {
        for p in row {
            table.push(vec![
                fi.to_string(),
                num(p.t),
                num(p.quotient),
                num(p.quotient_stderr),
                num(p.variance),
                num(p.rhs),
                num(p.margin()),
            ]);
            meta.constants.push((format!("gradient_margin_f{fi}_t{}", p.t), p.margin()));
            checks.push(Check::new(
                &format!("gradient.f{fi}.t{}", p.t),
                "gradient estimate of the semigroup",
                p.verdict(),
                format!(
                    "quotient={:.4e} +- {:.1e} rhs={:.4e} margin={:.4e}",
                    p.quotient,
                    p.quotient_stderr,
                    p.rhs,
                    p.margin()
                ),
            ));
        }
    }
    Ok(Report {
        experiment: "gradient".into(),
        meta,
        checks,
        tables: vec![table],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_function_has_zero_sides() {
        let cfg = ExperimentConfig {
            t_mem: 2.0,
            h: 0.05,
            n_replicas: 16,
            ..ExperimentConfig::default()
        };
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let consts = GradientConstants {
            entropy: 1.0,
            decay: 1.0,
            inverse_lipschitz: 1.0,
        };
        let xi = base_segment(&cfg.path().unwrap());
        let p = gradient_points(&cfg, &model, &xi, &[TestFunction::constant()], &[1.0], &consts).unwrap();
        assert_eq!(p[0][0].quotient, 0.0);
        assert_eq!(p[0][0].variance, 0.0);
        assert_eq!(p[0][0].rhs, 0.0);
        assert_eq!(p[0][0].verdict(), Verdict::Pass);
    }

    #[test]
    fn brownian_quotient_is_bounded_by_gradient() {
        // X_t = ξ(0) + W_t: |P_t f(ξ+ε) − P_t f(ξ)| ≤ ‖∇f‖ ε
        let cfg = ExperimentConfig {
            coefficients: "brownian".into(),
            t_mem: 2.0,
            h: 0.05,
            n_replicas: 200,
            ..ExperimentConfig::default()
        };
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let consts = GradientConstants {
            entropy: 0.0,
            decay: 1.0,
            inverse_lipschitz: 1.0,
        };
        let f = TestFunction::new(1.0, 1.0, 0.0, 2.0);
        let xi = base_segment(&cfg.path().unwrap());
        let p = gradient_points(&cfg, &model, &xi, &[f], &[1.0], &consts).unwrap();
        assert!(p[0][0].quotient <= f.grad_bound(&cfg.path().unwrap()) + 1e-12);
        assert!(p[0][0].quotient > 0.0);
    }
}

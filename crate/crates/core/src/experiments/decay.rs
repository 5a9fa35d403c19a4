//! Exponential decay of `E_Q‖X̂_t − Ŷ_t‖_τ^p`.

use serde::Serialize;

use crate::error::Result;
use crate::pathspace::PathSegment;
use crate::simulate::TimeGrid;
use crate::stats::ols;

use super::config::ExperimentConfig;
use super::ensemble::{coupled_ensemble, Ensemble};
use super::laws::{base_segment, shifted};
use super::model::Model;
use super::report::{num, Check, Report, RunMeta, Table, Verdict};

pub const DECAY_POWERS: [f64; 3] = [1.0, 2.0, 4.0];
pub const DECAY_SHIFT: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    pub p: f64,
    pub rate: f64,
    pub stderr: f64,
    /// `−p τ₀`.
    pub threshold: f64,
    /// All moments vanished (`ξ = η`).
    pub degenerate: bool,
    pub pass: bool,
}

/// Fit `log E‖Z_t‖^p` against `t` on `[t_lo, t_hi]`; errors of the means
/// enter through the delta method.
pub fn decay_fit(ens: &Ensemble, p: f64, tau0: f64, t_lo: f64, t_hi: f64) -> DecayFit {
    let est = ens.estimate(|r, k| r.z_norm[k].powf(p));
    let threshold = -p * tau0;
    let mut ts = Vec::new();
    let mut ys = Vec::new();
    let mut ses = Vec::new();
    for (t, e) in ens.times.iter().zip(&est) {
        if *t + 1e-12 < t_lo || *t > t_hi + 1e-12 {
            continue;
        }
        if e.mean > 0.0 {
            ts.push(*t);
            ys.push(e.mean.ln());
            ses.push(e.stderr / e.mean);
        }
    }
    if est.iter().all(|e| e.mean == 0.0) {
        return DecayFit {
            p,
            rate: f64::NEG_INFINITY,
            stderr: 0.0,
            threshold,
            degenerate: true,
            pass: true,
        };
    }
    if ts.len() < 2 {
        return DecayFit {
            p,
            rate: f64::NAN,
            stderr: f64::NAN,
            threshold,
            degenerate: false,
            pass: false,
        };
    }
    let fit = ols(&ts, &ys, Some(&ses));
    DecayFit {
        p,
        rate: fit.slope,
        stderr: fit.slope_stderr,
        threshold,
        degenerate: false,
        pass: fit.slope <= threshold + 2.0 * fit.slope_stderr,
    }
}

/// `ĉ` with `E‖Z_t‖ ≤ ĉ e^{−τ₀ t} dist` at every save time.
pub fn decay_constant(ens: &Ensemble, tau0: f64, dist: f64) -> f64 {
    let est = ens.estimate(|r, k| r.z_norm[k]);
    ens.times
        .iter()
        .zip(&est)
        .map(|(t, e)| (e.mean + e.stderr) * (tau0 * t).exp() / dist)
        .fold(0.0, f64::max)
}

pub(crate) fn decay_pair(cfg: &ExperimentConfig) -> Result<(PathSegment, PathSegment)> {
    let eta = base_segment(&cfg.path()?);
    Ok((shifted(&eta, DECAY_SHIFT), eta))
}

pub(crate) fn meta(cfg: &ExperimentConfig, model: &Model, replicas: usize, particles: usize) -> RunMeta {
    let path = &model.coefficients().path;
    let mut notes = Vec::new();
    if let Some(m) = model.map() {
        notes.push(format!(
            "zvonkin lambda={:.6e} |u|+|grad u|={:.6e}",
            m.lambda,
            m.norms.smallness()
        ));
    }
    RunMeta {
        coefficients: model.coefficients().name.clone(),
        truncation_bound: path.truncation_bound(),
        h: path.h,
        replicas,
        particles,
        seed: cfg.seed,
        constants: Vec::new(),
        notes,
    }
}

/// Decay of the coupled difference from `(base + ½, base)`.
pub fn run_decay(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    cfg.check_kappa()?;
    let model = Model::prepare(cfg, cfg.coefficient_set()?)?;
    let (xi, eta) = decay_pair(cfg)?;
    run_decay_with(cfg, &model, &xi, &eta)
}

pub fn run_decay_with(cfg: &ExperimentConfig, model: &Model, xi: &PathSegment, eta: &PathSegment) -> Result<Report> {
    cfg.check_kappa()?;
    let grid = TimeGrid::new(&model.coefficients().path, cfg.t_end, cfg.save_dt)?;
    let ens = coupled_ensemble(model, cfg, xi, eta, &grid, cfg.seed, cfg.n_replicas)?;
    decay_report(cfg, model, &ens, xi.distance(eta))
}

pub(crate) fn decay_report(cfg: &ExperimentConfig, model: &Model, ens: &Ensemble, dist: f64) -> Result<Report> {
    let mut meta = meta(cfg, model, ens.runs.len(), 0);
    let mut checks = Vec::new();
    let mut table = Table::new("decay.csv", &["t", "m1", "se1", "m2", "se2", "m4", "se4"]);
    let ests: Vec<_> = DECAY_POWERS
        .iter()
        .map(|&p| ens.estimate(|r, k| r.z_norm[k].powf(p)))
        .collect();
    for (k, t) in ens.times.iter().enumerate() {
        let mut row = vec![num(*t)];
        for e in &ests {
            row.push(num(e[k].mean));
            row.push(num(e[k].stderr));
        }
        table.push(row);
    }
    let mut fits = Table::new("decay_fit.csv", &["p", "rate", "stderr", "threshold", "verdict"]);
    for &p in &DECAY_POWERS {
        let f = decay_fit(ens, p, cfg.tau0, cfg.t_end / 4.0, cfg.t_end);
        let verdict = Verdict::from_bool(f.pass);
        fits.push(vec![
            num(p),
            num(f.rate),
            num(f.stderr),
            num(f.threshold),
            verdict.label().into(),
        ]);
        meta.constants.push((format!("decay_rate_p{p}"), f.rate));
        meta.constants.push((format!("decay_rate_stderr_p{p}"), f.stderr));
        let detail = if f.degenerate {
            "xi = eta: all moments vanish (degenerate pass)".to_string()
        } else {
            format!(
                "rate={:.4} +- {:.4} vs -p*tau0={:.4}",
                f.rate, f.stderr, f.threshold
            )
        };
        checks.push(Check::new(
            &format!("decay.p{p}"),
            "exponential decay of the coupled difference",
            verdict,
            detail,
        ));
    }
    meta.constants
        .push(("decay_constant".into(), decay_constant(ens, cfg.tau0, dist)));
    meta.constants.push(("exit_fraction".into(), ens.exit_fraction));
    meta.constants.push(("blown_up".into(), ens.blown_up as f64));
    checks.push(Check::new(
        "decay.box_exits",
        "simulated mass stays in the elliptic box",
        ens.exit_verdict(),
        format!("exit fraction {:.3e}", ens.exit_fraction),
    ));
    Ok(Report {
        experiment: "decay".into(),
        meta,
        checks,
        tables: vec![table, fits],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            coefficients: name.into(),
            t_mem: 4.0,
            h: 0.02,
            t_end: 4.0,
            save_dt: 0.5,
            n_replicas: 64,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn identical_segments_are_degenerate() {
        let cfg = small("linear");
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let eta = base_segment(&cfg.path().unwrap());
        let r = run_decay_with(&cfg, &model, &eta, &eta).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        assert!(r.check("decay.p2").unwrap().detail.contains("degenerate"));
    }

    #[test]
    fn kappa_must_exceed_tau() {
        let mut cfg = small("linear");
        cfg.kappa = 1.0;
        assert!(matches!(run_decay(&cfg), Err(crate::Error::Config(_))));
    }

    #[test]
    fn brownian_rate_saturates_at_tau() {
        // Z(t) = e^{−κt}Z(0) and the window keeps the initial shift, so
        // ‖Z_t‖_τ = e^{−τt} δ once κ > τ.
        let cfg = small("brownian");
        let r = run_decay(&cfg).unwrap();
        for p in DECAY_POWERS {
            let rate = r.constant(&format!("decay_rate_p{p}")).unwrap();
            assert!((rate + p * cfg.tau).abs() < 0.05, "p={p} rate={rate}");
        }
        assert_eq!(r.verdict(), Verdict::Pass);
    }
}

//! Relative entropy `H(t) = E_Q[½∫₀ᵗ|γ|²]` of the coupling.

use crate::error::Result;
use crate::simulate::TimeGrid;
use crate::stats::Estimate;

use super::config::ExperimentConfig;
use super::decay::{decay_pair, meta};
use super::ensemble::{coupled_ensemble, Ensemble};
use super::laws::{base_segment, pair_grid, SegmentPair, HELD_OUT_SHIFTS, TRAINING_SHIFTS};
use super::model::Model;
use super::report::{num, Check, Report, Table, Verdict};

/// `e^{δ‖η‖_τ^{2α}}`.
pub fn moment_weight(delta: f64, alpha: f64, eta_norm: f64) -> f64 {
    (delta * eta_norm.powf(2.0 * alpha)).exp()
}

/// Entropy at every save time.
pub fn entropy_curve(ens: &Ensemble) -> Vec<Estimate> {
    ens.estimate(|r, k| r.half_int_gamma_sq[k])
}

/// Plateau test `H(T) − H(T/2) ≤ 3 se + 5% H(T)`, with the error of the
/// difference taken per replica.
pub fn plateau(ens: &Ensemble) -> (bool, f64, f64) {
    let last = ens.times.len() - 1;
    let t_end = ens.times[last];
    let mid = ens
        .times
        .iter()
        .position(|t| *t + 1e-12 >= 0.5 * t_end)
        .unwrap_or(last);
    let diff: Vec<f64> = ens
        .runs
        .iter()
        .map(|r| r.half_int_gamma_sq[last] - r.half_int_gamma_sq[mid])
        .collect();
    let d = Estimate::from_samples(&diff);
    let h_end = Estimate::from_samples(&ens.runs.iter().map(|r| r.half_int_gamma_sq[last]).collect::<Vec<_>>());
    let allowed = 3.0 * d.stderr + 0.05 * h_end.mean;
    (d.mean <= allowed, d.mean, allowed)
}

/// One pair of the `(ξ, η)` grid with its end-time entropy.
#[derive(Debug, Clone)]
pub struct EntropyPoint {
    pub shift: f64,
    pub xi_shifted: bool,
    pub dist: f64,
    pub weight: f64,
    pub h_end: Estimate,
}

impl EntropyPoint {
    pub fn scale(&self) -> f64 {
        self.weight * self.dist * self.dist
    }
}

pub(crate) fn grid_points(
    cfg: &ExperimentConfig,
    model: &Model,
    pairs: &[SegmentPair],
    grid: &TimeGrid,
    seed: u64,
    n: usize,
) -> Result<Vec<EntropyPoint>> {
    let alpha = model.coefficients().alpha;
    pairs
        .iter()
        .map(|p| {
            let ens = coupled_ensemble(model, cfg, &p.xi, &p.eta, grid, seed, n)?;
            let h = entropy_curve(&ens);
            Ok(EntropyPoint {
                shift: p.shift,
                xi_shifted: p.xi_shifted,
                dist: p.distance(),
                weight: moment_weight(cfg.delta, alpha, p.eta.weighted_norm()),
                h_end: *h.last().expect("save at t = 0"),
            })
        })
        .collect()
}

/// Smallest `c` with `H ≤ c e^{δ‖η‖^{2α}} ‖ξ−η‖²` on the given points.
pub fn fit_entropy_constant(points: &[EntropyPoint]) -> f64 {
    points
        .iter()
        .filter(|p| p.scale() > 0.0)
        .map(|p| p.h_end.mean / p.scale())
        .fold(0.0, f64::max)
}

pub fn run_entropy(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    cfg.check_kappa()?;
    let model = Model::prepare(cfg, cfg.coefficient_set()?)?;
    run_entropy_with(cfg, &model)
}

pub fn run_entropy_with(cfg: &ExperimentConfig, model: &Model) -> Result<Report> {
    cfg.check_kappa()?;
    let path = model.coefficients().path;
    let grid = TimeGrid::new(&path, cfg.t_end, cfg.save_dt)?;
    let (xi, eta) = decay_pair(cfg)?;
    let ens = coupled_ensemble(model, cfg, &xi, &eta, &grid, cfg.seed, cfg.n_replicas)?;
    let mut meta = meta(cfg, model, ens.runs.len(), 0);
    let mut checks = Vec::new();

    let h = entropy_curve(&ens);
    let mut curve = Table::new("entropy.csv", &["t", "H", "se"]);
    for (t, e) in ens.times.iter().zip(&h) {
        curve.push(vec![num(*t), num(e.mean), num(e.stderr)]);
    }
    let monotone = h
        .windows(2)
        .all(|w| w[1].mean >= w[0].mean - 1e-12 * w[1].mean.abs());
    checks.push(Check::new(
        "entropy.monotone",
        "entropy of the coupling is nondecreasing",
        Verdict::from_bool(monotone),
        format!("H(T)={:.4e}", h.last().map(|e| e.mean).unwrap_or(0.0)),
    ));
    let (flat, growth, allowed) = plateau(&ens);
    checks.push(Check::new(
        "entropy.plateau",
        "entropy of the coupling is bounded in time",
        Verdict::from_bool(flat),
        format!("H(T)-H(T/2)={growth:.4e} allowed={allowed:.4e}"),
    ));

    // constant fitted on training pairs, validated on held-out pairs
    let base = base_segment(&path);
    let seed = cfg.seed.wrapping_add(1);
    let train = grid_points(cfg, model, &pair_grid(&base, &TRAINING_SHIFTS), &grid, seed, cfg.n_replicas)?;
    let held = grid_points(cfg, model, &pair_grid(&base, &HELD_OUT_SHIFTS), &grid, seed, cfg.n_replicas)?;
    let c = fit_entropy_constant(&train);
    let mut pts = Table::new(
        "entropy_pairs.csv",
        &["set", "shift", "xi_shifted", "dist", "weight", "H", "se", "bound"],
    );
    let mut worst = f64::NEG_INFINITY;
    for (set, list) in [("train", &train), ("held_out", &held)] {
        for p in list.iter() {
            let bound = c * p.scale();
            if set == "held_out" {
                worst = worst.max((p.h_end.mean - bound) / p.h_end.stderr.max(1e-300));
            }
            pts.push(vec![
                set.into(),
                num(p.shift),
                p.xi_shifted.to_string(),
                num(p.dist),
                num(p.weight),
                num(p.h_end.mean),
                num(p.h_end.stderr),
                num(bound),
            ]);
        }
    }
    let held_ok = held
        .iter()
        .all(|p| p.h_end.mean <= c * p.scale() + 3.0 * p.h_end.stderr);
    checks.push(Check::new(
        "entropy.constant",
        "entropy bounded by c e^{delta|eta|^{2 alpha}} |xi-eta|^2",
        Verdict::from_bool(held_ok),
        format!("c={c:.4e}; worst held-out excess {worst:.2} stderr"),
    ));
    meta.constants.push(("entropy_constant".into(), c));
    meta.constants.push(("exit_fraction".into(), ens.exit_fraction));
    checks.push(Check::new(
        "entropy.box_exits",
        "simulated mass stays in the elliptic box",
        ens.exit_verdict(),
        format!("exit fraction {:.3e}", ens.exit_fraction),
    ));
    Ok(Report {
        experiment: "entropy".into(),
        meta,
        checks,
        tables: vec![curve, pts],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(name: &str) -> ExperimentConfig {
        ExperimentConfig {
            coefficients: name.into(),
            t_mem: 2.0,
            h: 0.01,
            t_end: 4.0,
            save_dt: 0.5,
            n_replicas: 32,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn identical_segments_have_zero_entropy() {
        let cfg = small("dini_sqrt");
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let eta = base_segment(&cfg.path().unwrap());
        let grid = TimeGrid::new(&cfg.path().unwrap(), 2.0, 0.5).unwrap();
        let ens = coupled_ensemble(&model, &cfg, &eta, &eta, &grid, 1, 8).unwrap();
        assert!(entropy_curve(&ens).iter().all(|e| e.mean == 0.0));
    }

    #[test]
    fn brownian_entropy_plateaus_at_closed_form() {
        let cfg = small("brownian");
        let r = run_entropy(&cfg).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass, "{}", r.summary());
        // discrete plateau κδ²/(4 − 2κh) for the shift δ = ½
        let k = cfg.kappa;
        let target = k * 0.25 / (4.0 - 2.0 * k * cfg.h);
        let rows = &r.tables[0].rows;
        let h_end: f64 = rows.last().unwrap()[1].parse().unwrap();
        assert!((h_end - target).abs() < 1e-3 * target, "{h_end} vs {target}");
        // H = c δ², with e^{δ‖η‖^{2α}} = e^{δ} at α = 0
        let c = r.constant("entropy_constant").unwrap();
        assert!((c - k / (4.0 - 2.0 * k * cfg.h) / cfg.delta.exp()).abs() < 1e-3 * c);
    }
}

//! Growth of `W₂(P_t*μ, P_t*ν)` between interacting particle systems.

use serde::Serialize;

use crate::error::Result;
use crate::simulate::{simulate_mckean, TimeGrid};
use crate::stats::{bisect_min, ols, Estimate};
use crate::wasserstein::wk_full;

use super::alh::{LAW_OFFSET, LAW_SCALE};
use super::config::ExperimentConfig;
use super::decay::meta;
use super::laws::{bridge_cloud, exp_moment};
use super::model::Model;
use super::report::{num, Check, Report, Table, Verdict};

/// Replicate seeds per particle count; the first half trains, the second validates.
pub const GROWTH_REPLICATES: usize = 4;
/// Translation between the two initial laws.
pub const GROWTH_SHIFT: f64 = 0.5;
/// Largest relative change of `c₀` when the particle count doubles.
pub const MAX_DOUBLING_CHANGE: f64 = 0.25;

/// `W₂(t)/W_{2+ε}(μ,ν)` of one replicate at every save time.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthCurve {
    pub particles: usize,
    pub replicate: usize,
    pub initial: f64,
    pub w2: Vec<f64>,
}

impl GrowthCurve {
    pub fn ratios(&self) -> Vec<f64> {
        self.w2.iter().map(|w| w / self.initial).collect()
    }
}

/// Simulate both systems from translated bridge laws and measure `W₂` at
/// every save time. Noise is independent across the two systems.
pub fn growth_curve(
    cfg: &ExperimentConfig,
    model: &Model,
    grid: &TimeGrid,
    particles: usize,
    replicate: usize,
) -> Result<GrowthCurve> {
    let path = model.coefficients().path;
    let law_seed = cfg.seed.wrapping_add(40 + replicate as u64);
    let mu = bridge_cloud(&path, particles, LAW_SCALE, LAW_OFFSET, law_seed)?;
    let nu = bridge_cloud(&path, particles, LAW_SCALE, LAW_OFFSET + GROWTH_SHIFT, law_seed)?;
    let k0 = 2.0 + cfg.epsilon(model.coefficients().alpha);
    let initial = wk_full(&mu, &nu, k0)?;
    let r = replicate as u64;
    let a = simulate_mckean(model, &mu, grid, cfg.seed.wrapping_add(30), r)?;
    let b = simulate_mckean(model, &nu, grid, cfg.seed.wrapping_add(31), r)?;
    let w2 = a
        .clouds
        .iter()
        .zip(&b.clouds)
        .map(|(x, y)| wk_full(x, y, 2.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(GrowthCurve {
        particles,
        replicate,
        initial,
        w2,
    })
}

/// Smallest `c` with `r ≤ c e^{ct}` at every point of every curve.
pub fn fit_growth_constant(times: &[f64], curves: &[&GrowthCurve]) -> f64 {
    bisect_min(
        |c| {
            curves.iter().all(|cv| {
                cv.ratios()
                    .iter()
                    .zip(times)
                    .all(|(r, t)| *r <= c * (c * t).min(700.0).exp())
            })
        },
        1e3,
    )
    .unwrap_or(f64::INFINITY)
}

/// Fit on one half of the replicates and validate on the other.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthFit {
    pub particles: usize,
    pub c0: f64,
    pub held_out: Vec<Estimate>,
    pub violations: usize,
    /// OLS slope of `log` of the mean `W₂(t)` with its error.
    pub log_slope: f64,
    pub log_slope_stderr: f64,
}

pub fn growth_fit(times: &[f64], curves: &[GrowthCurve]) -> GrowthFit {
    let half = curves.len() / 2;
    let train: Vec<&GrowthCurve> = curves[..half].iter().collect();
    let c0 = fit_growth_constant(times, &train);
    let held: Vec<Vec<f64>> = curves[half..].iter().map(|c| c.ratios()).collect();
    let held_out: Vec<Estimate> = (0..times.len())
        .map(|k| Estimate::from_samples(&held.iter().map(|r| r[k]).collect::<Vec<_>>()))
        .collect();
    let violations = held_out
        .iter()
        .zip(times)
        .filter(|(e, t)| e.mean > c0 * (c0 * *t).min(700.0).exp() + 3.0 * e.stderr)
        .count();
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ses = Vec::new();
    for (k, t) in times.iter().enumerate() {
        let e = Estimate::from_samples(&curves.iter().map(|c| c.w2[k]).collect::<Vec<_>>());
        if e.mean > 0.0 {
            xs.push(*t);
            ys.push(e.mean.ln());
            ses.push(e.stderr / e.mean);
        }
    }
    let (log_slope, log_slope_stderr) = if xs.len() >= 2 {
        let f = ols(&xs, &ys, Some(&ses));
        (f.slope, f.slope_stderr)
    } else {
        (0.0, 0.0)
    };
    GrowthFit {
        particles: curves.first().map(|c| c.particles).unwrap_or(0),
        c0,
        held_out,
        violations,
        log_slope,
        log_slope_stderr,
    }
}

pub fn run_growth(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    let model = Model::prepare(cfg, cfg.coefficient_set()?)?;
    run_growth_with(cfg, &model)
}

pub fn run_growth_with(cfg: &ExperimentConfig, model: &Model) -> Result<Report> {
    let path = model.coefficients().path;
    let grid = TimeGrid::new(&path, cfg.t_end, cfg.save_dt)?;
    let times = grid.save_times();
    let counts = [cfg.n_particles, 2 * cfg.n_particles];
    let mut meta = meta(cfg, model, GROWTH_REPLICATES, cfg.n_particles);
    let mut checks = Vec::new();
    let mut table = Table::new("growth.csv", &["particles", "replicate", "t", "w2", "ratio"]);
    let mut fit_table = Table::new(
        "growth_fit.csv",
        &["particles", "c0", "violations", "log_slope", "log_slope_se"],
    );
    let mut fits = Vec::new();
    for &n in &counts {
        let curves = (0..GROWTH_REPLICATES)
            .map(|r| growth_curve(cfg, model, &grid, n, r))
            .collect::<Result<Vec<_>>>()?;
        for c in &curves {
            for ((t, w), r) in times.iter().zip(&c.w2).zip(c.ratios()) {
                table.push(vec![n.to_string(), c.replicate.to_string(), num(*t), num(*w), num(r)]);
            }
        }
        let f = growth_fit(&times, &curves);
        fit_table.push(vec![
            n.to_string(),
            num(f.c0),
            f.violations.to_string(),
            num(f.log_slope),
            num(f.log_slope_stderr),
        ]);
        meta.constants.push((format!("growth_c0_n{n}"), f.c0));
        meta.constants.push((format!("growth_initial_distance_n{n}"), curves[0].initial));
        fits.push(f);
    }
    for f in &fits {
        checks.push(Check::new(
            &format!("growth.n{}.held_out", f.particles),
            "W2 growth bounded by c0 e^{c0 t} W_{2+eps}(mu,nu)",
            Verdict::from_bool(f.c0.is_finite() && f.violations == 0),
            format!("c0={:.4}; {} held-out violations beyond 3 stderr", f.c0, f.violations),
        ));
        checks.push(Check::new(
            &format!("growth.n{}.log_slope", f.particles),
            "log W2 grows at most linearly with slope c0",
            Verdict::from_bool(f.log_slope <= f.c0 + 2.0 * f.log_slope_stderr),
            format!("slope={:.4} +- {:.4} vs c0={:.4}", f.log_slope, f.log_slope_stderr, f.c0),
        ));
    }
    let change = (fits[1].c0 - fits[0].c0).abs() / fits[0].c0;
    meta.constants.push(("growth_c0_change".into(), change));
    checks.push(Check::new(
        "growth.doubling",
        "fitted growth constant stable under particle doubling",
        Verdict::from_bool(change < MAX_DOUBLING_CHANGE),
        format!("relative change {change:.4} (limit {MAX_DOUBLING_CHANGE})"),
    ));
    let alpha = model.coefficients().alpha;
    let mu = bridge_cloud(&path, cfg.n_particles, LAW_SCALE, LAW_OFFSET, cfg.seed.wrapping_add(40))?;
    let m = exp_moment(&mu, cfg.delta, alpha);
    meta.constants.push(("exp_moment".into(), m.moment));
    checks.push(Check::new(
        "growth.exp_moment",
        "initial laws carry the exponential moment",
        if m.near_overflow { Verdict::Inconclusive } else { Verdict::Pass },
        format!("E exp(delta |xi|^(2 alpha)) = {:.4e}", m.moment),
    ));
    Ok(Report {
        experiment: "growth".into(),
        meta,
        checks,
        tables: vec![table, fit_table],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn curve(ratios: &[f64]) -> GrowthCurve {
        GrowthCurve {
            particles: 4,
            replicate: 0,
            initial: 2.0,
            w2: ratios.iter().map(|r| 2.0 * r).collect(),
        }
    }

    #[test]
    fn fitted_constant_is_tight() {
        let times = [0.0, 1.0, 2.0];
        let c = curve(&[1.0, 0.5, 0.2]);
        assert!((fit_growth_constant(&times, &[&c]) - 1.0).abs() < 1e-9);
        let c = curve(&[0.5, 2.0 * 2f64.exp(), 0.2]);
        assert!((fit_growth_constant(&times, &[&c]) - 2.0).abs() < 1e-9);
    }

    #[test]
    fn identical_laws_stay_at_zero() {
        let cfg = ExperimentConfig {
            coefficients: "linear".into(),
            t_mem: 2.0,
            h: 0.05,
            ..ExperimentConfig::default()
        };
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let path = cfg.path().unwrap();
        let grid = TimeGrid::new(&path, 1.0, 0.5).unwrap();
        let mu = bridge_cloud(&path, 8, LAW_SCALE, LAW_OFFSET, 1).unwrap();
        let a = simulate_mckean(&model, &mu, &grid, 3, 0).unwrap();
        let b = simulate_mckean(&model, &mu, &grid, 3, 0).unwrap();
        for (x, y) in a.clouds.iter().zip(&b.clouds) {
            assert_eq!(wk_full(x, y, 2.0).unwrap(), 0.0);
        }
    }

    #[test]
    fn translates_start_at_the_shift() {
        let cfg = ExperimentConfig {
            coefficients: "linear".into(),
            t_mem: 2.0,
            h: 0.05,
            t_end: 1.0,
            save_dt: 0.5,
            ..ExperimentConfig::default()
        };
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let grid = TimeGrid::new(&cfg.path().unwrap(), 1.0, 0.5).unwrap();
        let c = growth_curve(&cfg, &model, &grid, 16, 0).unwrap();
        assert!((c.initial - GROWTH_SHIFT).abs() < 1e-12);
        assert!((c.w2[0] - GROWTH_SHIFT).abs() < 1e-12);
    }
}

//! Asymptotic log-Harnack inequality, for initial segments and for initial laws.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::par;
use crate::pathspace::PathSegment;
use crate::rng::StreamKey;
use crate::simulate::{simulate_mckean_observed, simulate_path, LawPath, LawSummary, ParticleCloud, TimeGrid};
use crate::stats::{bisect_min, ols, Estimate};

use super::config::ExperimentConfig;
use super::decay::meta;
use super::ensemble::MAX_BLOWUP_FRACTION;
use super::entropy::moment_weight;
use super::functions::TestFunction;
use super::laws::{base_segment, bridge_cloud, point_mass_cloud, shifted, HELD_OUT_SHIFTS, TRAINING_SHIFTS};
use super::model::Model;
use super::report::{num, Check, Report, Table, Verdict};

/// Evaluation times of the inequality.
pub const ALH_TIMES: [f64; 4] = [1.0, 2.0, 4.0, 8.0];
/// Spread and centre of the bridge laws used in law mode.
pub const LAW_SCALE: f64 = 0.2;
pub const LAW_OFFSET: f64 = 0.5;

/// `E log f` and `log E f` at the evaluation times for one starting point.
#[derive(Debug, Clone)]
pub struct SideEstimate {
    pub log_mean: Vec<Estimate>,
    pub mean_log: Vec<Estimate>,
}

fn times_on(grid: &TimeGrid, times: &[f64]) -> Result<Vec<usize>> {
    let st = grid.save_times();
    times
        .iter()
        .map(|t| {
            st.iter()
                .position(|s| (s - t).abs() < 1e-9)
                .ok_or_else(|| Error::Config(format!("time {t} is not a save time")))
        })
        .collect()
}

fn summarize(samples: &[Vec<f64>], log_f: bool) -> Vec<Estimate> {
    samples
        .iter()
        .map(|xs| {
            if log_f {
                Estimate::from_samples(xs)
            } else {
                let e = Estimate::from_samples(&xs.iter().map(|v| v.exp()).collect::<Vec<_>>());
                Estimate {
                    mean: e.mean.ln(),
                    stderr: e.stderr / e.mean,
                    n: e.n,
                }
            }
        })
        .collect()
}

/// `log f` of independent paths from `xi` at the save indices `targets`;
/// returns `[target][path]`. Aborts when more than 1% of paths blow up.
pub fn sample_log_f(
    model: &Model,
    xi: &PathSegment,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
    targets: &[usize],
    f: &TestFunction,
) -> Result<Vec<Vec<f64>>> {
    let d = model.coefficients().dim();
    let law = LawPath::Static(LawSummary::zero(d));
    let per_path = par::map_indexed(n, |j| {
        let mut vals = vec![0.0; targets.len()];
        simulate_path(model, xi, &law, grid, StreamKey::new(seed, 0, j as u64), false, |k, st| {
            if let Some(pos) = targets.iter().position(|t| *t == k) {
                vals[pos] = f.log_value(st.original());
            }
        })?;
        Ok(vals)
    });
    collect_paths(per_path, targets.len(), n)
}

fn collect_paths(per_path: Vec<Result<Vec<f64>>>, n_targets: usize, n: usize) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::with_capacity(n); n_targets];
    let mut blown = 0usize;
    let mut first = None;
    for r in per_path {
        match r {
            Ok(v) => {
                for (o, x) in out.iter_mut().zip(v) {
                    o.push(x);
                }
            }
            Err(e @ Error::BlowUp { .. }) => {
                blown += 1;
                first.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if blown as f64 > MAX_BLOWUP_FRACTION * n as f64 {
        return Err(first.expect("counted"));
    }
    Ok(out)
}

/// `log f` over the particles of an interacting system started from `init`.
pub fn sample_log_f_law(
    model: &Model,
    init: &ParticleCloud,
    grid: &TimeGrid,
    seed: u64,
    targets: &[usize],
    f: &TestFunction,
) -> Result<Vec<Vec<f64>>> {
    let mut out = vec![Vec::new(); targets.len()];
    simulate_mckean_observed(model, init, grid, seed, 0, |k, states| {
        if let Some(pos) = targets.iter().position(|t| *t == k) {
            out[pos] = states.iter().map(|s| f.log_value(s.original())).collect();
        }
    })?;
    Ok(out)
}

/// Where the starting points come from.
#[derive(Debug, Clone)]
pub enum Start {
    Segment(PathSegment),
    Law(ParticleCloud),
}

fn side(
    model: &Model,
    start: &Start,
    grid: &TimeGrid,
    seeds: (u64, u64),
    n: usize,
    targets: &[usize],
    f: &TestFunction,
) -> Result<SideEstimate> {
    let run = |seed| match start {
        Start::Segment(s) => sample_log_f(model, s, grid, seed, n, targets, f),
        Start::Law(c) => sample_log_f_law(model, c, grid, seed, targets, f),
    };
    let lhs = run(seeds.0)?;
    let rhs = run(seeds.1)?;
    Ok(SideEstimate {
        mean_log: summarize(&lhs, true),
        log_mean: summarize(&rhs, false),
    })
}

/// Defect `D(t) = E log f(X^η_t) − log E f(X^ξ_t)` at one pair and time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectPoint {
    pub training: bool,
    pub shift: f64,
    pub xi_shifted: bool,
    pub t: f64,
    pub lhs: Estimate,
    pub rhs: Estimate,
    pub dist: f64,
    /// `e^{δ‖η‖^{2α}}` in path mode, 1 in law mode.
    pub weight: f64,
}

impl DefectPoint {
    pub fn defect(&self) -> f64 {
        self.lhs.mean - self.rhs.mean
    }

    pub fn stderr(&self) -> f64 {
        self.lhs.stderr.hypot(self.rhs.stderr)
    }

    /// Either side's error exceeds 10% of `|D|`.
    pub fn inconclusive(&self) -> bool {
        let d = self.defect().abs();
        self.lhs.stderr > 0.1 * d || self.rhs.stderr > 0.1 * d
    }
}

/// Shape of the right-hand side, for a candidate constant `c`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum BoundShape {
    /// `c e^{δ‖η‖^{2α}} (dist² + e^{−τ₀t} G dist)`.
    Segment { tau0: f64, grad_log: f64 },
    /// `c(K₁e^{ct}+1) dist² + c e^{−τ₀t} G dist`.
    Law { tau0: f64, grad_log: f64, k1: f64 },
}

impl BoundShape {
    pub fn bound(&self, c: f64, p: &DefectPoint) -> f64 {
        match *self {
            BoundShape::Segment { tau0, grad_log } => {
                c * p.weight * (p.dist * p.dist + (-tau0 * p.t).exp() * grad_log * p.dist)
            }
            BoundShape::Law { tau0, grad_log, k1 } => {
                let c0 = c * (k1 * (c * p.t).min(700.0).exp() + 1.0);
                c0 * p.dist * p.dist + c * (-tau0 * p.t).exp() * grad_log * p.dist
            }
        }
    }

    /// Smallest `c` satisfying every training point (infinite if none works).
    pub fn fit(&self, points: &[DefectPoint]) -> f64 {
        let train: Vec<&DefectPoint> = points.iter().filter(|p| p.training).collect();
        bisect_min(|c| train.iter().all(|p| p.defect() <= self.bound(c, p)), 1e6).unwrap_or(f64::INFINITY)
    }
}

/// Outcome of the held-out validation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Validation {
    pub c: f64,
    pub violations: usize,
    pub conclusive: usize,
    pub checked: usize,
    /// Largest `(D − bound)/stderr` over held-out points.
    pub worst_excess: f64,
}

impl Validation {
    pub fn verdict(&self) -> Verdict {
        if self.violations > 0 || !self.c.is_finite() {
            Verdict::Fail
        } else if self.conclusive == 0 && self.checked > 0 {
            Verdict::Inconclusive
        } else {
            Verdict::Pass
        }
    }
}

pub fn validate(shape: &BoundShape, points: &[DefectPoint]) -> Validation {
    let c = shape.fit(points);
    let mut v = Validation {
        c,
        violations: 0,
        conclusive: 0,
        checked: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    for p in points.iter().filter(|p| !p.training) {
        v.checked += 1;
        if !p.inconclusive() {
            v.conclusive += 1;
        }
        let b = shape.bound(c, p);
        let se = p.stderr();
        if p.defect() > b + 3.0 * se {
            v.violations += 1;
        }
        let ex = if se > 0.0 {
            (p.defect() - b) / se
        } else if p.defect() > b {
            f64::INFINITY
        } else {
            f64::NEG_INFINITY
        };
        v.worst_excess = v.worst_excess.max(ex);
    }
    v
}

/// Excess `D(t) − D∞` combined over pairs with fitted decay rate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExcessFit {
    pub times: Vec<f64>,
    pub excess: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Points entering the fit (the first censored one included).
    pub used: usize,
    pub rate: f64,
    pub rate_stderr: f64,
    pub threshold: f64,
}

impl ExcessFit {
    pub fn verdict(&self) -> Verdict {
        if self.used < 2 {
            Verdict::Inconclusive
        } else {
            Verdict::from_bool(self.rate <= self.threshold + 2.0 * self.rate_stderr)
        }
    }
}

/// Combine the excesses of all pairs, each with the sign it has at the first
/// time, and fit `log` of the combination against `t`. Points below three
/// standard errors are censored at that level; only the first enters.
pub fn excess_fit(points: &[DefectPoint], times: &[f64], d_inf: Estimate, tau0: f64) -> ExcessFit {
    let first_t = times[0];
    let mut keys: Vec<(f64, bool, bool)> = points
        .iter()
        .map(|p| (p.shift, p.xi_shifted, p.training))
        .collect();
    keys.sort_by(|a, b| a.partial_cmp(b).expect("finite shifts"));
    keys.dedup();
    let find = |k: &(f64, bool, bool), t: f64| {
        points
            .iter()
            .find(|p| (p.shift, p.xi_shifted, p.training) == *k && (p.t - t).abs() < 1e-9)
    };
    let signs: Vec<f64> = keys
        .iter()
        .map(|k| match find(k, first_t) {
            Some(p) if p.defect() - d_inf.mean < 0.0 => -1.0,
            _ => 1.0,
        })
        .collect();
    let n = keys.len() as f64;
    let mean_sign = signs.iter().sum::<f64>() / n;
    let mut excess = Vec::new();
    let mut stderr = Vec::new();
    for &t in times {
        let mut sum = 0.0;
        let mut var = 0.0;
        for (k, s) in keys.iter().zip(&signs) {
            if let Some(p) = find(k, t) {
                sum += s * (p.defect() - d_inf.mean);
                var += p.stderr().powi(2);
            }
        }
        excess.push(sum / n);
        stderr.push(((var / (n * n)) + (mean_sign * d_inf.stderr).powi(2)).sqrt());
    }
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ses = Vec::new();
    for ((t, e), se) in times.iter().zip(&excess).zip(&stderr) {
        let floor = 3.0 * se;
        if *e >= floor && *e > 0.0 {
            xs.push(*t);
            ys.push(e.ln());
            ses.push(se / e);
        } else {
            if floor > 0.0 {
                xs.push(*t);
                ys.push(floor.ln());
                ses.push(1.0 / 3.0);
            }
            break;
        }
    }
    let used = xs.len();
    let (rate, rate_stderr) = if used >= 2 {
        let f = ols(&xs, &ys, Some(&ses));
        (f.slope, f.slope_stderr)
    } else {
        (f64::NAN, f64::NAN)
    };
    ExcessFit {
        times: times.to_vec(),
        excess,
        stderr,
        used,
        rate,
        rate_stderr,
        threshold: -tau0,
    }
}

/// All defects of one mode together with the stationary reference.
#[derive(Debug, Clone)]
pub struct DefectSet {
    pub points: Vec<DefectPoint>,
    pub d_inf: Estimate,
    pub times: Vec<f64>,
}

/// Shifts, the training flag for each, and the start built for a shift.
fn shift_list() -> Vec<(f64, bool)> {
    let mut v: Vec<(f64, bool)> = TRAINING_SHIFTS.iter().map(|s| (*s, true)).collect();
    v.extend(HELD_OUT_SHIFTS.iter().map(|s| (*s, false)));
    v
}

struct Seeds {
    lhs: u64,
    rhs: u64,
    lhs_long: u64,
    rhs_long: u64,
}

fn seeds(cfg: &ExperimentConfig) -> Seeds {
    Seeds {
        lhs: cfg.seed.wrapping_add(10),
        rhs: cfg.seed.wrapping_add(11),
        lhs_long: cfg.seed.wrapping_add(12),
        rhs_long: cfg.seed.wrapping_add(13),
    }
}

/// Simulate every distinct start once per seed and assemble the defects.
#[allow(clippy::too_many_arguments)]
fn defects<B, W>(
    cfg: &ExperimentConfig,
    model: &Model,
    f: &TestFunction,
    times: &[f64],
    n: usize,
    build: B,
    weight: W,
) -> Result<DefectSet>
where
    B: Fn(f64) -> Result<Start>,
    W: Fn(&Start) -> f64,
{
    let path = model.coefficients().path;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let grid = TimeGrid::new(&path, t_max, cfg.save_dt.min(t_max))?;
    let targets = times_on(&grid, times)?;
    let s = seeds(cfg);
    let base = build(0.0)?;
    let base_side = side(model, &base, &grid, (s.lhs, s.rhs), n, &targets, f)?;
    let mut points = Vec::new();
    for (shift, training) in shift_list() {
        let moved = build(shift)?;
        let moved_side = side(model, &moved, &grid, (s.lhs, s.rhs), n, &targets, f)?;
        let dist = shift;
        // (ξ, η) = (moved, base) and (base, moved)
        for (xi_side, eta_side, eta_start, xi_shifted) in [
            (&moved_side, &base_side, &base, true),
            (&base_side, &moved_side, &moved, false),
        ] {
            for (k, &t) in times.iter().enumerate() {
                points.push(DefectPoint {
                    training,
                    shift,
                    xi_shifted,
                    t,
                    lhs: eta_side.mean_log[k],
                    rhs: xi_side.log_mean[k],
                    dist,
                    weight: weight(eta_start),
                });
            }
        }
    }
    // stationary Jensen gap from a run to twice the horizon
    let long = TimeGrid::new(&path, 2.0 * t_max, 2.0 * t_max)?;
    let long_side = side(model, &base, &long, (s.lhs_long, s.rhs_long), n, &[1], f)?;
    let d_inf = Estimate {
        mean: long_side.mean_log[0].mean - long_side.log_mean[0].mean,
        stderr: long_side.mean_log[0].stderr.hypot(long_side.log_mean[0].stderr),
        n,
    };
    Ok(DefectSet {
        points,
        d_inf,
        times: times.to_vec(),
    })
}

/// Path-mode defects from `base` and its shifts.
pub fn segment_defects(cfg: &ExperimentConfig, model: &Model, f: &TestFunction, times: &[f64]) -> Result<DefectSet> {
    let path = model.coefficients().path;
    let base = base_segment(&path);
    let alpha = model.coefficients().alpha;
    defects(
        cfg,
        model,
        f,
        times,
        cfg.n_replicas,
        |s| Ok(Start::Segment(shifted(&base, s))),
        |st| match st {
            Start::Segment(eta) => moment_weight(cfg.delta, alpha, eta.weighted_norm()),
            Start::Law(_) => 1.0,
        },
    )
}

/// Law-mode defects from translated bridge laws with `n_replicas` particles.
/// The pairs are exact translates, so `W_{2+ε}(μ, ν)` equals the shift.
pub fn law_defects(cfg: &ExperimentConfig, model: &Model, f: &TestFunction, times: &[f64]) -> Result<DefectSet> {
    let path = model.coefficients().path;
    let law_seed = cfg.seed.wrapping_add(20);
    defects(
        cfg,
        model,
        f,
        times,
        cfg.n_replicas,
        |s| {
            Ok(Start::Law(bridge_cloud(
                &path,
                cfg.n_replicas,
                LAW_SCALE,
                LAW_OFFSET + s,
                law_seed,
            )?))
        },
        |_| 1.0,
    )
}

/// Largest `|D_path − D_law|` between path mode and point-mass law mode on
/// the first training pair, for the coefficients without law coupling.
pub fn point_mass_agreement(cfg: &ExperimentConfig, f: &TestFunction, times: &[f64]) -> Result<f64> {
    let coeffs = cfg.coefficient_set()?.with_law_coupling(0.0);
    let model = Model::prepare(cfg, coeffs)?;
    let path = model.coefficients().path;
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    let grid = TimeGrid::new(&path, t_max, cfg.save_dt.min(t_max))?;
    let targets = times_on(&grid, times)?;
    let s = seeds(cfg);
    let eta = base_segment(&path);
    let xi = shifted(&eta, TRAINING_SHIFTS[0]);
    let n = cfg.n_replicas;
    let seg_l = summarize(&sample_log_f(&model, &eta, &grid, s.lhs, n, &targets, f)?, true);
    let seg_r = summarize(&sample_log_f(&model, &xi, &grid, s.rhs, n, &targets, f)?, false);
    let law_l = summarize(
        &sample_log_f_law(&model, &point_mass_cloud(&eta, n)?, &grid, s.lhs, &targets, f)?,
        true,
    );
    let law_r = summarize(
        &sample_log_f_law(&model, &point_mass_cloud(&xi, n)?, &grid, s.rhs, &targets, f)?,
        false,
    );
    let mut worst = 0.0f64;
    for k in 0..targets.len() {
        let a = seg_l[k].mean - seg_r[k].mean;
        let b = law_l[k].mean - law_r[k].mean;
        worst = worst.max((a - b).abs());
    }
    Ok(worst)
}

fn defect_table(file: &str, set: &DefectSet, shape: &BoundShape, c: f64) -> Table {
    let mut t = Table::new(
        file,
        &[
            "set", "shift", "xi_shifted", "t", "lhs", "lhs_se", "rhs", "rhs_se", "defect", "defect_se", "bound",
            "inconclusive",
        ],
    );
    for p in &set.points {
        t.push(vec![
            if p.training { "train" } else { "held_out" }.into(),
            num(p.shift),
            p.xi_shifted.to_string(),
            num(p.t),
            num(p.lhs.mean),
            num(p.lhs.stderr),
            num(p.rhs.mean),
            num(p.rhs.stderr),
            num(p.defect()),
            num(p.stderr()),
            num(if c.is_finite() { shape.bound(c, p) } else { f64::INFINITY }),
            p.inconclusive().to_string(),
        ]);
    }
    t
}

fn excess_table(file: &str, e: &ExcessFit) -> Table {
    let mut t = Table::new(file, &["t", "excess", "stderr", "in_fit"]);
    for (k, ((tt, x), se)) in e.times.iter().zip(&e.excess).zip(&e.stderr).enumerate() {
        t.push(vec![num(*tt), num(*x), num(*se), (k < e.used).to_string()]);
    }
    t
}

/// Times of [`ALH_TIMES`] within the configured horizon.
pub fn alh_times(cfg: &ExperimentConfig) -> Vec<f64> {
    ALH_TIMES
        .iter()
        .cloned()
        .filter(|t| *t <= cfg.t_end + 1e-9)
        .collect()
}

/// Checks of one mode, appended to `checks`/`tables`.
fn mode_checks(
    prefix: &str,
    statement: &str,
    set: &DefectSet,
    shape: &BoundShape,
    tau0: f64,
    checks: &mut Vec<Check>,
    tables: &mut Vec<Table>,
    constants: &mut Vec<(String, f64)>,
) {
    let v = validate(shape, &set.points);
    let inconclusive = set.points.iter().filter(|p| p.inconclusive()).count();
    checks.push(Check::new(
        &format!("{prefix}.held_out"),
        statement,
        v.verdict(),
        format!(
            "c={:.4e}; {} violations among {} held-out points ({} conclusive); worst excess {:.2} stderr; {} inconclusive points overall",
            v.c, v.violations, v.checked, v.conclusive, v.worst_excess, inconclusive
        ),
    ));
    let e = excess_fit(&set.points, &set.times, set.d_inf, tau0);
    checks.push(Check::new(
        &format!("{prefix}.excess_decay"),
        "log-Harnack excess decays like e^{-tau0 t}",
        e.verdict(),
        format!(
            "rate={:.4} +- {:.4} vs -tau0={:.4}; {} points in fit; D_inf={:.4e} +- {:.1e}",
            e.rate, e.rate_stderr, e.threshold, e.used, set.d_inf.mean, set.d_inf.stderr
        ),
    ));
    constants.push((format!("{prefix}_c"), v.c));
    constants.push((format!("{prefix}_excess_rate"), e.rate));
    constants.push((format!("{prefix}_excess_rate_stderr"), e.rate_stderr));
    constants.push((format!("{prefix}_d_inf"), set.d_inf.mean));
    tables.push(defect_table(&format!("{prefix}_defects.csv"), set, shape, v.c));
    tables.push(excess_table(&format!("{prefix}_excess.csv"), &e));
}

pub fn run_alh(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    let model = Model::prepare(cfg, cfg.coefficient_set()?)?;
    run_alh_with(cfg, &model, &TestFunction::from_config(cfg))
}

pub fn run_alh_with(cfg: &ExperimentConfig, model: &Model, f: &TestFunction) -> Result<Report> {
    let path = model.coefficients().path;
    f.check(&path)?;
    let times = alh_times(cfg);
    if times.len() < 2 {
        return Err(Error::Config("horizon must reach t = 2 for the log-Harnack check".into()));
    }
    let grad_log = f.grad_log_bound(&path);
    let mut meta = meta(cfg, model, cfg.n_replicas, cfg.n_replicas);
    meta.constants.push(("grad_log_f".into(), grad_log));
    let mut checks = Vec::new();
    let mut tables = Vec::new();

    // path mode uses the frozen law: the coefficients with K₁ = 0
    let seg = segment_defects(cfg, model, f, &times)?;
    let shape = BoundShape::Segment {
        tau0: cfg.tau0,
        grad_log,
    };
    mode_checks(
        "alh_path",
        "asymptotic log-Harnack inequality for segments",
        &seg,
        &shape,
        cfg.tau0,
        &mut checks,
        &mut tables,
        &mut meta.constants,
    );

    let coeffs = model.coefficients();
    if coeffs.law_dependent() {
        let law = law_defects(cfg, model, f, &times)?;
        let shape = BoundShape::Law {
            tau0: cfg.tau0,
            grad_log,
            k1: coeffs.k1,
        };
        mode_checks(
            "alh_law",
            "asymptotic log-Harnack inequality for laws",
            &law,
            &shape,
            cfg.tau0,
            &mut checks,
            &mut tables,
            &mut meta.constants,
        );
        meta.notes
            .push("law-mode pairs are exact translates: W_{2+eps}(mu,nu) equals the shift".into());
    }

    let gap = point_mass_agreement(cfg, f, &times)?;
    checks.push(Check::new(
        "alh.point_mass",
        "point-mass laws with K1 = 0 reproduce the segment inequality",
        Verdict::from_bool(gap <= 1e-12),
        format!("max |D_path - D_law| = {gap:.3e}"),
    ));
    Ok(Report {
        experiment: "alh".into(),
        meta,
        checks,
        tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(training: bool, t: f64, lhs: f64, rhs: f64, se: f64) -> DefectPoint {
        DefectPoint {
            training,
            shift: 0.1,
            xi_shifted: true,
            t,
            lhs: Estimate { mean: lhs, stderr: se, n: 10 },
            rhs: Estimate { mean: rhs, stderr: se, n: 10 },
            dist: 0.5,
            weight: 1.0,
        }
    }

    #[test]
    fn constant_function_has_zero_defect() {
        let cfg = ExperimentConfig {
            t_mem: 2.0,
            h: 0.05,
            t_end: 2.0,
            n_replicas: 16,
            ..ExperimentConfig::default()
        };
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let set = segment_defects(&cfg, &model, &TestFunction::constant(), &[1.0, 2.0]).unwrap();
        assert!(set.points.iter().all(|p| p.defect() == 0.0));
        let shape = BoundShape::Segment { tau0: 0.5, grad_log: 0.0 };
        let v = validate(&shape, &set.points);
        assert_eq!(v.c, 0.0);
        assert_eq!(v.verdict(), Verdict::Pass);
    }

    #[test]
    fn identical_starts_obey_jensen() {
        let cfg = ExperimentConfig {
            t_mem: 2.0,
            h: 0.05,
            n_replicas: 400,
            ..ExperimentConfig::default()
        };
        let model = Model::prepare(&cfg, cfg.coefficient_set().unwrap()).unwrap();
        let f = TestFunction::new(1.0, 1.0, 0.0, 2.0);
        let path = cfg.path().unwrap();
        let grid = TimeGrid::new(&path, 1.0, 1.0).unwrap();
        let eta = base_segment(&path);
        // same seed on both sides: exact Jensen gap, never positive
        let s = sample_log_f(&model, &eta, &grid, 3, 400, &[1], &f).unwrap();
        let lhs = summarize(&s, true)[0].mean;
        let rhs = summarize(&s, false)[0].mean;
        assert!(lhs <= rhs);
    }

    #[test]
    fn fit_and_validation() {
        let shape = BoundShape::Segment { tau0: 0.5, grad_log: 1.0 };
        let pts = vec![point(true, 1.0, 0.3, 0.1, 0.001), point(false, 1.0, 0.2, 0.1, 0.001)];
        let v = validate(&shape, &pts);
        let expect = 0.2 / (0.25 + (-0.5f64).exp() * 0.5);
        assert!((v.c - expect).abs() < 1e-9);
        assert_eq!(v.verdict(), Verdict::Pass);
        let bad = vec![point(true, 1.0, 0.3, 0.1, 0.001), point(false, 1.0, 0.9, 0.1, 0.001)];
        assert_eq!(validate(&shape, &bad).verdict(), Verdict::Fail);
        let noisy = vec![point(true, 1.0, 0.3, 0.1, 0.001), point(false, 1.0, 0.11, 0.1, 0.05)];
        assert_eq!(validate(&shape, &noisy).verdict(), Verdict::Inconclusive);
    }

    #[test]
    fn law_shape_grows_with_k1() {
        let p = point(true, 2.0, 0.3, 0.1, 0.0);
        let a = BoundShape::Law { tau0: 0.5, grad_log: 1.0, k1: 0.0 };
        let b = BoundShape::Law { tau0: 0.5, grad_log: 1.0, k1: 1.0 };
        assert!(b.bound(0.3, &p) > a.bound(0.3, &p));
        assert!(b.fit(&[p]) < a.fit(&[p]));
    }

    #[test]
    fn excess_fit_recovers_rate() {
        let times = [1.0, 2.0, 4.0, 8.0];
        let d_inf = Estimate { mean: -0.1, stderr: 0.0, n: 1 };
        let pts: Vec<DefectPoint> = times
            .iter()
            .map(|&t| point(true, t, -0.1 + (-t as f64).exp(), 0.0, 1e-6))
            .collect();
        let e = excess_fit(&pts, &times, d_inf, 0.5);
        assert_eq!(e.used, 4);
        assert!((e.rate + 1.0).abs() < 1e-6);
        assert_eq!(e.verdict(), Verdict::Pass);
        // censoring: only the first sub-threshold point enters
        let pts: Vec<DefectPoint> = times
            .iter()
            .map(|&t| point(true, t, -0.1 + (-3.0 * t as f64).exp(), 0.0, 1e-4))
            .collect();
        let e = excess_fit(&pts, &times, d_inf, 0.5);
        assert_eq!(e.used, 3);
    }
}

//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero when any criterion fails. Runs the experiments at their default
//! (full) scale, so expect it to take a while.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use alh_core::coefficients::{random_segment, CoefficientSet, BUILTIN_NAMES};
use alh_core::experiments::model::zvonkin_map;
use alh_core::experiments::{alh, decay, gradient, growth, transform, ExperimentConfig, Report, Verdict};
use alh_core::pathspace::{check_history_inequality, PathSegment, PathSpaceConfig};
use alh_core::rng::{NoiseStream, StreamKey};
use alh_core::simulate::{
    coupled_q_replicas, simulate_coupled_p, simulate_coupled_q, CouplingParams, LawPath, LawSummary, ParticleCloud,
    TimeGrid,
};
use alh_core::stats::Estimate;
use alh_core::wasserstein::{wk_full, wk_truncated};
use alh_core::{par, Result};

// pinned tolerances and budgets
const PATH_SAMPLES: usize = 1000;
const PATH_POWERS: [f64; 4] = [0.5, 1.0, 2.0, 4.0];
const RESIDUAL_TOL: f64 = 1e-8;
const ROUND_TRIP_TOL: f64 = 1e-10;
const GIRSANOV_REPLICAS: usize = 10_000;
const CLOSED_FORM_REL: f64 = 0.02;
const OT_CLOUDS: usize = 100;
const OT_MAX_SIZE: usize = 8;
const OT_EXACT: f64 = 1e-10;

struct Outcome {
    pass: bool,
    detail: String,
}

fn minutes(m: u64) -> Duration {
    Duration::from_secs(60 * m)
}

fn criterion(id: usize, name: &str, budget: Duration, body: impl FnOnce() -> Result<Outcome>) -> bool {
    let start = Instant::now();
    let out = body().unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
    });
    let took = start.elapsed();
    let in_time = took <= budget;
    let pass = out.pass && in_time;
    println!(
        "{} {id} {name}: {} [{:.1}s of {}s{}]",
        if pass { "PASS" } else { "FAIL" },
        out.detail,
        took.as_secs_f64(),
        budget.as_secs(),
        if in_time { "" } else { ", over budget" }
    );
    pass
}

fn cfg_for(name: &str) -> ExperimentConfig {
    ExperimentConfig::default().with_coefficients(name)
}

/// Every named check of `report` that matches `prefix` must pass; returns
/// the names that did not.
fn failing(report: &Report, prefix: &str) -> Vec<String> {
    report
        .checks
        .iter()
        .filter(|c| c.name.starts_with(prefix) && c.verdict != Verdict::Pass)
        .map(|c| format!("{}={} ({})", c.name, c.verdict.label(), c.detail))
        .collect()
}

fn collect(bad: Vec<String>, ok: String) -> Outcome {
    if bad.is_empty() {
        Outcome { pass: true, detail: ok }
    } else {
        Outcome {
            pass: false,
            detail: bad.join("; "),
        }
    }
}

fn path_space() -> Result<Outcome> {
    let cfg = PathSpaceConfig::new(2, 1.0, 0.01, 4.0)?;
    let mut rng = NoiseStream::new(StreamKey::new(101, 0, 0));
    let mut bad = Vec::new();
    for p in PATH_POWERS {
        let mut fails = [0usize; 4];
        for _ in 0..PATH_SAMPLES {
            let a = random_segment(&cfg, &mut rng, 1.0, 0.25);
            let b = random_segment(&cfg, &mut rng, 1.0, 0.25);
            let c = 4.0 * rng.uniform() - 2.0;
            let na = a.weighted_norm();
            if (a.scale(c).weighted_norm() - c.abs() * na).abs() > 1e-12 * (1.0 + na) {
                fails[0] += 1;
            }
            let sum = a.lincomb(1.0, &b, 1.0)?.weighted_norm();
            if sum > na + b.weighted_norm() + 1e-12 {
                fails[1] += 1;
            }
            let mut prev = 0.0;
            for k in 1..=8 {
                let t = a.truncated_norm(0.5 * k as f64)?;
                if t + 1e-14 < prev || t > na + 1e-14 {
                    fails[2] += 1;
                    break;
                }
                prev = t;
            }
            let mut x = a.endpoint().to_vec();
            let future: Vec<Vec<f64>> = (0..200)
                .map(|_| {
                    for v in x.iter_mut() {
                        *v += 0.1 * rng.normal();
                    }
                    x.clone()
                })
                .collect();
            if !check_history_inequality(&a, &future, p) {
                fails[3] += 1;
            }
        }
        if fails.iter().any(|f| *f > 0) {
            bad.push(format!(
                "p={p}: homogeneity {} triangle {} truncation {} history {}",
                fails[0], fails[1], fails[2], fails[3]
            ));
        }
    }
    Ok(collect(bad, format!("{PATH_SAMPLES} paths for each p in {PATH_POWERS:?}")))
}

fn zvonkin_suite() -> Result<Outcome> {
    let mut bad = Vec::new();
    let mut solved = Vec::new();
    for name in BUILTIN_NAMES {
        let cfg = cfg_for(name);
        let coeffs = cfg.coefficient_set()?;
        if coeffs.b0.is_zero() {
            solved.push(format!("{name} identity"));
            continue;
        }
        let map = zvonkin_map(&cfg, &coeffs)?;
        let b0 = coeffs.b0.sup_norm();
        let dx = map.grid.dx;
        if map.residual > RESIDUAL_TOL * (1.0 + b0) {
            bad.push(format!("{name}: residual {:.3e}", map.residual));
        }
        if map.norms.u_sup > b0 / map.lambda + 10.0 * dx * dx {
            bad.push(format!("{name}: |u| = {:.4e} above |b0|/lambda", map.norms.u_sup));
        }
        if map.norms.smallness() > 0.5 {
            bad.push(format!("{name}: |u|+|grad u| = {:.4}", map.norms.smallness()));
        }
        let rt = transform::round_trip_error(&map, 1000, cfg.seed)?;
        if rt > ROUND_TRIP_TOL {
            bad.push(format!("{name}: round trip {rt:.3e}"));
        }
        solved.push(format!(
            "{name} lambda={:.3} |u|+|grad u|={:.3} round trip {rt:.1e}",
            map.lambda,
            map.norms.smallness()
        ));
    }
    Ok(collect(bad, solved.join(", ")))
}

fn consistency_suite() -> Result<Outcome> {
    let mut bad = Vec::new();
    let mut seen = Vec::new();
    for name in BUILTIN_NAMES {
        let r = transform::run_zvonkin(&cfg_for(name))?;
        if let Some(c) = r.check("zvonkin.consistency") {
            if c.verdict != Verdict::Pass {
                bad.push(format!("{name}: {}", c.detail));
            }
            seen.push(format!("{name}: {}", c.detail));
        }
    }
    if seen.is_empty() {
        bad.push("no configuration carries a singular drift".into());
    }
    Ok(collect(bad, seen.join("; ")))
}

fn girsanov_suite() -> Result<Outcome> {
    let path = PathSpaceConfig::new(1, 1.0, 0.01, 1.0)?;
    let linear = CoefficientSet::linear(path);
    let grid = TimeGrid::new(&path, 1.0, 1.0)?;
    let law = LawPath::Static(LawSummary::zero(1));
    let xi = PathSegment::constant(path, &[0.5])?;
    let eta = PathSegment::constant(path, &[0.0])?;
    let mut bad = Vec::new();

    let zero = simulate_coupled_p(&linear, &xi, &eta, &law, &CouplingParams::new(0.0), &grid, StreamKey::new(1, 0, 0))?;
    if zero.log_r.iter().any(|l| *l != 0.0) {
        bad.push("kappa=0 gives R != 1".into());
    }

    let kappa = 2.0;
    let p_runs: Vec<_> = par::map_indexed(GIRSANOV_REPLICAS, |r| {
        simulate_coupled_p(&linear, &xi, &eta, &law, &CouplingParams::new(kappa), &grid, StreamKey::new(5, r as u64, 0))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let weights: Vec<f64> = p_runs.iter().map(|x| x.log_r[1].exp()).collect();
    let mean_r = Estimate::from_samples(&weights);
    if (mean_r.mean - 1.0).abs() > 3.0 * mean_r.stderr {
        bad.push(format!("E[R] = {:.4} +- {:.4}", mean_r.mean, mean_r.stderr));
    }
    let rlogr: Vec<f64> = p_runs.iter().map(|x| x.log_r[1].exp() * x.log_r[1]).collect();
    let lhs = Estimate::from_samples(&rlogr);
    let q: Vec<f64> = coupled_q_replicas(&linear, &xi, &eta, &law, &CouplingParams::new(kappa), &grid, 6, GIRSANOV_REPLICAS)
        .into_iter()
        .map(|r| r.map(|r| r.half_int_gamma_sq[1]))
        .collect::<Result<_>>()?;
    let rhs = Estimate::from_samples(&q);
    let se = lhs.stderr.hypot(rhs.stderr);
    if (lhs.mean - rhs.mean).abs() > 3.0 * se {
        bad.push(format!("E[R log R] = {:.4} vs E_Q entropy {:.4} (se {se:.4})", lhs.mean, rhs.mean));
    }

    let fine = PathSpaceConfig::new(1, 1.0, 1e-3, 1.0)?;
    let bm = CoefficientSet::brownian(fine);
    let kappa = 4.0;
    let z0 = 0.5;
    let fine_grid = TimeGrid::new(&fine, 2.0, 0.5)?;
    let run = simulate_coupled_q(
        &bm,
        &PathSegment::constant(fine, &[z0])?,
        &PathSegment::constant(fine, &[0.0])?,
        &law,
        &CouplingParams::new(kappa),
        &fine_grid,
        StreamKey::new(2, 0, 0),
    )?;
    let mut worst = 0.0f64;
    for (t, h) in run.times.iter().zip(&run.half_int_gamma_sq).skip(1) {
        let exact = kappa / 4.0 * (1.0 - (-2.0 * kappa * t).exp()) * z0 * z0;
        worst = worst.max((h - exact).abs() / exact);
    }
    if worst > CLOSED_FORM_REL {
        bad.push(format!("closed-form entropy off by {:.2}%", 100.0 * worst));
    }
    Ok(collect(
        bad,
        format!(
            "E[R]={:.4}+-{:.4}, E[RlogR]={:.4} vs {:.4}, closed form within {:.3}%",
            mean_r.mean,
            mean_r.stderr,
            lhs.mean,
            rhs.mean,
            100.0 * worst
        ),
    ))
}

fn per_builtin(
    run: impl Fn(&ExperimentConfig) -> Result<Report>,
    prefixes: &[&str],
    names: &[&str],
) -> Result<Outcome> {
    let mut bad = Vec::new();
    for name in names {
        let r = run(&cfg_for(name))?;
        for p in prefixes {
            bad.extend(failing(&r, p).into_iter().map(|s| format!("{name}: {s}")));
        }
    }
    Ok(collect(bad, format!("configurations {names:?}")))
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn ot_oracle() -> Result<Outcome> {
    let cfg = PathSpaceConfig::new(1, 1.0, 0.05, 2.0)?;
    let mut rng = NoiseStream::new(StreamKey::new(606, 0, 0));
    let cloud = |rng: &mut NoiseStream, n: usize| {
        ParticleCloud::uniform((0..n).map(|_| random_segment(&cfg, rng, 1.0, 0.25)).collect())
    };
    let k = 2.0;
    let mut worst = 0.0f64;
    for i in 0..OT_CLOUDS {
        let n = 1 + i % OT_MAX_SIZE;
        let level = 0.25 * (1 + i % 8) as f64;
        let a = cloud(&mut rng, n)?;
        let b = cloud(&mut rng, n)?;
        let mut cost = vec![0.0; n * n];
        for (x, pa) in a.particles().iter().enumerate() {
            for (y, pb) in b.particles().iter().enumerate() {
                cost[x * n + y] = pa.sub(pb)?.truncated_norm(level)?.powf(k);
            }
        }
        let best = permutations(n)
            .iter()
            .map(|p| p.iter().enumerate().map(|(x, &y)| cost[x * n + y]).sum::<f64>())
            .fold(f64::INFINITY, f64::min)
            / n as f64;
        let w = wk_truncated(&a, &b, k, level)?;
        worst = worst.max((w.powf(k) - best).abs());
    }
    let mut bad = Vec::new();
    if worst > OT_EXACT {
        bad.push(format!("assignment off brute force by {worst:.3e}"));
    }
    let mut axiom_fails = 0;
    for _ in 0..OT_CLOUDS {
        let n = 1 + (rng.uniform() * 6.0) as usize;
        let a = cloud(&mut rng, n)?;
        let b = cloud(&mut rng, n)?;
        let c = cloud(&mut rng, n)?;
        let ab = wk_full(&a, &b, k)?;
        let ba = wk_full(&b, &a, k)?;
        let bc = wk_full(&b, &c, k)?;
        let ac = wk_full(&a, &c, k)?;
        let aa = wk_full(&a, &a, k)?;
        if aa != 0.0 || (ab - ba).abs() > 1e-12 || ac > ab + bc + 1e-12 || ab < 0.0 {
            axiom_fails += 1;
        }
    }
    if axiom_fails > 0 {
        bad.push(format!("metric axioms failed on {axiom_fails} triples"));
    }
    Ok(collect(
        bad,
        format!("max |W^k - brute force| = {worst:.3e} over {OT_CLOUDS} clouds; axioms on {OT_CLOUDS} triples"),
    ))
}

fn main() -> ExitCode {
    let mut all = true;
    all &= criterion(1, "path-space norms and history inequality", Duration::from_secs(10), path_space);

    all &= criterion(2, "Zvonkin resolvent, bounds and inverse", minutes(1), zvonkin_suite);
    all &= criterion(3, "transform consistency", minutes(10), consistency_suite);
    all &= criterion(4, "Girsanov weights and entropy", minutes(5), girsanov_suite);
    all &= criterion(5, "exponential decay of the coupled difference", minutes(15), || {
        per_builtin(decay::run_decay, &["decay.p"], &BUILTIN_NAMES)
    });
    all &= criterion(6, "optimal transport oracle", Duration::from_secs(30), ot_oracle);
    all &= criterion(7, "asymptotic log-Harnack inequality", minutes(30), || {
        per_builtin(alh::run_alh, &["alh_path.", "alh_law.", "alh.point_mass"], &BUILTIN_NAMES)
    });
    all &= criterion(8, "W2 growth between particle systems", minutes(30), || {
        per_builtin(growth::run_growth, &["growth.n", "growth.doubling"], &BUILTIN_NAMES)
    });
    all &= criterion(9, "gradient estimate", minutes(10), || {
        per_builtin(gradient::run_gradient, &["gradient.f"], &BUILTIN_NAMES)
    });

    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

//! The Zvonkin map of a configuration and the consistency of simulating
//! through it.

use serde::Serialize;

use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::pathspace::PathSegment;
use crate::rng::{NoiseStream, StreamKey};
use crate::simulate::{simulate_paths, LawPath, LawSummary, TimeGrid};
use crate::stats::Estimate;
use crate::wasserstein::w1_sorted;
use crate::zvonkin::ZvonkinMap;

use super::config::ExperimentConfig;
use super::decay::meta;
use super::laws::base_segment;
use super::model::{zvonkin_map, Model};
use super::report::{num, Check, Report, Table, Verdict};

/// Horizon, step and path count of the consistency check.
pub const CONSISTENCY_T: f64 = 1.0;
pub const CONSISTENCY_H: f64 = 1e-3;
pub const CONSISTENCY_PATHS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Consistency {
    pub w1: f64,
    /// `3 sd/√n + 5h`.
    pub tolerance: f64,
    pub sd: f64,
    pub n: usize,
    pub h: f64,
}

impl Consistency {
    pub fn pass(&self) -> bool {
        self.w1 <= self.tolerance
    }
}

/// Endpoint `W₁` at `t_end` between the direct simulation of `coeffs` and the
/// transformed simulation mapped back through `Θ⁻¹`. Both use the same
/// Brownian increments path by path. First coordinate only when `d > 1`.
pub fn transform_consistency(
    coeffs: &CoefficientSet,
    map: &ZvonkinMap,
    start: &PathSegment,
    t_end: f64,
    n: usize,
    seed: u64,
) -> Result<Consistency> {
    let model = Model::Transformed(Box::new(crate::zvonkin::transformed_coeffs(map, coeffs)?));
    let path = coeffs.path;
    let grid = TimeGrid::new(&path, t_end, t_end)?;
    let law = LawPath::Static(LawSummary::zero(path.d));
    let first = |r: Vec<Result<Vec<f64>>>| -> Result<Vec<f64>> {
        r.into_iter().map(|v| v.map(|x| x[1])).collect()
    };
    let direct = first(simulate_paths(coeffs, start, &law, &grid, n, seed, |st| {
        st.original_endpoint()[0]
    }))?;
    let mapped = first(simulate_paths(&model, start, &law, &grid, n, seed, |st| {
        st.original_endpoint()[0]
    }))?;
    let e = Estimate::from_samples(&direct);
    let sd = e.stderr * (n as f64).sqrt();
    Ok(Consistency {
        w1: w1_sorted(&direct, &mapped)?,
        tolerance: 3.0 * sd / (n as f64).sqrt() + 5.0 * path.h,
        sd,
        n,
        h: path.h,
    })
}

/// Largest `|Θ(Θ⁻¹(y)) − y|` over `n` points drawn uniformly in the inner
/// 90% of the box.
pub fn round_trip_error(map: &ZvonkinMap, n: usize, seed: u64) -> Result<f64> {
    let mut rng = NoiseStream::new(StreamKey::new(seed, 0, 0));
    let l = 0.9 * map.grid.half_width;
    let mut worst = 0.0f64;
    for _ in 0..n {
        let y: Vec<f64> = (0..map.d).map(|_| l * (2.0 * rng.uniform() - 1.0)).collect();
        let x = map.theta_inv(&y)?;
        let back = map.theta(&x)?;
        for (a, b) in back.iter().zip(&y) {
            worst = worst.max((a - b).abs());
        }
    }
    Ok(worst)
}

fn csv_table(file: &str, csv: &str) -> Table {
    let mut lines = csv.lines();
    let header: Vec<&str> = lines.next().unwrap_or_default().split(',').collect();
    let mut t = Table::new(file, &header);
    for l in lines {
        t.push(l.split(',').map(str::to_string).collect());
    }
    t
}

pub fn run_zvonkin(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    let coeffs = cfg.coefficient_set()?;
    let model = Model::Raw(coeffs.clone());
    let mut meta = meta(cfg, &model, 0, 0);
    if coeffs.b0.is_zero() {
        meta.notes.push("no singular drift: the transform is the identity".into());
        return Ok(Report {
            experiment: "zvonkin".into(),
            meta,
            checks: vec![Check::new(
                "zvonkin.identity",
                "transform removes the singular drift",
                Verdict::Pass,
                "b0 = 0".into(),
            )],
            tables: Vec::new(),
        });
    }
    let map = match zvonkin_map(cfg, &coeffs) {
        Ok(m) => m,
        Err(Error::LambdaExhausted { best }) => {
            meta.notes.push(format!("lambda sweep exhausted, best {best:.4}"));
            return Ok(Report {
                experiment: "zvonkin".into(),
                meta,
                checks: vec![Check::new(
                    "zvonkin.smallness",
                    "|u| + |grad u| <= 1/2 for some lambda",
                    Verdict::Fail,
                    format!("best |u|+|grad u| = {best:.4}"),
                )],
                tables: Vec::new(),
            });
        }
        Err(e) => return Err(e),
    };
    let b0_sup = coeffs.b0.sup_norm();
    let dx = map.grid.dx;
    let mut checks = vec![
        Check::new(
            "zvonkin.residual",
            "resolvent equation solved to tolerance",
            Verdict::from_bool(map.residual <= map.tolerance),
            format!("residual {:.3e} tolerance {:.3e}", map.residual, map.tolerance),
        ),
        Check::new(
            "zvonkin.max_principle",
            "resolvent bound |u| <= |b0|/lambda",
            Verdict::from_bool(map.norms.u_sup <= b0_sup / map.lambda + 10.0 * dx * dx),
            format!("|u|={:.4e} |b0|/lambda={:.4e}", map.norms.u_sup, b0_sup / map.lambda),
        ),
        Check::new(
            "zvonkin.smallness",
            "|u| + |grad u| <= 1/2 for the selected lambda",
            Verdict::from_bool(map.norms.smallness() <= 0.5),
            format!("lambda={:.4e} |u|+|grad u|={:.4e}", map.lambda, map.norms.smallness()),
        ),
    ];
    let rt = round_trip_error(&map, 1000, cfg.seed)?;
    checks.push(Check::new(
        "zvonkin.round_trip",
        "transform is invertible",
        Verdict::from_bool(rt <= 1e-10),
        format!("max |Theta(Theta^-1(y)) - y| = {rt:.3e}"),
    ));
    let fine = ExperimentConfig {
        h: CONSISTENCY_H,
        ..cfg.clone()
    };
    let fine_coeffs = fine.coefficient_set()?;
    let start = base_segment(&fine_coeffs.path);
    let c = transform_consistency(&fine_coeffs, &map, &start, CONSISTENCY_T, CONSISTENCY_PATHS, cfg.seed)?;
    checks.push(Check::new(
        "zvonkin.consistency",
        "transformed equation reproduces the original law",
        Verdict::from_bool(c.pass()),
        format!("W1 = {:.4e} tolerance {:.4e} (n={}, h={})", c.w1, c.tolerance, c.n, c.h),
    ));
    meta.constants.push(("lambda".into(), map.lambda));
    meta.constants.push(("u_sup".into(), map.norms.u_sup));
    meta.constants.push(("grad_u_sup".into(), map.norms.grad_sup));
    meta.constants.push(("hess_u_sup".into(), map.norms.hess_sup));
    meta.constants.push(("residual".into(), map.residual));
    meta.constants.push(("consistency_w1".into(), c.w1));
    meta.notes.push(format!(
        "map: {}",
        map.metadata_json().split_whitespace().collect::<Vec<_>>().join(" ")
    ));
    let mut sweep = Table::new("zvonkin_sweep.csv", &["lambda", "smallness"]);
    for (l, s) in &map.sweep {
        sweep.push(vec![num(*l), num(*s)]);
    }
    Ok(Report {
        experiment: "zvonkin".into(),
        meta,
        checks,
        tables: vec![csv_table("zvonkin_map.csv", &map.to_csv()), sweep],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::zvonkin::EllipticGrid;

    #[test]
    fn identity_map_is_consistent() {
        let cfg = ExperimentConfig {
            t_mem: 1.0,
            h: 0.01,
            ..ExperimentConfig::default()
        };
        let coeffs = cfg.coefficient_set().unwrap();
        let grid = EllipticGrid::new(1, 10.0, 0.1).unwrap();
        let map = ZvonkinMap::constant(&grid, 4.0, &[0.0]).unwrap();
        let start = base_segment(&coeffs.path);
        let c = transform_consistency(&coeffs, &map, &start, 1.0, 200, 1).unwrap();
        assert!(c.w1 < 1e-12, "{}", c.w1);
        assert!(c.pass());
    }

    #[test]
    fn linear_config_reports_identity() {
        let cfg = ExperimentConfig::default();
        let r = run_zvonkin(&cfg).unwrap();
        assert_eq!(r.verdict(), Verdict::Pass);
        assert!(r.check("zvonkin.identity").is_some());
    }

    #[test]
    fn csv_round_trip() {
        let t = csv_table("m.csv", "a,b\n1,2\n3,4\n");
        assert_eq!(t.to_csv(), "a,b\n1,2\n3,4\n");
    }
}

//! Sampled certificates of the coefficient hypotheses and the test function.

use crate::coefficients::validate_h;
use crate::error::Result;

use super::alh::{LAW_OFFSET, LAW_SCALE};
use super::config::ExperimentConfig;
use super::decay::meta;
use super::functions::TestFunction;
use super::laws::{bridge_cloud, exp_moment};
use super::model::Model;
use super::report::{num, Check, Report, Table, Verdict};

pub fn run_validate(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.check()?;
    let coeffs = cfg.coefficient_set()?;
    let path = coeffs.path;
    let v = validate_h(&coeffs, cfg.validate_budget, cfg.seed)?;
    let mut table = Table::new("validate.csv", &["hypothesis", "worst_ratio", "verdict"]);
    let mut checks = Vec::new();
    for c in &v.checks {
        let verdict = Verdict::from_bool(c.pass);
        table.push(vec![c.name.clone(), num(c.worst_ratio), verdict.label().into()]);
        checks.push(Check::new(
            &format!("validate.{}", c.name.to_lowercase()),
            "sampled hypothesis certificate",
            verdict,
            format!("worst ratio {:.6} ({})", c.worst_ratio, c.detail),
        ));
    }
    let f = TestFunction::from_config(cfg);
    f.check(&path)?;
    let q = f.certify(&path, cfg.validate_budget, cfg.seed)?;
    checks.push(Check::new(
        "validate.test_function",
        "declared |grad log f| bounds sampled difference quotients",
        Verdict::Pass,
        format!("worst quotient {q:.6} declared {:.6}", f.grad_log_bound(&path)),
    ));
    let cloud = bridge_cloud(&path, 256, LAW_SCALE, LAW_OFFSET, cfg.seed)?;
    let m = exp_moment(&cloud, cfg.delta, coeffs.alpha);
    checks.push(Check::new(
        "validate.exp_moment",
        "initial laws carry the exponential moment",
        if m.near_overflow { Verdict::Inconclusive } else { Verdict::Pass },
        format!("E exp(delta |xi|^(2 alpha)) = {:.4e}", m.moment),
    ));
    let mut meta = meta(cfg, &Model::Raw(coeffs.clone()), 0, 0);
    meta.constants.push(("sample_budget".into(), cfg.validate_budget as f64));
    meta.constants.push(("dini_integral".into(), coeffs.phi.integral()?));
    Ok(Report {
        experiment: "validate".into(),
        meta,
        checks,
        tables: vec![table],
    })
}

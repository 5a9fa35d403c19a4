//! Replica ensembles shared by the coupling-based experiments.

use crate::error::{Error, Result};
use crate::pathspace::PathSegment;
use crate::simulate::{coupled_q_replicas, CouplingParams, CouplingRun, LawPath, LawSummary, TimeGrid};
use crate::stats::Estimate;

use super::config::ExperimentConfig;
use super::model::Model;
use super::report::Verdict;

/// Largest tolerated fraction of blown-up replicas.
pub const MAX_BLOWUP_FRACTION: f64 = 0.01;
/// Largest tolerated fraction of simulated points outside the elliptic box.
pub const MAX_EXIT_FRACTION: f64 = 1e-3;

/// Successful replicas of one coupled pair.
#[derive(Debug, Clone)]
pub struct Ensemble {
    pub runs: Vec<CouplingRun>,
    pub blown_up: usize,
    pub exit_fraction: f64,
    pub times: Vec<f64>,
}

impl Ensemble {
    /// Mean and standard error of `g(run, save_index)` at every save time.
    pub fn estimate<F: Fn(&CouplingRun, usize) -> f64>(&self, g: F) -> Vec<Estimate> {
        (0..self.times.len())
            .map(|k| {
                let xs: Vec<f64> = self.runs.iter().map(|r| g(r, k)).collect();
                Estimate::from_samples(&xs)
            })
            .collect()
    }

    pub fn exit_verdict(&self) -> Verdict {
        if self.exit_fraction < MAX_EXIT_FRACTION {
            Verdict::Pass
        } else {
            Verdict::Inconclusive
        }
    }
}

/// Coupled replicas under the frozen zero-mean law. Aborts when more than
/// 1% of the replicas blow up.
pub fn coupled_ensemble(
    model: &Model,
    cfg: &ExperimentConfig,
    xi: &PathSegment,
    eta: &PathSegment,
    grid: &TimeGrid,
    seed: u64,
    n: usize,
) -> Result<Ensemble> {
    let coeffs = model.coefficients();
    let params = CouplingParams {
        kappa: cfg.kappa,
        c_a: 1.0,
        alpha: coeffs.alpha,
    };
    let law = LawPath::Static(LawSummary::zero(coeffs.dim()));
    let results = coupled_q_replicas(model, xi, eta, &law, &params, grid, seed, n);
    let mut runs = Vec::with_capacity(n);
    let mut blown = 0usize;
    let mut first_err = None;
    for r in results {
        match r {
            Ok(run) => runs.push(run),
            Err(e @ Error::BlowUp { .. }) => {
                blown += 1;
                first_err.get_or_insert(e);
            }
            Err(e) => return Err(e),
        }
    }
    if blown as f64 > MAX_BLOWUP_FRACTION * n as f64 || runs.is_empty() {
        return Err(first_err.unwrap_or(Error::BlowUp { step: 0, unit: 0 }));
    }
    let exits: u64 = runs.iter().map(|r| r.exits).sum();
    let points = 2.0 * runs.len() as f64 * (grid.steps + coeffs.path.len()) as f64;
    Ok(Ensemble {
        times: grid.save_times(),
        exit_fraction: exits as f64 / points,
        runs,
        blown_up: blown,
    })
}

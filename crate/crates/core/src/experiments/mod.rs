//! Experiment drivers: each turns a configuration into a [`Report`] of
//! checked statements, fitted constants and CSV tables.

pub mod alh;
pub mod config;
pub mod decay;
pub mod ensemble;
pub mod entropy;
pub mod functions;
pub mod gradient;
pub mod growth;
pub mod laws;
pub mod model;
pub mod report;
pub mod transform;
pub mod validate;

use std::str::FromStr;

use crate::error::{Error, Result};

pub use config::ExperimentConfig;
pub use report::{Check, Report, Table, Verdict};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Experiment {
    Validate,
    Zvonkin,
    Decay,
    Entropy,
    Alh,
    Growth,
    Gradient,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Experiment::Validate,
        Experiment::Zvonkin,
        Experiment::Decay,
        Experiment::Entropy,
        Experiment::Alh,
        Experiment::Growth,
        Experiment::Gradient,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Validate => "validate",
            Experiment::Zvonkin => "zvonkin",
            Experiment::Decay => "decay",
            Experiment::Entropy => "entropy",
            Experiment::Alh => "alh",
            Experiment::Growth => "growth",
            Experiment::Gradient => "gradient",
        }
    }

    pub fn run(&self, cfg: &ExperimentConfig) -> Result<Report> {
        match self {
            Experiment::Validate => validate::run_validate(cfg),
            Experiment::Zvonkin => transform::run_zvonkin(cfg),
            Experiment::Decay => decay::run_decay(cfg),
            Experiment::Entropy => entropy::run_entropy(cfg),
            Experiment::Alh => alh::run_alh(cfg),
            Experiment::Growth => growth::run_growth(cfg),
            Experiment::Gradient => gradient::run_gradient(cfg),
        }
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Experiment::ALL
            .iter()
            .find(|e| e.name() == s)
            .copied()
            .ok_or_else(|| Error::Config(format!("unknown experiment '{s}'")))
    }
}

/// Run every experiment in order, stopping at the first error.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<Report>> {
    Experiment::ALL.iter().map(|e| e.run(cfg)).collect()
}

/// Worst verdict over several reports.
pub fn overall(reports: &[Report]) -> Verdict {
    reports.iter().map(Report::verdict).max().unwrap_or(Verdict::Pass)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for e in Experiment::ALL {
            assert_eq!(e.name().parse::<Experiment>().unwrap(), e);
        }
        assert!("nope".parse::<Experiment>().is_err());
    }
}

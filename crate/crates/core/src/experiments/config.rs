//! Flat `key = value` experiment configuration.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::coefficients::{CoefficientSet, BUILTIN_NAMES};
use crate::error::{Error, Result};
use crate::pathspace::PathSpaceConfig;

/// Everything an experiment run needs. Keys are dotted, e.g. `sim.h = 0.01`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub coefficients: String,
    /// Overrides the builtin law-coupling strength when set.
    pub law_coupling: Option<f64>,
    pub d: usize,
    pub tau: f64,
    pub t_mem: f64,
    pub h: f64,
    pub t_end: f64,
    pub save_dt: f64,
    pub n_particles: usize,
    pub n_replicas: usize,
    pub seed: u64,
    pub kappa: f64,
    pub tau0: f64,
    pub delta: f64,
    pub epsilon_alpha: f64,
    pub validate_budget: usize,
    pub zvonkin_half_width: f64,
    pub zvonkin_dx: f64,
    pub zvonkin_lambdas: usize,
    pub test_amplitude: f64,
    pub test_endpoint_weight: f64,
    pub test_integral_weight: f64,
    pub test_rate: f64,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            coefficients: "linear".into(),
            law_coupling: None,
            d: 1,
            tau: 1.0,
            t_mem: 10.0,
            h: 0.01,
            t_end: 8.0,
            save_dt: 1.0,
            n_particles: 256,
            n_replicas: 4096,
            seed: 20240607,
            kappa: 4.0,
            tau0: 0.5,
            delta: 0.5,
            epsilon_alpha: 0.5,
            validate_budget: 512,
            zvonkin_half_width: 10.0,
            zvonkin_dx: 1e-3,
            zvonkin_lambdas: 20,
            test_amplitude: 1.0,
            test_endpoint_weight: 1.0,
            test_integral_weight: 0.0,
            test_rate: 2.0,
            output_dir: PathBuf::from("out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse::<T>()
        .map_err(|_| Error::Parse(format!("{key}: cannot parse '{v}'")))
}

impl ExperimentConfig {
    /// Parse `key = value` lines; `#` starts a comment. Unknown keys are errors.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Parse(format!("line {}: expected key = value", lineno + 1)))?;
            let key = k.trim().to_ascii_lowercase();
            let v = v.trim();
            if seen.insert(key.clone(), lineno + 1).is_some() {
                return Err(Error::Parse(format!("line {}: duplicate key {key}", lineno + 1)));
            }
            cfg.set(&key, v)?;
        }
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        match key {
            "coefficients.name" => self.coefficients = v.to_string(),
            "coefficients.law_coupling" => self.law_coupling = Some(parse_num(key, v)?),
            "path.d" => self.d = parse_num(key, v)?,
            "path.tau" => self.tau = parse_num(key, v)?,
            "path.t_mem" => self.t_mem = parse_num(key, v)?,
            "sim.h" => self.h = parse_num(key, v)?,
            "sim.t" | "sim.t_end" => self.t_end = parse_num(key, v)?,
            "sim.save_dt" => self.save_dt = parse_num(key, v)?,
            "sim.n_particles" => self.n_particles = parse_num(key, v)?,
            "sim.n_replicas" => self.n_replicas = parse_num(key, v)?,
            "sim.seed" => self.seed = parse_num(key, v)?,
            "sim.kappa" => self.kappa = parse_num(key, v)?,
            "sim.tau0" => self.tau0 = parse_num(key, v)?,
            "sim.delta" => self.delta = parse_num(key, v)?,
            "sim.epsilon_alpha" => self.epsilon_alpha = parse_num(key, v)?,
            "validate.budget" => self.validate_budget = parse_num(key, v)?,
            "zvonkin.half_width" => self.zvonkin_half_width = parse_num(key, v)?,
            "zvonkin.dx" => self.zvonkin_dx = parse_num(key, v)?,
            "zvonkin.lambda_points" => self.zvonkin_lambdas = parse_num(key, v)?,
            "test.amplitude" => self.test_amplitude = parse_num(key, v)?,
            "test.endpoint_weight" => self.test_endpoint_weight = parse_num(key, v)?,
            "test.integral_weight" => self.test_integral_weight = parse_num(key, v)?,
            "test.rate" => self.test_rate = parse_num(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            _ => return Err(Error::Parse(format!("unknown key {key}"))),
        }
        Ok(())
    }

    /// Range checks that do not depend on the experiment.
    pub fn check(&self) -> Result<()> {
        if !BUILTIN_NAMES.contains(&self.coefficients.as_str()) {
            return Err(Error::Config(format!(
                "unknown coefficient set '{}' (expected one of {})",
                self.coefficients,
                BUILTIN_NAMES.join(", ")
            )));
        }
        self.path()?;
        if !(self.tau0 > 0.0 && self.tau0 < self.tau) {
            return Err(Error::Config(format!(
                "tau0 = {} must lie in (0, tau = {})",
                self.tau0, self.tau
            )));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::Config(format!("delta = {} must lie in (0, 1)", self.delta)));
        }
        if !(self.epsilon_alpha >= 0.0) {
            return Err(Error::Config("epsilon_alpha must be nonnegative".into()));
        }
        if self.n_particles < 2 || self.n_replicas < 2 {
            return Err(Error::Config("particle and replica counts must be at least 2".into()));
        }
        if !(self.t_end > 0.0 && self.save_dt > 0.0) {
            return Err(Error::Config("horizon and save interval must be positive".into()));
        }
        if !(self.test_amplitude >= 0.0 && self.test_rate > self.tau) {
            return Err(Error::Config(format!(
                "test function needs amplitude >= 0 and rate > tau (got {}, {})",
                self.test_amplitude, self.test_rate
            )));
        }
        if let Some(k) = self.law_coupling {
            if !(k >= 0.0 && k.is_finite()) {
                return Err(Error::Config("law_coupling must be a finite nonnegative number".into()));
            }
        }
        Ok(())
    }

    /// Coupling-based experiments need `κ > τ`.
    pub fn check_kappa(&self) -> Result<()> {
        if !(self.kappa > self.tau) {
            return Err(Error::Config(format!(
                "kappa = {} must exceed tau = {}",
                self.kappa, self.tau
            )));
        }
        Ok(())
    }

    pub fn path(&self) -> Result<PathSpaceConfig> {
        PathSpaceConfig::new(self.d, self.tau, self.h, self.t_mem)
            .map_err(|e| Error::Config(format!("path space: {e}")))
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet> {
        let c = CoefficientSet::builtin(&self.coefficients, self.path()?)?;
        Ok(match self.law_coupling {
            Some(k) => c.with_law_coupling(k),
            None => c,
        })
    }

    /// `ε(α)`: zero when `α = 0`.
    pub fn epsilon(&self, alpha: f64) -> f64 {
        if alpha == 0.0 {
            0.0
        } else {
            self.epsilon_alpha
        }
    }

    /// Same configuration for another builtin set.
    pub fn with_coefficients(&self, name: &str) -> Self {
        Self {
            coefficients: name.to_string(),
            ..self.clone()
        }
    }

    /// Render back to the key = value format.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        kv("coefficients.name", self.coefficients.clone());
        if let Some(k) = self.law_coupling {
            kv("coefficients.law_coupling", k.to_string());
        }
        kv("path.d", self.d.to_string());
        kv("path.tau", self.tau.to_string());
        kv("path.t_mem", self.t_mem.to_string());
        kv("sim.h", self.h.to_string());
        kv("sim.t", self.t_end.to_string());
        kv("sim.save_dt", self.save_dt.to_string());
        kv("sim.n_particles", self.n_particles.to_string());
        kv("sim.n_replicas", self.n_replicas.to_string());
        kv("sim.seed", self.seed.to_string());
        kv("sim.kappa", self.kappa.to_string());
        kv("sim.tau0", self.tau0.to_string());
        kv("sim.delta", self.delta.to_string());
        kv("sim.epsilon_alpha", self.epsilon_alpha.to_string());
        kv("validate.budget", self.validate_budget.to_string());
        kv("zvonkin.half_width", self.zvonkin_half_width.to_string());
        kv("zvonkin.dx", self.zvonkin_dx.to_string());
        kv("zvonkin.lambda_points", self.zvonkin_lambdas.to_string());
        kv("test.amplitude", self.test_amplitude.to_string());
        kv("test.endpoint_weight", self.test_endpoint_weight.to_string());
        kv("test.integral_weight", self.test_integral_weight.to_string());
        kv("test.rate", self.test_rate.to_string());
        kv("output.dir", self.output_dir.display().to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ExperimentConfig::default().check().unwrap();
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn parses_dotted_keys_and_comments() {
        let c = ExperimentConfig::parse(
            "# comment\ncoefficients.name = dini_sqrt\nsim.h=0.005 # trailing\nsim.N_replicas = 128\n",
        )
        .unwrap();
        assert_eq!(c.coefficients, "dini_sqrt");
        assert_eq!(c.h, 0.005);
        assert_eq!(c.n_replicas, 128);
    }

    #[test]
    fn round_trips_through_text() {
        let mut c = ExperimentConfig::default();
        c.law_coupling = Some(0.0);
        c.kappa = 3.5;
        assert_eq!(ExperimentConfig::parse(&c.to_text()).unwrap(), c);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(ExperimentConfig::parse("sim.h 0.1"), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::parse("sim.bogus = 1"), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::parse("sim.h = x"), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::parse("sim.h=0.1\nsim.h=0.2"), Err(Error::Parse(_))));
        assert!(matches!(ExperimentConfig::parse("sim.tau0 = 1.5"), Err(Error::Config(_))));
        assert!(matches!(ExperimentConfig::parse("coefficients.name = foo"), Err(Error::Config(_))));
        let c = ExperimentConfig::parse("sim.kappa = 1").unwrap();
        assert!(c.check_kappa().is_err());
    }
}

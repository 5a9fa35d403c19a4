//! The dynamics an experiment simulates: raw coefficients when `b⁰ ≡ 0`,
//! otherwise the Zvonkin-transformed equation.

use crate::coefficients::CoefficientSet;
use crate::error::Result;
use crate::linalg::Mat;
use crate::pathspace::{PathSegment, PathSpaceConfig};
use crate::simulate::{Dynamics, LawSummary, PathState};
use crate::zvonkin::{default_lambda_grid, select_lambda, transformed_coeffs, EllipticGrid, TransformedCoefficients, ZvonkinMap};

use super::config::ExperimentConfig;

#[derive(Debug, Clone)]
pub enum Model {
    Raw(CoefficientSet),
    Transformed(Box<TransformedCoefficients>),
}

/// Elliptic grid used for a configuration; coarser in two dimensions.
pub fn elliptic_grid(cfg: &ExperimentConfig, d: usize) -> Result<EllipticGrid> {
    let dx = if d == 1 { cfg.zvonkin_dx } else { cfg.zvonkin_dx.max(0.05) };
    EllipticGrid::new(d, cfg.zvonkin_half_width, dx)
}

/// Solve for the transform of `coeffs` on the configured grid and sweep.
pub fn zvonkin_map(cfg: &ExperimentConfig, coeffs: &CoefficientSet) -> Result<ZvonkinMap> {
    let grid = elliptic_grid(cfg, coeffs.dim())?;
    let lambdas = default_lambda_grid(coeffs.b0.sup_norm(), cfg.zvonkin_lambdas);
    select_lambda(coeffs, &grid, &lambdas)
}

impl Model {
    pub fn prepare(cfg: &ExperimentConfig, coeffs: CoefficientSet) -> Result<Self> {
        if coeffs.b0.is_zero() {
            return Ok(Model::Raw(coeffs));
        }
        let map = zvonkin_map(cfg, &coeffs)?;
        Ok(Model::Transformed(Box::new(transformed_coeffs(&map, &coeffs)?)))
    }

    pub fn coefficients(&self) -> &CoefficientSet {
        match self {
            Model::Raw(c) => c,
            Model::Transformed(t) => &t.coeffs,
        }
    }

    pub fn map(&self) -> Option<&ZvonkinMap> {
        match self {
            Model::Raw(_) => None,
            Model::Transformed(t) => Some(&t.map),
        }
    }

    /// Lipschitz constant of `Θ⁻¹` (1 without a transform, 2 under the
    /// smallness condition).
    pub fn inverse_lipschitz(&self) -> f64 {
        match self.map() {
            None => 1.0,
            Some(m) => 1.0 / (1.0 - m.norms.grad_sup),
        }
    }

    fn inner(&self) -> &dyn Dynamics {
        match self {
            Model::Raw(c) => c,
            Model::Transformed(t) => t.as_ref(),
        }
    }
}

impl Dynamics for Model {
    fn path(&self) -> &PathSpaceConfig {
        self.inner().path()
    }

    fn init_state(&self, xi: &PathSegment, track_norm: bool) -> Result<PathState> {
        self.inner().init_state(xi, track_norm)
    }

    #[inline]
    fn drift(&self, st: &PathState, law: &LawSummary, out: &mut [f64]) {
        match self {
            Model::Raw(c) => Dynamics::drift(c, st, law, out),
            Model::Transformed(t) => t.drift(st, law, out),
        }
    }

    #[inline]
    fn sigma(&self, st: &PathState, out: &mut Mat) {
        match self {
            Model::Raw(c) => Dynamics::sigma(c, st, out),
            Model::Transformed(t) => t.sigma(st, out),
        }
    }

    #[inline]
    fn push(&self, st: &mut PathState, value: &[f64]) -> Result<()> {
        match self {
            Model::Raw(c) => c.push(st, value),
            Model::Transformed(t) => t.push(st, value),
        }
    }

    fn law_drift_delta(&self, st: &PathState, mu: &LawSummary, nu: &LawSummary, out: &mut [f64]) {
        self.inner().law_drift_delta(st, mu, nu, out)
    }

    fn sigma_original(&self, st: &PathState, out: &mut Mat) {
        self.inner().sigma_original(st, out)
    }

    fn law_dependent(&self) -> bool {
        self.inner().law_dependent()
    }
}

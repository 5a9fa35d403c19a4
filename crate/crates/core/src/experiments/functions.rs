//! Test functions `f(ξ) = exp(A tanh(c₀ ξ₁(0) + c₁ h Σ e^{ω s_i} ξ₁(s_i)))`.

use serde::Serialize;

use crate::coefficients::random_segment;
use crate::error::{Error, Result};
use crate::pathspace::{exp_weighted_integral, PathSegment, PathSpaceConfig};
use crate::rng::{NoiseStream, StreamKey};

use super::config::ExperimentConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TestFunction {
    pub amplitude: f64,
    pub endpoint_weight: f64,
    pub integral_weight: f64,
    /// `ω`; must exceed `τ` for the integral term to be `‖·‖_τ`-Lipschitz.
    pub rate: f64,
}

impl TestFunction {
    pub fn new(amplitude: f64, endpoint_weight: f64, integral_weight: f64, rate: f64) -> Self {
        Self {
            amplitude,
            endpoint_weight,
            integral_weight,
            rate,
        }
    }

    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        Self::new(
            cfg.test_amplitude,
            cfg.test_endpoint_weight,
            cfg.test_integral_weight,
            cfg.test_rate,
        )
    }

    /// The two functions used by the gradient check.
    pub fn gradient_pair(cfg: &ExperimentConfig) -> [Self; 2] {
        [
            Self::from_config(cfg),
            Self::new(0.5, 0.5, 0.5, 2.0 * cfg.tau + 1.0),
        ]
    }

    pub fn constant() -> Self {
        Self::new(0.0, 0.0, 0.0, 2.0)
    }

    pub fn is_constant(&self) -> bool {
        self.amplitude == 0.0 || (self.endpoint_weight == 0.0 && self.integral_weight == 0.0)
    }

    pub fn check(&self, path: &PathSpaceConfig) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Config("test function amplitude must be finite and >= 0".into()));
        }
        if self.integral_weight != 0.0 && !(self.rate > path.tau) {
            return Err(Error::Config(format!(
                "test function rate {} must exceed tau = {}",
                self.rate, path.tau
            )));
        }
        Ok(())
    }

    fn argument(&self, seg: &PathSegment) -> f64 {
        let mut a = self.endpoint_weight * seg.endpoint()[0];
        if self.integral_weight != 0.0 {
            a += self.integral_weight * exp_weighted_integral(seg, self.rate)[0];
        }
        a
    }

    pub fn log_value(&self, seg: &PathSegment) -> f64 {
        if self.amplitude == 0.0 {
            return 0.0;
        }
        self.amplitude * self.argument(seg).tanh()
    }

    pub fn value(&self, seg: &PathSegment) -> f64 {
        self.log_value(seg).exp()
    }

    /// `‖·‖_τ`-Lipschitz constant of the inner linear functional.
    pub fn functional_norm(&self, path: &PathSpaceConfig) -> f64 {
        let mut l = self.endpoint_weight.abs();
        if self.integral_weight != 0.0 {
            let decay = (-(self.rate - path.tau) * path.h).exp();
            let mut w = path.h;
            let mut s = 0.0;
            for _ in 0..path.len() {
                s += w;
                w *= decay;
            }
            l += self.integral_weight.abs() * s;
        }
        l
    }

    /// Declared `‖∇ log f‖∞`.
    pub fn grad_log_bound(&self, path: &PathSpaceConfig) -> f64 {
        self.amplitude * self.functional_norm(path)
    }

    /// `‖f‖∞ = e^A`.
    pub fn sup_bound(&self) -> f64 {
        self.amplitude.exp()
    }

    /// Declared `‖∇f‖∞ ≤ ‖f‖∞ ‖∇ log f‖∞`.
    pub fn grad_bound(&self, path: &PathSpaceConfig) -> f64 {
        self.sup_bound() * self.grad_log_bound(path)
    }

    /// Largest sampled difference quotient of `log f`; the declared bound is
    /// certified when this stays below it plus `1e−6`.
    pub fn certify(&self, path: &PathSpaceConfig, samples: usize, seed: u64) -> Result<f64> {
        let bound = self.grad_log_bound(path);
        let mut worst = 0.0f64;
        for i in 0..samples {
            let mut rng = NoiseStream::new(StreamKey::new(seed, i as u64, 1));
            let xi = random_segment(path, &mut rng, 1.0, 0.5);
            let eps = 10f64.powf(-3.0 + 2.0 * rng.uniform());
            let dir = random_segment(path, &mut rng, 1.0, 0.5);
            let eta = xi.lincomb(1.0, &dir, eps)?;
            let dist = xi.distance(&eta);
            if dist > 0.0 {
                worst = worst.max((self.log_value(&xi) - self.log_value(&eta)).abs() / dist);
            }
        }
        if worst > bound + 1e-6 {
            return Err(Error::Config(format!(
                "test function gradient bound {bound:.6} violated by sampled quotient {worst:.6}"
            )));
        }
        Ok(worst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path() -> PathSpaceConfig {
        PathSpaceConfig::new(1, 1.0, 0.05, 4.0).unwrap()
    }

    #[test]
    fn constant_function() {
        let f = TestFunction::constant();
        let seg = PathSegment::constant(path(), &[3.0]).unwrap();
        assert_eq!(f.value(&seg), 1.0);
        assert_eq!(f.grad_log_bound(&path()), 0.0);
        assert!(f.is_constant());
    }

    #[test]
    fn endpoint_function_values() {
        let f = TestFunction::new(2.0, 1.0, 0.0, 2.0);
        let seg = PathSegment::constant(path(), &[0.5]).unwrap();
        assert!((f.log_value(&seg) - 2.0 * 0.5f64.tanh()).abs() < 1e-15);
        assert_eq!(f.grad_log_bound(&path()), 2.0);
        assert!((f.sup_bound() - 2f64.exp()).abs() < 1e-12);
    }

    #[test]
    fn declared_bounds_are_certified() {
        let p = path();
        for f in [
            TestFunction::new(1.0, 1.0, 0.0, 2.0),
            TestFunction::new(0.5, 0.5, 0.5, 3.0),
            TestFunction::new(1.5, -0.3, 1.0, 1.5),
        ] {
            let q = f.certify(&p, 200, 3).unwrap();
            assert!(q <= f.grad_log_bound(&p) + 1e-6);
        }
    }

    #[test]
    fn functional_norm_is_attained() {
        // ξ(s) = e^{−τ s} saturates every weight
        let p = path();
        let f = TestFunction::new(1.0, 1.0, 0.7, 2.5);
        let seg = PathSegment::from_fn(p, |s| vec![(-p.tau * s).exp()]).unwrap();
        let arg = 1.0 + 0.7 * exp_weighted_integral(&seg, 2.5)[0];
        assert!((arg - f.functional_norm(&p)).abs() < 1e-9);
        assert!((seg.weighted_norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn slow_rate_rejected() {
        let f = TestFunction::new(1.0, 0.0, 1.0, 0.5);
        assert!(f.check(&path()).is_err());
    }
}

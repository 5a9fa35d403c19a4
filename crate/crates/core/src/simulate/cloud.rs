use crate::error::{Error, Result};
use crate::pathspace::{PathSegment, PathSpaceConfig};

/// Weighted ensemble of segments approximating a law on `C_τ`.
#[derive(Debug, Clone)]
pub struct ParticleCloud {
    particles: Vec<PathSegment>,
    weights: Vec<f64>,
}

/// What the builtin drifts read from a law: mean endpoint and `‖μ‖₂`.
#[derive(Debug, Clone, PartialEq)]
pub struct LawSummary {
    pub mean_endpoint: Vec<f64>,
    pub second_moment: f64,
}

impl LawSummary {
    pub fn zero(d: usize) -> Self {
        Self {
            mean_endpoint: vec![0.0; d],
            second_moment: 0.0,
        }
    }

    /// Summary of the point mass `δ_ξ`.
    pub fn point_mass(seg: &PathSegment) -> Self {
        Self {
            mean_endpoint: seg.endpoint().to_vec(),
            second_moment: seg.weighted_norm(),
        }
    }

    /// Mean endpoint of equally weighted points.
    pub fn from_endpoints<'a, I: IntoIterator<Item = &'a [f64]>>(d: usize, points: I) -> Self {
        let mut mean = vec![0.0; d];
        let mut n = 0usize;
        for p in points {
            for (m, x) in mean.iter_mut().zip(p) {
                *m += x;
            }
            n += 1;
        }
        if n > 0 {
            mean.iter_mut().for_each(|m| *m /= n as f64);
        }
        Self {
            mean_endpoint: mean,
            second_moment: f64::NAN,
        }
    }
}

impl ParticleCloud {
    /// Uniformly weighted cloud.
    pub fn uniform(particles: Vec<PathSegment>) -> Result<Self> {
        let n = particles.len();
        if n == 0 {
            return Err(Error::InvalidCloud("cloud has no particles".into()));
        }
        Self::weighted(particles, vec![1.0 / n as f64; n])
    }

    /// Cloud with explicit weights (nonnegative, summing to one within 1e-12).
    pub fn weighted(particles: Vec<PathSegment>, weights: Vec<f64>) -> Result<Self> {
        if particles.is_empty() {
            return Err(Error::InvalidCloud("cloud has no particles".into()));
        }
        if particles.len() != weights.len() {
            return Err(Error::InvalidCloud(format!(
                "{} particles but {} weights",
                particles.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidCloud("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidCloud(format!("weights sum to {total}, not 1")));
        }
        let cfg = *particles[0].config();
        if particles.iter().any(|p| *p.config() != cfg) {
            return Err(Error::InvalidCloud("particles use different grids".into()));
        }
        Ok(Self { particles, weights })
    }

    /// Normalise nonnegative weights before building the cloud.
    pub fn reweighted(particles: Vec<PathSegment>, raw: &[f64]) -> Result<Self> {
        let total: f64 = raw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::InvalidCloud("weights do not normalise".into()));
        }
        Self::weighted(particles, raw.iter().map(|w| w / total).collect())
    }

    pub fn point_mass(seg: PathSegment) -> Self {
        Self {
            particles: vec![seg],
            weights: vec![1.0],
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn particles(&self) -> &[PathSegment] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn config(&self) -> &PathSpaceConfig {
        self.particles[0].config()
    }

    pub fn is_uniform(&self) -> bool {
        let w0 = 1.0 / self.len() as f64;
        self.weights.iter().all(|w| (w - w0).abs() <= 1e-15)
    }

    /// Weighted mean endpoint and `‖μ‖₂`.
    pub fn summary(&self) -> LawSummary {
        let d = self.config().d;
        let mut mean = vec![0.0; d];
        let mut m2 = 0.0;
        for (p, w) in self.particles.iter().zip(&self.weights) {
            for (m, x) in mean.iter_mut().zip(p.endpoint()) {
                *m += w * x;
            }
            m2 += w * p.weighted_norm().powi(2);
        }
        LawSummary {
            mean_endpoint: mean,
            second_moment: m2.sqrt(),
        }
    }

    /// Weighted mean of a statistic over particles.
    pub fn expect<F: Fn(&PathSegment) -> f64>(&self, f: F) -> f64 {
        self.particles
            .iter()
            .zip(&self.weights)
            .map(|(p, w)| w * f(p))
            .sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_must_normalise() {
        let c = PathSpaceConfig::new(1, 1.0, 0.5, 1.0).unwrap();
        let s = PathSegment::zeros(c);
        assert!(ParticleCloud::weighted(vec![s.clone(), s.clone()], vec![0.5, 0.6]).is_err());
        assert!(ParticleCloud::weighted(vec![s.clone()], vec![1.0]).is_ok());
        assert!(ParticleCloud::uniform(vec![]).is_err());
    }

    #[test]
    fn summary_of_two_points() {
        let c = PathSpaceConfig::new(1, 1.0, 0.5, 1.0).unwrap();
        let a = PathSegment::constant(c, &[1.0]).unwrap();
        let b = PathSegment::constant(c, &[3.0]).unwrap();
        let cloud = ParticleCloud::uniform(vec![a, b]).unwrap();
        let s = cloud.summary();
        assert_eq!(s.mean_endpoint, vec![2.0]);
        assert!((s.second_moment - 5f64.sqrt()).abs() < 1e-14);
    }
}

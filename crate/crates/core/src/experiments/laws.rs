//! Initial segments and initial-law generators.

use serde::Serialize;

use crate::error::Result;
use crate::pathspace::{PathSegment, PathSpaceConfig};
use crate::rng::{NoiseStream, StreamKey};
use crate::simulate::ParticleCloud;

/// Reference segment `η(s) = ½ e^{τ s/2} e₁`, `‖η‖_τ = ½`.
pub fn base_segment(path: &PathSpaceConfig) -> PathSegment {
    let tau = path.tau;
    let d = path.d;
    PathSegment::from_fn(*path, |s| {
        let mut v = vec![0.0; d];
        v[0] = 0.5 * (0.5 * tau * s).exp();
        v
    })
    .expect("finite")
}

/// `seg + δ e₁` on the whole window; `‖·‖_τ` distance exactly `|δ|`.
pub fn shifted(seg: &PathSegment, delta: f64) -> PathSegment {
    seg.map_points(|x| {
        let mut v = x.to_vec();
        v[0] += delta;
        Ok(v)
    })
    .expect("finite")
}

/// Ordered pair `(ξ, η)` with its distance.
#[derive(Debug, Clone)]
pub struct SegmentPair {
    pub xi: PathSegment,
    pub eta: PathSegment,
    pub shift: f64,
    /// True when `ξ` is the shifted segment.
    pub xi_shifted: bool,
}

impl SegmentPair {
    pub fn distance(&self) -> f64 {
        self.xi.distance(&self.eta)
    }
}

/// For every shift, both orientations `(base+δ, base)` and `(base, base+δ)`.
pub fn pair_grid(base: &PathSegment, shifts: &[f64]) -> Vec<SegmentPair> {
    let mut out = Vec::with_capacity(2 * shifts.len());
    for &d in shifts {
        let moved = shifted(base, d);
        out.push(SegmentPair {
            xi: moved.clone(),
            eta: base.clone(),
            shift: d,
            xi_shifted: true,
        });
        out.push(SegmentPair {
            xi: base.clone(),
            eta: moved,
            shift: d,
            xi_shifted: false,
        });
    }
    out
}

pub const TRAINING_SHIFTS: [f64; 3] = [0.1, 0.25, 0.5];
pub const HELD_OUT_SHIFTS: [f64; 3] = [0.15, 0.3, 0.45];

/// Gaussian-bridge segment law with exponential envelope, translated by
/// `offset e₁`: particle `i` is `offset e₁ + scale e^{τ s/2} (Z_i + B_i(s))`
/// with `B_i` a Brownian bridge pinned at both window ends. The randomness
/// depends only on `(seed, i)`, so clouds with different offsets are exact
/// translates of each other.
pub fn bridge_cloud(path: &PathSpaceConfig, n: usize, scale: f64, offset: f64, seed: u64) -> Result<ParticleCloud> {
    let m = path.len();
    let d = path.d;
    let sqrt_h = path.h.sqrt();
    let particles = (0..n)
        .map(|i| {
            let mut rng = NoiseStream::new(StreamKey::new(seed, i as u64, u64::MAX));
            let mut data = vec![0.0; m * d];
            for c in 0..d {
                let z = rng.normal();
                // random walk from the oldest grid point to s = 0
                let mut w = vec![0.0; m];
                for k in 1..m {
                    w[k] = w[k - 1] + sqrt_h * rng.normal();
                }
                let last = w[m - 1];
                for k in 0..m {
                    let frac = k as f64 / (m - 1) as f64;
                    let bridge = w[k] - frac * last;
                    let s = path.grid_time(k);
                    let mut v = scale * (0.5 * path.tau * s).exp() * (z + bridge);
                    if c == 0 {
                        v += offset;
                    }
                    data[k * d + c] = v;
                }
            }
            PathSegment::from_flat(*path, data)
        })
        .collect::<Result<Vec<_>>>()?;
    ParticleCloud::uniform(particles)
}

/// Uniform cloud of `n` copies of one segment.
pub fn point_mass_cloud(seg: &PathSegment, n: usize) -> Result<ParticleCloud> {
    ParticleCloud::uniform(vec![seg.clone(); n])
}

/// Sampled `E e^{δ‖ξ‖_τ^{2α}}` with an overflow flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ExpMomentCheck {
    pub delta: f64,
    pub alpha: f64,
    pub moment: f64,
    /// Within a factor 10 of `f64::MAX`.
    pub near_overflow: bool,
}

pub fn exp_moment(cloud: &ParticleCloud, delta: f64, alpha: f64) -> ExpMomentCheck {
    let moment = cloud.expect(|p| (delta * p.weighted_norm().powf(2.0 * alpha)).exp());
    ExpMomentCheck {
        delta,
        alpha,
        moment,
        near_overflow: !(moment.is_finite() && moment < f64::MAX / 10.0),
    }
}

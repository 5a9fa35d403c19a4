//! Euler–Maruyama integration of the segment process.
//!
//! Everything runs on the path grid: one time step is one grid step `h`, so
//! advancing the segment is a ring-buffer shift. Drifts are evaluated from
//! incrementally maintained features (endpoint, `J_ρ`), never by scanning the
//! whole history.

mod cloud;
mod coupling;

pub use cloud::{LawSummary, ParticleCloud};
pub use coupling::{
    coupled_q_replicas, exp_moment_a, simulate_coupled_p, simulate_coupled_q, simulate_law_shift,
    CouplingParams, CouplingRun, DistCouplingRun, MomentEstimate,
};


use crate::coefficients::CoefficientSet;
use crate::error::{Error, Result};
use crate::linalg::{norm2, Mat};
use crate::par;
use crate::pathspace::{ExpIntegral, NormTracker, PathSegment, PathSpaceConfig};
use crate::rng::{NoiseStream, StreamKey};

/// Values beyond this magnitude are treated as a blow-up.
pub const BLOWUP_LEVEL: f64 = 1e150;

/// Simulation state of one path: its segment in the simulated coordinates,
/// the segment in original coordinates when they differ, and the running
/// memory integral of the original path.
#[derive(Debug, Clone)]
pub struct PathState {
    seg: PathSegment,
    original: Option<PathSegment>,
    weighted: ExpIntegral,
    norm: Option<NormTracker>,
    pub exits: u64,
}

impl PathState {
    /// State whose simulated and original coordinates coincide.
    pub fn raw(seg: PathSegment, rate: f64, track_norm: bool) -> Self {
        let weighted = ExpIntegral::new(&seg, rate);
        let norm = track_norm.then(|| NormTracker::new(&seg));
        Self {
            seg,
            original: None,
            weighted,
            norm,
            exits: 0,
        }
    }

    /// State simulated in transformed coordinates `seg`, with preimage `original`.
    pub fn transformed(seg: PathSegment, original: PathSegment, rate: f64, track_norm: bool) -> Self {
        let weighted = ExpIntegral::new(&original, rate);
        let norm = track_norm.then(|| NormTracker::new(&seg));
        Self {
            seg,
            original: Some(original),
            weighted,
            norm,
            exits: 0,
        }
    }

    #[inline]
    pub fn segment(&self) -> &PathSegment {
        &self.seg
    }

    /// Segment in original coordinates.
    #[inline]
    pub fn original(&self) -> &PathSegment {
        self.original.as_ref().unwrap_or(&self.seg)
    }

    #[inline]
    pub fn endpoint(&self) -> &[f64] {
        self.seg.endpoint()
    }

    #[inline]
    pub fn original_endpoint(&self) -> &[f64] {
        self.original().endpoint()
    }

    /// `J_ρ` of the original path.
    #[inline]
    pub fn weighted(&self) -> &[f64] {
        self.weighted.value()
    }

    /// `‖·‖_τ` of the simulated segment.
    pub fn norm(&self) -> f64 {
        match &self.norm {
            Some(t) => t.norm(),
            None => self.seg.weighted_norm(),
        }
    }

    /// Append a value in coordinates where simulated = original.
    pub fn push_raw(&mut self, value: &[f64]) -> Result<()> {
        let oldest = self.seg.oldest().to_vec();
        self.seg.advance_mut(value)?;
        self.weighted.shift(&oldest, value);
        if let Some(t) = &mut self.norm {
            t.push(norm2(value));
        }
        Ok(())
    }

    /// Append a simulated value together with its preimage.
    pub fn push_transformed(&mut self, value: &[f64], preimage: &[f64]) -> Result<()> {
        let orig = self
            .original
            .as_mut()
            .ok_or_else(|| Error::Precondition("state has no preimage segment".into()))?;
        let oldest = orig.oldest().to_vec();
        orig.advance_mut(preimage)?;
        self.seg.advance_mut(value)?;
        self.weighted.shift(&oldest, preimage);
        if let Some(t) = &mut self.norm {
            t.push(norm2(value));
        }
        Ok(())
    }
}

/// An SDE on the segment space, in whatever coordinates it is simulated.
pub trait Dynamics: Sync {
    fn path(&self) -> &PathSpaceConfig;

    /// Lift an initial segment given in original coordinates.
    fn init_state(&self, xi: &PathSegment, track_norm: bool) -> Result<PathState>;

    fn drift(&self, st: &PathState, law: &LawSummary, out: &mut [f64]);

    fn sigma(&self, st: &PathState, out: &mut Mat);

    /// Append a new simulated endpoint.
    fn push(&self, st: &mut PathState, value: &[f64]) -> Result<()>;

    /// `b(X, μ) − b(X, ν)` at the original path `X` of `st`, original coordinates.
    fn law_drift_delta(&self, st: &PathState, mu: &LawSummary, nu: &LawSummary, out: &mut [f64]);

    /// `σ` of the original equation at the original endpoint.
    fn sigma_original(&self, st: &PathState, out: &mut Mat);

    /// Whether the drift reads the law at all.
    fn law_dependent(&self) -> bool;
}

impl Dynamics for CoefficientSet {
    fn path(&self) -> &PathSpaceConfig {
        &self.path
    }

    fn init_state(&self, xi: &PathSegment, track_norm: bool) -> Result<PathState> {
        if *xi.config() != self.path {
            return Err(Error::Config("initial segment uses a different grid".into()));
        }
        Ok(PathState::raw(xi.clone(), self.b1.rate, track_norm))
    }

    #[inline]
    fn drift(&self, st: &PathState, law: &LawSummary, out: &mut [f64]) {
        let x = st.endpoint();
        self.b1.eval_features(x, st.weighted(), &law.mean_endpoint, out);
        if !self.b0.is_zero() {
            let d = x.len();
            let mut tmp = [0.0; 4];
            if d <= 4 {
                self.b0.eval(x, &mut tmp[..d]);
                for (o, t) in out.iter_mut().zip(&tmp[..d]) {
                    *o += t;
                }
            } else {
                let v = self.b0.eval_vec(x);
                for (o, t) in out.iter_mut().zip(&v) {
                    *o += t;
                }
            }
        }
    }

    #[inline]
    fn sigma(&self, st: &PathState, out: &mut Mat) {
        self.sigma.eval(st.endpoint(), out);
    }

    #[inline]
    fn push(&self, st: &mut PathState, value: &[f64]) -> Result<()> {
        st.push_raw(value)
    }

    fn law_drift_delta(&self, _st: &PathState, mu: &LawSummary, nu: &LawSummary, out: &mut [f64]) {
        self.b1.law_delta(&mu.mean_endpoint, &nu.mean_endpoint, out);
    }

    fn sigma_original(&self, st: &PathState, out: &mut Mat) {
        self.sigma.eval(st.original_endpoint(), out);
    }

    fn law_dependent(&self) -> bool {
        CoefficientSet::law_dependent(self)
    }
}

/// Time stepping: `steps` steps of size `h` with a save every `save_every` steps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub h: f64,
    pub steps: usize,
    pub save_every: usize,
}

impl TimeGrid {
    /// Grid on `[0, t_end]` with the path step, saving every `save_dt`.
    pub fn new(path: &PathSpaceConfig, t_end: f64, save_dt: f64) -> Result<Self> {
        let h = path.h;
        let steps = on_grid(t_end, h, "horizon")?;
        let save_every = on_grid(save_dt, h, "save interval")?;
        if save_every == 0 {
            return Err(Error::Config("save interval must be positive".into()));
        }
        Ok(Self { h, steps, save_every })
    }

    /// Number of saved states, including `t = 0`.
    pub fn n_saves(&self) -> usize {
        self.steps / self.save_every + 1
    }

    pub fn save_times(&self) -> Vec<f64> {
        (0..self.n_saves())
            .map(|k| (k * self.save_every) as f64 * self.h)
            .collect()
    }

    /// Save index reached after completing `step` steps, if any.
    #[inline]
    pub fn save_index(&self, step: usize) -> Option<usize> {
        (step % self.save_every == 0).then_some(step / self.save_every)
    }

    pub fn t_end(&self) -> f64 {
        self.steps as f64 * self.h
    }
}

fn on_grid(t: f64, h: f64, what: &str) -> Result<usize> {
    let r = t / h;
    let k = r.round();
    if !(t >= 0.0) || (r - k).abs() > 1e-9 * r.max(1.0) {
        return Err(Error::Config(format!("{what} {t} is not a multiple of h = {h}")));
    }
    Ok(k as usize)
}

/// Law argument fed to the drift along a simulation.
#[derive(Debug, Clone)]
pub enum LawPath {
    Static(LawSummary),
    /// One summary per step, index `n` used on `[t_n, t_{n+1})`.
    PerStep(Vec<LawSummary>),
}

impl LawPath {
    #[inline]
    pub fn at(&self, step: usize) -> &LawSummary {
        match self {
            LawPath::Static(s) => s,
            LawPath::PerStep(v) => &v[step.min(v.len() - 1)],
        }
    }
}

/// One Euler step on a bare segment: `x ← x + drift·h + σ dW`, then shift.
pub fn step_euler(
    seg: &PathSegment,
    drift: &[f64],
    sigma: &Mat,
    h: f64,
    dw: &[f64],
    step: usize,
) -> Result<PathSegment> {
    let d = seg.dim();
    if drift.len() != d || dw.len() != d || sigma.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: drift.len().max(dw.len()).max(sigma.dim()),
        });
    }
    let mut new = seg.endpoint().to_vec();
    for (x, b) in new.iter_mut().zip(drift) {
        *x += b * h;
    }
    sigma.mul_vec_add(dw, &mut new);
    if !finite_state(&new) {
        return Err(Error::BlowUp { step, unit: 0 });
    }
    seg.advance(&new)
}

#[inline]
pub(crate) fn finite_state(x: &[f64]) -> bool {
    x.iter().all(|v| v.is_finite() && v.abs() < BLOWUP_LEVEL)
}

/// Reusable per-path buffers.
pub(crate) struct Scratch {
    pub drift: Vec<f64>,
    pub sig: Mat,
    pub dw: Vec<f64>,
    pub next: Vec<f64>,
}

impl Scratch {
    pub fn new(d: usize) -> Self {
        Self {
            drift: vec![0.0; d],
            sig: Mat::zeros(d),
            dw: vec![0.0; d],
            next: vec![0.0; d],
        }
    }
}

/// Euler step of a [`PathState`] with increment `sc.dw` already drawn.
#[inline]
pub(crate) fn advance_state<D: Dynamics + ?Sized>(
    dynamics: &D,
    st: &mut PathState,
    law: &LawSummary,
    h: f64,
    sc: &mut Scratch,
    step: usize,
    unit: usize,
) -> Result<()> {
    dynamics.drift(st, law, &mut sc.drift);
    dynamics.sigma(st, &mut sc.sig);
    sc.next.copy_from_slice(st.endpoint());
    for (x, b) in sc.next.iter_mut().zip(&sc.drift) {
        *x += b * h;
    }
    sc.sig.mul_vec_add(&sc.dw, &mut sc.next);
    if !finite_state(&sc.next) {
        return Err(Error::BlowUp { step, unit });
    }
    dynamics.push(st, &sc.next).map_err(|_| Error::BlowUp { step, unit })
}

/// Simulate one path from `xi`, calling `observe(save_index, state)` at
/// every save time (including `t = 0`).
pub fn simulate_path<D, F>(
    dynamics: &D,
    xi: &PathSegment,
    law: &LawPath,
    grid: &TimeGrid,
    key: StreamKey,
    track_norm: bool,
    mut observe: F,
) -> Result<PathState>
where
    D: Dynamics + ?Sized,
    F: FnMut(usize, &PathState),
{
    let d = dynamics.path().d;
    let mut st = dynamics.init_state(xi, track_norm)?;
    let mut rng = NoiseStream::new(key);
    let mut sc = Scratch::new(d);
    let sqrt_h = grid.h.sqrt();
    observe(0, &st);
    for n in 0..grid.steps {
        rng.increments(sqrt_h, &mut sc.dw);
        advance_state(dynamics, &mut st, law.at(n), grid.h, &mut sc, n + 1, key.particle as usize)?;
        if let Some(k) = grid.save_index(n + 1) {
            observe(k, &st);
        }
    }
    Ok(st)
}

/// Monte Carlo over `n_paths` independent paths from `xi`; path `j` uses the
/// stream `(seed, 0, j)`. Returns `observe` outputs as `[path][save]`.
pub fn simulate_paths<D, T, F>(
    dynamics: &D,
    xi: &PathSegment,
    law: &LawPath,
    grid: &TimeGrid,
    n_paths: usize,
    seed: u64,
    observe: F,
) -> Vec<Result<Vec<T>>>
where
    D: Dynamics + ?Sized,
    T: Send,
    F: Fn(&PathState) -> T + Sync + Send,
{
    par::map_indexed(n_paths, |j| {
        let mut out = Vec::with_capacity(grid.n_saves());
        simulate_path(
            dynamics,
            xi,
            law,
            grid,
            StreamKey::new(seed, 0, j as u64),
            false,
            |_, st| out.push(observe(st)),
        )?;
        Ok(out)
    })
}

/// Result of an interacting-particle run: clouds at save times (original
/// coordinates) and the law summary used at every step.
#[derive(Debug, Clone)]
pub struct McKeanRun {
    pub times: Vec<f64>,
    pub clouds: Vec<ParticleCloud>,
    pub laws: Vec<LawSummary>,
}

impl McKeanRun {
    pub fn law_path(&self) -> LawPath {
        LawPath::PerStep(self.laws.clone())
    }

    pub fn final_cloud(&self) -> &ParticleCloud {
        self.clouds.last().expect("at least the initial cloud")
    }
}

fn cloud_law(states: &[(PathState, NoiseStream, Scratch)], d: usize) -> LawSummary {
    LawSummary::from_endpoints(d, states.iter().map(|s| s.0.original_endpoint()))
}

/// Interacting particle system started from the particles of `init`
/// (uniform weights required). Particle `i` uses the stream
/// `(seed, replica, i)`; every step freezes the law at the current empirical
/// mean endpoint. `observe(save_index, states)` sees all particles at save times.
pub fn simulate_mckean_observed<D, F>(
    dynamics: &D,
    init: &ParticleCloud,
    grid: &TimeGrid,
    seed: u64,
    replica: u64,
    mut observe: F,
) -> Result<Vec<LawSummary>>
where
    D: Dynamics + ?Sized,
    F: FnMut(usize, &[PathState]),
{
    if !init.is_uniform() {
        return Err(Error::InvalidCloud("interacting particles need uniform weights".into()));
    }
    let d = dynamics.path().d;
    let mut states: Vec<(PathState, NoiseStream, Scratch)> = init
        .particles()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Ok((
                dynamics.init_state(p, false)?,
                NoiseStream::new(StreamKey::new(seed, replica, i as u64)),
                Scratch::new(d),
            ))
        })
        .collect::<Result<_>>()?;
    let sqrt_h = grid.h.sqrt();
    let h = grid.h;
    let mut laws = Vec::with_capacity(grid.steps);
    let snapshot = |states: &[(PathState, NoiseStream, Scratch)]| -> Vec<PathState> {
        states.iter().map(|s| s.0.clone()).collect()
    };
    observe(0, &snapshot(&states));
    for n in 0..grid.steps {
        let law = cloud_law(&states, d);
        par::try_for_each_mut(&mut states, |i, (st, rng, sc)| {
            rng.increments(sqrt_h, &mut sc.dw);
            advance_state(dynamics, st, &law, h, sc, n + 1, i)
        })?;
        laws.push(law);
        if let Some(k) = grid.save_index(n + 1) {
            observe(k, &snapshot(&states));
        }
    }
    Ok(laws)
}

/// [`simulate_mckean_observed`] collecting the cloud at every save time.
pub fn simulate_mckean<D: Dynamics + ?Sized>(
    dynamics: &D,
    init: &ParticleCloud,
    grid: &TimeGrid,
    seed: u64,
    replica: u64,
) -> Result<McKeanRun> {
    let mut clouds = Vec::with_capacity(grid.n_saves());
    let mut fail = None;
    let laws = simulate_mckean_observed(dynamics, init, grid, seed, replica, |_, states| {
        let parts = states.iter().map(|s| s.original().clone()).collect();
        match ParticleCloud::uniform(parts) {
            Ok(c) => clouds.push(c),
            Err(e) => fail = Some(e),
        }
    })?;
    if let Some(e) = fail {
        return Err(e);
    }
    Ok(McKeanRun {
        times: grid.save_times(),
        clouds,
        laws,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::{Diffusion, PathDrift, Saturation, SingularDrift};
    use crate::coefficients::DiniModulus;
    use crate::stats::Estimate;

    fn cfg(h: f64, t_mem: f64) -> PathSpaceConfig {
        PathSpaceConfig::new(1, 1.0, h, t_mem).unwrap()
    }

    fn ou(p: PathSpaceConfig) -> CoefficientSet {
        let mut b1 = PathDrift::zero(1, 2.0);
        b1.theta = Mat::identity(1);
        b1.saturation = Saturation::Linear;
        CoefficientSet::assemble(
            "ou",
            p,
            SingularDrift::Zero,
            b1,
            Diffusion::Constant(Mat::identity(1)),
            0.0,
            DiniModulus::power(1.0, 1.0).unwrap(),
        )
    }

    #[test]
    fn step_euler_trivial_cases() {
        let p = cfg(0.1, 1.0);
        let s = PathSegment::constant(p, &[2.0]).unwrap();
        let same = step_euler(&s, &[0.0], &Mat::zeros(1), 0.1, &[0.3], 1).unwrap();
        assert_eq!(same, s);
        let moved = step_euler(&s, &[5.0], &Mat::zeros(1), 0.1, &[0.3], 1).unwrap();
        assert!((moved.endpoint()[0] - 2.5).abs() < 1e-15);
        assert_eq!(moved.value(p.steps() - 1), &[2.0]);
    }

    #[test]
    fn step_euler_reports_blowup_step() {
        let p = cfg(0.1, 1.0);
        let s = PathSegment::zeros(p);
        match step_euler(&s, &[f64::INFINITY], &Mat::identity(1), 0.1, &[0.0], 17) {
            Err(Error::BlowUp { step, .. }) => assert_eq!(step, 17),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ou_moments_match_closed_form() {
        let p = cfg(0.01, 0.5);
        let c = ou(p);
        let grid = TimeGrid::new(&p, 1.0, 0.5).unwrap();
        let x0 = 1.5;
        let xi = PathSegment::constant(p, &[x0]).unwrap();
        let law = LawPath::Static(LawSummary::zero(1));
        let out: Vec<Vec<f64>> = simulate_paths(&c, &xi, &law, &grid, 20_000, 3, |st| st.endpoint()[0])
            .into_iter()
            .collect::<Result<_>>()
            .unwrap();
        for (k, t) in grid.save_times().into_iter().enumerate().skip(1) {
            let xs: Vec<f64> = out.iter().map(|r| r[k]).collect();
            let m = Estimate::from_samples(&xs);
            // Euler moments are exact for the discrete recursion; compare to the SDE
            let mean = (-t).exp() * x0;
            let var = (1.0 - (-2.0 * t).exp()) / 2.0;
            let bias = 0.01 * t;
            assert!((m.mean - mean).abs() < 3.0 * m.stderr + bias, "t={t} mean {}", m.mean);
            let sq: Vec<f64> = xs.iter().map(|x| (x - m.mean).powi(2)).collect();
            let v = Estimate::from_samples(&sq);
            assert!((v.mean - var).abs() < 3.0 * v.stderr + bias, "t={t} var {}", v.mean);
        }
    }

    #[test]
    fn mckean_without_law_matches_path_mode_bitwise() {
        let p = cfg(0.05, 1.0);
        let c = CoefficientSet::dini_sqrt(p).with_law_coupling(0.0);
        let grid = TimeGrid::new(&p, 1.0, 0.25).unwrap();
        let xi = PathSegment::from_fn(p, |s| vec![0.3 + s]).unwrap();
        let cloud = ParticleCloud::uniform(vec![xi.clone(); 5]).unwrap();
        let run = simulate_mckean(&c, &cloud, &grid, 9, 0).unwrap();
        let law = LawPath::Static(LawSummary::zero(1));
        let paths = simulate_paths(&c, &xi, &law, &grid, 5, 9, |st| st.segment().clone());
        for (j, r) in paths.into_iter().enumerate() {
            let r = r.unwrap();
            for (k, cl) in run.clouds.iter().enumerate() {
                assert_eq!(cl.particles()[j], r[k]);
            }
        }
        // single particle, same seed
        let one = ParticleCloud::point_mass(xi.clone());
        let run1 = simulate_mckean(&c, &one, &grid, 9, 0).unwrap();
        assert_eq!(run1.final_cloud().particles()[0], run.final_cloud().particles()[0]);
    }

    #[test]
    fn brownian_cloud_covariance_grows_linearly() {
        let p = cfg(0.05, 0.5);
        let c = CoefficientSet::brownian(p);
        let grid = TimeGrid::new(&p, 2.0, 1.0).unwrap();
        let cloud = ParticleCloud::uniform(vec![PathSegment::zeros(p); 4000]).unwrap();
        let run = simulate_mckean(&c, &cloud, &grid, 5, 0).unwrap();
        for (cl, t) in run.clouds.iter().zip(&run.times).skip(1) {
            let sq: Vec<f64> = cl.particles().iter().map(|s| s.endpoint()[0].powi(2)).collect();
            let e = Estimate::from_samples(&sq);
            assert!((e.mean - t).abs() < 3.0 * e.stderr, "t={t}: {e:?}");
        }
    }

    #[test]
    fn incremental_features_match_direct_evaluation() {
        let p = cfg(0.05, 2.0);
        let c = CoefficientSet::linear(p);
        let grid = TimeGrid::new(&p, 3.0, 0.5).unwrap();
        let xi = PathSegment::from_fn(p, |s| vec![(3.0 * s).sin()]).unwrap();
        let law = LawPath::Static(LawSummary::zero(1));
        simulate_path(&c, &xi, &law, &grid, StreamKey::new(1, 0, 0), true, |_, st| {
            let direct = crate::pathspace::exp_weighted_integral(st.segment(), c.b1.rate);
            assert!((direct[0] - st.weighted()[0]).abs() < 1e-10);
            assert!((st.norm() - st.segment().weighted_norm()).abs() < 1e-12);
        })
        .unwrap();
    }

    #[test]
    fn time_grid_validation() {
        let p = cfg(0.1, 1.0);
        assert!(TimeGrid::new(&p, 1.05, 0.5).is_err());
        let g = TimeGrid::new(&p, 1.0, 0.5).unwrap();
        assert_eq!(g.n_saves(), 3);
        assert_eq!(g.save_times(), vec![0.0, 0.5, 1.0]);
    }
}

//! Empirical Wasserstein distances between particle clouds with the
//! truncated weighted path seminorm as ground cost.
//!
//! Solvers: Hungarian assignment for uniform clouds of equal size, the
//! transportation simplex for general weights on small instances, and
//! log-domain Sinkhorn with marginal rounding above that.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::simulate::ParticleCloud;

/// Largest `N·M` solved exactly by the transportation simplex.
pub const EXACT_CELLS: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Solver {
    Assignment,
    Simplex,
    Sinkhorn { epsilon: f64 },
}

impl Solver {
    pub fn name(&self) -> &'static str {
        match self {
            Solver::Assignment => "assignment",
            Solver::Simplex => "simplex",
            Solver::Sinkhorn { .. } => "sinkhorn",
        }
    }
}

/// Coupling of two weight vectors with its cost.
#[derive(Debug, Clone, Serialize)]
pub struct OTPlan {
    pub n: usize,
    pub m: usize,
    /// Row-major `n × m`.
    pub cost: Vec<f64>,
    pub plan: Vec<f64>,
    pub objective: f64,
    pub solver: Solver,
    /// Primal minus a feasible dual value; zero for exact solvers.
    pub gap: f64,
}

impl OTPlan {
    fn from_plan(n: usize, m: usize, cost: Vec<f64>, plan: Vec<f64>, solver: Solver, gap: f64) -> Self {
        let objective = cost.iter().zip(&plan).map(|(c, p)| c * p).sum();
        Self {
            n,
            m,
            cost,
            plan,
            objective,
            solver,
            gap,
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.plan[i * self.m..(i + 1) * self.m].iter().sum())
            .collect()
    }

    pub fn col_sums(&self) -> Vec<f64> {
        (0..self.m)
            .map(|j| (0..self.n).map(|i| self.plan[i * self.m + j]).sum())
            .collect()
    }
}

/// Minimum-cost perfect matching of a square cost matrix (shortest
/// augmenting paths with potentials). Returns the column of every row.
pub fn hungarian(cost: &[f64], n: usize) -> Vec<usize> {
    assert_eq!(cost.len(), n * n);
    if n == 0 {
        return Vec::new();
    }
    // 1-based arrays, index 0 is the virtual root
    let inf = f64::INFINITY;
    let mut u = vec![0.0; n + 1];
    let mut v = vec![0.0; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    let mut minv = vec![inf; n + 1];
    let mut used = vec![false; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        minv.iter_mut().for_each(|x| *x = inf);
        used.iter_mut().for_each(|x| *x = false);
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = inf;
            let mut j1 = 0usize;
            let row = &cost[(i0 - 1) * n..i0 * n];
            for j in 1..=n {
                if !used[j] {
                    let cur = row[j - 1] - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assign = vec![0usize; n];
    for j in 1..=n {
        if p[j] > 0 {
            assign[p[j] - 1] = j - 1;
        }
    }
    assign
}

/// Exact transport between weight vectors `a` (rows) and `b` (columns) by
/// the transportation simplex (MODI). Optimality is certified by dual
/// feasibility of the final potentials.
pub fn transport_simplex(cost: &[f64], a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    let (n, m) = (a.len(), b.len());
    assert_eq!(cost.len(), n * m);
    let mut flow = vec![0.0; n * m];
    let mut basic = vec![false; n * m];
    let mut basis: Vec<(usize, usize)> = Vec::with_capacity(n + m - 1);

    // northwest corner, keeping degenerate zeros so the basis is a spanning tree
    let (mut sa, mut sb) = (a.to_vec(), b.to_vec());
    let (mut i, mut j) = (0usize, 0usize);
    while i < n && j < m {
        let q = sa[i].min(sb[j]);
        flow[i * m + j] = q;
        basic[i * m + j] = true;
        basis.push((i, j));
        sa[i] -= q;
        sb[j] -= q;
        if i == n - 1 && j == m - 1 {
            break;
        }
        if (sa[i] <= sb[j] && i < n - 1) || j == m - 1 {
            i += 1;
        } else {
            j += 1;
        }
    }
    debug_assert_eq!(basis.len(), n + m - 1);

    let scale = cost.iter().cloned().fold(0.0f64, f64::max).max(1e-300);
    let tol = 1e-12 * scale;
    let mut u = vec![0.0; n];
    let mut v = vec![0.0; m];
    let max_iter = 50 * (n + m) * (n + m) + 1000;
    for _ in 0..max_iter {
        potentials(cost, &basis, n, m, &mut u, &mut v);
        // entering cell: most negative reduced cost
        let mut best = -tol;
        let mut enter = None;
        for i in 0..n {
            for j in 0..m {
                if basic[i * m + j] {
                    continue;
                }
                let r = cost[i * m + j] - u[i] - v[j];
                if r < best {
                    best = r;
                    enter = Some((i, j));
                }
            }
        }
        let Some((ei, ej)) = enter else {
            return Ok(flow);
        };
        let cycle = tree_path(&basis, n, m, ei, ej);
        // cycle: entering cell (+), then alternating −, +, … along the tree path
        let mut theta = f64::INFINITY;
        let mut leave = usize::MAX;
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                let f = flow[ci * m + cj];
                if f < theta {
                    theta = f;
                    leave = k;
                }
            }
        }
        for (k, &(ci, cj)) in cycle.iter().enumerate() {
            if k % 2 == 0 {
                flow[ci * m + cj] -= theta;
            } else {
                flow[ci * m + cj] += theta;
            }
        }
        flow[ei * m + ej] += theta;
        let (li, lj) = cycle[leave];
        flow[li * m + lj] = 0.0;
        basic[li * m + lj] = false;
        basic[ei * m + ej] = true;
        let pos = basis.iter().position(|&c| c == (li, lj)).expect("leaving cell is basic");
        basis[pos] = (ei, ej);
    }
    Err(Error::SolverFailure {
        achieved: f64::NAN,
        tolerance: tol,
    })
}

/// `u_i + v_j = c_ij` on basic cells, `u_0 = 0`.
fn potentials(cost: &[f64], basis: &[(usize, usize)], n: usize, m: usize, u: &mut [f64], v: &mut [f64]) {
    let mut row_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut col_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
    for &(i, j) in basis {
        row_adj[i].push(j);
        col_adj[j].push(i);
    }
    let mut seen_r = vec![false; n];
    let mut seen_c = vec![false; m];
    // stack of (is_row, index)
    let mut stack = vec![(true, 0usize)];
    u[0] = 0.0;
    seen_r[0] = true;
    while let Some((is_row, k)) = stack.pop() {
        if is_row {
            for &j in &row_adj[k] {
                if !seen_c[j] {
                    seen_c[j] = true;
                    v[j] = cost[k * m + j] - u[k];
                    stack.push((false, j));
                }
            }
        } else {
            for &i in &col_adj[k] {
                if !seen_r[i] {
                    seen_r[i] = true;
                    u[i] = cost[i * m + k] - v[k];
                    stack.push((true, i));
                }
            }
        }
    }
}

/// Basic cells on the tree path from column `ej` back to row `ei`, ordered so
/// that index 0 shares column `ej` with the entering cell.
fn tree_path(basis: &[(usize, usize)], n: usize, m: usize, ei: usize, ej: usize) -> Vec<(usize, usize)> {
    // nodes: rows 0..n, columns n..n+m
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n + m];
    for (idx, &(i, j)) in basis.iter().enumerate() {
        adj[i].push((n + j, idx));
        adj[n + j].push((i, idx));
    }
    let start = n + ej;
    let target = ei;
    let mut parent: Vec<Option<(usize, usize)>> = vec![None; n + m];
    let mut visited = vec![false; n + m];
    let mut queue = std::collections::VecDeque::new();
    visited[start] = true;
    queue.push_back(start);
    while let Some(x) = queue.pop_front() {
        if x == target {
            break;
        }
        for &(y, idx) in &adj[x] {
            if !visited[y] {
                visited[y] = true;
                parent[y] = Some((x, idx));
                queue.push_back(y);
            }
        }
    }
    let mut path = Vec::new();
    let mut x = target;
    while x != start {
        let (px, idx) = parent[x].expect("basis is a spanning tree");
        path.push(basis[idx]);
        x = px;
    }
    path.reverse();
    path
}

/// Entropic transport in the log domain, rounded onto the exact marginals.
/// Returns the plan and a duality gap against the c-transform dual bound.
pub fn sinkhorn(cost: &[f64], a: &[f64], b: &[f64], epsilon: f64, max_iter: usize) -> (Vec<f64>, f64) {
    let (n, m) = (a.len(), b.len());
    let la: Vec<f64> = a.iter().map(|x| x.ln()).collect();
    let lb: Vec<f64> = b.iter().map(|x| x.ln()).collect();
    let mut f = vec![0.0; n];
    let mut g = vec![0.0; m];
    let lse = |vals: &mut dyn Iterator<Item = f64>| -> f64 {
        let v: Vec<f64> = vals.collect();
        let mx = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return mx;
        }
        mx + v.iter().map(|x| (x - mx).exp()).sum::<f64>().ln()
    };
    for _ in 0..max_iter {
        for i in 0..n {
            let s = lse(&mut (0..m).map(|j| (g[j] - cost[i * m + j]) / epsilon + lb[j]));
            f[i] = -epsilon * s;
        }
        let mut err = 0.0f64;
        for j in 0..m {
            let s = lse(&mut (0..n).map(|i| (f[i] - cost[i * m + j]) / epsilon + la[i]));
            g[j] = -epsilon * s;
        }
        // row marginal violation after the column update
        for i in 0..n {
            let r: f64 = (0..m)
                .map(|j| ((f[i] + g[j] - cost[i * m + j]) / epsilon).exp() * a[i] * b[j])
                .sum();
            err += (r - a[i]).abs();
        }
        if err < 1e-12 {
            break;
        }
    }
    let mut plan = vec![0.0; n * m];
    for i in 0..n {
        for j in 0..m {
            plan[i * m + j] = ((f[i] + g[j] - cost[i * m + j]) / epsilon).exp() * a[i] * b[j];
        }
    }
    round_to_marginals(&mut plan, a, b);
    // feasible dual: c-transform of f
    let gc: Vec<f64> = (0..m)
        .map(|j| {
            (0..n)
                .map(|i| cost[i * m + j] - f[i])
                .fold(f64::INFINITY, f64::min)
        })
        .collect();
    let dual: f64 = a.iter().zip(&f).map(|(x, y)| x * y).sum::<f64>()
        + b.iter().zip(&gc).map(|(x, y)| x * y).sum::<f64>();
    let primal: f64 = plan.iter().zip(cost).map(|(p, c)| p * c).sum();
    (plan, (primal - dual).max(0.0))
}

/// Rounding onto the transport polytope (Altschuler–Weed–Rigollet).
fn round_to_marginals(plan: &mut [f64], a: &[f64], b: &[f64]) {
    let (n, m) = (a.len(), b.len());
    for i in 0..n {
        let r: f64 = plan[i * m..(i + 1) * m].iter().sum();
        if r > a[i] {
            let s = a[i] / r;
            plan[i * m..(i + 1) * m].iter_mut().for_each(|p| *p *= s);
        }
    }
    for j in 0..m {
        let c: f64 = (0..n).map(|i| plan[i * m + j]).sum();
        if c > b[j] {
            let s = b[j] / c;
            (0..n).for_each(|i| plan[i * m + j] *= s);
        }
    }
    let er: Vec<f64> = (0..n)
        .map(|i| a[i] - plan[i * m..(i + 1) * m].iter().sum::<f64>())
        .collect();
    let ec: Vec<f64> = (0..m)
        .map(|j| b[j] - (0..n).map(|i| plan[i * m + j]).sum::<f64>())
        .collect();
    let tot: f64 = er.iter().sum();
    if tot > 0.0 {
        for i in 0..n {
            for j in 0..m {
                plan[i * m + j] += er[i] * ec[j] / tot;
            }
        }
    }
}

/// Exact or entropic plan for a cost matrix and weights.
pub fn solve(cost: Vec<f64>, a: &[f64], b: &[f64], uniform: bool) -> Result<OTPlan> {
    let (n, m) = (a.len(), b.len());
    if uniform && n == m {
        let assign = hungarian(&cost, n);
        let mut plan = vec![0.0; n * m];
        for (i, &j) in assign.iter().enumerate() {
            plan[i * m + j] = 1.0 / n as f64;
        }
        return Ok(OTPlan::from_plan(n, m, cost, plan, Solver::Assignment, 0.0));
    }
    if n * m <= EXACT_CELLS {
        let plan = transport_simplex(&cost, a, b)?;
        return Ok(OTPlan::from_plan(n, m, cost, plan, Solver::Simplex, 0.0));
    }
    let mean_cost = cost.iter().sum::<f64>() / cost.len() as f64;
    let epsilon = 1e-3 * mean_cost.max(1e-300);
    let (plan, gap) = sinkhorn(&cost, a, b, epsilon, 5000);
    Ok(OTPlan::from_plan(n, m, cost, plan, Solver::Sinkhorn { epsilon }, gap))
}

fn check_pair(a: &ParticleCloud, b: &ParticleCloud, k: f64) -> Result<()> {
    if !(k >= 1.0 && k.is_finite()) {
        return Err(Error::Precondition(format!("order k must be >= 1, got {k}")));
    }
    if a.config() != b.config() {
        return Err(Error::InvalidCloud("clouds live on different grids".into()));
    }
    Ok(())
}

/// Cost matrix `‖ξ_i − η_j‖_{N,τ}^k` over the last `level_steps` grid steps.
pub fn cost_matrix(a: &ParticleCloud, b: &ParticleCloud, k: f64, level_steps: usize) -> Vec<f64> {
    let cfg = a.config();
    let d = cfg.d;
    let steps = cfg.steps();
    let decay = (-cfg.tau * cfg.h).exp();
    let weights: Vec<f64> = (0..=level_steps).map(|j| decay.powi(j as i32)).collect();
    // newest-first flat views restricted to the window
    let window = |seg: &crate::pathspace::PathSegment| -> Vec<f64> {
        let mut out = Vec::with_capacity((level_steps + 1) * d);
        for j in 0..=level_steps {
            out.extend_from_slice(seg.value(steps - j));
        }
        out
    };
    let wa: Vec<Vec<f64>> = a.particles().iter().map(window).collect();
    let wb: Vec<Vec<f64>> = b.particles().iter().map(window).collect();
    let m = wb.len();
    let rows: Vec<Vec<f64>> = crate::par::map_indexed(wa.len(), |i| {
        let x = &wa[i];
        wb.iter()
            .map(|y| {
                let mut best = 0.0f64;
                for (j, w) in weights.iter().enumerate() {
                    let mut s = 0.0;
                    for c in 0..d {
                        let t = x[j * d + c] - y[j * d + c];
                        s += t * t;
                    }
                    let v = s.sqrt() * w;
                    if v > best {
                        best = v;
                    }
                }
                if k == 1.0 {
                    best
                } else {
                    best.powf(k)
                }
            })
            .collect()
    });
    let mut out = Vec::with_capacity(wa.len() * m);
    for r in rows {
        out.extend(r);
    }
    out
}

/// Optimal plan for `W_k` at truncation level `level` (time units).
pub fn wk_truncated_plan(a: &ParticleCloud, b: &ParticleCloud, k: f64, level: f64) -> Result<OTPlan> {
    check_pair(a, b, k)?;
    let ks = a.config().level_steps(level)?;
    let cost = cost_matrix(a, b, k, ks);
    solve(cost, a.weights(), b.weights(), a.is_uniform() && b.is_uniform())
}

/// `W_k` between clouds with ground cost `‖·‖_{N,τ}`.
pub fn wk_truncated(a: &ParticleCloud, b: &ParticleCloud, k: f64, level: f64) -> Result<f64> {
    let plan = wk_truncated_plan(a, b, k, level)?;
    Ok(plan.objective.max(0.0).powf(1.0 / k))
}

/// `W_k` with the supremum over truncation levels. The truncated cost is
/// pointwise nondecreasing in the level, so the maximum is the top level.
pub fn wk_full(a: &ParticleCloud, b: &ParticleCloud, k: f64) -> Result<f64> {
    check_pair(a, b, k)?;
    wk_truncated(a, b, k, a.config().t_mem)
}

/// `(level, W_k at that level)` for every grid level `h, 2h, …, T_mem`.
pub fn wk_levels(a: &ParticleCloud, b: &ParticleCloud, k: f64) -> Result<Vec<(f64, f64)>> {
    check_pair(a, b, k)?;
    let cfg = *a.config();
    (1..=cfg.steps())
        .map(|s| {
            let cost = cost_matrix(a, b, k, s);
            let p = solve(cost, a.weights(), b.weights(), a.is_uniform() && b.is_uniform())?;
            Ok((s as f64 * cfg.h, p.objective.max(0.0).powf(1.0 / k)))
        })
        .collect()
}

/// `‖μ‖_k = (Σ w_i ‖ξ_i‖_τ^k)^{1/k}`.
pub fn cloud_moment(a: &ParticleCloud, k: f64) -> f64 {
    a.expect(|s| s.weighted_norm().powf(k)).powf(1.0 / k)
}

/// `W_1` between two equally sized samples on the line (sorted matching).
pub fn w1_sorted(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.len() != ys.len() || xs.is_empty() {
        return Err(Error::InvalidCloud("samples must be nonempty and of equal size".into()));
    }
    let mut a = xs.to_vec();
    let mut b = ys.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).abs()).sum::<f64>() / a.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{PathSegment, PathSpaceConfig};
    use crate::rng::{NoiseStream, StreamKey};

    fn cfg() -> PathSpaceConfig {
        PathSpaceConfig::new(1, 0.7, 0.5, 2.0).unwrap()
    }

    fn random_cloud(rng: &mut NoiseStream, n: usize) -> ParticleCloud {
        let c = cfg();
        let parts = (0..n)
            .map(|_| {
                let data = (0..c.len()).map(|_| rng.normal()).collect();
                PathSegment::from_flat(c, data).unwrap()
            })
            .collect();
        ParticleCloud::uniform(parts).unwrap()
    }

    fn permutations(n: usize) -> Vec<Vec<usize>> {
        if n == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for p in permutations(n - 1) {
            for pos in 0..=p.len() {
                let mut q = p.clone();
                q.insert(pos, n - 1);
                out.push(q);
            }
        }
        out
    }

    #[test]
    fn identical_clouds_are_at_distance_zero() {
        let mut rng = NoiseStream::new(StreamKey::new(1, 0, 0));
        let a = random_cloud(&mut rng, 4);
        assert_eq!(wk_full(&a, &a, 2.0).unwrap(), 0.0);
    }

    #[test]
    fn single_particles_use_the_seminorm() {
        let mut rng = NoiseStream::new(StreamKey::new(2, 0, 0));
        let a = random_cloud(&mut rng, 1);
        let b = random_cloud(&mut rng, 1);
        let d = a.particles()[0].sub(&b.particles()[0]).unwrap();
        let w = wk_truncated(&a, &b, 2.0, 1.0).unwrap();
        assert!((w - d.truncated_norm(1.0).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn assignment_matches_permutation_brute_force() {
        let mut rng = NoiseStream::new(StreamKey::new(3, 0, 0));
        for n in 1..=6 {
            let a = random_cloud(&mut rng, n);
            let b = random_cloud(&mut rng, n);
            let cost = cost_matrix(&a, &b, 2.0, cfg().steps());
            let best = permutations(n)
                .iter()
                .map(|p| p.iter().enumerate().map(|(i, &j)| cost[i * n + j]).sum::<f64>())
                .fold(f64::INFINITY, f64::min)
                / n as f64;
            let w = wk_full(&a, &b, 2.0).unwrap();
            assert!((w * w - best).abs() < 1e-12, "n={n}");
        }
    }

    #[test]
    fn simplex_agrees_with_assignment_on_uniform_weights() {
        let mut rng = NoiseStream::new(StreamKey::new(4, 0, 0));
        for n in [2, 3, 5, 8] {
            let a = random_cloud(&mut rng, n);
            let b = random_cloud(&mut rng, n);
            let cost = cost_matrix(&a, &b, 1.0, cfg().steps());
            let w = vec![1.0 / n as f64; n];
            let exact = solve(cost.clone(), &w, &w, true).unwrap();
            let simplex = solve(cost, &w, &w, false).unwrap();
            assert_eq!(simplex.solver, Solver::Simplex);
            assert!((exact.objective - simplex.objective).abs() < 1e-12);
        }
    }

    #[test]
    fn simplex_respects_general_marginals() {
        let cost = vec![1.0, 3.0, 2.0, 0.5, 4.0, 1.0];
        let a = [0.3, 0.7];
        let b = [0.2, 0.5, 0.3];
        let plan = transport_simplex(&cost, &a, &b).unwrap();
        let p = OTPlan::from_plan(2, 3, cost.clone(), plan, Solver::Simplex, 0.0);
        for (r, x) in p.row_sums().iter().zip(&a) {
            assert!((r - x).abs() < 1e-12);
        }
        for (c, x) in p.col_sums().iter().zip(&b) {
            assert!((c - x).abs() < 1e-12);
        }
        // brute-force over a fine grid of the 2-dof polytope
        let mut best = f64::INFINITY;
        let steps = 300;
        for s in 0..=steps {
            for t in 0..=steps {
                let x00 = 0.2 * s as f64 / steps as f64;
                let x01 = 0.3 * t as f64 / steps as f64;
                let x02 = 0.3 - x00 - x01;
                if x02 < -1e-12 || x02 > 0.3 + 1e-12 {
                    continue;
                }
                let x10 = 0.2 - x00;
                let x11 = 0.5 - x01;
                let x12 = 0.3 - x02;
                let v = x00 * 1.0 + x01 * 3.0 + x02 * 2.0 + x10 * 0.5 + x11 * 4.0 + x12 * 1.0;
                best = best.min(v);
            }
        }
        assert!(p.objective <= best + 1e-12);
    }

    #[test]
    fn sinkhorn_upper_bounds_and_converges() {
        let mut rng = NoiseStream::new(StreamKey::new(5, 0, 0));
        let n = 6;
        let a = random_cloud(&mut rng, n);
        let b = random_cloud(&mut rng, n);
        let cost = cost_matrix(&a, &b, 2.0, cfg().steps());
        let w = vec![1.0 / n as f64; n];
        let exact = solve(cost.clone(), &w, &w, true).unwrap().objective;
        let mut prev = f64::INFINITY;
        for eps in [1.0, 0.3, 0.1, 0.03] {
            let (plan, gap) = sinkhorn(&cost, &w, &w, eps, 20_000);
            let v: f64 = plan.iter().zip(&cost).map(|(p, c)| p * c).sum();
            assert!(v >= exact - 1e-10);
            assert!(v <= prev + 1e-9);
            assert!(gap >= 0.0);
            prev = v;
        }
        assert!((prev - exact) / exact < 0.05);
    }

    #[test]
    fn levels_are_monotone_and_full_is_top() {
        let mut rng = NoiseStream::new(StreamKey::new(6, 0, 0));
        let a = random_cloud(&mut rng, 5);
        let b = random_cloud(&mut rng, 5);
        let levels = wk_levels(&a, &b, 2.0).unwrap();
        let full = wk_full(&a, &b, 2.0).unwrap();
        for w in levels.windows(2) {
            assert!(w[0].1 <= w[1].1 + 1e-14);
        }
        assert!(levels.iter().all(|l| l.1 <= full + 1e-14));
        assert_eq!(levels.last().unwrap().1, full);
    }

    #[test]
    fn moment_examples() {
        let c = cfg();
        let z = ParticleCloud::point_mass(PathSegment::zeros(c));
        assert_eq!(cloud_moment(&z, 2.0), 0.0);
        let a = PathSegment::constant(c, &[1.0]).unwrap();
        let b = PathSegment::constant(c, &[3.0]).unwrap();
        let cl = ParticleCloud::uniform(vec![a, b]).unwrap();
        assert!((cloud_moment(&cl, 2.0) - 5f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn order_below_one_is_rejected() {
        let c = cfg();
        let z = ParticleCloud::point_mass(PathSegment::zeros(c));
        assert!(wk_full(&z, &z, 0.5).is_err());
    }

    #[test]
    fn w1_sorted_example() {
        assert_eq!(w1_sorted(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(w1_sorted(&[3.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
    }
}

//! The proximal loop `x_{k+1} = prox_{γ f_ξ}(x_k + γ h_k)` and its corrections.
//!
//! | strategy     | `h_k`                                   | control       |
//! |--------------|-----------------------------------------|---------------|
//! | `None`       | `0`                                     | none          |
//! | `Star`       | `∇f_i(x*)`                              | none          |
//! | `Gc`         | `∇f_i(x_k) − ∇f(x_k)`                   | none          |
//! | `Lsvrp{p}`   | `∇f_i(w_k) − ∇f(w_k)`                   | snapshot `w`  |
//! | `PointSaga`  | `∇f_i(wⁱ_k) − (1/n) Σ_j ∇f_j(wʲ_k)`     | table `wʲ`    |
//!
//! `None` works with any [`Sampler`]; a drawn subset `C` is handled by an
//! exact prox over `Σ_{i∈C} f_i/(n p_i)`. The other strategies require uniform
//! single-index sampling.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::numerics::{self, norm_sq, Rng};
use crate::problem::{ProblemConstants, RegressionProblem};
use crate::sampling::Sampler;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CorrectionStrategy {
    None,
    Star,
    Gc,
    Lsvrp { p: f64 },
    PointSaga,
}

impl CorrectionStrategy {
    pub fn name(&self) -> &'static str {
        match self {
            CorrectionStrategy::None => "none",
            CorrectionStrategy::Star => "star",
            CorrectionStrategy::Gc => "gc",
            CorrectionStrategy::Lsvrp { .. } => "lsvrp",
            CorrectionStrategy::PointSaga => "point_saga",
        }
    }
}

/// Control vectors carried between steps. Points are stored as offsets from
/// `x*`; gradients are plain gradients.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlState {
    Empty,
    /// L-SVRP snapshot offset `w − x*` with cached `∇f(w)`.
    Snapshot {
        w: Vec<f64>,
        full_grad: Vec<f64>,
    },
    /// Point SAGA table offsets `wʲ − x*`, cached `∇f_j(wʲ)` and their running mean.
    Table {
        points: Vec<Vec<f64>>,
        grads: Vec<Vec<f64>>,
        grad_mean: Vec<f64>,
        updates_since_refresh: usize,
    },
}

fn offset(x: &[f64], x_star: &[f64]) -> Vec<f64> {
    numerics::sub(x, x_star)
}

fn restore(u: &[f64], x_star: &[f64]) -> Vec<f64> {
    u.iter().zip(x_star).map(|(a, b)| a + b).collect()
}

/// `∇f_i(x* + u)`
fn grad_at(p: &RegressionProblem, consts: &ProblemConstants, i: usize, u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.d()];
    p.add_grad_offset(i, &consts.grad_at_star[i], u, 1.0, &mut g);
    g
}

/// `∇f(x* + u)`
fn full_grad_at(p: &RegressionProblem, consts: &ProblemConstants, u: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; p.d()];
    let w = 1.0 / p.n() as f64;
    for i in 0..p.n() {
        p.add_grad_offset(i, &consts.grad_at_star[i], u, w, &mut g);
    }
    g
}

impl ControlState {
    /// `w₀ = x₀` for L-SVRP and `wʲ₀ = x₀` for Point SAGA.
    pub fn init(strategy: CorrectionStrategy, p: &RegressionProblem, consts: &ProblemConstants, x0: &[f64]) -> Self {
        Self::init_offset(strategy, p, consts, &offset(x0, &consts.x_star))
    }

    fn init_offset(strategy: CorrectionStrategy, p: &RegressionProblem, consts: &ProblemConstants, u0: &[f64]) -> Self {
        match strategy {
            CorrectionStrategy::None | CorrectionStrategy::Star | CorrectionStrategy::Gc => ControlState::Empty,
            CorrectionStrategy::Lsvrp { .. } => ControlState::snapshot_offset(p, consts, u0.to_vec()),
            CorrectionStrategy::PointSaga => ControlState::table_offset(p, consts, vec![u0.to_vec(); p.n()]),
        }
    }

    /// Snapshot at the point `w`.
    pub fn snapshot(p: &RegressionProblem, consts: &ProblemConstants, w: &[f64]) -> Self {
        Self::snapshot_offset(p, consts, offset(w, &consts.x_star))
    }

    fn snapshot_offset(p: &RegressionProblem, consts: &ProblemConstants, w: Vec<f64>) -> Self {
        let full_grad = full_grad_at(p, consts, &w);
        ControlState::Snapshot { w, full_grad }
    }

    /// Table holding the `n` points `wʲ`.
    pub fn table(p: &RegressionProblem, consts: &ProblemConstants, points: &[Vec<f64>]) -> Result<Self> {
        if points.len() != p.n() {
            return Err(Error::StateMismatch("point_saga"));
        }
        let points = points.iter().map(|w| offset(w, &consts.x_star)).collect();
        Ok(Self::table_offset(p, consts, points))
    }

    fn table_offset(p: &RegressionProblem, consts: &ProblemConstants, points: Vec<Vec<f64>>) -> Self {
        let grads: Vec<Vec<f64>> = points
            .iter()
            .enumerate()
            .map(|(j, u)| grad_at(p, consts, j, u))
            .collect();
        let grad_mean = mean_of(&grads, p.d());
        ControlState::Table {
            points,
            grads,
            grad_mean,
            updates_since_refresh: 0,
        }
    }

    /// `σ_k²`: `‖w − x*‖²`, `(1/n) Σ ‖wʲ − x*‖²`, or 0.
    pub fn sigma_sq(&self) -> f64 {
        match self {
            ControlState::Empty => 0.0,
            ControlState::Snapshot { w, .. } => norm_sq(w),
            ControlState::Table { points, .. } => points.iter().map(|u| norm_sq(u)).sum::<f64>() / points.len() as f64,
        }
    }

    fn matches(&self, strategy: CorrectionStrategy) -> bool {
        matches!(
            (strategy, self),
            (
                CorrectionStrategy::None | CorrectionStrategy::Star | CorrectionStrategy::Gc,
                ControlState::Empty
            ) | (CorrectionStrategy::Lsvrp { .. }, ControlState::Snapshot { .. })
                | (CorrectionStrategy::PointSaga, ControlState::Table { .. })
        )
    }
}

fn mean_of(rows: &[Vec<f64>], d: usize) -> Vec<f64> {
    let mut m = vec![0.0; d];
    for r in rows {
        numerics::axpy(1.0, r, &mut m);
    }
    let inv = 1.0 / rows.len() as f64;
    m.iter_mut().for_each(|v| *v *= inv);
    m
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    pub strategy: CorrectionStrategy,
    pub sampler: Sampler,
    pub gamma: f64,
    pub iterations: usize,
    /// Lyapunov weight; `Ψ_k` is recorded only when set.
    pub alpha: Option<f64>,
}

impl MethodSpec {
    pub fn new(
        strategy: CorrectionStrategy,
        sampler: Sampler,
        gamma: f64,
        iterations: usize,
        alpha: Option<f64>,
    ) -> Result<Self> {
        let spec = Self {
            strategy,
            sampler,
            gamma,
            iterations,
            alpha,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::NonPositiveGamma(self.gamma));
        }
        if self.iterations == 0 {
            return Err(Error::InvalidMethod("iterations must be at least 1".into()));
        }
        if let Some(a) = self.alpha {
            if !(a >= 0.0) || !a.is_finite() {
                return Err(Error::InvalidMethod(format!("Lyapunov weight {a} is not ≥ 0")));
            }
        }
        if let CorrectionStrategy::Lsvrp { p } = self.strategy {
            if !(p > 0.0 && p <= 1.0) {
                return Err(Error::InvalidMethod(format!("lsvrp needs 0 < p ≤ 1, got {p}")));
            }
        }
        if self.strategy != CorrectionStrategy::None && !self.sampler.is_uniform_singleton() {
            return Err(Error::InvalidMethod(format!(
                "{} requires uniform single-index sampling",
                self.strategy.name()
            )));
        }
        Ok(())
    }
}

/// Outcome of one step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub x_next: Vec<f64>,
    pub sampled: Vec<usize>,
    pub correction: Vec<f64>,
}

/// The correction `h_k` at `x_k` for sampled set `sampled` (a single index
/// unless the strategy is `None`).
pub fn correction(
    strategy: CorrectionStrategy,
    state: &ControlState,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x_k: &[f64],
    sampled: &[usize],
) -> Result<Vec<f64>> {
    correction_offset(strategy, state, p, consts, &offset(x_k, &consts.x_star), sampled)
}

fn correction_offset(
    strategy: CorrectionStrategy,
    state: &ControlState,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    u_k: &[f64],
    sampled: &[usize],
) -> Result<Vec<f64>> {
    if !state.matches(strategy) {
        return Err(Error::StateMismatch(strategy.name()));
    }
    if strategy == CorrectionStrategy::None {
        return Ok(vec![0.0; p.d()]);
    }
    let &[i] = sampled else {
        return Err(Error::InvalidMethod(format!(
            "{} corrects a single index, got {} indices",
            strategy.name(),
            sampled.len()
        )));
    };
    if i >= p.n() {
        return Err(Error::IndexOutOfRange { index: i, n: p.n() });
    }
    let (g, mean) = match (strategy, state) {
        (CorrectionStrategy::Star, _) => return Ok(consts.grad_at_star[i].clone()),
        (CorrectionStrategy::Gc, _) => (grad_at(p, consts, i, u_k), full_grad_at(p, consts, u_k)),
        (CorrectionStrategy::Lsvrp { .. }, ControlState::Snapshot { w, full_grad }) => {
            (grad_at(p, consts, i, w), full_grad.clone())
        }
        (CorrectionStrategy::PointSaga, ControlState::Table { grads, grad_mean, .. }) => {
            (grads[i].clone(), grad_mean.clone())
        }
        _ => unreachable!("state checked above"),
    };
    Ok(numerics::sub(&g, &mean))
}

/// The prox half of a step for a given draw; leaves the control state alone.
pub fn prox_step(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x_k: &[f64],
    state: &ControlState,
    sampled: &[usize],
) -> Result<StepRecord> {
    let rec = prox_step_offset(method, p, consts, &offset(x_k, &consts.x_star), state, sampled)?;
    Ok(StepRecord {
        x_next: restore(&rec.x_next, &consts.x_star),
        ..rec
    })
}

/// As [`prox_step`], with `x_k` and the result as offsets from `x*`.
fn prox_step_offset(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    u_k: &[f64],
    state: &ControlState,
    sampled: &[usize],
) -> Result<StepRecord> {
    let h = correction_offset(method.strategy, state, p, consts, u_k, sampled)?;
    let g_star = &consts.grad_at_star;
    let u_next = if method.strategy == CorrectionStrategy::None {
        match sampled {
            [i] => p.prox_single_offset(*i, method.gamma * method.sampler.weight(*i), &g_star[*i], u_k)?,
            _ => {
                let w: Vec<f64> = sampled.iter().map(|&i| method.sampler.weight(i)).collect();
                p.prox_subset_offset(sampled, &w, method.gamma, g_star, u_k)?
            }
        }
    } else {
        let mut v = u_k.to_vec();
        numerics::axpy(method.gamma, &h, &mut v);
        let i = sampled[0];
        p.prox_single_offset(i, method.gamma, &g_star[i], &v)?
    };
    Ok(StepRecord {
        x_next: u_next,
        sampled: sampled.to_vec(),
        correction: h,
    })
}

/// Applies the control update after a step to `x_next`. `refresh` is the
/// L-SVRP coin.
pub fn update_control(
    strategy: CorrectionStrategy,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    state: &mut ControlState,
    x_next: &[f64],
    sampled: &[usize],
    refresh: bool,
) -> Result<()> {
    update_control_offset(
        strategy,
        p,
        consts,
        state,
        &offset(x_next, &consts.x_star),
        sampled,
        refresh,
    )
}

fn update_control_offset(
    strategy: CorrectionStrategy,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    state: &mut ControlState,
    u_next: &[f64],
    sampled: &[usize],
    refresh: bool,
) -> Result<()> {
    if !state.matches(strategy) {
        return Err(Error::StateMismatch(strategy.name()));
    }
    match state {
        ControlState::Empty => {}
        ControlState::Snapshot { .. } => {
            if refresh {
                *state = ControlState::snapshot_offset(p, consts, u_next.to_vec());
            }
        }
        ControlState::Table {
            points,
            grads,
            grad_mean,
            updates_since_refresh,
        } => {
            let i = sampled[0];
            let g = grad_at(p, consts, i, u_next);
            let inv_n = 1.0 / p.n() as f64;
            for ((m, new), old) in grad_mean.iter_mut().zip(&g).zip(&grads[i]) {
                *m += inv_n * (new - old);
            }
            grads[i] = g;
            points[i].copy_from_slice(u_next);
            *updates_since_refresh += 1;
            // recompute from scratch periodically so rounding drift stays bounded
            if *updates_since_refresh >= p.n() {
                *grad_mean = mean_of(grads, p.d());
                *updates_since_refresh = 0;
            }
        }
    }
    Ok(())
}

/// One full step: draw, prox, control update. The L-SVRP coin is drawn after
/// the index, and skipped when `p = 1`.
pub fn step(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x_k: &[f64],
    state: &mut ControlState,
    rng: &mut Rng,
) -> Result<StepRecord> {
    let rec = step_offset(method, p, consts, &offset(x_k, &consts.x_star), state, rng)?;
    Ok(StepRecord {
        x_next: restore(&rec.x_next, &consts.x_star),
        ..rec
    })
}

fn step_offset(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    u_k: &[f64],
    state: &mut ControlState,
    rng: &mut Rng,
) -> Result<StepRecord> {
    let sampled = method.sampler.draw(rng);
    let rec = prox_step_offset(method, p, consts, u_k, state, &sampled)?;
    let refresh = match method.strategy {
        CorrectionStrategy::Lsvrp { p: prob } => prob >= 1.0 || rng.bernoulli(prob),
        _ => false,
    };
    update_control_offset(method.strategy, p, consts, state, &rec.x_next, &sampled, refresh)?;
    Ok(rec)
}

/// `x* + (10/√d)·1`, so that `‖x₀ − x*‖ = 10`.
pub fn default_x0(x_star: &[f64]) -> Vec<f64> {
    let shift = 10.0 / (x_star.len() as f64).sqrt();
    x_star.iter().map(|v| v + shift).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Trajectory {
    /// `‖x_k − x*‖²` for `k = 0..=iterations`.
    pub sq_dist: Vec<f64>,
    /// `Ψ_k = ‖x_k − x*‖² + α σ_k²` when a weight was given.
    pub lyapunov: Option<Vec<f64>>,
    /// Drawn index set at each step.
    pub sampled: Vec<Vec<usize>>,
    pub base_seed: u64,
    pub run_index: u64,
    pub rng_algorithm: &'static str,
}

/// The loop runs on offsets `u_k = x_k − x*`, so `‖x_k − x*‖²` is read off
/// directly instead of through a cancelling subtraction.
fn drive(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x0: &[f64],
    rng: &mut Rng,
    mut visit: impl FnMut(usize, f64, Option<f64>, &[usize]),
) -> Result<()> {
    method.validate()?;
    if x0.len() != p.d() {
        return Err(Error::InvalidMethod(format!(
            "x0 has length {}, expected {}",
            x0.len(),
            p.d()
        )));
    }
    let mut u = offset(x0, &consts.x_star);
    let mut state = ControlState::init_offset(method.strategy, p, consts, &u);
    let psi = |u: &[f64], s: &ControlState| method.alpha.map(|a| norm_sq(u) + a * s.sigma_sq());
    visit(0, norm_sq(&u), psi(&u, &state), &[]);
    for k in 1..=method.iterations {
        let rec = step_offset(method, p, consts, &u, &mut state, rng)?;
        u = rec.x_next;
        visit(k, norm_sq(&u), psi(&u, &state), &rec.sampled);
    }
    Ok(())
}

/// One seeded trajectory on stream `(base_seed, run_index)`.
pub fn run(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x0: &[f64],
    base_seed: u64,
    run_index: u64,
) -> Result<Trajectory> {
    let mut rng = Rng::new(base_seed, run_index);
    let len = method.iterations + 1;
    let mut sq_dist = Vec::with_capacity(len);
    let mut lyap = method.alpha.map(|_| Vec::with_capacity(len));
    let mut sampled = Vec::with_capacity(method.iterations);
    drive(method, p, consts, x0, &mut rng, |k, d, psi, s| {
        sq_dist.push(d);
        if let (Some(l), Some(v)) = (lyap.as_mut(), psi) {
            l.push(v);
        }
        if k > 0 {
            sampled.push(s.to_vec());
        }
    })?;
    Ok(Trajectory {
        sq_dist,
        lyapunov: lyap,
        sampled,
        base_seed,
        run_index,
        rng_algorithm: numerics::RNG_ALGORITHM,
    })
}

/// Per-iteration mean and standard error across independent runs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleStats {
    pub num_runs: usize,
    pub mean_sq_dist: Vec<f64>,
    pub se_sq_dist: Vec<f64>,
    pub mean_lyapunov: Option<Vec<f64>>,
    pub se_lyapunov: Option<Vec<f64>>,
}

/// Welford accumulators, one per iteration.
#[derive(Clone)]
struct Moments {
    count: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl Moments {
    fn new(len: usize) -> Self {
        Self {
            count: 0,
            mean: vec![0.0; len],
            m2: vec![0.0; len],
        }
    }

    fn push(&mut self, xs: &[f64]) {
        self.count += 1;
        let c = self.count as f64;
        for ((m, s), x) in self.mean.iter_mut().zip(&mut self.m2).zip(xs) {
            let delta = x - *m;
            *m += delta / c;
            *s += delta * (x - *m);
        }
    }

    fn std_errors(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.mean.len()];
        }
        let c = self.count as f64;
        self.m2.iter().map(|s| (s.max(0.0) / (c - 1.0) / c).sqrt()).collect()
    }
}

/// Runs `0..num_runs` on streams `(base_seed, r)`. Trajectories are computed in
/// parallel chunks and folded in run order, so results do not depend on
/// scheduling.
pub fn run_ensemble(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x0: &[f64],
    base_seed: u64,
    num_runs: usize,
) -> Result<EnsembleStats> {
    if num_runs == 0 {
        return Err(Error::InvalidMethod("need at least one run".into()));
    }
    method.validate()?;
    let len = method.iterations + 1;
    let chunk = rayon::current_num_threads().max(1) * 4;
    let mut dist = Moments::new(len);
    let mut lyap = method.alpha.map(|_| Moments::new(len));
    let mut start = 0;
    while start < num_runs {
        let end = (start + chunk).min(num_runs);
        let batch: Vec<(Vec<f64>, Option<Vec<f64>>)> = (start..end)
            .into_par_iter()
            .map(|r| {
                let t = run_quiet(method, p, consts, x0, base_seed, r as u64)?;
                Ok(t)
            })
            .collect::<Result<_>>()?;
        for (d, l) in &batch {
            dist.push(d);
            if let (Some(acc), Some(l)) = (lyap.as_mut(), l) {
                acc.push(l);
            }
        }
        start = end;
    }
    Ok(EnsembleStats {
        num_runs,
        se_sq_dist: dist.std_errors(),
        mean_sq_dist: dist.mean,
        se_lyapunov: lyap.as_ref().map(Moments::std_errors),
        mean_lyapunov: lyap.map(|m| m.mean),
    })
}

fn run_quiet(
    method: &MethodSpec,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    x0: &[f64],
    base_seed: u64,
    run_index: u64,
) -> Result<(Vec<f64>, Option<Vec<f64>>)> {
    let mut rng = Rng::new(base_seed, run_index);
    let len = method.iterations + 1;
    let mut d = Vec::with_capacity(len);
    let mut l = method.alpha.map(|_| Vec::with_capacity(len));
    drive(method, p, consts, x0, &mut rng, |_, v, psi, _| {
        d.push(v);
        if let (Some(l), Some(psi)) = (l.as_mut(), psi) {
            l.push(psi);
        }
    })?;
    Ok((d, l))
}

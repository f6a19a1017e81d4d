//! Ridge-regularized least-squares finite sums
//!
//! `f_i(x) = ½(a_iᵀx − b_i)² + λ_i‖x‖²` and `f = (1/n) Σ f_i`. Every `f_i` has
//! Hessian `H_i = a_i a_iᵀ + 2λ_i I`, so all proximal operators and constants
//! below are exact.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{self, dot, norm_sq, Matrix, Rng, Which};
use crate::sampling::Sampler;

/// Per-function regularization weights for synthetic instances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "rule", content = "value")]
pub enum LambdaRule {
    /// `λ_i = 2^{−((i mod d) + 1)}` for zero-based `i`; cycles the `d` values
    /// `1/2, 1/4, …, 1/2^d` over the `n` functions.
    PowersOfTwo,
    Constant(f64),
}

impl LambdaRule {
    pub fn lambdas(&self, n: usize, d: usize) -> Vec<f64> {
        match *self {
            LambdaRule::PowersOfTwo => (0..n).map(|i| 0.5f64.powi(((i % d) + 1) as i32)).collect(),
            LambdaRule::Constant(c) => vec![c; n],
        }
    }
}

/// Finite-sum instance: rows `a_i`, targets `b_i`, weights `λ_i > 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionProblem {
    n: usize,
    d: usize,
    features: Vec<f64>,
    targets: Vec<f64>,
    lambdas: Vec<f64>,
}

/// Exact constants of an instance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemConstants {
    pub x_star: Vec<f64>,
    /// `μ_i = λ_min(H_i)`
    pub mu_each: Vec<f64>,
    pub mu: f64,
    /// `(1/n) Σ ‖∇f_i(x*)‖²`
    pub sigma_star_sq: f64,
    /// `sqrt(λ_max((1/n) Σ (H_i − H̄)²))`
    pub delta: f64,
    /// `max_i λ_max(H_i)`
    pub nu: f64,
    /// Row `i` is `∇f_i(x*)`.
    pub grad_at_star: Vec<Vec<f64>>,
}

/// Strong convexity and gradient-noise constants induced by a sampling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SamplingConstants {
    pub mu: f64,
    pub sigma_sq: f64,
    /// Present only for Monte-Carlo estimates of `sigma_sq`.
    pub std_error: Option<f64>,
}

/// How to evaluate the arbitrary-sampling noise constant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SigmaEstimate {
    /// Exact enumeration only; fails with `SupportTooLarge` otherwise.
    Exact,
    /// Exact when the support is enumerable, else Monte-Carlo.
    Auto { draws: usize, seed: u64 },
}

impl Default for SigmaEstimate {
    fn default() -> Self {
        SigmaEstimate::Auto {
            draws: 1_000_000,
            seed: 0x5eed,
        }
    }
}

impl RegressionProblem {
    pub fn new(rows: Vec<Vec<f64>>, targets: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(Error::InvalidProblem("rows have different lengths".into()));
        }
        let features = rows.into_iter().flatten().collect();
        Self::from_flat(n, d, features, targets, lambdas)
    }

    pub fn from_flat(n: usize, d: usize, features: Vec<f64>, targets: Vec<f64>, lambdas: Vec<f64>) -> Result<Self> {
        if n == 0 || d == 0 {
            return Err(Error::InvalidProblem(format!("need n ≥ 1 and d ≥ 1, got n={n}, d={d}")));
        }
        if features.len() != n * d {
            return Err(Error::InvalidProblem(format!(
                "feature matrix has {} entries, expected {}",
                features.len(),
                n * d
            )));
        }
        if targets.len() != n || lambdas.len() != n {
            return Err(Error::InvalidProblem(format!(
                "expected {n} targets and lambdas, got {} and {}",
                targets.len(),
                lambdas.len()
            )));
        }
        if features.iter().chain(&targets).any(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem("non-finite data".into()));
        }
        if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0) || !l.is_finite()) {
            return Err(Error::InvalidProblem(format!(
                "regularization weight {l} is not positive"
            )));
        }
        Ok(Self {
            n,
            d,
            features,
            targets,
            lambdas,
        })
    }

    /// Gaussian instance: entries of `A` then `b` drawn i.i.d. N(0, 1) from
    /// the stream `(seed, 0)`.
    pub fn synthetic(n: usize, d: usize, seed: u64, rule: LambdaRule) -> Result<Self> {
        let mut rng = Rng::new(seed, 0);
        let features = rng.normal_vec(n * d);
        let targets = rng.normal_vec(n);
        Self::from_flat(n, d, features, targets, rule.lambdas(n, d))
    }

    /// Two one-dimensional functions `½(x ∓ 2)² + ½x²`; `x* = 0`, `σ*² = 4`, `δ = 0`.
    pub fn toy1() -> Self {
        Self::new(vec![vec![1.0], vec![1.0]], vec![2.0, -2.0], vec![0.5, 0.5]).expect("valid fixture")
    }

    /// Like [`toy1`](Self::toy1) with `λ = (0.5, 1.5)`: `H = (2, 4)`, `δ = 1`, `ν = 4`.
    pub fn toy2() -> Self {
        Self::new(vec![vec![1.0], vec![1.0]], vec![2.0, -2.0], vec![0.5, 1.5]).expect("valid fixture")
    }

    /// Same features and weights with different targets.
    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Self::from_flat(self.n, self.d, self.features.clone(), targets, self.lambdas.clone())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.d..(i + 1) * self.d]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    fn check_index(&self, i: usize) -> Result<()> {
        if i >= self.n {
            Err(Error::IndexOutOfRange { index: i, n: self.n })
        } else {
            Ok(())
        }
    }

    pub fn loss_i(&self, i: usize, x: &[f64]) -> f64 {
        let r = dot(self.row(i), x) - self.targets[i];
        0.5 * r * r + self.lambdas[i] * norm_sq(x)
    }

    pub fn objective(&self, x: &[f64]) -> f64 {
        (0..self.n).map(|i| self.loss_i(i, x)).sum::<f64>() / self.n as f64
    }

    /// `∇f_i(x) = a_i(a_iᵀx − b_i) + 2λ_i x`
    pub fn grad_i(&self, i: usize, x: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        let mut g = vec![0.0; self.d];
        self.add_grad_i(i, x, 1.0, &mut g);
        Ok(g)
    }

    /// `out += scale · ∇f_i(x)` without bounds checking on `i`.
    pub(crate) fn add_grad_i(&self, i: usize, x: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.row(i);
        let r = scale * (dot(a, x) - self.targets[i]);
        let reg = scale * 2.0 * self.lambdas[i];
        for ((o, ai), xi) in out.iter_mut().zip(a).zip(x) {
            *o += r * ai + reg * xi;
        }
    }

    pub fn full_grad(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.d];
        let w = 1.0 / self.n as f64;
        for i in 0..self.n {
            self.add_grad_i(i, x, w, &mut g);
        }
        g
    }

    pub fn hessian_i(&self, i: usize) -> Matrix {
        let mut h = Matrix::outer(self.row(i));
        h.add_diagonal(2.0 * self.lambdas[i]);
        h
    }

    pub fn mean_hessian(&self) -> Matrix {
        let mut h = Matrix::zeros(self.d);
        for i in 0..self.n {
            h.add_scaled(1.0 / self.n as f64, &self.hessian_i(i));
        }
        h
    }

    /// `λ_min(H_i)`: `2λ_i` when `d > 1`, `a_i² + 2λ_i` when `d = 1`.
    pub fn mu_i(&self, i: usize) -> f64 {
        if self.d == 1 {
            self.row(i)[0].powi(2) + 2.0 * self.lambdas[i]
        } else {
            2.0 * self.lambdas[i]
        }
    }

    /// `λ_max(H_i) = ‖a_i‖² + 2λ_i`
    pub fn smoothness_i(&self, i: usize) -> f64 {
        norm_sq(self.row(i)) + 2.0 * self.lambdas[i]
    }

    /// `argmin_x f_i(x) + ‖x − v‖²/(2γ)`, by a rank-one solve.
    pub fn prox_single(&self, i: usize, gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        if !(gamma > 0.0) {
            return Err(Error::NonPositiveGamma(gamma));
        }
        let a = self.row(i);
        let inv_gamma = 1.0 / gamma;
        let c = 2.0 * self.lambdas[i] + inv_gamma;
        let b = self.targets[i];
        let rhs: Vec<f64> = a.iter().zip(v).map(|(ai, vi)| ai * b + vi * inv_gamma).collect();
        numerics::rank_one_spd_solve(c, a, &rhs)
    }

    /// `argmin_x Σ_{i∈C} w_i f_i(x) + ‖x − v‖²/(2γ)`, by a dense SPD solve.
    pub fn prox_subset(&self, members: &[usize], weights: &[f64], gamma: f64, v: &[f64]) -> Result<Vec<f64>> {
        let m = self.subset_system(members, weights, gamma)?;
        let mut rhs: Vec<f64> = v.iter().map(|vi| vi / gamma).collect();
        for (&i, &w) in members.iter().zip(weights) {
            numerics::axpy(w * self.targets[i], self.row(i), &mut rhs);
        }
        numerics::solve_spd(&m, &rhs)
    }

    /// `I/γ + Σ_{i∈C} w_i H_i`
    fn subset_system(&self, members: &[usize], weights: &[f64], gamma: f64) -> Result<Matrix> {
        if members.is_empty() {
            return Err(Error::EmptySubset);
        }
        if !(gamma > 0.0) {
            return Err(Error::NonPositiveGamma(gamma));
        }
        assert_eq!(members.len(), weights.len(), "one weight per member");
        let mut m = Matrix::zeros(self.d);
        let mut shift = 1.0 / gamma;
        for (&i, &w) in members.iter().zip(weights) {
            self.check_index(i)?;
            m.add_scaled(w, &Matrix::outer(self.row(i)));
            shift += 2.0 * w * self.lambdas[i];
        }
        m.add_diagonal(shift);
        Ok(m)
    }

    /// [`prox_single`](Self::prox_single) in coordinates centred at a point
    /// `c` where `∇f_i(c) = g_c`: returns `prox(c + u) − c`. Both sides are
    /// offsets, so nothing cancels when `u` is tiny.
    pub fn prox_single_offset(&self, i: usize, gamma: f64, g_c: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        self.check_index(i)?;
        if !(gamma > 0.0) {
            return Err(Error::NonPositiveGamma(gamma));
        }
        let inv_gamma = 1.0 / gamma;
        let c = 2.0 * self.lambdas[i] + inv_gamma;
        let rhs: Vec<f64> = u.iter().zip(g_c).map(|(ui, gi)| ui * inv_gamma - gi).collect();
        numerics::rank_one_spd_solve(c, self.row(i), &rhs)
    }

    /// [`prox_subset`](Self::prox_subset) in centred coordinates; `g_c[i] = ∇f_i(c)`.
    pub fn prox_subset_offset(
        &self,
        members: &[usize],
        weights: &[f64],
        gamma: f64,
        g_c: &[Vec<f64>],
        u: &[f64],
    ) -> Result<Vec<f64>> {
        let m = self.subset_system(members, weights, gamma)?;
        let mut rhs: Vec<f64> = u.iter().map(|ui| ui / gamma).collect();
        for (&i, &w) in members.iter().zip(weights) {
            numerics::axpy(-w, &g_c[i], &mut rhs);
        }
        numerics::solve_spd(&m, &rhs)
    }

    /// `out += scale · ∇f_i(c + u)`, written `g_c + H_i u`.
    pub(crate) fn add_grad_offset(&self, i: usize, g_c: &[f64], u: &[f64], scale: f64, out: &mut [f64]) {
        let a = self.row(i);
        let r = scale * dot(a, u);
        let reg = scale * 2.0 * self.lambdas[i];
        for (((o, ai), ui), gi) in out.iter_mut().zip(a).zip(u).zip(g_c) {
            *o += scale * gi + r * ai + reg * ui;
        }
    }

    /// Solves `((1/n) Σ a_i a_iᵀ + (2/n)(Σλ_i) I) x = (1/n) Σ a_i b_i`.
    pub fn minimizer(&self) -> Result<Vec<f64>> {
        let inv_n = 1.0 / self.n as f64;
        let mut m = Matrix::zeros(self.d);
        let mut rhs = vec![0.0; self.d];
        for i in 0..self.n {
            let a = self.row(i);
            m.add_scaled(inv_n, &Matrix::outer(a));
            numerics::axpy(inv_n * self.targets[i], a, &mut rhs);
        }
        m.add_diagonal(2.0 * inv_n * self.lambdas.iter().sum::<f64>());
        let mut x = numerics::solve_spd(&m, &rhs)?;
        // two rounds of iterative refinement
        for _ in 0..2 {
            let r = numerics::sub(&rhs, &m.mul_vec(&x));
            let dx = numerics::solve_spd(&m, &r)?;
            numerics::axpy(1.0, &dx, &mut x);
        }
        Ok(x)
    }

    pub fn constants(&self) -> Result<ProblemConstants> {
        let x_star = self.minimizer()?;
        let mu_each: Vec<f64> = (0..self.n).map(|i| self.mu_i(i)).collect();
        let mu = mu_each.iter().cloned().fold(f64::INFINITY, f64::min);
        let grad_at_star: Vec<Vec<f64>> = (0..self.n)
            .map(|i| {
                let mut g = vec![0.0; self.d];
                self.add_grad_i(i, &x_star, 1.0, &mut g);
                g
            })
            .collect();
        let sigma_star_sq = grad_at_star.iter().map(|g| norm_sq(g)).sum::<f64>() / self.n as f64;
        let delta = self.similarity_delta()?;
        let nu = (0..self.n).map(|i| self.smoothness_i(i)).fold(0.0, f64::max);
        Ok(ProblemConstants {
            x_star,
            mu_each,
            mu,
            sigma_star_sq,
            delta,
            nu,
            grad_at_star,
        })
    }

    /// `(1/n) Σ (H_i − H̄)²`, whose top eigenvalue is `δ²`.
    pub fn hessian_deviation_second_moment(&self) -> Matrix {
        let hbar = self.mean_hessian();
        let mut acc = Matrix::zeros(self.d);
        for i in 0..self.n {
            let mut dev = self.hessian_i(i);
            dev.add_scaled(-1.0, &hbar);
            acc.add_scaled(1.0 / self.n as f64, &dev.matmul(&dev));
        }
        acc
    }

    fn similarity_delta(&self) -> Result<f64> {
        let m = self.hessian_deviation_second_moment();
        let top = numerics::extreme_eigenvalue(&m, Which::Largest)?;
        Ok(top.max(0.0).sqrt())
    }

    /// `σ*_NS² = (1/n) Σ ‖∇f_i(x*)‖²/(n p_i)` with companion `μ_NS = min_i μ_i/(n p_i)`.
    pub fn sigma_star_ns(&self, consts: &ProblemConstants, probs: &[f64]) -> Result<SamplingConstants> {
        if probs.len() != self.n {
            return Err(Error::BadDistribution(format!(
                "expected {} probabilities, got {}",
                self.n,
                probs.len()
            )));
        }
        numerics::Categorical::new(probs)?;
        if probs.iter().any(|p| *p <= 0.0) {
            return Err(Error::BadDistribution("all probabilities must be positive".into()));
        }
        let n = self.n as f64;
        let sigma_sq = consts
            .grad_at_star
            .iter()
            .zip(probs)
            .map(|(g, p)| norm_sq(g) / (n * p))
            .sum::<f64>()
            / n;
        let mu = consts
            .mu_each
            .iter()
            .zip(probs)
            .map(|(m, p)| m / (n * p))
            .fold(f64::INFINITY, f64::min);
        Ok(SamplingConstants {
            mu,
            sigma_sq,
            std_error: None,
        })
    }

    /// `σ*_AS² = Σ_C p_C ‖Σ_{i∈C} ∇f_i(x*)/(n p_i)‖²` with companion
    /// `μ_AS = min_C Σ_{i∈C} μ_i/(n p_i)`.
    pub fn sigma_star_as(
        &self,
        consts: &ProblemConstants,
        sampler: &Sampler,
        estimate: SigmaEstimate,
    ) -> Result<SamplingConstants> {
        if sampler.n() != self.n {
            return Err(Error::InvalidSampler(format!(
                "sampler over {} functions used with n = {}",
                sampler.n(),
                self.n
            )));
        }
        let mu = sampler.mu_as(&consts.mu_each);
        let weighted_norm_sq = |members: &[usize]| {
            let mut s = vec![0.0; self.d];
            for &i in members {
                numerics::axpy(sampler.weight(i), &consts.grad_at_star[i], &mut s);
            }
            norm_sq(&s)
        };
        match sampler.enumerate_support() {
            Ok(support) => {
                let sigma_sq = support.iter().map(|(c, p)| p * weighted_norm_sq(c)).sum();
                Ok(SamplingConstants {
                    mu,
                    sigma_sq,
                    std_error: None,
                })
            }
            Err(e @ Error::SupportTooLarge { .. }) => match estimate {
                SigmaEstimate::Exact => Err(e),
                SigmaEstimate::Auto { draws, seed } => {
                    let mut rng = Rng::new(seed, 0);
                    let draws = draws.max(1_000_000);
                    let (mut mean, mut m2) = (0.0, 0.0);
                    for k in 0..draws {
                        let c = sampler.draw(&mut rng);
                        let v = weighted_norm_sq(&c);
                        let delta = v - mean;
                        mean += delta / (k + 1) as f64;
                        m2 += delta * (v - mean);
                    }
                    let var = m2 / (draws - 1) as f64;
                    Ok(SamplingConstants {
                        mu,
                        sigma_sq: mean,
                        std_error: Some((var / draws as f64).sqrt()),
                    })
                }
            },
            Err(e) => Err(e),
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    n: usize,
    d: usize,
    #[serde(rename = "A")]
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    lambdas: Vec<f64>,
}

impl Serialize for RegressionProblem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ProblemJson {
            n: self.n,
            d: self.d,
            a: (0..self.n).map(|i| self.row(i).to_vec()).collect(),
            b: self.targets.clone(),
            lambdas: self.lambdas.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for RegressionProblem {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = ProblemJson::deserialize(de)?;
        if raw.a.len() != raw.n || raw.a.iter().any(|r| r.len() != raw.d) {
            return Err(serde::de::Error::custom(format!("\"A\" must be {}×{}", raw.n, raw.d)));
        }
        RegressionProblem::new(raw.a, raw.b, raw.lambdas).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{norm, norm_inf, sub};

    fn stationarity_residual(
        p: &RegressionProblem,
        members: &[usize],
        weights: &[f64],
        gamma: f64,
        v: &[f64],
        x: &[f64],
    ) -> f64 {
        let mut g: Vec<f64> = x.iter().zip(v).map(|(xi, vi)| (xi - vi) / gamma).collect();
        for (&i, &w) in members.iter().zip(weights) {
            p.add_grad_i(i, x, w, &mut g);
        }
        norm(&g)
    }

    #[test]
    fn grad_hand_computed() {
        let p = RegressionProblem::new(vec![vec![1.0]], vec![2.0], vec![0.5]).unwrap();
        assert_eq!(p.grad_i(0, &[0.0]).unwrap(), vec![-2.0]);
        // minimizer of (x-2)²/2 + x²/2 is 1
        assert_eq!(p.grad_i(0, &[1.0]).unwrap(), vec![0.0]);
        assert!(matches!(
            p.grad_i(1, &[0.0]),
            Err(Error::IndexOutOfRange { index: 1, n: 1 })
        ));
    }

    #[test]
    fn grad_matches_central_differences() {
        let p = RegressionProblem::synthetic(6, 4, 3, LambdaRule::PowersOfTwo).unwrap();
        let mut rng = Rng::new(4, 0);
        for i in 0..p.n() {
            let x = rng.normal_vec(p.d());
            let g = p.grad_i(i, &x).unwrap();
            for j in 0..p.d() {
                let h = 1e-5;
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd = (p.loss_i(i, &xp) - p.loss_i(i, &xm)) / (2.0 * h);
                assert!((fd - g[j]).abs() <= 1e-6 * (1.0 + g[j].abs()), "{fd} vs {}", g[j]);
            }
        }
    }

    #[test]
    fn prox_single_hand_value() {
        let p = RegressionProblem::new(vec![vec![1.0]], vec![2.0], vec![0.5]).unwrap();
        let x = p.prox_single(0, 1.0, &[0.0]).unwrap();
        assert!((x[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!(matches!(p.prox_single(0, 0.0, &[0.0]), Err(Error::NonPositiveGamma(_))));
        assert!(matches!(
            p.prox_single(0, -1.0, &[0.0]),
            Err(Error::NonPositiveGamma(_))
        ));
    }

    #[test]
    fn prox_single_fixed_point_and_stationarity() {
        let p = RegressionProblem::synthetic(8, 5, 21, LambdaRule::Constant(0.3)).unwrap();
        let mut rng = Rng::new(22, 0);
        for _ in 0..1000 {
            let i = rng.below(p.n());
            let gamma = rng.log_uniform(1e-3, 1e3);
            let x = rng.normal_vec(p.d());
            let mut v = x.clone();
            numerics::axpy(gamma, &p.grad_i(i, &x).unwrap(), &mut v);
            let back = p.prox_single(i, gamma, &v).unwrap();
            assert!(norm_inf(&sub(&back, &x)) <= 1e-8 * (1.0 + norm_inf(&x)));
            let res = stationarity_residual(&p, &[i], &[1.0], gamma, &v, &back);
            assert!(res <= 1e-9 * (1.0 + norm(&v)) * (1.0 + 1.0 / gamma), "residual {res}");
        }
    }

    #[test]
    fn prox_single_fixed_point_at_own_minimizer() {
        let p = RegressionProblem::synthetic(3, 4, 5, LambdaRule::Constant(0.7)).unwrap();
        for i in 0..p.n() {
            // minimizer of f_i alone solves H_i m = a_i b_i
            let m = numerics::solve_spd(
                &p.hessian_i(i),
                &p.row(i).iter().map(|a| a * p.targets()[i]).collect::<Vec<_>>(),
            )
            .unwrap();
            let v: Vec<f64> = m.clone();
            let out = p.prox_single(i, 2.5, &v).unwrap();
            assert!(norm_inf(&sub(&out, &m)) <= 1e-12);
        }
    }

    #[test]
    fn offset_prox_matches_plain_prox() {
        let p = RegressionProblem::synthetic(7, 4, 3, LambdaRule::PowersOfTwo).unwrap();
        let mut rng = Rng::new(12, 0);
        for _ in 0..20 {
            let c = rng.normal_vec(4);
            let v = rng.normal_vec(4);
            let gamma = rng.log_uniform(1e-3, 1e3);
            let g_c: Vec<Vec<f64>> = (0..7).map(|i| p.grad_i(i, &c).unwrap()).collect();
            let u = sub(&v, &c);
            let plain = p.prox_single(2, gamma, &v).unwrap();
            let shifted = p.prox_single_offset(2, gamma, &g_c[2], &u).unwrap();
            assert!(norm_inf(&sub(&sub(&plain, &c), &shifted)) < 1e-10);
            let members = [0, 3, 5];
            let w = [0.5, 2.0, 1.5];
            let plain = p.prox_subset(&members, &w, gamma, &v).unwrap();
            let shifted = p.prox_subset_offset(&members, &w, gamma, &g_c, &u).unwrap();
            assert!(norm_inf(&sub(&sub(&plain, &c), &shifted)) < 1e-10);
            let mut g = vec![0.0; 4];
            p.add_grad_offset(4, &g_c[4], &u, 1.0, &mut g);
            assert!(norm_inf(&sub(&g, &p.grad_i(4, &v).unwrap())) < 1e-10);
        }
    }

    #[test]
    fn prox_subset_singleton_consistency() {
        let p = RegressionProblem::synthetic(10, 3, 8, LambdaRule::PowersOfTwo).unwrap();
        let mut rng = Rng::new(9, 0);
        for _ in 0..200 {
            let i = rng.below(p.n());
            let prob_i = 0.05 + 0.9 * rng.uniform();
            let w = 1.0 / (p.n() as f64 * prob_i);
            let gamma = rng.log_uniform(1e-2, 1e2);
            let v = rng.normal_vec(p.d());
            let a = p.prox_subset(&[i], &[w], gamma, &v).unwrap();
            let b = p.prox_single(i, gamma * w, &v).unwrap();
            assert!(norm_inf(&sub(&a, &b)) <= 1e-10 * (1.0 + norm_inf(&a)));
        }
    }

    #[test]
    fn prox_subset_full_objective_fixed_point() {
        let p = RegressionProblem::synthetic(7, 3, 10, LambdaRule::Constant(0.2)).unwrap();
        let x_star = p.minimizer().unwrap();
        let members: Vec<usize> = (0..p.n()).collect();
        let weights = vec![1.0 / p.n() as f64; p.n()];
        let out = p.prox_subset(&members, &weights, 3.0, &x_star).unwrap();
        assert!(norm_inf(&sub(&out, &x_star)) <= 1e-12);
        assert!(matches!(p.prox_subset(&[], &[], 1.0, &x_star), Err(Error::EmptySubset)));
        assert!(matches!(
            p.prox_subset(&[0], &[1.0], 0.0, &x_star),
            Err(Error::NonPositiveGamma(_))
        ));
    }

    #[test]
    fn prox_subset_stationarity() {
        let p = RegressionProblem::synthetic(12, 4, 30, LambdaRule::PowersOfTwo).unwrap();
        let mut rng = Rng::new(31, 0);
        for _ in 0..200 {
            let members: Vec<usize> = (0..3).map(|_| rng.below(p.n())).collect();
            let weights: Vec<f64> = (0..3).map(|_| 0.1 + rng.uniform()).collect();
            let gamma = rng.log_uniform(1e-2, 1e2);
            let v = rng.normal_vec(p.d());
            let x = p.prox_subset(&members, &weights, gamma, &v).unwrap();
            let res = stationarity_residual(&p, &members, &weights, gamma, &v, &x);
            assert!(res <= 1e-9 * (1.0 + norm(&v)) * (1.0 + 1.0 / gamma));
        }
    }

    #[test]
    fn minimizer_examples() {
        let p = RegressionProblem::synthetic(9, 3, 1, LambdaRule::Constant(0.5)).unwrap();
        let zero = p.with_targets(vec![0.0; 9]).unwrap();
        assert!(norm_inf(&zero.minimizer().unwrap()) == 0.0);
        let t = RegressionProblem::toy1();
        assert!(t.minimizer().unwrap()[0].abs() < 1e-15);
        let x = p.minimizer().unwrap();
        assert!(norm(&p.full_grad(&x)) <= 1e-9);
    }

    #[test]
    fn toy_constants() {
        let c = RegressionProblem::toy1().constants().unwrap();
        assert_eq!(c.mu, 2.0);
        assert!((c.sigma_star_sq - 4.0).abs() < 1e-12);
        assert_eq!(c.delta, 0.0);
        assert!(c.x_star[0].abs() < 1e-15);

        let c = RegressionProblem::toy2().constants().unwrap();
        assert!((c.delta - 1.0).abs() < 1e-9);
        assert_eq!(c.nu, 4.0);
        assert_eq!(c.mu_each, vec![2.0, 4.0]);
    }

    #[test]
    fn identical_functions_have_zero_delta() {
        let rows = vec![vec![0.3, -1.2, 0.8]; 5];
        let p = RegressionProblem::new(rows, vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.25; 5]).unwrap();
        let c = p.constants().unwrap();
        assert!(c.delta <= 1e-12, "delta {}", c.delta);
    }

    #[test]
    fn constants_invariants_random() {
        for seed in 0..20 {
            let p =
                RegressionProblem::synthetic(5 + seed as usize, 1 + seed as usize % 6, seed, LambdaRule::PowersOfTwo)
                    .unwrap();
            let c = p.constants().unwrap();
            assert!(c.mu > 0.0);
            assert!(c.sigma_star_sq >= 0.0 && c.delta >= 0.0);
            assert!(c.nu >= c.delta);
            let mean: Vec<f64> = (0..p.d())
                .map(|j| c.grad_at_star.iter().map(|g| g[j]).sum::<f64>() / p.n() as f64)
                .collect();
            assert!(norm(&mean) <= 1e-9 * (1.0 + norm(&c.x_star)));
            let s: f64 = c.grad_at_star.iter().map(|g| norm_sq(g)).sum::<f64>() / p.n() as f64;
            assert!((s - c.sigma_star_sq).abs() <= 1e-12 * (1.0 + s));
            // μ_i equals λ_min(H_i)
            for i in 0..p.n() {
                let lo = numerics::extreme_eigenvalue(&p.hessian_i(i), Which::Smallest).unwrap();
                let hi = numerics::extreme_eigenvalue(&p.hessian_i(i), Which::Largest).unwrap();
                assert!((lo - c.mu_each[i]).abs() <= 1e-9 * hi);
                assert!((hi - p.smoothness_i(i)).abs() <= 1e-9 * hi);
            }
        }
    }

    #[test]
    fn sigma_ns_uniform_and_importance() {
        let p = RegressionProblem::synthetic(10, 3, 2, LambdaRule::PowersOfTwo).unwrap();
        let c = p.constants().unwrap();
        let uniform = vec![0.1; 10];
        let us = p.sigma_star_ns(&c, &uniform).unwrap();
        assert!((us.sigma_sq - c.sigma_star_sq).abs() <= 1e-12 * c.sigma_star_sq);
        assert_eq!(us.mu, c.mu);

        let total: f64 = c.mu_each.iter().sum();
        let is: Vec<f64> = c.mu_each.iter().map(|m| m / total).collect();
        let r = p.sigma_star_ns(&c, &is).unwrap();
        assert!((r.mu - total / 10.0).abs() <= 1e-12);

        let toy = RegressionProblem::toy1();
        let tc = toy.constants().unwrap();
        assert!((toy.sigma_star_ns(&tc, &[0.5, 0.5]).unwrap().sigma_sq - 4.0).abs() < 1e-12);
        assert!(matches!(
            toy.sigma_star_ns(&tc, &[1.0, 0.0]),
            Err(Error::BadDistribution(_))
        ));
        assert!(matches!(
            toy.sigma_star_ns(&tc, &[0.7, 0.7]),
            Err(Error::BadDistribution(_))
        ));
    }

    #[test]
    fn sigma_as_special_cases() {
        let p = RegressionProblem::synthetic(10, 3, 6, LambdaRule::PowersOfTwo).unwrap();
        let c = p.constants().unwrap();
        let exact = SigmaEstimate::Exact;
        let full = p.sigma_star_as(&c, &Sampler::full(10), exact).unwrap();
        assert!(full.sigma_sq <= 1e-20);
        let q: Vec<f64> = (1..=10).map(|i| i as f64 / 55.0).collect();
        let single = p
            .sigma_star_as(&c, &Sampler::singleton(q.clone()).unwrap(), exact)
            .unwrap();
        let ns = p.sigma_star_ns(&c, &q).unwrap();
        assert!((single.sigma_sq - ns.sigma_sq).abs() <= 1e-12 * ns.sigma_sq);
        assert!((single.mu - ns.mu).abs() <= 1e-12 * ns.mu);
        let nice_n = p.sigma_star_as(&c, &Sampler::nice(10, 10).unwrap(), exact).unwrap();
        assert!(nice_n.sigma_sq <= 1e-20);
        let nice_1 = p.sigma_star_as(&c, &Sampler::nice(10, 1).unwrap(), exact).unwrap();
        assert!((nice_1.sigma_sq - c.sigma_star_sq).abs() <= 1e-12 * c.sigma_star_sq);
        // τ-nice closed form when Σ∇f_i(x*) = 0: (n−τ)/(τ(n−1)) σ*²
        for tau in 1..=10 {
            let got = p.sigma_star_as(&c, &Sampler::nice(10, tau).unwrap(), exact).unwrap();
            let want = (10 - tau) as f64 / (tau as f64 * 9.0) * c.sigma_star_sq;
            assert!((got.sigma_sq - want).abs() <= 1e-10 * c.sigma_star_sq);
        }
    }

    #[test]
    fn sigma_as_monte_carlo_fallback() {
        let p = RegressionProblem::synthetic(30, 2, 7, LambdaRule::Constant(0.5)).unwrap();
        let c = p.constants().unwrap();
        let s = Sampler::nice(30, 15).unwrap();
        assert!(matches!(
            p.sigma_star_as(&c, &s, SigmaEstimate::Exact),
            Err(Error::SupportTooLarge { .. })
        ));
        let est = p.sigma_star_as(&c, &s, SigmaEstimate::default()).unwrap();
        let want = 15.0 / (15.0 * 29.0) * c.sigma_star_sq;
        let se = est.std_error.unwrap();
        assert!(
            (est.sigma_sq - want).abs() <= 4.0 * se,
            "{} vs {want} (se {se})",
            est.sigma_sq
        );
    }

    #[test]
    fn json_round_trip_and_schema() {
        let p = RegressionProblem::toy2();
        let s = serde_json::to_string(&p).unwrap();
        assert_eq!(
            s,
            r#"{"n":2,"d":1,"A":[[1.0],[1.0]],"b":[2.0,-2.0],"lambdas":[0.5,1.5]}"#
        );
        let back: RegressionProblem = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        let bad = r#"{"n":1,"d":1,"A":[[1.0]],"b":[1.0],"lambdas":[0.0]}"#;
        assert!(serde_json::from_str::<RegressionProblem>(bad).is_err());
        let extra = r#"{"n":1,"d":1,"A":[[1.0]],"b":[1.0],"lambdas":[1.0],"x":1}"#;
        assert!(serde_json::from_str::<RegressionProblem>(extra).is_err());
    }

    #[test]
    fn lambda_rule_cycles_powers_of_two() {
        assert_eq!(LambdaRule::PowersOfTwo.lambdas(5, 3), vec![0.5, 0.25, 0.125, 0.5, 0.25]);
        assert_eq!(LambdaRule::Constant(1.0).lambdas(2, 7), vec![1.0, 1.0]);
    }
}

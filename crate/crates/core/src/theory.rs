//! Rate machinery: the six recursion constants of each method, the Lyapunov
//! certificate `(θ, ζ)`, closed-form rates, stepsize selectors and iteration
//! complexities.
//!
//! With constants `(A₁, B₁, C₁, A₂, B₂, C₂)`, stepsize `γ`, weight `α` and
//! strong convexity `μ`:
//!
//! ```text
//! θ = max{ (1+γ²A₁)(1+αA₂)/(1+γμ)²,  γ²B₁(1+αA₂)/(α(1+γμ)²) + B₂ }
//! ζ = γ²C₁(1+αA₂)/(1+γμ)² + αC₂
//! E[Ψ_k] ≤ θᵏ Ψ₀ + ζ/(1−θ)
//! ```

use serde::Serialize;

use crate::engine::{CorrectionStrategy, MethodSpec};
use crate::error::{Error, FailedInequality, Result};
use crate::numerics::norm;
use crate::problem::{ProblemConstants, RegressionProblem, SigmaEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AssumptionParams {
    pub a1: f64,
    pub b1: f64,
    pub c1: f64,
    pub a2: f64,
    pub b2: f64,
    pub c2: f64,
}

impl AssumptionParams {
    pub fn new(a1: f64, b1: f64, c1: f64, a2: f64, b2: f64, c2: f64) -> Result<Self> {
        let all = [a1, b1, c1, a2, b2, c2];
        if all.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::DegenerateConstants(format!(
                "constants must be finite and ≥ 0: {all:?}"
            )));
        }
        if b2 >= 1.0 {
            return Err(Error::DegenerateConstants(format!("B2 = {b2} must be < 1")));
        }
        Ok(Self { a1, b1, c1, a2, b2, c2 })
    }

    pub fn zero() -> Self {
        Self {
            a1: 0.0,
            b1: 0.0,
            c1: 0.0,
            a2: 0.0,
            b2: 0.0,
            c2: 0.0,
        }
    }

    pub fn as_array(&self) -> [f64; 6] {
        [self.a1, self.b1, self.c1, self.a2, self.b2, self.c2]
    }
}

/// The problem constants a method's rate depends on. `mu` and `sigma_sq` are
/// the sampling-adjusted values for the `None` strategy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateConstants {
    pub mu: f64,
    pub sigma_sq: Option<f64>,
    pub delta: Option<f64>,
    pub nu: Option<f64>,
    pub n: Option<usize>,
}

impl RateConstants {
    /// Everything available from the problem, with plain `μ` and `σ*²`.
    pub fn from_problem(consts: &ProblemConstants) -> Self {
        Self {
            mu: consts.mu,
            sigma_sq: Some(consts.sigma_star_sq),
            delta: Some(consts.delta),
            nu: Some(consts.nu),
            n: Some(consts.mu_each.len()),
        }
    }

    /// As [`from_problem`](Self::from_problem), but for the `None` strategy
    /// `(μ, σ²)` are replaced by the values of the method's sampler.
    pub fn for_method(
        method: &MethodSpec,
        problem: &RegressionProblem,
        consts: &ProblemConstants,
        estimate: SigmaEstimate,
    ) -> Result<Self> {
        let mut rc = Self::from_problem(consts);
        if method.strategy == CorrectionStrategy::None {
            let s = &method.sampler;
            let sc = if s.is_singleton() {
                problem.sigma_star_ns(consts, s.inclusion_probs())?
            } else {
                problem.sigma_star_as(consts, s, estimate)?
            };
            rc.mu = sc.mu;
            rc.sigma_sq = Some(sc.sigma_sq);
        }
        Ok(rc)
    }

    fn sigma_sq(&self) -> Result<f64> {
        self.sigma_sq.ok_or(Error::MissingConstant("sigma_sq"))
    }

    fn delta(&self) -> Result<f64> {
        self.delta.ok_or(Error::MissingConstant("delta"))
    }

    fn nu(&self) -> Result<f64> {
        self.nu.ok_or(Error::MissingConstant("nu"))
    }

    fn n(&self) -> Result<f64> {
        self.n.map(|n| n as f64).ok_or(Error::MissingConstant("n"))
    }
}

/// The constants `(A₁, B₁, C₁, A₂, B₂, C₂)` for a strategy.
pub fn method_params(strategy: CorrectionStrategy, rc: &RateConstants) -> Result<AssumptionParams> {
    let z = AssumptionParams::zero();
    Ok(match strategy {
        CorrectionStrategy::None => AssumptionParams {
            c1: rc.sigma_sq()?,
            ..z
        },
        CorrectionStrategy::Star => z,
        CorrectionStrategy::Gc => AssumptionParams {
            a1: rc.delta()?.powi(2),
            ..z
        },
        CorrectionStrategy::Lsvrp { p } => AssumptionParams {
            b1: rc.delta()?.powi(2),
            a2: p,
            b2: 1.0 - p,
            ..z
        },
        CorrectionStrategy::PointSaga => {
            let n = rc.n()?;
            AssumptionParams {
                b1: rc.nu()?.powi(2),
                a2: 1.0 / n,
                b2: (n - 1.0) / n,
                ..z
            }
        }
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RateCertificate {
    pub theta: f64,
    pub zeta: f64,
    pub neighborhood: f64,
    pub alpha: f64,
    pub gamma: f64,
    /// `(1+γ²A₁)(1+αA₂)/(1+γμ)²`
    pub distance_factor: f64,
    /// `γ²B₁(1+αA₂)/(α(1+γμ)²) + B₂`
    pub control_factor: f64,
}

impl RateCertificate {
    /// `θᵏ Ψ₀ + ζ/(1−θ)`
    pub fn bound(&self, k: usize, psi0: f64) -> f64 {
        self.theta.powi(k as i32) * psi0 + self.neighborhood
    }
}

/// Builds the certificate, or reports which inequality fails.
pub fn certificate(params: &AssumptionParams, gamma: f64, alpha: f64, mu: f64) -> Result<RateCertificate> {
    if !(gamma > 0.0) || !gamma.is_finite() {
        return Err(Error::NonPositiveGamma(gamma));
    }
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::DegenerateConstants(format!(
            "Lyapunov weight α = {alpha} must be > 0"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::DegenerateConstants(format!("μ = {mu} must be > 0")));
    }
    let AssumptionParams { a1, b1, c1, a2, b2, c2 } = *params;
    let gm = gamma * mu;
    let denom = (1.0 + gm) * (1.0 + gm);
    let g2 = gamma * gamma;
    let scale = 1.0 + alpha * a2;
    let distance_factor = (1.0 + g2 * a1) * scale / denom;
    let control_factor = g2 * b1 * scale / (alpha * denom) + b2;
    // 1 − distance_factor without cancellation when γμ is small
    let distance_gap = (gm * (2.0 + gm) - g2 * a1 - alpha * a2 - g2 * a1 * alpha * a2) / denom;
    let control_gap = (1.0 - b2) - g2 * b1 * scale / (alpha * denom);
    if !(distance_gap > 0.0) {
        return Err(Error::CertificateInvalid {
            inequality: FailedInequality::Distance,
            value: distance_factor,
        });
    }
    if !(control_gap > 0.0) {
        return Err(Error::CertificateInvalid {
            inequality: FailedInequality::Control,
            value: control_factor,
        });
    }
    let theta = distance_factor.max(control_factor);
    let zeta = g2 * c1 * scale / denom + alpha * c2;
    let neighborhood = if zeta == 0.0 {
        0.0
    } else {
        zeta / distance_gap.min(control_gap)
    };
    Ok(RateCertificate {
        theta,
        zeta,
        neighborhood,
        alpha,
        gamma,
        distance_factor,
        control_factor,
    })
}

/// Per-step contraction factor and neighborhood derived directly for each method.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ClosedFormRate {
    pub factor: f64,
    pub neighborhood: f64,
}

/// Closed-form rate. `alpha` is needed only for L-SVRP; Point SAGA uses
/// `α = γμn`. For `None`, `rc.mu`/`rc.sigma_sq` should already be the
/// sampling-adjusted values.
pub fn closed_form_rate(
    strategy: CorrectionStrategy,
    rc: &RateConstants,
    gamma: f64,
    alpha: Option<f64>,
) -> Result<ClosedFormRate> {
    if !(gamma > 0.0) {
        return Err(Error::NonPositiveGamma(gamma));
    }
    let mu = rc.mu;
    let gm = gamma * mu;
    let base = 1.0 / ((1.0 + gm) * (1.0 + gm));
    Ok(match strategy {
        CorrectionStrategy::None => ClosedFormRate {
            factor: base,
            neighborhood: gamma * rc.sigma_sq()? / (gamma * mu * mu + 2.0 * mu),
        },
        CorrectionStrategy::Star => ClosedFormRate {
            factor: base,
            neighborhood: 0.0,
        },
        CorrectionStrategy::Gc => ClosedFormRate {
            factor: (1.0 + gamma * gamma * rc.delta()?.powi(2)) * base,
            neighborhood: 0.0,
        },
        CorrectionStrategy::Lsvrp { p } => {
            let alpha = alpha.unwrap_or(gm / p);
            let d2 = rc.delta()?.powi(2);
            let a = (1.0 + alpha * p) * base;
            let b = (1.0 + alpha * p) * gamma * gamma * d2 * base / alpha + 1.0 - p;
            ClosedFormRate {
                factor: a.max(b),
                neighborhood: 0.0,
            }
        }
        CorrectionStrategy::PointSaga => {
            let n = rc.n()?;
            let nu2 = rc.nu()?.powi(2);
            let a = 1.0 / (1.0 + gm);
            let b = gamma * nu2 / ((1.0 + gm) * mu * n) + 1.0 - 1.0 / n;
            ClosedFormRate {
                factor: a.max(b),
                neighborhood: 0.0,
            }
        }
    })
}

/// A stepsize from a selector; `Unbounded` when any `γ > 0` is admissible
/// and larger is better (no dissimilarity or no noise).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Gamma {
    Finite(f64),
    Unbounded,
}

impl Gamma {
    pub fn value(&self) -> Option<f64> {
        match self {
            Gamma::Finite(g) => Some(*g),
            Gamma::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StepsizeChoice {
    pub gamma: Gamma,
    pub alpha: Option<f64>,
    /// `k ≥ complexity_factor · log(log_scale · Ψ₀ / ε)`
    pub complexity_factor: f64,
    pub log_scale: f64,
}

impl StepsizeChoice {
    /// Predicted iteration count to reach `E[Ψ_k] ≤ ε` (0 if already there).
    pub fn iterations(&self, eps: f64, psi0: f64) -> f64 {
        (self.complexity_factor * (self.log_scale * psi0 / eps).ln()).max(0.0)
    }

    /// `Ψ₀` when `x₀`, the snapshot and the table all start at the same point
    /// at squared distance `d0` from `x*`.
    pub fn initial_lyapunov(&self, d0: f64) -> f64 {
        d0 * (1.0 + self.alpha.unwrap_or(0.0))
    }
}

/// Theory stepsizes. `eps` is used only by the `None` selector.
pub fn optimal_stepsize(strategy: CorrectionStrategy, rc: &RateConstants, eps: f64) -> Result<StepsizeChoice> {
    let mu = rc.mu;
    match strategy {
        CorrectionStrategy::None => {
            if !(eps > 0.0) {
                return Err(Error::DegenerateConstants(format!(
                    "target accuracy ε = {eps} must be > 0"
                )));
            }
            let s2 = rc.sigma_sq()?;
            let gamma = if s2 > 0.0 {
                Gamma::Finite(mu * eps / s2)
            } else {
                Gamma::Unbounded
            };
            Ok(StepsizeChoice {
                gamma,
                alpha: None,
                complexity_factor: s2 / (2.0 * eps * mu * mu) + 0.5,
                log_scale: 2.0,
            })
        }
        CorrectionStrategy::Star => Err(Error::NoSelector("star")),
        CorrectionStrategy::Gc => {
            let d2 = rc.delta()?.powi(2);
            let gamma = if d2 > 0.0 {
                Gamma::Finite(mu / d2)
            } else {
                Gamma::Unbounded
            };
            Ok(StepsizeChoice {
                gamma,
                alpha: None,
                complexity_factor: 1.0 + d2 / (mu * mu),
                log_scale: 1.0,
            })
        }
        CorrectionStrategy::Lsvrp { p } => {
            let d2 = rc.delta()?.powi(2);
            let denom = p * d2 / mu + (1.0 - p) * mu;
            let factor = 1.0 / p + d2 / (mu * mu);
            if denom == 0.0 {
                return Ok(StepsizeChoice {
                    gamma: Gamma::Unbounded,
                    alpha: None,
                    complexity_factor: factor,
                    log_scale: 1.0,
                });
            }
            let gamma = p / denom;
            let alpha = gamma * mu / p;
            let rate = closed_form_rate(strategy, rc, gamma, Some(alpha))?;
            let a = (1.0 + alpha * p) / (1.0 + gamma * mu).powi(2);
            let b = (1.0 + alpha * p) * gamma * gamma * d2 / ((1.0 + gamma * mu).powi(2) * alpha) + 1.0 - p;
            if (a - b).abs() > 1e-9 * rate.factor {
                return Err(Error::Mismatch {
                    what: "lsvrp balancing",
                    certificate: b,
                    closed_form: a,
                });
            }
            Ok(StepsizeChoice {
                gamma: Gamma::Finite(gamma),
                alpha: Some(alpha),
                complexity_factor: factor,
                log_scale: 1.0,
            })
        }
        CorrectionStrategy::PointSaga => {
            let n = rc.n()?;
            let nu2 = rc.nu()?.powi(2);
            let gamma = 1.0 / (nu2 / mu + (n - 1.0) * mu);
            let a = 1.0 / (1.0 + gamma * mu);
            let b = gamma * nu2 / ((1.0 + gamma * mu) * mu * n) + 1.0 - 1.0 / n;
            if (a - b).abs() > 1e-9 * a {
                return Err(Error::Mismatch {
                    what: "point saga balancing",
                    certificate: b,
                    closed_form: a,
                });
            }
            Ok(StepsizeChoice {
                gamma: Gamma::Finite(gamma),
                alpha: Some(gamma * mu * n),
                complexity_factor: n + nu2 / (mu * mu),
                log_scale: 1.0,
            })
        }
    }
}

/// Iterations for a per-step factor `q < 1` to bring `Ψ₀` down to `ε`.
pub fn iterations_for_factor(factor: f64, psi0: f64, eps: f64) -> f64 {
    ((psi0 / eps).ln() / -factor.ln()).max(0.0)
}

/// Best L-SVRP weight for fixed `(γ, p)`: minimizes `max{A(α), B(α)}`.
///
/// `A` increases and `B` decreases in `α`, so the minimizer is their crossing,
/// the positive root of `pα² + (1 − (1−p)(1+γμ)² − pγ²δ²)α − γ²δ² = 0`.
/// Located by bisection in `log α` and checked against that root.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BestAlpha {
    pub alpha: f64,
    pub theta: f64,
    pub quadratic_root: f64,
}

pub fn lsvrp_best_alpha(rc: &RateConstants, gamma: f64, p: f64) -> Result<BestAlpha> {
    let d2 = rc.delta()?.powi(2);
    if d2 == 0.0 {
        return Err(Error::DegenerateConstants("δ = 0: max{A, B} decreases as α → 0".into()));
    }
    let q = (1.0 + gamma * rc.mu).powi(2);
    let g2d2 = gamma * gamma * d2;
    let a = |al: f64| (1.0 + al * p) / q;
    let b = |al: f64| (1.0 + al * p) * g2d2 / (q * al) + 1.0 - p;
    let (mut lo, mut hi) = (-60.0f64, 60.0f64);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if a(mid.exp()) < b(mid.exp()) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let alpha = (0.5 * (lo + hi)).exp();
    let lin = 1.0 - (1.0 - p) * q - p * g2d2;
    let root = (-lin + (lin * lin + 4.0 * p * g2d2).sqrt()) / (2.0 * p);
    Ok(BestAlpha {
        alpha,
        theta: a(alpha).max(b(alpha)),
        quadratic_root: root,
    })
}

/// `SPPM-IS` probabilities `p_i ∝ μ_i`.
pub fn importance_probs(mu_each: &[f64]) -> Vec<f64> {
    let total: f64 = mu_each.iter().sum();
    mu_each.iter().map(|m| m / total).collect()
}

/// `SPPM-VS` probabilities `p_i ∝ ‖∇f_i(x*)‖`; degenerate when any norm is 0.
pub fn variance_probs(grad_at_star: &[Vec<f64>]) -> Result<Vec<f64>> {
    let norms: Vec<f64> = grad_at_star.iter().map(|g| norm(g)).collect();
    if let Some(i) = norms.iter().position(|v| *v == 0.0) {
        return Err(Error::DegenerateConstants(format!(
            "∇f_{i}(x*) = 0, so p_{i} would vanish"
        )));
    }
    let total: f64 = norms.iter().sum();
    Ok(norms.iter().map(|v| v / total).collect())
}

/// [`variance_probs`], falling back to `(1−ε)·q + ε·uniform` when degenerate.
pub fn variance_probs_floored(grad_at_star: &[Vec<f64>], floor: f64) -> Vec<f64> {
    match variance_probs(grad_at_star) {
        Ok(p) => p,
        Err(_) => {
            let n = grad_at_star.len() as f64;
            let norms: Vec<f64> = grad_at_star.iter().map(|g| norm(g)).collect();
            let total: f64 = norms.iter().sum();
            norms
                .iter()
                .map(|v| {
                    let q = if total > 0.0 { v / total } else { 1.0 / n };
                    (1.0 - floor) * q + floor / n
                })
                .collect()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheck {
    pub certificate: RateCertificate,
    pub closed_form: ClosedFormRate,
}

fn rel_gap(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

/// Checks that the generic certificate reproduces the method's own rate to
/// `1e−12` relative. Point SAGA always uses `α = γμn`.
pub fn validate_certificate_against_closed_form(
    strategy: CorrectionStrategy,
    rc: &RateConstants,
    gamma: f64,
    alpha: f64,
) -> Result<CrossCheck> {
    let alpha = match strategy {
        CorrectionStrategy::PointSaga => gamma * rc.mu * rc.n()?,
        _ => alpha,
    };
    let params = method_params(strategy, rc)?;
    let cert = certificate(&params, gamma, alpha, rc.mu)?;
    let closed = closed_form_rate(strategy, rc, gamma, Some(alpha))?;
    if rel_gap(cert.theta, closed.factor) > 1e-12 {
        return Err(Error::Mismatch {
            what: "contraction factor",
            certificate: cert.theta,
            closed_form: closed.factor,
        });
    }
    if rel_gap(cert.neighborhood, closed.neighborhood) > 1e-12 {
        return Err(Error::Mismatch {
            what: "neighborhood",
            certificate: cert.neighborhood,
            closed_form: closed.neighborhood,
        });
    }
    Ok(CrossCheck {
        certificate: cert,
        closed_form: closed,
    })
}

//! Turning a config into method cells, running them and collecting rows.

use rayon::prelude::*;
use sppm_core::engine;
use sppm_core::problem::SigmaEstimate;
use sppm_core::theory::{self, Gamma, RateConstants};
use sppm_core::{CorrectionStrategy, MethodSpec, ProblemConstants, RegressionProblem, Sampler};

use crate::config::{ExperimentConfig, MethodConfig, MethodName, X0Rule};
use crate::error::{CliError, Result};

/// Floor applied to variance-sampling probabilities so every index stays
/// reachable when some `∇f_i(x*)` vanishes.
pub const VS_FLOOR: f64 = 1e-6;

/// Default accuracy for the plain-SPPM theory stepsize `γ = με/σ²`.
pub const DEFAULT_EPS: f64 = 1e-3;

/// One (method, γ) combination.
#[derive(Debug, Clone)]
pub struct Cell {
    pub label: String,
    pub spec: MethodSpec,
    /// Stepsize came from the theory selector rather than the config.
    pub theory: bool,
}

#[derive(Debug, Clone)]
pub struct Experiment {
    pub problem: RegressionProblem,
    pub consts: ProblemConstants,
    pub x0: Vec<f64>,
    pub cells: Vec<Cell>,
    pub runs: usize,
    pub base_seed: u64,
}

/// Recorded iterations: all up to 1000, then every 10th.
pub fn is_recorded(k: usize) -> bool {
    k <= 1000 || k.is_multiple_of(10)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub iteration: usize,
    pub sq_dist: f64,
    pub lyapunov: Option<f64>,
}

/// Thinned trajectories, `runs[cell][run]`.
#[derive(Debug, Clone)]
pub struct Results {
    pub cells: Vec<Cell>,
    pub runs: Vec<Vec<Vec<Row>>>,
}

impl Results {
    /// Mean `sq_dist` over runs at each recorded iteration of a cell.
    pub fn mean_curve(&self, cell: usize) -> Vec<(usize, f64)> {
        let runs = &self.runs[cell];
        let m = runs.len() as f64;
        (0..runs[0].len())
            .map(|j| (runs[0][j].iteration, runs.iter().map(|r| r[j].sq_dist).sum::<f64>() / m))
            .collect()
    }
}

fn sampler_for(m: &MethodConfig, p: &RegressionProblem, consts: &ProblemConstants, at: &str) -> Result<Sampler> {
    let n = p.n();
    let wrap = |field: &str| {
        let path = format!("{at}.{field}");
        move |e: sppm_core::Error| CliError::config(path, e)
    };
    let blocks = || match (&m.blocks, m.num_blocks) {
        (Some(b), _) => b.clone(),
        (None, Some(b)) => Sampler::contiguous_blocks(n, b),
        (None, None) => unreachable!("validated"),
    };
    Ok(match m.name {
        MethodName::Sppm => match &m.probs {
            Some(probs) => Sampler::singleton(probs.clone()).map_err(wrap("probs"))?,
            None => Sampler::uniform(n),
        },
        MethodName::SppmIs => Sampler::singleton(theory::importance_probs(&consts.mu_each)).map_err(wrap("name"))?,
        MethodName::SppmVs => {
            Sampler::singleton(theory::variance_probs_floored(&consts.grad_at_star, VS_FLOOR)).map_err(wrap("name"))?
        }
        MethodName::SppmNice => Sampler::nice(n, m.tau.expect("validated")).map_err(wrap("tau"))?,
        MethodName::SppmBlock => {
            let b = blocks();
            let probs = m.probs.clone().unwrap_or_else(|| vec![1.0 / b.len() as f64; b.len()]);
            Sampler::block(n, b, probs).map_err(wrap("blocks"))?
        }
        MethodName::SppmStratified => Sampler::stratified(n, blocks()).map_err(wrap("blocks"))?,
        _ => Sampler::uniform(n),
    })
}

fn strategy_for(m: &MethodConfig) -> CorrectionStrategy {
    match m.name {
        MethodName::SppmStar => CorrectionStrategy::Star,
        MethodName::SppmGc => CorrectionStrategy::Gc,
        MethodName::Lsvrp => CorrectionStrategy::Lsvrp {
            p: m.p.expect("validated"),
        },
        MethodName::PointSaga => CorrectionStrategy::PointSaga,
        _ => CorrectionStrategy::None,
    }
}

/// Lyapunov weight convention when none is configured.
fn default_alpha(strategy: CorrectionStrategy, gamma: f64, consts: &ProblemConstants) -> Option<f64> {
    match strategy {
        CorrectionStrategy::Lsvrp { p } => Some(gamma * consts.mu / p),
        CorrectionStrategy::PointSaga => Some(gamma * consts.mu * consts.mu_each.len() as f64),
        _ => None,
    }
}

/// Builds the `(γ, α)` cells of one configured method.
pub fn method_cells(
    m: &MethodConfig,
    p: &RegressionProblem,
    consts: &ProblemConstants,
    iterations: usize,
    at: &str,
) -> Result<Vec<Cell>> {
    let sampler = sampler_for(m, p, consts, at)?;
    let strategy = strategy_for(m);
    let label = m.label();
    let mut cells = Vec::new();
    let mk = |gamma: f64, alpha: Option<f64>| {
        MethodSpec::new(strategy, sampler.clone(), gamma, iterations, alpha)
            .map_err(|e| CliError::config(at.to_string(), e))
    };
    if m.is_theory() {
        let probe = mk(1.0, None)?;
        let rc = RateConstants::for_method(&probe, p, consts, SigmaEstimate::default())?;
        let choice = theory::optimal_stepsize(strategy, &rc, m.eps.unwrap_or(DEFAULT_EPS))
            .map_err(|e| CliError::config(format!("{at}.gamma"), e))?;
        let gamma = match choice.gamma {
            Gamma::Finite(g) => g,
            Gamma::Unbounded => {
                return Err(CliError::config(
                    format!("{at}.gamma"),
                    "theory allows any stepsize here; give γ explicitly",
                ))
            }
        };
        let alpha = m
            .alpha
            .or(choice.alpha)
            .or_else(|| default_alpha(strategy, gamma, consts));
        cells.push(Cell {
            label,
            spec: mk(gamma, alpha)?,
            theory: true,
        });
    } else {
        for gamma in m.gammas() {
            let alpha = m.alpha.or_else(|| default_alpha(strategy, gamma, consts));
            cells.push(Cell {
                label: label.clone(),
                spec: mk(gamma, alpha)?,
                theory: false,
            });
        }
    }
    Ok(cells)
}

impl Experiment {
    pub fn build(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let pc = &cfg.problem;
        let problem =
            RegressionProblem::synthetic(pc.n, pc.d, pc.seed, pc.lambda).map_err(|e| CliError::config("problem", e))?;
        let consts = problem.constants()?;
        let x0 = match &cfg.x0 {
            X0Rule::Default => engine::default_x0(&consts.x_star),
            X0Rule::Zeros => vec![0.0; pc.d],
            X0Rule::Point(x) => x.clone(),
        };
        let mut cells = Vec::new();
        for (k, m) in cfg.methods.iter().enumerate() {
            cells.extend(method_cells(
                m,
                &problem,
                &consts,
                cfg.iterations,
                &format!("methods[{k}]"),
            )?);
        }
        Ok(Self {
            problem,
            consts,
            x0,
            cells,
            runs: cfg.runs,
            base_seed: cfg.base_seed,
        })
    }

    /// Runs every (cell, run) pair in parallel. Run `r` of every cell uses
    /// stream `(base_seed, r)`, so methods see common random numbers.
    pub fn run(&self) -> Result<Results> {
        let jobs: Vec<(usize, usize)> = (0..self.cells.len())
            .flat_map(|c| (0..self.runs).map(move |r| (c, r)))
            .collect();
        let flat: Vec<Vec<Row>> = jobs
            .par_iter()
            .map(|&(c, r)| {
                let t = engine::run(
                    &self.cells[c].spec,
                    &self.problem,
                    &self.consts,
                    &self.x0,
                    self.base_seed,
                    r as u64,
                )?;
                Ok(thin(&t.sq_dist, t.lyapunov.as_deref()))
            })
            .collect::<Result<_>>()?;
        let mut it = flat.into_iter();
        let runs = (0..self.cells.len())
            .map(|_| it.by_ref().take(self.runs).collect())
            .collect();
        Ok(Results {
            cells: self.cells.clone(),
            runs,
        })
    }
}

fn thin(sq_dist: &[f64], lyapunov: Option<&[f64]>) -> Vec<Row> {
    sq_dist
        .iter()
        .enumerate()
        .filter(|(k, _)| is_recorded(*k))
        .map(|(k, &d)| Row {
            iteration: k,
            sq_dist: d,
            lyapunov: lyapunov.map(|l| l[k]),
        })
        .collect()
}

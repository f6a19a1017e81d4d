//! Experiment configuration: one JSON document, unknown keys rejected.

use std::collections::HashSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sppm_core::LambdaRule;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemConfig,
    pub methods: Vec<MethodConfig>,
    pub iterations: usize,
    pub runs: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub x0: X0Rule,
    pub output: OutputConfig,
}

/// Synthetic instance: Gaussian rows and targets drawn from `seed`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub lambda: LambdaRule,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodName {
    Sppm,
    SppmUs,
    SppmIs,
    SppmVs,
    SppmNice,
    SppmBlock,
    SppmStratified,
    SppmStar,
    SppmGc,
    Lsvrp,
    PointSaga,
}

impl MethodName {
    pub const ALL: [MethodName; 11] = [
        MethodName::Sppm,
        MethodName::SppmUs,
        MethodName::SppmIs,
        MethodName::SppmVs,
        MethodName::SppmNice,
        MethodName::SppmBlock,
        MethodName::SppmStratified,
        MethodName::SppmStar,
        MethodName::SppmGc,
        MethodName::Lsvrp,
        MethodName::PointSaga,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            MethodName::Sppm => "sppm",
            MethodName::SppmUs => "sppm-us",
            MethodName::SppmIs => "sppm-is",
            MethodName::SppmVs => "sppm-vs",
            MethodName::SppmNice => "sppm-nice",
            MethodName::SppmBlock => "sppm-block",
            MethodName::SppmStratified => "sppm-stratified",
            MethodName::SppmStar => "sppm-star",
            MethodName::SppmGc => "sppm-gc",
            MethodName::Lsvrp => "lsvrp",
            MethodName::PointSaga => "point-saga",
        }
    }

    /// Plain SPPM with some sampling, i.e. no correction vector.
    pub fn is_plain(&self) -> bool {
        !matches!(
            self,
            MethodName::SppmStar | MethodName::SppmGc | MethodName::Lsvrp | MethodName::PointSaga
        )
    }

    /// Whether `theory::optimal_stepsize` has a selector for the method.
    pub fn has_selector(&self) -> bool {
        *self != MethodName::SppmStar
    }
}

impl std::str::FromStr for MethodName {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown method {s:?}"))
    }
}

/// A number, a list of numbers, or the keyword `"theory"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GammaSpec {
    Value(f64),
    List(Vec<f64>),
    Keyword(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub name: MethodName,
    /// Name in the CSV `method` column; derived from `name` and extras if absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    pub gamma: GammaSpec,
    /// L-SVRP snapshot refresh probability.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p: Option<f64>,
    /// Minibatch size for `sppm-nice`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<usize>,
    /// Index probabilities for `sppm`, block probabilities for `sppm-block`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<Vec<usize>>>,
    /// Contiguous, nearly equal blocks; alternative to `blocks`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub num_blocks: Option<usize>,
    /// Lyapunov weight reported in the `lyapunov` column.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    /// Target accuracy used by the plain-SPPM theory stepsize.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

impl MethodConfig {
    pub fn new(name: MethodName, gamma: GammaSpec) -> Self {
        Self {
            name,
            label: None,
            gamma,
            p: None,
            tau: None,
            probs: None,
            blocks: None,
            num_blocks: None,
            alpha: None,
            eps: None,
        }
    }

    pub fn label(&self) -> String {
        if let Some(l) = &self.label {
            return l.clone();
        }
        let base = self.name.as_str();
        match (self.name, self.tau, self.p) {
            (MethodName::SppmNice, Some(t), _) => format!("{base}(tau={t})"),
            (MethodName::Lsvrp, _, Some(p)) => format!("{base}(p={p:?})"),
            _ => base.to_string(),
        }
    }

    pub fn is_theory(&self) -> bool {
        matches!(&self.gamma, GammaSpec::Keyword(_))
    }

    /// Explicit stepsizes; empty for `"theory"`.
    pub fn gammas(&self) -> Vec<f64> {
        match &self.gamma {
            GammaSpec::Value(g) => vec![*g],
            GammaSpec::List(gs) => gs.clone(),
            GammaSpec::Keyword(_) => Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub enum X0Rule {
    /// `x* + (10/√d)·1`
    #[default]
    Default,
    Zeros,
    Point(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub csv: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub svg: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parses and validates; errors carry the JSON path of the bad field.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::config(path, e.into_inner())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let (n, d) = (self.problem.n, self.problem.d);
        if n == 0 {
            return Err(CliError::config("problem.n", "must be at least 1"));
        }
        if d == 0 {
            return Err(CliError::config("problem.d", "must be at least 1"));
        }
        if let LambdaRule::Constant(c) = self.problem.lambda {
            if !(c > 0.0 && c.is_finite()) {
                return Err(CliError::config(
                    "problem.lambda.value",
                    format!("λ must be > 0, got {c}"),
                ));
            }
        }
        if self.iterations == 0 {
            return Err(CliError::config("iterations", "must be at least 1"));
        }
        if self.runs == 0 {
            return Err(CliError::config("runs", "must be at least 1"));
        }
        if self.methods.is_empty() {
            return Err(CliError::config("methods", "list is empty"));
        }
        if let X0Rule::Point(x) = &self.x0 {
            if x.len() != d {
                return Err(CliError::config(
                    "x0.point",
                    format!("has length {}, expected d = {d}", x.len()),
                ));
            }
        }
        let mut labels = HashSet::new();
        for (k, m) in self.methods.iter().enumerate() {
            let at = |field: &str| format!("methods[{k}].{field}");
            validate_method(m, n, &at)?;
            if !labels.insert(m.label()) {
                return Err(CliError::config(
                    at("label"),
                    format!("duplicate method label {:?}", m.label()),
                ));
            }
        }
        Ok(())
    }
}

fn validate_method(m: &MethodConfig, n: usize, at: &dyn Fn(&str) -> String) -> Result<()> {
    use MethodName::*;
    match &m.gamma {
        GammaSpec::Keyword(k) if k == "theory" => {
            if !m.name.has_selector() {
                return Err(CliError::config(
                    at("gamma"),
                    format!("{} has no theory stepsize", m.name.as_str()),
                ));
            }
        }
        GammaSpec::Keyword(k) => {
            return Err(CliError::config(
                at("gamma"),
                format!("expected a number, a list or \"theory\", got {k:?}"),
            ));
        }
        GammaSpec::List(gs) if gs.is_empty() => {
            return Err(CliError::config(at("gamma"), "list is empty"));
        }
        _ => {}
    }
    for g in m.gammas() {
        if !(g > 0.0 && g.is_finite()) {
            return Err(CliError::config(at("gamma"), format!("stepsize must be > 0, got {g}")));
        }
    }
    let reject = |present: bool, field: &str| -> Result<()> {
        if present {
            Err(CliError::config(at(field), format!("not used by {}", m.name.as_str())))
        } else {
            Ok(())
        }
    };
    reject(m.p.is_some() && m.name != Lsvrp, "p")?;
    reject(m.tau.is_some() && m.name != SppmNice, "tau")?;
    reject(m.probs.is_some() && !matches!(m.name, Sppm | SppmBlock), "probs")?;
    reject(
        m.blocks.is_some() && !matches!(m.name, SppmBlock | SppmStratified),
        "blocks",
    )?;
    reject(
        m.num_blocks.is_some() && !matches!(m.name, SppmBlock | SppmStratified),
        "num_blocks",
    )?;
    reject(m.eps.is_some() && !(m.name.is_plain() && m.is_theory()), "eps")?;
    match m.name {
        Lsvrp => match m.p {
            Some(p) if p > 0.0 && p <= 1.0 => {}
            Some(p) => return Err(CliError::config(at("p"), format!("need 0 < p ≤ 1, got {p}"))),
            None => return Err(CliError::config(at("p"), "required for lsvrp")),
        },
        SppmNice => match m.tau {
            Some(t) if t >= 1 && t <= n => {}
            Some(t) => return Err(CliError::config(at("tau"), format!("need 1 ≤ τ ≤ n = {n}, got {t}"))),
            None => return Err(CliError::config(at("tau"), "required for sppm-nice")),
        },
        SppmBlock | SppmStratified => match (&m.blocks, m.num_blocks) {
            (Some(_), Some(_)) => return Err(CliError::config(at("num_blocks"), "give either blocks or num_blocks")),
            (None, None) => return Err(CliError::config(at("blocks"), "blocks or num_blocks required")),
            (None, Some(b)) if b == 0 || b > n => {
                return Err(CliError::config(
                    at("num_blocks"),
                    format!("need 1 ≤ b ≤ n = {n}, got {b}"),
                ))
            }
            _ => {}
        },
        _ => {}
    }
    if let Some(a) = m.alpha {
        if !(a >= 0.0 && a.is_finite()) {
            return Err(CliError::config(at("alpha"), format!("must be ≥ 0, got {a}")));
        }
    }
    if let Some(e) = m.eps {
        if e.is_nan() || e <= 0.0 {
            return Err(CliError::config(at("eps"), format!("must be > 0, got {e}")));
        }
    }
    Ok(())
}

//! Embedded experiment grids behind `sppm preset <name>`.

use sppm_core::LambdaRule;

use crate::config::{ExperimentConfig, GammaSpec, MethodConfig, MethodName, OutputConfig, ProblemConfig, X0Rule};

pub const NAMES: [&str; 4] = ["fig1", "fig2", "fig3", "fig4"];

/// `fig4` refresh probabilities; the smallest is `1/n`.
pub const FIG4_PROBS: [f64; 6] = [1e-3, 5e-3, 1e-2, 5e-2, 1e-1, 1.0];

fn base(name: &str, n: usize, d: usize, lambda: LambdaRule, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        problem: ProblemConfig { n, d, seed, lambda },
        methods: Vec::new(),
        iterations: 0,
        runs: 0,
        base_seed: seed,
        x0: X0Rule::Default,
        output: OutputConfig {
            csv: format!("{name}.csv").into(),
            svg: Some(format!("{name}.svg").into()),
        },
    }
}

fn method(name: MethodName, gamma: GammaSpec) -> MethodConfig {
    MethodConfig::new(name, gamma)
}

/// The named preset with both the data seed and `base_seed` set to `seed`.
pub fn preset(name: &str, seed: u64) -> Option<ExperimentConfig> {
    let theory = || GammaSpec::Keyword("theory".into());
    let cfg = match name {
        "fig1" => {
            let gammas = GammaSpec::List(vec![1e-4, 1e-2, 1.0, 1e2]);
            let mut nice = method(MethodName::SppmNice, gammas.clone());
            nice.tau = Some(9);
            ExperimentConfig {
                methods: vec![
                    method(MethodName::SppmUs, gammas.clone()),
                    method(MethodName::SppmIs, gammas.clone()),
                    method(MethodName::SppmVs, gammas),
                    nice,
                ],
                iterations: 5000,
                runs: 10,
                ..base(name, 10, 3, LambdaRule::PowersOfTwo, seed)
            }
        }
        "fig2" => {
            let gammas = GammaSpec::List(vec![1e-2, 1e-1, 1.0]);
            let methods = [1, 2, 5, 9, 10]
                .into_iter()
                .map(|t| {
                    let mut m = method(MethodName::SppmNice, gammas.clone());
                    m.tau = Some(t);
                    m
                })
                .collect();
            ExperimentConfig {
                methods,
                iterations: 5000,
                runs: 10,
                ..base(name, 10, 3, LambdaRule::PowersOfTwo, seed)
            }
        }
        "fig3" => {
            let gammas = GammaSpec::List(vec![1e-2, 1.0, 1e2]);
            ExperimentConfig {
                methods: vec![
                    method(MethodName::SppmUs, gammas.clone()),
                    method(MethodName::SppmGc, gammas.clone()),
                    method(MethodName::SppmStar, gammas),
                ],
                iterations: 2000,
                runs: 10,
                ..base(name, 1000, 10, LambdaRule::Constant(1.0), seed)
            }
        }
        "fig4" => {
            let mut methods = vec![
                method(MethodName::SppmGc, theory()),
                method(MethodName::PointSaga, theory()),
            ];
            methods.extend(FIG4_PROBS.iter().map(|&p| {
                let mut m = method(MethodName::Lsvrp, theory());
                m.p = Some(p);
                m
            }));
            ExperimentConfig {
                methods,
                iterations: 20_000,
                runs: 5,
                ..base(name, 1000, 10, LambdaRule::Constant(1.0), seed)
            }
        }
        _ => return None,
    };
    Some(cfg)
}

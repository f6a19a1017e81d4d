//! Argument parsing and the four subcommands.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sppm_core::numerics::{dist_sq, RNG_ALGORITHM};
use sppm_core::problem::SigmaEstimate;
use sppm_core::theory::{self, Gamma, RateConstants};
use sppm_core::verify::{self, Scale};
use sppm_core::{engine, ControlState, Error, LambdaRule, RegressionProblem};

use crate::config::{ExperimentConfig, GammaSpec, MethodConfig, MethodName};
use crate::error::{CliError, Result};
use crate::experiment::{self, Experiment};
use crate::output;
use crate::presets;

#[derive(Debug, Parser)]
#[command(name = "sppm", version, about = "Stochastic proximal point experiments")]
pub struct Cli {
    /// Overrides the base seed (presets: also the data seed).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for relative output paths.
    #[arg(long, global = true, default_value = ".")]
    pub out_dir: PathBuf,
    /// Overrides the number of runs per (method, γ).
    #[arg(long, global = true)]
    pub runs: Option<usize>,
    #[arg(long, global = true)]
    pub quiet: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run an experiment described by a JSON config file.
    Run { config: PathBuf },
    /// Print a rate certificate and iteration counts for one method.
    Certify(CertifyArgs),
    /// Run the verification suite; one JSON report per line.
    Verify {
        #[arg(long, value_enum, default_value = "quick")]
        scale: ScaleArg,
    },
    /// Run an embedded figure grid.
    Preset {
        #[arg(value_parser = presets::NAMES)]
        name: String,
        /// Print the preset's config instead of running it.
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScaleArg {
    Quick,
    Full,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProblemArg {
    Toy1,
    Toy2,
    Synthetic,
}

#[derive(Debug, Args)]
pub struct CertifyArgs {
    #[arg(long)]
    pub method: MethodName,
    /// A positive number or `theory`.
    #[arg(long)]
    pub gamma: String,
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Target accuracy for iteration counts.
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long)]
    pub p: Option<f64>,
    #[arg(long)]
    pub tau: Option<usize>,
    #[arg(long, value_enum, default_value = "toy1")]
    pub problem: ProblemArg,
    #[arg(long, default_value_t = 10)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub d: usize,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// `powers-of-two` or a positive constant.
    #[arg(long, default_value = "powers-of-two")]
    pub lambda: String,
}

/// Runs the parsed command, writing reports to `out`.
pub fn execute(cli: &Cli, out: &mut dyn Write) -> Result<()> {
    match &cli.command {
        Command::Run { config } => {
            let text = std::fs::read_to_string(config).map_err(|e| CliError::io(config, e))?;
            let mut cfg = ExperimentConfig::from_json(&text)?;
            if let Some(s) = cli.seed {
                cfg.base_seed = s;
            }
            run_and_write(cli, cfg)
        }
        Command::Preset { name, dump } => {
            let mut cfg = presets::preset(name, cli.seed.unwrap_or(0)).expect("clap checks the name");
            if let Some(r) = cli.runs {
                cfg.runs = r;
            }
            if *dump {
                writeln!(out, "{}", cfg.to_json()).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
                return Ok(());
            }
            run_and_write(cli, cfg)
        }
        Command::Certify(args) => {
            let report = certify(args)?;
            let line = serde_json::to_string(&report).expect("report serializes");
            writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
        Command::Verify { scale } => {
            let scale = match scale {
                ScaleArg::Quick => Scale::Quick,
                ScaleArg::Full => Scale::Full,
            };
            let reports = verify::default_suite(scale, cli.seed.unwrap_or(0))?;
            for r in &reports {
                let line = serde_json::to_string(r).expect("report serializes");
                writeln!(out, "{line}").map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
            }
            let failed = reports.iter().filter(|r| !r.passed).count();
            if !cli.quiet {
                eprintln!("{} checks, {failed} failed", reports.len());
            }
            if failed > 0 {
                return Err(CliError::Verify {
                    failed,
                    total: reports.len(),
                });
            }
            Ok(())
        }
    }
}

fn resolve(out_dir: &Path, p: &Path) -> PathBuf {
    if p.is_relative() {
        out_dir.join(p)
    } else {
        p.to_path_buf()
    }
}

#[derive(Serialize)]
struct Metadata<'a> {
    tool_version: &'static str,
    rng_algorithm: &'static str,
    lambda_rule: String,
    x_star: &'a [f64],
    mu: f64,
    sigma_star_sq: f64,
    delta: f64,
    nu: f64,
    cells: Vec<CellMeta>,
    config: &'a ExperimentConfig,
}

#[derive(Serialize)]
struct CellMeta {
    method: String,
    gamma: f64,
    alpha: Option<f64>,
    theory_stepsize: bool,
}

fn lambda_rule_text(rule: LambdaRule) -> String {
    match rule {
        LambdaRule::PowersOfTwo => "lambda_i = 2^-((i mod d) + 1), i zero-based".into(),
        LambdaRule::Constant(c) => format!("lambda_i = {c:?}"),
    }
}

/// Runs `cfg` and writes the CSV, optional SVG and a `.meta.json` sidecar.
pub fn run_and_write(cli: &Cli, mut cfg: ExperimentConfig) -> Result<()> {
    if let Some(r) = cli.runs {
        cfg.runs = r;
    }
    let exp = Experiment::build(&cfg)?;
    let results = exp.run()?;
    let csv = resolve(&cli.out_dir, &cfg.output.csv);
    if let Some(dir) = csv.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    output::write_csv_file(&results, &csv)?;
    let mut written = vec![csv.clone()];
    if let Some(svg) = &cfg.output.svg {
        let svg = resolve(&cli.out_dir, svg);
        if let Some(dir) = svg.parent() {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        output::write_svg_file(&results, &svg)?;
        written.push(svg);
    }
    let meta = Metadata {
        tool_version: env!("CARGO_PKG_VERSION"),
        rng_algorithm: RNG_ALGORITHM,
        lambda_rule: lambda_rule_text(cfg.problem.lambda),
        x_star: &exp.consts.x_star,
        mu: exp.consts.mu,
        sigma_star_sq: exp.consts.sigma_star_sq,
        delta: exp.consts.delta,
        nu: exp.consts.nu,
        cells: exp
            .cells
            .iter()
            .map(|c| CellMeta {
                method: c.label.clone(),
                gamma: c.spec.gamma,
                alpha: c.spec.alpha,
                theory_stepsize: c.theory,
            })
            .collect(),
        config: &cfg,
    };
    let meta_path = csv.with_extension("meta.json");
    let text = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    std::fs::write(&meta_path, text + "\n").map_err(|e| CliError::io(&meta_path, e))?;
    written.push(meta_path);
    if !cli.quiet {
        for w in written {
            eprintln!("wrote {}", w.display());
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct CertifyReport {
    pub method: String,
    pub gamma: f64,
    pub alpha: f64,
    pub theta: f64,
    pub zeta: f64,
    pub neighborhood: f64,
    pub eps: f64,
    /// `Ψ₀` from the default start `x* + (10/√d)·1`.
    pub psi0: f64,
    /// Iterations until the certified bound drops below `eps`; absent when
    /// the neighborhood is at least `eps`.
    pub iterations: Option<f64>,
    /// Theory stepsize; `None` when the method has no selector, `inf` when unbounded.
    pub optimal_gamma: Option<f64>,
    pub optimal_iterations: Option<f64>,
}

fn certify_problem(args: &CertifyArgs) -> Result<RegressionProblem> {
    Ok(match args.problem {
        ProblemArg::Toy1 => RegressionProblem::toy1(),
        ProblemArg::Toy2 => RegressionProblem::toy2(),
        ProblemArg::Synthetic => {
            let rule = if args.lambda == "powers-of-two" {
                LambdaRule::PowersOfTwo
            } else {
                let c: f64 = args.lambda.parse().map_err(|_| {
                    CliError::config(
                        "--lambda",
                        format!("expected powers-of-two or a number, got {:?}", args.lambda),
                    )
                })?;
                LambdaRule::Constant(c)
            };
            RegressionProblem::synthetic(args.n, args.d, args.data_seed, rule)
                .map_err(|e| CliError::config("--n/--d/--lambda", e))?
        }
    })
}

pub fn certify(args: &CertifyArgs) -> Result<CertifyReport> {
    let p = certify_problem(args)?;
    let consts = p.constants()?;
    let gamma = if args.gamma == "theory" {
        GammaSpec::Keyword(args.gamma.clone())
    } else {
        let g: f64 = args
            .gamma
            .parse()
            .map_err(|_| CliError::config("--gamma", format!("expected a number or theory, got {:?}", args.gamma)))?;
        GammaSpec::Value(g)
    };
    let mut m = MethodConfig::new(args.method, gamma);
    m.alpha = args.alpha;
    m.p = args.p;
    m.tau = args.tau;
    if m.name.is_plain() && m.is_theory() {
        m.eps = Some(args.eps);
    }
    let cfg = ExperimentConfig {
        problem: crate::config::ProblemConfig {
            n: p.n(),
            d: p.d(),
            seed: 0,
            lambda: LambdaRule::Constant(1.0),
        },
        methods: vec![m.clone()],
        iterations: 1,
        runs: 1,
        base_seed: 0,
        x0: Default::default(),
        output: crate::config::OutputConfig {
            csv: "unused.csv".into(),
            svg: None,
        },
    };
    cfg.validate().map_err(|e| match e {
        CliError::Config { path, message } => CliError::config(path.replace("methods[0].", "--"), message),
        other => other,
    })?;
    let cell = experiment::method_cells(&m, &p, &consts, 1, "--method")?.remove(0);
    let spec = cell.spec;
    let alpha = spec.alpha.unwrap_or(1.0);
    let rc = RateConstants::for_method(&spec, &p, &consts, SigmaEstimate::default())?;
    let params = theory::method_params(spec.strategy, &rc)?;
    let cert = theory::certificate(&params, spec.gamma, alpha, rc.mu).map_err(|e| match e {
        e @ Error::CertificateInvalid { .. } => CliError::Certificate(e),
        e => CliError::Core(e),
    })?;
    let x0 = engine::default_x0(&consts.x_star);
    let state = ControlState::init(spec.strategy, &p, &consts, &x0);
    let psi0 = dist_sq(&x0, &consts.x_star) + alpha * state.sigma_sq();
    let iterations = (cert.neighborhood < args.eps)
        .then(|| theory::iterations_for_factor(cert.theta, psi0, args.eps - cert.neighborhood).ceil());
    let (optimal_gamma, optimal_iterations) = match theory::optimal_stepsize(spec.strategy, &rc, args.eps) {
        Ok(choice) => {
            let d0 = dist_sq(&x0, &consts.x_star);
            let k = choice.iterations(args.eps, choice.initial_lyapunov(d0)).ceil();
            match choice.gamma {
                Gamma::Finite(g) => (Some(g), Some(k)),
                Gamma::Unbounded => (Some(f64::INFINITY), Some(k)),
            }
        }
        Err(Error::NoSelector(_)) => (None, None),
        Err(e) => return Err(e.into()),
    };
    Ok(CertifyReport {
        method: cell.label,
        gamma: spec.gamma,
        alpha,
        theta: cert.theta,
        zeta: cert.zeta,
        neighborhood: cert.neighborhood,
        eps: args.eps,
        psi0,
        iterations,
        optimal_gamma,
        optimal_iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn args(line: &str) -> CertifyArgs {
        let cli = Cli::try_parse_from(format!("sppm certify {line}").split_whitespace()).unwrap();
        match cli.command {
            Command::Certify(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn certify_sppm_toy1() {
        let r = certify(&args("--method sppm --gamma 1 --alpha 1")).unwrap();
        assert!((r.theta - 1.0 / 9.0).abs() < 1e-15);
        assert!((r.neighborhood - 0.5).abs() < 1e-12);
        assert!(r.iterations.is_none());
        assert!(r.optimal_gamma.unwrap() > 0.0);
    }

    #[test]
    fn certify_star_has_zero_neighborhood_and_no_selector() {
        for g in ["0.01", "1", "100"] {
            let r = certify(&args(&format!("--method sppm-star --gamma {g}"))).unwrap();
            assert_eq!(r.neighborhood, 0.0);
            assert!(r.iterations.unwrap() > 0.0);
            assert!(r.optimal_gamma.is_none());
        }
    }

    #[test]
    fn certify_lsvrp_p1_with_delta_equal_mu() {
        // at p = 1 the selector is μ/δ², which is 1/μ when δ = μ
        let r = certify(&args("--method lsvrp --p 1 --gamma theory --problem toy2")).unwrap();
        let p = RegressionProblem::toy2();
        let c = p.constants().unwrap();
        let expect = c.mu / (c.delta * c.delta);
        assert!((r.gamma - expect).abs() < 1e-12 * expect);
    }

    #[test]
    fn certify_rejects_bad_flags() {
        assert!(matches!(
            certify(&args("--method lsvrp --gamma 1")),
            Err(CliError::Config { .. })
        ));
        let e = certify(&args("--method sppm-star --gamma theory")).unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn certify_invalid_certificate_exit_code() {
        // GC contracts only while δ < μ or γ is small; weak regularization breaks it
        let e = certify(&args(
            "--method sppm-gc --gamma 100 --problem synthetic --n 20 --d 5 --lambda 0.05",
        ))
        .unwrap_err();
        assert!(matches!(e, CliError::Certificate(_)), "{e:?}");
        assert_eq!(e.exit_code(), 3);
    }
}

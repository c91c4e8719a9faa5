use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gpc_sense::benchmarks::BenchmarkKind;
use gpc_sense::surrogate::Surrogate;
use gpc_sense_cli::commands::{
    cmd_benchmark, cmd_evaluate, cmd_fit, cmd_grid, cmd_run, cmd_sample, cmd_sobol, cmd_transform, GRID_FILE,
    SURROGATE_FILE,
};
use gpc_sense_cli::config::DEFAULT_GRID_RESOLUTION;
use gpc_sense_cli::{CliError, CliResult, Context, GridRequest, GridScale, Overrides};

#[derive(Parser)]
#[command(name = "gpc-sense", version, about = "Polynomial chaos sensitivity analysis of black-box models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding the config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn context(&self) -> CliResult<Context> {
        Context::load(
            &self.config,
            &Overrides {
                out: self.out.clone(),
                seed: self.seed,
            },
        )
    }
}

#[derive(Subcommand)]
enum Command {
    /// Draw the Latin hypercube design (samples.csv).
    Sample(Common),
    /// Render one perturbed image per sample (images/).
    Transform {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Query the evaluator for every sample (evaluations.csv).
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// samples.csv (numeric mode) or manifest.csv (image mode).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit the surrogate to the evaluations (surrogate.json).
    Fit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        evaluations: Option<PathBuf>,
    },
    /// Sobol indices of a surrogate (sobol.csv, sobol.json).
    Sobol {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        surrogate: Option<PathBuf>,
        /// Samples file whose config digest must match the surrogate's.
        #[arg(long)]
        samples: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Surrogate surface over two parameters (grid.csv).
    Grid {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        surrogate: Option<PathBuf>,
        #[arg(long)]
        x: Option<String>,
        #[arg(long)]
        y: Option<String>,
        #[arg(long)]
        resolution: Option<usize>,
        /// logit or probability.
        #[arg(long)]
        scale: Option<GridScale>,
        /// Value for a non-axis parameter, as name=value. Repeatable.
        #[arg(long = "fix", value_parser = parse_fix)]
        fixed: Vec<(String, f64)>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Every stage in order, plus summary.json.
    Run(Common),
    /// Built-in analytic benchmark against closed-form indices.
    Benchmark {
        /// ishigami or gfunction.
        #[arg(long, default_value = "ishigami")]
        name: BenchmarkKind,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        order: Option<usize>,
        #[arg(long, default_value_t = 42)]
        seed: u64,
    },
}

fn parse_fix(s: &str) -> Result<(String, f64), String> {
    let (name, value) = s.split_once('=').ok_or_else(|| format!("expected name=value, got `{s}`"))?;
    let v = value.parse().map_err(|e| format!("bad value in `{s}`: {e}"))?;
    Ok((name.trim().to_string(), v))
}

fn optional_context(config: &Option<PathBuf>, out: &Option<PathBuf>) -> CliResult<Option<Context>> {
    config
        .as_ref()
        .map(|c| {
            Context::load(
                c,
                &Overrides {
                    out: out.clone(),
                    seed: None,
                },
            )
        })
        .transpose()
}

fn surrogate_location(ctx: &Option<Context>, surrogate: &Option<PathBuf>) -> CliResult<PathBuf> {
    match (surrogate, ctx) {
        (Some(p), _) => Ok(p.clone()),
        (None, Some(c)) => Ok(c.out_dir.join(SURROGATE_FILE)),
        (None, None) => Err(CliError::Validation("give --surrogate or --config".into())),
    }
}

fn out_dir(ctx: &Option<Context>, out: &Option<PathBuf>, surrogate: &Path) -> PathBuf {
    match (out, ctx) {
        (Some(o), _) => o.clone(),
        (None, Some(c)) => c.out_dir.clone(),
        (None, None) => surrogate.parent().map(Path::to_path_buf).unwrap_or_default(),
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Sample(common) => {
            let path = cmd_sample(&common.context()?)?;
            println!("wrote {}", path.display());
        }
        Command::Transform { common, samples } => {
            let path = cmd_transform(&common.context()?, samples.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Evaluate { common, input } => {
            let path = cmd_evaluate(&common.context()?, input.as_deref())?;
            println!("wrote {}", path.display());
        }
        Command::Fit { common, evaluations } => {
            let outcome = cmd_fit(&common.context()?, evaluations.as_deref())?;
            println!("wrote {} ({} terms)", outcome.path.display(), outcome.surrogate.basis().len());
            if let Some(info) = outcome.surrogate.fit_info() {
                print_metric("in-sample nrmsd", info.in_sample_nrmsd);
                print_metric("holdout nrmsd", info.holdout_nrmsd);
            }
            print_metric("probability nrmsd", outcome.probability_nrmsd);
        }
        Command::Sobol {
            config,
            surrogate,
            samples,
            out,
        } => {
            let ctx = optional_context(&config, &out)?;
            let path = surrogate_location(&ctx, &surrogate)?;
            let dir = out_dir(&ctx, &out, &path);
            let outcome = cmd_sobol(&path, samples.as_deref(), ctx.as_ref().map(|c| c.digest.as_str()), &dir)?;
            print!("{}", outcome.report.to_csv(&[]));
            println!("wrote {} and {}", outcome.csv.display(), outcome.json.display());
        }
        Command::Grid {
            config,
            surrogate,
            x,
            y,
            resolution,
            scale,
            fixed,
            out,
        } => {
            let ctx = optional_context(&config, &out)?;
            let path = surrogate_location(&ctx, &surrogate)?;
            let (s, _) = Surrogate::<f64>::read(&path)?;
            let section = ctx.as_ref().and_then(|c| c.config.grid.clone());
            let pick = |flag: Option<String>, from: Option<String>, what: &str| {
                flag.or(from)
                    .ok_or_else(|| CliError::Validation(format!("grid needs --{what}")))
            };
            let x = pick(x, section.as_ref().map(|g| g.x.clone()), "x")?;
            let y = pick(y, section.as_ref().map(|g| g.y.clone()), "y")?;
            let resolution = resolution
                .or(section.as_ref().map(|g| g.resolution))
                .unwrap_or(DEFAULT_GRID_RESOLUTION);
            let scale = scale
                .or(section.as_ref().and_then(|g| g.scale))
                .unwrap_or(GridScale::Logit);
            let mut fix: BTreeMap<String, f64> = section.map(|g| g.fixed).unwrap_or_default();
            fix.extend(fixed);
            let req = GridRequest::new(s.space(), &x, &y, resolution, scale, &fix)?;
            let target = out_dir(&ctx, &out, &path).join(GRID_FILE);
            let written = cmd_grid(&path, &req, &target)?;
            println!("wrote {}", written.display());
        }
        Command::Run(common) => {
            let ctx = common.context()?;
            let summary = cmd_run(&ctx)?;
            println!("run complete in {}", ctx.out_dir.display());
            print_metric("in-sample nrmsd", summary.in_sample_nrmsd);
            print_metric("holdout nrmsd", summary.holdout_nrmsd);
            print_metric("probability nrmsd", summary.probability_nrmsd);
            for (name, s) in summary.first_order.iter().flatten() {
                println!("S[{name}] = {s:.6}");
            }
        }
        Command::Benchmark { name, n, order, seed } => {
            let outcome = cmd_benchmark(name, n, order, seed)?;
            println!("{name}: {} terms", outcome.surrogate.basis().len());
            print!("{}", outcome.table());
        }
    }
    Ok(())
}

fn print_metric(label: &str, value: Option<f64>) {
    if let Some(v) = value {
        println!("{label}: {v:.6e}");
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gpc-sense: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

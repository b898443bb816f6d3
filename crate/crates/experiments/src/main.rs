use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use scbf_experiments::{
    run, CheckExample, CheckKind, Experiment, ExperimentConfig, ExperimentError, EXIT_VALIDATION,
};

#[derive(Parser)]
#[command(name = "scbf", version, about = "Stochastic control barrier function experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Zeroing versus reciprocal filter on the motivating plant.
    Motivation(Common),
    /// Half-line safe set with a saturated compensator.
    Example1(Common),
    /// Interval safe set with a saturated compensator.
    Example2(Common),
    /// Exit fractions of Example 1 with the diffusion scaled by `a`.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Diffusion scales, e.g. `--a 1 --a 0.5 --a 0`.
        #[arg(long = "a")]
        a_values: Vec<f64>,
    },
    /// A single certificate check on a built-in example.
    Check {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum)]
        example: Option<ExampleArg>,
        #[arg(long, value_enum)]
        kind: Option<KindArg>,
        /// Rate of the stochastic check (defaults to the derived one).
        #[arg(long)]
        b: Option<f64>,
        /// Grid size.
        #[arg(long)]
        points: Option<usize>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ExampleArg {
    Example1,
    Example2,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    AsRcbf,
    AsZcbf,
    StochasticZcbf,
}

#[derive(Args)]
struct Common {
    /// JSON config merged over the experiment defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    paths: Option<usize>,
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    horizon: Option<f64>,
    /// Worker threads; outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long)]
    x0: Option<f64>,
    #[arg(long)]
    paths_written: Option<usize>,
    #[arg(long)]
    record_stride: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    c: Option<f64>,
    #[arg(long)]
    u_max: Option<f64>,
    #[arg(long)]
    n_cut: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    u_o: Option<f64>,
}

impl Common {
    fn resolve(&self, experiment: Experiment) -> Result<ExperimentConfig, ExperimentError> {
        self.apply(match &self.config {
            Some(path) => ExperimentConfig::load(experiment, path)?,
            None => ExperimentConfig::defaults(experiment),
        })
    }

    fn apply(&self, mut cfg: ExperimentConfig) -> Result<ExperimentConfig, ExperimentError> {
        let set = |slot: &mut f64, v: Option<f64>| {
            if let Some(v) = v {
                *slot = v;
            }
        };
        set(&mut cfg.plant.alpha, self.alpha);
        set(&mut cfg.plant.beta, self.beta);
        set(&mut cfg.plant.gamma, self.gamma);
        set(&mut cfg.plant.c, self.c);
        set(&mut cfg.plant.u_max, self.u_max);
        set(&mut cfg.plant.n_cut, self.n_cut);
        set(&mut cfg.plant.u_o, self.u_o);
        set(&mut cfg.sim.x0, self.x0);
        set(&mut cfg.sim.dt, self.dt);
        set(&mut cfg.sim.horizon, self.horizon);
        if let Some(v) = self.seed {
            cfg.sim.master_seed = v;
        }
        if let Some(v) = self.paths {
            cfg.sim.n_paths = v;
        }
        if let Some(v) = self.paths_written {
            cfg.sim.paths_written = v;
        }
        if let Some(v) = self.record_stride {
            cfg.sim.record_stride = v;
        }
        if let Some(v) = &self.out {
            cfg.out = v.clone();
        }
        Ok(cfg)
    }
}

fn execute(cli: Cli) -> Result<i32, ExperimentError> {
    let (common, cfg) = match &cli.command {
        Command::Motivation(c) => (c, c.resolve(Experiment::Motivation)?),
        Command::Example1(c) => (c, c.resolve(Experiment::Example1)?),
        Command::Example2(c) => (c, c.resolve(Experiment::Example2)?),
        Command::Sweep { common, a_values } => {
            let mut cfg = common.resolve(Experiment::Sweep)?;
            if !a_values.is_empty() {
                cfg.a_values = a_values.clone();
            }
            (common, cfg)
        }
        Command::Check {
            common,
            example,
            kind,
            b,
            points,
        } => {
            let mut cfg = match (&common.config, example) {
                (Some(path), _) => ExperimentConfig::load(Experiment::Check, path)?,
                (None, Some(ExampleArg::Example2)) => {
                    ExperimentConfig::check_defaults(CheckExample::Example2)
                }
                (None, _) => ExperimentConfig::check_defaults(CheckExample::Example1),
            };
            if let Some(e) = example {
                cfg.check.example = match e {
                    ExampleArg::Example1 => CheckExample::Example1,
                    ExampleArg::Example2 => CheckExample::Example2,
                };
            }
            let mut cfg = common.apply(cfg)?;
            if let Some(k) = kind {
                cfg.check.kind = match k {
                    KindArg::AsRcbf => CheckKind::AsRcbf,
                    KindArg::AsZcbf => CheckKind::AsZcbf,
                    KindArg::StochasticZcbf => CheckKind::StochasticZcbf,
                };
            }
            if b.is_some() {
                cfg.check.b = *b;
            }
            if let Some(p) = points {
                cfg.check.points = *p;
            }
            (common, cfg)
        }
    };

    if let Some(n) = common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ExperimentError::Validation(format!("threads: {e}")))?;
    }

    let report = run(&cfg)?;
    for line in &report.lines {
        println!("{line}");
    }
    let written = report.write_to(&cfg.out)?;
    for path in written {
        println!("wrote {}", path.display());
    }
    Ok(report.exit_code())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(EXIT_VALIDATION as u8))
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use drmpc::dro::Backend;
use drmpc::mpc::{ExperimentConfig, RadiusSource};
use drmpc_cli::{
    absolute, apply_solver_env, load_config, replay, run_and_record, Invocation, Outcome, PlotKind,
    RunManifest,
};

#[derive(Parser)]
#[command(name = "drmpc", version, about = "Data-driven distributionally robust MPC experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// TOML experiment config; defaults apply to omitted keys.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Dataset seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Closed-loop noise seed.
    #[arg(long)]
    noise_seed: Option<u64>,
    /// Number of trajectories N.
    #[arg(long)]
    samples: Option<usize>,
    /// Closed-loop steps.
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    slack_weight: Option<f64>,
    /// Fixed radius; requires --eps2 as well.
    #[arg(long, requires = "eps2")]
    eps1: Option<f64>,
    #[arg(long, requires = "eps1")]
    eps2: Option<f64>,
    /// Radius from the leave-one-out estimate.
    #[arg(long, conflicts_with_all = ["eps1", "saa"])]
    algorithm1: bool,
    /// Zero radius (sample average approximation).
    #[arg(long, conflicts_with = "eps1")]
    saa: bool,
    /// Comma-separated N values for `compare`.
    #[arg(long, value_delimiter = ',')]
    sample_sizes: Option<Vec<usize>>,
    /// Comma-separated grid values for `sweep`.
    #[arg(long, value_delimiter = ',')]
    grid: Option<Vec<f64>>,
    /// Solver backend (overrides DRMPC_SOLVER).
    #[arg(long)]
    solver: Option<Backend>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig> {
        let mut cfg = load_config(self.config.as_deref())?;
        apply_solver_env(&mut cfg)?;
        if let Some(v) = self.seed {
            cfg.dataset.seed = v;
        }
        if let Some(v) = self.noise_seed {
            cfg.noise_seed = v;
        }
        if let Some(v) = self.samples {
            cfg.dataset.samples = v;
        }
        if let Some(v) = self.steps {
            cfg.steps = v;
        }
        if let Some(v) = self.repetitions {
            cfg.repetitions = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.slack_weight {
            cfg.slack_weight = v;
        }
        if let (Some(eps1), Some(eps2)) = (self.eps1, self.eps2) {
            cfg.radius = RadiusSource::Fixed { eps1, eps2 };
        }
        if self.algorithm1 {
            cfg.radius = RadiusSource::Algorithm1;
        }
        if self.saa {
            cfg.radius = RadiusSource::Zero;
        }
        if let Some(v) = &self.sample_sizes {
            cfg.sample_sizes = v.clone();
        }
        if let Some(values) = &self.grid {
            cfg.radius = RadiusSource::Grid { values: values.clone() };
        }
        if let Some(b) = self.solver {
            cfg.solver.backend = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate an identification dataset (.csv or .json by extension).
    Generate {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Fit the multi-step predictor of a dataset and write it as JSON.
    Identify {
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Fit an unstructured matrix instead of the causal one.
        #[arg(long)]
        non_causal: bool,
    },
    /// Leave-one-out radius estimate of a dataset.
    TuneRadius {
        #[arg(short, long)]
        dataset: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// Also write the per-sample (V, E) diagnostics as CSV.
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// One closed-loop run; writes the per-step CSV.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Closed-loop cost and violations over every radius pair of the grid.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Paired SAA vs DR comparison; writes rows and per-N summary.
    Compare {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long)]
        summary: PathBuf,
    },
    /// Write the first-step conic program as JSON.
    DumpProgram {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(short, long)]
        out: PathBuf,
        /// Dump the cone-free sample average program.
        #[arg(long)]
        saa_program: bool,
    },
    /// Emit a gnuplot script for a sweep CSV or a comparison summary CSV.
    PlotScript {
        #[arg(long, value_enum)]
        kind: PlotKind,
        #[arg(short, long)]
        input: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Re-execute a manifest and check its outputs byte-for-byte.
    Replay {
        #[arg(short, long)]
        manifest: PathBuf,
        /// Directory for the regenerated outputs.
        #[arg(long)]
        out_dir: PathBuf,
    },
}

fn invocation(cmd: &Command) -> Result<Invocation> {
    let abs = |p: &Path| absolute(p);
    Ok(match cmd {
        Command::Generate { cfg, out } => Invocation::Generate {
            config: cfg.resolve()?,
            out: abs(out)?,
        },
        Command::Identify { dataset, out, non_causal } => Invocation::Identify {
            dataset: abs(dataset)?,
            out: abs(out)?,
            causal: !non_causal,
        },
        Command::TuneRadius { dataset, out, diagnostics } => Invocation::TuneRadius {
            dataset: abs(dataset)?,
            out: abs(out)?,
            diagnostics: diagnostics.as_deref().map(abs).transpose()?,
        },
        Command::Run { cfg, out } => Invocation::Run {
            config: cfg.resolve()?,
            out: abs(out)?,
        },
        Command::Sweep { cfg, out } => Invocation::Sweep {
            config: cfg.resolve()?,
            out: abs(out)?,
        },
        Command::Compare { cfg, out, summary } => Invocation::Compare {
            config: cfg.resolve()?,
            out: abs(out)?,
            summary: abs(summary)?,
        },
        Command::DumpProgram { cfg, out, saa_program } => Invocation::DumpProgram {
            config: cfg.resolve()?,
            out: abs(out)?,
            saa: *saa_program,
        },
        Command::PlotScript { kind, input, out } => Invocation::PlotScript {
            kind: *kind,
            input: abs(input)?,
            out: abs(out)?,
        },
        Command::Replay { .. } => unreachable!("replay has no invocation of its own"),
    })
}

fn main_inner(cli: Cli) -> Result<ExitCode> {
    if let Command::Replay { manifest, out_dir } = &cli.command {
        let m = RunManifest::load(manifest)?;
        let checks = replay(&m, out_dir)?;
        let mut all = true;
        for c in &checks {
            let tag = if c.identical { "identical" } else { "DIFFERS" };
            println!("{tag}: {} -> {}", c.recorded.display(), c.replayed.display());
            all &= c.identical;
        }
        return Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(2) });
    }
    let inv = invocation(&cli.command)?;
    let (outcome, manifest) = run_and_record(&inv)?;
    for out in inv.outputs() {
        println!("wrote {}", out.display());
    }
    println!("manifest {}", manifest.display());
    Ok(match outcome {
        Outcome::Success => ExitCode::SUCCESS,
        Outcome::Partial(msg) => {
            eprintln!("warning: {msg}");
            ExitCode::from(1)
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match main_inner(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

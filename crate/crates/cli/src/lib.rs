//! Command implementations behind the `drmpc` binary.
//!
//! Every command is described by an [`Invocation`]: the command name, its
//! resolved [`ExperimentConfig`] snapshot (where relevant) and absolute
//! input/output paths. Executing an invocation is deterministic, so a
//! [`RunManifest`] holding it can regenerate its outputs byte-for-byte.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{bail, Context, Result};
use drmpc::dro::{build_drmpc, build_saa, Backend};
use drmpc::identification::fit_multistep_ls;
use drmpc::lifting::TrajectoryDataset;
use drmpc::mpc::{
    build_controller, build_predictor, compare_saa_dr, grid_pairs, resolve_radius, run_closed_loop,
    sweep_radius, write_compare_csv, write_summary_csv, write_sweep_csv, ExperimentConfig,
    RadiusSource,
};
use drmpc::radius::{loo_radius, write_diagnostics_csv, LooDiagnostic};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const SOLVER_ENV: &str = "DRMPC_SOLVER";
pub const MANIFEST_VERSION: u32 = 1;

/// Reads a TOML experiment config; missing keys take their defaults.
pub fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    let cfg = match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing config {}", p.display()))?
        }
        None => ExperimentConfig::default(),
    };
    Ok(cfg)
}

/// Applies the backend named by `DRMPC_SOLVER`, if set.
pub fn apply_solver_env(cfg: &mut ExperimentConfig) -> Result<()> {
    if let Ok(name) = std::env::var(SOLVER_ENV) {
        cfg.solver.backend = name.parse::<Backend>()?;
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum PlotKind {
    Sweep,
    Compare,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Invocation {
    Generate {
        config: ExperimentConfig,
        out: PathBuf,
    },
    Identify {
        dataset: PathBuf,
        out: PathBuf,
        causal: bool,
    },
    TuneRadius {
        dataset: PathBuf,
        out: PathBuf,
        diagnostics: Option<PathBuf>,
    },
    Run {
        config: ExperimentConfig,
        out: PathBuf,
    },
    Sweep {
        config: ExperimentConfig,
        out: PathBuf,
    },
    Compare {
        config: ExperimentConfig,
        out: PathBuf,
        summary: PathBuf,
    },
    DumpProgram {
        config: ExperimentConfig,
        out: PathBuf,
        saa: bool,
    },
    PlotScript {
        kind: PlotKind,
        input: PathBuf,
        out: PathBuf,
    },
}

/// Result of executing an invocation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Success,
    /// Some table cells failed; the message says how many.
    Partial(String),
}

impl Invocation {
    pub fn name(&self) -> &'static str {
        match self {
            Invocation::Generate { .. } => "generate",
            Invocation::Identify { .. } => "identify",
            Invocation::TuneRadius { .. } => "tune-radius",
            Invocation::Run { .. } => "run",
            Invocation::Sweep { .. } => "sweep",
            Invocation::Compare { .. } => "compare",
            Invocation::DumpProgram { .. } => "dump-program",
            Invocation::PlotScript { .. } => "plot-script",
        }
    }

    pub fn config(&self) -> Option<&ExperimentConfig> {
        match self {
            Invocation::Generate { config, .. }
            | Invocation::Run { config, .. }
            | Invocation::Sweep { config, .. }
            | Invocation::Compare { config, .. }
            | Invocation::DumpProgram { config, .. } => Some(config),
            _ => None,
        }
    }

    pub fn outputs(&self) -> Vec<PathBuf> {
        match self {
            Invocation::Generate { out, .. }
            | Invocation::Identify { out, .. }
            | Invocation::Run { out, .. }
            | Invocation::Sweep { out, .. }
            | Invocation::DumpProgram { out, .. }
            | Invocation::PlotScript { out, .. } => vec![out.clone()],
            Invocation::TuneRadius { out, diagnostics, .. } => {
                std::iter::once(out.clone()).chain(diagnostics.clone()).collect()
            }
            Invocation::Compare { out, summary, .. } => vec![out.clone(), summary.clone()],
        }
    }

    /// Same invocation with every output moved into `dir` (file names kept).
    pub fn redirected(&self, dir: &Path) -> Self {
        let mv = |p: &PathBuf| dir.join(p.file_name().unwrap_or(p.as_os_str()));
        let mut inv = self.clone();
        match &mut inv {
            Invocation::Generate { out, .. }
            | Invocation::Identify { out, .. }
            | Invocation::Run { out, .. }
            | Invocation::Sweep { out, .. }
            | Invocation::DumpProgram { out, .. }
            | Invocation::PlotScript { out, .. } => *out = mv(out),
            Invocation::TuneRadius { out, diagnostics, .. } => {
                *out = mv(out);
                if let Some(d) = diagnostics {
                    *d = mv(d);
                }
            }
            Invocation::Compare { out, summary, .. } => {
                *out = mv(out);
                *summary = mv(summary);
            }
        }
        inv
    }

    pub fn execute(&self) -> Result<Outcome> {
        for out in self.outputs() {
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
                }
            }
        }
        match self {
            Invocation::Generate { config, out } => {
                config.validate()?;
                let data = config.generate(config.dataset.samples, config.dataset.seed)?;
                data.save(out)?;
                Ok(Outcome::Success)
            }
            Invocation::Identify { dataset, out, causal } => {
                let data = load_dataset(dataset)?;
                let pred = fit_multistep_ls(&data, *causal)?;
                fs::write(out, pred.to_json()?)?;
                Ok(Outcome::Success)
            }
            Invocation::TuneRadius { dataset, out, diagnostics } => {
                let data = load_dataset(dataset)?;
                let loo = loo_radius(&data)?;
                let report = RadiusReport {
                    eps1: loo.radius.eps1,
                    eps2: loo.radius.eps2,
                    diagnostics: loo.diagnostics.clone(),
                };
                fs::write(out, serde_json::to_string_pretty(&report)? + "\n")?;
                if let Some(path) = diagnostics {
                    write_diagnostics_csv(&loo.diagnostics, BufWriter::new(create(path)?))?;
                }
                Ok(Outcome::Success)
            }
            Invocation::Run { config, out } => {
                config.validate()?;
                let data = config.generate(config.dataset.samples, config.dataset.seed)?;
                let pred = build_predictor(config.predictor, &data)?;
                let radius = resolve_radius(&config.radius, &data)?;
                let ctrl = build_controller(config, pred, radius)?;
                let rec = run_closed_loop(config, &ctrl, config.noise_seed)?;
                rec.write_csv(BufWriter::new(create(out)?))?;
                if rec.fallback_steps > 0 {
                    return Ok(Outcome::Partial(format!(
                        "{} of {} steps fell back to zero input",
                        rec.fallback_steps,
                        rec.steps.len()
                    )));
                }
                Ok(Outcome::Success)
            }
            Invocation::Sweep { config, out } => {
                let grid = match &config.radius {
                    RadiusSource::Grid { values } => grid_pairs(values)?,
                    _ => bail!("sweep needs radius.source = \"grid\""),
                };
                let rows = sweep_radius(config, &grid)?;
                write_sweep_csv(&rows, BufWriter::new(create(out)?))?;
                let failed = rows.iter().filter(|r| r.error.is_some()).count();
                cell_outcome(failed, rows.len())
            }
            Invocation::Compare { config, out, summary } => {
                let res = compare_saa_dr(config)?;
                write_compare_csv(&res.rows, BufWriter::new(create(out)?))?;
                write_summary_csv(&res.summary, BufWriter::new(create(summary)?))?;
                let failed = res.rows.iter().filter(|r| r.error.is_some()).count();
                cell_outcome(failed, res.rows.len())
            }
            Invocation::DumpProgram { config, out, saa } => {
                config.validate()?;
                let data = config.generate(config.dataset.samples, config.dataset.seed)?;
                let pred = build_predictor(config.predictor, &data)?;
                let radius = resolve_radius(&config.radius, &data)?;
                let ctrl = build_controller(config, pred, radius)?;
                let x0 = config.x0_vector();
                let prog = if *saa { build_saa(&ctrl, &x0)? } else { build_drmpc(&ctrl, &x0)? };
                fs::write(out, prog.to_json()? + "\n")?;
                Ok(Outcome::Success)
            }
            Invocation::PlotScript { kind, input, out } => {
                fs::write(out, plot_script(*kind, input))?;
                Ok(Outcome::Success)
            }
        }
    }
}

fn load_dataset(path: &Path) -> Result<TrajectoryDataset> {
    TrajectoryDataset::load(path).with_context(|| format!("loading dataset {}", path.display()))
}

fn create(path: &Path) -> Result<fs::File> {
    fs::File::create(path).with_context(|| format!("creating {}", path.display()))
}

fn cell_outcome(failed: usize, total: usize) -> Result<Outcome> {
    if total > 0 && failed == total {
        bail!("all {total} cells failed");
    }
    if failed > 0 {
        return Ok(Outcome::Partial(format!("{failed} of {total} cells failed")));
    }
    Ok(Outcome::Success)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiusReport {
    pub eps1: f64,
    pub eps2: f64,
    pub diagnostics: Vec<LooDiagnostic>,
}

/// Gnuplot script reading a sweep or comparison summary CSV.
pub fn plot_script(kind: PlotKind, input: &Path) -> String {
    let file = input.display();
    let head = "set datafile separator ','\nset datafile commentschars '#'\nset key autotitle columnhead\n";
    match kind {
        PlotKind::Sweep => format!(
            "{head}set terminal pngcairo size 1200,500\nset output 'sweep.png'\n\
             set multiplot layout 1,2\nset xlabel 'log10 eps1'\nset ylabel 'log10 eps2'\n\
             set title 'closed-loop cost'\n\
             plot '{file}' using (log10($1)):(log10($2)):3 with points pt 5 ps 4 palette notitle\n\
             set title 'violations'\n\
             plot '{file}' using (log10($1)):(log10($2)):4 with points pt 5 ps 4 palette notitle\n\
             unset multiplot\n"
        ),
        PlotKind::Compare => format!(
            "{head}set terminal pngcairo size 1200,500\nset output 'compare.png'\n\
             set multiplot layout 1,2\nset xlabel 'N'\n\
             set title 'closed-loop cost (median, quartiles)'\n\
             plot '{file}' using 1:(strcol(2) eq 'saa' ? $4 : 1/0):5:6 with yerrorlines title 'SAA', \\\n\
             \x20    '' using 1:(strcol(2) eq 'dr' ? $4 : 1/0):5:6 with yerrorlines title 'DR'\n\
             set title 'violations (median, quartiles)'\n\
             plot '{file}' using 1:(strcol(2) eq 'saa' ? $7 : 1/0):8:9 with yerrorlines title 'SAA', \\\n\
             \x20    '' using 1:(strcol(2) eq 'dr' ? $7 : 1/0):8:9 with yerrorlines title 'DR'\n\
             unset multiplot\n"
        ),
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputRecord {
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

impl OutputRecord {
    pub fn of(path: &Path) -> Result<Self> {
        let data = fs::read(path).with_context(|| format!("reading output {}", path.display()))?;
        Ok(Self {
            path: path.to_path_buf(),
            bytes: data.len() as u64,
            sha256: hex::encode(Sha256::digest(&data)),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Seeds {
    pub dataset: Option<u64>,
    pub noise: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub manifest_version: u32,
    pub library_version: String,
    pub created_unix: u64,
    pub seeds: Seeds,
    pub invocation: Invocation,
    pub outputs: Vec<OutputRecord>,
}

impl RunManifest {
    pub fn record(invocation: &Invocation) -> Result<Self> {
        let seeds = invocation.config().map_or(
            Seeds {
                dataset: None,
                noise: None,
            },
            |c| Seeds {
                dataset: Some(c.dataset.seed),
                noise: Some(c.noise_seed),
            },
        );
        let outputs = invocation
            .outputs()
            .iter()
            .map(|p| OutputRecord::of(p))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            manifest_version: MANIFEST_VERSION,
            library_version: env!("CARGO_PKG_VERSION").to_string(),
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
            seeds,
            invocation: invocation.clone(),
            outputs,
        })
    }

    /// `<first output>.manifest.json`
    pub fn default_path(invocation: &Invocation) -> PathBuf {
        let first = &invocation.outputs()[0];
        let mut name = first.file_name().unwrap_or_default().to_os_string();
        name.push(".manifest.json");
        first.with_file_name(name)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string_pretty(self)? + "\n")
            .with_context(|| format!("writing manifest {}", path.display()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).with_context(|| format!("reading manifest {}", path.display()))?;
        let m: Self = serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        if m.manifest_version != MANIFEST_VERSION {
            bail!("unsupported manifest version {}", m.manifest_version);
        }
        Ok(m)
    }
}

/// Executes `invocation` and writes its manifest next to the first output.
pub fn run_and_record(invocation: &Invocation) -> Result<(Outcome, PathBuf)> {
    let outcome = invocation.execute()?;
    let manifest = RunManifest::record(invocation)?;
    let path = RunManifest::default_path(invocation);
    manifest.save(&path)?;
    Ok((outcome, path))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReplayCheck {
    pub recorded: PathBuf,
    pub replayed: PathBuf,
    pub identical: bool,
}

/// Re-executes the manifest's invocation with outputs in `dir` and compares
/// every replayed output with the recorded digest.
pub fn replay(manifest: &RunManifest, dir: &Path) -> Result<Vec<ReplayCheck>> {
    let inv = manifest.invocation.redirected(dir);
    inv.execute()?;
    manifest
        .outputs
        .iter()
        .zip(inv.outputs())
        .map(|(rec, path)| {
            let now = OutputRecord::of(&path)?;
            Ok(ReplayCheck {
                recorded: rec.path.clone(),
                identical: now.sha256 == rec.sha256 && now.bytes == rec.bytes,
                replayed: path,
            })
        })
        .collect()
}

/// Absolute form of `p` without requiring it to exist.
pub fn absolute(p: &Path) -> Result<PathBuf> {
    Ok(std::path::absolute(p)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redirect_keeps_file_names() {
        let inv = Invocation::Compare {
            config: ExperimentConfig::default(),
            out: "/a/b/rows.csv".into(),
            summary: "/a/summary.csv".into(),
        };
        let r = inv.redirected(Path::new("/tmp/x"));
        assert_eq!(r.outputs(), vec![PathBuf::from("/tmp/x/rows.csv"), PathBuf::from("/tmp/x/summary.csv")]);
        assert_eq!(RunManifest::default_path(&inv), PathBuf::from("/a/b/rows.csv.manifest.json"));
    }

    #[test]
    fn config_defaults_and_partial_files() {
        let cfg: ExperimentConfig = toml::from_str("steps = 4\n[dataset]\nsamples = 12\n").unwrap();
        assert_eq!(cfg.steps, 4);
        assert_eq!(cfg.dataset.samples, 12);
        assert_eq!(cfg.dataset.horizon, 5);
        assert_eq!(cfg.x0, vec![0.9, 0.9]);
        let text = toml::to_string(&ExperimentConfig::default()).unwrap();
        let back: ExperimentConfig = toml::from_str(&text).unwrap();
        assert_eq!(back, ExperimentConfig::default());
    }

    #[test]
    fn manifest_roundtrip_json() {
        let inv = Invocation::Identify {
            dataset: "/d.csv".into(),
            out: "/p.json".into(),
            causal: true,
        };
        let m = RunManifest {
            manifest_version: MANIFEST_VERSION,
            library_version: "0".into(),
            created_unix: 1,
            seeds: Seeds { dataset: None, noise: None },
            invocation: inv,
            outputs: vec![],
        };
        let text = serde_json::to_string(&m).unwrap();
        assert!(text.contains("\"command\":\"identify\""));
        assert_eq!(serde_json::from_str::<RunManifest>(&text).unwrap(), m);
    }

    #[test]
    fn all_failed_cells_is_fatal() {
        assert!(cell_outcome(3, 3).is_err());
        assert_eq!(cell_outcome(0, 3).unwrap(), Outcome::Success);
        assert!(matches!(cell_outcome(1, 3).unwrap(), Outcome::Partial(_)));
    }
}

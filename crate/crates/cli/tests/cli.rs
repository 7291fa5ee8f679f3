use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use drmpc::lifting::TrajectoryDataset;
use drmpc_cli::RunManifest;

fn drmpc(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_drmpc"))
        .args(args)
        .current_dir(dir)
        .env_remove("DRMPC_SOLVER")
        .output()
        .expect("binary runs")
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

fn data_rows(csv: &str) -> Vec<Vec<String>> {
    csv.lines()
        .filter(|l| !l.starts_with('#'))
        .skip(1)
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn generate_is_reproducible_and_handles_single_record() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&drmpc(d, &["generate", "-o", "a.csv"]));
    ok(&drmpc(d, &["generate", "-o", "b.csv"]));
    assert_eq!(fs::read(d.join("a.csv")).unwrap(), fs::read(d.join("b.csv")).unwrap());
    let data = TrajectoryDataset::load(&d.join("a.csv")).unwrap();
    assert_eq!((data.len(), data.horizon), (10, 5));

    ok(&drmpc(d, &["generate", "--samples", "1", "-o", "one.json"]));
    assert_eq!(TrajectoryDataset::load(&d.join("one.json")).unwrap().len(), 1);
    assert!(d.join("one.json.manifest.json").exists());
}

#[test]
fn tune_radius_reports_pairs_and_rejects_small_data() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&drmpc(d, &["generate", "-o", "data.csv"]));
    ok(&drmpc(d, &["tune-radius", "-d", "data.csv", "-o", "r.json", "--diagnostics", "diag.csv"]));
    let r: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("r.json")).unwrap()).unwrap();
    assert!(r["eps1"].as_f64().unwrap() >= 0.0 && r["eps2"].as_f64().unwrap() >= 0.0);
    assert_eq!(r["diagnostics"].as_array().unwrap().len(), 10);
    assert_eq!(data_rows(&fs::read_to_string(d.join("diag.csv")).unwrap()).len(), 10);

    ok(&drmpc(d, &["generate", "--samples", "2", "-o", "small.csv"]));
    let out = drmpc(d, &["tune-radius", "-d", "small.csv", "-o", "s.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("N >= 3"));
}

#[test]
fn identify_writes_predictor() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&drmpc(d, &["generate", "-o", "data.csv"]));
    ok(&drmpc(d, &["identify", "-d", "data.csv", "-o", "pred.json"]));
    let pred = drmpc::identification::MultiStepPredictor::from_json(&fs::read_to_string(d.join("pred.json")).unwrap()).unwrap();
    assert_eq!(pred.sample_count(), 10);
    assert!(pred.causal);
}

#[test]
fn single_cell_sweep_equals_run() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&drmpc(d, &["run", "--steps", "6", "--grid", "0.001", "-o", "run.csv"]));
    ok(&drmpc(d, &["sweep", "--steps", "6", "--grid", "0.001", "-o", "sweep.csv"]));
    let run = data_rows(&fs::read_to_string(d.join("run.csv")).unwrap());
    let cost: f64 = run.iter().map(|r| r[8].parse::<f64>().unwrap()).sum();
    let sweep = data_rows(&fs::read_to_string(d.join("sweep.csv")).unwrap());
    assert_eq!(sweep.len(), 1);
    assert_eq!(sweep[0][2].parse::<f64>().unwrap(), cost);
}

#[test]
fn compare_rows_share_seeds_and_replay_matches() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let cfg = "steps = 5\nrepetitions = 2\nsample_sizes = [10]\n";
    fs::write(d.join("exp.toml"), cfg).unwrap();
    ok(&drmpc(d, &["compare", "-c", "exp.toml", "-o", "rows.csv", "--summary", "summary.csv"]));
    let rows = data_rows(&fs::read_to_string(d.join("rows.csv")).unwrap());
    assert_eq!(rows.len(), 4);
    for pair in rows.chunks(2) {
        assert_eq!((pair[0][2].as_str(), pair[1][2].as_str()), ("saa", "dr"));
        assert_eq!(pair[0][3..5], pair[1][3..5]);
    }
    let manifest = RunManifest::load(&d.join("rows.csv.manifest.json")).unwrap();
    assert_eq!(manifest.invocation.config().unwrap().steps, 5);
    assert_eq!(manifest.outputs.len(), 2);
    let out = drmpc(d, &["replay", "-m", "rows.csv.manifest.json", "--out-dir", "again"]);
    ok(&out);
    for name in ["rows.csv", "summary.csv"] {
        assert_eq!(fs::read(d.join(name)).unwrap(), fs::read(d.join("again").join(name)).unwrap());
    }
}

#[test]
fn solver_env_and_partial_exit_code() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let bin = env!("CARGO_BIN_EXE_drmpc");
    let saa = Command::new(bin)
        .args(["run", "--steps", "3", "--saa", "-o", "saa.csv"])
        .current_dir(d)
        .env("DRMPC_SOLVER", "simplex")
        .output()
        .unwrap();
    ok(&saa);
    let dr = Command::new(bin)
        .args(["run", "--steps", "3", "--eps1", "0.01", "--eps2", "0.01", "-o", "dr.csv"])
        .current_dir(d)
        .env("DRMPC_SOLVER", "simplex")
        .output()
        .unwrap();
    assert_eq!(dr.status.code(), Some(1));
    let rows = data_rows(&fs::read_to_string(d.join("dr.csv")).unwrap());
    assert!(rows.iter().all(|r| r[7] == "1"));
    let bad = Command::new(bin)
        .args(["run", "-o", "x.csv"])
        .current_dir(d)
        .env("DRMPC_SOLVER", "nope")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn dump_program_and_plot_script() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(&drmpc(d, &["dump-program", "--eps1", "0.01", "--eps2", "0.01", "-o", "dr.json"]));
    ok(&drmpc(d, &["dump-program", "--saa-program", "-o", "saa.json"]));
    let dr = drmpc::dro::ConicProgram::from_json(&fs::read_to_string(d.join("dr.json")).unwrap()).unwrap();
    let saa = drmpc::dro::ConicProgram::from_json(&fs::read_to_string(d.join("saa.json")).unwrap()).unwrap();
    assert_eq!(dr.cones.len(), 10);
    assert!(saa.cones.is_empty());
    ok(&drmpc(d, &["plot-script", "--kind", "sweep", "-i", "sweep.csv", "-o", "sweep.gp"]));
    assert!(fs::read_to_string(d.join("sweep.gp")).unwrap().contains("sweep.csv"));
}

use drmpc::dro::SolveStatus;
use drmpc::identification::MultiStepPredictor;
use drmpc::lifting::{build_lifted, simulate_trajectory, DisturbanceSpec};
use drmpc::mpc::*;
use drmpc::radius::AmbiguityRadius;
use nalgebra::DVector;

fn small_cfg() -> ExperimentConfig {
    ExperimentConfig {
        steps: 6,
        repetitions: 2,
        sample_sizes: vec![10],
        ..ExperimentConfig::default()
    }
}

#[test]
fn record_has_configured_steps_and_consistent_aggregates() {
    let cfg = small_cfg();
    let data = cfg.generate(10, 1).unwrap();
    let pred = build_predictor(cfg.predictor, &data).unwrap();
    let ctrl = build_controller(&cfg, pred, AmbiguityRadius::new(1e-3, 1e-3).unwrap()).unwrap();
    let rec = run_closed_loop(&cfg, &ctrl, 3).unwrap();
    assert_eq!(rec.steps.len(), cfg.steps);
    let cost: f64 = rec.steps.iter().map(|s| s.stage_cost).sum();
    assert_eq!(rec.total_cost, cost);
    assert_eq!(rec.violations, rec.steps.iter().filter(|s| s.violated()).count());
    assert!(rec.steps.iter().all(|s| s.status == SolveStatus::Optimal && !s.fallback));
    assert_eq!(rec.steps[0].state, cfg.x0);
    for pair in rec.steps.windows(2) {
        assert_eq!(pair[0].next_state, pair[1].state);
    }
    assert_eq!(rec, run_closed_loop(&cfg, &ctrl, 3).unwrap());
}

#[test]
fn perfect_model_replays_open_loop() {
    let mut cfg = small_cfg();
    cfg.system.noise = DisturbanceSpec::Zero;
    let sys = cfg.true_system().unwrap();
    let data = cfg.generate(10, 4).unwrap();
    let truth = build_lifted(sys.a(), sys.b(), 5).unwrap();
    let pred = MultiStepPredictor::with_matrix(truth.l.clone(), &data).unwrap();
    assert!(pred.residuals.iter().all(|r| r.amax() < 1e-12));
    let mut ctrl = build_controller(&cfg, pred, AmbiguityRadius::zero()).unwrap();
    ctrl.constraint = None;
    let rec = run_closed_loop(&cfg, &ctrl, 9).unwrap();
    assert_eq!(rec.violations, 0);
    let inputs: Vec<DVector<f64>> = rec.steps.iter().map(|s| DVector::from_vec(s.input.clone())).collect();
    let zeros = vec![DVector::zeros(2); inputs.len()];
    let replay = simulate_trajectory(&sys, &cfg.x0_vector(), &inputs, &zeros).unwrap();
    for (s, x) in rec.steps.iter().zip(&replay) {
        let got = DVector::from_vec(s.next_state.clone());
        assert!((got - x).amax() < 1e-12);
    }
}

#[test]
fn sweep_is_deterministic_and_matches_single_runs() {
    let cfg = small_cfg();
    let cell = AmbiguityRadius::new(1e-2, 1e-3).unwrap();
    let rows = sweep_radius(&cfg, &[AmbiguityRadius::zero(), cell, cell]).unwrap();
    assert_eq!(rows.len(), 3);
    assert_eq!(rows[1], rows[2]);
    let data = cfg.generate(cfg.dataset.samples, cfg.dataset.seed).unwrap();
    let pred = build_predictor(cfg.predictor, &data).unwrap();
    let saa = build_controller(&cfg, pred, AmbiguityRadius::zero()).unwrap();
    let single = run_closed_loop(&cfg, &saa, cfg.noise_seed).unwrap();
    assert_eq!(rows[0].cost, single.total_cost);
    assert_eq!(rows[0].violations, single.violations);

    let mut a = Vec::new();
    let mut b = Vec::new();
    write_sweep_csv(&rows, &mut a).unwrap();
    write_sweep_csv(&sweep_radius(&cfg, &[AmbiguityRadius::zero(), cell, cell]).unwrap(), &mut b).unwrap();
    assert_eq!(a, b);
    assert!(String::from_utf8(a).unwrap().starts_with("# schema drmpc-sweep/1\n"));
}

#[test]
fn compare_rows_are_paired_and_summaries_recompute() {
    let cfg = small_cfg();
    let out = compare_saa_dr(&cfg).unwrap();
    assert_eq!(out.rows.len(), 4);
    for pair in out.rows.chunks(2) {
        assert_eq!(pair[0].method, Method::Saa);
        assert_eq!(pair[1].method, Method::Dr);
        assert_eq!(pair[0].dataset_seed, pair[1].dataset_seed);
        assert_eq!(pair[0].noise_seed, pair[1].noise_seed);
        assert_eq!((pair[0].eps1, pair[0].eps2), (0.0, 0.0));
        assert!(pair[0].error.is_none() && pair[1].error.is_none());
    }
    assert_ne!(out.rows[0].dataset_seed, out.rows[2].dataset_seed);
    for s in &out.summary {
        let costs: Vec<f64> = out.rows.iter().filter(|r| r.method == s.method).map(|r| r.cost).collect();
        assert_eq!(s.runs, 2);
        assert_eq!(s.cost_median, (costs[0] + costs[1]) / 2.0);
    }
    assert_eq!(out.rows, compare_saa_dr(&cfg).unwrap().rows);
}

#[test]
fn mismatched_controller_is_rejected() {
    let cfg = small_cfg();
    let mut other = small_cfg();
    other.system.b = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
    let data = other.generate(12, 1).unwrap();
    let pred = build_predictor(PredictorSource::FullFit, &data).unwrap();
    let ctrl = build_controller(&other, pred, AmbiguityRadius::zero()).unwrap();
    assert!(run_closed_loop(&cfg, &ctrl, 1).is_err());
}

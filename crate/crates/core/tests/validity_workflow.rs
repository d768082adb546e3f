use asymptote::distance::DistanceReport;
use asymptote::experiment::{run_seed, ExperimentConfig, EVALS_FILE, SUMMARY_FILE, SURROGATE_FILE};
use asymptote::optimize::{Evaluation, Termination as SolverTermination};
use asymptote::validity::{converged, score_window, test_valid, train_valid, ConvergedBy};
use asymptote::workflow::{hyper_schedule, run_asymptotic, train_until_valid, write_summary_csv, TrainSettings};
use asymptote::{
    model_by_id, EvalStore, ExtremaRegistry, Preset, SolverTrace, Source, SurrogateDb, Termination, ToleranceConfig,
    WorkflowConfig,
};
use proptest::prelude::*;

fn terminal(x: Vec<f64>) -> SolverTrace {
    SolverTrace {
        evaluations: vec![Evaluation { x: x.clone(), f: 0.0 }],
        best_x: x,
        best_f: 0.0,
        iterations: 1,
        terminated_by: SolverTermination::Tolerance,
        best_history: vec![0.0],
    }
}

fn quick_config(seed: u64) -> WorkflowConfig {
    let mut cfg = WorkflowConfig { max_iterations: 3, ..WorkflowConfig::default() }.with_seed(seed);
    cfg.sampler.warm = 150;
    cfg.sampler.batch_size = 50;
    cfg
}

fn summary_csv(cfg: &WorkflowConfig, model: &str) -> (Vec<u8>, asymptote::WorkflowResult) {
    let model = model_by_id(model, None).unwrap();
    let mut store = EvalStore::in_memory(model.dim());
    let mut db = SurrogateDb::in_memory();
    let result = run_asymptotic(&*model, cfg, &mut store, &mut db).unwrap();
    let mut out = Vec::new();
    write_summary_csv(&result.summaries, &mut out).unwrap();
    (out, result)
}

proptest! {
    #[test]
    fn shrinking_distances_keeps_validity(d in prop::collection::vec(0.0..2e-4f64, 1..50), scale in 0.0..1.0f64, strict in any::<bool>()) {
        let cfg = ToleranceConfig::preset(if strict { Preset::Strict } else { Preset::Loose });
        let before = DistanceReport::from_distances(d.clone()).unwrap();
        let after = DistanceReport::from_distances(d.iter().map(|v| v * scale).collect()).unwrap();
        if test_valid(&before, &cfg) {
            prop_assert!(test_valid(&after, &cfg));
        }
        if train_valid(&before, &cfg) {
            prop_assert!(train_valid(&after, &cfg));
        }
    }

    #[test]
    fn registry_stays_separated_and_omega_nests(points in prop::collection::vec((0.0..1.0f64, 0.0..1.0f64, 0usize..8), 1..60), current in 0usize..10, m in 1usize..8) {
        let mut reg = ExtremaRegistry::new(0.05).unwrap();
        let mut sorted = points.clone();
        sorted.sort_by_key(|p| p.2);
        for (a, b, it) in sorted {
            reg.update(&[terminal(vec![a, b])], it);
        }
        let e = reg.entries();
        for i in 0..e.len() {
            for j in (i + 1)..e.len() {
                let d = ((e[i].x[0] - e[j].x[0]).powi(2) + (e[i].x[1] - e[j].x[1]).powi(2)).sqrt();
                prop_assert!(d > 0.05);
            }
        }
        if reg.omega(current, m) {
            for smaller in 1..=m {
                prop_assert!(reg.omega(current, smaller));
            }
        }
    }

    #[test]
    fn convergence_limits(scores in prop::collection::vec(prop::option::of(0.0..1.0f64), 1..12)) {
        let current = scores.len() - 1;
        let reg = ExtremaRegistry::new(0.1).unwrap();
        let mut cfg = ToleranceConfig { tol_stop: f64::INFINITY, ..ToleranceConfig::default() };
        let any_scored = !score_window(&scores, current, cfg.n).is_empty();
        prop_assert_eq!(converged(&reg, current, &scores, &cfg).is_some(), any_scored);
        cfg.tol_stop = f64::MIN_POSITIVE;
        let mut fed = ExtremaRegistry::new(0.1).unwrap();
        fed.update(&[], 0);
        let expect = fed.omega(current, cfg.m).then_some(ConvergedBy::Omega);
        let positive: Vec<Option<f64>> = scores.iter().map(|s| s.map(|v| v + 1.0)).collect();
        prop_assert_eq!(converged(&fed, current, &positive, &cfg), expect);
    }
}

#[test]
fn replay_reproduces_summary() {
    for model in ["rosenbrock2", "easom"] {
        let cfg = quick_config(11);
        let (a, ra) = summary_csv(&cfg, model);
        let (b, rb) = summary_csv(&cfg, model);
        assert_eq!(a, b);
        ra.check_convergence(&cfg.test).unwrap();
        rb.check_convergence(&cfg.test).unwrap();
        let (c, _) = summary_csv(&quick_config(12), model);
        assert_ne!(a, c, "a different seed should sample different data");
    }
}

#[test]
fn directed_run_honours_convergence_contract() {
    let mut cfg = quick_config(3);
    cfg.sampler.directed = true;
    cfg.sampler.warm = 100;
    // Solver trajectories crowd the store; score a strided subset.
    cfg.report_cap = Some(300);
    let (_, result) = summary_csv(&cfg, "rosenbrock2");
    result.check_convergence(&cfg.test).unwrap();
    assert!(result.registry.is_fed());
    if result.termination == Termination::Converged {
        assert!(result.last().unwrap().converged);
    }
}

#[test]
fn persisted_delta_never_grows_between_phases() {
    let model = model_by_id("rosenbrock2", None).unwrap();
    let mut store = EvalStore::in_memory(2);
    for i in 0..60 {
        let x = [0.5 + (i % 8) as f64 * 1.1, 0.3 + (i / 8) as f64 * 1.2];
        store.cached_evaluate(&model, &x, 0, Source::SamplerStart).unwrap();
    }
    let data = store.query_all();
    let settings = TrainSettings::from_config(&WorkflowConfig::default());
    let mut db = SurrogateDb::in_memory();
    let never = |_: &DistanceReport| false;
    let mut previous = f64::INFINITY;
    for phase in 0..4 {
        let schedule = hyper_schedule(3, 1e-3, 7, phase);
        let out = train_until_valid(&data, model.bounds(), &settings, &mut db, &schedule, &[], &never).unwrap();
        assert!(out.delta <= previous, "phase {phase}: {} > {previous}", out.delta);
        previous = out.delta;
    }
}

#[test]
fn file_backed_run_writes_artifacts_and_reruns_identically() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        model = "easom"
        max_iterations = 2
        [sampler]
        warm = 120
        batch_size = 60
        "#,
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let first = run_seed(&cfg, 4, dir.path(), false).unwrap();
    first.check_convergence(&cfg.workflow(4).test).unwrap();
    for f in [EVALS_FILE, SURROGATE_FILE, SUMMARY_FILE] {
        assert!(dir.path().join(f).exists(), "{f} missing");
    }
    let store = EvalStore::load(dir.path().join(EVALS_FILE)).unwrap();
    assert_eq!(store.len(), first.total_evals);
    let summary = std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap();

    run_seed(&cfg, 4, dir.path(), false).unwrap();
    assert_eq!(std::fs::read(dir.path().join(SUMMARY_FILE)).unwrap(), summary);
    assert_eq!(EvalStore::load(dir.path().join(EVALS_FILE)).unwrap().len(), first.total_evals);
}

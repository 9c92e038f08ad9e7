use std::path::PathBuf;
use std::sync::OnceLock;
use tactile_retrieval::datasets::*;
use tactile_retrieval::encoder::*;
use tactile_retrieval::harness::*;
use tactile_retrieval::interact::TapVariant;
use tactile_retrieval::world::{BodyState, ObjectShape, Pose, Scene};

/// A small encoder trained briefly on a small corpus, saved once per test binary.
fn model_path() -> &'static PathBuf {
    static PATH: OnceLock<PathBuf> = OnceLock::new();
    PATH.get_or_init(|| {
        let m = SplitManifest::new(0, 24, 6);
        let cfg = CorpusConfig { poses_per_object: 4, ..CorpusConfig::default() };
        let corpus = build_corpus(&m, &cfg, 0).unwrap();
        let enc = EncoderConfig { d_model: 16, n_heads: 2, n_layers: 1, d_ff: 32, d_embed: 16, ..EncoderConfig::default() };
        let data = TrainSet::from_sequences(&corpus.train, enc.max_seq_len, 0).unwrap();
        let mut model = EncoderModel::new(enc, 0).unwrap();
        let tc = TrainConfig { epochs: 30, ..TrainConfig::default() };
        train(&mut model, &data, &tc, 0).unwrap();
        let dir = std::env::temp_dir().join(format!("harness-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let p = dir.join("model.json");
        model.save(&p).unwrap();
        p
    })
}

fn small(kind: ExperimentKind, n: usize) -> ExperimentConfig {
    ExperimentConfig {
        n_trials: n,
        svg_samples: 1,
        ..ExperimentConfig::for_kind(kind)
    }
}

#[test]
fn standard_error_matches_formula() {
    let s = Stat::of(&[1.0, 0.0, 1.0, 1.0]).unwrap();
    assert_eq!(s.mean, 0.75);
    // sample variance 0.25, n = 4
    assert!((s.se.unwrap() - 0.25).abs() < 1e-12);
    let one = Stat::of(&[0.4]).unwrap();
    assert_eq!(one.se, None);
    assert_eq!(one.se_text(), "n/a");
    assert!(Stat::of(&[]).is_none());
}

#[test]
fn identical_tables_compare_to_zero() {
    let out = run_experiment(&small(ExperimentKind::Localize, 3)).unwrap();
    let t = out.tables[0].clone();
    let c = compare_methods(&[t.clone(), t.clone(), t]).unwrap();
    assert!(c.deltas.iter().flatten().all(|d| *d == 0.0));
    assert!(c.to_csv().unwrap().starts_with("metric,table,mean,se,n,delta"));
}

#[test]
fn mismatched_tables_are_rejected() {
    let a = SummaryTable { name: "a".into(), metrics: [("x".to_string(), Stat::of(&[1.0]).unwrap())].into() };
    let b = SummaryTable { name: "b".into(), metrics: [("y".to_string(), Stat::of(&[1.0]).unwrap())].into() };
    assert!(matches!(compare_methods(&[a, b]), Err(HarnessError::MetricMismatch(_))));
    assert!(compare_methods(&[]).is_err());
}

#[test]
fn single_trial_has_no_standard_error() {
    let out = run_experiment(&small(ExperimentKind::Localize, 1)).unwrap();
    let s = out.tables[0].metrics["loc_success"];
    assert_eq!((s.n, s.se), (1, None));
    assert!(out.tables[0].to_text().contains("n/a"));
    assert!(out.violations.is_empty());
}

#[test]
fn config_validation_fails_fast() {
    let mut c = small(ExperimentKind::Localize, 0);
    assert!(matches!(c.validate(), Err(HarnessError::Config(_))));
    c.n_trials = 5;
    c.validate().unwrap();
    let id = small(ExperimentKind::Identify, 5);
    assert!(matches!(run_experiment(&id), Err(HarnessError::MissingModel(_))));
    let missing = ExperimentConfig { model: Some("/nonexistent/model.json".into()), ..id };
    assert!(matches!(missing.validate(), Err(HarnessError::Config(_))));
    let crowded = ExperimentConfig { k: 31, ..small(ExperimentKind::Localize, 1) };
    assert!(crowded.validate().is_err());
}

#[test]
fn config_json_fills_defaults() {
    let c: ExperimentConfig = serde_json::from_str(r#"{"experiment": "pipeline", "k": 2, "tap": {"z_step": 1.0}, "physics": {"friction": 0.1}}"#).unwrap();
    assert_eq!(c.experiment, ExperimentKind::Pipeline);
    assert_eq!(c.k, 2);
    assert_eq!(c.tap.z_step, 1.0);
    assert_eq!(c.tap.gamma, ExperimentConfig::default().tap.gamma);
    assert_eq!(c.scene_params().friction, 0.1);
    assert_eq!(c.n_trials, 200);
}

#[test]
fn reruns_write_identical_csv() {
    let cfg = small(ExperimentKind::Localize, 6);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(records_csv(&a.records).unwrap(), records_csv(&b.records).unwrap());
    let other = run_experiment(&ExperimentConfig { seed: 1, ..cfg }).unwrap();
    assert_ne!(records_csv(&a.records).unwrap(), records_csv(&other.records).unwrap());
}

#[test]
fn outputs_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_experiment(&small(ExperimentKind::Localize, 4)).unwrap();
    write_outputs(&out, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let header = csv.lines().next().unwrap();
    assert!(header.starts_with("condition,method,trial,seed,k,loc_success"));
    assert_eq!(csv.lines().count(), 1 + 8);
    for f in ["summary.json", "summary.txt", "comparison.csv", "localize_trial0.svg", "loc_success.svg"] {
        assert!(dir.path().join(f).is_file(), "{f}");
    }
    let svg = std::fs::read_to_string(dir.path().join("localize_trial0.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
    let summary: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["tables"].as_array().unwrap().len(), 2);
}

#[test]
fn stage_gating_is_enforced() {
    let bad = TrialRecord { success: Some(true), loc_success: Some(true), id_correct: Some(false), grasp_success: Some(true), ..Default::default() };
    assert_eq!(check_invariants(&[bad], &[]).len(), 1);
    let t = SummaryTable { name: "t".into(), metrics: [("loc_success".to_string(), Stat { mean: 1.2, se: Some(0.0), n: 3 })].into() };
    assert_eq!(check_invariants(&[], &[t]).len(), 1);
}

#[test]
fn bar_chart_draws_each_bar() {
    let bars = vec![
        Bar { label: "a<b".into(), value: 0.5, err: Some(0.1) },
        Bar { label: "c".into(), value: 0.9, err: None },
    ];
    let s = bar_chart("rates", &bars, Some(1.0));
    assert_eq!(s.matches("class=\"bar\"").count(), 2);
    assert!(s.contains("a&lt;b"));
}

fn prism(spec: Footprint, height: f64, label: &str) -> ObjectShape {
    ShapeSpec { family: ShapeFamily::Box, footprint: spec, layers: vec![Layer { height, scale: 1.0 }] }.build(label).unwrap()
}

#[test]
fn easy_scene_pipeline_succeeds() {
    let model = EncoderModel::load(model_path()).unwrap();
    let cyl = prism(Footprint::Ellipse { a: 4.5, b: 4.5 }, 5.0, "cylinder");
    let bx = prism(Footprint::Box { width: 13.0, depth: 8.0 }, 14.0, "box");
    let bodies = vec![
        BodyState::new(cyl.clone(), Pose::new(16.0, 16.0, 0.0), 0.2, 0.5).unwrap(),
        BodyState::new(bx.clone(), Pose::new(43.0, 18.0, 0.4), 0.2, 0.5).unwrap(),
        BodyState::new(bx, Pose::new(28.0, 44.0, -0.3), 0.2, 0.5).unwrap(),
    ];
    let scene = Scene::new(60.0, bodies, false);
    let cfg = ExperimentConfig::default();
    let reference = reference_taps(&cyl, &cfg.scene, &cfg, TapVariant::Full, 5).unwrap();
    assert!(!reference.is_empty());
    let (r, loc) = run_pipeline_trial(scene, 0, &reference, &model, &cfg, 5).unwrap();
    assert!(loc.success);
    assert_eq!(r.identified, r.truth);
    assert_eq!(r.grasp_oracle, Some(true));
    assert_eq!(r.success, Some(true), "{r:?}");
}

#[test]
fn ablation_tables_have_one_row_per_condition() {
    let path = model_path().clone();
    let fr = run_experiment(&ExperimentConfig { model: Some(path.clone()), ..small(ExperimentKind::AblateFriction, 4) }).unwrap();
    let names: Vec<&str> = fr.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["mu=0.5", "mu=0.25", "mu=0.1"]);
    assert!(fr.tables.iter().all(|t| t.metrics.contains_key("loc_success") && t.metrics.contains_key("id_accuracy")));

    let st = run_experiment(&ExperimentConfig { model: Some(path.clone()), ..small(ExperimentKind::AblateStatic, 4) }).unwrap();
    assert_eq!(st.tables[1].name, "static");
    assert_eq!(st.tables[1].metrics["tap_displacement"].mean, 0.0);

    let it = run_experiment(&ExperimentConfig { model: Some(path), ..small(ExperimentKind::AblateInteraction, 2) }).unwrap();
    let names: Vec<&str> = it.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["full", "no_reloc", "noisy"]);
}

#[test]
fn pipeline_experiment_is_stage_gated() {
    let cfg = ExperimentConfig { model: Some(model_path().clone()), ..small(ExperimentKind::Pipeline, 8) };
    let out = run_experiment(&cfg).unwrap();
    assert!(out.violations.is_empty(), "{:?}", out.violations);
    for r in &out.records {
        if r.loc_success == Some(false) {
            assert_eq!((r.success, r.identified), (Some(false), None));
        }
    }
    assert_eq!(out.svgs.len(), 1);
}

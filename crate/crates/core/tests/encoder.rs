use ndarray::Array2;
use proptest::prelude::*;
use rand::Rng;
use tactile_retrieval::encoder::*;
use tactile_retrieval::geometry::Vec3;
use tactile_retrieval::interact::TapSequence;
use tactile_retrieval::rng::rng_for;

fn tiny(arch: Arch, loss: LossKind) -> EncoderConfig {
    EncoderConfig {
        arch,
        d_model: 8,
        n_heads: 2,
        n_layers: if arch == Arch::Attention { 1 } else { 2 },
        d_ff: 16,
        d_embed: 4,
        max_seq_len: 8,
        temperature: 0.5,
        loss,
        triplet_margin: 0.5,
    }
}

fn random_tokens(seed: u64, n: usize) -> Vec<Array2<f64>> {
    let mut rng = rng_for(seed, &[1]);
    (0..n)
        .map(|_| {
            let len = rng.gen_range(3..=8);
            Array2::from_shape_fn((len, 3), |_| rng.gen_range(-1.0..1.0))
        })
        .collect()
}

fn seq(object_id: usize, pts: &[(f64, f64, f64)]) -> TapSequence {
    TapSequence {
        object_id,
        pose_id: 0,
        points: pts.iter().map(|&(x, y, z)| Vec3::new(x, y, z)).collect(),
        tap_count: pts.len(),
        displacement: 0.0,
    }
}

/// Largest relative disagreement between the analytic gradient and a
/// fourth-order central difference with h = 1e-4. The plain two-point
/// difference leaves truncation errors above 1e-4 on small, curved entries. Entries where both are below `floor` are
/// compared on the absolute scale of the floor instead.
#[allow(clippy::needless_range_loop)]
fn max_rel_error(model: &EncoderModel, batch: &[Array2<f64>], triples: &[(usize, usize, usize)]) -> f64 {
    let refs: Vec<&Array2<f64>> = batch.iter().collect();
    let (_, g) = model.batch_loss_grad(&refs, triples);
    let h = 1e-4;
    let floor = 1e-6;
    let mut worst: f64 = 0.0;
    let mut m = model.clone();
    for i in 0..model.params.len() {
        let orig = m.params[i];
        let mut at = |d: f64| {
            m.params[i] = orig + d;
            m.batch_loss_grad(&refs, triples).0
        };
        let fd = (at(-2.0 * h) - 8.0 * at(-h) + 8.0 * at(h) - at(2.0 * h)) / (12.0 * h);
        m.params[i] = orig;
        let err = (fd - g[i]).abs() / fd.abs().max(g[i].abs()).max(floor);
        worst = worst.max(err);
    }
    worst
}

#[test]
fn attention_infonce_gradient_matches_finite_differences() {
    let model = EncoderModel::new(tiny(Arch::Attention, LossKind::Infonce), 3).unwrap();
    assert!(model.param_count() <= 2000, "{}", model.param_count());
    let err = max_rel_error(&model, &random_tokens(5, 6), &[]);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn attention_triplet_gradient_matches_finite_differences() {
    let model = EncoderModel::new(tiny(Arch::Attention, LossKind::Triplet), 4).unwrap();
    let triples = [(0, 1, 2), (2, 3, 0), (1, 0, 3)];
    let err = max_rel_error(&model, &random_tokens(6, 4), &triples);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn triplet_gradient_on_small_entries() {
    // one entry here is ~1e-5, where two-point differences drift by 1e-3 relative
    let model = EncoderModel::new(tiny(Arch::Attention, LossKind::Triplet), 4).unwrap();
    let triples = [(0, 1, 2), (2, 3, 4), (4, 5, 0)];
    let err = max_rel_error(&model, &random_tokens(4, 6), &triples);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn recurrent_gradient_matches_finite_differences() {
    let model = EncoderModel::new(tiny(Arch::Recurrent, LossKind::Infonce), 7).unwrap();
    assert!(model.param_count() <= 2000, "{}", model.param_count());
    let err = max_rel_error(&model, &random_tokens(8, 4), &[]);
    assert!(err < 1e-4, "max relative error {err:e}");
}

#[test]
fn default_config_sizes() {
    let m = EncoderModel::new(EncoderConfig::default(), 0).unwrap();
    let counted: usize = m.shapes().iter().map(|s| s.shape.iter().product::<usize>()).sum();
    assert_eq!(counted, m.param_count());
    assert!(m.params.iter().all(|v| v.is_finite()));
}

#[test]
fn config_validation() {
    let bad_heads = EncoderConfig { n_heads: 3, ..EncoderConfig::default() };
    assert!(matches!(EncoderModel::new(bad_heads, 0), Err(EncoderError::Config(_))));
    let bad_tau = EncoderConfig { temperature: 0.0, ..EncoderConfig::default() };
    assert!(EncoderModel::new(bad_tau, 0).is_err());
}

#[test]
fn same_seed_same_embedding() {
    let s = seq(0, &[(1.0, 2.0, 0.5), (-3.0, 0.5, 1.0), (0.2, -4.0, 1.5)]);
    let a = EncoderModel::new(EncoderConfig::default(), 11).unwrap();
    let b = EncoderModel::new(EncoderConfig::default(), 11).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.embed(&s).unwrap(), a.embed(&s).unwrap());
    assert_eq!(a.embed(&s).unwrap(), b.embed(&s).unwrap());
    let c = EncoderModel::new(EncoderConfig::default(), 12).unwrap();
    assert_ne!(a.params, c.params);
}

#[test]
fn empty_sequence_is_an_error() {
    let m = EncoderModel::new(EncoderConfig::default(), 0).unwrap();
    assert!(matches!(m.embed(&seq(0, &[])), Err(EncoderError::EmptySequence)));
}

#[test]
fn long_sequences_subsample_deterministically() {
    let pts: Vec<(f64, f64, f64)> = (0..40).map(|i| (i as f64, 0.0, 0.0)).collect();
    let s = seq(3, &pts);
    let cfg = EncoderConfig { max_seq_len: 16, ..EncoderConfig::default() };
    let m = EncoderModel::new(cfg, 5).unwrap();
    let t1 = m.tokens(&s).unwrap();
    let t2 = m.tokens(&s).unwrap();
    assert_eq!(t1, t2);
    assert_eq!(t1.nrows(), 16);
    let xs: Vec<f64> = t1.column(0).to_vec();
    assert!(xs.windows(2).all(|w| w[0] < w[1]), "order kept");
    let other = EncoderModel::new(cfg, 6).unwrap();
    assert_ne!(other.tokens(&s).unwrap(), t1);
}

#[test]
fn identify_finds_verbatim_reference() {
    let m = EncoderModel::new(EncoderConfig::default(), 2).unwrap();
    let r = seq(0, &[(1.0, 0.0, 0.5), (0.0, 1.0, 1.0), (-1.0, 0.0, 1.5)]);
    let others = [
        seq(1, &[(5.0, 5.0, 0.5), (4.0, -5.0, 3.0)]),
        seq(2, &[(-5.0, 2.0, 9.0)]),
        r.clone(),
        seq(3, &[(0.0, 0.0, 0.0), (1.0, 1.0, 1.0)]),
    ];
    let (i, sims) = identify(&m, &r, &others).unwrap();
    assert_eq!(i, 2);
    assert!((sims[2] - 1.0).abs() < 1e-12);
    let (i, _) = identify(&m, &r, &others[..1]).unwrap();
    assert_eq!(i, 0);
}

#[test]
fn identify_scores_empty_candidates_negative_infinity() {
    let m = EncoderModel::new(EncoderConfig::default(), 2).unwrap();
    let r = seq(0, &[(1.0, 0.0, 0.5)]);
    let (i, sims) = identify(&m, &r, &[seq(1, &[]), seq(2, &[(0.0, 3.0, 1.0)])]).unwrap();
    assert_eq!(i, 1);
    assert_eq!(sims[0], f64::NEG_INFINITY);
    assert!(identify(&m, &r, &[]).is_err());
}

#[test]
fn argmax_breaks_ties_low() {
    assert_eq!(argmax(&[0.3, 0.7, 0.7, 0.1]), 1);
    assert_eq!(argmax(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), 0);
}

#[test]
fn checkpoint_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    let mut m = EncoderModel::new(tiny(Arch::Recurrent, LossKind::Infonce), 9).unwrap();
    m.meta.loss_curve = vec![2.0, 1.5];
    m.save(&path).unwrap();
    let back = EncoderModel::load(&path).unwrap();
    assert_eq!(back.params, m.params);
    assert_eq!(back.config, m.config);
    assert_eq!(back.meta, m.meta);
    let s = seq(0, &[(1.0, 2.0, 3.0), (0.5, 0.1, 0.2)]);
    assert_eq!(back.embed(&s).unwrap(), m.embed(&s).unwrap());
}

#[test]
fn checkpoint_rejects_mismatches() {
    let m = EncoderModel::new(tiny(Arch::Attention, LossKind::Infonce), 9).unwrap();
    let mut v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();

    let mut short = v.clone();
    short["params"].as_array_mut().unwrap().pop();
    assert!(EncoderModel::from_json(&short.to_string()).is_err());

    let mut resized = v.clone();
    resized["config"]["d_ff"] = 32.into();
    assert!(EncoderModel::from_json(&resized.to_string()).is_err());

    v["shapes"][0]["shape"][1] = 9.into();
    assert!(matches!(EncoderModel::from_json(&v.to_string()), Err(EncoderError::Checkpoint(_))));
}

#[test]
fn loss_curve_check() {
    assert!(loss_curve_ok(&[3.0, 2.9, 2.7, 2.8, 2.5, 2.4, 2.3, 2.2, 2.1, 2.0, 2.0, 2.0, 1.9, 1.9, 1.9, 1.8, 1.8, 1.8, 1.8, 1.7], 0.0));
    let mut bad = vec![3.0; 20];
    bad[8] = 9.0;
    assert!(!loss_curve_ok(&bad, 0.0));
}

/// Separable toy task: each object is a ring of points with its own radius
/// and count, observed under random rotations.
fn ring_data(n_obj: usize, poses: usize, seed: u64) -> Vec<TapSequence> {
    let mut rng = rng_for(seed, &[2]);
    let mut out = Vec::new();
    for o in 0..n_obj {
        let r = 2.0 + 0.3 * o as f64;
        let n = 6 + o % 5;
        for p in 0..poses {
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            let pts = (0..n)
                .map(|i| {
                    let a = phase + i as f64 * std::f64::consts::TAU / n as f64;
                    Vec3::new(r * a.cos(), r * a.sin(), 0.5 + 0.5 * (o % 3) as f64 + 0.1 * i as f64)
                })
                .collect();
            out.push(TapSequence {
                object_id: o,
                pose_id: p,
                points: pts,
                tap_count: n,
                displacement: 0.0,
            });
        }
    }
    out
}

#[test]
fn training_is_deterministic_and_learns() {
    let cfg = EncoderConfig { d_model: 16, n_heads: 2, n_layers: 1, d_ff: 32, d_embed: 8, ..EncoderConfig::default() };
    let data = TrainSet::from_sequences(&ring_data(20, 8, 1), cfg.max_seq_len, 0).unwrap();
    let tc = TrainConfig::default();
    let mut a = EncoderModel::new(cfg, 1).unwrap();
    let before = panel_accuracy(&a, &data, 5, 200, 3);
    let curve = train(&mut a, &data, &tc, 1).unwrap();
    let mut b = EncoderModel::new(cfg, 1).unwrap();
    train(&mut b, &data, &tc, 1).unwrap();
    assert_eq!(a.params, b.params);
    assert_eq!(a.meta.loss_curve, curve);
    assert!(curve.last().unwrap() < &curve[0]);
    let after = panel_accuracy(&a, &data, 5, 200, 3);
    assert!(after >= 0.8 && after > before, "{before} -> {after}");
}

#[test]
fn training_needs_two_objects() {
    let data = TrainSet::from_sequences(&ring_data(1, 4, 1), 256, 0).unwrap();
    let mut m = EncoderModel::new(tiny(Arch::Attention, LossKind::Infonce), 0).unwrap();
    assert!(matches!(train(&mut m, &data, &TrainConfig::default(), 0), Err(EncoderError::Data(_))));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn embeddings_have_unit_norm(
        pts in prop::collection::vec((-20.0..20.0f64, -20.0..20.0f64, 0.0..20.0f64), 1..40),
        recurrent in any::<bool>(),
    ) {
        let arch = if recurrent { Arch::Recurrent } else { Arch::Attention };
        let m = EncoderModel::new(EncoderConfig { arch, max_seq_len: 32, ..EncoderConfig::default() }, 1).unwrap();
        let z = m.embed(&seq(0, &pts)).unwrap();
        prop_assert!((z.dot(&z).sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn identify_ignores_positive_rescaling(sims in prop::collection::vec(-1.0..1.0f64, 1..10), k in 0.01..100.0f64) {
        let scaled: Vec<f64> = sims.iter().map(|s| s * k).collect();
        prop_assert_eq!(argmax(&sims), argmax(&scaled));
    }
}


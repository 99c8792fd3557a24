use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::sessions::encode_history;

fn random_history(len: usize, seed: u64) -> ObservationMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let choices: Vec<usize> = (0..len).map(|_| rng.random_range(0..ARMS)).collect();
    let rewards: Vec<u8> = (0..len).map(|_| rng.random_range(0..2)).collect();
    encode_history(&choices, &rewards).unwrap()
}

fn small_config() -> ModelConfig {
    ModelConfig {
        recent_dim: 3,
        short_dim: 4,
        long_dim: 4,
        channels: 5,
        predictor_hidden: 6,
        ..ModelConfig::default()
    }
}

fn assert_close(a: &[f64], b: &[f64], tol: f64) {
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        assert!((x - y).abs() <= tol, "{x} vs {y}");
    }
}

#[test]
fn window_ranges_at_step_150() {
    let w = window_slices(150, &ModelConfig::default());
    assert_eq!(w.recent, WindowRange { start: 147, end: 150 });
    assert_eq!(w.short, WindowRange { start: 130, end: 148 });
    assert_eq!(w.long, WindowRange { start: 50, end: 140 });
    assert_eq!((w.recent.len(), w.short.len(), w.long.len()), (4, 19, 91));
}

#[test]
fn early_windows_are_padded_and_masked() {
    let obs = random_history(5, 1);
    let w = window_slices(2, &ModelConfig::default());
    let (frames, mask) = w.recent.frames(&obs);
    assert_eq!(mask, vec![false, true, true, true]);
    assert!(frames.column(0).iter().all(|&v| v == 0.0));
    assert_eq!(frames.column(1), obs.rows()[0].to_vec());
    let (_, mask) = w.long.frames(&obs);
    assert!(mask.iter().all(|m| !m));
}

#[test]
fn default_dilations_cover_windows_exactly() {
    let c = ModelConfig::default();
    assert_eq!(c.dilations(Scale::Recent), vec![1, 2]);
    assert_eq!(c.dilations(Scale::Short), vec![1, 2, 4, 8, 3]);
    assert_eq!(c.dilations(Scale::Long), vec![1, 2, 4, 8, 16, 32, 27]);
    for &s in c.scales() {
        let field: usize = 1 + c.dilations(s).iter().sum::<usize>() * (c.kernel - 1);
        assert_eq!(field, c.window_len(s));
    }
    assert!(c.masks_recent_past());
}

#[test]
fn config_rejects_bad_windows() {
    let bad = ModelConfig {
        short_window: 2,
        ..ModelConfig::default()
    };
    assert!(matches!(bad.validate(), Err(ModelError::Config(_))));
    let bad = ModelConfig {
        long_end_offset: 20,
        ..ModelConfig::default()
    };
    assert!(matches!(bad.validate(), Err(ModelError::Config(_))));
    let bad = ModelConfig {
        channels: 0,
        ..ModelConfig::default()
    };
    assert!(bad.validate().is_err());
}

#[test]
fn embedding_shapes() {
    let model = Model::init(ModelConfig::default(), 3).unwrap();
    let obs = random_history(120, 2);
    let e = model.embed(&obs, 110).unwrap();
    assert_eq!((e.z_rp.len(), e.z_s.len(), e.z_l.len()), (8, 16, 16));
    assert_eq!(e.z().len(), 40);
    let p = model.predict_next(&e.z()).unwrap();
    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(p.iter().all(|&v| v > 0.0));
}

#[test]
fn recent_only_model_has_one_encoder() {
    let config = ModelConfig {
        encoders: EncoderSet::RecentOnly,
        ..ModelConfig::default()
    };
    let model = Model::init(config, 0).unwrap();
    assert!(model.params.short.is_none() && model.params.long_predictor.is_none());
    assert_eq!(model.params.classifier.weight.shape(), &[3, 8]);
    let e = model.embed(&random_history(30, 0), 29).unwrap();
    assert!(e.z_s.is_empty() && e.z_l.is_empty());
    assert!(model.project(&[0.0; 16], Scale::Short).is_err());
}

#[test]
fn zero_classifier_predicts_uniform() {
    let mut model = Model::init(ModelConfig::default(), 4).unwrap();
    model.params.classifier.weight = Tensor::zeros(&[3, 40]);
    model.params.classifier.bias = Tensor::zeros(&[3]);
    let p = model.predict_next(&[0.7; 40]).unwrap();
    assert_close(&p, &[1.0 / 3.0; 3], 1e-15);
}

#[test]
fn predict_next_rejects_non_finite() {
    let model = Model::init(ModelConfig::default(), 4).unwrap();
    let mut z = vec![0.0; 40];
    z[3] = f64::NAN;
    assert!(matches!(model.predict_next(&z), Err(ModelError::Numeric(_))));
}

#[test]
fn project_checks_dimension() {
    let model = Model::init(ModelConfig::default(), 4).unwrap();
    assert_eq!(model.project(&[0.1; 16], Scale::Long).unwrap().len(), 16);
    assert!(matches!(model.project(&[0.1; 8], Scale::Short), Err(ModelError::Usage(_))));
}

#[test]
fn flat_round_trip() {
    let config = small_config();
    let params = ModelParams::init(&config, 9).unwrap();
    let flat = params.to_flat();
    assert_eq!(flat.len(), params.num_values());
    assert_eq!(ModelParams::from_flat(&config, &flat).unwrap(), params);
    assert!(ModelParams::from_flat(&config, &flat[1..]).is_err());
}

#[test]
fn init_is_seeded() {
    let config = small_config();
    assert_eq!(ModelParams::init(&config, 5).unwrap(), ModelParams::init(&config, 5).unwrap());
    assert_ne!(ModelParams::init(&config, 5).unwrap(), ModelParams::init(&config, 6).unwrap());
}

#[test]
fn sliced_and_whole_sequence_routes_agree() {
    let model = Model::init(small_config(), 11).unwrap();
    let obs = random_history(140, 12);
    let all = model.embed_all(&obs).unwrap();
    for t in [0, 1, 2, 5, 19, 20, 21, 99, 100, 101, 139] {
        let e = model.embed(&obs, t).unwrap();
        assert_close(&all[t].z(), &e.z(), 1e-12);
    }
}

#[test]
fn routes_agree_on_short_histories() {
    let model = Model::init(small_config(), 11).unwrap();
    for len in [1, 2, 7] {
        let obs = random_history(len, len as u64);
        let all = model.embed_all(&obs).unwrap();
        for (t, e) in all.iter().enumerate() {
            assert_close(&e.z(), &model.embed(&obs, t).unwrap().z(), 1e-12);
        }
    }
}

#[test]
fn predict_all_matches_per_step() {
    let model = Model::init(small_config(), 1).unwrap();
    let obs = random_history(40, 3);
    let all = model.predict_all(&obs).unwrap();
    let p = model.predict_next(&model.embed(&obs, 30).unwrap().z()).unwrap();
    assert_close(&all[30], &p, 1e-12);
}

fn with_step_changed(obs: &ObservationMatrix, step: usize) -> ObservationMatrix {
    let mut rows = obs.rows().to_vec();
    let row = &mut rows[step];
    let arm = row[..ARMS].iter().position(|&v| v == 1.0).unwrap();
    row[arm] = 0.0;
    row[(arm + 1) % ARMS] = 1.0;
    row[ARMS] = 1.0 - row[ARMS];
    ObservationMatrix::from_rows(rows)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn short_and_long_ignore_recent_steps(seed in 0u64..1000, t in 0usize..130, back in 0usize..2) {
        let model = Model::init(small_config(), seed).unwrap();
        let obs = random_history(130, seed + 1);
        prop_assume!(t >= back);
        let changed = with_step_changed(&obs, t - back);
        let a = model.embed(&obs, t).unwrap();
        let b = model.embed(&changed, t).unwrap();
        prop_assert_eq!(&a.z_s, &b.z_s);
        prop_assert_eq!(&a.z_l, &b.z_l);
    }

    #[test]
    fn embeddings_ignore_steps_outside_windows(seed in 0u64..1000, t in 0usize..200, step in 0usize..200) {
        let config = small_config();
        let model = Model::init(config.clone(), seed).unwrap();
        let obs = random_history(200, seed ^ 7);
        let changed = with_step_changed(&obs, step);
        let a = model.embed(&obs, t).unwrap();
        let b = model.embed(&changed, t).unwrap();
        let w = window_slices(t, &config);
        for &scale in config.scales() {
            let r = w.get(scale);
            if (step as i64) < r.start || (step as i64) > r.end {
                prop_assert_eq!(a.get(scale), b.get(scale));
            }
        }
    }

    #[test]
    fn whole_sequence_outputs_are_causal(seed in 0u64..1000, step in 0usize..60) {
        let model = Model::init(small_config(), seed).unwrap();
        let obs = random_history(60, seed);
        let changed = with_step_changed(&obs, step);
        let a = model.embed_all(&obs).unwrap();
        let b = model.embed_all(&changed).unwrap();
        for t in 0..step {
            prop_assert_eq!(&a[t], &b[t]);
        }
    }
}

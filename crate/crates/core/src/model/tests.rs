use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::codec::{tokenize_gebd, tokenize_tad, tokenize_tas, TadInstance, Window};
use crate::losses::TadObjective;
use crate::vocab::TadParadigm;

fn tiny_layout() -> VocabLayout {
    // 5 time tokens, 2 + 2 classes: 16 tokens in total.
    VocabLayout::new(5, 2, 2).unwrap()
}

fn tiny_config(layout: &VocabLayout) -> ModelConfig {
    ModelConfig {
        input_dim: 6,
        model_dim: 16,
        encoder_layers: 1,
        decoder_layers: 1,
        attention_heads: 2,
        feedforward_dim: 32,
        frame_count: 8,
        max_target_len: 9,
        vocab_size: layout.total_size,
        dropout_rate: 0.0,
    }
}

fn tiny_model(seed: u64) -> Model {
    let layout = tiny_layout();
    Model::new(tiny_config(&layout), layout, seed).unwrap()
}

fn random_features(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Mat {
    Mat::from_vec(rows, cols, (0..rows * cols).map(|_| rng.random_range(-1.0..1.0)).collect())
}

fn window() -> Window {
    Window::new("v", 0.0, 8.0, 8).unwrap()
}

fn targets(layout: &VocabLayout) -> Vec<TargetSequence> {
    let w = window();
    vec![
        tokenize_tad(&[TadInstance::new(1.0, 3.5, 0), TadInstance::new(4.0, 7.0, 1)], &w, layout).unwrap(),
        tokenize_tas(&[0, 0, 0, 1, 1, 1, 1, 0], &w, layout).unwrap(),
        tokenize_gebd(&[2.5, 6.2], &w, layout).unwrap(),
    ]
}

#[test]
fn embedding_of_zero_input_is_the_positional_encoding() {
    let model = tiny_model(1);
    let x = model.embed_features(&Mat::zeros(8, 6)).unwrap();
    assert_eq!(x.data, sinusoidal(8, 16));
    for i in 0..8 {
        for j in i + 1..8 {
            assert_ne!(x.row(i), x.row(j), "frames {i} and {j} coincide");
        }
    }
    assert!(model.embed_features(&Mat::zeros(8, 5)).is_err());
    let mut bad = Mat::zeros(8, 6);
    bad.data[3] = f64::NAN;
    assert!(matches!(model.embed_features(&bad), Err(Error::Numeric(_))));
}

#[test]
fn encoder_is_deterministic_and_position_aware() {
    let model = tiny_model(2);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let raw = random_features(8, 6, &mut rng);
    let a = model.encode(&raw).unwrap();
    assert_eq!(a, model.encode(&raw).unwrap());
    assert_eq!(a.shape(), (8, 16));
    assert_eq!(model.encode(&random_features(5, 6, &mut rng)).unwrap().shape(), (5, 16));

    let mut swapped = raw.clone();
    let (r0, r1) = (raw.row(0).to_vec(), raw.row(1).to_vec());
    swapped.row_mut(0).copy_from_slice(&r1);
    swapped.row_mut(1).copy_from_slice(&r0);
    let b = model.encode(&swapped).unwrap();
    assert_ne!(a.row(0), b.row(1));
}

#[test]
fn teacher_forcing_is_causal() {
    let model = tiny_model(3);
    let layout = &model.layout;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let memory = model.encode(&random_features(8, 6, &mut rng)).unwrap();
    let target = tokenize_tas(&[0, 1, 1, 0, 0, 1, 0, 1], &window(), layout).unwrap();
    let base = model.decode_teacher_forced(&memory, &target).unwrap();
    assert_eq!(base.shape(), (8, layout.total_size));
    assert!(base.is_finite());
    for k in 1..target.len() {
        let mut perturbed = target.clone();
        perturbed.tokens[k] = if perturbed.tokens[k] == 12 { 11 } else { 12 };
        let logits = model.decode_teacher_forced(&memory, &perturbed).unwrap();
        for j in 0..logits.rows {
            if j < k {
                assert_eq!(logits.row(j), base.row(j), "row {j} saw token {k}");
            } else if j == k {
                assert_ne!(logits.row(j), base.row(j));
            }
        }
    }
}

#[test]
fn overlong_target_rejected() {
    let model = tiny_model(4);
    let memory = model.encode(&Mat::zeros(8, 6)).unwrap();
    let mut target = TargetSequence::new(TaskId::Tas, &model.layout);
    for _ in 0..9 {
        target.push(model.layout.class_to_token(TaskId::Tas, 0).unwrap(), PositionRole::TasFrameClass);
    }
    assert!(model.decode_teacher_forced(&memory, &target).is_err());
}

fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
}

/// Central differences on sampled parameters for one training target.
fn gradient_check(target: &TargetSequence, objective: TadObjective, masked: bool, seed: u64) {
    let mut model = tiny_model(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw = random_features(8, 6, &mut rng);
    let mut loss_config = LossConfig::for_layout(&model.layout);
    loss_config.tad_objective = objective;
    let options = TrainOptions { masked_softmax: masked };
    let batch = [Sample { features: &raw, target }];
    let (_, grad) = model.forward_backward(&batch, &loss_config, options, None).unwrap();

    let eps = 1e-4;
    let mut checked = 0;
    let mut worst: f64 = 0.0;
    for _ in 0..40 {
        let i = rng.random_range(0..model.params.len());
        let orig = model.params[i];
        model.params[i] = orig + eps;
        let up = model.loss(&batch, &loss_config, options).unwrap();
        model.params[i] = orig - eps;
        let down = model.loss(&batch, &loss_config, options).unwrap();
        model.params[i] = orig;
        let numeric = (up - down) / (2.0 * eps);
        worst = worst.max(relative_error(grad[i], numeric));
        checked += 1;
    }
    assert!(checked >= 20);
    assert!(worst <= 1e-3, "worst relative error {worst} for {:?}", target.task);
}

#[test]
fn gradients_match_finite_differences_for_every_task() {
    let layout = tiny_layout();
    for (i, target) in targets(&layout).iter().enumerate() {
        gradient_check(target, TadObjective::WeightLoss, false, 10 + i as u64);
        gradient_check(target, TadObjective::WeightLoss, true, 20 + i as u64);
    }
}

#[test]
fn gradients_hit_every_block() {
    let model = tiny_model(5);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let raw = random_features(8, 6, &mut rng);
    let layout = model.layout.clone();
    let ts = targets(&layout);
    let batch: Vec<Sample<'_>> = ts.iter().map(|t| Sample { features: &raw, target: t }).collect();
    let (_, grad) = model.forward_backward(&batch, &LossConfig::for_layout(&layout), TrainOptions::default(), None).unwrap();
    for block in &model.blocks {
        assert!(block.slot.slice(&grad).iter().any(|&g| g != 0.0), "no gradient reaches {}", block.name);
    }
}

#[test]
fn batch_loss_is_a_mean() {
    let model = tiny_model(6);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let raw = random_features(8, 6, &mut rng);
    let layout = model.layout.clone();
    let ts = targets(&layout);
    let cfg = LossConfig::for_layout(&layout);
    let opts = TrainOptions::default();
    let one = [Sample { features: &raw, target: &ts[1] }];
    let two = [one[0], one[0]];
    let (l1, g1) = model.forward_backward(&one, &cfg, opts, None).unwrap();
    let (l2, g2) = model.forward_backward(&two, &cfg, opts, None).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    assert!(g1.iter().zip(&g2).all(|(a, b)| (a - b).abs() < 1e-12));

    // Single-sample loss equals the loss module applied to the model's probabilities.
    let memory = model.encode(&raw).unwrap();
    let mut probs = model.decode_teacher_forced(&memory, &ts[1]).unwrap();
    for r in 0..probs.rows {
        softmax_in_place(probs.row_mut(r), None);
    }
    let direct = task_loss(TaskId::Tas, &probs, ts[1].body(), ts[1].body_roles(), &cfg).unwrap().value;
    assert!((direct - l1).abs() < 1e-12);
}

#[test]
fn dropout_only_with_rng() {
    let layout = tiny_layout();
    let mut config = tiny_config(&layout);
    config.dropout_rate = 0.3;
    let model = Model::new(config, layout.clone(), 7).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let raw = random_features(8, 6, &mut rng);
    let ts = targets(&layout);
    let batch = [Sample { features: &raw, target: &ts[2] }];
    let cfg = LossConfig::for_layout(&layout);
    let opts = TrainOptions::default();
    let eval = model.loss(&batch, &cfg, opts).unwrap();
    assert_eq!(eval, model.loss(&batch, &cfg, opts).unwrap());
    let (train, _) = model.forward_backward(&batch, &cfg, opts, Some(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    assert_ne!(eval, train);
    let (again, _) = model.forward_backward(&batch, &cfg, opts, Some(&mut ChaCha8Rng::seed_from_u64(1))).unwrap();
    assert_eq!(train, again);
}

#[test]
fn incremental_generation_matches_teacher_forcing() {
    let model = tiny_model(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for task in TaskId::ALL {
        let memory = model.encode(&random_features(8, 6, &mut rng)).unwrap();
        let out = model.generate(&memory, task, TadParadigm::Sparse).unwrap();
        if out.sequence.len() < 2 {
            continue;
        }
        let logits = model.decode_teacher_forced(&memory, &out.sequence).unwrap();
        for (step, dist) in out.step_probs.iter().enumerate() {
            let mask = model.layout.step_mask(task, TadParadigm::Sparse, step, step + 5 <= 9);
            let mut row = logits.row(step).to_vec();
            softmax_in_place(&mut row, Some(&mask));
            assert!(row.iter().zip(dist).all(|(a, b)| (a - b).abs() < 1e-10), "{task} step {step}");
        }
    }
}

#[test]
fn generation_is_legal_and_deterministic() {
    let layout = tiny_layout();
    for seed in 0..20 {
        let model = Model::new(tiny_config(&layout), layout.clone(), seed).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let memory = model.encode(&random_features(8, 6, &mut rng)).unwrap();
        for task in TaskId::ALL {
            for paradigm in [TadParadigm::Sparse, TadParadigm::Dense] {
                let out = model.generate(&memory, task, paradigm).unwrap();
                assert_eq!(out, model.generate(&memory, task, paradigm).unwrap());
                assert_eq!(out.token_probs.len(), out.sequence.len());
                let body = out.sequence.body();
                for (step, (&tok, &role)) in body.iter().zip(out.sequence.body_roles()).enumerate() {
                    assert!(layout.legal_mask(task, role).unwrap()[tok]);
                    assert!(layout.step_mask(task, paradigm, step, true)[tok]);
                }
                if task == TaskId::Tad && paradigm == TadParadigm::Sparse {
                    assert_eq!(body.len() % 3, 1);
                    assert_eq!(*body.last().unwrap(), layout.eos_index);
                    assert!(out.sequence.len() <= 9);
                } else {
                    assert_eq!(body.len(), 8);
                }
            }
        }
    }
}

#[test]
fn checkpoint_round_trip() {
    let model = tiny_model(9);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.ckpt");
    save_checkpoint(&model, &path).unwrap();
    let loaded = load_checkpoint(&path).unwrap();
    assert_eq!(loaded.config, model.config);
    assert_eq!(loaded.layout, model.layout);
    assert!(loaded.params.iter().zip(&model.params).all(|(a, b)| *a == (*b as f32) as f64));

    let mut bytes = std::fs::read(&path).unwrap();
    bytes[40] ^= 1;
    std::fs::write(&path, &bytes).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
}

#[test]
fn vocabulary_mismatch_rejected() {
    let layout = tiny_layout();
    let mut config = tiny_config(&layout);
    config.vocab_size += 1;
    assert!(matches!(Model::new(config, layout, 0), Err(Error::Config(_))));
}

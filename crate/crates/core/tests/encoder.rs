use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_core::model::{
    Checkpoint, EncoderInput, HeadKind, LoraTarget, Mode, Model, ModelConfig, Pooling, TriageRecommendation,
};
use triage_core::train::{grad_check, TrainExample};
use triage_core::Error;

fn small(head: HeadKind) -> ModelConfig {
    ModelConfig {
        vocab_size: 40,
        hidden: 16,
        layers: 2,
        heads: 2,
        ff_dim: 24,
        max_positions: 32,
        dropout: 0.0,
        head_kind: head,
        ..ModelConfig::default()
    }
}

fn random_ids(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(4..vocab as u32)).collect()
}

fn examples(rng: &mut ChaCha8Rng, vocab: usize) -> Vec<TrainExample> {
    (0..3)
        .map(|i| {
            let ids = random_ids(rng, 5 + i, vocab);
            TrainExample { id: format!("x{i}"), input: EncoderInput::padded(&ids, 8, 0), label: i % 5 }
        })
        .collect()
}

#[test]
fn grad_check_every_layer_kind() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for head in [HeadKind::PooledMlp, HeadKind::LabelAttention] {
        let mut cfg = small(head);
        cfg.pooled_hidden = Some(8);
        cfg.dropout = 0.1;
        let model = Model::<f64>::new(cfg).unwrap();
        let batch = examples(&mut rng, 40);
        let report = grad_check(&model, &batch, 1e-5, 200, 3).unwrap();
        assert!(report.checked >= 200);
        assert!(report.max_rel_error < 1e-4, "{head:?}: {report:?}");

        let mut adapted = model.clone();
        adapted.inject_lora(2, &LoraTarget::ALL, 9).unwrap();
        // move B away from zero so both adapter factors get gradient
        for p in adapted.params.iter_mut().filter(|p| p.name.ends_with("lora_b")) {
            p.value.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
        let report = grad_check(&adapted, &batch, 1e-5, 200, 4).unwrap();
        assert!(report.max_rel_error < 1e-4, "{head:?} lora: {report:?}");
        assert!(report.per_tensor.iter().all(|(n, _)| n.contains("lora") || n.starts_with("head.")));
    }
}

#[test]
fn linear_head_grad_check_is_tight() {
    let mut cfg = small(HeadKind::PooledMlp);
    cfg.layers = 0;
    let mut model = Model::<f64>::new(cfg).unwrap();
    model.set_all_trainable(false);
    for p in model.params.iter_mut().filter(|p| p.name.starts_with("head.")) {
        p.trainable = true;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let report = grad_check(&model, &examples(&mut rng, 40), 1e-5, 50, 0).unwrap();
    assert!(report.max_rel_error < 1e-7, "{report:?}");
}

#[test]
fn identical_rows_identical_outputs() {
    let model = Model::<f32>::new(small(HeadKind::LabelAttention)).unwrap();
    let ids = [5u32, 6, 7, 8];
    let input = EncoderInput {
        ids: Array2::from_shape_fn((2, 4), |(_, j)| ids[j]),
        mask: Array2::from_elem((2, 4), true),
    };
    let out = model.encode(&input).unwrap();
    assert_eq!(out[0].states, out[1].states);
}

#[test]
fn padding_leaves_valid_positions_unchanged() {
    let model = Model::<f32>::new(small(HeadKind::PooledMlp)).unwrap();
    let ids = [5u32, 9, 11, 3, 17];
    let plain = model.encode(&EncoderInput::single(&ids)).unwrap();
    let padded = model.encode(&EncoderInput::padded(&ids, 12, 0)).unwrap();
    assert_eq!(padded[0].states.nrows(), 5);
    let diff = (&plain[0].states - &padded[0].states).mapv(f32::abs).fold(0.0f32, |a, &b| a.max(b));
    assert!(diff < 1e-6, "{diff}");
}

#[test]
fn permutation_equivariance_without_positions() {
    let mut cfg = small(HeadKind::PooledMlp);
    cfg.positional = false;
    let model = Model::<f64>::new(cfg).unwrap();
    let ids = [5u32, 9, 11, 3, 17, 21];
    let perm = [3usize, 0, 5, 1, 4, 2];
    let shuffled: Vec<u32> = perm.iter().map(|&p| ids[p]).collect();
    let a = model.encode(&EncoderInput::single(&ids)).unwrap();
    let b = model.encode(&EncoderInput::single(&shuffled)).unwrap();
    for (i, &p) in perm.iter().enumerate() {
        let d = (&a[0].states.row(p) - &b[0].states.row(i)).mapv(f64::abs).sum();
        assert!(d < 1e-10);
    }
}

#[test]
fn input_errors_name_the_sequence() {
    let model = Model::<f32>::new(small(HeadKind::PooledMlp)).unwrap();
    let input = EncoderInput {
        ids: Array2::from_shape_vec((2, 3), vec![1, 2, 3, 4, 99, 5]).unwrap(),
        mask: Array2::from_elem((2, 3), true),
    };
    match model.encode(&input) {
        Err(Error::Argument(m)) => assert!(m.contains("sequence 1"), "{m}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(model.encode(&EncoderInput::single(&[4; 33])), Err(Error::Argument(_))));
}

#[test]
fn pooling_modes() {
    let model = Model::<f64>::new(small(HeadKind::PooledMlp)).unwrap();
    let one = EncoderInput::single(&[7]);
    let p = model.predict(&one).unwrap();
    assert_eq!(p.pooled.unwrap(), model.encode(&one).unwrap()[0].states.row(0).to_owned());

    let mut cfg = small(HeadKind::PooledMlp);
    cfg.pooling = Pooling::MaskedMean;
    let mut mean_model = model.clone();
    mean_model.config = cfg;
    let two = EncoderInput::padded(&[7, 8], 4, 0);
    let h = mean_model.encode(&two).unwrap();
    let e = mean_model.predict(&two).unwrap().pooled.unwrap();
    let expect: Array1<f64> = (&h[0].states.row(0) + &h[0].states.row(1)) / 2.0;
    assert!((&e - &expect).mapv(f64::abs).sum() < 1e-12);
    // pooling does not touch the encoder states
    assert_eq!(h, model.encode(&two).unwrap());
}

#[test]
fn zero_head_is_uniform() {
    let mut model = Model::<f64>::new(small(HeadKind::PooledMlp)).unwrap();
    model.zero_head();
    let p = model.predict(&EncoderInput::single(&[4, 5, 6])).unwrap();
    for v in &p.probabilities {
        assert!((v - 0.2).abs() < 1e-12);
    }
    let rec = TriageRecommendation::from_probabilities(vec![0.1, 0.5, 0.1, 0.2, 0.1]).unwrap();
    assert_eq!(rec.predicted.index(), 1);
}

#[test]
fn label_attention_matches_dense_oracle() {
    let model = Model::<f64>::new(small(HeadKind::LabelAttention)).unwrap();
    let input = EncoderInput::single(&[4, 12, 30]);
    let h = &model.encode(&input).unwrap()[0].states;
    let u = model.params.get(model.params.find("head.label_query").unwrap());
    let w = model.params.get(model.params.find("head.label_weight").unwrap());
    let b = model.params.get(model.params.find("head.label_bias").unwrap());
    let pred = model.predict(&input).unwrap();
    let att = pred.attention.unwrap();
    for l in 0..5 {
        let scores: Vec<f64> = (0..3).map(|t| (0..16).map(|j| u[[l, j]] * h[[t, j]]).sum()).collect();
        let z: f64 = scores.iter().map(|s| s.exp()).sum();
        let alpha: Vec<f64> = scores.iter().map(|s| s.exp() / z).collect();
        let v: Vec<f64> = (0..16).map(|j| (0..3).map(|t| alpha[t] * h[[t, j]]).sum()).collect();
        let logit: f64 = (0..16).map(|j| w[[l, j]] * v[j]).sum::<f64>() + b[[0, l]];
        assert!((pred.logits[l] - logit).abs() < 1e-12);
        for t in 0..3 {
            assert!((att[[l, t]] - alpha[t]).abs() < 1e-12);
        }
        assert!((att.row(l).sum() - 1.0).abs() < 1e-12);
    }

    let single = model.predict(&EncoderInput::single(&[9])).unwrap().attention.unwrap();
    assert!(single.iter().all(|&a| (a - 1.0).abs() < 1e-15));

    let empty = EncoderInput::padded(&[], 4, 0);
    assert!(model.predict(&empty).is_err());
}

#[test]
fn duplicate_states_get_equal_attention() {
    let mut cfg = small(HeadKind::LabelAttention);
    cfg.positional = false;
    let model = Model::<f64>::new(cfg).unwrap();
    let att = model.predict(&EncoderInput::single(&[7, 9, 7])).unwrap().attention.unwrap();
    for l in 0..5 {
        assert!((att[[l, 0]] - att[[l, 2]]).abs() < 1e-12);
    }
}

#[test]
fn lora_init_preserves_function_and_merge_agrees() {
    let base = Model::<f32>::new(small(HeadKind::LabelAttention)).unwrap();
    let mut adapted = base.clone();
    adapted.inject_lora(4, &LoraTarget::ALL, 5).unwrap();
    assert!(matches!(adapted.inject_lora(4, &LoraTarget::ALL, 5), Err(Error::State(_))));
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let input = EncoderInput::single(&random_ids(&mut rng, 10, 40));
    assert_eq!(base.predict(&input).unwrap().logits, adapted.predict(&input).unwrap().logits);

    let mut merged_zero = adapted.clone();
    merged_zero.merge_lora().unwrap();
    assert_eq!(merged_zero.params, base.params);

    for p in adapted.params.iter_mut().filter(|p| p.name.contains("lora")) {
        p.value.mapv_inplace(|_| rng.random_range(-0.2..0.2));
    }
    let mut merged = adapted.clone();
    merged.merge_lora().unwrap();
    assert!(!merged.is_adapted());
    assert!(matches!(merged.merge_lora(), Err(Error::State(_))));
    let mut worst = 0.0f32;
    for _ in 0..100 {
        let n = rng.random_range(1..20);
        let input = EncoderInput::single(&random_ids(&mut rng, n, 40));
        let a = adapted.predict(&input).unwrap().logits;
        let m = merged.predict(&input).unwrap().logits;
        for (x, y) in a.iter().zip(&m) {
            worst = worst.max((x - y).abs());
        }
    }
    assert!(worst < 1e-6, "{worst}");
    assert!(matches!(base.clone().merge_lora(), Err(Error::State(_))));
}

#[test]
fn parameter_counts_match_closed_form() {
    // one layer, d=8, ff=16, vocab 10, positions 6, linear pooled head
    let cfg = ModelConfig {
        vocab_size: 10,
        hidden: 8,
        layers: 1,
        heads: 2,
        ff_dim: 16,
        max_positions: 6,
        ..ModelConfig::default()
    };
    let d = 8;
    let model = Model::<f32>::new(cfg).unwrap();
    let per_layer = 4 * (d * d + d) + 2 * (2 * d) + (d * 16 + 16) + (16 * d + d);
    let head = d * 5 + 5;
    let expect = 10 * d + 6 * d + per_layer + 2 * d + head;
    let c = model.count_parameters();
    assert_eq!(c.total, expect);
    assert_eq!(c.trainable, c.total);

    let cfg = ModelConfig { hidden: 128, layers: 4, heads: 4, ff_dim: 512, ..ModelConfig::default() };
    let mut m = Model::<f32>::new(cfg).unwrap();
    let before = m.count_parameters().total;
    m.inject_lora(8, &LoraTarget::ALL, 0).unwrap();
    let c = m.count_parameters();
    assert_eq!(c.trainable, 2 * 8 * 128 * 3 * 4 + (128 * 5 + 5));
    assert_eq!(c.total, before + 2 * 8 * 128 * 3 * 4);
}

#[test]
fn frozen_model_has_no_gradients() {
    let mut model = Model::<f32>::new(small(HeadKind::PooledMlp)).unwrap();
    model.set_all_trainable(false);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (_, grads) = triage_core::train::batch_gradients(&model, &examples(&mut rng, 40), None).unwrap();
    assert_eq!(grads.tracked(), 0);
}

#[test]
fn training_mode_dropout_is_seeded() {
    let mut cfg = small(HeadKind::PooledMlp);
    cfg.dropout = 0.3;
    let model = Model::<f32>::new(cfg).unwrap();
    let input = EncoderInput::single(&[4, 5, 6, 7]);
    let a = model.forward(&input, Mode::Train { dropout_seed: 1 }).unwrap().logits;
    let b = model.forward(&input, Mode::Train { dropout_seed: 1 }).unwrap().logits;
    let c = model.forward(&input, Mode::Train { dropout_seed: 2 }).unwrap().logits;
    assert_eq!(a, b);
    assert_ne!(a, c);
    assert_eq!(model.predict(&input).unwrap().logits, model.predict(&input).unwrap().logits);
}

#[test]
fn checkpoint_round_trip() {
    let mut model = Model::<f32>::new(small(HeadKind::LabelAttention)).unwrap();
    model.inject_lora(2, &[LoraTarget::Query, LoraTarget::Value], 1).unwrap();
    let ck = Checkpoint::new(model.clone(), "abc123", serde_json::json!({"strategy": "segment_batch"}));
    let mut buf = Vec::new();
    ck.write_to(&mut buf).unwrap();
    let back = Checkpoint::read_from(buf.as_slice()).unwrap();
    assert_eq!(back.model, model);
    assert_eq!(back.header.tokenizer_hash, "abc123");
    assert_eq!(back.header.metadata["strategy"], "segment_batch");
    assert!(Checkpoint::read_from(&buf[..10]).is_err());
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(Checkpoint::read_from(bad.as_slice()), Err(Error::Format(_))));
}

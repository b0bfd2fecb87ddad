use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_core::model::{EncoderInput, HeadKind, Model, ModelConfig};
use triage_core::train::{
    batch_gradients, cross_entropy, fit, fit_with, AdamW, TrainConfig, TrainExample,
};
use triage_core::Error;

fn cfg() -> ModelConfig {
    ModelConfig {
        vocab_size: 30,
        hidden: 16,
        layers: 1,
        heads: 2,
        ff_dim: 16,
        max_positions: 16,
        dropout: 0.0,
        head_kind: HeadKind::PooledMlp,
        ..ModelConfig::default()
    }
}

/// Two classes told apart by which half of the vocabulary they use.
fn toy(n: usize, seed: u64) -> Vec<TrainExample> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let label = i % 2;
            let lo = if label == 0 { 4 } else { 17 };
            let ids: Vec<u32> = std::iter::once(2).chain((0..6).map(|_| rng.random_range(lo..lo + 13))).collect();
            TrainExample { id: format!("t{i}"), input: EncoderInput::single(&ids), label }
        })
        .collect()
}

fn head_only(mut m: Model<f32>) -> Model<f32> {
    for p in m.params.iter_mut() {
        p.trainable = p.name.starts_with("head.");
    }
    m
}

#[test]
fn zero_head_gradient_matches_softmax_regression() {
    let mut model = Model::<f64>::new(ModelConfig { head_kind: HeadKind::PooledMlp, ..cfg() }).unwrap();
    model.zero_head();
    let batch = toy(1, 3);
    let e = model.predict(&batch[0].input).unwrap().pooled.unwrap();
    let (_, grads) = batch_gradients(&model, &batch, None).unwrap();
    let w = model.params.find("head.out.weight").unwrap();
    let b = model.params.find("head.out.bias").unwrap();
    let g = grads.get(w).unwrap();
    for k in 0..5 {
        let resid = 0.2 - if k == batch[0].label { 1.0 } else { 0.0 };
        assert!((grads.get(b).unwrap()[[0, k]] - resid).abs() < 1e-12);
        for j in 0..16 {
            assert!((g[[j, k]] - e[j] * resid).abs() < 1e-12);
        }
    }
}

#[test]
fn duplicated_example_keeps_the_gradient() {
    let model = Model::<f64>::new(cfg()).unwrap();
    let one = toy(1, 4);
    let two = vec![one[0].clone(), one[0].clone()];
    let (l1, g1) = batch_gradients(&model, &one, None).unwrap();
    let (l2, g2) = batch_gradients(&model, &two, None).unwrap();
    assert!((l1 - l2).abs() < 1e-12);
    for ((_, a), (_, b)) in g1.iter().zip(g2.iter()) {
        assert!((a - b).mapv(f64::abs).fold(0.0f64, |x, &y| x.max(y)) < 1e-12);
    }
}

#[test]
fn loss_falls_monotonically_on_separable_toy() {
    let mut model = Model::<f32>::new(cfg()).unwrap();
    let data = toy(16, 5);
    let mut opt = AdamW::new(0.9, 0.999, 1e-8, 0.01);
    let mut last = f32::INFINITY;
    for step in 0..10 {
        let (loss, grads) = batch_gradients(&model, &data, None).unwrap();
        assert!(loss < last, "step {step}: {loss} >= {last}");
        last = loss;
        opt.step(&mut model.params, &grads, 1e-3).unwrap();
    }
}

#[test]
fn accumulation_matches_larger_batch_on_convex_head() {
    let base = head_only(Model::<f32>::new(cfg()).unwrap());
    let data = toy(16, 6);
    let eval = toy(4, 7);
    let a = TrainConfig {
        batch_size: 8,
        gradient_accumulation_steps: 2,
        max_epochs: 1,
        learning_rate: 1e-2,
        warmup_fraction: 0.0,
        ..TrainConfig::default()
    };
    let b = TrainConfig { batch_size: 16, gradient_accumulation_steps: 1, ..a.clone() };
    let ra = fit(base.clone(), &data, &eval, &a).unwrap();
    let rb = fit(base, &data, &eval, &b).unwrap();
    assert_eq!(ra.optimizer_steps, 1);
    assert_eq!(rb.optimizer_steps, 1);
    for (x, y) in ra.model.params.iter().zip(rb.model.params.iter()) {
        let d = (&x.value - &y.value).mapv(f32::abs).fold(0.0f32, |p, &q| p.max(q));
        assert!(d < 1e-6, "{}: {d}", x.name);
    }
}

#[test]
fn fixed_seed_reproduces_history() {
    let mut c = cfg();
    c.dropout = 0.1;
    let data = toy(24, 8);
    let eval = toy(8, 9);
    let tc = TrainConfig { batch_size: 4, max_epochs: 3, learning_rate: 1e-3, seed: 11, ..TrainConfig::default() };
    let r1 = fit(Model::new(c.clone()).unwrap(), &data, &eval, &tc).unwrap();
    let r2 = fit(Model::new(c).unwrap(), &data, &eval, &tc).unwrap();
    assert_eq!(r1.history, r2.history);
    assert_eq!(r1.model.params, r2.model.params);
    assert_eq!(r1.log().lines().count(), r1.history.len());
    assert!(r1.log().starts_with("epoch=1 step="));
}

#[test]
fn early_stopping_returns_best_epoch_weights() {
    let data = toy(8, 10);
    let scores = [0.5, 0.6, 0.59, 0.58, 0.57, 0.9, 0.9];
    let seen = RefCell::new(Vec::new());
    let tc = TrainConfig { batch_size: 4, max_epochs: 7, learning_rate: 1e-3, ..TrainConfig::default() };
    let r = fit_with(Model::new(cfg()).unwrap(), &data, &tc, |m| {
        let mut s = seen.borrow_mut();
        s.push(m.clone());
        Ok(scores[s.len() - 1])
    })
    .unwrap();
    assert!(r.stopped_early);
    assert_eq!(r.history.len(), 5);
    assert_eq!(r.best_epoch, 2);
    assert_eq!(r.best_f1, 0.6);
    assert_eq!(r.model.params, seen.borrow()[1].params);
    // every returned checkpoint scored at least as well as any later epoch
    assert!(r.history[2..].iter().all(|h| h.eval_macro_f1 <= r.best_f1));
}

#[test]
fn step_bookkeeping() {
    let data = toy(32, 12);
    let tc = TrainConfig {
        batch_size: 4,
        gradient_accumulation_steps: 2,
        max_epochs: 2,
        patience: 5,
        ..TrainConfig::default()
    };
    let r = fit_with(Model::new(cfg()).unwrap(), &data, &tc, |_| Ok(0.5)).unwrap();
    assert_eq!(r.optimizer_steps * tc.gradient_accumulation_steps, r.micro_batches);
    assert_eq!(r.micro_batches, 2 * data.len() / tc.batch_size);
}

#[test]
fn errors() {
    let tc = TrainConfig::default();
    let m = Model::<f32>::new(cfg()).unwrap();
    assert!(matches!(fit(m.clone(), &[], &toy(2, 0), &tc), Err(Error::Argument(_))));
    assert!(matches!(fit(m.clone(), &toy(2, 0), &[], &tc), Err(Error::Argument(_))));

    let mut broken = m;
    let w = broken.params.find("head.out.weight").unwrap();
    broken.params.get_mut(w)[[0, 0]] = f32::NAN;
    match fit(broken, &toy(4, 1), &toy(2, 2), &tc) {
        Err(Error::NonFiniteLoss { batch }) => assert!(batch.contains("epoch 1 step 1"), "{batch}"),
        other => panic!("{other:?}"),
    }
    assert!(matches!(cross_entropy(&[0.0f32; 5], 7), Err(Error::Argument(_))));
}

//! Acceptance suite: one PASS/FAIL line per primary criterion.
//!
//! Everything runs inside a single test so timings are not disturbed by
//! other tests sharing the machine. Lines go straight to stderr, past the
//! harness's output capture.

use std::io::Write;
use std::time::Instant;

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use ndarray::NdFloat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use triage_core::corpus::lexicon::lexicon_team;
use triage_core::corpus::{
    generate_corpus, label_acceptance, split_by_patient, Acceptance, AuthorRole, ClinicalDocument, DocCategory,
    Instance,
};
use triage_core::eval::{compute_metrics, MetricsReport, WallTimer};
use triage_core::explain::explain_instance;
use triage_core::model::{EncoderInput, HeadKind, LoraTarget, Model, ModelConfig};
use triage_core::pipeline::{bench_strategy, evaluate_strategy, train_strategy, EvalOutcome, ExperimentConfig, SpeedRow};
use triage_core::strategy::Strategy;
use triage_core::text::{segment, train_tokenizer, TokenSequence, Tokenizer};
use triage_core::train::{grad_check, TrainExample};
use triage_core::TeamLabel;

const SEEDS: [u64; 3] = [1, 2, 3];

fn say(line: &str) {
    let mut err = std::io::stderr().lock();
    let _ = writeln!(err, "{line}");
}

struct Verdicts {
    failed: Vec<String>,
}

impl Verdicts {
    fn check(&mut self, name: &str, pass: bool, detail: String) {
        say(&format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
        if !pass {
            self.failed.push(name.to_string());
        }
    }
}

fn random_ids(rng: &mut ChaCha8Rng, n: usize, vocab: usize) -> Vec<u32> {
    (0..n).map(|_| rng.random_range(4..vocab as u32)).collect()
}

fn gradient_correctness(v: &mut Verdicts) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut worst: f64 = 0.0;
    let mut tensors = 0;
    let mut coords = 0;
    let mut all_covered = true;
    for head in [HeadKind::PooledMlp, HeadKind::LabelAttention] {
        let cfg = ModelConfig {
            vocab_size: 40,
            hidden: 16,
            layers: 2,
            heads: 2,
            ff_dim: 24,
            max_positions: 16,
            dropout: 0.1,
            head_kind: head,
            pooled_hidden: Some(8),
            ..ModelConfig::default()
        };
        let batch: Vec<TrainExample> = (0..3)
            .map(|i| {
                let ids = random_ids(&mut rng, 6 + 2 * i, 40);
                TrainExample { id: format!("g{i}"), input: EncoderInput::padded(&ids, 12, 0), label: (2 * i) % 5 }
            })
            .collect();
        let base = Model::<f64>::new(cfg).unwrap();
        let mut adapted = base.clone();
        adapted.inject_lora(4, &LoraTarget::ALL, 5).unwrap();
        for p in adapted.params.iter_mut().filter(|p| p.name.ends_with("lora_b")) {
            p.value.mapv_inplace(|_| rng.random_range(-0.1..0.1));
        }
        for model in [&base, &adapted] {
            let report = grad_check(model, &batch, 1e-5, 400, 21).unwrap();
            let trainable = model.params.iter().filter(|p| p.trainable).count();
            all_covered &= report.per_tensor.len() == trainable;
            worst = worst.max(report.max_rel_error);
            tensors += report.per_tensor.len();
            coords += report.checked;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    v.check(
        "gradient correctness",
        worst < 1e-4 && secs < 60.0 && all_covered,
        format!(
            "max relative error {worst:.2e} (< 1e-4) over {coords} coordinates in {tensors} tensors incl. LoRA and label attention, {secs:.1}s (< 60s)"
        ),
    );
}

/// Trainable parameters after rank-`r` adapters on query, key and value,
/// written out from the layer shapes.
fn lora_trainable_closed_form(cfg: &ModelConfig, r: usize) -> usize {
    let d = cfg.hidden;
    let t = cfg.num_labels;
    let adapters = cfg.layers * 3 * (r * d + d * r);
    let head = match cfg.head_kind {
        HeadKind::LabelAttention => t * d + t * d + t,
        HeadKind::PooledMlp => match cfg.pooled_hidden {
            Some(h) => d * h + h + h * t + t,
            None => d * t + t,
        },
    };
    adapters + head
}

/// Largest logit difference between adapter forward and merged weights.
fn merge_gap<F: NdFloat + Into<f64>>(adapted: &Model<F>, inputs: &[EncoderInput]) -> f64 {
    let mut merged = adapted.clone();
    merged.merge_lora().unwrap();
    let mut worst: f64 = 0.0;
    for x in inputs {
        let a = adapted.predict(x).unwrap().logits;
        let m = merged.predict(x).unwrap().logits;
        for (p, q) in a.iter().zip(m.iter()) {
            worst = worst.max(((*p).into() - (*q).into()).abs());
        }
    }
    worst
}

fn lora_contracts(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let cfg = ModelConfig {
        vocab_size: 300,
        hidden: 32,
        layers: 2,
        heads: 2,
        ff_dim: 64,
        max_positions: 64,
        head_kind: HeadKind::LabelAttention,
        ..ModelConfig::default()
    };
    let base = Model::<f32>::new(cfg.clone()).unwrap();
    let mut adapted = base.clone();
    adapted.inject_lora(8, &LoraTarget::ALL, 3).unwrap();
    let inputs: Vec<EncoderInput> = (0..100)
        .map(|_| {
            let n = rng.random_range(1..=64);
            EncoderInput::single(&random_ids(&mut rng, n, 300))
        })
        .collect();
    let identical = inputs.iter().all(|x| base.predict(x).unwrap().logits == adapted.predict(x).unwrap().logits);
    v.check("LoRA (a) fresh adapters preserve outputs", identical, "logits bit-identical on 100 inputs with B = 0".into());

    for p in adapted.params.iter_mut().filter(|p| p.name.ends_with("lora_b")) {
        p.value.mapv_inplace(|_| rng.random_range(-0.2..0.2));
    }
    // The identity is checked in 64-bit arithmetic; the 32-bit figure shows
    // the rounding floor of the served precision.
    let exact_diff = merge_gap(&adapted.cast::<f64>(), &inputs);
    let f32_diff = merge_gap(&adapted, &inputs);
    v.check(
        "LoRA (b) merged weights match adapter forward",
        exact_diff < 1e-6,
        format!("max abs logit difference {exact_diff:.2e} (< 1e-6) over 100 inputs in f64 ({f32_diff:.2e} in f32)"),
    );
    let mut exact = true;
    let mut detail = Vec::new();
    for (cfg, r) in [
        (cfg.clone(), 8),
        (ModelConfig::default(), 8),
        (ModelConfig { head_kind: HeadKind::LabelAttention, layers: 3, ..ModelConfig::default() }, 4),
        (ModelConfig { pooled_hidden: Some(32), ..ModelConfig::default() }, 16),
    ] {
        let mut m = Model::<f32>::new(cfg.clone()).unwrap();
        m.inject_lora(r, &LoraTarget::ALL, 0).unwrap();
        let got = m.count_parameters().trainable;
        let want = lora_trainable_closed_form(&cfg, r);
        exact &= got == want;
        detail.push(format!("{got}={want}"));
    }
    v.check("LoRA (c) trainable count matches closed form", exact, detail.join(", "));
}

fn segmentation_round_trip(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut ok = 0;
    for s in [128, 256, 512] {
        for _ in 0..1000 {
            let n = rng.random_range(1..=3000);
            let seq = TokenSequence::new(random_ids(&mut rng, n, 8000));
            let batch = segment(&seq, s, 1).unwrap();
            if batch.desegment() == seq {
                ok += 1;
            }
        }
    }
    v.check("segmentation round trip", ok == 3000, format!("{ok}/3000 exact (1000 sequences x s in 128, 256, 512)"));
}

/// Day-by-day reading of the 14-day rule, written without date ranges.
fn acceptance_oracle(referral: NaiveDate, notes: &[NaiveDate], discharge: Option<NaiveDate>, extraction: NaiveDate) -> Acceptance {
    let mut observed_days = 0;
    let mut day = referral;
    while day < extraction {
        observed_days += 1;
        day = day.succ_opt().unwrap();
    }
    if observed_days < 14 {
        return Acceptance::Censored;
    }
    let mut activity = false;
    let mut discharged_in_window = false;
    let mut day = referral;
    for offset in 0..=14 {
        if offset > 0 && notes.contains(&day) {
            activity = true;
        }
        if discharge == Some(day) {
            discharged_in_window = true;
        }
        day = day.succ_opt().unwrap();
    }
    if activity || !discharged_in_window {
        Acceptance::Accepted
    } else {
        Acceptance::NotAccepted
    }
}

fn heuristic_labeling(v: &mut Verdicts) {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let origin = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
    let mut agree = 0;
    let mut censored = 0;
    for k in 0..1000 {
        let referral = origin + Duration::days(rng.random_range(0..700));
        let extraction = referral + Duration::days(rng.random_range(0..60));
        let discharge = rng.random_bool(0.7).then(|| referral + Duration::days(rng.random_range(0..40)));
        let notes: Vec<NaiveDate> = (0..rng.random_range(0..6))
            .map(|_| referral + Duration::days(rng.random_range(-10..30)))
            .filter(|d| *d <= extraction)
            .collect();
        let documents = notes
            .iter()
            .enumerate()
            .map(|(j, d)| ClinicalDocument {
                doc_id: format!("t{k}-d{j}"),
                timestamp: Utc.from_utc_datetime(&d.and_hms_opt(rng.random_range(0..24), 30, 0).unwrap()),
                author_role: AuthorRole::Nurse,
                category: DocCategory::Contact,
                text: "seen today".into(),
            })
            .collect();
        let inst = Instance {
            instance_id: format!("t{k}"),
            patient_id: format!("p{k}"),
            referral_date: referral,
            discharge_date: discharge,
            acceptance: Acceptance::Censored,
            label: None,
            referred_team: None,
            documents,
        };
        let want = acceptance_oracle(referral, &notes, discharge, extraction);
        censored += usize::from(want == Acceptance::Censored);
        if label_acceptance(&inst, extraction).unwrap().status == want {
            agree += 1;
        }
    }
    v.check(
        "heuristic labeling",
        agree == 1000,
        format!("{agree}/1000 timelines agree with the day-by-day oracle ({censored} censored)"),
    );
}

fn teams(ix: &[usize]) -> Vec<TeamLabel> {
    ix.iter().map(|&i| TeamLabel::from_index(i).unwrap()).collect()
}

fn metrics_oracle(v: &mut Verdicts) {
    // (gold, predicted, accuracy, macro P, macro R, macro F1, weighted F1), by hand.
    let scenarios: [(&[usize], &[usize], [f64; 5]); 5] = [
        (&[0, 1, 2, 3, 4], &[0, 1, 2, 3, 4], [1.0, 1.0, 1.0, 1.0, 1.0]),
        (&[0, 0, 1, 1], &[0, 0, 0, 0], [0.5, 0.25, 0.5, 1.0 / 3.0, 1.0 / 3.0]),
        (&[0, 0, 0, 1, 1, 2], &[0, 0, 1, 1, 2, 2], [2.0 / 3.0, 2.0 / 3.0, 13.0 / 18.0, 59.0 / 90.0, 61.0 / 90.0]),
        (&[0, 1, 2, 3, 4, 0, 1, 2, 3, 4], &[1, 2, 3, 4, 0, 0, 1, 2, 3, 4], [0.5, 0.5, 0.5, 0.5, 0.5]),
        (&[0, 0, 1], &[0, 2, 1], [2.0 / 3.0, 2.0 / 3.0, 0.5, 5.0 / 9.0, 7.0 / 9.0]),
    ];
    let mut worst: f64 = 0.0;
    for (gold, pred, want) in scenarios {
        let m: MetricsReport = compute_metrics(&teams(pred), &teams(gold)).unwrap();
        let got = [m.accuracy, m.macro_precision, m.macro_recall, m.macro_f1, m.weighted_f1];
        for (g, w) in got.iter().zip(want) {
            worst = worst.max((g - w).abs());
        }
        // micro F1 equals accuracy for single-label data
        worst = worst.max((m.micro_f1 - want[0]).abs());
    }
    v.check("metrics oracle", worst <= 1e-12, format!("max deviation {worst:.1e} (<= 1e-12) over 5 scenarios"));
}

struct SeedRun {
    seed: u64,
    tokenizer: Tokenizer,
    eval: Vec<Instance>,
    outcomes: Vec<EvalOutcome>,
    seg: Model<f32>,
    concat: Model<f32>,
    brute: Model<f32>,
    cfg: ExperimentConfig,
    train: Vec<Instance>,
}

impl SeedRun {
    fn outcome(&self, s: Strategy) -> &EvalOutcome {
        self.outcomes.iter().find(|o| o.strategy == s).unwrap()
    }

    fn f1(&self, s: Strategy) -> f64 {
        self.outcome(s).report().unwrap().metrics.macro_f1
    }
}

fn run_seed(seed: u64) -> SeedRun {
    let cfg = ExperimentConfig::desk_scale(seed);
    let corpus = generate_corpus(&cfg.corpus).unwrap();
    let labelled: Vec<Instance> = corpus.labeled().cloned().collect();
    let split = split_by_patient(&labelled, cfg.eval_fraction, seed);
    let tokenizer = train_tokenizer(&split.train, cfg.vocab_size).unwrap();
    let brute = train_strategy(Strategy::BruteForce, &split.train, &split.eval, &tokenizer, &cfg, None).unwrap().model;
    let concat = train_strategy(Strategy::Concat512, &split.train, &split.eval, &tokenizer, &cfg, Some(&brute)).unwrap().model;
    let seg = train_strategy(Strategy::SegmentBatch, &split.train, &split.eval, &tokenizer, &cfg, Some(&brute)).unwrap().model;
    let outcomes = [(Strategy::BruteForce, &brute), (Strategy::Concat512, &concat), (Strategy::SegmentBatch, &seg)]
        .into_iter()
        .map(|(s, m)| evaluate_strategy(s, m, &tokenizer, &split.eval, &cfg.strategy).unwrap())
        .collect();
    say(&format!(
        "  seed {seed}: {} instances, {} labelled, {} eval",
        corpus.instances.len(),
        labelled.len(),
        split.eval.len()
    ));
    SeedRun { seed, tokenizer, eval: split.eval, outcomes, seg, concat, brute, cfg, train: split.train }
}

fn trend(v: &mut Verdicts) -> Vec<SeedRun> {
    let start = Instant::now();
    let runs: Vec<SeedRun> = SEEDS.iter().map(|&s| run_seed(s)).collect();
    let secs = start.elapsed().as_secs_f64();
    let mut ordered = 0;
    let mut lines = Vec::new();
    for r in &runs {
        let (b, c, s) = (r.f1(Strategy::BruteForce), r.f1(Strategy::Concat512), r.f1(Strategy::SegmentBatch));
        ordered += usize::from(s > c && c > b);
        lines.push(format!("seed {}: seg {s:.3} > concat {c:.3} > brute {b:.3}", r.seed));
    }
    let seg_min = runs.iter().map(|r| r.f1(Strategy::SegmentBatch)).fold(f64::INFINITY, f64::min);
    v.check(
        "trend ordering segment_batch > concat_512 > brute_force",
        ordered >= 2,
        format!("{ordered}/3 seeds ordered (need 2); {}", lines.join("; ")),
    );
    v.check("segment_batch macro F1 >= 0.90", seg_min >= 0.90, format!("lowest over seeds {seg_min:.3}"));
    v.check("trend runtime < 30 min", secs < 1800.0, format!("{:.1} min for 3 seeds", secs / 60.0));
    runs
}

fn extra_long_gap(v: &mut Verdicts, runs: &[SeedRun]) {
    let pooled = |s: Strategy| {
        let (mut pred, mut gold) = (Vec::new(), Vec::new());
        for r in runs {
            let long = r.outcome(s).filter(|i| r.outcome(s).lengths[i] > 4096);
            pred.extend(long.predictions);
            gold.extend(long.gold);
        }
        (compute_metrics(&pred, &gold).unwrap().macro_f1, gold.len())
    };
    let (seg, n) = pooled(Strategy::SegmentBatch);
    let (concat, _) = pooled(Strategy::Concat512);
    v.check(
        "extra_long gap segment_batch - concat_512 >= 0.05",
        seg - concat >= 0.05,
        format!("{seg:.3} - {concat:.3} = {:.3} on {n} eval instances over 4096 tokens, pooled over seeds", seg - concat),
    );
}

fn lora_degradation(v: &mut Verdicts, run: &SeedRun) {
    let cfg = ExperimentConfig { lora_rank: Some(8), ..run.cfg.clone() };
    let trained = train_strategy(Strategy::SegmentBatch, &run.train, &run.eval, &run.tokenizer, &cfg, Some(&run.brute)).unwrap();
    let mut merged = trained.model;
    merged.merge_lora().unwrap();
    let lora = evaluate_strategy(Strategy::SegmentBatch, &merged, &run.tokenizer, &run.eval, &cfg.strategy)
        .unwrap()
        .report()
        .unwrap()
        .metrics
        .macro_f1;
    let full = run.f1(Strategy::SegmentBatch);
    v.check(
        "LoRA rank-8 degradation <= 0.03",
        full - lora <= 0.03,
        format!("full {full:.3}, LoRA {lora:.3}, loss {:.3} (seed {})", full - lora, run.seed),
    );
}

fn speed_ordering(v: &mut Verdicts, run: &SeedRun) {
    let instances: Vec<Instance> = run.eval.iter().filter(|i| i.documents.len() >= 2).take(100).cloned().collect();
    let mut rows: Vec<SpeedRow> = Vec::new();
    for (s, m) in [(Strategy::Concat512, &run.concat), (Strategy::SegmentBatch, &run.seg), (Strategy::BruteForce, &run.brute)] {
        let mut timer = WallTimer::default();
        rows.push(bench_strategy(s, m, &run.tokenizer, &instances, 3, &run.cfg.strategy, &mut timer).unwrap());
    }
    let mean = |i: usize| rows[i].per_instance_mean();
    let detail = rows
        .iter()
        .map(|r| format!("{} {:.2} ± {:.2} ms", r.strategy.name(), 1e3 * r.per_instance_mean(), 1e3 * r.per_instance_sd()))
        .collect::<Vec<_>>()
        .join(", ");
    v.check(
        "speed ordering concat_512 < segment_batch < brute_force",
        instances.len() == 100 && mean(0) < mean(1) && mean(1) < mean(2),
        format!("{} multi-document instances, 3 repetitions, per-instance mean ± SD: {detail}", instances.len()),
    );
}

/// Whole word around a char span of cleaned text.
fn word_at(chars: &[char], start: usize, end: usize) -> String {
    let part = |c: &char| c.is_alphanumeric() || *c == '-';
    let mut a = start.min(chars.len());
    while a > 0 && part(&chars[a - 1]) {
        a -= 1;
    }
    let mut b = end.min(chars.len());
    while b < chars.len() && part(&chars[b]) {
        b += 1;
    }
    chars[a..b].iter().collect()
}

fn explanations(v: &mut Verdicts, runs: &[SeedRun]) {
    let mut worst_sum: f64 = 0.0;
    let mut checked = 0;
    let mut wins = 0;
    let mut lines = Vec::new();
    for r in runs {
        let (mut sig, mut sig_n, mut fill, mut fill_n) = (0.0, 0usize, 0.0, 0usize);
        for inst in r.eval.iter().filter(|i| i.label.is_some()) {
            let b = explain_instance(inst, &r.seg, &r.tokenizer, &r.cfg.strategy, None).unwrap();
            worst_sum = worst_sum.max((b.attention.iter().sum::<f64>() - 1.0).abs());
            checked += 1;
            let texts: Vec<Vec<char>> = b.documents.iter().map(|d| d.text.chars().collect()).collect();
            for s in &b.spans {
                if lexicon_team(&word_at(&texts[s.doc_index], s.start, s.end)).is_some() {
                    sig += s.weight;
                    sig_n += 1;
                } else {
                    fill += s.weight;
                    fill_n += 1;
                }
            }
        }
        let (ms, mf) = (sig / sig_n.max(1) as f64, fill / fill_n.max(1) as f64);
        wins += usize::from(ms > mf);
        lines.push(format!("seed {}: signal {ms:.2e} vs filler {mf:.2e}", r.seed));
    }
    v.check(
        "explanation weights sum to 1",
        worst_sum <= 1e-6,
        format!("max |sum - 1| = {worst_sum:.1e} (<= 1e-6) over {checked} instances"),
    );
    v.check(
        "planted-signal attention above filler",
        wins >= 2,
        format!("{wins}/3 seeds (need 2); {}", lines.join("; ")),
    );
}

#[test]
fn primary_criteria() {
    let mut v = Verdicts { failed: Vec::new() };
    gradient_correctness(&mut v);
    lora_contracts(&mut v);
    segmentation_round_trip(&mut v);
    heuristic_labeling(&mut v);
    metrics_oracle(&mut v);
    let runs = trend(&mut v);
    extra_long_gap(&mut v, &runs);
    lora_degradation(&mut v, &runs[0]);
    speed_ordering(&mut v, &runs[0]);
    explanations(&mut v, &runs);
    assert!(v.failed.is_empty(), "failed criteria: {:?}", v.failed);
}

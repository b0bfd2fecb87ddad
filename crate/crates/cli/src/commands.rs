use std::path::Path;
use std::sync::Arc;

use serde_json::json;
use triage_core::corpus::{
    corpus_stats, generate_corpus, read_corpus, split_by_patient, write_corpus, Instance, SignalPosition, Split,
};
use triage_core::eval::{metrics_csv, metrics_table, strata_table, MethodReport, WallTimer};
use triage_core::explain::{embed_training_set, explain_instance, fit_projection, ProjectionMap, ProjectionMethod, TsneConfig};
use triage_core::model::{load_checkpoint, save_checkpoint, Checkpoint};
use triage_core::pipeline::{bench_strategy, evaluate_strategy, speed_table, train_strategy, ExperimentConfig};
use triage_core::strategy::Strategy;
use triage_core::text::{train_tokenizer, PreTokenCount, Tokenizer};
use triage_core::TeamLabel;
use triage_service::{AppState, Artifacts, ServedModel, META_STRATEGY, META_STRATEGY_CONFIG};

use crate::manifest::Provenance;
use crate::{Cli, CliError, Command, Common, MethodArg, SplitArg, StrategyArg};

impl From<StrategyArg> for Strategy {
    fn from(s: StrategyArg) -> Self {
        match s {
            StrategyArg::BruteForce => Strategy::BruteForce,
            StrategyArg::Concat512 => Strategy::Concat512,
            StrategyArg::Concat4096 => Strategy::Concat4096,
            StrategyArg::SegmentBatch => Strategy::SegmentBatch,
        }
    }
}

/// Config file (or the desk-scale defaults) with `--seed` applied.
fn experiment_config(common: &Common) -> Result<ExperimentConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
            ExperimentConfig::from_toml(&text)?
        }
        None => ExperimentConfig::desk_scale(common.seed.unwrap_or(0)),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
        cfg.corpus.seed = seed;
    }
    Ok(cfg)
}

fn write_file(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).map_err(triage_core::Error::from)?;
    write_file(path, text + "\n")
}

/// Patient-disjoint split of the whole corpus, so every command sees the
/// same partition for a given seed.
fn split(instances: &[Instance], cfg: &ExperimentConfig) -> Split {
    split_by_patient(instances, cfg.eval_fraction, cfg.seed)
}

fn labelled(instances: &[Instance]) -> Vec<Instance> {
    instances.iter().filter(|i| i.label.is_some()).cloned().collect()
}

fn select(instances: &[Instance], which: SplitArg, cfg: &ExperimentConfig) -> Vec<Instance> {
    let s = split(instances, cfg);
    match which {
        SplitArg::Train => s.train,
        SplitArg::Eval => s.eval,
        SplitArg::All => instances.to_vec(),
    }
}

fn load_models(paths: &[std::path::PathBuf], tok: &Tokenizer) -> Result<Vec<ServedModel>, CliError> {
    paths.iter().map(|p| ServedModel::load(p, tok).map_err(CliError::from)).collect()
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.common.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Input(e.to_string()))?;
    }
    let cfg = experiment_config(&cli.common)?;
    match cli.command {
        Command::Gen { patients, signal_position, noise_ratio, out, stats } => {
            let mut corpus_cfg = cfg.corpus.clone();
            if let Some(n) = patients {
                corpus_cfg.n_patients = n;
            }
            if let Some(p) = signal_position {
                corpus_cfg.signal_position = match p.as_str() {
                    "head" => SignalPosition::Head,
                    "tail" => SignalPosition::Tail,
                    _ => SignalPosition::Uniform,
                };
            }
            if let Some(r) = noise_ratio {
                corpus_cfg.noise_ratio = r;
            }
            let corpus = generate_corpus(&corpus_cfg)?;
            for w in &corpus.warnings {
                log::warn!("{w}");
            }
            write_corpus(&out, &corpus.instances)?;
            log::info!("wrote {} instances to {}", corpus.instances.len(), out.display());
            let mut outputs = vec![out.as_path()];
            if let Some(path) = &stats {
                write_json(path, &corpus_stats(&corpus.instances, &PreTokenCount)?)?;
                outputs.push(path);
            }
            Provenance::new("gen", corpus_cfg.seed).record(&outputs)
        }
        Command::Tokenizer { corpus, vocab_size, out } => {
            let instances = read_corpus(&corpus)?;
            let train = split(&instances, &cfg).train;
            let tok = train_tokenizer(&train, vocab_size.unwrap_or(cfg.vocab_size))?;
            tok.save(&out)?;
            log::info!("vocabulary of {} entries, hash {}", tok.vocab_size(), tok.hash());
            Provenance::new("tokenizer", cfg.seed).input(&corpus).record(&[&out])
        }
        Command::Train { corpus, tokenizer, strategy, chunk_size, lora_rank, init, epochs, out, log: log_path } => {
            let strategy = Strategy::from(strategy);
            let mut cfg = cfg;
            if let Some(s) = chunk_size {
                cfg.strategy.segment_size = s.parse().expect("validated by clap");
            }
            if lora_rank.is_some() {
                cfg.lora_rank = lora_rank;
            }
            if let Some(e) = epochs {
                cfg.document_training.max_epochs = e;
                cfg.instance_training.max_epochs = e;
            }
            if cfg.lora_rank.is_some() && strategy == Strategy::BruteForce {
                return Err(CliError::Input("--lora-rank applies to instance-level strategies only".into()));
            }
            let instances = read_corpus(&corpus)?;
            let tok = Tokenizer::load(&tokenizer)?;
            let base = init.as_deref().map(load_checkpoint).transpose()?;
            let s = split(&instances, &cfg);
            let trained = train_strategy(
                strategy,
                &labelled(&s.train),
                &labelled(&s.eval),
                &tok,
                &cfg,
                base.as_ref().map(|c| &c.model),
            )?;
            let log_text = trained.fit.log();
            eprint!("{log_text}");
            let meta = json!({
                META_STRATEGY: strategy.name(),
                META_STRATEGY_CONFIG: cfg.strategy,
                "seed": cfg.seed,
                "best_epoch": trained.fit.best_epoch,
                "best_eval_macro_f1": trained.fit.best_f1,
                "history": trained.fit.history,
            });
            save_checkpoint(&out, &Checkpoint::new(trained.model, tok.hash(), meta))?;
            let log_path = log_path.unwrap_or_else(|| {
                let mut p = out.clone().into_os_string();
                p.push(".log");
                p.into()
            });
            write_file(&log_path, log_text)?;
            let mut prov = Provenance::new("train", cfg.seed);
            prov.input(&corpus).input(&tokenizer);
            if let Some(p) = &init {
                prov.input(p);
            }
            prov.record(&[&out, &log_path])
        }
        Command::Eval { corpus, tokenizer, checkpoints, strategy, split: which, out, csv } => {
            let wanted: Option<Strategy> = match strategy.as_str() {
                "all" => None,
                s => Some(s.parse()?),
            };
            let instances = read_corpus(&corpus)?;
            let tok = Tokenizer::load(&tokenizer)?;
            let models = load_models(&checkpoints, &tok)?;
            let subset = labelled(&select(&instances, which, &cfg));
            let mut reports: Vec<MethodReport> = Vec::new();
            for m in models.iter().filter(|m| wanted.is_none_or(|w| w == m.strategy)) {
                let outcome = evaluate_strategy(m.strategy, &m.model, &tok, &subset, &m.strategy_config)?;
                for w in &outcome.warnings {
                    log::warn!("{w}");
                }
                reports.push(outcome.report()?);
            }
            if reports.is_empty() {
                return Err(CliError::Input(format!("no checkpoint serves strategy {strategy}")));
            }
            println!("{}", metrics_table(&reports));
            println!("Macro F1 by instance length (tokens)");
            println!("{}", strata_table(&reports));
            let mut prov = Provenance::new("eval", cfg.seed);
            prov.input(&corpus).input(&tokenizer);
            for c in &checkpoints {
                prov.input(c);
            }
            let mut outputs = Vec::new();
            if let Some(p) = &out {
                write_json(p, &reports)?;
                outputs.push(p.as_path());
            }
            if let Some(p) = &csv {
                write_file(p, metrics_csv(&reports))?;
                outputs.push(p.as_path());
            }
            prov.record(&outputs)
        }
        Command::Bench { corpus, tokenizer, checkpoints, instances: n, repetitions, min_documents, out } => {
            let instances = read_corpus(&corpus)?;
            let tok = Tokenizer::load(&tokenizer)?;
            let models = load_models(&checkpoints, &tok)?;
            let chosen: Vec<Instance> = split(&instances, &cfg)
                .eval
                .into_iter()
                .filter(|i| i.documents.len() >= min_documents.max(1))
                .take(n)
                .collect();
            if chosen.len() < n {
                log::warn!("only {} instances have at least {min_documents} documents", chosen.len());
            }
            let mut rows = Vec::new();
            for m in &models {
                let mut timer = WallTimer::default();
                rows.push(bench_strategy(m.strategy, &m.model, &tok, &chosen, repetitions, &m.strategy_config, &mut timer)?);
            }
            println!("{}", speed_table(&rows));
            let mut prov = Provenance::new("bench", cfg.seed);
            prov.input(&corpus).input(&tokenizer);
            match &out {
                Some(p) => {
                    write_json(p, &rows)?;
                    prov.record(&[p])
                }
                None => Ok(()),
            }
        }
        Command::Explain { corpus, tokenizer, checkpoint, instance_id, label, out } => {
            let instances = read_corpus(&corpus)?;
            let tok = Tokenizer::load(&tokenizer)?;
            let served = ServedModel::load(&checkpoint, &tok)?;
            let inst = instances
                .iter()
                .find(|i| i.instance_id == instance_id)
                .ok_or_else(|| CliError::Input(format!("unknown instance id {instance_id:?}")))?;
            let label = label.map(|l| l.parse::<TeamLabel>()).transpose()?;
            let bundle = explain_instance(inst, &served.model, &tok, &served.strategy_config, label)?;
            match &out {
                Some(p) => {
                    write_json(p, &bundle)?;
                    Provenance::new("explain", cfg.seed).input(&corpus).input(&tokenizer).input(&checkpoint).record(&[p])
                }
                None => {
                    println!("{}", serde_json::to_string_pretty(&bundle).map_err(triage_core::Error::from)?);
                    Ok(())
                }
            }
        }
        Command::Map { corpus, tokenizer, checkpoint, method, perplexity, iterations, out } => {
            let instances = read_corpus(&corpus)?;
            let tok = Tokenizer::load(&tokenizer)?;
            let served = ServedModel::load(&checkpoint, &tok)?;
            let train = labelled(&split(&instances, &cfg).train);
            let emb = embed_training_set(&train, &served.model, &tok, &served.strategy_config)?;
            let mut tsne = TsneConfig { seed: cfg.seed, ..TsneConfig::default() };
            if let Some(p) = perplexity {
                tsne.perplexity = p;
            }
            if let Some(i) = iterations {
                tsne.iterations = i;
            }
            let method = match method {
                MethodArg::Pca => ProjectionMethod::Pca,
                MethodArg::Tsne => ProjectionMethod::Tsne,
            };
            let map = fit_projection(&emb.vectors, &emb.instance_ids, &emb.labels, method, &tsne)?;
            write_json(&out, &map)?;
            Provenance::new("map", cfg.seed).input(&corpus).input(&tokenizer).input(&checkpoint).record(&[&out])
        }
        Command::Serve { corpus, tokenizer, checkpoints, map, addr } => {
            let instances = read_corpus(&corpus)?;
            let state = Arc::new(AppState::new(instances));
            let loader = state.clone();
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::Input(e.to_string()))?;
            runtime.block_on(async move {
                tokio::task::spawn_blocking(move || match load_artifacts(&tokenizer, &checkpoints, map.as_deref()) {
                    Ok(a) => {
                        loader.publish(a);
                        log::info!("models loaded");
                    }
                    Err(e) => log::error!("loading models failed: {e}"),
                });
                triage_service::serve(addr, state).await.map_err(|e| CliError::Input(format!("server: {e}")))
            })
        }
    }
}

fn load_artifacts(
    tokenizer: &Path,
    checkpoints: &[std::path::PathBuf],
    map: Option<&Path>,
) -> Result<Artifacts, CliError> {
    let tok = Tokenizer::load(tokenizer)?;
    let models = load_models(checkpoints, &tok)?;
    let map: Option<ProjectionMap> = match map {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?;
            Some(serde_json::from_str(&text).map_err(triage_core::Error::from)?)
        }
        None => None,
    };
    Ok(Artifacts::new(tok, models, map)?)
}

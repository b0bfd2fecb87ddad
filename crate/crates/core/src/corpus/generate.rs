use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, weighted::WeightedIndex};
use serde::{Deserialize, Serialize};

use super::lexicon::{self, FILLER, SUBJECTS, TIMES, VERBS};
use super::{
    label_acceptance, segment_history, Acceptance, AuthorRole, ClinicalDocument, CorpusConfig,
    DocCategory, Instance, PatientRecord, ReferralEvent, SignalPosition,
};
use crate::error::Result;
use crate::team::{TeamLabel, NUM_TEAMS};

const MIN_DOC_TOKENS: usize = 8;
const MAX_CHAIN: usize = 3;
const BOUNCE_GAP_DAYS: i64 = 29;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSummary {
    pub patient_id: String,
    pub referral_count: usize,
    /// Team whose lexicon drives the patient's notes.
    pub signal_team: TeamLabel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub config: CorpusConfig,
    pub instances: Vec<Instance>,
    pub patients: Vec<PatientSummary>,
    pub warnings: Vec<String>,
}

impl Corpus {
    pub fn from_instances(instances: Vec<Instance>) -> Corpus {
        Corpus { config: CorpusConfig::default(), instances, patients: Vec::new(), warnings: Vec::new() }
    }

    /// Instances with an accepted-team label.
    pub fn labeled(&self) -> impl Iterator<Item = &Instance> {
        self.instances.iter().filter(|i| i.label.is_some())
    }
}

/// Generates a synthetic corpus. Output is a pure function of `config`.
///
/// Each patient receives a first referral to a team drawn from
/// `team_priors`; onward referrals follow `bounce_matrix`. Every referral
/// before the last in a chain is bounced (no activity, early discharge);
/// the last is accepted with probability `accept_rate`. Notes across the
/// chain describe the last team's presentation, mixed with filler text.
pub fn generate_corpus(config: &CorpusConfig) -> Result<Corpus> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let gen = Generator::new(config)?;

    let mut instances = Vec::new();
    let mut patients = Vec::with_capacity(config.n_patients);
    let mut warnings = Vec::new();

    for p in 0..config.n_patients {
        let patient_id = format!("P{p:06}");
        let (record, signal_team) = gen.patient(&patient_id, &mut rng);
        let segmented = segment_history(&record);
        warnings.extend(segmented.warnings);
        patients.push(PatientSummary {
            patient_id,
            referral_count: segmented.instances.len(),
            signal_team,
        });
        for mut inst in segmented.instances {
            let decision = label_acceptance(&inst, config.extraction_date)?;
            inst.acceptance = decision.status;
            inst.label = match decision.status {
                Acceptance::Accepted => inst.referred_team,
                _ => None,
            };
            instances.push(inst);
        }
    }

    Ok(Corpus { config: config.clone(), instances, patients, warnings })
}

struct Generator<'a> {
    cfg: &'a CorpusConfig,
    priors: WeightedIndex<f64>,
    bounce: Vec<WeightedIndex<f64>>,
    doc_len: LogNormal<f64>,
    inst_len: LogNormal<f64>,
}

impl<'a> Generator<'a> {
    fn new(cfg: &'a CorpusConfig) -> Result<Self> {
        let weighted = |w: &[f64]| {
            WeightedIndex::new(w).map_err(|e| crate::error::Error::config(e.to_string()))
        };
        let lognormal = |median: f64, sigma: f64| {
            LogNormal::new(median.ln(), sigma).map_err(|e| crate::error::Error::config(e.to_string()))
        };
        Ok(Self {
            cfg,
            priors: weighted(&cfg.team_priors)?,
            bounce: cfg.bounce_matrix.iter().map(|r| weighted(r)).collect::<Result<_>>()?,
            doc_len: lognormal(cfg.doc_length_target.median, cfg.doc_length_target.lognormal_sigma())?,
            inst_len: lognormal(
                cfg.instance_length_target.median,
                cfg.instance_length_target.lognormal_sigma(),
            )?,
        })
    }

    fn patient(&self, patient_id: &str, rng: &mut ChaCha8Rng) -> (PatientRecord, TeamLabel) {
        let cfg = self.cfg;
        let mut chain = vec![TeamLabel::ALL[self.priors.sample(rng)]];
        while chain.len() < MAX_CHAIN {
            let current = *chain.last().expect("non-empty chain");
            let next = self.bounce[current.index()].sample(rng);
            if next == NUM_TEAMS {
                break;
            }
            chain.push(TeamLabel::ALL[next]);
        }
        let signal_team = *chain.last().expect("non-empty chain");

        let mut referral_date =
            cfg.extraction_date - Duration::days(rng.random_range(0..cfg.history_days));
        let mut referrals = Vec::new();
        let mut documents = Vec::new();

        for (k, &team) in chain.iter().enumerate() {
            if referral_date > cfg.extraction_date {
                break;
            }
            let is_last = k + 1 == chain.len();
            let gap = rng.random_range(1..=BOUNCE_GAP_DAYS);
            let accepted = is_last && rng.random_bool(cfg.accept_rate);

            let lengths = self.instance_doc_lengths(rng);
            let n_docs = lengths.len();
            let (dates, discharge) = if accepted {
                accepted_timeline(referral_date, n_docs, rng)
            } else {
                let max_stay = if is_last { 14 } else { (gap - 1).min(14) };
                let stay = if max_stay == 0 || rng.random_bool(0.7) { 0 } else { rng.random_range(1..=max_stay) };
                (vec![referral_date; n_docs], Some(referral_date + Duration::days(stay)))
            };

            let signal_docs = self.signal_documents(n_docs, rng);
            for (j, ((len, date), signal)) in lengths.iter().zip(&dates).zip(&signal_docs).enumerate() {
                if *date > cfg.extraction_date {
                    continue;
                }
                let text = self.document_text(*len, signal.then_some(signal_team), rng);
                documents.push(ClinicalDocument {
                    doc_id: format!("{patient_id}-R{}-D{j:03}", k + 1),
                    timestamp: Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight")),
                    author_role: *AuthorRole::ALL.choose(rng).expect("roles"),
                    category: *DocCategory::ALL.choose(rng).expect("categories"),
                    text,
                });
            }
            referrals.push(ReferralEvent {
                referral_date,
                team: Some(team),
                discharge_date: discharge.filter(|d| *d <= cfg.extraction_date),
            });
            let last_activity = dates.iter().chain(discharge.iter()).max().copied().unwrap_or(referral_date);
            referral_date = (referral_date + Duration::days(gap)).max(last_activity + Duration::days(1));
        }

        (PatientRecord { patient_id: patient_id.to_string(), documents, referrals }, signal_team)
    }

    fn instance_doc_lengths(&self, rng: &mut ChaCha8Rng) -> Vec<usize> {
        let target = (self.inst_len.sample(rng).round() as usize)
            .clamp(MIN_DOC_TOKENS, self.cfg.max_instance_tokens);
        let mut lengths = Vec::new();
        let mut total = 0;
        while total < target {
            let len = (self.doc_len.sample(rng).round() as usize).max(MIN_DOC_TOKENS);
            let len = len.min(self.cfg.max_instance_tokens - total).max(1);
            lengths.push(len);
            total += len;
        }
        lengths
    }

    /// Per document (storage order) whether it carries team terms.
    fn signal_documents(&self, n_docs: usize, rng: &mut ChaCha8Rng) -> Vec<bool> {
        let mut flags: Vec<bool> = (0..n_docs).map(|_| !rng.random_bool(self.cfg.noise_ratio)).collect();
        if n_docs > 0 {
            let guaranteed = match self.cfg.signal_position {
                SignalPosition::Uniform => rng.random_range(0..n_docs),
                SignalPosition::Head => n_docs - 1,
                SignalPosition::Tail => 0,
            };
            flags[guaranteed] = true;
        }
        flags
    }

    fn document_text(&self, n_tokens: usize, signal: Option<TeamLabel>, rng: &mut ChaCha8Rng) -> String {
        let mut tokens: Vec<String> = Vec::with_capacity(n_tokens + 16);
        let mut sentences = 0usize;
        let forced = signal.map(|_| rng.random_range(0..(n_tokens / 10).max(1)));
        while tokens.len() < n_tokens {
            let is_signal = match signal {
                Some(_) if forced == Some(sentences) => true,
                Some(_) => rng.random_bool(self.cfg.signal_density),
                None => false,
            };
            match signal.filter(|_| is_signal) {
                Some(team) => self.signal_sentence(team, rng, &mut tokens),
                None => filler_sentence(rng, &mut tokens),
            }
            sentences += 1;
        }
        tokens.truncate(n_tokens);
        render(&tokens)
    }

    fn signal_sentence(&self, team: TeamLabel, rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
        let term = |rng: &mut ChaCha8Rng| {
            let source = if rng.random_bool(self.cfg.cross_talk) {
                let others: Vec<TeamLabel> = TeamLabel::ALL.into_iter().filter(|&t| t != team).collect();
                *others.choose(rng).expect("other teams")
            } else {
                team
            };
            lexicon::team_lexicon(source).choose(rng).expect("lexicon").clone()
        };
        push_words(out, SUBJECTS.choose(rng).expect("subjects"));
        push_words(out, VERBS.choose(rng).expect("verbs"));
        let first = term(rng);
        out.push(first);
        if rng.random_bool(0.5) {
            out.push("and".into());
            let second = term(rng);
            out.push(second);
        }
        push_words(out, TIMES.choose(rng).expect("times"));
        out.push(".".into());
    }
}

fn filler_sentence(rng: &mut ChaCha8Rng, out: &mut Vec<String>) {
    push_words(out, SUBJECTS.choose(rng).expect("subjects"));
    push_words(out, VERBS.choose(rng).expect("verbs"));
    let n = rng.random_range(2..=6);
    for i in 0..n {
        if i > 0 && rng.random_bool(0.2) {
            out.push(",".into());
        }
        out.push(FILLER.choose(rng).expect("filler").to_string());
    }
    push_words(out, TIMES.choose(rng).expect("times"));
    out.push(".".into());
}

fn push_words(out: &mut Vec<String>, phrase: &str) {
    out.extend(phrase.split(' ').map(str::to_string));
}

fn render(tokens: &[String]) -> String {
    let mut s = String::with_capacity(tokens.len() * 8);
    for t in tokens {
        let punct = t == "." || t == ",";
        if !s.is_empty() && !punct {
            s.push(' ');
        }
        s.push_str(t);
    }
    s
}

/// Note dates and discharge for an accepted referral: a follow-up note
/// within the acceptance window whenever there is more than one note, and
/// an open or late discharge otherwise.
fn accepted_timeline(
    referral: NaiveDate,
    n_docs: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<NaiveDate>, Option<NaiveDate>) {
    let mut dates = Vec::with_capacity(n_docs);
    let mut day = 0i64;
    for j in 0..n_docs {
        if j == 1 {
            day = rng.random_range(1..=14);
        } else if j > 1 {
            day += rng.random_range(0..=12);
        }
        dates.push(referral + Duration::days(day));
    }
    let discharge = if rng.random_bool(0.5) {
        None
    } else {
        let floor = day.max(15);
        Some(referral + Duration::days(floor + rng.random_range(0..=60)))
    };
    (dates, discharge)
}

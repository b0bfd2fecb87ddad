//! Synthetic EHR-like corpora: referral instances, the 14-day acceptance
//! heuristic, descriptive statistics and referral bounce tables.

mod acceptance;
mod bounce;
mod config;
mod generate;
mod history;
mod io;
pub mod lexicon;
mod split;
mod stats;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::team::TeamLabel;

pub use acceptance::{label_acceptance, AcceptanceClause, AcceptanceDecision, ACCEPTANCE_WINDOW_DAYS};
pub use bounce::{bounce_matrix, BounceTable, BOUNCE_WINDOW_DAYS};
pub use config::{CorpusConfig, LengthTarget, SignalPosition};
pub use generate::{generate_corpus, Corpus, PatientSummary};
pub use history::{segment_history, PatientRecord, ReferralEvent, SegmentedHistory};
pub use io::{read_corpus, read_instances, write_corpus, write_instances};
pub use split::{split_by_patient, subsample_per_class, Split};
pub use stats::{corpus_stats, percentile, CorpusStats, LengthSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthorRole {
    Doctor,
    Nurse,
    Psychologist,
    #[serde(rename = "OT")]
    Ot,
    Admin,
}

impl AuthorRole {
    pub const ALL: [AuthorRole; 5] = [
        AuthorRole::Doctor,
        AuthorRole::Nurse,
        AuthorRole::Psychologist,
        AuthorRole::Ot,
        AuthorRole::Admin,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DocCategory {
    #[serde(rename = "MSE")]
    Mse,
    #[serde(rename = "MDT_summary")]
    MdtSummary,
    #[serde(rename = "assessment")]
    Assessment,
    #[serde(rename = "admin")]
    Admin,
    #[serde(rename = "contact")]
    Contact,
}

impl DocCategory {
    pub const ALL: [DocCategory; 5] = [
        DocCategory::Mse,
        DocCategory::MdtSummary,
        DocCategory::Assessment,
        DocCategory::Admin,
        DocCategory::Contact,
    ];
}

/// One time-stamped clinical note.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicalDocument {
    pub doc_id: String,
    pub timestamp: DateTime<Utc>,
    pub author_role: AuthorRole,
    pub category: DocCategory,
    pub text: String,
}

impl ClinicalDocument {
    pub fn date(&self) -> NaiveDate {
        self.timestamp.date_naive()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Acceptance {
    Accepted,
    NotAccepted,
    Censored,
}

/// A referral-demarcated, time-ordered collection of a patient's documents.
///
/// `label` is the accepting team and is only present for accepted
/// instances. `referred_team` records which team received the referral
/// regardless of outcome; it drives the bounce table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub instance_id: String,
    pub patient_id: String,
    pub referral_date: NaiveDate,
    pub discharge_date: Option<NaiveDate>,
    pub acceptance: Acceptance,
    pub label: Option<TeamLabel>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub referred_team: Option<TeamLabel>,
    pub documents: Vec<ClinicalDocument>,
}

impl Instance {
    /// Sorts documents ascending by timestamp, ties by doc_id.
    pub fn sort_documents(&mut self) {
        self.documents
            .sort_by(|a, b| a.timestamp.cmp(&b.timestamp).then_with(|| a.doc_id.cmp(&b.doc_id)));
    }

    pub fn is_sorted(&self) -> bool {
        self.documents.windows(2).all(|w| {
            (w[0].timestamp, &w[0].doc_id) <= (w[1].timestamp, &w[1].doc_id)
        })
    }

    /// Copy of this instance without the listed documents.
    pub fn without_documents(&self, excluded: &[String]) -> Instance {
        let mut out = self.clone();
        out.documents.retain(|d| !excluded.contains(&d.doc_id));
        out
    }
}

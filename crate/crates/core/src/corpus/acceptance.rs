use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{Acceptance, Instance};
use crate::error::{Error, Result};

/// Days after referral inside which note activity (or an open referral)
/// marks the referral as accepted. Also the right-censoring horizon.
pub const ACCEPTANCE_WINDOW_DAYS: i64 = 14;

/// Which clause of the acceptance rule decided the outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceClause {
    /// Referral is too close to the extraction date to judge.
    Censored,
    /// At least one note dated strictly after referral and within the window.
    NoteInWindow,
    /// Referral still open, or discharged after the window closed.
    OpenAfterWindow,
    /// Neither clause fired.
    Neither,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptanceDecision {
    pub status: Acceptance,
    pub clause: AcceptanceClause,
}

/// Applies the 14-day acceptance heuristic.
///
/// The referral document itself (dated on the referral day) does not
/// count as activity; only notes in `(referral, referral + 14d]` do. When
/// both clauses hold, the note clause is reported.
pub fn label_acceptance(instance: &Instance, extraction_date: NaiveDate) -> Result<AcceptanceDecision> {
    let referral = instance.referral_date;
    if extraction_date < referral {
        return Err(Error::arg(format!(
            "extraction date {extraction_date} precedes referral date {referral} of {}",
            instance.instance_id
        )));
    }
    if (extraction_date - referral).num_days() < ACCEPTANCE_WINDOW_DAYS {
        return Ok(AcceptanceDecision {
            status: Acceptance::Censored,
            clause: AcceptanceClause::Censored,
        });
    }
    let window_end = referral + Duration::days(ACCEPTANCE_WINDOW_DAYS);
    let note_in_window = instance
        .documents
        .iter()
        .map(|d| d.date())
        .any(|d| d > referral && d <= window_end);
    let (status, clause) = if note_in_window {
        (Acceptance::Accepted, AcceptanceClause::NoteInWindow)
    } else if instance.discharge_date.is_none_or(|d| d > window_end) {
        (Acceptance::Accepted, AcceptanceClause::OpenAfterWindow)
    } else {
        (Acceptance::NotAccepted, AcceptanceClause::Neither)
    };
    Ok(AcceptanceDecision { status, clause })
}

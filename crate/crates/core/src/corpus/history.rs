use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{Acceptance, ClinicalDocument, Instance};
use crate::team::TeamLabel;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferralEvent {
    pub referral_date: NaiveDate,
    pub team: Option<TeamLabel>,
    pub discharge_date: Option<NaiveDate>,
}

/// A patient's full record: every document plus referral/discharge events.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    pub documents: Vec<ClinicalDocument>,
    pub referrals: Vec<ReferralEvent>,
}

#[derive(Debug, Clone, Default)]
pub struct SegmentedHistory {
    pub instances: Vec<Instance>,
    pub warnings: Vec<String>,
}

/// Splits a patient record into referral instances.
///
/// A document belongs to a referral when its date lies in
/// `[referral_date, discharge_date]` (open-ended without discharge). When
/// windows overlap the document goes to the window with the later
/// referral date and a warning is recorded. Documents outside every window
/// are dropped. Acceptance is left `Censored` until
/// [`label_acceptance`](super::label_acceptance) is applied.
pub fn segment_history(record: &PatientRecord) -> SegmentedHistory {
    let mut referrals: Vec<&ReferralEvent> = record.referrals.iter().collect();
    referrals.sort_by_key(|r| r.referral_date);

    let mut out = SegmentedHistory::default();
    let mut buckets: Vec<Vec<ClinicalDocument>> = vec![Vec::new(); referrals.len()];

    for w in referrals.windows(2) {
        let overlaps = w[0].discharge_date.is_none_or(|d| d >= w[1].referral_date);
        if overlaps {
            out.warnings.push(format!(
                "patient {}: referral window starting {} overlaps referral on {}",
                record.patient_id, w[0].referral_date, w[1].referral_date
            ));
        }
    }

    for doc in &record.documents {
        let date = doc.date();
        let owner = referrals
            .iter()
            .enumerate()
            .rev()
            .find(|(_, r)| date >= r.referral_date && r.discharge_date.is_none_or(|d| date <= d))
            .map(|(i, _)| i);
        if let Some(i) = owner {
            buckets[i].push(doc.clone());
        }
    }

    for (i, (referral, documents)) in referrals.iter().zip(buckets).enumerate() {
        let mut inst = Instance {
            instance_id: format!("{}-R{}", record.patient_id, i + 1),
            patient_id: record.patient_id.clone(),
            referral_date: referral.referral_date,
            discharge_date: referral.discharge_date,
            acceptance: Acceptance::Censored,
            label: None,
            referred_team: referral.team,
            documents,
        };
        inst.sort_documents();
        out.instances.push(inst);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{AuthorRole, DocCategory};
    use chrono::{Duration, TimeZone, Utc};

    fn day(n: i64) -> NaiveDate {
        NaiveDate::from_ymd_opt(2023, 3, 1).unwrap() + Duration::days(n)
    }

    fn doc(id: &str, n: i64) -> ClinicalDocument {
        ClinicalDocument {
            doc_id: id.into(),
            timestamp: Utc.from_utc_datetime(&day(n).and_hms_opt(0, 0, 0).unwrap()),
            author_role: AuthorRole::Doctor,
            category: DocCategory::Assessment,
            text: format!("text {id}"),
        }
    }

    fn referral(start: i64, end: Option<i64>) -> ReferralEvent {
        ReferralEvent { referral_date: day(start), team: Some(TeamLabel::OA), discharge_date: end.map(day) }
    }

    #[test]
    fn window_membership() {
        let rec = PatientRecord {
            patient_id: "p1".into(),
            documents: vec![doc("a", 0), doc("b", 2), doc("c", 5), doc("d", 9)],
            referrals: vec![referral(0, Some(6))],
        };
        let h = segment_history(&rec);
        assert_eq!(h.instances.len(), 1);
        let ids: Vec<_> = h.instances[0].documents.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert!(h.warnings.is_empty());
    }

    #[test]
    fn bounce_gives_two_instances() {
        let rec = PatientRecord {
            patient_id: "p2".into(),
            documents: vec![doc("a", 0), doc("b", 5), doc("c", 7)],
            referrals: vec![referral(0, Some(0)), referral(5, None)],
        };
        let h = segment_history(&rec);
        assert_eq!(h.instances.len(), 2);
        assert_eq!(h.instances[0].documents.len(), 1);
        assert_eq!(h.instances[1].documents.len(), 2);
        assert_eq!(h.instances[1].instance_id, "p2-R2");
    }

    #[test]
    fn referral_without_notes() {
        let rec = PatientRecord {
            patient_id: "p3".into(),
            documents: vec![],
            referrals: vec![referral(0, None)],
        };
        let h = segment_history(&rec);
        assert_eq!(h.instances.len(), 1);
        assert!(h.instances[0].documents.is_empty());
    }

    #[test]
    fn overlap_goes_to_later_referral_with_warning() {
        let rec = PatientRecord {
            patient_id: "p4".into(),
            documents: vec![doc("a", 1), doc("b", 4), doc("c", 20)],
            referrals: vec![referral(0, Some(30)), referral(3, Some(10))],
        };
        let h = segment_history(&rec);
        assert_eq!(h.warnings.len(), 1);
        let first: Vec<_> = h.instances[0].documents.iter().map(|d| d.doc_id.as_str()).collect();
        let second: Vec<_> = h.instances[1].documents.iter().map(|d| d.doc_id.as_str()).collect();
        assert_eq!(first, ["a", "c"]);
        assert_eq!(second, ["b"]);
    }
}

//! Word lists used by the generator. Each team lexicon is a set of root
//! terms plus `root-qualifier` compounds; the filler lexicon is shared by
//! all teams and carries no label signal.

use std::sync::OnceLock;

use crate::team::TeamLabel;

const ED_ROOTS: &[&str] = &[
    "anorexia", "bulimia", "bingeing", "purging", "restriction", "laxatives", "bmi", "calories",
    "underweight", "emaciation", "bradycardia", "amenorrhoea", "refeeding", "hypokalaemia",
    "vomiting", "dieting", "overexercise", "bodycheck", "weighing", "mealplan", "arfid",
    "lanugo", "orthostasis", "fasting",
];

const ID_ROOTS: &[&str] = &[
    "learning-disability", "autism", "makaton", "communication-passport", "easyread", "respite",
    "supported-living", "challenging-behaviour", "pbs", "sensory", "downs", "fragile-x",
    "epilepsy", "self-injury", "iq", "adaptive-functioning", "hospital-passport", "echolalia",
    "stimming", "dysphagia", "best-interests", "day-centre", "pica", "mencap",
];

const OA_ROOTS: &[&str] = &[
    "dementia", "alzheimers", "memory-clinic", "moca", "ace-iii", "cognitive-decline",
    "wandering", "delirium", "falls", "frailty", "care-home", "donepezil", "memantine",
    "vascular", "lewy", "sundowning", "confusion", "forgetfulness", "power-of-attorney",
    "retirement", "widowed", "hearing-aid", "walking-frame", "continence",
];

const EIP_ROOTS: &[&str] = &[
    "psychosis", "hallucinations", "voices", "delusions", "paranoia", "persecutory",
    "thought-disorder", "first-episode", "antipsychotic", "aripiprazole", "risperidone",
    "clozapine", "cannabis", "prodrome", "negative-symptoms", "catatonia", "schizophrenia",
    "schizoaffective", "thought-insertion", "ideas-of-reference", "disorganised",
    "grandiosity", "early-intervention", "at-risk-mental-state",
];

const PN_ROOTS: &[&str] = &[
    "pregnancy", "postnatal", "antenatal", "perinatal", "midwife", "health-visitor", "infant",
    "breastfeeding", "gestation", "trimester", "puerperal", "baby", "bonding",
    "mother-and-baby", "obstetric", "caesarean", "postpartum", "newborn", "maternity",
    "edinburgh-scale", "birth-trauma", "tokophobia", "lactation", "neonatal",
];

const QUALIFIERS: &[&str] = &[
    "risk", "history", "review", "concern", "episode", "screen", "plan", "symptoms", "assessment",
];

/// Team-agnostic clinical vocabulary used for filler sentences.
pub const FILLER: &[&str] = &[
    "mood", "sleep", "appetite", "anxiety", "low", "stable", "settled", "tearful", "calm",
    "agitated", "medication", "reviewed", "discussed", "family", "support", "gp", "letter",
    "phone", "call", "appointment", "attended", "declined", "cancelled", "rebooked", "plan",
    "safety", "risk", "self-harm", "denied", "reported", "presented", "engaged", "well",
    "unwell", "worried", "partner", "daughter", "son", "mother", "father", "friend", "housing",
    "benefits", "work", "finances", "stress", "worry", "routine", "diet", "exercise", "alcohol",
    "smoking", "physical", "health", "blood", "pressure", "pulse", "observations", "weight",
    "review", "follow-up", "referral", "team", "meeting", "discussion", "care", "coordinator",
    "nurse", "doctor", "psychologist", "therapist", "occupational", "social", "worker", "duty",
    "clinic", "home", "visit", "telephone", "video", "consultation", "consent", "confidentiality",
    "capacity", "insight", "judgement", "speech", "normal", "rate", "tone", "volume", "eye",
    "contact", "good", "poor", "fair", "rapport", "behaviour", "appropriate", "dressed", "kempt",
    "orientated", "time", "place", "person", "affect", "reactive", "congruent", "thoughts",
    "content", "form", "perception", "cognition", "intact", "impaired", "concentration",
    "motivation", "energy", "interest", "pleasure", "hopeless", "helpless", "guilt", "worthless",
    "irritable", "restless", "panic", "avoidance", "trigger", "coping", "strategies", "goals",
    "progress", "improvement", "deterioration", "crisis", "contingency", "carer", "advice",
    "information", "leaflet", "signposted", "booked", "next", "week", "month", "today",
    "yesterday", "morning", "afternoon", "evening", "night", "weekend", "recently", "ongoing",
    "previous", "current", "new", "old", "further", "initial", "brief", "full", "summary",
    "documented", "recorded", "noted", "agreed", "confirmed", "requested", "received", "sent",
    "emailed", "posted", "scanned", "uploaded", "system", "record", "notes", "chart", "form",
];

pub const SUBJECTS: &[&str] = &[
    "patient", "client", "service user", "she", "he", "they", "mother", "carer", "gp",
    "the team", "the nurse", "the doctor",
];

pub const VERBS: &[&str] = &[
    "reports", "describes", "denies", "mentions", "presents with", "discussed", "noted",
    "reviewed", "highlighted", "queried", "was seen regarding", "remains concerned about",
];

pub const TIMES: &[&str] = &[
    "today", "this week", "over the weekend", "since last review", "at the appointment",
    "on the phone", "during the visit", "in clinic", "recently", "for some months",
];

fn roots(team: TeamLabel) -> &'static [&'static str] {
    match team {
        TeamLabel::ED => ED_ROOTS,
        TeamLabel::ID => ID_ROOTS,
        TeamLabel::OA => OA_ROOTS,
        TeamLabel::EIP => EIP_ROOTS,
        TeamLabel::PN => PN_ROOTS,
    }
}

/// All lexicon terms of a team: roots followed by `root-qualifier` compounds.
pub fn team_lexicon(team: TeamLabel) -> &'static [String] {
    static LEXICONS: OnceLock<Vec<Vec<String>>> = OnceLock::new();
    let all = LEXICONS.get_or_init(|| {
        TeamLabel::ALL
            .iter()
            .map(|&t| {
                let r = roots(t);
                let mut terms: Vec<String> = r.iter().map(|s| s.to_string()).collect();
                for root in r {
                    for q in QUALIFIERS {
                        terms.push(format!("{root}-{q}"));
                    }
                }
                terms
            })
            .collect()
    });
    &all[team.index()]
}

/// Team owning `word`, if it is a lexicon term.
pub fn lexicon_team(word: &str) -> Option<TeamLabel> {
    TeamLabel::ALL
        .into_iter()
        .find(|&t| team_lexicon(t).iter().any(|w| w == word))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;

    #[test]
    fn lexicons_are_large_and_disjoint() {
        let mut seen = HashSet::new();
        for t in TeamLabel::ALL {
            let lex = team_lexicon(t);
            assert!(lex.len() >= 200, "{t} has {} terms", lex.len());
            for w in lex {
                assert!(seen.insert(w.clone()), "duplicate term {w}");
            }
        }
        assert_eq!(seen.len(), TeamLabel::ALL.iter().map(|&t| team_lexicon(t).len()).sum::<usize>());
    }

    #[test]
    fn filler_carries_no_team_terms() {
        for w in FILLER.iter().chain(SUBJECTS).chain(VERBS).chain(TIMES) {
            for part in w.split(' ') {
                assert_eq!(lexicon_team(part), None, "{part} is a team term");
            }
        }
    }
}

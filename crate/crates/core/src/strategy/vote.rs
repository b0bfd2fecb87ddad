use serde::{Deserialize, Serialize};

use crate::team::{TeamLabel, NUM_TEAMS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vote {
    pub doc_index: usize,
    pub team: TeamLabel,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoteRecord {
    pub votes: Vec<Vote>,
    pub modal_team: TeamLabel,
    /// Two or more teams shared the top vote count.
    pub tie_broken: bool,
}

impl VoteRecord {
    pub fn from_votes(votes: Vec<Vote>) -> Self {
        let pairs: Vec<(TeamLabel, &[f64])> = votes.iter().map(|v| (v.team, v.probabilities.as_slice())).collect();
        let (modal_team, tie_broken) = modal_vote(&pairs);
        Self { votes, modal_team, tie_broken }
    }
}

/// Modal team of the votes. Count ties go to the team with the larger
/// probability mass summed over all documents, then to the lowest id.
/// Returns the team and whether a count tie occurred.
pub fn modal_vote(votes: &[(TeamLabel, &[f64])]) -> (TeamLabel, bool) {
    let mut counts = [0usize; NUM_TEAMS];
    let mut mass = [0.0f64; NUM_TEAMS];
    for (team, probs) in votes {
        counts[team.index()] += 1;
        for (m, p) in mass.iter_mut().zip(probs.iter()) {
            *m += p;
        }
    }
    let top = *counts.iter().max().unwrap_or(&0);
    let tied: Vec<usize> = (0..NUM_TEAMS).filter(|&i| counts[i] == top).collect();
    let mut best = tied[0];
    for &i in &tied[1..] {
        if mass[i] > mass[best] {
            best = i;
        }
    }
    (TeamLabel::from_index(best).expect("team index"), tied.len() > 1)
}

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::Error;

/// Number of sub-specialty teams a referral can be routed to.
pub const NUM_TEAMS: usize = 5;

/// A sub-specialty team. The discriminant is the stable label encoding.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TeamLabel {
    ED = 0,
    ID = 1,
    OA = 2,
    EIP = 3,
    PN = 4,
}

impl TeamLabel {
    pub const ALL: [TeamLabel; NUM_TEAMS] = [
        TeamLabel::ED,
        TeamLabel::ID,
        TeamLabel::OA,
        TeamLabel::EIP,
        TeamLabel::PN,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<TeamLabel> {
        Self::ALL.get(i).copied()
    }

    pub fn code(self) -> &'static str {
        match self {
            TeamLabel::ED => "ED",
            TeamLabel::ID => "ID",
            TeamLabel::OA => "OA",
            TeamLabel::EIP => "EIP",
            TeamLabel::PN => "PN",
        }
    }

    pub fn display_name(self) -> &'static str {
        match self {
            TeamLabel::ED => "Eating disorders",
            TeamLabel::ID => "Intellectual disability",
            TeamLabel::OA => "Older adults",
            TeamLabel::EIP => "Early intervention in psychosis",
            TeamLabel::PN => "Peri-natal",
        }
    }
}

impl fmt::Display for TeamLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for TeamLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.code().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::arg(format!("unknown team label '{s}'")))
    }
}

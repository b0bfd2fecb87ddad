use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::team::NUM_TEAMS;

/// Median and inter-quartile range of a token-count distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthTarget {
    pub median: f64,
    pub iqr: f64,
}

impl LengthTarget {
    /// Log-normal sigma whose quartiles reproduce `iqr` around `median`:
    /// `iqr = median * 2 sinh(z75 * sigma)`.
    pub fn lognormal_sigma(&self) -> f64 {
        const Z75: f64 = 0.674_489_750_196_081_7;
        (self.iqr / (2.0 * self.median)).asinh() / Z75
    }
}

/// Where the guaranteed signal-bearing document sits in the model input.
/// `head` is the most recent document (first after reverse-chronological
/// assembly), `tail` the oldest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalPosition {
    Uniform,
    Head,
    Tail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub n_patients: usize,
    /// Distribution of the team receiving a patient's first referral,
    /// indexed by `TeamLabel::index`.
    pub team_priors: Vec<f64>,
    pub doc_length_target: LengthTarget,
    pub instance_length_target: LengthTarget,
    /// Hard cap on generated instance length in tokens.
    pub max_instance_tokens: usize,
    pub signal_position: SignalPosition,
    /// Probability that a document carries no team-specific text. Every
    /// instance still receives one signal-bearing document.
    pub noise_ratio: f64,
    /// Fraction of sentences in a signal document that carry team terms.
    pub signal_density: f64,
    /// Probability that a team term is drawn from another team's lexicon.
    pub cross_talk: f64,
    /// Row `A`, column `B < T`: probability the first referral to `A` is
    /// forwarded to `B`; last column: no onward referral.
    pub bounce_matrix: Vec<Vec<f64>>,
    /// Probability that the final referral of a chain is accepted.
    pub accept_rate: f64,
    pub extraction_date: NaiveDate,
    /// Referral dates are drawn from this many days before extraction.
    pub history_days: i64,
    pub seed: u64,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        Self {
            n_patients: 2000,
            // ED, ID, OA, EIP, PN: older adults over-represented.
            team_priors: vec![0.14, 0.10, 0.42, 0.22, 0.12],
            doc_length_target: LengthTarget { median: 120.0, iqr: 155.0 },
            instance_length_target: LengthTarget { median: 1323.0, iqr: 3229.0 },
            max_instance_tokens: 16_000,
            signal_position: SignalPosition::Uniform,
            noise_ratio: 0.8,
            signal_density: 0.25,
            cross_talk: 0.1,
            // Columns: ED, ID, OA, EIP, PN, no onward referral.
            bounce_matrix: vec![
                vec![0.02, 0.01, 0.02, 0.03, 0.02, 0.90],
                vec![0.02, 0.02, 0.05, 0.02, 0.01, 0.88],
                vec![0.01, 0.02, 0.03, 0.01, 0.01, 0.92],
                vec![0.02, 0.01, 0.01, 0.04, 0.01, 0.91],
                vec![0.03, 0.01, 0.01, 0.02, 0.02, 0.91],
            ],
            accept_rate: 0.85,
            extraction_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            history_days: 3 * 365,
            seed: 7,
        }
    }
}

impl CorpusConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 {
            return Err(Error::config("n_patients must be positive"));
        }
        check_distribution("team_priors", &self.team_priors, NUM_TEAMS)?;
        if self.bounce_matrix.len() != NUM_TEAMS {
            return Err(Error::config(format!(
                "bounce_matrix must have {NUM_TEAMS} rows, got {}",
                self.bounce_matrix.len()
            )));
        }
        for (i, row) in self.bounce_matrix.iter().enumerate() {
            check_distribution(&format!("bounce_matrix row {i}"), row, NUM_TEAMS + 1)?;
        }
        for (name, v) in [
            ("noise_ratio", self.noise_ratio),
            ("signal_density", self.signal_density),
            ("cross_talk", self.cross_talk),
            ("accept_rate", self.accept_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        for (name, t) in [
            ("doc_length_target", self.doc_length_target),
            ("instance_length_target", self.instance_length_target),
        ] {
            if !(t.median > 0.0 && t.iqr > 0.0 && t.median.is_finite() && t.iqr.is_finite()) {
                return Err(Error::config(format!("{name} must have positive median and iqr")));
            }
        }
        if self.max_instance_tokens == 0 {
            return Err(Error::config("max_instance_tokens must be positive"));
        }
        if self.history_days < 1 {
            return Err(Error::config("history_days must be at least 1"));
        }
        Ok(())
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(e.to_string()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("corpus config serializes")
    }
}

fn check_distribution(name: &str, p: &[f64], len: usize) -> Result<()> {
    if p.len() != len {
        return Err(Error::config(format!("{name} must have {len} entries, got {}", p.len())));
    }
    if p.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::config(format!("{name} has negative or non-finite entries")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > 1e-9 {
        return Err(Error::config(format!("{name} sums to {sum}, expected 1")));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid() {
        CorpusConfig::default().validate().unwrap();
    }

    #[test]
    fn default_bounce_rows_keep_mass_on_no_onward() {
        let cfg = CorpusConfig::default();
        for row in &cfg.bounce_matrix {
            let no_onward = row[NUM_TEAMS];
            assert!(row[..NUM_TEAMS].iter().all(|&p| p < no_onward));
        }
    }

    #[test]
    fn rejects_non_stochastic_rows_and_zero_patients() {
        let mut cfg = CorpusConfig::default();
        cfg.bounce_matrix[2][0] += 0.1;
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let cfg = CorpusConfig { n_patients: 0, ..CorpusConfig::default() };
        assert!(matches!(cfg.validate(), Err(Error::Config(_))));

        let cfg = CorpusConfig { team_priors: vec![0.5, 0.5, 0.1, 0.0, 0.0], ..CorpusConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn lognormal_sigma_reproduces_iqr() {
        let t = LengthTarget { median: 120.0, iqr: 155.0 };
        let s = t.lognormal_sigma();
        let z = 0.674_489_750_196_081_7;
        let iqr = 120.0 * ((z * s).exp() - (-z * s).exp());
        assert!((iqr - 155.0).abs() < 1e-9);
    }

    #[test]
    fn toml_round_trip() {
        let cfg = CorpusConfig::default();
        let back = CorpusConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, back);
    }
}

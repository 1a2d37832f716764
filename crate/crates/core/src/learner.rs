//! Offline learners: the pessimistic LCB rule and the imitation rule.

use serde::{Deserialize, Serialize};

use crate::bandit::{ArmIndex, Dataset, SampleCounts};
use crate::error::{Error, Result};

/// Two scores closer than this are treated as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Confidence level `tau` in (0, 1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct ConfidenceLevel(f64);

impl ConfidenceLevel {
    pub fn new(tau: f64) -> Result<Self> {
        if tau > 0.0 && tau < 1.0 {
            Ok(ConfidenceLevel(tau))
        } else {
            Err(Error::InvalidParameter(format!("tau = {tau} must lie in (0, 1)")))
        }
    }

    /// `1/N`, with `N` floored at 2 so the level stays inside (0, 1).
    pub fn for_size(n: usize) -> Self {
        ConfidenceLevel(1.0 / n.max(2) as f64)
    }

    pub fn value(self) -> f64 {
        self.0
    }

    /// `ln(m / tau)`.
    pub fn log_term(self, m: usize) -> f64 {
        (m as f64 / self.0).ln()
    }
}

impl TryFrom<f64> for ConfidenceLevel {
    type Error = Error;
    fn try_from(tau: f64) -> Result<Self> {
        ConfidenceLevel::new(tau)
    }
}

impl From<ConfidenceLevel> for f64 {
    fn from(t: ConfidenceLevel) -> f64 {
        t.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LearnerKind {
    Lcb,
    Imitation,
}

/// The chosen arm together with the stored statistics it was derived from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LearnOutput {
    pub lcb: Vec<f64>,
    pub means: Vec<f64>,
    pub counts: SampleCounts,
    pub tau: ConfidenceLevel,
    pub chosen: ArmIndex,
    pub learner: LearnerKind,
}

impl LearnOutput {
    pub fn num_arms(&self) -> usize {
        self.lcb.len()
    }

    /// Checks internal consistency after deserialisation.
    pub fn validate(&self) -> Result<()> {
        let m = self.counts.num_arms();
        if self.lcb.len() != m || self.means.len() != m {
            return Err(Error::InvalidParameter(format!(
                "stored statistics disagree on arm count: lcb {}, means {}, counts {m}",
                self.lcb.len(),
                self.means.len()
            )));
        }
        if self.chosen.0 >= m {
            return Err(Error::InvalidParameter(format!("chosen arm {} out of range", self.chosen)));
        }
        Ok(())
    }
}

/// The statistics an unlearner may read: never raw points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredStatistics {
    pub lcb: Vec<f64>,
    pub means: Vec<f64>,
    pub counts: SampleCounts,
    pub tau: ConfidenceLevel,
}

pub fn stored_statistics(output: &LearnOutput) -> StoredStatistics {
    StoredStatistics {
        lcb: output.lcb.clone(),
        means: output.means.clone(),
        counts: output.counts.clone(),
        tau: output.tau,
    }
}

/// Hoeffding penalty `sqrt(ln(m/tau) / 2n)`; 1 for an unseen arm.
pub fn penalty(n: usize, m: usize, tau: ConfidenceLevel) -> f64 {
    if n == 0 {
        1.0
    } else {
        (tau.log_term(m) / (2.0 * n as f64)).sqrt()
    }
}

/// Lowest index among the maximal entries.
pub fn argmax(values: &[f64]) -> ArmIndex {
    let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    ArmIndex(values.iter().position(|&v| v >= best - TIE_TOLERANCE).unwrap_or(0))
}

/// Lowest index among the largest counts.
pub fn argmax_counts(counts: &[usize]) -> ArmIndex {
    let best = counts.iter().copied().max().unwrap_or(0);
    ArmIndex(counts.iter().position(|&c| c == best).unwrap_or(0))
}

fn summarise(dataset: &Dataset) -> (Vec<f64>, SampleCounts) {
    let m = dataset.num_arms();
    let mut sums = vec![0.0; m];
    let mut counts = vec![0usize; m];
    for p in dataset.points() {
        sums[p.arm.0] += p.reward;
        counts[p.arm.0] += 1;
    }
    let means = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &n)| if n == 0 { 0.0 } else { s / n as f64 })
        .collect();
    (means, SampleCounts::new(counts).expect("m >= 2"))
}

fn lcb_vector(means: &[f64], counts: &SampleCounts, tau: ConfidenceLevel) -> Vec<f64> {
    let m = means.len();
    means
        .iter()
        .zip(counts.as_slice())
        .map(|(&mu, &n)| mu - penalty(n, m, tau))
        .collect()
}

pub fn lcb_learn(dataset: &Dataset, tau: ConfidenceLevel) -> Result<LearnOutput> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (means, counts) = summarise(dataset);
    let lcb = lcb_vector(&means, &counts, tau);
    Ok(LearnOutput {
        chosen: argmax(&lcb),
        lcb,
        means,
        counts,
        tau,
        learner: LearnerKind::Lcb,
    })
}

/// Most frequently logged arm. `tau` only shapes the stored LCB vector.
pub fn imitation_learn(dataset: &Dataset, tau: ConfidenceLevel) -> Result<LearnOutput> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let (means, counts) = summarise(dataset);
    let lcb = lcb_vector(&means, &counts, tau);
    Ok(LearnOutput {
        chosen: argmax_counts(counts.as_slice()),
        lcb,
        means,
        counts,
        tau,
        learner: LearnerKind::Imitation,
    })
}

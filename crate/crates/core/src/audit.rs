//! Monte Carlo falsifier for the `(epsilon, delta)` unlearning inequality.
//!
//! Pipeline A unlearns the real request from statistics of the full data;
//! pipeline B runs the empty-request counterpart on statistics of the
//! retained data. Each trial draws its randomness from its own keyed
//! stream, so counts are identical under sequential and parallel runs.

use serde::{Deserialize, Serialize};

use crate::bandit::{ArmIndex, DataModel, DataPoint, Dataset, UnlearningRequest};
use crate::error::{Error, Result};
use crate::learner::{imitation_learn, lcb_learn, penalty, ConfidenceLevel, LearnOutput, LearnerKind};
use crate::par::{self, Execution};
use crate::rng::{derive_seed, Purpose};
use crate::unlearner::{gamma_from_privacy, Mechanism, PrivacyBudget, RequestMeta};

pub const MIN_TRIALS: usize = 10_000;

/// Standard deviations of binomial slack added to the bound's right side.
pub const SLACK_SIGMAS: f64 = 3.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditConfig {
    pub mechanism: Mechanism,
    pub budget: PrivacyBudget,
    /// Noise multiplier; derived from `budget` when absent.
    pub gamma: Option<f64>,
    pub tau: ConfidenceLevel,
    pub trials: usize,
    pub seed: u64,
    /// Check every subset of arms instead of singletons and complements.
    pub all_events: bool,
    pub execution: Execution,
}

impl AuditConfig {
    pub fn new(mechanism: Mechanism, budget: PrivacyBudget, tau: ConfidenceLevel, trials: usize, seed: u64) -> Self {
        AuditConfig { mechanism, budget, gamma: None, tau, trials, seed, all_events: false, execution: Execution::default() }
    }

    pub fn effective_gamma(&self) -> f64 {
        self.gamma.unwrap_or_else(|| gamma_from_privacy(&self.budget).unwrap_or(f64::INFINITY))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventCheck {
    pub arms: Vec<ArmIndex>,
    pub p_a: f64,
    pub p_b: f64,
    /// Largest of the two directional violations, slack included.
    pub violation: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub mechanism: String,
    pub epsilon: f64,
    pub delta: f64,
    pub gamma: f64,
    pub trials: usize,
    pub freq_a: Vec<f64>,
    pub freq_b: Vec<f64>,
    pub worst_event: Vec<ArmIndex>,
    pub worst_violation: f64,
    pub pass: bool,
}

fn learn(kind: LearnerKind, dataset: &Dataset, tau: ConfidenceLevel) -> Result<LearnOutput> {
    match kind {
        LearnerKind::Lcb => lcb_learn(dataset, tau),
        LearnerKind::Imitation => imitation_learn(dataset, tau),
    }
}

fn add(mut a: Vec<u64>, b: Vec<u64>) -> Vec<u64> {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
    a
}

/// Per-arm output counts over `trials` runs of `run`.
fn tally<F>(exec: Execution, m: usize, trials: usize, run: F) -> Result<Vec<u64>>
where
    F: Fn(usize) -> Result<ArmIndex> + Sync,
{
    const CHUNK: usize = 4096;
    let chunks = trials.div_ceil(CHUNK);
    par::map_reduce(
        exec,
        chunks,
        || Ok(vec![0u64; m]),
        |c| {
            let mut counts = vec![0u64; m];
            for t in c * CHUNK..((c + 1) * CHUNK).min(trials) {
                counts[run(t)?.0] += 1;
            }
            Ok(counts)
        },
        |a: Result<Vec<u64>>, b: Result<Vec<u64>>| Ok(add(a?, b?)),
    )
}

fn events(m: usize, all: bool) -> Result<Vec<Vec<usize>>> {
    if all {
        if m > 16 {
            return Err(Error::InvalidParameter(format!("all-subset audit supports m <= 16, got {m}")));
        }
        return Ok((1..(1u32 << m) - 1)
            .map(|mask| (0..m).filter(|a| mask >> a & 1 == 1).collect())
            .collect());
    }
    let mut out = Vec::new();
    for a in 0..m {
        out.push(vec![a]);
        if m > 2 {
            out.push((0..m).filter(|&b| b != a).collect());
        }
    }
    Ok(out)
}

fn sd(p: f64, trials: f64) -> f64 {
    (p * (1.0 - p) / trials).sqrt()
}

/// Worst directional violation of `p <= e^eps q + delta` for one event.
pub fn event_violation(p_a: f64, p_b: f64, epsilon: f64, delta: f64, trials: usize) -> f64 {
    let t = trials as f64;
    let e = epsilon.exp();
    let one = |p: f64, q: f64| p - (e * q + delta) - SLACK_SIGMAS * (sd(p, t) + e * sd(q, t));
    one(p_a, p_b).max(one(p_b, p_a))
}

pub fn audit_ul(dataset: &Dataset, request: &UnlearningRequest, config: &AuditConfig) -> Result<AuditReport> {
    if config.trials < MIN_TRIALS {
        return Err(Error::InvalidParameter(format!("audit needs at least {MIN_TRIALS} trials, got {}", config.trials)));
    }
    let m = dataset.num_arms();
    let gamma = config.effective_gamma();
    let kind = config.mechanism.learner();
    let learned = learn(kind, dataset, config.tau)?;
    let deleted = request.deleted_rewards(dataset);
    let retained = learn(kind, &dataset.without(request), config.tau)?;
    let meta = RequestMeta::new(&learned, request);
    let mech = config.mechanism;

    let counts_a = tally(config.execution, m, config.trials, |t| {
        let seed = derive_seed(config.seed, Purpose::AuditRealistic, &[t as u64]);
        Ok(mech.apply(&learned, request, &deleted, gamma, seed)?.chosen)
    })?;
    let counts_b = tally(config.execution, m, config.trials, |t| {
        let seed = derive_seed(config.seed, Purpose::AuditEmpty, &[t as u64]);
        Ok(mech.apply_empty(&retained, &meta, gamma, seed)?.chosen)
    })?;

    let t = config.trials as f64;
    let freq_a: Vec<f64> = counts_a.iter().map(|&c| c as f64 / t).collect();
    let freq_b: Vec<f64> = counts_b.iter().map(|&c| c as f64 / t).collect();
    let PrivacyBudget { epsilon, delta } = config.budget;
    let mut worst = EventCheck { arms: Vec::new(), p_a: 0.0, p_b: 0.0, violation: f64::NEG_INFINITY };
    for ev in events(m, config.all_events)? {
        let p_a = ev.iter().map(|&a| counts_a[a]).sum::<u64>() as f64 / t;
        let p_b = ev.iter().map(|&a| counts_b[a]).sum::<u64>() as f64 / t;
        let violation = event_violation(p_a, p_b, epsilon, delta, config.trials);
        if violation > worst.violation {
            worst = EventCheck { arms: ev.into_iter().map(ArmIndex).collect(), p_a, p_b, violation };
        }
    }
    Ok(AuditReport {
        mechanism: mech.label(),
        epsilon,
        delta,
        gamma,
        trials: config.trials,
        freq_a,
        freq_b,
        worst_event: worst.arms,
        worst_violation: worst.violation,
        pass: worst.violation <= 0.0,
    })
}

/// One grid point of a sweep.
#[derive(Clone, Debug)]
pub struct AuditPoint {
    pub dataset: Dataset,
    pub request: UnlearningRequest,
    pub config: AuditConfig,
}

pub fn audit_sweep(points: &[AuditPoint]) -> Result<Vec<AuditReport>> {
    points.iter().map(|p| audit_ul(&p.dataset, &p.request, &p.config)).collect()
}

/// A two-arm instance on which a Gaussian mechanism is nearly tight.
#[derive(Clone, Debug)]
pub struct Fixture {
    pub dataset: Dataset,
    pub request: UnlearningRequest,
    pub tau: ConfidenceLevel,
}

/// Arm 0 holds `n` points whose first `k` rewards are 1 and the rest 0;
/// the request deletes those `k`. `tau` is as small as the sensitivity
/// bound allows, so the actual LCB shift nearly reaches `3k/(2n)`. Arm 1
/// holds `n` identical rewards placed so that the event "arm 0 chosen"
/// is the most violating one for noise `noise_factor * 3k/(2n) * gamma`.
pub fn worst_case_fixture(n: usize, k: usize, budget: PrivacyBudget, noise_factor: f64) -> Result<Fixture> {
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!("fixture needs 0 < k < n, got k = {k}, n = {n}")));
    }
    let gamma = gamma_from_privacy(&budget)?;
    if !gamma.is_finite() {
        return Err(Error::InvalidParameter("fixture needs epsilon > 0".into()));
    }
    let (nf, kf) = (n as f64, k as f64);
    let m = 2;
    // ln(m/tau) sits just inside the sensitivity condition
    let log_term = 0.999 * 2.0 * (nf - kf) * (nf - kf) / nf;
    let tau = ConfidenceLevel::new(m as f64 * (-log_term).exp())?;
    let before = kf / nf - penalty(n, m, tau);
    let after = -penalty(n - k, m, tau);
    let sigma = noise_factor * 1.5 * kf / nf * gamma;
    let mu = (before - after) / sigma;
    let cut = budget.epsilon / mu + mu / 2.0;
    let reward = after + sigma * cut + penalty(n, m, tau);
    if !(0.0..=1.0).contains(&reward) {
        return Err(Error::InvalidParameter(format!("fixture reward {reward} outside [0, 1]")));
    }
    let mut points: Vec<DataPoint> = (0..n)
        .map(|i| DataPoint { arm: ArmIndex(0), reward: if i < k { 1.0 } else { 0.0 } })
        .collect();
    points.extend((0..n).map(|_| DataPoint { arm: ArmIndex(1), reward }));
    let dataset = Dataset::new(m, DataModel::FixedSample, points)?;
    let request = UnlearningRequest::from_indices(&dataset, &(0..k).collect::<Vec<_>>())?;
    Ok(Fixture { dataset, request, tau })
}

//! Unlearning mechanisms over stored LCB statistics.
//!
//! Every mechanism has a realistic form, fed the request `U` together with
//! the statistics of the full dataset, and an empty-request form fed the
//! statistics of the retained data plus [`RequestMeta`]. Both forms draw
//! noise for arm `a` from the same keyed stream, so matched seeds couple
//! them exactly.

use std::f64::consts::PI;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::bandit::{ArmIndex, DeletedRewards, SampleCounts, UnlearningRequest};
use crate::error::{Error, Result};
use crate::learner::{argmax, argmax_counts, penalty, ConfidenceLevel, LearnOutput, LearnerKind};
use crate::rng::{self, Purpose};

/// An `(epsilon, delta)` pair. `delta = 0` is allowed only for mechanisms
/// that never add noise.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyBudget {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon < 0.0 {
            return Err(Error::InvalidPrivacy(format!("epsilon = {epsilon} must be >= 0")));
        }
        if !(0.0..1.0).contains(&delta) {
            return Err(Error::InvalidPrivacy(format!("delta = {delta} must lie in [0, 1)")));
        }
        Ok(PrivacyBudget { epsilon, delta })
    }

    pub fn gamma(&self) -> Result<f64> {
        gamma_from_privacy(self)
    }
}

/// `sqrt(2 ln(1.25/delta)) / epsilon`, infinite at `epsilon = 0`.
pub fn gamma_from_privacy(budget: &PrivacyBudget) -> Result<f64> {
    let PrivacyBudget { epsilon, delta } = *budget;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidPrivacy(format!("delta = {delta} must lie in (0, 1)")));
    }
    if epsilon.is_nan() || epsilon < 0.0 {
        return Err(Error::InvalidPrivacy(format!("epsilon = {epsilon} must be >= 0")));
    }
    if epsilon == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok((2.0 * (1.25 / delta).ln()).sqrt() / epsilon)
}

/// Largest `k` for which the sensitivity bound holds.
pub fn sensitivity_limit(n_a0: usize, m: usize, tau: ConfidenceLevel) -> f64 {
    let n = n_a0 as f64;
    n - (n * tau.log_term(m) / 2.0).sqrt()
}

/// `3k / (2 n_a0)`, the LCB sensitivity to deleting `k` points of one arm.
pub fn sensitivity_single(k: usize, n_a0: usize, m: usize, tau: ConfidenceLevel) -> Result<f64> {
    if k == 0 {
        return Ok(0.0);
    }
    let limit = sensitivity_limit(n_a0, m, tau);
    if k as f64 > limit {
        return Err(Error::SensitivityPrecondition { k, limit });
    }
    Ok(3.0 * k as f64 / (2.0 * n_a0 as f64))
}

/// `(4/3) sqrt(pi ln(m/tau) / (n_a0 - k))`.
pub fn gamma_threshold_single(n_a0: usize, k: usize, m: usize, tau: ConfidenceLevel) -> Result<f64> {
    if k >= n_a0 {
        return Err(Error::InvalidParameter(format!("threshold needs k < n_a0, got k = {k}, n_a0 = {n_a0}")));
    }
    Ok(4.0 / 3.0 * (PI * tau.log_term(m) / (n_a0 - k) as f64).sqrt())
}

/// The multi-source threshold: the single-source one at `(n_min, k_max)`.
pub fn gamma_threshold_multi(n_min: usize, k_max: usize, m: usize, tau: ConfidenceLevel) -> Result<f64> {
    gamma_threshold_single(n_min, k_max, m, tau)
}

/// Exact `gamma` at which the Gaussian and rollback rates cross.
pub fn gamma_crossover(n_a0: usize, k: usize, m: usize, tau: ConfidenceLevel) -> Result<f64> {
    if k >= n_a0 {
        return Err(Error::InvalidParameter(format!("crossover needs k < n_a0, got k = {k}, n_a0 = {n_a0}")));
    }
    let (n, r) = (n_a0 as f64, (n_a0 - k) as f64);
    Ok(4.0 * (PI * n * tau.log_term(m)).sqrt() / (3.0 * r.sqrt() * (r.sqrt() + n.sqrt())))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArmRollback {
    pub mean: f64,
    pub penalty: f64,
    pub lcb: f64,
}

/// Removes `deleted` rewards from one arm's stored mean.
pub fn rollback_arm(
    means: &[f64],
    counts: &SampleCounts,
    deleted: &[f64],
    tau: ConfidenceLevel,
    arm: ArmIndex,
) -> Result<ArmRollback> {
    let n = counts.get(arm);
    let k = deleted.len();
    if k >= n {
        return Err(Error::RollbackEmptiesArm(arm));
    }
    if k == 0 {
        let p = penalty(n, counts.num_arms(), tau);
        return Ok(ArmRollback { mean: means[arm.0], penalty: p, lcb: means[arm.0] - p });
    }
    let removed: f64 = deleted.iter().sum();
    let mean = ((means[arm.0] * n as f64 - removed) / (n - k) as f64).clamp(0.0, 1.0);
    let penalty = penalty(n - k, counts.num_arms(), tau);
    Ok(ArmRollback { mean, penalty, lcb: mean - penalty })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Branch {
    Gaussian,
    Rollback,
    Mixed,
    Imitation,
}

/// Result of one unlearning call. For imitation unlearning `lcb` carries
/// the updated counts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnlearnOutcome {
    pub chosen: ArmIndex,
    pub branch: Branch,
    pub noise: f64,
    pub lcb: Vec<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmMeta {
    pub arm: ArmIndex,
    pub k: usize,
    pub n_before: usize,
}

/// What the retained-data statistics remember about the realistic request.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RequestMeta {
    pub original_chosen: ArmIndex,
    pub arms: Vec<ArmMeta>,
}

impl RequestMeta {
    pub fn new(learned: &LearnOutput, request: &UnlearningRequest) -> Self {
        RequestMeta {
            original_chosen: learned.chosen,
            arms: request
                .arms()
                .map(|arm| ArmMeta { arm, k: request.k_of(arm), n_before: learned.counts.get(arm) })
                .collect(),
        }
    }

    fn n_min(&self) -> usize {
        self.arms.iter().map(|a| a.n_before).min().unwrap_or(0)
    }

    fn k_max(&self) -> usize {
        self.arms.iter().map(|a| a.k).max().unwrap_or(0)
    }
}

/// Which unlearning procedure to run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Mechanism {
    /// Noise on the learned arm when the budget is loose, rollback otherwise.
    Adaptive { threshold_scale: f64 },
    /// Noise on every requested arm, whatever was learned.
    Gaussian,
    /// Exact removal of every requested point.
    Rollback,
    /// Roll back `floor(eta * k)` points, noise the rest.
    Mixing { eta: f64 },
    /// Count-based rule; pairs with the imitation learner.
    Imitation,
    /// The Gaussian baseline with half the calibrated noise. Not private.
    HalvedNoise,
}

impl Mechanism {
    pub fn label(&self) -> String {
        match self {
            Mechanism::Adaptive { .. } => "adaptive".into(),
            Mechanism::Gaussian => "gaussian".into(),
            Mechanism::Rollback => "rollback".into(),
            Mechanism::Mixing { eta } => format!("mixing-{eta}"),
            Mechanism::Imitation => "imitation".into(),
            Mechanism::HalvedNoise => "halved-noise".into(),
        }
    }

    pub fn learner(&self) -> LearnerKind {
        match self {
            Mechanism::Imitation => LearnerKind::Imitation,
            _ => LearnerKind::Lcb,
        }
    }

    /// Realistic pipeline step: unlearn `request` from `learned`.
    pub fn apply(
        &self,
        learned: &LearnOutput,
        request: &UnlearningRequest,
        deleted: &DeletedRewards,
        gamma: f64,
        seed: u64,
    ) -> Result<UnlearnOutcome> {
        match *self {
            Mechanism::Adaptive { threshold_scale } => {
                adaptive(learned, request, deleted, gamma, seed, threshold_scale)
            }
            Mechanism::Gaussian => unlearn_gaussian(learned, request, deleted, gamma, seed),
            Mechanism::Rollback => unlearn_rollback(learned, request, deleted),
            Mechanism::Mixing { eta } => {
                let k = request.source_arm().map_or(0, |a| request.k_of(a));
                unlearn_mixing(learned, request, deleted, gamma, mixing_k_prime(eta, k)?, seed)
            }
            Mechanism::Imitation => unlearn_imitation(&learned.counts, request),
            Mechanism::HalvedNoise => gaussian_scaled(learned, request, deleted, gamma, seed, 0.5),
        }
    }

    /// Empty-request pipeline step on the retained-data statistics.
    pub fn apply_empty(&self, retained: &LearnOutput, meta: &RequestMeta, gamma: f64, seed: u64) -> Result<UnlearnOutcome> {
        match *self {
            Mechanism::Adaptive { threshold_scale } => Ok(adaptive_empty(retained, meta, gamma, seed, threshold_scale)),
            Mechanism::Gaussian => Ok(gaussian_empty(retained, meta, gamma, seed, 1.0)),
            Mechanism::Rollback | Mechanism::Imitation => Ok(identity(retained)),
            Mechanism::Mixing { eta } => {
                let k = meta.arms.first().map_or(0, |am| am.k);
                unlearn_mixing_empty(retained, meta, gamma, mixing_k_prime(eta, k)?, seed)
            }
            Mechanism::HalvedNoise => Ok(gaussian_empty(retained, meta, gamma, seed, 0.5)),
        }
    }
}

/// `floor(eta * k)` with a small guard so `eta = 0.25, k = 4` gives 1.
pub fn mixing_k_prime(eta: f64, k: usize) -> Result<usize> {
    if !(0.0..=1.0).contains(&eta) {
        return Err(Error::InvalidParameter(format!("mixing ratio {eta} outside [0, 1]")));
    }
    Ok(((eta * k as f64) + 1e-9).floor() as usize)
}

fn single_source(request: &UnlearningRequest) -> Result<ArmIndex> {
    request
        .source_arm()
        .ok_or_else(|| Error::InvalidRequest(format!("expected a single-source request, got {} source arms", request.entries().len())))
}

fn identity(learned: &LearnOutput) -> UnlearnOutcome {
    UnlearnOutcome {
        chosen: learned.chosen_by_lcb(),
        branch: Branch::Rollback,
        noise: 0.0,
        lcb: learned.lcb.clone(),
        warnings: Vec::new(),
    }
}

impl LearnOutput {
    fn chosen_by_lcb(&self) -> ArmIndex {
        argmax(&self.lcb)
    }
}

fn noise_draw(seed: u64, arm: ArmIndex) -> f64 {
    rng::standard_normal(&mut rng::stream(seed, Purpose::Noise, &[arm.0 as u64]))
}

fn check_support(learned: &LearnOutput, request: &UnlearningRequest, deleted: &DeletedRewards) -> Result<()> {
    learned.validate()?;
    for arm in request.arms() {
        if arm.0 >= learned.num_arms() {
            return Err(Error::InvalidRequest(format!("arm {arm} out of range")));
        }
        let k = request.k_of(arm);
        let available = learned.counts.get(arm);
        if k > available {
            return Err(Error::RequestExceedsSupport { arm, available, requested: k });
        }
        let got = deleted.get(&arm).map_or(0, Vec::len);
        if got != k {
            return Err(Error::InvalidRequest(format!("arm {arm}: {k} deletions but {got} deleted rewards")));
        }
    }
    Ok(())
}

/// Rolls one arm back in place, applying the unseen-arm convention when
/// every point of the arm is deleted.
fn rollback_into(lcb: &mut [f64], learned: &LearnOutput, arm: ArmIndex, deleted: &[f64], warnings: &mut Vec<String>) -> Result<()> {
    match rollback_arm(&learned.means, &learned.counts, deleted, learned.tau, arm) {
        Ok(r) => lcb[arm.0] = r.lcb,
        Err(Error::RollbackEmptiesArm(_)) if deleted.len() == learned.counts.get(arm) => {
            lcb[arm.0] = -1.0;
            warnings.push(format!("arm {arm} emptied by rollback; treated as unseen"));
        }
        Err(e) => return Err(e),
    }
    Ok(())
}

/// Whether the adaptive rule may noise `arm`. `None` means rollback; the
/// string explains a forced fallback.
#[allow(clippy::too_many_arguments)]
fn gaussian_allowed(
    chosen: ArmIndex,
    arm: ArmIndex,
    k: usize,
    n: usize,
    n_min: usize,
    k_max: usize,
    m: usize,
    tau: ConfidenceLevel,
    gamma: f64,
    threshold_scale: f64,
) -> std::result::Result<Option<f64>, String> {
    if chosen != arm || k == 0 || k_max >= n_min {
        return Ok(None);
    }
    let threshold = gamma_threshold_multi(n_min, k_max, m, tau).expect("k_max < n_min");
    if !(gamma < threshold_scale * threshold) {
        return Ok(None);
    }
    match sensitivity_single(k, n, m, tau) {
        Ok(s) => Ok(Some(s)),
        Err(e) => Err(format!("{e}; falling back to rollback for arm {arm}")),
    }
}

fn adaptive(
    learned: &LearnOutput,
    request: &UnlearningRequest,
    deleted: &DeletedRewards,
    gamma: f64,
    seed: u64,
    threshold_scale: f64,
) -> Result<UnlearnOutcome> {
    check_support(learned, request, deleted)?;
    let m = learned.num_arms();
    let n_min = request.arms().map(|a| learned.counts.get(a)).min().unwrap_or(0);
    let k_max = request.k_max();
    let mut lcb = learned.lcb.clone();
    let mut warnings = Vec::new();
    let mut noise = 0.0;
    let mut noised = false;
    for arm in request.arms() {
        let k = request.k_of(arm);
        let n = learned.counts.get(arm);
        match gaussian_allowed(learned.chosen, arm, k, n, n_min, k_max, m, learned.tau, gamma, threshold_scale) {
            Ok(Some(sens)) => {
                noise = sens * gamma * noise_draw(seed, arm);
                lcb[arm.0] += noise;
                noised = true;
            }
            Ok(None) => rollback_into(&mut lcb, learned, arm, &deleted[&arm], &mut warnings)?,
            Err(w) => {
                warnings.push(w);
                rollback_into(&mut lcb, learned, arm, &deleted[&arm], &mut warnings)?;
            }
        }
    }
    Ok(UnlearnOutcome {
        chosen: argmax(&lcb),
        branch: if noised { Branch::Gaussian } else { Branch::Rollback },
        noise,
        lcb,
        warnings,
    })
}

fn adaptive_empty(retained: &LearnOutput, meta: &RequestMeta, gamma: f64, seed: u64, threshold_scale: f64) -> UnlearnOutcome {
    let m = retained.num_arms();
    let (n_min, k_max) = (meta.n_min(), meta.k_max());
    let mut out = identity(retained);
    for am in &meta.arms {
        let allowed = gaussian_allowed(meta.original_chosen, am.arm, am.k, am.n_before, n_min, k_max, m, retained.tau, gamma, threshold_scale);
        if let Ok(Some(sens)) = allowed {
            out.noise = sens * gamma * noise_draw(seed, am.arm);
            out.lcb[am.arm.0] += out.noise;
            out.branch = Branch::Gaussian;
        }
    }
    out.chosen = argmax(&out.lcb);
    out
}

/// Adaptive single-source unlearning. An empty request is a no-op.
pub fn unlearn_single(
    learned: &LearnOutput,
    request: &UnlearningRequest,
    deleted: &DeletedRewards,
    gamma: f64,
    seed: u64,
    threshold_scale: f64,
) -> Result<UnlearnOutcome> {
    if !request.is_empty() {
        single_source(request)?;
    }
    adaptive(learned, request, deleted, gamma, seed, threshold_scale)
}

/// Empty-request counterpart of [`unlearn_single`].
pub fn unlearn_single_empty(retained: &LearnOutput, meta: &RequestMeta, gamma: f64, seed: u64, threshold_scale: f64) -> Result<UnlearnOutcome> {
    if meta.arms.len() > 1 {
        return Err(Error::InvalidRequest("expected single-source request metadata".into()));
    }
    Ok(adaptive_empty(retained, meta, gamma, seed, threshold_scale))
}

/// Adaptive multi-source unlearning; at most the learned arm gets noise.
pub fn unlearn_multi(
    learned: &LearnOutput,
    request: &UnlearningRequest,
    deleted: &DeletedRewards,
    gamma: f64,
    seed: u64,
    threshold_scale: f64,
) -> Result<UnlearnOutcome> {
    adaptive(learned, request, deleted, gamma, seed, threshold_scale)
}

pub fn unlearn_multi_empty(retained: &LearnOutput, meta: &RequestMeta, gamma: f64, seed: u64, threshold_scale: f64) -> UnlearnOutcome {
    adaptive_empty(retained, meta, gamma, seed, threshold_scale)
}

/// Rolls back every requested point: equivalent to retraining.
pub fn unlearn_rollback(learned: &LearnOutput, request: &UnlearningRequest, deleted: &DeletedRewards) -> Result<UnlearnOutcome> {
    check_support(learned, request, deleted)?;
    let mut lcb = learned.lcb.clone();
    let mut warnings = Vec::new();
    for arm in request.arms() {
        rollback_into(&mut lcb, learned, arm, &deleted[&arm], &mut warnings)?;
    }
    Ok(UnlearnOutcome { chosen: argmax(&lcb), branch: Branch::Rollback, noise: 0.0, lcb, warnings })
}

/// Gaussian baseline: noise on every requested arm regardless of the
/// learned arm.
pub fn unlearn_gaussian(learned: &LearnOutput, request: &UnlearningRequest, deleted: &DeletedRewards, gamma: f64, seed: u64) -> Result<UnlearnOutcome> {
    gaussian_scaled(learned, request, deleted, gamma, seed, 1.0)
}

fn gaussian_scaled(
    learned: &LearnOutput,
    request: &UnlearningRequest,
    deleted: &DeletedRewards,
    gamma: f64,
    seed: u64,
    factor: f64,
) -> Result<UnlearnOutcome> {
    check_support(learned, request, deleted)?;
    let m = learned.num_arms();
    let mut lcb = learned.lcb.clone();
    let mut warnings = Vec::new();
    let mut noise = 0.0;
    let mut noised = false;
    for arm in request.arms() {
        let (k, n) = (request.k_of(arm), learned.counts.get(arm));
        let sens = sensitivity_single(k, n, m, learned.tau);
        match sens {
            Ok(s) if gamma.is_finite() => {
                let nu = factor * s * gamma * noise_draw(seed, arm);
                lcb[arm.0] += nu;
                noise += nu;
                noised = true;
            }
            Ok(_) => {
                warnings.push(format!("infinite noise multiplier; rolled back arm {arm}"));
                rollback_into(&mut lcb, learned, arm, &deleted[&arm], &mut warnings)?;
            }
            Err(e) => {
                warnings.push(format!("{e}; falling back to rollback for arm {arm}"));
                rollback_into(&mut lcb, learned, arm, &deleted[&arm], &mut warnings)?;
            }
        }
    }
    Ok(UnlearnOutcome {
        chosen: argmax(&lcb),
        branch: if noised { Branch::Gaussian } else { Branch::Rollback },
        noise,
        lcb,
        warnings,
    })
}

fn gaussian_empty(retained: &LearnOutput, meta: &RequestMeta, gamma: f64, seed: u64, factor: f64) -> UnlearnOutcome {
    let m = retained.num_arms();
    let mut out = identity(retained);
    for am in &meta.arms {
        if let Ok(s) = sensitivity_single(am.k, am.n_before, m, retained.tau) {
            if gamma.is_finite() {
                let nu = factor * s * gamma * noise_draw(seed, am.arm);
                out.lcb[am.arm.0] += nu;
                out.noise += nu;
                out.branch = Branch::Gaussian;
            }
        }
    }
    out.chosen = argmax(&out.lcb);
    out
}

fn mixing_sigma(k: usize, k_prime: usize, n: usize, gamma: f64) -> f64 {
    if k_prime == k {
        0.0
    } else {
        3.0 * (k - k_prime) as f64 / (2.0 * (n - k_prime) as f64) * gamma
    }
}

fn mixing_branch(k: usize, k_prime: usize) -> Branch {
    if k_prime == k {
        Branch::Rollback
    } else if k_prime == 0 {
        Branch::Gaussian
    } else {
        Branch::Mixed
    }
}

/// Rolls back a uniform `k'`-subset of the request, then noises the rest.
pub fn unlearn_mixing(
    learned: &LearnOutput,
    request: &UnlearningRequest,
    deleted: &DeletedRewards,
    gamma: f64,
    k_prime: usize,
    seed: u64,
) -> Result<UnlearnOutcome> {
    if request.is_empty() {
        check_support(learned, request, deleted)?;
        return Ok(identity(learned));
    }
    let a0 = single_source(request)?;
    check_support(learned, request, deleted)?;
    let (k, n, m) = (request.k_of(a0), learned.counts.get(a0), learned.num_arms());
    if k_prime > k {
        return Err(Error::InvalidParameter(format!("k' = {k_prime} exceeds k = {k}")));
    }
    let mut warnings = Vec::new();
    let mut k_prime = if learned.chosen == a0 { k_prime } else { k };
    if k_prime < k {
        if let Err(e) = sensitivity_single(k, n, m, learned.tau) {
            warnings.push(format!("{e}; falling back to rollback"));
            k_prime = k;
        } else if !gamma.is_finite() {
            warnings.push("infinite noise multiplier; falling back to rollback".into());
            k_prime = k;
        }
    }
    let rewards = &deleted[&a0];
    let mut lcb = learned.lcb.clone();
    let subset: Vec<f64> = if k_prime == k {
        rewards.clone()
    } else {
        let mut r = rng::stream(seed, Purpose::MixSubset, &[a0.0 as u64]);
        index::sample(&mut r, k, k_prime).into_iter().map(|i| rewards[i]).collect()
    };
    rollback_into(&mut lcb, learned, a0, &subset, &mut warnings)?;
    let sigma = mixing_sigma(k, k_prime, n, gamma);
    let noise = if sigma > 0.0 { sigma * noise_draw(seed, a0) } else { 0.0 };
    lcb[a0.0] += noise;
    Ok(UnlearnOutcome { chosen: argmax(&lcb), branch: mixing_branch(k, k_prime), noise, lcb, warnings })
}

/// Empty-request counterpart of [`unlearn_mixing`].
pub fn unlearn_mixing_empty(retained: &LearnOutput, meta: &RequestMeta, gamma: f64, k_prime: usize, seed: u64) -> Result<UnlearnOutcome> {
    let mut out = identity(retained);
    let Some(am) = meta.arms.first() else {
        return Ok(out);
    };
    if meta.arms.len() > 1 {
        return Err(Error::InvalidRequest("mixing needs a single-source request".into()));
    }
    if k_prime > am.k {
        return Err(Error::InvalidParameter(format!("k' = {k_prime} exceeds k = {}", am.k)));
    }
    let m = retained.num_arms();
    let eligible = meta.original_chosen == am.arm
        && k_prime < am.k
        && gamma.is_finite()
        && sensitivity_single(am.k, am.n_before, m, retained.tau).is_ok();
    if eligible {
        let sigma = mixing_sigma(am.k, k_prime, am.n_before, gamma);
        out.noise = sigma * noise_draw(seed, am.arm);
        out.lcb[am.arm.0] += out.noise;
        out.branch = mixing_branch(am.k, k_prime);
        out.chosen = argmax(&out.lcb);
    }
    Ok(out)
}

/// Decrements counts by the request and returns the most frequent arm.
pub fn unlearn_imitation(counts: &SampleCounts, request: &UnlearningRequest) -> Result<UnlearnOutcome> {
    let mut updated = counts.clone();
    for arm in request.arms() {
        let k = request.k_of(arm);
        let slot = updated
            .as_mut_vec()
            .get_mut(arm.0)
            .ok_or_else(|| Error::InvalidRequest(format!("arm {arm} out of range")))?;
        if k > *slot {
            return Err(Error::RequestExceedsSupport { arm, available: *slot, requested: k });
        }
        *slot -= k;
    }
    Ok(UnlearnOutcome {
        chosen: argmax_counts(updated.as_slice()),
        branch: Branch::Imitation,
        noise: 0.0,
        lcb: updated.as_slice().iter().map(|&c| c as f64).collect(),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bandit::{gen_fixed_sample_dataset, select_request, DataModel, DataPoint, Dataset, RewardModel};
    use crate::learner::{imitation_learn, lcb_learn};
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn tau(n: usize) -> ConfidenceLevel {
        ConfidenceLevel::for_size(n)
    }

    #[test]
    fn gamma_values() {
        let g = gamma_from_privacy(&PrivacyBudget::new(1.0, 0.05).unwrap()).unwrap();
        assert!((g - 2.537272482359039).abs() < 1e-12);
        assert_eq!(gamma_from_privacy(&PrivacyBudget::new(0.0, 0.05).unwrap()).unwrap(), f64::INFINITY);
        assert!(gamma_from_privacy(&PrivacyBudget::new(1.0, 0.0).unwrap()).is_err());
        assert!(PrivacyBudget::new(1.0, 1.0).is_err());
    }

    #[test]
    fn sensitivity_values() {
        assert_eq!(sensitivity_single(80, 600, 5, tau(3000)).unwrap(), 0.2);
        assert_eq!(sensitivity_single(0, 600, 5, tau(3000)).unwrap(), 0.0);
        let half = ConfidenceLevel::new(0.5).unwrap();
        assert_eq!(sensitivity_single(1, 4, 2, half).unwrap(), 0.375);
        let err = sensitivity_single(4, 4, 2, half).unwrap_err();
        assert!(err.to_string().starts_with("sensitivity bound invalid: k too large"));
    }

    #[test]
    fn thresholds() {
        let t = tau(3000);
        assert!((gamma_threshold_single(600, 80, 5, t).unwrap() - 0.32136963224375076).abs() < 1e-12);
        assert!((gamma_threshold_single(600, 0, 5, t).unwrap() - 0.2991788458286322).abs() < 1e-12);
        assert!((gamma_threshold_multi(500, 40, 5, t).unwrap() - 0.34168632028072393).abs() < 1e-12);
        assert!(gamma_threshold_single(600, 600, 5, t).is_err());
        let star = gamma_crossover(600, 80, 5, t).unwrap();
        assert!((star - 0.16643).abs() < 1e-5);
    }

    #[test]
    fn threshold_over_crossover_identity() {
        // gamma0 / gamma* = (sqrt(n-k) + sqrt(n)) / sqrt(n), which lies in (1, 2]
        for (n, k) in [(600, 80), (600, 0), (100, 5), (1000, 900)] {
            let t = tau(3000);
            let ratio = gamma_threshold_single(n, k, 5, t).unwrap() / gamma_crossover(n, k, 5, t).unwrap();
            let want = (((n - k) as f64).sqrt() + (n as f64).sqrt()) / (n as f64).sqrt();
            assert!((ratio - want).abs() < 1e-12);
        }
    }

    #[test]
    fn rollback_examples() {
        let half = ConfidenceLevel::new(0.5).unwrap();
        let counts = SampleCounts::new(vec![4, 1]).unwrap();
        let r = rollback_arm(&[0.5, 0.0], &counts, &[1.0], half, ArmIndex(0)).unwrap();
        assert!((r.mean - 1.0 / 3.0).abs() < 1e-15);
        let counts = SampleCounts::new(vec![3, 1]).unwrap();
        let r = rollback_arm(&[1.0, 0.0], &counts, &[1.0, 1.0], half, ArmIndex(0)).unwrap();
        assert_eq!(r.mean, 1.0);
        assert!((r.penalty - 0.8325546111576977).abs() < 1e-15);
        assert!((r.lcb - 0.16744538884230225).abs() < 1e-15);
        let id = rollback_arm(&[1.0, 0.0], &counts, &[], half, ArmIndex(0)).unwrap();
        assert_eq!(id.mean, 1.0);
        assert!(matches!(
            rollback_arm(&[1.0, 0.0], &counts, &[1.0, 1.0, 1.0], half, ArmIndex(0)),
            Err(Error::RollbackEmptiesArm(_))
        ));
    }

    fn setup(seed: u64, a0: usize, k: usize) -> (Dataset, LearnOutput, UnlearningRequest, DeletedRewards) {
        let means = RewardModel::new(vec![0.10, 0.08, 0.06, 0.04, 0.02]).unwrap();
        let d = gen_fixed_sample_dataset(&SampleCounts::uniform(5, 3000).unwrap(), &means, seed).unwrap();
        let learned = lcb_learn(&d, tau(3000)).unwrap();
        let req = select_request(&d, &BTreeMap::from([(ArmIndex(a0), k)]), seed).unwrap();
        let del = req.deleted_rewards(&d);
        (d, learned, req, del)
    }

    #[test]
    fn gaussian_branch_sigma() {
        for seed in 0..50 {
            let (_, learned, req, del) = setup(seed, 0, 80);
            let a0 = ArmIndex(0);
            if learned.chosen != a0 {
                continue;
            }
            let out = unlearn_single(&learned, &req, &del, 0.2, seed, 1.0).unwrap();
            assert_eq!(out.branch, Branch::Gaussian);
            let z = noise_draw(seed, a0);
            assert!((out.noise - 0.04 * z).abs() < 1e-15);
            for a in 1..5 {
                assert_eq!(out.lcb[a].to_bits(), learned.lcb[a].to_bits());
            }
            return;
        }
        panic!("no seed learned arm 0");
    }

    #[test]
    fn unchosen_source_rolls_back_to_retrain() {
        let (d, learned, req, del) = setup(1, 4, 80);
        assert_ne!(learned.chosen, ArmIndex(4));
        let out = unlearn_single(&learned, &req, &del, 0.01, 1, 1.0).unwrap();
        assert_eq!(out.branch, Branch::Rollback);
        assert_eq!(out.noise, 0.0);
        let retrained = lcb_learn(&d.without(&req), tau(3000)).unwrap();
        assert_eq!(out.chosen, retrained.chosen);
        for (x, y) in out.lcb.iter().zip(&retrained.lcb) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_request_is_noop() {
        let (_, learned, _, _) = setup(2, 0, 0);
        let req = UnlearningRequest::empty();
        let out = unlearn_single(&learned, &req, &BTreeMap::new(), 0.2, 2, 1.0).unwrap();
        assert_eq!(out.chosen, learned.chosen);
        let meta = RequestMeta::new(&learned, &req);
        let e = unlearn_single_empty(&learned, &meta, 0.2, 2, 1.0).unwrap();
        assert_eq!(e.chosen, learned.chosen);
        assert_eq!(e.noise, 0.0);
    }

    #[test]
    fn empty_counterpart_shares_noise() {
        for seed in 0..40 {
            let (d, learned, req, del) = setup(seed, 0, 80);
            let out = unlearn_single(&learned, &req, &del, 0.2, seed, 1.0).unwrap();
            let retained = lcb_learn(&d.without(&req), tau(3000)).unwrap();
            let meta = RequestMeta::new(&learned, &req);
            let e = unlearn_single_empty(&retained, &meta, 0.2, seed, 1.0).unwrap();
            assert_eq!(out.branch, e.branch);
            assert_eq!(out.noise.to_bits(), e.noise.to_bits());
        }
    }

    #[test]
    fn infinite_gamma_forces_rollback() {
        let (_, learned, req, del) = setup(3, 0, 80);
        let out = unlearn_single(&learned, &req, &del, f64::INFINITY, 3, 1.3).unwrap();
        assert_eq!(out.branch, Branch::Rollback);
    }

    #[test]
    fn sensitivity_failure_falls_back() {
        let pts: Vec<DataPoint> = (0..8).map(|i| DataPoint { arm: ArmIndex(i % 2), reward: 1.0 }).collect();
        let d = Dataset::new(2, DataModel::FixedSample, pts).unwrap();
        let learned = lcb_learn(&d, ConfidenceLevel::new(0.5).unwrap()).unwrap();
        assert_eq!(learned.chosen, ArmIndex(0));
        let req = UnlearningRequest::from_indices(&d, &[0, 2, 4]).unwrap();
        let out = unlearn_single(&learned, &req, &req.deleted_rewards(&d), 0.0, 0, f64::INFINITY).unwrap();
        assert_eq!(out.branch, Branch::Rollback);
        assert_eq!(out.chosen, ArmIndex(1));
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].starts_with("sensitivity bound invalid"));

        let req = UnlearningRequest::from_indices(&d, &[0, 2, 4, 6]).unwrap();
        let out = unlearn_single(&learned, &req, &req.deleted_rewards(&d), 0.0, 0, f64::INFINITY).unwrap();
        assert_eq!(out.lcb[0], -1.0);
        assert_eq!(out.warnings.len(), 1);
        assert!(out.warnings[0].contains("treated as unseen"));
    }

    #[test]
    fn mixing_sigma_value() {
        assert!((mixing_sigma(80, 40, 600, 0.5) - 0.05357142857142857).abs() < 1e-15);
        assert_eq!(mixing_k_prime(0.5, 81).unwrap(), 40);
        assert_eq!(mixing_k_prime(0.25, 4).unwrap(), 1);
    }

    #[test]
    fn mixing_extremes_match_base_mechanisms() {
        for seed in 0..20 {
            let (_, learned, req, del) = setup(seed, 0, 80);
            let full = unlearn_mixing(&learned, &req, &del, 0.5, 80, seed).unwrap();
            let rb = unlearn_rollback(&learned, &req, &del).unwrap();
            assert_eq!(full.lcb, rb.lcb);
            let none = unlearn_mixing(&learned, &req, &del, 0.5, 0, seed).unwrap();
            let g = unlearn_single(&learned, &req, &del, 0.5, seed, f64::INFINITY).unwrap();
            assert_eq!(none.lcb, g.lcb);
            assert_eq!(none.branch, g.branch);
            assert!(unlearn_mixing(&learned, &req, &del, 0.5, 81, seed).is_err());
        }
    }

    #[test]
    fn imitation_examples() {
        let c = SampleCounts::new(vec![10, 8]).unwrap();
        let pts: Vec<DataPoint> = (0..18).map(|i| DataPoint { arm: ArmIndex(usize::from(i >= 10)), reward: 0.0 }).collect();
        let d = Dataset::new(2, DataModel::FixedSample, pts).unwrap();
        let req = UnlearningRequest::from_indices(&d, &[0, 1, 2]).unwrap();
        let out = unlearn_imitation(&c, &req).unwrap();
        assert_eq!(out.lcb, vec![7.0, 8.0]);
        assert_eq!(out.chosen, ArmIndex(1));
        assert_eq!(unlearn_imitation(&c, &UnlearningRequest::empty()).unwrap().chosen, ArmIndex(0));
        let c = SampleCounts::new(vec![5, 5]).unwrap();
        let req = UnlearningRequest::from_indices(&d, &[12]).unwrap();
        assert_eq!(unlearn_imitation(&c, &req).unwrap().chosen, ArmIndex(0));
        let c = SampleCounts::new(vec![1, 0]).unwrap();
        assert!(unlearn_imitation(&c, &UnlearningRequest::from_indices(&d, &[0, 1]).unwrap()).is_err());
    }

    #[test]
    fn multi_reduces_to_single() {
        for seed in 0..20 {
            let (_, learned, req, del) = setup(seed, 0, 80);
            let a = unlearn_single(&learned, &req, &del, 0.3, seed, 1.0).unwrap();
            let b = unlearn_multi(&learned, &req, &del, 0.3, seed, 1.0).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn outcome_json_fields() {
        let (_, learned, req, del) = setup(4, 0, 80);
        let out = unlearn_single(&learned, &req, &del, 0.2, 4, 1.0).unwrap();
        let v = serde_json::to_value(&out).unwrap();
        for key in ["chosen", "branch", "noise", "lcb", "warnings"] {
            assert!(v.get(key).is_some());
        }
    }

    fn arb_dataset() -> impl Strategy<Value = (usize, Vec<(usize, f64)>)> {
        (2usize..=5).prop_flat_map(|m| (Just(m), prop::collection::vec((0..m, prop::sample::select(vec![0.0, 1.0, 0.25, 0.5])), 1..=200)))
    }

    proptest! {
        #[test]
        fn imitation_matches_relearn((m, pts) in arb_dataset(), pick in prop::collection::vec(any::<bool>(), 200)) {
            let d = Dataset::new(m, DataModel::FixedSample, pts.iter().map(|&(a, r)| DataPoint { arm: ArmIndex(a), reward: r }).collect()).unwrap();
            let idx: Vec<usize> = (0..d.len()).filter(|&i| pick[i]).collect();
            prop_assume!(idx.len() < d.len());
            let req = UnlearningRequest::from_indices(&d, &idx).unwrap();
            let t = tau(d.len());
            let out = unlearn_imitation(&d.counts(), &req).unwrap();
            prop_assert_eq!(out.chosen, imitation_learn(&d.without(&req), t).unwrap().chosen);
        }

        #[test]
        fn branch_ignores_deleted_rewards(seed in 0u64..1000, gamma in 0.0f64..1.0, flip in any::<bool>()) {
            let (_, learned, req, mut del) = setup(seed % 7, 0, 80);
            let a = unlearn_single(&learned, &req, &del, gamma, seed, 1.3).unwrap();
            for r in del.get_mut(&ArmIndex(0)).unwrap() {
                *r = if flip { 1.0 - *r } else { 0.5 };
            }
            let b = unlearn_single(&learned, &req, &del, gamma, seed, 1.3).unwrap();
            prop_assert_eq!(a.branch, b.branch);
        }

        #[test]
        fn noise_touches_one_coordinate(seed in any::<u64>(), gamma in 0.01f64..0.3) {
            let (_, learned, req, del) = setup(seed % 5, 0, 80);
            let out = unlearn_single(&learned, &req, &del, gamma, seed, 2.0).unwrap();
            let changed = out.lcb.iter().zip(&learned.lcb).filter(|(x, y)| x.to_bits() != y.to_bits()).count();
            prop_assert!(changed <= 1);
        }

        #[test]
        fn mixing_minimum_at_endpoints(n in 200usize..5000, frac in 0.0f64..0.5, gamma in 0.0f64..5.0, m in 2usize..10) {
            let k = ((n as f64) * frac) as usize;
            let l = ((n * m) as f64).ln();
            let f = |x: usize| 2.0 * (PI * l / (n - x) as f64).sqrt() + 3.0 * (k - x) as f64 * gamma / (2.0 * (n - x) as f64);
            let interior = (1..k).map(f).fold(f64::INFINITY, f64::min);
            prop_assert!(f(0).min(f(k)) <= interior + 1e-12);
        }
    }
}

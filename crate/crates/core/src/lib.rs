//! Learning and certified unlearning for offline stochastic multi-armed bandits.
//!
//! The crate covers dataset generation, the LCB and imitation learners,
//! Gaussian/rollback/adaptive/mixing/multi-source unlearners, a Monte Carlo
//! auditor for the unlearning guarantee, closed-form sub-optimality bounds
//! and an experiment harness.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod audit;
pub mod bandit;
pub mod bounds;
pub mod error;
pub mod harness;
pub mod learner;
pub mod par;
pub mod rng;
pub mod unlearner;

pub use bandit::{
    gen_distribution_dataset, gen_fixed_sample_dataset, select_block_request, select_request, ArmIndex,
    BehaviorPolicy, DataModel, DataPoint, Dataset, RewardModel, SampleCounts, UnlearningRequest,
};
pub use error::{Error, Result};
pub use learner::{imitation_learn, lcb_learn, ConfidenceLevel, LearnOutput, LearnerKind};
pub use par::Execution;

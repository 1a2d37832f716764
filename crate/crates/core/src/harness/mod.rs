//! Monte Carlo experiment runner with prefix sharing.
//!
//! One long trajectory is generated per dataset seed; every sweep value
//! reads a prefix of it. Each `(dataset, value, deletion, run)` trial feeds
//! the same noise seed to every algorithm, so algorithms are compared on
//! common random numbers. Chosen arms are tallied as integer counts, which
//! keeps results independent of thread scheduling.

mod plot;

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bandit::{
    gen_distribution_dataset, gen_fixed_sample_dataset, select_request, ArmIndex, BehaviorPolicy, DataModel, Dataset,
    RewardModel, SampleCounts, UnlearningRequest,
};
use crate::error::{Error, Result};
use crate::learner::{imitation_learn, lcb_learn, ConfidenceLevel};
use crate::par::{self, Execution};
use crate::rng::{self, derive_seed, Purpose};
use crate::unlearner::{unlearn_imitation, Mechanism};

pub use plot::{emit_results, read_results_csv, render_panels, write_results_csv};

pub const DEFAULT_MEANS: [f64; 5] = [0.10, 0.08, 0.06, 0.04, 0.02];

/// Which arm(s) the deletions target, ranked by true mean.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Case {
    /// The optimal arm (and the runner-up for multi-source).
    Hard,
    /// The second-best suboptimal arm (and the next one for multi-source).
    Easy,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Sources {
    #[default]
    Single,
    Multi,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeletionScheme {
    /// `k` points of the source arm, uniformly without replacement.
    #[default]
    Uniform,
    /// `k` consecutive points of the source arm from a uniform start.
    Consecutive,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepVar {
    #[serde(alias = "N")]
    N,
    K,
    Gamma,
    Eta,
}

impl fmt::Display for SweepVar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepVar::N => "n",
            SweepVar::K => "k",
            SweepVar::Gamma => "gamma",
            SweepVar::Eta => "eta",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FixedParams {
    pub n: usize,
    pub k: usize,
    pub gamma: f64,
    /// Rollback fraction for the mixing baseline.
    pub eta: f64,
}

impl Default for FixedParams {
    fn default() -> Self {
        FixedParams { n: 3000, k: 80, gamma: 0.5, eta: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sweep {
    pub vary: SweepVar,
    pub grid: Vec<f64>,
    #[serde(default)]
    pub fixed: FixedParams,
}

impl Sweep {
    fn params(&self, value: f64) -> Result<FixedParams> {
        let mut p = self.fixed;
        let as_count = |v: f64, name: &str| -> Result<usize> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(Error::InvalidParameter(format!("{name} grid value {v} is not a non-negative integer")))
            }
        };
        match self.vary {
            SweepVar::N => p.n = as_count(value, "N")?,
            SweepVar::K => p.k = as_count(value, "k")?,
            SweepVar::Gamma => p.gamma = value,
            SweepVar::Eta => p.eta = value,
        }
        Ok(p)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    /// LCB on the undeleted prefix.
    Oracle,
    Gaussian,
    Rollback,
    Mixing,
    Adaptive,
    /// Imitation learner with count-based unlearning.
    Imitation,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Oracle => "oracle",
            Algorithm::Gaussian => "gaussian",
            Algorithm::Rollback => "rollback",
            Algorithm::Mixing => "mixing",
            Algorithm::Adaptive => "adaptive",
            Algorithm::Imitation => "imitation",
        }
    }
}

fn default_m() -> usize {
    5
}
fn default_means() -> Vec<f64> {
    DEFAULT_MEANS.to_vec()
}
fn default_datasets() -> usize {
    200
}
fn default_runs() -> usize {
    10
}
fn default_deletions() -> usize {
    5
}
fn default_block() -> usize {
    100
}
fn default_scale() -> f64 {
    1.3
}
fn default_algorithms() -> Vec<Algorithm> {
    vec![Algorithm::Oracle, Algorithm::Gaussian, Algorithm::Rollback, Algorithm::Mixing, Algorithm::Adaptive]
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    pub model: DataModel,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_means")]
    pub means: Vec<f64>,
    #[serde(default)]
    pub c_star: Option<f64>,
    #[serde(default = "default_datasets")]
    pub num_datasets: usize,
    #[serde(default = "default_runs")]
    pub runs_per_config: usize,
    #[serde(default = "default_deletions")]
    pub deletions_per_prefix: usize,
    /// Logical block size; informs the consecutive scheme's documentation only.
    #[serde(default = "default_block")]
    pub block_size: usize,
    pub case: Case,
    #[serde(default)]
    pub sources: Sources,
    #[serde(default)]
    pub deletion: DeletionScheme,
    pub sweep: Sweep,
    #[serde(default = "default_algorithms")]
    pub algorithms: Vec<Algorithm>,
    #[serde(default = "default_scale")]
    pub threshold_scale: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl ExperimentConfig {
    /// The default fixed-sample configuration sweeping `vary` over `grid`.
    pub fn new(model: DataModel, case: Case, vary: SweepVar, grid: Vec<f64>) -> Self {
        ExperimentConfig {
            name: String::new(),
            model,
            m: 5,
            means: default_means(),
            c_star: (model == DataModel::Distribution).then_some(5.0),
            num_datasets: default_datasets(),
            runs_per_config: default_runs(),
            deletions_per_prefix: default_deletions(),
            block_size: default_block(),
            case,
            sources: Sources::Single,
            deletion: DeletionScheme::Uniform,
            sweep: Sweep { vary, grid, fixed: FixedParams::default() },
            algorithms: default_algorithms(),
            threshold_scale: default_scale(),
            seed: 0,
            execution: Execution::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParameter(msg));
        if self.means.len() != self.m {
            return bad(format!("{} means given for m = {}", self.means.len(), self.m));
        }
        RewardModel::new(self.means.clone())?;
        if self.sweep.grid.is_empty() {
            return bad("sweep grid is empty".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms configured".into());
        }
        if self.num_datasets == 0 || self.runs_per_config == 0 || self.deletions_per_prefix == 0 {
            return bad("num_datasets, runs_per_config and deletions_per_prefix must be positive".into());
        }
        if self.model == DataModel::Distribution && self.c_star.is_none() {
            return bad("distribution model needs c_star".into());
        }
        if self.sources == Sources::Multi && self.m < 4 {
            return bad("multi-source cases need m >= 4".into());
        }
        for &v in &self.sweep.grid {
            let p = self.sweep.params(v)?;
            if p.n == 0 {
                return bad("N must be positive".into());
            }
            if !(p.gamma >= 0.0) {
                return bad(format!("gamma = {} must be >= 0", p.gamma));
            }
            if !(0.0..=1.0).contains(&p.eta) {
                return bad(format!("eta = {} outside [0, 1]", p.eta));
            }
        }
        Ok(())
    }

    /// Case label with a suffix for multi-source runs.
    pub fn case_label(&self) -> String {
        let base = match self.case {
            Case::Hard => "hard",
            Case::Easy => "easy",
        };
        match self.sources {
            Sources::Single => base.to_string(),
            Sources::Multi => format!("{base}-multi"),
        }
    }

    fn source_arms(&self, rewards: &RewardModel) -> Vec<ArmIndex> {
        let ranked = rewards.ranked();
        match (self.case, self.sources) {
            (Case::Hard, Sources::Single) => vec![ranked[0]],
            (Case::Easy, Sources::Single) => vec![ranked[2]],
            (Case::Hard, Sources::Multi) => vec![ranked[0], ranked[1]],
            (Case::Easy, Sources::Multi) => vec![ranked[2], ranked[3]],
        }
    }

    fn trajectory_len(&self) -> Result<usize> {
        self.sweep.grid.iter().map(|&v| self.sweep.params(v).map(|p| p.n)).try_fold(0, |a, n| n.map(|n| a.max(n)))
    }
}

/// A config file holds one experiment or a list of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ConfigFile {
    Suite { experiments: Vec<ExperimentConfig> },
    Single(ExperimentConfig),
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Vec<ExperimentConfig>> {
        let text = std::fs::read_to_string(path)?;
        let parsed: ConfigFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.line(),
            message: e.to_string(),
        })?;
        Ok(match parsed {
            ConfigFile::Suite { experiments } => experiments,
            ConfigFile::Single(c) => vec![c],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub model: DataModel,
    pub case: String,
    pub vary: SweepVar,
    pub value: f64,
    pub algorithm: Algorithm,
    pub mean_subopt: f64,
    pub trials: u64,
    /// Standard error over per-dataset means.
    #[serde(default)]
    pub se: f64,
    /// Trials skipped because a precondition failed.
    #[serde(default)]
    pub flagged: u64,
    /// Trials where an unlearner fell back to rollback.
    #[serde(default)]
    pub fallbacks: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_dataset: Vec<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn get(&self, case: &str, vary: SweepVar, value: f64, algorithm: Algorithm) -> Option<&ResultRow> {
        self.rows
            .iter()
            .find(|r| r.case == case && r.vary == vary && r.value == value && r.algorithm == algorithm)
    }

    pub fn extend(&mut self, other: ResultTable) {
        self.rows.extend(other.rows);
    }
}

/// `mu(a*) - mu(chosen)`.
pub fn suboptimality(rewards: &RewardModel, chosen: ArmIndex) -> f64 {
    rewards.gap(chosen)
}

#[derive(Clone, Default)]
struct Cell {
    counts: Vec<u64>,
    flagged: u64,
    fallbacks: u64,
}

/// Tallies for one dataset, indexed `[value][algorithm]`.
type DatasetTally = Vec<Vec<Cell>>;

fn generate(cfg: &ExperimentConfig, rewards: &RewardModel, len: usize, d: usize) -> Result<Dataset> {
    let seed = derive_seed(cfg.seed, Purpose::Dataset, &[d as u64]);
    match cfg.model {
        DataModel::FixedSample => gen_fixed_sample_dataset(&SampleCounts::uniform(cfg.m, len)?, rewards, seed),
        DataModel::Distribution => {
            let c = cfg.c_star.expect("validated");
            let policy = BehaviorPolicy::from_concentrability(cfg.m, c, rewards.best_arm())?;
            gen_distribution_dataset(len, &policy, rewards, seed)
        }
    }
}

fn make_request(cfg: &ExperimentConfig, prefix: &Dataset, sources: &[ArmIndex], k: usize, key: &[u64]) -> Result<UnlearningRequest> {
    let seed = derive_seed(cfg.seed, Purpose::Request, key);
    match cfg.deletion {
        DeletionScheme::Uniform => select_request(prefix, &sources.iter().map(|&a| (a, k)).collect(), seed),
        DeletionScheme::Consecutive => {
            let mut entries = BTreeMap::new();
            for &arm in sources {
                let pos = prefix.positions_of(arm);
                if k > pos.len() {
                    return Err(Error::RequestExceedsSupport { arm, available: pos.len(), requested: k });
                }
                let mut r = rng::stream(seed, Purpose::Request, &[arm.0 as u64]);
                let start = (rng::open_unit(&mut r) * (pos.len() - k + 1) as f64) as usize;
                entries.insert(arm, pos[start..start + k].to_vec());
            }
            UnlearningRequest::new(prefix, entries)
        }
    }
}

fn run_dataset(cfg: &ExperimentConfig, rewards: &RewardModel, params: &[FixedParams], len: usize, d: usize) -> Result<DatasetTally> {
    let m = cfg.m;
    let algs = &cfg.algorithms;
    let full = generate(cfg, rewards, len, d)?;
    let sources = cfg.source_arms(rewards);
    let trials_per_deletion = cfg.runs_per_config as u64;
    let mut tally: DatasetTally = vec![vec![Cell { counts: vec![0; m], ..Cell::default() }; algs.len()]; params.len()];
    for (vi, p) in params.iter().enumerate() {
        let prefix = full.prefix(p.n)?;
        let tau = ConfidenceLevel::for_size(p.n);
        let learned = lcb_learn(&prefix, tau);
        let imitated = imitation_learn(&prefix, tau);
        for j in 0..cfg.deletions_per_prefix {
            let key = [d as u64, vi as u64, j as u64];
            let request = make_request(cfg, &prefix, &sources, p.k, &key);
            let (Ok(learned), Ok(imitated), Ok(request)) = (&learned, &imitated, request) else {
                for cell in &mut tally[vi] {
                    cell.flagged += trials_per_deletion;
                }
                continue;
            };
            let deleted = request.deleted_rewards(&prefix);
            for r in 0..cfg.runs_per_config {
                let seed = derive_seed(cfg.seed, Purpose::Trial, &[d as u64, vi as u64, j as u64, r as u64]);
                for (ai, alg) in algs.iter().enumerate() {
                    let outcome = match alg {
                        Algorithm::Oracle => Ok((learned.chosen, false)),
                        Algorithm::Imitation => unlearn_imitation(&imitated.counts, &request).map(|o| (o.chosen, false)),
                        other => {
                            let mech = match other {
                                Algorithm::Gaussian => Mechanism::Gaussian,
                                Algorithm::Rollback => Mechanism::Rollback,
                                Algorithm::Mixing => Mechanism::Mixing { eta: p.eta },
                                _ => Mechanism::Adaptive { threshold_scale: cfg.threshold_scale },
                            };
                            mech.apply(learned, &request, &deleted, p.gamma, seed).map(|o| (o.chosen, !o.warnings.is_empty()))
                        }
                    };
                    let cell = &mut tally[vi][ai];
                    match outcome {
                        Ok((chosen, fell_back)) => {
                            cell.counts[chosen.0] += 1;
                            cell.fallbacks += u64::from(fell_back);
                        }
                        Err(_) => cell.flagged += 1,
                    }
                }
            }
        }
    }
    Ok(tally)
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ResultTable> {
    cfg.validate()?;
    let rewards = RewardModel::new(cfg.means.clone())?;
    let params: Vec<FixedParams> = cfg.sweep.grid.iter().map(|&v| cfg.sweep.params(v)).collect::<Result<_>>()?;
    let len = cfg.trajectory_len()?;
    let tallies: Vec<DatasetTally> = par::map_collect(cfg.execution, cfg.num_datasets, |d| run_dataset(cfg, &rewards, &params, len, d))
        .into_iter()
        .collect::<Result<_>>()?;
    let gaps: Vec<f64> = (0..cfg.m).map(|a| rewards.gap(ArmIndex(a))).collect();
    let mut rows = Vec::new();
    for (vi, &value) in cfg.sweep.grid.iter().enumerate() {
        for (ai, &algorithm) in cfg.algorithms.iter().enumerate() {
            let mut counts = vec![0u64; cfg.m];
            let (mut flagged, mut fallbacks) = (0, 0);
            let mut per_dataset = Vec::with_capacity(tallies.len());
            for t in &tallies {
                let cell = &t[vi][ai];
                flagged += cell.flagged;
                fallbacks += cell.fallbacks;
                let n: u64 = cell.counts.iter().sum();
                let s: f64 = cell.counts.iter().zip(&gaps).map(|(&c, g)| c as f64 * g).sum();
                for (a, c) in counts.iter_mut().zip(&cell.counts) {
                    *a += c;
                }
                if n > 0 {
                    per_dataset.push(s / n as f64);
                }
            }
            let trials: u64 = counts.iter().sum();
            let mean = if trials == 0 { f64::NAN } else { counts.iter().zip(&gaps).map(|(&c, g)| c as f64 * g).sum::<f64>() / trials as f64 };
            rows.push(ResultRow {
                model: cfg.model,
                case: cfg.case_label(),
                vary: cfg.sweep.vary,
                value,
                algorithm,
                mean_subopt: mean,
                trials,
                se: standard_error(&per_dataset),
                flagged,
                fallbacks,
                per_dataset,
            });
        }
    }
    Ok(ResultTable { rows })
}

pub fn run_suite(configs: &[ExperimentConfig]) -> Result<ResultTable> {
    let mut table = ResultTable::default();
    for c in configs {
        table.extend(run_experiment(c)?);
    }
    Ok(table)
}

fn standard_error(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (var / n as f64).sqrt()
}

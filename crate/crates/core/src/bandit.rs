//! Problem instances, offline datasets and deletion requests.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Purpose};

/// Index of an arm in `0..m`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArmIndex(pub usize);

impl ArmIndex {
    pub fn get(self) -> usize {
        self.0
    }
}

impl fmt::Display for ArmIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Bernoulli reward means, one per arm.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RewardModel {
    means: Vec<f64>,
}

impl RewardModel {
    pub fn new(means: Vec<f64>) -> Result<Self> {
        if means.len() < 2 {
            return Err(Error::InvalidInstance(format!(
                "need at least 2 arms, got {}",
                means.len()
            )));
        }
        if let Some(bad) = means.iter().find(|mu| !(0.0..=1.0).contains(*mu)) {
            return Err(Error::InvalidInstance(format!("mean {bad} outside [0, 1]")));
        }
        Ok(RewardModel { means })
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn num_arms(&self) -> usize {
        self.means.len()
    }

    /// The optimal arm; ties go to the lowest index.
    pub fn best_arm(&self) -> ArmIndex {
        self.ranked()[0]
    }

    /// Arms sorted from best to worst mean, ties by index.
    pub fn ranked(&self) -> Vec<ArmIndex> {
        let mut arms: Vec<usize> = (0..self.means.len()).collect();
        arms.sort_by(|&a, &b| self.means[b].total_cmp(&self.means[a]).then(a.cmp(&b)));
        arms.into_iter().map(ArmIndex).collect()
    }

    /// Mean-reward gap `mu(a*) - mu(arm)`.
    pub fn gap(&self, arm: ArmIndex) -> f64 {
        self.means[self.best_arm().0] - self.means[arm.0]
    }

    fn draw<R: rand::RngCore>(&self, arm: ArmIndex, rng: &mut R) -> f64 {
        if rng::open_unit(rng) < self.means[arm.0] {
            1.0
        } else {
            0.0
        }
    }
}

/// Logging distribution over arms for the distribution model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BehaviorPolicy {
    probs: Vec<f64>,
}

impl BehaviorPolicy {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.len() < 2 {
            return Err(Error::InvalidPolicy("need at least 2 arms".into()));
        }
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::InvalidPolicy("negative or non-finite probability".into()));
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidPolicy(format!("probabilities sum to {total}, not 1")));
        }
        Ok(BehaviorPolicy { probs })
    }

    /// `1/C*` on `best`, the remainder spread uniformly over the other arms.
    pub fn from_concentrability(m: usize, c_star: f64, best: ArmIndex) -> Result<Self> {
        if m < 2 || best.0 >= m {
            return Err(Error::InvalidPolicy(format!("arm {best} invalid for m = {m}")));
        }
        if !(c_star >= 1.0) || !c_star.is_finite() {
            return Err(Error::InvalidPolicy(format!("C* = {c_star} must be >= 1")));
        }
        let head = 1.0 / c_star;
        let rest = (1.0 - head) / (m - 1) as f64;
        let mut probs = vec![rest; m];
        probs[best.0] = head;
        // renormalise the tail so the sum is exact to rounding
        let tail: f64 = probs.iter().enumerate().filter(|(a, _)| *a != best.0).map(|(_, p)| p).sum();
        if tail > 0.0 {
            let scale = (1.0 - head) / tail;
            for (a, p) in probs.iter_mut().enumerate() {
                if a != best.0 {
                    *p *= scale;
                }
            }
        }
        BehaviorPolicy::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    fn draw<R: rand::RngCore>(&self, rng: &mut R) -> ArmIndex {
        let u = rng::open_unit(rng);
        let mut acc = 0.0;
        let mut last = 0;
        for (a, &p) in self.probs.iter().enumerate() {
            if p > 0.0 {
                last = a;
            }
            acc += p;
            if u < acc {
                return ArmIndex(a);
            }
        }
        ArmIndex(last)
    }
}

/// Per-arm sample counts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SampleCounts(Vec<usize>);

impl SampleCounts {
    pub fn new(counts: Vec<usize>) -> Result<Self> {
        if counts.len() < 2 {
            return Err(Error::InvalidInstance("need at least 2 arms".into()));
        }
        Ok(SampleCounts(counts))
    }

    /// `n` points spread as evenly as round-robin allows.
    pub fn uniform(m: usize, n: usize) -> Result<Self> {
        SampleCounts::new((0..m).map(|a| n / m + usize::from(a < n % m)).collect())
    }

    pub fn get(&self, arm: ArmIndex) -> usize {
        self.0[arm.0]
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.0
    }

    pub fn num_arms(&self) -> usize {
        self.0.len()
    }

    pub fn total(&self) -> usize {
        self.0.iter().sum()
    }

    pub fn min(&self) -> usize {
        self.0.iter().copied().min().unwrap_or(0)
    }

    pub(crate) fn as_mut_vec(&mut self) -> &mut Vec<usize> {
        &mut self.0
    }
}

/// How a dataset's arm sequence was produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataModel {
    FixedSample,
    Distribution,
}

impl fmt::Display for DataModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DataModel::FixedSample => "fixed-sample",
            DataModel::Distribution => "distribution",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub arm: ArmIndex,
    pub reward: f64,
}

/// An offline dataset: points in generation order over `m` arms.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    m: usize,
    model: DataModel,
    points: Vec<DataPoint>,
}

impl Dataset {
    pub fn new(m: usize, model: DataModel, points: Vec<DataPoint>) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidInstance(format!("need at least 2 arms, got {m}")));
        }
        for (i, p) in points.iter().enumerate() {
            if p.arm.0 >= m {
                return Err(Error::InvalidInstance(format!(
                    "point {i}: arm {} out of range for m = {m}",
                    p.arm
                )));
            }
            if !(0.0..=1.0).contains(&p.reward) {
                return Err(Error::InvalidInstance(format!(
                    "point {i}: reward {} outside [0, 1]",
                    p.reward
                )));
            }
        }
        Ok(Dataset { m, model, points })
    }

    pub fn num_arms(&self) -> usize {
        self.m
    }

    pub fn model(&self) -> DataModel {
        self.model
    }

    pub fn points(&self) -> &[DataPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn counts(&self) -> SampleCounts {
        let mut counts = vec![0; self.m];
        for p in &self.points {
            counts[p.arm.0] += 1;
        }
        SampleCounts(counts)
    }

    /// Positions of every point pulled from `arm`, ascending.
    pub fn positions_of(&self, arm: ArmIndex) -> Vec<usize> {
        self.points
            .iter()
            .enumerate()
            .filter(|(_, p)| p.arm == arm)
            .map(|(i, _)| i)
            .collect()
    }

    /// The first `n` points.
    pub fn prefix(&self, n: usize) -> Result<Dataset> {
        if n > self.points.len() {
            return Err(Error::InvalidParameter(format!(
                "prefix of {n} points requested from a dataset of {}",
                self.points.len()
            )));
        }
        Ok(Dataset {
            m: self.m,
            model: self.model,
            points: self.points[..n].to_vec(),
        })
    }

    /// `D \ U`, keeping the original order.
    pub fn without(&self, request: &UnlearningRequest) -> Dataset {
        let mut drop = vec![false; self.points.len()];
        for i in request.indices() {
            drop[i] = true;
        }
        let points = self
            .points
            .iter()
            .zip(drop)
            .filter(|(_, d)| !d)
            .map(|(p, _)| *p)
            .collect();
        Dataset {
            m: self.m,
            model: self.model,
            points,
        }
    }

    pub fn with_points(&self, points: Vec<DataPoint>) -> Result<Dataset> {
        Dataset::new(self.m, self.model, points)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index", "arm", "reward"]).map_err(csv_io)?;
        for (i, p) in self.points.iter().enumerate() {
            w.write_record([i.to_string(), p.arm.to_string(), p.reward.to_string()])
                .map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads `index,arm,reward` rows. When `m` is `None` the arm count is
    /// the largest arm seen plus one (at least 2).
    pub fn read_csv<R: Read>(reader: R, origin: &Path, m: Option<usize>, model: DataModel) -> Result<Dataset> {
        let rows = read_rows(reader, origin, &["index", "arm", "reward"])?;
        let mut points = Vec::with_capacity(rows.len());
        for (line, fields) in rows {
            let index: usize = parse_field(&fields[0], origin, line, "index")?;
            if index != points.len() {
                return Err(parse_err(origin, line, format!("expected index {}, found {index}", points.len())));
            }
            let arm: usize = parse_field(&fields[1], origin, line, "arm")?;
            let reward: f64 = parse_field(&fields[2], origin, line, "reward")?;
            if !(0.0..=1.0).contains(&reward) {
                return Err(parse_err(origin, line, format!("reward {reward} outside [0, 1]")));
            }
            if let Some(m) = m {
                if arm >= m {
                    return Err(parse_err(origin, line, format!("arm {arm} out of range for m = {m}")));
                }
            }
            points.push(DataPoint { arm: ArmIndex(arm), reward });
        }
        let m = m.unwrap_or_else(|| points.iter().map(|p| p.arm.0 + 1).max().unwrap_or(0).max(2));
        Dataset::new(m, model, points)
    }

    pub fn load_csv(path: &Path, m: Option<usize>, model: DataModel) -> Result<Dataset> {
        Dataset::read_csv(std::fs::File::open(path)?, path, m, model)
    }
}

/// Rewards of the deleted points, grouped by arm.
pub type DeletedRewards = BTreeMap<ArmIndex, Vec<f64>>;

/// A deletion request: dataset positions to remove, grouped by source arm.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UnlearningRequest {
    entries: BTreeMap<ArmIndex, Vec<usize>>,
}

impl UnlearningRequest {
    pub fn empty() -> Self {
        UnlearningRequest::default()
    }

    /// Validates `entries` against `dataset`. Arms with no indices are dropped.
    pub fn new(dataset: &Dataset, entries: BTreeMap<ArmIndex, Vec<usize>>) -> Result<Self> {
        let mut seen = vec![false; dataset.len()];
        let mut clean = BTreeMap::new();
        for (arm, mut idx) in entries {
            for &i in &idx {
                let Some(point) = dataset.points.get(i) else {
                    return Err(Error::InvalidRequest(format!("index {i} out of range")));
                };
                if point.arm != arm {
                    return Err(Error::InvalidRequest(format!(
                        "index {i} belongs to arm {}, listed under arm {arm}",
                        point.arm
                    )));
                }
                if std::mem::replace(&mut seen[i], true) {
                    return Err(Error::InvalidRequest(format!("index {i} listed twice")));
                }
            }
            if !idx.is_empty() {
                idx.sort_unstable();
                clean.insert(arm, idx);
            }
        }
        Ok(UnlearningRequest { entries: clean })
    }

    /// Groups raw dataset positions by the arm they belong to.
    pub fn from_indices(dataset: &Dataset, indices: &[usize]) -> Result<Self> {
        let mut entries: BTreeMap<ArmIndex, Vec<usize>> = BTreeMap::new();
        for &i in indices {
            let point = dataset
                .points
                .get(i)
                .ok_or_else(|| Error::InvalidRequest(format!("index {i} out of range")))?;
            entries.entry(point.arm).or_default().push(i);
        }
        UnlearningRequest::new(dataset, entries)
    }

    pub fn entries(&self) -> &BTreeMap<ArmIndex, Vec<usize>> {
        &self.entries
    }

    /// Total number of deleted points.
    pub fn k(&self) -> usize {
        self.entries.values().map(Vec::len).sum()
    }

    pub fn k_of(&self, arm: ArmIndex) -> usize {
        self.entries.get(&arm).map_or(0, Vec::len)
    }

    pub fn k_max(&self) -> usize {
        self.entries.values().map(Vec::len).max().unwrap_or(0)
    }

    pub fn arms(&self) -> impl Iterator<Item = ArmIndex> + '_ {
        self.entries.keys().copied()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_single_source(&self) -> bool {
        self.entries.len() == 1
    }

    /// The source arm of a single-source request.
    pub fn source_arm(&self) -> Option<ArmIndex> {
        if self.is_single_source() {
            self.entries.keys().next().copied()
        } else {
            None
        }
    }

    /// All positions, ascending.
    pub fn indices(&self) -> Vec<usize> {
        let mut all: Vec<usize> = self.entries.values().flatten().copied().collect();
        all.sort_unstable();
        all
    }

    pub fn deleted_rewards(&self, dataset: &Dataset) -> DeletedRewards {
        self.entries
            .iter()
            .map(|(&arm, idx)| (arm, idx.iter().map(|&i| dataset.points[i].reward).collect()))
            .collect()
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["index"]).map_err(csv_io)?;
        for i in self.indices() {
            w.write_record([i.to_string()]).map_err(csv_io)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        self.write_csv(std::fs::File::create(path)?)
    }

    /// Reads an `index` CSV and resolves it against `dataset`.
    pub fn read_csv<R: Read>(reader: R, origin: &Path, dataset: &Dataset) -> Result<Self> {
        let rows = read_rows(reader, origin, &["index"])?;
        let mut indices = Vec::with_capacity(rows.len());
        for (line, fields) in rows {
            let i: usize = parse_field(&fields[0], origin, line, "index")?;
            if i >= dataset.len() {
                return Err(parse_err(origin, line, format!("index {i} out of range for {} points", dataset.len())));
            }
            indices.push(i);
        }
        UnlearningRequest::from_indices(dataset, &indices)
    }

    pub fn load_csv(path: &Path, dataset: &Dataset) -> Result<Self> {
        UnlearningRequest::read_csv(std::fs::File::open(path)?, path, dataset)
    }
}

/// Fixed-sample model: exactly `counts[a]` points per arm in round-robin
/// order, Bernoulli rewards.
pub fn gen_fixed_sample_dataset(counts: &SampleCounts, rewards: &RewardModel, seed: u64) -> Result<Dataset> {
    let m = counts.num_arms();
    if m != rewards.num_arms() {
        return Err(Error::InvalidInstance(format!(
            "counts cover {m} arms, reward model {}",
            rewards.num_arms()
        )));
    }
    let total = counts.total();
    if total == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut rng = rng::stream(seed, Purpose::Dataset, &[]);
    let mut remaining = counts.as_slice().to_vec();
    let mut points = Vec::with_capacity(total);
    while points.len() < total {
        for (a, left) in remaining.iter_mut().enumerate() {
            if *left > 0 {
                *left -= 1;
                let arm = ArmIndex(a);
                points.push(DataPoint { arm, reward: rewards.draw(arm, &mut rng) });
            }
        }
    }
    Dataset::new(m, DataModel::FixedSample, points)
}

/// Distribution model: `n` i.i.d. points, arm from `policy` then reward.
pub fn gen_distribution_dataset(n: usize, policy: &BehaviorPolicy, rewards: &RewardModel, seed: u64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let m = rewards.num_arms();
    if policy.probs.len() != m {
        return Err(Error::InvalidPolicy(format!(
            "policy covers {} arms, reward model {m}",
            policy.probs.len()
        )));
    }
    let mut rng = rng::stream(seed, Purpose::Dataset, &[]);
    let points = (0..n)
        .map(|_| {
            let arm = policy.draw(&mut rng);
            DataPoint { arm, reward: rewards.draw(arm, &mut rng) }
        })
        .collect();
    Dataset::new(m, DataModel::Distribution, points)
}

/// Picks `k_a` positions of each source arm uniformly without replacement.
/// Only arm labels and positions are read, never rewards.
pub fn select_request(dataset: &Dataset, sources: &BTreeMap<ArmIndex, usize>, seed: u64) -> Result<UnlearningRequest> {
    let mut entries = BTreeMap::new();
    for (&arm, &k) in sources {
        if arm.0 >= dataset.m {
            return Err(Error::InvalidRequest(format!("arm {arm} out of range")));
        }
        let positions = dataset.positions_of(arm);
        if k > positions.len() {
            return Err(Error::RequestExceedsSupport {
                arm,
                available: positions.len(),
                requested: k,
            });
        }
        let mut rng = rng::stream(seed, Purpose::Request, &[arm.0 as u64]);
        let chosen = index::sample(&mut rng, positions.len(), k)
            .into_iter()
            .map(|j| positions[j])
            .collect();
        entries.insert(arm, chosen);
    }
    UnlearningRequest::new(dataset, entries)
}

/// Every point of `arm` whose position lies in blocks `blocks` of size
/// `block_size`.
pub fn select_block_request(dataset: &Dataset, arm: ArmIndex, blocks: Range<usize>, block_size: usize) -> Result<UnlearningRequest> {
    let out_of_range = Error::BlockOutOfRange {
        start: blocks.start,
        end: blocks.end,
        block_size,
        len: dataset.len(),
    };
    if block_size == 0 || blocks.start > blocks.end || blocks.end * block_size > dataset.len() || arm.0 >= dataset.m {
        return Err(out_of_range);
    }
    let span = blocks.start * block_size..blocks.end * block_size;
    let idx: Vec<usize> = span.filter(|&i| dataset.points[i].arm == arm).collect();
    let mut entries = BTreeMap::new();
    entries.insert(arm, idx);
    UnlearningRequest::new(dataset, entries)
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e))
}

fn parse_err(origin: &Path, line: usize, message: String) -> Error {
    Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    }
}

fn parse_field<T: std::str::FromStr>(raw: &str, origin: &Path, line: usize, name: &str) -> Result<T> {
    raw.trim()
        .parse()
        .map_err(|_| parse_err(origin, line, format!("cannot parse {name} from {raw:?}")))
}

/// Reads a headed CSV, checking the header, and returns `(line, fields)` rows.
fn read_rows<R: Read>(reader: R, origin: &Path, header: &[&str]) -> Result<Vec<(usize, Vec<String>)>> {
    let mut r = csv::ReaderBuilder::new().has_headers(false).flexible(true).from_reader(reader);
    let mut rows = Vec::new();
    let mut records = r.records();
    match records.next() {
        Some(Ok(h)) => {
            let got: Vec<&str> = h.iter().map(str::trim).collect();
            if got != header {
                return Err(parse_err(origin, 1, format!("expected header {:?}, found {:?}", header.join(","), got.join(","))));
            }
        }
        Some(Err(e)) => return Err(parse_err(origin, 1, e.to_string())),
        None => return Err(parse_err(origin, 1, "missing header".into())),
    }
    for rec in records {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            parse_err(origin, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != header.len() {
            return Err(parse_err(origin, line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        rows.push((line, rec.iter().map(str::to_owned).collect()));
    }
    Ok(rows)
}

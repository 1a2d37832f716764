//! Command-line front end. Every subcommand is a thin adapter over the
//! library; all randomness derives from `--seed`.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bandit_unlearn::audit::{audit_ul, worst_case_fixture, AuditConfig, AuditReport, MIN_TRIALS};
use bandit_unlearn::bounds::{bound_curve, BoundKind, BoundParam, BoundQuery};
use bandit_unlearn::harness::{emit_results, read_results_csv, run_suite, ConfigFile};
use bandit_unlearn::unlearner::{gamma_from_privacy, Mechanism, PrivacyBudget};
use bandit_unlearn::{
    gen_distribution_dataset, gen_fixed_sample_dataset, imitation_learn, lcb_learn, select_request,
    BehaviorPolicy, ConfidenceLevel, DataModel, Dataset, LearnOutput, LearnerKind, RewardModel, SampleCounts,
    UnlearningRequest,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser, Debug)]
#[command(name = "bandit-unlearn", version, about = "Offline bandit learning and unlearning")]
struct Cli {
    /// Root seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a dataset CSV and optionally a deletion request.
    Gen(GenArgs),
    /// Fit a learner and write its stored statistics as JSON.
    Learn(LearnArgs),
    /// Apply an unlearning mechanism to stored statistics.
    Unlearn(UnlearnArgs),
    /// Monte Carlo audit of the unlearning guarantee.
    Audit(AuditArgs),
    /// Evaluate bound curves as CSV.
    Bounds(BoundsArgs),
    /// Run an experiment config end to end.
    Experiment(ExperimentArgs),
    /// Re-render SVG panels from a results CSV.
    Plot(PlotArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ModelArg {
    Fixed,
    Distribution,
}

impl From<ModelArg> for DataModel {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Fixed => DataModel::FixedSample,
            ModelArg::Distribution => DataModel::Distribution,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CaseArg {
    Hard,
    Easy,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum LearnerArg {
    Lcb,
    Imitation,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MechanismArg {
    Adaptive,
    Gaussian,
    Rollback,
    Mixing,
    Imitation,
    HalvedNoise,
}

/// Noise multiplier given directly or through a privacy budget.
#[derive(Args, Debug, Clone)]
struct NoiseArgs {
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "fixed")]
    model: ModelArg,
    #[arg(long, default_value_t = 5)]
    m: usize,
    /// Comma-separated arm means; defaults to an evenly spaced ladder.
    #[arg(long, value_delimiter = ',')]
    means: Option<Vec<f64>>,
    /// Concentrability of the behavior policy (distribution model).
    #[arg(long)]
    cstar: Option<f64>,
    #[arg(long)]
    n: usize,
    /// Also draw a request of this size from the `--case` arm.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, value_enum, default_value = "hard")]
    case: CaseArg,
    #[arg(long)]
    out: PathBuf,
    /// Where to write the request; defaults to `<out>.request.csv`.
    #[arg(long)]
    request_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_enum, default_value = "fixed")]
    model: ModelArg,
    #[arg(long)]
    m: Option<usize>,
    /// Confidence level; defaults to 1/N.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum, default_value = "lcb")]
    learner: LearnerArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct UnlearnArgs {
    /// Stored statistics written by `learn`.
    #[arg(long)]
    learned: PathBuf,
    /// Dataset the statistics came from; supplies deleted rewards.
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    request: PathBuf,
    #[arg(long, value_enum, default_value = "fixed")]
    model: ModelArg,
    #[arg(long, value_enum, default_value = "adaptive")]
    mechanism: MechanismArg,
    #[command(flatten)]
    noise: NoiseArgs,
    #[arg(long, default_value_t = 1.3)]
    threshold_scale: f64,
    /// Rollback fraction for the mixing mechanism.
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// Audit a dataset and request from disk.
    #[arg(long, requires = "request")]
    data: Option<PathBuf>,
    #[arg(long)]
    request: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "fixed")]
    model: ModelArg,
    /// Use the built-in two-arm worst-case instance instead of files.
    #[arg(long, conflicts_with = "data")]
    fixture: bool,
    /// Fixture arm size.
    #[arg(long, default_value_t = 100)]
    n: usize,
    /// Fixture deletion size.
    #[arg(long, default_value_t = 5)]
    k: usize,
    /// Audit the fixture against the half-noise mechanism, which must fail.
    #[arg(long, requires = "fixture")]
    broken: bool,
    #[arg(long, value_enum, default_value = "gaussian")]
    mechanism: MechanismArg,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    delta: f64,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = 1.3)]
    threshold_scale: f64,
    #[arg(long, default_value_t = 0.5)]
    eta: f64,
    #[arg(long, default_value_t = 100_000)]
    trials: usize,
    /// Check every subset of arms.
    #[arg(long)]
    all_events: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum ParamArg {
    N,
    K,
    Gamma,
    Epsilon,
    Cstar,
}

impl From<ParamArg> for BoundParam {
    fn from(p: ParamArg) -> Self {
        match p {
            ParamArg::N => BoundParam::N,
            ParamArg::K => BoundParam::K,
            ParamArg::Gamma => BoundParam::Gamma,
            ParamArg::Epsilon => BoundParam::Epsilon,
            ParamArg::Cstar => BoundParam::CStar,
        }
    }
}

#[derive(Args, Debug)]
struct BoundsArgs {
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value_t = 5)]
    m: usize,
    #[arg(long)]
    n_a0: Option<usize>,
    #[arg(long)]
    n_star: Option<usize>,
    #[arg(long)]
    n_min: Option<usize>,
    #[arg(long)]
    k_max: Option<usize>,
    #[arg(long)]
    cstar: Option<f64>,
    #[command(flatten)]
    noise: NoiseArgs,
    /// Swept parameter.
    #[arg(long, value_enum)]
    vary: ParamArg,
    /// Comma-separated grid for the swept parameter.
    #[arg(long, value_delimiter = ',', required = true)]
    grid: Vec<f64>,
    /// Bounds to evaluate; all by default.
    #[arg(long, value_delimiter = ',')]
    kinds: Option<Vec<String>>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExperimentArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PlotArgs {
    #[arg(long)]
    results: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

fn fail(e: impl Display) -> Failure {
    Failure { code: 1, message: e.to_string() }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let seed = cli.seed;
    match cli.command {
        Command::Gen(a) => gen(a, seed),
        Command::Learn(a) => learn(a),
        Command::Unlearn(a) => unlearn(a, seed),
        Command::Audit(a) => audit(a, seed),
        Command::Bounds(a) => bounds(a),
        Command::Experiment(a) => experiment(a, seed),
        Command::Plot(a) => plot(a),
    }
}

fn write_out(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(format!("{}: {e}", p.display()))),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> CliResult<String> {
    serde_json::to_string_pretty(value).map_err(fail)
}

/// Direct γ wins over (ε, δ); ε = 0 gives γ = ∞.
fn resolve_gamma(noise: &NoiseArgs) -> CliResult<f64> {
    match (noise.gamma, noise.epsilon, noise.delta) {
        (Some(g), eps, delta) => {
            if eps.is_some() || delta.is_some() {
                eprintln!("warning: both --gamma and --epsilon/--delta given; using --gamma = {g}");
            }
            if g.is_nan() || g < 0.0 {
                return Err(fail(format!("--gamma = {g} must be >= 0")));
            }
            Ok(g)
        }
        (None, Some(e), Some(d)) => gamma_from_privacy(&PrivacyBudget::new(e, d).map_err(fail)?).map_err(fail),
        _ => Err(fail("give --gamma or both --epsilon and --delta")),
    }
}

fn default_means(m: usize) -> Vec<f64> {
    (0..m).map(|a| 0.02 * (m - a) as f64).collect()
}

fn gen(a: GenArgs, seed: u64) -> CliResult<()> {
    let means = a.means.clone().unwrap_or_else(|| default_means(a.m));
    if means.len() != a.m {
        return Err(fail(format!("{} means given for --m {}", means.len(), a.m)));
    }
    let rewards = RewardModel::new(means).map_err(fail)?;
    let model: DataModel = a.model.into();
    let dataset = match model {
        DataModel::FixedSample => {
            let counts = SampleCounts::uniform(a.m, a.n).map_err(fail)?;
            gen_fixed_sample_dataset(&counts, &rewards, seed).map_err(fail)?
        }
        DataModel::Distribution => {
            let c = a.cstar.ok_or_else(|| fail("--cstar is required for the distribution model"))?;
            let policy = BehaviorPolicy::from_concentrability(a.m, c, rewards.best_arm()).map_err(fail)?;
            gen_distribution_dataset(a.n, &policy, &rewards, seed).map_err(fail)?
        }
    };
    dataset.save_csv(&a.out).map_err(fail)?;
    if let Some(k) = a.k {
        let ranked = rewards.ranked();
        let arm = match a.case {
            CaseArg::Hard => ranked[0],
            CaseArg::Easy => *ranked.get(2).ok_or_else(|| fail("easy case needs m >= 3"))?,
        };
        let request = select_request(&dataset, &BTreeMap::from([(arm, k)]), seed).map_err(fail)?;
        let path = a.request_out.unwrap_or_else(|| a.out.with_extension("request.csv"));
        request.save_csv(&path).map_err(fail)?;
    }
    Ok(())
}

fn tau_for(tau: Option<f64>, dataset: &Dataset) -> CliResult<ConfidenceLevel> {
    match tau {
        Some(t) => ConfidenceLevel::new(t).map_err(fail),
        None => Ok(ConfidenceLevel::for_size(dataset.len())),
    }
}

fn learn(a: LearnArgs) -> CliResult<()> {
    let dataset = Dataset::load_csv(&a.data, a.m, a.model.into()).map_err(fail)?;
    let tau = tau_for(a.tau, &dataset)?;
    let out = match a.learner {
        LearnerArg::Lcb => lcb_learn(&dataset, tau),
        LearnerArg::Imitation => imitation_learn(&dataset, tau),
    }
    .map_err(fail)?;
    write_out(Some(&a.out), &to_json(&out)?)
}

fn mechanism(kind: MechanismArg, threshold_scale: f64, eta: f64) -> Mechanism {
    match kind {
        MechanismArg::Adaptive => Mechanism::Adaptive { threshold_scale },
        MechanismArg::Gaussian => Mechanism::Gaussian,
        MechanismArg::Rollback => Mechanism::Rollback,
        MechanismArg::Mixing => Mechanism::Mixing { eta },
        MechanismArg::Imitation => Mechanism::Imitation,
        MechanismArg::HalvedNoise => Mechanism::HalvedNoise,
    }
}

fn unlearn(a: UnlearnArgs, seed: u64) -> CliResult<()> {
    let text = std::fs::read_to_string(&a.learned).map_err(|e| fail(format!("{}: {e}", a.learned.display())))?;
    let learned: LearnOutput = serde_json::from_str(&text)
        .map_err(|e| fail(format!("{}:{}: {e}", a.learned.display(), e.line())))?;
    learned.validate().map_err(fail)?;
    let dataset = Dataset::load_csv(&a.data, Some(learned.num_arms()), a.model.into()).map_err(fail)?;
    if dataset.counts() != learned.counts {
        return Err(fail("dataset counts do not match the stored statistics"));
    }
    let request = UnlearningRequest::load_csv(&a.request, &dataset).map_err(fail)?;
    let deleted = request.deleted_rewards(&dataset);
    let mech = mechanism(a.mechanism, a.threshold_scale, a.eta);
    if (mech.learner() == LearnerKind::Imitation) != (learned.learner == LearnerKind::Imitation) {
        return Err(fail(format!("mechanism {} does not match a {:?} learner", mech.label(), learned.learner)));
    }
    let gamma = match mech {
        Mechanism::Rollback | Mechanism::Imitation => 0.0,
        _ => resolve_gamma(&a.noise)?,
    };
    let outcome = mech.apply(&learned, &request, &deleted, gamma, seed).map_err(fail)?;
    for w in &outcome.warnings {
        eprintln!("warning: {w}");
    }
    write_out(a.out.as_deref(), &to_json(&outcome)?)
}

fn audit(a: AuditArgs, seed: u64) -> CliResult<()> {
    if a.trials < MIN_TRIALS {
        return Err(fail(format!("--trials must be at least {MIN_TRIALS}")));
    }
    let budget = PrivacyBudget::new(a.epsilon, a.delta).map_err(fail)?;
    let (dataset, request, tau, mech) = if a.fixture {
        let factor = if a.broken { 0.5 } else { 1.0 };
        let f = worst_case_fixture(a.n, a.k, budget, factor).map_err(fail)?;
        let mech = if a.broken { Mechanism::HalvedNoise } else { Mechanism::Gaussian };
        (f.dataset, f.request, f.tau, mech)
    } else {
        let data = a.data.as_ref().ok_or_else(|| fail("give --data and --request, or --fixture"))?;
        let req = a.request.as_ref().ok_or_else(|| fail("--request is required with --data"))?;
        let dataset = Dataset::load_csv(data, None, a.model.into()).map_err(fail)?;
        let request = UnlearningRequest::load_csv(req, &dataset).map_err(fail)?;
        let tau = tau_for(a.tau, &dataset)?;
        (dataset, request, tau, mechanism(a.mechanism, a.threshold_scale, a.eta))
    };
    if a.gamma.is_some() {
        eprintln!("warning: --gamma overrides the noise implied by --epsilon/--delta");
    }
    let mut config = AuditConfig::new(mech, budget, tau, a.trials, seed);
    config.gamma = a.gamma;
    config.all_events = a.all_events;
    let report: AuditReport = audit_ul(&dataset, &request, &config).map_err(fail)?;
    write_out(a.out.as_deref(), &to_json(&report)?)?;
    if report.pass {
        Ok(())
    } else {
        Err(Failure {
            code: 2,
            message: format!(
                "audit failed: event {:?} violates the bound by {:.6}",
                report.worst_event.iter().map(|a| a.0).collect::<Vec<_>>(),
                report.worst_violation
            ),
        })
    }
}

fn bound_kind(name: &str) -> CliResult<BoundKind> {
    BoundKind::ALL
        .into_iter()
        .find(|k| k.name() == name)
        .ok_or_else(|| fail(format!("unknown bound `{name}`")))
}

fn bounds(a: BoundsArgs) -> CliResult<()> {
    let kinds = match &a.kinds {
        Some(names) => names.iter().map(|n| bound_kind(n)).collect::<CliResult<Vec<_>>>()?,
        None => BoundKind::ALL.to_vec(),
    };
    let gamma = match (a.noise.gamma, a.noise.epsilon, a.noise.delta) {
        (None, _, None) => None,
        _ => Some(resolve_gamma(&a.noise)?),
    };
    let base = BoundQuery {
        model: None,
        n: a.n,
        k: a.k,
        m: Some(a.m),
        n_a0: a.n_a0,
        n_star: a.n_star,
        c_star: a.cstar,
        gamma,
        epsilon: a.noise.epsilon,
        n_min: a.n_min,
        k_max: a.k_max,
    };
    let curve = bound_curve(&base, a.vary.into(), &a.grid, &kinds);
    let mut text = String::from("bound,param,value\n");
    for p in &curve {
        text.push_str(&format!("{},{},{}\n", p.bound_kind, p.param, p.value));
    }
    match &a.out {
        Some(p) => std::fs::write(p, text).map_err(|e| fail(format!("{}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn experiment(a: ExperimentArgs, seed: u64) -> CliResult<()> {
    let mut configs = ConfigFile::load(&a.config).map_err(fail)?;
    for c in &mut configs {
        c.seed = seed;
    }
    let table = run_suite(&configs).map_err(fail)?;
    let files = emit_results(&table, &a.out).map_err(fail)?;
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

fn plot(a: PlotArgs) -> CliResult<()> {
    let table = read_results_csv(&a.results).map_err(fail)?;
    let files = emit_results(&table, &a.out).map_err(fail)?;
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}

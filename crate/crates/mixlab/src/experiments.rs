//! Batch Monte Carlo runs over parameter grids.
//!
//! Every trial gets its own generator, seeded from a hash of the master seed,
//! the grid point and the trial index, so the table does not depend on how
//! trials are spread over workers.

use std::io::{BufRead, Read, Write};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::distribution::{
    brute_force_opt, l2_error, BenchmarkClass, DistributionFile, LabeledDistribution, Origin, MAX_ENUMERATION_N,
};
use crate::estimation::{mixture_floor, NoisyKind, SpectrumSource};
use crate::fourier::{self, BitString, DenseTable};
use crate::learners::{
    evaluate, learn_exact_sparse, learn_fourier_sparse, learn_parity, top_k_spectrum, Hypothesis, SparseVariant,
    PARITY_COPY_CONSTANT,
};
use crate::oracles::{FourierSampler, LedgerCounts, OracleLedger, SqPolicy};
use crate::verification::{
    build_tester_from_verifier, check_preconditions, erm_pair_sample_size, honest_copy_bound, list_bound,
    simulate_interaction, AdversarialProver, ClassicalErmPair, HonestProver, Protocol, ProtocolMessage, ProtocolPair,
    Prover, RejectReason, Setting, Strategy, TesterVerdict, Transcript, Verdict, VerifyParams,
};

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("worker pool: {0}")]
    Pool(String),
}

pub type Result<T> = std::result::Result<T, ExperimentError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(ExperimentError::Invalid(msg.into()))
}

/// Which quantum data a learner reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SourceChoice {
    /// Functional copies for functions, mixed noisy copies for noisy
    /// functions, mixture copies otherwise.
    #[default]
    Natural,
    Mixture,
    NoisyPure,
}

impl SourceChoice {
    fn resolve(self, d: &LabeledDistribution) -> Result<SpectrumSource> {
        match self {
            SourceChoice::Natural => Ok(SpectrumSource::for_distribution(d)),
            SourceChoice::Mixture => Ok(SpectrumSource::Mixture),
            SourceChoice::NoisyPure => match d.origin() {
                Origin::Noisy { eta, .. } => Ok(SpectrumSource::Noisy { kind: NoisyKind::Pure, eta: *eta }),
                _ => invalid("noisy_pure source needs a noisy-function instance"),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Parity,
    /// Sparsity comes from the grid's `k`.
    Sparse,
    Spectrum,
    SingleSq,
}

impl ProtocolKind {
    fn at(self, k: usize) -> Protocol {
        match self {
            ProtocolKind::Parity => Protocol::Parity,
            ProtocolKind::Sparse => Protocol::Sparse { k },
            ProtocolKind::Spectrum => Protocol::Spectrum,
            ProtocolKind::SingleSq => Protocol::SingleSq,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "prover", rename_all = "snake_case")]
pub enum ProverSpec {
    #[default]
    Honest,
    Adversary(Strategy),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicySpec {
    #[default]
    Exact,
    UniformNoise,
}

impl PolicySpec {
    fn policy(self) -> SqPolicy {
        match self {
            PolicySpec::Exact => SqPolicy::Exact,
            PolicySpec::UniformNoise => SqPolicy::UniformNoise,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "pair", rename_all = "snake_case")]
pub enum PairSpec {
    Protocol,
    /// Parity ERM on `m` examples; the default `m` is [`erm_pair_sample_size`].
    Erm {
        #[serde(default)]
        m: Option<u64>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ExperimentKind {
    ParityLearning {
        #[serde(default)]
        source: SourceChoice,
    },
    SparseLearning {
        variant: SparseVariant,
        #[serde(default)]
        source: SourceChoice,
    },
    ExactSparse,
    Verification {
        protocol: ProtocolKind,
        setting: Setting,
        #[serde(default)]
        prover: ProverSpec,
        #[serde(default)]
        sq_policy: PolicySpec,
    },
    Tester {
        pair: PairSpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case")]
pub enum InstanceSpec {
    /// Noisy parity at the grid's `n` and `eta`; without `s`, a fresh
    /// non-zero string per trial.
    NoisyParity {
        #[serde(default)]
        s: Option<BitString>,
    },
    Uniform,
    File {
        path: PathBuf,
    },
    Inline {
        distribution: DistributionFile,
    },
}

/// Parameter grid; the run covers the Cartesian product, `n` outermost.
/// An empty `n` takes the dimension of a file or inline instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Grid {
    pub n: Vec<usize>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub theta: Vec<f64>,
    pub a2: Vec<f64>,
    pub b2: Vec<f64>,
    pub k: Vec<usize>,
    pub eta: Vec<f64>,
}

impl Default for Grid {
    fn default() -> Self {
        Grid {
            n: Vec::new(),
            eps: vec![0.3],
            delta: vec![0.1],
            theta: vec![0.6],
            a2: vec![0.36],
            b2: vec![0.36],
            k: vec![1],
            eta: vec![0.2],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub a2: f64,
    pub b2: f64,
    pub k: usize,
    pub eta: f64,
}

impl GridPoint {
    pub fn verify_params(&self) -> VerifyParams {
        VerifyParams { eps: self.eps, delta: self.delta, theta: self.theta, a2: self.a2, b2: self.b2 }
    }

    fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(64);
        out.extend((self.n as u64).to_le_bytes());
        for v in [self.eps, self.delta, self.theta, self.a2, self.b2] {
            out.extend(v.to_bits().to_le_bytes());
        }
        out.extend((self.k as u64).to_le_bytes());
        out.extend(self.eta.to_bits().to_le_bytes());
        out
    }
}

impl Grid {
    pub fn points(&self, n_default: Option<usize>) -> Result<Vec<GridPoint>> {
        let ns = match (self.n.is_empty(), n_default) {
            (false, _) => self.n.clone(),
            (true, Some(n)) => vec![n],
            (true, None) => return invalid("grid.n is empty and the instance has no fixed dimension"),
        };
        let mut points = Vec::new();
        for &n in &ns {
            for &eps in &self.eps {
                for &delta in &self.delta {
                    for &theta in &self.theta {
                        for &a2 in &self.a2 {
                            for &b2 in &self.b2 {
                                for &k in &self.k {
                                    for &eta in &self.eta {
                                        points.push(GridPoint { n, eps, delta, theta, a2, b2, k, eta });
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        Ok(points)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    /// JSON lines, one row per line.
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSpec {
    pub path: PathBuf,
    #[serde(default)]
    pub format: OutputFormat,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Written into every row.
    #[serde(default)]
    pub id: String,
    pub kind: ExperimentKind,
    pub instance: InstanceSpec,
    #[serde(default)]
    pub grid: Grid,
    pub trials: u64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    #[serde(default)]
    pub output: Option<OutputSpec>,
    /// Off by default: wall time is the one column that differs between runs.
    #[serde(default)]
    pub record_wall_time: bool,
}

fn one() -> usize {
    1
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Checks every grid point, before anything runs.
    pub fn validate(&self) -> Result<Plan> {
        if self.workers == 0 {
            return invalid("workers must be at least 1");
        }
        let instance = Instance::prepare(&self.instance)?;
        let points = self.grid.points(instance.fixed_n())?;
        for p in &points {
            check_point(&self.kind, &instance, p).map_err(|e| match e {
                ExperimentError::Invalid(m) => ExperimentError::Invalid(format!("grid point {p:?}: {m}")),
                other => other,
            })?;
        }
        Ok(Plan { instance, points })
    }
}

/// A validated config: the loaded instance and the grid points in run order.
#[derive(Debug, Clone)]
pub struct Plan {
    instance: Instance,
    points: Vec<GridPoint>,
}

impl Plan {
    pub fn points(&self) -> &[GridPoint] {
        &self.points
    }
}

#[derive(Debug, Clone)]
enum Instance {
    Fixed(LabeledDistribution),
    NoisyParity(Option<BitString>),
    Uniform,
}

impl Instance {
    fn prepare(spec: &InstanceSpec) -> Result<Self> {
        let from_file = |f: &DistributionFile| f.build().map_err(|e| ExperimentError::Invalid(e.to_string()));
        Ok(match spec {
            InstanceSpec::NoisyParity { s } => Instance::NoisyParity(*s),
            InstanceSpec::Uniform => Instance::Uniform,
            InstanceSpec::Inline { distribution } => Instance::Fixed(from_file(distribution)?),
            InstanceSpec::File { path } => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| ExperimentError::Invalid(format!("{}: {e}", path.display())))?;
                let file: DistributionFile = serde_json::from_str(&text)
                    .map_err(|e| ExperimentError::Invalid(format!("{}: {e}", path.display())))?;
                Instance::Fixed(from_file(&file)?)
            }
        })
    }

    fn fixed_n(&self) -> Option<usize> {
        match self {
            Instance::Fixed(d) => Some(d.n()),
            Instance::NoisyParity(Some(s)) => Some(s.n()),
            _ => None,
        }
    }

    fn is_uniform(&self, p: &GridPoint) -> bool {
        match self {
            Instance::Uniform => true,
            Instance::Fixed(d) => d.weight() == 0.0,
            Instance::NoisyParity(_) => p.eta == 0.5,
        }
    }

    /// The trial's distribution; `rng` only picks a random parity.
    fn draw(&self, p: &GridPoint, rng: &mut impl Rng) -> Result<LabeledDistribution> {
        let dist = |r: crate::distribution::Result<LabeledDistribution>| {
            r.map_err(|e| ExperimentError::Invalid(e.to_string()))
        };
        match self {
            Instance::Fixed(d) => {
                if d.n() != p.n {
                    return invalid(format!("instance has n = {} but the grid asks for {}", d.n(), p.n));
                }
                Ok(d.clone())
            }
            Instance::Uniform => dist(LabeledDistribution::uniform(p.n)),
            Instance::NoisyParity(s) => {
                let s = match s {
                    Some(s) if s.n() != p.n => {
                        return invalid(format!("parity string has n = {} but the grid asks for {}", s.n(), p.n))
                    }
                    Some(s) => *s,
                    None => {
                        let cube = 1u64 << p.n.min(24);
                        let v = if cube > 1 { rng.random_range(1..cube) } else { 0 };
                        BitString::new(p.n, v).map_err(|e| ExperimentError::Invalid(e.to_string()))?
                    }
                };
                // Noise rate ½ is the uniform distribution.
                if p.eta == 0.5 {
                    return dist(LabeledDistribution::uniform(p.n));
                }
                dist(LabeledDistribution::parity(&s, p.eta))
            }
        }
    }

    /// A draw with a fixed representative string, for validation.
    fn representative(&self, p: &GridPoint) -> Result<LabeledDistribution> {
        self.draw(p, &mut ChaCha20Rng::from_seed([0; 32]))
    }
}

fn check_unit(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        invalid(format!("{name} = {v} outside (0, 1)"))
    }
}

fn check_learning(d: &LabeledDistribution, source: SpectrumSource, accuracy: f64, delta: f64) -> Result<()> {
    check_unit("spectrum accuracy", accuracy)?;
    check_unit("delta", delta)?;
    if source == SpectrumSource::Mixture && accuracy <= mixture_floor(d.n()) {
        return invalid(format!(
            "spectrum accuracy {accuracy} is at or below the mixture floor 2^-(n/2-2) = {} at n = {}",
            mixture_floor(d.n()),
            d.n()
        ));
    }
    FourierSampler::new(d, source.variant()).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    Ok(())
}

fn check_point(kind: &ExperimentKind, instance: &Instance, p: &GridPoint) -> Result<()> {
    if !(0.0..=0.5).contains(&p.eta) {
        return invalid(format!("eta = {} outside [0, 1/2]", p.eta));
    }
    let d = instance.representative(p)?;
    match *kind {
        ExperimentKind::ParityLearning { source } => {
            check_learning(&d, source.resolve(&d)?, p.eps / 2.0, p.delta)?;
        }
        ExperimentKind::SparseLearning { variant, source } => {
            if p.k == 0 {
                return invalid("k must be at least 1");
            }
            check_unit("eps", p.eps)?;
            check_learning(&d, source.resolve(&d)?, variant.accuracy(p.eps, p.k), p.delta)?;
        }
        ExperimentKind::ExactSparse => {
            if p.k == 0 {
                return invalid("k must be at least 1");
            }
            if !d.is_functional() {
                return invalid("exact sparse learning needs a functional instance");
            }
            check_unit("delta", p.delta)?;
        }
        ExperimentKind::Verification { protocol, setting, .. } => {
            check_preconditions(protocol.at(p.k), setting, &d, &p.verify_params())
                .map_err(|e| ExperimentError::Invalid(e.to_string()))?;
        }
        ExperimentKind::Tester { .. } => {
            if !matches!(instance, Instance::NoisyParity(_) | Instance::Uniform) {
                return invalid("the tester runs on noisy_parity or uniform instances");
            }
            if p.eta >= 0.5 {
                return invalid("the tester needs eta < 1/2");
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

/// One trial.  `risk` is the exact risk (L2 error for real predictors, test
/// error for the tester); `distance` is the spectrum error of spectrum
/// protocols; `good` says whether the guarantee at the grid point held and is
/// empty when there was nothing to judge.  The ledger adds both parties.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub n: usize,
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub a2: f64,
    pub b2: f64,
    pub k: usize,
    pub eta: f64,
    pub trial: u64,
    pub seed: String,
    pub status: TrialStatus,
    pub error: Option<String>,
    pub verdict: Option<String>,
    pub accepted: Option<bool>,
    pub risk: Option<f64>,
    pub opt: Option<f64>,
    pub distance: Option<f64>,
    pub good: Option<bool>,
    pub list_len: Option<u64>,
    pub examples: u64,
    pub copies: u64,
    pub sqs: u64,
    pub qsqs: u64,
    pub within_bounds: Option<bool>,
    pub wall_time_ms: Option<f64>,
}

impl ResultRow {
    pub const HEADER: [&'static str; 26] = [
        "experiment",
        "n",
        "eps",
        "delta",
        "theta",
        "a2",
        "b2",
        "k",
        "eta",
        "trial",
        "seed",
        "status",
        "error",
        "verdict",
        "accepted",
        "risk",
        "opt",
        "distance",
        "good",
        "list_len",
        "examples",
        "copies",
        "sqs",
        "qsqs",
        "within_bounds",
        "wall_time_ms",
    ];

    fn blank(experiment: &str, p: &GridPoint, trial: u64, seed: &[u8; 32]) -> Self {
        ResultRow {
            experiment: experiment.to_string(),
            n: p.n,
            eps: p.eps,
            delta: p.delta,
            theta: p.theta,
            a2: p.a2,
            b2: p.b2,
            k: p.k,
            eta: p.eta,
            trial,
            seed: seed[..8].iter().map(|b| format!("{b:02x}")).collect(),
            status: TrialStatus::Ok,
            error: None,
            verdict: None,
            accepted: None,
            risk: None,
            opt: None,
            distance: None,
            good: None,
            list_len: None,
            examples: 0,
            copies: 0,
            sqs: 0,
            qsqs: 0,
            within_bounds: None,
            wall_time_ms: None,
        }
    }

    fn set_ledger(&mut self, c: LedgerCounts) {
        self.examples += c.examples;
        self.copies += c.copies;
        self.sqs += c.sqs;
        self.qsqs += c.qsqs;
    }
}

/// SHA-256 of the master seed, the grid point and the trial index.
pub fn trial_seed(master: u64, point: &GridPoint, trial: u64) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(b"mixlab/trial/v1");
    h.update(master.to_le_bytes());
    h.update(point.canonical_bytes());
    h.update(trial.to_le_bytes());
    h.finalize().into()
}

/// Validates, then runs every trial; rows come back in grid-then-trial order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let plan = config.validate()?;
    run_plan(config, &plan)
}

pub fn run_plan(config: &ExperimentConfig, plan: &Plan) -> Result<Vec<ResultRow>> {
    let tasks: Vec<(GridPoint, u64)> =
        plan.points.iter().flat_map(|p| (0..config.trials).map(move |t| (*p, t))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| ExperimentError::Pool(e.to_string()))?;
    Ok(pool.install(|| tasks.par_iter().map(|(p, t)| run_one(config, &plan.instance, p, *t)).collect()))
}

fn run_one(config: &ExperimentConfig, instance: &Instance, p: &GridPoint, trial: u64) -> ResultRow {
    let seed = trial_seed(config.seed, p, trial);
    let start = Instant::now();
    let mut row = ResultRow::blank(&config.id, p, trial, &seed);
    let outcome = catch_unwind(AssertUnwindSafe(|| {
        let mut rng = ChaCha20Rng::from_seed(seed);
        let d = instance.draw(p, &mut rng)?;
        run_trial(&config.kind, instance, &d, p, &mut rng, &mut row)
    }));
    let message = match outcome {
        Ok(Ok(())) => None,
        Ok(Err(e)) => Some(e.to_string()),
        Err(panic) => Some(match panic.downcast_ref::<&str>() {
            Some(s) => format!("panic: {s}"),
            None => match panic.downcast_ref::<String>() {
                Some(s) => format!("panic: {s}"),
                None => "panic".to_string(),
            },
        }),
    };
    if let Some(m) = message {
        row = ResultRow::blank(&config.id, p, trial, &seed);
        row.status = TrialStatus::Failed;
        row.error = Some(m);
    }
    if config.record_wall_time {
        row.wall_time_ms = Some(start.elapsed().as_secs_f64() * 1e3);
    }
    row
}

fn fail(e: impl std::fmt::Display) -> ExperimentError {
    ExperimentError::Invalid(e.to_string())
}

/// Best risk over Boolean functions with a `k`-sparse ±1 form: enumerated for
/// small `n`, otherwise known only when the clean function is itself
/// `k`-sparse (then the Bayes risk, 0 or η).
pub fn sparse_opt(d: &LabeledDistribution, k: usize) -> Option<f64> {
    if d.n() <= MAX_ENUMERATION_N {
        return brute_force_opt(d, BenchmarkClass::Sparse(k)).ok().map(|r| r.0);
    }
    let (f, eta) = match d.origin() {
        Origin::Function { f } => (f, 0.0),
        Origin::Noisy { f, eta } => (f, *eta),
        Origin::General => return None,
    };
    let sign = DenseTable::from_fn(d.n(), |x| if f[x] { -1.0 } else { 1.0 }).ok()?;
    let support = fourier::transform(&sign).values().iter().filter(|c| c.abs() > 1e-9).count();
    (support <= k).then_some(eta)
}

fn verdict_label(v: &Verdict) -> String {
    match v {
        Verdict::Accept { .. } => "accept".into(),
        Verdict::Reject { reason } => format!(
            "reject:{}",
            match reason {
                RejectReason::Aborted => "aborted",
                RejectReason::Oversized { .. } => "oversized",
                RejectReason::Malformed { .. } => "malformed",
                RejectReason::WeightBelowThreshold => "weight_below_threshold",
                RejectReason::InnerProductTest => "inner_product_test",
            }
        ),
    }
}

fn list_len(t: &Transcript) -> Option<u64> {
    match t.response()? {
        ProtocolMessage::CoefficientList { strings } => Some(strings.len() as u64),
        ProtocolMessage::AnnotatedList { pairs } => Some(pairs.len() as u64),
        _ => None,
    }
}

const SLACK: f64 = 1e-12;

fn run_trial(
    kind: &ExperimentKind,
    instance: &Instance,
    d: &LabeledDistribution,
    p: &GridPoint,
    rng: &mut ChaCha20Rng,
    row: &mut ResultRow,
) -> Result<()> {
    let mut ledger = OracleLedger::new();
    match *kind {
        ExperimentKind::ParityLearning { source } => {
            let source = source.resolve(d)?;
            let out = learn_parity(d, source, p.eps, p.delta, rng, &mut ledger).map_err(fail)?;
            let risk = evaluate(&out.hypothesis, d).map_err(fail)?;
            let opt = brute_force_opt(d, BenchmarkClass::Parities).map_err(fail)?.0;
            row.set_ledger(ledger.counts());
            row.risk = Some(risk);
            row.opt = Some(opt);
            row.good = Some(risk <= opt + p.eps + SLACK);
            let half_success = !matches!(source, SpectrumSource::Noisy { kind: NoisyKind::Pure, .. });
            if half_success && p.eps <= 0.5 {
                let bound = PARITY_COPY_CONSTANT * (1.0 / (p.delta * p.eps * p.eps)).ln() / p.eps.powi(4);
                row.within_bounds = Some(row.copies as f64 <= bound);
            }
        }
        ExperimentKind::SparseLearning { variant, source } => {
            let source = source.resolve(d)?;
            let out = learn_fourier_sparse(d, source, p.k, p.eps, p.delta, variant, rng, &mut ledger).map_err(fail)?;
            let risk = evaluate(&out.hypothesis, d).map_err(fail)?;
            row.set_ledger(ledger.counts());
            row.risk = Some(risk);
            let (opt, factor) = match variant {
                SparseVariant::Randomized => (sparse_opt(d, p.k), 2.0),
                SparseVariant::Thresholded => (sparse_opt(d, p.k), 4.0),
                SparseVariant::L2 => (Some(l2_error(d, &top_k_spectrum(d.spectrum(), p.k))), 1.0),
            };
            row.opt = opt;
            row.good = opt.map(|o| risk <= factor * o + p.eps + SLACK);
        }
        ExperimentKind::ExactSparse => {
            let out = learn_exact_sparse(d, p.k, p.delta, rng, &mut ledger).map_err(fail)?;
            let risk = evaluate(&out.hypothesis, d).map_err(fail)?;
            row.set_ledger(ledger.counts());
            row.risk = Some(risk);
            row.opt = sparse_opt(d, p.k);
            row.good = row.opt.map(|o| o > 0.0 || risk <= SLACK);
        }
        ExperimentKind::Verification { protocol, setting, prover, sq_policy } => {
            let protocol = protocol.at(p.k);
            let params = p.verify_params();
            check_preconditions(protocol, setting, d, &params).map_err(fail)?;
            let honest;
            let adversary;
            let prover_ref: &dyn Prover = match prover {
                ProverSpec::Honest => {
                    honest = HonestProver::default();
                    &honest
                }
                ProverSpec::Adversary(strategy) => {
                    adversary = AdversarialProver::new(strategy);
                    &adversary
                }
            };
            let t = simulate_interaction(protocol, setting, &params, d, d, prover_ref, &sq_policy.policy(), rng)
                .map_err(fail)?;
            record_verification(protocol, setting, &params, prover, d, &t, row)?;
        }
        ExperimentKind::Tester { pair } => {
            let outcome = match pair {
                PairSpec::Protocol => build_tester_from_verifier(ProtocolPair::new(p.eta), p.eta).run(d, rng),
                PairSpec::Erm { m } => {
                    let m = m.unwrap_or_else(|| erm_pair_sample_size(p.n, p.eta));
                    build_tester_from_verifier(ClassicalErmPair { m }, p.eta).run(d, rng)
                }
            }
            .map_err(fail)?;
            let truth = if instance.is_uniform(p) { TesterVerdict::Uniform } else { TesterVerdict::NoisyParityFamily };
            row.verdict = Some(
                match outcome.verdict {
                    TesterVerdict::NoisyParityFamily => "noisy_parity_family",
                    TesterVerdict::Uniform => "uniform",
                }
                .into(),
            );
            row.risk = outcome.test_error;
            row.good = Some(outcome.verdict == truth);
            row.examples = outcome.examples;
        }
    }
    Ok(())
}

fn record_verification(
    protocol: Protocol,
    setting: Setting,
    params: &VerifyParams,
    prover: ProverSpec,
    d: &LabeledDistribution,
    t: &Transcript,
    row: &mut ResultRow,
) -> Result<()> {
    let verifier = t.verifier_ledger();
    row.set_ledger(verifier);
    row.set_ledger(t.prover_ledger());
    row.verdict = Some(verdict_label(t.verdict()));
    row.accepted = Some(t.verdict().is_accept());
    row.list_len = list_len(t);

    let bound = list_bound(protocol, setting, params) as u64;
    let len = row.list_len.unwrap_or(0);
    let oversized = matches!(t.verdict(), Verdict::Reject { reason: RejectReason::Oversized { .. } });
    let communication_ok = len <= bound || oversized;
    let sq_ok = match protocol {
        Protocol::SingleSq => verifier.sqs <= 1,
        _ => verifier.sqs <= len,
    };
    let copies_ok = match (prover, setting.uses_qsq(), protocol) {
        (ProverSpec::Honest, false, Protocol::Parity | Protocol::Sparse { .. } | Protocol::Spectrum)
            if params.delta <= 0.5 =>
        {
            t.prover_ledger().copies as f64 <= honest_copy_bound(params)
        }
        _ => true,
    };
    row.within_bounds = Some(communication_ok && sq_ok && copies_ok);

    let Some(h) = t.verdict().hypothesis() else {
        return Ok(());
    };
    match (protocol, h) {
        (Protocol::Parity, _) => {
            let risk = evaluate(h, d).map_err(fail)?;
            let opt = brute_force_opt(d, BenchmarkClass::Parities).map_err(fail)?.0;
            row.risk = Some(risk);
            row.opt = Some(opt);
            row.good = Some(risk <= opt + params.eps + SLACK);
        }
        (Protocol::Sparse { k }, _) => {
            let risk = evaluate(h, d).map_err(fail)?;
            row.risk = Some(risk);
            row.opt = sparse_opt(d, k);
            row.good = row.opt.map(|o| risk <= 2.0 * o + params.eps + SLACK);
        }
        (Protocol::Spectrum, Hypothesis::RealSparse { g }) => {
            let dist = g.l1_distance(d.spectrum());
            row.distance = Some(dist);
            row.good = Some(dist <= params.eps + SLACK);
        }
        (Protocol::SingleSq, Hypothesis::RealSparse { g }) => {
            let dist = g.l2_distance_sq(d.spectrum()).sqrt();
            row.distance = Some(dist);
            row.good = Some(dist <= params.eps + SLACK);
        }
        _ => {}
    }
    Ok(())
}

/// CSV with a header row even when there are no rows, or JSON lines.
pub fn write_rows<W: Write>(rows: &[ResultRow], format: OutputFormat, mut out: W) -> Result<()> {
    match format {
        OutputFormat::Csv => {
            let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
            w.write_record(ResultRow::HEADER)?;
            for r in rows {
                w.serialize(r)?;
            }
            w.flush()?;
        }
        OutputFormat::Json => {
            for r in rows {
                serde_json::to_writer(&mut out, r)?;
                out.write_all(b"\n")?;
            }
            out.flush()?;
        }
    }
    Ok(())
}

pub fn read_rows_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if header != ResultRow::HEADER {
        return invalid("unexpected CSV header");
    }
    Ok(r.deserialize().collect::<std::result::Result<_, _>>()?)
}

pub fn read_rows_jsonl<R: BufRead>(input: R) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            rows.push(serde_json::from_str(&line)?);
        }
    }
    Ok(rows)
}

/// Runs the config and writes the table to its output, if any.
pub fn run_and_write(config: &ExperimentConfig) -> Result<Vec<ResultRow>> {
    let rows = run_experiment(config)?;
    if let Some(out) = &config.output {
        let file = std::fs::File::create(&out.path)?;
        write_rows(&rows, out.format, std::io::BufWriter::new(file))?;
    }
    Ok(rows)
}

/// Rows with `good = true`, out of all rows.
pub fn good_rate(rows: &[ResultRow]) -> (u64, u64) {
    let good = rows.iter().filter(|r| r.good == Some(true)).count();
    (good as u64, rows.len() as u64)
}

//! Single-round interactive verification: a classical verifier checks the
//! list an untrusted quantum prover sends by re-estimating the listed
//! coefficients and testing the accumulated Fourier weight.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{check_promise, DistError, LabeledDistribution, PromiseClass, PromiseKind, Sample};
use crate::estimation::{
    approximate_spectrum, check_unit, coefficient_sample_size, estimate_coefficients, goldreich_levin_qsq,
    EstimationError, GlScope, SpectrumSource,
};
use crate::fourier::{BitString, FourierError, SparseSpectrum};
use crate::learners::{heaviest_signed, top_k_spectrum, ErmParityLearner, FunctionalLearner, Hypothesis};
use crate::oracles::{character_sq, example_oracle, sq_oracle, LedgerCounts, OracleError, OracleLedger, SqPolicy};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("precondition violated: {0}")]
    Contract(String),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error("transcript: {0}")]
    Transcript(String),
}

pub type Result<T> = std::result::Result<T, VerifyError>;

/// Who can access what: SQ verifier with QSQ prover, or example verifier
/// with quantum-example prover; functional or distributional inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Setting {
    FunctionalQsq,
    FunctionalExamples,
    DistributionalQsq,
    DistributionalExamples,
}

impl Setting {
    pub const ALL: [Setting; 4] = [
        Setting::FunctionalQsq,
        Setting::FunctionalExamples,
        Setting::DistributionalQsq,
        Setting::DistributionalExamples,
    ];

    pub fn is_functional(self) -> bool {
        matches!(self, Setting::FunctionalQsq | Setting::FunctionalExamples)
    }

    pub fn uses_qsq(self) -> bool {
        matches!(self, Setting::FunctionalQsq | Setting::DistributionalQsq)
    }

    pub fn scope(self) -> GlScope {
        if self.is_functional() {
            GlScope::Functional
        } else {
            GlScope::Distributional
        }
    }

    fn name(self) -> &'static str {
        match self {
            Setting::FunctionalQsq => "functional-qsq",
            Setting::FunctionalExamples => "functional-examples",
            Setting::DistributionalQsq => "distributional-qsq",
            Setting::DistributionalExamples => "distributional-examples",
        }
    }
}

impl fmt::Display for Setting {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Setting {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        Setting::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| format!("unknown setting `{s}` (expected one of functional-qsq, functional-examples, distributional-qsq, distributional-examples)"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyParams {
    pub eps: f64,
    pub delta: f64,
    pub theta: f64,
    pub a2: f64,
    pub b2: f64,
}

impl VerifyParams {
    /// Promise class the setting assumes; functional inputs have weight 1.
    pub fn promise(&self, setting: Setting) -> PromiseClass {
        if setting.is_functional() {
            PromiseClass { theta: self.theta, a2: 1.0, b2: 1.0, kind: PromiseKind::Functional }
        } else {
            PromiseClass { theta: self.theta, a2: self.a2, b2: self.b2, kind: PromiseKind::General }
        }
    }

    fn weight_floor(&self, setting: Setting) -> f64 {
        if setting.is_functional() {
            1.0
        } else {
            self.a2
        }
    }

    /// Prover-side accuracy of the single-SQ protocol,
    /// `(ϑ/8b)·√((ε² − (b² − a²))/2)`.
    pub fn single_sq_accuracy(&self) -> f64 {
        self.theta / (8.0 * self.b2.sqrt()) * ((self.eps * self.eps - (self.b2 - self.a2)) / 2.0).sqrt()
    }

    /// Tolerance of the single verifier SQ, `(ε² − (b² − a²))/8`.
    pub fn single_sq_tolerance(&self) -> f64 {
        (self.eps * self.eps - (self.b2 - self.a2)) / 8.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case")]
pub enum Protocol {
    Parity,
    Sparse { k: usize },
    Spectrum,
    SingleSq,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Protocol::Parity => f.write_str("parity"),
            Protocol::Sparse { k } => write!(f, "sparse(k={k})"),
            Protocol::Spectrum => f.write_str("spectrum"),
            Protocol::SingleSq => f.write_str("single-sq"),
        }
    }
}

/// Largest list the verifier accepts.
pub fn list_bound(protocol: Protocol, setting: Setting, params: &VerifyParams) -> usize {
    let t2 = params.theta * params.theta;
    let bound = match (protocol, setting) {
        (Protocol::SingleSq, _) | (_, Setting::DistributionalExamples) => 64.0 * params.b2 / t2,
        (_, Setting::FunctionalExamples) => 16.0 / t2,
        (_, Setting::FunctionalQsq | Setting::DistributionalQsq) => 4.0 / t2,
    };
    (bound + 1e-9).floor() as usize
}

/// Per-string accuracy of the verifier's estimates for a list of `len`.
pub fn estimate_tolerance(protocol: Protocol, setting: Setting, params: &VerifyParams, len: usize) -> f64 {
    let e2 = params.eps * params.eps;
    let len = len.max(1) as f64;
    match protocol {
        Protocol::Parity => e2 / (16.0 * len),
        Protocol::Sparse { k } => {
            let k2 = (k * k) as f64;
            if setting.is_functional() {
                e2 / (64.0 * k2 * len)
            } else {
                e2 / (256.0 * k2 * len)
            }
        }
        Protocol::Spectrum => params.theta * params.eps.min(params.theta) / (16.0 * len),
        Protocol::SingleSq => params.single_sq_tolerance(),
    }
}

/// Acceptance threshold.  List protocols accept iff `Σξ̂² ≥ threshold`; the
/// single-SQ protocol accepts iff `Σϕ̂'² − 2ι ≤ threshold`.
pub fn accept_threshold(protocol: Protocol, setting: Setting, params: &VerifyParams) -> f64 {
    let e2 = params.eps * params.eps;
    let floor = params.weight_floor(setting);
    match protocol {
        Protocol::Parity => floor - e2 / 8.0,
        Protocol::Sparse { k } => {
            let k2 = (k * k) as f64;
            if setting.is_functional() {
                floor - e2 / (32.0 * k2)
            } else {
                floor - e2 / (128.0 * k2)
            }
        }
        Protocol::Spectrum => floor - params.theta * params.eps.min(params.theta) / 8.0,
        // Both the completeness and the soundness estimate land on this value.
        Protocol::SingleSq => (3.0 * e2 - 3.0 * params.b2 - params.a2) / 4.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ProtocolMessage {
    ListRequest { max_len: usize },
    CoefficientList { strings: Vec<BitString> },
    AnnotatedList { pairs: Vec<(BitString, f64)> },
    Abort,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Party {
    Verifier,
    Prover,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RejectReason {
    Aborted,
    Oversized { len: usize, bound: usize },
    Malformed { detail: String },
    WeightBelowThreshold,
    InnerProductTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum Verdict {
    Accept { hypothesis: Hypothesis },
    Reject { reason: RejectReason },
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept { .. })
    }

    pub fn hypothesis(&self) -> Option<&Hypothesis> {
        match self {
            Verdict::Accept { hypothesis } => Some(hypothesis),
            Verdict::Reject { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MessageRecord {
    pub party: Party,
    pub message: ProtocolMessage,
    /// Oracle use of the sending party since its previous record.
    pub ledger_delta: LedgerCounts,
}

/// Record of one interaction.  Messages are append-only and the verdict is
/// set exactly once.
#[derive(Debug, Clone, PartialEq)]
pub struct Transcript {
    protocol: Protocol,
    setting: Setting,
    params: VerifyParams,
    n: usize,
    records: Vec<MessageRecord>,
    estimates: Vec<(BitString, f64)>,
    iota: Option<f64>,
    estimate_delta: LedgerCounts,
    threshold: f64,
    statistic: Option<f64>,
    verdict: Option<Verdict>,
    verifier_ledger: LedgerCounts,
    prover_ledger: LedgerCounts,
}

impl Transcript {
    fn new(protocol: Protocol, setting: Setting, params: VerifyParams, n: usize) -> Self {
        Transcript {
            protocol,
            setting,
            params,
            n,
            records: Vec::new(),
            estimates: Vec::new(),
            iota: None,
            estimate_delta: LedgerCounts::default(),
            threshold: accept_threshold(protocol, setting, &params),
            statistic: None,
            verdict: None,
            verifier_ledger: LedgerCounts::default(),
            prover_ledger: LedgerCounts::default(),
        }
    }

    fn push(&mut self, party: Party, message: ProtocolMessage, ledger_delta: LedgerCounts) {
        self.records.push(MessageRecord { party, message, ledger_delta });
    }

    fn set_verdict(&mut self, verdict: Verdict, statistic: Option<f64>) {
        assert!(self.verdict.is_none(), "verdict already set");
        self.statistic = statistic;
        self.verdict = Some(verdict);
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn params(&self) -> &VerifyParams {
        &self.params
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn records(&self) -> &[MessageRecord] {
        &self.records
    }

    /// The verifier's per-string estimates, in list order.
    pub fn estimates(&self) -> &[(BitString, f64)] {
        &self.estimates
    }

    pub fn iota(&self) -> Option<f64> {
        self.iota
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn statistic(&self) -> Option<f64> {
        self.statistic
    }

    pub fn verdict(&self) -> &Verdict {
        self.verdict.as_ref().expect("finished transcripts carry a verdict")
    }

    pub fn verifier_ledger(&self) -> LedgerCounts {
        self.verifier_ledger
    }

    pub fn prover_ledger(&self) -> LedgerCounts {
        self.prover_ledger
    }

    /// The prover's reply, if one was recorded.
    pub fn response(&self) -> Option<&ProtocolMessage> {
        self.records.iter().find(|r| r.party == Party::Prover).map(|r| &r.message)
    }

    /// One JSON record per line: header, messages, estimates, verdict.
    pub fn to_jsonl(&self) -> String {
        let mut lines = vec![TranscriptLine::Header {
            protocol: self.protocol,
            setting: self.setting,
            params: self.params,
            n: self.n,
        }];
        lines.extend(self.records.iter().cloned().map(TranscriptLine::Message));
        lines.push(TranscriptLine::Estimates {
            estimates: self.estimates.clone(),
            iota: self.iota,
            ledger_delta: self.estimate_delta,
        });
        lines.push(TranscriptLine::Verdict {
            threshold: self.threshold,
            statistic: self.statistic,
            verdict: self.verdict().clone(),
            verifier_ledger: self.verifier_ledger,
            prover_ledger: self.prover_ledger,
        });
        let mut out = String::new();
        for line in lines {
            out.push_str(&serde_json::to_string(&line).expect("transcript records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let bad = |m: String| VerifyError::Transcript(m);
        let mut lines =
            text.lines().filter(|l| !l.trim().is_empty()).enumerate().map(|(i, l)| {
                serde_json::from_str::<TranscriptLine>(l).map_err(|e| bad(format!("line {}: {e}", i + 1)))
            });
        let Some(TranscriptLine::Header { protocol, setting, params, n }) = lines.next().transpose()? else {
            return Err(bad("missing header record".into()));
        };
        let mut t = Transcript::new(protocol, setting, params, n);
        let mut seen_estimates = false;
        for line in lines {
            match line? {
                TranscriptLine::Header { .. } => return Err(bad("repeated header".into())),
                TranscriptLine::Message(r) if !seen_estimates => t.records.push(r),
                TranscriptLine::Estimates { estimates, iota, ledger_delta } if !seen_estimates => {
                    t.estimates = estimates;
                    t.iota = iota;
                    t.estimate_delta = ledger_delta;
                    seen_estimates = true;
                }
                TranscriptLine::Verdict { threshold, statistic, verdict, verifier_ledger, prover_ledger }
                    if seen_estimates && t.verdict.is_none() =>
                {
                    t.threshold = threshold;
                    t.verifier_ledger = verifier_ledger;
                    t.prover_ledger = prover_ledger;
                    t.set_verdict(verdict, statistic);
                }
                _ => return Err(bad("records out of order".into())),
            }
        }
        if t.verdict.is_none() {
            return Err(bad("missing verdict record".into()));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum TranscriptLine {
    Header {
        protocol: Protocol,
        setting: Setting,
        params: VerifyParams,
        n: usize,
    },
    Message(MessageRecord),
    Estimates {
        estimates: Vec<(BitString, f64)>,
        iota: Option<f64>,
        ledger_delta: LedgerCounts,
    },
    Verdict {
        threshold: f64,
        statistic: Option<f64>,
        verdict: Verdict,
        verifier_ledger: LedgerCounts,
        prover_ledger: LedgerCounts,
    },
}

/// What a prover may touch: its own oracle stack on the prover-side data.
pub struct ProverContext<'a> {
    d: &'a LabeledDistribution,
    protocol: Protocol,
    setting: Setting,
    params: VerifyParams,
    rng: &'a mut dyn RngCore,
    ledger: OracleLedger,
}

impl ProverContext<'_> {
    pub fn n(&self) -> usize {
        self.d.n()
    }

    pub fn protocol(&self) -> Protocol {
        self.protocol
    }

    pub fn setting(&self) -> Setting {
        self.setting
    }

    pub fn params(&self) -> &VerifyParams {
        &self.params
    }

    pub fn rng(&mut self) -> &mut dyn RngCore {
        self.rng
    }

    /// Prefix-weight search through (functional or distributional) QSQs.
    pub fn goldreich_levin(&mut self, eps: f64, policy: &SqPolicy) -> Result<Vec<BitString>> {
        let scope = self.setting.scope();
        Ok(goldreich_levin_qsq(self.d, eps, scope, policy, &mut *self.rng, &mut self.ledger)?.list)
    }

    /// Spectrum approximation from quantum examples of the prover's data.
    pub fn approximate(&mut self, eps: f64, delta: f64) -> Result<SparseSpectrum> {
        let source = SpectrumSource::for_distribution(self.d);
        Ok(approximate_spectrum(self.d, source, eps, delta, &mut *self.rng, &mut self.ledger)?.spectrum)
    }

    /// Exact spectrum, for computationally unbounded (dishonest) provers.
    pub fn unbounded_spectrum(&self) -> &SparseSpectrum {
        self.d.spectrum()
    }
}

pub trait Prover {
    fn respond(&self, max_len: usize, ctx: &mut ProverContext<'_>) -> Result<ProtocolMessage>;
}

/// Multiplier `c` in the honest example-setting prover's copy bound
/// `c·ln(1/(δϑ²))/ϑ⁴` (parity, sparse and spectrum protocols, `δ ≤ ½`).
pub const HONEST_COPY_CONSTANT: f64 = 8192.0;

pub fn honest_copy_bound(params: &VerifyParams) -> f64 {
    let t2 = params.theta * params.theta;
    HONEST_COPY_CONSTANT * (1.0 / (params.delta * t2)).ln() / (t2 * t2)
}

/// The prover the completeness guarantees are about.
#[derive(Debug, Clone)]
pub struct HonestProver {
    pub qsq_policy: SqPolicy,
}

impl Default for HonestProver {
    fn default() -> Self {
        HonestProver { qsq_policy: SqPolicy::Exact }
    }
}

impl Prover for HonestProver {
    fn respond(&self, max_len: usize, ctx: &mut ProverContext<'_>) -> Result<ProtocolMessage> {
        let p = *ctx.params();
        if ctx.protocol() == Protocol::SingleSq {
            let acc = p.single_sq_accuracy();
            let Ok(phi) = ctx.approximate(acc, p.delta / 2.0) else {
                return Ok(ProtocolMessage::Abort);
            };
            if phi.len() > max_len {
                return Ok(ProtocolMessage::Abort);
            }
            let keep = p.theta - acc;
            let pairs = phi.iter().filter(|(_, c)| c.abs() >= keep).collect();
            return Ok(ProtocolMessage::AnnotatedList { pairs });
        }
        if ctx.setting().uses_qsq() {
            let policy = self.qsq_policy.clone();
            let strings = ctx.goldreich_levin(p.theta, &policy)?;
            return Ok(ProtocolMessage::CoefficientList { strings });
        }
        let Ok(phi) = ctx.approximate(p.theta / 2.0, p.delta / 2.0) else {
            return Ok(ProtocolMessage::Abort);
        };
        let strings: Vec<BitString> = phi.iter().filter(|(_, c)| c.abs() >= p.theta / 2.0).map(|(s, _)| s).collect();
        if strings.len() > max_len {
            return Ok(ProtocolMessage::Abort);
        }
        Ok(ProtocolMessage::CoefficientList { strings })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum Strategy {
    /// Remove the string of largest true magnitude.
    DropHeaviest,
    /// Append strings whose true coefficient is zero, staying within the bound.
    JunkPad,
    /// Exceed the bound by one string.
    Oversize,
    /// Replace the heaviest listed string by a zero-coefficient one (moving
    /// its annotation along in the single-SQ protocol).
    CoefficientSwap,
    Empty,
    /// Push the heaviest annotation `amount` further from zero; lists pass
    /// through unchanged.
    Inflate {
        amount: f64,
    },
}

impl Strategy {
    /// The list-protocol suite.
    pub const SUITE: [Strategy; 5] =
        [Strategy::DropHeaviest, Strategy::JunkPad, Strategy::Oversize, Strategy::CoefficientSwap, Strategy::Empty];

    pub fn name(&self) -> &'static str {
        match self {
            Strategy::DropHeaviest => "drop_heaviest",
            Strategy::JunkPad => "junk_pad",
            Strategy::Oversize => "oversize",
            Strategy::CoefficientSwap => "coefficient_swap",
            Strategy::Empty => "empty",
            Strategy::Inflate { .. } => "inflate",
        }
    }
}

/// Runs the honest prover, then rewrites its message.
#[derive(Debug, Clone)]
pub struct AdversarialProver {
    pub strategy: Strategy,
    pub baseline: HonestProver,
}

impl AdversarialProver {
    pub fn new(strategy: Strategy) -> Self {
        AdversarialProver { strategy, baseline: HonestProver::default() }
    }

    fn zero_strings<'a>(
        spec: &'a SparseSpectrum,
        taken: &'a BTreeSet<BitString>,
    ) -> impl Iterator<Item = BitString> + 'a {
        (0..1usize << spec.n())
            .map(move |v| BitString::new_unchecked(spec.n(), v))
            .filter(move |s| spec.get(s) == 0.0 && !taken.contains(s))
    }

    /// Mutates a string list; `truth` ranks strings by true magnitude.
    pub fn mutate_list(&self, mut strings: Vec<BitString>, max_len: usize, truth: &SparseSpectrum) -> Vec<BitString> {
        let heaviest = |list: &[BitString]| {
            list.iter().enumerate().max_by(|a, b| truth.get(a.1).abs().total_cmp(&truth.get(b.1).abs())).map(|(i, _)| i)
        };
        match self.strategy {
            Strategy::DropHeaviest => {
                if let Some(i) = heaviest(&strings) {
                    strings.remove(i);
                }
            }
            Strategy::JunkPad => {
                let taken: BTreeSet<_> = strings.iter().copied().collect();
                let room = max_len.saturating_sub(strings.len()).min(4);
                let junk: Vec<_> = Self::zero_strings(truth, &taken).take(room).collect();
                strings.extend(junk);
            }
            Strategy::Oversize => {
                let mut taken: BTreeSet<_> = strings.iter().copied().collect();
                let mut v = 0usize;
                while strings.len() <= max_len && v < 1usize << truth.n() {
                    let s = BitString::new_unchecked(truth.n(), v);
                    if taken.insert(s) {
                        strings.push(s);
                    }
                    v += 1;
                }
            }
            Strategy::CoefficientSwap => {
                let taken: BTreeSet<_> = strings.iter().copied().collect();
                let zero = Self::zero_strings(truth, &taken).next();
                if let (Some(i), Some(z)) = (heaviest(&strings), zero) {
                    strings[i] = z;
                }
            }
            Strategy::Empty => strings.clear(),
            Strategy::Inflate { .. } => {}
        }
        strings
    }

    pub fn mutate_pairs(
        &self,
        mut pairs: Vec<(BitString, f64)>,
        max_len: usize,
        truth: &SparseSpectrum,
    ) -> Vec<(BitString, f64)> {
        let heaviest = |list: &[(BitString, f64)]| {
            list.iter().enumerate().max_by(|a, b| a.1 .1.abs().total_cmp(&b.1 .1.abs())).map(|(i, _)| i)
        };
        match self.strategy {
            Strategy::Inflate { amount } => {
                if let Some(i) = heaviest(&pairs) {
                    let c = pairs[i].1;
                    pairs[i].1 = c + amount * if c < 0.0 { -1.0 } else { 1.0 };
                }
            }
            Strategy::CoefficientSwap => {
                let taken: BTreeSet<_> = pairs.iter().map(|p| p.0).collect();
                let zero = Self::zero_strings(truth, &taken).next();
                if let (Some(i), Some(z)) = (heaviest(&pairs), zero) {
                    pairs[i].0 = z;
                }
            }
            Strategy::DropHeaviest => {
                if let Some(i) = heaviest(&pairs) {
                    pairs.remove(i);
                }
            }
            _ => {
                let strings = self.mutate_list(pairs.iter().map(|p| p.0).collect(), max_len, truth);
                pairs =
                    strings.into_iter().map(|s| (s, pairs.iter().find(|p| p.0 == s).map_or(0.0, |p| p.1))).collect();
            }
        }
        pairs
    }
}

impl Prover for AdversarialProver {
    fn respond(&self, max_len: usize, ctx: &mut ProverContext<'_>) -> Result<ProtocolMessage> {
        let honest = self.baseline.respond(max_len, ctx)?;
        let truth = ctx.unbounded_spectrum().clone();
        Ok(match honest {
            ProtocolMessage::CoefficientList { strings } => {
                ProtocolMessage::CoefficientList { strings: self.mutate_list(strings, max_len, &truth) }
            }
            ProtocolMessage::AnnotatedList { pairs } => {
                ProtocolMessage::AnnotatedList { pairs: self.mutate_pairs(pairs, max_len, &truth) }
            }
            ProtocolMessage::Abort => match self.strategy {
                Strategy::Oversize | Strategy::Empty | Strategy::JunkPad => {
                    ProtocolMessage::CoefficientList { strings: self.mutate_list(Vec::new(), max_len, &truth) }
                }
                _ => ProtocolMessage::Abort,
            },
            other => other,
        })
    }
}

/// Step-3 screening of the prover's reply.
fn screen(
    protocol: Protocol,
    message: Option<&ProtocolMessage>,
    n: usize,
    bound: usize,
) -> std::result::Result<Vec<(BitString, f64)>, RejectReason> {
    let (strings, pairs): (Vec<BitString>, Vec<(BitString, f64)>) = match (protocol, message) {
        (_, None | Some(ProtocolMessage::Abort)) => return Err(RejectReason::Aborted),
        (Protocol::SingleSq, Some(ProtocolMessage::AnnotatedList { pairs })) => {
            (pairs.iter().map(|p| p.0).collect(), pairs.clone())
        }
        (Protocol::SingleSq, _) => return Err(RejectReason::Malformed { detail: "expected an annotated list".into() }),
        (_, Some(ProtocolMessage::CoefficientList { strings })) => {
            (strings.clone(), strings.iter().map(|s| (*s, 0.0)).collect())
        }
        _ => return Err(RejectReason::Malformed { detail: "expected a coefficient list".into() }),
    };
    if strings.len() > bound {
        return Err(RejectReason::Oversized { len: strings.len(), bound });
    }
    if let Some(s) = strings.iter().find(|s| s.n() != n) {
        return Err(RejectReason::Malformed { detail: format!("string {s} has the wrong length") });
    }
    if pairs.iter().any(|p| !p.1.is_finite()) {
        return Err(RejectReason::Malformed { detail: "non-finite annotation".into() });
    }
    let distinct: BTreeSet<_> = strings.iter().collect();
    if distinct.len() != strings.len() {
        return Err(RejectReason::Malformed { detail: "repeated string".into() });
    }
    Ok(pairs)
}

/// Step-4 decision from screened list and estimates; `(statistic, verdict)`.
fn decide(
    protocol: Protocol,
    n: usize,
    threshold: f64,
    pairs: &[(BitString, f64)],
    estimates: &[(BitString, f64)],
    iota: Option<f64>,
) -> Result<(f64, Verdict)> {
    if protocol == Protocol::SingleSq {
        let iota = iota.ok_or_else(|| VerifyError::Transcript("single-SQ decision without ι".into()))?;
        let statistic = pairs.iter().map(|p| p.1 * p.1).sum::<f64>() - 2.0 * iota;
        let verdict = if statistic > threshold {
            Verdict::Reject { reason: RejectReason::InnerProductTest }
        } else {
            Verdict::Accept { hypothesis: Hypothesis::RealSparse { g: SparseSpectrum::from_pairs(n, pairs.to_vec())? } }
        };
        return Ok((statistic, verdict));
    }
    let statistic: f64 = estimates.iter().map(|e| e.1 * e.1).sum();
    if statistic < threshold {
        return Ok((statistic, Verdict::Reject { reason: RejectReason::WeightBelowThreshold }));
    }
    let xi = SparseSpectrum::from_pairs(n, estimates.to_vec())?;
    let hypothesis = match protocol {
        Protocol::Parity => Hypothesis::Parity { s: heaviest_signed(&xi) },
        Protocol::Sparse { k } => Hypothesis::RandomizedSparse { g: top_k_spectrum(&xi, k) },
        Protocol::Spectrum => Hypothesis::RealSparse { g: xi },
        Protocol::SingleSq => unreachable!(),
    };
    Ok((statistic, Verdict::Accept { hypothesis }))
}

/// Parameter ranges, the promise class, and the accuracy and resolution
/// floors each protocol needs.
pub fn check_preconditions(
    protocol: Protocol,
    setting: Setting,
    d: &LabeledDistribution,
    p: &VerifyParams,
) -> Result<()> {
    let contract = |m: String| Err(VerifyError::Contract(m));
    for (name, v) in [("eps", p.eps), ("delta", p.delta)] {
        check_unit(name, v).or_else(|e| contract(e.to_string()))?;
    }
    if !(p.theta > 0.0 && p.theta <= 1.0) {
        return contract(format!("theta = {} outside (0, 1]", p.theta));
    }
    if !(0.0 <= p.a2 && p.a2 <= p.b2 && p.b2 <= 1.0) {
        return contract(format!("need 0 ≤ a2 ≤ b2 ≤ 1, got a2 = {}, b2 = {}", p.a2, p.b2));
    }
    let report = check_promise(d, &p.promise(setting));
    if let Some(v) = report.violation {
        return contract(format!("promise class violated: {v:?}"));
    }
    let gap = (p.b2 - p.a2).max(0.0).sqrt();
    let slack = 1e-12;
    if !setting.is_functional() {
        match protocol {
            Protocol::Parity | Protocol::Spectrum if p.eps + slack < 2.0 * gap => {
                return contract(format!("eps = {} is below 2·√(b2 − a2) = {}", p.eps, 2.0 * gap));
            }
            Protocol::Sparse { k } if p.eps + slack < 4.0 * k as f64 * gap => {
                return contract(format!("eps = {} is below 4k·√(b2 − a2) = {}", p.eps, 4.0 * k as f64 * gap));
            }
            _ => {}
        }
    }
    if protocol == Protocol::SingleSq && p.eps * p.eps <= p.b2 - p.a2 {
        return contract("single-SQ protocol needs eps² > b2 − a2".into());
    }
    if let Protocol::Sparse { k: 0 } = protocol {
        return contract("sparsity k must be at least 1".into());
    }
    let floor = 2f64.powf(-(d.n() as f64 / 2.0 - 3.0));
    if setting == Setting::DistributionalExamples && protocol != Protocol::SingleSq && p.theta <= floor {
        return contract(format!("theta = {} must exceed 2^-(n/2-3) = {floor}", p.theta));
    }
    Ok(())
}

/// Runs one interaction without checking preconditions.  The verifier's
/// classical access reads `verifier_d`; the prover's quantum access reads
/// `prover_d`.
pub fn simulate_interaction<R: Rng>(
    protocol: Protocol,
    setting: Setting,
    params: &VerifyParams,
    verifier_d: &LabeledDistribution,
    prover_d: &LabeledDistribution,
    prover: &dyn Prover,
    sq_policy: &SqPolicy,
    rng: &mut R,
) -> Result<Transcript> {
    let n = verifier_d.n();
    if prover_d.n() != n {
        return Err(FourierError::DimensionMismatch { left: prover_d.n(), right: n }.into());
    }
    let mut t = Transcript::new(protocol, setting, *params, n);
    let bound = list_bound(protocol, setting, params);
    t.push(Party::Verifier, ProtocolMessage::ListRequest { max_len: bound }, LedgerCounts::default());

    let mut ctx = ProverContext { d: prover_d, protocol, setting, params: *params, rng, ledger: OracleLedger::new() };
    let reply = prover.respond(bound, &mut ctx)?;
    let prover_counts = ctx.ledger.counts();
    t.prover_ledger = prover_counts;
    t.push(Party::Prover, reply, prover_counts);

    let pairs = match screen(protocol, t.response(), n, bound) {
        Ok(p) => p,
        Err(reason) => {
            t.set_verdict(Verdict::Reject { reason }, None);
            return Ok(t);
        }
    };

    let mut ledger = OracleLedger::new();
    if protocol == Protocol::SingleSq {
        // Scaled into [−1, 1] by the ℓ1 norm, which bounds |ϕ'(x)|.
        let phi = SparseSpectrum::from_pairs(n, pairs.clone())?;
        let scale = pairs.iter().map(|p| p.1.abs()).sum::<f64>().max(1.0);
        let query = |x: &BitString, y: u8| phi.evaluate_at(x.index()) * (1.0 - 2.0 * f64::from(y)) / scale;
        let tau = params.single_sq_tolerance() / scale;
        t.iota = Some(scale * sq_oracle(verifier_d, &query, tau, sq_policy, rng, &mut ledger)?);
    } else if !pairs.is_empty() {
        let strings: Vec<BitString> = pairs.iter().map(|p| p.0).collect();
        let tol = estimate_tolerance(protocol, setting, params, strings.len());
        let values = if setting.uses_qsq() {
            strings
                .iter()
                .map(|s| character_sq(verifier_d, s, tol, sq_policy, rng, &mut ledger))
                .collect::<std::result::Result<Vec<_>, _>>()?
        } else {
            let m = coefficient_sample_size(tol, params.delta / (2.0 * strings.len() as f64));
            estimate_coefficients(verifier_d, &strings, m, rng, &mut ledger)
        };
        t.estimates = strings.into_iter().zip(values).collect();
    }
    t.estimate_delta = ledger.counts();
    t.verifier_ledger = ledger.counts();

    let (statistic, verdict) = decide(protocol, n, t.threshold, &pairs, &t.estimates, t.iota)?;
    t.set_verdict(verdict, Some(statistic));
    Ok(t)
}

/// Checks preconditions, then runs `protocol` with `d` on both sides.
pub fn verify_protocol<R: Rng>(
    protocol: Protocol,
    setting: Setting,
    d: &LabeledDistribution,
    params: &VerifyParams,
    prover: &dyn Prover,
    sq_policy: &SqPolicy,
    rng: &mut R,
) -> Result<(Verdict, Transcript)> {
    check_preconditions(protocol, setting, d, params)?;
    let t = simulate_interaction(protocol, setting, params, d, d, prover, sq_policy, rng)?;
    Ok((t.verdict().clone(), t))
}

/// Proper parity verification.  On accept the hypothesis is the parity of
/// largest (signed) estimate; the risk guarantee is `opt + ε`.
pub fn verify_parity<R: Rng>(
    setting: Setting,
    d: &LabeledDistribution,
    params: &VerifyParams,
    prover: &dyn Prover,
    sq_policy: &SqPolicy,
    rng: &mut R,
) -> Result<(Verdict, Transcript)> {
    verify_protocol(Protocol::Parity, setting, d, params, prover, sq_policy, rng)
}

/// Improper `k`-sparse verification with a randomized hypothesis built from
/// the `k` heaviest estimates; the risk guarantee is `2·opt + ε`.
pub fn verify_fourier_sparse<R: Rng>(
    setting: Setting,
    d: &LabeledDistribution,
    k: usize,
    params: &VerifyParams,
    prover: &dyn Prover,
    sq_policy: &SqPolicy,
    rng: &mut R,
) -> Result<(Verdict, Transcript)> {
    verify_protocol(Protocol::Sparse { k }, setting, d, params, prover, sq_policy, rng)
}

/// Spectrum approximation; an accepted hypothesis is `RealSparse` holding `ϕ̃`.
pub fn verify_spectrum<R: Rng>(
    setting: Setting,
    d: &LabeledDistribution,
    params: &VerifyParams,
    prover: &dyn Prover,
    sq_policy: &SqPolicy,
    rng: &mut R,
) -> Result<(Verdict, Transcript)> {
    verify_protocol(Protocol::Spectrum, setting, d, params, prover, sq_policy, rng)
}

/// The annotated-list protocol with a single verifier SQ.
pub fn verify_spectrum_single_sq<R: Rng>(
    d: &LabeledDistribution,
    params: &VerifyParams,
    prover: &dyn Prover,
    sq_policy: &SqPolicy,
    rng: &mut R,
) -> Result<(Verdict, Transcript)> {
    verify_protocol(Protocol::SingleSq, Setting::DistributionalExamples, d, params, prover, sq_policy, rng)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub recorded: Verdict,
    pub recomputed: Verdict,
    pub statistic: Option<f64>,
}

impl ReplayReport {
    pub fn matches(&self) -> bool {
        self.recorded == self.recomputed
    }
}

/// Re-runs the verifier's decision on a logged transcript using the logged
/// estimates.
pub fn replay(t: &Transcript) -> Result<ReplayReport> {
    let bound = list_bound(t.protocol, t.setting, &t.params);
    let threshold = accept_threshold(t.protocol, t.setting, &t.params);
    let (statistic, recomputed) = match screen(t.protocol, t.response(), t.n, bound) {
        Err(reason) => (None, Verdict::Reject { reason }),
        Ok(pairs) => {
            if t.protocol != Protocol::SingleSq {
                let listed: Vec<BitString> = pairs.iter().map(|p| p.0).collect();
                let estimated: Vec<BitString> = t.estimates.iter().map(|e| e.0).collect();
                if listed != estimated {
                    return Err(VerifyError::Transcript("estimates do not cover the prover's list".into()));
                }
            }
            let (s, v) = decide(t.protocol, t.n, threshold, &pairs, &t.estimates, t.iota)?;
            (Some(s), v)
        }
    };
    Ok(ReplayReport { recorded: t.verdict().clone(), recomputed, statistic })
}

/// `⌈½·(18/(1+η))²·ln 24⌉`.
pub fn tester_sample_size(eta: f64) -> u64 {
    (0.5 * (18.0 / (1.0 + eta)).powi(2) * 24f64.ln()).ceil() as u64
}

/// Largest empirical error at which the tester still says "noisy parity".
pub fn tester_threshold(eta: f64) -> f64 {
    7.0 * (1.0 + eta) / 18.0
}

/// A verifier-prover pair seen from outside: classical data for the
/// verifier, quantum data for the prover, a hypothesis or a rejection out.
pub trait VerifierProverPair {
    fn run(
        &self,
        verifier_d: &LabeledDistribution,
        prover_d: &LabeledDistribution,
        rng: &mut dyn RngCore,
    ) -> Result<(Hypothesis, LedgerCounts)>;
}

/// The distributional-examples parity protocol at the parameters the tester
/// needs (`a = 0`, `b = ϑ = 1 − 2η`, `ε = (1 − 2η)/3`, `δ = ⅓`), which lie
/// outside its accuracy precondition.
#[derive(Debug, Clone)]
pub struct ProtocolPair {
    pub eta: f64,
    pub prover: HonestProver,
}

impl ProtocolPair {
    pub fn new(eta: f64) -> Self {
        ProtocolPair { eta, prover: HonestProver::default() }
    }

    pub fn params(&self) -> VerifyParams {
        let b = 1.0 - 2.0 * self.eta;
        VerifyParams { eps: b / 3.0, delta: 1.0 / 3.0, theta: b, a2: 0.0, b2: b * b }
    }
}

impl VerifierProverPair for ProtocolPair {
    fn run(
        &self,
        verifier_d: &LabeledDistribution,
        prover_d: &LabeledDistribution,
        mut rng: &mut dyn RngCore,
    ) -> Result<(Hypothesis, LedgerCounts)> {
        let t = simulate_interaction(
            Protocol::Parity,
            Setting::DistributionalExamples,
            &self.params(),
            verifier_d,
            prover_d,
            &self.prover,
            &SqPolicy::Exact,
            &mut rng,
        )?;
        let h = t.verdict().hypothesis().cloned().unwrap_or(Hypothesis::Reject);
        Ok((h, t.verifier_ledger()))
    }
}

/// A verifier that ignores the prover and runs parity ERM on `m` examples.
#[derive(Debug, Clone, Copy)]
pub struct ClassicalErmPair {
    pub m: u64,
}

impl VerifierProverPair for ClassicalErmPair {
    fn run(
        &self,
        verifier_d: &LabeledDistribution,
        _prover_d: &LabeledDistribution,
        rng: &mut dyn RngCore,
    ) -> Result<(Hypothesis, LedgerCounts)> {
        let mut ledger = OracleLedger::new();
        let samples: Vec<Sample> = (0..self.m).map(|_| example_oracle(verifier_d, rng, &mut ledger)).collect();
        Ok((ErmParityLearner.learn(verifier_d.n(), &samples), ledger.counts()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TesterVerdict {
    NoisyParityFamily,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TesterOutcome {
    pub verdict: TesterVerdict,
    pub hypothesis: Hypothesis,
    pub test_error: Option<f64>,
    /// Classical examples of the unknown distribution used in total.
    pub examples: u64,
}

/// Distinguisher between `U_{n+1}` and random noisy parities built from a
/// verifier-prover pair: the prover only ever sees `U_{n+1}`.
#[derive(Debug, Clone)]
pub struct Tester<P> {
    pub pair: P,
    pub eta: f64,
    pub m_test: u64,
    pub threshold: f64,
}

pub fn build_tester_from_verifier<P: VerifierProverPair>(pair: P, eta: f64) -> Tester<P> {
    Tester { pair, eta, m_test: tester_sample_size(eta), threshold: tester_threshold(eta) }
}

impl<P: VerifierProverPair> Tester<P> {
    pub fn run<R: Rng>(&self, d: &LabeledDistribution, rng: &mut R) -> Result<TesterOutcome> {
        let simulated = LabeledDistribution::uniform(d.n())?;
        let (hypothesis, used) = self.pair.run(d, &simulated, rng)?;
        if hypothesis.is_reject() {
            return Ok(TesterOutcome {
                verdict: TesterVerdict::NoisyParityFamily,
                hypothesis,
                test_error: None,
                examples: used.examples,
            });
        }
        let mut ledger = OracleLedger::new();
        let mut errors = 0u64;
        for _ in 0..self.m_test {
            let z = example_oracle(d, rng, &mut ledger);
            if hypothesis.predict(&z.x, rng) != Some(z.y) {
                errors += 1;
            }
        }
        let test_error = errors as f64 / self.m_test as f64;
        let verdict =
            if test_error <= self.threshold { TesterVerdict::NoisyParityFamily } else { TesterVerdict::Uniform };
        Ok(TesterOutcome { verdict, hypothesis, test_error: Some(test_error), examples: used.examples + self.m_test })
    }
}

/// Examples the ERM pair needs for risk `opt + (1−2η)/3` with probability ⅔.
pub fn erm_pair_sample_size(n: usize, eta: f64) -> u64 {
    ErmParityLearner::sample_size(n, (1.0 - 2.0 * eta) / 3.0, 1.0 / 3.0)
}

/// Wilson score interval for `successes` out of `trials` at normal quantile `z`.
pub fn wilson_interval(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    if trials == 0 {
        return (0.0, 1.0);
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let centre = (p + z2 / (2.0 * n)) / (1.0 + z2 / n);
    let half = z / (1.0 + z2 / n) * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt();
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Two-sided 99% normal quantile.
pub const Z_99: f64 = 2.5758293035489004;

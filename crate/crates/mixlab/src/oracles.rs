//! Data access: classical examples and statistical queries, plus classically
//! simulated quantum Fourier sampling and prefix-weight QSQs. Quantum oracles
//! draw from their closed-form outcome laws; every call is recorded in an
//! [`OracleLedger`].

use std::fmt;
use std::sync::Arc;

use rand::distr::Distribution;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::Binomial;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{draw_sample, DistError, LabeledDistribution, Origin, Sample};
use crate::fourier::{self, BitString, DenseTable};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error("tolerance must be positive, got {0}")]
    NonPositiveTolerance(f64),
    #[error("adversary replied {reply} to truth {truth} outside tolerance {tau}")]
    AdversaryContractViolation { truth: f64, reply: f64, tau: f64 },
    #[error("query value {0} at some point exceeds 1 in magnitude")]
    QueryOutOfRange(f64),
    #[error("sampler variant does not match the distribution: {0}")]
    VariantMismatch(String),
    #[error("functional access requested on a non-functional distribution")]
    NotFunctional,
    #[error("unsupported observable: {0}")]
    UnsupportedObservable(String),
    #[error("prefix length {k} exceeds dimension {n}")]
    PrefixTooLong { k: usize, n: usize },
    #[error("outcome law sums to {0}, not 1")]
    Unnormalised(f64),
}

pub type Result<T> = std::result::Result<T, OracleError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseMode {
    Exact,
    UniformNoise,
    Adversarial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqCall {
    pub tolerance: f64,
    pub mode: ResponseMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QsqCall {
    pub observable: String,
    pub tolerance: f64,
}

/// Per-run query accounting. Counters only ever grow.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OracleLedger {
    pub examples_drawn: u64,
    pub quantum_copies_consumed: u64,
    pub sq_calls: Vec<SqCall>,
    pub qsq_calls: Vec<QsqCall>,
}

/// Scalar summary of a ledger, used for deltas in transcripts.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerCounts {
    pub examples: u64,
    pub copies: u64,
    pub sqs: u64,
    pub qsqs: u64,
}

impl LedgerCounts {
    pub fn since(&self, earlier: &LedgerCounts) -> LedgerCounts {
        LedgerCounts {
            examples: self.examples - earlier.examples,
            copies: self.copies - earlier.copies,
            sqs: self.sqs - earlier.sqs,
            qsqs: self.qsqs - earlier.qsqs,
        }
    }
}

impl OracleLedger {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn counts(&self) -> LedgerCounts {
        LedgerCounts {
            examples: self.examples_drawn,
            copies: self.quantum_copies_consumed,
            sqs: self.sq_calls.len() as u64,
            qsqs: self.qsq_calls.len() as u64,
        }
    }

    pub fn add_examples(&mut self, k: u64) {
        self.examples_drawn += k;
    }

    pub fn add_copies(&mut self, k: u64) {
        self.quantum_copies_consumed += k;
    }
}

pub type AdversaryFn = dyn Fn(f64, f64) -> f64 + Send + Sync;

/// How a (Q)SQ oracle perturbs the true expectation.
#[derive(Clone)]
pub enum SqPolicy {
    Exact,
    /// Adds independent `Uniform(−τ, τ)` noise.
    UniformNoise,
    /// Receives `(truth, τ)`; the reply must stay within `τ` of the truth.
    Adversarial(Arc<AdversaryFn>),
}

impl fmt::Debug for SqPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SqPolicy::Exact => "Exact",
            SqPolicy::UniformNoise => "UniformNoise",
            SqPolicy::Adversarial(_) => "Adversarial(..)",
        })
    }
}

impl SqPolicy {
    pub fn adversarial(f: impl Fn(f64, f64) -> f64 + Send + Sync + 'static) -> Self {
        SqPolicy::Adversarial(Arc::new(f))
    }

    pub fn mode(&self) -> ResponseMode {
        match self {
            SqPolicy::Exact => ResponseMode::Exact,
            SqPolicy::UniformNoise => ResponseMode::UniformNoise,
            SqPolicy::Adversarial(_) => ResponseMode::Adversarial,
        }
    }

    pub fn respond<R: Rng + ?Sized>(&self, truth: f64, tau: f64, rng: &mut R) -> Result<f64> {
        if tau.is_nan() || tau <= 0.0 {
            return Err(OracleError::NonPositiveTolerance(tau));
        }
        match self {
            SqPolicy::Exact => Ok(truth),
            SqPolicy::UniformNoise => Ok(truth + rng.random_range(-tau..tau)),
            SqPolicy::Adversarial(f) => {
                let reply = f(truth, tau);
                if (reply - truth).abs() <= tau + 1e-12 {
                    Ok(reply)
                } else {
                    Err(OracleError::AdversaryContractViolation { truth, reply, tau })
                }
            }
        }
    }
}

/// Draws one classical example.
pub fn example_oracle<R: Rng + ?Sized>(d: &LabeledDistribution, rng: &mut R, ledger: &mut OracleLedger) -> Sample {
    ledger.add_examples(1);
    draw_sample(d, rng)
}

/// Exact `E_{(x,y)∼D}[g(x, y)]` by enumeration.
pub fn sq_truth(d: &LabeledDistribution, query: &dyn Fn(&BitString, u8) -> f64) -> Result<f64> {
    let mut total = 0.0;
    for x in BitString::all(d.n()).map_err(DistError::from)? {
        for y in 0..2u8 {
            let v = query(&x, y);
            if v.is_nan() || v.abs() > 1.0 + 1e-12 {
                return Err(OracleError::QueryOutOfRange(v));
            }
            total += d.probability(x.index(), y) * v;
        }
    }
    Ok(total)
}

/// Statistical query with tolerance `tau`.
pub fn sq_oracle<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    query: &dyn Fn(&BitString, u8) -> f64,
    tau: f64,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    let truth = sq_truth(d, query)?;
    answer_sq(truth, tau, policy, rng, ledger)
}

/// The correlation query `χ_s(x)(1 − 2y)`, whose expectation is `ϕ̂(s)`.
/// Uses the cached spectrum instead of enumerating.
pub fn character_sq<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    s: &BitString,
    tau: f64,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    answer_sq(d.coefficient(s), tau, policy, rng, ledger)
}

fn answer_sq<R: Rng + ?Sized>(
    truth: f64,
    tau: f64,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    let reply = policy.respond(truth, tau, rng)?;
    ledger.sq_calls.push(SqCall { tolerance: tau, mode: policy.mode() });
    Ok(reply)
}

/// Which simulated quantum example state is measured.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "variant")]
pub enum SamplerVariant {
    /// Superposition examples of a Boolean function.
    Functional,
    /// Noisy examples as a mixture over noise patterns.
    NoisyMixed { eta: f64 },
    /// Noisy examples with noise held coherently in an ancilla.
    NoisyPure { eta: f64 },
    /// Mixture-of-superpositions examples of a general distribution.
    Mixture,
}

/// Success probability and conditional outcome law of Fourier sampling.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierLaw {
    pub success: f64,
    pub law: DenseTable,
}

impl FourierLaw {
    pub fn for_variant(d: &LabeledDistribution, variant: SamplerVariant) -> Result<Self> {
        let squared = |t: &DenseTable| {
            let c = fourier::transform(t);
            DenseTable::from_fn(t.n(), |s| c.values()[s].powi(2)).expect("dimension already valid")
        };
        let noisy_sign = |eta: f64| -> Result<DenseTable> {
            match d.origin() {
                Origin::Noisy { eta: e, .. } if (e - eta).abs() <= 1e-12 => Ok(d.clean_sign().expect("noisy origin")),
                Origin::Function { .. } if eta == 0.0 => Ok(d.clean_sign().expect("functional origin")),
                _ => Err(OracleError::VariantMismatch(format!("distribution is not noisy with eta={eta}"))),
            }
        };
        let (success, law) = match variant {
            SamplerVariant::Functional => {
                if !d.is_functional() {
                    return Err(OracleError::VariantMismatch("functional sampling needs weight 1".into()));
                }
                (0.5, squared(d.phi()))
            }
            SamplerVariant::NoisyMixed { eta } => (0.5, squared(&noisy_sign(eta)?)),
            SamplerVariant::NoisyPure { eta } => (0.5 - ((1.0 - eta) * eta).sqrt(), squared(&noisy_sign(eta)?)),
            SamplerVariant::Mixture => {
                let floor = (1.0 - d.weight()) / d.phi().len() as f64;
                let law = DenseTable::from_fn(d.n(), |s| floor + d.coefficients().values()[s].powi(2))
                    .expect("dimension already valid");
                (0.5, law)
            }
        };
        let total: f64 = law.values().iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(OracleError::Unnormalised(total));
        }
        Ok(Self { success, law })
    }

    /// Noise-free outcome probabilities over `{0,1}^{n+1}` where success
    /// outcomes are `(s, 1)` and all failures are folded into `(0^n, 0)`.
    pub fn joint_probability(&self, s: usize, success_bit: bool) -> f64 {
        match (success_bit, s) {
            (true, _) => self.success * self.law.values()[s],
            (false, 0) => 1.0 - self.success,
            (false, _) => 0.0,
        }
    }
}

/// Counts from `m` sampling attempts.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleCounts {
    pub attempts: u64,
    pub failures: u64,
    /// Successful outcomes per string value.
    pub successes: Vec<u64>,
}

/// A Fourier sampler bound to one distribution and variant.
#[derive(Debug, Clone)]
pub struct FourierSampler {
    n: usize,
    law: FourierLaw,
    alias: WeightedAliasIndex<f64>,
}

impl FourierSampler {
    pub fn new(d: &LabeledDistribution, variant: SamplerVariant) -> Result<Self> {
        let law = FourierLaw::for_variant(d, variant)?;
        let alias = WeightedAliasIndex::new(law.law.values().to_vec())
            .map_err(|e| OracleError::VariantMismatch(format!("degenerate law: {e}")))?;
        Ok(Self { n: d.n(), law, alias })
    }

    pub fn law(&self) -> &FourierLaw {
        &self.law
    }

    /// Consumes one copy; `None` when the post-selection fails.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, ledger: &mut OracleLedger) -> Option<BitString> {
        ledger.add_copies(1);
        if rng.random::<f64>() < self.law.success {
            Some(BitString::new_unchecked(self.n, self.alias.sample(rng)))
        } else {
            None
        }
    }

    /// Outcome counts of `m` attempts, drawn directly from their multinomial
    /// law (identical in distribution to `m` calls of [`Self::sample`]).
    pub fn sample_counts<R: Rng + ?Sized>(&self, m: u64, rng: &mut R, ledger: &mut OracleLedger) -> SampleCounts {
        ledger.add_copies(m);
        let failures = binomial(m, 1.0 - self.law.success, rng);
        let successes = multinomial(m - failures, self.law.law.values(), rng);
        SampleCounts { attempts: m, failures, successes }
    }
}

/// Counts of `m` independent draws from `probs`, by sequential conditional
/// binomials.
pub(crate) fn multinomial<R: Rng + ?Sized>(m: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut remaining = m;
    let mut mass_left = 1.0;
    let mut counts = vec![0u64; probs.len()];
    for (slot, &p) in counts.iter_mut().zip(probs) {
        if remaining == 0 {
            break;
        }
        let q = if mass_left <= p { 1.0 } else { (p / mass_left).clamp(0.0, 1.0) };
        let c = binomial(remaining, q, rng);
        *slot = c;
        remaining -= c;
        mass_left -= p;
    }
    if remaining > 0 {
        // Rounding left a few draws unassigned; give them to the last
        // outcome with positive mass.
        if let Some(i) = probs.iter().rposition(|&p| p > 0.0) {
            counts[i] += remaining;
        }
    }
    counts
}

pub(crate) fn binomial<R: Rng + ?Sized>(n: u64, p: f64, rng: &mut R) -> u64 {
    if n == 0 || p <= 0.0 {
        return 0;
    }
    if p >= 1.0 {
        return n;
    }
    Binomial::new(n, p).expect("valid binomial parameters").sample(rng)
}

/// One draw from a Fourier sampler on `d` (builds the sampler each call).
pub fn fourier_sample<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    variant: SamplerVariant,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<Option<BitString>> {
    Ok(FourierSampler::new(d, variant)?.sample(rng, ledger))
}

/// Projector onto outcomes whose first `k` coordinates equal `prefix` and
/// whose last qubit is 1, after a Hadamard on every qubit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PrefixObservable {
    k: usize,
    bits: u32,
}

impl PrefixObservable {
    pub fn new(k: usize, bits: u64) -> Self {
        assert!(k <= 31 && bits >> k == 0, "prefix bits exceed length");
        Self { k, bits: bits as u32 }
    }

    pub fn empty() -> Self {
        Self { k: 0, bits: 0 }
    }

    pub fn from_string(s: &BitString) -> Self {
        Self { k: s.n(), bits: s.value() as u32 }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn bits(&self) -> u64 {
        self.bits as u64
    }

    /// Appends coordinate `x_{k+1} = bit`.
    pub fn extend(&self, bit: bool) -> Self {
        Self { k: self.k + 1, bits: self.bits | (u32::from(bit) << self.k) }
    }

    /// Strings over `{0,1}^n` that start with this prefix.
    pub fn completions(&self, n: usize) -> impl Iterator<Item = usize> + '_ {
        let k = self.k;
        (0..1usize << (n - k)).map(move |t| self.bits as usize | (t << k))
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.k > n {
            Err(OracleError::PrefixTooLong { k: self.k, n })
        } else {
            Ok(())
        }
    }
}

impl fmt::Display for PrefixObservable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: String = (0..self.k).map(|i| if self.bits >> i & 1 == 1 { '1' } else { '0' }).collect();
        write!(f, "prefix[{text}]")
    }
}

/// Exact expectation of the prefix observable on the mixture state:
/// `½ Σ_t (2^{−n}(1 − E[ϕ²]) + ϕ̂(prefix·t)²)`.
pub fn prefix_weight_truth(d: &LabeledDistribution, obs: &PrefixObservable) -> Result<f64> {
    obs.check(d.n())?;
    let coeffs = d.coefficients().values();
    let heavy: f64 = obs.completions(d.n()).map(|s| coeffs[s] * coeffs[s]).sum();
    let floor = (1.0 - d.weight()) / (1u64 << obs.k()) as f64;
    Ok(0.5 * (floor + heavy))
}

pub fn qsq_prefix_weight<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    obs: &PrefixObservable,
    tau: f64,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    let truth = prefix_weight_truth(d, obs)?;
    answer_qsq(truth, obs.to_string(), tau, policy, rng, ledger)
}

fn answer_qsq<R: Rng + ?Sized>(
    truth: f64,
    observable: String,
    tau: f64,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    let reply = policy.respond(truth, tau, rng)?;
    ledger.qsq_calls.push(QsqCall { observable, tolerance: tau });
    Ok(reply)
}

/// Observables supported on the pure superposition state of a function.
pub enum FunctionalObservable<'a> {
    Prefix(PrefixObservable),
    /// A bounded function of the computational basis outcome `(x, y)`.
    Diagonal {
        name: String,
        g: &'a dyn Fn(&BitString, u8) -> f64,
    },
    /// The diagonal observable `χ_s(x)(1 − 2y)`, evaluated from the spectrum.
    Character(BitString),
}

/// QSQ on the pure superposition example state of a Boolean function.
pub fn functional_qsq<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    obs: &FunctionalObservable<'_>,
    tau: f64,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    if !d.is_functional() {
        return Err(OracleError::NotFunctional);
    }
    let (truth, label) = match obs {
        // With weight 1 the mixture value reduces to ½ Σ_t ĝ(prefix·t)².
        FunctionalObservable::Prefix(p) => (prefix_weight_truth(d, p)?, p.to_string()),
        FunctionalObservable::Diagonal { name, g } => (sq_truth(d, *g)?, format!("diag[{name}]")),
        FunctionalObservable::Character(s) => {
            if s.n() != d.n() {
                return Err(OracleError::UnsupportedObservable(format!("character of dimension {}", s.n())));
            }
            (d.coefficient(s), format!("chi[{s}]"))
        }
    };
    answer_qsq(truth, label, tau, policy, rng, ledger)
}

//! Estimators built on the oracles: DKW empirical distributions, two-phase
//! spectrum approximation, Hoeffding coefficient estimates, Goldreich-Levin
//! from prefix QSQs, and noise-rate estimation.

use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::distribution::{draw_sample, DistError, LabeledDistribution, Origin};
use crate::fourier::{chi, BitString, FourierError, SparseSpectrum};
use crate::oracles::{
    functional_qsq, multinomial, qsq_prefix_weight, FourierSampler, FunctionalObservable, OracleError, OracleLedger,
    PrefixObservable, SampleCounts, SamplerVariant, SqPolicy,
};

/// Constant `c` in the DKW sample size `m = ⌈c·ln(2/δ)/τ²⌉`.
pub const DKW_CONSTANT: f64 = 2.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EstimationError {
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error("no samples given")]
    EmptySample,
    #[error("samples of mixed dimension")]
    MixedDimension,
    #[error("parameter {name}={value} outside {range}")]
    Parameter { name: &'static str, value: f64, range: &'static str },
    #[error("accuracy {eps} is not above the mixture floor 2^-(n/2-2) = {floor} for n={n}")]
    BelowMixtureFloor { eps: f64, floor: f64, n: usize },
}

pub type Result<T> = std::result::Result<T, EstimationError>;

pub(crate) fn check_unit(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(EstimationError::Parameter { name, value, range: "(0, 1)" })
    }
}

fn check_resolution(eps: f64) -> Result<()> {
    if eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(EstimationError::Parameter { name: "eps", value: eps, range: "(0, 1]" })
    }
}

/// `⌈2 ln(2/δ)/τ²⌉`.
pub fn dkw_sample_size(tau: f64, delta: f64) -> u64 {
    (DKW_CONSTANT * (2.0 / delta).ln() / (tau * tau)).ceil() as u64
}

/// `⌈ln(2/δ)/(2·acc²)⌉`: examples for one `acc`-accurate mean of `[0,1]` terms.
pub fn hoeffding_sample_size(accuracy: f64, delta: f64) -> u64 {
    ((2.0 / delta).ln() / (2.0 * accuracy * accuracy)).ceil() as u64
}

/// `⌈2 ln(2/δ)/acc²⌉`: the same for ±1 terms such as `χ_s(x)(1−2y)`.
pub fn coefficient_sample_size(accuracy: f64, delta: f64) -> u64 {
    hoeffding_sample_size(accuracy / 2.0, delta)
}

/// `2^{-(n/2-2)}`: accuracies at or below this are out of reach for mixture
/// examples, whose sampling law carries a uniform floor.
pub fn mixture_floor(n: usize) -> f64 {
    2f64.powf(-(n as f64 / 2.0 - 2.0))
}

/// Empirical distribution over strings, stored sparsely in string order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EmpiricalDistribution {
    pub support: Vec<(BitString, f64)>,
    pub m: u64,
    /// False when `m` is below the DKW size for the requested `(τ, δ)`.
    pub sufficient: bool,
}

impl EmpiricalDistribution {
    pub fn mass(&self, s: &BitString) -> f64 {
        self.support.binary_search_by(|(t, _)| t.cmp(s)).map(|i| self.support[i].1).unwrap_or(0.0)
    }

    /// Builds the estimate from sorted distinct outcomes and their counts via
    /// the empirical CDF and its successive differences.
    fn from_sorted_counts(counts: Vec<(BitString, u64)>, m: u64, sufficient: bool) -> Self {
        let mut cumulative = 0u64;
        let mut previous_cdf = 0.0;
        let support = counts
            .into_iter()
            .map(|(s, c)| {
                cumulative += c;
                let cdf = cumulative as f64 / m as f64;
                let mass = cdf - previous_cdf;
                previous_cdf = cdf;
                (s, mass)
            })
            .collect();
        Self { support, m, sufficient }
    }

    /// Largest deviation from an exact dense law over the same domain.
    pub fn linf_error(&self, law: &[f64]) -> f64 {
        let mut err: f64 = 0.0;
        let mut idx = 0;
        for (value, &p) in law.iter().enumerate() {
            let q = match self.support.get(idx) {
                Some((s, q)) if s.index() == value => {
                    idx += 1;
                    *q
                }
                _ => 0.0,
            };
            err = f64::max(err, (p - q).abs());
        }
        err
    }
}

/// DKW estimate from raw samples; the result depends only on the multiset.
pub fn dkw_estimate(samples: &[BitString], tau: f64, delta: f64) -> Result<EmpiricalDistribution> {
    let first = samples.first().ok_or(EstimationError::EmptySample)?;
    if samples.iter().any(|s| s.n() != first.n()) {
        return Err(EstimationError::MixedDimension);
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let mut counts: Vec<(BitString, u64)> = Vec::new();
    for s in sorted {
        match counts.last_mut() {
            Some((t, c)) if *t == s => *c += 1,
            _ => counts.push((s, 1)),
        }
    }
    let m = samples.len() as u64;
    Ok(EmpiricalDistribution::from_sorted_counts(counts, m, m >= dkw_sample_size(tau, delta)))
}

/// DKW estimate from outcome counts indexed by string value.
pub fn dkw_from_counts(n_bits: usize, counts: &[u64], tau: f64, delta: f64) -> Result<EmpiricalDistribution> {
    let m: u64 = counts.iter().sum();
    if m == 0 {
        return Err(EstimationError::EmptySample);
    }
    let sorted = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(v, &c)| (BitString::new_unchecked(n_bits, v), c))
        .collect();
    Ok(EmpiricalDistribution::from_sorted_counts(sorted, m, m >= dkw_sample_size(tau, delta)))
}

/// Counts of the joint outcome `(s, b)` as strings over `n + 1` bits, with
/// `b` as the last coordinate and every failure folded into `(0^n, 0)`.
pub fn joint_counts(n: usize, counts: &SampleCounts) -> Vec<u64> {
    let mut joint = vec![0u64; 2usize << n];
    joint[0] = counts.failures;
    let offset = 1usize << n;
    for (s, &c) in counts.successes.iter().enumerate() {
        joint[s | offset] = c;
    }
    joint
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisyKind {
    Mixed,
    Pure,
}

/// Quantum data behind a spectrum approximation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "source")]
pub enum SpectrumSource {
    Functional,
    Noisy { kind: NoisyKind, eta: f64 },
    Mixture,
}

impl SpectrumSource {
    pub fn variant(&self) -> SamplerVariant {
        match *self {
            SpectrumSource::Functional => SamplerVariant::Functional,
            SpectrumSource::Noisy { kind: NoisyKind::Mixed, eta } => SamplerVariant::NoisyMixed { eta },
            SpectrumSource::Noisy { kind: NoisyKind::Pure, eta } => SamplerVariant::NoisyPure { eta },
            SpectrumSource::Mixture => SamplerVariant::Mixture,
        }
    }

    /// The natural source for a distribution's origin.
    pub fn for_distribution(d: &LabeledDistribution) -> Self {
        match d.origin() {
            Origin::Function { .. } => SpectrumSource::Functional,
            Origin::Noisy { eta, .. } => SpectrumSource::Noisy { kind: NoisyKind::Mixed, eta: *eta },
            Origin::General => SpectrumSource::Mixture,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpectrumEstimate {
    /// Clipped coefficient estimates on the candidate list.
    pub spectrum: SparseSpectrum,
    pub candidates: Vec<BitString>,
    pub quantum_attempts: u64,
    pub classical_examples: u64,
}

/// Sampling plan of the quantum phase for a given success probability `p`:
/// DKW accuracy `p·ε²/4` on the joint law and keep threshold `p·ε²/2`
/// (`ε²/8` and `ε²/4` for the usual `p = ½`).
fn candidate_plan(success: f64, eps: f64) -> (f64, f64) {
    (success * eps * eps / 4.0, success * eps * eps / 2.0)
}

/// Number of quantum copies the first phase consumes.
pub fn spectrum_copy_count(success: f64, eps: f64, delta: f64) -> u64 {
    dkw_sample_size(candidate_plan(success, eps).0, delta / 2.0)
}

/// Approximates `ϕ̂` to ∞-accuracy `eps` with a short candidate list.
///
/// Phase one Fourier-samples and keeps strings whose empirical joint mass
/// clears the threshold; phase two estimates each candidate's coefficient from
/// classical examples (a shared sample, union bound over the list).
pub fn approximate_spectrum<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    source: SpectrumSource,
    eps: f64,
    delta: f64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<SpectrumEstimate> {
    check_unit("eps", eps)?;
    check_unit("delta", delta)?;
    if source == SpectrumSource::Mixture && eps <= mixture_floor(d.n()) {
        return Err(EstimationError::BelowMixtureFloor { eps, floor: mixture_floor(d.n()), n: d.n() });
    }
    let sampler = FourierSampler::new(d, source.variant())?;
    let success = sampler.law().success;
    let (tau, keep) = candidate_plan(success, eps);
    let attempts = dkw_sample_size(tau, delta / 2.0);
    let counts = sampler.sample_counts(attempts, rng, ledger);
    let n = d.n();
    let empirical = dkw_from_counts(n + 1, &joint_counts(n, &counts), tau, delta / 2.0)?;
    let offset = 1u64 << n;
    let candidates: Vec<BitString> = empirical
        .support
        .iter()
        .filter(|(s, q)| s.value() & offset != 0 && *q >= keep)
        .map(|(s, _)| BitString::new_unchecked(n, (s.value() & !offset) as usize))
        .collect();

    let mut spectrum = SparseSpectrum::empty(n)?;
    let mut classical = 0;
    if !candidates.is_empty() {
        let per = delta / (2.0 * candidates.len() as f64);
        let m = coefficient_sample_size(eps, per);
        let estimates = estimate_coefficients(d, &candidates, m, rng, ledger);
        classical = m;
        for (s, v) in candidates.iter().zip(estimates) {
            spectrum.insert(*s, v)?;
        }
    }
    Ok(SpectrumEstimate { spectrum, candidates, quantum_attempts: attempts, classical_examples: classical })
}

/// Clipped empirical means of `χ_s(x)(1−2y)` for every `s`, from one shared
/// sample of size `m`.
pub fn estimate_coefficients<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    strings: &[BitString],
    m: u64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Vec<f64> {
    let n = d.n();
    let mut sums = vec![0.0; strings.len()];
    if m > 4u64 << n {
        // Many more draws than outcomes: draw the joint counts directly.
        let cube = 1usize << n;
        let p1 = |x: usize| d.label_one_probability(x);
        let probs: Vec<f64> =
            (0..cube).map(|x| 1.0 - p1(x)).chain((0..cube).map(p1)).map(|p| p / cube as f64).collect();
        let counts = multinomial(m, &probs, rng);
        for x in 0..cube {
            let signed = counts[x] as f64 - counts[x + cube] as f64;
            for (sum, s) in sums.iter_mut().zip(strings) {
                *sum += chi(s.index(), x) * signed;
            }
        }
    } else {
        for _ in 0..m {
            let z = draw_sample(d, rng);
            let label = z.signed_label();
            for (sum, s) in sums.iter_mut().zip(strings) {
                *sum += chi(s.index(), z.x.index()) * label;
            }
        }
    }
    ledger.add_examples(m);
    sums.into_iter().map(|v| (v / m as f64).clamp(-1.0, 1.0)).collect()
}

/// Hoeffding estimate of one coefficient.
pub fn estimate_coefficient<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    s: &BitString,
    accuracy: f64,
    delta: f64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<f64> {
    check_unit("accuracy", accuracy)?;
    check_unit("delta", delta)?;
    if s.n() != d.n() {
        return Err(FourierError::DimensionMismatch { left: s.n(), right: d.n() }.into());
    }
    let m = coefficient_sample_size(accuracy, delta);
    Ok(estimate_coefficients(d, std::slice::from_ref(s), m, rng, ledger)[0])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GlScope {
    Functional,
    Distributional,
}

/// One explored prefix.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlNode {
    pub prefix: PrefixObservable,
    /// Doubled QSQ response, comparable with the prefix's Fourier weight.
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GlOutput {
    pub list: Vec<BitString>,
    pub explored: Vec<GlNode>,
    pub start_level: usize,
}

/// Starting level of the search: `⌈log₂(16/ε²)⌉` (capped at `n`) for the
/// distributional case, where shallower prefixes carry too much of the
/// uniform floor; zero for functional inputs.
pub fn gl_start_level(n: usize, eps: f64, scope: GlScope) -> usize {
    match scope {
        GlScope::Functional => 0,
        GlScope::Distributional => ((16.0 / (eps * eps)).log2().ceil().max(0.0) as usize).min(n),
    }
}

/// QSQ tolerance used by the search. Doubling the response keeps the error
/// below `ε²/8`.
pub fn gl_tolerance(eps: f64) -> f64 {
    eps * eps / 16.0
}

/// A prefix survives when its doubled response reaches `ε²/2`.
pub fn gl_keep_threshold(eps: f64) -> f64 {
    eps * eps / 2.0
}

/// Branch-and-prune search for every `s` with `|ϕ̂(s)| ≥ ε`; everything
/// returned satisfies `|ϕ̂(s)| ≥ ε/2` when responses are within tolerance.
pub fn goldreich_levin_qsq<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    eps: f64,
    scope: GlScope,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<GlOutput> {
    check_resolution(eps)?;
    let n = d.n();
    let tau = gl_tolerance(eps);
    let keep = gl_keep_threshold(eps);
    let cap = (32.0 / (eps * eps)).floor() as usize;
    let start = gl_start_level(n, eps, scope);

    let mut explored = Vec::new();
    let query = |p: PrefixObservable, rng: &mut R, ledger: &mut OracleLedger| -> Result<f64> {
        let half = match scope {
            GlScope::Distributional => qsq_prefix_weight(d, &p, tau, policy, rng, ledger)?,
            GlScope::Functional => functional_qsq(d, &FunctionalObservable::Prefix(p), tau, policy, rng, ledger)?,
        };
        Ok(2.0 * half)
    };

    let mut frontier: Vec<PrefixObservable> = (0..1u64 << start).map(|b| PrefixObservable::new(start, b)).collect();
    let mut level = start;
    loop {
        let mut kept = Vec::new();
        for p in frontier {
            let weight = query(p, rng, ledger)?;
            explored.push(GlNode { prefix: p, weight });
            if weight >= keep {
                kept.push(GlNode { prefix: p, weight });
            }
        }
        if kept.len() > cap {
            kept.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.prefix.cmp(&b.prefix)));
            kept.truncate(cap);
        }
        if level == n {
            let mut list: Vec<BitString> =
                kept.iter().map(|node| BitString::new_unchecked(n, node.prefix.bits() as usize)).collect();
            list.sort_unstable();
            return Ok(GlOutput { list, explored, start_level: start });
        }
        frontier = kept.iter().flat_map(|node| [node.prefix.extend(false), node.prefix.extend(true)]).collect();
        level += 1;
    }
}

/// `ξ = √((1−η)η)`, the excess failure probability of pure noisy sampling.
pub fn noise_excess(eta: f64) -> f64 {
    ((1.0 - eta) * eta).sqrt()
}

/// Inverse of [`noise_excess`] on `[0, ½)`.
pub fn noise_from_excess(xi: f64) -> f64 {
    0.5 * (1.0 - (1.0 - 4.0 * xi * xi).max(0.0).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct NoiseEstimate {
    pub eta: f64,
    pub excess: f64,
    pub attempts: u64,
}

/// Estimates the noise rate from the failure frequency of pure noisy Fourier
/// sampling, given the promise `η ≤ eta_bound`.
pub fn estimate_noise_rate<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    eta_bound: f64,
    accuracy: f64,
    delta: f64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<NoiseEstimate> {
    if !(0.0..0.5).contains(&eta_bound) {
        return Err(EstimationError::Parameter { name: "eta_bound", value: eta_bound, range: "[0, 1/2)" });
    }
    check_unit("accuracy", accuracy)?;
    check_unit("delta", delta)?;
    let eta = d.noise_rate().ok_or(OracleError::VariantMismatch("distribution has no label-noise model".into()))?;
    if eta_bound == 0.0 {
        return Ok(NoiseEstimate { eta: 0.0, excess: 0.0, attempts: 0 });
    }
    let xi_bound = noise_excess(eta_bound);
    let lipschitz_inverse = (1.0 - 4.0 * xi_bound * xi_bound).sqrt() / (2.0 * xi_bound);
    let xi_accuracy = accuracy * lipschitz_inverse;
    let attempts = hoeffding_sample_size(xi_accuracy, delta);
    let sampler = FourierSampler::new(d, SamplerVariant::NoisyPure { eta })?;
    let counts = sampler.sample_counts(attempts, rng, ledger);
    let failure_rate = counts.failures as f64 / attempts as f64;
    let excess = (failure_rate - 0.5).clamp(0.0, xi_bound);
    let eta_hat = noise_from_excess(excess).clamp(0.0, eta_bound);
    Ok(NoiseEstimate { eta: eta_hat, excess, attempts })
}

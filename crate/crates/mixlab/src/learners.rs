//! Agnostic learners assembled from the spectrum estimators.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::distribution::{
    exact_risk_boolean, exact_risk_parity, exact_risk_randomized, l2_error, randomized_label_one, DistError,
    LabeledDistribution, Sample,
};
use crate::estimation::{
    approximate_spectrum, goldreich_levin_qsq, EstimationError, GlScope, SpectrumEstimate, SpectrumSource,
};
use crate::fourier::{self, top_k, BitString, DenseTable, FourierError, SparseSpectrum};
use crate::oracles::{
    character_sq, example_oracle, functional_qsq, FunctionalObservable, OracleError, OracleLedger, SqPolicy,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LearnError {
    #[error(transparent)]
    Estimation(#[from] EstimationError),
    #[error(transparent)]
    Dist(#[from] DistError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error("a rejection carries no hypothesis to evaluate")]
    NothingToEvaluate,
    #[error("sparsity k must be at least 1")]
    ZeroSparsity,
}

pub type Result<T> = std::result::Result<T, LearnError>;

/// Learner output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "form", rename_all = "snake_case")]
pub enum Hypothesis {
    Parity {
        s: BitString,
    },
    /// Labels `x` with 1 with probability `(1−g)²/(2(1+g²))`.
    RandomizedSparse {
        g: SparseSpectrum,
    },
    /// Labels `x` with 1 iff `g(x) ≤ 0`.
    ThresholdedSparse {
        g: SparseSpectrum,
    },
    /// Real-valued predictor of `(−1)^y`.
    RealSparse {
        g: SparseSpectrum,
    },
    BooleanTable {
        table: DenseTable,
    },
    Reject,
}

impl Hypothesis {
    /// One label for `x`; only the randomized form consumes randomness.
    pub fn predict<R: Rng + ?Sized>(&self, x: &BitString, rng: &mut R) -> Option<u8> {
        match self {
            Hypothesis::Parity { s } => Some(u8::from(s.dot(x).ok()?)),
            Hypothesis::RandomizedSparse { g } => {
                Some(u8::from(rng.random::<f64>() < randomized_label_one(g.evaluate_at(x.index()))))
            }
            Hypothesis::ThresholdedSparse { g } => Some(u8::from(g.evaluate_at(x.index()) <= 0.0)),
            Hypothesis::RealSparse { g } => Some(u8::from(g.evaluate_at(x.index()) <= 0.0)),
            Hypothesis::BooleanTable { table } => Some(table.values()[x.index()] as u8),
            Hypothesis::Reject => None,
        }
    }

    pub fn is_reject(&self) -> bool {
        matches!(self, Hypothesis::Reject)
    }
}

/// Table of `1{g(x) ≤ 0}`.
pub fn threshold_table(g: &SparseSpectrum) -> DenseTable {
    let values = g.evaluate();
    DenseTable::from_fn(values.n(), |x| if values.values()[x] <= 0.0 { 1.0 } else { 0.0 })
        .expect("dimension already valid")
}

/// Exact risk of a hypothesis; the L2 error for real-valued predictors.
pub fn evaluate(h: &Hypothesis, d: &LabeledDistribution) -> Result<f64> {
    let check = |n: usize| -> Result<()> {
        if n == d.n() {
            Ok(())
        } else {
            Err(FourierError::DimensionMismatch { left: n, right: d.n() }.into())
        }
    };
    match h {
        Hypothesis::Parity { s } => Ok(exact_risk_parity(d, s)?),
        Hypothesis::RandomizedSparse { g } => {
            check(g.n())?;
            Ok(exact_risk_randomized(d, &g.evaluate())?)
        }
        Hypothesis::ThresholdedSparse { g } => {
            check(g.n())?;
            Ok(exact_risk_boolean(d, &threshold_table(g))?)
        }
        Hypothesis::RealSparse { g } => {
            check(g.n())?;
            Ok(l2_error(d, g))
        }
        Hypothesis::BooleanTable { table } => Ok(exact_risk_boolean(d, table)?),
        Hypothesis::Reject => Err(LearnError::NothingToEvaluate),
    }
}

/// Argmax of the signed estimates; strings absent from `estimates` count as
/// zero, so a non-positive maximum falls back to the smallest unlisted string.
pub fn heaviest_signed(estimates: &SparseSpectrum) -> BitString {
    let best = estimates.iter().max_by(|a, b| a.1.total_cmp(&b.1).then(b.0.cmp(&a.0)));
    match best {
        Some((s, c)) if c > 0.0 => s,
        _ => {
            let n = estimates.n();
            let unlisted = (0..1usize << n).map(|v| BitString::new_unchecked(n, v)).find(|s| !estimates.contains(s));
            match (unlisted, best) {
                (Some(s), _) => s,
                (None, Some((s, _))) => s,
                (None, None) => unreachable!("an empty spectrum leaves every string unlisted"),
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LearnOutcome {
    pub hypothesis: Hypothesis,
    pub estimate: SpectrumEstimate,
}

/// Proper parity learner: spectrum at accuracy `ε/2`, then the signed argmax.
pub fn learn_parity<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    source: SpectrumSource,
    eps: f64,
    delta: f64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<LearnOutcome> {
    let estimate = approximate_spectrum(d, source, eps / 2.0, delta, rng, ledger)?;
    let s = heaviest_signed(&estimate.spectrum);
    Ok(LearnOutcome { hypothesis: Hypothesis::Parity { s }, estimate })
}

/// Multiplier `c` in the copy bound `c·ln(1/(δε²))/ε⁴` of [`learn_parity`]
/// with a success probability ½ sampler (valid for `ε ≤ ½`).
pub const PARITY_COPY_CONSTANT: f64 = 2048.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SparseVariant {
    Randomized,
    Thresholded,
    L2,
}

impl SparseVariant {
    /// Spectrum accuracy that makes the top-`k` strings `ε/(2k)`-heavy
    /// (randomized, L2) or `ε/(3k)`-heavy (thresholded) after the factor-2 loss
    /// of sorting perturbed magnitudes.
    pub fn accuracy(&self, eps: f64, k: usize) -> f64 {
        match self {
            SparseVariant::Randomized | SparseVariant::L2 => eps / (4.0 * k as f64),
            SparseVariant::Thresholded => eps / (6.0 * k as f64),
        }
    }

    pub fn build(&self, g: SparseSpectrum) -> Hypothesis {
        match self {
            SparseVariant::Randomized => Hypothesis::RandomizedSparse { g },
            SparseVariant::Thresholded => Hypothesis::ThresholdedSparse { g },
            SparseVariant::L2 => Hypothesis::RealSparse { g },
        }
    }
}

/// `Σ_ℓ c_ℓ χ_{s_ℓ}` over the `k` largest estimates (zero padding included).
pub fn top_k_spectrum(estimates: &SparseSpectrum, k: usize) -> SparseSpectrum {
    SparseSpectrum::from_pairs(estimates.n(), top_k(estimates, k)).expect("entries share the dimension")
}

pub fn learn_fourier_sparse<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    source: SpectrumSource,
    k: usize,
    eps: f64,
    delta: f64,
    variant: SparseVariant,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<LearnOutcome> {
    if k == 0 {
        return Err(LearnError::ZeroSparsity);
    }
    let estimate = approximate_spectrum(d, source, variant.accuracy(eps, k), delta, rng, ledger)?;
    let g = top_k_spectrum(&estimate.spectrum, k);
    Ok(LearnOutcome { hypothesis: variant.build(g), estimate })
}

/// Exact recovery of a Boolean function whose ±1 form is `k`-sparse:
/// accuracy `1/(2k)` makes the estimate within ½ of `g` everywhere, so its
/// sign is `g`.
pub fn learn_exact_sparse<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    k: usize,
    delta: f64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<LearnOutcome> {
    if k == 0 {
        return Err(LearnError::ZeroSparsity);
    }
    let eps = 1.0 / (2.0 * k as f64);
    let eps = if eps >= 1.0 { 0.5 } else { eps };
    let estimate = approximate_spectrum(d, SpectrumSource::Functional, eps, delta, rng, ledger)?;
    let table = threshold_table(&estimate.spectrum);
    Ok(LearnOutcome { hypothesis: Hypothesis::BooleanTable { table }, estimate })
}

/// Parity learner from QSQs: prefix search at `ε`, diagonal estimates at
/// tolerance `ε`, then the signed argmax.
pub fn learn_parity_qsq<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    eps: f64,
    scope: GlScope,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<Hypothesis> {
    let estimates = qsq_estimates(d, eps, eps, scope, policy, rng, ledger)?;
    Ok(Hypothesis::Parity { s: heaviest_signed(&estimates) })
}

/// Sparse learner from QSQs, with search and estimation at the variant's
/// spectrum accuracy.
pub fn learn_fourier_sparse_qsq<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    k: usize,
    eps: f64,
    variant: SparseVariant,
    scope: GlScope,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<Hypothesis> {
    if k == 0 {
        return Err(LearnError::ZeroSparsity);
    }
    let acc = variant.accuracy(eps, k);
    let estimates = qsq_estimates(d, acc, acc, scope, policy, rng, ledger)?;
    Ok(variant.build(top_k_spectrum(&estimates, k)))
}

fn qsq_estimates<R: Rng + ?Sized>(
    d: &LabeledDistribution,
    search_eps: f64,
    tau: f64,
    scope: GlScope,
    policy: &SqPolicy,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> Result<SparseSpectrum> {
    let list = goldreich_levin_qsq(d, search_eps, scope, policy, rng, ledger)?.list;
    let mut estimates = SparseSpectrum::empty(d.n())?;
    for s in list {
        let v = match scope {
            GlScope::Functional => functional_qsq(d, &FunctionalObservable::Character(s), tau, policy, rng, ledger)?,
            GlScope::Distributional => character_sq(d, &s, tau, policy, rng, ledger)?,
        };
        estimates.insert(s, v.clamp(-1.0, 1.0))?;
    }
    Ok(estimates)
}

/// A learner that only ever sees consistent (functional) labelled samples.
pub trait FunctionalLearner {
    fn learn(&self, n: usize, samples: &[Sample]) -> Hypothesis;
}

/// Empirical risk minimisation over all parities, using one fast transform of
/// the empirical label table.
#[derive(Debug, Clone, Copy, Default)]
pub struct ErmParityLearner;

impl ErmParityLearner {
    /// Uniform-convergence size: every parity's empirical risk within `ε/2`.
    pub fn sample_size(n: usize, eps: f64, delta: f64) -> u64 {
        (2.0 * (n as f64 * std::f64::consts::LN_2 + (2.0 / delta).ln()) / (eps * eps)).ceil() as u64
    }
}

impl FunctionalLearner for ErmParityLearner {
    fn learn(&self, n: usize, samples: &[Sample]) -> Hypothesis {
        let mut table = vec![0.0; 1 << n];
        for z in samples {
            table[z.x.index()] += z.signed_label();
        }
        let correlations = fourier::transform(&DenseTable::new(n, table).expect("dimension already valid"));
        let (best, _) = correlations
            .values()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
            .expect("non-empty cube");
        Hypothesis::Parity { s: BitString::new_unchecked(n, best) }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ReductionOutcome {
    /// A repeated input was drawn.
    Collision,
    Learned(Hypothesis),
}

/// Runs a functional learner on distributional data, aborting on any
/// repeated input (without repeats the sample is distributed as one from a
/// random function drawn pointwise from the label law).
pub fn reduce_distributional_to_functional<R: Rng + ?Sized>(
    learner: &dyn FunctionalLearner,
    d: &LabeledDistribution,
    m: u64,
    rng: &mut R,
    ledger: &mut OracleLedger,
) -> ReductionOutcome {
    let samples: Vec<Sample> = (0..m).map(|_| example_oracle(d, rng, ledger)).collect();
    let mut xs: Vec<u64> = samples.iter().map(|z| z.x.value()).collect();
    xs.sort_unstable();
    if xs.windows(2).any(|w| w[0] == w[1]) {
        return ReductionOutcome::Collision;
    }
    ReductionOutcome::Learned(learner.learn(d.n(), &samples))
}

//! Distributions over `{0,1}^n × {0,1}` with uniform inputs, described by the
//! label expectation `ϕ(x) = 1 − 2·E[y | x] ∈ [−1, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fourier::{self, chi, BitString, DenseTable, FourierError, SparseSpectrum, ZERO_TOL};

/// Slack on the weight window of a promise class.
pub const PROMISE_SLACK: f64 = 1e-10;

/// Largest dimension for exhaustive enumeration over Boolean functions.
pub const MAX_ENUMERATION_N: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error(transparent)]
    Fourier(#[from] FourierError),
    #[error("entry at {x} is {value}, expected 0 or 1")]
    NonBinary { x: BitString, value: f64 },
    #[error("noise rate {0} outside [0, 1/2)")]
    EtaOutOfRange(f64),
    #[error("label expectation at {x} is {value}, outside [-1, 1]")]
    InvalidPhi { x: BitString, value: f64 },
    #[error("mixing weight {0} outside [0, 1]")]
    GammaOutOfRange(f64),
    #[error("exhaustive enumeration needs n <= {max}, got {n}")]
    UnsupportedScale { n: usize, max: usize },
}

pub type Result<T> = std::result::Result<T, DistError>;

/// How a distribution was built. Noisy samplers need the clean function.
#[derive(Debug, Clone, PartialEq)]
pub enum Origin {
    Function { f: Vec<bool> },
    Noisy { f: Vec<bool>, eta: f64 },
    General,
}

/// `D = (U_n, ϕ)` with its spectrum cached.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDistribution {
    phi: DenseTable,
    coefficients: DenseTable,
    spectrum: SparseSpectrum,
    weight: f64,
    origin: Origin,
}

/// One classical example.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sample {
    pub x: BitString,
    pub y: u8,
}

impl Sample {
    /// `1 − 2y` as ±1.
    pub fn signed_label(&self) -> f64 {
        1.0 - 2.0 * self.y as f64
    }
}

fn binary_entries(f: &DenseTable) -> Result<Vec<bool>> {
    f.values()
        .iter()
        .enumerate()
        .map(|(x, &v)| {
            if v == 0.0 {
                Ok(false)
            } else if v == 1.0 {
                Ok(true)
            } else {
                Err(DistError::NonBinary { x: BitString::new_unchecked(f.n(), x), value: v })
            }
        })
        .collect()
}

fn check_eta(eta: f64) -> Result<()> {
    if (0.0..0.5).contains(&eta) {
        Ok(())
    } else {
        Err(DistError::EtaOutOfRange(eta))
    }
}

impl LabeledDistribution {
    fn build(phi: DenseTable, origin: Origin) -> Result<Self> {
        if let Some((x, &value)) = phi
            .values()
            .iter()
            .enumerate()
            .filter(|(_, v)| v.abs() > 1.0 + 1e-12)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        {
            return Err(DistError::InvalidPhi { x: BitString::new_unchecked(phi.n(), x), value });
        }
        let coefficients = fourier::transform(&phi);
        let spectrum = SparseSpectrum::from_dense(&coefficients);
        let weight = phi.mean_square();
        Ok(Self { phi, coefficients, spectrum, weight, origin })
    }

    /// Deterministic labels `y = f(x)`.
    pub fn from_function(f: &DenseTable) -> Result<Self> {
        let bits = binary_entries(f)?;
        let phi = DenseTable::from_fn(f.n(), |x| if bits[x] { -1.0 } else { 1.0 })?;
        Self::build(phi, Origin::Function { f: bits })
    }

    /// Labels `f(x)` flipped independently with probability `eta`.
    pub fn from_noisy_function(f: &DenseTable, eta: f64) -> Result<Self> {
        check_eta(eta)?;
        let bits = binary_entries(f)?;
        let scale = 1.0 - 2.0 * eta;
        let phi = DenseTable::from_fn(f.n(), |x| if bits[x] { -scale } else { scale })?;
        Self::build(phi, Origin::Noisy { f: bits, eta })
    }

    pub fn from_spectrum(spec: &SparseSpectrum) -> Result<Self> {
        Self::build(spec.evaluate(), Origin::General)
    }

    pub fn from_phi(phi: DenseTable) -> Result<Self> {
        Self::build(phi, Origin::General)
    }

    /// The parity `y = s·x`, optionally noisy.
    pub fn parity(s: &BitString, eta: f64) -> Result<Self> {
        let f = DenseTable::from_fn(s.n(), |x| if chi(s.index(), x) < 0.0 { 1.0 } else { 0.0 })?;
        if eta == 0.0 {
            Self::from_function(&f)
        } else {
            Self::from_noisy_function(&f, eta)
        }
    }

    /// The uniform distribution on `{0,1}^{n+1}` (`ϕ ≡ 0`).
    pub fn uniform(n: usize) -> Result<Self> {
        Self::from_phi(DenseTable::constant(n, 0.0)?)
    }

    pub fn n(&self) -> usize {
        self.phi.n()
    }

    pub fn phi(&self) -> &DenseTable {
        &self.phi
    }

    /// Dense coefficient table `ϕ̂`.
    pub fn coefficients(&self) -> &DenseTable {
        &self.coefficients
    }

    pub fn coefficient(&self, s: &BitString) -> f64 {
        self.coefficients.get(s)
    }

    pub fn spectrum(&self) -> &SparseSpectrum {
        &self.spectrum
    }

    /// `E_x[ϕ(x)²]`.
    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn origin(&self) -> &Origin {
        &self.origin
    }

    pub fn is_functional(&self) -> bool {
        self.phi.values().iter().all(|v| (v.abs() - 1.0).abs() <= 1e-12)
    }

    /// The clean ±1 function behind a functional or noisy distribution.
    pub fn clean_sign(&self) -> Option<DenseTable> {
        match &self.origin {
            Origin::Function { f } | Origin::Noisy { f, .. } => Some(
                DenseTable::from_fn(self.n(), |x| if f[x] { -1.0 } else { 1.0 }).expect("dimension already checked"),
            ),
            Origin::General => None,
        }
    }

    pub fn noise_rate(&self) -> Option<f64> {
        match self.origin {
            Origin::Function { .. } => Some(0.0),
            Origin::Noisy { eta, .. } => Some(eta),
            Origin::General => None,
        }
    }

    /// `D(x, y)` for one point of the joint domain.
    pub fn probability(&self, x: usize, y: u8) -> f64 {
        let p_one = (1.0 - self.phi.values()[x]) / 2.0;
        let p = if y == 1 { p_one } else { 1.0 - p_one };
        p / self.phi.len() as f64
    }

    /// `P[y = 1 | x]`.
    pub fn label_one_probability(&self, x: usize) -> f64 {
        (1.0 - self.phi.values()[x]) / 2.0
    }
}

pub fn draw_sample<R: Rng + ?Sized>(d: &LabeledDistribution, rng: &mut R) -> Sample {
    let x = rng.random_range(0..1usize << d.n());
    let y = u8::from(rng.random::<f64>() < d.label_one_probability(x));
    Sample { x: BitString::new_unchecked(d.n(), x), y }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PromiseKind {
    Functional,
    Noisy { eta: f64 },
    General,
}

/// Distributions whose non-zero coefficients have magnitude at least `theta`
/// and whose Fourier weight lies in `[a2, b2]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PromiseClass {
    pub theta: f64,
    pub a2: f64,
    pub b2: f64,
    pub kind: PromiseKind,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum PromiseViolation {
    SmallCoefficient { witness: BitString, value: f64 },
    WeightOutsideWindow { weight: f64 },
    NotFunctional,
    NoiseMismatch { expected: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PromiseReport {
    pub holds: bool,
    pub violation: Option<PromiseViolation>,
}

pub fn check_promise(d: &LabeledDistribution, p: &PromiseClass) -> PromiseReport {
    let fail = |v| PromiseReport { holds: false, violation: Some(v) };
    if let Some((witness, value)) = d.spectrum().iter().find(|(_, c)| c.abs() > ZERO_TOL && c.abs() < p.theta) {
        return fail(PromiseViolation::SmallCoefficient { witness, value });
    }
    if d.weight() < p.a2 - PROMISE_SLACK || d.weight() > p.b2 + PROMISE_SLACK {
        return fail(PromiseViolation::WeightOutsideWindow { weight: d.weight() });
    }
    match p.kind {
        PromiseKind::Functional if !d.is_functional() => return fail(PromiseViolation::NotFunctional),
        PromiseKind::Noisy { eta } => {
            let level = 1.0 - 2.0 * eta;
            if d.phi().values().iter().any(|v| (v.abs() - level).abs() > 1e-12) {
                return fail(PromiseViolation::NoiseMismatch { expected: eta });
            }
        }
        _ => {}
    }
    PromiseReport { holds: true, violation: None }
}

/// `P[y ≠ s·x] = (1 − ϕ̂(s))/2`.
pub fn exact_risk_parity(d: &LabeledDistribution, s: &BitString) -> Result<f64> {
    if s.n() != d.n() {
        return Err(FourierError::DimensionMismatch { left: s.n(), right: d.n() }.into());
    }
    Ok((1.0 - d.coefficient(s)) / 2.0)
}

/// Risk of a Boolean hypothesis: `(1 − ⟨ϕ, 1 − 2h⟩)/2`.
pub fn exact_risk_boolean(d: &LabeledDistribution, h: &DenseTable) -> Result<f64> {
    let bits = binary_entries(h)?;
    if h.n() != d.n() {
        return Err(FourierError::DimensionMismatch { left: h.n(), right: d.n() }.into());
    }
    let corr: f64 = d.phi().values().iter().zip(&bits).map(|(p, &b)| if b { -p } else { *p }).sum();
    Ok((1.0 - corr / h.len() as f64) / 2.0)
}

/// `P[h(x) = 1]` for the randomized hypothesis built from a real `g`.
pub fn randomized_label_one(g: f64) -> f64 {
    (1.0 - g).powi(2) / (2.0 * (1.0 + g * g))
}

/// Risk of the randomized hypothesis of `g`, by exhaustive enumeration.
pub fn exact_risk_randomized(d: &LabeledDistribution, g: &DenseTable) -> Result<f64> {
    if g.n() != d.n() {
        return Err(FourierError::DimensionMismatch { left: g.n(), right: d.n() }.into());
    }
    let total: f64 = g
        .values()
        .iter()
        .zip(d.phi().values())
        .map(|(&gx, &phi)| {
            let denom = 2.0 * (1.0 + gx * gx);
            let p0 = (1.0 + phi) / 2.0;
            p0 * (1.0 - gx).powi(2) / denom + (1.0 - p0) * (-1.0 - gx).powi(2) / denom
        })
        .sum();
    Ok(total / g.len() as f64)
}

/// `E[((−1)^y − g(x))²] = Σ_s (ϕ̂(s) − ĝ(s))² + (1 − E[ϕ²])`.
pub fn l2_error(d: &LabeledDistribution, g: &SparseSpectrum) -> f64 {
    let dense = d.coefficients().values();
    let mut dist: f64 = dense.iter().map(|c| c * c).sum();
    for (s, c) in g.iter() {
        let v = dense[s.index()];
        dist += (v - c).powi(2) - v * v;
    }
    dist + (1.0 - d.weight())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BenchmarkClass {
    Parities,
    /// Boolean functions whose ±1 form has at most `k` non-zero coefficients.
    Sparse(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    Parity(BitString),
    Table(DenseTable),
}

/// Minimum exact risk over a benchmark class, with an achieving member.
pub fn brute_force_opt(d: &LabeledDistribution, class: BenchmarkClass) -> Result<(f64, Witness)> {
    let n = d.n();
    match class {
        BenchmarkClass::Parities => {
            let coeffs = d.coefficients().values();
            let (best, &c) = coeffs
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.total_cmp(b.1).then(b.0.cmp(&a.0)))
                .expect("non-empty cube");
            Ok(((1.0 - c) / 2.0, Witness::Parity(BitString::new_unchecked(n, best))))
        }
        BenchmarkClass::Sparse(k) => {
            if n > MAX_ENUMERATION_N {
                return Err(DistError::UnsupportedScale { n, max: MAX_ENUMERATION_N });
            }
            let cube = 1usize << n;
            let phi = d.phi().values();
            let mut best: Option<(f64, u64)> = None;
            for code in 0..1u64 << cube {
                let sign = DenseTable::from_fn(n, |x| if code >> x & 1 == 1 { -1.0 } else { 1.0 })?;
                let support = fourier::transform(&sign).values().iter().filter(|c| c.abs() > ZERO_TOL).count();
                if support > k {
                    continue;
                }
                let corr: f64 = sign.values().iter().zip(phi).map(|(a, b)| a * b).sum::<f64>() / cube as f64;
                let risk = (1.0 - corr) / 2.0;
                if best.is_none_or(|(r, _)| risk < r - 1e-15) {
                    best = Some((risk, code));
                }
            }
            let (risk, code) = best.expect("constant functions are 1-sparse");
            let table = DenseTable::from_fn(n, |x| (code >> x & 1) as f64)?;
            Ok((risk, Witness::Table(table)))
        }
    }
}

/// Relabel with probability `gamma` using `target_phi`; keep `base` otherwise.
pub fn mix_resample(target_phi: &DenseTable, gamma: f64, base: &LabeledDistribution) -> Result<LabeledDistribution> {
    if !(0.0..=1.0).contains(&gamma) {
        return Err(DistError::GammaOutOfRange(gamma));
    }
    if target_phi.n() != base.n() {
        return Err(FourierError::DimensionMismatch { left: target_phi.n(), right: base.n() }.into());
    }
    if let Some((x, &value)) = target_phi.values().iter().enumerate().find(|(_, v)| v.abs() > 1.0 + 1e-12) {
        return Err(DistError::InvalidPhi { x: BitString::new_unchecked(target_phi.n(), x), value });
    }
    let mixed =
        DenseTable::from_fn(base.n(), |x| gamma * target_phi.values()[x] + (1.0 - gamma) * base.phi().values()[x])?;
    LabeledDistribution::from_phi(mixed)
}

/// On-disk description of a distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DistributionFile {
    Function { n: usize, f: Vec<u8> },
    Noisy { n: usize, eta: f64, f: Vec<u8> },
    Spectrum { spec: SparseSpectrum },
}

impl DistributionFile {
    pub fn build(&self) -> Result<LabeledDistribution> {
        let table = |n: usize, f: &[u8]| DenseTable::new(n, f.iter().map(|&b| b as f64).collect());
        match self {
            DistributionFile::Function { n, f } => LabeledDistribution::from_function(&table(*n, f)?),
            DistributionFile::Noisy { n, eta, f } => LabeledDistribution::from_noisy_function(&table(*n, f)?, *eta),
            DistributionFile::Spectrum { spec } => LabeledDistribution::from_spectrum(spec),
        }
    }

    /// A noisy (or clean, for `eta = 0`) parity in file form.
    pub fn parity(s: &BitString, eta: f64) -> Self {
        let n = s.n();
        let f = (0..1usize << n).map(|x| u8::from(chi(s.index(), x) < 0.0)).collect();
        if eta == 0.0 {
            DistributionFile::Function { n, f }
        } else {
            DistributionFile::Noisy { n, eta, f }
        }
    }
}

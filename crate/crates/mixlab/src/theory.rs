//! Numeric checks of the closed-form quantities behind the sample lower
//! bounds: hard-instance state spectra, entropies, Holevo information, and
//! exact total-variation distances between uniform and noisy-parity samples.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("d = {0} outside 2..=12")]
    UnsupportedSize(usize),
    #[error("eps = {0} outside [0, 1/4)")]
    EpsOutOfRange(f64),
    #[error("label vector has {got} entries, expected {want}")]
    LabelLength { got: usize, want: usize },
    #[error("enumeration over (n+1)·m = {0} bits exceeds 24")]
    UnsupportedScale(usize),
    #[error("eta = {0} outside [0, 1/2]")]
    EtaOutOfRange(f64),
}

pub type Result<T> = std::result::Result<T, TheoryError>;

pub const MAX_D: usize = 12;
pub const MAX_TV_BITS: usize = 24;

/// Twice the quartic coefficient fitted at `d = 3`, bounding
/// `|I − d/(2(d−1))·log₂d·ε̃²| ≤ C·ε̃⁴` for the sizes checked here.
pub const MI_QUARTIC_CONSTANT: f64 = 0.64;

/// State on `C^d ⊗ C^2`, basis `|x_i, b⟩` at index `2i + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct HardInstanceState {
    pub d: usize,
    pub a: Vec<bool>,
    pub eps: f64,
    pub matrix: DMatrix<f64>,
}

fn basis(i: usize, b: bool) -> usize {
    2 * i + b as usize
}

fn check_d(d: usize) -> Result<()> {
    if (2..=MAX_D).contains(&d) {
        Ok(())
    } else {
        Err(TheoryError::UnsupportedSize(d))
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if (0.0..0.25).contains(&eps) {
        Ok(())
    } else {
        Err(TheoryError::EpsOutOfRange(eps))
    }
}

/// `P[c_i = b]` under `D_a`: `½(1 + (−1)^{a_i + b}·4ε)`.
fn label_probability(a_i: bool, b: bool, eps: f64) -> f64 {
    let sign = if a_i == b { 1.0 } else { -1.0 };
    0.5 * (1.0 + sign * 4.0 * eps)
}

impl HardInstanceState {
    /// `E_c |ψ_c⟩⟨ψ_c|` with `ψ_c = d^{−½}·Σ_i |x_i, c_i⟩`, summed over all
    /// `2^d` label vectors.
    pub fn mixture(d: usize, eps: f64, a: &[bool]) -> Result<Self> {
        check_d(d)?;
        check_eps(eps)?;
        if a.len() != d {
            return Err(TheoryError::LabelLength { got: a.len(), want: d });
        }
        let mut m = DMatrix::zeros(2 * d, 2 * d);
        for c in 0..1usize << d {
            let bit = |i: usize| (c >> i) & 1 == 1;
            let weight: f64 = (0..d).map(|i| label_probability(a[i], bit(i), eps)).product();
            let w = weight / d as f64;
            for i in 0..d {
                for j in 0..d {
                    m[(basis(i, bit(i)), basis(j, bit(j)))] += w;
                }
            }
        }
        Ok(HardInstanceState { d, a: a.to_vec(), eps, matrix: m })
    }

    /// Closed-form average `2^{−d}·Σ_a ρ_a`: `1/(2d)` on the diagonal,
    /// `1/(4d)` between different points, zero between the two labels of
    /// one point.
    pub fn average(d: usize) -> Result<Self> {
        check_d(d)?;
        let dim = 2 * d;
        let m = DMatrix::from_fn(dim, dim, |r, c| {
            if r == c {
                1.0 / (2.0 * d as f64)
            } else if r / 2 == c / 2 {
                0.0
            } else {
                1.0 / (4.0 * d as f64)
            }
        });
        Ok(HardInstanceState { d, a: vec![false; d], eps: 0.0, matrix: m })
    }

    pub fn dim(&self) -> usize {
        2 * self.d
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        sorted_eigenvalues(&self.matrix)
    }

    pub fn entropy(&self) -> f64 {
        von_neumann_entropy(&self.eigenvalues())
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        (&self.matrix - self.matrix.transpose()).amax() <= tol
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().last().copied().unwrap_or(0.0)
    }

    /// Hermitian, unit trace and PSD, each within `tol`.
    pub fn satisfies_invariants(&self, tol: f64) -> bool {
        self.is_hermitian(tol) && (self.trace() - 1.0).abs() <= tol && self.min_eigenvalue() >= -tol
    }
}

/// Constructs `ρ_a` and `ρ̄`.
pub fn build_hard_states(d: usize, eps: f64, a: &[bool]) -> Result<(HardInstanceState, HardInstanceState)> {
    Ok((HardInstanceState::mixture(d, eps, a)?, HardInstanceState::average(d)?))
}

/// Permutation `|x_i, b⟩ ↦ |x_i, b ⊕ a_i⟩`.
pub fn label_flip(a: &[bool]) -> DMatrix<f64> {
    let dim = 2 * a.len();
    let mut p = DMatrix::zeros(dim, dim);
    for (i, &flip) in a.iter().enumerate() {
        for b in [false, true] {
            p[(basis(i, b ^ flip), basis(i, b))] = 1.0;
        }
    }
    p
}

/// Descending eigenvalues of a symmetric matrix.
pub fn sorted_eigenvalues(m: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect();
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `−Σ λ log₂ λ`, skipping numerically zero eigenvalues.
pub fn von_neumann_entropy(eigenvalues: &[f64]) -> f64 {
    eigenvalues.iter().filter(|&&l| l > 1e-15).map(|&l| -l * l.log2()).sum()
}

/// Closed-form eigenvalues `(λ₁, λ₂, λ₃, λ₄)` of `M = 2d·ρ_a` with
/// `ε̃ = 4ε`; multiplicities `1, 1, d−1, d−1`.
pub fn closed_form_instance_eigenvalues(d: usize, eps: f64) -> [f64; 4] {
    let d = d as f64;
    let e2 = (4.0 * eps).powi(2);
    let base = d * (1.0 + e2) + (1.0 - e2);
    let root = ((d - 1.0).powi(2) + 2.0 * (d * d + 2.0 * d - 1.0) * e2 + (d - 1.0).powi(2) * e2 * e2).sqrt();
    [0.5 * (base + root), 0.5 * (base - root), 1.0 - e2, 0.0]
}

/// The closed-form spectrum of `ρ_a`, expanded by multiplicity, descending.
pub fn closed_form_instance_spectrum(d: usize, eps: f64) -> Vec<f64> {
    let [l1, l2, l3, l4] = closed_form_instance_eigenvalues(d, eps);
    let scale = 2.0 * d as f64;
    let mut v = vec![l1 / scale, l2 / scale];
    v.extend(std::iter::repeat_n(l3 / scale, d - 1));
    v.extend(std::iter::repeat_n(l4 / scale, d - 1));
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

/// `{½, 1/(2d) × d, 0 × (d−1)}`, descending.
pub fn closed_form_average_spectrum(d: usize) -> Vec<f64> {
    let mut v = vec![0.5];
    v.extend(std::iter::repeat_n(1.0 / (2.0 * d as f64), d));
    v.extend(std::iter::repeat_n(0.0, d - 1));
    v
}

/// `1 + ½·log₂ d`.
pub fn closed_form_average_entropy(d: usize) -> f64 {
    1.0 + 0.5 * (d as f64).log2()
}

/// Leading coefficient `d/(2(d−1))·log₂ d` of `I(A;B₁)` in `ε̃²`.
pub fn mutual_information_leading(d: usize) -> f64 {
    let d = d as f64;
    d / (2.0 * (d - 1.0)) * d.log2()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckRecord {
    pub quantity: String,
    pub formula: f64,
    pub numeric: f64,
    pub delta: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl CheckRecord {
    pub fn new(quantity: impl Into<String>, formula: f64, numeric: f64, tolerance: f64) -> Self {
        let delta = (formula - numeric).abs();
        CheckRecord { quantity: quantity.into(), formula, numeric, delta, tolerance, pass: delta <= tolerance }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckReport {
    pub check: String,
    pub records: Vec<CheckRecord>,
}

impl CheckReport {
    fn new(check: impl Into<String>) -> Self {
        CheckReport { check: check.into(), records: Vec::new() }
    }

    fn push(&mut self, r: CheckRecord) {
        self.records.push(r);
    }

    pub fn pass(&self) -> bool {
        self.records.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> impl Iterator<Item = &CheckRecord> {
        self.records.iter().filter(|r| !r.pass)
    }
}

fn spectrum_records(report: &mut CheckReport, label: &str, formula: &[f64], numeric: &[f64], tol: f64) {
    for (k, (f, x)) in formula.iter().zip(numeric).enumerate() {
        report.push(CheckRecord::new(format!("{label}[{k}]"), *f, *x, tol));
    }
}

/// Eigenvalues and entropy of `ρ̄` against their closed forms.
pub fn check_average_spectrum(d: usize) -> Result<CheckReport> {
    let avg = HardInstanceState::average(d)?;
    let mut report = CheckReport::new(format!("average_spectrum(d={d})"));
    let numeric = avg.eigenvalues();
    spectrum_records(&mut report, "lambda", &closed_form_average_spectrum(d), &numeric, 1e-9);
    report.push(CheckRecord::new("entropy_bits", closed_form_average_entropy(d), von_neumann_entropy(&numeric), 1e-9));
    Ok(report)
}

/// Spectrum of `ρ_{0^d}` against the four closed forms, plus the entropy.
pub fn check_instance_spectrum(d: usize, eps: f64) -> Result<CheckReport> {
    let state = HardInstanceState::mixture(d, eps, &vec![false; d])?;
    let mut report = CheckReport::new(format!("instance_spectrum(d={d}, eps={eps})"));
    let numeric = state.eigenvalues();
    let formula = closed_form_instance_spectrum(d, eps);
    spectrum_records(&mut report, "lambda", &formula, &numeric, 1e-9);
    report.push(CheckRecord::new("entropy_bits", von_neumann_entropy(&formula), von_neumann_entropy(&numeric), 1e-9));
    let [l1, l2, l3, _] = closed_form_instance_eigenvalues(d, eps);
    report.push(CheckRecord::new("trace_M", 2.0 * d as f64, l1 + l2 + (d as f64 - 1.0) * l3, 1e-10));
    Ok(report)
}

/// Holevo quantity `S(ρ̄) − S(ρ_a)` from exact spectra.
pub fn mutual_information(d: usize, eps: f64) -> Result<f64> {
    let state = HardInstanceState::mixture(d, eps, &vec![false; d])?;
    Ok(HardInstanceState::average(d)?.entropy() - state.entropy())
}

/// Series check `|I − lead·ε̃²| ≤ C·ε̃⁴`, reported as the ratio `I/ε̃²`.
pub fn check_mutual_information(d: usize, eps: f64) -> Result<CheckReport> {
    let mut report = CheckReport::new(format!("mutual_information(d={d}, eps={eps})"));
    let i = mutual_information(d, eps)?;
    let et2 = (4.0 * eps).powi(2);
    let lead = mutual_information_leading(d) * et2;
    report.push(CheckRecord::new("I_bits", lead, i, MI_QUARTIC_CONSTANT * et2 * et2 + 1e-12));
    if eps > 0.0 {
        let ratio = mutual_information_leading(d);
        report.push(CheckRecord::new("I_over_eps_tilde_sq", ratio, i / et2, 0.05 * ratio));
    }
    Ok(report)
}

fn check_tv(n: usize, m: usize, eta: f64) -> Result<()> {
    if (n + 1) * m > MAX_TV_BITS || n > MAX_TV_BITS {
        return Err(TheoryError::UnsupportedScale((n + 1) * m));
    }
    if !(0.0..=0.5).contains(&eta) {
        return Err(TheoryError::EtaOutOfRange(eta));
    }
    Ok(())
}

/// Exact TV distance between `U_{n+1}^{⊗m}` and the mixture over uniform
/// `s` of `m` noisy-parity samples.  Averaging over `s` first turns the
/// mixture density at `((x_i, y_i))_i` into
/// `2^{−(n+1)m}·Σ_T c^{|T|}·Π_{i∈T}(−1)^{y_i}·1[⊕_{i∈T} x_i = 0]`
/// with `c = 1 − 2η`, so each sample point costs `2^m`.
pub fn tv_uniform_vs_noisy_parities(n: usize, m: usize, eta: f64) -> Result<f64> {
    check_tv(n, m, eta)?;
    if m == 0 {
        return Ok(0.0);
    }
    let c = 1.0 - 2.0 * eta;
    let width = n + 1;
    let mask = (1u64 << n) - 1;
    let powers: Vec<f64> = (0..=m).map(|k| c.powi(k as i32)).collect();
    let mut total = 0.0;
    for z in 0..1u64 << (width * m) {
        let mut excess = 0.0;
        for t in 1..1u64 << m {
            let mut xor = 0u64;
            let mut sign = 1.0;
            for i in 0..m {
                if (t >> i) & 1 == 1 {
                    let point = z >> (i * width);
                    xor ^= point & mask;
                    if (point >> n) & 1 == 1 {
                        sign = -sign;
                    }
                }
            }
            if xor == 0 {
                excess += sign * powers[t.count_ones() as usize];
            }
        }
        total += excess.abs();
    }
    Ok(0.5 * total / (1u64 << (width * m)) as f64)
}

/// `(2^m − 1)/2^n`.
pub fn tv_bound(n: usize, m: usize) -> f64 {
    ((1u64 << m) - 1) as f64 / (1u64 << n) as f64
}

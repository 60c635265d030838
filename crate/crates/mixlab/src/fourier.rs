//! Fourier analysis on the Boolean hypercube `{0,1}^n`.
//!
//! Strings are stored as integers whose bit `j` is coordinate `x_{j+1}`; the
//! textual form lists `x_1` first. Coefficients use the expectation
//! normalisation `f̂(s) = 2^{-n} Σ_x f(x) χ_s(x)`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Largest dimension for which dense `2^n` tables are built.
pub const MAX_DIMENSION: usize = 24;

/// Magnitude below which a coefficient is treated as zero.
pub const ZERO_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FourierError {
    #[error("dimension {0} outside the supported range 1..={MAX_DIMENSION}")]
    UnsupportedDimension(usize),
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("value {value} does not fit in {n} bits")]
    ValueOutOfRange { value: u64, n: usize },
    #[error("table for n={n} needs {expected} entries, got {got}")]
    BadLength { n: usize, expected: usize, got: usize },
    #[error("cannot parse bit string {0:?}")]
    Parse(String),
    #[error("vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("entries must be non-negative")]
    NegativeEntry,
    #[error("non-finite value {0}")]
    NonFinite(f64),
}

pub type Result<T> = std::result::Result<T, FourierError>;

pub(crate) fn check_dimension(n: usize) -> Result<()> {
    if (1..=MAX_DIMENSION).contains(&n) {
        Ok(())
    } else {
        Err(FourierError::UnsupportedDimension(n))
    }
}

/// A point of `{0,1}^n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BitString {
    n: u8,
    value: u32,
}

impl BitString {
    pub fn new(n: usize, value: u64) -> Result<Self> {
        check_dimension(n)?;
        if value >> n != 0 {
            return Err(FourierError::ValueOutOfRange { value, n });
        }
        Ok(Self { n: n as u8, value: value as u32 })
    }

    /// Caller guarantees `value < 2^n` and `n` is supported.
    pub(crate) fn new_unchecked(n: usize, value: usize) -> Self {
        debug_assert!(n <= 31 && value >> n == 0);
        Self { n: n as u8, value: value as u32 }
    }

    pub fn zero(n: usize) -> Result<Self> {
        Self::new(n, 0)
    }

    pub fn n(&self) -> usize {
        self.n as usize
    }

    pub fn value(&self) -> u64 {
        self.value as u64
    }

    pub fn index(&self) -> usize {
        self.value as usize
    }

    /// Coordinate `x_{i+1}` (zero-based `i`).
    pub fn bit(&self, i: usize) -> bool {
        (self.value >> i) & 1 == 1
    }

    pub fn weight(&self) -> u32 {
        self.value.count_ones()
    }

    /// Inner product over GF(2).
    pub fn dot(&self, other: &BitString) -> Result<bool> {
        same_dim(self.n(), other.n())?;
        Ok(parity_of(self.value & other.value))
    }

    /// All strings of dimension `n` in increasing value order.
    pub fn all(n: usize) -> Result<impl Iterator<Item = BitString>> {
        check_dimension(n)?;
        Ok((0..1usize << n).map(move |v| BitString::new_unchecked(n, v)))
    }
}

impl fmt::Display for BitString {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text: String = (0..self.n()).map(|i| if self.bit(i) { '1' } else { '0' }).collect();
        f.write_str(&text)
    }
}

impl FromStr for BitString {
    type Err = FourierError;

    fn from_str(text: &str) -> Result<Self> {
        let n = text.len();
        if n == 0 || n > MAX_DIMENSION {
            return Err(FourierError::Parse(text.to_owned()));
        }
        let mut value = 0u64;
        for (i, c) in text.chars().enumerate() {
            match c {
                '0' => {}
                '1' => value |= 1 << i,
                _ => return Err(FourierError::Parse(text.to_owned())),
            }
        }
        BitString::new(n, value)
    }
}

impl Serialize for BitString {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for BitString {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let text = String::deserialize(deserializer)?;
        text.parse().map_err(serde::de::Error::custom)
    }
}

#[inline]
pub(crate) fn parity_of(v: u32) -> bool {
    v.count_ones() & 1 == 1
}

/// `χ_s(x)` for raw values; both must share a dimension.
#[inline]
pub fn chi(s: usize, x: usize) -> f64 {
    if parity_of((s & x) as u32) {
        -1.0
    } else {
        1.0
    }
}

fn same_dim(left: usize, right: usize) -> Result<()> {
    if left == right {
        Ok(())
    } else {
        Err(FourierError::DimensionMismatch { left, right })
    }
}

/// The character `χ_s(x) = (-1)^{s·x}`.
pub fn character(s: &BitString, x: &BitString) -> Result<i8> {
    Ok(if s.dot(x)? { -1 } else { 1 })
}

/// A real function on `{0,1}^n`, indexed by string value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DenseRecord")]
pub struct DenseTable {
    n: usize,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct DenseRecord {
    n: usize,
    values: Vec<f64>,
}

impl TryFrom<DenseRecord> for DenseTable {
    type Error = FourierError;
    fn try_from(r: DenseRecord) -> Result<Self> {
        DenseTable::new(r.n, r.values)
    }
}

impl DenseTable {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        check_dimension(n)?;
        let expected = 1usize << n;
        if values.len() != expected {
            return Err(FourierError::BadLength { n, expected, got: values.len() });
        }
        if let Some(&bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(FourierError::NonFinite(bad));
        }
        Ok(Self { n, values })
    }

    pub fn constant(n: usize, c: f64) -> Result<Self> {
        check_dimension(n)?;
        Self::new(n, vec![c; 1 << n])
    }

    pub fn from_fn(n: usize, f: impl Fn(usize) -> f64) -> Result<Self> {
        check_dimension(n)?;
        Self::new(n, (0..1usize << n).map(f).collect())
    }

    /// The character `χ_s` as a table.
    pub fn character(s: &BitString) -> Self {
        let n = s.n();
        Self { n, values: (0..1usize << n).map(|x| chi(s.index(), x)).collect() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, x: &BitString) -> f64 {
        self.values[x.index()]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.len() as f64
    }

    pub fn mean_square(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>() / self.len() as f64
    }

    /// Mean of the pointwise product; dimensions must agree.
    pub fn inner(&self, other: &DenseTable) -> Result<f64> {
        same_dim(self.n, other.n)?;
        let sum: f64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum();
        Ok(sum / self.len() as f64)
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }
}

/// The unnormalised Walsh-Hadamard butterfly.
fn butterfly(values: &mut [f64]) {
    let len = values.len();
    let mut h = 1;
    while h < len {
        for block in values.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (a, b) in lo.iter_mut().zip(hi.iter_mut()) {
                let (u, v) = (*a, *b);
                *a = u + v;
                *b = u - v;
            }
        }
        h *= 2;
    }
}

/// Fourier coefficients of `table`, as a dense table indexed by `s`.
pub fn transform(table: &DenseTable) -> DenseTable {
    let mut values = table.values.clone();
    butterfly(&mut values);
    let scale = 1.0 / values.len() as f64;
    values.iter_mut().for_each(|v| *v *= scale);
    DenseTable { n: table.n, values }
}

/// Function values from a dense coefficient table.
pub fn inverse(coefficients: &DenseTable) -> DenseTable {
    let mut values = coefficients.values.clone();
    butterfly(&mut values);
    DenseTable { n: coefficients.n, values }
}

/// A finitely supported coefficient map, ordered by string value.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSpectrum {
    n: usize,
    entries: BTreeMap<BitString, f64>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumRecord {
    n: usize,
    entries: Vec<SpectrumEntry>,
}

#[derive(Serialize, Deserialize)]
struct SpectrumEntry {
    s: BitString,
    c: f64,
}

impl Serialize for SparseSpectrum {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        SpectrumRecord { n: self.n, entries: self.entries.iter().map(|(&s, &c)| SpectrumEntry { s, c }).collect() }
            .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SparseSpectrum {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error;
        let record = SpectrumRecord::deserialize(deserializer)?;
        let mut spec = SparseSpectrum::empty(record.n).map_err(D::Error::custom)?;
        for e in record.entries {
            if spec.entries.contains_key(&e.s) {
                return Err(D::Error::custom(format!("duplicate string {}", e.s)));
            }
            spec.insert(e.s, e.c).map_err(D::Error::custom)?;
        }
        Ok(spec)
    }
}

impl SparseSpectrum {
    pub fn empty(n: usize) -> Result<Self> {
        check_dimension(n)?;
        Ok(Self { n, entries: BTreeMap::new() })
    }

    pub fn from_pairs(n: usize, pairs: impl IntoIterator<Item = (BitString, f64)>) -> Result<Self> {
        let mut spec = Self::empty(n)?;
        for (s, c) in pairs {
            spec.insert(s, c)?;
        }
        Ok(spec)
    }

    /// Keeps every coefficient whose magnitude exceeds [`ZERO_TOL`].
    pub fn from_dense(coefficients: &DenseTable) -> Self {
        let n = coefficients.n();
        let entries = coefficients
            .values()
            .iter()
            .enumerate()
            .filter(|(_, c)| c.abs() > ZERO_TOL)
            .map(|(s, &c)| (BitString::new_unchecked(n, s), c))
            .collect();
        Self { n, entries }
    }

    /// Inserts or overwrites one coefficient. Explicit zeros are kept.
    pub fn insert(&mut self, s: BitString, c: f64) -> Result<()> {
        same_dim(self.n, s.n())?;
        if !c.is_finite() {
            return Err(FourierError::NonFinite(c));
        }
        self.entries.insert(s, c);
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, s: &BitString) -> f64 {
        self.entries.get(s).copied().unwrap_or(0.0)
    }

    pub fn contains(&self, s: &BitString) -> bool {
        self.entries.contains_key(s)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (BitString, f64)> + '_ {
        self.entries.iter().map(|(&s, &c)| (s, c))
    }

    pub fn strings(&self) -> impl Iterator<Item = BitString> + '_ {
        self.entries.keys().copied()
    }

    pub fn to_dense(&self) -> DenseTable {
        let mut values = vec![0.0; 1 << self.n];
        for (s, c) in self.iter() {
            values[s.index()] = c;
        }
        DenseTable { n: self.n, values }
    }

    /// Evaluates `Σ_s c_s χ_s` on the whole cube.
    pub fn evaluate(&self) -> DenseTable {
        inverse(&self.to_dense())
    }

    /// Evaluates `Σ_s c_s χ_s(x)` at one point.
    pub fn evaluate_at(&self, x: usize) -> f64 {
        self.iter().map(|(s, c)| c * chi(s.index(), x)).sum()
    }

    pub fn l1_distance(&self, other: &SparseSpectrum) -> f64 {
        self.union_keys(other).map(|s| (self.get(&s) - other.get(&s)).abs()).sum()
    }

    pub fn linf_distance(&self, other: &SparseSpectrum) -> f64 {
        self.union_keys(other).map(|s| (self.get(&s) - other.get(&s)).abs()).fold(0.0, f64::max)
    }

    pub fn l2_distance_sq(&self, other: &SparseSpectrum) -> f64 {
        self.union_keys(other).map(|s| (self.get(&s) - other.get(&s)).powi(2)).sum()
    }

    fn union_keys<'a>(&'a self, other: &'a SparseSpectrum) -> impl Iterator<Item = BitString> + 'a {
        let mut keys: Vec<BitString> = self.strings().chain(other.strings()).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
    }
}

/// `Σ_s c_s²`.
pub fn parseval_weight(spec: &SparseSpectrum) -> f64 {
    spec.iter().map(|(_, c)| c * c).sum()
}

/// The `k` entries of largest magnitude, ties broken by ascending string
/// value, padded with the smallest unused strings at coefficient zero.
pub fn top_k(spec: &SparseSpectrum, k: usize) -> Vec<(BitString, f64)> {
    let mut ranked: Vec<(BitString, f64)> = spec.iter().collect();
    ranked.sort_by(|a, b| b.1.abs().total_cmp(&a.1.abs()).then(a.0.cmp(&b.0)));
    ranked.truncate(k);
    let mut candidate = 0usize;
    let cube = 1usize << spec.n();
    while ranked.len() < k && candidate < cube {
        let s = BitString::new_unchecked(spec.n(), candidate);
        if !spec.contains(&s) {
            ranked.push((s, 0.0));
        }
        candidate += 1;
    }
    ranked
}

/// Checks `‖b↓ − b_π‖∞ ≤ 2‖a − b‖∞` where `π` sorts `a` descending (stably).
pub fn sorted_perturbation_bound_check(a: &[f64], b: &[f64]) -> Result<bool> {
    if a.len() != b.len() {
        return Err(FourierError::LengthMismatch(a.len(), b.len()));
    }
    if a.iter().chain(b).any(|&v| v < 0.0) {
        return Err(FourierError::NegativeEntry);
    }
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| a[j].total_cmp(&a[i]));
    let mut b_sorted = b.to_vec();
    b_sorted.sort_by(|x, y| y.total_cmp(x));
    let lhs = order.iter().zip(&b_sorted).map(|(&i, &bs)| (bs - b[i]).abs()).fold(0.0, f64::max);
    let rhs = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(lhs <= 2.0 * rhs + 1e-15)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bs(text: &str) -> BitString {
        text.parse().unwrap()
    }

    #[test]
    fn characters_on_small_cases() {
        let z = BitString::zero(3).unwrap();
        for x in BitString::all(3).unwrap() {
            assert_eq!(character(&z, &x).unwrap(), 1);
        }
        assert_eq!(character(&bs("1"), &bs("1")).unwrap(), -1);
        assert_eq!(character(&bs("101"), &bs("111")).unwrap(), 1);
        assert!(character(&bs("10"), &bs("101")).is_err());
    }

    #[test]
    fn string_round_trip_puts_first_coordinate_first() {
        let s = BitString::new(4, 0b0001).unwrap();
        assert_eq!(s.to_string(), "1000");
        assert_eq!(bs("1000"), s);
        assert!("10a".parse::<BitString>().is_err());
        assert!(BitString::new(3, 8).is_err());
        assert!(BitString::new(25, 0).is_err());
    }

    #[test]
    fn transform_of_character_is_indicator() {
        let t = bs("0110");
        let coeffs = transform(&DenseTable::character(&t));
        for (s, &c) in coeffs.values().iter().enumerate() {
            assert_eq!(c, if s == t.index() { 1.0 } else { 0.0 });
        }
        let ones = transform(&DenseTable::constant(3, 1.0).unwrap());
        assert_eq!(ones.values()[0], 1.0);
        assert!(ones.values()[1..].iter().all(|&c| c == 0.0));
    }

    #[test]
    fn parseval_small_cases() {
        let s = bs("101");
        let spec = SparseSpectrum::from_dense(&transform(&DenseTable::character(&s)));
        assert_eq!(parseval_weight(&spec), 1.0);
        let zero = SparseSpectrum::from_dense(&transform(&DenseTable::constant(3, 0.0).unwrap()));
        assert_eq!(parseval_weight(&zero), 0.0);
        let noisy = SparseSpectrum::from_pairs(3, [(s, 0.5)]).unwrap();
        assert_eq!(parseval_weight(&noisy), 0.25);
    }

    #[test]
    fn top_k_ordering_and_padding() {
        let a = bs("100");
        let b = bs("010");
        let spec = SparseSpectrum::from_pairs(3, [(a, 0.6), (b, 0.3)]).unwrap();
        assert_eq!(top_k(&spec, 1), vec![(a, 0.6)]);
        let tie = SparseSpectrum::from_pairs(3, [(b, -0.5), (a, 0.5)]).unwrap();
        assert!(a.value() < b.value());
        assert_eq!(top_k(&tie, 2), vec![(a, 0.5), (b, -0.5)]);
        let padded = top_k(&spec, 4);
        assert_eq!(padded[2], (bs("000"), 0.0));
        assert_eq!(padded[3], (bs("110"), 0.0));
    }

    #[test]
    fn perturbation_check_hand_cases() {
        assert!(sorted_perturbation_bound_check(&[0.3, 0.1], &[0.3, 0.1]).unwrap());
        assert!(sorted_perturbation_bound_check(&[1.0, 0.0], &[0.0, 1.0]).unwrap());
        assert!(sorted_perturbation_bound_check(&[1.0], &[0.0, 1.0]).is_err());
        assert!(sorted_perturbation_bound_check(&[-1.0], &[0.0]).is_err());
    }

    #[test]
    fn spectrum_json_shape() {
        let spec = SparseSpectrum::from_pairs(3, [(bs("100"), 0.5)]).unwrap();
        let text = serde_json::to_string(&spec).unwrap();
        assert_eq!(text, r#"{"n":3,"entries":[{"s":"100","c":0.5}]}"#);
        let back: SparseSpectrum = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let dup = r#"{"n":3,"entries":[{"s":"100","c":0.5},{"s":"100","c":0.1}]}"#;
        assert!(serde_json::from_str::<SparseSpectrum>(dup).is_err());
        let table: DenseTable = serde_json::from_str(r#"{"n":1,"values":[1.0,-1.0]}"#).unwrap();
        assert_eq!(table.values(), &[1.0, -1.0]);
        assert!(serde_json::from_str::<DenseTable>(r#"{"n":2,"values":[1.0]}"#).is_err());
    }
}

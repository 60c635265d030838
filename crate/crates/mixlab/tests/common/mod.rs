#![allow(dead_code)]

use mixlab::distribution::LabeledDistribution;
use mixlab::fourier::{BitString, DenseTable, SparseSpectrum};
use rand::seq::SliceRandom;
use rand::Rng;

pub fn bs(text: &str) -> BitString {
    text.parse().unwrap()
}

/// A spectrum with `1..=max_terms` coefficients of magnitude at least
/// `theta` and absolute sum at most 1, so the table stays in `[-1, 1]`.
pub fn random_promise_spectrum<R: Rng>(n: usize, theta: f64, max_terms: usize, rng: &mut R) -> SparseSpectrum {
    let cap = ((1.0 / theta).floor() as usize).clamp(1, max_terms);
    let terms = rng.random_range(1..=cap);
    let mut strings: Vec<BitString> = BitString::all(n).unwrap().collect();
    strings.shuffle(rng);
    let spare = (1.0 - terms as f64 * theta).max(0.0) / terms as f64;
    let pairs = strings.into_iter().take(terms).map(|s| {
        let mag = theta + rng.random::<f64>() * spare;
        (s, if rng.random::<bool>() { mag } else { -mag })
    });
    SparseSpectrum::from_pairs(n, pairs).unwrap()
}

pub fn random_promise_instance<R: Rng>(n: usize, theta: f64, max_terms: usize, rng: &mut R) -> LabeledDistribution {
    LabeledDistribution::from_spectrum(&random_promise_spectrum(n, theta, max_terms, rng)).unwrap()
}

/// A random valid `ϕ` table on `n` bits.
pub fn random_phi<R: Rng>(n: usize, rng: &mut R) -> LabeledDistribution {
    let values: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(-1.0..=1.0)).collect();
    LabeledDistribution::from_phi(DenseTable::new(n, values).unwrap()).unwrap()
}

/// `2^{-n} Σ_x v(x) χ_s(x)` by the double loop.
pub fn naive_transform(values: &[f64]) -> Vec<f64> {
    let len = values.len();
    (0..len)
        .map(|s| {
            let total: f64 =
                values.iter().enumerate().map(|(x, v)| if (s & x).count_ones() % 2 == 0 { *v } else { -*v }).sum();
            total / len as f64
        })
        .collect()
}

/// Every Boolean function `f` (bit `x` of the code is `f(x)`) with its
/// weight `Π_x P[y = f(x) | x]` under `d`.
pub fn function_weights(d: &LabeledDistribution) -> Vec<(u64, f64)> {
    let cube = 1usize << d.n();
    assert!(cube <= 16, "enumeration over 2^(2^n) functions");
    (0..1u64 << cube)
        .map(|code| {
            let w = (0..cube)
                .map(|x| {
                    let p1 = d.label_one_probability(x);
                    if code >> x & 1 == 1 {
                        p1
                    } else {
                        1.0 - p1
                    }
                })
                .product();
            (code, w)
        })
        .collect()
}

/// `E_f[ĝ_f(s)²]` over the random function whose labels are drawn pointwise.
pub fn brute_force_mixture_law(d: &LabeledDistribution) -> Vec<f64> {
    let cube = 1usize << d.n();
    let mut law = vec![0.0; cube];
    for (code, w) in function_weights(d) {
        let g: Vec<f64> = (0..cube).map(|x| if code >> x & 1 == 1 { -1.0 } else { 1.0 }).collect();
        for (acc, c) in law.iter_mut().zip(naive_transform(&g)) {
            *acc += w * c * c;
        }
    }
    law
}

/// `H^{⊗(n+1)} 2^{-n/2} Σ_x |x, f(x)⟩` with basis index `x | y << n`.
pub fn hadamard_state(n: usize, code: u64) -> Vec<f64> {
    let dim = 2usize << n;
    let mut psi = vec![0.0; dim];
    for x in 0..1usize << n {
        psi[x | ((code >> x & 1) as usize) << n] = (0.5f64).powf(n as f64 / 2.0);
    }
    let norm = (0.5f64).powf((n + 1) as f64 / 2.0);
    (0..dim)
        .map(|z| {
            norm * psi
                .iter()
                .enumerate()
                .map(|(w, a)| if (z & w).count_ones() % 2 == 0 { *a } else { -*a })
                .sum::<f64>()
        })
        .collect()
}

/// Expectation of the prefix projector (first `k` coordinates equal to
/// `prefix`, label qubit 1) on the mixture state, from explicit vectors.
pub fn statevector_prefix_weight(d: &LabeledDistribution, k: usize, prefix: u64) -> f64 {
    let n = d.n();
    let mask = (1usize << k) - 1;
    function_weights(d)
        .into_iter()
        .map(|(code, w)| {
            let phi = hadamard_state(n, code);
            let hit: f64 =
                (0..1usize << n).filter(|s| s & mask == prefix as usize).map(|s| phi[s | 1 << n].powi(2)).sum();
            w * hit
        })
        .sum()
}

/// Optimal parity risk among all `2^n` parities, from the naive transform.
pub fn brute_force_parity_opt(d: &LabeledDistribution) -> f64 {
    let best = naive_transform(d.phi().values()).into_iter().fold(f64::NEG_INFINITY, f64::max);
    (1.0 - best) / 2.0
}

/// A random spectrum with `1..=max_terms` terms and absolute sum at most 1.
pub fn random_valid_spectrum<R: Rng>(n: usize, max_terms: usize, rng: &mut R) -> SparseSpectrum {
    let terms = rng.random_range(1..=max_terms.min(1 << n));
    let mut strings: Vec<BitString> = BitString::all(n).unwrap().collect();
    strings.shuffle(rng);
    let raw: Vec<f64> = (0..terms).map(|_| rng.random::<f64>() + 1e-3).collect();
    let budget = rng.random_range(0.2..=1.0) / raw.iter().sum::<f64>();
    let pairs = strings.into_iter().zip(raw).map(|(s, r)| {
        let c = r * budget;
        (s, if rng.random::<bool>() { c } else { -c })
    });
    SparseSpectrum::from_pairs(n, pairs).unwrap()
}

/// `m` inverse-CDF draws from `law` over `n`-bit strings.
pub fn draw_from<R: Rng>(law: &[f64], n: usize, m: usize, rng: &mut R) -> Vec<BitString> {
    let cdf: Vec<f64> = law
        .iter()
        .scan(0.0, |acc, p| {
            *acc += p;
            Some(*acc)
        })
        .collect();
    (0..m)
        .map(|_| {
            let u = rng.random::<f64>() * cdf[cdf.len() - 1];
            let v = cdf.partition_point(|&c| c <= u).min(law.len() - 1);
            BitString::new(n, v as u64).unwrap()
        })
        .collect()
}

mod common;

use common::{bs, draw_from, random_phi, random_valid_spectrum};
use mixlab::distribution::LabeledDistribution;
use mixlab::estimation::*;
use mixlab::fourier::{BitString, DenseTable, SparseSpectrum};
use mixlab::oracles::{OracleLedger, SqPolicy};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn dkw_size_reference() {
    assert_eq!(dkw_sample_size(0.1, 0.05), 738);
}

#[test]
fn dkw_examples() {
    let x0 = bs("0110");
    let est = dkw_estimate(&vec![x0; 50], 0.1, 0.05).unwrap();
    assert_eq!(est.support, vec![(x0, 1.0)]);
    assert!(!est.sufficient);
    let (a, b) = (bs("00"), bs("11"));
    let mut samples = vec![a; 300];
    samples.extend(vec![b; 500]);
    let est = dkw_estimate(&samples, 0.1, 0.05).unwrap();
    assert!((est.mass(&a) - 300.0 / 800.0).abs() < 1e-12);
    assert!((est.mass(&b) - 500.0 / 800.0).abs() < 1e-12);
    assert!(est.sufficient);
    assert!(matches!(dkw_estimate(&[], 0.1, 0.05), Err(EstimationError::EmptySample)));
    assert!(dkw_estimate(&[bs("0"), bs("00")], 0.1, 0.05).is_err());
}

#[test]
fn dkw_error_rate_on_64_point_law() {
    let mut r = rng(1);
    let raw: Vec<f64> = (0..64).map(|_| r.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let law: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let m = dkw_sample_size(0.1, 0.05) as usize;
    let bad = (0..1000)
        .filter(|_| dkw_estimate(&draw_from(&law, 6, m, &mut r), 0.1, 0.05).unwrap().linf_error(&law) > 0.1)
        .count();
    assert!(bad <= 60, "{bad} of 1000 trials exceeded tau");
}

#[test]
fn dkw_masses_sum_to_one_and_support_is_bounded() {
    let mut r = rng(2);
    for _ in 0..50 {
        let m = r.random_range(1..200);
        let samples: Vec<BitString> = (0..m).map(|_| BitString::new(5, r.random_range(0..32)).unwrap()).collect();
        let est = dkw_estimate(&samples, 0.1, 0.1).unwrap();
        assert!((est.support.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(est.support.len() <= m);
        assert!(est.support.windows(2).all(|w| w[0].0 < w[1].0));
    }
}

#[test]
fn spectrum_of_functional_parity() {
    let mut r = rng(3);
    let s = bs("010110");
    let d = LabeledDistribution::parity(&s, 0.0).unwrap();
    let mut ledger = OracleLedger::new();
    let est = approximate_spectrum(&d, SpectrumSource::Functional, 0.3, 0.05, &mut r, &mut ledger).unwrap();
    assert_eq!(est.spectrum.strings().collect::<Vec<_>>(), vec![s]);
    assert!((est.spectrum.get(&s) - 1.0).abs() <= 0.3);
    assert_eq!(ledger.quantum_copies_consumed, est.quantum_attempts);
    assert_eq!(ledger.examples_drawn, est.classical_examples);
}

#[test]
fn spectrum_of_uniform_labels_is_small() {
    let mut r = rng(4);
    let d = LabeledDistribution::uniform(8).unwrap();
    let eps = 0.3;
    for _ in 0..10 {
        let mut ledger = OracleLedger::new();
        let est = approximate_spectrum(&d, SpectrumSource::Mixture, eps, 0.05, &mut r, &mut ledger).unwrap();
        assert!(est.spectrum.iter().all(|(_, c)| c.abs() <= eps));
        assert!(est.candidates.len() as f64 <= 16.0 / (eps * eps));
    }
}

#[test]
fn planted_spectrum_success_rate() {
    // n = 12 keeps ε = 0.2 above the mixture floor 2^{-4}.
    let n = 12;
    let (a, b) = (BitString::new(n, 0b101).unwrap(), BitString::new(n, 0b1_1000_0000).unwrap());
    let spec = SparseSpectrum::from_pairs(n, [(a, 0.6), (b, 0.4)]).unwrap();
    let d = LabeledDistribution::from_spectrum(&spec).unwrap();
    let eps = 0.2;
    assert!(eps > mixture_floor(n));
    let mut r = rng(5);
    let mut good = 0;
    for _ in 0..200 {
        let mut ledger = OracleLedger::new();
        let est = approximate_spectrum(&d, SpectrumSource::Mixture, eps, 0.05, &mut r, &mut ledger).unwrap();
        assert!(est.candidates.len() as f64 <= 16.0 / (eps * eps));
        let err = est.spectrum.linf_distance(&spec);
        good += usize::from(err <= eps);
    }
    assert!(good >= 180, "{good} of 200");
}

#[test]
fn mixture_floor_is_a_contract() {
    let mut r = rng(6);
    let d = random_phi(6, &mut r);
    let mut ledger = OracleLedger::new();
    let floor = mixture_floor(6);
    assert_eq!(floor, 0.5);
    let err = approximate_spectrum(&d, SpectrumSource::Mixture, 0.5, 0.1, &mut r, &mut ledger).unwrap_err();
    assert!(matches!(err, EstimationError::BelowMixtureFloor { .. }));
    assert!(approximate_spectrum(&d, SpectrumSource::Mixture, 0.51, 0.1, &mut r, &mut ledger).is_ok());
    assert_eq!(ledger.counts().copies, spectrum_copy_count(0.5, 0.51, 0.1));
}

#[test]
fn noisy_source_for_noisy_parities() {
    let s = bs("1010");
    let d = LabeledDistribution::parity(&s, 0.3).unwrap();
    assert_eq!(SpectrumSource::for_distribution(&d), SpectrumSource::Noisy { kind: NoisyKind::Mixed, eta: 0.3 });
    let mut r = rng(7);
    let mut ledger = OracleLedger::new();
    let est = approximate_spectrum(&d, SpectrumSource::for_distribution(&d), 0.2, 0.05, &mut r, &mut ledger).unwrap();
    assert!(est.spectrum.contains(&s));
    assert!((est.spectrum.get(&s) - 0.4).abs() <= 0.2);
}

#[test]
fn coefficient_estimation_examples() {
    let mut r = rng(8);
    let s = bs("11001");
    let d = LabeledDistribution::parity(&s, 0.0).unwrap();
    let mut ledger = OracleLedger::new();
    assert_eq!(estimate_coefficient(&d, &s, 0.1, 0.05, &mut r, &mut ledger).unwrap(), 1.0);
    let other = bs("00001");
    let far = estimate_coefficient(&d, &other, 0.01, 0.05, &mut r, &mut ledger).unwrap();
    assert!(far.abs() <= 0.01 * 3.0);
    let noisy = LabeledDistribution::parity(&s, 0.25).unwrap();
    let close = (0..100)
        .filter(|_| (estimate_coefficient(&noisy, &s, 0.05, 0.01, &mut r, &mut ledger).unwrap() - 0.5).abs() <= 0.05)
        .count();
    assert!(close >= 98);
    assert!(estimate_coefficient(&d, &s, 0.0, 0.05, &mut r, &mut ledger).is_err());
    assert!(estimate_coefficient(&d, &bs("1"), 0.1, 0.05, &mut r, &mut ledger).is_err());
}

#[test]
fn coefficient_sample_size_is_hoeffding_for_signed_terms() {
    assert_eq!(coefficient_sample_size(0.1, 0.05), ((2.0f64 * 40.0f64.ln()) / 0.01).ceil() as u64);
    assert_eq!(hoeffding_sample_size(0.1, 0.05), (40.0f64.ln() / 0.02).ceil() as u64);
}

#[test]
fn gl_examples() {
    let mut r = rng(9);
    let mut ledger = OracleLedger::new();
    let s = bs("10011");
    let parity = LabeledDistribution::parity(&s, 0.0).unwrap();
    for scope in [GlScope::Functional, GlScope::Distributional] {
        let out = goldreich_levin_qsq(&parity, 0.5, scope, &SqPolicy::Exact, &mut r, &mut ledger).unwrap();
        assert_eq!(out.list, vec![s]);
    }
    let zero = LabeledDistribution::uniform(5).unwrap();
    let out = goldreich_levin_qsq(&zero, 0.5, GlScope::Distributional, &SqPolicy::Exact, &mut r, &mut ledger).unwrap();
    assert!(out.list.is_empty());
    let (a, b) = (bs("11000"), bs("00110"));
    let planted =
        LabeledDistribution::from_spectrum(&SparseSpectrum::from_pairs(5, [(a, 0.6), (b, 0.3)]).unwrap()).unwrap();
    let out =
        goldreich_levin_qsq(&planted, 0.5, GlScope::Distributional, &SqPolicy::Exact, &mut r, &mut ledger).unwrap();
    assert!(out.list.contains(&a));
    assert!(out.list.iter().all(|t| *t == a || *t == b));
}

fn gl_violations(d: &LabeledDistribution, eps: f64, list: &[BitString]) -> usize {
    let missing = d.spectrum().iter().filter(|(s, c)| c.abs() >= eps && !list.contains(s)).count();
    let spurious = list.iter().filter(|s| d.coefficient(s).abs() < eps / 2.0).count();
    missing + spurious
}

#[test]
fn gl_properties_on_planted_spectra() {
    let mut r = rng(10);
    let n = 8;
    for eps in [0.3, 0.5] {
        let k0 = gl_start_level(n, eps, GlScope::Distributional);
        assert!((1u64 << k0) as f64 <= 32.0 / (eps * eps));
        let mut violations = 0;
        for _ in 0..500 {
            let d = LabeledDistribution::from_spectrum(&random_valid_spectrum(n, 6, &mut r)).unwrap();
            let mut ledger = OracleLedger::new();
            let out =
                goldreich_levin_qsq(&d, eps, GlScope::Distributional, &SqPolicy::Exact, &mut r, &mut ledger).unwrap();
            violations += gl_violations(&d, eps, &out.list);
            assert!(out.list.len() as f64 <= 4.0 * d.weight() / (eps * eps) + 1e-9);
            assert_eq!(out.start_level, k0);
            assert!(ledger.qsq_calls.iter().all(|c| c.tolerance == gl_tolerance(eps)));
        }
        assert_eq!(violations, 0, "eps={eps}");
    }
}

#[test]
fn gl_is_deterministic_under_exact_queries() {
    let mut r = rng(11);
    let d = LabeledDistribution::from_spectrum(&random_valid_spectrum(7, 5, &mut r)).unwrap();
    let run = |seed| {
        let mut ledger = OracleLedger::new();
        goldreich_levin_qsq(&d, 0.3, GlScope::Distributional, &SqPolicy::Exact, &mut rng(seed), &mut ledger).unwrap()
    };
    assert_eq!(run(1), run(2));
}

#[test]
fn gl_holds_under_noisy_and_adversarial_responses() {
    let mut r = rng(12);
    let adversary = SqPolicy::adversarial(|t, tau| if t > 0.1 { t - tau } else { t + tau });
    for policy in [SqPolicy::UniformNoise, adversary] {
        for _ in 0..100 {
            let d = LabeledDistribution::from_spectrum(&random_valid_spectrum(6, 5, &mut r)).unwrap();
            let mut ledger = OracleLedger::new();
            let out = goldreich_levin_qsq(&d, 0.4, GlScope::Distributional, &policy, &mut r, &mut ledger).unwrap();
            assert_eq!(gl_violations(&d, 0.4, &out.list), 0);
        }
    }
}

#[test]
fn functional_gl_finds_heavy_coefficients() {
    let mut r = rng(13);
    for _ in 0..50 {
        let values: Vec<f64> = (0..64).map(|_| f64::from(u8::from(r.random::<bool>()))).collect();
        let d = LabeledDistribution::from_function(&DenseTable::new(6, values).unwrap()).unwrap();
        let mut ledger = OracleLedger::new();
        let out = goldreich_levin_qsq(&d, 0.25, GlScope::Functional, &SqPolicy::Exact, &mut r, &mut ledger).unwrap();
        assert_eq!(out.start_level, 0);
        assert_eq!(gl_violations(&d, 0.25, &out.list), 0);
    }
}

#[test]
fn noise_rate_examples() {
    let mut r = rng(14);
    let mut ledger = OracleLedger::new();
    let s = bs("0111");
    let clean = LabeledDistribution::parity(&s, 0.0).unwrap();
    let est = estimate_noise_rate(&clean, 0.2, 0.03, 0.05, &mut r, &mut ledger).unwrap();
    assert!(est.eta <= 0.03);
    let edge = LabeledDistribution::parity(&s, 0.2).unwrap();
    for _ in 0..20 {
        assert!(estimate_noise_rate(&edge, 0.2, 0.03, 0.05, &mut r, &mut ledger).unwrap().eta <= 0.2);
    }
    assert!(estimate_noise_rate(&edge, 0.5, 0.03, 0.05, &mut r, &mut ledger).is_err());
    let noisy = LabeledDistribution::parity(&s, 0.1).unwrap();
    let close = (0..200)
        .filter(|_| {
            (estimate_noise_rate(&noisy, 0.2, 0.03, 0.05, &mut r, &mut ledger).unwrap().eta - 0.1).abs() <= 0.03
        })
        .count();
    assert!(close >= 180, "{close} of 200");
}

#[test]
fn excess_map_inverts() {
    for k in 0..50 {
        let eta = 0.49 * k as f64 / 50.0;
        assert!((noise_from_excess(noise_excess(eta)) - eta).abs() < 1e-9);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn dkw_is_order_insensitive(seed in any::<u64>(), m in 1usize..300) {
        let mut r = rng(seed);
        let mut samples: Vec<BitString> = (0..m).map(|_| BitString::new(4, r.random_range(0..16)).unwrap()).collect();
        let before = dkw_estimate(&samples, 0.1, 0.1).unwrap();
        samples.shuffle(&mut r);
        prop_assert_eq!(before, dkw_estimate(&samples, 0.1, 0.1).unwrap());
    }

    #[test]
    fn coefficient_estimates_are_clipped(seed in any::<u64>(), acc in 0.05f64..0.9) {
        let mut r = rng(seed);
        let d = random_phi(4, &mut r);
        let s = BitString::new(4, seed % 16).unwrap();
        let mut ledger = OracleLedger::new();
        let v = estimate_coefficient(&d, &s, acc, 0.1, &mut r, &mut ledger).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert_eq!(ledger.examples_drawn, coefficient_sample_size(acc, 0.1));
    }
}

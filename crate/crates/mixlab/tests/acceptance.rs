//! The acceptance suite: one PASS/FAIL line per criterion, non-zero exit if
//! any fails.  Runs without the libtest harness so the lines always show.

mod common;

use std::path::PathBuf;
use std::time::{Duration, Instant};

use common::{
    brute_force_mixture_law, draw_from, naive_transform, random_phi, random_valid_spectrum, statevector_prefix_weight,
};
use mixlab::distribution::LabeledDistribution;
use mixlab::estimation::{dkw_estimate, dkw_sample_size, goldreich_levin_qsq, GlScope};
use mixlab::experiments::{
    run_experiment, write_rows, ExperimentConfig, ExperimentKind, Grid, InstanceSpec, OutputFormat, PolicySpec,
    ProtocolKind, ProverSpec, ResultRow, TrialStatus,
};
use mixlab::fourier::{BitString, DenseTable};
use mixlab::oracles::{prefix_weight_truth, FourierLaw, OracleLedger, PrefixObservable, SamplerVariant, SqPolicy};
use mixlab::theory::{
    check_average_spectrum, check_instance_spectrum, check_mutual_information, tv_bound, tv_uniform_vs_noisy_parities,
};
use mixlab::verification::{
    verify_spectrum_single_sq, wilson_interval, AdversarialProver, HonestProver, RejectReason, Setting, Strategy,
    Verdict, VerifyParams, Z_99,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn mixture_law() -> Outcome {
    let start = Instant::now();
    let mut r = rng(101);
    let mut worst = 0.0f64;
    for n in 1..=3 {
        for _ in 0..50 {
            let d = random_phi(n, &mut r);
            let law = FourierLaw::for_variant(&d, SamplerVariant::Mixture).unwrap();
            for (a, b) in law.law.values().iter().zip(brute_force_mixture_law(&d)) {
                worst = worst.max((a - b).abs());
            }
        }
    }
    let elapsed = start.elapsed();
    outcome(
        worst <= 1e-12 && elapsed < Duration::from_secs(10),
        format!("max |diff| {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn noisy_law() -> Outcome {
    let mut worst = 0.0f64;
    for n in 2..=3 {
        for eta in [0.0, 0.1, 0.25, 0.4] {
            for s in BitString::all(n).unwrap() {
                let d = LabeledDistribution::parity(&s, eta).unwrap();
                let g = naive_transform(&DenseTable::character(&s).into_values());
                let floor = (4.0 * eta - 4.0 * eta * eta) / (1u64 << n) as f64;
                let closed: Vec<f64> = g.iter().map(|c| floor + (1.0 - 2.0 * eta).powi(2) * c * c).collect();
                let brute = brute_force_mixture_law(&d);
                let library = FourierLaw::for_variant(&d, SamplerVariant::Mixture).unwrap();
                for ((a, b), c) in closed.iter().zip(&brute).zip(library.law.values()) {
                    worst = worst.max((a - b).abs()).max((c - b).abs());
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("max |diff| {worst:.2e}"))
}

fn qsq_truth() -> Outcome {
    let mut r = rng(103);
    let mut worst = 0.0f64;
    let mut checked = 0;
    for n in 1..=3 {
        for _ in 0..10 {
            let d = random_phi(n, &mut r);
            for k in 0..=n {
                for prefix in 0..1u64 << k {
                    let truth = prefix_weight_truth(&d, &PrefixObservable::new(k, prefix)).unwrap();
                    worst = worst.max((truth - statevector_prefix_weight(&d, k, prefix)).abs());
                    checked += 1;
                }
            }
        }
    }
    outcome(worst <= 1e-12, format!("{checked} prefixes, max |diff| {worst:.2e}"))
}

fn dkw() -> Outcome {
    let start = Instant::now();
    let mut r = rng(104);
    let raw: Vec<f64> = (0..64).map(|_| r.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let law: Vec<f64> = raw.iter().map(|p| p / total).collect();
    let m = dkw_sample_size(0.1, 0.05) as usize;
    let bad = (0..1000)
        .filter(|_| dkw_estimate(&draw_from(&law, 6, m, &mut r), 0.1, 0.05).unwrap().linf_error(&law) > 0.1)
        .count();
    let elapsed = start.elapsed();
    outcome(
        bad <= 60 && elapsed < Duration::from_secs(30),
        format!("m = {m}, {bad}/1000 exceed tau, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn goldreich_levin() -> Outcome {
    let mut r = rng(105);
    let mut violations = 0;
    for eps in [0.3, 0.5] {
        for _ in 0..500 {
            let d = LabeledDistribution::from_spectrum(&random_valid_spectrum(8, 6, &mut r)).unwrap();
            let mut ledger = OracleLedger::new();
            let list = goldreich_levin_qsq(&d, eps, GlScope::Distributional, &SqPolicy::Exact, &mut r, &mut ledger)
                .unwrap()
                .list;
            violations += d.spectrum().iter().filter(|(s, c)| c.abs() >= eps && !list.contains(s)).count();
            violations += list.iter().filter(|s| d.coefficient(s).abs() < eps / 2.0).count();
        }
    }
    outcome(violations == 0, format!("{violations} violations over 1000 spectra"))
}

fn config(id: &str, kind: ExperimentKind, grid: Grid, trials: u64, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        id: id.into(),
        kind,
        instance: InstanceSpec::NoisyParity { s: None },
        grid,
        trials,
        seed,
        workers: 4,
        output: None,
        record_wall_time: false,
    }
}

fn verification_grid() -> Grid {
    Grid {
        n: vec![8],
        eps: vec![0.3],
        delta: vec![0.1],
        theta: vec![0.6],
        a2: vec![0.36],
        b2: vec![0.36],
        k: vec![1],
        eta: vec![0.2],
    }
}

fn parity_learning() -> Outcome {
    let grid = Grid { n: vec![10], eps: vec![0.1], delta: vec![0.05], eta: vec![0.2], ..Grid::default() };
    let rows = run_experiment(&config(
        "parity",
        ExperimentKind::ParityLearning { source: Default::default() },
        grid,
        200,
        106,
    ))
    .unwrap();
    let good = rows.iter().filter(|r| r.risk.is_some_and(|risk| risk <= 0.3 + 1e-12)).count();
    let within = rows.iter().filter(|r| r.within_bounds == Some(true)).count();
    let max_copies = rows.iter().map(|r| r.copies).max().unwrap_or(0);
    outcome(
        good >= 180 && within == rows.len(),
        format!("risk <= 0.3 in {good}/200, copy bound held in {within}/200 (max {max_copies} copies)"),
    )
}

fn verification_kind(prover: ProverSpec) -> ExperimentKind {
    ExperimentKind::Verification {
        protocol: ProtocolKind::Parity,
        setting: Setting::DistributionalExamples,
        prover,
        sq_policy: PolicySpec::Exact,
    }
}

fn completeness() -> Outcome {
    let rows =
        run_experiment(&config("completeness", verification_kind(ProverSpec::Honest), verification_grid(), 200, 107))
            .unwrap();
    let good = rows.iter().filter(|r| r.accepted == Some(true) && r.good == Some(true)).count() as u64;
    let (lo, hi) = wilson_interval(good, 200, Z_99);
    let rate = good as f64 / 200.0;
    outcome(rate >= 0.85 && hi >= 0.9, format!("accept-and-good {good}/200, Wilson 99% [{lo:.3}, {hi:.3}]"))
}

fn soundness() -> Outcome {
    let suite =
        [Strategy::DropHeaviest, Strategy::JunkPad, Strategy::Oversize, Strategy::CoefficientSwap, Strategy::Empty];
    let mut pass = true;
    let mut parts = Vec::new();
    for strategy in suite {
        let kind = verification_kind(ProverSpec::Adversary(strategy));
        let rows = run_experiment(&config("soundness", kind, verification_grid(), 200, 108)).unwrap();
        let bad = rows.iter().filter(|r| r.accepted == Some(true) && r.good == Some(false)).count();
        let failed = rows.iter().filter(|r| r.status == TrialStatus::Failed).count();
        let rate = bad as f64 / 200.0;
        pass &= rate <= 0.1 && failed == 0;
        if strategy == Strategy::Oversize {
            let rejected = rows.iter().filter(|r| r.verdict.as_deref() == Some("reject:oversized")).count();
            pass &= rejected == rows.len();
            parts.push(format!("{}: bad {bad}/200, oversized-rejected {rejected}/200", strategy.name()));
        } else {
            parts.push(format!("{}: bad {bad}/200", strategy.name()));
        }
    }
    outcome(pass, parts.join("; "))
}

fn single_sq() -> Outcome {
    let s: BitString = "10011010".parse().unwrap();
    let d = LabeledDistribution::parity(&s, 0.0).unwrap();
    let p = VerifyParams { eps: 0.3, delta: 0.1, theta: 1.0, a2: 1.0, b2: 1.0 };
    let trials = 200u64;
    let mut accepted = 0;
    let mut inflate_rejected = 0;
    for seed in 0..trials {
        let mut r = rng(10_900 + seed);
        let (verdict, _) =
            verify_spectrum_single_sq(&d, &p, &HonestProver::default(), &SqPolicy::UniformNoise, &mut r).unwrap();
        accepted += u64::from(verdict.is_accept());
        let inflate = AdversarialProver::new(Strategy::Inflate { amount: 1.5 * p.eps });
        let (verdict, _) = verify_spectrum_single_sq(&d, &p, &inflate, &SqPolicy::Exact, &mut r).unwrap();
        inflate_rejected += u64::from(verdict == Verdict::Reject { reason: RejectReason::InnerProductTest });
    }
    let (_, hi) = wilson_interval(accepted, trials, Z_99);
    outcome(
        hi >= 1.0 - p.delta && inflate_rejected == trials,
        format!(
            "honest accepted {accepted}/{trials} (Wilson upper {hi:.3}), inflate rejected {inflate_rejected}/{trials}"
        ),
    )
}

fn theory() -> Outcome {
    let mut failures = Vec::new();
    let mut records = 0;
    for d in 2..=8 {
        let reports = [
            check_average_spectrum(d).unwrap(),
            check_instance_spectrum(d, 0.05).unwrap(),
            check_instance_spectrum(d, 0.2).unwrap(),
            check_mutual_information(d, 0.005).unwrap(),
        ];
        for rep in &reports {
            records += rep.records.len();
            failures.extend(rep.failures().map(|f| format!("{}:{}", rep.check, f.quantity)));
        }
    }
    outcome(failures.is_empty(), format!("{records} records, failures: {failures:?}"))
}

fn fixture_path() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/tv.json")
}

fn tv() -> Outcome {
    let n = 6;
    let mut values = serde_json::Map::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [1, 2] {
        let clean = tv_uniform_vs_noisy_parities(n, m, 0.0).unwrap();
        let noisy = tv_uniform_vs_noisy_parities(n, m, 0.1).unwrap();
        let bound = tv_bound(n, m);
        pass &= clean <= bound + 1e-15 && noisy <= clean + 1e-15;
        parts.push(format!("m={m}: TV0 {clean:.6} <= {bound:.6}, TV0.1 {noisy:.6}"));
        values.insert(format!("n6_m{m}_eta0"), clean.into());
        values.insert(format!("n6_m{m}_eta0.1"), noisy.into());
    }
    let path = fixture_path();
    match std::fs::read_to_string(&path) {
        Ok(text) => {
            let archived: serde_json::Map<String, serde_json::Value> = serde_json::from_str(&text).unwrap();
            for (key, v) in &values {
                let want = archived.get(key).and_then(|a| a.as_f64());
                let ok = want.is_some_and(|w| (w - v.as_f64().unwrap()).abs() <= 1e-12);
                pass &= ok;
                if !ok {
                    parts.push(format!("{key} differs from fixture {want:?}"));
                }
            }
            parts.push("fixture matched".into());
        }
        Err(_) => {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            let text = serde_json::to_string_pretty(&serde_json::Value::Object(values)).unwrap();
            std::fs::write(&path, text + "\n").unwrap();
            parts.push(format!("fixture written to {}", path.display()));
        }
    }
    outcome(pass, parts.join("; "))
}

fn encode(rows: &[ResultRow]) -> (Vec<u8>, Vec<u8>) {
    let (mut csv, mut json) = (Vec::new(), Vec::new());
    write_rows(rows, OutputFormat::Csv, &mut csv).unwrap();
    write_rows(rows, OutputFormat::Json, &mut json).unwrap();
    (csv, json)
}

fn determinism() -> Outcome {
    let grid = Grid { n: vec![8, 9], eps: vec![0.3, 0.4], ..verification_grid() };
    let mut pass = true;
    let mut sizes = Vec::new();
    for kind in [
        verification_kind(ProverSpec::Honest),
        verification_kind(ProverSpec::Adversary(Strategy::JunkPad)),
        ExperimentKind::ParityLearning { source: Default::default() },
    ] {
        let mut cfg = config("determinism", kind, grid.clone(), 10, 112);
        let reference = encode(&run_experiment(&ExperimentConfig { workers: 1, ..cfg.clone() }).unwrap());
        for workers in [1, 2, 4, 8] {
            cfg.workers = workers;
            pass &= encode(&run_experiment(&cfg).unwrap()) == reference;
        }
        sizes.push(reference.0.len());
    }
    outcome(pass, format!("workers 1/2/4/8 byte-identical ({sizes:?} CSV bytes)"))
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 12] = [
        ("mixture-sampling law vs function enumeration", mixture_law),
        ("noisy-law closed form vs brute force", noisy_law),
        ("QSQ prefix weight vs state vector", qsq_truth),
        ("DKW exceedance rate", dkw),
        ("Goldreich-Levin list properties", goldreich_levin),
        ("parity learning end to end", parity_learning),
        ("verification completeness", completeness),
        ("verification soundness", soundness),
        ("single-SQ protocol", single_sq),
        ("theory closed forms", theory),
        ("TV bound and fixtures", tv),
        ("determinism across worker counts", determinism),
    ];
    let mut passed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = run();
        passed += usize::from(o.pass);
        println!(
            "criterion {:>2} {}: {} ({}; {:.1}s)",
            i + 1,
            name,
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {passed}/{} criteria passed", criteria.len());
    if passed != criteria.len() {
        std::process::exit(1);
    }
}

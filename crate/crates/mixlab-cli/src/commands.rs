use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use mixlab::distribution::{brute_force_opt, draw_sample, BenchmarkClass, DistributionFile, LabeledDistribution};
use mixlab::estimation::{approximate_spectrum, NoisyKind, SpectrumSource};
use mixlab::experiments::{self, good_rate, ExperimentConfig, OutputFormat, OutputSpec, TrialStatus};
use mixlab::fourier::BitString;
use mixlab::learners::{evaluate, learn_exact_sparse, learn_fourier_sparse, learn_parity, SparseVariant};
use mixlab::oracles::{FourierSampler, OracleLedger, SqPolicy};
use mixlab::theory::{
    check_average_spectrum, check_instance_spectrum, check_mutual_information, tv_bound, tv_uniform_vs_noisy_parities,
    CheckReport, HardInstanceState,
};
use mixlab::verification::{
    replay, verify_protocol, AdversarialProver, HonestProver, Protocol, Prover, Setting, Strategy, Verdict,
    VerifyParams,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde_json::json;

use crate::args::*;
use crate::error::{usage, CliError, Result};

const DEFAULT_N: usize = 8;
const DEFAULT_ETA: f64 = 0.2;

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    let g = &cli.global;
    let mut rng = ChaCha20Rng::seed_from_u64(g.seed);
    match &cli.command {
        Command::Spectrum { instance, approximate, source } => {
            let d = load_instance(g, instance, &mut rng)?;
            if *approximate {
                let source = resolve_source(*source, &d)?;
                let mut ledger = OracleLedger::new();
                let est = approximate_spectrum(&d, source, eps(g), delta(g), &mut rng, &mut ledger)?;
                emit(g, &json!({"estimate": est, "ledger": ledger.counts()}))?;
            } else {
                emit(g, &json!({"spectrum": d.spectrum(), "weight": d.weight()}))?;
            }
        }
        Command::Sample { instance, kind, count, source } => {
            let d = load_instance(g, instance, &mut rng)?;
            let mut ledger = OracleLedger::new();
            let mut lines = Vec::new();
            match kind {
                SampleKind::Classical => {
                    for _ in 0..*count {
                        lines.push(serde_json::to_string(&draw_sample(&d, &mut rng)).map_err(fail)?);
                    }
                }
                SampleKind::Quantum => {
                    let sampler = FourierSampler::new(&d, resolve_source(*source, &d)?.variant()).map_err(fail)?;
                    for _ in 0..*count {
                        lines.push(json!({"s": sampler.sample(&mut rng, &mut ledger)}).to_string());
                    }
                }
            }
            write_lines(g.out.as_deref(), &lines)?;
        }
        Command::Learn { learner, instance, source, variant } => {
            let d = load_instance(g, instance, &mut rng)?;
            let mut ledger = OracleLedger::new();
            let out = match learner {
                Learner::Parity => {
                    learn_parity(&d, resolve_source(*source, &d)?, eps(g), delta(g), &mut rng, &mut ledger)?
                }
                Learner::Sparse => {
                    let variant = match variant {
                        Variant::Randomized => SparseVariant::Randomized,
                        Variant::Thresholded => SparseVariant::Thresholded,
                        Variant::L2 => SparseVariant::L2,
                    };
                    let source = resolve_source(*source, &d)?;
                    learn_fourier_sparse(&d, source, k(g), eps(g), delta(g), variant, &mut rng, &mut ledger)?
                }
                Learner::Exact => {
                    if !d.is_functional() {
                        return Err(usage("exact sparse learning needs a functional (noiseless) instance"));
                    }
                    learn_exact_sparse(&d, k(g), delta(g), &mut rng, &mut ledger)?
                }
            };
            let risk = evaluate(&out.hypothesis, &d)?;
            let opt = brute_force_opt(&d, BenchmarkClass::Parities).map_err(fail)?.0;
            emit(
                g,
                &json!({"hypothesis": out.hypothesis, "risk": risk, "parity_opt": opt, "ledger": ledger.counts()}),
            )?;
        }
        Command::Verify { protocol, setting, instance, adversary, amount, sq_policy } => {
            let setting: Setting = setting.parse().map_err(CliError::Usage)?;
            let protocol = match protocol {
                ProtocolArg::Parity => Protocol::Parity,
                ProtocolArg::Sparse => Protocol::Sparse { k: k(g) },
                ProtocolArg::Spectrum => Protocol::Spectrum,
                ProtocolArg::SingleSq => Protocol::SingleSq,
            };
            if protocol == Protocol::SingleSq && setting != Setting::DistributionalExamples {
                return Err(usage("single-sq runs in the distributional-examples setting only"));
            }
            let d = load_instance(g, instance, &mut rng)?;
            let params = verify_params(g);
            let honest = HonestProver::default();
            let adversarial =
                adversary.map(|a| AdversarialProver::new(strategy(a, amount.unwrap_or(1.5 * params.eps))));
            let prover: &dyn Prover = match &adversarial {
                Some(a) => a,
                None => &honest,
            };
            let policy = match sq_policy {
                Policy::Exact => SqPolicy::Exact,
                Policy::UniformNoise => SqPolicy::UniformNoise,
            };
            let (verdict, transcript) = verify_protocol(protocol, setting, &d, &params, prover, &policy, &mut rng)?;
            let path = g.out.clone().unwrap_or_else(|| PathBuf::from("transcript.jsonl"));
            fs::write(&path, transcript.to_jsonl())?;
            println!("verdict: {}", verdict_text(&verdict));
            if let Some(s) = transcript.statistic() {
                println!("statistic: {s}");
            }
            println!("transcript: {}", path.display());
        }
        Command::Experiment { name, config, workers } => return experiment(g, name, config, *workers),
        Command::Check { what: CheckCommand::Theory { name, d, m } } => return theory(g, *name, *d, *m),
        Command::Replay { transcript } => {
            let text = fs::read_to_string(transcript).map_err(|e| usage(format!("{}: {e}", transcript.display())))?;
            let t = mixlab::verification::Transcript::from_jsonl(&text)?;
            let report = replay(&t)?;
            println!("recorded: {}", verdict_text(&report.recorded));
            println!("recomputed: {}", verdict_text(&report.recomputed));
            if report.matches() {
                println!("MATCH");
            } else {
                println!("MISMATCH");
                return Ok(ExitCode::from(1));
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn fail(e: impl std::fmt::Display) -> CliError {
    CliError::Failed(e.to_string())
}

fn eps(g: &Global) -> f64 {
    g.eps.unwrap_or(0.3)
}

fn delta(g: &Global) -> f64 {
    g.delta.unwrap_or(0.1)
}

fn k(g: &Global) -> usize {
    g.k.unwrap_or(1)
}

fn verify_params(g: &Global) -> VerifyParams {
    let theta = g.theta.unwrap_or(0.6);
    VerifyParams {
        eps: eps(g),
        delta: delta(g),
        theta,
        a2: g.a2.unwrap_or(theta * theta),
        b2: g.b2.unwrap_or(theta * theta),
    }
}

fn strategy(a: Adversary, amount: f64) -> Strategy {
    match a {
        Adversary::DropHeaviest => Strategy::DropHeaviest,
        Adversary::JunkPad => Strategy::JunkPad,
        Adversary::Oversize => Strategy::Oversize,
        Adversary::CoefficientSwap => Strategy::CoefficientSwap,
        Adversary::Empty => Strategy::Empty,
        Adversary::Inflate => Strategy::Inflate { amount },
    }
}

fn verdict_text(v: &Verdict) -> String {
    match v {
        Verdict::Accept { hypothesis } => {
            format!("Accept {}", serde_json::to_string(hypothesis).unwrap_or_default())
        }
        Verdict::Reject { reason } => format!("Reject {}", serde_json::to_string(reason).unwrap_or_default()),
    }
}

fn load_instance(g: &Global, args: &InstanceArgs, rng: &mut ChaCha20Rng) -> Result<LabeledDistribution> {
    if let Some(path) = &args.input {
        let text = fs::read_to_string(path).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let file: DistributionFile =
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        let d = file.build().map_err(|e| usage(e.to_string()))?;
        if let Some(n) = g.n {
            if n != d.n() {
                return Err(usage(format!("--n {n} disagrees with the file's n = {}", d.n())));
            }
        }
        return Ok(d);
    }
    let eta = g.eta.unwrap_or(DEFAULT_ETA);
    let s = match &args.parity {
        Some(text) => text.parse::<BitString>().map_err(|e| usage(e.to_string()))?,
        None => {
            let n = g.n.unwrap_or(DEFAULT_N);
            if !(1..=24).contains(&n) {
                return Err(usage(format!("n = {n} outside 1..=24")));
            }
            BitString::new(n, rng.random_range(1..1u64 << n)).map_err(|e| usage(e.to_string()))?
        }
    };
    LabeledDistribution::parity(&s, eta).map_err(|e| usage(e.to_string()))
}

fn resolve_source(source: Source, d: &LabeledDistribution) -> Result<SpectrumSource> {
    match source {
        Source::Natural => Ok(SpectrumSource::for_distribution(d)),
        Source::Mixture => Ok(SpectrumSource::Mixture),
        Source::NoisyPure => match d.noise_rate() {
            Some(eta) => Ok(SpectrumSource::Noisy { kind: NoisyKind::Pure, eta }),
            None => Err(usage("the noisy-pure source needs a noisy-function instance")),
        },
    }
}

fn emit(g: &Global, value: &serde_json::Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(fail)?;
    match &g.out {
        Some(path) => {
            fs::write(path, text + "\n")?;
            println!("wrote {}", path.display());
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn write_lines(out: Option<&Path>, lines: &[String]) -> Result<()> {
    let mut w: Box<dyn Write> = match out {
        Some(path) => Box::new(BufWriter::new(fs::File::create(path)?)),
        None => Box::new(io::stdout().lock()),
    };
    for line in lines {
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn experiment(g: &Global, name: &str, path: &Path, workers: Option<usize>) -> Result<ExitCode> {
    let mut config = ExperimentConfig::load(path).map_err(|e| match e {
        experiments::ExperimentError::Io(io) => usage(format!("{}: {io}", path.display())),
        other => other.into(),
    })?;
    if config.id.is_empty() {
        config.id = name.to_string();
    } else if config.id != name {
        return Err(usage(format!("config {} defines experiment `{}`, not `{name}`", path.display(), config.id)));
    }
    if let Some(t) = g.trials {
        config.trials = t;
    }
    if g.seed != 0 {
        config.seed = g.seed;
    }
    if let Some(w) = workers {
        config.workers = w;
    }
    let format = g.format.map(|f| match f {
        Format::Csv => OutputFormat::Csv,
        Format::Json => OutputFormat::Json,
    });
    if let Some(p) = &g.out {
        config.output = Some(OutputSpec { path: p.clone(), format: format.unwrap_or_default() });
    } else if let (Some(out), Some(f)) = (config.output.as_mut(), format) {
        out.format = f;
    }
    let rows = experiments::run_and_write(&config)?;
    if config.output.is_none() {
        experiments::write_rows(&rows, format.unwrap_or_default(), io::stdout().lock())?;
    }
    let failed = rows.iter().filter(|r| r.status == TrialStatus::Failed).count();
    let (good, total) = good_rate(&rows);
    eprintln!("{}: {total} rows, {good} good, {failed} failed", config.id);
    Ok(ExitCode::SUCCESS)
}

fn show(v: f64) -> String {
    let r = (v * 1e9).round() / 1e9;
    if r == 0.0 {
        "0".into()
    } else {
        format!("{r}")
    }
}

fn print_report(report: &CheckReport) {
    for r in &report.records {
        println!(
            "  {:<28} formula {:<16} numeric {:<16} |delta| {:.3e} (tol {:.1e}) {}",
            r.quantity,
            show(r.formula),
            show(r.numeric),
            r.delta,
            r.tolerance,
            if r.pass { "ok" } else { "FAIL" }
        );
    }
}

fn finish(pass: bool) -> ExitCode {
    println!("{}", if pass { "PASS" } else { "FAIL" });
    if pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn theory(g: &Global, name: TheoryCheck, d: usize, m: usize) -> Result<ExitCode> {
    let theory_eps = g.eps.unwrap_or(0.05);
    let report = match name {
        TheoryCheck::AverageSpectrum => {
            let avg = HardInstanceState::average(d)?;
            let lambda: Vec<String> = avg.eigenvalues().into_iter().map(show).collect();
            println!("lambda={{{}}}", lambda.join(","));
            println!("S={} bits", show(avg.entropy()));
            check_average_spectrum(d)?
        }
        TheoryCheck::InstanceSpectrum => check_instance_spectrum(d, theory_eps)?,
        TheoryCheck::MutualInformation => check_mutual_information(d, theory_eps)?,
        TheoryCheck::Tv => {
            let n = g.n.unwrap_or(6);
            let eta = g.eta.unwrap_or(0.0);
            let tv = tv_uniform_vs_noisy_parities(n, m, eta)?;
            let bound = tv_bound(n, m);
            println!("n={n} m={m} eta={eta}: TV={tv} bound={bound}");
            return Ok(finish(tv <= bound + 1e-12));
        }
    };
    println!("{}", report.check);
    print_report(&report);
    Ok(finish(report.pass()))
}

//! Subcommand implementations.

use std::fmt::Write as _;
use std::path::Path;

use anyhow::anyhow;
use apuf::dataset::{import_table_rows, indexed_challenge, PufKind, SimulatedPuf, SimulationSpec};
use apuf::seed::derive_seed;
use apuf::{metrics, ArbiterChain, AttackReport, Challenge, CrpDataset, MetricsReport};
use rayon::prelude::*;

use crate::config::RunConfig;

/// Command failure, carrying the exit code class.
#[derive(Debug)]
pub enum Failure {
    /// Bad flags or config values (exit 1).
    Usage(anyhow::Error),
    /// Unreadable or malformed data, I/O (exit 2).
    Data(anyhow::Error),
    /// The linear model disagreed with the simulator (exit 3).
    Mismatch(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Mismatch(_) => 3,
        }
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Failure::Usage(e) => write!(f, "error: {e:#}"),
            Failure::Data(e) => write!(f, "data error: {e:#}"),
            Failure::Mismatch(m) => write!(f, "oracle mismatch: {m}"),
        }
    }
}

impl From<apuf::Error> for Failure {
    fn from(e: apuf::Error) -> Self {
        match e {
            apuf::Error::InvalidParameter(_) => Failure::Usage(e.into()),
            _ => Failure::Data(e.into()),
        }
    }
}

pub type Outcome = Result<(), Failure>;

fn usage(msg: impl std::fmt::Display) -> Failure {
    Failure::Usage(anyhow!("{msg}"))
}

// Sub-seed slots of the master seed.
const PUF_SLOT: u64 = 0;
const CHALLENGE_SLOT: u64 = 1;
const NOISE_SLOT: u64 = 2;
const SPLIT_SLOT: u64 = 3;

fn sub_seed(cfg: &RunConfig, slot: u64) -> u64 {
    derive_seed(cfg.master_seed(), slot)
}

fn puf_kind(cfg: &RunConfig) -> PufKind {
    if cfg.chain_count() == 1 {
        PufKind::Classical {
            stages: cfg.stages(),
        }
    } else {
        PufKind::MultiBit {
            width: cfg.stages(),
        }
    }
}

fn simulation(cfg: &RunConfig, count: usize, puf_seed: u64) -> Result<SimulationSpec, Failure> {
    let noise_sigma = cfg.noise();
    Ok(SimulationSpec {
        kind: puf_kind(cfg),
        params: cfg.delay_params().map_err(Failure::Usage)?,
        puf_seed,
        noise_sigma,
        challenge_seed: sub_seed(cfg, CHALLENGE_SLOT),
        noise_seed: (noise_sigma > 0.0).then(|| sub_seed(cfg, NOISE_SLOT)),
        count,
    })
}

fn write_output(path: &Path, text: &str) -> Outcome {
    std::fs::write(path, text)
        .map_err(|e| Failure::Data(anyhow!("writing {}: {e}", path.display())))
}

fn describe_kind(kind: PufKind) -> String {
    match kind {
        PufKind::Classical { stages } => format!("classical arbiter chain, {stages} stages"),
        PufKind::MultiBit { width } => format!("{width} parallel chains of {width} stages"),
    }
}

pub fn generate(cfg: &RunConfig) -> Outcome {
    let out = cfg
        .output
        .as_ref()
        .ok_or_else(|| usage("generate needs an output path (-o PATH)"))?;
    let spec = simulation(cfg, cfg.crp_count(), sub_seed(cfg, PUF_SLOT))?;
    let ds = spec.generate()?;
    ds.write(out)?;
    println!("device: {}", describe_kind(spec.kind));
    println!(
        "widths: challenge {} bits, response {} bits",
        ds.challenge_width(),
        ds.response_width()
    );
    print!(
        "seeds: master {} puf {} challenge {}",
        cfg.master_seed(),
        spec.puf_seed,
        spec.challenge_seed
    );
    match spec.noise_seed {
        Some(s) => println!(" noise {s} (sigma {})", spec.noise_sigma),
        None => println!(),
    }
    println!("wrote {} CRPs to {}", ds.len(), out.display());
    Ok(())
}

fn load_dataset(cfg: &RunConfig, path: &Path, rows: bool) -> Result<CrpDataset, Failure> {
    if !rows {
        return Ok(CrpDataset::read(path)?);
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Data(anyhow!("reading {}: {e}", path.display())))?;
    let (ds, rejected) = import_table_rows(&text, cfg.stages(), cfg.chain_count())?;
    for r in &rejected {
        eprintln!("skipped {}: {r}", path.display());
    }
    eprintln!("imported {} rows, skipped {}", ds.len(), rejected.len());
    Ok(ds)
}

fn report_table(report: &AttackReport) -> String {
    let pct = |r: f64| format!("{:.2} %", 100.0 * r);
    let lo = report
        .per_bit_rate
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let hi = report
        .per_bit_rate
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut s = String::new();
    let mut row = |k: &str, v: String| writeln!(s, "{k:<16}{v}").unwrap();
    row("crps", report.crp_count.to_string());
    row("test fraction", report.test_fraction.to_string());
    row(
        "train / test",
        format!("{} / {}", report.train_size, report.test_size),
    );
    row("feature map", report.kind.to_string());
    row("mean rate", pct(report.mean_rate));
    row("word exact", pct(report.word_exact_rate));
    row("bit rates", format!("{} .. {}", pct(lo), pct(hi)));
    s
}

pub fn attack(cfg: &RunConfig, dataset: &Path, rows: bool) -> Outcome {
    let ds = load_dataset(cfg, dataset, rows)?;
    let hp = cfg.hyper_params().map_err(Failure::Usage)?;
    let report = apuf::attack::attack_multibit(
        &ds,
        cfg.feature_map(),
        cfg.test_fraction(),
        &hp,
        sub_seed(cfg, SPLIT_SLOT),
    )?;
    print!("{}", report_table(&report));
    if let Some(out) = &cfg.output {
        let csv = format!(
            "{}{}\n{}\n",
            cfg.echo(),
            AttackReport::CSV_HEADER,
            report.csv_row()
        );
        write_output(out, &csv)?;
    }
    Ok(())
}

/// Rows are CRP counts, columns are test fractions, cells in percent.
fn sweep_table(counts: &[usize], fractions: &[f64], reports: &[AttackReport]) -> String {
    let mut s = String::new();
    write!(s, "{:<8}", "CRPs").unwrap();
    for f in fractions {
        write!(s, "{:>8}", f).unwrap();
    }
    s.push('\n');
    for (i, count) in counts.iter().enumerate() {
        write!(s, "{count:<8}").unwrap();
        for r in &reports[i * fractions.len()..(i + 1) * fractions.len()] {
            write!(s, "{:>8.2}", 100.0 * r.mean_rate).unwrap();
        }
        s.push('\n');
    }
    let mean = reports.iter().map(|r| r.mean_rate).sum::<f64>() / reports.len() as f64;
    writeln!(s, "mean prediction rate {:.2} %", 100.0 * mean).unwrap();
    s
}

pub fn sweep(cfg: &RunConfig) -> Outcome {
    let counts = cfg.crp_counts();
    let fractions = cfg.fractions();
    let hp = cfg.hyper_params().map_err(Failure::Usage)?;
    let largest = *counts.iter().max().expect("counts list is never empty");
    // One device and one CRP stream; smaller counts are prefixes of it.
    let ds = simulation(cfg, largest, sub_seed(cfg, PUF_SLOT))?.generate()?;
    let split_seed = sub_seed(cfg, SPLIT_SLOT);
    let mut reports = Vec::with_capacity(counts.len() * fractions.len());
    for (i, &count) in counts.iter().enumerate() {
        let slice = ds.prefix(count);
        for (j, &f) in fractions.iter().enumerate() {
            let cell = (i * fractions.len() + j) as u64;
            reports.push(apuf::attack::attack_multibit(
                &slice,
                cfg.feature_map(),
                f,
                &hp,
                derive_seed(split_seed, cell),
            )?);
        }
    }
    print!("{}", sweep_table(&counts, &fractions, &reports));
    let mut csv = cfg.echo();
    csv.push_str(AttackReport::CSV_HEADER);
    csv.push('\n');
    for r in &reports {
        csv.push_str(&r.csv_row());
        csv.push('\n');
    }
    match &cfg.output {
        Some(out) => write_output(out, &csv),
        None => {
            print!("{csv}");
            Ok(())
        }
    }
}

fn metrics_instances(cfg: &RunConfig, k: usize) -> Result<Vec<SimulatedPuf>, Failure> {
    let base = sub_seed(cfg, PUF_SLOT);
    (0..k)
        .map(|i| Ok(simulation(cfg, 1, derive_seed(base, i as u64))?.build_puf()?))
        .collect()
}

pub fn metrics(cfg: &RunConfig) -> Outcome {
    let k = cfg.instance_count();
    if k < 2 {
        return Err(usage(format!(
            "uniqueness and bit aliasing need at least two instances, got {k}"
        )));
    }
    let t = cfg.challenge_count();
    let r = cfg.repetition_count();
    let instances = metrics_instances(cfg, k)?;
    let challenge_seed = sub_seed(cfg, CHALLENGE_SLOT);
    let challenges: Vec<Challenge> = (0..t as u64)
        .map(|i| indexed_challenge(cfg.stages(), challenge_seed, i))
        .collect();
    let noise_seed = sub_seed(cfg, NOISE_SLOT);

    let mut uniformity = 0.0;
    let mut reliability = 0.0;
    for (i, p) in instances.iter().enumerate() {
        uniformity += metrics::uniformity(p, &challenges)?;
        reliability += metrics::reliability(p, &challenges, r, derive_seed(noise_seed, i as u64))?;
    }
    let report = MetricsReport {
        uniformity: uniformity / k as f64,
        uniqueness: metrics::uniqueness(&instances, &challenges)?,
        reliability: reliability / k as f64,
        bit_aliasing: metrics::bit_aliasing(&instances, &challenges)?,
        instances: k,
        challenges: t,
        repetitions: r,
        noise_sigma: cfg.noise(),
        puf_seed: sub_seed(cfg, PUF_SLOT),
        challenge_seed,
        noise_seed,
    };
    println!("{report}");
    if let Some(out) = &cfg.output {
        let csv = format!(
            "{}{}\n{}\n",
            cfg.echo(),
            MetricsReport::CSV_HEADER,
            report.csv_row()
        );
        write_output(out, &csv)?;
    }
    Ok(())
}

/// Widths checked exhaustively by default.
const EXHAUSTIVE_WIDTHS: std::ops::RangeInclusive<usize> = 1..=12;
/// Width checked on random challenges by default.
const RANDOM_WIDTH: usize = 64;
/// Largest width still enumerated exhaustively.
const MAX_EXHAUSTIVE: usize = 16;

struct OracleMismatch {
    n: usize,
    seed: u64,
    challenge: Challenge,
    linear: bool,
    brute: bool,
}

struct ChainCheck {
    checks: u64,
    mismatches: Vec<OracleMismatch>,
}

fn check_chain(
    cfg: &RunConfig,
    n: usize,
    index: u64,
    random_challenges: usize,
    inject_fault: bool,
) -> Result<ChainCheck, Failure> {
    let params = cfg.delay_params().map_err(Failure::Usage)?;
    let seed = derive_seed(derive_seed(sub_seed(cfg, PUF_SLOT), n as u64), index);
    let chain = ArbiterChain::sample(n, params, seed)?;
    let mut model = chain.to_linear();
    if inject_fault {
        model.weights_mut()[n] += 1e6;
    }
    let challenges: Vec<Challenge> = if n <= MAX_EXHAUSTIVE {
        (0..1u64 << n).map(|v| Challenge::from_u64(v, n)).collect()
    } else {
        let cs = derive_seed(derive_seed(sub_seed(cfg, CHALLENGE_SLOT), n as u64), index);
        (0..random_challenges as u64)
            .map(|i| indexed_challenge(n, cs, i))
            .collect()
    };
    let mut mismatches = Vec::new();
    for c in &challenges {
        let (linear, brute) = (model.eval_linear(c)?, chain.eval_brute(c, None)?);
        if linear != brute {
            mismatches.push(OracleMismatch {
                n,
                seed,
                challenge: c.clone(),
                linear,
                brute,
            });
        }
    }
    Ok(ChainCheck {
        checks: challenges.len() as u64,
        mismatches,
    })
}

pub fn oracle_check(cfg: &RunConfig, inject_fault: bool) -> Outcome {
    // An explicit width narrows the run to a single chain unless an
    // instance count is also given.
    let (widths, default_instances): (Vec<usize>, usize) = match cfg.n {
        Some(n) => (vec![n], 1),
        None => (EXHAUSTIVE_WIDTHS.chain([RANDOM_WIDTH]).collect(), 100),
    };
    let instances = cfg.instances.unwrap_or(default_instances);
    let random_challenges = cfg.challenges.unwrap_or(10_000);
    for &n in &widths {
        let how = if n <= MAX_EXHAUSTIVE {
            format!("all {} challenges", 1u64 << n)
        } else {
            format!("{random_challenges} random challenges")
        };
        println!("n={n}: {instances} chains, {how} each");
    }
    let jobs: Vec<(usize, u64)> = widths
        .iter()
        .flat_map(|&n| (0..instances as u64).map(move |j| (n, j)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(n, j)| check_chain(cfg, n, j, random_challenges, inject_fault))
        .collect::<Result<Vec<_>, Failure>>()?;
    let checks: u64 = results.iter().map(|r| r.checks).sum();
    let mismatches: Vec<&OracleMismatch> = results.iter().flat_map(|r| &r.mismatches).collect();
    println!("{} mismatches / {checks} checks", mismatches.len());
    if let Some(first) = mismatches.first() {
        for m in mismatches.iter().take(5) {
            println!(
                "mismatch: n={} seed={} challenge={} linear={} brute={}",
                m.n,
                m.seed,
                m.challenge,
                u8::from(m.linear),
                u8::from(m.brute)
            );
        }
        return Err(Failure::Mismatch(format!(
            "{} of {checks} checks disagree; first at n={} seed={} challenge={}",
            mismatches.len(),
            first.n,
            first.seed,
            first.challenge
        )));
    }
    Ok(())
}

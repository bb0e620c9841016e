//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use apuf::attack::{attack_multibit, bit_labels, loss_and_gradient, sigmoid};
use apuf::dataset::{import_table_rows, indexed_challenge, PufKind};
use apuf::metrics::{reliability, uniformity, uniqueness};
use apuf::seed;
use apuf::{
    BitWord, Challenge, Crp, CrpDataset, DelayParams, FeatureMapKind, FeatureMatrix, LrHyperParams,
    MultiBitPuf, Response, SimulationSpec,
};
use rand::Rng;

type Check = Result<String, String>;
type Criterion<'a> = (&'static str, Box<dyn Fn() -> Check + 'a>);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit_s: f64) -> Result<(), String> {
    ensure(
        elapsed.as_secs_f64() < limit_s,
        format!("took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()),
    )
}

fn apuf_cli(args: &[&str]) -> Result<(Vec<u8>, Vec<u8>), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_apuf"))
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(format!(
            "apuf {args:?} exited with {:?}: {}",
            out.status.code(),
            String::from_utf8_lossy(&out.stderr)
        ));
    }
    Ok((out.stdout, out.stderr))
}

fn oracle_equivalence() -> Check {
    let start = Instant::now();
    let (stdout, _) = apuf_cli(&["oracle-check"])?;
    let elapsed = start.elapsed();
    let text = String::from_utf8_lossy(&stdout);
    // 100 chains at each n = 1..12 exhaustively, then 100 x 10,000 at n = 64.
    let expected: u64 = (1..=12).map(|n| 100u64 << n).sum::<u64>() + 100 * 10_000;
    let summary = format!("0 mismatches / {expected} checks");
    ensure(text.contains(&summary), format!("summary missing: {text}"))?;
    within(elapsed, 20.0)?;
    Ok(format!("{summary} in {:.1} s", elapsed.as_secs_f64()))
}

fn classical_vulnerability() -> Check {
    let start = Instant::now();
    let ds = SimulationSpec {
        kind: PufKind::Classical { stages: 64 },
        params: DelayParams::default(),
        puf_seed: 2024,
        noise_sigma: 0.0,
        challenge_seed: 2025,
        noise_seed: None,
        count: 4920,
    }
    .generate()
    .map_err(|e| e.to_string())?;
    let report = attack_multibit(
        &ds,
        FeatureMapKind::Parity,
        0.15,
        &LrHyperParams::default(),
        7,
    )
    .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();
    ensure(
        report.mean_rate >= 0.95,
        format!("prediction rate {:.4} < 0.95", report.mean_rate),
    )?;
    within(elapsed, 30.0)?;
    Ok(format!(
        "prediction rate {:.4} on {} held-out CRPs in {:.1} s",
        report.mean_rate,
        report.test_size,
        elapsed.as_secs_f64()
    ))
}

fn grid_reproduction(dir: &Path) -> Check {
    let csv = dir.join("grid.csv");
    let start = Instant::now();
    apuf_cli(&[
        "sweep",
        "--n",
        "64",
        "--chains",
        "64",
        "--features",
        "raw",
        "--seed",
        "42",
        "-o",
        csv.to_str().unwrap(),
    ])?;
    let elapsed = start.elapsed();
    let text = std::fs::read_to_string(&csv).map_err(|e| e.to_string())?;
    let rates: Vec<f64> = text
        .lines()
        .filter(|l| !l.starts_with('#') && !l.starts_with("crps"))
        .map(|l| l.split(',').nth(3).unwrap().parse().unwrap())
        .collect();
    ensure(rates.len() == 12, format!("{} grid cells", rates.len()))?;
    let mean = rates.iter().sum::<f64>() / 12.0;
    let (lo, hi) = rates
        .iter()
        .fold((1.0f64, 0.0f64), |(lo, hi), &r| (lo.min(r), hi.max(r)));
    ensure(
        (0.40..=0.65).contains(&lo) && (0.40..=0.65).contains(&hi),
        format!("cell range {lo:.4}..{hi:.4} leaves [0.40, 0.65]"),
    )?;
    ensure(
        (0.45..=0.60).contains(&mean),
        format!("grid mean {mean:.4} outside [0.45, 0.60]"),
    )?;
    within(elapsed, 60.0)?;
    Ok(format!(
        "12 cells in {lo:.4}..{hi:.4}, mean {mean:.4}, in {:.1} s",
        elapsed.as_secs_f64()
    ))
}

/// Regularized cross-entropy evaluated straight from its definition.
fn reference_loss(x: &FeatureMatrix, y: &[u8], theta: &[f64], l2: f64) -> f64 {
    let m = x.rows() as f64;
    let mut total = 0.0;
    for (i, &yi) in y.iter().enumerate() {
        let z: f64 = x.row(i).iter().zip(theta).map(|(a, b)| a * b).sum();
        let p = 1.0 / (1.0 + (-z).exp());
        total -= if yi == 1 { p.ln() } else { (1.0 - p).ln() };
    }
    let ridge: f64 = theta[..theta.len() - 1].iter().map(|w| w * w).sum();
    total / m + l2 / (2.0 * m) * ridge
}

fn numerics() -> Check {
    ensure(sigmoid(0.0) == 0.5, "sigmoid(0) != 0.5")?;
    for z in [-1000.0, 1000.0] {
        let s = sigmoid(z);
        ensure(
            s.is_finite() && (0.0..=1.0).contains(&s),
            format!("sigmoid({z}) = {s}"),
        )?;
    }
    ensure(sigmoid(-1000.0) <= 1e-300, "sigmoid(-1000) not saturated")?;

    let ds = SimulationSpec {
        kind: PufKind::Classical { stages: 32 },
        params: DelayParams::default(),
        puf_seed: 3,
        noise_sigma: 0.0,
        challenge_seed: 4,
        noise_seed: None,
        count: 300,
    }
    .generate()
    .map_err(|e| e.to_string())?;
    let x = FeatureMatrix::from_challenges(
        FeatureMapKind::Parity,
        ds.pairs().iter().map(|p| &p.challenge),
    )
    .map_err(|e| e.to_string())?;
    let y = bit_labels(&ds, 0);
    let mut rng = seed::rng(17);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for point in 0..20 {
        let theta: Vec<f64> = (0..x.cols()).map(|_| rng.random_range(-0.5..0.5)).collect();
        let l2 = if point % 2 == 0 { 0.0 } else { 1.0 };
        let (_, grad) = loss_and_gradient(&x, &y, &theta, l2).map_err(|e| e.to_string())?;
        for j in 0..theta.len() {
            let (mut up, mut down) = (theta.clone(), theta.clone());
            up[j] += h;
            down[j] -= h;
            let fd =
                (reference_loss(&x, &y, &up, l2) - reference_loss(&x, &y, &down, l2)) / (2.0 * h);
            let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-3);
            worst = worst.max(rel);
        }
    }
    ensure(
        worst < 1e-6,
        format!("worst relative gradient error {worst:e}"),
    )?;
    Ok(format!(
        "sigmoid exact at 0 and bounded at |z| = 1000; worst gradient error {worst:.1e} over 20 points"
    ))
}

fn metrics_sanity() -> Check {
    let challenges: Vec<Challenge> = (0..1000).map(|i| indexed_challenge(64, 55, i)).collect();
    let devices: Vec<MultiBitPuf> = (0..50)
        .map(|s| MultiBitPuf::sample(64, DelayParams::default(), 7000 + s))
        .collect::<Result<_, _>>()
        .map_err(|e| e.to_string())?;
    let mut lo = 1.0f64;
    let mut hi = 0.0f64;
    for d in &devices {
        let u = uniformity(d, &challenges).map_err(|e| e.to_string())?;
        lo = lo.min(u);
        hi = hi.max(u);
    }
    ensure(
        lo >= 0.45 && hi <= 0.55,
        format!("uniformity range {lo:.4}..{hi:.4}"),
    )?;
    let uq = uniqueness(&devices, &challenges).map_err(|e| e.to_string())?;
    ensure((0.45..=0.55).contains(&uq), format!("uniqueness {uq:.4}"))?;

    let device = &devices[0];
    let quiet = reliability(device, &challenges, 5, 99).map_err(|e| e.to_string())?;
    ensure(quiet == 1.0, format!("zero-noise reliability {quiet}"))?;
    let mut rel = Vec::new();
    for sigma in [0.01, 0.1, 1.0] {
        let noisy = device
            .clone()
            .with_noise_sigma(sigma)
            .map_err(|e| e.to_string())?;
        rel.push(reliability(&noisy, &challenges, 5, 99).map_err(|e| e.to_string())?);
    }
    ensure(
        rel[0] >= rel[1] && rel[1] >= rel[2],
        format!("reliability not monotone: {rel:?}"),
    )?;
    Ok(format!(
        "uniformity {lo:.4}..{hi:.4}, uniqueness {uq:.4}, reliability 1 / {:.4} / {:.4} / {:.4}",
        rel[0], rel[1], rel[2]
    ))
}

const TABLE: &str = include_str!("../../core/tests/data/printed_rows.txt");

fn format_fidelity() -> Check {
    let mut rng = seed::rng(6);
    for case in 0..1000 {
        let width = rng.random_range(1..=200);
        let word = BitWord::random(width, &mut rng);
        let back = BitWord::parse_hex(&word.to_hex(), width).map_err(|e| e.to_string())?;
        ensure(back == word, format!("word case {case} changed"))?;
    }
    for case in 0..1000 {
        let (cw, rw) = (rng.random_range(1..=80), rng.random_range(1..=80));
        let mut ds = CrpDataset::new(cw, rw).map_err(|e| e.to_string())?;
        for _ in 0..rng.random_range(0..10) {
            ds.push(Crp {
                challenge: Challenge::random(cw, &mut rng),
                response: Response::new(BitWord::random(rw, &mut rng)),
            })
            .map_err(|e| e.to_string())?;
        }
        let back = CrpDataset::from_text(&ds.to_text()).map_err(|e| e.to_string())?;
        ensure(back == ds, format!("dataset case {case} changed"))?;
    }

    let (ds, rejected) = import_table_rows(TABLE, 64, 64).map_err(|e| e.to_string())?;
    let rejected_lines: Vec<usize> = rejected.iter().map(|r| r.line).collect();
    // Lines whose response has 17 hex digits, counted from the raw text.
    let oversized: Vec<usize> = TABLE
        .lines()
        .enumerate()
        .filter(|(_, l)| l.split_whitespace().nth(1).is_some_and(|r| r.len() > 16))
        .map(|(i, _)| i + 1)
        .collect();
    for line in [2, 5, 9] {
        ensure(
            rejected_lines.contains(&line),
            format!("line {line} was not rejected"),
        )?;
    }
    ensure(
        rejected_lines == oversized,
        format!("rejected {rejected_lines:?}, oversized {oversized:?}"),
    )?;
    ensure(
        ds.len() + rejected.len() == TABLE.lines().count(),
        "rows lost during import",
    )?;
    Ok(format!(
        "1000 word and 1000 dataset round trips; table rows rejected at lines {rejected_lines:?}, {} well-formed rows imported",
        ds.len()
    ))
}

fn determinism(dir: &Path) -> Check {
    let ds = dir.join("det-ds.csv");
    let out = dir.join("det-out.csv");
    let (ds_s, out_s) = (ds.to_str().unwrap(), out.to_str().unwrap());
    let commands: Vec<(&str, Vec<&str>, &Path)> = vec![
        (
            "generate",
            vec![
                "generate",
                "--n",
                "64",
                "--count",
                "3000",
                "--seed",
                "9",
                "--noise-sigma",
                "0.05",
                "-o",
                ds_s,
            ],
            &ds,
        ),
        (
            "attack",
            vec!["attack", ds_s, "--test", "0.25", "--seed", "9", "-o", out_s],
            &out,
        ),
        (
            "sweep",
            vec![
                "sweep",
                "--n",
                "32",
                "--counts",
                "400,900",
                "--test-fractions",
                "0.15,0.35",
                "--seed",
                "9",
                "-o",
                out_s,
            ],
            &out,
        ),
        (
            "metrics",
            vec![
                "metrics",
                "--n",
                "32",
                "--instances",
                "8",
                "--challenges",
                "300",
                "--noise-sigma",
                "0.2",
                "--repetitions",
                "3",
                "-o",
                out_s,
            ],
            &out,
        ),
        (
            "oracle-check",
            vec![
                "oracle-check",
                "--n",
                "40",
                "--instances",
                "12",
                "--challenges",
                "500",
            ],
            &out,
        ),
    ];
    for (name, args, artifact) in &commands {
        let mut runs = Vec::new();
        for threads in ["1", "3", "1"] {
            let _ = std::fs::remove_file(artifact);
            let mut full = args.clone();
            full.extend(["--threads", threads]);
            let (stdout, _) = apuf_cli(&full)?;
            let bytes = std::fs::read(artifact).unwrap_or_default();
            runs.push((stdout, bytes));
        }
        ensure(
            runs.windows(2).all(|w| w[0] == w[1]),
            format!("{name} output differs across runs or thread counts"),
        )?;
    }
    Ok(
        "generate, attack, sweep, metrics and oracle-check byte-identical at 1 and 3 threads"
            .into(),
    )
}

fn main() {
    let dir = tempfile::tempdir().expect("temp dir");
    let criteria: Vec<Criterion> = vec![
        ("oracle equivalence", Box::new(oracle_equivalence)),
        (
            "classical chain vulnerability",
            Box::new(classical_vulnerability),
        ),
        (
            "multi-bit grid prediction rates",
            Box::new(|| grid_reproduction(dir.path())),
        ),
        ("sigmoid and gradient numerics", Box::new(numerics)),
        ("metrics sanity", Box::new(metrics_sanity)),
        ("format fidelity", Box::new(format_fidelity)),
        ("determinism", Box::new(|| determinism(dir.path()))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {}. {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {}. {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        criteria.len() - failed
    );
    if failed > 0 {
        std::process::exit(1);
    }
}

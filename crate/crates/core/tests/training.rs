use apuf::attack::{
    attack_multibit, bit_labels, loss_and_gradient, prediction_rate, split, train_lr,
};
use apuf::dataset::PufKind;
use apuf::seed;
use apuf::{
    Challenge, CrpDataset, DelayParams, FeatureMapKind, FeatureMatrix, LrHyperParams,
    SimulationSpec,
};
use rand::Rng;

fn simulated(kind: PufKind, count: usize, puf_seed: u64) -> CrpDataset {
    SimulationSpec {
        kind,
        params: DelayParams::default(),
        puf_seed,
        noise_sigma: 0.0,
        challenge_seed: puf_seed.wrapping_add(1),
        noise_seed: None,
        count,
    }
    .generate()
    .unwrap()
}

fn features(ds: &CrpDataset, kind: FeatureMapKind) -> FeatureMatrix {
    FeatureMatrix::from_challenges(kind, ds.pairs().iter().map(|p| &p.challenge)).unwrap()
}

/// Regularized cross-entropy written out directly from its definition.
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

#[test]
fn gradient_matches_central_differences() {
    let ds = simulated(PufKind::Classical { stages: 12 }, 200, 5);
    let y = bit_labels(&ds, 0);
    let mut rng = seed::rng(99);
    let h = 1e-5;
    for kind in [FeatureMapKind::Parity, FeatureMapKind::RawBits] {
        let x = features(&ds, kind);
        for point in 0..20 {
            let theta: Vec<f64> = (0..x.cols()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let l2 = if point % 2 == 0 { 0.0 } else { 0.7 };
            let (loss, grad) = loss_and_gradient(&x, &y, &theta, l2).unwrap();
            assert!((loss - reference_loss(&x, &y, &theta, l2)).abs() < 1e-12);
            for j in 0..theta.len() {
                let mut up = theta.clone();
                let mut down = theta.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (reference_loss(&x, &y, &up, l2) - reference_loss(&x, &y, &down, l2))
                    / (2.0 * h);
                let rel = (grad[j] - fd).abs() / grad[j].abs().max(fd.abs()).max(1e-3);
                assert!(
                    rel < 1e-6,
                    "{kind} point {point} coord {j}: {} vs {fd}",
                    grad[j]
                );
            }
        }
    }
}

#[test]
fn loss_never_increases_at_small_steps() {
    let hp = |lr| LrHyperParams {
        learning_rate: lr,
        epochs: 300,
        l2: 0.0,
        tol: 0.0,
    };
    let toy = FeatureMatrix::from_rows(FeatureMapKind::RawBits, &[vec![-1.0, 1.0], vec![1.0, 1.0]])
        .unwrap();
    let mut histories = vec![train_lr(&toy, &[0, 1], &hp(0.1)).unwrap()];
    for s in 0..10 {
        let ds = simulated(PufKind::Classical { stages: 16 }, 400, 200 + s);
        let kind = if s % 2 == 0 {
            FeatureMapKind::Parity
        } else {
            FeatureMapKind::RawBits
        };
        let lr = [0.1, 0.05, 0.01][s as usize % 3];
        histories.push(train_lr(&features(&ds, kind), &bit_labels(&ds, 0), &hp(lr)).unwrap());
    }
    for model in &histories {
        let h = &model.training().loss_history;
        assert_eq!(h.len(), model.training().epochs_run + 1);
        for w in h.windows(2) {
            assert!(w[1] <= w[0], "loss rose from {} to {}", w[0], w[1]);
        }
        assert_eq!(*h.last().unwrap(), model.training().final_loss);
    }
}

#[test]
fn parity_attack_breaks_a_classical_chain() {
    let ds = simulated(PufKind::Classical { stages: 64 }, 4000, 11);
    let report = attack_multibit(
        &ds,
        FeatureMapKind::Parity,
        0.25,
        &LrHyperParams::default(),
        3,
    )
    .unwrap();
    assert!(report.mean_rate >= 0.95, "{}", report.mean_rate);
}

#[test]
fn parity_attack_breaks_every_bit_of_a_small_multibit_device() {
    let ds = simulated(PufKind::MultiBit { width: 8 }, 2000, 12);
    let report = attack_multibit(
        &ds,
        FeatureMapKind::Parity,
        0.25,
        &LrHyperParams::default(),
        4,
    )
    .unwrap();
    assert_eq!(report.per_bit_rate.len(), 8);
    for (k, r) in report.per_bit_rate.iter().enumerate() {
        assert!(*r >= 0.9, "bit {k}: {r}");
    }
}

#[test]
fn single_bit_report_matches_the_manual_pipeline() {
    let ds = simulated(PufKind::Classical { stages: 32 }, 600, 13);
    let hp = LrHyperParams::default();
    let report = attack_multibit(&ds, FeatureMapKind::RawBits, 0.2, &hp, 8).unwrap();
    let (train, test) = split(&ds, 0.2, 8).unwrap();
    let model = train_lr(
        &features(&train, FeatureMapKind::RawBits),
        &bit_labels(&train, 0),
        &hp,
    )
    .unwrap();
    let manual = prediction_rate(&[model], &test).unwrap();
    assert_eq!(report.per_bit_rate, manual.per_bit);
    assert_eq!(report.mean_rate, manual.mean);
    assert_eq!(report.word_exact_rate, report.mean_rate);
    assert_eq!((report.train_size, report.test_size), (480, 120));
}

#[test]
fn multibit_report_invariants_and_reproducibility() {
    let ds = simulated(PufKind::MultiBit { width: 24 }, 500, 14);
    let hp = LrHyperParams {
        epochs: 100,
        ..Default::default()
    };
    let a = attack_multibit(&ds, FeatureMapKind::RawBits, 0.3, &hp, 21).unwrap();
    let b = attack_multibit(&ds, FeatureMapKind::RawBits, 0.3, &hp, 21).unwrap();
    assert_eq!(a, b);
    let min = a.per_bit_rate.iter().copied().fold(1.0, f64::min);
    let mean = a.per_bit_rate.iter().sum::<f64>() / a.per_bit_rate.len() as f64;
    assert!(a.word_exact_rate <= min);
    assert!((a.mean_rate - mean).abs() < 1e-12);
    assert!(a.per_bit_rate.iter().all(|r| (0.0..=1.0).contains(r)));
}

#[test]
fn prediction_uses_the_model_width() {
    let ds = simulated(PufKind::Classical { stages: 8 }, 50, 15);
    let model = train_lr(
        &features(&ds, FeatureMapKind::Parity),
        &bit_labels(&ds, 0),
        &LrHyperParams::default(),
    )
    .unwrap();
    assert!(model.predict(&Challenge::from_u64(0, 9)).is_err());
    assert_eq!(model.theta().len(), 9);
}

//! Logistic-regression modeling attack.
//!
//! One model per response bit, each trained by full-batch gradient descent on
//! the mean cross-entropy with an optional ridge penalty (the constant bias
//! coordinate, always the last feature, is not penalized). Weights start at
//! zero, so a run is fully determined by the data split.

use ndarray::{s, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::bits::Challenge;
use crate::dataset::CrpDataset;
use crate::error::{Error, Result};
use crate::features::FeatureMapKind;
use crate::seed;

/// Logistic function, evaluated without exponentiating a large positive
/// argument.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrHyperParams {
    pub learning_rate: f64,
    pub epochs: usize,
    /// Ridge coefficient; the penalty is `l2 / (2m) * |theta|^2` without the bias.
    pub l2: f64,
    /// Stop once an epoch lowers the loss by less than this.
    pub tol: f64,
}

impl Default for LrHyperParams {
    fn default() -> Self {
        LrHyperParams {
            learning_rate: 0.05,
            epochs: 500,
            l2: 0.0,
            tol: 1e-7,
        }
    }
}

impl LrHyperParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid_parameter("learning rate must be positive"));
        }
        if self.epochs == 0 {
            return Err(Error::invalid_parameter("epochs must be at least 1"));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return Err(Error::invalid_parameter("l2 must be non-negative"));
        }
        if !(self.tol >= 0.0 && self.tol.is_finite()) {
            return Err(Error::invalid_parameter("tol must be non-negative"));
        }
        Ok(())
    }
}

/// Dense row-major design matrix whose last column is the constant bias.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    data: Array2<f64>,
    kind: FeatureMapKind,
}

impl FeatureMatrix {
    pub fn from_challenges<'a>(
        kind: FeatureMapKind,
        challenges: impl IntoIterator<Item = &'a Challenge>,
    ) -> Result<Self> {
        let mut data = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for c in challenges {
            let d = kind.dimension(c.width());
            match cols {
                None => cols = Some(d),
                Some(expected) => Error::check_width(expected - 1, c.width())?,
            }
            let start = data.len();
            data.resize(start + d, 0.0);
            kind.encode_into(c, &mut data[start..]);
            rows += 1;
        }
        let cols = cols.ok_or_else(|| Error::invalid_input("no challenges to encode"))?;
        Ok(FeatureMatrix {
            data: Array2::from_shape_vec((rows, cols), data).expect("rows * cols values"),
            kind,
        })
    }

    /// Matrix from explicit rows, tagged with the map that produced them.
    pub fn from_rows(kind: FeatureMapKind, rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::invalid_input("no feature rows"))?;
        if cols < 2 {
            return Err(Error::invalid_input(
                "rows need at least one feature plus bias",
            ));
        }
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            Error::check_width(cols, r.len())?;
            data.extend_from_slice(r);
        }
        Ok(FeatureMatrix {
            data: Array2::from_shape_vec((rows.len(), cols), data).expect("rows * cols values"),
            kind,
        })
    }

    pub fn rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn cols(&self) -> usize {
        self.data.ncols()
    }

    pub fn kind(&self) -> FeatureMapKind {
        self.kind
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.cols();
        &self.as_slice()[i * d..(i + 1) * d]
    }

    fn as_slice(&self) -> &[f64] {
        self.data.as_slice().expect("standard layout")
    }

    fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        self.as_slice().chunks_exact(self.cols())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn validate_labels(x: &FeatureMatrix, labels: &[u8]) -> Result<()> {
    if x.rows() == 0 {
        return Err(Error::invalid_input("empty training set"));
    }
    if labels.len() != x.rows() {
        return Err(Error::invalid_input(format!(
            "{} labels for {} feature rows",
            labels.len(),
            x.rows()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&y| y > 1) {
        return Err(Error::invalid_input(format!("label {bad} is not binary")));
    }
    Ok(())
}

/// Sigmoid and cross-entropy term of one sample, sharing a single `exp`.
#[inline]
fn sample_terms(z: f64, y: f64) -> (f64, f64) {
    let e = (-z.abs()).exp();
    let p = if z >= 0.0 {
        1.0 / (1.0 + e)
    } else {
        e / (1.0 + e)
    };
    (p, z.max(0.0) + e.ln_1p() - y * z)
}

/// Ridge penalty `l2 / 2 * |w|^2` of one weight column, bias excluded.
fn penalty(theta: ArrayView1<f64>, l2: f64) -> f64 {
    if l2 == 0.0 {
        return 0.0;
    }
    let d = theta.len();
    0.5 * l2 * theta.slice(s![..d - 1]).iter().map(|w| w * w).sum::<f64>()
}

/// Per-column losses for margins `z` (m x k); writes residuals `sigma(z) - y`.
fn forward(
    z: &Array2<f64>,
    y: &Array2<f64>,
    theta: &Array2<f64>,
    l2: f64,
    resid: &mut Array2<f64>,
) -> Vec<f64> {
    let k = z.ncols();
    let mut ce = vec![0.0; k];
    for ((zr, yr), mut rr) in z.rows().into_iter().zip(y.rows()).zip(resid.rows_mut()) {
        for b in 0..k {
            let (p, term) = sample_terms(zr[b], yr[b]);
            rr[b] = p - yr[b];
            ce[b] += term;
        }
    }
    let m = z.nrows() as f64;
    ce.iter()
        .enumerate()
        .map(|(b, c)| c / m + penalty(theta.column(b), l2) / m)
        .collect()
}

/// Mean gradient `X^T resid / m` plus the ridge term (bias row excluded).
fn gradient(x: &FeatureMatrix, resid: &Array2<f64>, theta: &Array2<f64>, l2: f64) -> Array2<f64> {
    let m = x.rows() as f64;
    let d = x.cols();
    let mut grad = x.data.t().dot(resid);
    grad /= m;
    if l2 != 0.0 {
        grad.slice_mut(s![..d - 1, ..])
            .scaled_add(l2 / m, &theta.slice(s![..d - 1, ..]));
    }
    grad
}

fn label_matrix(x: &FeatureMatrix, label_sets: &[&[u8]]) -> Array2<f64> {
    Array2::from_shape_fn((x.rows(), label_sets.len()), |(i, b)| {
        f64::from(label_sets[b][i])
    })
}

/// Loss and its gradient at `theta`.
pub fn loss_and_gradient(
    x: &FeatureMatrix,
    labels: &[u8],
    theta: &[f64],
    l2: f64,
) -> Result<(f64, Vec<f64>)> {
    validate_labels(x, labels)?;
    Error::check_width(x.cols(), theta.len())?;
    let y = label_matrix(x, &[labels]);
    let theta = Array2::from_shape_vec((theta.len(), 1), theta.to_vec()).expect("column");
    let z = x.data.dot(&theta);
    let mut resid = Array2::zeros(z.raw_dim());
    let loss = forward(&z, &y, &theta, l2, &mut resid)[0];
    let grad = gradient(x, &resid, &theta, l2);
    Ok((loss, grad.column(0).to_vec()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMeta {
    pub epochs_run: usize,
    pub final_loss: f64,
    /// Loss at the initial point followed by the loss after each epoch.
    pub loss_history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LrModel {
    theta: Vec<f64>,
    kind: FeatureMapKind,
    n: usize,
    meta: TrainingMeta,
}

impl LrModel {
    /// Model with fixed weights, e.g. transplanted from a linear delay model.
    pub fn from_weights(theta: Vec<f64>, kind: FeatureMapKind) -> Result<Self> {
        if theta.len() < 2 {
            return Err(Error::invalid_parameter("need at least two weights"));
        }
        Ok(LrModel {
            n: theta.len() - 1,
            theta,
            kind,
            meta: TrainingMeta {
                epochs_run: 0,
                final_loss: f64::NAN,
                loss_history: Vec::new(),
            },
        })
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn kind(&self) -> FeatureMapKind {
        self.kind
    }

    pub fn challenge_width(&self) -> usize {
        self.n
    }

    pub fn training(&self) -> &TrainingMeta {
        &self.meta
    }

    /// Predicted bit and `P(bit = 1)` for an already encoded feature row.
    ///
    /// The bit is decided on the sign of the margin, which is exactly
    /// `p > 0.5` without the rounding of `p` near one half.
    pub fn predict_features(&self, row: &[f64]) -> (bool, f64) {
        let z = dot(&self.theta, row);
        (z > 0.0, sigmoid(z))
    }

    pub fn predict(&self, c: &Challenge) -> Result<(bool, f64)> {
        Error::check_width(self.n, c.width())?;
        let fv = self.kind.encode(c);
        Ok(self.predict_features(fv.values()))
    }
}

/// Fit a logistic-regression model by full-batch gradient descent.
pub fn train_lr(x: &FeatureMatrix, labels: &[u8], hp: &LrHyperParams) -> Result<LrModel> {
    let mut models = train_lr_many(x, &[labels], hp)?;
    Ok(models.pop().expect("one label set gives one model"))
}

/// Train one independent model per label set over a shared design matrix.
///
/// The models never interact: each has its own weights, loss history and
/// early stop. Stacking them as columns lets every epoch run as two dense
/// matrix products instead of `2k` matrix-vector passes.
pub fn train_lr_many(
    x: &FeatureMatrix,
    label_sets: &[&[u8]],
    hp: &LrHyperParams,
) -> Result<Vec<LrModel>> {
    hp.validate()?;
    for labels in label_sets {
        validate_labels(x, labels)?;
    }
    let (d, k) = (x.cols(), label_sets.len());
    let y = label_matrix(x, label_sets);
    let mut theta = Array2::<f64>::zeros((d, k));
    let mut z = Array2::<f64>::zeros((x.rows(), k));
    let mut resid = Array2::<f64>::zeros((x.rows(), k));

    let mut loss = forward(&z, &y, &theta, hp.l2, &mut resid);
    let mut history: Vec<Vec<f64>> = loss.iter().map(|&l| vec![l]).collect();
    let mut epochs_run = vec![0usize; k];
    let mut active = vec![true; k];

    for _ in 0..hp.epochs {
        let live: Vec<usize> = (0..k).filter(|&b| active[b]).collect();
        if live.is_empty() {
            break;
        }
        let grad = gradient(x, &resid, &theta, hp.l2);
        for &b in &live {
            theta
                .column_mut(b)
                .scaled_add(-hp.learning_rate, &grad.column(b));
        }
        z = x.data.dot(&theta);
        let next = forward(&z, &y, &theta, hp.l2, &mut resid);
        for &b in &live {
            history[b].push(next[b]);
            epochs_run[b] += 1;
            if loss[b] - next[b] < hp.tol {
                active[b] = false;
            }
            loss[b] = next[b];
        }
    }

    Ok(history
        .into_iter()
        .enumerate()
        .map(|(b, loss_history)| LrModel {
            theta: theta.column(b).to_vec(),
            kind: x.kind,
            n: d - 1,
            meta: TrainingMeta {
                epochs_run: epochs_run[b],
                final_loss: loss[b],
                loss_history,
            },
        })
        .collect())
}

/// Number of test pairs for a split: `floor(fraction * len)`, at least one.
pub fn test_size(len: usize, test_fraction: f64) -> usize {
    // The small slack keeps values like 0.29 * 100 from flooring to 28.
    (((test_fraction * len as f64) + 1e-9).floor() as usize).max(1)
}

/// Seeded random train/test partition; returns `(train, test)`.
pub fn split(ds: &CrpDataset, test_fraction: f64, seed: u64) -> Result<(CrpDataset, CrpDataset)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::invalid_parameter(format!(
            "test fraction must lie in (0, 1), got {test_fraction}"
        )));
    }
    if ds.len() < 2 {
        return Err(Error::invalid_input(
            "need at least two CRPs to form a train/test split",
        ));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut seed::rng(seed));
    let t = test_size(ds.len(), test_fraction);
    let (test_idx, train_idx) = order.split_at(t);
    Ok((ds.select(train_idx), ds.select(test_idx)))
}

/// Per-bit and whole-word prediction rates.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRates {
    pub per_bit: Vec<f64>,
    pub mean: f64,
    pub word_exact: f64,
}

fn rates_from_matrix(
    models: &[LrModel],
    features: &FeatureMatrix,
    test: &CrpDataset,
) -> PredictionRates {
    let m = test.len() as f64;
    let mut correct = vec![0usize; models.len()];
    let mut exact = 0usize;
    for (row, crp) in features.row_iter().zip(test.pairs()) {
        let mut all = true;
        for (k, model) in models.iter().enumerate() {
            let (bit, _) = model.predict_features(row);
            if bit == crp.response.get(k) {
                correct[k] += 1;
            } else {
                all = false;
            }
        }
        if all {
            exact += 1;
        }
    }
    let per_bit: Vec<f64> = correct.iter().map(|&c| c as f64 / m).collect();
    let mean = per_bit.iter().sum::<f64>() / per_bit.len() as f64;
    PredictionRates {
        per_bit,
        mean,
        word_exact: exact as f64 / m,
    }
}

/// Fraction of test CRPs each bit model predicts correctly, plus the
/// fraction where every bit is right. `models[k]` predicts response bit `k`.
pub fn prediction_rate(models: &[LrModel], test: &CrpDataset) -> Result<PredictionRates> {
    if test.is_empty() {
        return Err(Error::invalid_input("empty test set"));
    }
    Error::check_width(test.response_width(), models.len())?;
    let kind = models[0].kind;
    for model in models {
        Error::check_width(test.challenge_width(), model.n)?;
        if model.kind != kind {
            return Err(Error::invalid_input("models use different feature maps"));
        }
    }
    let features = FeatureMatrix::from_challenges(kind, test.pairs().iter().map(|p| &p.challenge))?;
    Ok(rates_from_matrix(models, &features, test))
}

/// Labels of response bit `k` across a dataset.
pub fn bit_labels(ds: &CrpDataset, k: usize) -> Vec<u8> {
    ds.pairs()
        .iter()
        .map(|p| u8::from(p.response.get(k)))
        .collect()
}

/// One cell of a prediction-rate experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackReport {
    pub crp_count: usize,
    pub test_fraction: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub per_bit_rate: Vec<f64>,
    pub mean_rate: f64,
    pub word_exact_rate: f64,
    pub kind: FeatureMapKind,
    pub seed: u64,
}

impl AttackReport {
    pub const CSV_HEADER: &'static str = "crps,test_fraction,feature_map,mean_rate,word_exact_rate";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.4},{:.4}",
            self.crp_count, self.test_fraction, self.kind, self.mean_rate, self.word_exact_rate
        )
    }
}

/// Response bits per jointly trained block. Fixed so that results do not
/// depend on the number of worker threads.
const TRAINING_BLOCK: usize = 16;

/// Split, train one model per response bit, and score on the shared test set.
pub fn attack_multibit(
    ds: &CrpDataset,
    kind: FeatureMapKind,
    test_fraction: f64,
    hp: &LrHyperParams,
    seed: u64,
) -> Result<AttackReport> {
    hp.validate()?;
    let (train, test) = split(ds, test_fraction, seed)?;
    let x_train = FeatureMatrix::from_challenges(kind, train.pairs().iter().map(|p| &p.challenge))?;
    let labels: Vec<Vec<u8>> = (0..ds.response_width())
        .map(|k| bit_labels(&train, k))
        .collect();
    let blocks: Vec<Vec<&[u8]>> = labels
        .chunks(TRAINING_BLOCK)
        .map(|c| c.iter().map(Vec::as_slice).collect())
        .collect();
    let models: Vec<LrModel> = blocks
        .par_iter()
        .map(|block| train_lr_many(&x_train, block, hp))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect();
    let x_test = FeatureMatrix::from_challenges(kind, test.pairs().iter().map(|p| &p.challenge))?;
    let rates = rates_from_matrix(&models, &x_test, &test);
    Ok(AttackReport {
        crp_count: ds.len(),
        test_fraction,
        train_size: train.len(),
        test_size: test.len(),
        per_bit_rate: rates.per_bit,
        mean_rate: rates.mean,
        word_exact_rate: rates.word_exact,
        kind,
        seed,
    })
}

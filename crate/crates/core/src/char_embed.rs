//! Character-level embedding: bag-of-tokens count vectors compressed by a
//! single-layer linear autoencoder.
//!
//! The encoder maps a count column `x` (length m) to `z = W x + b` (length
//! d_c) and the decoder maps back with `y = W' z + b'`, where `W'` is m×d_c
//! and untied from `W`. Training minimizes the mean squared reconstruction
//! error `(1/n) Σ ‖x_i − y_i‖²` with mini-batch gradient descent. Features are
//! the encoder outputs.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;

use crate::corpus::TokenStream;
use crate::error::{Error, Result};
pub use crate::features::{FeatureMatrix, Level};
use crate::sampling;

/// Sparse m×n token-count matrix with a lexicographically ordered vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct CountMatrix {
    vocab: Vec<String>,
    /// Per user, `(row, count)` sorted by row.
    columns: Vec<Vec<(usize, u32)>>,
}

impl CountMatrix {
    pub fn vocab(&self) -> &[String] {
        &self.vocab
    }

    pub fn n_tokens(&self) -> usize {
        self.vocab.len()
    }

    pub fn n_users(&self) -> usize {
        self.columns.len()
    }

    pub fn row_of(&self, token: &str) -> Option<usize> {
        self.vocab.binary_search_by(|t| t.as_str().cmp(token)).ok()
    }

    pub fn get(&self, row: usize, user: usize) -> u32 {
        let col = &self.columns[user];
        col.binary_search_by_key(&row, |&(r, _)| r)
            .map(|i| col[i].1)
            .unwrap_or(0)
    }

    pub fn column_entries(&self, user: usize) -> &[(usize, u32)] {
        &self.columns[user]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n_tokens(), self.n_users());
        for (c, col) in self.columns.iter().enumerate() {
            for &(r, v) in col {
                m[(r, c)] = f64::from(v);
            }
        }
        m
    }
}

/// Counts every token of every stream; column i belongs to stream i.
pub fn count_vectorize(streams: &[TokenStream]) -> CountMatrix {
    let mut vocab: Vec<String> = streams
        .iter()
        .flat_map(|s| s.tokens().iter().cloned())
        .collect();
    vocab.sort_unstable();
    vocab.dedup();
    let columns = streams
        .iter()
        .map(|s| {
            let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
            for t in s.iter() {
                let row = vocab.binary_search_by(|v| v.as_str().cmp(t)).unwrap();
                *counts.entry(row).or_default() += 1;
            }
            counts.into_iter().collect()
        })
        .collect();
    CountMatrix { vocab, columns }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SgdConfig {
    pub batch_size: usize,
    pub learning_rate: f64,
    pub max_epochs: usize,
    /// Relative loss improvement below which an epoch counts as stalled.
    pub tolerance: f64,
    /// Stop after this many consecutive stalled epochs.
    pub patience: usize,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            batch_size: 64,
            learning_rate: 1e-3,
            max_epochs: 200,
            tolerance: 1e-5,
            patience: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearAutoencoder {
    /// d_c×m
    pub encoder_weights: DMatrix<f64>,
    pub encoder_bias: DVector<f64>,
    /// m×d_c
    pub decoder_weights: DMatrix<f64>,
    pub decoder_bias: DVector<f64>,
}

/// Gradient of the batch-mean reconstruction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderGradient {
    pub encoder_weights: DMatrix<f64>,
    pub encoder_bias: DVector<f64>,
    pub decoder_weights: DMatrix<f64>,
    pub decoder_bias: DVector<f64>,
}

impl LinearAutoencoder {
    /// Uniform weights in `[-1/√m, 1/√m]`, zero biases.
    pub fn init(m: usize, d_c: usize, seed: u64) -> Self {
        let mut rng = sampling::rng(seed);
        let bound = 1.0 / (m.max(1) as f64).sqrt();
        let encoder_weights = DMatrix::from_fn(d_c, m, |_, _| rng.random_range(-bound..=bound));
        let decoder_weights = DMatrix::from_fn(m, d_c, |_, _| rng.random_range(-bound..=bound));
        LinearAutoencoder {
            encoder_weights,
            encoder_bias: DVector::zeros(d_c),
            decoder_weights,
            decoder_bias: DVector::zeros(m),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.encoder_weights.ncols()
    }

    pub fn code_dim(&self) -> usize {
        self.encoder_weights.nrows()
    }

    pub fn encode(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &self.encoder_weights * x;
        for mut col in z.column_iter_mut() {
            col += &self.encoder_bias;
        }
        z
    }

    pub fn decode(&self, z: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = &self.decoder_weights * z;
        for mut col in y.column_iter_mut() {
            col += &self.decoder_bias;
        }
        y
    }

    /// Mean over columns of `‖x − decode(encode(x))‖²`.
    pub fn loss(&self, x: &DMatrix<f64>) -> f64 {
        if x.ncols() == 0 {
            return 0.0;
        }
        let y = self.decode(&self.encode(x));
        (y - x).norm_squared() / x.ncols() as f64
    }

    /// Batch-mean loss and its analytic gradient.
    pub fn loss_and_gradient(&self, x: &DMatrix<f64>) -> (f64, AutoencoderGradient) {
        let b = x.ncols().max(1) as f64;
        let z = self.encode(x);
        let y = self.decode(&z);
        let err = y - x;
        let loss = err.norm_squared() / b;
        let dy = err * (2.0 / b);
        let decoder_weights = &dy * z.transpose();
        let decoder_bias = dy.column_sum();
        let dz = self.decoder_weights.transpose() * &dy;
        let encoder_weights = &dz * x.transpose();
        let encoder_bias = dz.column_sum();
        (
            loss,
            AutoencoderGradient {
                encoder_weights,
                encoder_bias,
                decoder_weights,
                decoder_bias,
            },
        )
    }

    fn step(&mut self, g: &AutoencoderGradient, lr: f64) {
        self.encoder_weights -= &g.encoder_weights * lr;
        self.encoder_bias.axpy(-lr, &g.encoder_bias, 1.0);
        self.decoder_weights -= &g.decoder_weights * lr;
        self.decoder_bias.axpy(-lr, &g.decoder_bias, 1.0);
    }

    pub fn is_finite(&self) -> bool {
        self.encoder_weights.iter().all(|v| v.is_finite())
            && self.encoder_bias.iter().all(|v| v.is_finite())
            && self.decoder_weights.iter().all(|v| v.is_finite())
            && self.decoder_bias.iter().all(|v| v.is_finite())
    }
}

/// Full-data loss before training and after each accepted epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace {
    pub losses: Vec<f64>,
    pub final_learning_rate: f64,
}

impl TrainingTrace {
    pub fn initial_loss(&self) -> f64 {
        self.losses[0]
    }

    pub fn final_loss(&self) -> f64 {
        *self.losses.last().unwrap()
    }
}

/// Trains an autoencoder on the count columns.
///
/// An epoch whose full-data loss exceeds the previous one is rolled back and
/// the learning rate halved, so the recorded losses never increase.
pub fn train_autoencoder(
    counts: &CountMatrix,
    d_c: usize,
    opt: &SgdConfig,
    seed: u64,
) -> Result<(LinearAutoencoder, TrainingTrace)> {
    let (m, n) = (counts.n_tokens(), counts.n_users());
    if m == 0 {
        return Err(Error::EmptyCorpus("no character tokens"));
    }
    if n == 0 {
        return Err(Error::EmptyCorpus("no users"));
    }
    if d_c == 0 {
        return Err(Error::InvalidConfig("character dimension must be at least 1".into()));
    }
    if d_c >= m {
        log::warn!("character code dimension {d_c} is not smaller than the token vocabulary {m}");
    }
    let x = counts.to_dense();
    let mut model = LinearAutoencoder::init(m, d_c, seed);
    let mut rng = sampling::rng(sampling::derive_seed(seed, "batches"));
    let mut lr = opt.learning_rate;
    let mut loss = model.loss(&x);
    if !loss.is_finite() {
        return Err(Error::Diverged { epoch: 0 });
    }
    let mut losses = vec![loss];
    let mut order: Vec<usize> = (0..n).collect();
    let batch = opt.batch_size.max(1);
    let mut stalled = 0;

    for epoch in 1..=opt.max_epochs {
        order.shuffle(&mut rng);
        let previous = model.clone();
        for chunk in order.chunks(batch) {
            let xb = x.select_columns(chunk);
            let (_, g) = model.loss_and_gradient(&xb);
            model.step(&g, lr);
        }
        let new_loss = model.loss(&x);
        if !new_loss.is_finite() {
            return Err(Error::Diverged { epoch });
        }
        if new_loss > loss {
            model = previous;
            lr *= 0.5;
            log::debug!("autoencoder epoch {epoch}: loss rose to {new_loss:e}, halving rate to {lr:e}");
            losses.push(loss);
            stalled += 1;
        } else {
            let improvement = (loss - new_loss) / loss.max(f64::MIN_POSITIVE);
            stalled = if improvement < opt.tolerance { stalled + 1 } else { 0 };
            loss = new_loss;
            losses.push(loss);
        }
        if stalled >= opt.patience {
            log::debug!("autoencoder stopped after {epoch} epochs at loss {loss:e}");
            break;
        }
    }
    Ok((
        model,
        TrainingTrace {
            losses,
            final_learning_rate: lr,
        },
    ))
}

/// Column i of the result is `W x_i + b`.
pub fn encode_chars(model: &LinearAutoencoder, counts: &CountMatrix) -> Result<FeatureMatrix> {
    if counts.n_tokens() != model.input_dim() {
        return Err(Error::DimensionMismatch {
            what: "autoencoder input (token vocabulary)",
            expected: model.input_dim(),
            actual: counts.n_tokens(),
        });
    }
    let d = model.code_dim();
    let mut out = DMatrix::zeros(d, counts.n_users());
    for (i, mut col) in out.column_iter_mut().enumerate() {
        col.copy_from(&model.encoder_bias);
        for &(row, count) in counts.column_entries(i) {
            col.axpy(f64::from(count), &model.encoder_weights.column(row), 1.0);
        }
    }
    Ok(FeatureMatrix::new(Level::Char, out))
}

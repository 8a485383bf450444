//! Mutual information neural estimation with the Donsker-Varadhan bound
//! `I(X; Z) ≥ E_P[T] − ln E_{P_X ⊗ P_Z}[e^T]`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::features::{Scaler, ScaleMode};
use crate::neuralnet::{chain_specs, Activation, Network, Optimizer, OptimizerConfig};
use crate::numerics::{Matrix, RandomStream, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineConfig {
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub smoothing_window: usize,
    pub ema_decay: f64,
}

impl Default for MineConfig {
    fn default() -> Self {
        Self {
            hidden: vec![100, 100],
            activation: Activation::Relu,
            batch_size: 256,
            epochs: 60,
            learning_rate: 1e-3,
            smoothing_window: 20,
            ema_decay: 0.99,
        }
    }
}

impl MineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 8 {
            return param_err(format!("MINE batch size must be >= 8, got {}", self.batch_size));
        }
        if self.epochs == 0 || self.smoothing_window == 0 {
            return param_err("epochs and smoothing window must be positive");
        }
        if !(self.ema_decay >= 0.0 && self.ema_decay < 1.0) {
            return param_err("EMA decay must lie in [0, 1)");
        }
        if !(self.learning_rate > 0.0) {
            return param_err("learning rate must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiCurve {
    /// Bound on the full sample after each epoch, in nats.
    pub values: Vec<f64>,
    /// Trailing moving average of `values`.
    pub smoothed: Vec<f64>,
    /// Mean of the last 10% of `smoothed`.
    pub estimate: f64,
    pub smoothing_window: usize,
}

impl MiCurve {
    fn from_values(values: Vec<f64>, window: usize) -> Self {
        let smoothed = moving_average(&values, window);
        let tail = (smoothed.len() as f64 * 0.1).ceil().max(1.0) as usize;
        let estimate = smoothed[smoothed.len() - tail..].iter().sum::<f64>() / tail as f64;
        Self { values, smoothed, estimate, smoothing_window: window }
    }

    /// `epoch,value` rows of the smoothed curve, epochs counted from 1.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(f, "epoch,value")?;
        for (i, v) in self.smoothed.iter().enumerate() {
            writeln!(f, "{},{}", i + 1, v)?;
        }
        f.flush()?;
        Ok(())
    }
}

pub(crate) fn moving_average(values: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    for i in 0..values.len() {
        acc += values[i];
        if i >= window {
            acc -= values[i - window];
        }
        out.push(acc / (i + 1).min(window) as f64);
    }
    out
}

/// `ln mean e^{t}` with max subtraction.
fn log_mean_exp<T: Real>(t: &[T]) -> T {
    let m = t.iter().copied().fold(T::neg_infinity(), T::max);
    let s: T = t.iter().map(|&v| (v - m).exp()).sum();
    m + (s / T::from_usize_lossy(t.len())).ln()
}

/// `mean T(joint) − ln mean e^{T(marginal)}`. Rows of both batches are
/// concatenated `[x, z]` pairs.
pub fn dv_bound<T: Real>(net: &Network<T>, joint: &Matrix<T>, marginal: &Matrix<T>) -> Result<T> {
    if joint.rows() != marginal.rows() || joint.rows() == 0 {
        return dim_err(format!("joint batch of {} rows vs marginal of {}", joint.rows(), marginal.rows()));
    }
    if net.output_dim() != 1 {
        return param_err("statistic network must have a scalar output");
    }
    let tj = net.predict(joint)?;
    let tm = net.predict(marginal)?;
    let mean_joint = tj.as_slice().iter().copied().sum::<T>() / T::from_usize_lossy(tj.rows());
    let bound = mean_joint - log_mean_exp(tm.as_slice());
    if !bound.is_finite() {
        return Err(Error::Contract("non-finite DV bound".into()));
    }
    Ok(bound)
}

/// `[x_i, z_{pair(i)}]` rows for the given sample indices.
fn paired<T: Real>(x: &Matrix<T>, z: &Matrix<T>, xi: &[usize], zi: &[usize]) -> Matrix<T> {
    let dx = x.cols();
    Matrix::from_fn(xi.len(), dx + z.cols(), |r, c| if c < dx { x.get(xi[r], c) } else { z.get(zi[r], c - dx) })
}

/// Marginal indices: the batch's own indices in shuffled order.
pub(crate) fn shuffled_within<T: Clone>(batch: &[T], stream: &mut RandomStream) -> Vec<T> {
    let mut s = batch.to_vec();
    stream.shuffle(&mut s);
    s
}

/// Trains a statistic network on `(X, Z)` and reports the per-epoch bound.
///
/// Both inputs are z-scored first. The log-partition gradient uses an
/// exponential moving average of `e^T` in its denominator.
pub fn estimate_mi<T: Real>(x: &Matrix<T>, z: &Matrix<T>, cfg: &MineConfig, stream: &mut RandomStream) -> Result<MiCurve> {
    cfg.validate()?;
    let n = x.rows();
    if z.rows() != n {
        return dim_err(format!("X has {n} rows, Z has {}", z.rows()));
    }
    if n < cfg.batch_size {
        return param_err(format!("need at least one batch of {} samples, got {n}", cfg.batch_size));
    }
    if n < 1000 {
        log::warn!("MINE on {n} samples; estimates below 1000 samples are noisy");
    }
    let x = Scaler::fit(x, ScaleMode::Zscore)?.transform(x)?;
    let z = Scaler::fit(z, ScaleMode::Zscore)?.transform(z)?;

    let specs = chain_specs(x.cols() + z.cols(), &cfg.hidden, 1, cfg.activation, Activation::Identity);
    let mut net = Network::new(&specs, &mut stream.derive(1))?;
    let mut opt = Optimizer::new(OptimizerConfig {
        learning_rate: cfg.learning_rate,
        batch_size: cfg.batch_size,
        ..OptimizerConfig::default()
    })?;
    let mut order_stream = stream.derive(2);
    let mut eval_stream = stream.derive(3);
    let b = cfg.batch_size;
    let decay = T::lit(cfg.ema_decay);
    let mut log_ema: Option<T> = None;
    let mut values = Vec::with_capacity(cfg.epochs);
    let all: Vec<usize> = (0..n).collect();

    for epoch in 1..=cfg.epochs {
        opt.epoch = epoch;
        let order = order_stream.permutation(n);
        for idx in order.chunks_exact(b) {
            let shuffled = shuffled_within(idx, &mut order_stream);
            let mut input = paired(&x, &z, idx, idx);
            let marg = paired(&x, &z, idx, &shuffled);
            input = stack(&input, &marg);
            let (t, tape) = net.forward(&input)?;
            let tm = &t.as_slice()[b..];
            let batch_log_mean = log_mean_exp(tm);
            let le = match log_ema {
                None => batch_log_mean,
                Some(prev) => {
                    // ln(d·e^prev + (1−d)·e^batch)
                    let a = decay.ln() + prev;
                    let c = (T::one() - decay).ln() + batch_log_mean;
                    let m = a.max(c);
                    m + ((a - m).exp() + (c - m).exp()).ln()
                }
            };
            log_ema = Some(le);
            // descend on −bound
            let inv_b = T::one() / T::from_usize_lossy(b);
            let d = Matrix::from_fn(2 * b, 1, |i, _| {
                if i < b {
                    -inv_b
                } else {
                    (t.get(i, 0) - le).exp() * inv_b
                }
            });
            let grads = net.backward(&tape, &d)?;
            opt.step(&mut net, &grads)?;
        }
        let perm = eval_stream.permutation(n);
        let bound = dv_bound(&net, &paired(&x, &z, &all, &all), &paired(&x, &z, &all, &perm))
            .map_err(|e| Error::Training { epoch, message: e.to_string() })?;
        values.push(bound.as_f64());
    }
    Ok(MiCurve::from_values(values, cfg.smoothing_window))
}

fn stack<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Matrix<T> {
    let mut data = a.as_slice().to_vec();
    data.extend_from_slice(b.as_slice());
    Matrix::from_raw(a.rows() + b.rows(), a.cols(), data)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiComparison {
    pub original: MiCurve,
    pub transformed: MiCurve,
    /// `transformed.estimate − original.estimate`.
    pub difference: f64,
}

/// Estimates MI for both pairs with identical random draws.
pub fn compare_mi<T: Real>(
    original: (&Matrix<T>, &Matrix<T>),
    transformed: (&Matrix<T>, &Matrix<T>),
    cfg: &MineConfig,
    stream: &RandomStream,
) -> Result<MiComparison> {
    if original.0.rows() != transformed.0.rows() {
        return dim_err("pairs differ in sample count");
    }
    let o = estimate_mi(original.0, original.1, cfg, &mut stream.derive(0))?;
    let t = estimate_mi(transformed.0, transformed.1, cfg, &mut stream.derive(0))?;
    let difference = t.estimate - o.estimate;
    Ok(MiComparison { original: o, transformed: t, difference })
}

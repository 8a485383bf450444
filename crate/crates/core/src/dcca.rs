//! Deep CCA: two modality towers trained so that their outputs are maximally
//! canonically correlated, plus weighted-sum fusion of the tower outputs.
//!
//! The objective is the nuclear norm of the whitened cross-covariance `T`
//! (sum of all `d` singular values). With `T = U D Vᵀ` and centered outputs
//! `Ō1, Ō2` (rows are samples):
//!
//! ```text
//! ∇12 = Σ11^{-1/2} U Vᵀ Σ22^{-1/2}
//! ∇11 = −½ Σ11^{-1/2} U D Uᵀ Σ11^{-1/2}
//! ∂corr/∂O1 = (2 Ō1 ∇11 + Ō2 ∇12ᵀ) / (N − 1)
//! ```
//!
//! and symmetrically for `O2`.

use serde::{Deserialize, Serialize};

use crate::cca::{whiten, CcaModel, DEFAULT_REG};
use crate::error::{dim_err, param_err, Error, Result};
use crate::neuralnet::{chain_specs, Activation, Network, Optimizer, OptimizerConfig};
use crate::numerics::{center, svd, Matrix, RandomStream, Real};

/// Singular values below this are reported as collapsed.
const COLLAPSE_THRESHOLD: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct CcaLoss<T> {
    /// Total correlation: sum of the singular values of `T`.
    pub corr: T,
    /// `sqrt(tr(TᵀT))`, kept as a secondary metric.
    pub frobenius: T,
    pub singular_values: Vec<T>,
    /// Gradient of `corr` with respect to `O1`.
    pub d_o1: Matrix<T>,
    /// Gradient of `corr` with respect to `O2`.
    pub d_o2: Matrix<T>,
    pub collapsed: bool,
}

/// Total canonical correlation of two output matrices and its gradients.
pub fn cca_loss<T: Real>(o1: &Matrix<T>, o2: &Matrix<T>, reg: T) -> Result<CcaLoss<T>> {
    cca_loss_with(o1, o2, reg, reg)
}

pub fn cca_loss_with<T: Real>(o1: &Matrix<T>, o2: &Matrix<T>, reg1: T, reg2: T) -> Result<CcaLoss<T>> {
    let n = o1.rows();
    if o2.rows() != n {
        return dim_err(format!("outputs have {} and {} rows", n, o2.rows()));
    }
    let d = o1.cols().max(o2.cols());
    if n < d + 2 {
        return dim_err(format!("need N >= d + 2 = {}, got N = {n}", d + 2));
    }
    let (c1, _) = center(o1)?;
    let (c2, _) = center(o2)?;
    let w = whiten(&c1, &c2, reg1, reg2)?;
    let dec = svd(&w.t);
    let corr: T = dec.s.iter().copied().sum();
    let frobenius = dec.s.iter().map(|&s| s * s).sum::<T>().sqrt();
    let collapsed = dec.s.iter().any(|&s| s < T::lit(COLLAPSE_THRESHOLD));
    if collapsed {
        log::warn!("canonical correlation collapsed below {COLLAPSE_THRESHOLD:e}");
    }

    let scale_cols = |m: &Matrix<T>, s: &[T]| {
        let mut out = m.clone();
        for i in 0..out.rows() {
            for (x, &v) in out.row_mut(i).iter_mut().zip(s) {
                *x *= v;
            }
        }
        out
    };
    let half = T::lit(-0.5);
    let nabla12 = w.s11_inv_sqrt.dot(&dec.u.dot_t(&dec.v)).dot(&w.s22_inv_sqrt);
    let nabla11 = w
        .s11_inv_sqrt
        .dot(&scale_cols(&dec.u, &dec.s).dot_t(&dec.u))
        .dot(&w.s11_inv_sqrt)
        .scale(half);
    let nabla22 = w
        .s22_inv_sqrt
        .dot(&scale_cols(&dec.v, &dec.s).dot_t(&dec.v))
        .dot(&w.s22_inv_sqrt)
        .scale(half);
    let inv = T::one() / T::from_usize_lossy(n - 1);
    let two = T::lit(2.0);
    let d_o1 = c1.dot(&nabla11).scale(two).add(&c2.dot_t(&nabla12)).scale(inv);
    let d_o2 = c2.dot(&nabla22).scale(two).add(&c1.dot(&nabla12)).scale(inv);
    Ok(CcaLoss { corr, frobenius, singular_values: dec.s, d_o1, d_o2, collapsed })
}

/// Weighted-sum fusion `α1·O1 + (1 − α1)·O2`.
pub fn fuse<T: Real>(o1: &Matrix<T>, o2: &Matrix<T>, alpha1: T) -> Result<Matrix<T>> {
    if o1.shape() != o2.shape() {
        return dim_err(format!("fuse: {:?} vs {:?}", o1.shape(), o2.shape()));
    }
    if !(alpha1 >= T::zero() && alpha1 <= T::one()) {
        return param_err("alpha1 must lie in [0, 1]");
    }
    let alpha2 = T::one() - alpha1;
    Ok(o1.zip_map(o2, |a, b| alpha1 * a + alpha2 * b))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DccaConfig {
    pub hidden1: Vec<usize>,
    pub hidden2: Vec<usize>,
    pub out_dim: usize,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
    pub reg1: f64,
    pub reg2: f64,
    pub epochs: usize,
    pub optimizer: OptimizerConfig,
    /// Decoupled L2 decay on tower weights (biases excluded).
    pub weight_decay: f64,
    /// Fit linear CCA on the trained tower outputs so that output `i` of
    /// one view pairs with output `i` of the other before fusion.
    pub align_outputs: bool,
    pub alpha1: f64,
}

impl Default for DccaConfig {
    /// Two hidden layers of 120 units and 12 outputs per tower, EEG weight 0.7.
    fn default() -> Self {
        Self {
            hidden1: vec![120, 120],
            hidden2: vec![120, 120],
            out_dim: 12,
            hidden_activation: Activation::Sigmoid,
            output_activation: Activation::Identity,
            reg1: 1e-8,
            reg2: 1e-8,
            epochs: 50,
            optimizer: OptimizerConfig::default(),
            weight_decay: 0.0,
            align_outputs: true,
            alpha1: 0.7,
        }
    }
}

impl DccaConfig {
    pub fn validate(&self) -> Result<()> {
        self.optimizer.validate()?;
        if self.out_dim == 0 {
            return param_err("output dimension must be >= 1");
        }
        if self.optimizer.batch_size < self.out_dim + 2 {
            return param_err(format!(
                "batch size {} must be >= out_dim + 2 = {}",
                self.optimizer.batch_size,
                self.out_dim + 2
            ));
        }
        if !(self.weight_decay >= 0.0) || self.weight_decay * self.optimizer.learning_rate >= 1.0 {
            return param_err("weight decay must satisfy 0 <= decay * learning_rate < 1");
        }
        if self.reg1 < 0.0 || self.reg2 < 0.0 {
            return param_err("regularization must be nonnegative");
        }
        if !(0.0..=1.0).contains(&self.alpha1) {
            return param_err("alpha1 must lie in [0, 1]");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct DccaModel<T> {
    pub tower1: Network<T>,
    pub tower2: Network<T>,
    pub out_dim: usize,
    pub alpha1: T,
    pub reg1: T,
    pub reg2: T,
    /// Total correlation on the full training set; entry 0 is the initial
    /// network, entry `e` follows epoch `e`.
    pub training_curve: Vec<T>,
    /// Linear CCA on the tower outputs, fitted on the full training set.
    #[serde(default)]
    pub alignment: Option<CcaModel<T>>,
}

impl<T: Real> DccaModel<T> {
    pub fn train(x1: &Matrix<T>, x2: &Matrix<T>, cfg: &DccaConfig, stream: &mut RandomStream) -> Result<Self> {
        cfg.validate()?;
        let n = x1.rows();
        if x2.rows() != n {
            return dim_err(format!("views have {} and {} rows", n, x2.rows()));
        }
        if n < cfg.out_dim + 2 {
            return dim_err(format!("need at least {} samples", cfg.out_dim + 2));
        }
        let specs1 = chain_specs(x1.cols(), &cfg.hidden1, cfg.out_dim, cfg.hidden_activation, cfg.output_activation);
        let specs2 = chain_specs(x2.cols(), &cfg.hidden2, cfg.out_dim, cfg.hidden_activation, cfg.output_activation);
        let mut model = Self {
            tower1: Network::new(&specs1, &mut stream.derive(1))?,
            tower2: Network::new(&specs2, &mut stream.derive(2))?,
            out_dim: cfg.out_dim,
            alpha1: T::lit(cfg.alpha1),
            reg1: T::lit(cfg.reg1),
            reg2: T::lit(cfg.reg2),
            training_curve: Vec::with_capacity(cfg.epochs + 1),
            alignment: None,
        };
        let mut order_stream = stream.derive(3);
        let mut opt1 = Optimizer::new(cfg.optimizer.clone())?;
        let mut opt2 = Optimizer::new(cfg.optimizer.clone())?;
        let min_batch = cfg.out_dim + 2;
        let shrink = T::one() - T::lit(cfg.optimizer.learning_rate * cfg.weight_decay);

        let initial = model.total_correlation(x1, x2)?;
        model.training_curve.push(initial);
        for epoch in 1..=cfg.epochs {
            opt1.epoch = epoch;
            opt2.epoch = epoch;
            let order = order_stream.permutation(n);
            for batch in batches(&order, cfg.optimizer.batch_size, min_batch) {
                let b1 = x1.select_rows(batch);
                let b2 = x2.select_rows(batch);
                let (o1, tape1) = model.tower1.forward(&b1)?;
                let (o2, tape2) = model.tower2.forward(&b2)?;
                let loss = cca_loss_with(&o1, &o2, model.reg1, model.reg2)?;
                if !loss.corr.is_finite() {
                    return Err(Error::Training { epoch, message: "non-finite correlation".into() });
                }
                // maximize corr: descend on −corr
                let mut g1 = model.tower1.backward(&tape1, &loss.d_o1)?;
                let mut g2 = model.tower2.backward(&tape2, &loss.d_o2)?;
                g1.scale(-T::one());
                g2.scale(-T::one());
                opt1.step(&mut model.tower1, &g1)?;
                opt2.step(&mut model.tower2, &g2)?;
                if shrink < T::one() {
                    decay_weights(&mut model.tower1, shrink);
                    decay_weights(&mut model.tower2, shrink);
                }
            }
            if !(model.tower1.is_finite() && model.tower2.is_finite()) {
                return Err(Error::Training { epoch, message: "parameters diverged".into() });
            }
            let corr = model.total_correlation(x1, x2).map_err(|e| Error::Training { epoch, message: e.to_string() })?;
            if !corr.is_finite() {
                return Err(Error::Training { epoch, message: "non-finite correlation".into() });
            }
            model.training_curve.push(corr);
        }
        if cfg.align_outputs {
            let (o1, o2) = model.tower_outputs(x1, x2)?;
            let reg = model.reg1.max(model.reg2).max(T::lit(DEFAULT_REG));
            model.alignment = Some(CcaModel::fit(&o1, &o2, cfg.out_dim, reg).map_err(|e| Error::Training {
                epoch: cfg.epochs,
                message: format!("output alignment failed: {e}"),
            })?);
        }
        Ok(model)
    }

    /// Raw tower outputs, before alignment.
    pub fn tower_outputs(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        Ok((self.tower1.predict(x1)?, self.tower2.predict(x2)?))
    }

    /// Tower outputs mapped through the alignment when one was fitted.
    pub fn transform(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let (o1, o2) = self.tower_outputs(x1, x2)?;
        match &self.alignment {
            Some(a) => a.transform(&o1, &o2),
            None => Ok((o1, o2)),
        }
    }

    /// Transforms both views and fuses them with the model's `alpha1`.
    pub fn fused(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<Matrix<T>> {
        let (o1, o2) = self.transform(x1, x2)?;
        fuse(&o1, &o2, self.alpha1)
    }

    /// Total correlation of the raw tower outputs.
    pub fn total_correlation(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<T> {
        let (o1, o2) = self.tower_outputs(x1, x2)?;
        Ok(cca_loss_with(&o1, &o2, self.reg1, self.reg2)?.corr)
    }

    pub fn final_correlation(&self) -> Option<T> {
        self.training_curve.last().copied()
    }
}

/// Decoupled weight decay: `W ← (1 − η·λ) W` after each optimizer step.
fn decay_weights<T: Real>(net: &mut Network<T>, shrink: T) {
    for layer in net.layers_mut() {
        layer.weights = layer.weights.scale(shrink);
    }
}

/// Splits `order` into batches of `size`; a trailing batch smaller than
/// `min` is folded into the previous one.
fn batches(order: &[usize], size: usize, min: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = Vec::new();
    let mut start = 0;
    while start < order.len() {
        let end = (start + size).min(order.len());
        let rest = order.len() - end;
        if rest > 0 && rest < min {
            out.push(&order[start..]);
            break;
        }
        out.push(&order[start..end]);
        start = end;
    }
    out
}

//! Bimodal deep autoencoder baseline built from Bernoulli RBMs.
//!
//! Each modality gets its own RBM, a joint RBM models the concatenated hidden
//! activations, and the stack is unfolded into an encoder/decoder pair that
//! is fine-tuned on the reconstruction error of both modalities.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::neuralnet::{sigmoid, Activation, Layer, Network, Optimizer, OptimizerConfig};
use crate::numerics::{Matrix, RandomStream, Real};

/// Bernoulli-Bernoulli RBM with `E(v, h) = −vᵀWh − bᵀv − aᵀh`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Rbm<T> {
    /// `visible × hidden`.
    pub weights: Matrix<T>,
    pub visible_bias: Vec<T>,
    pub hidden_bias: Vec<T>,
}

/// Summary of one CD-1 step.
#[derive(Clone, Debug)]
pub struct CdStats<T> {
    /// Mean squared difference between the batch and its reconstruction.
    pub reconstruction_error: T,
    pub reconstruction: Matrix<T>,
}

/// Contract check shared by RBM training and the autoencoder.
pub fn check_unit_interval<T: Real>(x: &Matrix<T>, what: &str) -> Result<()> {
    for row in x.row_iter() {
        if let Some(j) = row.iter().position(|&v| !(v >= T::zero() && v <= T::one())) {
            return Err(Error::Contract(format!(
                "{what}: column {j} has value {} outside [0, 1]",
                row[j]
            )));
        }
    }
    Ok(())
}

fn mean_squared<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> T {
    let n = T::from_usize_lossy(a.rows() * a.cols()).max(T::one());
    a.as_slice().iter().zip(b.as_slice()).map(|(&x, &y)| (x - y) * (x - y)).sum::<T>() / n
}

fn affine_sigmoid<T: Real>(x: &Matrix<T>, w: &Matrix<T>, bias: &[T], transpose: bool) -> Matrix<T> {
    let mut z = if transpose { x.dot_t(w) } else { x.dot(w) };
    for i in 0..z.rows() {
        for (v, &b) in z.row_mut(i).iter_mut().zip(bias) {
            *v = sigmoid(*v + b);
        }
    }
    z
}

impl<T: Real> Rbm<T> {
    /// Weights drawn from `N(0, 0.01²)`, zero biases.
    pub fn new(visible: usize, hidden: usize, stream: &mut RandomStream) -> Result<Self> {
        if visible == 0 || hidden == 0 {
            return param_err("RBM layers need at least one unit");
        }
        let weights = Matrix::from_fn(visible, hidden, |_, _| T::lit(0.01) * stream.normal::<T>());
        Ok(Self { weights, visible_bias: vec![T::zero(); visible], hidden_bias: vec![T::zero(); hidden] })
    }

    pub fn visible(&self) -> usize {
        self.weights.rows()
    }

    pub fn hidden(&self) -> usize {
        self.weights.cols()
    }

    pub fn energy(&self, v: &[T], h: &[T]) -> Result<T> {
        if v.len() != self.visible() || h.len() != self.hidden() {
            return dim_err(format!(
                "energy of ({}, {}) states on a {}x{} RBM",
                v.len(),
                h.len(),
                self.visible(),
                self.hidden()
            ));
        }
        let mut e = T::zero();
        for (i, &vi) in v.iter().enumerate() {
            let wh: T = self.weights.row(i).iter().zip(h).map(|(&w, &hj)| w * hj).sum();
            e -= vi * wh + self.visible_bias[i] * vi;
        }
        e -= self.hidden_bias.iter().zip(h).map(|(&a, &hj)| a * hj).sum::<T>();
        Ok(e)
    }

    /// `p(h_j = 1 | v) = σ(Σ_i W_ij v_i + a_j)` for each row of `v`.
    pub fn hidden_probs(&self, v: &Matrix<T>) -> Result<Matrix<T>> {
        if v.cols() != self.visible() {
            return dim_err(format!("RBM expects {} visible units, got {}", self.visible(), v.cols()));
        }
        Ok(affine_sigmoid(v, &self.weights, &self.hidden_bias, false))
    }

    /// `p(v_i = 1 | h) = σ(Σ_j W_ij h_j + b_i)`.
    pub fn visible_probs(&self, h: &Matrix<T>) -> Result<Matrix<T>> {
        if h.cols() != self.hidden() {
            return dim_err(format!("RBM expects {} hidden units, got {}", self.hidden(), h.cols()));
        }
        Ok(affine_sigmoid(h, &self.weights, &self.visible_bias, true))
    }

    /// One contrastive-divergence step: sample `h ~ p(h|v)`, reconstruct
    /// `v' = p(v|h)`, and move parameters by
    /// `lr·(⟨v hᵀ⟩_data − ⟨v' h'ᵀ⟩_recon)`.
    pub fn cd1_update(&mut self, batch: &Matrix<T>, lr: T, stream: &mut RandomStream) -> Result<CdStats<T>> {
        check_unit_interval(batch, "cd1_update")?;
        if batch.rows() == 0 {
            return param_err("empty batch");
        }
        let h0 = self.hidden_probs(batch)?;
        let h_sample = h0.map(|p| if stream.uniform::<T>() < p { T::one() } else { T::zero() });
        let v1 = self.visible_probs(&h_sample)?;
        let h1 = self.hidden_probs(&v1)?;
        let scale = lr / T::from_usize_lossy(batch.rows());

        let pos = batch.t_dot(&h0);
        let neg = v1.t_dot(&h1);
        for ((w, &p), &q) in self.weights.as_mut_slice().iter_mut().zip(pos.as_slice()).zip(neg.as_slice()) {
            *w += scale * (p - q);
        }
        for i in 0..batch.rows() {
            for (b, (&x, &r)) in self.visible_bias.iter_mut().zip(batch.row(i).iter().zip(v1.row(i))) {
                *b += scale * (x - r);
            }
            for (a, (&p, &q)) in self.hidden_bias.iter_mut().zip(h0.row(i).iter().zip(h1.row(i))) {
                *a += scale * (p - q);
            }
        }
        Ok(CdStats { reconstruction_error: mean_squared(batch, &v1), reconstruction: v1 })
    }

    pub fn is_finite(&self) -> bool {
        self.weights.is_finite()
            && self.visible_bias.iter().all(|v| v.is_finite())
            && self.hidden_bias.iter().all(|v| v.is_finite())
    }

    fn encoder_layer(&self) -> Layer<T> {
        Layer { weights: self.weights.clone(), bias: self.hidden_bias.clone(), activation: Activation::Sigmoid }
    }

    fn decoder_layer(&self) -> Layer<T> {
        Layer { weights: self.weights.transpose(), bias: self.visible_bias.clone(), activation: Activation::Sigmoid }
    }
}

/// Trains an RBM with CD-1 over shuffled minibatches; returns the model and
/// the mean per-epoch reconstruction error.
pub fn train_rbm<T: Real>(
    data: &Matrix<T>,
    hidden: usize,
    epochs: usize,
    lr: f64,
    batch_size: usize,
    stream: &mut RandomStream,
) -> Result<(Rbm<T>, Vec<T>)> {
    check_unit_interval(data, "train_rbm")?;
    if batch_size == 0 {
        return param_err("batch size must be positive");
    }
    let mut rbm = Rbm::new(data.cols(), hidden, &mut stream.derive(0))?;
    let mut order_stream = stream.derive(1);
    let mut sample_stream = stream.derive(2);
    let lr = T::lit(lr);
    let mut curve = Vec::with_capacity(epochs);
    for epoch in 1..=epochs {
        let order = order_stream.permutation(data.rows());
        let mut total = T::zero();
        let mut batches = 0usize;
        for idx in order.chunks(batch_size) {
            let stats = rbm.cd1_update(&data.select_rows(idx), lr, &mut sample_stream)?;
            total += stats.reconstruction_error;
            batches += 1;
        }
        if !rbm.is_finite() {
            return Err(Error::Training { epoch, message: "RBM parameters diverged".into() });
        }
        curve.push(total / T::from_usize_lossy(batches.max(1)));
    }
    Ok((rbm, curve))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BdaeConfig {
    pub hidden1: usize,
    pub hidden2: usize,
    pub shared_dim: usize,
    pub pretrain_epochs: usize,
    pub pretrain_lr: f64,
    pub pretrain_batch: usize,
    pub finetune_epochs: usize,
    pub optimizer: OptimizerConfig,
}

impl Default for BdaeConfig {
    fn default() -> Self {
        Self {
            hidden1: 128,
            hidden2: 128,
            shared_dim: 64,
            pretrain_epochs: 30,
            pretrain_lr: 0.1,
            pretrain_batch: 10,
            finetune_epochs: 10,
            optimizer: OptimizerConfig { learning_rate: 1e-3, batch_size: 50, ..OptimizerConfig::default() },
        }
    }
}

impl BdaeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.hidden1 == 0 || self.hidden2 == 0 || self.shared_dim == 0 {
            return param_err("BDAE layer sizes must be positive");
        }
        if !(self.pretrain_lr >= 0.0) || self.pretrain_batch == 0 {
            return param_err("bad pretraining settings");
        }
        self.optimizer.validate()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct BdaeModel<T> {
    pub rbm1: Rbm<T>,
    pub rbm2: Rbm<T>,
    pub joint: Rbm<T>,
    pub encoder1: Network<T>,
    pub encoder2: Network<T>,
    pub joint_encoder: Network<T>,
    pub joint_decoder: Network<T>,
    pub decoder1: Network<T>,
    pub decoder2: Network<T>,
    pub shared_dim: usize,
    /// Summed per-modality reconstruction MSE; entry 0 precedes fine-tuning.
    pub finetune_curve: Vec<T>,
}

struct Pass<T> {
    y1: Matrix<T>,
    y2: Matrix<T>,
    tapes: [crate::neuralnet::Tape<T>; 6],
}

impl<T: Real> BdaeModel<T> {
    fn check_inputs(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<()> {
        if x1.rows() != x2.rows() {
            return dim_err(format!("views have {} and {} rows", x1.rows(), x2.rows()));
        }
        if x1.cols() != self.rbm1.visible() || x2.cols() != self.rbm2.visible() {
            return dim_err(format!(
                "model expects {}+{} features, got {}+{}",
                self.rbm1.visible(),
                self.rbm2.visible(),
                x1.cols(),
                x2.cols()
            ));
        }
        Ok(())
    }

    /// Deterministic mean-field code of the shared layer, `N × shared_dim`.
    pub fn encode(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_inputs(x1, x2)?;
        let h = self.encoder1.predict(x1)?.hcat(&self.encoder2.predict(x2)?)?;
        self.joint_encoder.predict(&h)
    }

    pub fn reconstruct(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        let s = self.encode(x1, x2)?;
        let r = self.joint_decoder.predict(&s)?;
        let (r1, r2) = r.split_cols(self.rbm1.hidden());
        Ok((self.decoder1.predict(&r1)?, self.decoder2.predict(&r2)?))
    }

    /// `MSE(x1) + MSE(x2)` of the autoencoder's reconstruction.
    pub fn reconstruction_error(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<T> {
        let (y1, y2) = self.reconstruct(x1, x2)?;
        Ok(mean_squared(&y1, x1) + mean_squared(&y2, x2))
    }

    fn forward(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<Pass<T>> {
        let (h1, t1) = self.encoder1.forward(x1)?;
        let (h2, t2) = self.encoder2.forward(x2)?;
        let (s, tj) = self.joint_encoder.forward(&h1.hcat(&h2)?)?;
        let (r, td) = self.joint_decoder.forward(&s)?;
        let (r1, r2) = r.split_cols(self.rbm1.hidden());
        let (y1, t5) = self.decoder1.forward(&r1)?;
        let (y2, t6) = self.decoder2.forward(&r2)?;
        Ok(Pass { y1, y2, tapes: [t1, t2, tj, td, t5, t6] })
    }

    fn networks_mut(&mut self) -> [&mut Network<T>; 6] {
        [
            &mut self.encoder1,
            &mut self.encoder2,
            &mut self.joint_encoder,
            &mut self.joint_decoder,
            &mut self.decoder1,
            &mut self.decoder2,
        ]
    }
}

/// Pretrains the RBM stack, unfolds it and fine-tunes the autoencoder on
/// `MSE(x1) + MSE(x2)`. Inputs must already be scaled into `[0, 1]`.
pub fn train_bdae<T: Real>(
    x1: &Matrix<T>,
    x2: &Matrix<T>,
    cfg: &BdaeConfig,
    stream: &mut RandomStream,
) -> Result<BdaeModel<T>> {
    cfg.validate()?;
    if x1.rows() != x2.rows() {
        return dim_err(format!("views have {} and {} rows", x1.rows(), x2.rows()));
    }
    if x1.rows() == 0 {
        return param_err("empty training set");
    }
    check_unit_interval(x1, "train_bdae view 1")?;
    check_unit_interval(x2, "train_bdae view 2")?;

    let pre = |data: &Matrix<T>, hidden: usize, key: u64| {
        train_rbm(data, hidden, cfg.pretrain_epochs, cfg.pretrain_lr, cfg.pretrain_batch, &mut stream.derive(key))
    };
    let (rbm1, _) = pre(x1, cfg.hidden1, 1)?;
    let (rbm2, _) = pre(x2, cfg.hidden2, 2)?;
    let joint_input = rbm1.hidden_probs(x1)?.hcat(&rbm2.hidden_probs(x2)?)?;
    let (joint, _) = pre(&joint_input, cfg.shared_dim, 3)?;

    let net = |layer: Layer<T>| Network::from_layers(vec![layer]);
    let mut model = BdaeModel {
        encoder1: net(rbm1.encoder_layer())?,
        encoder2: net(rbm2.encoder_layer())?,
        joint_encoder: net(joint.encoder_layer())?,
        joint_decoder: net(joint.decoder_layer())?,
        decoder1: net(rbm1.decoder_layer())?,
        decoder2: net(rbm2.decoder_layer())?,
        rbm1,
        rbm2,
        joint,
        shared_dim: cfg.shared_dim,
        finetune_curve: Vec::with_capacity(cfg.finetune_epochs + 1),
    };
    model.finetune_curve.push(model.reconstruction_error(x1, x2)?);

    let mut opts: Vec<Optimizer<T>> =
        (0..6).map(|_| Optimizer::new(cfg.optimizer.clone())).collect::<Result<_>>()?;
    let mut order_stream = stream.derive(4);
    let h1_dim = model.rbm1.hidden();
    for epoch in 1..=cfg.finetune_epochs {
        opts.iter_mut().for_each(|o| o.epoch = epoch);
        let order = order_stream.permutation(x1.rows());
        for idx in order.chunks(cfg.optimizer.batch_size) {
            let b1 = x1.select_rows(idx);
            let b2 = x2.select_rows(idx);
            let pass = model.forward(&b1, &b2)?;
            let s1 = T::lit(2.0) / T::from_usize_lossy(b1.rows() * b1.cols());
            let s2 = T::lit(2.0) / T::from_usize_lossy(b2.rows() * b2.cols());
            let d_y1 = pass.y1.sub(&b1).scale(s1);
            let d_y2 = pass.y2.sub(&b2).scale(s2);

            let [t1, t2, tj, td, t5, t6] = &pass.tapes;
            let g5 = model.decoder1.backward(t5, &d_y1)?;
            let g6 = model.decoder2.backward(t6, &d_y2)?;
            let gd = model.joint_decoder.backward(td, &g5.input.hcat(&g6.input)?)?;
            let gj = model.joint_encoder.backward(tj, &gd.input)?;
            let (d_h1, d_h2) = gj.input.split_cols(h1_dim);
            let g1 = model.encoder1.backward(t1, &d_h1)?;
            let g2 = model.encoder2.backward(t2, &d_h2)?;
            let grads = [g1, g2, gj, gd, g5, g6];
            for ((net, opt), g) in model.networks_mut().into_iter().zip(&mut opts).zip(&grads) {
                opt.step(net, g)?;
            }
        }
        let err = model.reconstruction_error(x1, x2)?;
        if !err.is_finite() {
            return Err(Error::Training { epoch, message: "non-finite reconstruction error".into() });
        }
        model.finetune_curve.push(err);
    }
    Ok(model)
}

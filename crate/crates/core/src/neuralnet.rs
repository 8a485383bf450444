//! Small dense feedforward networks with exact backpropagation.
//!
//! Used by the DCCA towers, the MINE statistic network and BDAE fine-tuning.
//! Weights are stored `input × output` so a forward pass is `X·W + b`.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::numerics::{Matrix, RandomStream, Real};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Identity,
    Sigmoid,
    Tanh,
    Relu,
}

impl Activation {
    #[inline]
    pub fn apply<T: Real>(self, x: T) -> T {
        match self {
            Activation::Identity => x,
            Activation::Sigmoid => sigmoid(x),
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(T::zero()),
        }
    }

    /// Derivative expressed through the activation's output `y`.
    #[inline]
    fn derivative_from_output<T: Real>(self, y: T) -> T {
        match self {
            Activation::Identity => T::one(),
            Activation::Sigmoid => y * (T::one() - y),
            Activation::Tanh => T::one() - y * y,
            Activation::Relu => {
                if y > T::zero() {
                    T::one()
                } else {
                    T::zero()
                }
            }
        }
    }
}

#[inline]
pub fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub input_dim: usize,
    pub output_dim: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_dim: usize, output_dim: usize, activation: Activation) -> Self {
        Self { input_dim, output_dim, activation }
    }
}

/// Specs for a chain `input → hidden… → output`.
pub fn chain_specs(input: usize, hidden: &[usize], output: usize, hidden_act: Activation, output_act: Activation) -> Vec<LayerSpec> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    let last = dims.len() - 2;
    dims.windows(2)
        .enumerate()
        .map(|(i, w)| LayerSpec::new(w[0], w[1], if i == last { output_act } else { hidden_act }))
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Layer<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    pub fn spec(&self) -> LayerSpec {
        LayerSpec::new(self.weights.rows(), self.weights.cols(), self.activation)
    }

    /// Glorot-uniform weights in `±sqrt(6 / (fan_in + fan_out))`, zero bias.
    pub fn init(spec: LayerSpec, stream: &mut RandomStream) -> Self {
        let limit = T::lit((6.0 / (spec.input_dim + spec.output_dim) as f64).sqrt());
        let weights = Matrix::from_fn(spec.input_dim, spec.output_dim, |_, _| {
            stream.uniform_range(-limit, limit)
        });
        Self { weights, bias: vec![T::zero(); spec.output_dim], activation: spec.activation }
    }

    fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut z = x.dot(&self.weights);
        for i in 0..z.rows() {
            for (v, &b) in z.row_mut(i).iter_mut().zip(&self.bias) {
                *v = self.activation.apply(*v + b);
            }
        }
        z
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct Network<T> {
    layers: Vec<Layer<T>>,
    /// Bumped on every parameter update so stale tapes are detected.
    #[serde(skip)]
    generation: u64,
}

/// Activations recorded by [`Network::forward`] for use by [`Network::backward`].
#[derive(Clone, Debug)]
pub struct Tape<T> {
    generation: u64,
    input: Matrix<T>,
    outputs: Vec<Matrix<T>>,
}

#[derive(Clone, Debug)]
pub struct LayerGrad<T> {
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
}

#[derive(Clone, Debug)]
pub struct Gradients<T> {
    pub layers: Vec<LayerGrad<T>>,
    /// Gradient with respect to the network input.
    pub input: Matrix<T>,
}

impl<T: Real> Gradients<T> {
    pub fn scale(&mut self, s: T) {
        for g in &mut self.layers {
            g.weights = g.weights.scale(s);
            g.bias.iter_mut().for_each(|b| *b *= s);
        }
        self.input = self.input.scale(s);
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|g| g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite()))
    }

    fn flat_get(&self, mut idx: usize) -> T {
        for g in &self.layers {
            let nw = g.weights.rows() * g.weights.cols();
            if idx < nw {
                return g.weights.as_slice()[idx];
            }
            idx -= nw;
            if idx < g.bias.len() {
                return g.bias[idx];
            }
            idx -= g.bias.len();
        }
        panic!("gradient index out of range")
    }
}

impl<T: Real> Network<T> {
    pub fn new(specs: &[LayerSpec], stream: &mut RandomStream) -> Result<Self> {
        validate_specs(specs)?;
        let layers = specs.iter().map(|&s| Layer::init(s, stream)).collect();
        Ok(Self { layers, generation: 0 })
    }

    pub fn from_layers(layers: Vec<Layer<T>>) -> Result<Self> {
        let specs: Vec<LayerSpec> = layers.iter().map(Layer::spec).collect();
        validate_specs(&specs)?;
        if layers.iter().any(|l| l.bias.len() != l.weights.cols()) {
            return dim_err("bias length must equal layer output dim");
        }
        Ok(Self { layers, generation: 0 })
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer<T>] {
        self.generation += 1;
        &mut self.layers
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.rows()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("non-empty").weights.cols()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.rows() * l.weights.cols() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers.iter().all(|l| l.weights.is_finite() && l.bias.iter().all(|b| b.is_finite()))
    }

    fn check_input(&self, x: &Matrix<T>) -> Result<()> {
        if x.cols() != self.input_dim() {
            return dim_err(format!("network expects {} inputs, got {}", self.input_dim(), x.cols()));
        }
        Ok(())
    }

    /// Inference without recording a tape.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x)?;
        let mut h = self.layers[0].forward(x);
        for layer in &self.layers[1..] {
            h = layer.forward(&h);
        }
        Ok(h)
    }

    pub fn forward(&self, x: &Matrix<T>) -> Result<(Matrix<T>, Tape<T>)> {
        self.check_input(x)?;
        let mut outputs: Vec<Matrix<T>> = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let out = layer.forward(if i == 0 { x } else { &outputs[i - 1] });
            outputs.push(out);
        }
        let out = outputs.last().expect("non-empty").clone();
        Ok((out, Tape { generation: self.generation, input: x.clone(), outputs }))
    }

    pub fn backward(&self, tape: &Tape<T>, d_output: &Matrix<T>) -> Result<Gradients<T>> {
        if tape.generation != self.generation || tape.outputs.len() != self.layers.len() {
            return Err(Error::Contract("tape was recorded before the last parameter update".into()));
        }
        let out = tape.outputs.last().expect("non-empty");
        if d_output.shape() != out.shape() {
            return dim_err(format!("upstream gradient {:?} vs output {:?}", d_output.shape(), out.shape()));
        }
        let mut grads = Vec::with_capacity(self.layers.len());
        let mut upstream = d_output.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let y = &tape.outputs[i];
            let delta = upstream.zip_map(y, |g, y| g * layer.activation.derivative_from_output(y));
            let input = if i == 0 { &tape.input } else { &tape.outputs[i - 1] };
            let weights = input.t_dot(&delta);
            let mut bias = vec![T::zero(); delta.cols()];
            for row in delta.row_iter() {
                for (b, &d) in bias.iter_mut().zip(row) {
                    *b += d;
                }
            }
            upstream = delta.dot_t(&layer.weights);
            grads.push(LayerGrad { weights, bias });
        }
        grads.reverse();
        Ok(Gradients { layers: grads, input: upstream })
    }

    /// Flat parameter access in layer order (weights row-major, then bias).
    fn param_mut(&mut self, mut idx: usize) -> &mut T {
        for l in &mut self.layers {
            let nw = l.weights.rows() * l.weights.cols();
            if idx < nw {
                return &mut l.weights.as_mut_slice()[idx];
            }
            idx -= nw;
            if idx < l.bias.len() {
                return &mut l.bias[idx];
            }
            idx -= l.bias.len();
        }
        panic!("parameter index out of range")
    }
}

fn validate_specs(specs: &[LayerSpec]) -> Result<()> {
    if specs.is_empty() {
        return param_err("network needs at least one layer");
    }
    if specs.iter().any(|s| s.input_dim == 0 || s.output_dim == 0) {
        return param_err("layer dims must be >= 1");
    }
    for w in specs.windows(2) {
        if w[0].output_dim != w[1].input_dim {
            return dim_err(format!("layer output {} does not feed input {}", w[0].output_dim, w[1].input_dim));
        }
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Central-difference step used by [`grad_check`].
pub const FD_STEP: f64 = 1e-5;

/// Compares backprop gradients against central finite differences on a random
/// sample of at most `samples` parameters.
///
/// `loss` maps the network output to `(loss, dloss/doutput)`. The relative
/// error of each parameter is `|a − n| / max(|a|, |n|, 1e-6)`.
pub fn grad_check<T: Real, F>(
    net: &Network<T>,
    loss: F,
    x: &Matrix<T>,
    tol: f64,
    samples: usize,
    stream: &mut RandomStream,
) -> Result<GradCheckReport>
where
    F: Fn(&Matrix<T>) -> (T, Matrix<T>),
{
    let (out, tape) = net.forward(x)?;
    let (_, d_out) = loss(&out);
    let grads = net.backward(&tape, &d_out)?;
    grad_check_against(net, loss, x, &grads, tol, samples, stream)
}

/// Like [`grad_check`] but checks caller-supplied gradients.
pub fn grad_check_against<T: Real, F>(
    net: &Network<T>,
    loss: F,
    x: &Matrix<T>,
    grads: &Gradients<T>,
    tol: f64,
    samples: usize,
    stream: &mut RandomStream,
) -> Result<GradCheckReport>
where
    F: Fn(&Matrix<T>) -> (T, Matrix<T>),
{
    let total = net.parameter_count();
    let mut idx: Vec<usize> = (0..total).collect();
    if samples < total {
        stream.shuffle(&mut idx);
        idx.truncate(samples);
    }
    let h = T::lit(FD_STEP);
    let mut probe = net.clone();
    let mut max_rel: f64 = 0.0;
    for &p in &idx {
        let orig = *probe.param_mut(p);
        *probe.param_mut(p) = orig + h;
        let (lp, _) = loss(&probe.predict(x)?);
        *probe.param_mut(p) = orig - h;
        let (lm, _) = loss(&probe.predict(x)?);
        *probe.param_mut(p) = orig;
        let numeric = ((lp - lm) / (h + h)).as_f64();
        let analytic = grads.flat_get(p).as_f64();
        let denom = analytic.abs().max(numeric.abs()).max(1e-6);
        max_rel = max_rel.max((analytic - numeric).abs() / denom);
    }
    Ok(GradCheckReport { max_rel_error: max_rel, checked: idx.len(), tolerance: tol, passed: max_rel < tol })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerMethod {
    Sgd,
    Rmsprop,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimizerConfig {
    pub method: OptimizerMethod,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// SGD momentum.
    pub momentum: f64,
    /// RMSprop decay of the squared-gradient average.
    pub decay: f64,
    pub epsilon: f64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            method: OptimizerMethod::Rmsprop,
            learning_rate: 1e-3,
            batch_size: 100,
            momentum: 0.0,
            decay: 0.9,
            epsilon: 1e-8,
        }
    }
}

impl OptimizerConfig {
    pub fn sgd(learning_rate: f64) -> Self {
        Self { method: OptimizerMethod::Sgd, learning_rate, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return param_err("learning rate must be positive");
        }
        if self.batch_size < 2 {
            return param_err("batch size must be >= 2");
        }
        if !(0.0..1.0).contains(&self.decay) || !(0.0..1.0).contains(&self.momentum) {
            return param_err("decay and momentum must lie in [0, 1)");
        }
        Ok(())
    }
}

/// Stateful first-order optimizer bound to one network's shape.
#[derive(Clone, Debug)]
pub struct Optimizer<T> {
    cfg: OptimizerConfig,
    state: Vec<LayerGrad<T>>,
    /// Reported in training errors.
    pub epoch: usize,
}

impl<T: Real> Optimizer<T> {
    pub fn new(cfg: OptimizerConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self { cfg, state: Vec::new(), epoch: 0 })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    /// Applies one descent step `w ← w − update(g)`.
    pub fn step(&mut self, net: &mut Network<T>, grads: &Gradients<T>) -> Result<()> {
        if grads.layers.len() != net.layers.len() {
            return dim_err("gradient set does not match network");
        }
        if !grads.is_finite() {
            let bad: Vec<usize> = grads
                .layers
                .iter()
                .enumerate()
                .filter(|(_, g)| !(g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite())))
                .map(|(i, _)| i)
                .collect();
            return Err(Error::Training {
                epoch: self.epoch,
                message: format!("non-finite gradient in layer(s) {bad:?}"),
            });
        }
        if self.state.is_empty() {
            self.state = grads
                .layers
                .iter()
                .map(|g| LayerGrad {
                    weights: Matrix::zeros(g.weights.rows(), g.weights.cols()),
                    bias: vec![T::zero(); g.bias.len()],
                })
                .collect();
        }
        let lr = T::lit(self.cfg.learning_rate);
        let method = self.cfg.method;
        let momentum = T::lit(self.cfg.momentum);
        let decay = T::lit(self.cfg.decay);
        let eps = T::lit(self.cfg.epsilon);
        let update = |w: &mut T, s: &mut T, g: T| match method {
            OptimizerMethod::Sgd => {
                *s = momentum * *s + g;
                *w -= lr * *s;
            }
            OptimizerMethod::Rmsprop => {
                *s = decay * *s + (T::one() - decay) * g * g;
                *w -= lr * g / (s.sqrt() + eps);
            }
        };
        net.generation += 1;
        for ((layer, g), st) in net.layers.iter_mut().zip(&grads.layers).zip(&mut self.state) {
            for ((w, s), &gv) in layer
                .weights
                .as_mut_slice()
                .iter_mut()
                .zip(st.weights.as_mut_slice())
                .zip(g.weights.as_slice())
            {
                update(w, s, gv);
            }
            for ((b, s), &gv) in layer.bias.iter_mut().zip(&mut st.bias).zip(&g.bias) {
                update(b, s, gv);
            }
        }
        Ok(())
    }
}

/// `(½‖Y − target‖², Y − target)`, a simple loss for checks and fine-tuning.
pub fn squared_error<T: Real>(output: &Matrix<T>, target: &Matrix<T>) -> (T, Matrix<T>) {
    let diff = output.sub(target);
    let loss = diff.as_slice().iter().map(|&d| d * d).sum::<T>() * T::lit(0.5);
    (loss, diff)
}

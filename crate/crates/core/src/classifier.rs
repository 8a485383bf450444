//! Linear one-vs-rest SVM trained by averaged stochastic subgradient descent.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::fusion::argmax;
use crate::numerics::{Matrix, RandomStream, Real};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmConfig {
    pub c: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self { c: 1.0, epochs: 30, learning_rate: 0.1, batch_size: 32 }
    }
}

impl SvmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0) || !self.c.is_finite() {
            return param_err(format!("C must be positive, got {}", self.c));
        }
        if !(self.learning_rate > 0.0) {
            return param_err("learning rate must be positive");
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return param_err("epochs and batch size must be positive");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct SvmModel<T> {
    /// One row per class.
    pub weights: Matrix<T>,
    pub bias: Vec<T>,
    pub c: f64,
    /// Summed one-vs-rest objective of the averaged model after each epoch.
    pub objective_curve: Vec<T>,
}

/// `Σ_k λ/2‖w_k‖² + mean_i max(0, 1 − y_ik(w_k·x_i + b_k))`.
fn objective<T: Real>(w: &Matrix<T>, b: &[T], x: &Matrix<T>, y: &[usize], lambda: T) -> T {
    let scores = x.dot_t(w);
    let n = T::from_usize_lossy(x.rows());
    let reg: T = w.as_slice().iter().map(|&v| v * v).sum::<T>() * lambda * T::lit(0.5);
    let mut hinge = T::zero();
    for (i, &label) in y.iter().enumerate() {
        for (k, &s) in scores.row(i).iter().enumerate() {
            let sign = if k == label { T::one() } else { -T::one() };
            hinge += (T::one() - sign * (s + b[k])).max(T::zero());
        }
    }
    reg + hinge / n
}

/// Trains one binary hinge-loss classifier per class.
///
/// Step size `η_t = η₀/√t`; the L2 term is applied as the proximal shrink
/// `w ← w/(1 + ηλ)` with `λ = 1/(C·N)`. The returned weights are a running
/// average of the iterates weighted by step index.
pub fn train_svm<T: Real>(
    x: &Matrix<T>,
    y: &[usize],
    cfg: &SvmConfig,
    stream: &mut RandomStream,
) -> Result<SvmModel<T>> {
    cfg.validate()?;
    let (n, d) = x.shape();
    if y.len() != n {
        return dim_err(format!("{n} samples vs {} labels", y.len()));
    }
    if n == 0 {
        return param_err("empty training set");
    }
    let k = y.iter().max().map_or(0, |&m| m + 1);
    let mut present = vec![false; k];
    y.iter().for_each(|&l| present[l] = true);
    if present.iter().filter(|&&p| p).count() < 2 {
        return param_err("training labels contain a single class");
    }
    if !x.is_finite() {
        return Err(Error::Contract("non-finite training features".into()));
    }

    let lambda = T::lit(1.0 / (cfg.c * n as f64));
    let eta0 = T::lit(cfg.learning_rate);
    let mut w = Matrix::<T>::zeros(k, d);
    let mut b = vec![T::zero(); k];
    let mut w_avg = w.clone();
    let mut b_avg = b.clone();
    let mut grad_w = Matrix::<T>::zeros(k, d);
    let mut grad_b = vec![T::zero(); k];
    let mut t = 0usize;
    let mut curve = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        let order = stream.permutation(n);
        for batch in order.chunks(cfg.batch_size) {
            t += 1;
            let eta = eta0 / T::from_usize_lossy(t).sqrt();
            let inv_b = T::one() / T::from_usize_lossy(batch.len());
            grad_w.as_mut_slice().iter_mut().for_each(|g| *g = T::zero());
            grad_b.iter_mut().for_each(|g| *g = T::zero());
            for &i in batch {
                let xi = x.row(i);
                for c in 0..k {
                    let sign = if y[i] == c { T::one() } else { -T::one() };
                    let score = w.row(c).iter().zip(xi).map(|(&a, &v)| a * v).sum::<T>() + b[c];
                    if sign * score < T::one() {
                        let g = grad_w.row_mut(c);
                        for (gj, &v) in g.iter_mut().zip(xi) {
                            *gj -= sign * v * inv_b;
                        }
                        grad_b[c] -= sign * inv_b;
                    }
                }
            }
            let shrink = T::one() / (T::one() + eta * lambda);
            for (wj, &gj) in w.as_mut_slice().iter_mut().zip(grad_w.as_slice()) {
                *wj = (*wj - eta * gj) * shrink;
            }
            for (bc, &gc) in b.iter_mut().zip(&grad_b) {
                *bc -= eta * gc;
            }
            let rho = T::lit(2.0) / T::from_usize_lossy(t + 1);
            for (a, &v) in w_avg.as_mut_slice().iter_mut().zip(w.as_slice()) {
                *a += rho * (v - *a);
            }
            for (a, &v) in b_avg.iter_mut().zip(&b) {
                *a += rho * (v - *a);
            }
        }
        let obj = objective(&w_avg, &b_avg, x, y, lambda);
        if !obj.is_finite() {
            return Err(Error::Training { epoch: curve.len(), message: "non-finite SVM objective".into() });
        }
        curve.push(obj);
    }
    Ok(SvmModel { weights: w_avg, bias: b_avg, c: cfg.c, objective_curve: curve })
}

impl<T: Real> SvmModel<T> {
    pub fn classes(&self) -> usize {
        self.weights.rows()
    }

    pub fn input_dim(&self) -> usize {
        self.weights.cols()
    }

    /// Margin scores, `samples × classes`.
    pub fn decision_function(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        if x.cols() != self.input_dim() {
            return dim_err(format!("model expects {} features, got {}", self.input_dim(), x.cols()));
        }
        let mut s = x.dot_t(&self.weights);
        s.add_row_vector(&self.bias);
        Ok(s)
    }

    /// Argmax of the margin scores; ties go to the lowest class index.
    pub fn predict(&self, x: &Matrix<T>) -> Result<Vec<usize>> {
        let s = self.decision_function(x)?;
        Ok(s.row_iter().map(argmax).collect())
    }

    /// Softmax over margin scores, `samples × classes`.
    pub fn predict_proba(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        let mut s = self.decision_function(x)?;
        for i in 0..s.rows() {
            let row = s.row_mut(i);
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            row.iter_mut().for_each(|v| *v = (*v - m).exp());
            let z: T = row.iter().copied().sum();
            row.iter_mut().for_each(|v| *v /= z);
        }
        Ok(s)
    }
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    predicted.iter().zip(truth).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}

/// `confusion[true][predicted]` counts over `classes` labels.
pub fn confusion_matrix(predicted: &[usize], truth: &[usize], classes: usize) -> Vec<Vec<usize>> {
    let mut m = vec![vec![0; classes]; classes];
    for (&p, &t) in predicted.iter().zip(truth) {
        if p < classes && t < classes {
            m[t][p] += 1;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(stream: &mut RandomStream, per_class: usize) -> (Matrix<f64>, Vec<usize>) {
        let means = [[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]];
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for (c, m) in means.iter().enumerate() {
            for _ in 0..per_class {
                rows.push(vec![m[0] + 0.1 * stream.normal::<f64>(), m[1] + 0.1 * stream.normal::<f64>()]);
                y.push(c);
            }
        }
        (Matrix::from_rows(&rows).unwrap(), y)
    }

    #[test]
    fn separable_pair() {
        let x = Matrix::from_vec(2, 1, vec![-1.0, 1.0]).unwrap();
        let y = [0, 1];
        let m = train_svm(&x, &y, &SvmConfig::default(), &mut RandomStream::new(0, 0)).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0, 1]);
    }

    #[test]
    fn gaussian_blobs() {
        let mut s = RandomStream::new(1, 0);
        let (x, y) = blobs(&mut s, 100);
        let (xt, yt) = blobs(&mut s, 100);
        let m = train_svm(&x, &y, &SvmConfig::default(), &mut s).unwrap();
        let acc = accuracy(&m.predict(&xt).unwrap(), &yt);
        assert!(acc >= 0.98, "{acc}");
    }

    #[test]
    fn tiny_c_falls_back_to_majority() {
        let mut s = RandomStream::new(2, 0);
        let (x, mut y) = blobs(&mut s, 50);
        // make class 2 the majority
        y.iter_mut().take(20).for_each(|l| *l = 2);
        let cfg = SvmConfig { c: 1e-9, ..SvmConfig::default() };
        let m = train_svm(&x, &y, &cfg, &mut s).unwrap();
        assert!(m.weights.max_abs() < 1e-6);
        let pred = m.predict(&x).unwrap();
        assert!(pred.iter().all(|&p| p == 2));
    }

    #[test]
    fn single_class_rejected() {
        let x = Matrix::from_vec(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let r = train_svm(&x, &[1, 1, 1], &SvmConfig::default(), &mut RandomStream::new(0, 0));
        assert!(matches!(r, Err(Error::Parameter(_))));
    }

    #[test]
    fn zero_model_predicts_class_zero_uniformly() {
        let m = SvmModel::<f64> { weights: Matrix::zeros(3, 2), bias: vec![0.0; 3], c: 1.0, objective_curve: vec![] };
        let x = Matrix::from_vec(2, 2, vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        assert_eq!(m.predict(&x).unwrap(), vec![0, 0]);
        let p = m.predict_proba(&x).unwrap();
        assert!(p.as_slice().iter().all(|&v| (v - 1.0 / 3.0).abs() < 1e-15));
        assert!(m.predict(&Matrix::zeros(1, 3)).is_err());
    }

    #[test]
    fn proba_consistent_with_predict() {
        let mut s = RandomStream::new(3, 0);
        let (x, y) = blobs(&mut s, 30);
        let noisy = x.map(|v| v + 2.0 * s.normal::<f64>());
        let m = train_svm(&noisy, &y, &SvmConfig::default(), &mut s).unwrap();
        let p = m.predict_proba(&noisy).unwrap();
        let pred = m.predict(&noisy).unwrap();
        assert_eq!(pred, m.predict(&noisy).unwrap());
        for (i, row) in p.row_iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            assert_eq!(argmax(row), pred[i]);
        }
    }

    #[test]
    fn large_margin_saturates() {
        let m = SvmModel { weights: Matrix::from_vec(2, 1, vec![10.0, -10.0]).unwrap(), bias: vec![0.0; 2], c: 1.0, objective_curve: vec![] };
        let p = m.predict_proba(&Matrix::from_vec(1, 1, vec![1.0]).unwrap()).unwrap();
        assert!(p.get(0, 0) > 0.99);
    }

    #[test]
    fn objective_mostly_decreasing() {
        let mut s = RandomStream::new(4, 0);
        let (x, y) = blobs(&mut s, 60);
        let noisy = x.map(|v| v + 1.5 * s.normal::<f64>());
        let cfg = SvmConfig { epochs: 40, ..SvmConfig::default() };
        let m = train_svm(&noisy, &y, &cfg, &mut s).unwrap();
        let c = &m.objective_curve;
        let ok = c.windows(2).filter(|w| w[1] <= w[0]).count();
        assert!(ok as f64 >= 0.9 * (c.len() - 1) as f64, "{ok} of {}", c.len() - 1);
    }

    #[test]
    fn order_has_little_effect_on_accuracy() {
        let mut data = RandomStream::new(5, 0);
        let (x, y) = blobs(&mut data, 100);
        let (xt, yt) = blobs(&mut data, 100);
        let accs: Vec<f64> = (0..3)
            .map(|seed| {
                let m = train_svm(&x, &y, &SvmConfig::default(), &mut RandomStream::new(seed, 1)).unwrap();
                accuracy(&m.predict(&xt).unwrap(), &yt)
            })
            .collect();
        let spread = accs.iter().cloned().fold(0.0, f64::max) - accs.iter().cloned().fold(1.0, f64::min);
        assert!(spread < 0.02, "{accs:?}");
    }

    #[test]
    fn confusion_counts() {
        let m = confusion_matrix(&[0, 1, 1, 2], &[0, 1, 2, 2], 3);
        assert_eq!(m, vec![vec![1, 0, 0], vec![0, 1, 0], vec![0, 1, 1]]);
    }
}

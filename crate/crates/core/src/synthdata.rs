//! Synthetic two-view classification data driven by a shared class-dependent
//! latent variable.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::features::FeatureMatrix;
use crate::numerics::{Matrix, RandomStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub classes: usize,
    pub latent_dim: usize,
    pub d1: usize,
    pub d2: usize,
    pub samples_per_class: usize,
    pub noise1: f64,
    pub noise2: f64,
    /// Each view sees its own copy `z + latent_noise_v · e_v` of the latent.
    pub latent_noise1: f64,
    pub latent_noise2: f64,
    /// View 2 is `tanh(mixing_scale · A2 z)` instead of `A2 z`.
    pub nonlinear: bool,
    pub mixing_scale: f64,
    /// Standard deviation of the class means around the origin.
    pub separation: f64,
    /// Dimension of each view's private (class-independent) latent factor.
    pub private_dim: usize,
    pub private_scale: f64,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        Self {
            classes: 3,
            latent_dim: 8,
            d1: 20,
            d2: 10,
            samples_per_class: 100,
            noise1: 1.0,
            noise2: 1.0,
            latent_noise1: 0.0,
            latent_noise2: 0.0,
            nonlinear: true,
            mixing_scale: 1.5,
            separation: 2.0,
            private_dim: 0,
            private_scale: 0.0,
            seed: 0,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return param_err("need at least two classes");
        }
        if self.latent_dim == 0 || self.d1 == 0 || self.d2 == 0 || self.samples_per_class == 0 {
            return param_err("dimensions and class sizes must be positive");
        }
        for (name, v) in [
            ("noise1", self.noise1),
            ("noise2", self.noise2),
            ("latent_noise1", self.latent_noise1),
            ("latent_noise2", self.latent_noise2),
            ("separation", self.separation),
            ("private_scale", self.private_scale),
            ("mixing_scale", self.mixing_scale),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return param_err(format!("{name} must be a finite non-negative number"));
            }
        }
        Ok(())
    }
}

/// Two aligned views with labels and a grouping (e.g. recording clip).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub x1: Matrix<f64>,
    pub x2: Matrix<f64>,
    pub labels: Vec<usize>,
    pub groups: Vec<usize>,
    pub names1: Vec<String>,
    pub names2: Vec<String>,
}

impl Dataset {
    pub fn new(x1: Matrix<f64>, x2: Matrix<f64>, labels: Vec<usize>, groups: Option<Vec<usize>>) -> Result<Self> {
        let n = x1.rows();
        if x2.rows() != n || labels.len() != n {
            return dim_err(format!("views have {} and {} rows with {} labels", n, x2.rows(), labels.len()));
        }
        let groups = groups.unwrap_or_else(|| vec![0; n]);
        if groups.len() != n {
            return dim_err("group vector length differs from sample count");
        }
        let names1 = (0..x1.cols()).map(|j| format!("eeg{j}")).collect();
        let names2 = (0..x2.cols()).map(|j| format!("eye{j}")).collect();
        Ok(Self { x1, x2, labels, groups, names1, names2 })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn classes(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m + 1)
    }

    pub fn view1(&self) -> FeatureMatrix<f64> {
        FeatureMatrix { data: self.x1.clone(), names: self.names1.clone(), labels: Some(self.labels.clone()) }
    }

    pub fn view2(&self) -> FeatureMatrix<f64> {
        FeatureMatrix { data: self.x2.clone(), names: self.names2.clone(), labels: Some(self.labels.clone()) }
    }

    /// Rows in the given order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            x1: self.x1.select_rows(idx),
            x2: self.x2.select_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            groups: idx.iter().map(|&i| self.groups[i]).collect(),
            names1: self.names1.clone(),
            names2: self.names2.clone(),
        }
    }
}

/// Parameters behind a generated dataset, for oracle checks.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    /// `classes × latent_dim`.
    pub class_means: Matrix<f64>,
    /// `d1 × latent_dim`.
    pub a1: Matrix<f64>,
    /// `d2 × latent_dim`.
    pub a2: Matrix<f64>,
}

/// Per sample `z ~ N(μ_y, I)`, `z_v = z + λ_v e_v`, `X1 = A1 z1 + P1 u1 + ε1`,
/// `X2 = tanh(s·A2 z2) + P2 u2 + ε2` (or `A2 z2 + …` when linear).
/// Rows are grouped by class; `groups` equals the label.
pub fn generate(cfg: &GenConfig) -> Result<(Dataset, GroundTruth)> {
    cfg.validate()?;
    let root = RandomStream::new(cfg.seed, 0);
    let l = cfg.latent_dim;
    let inv_sqrt_l = 1.0 / (l as f64).sqrt();
    let mut ps = root.derive(1);
    let means = Matrix::from_fn(cfg.classes, l, |_, _| cfg.separation * ps.normal::<f64>());
    let a1 = Matrix::from_fn(cfg.d1, l, |_, _| inv_sqrt_l * ps.normal::<f64>());
    let a2 = Matrix::from_fn(cfg.d2, l, |_, _| inv_sqrt_l * ps.normal::<f64>());
    let p = cfg.private_dim;
    let inv_sqrt_p = if p > 0 { cfg.private_scale / (p as f64).sqrt() } else { 0.0 };
    let p1 = Matrix::from_fn(cfg.d1, p, |_, _| inv_sqrt_p * ps.normal::<f64>());
    let p2 = Matrix::from_fn(cfg.d2, p, |_, _| inv_sqrt_p * ps.normal::<f64>());

    let n = cfg.classes * cfg.samples_per_class;
    let mut latent = root.derive(2);
    let mut private = root.derive(3);
    let mut noise = root.derive(4);
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.samples_per_class).collect();
    let z = Matrix::from_fn(n, l, |i, j| means.get(labels[i], j) + latent.normal::<f64>());
    let u1 = Matrix::from_fn(n, p, |_, _| private.normal::<f64>());
    let u2 = Matrix::from_fn(n, p, |_, _| private.normal::<f64>());

    let mut view_latent = root.derive(5);
    let mut jitter = |scale: f64| {
        let mut out = z.clone();
        if scale > 0.0 {
            out.as_mut_slice().iter_mut().for_each(|v| *v += scale * view_latent.normal::<f64>());
        }
        out
    };
    let z1 = jitter(cfg.latent_noise1);
    let z2 = jitter(cfg.latent_noise2);

    let mut x1 = z1.dot_t(&a1).add(&u1.dot_t(&p1));
    let s2 = z2.dot_t(&a2);
    let mut x2 = if cfg.nonlinear { s2.map(|v| (cfg.mixing_scale * v).tanh()) } else { s2 };
    x2 = x2.add(&u2.dot_t(&p2));
    x1.as_mut_slice().iter_mut().for_each(|v| *v += cfg.noise1 * noise.normal::<f64>());
    x2.as_mut_slice().iter_mut().for_each(|v| *v += cfg.noise2 * noise.normal::<f64>());

    let ds = Dataset::new(x1, x2, labels.clone(), Some(labels))?;
    Ok((ds, GroundTruth { class_means: means, a1, a2 }))
}

pub const SEED_V_CLASSES: usize = 5;
pub const SEED_V_CLIPS: usize = 15;
pub const SEED_V_FOLDS: usize = 3;

/// Generator settings for the SEED-V-shaped task.
pub fn seed_v_config(seed: u64) -> GenConfig {
    GenConfig {
        classes: SEED_V_CLASSES,
        latent_dim: 6,
        d1: 310,
        d2: 33,
        samples_per_class: 200,
        noise1: 2.2,
        noise2: 0.5,
        latent_noise1: 0.0,
        latent_noise2: 0.0,
        nonlinear: true,
        mixing_scale: 1.5,
        separation: 1.0,
        private_dim: 4,
        private_scale: 2.0,
        seed,
    }
}

/// Five classes, 310 + 33 features, fifteen clips with `label = clip % 5`.
/// Rows are ordered by clip so that three contiguous blocks of five clips
/// form the folds, each holding every class once.
pub fn seed_v_like(seed: u64) -> Result<Dataset> {
    seed_v_like_with(&seed_v_config(seed))
}

pub fn seed_v_like_with(cfg: &GenConfig) -> Result<Dataset> {
    if cfg.classes != SEED_V_CLASSES || cfg.samples_per_class < SEED_V_FOLDS {
        return param_err("SEED-V layout needs 5 classes and at least 3 samples per class");
    }
    let (mut ds, _) = generate(cfg)?;
    let per_clip = SEED_V_CLIPS / SEED_V_CLASSES;
    let spc = cfg.samples_per_class;
    ds.groups = (0..ds.len())
        .map(|i| {
            let class = i / spc;
            let block = (i % spc) * per_clip / spc;
            class + SEED_V_CLASSES * block
        })
        .collect();
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.sort_by_key(|&i| (ds.groups[i], i));
    Ok(ds.subset(&order))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::{accuracy, train_svm, SvmConfig};
    use crate::features::{normalize, ScaleMode};

    fn svm_accuracy(x: &Matrix<f64>, y: &[usize], seed: u64) -> f64 {
        let mut s = RandomStream::new(seed, 0);
        let idx = s.permutation(y.len());
        let (tr, te) = idx.split_at(y.len() * 2 / 3);
        let (a, b, _) = normalize(&x.select_rows(tr), &[&x.select_rows(te)], ScaleMode::Zscore).unwrap();
        let ytr: Vec<usize> = tr.iter().map(|&i| y[i]).collect();
        let yte: Vec<usize> = te.iter().map(|&i| y[i]).collect();
        let m = train_svm(&a, &ytr, &SvmConfig::default(), &mut s).unwrap();
        accuracy(&m.predict(&b[0]).unwrap(), &yte)
    }

    #[test]
    fn noiseless_linear_views_are_separable() {
        let cfg = GenConfig {
            classes: 2,
            noise1: 0.0,
            noise2: 0.0,
            nonlinear: false,
            separation: 5.0,
            samples_per_class: 150,
            seed: 3,
            ..GenConfig::default()
        };
        let (ds, _) = generate(&cfg).unwrap();
        assert!(svm_accuracy(&ds.x1, &ds.labels, 1) >= 0.99);
        assert!(svm_accuracy(&ds.x2, &ds.labels, 2) >= 0.99);
    }

    #[test]
    fn balanced_and_deterministic() {
        let cfg = GenConfig { classes: 4, samples_per_class: 7, ..GenConfig::default() };
        let (a, _) = generate(&cfg).unwrap();
        let (b, _) = generate(&cfg).unwrap();
        assert_eq!(a, b);
        for k in 0..4 {
            assert_eq!(a.labels.iter().filter(|&&l| l == k).count(), 7);
        }
        let (c, _) = generate(&GenConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a.x1, c.x1);
    }

    #[test]
    fn invalid_config_rejected() {
        assert!(generate(&GenConfig { classes: 1, ..GenConfig::default() }).is_err());
        assert!(generate(&GenConfig { noise1: -1.0, ..GenConfig::default() }).is_err());
    }

    #[test]
    fn seed_v_shape_and_clips() {
        let ds = seed_v_like(0).unwrap();
        assert_eq!((ds.x1.cols(), ds.x2.cols()), (310, 33));
        assert_eq!(ds.classes(), 5);
        let mut clips = ds.groups.clone();
        clips.dedup();
        assert_eq!(clips, (0..15).collect::<Vec<_>>());
        assert!(ds.groups.iter().zip(&ds.labels).all(|(g, l)| g % 5 == *l));
    }

    #[test]
    fn class_means_survive_noise() {
        let cfg = GenConfig {
            classes: 2,
            latent_dim: 3,
            d1: 4,
            d2: 2,
            samples_per_class: 25_000,
            nonlinear: false,
            seed: 9,
            ..GenConfig::default()
        };
        let (ds, truth) = generate(&cfg).unwrap();
        let expected = truth.class_means.dot_t(&truth.a1);
        for k in 0..2 {
            let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels[i] == k).collect();
            let mean = ds.x1.select_rows(&idx).column_means();
            for (j, m) in mean.iter().enumerate() {
                assert!((m - expected.get(k, j)).abs() < 0.05, "class {k} dim {j}");
            }
        }
    }
}

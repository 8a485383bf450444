use serde::{Deserialize, Serialize};

use crate::error::{param_err, Result};
use crate::numerics::{Matrix, RandomStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    GaussianAdd,
    Replace,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseDistribution {
    /// `N(0, 1)`
    Normal,
    /// `Γ(1, 1)`
    Gamma,
    /// `U[0, 1]`
    Uniform,
}

impl NoiseDistribution {
    fn draw(self, stream: &mut RandomStream) -> f64 {
        match self {
            NoiseDistribution::Normal => stream.normal(),
            NoiseDistribution::Gamma => stream.gamma(1.0, 1.0),
            NoiseDistribution::Uniform => stream.uniform(),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            NoiseDistribution::Normal => "normal",
            NoiseDistribution::Gamma => "gamma",
            NoiseDistribution::Uniform => "uniform",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseTarget {
    View1,
    View2,
    Both,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReplaceMode {
    /// Individual scalar entries.
    #[default]
    Entries,
    /// Whole feature columns.
    Dims,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseScheme {
    pub kind: NoiseKind,
    #[serde(default)]
    pub variance: f64,
    #[serde(default)]
    pub proportion: f64,
    #[serde(default = "default_distribution")]
    pub distribution: NoiseDistribution,
    /// Defaults to both views for Gaussian noise and view 1 for replacement.
    #[serde(default)]
    pub target: Option<NoiseTarget>,
    #[serde(default)]
    pub mode: ReplaceMode,
}

fn default_distribution() -> NoiseDistribution {
    NoiseDistribution::Normal
}

impl NoiseScheme {
    pub fn gaussian(variance: f64) -> Self {
        Self {
            kind: NoiseKind::GaussianAdd,
            variance,
            proportion: 0.0,
            distribution: NoiseDistribution::Normal,
            target: None,
            mode: ReplaceMode::Entries,
        }
    }

    pub fn replace(proportion: f64, distribution: NoiseDistribution) -> Self {
        Self { kind: NoiseKind::Replace, variance: 0.0, proportion, distribution, target: None, mode: ReplaceMode::Entries }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.variance >= 0.0) || !self.variance.is_finite() {
            return param_err(format!("noise variance must be non-negative, got {}", self.variance));
        }
        if !(0.0..=1.0).contains(&self.proportion) {
            return param_err(format!("replacement proportion must lie in [0, 1], got {}", self.proportion));
        }
        Ok(())
    }

    pub fn target(&self) -> NoiseTarget {
        self.target.unwrap_or(match self.kind {
            NoiseKind::GaussianAdd => NoiseTarget::Both,
            NoiseKind::Replace => NoiseTarget::View1,
        })
    }

    /// Variance or proportion, whichever the kind uses.
    pub fn level(&self) -> f64 {
        match self.kind {
            NoiseKind::GaussianAdd => self.variance,
            NoiseKind::Replace => self.proportion,
        }
    }

    /// `gaussian` or `replace-<distribution>`.
    pub fn label(&self) -> String {
        match self.kind {
            NoiseKind::GaussianAdd => "gaussian".into(),
            NoiseKind::Replace => format!("replace-{}", self.distribution.name()),
        }
    }

    pub fn is_noop(&self) -> bool {
        self.level() == 0.0
    }

    pub(crate) fn apply(&self, x: &Matrix<f64>, stream: &mut RandomStream) -> Result<Matrix<f64>> {
        match self.kind {
            NoiseKind::GaussianAdd => add_gaussian_noise(x, self.variance, stream),
            NoiseKind::Replace => Ok(replace_with_noise(x, self.proportion, self.distribution, self.mode, stream)?.0),
        }
    }
}

/// `X + ε` with `ε ~ N(0, variance)` entrywise.
pub fn add_gaussian_noise(x: &Matrix<f64>, variance: f64, stream: &mut RandomStream) -> Result<Matrix<f64>> {
    if !(variance >= 0.0) {
        return param_err(format!("noise variance must be non-negative, got {variance}"));
    }
    if variance == 0.0 {
        return Ok(x.clone());
    }
    let sd = variance.sqrt();
    Ok(x.map(|v| v + sd * stream.normal::<f64>()))
}

/// Replaces `round(proportion · count)` uniformly chosen entries (or whole
/// columns under [`ReplaceMode::Dims`]) with draws from `dist`. Returns the
/// noisy matrix and the row-major replacement mask.
pub fn replace_with_noise(
    x: &Matrix<f64>,
    proportion: f64,
    dist: NoiseDistribution,
    mode: ReplaceMode,
    stream: &mut RandomStream,
) -> Result<(Matrix<f64>, Vec<bool>)> {
    if !(0.0..=1.0).contains(&proportion) {
        return param_err(format!("replacement proportion must lie in [0, 1], got {proportion}"));
    }
    let (n, d) = x.shape();
    let mut mask = vec![false; n * d];
    match mode {
        ReplaceMode::Entries => {
            let count = (proportion * (n * d) as f64).round() as usize;
            let mut idx: Vec<usize> = (0..n * d).collect();
            // partial Fisher-Yates: the first `count` slots are a uniform sample
            for i in 0..count {
                let j = i + stream.index(n * d - i);
                idx.swap(i, j);
                mask[idx[i]] = true;
            }
        }
        ReplaceMode::Dims => {
            let count = (proportion * d as f64).round() as usize;
            let mut cols: Vec<usize> = (0..d).collect();
            for i in 0..count {
                let j = i + stream.index(d - i);
                cols.swap(i, j);
                for r in 0..n {
                    mask[r * d + cols[i]] = true;
                }
            }
        }
    }
    let mut out = x.clone();
    for (v, &m) in out.as_mut_slice().iter_mut().zip(&mask) {
        if m {
            *v = dist.draw(stream);
        }
    }
    Ok((out, mask))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn data(n: usize, d: usize) -> Matrix<f64> {
        let mut s = RandomStream::new(99, 0);
        Matrix::from_fn(n, d, |_, _| 5.0 + s.normal::<f64>())
    }

    #[test]
    fn zero_variance_is_identity() {
        let x = data(10, 3);
        assert_eq!(add_gaussian_noise(&x, 0.0, &mut RandomStream::new(0, 0)).unwrap(), x);
        assert!(add_gaussian_noise(&x, -1.0, &mut RandomStream::new(0, 0)).is_err());
    }

    #[test]
    fn unit_variance_moments() {
        let x = data(2000, 50);
        let y = add_gaussian_noise(&x, 1.0, &mut RandomStream::new(1, 0)).unwrap();
        let diff: Vec<f64> = y.sub(&x).into_vec();
        let mean = diff.iter().sum::<f64>() / diff.len() as f64;
        let var = diff.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (diff.len() - 1) as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
        let z = add_gaussian_noise(&x, 1.0, &mut RandomStream::new(2, 0)).unwrap();
        assert_ne!(y, z);
    }

    #[test]
    fn replacement_counts_and_support() {
        let x = data(1000, 310);
        let (same, mask) = replace_with_noise(&x, 0.0, NoiseDistribution::Normal, ReplaceMode::Entries, &mut RandomStream::new(0, 0)).unwrap();
        assert_eq!(same, x);
        assert!(!mask.contains(&true));

        let (y, mask) = replace_with_noise(&x, 0.3, NoiseDistribution::Gamma, ReplaceMode::Entries, &mut RandomStream::new(3, 0)).unwrap();
        assert_eq!(mask.iter().filter(|&&m| m).count(), 93_000);
        for ((a, b), m) in y.as_slice().iter().zip(x.as_slice()).zip(&mask) {
            assert_eq!(a == b, !m);
        }
        let (again, _) = replace_with_noise(&x, 0.3, NoiseDistribution::Gamma, ReplaceMode::Entries, &mut RandomStream::new(3, 0)).unwrap();
        assert_eq!(again, y);

        let (u, _) = replace_with_noise(&x, 1.0, NoiseDistribution::Uniform, ReplaceMode::Entries, &mut RandomStream::new(4, 0)).unwrap();
        assert!(u.as_slice().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn dims_mode_replaces_columns() {
        let x = data(20, 10);
        let (y, mask) = replace_with_noise(&x, 0.3, NoiseDistribution::Normal, ReplaceMode::Dims, &mut RandomStream::new(5, 0)).unwrap();
        let cols: Vec<usize> = (0..10).filter(|&j| mask[j]).collect();
        assert_eq!(cols.len(), 3);
        for j in 0..10 {
            let replaced = (0..20).all(|i| mask[i * 10 + j]);
            let kept = (0..20).all(|i| y.get(i, j) == x.get(i, j));
            assert!(replaced != kept);
        }
    }
}

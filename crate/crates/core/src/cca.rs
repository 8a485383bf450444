//! Linear canonical correlation analysis.
//!
//! Projections come from the SVD of the whitened cross-covariance
//! `T = Σ11^{-1/2} Σ12 Σ22^{-1/2}`: with `T = U D Vᵀ`, the top-k projections
//! are `A1 = Σ11^{-1/2} U_k`, `A2 = Σ22^{-1/2} V_k`, and the canonical
//! correlations are the top-k singular values. Orthogonality between
//! successive pairs falls out of the SVD, no deflation needed.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Result};
use crate::numerics::{
    auto_covariance, center, cross_covariance, inv_sqrt_sym, random_normal, svd, Matrix,
    RandomStream, Real, EIGEN_FLOOR,
};

/// Default ridge added to both auto-covariances.
pub const DEFAULT_REG: f64 = 1e-8;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct CcaModel<T> {
    /// `d1 × k` projection for the first view.
    pub a1: Matrix<T>,
    /// `d2 × k` projection for the second view.
    pub a2: Matrix<T>,
    /// Canonical correlations, descending.
    pub correlations: Vec<T>,
    pub mean1: Vec<T>,
    pub mean2: Vec<T>,
    pub reg: T,
}

/// Whitened cross-covariance of two centered views and the whitening factors.
pub(crate) struct Whitened<T> {
    pub s11_inv_sqrt: Matrix<T>,
    pub s22_inv_sqrt: Matrix<T>,
    pub t: Matrix<T>,
}

pub(crate) fn whiten<T: Real>(c1: &Matrix<T>, c2: &Matrix<T>, reg1: T, reg2: T) -> Result<Whitened<T>> {
    let floor = T::lit(EIGEN_FLOOR);
    let s11_inv_sqrt = inv_sqrt_sym(&auto_covariance(c1, reg1)?, floor)?;
    let s22_inv_sqrt = inv_sqrt_sym(&auto_covariance(c2, reg2)?, floor)?;
    let s12 = cross_covariance(c1, c2)?;
    let t = s11_inv_sqrt.dot(&s12).dot(&s22_inv_sqrt);
    Ok(Whitened { s11_inv_sqrt, s22_inv_sqrt, t })
}

impl<T: Real> CcaModel<T> {
    pub fn fit(x1: &Matrix<T>, x2: &Matrix<T>, k: usize, reg: T) -> Result<Self> {
        if x1.rows() != x2.rows() {
            return dim_err(format!("views have {} and {} rows", x1.rows(), x2.rows()));
        }
        if x1.rows() < 2 {
            return dim_err("CCA needs at least two samples");
        }
        let kmax = x1.cols().min(x2.cols());
        if k == 0 || k > kmax {
            return param_err(format!("k = {k} outside 1..={kmax}"));
        }
        if reg < T::zero() {
            return param_err("regularization must be nonnegative");
        }
        let (c1, mean1) = center(x1)?;
        let (c2, mean2) = center(x2)?;
        let w = whiten(&c1, &c2, reg, reg)?;
        let dec = svd(&w.t);
        let take = |m: &Matrix<T>| Matrix::from_fn(m.rows(), k, |i, j| m.get(i, j));
        let a1 = w.s11_inv_sqrt.dot(&take(&dec.u));
        let a2 = w.s22_inv_sqrt.dot(&take(&dec.v));
        let correlations = dec.s[..k].to_vec();
        Ok(Self { a1, a2, correlations, mean1, mean2, reg })
    }

    pub fn k(&self) -> usize {
        self.correlations.len()
    }

    pub fn transform(&self, x1: &Matrix<T>, x2: &Matrix<T>) -> Result<(Matrix<T>, Matrix<T>)> {
        Ok((self.transform_view1(x1)?, self.transform_view2(x2)?))
    }

    pub fn transform_view1(&self, x1: &Matrix<T>) -> Result<Matrix<T>> {
        if x1.cols() != self.a1.rows() {
            return dim_err(format!("view 1 has {} columns, model expects {}", x1.cols(), self.a1.rows()));
        }
        Ok(x1.sub_row_vector(&self.mean1).dot(&self.a1))
    }

    pub fn transform_view2(&self, x2: &Matrix<T>) -> Result<Matrix<T>> {
        if x2.cols() != self.a2.rows() {
            return dim_err(format!("view 2 has {} columns, model expects {}", x2.cols(), self.a2.rows()));
        }
        Ok(x2.sub_row_vector(&self.mean2).dot(&self.a2))
    }

    pub fn total_correlation(&self) -> T {
        self.correlations.iter().copied().sum()
    }
}

/// Two views whose population canonical correlations are exactly `corrs`.
///
/// Pair `i < corrs.len()` shares a standard normal factor with weight
/// `sqrt(ρ_i)`; remaining coordinates are independent noise. Each view is then
/// mixed by a random well-conditioned matrix, which leaves canonical
/// correlations unchanged.
pub fn planted_cca_data<T: Real>(
    stream: &mut RandomStream,
    corrs: &[f64],
    d1: usize,
    d2: usize,
    n: usize,
) -> Result<(Matrix<T>, Matrix<T>)> {
    if corrs.len() > d1.min(d2) {
        return param_err(format!("{} targets exceed min(d1, d2) = {}", corrs.len(), d1.min(d2)));
    }
    if let Some(bad) = corrs.iter().find(|r| !(0.0..1.0).contains(*r)) {
        return param_err(format!("target correlation {bad} outside [0, 1)"));
    }
    if n == 0 || d1 == 0 || d2 == 0 {
        return dim_err("empty planted dataset");
    }
    let mut raw1 = Matrix::<f64>::zeros(n, d1);
    let mut raw2 = Matrix::<f64>::zeros(n, d2);
    for r in 0..n {
        for (i, &rho) in corrs.iter().enumerate() {
            let z: f64 = stream.normal();
            let e1: f64 = stream.normal();
            let e2: f64 = stream.normal();
            raw1.set(r, i, rho.sqrt() * z + (1.0 - rho).sqrt() * e1);
            raw2.set(r, i, rho.sqrt() * z + (1.0 - rho).sqrt() * e2);
        }
        for i in corrs.len()..d1 {
            raw1.set(r, i, stream.normal());
        }
        for i in corrs.len()..d2 {
            raw2.set(r, i, stream.normal());
        }
    }
    let mix = |d: usize, stream: &mut RandomStream| {
        let mut m = random_normal::<f64>(d, d, stream).scale(0.5);
        for i in 0..d {
            m.set(i, i, m.get(i, i) + 2.0);
        }
        m
    };
    let m1 = mix(d1, stream);
    let m2 = mix(d2, stream);
    Ok((raw1.dot(&m1).cast(), raw2.dot(&m2).cast()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::pearson;
    use crate::Error;

    fn independent(seed: u64, n: usize, d: usize) -> (Matrix<f64>, Matrix<f64>) {
        let mut s = RandomStream::new(seed, 0);
        (random_normal(n, d, &mut s), random_normal(n, d, &mut s))
    }

    #[test]
    fn identical_views_have_unit_correlations() {
        let (x, _) = independent(1, 200, 4);
        let m = CcaModel::fit(&x, &x, 4, 1e-8).unwrap();
        for c in &m.correlations {
            assert!((c - 1.0).abs() < 1e-6, "{c}");
        }
    }

    #[test]
    fn independent_views_have_small_correlations() {
        let (a, b) = independent(2, 20000, 3);
        let m = CcaModel::fit(&a, &b, 3, 1e-8).unwrap();
        assert!(m.correlations.iter().all(|&c| c < 0.05), "{:?}", m.correlations);
    }

    #[test]
    fn one_dimensional_cca_is_abs_pearson() {
        let mut s = RandomStream::new(3, 0);
        let a: Matrix<f64> = random_normal(300, 1, &mut s);
        let b = Matrix::from_fn(300, 1, |i, _| -0.4 * a.get(i, 0) + s.normal::<f64>());
        let m = CcaModel::fit(&a, &b, 1, 0.0).unwrap();
        let r = pearson(a.as_slice(), b.as_slice());
        assert!((m.correlations[0] - r.abs()).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_parameters() {
        let (a, b) = independent(4, 10, 2);
        assert!(matches!(CcaModel::fit(&a, &b, 3, 0.0), Err(Error::Parameter(_))));
        assert!(matches!(CcaModel::fit(&a, &b, 0, 0.0), Err(Error::Parameter(_))));
        let one = Matrix::<f64>::zeros(1, 2);
        assert!(matches!(CcaModel::fit(&one, &one, 1, 0.0), Err(Error::Dimension(_))));
    }

    #[test]
    fn transform_reproduces_top_correlation() {
        let mut s = RandomStream::new(5, 0);
        let (a, b) = planted_cca_data::<f64>(&mut s, &[0.8], 3, 4, 500).unwrap();
        let m = CcaModel::fit(&a, &b, 1, 1e-8).unwrap();
        let (p1, p2) = m.transform(&a, &b).unwrap();
        let r = pearson(p1.as_slice(), p2.as_slice());
        assert!((r - m.correlations[0]).abs() < 1e-6);
    }

    #[test]
    fn zero_variance_column_stays_finite() {
        let mut s = RandomStream::new(6, 0);
        let mut a: Matrix<f64> = random_normal(100, 3, &mut s);
        for i in 0..100 {
            a.set(i, 2, 4.0);
        }
        let b: Matrix<f64> = random_normal(100, 2, &mut s);
        let m = CcaModel::fit(&a, &b, 2, 1e-8).unwrap();
        let (p1, p2) = m.transform(&a, &b).unwrap();
        assert!(p1.is_finite() && p2.is_finite());
    }

    #[test]
    fn projections_have_unit_variance_without_ridge() {
        let mut s = RandomStream::new(7, 0);
        let (a, b) = planted_cca_data::<f64>(&mut s, &[0.9, 0.4], 4, 3, 400).unwrap();
        let m = CcaModel::fit(&a, &b, 2, 0.0).unwrap();
        let (p1, p2) = m.transform(&a, &b).unwrap();
        for p in [&p1, &p2] {
            let (c, _) = center(p).unwrap();
            let cov = auto_covariance(&c, 0.0).unwrap();
            assert!(cov.sub(&Matrix::identity(2)).max_abs() < 1e-6);
        }
    }

    #[test]
    fn planted_correlations_are_recovered() {
        let mut s = RandomStream::new(8, 0);
        let (a, b) = planted_cca_data::<f64>(&mut s, &[0.9, 0.5, 0.1], 5, 4, 20000).unwrap();
        let m = CcaModel::fit(&a, &b, 3, 1e-8).unwrap();
        for (got, want) in m.correlations.iter().zip([0.9, 0.5, 0.1]) {
            assert!((got - want).abs() < 0.03, "{got} vs {want}");
        }
    }

    #[test]
    fn planted_without_targets_is_independent() {
        let mut s = RandomStream::new(9, 0);
        let (a, b) = planted_cca_data::<f64>(&mut s, &[], 3, 3, 20000).unwrap();
        let m = CcaModel::fit(&a, &b, 3, 1e-8).unwrap();
        assert!(m.correlations.iter().all(|&c| c < 0.05));
    }

    #[test]
    fn planted_rejects_unit_target() {
        let mut s = RandomStream::new(10, 0);
        assert!(matches!(planted_cca_data::<f64>(&mut s, &[1.0], 2, 2, 10), Err(Error::Parameter(_))));
    }

    #[test]
    fn invariances() {
        let mut s = RandomStream::new(11, 0);
        let (a, b) = planted_cca_data::<f64>(&mut s, &[0.7, 0.3], 3, 3, 1000).unwrap();
        let base = CcaModel::fit(&a, &b, 3, 0.0).unwrap();
        let scaled = CcaModel::fit(&a.scale(37.5), &b, 3, 0.0).unwrap();
        let swapped = CcaModel::fit(&b, &a, 3, 0.0).unwrap();
        let ridged = CcaModel::fit(&a, &b, 3, 0.5).unwrap();
        for i in 0..3 {
            assert!((base.correlations[i] - scaled.correlations[i]).abs() < 1e-6);
            assert!((base.correlations[i] - swapped.correlations[i]).abs() < 1e-9);
            assert!(ridged.correlations[i] <= base.correlations[i] + 1e-12);
        }
    }

    #[test]
    fn works_in_f32() {
        let mut s = RandomStream::new(12, 0);
        let (a, b) = planted_cca_data::<f32>(&mut s, &[0.9], 2, 2, 2000).unwrap();
        let m = CcaModel::fit(&a, &b, 1, 1e-6).unwrap();
        assert!((m.correlations[0] - 0.9).abs() < 0.03);
    }
}

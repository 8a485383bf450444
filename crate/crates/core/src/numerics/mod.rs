//! Numeric substrate: dense matrices, centering, covariance, symmetric
//! inverse square roots, SVD and seeded random streams.

mod linalg;
mod matrix;
mod random;
mod scalar;

pub use linalg::{svd, sym_eigen, Svd};
pub use matrix::Matrix;
pub use random::RandomStream;
pub use scalar::Real;

use crate::error::{dim_err, Error, Result};

/// Default eigenvalue floor for [`inv_sqrt_sym`].
pub const EIGEN_FLOOR: f64 = 1e-10;

/// Removes column means. Returns the centered matrix and the removed means.
pub fn center<T: Real>(x: &Matrix<T>) -> Result<(Matrix<T>, Vec<T>)> {
    if x.rows() == 0 || x.cols() == 0 {
        return dim_err("cannot center an empty matrix");
    }
    let means = x.column_means();
    Ok((x.sub_row_vector(&means), means))
}

/// Self-covariance `AᵀA / (N−1) + reg·I` of a centered matrix.
pub fn auto_covariance<T: Real>(a: &Matrix<T>, reg: T) -> Result<Matrix<T>> {
    if a.rows() < 2 {
        return dim_err(format!("covariance needs N >= 2, got {}", a.rows()));
    }
    let mut c = a.t_dot(a).scale(T::one() / T::from_usize_lossy(a.rows() - 1));
    for i in 0..c.rows() {
        c.set(i, i, c.get(i, i) + reg);
    }
    // exact symmetry
    for i in 0..c.rows() {
        for j in (i + 1)..c.cols() {
            let v = c.get(i, j);
            c.set(j, i, v);
        }
    }
    Ok(c)
}

/// Cross-covariance `AᵀB / (N−1)` of two centered matrices; never regularized.
pub fn cross_covariance<T: Real>(a: &Matrix<T>, b: &Matrix<T>) -> Result<Matrix<T>> {
    if a.rows() != b.rows() {
        return dim_err(format!("cross-covariance: {} rows vs {} rows", a.rows(), b.rows()));
    }
    if a.rows() < 2 {
        return dim_err(format!("covariance needs N >= 2, got {}", a.rows()));
    }
    Ok(a.t_dot(b).scale(T::one() / T::from_usize_lossy(a.rows() - 1)))
}

/// `M^{-1/2}` for symmetric `M`, clamping eigenvalues below `floor` to `floor`.
pub fn inv_sqrt_sym<T: Real>(m: &Matrix<T>, floor: T) -> Result<Matrix<T>> {
    if m.rows() != m.cols() {
        return dim_err(format!("inv_sqrt_sym needs a square matrix, got {:?}", m.shape()));
    }
    let tol = T::loose_eps() * m.max_abs().max(T::one());
    if !m.is_symmetric(tol) {
        return Err(Error::Contract("inv_sqrt_sym: input is not symmetric".into()));
    }
    let (values, vectors) = sym_eigen(m);
    let inv: Vec<T> = values.iter().map(|&l| T::one() / l.max(floor).sqrt()).collect();
    let mut scaled = vectors.clone();
    for i in 0..scaled.rows() {
        for (x, &w) in scaled.row_mut(i).iter_mut().zip(&inv) {
            *x *= w;
        }
    }
    let r = scaled.dot_t(&vectors);
    Ok(symmetrize(&r))
}

pub(crate) fn symmetrize<T: Real>(m: &Matrix<T>) -> Matrix<T> {
    let half = T::lit(0.5);
    Matrix::from_fn(m.rows(), m.cols(), |i, j| half * (m.get(i, j) + m.get(j, i)))
}

/// Pearson correlation between two equally long samples.
pub fn pearson<T: Real>(a: &[T], b: &[T]) -> T {
    let n = T::from_usize_lossy(a.len());
    let ma = a.iter().copied().sum::<T>() / n;
    let mb = b.iter().copied().sum::<T>() / n;
    let (mut sab, mut saa, mut sbb) = (T::zero(), T::zero(), T::zero());
    for (&x, &y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

/// Matrix with i.i.d. standard normal entries.
pub fn random_normal<T: Real>(rows: usize, cols: usize, stream: &mut RandomStream) -> Matrix<T> {
    Matrix::from_fn(rows, cols, |_, _| stream.normal())
}

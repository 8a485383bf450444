//! Jacobi-rotation eigen and singular value decompositions.
//!
//! Both routines run to machine precision, which the CCA gradient relies on.

use super::matrix::dot_slices;
use super::{Matrix, Real};

const MAX_SWEEPS: usize = 100;

/// Eigen-decomposition of a symmetric matrix.
///
/// Returns eigenvalues in descending order and the matching eigenvectors as
/// the columns of the second matrix. Only the upper triangle is trusted.
pub fn sym_eigen<T: Real>(m: &Matrix<T>) -> (Vec<T>, Matrix<T>) {
    let n = m.rows();
    assert_eq!(n, m.cols(), "sym_eigen needs a square matrix");
    let mut a = Matrix::from_fn(n, n, |i, j| if i <= j { m.get(i, j) } else { m.get(j, i) });
    // eigenvectors are accumulated as rows of `vt`
    let mut vt = Matrix::<T>::identity(n);
    let two = T::lit(2.0);

    for _ in 0..MAX_SWEEPS {
        let mut off = T::zero();
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        let scale = a.frobenius_norm();
        if off.sqrt() <= T::epsilon() * scale * T::lit(0.5) || off == T::zero() {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == T::zero() {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                if apq.abs() <= T::epsilon() * T::lit(0.25) * (app.abs() * aqq.abs()).sqrt() {
                    a.set(p, q, T::zero());
                    a.set(q, p, T::zero());
                    continue;
                }
                let theta = (aqq - app) / (two * apq);
                let t = theta.signum() / (theta.abs() + (T::one() + theta * theta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(j, j).partial_cmp(&a.get(i, i)).unwrap_or(std::cmp::Ordering::Equal));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let vectors = Matrix::from_fn(n, n, |r, c| vt.get(order[c], r));
    (values, vectors)
}

fn rotate_rows<T: Real>(m: &mut Matrix<T>, p: usize, q: usize, c: T, s: T) {
    let cols = m.cols();
    let data = m.as_mut_slice();
    let (head, tail) = data.split_at_mut(q * cols);
    let rp = &mut head[p * cols..(p + 1) * cols];
    let rq = &mut tail[..cols];
    for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// Thin singular value decomposition `M = U·diag(s)·Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd<T> {
    /// `m × k` left singular vectors, `k = min(m, n)`.
    pub u: Matrix<T>,
    /// Singular values, nonnegative and descending.
    pub s: Vec<T>,
    /// `n × k` right singular vectors.
    pub v: Matrix<T>,
}

impl<T: Real> Svd<T> {
    pub fn reconstruct(&self) -> Matrix<T> {
        let mut us = self.u.clone();
        for i in 0..us.rows() {
            for (x, &s) in us.row_mut(i).iter_mut().zip(&self.s) {
                *x *= s;
            }
        }
        us.dot_t(&self.v)
    }
}

/// One-sided Jacobi SVD with a deterministic sign convention: the first
/// nonzero entry of every left singular vector is nonnegative.
pub fn svd<T: Real>(m: &Matrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    let mut out = if rows >= cols {
        svd_tall(m)
    } else {
        let t = svd_tall(&m.transpose());
        Svd { u: t.v, s: t.s, v: t.u }
    };
    fix_signs(&mut out);
    out
}

fn svd_tall<T: Real>(m: &Matrix<T>) -> Svd<T> {
    let (rows, cols) = m.shape();
    // columns of M stored as rows for contiguous access
    let mut a = m.transpose();
    let mut vt = Matrix::<T>::identity(cols);
    let tol = T::epsilon();
    let two = T::lit(2.0);

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..cols {
            for q in (p + 1)..cols {
                let alpha = dot_slices(a.row(p), a.row(p));
                let beta = dot_slices(a.row(q), a.row(q));
                let gamma = dot_slices(a.row(p), a.row(q));
                if gamma == T::zero() || gamma.abs() <= tol * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (two * gamma);
                let t = zeta.signum() / (zeta.abs() + (T::one() + zeta * zeta).sqrt());
                let c = T::one() / (T::one() + t * t).sqrt();
                let s = c * t;
                rotate_rows(&mut a, p, q, c, s);
                rotate_rows(&mut vt, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let norms: Vec<T> = (0..cols).map(|j| dot_slices(a.row(j), a.row(j)).sqrt()).collect();
    let mut order: Vec<usize> = (0..cols).collect();
    order.sort_by(|&i, &j| norms[j].partial_cmp(&norms[i]).unwrap_or(std::cmp::Ordering::Equal));
    let s_max = norms.iter().fold(T::zero(), |acc, &v| acc.max(v));
    let negligible = s_max * T::epsilon() * T::from_usize_lossy(rows.max(cols));

    let mut u_cols: Vec<Vec<T>> = Vec::with_capacity(cols);
    let mut s = Vec::with_capacity(cols);
    let mut v = Matrix::zeros(cols, cols);
    for (k, &j) in order.iter().enumerate() {
        let sigma = norms[j];
        for r in 0..cols {
            v.set(r, k, vt.get(j, r));
        }
        if sigma > negligible && sigma > T::zero() {
            u_cols.push(a.row(j).iter().map(|&x| x / sigma).collect());
            s.push(sigma);
        } else {
            u_cols.push(complete_basis(&u_cols, rows));
            s.push(T::zero());
        }
    }
    let u = Matrix::from_fn(rows, cols, |r, c| u_cols[c][r]);
    Svd { u, s, v }
}

/// A unit vector orthogonal to every vector in `basis`.
fn complete_basis<T: Real>(basis: &[Vec<T>], dim: usize) -> Vec<T> {
    let mut best: Option<(T, Vec<T>)> = None;
    for e in 0..dim {
        let mut v = vec![T::zero(); dim];
        v[e] = T::one();
        for b in basis {
            let proj = dot_slices(&v, b);
            for (x, &y) in v.iter_mut().zip(b) {
                *x -= proj * y;
            }
        }
        let norm = dot_slices(&v, &v).sqrt();
        if best.as_ref().is_none_or(|(n, _)| norm > *n) {
            best = Some((norm, v));
        }
        if norm > T::lit(0.5) {
            break;
        }
    }
    let (norm, mut v) = best.expect("dim > 0");
    v.iter_mut().for_each(|x| *x /= norm);
    v
}

fn fix_signs<T: Real>(svd: &mut Svd<T>) {
    let k = svd.s.len();
    let rows = svd.u.rows();
    let tiny = T::epsilon() * T::lit(16.0);
    for c in 0..k {
        let first = (0..rows).map(|r| svd.u.get(r, c)).find(|x| x.abs() > tiny);
        if first.is_some_and(|x| x < T::zero()) {
            for r in 0..rows {
                svd.u.set(r, c, -svd.u.get(r, c));
            }
            for r in 0..svd.v.rows() {
                svd.v.set(r, c, -svd.v.get(r, c));
            }
        }
    }
}

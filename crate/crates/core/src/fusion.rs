//! Classical fusion baselines: feature concatenation, MAX decision fusion and
//! Choquet-integral fusion with a least-squares fitted fuzzy measure.

use serde::{Deserialize, Serialize};

use crate::error::{dim_err, param_err, Error, Result};
use crate::numerics::{sym_eigen, Matrix, Real};

/// Feature-level fusion: columns of `x1` followed by columns of `x2`.
pub fn concat<T: Real>(x1: &Matrix<T>, x2: &Matrix<T>) -> Result<Matrix<T>> {
    x1.hcat(x2)
}

/// Per-classifier class distributions for one sample, `classifiers × classes`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct ClassProbabilities<T> {
    probs: Matrix<T>,
}

impl<T: Real> ClassProbabilities<T> {
    pub fn new(probs: Matrix<T>) -> Result<Self> {
        if probs.rows() == 0 {
            return param_err("need at least one classifier");
        }
        if probs.cols() < 2 {
            return param_err("need at least two classes");
        }
        let tol = T::lit(1e-6);
        for (j, row) in probs.row_iter().enumerate() {
            if row.iter().any(|&p| !(p >= -tol && p <= T::one() + tol)) {
                return Err(Error::Contract(format!("classifier {j}: probability outside [0, 1]")));
            }
            let sum: T = row.iter().copied().sum();
            if (sum - T::one()).abs() > tol {
                return Err(Error::Contract(format!("classifier {j}: probabilities sum to {sum}")));
            }
        }
        Ok(Self { probs })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        Self::new(Matrix::from_rows(rows)?)
    }

    pub fn classifiers(&self) -> usize {
        self.probs.rows()
    }

    pub fn classes(&self) -> usize {
        self.probs.cols()
    }

    /// `P_j(Y_class | x)` for every classifier `j`.
    pub fn class_scores(&self, class: usize) -> Vec<T> {
        self.probs.column(class)
    }

    pub fn matrix(&self) -> &Matrix<T> {
        &self.probs
    }
}

/// First index of the maximum; ties resolve to the lowest index.
pub(crate) fn argmax<T: Real>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

/// MAX rule: the class holding the single largest probability.
pub fn max_fusion<T: Real>(p: &ClassProbabilities<T>) -> usize {
    let per_class: Vec<T> = (0..p.classes())
        .map(|c| p.class_scores(c).into_iter().fold(T::neg_infinity(), T::max))
        .collect();
    argmax(&per_class)
}

/// Fuzzy measure over `n` sources, stored by subset bitmask.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Real")]
pub struct FuzzyMeasure<T> {
    n: usize,
    values: Vec<T>,
}

pub const MAX_SOURCES: usize = 6;

impl<T: Real> FuzzyMeasure<T> {
    /// Validates `μ(∅) = 0`, `μ(full) = 1` and monotonicity.
    pub fn new(n: usize, values: Vec<T>) -> Result<Self> {
        if n == 0 || n > MAX_SOURCES {
            return param_err(format!("fuzzy measure supports 1..={MAX_SOURCES} sources, got {n}"));
        }
        if values.len() != 1 << n {
            return Err(Error::Contract(format!("expected {} subset values, got {}", 1 << n, values.len())));
        }
        let m = Self { n, values };
        let tol = T::lit(1e-9);
        if m.values[0].abs() > tol || (m.values[m.full()] - T::one()).abs() > tol {
            return Err(Error::Contract("boundary axioms violated".into()));
        }
        if !m.is_monotone(tol) {
            return Err(Error::Contract("measure is not monotone".into()));
        }
        Ok(m)
    }

    /// Additive measure `μ(A) = Σ_{i∈A} w_i` for weights summing to 1.
    pub fn additive(weights: &[T]) -> Result<Self> {
        let n = weights.len();
        if n == 0 || n > MAX_SOURCES {
            return param_err("bad source count");
        }
        let values = (0..1usize << n)
            .map(|mask| (0..n).filter(|i| mask >> i & 1 == 1).map(|i| weights[i]).sum())
            .collect();
        Self::new(n, values)
    }

    /// `μ(A) = 1` for every nonempty `A`; the Choquet integral becomes `max`.
    pub fn possibility(n: usize) -> Result<Self> {
        Self::new(n, (0..1usize << n).map(|m| if m == 0 { T::zero() } else { T::one() }).collect())
    }

    /// `μ(A) = 0` except on the full set; the Choquet integral becomes `min`.
    pub fn necessity(n: usize) -> Result<Self> {
        let full = (1usize << n) - 1;
        Self::new(n, (0..1usize << n).map(|m| if m == full { T::one() } else { T::zero() }).collect())
    }

    pub fn uniform_additive(n: usize) -> Result<Self> {
        Self::additive(&vec![T::one() / T::from_usize_lossy(n); n])
    }

    pub fn sources(&self) -> usize {
        self.n
    }

    fn full(&self) -> usize {
        (1 << self.n) - 1
    }

    pub fn get(&self, mask: usize) -> T {
        self.values[mask]
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn is_monotone(&self, tol: T) -> bool {
        (1..self.values.len()).all(|mask| {
            (0..self.n)
                .filter(|i| mask >> i & 1 == 1)
                .all(|i| self.values[mask ^ (1 << i)] <= self.values[mask] + tol)
        })
    }

    /// `(subset members, value)` rows for reports.
    pub fn table(&self) -> Vec<(Vec<usize>, T)> {
        (0..self.values.len())
            .map(|mask| ((0..self.n).filter(|i| mask >> i & 1 == 1).collect(), self.values[mask]))
            .collect()
    }
}

/// Per-subset weights `c_A` such that `choquet(f, μ) = Σ_A c_A μ(A)`.
fn choquet_coefficients<T: Real>(f: &[T]) -> Vec<(usize, T)> {
    let n = f.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| f[a].partial_cmp(&f[b]).unwrap_or(std::cmp::Ordering::Equal));
    let mut mask = (1usize << n) - 1;
    let mut prev = T::zero();
    let mut out = Vec::with_capacity(n);
    for &i in &order {
        out.push((mask, f[i] - prev));
        prev = f[i];
        mask ^= 1 << i;
    }
    out
}

/// Discrete Choquet integral of `f` with respect to `μ`.
pub fn choquet<T: Real>(f: &[T], mu: &FuzzyMeasure<T>) -> Result<T> {
    if f.len() != mu.sources() {
        return Err(Error::Contract(format!(
            "measure covers {} sources, got {} scores",
            mu.sources(),
            f.len()
        )));
    }
    Ok(choquet_coefficients(f).into_iter().map(|(mask, c)| c * mu.get(mask)).sum())
}

/// Argmax over classes of the Choquet integral of each class's per-source
/// probabilities; ties go to the lowest class index.
pub fn choquet_fusion_predict<T: Real>(p: &ClassProbabilities<T>, mu: &FuzzyMeasure<T>) -> Result<usize> {
    let scores = (0..p.classes())
        .map(|c| choquet(&p.class_scores(c), mu))
        .collect::<Result<Vec<T>>>()?;
    Ok(argmax(&scores))
}

#[derive(Clone, Debug)]
pub struct FuzzyFit<T> {
    pub measure: FuzzyMeasure<T>,
    pub sse: T,
    /// Squared error of the uniform additive measure on the same data.
    pub baseline_sse: T,
}

const FIT_ITERATIONS: usize = 5000;

/// Least-squares fuzzy measure identification under the monotonicity axioms.
///
/// Each sample contributes one equation `choquet(scores_t, μ) ≈ target_t`.
/// Solved by projected gradient descent from the uniform additive measure;
/// the projection clamps to `[0, 1]` then raises each subset to the maximum
/// of its immediate subsets, visiting subsets by increasing size.
pub fn fit_fuzzy_measure<T: Real>(scores: &[Vec<T>], targets: &[T]) -> Result<FuzzyFit<T>> {
    if scores.is_empty() {
        return param_err("no samples");
    }
    if scores.len() != targets.len() {
        return dim_err(format!("{} samples vs {} targets", scores.len(), targets.len()));
    }
    let n = scores[0].len();
    if n == 0 || n > MAX_SOURCES {
        return param_err(format!("fuzzy measure supports 1..={MAX_SOURCES} sources, got {n}"));
    }
    if scores.iter().any(|s| s.len() != n) {
        return dim_err("ragged score rows");
    }
    let full = (1usize << n) - 1;
    let baseline = FuzzyMeasure::uniform_additive(n)?;
    let sse_of = |values: &[T]| -> T {
        scores
            .iter()
            .zip(targets)
            .map(|(f, &y)| {
                let c: T = choquet_coefficients(f).into_iter().map(|(m, c)| c * values[m]).sum();
                (c - y) * (c - y)
            })
            .sum()
    };
    let baseline_sse = sse_of(baseline.values());
    if n == 1 {
        let measure = FuzzyMeasure::new(1, vec![T::zero(), T::one()])?;
        let sse = sse_of(measure.values());
        return Ok(FuzzyFit { measure, sse, baseline_sse });
    }
    if targets.iter().all(|&y| y == targets[0]) {
        log::warn!("fuzzy measure fit: all targets identical");
    }

    // normal equations over the free subsets 1..full-1
    let p = full - 1;
    let mut gram = Matrix::<T>::zeros(p, p);
    let mut rhs = vec![T::zero(); p];
    let mut row = vec![T::zero(); p];
    for (f, &y) in scores.iter().zip(targets) {
        row.iter_mut().for_each(|r| *r = T::zero());
        let mut y_free = y;
        for (mask, c) in choquet_coefficients(f) {
            if mask == full {
                y_free -= c;
            } else {
                row[mask - 1] += c;
            }
        }
        for i in 0..p {
            if row[i] == T::zero() {
                continue;
            }
            rhs[i] += row[i] * y_free;
            for j in 0..p {
                gram.set(i, j, gram.get(i, j) + row[i] * row[j]);
            }
        }
    }
    let (eig, _) = sym_eigen(&gram);
    let lipschitz = eig[0].max(T::epsilon());
    let step = T::one() / lipschitz;

    let mut values = baseline.values().to_vec();
    let mut best_sse = baseline_sse;
    for _ in 0..FIT_ITERATIONS {
        let mut cand = values.clone();
        for i in 0..p {
            let g: T = (0..p).map(|j| gram.get(i, j) * values[j + 1]).sum::<T>() - rhs[i];
            cand[i + 1] = values[i + 1] - step * g;
        }
        project_monotone(&mut cand, n);
        let sse = sse_of(&cand);
        let moved = cand.iter().zip(&values).fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()));
        if sse > best_sse {
            break;
        }
        values = cand;
        best_sse = sse;
        if moved < T::lit(1e-12) {
            break;
        }
    }
    let measure = FuzzyMeasure::new(n, values)?;
    Ok(FuzzyFit { measure, sse: best_sse, baseline_sse })
}

fn project_monotone<T: Real>(values: &mut [T], n: usize) {
    let full = (1usize << n) - 1;
    values[0] = T::zero();
    values[full] = T::one();
    for v in values.iter_mut() {
        *v = v.max(T::zero()).min(T::one());
    }
    let mut masks: Vec<usize> = (1..full).collect();
    masks.sort_by_key(|m| m.count_ones());
    for mask in masks {
        let floor = (0..n)
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| values[mask ^ (1 << i)])
            .fold(T::zero(), T::max);
        if values[mask] < floor {
            values[mask] = floor;
        }
    }
}

/// Fits a measure for decision fusion: for every sample and class, the target
/// is 1 for the true class and 0 otherwise.
pub fn fit_fuzzy_measure_for_classes<T: Real>(
    probs: &[ClassProbabilities<T>],
    labels: &[usize],
) -> Result<FuzzyFit<T>> {
    if probs.len() != labels.len() {
        return dim_err(format!("{} samples vs {} labels", probs.len(), labels.len()));
    }
    let mut scores = Vec::new();
    let mut targets = Vec::new();
    for (p, &label) in probs.iter().zip(labels) {
        for c in 0..p.classes() {
            scores.push(p.class_scores(c));
            targets.push(if c == label { T::one() } else { T::zero() });
        }
    }
    fit_fuzzy_measure(&scores, &targets)
}

use ccafuse::cca::{planted_cca_data, CcaModel};
use ccafuse::dcca::cca_loss;
use ccafuse::harness::{fit_pipeline, load_model, save_model, DataSource, ExperimentConfig, Method};
use ccafuse::mine::{estimate_mi, MineConfig};
use ccafuse::numerics::{auto_covariance, center, inv_sqrt_sym, svd};
use ccafuse::synthdata::GenConfig;
use ccafuse::{Matrix, RandomStream};
use proptest::prelude::*;

fn naive_mul(a: &Matrix<f64>, b: &Matrix<f64>) -> Matrix<f64> {
    Matrix::from_fn(a.rows(), b.cols(), |i, j| (0..a.cols()).map(|k| a.get(i, k) * b.get(k, j)).sum())
}

fn random(rows: usize, cols: usize, seed: u64) -> Matrix<f64> {
    let mut s = RandomStream::new(seed, 0);
    Matrix::from_fn(rows, cols, |_, _| s.normal::<f64>())
}

/// Diagonally dominant, hence invertible.
fn mixing(d: usize, seed: u64) -> Matrix<f64> {
    let mut m = random(d, d, seed);
    for i in 0..d {
        m.set(i, i, m.get(i, i) + 3.0 * d as f64);
    }
    m
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn svd_reconstructs(rows in 1usize..9, cols in 1usize..9, seed in 0u64..1000) {
        let m = random(rows, cols, seed);
        let f = svd(&m);
        let k = f.s.len();
        let us = Matrix::from_fn(f.u.rows(), k, |i, j| f.u.get(i, j) * f.s[j]);
        let back = naive_mul(&us, &f.v.transpose());
        prop_assert!(back.sub(&m).frobenius_norm() < 1e-8);
        prop_assert!(f.s.windows(2).all(|w| w[0] >= w[1]) && f.s.iter().all(|&x| x >= 0.0));
    }

    #[test]
    fn inverse_square_root_whitens(d in 1usize..7, seed in 0u64..1000) {
        let (c, _) = center(&random(4 * d + 5, d, seed)).unwrap();
        let m = auto_covariance(&c, 1e-6).unwrap();
        let r = inv_sqrt_sym(&m, 1e-10).unwrap();
        let rmr = naive_mul(&naive_mul(&r, &m), &r);
        prop_assert!(rmr.sub(&Matrix::identity(d)).frobenius_norm() < 1e-6);
        prop_assert!(r.sub(&r.transpose()).max_abs() < 1e-9);
    }

    #[test]
    fn cca_is_invariant_to_affine_maps(seed in 0u64..500) {
        let (x1, x2) = planted_cca_data::<f64>(&mut RandomStream::new(seed, 0), &[0.8, 0.4], 4, 3, 400).unwrap();
        let base = CcaModel::fit(&x1, &x2, 2, 0.0).unwrap();
        let mut y1 = naive_mul(&x1, &mixing(4, seed + 1));
        y1.add_row_vector(&[5.0, -2.0, 0.5, 9.0]);
        let y2 = naive_mul(&x2, &mixing(3, seed + 2));
        let moved = CcaModel::fit(&y1, &y2, 2, 0.0).unwrap();
        for (a, b) in base.correlations.iter().zip(&moved.correlations) {
            prop_assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn total_correlation_is_bounded_and_invariant(n in 12usize..40, d in 2usize..5, seed in 0u64..500) {
        let o1 = random(n, d, seed);
        let o2 = random(n, d, seed + 7919).add(&o1.scale(0.5));
        let loss = cca_loss(&o1, &o2, 0.0).unwrap();
        prop_assert!(loss.corr >= 0.0 && loss.corr <= d as f64 + 1e-6);
        let mapped = cca_loss(&naive_mul(&o1, &mixing(d, seed)), &o2, 0.0).unwrap();
        prop_assert!((loss.corr - mapped.corr).abs() < 1e-8);
    }
}

#[test]
fn single_and_double_precision_agree() {
    let (x1, x2) = planted_cca_data::<f64>(&mut RandomStream::new(3, 0), &[0.9, 0.5], 5, 4, 2000).unwrap();
    let a = CcaModel::fit(&x1, &x2, 2, 1e-6).unwrap();
    let b = CcaModel::fit(&x1.cast::<f32>(), &x2.cast::<f32>(), 2, 1e-6).unwrap();
    for (p, q) in a.correlations.iter().zip(&b.correlations) {
        assert!((p - *q as f64).abs() < 1e-3, "{p} vs {q}");
    }
}

#[test]
fn stronger_dependence_has_more_information() {
    let n = 3000;
    let mut s = RandomStream::new(40, 0);
    let x = Matrix::from_fn(n, 1, |_, _| s.normal::<f64>());
    let eps = Matrix::from_fn(n, 1, |_, _| s.normal::<f64>());
    let cfg = MineConfig { epochs: 40, ..MineConfig::default() };
    let mut est = Vec::new();
    for noise in [0.3, 1.0, 3.0] {
        let z = x.add(&eps.scale(noise));
        est.push(estimate_mi(&x, &z, &cfg, &mut RandomStream::new(41, 0)).unwrap().estimate);
    }
    assert!(est[0] > est[1] && est[1] > est[2], "{est:?}");
}

#[test]
fn saved_model_predicts_identically() {
    let mut cfg = ExperimentConfig {
        data: DataSource::Generator {
            config: GenConfig { classes: 3, d1: 8, d2: 5, samples_per_class: 30, ..GenConfig::default() },
            seed: Some(11),
        },
        ..ExperimentConfig::default()
    };
    cfg.dcca.hidden1 = vec![10];
    cfg.dcca.hidden2 = vec![10];
    cfg.dcca.out_dim = 3;
    cfg.dcca.epochs = 3;
    let ds = cfg.load_dataset().unwrap();
    let dir = tempfile::tempdir().unwrap();
    for method in [Method::Dcca, Method::Fuzzy, Method::Concat] {
        let cfg = ExperimentConfig { method, ..cfg.clone() };
        let p = fit_pipeline(&cfg, &ds.x1, &ds.x2, &ds.labels, &RandomStream::new(1, 0)).unwrap();
        let path = dir.path().join(format!("{}.model", method.tag()));
        save_model(&p, &path).unwrap();
        let head = std::fs::read_to_string(&path).unwrap();
        assert!(head.starts_with("CCAFUSE1\n"));
        let back = load_model(&path).unwrap();
        assert_eq!(back.method, method);
        assert_eq!(back.predict(&ds.x1, &ds.x2).unwrap(), p.predict(&ds.x1, &ds.x2).unwrap());
    }
    let bad = dir.path().join("bad.model");
    std::fs::write(&bad, "NOTAMODEL\n{}").unwrap();
    assert!(load_model(&bad).is_err());
}

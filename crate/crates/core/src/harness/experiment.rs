use std::collections::hash_map::DefaultHasher;
use std::collections::HashSet;
use std::hash::{Hash, Hasher};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::noise::{NoiseScheme, NoiseTarget};
use super::pipeline::{Head, Representation};
use super::split::{split, Fold};
use super::{ExperimentConfig, GridAxes, Method, SweepConfig};
use crate::classifier::{accuracy, confusion_matrix};
use crate::error::{param_err, Error, Result};
use crate::dcca::DccaModel;
use crate::features::{ScaleMode, Scaler};
use crate::mine::{compare_mi, MiComparison};
use crate::numerics::{Matrix, RandomStream};
use crate::synthdata::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditSummary {
    pub fitted_rows: usize,
    pub test_rows: usize,
    /// Test rows whose exact values also appear among fitted rows.
    pub overlapping_rows: usize,
    pub test_rows_unchanged: bool,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    pub accuracy: Option<f64>,
    pub error: Option<String>,
    /// DCCA total correlation on the training fold.
    pub train_correlation: Option<f64>,
    pub audit: Option<AuditSummary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub method: Method,
    pub seed: u64,
    pub alpha1: Option<f64>,
    pub folds: Vec<FoldReport>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// False when any fold failed.
    pub complete: bool,
    pub classes: usize,
    /// `confusion[true][predicted]`, summed over folds.
    pub confusion: Vec<Vec<usize>>,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatmapCell {
    pub dim: usize,
    pub alpha1: f64,
    pub mean: f64,
    pub std: f64,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridReport {
    pub cells: Vec<HeatmapCell>,
    pub best: HeatmapCell,
    pub complete: bool,
    pub config: ExperimentConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseRow {
    pub method: String,
    pub scheme: String,
    pub level: f64,
    pub mean: f64,
    pub std: f64,
    pub fold_accuracies: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseReport {
    pub rows: Vec<NoiseRow>,
    pub complete: bool,
    pub config: ExperimentConfig,
}

/// A noise-sweep row: a method, with a fixed `α1` for DCCA rows.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepMethod {
    pub label: String,
    pub method: Method,
    pub alpha1: Option<f64>,
}

impl SweepMethod {
    /// `DCCA-0.3` style labels fix `α1`; anything else is a method tag.
    pub fn parse(label: &str) -> Result<Self> {
        let lower = label.to_ascii_lowercase();
        if let Some(rest) = lower.strip_prefix("dcca-") {
            let alpha: f64 = rest.parse().map_err(|_| Error::Parameter(format!("bad DCCA weight in {label:?}")))?;
            if !(0.0..=1.0).contains(&alpha) {
                return param_err(format!("DCCA weight out of range in {label:?}"));
            }
            return Ok(Self { label: label.to_owned(), method: Method::Dcca, alpha1: Some(alpha) });
        }
        Ok(Self { label: label.to_owned(), method: Method::from_tag(label)?, alpha1: None })
    }
}

struct FoldOutput {
    /// Test predictions for each requested `α1`.
    predictions: Vec<Vec<usize>>,
    truth: Vec<usize>,
    train_correlation: Option<f64>,
    audit: AuditSummary,
}

fn row_hashes(m: &Matrix<f64>) -> Vec<u64> {
    m.row_iter()
        .map(|row| {
            let mut h = DefaultHasher::new();
            row.iter().for_each(|v| v.to_bits().hash(&mut h));
            h.finish()
        })
        .collect()
}

/// Checks that no test row was among the rows any estimator was fitted on,
/// and that the test rows were not modified by fitting.
struct Audit {
    fitted: HashSet<u64>,
    test_before: Vec<u64>,
    fitted_rows: usize,
}

impl Audit {
    fn new(test1: &Matrix<f64>, test2: &Matrix<f64>) -> Self {
        let mut test_before = row_hashes(test1);
        test_before.extend(row_hashes(test2));
        Self { fitted: HashSet::new(), test_before, fitted_rows: 0 }
    }

    fn record_fit(&mut self, m: &Matrix<f64>) {
        self.fitted_rows += m.rows();
        self.fitted.extend(row_hashes(m));
    }

    fn finish(&self, tests: &[&Matrix<f64>], raw1: &Matrix<f64>, raw2: &Matrix<f64>) -> AuditSummary {
        let overlapping_rows = tests
            .iter()
            .flat_map(|m| row_hashes(m))
            .filter(|h| self.fitted.contains(h))
            .count();
        let mut after = row_hashes(raw1);
        after.extend(row_hashes(raw2));
        let unchanged = after == self.test_before;
        AuditSummary {
            fitted_rows: self.fitted_rows,
            test_rows: raw1.rows(),
            overlapping_rows,
            test_rows_unchanged: unchanged,
            passed: overlapping_rows == 0 && unchanged,
        }
    }
}

fn apply_noise(
    scheme: Option<&NoiseScheme>,
    train_only: bool,
    views: [&mut Matrix<f64>; 4],
    stream: &RandomStream,
) -> Result<()> {
    let Some(scheme) = scheme.filter(|s| !s.is_noop()) else {
        return Ok(());
    };
    let target = scheme.target();
    let [tr1, te1, tr2, te2] = views;
    let hit1 = matches!(target, NoiseTarget::View1 | NoiseTarget::Both);
    let hit2 = matches!(target, NoiseTarget::View2 | NoiseTarget::Both);
    for (hit, m, key, is_test) in [(hit1, tr1, 1, false), (hit1, te1, 2, true), (hit2, tr2, 3, false), (hit2, te2, 4, true)] {
        if hit && !(is_test && train_only) {
            *m = scheme.apply(m, &mut stream.derive(key))?;
        }
    }
    Ok(())
}

/// One cross-validation fold: normalize on train, inject noise, fit the
/// representation once and a classifier per `α1`, predict the test rows.
fn run_fold(
    ds: &Dataset,
    fold: &Fold,
    cfg: &ExperimentConfig,
    method: Method,
    alphas: &[f64],
    noise: Option<&NoiseScheme>,
    stream: &RandomStream,
) -> Result<FoldOutput> {
    let raw1_tr = ds.x1.select_rows(&fold.train);
    let raw2_tr = ds.x2.select_rows(&fold.train);
    let raw1_te = ds.x1.select_rows(&fold.test);
    let raw2_te = ds.x2.select_rows(&fold.test);
    let y_tr: Vec<usize> = fold.train.iter().map(|&i| ds.labels[i]).collect();
    let truth: Vec<usize> = fold.test.iter().map(|&i| ds.labels[i]).collect();
    let mut audit = Audit::new(&raw1_te, &raw2_te);

    audit.record_fit(&raw1_tr);
    audit.record_fit(&raw2_tr);
    let s1 = Scaler::fit(&raw1_tr, ScaleMode::Zscore)?;
    let s2 = Scaler::fit(&raw2_tr, ScaleMode::Zscore)?;
    let (mut z1, mut z2) = (s1.transform(&raw1_tr)?, s2.transform(&raw2_tr)?);
    let (mut t1, mut t2) = (s1.transform(&raw1_te)?, s2.transform(&raw2_te)?);
    apply_noise(noise, cfg.noise_train_only, [&mut z1, &mut t1, &mut z2, &mut t2], &stream.derive(10))?;

    audit.record_fit(&z1);
    audit.record_fit(&z2);
    let rep = Representation::fit(method, cfg, &z1, &z2, &mut stream.derive(20))?;
    let train_correlation = match &rep {
        Some(Representation::Dcca { model }) => model.final_correlation(),
        _ => None,
    };
    let head_stream = stream.derive(30);
    let predictions = alphas
        .iter()
        .map(|&alpha| {
            let head = Head::fit(rep.as_ref(), &z1, &z2, &y_tr, alpha, &cfg.svm, method == Method::Fuzzy, &head_stream)?;
            head.predict(rep.as_ref(), &t1, &t2)
        })
        .collect::<Result<Vec<_>>>()?;
    let audit = audit.finish(&[&t1, &t2], &raw1_te, &raw2_te);
    if !audit.passed {
        log::warn!("leakage audit flagged {} test rows", audit.overlapping_rows);
    }
    Ok(FoldOutput { predictions, truth, train_correlation, audit })
}

pub(crate) fn fold_stream(cfg: &ExperimentConfig, fold: usize) -> RandomStream {
    RandomStream::new(cfg.seed, 0).derive_path(&[1, fold as u64])
}

fn folds_for(ds: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<Fold>> {
    let mut s = RandomStream::new(cfg.seed, 0).derive(100);
    split(&ds.labels, &ds.groups, &cfg.split, &mut s)
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// All folds for one method, in parallel; outer `Vec` is per fold.
fn run_all_folds(
    ds: &Dataset,
    folds: &[Fold],
    cfg: &ExperimentConfig,
    method: Method,
    alphas: &[f64],
    noise: Option<&NoiseScheme>,
) -> Vec<Result<FoldOutput>> {
    folds
        .par_iter()
        .enumerate()
        .map(|(i, f)| run_fold(ds, f, cfg, method, alphas, noise, &fold_stream(cfg, i)))
        .collect()
}

/// Cross-validated evaluation of `cfg.method` on `ds`.
pub fn run_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let folds = folds_for(ds, cfg)?;
    let classes = ds.classes();
    let outputs = run_all_folds(ds, &folds, cfg, cfg.method, &[cfg.dcca.alpha1], cfg.noise.as_ref());
    let mut confusion = vec![vec![0; classes]; classes];
    let mut reports = Vec::with_capacity(folds.len());
    let mut accs = Vec::new();
    for (i, (fold, out)) in folds.iter().zip(outputs).enumerate() {
        let mut r = FoldReport {
            fold: i,
            train_size: fold.train.len(),
            test_size: fold.test.len(),
            accuracy: None,
            error: None,
            train_correlation: None,
            audit: None,
        };
        match out {
            Ok(o) => {
                let acc = accuracy(&o.predictions[0], &o.truth);
                let c = confusion_matrix(&o.predictions[0], &o.truth, classes);
                for (row, add) in confusion.iter_mut().zip(c) {
                    row.iter_mut().zip(add).for_each(|(a, b)| *a += b);
                }
                accs.push(acc);
                r.accuracy = Some(acc);
                r.train_correlation = o.train_correlation;
                r.audit = Some(o.audit);
            }
            Err(e) => {
                log::warn!("fold {i} failed: {e}");
                r.error = Some(e.to_string());
            }
        }
        reports.push(r);
    }
    if accs.is_empty() {
        return Err(Error::Training { epoch: 0, message: "every fold failed".into() });
    }
    let (mean_accuracy, std_accuracy) = mean_std(&accs);
    Ok(ExperimentReport {
        method: cfg.method,
        seed: cfg.seed,
        alpha1: (cfg.method == Method::Dcca).then_some(cfg.dcca.alpha1),
        complete: accs.len() == folds.len(),
        folds: reports,
        mean_accuracy,
        std_accuracy,
        classes,
        confusion,
        config: cfg.clone(),
    })
}

/// Best cell: highest mean, then higher `α1`, then smaller dim.
fn better(a: &HeatmapCell, b: &HeatmapCell) -> bool {
    if a.mean != b.mean {
        return a.mean > b.mean;
    }
    if a.alpha1 != b.alpha1 {
        return a.alpha1 > b.alpha1;
    }
    a.dim < b.dim
}

/// DCCA accuracy over every `(output dim, α1)` pair.
pub fn grid_search(ds: &Dataset, cfg: &ExperimentConfig, axes: &GridAxes) -> Result<GridReport> {
    cfg.validate()?;
    if axes.dims.is_empty() || axes.alphas.is_empty() {
        return param_err("grid axes must be nonempty");
    }
    let folds = folds_for(ds, cfg)?;
    let tasks: Vec<(usize, usize)> = axes.dims.iter().flat_map(|&d| (0..folds.len()).map(move |f| (d, f))).collect();
    let outputs: Vec<Result<FoldOutput>> = tasks
        .par_iter()
        .map(|&(dim, f)| {
            let mut c = cfg.clone();
            c.method = Method::Dcca;
            c.dcca.out_dim = dim;
            run_fold(ds, &folds[f], &c, Method::Dcca, &axes.alphas, cfg.noise.as_ref(), &fold_stream(cfg, f))
        })
        .collect();
    let mut complete = true;
    let mut cells = Vec::new();
    for (di, &dim) in axes.dims.iter().enumerate() {
        let per_fold = &outputs[di * folds.len()..(di + 1) * folds.len()];
        for (ai, &alpha1) in axes.alphas.iter().enumerate() {
            let accs: Vec<f64> = per_fold
                .iter()
                .filter_map(|o| o.as_ref().ok())
                .map(|o| accuracy(&o.predictions[ai], &o.truth))
                .collect();
            complete &= accs.len() == folds.len();
            let (mean, std) = mean_std(&accs);
            cells.push(HeatmapCell { dim, alpha1, mean, std, fold_accuracies: accs });
        }
    }
    for o in outputs.iter().filter_map(|o| o.as_ref().err()) {
        log::warn!("grid cell failed: {o}");
    }
    let best = cells.iter().fold(None::<&HeatmapCell>, |best, c| match best {
        Some(b) if !better(c, b) => Some(b),
        _ => Some(c),
    });
    let best = best.cloned().expect("nonempty grid");
    Ok(GridReport { cells, best, complete, config: cfg.clone() })
}

/// Accuracy for every `(method row, noise scheme)` pair. DCCA rows that only
/// differ in `α1` share one trained DCCA model per fold.
pub fn noise_sweep(ds: &Dataset, cfg: &ExperimentConfig, sweep: &SweepConfig) -> Result<NoiseReport> {
    cfg.validate()?;
    let rows: Vec<SweepMethod> = sweep.methods.iter().map(|m| SweepMethod::parse(m)).collect::<Result<_>>()?;
    if rows.is_empty() || sweep.schemes.is_empty() {
        return param_err("noise sweep needs methods and schemes");
    }
    let folds = folds_for(ds, cfg)?;
    // group rows by base method, keeping first-appearance order
    let mut groups: Vec<(Method, Vec<usize>)> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        match groups.iter_mut().find(|(m, _)| *m == r.method) {
            Some((_, idx)) => idx.push(i),
            None => groups.push((r.method, vec![i])),
        }
    }
    let tasks: Vec<(usize, usize)> =
        (0..sweep.schemes.len()).flat_map(|s| (0..groups.len()).map(move |g| (s, g))).collect();
    let results: Vec<(usize, usize, Vec<Result<FoldOutput>>)> = tasks
        .par_iter()
        .map(|&(s, g)| {
            let (method, idx) = &groups[g];
            let alphas: Vec<f64> = idx.iter().map(|&i| rows[i].alpha1.unwrap_or(cfg.dcca.alpha1)).collect();
            let mut c = cfg.clone();
            c.method = *method;
            (s, g, run_all_folds(ds, &folds, &c, *method, &alphas, Some(&sweep.schemes[s])))
        })
        .collect();

    let mut complete = true;
    let mut out = Vec::new();
    for (s, g, outputs) in results {
        let scheme = &sweep.schemes[s];
        for (k, &row) in groups[g].1.iter().enumerate() {
            let accs: Vec<f64> = outputs
                .iter()
                .filter_map(|o| o.as_ref().ok())
                .map(|o| accuracy(&o.predictions[k], &o.truth))
                .collect();
            complete &= accs.len() == folds.len();
            let (mean, std) = mean_std(&accs);
            out.push(NoiseRow {
                method: rows[row].label.clone(),
                scheme: scheme.label(),
                level: scheme.level(),
                mean,
                std,
                fold_accuracies: accs,
            });
        }
        for e in outputs.iter().filter_map(|o| o.as_ref().err()) {
            log::warn!("noise sweep fold failed: {e}");
        }
    }
    // method rows in configured order, then scheme order
    out.sort_by_key(|r| rows.iter().position(|m| m.label == r.method).unwrap_or(usize::MAX));
    Ok(NoiseReport { rows: out, complete, config: cfg.clone() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MiReport {
    pub seed: u64,
    /// Raw (z-scored) views against their DCCA projections.
    pub comparison: MiComparison,
    pub dcca_correlation: f64,
    pub config: ExperimentConfig,
}

/// Trains DCCA on all of `ds` and estimates mutual information between the
/// two views before and after the transform.
pub fn mi_experiment(ds: &Dataset, cfg: &ExperimentConfig) -> Result<MiReport> {
    cfg.validate()?;
    let root = RandomStream::new(cfg.seed, 0);
    let z1 = Scaler::fit(&ds.x1, ScaleMode::Zscore)?.transform(&ds.x1)?;
    let z2 = Scaler::fit(&ds.x2, ScaleMode::Zscore)?.transform(&ds.x2)?;
    let model = DccaModel::train(&z1, &z2, &cfg.dcca, &mut root.derive(200))?;
    let (o1, o2) = model.transform(&z1, &z2)?;
    let comparison = compare_mi((&z1, &z2), (&o1, &o2), &cfg.mine, &root.derive(300))?;
    Ok(MiReport {
        seed: cfg.seed,
        comparison,
        dcca_correlation: model.final_correlation().unwrap_or(0.0),
        config: cfg.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{DataSource, SplitScheme};
    use crate::synthdata::GenConfig;

    fn small_cfg(method: Method) -> ExperimentConfig {
        let mut cfg = ExperimentConfig {
            data: DataSource::Generator {
                config: GenConfig { classes: 3, d1: 12, d2: 6, samples_per_class: 40, noise1: 0.0, noise2: 0.0, nonlinear: false, separation: 5.0, ..GenConfig::default() },
                seed: None,
            },
            method,
            split: SplitScheme::Kfold { k: 3 },
            seed: 1,
            ..ExperimentConfig::default()
        };
        cfg.dcca.hidden1 = vec![16];
        cfg.dcca.hidden2 = vec![16];
        cfg.dcca.out_dim = 4;
        cfg.dcca.epochs = 5;
        cfg.dcca.optimizer.batch_size = 40;
        cfg.bdae.hidden1 = 8;
        cfg.bdae.hidden2 = 8;
        cfg.bdae.shared_dim = 4;
        cfg.bdae.pretrain_epochs = 3;
        cfg.bdae.finetune_epochs = 3;
        cfg
    }

    #[test]
    fn concat_on_easy_task() {
        let cfg = small_cfg(Method::Concat);
        let ds = cfg.load_dataset().unwrap();
        let r = run_experiment(&ds, &cfg).unwrap();
        assert!(r.mean_accuracy >= 0.98, "{}", r.mean_accuracy);
        assert!(r.complete);
        let total: usize = r.confusion.iter().flatten().sum();
        assert_eq!(total, ds.len());
        let trace: usize = (0..r.classes).map(|k| r.confusion[k][k]).sum();
        let pooled = trace as f64 / total as f64;
        let fold_weighted: f64 = r.folds.iter().map(|f| f.accuracy.unwrap() * f.test_size as f64).sum::<f64>() / total as f64;
        assert!((pooled - fold_weighted).abs() < 1e-12);
        for (k, row) in r.confusion.iter().enumerate() {
            assert_eq!(row.iter().sum::<usize>(), ds.labels.iter().filter(|&&l| l == k).count());
        }
        assert!(r.folds.iter().all(|f| f.audit.as_ref().unwrap().passed));
    }

    #[test]
    fn every_method_runs() {
        for m in Method::ALL {
            let cfg = small_cfg(m);
            let ds = cfg.load_dataset().unwrap();
            let r = run_experiment(&ds, &cfg).unwrap_or_else(|e| panic!("{m:?}: {e}"));
            assert!(r.complete, "{m:?}");
            assert!(r.mean_accuracy > 0.5, "{m:?}: {}", r.mean_accuracy);
        }
    }

    #[test]
    fn reports_are_deterministic() {
        let cfg = small_cfg(Method::Dcca);
        let ds = cfg.load_dataset().unwrap();
        let a = serde_json::to_string(&run_experiment(&ds, &cfg).unwrap()).unwrap();
        let b = serde_json::to_string(&run_experiment(&ds, &cfg).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_cell_grid_matches_experiment() {
        let cfg = small_cfg(Method::Dcca);
        let ds = cfg.load_dataset().unwrap();
        let axes = GridAxes { dims: vec![cfg.dcca.out_dim], alphas: vec![cfg.dcca.alpha1] };
        let g = grid_search(&ds, &cfg, &axes).unwrap();
        let r = run_experiment(&ds, &cfg).unwrap();
        assert_eq!(g.cells.len(), 1);
        assert_eq!(g.best.mean, r.mean_accuracy);
        assert_eq!(g.best.std, r.std_accuracy);
    }

    #[test]
    fn grid_tie_break() {
        let cell = |dim, alpha1, mean| HeatmapCell { dim, alpha1, mean, std: 0.0, fold_accuracies: vec![] };
        assert!(better(&cell(10, 0.5, 0.9), &cell(5, 0.7, 0.8)));
        assert!(better(&cell(10, 0.7, 0.9), &cell(5, 0.5, 0.9)));
        assert!(better(&cell(5, 0.7, 0.9), &cell(10, 0.7, 0.9)));
    }

    #[test]
    fn zero_noise_column_matches_plain_run() {
        let cfg = small_cfg(Method::Dcca);
        let ds = cfg.load_dataset().unwrap();
        let sweep = SweepConfig {
            methods: vec!["DCCA-0.7".into(), "concat".into()],
            schemes: vec![NoiseScheme::replace(0.0, crate::harness::NoiseDistribution::Normal)],
        };
        let rep = noise_sweep(&ds, &cfg, &sweep).unwrap();
        let plain_dcca = run_experiment(&ds, &cfg).unwrap();
        let plain_concat = run_experiment(&ds, &ExperimentConfig { method: Method::Concat, ..cfg.clone() }).unwrap();
        assert_eq!(rep.rows[0].method, "DCCA-0.7");
        assert_eq!(rep.rows[0].mean, plain_dcca.mean_accuracy);
        assert_eq!(rep.rows[1].mean, plain_concat.mean_accuracy);
    }

    #[test]
    fn sweep_labels_parse() {
        let m = SweepMethod::parse("DCCA-0.3").unwrap();
        assert_eq!((m.method, m.alpha1), (Method::Dcca, Some(0.3)));
        assert_eq!(SweepMethod::parse("bdae").unwrap().method, Method::Bdae);
        assert!(SweepMethod::parse("DCCA-2").is_err());
    }
}

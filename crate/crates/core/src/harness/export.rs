use std::path::Path;

use super::experiment::{GridReport, NoiseReport};
use super::pipeline::{FittedPipeline, Head, Representation};
use crate::dcca::fuse;
use crate::mine::MiComparison;
use crate::error::{Error, Result};
use crate::synthdata::Dataset;

fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}

fn writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::WriterBuilder::new().flexible(false).from_path(path).map_err(csv_err)
}

/// One exported embedding: a feature vector tagged with its label, modality
/// (`eeg`, `eye`, `fused`) and stage (`original`, `transformed`, `fused`).
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingRow {
    pub features: Vec<f64>,
    pub label: usize,
    pub modality: String,
    pub stage: String,
}

/// Writes the raw views, their DCCA projections and the fused features of
/// every sample in `ds`: `5N` rows padded to the widest block.
pub fn export_embeddings(pipeline: &FittedPipeline, ds: &Dataset, path: impl AsRef<Path>) -> Result<()> {
    let Some(Representation::Dcca { model }) = &pipeline.representation else {
        return Err(Error::Parameter("embedding export needs a trained DCCA model".into()));
    };
    let alpha1 = match &pipeline.head {
        Head::Svm { alpha1, .. } => *alpha1,
        _ => model.alpha1,
    };
    let (z1, z2) = pipeline.normalize(&ds.x1, &ds.x2)?;
    let (o1, o2) = model.transform(&z1, &z2)?;
    let fused = fuse(&o1, &o2, alpha1)?;
    let blocks = [
        (&ds.x1, "eeg", "original"),
        (&ds.x2, "eye", "original"),
        (&o1, "eeg", "transformed"),
        (&o2, "eye", "transformed"),
        (&fused, "fused", "fused"),
    ];
    let width = blocks.iter().map(|(m, ..)| m.cols()).max().unwrap_or(0);
    let mut w = writer(path.as_ref())?;
    let mut header: Vec<String> = (0..width).map(|j| format!("f{j}")).collect();
    header.extend(["label", "modality", "stage"].map(String::from));
    w.write_record(&header).map_err(csv_err)?;
    for (m, modality, stage) in blocks {
        for (i, row) in m.row_iter().enumerate() {
            let mut rec: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            rec.resize(width, String::new());
            rec.extend([ds.labels[i].to_string(), modality.to_owned(), stage.to_owned()]);
            w.write_record(&rec).map_err(csv_err)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_embeddings(path: impl AsRef<Path>) -> Result<Vec<EmbeddingRow>> {
    let mut r = csv::Reader::from_path(path.as_ref()).map_err(csv_err)?;
    let width = r.headers().map_err(csv_err)?.len();
    if width < 3 {
        return Err(Error::Format("embedding file lacks label/modality/stage columns".into()));
    }
    let mut rows = Vec::new();
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let bad = |what: &str| Error::Format(format!("row {}: bad {what}", line + 1));
        let features = rec
            .iter()
            .take(width - 3)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse::<f64>().map_err(|_| bad("feature")))
            .collect::<Result<Vec<_>>>()?;
        let label = rec[width - 3].parse().map_err(|_| bad("label"))?;
        rows.push(EmbeddingRow { features, label, modality: rec[width - 2].to_owned(), stage: rec[width - 1].to_owned() });
    }
    Ok(rows)
}

/// `dim,alpha1,mean,std`
pub fn write_heatmap_csv(report: &GridReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["dim", "alpha1", "mean", "std"]).map_err(csv_err)?;
    for c in &report.cells {
        w.write_record([c.dim.to_string(), c.alpha1.to_string(), c.mean.to_string(), c.std.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `method,scheme,level,mean,std`, one row per sweep point.
pub fn write_noise_csv(report: &NoiseReport, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["method", "scheme", "level", "mean", "std"]).map_err(csv_err)?;
    for r in &report.rows {
        w.write_record([r.method.clone(), r.scheme.clone(), r.level.to_string(), r.mean.to_string(), r.std.to_string()])
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Wide layout: one row per method, a `mean/std` cell in percent per
/// `(scheme, level)` column.
pub fn write_noise_table_csv(report: &NoiseReport, path: impl AsRef<Path>) -> Result<()> {
    let mut columns: Vec<(String, f64)> = Vec::new();
    let mut methods: Vec<String> = Vec::new();
    for r in &report.rows {
        if !columns.iter().any(|(s, l)| *s == r.scheme && *l == r.level) {
            columns.push((r.scheme.clone(), r.level));
        }
        if !methods.contains(&r.method) {
            methods.push(r.method.clone());
        }
    }
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["method".to_owned()];
    header.extend(columns.iter().map(|(s, l)| format!("{s}@{l}")));
    w.write_record(&header).map_err(csv_err)?;
    for m in &methods {
        let mut rec = vec![m.clone()];
        for (s, l) in &columns {
            let cell = report
                .rows
                .iter()
                .find(|r| r.method == *m && r.scheme == *s && r.level == *l)
                .map(|r| format!("{:.2}/{:.2}", 100.0 * r.mean, 100.0 * r.std))
                .unwrap_or_default();
            rec.push(cell);
        }
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// `epoch,original,transformed` smoothed bounds, then the raw per-epoch
/// values in `original_raw,transformed_raw`.
pub fn write_mi_curve_csv(cmp: &MiComparison, path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    w.write_record(["epoch", "original", "transformed", "original_raw", "transformed_raw"]).map_err(csv_err)?;
    let (o, t) = (&cmp.original, &cmp.transformed);
    for i in 0..o.values.len().min(t.values.len()) {
        w.write_record([
            (i + 1).to_string(),
            o.smoothed[i].to_string(),
            t.smoothed[i].to_string(),
            o.values[i].to_string(),
            t.values[i].to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Rows are true classes, columns predicted classes.
pub fn write_confusion_csv(confusion: &[Vec<usize>], path: impl AsRef<Path>) -> Result<()> {
    let mut w = writer(path.as_ref())?;
    let mut header = vec!["true".to_owned()];
    header.extend((0..confusion.len()).map(|k| format!("pred_{k}")));
    w.write_record(&header).map_err(csv_err)?;
    for (k, row) in confusion.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(row.iter().map(|c| c.to_string()));
        w.write_record(&rec).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::{fit_pipeline, DataSource, ExperimentConfig, Method};
    use crate::numerics::RandomStream;
    use crate::synthdata::GenConfig;

    #[test]
    fn embeddings_round_trip() {
        let mut cfg = ExperimentConfig {
            data: DataSource::Generator {
                config: GenConfig { classes: 3, d1: 7, d2: 4, samples_per_class: 10, ..GenConfig::default() },
                seed: Some(3),
            },
            method: Method::Dcca,
            ..ExperimentConfig::default()
        };
        cfg.dcca.hidden1 = vec![8];
        cfg.dcca.hidden2 = vec![8];
        cfg.dcca.out_dim = 3;
        cfg.dcca.epochs = 2;
        let ds = cfg.load_dataset().unwrap();
        let p = fit_pipeline(&cfg, &ds.x1, &ds.x2, &ds.labels, &RandomStream::new(0, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("emb.csv");
        export_embeddings(&p, &ds, &path).unwrap();
        let rows = read_embeddings(&path).unwrap();
        assert_eq!(rows.len(), 5 * ds.len());
        let n = ds.len();
        for i in 0..n {
            assert_eq!(rows[i].features, ds.x1.row(i));
            assert_eq!(rows[i].label, ds.labels[i]);
            assert_eq!((rows[n + i].modality.as_str(), rows[n + i].stage.as_str()), ("eye", "original"));
            assert_eq!(rows[n + i].features, ds.x2.row(i));
            assert_eq!(rows[4 * n + i].features.len(), 3);
        }
        let header = std::fs::read_to_string(&path).unwrap();
        assert!(header.starts_with("f0,f1,f2,f3,f4,f5,f6,label,modality,stage\n"));
    }

    #[test]
    fn export_rejects_non_dcca() {
        let cfg = ExperimentConfig {
            data: DataSource::Generator { config: GenConfig { samples_per_class: 5, ..GenConfig::default() }, seed: None },
            method: Method::Concat,
            ..ExperimentConfig::default()
        };
        let ds = cfg.load_dataset().unwrap();
        let p = fit_pipeline(&cfg, &ds.x1, &ds.x2, &ds.labels, &RandomStream::new(0, 0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        assert!(export_embeddings(&p, &ds, dir.path().join("e.csv")).is_err());
    }

    #[test]
    fn confusion_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.csv");
        write_confusion_csv(&[vec![3, 0], vec![1, 2]], &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "true,pred_0,pred_1\n0,3,0\n1,1,2\n");
    }
}

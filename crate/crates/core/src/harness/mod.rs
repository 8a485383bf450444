//! Experiment orchestration: configuration, splits, noise injection, fold
//! pipelines, grid search, noise sweeps and report files.

mod experiment;
mod export;
mod noise;
mod pipeline;
mod split;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bdae::BdaeConfig;
use crate::classifier::SvmConfig;
use crate::dcca::DccaConfig;
use crate::error::{dim_err, param_err, Error, Result};
use crate::features::FeatureMatrix;
use crate::mine::MineConfig;
use crate::synthdata::{generate, seed_v_like_with, seed_v_config, Dataset, GenConfig, SEED_V_FOLDS};

pub use experiment::{
    grid_search, mi_experiment, noise_sweep, run_experiment, AuditSummary, ExperimentReport, FoldReport,
    GridReport, HeatmapCell, MiReport, NoiseReport, NoiseRow, SweepMethod,
};
pub use export::{
    export_embeddings, read_embeddings, write_confusion_csv, write_heatmap_csv, write_mi_curve_csv, write_noise_csv,
    write_noise_table_csv, EmbeddingRow,
};
pub use noise::{add_gaussian_noise, replace_with_noise, NoiseDistribution, NoiseKind, NoiseScheme, NoiseTarget, ReplaceMode};
pub use pipeline::{fit_pipeline, load_model, save_model, FittedPipeline, Head, Representation, MODEL_MAGIC};
pub use split::{split, Fold, SplitScheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Method {
    #[serde(rename = "dcca")]
    Dcca,
    #[serde(rename = "concat")]
    Concat,
    #[serde(rename = "max")]
    Max,
    #[serde(rename = "fuzzy")]
    Fuzzy,
    #[serde(rename = "bdae")]
    Bdae,
    #[serde(rename = "unimodal-1")]
    Unimodal1,
    #[serde(rename = "unimodal-2")]
    Unimodal2,
}

impl Method {
    pub const ALL: [Method; 7] = [
        Method::Dcca,
        Method::Concat,
        Method::Max,
        Method::Fuzzy,
        Method::Bdae,
        Method::Unimodal1,
        Method::Unimodal2,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Method::Dcca => "dcca",
            Method::Concat => "concat",
            Method::Max => "max",
            Method::Fuzzy => "fuzzy",
            Method::Bdae => "bdae",
            Method::Unimodal1 => "unimodal-1",
            Method::Unimodal2 => "unimodal-2",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.tag().eq_ignore_ascii_case(tag))
            .ok_or_else(|| Error::Parameter(format!("unknown method {tag:?}")))
    }
}

/// Where the two views come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    /// The generator; `config.seed` is replaced by `seed` or the experiment seed.
    Generator {
        #[serde(default)]
        config: GenConfig,
        #[serde(default)]
        seed: Option<u64>,
    },
    /// SEED-V-shaped synthetic task, optionally with generator overrides.
    SeedVLike {
        #[serde(default)]
        seed: Option<u64>,
        #[serde(default)]
        config: Option<GenConfig>,
    },
    /// Feature CSVs; labels come from `view1`'s `label` column.
    Csv {
        view1: PathBuf,
        view2: PathBuf,
        #[serde(default)]
        groups: Option<PathBuf>,
    },
}

impl Default for DataSource {
    fn default() -> Self {
        DataSource::SeedVLike { seed: None, config: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridAxes {
    pub dims: Vec<usize>,
    pub alphas: Vec<f64>,
}

impl Default for GridAxes {
    fn default() -> Self {
        Self { dims: (1..=10).map(|i| 5 * i).collect(), alphas: (0..=10).map(|i| i as f64 / 10.0).collect() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    /// Row labels such as `DCCA-0.3`, `concat`, `bdae`.
    pub methods: Vec<String>,
    pub schemes: Vec<NoiseScheme>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        let mut methods: Vec<String> = ["DCCA-0.3", "DCCA-0.5", "DCCA-0.7"].map(String::from).to_vec();
        methods.extend(["concat", "max", "fuzzy", "bdae"].map(String::from));
        let schemes = [NoiseDistribution::Normal, NoiseDistribution::Gamma, NoiseDistribution::Uniform]
            .into_iter()
            .flat_map(|d| [0.0, 0.1, 0.3, 0.5].map(|p| NoiseScheme::replace(p, d)))
            .collect();
        Self { methods, schemes }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub data: DataSource,
    pub method: Method,
    pub dcca: DccaConfig,
    pub bdae: BdaeConfig,
    pub svm: SvmConfig,
    pub mine: MineConfig,
    pub split: SplitScheme,
    pub seed: u64,
    pub grid: Option<GridAxes>,
    pub noise: Option<NoiseScheme>,
    pub noise_train_only: bool,
    pub sweep: Option<SweepConfig>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            method: Method::Dcca,
            dcca: DccaConfig::default(),
            bdae: BdaeConfig::default(),
            svm: SvmConfig::default(),
            mine: MineConfig::default(),
            split: SplitScheme::GroupKfold { k: SEED_V_FOLDS },
            seed: 0,
            grid: None,
            noise: None,
            noise_train_only: false,
            sweep: None,
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.dcca.validate()?;
        self.bdae.validate()?;
        self.svm.validate()?;
        self.mine.validate()?;
        if let Some(n) = &self.noise {
            n.validate()?;
        }
        if let Some(g) = &self.grid {
            if g.dims.is_empty() || g.alphas.is_empty() {
                return param_err("grid axes must be nonempty");
            }
            if g.alphas.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return param_err("grid alphas must lie in [0, 1]");
            }
            if g.dims.contains(&0) {
                return param_err("grid dims must be positive");
            }
        }
        if let Some(s) = &self.sweep {
            for m in &s.methods {
                SweepMethod::parse(m)?;
            }
            for n in &s.schemes {
                n.validate()?;
            }
        }
        Ok(())
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match &self.data {
            DataSource::Generator { config, seed } => {
                let cfg = GenConfig { seed: seed.unwrap_or(self.seed), ..config.clone() };
                Ok(generate(&cfg)?.0)
            }
            DataSource::SeedVLike { seed, config } => {
                let s = seed.unwrap_or(self.seed);
                let cfg = match config {
                    Some(c) => GenConfig { seed: s, ..c.clone() },
                    None => seed_v_config(s),
                };
                seed_v_like_with(&cfg)
            }
            DataSource::Csv { view1, view2, groups } => load_csv_dataset(view1, view2, groups.as_deref()),
        }
    }
}

fn load_csv_dataset(view1: &Path, view2: &Path, groups: Option<&Path>) -> Result<Dataset> {
    let a = FeatureMatrix::<f64>::read_csv(view1)?;
    let b = FeatureMatrix::<f64>::read_csv(view2)?;
    let labels = a
        .labels
        .clone()
        .or_else(|| b.labels.clone())
        .ok_or_else(|| Error::Format("neither view CSV has a label column".into()))?;
    if let (Some(la), Some(lb)) = (&a.labels, &b.labels) {
        if la != lb {
            return Err(Error::Format("label columns of the two views disagree".into()));
        }
    }
    let groups = match groups {
        Some(p) => Some(read_groups(p)?),
        None => None,
    };
    if a.rows() != b.rows() {
        return dim_err(format!("view CSVs have {} and {} rows", a.rows(), b.rows()));
    }
    let mut ds = Dataset::new(a.data, b.data, labels, groups)?;
    ds.names1 = a.names;
    ds.names2 = b.names;
    Ok(ds)
}

fn read_groups(path: &Path) -> Result<Vec<usize>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| Error::Format(e.to_string()))?;
    r.records()
        .map(|rec| {
            let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
            rec.get(0)
                .and_then(|s| s.trim().parse::<usize>().ok())
                .ok_or_else(|| Error::Format(format!("bad group entry in {}", path.display())))
        })
        .collect()
}

/// Writes `view1.csv`, `view2.csv` (both labelled) and `groups.csv`.
pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    ds.view1().write_csv(dir.join("view1.csv"))?;
    ds.view2().write_csv(dir.join("view2.csv"))?;
    let mut w = csv::Writer::from_path(dir.join("groups.csv")).map_err(|e| Error::Format(e.to_string()))?;
    w.write_record(["group"]).map_err(|e| Error::Format(e.to_string()))?;
    for g in &ds.groups {
        w.write_record([g.to_string()]).map_err(|e| Error::Format(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_json_round_trip() {
        let cfg = ExperimentConfig {
            method: Method::Unimodal2,
            grid: Some(GridAxes::default()),
            noise: Some(NoiseScheme::gaussian(0.5)),
            sweep: Some(SweepConfig::default()),
            ..ExperimentConfig::default()
        };
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        assert!(text.contains("\"unimodal-2\""));
        assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    }

    #[test]
    fn partial_config_uses_defaults() {
        let cfg = ExperimentConfig::from_json(
            r#"{"method": "concat", "seed": 4, "split": {"kind": "kfold", "k": 5},
                "data": {"kind": "generator", "config": {"classes": 4}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.method, Method::Concat);
        assert_eq!(cfg.split, SplitScheme::Kfold { k: 5 });
        assert_eq!(cfg.svm, SvmConfig::default());
        let ds = cfg.load_dataset().unwrap();
        assert_eq!(ds.classes(), 4);
    }

    #[test]
    fn bad_config_rejected() {
        assert!(ExperimentConfig::from_json(r#"{"method": "svm"}"#).is_err());
        assert!(ExperimentConfig::from_json(r#"{"grid": {"dims": [5], "alphas": [1.5]}}"#).is_err());
        let bad_noise = r#"{"noise": {"kind": "replace", "proportion": 0.1, "distribution": "cauchy"}}"#;
        assert!(ExperimentConfig::from_json(bad_noise).is_err());
    }

    #[test]
    fn method_tags() {
        for m in Method::ALL {
            assert_eq!(Method::from_tag(m.tag()).unwrap(), m);
        }
        assert!(Method::from_tag("lda").is_err());
    }

    #[test]
    fn dataset_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = ExperimentConfig {
            data: DataSource::Generator {
                config: GenConfig { samples_per_class: 5, ..GenConfig::default() },
                seed: Some(2),
            },
            ..ExperimentConfig::default()
        };
        let ds = cfg.load_dataset().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = ExperimentConfig {
            data: DataSource::Csv {
                view1: dir.path().join("view1.csv"),
                view2: dir.path().join("view2.csv"),
                groups: Some(dir.path().join("groups.csv")),
            },
            ..ExperimentConfig::default()
        }
        .load_dataset()
        .unwrap();
        assert_eq!(back, ds);
    }
}

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ExperimentConfig, Method};
use crate::bdae::{train_bdae, BdaeModel};
use crate::classifier::{train_svm, SvmConfig, SvmModel};
use crate::dcca::{fuse, DccaModel};
use crate::error::{Error, Result};
use crate::features::{clip_unit, ScaleMode, Scaler};
use crate::fusion::{choquet_fusion_predict, concat, fit_fuzzy_measure_for_classes, max_fusion, ClassProbabilities, FuzzyMeasure};
use crate::numerics::{Matrix, RandomStream};

pub const MODEL_MAGIC: &str = "CCAFUSE1";
const MODEL_VERSION: u32 = 1;

/// Learned (or fixed) map from normalized views to classifier features.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Representation {
    View1,
    View2,
    Concat,
    Dcca { model: DccaModel<f64> },
    Bdae { model: BdaeModel<f64>, range1: Scaler<f64>, range2: Scaler<f64> },
}

impl Representation {
    /// `None` for the decision-level methods.
    pub(crate) fn fit(
        method: Method,
        cfg: &ExperimentConfig,
        z1: &Matrix<f64>,
        z2: &Matrix<f64>,
        stream: &mut RandomStream,
    ) -> Result<Option<Self>> {
        Ok(Some(match method {
            Method::Unimodal1 => Representation::View1,
            Method::Unimodal2 => Representation::View2,
            Method::Concat => Representation::Concat,
            Method::Max | Method::Fuzzy => return Ok(None),
            Method::Dcca => Representation::Dcca { model: DccaModel::train(z1, z2, &cfg.dcca, stream)? },
            Method::Bdae => {
                let range1 = Scaler::fit(z1, ScaleMode::Minmax)?;
                let range2 = Scaler::fit(z2, ScaleMode::Minmax)?;
                let u1 = clip_unit(&range1.transform(z1)?);
                let u2 = clip_unit(&range2.transform(z2)?);
                let model = train_bdae(&u1, &u2, &cfg.bdae, stream)?;
                Representation::Bdae { model, range1, range2 }
            }
        }))
    }

    pub fn features(&self, z1: &Matrix<f64>, z2: &Matrix<f64>, alpha1: f64) -> Result<Matrix<f64>> {
        match self {
            Representation::View1 => Ok(z1.clone()),
            Representation::View2 => Ok(z2.clone()),
            Representation::Concat => concat(z1, z2),
            Representation::Dcca { model } => {
                let (o1, o2) = model.transform(z1, z2)?;
                fuse(&o1, &o2, alpha1)
            }
            Representation::Bdae { model, range1, range2 } => {
                let u1 = clip_unit(&range1.transform(z1)?);
                let u2 = clip_unit(&range2.transform(z2)?);
                model.encode(&u1, &u2)
            }
        }
    }
}

/// Final classification stage.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Head {
    Svm { alpha1: f64, scaler: Scaler<f64>, svm: SvmModel<f64> },
    Max { svm1: SvmModel<f64>, svm2: SvmModel<f64> },
    Fuzzy { svm1: SvmModel<f64>, svm2: SvmModel<f64>, measure: FuzzyMeasure<f64> },
}

fn per_sample_probs(svm1: &SvmModel<f64>, svm2: &SvmModel<f64>, z1: &Matrix<f64>, z2: &Matrix<f64>) -> Result<Vec<ClassProbabilities<f64>>> {
    let p1 = svm1.predict_proba(z1)?;
    let p2 = svm2.predict_proba(z2)?;
    (0..p1.rows())
        .map(|i| ClassProbabilities::from_rows(&[p1.row(i).to_vec(), p2.row(i).to_vec()]))
        .collect()
}

impl Head {
    pub(crate) fn fit(
        rep: Option<&Representation>,
        z1: &Matrix<f64>,
        z2: &Matrix<f64>,
        y: &[usize],
        alpha1: f64,
        svm_cfg: &SvmConfig,
        fuzzy: bool,
        stream: &RandomStream,
    ) -> Result<Self> {
        match rep {
            Some(rep) => {
                let f = rep.features(z1, z2, alpha1)?;
                let scaler = Scaler::fit(&f, ScaleMode::Zscore)?;
                let svm = train_svm(&scaler.transform(&f)?, y, svm_cfg, &mut stream.clone())?;
                Ok(Head::Svm { alpha1, scaler, svm })
            }
            None => {
                let svm1 = train_svm(z1, y, svm_cfg, &mut stream.derive(1))?;
                let svm2 = train_svm(z2, y, svm_cfg, &mut stream.derive(2))?;
                if !fuzzy {
                    return Ok(Head::Max { svm1, svm2 });
                }
                let probs = per_sample_probs(&svm1, &svm2, z1, z2)?;
                let measure = fit_fuzzy_measure_for_classes(&probs, y)?.measure;
                Ok(Head::Fuzzy { svm1, svm2, measure })
            }
        }
    }

    pub(crate) fn predict(&self, rep: Option<&Representation>, z1: &Matrix<f64>, z2: &Matrix<f64>) -> Result<Vec<usize>> {
        match (self, rep) {
            (Head::Svm { alpha1, scaler, svm }, Some(rep)) => {
                let f = rep.features(z1, z2, *alpha1)?;
                svm.predict(&scaler.transform(&f)?)
            }
            (Head::Max { svm1, svm2 }, None) => Ok(per_sample_probs(svm1, svm2, z1, z2)?.iter().map(max_fusion).collect()),
            (Head::Fuzzy { svm1, svm2, measure }, None) => per_sample_probs(svm1, svm2, z1, z2)?
                .iter()
                .map(|p| choquet_fusion_predict(p, measure))
                .collect(),
            _ => Err(Error::Contract("classifier head does not match representation".into())),
        }
    }
}

/// Normalization, representation and classifier fitted on one training set.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FittedPipeline {
    pub method: Method,
    pub scaler1: Scaler<f64>,
    pub scaler2: Scaler<f64>,
    pub representation: Option<Representation>,
    pub head: Head,
}

impl FittedPipeline {
    pub fn normalize(&self, x1: &Matrix<f64>, x2: &Matrix<f64>) -> Result<(Matrix<f64>, Matrix<f64>)> {
        Ok((self.scaler1.transform(x1)?, self.scaler2.transform(x2)?))
    }

    pub fn predict(&self, x1: &Matrix<f64>, x2: &Matrix<f64>) -> Result<Vec<usize>> {
        let (z1, z2) = self.normalize(x1, x2)?;
        self.head.predict(self.representation.as_ref(), &z1, &z2)
    }

    pub fn classes(&self) -> usize {
        match &self.head {
            Head::Svm { svm, .. } | Head::Max { svm1: svm, .. } | Head::Fuzzy { svm1: svm, .. } => svm.classes(),
        }
    }
}

/// Fits the whole pipeline on raw training views with the same substreams a
/// noise-free cross-validation fold uses.
pub fn fit_pipeline(
    cfg: &ExperimentConfig,
    x1: &Matrix<f64>,
    x2: &Matrix<f64>,
    y: &[usize],
    stream: &RandomStream,
) -> Result<FittedPipeline> {
    let scaler1 = Scaler::fit(x1, ScaleMode::Zscore)?;
    let scaler2 = Scaler::fit(x2, ScaleMode::Zscore)?;
    let z1 = scaler1.transform(x1)?;
    let z2 = scaler2.transform(x2)?;
    let representation = Representation::fit(cfg.method, cfg, &z1, &z2, &mut stream.derive(20))?;
    let head = Head::fit(
        representation.as_ref(),
        &z1,
        &z2,
        y,
        cfg.dcca.alpha1,
        &cfg.svm,
        cfg.method == Method::Fuzzy,
        &stream.derive(30),
    )?;
    Ok(FittedPipeline { method: cfg.method, scaler1, scaler2, representation, head })
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    version: u32,
    method: Method,
    pipeline: FittedPipeline,
}

/// `CCAFUSE1` line, then a JSON body with version, method tag and parameters.
pub fn save_model(pipeline: &FittedPipeline, path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(f, "{MODEL_MAGIC}")?;
    let body = ModelFile { version: MODEL_VERSION, method: pipeline.method, pipeline: pipeline.clone() };
    serde_json::to_writer(&mut f, &body)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<FittedPipeline> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut magic = String::new();
    r.read_line(&mut magic)?;
    if magic.trim_end() != MODEL_MAGIC {
        return Err(Error::Format("not a model file (bad magic header)".into()));
    }
    let body: ModelFile = serde_json::from_reader(r).map_err(|e| Error::Format(format!("model body: {e}")))?;
    if body.version != MODEL_VERSION {
        return Err(Error::Format(format!("unsupported model version {}", body.version)));
    }
    if body.method != body.pipeline.method {
        return Err(Error::Format("method tag does not match model contents".into()));
    }
    Ok(body.pipeline)
}

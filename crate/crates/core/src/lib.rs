//! Deep canonical correlation analysis for two-modality fusion.
//!
//! The numeric core is generic over the scalar type ([`Real`], implemented
//! for `f32` and `f64`); the `*64` aliases below fix it to `f64`, which is
//! what the experiment harness and CLI use.

pub mod dcca;
pub mod error;
pub mod features;
pub mod fusion;
pub mod harness;
pub mod mine;
pub mod bdae;
pub mod cca;
pub mod classifier;
pub mod neuralnet;
pub mod numerics;
pub mod synthdata;

pub use error::{Error, Result};
pub use numerics::{Matrix, RandomStream, Real};

pub type Matrix64 = Matrix<f64>;
pub type Matrix32 = Matrix<f32>;
pub type CcaModel64 = cca::CcaModel<f64>;
pub type DccaModel64 = dcca::DccaModel<f64>;
pub type DccaModel32 = dcca::DccaModel<f32>;
pub type Network64 = neuralnet::Network<f64>;
pub type BdaeModel64 = bdae::BdaeModel<f64>;
pub type SvmModel64 = classifier::SvmModel<f64>;
pub type FuzzyMeasure64 = fusion::FuzzyMeasure<f64>;
pub type FeatureMatrix64 = features::FeatureMatrix<f64>;

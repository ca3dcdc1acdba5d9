pub mod cluster;
pub mod corpus;
pub mod dimensions;
pub mod error;
pub mod features;
pub mod generate;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod stats;
pub mod tagger;

pub use error::{Error, Result};

pub type FeatureVector = features::FeatureVector<f64>;
pub type DimensionModel = dimensions::DimensionModel<f64>;
pub type DimensionScores = dimensions::DimensionScores<f64>;
pub type ShiftSample = stats::ShiftSample<f64>;
pub type BenchmarkResult = stats::BenchmarkResult<f64>;
pub type HumanBaseline = stats::HumanBaseline<f64>;
pub type Dendrogram = cluster::Dendrogram<f64>;

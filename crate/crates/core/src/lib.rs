//! Salience-guided faithfulness evaluation for image explanations.
//!
//! A salience map is split into `K` equally sized pixel subsets ranked by
//! salience. Each subset is replaced by the per-channel image mean and the
//! drop in the predicted class probability is compared against the subset's
//! salience. The [`saco`] module scores that agreement; [`metrics`] provides
//! the usual cumulative-perturbation metrics for comparison and [`analysis`]
//! measures how the metrics rank the same explanations.

pub mod analysis;
pub mod attribution;
pub mod error;
pub mod evaluate;
pub mod metrics;
pub mod partition;
pub mod perturbation;
pub mod predictor;
pub mod run;
pub mod saco;
pub mod tensor_io;

pub use error::{Error, Result};
pub use evaluate::{evaluate_sample, SampleEvaluation};
pub use partition::{partition_by_salience, SubsetPartition};
pub use predictor::{PredictionRecord, Predictor};
pub use saco::{evaluate_saco, saco_coefficient, FaithfulnessResult, SubsetMeasurements};
pub use tensor_io::{ImageTensor, SalienceMap};

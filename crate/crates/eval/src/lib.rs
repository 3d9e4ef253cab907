//! Drop detection pipeline and experiment harness.
//!
//! * [`combine`]: mean / median / majority combination over reference devices.
//! * [`detector`]: candidate tiling, per-device decisions, reports.
//! * [`corpus`]: synthetic training and evaluation corpora.
//! * [`metrics`]: precision, recall and F1 at event and window level.
//! * [`table1`]: the four-row ablation experiment.

pub mod combine;
pub mod corpus;
pub mod detector;
pub mod error;
pub mod metrics;
pub mod table1;

pub use combine::{Combiner, CombinerKind};
pub use corpus::{build_stage1_dataset, build_stage2_dataset, ExperimentConfig, Split, Stage1Data, Stage2Data};
pub use detector::{classify_device, detect, DetectConfig, DeviceDecision, SceneWindows};
pub use error::{EvalError, Result};
pub use metrics::{compute_metrics, window_metrics, MetricsReport};
pub use table1::{run_table1, Table1Report};

//! Optimization, evaluation metrics, ablations and parameter accounting.

pub mod ablation;
pub mod metrics;
pub mod optim;
pub mod report;
pub mod trainer;

pub use ablation::{ablate, AblationRow};
pub use metrics::{ConfusionMatrix, MetricsReport};
pub use optim::Adam;
pub use report::{param_report, ParamReport};
pub use trainer::{evaluate, predict, train, train_with, EpochLog, TrainConfig};

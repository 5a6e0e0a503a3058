//! Detection and localisation metrics.

mod components;
mod pro;
mod report;
mod roc;

pub use components::{connected_components, BinaryMask, Component};
pub use pro::{aupro, pro_curve, select_thresholds, ProCurve, DEFAULT_FPR_LIMIT, MAX_THRESHOLDS};
pub use report::{evaluate, ClassMetrics, EvalImage, MetricsReport};
pub use roc::{auroc, roc_curve, RocCurve};

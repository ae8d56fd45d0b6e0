//! Confusion statistics, classic segmentation scores, F-beta and MGRID.

mod confusion;
mod mgrid;
mod real;
mod report;

pub use confusion::{classic_metrics, confusion, fbeta, ClassicMetrics, Confusion, METRIC_EPSILON};
pub use mgrid::{cell_confusions, mgrid, regulator, regulator_curve, regulator_interval, Mgrid, MgridConfig};
pub use real::Real;
pub use report::{evaluate_pair, mean_metrics, EmptyPolicy, ImageMetrics};

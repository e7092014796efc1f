//! Accuracy and predictive-uncertainty metrics: MAE/RMSE, moment and
//! mixture NLL, calibration curves with RMSCE and miscalibration area,
//! sharpness, entropy, accuracy-versus-confidence, per-group aggregation
//! and lifetime evolution.

mod core;
mod report;
mod special;
mod svg;

pub use self::core::{
    calibration_curve, entropy, gaussian_cdf, mean_entropy, miscalibration_area, nll_mixture,
    nll_moment, point_metrics, rmsce, rmse_vs_confidence, sharpness, CalibrationCurve,
    ConfidencePoint,
};
pub use report::{
    build_report, group_aggregate, lifetime_binned, metrics_block, pit_values, GroupKey, GroupRow,
    LifetimeBin, MetricsBlock, MetricsReport, PredictionRow, ReportInputs, SampleMatrix,
    CALIBRATION_LEVELS, REPORT_FORMAT_VERSION,
};
pub use special::{erf, normal_cdf, normal_log_pdf};
pub use svg::{write_line_chart, Series};

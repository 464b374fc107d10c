//! Correlation criteria, logistic mapping, classical baselines and reports.

mod baseline;
mod correlation;
mod logistic;
mod report;

pub use baseline::{gaussian_taps, mse, psnr, ssim, PSNR_CAP_DB, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use correlation::{fractional_ranks, plcc, srcc};
pub use logistic::{logistic_fit, nelder_mead, Logistic4, LogisticFit, Minimum, MAX_ITERATIONS, SIMPLEX_TOL};
pub use report::{baseline_report, evaluate, EvalReport, Metric};

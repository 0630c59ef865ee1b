//! Kernel plug-in estimation of the Pianka and MacArthur-Levins overlap
//! measures between two densities, with asymptotic variances, confidence
//! intervals and a Monte Carlo engine for checking them.
//!
//! ```
//! use overlap_core::{estimate_overlap, EstimateConfig, Sample};
//!
//! let x = Sample::new((0..200).map(|i| (i as f64 / 20.0).sin() * 2.0).collect()).unwrap();
//! let y = Sample::new((0..200).map(|i| (i as f64 / 17.0).cos() * 2.0 + 0.5).collect()).unwrap();
//! let analysis = estimate_overlap(&x, &y, &EstimateConfig::default()).unwrap();
//! let rho = analysis.report.pianka.point;
//! assert!(rho > 0.0 && rho <= 1.0);
//! ```

// `!(x > 0.0)` is used on purpose throughout: unlike `x <= 0.0` it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod kde;
pub mod kernels;
pub mod montecarlo;
pub mod normal;
pub mod overlap;
pub mod quadrature;

pub use error::{Error, Result};
pub use kde::{kde_eval, kde_grid, AssumptionDiagnostics, BandwidthRule, DensityEstimate, Sample};
pub use kernels::{BuiltinKernel, KernelSpec};
pub use montecarlo::{
    normality_diagnostics, run_replications, simulate_scenario, Family, NormalityDiagnostics,
    ReplicationSet, Scenario, SimulationConfig, TruncatedDensity, Truth,
};
pub use overlap::{
    confidence_interval, estimate_overlap, macarthur_levins, ml_variance, pianka,
    pianka_variance, Analysis, ConfidenceInterval, EstimateConfig, Measure, MlVarianceMode,
    OverlapEstimate, OverlapReport, SupportPolicy,
};
pub use quadrature::{MomentKey, MomentTable, SupportInterval, UniformGrid};

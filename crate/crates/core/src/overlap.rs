//! Pianka and MacArthur-Levins overlap measures, their plug-in asymptotic
//! variances, and normal-theory confidence intervals.
//!
//! With `I(r, s) = ∫ f^r g^s`:
//!
//! * Pianka: `ρ(f, g) = I(1,1) / sqrt(I(2,0) I(0,2))`, the cosine of the angle
//!   between `f` and `g` in L2 of the support.
//! * MacArthur-Levins: `Δ(f, g) = I(1,1) / I(2,0)`, asymmetric and possibly
//!   larger than one.
//!
//! Both are estimated by plugging kernel estimates `f_n`, `g_n` into the
//! functionals. `√(n h)(ρ_n - ρ)` and `√(n h)(Δ_n - Δ)` are asymptotically
//! normal; the variances below are the delta-method variances of those
//! scaled statistics.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{
    kde_grid, AssumptionDiagnostics, BandwidthRule, DensityEstimate, Sample, DEFAULT_GRID_POINTS,
};
use crate::kernels::KernelSpec;
use crate::normal;
use crate::quadrature::{MomentKey, MomentTable, SupportInterval, UniformGrid};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Measure {
    Pianka,
    MacarthurLevins,
}

impl fmt::Display for Measure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Measure::Pianka => "pianka",
            Measure::MacarthurLevins => "macarthur_levins",
        })
    }
}

impl FromStr for Measure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "pianka" | "rho" => Ok(Measure::Pianka),
            "macarthur_levins" | "ml" | "delta" => Ok(Measure::MacarthurLevins),
            other => Err(Error::invalid(format!(
                "unknown measure `{other}` (expected pianka|macarthur_levins)"
            ))),
        }
    }
}

/// Which closed form to use for the MacArthur-Levins variance.
///
/// `AsPrinted` uses the denominators `I^5`, `I^8`; `Rederived`
/// uses `I^3`, `I^4`, which is what the delta method gives with the gradient
/// of `t1 / t2` and the same 2x2 covariance block. The two agree only when
/// the normalising square norm equals one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MlVarianceMode {
    AsPrinted,
    #[default]
    Rederived,
}

impl fmt::Display for MlVarianceMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MlVarianceMode::AsPrinted => "as_printed",
            MlVarianceMode::Rederived => "rederived",
        })
    }
}

impl FromStr for MlVarianceMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "as_printed" | "printed" => Ok(MlVarianceMode::AsPrinted),
            "rederived" => Ok(MlVarianceMode::Rederived),
            other => Err(Error::invalid(format!(
                "unknown variance mode `{other}` (expected as_printed|rederived)"
            ))),
        }
    }
}

const I11: MomentKey = MomentKey::halves(2, 2);
const I20: MomentKey = MomentKey::halves(4, 0);
const I02: MomentKey = MomentKey::halves(0, 4);
const I30: MomentKey = MomentKey::halves(6, 0);
const I03: MomentKey = MomentKey::halves(0, 6);
const I21: MomentKey = MomentKey::halves(4, 2);
const I12: MomentKey = MomentKey::halves(2, 4);
const I52_12: MomentKey = MomentKey::halves(5, 1);
const I12_52: MomentKey = MomentKey::halves(1, 5);

fn positive(t: &MomentTable, key: MomentKey, what: &str) -> Result<f64> {
    let v = t.get(key)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(Error::Degenerate(format!("{what} = I{key} = {v} is not positive")))
    }
}

/// `ρ = I(1,1) / sqrt(I(2,0) I(0,2))`.
pub fn pianka(t: &MomentTable) -> Result<f64> {
    let ff = positive(t, I20, "||f||^2")?;
    let gg = positive(t, I02, "||g||^2")?;
    Ok(t.get(I11)? / (ff * gg).sqrt())
}

/// `Δ(f, g) = I(1,1) / I(2,0)`.
pub fn macarthur_levins(t: &MomentTable) -> Result<f64> {
    let ff = positive(t, I20, "||f||^2")?;
    Ok(t.get(I11)? / ff)
}

/// The five functionals `A..E` whose combination gives the Pianka variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PiankaFunctionals {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
}

impl PiankaFunctionals {
    pub fn from_table(t: &MomentTable) -> Result<Self> {
        let i11 = t.get(I11)?;
        let i20 = t.get(I20)?;
        let i02 = t.get(I02)?;
        let a = t.get(I03)? * i11 * i11 * i20 * i20;
        let b = t.get(I12_52)? * i11 * i20 * i20 * i02;
        let c = i02 * i02 * (i20 * i20 * t.get(I12)? + i20 * i20 * t.get(I21)? + i11 * i11 * t.get(I30)?);
        let d = i11 * i20 * i02 * i02 * t.get(I52_12)?;
        let e = i20.powi(3) * i02.powi(3);
        Ok(PiankaFunctionals { a, b, c, d, e })
    }

    /// `(A - 2B + C - 2D) / E`, without the kernel factor.
    pub fn ratio(&self) -> Result<f64> {
        if !(self.e > 0.0) {
            return Err(Error::Degenerate(format!(
                "E = I(2,0)^3 I(0,2)^3 = {} is not positive",
                self.e
            )));
        }
        Ok((self.a - 2.0 * self.b + self.c - 2.0 * self.d) / self.e)
    }
}

/// `σ²_{f,g} = k02 (A - 2B + C - 2D) / E`, the asymptotic variance of
/// `√(n h)(ρ_n - ρ)`. May be negative for a plug-in table; callers decide
/// how to surface that.
pub fn pianka_variance(t: &MomentTable, k02: f64) -> Result<f64> {
    Ok(k02 * PiankaFunctionals::from_table(t)?.ratio()?)
}

/// Covariance of the limit of `√(n h)(⟨f_n,g_n⟩, ||f_n||², ||g_n||²)`, per unit `k02`.
pub fn limit_covariance(t: &MomentTable) -> Result<[[f64; 3]; 3]> {
    let s11 = t.get(I21)? + t.get(I12)?;
    let s12 = 2.0 * t.get(I52_12)?;
    let s13 = 2.0 * t.get(I12_52)?;
    Ok([
        [s11, s12, s13],
        [s12, 4.0 * t.get(I30)?, 0.0],
        [s13, 0.0, 4.0 * t.get(I03)?],
    ])
}

fn quadratic_form<const N: usize>(g: &[f64; N], s: &[[f64; N]; N]) -> f64 {
    let mut acc = 0.0;
    for i in 0..N {
        for j in 0..N {
            acc += g[i] * s[i][j] * g[j];
        }
    }
    acc
}

/// Pianka variance via `k02 ∇ψᵀ Σ ∇ψ` with `ψ(t1,t2,t3) = t1 / sqrt(t2 t3)`.
/// Independent route to [`pianka_variance`].
pub fn pianka_variance_gradient(t: &MomentTable, k02: f64) -> Result<f64> {
    let t1 = t.get(I11)?;
    let t2 = positive(t, I20, "||f||^2")?;
    let t3 = positive(t, I02, "||g||^2")?;
    let grad = [
        1.0 / (t2 * t3).sqrt(),
        -0.5 * t1 * t2.powf(-1.5) * t3.powf(-0.5),
        -0.5 * t1 * t2.powf(-0.5) * t3.powf(-1.5),
    ];
    Ok(k02 * quadratic_form(&grad, &limit_covariance(t)?))
}

/// Variance of `√(n h)(⟨f_n,g_n⟩/||g_n||² - ⟨f,g⟩/||g||²)`, i.e. of `Δ(g, f)`,
/// with the expression evaluated verbatim on `t` (denominators in `I(0,2)`).
pub fn ml_variance_g_normalized(t: &MomentTable, k02: f64, mode: MlVarianceMode) -> Result<f64> {
    let gg = positive(t, I02, "||g||^2")?;
    let i11 = t.get(I11)?;
    let (p_cross, p_square) = match mode {
        MlVarianceMode::AsPrinted => (5, 8),
        MlVarianceMode::Rederived => (3, 4),
    };
    let sigma2 = (t.get(I21)? + t.get(I12)?) / (gg * gg)
        - 4.0 * t.get(I12_52)? * i11 / gg.powi(p_cross)
        + 4.0 * t.get(I03)? * i11 * i11 / gg.powi(p_square);
    Ok(k02 * sigma2)
}

/// Variance of `√(n h)(Δ_n - Δ)` for `Δ(f, g) = I(1,1) / I(2,0)`: the
/// `g`-normalised expression applied to the swapped table.
pub fn ml_variance(t: &MomentTable, k02: f64, mode: MlVarianceMode) -> Result<f64> {
    ml_variance_g_normalized(&t.swapped(), k02, mode)
}

/// Rederived `Δ(f, g)` variance through `∇ψ₁ᵀ (E Σ Eᵀ) ∇ψ₁`, with `E`
/// selecting `(⟨f,g⟩, ||f||²)` and `ψ₁(t1, t2) = t1 / t2`.
pub fn ml_variance_gradient(t: &MomentTable, k02: f64) -> Result<f64> {
    let t1 = t.get(I11)?;
    let t2 = positive(t, I20, "||f||^2")?;
    let s = limit_covariance(t)?;
    let block = [[s[0][0], s[0][1]], [s[1][0], s[1][1]]];
    let grad = [1.0 / t2, -t1 / (t2 * t2)];
    Ok(k02 * quadratic_form(&grad, &block))
}

/// A two-sided normal-theory interval `point ∓ z · se`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub lo: f64,
    pub hi: f64,
    pub level: f64,
    pub z: f64,
}

impl ConfidenceInterval {
    pub fn contains(&self, value: f64) -> bool {
        self.lo <= value && value <= self.hi
    }

    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }
}

/// Standard error `sqrt(variance / (n h))` of an overlap estimate.
pub fn standard_error(variance: f64, n: usize, h: f64) -> Result<f64> {
    if variance < 0.0 {
        return Err(Error::NegativeVariance(variance));
    }
    if !(h > 0.0) || n == 0 {
        return Err(Error::invalid(format!("need n > 0 and h > 0 (n = {n}, h = {h})")));
    }
    Ok((variance / (n as f64 * h)).sqrt())
}

/// `point ∓ z_{1-α/2} sqrt(variance) / sqrt(n h)` for `level = 1 - α`.
pub fn confidence_interval(
    point: f64,
    variance: f64,
    n: usize,
    h: f64,
    level: f64,
) -> Result<ConfidenceInterval> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::invalid(format!("confidence level must be in (0, 1), got {level}")));
    }
    let z = normal::two_sided_z(level);
    let se = standard_error(variance, n, h)?;
    Ok(interval_with_z(point, se, z, level))
}

/// `point ∓ z · se` with an explicit multiplier.
pub fn interval_with_z(point: f64, se: f64, z: f64, level: f64) -> ConfidenceInterval {
    ConfidenceInterval {
        lo: point - z * se,
        hi: point + z * se,
        level,
        z,
    }
}

/// How the common integration support is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SupportPolicy {
    /// Union of `[min - h w, max + h w]` over both samples.
    #[default]
    Auto,
    Explicit { lo: f64, hi: f64 },
    /// `[-a, a]` with `a` the empirical `q`-quantile of the first sample.
    Quantile { q: f64 },
}

impl fmt::Display for SupportPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SupportPolicy::Auto => f.write_str("auto"),
            SupportPolicy::Explicit { lo, hi } => write!(f, "{lo},{hi}"),
            SupportPolicy::Quantile { q } => write!(f, "quantile:{q}"),
        }
    }
}

impl FromStr for SupportPolicy {
    type Err = Error;

    /// `auto`, `LO,HI` or `quantile:Q`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "auto" {
            return Ok(SupportPolicy::Auto);
        }
        let num = |v: &str| {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number `{v}` in support `{s}`")))
        };
        if let Some(q) = s.strip_prefix("quantile:") {
            let q = num(q)?;
            if !(q > 0.5 && q < 1.0) {
                return Err(Error::invalid(format!("support quantile must be in (0.5, 1), got {q}")));
            }
            return Ok(SupportPolicy::Quantile { q });
        }
        let (lo, hi) = s
            .split_once(',')
            .ok_or_else(|| Error::invalid(format!("support must be `auto`, `LO,HI` or `quantile:Q`, got `{s}`")))?;
        let (lo, hi) = (num(lo)?, num(hi)?);
        SupportInterval::new(lo, hi)?;
        Ok(SupportPolicy::Explicit { lo, hi })
    }
}

impl SupportPolicy {
    pub fn resolve(&self, x: &Sample, y: &Sample, h: f64, kernel: &KernelSpec) -> Result<SupportInterval> {
        match *self {
            SupportPolicy::Auto => Ok(x.default_support(h, kernel)?.union(&y.default_support(h, kernel)?)),
            SupportPolicy::Explicit { lo, hi } => SupportInterval::new(lo, hi),
            SupportPolicy::Quantile { q } => {
                let a = x.quantile(q);
                if !(a > 0.0) {
                    return Err(Error::invalid(format!(
                        "quantile support needs a positive {q}-quantile of the first sample, got {a}"
                    )));
                }
                SupportInterval::symmetric(a)
            }
        }
    }
}

/// Settings for [`estimate_overlap`].
#[derive(Debug, Clone)]
pub struct EstimateConfig {
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthRule,
    pub support: SupportPolicy,
    pub grid_points: usize,
    pub level: f64,
    pub ml_mode: MlVarianceMode,
}

impl Default for EstimateConfig {
    fn default() -> Self {
        EstimateConfig {
            kernel: KernelSpec::default(),
            bandwidth: BandwidthRule::default(),
            support: SupportPolicy::Auto,
            grid_points: DEFAULT_GRID_POINTS,
            level: 0.95,
            ml_mode: MlVarianceMode::default(),
        }
    }
}

/// One overlap measure with its plug-in variance and interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapEstimate {
    pub measure: Measure,
    /// Orientation, e.g. `"x,y"` for `Δ(f_x, f_y)`.
    pub orientation: String,
    pub point: f64,
    /// Asymptotic variance of `√(n h)(estimate - truth)`; may be negative,
    /// in which case `se` and `ci` are absent and a warning is raised.
    pub variance: f64,
    pub se: Option<f64>,
    pub ci: Option<ConfidenceInterval>,
    pub n: usize,
    pub h: f64,
    pub k02: f64,
    /// MacArthur-Levins only: which closed form `variance` uses.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variance_mode: Option<MlVarianceMode>,
    /// MacArthur-Levins only: the other closed form, for comparison.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub variance_alternate: Option<f64>,
}

/// Everything produced by one two-sample analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverlapReport {
    pub n_x: usize,
    pub n_y: usize,
    /// Sample size entering `√(n h)`; the smaller of the two.
    pub n: usize,
    pub kernel: String,
    pub k02: f64,
    pub bandwidth_rule: BandwidthRule,
    pub h: f64,
    pub support: SupportInterval,
    pub support_policy: SupportPolicy,
    pub grid_points: usize,
    pub level: f64,
    pub z: f64,
    pub pianka: OverlapEstimate,
    /// `Δ(f_x, f_y) = ⟨f_x, f_y⟩ / ||f_x||²`.
    pub macarthur_levins: OverlapEstimate,
    /// `Δ(f_y, f_x) = ⟨f_x, f_y⟩ / ||f_y||²`.
    pub macarthur_levins_reverse: OverlapEstimate,
    /// Plug-in moment integrals keyed like `I(5/2,1/2)`.
    pub moments: BTreeMap<String, f64>,
    pub diagnostics_x: AssumptionDiagnostics,
    pub diagnostics_y: AssumptionDiagnostics,
    pub warnings: Vec<String>,
    pub notes: Vec<String>,
}

/// Density estimates and moment table behind a report.
#[derive(Debug, Clone)]
pub struct Analysis {
    pub report: OverlapReport,
    pub fx: DensityEstimate,
    pub fy: DensityEstimate,
    pub table: MomentTable,
}

/// Quantities shared by every estimate in one analysis.
struct Scale {
    n: usize,
    h: f64,
    k02: f64,
    level: f64,
}

fn build_estimate(
    measure: Measure,
    orientation: &str,
    point: f64,
    variance: f64,
    scale: &Scale,
    warnings: &mut Vec<String>,
) -> Result<OverlapEstimate> {
    let Scale { n, h, k02, level } = *scale;
    let (se, ci) = if variance >= 0.0 {
        let se = standard_error(variance, n, h)?;
        (Some(se), Some(confidence_interval(point, variance, n, h, level)?))
    } else {
        warnings.push(format!(
            "{measure} ({orientation}): plug-in variance is negative ({variance:.6e}); \
             standard error and interval are not reported"
        ));
        (None, None)
    };
    Ok(OverlapEstimate {
        measure,
        orientation: orientation.to_string(),
        point,
        variance,
        se,
        ci,
        n,
        h,
        k02,
        variance_mode: None,
        variance_alternate: None,
    })
}

/// Smallest odd grid size whose step is at most a quarter of `reach`.
pub fn recommended_grid_points(support: SupportInterval, reach: f64) -> usize {
    let m = (4.0 * support.width() / reach).ceil() as usize + 1;
    m | 1
}

/// Full two-sample pipeline: bandwidth, common support, both kernel
/// estimates, the moment table, both measures with variances and intervals,
/// and positivity diagnostics.
pub fn estimate_overlap(x: &Sample, y: &Sample, cfg: &EstimateConfig) -> Result<Analysis> {
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::invalid(format!("confidence level must be in (0, 1), got {}", cfg.level)));
    }
    let mut warnings = Vec::new();
    let mut notes = Vec::new();

    let n = x.len().min(y.len());
    if x.len() != y.len() {
        warnings.push(format!(
            "unequal sample sizes ({} vs {}) are outside the equal-sample-size theory; \
             using n = {n} for the bandwidth and standard errors",
            x.len(),
            y.len()
        ));
    }
    if n < 10 {
        warnings.push(format!("small sample (n = {n} < 10); asymptotic intervals are unreliable"));
    }

    let h = cfg.bandwidth.bandwidth(n)?;
    let support = cfg.support.resolve(x, y, h, &cfg.kernel)?;
    let fx = kde_grid(x.values(), &cfg.kernel, h, support, cfg.grid_points)?;
    let fy = kde_grid(y.values(), &cfg.kernel, h, support, cfg.grid_points)?;
    let grid = UniformGrid::new(support, cfg.grid_points)?;
    let table = MomentTable::from_values(fx.values(), fy.values(), &grid)?;

    let k02 = cfg.kernel.k02();
    let rho = pianka(&table)?;
    let rho_var = pianka_variance(&table, k02)?;
    let scale = Scale { n, h, k02, level: cfg.level };
    let pianka_est = build_estimate(Measure::Pianka, "x,y", rho, rho_var, &scale, &mut warnings)?;

    let other_mode = match cfg.ml_mode {
        MlVarianceMode::AsPrinted => MlVarianceMode::Rederived,
        MlVarianceMode::Rederived => MlVarianceMode::AsPrinted,
    };
    let mut ml_for = |t: &MomentTable, orientation: &str| -> Result<OverlapEstimate> {
        let point = macarthur_levins(t)?;
        let var = ml_variance(t, k02, cfg.ml_mode)?;
        let mut est = build_estimate(Measure::MacarthurLevins, orientation, point, var, &scale, &mut warnings)?;
        est.variance_mode = Some(cfg.ml_mode);
        est.variance_alternate = Some(ml_variance(t, k02, other_mode)?);
        Ok(est)
    };
    let ml = ml_for(&table, "x,y")?;
    let ml_rev = ml_for(&table.swapped(), "y,x")?;

    let reach = h * cfg.kernel.half_width();
    if grid.step() > 0.5 * reach {
        warnings.push(format!(
            "grid step {:.4} exceeds half the kernel reach h*w = {reach:.4}; the integrals \
             under-resolve the estimates (use at least {} grid points)",
            grid.step(),
            recommended_grid_points(support, reach)
        ));
    }

    let dx = fx.diagnostics();
    let dy = fy.diagnostics();
    for (label, d) in [("x", &dx), ("y", &dy)] {
        if let Some(w) = &d.warning {
            warnings.push(format!("sample {label}: {w}"));
        }
        if (d.mass - 1.0).abs() > 0.02 {
            warnings.push(format!(
                "sample {label}: estimated density has mass {:.4} on {support}; \
                 the support cuts off part of the estimate",
                d.mass
            ));
        }
    }

    let z = normal::two_sided_z(cfg.level);
    if cfg.bandwidth == BandwidthRule::ApplicationDefault {
        if let Some(se) = pianka_est.se {
            let z90 = normal::two_sided_z(0.90);
            let ci = interval_with_z(rho, se, z90, 0.90);
            notes.push(format!(
                "intervals for the 4.2 n^(-2/3) bandwidth are often quoted as \
                 rho +/- 1.645 se and labelled 95%; that multiplier (z = {z90:.4}) gives \
                 [{:.4}, {:.4}] here, while the {:.0}% interval uses z = {z:.4}",
                ci.lo,
                ci.hi,
                cfg.level * 100.0
            ));
        }
    }

    let moments = table.entries().map(|(k, v)| (format!("I{k}"), v)).collect();
    let report = OverlapReport {
        n_x: x.len(),
        n_y: y.len(),
        n,
        kernel: cfg.kernel.name().to_string(),
        k02,
        bandwidth_rule: cfg.bandwidth,
        h,
        support,
        support_policy: cfg.support,
        grid_points: cfg.grid_points,
        level: cfg.level,
        z,
        pianka: pianka_est,
        macarthur_levins: ml,
        macarthur_levins_reverse: ml_rev,
        moments,
        diagnostics_x: dx,
        diagnostics_y: dy,
        warnings,
        notes,
    };
    Ok(Analysis { report, fx, fy, table })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::BuiltinKernel;
    use proptest::prelude::*;

    fn grid(lo: f64, hi: f64, m: usize) -> UniformGrid {
        UniformGrid::new(SupportInterval::new(lo, hi).unwrap(), m).unwrap()
    }

    fn smooth_table(a: f64, b: f64) -> MomentTable {
        let g = grid(-1.0, 1.0, 801);
        MomentTable::from_fns(
            move |x| (1.0 + a * x) / 2.0,
            move |x| 0.75 * (1.0 + b * x * x) / (1.0 + b / 3.0) * 2.0 / 3.0,
            &g,
        )
        .unwrap()
    }

    #[test]
    fn identical_densities() {
        let g = grid(-1.0, 1.0, 1001);
        let f = |x: f64| 0.75 * (1.0 - x * x);
        let t = MomentTable::from_fns(f, f, &g).unwrap();
        assert!((pianka(&t).unwrap() - 1.0).abs() < 1e-10);
        assert!((macarthur_levins(&t).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_densities() {
        let g = grid(-2.0, 2.0, 1001);
        let f = |x: f64| if x < -1.0 { 1.0 } else { 0.0 };
        let h = |x: f64| if x > 1.0 { 1.0 } else { 0.0 };
        let t = MomentTable::from_fns(f, h, &g).unwrap();
        assert_eq!(pianka(&t).unwrap(), 0.0);
        assert_eq!(macarthur_levins(&t).unwrap(), 0.0);
    }

    #[test]
    fn zero_norm_is_degenerate() {
        let g = grid(-1.0, 1.0, 11);
        let t = MomentTable::from_fns(|_| 0.0, |_| 0.5, &g).unwrap();
        assert!(matches!(pianka(&t), Err(Error::Degenerate(_))));
        assert!(matches!(macarthur_levins(&t), Err(Error::Degenerate(_))));
        assert!(matches!(pianka_variance(&t, 0.6), Err(Error::Degenerate(_))));
    }

    #[test]
    fn macarthur_levins_can_exceed_one() {
        // f = standard normal truncated to [-1, 1], g(x) = 3/4 (1 - x²).
        // ⟨f,g⟩ = 3/4 · 2φ(1) / Z and ||f||² = (Φ(√2) - Φ(-√2)) / (2√π Z²).
        let g = grid(-1.0, 1.0, 2001);
        let z = normal::cdf(1.0) - normal::cdf(-1.0);
        let t = MomentTable::from_fns(|x| normal::pdf(x) / z, |x| 0.75 * (1.0 - x * x), &g).unwrap();
        let sqrt2 = std::f64::consts::SQRT_2;
        let ff = (normal::cdf(sqrt2) - normal::cdf(-sqrt2)) / (2.0 * std::f64::consts::PI.sqrt()) / (z * z);
        let fg = 1.5 * normal::pdf(1.0) / z;
        let d = macarthur_levins(&t).unwrap();
        assert!((d - fg / ff).abs() < 1e-10, "{d} vs {}", fg / ff);
        assert!(d > 1.0);
        // The reverse direction normalises by ||g||² = 3/5.
        let reverse = macarthur_levins(&t.swapped()).unwrap();
        assert!((reverse - fg / 0.6).abs() < 1e-10);
        assert!(reverse < 1.0);
    }

    #[test]
    fn variance_routes_agree() {
        for (a, b) in [(0.0, 0.0), (0.5, 0.3), (-0.8, 2.0), (0.9, -0.5)] {
            let t = smooth_table(a, b);
            let closed = pianka_variance(&t, 0.6).unwrap();
            let grad = pianka_variance_gradient(&t, 0.6).unwrap();
            assert!((closed - grad).abs() < 1e-10 * closed.abs().max(1.0), "{closed} vs {grad}");

            let red = ml_variance(&t, 0.6, MlVarianceMode::Rederived).unwrap();
            let red_grad = ml_variance_gradient(&t, 0.6).unwrap();
            assert!((red - red_grad).abs() < 1e-10 * red.abs().max(1.0), "{red} vs {red_grad}");
        }
    }

    #[test]
    fn functionals_by_hand_for_a_symmetric_table() {
        // All-equal table with f = g = 1/2 on [-1, 1]:
        // I(1,1)=I(2,0)=I(0,2)=1/2, I(3,0)=I(0,3)=I(2,1)=I(1,2)=I(5/2,1/2)=I(1/2,5/2)=1/4.
        let t = MomentTable::from_fns(|_| 0.5, |_| 0.5, &grid(-1.0, 1.0, 101)).unwrap();
        let q = 0.25_f64;
        let h = 0.5_f64;
        let a = q * h.powi(4);
        let b = q * h.powi(4);
        let c = h * h * (h * h * q + h * h * q + h * h * q);
        let d = h.powi(4) * q;
        let e = h.powi(6);
        let expected = 0.6 * (a - 2.0 * b + c - 2.0 * d) / e;
        let got = pianka_variance(&t, 0.6).unwrap();
        assert!((got - expected).abs() < 1e-12, "{got} vs {expected}");
        // Equal densities: the delta-method variance collapses to zero.
        assert!(got.abs() < 1e-12);
    }

    #[test]
    fn modes_agree_when_norm_is_one() {
        let g = grid(0.0, 1.0, 401);
        // g ≡ 1 on [0, 1] so I(0,2) = 1.
        let t = MomentTable::from_fns(|x| 2.0 * x, |_| 1.0, &g).unwrap();
        assert!((t.i(0.0, 2.0).unwrap() - 1.0).abs() < 1e-14);
        let p = ml_variance_g_normalized(&t, 0.6, MlVarianceMode::AsPrinted).unwrap();
        let r = ml_variance_g_normalized(&t, 0.6, MlVarianceMode::Rederived).unwrap();
        assert!((p - r).abs() < 1e-12);
    }

    #[test]
    fn modes_differ_in_general() {
        let t = smooth_table(0.4, 0.7);
        let p = ml_variance(&t, 0.6, MlVarianceMode::AsPrinted).unwrap();
        let r = ml_variance(&t, 0.6, MlVarianceMode::Rederived).unwrap();
        assert!((p - r).abs() > 1e-6);
    }

    #[test]
    fn interval_basics() {
        let ci = confidence_interval(0.5, 0.0, 100, 0.1, 0.95).unwrap();
        assert_eq!((ci.lo, ci.hi), (0.5, 0.5));
        assert!((ci.z - 1.959_964).abs() < 1e-5);
        assert!(matches!(confidence_interval(0.5, -1.0, 100, 0.1, 0.95), Err(Error::NegativeVariance(_))));
        assert!(confidence_interval(0.5, 1.0, 100, 0.1, 1.0).is_err());

        let ci = confidence_interval(0.3, 0.2, 212, 0.118, 0.9).unwrap();
        let se = (0.2f64 / (212.0 * 0.118)).sqrt();
        assert!((ci.width() - 2.0 * ci.z * se).abs() < 1e-14);
        assert!(ci.contains(0.3));
    }

    #[test]
    fn quoted_interval_uses_the_90_percent_multiplier() {
        // Point 0.3396, se 0.0117 and a quoted interval of [0.3204, 0.3588].
        let z90 = normal::two_sided_z(0.90);
        let a = interval_with_z(0.3396, 0.0117, z90, 0.90);
        assert!((a.lo - 0.3204).abs() < 5e-5 && (a.hi - 0.3588).abs() < 5e-5, "{a:?}");
        let z95 = normal::two_sided_z(0.95);
        let b = interval_with_z(0.3396, 0.0117, z95, 0.95);
        assert!((b.lo - 0.3167).abs() < 5e-5 && (b.hi - 0.3625).abs() < 5e-5, "{b:?}");
    }

    #[test]
    fn support_policy_parsing() {
        assert_eq!("auto".parse::<SupportPolicy>().unwrap(), SupportPolicy::Auto);
        assert_eq!(
            "-1.5,2".parse::<SupportPolicy>().unwrap(),
            SupportPolicy::Explicit { lo: -1.5, hi: 2.0 }
        );
        assert_eq!(
            "quantile:0.995".parse::<SupportPolicy>().unwrap(),
            SupportPolicy::Quantile { q: 0.995 }
        );
        assert!("2,1".parse::<SupportPolicy>().is_err());
        assert!("quantile:0.3".parse::<SupportPolicy>().is_err());
        assert!("wide".parse::<SupportPolicy>().is_err());
    }

    fn lcg_sample(seed: u64, n: usize, shift: f64) -> Sample {
        let mut s = seed;
        let vals = (0..n)
            .map(|_| {
                let mut acc = 0.0;
                for _ in 0..4 {
                    s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                    acc += (s >> 11) as f64 / (1u64 << 53) as f64;
                }
                acc + shift
            })
            .collect();
        Sample::new(vals).unwrap()
    }

    #[test]
    fn identical_samples_give_unit_overlap() {
        let x = lcg_sample(3, 200, 0.0);
        let a = estimate_overlap(&x, &x, &EstimateConfig::default()).unwrap();
        assert!((a.report.pianka.point - 1.0).abs() < 1e-6);
        assert!((a.report.macarthur_levins.point - 1.0).abs() < 1e-6);
    }

    #[test]
    fn report_contents() {
        let x = lcg_sample(3, 150, 0.0);
        let y = lcg_sample(9, 120, 0.6);
        let cfg = EstimateConfig {
            bandwidth: BandwidthRule::Power { alpha: 0.4 },
            ..EstimateConfig::default()
        };
        let a = estimate_overlap(&x, &y, &cfg).unwrap();
        let r = &a.report;
        assert_eq!(r.n, 120);
        assert!(r.warnings.iter().any(|w| w.contains("unequal sample sizes")));
        assert!(r.pianka.point > 0.0 && r.pianka.point < 1.0);
        let prod = r.macarthur_levins.point * r.macarthur_levins_reverse.point;
        assert!((prod - r.pianka.point.powi(2)).abs() < 1e-12);
        assert_eq!(r.macarthur_levins.variance_mode, Some(MlVarianceMode::Rederived));
        assert!(r.moments.contains_key("I(5/2,1/2)"));
        assert_eq!(r.moments.len(), 12);
        assert!(r.support.lo() <= x.min() && r.support.hi() >= y.max());
    }

    #[test]
    fn coarse_grid_is_flagged() {
        let x = lcg_sample(3, 150, 0.0).map_affine(100.0, 0.0);
        let y = lcg_sample(9, 150, 0.6).map_affine(100.0, 0.0);
        let cfg = EstimateConfig {
            bandwidth: BandwidthRule::Fixed { h: 0.5 },
            ..EstimateConfig::default()
        };
        let a = estimate_overlap(&x, &y, &cfg).unwrap();
        let w = a.report.warnings.iter().find(|w| w.contains("grid step")).unwrap();
        let m = recommended_grid_points(a.report.support, 0.5);
        assert!(w.contains(&m.to_string()));
        assert_eq!(m % 2, 1);
        let fine = EstimateConfig { grid_points: m, ..cfg };
        let b = estimate_overlap(&x, &y, &fine).unwrap();
        assert!(!b.report.warnings.iter().any(|w| w.contains("grid step")));
    }

    #[test]
    fn application_bandwidth_adds_multiplier_note() {
        let x = lcg_sample(1, 212, 0.0);
        let y = lcg_sample(2, 212, 0.5);
        let cfg = EstimateConfig {
            bandwidth: BandwidthRule::ApplicationDefault,
            ..EstimateConfig::default()
        };
        let a = estimate_overlap(&x, &y, &cfg).unwrap();
        assert!(a.report.notes.iter().any(|n| n.contains("1.645")));
    }

    #[test]
    fn affine_invariance() {
        let x = lcg_sample(11, 120, 0.0);
        let y = lcg_sample(12, 120, 0.7);
        let h = 0.3;
        let base_support = SupportInterval::new(-1.0, 5.0).unwrap();
        let run = |x: &Sample, y: &Sample, h: f64, s: SupportInterval| {
            let cfg = EstimateConfig {
                bandwidth: BandwidthRule::Fixed { h },
                support: SupportPolicy::Explicit { lo: s.lo(), hi: s.hi() },
                ..EstimateConfig::default()
            };
            let r = estimate_overlap(x, y, &cfg).unwrap().report;
            (r.pianka.point, r.macarthur_levins.point)
        };
        let (rho, delta) = run(&x, &y, h, base_support);
        for (c, d) in [(2.5, -3.0), (-0.4, 10.0), (7.0, 0.0)] {
            let s = base_support.affine(c, d).unwrap();
            let (r2, d2) = run(&x.map_affine(c, d), &y.map_affine(c, d), h * f64::abs(c), s);
            assert!((rho - r2).abs() < 1e-6, "c = {c}: {rho} vs {r2}");
            assert!((delta - d2).abs() < 1e-6, "c = {c}: {delta} vs {d2}");
        }
    }

    proptest! {
        #[test]
        fn bounds_symmetry_and_identity(
            a in -0.9f64..0.9, b in -0.9f64..3.0, shift in -0.5f64..0.5,
        ) {
            let g = grid(-1.0, 1.0, 401);
            let f = move |x: f64| ((1.0 + a * x) / 2.0).max(0.0);
            let h = move |x: f64| (1.0 + b * (x - shift) * (x - shift)).max(0.0);
            let t = MomentTable::from_fns(f, h, &g).unwrap();
            let rho = pianka(&t).unwrap();
            prop_assert!((0.0..=1.0 + 1e-9).contains(&rho));
            prop_assert_eq!(rho, pianka(&t.swapped()).unwrap());
            let prod = macarthur_levins(&t).unwrap() * macarthur_levins(&t.swapped()).unwrap();
            prop_assert!((prod - rho * rho).abs() < 1e-10);
            let closed = pianka_variance(&t, 0.6).unwrap();
            let grad = pianka_variance_gradient(&t, 0.6).unwrap();
            prop_assert!((closed - grad).abs() < 1e-10 * closed.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_choice_scales_variance_by_k02() {
        let t = smooth_table(0.3, 0.4);
        let epan = KernelSpec::builtin(BuiltinKernel::Epanechnikov).k02();
        let boxk = KernelSpec::builtin(BuiltinKernel::Box).k02();
        let ve = pianka_variance(&t, epan).unwrap();
        let vb = pianka_variance(&t, boxk).unwrap();
        assert!((ve / vb - epan / boxk).abs() < 1e-12);
    }
}

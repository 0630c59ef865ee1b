//! Kernel density estimation with compact kernels, bandwidth schedules, and
//! runtime checks on the positivity of the estimated density.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::KernelSpec;
use crate::quadrature::{SupportInterval, UniformGrid};

/// Default number of grid points for density estimates.
pub const DEFAULT_GRID_POINTS: usize = 1001;

/// Grid values at or below this count as a violation of the positivity assumption.
pub const DEFAULT_POSITIVITY_THRESHOLD: f64 = 1e-6;

/// A univariate sample of at least two finite observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    values: Vec<f64>,
}

impl Sample {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() < 2 {
            return Err(Error::invalid(format!(
                "a sample needs at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some((i, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::invalid(format!("observation {i} is not finite ({v})")));
        }
        Ok(Sample { values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Applies `x -> c x + d` to every observation.
    pub fn map_affine(&self, c: f64, d: f64) -> Sample {
        Sample {
            values: self.values.iter().map(|x| c * x + d).collect(),
        }
    }

    /// `[min - h·w, max + h·w]` where `w` is the kernel half-width.
    pub fn default_support(&self, h: f64, kernel: &KernelSpec) -> Result<SupportInterval> {
        let pad = h * kernel.half_width();
        SupportInterval::new(self.min() - pad, self.max() + pad)
    }

    /// Empirical quantile, linear interpolation between order statistics.
    pub fn quantile(&self, q: f64) -> f64 {
        let mut sorted = self.values.clone();
        sorted.sort_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
        let below = pos.floor() as usize;
        let above = pos.ceil() as usize;
        sorted[below] + (pos - below as f64) * (sorted[above] - sorted[below])
    }
}

impl AsRef<[f64]> for Sample {
    fn as_ref(&self) -> &[f64] {
        &self.values
    }
}

/// Bandwidth schedules `n -> h_n`.
///
/// Asymptotic normality of the overlap estimators needs `h_n -> 0`,
/// `n h_n^3 -> 0` and `n h_n -> inf`. Rules that cannot satisfy these are
/// rejected by [`BandwidthRule::validate`]; a `Fixed` bandwidth is allowed for
/// one-off analyses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BandwidthRule {
    /// `h = n^(-alpha)`, `alpha` in (1/3, 1).
    Power { alpha: f64 },
    /// `h = (ln n)^p / (c n^(2/3))`.
    ScaledLog { c: f64, p: f64 },
    /// `h = sqrt(ln n) / (0.45 n^(2/3))`, used by the simulation scenarios.
    #[default]
    SimulationDefault,
    /// `h = 4.2 / n^(2/3)`, used for the perimeter application.
    ApplicationDefault,
    Fixed { h: f64 },
}

impl BandwidthRule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BandwidthRule::Power { alpha } => {
                if !(alpha > 1.0 / 3.0) {
                    return Err(Error::Bandwidth {
                        condition: "n h^3 -> 0",
                        detail: format!("power rule n^-{alpha} needs alpha > 1/3"),
                    });
                }
                if !(alpha < 1.0) {
                    return Err(Error::Bandwidth {
                        condition: "n h -> infinity",
                        detail: format!("power rule n^-{alpha} needs alpha < 1"),
                    });
                }
                Ok(())
            }
            BandwidthRule::ScaledLog { c, p } => {
                if !(c > 0.0 && c.is_finite() && p.is_finite()) {
                    return Err(Error::Bandwidth {
                        condition: "h > 0",
                        detail: format!("scaled-log rule needs c > 0 and finite p (c = {c}, p = {p})"),
                    });
                }
                Ok(())
            }
            BandwidthRule::Fixed { h } => {
                if !(h > 0.0 && h.is_finite()) {
                    return Err(Error::invalid(format!("fixed bandwidth must be positive, got {h}")));
                }
                Ok(())
            }
            BandwidthRule::SimulationDefault | BandwidthRule::ApplicationDefault => Ok(()),
        }
    }

    pub fn bandwidth(&self, n: usize) -> Result<f64> {
        self.validate()?;
        if n < 2 {
            return Err(Error::invalid(format!("bandwidth needs n >= 2, got {n}")));
        }
        let nf = n as f64;
        let n23 = nf.powf(2.0 / 3.0);
        Ok(match *self {
            BandwidthRule::Power { alpha } => nf.powf(-alpha),
            BandwidthRule::ScaledLog { c, p } => nf.ln().powf(p) / (c * n23),
            BandwidthRule::SimulationDefault => nf.ln().sqrt() / (0.45 * n23),
            BandwidthRule::ApplicationDefault => 4.2 / n23,
            BandwidthRule::Fixed { h } => h,
        })
    }
}

impl fmt::Display for BandwidthRule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BandwidthRule::Power { alpha } => write!(f, "power:{alpha}"),
            BandwidthRule::ScaledLog { c, p } => write!(f, "scaled-log:{c},{p}"),
            BandwidthRule::SimulationDefault => f.write_str("sim"),
            BandwidthRule::ApplicationDefault => f.write_str("app"),
            BandwidthRule::Fixed { h } => write!(f, "fixed:{h}"),
        }
    }
}

impl FromStr for BandwidthRule {
    type Err = Error;

    /// Accepts `sim`, `app`, `power:ALPHA`, `scaled-log:C,P` and `fixed:H`
    /// (a bare number is read as a fixed bandwidth).
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let num = |v: &str| -> Result<f64> {
            v.trim()
                .parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad number `{v}` in bandwidth rule `{s}`")))
        };
        let rule = match s.split_once(':') {
            None => match s {
                "sim" | "simulation" => BandwidthRule::SimulationDefault,
                "app" | "application" => BandwidthRule::ApplicationDefault,
                other => BandwidthRule::Fixed { h: num(other)? },
            },
            Some(("power", a)) => BandwidthRule::Power { alpha: num(a)? },
            Some(("fixed", h)) => BandwidthRule::Fixed { h: num(h)? },
            Some(("scaled-log", rest)) | Some(("scaled_log", rest)) => {
                let (c, p) = rest.split_once(',').ok_or_else(|| {
                    Error::invalid(format!("scaled-log rule needs `C,P`, got `{rest}`"))
                })?;
                BandwidthRule::ScaledLog { c: num(c)?, p: num(p)? }
            }
            Some((kind, _)) => {
                return Err(Error::invalid(format!(
                    "unknown bandwidth rule `{kind}` (expected sim|app|power:A|scaled-log:C,P|fixed:H)"
                )))
            }
        };
        rule.validate()?;
        Ok(rule)
    }
}

/// `f_n(x) = (1 / (n h)) Σ K((x - X_i) / h)`.
pub fn kde_eval(values: &[f64], kernel: &KernelSpec, h: f64, x: f64) -> f64 {
    let reach = h * kernel.half_width();
    let sum: f64 = values
        .iter()
        .filter(|&&xi| (x - xi).abs() <= reach)
        .map(|&xi| kernel.eval((x - xi) / h))
        .sum();
    sum / (values.len() as f64 * h)
}

/// A kernel density estimate tabulated on a uniform grid.
#[derive(Debug, Clone)]
pub struct DensityEstimate {
    grid: UniformGrid,
    values: Vec<f64>,
    h: f64,
    kernel: KernelSpec,
    n: usize,
}

impl DensityEstimate {
    pub fn grid(&self) -> &UniformGrid {
        &self.grid
    }

    pub fn support(&self) -> SupportInterval {
        self.grid.support()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn kernel(&self) -> &KernelSpec {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Simpson mass of the estimate over its grid.
    pub fn mass(&self) -> f64 {
        self.grid
            .integrate(&self.values)
            .expect("grid and values have equal length")
    }

    pub fn diagnostics(&self) -> AssumptionDiagnostics {
        assumption_diagnostics(self, DEFAULT_POSITIVITY_THRESHOLD)
    }
}

/// Evaluates the estimator at the `m` nodes of a uniform grid on `support`.
///
/// Each observation only touches the nodes within `h · half_width` of it; a
/// node's contributions are accumulated in observation order, so results are
/// deterministic.
pub fn kde_grid(
    values: &[f64],
    kernel: &KernelSpec,
    h: f64,
    support: SupportInterval,
    m: usize,
) -> Result<DensityEstimate> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {h}")));
    }
    if values.is_empty() {
        return Err(Error::invalid("cannot estimate a density from an empty sample"));
    }
    let grid = UniformGrid::new(support, m)?;
    let step = grid.step();
    let reach = h * kernel.half_width();
    let lo = support.lo();
    let last = (m - 1) as f64;
    let mut acc = vec![0.0; m];
    for &xi in values {
        let first = ((xi - reach - lo) / step).ceil().max(0.0);
        let stop = ((xi + reach - lo) / step).floor().min(last);
        if first > stop {
            continue;
        }
        // One node of slack on each side guards against rounding in the index bounds.
        let a = (first as usize).saturating_sub(1);
        let b = (stop as usize + 1).min(m - 1);
        for (k, slot) in acc.iter_mut().enumerate().take(b + 1).skip(a) {
            let x = grid.node(k);
            if (x - xi).abs() <= reach {
                *slot += kernel.eval((x - xi) / h);
            }
        }
    }
    let scale = 1.0 / (values.len() as f64 * h);
    acc.iter_mut().for_each(|v| *v *= scale);
    Ok(DensityEstimate {
        grid,
        values: acc,
        h,
        kernel: kernel.clone(),
        n: values.len(),
    })
}

/// Empirical lower and upper bounds of an estimate on its grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionDiagnostics {
    /// Smallest grid value (empirical `c_f`).
    pub min_density: f64,
    /// Largest grid value (empirical `C_f`).
    pub max_density: f64,
    pub threshold: f64,
    /// Simpson mass of the estimate over the support.
    pub mass: f64,
    pub warning: Option<String>,
}

/// Reports `c_f`, `C_f` and flags a density that is not bounded away from zero.
/// Never blocks computation.
pub fn assumption_diagnostics(d: &DensityEstimate, threshold: f64) -> AssumptionDiagnostics {
    let min = d.values.iter().copied().fold(f64::INFINITY, f64::min);
    let max = d.values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let warning = (min <= threshold).then(|| {
        let at = d
            .values
            .iter()
            .position(|&v| v == min)
            .map(|k| d.grid.node(k))
            .unwrap_or(f64::NAN);
        format!(
            "estimated density falls to {min:.3e} (<= {threshold:e}) at x = {at:.6}; \
             the density is not bounded away from zero on {}",
            d.support()
        )
    });
    AssumptionDiagnostics {
        min_density: min,
        max_density: max,
        threshold,
        mass: d.mass(),
        warning,
    }
}

//! Simulation engine for the scaled overlap statistics.
//!
//! Ground truth comes from truncated normal and logistic densities. Each
//! replicate draws two fresh samples by inverse-CDF sampling, builds both kernel
//! estimates on the scenario support, and records
//! `√(n h)(ρ_n - ρ)` and `√(n h)(Δ_n - Δ)`. Replicate `i` is seeded from
//! `(master seed, i)` alone, so results do not depend on execution order.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kde::{kde_grid, BandwidthRule, DEFAULT_GRID_POINTS};
use crate::kernels::KernelSpec;
use crate::normal;
use crate::overlap::{
    confidence_interval, macarthur_levins, ml_variance, pianka, pianka_variance, Measure,
    MlVarianceMode,
};
use crate::quadrature::{integrate, MomentKey, MomentTable, SupportInterval, UniformGrid};

/// Grid size for "true" moment integrals of analytic densities; kept separate
/// from the estimation grid so the truth does not share its discretisation.
pub const REFERENCE_GRID_POINTS: usize = 100_001;

/// Asymptotic 1% Kolmogorov-Smirnov coefficient: reject when `D > 1.63 / √M`.
pub const KS_COEFFICIENT_1PCT: f64 = 1.63;

/// An untruncated parametric family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Normal { mean: f64, sd: f64 },
    Logistic { location: f64, scale: f64 },
}

impl Family {
    pub fn validate(&self) -> Result<()> {
        let (loc, scale) = match *self {
            Family::Normal { mean, sd } => (mean, sd),
            Family::Logistic { location, scale } => (location, scale),
        };
        if !(loc.is_finite() && scale.is_finite() && scale > 0.0) {
            return Err(Error::invalid(format!("invalid family parameters {self:?}")));
        }
        Ok(())
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => normal::pdf((x - mean) / sd) / sd,
            Family::Logistic { location, scale } => {
                let e = (-((x - location) / scale).abs()).exp();
                e / (scale * (1.0 + e) * (1.0 + e))
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => normal::cdf((x - mean) / sd),
            Family::Logistic { location, scale } => 1.0 / (1.0 + (-(x - location) / scale).exp()),
        }
    }

    pub fn quantile(&self, p: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => mean + sd * normal::quantile(p),
            Family::Logistic { location, scale } => location + scale * (p / (1.0 - p)).ln(),
        }
    }

    /// Second derivative of the density.
    pub fn pdf_second_derivative(&self, x: f64) -> f64 {
        match *self {
            Family::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                self.pdf(x) * (z * z - 1.0) / (sd * sd)
            }
            Family::Logistic { location, scale } => {
                // With F the standard logistic CDF, p = F(1-F), p' = p(1-2F),
                // p'' = p(1-2F)^2 - 2p^2.
                let z = (x - location) / scale;
                let big_f = 1.0 / (1.0 + (-z).exp());
                let p = big_f * (1.0 - big_f);
                let t = 1.0 - 2.0 * big_f;
                (p * t * t - 2.0 * p * p) / scale.powi(3)
            }
        }
    }
}

/// `[-a, a]` with `a` the `q`-quantile of the untruncated family.
pub fn support_from_quantile(family: &Family, q: f64) -> Result<SupportInterval> {
    family.validate()?;
    if !(q > 0.5 && q < 1.0) {
        return Err(Error::invalid(format!("support quantile must be in (0.5, 1), got {q}")));
    }
    let a = family.quantile(q);
    if !(a > 0.0) {
        return Err(Error::invalid(format!(
            "the {q}-quantile of {family:?} is {a}; a symmetric support needs it positive"
        )));
    }
    SupportInterval::symmetric(a)
}

/// A family restricted to a compact interval and renormalised.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruncatedDensity {
    family: Family,
    support: SupportInterval,
    lower_mass: f64,
    norm_const: f64,
}

impl TruncatedDensity {
    pub fn new(family: Family, support: SupportInterval) -> Result<Self> {
        family.validate()?;
        let lower_mass = family.cdf(support.lo());
        let norm_const = family.cdf(support.hi()) - lower_mass;
        if !(norm_const > 0.0) {
            return Err(Error::Degenerate(format!(
                "{family:?} has no mass on {support}"
            )));
        }
        Ok(TruncatedDensity {
            family,
            support,
            lower_mass,
            norm_const,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn support(&self) -> SupportInterval {
        self.support
    }

    /// `F(hi) - F(lo)`.
    pub fn norm_const(&self) -> f64 {
        self.norm_const
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if self.support.contains(x) {
            self.family.pdf(x) / self.norm_const
        } else {
            0.0
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.support.lo() {
            0.0
        } else if x >= self.support.hi() {
            1.0
        } else {
            (self.family.cdf(x) - self.lower_mass) / self.norm_const
        }
    }

    /// `F^{-1}(F(lo) + u (F(hi) - F(lo)))`, clamped to the support.
    pub fn quantile(&self, u: f64) -> f64 {
        let x = self.family.quantile(self.lower_mass + u * self.norm_const);
        x.clamp(self.support.lo(), self.support.hi())
    }

    pub fn pdf_second_derivative(&self, x: f64) -> f64 {
        if self.support.contains(x) {
            self.family.pdf_second_derivative(x) / self.norm_const
        } else {
            0.0
        }
    }

    /// Mean of a truncated normal, `μ + σ (φ(α) - φ(β)) / Z`. `None` for other families.
    pub fn normal_mean(&self) -> Option<f64> {
        match self.family {
            Family::Normal { mean, sd } => {
                let a = (self.support.lo() - mean) / sd;
                let b = (self.support.hi() - mean) / sd;
                Some(mean + sd * (normal::pdf(a) - normal::pdf(b)) / self.norm_const)
            }
            Family::Logistic { .. } => None,
        }
    }

    /// Variance of a truncated normal. `None` for other families.
    pub fn normal_variance(&self) -> Option<f64> {
        match self.family {
            Family::Normal { sd, .. } => {
                let mean = self.family_mean();
                let a = (self.support.lo() - mean) / sd;
                let b = (self.support.hi() - mean) / sd;
                let z = self.norm_const;
                let (pa, pb) = (normal::pdf(a), normal::pdf(b));
                let r = (pa - pb) / z;
                Some(sd * sd * (1.0 + (a * pa - b * pb) / z - r * r))
            }
            Family::Logistic { .. } => None,
        }
    }

    fn family_mean(&self) -> f64 {
        match self.family {
            Family::Normal { mean, .. } => mean,
            Family::Logistic { location, .. } => location,
        }
    }
}

pub fn truncated_pdf(d: &TruncatedDensity, x: f64) -> f64 {
    d.pdf(x)
}

/// `n` i.i.d. draws from `d` by inverse-CDF sampling.
pub fn sample_truncated<R: Rng + ?Sized>(d: &TruncatedDensity, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| d.quantile(rng.random::<f64>())).collect()
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of replicate `index` under `master`.
pub fn replicate_seed(master: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(index))
}

pub fn replicate_rng(master: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(replicate_seed(master, index))
}

/// The two built-in simulation designs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Scenario {
    /// Truncated N(1, 4²) against truncated N(5, 4.5²).
    #[serde(rename = "case_I")]
    CaseI,
    /// Truncated N(5, 4²) against truncated Logistic(0, 3).
    #[serde(rename = "case_II")]
    CaseII,
    /// Caller-supplied densities.
    #[serde(rename = "custom")]
    Custom,
}

/// Quantile of `f` that fixes the scenario support half-width.
pub const SCENARIO_SUPPORT_QUANTILE: f64 = 0.995;

impl Scenario {
    pub fn families(&self) -> Option<(Family, Family)> {
        match self {
            Scenario::CaseI => Some((
                Family::Normal { mean: 1.0, sd: 4.0 },
                Family::Normal { mean: 5.0, sd: 4.5 },
            )),
            Scenario::CaseII => Some((
                Family::Normal { mean: 5.0, sd: 4.0 },
                Family::Logistic { location: 0.0, scale: 3.0 },
            )),
            Scenario::Custom => None,
        }
    }

    /// Both truncated densities on `[-a, a]`, `a` the 0.995-quantile of `f`.
    pub fn densities(&self) -> Result<(TruncatedDensity, TruncatedDensity)> {
        let (f, g) = self
            .families()
            .ok_or_else(|| Error::invalid("a custom scenario has no built-in densities"))?;
        let support = support_from_quantile(&f, SCENARIO_SUPPORT_QUANTILE)?;
        Ok((TruncatedDensity::new(f, support)?, TruncatedDensity::new(g, support)?))
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scenario::CaseI => "case_I",
            Scenario::CaseII => "case_II",
            Scenario::Custom => "custom",
        })
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "case_i" | "case1" | "i" => Ok(Scenario::CaseI),
            "case_ii" | "case2" | "ii" => Ok(Scenario::CaseII),
            other => Err(Error::invalid(format!("unknown scenario `{other}` (expected case_I|case_II)"))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimulationConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub kernel: KernelSpec,
    pub bandwidth: BandwidthRule,
    pub grid_points: usize,
    /// Measure whose statistic is the primary output.
    pub measure: Measure,
    pub ml_mode: MlVarianceMode,
    /// Nominal level for the per-replicate coverage count.
    pub level: f64,
}

impl SimulationConfig {
    pub fn new(scenario: Scenario, n: usize, reps: usize, seed: u64) -> Self {
        SimulationConfig {
            scenario,
            n,
            reps,
            seed,
            kernel: KernelSpec::default(),
            bandwidth: BandwidthRule::SimulationDefault,
            grid_points: DEFAULT_GRID_POINTS,
            measure: Measure::Pianka,
            ml_mode: MlVarianceMode::default(),
            level: 0.95,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps < 1 {
            return Err(Error::invalid("need at least one replication"));
        }
        if self.n < 10 {
            return Err(Error::invalid(format!("simulation sample size must be >= 10, got {}", self.n)));
        }
        if !(self.level > 0.0 && self.level < 1.0) {
            return Err(Error::invalid(format!("level must be in (0, 1), got {}", self.level)));
        }
        self.bandwidth.validate()?;
        UniformGrid::new(SupportInterval::symmetric(1.0)?, self.grid_points)?;
        Ok(())
    }
}

/// True overlap values and asymptotic variances for a density pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub rho: f64,
    pub delta: f64,
    pub sigma2_rho: f64,
    pub sigma2_delta_rederived: f64,
    pub sigma2_delta_as_printed: f64,
    pub k02: f64,
}

impl Truth {
    pub fn sigma2(&self, measure: Measure, mode: MlVarianceMode) -> f64 {
        match (measure, mode) {
            (Measure::Pianka, _) => self.sigma2_rho,
            (Measure::MacarthurLevins, MlVarianceMode::Rederived) => self.sigma2_delta_rederived,
            (Measure::MacarthurLevins, MlVarianceMode::AsPrinted) => self.sigma2_delta_as_printed,
        }
    }

    pub fn value(&self, measure: Measure) -> f64 {
        match measure {
            Measure::Pianka => self.rho,
            Measure::MacarthurLevins => self.delta,
        }
    }
}

fn common_support(f: &TruncatedDensity, g: &TruncatedDensity) -> Result<SupportInterval> {
    if f.support() != g.support() {
        return Err(Error::invalid(format!(
            "densities must share a support ({} vs {})",
            f.support(),
            g.support()
        )));
    }
    Ok(f.support())
}

/// Moment table of two analytic densities on the 100001-point reference grid.
pub fn reference_table(f: &TruncatedDensity, g: &TruncatedDensity) -> Result<MomentTable> {
    let grid = UniformGrid::new(common_support(f, g)?, REFERENCE_GRID_POINTS)?;
    MomentTable::from_fns(|x| f.pdf(x), |x| g.pdf(x), &grid)
}

pub fn truth(f: &TruncatedDensity, g: &TruncatedDensity, kernel: &KernelSpec) -> Result<Truth> {
    let t = reference_table(f, g)?;
    let k02 = kernel.k02();
    Ok(Truth {
        rho: pianka(&t)?,
        delta: macarthur_levins(&t)?,
        sigma2_rho: pianka_variance(&t, k02)?,
        sigma2_delta_rederived: ml_variance(&t, k02, MlVarianceMode::Rederived)?,
        sigma2_delta_as_printed: ml_variance(&t, k02, MlVarianceMode::AsPrinted)?,
        k02,
    })
}

/// One simulated two-sample analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replicate {
    pub index: usize,
    pub seed: u64,
    pub rho: f64,
    pub delta: f64,
    /// `√(n h)(ρ_n - ρ)`.
    pub rho_stat: f64,
    /// `√(n h)(Δ_n - Δ)`.
    pub delta_stat: f64,
    /// Plug-in variance of the scaled ρ statistic.
    pub rho_plugin_variance: f64,
    /// Plug-in variance of the scaled Δ statistic (configured mode).
    pub delta_plugin_variance: f64,
    /// Whether the nominal interval for ρ covers the truth; `None` when the
    /// plug-in variance was negative.
    pub rho_covered: Option<bool>,
    pub delta_covered: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSet {
    pub scenario: Scenario,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub h: f64,
    pub kernel: String,
    pub measure: Measure,
    pub ml_mode: MlVarianceMode,
    pub level: f64,
    pub grid_points: usize,
    pub support: SupportInterval,
    pub truth: Truth,
    pub replicates: Vec<Replicate>,
}

impl ReplicationSet {
    pub fn len(&self) -> usize {
        self.replicates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.replicates.is_empty()
    }

    /// Scaled statistics of `measure`, in replicate order.
    pub fn statistics(&self, measure: Measure) -> Vec<f64> {
        self.replicates
            .iter()
            .map(|r| match measure {
                Measure::Pianka => r.rho_stat,
                Measure::MacarthurLevins => r.delta_stat,
            })
            .collect()
    }

    /// Scaled statistics of the configured measure.
    pub fn values(&self) -> Vec<f64> {
        self.statistics(self.measure)
    }

    pub fn true_measure(&self) -> f64 {
        self.truth.value(self.measure)
    }

    /// Theoretical variance of the configured measure's statistic.
    pub fn sigma2_theory(&self) -> f64 {
        self.truth.sigma2(self.measure, self.ml_mode)
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.replicates.iter().map(|r| r.seed).collect()
    }

    /// Fraction of replicates whose nominal interval covers the truth.
    /// Replicates with a negative plug-in variance count as misses.
    pub fn coverage(&self, measure: Measure) -> f64 {
        let hits = self
            .replicates
            .iter()
            .filter(|r| match measure {
                Measure::Pianka => r.rho_covered == Some(true),
                Measure::MacarthurLevins => r.delta_covered == Some(true),
            })
            .count();
        hits as f64 / self.replicates.len() as f64
    }

    pub fn negative_variance_count(&self) -> usize {
        self.replicates
            .iter()
            .filter(|r| r.rho_covered.is_none() || r.delta_covered.is_none())
            .count()
    }
}

#[cfg(feature = "parallel")]
fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    use rayon::prelude::*;
    (0..count).into_par_iter().map(f).collect()
}

#[cfg(not(feature = "parallel"))]
fn map_indices<T, F>(count: usize, f: F) -> Vec<T>
where
    F: Fn(usize) -> T,
{
    (0..count).map(f).collect()
}

fn run_one(
    cfg: &SimulationConfig,
    f: &TruncatedDensity,
    g: &TruncatedDensity,
    truth: &Truth,
    h: f64,
    grid: &UniformGrid,
    index: usize,
) -> Result<Replicate> {
    let seed = replicate_seed(cfg.seed, index as u64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = sample_truncated(f, cfg.n, &mut rng);
    let y = sample_truncated(g, cfg.n, &mut rng);
    let fx = kde_grid(&x, &cfg.kernel, h, grid.support(), grid.len())?;
    let fy = kde_grid(&y, &cfg.kernel, h, grid.support(), grid.len())?;
    let table = MomentTable::from_values(fx.values(), fy.values(), grid)?;

    let k02 = truth.k02;
    let rho = pianka(&table)?;
    let delta = macarthur_levins(&table)?;
    let rho_var = pianka_variance(&table, k02)?;
    let delta_var = ml_variance(&table, k02, cfg.ml_mode)?;
    let scale = (cfg.n as f64 * h).sqrt();
    let covered = |point: f64, var: f64, target: f64| {
        confidence_interval(point, var, cfg.n, h, cfg.level)
            .ok()
            .map(|ci| ci.contains(target))
    };
    Ok(Replicate {
        index,
        seed,
        rho,
        delta,
        rho_stat: scale * (rho - truth.rho),
        delta_stat: scale * (delta - truth.delta),
        rho_plugin_variance: rho_var,
        delta_plugin_variance: delta_var,
        rho_covered: covered(rho, rho_var, truth.rho),
        delta_covered: covered(delta, delta_var, truth.delta),
    })
}

/// Runs `cfg.reps` independent replicates for the densities `f`, `g`.
///
/// Output is bit-identical for a given `(cfg, seed)` whether or not the
/// `parallel` feature is enabled.
pub fn run_replications(
    cfg: &SimulationConfig,
    f: &TruncatedDensity,
    g: &TruncatedDensity,
) -> Result<ReplicationSet> {
    cfg.validate()?;
    let support = common_support(f, g)?;
    let truth = truth(f, g, &cfg.kernel)?;
    let h = cfg.bandwidth.bandwidth(cfg.n)?;
    let grid = UniformGrid::new(support, cfg.grid_points)?;
    let replicates = map_indices(cfg.reps, |i| run_one(cfg, f, g, &truth, h, &grid, i))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicationSet {
        scenario: cfg.scenario,
        n: cfg.n,
        reps: cfg.reps,
        seed: cfg.seed,
        h,
        kernel: cfg.kernel.name().to_string(),
        measure: cfg.measure,
        ml_mode: cfg.ml_mode,
        level: cfg.level,
        grid_points: cfg.grid_points,
        support,
        truth,
        replicates,
    })
}

/// Convenience wrapper for the built-in scenarios.
pub fn simulate_scenario(cfg: &SimulationConfig) -> Result<ReplicationSet> {
    let (f, g) = cfg.scenario.densities()?;
    run_replications(cfg, &f, &g)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
    /// `count / (M · width)`, comparable to a density.
    pub density: f64,
    /// `N(0, σ²)` density at the bin centre.
    pub normal_density: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QqPair {
    pub theoretical: f64,
    pub empirical: f64,
}

/// Goodness of fit of scaled statistics to `N(0, σ²)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalityDiagnostics {
    pub m: usize,
    pub sigma2_theory: f64,
    pub ks_statistic: f64,
    /// `1.63 / √M`.
    pub ks_threshold_1pct: f64,
    pub ks_accepts: bool,
    pub empirical_mean: f64,
    /// Unbiased sample variance.
    pub empirical_variance: f64,
    pub qq_pairs: Vec<QqPair>,
    pub histogram: Vec<HistogramBin>,
}

/// One-sample KS distance between `values` and `N(0, σ²)`.
pub fn ks_statistic_normal(values: &[f64], sigma2: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let m = sorted.len() as f64;
    let sd = sigma2.sqrt();
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal::cdf(x / sd);
            (((i + 1) as f64 / m) - c).max(c - i as f64 / m)
        })
        .fold(0.0, f64::max)
}

pub fn normality_diagnostics(values: &[f64], sigma2_theory: f64) -> Result<NormalityDiagnostics> {
    let m = values.len();
    if m < 20 {
        return Err(Error::invalid(format!("normality diagnostics need at least 20 values, got {m}")));
    }
    if !(sigma2_theory > 0.0 && sigma2_theory.is_finite()) {
        return Err(Error::invalid(format!(
            "theoretical variance must be positive and finite, got {sigma2_theory}"
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (min, max) = (sorted[0], sorted[m - 1]);
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::invalid("replication values contain non-finite entries"));
    }
    if min == max {
        return Err(Error::Degenerate(format!("all {m} replication values equal {min}")));
    }

    let mf = m as f64;
    let mean = sorted.iter().sum::<f64>() / mf;
    let var = sorted.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (mf - 1.0);
    let ks = ks_statistic_normal(&sorted, sigma2_theory);
    let threshold = KS_COEFFICIENT_1PCT / mf.sqrt();

    let sd = sigma2_theory.sqrt();
    let qq_pairs = sorted
        .iter()
        .enumerate()
        .map(|(i, &v)| QqPair {
            theoretical: sd * normal::quantile((i as f64 + 0.5) / mf),
            empirical: v,
        })
        .collect();

    let bins = (mf.sqrt().ceil() as usize).clamp(5, 50);
    let width = (max - min) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in &sorted {
        let k = (((v - min) / width) as usize).min(bins - 1);
        counts[k] += 1;
    }
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(k, &count)| {
            let lo = min + k as f64 * width;
            let hi = if k + 1 == bins { max } else { lo + width };
            let centre = 0.5 * (lo + hi);
            HistogramBin {
                lo,
                hi,
                count,
                density: count as f64 / (mf * width),
                normal_density: normal::pdf(centre / sd) / sd,
            }
        })
        .collect();

    Ok(NormalityDiagnostics {
        m,
        sigma2_theory,
        ks_statistic: ks,
        ks_threshold_1pct: threshold,
        ks_accepts: ks < threshold,
        empirical_mean: mean,
        empirical_variance: var,
        qq_pairs,
        histogram,
    })
}

/// Monte Carlo check of `n h ∫ Var f_n(x) dx <= k02`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VarianceBound {
    pub n: usize,
    pub h: f64,
    pub reps: usize,
    /// `n h ∫ Var f_n`, with the variance estimated pointwise across replicates.
    pub scaled_integrated_variance: f64,
    pub k02: f64,
    pub slack: f64,
    pub holds: bool,
}

pub const VARIANCE_BOUND_SLACK: f64 = 1.05;

pub fn variance_bound_check(
    f: &TruncatedDensity,
    kernel: &KernelSpec,
    bandwidth: BandwidthRule,
    n: usize,
    reps: usize,
    seed: u64,
    grid_points: usize,
) -> Result<VarianceBound> {
    if reps < 2 {
        return Err(Error::invalid("variance estimation needs at least two replicates"));
    }
    let h = bandwidth.bandwidth(n)?;
    let grid = UniformGrid::new(f.support(), grid_points)?;
    let estimates = map_indices(reps, |i| {
        let mut rng = replicate_rng(seed, i as u64);
        let x = sample_truncated(f, n, &mut rng);
        kde_grid(&x, kernel, h, grid.support(), grid.len()).map(|d| d.values().to_vec())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;

    // Welford per node, reduced in replicate order.
    let mut mean = vec![0.0; grid.len()];
    let mut m2 = vec![0.0; grid.len()];
    for (count, est) in estimates.iter().enumerate() {
        let c = (count + 1) as f64;
        for k in 0..grid.len() {
            let delta = est[k] - mean[k];
            mean[k] += delta / c;
            m2[k] += delta * (est[k] - mean[k]);
        }
    }
    let variance: Vec<f64> = m2.iter().map(|s| s / (reps as f64 - 1.0)).collect();
    let scaled = n as f64 * h * integrate(&variance, grid.support())?;
    let k02 = kernel.k02();
    Ok(VarianceBound {
        n,
        h,
        reps,
        scaled_integrated_variance: scaled,
        k02,
        slack: VARIANCE_BOUND_SLACK,
        holds: scaled <= k02 * VARIANCE_BOUND_SLACK,
    })
}

/// `E f_n(x) = ∫ K(v) f(x - h v) dv`, by 2001-point Simpson over the kernel support.
pub fn expected_kde(f: &TruncatedDensity, kernel: &KernelSpec, h: f64, x: f64) -> f64 {
    let w = kernel.half_width();
    let grid = UniformGrid::new(SupportInterval::symmetric(w).expect("positive half-width"), 2001)
        .expect("odd grid");
    let vals = grid.tabulate(|v| kernel.eval(v) * f.pdf(x - h * v));
    grid.integrate(&vals).expect("matching length")
}

/// `h^-2 (E f_n(x) - f(x))` computed from the exact expectation.
pub fn scaled_bias(f: &TruncatedDensity, kernel: &KernelSpec, h: f64, x: f64) -> f64 {
    (expected_kde(f, kernel, h, x) - f.pdf(x)) / (h * h)
}

/// Limit of [`scaled_bias`] as `h -> 0`: `f''(x) k21 / 2`.
pub fn bias_limit(f: &TruncatedDensity, kernel: &KernelSpec, x: f64) -> f64 {
    0.5 * f.pdf_second_derivative(x) * kernel.k21()
}

/// Monte Carlo mean of `f_n(x)` over `reps` samples of size `n`, with its standard error.
pub fn kde_mean_at(
    f: &TruncatedDensity,
    kernel: &KernelSpec,
    h: f64,
    n: usize,
    x: f64,
    reps: usize,
    seed: u64,
) -> (f64, f64) {
    let vals = map_indices(reps, |i| {
        let mut rng = replicate_rng(seed, i as u64);
        let s = sample_truncated(f, n, &mut rng);
        crate::kde::kde_eval(&s, kernel, h, x)
    });
    let r = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / r;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (r - 1.0);
    (mean, (var / r).sqrt())
}

/// Mean absolute error of the plug-in `I_n(r, s)` against the reference
/// value over `reps` replicates of size `n`.
pub fn moment_error(
    f: &TruncatedDensity,
    g: &TruncatedDensity,
    cfg: &SimulationConfig,
    key: MomentKey,
) -> Result<(f64, f64)> {
    cfg.validate()?;
    let support = common_support(f, g)?;
    let target = reference_table(f, g)?.get(key)?;
    let h = cfg.bandwidth.bandwidth(cfg.n)?;
    let grid = UniformGrid::new(support, cfg.grid_points)?;
    let errors = map_indices(cfg.reps, |i| -> Result<f64> {
        let mut rng = replicate_rng(cfg.seed, i as u64);
        let x = sample_truncated(f, cfg.n, &mut rng);
        let y = sample_truncated(g, cfg.n, &mut rng);
        let fx = kde_grid(&x, &cfg.kernel, h, support, grid.len())?;
        let fy = kde_grid(&y, &cfg.kernel, h, support, grid.len())?;
        let v = crate::quadrature::moment_integral(fx.values(), fy.values(), key, support)?;
        Ok((v - target).abs())
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok((errors.iter().sum::<f64>() / errors.len() as f64, target))
}

//! WebAssembly bindings for the browser demo in `www/`.
//!
//! Each exported function returns a JSON string; the page parses it and draws
//! on a canvas. The `*_json` functions hold the logic and are plain Rust so
//! they can be tested natively.

use overlap_core::montecarlo::{normality_diagnostics, simulate_scenario};
use overlap_core::{
    estimate_overlap, BandwidthRule, EstimateConfig, KernelSpec, Measure, OverlapReport, Sample,
    Scenario, SimulationConfig,
};
use serde::Serialize;
use wasm_bindgen::prelude::*;

/// Points per curve sent to the page.
const CURVE_POINTS: usize = 301;

/// Keeps the browser responsive: 2000 replicates of n = 2000 is already slow
/// single-threaded.
const MAX_REPS: usize = 2000;
const MAX_N: usize = 2000;

/// Numbers separated by commas, semicolons or whitespace.
pub fn parse_numbers(text: &str) -> Result<Vec<f64>, String> {
    text.split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .enumerate()
        .map(|(i, t)| {
            t.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("value {} (`{t}`) is not a number", i + 1))
        })
        .collect()
}

fn thin<T: Copy>(values: &[T], max: usize) -> Vec<T> {
    if values.len() <= max {
        return values.to_vec();
    }
    let step = (values.len() - 1) as f64 / (max - 1) as f64;
    (0..max).map(|k| values[(k as f64 * step).round() as usize]).collect()
}

#[derive(Serialize)]
struct Curve {
    x: Vec<f64>,
    y: Vec<f64>,
}

#[derive(Serialize)]
struct EstimateView {
    report: OverlapReport,
    fx: Curve,
    fy: Curve,
}

pub fn estimate_json(x: &str, y: &str, kernel: &str, bandwidth: &str, level: f64) -> Result<String, String> {
    let xs = Sample::new(parse_numbers(x).map_err(|e| format!("sample x: {e}"))?).map_err(|e| format!("sample x: {e}"))?;
    let ys = Sample::new(parse_numbers(y).map_err(|e| format!("sample y: {e}"))?).map_err(|e| format!("sample y: {e}"))?;
    let cfg = EstimateConfig {
        kernel: kernel.parse::<KernelSpec>().map_err(|e| e.to_string())?,
        bandwidth: bandwidth.parse::<BandwidthRule>().map_err(|e| e.to_string())?,
        level,
        ..EstimateConfig::default()
    };
    // Let the grid follow the bandwidth so narrow kernels are resolved.
    let n = xs.len().min(ys.len());
    let h = cfg.bandwidth.bandwidth(n).map_err(|e| e.to_string())?;
    let support = cfg.support.resolve(&xs, &ys, h, &cfg.kernel).map_err(|e| e.to_string())?;
    let reach = h * cfg.kernel.half_width();
    let grid_points = overlap_core::overlap::recommended_grid_points(support, reach).clamp(cfg.grid_points, 200_001);
    let cfg = EstimateConfig { grid_points, ..cfg };

    let analysis = estimate_overlap(&xs, &ys, &cfg).map_err(|e| e.to_string())?;
    let nodes = analysis.fx.grid().nodes();
    let curve = |vals: &[f64]| Curve {
        x: thin(&nodes, CURVE_POINTS),
        y: thin(vals, CURVE_POINTS),
    };
    let view = EstimateView {
        fx: curve(analysis.fx.values()),
        fy: curve(analysis.fy.values()),
        report: analysis.report,
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SimulationView {
    scenario: String,
    n: usize,
    reps: usize,
    seed: u64,
    h: f64,
    measure: Measure,
    true_value: f64,
    theoretical_variance: f64,
    empirical_mean: f64,
    empirical_variance: f64,
    ks_statistic: f64,
    ks_threshold_1pct: f64,
    ks_accepts: bool,
    coverage: f64,
    histogram: Vec<overlap_core::montecarlo::HistogramBin>,
    /// `N(0, σ²)` density across the histogram range.
    theory: Curve,
}

pub fn simulate_json(scenario: &str, n: usize, reps: usize, seed: u64, measure: &str) -> Result<String, String> {
    if n > MAX_N || reps > MAX_REPS {
        return Err(format!("the demo caps n at {MAX_N} and replications at {MAX_REPS}"));
    }
    let mut cfg = SimulationConfig::new(scenario.parse::<Scenario>().map_err(|e| e.to_string())?, n, reps, seed);
    cfg.measure = measure.parse::<Measure>().map_err(|e| e.to_string())?;
    let set = simulate_scenario(&cfg).map_err(|e| e.to_string())?;
    let sigma2 = set.sigma2_theory();
    let d = normality_diagnostics(&set.values(), sigma2).map_err(|e| e.to_string())?;
    let lo = d.histogram.first().map_or(-1.0, |b| b.lo).min(-3.0 * sigma2.sqrt());
    let hi = d.histogram.last().map_or(1.0, |b| b.hi).max(3.0 * sigma2.sqrt());
    let sd = sigma2.sqrt();
    let x: Vec<f64> = (0..CURVE_POINTS)
        .map(|k| lo + (hi - lo) * k as f64 / (CURVE_POINTS - 1) as f64)
        .collect();
    let y = x.iter().map(|v| overlap_core::normal::pdf(v / sd) / sd).collect();
    let view = SimulationView {
        scenario: set.scenario.to_string(),
        n,
        reps,
        seed,
        h: set.h,
        measure: set.measure,
        true_value: set.true_measure(),
        theoretical_variance: sigma2,
        empirical_mean: d.empirical_mean,
        empirical_variance: d.empirical_variance,
        ks_statistic: d.ks_statistic,
        ks_threshold_1pct: d.ks_threshold_1pct,
        ks_accepts: d.ks_accepts,
        coverage: set.coverage(set.measure),
        histogram: d.histogram,
        theory: Curve { x, y },
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct KernelView {
    name: String,
    half_width: f64,
    k01: f64,
    k11: f64,
    k21: f64,
    k02: f64,
    curve: Curve,
}

pub fn kernel_json(name: &str) -> Result<String, String> {
    let k = name.parse::<KernelSpec>().map_err(|e| e.to_string())?;
    let w = k.half_width();
    let x: Vec<f64> = (0..CURVE_POINTS)
        .map(|i| -1.25 * w + 2.5 * w * i as f64 / (CURVE_POINTS - 1) as f64)
        .collect();
    let y = x.iter().map(|&u| k.eval(u)).collect();
    let m = |i, j| k.moment(i, j).map_err(|e| e.to_string());
    let view = KernelView {
        name: k.name().to_string(),
        half_width: w,
        k01: m(0, 1)?,
        k11: m(1, 1)?,
        k21: m(2, 1)?,
        k02: m(0, 2)?,
        curve: Curve { x, y },
    };
    serde_json::to_string(&view).map_err(|e| e.to_string())
}

/// Overlap report plus both density curves for two pasted samples.
#[wasm_bindgen]
pub fn estimate(x: &str, y: &str, kernel: &str, bandwidth: &str, level: f64) -> Result<String, JsError> {
    estimate_json(x, y, kernel, bandwidth, level).map_err(|e| JsError::new(&e))
}

/// Histogram of the scaled statistic with its limiting normal density.
#[wasm_bindgen]
pub fn simulate(scenario: &str, n: usize, reps: usize, seed: u64, measure: &str) -> Result<String, JsError> {
    simulate_json(scenario, n, reps, seed, measure).map_err(|e| JsError::new(&e))
}

/// Kernel shape and moments.
#[wasm_bindgen]
pub fn kernel(name: &str) -> Result<String, JsError> {
    kernel_json(name).map_err(|e| JsError::new(&e))
}

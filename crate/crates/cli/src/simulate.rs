//! `overlap simulate`: replication study plus plot data.
//!
//! Every CSV starts with a `# ` comment line echoing the run parameters,
//! including the master seed.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use overlap_core::montecarlo::{
    normality_diagnostics, simulate_scenario, NormalityDiagnostics, ReplicationSet, Truth,
};
use overlap_core::{Measure, SimulationConfig, SupportInterval};
use serde::Serialize;

use crate::{CliError, SimulateArgs, SCHEMA_VERSION};

#[derive(Serialize)]
struct Summary<'a> {
    schema: u32,
    scenario: String,
    n: usize,
    reps: usize,
    seed: u64,
    kernel: &'a str,
    bandwidth: String,
    h: f64,
    grid: usize,
    support: SupportInterval,
    measure: Measure,
    ml_variance: String,
    level: f64,
    truth: &'a Truth,
    /// Theoretical variance of the statistic in qq.csv / histogram.csv.
    theoretical_variance: f64,
    empirical_mean: f64,
    empirical_variance: f64,
    /// `None` when fewer than 20 replicates were run.
    ks: Option<KsSummary>,
    coverage_pianka: f64,
    coverage_macarthur_levins: f64,
    negative_variance_replicates: usize,
}

#[derive(Serialize)]
struct KsSummary {
    statistic: f64,
    threshold_1pct: f64,
    accepts_normality_1pct: bool,
}

fn write(dir: &Path, name: &str, body: &str) -> Result<(), CliError> {
    let path = dir.join(name);
    fs::write(&path, body).map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display())))
}

fn mean_var(values: &[f64]) -> (f64, f64) {
    let m = values.len() as f64;
    let mean = values.iter().sum::<f64>() / m;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0)
    } else {
        f64::NAN
    };
    (mean, var)
}

fn opt_bool(b: Option<bool>) -> &'static str {
    match b {
        Some(true) => "1",
        Some(false) => "0",
        None => "",
    }
}

pub fn run(args: &SimulateArgs) -> Result<(), CliError> {
    let cfg = SimulationConfig {
        scenario: args.scenario,
        n: args.n,
        reps: args.reps,
        seed: args.seed,
        kernel: args.kernel.clone(),
        bandwidth: args.bandwidth,
        grid_points: args.grid,
        measure: args.measure,
        ml_mode: args.ml_variance,
        level: args.level,
    };
    cfg.validate()?;
    fs::create_dir_all(&args.out)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", args.out.display())))?;

    let set = simulate_scenario(&cfg)?;
    let values = set.values();
    let sigma2 = set.sigma2_theory();
    let diagnostics = if values.len() >= 20 {
        Some(normality_diagnostics(&values, sigma2)?)
    } else {
        None
    };

    let banner = format!(
        "# scenario={} n={} reps={} seed={} kernel={} bandwidth={} h={} measure={}\n",
        set.scenario, set.n, set.reps, set.seed, set.kernel, args.bandwidth, set.h, set.measure
    );
    write(&args.out, "replicates.csv", &replicates_csv(&banner, &set))?;
    write(&args.out, "qq.csv", &qq_csv(&banner, diagnostics.as_ref()))?;
    write(&args.out, "histogram.csv", &histogram_csv(&banner, diagnostics.as_ref()))?;

    let (empirical_mean, empirical_variance) = mean_var(&values);
    let summary = Summary {
        schema: SCHEMA_VERSION,
        scenario: set.scenario.to_string(),
        n: set.n,
        reps: set.reps,
        seed: set.seed,
        kernel: &set.kernel,
        bandwidth: args.bandwidth.to_string(),
        h: set.h,
        grid: set.grid_points,
        support: set.support,
        measure: set.measure,
        ml_variance: set.ml_mode.to_string(),
        level: set.level,
        truth: &set.truth,
        theoretical_variance: sigma2,
        empirical_mean,
        empirical_variance,
        ks: diagnostics.as_ref().map(|d| KsSummary {
            statistic: d.ks_statistic,
            threshold_1pct: d.ks_threshold_1pct,
            accepts_normality_1pct: d.ks_accepts,
        }),
        coverage_pianka: set.coverage(Measure::Pianka),
        coverage_macarthur_levins: set.coverage(Measure::MacarthurLevins),
        negative_variance_replicates: set.negative_variance_count(),
    };
    let mut json = serde_json::to_string_pretty(&summary)
        .map_err(|e| CliError::Input(format!("cannot serialise summary: {e}")))?;
    json.push('\n');
    write(&args.out, "summary.json", &json)?;

    let mut report = format!(
        "{} n={} reps={} seed={}: {} = {:.6}, h = {:.6}\n",
        set.scenario, set.n, set.reps, set.seed, set.measure, set.true_measure(), set.h
    );
    let _ = writeln!(report, "variance of scaled statistic: empirical {empirical_variance:.6}, theoretical {sigma2:.6}");
    match &diagnostics {
        Some(d) => {
            let _ = writeln!(
                report,
                "KS {:.4} vs 1% threshold {:.4}: {}",
                d.ks_statistic,
                d.ks_threshold_1pct,
                if d.ks_accepts { "normality not rejected" } else { "normality rejected" }
            );
        }
        None => report.push_str("KS test skipped (needs at least 20 replicates)\n"),
    }
    let _ = writeln!(report, "wrote replicates.csv, qq.csv, histogram.csv, summary.json to {}", args.out.display());
    crate::emit(&report)
}

fn replicates_csv(banner: &str, set: &ReplicationSet) -> String {
    let mut s = banner.to_string();
    s.push_str("index,seed,rho,delta,rho_stat,delta_stat,rho_plugin_variance,delta_plugin_variance,rho_covered,delta_covered\n");
    for r in &set.replicates {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.index,
            r.seed,
            r.rho,
            r.delta,
            r.rho_stat,
            r.delta_stat,
            r.rho_plugin_variance,
            r.delta_plugin_variance,
            opt_bool(r.rho_covered),
            opt_bool(r.delta_covered)
        );
    }
    s
}

fn qq_csv(banner: &str, d: Option<&NormalityDiagnostics>) -> String {
    let mut s = banner.to_string();
    s.push_str("theoretical,empirical\n");
    for q in d.map_or(&[][..], |d| &d.qq_pairs[..]) {
        let _ = writeln!(s, "{},{}", q.theoretical, q.empirical);
    }
    s
}

fn histogram_csv(banner: &str, d: Option<&NormalityDiagnostics>) -> String {
    let mut s = banner.to_string();
    s.push_str("lo,hi,count,density,normal_density\n");
    for b in d.map_or(&[][..], |d| &d.histogram[..]) {
        let _ = writeln!(s, "{},{},{},{},{}", b.lo, b.hi, b.count, b.density, b.normal_density);
    }
    s
}

//! Acceptance criteria AC-1 to AC-9.
//!
//! Runs without the libtest harness so every criterion prints exactly one
//! `AC-k PASS|FAIL` line, even when it passes. Pass criterion ids as
//! arguments to run a subset: `cargo test --test acceptance -- AC-4 AC-9`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use overlap_core::montecarlo::{
    moment_error, normality_diagnostics, replicate_rng, sample_truncated, simulate_scenario,
    variance_bound_check,
};
use overlap_core::{
    estimate_overlap, BandwidthRule, BuiltinKernel, EstimateConfig, Family, KernelSpec, Measure,
    MlVarianceMode, MomentKey, Sample, Scenario, SimulationConfig, SupportInterval,
    TruncatedDensity,
};
use rand::Rng;

const MASTER_SEED: u64 = 20_240_611;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_overlap")
}

fn data_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// k02 = 0.6 and k21 = 0.2 for Epanechnikov (1e-10), box k02 = 0.5, k11 = 0
/// for every built-in, under one second.
fn ac1() -> Outcome {
    let start = Instant::now();
    let epa = KernelSpec::builtin(BuiltinKernel::Epanechnikov);
    let bx = KernelSpec::builtin(BuiltinKernel::Box);
    let mut failures = Vec::new();
    if (epa.k02() - 0.6).abs() > 1e-10 {
        failures.push(format!("epanechnikov k02 = {}", epa.k02()));
    }
    if (epa.k21() - 0.2).abs() > 1e-10 {
        failures.push(format!("epanechnikov k21 = {}", epa.k21()));
    }
    if (bx.k02() - 0.5).abs() > 1e-10 {
        failures.push(format!("box k02 = {}", bx.k02()));
    }
    for kind in BuiltinKernel::ALL {
        let k = KernelSpec::builtin(kind);
        let k11 = k.moment(1, 1).unwrap();
        let k11_quad = k.quadrature_moment(1, 1);
        if k11.abs() > 1e-10 || k11_quad.abs() > 1e-10 {
            failures.push(format!("{} k11 = {k11} (quadrature {k11_quad})", kind.name()));
        }
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(1) {
        failures.push(format!("took {elapsed:?}"));
    }
    let listing = Command::new(bin()).args(["kernels", "--format", "csv"]).output().unwrap();
    let text = String::from_utf8_lossy(&listing.stdout);
    let listed_k02 = |name: &str| {
        text.lines()
            .find(|l| l.starts_with(&format!("{name},")))
            .and_then(|l| l.rsplit(',').next())
            .and_then(|v| v.parse::<f64>().ok())
    };
    let listed_ok = matches!(listed_k02("epanechnikov"), Some(v) if (v - 0.6).abs() < 1e-10)
        && matches!(listed_k02("box"), Some(v) if (v - 0.5).abs() < 1e-10);
    if !listing.status.success() || !listed_ok {
        failures.push(format!("`overlap kernels` listing unexpected:\n{text}"));
    }
    let detail = format!(
        "epanechnikov k02={:.12} k21={:.12}, box k02={:.12}, k11=0 for {} kernels, {:?}",
        epa.k02(),
        epa.k21(),
        bx.k02(),
        BuiltinKernel::ALL.len(),
        elapsed
    );
    if failures.is_empty() {
        outcome(true, detail)
    } else {
        outcome(false, format!("{detail}; {}", failures.join("; ")))
    }
}

fn random_family(rng: &mut impl Rng) -> Family {
    let loc = rng.random_range(-4.0..4.0);
    let scale = rng.random_range(0.5..4.0);
    if rng.random_bool(0.5) {
        Family::Normal { mean: loc, sd: scale }
    } else {
        Family::Logistic { location: loc, scale }
    }
}

/// 50 seeded sample pairs: 0 <= ρ <= 1 + 1e-9, ρ(x,x) = 1 ± 1e-6 and
/// Δ(f,g) Δ(g,f) = ρ² ± 1e-9, under 30 s.
fn ac2() -> Outcome {
    let start = Instant::now();
    let support = SupportInterval::symmetric(12.0).unwrap();
    let mut rng = replicate_rng(MASTER_SEED, 2);
    let mut worst_bound: f64 = 0.0;
    let mut worst_self: f64 = 0.0;
    let mut worst_product: f64 = 0.0;
    let mut failures = Vec::new();
    for pair in 0..50 {
        let (ff, gf) = (random_family(&mut rng), random_family(&mut rng));
        let n = rng.random_range(20..400);
        let f = TruncatedDensity::new(ff, support).unwrap();
        let g = TruncatedDensity::new(gf, support).unwrap();
        let x = Sample::new(sample_truncated(&f, n, &mut rng)).unwrap();
        let y = Sample::new(sample_truncated(&g, n, &mut rng)).unwrap();
        let cfg = EstimateConfig::default();
        let r = estimate_overlap(&x, &y, &cfg).unwrap().report;
        let rho = r.pianka.point;
        if !(0.0..=1.0 + 1e-9).contains(&rho) {
            failures.push(format!("pair {pair}: rho = {rho}"));
        }
        worst_bound = worst_bound.max(rho - 1.0);
        let product = r.macarthur_levins.point * r.macarthur_levins_reverse.point;
        worst_product = worst_product.max((product - rho * rho).abs());
        let same = estimate_overlap(&x, &x, &cfg).unwrap().report.pianka.point;
        worst_self = worst_self.max((same - 1.0).abs());
    }
    if worst_self > 1e-6 {
        failures.push(format!("max |rho(x,x) - 1| = {worst_self:e}"));
    }
    if worst_product > 1e-9 {
        failures.push(format!("max |Δ(f,g)Δ(g,f) - rho²| = {worst_product:e}"));
    }
    let elapsed = start.elapsed();
    if elapsed > Duration::from_secs(30) {
        failures.push(format!("took {elapsed:?}"));
    }
    let detail = format!(
        "50 pairs: max(rho - 1) = {worst_bound:.2e}, max |rho(x,x) - 1| = {worst_self:.2e}, \
         max |ΔΔ' - rho²| = {worst_product:.2e}, {elapsed:?}"
    );
    outcome(failures.is_empty(), if failures.is_empty() { detail } else { format!("{detail}; {}", failures.join("; ")) })
}

/// Case I, 200 replications: mean |I_n(1,1) - I(1,1)| strictly decreases from
/// n = 200 to n = 2000, and the n = 2000 error is below 0.005 I(1,1).
fn ac3() -> Outcome {
    let (f, g) = Scenario::CaseI.densities().unwrap();
    let key = MomentKey::new(1.0, 1.0).unwrap();
    let run = |n: usize| moment_error(&f, &g, &SimulationConfig::new(Scenario::CaseI, n, 200, MASTER_SEED), key).unwrap();
    let (e200, target) = run(200);
    let (e2000, _) = run(2000);
    let decreasing = e2000 < e200;
    let threshold = 0.005 * target;
    let small = e2000 < threshold;
    outcome(
        decreasing && small,
        format!(
            "I(1,1) = {target:.6e}; mean abs error n=200: {e200:.3e}, n=2000: {e2000:.3e} \
             (decreasing: {decreasing}); threshold 0.005 I(1,1) = {threshold:.3e} (met: {small})"
        ),
    )
}

/// Case I, n = 500, M = 500: KS distance of √(nh)(ρ_n - ρ) to N(0, σ²) below
/// 1.63/√500, and KS(n=500) <= KS(n=50) on the same master seed.
fn ac4() -> Outcome {
    let ks = |n: usize| {
        let set = simulate_scenario(&SimulationConfig::new(Scenario::CaseI, n, 500, MASTER_SEED)).unwrap();
        let values = set.values();
        let d = normality_diagnostics(&values, set.sigma2_theory()).unwrap();
        (d, set.sigma2_theory())
    };
    let (d500, sigma2) = ks(500);
    let (d50, _) = ks(50);
    let below = d500.ks_statistic < d500.ks_threshold_1pct;
    let monotone = d500.ks_statistic <= d50.ks_statistic;
    outcome(
        below && monotone,
        format!(
            "KS(500) = {:.4} vs 1% critical {:.4} (met: {below}); KS(50) = {:.4} (KS(500) <= KS(50): {monotone}); \
             statistic mean {:.4}, variance {:.4} vs theory {:.4}",
            d500.ks_statistic,
            d500.ks_threshold_1pct,
            d50.ks_statistic,
            d500.empirical_mean,
            d500.empirical_variance,
            sigma2
        ),
    )
}

fn case_i_n500_m1000() -> overlap_core::ReplicationSet {
    simulate_scenario(&SimulationConfig::new(Scenario::CaseI, 500, 1000, MASTER_SEED)).unwrap()
}

/// Case I, n = 500, M = 1000: the empirical variance of √(nh)(Δ_n - Δ) is
/// within 25% of exactly one of the two closed forms.
fn ac5(set: &overlap_core::ReplicationSet) -> Outcome {
    let stats = set.statistics(Measure::MacarthurLevins);
    let m = stats.len() as f64;
    let mean = stats.iter().sum::<f64>() / m;
    let var = stats.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (m - 1.0);
    let printed = set.truth.sigma2(Measure::MacarthurLevins, MlVarianceMode::AsPrinted);
    let rederived = set.truth.sigma2(Measure::MacarthurLevins, MlVarianceMode::Rederived);
    let within = |theory: f64| (var - theory).abs() <= 0.25 * theory;
    let (p, r) = (within(printed), within(rederived));
    let verdict = match (p, r) {
        (true, false) => "as_printed matches".to_string(),
        (false, true) => "rederived matches (the default)".to_string(),
        (true, true) => "both match, not discriminating".to_string(),
        (false, false) => "neither matches".to_string(),
    };
    outcome(
        r && !p,
        format!(
            "empirical variance {var:.5} (mean {mean:.4}); as_printed {printed:.5e} (ratio {:.3e}), \
             rederived {rederived:.5} (ratio {:.3}); {verdict}",
            var / printed,
            var / rederived
        ),
    )
}

/// Case I, n = 500, M = 1000: coverage of nominal 95% intervals for ρ in [0.90, 0.98].
fn ac6(set: &overlap_core::ReplicationSet) -> Outcome {
    let coverage = set.coverage(Measure::Pianka);
    let negative = set.negative_variance_count();
    outcome(
        (0.90..=0.98).contains(&coverage),
        format!("coverage {coverage:.3} over {} replications ({negative} with negative plug-in variance), target [0.90, 0.98]", set.len()),
    )
}

/// Monte Carlo n h ∫ Var f_n <= 1.05 k02 for Case I f at n = 50 and 500.
fn ac7() -> Outcome {
    let (f, _) = Scenario::CaseI.densities().unwrap();
    let k = KernelSpec::default();
    let mut parts = Vec::new();
    let mut pass = true;
    for n in [50, 500] {
        let b = variance_bound_check(&f, &k, BandwidthRule::SimulationDefault, n, 1000, MASTER_SEED, 1001).unwrap();
        pass &= b.holds;
        parts.push(format!("n={n}: {:.4} (h = {:.4})", b.scaled_integrated_variance, b.h));
    }
    outcome(pass, format!("{} vs bound 1.05 k02 = {:.4}", parts.join(", "), 1.05 * k.k02()))
}

/// Perimeter data, 212 per group, default 4.2 n^(-2/3) bandwidth:
/// ρ in [0.32, 0.36], and the report documents the 1.645 vs 1.96 multiplier.
fn ac8() -> Outcome {
    let path = data_path("wdbc_perimeter.csv");
    if !path.exists() {
        return outcome(false, format!("SKIPPED: dataset missing at {}", path.display()));
    }
    let run = |extra: &[&str]| {
        let out = Command::new(bin())
            .args(["estimate", "--data"])
            .arg(&path)
            .args(extra)
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        serde_json::from_slice::<serde_json::Value>(&out.stdout).unwrap()
    };
    let doc = run(&[]);
    let rho = doc["pianka"]["point"].as_f64().unwrap();
    let se = doc["pianka"]["se"].as_f64().unwrap();
    let h = doc["h"].as_f64().unwrap();
    let n = doc["n"].as_u64().unwrap();
    let documented = doc["notes"].as_array().unwrap().iter().any(|n| n.as_str().unwrap().contains("1.645"));
    let fine = run(&["--grid", "64001"]);
    let rho_fine = fine["pianka"]["point"].as_f64().unwrap();
    let in_range = (0.32..=0.36).contains(&rho);
    outcome(
        in_range && documented && n == 212,
        format!(
            "n = {n}, h = {h:.4}: rho = {rho:.4} (se {se:.4}; 64001-point grid: {rho_fine:.4}), target [0.32, 0.36] \
             (reference 0.3396, se 0.0117); multiplier note present: {documented}"
        ),
    )
}

fn simulate_into(dir: &Path, threads: &str) -> bool {
    Command::new(bin())
        .args(["simulate", "--scenario", "case_I", "--n", "50", "--reps", "200", "--seed", "7", "--out"])
        .arg(dir)
        .env("RAYON_NUM_THREADS", threads)
        .output()
        .unwrap()
        .status
        .success()
}

/// `overlap simulate` reruns produce byte-identical CSVs, serial and threaded.
fn ac9() -> Outcome {
    let root = std::env::temp_dir().join(format!("overlap-ac9-{}", std::process::id()));
    let runs = [("a", "1"), ("b", "1"), ("c", "4")];
    for (name, threads) in runs {
        if !simulate_into(&root.join(name), threads) {
            return outcome(false, format!("simulate run {name} failed"));
        }
    }
    let mut differing = Vec::new();
    for file in ["replicates.csv", "qq.csv", "histogram.csv", "summary.json"] {
        let a = fs::read(root.join("a").join(file)).unwrap();
        for other in ["b", "c"] {
            if fs::read(root.join(other).join(file)).unwrap() != a {
                differing.push(format!("{file} ({other})"));
            }
        }
    }
    let _ = fs::remove_dir_all(&root);
    outcome(
        differing.is_empty(),
        if differing.is_empty() {
            "3 runs (1, 1 and 4 threads): replicates.csv, qq.csv, histogram.csv, summary.json byte-identical".into()
        } else {
            format!("differing outputs: {}", differing.join(", "))
        },
    )
}

fn main() -> ExitCode {
    let filters: Vec<String> = std::env::args().skip(1).filter(|a| a.starts_with("AC-")).collect();
    let wanted = |id: &str| filters.is_empty() || filters.iter().any(|f| f == id);
    let mut failed = 0;
    let mut record = |id: &str, o: Outcome| {
        println!("{id} {}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    };
    type Check = fn() -> Outcome;
    let simple: [(&str, Check); 4] = [("AC-1", ac1), ("AC-2", ac2), ("AC-3", ac3), ("AC-4", ac4)];
    for (id, check) in simple {
        if wanted(id) {
            record(id, check());
        }
    }
    if wanted("AC-5") || wanted("AC-6") {
        let set = case_i_n500_m1000();
        if wanted("AC-5") {
            record("AC-5", ac5(&set));
        }
        if wanted("AC-6") {
            record("AC-6", ac6(&set));
        }
    }
    let rest: [(&str, Check); 3] = [("AC-7", ac7), ("AC-8", ac8), ("AC-9", ac9)];
    for (id, check) in rest {
        if wanted(id) {
            record(id, check());
        }
    }
    if failed > 0 {
        println!("acceptance: {failed} criterion(s) failed");
        ExitCode::FAILURE
    } else {
        println!("acceptance: all criteria passed");
        ExitCode::SUCCESS
    }
}

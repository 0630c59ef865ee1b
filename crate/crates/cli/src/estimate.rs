use std::fmt::Write as _;
use std::fs;

use overlap_core::{estimate_overlap, EstimateConfig, Measure, OverlapEstimate, OverlapReport, Sample};
use serde::{Deserialize, Serialize};

use crate::input::{read_column, read_grouped, Group};
use crate::{CliError, EstimateArgs, Format, MeasureChoice, SCHEMA_VERSION};

/// The arguments as resolved, echoed into every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub x: Option<String>,
    pub y: Option<String>,
    pub data: Option<String>,
    /// Labels of the `x` and `y` samples.
    pub groups: [String; 2],
    pub kernel: String,
    pub bandwidth: String,
    pub support: String,
    pub grid: usize,
    pub level: f64,
    pub ml_variance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub schema: u32,
    pub config: ConfigEcho,
    #[serde(flatten)]
    pub report: OverlapReport,
}

fn load(args: &EstimateArgs) -> Result<(Group, Group), CliError> {
    match (&args.x, &args.y, &args.data) {
        (Some(x), Some(y), None) => Ok((
            ("x".to_string(), read_column(x)?),
            ("y".to_string(), read_column(y)?),
        )),
        (None, None, Some(data)) => read_grouped(data, args.groups.as_deref()),
        _ => Err(CliError::Input("give either --x and --y, or --data".into())),
    }
}

pub fn run(args: &EstimateArgs) -> Result<(), CliError> {
    let ((gx, xs), (gy, ys)) = load(args)?;
    let x = Sample::new(xs).map_err(|e| CliError::Input(format!("group `{gx}`: {e}")))?;
    let y = Sample::new(ys).map_err(|e| CliError::Input(format!("group `{gy}`: {e}")))?;
    let cfg = EstimateConfig {
        kernel: args.kernel.clone(),
        bandwidth: args.bandwidth,
        support: args.support,
        grid_points: args.grid,
        level: args.level,
        ml_mode: args.ml_variance,
    };
    let analysis = estimate_overlap(&x, &y, &cfg)?;
    if args.format != Format::Text || args.out.is_some() {
        for w in &analysis.report.warnings {
            eprintln!("warning: {w}");
        }
    }
    let doc = ReportDocument {
        schema: SCHEMA_VERSION,
        config: ConfigEcho {
            x: args.x.as_ref().map(|p| p.display().to_string()),
            y: args.y.as_ref().map(|p| p.display().to_string()),
            data: args.data.as_ref().map(|p| p.display().to_string()),
            groups: [gx, gy],
            kernel: args.kernel.name().to_string(),
            bandwidth: args.bandwidth.to_string(),
            support: args.support.to_string(),
            grid: args.grid,
            level: args.level,
            ml_variance: args.ml_variance.to_string(),
        },
        report: analysis.report,
    };
    let text = match args.format {
        Format::Json => {
            let mut s = serde_json::to_string_pretty(&doc)
                .map_err(|e| CliError::Input(format!("cannot serialise report: {e}")))?;
            s.push('\n');
            s
        }
        Format::Csv => render_csv(&doc, args.measure),
        Format::Text => render_text(&doc, args.measure),
    };
    match &args.out {
        Some(path) => fs::write(path, text)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => crate::emit(&text),
    }
}

fn selected(report: &OverlapReport, choice: MeasureChoice) -> Vec<&OverlapEstimate> {
    let mut out = Vec::new();
    if choice != MeasureChoice::MacarthurLevins {
        out.push(&report.pianka);
    }
    if choice != MeasureChoice::Pianka {
        out.push(&report.macarthur_levins);
        out.push(&report.macarthur_levins_reverse);
    }
    out
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |v| v.to_string())
}

fn render_csv(doc: &ReportDocument, choice: MeasureChoice) -> String {
    let mut s = String::from("measure,orientation,point,variance,se,ci_lo,ci_hi,level,n,h\n");
    for e in selected(&doc.report, choice) {
        let _ = writeln!(
            s,
            "{},\"{}\",{},{},{},{},{},{},{},{}",
            e.measure,
            e.orientation,
            e.point,
            e.variance,
            opt(e.se),
            opt(e.ci.map(|c| c.lo)),
            opt(e.ci.map(|c| c.hi)),
            doc.report.level,
            e.n,
            e.h
        );
    }
    s
}

fn render_text(doc: &ReportDocument, choice: MeasureChoice) -> String {
    let r = &doc.report;
    let [gx, gy] = &doc.config.groups;
    let mut s = String::new();
    let _ = writeln!(s, "samples     {gx}: n = {}, {gy}: n = {}", r.n_x, r.n_y);
    let _ = writeln!(s, "kernel      {} (k02 = {:.6})", r.kernel, r.k02);
    let _ = writeln!(s, "bandwidth   {} -> h = {:.6}", r.bandwidth_rule, r.h);
    let _ = writeln!(s, "support     {} ({}), {} grid points", r.support, r.support_policy, r.grid_points);
    let _ = writeln!(s);
    for e in selected(r, choice) {
        let label = match (e.measure, e.orientation.as_str()) {
            (Measure::Pianka, _) => "pianka".to_string(),
            (_, "x,y") => format!("macarthur_levins({gx},{gy})"),
            _ => format!("macarthur_levins({gy},{gx})"),
        };
        let _ = write!(s, "{label:<28} {:.4}", e.point);
        match (e.se, e.ci) {
            (Some(se), Some(ci)) => {
                let _ = writeln!(
                    s,
                    "  se {:.4}  {:.0}% CI [{:.4}, {:.4}]",
                    se,
                    r.level * 100.0,
                    ci.lo,
                    ci.hi
                );
            }
            _ => {
                let _ = writeln!(s, "  (negative plug-in variance {:.3e})", e.variance);
            }
        }
    }
    for n in &r.notes {
        let _ = writeln!(s, "\nnote: {n}");
    }
    for w in &r.warnings {
        let _ = writeln!(s, "\nwarning: {w}");
    }
    s
}

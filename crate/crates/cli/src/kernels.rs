use std::fmt::Write as _;

use overlap_core::{BuiltinKernel, KernelSpec};
use serde::Serialize;

use crate::{CliError, Format};

/// `k_ij = ∫ u^i K(u)^j du` for the four pairs that matter.
#[derive(Serialize)]
struct KernelRow {
    name: &'static str,
    half_width: f64,
    k01: f64,
    k11: f64,
    k21: f64,
    k02: f64,
}

fn rows() -> Result<Vec<KernelRow>, CliError> {
    BuiltinKernel::ALL
        .iter()
        .map(|&kind| {
            let k = KernelSpec::builtin(kind);
            Ok(KernelRow {
                name: kind.name(),
                half_width: k.half_width(),
                k01: k.moment(0, 1)?,
                k11: k.moment(1, 1)?,
                k21: k.moment(2, 1)?,
                k02: k.moment(0, 2)?,
            })
        })
        .collect()
}

pub fn run(format: Format) -> Result<(), CliError> {
    let rows = rows()?;
    let mut s = String::new();
    match format {
        Format::Json => {
            s = serde_json::to_string_pretty(&rows)
                .map_err(|e| CliError::Input(format!("cannot serialise kernel table: {e}")))?;
            s.push('\n');
        }
        Format::Csv => {
            s.push_str("name,half_width,k01,k11,k21,k02\n");
            for r in &rows {
                let _ = writeln!(s, "{},{},{},{},{},{}", r.name, r.half_width, r.k01, r.k11, r.k21, r.k02);
            }
        }
        Format::Text => {
            let _ = writeln!(s, "{:<14}{:>8}{:>12}{:>12}{:>12}{:>12}", "kernel", "support", "k01", "k11", "k21", "k02");
            for r in &rows {
                let _ = writeln!(
                    s,
                    "{:<14}{:>8}{:>12.6}{:>12.6}{:>12.6}{:>12.6}",
                    r.name,
                    format!("±{}", r.half_width),
                    r.k01,
                    r.k11,
                    r.k21,
                    r.k02
                );
            }
        }
    }
    crate::emit(&s)
}

//! CSV ingestion.
//!
//! Files are UTF-8 with `.` as the decimal separator. A header row is optional
//! and is recognised by a first cell that does not parse as a number. Single-column
//! files hold one sample; two-column files hold `value,group` rows.

use std::fs::File;
use std::path::Path;

use crate::CliError;

/// A labelled sample.
pub type Group = (String, Vec<f64>);

/// Data rows as `(1-based file line, fields)`, header dropped.
type Rows = Vec<(u64, Vec<String>)>;

fn read_rows(path: &Path) -> Result<Rows, CliError> {
    let file = File::open(path)
        .map_err(|e| CliError::Input(format!("cannot read {}: {e}", path.display())))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
        let line = record.position().map_or(i as u64 + 1, |p| p.line());
        let fields: Vec<String> = record.iter().map(str::to_string).collect();
        if fields.iter().all(|f| f.is_empty()) {
            continue;
        }
        if i == 0 && parse_number(&fields[0]).is_none() {
            continue;
        }
        rows.push((line, fields));
    }
    if rows.is_empty() {
        return Err(CliError::Input(format!("{} contains no data rows", path.display())));
    }
    Ok(rows)
}

fn parse_number(s: &str) -> Option<f64> {
    // Rust also accepts "inf" and "NaN"; only finite decimals are data.
    s.parse::<f64>().ok().filter(|v| v.is_finite())
}

fn cell_value(path: &Path, line: u64, col: usize, cell: &str) -> Result<f64, CliError> {
    parse_number(cell).ok_or_else(|| {
        CliError::Input(format!(
            "{}: row {line}, column {}: `{cell}` is not a finite number",
            path.display(),
            col + 1
        ))
    })
}

/// One sample from a single-column file.
pub fn read_column(path: &Path) -> Result<Vec<f64>, CliError> {
    read_rows(path)?
        .iter()
        .map(|(line, fields)| {
            if fields.len() != 1 {
                return Err(CliError::Input(format!(
                    "{}: row {line} has {} columns; --x/--y files take one value per row \
                     (use --data for value,group files)",
                    path.display(),
                    fields.len()
                )));
            }
            cell_value(path, *line, 0, &fields[0])
        })
        .collect()
}

/// Two samples from a `value,group` file. With `groups = None` the file must
/// contain exactly two labels, taken in order of first appearance.
pub fn read_grouped(
    path: &Path,
    groups: Option<&[String]>,
) -> Result<(Group, Group), CliError> {
    let rows = read_rows(path)?;
    let mut labels: Vec<String> = Vec::new();
    let mut values: Vec<Vec<f64>> = Vec::new();
    for (line, fields) in &rows {
        if fields.len() != 2 {
            return Err(CliError::Input(format!(
                "{}: row {line} has {} columns, expected value,group",
                path.display(),
                fields.len()
            )));
        }
        let v = cell_value(path, *line, 0, &fields[0])?;
        let label = &fields[1];
        let k = match labels.iter().position(|l| l == label) {
            Some(k) => k,
            None => {
                labels.push(label.clone());
                values.push(Vec::new());
                labels.len() - 1
            }
        };
        values[k].push(v);
    }
    let pick = |name: &str| -> Result<Group, CliError> {
        let k = labels.iter().position(|l| l == name).ok_or_else(|| {
            CliError::Input(format!(
                "{}: group `{name}` not found (groups present: {})",
                path.display(),
                labels.join(", ")
            ))
        })?;
        Ok((name.to_string(), values[k].clone()))
    };
    match groups {
        Some([a, b]) => Ok((pick(a)?, pick(b)?)),
        Some(other) => Err(CliError::Input(format!(
            "--groups needs exactly two labels, got {}",
            other.len()
        ))),
        None if labels.len() == 2 => Ok((pick(&labels[0])?, pick(&labels[1])?)),
        None => Err(CliError::Input(format!(
            "{}: found {} groups ({}); pass --groups A,B to choose two",
            path.display(),
            labels.len(),
            labels.join(", ")
        ))),
    }
}

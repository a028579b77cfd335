//! CSV reading and writing for observation tables.
//!
//! Header row required. Columns `y`, `d`, `z1` always; `z2` for the joint
//! design, `h` for the parallel design. Other columns are read only when
//! named as covariates.

use std::path::Path;

use diiv_core::{BinaryColumn, DesignMode, DiivError, ObservationTable};

use crate::error::{CliError, CliResult};
use crate::report::fmt_real;

struct RawCsv {
    headers: Vec<String>,
    rows: Vec<csv::StringRecord>,
}

impl RawCsv {
    fn column(&self, name: &str) -> CliResult<Vec<f64>> {
        let idx = self
            .headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| DiivError::MissingColumn(name.to_string()))?;
        self.rows
            .iter()
            .enumerate()
            .map(|(i, rec)| {
                let field = rec.get(idx).unwrap_or("");
                field.parse::<f64>().map_err(|_| {
                    // Row numbers are 1-based and count the header.
                    CliError::Csv(format!("line {}: column `{name}` holds `{field}`, not a number", i + 2))
                })
            })
            .collect()
    }

    fn has(&self, name: &str) -> bool {
        self.headers.iter().any(|h| h == name)
    }
}

fn read_raw(path: &Path) -> CliResult<RawCsv> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_error(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    let rows = reader
        .records()
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| csv_error(path, e))?;
    Ok(RawCsv { headers, rows })
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => CliError::io(path, source),
        other => CliError::Csv(format!("{}: {other:?}", path.display())),
    }
}

/// Layout implied by the header when no design is forced.
fn detect_mode(raw: &RawCsv) -> CliResult<DesignMode> {
    if raw.has("z2") {
        Ok(DesignMode::Joint)
    } else if raw.has("h") {
        Ok(DesignMode::Parallel)
    } else {
        Err(DiivError::MissingColumn("z2 or h".into()).into())
    }
}

pub fn read_table(path: &Path, design: Option<DesignMode>, covariates: &[String]) -> CliResult<ObservationTable> {
    let raw = read_raw(path)?;
    // Required columns are checked in a fixed order so the reported missing
    // column does not depend on the design.
    let y = raw.column("y")?;
    let d = BinaryColumn::from_reals("d", &raw.column("d")?)?;
    let z1 = BinaryColumn::from_reals("z1", &raw.column("z1")?)?;
    let mode = match design {
        Some(m) => m,
        None => detect_mode(&raw)?,
    };
    let mut table = match mode {
        DesignMode::Joint => {
            let z2 = BinaryColumn::from_reals("z2", &raw.column("z2")?)?;
            ObservationTable::joint(y, d, z1, z2)?
        }
        DesignMode::Parallel => {
            let h = BinaryColumn::from_reals("h", &raw.column("h")?)?;
            ObservationTable::parallel(y, d, z1, h)?
        }
    };
    for name in covariates {
        table = table.with_covariate(name.as_str(), raw.column(name)?)?;
    }
    Ok(table)
}

/// Writes `y,d,z1,z2` or `y,d,z1,h` with round-trip formatting.
pub fn write_table(path: &Path, table: &ObservationTable) -> CliResult<()> {
    let (label, second) = match (table.z2(), table.h()) {
        (Some(z2), _) => ("z2", z2),
        (None, Some(h)) => ("h", h),
        (None, None) => unreachable!("table construction requires z2 or h"),
    };
    let mut out = format!("y,d,z1,{label}\n");
    for i in 0..table.n() {
        out.push_str(&format!(
            "{},{},{},{}\n",
            fmt_real(table.y()[i]),
            table.d().get(i),
            table.z1().get(i),
            second.get(i)
        ));
    }
    std::fs::write(path, out).map_err(|e| CliError::io(path, e))
}

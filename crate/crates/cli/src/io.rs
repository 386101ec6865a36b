//! CSV and mask file formats.
//!
//! Matrices are dense row-major CSV without a header; marginals are one value
//! per line; masks are grids of `0`/`1`. Floats are written with 17
//! significant digits so they round-trip exactly.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use otm_core::solvers::SolveResult;
use otm_core::{Marginal, SupportMask};

use crate::error::CliError;

/// Scientific notation with 17 significant digits.
pub fn format_float(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_float(field: &str, path: &Path, line: usize) -> Result<f64, CliError> {
    field.trim().parse::<f64>().map_err(|_| {
        CliError::Setup(format!(
            "{}:{line}: cannot parse {:?} as a number",
            path.display(),
            field.trim()
        ))
    })
}

fn csv_rows(path: &Path) -> Result<Vec<Vec<f64>>, CliError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))?;
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))?;
        if record.iter().all(|f| f.is_empty()) {
            continue;
        }
        let line = record.position().map_or(0, |p| p.line() as usize);
        let row = record
            .iter()
            .map(|f| parse_float(f, path, line))
            .collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
    }
    Ok(rows)
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>, CliError> {
    let rows = csv_rows(path)?;
    let Some(first) = rows.first() else {
        return Err(CliError::Setup(format!("{}: empty matrix file", path.display())));
    };
    let cols = first.len();
    if let Some(i) = rows.iter().position(|r| r.len() != cols) {
        return Err(CliError::Setup(format!(
            "{}: row {} has {} entries, expected {cols}",
            path.display(),
            i + 1,
            rows[i].len()
        )));
    }
    Ok(DMatrix::from_row_iterator(rows.len(), cols, rows.into_iter().flatten()))
}

pub fn read_marginal(path: &Path) -> Result<Marginal, CliError> {
    let rows = csv_rows(path)?;
    if let Some(i) = rows.iter().position(|r| r.len() != 1) {
        return Err(CliError::Setup(format!(
            "{}: marginal files hold one value per line (line {} has {})",
            path.display(),
            i + 1,
            rows[i].len()
        )));
    }
    Marginal::new(rows.into_iter().flatten().collect::<Vec<_>>())
        .map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))
}

pub fn read_mask(path: &Path) -> Result<SupportMask, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))?;
    text.parse()
        .map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Setup(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| CliError::Setup(format!("{}: {e}", path.display())))
}

pub fn write_matrix(path: &Path, m: &DMatrix<f64>) -> Result<(), CliError> {
    let mut out = String::new();
    for row in m.row_iter() {
        let fields: Vec<String> = row.iter().map(|x| format_float(*x)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    write_text(path, &out)
}

pub fn write_marginal(path: &Path, w: &Marginal) -> Result<(), CliError> {
    let mut out = String::new();
    for x in w.as_slice() {
        out.push_str(&format_float(*x));
        out.push('\n');
    }
    write_text(path, &out)
}

pub const TRACE_HEADER: &str = "iter,elapsed_sec,cost,grad_norm,step_size";

/// Trace CSV. With `clock = false` the elapsed column is written as zero,
/// which makes repeated runs byte-identical.
pub fn write_trace(path: &Path, result: &SolveResult, clock: bool) -> Result<(), CliError> {
    let mut out = Vec::new();
    let opt = |v: Option<f64>| v.map(format_float).unwrap_or_default();
    writeln!(out, "{TRACE_HEADER}").expect("write to Vec");
    for r in &result.trace {
        let elapsed = if clock { r.elapsed_sec } else { 0.0 };
        writeln!(
            out,
            "{},{},{},{},{}",
            r.iter,
            format_float(elapsed),
            format_float(r.cost),
            opt(r.grad_norm),
            opt(r.step_size)
        )
        .expect("write to Vec");
    }
    write_text(path, &String::from_utf8(out).expect("ascii trace"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [0.1, 1.0 / 3.0, 2.0f64.sqrt() * 1e-300, -7.25e12, 0.0, f64::MIN_POSITIVE] {
            let s = format_float(x);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), x.to_bits(), "{s}");
            let digits = s
                .split('e')
                .next()
                .unwrap()
                .chars()
                .filter(|c| c.is_ascii_digit())
                .count();
            assert!(digits >= 17, "{s}");
        }
    }

    #[test]
    fn matrix_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        let m = DMatrix::from_row_slice(2, 3, &[0.1, 0.2, 0.3, 1.0 / 3.0, 5e-20, 7.0]);
        write_matrix(&p, &m).unwrap();
        assert_eq!(read_matrix(&p).unwrap(), m);
    }

    #[test]
    fn ragged_matrix_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1,2\n3\n").unwrap();
        let err = read_matrix(&p).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn marginal_needs_single_column() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        fs::write(&p, "0.5\n0.25,0.25\n").unwrap();
        assert!(read_marginal(&p).is_err());
        fs::write(&p, "0.5\n 0.5 \n\n").unwrap();
        assert_eq!(read_marginal(&p).unwrap().as_slice(), &[0.5, 0.5]);
    }

    #[test]
    fn bad_number_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.csv");
        fs::write(&p, "1,2\n3,x\n").unwrap();
        let err = read_matrix(&p).unwrap_err().to_string();
        assert!(err.contains(":2:") && err.contains("\"x\""), "{err}");
    }
}

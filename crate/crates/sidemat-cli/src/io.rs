//! CSV ingestion and emission for panels, covariates, and masks.
//!
//! Numeric CSVs may carry one optional header row, detected when the first
//! row fails to parse as numbers. Outcome files may mark missing cells with
//! an empty field or the literal `NaN`; covariate files may not. Output uses
//! `%.10g`-style formatting.

use std::fmt::Write as _;
use std::path::Path;

use sidemat::mask::{MaskPattern, ObservationMask};
use sidemat::Matrix;

use crate::CliError;

/// A parsed numeric CSV: values plus, when missing cells were present, the
/// observation mask (missing cells hold 0.0 in `values`).
pub struct ParsedMatrix {
    pub values: Matrix,
    pub mask: Option<ObservationMask>,
}

pub fn read_matrix(path: &Path, allow_missing: bool) -> Result<ParsedMatrix, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    let mut rows: Vec<Vec<Option<f64>>> = Vec::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());

    let mut pending: Option<(usize, &str)> = lines.next();
    // header autodetection: a first row with any non-numeric, non-missing cell
    if let Some((_, first)) = pending {
        let looks_like_header = first
            .split(',')
            .any(|cell| parse_cell(cell).is_err() && !is_missing_cell(cell));
        if looks_like_header {
            pending = lines.next();
        }
    }

    let mut width: Option<usize> = None;
    while let Some((line_idx, line)) = pending {
        let mut row: Vec<Option<f64>> = Vec::new();
        for (col_idx, cell) in line.split(',').enumerate() {
            if is_missing_cell(cell) {
                if !allow_missing {
                    return Err(CliError::Parse {
                        path: path.display().to_string(),
                        line: line_idx + 1,
                        column: col_idx + 1,
                        message: "missing value not allowed in this file".to_string(),
                    });
                }
                row.push(None);
            } else {
                let v = parse_cell(cell).map_err(|message| CliError::Parse {
                    path: path.display().to_string(),
                    line: line_idx + 1,
                    column: col_idx + 1,
                    message,
                })?;
                row.push(Some(v));
            }
        }
        if let Some(w) = width {
            if row.len() != w {
                return Err(CliError::Parse {
                    path: path.display().to_string(),
                    line: line_idx + 1,
                    column: row.len().min(w) + 1,
                    message: format!("ragged row: {} cells where previous rows had {w}", row.len()),
                });
            }
        } else {
            width = Some(row.len());
        }
        rows.push(row);
        pending = lines.next();
    }

    let nrows = rows.len();
    let ncols = width.unwrap_or(0);
    if nrows == 0 || ncols == 0 {
        return Err(CliError::Parse {
            path: path.display().to_string(),
            line: 1,
            column: 1,
            message: "empty matrix".to_string(),
        });
    }

    let mut values = Matrix::zeros(nrows, ncols);
    let mut flags = vec![true; nrows * ncols];
    let mut any_missing = false;
    for (i, row) in rows.iter().enumerate() {
        for (j, cell) in row.iter().enumerate() {
            match cell {
                Some(v) => values[(i, j)] = *v,
                None => {
                    flags[i * ncols + j] = false;
                    any_missing = true;
                }
            }
        }
    }
    let mask = if any_missing {
        Some(
            ObservationMask::from_flags(nrows, ncols, flags, MaskPattern::Bernoulli)
                .expect("flag length matches by construction"),
        )
    } else {
        None
    };
    Ok(ParsedMatrix { values, mask })
}

fn is_missing_cell(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty() || t.eq_ignore_ascii_case("nan")
}

fn parse_cell(cell: &str) -> Result<f64, String> {
    let t = cell.trim();
    t.parse::<f64>()
        .map_err(|_| format!("expected a number, found {t:?}"))
        .and_then(|v| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(format!("non-finite value {t:?}"))
            }
        })
}

/// Read a 0/1 mask of the given shape.
pub fn read_mask(path: &Path, nrows: usize, ncols: usize) -> Result<ObservationMask, CliError> {
    let parsed = read_matrix(path, false)?;
    if parsed.values.nrows() != nrows || parsed.values.ncols() != ncols {
        return Err(CliError::Validation(format!(
            "mask {} is {}x{} but the outcome matrix is {nrows}x{ncols}",
            path.display(),
            parsed.values.nrows(),
            parsed.values.ncols()
        )));
    }
    let mut flags = vec![false; nrows * ncols];
    for i in 0..nrows {
        for j in 0..ncols {
            let v = parsed.values[(i, j)];
            if v == 0.0 {
                flags[i * ncols + j] = false;
            } else if v == 1.0 {
                flags[i * ncols + j] = true;
            } else {
                return Err(CliError::Parse {
                    path: path.display().to_string(),
                    line: i + 1,
                    column: j + 1,
                    message: format!("mask cells must be 0 or 1, found {v}"),
                });
            }
        }
    }
    Ok(ObservationMask::from_flags(nrows, ncols, flags, MaskPattern::Bernoulli)
        .expect("shape checked above"))
}

pub fn write_matrix(path: &Path, m: &Matrix) -> Result<(), CliError> {
    let mut out = String::new();
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if j > 0 {
                out.push(',');
            }
            let _ = write!(out, "{}", format_g10(m[(i, j)]));
        }
        out.push('\n');
    }
    std::fs::write(path, out).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// `%.10g`: ten significant digits, fixed-point when the (post-rounding)
/// decimal exponent is in [-4, 10), scientific otherwise, trailing zeros
/// trimmed.
pub fn format_g10(v: f64) -> String {
    if v == 0.0 {
        return if v.is_sign_negative() { "-0".to_string() } else { "0".to_string() };
    }
    // exponent after rounding to 10 significant digits
    let sci = format!("{:.9e}", v);
    let (mantissa, exp_str) = sci.split_once('e').expect("exponential format");
    let exp: i32 = exp_str.parse().expect("valid exponent");
    if (-4..10).contains(&exp) {
        let decimals = (9 - exp).max(0) as usize;
        let fixed = format!("{:.*}", decimals, v);
        trim_trailing_zeros(&fixed)
    } else {
        let trimmed = trim_trailing_zeros(mantissa);
        format!("{trimmed}e{}{:02}", if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_trailing_zeros(s: &str) -> String {
    if !s.contains('.') {
        return s.to_string();
    }
    let t = s.trim_end_matches('0').trim_end_matches('.');
    t.to_string()
}

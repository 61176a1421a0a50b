use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::linsolve::DenseMatrix;
use crate::series::TimeSeries;

/// Shortest-exact scientific notation with 17 significant digits.
pub fn format_value(v: f64) -> String {
    format!("{v:.16e}")
}

/// `# dt=…` and `# origin=…` comments, a `t,c0,…` header, one row per step.
pub fn series_to_csv(series: &TimeSeries) -> String {
    let mut s = String::new();
    writeln!(s, "# dt={}", format_value(series.dt())).unwrap();
    writeln!(s, "# origin={}", series.origin()).unwrap();
    s.push('t');
    for j in 0..series.dim() {
        write!(s, ",c{j}").unwrap();
    }
    s.push('\n');
    for (k, row) in series.rows().enumerate() {
        s.push_str(&format_value(k as f64 * series.dt()));
        for v in row {
            s.push(',');
            s.push_str(&format_value(*v));
        }
        s.push('\n');
    }
    s
}

pub fn save_csv(series: &TimeSeries, path: &Path) -> Result<()> {
    std::fs::write(path, series_to_csv(series))?;
    Ok(())
}

pub fn load_csv(path: &Path) -> Result<TimeSeries> {
    parse_csv(&std::fs::read_to_string(path)?)
}

pub fn parse_csv(text: &str) -> Result<TimeSeries> {
    let mut dt = None;
    let mut origin = String::from("csv");
    let mut width = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim_end_matches('\r');
        if let Some(comment) = line.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(v) = comment.strip_prefix("dt=") {
                dt = Some(parse_cell(v, line_no, "dt")?);
            } else if let Some(v) = comment.strip_prefix("origin=") {
                origin = v.to_string();
            }
            continue;
        }
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        let Some(w) = width else {
            if fields.first().map(|f| f.trim()) != Some("t") || fields.len() < 2 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "expected a header row `t,c0,...`".into(),
                });
            }
            width = Some(fields.len());
            continue;
        };
        if fields.len() != w {
            return Err(Error::Parse {
                line: line_no,
                message: format!(
                    "row {} has {} fields, header has {w} (decimal separator must be '.')",
                    rows + 1,
                    fields.len()
                ),
            });
        }
        for (col, cell) in fields.iter().enumerate() {
            let name = if col == 0 { "t".to_string() } else { format!("c{}", col - 1) };
            let v = parse_cell(cell, line_no, &format!("row {}, column {name}", rows + 1))?;
            if col > 0 {
                data.push(v);
            }
        }
        rows += 1;
    }
    let Some(w) = width else {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "no header row".into(),
        });
    };
    let dt = dt.ok_or_else(|| Error::Parse {
        line: 1,
        message: "missing `# dt=` comment".into(),
    })?;
    if rows == 0 {
        return Err(Error::Parse {
            line: text.lines().count().max(1),
            message: "no data rows".into(),
        });
    }
    TimeSeries::new(DenseMatrix::new(rows, w - 1, data)?, dt, origin)
}

fn parse_cell(cell: &str, line: usize, what: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() {
        return Err(Error::Parse {
            line,
            message: format!("missing value at {what}"),
        });
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            line,
            message: format!("`{cell}` at {what} is not a finite number"),
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn missing_cell_names_row_and_column() {
        let text = "# dt=1\nt,c0,c1\n0,1,2\n1,,3\n";
        match parse_csv(text) {
            Err(Error::Parse { line, message }) => {
                assert_eq!(line, 4);
                assert!(message.contains("row 2, column c0"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn comma_decimals_are_rejected() {
        let text = "# dt=1\nt,c0\n0,1,5\n";
        assert!(matches!(parse_csv(text), Err(Error::Parse { line: 3, .. })));
    }

    #[test]
    fn missing_dt_is_an_error() {
        assert!(parse_csv("t,c0\n0,1\n").is_err());
    }
}

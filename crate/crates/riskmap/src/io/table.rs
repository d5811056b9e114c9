//! Posterior summary tables: fixed-width text and CSV.

use std::path::Path;

use crate::diagnostics::PosteriorSummaryRow;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Summary table column names, in output order.
pub const TABLE_HEADER: [&str; 9] =
    ["Node", "Mean", "SD", "MC Error", "2.5%", "Median", "97.5%", "Start", "Sample"];

/// Formats `x` to `sig` significant digits, trimming trailing zeros;
/// magnitudes below 1e-3 switch to scientific notation.
pub fn format_sig(x: f64, sig: usize) -> String {
    assert!(sig > 0, "need at least one significant digit");
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return "0".to_string();
    }
    let a = x.abs();
    if a < 1e-3 {
        let s = format!("{:.*e}", sig - 1, x);
        let (mantissa, exponent) = s.split_once('e').expect("exponential format");
        let mantissa = mantissa.trim_end_matches('0').trim_end_matches('.');
        format!("{mantissa}e{exponent}")
    } else {
        let magnitude = a.log10().floor() as i64;
        let decimals = (sig as i64 - 1 - magnitude).max(0) as usize;
        let s = format!("{x:.decimals$}");
        if s.contains('.') {
            s.trim_end_matches('0').trim_end_matches('.').to_string()
        } else {
            s
        }
    }
}

fn row_cells<F: Scalar>(row: &PosteriorSummaryRow<F>) -> [String; 9] {
    [
        row.node.clone(),
        format_sig(row.mean.as_f64(), 6),
        format_sig(row.sd.as_f64(), 6),
        format_sig(row.mc_error.as_f64(), 6),
        format_sig(row.q2_5.as_f64(), 6),
        format_sig(row.median.as_f64(), 6),
        format_sig(row.q97_5.as_f64(), 6),
        row.start.to_string(),
        row.sample.to_string(),
    ]
}

/// Renders the fixed-width text table: header row, then one row per node,
/// columns separated by at least two spaces.
pub fn render_table<F: Scalar>(rows: &[PosteriorSummaryRow<F>]) -> String {
    let mut widths: Vec<usize> = TABLE_HEADER.iter().map(|h| h.len()).collect();
    let cells: Vec<[String; 9]> = rows.iter().map(row_cells).collect();
    for row in &cells {
        for (w, c) in widths.iter_mut().zip(row.iter()) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    let render_row = |out: &mut String, cols: &[String]| {
        for (k, (cell, width)) in cols.iter().zip(&widths).enumerate() {
            if k > 0 {
                out.push_str("  ");
            }
            if k == 0 {
                // Node column is left-aligned; numbers right-aligned.
                out.push_str(cell);
                out.extend(std::iter::repeat_n(' ', width - cell.len()));
            } else {
                out.extend(std::iter::repeat_n(' ', width - cell.len()));
                out.push_str(cell);
            }
        }
        while out.ends_with(' ') {
            out.pop();
        }
        out.push('\n');
    };
    let header: Vec<String> = TABLE_HEADER.iter().map(|s| s.to_string()).collect();
    render_row(&mut out, &header);
    for row in &cells {
        render_row(&mut out, row.as_slice());
    }
    out
}

/// Writes the machine-readable CSV variant with full-precision floats.
pub fn write_summary_csv<F: Scalar>(
    path: &Path,
    rows: &[PosteriorSummaryRow<F>],
) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TABLE_HEADER)?;
    for r in rows {
        w.write_record([
            r.node.as_str(),
            &r.mean.to_string(),
            &r.sd.to_string(),
            &r.mc_error.to_string(),
            &r.q2_5.to_string(),
            &r.median.to_string(),
            &r.q97_5.to_string(),
            &r.start.to_string(),
            &r.sample.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a summary CSV written by [`write_summary_csv`].
pub fn read_summary_csv<F: Scalar>(path: &Path) -> Result<Vec<PosteriorSummaryRow<F>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    if headers.iter().ne(TABLE_HEADER) {
        return Err(Error::Data(format!(
            "summary file {} does not have the expected columns",
            path.display()
        )));
    }
    let parse_f = |s: &str, what: &str| -> Result<F> {
        F::parse_str(s.trim())
            .ok_or_else(|| Error::Data(format!("bad {what} value '{s}' in summary file")))
    };
    let parse_n = |s: &str, what: &str| -> Result<usize> {
        s.trim()
            .parse()
            .map_err(|_| Error::Data(format!("bad {what} value '{s}' in summary file")))
    };
    let mut rows = Vec::new();
    for record in reader.records() {
        let rec = record?;
        if rec.len() != 9 {
            return Err(Error::Data("summary row does not have 9 columns".into()));
        }
        rows.push(PosteriorSummaryRow {
            node: rec[0].to_string(),
            mean: parse_f(&rec[1], "mean")?,
            sd: parse_f(&rec[2], "sd")?,
            mc_error: parse_f(&rec[3], "mc error")?,
            q2_5: parse_f(&rec[4], "2.5%")?,
            median: parse_f(&rec[5], "median")?,
            q97_5: parse_f(&rec[6], "97.5%")?,
            start: parse_n(&rec[7], "start")?,
            sample: parse_n(&rec[8], "sample")?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(node: &str, v: f64) -> PosteriorSummaryRow<f64> {
        PosteriorSummaryRow {
            node: node.to_string(),
            mean: v,
            sd: 0.01,
            mc_error: 6.916e-4,
            q2_5: v - 0.02,
            median: v,
            q97_5: v + 0.02,
            start: 1,
            sample: 20_000,
        }
    }

    #[test]
    fn significant_digit_formatting() {
        assert_eq!(format_sig(1.0, 6), "1");
        assert_eq!(format_sig(10.2, 6), "10.2");
        assert_eq!(format_sig(37.8, 6), "37.8");
        assert_eq!(format_sig(141.0, 6), "141");
        assert_eq!(format_sig(0.0006916, 6), "6.916e-4");
        assert_eq!(format_sig(-0.25, 6), "-0.25");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(123456.7, 6), "123457");
        assert_eq!(format_sig(0.001, 6), "0.001");
        assert_eq!(format_sig(-4.2e-7, 6), "-4.2e-7");
        assert_eq!(format_sig(2.5, 2), "2.5");
    }

    #[test]
    fn header_line_is_the_nine_column_schema() {
        let text = render_table(&[row("alpha0", 0.5)]);
        let first = text.lines().next().unwrap();
        assert_eq!(
            first.split("  ").filter(|s| !s.is_empty()).map(str::trim).collect::<Vec<_>>(),
            TABLE_HEADER.to_vec()
        );
    }

    #[test]
    fn table_is_aligned_and_complete() {
        let rows = vec![row("alpha0", 0.5), row("alpha1[1]", -0.123456789)];
        let text = render_table(&rows);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("alpha0 "));
        assert!(lines[2].starts_with("alpha1[1]"));
        assert!(lines[1].contains("20000"));
        // Every data line splits into exactly nine cells.
        for line in &lines[1..] {
            let cells: Vec<&str> = line.split("  ").filter(|s| !s.trim().is_empty()).collect();
            assert_eq!(cells.len(), 9, "{line}");
        }
    }

    #[test]
    fn csv_round_trips_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("summary.csv");
        let rows = vec![row("alpha0", 0.123456789123456789), row("tau", 2.0e-8)];
        write_summary_csv(&path, &rows).unwrap();
        let back: Vec<PosteriorSummaryRow<f64>> = read_summary_csv(&path).unwrap();
        assert_eq!(rows, back);
    }

    #[test]
    fn constant_node_renders_with_zero_spread() {
        let mut r = row("deviance", 42.0);
        r.sd = 0.0;
        r.mc_error = 0.0;
        r.q2_5 = 42.0;
        r.q97_5 = 42.0;
        let text = render_table(&[r]);
        let line = text.lines().nth(1).unwrap();
        let cells: Vec<&str> = line.split_whitespace().collect();
        assert_eq!(cells, ["deviance", "42", "0", "0", "42", "42", "42", "1", "20000"]);
    }
}

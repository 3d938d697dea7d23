//! Plain CSV and manifest writers. Comma-separated, `.` decimal, header
//! row, LF line endings, fixed `{:.12e}` float formatting so identical
//! runs produce byte-identical files.

use crate::error::Result;
use std::fs;
use std::io::Write;
use std::path::Path;

pub fn format_float(x: f64) -> String {
    if x == 0.0 {
        // Normalize -0.0 so byte comparisons are stable.
        return "0.000000000000e0".to_string();
    }
    format!("{x:.12e}")
}

/// Write a CSV file with a header and numeric rows.
pub fn write_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str(&header.join(","));
    out.push('\n');
    for row in rows {
        let cells: Vec<String> = row.iter().map(|x| format_float(*x)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Write a key,value text file (used for manifests and scalar reports).
pub fn write_kv(path: &Path, pairs: &[(String, String)]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    for (k, v) in pairs {
        out.push_str(k);
        out.push('=');
        out.push_str(v);
        out.push('\n');
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Emit a gnuplot script plotting the named columns of a sweep CSV.
pub fn write_plot_script(path: &Path, csv_name: &str, metrics: &[&str]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut out = String::new();
    out.push_str("set logscale xy\nset xlabel 'eps'\nset key left top\n");
    out.push_str("set datafile separator ','\n");
    out.push_str("plot \\\n");
    for (i, m) in metrics.iter().enumerate() {
        let sep = if i + 1 == metrics.len() { "\n" } else { ", \\\n" };
        out.push_str(&format!(
            "  '{csv_name}' using 1:{} with linespoints title '{m}'{sep}",
            i + 2
        ));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_is_deterministic() {
        let dir = std::env::temp_dir().join("knudsen_io_test");
        let p = dir.join("t.csv");
        let rows = vec![vec![1.0, -0.0, 2.5e-3], vec![0.1, 3.0, 4.0]];
        write_csv(&p, &["a", "b", "c"], &rows).unwrap();
        let first = std::fs::read(&p).unwrap();
        write_csv(&p, &["a", "b", "c"], &rows).unwrap();
        let second = std::fs::read(&p).unwrap();
        assert_eq!(first, second);
        assert!(String::from_utf8(first).unwrap().starts_with("a,b,c\n"));
    }
}

//! Matrix Market coordinate-pattern adjacency files and one-label-per-line
//! partition files.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{Partition, SparseBinaryMatrix};

const MM_HEADER: &str = "%%MatrixMarket matrix coordinate pattern general";

fn parse_err(location: impl Into<String>, message: impl Into<String>) -> Error {
    Error::Parse { location: location.into(), message: message.into() }
}

/// Writes `a` with 1-based row-sorted coordinates.
pub fn write_matrix_market<W: Write>(a: &SparseBinaryMatrix, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    writeln!(out, "{MM_HEADER}")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for (i, j) in a.coords() {
        writeln!(out, "{} {}", i + 1, j + 1)?;
    }
    out.flush()?;
    Ok(())
}

/// Reads a `coordinate pattern general` file. Any trailing value columns on
/// entry lines are rejected, as are duplicates and out-of-range indices.
pub fn read_matrix_market<R: Read>(input: R) -> Result<SparseBinaryMatrix> {
    let reader = BufReader::new(input);
    let mut lines = reader.lines().enumerate();

    let (_, header) = lines.next().ok_or_else(|| parse_err("line 1", "empty file"))?;
    let header = header?;
    let fields: Vec<String> = header.split_whitespace().map(str::to_ascii_lowercase).collect();
    if fields.len() != 5 || fields[0] != "%%matrixmarket" || fields[1] != "matrix" {
        return Err(parse_err("line 1", "missing %%MatrixMarket matrix banner"));
    }
    if fields[2] != "coordinate" || fields[3] != "pattern" || fields[4] != "general" {
        return Err(parse_err(
            "line 1",
            format!("unsupported format '{} {} {}', expected 'coordinate pattern general'", fields[2], fields[3], fields[4]),
        ));
    }

    let mut size: Option<(usize, usize, usize)> = None;
    let mut coords = Vec::new();
    for (idx, line) in lines {
        let line = line?;
        let loc = format!("line {}", idx + 1);
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('%') {
            continue;
        }
        let nums: Vec<usize> = trimmed
            .split_whitespace()
            .map(|t| t.parse::<usize>().map_err(|_| parse_err(&loc, format!("'{t}' is not a nonnegative integer"))))
            .collect::<Result<_>>()?;
        match size {
            None => {
                let [r, c, nnz] = nums[..] else {
                    return Err(parse_err(&loc, "size line must have three integers"));
                };
                coords.reserve(nnz);
                size = Some((r, c, nnz));
            }
            Some((r, c, _)) => {
                let [i, j] = nums[..] else {
                    return Err(parse_err(&loc, "entry line must have exactly two indices"));
                };
                if i == 0 || j == 0 || i > r || j > c {
                    return Err(parse_err(&loc, format!("entry ({i}, {j}) outside {r}x{c}")));
                }
                coords.push((i - 1, j - 1));
            }
        }
    }
    let (r, c, nnz) = size.ok_or_else(|| parse_err("end of file", "missing size line"))?;
    if coords.len() != nnz {
        return Err(parse_err("end of file", format!("header declares {nnz} entries, found {}", coords.len())));
    }
    SparseBinaryMatrix::from_coords(r, c, coords)
}

pub fn write_partition<W: Write>(z: &Partition, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for l in z.labels() {
        writeln!(out, "{l}")?;
    }
    out.flush()?;
    Ok(())
}

/// Reads one label per line; blank lines and `#` comments are skipped.
/// With `k = None` the community count is `max(label) + 1`.
pub fn read_partition<R: Read>(input: R, k: Option<usize>) -> Result<Partition> {
    let mut labels = Vec::new();
    for (idx, line) in BufReader::new(input).lines().enumerate() {
        let line = line?;
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') {
            continue;
        }
        let l = t
            .parse::<usize>()
            .map_err(|_| parse_err(format!("line {}", idx + 1), format!("'{t}' is not a label")))?;
        labels.push(l);
    }
    match k {
        Some(k) => Partition::new(labels, k),
        None => Partition::from_labels(labels),
    }
}

/// `%.6g`-style rendering: six significant digits, trailing zeros trimmed,
/// scientific notation outside `[1e-4, 1e6)`.
pub fn format_metric(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.5e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..6).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        return format!("{m}e{sign}{:02}", exp.abs());
    }
    let decimals = (5 - exp).max(0) as usize;
    trim_zeros(&format!("{x:.decimals$}")).to_string()
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

pub fn save_matrix_market(a: &SparseBinaryMatrix, path: &Path) -> Result<()> {
    write_matrix_market(a, File::create(path)?)
}

pub fn load_matrix_market(path: &Path) -> Result<SparseBinaryMatrix> {
    read_matrix_market(File::open(path)?)
}

pub fn save_partition(z: &Partition, path: &Path) -> Result<()> {
    write_partition(z, File::create(path)?)
}

pub fn load_partition(path: &Path, k: Option<usize>) -> Result<Partition> {
    read_partition(File::open(path)?, k)
}

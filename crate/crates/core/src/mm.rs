//! Matrix Market reading and writing.
//!
//! Coordinate files (`matrix coordinate real {general|symmetric}`) load into a
//! [`CsrMatrix`]. Symmetric files are expanded to full storage and duplicate
//! entries are summed. Dense `array` files are used to persist vectors and the
//! encoding matrix.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sparse::CsrMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Layout {
    Coordinate,
    Array,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Symmetry {
    General,
    Symmetric,
}

fn format_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Format {
        line,
        msg: msg.into(),
    }
}

fn parse_banner(line: &str) -> Result<(Layout, Symmetry)> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_ascii_lowercase).collect();
    if tokens.first().map(String::as_str) != Some("%%matrixmarket") {
        return Err(format_err(1, "missing %%MatrixMarket banner"));
    }
    if tokens.len() != 5 {
        return Err(format_err(1, "banner must have exactly five fields"));
    }
    if tokens[1] != "matrix" {
        return Err(Error::UnsupportedFormat(format!("object `{}`", tokens[1])));
    }
    let layout = match tokens[2].as_str() {
        "coordinate" => Layout::Coordinate,
        "array" => Layout::Array,
        other => return Err(format_err(1, format!("unknown format `{other}`"))),
    };
    match tokens[3].as_str() {
        "real" | "double" => {}
        "complex" | "pattern" | "integer" => {
            return Err(Error::UnsupportedFormat(format!("field `{}`", tokens[3])))
        }
        other => return Err(format_err(1, format!("unknown field `{other}`"))),
    }
    let symmetry = match tokens[4].as_str() {
        "general" => Symmetry::General,
        "symmetric" => Symmetry::Symmetric,
        "skew-symmetric" | "hermitian" => {
            return Err(Error::UnsupportedFormat(format!("symmetry `{}`", tokens[4])))
        }
        other => return Err(format_err(1, format!("unknown symmetry `{other}`"))),
    };
    Ok((layout, symmetry))
}

/// Yields (line number, trimmed line) for every non-comment, non-blank line
/// after the banner.
fn data_lines<R: BufRead>(reader: R) -> impl Iterator<Item = Result<(usize, String)>> {
    reader
        .lines()
        .enumerate()
        .filter_map(|(idx, line)| match line {
            Err(e) => Some(Err(Error::Io(e))),
            Ok(l) => {
                let t = l.trim();
                if t.is_empty() || t.starts_with('%') {
                    None
                } else {
                    Some(Ok((idx + 2, t.to_string())))
                }
            }
        })
}

fn parse_field<T: std::str::FromStr>(tok: Option<&str>, line: usize, what: &str) -> Result<T> {
    tok.ok_or_else(|| format_err(line, format!("missing {what}")))?
        .parse()
        .map_err(|_| format_err(line, format!("cannot parse {what}")))
}

fn read_banner<R: BufRead>(reader: &mut R) -> Result<(Layout, Symmetry)> {
    let mut first = String::new();
    reader.read_line(&mut first)?;
    parse_banner(first.trim())
}

/// Parses a `matrix coordinate real` file into full (both-triangle) CSR storage.
pub fn parse_matrix_market<R: BufRead>(mut reader: R) -> Result<CsrMatrix> {
    let (layout, symmetry) = read_banner(&mut reader)?;
    if layout != Layout::Coordinate {
        return Err(Error::UnsupportedFormat(
            "expected a coordinate file, found array".into(),
        ));
    }
    let mut lines = data_lines(reader);
    let (size_line, size) = lines
        .next()
        .ok_or_else(|| format_err(2, "missing size line"))??;
    let mut it = size.split_whitespace();
    let n_rows: usize = parse_field(it.next(), size_line, "row count")?;
    let n_cols: usize = parse_field(it.next(), size_line, "column count")?;
    let n_entries: usize = parse_field(it.next(), size_line, "entry count")?;
    if symmetry == Symmetry::Symmetric && n_rows != n_cols {
        return Err(format_err(size_line, "symmetric matrix must be square"));
    }

    let mut triplets = Vec::with_capacity(match symmetry {
        Symmetry::General => n_entries,
        Symmetry::Symmetric => 2 * n_entries,
    });
    let mut seen = 0usize;
    for item in lines {
        let (line_no, line) = item?;
        if seen == n_entries {
            return Err(format_err(line_no, "more entries than declared"));
        }
        let mut it = line.split_whitespace();
        let i: usize = parse_field(it.next(), line_no, "row index")?;
        let j: usize = parse_field(it.next(), line_no, "column index")?;
        let v: f64 = parse_field(it.next(), line_no, "value")?;
        if i == 0 || j == 0 || i > n_rows || j > n_cols {
            return Err(Error::Bounds {
                row: i,
                col: j,
                n_rows,
                n_cols,
            });
        }
        let (i, j) = (i - 1, j - 1);
        triplets.push((i, j, v));
        if symmetry == Symmetry::Symmetric && i != j {
            triplets.push((j, i, v));
        }
        seen += 1;
    }
    if seen != n_entries {
        return Err(format_err(
            0,
            format!("declared {n_entries} entries, found {seen}"),
        ));
    }
    CsrMatrix::from_triplets(n_rows, n_cols, &triplets)
}

/// Dense matrix read from a Matrix Market `array` file, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseArray {
    pub n_rows: usize,
    pub n_cols: usize,
    pub column_major: Vec<f64>,
}

/// Parses a `matrix array real general` file.
pub fn parse_mm_array<R: BufRead>(mut reader: R) -> Result<DenseArray> {
    let (layout, symmetry) = read_banner(&mut reader)?;
    if layout != Layout::Array || symmetry != Symmetry::General {
        return Err(Error::UnsupportedFormat(
            "expected `matrix array real general`".into(),
        ));
    }
    let mut lines = data_lines(reader);
    let (size_line, size) = lines
        .next()
        .ok_or_else(|| format_err(2, "missing size line"))??;
    let mut it = size.split_whitespace();
    let n_rows: usize = parse_field(it.next(), size_line, "row count")?;
    let n_cols: usize = parse_field(it.next(), size_line, "column count")?;
    let mut values = Vec::with_capacity(n_rows * n_cols);
    for item in lines {
        let (line_no, line) = item?;
        for tok in line.split_whitespace() {
            values.push(parse_field::<f64>(Some(tok), line_no, "value")?);
        }
    }
    if values.len() != n_rows * n_cols {
        return Err(format_err(
            0,
            format!(
                "declared {}x{} array, found {} values",
                n_rows,
                n_cols,
                values.len()
            ),
        ));
    }
    Ok(DenseArray {
        n_rows,
        n_cols,
        column_major: values,
    })
}

/// Writes a column-major dense array. Values use Rust's shortest round-trip
/// formatting, so a write/read cycle is lossless.
pub fn write_mm_array<W: Write>(
    mut out: W,
    n_rows: usize,
    n_cols: usize,
    column_major: &[f64],
) -> Result<()> {
    if column_major.len() != n_rows * n_cols {
        return Err(Error::Dimension(format!(
            "{} values for a {n_rows}x{n_cols} array",
            column_major.len()
        )));
    }
    writeln!(out, "%%MatrixMarket matrix array real general")?;
    writeln!(out, "{n_rows} {n_cols}")?;
    for v in column_major {
        writeln!(out, "{v:e}")?;
    }
    Ok(())
}

/// Writes a matrix in coordinate general format (all stored entries).
pub fn write_matrix_market<W: Write>(mut out: W, a: &CsrMatrix) -> Result<()> {
    writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
    writeln!(out, "{} {} {}", a.n_rows(), a.n_cols(), a.nnz())?;
    for i in 0..a.n_rows() {
        for (j, v) in a.row(i) {
            writeln!(out, "{} {} {v:e}", i + 1, j + 1)?;
        }
    }
    Ok(())
}

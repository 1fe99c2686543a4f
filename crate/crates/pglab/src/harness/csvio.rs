//! Deterministic CSV emission. Hand-rolled on purpose: the byte-identity
//! guarantees (same bytes across reruns and worker counts) are easier to
//! audit without a serialization layer in between.

use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

/// Shortest-round-trip decimal for a float; `Display` for `f64` is exact
/// and platform-independent, which is what byte-identity needs.
pub fn fmt_f64(x: f64) -> String {
    format!("{x}")
}

/// Validate one cell: no separators, quotes, or line breaks — the writer
/// refuses rather than quoting, since every schema here is numeric or a
/// bare identifier.
fn check_cell(cell: &str) -> Result<()> {
    if cell.is_empty() || cell.contains([',', '"', '\n', '\r']) {
        return Err(Error::InvalidConfig(format!(
            "CSV cell {cell:?} is empty or contains a separator"
        )));
    }
    Ok(())
}

/// Write `rows` under `header`, enforcing the schema: every row must have
/// exactly the header's arity and every cell must be a clean token.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<String>>,
{
    let mut text = String::new();
    for (i, col) in header.iter().enumerate() {
        check_cell(col)?;
        if i > 0 {
            text.push(',');
        }
        text.push_str(col);
    }
    text.push('\n');
    for (line, row) in rows.into_iter().enumerate() {
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "CSV row {} has {} cells but the header declares {}",
                line + 1,
                row.len(),
                header.len()
            )));
        }
        for (i, cell) in row.iter().enumerate() {
            check_cell(cell)?;
            if i > 0 {
                text.push(',');
            }
            text.push_str(cell);
        }
        text.push('\n');
    }
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::create(path)?;
    f.write_all(text.as_bytes())?;
    Ok(())
}

/// Parse a CSV written by [`write_csv`] back into (header, rows). Used by
/// tests and the plotting paths; not a general CSV reader.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::InvalidConfig(format!("{} is empty", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let row: Vec<String> = line.split(',').map(str::to_owned).collect();
        if row.len() != header.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} row {} has {} cells but the header declares {}",
                path.display(),
                i + 1,
                row.len(),
                header.len()
            )));
        }
        rows.push(row);
    }
    Ok((header, rows))
}

//! CSV dialect: comma separated, header row required, `#` lines ignored.
//! Feature columns are every column except an optional `label`.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use gmsdb::DataMatrix;

use crate::error::{CliError, CliResult};

pub const LABEL_COLUMN: &str = "label";

/// Features plus the untouched text of the label column, if any.
#[derive(Debug, Clone)]
pub struct Table {
    pub points: DataMatrix,
    pub labels: Option<Vec<String>>,
}

fn reader(path: &Path) -> CliResult<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(file))
}

pub fn read_table(path: &Path) -> CliResult<Table> {
    let mut rdr = reader(path)?;
    let header = rdr.headers()?.clone();
    let label_col = header.iter().position(|h| h == LABEL_COLUMN);
    let features: Vec<usize> = (0..header.len()).filter(|&c| Some(c) != label_col).collect();
    if features.is_empty() {
        return Err(CliError::Data(format!("{}: no feature columns", path.display())));
    }
    let mut values = Vec::new();
    let mut labels = label_col.map(|_| Vec::new());
    let mut n = 0;
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        for &c in &features {
            let cell = rec.get(c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Data(format!(
                    "{}: row {row}, column {} ('{}'): not a number: '{cell}'",
                    path.display(),
                    c + 1,
                    &header[c]
                ))
            })?;
            values.push(v);
        }
        if let (Some(c), Some(l)) = (label_col, labels.as_mut()) {
            l.push(rec.get(c).unwrap_or("").to_string());
        }
        n += 1;
    }
    if n == 0 {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    let points = DataMatrix::new(n, features.len(), values)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(Table { points, labels })
}

/// Reads one named column as text.
pub fn read_column(path: &Path, name: &str) -> CliResult<Vec<String>> {
    let mut rdr = reader(path)?;
    let col = rdr
        .headers()?
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Data(format!("{}: no '{name}' column", path.display())))?;
    let mut out = Vec::new();
    for rec in rdr.records() {
        out.push(rec?.get(col).unwrap_or("").to_string());
    }
    Ok(out)
}

pub fn has_column(path: &Path, name: &str) -> CliResult<bool> {
    Ok(reader(path)?.headers()?.iter().any(|h| h == name))
}

/// Writes rows under `header`, preceded by `comments` as `#` lines.
pub fn write_rows<I, R>(path: &Path, comments: &[String], header: &[String], rows: I) -> CliResult<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    let mut out = BufWriter::new(file);
    for c in comments {
        writeln!(out, "# {c}")?;
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn feature_header(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

/// Shortest text that parses back to the same `f64`; exponent form for
/// very small or large magnitudes.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

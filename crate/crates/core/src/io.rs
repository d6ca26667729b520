//! CSV ingestion with configurable missing-value tokens, and CSV emission.

use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use thiserror::Error;

use crate::error::FaError;
use crate::missing::MaskedMatrix;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read {path}: {source}")]
    Open {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}, column {column}: cannot parse '{token}' as a number")]
    Parse {
        row: usize,
        column: usize,
        token: String,
    },
    #[error("row {row} has {found} fields, expected {expected}")]
    Ragged {
        row: usize,
        found: usize,
        expected: usize,
    },
    #[error("no data rows")]
    Empty,
    #[error(transparent)]
    Model(#[from] FaError),
}

/// Header handling and missing-value tokens for CSV input.
#[derive(Debug, Clone, PartialEq)]
pub struct CsvOptions {
    pub has_header: bool,
    /// Compared case-insensitively after trimming; the empty field is always missing.
    pub missing_tokens: Vec<String>,
}

impl Default for CsvOptions {
    fn default() -> Self {
        Self {
            has_header: false,
            missing_tokens: vec!["NA".into(), "NaN".into()],
        }
    }
}

impl CsvOptions {
    fn is_missing(&self, field: &str) -> bool {
        let t = field.trim();
        t.is_empty() || self.missing_tokens.iter().any(|m| m.eq_ignore_ascii_case(t))
    }
}

/// A parsed table: optional column names and the masked values.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Option<Vec<String>>,
    pub data: MaskedMatrix,
}

pub fn read_csv_path(path: &Path, opts: &CsvOptions) -> Result<Table, DataError> {
    let file = std::fs::File::open(path).map_err(|source| DataError::Open {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(file, opts)
}

/// Parses a CSV document. Row and column numbers in errors are one-based and
/// count the header line when present.
pub fn read_csv<R: Read>(reader: R, opts: &CsvOptions) -> Result<Table, DataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_reader(reader);
    let mut records = rdr.records();
    let mut header = None;
    let mut line = 0;
    if opts.has_header {
        match records.next() {
            Some(rec) => {
                line += 1;
                header = Some(rec?.iter().map(|s| s.trim().to_string()).collect::<Vec<_>>());
            }
            None => return Err(DataError::Empty),
        }
    }
    let mut width = header.as_ref().map(Vec::len);
    let mut values: Vec<f64> = Vec::new();
    let mut mask: Vec<bool> = Vec::new();
    let mut rows = 0;
    for rec in records {
        let rec = rec?;
        line += 1;
        if rec.len() == 1 && rec.get(0).is_some_and(|f| f.trim().is_empty()) && width != Some(1) {
            continue;
        }
        let expected = *width.get_or_insert(rec.len());
        if rec.len() != expected {
            return Err(DataError::Ragged {
                row: line,
                found: rec.len(),
                expected,
            });
        }
        for (c, field) in rec.iter().enumerate() {
            if opts.is_missing(field) {
                values.push(f64::NAN);
                mask.push(false);
            } else {
                let v: f64 = field.trim().parse().map_err(|_| DataError::Parse {
                    row: line,
                    column: c + 1,
                    token: field.to_string(),
                })?;
                if !v.is_finite() {
                    return Err(DataError::Parse {
                        row: line,
                        column: c + 1,
                        token: field.to_string(),
                    });
                }
                values.push(v);
                mask.push(true);
            }
        }
        rows += 1;
    }
    let d = width.unwrap_or(0);
    if rows == 0 || d == 0 {
        return Err(DataError::Empty);
    }
    let data = MaskedMatrix::new(
        DMatrix::from_row_slice(rows, d, &values),
        DMatrix::from_row_slice(rows, d, &mask),
    )?;
    Ok(Table { header, data })
}

/// Writes a masked matrix as CSV with missing cells as empty fields.
pub fn write_masked_csv<W: Write>(
    writer: W,
    data: &MaskedMatrix,
    header: Option<&[String]>,
) -> Result<(), DataError> {
    let mut wtr = csv::WriterBuilder::new().from_writer(writer);
    if let Some(h) = header {
        wtr.write_record(h)?;
    }
    for r in 0..data.nrows() {
        let fields: Vec<String> = (0..data.ncols())
            .map(|c| data.get(r, c).map(|v| format!("{v:?}")).unwrap_or_default())
            .collect();
        wtr.write_record(&fields)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

//! Numeric CSV input.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use nalgebra::DMatrix;

/// Columns of a numeric CSV file, keyed by header.
#[derive(Clone, Debug)]
pub struct Table {
    headers: Vec<String>,
    columns: Vec<Vec<f64>>,
}

impl Table {
    pub fn from_reader<R: std::io::Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
        if headers.is_empty() {
            bail!("CSV has no header row");
        }
        let mut columns = vec![Vec::new(); headers.len()];
        for (i, record) in rdr.records().enumerate() {
            let row = i + 1;
            let record = record.with_context(|| format!("row {row}: malformed record"))?;
            if record.len() != headers.len() {
                bail!("row {row}: expected {} fields, found {}", headers.len(), record.len());
            }
            for (j, field) in record.iter().enumerate() {
                let v: f64 = field
                    .parse()
                    .map_err(|_| anyhow!("row {row}, column `{}`: cannot parse {field:?} as a number", headers[j]))?;
                columns[j].push(v);
            }
        }
        Ok(Self { headers, columns })
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path).with_context(|| format!("opening {}", path.display()))?;
        Self::from_reader(file).with_context(|| format!("reading {}", path.display()))
    }

    pub fn len(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        self.headers
            .iter()
            .position(|h| h == name)
            .map(|j| self.columns[j].as_slice())
            .ok_or_else(|| anyhow!("missing column `{name}` (found: {})", self.headers.join(", ")))
    }

    /// Named columns, or every column whose header starts with `prefix`.
    pub fn select(&self, names: Option<&[String]>, prefix: &str) -> Result<Vec<String>> {
        let chosen: Vec<String> = match names {
            Some(n) => n.to_vec(),
            None => self.headers.iter().filter(|h| h.starts_with(prefix)).cloned().collect(),
        };
        if chosen.is_empty() {
            bail!("missing column `{prefix}` (no column starts with `{prefix}`; found: {})", self.headers.join(", "));
        }
        Ok(chosen)
    }

    pub fn matrix(&self, names: &[String]) -> Result<DMatrix<f64>> {
        let cols = names.iter().map(|n| self.column(n)).collect::<Result<Vec<_>>>()?;
        Ok(DMatrix::from_fn(self.len(), cols.len(), |i, j| cols[j][i]))
    }
}

/// Checks that a treatment column is 0/1.
pub fn check_binary(name: &str, z: &[f64]) -> Result<()> {
    if let Some(i) = z.iter().position(|&v| v != 0.0 && v != 1.0) {
        bail!("column `{name}` must be 0 or 1; row {} has {}", i + 1, z[i]);
    }
    Ok(())
}

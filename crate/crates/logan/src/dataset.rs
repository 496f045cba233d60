//! Sample matrices with column roles.
//!
//! Columns follow a fixed canonical order: column 0 is the exposure,
//! columns 1..=d are mediators, column d+1 is the outcome. CSV ingestion
//! reorders arbitrary column layouts into this form. Estimation code works
//! on centered data, and the centering state travels with the matrix so a
//! raw dataset cannot slip into a fit.

use std::path::Path;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Dataset {
    values: Array2<f64>,
    names: Vec<String>,
    centered: bool,
}

impl Dataset {
    /// Wraps a matrix already in canonical column order.
    pub fn new(values: Array2<f64>, names: Vec<String>) -> Result<Self> {
        if values.ncols() < 3 {
            return Err(Error::Data(format!(
                "need at least exposure, one mediator and outcome columns, got {}",
                values.ncols()
            )));
        }
        if names.len() != values.ncols() {
            return Err(Error::Data(format!(
                "{} column names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.nrows() < 2 {
            return Err(Error::Data(format!("need at least 2 rows, got {}", values.nrows())));
        }
        if let Some(((i, j), v)) = values
            .indexed_iter()
            .find(|(_, v)| !v.is_finite())
        {
            return Err(Error::Data(format!(
                "non-finite value {v} at row {i}, column {}",
                names[j]
            )));
        }
        Ok(Dataset {
            values,
            names,
            centered: false,
        })
    }

    /// Default canonical names E, M1..Md, Y.
    pub fn default_names(d: usize) -> Vec<String> {
        let mut names = Vec::with_capacity(d + 2);
        names.push("E".to_string());
        for q in 1..=d {
            names.push(format!("M{q}"));
        }
        names.push("Y".to_string());
        names
    }

    pub fn n(&self) -> usize {
        self.values.nrows()
    }

    /// Total number of nodes, d + 2.
    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Number of mediators.
    pub fn d(&self) -> usize {
        self.dim() - 2
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn is_centered(&self) -> bool {
        self.centered
    }

    /// Mediator name for index q in 1..=d.
    pub fn mediator_name(&self, q: usize) -> &str {
        &self.names[q]
    }

    /// Column means of the raw data.
    pub fn column_means(&self) -> Vec<f64> {
        self.values
            .mean_axis(Axis(0))
            .map(|m| m.to_vec())
            .unwrap_or_default()
    }

    /// Centered copy: every column has its full-sample mean removed.
    /// Centering always uses the full sample, never a split half.
    pub fn centered(&self) -> Dataset {
        let means = self.values.mean_axis(Axis(0)).expect("non-empty dataset");
        let mut values = self.values.clone();
        for mut row in values.rows_mut() {
            row -= &means;
        }
        Dataset {
            values,
            names: self.names.clone(),
            centered: true,
        }
    }

    /// Owned copy of the given rows, in the given order.
    pub fn rows(&self, indices: &[usize]) -> Array2<f64> {
        self.values.select(Axis(0), indices)
    }

    /// Reads a CSV with a header row. `exposure` and `outcome` name those
    /// columns; remaining columns become mediators in file order. With
    /// `None` the first column is the exposure and the last the outcome.
    pub fn from_csv(
        path: &Path,
        exposure: Option<&str>,
        outcome: Option<&str>,
    ) -> Result<Dataset> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_path(path)
            .map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::Io {
                    path: path.display().to_string(),
                    source: std::io::Error::other(e.to_string()),
                },
                _ => Error::Data(format!("{}: {e}", path.display())),
            })?;
        let headers: Vec<String> = reader
            .headers()
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?
            .iter()
            .map(|h| h.trim().to_string())
            .collect();
        if headers.len() < 3 {
            return Err(Error::Data(format!(
                "{}: need at least 3 columns, got {}",
                path.display(),
                headers.len()
            )));
        }

        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::Data(format!("{}: no column named {name}", path.display())))
        };
        let exp_idx = match exposure {
            Some(name) => find(name)?,
            None => 0,
        };
        let out_idx = match outcome {
            Some(name) => find(name)?,
            None => headers.len() - 1,
        };
        if exp_idx == out_idx {
            return Err(Error::Data(format!(
                "{}: exposure and outcome are the same column",
                path.display()
            )));
        }

        // Canonical order: exposure, mediators in file order, outcome.
        let mut order = vec![exp_idx];
        order.extend((0..headers.len()).filter(|&i| i != exp_idx && i != out_idx));
        order.push(out_idx);

        let mut rows: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for (line, record) in reader.records().enumerate() {
            let record = record.map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
            if record.len() != headers.len() {
                return Err(Error::Data(format!(
                    "{}: row {} has {} fields, expected {}",
                    path.display(),
                    line + 2,
                    record.len(),
                    headers.len()
                )));
            }
            for &col in &order {
                let field = record.get(col).unwrap_or("");
                let value: f64 = field.trim().parse().map_err(|_| {
                    Error::Data(format!(
                        "{}: row {}, column {}: cannot parse {field:?} as a number",
                        path.display(),
                        line + 2,
                        headers[col]
                    ))
                })?;
                rows.push(value);
            }
            n += 1;
        }
        if n == 0 {
            return Err(Error::Data(format!("{}: no data rows", path.display())));
        }
        let values = Array2::from_shape_vec((n, headers.len()), rows)
            .map_err(|e| Error::Data(format!("{}: {e}", path.display())))?;
        let names = order.iter().map(|&i| headers[i].clone()).collect();
        Dataset::new(values, names)
    }

    /// Writes the dataset as CSV with a header row. Values are printed in
    /// shortest round-trip form, so reading the file back reproduces the
    /// exact same floats.
    pub fn to_csv(&self, path: &Path) -> Result<()> {
        let mut writer = csv::Writer::from_path(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        })?;
        let io_err = |e: csv::Error| Error::Io {
            path: path.display().to_string(),
            source: std::io::Error::other(e.to_string()),
        };
        writer.write_record(&self.names).map_err(io_err)?;
        for row in self.values.rows() {
            let fields: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writer.write_record(&fields).map_err(io_err)?;
        }
        writer.flush().map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Ok(())
    }
}

//! Datasets and CSV ingestion.

use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Response and lagged predictors.
///
/// Row `i` of `x` holds `x_{., t-1}` for observation `y_t`, `t = i + 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub y: Vec<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub timestamps: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(y: Vec<f64>, x: DMatrix<f64>, names: Vec<String>) -> Result<Self> {
        if y.len() < 2 {
            return Err(Error::invalid(format!("need at least 2 observations, got {}", y.len())));
        }
        if x.nrows() != y.len() {
            return Err(Error::DimensionMismatch {
                context: "dataset rows",
                expected: y.len(),
                actual: x.nrows(),
            });
        }
        if names.len() != x.ncols() {
            return Err(Error::DimensionMismatch {
                context: "predictor names",
                expected: x.ncols(),
                actual: names.len(),
            });
        }
        if x.ncols() == 0 {
            return Err(Error::invalid("need at least one predictor"));
        }
        if let Some(i) = y.iter().position(|v| !v.is_finite()) {
            return Err(Error::MissingValue {
                row: i,
                column: "y".into(),
            });
        }
        for j in 0..x.ncols() {
            if let Some(i) = x.column(j).iter().position(|v| !v.is_finite()) {
                return Err(Error::MissingValue {
                    row: i,
                    column: names[j].clone(),
                });
            }
        }
        Ok(Dataset {
            y,
            x,
            names,
            timestamps: None,
        })
    }

    pub fn with_timestamps(mut self, ts: Vec<String>) -> Result<Self> {
        if ts.len() != self.n() {
            return Err(Error::DimensionMismatch {
                context: "timestamps",
                expected: self.n(),
                actual: ts.len(),
            });
        }
        self.timestamps = Some(ts);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.y.len()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    /// Predictor `j` as a contiguous slice of length `n`.
    pub fn col(&self, j: usize) -> &[f64] {
        let n = self.n();
        &self.x.as_slice()[j * n..(j + 1) * n]
    }

    /// Observations `start..end` (zero-based, end exclusive).
    pub fn slice(&self, start: usize, end: usize) -> Result<Dataset> {
        if end > self.n() || start >= end {
            return Err(Error::invalid(format!("bad window {start}..{end} for n = {}", self.n())));
        }
        let x = self.x.rows(start, end - start).into_owned();
        let mut out = Dataset::new(self.y[start..end].to_vec(), x, self.names.clone())?;
        if let Some(ts) = &self.timestamps {
            out.timestamps = Some(ts[start..end].to_vec());
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    #[default]
    None,
    /// `(400/h) ln(P_t / P_{t-1})`.
    Inflation,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadOptions {
    pub target: String,
    pub date_column: Option<String>,
    /// Forecast horizon; `y_t` is paired with predictors observed `horizon` rows earlier.
    pub horizon: usize,
    pub transform: Transform,
    pub standardize: bool,
}

impl LoadOptions {
    pub fn new(target: impl Into<String>) -> Self {
        LoadOptions {
            target: target.into(),
            date_column: None,
            horizon: 1,
            transform: Transform::None,
            standardize: false,
        }
    }
}

/// `(400/h) ln(P_t / P_{t-1})` for `t = 1..len`; the first price has no transformed value.
pub fn inflation_transform(prices: &[f64], horizon: usize) -> Result<Vec<f64>> {
    if horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    prices
        .windows(2)
        .enumerate()
        .map(|(i, w)| {
            if w[0] <= 0.0 || w[1] <= 0.0 {
                Err(Error::Numeric(format!("non-positive price at row {}", i + 1)))
            } else {
                Ok(400.0 / horizon as f64 * (w[1] / w[0]).ln())
            }
        })
        .collect()
}

/// Reads a headed CSV. Every column other than the target and the date column is a predictor.
pub fn load_csv(path: impl AsRef<Path>, opts: &LoadOptions) -> Result<Dataset> {
    if opts.horizon == 0 {
        return Err(Error::invalid("horizon must be at least 1"));
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let target_idx = header
        .iter()
        .position(|h| *h == opts.target)
        .ok_or_else(|| Error::invalid(format!("target column '{}' not found", opts.target)))?;
    let date_idx = match &opts.date_column {
        Some(d) => Some(
            header
                .iter()
                .position(|h| h == d)
                .ok_or_else(|| Error::invalid(format!("date column '{d}' not found")))?,
        ),
        None => None,
    };
    let pred_idx: Vec<usize> = (0..header.len())
        .filter(|&c| c != target_idx && Some(c) != date_idx)
        .collect();

    let mut target = Vec::new();
    let mut preds: Vec<Vec<f64>> = Vec::new();
    let mut dates = Vec::new();
    for (r, rec) in rdr.records().enumerate() {
        let rec = rec?;
        // line number in the file, header is line 1
        let line = r + 2;
        let cell = |c: usize| -> Result<f64> {
            let raw = rec.get(c).unwrap_or("");
            if raw.is_empty() || raw.eq_ignore_ascii_case("na") || raw.eq_ignore_ascii_case("nan") {
                return Err(Error::MissingValue {
                    row: line,
                    column: header[c].clone(),
                });
            }
            raw.parse::<f64>().map_err(|e| Error::Parse {
                row: line,
                column: header[c].clone(),
                message: format!("'{raw}': {e}"),
            })
        };
        target.push(cell(target_idx)?);
        preds.push(pred_idx.iter().map(|&c| cell(c)).collect::<Result<_>>()?);
        if let Some(d) = date_idx {
            dates.push(rec.get(d).unwrap_or("").to_owned());
        }
    }

    let h = opts.horizon;
    // z[r] is the target value attached to raw row r (None where undefined)
    let z: Vec<Option<f64>> = match opts.transform {
        Transform::None => target.iter().map(|&v| Some(v)).collect(),
        Transform::Inflation => {
            let tr = inflation_transform(&target, h)?;
            std::iter::once(None).chain(tr.into_iter().map(Some)).collect()
        }
    };
    let rows: Vec<usize> = (h..target.len()).filter(|&r| z[r].is_some()).collect();
    if rows.len() < 2 {
        return Err(Error::invalid(format!(
            "only {} usable rows after lagging by {h}",
            rows.len()
        )));
    }
    let y: Vec<f64> = rows.iter().map(|&r| z[r].unwrap()).collect();
    let mut x = DMatrix::from_fn(rows.len(), pred_idx.len(), |i, j| preds[rows[i] - h][j]);
    if opts.standardize {
        standardize_columns(&mut x);
    }
    let names = pred_idx.iter().map(|&c| header[c].clone()).collect();
    let ds = Dataset::new(y, x, names)?;
    if date_idx.is_some() {
        ds.with_timestamps(rows.iter().map(|&r| dates[r].clone()).collect())
    } else {
        Ok(ds)
    }
}

/// Centers each column and scales it to unit sample standard deviation (constant columns are only centered).
pub fn standardize_columns(x: &mut DMatrix<f64>) {
    let n = x.nrows() as f64;
    for mut col in x.column_iter_mut() {
        let mean = col.iter().sum::<f64>() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0).max(1.0);
        let sd = var.sqrt();
        for v in col.iter_mut() {
            *v -= mean;
            if sd > 0.0 {
                *v /= sd;
            }
        }
    }
}

/// Writes a dataset in raw (unlagged) layout so that `load_csv` with target `y` and horizon 1 recovers it.
///
/// The file has `n + 1` rows: the first carries a placeholder response, the last zero predictors.
pub fn write_raw_csv(path: impl AsRef<Path>, data: &Dataset) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(f, "y")?;
    for name in &data.names {
        write!(f, ",{name}")?;
    }
    writeln!(f)?;
    let n = data.n();
    for r in 0..=n {
        let y = if r == 0 { 0.0 } else { data.y[r - 1] };
        write!(f, "{}", fmt_f64(y))?;
        for j in 0..data.p() {
            let v = if r < n { data.x[(r, j)] } else { 0.0 };
            write!(f, ",{}", fmt_f64(v))?;
        }
        writeln!(f)?;
    }
    f.flush()?;
    Ok(())
}

/// Scientific notation with 17 significant digits; round-trips every finite `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

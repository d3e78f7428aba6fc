//! Row-sample containers.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// An N×d matrix of row observations with optional integer labels.
///
/// All entries are finite; `N ≥ 1` and `d ≥ 1`. Immutable after
/// construction and safe to share across threads.
#[derive(Debug, Clone)]
pub struct SampleSet {
    data: Array2<f64>,
    labels: Option<Vec<i64>>,
}

impl SampleSet {
    /// Wraps a data matrix, validating shape and finiteness.
    pub fn new(data: Array2<f64>) -> Result<Self> {
        Self::validate(&data)?;
        Ok(Self { data, labels: None })
    }

    /// Wraps a data matrix with one label per row.
    pub fn with_labels(data: Array2<f64>, labels: Vec<i64>) -> Result<Self> {
        Self::validate(&data)?;
        if labels.len() != data.nrows() {
            return Err(Error::DimensionMismatch {
                context: "label vector vs rows",
                left: labels.len(),
                right: data.nrows(),
            });
        }
        Ok(Self {
            data,
            labels: Some(labels),
        })
    }

    /// Builds a sample set from row vectors.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        if rows.is_empty() {
            return Err(Error::InvalidInput("sample set must be nonempty".into()));
        }
        let d = rows[0].len();
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::InvalidInput(format!(
                    "ragged rows: row 0 has {} columns, row {} has {}",
                    d,
                    i,
                    r.len()
                )));
            }
        }
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        let data = Array2::from_shape_vec((rows.len(), d), flat)
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Self::new(data)
    }

    fn validate(data: &Array2<f64>) -> Result<()> {
        if data.nrows() == 0 || data.ncols() == 0 {
            return Err(Error::InvalidInput(format!(
                "sample set must have at least one row and one column, got {}x{}",
                data.nrows(),
                data.ncols()
            )));
        }
        for ((i, j), v) in data.indexed_iter() {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!(
                    "non-finite entry {v} at row {i}, column {j}"
                )));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.data.nrows()
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn data(&self) -> ArrayView2<'_, f64> {
        self.data.view()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.data.row(i)
    }

    pub fn labels(&self) -> Option<&[i64]> {
        self.labels.as_deref()
    }

    /// Stacks `self` on top of `other`. Labels are dropped; callers that
    /// need sample-origin indicators assign them explicitly.
    pub fn concat(&self, other: &SampleSet) -> Result<SampleSet> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                context: "concat feature dimension",
                left: self.dim(),
                right: other.dim(),
            });
        }
        let data = ndarray::concatenate(Axis(0), &[self.data.view(), other.data.view()])
            .map_err(|e| Error::InvalidInput(e.to_string()))?;
        Ok(SampleSet { data, labels: None })
    }

    /// Selects rows by index, preserving order. Labels follow the rows.
    pub fn subset(&self, indices: &[usize]) -> Result<SampleSet> {
        for &i in indices {
            if i >= self.n() {
                return Err(Error::InvalidInput(format!(
                    "row index {i} out of range for {} rows",
                    self.n()
                )));
            }
        }
        if indices.is_empty() {
            return Err(Error::InvalidInput("subset must be nonempty".into()));
        }
        let data = self.data.select(Axis(0), indices);
        let labels = self
            .labels
            .as_ref()
            .map(|l| indices.iter().map(|&i| l[i]).collect());
        Ok(SampleSet { data, labels })
    }
}

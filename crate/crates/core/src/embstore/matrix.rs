use std::collections::HashSet;

use crate::error::{Error, Result};

/// Maximum allowed deviation of a row's L2 norm from 1.0 for matrices
/// flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-4;

/// Dense row-major `n x d` matrix of `f32` embeddings with one ID per row.
///
/// Every constructor validates the invariants (finite values, unique IDs,
/// unit rows when flagged), so a value of this type is always well formed.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    rows: usize,
    dim: usize,
    data: Vec<f32>,
    normalized: bool,
    ids: Vec<String>,
}

impl EmbeddingMatrix {
    /// Builds a matrix from a flat row-major buffer.
    pub fn new(dim: usize, data: Vec<f32>, ids: Vec<String>, normalized: bool) -> Result<Self> {
        Self::with_context("matrix", dim, data, ids, normalized, true)
    }

    pub fn from_rows(rows: &[Vec<f32>], ids: Vec<String>, normalized: bool) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or_else(|| Error::Shape {
            context: "matrix".into(),
            reason: "cannot infer dimension from zero rows".into(),
        })?;
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != dim) {
            return Err(Error::Shape {
                context: "matrix".into(),
                reason: format!("row {i} has {} values, row 0 has {dim}", r.len()),
            });
        }
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(dim, data, ids, normalized)
    }

    /// Like [`EmbeddingMatrix::new`] but names the source in error messages
    /// and optionally skips the norm check for flagged matrices.
    pub(crate) fn with_context(
        context: &str,
        dim: usize,
        data: Vec<f32>,
        ids: Vec<String>,
        normalized: bool,
        check_norms: bool,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Shape {
                context: context.into(),
                reason: "dimension must be positive".into(),
            });
        }
        if data.len() % dim != 0 {
            return Err(Error::Shape {
                context: context.into(),
                reason: format!("{} values is not a multiple of d={dim}", data.len()),
            });
        }
        let rows = data.len() / dim;
        if ids.len() != rows {
            return Err(Error::Shape {
                context: context.into(),
                reason: format!("{} ids for {rows} rows", ids.len()),
            });
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: context.into(),
                row: pos / dim,
                col: pos % dim,
            });
        }
        check_unique_ids(context, &ids)?;
        let m = EmbeddingMatrix {
            rows,
            dim,
            data,
            normalized,
            ids,
        };
        if normalized && check_norms {
            m.check_normalization_in(context)?;
        }
        Ok(m)
    }

    /// An empty matrix with the given dimension.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::new(dim, Vec::new(), Vec::new(), true)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows == 0
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn id(&self, row: usize) -> &str {
        &self.ids[row]
    }

    pub fn as_slice(&self) -> &[f32] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f32] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    /// Row `i`, or an out-of-range error naming `what`.
    pub fn try_row(&self, what: &'static str, i: usize) -> Result<&[f32]> {
        if i < self.rows {
            Ok(self.row(i))
        } else {
            Err(Error::IndexOutOfRange {
                what,
                index: i,
                len: self.rows,
            })
        }
    }

    /// L2 norm of row `i`, accumulated in f64.
    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i)
            .iter()
            .map(|&x| f64::from(x) * f64::from(x))
            .sum::<f64>()
            .sqrt()
    }

    /// `max_i | ||row_i|| - 1 |`, or 0 for an empty matrix.
    pub fn max_norm_deviation(&self) -> f64 {
        (0..self.rows)
            .map(|i| (self.row_norm(i) - 1.0).abs())
            .fold(0.0, f64::max)
    }

    /// Verifies the unit-norm claim of a flagged matrix.
    pub fn check_normalization(&self) -> Result<()> {
        self.check_normalization_in("matrix")
    }

    fn check_normalization_in(&self, context: &str) -> Result<()> {
        for i in 0..self.rows {
            let norm = self.row_norm(i);
            if (norm - 1.0).abs() > NORM_TOLERANCE {
                return Err(Error::NotNormalized {
                    context: context.into(),
                    row: i,
                    norm,
                });
            }
        }
        Ok(())
    }

    /// Returns the matrix with every row scaled to unit L2 norm and the flag set.
    /// Already-flagged matrices are returned unchanged.
    pub fn into_normalized(self) -> Result<Self> {
        if self.normalized {
            return Ok(self);
        }
        let mut data = self.data;
        for (i, row) in data.chunks_exact_mut(self.dim).enumerate() {
            let norm = row
                .iter()
                .map(|&x| f64::from(x) * f64::from(x))
                .sum::<f64>()
                .sqrt();
            if norm == 0.0 {
                return Err(Error::Degenerate(format!("row {i} has zero norm")));
            }
            for x in row.iter_mut() {
                *x = (f64::from(*x) / norm) as f32;
            }
        }
        Ok(EmbeddingMatrix {
            data,
            normalized: true,
            ..self
        })
    }

    /// Row-subset copy, keeping IDs and flag.
    pub fn select_rows(&self, rows: &[usize]) -> Result<Self> {
        let mut data = Vec::with_capacity(rows.len() * self.dim);
        let mut ids = Vec::with_capacity(rows.len());
        for &r in rows {
            data.extend_from_slice(self.try_row("matrix rows", r)?);
            ids.push(self.ids[r].clone());
        }
        Self::with_context("matrix", self.dim, data, ids, self.normalized, false)
    }
}

pub(crate) fn check_unique_ids(context: &str, ids: &[String]) -> Result<()> {
    let mut seen = HashSet::with_capacity(ids.len());
    for (row, id) in ids.iter().enumerate() {
        if !seen.insert(id.as_str()) {
            return Err(Error::DuplicateId {
                context: context.into(),
                id: id.clone(),
                row,
            });
        }
    }
    Ok(())
}

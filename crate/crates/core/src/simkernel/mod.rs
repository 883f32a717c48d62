//! Exact top-K cosine retrieval and pairwise similarity.
//!
//! Retrieval runs in two phases. A blocked `f32` matrix product screens the
//! pool and keeps, per query, every row whose screening score lies within a
//! rounding-error margin of the running K-th best. The survivors are then
//! re-scored with `f64` accumulation and ranked by (score desc, index asc).
//! The margin bounds the worst-case `f32` dot-product error, so the final
//! ranking is the same as a full `f64` sort of the whole pool, and it does
//! not depend on block sizes or on the number of worker threads.
//!
//! [`Precision::Fast32`] skips the re-scoring and ranks directly by the
//! `f32` screening scores.
//!
//! Parallelism is across query blocks on the ambient rayon pool.

mod shortlist;

use std::borrow::Cow;
use std::ops::Range;

use rayon::prelude::*;

use crate::embstore::EmbeddingMatrix;
use crate::error::{Error, Result};
use shortlist::{ColumnShortlists, Shortlist};

/// Scoring arithmetic used for the final ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Precision {
    /// `f32` screening, then `f64` re-scoring of the survivors.
    #[default]
    Exact,
    /// `f32` screening scores only.
    Fast32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchOptions {
    pub precision: Precision,
    /// Queries per matrix-product block.
    pub query_block: usize,
    /// Pool rows per matrix-product block.
    pub pool_block: usize,
}

impl Default for SearchOptions {
    fn default() -> Self {
        SearchOptions {
            precision: Precision::Exact,
            query_block: 512,
            pool_block: 1024,
        }
    }
}

/// Top-K hits for one query, best first. Ties are ordered by ascending row index.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TopKResult {
    pub indices: Vec<usize>,
    pub scores: Vec<f64>,
}

impl TopKResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

/// Dot product accumulated in `f64`, left to right.
#[inline]
pub fn dot(a: &[f32], b: &[f32]) -> f64 {
    let mut acc = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        acc += f64::from(*x) * f64::from(*y);
    }
    // -0.0 + 0.0 is +0.0, so signed zeros never break ties
    acc + 0.0
}

/// Cosine similarity of two raw vectors.
pub fn cosine(a: &[f32], b: &[f32]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            left_name: "a".into(),
            left: a.len(),
            right_name: "b".into(),
            right: b.len(),
        });
    }
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine of a zero-norm vector".into()));
    }
    Ok(dot(a, b) / (na * nb))
}

/// Similarity of row `i` of `a` and row `j` of `b`: the plain dot product when
/// both matrices carry the normalized flag, the cosine otherwise.
///
/// This is the exact score that retrieval ranks by.
#[inline]
pub fn similarity(a: &EmbeddingMatrix, i: usize, b: &EmbeddingMatrix, j: usize) -> f64 {
    let d = dot(a.row(i), b.row(j));
    if a.is_normalized() && b.is_normalized() {
        d
    } else {
        d / (a.row_norm(i) * b.row_norm(j))
    }
}

/// Element-wise similarity of selected row pairs.
pub fn score_pairs(
    rows_a: &[usize],
    mat_a: &EmbeddingMatrix,
    rows_b: &[usize],
    mat_b: &EmbeddingMatrix,
) -> Result<Vec<f64>> {
    if rows_a.len() != rows_b.len() {
        return Err(Error::LengthMismatch {
            left_name: "rows_a".into(),
            left: rows_a.len(),
            right_name: "rows_b".into(),
            right: rows_b.len(),
        });
    }
    if mat_a.dim() != mat_b.dim() {
        return Err(dim_mismatch(mat_a, mat_b));
    }
    let cosine_mode = !(mat_a.is_normalized() && mat_b.is_normalized());
    rows_a
        .iter()
        .zip(rows_b)
        .map(|(&i, &j)| {
            mat_a.try_row("rows_a", i)?;
            mat_b.try_row("rows_b", j)?;
            if cosine_mode && (mat_a.row_norm(i) == 0.0 || mat_b.row_norm(j) == 0.0) {
                return Err(Error::Degenerate(format!("zero-norm row in pair ({i}, {j})")));
            }
            Ok(similarity(mat_a, i, mat_b, j))
        })
        .collect()
}

/// Top-`k` pool rows for every query row, with default options.
pub fn topk(queries: &EmbeddingMatrix, pool: &EmbeddingMatrix, k: usize) -> Result<Vec<TopKResult>> {
    topk_with(queries, pool, k, &SearchOptions::default())
}

pub fn topk_with(
    queries: &EmbeddingMatrix,
    pool: &EmbeddingMatrix,
    k: usize,
    opts: &SearchOptions,
) -> Result<Vec<TopKResult>> {
    let rows: Vec<usize> = (0..queries.rows()).collect();
    topk_rows(queries, &rows, pool, k, opts)
}

/// Top-`k` pool rows for the selected query rows, in the order given.
pub fn topk_rows(
    queries: &EmbeddingMatrix,
    rows: &[usize],
    pool: &EmbeddingMatrix,
    k: usize,
    opts: &SearchOptions,
) -> Result<Vec<TopKResult>> {
    validate(queries, pool, k, opts)?;
    if let Some(&bad) = rows.iter().find(|&&r| r >= queries.rows()) {
        return Err(Error::IndexOutOfRange {
            what: "query rows",
            index: bad,
            len: queries.rows(),
        });
    }
    if rows.is_empty() {
        return Ok(Vec::new());
    }
    let (q, p) = Side::pair(queries, pool)?;
    let k = k.min(pool.rows());
    let margin = screening_margin(&q, &p, opts.precision);
    let blocks: Vec<Vec<usize>> = rows.chunks(opts.query_block).map(<[usize]>::to_vec).collect();
    let out: Vec<Vec<TopKResult>> = blocks
        .par_iter()
        .map(|block| screen_block(&q, block, &p, k, margin, opts, None))
        .collect();
    Ok(out.into_iter().flatten().collect())
}

/// Retrieval in both directions from one pass over the similarity matrix.
///
/// Returns `(rows, cols)` where `rows[i]` equals `topk(queries, pool, k_rows)[i]`
/// and `cols[j]` equals `topk(pool, queries, k_cols)[j]`.
pub fn topk_both(
    queries: &EmbeddingMatrix,
    pool: &EmbeddingMatrix,
    k_rows: usize,
    k_cols: usize,
    opts: &SearchOptions,
) -> Result<(Vec<TopKResult>, Vec<TopKResult>)> {
    validate(queries, pool, k_rows, opts)?;
    validate(pool, queries, k_cols, opts)?;
    let (q, p) = Side::pair(queries, pool)?;
    let k_rows = k_rows.min(pool.rows());
    let k_cols = k_cols.min(queries.rows());
    let margin = screening_margin(&q, &p, opts.precision);

    let all: Vec<usize> = (0..queries.rows()).collect();
    let blocks: Vec<&[usize]> = all.chunks(opts.query_block).collect();
    let groups = split_even(blocks.len(), rayon::current_num_threads());

    let partials: Vec<(Vec<TopKResult>, ColumnShortlists)> = groups
        .into_par_iter()
        .map(|range| {
            let mut cols = ColumnShortlists::new(pool.rows(), k_cols, margin);
            let mut rows = Vec::new();
            for block in &blocks[range] {
                rows.extend(screen_block(&q, block, &p, k_rows, margin, opts, Some(&mut cols)));
            }
            (rows, cols)
        })
        .collect();

    let mut rows = Vec::with_capacity(queries.rows());
    let mut merged: Option<ColumnShortlists> = None;
    for (r, c) in partials {
        rows.extend(r);
        match merged.as_mut() {
            Some(m) => m.merge(c),
            None => merged = Some(c),
        }
    }
    let merged = merged.expect("at least one query block");
    let cols = merged
        .lists
        .into_par_iter()
        .enumerate()
        .map(|(j, list)| finish(list, k_cols, margin, opts.precision, |i| p.exact(j, &q, i)))
        .collect();
    Ok((rows, cols))
}

fn validate(
    queries: &EmbeddingMatrix,
    pool: &EmbeddingMatrix,
    k: usize,
    opts: &SearchOptions,
) -> Result<()> {
    if queries.dim() != pool.dim() {
        return Err(dim_mismatch(queries, pool));
    }
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if opts.query_block == 0 || opts.pool_block == 0 {
        return Err(Error::Config("block sizes must be positive".into()));
    }
    if pool.is_empty() {
        return Err(Error::EmptyPool);
    }
    if pool.rows() > u32::MAX as usize || queries.rows() > u32::MAX as usize {
        return Err(Error::Config("matrices larger than 2^32 rows are not supported".into()));
    }
    Ok(())
}

fn dim_mismatch(a: &EmbeddingMatrix, b: &EmbeddingMatrix) -> Error {
    Error::DimensionMismatch {
        left_name: "queries".into(),
        left: a.dim(),
        right_name: "pool".into(),
        right: b.dim(),
    }
}

/// One operand of a retrieval: the source matrix, the `f32` data used for
/// screening (unit-normalized copies in cosine mode) and exact row norms in
/// cosine mode.
struct Side<'a> {
    m: &'a EmbeddingMatrix,
    screen: Cow<'a, [f32]>,
    norms: Option<Vec<f64>>,
    max_norm: f64,
}

impl<'a> Side<'a> {
    fn pair(a: &'a EmbeddingMatrix, b: &'a EmbeddingMatrix) -> Result<(Side<'a>, Side<'a>)> {
        let cosine_mode = !(a.is_normalized() && b.is_normalized());
        Ok((Side::new(a, cosine_mode)?, Side::new(b, cosine_mode)?))
    }

    fn new(m: &'a EmbeddingMatrix, cosine_mode: bool) -> Result<Self> {
        if !cosine_mode {
            let max_norm = (0..m.rows()).map(|i| m.row_norm(i)).fold(0.0, f64::max);
            return Ok(Side {
                m,
                screen: Cow::Borrowed(m.as_slice()),
                norms: None,
                max_norm,
            });
        }
        let norms: Vec<f64> = (0..m.rows()).map(|i| m.row_norm(i)).collect();
        if let Some(i) = norms.iter().position(|&n| n == 0.0) {
            return Err(Error::Degenerate(format!("row {i} has zero norm")));
        }
        let mut data = m.as_slice().to_vec();
        for (row, n) in data.chunks_exact_mut(m.dim()).zip(&norms) {
            for x in row {
                *x = (f64::from(*x) / n) as f32;
            }
        }
        Ok(Side {
            m,
            screen: Cow::Owned(data),
            norms: Some(norms),
            max_norm: 1.0,
        })
    }

    #[inline]
    fn screen_row(&self, i: usize) -> &[f32] {
        let d = self.m.dim();
        &self.screen[i * d..(i + 1) * d]
    }

    /// Exact score of own row `i` against row `j` of `other`; equal to
    /// [`similarity`] for the same pair.
    #[inline]
    fn exact(&self, i: usize, other: &Side<'_>, j: usize) -> f64 {
        let d = dot(self.m.row(i), other.m.row(j));
        match (&self.norms, &other.norms) {
            (Some(a), Some(b)) => d / (a[i] * b[j]),
            _ => d,
        }
    }
}

/// Upper bound on `|screening score - exact score|`, doubled because the
/// survivor test compares two perturbed values.
fn screening_margin(q: &Side<'_>, p: &Side<'_>, precision: Precision) -> f32 {
    if precision == Precision::Fast32 {
        return 0.0;
    }
    // gamma_n = n u / (1 - n u) bounds an n-term f32 dot product relative to
    // sum |a_i b_i| <= ||a|| ||b||; the extra terms cover the normalized
    // copies and the f64 re-scoring.
    let u = f64::from(f32::EPSILON) / 2.0;
    let n = (q.m.dim() + 4) as f64;
    let gamma = n * u / (1.0 - n * u);
    let scale = (q.max_norm * p.max_norm).max(1.0);
    (2.0 * gamma * scale * 1.0001) as f32
}

fn screen_block(
    q: &Side<'_>,
    block: &[usize],
    p: &Side<'_>,
    k: usize,
    margin: f32,
    opts: &SearchOptions,
    mut cols: Option<&mut ColumnShortlists>,
) -> Vec<TopKResult> {
    let d = q.m.dim();
    let n = p.m.rows();
    let mut qbuf = Vec::with_capacity(block.len() * d);
    for &r in block {
        qbuf.extend_from_slice(q.screen_row(r));
    }
    let pb = opts.pool_block.min(n);
    let mut tile = vec![0.0f32; block.len() * pb];
    let mut lists = vec![Shortlist::new(k); block.len()];

    for start in (0..n).step_by(pb) {
        let width = pb.min(n - start);
        let tile = &mut tile[..block.len() * width];
        gemm_nt(&qbuf, block.len(), &p.screen[start * d..(start + width) * d], width, d, tile);
        for (list, scores) in lists.iter_mut().zip(tile.chunks_exact(width)) {
            list.offer(scores, start as u32, k, margin);
        }
        if let Some(cols) = cols.as_deref_mut() {
            for (&r, scores) in block.iter().zip(tile.chunks_exact(width)) {
                cols.offer_row(scores, start, r as u32);
            }
        }
    }

    lists
        .into_iter()
        .zip(block)
        .map(|(list, &qi)| finish(list, k, margin, opts.precision, |j| q.exact(qi, p, j)))
        .collect()
}

fn finish(
    mut list: Shortlist,
    k: usize,
    margin: f32,
    precision: Precision,
    exact: impl Fn(usize) -> f64,
) -> TopKResult {
    list.prune(k, margin);
    let mut scored: Vec<(f64, usize)> = match precision {
        Precision::Exact => list
            .items
            .iter()
            .map(|&(_, j)| (exact(j as usize), j as usize))
            .collect(),
        Precision::Fast32 => list
            .items
            .iter()
            .map(|&(s, j)| (f64::from(s), j as usize))
            .collect(),
    };
    scored.sort_unstable_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    scored.truncate(k);
    TopKResult {
        indices: scored.iter().map(|e| e.1).collect(),
        scores: scored.iter().map(|e| e.0).collect(),
    }
}

/// `c (m x n) = a (m x d) * b (n x d)^T`, all row-major.
fn gemm_nt(a: &[f32], m: usize, b: &[f32], n: usize, d: usize, c: &mut [f32]) {
    assert!(a.len() >= m * d && b.len() >= n * d && c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    // SAFETY: the assertion above keeps every strided access inside the
    // three slices; `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::sgemm(
            m,
            d,
            n,
            1.0,
            a.as_ptr(),
            d as isize,
            1,
            b.as_ptr(),
            1,
            d as isize,
            0.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Splits `0..len` into at most `parts` contiguous, nearly equal ranges.
fn split_even(len: usize, parts: usize) -> Vec<Range<usize>> {
    let parts = parts.clamp(1, len.max(1));
    (0..parts)
        .map(|i| (i * len / parts)..((i + 1) * len / parts))
        .filter(|r| !r.is_empty())
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[&[f32]], normalized: bool) -> EmbeddingMatrix {
        let v: Vec<Vec<f32>> = rows.iter().map(|r| r.to_vec()).collect();
        let ids = (0..rows.len()).map(|i| format!("r{i}")).collect();
        EmbeddingMatrix::from_rows(&v, ids, normalized).unwrap()
    }

    #[test]
    fn cosine_examples() {
        assert_eq!(cosine(&[1.0, 0.0], &[1.0, 0.0]).unwrap(), 1.0);
        assert_eq!(cosine(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        assert!((cosine(&[3.0, 4.0], &[4.0, 3.0]).unwrap() - 0.96).abs() < 1e-12);
        assert!(matches!(cosine(&[0.0, 0.0], &[1.0, 0.0]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn topk_basic_example() {
        let pool = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]], true);
        let q = mat(&[&[1.0, 0.0]], true);
        let r = &topk(&q, &pool, 2).unwrap()[0];
        assert_eq!(r.indices, vec![0, 2]);
        assert_eq!(r.scores[0], 1.0);
        assert!((r.scores[1] - 0.6).abs() < 1e-7);
    }

    #[test]
    fn topk_tie_breaks_on_lower_index() {
        let pool = mat(&[&[1.0, 0.0], &[1.0, 0.0]], true);
        let q = mat(&[&[1.0, 0.0]], true);
        assert_eq!(topk(&q, &pool, 1).unwrap()[0].indices, vec![0]);
    }

    #[test]
    fn topk_clamps_k() {
        let pool = mat(&[&[1.0, 0.0], &[0.0, 1.0], &[0.6, 0.8]], true);
        let q = mat(&[&[0.0, 1.0]], true);
        let r = &topk(&q, &pool, 5).unwrap()[0];
        assert_eq!(r.indices, vec![1, 2, 0]);
    }

    #[test]
    fn topk_errors() {
        let pool = mat(&[&[1.0, 0.0]], true);
        let q3 = mat(&[&[1.0, 0.0, 0.0]], true);
        assert!(matches!(topk(&q3, &pool, 1), Err(Error::DimensionMismatch { .. })));
        let empty = EmbeddingMatrix::empty(2).unwrap();
        let q = mat(&[&[1.0, 0.0]], true);
        assert!(matches!(topk(&q, &empty, 1), Err(Error::EmptyPool)));
        assert!(topk(&q, &pool, 0).is_err());
    }

    #[test]
    fn unnormalized_inputs_rank_by_cosine() {
        // [10, 0] has the larger dot product but the smaller cosine
        let pool = mat(&[&[10.0, 0.5], &[0.6, 0.8]], false);
        let q = mat(&[&[0.6, 0.8]], false);
        let r = &topk(&q, &pool, 2).unwrap()[0];
        assert_eq!(r.indices, vec![1, 0]);
        assert!((r.scores[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn score_pairs_checks_ranges() {
        let m = mat(&[&[1.0, 0.0], &[0.0, 1.0]], true);
        assert_eq!(score_pairs(&[0], &m, &[0], &m).unwrap(), vec![1.0]);
        assert!(score_pairs(&[], &m, &[], &m).unwrap().is_empty());
        assert!(matches!(
            score_pairs(&[2], &m, &[0], &m),
            Err(Error::IndexOutOfRange { index: 2, .. })
        ));
        assert!(score_pairs(&[0, 1], &m, &[0], &m).is_err());
    }

    #[test]
    fn split_even_covers_range() {
        let r = split_even(10, 3);
        assert_eq!(r, vec![0..3, 3..6, 6..10]);
        assert_eq!(split_even(2, 8), vec![0..1, 1..2]);
        assert!(split_even(0, 4).is_empty());
    }
}

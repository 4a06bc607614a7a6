//! Compressed-row sparse storage and the masked kernels the solver is built on.
//!
//! Every reduction here accumulates sequentially in ascending index order, so
//! identical inputs always produce bitwise-identical outputs.

use crate::error::{Error, Result};

/// Sparse matrix in compressed sparse row form.
///
/// Column indices are strictly increasing within each row. Symmetric matrices
/// are always stored with both triangles present.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a matrix from raw CSR arrays, checking every structural invariant.
    pub fn new(
        n_rows: usize,
        n_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if row_offsets.len() != n_rows + 1 {
            return Err(Error::Dimension(format!(
                "row_offsets has length {}, expected {}",
                row_offsets.len(),
                n_rows + 1
            )));
        }
        if col_indices.len() != values.len() {
            return Err(Error::Dimension(format!(
                "{} column indices for {} values",
                col_indices.len(),
                values.len()
            )));
        }
        if row_offsets[0] != 0 || row_offsets[n_rows] != values.len() {
            return Err(Error::Dimension(
                "row_offsets must start at 0 and end at nnz".into(),
            ));
        }
        for i in 0..n_rows {
            let (start, end) = (row_offsets[i], row_offsets[i + 1]);
            if start > end {
                return Err(Error::Dimension(format!(
                    "row_offsets decreases at row {i}"
                )));
            }
            for pos in start..end {
                let j = col_indices[pos];
                if j >= n_cols {
                    return Err(Error::Bounds {
                        row: i,
                        col: j,
                        n_rows,
                        n_cols,
                    });
                }
                if pos > start && col_indices[pos - 1] >= j {
                    return Err(Error::Dimension(format!(
                        "column indices not strictly increasing in row {i}"
                    )));
                }
            }
        }
        Ok(Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Assembles a matrix from (row, col, value) triplets. Duplicates are summed.
    pub fn from_triplets(
        n_rows: usize,
        n_cols: usize,
        triplets: &[(usize, usize, f64)],
    ) -> Result<Self> {
        for &(i, j, _) in triplets {
            if i >= n_rows || j >= n_cols {
                return Err(Error::Bounds {
                    row: i,
                    col: j,
                    n_rows,
                    n_cols,
                });
            }
        }
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        // stable sort keeps file order among duplicates, so the summation order is fixed
        sorted.sort_by_key(|&(i, j, _)| (i, j));

        let mut row_offsets = vec![0usize; n_rows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            if last == Some((i, j)) {
                *values.last_mut().expect("duplicate follows an entry") += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n_rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self::new(n_rows, n_cols, row_offsets, col_indices, values)
    }

    /// Builds a sparse matrix from a dense row-major array, dropping exact zeros.
    pub fn from_dense(n_rows: usize, n_cols: usize, dense: &[f64]) -> Result<Self> {
        if dense.len() != n_rows * n_cols {
            return Err(Error::Dimension(format!(
                "dense buffer has {} entries, expected {}",
                dense.len(),
                n_rows * n_cols
            )));
        }
        let mut triplets = Vec::new();
        for i in 0..n_rows {
            for j in 0..n_cols {
                let v = dense[i * n_cols + j];
                if v != 0.0 {
                    triplets.push((i, j, v));
                }
            }
        }
        Self::from_triplets(n_rows, n_cols, &triplets)
    }

    pub fn identity(n: usize) -> Self {
        let triplets: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        Self::from_triplets(n, n, &triplets).expect("identity is well formed")
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    /// Number of stored entries (both triangles for symmetric matrices).
    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Iterates the stored `(col, value)` pairs of row `i` in ascending column order.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Stored value at `(i, j)`, or zero.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let range = self.row_offsets[i]..self.row_offsets[i + 1];
        match self.col_indices[range.clone()].binary_search(&j) {
            Ok(pos) => self.values[range.start + pos],
            Err(_) => 0.0,
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// True when the matrix is square and every stored `(i, j, v)` has a stored
    /// transpose partner within `rel_tol * max|A|`.
    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        self.first_asymmetry(rel_tol).is_none() && self.n_rows == self.n_cols
    }

    pub(crate) fn first_asymmetry(&self, rel_tol: f64) -> Option<(usize, usize)> {
        if self.n_rows != self.n_cols {
            return Some((0, 0));
        }
        let tol = rel_tol * self.max_abs();
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                if (self.get(j, i) - v).abs() > tol {
                    return Some((i, j));
                }
            }
        }
        None
    }

    /// Unmasked product `A x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::Dimension(format!(
                "vector of length {} for {} columns",
                x.len(),
                self.n_cols
            )));
        }
        Ok((0..self.n_rows)
            .map(|i| {
                let mut acc = 0.0;
                for (j, v) in self.row(i) {
                    acc += v * x[j];
                }
                acc
            })
            .collect())
    }

    /// Dense row-major copy.
    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.n_rows * self.n_cols];
        for i in 0..self.n_rows {
            for (j, v) in self.row(i) {
                out[i * self.n_cols + j] = v;
            }
        }
        out
    }
}

/// A set of excluded component indices within `[0, universe_size)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IndexMask {
    excluded: Vec<usize>,
    flags: Vec<bool>,
}

impl IndexMask {
    /// Mask that excludes nothing.
    pub fn empty(universe_size: usize) -> Self {
        Self {
            excluded: Vec::new(),
            flags: vec![false; universe_size],
        }
    }

    pub fn new(universe_size: usize, excluded: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut mask = Self::empty(universe_size);
        for i in excluded {
            mask.exclude(i)?;
        }
        Ok(mask)
    }

    /// Adds `i` to the excluded set. Idempotent.
    pub fn exclude(&mut self, i: usize) -> Result<()> {
        if i >= self.flags.len() {
            return Err(Error::Bounds {
                row: i,
                col: 0,
                n_rows: self.flags.len(),
                n_cols: 1,
            });
        }
        if !self.flags[i] {
            self.flags[i] = true;
            let pos = self.excluded.partition_point(|&e| e < i);
            self.excluded.insert(pos, i);
        }
        Ok(())
    }

    #[inline]
    pub fn is_excluded(&self, i: usize) -> bool {
        self.flags[i]
    }

    pub fn excluded(&self) -> &[usize] {
        &self.excluded
    }

    pub fn universe_size(&self) -> usize {
        self.flags.len()
    }

    pub fn n_excluded(&self) -> usize {
        self.excluded.len()
    }

    /// Indices not excluded, ascending.
    pub fn viable(&self) -> impl Iterator<Item = usize> + '_ {
        self.flags
            .iter()
            .enumerate()
            .filter(|(_, &f)| !f)
            .map(|(i, _)| i)
    }
}

fn check_mask(mask: &IndexMask, len: usize, what: &str) -> Result<()> {
    if mask.universe_size() != len {
        return Err(Error::Dimension(format!(
            "{what} mask universe {} does not match length {len}",
            mask.universe_size()
        )));
    }
    Ok(())
}

/// Masked sparse product: for every row not excluded by `out_rows`, sums
/// `A_ij p_j` over columns not excluded by `mask`. Excluded rows are left at 0.0
/// and carry no meaning.
pub fn spmv_masked(
    a: &CsrMatrix,
    p: &[f64],
    mask: &IndexMask,
    out_rows: &IndexMask,
) -> Result<Vec<f64>> {
    if p.len() != a.n_cols() {
        return Err(Error::Dimension(format!(
            "vector of length {} for {} columns",
            p.len(),
            a.n_cols()
        )));
    }
    check_mask(mask, a.n_cols(), "column")?;
    check_mask(out_rows, a.n_rows(), "row")?;
    let mut out = vec![0.0; a.n_rows()];
    for (i, slot) in out.iter_mut().enumerate() {
        if out_rows.is_excluded(i) {
            continue;
        }
        let mut acc = 0.0;
        for (j, v) in a.row(i) {
            if !mask.is_excluded(j) {
                acc += v * p[j];
            }
        }
        *slot = acc;
    }
    Ok(out)
}

/// Inner product over the components not excluded by `mask`, ascending order.
pub fn inner_masked(u: &[f64], v: &[f64], mask: &IndexMask) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Dimension(format!(
            "inner product of lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    check_mask(mask, u.len(), "inner product")?;
    let mut acc = 0.0;
    for i in 0..u.len() {
        if !mask.is_excluded(i) {
            acc += u[i] * v[i];
        }
    }
    Ok(acc)
}

pub fn norm2_masked(v: &[f64], mask: &IndexMask) -> Result<f64> {
    Ok(inner_masked(v, v, mask)?.sqrt())
}

/// Unmasked 2-norm, ascending accumulation.
pub fn norm2(v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for x in v {
        acc += x * x;
    }
    acc.sqrt()
}

/// The 1-D model problem: tridiagonal with 2 on the diagonal and -1 beside it.
pub fn gen_ltridiag(n: usize) -> Result<CsrMatrix> {
    if n < 2 {
        return Err(Error::InvalidSize(format!(
            "tridiagonal model matrix needs n >= 2, got {n}"
        )));
    }
    let mut triplets = Vec::with_capacity(3 * n - 2);
    for i in 0..n {
        if i > 0 {
            triplets.push((i, i - 1, -1.0));
        }
        triplets.push((i, i, 2.0));
        if i + 1 < n {
            triplets.push((i, i + 1, -1.0));
        }
    }
    CsrMatrix::from_triplets(n, n, &triplets)
}

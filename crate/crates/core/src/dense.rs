//! Small dense linear algebra used for desk-scale diagnostics and oracles:
//! a cyclic Jacobi symmetric eigensolver, one-sided Jacobi singular values,
//! and a minimum-norm pseudoinverse solve for symmetric systems.

use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub n_rows: usize,
    pub n_cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> Self {
        Self {
            n_rows,
            n_cols,
            data: vec![0.0; n_rows * n_cols],
        }
    }

    pub fn from_row_major(n_rows: usize, n_cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n_rows * n_cols {
            return Err(Error::Dimension(format!(
                "{} values for a {n_rows}x{n_cols} matrix",
                data.len()
            )));
        }
        Ok(Self {
            n_rows,
            n_cols,
            data,
        })
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.n_cols + j] = v;
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.n_rows).map(|i| self.get(i, j)).collect()
    }

    /// Submatrix with the given rows and columns, in the given order.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        let mut out = Self::zeros(rows.len(), cols.len());
        for (a, &i) in rows.iter().enumerate() {
            for (b, &j) in cols.iter().enumerate() {
                out.set(a, b, self.get(i, j));
            }
        }
        out
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_rows)
            .map(|i| {
                let row = &self.data[i * self.n_cols..(i + 1) * self.n_cols];
                let mut acc = 0.0;
                for (a, b) in row.iter().zip(x) {
                    acc += a * b;
                }
                acc
            })
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Eigen-decomposition of a symmetric matrix, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SymmetricEigen {
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors stored as the columns of a row-major matrix.
    pub eigenvectors: DenseMatrix,
}

const JACOBI_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Cyclic Jacobi eigensolver. Sweeps until the off-diagonal Frobenius norm is
/// at most `1e-12` times the Frobenius norm of the input.
pub fn symmetric_eigen(m: &DenseMatrix) -> Result<SymmetricEigen> {
    let n = m.n_rows;
    if m.n_cols != n {
        return Err(Error::Dimension("eigensolver needs a square matrix".into()));
    }
    let mut a = m.data.clone();
    let mut v = vec![0.0; n * n];
    for i in 0..n {
        v[i * n + i] = 1.0;
    }
    let total: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let off_norm = |a: &[f64]| -> f64 {
        let mut s = 0.0;
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    s += a[i * n + j] * a[i * n + j];
                }
            }
        }
        s.sqrt()
    };

    let mut sweeps = 0;
    while off_norm(&a) > JACOBI_TOL * total {
        if sweeps == MAX_SWEEPS {
            return Err(Error::Numerical(format!(
                "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
            )));
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k * n + p];
                    let akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p * n + k];
                    let aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    let vkp = v[k * n + p];
                    let vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[i * n + i].total_cmp(&a[j * n + j]));
    let eigenvalues = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = DenseMatrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, col, v[k * n + src]);
        }
    }
    Ok(SymmetricEigen {
        eigenvalues,
        eigenvectors: vectors,
    })
}

/// Singular values (descending) by one-sided Jacobi orthogonalization of the columns.
pub fn singular_values(m: &DenseMatrix) -> Result<Vec<f64>> {
    let (rows, cols) = (m.n_rows, m.n_cols);
    // orthogonalize along the longer dimension so at most min(rows, cols) columns survive
    let mut columns: Vec<Vec<f64>> = if rows >= cols {
        (0..cols).map(|j| m.column(j)).collect()
    } else {
        (0..rows)
            .map(|i| m.data[i * cols..(i + 1) * cols].to_vec())
            .collect()
    };
    let (rows, cols) = (columns.first().map_or(0, Vec::len), columns.len());
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let total: f64 = columns.iter().map(|c| dot(c, c)).sum();
    let negligible = f64::EPSILON * f64::EPSILON * total;
    let orth_tol = rows.max(1) as f64 * f64::EPSILON;
    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..cols {
            for j in i + 1..cols {
                let alpha = dot(&columns[i], &columns[i]);
                let beta = dot(&columns[j], &columns[j]);
                let gamma = dot(&columns[i], &columns[j]);
                if alpha <= negligible
                    || beta <= negligible
                    || gamma.abs() <= orth_tol * (alpha * beta).sqrt()
                {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                let (head, tail) = columns.split_at_mut(j);
                for (ci, cj) in head[i].iter_mut().zip(tail[0].iter_mut()) {
                    let (a, b) = (*ci, *cj);
                    *ci = c * a - s * b;
                    *cj = s * a + c * b;
                }
            }
        }
        if !rotated {
            let mut sv: Vec<f64> = columns.iter().map(|c| dot(c, c).sqrt()).collect();
            sv.sort_by(|a, b| b.total_cmp(a));
            sv.truncate(rows.min(cols));
            return Ok(sv);
        }
    }
    Err(Error::Numerical(
        "one-sided Jacobi SVD did not converge".into(),
    ))
}

/// Numerical rank with singular values below `rel_cutoff * sigma_max` treated as zero.
pub fn numerical_rank(m: &DenseMatrix, rel_cutoff: f64) -> Result<usize> {
    let sv = singular_values(m)?;
    let Some(&largest) = sv.first() else {
        return Ok(0);
    };
    if largest == 0.0 {
        return Ok(0);
    }
    Ok(sv.iter().filter(|&&s| s > rel_cutoff * largest).count())
}

/// Refinement passes applied after the first pseudoinverse solve.
const REFINEMENT_STEPS: usize = 3;

/// Minimum-norm least-squares solution of a symmetric system via its
/// eigen-decomposition; eigenvalues with `|λ| <= rel_cutoff * max|λ|` are dropped.
///
/// The eigenvectors are only accurate to the eigensolver's stopping
/// tolerance, so the result is polished by a few steps of iterative
/// refinement with the same decomposition.
pub fn symmetric_pinv_solve(m: &DenseMatrix, rhs: &[f64], rel_cutoff: f64) -> Result<Vec<f64>> {
    if rhs.len() != m.n_rows {
        return Err(Error::Dimension(format!(
            "rhs of length {} for {} rows",
            rhs.len(),
            m.n_rows
        )));
    }
    let eig = symmetric_eigen(m)?;
    let n = m.n_rows;
    let scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let kept: Vec<usize> = (0..n)
        .filter(|&idx| {
            let lambda = eig.eigenvalues[idx];
            lambda != 0.0 && lambda.abs() > rel_cutoff * scale
        })
        .collect();
    let apply_pinv = |v: &[f64]| -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &idx in &kept {
            let mut coeff = 0.0;
            for (k, vk) in v.iter().enumerate() {
                coeff += eig.eigenvectors.get(k, idx) * vk;
            }
            coeff /= eig.eigenvalues[idx];
            for (k, o) in out.iter_mut().enumerate() {
                *o += coeff * eig.eigenvectors.get(k, idx);
            }
        }
        out
    };
    let mut x = apply_pinv(rhs);
    for _ in 0..REFINEMENT_STEPS {
        let mx = m.matvec(&x);
        let resid: Vec<f64> = rhs.iter().zip(&mx).map(|(b, v)| b - v).collect();
        for (xi, d) in x.iter_mut().zip(apply_pinv(&resid)) {
            *xi += d;
        }
    }
    Ok(x)
}

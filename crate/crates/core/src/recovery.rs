//! Recovery of the raw solution from an augmented iterate, plus the dense
//! purified-system oracle used to validate it.
//!
//! Every solution of the augmented system is `[x*; 0] + [E; -I_k] a`, so the
//! raw solution is read off as `x* = y + E z` for an iterate `[y; z]`.

use std::collections::BTreeMap;
use std::io::Write;

use serde::Serialize;

use crate::dense::{symmetric_pinv_solve, DenseMatrix};
use crate::encoding::{kruskal_rank_operative, EncodedSystem, RANK_CUTOFF};
use crate::error::{Error, Result};
use crate::solver::{SolveOutput, Termination};
use crate::sparse::{norm2, CsrMatrix};

/// Largest `n + k` the dense purified oracle accepts.
pub const ORACLE_BUDGET: usize = 200;

#[derive(Debug, Clone, PartialEq)]
pub struct RecoveredSolution {
    pub x_star: Vec<f64>,
    /// `‖b - A x*‖₂ / ‖b‖₂`
    pub raw_relative_residual: f64,
    pub faulty_indices_used: Vec<usize>,
    pub snapshots_used: BTreeMap<usize, f64>,
    pub converged: bool,
    pub iterations: usize,
    pub k: usize,
}

#[derive(Serialize)]
struct RecoverySummary<'a> {
    n: usize,
    k: usize,
    converged: bool,
    iterations: usize,
    raw_relative_residual: f64,
    faulty_indices: &'a [usize],
}

impl RecoveredSolution {
    /// JSON `{n, k, converged, iterations, raw_relative_residual, faulty_indices}`.
    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        let summary = RecoverySummary {
            n: self.x_star.len(),
            k: self.k,
            converged: self.converged,
            iterations: self.iterations,
            raw_relative_residual: self.raw_relative_residual,
            faulty_indices: &self.faulty_indices_used,
        };
        serde_json::to_writer_pretty(out, &summary)?;
        Ok(())
    }

    /// The recovered vector as one value per line, shortest round-trip format.
    pub fn write_vector<W: Write>(&self, mut out: W) -> Result<()> {
        for v in &self.x_star {
            writeln!(out, "{v:e}")?;
        }
        Ok(())
    }
}

/// `x̃_{0..n} + E x̃_{n..n+k}`.
pub fn apply_recovery_equation(system: &EncodedSystem, x_aug: &[f64]) -> Result<Vec<f64>> {
    let n = system.n();
    if x_aug.len() != system.dim() {
        return Err(Error::Dimension(format!(
            "augmented iterate of length {}, expected {}",
            x_aug.len(),
            system.dim()
        )));
    }
    let shift = system.encoder().apply(&x_aug[n..]);
    Ok(x_aug[..n].iter().zip(&shift).map(|(y, s)| y + s).collect())
}

/// Recovers `x*` from a finished solve.
///
/// A run that stopped at the iteration limit is still recovered, with
/// `converged = false`; a breakdown is rejected.
pub fn recover(system: &EncodedSystem, output: &SolveOutput) -> Result<RecoveredSolution> {
    if output.trace.termination == Termination::Breakdown {
        return Err(Error::Precondition(
            "solver broke down; there is no consistent iterate to recover from".into(),
        ));
    }
    let faulty = output.faults.faulty_indices();
    if !kruskal_rank_operative(system.encoder(), faulty) {
        return Err(Error::Unrecoverable(faulty.to_vec()));
    }
    let x_star = apply_recovery_equation(system, &output.state.x)?;
    let raw_relative_residual = raw_relative_residual(system.raw(), system.rhs_raw(), &x_star)?;
    Ok(RecoveredSolution {
        x_star,
        raw_relative_residual,
        faulty_indices_used: faulty.to_vec(),
        snapshots_used: output.faults.snapshots().clone(),
        converged: output.trace.converged(),
        iterations: output.trace.iterations(),
        k: system.k(),
    })
}

/// `‖b - A x‖₂ / ‖b‖₂` with unmasked kernels.
pub fn raw_relative_residual(a: &CsrMatrix, b: &[f64], x: &[f64]) -> Result<f64> {
    if b.len() != a.n_rows() {
        return Err(Error::Dimension(format!(
            "rhs of length {} for {} rows",
            b.len(),
            a.n_rows()
        )));
    }
    let ax = a.matvec(x)?;
    let diff: Vec<f64> = b.iter().zip(&ax).map(|(bi, axi)| bi - axi).collect();
    let absolute = norm2(&diff);
    let scale = norm2(b);
    if scale == 0.0 {
        return Err(Error::ZeroRhs { absolute });
    }
    Ok(absolute / scale)
}

/// Minimum-norm solution of the purified system for faulty set `faulty` held
/// at values `f`, returned un-permuted as a full augmented vector.
pub fn purified_oracle(system: &EncodedSystem, faulty: &[usize], f: &[f64]) -> Result<Vec<f64>> {
    purified_oracle_with_cutoff(system, faulty, f, RANK_CUTOFF)
}

/// [`purified_oracle`] with an explicit relative eigenvalue cutoff for the
/// pseudoinverse.
pub fn purified_oracle_with_cutoff(
    system: &EncodedSystem,
    faulty: &[usize],
    f: &[f64],
    rel_cutoff: f64,
) -> Result<Vec<f64>> {
    let (n, k) = (system.n(), system.k());
    if n + k > ORACLE_BUDGET {
        return Err(Error::Budget(format!(
            "n + k = {} exceeds the dense oracle budget of {ORACLE_BUDGET}",
            n + k
        )));
    }
    if faulty.len() != f.len() {
        return Err(Error::Dimension(format!(
            "{} faulty indices but {} snapshot values",
            faulty.len(),
            f.len()
        )));
    }
    if faulty.len() > k {
        return Err(Error::FaultCapacity {
            faulty: faulty.len(),
            k,
        });
    }
    let mut is_faulty = vec![false; n];
    for &i in faulty {
        if i >= n || is_faulty[i] {
            return Err(Error::InvalidPlan(format!(
                "faulty index {i} is out of range or repeated"
            )));
        }
        is_faulty[i] = true;
    }
    let correct: Vec<usize> = (0..n).filter(|&i| !is_faulty[i]).collect();
    let a = DenseMatrix::from_row_major(n, n, system.raw().to_dense())?;
    let e = system.encoder();
    let all_k: Vec<usize> = (0..k).collect();
    let e_full = {
        let mut m = DenseMatrix::zeros(n, k);
        for i in 0..n {
            for l in 0..k {
                m.set(i, l, e.get(i, l));
            }
        }
        m
    };
    let a11 = a.select(&correct, &correct);
    let a12 = a.select(&correct, faulty);
    let a22 = a.select(faulty, faulty);
    let e1 = e_full.select(&correct, &all_k);
    let e2 = e_full.select(faulty, &all_k);

    let z1 = add(&matmul(&a11, &e1), &matmul(&a12, &e2));
    let z2 = add(&matmul(&transpose(&a12), &e1), &matmul(&a22, &e2));
    let r = add(&matmul(&transpose(&e1), &z1), &matmul(&transpose(&e2), &z2));

    let nc = correct.len();
    let size = nc + k;
    let mut m = DenseMatrix::zeros(size, size);
    for i in 0..nc {
        for j in 0..nc {
            m.set(i, j, a11.get(i, j));
        }
        for l in 0..k {
            m.set(i, nc + l, z1.get(i, l));
            m.set(nc + l, i, z1.get(i, l));
        }
    }
    for l in 0..k {
        for q in 0..k {
            m.set(nc + l, nc + q, 0.5 * (r.get(l, q) + r.get(q, l)));
        }
    }

    let b = system.rhs_raw();
    let etb = e.apply_transpose(b);
    let a12f = a12.matvec(f);
    let z2tf = transpose(&z2).matvec(f);
    let mut rhs = Vec::with_capacity(size);
    rhs.extend(correct.iter().zip(&a12f).map(|(&i, s)| b[i] - s));
    rhs.extend(etb.iter().zip(&z2tf).map(|(v, s)| v - s));

    let sol = symmetric_pinv_solve(&m, &rhs, rel_cutoff)?;
    let mut x = vec![0.0; n + k];
    for (pos, &i) in correct.iter().enumerate() {
        x[i] = sol[pos];
    }
    for (&i, &v) in faulty.iter().zip(f) {
        x[i] = v;
    }
    x[n..].copy_from_slice(&sol[nc..]);
    Ok(x)
}

fn matmul(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.n_rows, b.n_cols);
    for i in 0..a.n_rows {
        for j in 0..b.n_cols {
            let mut acc = 0.0;
            for l in 0..a.n_cols {
                acc += a.get(i, l) * b.get(l, j);
            }
            out.set(i, j, acc);
        }
    }
    out
}

fn add(a: &DenseMatrix, b: &DenseMatrix) -> DenseMatrix {
    let data = a.data.iter().zip(&b.data).map(|(x, y)| x + y).collect();
    DenseMatrix::from_row_major(a.n_rows, a.n_cols, data).expect("same shape")
}

fn transpose(a: &DenseMatrix) -> DenseMatrix {
    let mut out = DenseMatrix::zeros(a.n_cols, a.n_rows);
    for i in 0..a.n_rows {
        for j in 0..a.n_cols {
            out.set(j, i, a.get(i, j));
        }
    }
    out
}

//! Encoding of an SPD system into the singular-but-consistent augmented system
//!
//! ```text
//!     Ã = [ A     A E   ]      b̃ = [ b    ]
//!         [ EᵀA   EᵀA E ]           [ Eᵀ b ]
//! ```
//!
//! whose null space is spanned by the columns of `[E; -I_k]`. The raw block `A`
//! stays sparse; the border `EᵀA` (which is also `(A E)ᵀ`) and the `k x k`
//! corner `EᵀAE` are stored dense.

use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::dense::{numerical_rank, symmetric_eigen, DenseMatrix};
use crate::error::{Error, Result};
use crate::mm::{parse_mm_array, write_mm_array};
use crate::rng::{Stream, StreamId};
use crate::sparse::{CsrMatrix, IndexMask};

/// Relative cutoff below which singular values and eigenvalues count as zero.
pub const RANK_CUTOFF: f64 = 1e-10;

/// Largest subset count per size that [`kruskal_rank_exact`] will enumerate.
pub const KRUSKAL_SUBSET_BUDGET: u128 = 1_000_000;

/// Largest `n + k` accepted by [`spectrum_diagnostics`].
pub const SPECTRUM_BUDGET: usize = 2000;

/// Relative symmetry tolerance applied to the raw matrix on encoding.
const SYMMETRY_TOL: f64 = 1e-14;

/// Dense `n x k` encoding matrix, stored column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodingMatrix {
    n: usize,
    k: usize,
    seed: Option<u64>,
    column_major: Vec<f64>,
}

impl EncodingMatrix {
    pub fn from_column_major(n: usize, k: usize, column_major: Vec<f64>) -> Result<Self> {
        if k > n {
            return Err(Error::Dimension(format!("k = {k} exceeds n = {n}")));
        }
        if column_major.len() != n * k {
            return Err(Error::Dimension(format!(
                "{} entries for an {n}x{k} encoding",
                column_major.len()
            )));
        }
        if column_major.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("encoding has non-finite entries".into()));
        }
        Ok(Self {
            n,
            k,
            seed: None,
            column_major,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self {
            n,
            k: 0,
            seed: None,
            column_major: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn seed(&self) -> Option<u64> {
        self.seed
    }

    #[inline]
    pub fn get(&self, i: usize, l: usize) -> f64 {
        self.column_major[l * self.n + i]
    }

    pub fn column(&self, l: usize) -> &[f64] {
        &self.column_major[l * self.n..(l + 1) * self.n]
    }

    pub fn column_major(&self) -> &[f64] {
        &self.column_major
    }

    /// `E z` for `z` of length k.
    pub fn apply(&self, z: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n];
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (l, zl) in z.iter().enumerate() {
                acc += self.get(i, l) * zl;
            }
            *o = acc;
        }
        out
    }

    /// `Eᵀ v` for `v` of length n.
    pub fn apply_transpose(&self, v: &[f64]) -> Vec<f64> {
        (0..self.k)
            .map(|l| {
                let mut acc = 0.0;
                for (e, x) in self.column(l).iter().zip(v) {
                    acc += e * x;
                }
                acc
            })
            .collect()
    }

    /// `Eᵀ` as a dense `k x n` matrix.
    pub fn transpose_dense(&self) -> DenseMatrix {
        DenseMatrix::from_row_major(self.k, self.n, self.column_major.clone())
            .expect("column-major E is row-major Eᵀ")
    }
}

/// `n x k` matrix of independent N(0, 1) draws scaled by `1/sqrt(n)`.
///
/// Draws come from the [`StreamId::Encoding`] sub-stream of `seed` and fill
/// the matrix column by column.
pub fn gen_gaussian_encoding(n: usize, k: usize, seed: u64) -> Result<EncodingMatrix> {
    if k > n {
        return Err(Error::Dimension(format!("k = {k} exceeds n = {n}")));
    }
    let mut stream = Stream::sub_stream(seed, StreamId::Encoding);
    let scale = 1.0 / (n as f64).sqrt();
    let column_major = (0..n * k).map(|_| stream.normal() * scale).collect();
    Ok(EncodingMatrix {
        n,
        k,
        seed: Some(seed),
        column_major,
    })
}

/// The augmented system together with its raw inputs.
#[derive(Debug, Clone)]
pub struct EncodedSystem {
    raw: CsrMatrix,
    encoder: EncodingMatrix,
    /// Row `l` holds `(EᵀA)_{l,:}`, which is also column `l` of `A E`. Length `k * n`.
    border: Vec<f64>,
    /// `EᵀAE`, row-major `k x k`, exactly symmetric.
    corner: Vec<f64>,
    rhs_raw: Vec<f64>,
    rhs_augmented: Vec<f64>,
}

/// Assembles `Ã` and `b̃` from a symmetric `A`, right-hand side `b` and encoding `E`.
pub fn build_encoded_system(
    a: &CsrMatrix,
    b: &[f64],
    e: &EncodingMatrix,
) -> Result<EncodedSystem> {
    let n = a.n_rows();
    if a.n_cols() != n {
        return Err(Error::Dimension(format!(
            "raw matrix is {}x{}, expected square",
            n,
            a.n_cols()
        )));
    }
    if b.len() != n {
        return Err(Error::Dimension(format!(
            "rhs has length {}, expected {n}",
            b.len()
        )));
    }
    if e.n() != n {
        return Err(Error::Dimension(format!(
            "encoding has {} rows, expected {n}",
            e.n()
        )));
    }
    if let Some((row, col)) = a.first_asymmetry(SYMMETRY_TOL) {
        return Err(Error::NotSymmetric { row, col });
    }
    let k = e.k();
    let mut border = Vec::with_capacity(k * n);
    for l in 0..k {
        border.extend(a.matvec(e.column(l))?);
    }
    let mut corner = vec![0.0; k * k];
    for l in 0..k {
        for m in 0..k {
            let mut acc = 0.0;
            for (el, aem) in e.column(l).iter().zip(&border[m * n..(m + 1) * n]) {
                acc += el * aem;
            }
            corner[l * k + m] = acc;
        }
    }
    for l in 0..k {
        for m in l + 1..k {
            let avg = 0.5 * (corner[l * k + m] + corner[m * k + l]);
            corner[l * k + m] = avg;
            corner[m * k + l] = avg;
        }
    }
    let mut rhs_augmented = b.to_vec();
    rhs_augmented.extend(e.apply_transpose(b));
    Ok(EncodedSystem {
        raw: a.clone(),
        encoder: e.clone(),
        border,
        corner,
        rhs_raw: b.to_vec(),
        rhs_augmented,
    })
}

impl EncodedSystem {
    pub fn n(&self) -> usize {
        self.raw.n_rows()
    }

    pub fn k(&self) -> usize {
        self.encoder.k()
    }

    /// Size of the augmented system, `n + k`.
    pub fn dim(&self) -> usize {
        self.n() + self.k()
    }

    pub fn raw(&self) -> &CsrMatrix {
        &self.raw
    }

    pub fn encoder(&self) -> &EncodingMatrix {
        &self.encoder
    }

    pub fn rhs_raw(&self) -> &[f64] {
        &self.rhs_raw
    }

    pub fn rhs_augmented(&self) -> &[f64] {
        &self.rhs_augmented
    }

    /// Entry `(i, j)` of `Ã`.
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        let n = self.n();
        match (i < n, j < n) {
            (true, true) => self.raw.get(i, j),
            (true, false) => self.border[(j - n) * n + i],
            (false, true) => self.border[(i - n) * n + j],
            (false, false) => self.corner[(i - n) * self.k() + (j - n)],
        }
    }

    /// Row `i` of `Ã` dotted with `p`, skipping columns excluded by `mask`.
    /// Columns are visited in ascending order.
    #[inline]
    pub fn row_dot_masked(&self, i: usize, p: &[f64], mask: &IndexMask) -> f64 {
        let n = self.n();
        let k = self.k();
        let mut acc = 0.0;
        if i < n {
            for (j, v) in self.raw.row(i) {
                if !mask.is_excluded(j) {
                    acc += v * p[j];
                }
            }
            for l in 0..k {
                if !mask.is_excluded(n + l) {
                    acc += self.border[l * n + i] * p[n + l];
                }
            }
        } else {
            let l = i - n;
            let row = &self.border[l * n..(l + 1) * n];
            for (j, v) in row.iter().enumerate() {
                if !mask.is_excluded(j) {
                    acc += v * p[j];
                }
            }
            for m in 0..k {
                if !mask.is_excluded(n + m) {
                    acc += self.corner[l * k + m] * p[n + m];
                }
            }
        }
        acc
    }

    /// Masked product with `Ã`: rows excluded by `out_rows` are left at 0.0,
    /// columns excluded by `mask` are skipped.
    pub fn spmv_masked(&self, p: &[f64], mask: &IndexMask, out_rows: &IndexMask) -> Result<Vec<f64>> {
        let dim = self.dim();
        if p.len() != dim || mask.universe_size() != dim || out_rows.universe_size() != dim {
            return Err(Error::Dimension(format!(
                "augmented product expects length {dim} vectors and masks"
            )));
        }
        Ok((0..dim)
            .map(|i| {
                if out_rows.is_excluded(i) {
                    0.0
                } else {
                    self.row_dot_masked(i, p, mask)
                }
            })
            .collect())
    }

    /// Unmasked product `Ã x`.
    pub fn matvec(&self, x: &[f64]) -> Result<Vec<f64>> {
        let none = IndexMask::empty(self.dim());
        self.spmv_masked(x, &none, &none)
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let dim = self.dim();
        let mut out = DenseMatrix::zeros(dim, dim);
        for i in 0..dim {
            for j in 0..dim {
                out.set(i, j, self.entry(i, j));
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        let m = self.raw.max_abs();
        self.border
            .iter()
            .chain(&self.corner)
            .fold(m, |acc, v| acc.max(v.abs()))
    }

    /// `max |Ã [E; -I_k]|`, which vanishes in exact arithmetic.
    pub fn null_space_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for l in 0..self.k() {
            let mut v = self.encoder.column(l).to_vec();
            v.extend((0..self.k()).map(|m| if m == l { -1.0 } else { 0.0 }));
            let prod = self.matvec(&v).expect("dimensions match by construction");
            worst = prod.iter().fold(worst, |w, x| w.max(x.abs()));
        }
        worst
    }

    /// Writes `E`, `b̃` and a JSON header into `dir` for later replay.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_mm_array(
            BufWriter::new(File::create(dir.join("encoding.mtx"))?),
            self.n(),
            self.k(),
            self.encoder.column_major(),
        )?;
        write_mm_array(
            BufWriter::new(File::create(dir.join("rhs_augmented.mtx"))?),
            self.dim(),
            1,
            &self.rhs_augmented,
        )?;
        let header = EncodingHeader {
            n: self.n(),
            k: self.k(),
            seed: self.encoder.seed(),
        };
        serde_json::to_writer_pretty(File::create(dir.join("encoding.json"))?, &header)?;
        Ok(())
    }
}

/// JSON sidecar of a persisted encoding.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncodingHeader {
    pub n: usize,
    pub k: usize,
    pub seed: Option<u64>,
}

/// Reads back an encoding written by [`EncodedSystem::save`].
pub fn load_encoding(dir: &Path) -> Result<EncodingMatrix> {
    let header: EncodingHeader =
        serde_json::from_reader(BufReader::new(File::open(dir.join("encoding.json"))?))?;
    let array = parse_mm_array(BufReader::new(File::open(dir.join("encoding.mtx"))?))?;
    if array.n_rows != header.n || array.n_cols != header.k {
        return Err(Error::Dimension(format!(
            "header says {}x{}, array is {}x{}",
            header.n, header.k, array.n_rows, array.n_cols
        )));
    }
    let mut e = EncodingMatrix::from_column_major(header.n, header.k, array.column_major)?;
    e.seed = header.seed;
    Ok(e)
}

fn binomial(n: usize, r: usize) -> u128 {
    let r = r.min(n - r);
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul((n - i) as u128) / (i as u128 + 1);
    }
    acc
}

/// Kruskal rank of `Eᵀ` (`k x n`) by exhaustive enumeration of column subsets.
///
/// Fails with [`Error::Budget`] once some subset size would need more than
/// [`KRUSKAL_SUBSET_BUDGET`] rank tests; use [`kruskal_rank_operative`] then.
pub fn kruskal_rank_exact(et: &DenseMatrix) -> Result<usize> {
    let (k, n) = (et.n_rows, et.n_cols);
    let all_rows: Vec<usize> = (0..k).collect();
    for size in 1..=k.min(n) {
        let count = binomial(n, size);
        if count > KRUSKAL_SUBSET_BUDGET {
            return Err(Error::Budget(format!(
                "{count} subsets of size {size}; check the realized fault set with kruskal_rank_operative"
            )));
        }
        for subset in (0..n).combinations(size) {
            if numerical_rank(&et.select(&all_rows, &subset), RANK_CUTOFF)? < size {
                return Ok(size - 1);
            }
        }
    }
    Ok(k.min(n))
}

/// True iff the columns of `Eᵀ` indexed by `faulty` are linearly independent,
/// which is what recovery needs for that particular fault set.
pub fn kruskal_rank_operative(e: &EncodingMatrix, faulty: &[usize]) -> bool {
    if faulty.is_empty() {
        return true;
    }
    if faulty.len() > e.k() || faulty.iter().any(|&i| i >= e.n()) {
        return false;
    }
    // Eᵀ restricted to the faulty columns is k x |F|
    let mut sub = DenseMatrix::zeros(e.k(), faulty.len());
    for (c, &i) in faulty.iter().enumerate() {
        for l in 0..e.k() {
            sub.set(l, c, e.get(i, l));
        }
    }
    matches!(numerical_rank(&sub, RANK_CUTOFF), Ok(r) if r == faulty.len())
}

/// Dense spectral summary of `A` and `Ã`.
#[derive(Debug, Clone, Serialize)]
pub struct SpectrumReport {
    /// Eigenvalues of `A`, ascending.
    pub raw_eigenvalues: Vec<f64>,
    /// Eigenvalues of `Ã`, ascending.
    pub augmented_eigenvalues: Vec<f64>,
    /// `λ̃_{n+k} / λ̃_{k+1}`.
    pub kappa_e: f64,
    /// Eigenvalues of `Ã` at most `RANK_CUTOFF * λ̃_max`.
    pub zero_eigenvalue_count: usize,
    /// `λ_1 <= λ̃_{k+1}`.
    pub lower_interlacing: bool,
    /// `λ_n <= λ̃_{n+k}`.
    pub upper_interlacing: bool,
}

/// Interlacing comparisons allow this much slack relative to `λ̃_max`.
const INTERLACING_SLACK: f64 = 1e-12;

pub fn spectrum_diagnostics(system: &EncodedSystem) -> Result<SpectrumReport> {
    let (n, k) = (system.n(), system.k());
    if n + k > SPECTRUM_BUDGET {
        return Err(Error::Budget(format!(
            "n + k = {} exceeds the dense eigenvalue budget of {SPECTRUM_BUDGET}",
            n + k
        )));
    }
    let raw = DenseMatrix::from_row_major(n, n, system.raw().to_dense())?;
    let raw_eigenvalues = symmetric_eigen(&raw)?.eigenvalues;
    let augmented_eigenvalues = symmetric_eigen(&system.to_dense())?.eigenvalues;

    let top = augmented_eigenvalues[n + k - 1];
    let kappa_e = top / augmented_eigenvalues[k];
    let zero_eigenvalue_count = augmented_eigenvalues
        .iter()
        .filter(|l| l.abs() <= RANK_CUTOFF * top)
        .count();
    let slack = INTERLACING_SLACK * top.abs();
    Ok(SpectrumReport {
        lower_interlacing: raw_eigenvalues[0] <= augmented_eigenvalues[k] + slack,
        upper_interlacing: raw_eigenvalues[n - 1] <= top + slack,
        raw_eigenvalues,
        augmented_eigenvalues,
        kappa_e,
        zero_eigenvalue_count,
    })
}

#![allow(dead_code)]

use eccg::rng::{Stream, StreamId};
use eccg::CsrMatrix;

/// Sparse symmetric, strictly diagonally dominant (hence SPD) test matrix.
pub fn random_spd(n: usize, density: f64, seed: u64) -> CsrMatrix {
    let mut s = Stream::sub_stream(seed, StreamId::Checks);
    let mut trip = Vec::new();
    let mut row_abs = vec![0.0f64; n];
    for i in 0..n {
        for j in 0..i {
            if s.uniform() < density {
                let v = 2.0 * s.uniform() - 1.0;
                trip.push((i, j, v));
                trip.push((j, i, v));
                row_abs[i] += v.abs();
                row_abs[j] += v.abs();
            }
        }
    }
    for (i, r) in row_abs.iter().enumerate() {
        trip.push((i, i, r + 0.5 + s.uniform()));
    }
    CsrMatrix::from_triplets(n, n, &trip).unwrap()
}

/// Uniform `(0, 1)` vector.
pub fn random_unit(n: usize, seed: u64) -> Vec<f64> {
    let mut s = Stream::sub_stream(seed, StreamId::Solution);
    (0..n).map(|_| s.uniform_open()).collect()
}

/// Gaussian elimination with partial pivoting on a dense row-major copy.
pub fn dense_solve(a: &[f64], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m = a.to_vec();
    let mut x = b.to_vec();
    for col in 0..n {
        let piv = (col..n)
            .max_by(|&i, &j| m[i * n + col].abs().total_cmp(&m[j * n + col].abs()))
            .unwrap();
        if piv != col {
            for j in 0..n {
                m.swap(col * n + j, piv * n + j);
            }
            x.swap(col, piv);
        }
        let d = m[col * n + col];
        assert!(d.abs() > 1e-300, "singular matrix in dense_solve");
        for i in col + 1..n {
            let f = m[i * n + col] / d;
            if f == 0.0 {
                continue;
            }
            for j in col..n {
                m[i * n + j] -= f * m[col * n + j];
            }
            x[i] -= f * x[col];
        }
    }
    for i in (0..n).rev() {
        let mut acc = x[i];
        for j in i + 1..n {
            acc -= m[i * n + j] * x[j];
        }
        x[i] = acc / m[i * n + i];
    }
    x
}

pub fn dense_matvec(a: &[f64], x: &[f64]) -> Vec<f64> {
    let n = x.len();
    (0..a.len() / n)
        .map(|i| {
            let mut acc = 0.0;
            for j in 0..n {
                acc += a[i * n + j] * x[j];
            }
            acc
        })
        .collect()
}

fn dot(u: &[f64], v: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (a, b) in u.iter().zip(v) {
        acc += a * b;
    }
    acc
}

/// Textbook two-term CG from x = 0 on a dense matrix. Returns every iterate
/// after the initial one.
pub fn reference_cg(a: &[f64], b: &[f64], tol: f64, max_iters: usize) -> Vec<Vec<f64>> {
    let n = b.len();
    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut iterates = Vec::new();
    for t in 0..max_iters {
        if rr.sqrt() <= tol {
            break;
        }
        if t == 0 {
            p.copy_from_slice(&r);
        }
        let q = dense_matvec(a, &p);
        let alpha = rr / dot(&q, &p);
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        iterates.push(x.clone());
        let rr_new = dot(&r, &r);
        let beta = rr_new / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_new;
    }
    iterates
}

pub fn max_abs_diff(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()))
}

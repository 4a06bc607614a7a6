//! Property checks on a concrete matrix, used by the `check` subcommand.

use std::fmt;

use crate::encoding::{
    build_encoded_system, gen_gaussian_encoding, kruskal_rank_exact, kruskal_rank_operative,
    spectrum_diagnostics, EncodedSystem, KRUSKAL_SUBSET_BUDGET,
};
use crate::error::{Error, Result};
use crate::fault::sample_fault_plan;
use crate::recovery::{apply_recovery_equation, purified_oracle, ORACLE_BUDGET};
use crate::rng::{Stream, StreamId};
use crate::sparse::CsrMatrix;

/// Dense eigenvalue checks are skipped above this size to keep `check` interactive.
pub const CHECK_SPECTRUM_LIMIT: usize = 600;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Skipped,
}

#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: String,
    pub status: CheckStatus,
    pub detail: String,
}

impl fmt::Display for CheckResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skipped => "SKIP",
        };
        write!(f, "[{tag}] {}: {}", self.name, self.detail)
    }
}

fn verdict(name: &str, ok: bool, detail: String) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
        detail,
    }
}

fn skipped(name: &str, detail: impl Into<String>) -> CheckResult {
    CheckResult {
        name: name.to_string(),
        status: CheckStatus::Skipped,
        detail: detail.into(),
    }
}

/// Smallest `vᵀÃv / (vᵀv max|Ã|)` over `samples` random Gaussian vectors.
pub fn min_quadratic_form_ratio(system: &EncodedSystem, samples: usize, seed: u64) -> Result<f64> {
    let mut stream = Stream::sub_stream(seed, StreamId::Checks);
    let scale = system.max_abs();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let v: Vec<f64> = (0..system.dim()).map(|_| stream.normal()).collect();
        let av = system.matvec(&v)?;
        let vav: f64 = v.iter().zip(&av).map(|(a, b)| a * b).sum();
        let vv: f64 = v.iter().map(|a| a * a).sum();
        worst = worst.min(vav / (vv * scale));
    }
    Ok(worst)
}

/// Runs the encoding/recovery property checks for `a` with `k` redundant
/// components and one encoding per seed.
pub fn run_property_checks(a: &CsrMatrix, k: usize, seeds: &[u64]) -> Result<Vec<CheckResult>> {
    let n = a.n_rows();
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds n = {n}")));
    }
    let mut out = vec![verdict(
        "symmetric storage",
        a.is_symmetric(1e-14),
        format!("n = {n}, stored nnz = {}", a.nnz()),
    )];
    for &seed in seeds {
        let tag = |s: &str| format!("{s} (seed {seed})");
        let mut rhs_stream = Stream::sub_stream(seed, StreamId::Solution);
        let x: Vec<f64> = (0..n).map(|_| rhs_stream.uniform_open()).collect();
        let b = a.matvec(&x)?;
        let e = gen_gaussian_encoding(n, k, seed)?;
        let system = build_encoded_system(a, &b, &e)?;
        let scale = system.max_abs();

        let defect = system.null_space_defect();
        out.push(verdict(
            &tag("null space [E; -I]"),
            defect <= 1e-10 * scale,
            format!("max|Ã[E;-I]| = {defect:e}, bound {:e}", 1e-10 * scale),
        ));

        let ratio = min_quadratic_form_ratio(&system, 1000, seed)?;
        out.push(verdict(
            &tag("positive semidefinite"),
            ratio >= -1e-10,
            format!("min vᵀÃv/(vᵀv max|Ã|) = {ratio:e}"),
        ));

        if n + k <= CHECK_SPECTRUM_LIMIT {
            let s = spectrum_diagnostics(&system)?;
            out.push(verdict(
                &tag("spectrum"),
                s.zero_eigenvalue_count == k && s.lower_interlacing && s.upper_interlacing,
                format!(
                    "{} zero eigenvalues (expected {k}), kappa_e = {:e}, interlacing {}/{}",
                    s.zero_eigenvalue_count, s.kappa_e, s.lower_interlacing, s.upper_interlacing
                ),
            ));
        } else {
            out.push(skipped(&tag("spectrum"), format!("n + k > {CHECK_SPECTRUM_LIMIT}")));
        }

        match kruskal_rank_exact(&e.transpose_dense()) {
            Ok(r) => out.push(verdict(
                &tag("Kruskal rank of Eᵀ"),
                r == k,
                format!("{r} (expected {k})"),
            )),
            Err(Error::Budget(_)) => out.push(skipped(
                &tag("Kruskal rank of Eᵀ"),
                format!("more than {KRUSKAL_SUBSET_BUDGET} subsets"),
            )),
            Err(e) => return Err(e),
        }

        let plan = sample_fault_plan(n, k, 0.25, seed)?;
        let faulty: Vec<usize> = plan
            .events
            .first()
            .map(|ev| ev.victim_indices.clone())
            .unwrap_or_default();
        out.push(verdict(
            &tag("operative rank for sampled faults"),
            kruskal_rank_operative(&e, &faulty),
            format!("|F| = {}", faulty.len()),
        ));

        if n + k <= ORACLE_BUDGET {
            let f: Vec<f64> = (0..faulty.len()).map(|_| rhs_stream.normal()).collect();
            let sol = purified_oracle(&system, &faulty, &f)?;
            let ax = system.matvec(&sol)?;
            let worst = system
                .rhs_augmented()
                .iter()
                .zip(&ax)
                .fold(0.0f64, |m, (bb, v)| m.max((bb - v).abs()));
            let recovered = apply_recovery_equation(&system, &sol)?;
            let err = recovered
                .iter()
                .zip(&x)
                .fold(0.0f64, |m, (r, t)| m.max((r - t).abs()));
            out.push(verdict(
                &tag("purified system solves full system"),
                worst <= 1e-8 && err <= 1e-8,
                format!("augmented residual {worst:e}, recovery error {err:e}"),
            ));
        } else {
            out.push(skipped(
                &tag("purified system solves full system"),
                format!("n + k > {ORACLE_BUDGET}"),
            ));
        }
    }
    Ok(out)
}

//! Erasure-coded conjugate gradient.
//!
//! Two-term CG on the augmented system where every aggregation (inner products
//! and the matrix-vector product) skips the components owned by failed
//! processes. Ratio pairs are always recomputed together under the current
//! mask, and the first direction update after new faults is truncated to
//! `p = r`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::EncodedSystem;
use crate::error::{Error, Result};
use crate::fault::{FaultPlan, FaultState, ProcessTopology};
use crate::sparse::{inner_masked, norm2, IndexMask};

/// Curvature `(q, p)` at or below this multiple of `(p, p)` is a breakdown.
pub const BREAKDOWN_EPS: f64 = 1e-14;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Threshold on the masked residual 2-norm.
    pub tol_abs: f64,
    pub max_iters: usize,
    /// Replace the recurrence residual by `b̃ - Ã x̃` on viable rows after new faults.
    pub recompute_residual_on_fault: bool,
    /// Scale `tol_abs` by `‖b̃‖₂`.
    pub relative: bool,
}

impl SolverConfig {
    pub fn new(tol_abs: f64, max_iters: usize) -> Result<Self> {
        if tol_abs.is_nan() || tol_abs <= 0.0 {
            return Err(Error::Config(format!("tolerance must be positive, got {tol_abs}")));
        }
        if max_iters == 0 {
            return Err(Error::Config("max_iters must be at least 1".into()));
        }
        Ok(Self {
            tol_abs,
            max_iters,
            recompute_residual_on_fault: true,
            relative: false,
        })
    }
}

/// Iterate, residuals and directions of the two-term recurrence.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverState {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    /// Residual of the previous iteration, kept so `β` can be formed from a
    /// same-mask pair.
    pub r_prev: Vec<f64>,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub t: usize,
    pub alpha: f64,
    pub beta: f64,
    /// The next direction update is `p = r` (set after new faults).
    pub truncate_next: bool,
}

impl SolverState {
    /// Zero initial guess, so `r₀ = b̃`.
    pub fn initial(system: &EncodedSystem) -> Self {
        let dim = system.dim();
        let r = system.rhs_augmented().to_vec();
        Self {
            x: vec![0.0; dim],
            r_prev: r.clone(),
            r,
            p: vec![0.0; dim],
            q: vec![0.0; dim],
            t: 0,
            alpha: 0.0,
            beta: 0.0,
            truncate_next: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum StepOutcome {
    /// The masked residual is exactly zero; nothing left to do.
    Converged,
    /// Curvature on the viable subspace vanished.
    Breakdown,
    Advanced(SolverState),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum InPlace {
    Converged,
    Breakdown,
    Advanced,
}

fn finite(v: f64, what: &str) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Numerical(format!("{what} is not finite")))
    }
}

fn step_in_place(state: &mut SolverState, system: &EncodedSystem, mask: &IndexMask) -> Result<InPlace> {
    let dim = system.dim();
    let rr_now = finite(inner_masked(&state.r, &state.r, mask)?, "(r, r)")?;
    if rr_now == 0.0 {
        return Ok(InPlace::Converged);
    }

    if state.t == 0 || state.truncate_next {
        state.beta = 0.0;
        for i in 0..dim {
            if !mask.is_excluded(i) {
                state.p[i] = state.r[i];
            }
        }
    } else {
        let rr_prev = finite(inner_masked(&state.r_prev, &state.r_prev, mask)?, "(r_prev, r_prev)")?;
        let beta = finite(rr_now / rr_prev, "beta")?;
        state.beta = beta;
        for i in 0..dim {
            if !mask.is_excluded(i) {
                state.p[i] = state.r[i] + beta * state.p[i];
            }
        }
    }

    let q = system.spmv_masked(&state.p, mask, mask)?;
    for i in mask.viable() {
        state.q[i] = q[i];
    }
    let qp = finite(inner_masked(&state.q, &state.p, mask)?, "(q, p)")?;
    let rr = finite(inner_masked(&state.r, &state.r, mask)?, "(r, r)")?;
    let pp = finite(inner_masked(&state.p, &state.p, mask)?, "(p, p)")?;
    if qp <= BREAKDOWN_EPS * pp {
        return Ok(InPlace::Breakdown);
    }
    let alpha = finite(rr / qp, "alpha")?;
    state.alpha = alpha;

    for i in 0..dim {
        if !mask.is_excluded(i) {
            state.x[i] += alpha * state.p[i];
            state.r_prev[i] = state.r[i];
            state.r[i] -= alpha * state.q[i];
        }
    }
    state.t += 1;
    state.truncate_next = false;
    Ok(InPlace::Advanced)
}

/// One erasure-coded CG iteration under the faulty-index mask `mask`.
pub fn step(state: &SolverState, system: &EncodedSystem, mask: &IndexMask) -> Result<StepOutcome> {
    let mut next = state.clone();
    Ok(match step_in_place(&mut next, system, mask)? {
        InPlace::Converged => StepOutcome::Converged,
        InPlace::Breakdown => StepOutcome::Breakdown,
        InPlace::Advanced => StepOutcome::Advanced(next),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Converged,
    MaxIters,
    Breakdown,
}

/// Residual record taken at the start of iteration `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub t: usize,
    pub residual_norm: f64,
    pub n_faulty: usize,
    /// New faults were injected at the end of the previous iteration.
    pub fault_event: bool,
    /// This iteration's direction is truncated to `p = r`.
    pub truncated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveTrace {
    pub records: Vec<TraceRecord>,
    pub termination: Termination,
}

#[derive(Debug, Serialize)]
struct TraceSummary {
    termination: Termination,
    iterations: usize,
    final_residual_norm: f64,
    fault_events: usize,
}

impl SolveTrace {
    /// Number of completed CG iterations.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.t)
    }

    pub fn final_residual_norm(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.residual_norm)
    }

    pub fn converged(&self) -> bool {
        self.termination == Termination::Converged
    }

    /// CSV with header `iter,res_norm,n_faulty,fault_event,truncated`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "iter,res_norm,n_faulty,fault_event,truncated")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:e},{},{},{}",
                r.t,
                r.residual_norm,
                r.n_faulty,
                u8::from(r.fault_event),
                u8::from(r.truncated)
            )?;
        }
        Ok(())
    }

    /// JSON sidecar carrying the termination status.
    pub fn write_summary_json<W: Write>(&self, out: W) -> Result<()> {
        let summary = TraceSummary {
            termination: self.termination,
            iterations: self.iterations(),
            final_residual_norm: self.final_residual_norm(),
            fault_events: self.records.iter().filter(|r| r.fault_event).count(),
        };
        serde_json::to_writer_pretty(out, &summary)?;
        Ok(())
    }
}

/// Everything a finished solve hands to recovery and reporting.
#[derive(Debug, Clone)]
pub struct SolveOutput {
    pub state: SolverState,
    pub trace: SolveTrace,
    pub faults: FaultState,
}

pub fn solve(
    system: &EncodedSystem,
    plan: &FaultPlan,
    topology: &ProcessTopology,
    config: &SolverConfig,
) -> Result<SolveOutput> {
    solve_observed(system, plan, topology, config, |_, _| {})
}

/// Like [`solve`], calling `observer` after every completed iteration (after
/// any fault handling at its end).
pub fn solve_observed<F>(
    system: &EncodedSystem,
    plan: &FaultPlan,
    topology: &ProcessTopology,
    config: &SolverConfig,
    mut observer: F,
) -> Result<SolveOutput>
where
    F: FnMut(&SolverState, &FaultState),
{
    if topology.n() != system.n() || topology.k() != system.k() {
        return Err(Error::Dimension(format!(
            "topology is for n = {}, k = {} but the system has n = {}, k = {}",
            topology.n(),
            topology.k(),
            system.n(),
            system.k()
        )));
    }
    plan.validate(topology)?;

    let threshold = if config.relative {
        config.tol_abs * norm2(system.rhs_augmented())
    } else {
        config.tol_abs
    };
    let mut state = SolverState::initial(system);
    let mut faults = FaultState::new(topology);
    let mut records = Vec::new();
    let mut fault_pending = false;

    let termination = loop {
        let mask = faults.mask();
        let norm = finite(inner_masked(&state.r, &state.r, mask)?, "(r, r)")?.sqrt();
        records.push(TraceRecord {
            t: state.t,
            residual_norm: norm,
            n_faulty: mask.n_excluded(),
            fault_event: fault_pending,
            truncated: state.truncate_next,
        });
        fault_pending = false;
        if norm <= threshold {
            break Termination::Converged;
        }
        if state.t >= config.max_iters {
            break Termination::MaxIters;
        }
        match step_in_place(&mut state, system, mask)? {
            InPlace::Converged => break Termination::Converged,
            InPlace::Breakdown => break Termination::Breakdown,
            InPlace::Advanced => {}
        }

        if faults.advance(plan, topology, state.t, &state.x)? {
            state.truncate_next = true;
            fault_pending = true;
            if config.recompute_residual_on_fault {
                let mask = faults.mask();
                let all_columns = IndexMask::empty(system.dim());
                let b = system.rhs_augmented();
                for i in mask.viable() {
                    state.r[i] = b[i] - system.row_dot_masked(i, &state.x, &all_columns);
                }
                state.r_prev.clone_from(&state.r);
            }
        }
        observer(&state, &faults);
    };

    Ok(SolveOutput {
        state,
        trace: SolveTrace {
            records,
            termination,
        },
        faults,
    })
}

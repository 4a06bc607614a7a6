//! Erasure-coded conjugate gradient.
//!
//! An SPD system `A x = b` is augmented with `k` redundant rows and columns
//! built from an encoding matrix `E`. Conjugate gradient then runs on the
//! augmented system while fail-stop faults freeze up to `k` solution
//! components; the aggregation operations simply skip the frozen components.
//! When the run ends, the raw solution is recovered exactly from the
//! augmented iterate with one product by `E`.
//!
//! Modules:
//! - [`sparse`]: CSR storage, masked kernels, the 1-D model problem.
//! - [`mm`]: Matrix Market I/O.
//! - [`encoding`]: encoding matrix, augmented system, Kruskal rank, spectra.
//! - [`fault`]: process topologies, fault plans, live fault state.
//! - [`solver`]: the fault-oblivious CG iteration and its trace.
//! - [`recovery`]: solution recovery and the dense purified-system oracle.
//! - [`experiment`]: the experiment harness behind the `eccg` binary.

pub mod checks;
pub mod dense;
pub mod encoding;
pub mod error;
pub mod experiment;
pub mod fault;
pub mod mm;
pub mod recovery;
pub mod rng;
pub mod solver;
pub mod sparse;

pub use encoding::{build_encoded_system, gen_gaussian_encoding, EncodedSystem, EncodingMatrix};
pub use error::{Error, Result};
pub use fault::{build_topology, sample_fault_plan, FaultPlan, FaultState, Granularity, ProcessTopology};
pub use recovery::{recover, RecoveredSolution};
pub use solver::{solve, SolveTrace, SolverConfig, SolverState, Termination};
pub use sparse::{CsrMatrix, IndexMask};

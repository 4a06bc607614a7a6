//! Experiment harness: synthesize a right-hand side from a random solution in
//! `(0, 1)^n`, encode with a Gaussian matrix, sample one simultaneous fault
//! event, solve, recover and report.
//!
//! Defaults: tolerance `1e-10` on the masked residual 2-norm, at most `10 n`
//! iterations, fault point drawn from the first `0.25 n` iterations.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoding::{build_encoded_system, gen_gaussian_encoding, EncodedSystem};
use crate::error::{Error, Result};
use crate::fault::{build_topology, sample_fault_plan, FaultPlan, Granularity};
use crate::mm::{parse_matrix_market, parse_mm_array};
use crate::recovery::{recover, RecoveredSolution};
use crate::rng::{Stream, StreamId};
use crate::solver::{solve, SolveTrace, SolverConfig, Termination};
use crate::sparse::{gen_ltridiag, CsrMatrix};

/// Where the raw matrix comes from: `ltridiag:<n>` or a Matrix Market path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum MatrixSource {
    Ltridiag(usize),
    File(PathBuf),
}

impl FromStr for MatrixSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.strip_prefix("ltridiag:") {
            Some(n) => n
                .parse()
                .map(MatrixSource::Ltridiag)
                .map_err(|_| Error::Config(format!("bad generator size in `{s}`"))),
            None if s.is_empty() => Err(Error::Config("empty matrix source".into())),
            None => Ok(MatrixSource::File(PathBuf::from(s))),
        }
    }
}

impl TryFrom<String> for MatrixSource {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl fmt::Display for MatrixSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSource::Ltridiag(n) => write!(f, "ltridiag:{n}"),
            MatrixSource::File(p) => write!(f, "{}", p.display()),
        }
    }
}

impl From<MatrixSource> for String {
    fn from(m: MatrixSource) -> String {
        m.to_string()
    }
}

impl MatrixSource {
    /// Display name used in reports (`Ltridiag500`, or the file stem).
    pub fn name(&self) -> String {
        match self {
            MatrixSource::Ltridiag(n) => format!("Ltridiag{n}"),
            MatrixSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| p.display().to_string()),
        }
    }

    pub fn load(&self) -> Result<CsrMatrix> {
        match self {
            MatrixSource::Ltridiag(n) => gen_ltridiag(*n),
            MatrixSource::File(p) => {
                let file = File::open(p).map_err(|e| {
                    Error::Config(format!("cannot open matrix `{}`: {e}", p.display()))
                })?;
                parse_matrix_market(BufReader::new(file))
            }
        }
    }
}

/// Number of tolerated faults: an absolute count or a fraction of `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KSpecRepr", into = "String")]
pub enum KSpec {
    Count(usize),
    Fraction(f64),
}

#[derive(Deserialize)]
#[serde(untagged)]
enum KSpecRepr {
    Count(usize),
    Text(String),
}

impl TryFrom<KSpecRepr> for KSpec {
    type Error = Error;

    fn try_from(r: KSpecRepr) -> Result<Self> {
        match r {
            KSpecRepr::Count(c) => Ok(KSpec::Count(c)),
            KSpecRepr::Text(s) => s.parse(),
        }
    }
}

impl FromStr for KSpec {
    type Err = Error;

    /// `"100"` is a count; `"20%"` is a fraction of `n`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if let Some(pct) = s.strip_suffix('%') {
            let v: f64 = pct
                .parse()
                .map_err(|_| Error::Config(format!("bad percentage `{s}`")))?;
            if !(0.0..=100.0).contains(&v) {
                return Err(Error::Config(format!("percentage out of range: `{s}`")));
            }
            Ok(KSpec::Fraction(v / 100.0))
        } else {
            s.parse()
                .map(KSpec::Count)
                .map_err(|_| Error::Config(format!("bad k `{s}`")))
        }
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Count(c) => write!(f, "{c}"),
            KSpec::Fraction(x) => write!(f, "{}%", x * 100.0),
        }
    }
}

impl From<KSpec> for String {
    fn from(k: KSpec) -> String {
        k.to_string()
    }
}

impl KSpec {
    /// Fractions round down: 20% of 416 is 83.
    pub fn resolve(&self, n: usize) -> usize {
        match *self {
            KSpec::Count(c) => c,
            KSpec::Fraction(x) => (x * n as f64 + 1e-9).floor() as usize,
        }
    }
}

/// How the raw right-hand side is produced.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhsMode {
    /// `b = A x` with `x` uniform in `(0, 1)^n`.
    #[default]
    RandomUnitInterval,
    /// `b` read from a Matrix Market `n x 1` array file.
    File(PathBuf),
}

fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter_multiplier() -> f64 {
    10.0
}
fn default_fault_fraction() -> f64 {
    0.25
}
fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub matrix: MatrixSource,
    pub k: KSpec,
    #[serde(default)]
    pub seed: u64,
    /// Seed of the random solution; defaults to `seed`.
    #[serde(default)]
    pub rhs_seed: Option<u64>,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter_multiplier")]
    pub max_iter_multiplier: f64,
    #[serde(default = "default_fault_fraction")]
    pub fault_fraction: f64,
    #[serde(default)]
    pub rhs_mode: RhsMode,
    #[serde(default = "default_true")]
    pub recompute_residual_on_fault: bool,
}

impl ExperimentConfig {
    pub fn new(matrix: MatrixSource, k: KSpec) -> Self {
        Self {
            matrix,
            k,
            seed: 0,
            rhs_seed: None,
            tol: default_tol(),
            max_iter_multiplier: default_max_iter_multiplier(),
            fault_fraction: default_fault_fraction(),
            rhs_mode: RhsMode::default(),
            recompute_residual_on_fault: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(Error::Config(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter_multiplier.is_nan() || self.max_iter_multiplier <= 0.0 {
            return Err(Error::Config(format!(
                "max_iter_multiplier must be positive, got {}",
                self.max_iter_multiplier
            )));
        }
        if !(self.fault_fraction > 0.0 && self.fault_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "fault_fraction must lie in (0, 1], got {}",
                self.fault_fraction
            )));
        }
        Ok(())
    }

    pub fn max_iters(&self, n: usize) -> usize {
        ((self.max_iter_multiplier * n as f64).ceil() as usize).max(1)
    }
}

/// One row of a results table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub matrix: String,
    pub n: usize,
    pub nnz: usize,
    pub k: usize,
    pub seed: u64,
    pub iterations: usize,
    pub termination: Termination,
    pub converged: bool,
    pub raw_relative_residual: f64,
    pub fault_point: Option<usize>,
    pub n_faulty: usize,
}

pub const REPORT_HEADER: &str = "matrix,n,k,seed,iterations,converged,raw_rel_residual,fault_point";

impl ExperimentReport {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{:e},{}",
            self.matrix,
            self.n,
            self.k,
            self.seed,
            self.iterations,
            self.converged,
            self.raw_relative_residual,
            self.fault_point.map(|p| p.to_string()).unwrap_or_default()
        )
    }
}

/// Full output of one run.
#[derive(Debug, Clone)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub trace: SolveTrace,
    pub recovered: RecoveredSolution,
    pub plan: FaultPlan,
    /// The solution the right-hand side was synthesized from, when random.
    pub x_true: Option<Vec<f64>>,
}

struct Prepared {
    name: String,
    system: EncodedSystem,
    x_true: Option<Vec<f64>>,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    config.validate()?;
    let a = config.matrix.load()?;
    let n = a.n_rows();
    let k = config.k.resolve(n);
    if k > n {
        return Err(Error::Config(format!("k = {k} exceeds n = {n}")));
    }
    let (b, x_true) = match &config.rhs_mode {
        RhsMode::RandomUnitInterval => {
            let mut stream =
                Stream::sub_stream(config.rhs_seed.unwrap_or(config.seed), StreamId::Solution);
            let x: Vec<f64> = (0..n).map(|_| stream.uniform_open()).collect();
            (a.matvec(&x)?, Some(x))
        }
        RhsMode::File(path) => {
            let arr = parse_mm_array(BufReader::new(File::open(path)?))?;
            if arr.n_rows != n || arr.n_cols != 1 {
                return Err(Error::Config(format!(
                    "rhs file is {}x{}, expected {n}x1",
                    arr.n_rows, arr.n_cols
                )));
            }
            (arr.column_major, None)
        }
    };
    let e = gen_gaussian_encoding(n, k, config.seed)?;
    let system = build_encoded_system(&a, &b, &e)?;
    Ok(Prepared {
        name: config.matrix.name(),
        system,
        x_true,
    })
}

/// Runs the protocol with a sampled fault plan (none when `k = 0`).
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentRun> {
    let prepared = prepare(config)?;
    let plan = sample_fault_plan(
        prepared.system.n(),
        prepared.system.k(),
        config.fault_fraction,
        config.seed,
    )?;
    execute(config, prepared, plan)
}

/// Runs the protocol with an explicit fault plan.
pub fn run_experiment_with_plan(config: &ExperimentConfig, plan: &FaultPlan) -> Result<ExperimentRun> {
    let prepared = prepare(config)?;
    execute(config, prepared, plan.clone())
}

fn execute(config: &ExperimentConfig, prepared: Prepared, plan: FaultPlan) -> Result<ExperimentRun> {
    let system = &prepared.system;
    let (n, k) = (system.n(), system.k());
    let topology = build_topology(n, k, Granularity::Component)?;
    let mut solver_config = SolverConfig::new(config.tol, config.max_iters(n))?;
    solver_config.recompute_residual_on_fault = config.recompute_residual_on_fault;
    let output = solve(system, &plan, &topology, &solver_config)?;
    let recovered = recover(system, &output)?;
    let report = ExperimentReport {
        matrix: prepared.name.clone(),
        n,
        nnz: system.raw().nnz(),
        k,
        seed: config.seed,
        iterations: output.trace.iterations(),
        termination: output.trace.termination,
        converged: output.trace.converged(),
        raw_relative_residual: recovered.raw_relative_residual,
        fault_point: plan.fault_point(),
        n_faulty: output.faults.faulty_indices().len(),
    };
    Ok(ExperimentRun {
        report,
        trace: output.trace,
        recovered,
        plan,
        x_true: prepared.x_true,
    })
}

/// Per-k summary of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MedianRow {
    pub k: usize,
    pub runs: usize,
    pub median_iterations: f64,
    pub median_raw_relative_residual: f64,
}

#[derive(Debug, Clone)]
pub struct TableResult {
    pub rows: Vec<ExperimentReport>,
    pub medians: Vec<MedianRow>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let m = values.len();
    if m % 2 == 1 {
        values[m / 2]
    } else {
        0.5 * (values[m / 2 - 1] + values[m / 2])
    }
}

/// Runs every `(k, seed)` pair of the sweep. The right-hand side is shared by
/// all runs (drawn from `base.rhs_seed`, or `base.seed`); each run's seed
/// drives its encoding and fault plan. Runs execute in parallel; output order
/// is `k` major, seed minor.
pub fn run_table(base: &ExperimentConfig, k_list: &[KSpec], seeds: &[u64]) -> Result<TableResult> {
    let rhs_seed = base.rhs_seed.unwrap_or(base.seed);
    let jobs: Vec<(KSpec, u64)> = k_list
        .iter()
        .flat_map(|&k| seeds.iter().map(move |&s| (k, s)))
        .collect();
    let rows = jobs
        .par_iter()
        .map(|&(k, seed)| {
            let mut cfg = base.clone();
            cfg.k = k;
            cfg.seed = seed;
            cfg.rhs_seed = Some(rhs_seed);
            run_experiment(&cfg).map(|run| run.report)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut medians = Vec::new();
    for chunk in rows.chunks(seeds.len().max(1)) {
        if let Some(first) = chunk.first() {
            let mut iters: Vec<f64> = chunk.iter().map(|r| r.iterations as f64).collect();
            let mut res: Vec<f64> = chunk.iter().map(|r| r.raw_relative_residual).collect();
            medians.push(MedianRow {
                k: first.k,
                runs: chunk.len(),
                median_iterations: median(&mut iters),
                median_raw_relative_residual: median(&mut res),
            });
        }
    }
    Ok(TableResult { rows, medians })
}

impl TableResult {
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{REPORT_HEADER}")?;
        for r in &self.rows {
            writeln!(out, "{}", r.csv_row())?;
        }
        Ok(())
    }

    pub fn write_medians_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,runs,median_iterations,median_raw_rel_residual")?;
        for m in &self.medians {
            writeln!(
                out,
                "{},{},{},{:e}",
                m.k, m.runs, m.median_iterations, m.median_raw_relative_residual
            )?;
        }
        Ok(())
    }
}

/// Writes `bytes` to `path` through a temporary file and a rename.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension(match path.extension() {
        Some(ext) => format!("{}.tmp", ext.to_string_lossy()),
        None => "tmp".to_string(),
    });
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}

/// Figure data: `iteration,residual_norm,fault_event`, one row per record.
pub fn emit_figure_data(trace: &SolveTrace, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    writeln!(buf, "iteration,residual_norm,fault_event")?;
    for r in &trace.records {
        writeln!(buf, "{},{:e},{}", r.t, r.residual_norm, u8::from(r.fault_event))?;
    }
    write_atomic(path, &buf)
}

/// Writes `report.csv`, `trace.csv`, `trace.json`, `solution.json` and
/// `x_star.txt` into `dir`.
pub fn write_run_outputs(run: &ExperimentRun, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let report = format!("{REPORT_HEADER}\n{}\n", run.report.csv_row());
    write_atomic(&dir.join("report.csv"), report.as_bytes())?;

    let mut trace = Vec::new();
    run.trace.write_csv(&mut trace)?;
    write_atomic(&dir.join("trace.csv"), &trace)?;

    let mut summary = Vec::new();
    run.trace.write_summary_json(&mut summary)?;
    write_atomic(&dir.join("trace.json"), &summary)?;

    let mut solution = Vec::new();
    run.recovered.write_json(&mut solution)?;
    write_atomic(&dir.join("solution.json"), &solution)?;

    let mut x = Vec::new();
    run.recovered.write_vector(&mut x)?;
    write_atomic(&dir.join("x_star.txt"), &x)?;
    Ok(())
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use eccg::checks::{run_property_checks, CheckStatus};
use eccg::experiment::{
    emit_figure_data, run_experiment, run_experiment_with_plan, run_table, write_atomic,
    write_run_outputs, ExperimentConfig, ExperimentRun, KSpec, MatrixSource, RhsMode,
    REPORT_HEADER,
};
use eccg::{Error, FaultPlan, Result};

/// Erasure-coded conjugate gradient: fault-oblivious SPD solves with exact recovery.
#[derive(Parser)]
#[command(name = "eccg", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve once with an explicit fault plan (or none).
    Solve {
        #[command(flatten)]
        common: CommonArgs,
        /// JSON fault plan: {"events":[{"iteration":N,"victim_indices":[...]}]}
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Right-hand side as a Matrix Market n x 1 array (default: b = A x, x random in (0,1)^n)
        #[arg(long)]
        rhs: Option<PathBuf>,
    },
    /// One run of the experiment protocol with a sampled fault plan.
    Experiment {
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Sweep k values and seeds; CSV rows plus per-k medians.
    Table {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma separated k values, e.g. `0,1,20%`
        #[arg(long, default_value = "0,1,20%")]
        k_list: String,
        /// Number of consecutive seeds starting at --seed
        #[arg(long, default_value_t = 5)]
        seeds: u64,
    },
    /// Encoding and recovery property checks on a matrix.
    Check {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, default_value_t = 3)]
        seeds: u64,
    },
}

#[derive(Args, Clone)]
struct CommonArgs {
    /// `ltridiag:<n>` or a Matrix Market file
    #[arg(long)]
    matrix: Option<String>,
    /// JSON experiment configuration; flags given explicitly override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Number of tolerated faults
    #[arg(long, conflicts_with = "k_frac")]
    k: Option<usize>,
    /// Tolerated faults as a fraction of n
    #[arg(long)]
    k_frac: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    tol: Option<f64>,
    /// Iteration limit as a multiple of n
    #[arg(long)]
    max_iter_mult: Option<f64>,
    /// Fault point is drawn from the first fault-frac * n iterations
    #[arg(long)]
    fault_frac: Option<f64>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Write figure data (iteration, residual, fault marker) to this CSV
    #[arg(long)]
    trace: Option<PathBuf>,
}

impl CommonArgs {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match (&self.config, &self.matrix) {
            (Some(path), _) => ExperimentConfig::load(path)?,
            (None, Some(_)) => ExperimentConfig::new(MatrixSource::Ltridiag(2), KSpec::Count(0)),
            (None, None) => return Err(Error::Config("--matrix or --config is required".into())),
        };
        if let Some(m) = &self.matrix {
            cfg.matrix = m.parse()?;
        }
        if let Some(k) = self.k {
            cfg.k = KSpec::Count(k);
        }
        if let Some(f) = self.k_frac {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Config(format!("--k-frac must lie in [0, 1], got {f}")));
            }
            cfg.k = KSpec::Fraction(f);
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.tol {
            cfg.tol = t;
        }
        if let Some(m) = self.max_iter_mult {
            cfg.max_iter_multiplier = m;
        }
        if let Some(f) = self.fault_frac {
            cfg.fault_fraction = f;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn finish_run(run: &ExperimentRun, common: &CommonArgs) -> Result<()> {
    println!("{REPORT_HEADER}");
    println!("{}", run.report.csv_row());
    eprintln!(
        "termination: {:?}, faulty components: {}",
        run.trace.termination, run.report.n_faulty
    );
    if let Some(dir) = &common.out_dir {
        write_run_outputs(run, dir)?;
        run.plan.save(&dir.join("plan.json"))?;
    }
    if let Some(path) = &common.trace {
        emit_figure_data(&run.trace, path)?;
    }
    Ok(())
}

fn parse_k_list(s: &str) -> Result<Vec<KSpec>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(str::parse)
        .collect()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Solve { common, plan, rhs } => {
            let mut cfg = common.config()?;
            if let Some(path) = rhs {
                cfg.rhs_mode = RhsMode::File(path);
            }
            let plan = match plan {
                Some(p) => FaultPlan::load(&p)?,
                None => FaultPlan::none(),
            };
            let run = run_experiment_with_plan(&cfg, &plan)?;
            finish_run(&run, &common)
        }
        Command::Experiment { common } => {
            let cfg = common.config()?;
            let run = run_experiment(&cfg)?;
            finish_run(&run, &common)
        }
        Command::Table { common, k_list, seeds } => {
            let cfg = common.config()?;
            let ks = parse_k_list(&k_list)?;
            let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
            let table = run_table(&cfg, &ks, &seed_list)?;
            let mut rows = Vec::new();
            table.write_csv(&mut rows)?;
            let mut medians = Vec::new();
            table.write_medians_csv(&mut medians)?;
            print!("{}", String::from_utf8_lossy(&rows));
            eprint!("{}", String::from_utf8_lossy(&medians));
            if let Some(dir) = &common.out_dir {
                std::fs::create_dir_all(dir)?;
                write_atomic(&dir.join("table.csv"), &rows)?;
                write_atomic(&dir.join("medians.csv"), &medians)?;
            }
            Ok(())
        }
        Command::Check { common, seeds } => {
            let cfg = common.config()?;
            let a = cfg.matrix.load()?;
            let k = cfg.k.resolve(a.n_rows());
            let seed_list: Vec<u64> = (0..seeds).map(|i| cfg.seed + i).collect();
            let results = run_property_checks(&a, k, &seed_list)?;
            for r in &results {
                println!("{r}");
            }
            if results.iter().any(|r| r.status == CheckStatus::Fail) {
                return Err(Error::Numerical("property check failed".into()));
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

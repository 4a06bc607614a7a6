//! Worked examples with hand-computed or independently computed answers.

mod common;

use eccg::dense::{symmetric_eigen, DenseMatrix};
use eccg::encoding::{kruskal_rank_exact, kruskal_rank_operative, spectrum_diagnostics};
use eccg::experiment::{
    emit_figure_data, run_experiment, run_experiment_with_plan, run_table, ExperimentConfig,
    KSpec, MatrixSource,
};
use eccg::fault::FaultEvent;
use eccg::mm::parse_matrix_market;
use eccg::recovery::{
    apply_recovery_equation, purified_oracle, purified_oracle_with_cutoff, raw_relative_residual,
};
use eccg::solver::{solve_observed, step, StepOutcome};
use eccg::sparse::{gen_ltridiag, inner_masked, norm2_masked, spmv_masked};
use eccg::*;

use common::{dense_solve, max_abs_diff};

fn mask(n: usize, ex: &[usize]) -> IndexMask {
    IndexMask::new(n, ex.iter().copied()).unwrap()
}

#[test]
fn symmetric_coordinate_file_expands() {
    let text = "%%MatrixMarket matrix coordinate real symmetric\n3 3 2\n1 1 2.0\n2 1 -1.0\n";
    let a = parse_matrix_market(text.as_bytes()).unwrap();
    assert_eq!(a.nnz(), 3);
    assert_eq!(a.get(0, 0), 2.0);
    assert_eq!(a.get(1, 0), -1.0);
    assert_eq!(a.get(0, 1), -1.0);
    assert_eq!(a.get(2, 2), 0.0);
}

#[test]
fn model_problem_stencil() {
    let a3 = gen_ltridiag(3).unwrap();
    assert_eq!(a3.to_dense(), vec![2.0, -1.0, 0.0, -1.0, 2.0, -1.0, 0.0, -1.0, 2.0]);
    assert_eq!(a3.nnz(), 7);
    assert_eq!(gen_ltridiag(500).unwrap().nnz(), 1498);
    let a2 = gen_ltridiag(2).unwrap();
    let eig = symmetric_eigen(&DenseMatrix::from_row_major(2, 2, a2.to_dense()).unwrap()).unwrap();
    assert!((eig.eigenvalues[0] - 1.0).abs() < 1e-14);
    assert!((eig.eigenvalues[1] - 3.0).abs() < 1e-14);
}

#[test]
fn masked_kernels() {
    let i3 = CsrMatrix::identity(3);
    let out = spmv_masked(&i3, &[1.0, 2.0, 3.0], &mask(3, &[1]), &mask(3, &[1])).unwrap();
    assert_eq!((out[0], out[2]), (1.0, 3.0));

    let t3 = gen_ltridiag(3).unwrap();
    let none = mask(3, &[]);
    assert_eq!(spmv_masked(&t3, &[1.0; 3], &none, &none).unwrap(), vec![1.0, 0.0, 1.0]);
    let m2 = mask(3, &[2]);
    let out = spmv_masked(&t3, &[1.0; 3], &m2, &m2).unwrap();
    // dense product with column 2 zeroed
    let mut dense = t3.to_dense();
    for i in 0..3 {
        dense[i * 3 + 2] = 0.0;
    }
    let reference = common::dense_matvec(&dense, &[1.0; 3]);
    assert_eq!(&out[..2], &reference[..2]);
    assert_eq!(&out[..2], &[1.0, 1.0]);

    assert_eq!(inner_masked(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], &mask(3, &[2])).unwrap(), 14.0);
    assert_eq!(inner_masked(&[3.0, 4.0], &[3.0, 4.0], &mask(2, &[])).unwrap(), 25.0);
    assert_eq!(inner_masked(&[1.0, 1.0], &[1.0, 1.0], &mask(2, &[0, 1])).unwrap(), 0.0);
    assert_eq!(norm2_masked(&[3.0, 4.0], &mask(2, &[])).unwrap(), 5.0);
    assert_eq!(norm2_masked(&[3.0, 4.0, 12.0], &mask(3, &[2])).unwrap(), 5.0);
    assert_eq!(norm2_masked(&[0.0; 4], &mask(4, &[])).unwrap(), 0.0);
}

#[test]
fn encoding_examples() {
    let e0 = gen_gaussian_encoding(2, 0, 3).unwrap();
    assert_eq!(e0.k(), 0);
    let a = gen_ltridiag(2).unwrap();
    let sys = build_encoded_system(&a, &[1.0, 0.0], &e0).unwrap();
    assert_eq!(sys.to_dense().data, a.to_dense());

    let e = EncodingMatrix::from_column_major(2, 1, vec![1.0, 0.0]).unwrap();
    let sys = build_encoded_system(&CsrMatrix::identity(2), &[1.0, 1.0], &e).unwrap();
    assert_eq!(sys.to_dense().data, vec![1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    assert_eq!(sys.rhs_augmented(), &[1.0, 1.0, 1.0]);

    assert_eq!(
        gen_gaussian_encoding(40, 3, 11).unwrap(),
        gen_gaussian_encoding(40, 3, 11).unwrap()
    );
}

#[test]
fn kruskal_examples() {
    let eye = DenseMatrix::from_row_major(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
    assert_eq!(kruskal_rank_exact(&eye).unwrap(), 2);
    let ones = DenseMatrix::from_row_major(2, 2, vec![1.0; 4]).unwrap();
    assert_eq!(kruskal_rank_exact(&ones).unwrap(), 1);
    let three = DenseMatrix::from_row_major(2, 3, vec![1.0, 0.0, 1.0, 0.0, 1.0, 1.0]).unwrap();
    assert_eq!(kruskal_rank_exact(&three).unwrap(), 2);

    let e = gen_gaussian_encoding(50, 4, 2).unwrap();
    assert!(kruskal_rank_operative(&e, &[]));
    for seed in 0..20 {
        let plan = sample_fault_plan(50, 4, 0.25, seed).unwrap();
        assert!(kruskal_rank_operative(&e, &plan.events[0].victim_indices));
    }
    // zero row 1 of E
    let zero_row = EncodingMatrix::from_column_major(3, 2, vec![1.0, 0.0, 2.0, 3.0, 0.0, 1.0]).unwrap();
    assert!(!kruskal_rank_operative(&zero_row, &[1]));
}

#[test]
fn spectrum_examples() {
    let a = gen_ltridiag(2).unwrap();
    let sys = build_encoded_system(&a, &[1.0, 0.0], &EncodingMatrix::empty(2)).unwrap();
    let s = spectrum_diagnostics(&sys).unwrap();
    assert!((s.kappa_e - 3.0).abs() < 1e-13);
    assert_eq!(s.zero_eigenvalue_count, 0);

    let a8 = gen_ltridiag(8).unwrap();
    let e = gen_gaussian_encoding(8, 2, 4).unwrap();
    let sys = build_encoded_system(&a8, &[1.0; 8], &e).unwrap();
    let s = spectrum_diagnostics(&sys).unwrap();
    let ev = &s.augmented_eigenvalues;
    assert!(ev[0].abs() <= 1e-10 * ev[9] && ev[1].abs() <= 1e-10 * ev[9]);
    assert!(s.raw_eigenvalues[0] <= ev[2]);
    assert_eq!(s.zero_eigenvalue_count, 2);
}

#[test]
fn topology_examples() {
    let t = build_topology(4, 1, Granularity::Component).unwrap();
    assert_eq!(t.n_processes(), 5);
    assert_eq!(t.reliable_processes(), &[4]);
    assert_eq!(t.indices(4), &[4]);

    let t = build_topology(6, 2, Granularity::Blocks(3)).unwrap();
    assert_eq!(t.indices(0), &[0, 1]);
    assert_eq!(t.indices(1), &[2, 3]);
    assert_eq!(t.indices(2), &[4, 5]);
    assert_eq!(t.indices(3), &[6, 7]);
    assert_eq!(t.reliable_processes(), &[3]);

    let t = build_topology(4, 0, Granularity::Blocks(2)).unwrap();
    assert_eq!(t.n_processes(), 2);
    assert!(t.reliable_processes().is_empty());
}

#[test]
fn fault_plan_examples() {
    assert!(sample_fault_plan(10, 0, 0.25, 1).unwrap().is_empty());
    for seed in 0..50 {
        let plan = sample_fault_plan(500, 1, 0.25, seed).unwrap();
        let ev = &plan.events[0];
        assert!((1..=125).contains(&ev.iteration));
        assert_eq!(ev.victim_indices.len(), 1);
        assert!(ev.victim_indices[0] < 500);
        assert_eq!(plan, sample_fault_plan(500, 1, 0.25, seed).unwrap());
    }
}

#[test]
fn fault_state_examples() {
    let topo = build_topology(6, 2, Granularity::Component).unwrap();
    let plan = FaultPlan {
        events: vec![
            FaultEvent {
                iteration: 5,
                victim_indices: vec![1],
            },
            FaultEvent {
                iteration: 7,
                victim_indices: vec![3],
            },
            FaultEvent {
                iteration: 9,
                victim_indices: vec![4],
            },
        ],
    };
    let plan_single = FaultPlan {
        events: vec![plan.events[1].clone()],
    };
    let mut fs = FaultState::new(&topo);
    let mut x = vec![0.0; 8];
    assert!(!fs.advance(&plan_single, &topo, 6, &x).unwrap());
    assert!(fs.faulty_indices().is_empty());
    x[3] = 0.42;
    assert!(fs.advance(&plan_single, &topo, 7, &x).unwrap());
    assert_eq!(fs.snapshots().get(&3), Some(&0.42));

    let two = FaultPlan {
        events: vec![plan.events[0].clone(), plan.events[2].clone()],
    };
    let two_topo = build_topology(6, 2, Granularity::Component).unwrap();
    let mut fs = FaultState::new(&two_topo);
    for t in 1..=10 {
        let x: Vec<f64> = (0..8).map(|i| (t * 10 + i) as f64).collect();
        fs.advance(&two, &two_topo, t, &x).unwrap();
        match t {
            1..=4 => assert!(fs.faulty_indices().is_empty()),
            5..=8 => assert_eq!(fs.faulty_indices(), &[1]),
            _ => assert_eq!(fs.faulty_indices(), &[1, 4]),
        }
    }
    assert_eq!(fs.snapshots().get(&1), Some(&51.0));
    assert_eq!(fs.snapshots().get(&4), Some(&94.0));
}

#[test]
fn identity_system_converges_in_one_step() {
    let b = vec![0.25, -3.0, 1.5, 8.0];
    let sys = build_encoded_system(&CsrMatrix::identity(4), &b, &EncodingMatrix::empty(4)).unwrap();
    let topo = build_topology(4, 0, Granularity::Component).unwrap();
    let out = solve(&sys, &FaultPlan::none(), &topo, &SolverConfig::new(1e-10, 40).unwrap()).unwrap();
    assert_eq!(out.trace.iterations(), 1);
    assert_eq!(out.state.x, b);
}

#[test]
fn model_problem_without_faults() {
    let cfg = ExperimentConfig::new(MatrixSource::Ltridiag(500), KSpec::Count(0)).with_seed(1);
    let run = run_experiment(&cfg).unwrap();
    assert!((480..=520).contains(&run.report.iterations));
    assert!(run.report.raw_relative_residual <= 1e-12);
    assert!(run.report.converged);
}

fn faulted_ltridiag8() -> (EncodedSystem, Vec<f64>, FaultPlan) {
    let a = gen_ltridiag(8).unwrap();
    let x_true = common::random_unit(8, 21);
    let b = a.matvec(&x_true).unwrap();
    let e = gen_gaussian_encoding(8, 2, 21).unwrap();
    let sys = build_encoded_system(&a, &b, &e).unwrap();
    let plan = FaultPlan {
        events: vec![FaultEvent {
            iteration: 2,
            victim_indices: vec![2, 5],
        }],
    };
    (sys, x_true, plan)
}

#[test]
fn small_faulted_run_matches_dense_oracles() {
    let (sys, _x_true, plan) = faulted_ltridiag8();
    let topo = build_topology(8, 2, Granularity::Component).unwrap();
    let cfg = SolverConfig::new(1e-10, 80).unwrap();
    let out = solve(&sys, &plan, &topo, &cfg).unwrap();
    assert_eq!(out.trace.termination, Termination::Converged);
    assert!(out.trace.final_residual_norm() <= 1e-10);

    let faulty = out.faults.faulty_indices().to_vec();
    assert_eq!(faulty, vec![2, 5]);
    let f: Vec<f64> = faulty.iter().map(|i| out.faults.snapshots()[i]).collect();
    let oracle = purified_oracle(&sys, &faulty, &f).unwrap();
    let from_oracle = apply_recovery_equation(&sys, &oracle).unwrap();
    let rec = recover(&sys, &out).unwrap();
    assert!(max_abs_diff(&rec.x_star, &from_oracle) <= 1e-8);

    let direct = dense_solve(&sys.raw().to_dense(), sys.rhs_raw());
    assert!(max_abs_diff(&rec.x_star, &direct) <= 1e-8);
}

#[test]
fn step_without_mask_is_textbook_cg() {
    let a = common::random_spd(12, 0.3, 5);
    let b = common::random_unit(12, 5);
    let sys = build_encoded_system(&a, &b, &EncodingMatrix::empty(12)).unwrap();
    let reference = common::reference_cg(&a.to_dense(), &b, 0.0, 5);
    let none = IndexMask::empty(12);
    let mut state = SolverState::initial(&sys);
    for expected in &reference {
        let StepOutcome::Advanced(next) = step(&state, &sys, &none).unwrap() else {
            panic!("unexpected stop")
        };
        assert_eq!(&next.x, expected);
        state = next;
    }
}

#[test]
fn zero_residual_stops_before_alpha() {
    let a = gen_ltridiag(4).unwrap();
    let sys = build_encoded_system(&a, &[0.0; 4], &EncodingMatrix::empty(4)).unwrap();
    let s = SolverState::initial(&sys);
    assert_eq!(step(&s, &sys, &IndexMask::empty(4)).unwrap(), StepOutcome::Converged);
}

#[test]
fn first_step_after_fault_is_truncated() {
    let (sys, _, plan) = faulted_ltridiag8();
    let topo = build_topology(8, 2, Granularity::Component).unwrap();
    let cfg = SolverConfig::new(1e-10, 80).unwrap();
    let mut seen = Vec::new();
    let out = solve_observed(&sys, &plan, &topo, &cfg, |s, _| {
        seen.push((s.t, s.truncate_next, s.r.clone()))
    })
    .unwrap();
    let rec = &out.trace.records[2];
    assert!(rec.fault_event && rec.truncated);
    assert_eq!(out.trace.records.iter().filter(|r| r.fault_event).count(), 1);
    assert_eq!(out.trace.records.iter().filter(|r| r.truncated).count(), 1);
    // the step taken at t = 2 starts from p = r on viable rows
    let (_, flag, r_after_fault) = &seen[1];
    assert!(*flag);
    let mask = out.faults.mask().clone();
    let mut s = SolverState::initial(&sys);
    s.r = r_after_fault.clone();
    s.r_prev = r_after_fault.clone();
    s.t = 2;
    s.truncate_next = true;
    s.p = vec![7.0; sys.dim()];
    let StepOutcome::Advanced(next) = step(&s, &sys, &mask).unwrap() else {
        panic!("unexpected stop")
    };
    for i in mask.viable() {
        assert_eq!(next.p[i], r_after_fault[i]);
    }
    assert_eq!(next.beta, 0.0);
}

#[test]
fn recovery_examples() {
    let a = gen_ltridiag(5).unwrap();
    let x_true = common::random_unit(5, 2);
    let b = a.matvec(&x_true).unwrap();
    let e = gen_gaussian_encoding(5, 2, 2).unwrap();
    let sys = build_encoded_system(&a, &b, &e).unwrap();
    let mut aug = x_true.clone();
    aug.extend([0.0, 0.0]);
    assert_eq!(apply_recovery_equation(&sys, &aug).unwrap(), x_true);

    let sys0 = build_encoded_system(&a, &b, &EncodingMatrix::empty(5)).unwrap();
    let topo = build_topology(5, 0, Granularity::Component).unwrap();
    let out = solve(&sys0, &FaultPlan::none(), &topo, &SolverConfig::new(1e-12, 50).unwrap()).unwrap();
    let rec = recover(&sys0, &out).unwrap();
    assert_eq!(rec.x_star, out.state.x);
    assert_eq!(
        rec.raw_relative_residual,
        raw_relative_residual(&a, &b, &out.state.x).unwrap()
    );
}

#[test]
fn purified_oracle_examples() {
    let (sys, x_true, _) = faulted_ltridiag8();
    let full = sys.matvec(&purified_oracle(&sys, &[], &[]).unwrap()).unwrap();
    assert!(max_abs_diff(&full, sys.rhs_augmented()) <= 1e-10);

    let faulty = [1usize, 6];
    let f = [0.3, -2.0];
    let sol = purified_oracle(&sys, &faulty, &f).unwrap();
    assert_eq!((sol[1], sol[6]), (0.3, -2.0));
    let full = sys.matvec(&sol).unwrap();
    assert!(max_abs_diff(&full, sys.rhs_augmented()) <= 1e-8);

    let loose = purified_oracle_with_cutoff(&sys, &faulty, &f, 1e-6).unwrap();
    let r1 = apply_recovery_equation(&sys, &sol).unwrap();
    let r2 = apply_recovery_equation(&sys, &loose).unwrap();
    assert!(max_abs_diff(&r1, &r2) <= 1e-8);
    assert!(max_abs_diff(&r1, &x_true) <= 1e-8);
}

#[test]
fn raw_residual_examples() {
    let a = gen_ltridiag(2).unwrap();
    let r = raw_relative_residual(&a, &[1.0, 0.0], &[2.0 / 3.0, 1.0 / 3.0]).unwrap();
    assert!(r <= 1e-15);
    assert_eq!(raw_relative_residual(&a, &[1.0, 0.0], &[0.0, 0.0]).unwrap(), 1.0);
    assert!(matches!(
        raw_relative_residual(&a, &[0.0, 0.0], &[1.0, 1.0]),
        Err(Error::ZeroRhs { .. })
    ));
}

#[test]
fn small_run_is_reproducible() {
    let cfg = ExperimentConfig::new(MatrixSource::Ltridiag(8), KSpec::Count(2)).with_seed(17);
    let a = run_experiment(&cfg).unwrap();
    let b = run_experiment(&cfg).unwrap();
    assert_eq!(a.report.csv_row(), b.report.csv_row());
    let (mut ta, mut tb) = (Vec::new(), Vec::new());
    a.trace.write_csv(&mut ta).unwrap();
    b.trace.write_csv(&mut tb).unwrap();
    assert_eq!(ta, tb);
}

#[test]
fn table_examples() {
    let base = ExperimentConfig::new(MatrixSource::Ltridiag(500), KSpec::Count(0)).with_seed(1);
    let ks = [KSpec::Count(0), KSpec::Count(1), KSpec::Count(100)];
    let seeds: Vec<u64> = (1..=5).collect();
    let t = run_table(&base, &ks, &seeds).unwrap();
    assert_eq!(t.rows.len(), 15);
    let k0: Vec<usize> = t.rows.iter().filter(|r| r.k == 0).map(|r| r.iterations).collect();
    assert_eq!(k0.len(), 5);
    assert!(k0.iter().all(|&it| it == k0[0]));

    let empty = run_table(&base, &[], &seeds).unwrap();
    assert!(empty.rows.is_empty() && empty.medians.is_empty());
}

#[test]
fn figure_data_examples() {
    let dir = tempfile::tempdir().unwrap();

    let cfg = ExperimentConfig::new(MatrixSource::Ltridiag(60), KSpec::Count(0)).with_seed(3);
    let run = run_experiment(&cfg).unwrap();
    let path = dir.path().join("clean.csv");
    emit_figure_data(&run.trace, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), run.trace.records.len());
    let last: f64 = rows.last().unwrap().split(',').nth(1).unwrap().parse().unwrap();
    assert!(last <= 1e-10);
    assert!(rows.iter().all(|r| r.ends_with(",0")));

    let cfg = ExperimentConfig::new(MatrixSource::Ltridiag(500), KSpec::Fraction(0.2)).with_seed(1);
    let run = run_experiment(&cfg).unwrap();
    let path = dir.path().join("faulted.csv");
    emit_figure_data(&run.trace, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    let rows: Vec<(usize, f64, bool)> = text
        .lines()
        .skip(1)
        .map(|l| {
            let mut it = l.split(',');
            (
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap().parse().unwrap(),
                it.next().unwrap() == "1",
            )
        })
        .collect();
    let flagged: Vec<usize> = rows.iter().filter(|r| r.2).map(|r| r.0).collect();
    assert_eq!(flagged, vec![run.plan.fault_point().unwrap()]);
    // the faulty rows leave the monitored norm and the direction restarts:
    // the log-residual moves across the fault far more than between
    // ordinary rows before it
    let at = flagged[0];
    let step = |i: usize| (rows[i].1 / rows[i - 1].1).ln().abs();
    let ordinary = (at.saturating_sub(20).max(1)..at).map(step).fold(0.0, f64::max);
    let across = (rows[at + 1].1 / rows[at - 1].1).ln().abs();
    assert!(across > 2.0 * ordinary, "no jump at the fault row: {across} vs {ordinary}");
    assert!(rows.last().unwrap().1 <= 1e-10);
    assert!(rows.len() <= 10 * 500 + 1);
}

#[test]
fn explicit_plan_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let plan = FaultPlan {
        events: vec![FaultEvent {
            iteration: 3,
            victim_indices: vec![0, 9],
        }],
    };
    let path = dir.path().join("plan.json");
    plan.save(&path).unwrap();
    assert_eq!(FaultPlan::load(&path).unwrap(), plan);
    let cfg = ExperimentConfig::new(MatrixSource::Ltridiag(20), KSpec::Count(2)).with_seed(8);
    let run = run_experiment_with_plan(&cfg, &plan).unwrap();
    assert!(run.report.converged);
    assert_eq!(run.report.n_faulty, 2);
    assert!(run.report.raw_relative_residual <= 1e-12);
}

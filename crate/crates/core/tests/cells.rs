mod common;

use common::{CellOracle, ALL_KINDS};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use stlf_core::cells::{cell_init, CellKind, CellSizes, CellSpec, Connection};
use stlf_core::gradcheck::{check_cell, CellProblem};

fn spec(kind: CellKind, connection: Connection, input: usize, s_h: usize, s_y: usize, d: usize) -> CellSpec {
    CellSpec { kind, connection, input_size: input, sizes: CellSizes::symmetric(s_h, s_y), dilation: d }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn forward_matches_scalar_oracle(
        which in 0usize..ALL_KINDS.len(),
        input in 1usize..6,
        s_h in 1usize..6,
        s_y in 1usize..6,
        d in 1usize..8,
        steps in 1usize..15,
        seed in any::<u64>(),
    ) {
        let (kind, conn) = ALL_KINDS[which];
        let (params, mut state) = cell_init(spec(kind, conn, input, s_h, s_y, d), seed).unwrap();
        let mut oracle = CellOracle::new(&params);
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for _ in 0..steps {
            let x: Vec<f64> = (0..input).map(|_| rng.random_range(-2.0..2.0)).collect();
            let y = params.forward(&mut state, &x).unwrap();
            let expected = oracle.step(&x);
            prop_assert_eq!(y.len(), expected.len());
            for (a, b) in y.iter().zip(&expected) {
                prop_assert!((a - b).abs() <= 1e-12, "{:?}: {} vs {}", kind, a, b);
            }
        }
    }

    #[test]
    fn forward_is_deterministic(which in 0usize..ALL_KINDS.len(), seed in any::<u64>()) {
        let (kind, conn) = ALL_KINDS[which];
        let (params, state) = cell_init(spec(kind, conn, 3, 2, 2, 2), seed).unwrap();
        let x = [0.5, -0.25, 1.0];
        let mut s1 = state.clone();
        let mut s2 = state;
        for _ in 0..4 {
            prop_assert_eq!(params.forward(&mut s1, &x).unwrap(), params.forward(&mut s2, &x).unwrap());
        }
    }
}

#[test]
fn single_step_lstm_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let problem = CellProblem::random(spec(CellKind::Lstm, Connection::RecentOnly, 4, 3, 3, 1), 1, &mut rng);
    let report = check_cell(&problem, 11, false).unwrap();
    assert!(report.passes(1e-4), "{report:#?}");
}

#[test]
fn twenty_step_adrnn_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let problem = CellProblem::random(spec(CellKind::AdRnn, Connection::Both, 4, 3, 3, 4), 20, &mut rng);
    let report = check_cell(&problem, 12, false).unwrap();
    assert!(report.passes(1e-3), "{report:#?}");
}

#[test]
fn gradients_match_finite_differences_for_random_configs() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for (kind, conn) in ALL_KINDS {
        for trial in 0..4 {
            let input = rng.random_range(2..=8);
            let s_h = rng.random_range(2..=8);
            let s_y = rng.random_range(2..=8);
            let d = rng.random_range(1..=4);
            let steps = rng.random_range(5..=20);
            let problem = CellProblem::random(spec(kind, conn, input, s_h, s_y, d), steps, &mut rng);
            let report = check_cell(&problem, trial, false).unwrap();
            assert!(report.passes(1e-3), "{kind:?}/{conn:?} trial {trial}: {report:#?}");
        }
    }
}

#[test]
fn corrupted_gradient_is_caught() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let problem = CellProblem::random(spec(CellKind::DRnn, Connection::Both, 3, 3, 3, 2), 6, &mut rng);
    let report = check_cell(&problem, 5, true).unwrap();
    assert!(!report.passes(1e-3));
    assert!(report.blocks[0].worst_relative_error > 1e-3);
}

#[test]
fn delayed_only_lstm_reads_lag_d() {
    // Perturbing the input one step back must not reach the delayed-only
    // cell's recurrent inputs at the next step; perturbing d steps back must.
    let d = 3;
    let (params, state) = cell_init(spec(CellKind::Lstm, Connection::DelayedOnly, 2, 3, 3, d), 8).unwrap();
    let run = |perturb_at: Option<usize>| {
        let mut st = state.clone();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut outs = Vec::new();
        for t in 0..6 {
            let mut x: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
            if perturb_at == Some(t) {
                x[0] += 0.5;
            }
            outs.push(params.forward(&mut st, &x).unwrap());
        }
        outs
    };
    let base = run(None);
    let early = run(Some(4));
    assert_eq!(base[5], early[5]);
    let far = run(Some(2));
    assert_ne!(base[5], far[5]);
}

use kancfd::continual::{Metric, TrainerConfig, TrainerState};
use kancfd::kanheads::{DetectorHead, DgLayer, DgkdHead, Parameterized, RbfParams};
use kancfd::numcore::{DenseMatrix, RngStream};
use kancfd::synthbench::{gen_sequence, Dataset, Protocol};

fn dgkd(state: &TrainerState) -> DgkdHead {
    match &state.head {
        DetectorHead::Dgkd(h) => h.clone(),
        DetectorHead::Baseline(_) => unreachable!(),
    }
}

/// Trains both tasks of the separated protocol and returns the state together
/// with the task-1 accuracy right after task 1 and after task 2.
fn two_separated_tasks(cfg: TrainerConfig) -> (Vec<u64>, TrainerState, f64, f64) {
    let splits = gen_sequence(Protocol::TwoTaskSeparated, cfg.seed).unwrap().generate_all().unwrap();
    let evals: Vec<Dataset> = splits.iter().map(|(_, e)| e.clone()).collect();
    let mut state = TrainerState::new(cfg).unwrap();
    state.train_task(&splits[0].0).unwrap();
    state.record_scores(&evals).unwrap();
    let bits = dgkd(&state).layers()[0].params().iter().map(|v| v.to_bits()).collect();
    state.train_task(&splits[1].0).unwrap();
    state.record_scores(&evals).unwrap();
    let acc = state.scores.rows(Metric::Acc);
    let (before, after) = (acc[0][0], acc[1][0]);
    (bits, state, before, after)
}

#[test]
fn old_layer_is_bit_identical_after_the_next_task() {
    let (bits, state, _, _) = two_separated_tasks(TrainerConfig { seed: 1, ..TrainerConfig::default() });
    let head = dgkd(&state);
    assert!(head.layers()[0].is_frozen());
    assert!(!head.layers()[1].is_frozen());
    let now: Vec<u64> = head.layers()[0].params().iter().map(|v| v.to_bits()).collect();
    assert_eq!(now, bits);
}

#[test]
fn one_dimension_per_group_keeps_most_of_the_separated_task() {
    for seed in [1, 2, 3] {
        let cfg = TrainerConfig {
            seed,
            groups: TrainerConfig::default().feature_dim,
            ..TrainerConfig::default()
        };
        let (_, _, before, after) = two_separated_tasks(cfg);
        assert!(after >= 0.97 * before, "seed {seed}: {before} -> {after}");
    }
}

#[test]
fn new_layer_is_silent_far_from_its_centers() {
    let mut rng = RngStream::new(5);
    for _ in 0..50 {
        let rbfs: Vec<RbfParams> = (0..4)
            .map(|_| RbfParams::new(rng.normal(), rng.uniform_range(0.2, 1.0)))
            .collect();
        let w = DenseMatrix::from_vec(1, 8, (0..8).map(|_| rng.normal()).collect()).unwrap();
        let layer = DgLayer::new(2, w.clone(), rbfs.clone()).unwrap();
        // Every input at least six widths from its group center.
        let x: Vec<f64> = (0..8)
            .map(|i| {
                let p = rbfs[layer.group_of(i)];
                p.center + p.width * rng.uniform_range(6.0, 9.0) * if i % 2 == 0 { 1.0 } else { -1.0 }
            })
            .collect();
        let bound = 8.0 * w.max_abs() * (-18.0_f64).exp();
        assert!(layer.forward(&x).unwrap()[0].abs() <= bound);
    }
}

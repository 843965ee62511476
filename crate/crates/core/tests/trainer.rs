use kancfd::continual::{run_sequence, Ablation, Metric, TrainerConfig, TrainerState};
use kancfd::kanheads::{DetectorHead, HeadKind, Parameterized};
use kancfd::synthbench::{gen_sequence_with, BenchParams, Protocol};

fn small_splits(protocol: Protocol, seed: u64) -> Vec<(kancfd::synthbench::Dataset, kancfd::synthbench::Dataset)> {
    let params = BenchParams {
        n_train: 200,
        n_eval: 100,
        ..BenchParams::default()
    };
    gen_sequence_with(protocol, seed, &params).unwrap().generate_all().unwrap()
}

fn small_config(seed: u64) -> TrainerConfig {
    TrainerConfig {
        epochs: 2,
        memory_budget: 40,
        seed,
        ..TrainerConfig::default()
    }
}

fn csv(state: &TrainerState) -> Vec<u8> {
    let mut out = Vec::new();
    state.scores.write_csv(&mut out).unwrap();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let splits = small_splits(Protocol::FourTask, 5);
    for head in [HeadKind::Dgkd, HeadKind::Mlp, HeadKind::GroupKan] {
        let cfg = TrainerConfig { head, ..small_config(9) };
        let (a, ra) = run_sequence(cfg.clone(), &splits).unwrap();
        let (b, rb) = run_sequence(cfg, &splits).unwrap();
        assert_eq!(csv(&a), csv(&b));
        assert_eq!(ra, rb);
        assert_eq!(a.extractor.params(), b.extractor.params());
    }
}

#[test]
fn different_seeds_give_different_models() {
    let splits = small_splits(Protocol::TwoTaskOverlap, 5);
    let (a, _) = run_sequence(small_config(1), &splits).unwrap();
    let (b, _) = run_sequence(small_config(2), &splits).unwrap();
    assert_ne!(a.extractor.params(), b.extractor.params());
}

#[test]
fn score_matrix_is_lower_triangular() {
    let splits = small_splits(Protocol::FourTask, 3);
    let (state, reports) = run_sequence(small_config(4), &splits).unwrap();
    assert_eq!(reports.len(), 4);
    let acc = state.scores.rows(Metric::Acc);
    for (t, row) in acc.iter().enumerate() {
        assert_eq!(row.len(), t + 1);
        assert!(row.iter().all(|v| (0.0..=100.0).contains(v)));
    }
    for r in &reports[1..] {
        assert!(r.kd > 0.0 && r.sc > 0.0 && r.align > 0.0, "{r:?}");
    }
    assert_eq!(reports[0].kd, 0.0);
    assert_eq!(reports[0].align, 0.0);
}

#[test]
fn head_grows_one_frozen_layer_per_task() {
    let splits = small_splits(Protocol::FourTask, 3);
    let mut state = TrainerState::new(small_config(4)).unwrap();
    let mut frozen_params = Vec::new();
    for (t, (train, _)) in splits.iter().enumerate() {
        state.train_task(train).unwrap();
        let DetectorHead::Dgkd(head) = &state.head else { panic!("expected DG-KD head") };
        assert_eq!(head.layers().len(), t + 1);
        for (k, p) in frozen_params.iter().enumerate() {
            assert!(head.layers()[k].is_frozen());
            assert_eq!(&head.layers()[k].params(), p);
        }
        frozen_params.push(head.layers()[t].params());
        assert_eq!(state.memory.space(), t + 1);
        assert_eq!(state.projection.is_some(), t >= 1);
    }
}

#[test]
fn memory_respects_budget_and_covers_every_task() {
    let splits = small_splits(Protocol::FourTask, 8);
    let (state, _) = run_sequence(small_config(8), &splits).unwrap();
    let mem = &state.memory;
    assert!(mem.len() <= mem.budget());
    let mut tasks: Vec<usize> = mem.source_tasks().to_vec();
    tasks.sort_unstable();
    tasks.dedup();
    assert_eq!(tasks, vec![0, 1, 2, 3]);
}

#[test]
fn ablations_switch_off_their_terms() {
    let splits = small_splits(Protocol::TwoTaskOverlap, 2);
    let cfg = TrainerConfig {
        ablation: Ablation {
            use_sc: false,
            use_kd: false,
            use_kdcp: false,
            use_raw_replay: false,
        },
        ..small_config(3)
    };
    let (state, reports) = run_sequence(cfg, &splits).unwrap();
    assert!(reports.iter().all(|r| r.sc == 0.0 && r.kd == 0.0 && r.align == 0.0));
    assert!(state.projection.is_none());
    assert!(reports.iter().all(|r| (r.total - r.cls).abs() < 1e-12));
}

#[test]
fn raw_replay_keeps_inputs_in_memory() {
    let splits = small_splits(Protocol::TwoTaskOverlap, 2);
    let cfg = TrainerConfig {
        ablation: Ablation {
            use_raw_replay: true,
            ..Ablation::default()
        },
        ..small_config(3)
    };
    let (state, _) = run_sequence(cfg, &splits).unwrap();
    let raw = state.memory.raw_inputs().expect("raw inputs stored");
    assert_eq!(raw.rows(), state.memory.len());
}

#[test]
fn task_without_both_classes_is_rejected() {
    let splits = small_splits(Protocol::TwoTaskOverlap, 2);
    let train = &splits[0].0;
    let reals: Vec<usize> = (0..train.len()).filter(|&i| train.labels[i] == 0).collect();
    let mut state = TrainerState::new(small_config(1)).unwrap();
    assert!(state.train_task(&train.subset(&reals)).is_err());
}

#[test]
fn invalid_configs_are_rejected() {
    for cfg in [
        TrainerConfig { groups: 0, ..TrainerConfig::default() },
        TrainerConfig { groups: 17, ..TrainerConfig::default() },
        TrainerConfig { batch_size: 1, ..TrainerConfig::default() },
        TrainerConfig { lr: f64::NAN, ..TrainerConfig::default() },
        TrainerConfig { adam_eps: 0.0, ..TrainerConfig::default() },
        TrainerConfig { feature_gain: -1.0, ..TrainerConfig::default() },
    ] {
        assert!(TrainerState::new(cfg).is_err());
    }
}

mod common;

use std::collections::BTreeSet;

use common::{scratch_dir, x_offset_case};
use failsafe::config::PipelineConfig;
use failsafe::dataset::{
    build_entry, read_dataset, read_dataset_tolerant, split_by_seeds, to_jsonl, write_dataset, DatasetEntry,
    DatasetError, DatasetStats,
};
use failsafe::pipeline::generate;
use failsafe::recovery::CandidateRecovery;
use failsafe::tasks::TaskId;
use failsafe::{delta_action, DeltaAction, Rpy, Vec3, WINDOW_FRAMES};
use rand::{Rng, SeedableRng};

fn sample_entry() -> DatasetEntry {
    let (sim, case) = x_offset_case(TaskId::PickCube, 0, "grasp", 0.05);
    let d = 12;
    let seg = case.failed.segment(case.spec.stage).unwrap();
    let cand = CandidateRecovery {
        d_index: d,
        c_index: 11,
        action: delta_action(
            &case.failed_segment()[d].world.ee_pose,
            &case.correct_segment()[11].world.ee_pose,
        ),
        verified: true,
    };
    let e = build_entry(&sim, &case, &cand, "pick up the cube").unwrap();
    assert_eq!(e.frames.len(), WINDOW_FRAMES);
    assert_eq!(e.frames.last().unwrap().step as usize, seg.start + d);
    assert_eq!(e.sub_task, "grasp");
    e
}

#[test]
fn unverified_candidates_are_refused() {
    let (sim, case) = x_offset_case(TaskId::PickCube, 0, "grasp", 0.05);
    let cand = CandidateRecovery { d_index: 12, c_index: 12, action: DeltaAction::zero(), verified: false };
    assert!(matches!(build_entry(&sim, &case, &cand, "x"), Err(DatasetError::Contract(_))));
}

#[test]
fn thousand_entries_round_trip_bit_exact() {
    let base = sample_entry();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
    let entries: Vec<DatasetEntry> = (0..1000u64)
        .map(|i| {
            let mut e = base.clone();
            e.provenance.seed = i;
            e.provenance.magnitude = Some(rng.gen_range(-0.1..0.1));
            e.recovery = Some(DeltaAction::new(
                Vec3::new(rng.gen(), rng.gen(), -rng.gen::<f64>() / 3.0),
                Rpy::new(rng.gen_range(-3.0..3.0), 1.0 / 3.0, 1e-300),
                rng.gen_range(-1.0..1.0),
            ));
            e.frames[0].ee_pose.position.x += f64::EPSILON * i as f64;
            e
        })
        .collect();
    let dir = scratch_dir();
    let path = dir.path().join("d.jsonl");
    write_dataset(&entries, &path).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back, entries);
    for (a, b) in back.iter().zip(&entries) {
        assert_eq!(
            a.recovery.unwrap().to_array().map(f64::to_bits),
            b.recovery.unwrap().to_array().map(f64::to_bits)
        );
    }
    assert_eq!(std::fs::read(&path).unwrap(), to_jsonl(&back));
}

#[test]
fn truncated_final_line() {
    let base = sample_entry();
    let entries: Vec<_> = (0..3u64)
        .map(|i| {
            let mut e = base.clone();
            e.provenance.seed = i;
            e
        })
        .collect();
    let mut bytes = to_jsonl(&entries);
    let cut = bytes.len() - 40;
    bytes.truncate(cut);
    let dir = scratch_dir();
    let path = dir.path().join("t.jsonl");
    std::fs::write(&path, &bytes).unwrap();

    match read_dataset(&path) {
        Err(DatasetError::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("expected a parse error, got {other:?}"),
    }
    let t = read_dataset_tolerant(&path).unwrap();
    assert_eq!(t.entries, entries[..2]);
    assert_eq!(t.errors.len(), 1);
    assert!(t.errors[0].to_string().starts_with("line 3:"));
}

#[test]
fn schema_version_mismatch() {
    let mut e = sample_entry();
    e.schema_version = 7;
    let dir = scratch_dir();
    let path = dir.path().join("v.jsonl");
    std::fs::write(&path, format!("{}\n", serde_json::to_string(&e).unwrap())).unwrap();
    assert!(matches!(read_dataset(&path), Err(DatasetError::Version { line: 1, found: 7, .. })));
}

#[test]
fn invalid_entries_are_rejected() {
    let mut e = sample_entry();
    e.recovery = None;
    let dir = scratch_dir();
    let path = dir.path().join("i.jsonl");
    std::fs::write(&path, format!("\n{}\n", serde_json::to_string(&e).unwrap())).unwrap();
    assert!(matches!(read_dataset(&path), Err(DatasetError::Invalid { line: 2, .. })));

    let mut short = sample_entry();
    short.frames.pop();
    assert!(short.validate().is_err());
}

#[test]
fn generated_split_is_seed_disjoint() {
    let cfg = PipelineConfig::default();
    let g = generate(&cfg, &[TaskId::PickCube, TaskId::PushCube], 0..12, 2).unwrap();
    let all = g.all_entries();
    let stats = DatasetStats::from_entries(&all);
    assert_eq!(stats.total_failures(), g.counts.failure_entries);
    assert_eq!(stats.total_ground_truth(), g.counts.success_entries);
    for e in &all {
        e.validate().unwrap();
        if !e.is_failure {
            assert!(e.provenance.step >= WINDOW_FRAMES - 1);
        }
    }

    let test: BTreeSet<u64> = (8..12).collect();
    let (train, held) = split_by_seeds(all.clone(), &test);
    assert_eq!(train.len() + held.len(), all.len());
    let train_seeds: BTreeSet<u64> = train.iter().map(|e| e.provenance.seed).collect();
    assert!(train_seeds.is_disjoint(&test));
    assert!(held.iter().all(|e| test.contains(&e.provenance.seed)));
}

#[test]
fn jobs_do_not_change_output() {
    let cfg = PipelineConfig::default();
    let a = generate(&cfg, &[TaskId::StackCube], 0..10, 1).unwrap();
    let b = generate(&cfg, &[TaskId::StackCube], 0..10, 4).unwrap();
    assert_eq!(to_jsonl(&a.all_entries()), to_jsonl(&b.all_entries()));
    assert_eq!(a.counts, b.counts);
}

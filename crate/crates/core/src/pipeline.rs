//! End-to-end generation: injection, collection, verification and entry
//! building over a seed range, plus re-verification of exported entries.

use std::collections::BTreeMap;
use std::ops::Range;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::config::PipelineConfig;
use crate::dataset::{
    build_entry, build_success_entry, write_atomic, DatasetEntry, DatasetError, SCHEMA_VERSION,
};
use crate::failure::{attempt_failure, generate_failure_case, FailureCase, FailureError};
use crate::recovery::{collect_candidates, CandidateRecovery};
use crate::sim::Simulator;
use crate::tasks::TaskId;
use crate::verify::{verify_candidate, verify_candidates};
use crate::{delta_action, rng, WINDOW_FRAMES};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Failure(#[from] FailureError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("worker pool: {0}")]
    Pool(String),
    #[error("{0}")]
    Manifest(String),
}

/// Tallies of one generation run.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub episodes: u64,
    pub failure_cases: u64,
    pub mild_perturbations: u64,
    pub candidates: u64,
    pub verified: u64,
    pub failure_entries: u64,
    pub success_pool: u64,
    pub success_entries: u64,
}

impl Counts {
    fn absorb(&mut self, o: &Counts) {
        self.episodes += o.episodes;
        self.failure_cases += o.failure_cases;
        self.mild_perturbations += o.mild_perturbations;
        self.candidates += o.candidates;
        self.verified += o.verified;
        self.failure_entries += o.failure_entries;
        self.success_pool += o.success_pool;
        self.success_entries += o.success_entries;
    }
}

/// Output of one `(task, seed)` unit.
#[derive(Clone, Debug)]
pub struct SeedOutput {
    pub task: TaskId,
    pub seed: u64,
    pub failures: Vec<DatasetEntry>,
    pub success_pool: Vec<DatasetEntry>,
    pub counts: Counts,
}

/// Runs the whole chain for one scene.
pub fn process_seed(
    cfg: &PipelineConfig,
    sim: &Simulator,
    task: TaskId,
    seed: u64,
) -> Result<SeedOutput, PipelineError> {
    let spec = cfg.task_spec(task);
    let attempt = attempt_failure(sim, &cfg.planner, &spec, seed, &cfg.failures())?;
    let mut counts =
        Counts { episodes: 1, mild_perturbations: u64::from(attempt.is_mild()), ..Default::default() };
    let stage_names: Vec<String> = attempt.plan.stages.iter().map(|s| s.name.clone()).collect();

    let correct = &attempt.correct;
    let mut success_pool = Vec::new();
    if correct.len() >= WINDOW_FRAMES {
        let span = correct.len() - (WINDOW_FRAMES - 1);
        let k = cfg.dataset.success_windows_per_seed.min(span);
        let mut r = rng::stream(seed, &format!("success:{task}"));
        let mut steps: Vec<usize> =
            rand::seq::index::sample(&mut r, span, k).into_iter().map(|i| i + WINDOW_FRAMES - 1).collect();
        steps.sort_unstable();
        for step in steps {
            success_pool.push(build_success_entry(
                sim,
                task,
                &spec.instruction,
                seed,
                &stage_names,
                correct,
                step,
            )?);
        }
    }
    counts.success_pool = success_pool.len() as u64;

    let mut failures = Vec::new();
    if let Some(case) = attempt.into_case(task, seed) {
        counts.failure_cases = 1;
        let mut cands = collect_candidates(&case, seed, cfg.dataset.candidates_per_case);
        verify_candidates(sim, &case, &mut cands);
        counts.candidates = cands.len() as u64;
        for cand in cands.iter().filter(|c| c.verified) {
            counts.verified += 1;
            match build_entry(sim, &case, cand, &spec.instruction) {
                Ok(e) => failures.push(e),
                Err(DatasetError::WindowTooShort { .. }) => {}
                Err(e) => return Err(e.into()),
            }
        }
    }
    counts.failure_entries = failures.len() as u64;
    Ok(SeedOutput { task, seed, failures, success_pool, counts })
}

fn rank(e: &DatasetEntry) -> [u8; 32] {
    let key = format!("{}:{}:{}", e.task, e.provenance.seed, e.provenance.step);
    Sha256::digest(key.as_bytes()).into()
}

/// Keeps `round(n_failures / ratio)` pool entries, chosen by a
/// seed-order-independent hash rank. A ratio of 0 keeps the whole pool.
pub fn subsample_successes(pool: Vec<DatasetEntry>, n_failures: usize, ratio: f64) -> Vec<DatasetEntry> {
    if ratio <= 0.0 {
        return pool;
    }
    let target = (n_failures as f64 / ratio).round() as usize;
    if target >= pool.len() {
        if target > pool.len() {
            log::warn!("success pool has {} entries, {} wanted for the configured ratio", pool.len(), target);
        }
        return pool;
    }
    let mut ranked: Vec<([u8; 32], DatasetEntry)> = pool.into_iter().map(|e| (rank(&e), e)).collect();
    ranked.sort_by_key(|r| r.0);
    ranked.truncate(target);
    ranked.into_iter().map(|(_, e)| e).collect()
}

pub fn worker_pool(jobs: usize) -> Result<rayon::ThreadPool, PipelineError> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs).build().map_err(|e| PipelineError::Pool(e.to_string()))
}

#[derive(Clone, Debug)]
pub struct Generated {
    /// Canonically ordered entries per task.
    pub entries: BTreeMap<TaskId, Vec<DatasetEntry>>,
    pub counts: Counts,
}

impl Generated {
    pub fn all_entries(&self) -> Vec<DatasetEntry> {
        self.entries.values().flatten().cloned().collect()
    }
}

/// Generates entries for every task over `seeds` on `jobs` workers
/// (0 = one per core). Output does not depend on `jobs`.
pub fn generate(
    cfg: &PipelineConfig,
    tasks: &[TaskId],
    seeds: Range<u64>,
    jobs: usize,
) -> Result<Generated, PipelineError> {
    let sim = Simulator::new(cfg.sim.clone());
    let units: Vec<(TaskId, u64)> = tasks.iter().flat_map(|&t| seeds.clone().map(move |s| (t, s))).collect();
    let outputs: Vec<SeedOutput> = worker_pool(jobs)?.install(|| {
        units.par_iter().map(|&(t, s)| process_seed(cfg, &sim, t, s)).collect::<Result<_, _>>()
    })?;

    let mut counts = Counts::default();
    let mut per_task: BTreeMap<TaskId, (Vec<DatasetEntry>, Vec<DatasetEntry>)> = BTreeMap::new();
    for out in outputs {
        counts.absorb(&out.counts);
        let slot = per_task.entry(out.task).or_default();
        slot.0.extend(out.failures);
        slot.1.extend(out.success_pool);
    }
    counts.success_entries = 0;
    let mut entries = BTreeMap::new();
    for (task, (failures, pool)) in per_task {
        let successes = subsample_successes(pool, failures.len(), cfg.dataset.failure_to_success_ratio);
        counts.success_entries += successes.len() as u64;
        let mut all = failures;
        all.extend(successes);
        crate::dataset::sort_entries(&mut all);
        entries.insert(task, all);
    }
    Ok(Generated { entries, counts })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRange {
    pub start: u64,
    pub end: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub task: Option<TaskId>,
    pub entries: u64,
    pub sha256: String,
}

/// Run description written next to the dataset.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub artifact_version: String,
    pub schema_version: u32,
    pub config_hash: String,
    pub embodiment: String,
    pub tasks: Vec<TaskId>,
    pub seeds: SeedRange,
    pub counts: Counts,
    pub files: Vec<FileRecord>,
}

pub const MERGED_FILE: &str = "dataset.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";

fn sha_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Writes per-task shards, the merged file and the manifest into `dir`.
/// Returns the manifest and the SHA-256 of its serialized form.
pub fn write_outputs(
    dir: &Path,
    cfg: &PipelineConfig,
    tasks: &[TaskId],
    seeds: Range<u64>,
    generated: &Generated,
) -> Result<(Manifest, String), PipelineError> {
    std::fs::create_dir_all(dir)
        .map_err(|source| DatasetError::Io { path: dir.display().to_string(), source })?;
    let mut files = Vec::new();
    for (task, entries) in &generated.entries {
        let bytes = crate::dataset::to_jsonl(entries);
        let name = format!("shard-{task}.jsonl");
        write_atomic(&dir.join(&name), &bytes)?;
        files.push(FileRecord {
            path: name,
            task: Some(*task),
            entries: entries.len() as u64,
            sha256: sha_hex(&bytes),
        });
    }
    let all = generated.all_entries();
    let merged = crate::dataset::to_jsonl(&all);
    write_atomic(&dir.join(MERGED_FILE), &merged)?;
    files.push(FileRecord {
        path: MERGED_FILE.to_string(),
        task: None,
        entries: all.len() as u64,
        sha256: sha_hex(&merged),
    });
    let manifest = Manifest {
        artifact_version: env!("CARGO_PKG_VERSION").to_string(),
        schema_version: SCHEMA_VERSION,
        config_hash: cfg.hash(),
        embodiment: cfg.sim.embodiment.clone(),
        tasks: tasks.to_vec(),
        seeds: SeedRange { start: seeds.start, end: seeds.end },
        counts: generated.counts.clone(),
        files,
    };
    let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
    bytes.push(b'\n');
    write_atomic(&dir.join(MANIFEST_FILE), &bytes)?;
    Ok((manifest, sha_hex(&bytes)))
}

/// Reads the manifest sitting next to a dataset file, if there is one.
pub fn manifest_for(data: &Path) -> Result<Option<Manifest>, PipelineError> {
    let path: PathBuf = data.parent().map_or_else(|| PathBuf::from(MANIFEST_FILE), |p| p.join(MANIFEST_FILE));
    match std::fs::read(&path) {
        Ok(bytes) => serde_json::from_slice(&bytes)
            .map(Some)
            .map_err(|e| PipelineError::Manifest(format!("{}: {e}", path.display()))),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(source) => Err(DatasetError::Io { path: path.display().to_string(), source }.into()),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ReverifyReport {
    pub total: usize,
    pub verified: usize,
    /// Human-readable reasons for every entry that did not replay.
    pub rejected: Vec<String>,
}

impl ReverifyReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            1.0
        } else {
            self.verified as f64 / self.total as f64
        }
    }
}

fn reverify_entry(sim: &Simulator, case: &FailureCase, e: &DatasetEntry) -> Result<(), String> {
    let p = &e.provenance;
    let (Some(d), Some(c), Some(action)) = (p.d_index, p.c_index, e.recovery) else {
        return Err("missing indices or recovery".into());
    };
    if Some(case.spec.mode) != e.failure_type
        || case.spec.stage != p.stage
        || p.magnitude.map(f64::to_bits) != Some(case.spec.magnitude.to_bits())
    {
        return Err("regenerated failure does not match the entry".into());
    }
    let (failed, correct) = (case.failed_segment(), case.correct_segment());
    if d >= failed.len() || c >= correct.len() {
        return Err("indices outside the deviated segment".into());
    }
    if delta_action(&failed[d].world.ee_pose, &correct[c].world.ee_pose) != action {
        return Err("stored recovery differs from the recomputed delta".into());
    }
    let cand = CandidateRecovery { d_index: d, c_index: c, action, verified: false };
    if verify_candidate(sim, case, &cand) {
        Ok(())
    } else {
        Err("replay did not complete the task".into())
    }
}

/// Regenerates the failure case behind every failure entry and replays its
/// stored recovery.
pub fn reverify(
    cfg: &PipelineConfig,
    entries: &[DatasetEntry],
    jobs: usize,
) -> Result<ReverifyReport, PipelineError> {
    let sim = Simulator::new(cfg.sim.clone());
    let failures = cfg.failures();
    let mut groups: BTreeMap<(TaskId, u64), Vec<&DatasetEntry>> = BTreeMap::new();
    for e in entries.iter().filter(|e| e.is_failure) {
        groups.entry((e.task, e.provenance.seed)).or_default().push(e);
    }
    let groups: Vec<_> = groups.into_iter().collect();
    let results: Vec<Vec<Result<(), String>>> = worker_pool(jobs)?.install(|| {
        groups
            .par_iter()
            .map(|((task, seed), list)| {
                let spec = cfg.task_spec(*task);
                match generate_failure_case(&sim, &cfg.planner, &spec, *seed, &failures) {
                    Ok(Some(case)) => list.iter().map(|e| reverify_entry(&sim, &case, e)).collect(),
                    Ok(None) => vec![Err("no failure case for this seed".into()); list.len()],
                    Err(err) => vec![Err(err.to_string()); list.len()],
                }
            })
            .collect()
    });
    let mut report = ReverifyReport::default();
    for (((task, seed), list), res) in groups.iter().zip(results) {
        for (e, r) in list.iter().zip(res) {
            report.total += 1;
            match r {
                Ok(()) => report.verified += 1,
                Err(msg) => {
                    report.rejected.push(format!("{task} seed {seed} step {}: {msg}", e.provenance.step))
                }
            }
        }
    }
    Ok(report)
}

//! Supervised execution: a faulty policy runs while an assistant is
//! consulted on a fixed cadence and may inject a corrective action; plus
//! offline scoring of assistants on labeled entries.

mod assistant;
mod episode;
mod metrics;
mod trace;

use rayon::prelude::*;

pub use assistant::{
    oracle_assistant_decide, Assistant, AssistantDecision, AssistantError, AssistantQuery, EpisodeTruth,
    GroundTruth, NullAssistant, OracleAssistant,
};
pub use episode::{episode_budget, run_supervised_episode, EpisodeResult, EpisodeSetup, FaultyPolicy};
pub use metrics::{cosine, evaluate_assistant, EvalError, Metrics};
pub use trace::{trace_csv, write_trace, TracePoint, TRACE_HEADER};

use crate::config::PipelineConfig;
use crate::pipeline::{worker_pool, PipelineError};
use crate::sim::Simulator;
use crate::tasks::TaskId;

/// Paired runs of one perturbed scene.
#[derive(Clone, Debug)]
pub struct EpisodePair {
    pub seed: u64,
    pub unassisted: EpisodeResult,
    pub assisted: EpisodeResult,
}

#[derive(Clone, Debug)]
pub struct SuperviseReport {
    pub task: TaskId,
    pub assistant: String,
    pub episodes: Vec<EpisodePair>,
}

impl SuperviseReport {
    fn rate(&self, f: impl Fn(&EpisodePair) -> bool) -> f64 {
        if self.episodes.is_empty() {
            return 0.0;
        }
        self.episodes.iter().filter(|e| f(e)).count() as f64 / self.episodes.len() as f64
    }

    pub fn unassisted_rate(&self) -> f64 {
        self.rate(|e| e.unassisted.success)
    }

    pub fn assisted_rate(&self) -> f64 {
        self.rate(|e| e.assisted.success)
    }
}

/// Runs every seed with and without `assistant` on the same perturbed scene.
pub fn supervise(
    cfg: &PipelineConfig,
    task: TaskId,
    seeds: std::ops::Range<u64>,
    assistant: &dyn Assistant,
    cadence: usize,
    jobs: usize,
) -> Result<SuperviseReport, PipelineError> {
    let sim = Simulator::new(cfg.sim.clone());
    let seeds: Vec<u64> = seeds.collect();
    let sup = &cfg.supervisor;
    let episodes = worker_pool(jobs)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| -> Result<EpisodePair, PipelineError> {
                let setup = EpisodeSetup::prepare(cfg, &sim, task, seed, true)?;
                let run = |a: &dyn Assistant| {
                    run_supervised_episode(&sim, &setup, a, cadence, sup)
                        .map_err(|e| PipelineError::Failure(crate::planner::PlanError::from(e).into()))
                };
                Ok(EpisodePair { seed, unassisted: run(&NullAssistant)?, assisted: run(assistant)? })
            })
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(SuperviseReport { task, assistant: assistant.name().to_string(), episodes })
}

use std::collections::BTreeSet;

use failsafe::config::PipelineConfig;
use failsafe::failure::{sample_failure_spec, FailureMode};
use failsafe::planner::plan_task;
use failsafe::rng;
use failsafe::sim::Simulator;
use failsafe::tasks::TaskId;

#[test]
fn every_configured_mode_is_drawn() {
    let cfg = PipelineConfig::default();
    let sim = Simulator::new(cfg.sim.clone());
    let failures = cfg.failures();
    for task in TaskId::ALL {
        let entries = failures.entries(task);
        let configured: BTreeSet<(FailureMode, String)> = entries
            .iter()
            .flat_map(|e| e.stages.iter().map(move |s| (e.mode, s.clone())))
            .collect();
        let spec = cfg.task_spec(task);
        let mut seen = BTreeSet::new();
        for seed in 0..1000 {
            let (plan, _) = plan_task(&sim, &cfg.planner, &spec, seed).unwrap();
            let mut r = rng::stream(seed, "coverage");
            let s = sample_failure_spec(&plan, entries, &mut r).unwrap().unwrap();
            let entry_range = entries.iter().find(|e| e.mode == s.mode).unwrap().range;
            let m = if s.mode == FailureMode::NoOps { s.magnitude } else { s.magnitude.abs() };
            assert!(m >= entry_range[0] && m <= entry_range[1]);
            seen.insert((s.mode, plan.stages[s.stage].name.clone()));
        }
        assert_eq!(seen, configured, "{task}");
    }
}

//! Recovery candidates: pair deviated poses from the failed segment with
//! corrective poses from the correct one and take their delta.
//!
//! Indices are local to the deviated stage and 0-based. Deviated poses are
//! taken from index 10 onward; corrective poses from index 10 up to three
//! steps before the end of the correct segment.

use std::ops::RangeInclusive;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::failure::{FailureCase, FailureMode};
use crate::{delta_action, rng, DeltaAction};

/// First admissible index in both windows.
pub const WINDOW_HEAD: usize = 10;
/// Steps kept clear at the end of the correct segment.
pub const WINDOW_TAIL: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidateRecovery {
    pub d_index: usize,
    pub c_index: usize,
    pub action: DeltaAction,
    pub verified: bool,
}

pub fn d_window(failed_len: usize) -> Option<RangeInclusive<usize>> {
    (failed_len > WINDOW_HEAD).then(|| WINDOW_HEAD..=failed_len - 1)
}

pub fn c_window(correct_len: usize) -> Option<RangeInclusive<usize>> {
    (correct_len > WINDOW_HEAD + WINDOW_TAIL).then(|| WINDOW_HEAD..=correct_len - 1 - WINDOW_TAIL)
}

/// Candidate windows for segment lengths `(L_f, L_c)`.
pub fn window_ranges(
    failed_len: usize,
    correct_len: usize,
) -> (Option<RangeInclusive<usize>>, Option<RangeInclusive<usize>>) {
    (d_window(failed_len), c_window(correct_len))
}

pub fn candidate_index_ranges(
    case: &FailureCase,
) -> (Option<RangeInclusive<usize>>, Option<RangeInclusive<usize>>) {
    window_ranges(case.failed_segment().len(), case.correct_segment().len())
}

/// At most `k` indices spread evenly over `range`, starting at its head.
pub fn even_subsample(range: RangeInclusive<usize>, k: usize) -> Vec<usize> {
    let (lo, hi) = (*range.start(), *range.end());
    if hi < lo || k == 0 {
        return Vec::new();
    }
    let n = hi - lo + 1;
    if n <= k {
        return range.collect();
    }
    (0..k).map(|i| lo + i * n / k).collect()
}

/// Collects up to `k` unverified candidates for `case`.
///
/// The deviated window is walked in order and each selected deviated pose
/// is matched with a uniformly drawn corrective pose. For stalls the
/// deviated window starts at the stall. Matches with an all-zero delta are
/// dropped since they carry no correction.
pub fn collect_candidates(case: &FailureCase, seed: u64, k: usize) -> Vec<CandidateRecovery> {
    let (Some(d_range), Some(c_range)) = candidate_index_ranges(case) else {
        return Vec::new();
    };
    let d_range = match (case.spec.mode, case.spec.insertion) {
        (FailureMode::NoOps, Some(at)) => at.max(*d_range.start())..=*d_range.end(),
        _ => d_range,
    };
    let failed = case.failed_segment();
    let correct = case.correct_segment();
    let mut rng = rng::stream(seed, &format!("recovery:{}", case.task));
    let mut out = Vec::new();
    for d in even_subsample(d_range, k) {
        let c = rng.gen_range(c_range.clone());
        let action = delta_action(&failed[d].world.ee_pose, &correct[c].world.ee_pose);
        if action.is_zero() {
            continue;
        }
        out.push(CandidateRecovery { d_index: d, c_index: c, action, verified: false });
    }
    out
}

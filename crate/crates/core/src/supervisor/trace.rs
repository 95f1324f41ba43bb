use std::fmt::Write as _;
use std::path::Path;

use crate::dataset::{write_atomic, DatasetError};
use crate::Pose;

/// End-effector pose after a step; step 0 is the initial pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    pub pose: Pose,
    /// The step executed an assistant correction.
    pub intervention: bool,
}

pub const TRACE_HEADER: &str = "step,x,y,z,roll,pitch,yaw,gripper,intervention";

pub fn trace_csv(trace: &[TracePoint]) -> String {
    let mut out = String::from(TRACE_HEADER);
    out.push('\n');
    for t in trace {
        let p = t.pose.position;
        let r = t.pose.orientation.to_rpy();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            t.step,
            p.x,
            p.y,
            p.z,
            r.roll,
            r.pitch,
            r.yaw,
            t.pose.gripper,
            u8::from(t.intervention)
        );
    }
    out
}

pub fn write_trace(trace: &[TracePoint], path: &Path) -> Result<(), DatasetError> {
    write_atomic(path, trace_csv(trace).as_bytes())
}

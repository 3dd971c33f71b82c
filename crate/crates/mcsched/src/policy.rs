//! Ready-queue arbitration.
//!
//! Three fixed-priority dispatch orders are supported; the active one is
//! selected at run time by the mode controller:
//!
//! - [`PolicyKind::PriorityOnly`]: plain fixed priorities.
//! - [`PolicyKind::ModeThenPriority`]: jobs running in HI mode first, then
//!   priorities. LC jobs rank together with LO-mode HC jobs.
//! - [`PolicyKind::CritThenModeThenPriority`]: HC tasks before LC tasks, HI
//!   before LO within HC, then priorities.
//!
//! All orders are total because priorities are distinct within a taskset, so
//! dispatch is deterministic.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::model::{Criticality, JobState, JobStatus, TaskMode, TaskSet, Tick};

/// Dispatch order used when picking the next job to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolicyKind {
    PriorityOnly,
    ModeThenPriority,
    CritThenModeThenPriority,
}

impl std::fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PolicyKind::PriorityOnly => write!(f, "priority"),
            PolicyKind::ModeThenPriority => write!(f, "mode-priority"),
            PolicyKind::CritThenModeThenPriority => write!(f, "crit-mode-priority"),
        }
    }
}

/// True when the job can legally occupy the processor at `t`: it has been
/// released, its deadline has not passed, and it has not completed. Jobs whose
/// deadline expired unfinished are owned by expiry handling, not dispatch.
pub fn ready(job: &JobState, t: Tick) -> bool {
    job.status != JobStatus::Done && job.release <= t && t < job.abs_deadline
}

/// Indices of tasks with strictly higher priority than `pivot` (priorities are
/// static, so this does not depend on time).
pub fn hp(ts: &TaskSet, pivot: usize) -> Vec<usize> {
    let p = ts.task(pivot).priority;
    (0..ts.len()).filter(|&i| ts.task(i).priority < p).collect()
}

/// Compares two jobs under `policy`; `Ordering::Greater` means `a` is
/// dispatched in preference to `b`.
pub fn cmp_jobs(policy: PolicyKind, ts: &TaskSet, a: &JobState, b: &JobState) -> Ordering {
    let ta = ts.task(a.task);
    let tb = ts.task(b.task);
    let crit = |c: Criticality| match c {
        Criticality::Hc => 1u8,
        Criticality::Lc => 0,
    };
    let mode = |m: TaskMode| match m {
        TaskMode::Hi => 1u8,
        TaskMode::Lo => 0,
    };
    // Priority: smaller number wins, so compare reversed.
    let prio = tb.priority.cmp(&ta.priority);
    match policy {
        PolicyKind::PriorityOnly => prio,
        PolicyKind::ModeThenPriority => mode(a.omega).cmp(&mode(b.omega)).then(prio),
        PolicyKind::CritThenModeThenPriority => crit(ta.criticality)
            .cmp(&crit(tb.criticality))
            .then(mode(a.omega).cmp(&mode(b.omega)))
            .then(prio),
    }
}

/// Picks the job to dispatch at `t`: the maximum ready job under `policy`.
/// Returns an index into `jobs`, or `None` when nothing is ready.
pub fn pick(policy: PolicyKind, ts: &TaskSet, jobs: &[JobState], t: Tick) -> Option<usize> {
    jobs.iter()
        .enumerate()
        .filter(|(_, j)| ready(j, t))
        .max_by(|(_, a), (_, b)| cmp_jobs(policy, ts, a, b))
        .map(|(i, _)| i)
}

//! Helpers shared by the integration suites: an independent brute-force
//! demand oracle built on explicit release enumeration, and counterexample
//! archiving for falsified safety properties.
//!
//! The oracle deliberately avoids the closed-form job-count arithmetic of the
//! library: every bound is recomputed by walking candidate release instants
//! one by one, so the two sides can only agree if the closed forms are right.

#![allow(dead_code)]

use std::path::PathBuf;

use num_rational::Ratio;

use mcsched::model::{JobStatus, Task, TaskMode, TaskSet, Tick};
use mcsched::workload::{shrink_mu, Snapshot, WorkloadError};

/// Worst-case demand one task can place in a window of `len` ticks, counted
/// by enumeration: the current job contributes its remaining budget, and
/// future jobs are packed back to back from the window start, each counting
/// only once its full budget fits before the window closes.
pub fn enumerated_packed(period: Tick, budget: Tick, lambda: Tick, len: Tick) -> Tick {
    let mut total = budget.saturating_sub(lambda);
    if budget == 0 {
        return total;
    }
    let mut release = 0;
    while release + budget <= len {
        total += budget;
        release += period;
    }
    total
}

fn is_hp(ts: &TaskSet, j: usize, pivot: usize) -> bool {
    ts.task(j).priority < ts.task(pivot).priority
}

/// Mirror of the normal-mode packed bound: interference of HI jobs anywhere,
/// higher-priority HC jobs in LO, and higher-priority LC jobs, plus the
/// pivot's remaining low budget, over the pivot's remaining period.
pub fn oracle_dem(ts: &TaskSet, snap: &Snapshot, pivot: usize) -> Tick {
    let t_p = ts.task(pivot).period;
    let len = t_p - snap.t % t_p;
    let mut total = ts.task(pivot).wcet_lo.saturating_sub(snap.rows[pivot].lambda);
    for j in 0..ts.len() {
        if j == pivot {
            continue;
        }
        let task = ts.task(j);
        let row = &snap.rows[j];
        if task.criticality.is_hc() && row.omega == TaskMode::Hi {
            total += enumerated_packed(task.period, task.wcet_hi, row.lambda, len);
        } else if is_hp(ts, j, pivot) {
            total += enumerated_packed(task.period, task.wcet_lo, row.lambda, len);
        }
    }
    total
}

/// Mirror of the critical-window packed bound: higher-priority HI
/// interference at high budgets plus the trigger's remaining high budget,
/// over `[s_rel, T]` of the trigger's period.
pub fn oracle_dem_c(ts: &TaskSet, snap: &Snapshot, trigger: usize, s_rel: Tick) -> Tick {
    let len = ts.task(trigger).period - s_rel;
    let mut total = ts.task(trigger).wcet_hi.saturating_sub(snap.rows[trigger].lambda);
    for j in 0..ts.len() {
        let task = ts.task(j);
        let row = &snap.rows[j];
        if j != trigger
            && is_hp(ts, j, trigger)
            && task.criticality.is_hc()
            && row.omega == TaskMode::Hi
        {
            total += enumerated_packed(task.period, task.wcet_hi, row.lambda, len);
        }
    }
    total
}

/// Jobs an LC task fits into `window` when its period is shrunk by the exact
/// rational `mu`, counted by stepping release instants one by one.
fn enumerated_shrunk_jobs(period: Tick, mu: Ratio<Tick>, window: Tick) -> Tick {
    let shrunk = Ratio::from_integer(period) - mu;
    let mut jobs = 0;
    let mut release = Ratio::from_integer(0);
    let end = Ratio::from_integer(window);
    while release < end {
        jobs += 1;
        release += shrunk;
    }
    jobs
}

/// Mirror of the repayment-mode packed bound: as [`oracle_dem`] but with
/// higher-priority LC tasks running on shrunk periods, failing exactly when
/// a shrunk period cannot hold its task's budget.
pub fn oracle_dem_delta(
    ts: &TaskSet,
    snap: &Snapshot,
    pivot: usize,
    delta: Tick,
) -> Result<Tick, WorkloadError> {
    let t_p = ts.task(pivot).period;
    let len = t_p - snap.t % t_p;
    let mut total = ts.task(pivot).wcet_lo.saturating_sub(snap.rows[pivot].lambda);
    for j in 0..ts.len() {
        if j == pivot {
            continue;
        }
        let task = ts.task(j);
        let row = &snap.rows[j];
        if task.criticality.is_hc() && row.omega == TaskMode::Hi {
            total += enumerated_packed(task.period, task.wcet_hi, row.lambda, len);
        } else if is_hp(ts, j, pivot) && task.criticality.is_hc() {
            total += enumerated_packed(task.period, task.wcet_lo, row.lambda, len);
        }
    }
    for j in 0..ts.len() {
        let task = ts.task(j);
        if task.criticality.is_hc() || !is_hp(ts, j, pivot) {
            continue;
        }
        let mu = shrink_mu(task.period, delta, len);
        if Ratio::from_integer(task.period) - mu <= Ratio::from_integer(task.wcet_lo) {
            return Err(WorkloadError::InfeasibleShrink { task: task.id.clone(), delta });
        }
        if len > 0 {
            total += task.wcet_lo * enumerated_shrunk_jobs(task.period, mu, len);
        }
    }
    Ok(total)
}

/// Rebuilds a taskset with a subset of its tasks, preserving ids, budgets,
/// and priorities. Used by counterexample minimization.
pub fn subset_taskset(ts: &TaskSet, keep: &[usize]) -> Option<TaskSet> {
    let tasks: Vec<Task> = keep.iter().map(|&i| ts.task(i).clone()).collect();
    TaskSet::new(tasks, ts.time_scale()).ok()
}

/// Directory for archived test artifacts (under the build tree).
pub fn artifact_dir() -> PathBuf {
    let dir = PathBuf::from(env!("CARGO_TARGET_TMPDIR"));
    std::fs::create_dir_all(&dir).expect("artifact directory is writable");
    dir
}

/// Writes a JSON artifact and returns its path.
pub fn archive_json(name: &str, value: &serde_json::Value) -> PathBuf {
    let path = artifact_dir().join(name);
    std::fs::write(&path, serde_json::to_string_pretty(value).expect("serializable"))
        .expect("artifact file is writable");
    path
}

/// True when a snapshot row's job counts as live at the snapshot instant.
pub fn row_live(snap: &Snapshot, i: usize) -> bool {
    snap.rows[i].status != JobStatus::Done && snap.rows[i].release <= snap.t
}

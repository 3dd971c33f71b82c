//! Aggregated statistics of a simulation run, computed from its trace.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::model::{Criticality, TaskMode, Tick};
use crate::modes::SystemMode;
use crate::trace::{gantt, EventKind, TraceEvent};

/// Counters for one task.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct TaskMetrics {
    pub released: u64,
    pub completed: u64,
    pub misses: u64,
    pub discarded: u64,
    pub max_response: Tick,
    pub max_lateness: Tick,
}

/// Counters for a whole run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct RunMetrics {
    pub per_task: BTreeMap<usize, TaskMetrics>,
    /// Entries into critical mode.
    pub system_switches: u64,
    /// Jobs that crossed from LO to HI confidence.
    pub task_switches: u64,
    pub hc_misses: u64,
    pub lc_misses: u64,
    pub shrink_plans: u64,
    /// Total debt repaid by shrink plans.
    pub repaid: Tick,
    /// Debt outstanding at the last mode or shrink event.
    pub final_delta: Tick,
    /// Processor busy time reconstructed from the trace.
    pub busy_ticks: Tick,
    /// Demand-bound evaluations performed by the run (instrumentation,
    /// filled in by the simulator rather than the trace).
    pub dem_evals: u64,
}

impl RunMetrics {
    pub fn from_events(events: &[TraceEvent]) -> Self {
        let mut m = RunMetrics::default();
        for ev in events {
            match &ev.kind {
                EventKind::Release { task, .. } => m.task_mut(*task).released += 1,
                EventKind::Complete { task, response } => {
                    let tm = m.task_mut(*task);
                    tm.completed += 1;
                    tm.max_response = tm.max_response.max(*response);
                }
                EventKind::DeadlineMiss { task, crit, lateness } => {
                    let tm = m.task_mut(*task);
                    tm.misses += 1;
                    tm.max_lateness = tm.max_lateness.max(*lateness);
                    match crit {
                        Criticality::Hc => m.hc_misses += 1,
                        Criticality::Lc => m.lc_misses += 1,
                    }
                }
                EventKind::Discard { task, .. } => m.task_mut(*task).discarded += 1,
                EventKind::TaskModeSwitch { to: TaskMode::Hi, .. } => m.task_switches += 1,
                EventKind::SystemModeSwitch { to, delta, .. } => {
                    if *to == SystemMode::Critical {
                        m.system_switches += 1;
                    }
                    m.final_delta = *delta;
                }
                EventKind::ShrinkApplied { amount, delta, .. } => {
                    m.shrink_plans += 1;
                    m.repaid += amount;
                    m.final_delta = *delta;
                }
                _ => {}
            }
        }
        m.busy_ticks = gantt(events).iter().map(|s| s.end - s.start).sum();
        m
    }

    fn task_mut(&mut self, task: usize) -> &mut TaskMetrics {
        self.per_task.entry(task).or_default()
    }

    pub fn task(&self, task: usize) -> TaskMetrics {
        self.per_task.get(&task).cloned().unwrap_or_default()
    }

    /// Fraction of released jobs of the given tasks that were discarded.
    pub fn discard_rate(&self, tasks: &[usize]) -> f64 {
        let (mut dropped, mut released) = (0u64, 0u64);
        for t in tasks {
            let tm = self.task(*t);
            dropped += tm.discarded;
            released += tm.released;
        }
        if released == 0 {
            0.0
        } else {
            dropped as f64 / released as f64
        }
    }
}

//! System-level mode state: critical-window tracking, postponement debt, and
//! shrink planning.
//!
//! The system normally runs in [`SystemMode::Normal`]. When an overrunning
//! job endangers a lower-priority HC task ([`find_trigger`]), the run enters
//! [`SystemMode::Critical`] for the remainder of the endangered task's
//! period: LC deadlines and releases are pushed past the window end (the
//! stretch), and the postponement is recorded as debt. Back in normal mode,
//! [`build_shrink_plan`] looks for the largest slice of debt that can be paid
//! back by transiently shortening LC periods without endangering the
//! lowest-priority HC task, and emits a per-release repayment schedule.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::model::{TaskMode, TaskSet, Tick};
use crate::workload::{dem_delta, released_demand, shrink_mu, Snapshot};

/// Run-wide operating mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SystemMode {
    Normal,
    Critical,
}

impl std::fmt::Display for SystemMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            SystemMode::Normal => write!(f, "Normal"),
            SystemMode::Critical => write!(f, "Critical"),
        }
    }
}

/// Release-pattern phase of the LC population.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Pattern {
    /// Nominal periods.
    Regular,
    /// Inside a critical window: LC work is postponed.
    Stretching,
    /// Paying back postponement debt through shortened periods.
    Shrinking,
}

impl std::fmt::Display for Pattern {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Pattern::Regular => write!(f, "Regular"),
            Pattern::Stretching => write!(f, "Stretching"),
            Pattern::Shrinking => write!(f, "Shrinking"),
        }
    }
}

/// An open critical window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CriticalWindow {
    /// Task whose endangered job triggered the switch.
    pub trigger: usize,
    /// Offset of the switch instant inside the trigger's period.
    pub s_rel: Tick,
    /// Absolute switch instant.
    pub start: Tick,
    /// Absolute end: the trigger job's period boundary.
    pub end: Tick,
}

impl CriticalWindow {
    /// Ticks the window postpones LC work by.
    pub fn stretch(&self) -> Tick {
        self.end - self.start
    }
}

/// Scheduled repayment of postponement debt: each LC task's next few periods
/// are shortened by the queued amounts, one entry per release.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShrinkPlan {
    /// Debt repaid by this plan, per task.
    pub amount: Tick,
    /// Instant the plan was made.
    pub created: Tick,
    /// End of the window the repayment was sized against.
    pub until: Tick,
    /// Per-task shrink queues, indexed by task; empty for HC tasks.
    pub queues: Vec<VecDeque<Tick>>,
}

impl ShrinkPlan {
    /// Next period shrink for a task, consumed at its release.
    pub fn pop(&mut self, task: usize) -> Tick {
        self.queues[task].pop_front().unwrap_or(0)
    }

    pub fn exhausted(&self) -> bool {
        self.queues.iter().all(VecDeque::is_empty)
    }
}

/// Mode-related run state carried by the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeState {
    pub mode: SystemMode,
    /// Outstanding LC postponement debt in ticks (uniform across LC tasks).
    pub delta: Tick,
    pub window: Option<CriticalWindow>,
    pub plan: Option<ShrinkPlan>,
}

impl ModeState {
    pub fn new() -> Self {
        ModeState {
            mode: SystemMode::Normal,
            delta: 0,
            window: None,
            plan: None,
        }
    }

    /// Current LC release pattern implied by the state.
    pub fn pattern(&self) -> Pattern {
        if self.mode == SystemMode::Critical {
            Pattern::Stretching
        } else if self.plan.is_some() {
            Pattern::Shrinking
        } else {
            Pattern::Regular
        }
    }
}

impl Default for ModeState {
    fn default() -> Self {
        Self::new()
    }
}

/// A task whose in-flight job cannot be guaranteed under normal-mode
/// dispatching.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Trigger {
    pub task: usize,
    pub s_rel: Tick,
    pub demand: Tick,
    pub supply: Tick,
}

/// Scans HC tasks still in LO mode, lowest priority first, for a live job
/// whose release-exact demand reaches its remaining supply. The first such
/// task is the switch trigger.
pub fn find_trigger(ts: &TaskSet, snap: &Snapshot) -> Option<Trigger> {
    let mut candidates: Vec<usize> = (0..ts.len())
        .filter(|&i| {
            ts.task(i).criticality.is_hc()
                && snap.rows[i].omega == TaskMode::Lo
                && snap.rows[i].status != crate::model::JobStatus::Done
                && snap.rows[i].release <= snap.t
        })
        .collect();
    candidates.sort_by_key(|&i| std::cmp::Reverse(ts.task(i).priority));
    for c in candidates {
        let horizon = snap.rows[c].abs_deadline;
        let supply = horizon.saturating_sub(snap.t);
        let demand = released_demand(ts, snap, c, horizon);
        if demand >= supply {
            return Some(Trigger {
                task: c,
                s_rel: snap.t - snap.rows[c].release,
                demand,
                supply,
            });
        }
    }
    None
}

/// Largest debt slice `d <= delta` whose repayment plan keeps the
/// lowest-priority HC task schedulable over its remaining period, with the
/// per-release shrink schedule that repays exactly `d` per LC task. Returns
/// `None` when the snapshot has no HC task in LO mode, no LC task, or no
/// feasible positive slice.
pub fn build_shrink_plan(ts: &TaskSet, snap: &Snapshot, delta: Tick) -> Option<ShrinkPlan> {
    let pivot = snap.lp_l(ts)?;
    if !(0..ts.len()).any(|i| !ts.task(i).criticality.is_hc()) {
        return None;
    }
    let t_p = ts.task(pivot).period;
    let window = t_p - snap.t % t_p;
    let feasible = |d: Tick| -> bool {
        let fits = (0..ts.len()).filter(|&i| !ts.task(i).criticality.is_hc()).all(|i| {
            let task = ts.task(i);
            let mu = shrink_mu(task.period, d, window);
            num_rational::Ratio::from_integer(task.period) - mu
                > num_rational::Ratio::from_integer(task.wcet_lo)
        });
        fits && matches!(dem_delta(ts, snap, pivot, d), Ok(demand) if demand <= window)
    };
    // Feasibility is downward closed: more debt only raises demand.
    let (mut lo, mut hi) = (0, delta);
    if !feasible(0) {
        return None;
    }
    while lo < hi {
        let mid = (lo + hi + 1) / 2;
        if feasible(mid) {
            lo = mid;
        } else {
            hi = mid - 1;
        }
    }
    let d = lo;
    if d == 0 {
        return None;
    }
    let queues = (0..ts.len())
        .map(|i| {
            let task = ts.task(i);
            if task.criticality.is_hc() {
                return VecDeque::new();
            }
            let mu = shrink_mu(task.period, d, window);
            let shrunk = num_rational::Ratio::from_integer(task.period) - mu;
            let jobs = (num_rational::Ratio::from_integer(window) / shrunk)
                .ceil()
                .to_integer();
            // Cumulative-floor schedule: entry m is floor(m*mu) - floor((m-1)*mu),
            // capped so the queue repays exactly d.
            let mut prev = 0;
            (1..=jobs)
                .map(|m| {
                    let cum = ((mu * m as u64).floor().to_integer()).min(d);
                    let step = cum - prev;
                    prev = cum;
                    step
                })
                .collect()
        })
        .collect();
    Some(ShrinkPlan {
        amount: d,
        created: snap.t,
        until: snap.t + window,
        queues,
    })
}

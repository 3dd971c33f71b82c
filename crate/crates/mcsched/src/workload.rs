//! Demand bounds and schedulability tests.
//!
//! Two families of demand accounting live here and serve different purposes:
//!
//! 1. **Closed-form bounds** ([`psi_h`], [`psi_l`], [`dem`], [`dem_c`],
//!    [`dem_delta`], [`dbf`]): phase-oblivious upper bounds computed from
//!    periods and consumed budgets alone. A task contributes its remaining
//!    current budget plus one full budget per future job that could fit in the
//!    window under worst-case (back-to-back) release phasing. These bounds are
//!    cheap, match a brute-force packed-release enumeration bit for bit, and
//!    are what the shrink planner sizes compensation against.
//!
//! 2. **Release-exact demand** ([`released_demand`],
//!    [`released_demand_critical`]): uses the concrete release grid captured
//!    in a [`Snapshot`] (including stretched deadlines and planned shrunk
//!    periods), counting exactly the jobs that will be released before the
//!    pivot's deadline. The mode controller's switch rule and the theorem
//!    tests use this form: the packed bound double-counts synchronous
//!    releases and would report pressure for tasksets that are in fact
//!    comfortably schedulable.
//!
//! All quantities are integer ticks; shrink sizing is exact rational.

use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{JobStatus, Ratio64, Task, TaskMode, TaskSet, Tick};
use crate::modes::{Pattern, SystemMode};
use crate::policy::hp;

/// Closed absolute time interval `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Interval {
    pub a: Tick,
    pub b: Tick,
}

impl Interval {
    pub fn new(a: Tick, b: Tick) -> Self {
        assert!(a <= b, "interval start after end");
        Interval { a, b }
    }

    pub fn len(&self) -> Tick {
        self.b - self.a
    }
}

/// Number of whole budgets `c` a task with period `t` can additionally demand
/// in a window of `len` ticks under worst-case phasing: jobs are released
/// back to back starting at the window start, and a job counts once its full
/// budget fits before the window closes.
fn packed_jobs(t: Tick, c: Tick, len: Tick) -> Tick {
    if c == 0 {
        return 0;
    }
    if len % t >= c {
        len.div_ceil(t)
    } else {
        len / t
    }
}

/// Upper bound on the demand a task can place in `iv` while accountable to
/// its high-confidence budget: remaining `C^h - lambda` of the current job
/// plus `C^h` per packed future job.
pub fn psi_h(task: &Task, lambda_at_a: Tick, iv: Interval) -> Tick {
    task.wcet_hi.saturating_sub(lambda_at_a) + task.wcet_hi * packed_jobs(task.period, task.wcet_hi, iv.len())
}

/// As [`psi_h`] but against the low-confidence budget.
pub fn psi_l(task: &Task, lambda_at_a: Tick, iv: Interval) -> Tick {
    task.wcet_lo.saturating_sub(lambda_at_a) + task.wcet_lo * packed_jobs(task.period, task.wcet_lo, iv.len())
}

/// Per-task view captured at analysis time.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SnapRow {
    pub status: JobStatus,
    pub omega: TaskMode,
    /// Budget consumed by the current job.
    pub lambda: Tick,
    /// Release instant of the current job.
    pub release: Tick,
    /// Absolute deadline of the current job (includes any stretch).
    pub abs_deadline: Tick,
    /// Next release instant after the current job's period.
    pub next_release: Tick,
    /// Explicit lengths of upcoming periods that differ from the nominal
    /// period (planned shrinks); beyond this list periods are nominal.
    pub upcoming_periods: Vec<Tick>,
}

/// Global state view at a fixed instant, one row per task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Snapshot {
    pub t: Tick,
    pub mode: SystemMode,
    pub pattern: Pattern,
    /// Outstanding postponement debt in ticks.
    pub delta: Tick,
    pub rows: Vec<SnapRow>,
}

impl Snapshot {
    /// State of a taskset at `t = 0`: everything just released in LO mode.
    pub fn fresh(ts: &TaskSet) -> Self {
        Snapshot {
            t: 0,
            mode: SystemMode::Normal,
            pattern: Pattern::Regular,
            delta: 0,
            rows: (0..ts.len())
                .map(|i| SnapRow {
                    status: JobStatus::Ready,
                    omega: TaskMode::Lo,
                    lambda: 0,
                    release: 0,
                    abs_deadline: ts.task(i).period,
                    next_release: ts.task(i).period,
                    upcoming_periods: Vec::new(),
                })
                .collect(),
        }
    }

    /// Lowest-priority HC task currently in LO mode, if any.
    pub fn lp_l(&self, ts: &TaskSet) -> Option<usize> {
        (0..ts.len())
            .filter(|&i| ts.task(i).criticality.is_hc() && self.rows[i].omega == TaskMode::Lo)
            .max_by_key(|&i| ts.task(i).priority)
    }

    /// Lowest-priority HC task currently in HI mode, if any.
    pub fn lp_h(&self, ts: &TaskSet) -> Option<usize> {
        (0..ts.len())
            .filter(|&i| ts.task(i).criticality.is_hc() && self.rows[i].omega == TaskMode::Hi)
            .max_by_key(|&i| ts.task(i).priority)
    }

    /// Release instants of task `j` that fall strictly inside `(t, end)`,
    /// following the captured grid: explicit upcoming periods first, then
    /// nominal periods.
    pub fn releases_before(&self, ts: &TaskSet, j: usize, end: Tick) -> Vec<Tick> {
        let row = &self.rows[j];
        let nominal = ts.task(j).period;
        let mut out = Vec::new();
        let mut r = row.next_release;
        let mut periods = row.upcoming_periods.iter().copied();
        while r < end {
            if r > self.t {
                out.push(r);
            }
            r += periods.next().unwrap_or(nominal);
        }
        out
    }
}

/// Remaining ticks in the pivot's current period at the snapshot instant.
fn rel_window(snap: &Snapshot, ts: &TaskSet, pivot: usize) -> Tick {
    let t_p = ts.task(pivot).period;
    t_p - snap.t % t_p
}

/// Packed-bound demand of HC tasks currently in HI mode (any priority, pivot
/// excluded) over a window of `len` ticks.
pub fn w_h_hi(ts: &TaskSet, snap: &Snapshot, pivot: usize, len: Tick) -> Tick {
    let iv = Interval::new(0, len);
    (0..ts.len())
        .filter(|&j| {
            j != pivot && ts.task(j).criticality.is_hc() && snap.rows[j].omega == TaskMode::Hi
        })
        .map(|j| psi_h(ts.task(j), snap.rows[j].lambda, iv))
        .sum()
}

/// Packed-bound demand of higher-priority HC tasks currently in LO mode.
pub fn w_h_lo(ts: &TaskSet, snap: &Snapshot, pivot: usize, len: Tick) -> Tick {
    let iv = Interval::new(0, len);
    hp(ts, pivot)
        .into_iter()
        .filter(|&j| ts.task(j).criticality.is_hc() && snap.rows[j].omega == TaskMode::Lo)
        .map(|j| psi_l(ts.task(j), snap.rows[j].lambda, iv))
        .sum()
}

/// Packed-bound demand of higher-priority LC tasks.
pub fn w_l(ts: &TaskSet, snap: &Snapshot, pivot: usize, len: Tick) -> Tick {
    let iv = Interval::new(0, len);
    hp(ts, pivot)
        .into_iter()
        .filter(|&j| !ts.task(j).criticality.is_hc())
        .map(|j| psi_l(ts.task(j), snap.rows[j].lambda, iv))
        .sum()
}

/// Packed demand bound against the pivot's remaining period: interference of
/// HI jobs, higher-priority LO jobs, and higher-priority LC jobs, plus the
/// pivot's own remaining low budget.
pub fn dem(ts: &TaskSet, snap: &Snapshot, pivot: usize) -> Tick {
    dem_over(ts, snap, pivot, rel_window(snap, ts, pivot))
}

fn dem_over(ts: &TaskSet, snap: &Snapshot, pivot: usize, len: Tick) -> Tick {
    w_h_hi(ts, snap, pivot, len)
        + w_h_lo(ts, snap, pivot, len)
        + w_l(ts, snap, pivot, len)
        + ts.task(pivot).wcet_lo.saturating_sub(snap.rows[pivot].lambda)
}

/// Packed demand bound for a mode-switch trigger over `[s_rel, T]` of its own
/// period: higher-priority HI interference plus the trigger's remaining high
/// budget.
pub fn dem_c(ts: &TaskSet, snap: &Snapshot, trigger: usize, s_rel: Tick) -> Tick {
    let t_p = ts.task(trigger).period;
    assert!(s_rel <= t_p, "relative switch instant outside the period");
    dem_c_over(ts, snap, trigger, t_p - s_rel)
}

fn dem_c_over(ts: &TaskSet, snap: &Snapshot, trigger: usize, len: Tick) -> Tick {
    let iv = Interval::new(0, len);
    let hi: Tick = hp(ts, trigger)
        .into_iter()
        .filter(|&j| ts.task(j).criticality.is_hc() && snap.rows[j].omega == TaskMode::Hi)
        .map(|j| psi_h(ts.task(j), snap.rows[j].lambda, iv))
        .sum();
    hi + ts.task(trigger).wcet_hi.saturating_sub(snap.rows[trigger].lambda)
}

/// Per-period shrink that amortizes `delta` ticks of debt across the jobs a
/// task fits into `window`: `mu = T * delta / (window + delta)`, exact.
pub fn shrink_mu(t_j: Tick, delta: Tick, window: Tick) -> Ratio64 {
    if delta == 0 {
        return Ratio::from_integer(0);
    }
    Ratio::new(t_j * delta, window + delta)
}

/// Packed-bound demand of higher-priority LC tasks when each runs with its
/// period shrunk by `shrink_mu`: one full budget per shrunk period that
/// starts inside the window.
pub fn w_l_shrunk(
    ts: &TaskSet,
    _snap: &Snapshot,
    pivot: usize,
    eta_rel: Tick,
    delta: Tick,
) -> Result<Tick, WorkloadError> {
    let window = ts.task(pivot).period - eta_rel;
    let mut sum = 0;
    for j in hp(ts, pivot) {
        let task = ts.task(j);
        if task.criticality.is_hc() {
            continue;
        }
        let mu = shrink_mu(task.period, delta, window);
        let shrunk = Ratio::from_integer(task.period) - mu;
        if shrunk <= Ratio::from_integer(task.wcet_lo) {
            return Err(WorkloadError::InfeasibleShrink {
                task: task.id.clone(),
                delta,
            });
        }
        if window > 0 {
            let jobs = (Ratio::from_integer(window) / shrunk).ceil().to_integer();
            sum += task.wcet_lo * jobs;
        }
    }
    Ok(sum)
}

/// Packed demand bound over `[eta, T]` of the pivot with LC periods shrunk to
/// pay back `delta`: HI and LO interference as in [`dem`], LC interference
/// from [`w_l_shrunk`], plus the pivot's remaining low budget.
pub fn dem_delta(
    ts: &TaskSet,
    snap: &Snapshot,
    pivot: usize,
    delta: Tick,
) -> Result<Tick, WorkloadError> {
    let eta_rel = snap.t % ts.task(pivot).period;
    let len = ts.task(pivot).period - eta_rel;
    Ok(w_h_hi(ts, snap, pivot, len)
        + w_h_lo(ts, snap, pivot, len)
        + w_l_shrunk(ts, snap, pivot, eta_rel, delta)?
        + ts.task(pivot).wcet_lo.saturating_sub(snap.rows[pivot].lambda))
}

/// Selects which packed bound [`dbf`] evaluates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DemandKind {
    Normal,
    Critical,
    Shrink(Tick),
}

/// Packed demand bound with the pivot's horizon replaced by an arbitrary
/// window of `z` ticks; `z` equal to the remaining period reduces to the
/// corresponding fixed-horizon bound.
pub fn dbf(
    kind: DemandKind,
    ts: &TaskSet,
    snap: &Snapshot,
    pivot: usize,
    z: Tick,
) -> Result<Tick, WorkloadError> {
    match kind {
        DemandKind::Normal => Ok(dem_over(ts, snap, pivot, z)),
        DemandKind::Critical => Ok(dem_c_over(ts, snap, pivot, z)),
        DemandKind::Shrink(delta) => {
            let t_p = ts.task(pivot).period;
            assert!(z <= t_p, "shrink window larger than the pivot period");
            w_l_shrunk(ts, snap, pivot, t_p - z, delta).map(|lc| {
                w_h_hi(ts, snap, pivot, z)
                    + w_h_lo(ts, snap, pivot, z)
                    + lc
                    + ts.task(pivot).wcet_lo.saturating_sub(snap.rows[pivot].lambda)
            })
        }
    }
}

// ---------------------------------------------------------------------------
// Release-exact demand
// ---------------------------------------------------------------------------

fn current_remaining(ts: &TaskSet, snap: &Snapshot, j: usize) -> Tick {
    let row = &snap.rows[j];
    if row.status == JobStatus::Done || row.release > snap.t {
        return 0;
    }
    ts.task(j).budget_for(row.omega).saturating_sub(row.lambda)
}

/// Work that will compete with the pivot before `horizon` (an absolute
/// instant), counted from the concrete release grid: remaining budgets of
/// current jobs that outrank the pivot, one low budget per future release of
/// a higher-priority task, plus the pivot's own remaining low budget.
///
/// A current HI job outranks the pivot regardless of priority; its future
/// jobs are back in LO mode and only count when the task itself has higher
/// priority.
pub fn released_demand(ts: &TaskSet, snap: &Snapshot, pivot: usize, horizon: Tick) -> Tick {
    let hp_set = hp(ts, pivot);
    let mut total = current_remaining(ts, snap, pivot);
    for j in 0..ts.len() {
        if j == pivot {
            continue;
        }
        let task = ts.task(j);
        let in_hp = hp_set.contains(&j);
        let is_hi = task.criticality.is_hc() && snap.rows[j].omega == TaskMode::Hi;
        if in_hp || is_hi {
            total += current_remaining(ts, snap, j);
        }
        if in_hp {
            total += task.wcet_lo * snap.releases_before(ts, j, horizon).len() as Tick;
        }
    }
    total
}

/// As [`released_demand`] but for a task that must be protected through a
/// critical window: only HC tasks interfere (LC cannot preempt HC under the
/// critical dispatch order) and the pivot is accounted at its high budget.
pub fn released_demand_critical(ts: &TaskSet, snap: &Snapshot, pivot: usize, horizon: Tick) -> Tick {
    let row = &snap.rows[pivot];
    let mut total = if row.status == JobStatus::Done {
        0
    } else {
        ts.task(pivot).wcet_hi.saturating_sub(row.lambda)
    };
    for j in hp(ts, pivot) {
        let task = ts.task(j);
        if !task.criticality.is_hc() {
            continue;
        }
        total += current_remaining(ts, snap, j);
        total += task.wcet_lo * snap.releases_before(ts, j, horizon).len() as Tick;
    }
    total
}

// ---------------------------------------------------------------------------
// Schedulability tests
// ---------------------------------------------------------------------------

/// Sufficient schedulability tests, one per system state the run can be in.
/// Each checks that the release-exact demand on a pivot task fits the time
/// left before the pivot's deadline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Theorem {
    /// Normal mode: pivot is the lowest-priority HC task in LO mode.
    Normal,
    /// Every HC task is in HI mode: pivot is the lowest-priority HI task,
    /// demand counted against high budgets.
    AllHi,
    /// Normal mode while shrunk periods are being paid back: as `Normal`
    /// with the planned shrunk grid.
    Shrinking,
    /// Critical mode: pivot is the most endangered HC task still in LO mode,
    /// demand counted against high budgets.
    Critical,
}

impl std::fmt::Display for Theorem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Theorem::Normal => write!(f, "normal"),
            Theorem::AllHi => write!(f, "all-hi"),
            Theorem::Shrinking => write!(f, "shrinking"),
            Theorem::Critical => write!(f, "critical"),
        }
    }
}

/// Outcome of a schedulability test.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Verdict {
    pub schedulable: bool,
    /// Pivot task index the test was anchored on.
    pub pivot: usize,
    /// Demand and supply at the checked horizon.
    pub demand: Tick,
    pub supply: Tick,
    /// Failing window length when unschedulable.
    pub witness_z: Option<Tick>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AnalysisError {
    #[error("test `{theorem}` is inapplicable: no pivot task in the required mode")]
    Inapplicable { theorem: Theorem },
    #[error("test `{theorem}` guard not met by the snapshot (mode {mode}, pattern {pattern})")]
    GuardNotMet {
        theorem: Theorem,
        mode: SystemMode,
        pattern: Pattern,
    },
}

fn theorem_pivot(theorem: Theorem, ts: &TaskSet, snap: &Snapshot) -> Option<usize> {
    match theorem {
        Theorem::Normal | Theorem::Shrinking | Theorem::Critical => snap.lp_l(ts),
        Theorem::AllHi => snap.lp_h(ts),
    }
}

/// Runs one schedulability test on a snapshot. The check compares demand
/// against supply at the pivot's deadline horizon; the demand curve at
/// intermediate release instants is available via [`demand_curve`].
pub fn schedulable(theorem: Theorem, ts: &TaskSet, snap: &Snapshot) -> Result<Verdict, AnalysisError> {
    let guard_ok = match theorem {
        Theorem::Normal => snap.mode == SystemMode::Normal,
        Theorem::Shrinking => snap.mode == SystemMode::Normal && snap.pattern == Pattern::Shrinking,
        Theorem::Critical => snap.mode == SystemMode::Critical,
        Theorem::AllHi => (0..ts.len())
            .filter(|&i| ts.task(i).criticality.is_hc())
            .all(|i| snap.rows[i].omega == TaskMode::Hi),
    };
    if !guard_ok {
        return Err(AnalysisError::GuardNotMet {
            theorem,
            mode: snap.mode,
            pattern: snap.pattern,
        });
    }
    let pivot = theorem_pivot(theorem, ts, snap).ok_or(AnalysisError::Inapplicable { theorem })?;
    let horizon = snap.rows[pivot].abs_deadline;
    let supply = horizon.saturating_sub(snap.t);
    let demand = match theorem {
        Theorem::Normal | Theorem::Shrinking => released_demand(ts, snap, pivot, horizon),
        Theorem::AllHi | Theorem::Critical => released_demand_critical(ts, snap, pivot, horizon),
    };
    let ok = demand <= supply;
    Ok(Verdict {
        schedulable: ok,
        pivot,
        demand,
        supply,
        witness_z: if ok { None } else { Some(supply) },
    })
}

/// One row of a demand curve dump.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CurveRow {
    pub pivot: usize,
    pub t: Tick,
    pub z: Tick,
    pub demand: Tick,
    pub supply: Tick,
    pub schedulable: bool,
}

/// Demand evaluated at every interfering release instant up to the pivot's
/// deadline (and at the deadline itself), for plotting and diagnosis.
pub fn demand_curve(
    theorem: Theorem,
    ts: &TaskSet,
    snap: &Snapshot,
) -> Result<Vec<CurveRow>, AnalysisError> {
    let verdict = schedulable(theorem, ts, snap)?;
    let pivot = verdict.pivot;
    let horizon = snap.rows[pivot].abs_deadline;
    let mut zs: Vec<Tick> = hp(ts, pivot)
        .into_iter()
        .flat_map(|j| Snapshot::releases_before(snap, ts, j, horizon))
        .map(|r| r - snap.t)
        .collect();
    zs.push(horizon.saturating_sub(snap.t));
    zs.sort_unstable();
    zs.dedup();
    Ok(zs
        .into_iter()
        .map(|z| {
            let end = snap.t + z;
            let demand = match theorem {
                Theorem::Normal | Theorem::Shrinking => released_demand(ts, snap, pivot, end),
                Theorem::AllHi | Theorem::Critical => released_demand_critical(ts, snap, pivot, end),
            };
            CurveRow {
                pivot,
                t: snap.t,
                z,
                demand,
                supply: z,
                schedulable: demand <= z,
            }
        })
        .collect())
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WorkloadError {
    #[error("shrinking `{task}` to pay back {delta} ticks leaves no room for its budget")]
    InfeasibleShrink { task: String, delta: Tick },
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gen::{avionics_taskset, quartet_taskset, shrink_demo_taskset};
    use crate::model::Criticality;
    use proptest::prelude::*;

    fn task(period: Tick, lo: Tick, hi: Tick) -> Task {
        Task {
            id: "x".into(),
            period,
            wcet_lo: lo,
            wcet_hi: hi,
            criticality: Criticality::Hc,
            priority: 1,
        }
    }

    #[test]
    fn psi_h_branch_values() {
        let t = task(20, 5, 7);
        assert_eq!(psi_h(&t, 0, Interval::new(0, 0)), 7);
        assert_eq!(psi_h(&t, 0, Interval::new(0, 20)), 14);
        assert_eq!(psi_h(&t, 5, Interval::new(0, 27)), 16);
    }

    #[test]
    fn psi_l_branch_values() {
        let t = task(20, 5, 7);
        assert_eq!(psi_l(&t, 2, Interval::new(0, 25)), 13);
        assert_eq!(psi_l(&t, 0, Interval::new(0, 24)), 10);
        assert_eq!(psi_l(&t, 5, Interval::new(0, 3)), 0);
    }

    /// Snapshot of the four-task set at the instant its overrunning job
    /// exhausts the low budget: pi1 is HI with 5 ticks consumed, pi3 done,
    /// pi4 untouched, 10 ticks left in the pivot's period.
    fn overrun_snapshot(ts: &TaskSet) -> Snapshot {
        let mut snap = Snapshot::fresh(ts);
        snap.t = 30;
        for (i, row) in snap.rows.iter_mut().enumerate() {
            row.release = 20;
            row.abs_deadline = 40;
            row.next_release = 40;
            let _ = i;
        }
        let pi1 = ts.index_of("pi1").unwrap();
        snap.rows[pi1].omega = TaskMode::Hi;
        snap.rows[pi1].lambda = 5;
        let pi3 = ts.index_of("pi3").unwrap();
        snap.rows[pi3].status = JobStatus::Done;
        snap.rows[pi3].lambda = 5;
        snap
    }

    #[test]
    fn hi_interference_counts_every_hi_task_except_the_pivot() {
        let ts = quartet_taskset();
        let snap = overrun_snapshot(&ts);
        let pivot = ts.index_of("pi2").unwrap();
        assert_eq!(w_h_hi(&ts, &snap, pivot, 10), 9);
        // No HI job at all: zero.
        let fresh = Snapshot::fresh(&ts);
        assert_eq!(w_h_hi(&ts, &fresh, pivot, 20), 0);
        // The pivot itself never contributes here.
        let pi1 = ts.index_of("pi1").unwrap();
        assert_eq!(w_h_hi(&ts, &snap, pi1, 10), 0);
    }

    #[test]
    fn lo_interference_over_a_full_period() {
        let ts = quartet_taskset();
        let snap = Snapshot::fresh(&ts);
        let pivot = ts.index_of("pi2").unwrap();
        assert_eq!(w_h_lo(&ts, &snap, pivot, 20), 10);
        assert_eq!(w_l(&ts, &snap, pivot, 20), 18);
    }

    #[test]
    fn packed_demand_bound_at_the_overrun_instant() {
        let ts = quartet_taskset();
        let snap = overrun_snapshot(&ts);
        let pivot = ts.index_of("pi2").unwrap();
        // 9 (HI) + 0 (LO) + 13 (LC) + 5 (own) with 10 ticks of supply left.
        assert_eq!(dem(&ts, &snap, pivot), 27);
    }

    #[test]
    fn packed_demand_of_a_lone_task_is_its_remaining_budget() {
        let ts = TaskSet::parse("time_scale 1\ntask solo 10 4 6 HC 1\n").unwrap();
        let mut snap = Snapshot::fresh(&ts);
        snap.rows[0].lambda = 1;
        assert_eq!(dem(&ts, &snap, 0), 3);
    }

    #[test]
    fn release_exact_demand_at_the_overrun_instant() {
        let ts = quartet_taskset();
        let snap = overrun_snapshot(&ts);
        let pivot = ts.index_of("pi2").unwrap();
        // pi1 has 2 ticks of HI work left, pi4 its full 4, pivot its 5; pi3
        // is done and nothing else is released before the deadline at 40.
        assert_eq!(released_demand(&ts, &snap, pivot, 40), 11);
    }

    #[test]
    fn release_exact_demand_of_synchronous_start_is_one_budget_each() {
        let ts = quartet_taskset();
        let snap = Snapshot::fresh(&ts);
        let pivot = ts.index_of("pi2").unwrap();
        assert_eq!(released_demand(&ts, &snap, pivot, 20), 19);
    }

    #[test]
    fn release_exact_demand_on_the_fifteen_task_set() {
        let ts = avionics_taskset();
        let snap = Snapshot::fresh(&ts);
        let pivot = snap.lp_l(&ts).unwrap();
        assert_eq!(ts.task(pivot).id, "pi5");
        assert_eq!(released_demand(&ts, &snap, pivot, 2000), 1920);
    }

    #[test]
    fn trigger_demand_without_hi_interference_is_the_high_budget() {
        let ts = quartet_taskset();
        let snap = Snapshot::fresh(&ts);
        let pi2 = ts.index_of("pi2").unwrap();
        assert_eq!(dem_c(&ts, &snap, pi2, 0), 6);
        let mut done = snap.clone();
        done.rows[pi2].lambda = 6;
        assert_eq!(dem_c(&ts, &done, pi2, 0), 0);
    }

    #[test]
    fn trigger_demand_at_the_overrun_instant() {
        let ts = quartet_taskset();
        let snap = overrun_snapshot(&ts);
        let pi2 = ts.index_of("pi2").unwrap();
        // Packed bound: pi1 could demand 2 + one more full high budget.
        assert_eq!(dem_c(&ts, &snap, pi2, 10), 15);
        // Release-exact: pi1 has 2 ticks left and releases nothing before 40.
        assert_eq!(released_demand_critical(&ts, &snap, pi2, 40), 8);
    }

    #[test]
    fn shrink_mu_examples() {
        assert_eq!(shrink_mu(20, 0, 15), Ratio64::from_integer(0));
        assert_eq!(shrink_mu(185, 120, 250), Ratio64::from_integer(60));
        assert_eq!(shrink_mu(370, 120, 250), Ratio64::from_integer(120));
    }

    #[test]
    fn shrunk_periods_tile_the_window_in_the_demo_set() {
        // Two LC tasks amortizing 72 ticks of debt over a 150-tick window:
        // per-period shrinks of 36 and 24 ticks, two and three jobs each.
        let ts = shrink_demo_taskset();
        let mut snap = Snapshot::fresh(&ts);
        snap.t = 30;
        let pivot = ts.index_of("hc").unwrap();
        let lc2 = ts.index_of("lc2").unwrap();
        let lc3 = ts.index_of("lc3").unwrap();
        assert_eq!(shrink_mu(ts.task(lc2).period, 72, 150), Ratio64::from_integer(36));
        assert_eq!(shrink_mu(ts.task(lc3).period, 72, 150), Ratio64::from_integer(24));
        assert_eq!(w_l_shrunk(&ts, &snap, pivot, 30, 72).unwrap(), 30 * 2 + 18 * 3);
        assert_eq!(dem_delta(&ts, &snap, pivot, 72).unwrap(), 114 + 30);
    }

    #[test]
    fn excessive_debt_makes_shrinking_infeasible() {
        let ts = shrink_demo_taskset();
        let mut snap = Snapshot::fresh(&ts);
        snap.t = 30;
        let pivot = ts.index_of("hc").unwrap();
        // Debt so large the shrunk period of lc3 drops to its budget.
        let err = w_l_shrunk(&ts, &snap, pivot, 30, 2000).unwrap_err();
        assert!(matches!(err, WorkloadError::InfeasibleShrink { .. }));
    }

    #[test]
    fn zero_debt_shrunk_demand_matches_plain_demand_between_release_points() {
        // With no debt and untouched budgets, the shrunk LC bound equals the
        // plain LC bound whenever the window is not an exact multiple of the
        // LC period (both count floor + 1 jobs there).
        let ts = TaskSet::parse(
            "time_scale 1\n\
             task lc 20 5 - LC 1\n\
             task hc 24 2 3 HC 9\n",
        )
        .unwrap();
        let snap = Snapshot::fresh(&ts);
        let pivot = ts.index_of("hc").unwrap();
        assert_eq!(
            w_l_shrunk(&ts, &snap, pivot, 0, 0).unwrap(),
            w_l(&ts, &snap, pivot, 24)
        );
        assert_eq!(dem_delta(&ts, &snap, pivot, 0).unwrap(), dem(&ts, &snap, pivot));
    }

    #[test]
    fn windowed_bound_at_the_full_window_reduces_to_the_fixed_bound() {
        let ts = quartet_taskset();
        let snap = overrun_snapshot(&ts);
        let pivot = ts.index_of("pi2").unwrap();
        assert_eq!(
            dbf(DemandKind::Normal, &ts, &snap, pivot, 10).unwrap(),
            dem(&ts, &snap, pivot)
        );
        assert_eq!(
            dbf(DemandKind::Critical, &ts, &snap, pivot, 10).unwrap(),
            dem_c(&ts, &snap, pivot, 10)
        );
        assert_eq!(
            dbf(DemandKind::Shrink(0), &ts, &snap, pivot, 10).unwrap(),
            dem_delta(&ts, &snap, pivot, 0).unwrap()
        );
    }

    #[test]
    fn normal_test_accepts_both_bundled_tasksets_at_start() {
        for ts in [quartet_taskset(), avionics_taskset()] {
            let snap = Snapshot::fresh(&ts);
            let v = schedulable(Theorem::Normal, &ts, &snap).unwrap();
            assert!(v.schedulable, "demand {} supply {}", v.demand, v.supply);
            assert_eq!(v.witness_z, None);
        }
    }

    #[test]
    fn overloaded_pair_fails_with_the_period_as_witness() {
        let ts = TaskSet::parse(
            "time_scale 1\n\
             task h1 10 6 6 HC 1\n\
             task h2 10 6 6 HC 2\n",
        )
        .unwrap();
        let snap = Snapshot::fresh(&ts);
        let v = schedulable(Theorem::Normal, &ts, &snap).unwrap();
        assert!(!v.schedulable);
        assert_eq!(v.demand, 12);
        assert_eq!(v.witness_z, Some(10));
    }

    #[test]
    fn all_hi_guard_rejects_a_lo_snapshot() {
        let ts = quartet_taskset();
        let snap = Snapshot::fresh(&ts);
        assert!(matches!(
            schedulable(Theorem::AllHi, &ts, &snap),
            Err(AnalysisError::GuardNotMet { .. })
        ));
    }

    #[test]
    fn all_hi_test_on_a_forced_hi_snapshot() {
        let ts = quartet_taskset();
        let mut snap = Snapshot::fresh(&ts);
        for i in 0..ts.len() {
            if ts.task(i).criticality.is_hc() {
                snap.rows[i].omega = TaskMode::Hi;
            }
        }
        let v = schedulable(Theorem::AllHi, &ts, &snap).unwrap();
        assert_eq!(ts.task(v.pivot).id, "pi2");
        // pi1 can demand 7 and pi2 itself 6 within 20 ticks.
        assert_eq!(v.demand, 13);
        assert!(v.schedulable);
    }

    #[test]
    fn normal_test_is_inapplicable_when_every_hc_task_is_hi() {
        let ts = TaskSet::parse("time_scale 1\ntask h 10 2 4 HC 1\n").unwrap();
        let mut snap = Snapshot::fresh(&ts);
        snap.rows[0].omega = TaskMode::Hi;
        assert!(matches!(
            schedulable(Theorem::Normal, &ts, &snap),
            Err(AnalysisError::Inapplicable { .. })
        ));
    }

    #[test]
    fn demand_curve_ends_at_the_deadline_and_matches_the_verdict() {
        let ts = quartet_taskset();
        let snap = Snapshot::fresh(&ts);
        let rows = demand_curve(Theorem::Normal, &ts, &snap).unwrap();
        let last = rows.last().unwrap();
        assert_eq!(last.z, 20);
        assert_eq!(last.demand, 19);
        assert!(last.schedulable);
    }

    proptest! {
        /// The packed bounds grow with the window and shrink as budget is
        /// consumed.
        #[test]
        fn packed_bound_is_monotone(
            period in 2u64..30,
            lo in 1u64..10,
            hi_extra in 0u64..5,
            lambda in 0u64..10,
            len1 in 0u64..90,
            len2 in 0u64..90,
        ) {
            let lo = lo.min(period);
            let hi = (lo + hi_extra).min(period);
            let t = task(period, lo, hi);
            let (a, b) = if len1 <= len2 { (len1, len2) } else { (len2, len1) };
            prop_assert!(psi_h(&t, lambda, Interval::new(0, a)) <= psi_h(&t, lambda, Interval::new(0, b)));
            prop_assert!(psi_l(&t, lambda, Interval::new(0, a)) <= psi_l(&t, lambda, Interval::new(0, b)));
            prop_assert!(psi_l(&t, lambda.min(lo), Interval::new(0, a)) >= psi_l(&t, lo, Interval::new(0, a)));
        }

        /// More debt never lowers the shrunk-demand bound.
        #[test]
        fn shrunk_demand_is_monotone_in_debt(d1 in 0u64..40, d2 in 0u64..40) {
            let ts = shrink_demo_taskset();
            let mut snap = Snapshot::fresh(&ts);
            snap.t = 30;
            let pivot = ts.index_of("hc").unwrap();
            let (a, b) = if d1 <= d2 { (d1, d2) } else { (d2, d1) };
            if let (Ok(da), Ok(db)) = (
                dem_delta(&ts, &snap, pivot, a),
                dem_delta(&ts, &snap, pivot, b),
            ) {
                prop_assert!(da <= db, "demand fell from {da} to {db} as debt rose");
            }
        }

        /// The packed bound never undercuts the pivot's own remaining budget.
        #[test]
        fn packed_demand_covers_the_pivot(lambda in 0u64..6) {
            let ts = quartet_taskset();
            let mut snap = Snapshot::fresh(&ts);
            let pivot = ts.index_of("pi2").unwrap();
            snap.rows[pivot].lambda = lambda;
            let own = ts.task(pivot).wcet_lo.saturating_sub(lambda);
            prop_assert!(dem(&ts, &snap, pivot) >= own);
        }
    }
}

//! Tick-accurate uniprocessor simulator for the four scheduling algorithms.
//!
//! Each tick processes phases in a fixed order: completions, deadline
//! expiries (including the end of a critical window), releases, overrun
//! detection, the system-switch check, shrink planning, and finally
//! dispatch. Job execution demands come from a [`Scenario`]; for a given
//! stochastic seed every algorithm sees identical demands, so runs are
//! directly comparable.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::metrics::RunMetrics;
use crate::model::{parse_scaled, Criticality, JobStatus, ModelError, TaskMode, TaskSet, Tick};
use crate::modes::{build_shrink_plan, find_trigger, CriticalWindow, ModeState, SystemMode};
use crate::policy::{pick, PolicyKind};
use crate::trace::{DiscardReason, EventKind, TraceEvent};
use crate::workload::{SnapRow, Snapshot};

/// Scheduling algorithm driving a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Algorithm {
    /// Criticality-oblivious fixed priority: jobs run to their actual demand
    /// under one dispatch order.
    FpClassic,
    /// Per-job LO/HI switches with HI-first dispatch; no system mode.
    TaskLevelOnly,
    /// Per-job switches plus a drop window: while any overrunner's period is
    /// open, LC jobs are killed at once and on release.
    SystemLevelDrop,
    /// Per-job switches plus system-level critical windows with LC
    /// stretching and compensating shrinking.
    Multimode,
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::FpClassic => write!(f, "fp-classic"),
            Algorithm::TaskLevelOnly => write!(f, "task-level"),
            Algorithm::SystemLevelDrop => write!(f, "system-drop"),
            Algorithm::Multimode => write!(f, "multimode"),
        }
    }
}

impl std::str::FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fp-classic" => Ok(Algorithm::FpClassic),
            "task-level" => Ok(Algorithm::TaskLevelOnly),
            "system-drop" => Ok(Algorithm::SystemLevelDrop),
            "multimode" => Ok(Algorithm::Multimode),
            other => Err(format!(
                "unknown algorithm `{other}` (expected fp-classic, task-level, system-drop, or multimode)"
            )),
        }
    }
}

/// Budget used for HC jobs a script does not mention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DefaultBudget {
    Lo,
    Hi,
}

/// Source of per-job execution demands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Scenario {
    /// Explicit demands per (task, job ordinal); HC jobs without an entry
    /// fall back to `default` when set and are an error otherwise.
    Scripted {
        budgets: Vec<((usize, u64), Tick)>,
        default: Option<DefaultBudget>,
    },
    /// Each HC job independently overruns with probability `overrun_p`,
    /// drawing a demand uniformly from `(C_lo, C_hi]`; the draw depends only
    /// on `(seed, task, job)`.
    Stochastic { seed: u64, overrun_p: f64 },
}

impl Scenario {
    pub fn stochastic(seed: u64, overrun_p: f64) -> Result<Self, SimError> {
        if !(0.0..=1.0).contains(&overrun_p) {
            return Err(SimError::BadProbability { p: overrun_p });
        }
        Ok(Scenario::Stochastic { seed, overrun_p })
    }

    /// Parses a demand script. Lines are `budget <task> <job> <value>` with
    /// 1-based job ordinals and values in model units; an optional
    /// `default c_lo` (or `default c_hi`) line makes unscripted HC jobs run
    /// at their low (high) budget. `#` starts a comment.
    pub fn parse_script(text: &str, ts: &TaskSet) -> Result<Self, SimError> {
        let mut budgets = Vec::new();
        let mut default = None;
        for (i, raw) in text.lines().enumerate() {
            let lineno = i + 1;
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let words: Vec<&str> = line.split_whitespace().collect();
            match words[0] {
                "default" if words.len() == 2 && words[1] == "c_lo" => {
                    default = Some(DefaultBudget::Lo)
                }
                "default" if words.len() == 2 && words[1] == "c_hi" => {
                    default = Some(DefaultBudget::Hi)
                }
                "budget" if words.len() == 4 => {
                    let task = ts.index_of(words[1]).ok_or_else(|| SimError::Script {
                        line: lineno,
                        msg: format!("unknown task `{}`", words[1]),
                    })?;
                    let job: u64 = words[2].parse().map_err(|_| SimError::Script {
                        line: lineno,
                        msg: format!("invalid job ordinal `{}`", words[2]),
                    })?;
                    if job == 0 {
                        return Err(SimError::Script {
                            line: lineno,
                            msg: "job ordinals start at 1".into(),
                        });
                    }
                    let value = parse_scaled(words[3], ts.time_scale(), lineno)
                        .map_err(|e| SimError::Script {
                            line: lineno,
                            msg: e.to_string(),
                        })?;
                    let t = ts.task(task);
                    if value == 0 || value > t.wcet_hi {
                        return Err(SimError::Script {
                            line: lineno,
                            msg: format!(
                                "budget {value} for `{}` job {job} is outside (0, {}]",
                                t.id, t.wcet_hi
                            ),
                        });
                    }
                    budgets.push(((task, job), value));
                }
                _ => {
                    return Err(SimError::Script {
                        line: lineno,
                        msg: format!("unrecognized line `{line}`"),
                    })
                }
            }
        }
        Ok(Scenario::Scripted { budgets, default })
    }

    /// Demand of one job. LC jobs always run at their single budget.
    fn budget(&self, ts: &TaskSet, task: usize, job: u64) -> Result<Tick, SimError> {
        let t = ts.task(task);
        if !t.criticality.is_hc() {
            return Ok(t.wcet_lo);
        }
        match self {
            Scenario::Scripted { budgets, default } => {
                if let Some((_, b)) = budgets.iter().find(|((ti, j), _)| *ti == task && *j == job) {
                    Ok(*b)
                } else {
                    match default {
                        Some(DefaultBudget::Lo) => Ok(t.wcet_lo),
                        Some(DefaultBudget::Hi) => Ok(t.wcet_hi),
                        None => Err(SimError::MissingBudget {
                            task: t.id.clone(),
                            job,
                        }),
                    }
                }
            }
            Scenario::Stochastic { seed, overrun_p } => {
                let mut rng = ChaCha8Rng::seed_from_u64(job_seed(*seed, task, job));
                if t.wcet_hi > t.wcet_lo && rng.gen_bool(*overrun_p) {
                    Ok(rng.gen_range(t.wcet_lo + 1..=t.wcet_hi))
                } else {
                    Ok(t.wcet_lo)
                }
            }
        }
    }
}

/// Stateless per-job seed so demands do not depend on simulation history.
fn job_seed(seed: u64, task: usize, job: u64) -> u64 {
    let mut x = seed
        ^ (task as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ job.wrapping_mul(0xD1B5_4A32_D192_ED03);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Parameters of one simulation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub algorithm: Algorithm,
    /// Run length in ticks; deadlines at the horizon are still checked.
    pub horizon: Tick,
    pub scenario: Scenario,
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunResult {
    pub events: Vec<TraceEvent>,
    pub metrics: RunMetrics,
    /// Mode-controller state at the horizon (trivial for the baselines).
    pub mode: ModeState,
    /// State captured at each return to normal mode (after that instant's
    /// releases and overrun checks, before any shrink planning), so the
    /// schedulability tests can be audited against the run post hoc.
    pub switchback_snapshots: Vec<Snapshot>,
}

#[derive(Debug, Error, PartialEq)]
pub enum SimError {
    #[error("scenario line {line}: {msg}")]
    Script { line: usize, msg: String },
    #[error("no scripted budget for HC task `{task}` job {job} and no default")]
    MissingBudget { task: String, job: u64 },
    #[error("overrun probability {p} is not within [0, 1]")]
    BadProbability { p: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
}

struct Row {
    job: u64,
    status: JobStatus,
    omega: TaskMode,
    lambda: Tick,
    release: Tick,
    abs_deadline: Tick,
    next_release: Tick,
    budget: Tick,
    /// Cumulative deadline postponement of the current job.
    postponed: Tick,
    discarded: bool,
    missed: bool,
}

impl Row {
    fn live(&self, t: Tick) -> bool {
        self.status != JobStatus::Done && self.release <= t
    }
}

struct Engine<'a> {
    ts: &'a TaskSet,
    cfg: &'a RunConfig,
    rows: Vec<Row>,
    st: ModeState,
    policy: PolicyKind,
    /// Task and job ordinal currently on the processor.
    running: Option<(usize, u64)>,
    events: Vec<TraceEvent>,
    /// End of the open LC drop window (system-drop algorithm).
    drop_until: Tick,
    /// Shrink planning is attempted right after a switch-back and at pivot
    /// period starts; this flags the former.
    just_switched_back: bool,
    switchbacks: Vec<Snapshot>,
    dem_evals: u64,
}

/// Simulates `ts` under `cfg` from a synchronous start.
pub fn run(ts: &TaskSet, cfg: &RunConfig) -> Result<RunResult, SimError> {
    if let Scenario::Stochastic { overrun_p, .. } = cfg.scenario {
        if !(0.0..=1.0).contains(&overrun_p) {
            return Err(SimError::BadProbability { p: overrun_p });
        }
    }
    let mut eng = Engine {
        ts,
        cfg,
        rows: (0..ts.len())
            .map(|_| Row {
                job: 0,
                status: JobStatus::Done,
                omega: TaskMode::Lo,
                lambda: 0,
                release: 0,
                abs_deadline: 0,
                next_release: 0,
                budget: 0,
                postponed: 0,
                discarded: false,
                missed: false,
            })
            .collect(),
        st: ModeState::new(),
        policy: initial_policy(cfg.algorithm),
        running: None,
        events: Vec::new(),
        drop_until: 0,
        just_switched_back: false,
        switchbacks: Vec::new(),
        dem_evals: 0,
    };
    for t in 0..cfg.horizon {
        eng.completions(t);
        eng.expiries(t);
        eng.releases(t)?;
        eng.detect_overruns(t);
        eng.system_switch_check(t);
        eng.capture_switchback(t);
        eng.shrink_check(t);
        eng.dispatch(t);
    }
    eng.completions(cfg.horizon);
    eng.expiries(cfg.horizon);
    if eng.running.is_some() {
        eng.events.push(TraceEvent::new(cfg.horizon, EventKind::Idle));
        eng.running = None;
    }
    let mut metrics = RunMetrics::from_events(&eng.events);
    metrics.dem_evals = eng.dem_evals;
    Ok(RunResult {
        events: eng.events,
        metrics,
        mode: eng.st,
        switchback_snapshots: eng.switchbacks,
    })
}

fn initial_policy(alg: Algorithm) -> PolicyKind {
    match alg {
        Algorithm::FpClassic | Algorithm::Multimode => PolicyKind::PriorityOnly,
        Algorithm::TaskLevelOnly | Algorithm::SystemLevelDrop => PolicyKind::ModeThenPriority,
    }
}

impl Engine<'_> {
    fn emit(&mut self, t: Tick, kind: EventKind) {
        self.events.push(TraceEvent::new(t, kind));
    }

    fn any_live_hi(&self, t: Tick) -> bool {
        self.rows
            .iter()
            .any(|r| r.omega == TaskMode::Hi && r.status != JobStatus::Done && r.release <= t)
    }

    fn snapshot(&self, t: Tick) -> Snapshot {
        Snapshot {
            t,
            mode: self.st.mode,
            pattern: self.st.pattern(),
            delta: self.st.delta,
            rows: self
                .rows
                .iter()
                .enumerate()
                .map(|(i, r)| SnapRow {
                    status: r.status,
                    omega: r.omega,
                    lambda: r.lambda,
                    release: r.release,
                    abs_deadline: r.abs_deadline,
                    next_release: r.next_release,
                    upcoming_periods: self
                        .st
                        .plan
                        .as_ref()
                        .map(|p| {
                            p.queues[i]
                                .iter()
                                .map(|s| self.ts.task(i).period - s)
                                .collect()
                        })
                        .unwrap_or_default(),
                })
                .collect(),
        }
    }

    fn completions(&mut self, t: Tick) {
        if let Some((i, job)) = self.running {
            let row = &mut self.rows[i];
            if row.job == job && row.status != JobStatus::Done && row.lambda == row.budget {
                row.status = JobStatus::Done;
                let response = t - row.release;
                self.emit(t, EventKind::Complete { task: i, response });
                self.running = None;
            }
        }
    }

    fn expiries(&mut self, t: Tick) {
        for i in 0..self.rows.len() {
            let row = &self.rows[i];
            if row.status == JobStatus::Done || row.job == 0 || t < row.abs_deadline {
                continue;
            }
            let crit = self.ts.task(i).criticality;
            let lateness = self.rows[i].budget - self.rows[i].lambda;
            match crit {
                Criticality::Hc => {
                    // Unfinished HC jobs are abandoned at their deadline and
                    // the task's budget tracking starts over.
                    self.emit(t, EventKind::DeadlineMiss { task: i, crit, lateness });
                    self.rows[i].status = JobStatus::Done;
                    self.emit(t, EventKind::Refresh { task: i });
                    // `running` stays stale so the dispatch phase emits the
                    // event that closes this job's execution segment.
                }
                Criticality::Lc => {
                    // Late LC jobs keep running; the deadline and the next
                    // release move out one period at a time.
                    if !self.rows[i].missed {
                        self.emit(t, EventKind::DeadlineMiss { task: i, crit, lateness });
                        self.rows[i].missed = true;
                    }
                    let period = self.ts.task(i).period;
                    self.rows[i].abs_deadline += period;
                    self.rows[i].next_release = self.rows[i].abs_deadline;
                }
            }
        }
        if let Some(window) = &self.st.window {
            if t >= window.end {
                self.leave_critical(t);
            }
        }
    }

    fn leave_critical(&mut self, t: Tick) {
        self.st.mode = SystemMode::Normal;
        self.st.window = None;
        self.policy = if self.any_live_hi(t) {
            PolicyKind::ModeThenPriority
        } else {
            PolicyKind::PriorityOnly
        };
        self.just_switched_back = true;
        self.emit(
            t,
            EventKind::SystemModeSwitch {
                to: SystemMode::Normal,
                trigger: None,
                s_rel: 0,
                delta: self.st.delta,
                policy: self.policy,
            },
        );
    }

    fn releases(&mut self, t: Tick) -> Result<(), SimError> {
        for i in 0..self.rows.len() {
            if t < self.rows[i].next_release || self.rows[i].status != JobStatus::Done {
                continue;
            }
            let task = self.ts.task(i);
            debug_assert!(
                self.st.mode == SystemMode::Normal || task.criticality.is_hc(),
                "LC releases cannot occur inside a critical window"
            );
            let job = self.rows[i].job + 1;
            let shrink = self
                .st
                .plan
                .as_mut()
                .map(|p| p.pop(i))
                .unwrap_or(0);
            if let Some(plan) = &self.st.plan {
                if plan.exhausted() {
                    self.st.plan = None;
                }
            }
            let period = task.period - shrink;
            let release = self.rows[i].next_release;
            let budget = self.cfg.scenario.budget(self.ts, i, job)?;
            let row = &mut self.rows[i];
            row.job = job;
            row.status = JobStatus::Ready;
            row.omega = TaskMode::Lo;
            row.lambda = 0;
            row.release = release;
            row.abs_deadline = release + period;
            row.next_release = release + period;
            row.budget = budget;
            row.postponed = 0;
            row.discarded = false;
            row.missed = false;
            let deadline = row.abs_deadline;
            self.emit(t, EventKind::Release { task: i, job, deadline });
            if self.cfg.algorithm == Algorithm::SystemLevelDrop
                && !task.criticality.is_hc()
                && t < self.drop_until
            {
                self.rows[i].status = JobStatus::Done;
                self.emit(
                    t,
                    EventKind::Discard {
                        task: i,
                        job,
                        reason: DiscardReason::DropRelease,
                    },
                );
            }
        }
        Ok(())
    }

    fn detect_overruns(&mut self, t: Tick) {
        if self.cfg.algorithm == Algorithm::FpClassic {
            return;
        }
        for i in 0..self.rows.len() {
            let row = &self.rows[i];
            let task = self.ts.task(i);
            if task.criticality.is_hc()
                && row.omega == TaskMode::Lo
                && row.status != JobStatus::Done
                && row.lambda >= task.wcet_lo
                && row.budget > task.wcet_lo
            {
                self.rows[i].omega = TaskMode::Hi;
                self.emit(t, EventKind::TaskModeSwitch { task: i, to: TaskMode::Hi });
                match self.cfg.algorithm {
                    Algorithm::Multimode => {
                        if self.st.mode == SystemMode::Normal {
                            self.policy = PolicyKind::ModeThenPriority;
                        } else {
                            self.emit(t, EventKind::NestedPressure { task: i });
                        }
                    }
                    Algorithm::SystemLevelDrop => {
                        self.drop_until = self.drop_until.max(self.rows[i].abs_deadline);
                        self.drop_pending_lc(t);
                    }
                    _ => {}
                }
            }
        }
    }

    fn drop_pending_lc(&mut self, t: Tick) {
        for i in 0..self.rows.len() {
            if self.ts.task(i).criticality.is_hc() || !self.rows[i].live(t) {
                continue;
            }
            let job = self.rows[i].job;
            self.rows[i].status = JobStatus::Done;
            self.emit(
                t,
                EventKind::Discard {
                    task: i,
                    job,
                    reason: DiscardReason::DropWindow,
                },
            );
            // A dropped running job keeps `running` stale; the dispatch
            // phase emits the closing event.
        }
    }

    fn system_switch_check(&mut self, t: Tick) {
        if self.cfg.algorithm != Algorithm::Multimode
            || self.st.mode != SystemMode::Normal
            || !self.any_live_hi(t)
        {
            return;
        }
        let snap = self.snapshot(t);
        self.dem_evals += 1;
        let Some(trig) = find_trigger(self.ts, &snap) else {
            return;
        };
        let t_trig = self.ts.task(trig.task).period;
        let window = CriticalWindow {
            trigger: trig.task,
            s_rel: trig.s_rel,
            start: t,
            end: t + (t_trig - trig.s_rel),
        };
        let amount = window.stretch();
        let has_lc = (0..self.ts.len()).any(|i| !self.ts.task(i).criticality.is_hc());
        if has_lc {
            self.st.delta += amount;
        }
        self.st.mode = SystemMode::Critical;
        self.st.window = Some(window);
        self.policy = PolicyKind::CritThenModeThenPriority;
        self.emit(
            t,
            EventKind::SystemModeSwitch {
                to: SystemMode::Critical,
                trigger: Some(trig.task),
                s_rel: trig.s_rel,
                delta: self.st.delta,
                policy: self.policy,
            },
        );
        // Push all LC work past the window: live jobs keep their (moved)
        // deadlines, and every next release moves with them.
        for i in 0..self.rows.len() {
            let task = self.ts.task(i);
            if task.criticality.is_hc() {
                continue;
            }
            self.rows[i].next_release += amount;
            if self.rows[i].live(t) {
                self.rows[i].abs_deadline += amount;
                self.rows[i].postponed += amount;
                let row = &self.rows[i];
                let (job, new_deadline, total) = (row.job, row.abs_deadline, row.postponed);
                self.emit(
                    t,
                    EventKind::StretchApplied {
                        task: i,
                        job,
                        amount,
                        new_deadline,
                        total_postponed: total,
                    },
                );
                if !self.rows[i].discarded && self.rows[i].postponed > task.slack() {
                    self.rows[i].discarded = true;
                    self.emit(
                        t,
                        EventKind::Discard {
                            task: i,
                            job,
                            reason: DiscardReason::Postponed,
                        },
                    );
                }
            }
        }
    }

    /// Records the state at a switch-back instant, after that instant's
    /// releases and overrun detection but before shrink planning. Note a new
    /// critical window may have opened at the very same instant; consumers
    /// can see that through the captured mode.
    fn capture_switchback(&mut self, t: Tick) {
        if self.just_switched_back {
            let snap = self.snapshot(t);
            self.switchbacks.push(snap);
        }
    }

    fn shrink_check(&mut self, t: Tick) {
        if self.cfg.algorithm != Algorithm::Multimode
            || self.st.mode != SystemMode::Normal
            || self.st.delta == 0
            || self.st.plan.is_some()
        {
            self.just_switched_back = false;
            return;
        }
        let snap = self.snapshot(t);
        // Plans are sized at a switch-back and retried at each pivot period
        // start, where the repayment window is widest.
        let at_pivot_start = snap
            .lp_l(self.ts)
            .is_some_and(|p| t % self.ts.task(p).period == 0);
        if !self.just_switched_back && !at_pivot_start {
            return;
        }
        self.just_switched_back = false;
        self.dem_evals += 1;
        if let Some(plan) = build_shrink_plan(self.ts, &snap, self.st.delta) {
            self.st.delta -= plan.amount;
            self.emit(
                t,
                EventKind::ShrinkApplied {
                    amount: plan.amount,
                    delta: self.st.delta,
                    until: plan.until,
                },
            );
            self.st.plan = Some(plan);
        }
    }

    fn dispatch(&mut self, t: Tick) {
        let jobs: Vec<crate::model::JobState> = self
            .rows
            .iter()
            .enumerate()
            .map(|(i, r)| crate::model::JobState {
                task: i,
                job: r.job,
                status: r.status,
                omega: r.omega,
                lambda: r.lambda,
                release: r.release,
                abs_deadline: r.abs_deadline,
                budget: r.budget,
            })
            .collect();
        let picked = pick(self.policy, self.ts, &jobs, t).map(|i| (i, self.rows[i].job));
        if picked != self.running {
            match (self.running, picked) {
                (Some((prev, job)), Some((next, _))) => {
                    if self.rows[prev].job == job && self.rows[prev].status != JobStatus::Done {
                        self.emit(t, EventKind::Preempt { task: prev, by: next });
                    }
                    self.emit(t, EventKind::Dispatch { task: next });
                }
                (None, Some((next, _))) => self.emit(t, EventKind::Dispatch { task: next }),
                (Some(_), None) => self.emit(t, EventKind::Idle),
                (None, None) => {}
            }
            self.running = picked;
        }
        if let Some((i, _)) = self.running {
            self.rows[i].lambda += 1;
        }
    }
}

//! Post-hoc trace validation: replays an event log and checks the invariants
//! every run must satisfy, independently of the simulator that produced it.
//!
//! Checked rules include: event time ordering, one job on the processor at a
//! time with explicit preemptions, per-job execution accounting against the
//! task budgets, dispatch conformance to the active arbitration order, work
//! conservation (never idle while a job is ready), critical-window duration
//! and non-nesting, postponement-debt conservation across stretch and shrink
//! events, and per-algorithm event vocabulary.

use std::collections::{BTreeMap, BTreeSet};

use crate::model::{Criticality, JobState, JobStatus, TaskMode, TaskSet, Tick};
use crate::modes::SystemMode;
use crate::policy::{pick, PolicyKind};
use crate::sim::Algorithm;
use crate::trace::{DiscardReason, EventKind, TraceEvent};

/// One broken invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub t: Tick,
    pub rule: &'static str,
    pub detail: String,
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t={}: [{}] {}", self.t, self.rule, self.detail)
    }
}

const MAX_VIOLATIONS: usize = 500;

#[derive(Debug, Clone)]
struct JobView {
    job: u64,
    release: Tick,
    deadline: Tick,
    live: bool,
    omega: TaskMode,
    missed: bool,
    postponed: Tick,
}

struct Checker<'a> {
    ts: &'a TaskSet,
    alg: Algorithm,
    out: Vec<Violation>,
    jobs: Vec<Option<JobView>>,
    exec: BTreeMap<(usize, u64), Tick>,
    /// Task, job ordinal, and start of the open execution segment.
    running: Option<(usize, u64, Tick)>,
    busy: Vec<(Tick, Tick)>,
    ready_spans: Vec<(Tick, Tick)>,
    policy: PolicyKind,
    mode: SystemMode,
    delta: Tick,
    /// Expected end of the open critical window.
    window_end: Option<Tick>,
    preempted_now: BTreeSet<usize>,
    hi_switch_seen: BTreeSet<(usize, u64)>,
    last_t: Tick,
}

/// Replays `events` and returns every violated invariant (empty = valid).
pub fn validate(ts: &TaskSet, alg: Algorithm, events: &[TraceEvent]) -> Vec<Violation> {
    let mut ck = Checker {
        ts,
        alg,
        out: Vec::new(),
        jobs: vec![None; ts.len()],
        exec: BTreeMap::new(),
        running: None,
        busy: Vec::new(),
        ready_spans: Vec::new(),
        policy: match alg {
            Algorithm::FpClassic | Algorithm::Multimode => PolicyKind::PriorityOnly,
            Algorithm::TaskLevelOnly | Algorithm::SystemLevelDrop => PolicyKind::ModeThenPriority,
        },
        mode: SystemMode::Normal,
        delta: 0,
        window_end: None,
        preempted_now: BTreeSet::new(),
        hi_switch_seen: BTreeSet::new(),
        last_t: 0,
    };
    let mut cur_t = 0;
    for ev in events {
        if ev.t < cur_t {
            ck.push(ev.t, "time-order", format!("event time went back from {cur_t}"));
        } else if ev.t > cur_t {
            ck.instant_done(cur_t);
            cur_t = ev.t;
        }
        ck.last_t = cur_t;
        ck.apply(ev);
        if ck.out.len() >= MAX_VIOLATIONS {
            return ck.out;
        }
    }
    // No conformance check at the final instant: the trace ends there, so the
    // last decision has no observable execution behind it.
    ck.finish(cur_t);
    ck.out
}

impl Checker<'_> {
    fn push(&mut self, t: Tick, rule: &'static str, detail: String) {
        if self.out.len() < MAX_VIOLATIONS {
            self.out.push(Violation { t, rule, detail });
        }
    }

    fn exec_at(&self, t: Tick, task: usize, job: u64) -> Tick {
        let stored = self.exec.get(&(task, job)).copied().unwrap_or(0);
        match self.running {
            Some((rt, rj, start)) if rt == task && rj == job => stored + (t - start),
            _ => stored,
        }
    }

    fn close_segment(&mut self, t: Tick) {
        if let Some((task, job, start)) = self.running.take() {
            if t > start {
                *self.exec.entry((task, job)).or_insert(0) += t - start;
                self.busy.push((start, t));
            }
        }
    }

    fn kill_job(&mut self, t: Tick, task: usize) {
        if let Some(v) = &mut self.jobs[task] {
            if v.live {
                v.live = false;
                self.ready_spans.push((v.release, t));
            }
        }
    }

    fn apply(&mut self, ev: &TraceEvent) {
        let t = ev.t;
        match &ev.kind {
            EventKind::Release { task, job, deadline } => self.on_release(t, *task, *job, *deadline),
            EventKind::Dispatch { task } => self.on_dispatch(t, *task),
            EventKind::Preempt { task, by } => self.on_preempt(t, *task, *by),
            EventKind::Complete { task, response } => self.on_complete(t, *task, *response),
            EventKind::DeadlineMiss { task, crit, lateness } => self.on_miss(t, *task, *crit, *lateness),
            EventKind::Discard { task, job, reason } => self.on_discard(t, *task, *job, *reason),
            EventKind::TaskModeSwitch { task, to } => self.on_task_switch(t, *task, *to),
            EventKind::SystemModeSwitch { to, trigger, s_rel, delta, policy } => {
                self.on_system_switch(t, *to, *trigger, *s_rel, *delta, *policy)
            }
            EventKind::StretchApplied { task, job, amount, new_deadline, total_postponed } => {
                self.on_stretch(t, *task, *job, *amount, *new_deadline, *total_postponed)
            }
            EventKind::ShrinkApplied { amount, delta, until } => self.on_shrink(t, *amount, *delta, *until),
            EventKind::Refresh { task } => {
                if !self.ts.task(*task).criticality.is_hc() {
                    self.push(t, "event-vocabulary", format!("refresh of LC task {task}"));
                }
            }
            EventKind::NestedPressure { task } => {
                if self.alg != Algorithm::Multimode {
                    self.push(t, "event-vocabulary", "nested-pressure outside multimode".into());
                } else if self.mode != SystemMode::Critical {
                    self.push(t, "event-vocabulary", format!("nested pressure from task {task} outside a critical window"));
                }
            }
            EventKind::Idle => self.close_segment(t),
        }
    }

    fn on_release(&mut self, t: Tick, task: usize, job: u64, deadline: Tick) {
        if task >= self.ts.len() {
            self.push(t, "unknown-task", format!("release of task {task}"));
            return;
        }
        let info = self.ts.task(task);
        let prev = self.jobs[task].clone();
        let expected = prev.as_ref().map(|v| v.job + 1).unwrap_or(1);
        if job != expected {
            self.push(t, "release-order", format!("task {task} released job {job}, expected {expected}"));
        }
        if let Some(prev) = prev.filter(|v| v.live) {
            self.push(t, "release-order", format!("task {task} released job {job} while job {} is live", prev.job));
        }
        if info.criticality.is_hc() && t != (job - 1) * info.period {
            self.push(t, "hc-release-grid", format!("task {task} job {job} released off the nominal grid"));
        }
        if deadline <= t || deadline > t + info.period {
            self.push(t, "release-deadline", format!("task {task} job {job} deadline {deadline} outside (t, t+T]"));
        }
        self.jobs[task] = Some(JobView {
            job,
            release: t,
            deadline,
            live: true,
            omega: TaskMode::Lo,
            missed: false,
            postponed: 0,
        });
    }

    fn on_dispatch(&mut self, t: Tick, task: usize) {
        if let Some((prev, job, _)) = self.running {
            let prev_live = self.jobs[prev].as_ref().is_some_and(|v| v.live && v.job == job);
            if prev_live && prev != task && !self.preempted_now.contains(&prev) {
                self.push(t, "uniproc", format!("dispatch of {task} while {prev} runs without a preemption"));
            }
            self.close_segment(t);
        }
        match self.jobs[task].as_ref() {
            Some(v) if v.live => self.running = Some((task, v.job, t)),
            _ => {
                self.push(t, "dispatch-dead-job", format!("task {task} has no live job"));
                self.running = None;
            }
        }
    }

    fn on_preempt(&mut self, t: Tick, task: usize, by: usize) {
        match self.running {
            Some((r, _, _)) if r == task => {
                self.preempted_now.insert(task);
            }
            _ => self.push(t, "preempt-mismatch", format!("preempt of {task} which is not running")),
        }
        if !self.jobs.get(by).map(Option::is_some).unwrap_or(false) {
            self.push(t, "preempt-mismatch", format!("preemptor {by} has no job"));
        }
    }

    fn on_complete(&mut self, t: Tick, task: usize, response: Tick) {
        if self.running.is_some_and(|(r, _, _)| r == task) {
            self.close_segment(t);
        }
        let Some(v) = self.jobs[task].clone() else {
            self.push(t, "exec-accounting", format!("completion of task {task} with no job"));
            return;
        };
        if !v.live {
            self.push(t, "exec-accounting", format!("task {task} job {} completed twice", v.job));
            return;
        }
        let info = self.ts.task(task);
        let exec = self.exec_at(t, task, v.job);
        if response != t - v.release {
            self.push(t, "response", format!("task {task} job {} response {response} != {}", v.job, t - v.release));
        }
        match info.criticality {
            Criticality::Lc => {
                if exec != info.wcet_lo {
                    self.push(t, "exec-accounting", format!("LC task {task} job {} executed {exec} != {}", v.job, info.wcet_lo));
                }
                if t > v.deadline && !v.missed {
                    self.push(t, "late-complete", format!("LC task {task} finished late without a recorded miss"));
                }
            }
            Criticality::Hc => {
                if exec == 0 || exec > info.wcet_hi {
                    self.push(t, "exec-accounting", format!("HC task {task} job {} executed {exec} outside (0, {}]", v.job, info.wcet_hi));
                }
                if exec > info.wcet_lo
                    && self.alg != Algorithm::FpClassic
                    && !self.hi_switch_seen.contains(&(task, v.job))
                {
                    self.push(t, "exec-accounting", format!("HC task {task} job {} ran past its low budget without a HI switch", v.job));
                }
                if t > v.deadline {
                    self.push(t, "late-complete", format!("HC task {task} job {} completed after its deadline", v.job));
                }
            }
        }
        self.kill_job(t, task);
    }

    fn on_miss(&mut self, t: Tick, task: usize, crit: Criticality, lateness: Tick) {
        let info = self.ts.task(task);
        if info.criticality != crit {
            self.push(t, "event-vocabulary", format!("miss of task {task} tagged {crit}, task is {}", info.criticality));
        }
        let Some(v) = self.jobs[task].clone() else {
            self.push(t, "miss-timing", format!("miss of task {task} with no job"));
            return;
        };
        if t != v.deadline && !v.missed {
            self.push(t, "miss-timing", format!("task {task} job {} missed at {t}, deadline {}", v.job, v.deadline));
        }
        match info.criticality {
            Criticality::Hc => {
                if self.running.is_some_and(|(r, j, _)| r == task && j == v.job) {
                    self.close_segment(t);
                }
                let exec = self.exec_at(t, task, v.job);
                if exec + lateness == 0 || exec + lateness > info.wcet_hi {
                    self.push(t, "miss-lateness", format!("task {task} job {}: executed {exec} + lateness {lateness} outside (0, {}]", v.job, info.wcet_hi));
                }
                self.kill_job(t, task);
            }
            Criticality::Lc => {
                if v.missed {
                    self.push(t, "miss-timing", format!("task {task} job {} missed twice", v.job));
                }
                if let Some(view) = &mut self.jobs[task] {
                    view.missed = true;
                    view.deadline += info.period;
                }
            }
        }
    }

    fn on_discard(&mut self, t: Tick, task: usize, job: u64, reason: DiscardReason) {
        let drop_kind = matches!(reason, DiscardReason::DropWindow | DiscardReason::DropRelease);
        match (self.alg, drop_kind) {
            (Algorithm::SystemLevelDrop, true) | (Algorithm::Multimode, false) => {}
            _ => self.push(t, "event-vocabulary", format!("discard reason {reason} under {}", self.alg)),
        }
        if self.ts.task(task).criticality.is_hc() {
            self.push(t, "event-vocabulary", format!("discard of HC task {task}"));
        }
        if !self.jobs[task].as_ref().is_some_and(|v| v.job == job) {
            self.push(t, "event-vocabulary", format!("discard of unknown job {job} of task {task}"));
        }
        if drop_kind {
            if self.running.is_some_and(|(r, j, _)| r == task && j == job) {
                self.close_segment(t);
            }
            self.kill_job(t, task);
        }
    }

    fn on_task_switch(&mut self, t: Tick, task: usize, to: TaskMode) {
        if self.alg == Algorithm::FpClassic {
            self.push(t, "event-vocabulary", "mode switch under the classic baseline".into());
            return;
        }
        let Some(v) = self.jobs[task].clone() else {
            self.push(t, "mode-transition", format!("mode switch of task {task} with no job"));
            return;
        };
        if to == TaskMode::Hi {
            if !self.ts.task(task).criticality.is_hc() {
                self.push(t, "mode-transition", format!("LC task {task} switched to HI"));
            }
            if v.omega == TaskMode::Hi {
                self.push(t, "mode-transition", format!("task {task} job {} switched to HI twice", v.job));
            }
            let exec = self.exec_at(t, task, v.job);
            if exec != self.ts.task(task).wcet_lo {
                self.push(t, "mode-transition", format!("task {task} switched to HI after {exec} ticks, low budget is {}", self.ts.task(task).wcet_lo));
            }
            self.hi_switch_seen.insert((task, v.job));
            if let Some(view) = &mut self.jobs[task] {
                view.omega = TaskMode::Hi;
            }
            if self.alg == Algorithm::Multimode && self.mode == SystemMode::Normal {
                self.policy = PolicyKind::ModeThenPriority;
            }
        }
    }

    fn on_system_switch(
        &mut self,
        t: Tick,
        to: SystemMode,
        trigger: Option<usize>,
        s_rel: Tick,
        delta: Tick,
        policy: PolicyKind,
    ) {
        if self.alg != Algorithm::Multimode {
            self.push(t, "event-vocabulary", format!("system switch under {}", self.alg));
            return;
        }
        match to {
            SystemMode::Critical => {
                if self.mode == SystemMode::Critical {
                    self.push(t, "nested-critical", "critical window opened inside another".into());
                }
                let Some(trig) = trigger else {
                    self.push(t, "mode-transition", "critical switch without a trigger".into());
                    return;
                };
                let period = self.ts.task(trig).period;
                if s_rel >= period {
                    self.push(t, "mode-transition", format!("switch offset {s_rel} outside the trigger period {period}"));
                }
                let has_lc = (0..self.ts.len()).any(|i| !self.ts.task(i).criticality.is_hc());
                let expected = if has_lc { self.delta + (period - s_rel) } else { self.delta };
                if delta != expected {
                    self.push(t, "debt", format!("debt {delta} after the switch, expected {expected}"));
                }
                if policy != PolicyKind::CritThenModeThenPriority {
                    self.push(t, "policy-payload", format!("critical mode with policy {policy}"));
                }
                self.mode = SystemMode::Critical;
                self.window_end = Some(t + (period - s_rel));
            }
            SystemMode::Normal => {
                if self.mode != SystemMode::Critical {
                    self.push(t, "mode-transition", "switch back while already normal".into());
                }
                if let Some(end) = self.window_end.take() {
                    if t != end {
                        self.push(t, "window-duration", format!("window closed at {t}, expected {end}"));
                    }
                }
                if delta != self.delta {
                    self.push(t, "debt", format!("debt changed to {delta} at switch-back"));
                }
                if policy == PolicyKind::CritThenModeThenPriority {
                    self.push(t, "policy-payload", "normal mode with the critical arbitration order".into());
                }
                self.mode = SystemMode::Normal;
            }
        }
        self.delta = delta;
        self.policy = policy;
    }

    fn on_stretch(&mut self, t: Tick, task: usize, job: u64, amount: Tick, new_deadline: Tick, total: Tick) {
        if self.alg != Algorithm::Multimode {
            self.push(t, "event-vocabulary", "stretch outside multimode".into());
            return;
        }
        if self.mode != SystemMode::Critical {
            self.push(t, "mode-transition", "stretch outside a critical window".into());
        }
        if self.ts.task(task).criticality.is_hc() {
            self.push(t, "mode-transition", format!("stretch of HC task {task}"));
        }
        let Some(v) = self.jobs[task].clone() else {
            self.push(t, "mode-transition", format!("stretch of task {task} with no job"));
            return;
        };
        if v.job != job || !v.live {
            self.push(t, "mode-transition", format!("stretch of task {task} job {job} which is not live"));
            return;
        }
        // Missed jobs extend their deadlines silently, so only unmissed jobs
        // can be checked exactly.
        if !v.missed && new_deadline != v.deadline + amount {
            self.push(t, "mode-transition", format!("stretched deadline {new_deadline} != {} + {amount}", v.deadline));
        }
        let accumulated = v.postponed + amount;
        if accumulated != total {
            self.push(t, "mode-transition", format!("task {task} job {job} postponement {total} != accumulated {accumulated}"));
        }
        if let Some(view) = &mut self.jobs[task] {
            view.deadline = new_deadline;
            view.postponed = accumulated;
        }
    }

    fn on_shrink(&mut self, t: Tick, amount: Tick, delta: Tick, until: Tick) {
        if self.alg != Algorithm::Multimode {
            self.push(t, "event-vocabulary", "shrink outside multimode".into());
            return;
        }
        if self.mode != SystemMode::Normal {
            self.push(t, "mode-transition", "shrink planned inside a critical window".into());
        }
        if amount == 0 || amount > self.delta || delta != self.delta - amount {
            self.push(t, "debt", format!("shrink of {amount} moved debt {} -> {delta}", self.delta));
        }
        if until <= t {
            self.push(t, "mode-transition", format!("shrink window ends at {until}, before {t}"));
        }
        self.delta = delta;
    }

    /// Dispatch conformance at the end of an instant: whoever is on the
    /// processor must be the policy-maximal ready job.
    fn instant_done(&mut self, t: Tick) {
        self.preempted_now.clear();
        let jobs: Vec<JobState> = self
            .jobs
            .iter()
            .enumerate()
            .filter_map(|(i, v)| v.as_ref().map(|v| (i, v)))
            .map(|(i, v)| JobState {
                task: i,
                job: v.job,
                status: if v.live { JobStatus::Ready } else { JobStatus::Done },
                omega: v.omega,
                lambda: 0,
                release: v.release,
                // A missed LC job stays dispatchable while its deadline
                // silently extends.
                abs_deadline: if v.missed { Tick::MAX } else { v.deadline },
                budget: 1,
            })
            .collect();
        let best = pick(self.policy, self.ts, &jobs, t).map(|i| jobs[i].task);
        let actual = self.running.map(|(task, _, _)| task);
        match (actual, best) {
            (None, Some(b)) => self.push(t, "work-conservation", format!("idle while task {b} is ready")),
            (Some(a), None) => self.push(t, "conformance", format!("task {a} runs with no ready job")),
            (Some(a), Some(b)) if a != b => {
                self.push(t, "conformance", format!("task {a} runs but {b} wins under {}", self.policy))
            }
            _ => {}
        }
    }

    /// Interval-level work conservation over the whole trace.
    fn finish(&mut self, end: Tick) {
        self.close_segment(end);
        let live_spans: Vec<(Tick, Tick)> = self
            .jobs
            .iter()
            .flatten()
            .filter(|v| v.live)
            .map(|v| (v.release, end))
            .collect();
        self.ready_spans.extend(live_spans);
        // Gaps in the busy timeline.
        let mut gaps = Vec::new();
        let mut cursor = 0;
        for &(a, b) in &self.busy {
            if a > cursor {
                gaps.push((cursor, a));
            }
            cursor = cursor.max(b);
        }
        if end > cursor {
            gaps.push((cursor, end));
        }
        let mut spans = std::mem::take(&mut self.ready_spans);
        spans.sort_unstable();
        let mut g = 0;
        for (s, e) in spans {
            if e <= s {
                continue;
            }
            while g < gaps.len() && gaps[g].1 <= s {
                g += 1;
            }
            if g < gaps.len() && gaps[g].0 < e && s < gaps[g].1 {
                self.push(
                    gaps[g].0.max(s),
                    "work-conservation",
                    format!(
                        "processor idle during [{}, {}) while a job released at {s} was ready",
                        gaps[g].0.max(s),
                        gaps[g].1.min(e)
                    ),
                );
                if self.out.len() >= MAX_VIOLATIONS {
                    return;
                }
            }
        }
    }
}

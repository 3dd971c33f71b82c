//! Run traces: the event log a simulation emits, with CSV and JSONL
//! round-trips and a Gantt view derived by replay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Criticality, TaskMode, Tick};
use crate::modes::SystemMode;
use crate::policy::PolicyKind;

/// Why a job was dropped from the LC workload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DiscardReason {
    /// Cumulative postponement exceeded the job's slack.
    Postponed,
    /// An in-flight job was dropped when a drop window opened.
    DropWindow,
    /// The job was released inside an open drop window.
    DropRelease,
}

impl std::fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DiscardReason::Postponed => write!(f, "postponed"),
            DiscardReason::DropWindow => write!(f, "drop-window"),
            DiscardReason::DropRelease => write!(f, "drop-release"),
        }
    }
}

/// One logged occurrence.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum EventKind {
    /// A job entered the ready queue.
    Release { task: usize, job: u64, deadline: Tick },
    /// The processor started (or resumed) executing a task.
    Dispatch { task: usize },
    /// `task` was evicted by `by`.
    Preempt { task: usize, by: usize },
    /// The running job consumed its full budget; `response` is completion
    /// time minus release.
    Complete { task: usize, response: Tick },
    /// A deadline expired on an unfinished job.
    DeadlineMiss { task: usize, crit: Criticality, lateness: Tick },
    /// A job was dropped from the workload accounting.
    Discard { task: usize, job: u64, reason: DiscardReason },
    /// A job moved between LO and HI confidence.
    TaskModeSwitch { task: usize, to: TaskMode },
    /// The run changed system mode; `trigger` is the endangered task on
    /// entry to critical mode.
    SystemModeSwitch {
        to: SystemMode,
        trigger: Option<usize>,
        s_rel: Tick,
        delta: Tick,
        policy: PolicyKind,
    },
    /// An LC job's deadline (and its task's next release) were postponed.
    StretchApplied {
        task: usize,
        job: u64,
        amount: Tick,
        new_deadline: Tick,
        total_postponed: Tick,
    },
    /// A debt repayment plan was adopted; `delta` is the debt left after it.
    ShrinkApplied { amount: Tick, delta: Tick, until: Tick },
    /// An HC task's budget tracking was reset at its period boundary.
    Refresh { task: usize },
    /// Overrun pressure was observed while already in critical mode.
    NestedPressure { task: usize },
    /// The processor went idle.
    Idle,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceEvent {
    pub t: Tick,
    pub kind: EventKind,
}

impl TraceEvent {
    pub fn new(t: Tick, kind: EventKind) -> Self {
        TraceEvent { t, kind }
    }
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error("trace line {line}: {msg}")]
    Csv { line: usize, msg: String },
    #[error("trace line {line}: {source}")]
    Json {
        line: usize,
        source: serde_json::Error,
    },
}

pub const CSV_HEADER: &str = "t,kind,task,detail1,detail2,detail3,detail4,detail5";

fn csv_cells(kind: &EventKind) -> (&'static str, Option<usize>, [String; 5]) {
    let empty = || [const { String::new() }; 5];
    match kind {
        EventKind::Release { task, job, deadline } => {
            let mut d = empty();
            d[0] = job.to_string();
            d[1] = deadline.to_string();
            ("release", Some(*task), d)
        }
        EventKind::Dispatch { task } => ("dispatch", Some(*task), empty()),
        EventKind::Preempt { task, by } => {
            let mut d = empty();
            d[0] = by.to_string();
            ("preempt", Some(*task), d)
        }
        EventKind::Complete { task, response } => {
            let mut d = empty();
            d[0] = response.to_string();
            ("complete", Some(*task), d)
        }
        EventKind::DeadlineMiss { task, crit, lateness } => {
            let mut d = empty();
            d[0] = crit.to_string();
            d[1] = lateness.to_string();
            ("deadline-miss", Some(*task), d)
        }
        EventKind::Discard { task, job, reason } => {
            let mut d = empty();
            d[0] = job.to_string();
            d[1] = reason.to_string();
            ("discard", Some(*task), d)
        }
        EventKind::TaskModeSwitch { task, to } => {
            let mut d = empty();
            d[0] = to.to_string();
            ("task-mode", Some(*task), d)
        }
        EventKind::SystemModeSwitch { to, trigger, s_rel, delta, policy } => {
            let mut d = empty();
            d[0] = to.to_string();
            d[1] = s_rel.to_string();
            d[2] = delta.to_string();
            d[3] = policy.to_string();
            ("system-mode", *trigger, d)
        }
        EventKind::StretchApplied { task, job, amount, new_deadline, total_postponed } => {
            let mut d = empty();
            d[0] = job.to_string();
            d[1] = amount.to_string();
            d[2] = new_deadline.to_string();
            d[3] = total_postponed.to_string();
            ("stretch", Some(*task), d)
        }
        EventKind::ShrinkApplied { amount, delta, until } => {
            let mut d = empty();
            d[0] = amount.to_string();
            d[1] = delta.to_string();
            d[2] = until.to_string();
            ("shrink", None, d)
        }
        EventKind::Refresh { task } => ("refresh", Some(*task), empty()),
        EventKind::NestedPressure { task } => ("nested-pressure", Some(*task), empty()),
        EventKind::Idle => ("idle", None, empty()),
    }
}

/// Renders a trace as CSV with a fixed header.
pub fn events_to_csv(events: &[TraceEvent]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for ev in events {
        let (name, task, details) = csv_cells(&ev.kind);
        let task_cell = task.map(|i| i.to_string()).unwrap_or_default();
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            ev.t, name, task_cell, details[0], details[1], details[2], details[3], details[4]
        ));
    }
    out
}

fn cell<T: std::str::FromStr>(cells: &[&str], idx: usize, line: usize, what: &str) -> Result<T, TraceError> {
    cells
        .get(idx)
        .filter(|s| !s.is_empty())
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| TraceError::Csv {
            line,
            msg: format!("missing or invalid {what} in column {}", idx + 1),
        })
}

fn parse_kind(cells: &[&str], line: usize) -> Result<EventKind, TraceError> {
    let name = cells[1];
    let bad = |msg: &str| TraceError::Csv { line, msg: msg.to_string() };
    Ok(match name {
        "release" => EventKind::Release {
            task: cell(cells, 2, line, "task")?,
            job: cell(cells, 3, line, "job")?,
            deadline: cell(cells, 4, line, "deadline")?,
        },
        "dispatch" => EventKind::Dispatch { task: cell(cells, 2, line, "task")? },
        "preempt" => EventKind::Preempt {
            task: cell(cells, 2, line, "task")?,
            by: cell(cells, 3, line, "preemptor")?,
        },
        "complete" => EventKind::Complete {
            task: cell(cells, 2, line, "task")?,
            response: cell(cells, 3, line, "response")?,
        },
        "deadline-miss" => EventKind::DeadlineMiss {
            task: cell(cells, 2, line, "task")?,
            crit: match cells.get(3).copied() {
                Some("HC") => Criticality::Hc,
                Some("LC") => Criticality::Lc,
                _ => return Err(bad("unknown criticality")),
            },
            lateness: cell(cells, 4, line, "lateness")?,
        },
        "discard" => EventKind::Discard {
            task: cell(cells, 2, line, "task")?,
            job: cell(cells, 3, line, "job")?,
            reason: match cells.get(4).copied() {
                Some("postponed") => DiscardReason::Postponed,
                Some("drop-window") => DiscardReason::DropWindow,
                Some("drop-release") => DiscardReason::DropRelease,
                _ => return Err(bad("unknown discard reason")),
            },
        },
        "task-mode" => EventKind::TaskModeSwitch {
            task: cell(cells, 2, line, "task")?,
            to: match cells.get(3).copied() {
                Some("LO") => TaskMode::Lo,
                Some("HI") => TaskMode::Hi,
                _ => return Err(bad("unknown task mode")),
            },
        },
        "system-mode" => EventKind::SystemModeSwitch {
            to: match cells.get(3).copied() {
                Some("Normal") => SystemMode::Normal,
                Some("Critical") => SystemMode::Critical,
                _ => return Err(bad("unknown system mode")),
            },
            trigger: match cells.get(2).copied() {
                Some("") | None => None,
                Some(s) => Some(s.parse().map_err(|_| bad("invalid trigger"))?),
            },
            s_rel: cell(cells, 4, line, "switch offset")?,
            delta: cell(cells, 5, line, "debt")?,
            policy: match cells.get(6).copied() {
                Some("priority") => PolicyKind::PriorityOnly,
                Some("mode-priority") => PolicyKind::ModeThenPriority,
                Some("crit-mode-priority") => PolicyKind::CritThenModeThenPriority,
                _ => return Err(bad("unknown policy")),
            },
        },
        "stretch" => EventKind::StretchApplied {
            task: cell(cells, 2, line, "task")?,
            job: cell(cells, 3, line, "job")?,
            amount: cell(cells, 4, line, "amount")?,
            new_deadline: cell(cells, 5, line, "deadline")?,
            total_postponed: cell(cells, 6, line, "total postponement")?,
        },
        "shrink" => EventKind::ShrinkApplied {
            amount: cell(cells, 3, line, "amount")?,
            delta: cell(cells, 4, line, "debt")?,
            until: cell(cells, 5, line, "window end")?,
        },
        "refresh" => EventKind::Refresh { task: cell(cells, 2, line, "task")? },
        "nested-pressure" => EventKind::NestedPressure { task: cell(cells, 2, line, "task")? },
        "idle" => EventKind::Idle,
        other => return Err(bad(&format!("unknown event kind `{other}`"))),
    })
}

/// Parses a trace previously rendered by [`events_to_csv`].
pub fn events_from_csv(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let lineno = i + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || (i == 0 && trimmed == CSV_HEADER) {
            continue;
        }
        let cells: Vec<&str> = trimmed.split(',').collect();
        if cells.len() < 2 {
            return Err(TraceError::Csv {
                line: lineno,
                msg: "expected at least a time and a kind".into(),
            });
        }
        let t = cells[0].parse().map_err(|_| TraceError::Csv {
            line: lineno,
            msg: format!("invalid time `{}`", cells[0]),
        })?;
        out.push(TraceEvent { t, kind: parse_kind(&cells, lineno)? });
    }
    Ok(out)
}

/// Renders a trace as one JSON object per line.
pub fn events_to_jsonl(events: &[TraceEvent]) -> String {
    let mut out = String::new();
    for ev in events {
        out.push_str(&serde_json::to_string(ev).expect("trace events serialize"));
        out.push('\n');
    }
    out
}

/// Parses a trace previously rendered by [`events_to_jsonl`].
pub fn events_from_jsonl(text: &str) -> Result<Vec<TraceEvent>, TraceError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| TraceError::Json { line: i + 1, source: e }))
        .collect()
}

/// Contiguous stretch of processor time given to one task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct GanttSegment {
    pub task: usize,
    pub start: Tick,
    pub end: Tick,
}

/// Replays dispatch, preemption, completion, and idle events into execution
/// segments. Adjacent segments of the same task are merged.
pub fn gantt(events: &[TraceEvent]) -> Vec<GanttSegment> {
    let mut out: Vec<GanttSegment> = Vec::new();
    let mut running: Option<(usize, Tick)> = None;
    let close = |running: &mut Option<(usize, Tick)>, t: Tick, out: &mut Vec<GanttSegment>| {
        if let Some((task, start)) = running.take() {
            if t > start {
                if let Some(last) = out.last_mut() {
                    if last.task == task && last.end == start {
                        last.end = t;
                        return;
                    }
                }
                out.push(GanttSegment { task, start, end: t });
            }
        }
    };
    for ev in events {
        match &ev.kind {
            EventKind::Dispatch { task } => {
                close(&mut running, ev.t, &mut out);
                running = Some((*task, ev.t));
            }
            EventKind::Complete { .. } | EventKind::Idle => {
                close(&mut running, ev.t, &mut out);
            }
            EventKind::Preempt { .. } => {
                // The matching dispatch of the preemptor closes the segment.
            }
            _ => {}
        }
    }
    if let Some((task, start)) = running {
        let end = events.last().map(|e| e.t).unwrap_or(start);
        if end > start {
            out.push(GanttSegment { task, start, end });
        }
    }
    out
}

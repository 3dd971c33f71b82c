//! Task model: dual-criticality periodic tasks, taskset validation, job state,
//! and the on-disk taskset text format.
//!
//! Model summary:
//! - Time is measured in integer ticks. A taskset carries a `time_scale`
//!   factor; all durations in a taskset file are given in model units and are
//!   converted to ticks exactly (`ticks = value * time_scale`, which must be
//!   integral). This keeps fractional budgets such as `8.9` exact without
//!   floating point.
//! - Every task has a period `T`, a low-confidence budget `C^l`, a
//!   high-confidence budget `C^h`, a criticality level (LC or HC), and a
//!   distinct fixed priority (smaller number = higher priority).
//! - LC tasks have a single budget (`C^h = C^l`). HC tasks have `C^l <= C^h`.
//! - Deadlines are implicit: each job's deadline is the end of its period.

use std::collections::BTreeSet;
use std::fmt;

use num_integer::Integer;
use num_rational::Ratio;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Discrete simulation time in ticks.
pub type Tick = u64;

/// Exact rational over ticks, used for utilization and shrink sizing.
pub type Ratio64 = Ratio<u64>;

/// Criticality level of a task. `Hc` tasks must never miss a deadline; `Lc`
/// tasks tolerate service degradation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Criticality {
    Lc,
    Hc,
}

impl Criticality {
    pub fn is_hc(self) -> bool {
        matches!(self, Criticality::Hc)
    }
}

impl fmt::Display for Criticality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Criticality::Lc => write!(f, "LC"),
            Criticality::Hc => write!(f, "HC"),
        }
    }
}

/// Per-job execution mode. A job starts in `Lo` and switches to `Hi` the
/// moment it exhausts its low-confidence budget without completing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TaskMode {
    Lo,
    Hi,
}

impl fmt::Display for TaskMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TaskMode::Lo => write!(f, "LO"),
            TaskMode::Hi => write!(f, "HI"),
        }
    }
}

/// Lifecycle of the current job of a task.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum JobStatus {
    Ready,
    Running,
    Done,
}

/// One periodic task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Task {
    /// Unique identifier, used in files, traces, and metrics.
    pub id: String,
    /// Period (and implicit relative deadline) in ticks.
    pub period: Tick,
    /// Low-confidence budget in ticks.
    pub wcet_lo: Tick,
    /// High-confidence budget in ticks. Equal to `wcet_lo` for LC tasks.
    pub wcet_hi: Tick,
    pub criticality: Criticality,
    /// Fixed priority; smaller values take precedence. Distinct per taskset.
    pub priority: u32,
}

impl Task {
    /// Nominal slack of one job: time left in a period after the low budget.
    pub fn slack(&self) -> Tick {
        self.period - self.wcet_lo
    }

    /// Budget associated with a per-job mode.
    pub fn budget_for(&self, mode: TaskMode) -> Tick {
        match mode {
            TaskMode::Lo => self.wcet_lo,
            TaskMode::Hi => self.wcet_hi,
        }
    }
}

/// Budget selector for [`utilization`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UtilMode {
    Lo,
    Hi,
}

/// Exact utilization `C / (T - shrink)` of a task under the given budget,
/// where `shrink` shortens the period (used while paying back postponements).
///
/// Errors if the shrunk period cannot contain the budget.
pub fn utilization(task: &Task, mode: UtilMode, shrink: Tick) -> Result<Ratio64, ModelError> {
    let c = match mode {
        UtilMode::Lo => task.wcet_lo,
        UtilMode::Hi => task.wcet_hi,
    };
    if shrink >= task.period || task.period - shrink < c {
        return Err(ModelError::InfeasibleShrink {
            task: task.id.clone(),
            shrink,
        });
    }
    Ok(Ratio::new(c, task.period - shrink))
}

/// A validated set of tasks plus the tick scale used when it was loaded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskSet {
    tasks: Vec<Task>,
    time_scale: Tick,
}

impl TaskSet {
    /// Validates and wraps a list of tasks. `time_scale` records how many
    /// ticks one model-time unit spans (only used for reporting and files).
    pub fn new(tasks: Vec<Task>, time_scale: Tick) -> Result<Self, ModelError> {
        if time_scale == 0 {
            return Err(ModelError::ZeroTimeScale);
        }
        if tasks.is_empty() {
            return Err(ModelError::EmptyTaskSet);
        }
        let mut ids = BTreeSet::new();
        let mut priorities = BTreeSet::new();
        for t in &tasks {
            if !ids.insert(t.id.clone()) {
                return Err(ModelError::DuplicateId { id: t.id.clone() });
            }
            if !priorities.insert(t.priority) {
                return Err(ModelError::DuplicatePriority {
                    priority: t.priority,
                });
            }
            if t.period == 0 {
                return Err(ModelError::ZeroPeriod { task: t.id.clone() });
            }
            if t.wcet_lo == 0 {
                return Err(ModelError::ZeroBudget { task: t.id.clone() });
            }
            if t.wcet_lo > t.wcet_hi {
                return Err(ModelError::BudgetOrder { task: t.id.clone() });
            }
            if t.wcet_hi > t.period {
                return Err(ModelError::BudgetExceedsPeriod { task: t.id.clone() });
            }
            if t.criticality == Criticality::Lc && t.wcet_lo != t.wcet_hi {
                return Err(ModelError::LcDualBudget { task: t.id.clone() });
            }
        }
        if !tasks.iter().any(|t| t.criticality.is_hc()) {
            return Err(ModelError::NoHcTask);
        }
        Ok(TaskSet { tasks, time_scale })
    }

    pub fn tasks(&self) -> &[Task] {
        &self.tasks
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn task(&self, idx: usize) -> &Task {
        &self.tasks[idx]
    }

    pub fn time_scale(&self) -> Tick {
        self.time_scale
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.tasks.iter().position(|t| t.id == id)
    }

    /// Least common multiple of all periods.
    pub fn hyperperiod(&self) -> Tick {
        self.tasks.iter().fold(1, |acc, t| acc.lcm(&t.period))
    }

    /// Sum of per-task utilizations under the given budget selector.
    pub fn total_utilization(&self, mode: UtilMode) -> Ratio64 {
        self.tasks
            .iter()
            .map(|t| utilization(t, mode, 0).expect("validated task fits its period"))
            .fold(Ratio::from_integer(0), |a, b| a + b)
    }
}

/// Runtime state of the current job of one task.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JobState {
    /// Index of the owning task within its taskset.
    pub task: usize,
    /// 1-based release ordinal of this job.
    pub job: u64,
    pub status: JobStatus,
    /// Per-job mode; `Hi` only after an overrun of the low budget.
    pub omega: TaskMode,
    /// Budget consumed so far by this job, in ticks.
    pub lambda: Tick,
    /// Absolute release instant.
    pub release: Tick,
    /// Absolute deadline (period end, including any stretch).
    pub abs_deadline: Tick,
    /// Scenario-drawn total demand of this job.
    pub budget: Tick,
}

impl JobState {
    /// Fresh job of `task` released at `release` with the given period length.
    pub fn released(task_idx: usize, job: u64, release: Tick, period: Tick, budget: Tick) -> Self {
        JobState {
            task: task_idx,
            job,
            status: JobStatus::Ready,
            omega: TaskMode::Lo,
            lambda: 0,
            release,
            abs_deadline: release + period,
            budget,
        }
    }

    /// Remaining scenario demand of this job.
    pub fn remaining(&self) -> Tick {
        self.budget.saturating_sub(self.lambda)
    }
}

/// Errors raised by taskset construction, file parsing, and utilization.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("taskset contains no tasks")]
    EmptyTaskSet,
    #[error("taskset contains no HC task")]
    NoHcTask,
    #[error("time_scale must be positive")]
    ZeroTimeScale,
    #[error("duplicate task id `{id}`")]
    DuplicateId { id: String },
    #[error("priority {priority} assigned to more than one task")]
    DuplicatePriority { priority: u32 },
    #[error("task `{task}` has zero period")]
    ZeroPeriod { task: String },
    #[error("task `{task}` has zero low budget")]
    ZeroBudget { task: String },
    #[error("task `{task}` has wcet_lo > wcet_hi")]
    BudgetOrder { task: String },
    #[error("task `{task}` has a budget larger than its period")]
    BudgetExceedsPeriod { task: String },
    #[error("LC task `{task}` must have a single budget (wcet_hi = wcet_lo or `-`)")]
    LcDualBudget { task: String },
    #[error("infeasible shrink {shrink} for task `{task}`: budget no longer fits the period")]
    InfeasibleShrink { task: String, shrink: Tick },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

// ---------------------------------------------------------------------------
// Taskset text format
// ---------------------------------------------------------------------------
//
//   # comment and blank lines are ignored
//   time_scale 10
//   task <id> <period> <wcet_lo> <wcet_hi|-> <HC|LC> <priority>
//
// Durations are model-time literals: integers ("55"), terminating decimals
// ("8.9"), or exact rationals ("37/3"). Each literal multiplied by time_scale
// must be a whole number of ticks, otherwise loading fails. `-` for wcet_hi
// means "same as wcet_lo" and is mandatory spelling for LC tasks.

/// Parses a duration literal in model units into ticks at `scale`.
pub(crate) fn parse_scaled(lit: &str, scale: Tick, line: usize) -> Result<Tick, ModelError> {
    let err = |msg: String| ModelError::Parse { line, msg };
    let (num, den): (u128, u128) = if let Some((p, q)) = lit.split_once('/') {
        let p: u128 = p
            .parse()
            .map_err(|_| err(format!("bad rational literal `{lit}`")))?;
        let q: u128 = q
            .parse()
            .map_err(|_| err(format!("bad rational literal `{lit}`")))?;
        if q == 0 {
            return Err(err(format!("zero denominator in `{lit}`")));
        }
        (p, q)
    } else if let Some((int, frac)) = lit.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err(format!("bad decimal literal `{lit}`")));
        }
        let int: u128 = int
            .parse()
            .map_err(|_| err(format!("bad decimal literal `{lit}`")))?;
        let k = frac.len() as u32;
        if k > 12 {
            return Err(err(format!("too many fractional digits in `{lit}`")));
        }
        let frac: u128 = frac.parse().unwrap();
        let pow = 10u128.pow(k);
        (int * pow + frac, pow)
    } else {
        let v: u128 = lit
            .parse()
            .map_err(|_| err(format!("bad duration literal `{lit}`")))?;
        (v, 1)
    };
    let scaled = num * scale as u128;
    if scaled % den != 0 {
        return Err(err(format!(
            "duration `{lit}` is not a whole number of ticks at time_scale {scale}"
        )));
    }
    u64::try_from(scaled / den).map_err(|_| err(format!("duration `{lit}` overflows the tick range")))
}

/// Renders `ticks` back into the shortest exact model-unit literal.
fn format_scaled(ticks: Tick, scale: Tick) -> String {
    if ticks % scale == 0 {
        return (ticks / scale).to_string();
    }
    // Try a terminating decimal with up to 12 fractional digits.
    let mut num = (ticks % scale) as u128;
    let int = ticks / scale;
    let mut digits = String::new();
    for _ in 0..12 {
        num *= 10;
        digits.push(char::from(b'0' + (num / scale as u128) as u8));
        num %= scale as u128;
        if num == 0 {
            return format!("{int}.{digits}");
        }
    }
    // Non-terminating: fall back to an exact rational.
    let g = ticks.gcd(&scale);
    format!("{}/{}", ticks / g, scale / g)
}

impl TaskSet {
    /// Parses the taskset text format described in the module docs.
    pub fn parse(text: &str) -> Result<Self, ModelError> {
        let mut time_scale: Option<Tick> = None;
        let mut tasks = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            match fields[0] {
                "time_scale" => {
                    if fields.len() != 2 {
                        return Err(ModelError::Parse {
                            line: line_no,
                            msg: "expected `time_scale <n>`".into(),
                        });
                    }
                    let v: Tick = fields[1].parse().map_err(|_| ModelError::Parse {
                        line: line_no,
                        msg: format!("bad time_scale `{}`", fields[1]),
                    })?;
                    if v == 0 {
                        return Err(ModelError::ZeroTimeScale);
                    }
                    time_scale = Some(v);
                }
                "task" => {
                    let scale = time_scale.ok_or(ModelError::Parse {
                        line: line_no,
                        msg: "time_scale must appear before the first task".into(),
                    })?;
                    if fields.len() != 7 {
                        return Err(ModelError::Parse {
                            line: line_no,
                            msg: "expected `task <id> <period> <wcet_lo> <wcet_hi|-> <HC|LC> <priority>`"
                                .into(),
                        });
                    }
                    let id = fields[1].to_string();
                    let period = parse_scaled(fields[2], scale, line_no)?;
                    let wcet_lo = parse_scaled(fields[3], scale, line_no)?;
                    let criticality = match fields[5] {
                        "HC" => Criticality::Hc,
                        "LC" => Criticality::Lc,
                        other => {
                            return Err(ModelError::Parse {
                                line: line_no,
                                msg: format!("bad criticality `{other}` (expected HC or LC)"),
                            })
                        }
                    };
                    let wcet_hi = if fields[4] == "-" {
                        wcet_lo
                    } else {
                        parse_scaled(fields[4], scale, line_no)?
                    };
                    let priority: u32 = fields[6].parse().map_err(|_| ModelError::Parse {
                        line: line_no,
                        msg: format!("bad priority `{}`", fields[6]),
                    })?;
                    tasks.push(Task {
                        id,
                        period,
                        wcet_lo,
                        wcet_hi,
                        criticality,
                        priority,
                    });
                }
                other => {
                    return Err(ModelError::Parse {
                        line: line_no,
                        msg: format!("unknown directive `{other}`"),
                    })
                }
            }
        }
        let scale = time_scale.ok_or(ModelError::Parse {
            line: 0,
            msg: "missing time_scale header".into(),
        })?;
        TaskSet::new(tasks, scale)
    }

    /// Serializes back into the text format; `parse(to_text(ts)) == ts`.
    pub fn to_text(&self) -> String {
        let mut out = format!("time_scale {}\n", self.time_scale);
        for t in &self.tasks {
            let hi = if t.criticality == Criticality::Lc {
                "-".to_string()
            } else {
                format_scaled(t.wcet_hi, self.time_scale)
            };
            out.push_str(&format!(
                "task {} {} {} {} {} {}\n",
                t.id,
                format_scaled(t.period, self.time_scale),
                format_scaled(t.wcet_lo, self.time_scale),
                hi,
                t.criticality,
                t.priority,
            ));
        }
        out
    }
}

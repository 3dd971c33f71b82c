//! Uniprocessor scheduling simulator and analysis toolkit for dual-criticality
//! periodic tasksets.
//!
//! The library models tasksets in which every task carries a low- and a
//! high-confidence execution budget. Jobs that exhaust the low budget without
//! completing switch to a per-job HI mode; when the aggregate demand threatens
//! the deadline of a high-criticality task, the system enters a critical mode
//! that postpones (stretches) low-criticality periods and later pays the
//! accumulated postponement back by shrinking upcoming periods.
//!
//! Module map:
//! - [`model`]: tasks, tasksets, job state, file format, validation.
//! - [`policy`]: the three ready-queue arbitration orders.
//! - [`workload`]: demand bounds, shrink sizing, schedulability tests.
//! - [`modes`]: the system mode/pattern state machine and shrink planning.
//! - [`sim`]: the discrete-event engine and the four scheduling algorithms.
//! - [`trace`]: event records plus CSV / JSONL / Gantt export.
//! - [`metrics`]: per-run summary statistics.
//! - [`gen`]: random taskset and scenario generation for stress suites.
//! - [`validate`]: post-hoc trace invariant checking.
//! - [`casestudy`]: multi-seed comparison harness across algorithms.

pub mod casestudy;
pub mod gen;
pub mod metrics;
pub mod model;
pub mod modes;
pub mod policy;
pub mod sim;
pub mod trace;
pub mod validate;
pub mod workload;

pub use model::{Criticality, JobState, JobStatus, Task, TaskMode, TaskSet, Tick};
pub use policy::PolicyKind;
pub use sim::{Algorithm, DefaultBudget, RunConfig, Scenario};

//! Bundled tasksets and random generators for tests and stress runs.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::model::{JobStatus, TaskMode, TaskSet, Tick};
use crate::workload::Snapshot;

/// Four synchronous tasks with a 20-tick common period: two HC producers
/// that together with the LC pair leave exactly one idle tick per period,
/// so a single overrun is enough to endanger the lower-priority HC task.
pub fn quartet_taskset() -> TaskSet {
    TaskSet::parse(
        "time_scale 1\n\
         task pi1 20 5 7 HC 2\n\
         task pi2 20 5 6 HC 4\n\
         task pi3 20 5 - LC 1\n\
         task pi4 20 4 - LC 3\n",
    )
    .expect("bundled quartet taskset is valid")
}

/// Fifteen-task avionics-style workload (eight HC, seven LC) with total
/// low-confidence utilization near 0.95. Times are in tenths of the model's
/// unit, so every fractional budget lands on an integer tick.
pub fn avionics_taskset() -> TaskSet {
    TaskSet::parse(
        "time_scale 10\n\
         task pi1 55 8 8.9 HC 6\n\
         task pi2 80 6 6.3 HC 9\n\
         task pi3 40 4 4.2 HC 3\n\
         task pi4 40 2 2 HC 4\n\
         task pi5 200 1 1 HC 12\n\
         task pi6 100 7 7.5 HC 10\n\
         task pi7 400 6.5 - LC 14\n\
         task pi8 10 1 1.2 HC 1\n\
         task pi9 52 6 - LC 7\n\
         task pi10 52 8 - LC 8\n\
         task pi11 40 2 2.2 HC 2\n\
         task pi12 40 1 - LC 5\n\
         task pi13 100 3 - LC 11\n\
         task pi14 200 2 - LC 13\n\
         task pi15 1000 5 - LC 15\n",
    )
    .expect("bundled avionics taskset is valid")
}

/// Three tasks sized so a 72-tick debt amortized over the HC task's 150-tick
/// remaining window yields integral per-period shrinks (36 and 24 ticks) and
/// the shrunk periods tile the window exactly. Scale 6 keeps the rational
/// period 37/3 on the tick grid.
pub fn shrink_demo_taskset() -> TaskSet {
    TaskSet::parse(
        "time_scale 6\n\
         task lc2 18.5 5 - LC 1\n\
         task lc3 37/3 3 - LC 2\n\
         task hc 30 5 6 HC 9\n",
    )
    .expect("bundled shrink-demo taskset is valid")
}

/// Random taskset with up to `max_tasks` tasks, periods in `[2, max_period]`
/// and unconstrained budgets (overloaded sets are deliberately possible).
/// Task 0 is always HC so the set passes validation.
pub fn random_taskset(rng: &mut impl Rng, max_tasks: usize, max_period: Tick) -> TaskSet {
    let n = rng.gen_range(1..=max_tasks.max(1));
    let mut prios: Vec<u32> = (1..=n as u32).collect();
    prios.shuffle(rng);
    let mut text = String::from("time_scale 1\n");
    for (i, prio) in prios.iter().enumerate() {
        let period = rng.gen_range(2..=max_period);
        let c_lo = rng.gen_range(1..=period);
        let is_hc = i == 0 || rng.gen_bool(0.5);
        if is_hc {
            let c_hi = rng.gen_range(c_lo..=period);
            text.push_str(&format!("task t{i} {period} {c_lo} {c_hi} HC {prio}\n"));
        } else {
            text.push_str(&format!("task t{i} {period} {c_lo} - LC {prio}\n"));
        }
    }
    TaskSet::parse(&text).expect("generated taskset is valid")
}

/// Random taskset whose budgets are capped so total utilization stays well
/// below one: suitable for long simulation runs that should mostly meet
/// deadlines while still experiencing overruns.
pub fn random_runnable_taskset(rng: &mut impl Rng, max_tasks: usize, max_period: Tick) -> TaskSet {
    let n = rng.gen_range(2..=max_tasks.max(2));
    let mut prios: Vec<u32> = (1..=n as u32).collect();
    prios.shuffle(rng);
    let mut text = String::from("time_scale 1\n");
    for (i, prio) in prios.iter().enumerate() {
        let period = rng.gen_range((2 * n as Tick).max(4)..=max_period.max(2 * n as Tick + 2));
        let cap = (period / (2 * n as Tick)).max(1);
        let c_lo = rng.gen_range(1..=cap);
        let is_hc = i == 0 || rng.gen_bool(0.5);
        if is_hc {
            let c_hi = rng.gen_range(c_lo..=(2 * c_lo).min(period));
            text.push_str(&format!("task t{i} {period} {c_lo} {c_hi} HC {prio}\n"));
        } else {
            text.push_str(&format!("task t{i} {period} {c_lo} - LC {prio}\n"));
        }
    }
    TaskSet::parse(&text).expect("generated taskset is valid")
}

/// Random but internally consistent snapshot of `ts`: a grid-aligned instant,
/// random consumed budgets below each job's active budget, and random modes
/// for HC tasks.
pub fn random_snapshot(rng: &mut impl Rng, ts: &TaskSet) -> Snapshot {
    let t = rng.gen_range(0..=200u64);
    let mut snap = Snapshot::fresh(ts);
    snap.t = t;
    snap.delta = rng.gen_range(0..40);
    for (i, row) in snap.rows.iter_mut().enumerate() {
        let task = ts.task(i);
        let release = t - t % task.period;
        row.release = release;
        row.abs_deadline = release + task.period;
        row.next_release = release + task.period;
        row.omega = if task.criticality.is_hc() && rng.gen_bool(0.3) {
            TaskMode::Hi
        } else {
            TaskMode::Lo
        };
        row.lambda = rng.gen_range(0..=task.budget_for(row.omega));
        row.status = if row.lambda == task.budget_for(row.omega) && rng.gen_bool(0.7) {
            JobStatus::Done
        } else if rng.gen_bool(0.2) {
            JobStatus::Done
        } else {
            JobStatus::Ready
        };
    }
    snap
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Criticality, UtilMode};
    use num_rational::Ratio;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn quartet_matches_expected_shape() {
        let ts = quartet_taskset();
        assert_eq!(ts.len(), 4);
        assert_eq!(ts.hyperperiod(), 20);
        let pi1 = ts.task(ts.index_of("pi1").unwrap());
        assert_eq!((pi1.period, pi1.wcet_lo, pi1.wcet_hi), (20, 5, 7));
        assert_eq!(pi1.criticality, Criticality::Hc);
    }

    #[test]
    fn avionics_set_has_fifteen_tasks_and_high_utilization() {
        let ts = avionics_taskset();
        assert_eq!(ts.len(), 15);
        assert_eq!(ts.time_scale(), 10);
        assert_eq!(
            ts.tasks().iter().filter(|t| t.criticality.is_hc()).count(),
            8
        );
        let u = ts.total_utilization(UtilMode::Lo);
        assert!(u > Ratio::new(9, 10) && u < Ratio::from_integer(1), "u = {u}");
        assert_eq!(ts.hyperperiod(), 2_860_000);
    }

    #[test]
    fn shrink_demo_periods_land_on_the_tick_grid() {
        let ts = shrink_demo_taskset();
        assert_eq!(ts.task(ts.index_of("lc2").unwrap()).period, 111);
        assert_eq!(ts.task(ts.index_of("lc3").unwrap()).period, 74);
        assert_eq!(ts.task(ts.index_of("hc").unwrap()).period, 180);
    }

    #[test]
    fn random_tasksets_are_valid_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..200 {
            let ts = random_taskset(&mut rng, 4, 30);
            assert!(ts.len() <= 4);
            assert!(ts.tasks().iter().all(|t| t.period <= 30));
            assert!(ts.tasks().iter().any(|t| t.criticality.is_hc()));
        }
    }

    #[test]
    fn random_snapshots_respect_budget_caps() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let ts = random_taskset(&mut rng, 4, 30);
            let snap = random_snapshot(&mut rng, &ts);
            for (i, row) in snap.rows.iter().enumerate() {
                assert!(row.lambda <= ts.task(i).budget_for(row.omega));
                assert!(row.release <= snap.t && snap.t < row.abs_deadline);
            }
        }
    }
}

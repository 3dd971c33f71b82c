//! `mcsim`: command-line front end for the dual-criticality scheduling
//! simulator — run traces, schedulability analyses, the multi-seed case
//! study, and fixture export.
//!
//! Exit codes: 0 success; 2 input error; 3 a high-criticality deadline miss
//! was detected; 4 the post-run trace validator found a broken invariant.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Deserialize;

use mcsched::casestudy::{run_case_study, StudyConfig, StudyRow};
use mcsched::sim::{run, RunConfig, Scenario};
use mcsched::trace::{events_to_csv, events_to_jsonl};
use mcsched::validate::validate;
use mcsched::workload::{demand_curve, schedulable, Snapshot, Theorem};
use mcsched::{Algorithm, TaskSet};

const EXIT_OK: u8 = 0;
const EXIT_INPUT: u8 = 2;
const EXIT_HC_MISS: u8 = 3;
const EXIT_INVARIANT: u8 = 4;

/// Bundled fixtures, addressable by name wherever a path is accepted.
const FIXTURES: &[(&str, &str)] = &[
    ("quartet.tasks", include_str!("../../../fixtures/quartet.tasks")),
    ("avionics.tasks", include_str!("../../../fixtures/avionics.tasks")),
    ("overrun.script", include_str!("../../../fixtures/overrun.script")),
    ("shrinkdemo.tasks", include_str!("../../../fixtures/shrinkdemo.tasks")),
];

fn bundled(name: &str) -> Option<&'static str> {
    FIXTURES
        .iter()
        .find(|(file, _)| *file == name || file.trim_end_matches(".tasks").trim_end_matches(".script") == name)
        .map(|(_, text)| *text)
}

#[derive(Parser)]
#[command(
    name = "mcsim",
    version,
    about = "Dual-criticality scheduling simulator and analyzer"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Simulate a taskset and write the trace and metrics.
    Simulate(SimulateArgs),
    /// Run a schedulability test on a taskset snapshot.
    Analyze(AnalyzeArgs),
    /// Compare algorithms over a seed grid and tabulate the outcomes.
    Casestudy(CasestudyArgs),
    /// Write the bundled fixture files to a directory.
    Export(ExportArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Deserialize)]
#[serde(rename_all = "lowercase")]
enum TraceFormat {
    Csv,
    Jsonl,
}

#[derive(Args, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SimulateArgs {
    /// JSON file holding any of the other flags; explicit flags win.
    #[arg(long)]
    #[serde(skip)]
    config: Option<PathBuf>,
    /// Taskset file path, or a bundled name (quartet, avionics, shrinkdemo).
    #[arg(long)]
    taskset: Option<String>,
    /// Algorithm: fp-classic (alias fp), task-level, system-drop, multimode.
    #[arg(long)]
    algo: Option<String>,
    /// Demand script path or the bundled name overrun.
    #[arg(long)]
    script: Option<String>,
    /// Per-job overrun probability (stochastic demands; needs --seed).
    #[arg(long)]
    overrun_p: Option<f64>,
    /// Seed for stochastic demands.
    #[arg(long)]
    seed: Option<u64>,
    /// Run length in ticks; defaults to four hyperperiods.
    #[arg(long)]
    horizon: Option<u64>,
    /// Trace format for --out.
    #[arg(long, value_enum)]
    format: Option<TraceFormat>,
    /// Write the event trace to this file.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write the full metrics JSON to this file.
    #[arg(long)]
    metrics_out: Option<PathBuf>,
    /// Re-check the produced trace against the run invariants.
    #[arg(long)]
    check: bool,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// Taskset file path, or a bundled name (quartet, avionics, shrinkdemo).
    #[arg(long)]
    taskset: String,
    /// Which schedulability test to run.
    #[arg(long, value_enum, default_value_t = TheoremArg::Normal)]
    test: TheoremArg,
    /// JSON snapshot of the system state; defaults to the fresh state at t=0.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Write the demand curve as CSV to this file.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum TheoremArg {
    Normal,
    AllHi,
    Shrinking,
    Critical,
}

impl From<TheoremArg> for Theorem {
    fn from(v: TheoremArg) -> Theorem {
        match v {
            TheoremArg::Normal => Theorem::Normal,
            TheoremArg::AllHi => Theorem::AllHi,
            TheoremArg::Shrinking => Theorem::Shrinking,
            TheoremArg::Critical => Theorem::Critical,
        }
    }
}

#[derive(Args, Debug)]
struct CasestudyArgs {
    /// Taskset file path, or a bundled name.
    #[arg(long, default_value = "avionics")]
    taskset: String,
    /// Number of seeds (seed values seed_start..seed_start+seeds).
    #[arg(long, default_value_t = 20)]
    seeds: u64,
    #[arg(long, default_value_t = 1)]
    seed_start: u64,
    /// Comma-separated overrun probabilities to sweep.
    #[arg(long, value_delimiter = ',', default_value = "0.01")]
    overrun_p: Vec<f64>,
    /// Run length in ticks; defaults to one hyperperiod.
    #[arg(long)]
    horizon: Option<u64>,
    /// Comma-separated algorithms; defaults to all four.
    #[arg(long, value_delimiter = ',')]
    algos: Option<Vec<String>>,
    /// Write the per-run CSV to this file instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also print a per-algorithm Markdown summary.
    #[arg(long)]
    markdown: bool,
}

#[derive(Args, Debug)]
struct ExportArgs {
    /// Directory to write the bundled fixtures into (created if missing).
    #[arg(long)]
    dir: PathBuf,
    /// Overwrite files that already exist.
    #[arg(long)]
    force: bool,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Simulate(a) => cmd_simulate(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Casestudy(a) => cmd_casestudy(a),
        Cmd::Export(a) => cmd_export(a),
    };
    match outcome {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_INPUT)
        }
    }
}

fn load_taskset(source: &str) -> Result<TaskSet> {
    let text = match bundled(source) {
        Some(text) => text.to_string(),
        None => fs::read_to_string(source).with_context(|| format!("reading taskset `{source}`"))?,
    };
    TaskSet::parse(&text).map_err(|e| anyhow!("taskset `{source}`: {e}"))
}

fn load_script(source: &str, ts: &TaskSet) -> Result<Scenario> {
    let text = match bundled(source) {
        Some(text) => text.to_string(),
        None => fs::read_to_string(source).with_context(|| format!("reading script `{source}`"))?,
    };
    Scenario::parse_script(&text, ts).map_err(|e| anyhow!("script `{source}`: {e}"))
}

fn parse_algo(name: &str) -> Result<Algorithm> {
    let canonical = match name {
        "fp" => "fp-classic",
        "tl" => "task-level",
        "sld" => "system-drop",
        "mm" => "multimode",
        other => other,
    };
    canonical.parse().map_err(|e: String| anyhow!(e))
}

fn merge_config(a: &mut SimulateArgs) -> Result<()> {
    let Some(path) = a.config.take() else {
        return Ok(());
    };
    let text = fs::read_to_string(&path)
        .with_context(|| format!("reading config `{}`", path.display()))?;
    let file: SimulateArgs = serde_json::from_str(&text)
        .with_context(|| format!("parsing config `{}`", path.display()))?;
    a.taskset = a.taskset.take().or(file.taskset);
    a.algo = a.algo.take().or(file.algo);
    a.script = a.script.take().or(file.script);
    a.overrun_p = a.overrun_p.or(file.overrun_p);
    a.seed = a.seed.or(file.seed);
    a.horizon = a.horizon.or(file.horizon);
    a.format = a.format.or(file.format);
    a.out = a.out.take().or(file.out);
    a.metrics_out = a.metrics_out.take().or(file.metrics_out);
    a.check |= file.check;
    Ok(())
}

fn cmd_simulate(mut a: SimulateArgs) -> Result<u8> {
    merge_config(&mut a)?;
    let taskset = a.taskset.as_deref().ok_or_else(|| anyhow!("--taskset is required"))?;
    let ts = load_taskset(taskset)?;
    let algorithm = parse_algo(a.algo.as_deref().ok_or_else(|| anyhow!("--algo is required"))?)?;
    let scenario = match (&a.script, a.overrun_p, a.seed) {
        (Some(_), Some(_), _) | (Some(_), _, Some(_)) => {
            bail!("give either --script or --overrun-p/--seed, not both")
        }
        (Some(script), None, None) => load_script(script, &ts)?,
        (None, Some(p), Some(seed)) => Scenario::stochastic(seed, p)?,
        (None, Some(_), None) | (None, None, Some(_)) => {
            bail!("stochastic demands need both --overrun-p and --seed")
        }
        (None, None, None) => bail!("give a demand source: --script or --overrun-p/--seed"),
    };
    let horizon = a.horizon.unwrap_or_else(|| 4 * ts.hyperperiod());
    if horizon == 0 {
        bail!("--horizon must be positive");
    }

    let res = run(&ts, &RunConfig { algorithm, horizon, scenario })?;

    if let Some(path) = &a.out {
        let body = match a.format.unwrap_or(TraceFormat::Csv) {
            TraceFormat::Csv => events_to_csv(&res.events),
            TraceFormat::Jsonl => events_to_jsonl(&res.events),
        };
        fs::write(path, body).with_context(|| format!("writing trace `{}`", path.display()))?;
    }
    if let Some(path) = &a.metrics_out {
        let body = serde_json::to_string_pretty(&res.metrics)?;
        fs::write(path, body).with_context(|| format!("writing metrics `{}`", path.display()))?;
    }

    let m = &res.metrics;
    println!("algorithm: {algorithm}");
    println!("horizon: {horizon}");
    println!("hc_misses: {}", m.hc_misses);
    println!("lc_misses: {}", m.lc_misses);
    println!("task_mode_switches: {}", m.task_switches);
    println!("system_mode_switches: {}", m.system_switches);
    println!("shrink_plans: {}", m.shrink_plans);
    println!("final_delta: {}", m.final_delta);
    println!("busy_ticks: {}", m.busy_ticks);
    for (&i, tm) in &m.per_task {
        println!(
            "task {}: released {} completed {} misses {} discarded {} max_response {} max_lateness {}",
            ts.task(i).id,
            tm.released,
            tm.completed,
            tm.misses,
            tm.discarded,
            tm.max_response,
            tm.max_lateness
        );
    }

    let mut code = EXIT_OK;
    if m.hc_misses > 0 {
        code = EXIT_HC_MISS;
    }
    if a.check {
        let violations = validate(&ts, algorithm, &res.events);
        if !violations.is_empty() {
            for v in &violations {
                eprintln!("violation: {v}");
            }
            code = EXIT_INVARIANT;
        }
    }
    Ok(code)
}

fn cmd_analyze(a: AnalyzeArgs) -> Result<u8> {
    let ts = load_taskset(&a.taskset)?;
    let snap = match &a.snapshot {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading snapshot `{}`", path.display()))?;
            let snap: Snapshot = serde_json::from_str(&text)
                .with_context(|| format!("parsing snapshot `{}`", path.display()))?;
            if snap.rows.len() != ts.len() {
                bail!(
                    "snapshot has {} rows but the taskset has {} tasks",
                    snap.rows.len(),
                    ts.len()
                );
            }
            snap
        }
        None => Snapshot::fresh(&ts),
    };
    let theorem: Theorem = a.test.into();
    let verdict = schedulable(theorem, &ts, &snap).map_err(|e| anyhow!(e))?;
    println!("test: {theorem}");
    println!("pivot: {}", ts.task(verdict.pivot).id);
    println!("demand: {}", verdict.demand);
    println!("supply: {}", verdict.supply);
    if verdict.schedulable {
        println!("verdict: schedulable");
    } else {
        println!(
            "verdict: unschedulable witness_z={}",
            verdict.witness_z.expect("unschedulable verdicts carry a witness")
        );
    }
    if let Some(path) = &a.curve {
        let rows = demand_curve(theorem, &ts, &snap).map_err(|e| anyhow!(e))?;
        let mut csv = String::from("pivot,t,z,demand,supply,schedulable\n");
        for r in rows {
            csv.push_str(&format!(
                "{},{},{},{},{},{}\n",
                ts.task(r.pivot).id,
                r.t,
                r.z,
                r.demand,
                r.supply,
                r.schedulable
            ));
        }
        fs::write(path, csv).with_context(|| format!("writing curve `{}`", path.display()))?;
    }
    Ok(EXIT_OK)
}

fn study_csv(rows: &[(f64, StudyRow)]) -> String {
    let mut out = String::from(
        "p,seed,algorithm,hc_misses,lc_misses,lc_released,lc_discarded,discard_rate,system_switches,task_switches,dem_evals\n",
    );
    for (p, r) in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{:.6},{},{},{}\n",
            p,
            r.seed,
            r.algorithm,
            r.hc_misses,
            r.lc_misses,
            r.lc_released,
            r.lc_discarded,
            r.discard_rate,
            r.system_switches,
            r.task_switches,
            r.dem_evals
        ));
    }
    out
}

fn cmd_casestudy(a: CasestudyArgs) -> Result<u8> {
    let ts = load_taskset(&a.taskset)?;
    if a.seeds == 0 {
        bail!("--seeds must be positive");
    }
    let algorithms = match &a.algos {
        Some(names) => names.iter().map(|n| parse_algo(n)).collect::<Result<Vec<_>>>()?,
        None => vec![
            Algorithm::FpClassic,
            Algorithm::TaskLevelOnly,
            Algorithm::SystemLevelDrop,
            Algorithm::Multimode,
        ],
    };
    let horizon = a.horizon.unwrap_or_else(|| ts.hyperperiod());
    if horizon == 0 {
        bail!("--horizon must be positive");
    }
    for &p in &a.overrun_p {
        if !(0.0..=1.0).contains(&p) {
            bail!("overrun probability {p} is not within [0, 1]");
        }
    }

    let seeds: Vec<u64> = (a.seed_start..a.seed_start + a.seeds).collect();
    let mut all_rows: Vec<(f64, StudyRow)> = Vec::new();
    for &p in &a.overrun_p {
        // One config per seed so runs fan out across cores; collect preserves
        // seed order, keeping the output deterministic.
        let per_seed: Vec<_> = seeds
            .par_iter()
            .map(|&seed| {
                run_case_study(
                    &ts,
                    &StudyConfig {
                        algorithms: algorithms.clone(),
                        seeds: vec![seed],
                        horizon,
                        overrun_p: p,
                    },
                )
            })
            .collect::<Result<Vec<_>, _>>()?;
        for report in per_seed {
            all_rows.extend(report.rows.into_iter().map(|r| (p, r)));
        }
    }

    let csv = study_csv(&all_rows);
    match &a.out {
        Some(path) => {
            fs::write(path, &csv).with_context(|| format!("writing study `{}`", path.display()))?
        }
        None => print!("{csv}"),
    }

    if a.markdown {
        println!();
        println!("| p | algorithm | hc misses | mean discard % | max discard % | mode switches | dem evals |");
        println!("|---|-----------|-----------|----------------|---------------|---------------|-----------|");
        for &p in &a.overrun_p {
            for &alg in &algorithms {
                let rows: Vec<&StudyRow> = all_rows
                    .iter()
                    .filter(|(rp, r)| *rp == p && r.algorithm == alg)
                    .map(|(_, r)| r)
                    .collect();
                if rows.is_empty() {
                    continue;
                }
                let hc: u64 = rows.iter().map(|r| r.hc_misses).sum();
                let mean = rows.iter().map(|r| r.discard_rate).sum::<f64>() / rows.len() as f64;
                let max = rows.iter().map(|r| r.discard_rate).fold(0.0, f64::max);
                let switches: u64 = rows.iter().map(|r| r.system_switches + r.task_switches).sum();
                let evals: u64 = rows.iter().map(|r| r.dem_evals).sum();
                println!(
                    "| {p} | {alg} | {hc} | {:.2} | {:.2} | {switches} | {evals} |",
                    100.0 * mean,
                    100.0 * max
                );
            }
        }
    }

    // Post-hoc cross-algorithm sanity over the emitted rows: the elastic
    // multimode algorithm should never discard more than the dropping one on
    // the same seed.
    let mut dominance_ok = true;
    for &p in &a.overrun_p {
        for &seed in &seeds {
            let find = |alg: Algorithm| {
                all_rows
                    .iter()
                    .find(|(rp, r)| *rp == p && r.seed == seed && r.algorithm == alg)
                    .map(|(_, r)| r)
            };
            if let (Some(mm), Some(sld)) =
                (find(Algorithm::Multimode), find(Algorithm::SystemLevelDrop))
            {
                if mm.lc_discarded > sld.lc_discarded {
                    eprintln!(
                        "dominance violated: p={p} seed={seed} multimode discarded {} > system-drop {}",
                        mm.lc_discarded, sld.lc_discarded
                    );
                    dominance_ok = false;
                }
            }
        }
    }
    if algorithms.contains(&Algorithm::Multimode) && algorithms.contains(&Algorithm::SystemLevelDrop)
    {
        eprintln!("dominance: {}", if dominance_ok { "ok" } else { "violated" });
    }
    Ok(EXIT_OK)
}

fn cmd_export(a: ExportArgs) -> Result<u8> {
    fs::create_dir_all(&a.dir)
        .with_context(|| format!("creating directory `{}`", a.dir.display()))?;
    for (name, text) in FIXTURES {
        let path = a.dir.join(name);
        if path.exists() && !a.force {
            bail!("`{}` already exists (use --force to overwrite)", path.display());
        }
        fs::write(&path, text).with_context(|| format!("writing `{}`", path.display()))?;
        println!("wrote {}", path.display());
    }
    Ok(EXIT_OK)
}

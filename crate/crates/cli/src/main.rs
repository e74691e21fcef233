//! Command-line front-end for the consensus toolkit.
//!
//! Exit codes: 0 success, 1 validation/configuration error, 2 a checked
//! invariant or property was violated, 3 a vacuous rate bound under
//! `--strict`.

mod output;
mod spec;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use consensus_core::balance;
use consensus_core::bounds;
use consensus_core::dynamics::{simulate, sort_permutation, SimOptions};
use consensus_core::graph::{self, ArcSet};
use consensus_core::schedule::WeightSchedule;
use consensus_core::verify;
use output::{write_json_report, write_sorted_csv, write_stage_csv, write_trajectory_csv};
use serde::Serialize;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser, Debug)]
#[command(
    name = "consensus-cli",
    version,
    about = "Simulate discrete-time averaging under time-varying non-reciprocal weights, \
             certify windowed balance conditions, and evaluate convergence-rate certificates"
)]
struct Cli {
    /// Escalate vacuous rate bounds from warning to failure (exit 3).
    #[arg(long, global = true)]
    strict: bool,

    /// Worker threads for parallel scans (default: machine parallelism).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the averaging iteration and export the trajectory.
    Simulate(SimulateArgs),
    /// Accumulate arc mass and classify the persistent graph.
    Persistence(PersistenceArgs),
    /// Certify a balance condition over a horizon.
    Balance(BalanceArgs),
    /// Evaluate and verify the arc-balanced rate certificate.
    BoundArc(BoundArcArgs),
    /// Evaluate and verify the cut-balanced rate certificate.
    BoundCut(BoundCutArgs),
    /// Run the seeded randomized inequality suites.
    Verify(VerifyArgs),
    /// Reproduce a built-in example system end to end.
    Example(ExampleArgs),
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    /// Schedule spec: `paper-sec4`, `paper-sec5`, `identity:n=3`,
    /// `arc-balanced:n=3,seed=7`, `cut-balanced:n=4,seed=7`, `file:PATH`.
    #[arg(long)]
    schedule: String,
    /// Comma-separated initial state; defaults to equispaced values on [0,1].
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    steps: u64,
    /// Record the rank permutation and sorted state at every step.
    #[arg(long)]
    record_sorted: bool,
    /// Cap on retained state scalars.
    #[arg(long)]
    state_cap: Option<usize>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    /// Companion CSV with rank permutations and sorted states.
    #[arg(long)]
    out_sorted_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct PersistenceArgs {
    #[arg(long)]
    schedule: String,
    /// Last time included in the accumulation.
    #[arg(long)]
    horizon: u64,
    /// Also compute the earliest time from which non-persistent tails fit
    /// within this budget.
    #[arg(long)]
    tail_budget: Option<f64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BalanceKind {
    Arc,
    Cut,
    Asymmetry,
    Aif,
}

#[derive(Args, Debug, Serialize)]
struct BalanceArgs {
    #[arg(long)]
    schedule: String,
    #[arg(long, value_enum)]
    condition: BalanceKind,
    /// Window length (arc and cut conditions).
    #[arg(long, default_value_t = 1)]
    window: u64,
    /// Horizon as `start:end` (inclusive); defaults to the schedule start
    /// plus 300 steps.
    #[arg(long)]
    horizon: Option<String>,
    /// Constant to check the reported minimum against.
    #[arg(long)]
    ratio: Option<f64>,
    /// Persistent arcs for the arc condition, e.g. `1>2,1>3` (1-based);
    /// defaults to generator ground truth, then to the estimated graph.
    #[arg(long)]
    arcs: Option<String>,
    /// Subset cardinality for the accumulated-flow condition.
    #[arg(long)]
    cardinality: Option<usize>,
    /// Matrix time for the single-matrix asymmetry condition; defaults to
    /// the schedule start.
    #[arg(long)]
    at: Option<u64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BoundArcArgs {
    #[arg(long)]
    schedule: String,
    /// Certified balance constant.
    #[arg(long)]
    ratio: f64,
    /// Balance window length.
    #[arg(long)]
    window: u64,
    #[arg(long)]
    eps_target: f64,
    #[arg(long)]
    eps_tail: Option<f64>,
    /// Per-stage mass target; defaults to twice the required minimum.
    #[arg(long)]
    delta: Option<f64>,
    /// Steps past the schedule start to simulate and scan.
    #[arg(long, default_value_t = 3000)]
    horizon: u64,
    #[arg(long, default_value_t = 40)]
    max_stages: usize,
    #[arg(long)]
    x0: Option<String>,
    #[arg(long)]
    arcs: Option<String>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    /// Per-stage CSV: stage, time, predicted, observed.
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct BoundCutArgs {
    #[arg(long)]
    schedule: String,
    #[arg(long)]
    ratio: f64,
    #[arg(long)]
    window: u64,
    #[arg(long)]
    eps_target: f64,
    /// Length-`window` blocks to simulate and scan.
    #[arg(long, default_value_t = 4500)]
    horizon_windows: u64,
    #[arg(long, default_value_t = 2)]
    max_stages: usize,
    #[arg(long)]
    x0: Option<String>,
    /// Also check the window-lift facts (diagonal floor and per-matrix cut
    /// bound) over this many windows.
    #[arg(long)]
    check_lift_windows: Option<u64>,
    #[arg(long)]
    out_json: Option<PathBuf>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum SuiteId {
    Lemmas,
}

#[derive(Args, Debug, Serialize)]
struct VerifyArgs {
    #[arg(long, value_enum, default_value_t = SuiteId::Lemmas)]
    suite: SuiteId,
    #[arg(long, default_value_t = 1000)]
    trials: u64,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
struct ExampleArgs {
    /// `paper-sec4` (four-agent sorted-state demo) or `paper-sec5`
    /// (three-agent counterexample).
    #[arg(long)]
    id: String,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    out_csv: Option<PathBuf>,
    #[arg(long)]
    out_json: Option<PathBuf>,
}

/// Anything the run decided beyond plain success.
enum Verdict {
    Ok,
    PropertyViolation(String),
    VacuousBound(String),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    #[cfg(feature = "parallel")]
    if let Some(threads) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
        {
            eprintln!("warning: could not size the worker pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if cli.threads.is_some() {
        eprintln!("warning: built without the parallel feature; --threads ignored");
    }

    match run(&cli) {
        Ok(Verdict::Ok) => ExitCode::SUCCESS,
        Ok(Verdict::PropertyViolation(msg)) => {
            eprintln!("property violation: {msg}");
            ExitCode::from(2)
        }
        Ok(Verdict::VacuousBound(msg)) => {
            if cli.strict {
                eprintln!("vacuous bound (strict): {msg}");
                ExitCode::from(3)
            } else {
                eprintln!("warning: vacuous bound: {msg}");
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<Verdict> {
    match &cli.command {
        Command::Simulate(args) => cmd_simulate(args),
        Command::Persistence(args) => cmd_persistence(args),
        Command::Balance(args) => cmd_balance(args),
        Command::BoundArc(args) => cmd_bound_arc(args),
        Command::BoundCut(args) => cmd_bound_cut(args),
        Command::Verify(args) => cmd_verify(args),
        Command::Example(args) => cmd_example(args),
    }
}

fn parse_x0(arg: &Option<String>, n: usize) -> Result<Vec<f64>> {
    match arg {
        Some(text) => {
            let values: Vec<f64> = text
                .split(',')
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .with_context(|| format!("bad state value {v:?}"))
                })
                .collect::<Result<_>>()?;
            if values.len() != n {
                bail!("initial state has {} entries, schedule has {n} agents", values.len());
            }
            Ok(values)
        }
        None => Ok((0..n)
            .map(|i| i as f64 / (n as f64 - 1.0).max(1.0))
            .collect()),
    }
}

/// `1>2,1>3` (1-based, influence direction) into 0-based arcs.
fn parse_arcs(text: &str, n: usize) -> Result<ArcSet> {
    let mut arcs = Vec::new();
    for part in text.split(',') {
        let (from, to) = part
            .split_once('>')
            .ok_or_else(|| anyhow!("bad arc {part:?}, expected FROM>TO"))?;
        let from: usize = from.trim().parse().context("bad arc endpoint")?;
        let to: usize = to.trim().parse().context("bad arc endpoint")?;
        if from == 0 || to == 0 {
            bail!("arc endpoints are 1-based");
        }
        arcs.push((from - 1, to - 1));
    }
    Ok(ArcSet::new(n, arcs)?)
}

/// Explicit arcs, then generator ground truth, then the classified estimate.
fn resolve_persistent_arcs(
    schedule: &WeightSchedule,
    arcs: &Option<String>,
    estimate_horizon: u64,
) -> Result<(ArcSet, &'static str)> {
    if let Some(text) = arcs {
        return Ok((parse_arcs(text, schedule.n())?, "explicit"));
    }
    if let Some(known) = schedule.known_persistent_arcs() {
        return Ok((ArcSet::new(schedule.n(), known)?, "schedule ground truth"));
    }
    let est = graph::accumulate(schedule, estimate_horizon)?;
    Ok((est.persistent_graph(), "finite-horizon estimate"))
}

fn cmd_simulate(args: &SimulateArgs) -> Result<Verdict> {
    let schedule = spec::parse_schedule(&args.schedule)?;
    let x0 = parse_x0(&args.x0, schedule.n())?;
    let opts = SimOptions {
        record_sorted: args.record_sorted || args.out_sorted_csv.is_some(),
        state_cap: args.state_cap.unwrap_or(consensus_core::dynamics::DEFAULT_STATE_CAP),
    };
    let traj = simulate(&schedule, &x0, args.steps, &opts)?;
    if let Some(path) = &args.out_csv {
        write_trajectory_csv(path, &traj)?;
    }
    if let Some(path) = &args.out_sorted_csv {
        write_sorted_csv(path, &traj)?;
    }
    #[derive(Serialize)]
    struct Summary {
        t0: u64,
        steps: u64,
        initial_spread: f64,
        final_spread: f64,
        state_cap_hit: bool,
    }
    let summary = Summary {
        t0: traj.t0,
        steps: args.steps,
        initial_spread: traj.spread[0],
        final_spread: *traj.spread.last().expect("nonempty"),
        state_cap_hit: traj.state_cap_hit,
    };
    if let Some(path) = &args.out_json {
        write_json_report(path, "simulate", args, &summary)?;
    }
    println!(
        "simulated {} steps from t0={}: spread {} -> {}",
        args.steps, summary.t0, summary.initial_spread, summary.final_spread
    );
    Ok(Verdict::Ok)
}

fn cmd_persistence(args: &PersistenceArgs) -> Result<Verdict> {
    let schedule = spec::parse_schedule(&args.schedule)?;
    let est = graph::accumulate(&schedule, args.horizon)?;

    #[derive(Serialize)]
    struct ArcRow {
        from: usize,
        to: usize,
        total_mass: f64,
        recent_mass: f64,
        label: graph::ArcLabel,
    }
    #[derive(Serialize)]
    struct Report {
        horizon: u64,
        thresholds: graph::ClassifierThresholds,
        ground_truth_available: bool,
        arcs: Vec<ArcRow>,
        persistent_graph_has_spanning_tree: bool,
        persistent_graph_strongly_connected: bool,
        persistent_graph_diameter: Option<u64>,
        tail_time: Option<graph::TailTime>,
    }

    let arcs: Vec<ArcRow> = est
        .off_diagonal_arcs()
        .map(|arc| ArcRow {
            from: arc.0 + 1,
            to: arc.1 + 1,
            total_mass: est.arc_mass(arc),
            recent_mass: est.arc_recent_mass(arc),
            label: est.label(arc),
        })
        .collect();
    let graph_p = est.persistent_graph();
    let tail_time = match args.tail_budget {
        Some(budget) => Some(graph::tail_time(&schedule, &graph_p, budget, args.horizon)?),
        None => None,
    };
    let report = Report {
        horizon: args.horizon,
        thresholds: est.thresholds,
        ground_truth_available: est.declared.is_some(),
        arcs,
        persistent_graph_has_spanning_tree: graph::has_spanning_tree(&graph_p),
        persistent_graph_strongly_connected: graph::is_strongly_connected(&graph_p),
        persistent_graph_diameter: graph::diameter(&graph_p).ok(),
        tail_time,
    };
    if let Some(path) = &args.out_json {
        write_json_report(path, "persistence", args, &report)?;
    }
    println!(
        "persistent arcs: {} of {} (spanning tree: {}, strongly connected: {})",
        report.arcs.iter().filter(|a| a.label == graph::ArcLabel::Persistent).count(),
        report.arcs.len(),
        report.persistent_graph_has_spanning_tree,
        report.persistent_graph_strongly_connected,
    );
    Ok(Verdict::Ok)
}

fn parse_horizon(arg: &Option<String>, default: (u64, u64)) -> Result<(u64, u64)> {
    match arg {
        None => Ok(default),
        Some(text) => {
            let (a, b) = text
                .split_once(':')
                .ok_or_else(|| anyhow!("horizon must be START:END"))?;
            Ok((a.trim().parse()?, b.trim().parse()?))
        }
    }
}

fn cmd_balance(args: &BalanceArgs) -> Result<Verdict> {
    let schedule = spec::parse_schedule(&args.schedule)?;
    let t0 = schedule.t0();
    let horizon = parse_horizon(&args.horizon, (t0, t0 + 300))?;

    #[derive(Serialize)]
    struct Report<T: Serialize> {
        #[serde(skip_serializing_if = "Option::is_none")]
        arc_source: Option<&'static str>,
        result: T,
        #[serde(skip_serializing_if = "Option::is_none")]
        satisfied_at_ratio: Option<bool>,
    }

    let verdict;
    match args.condition {
        BalanceKind::Arc => {
            let (arcs, source) = resolve_persistent_arcs(&schedule, &args.arcs, horizon.1)?;
            let rep = balance::arc_balance_k_min(&schedule, &arcs, args.window, horizon)?;
            let satisfied = args.ratio.map(|k| rep.satisfied_at(k));
            println!("windowed arc balance: k_min = {}", rep.k_min);
            verdict = match satisfied {
                Some(false) => Verdict::PropertyViolation(format!(
                    "k_min {} exceeds ratio {}",
                    rep.k_min,
                    args.ratio.expect("checked")
                )),
                _ => Verdict::Ok,
            };
            if let Some(path) = &args.out_json {
                write_json_report(
                    path,
                    "balance",
                    args,
                    &Report {
                        arc_source: Some(source),
                        result: rep,
                        satisfied_at_ratio: satisfied,
                    },
                )?;
            }
        }
        BalanceKind::Cut => {
            let rep = balance::cut_balance_k_min(&schedule, args.window, horizon)?;
            let satisfied = args.ratio.map(|k| rep.satisfied_at(k));
            println!("windowed cut balance: k_min = {}", rep.k_min);
            verdict = match satisfied {
                Some(false) => Verdict::PropertyViolation(format!(
                    "k_min {} exceeds ratio {}",
                    rep.k_min,
                    args.ratio.expect("checked")
                )),
                _ => Verdict::Ok,
            };
            if let Some(path) = &args.out_json {
                write_json_report(
                    path,
                    "balance",
                    args,
                    &Report {
                        arc_source: None,
                        result: rep,
                        satisfied_at_ratio: satisfied,
                    },
                )?;
            }
        }
        BalanceKind::Asymmetry => {
            let t = args.at.unwrap_or(t0);
            let matrix = schedule.matrix_at(t)?;
            let rep = balance::balanced_asymmetry_m_min(&matrix)?;
            let satisfied = args.ratio.map(|m| rep.m_min <= m + balance::RATIO_SLACK);
            println!("balanced asymmetry at t={t}: m_min = {}", rep.m_min);
            verdict = match satisfied {
                Some(false) => Verdict::PropertyViolation(format!(
                    "m_min {} exceeds ratio {}",
                    rep.m_min,
                    args.ratio.expect("checked")
                )),
                _ => Verdict::Ok,
            };
            if let Some(path) = &args.out_json {
                write_json_report(
                    path,
                    "balance",
                    args,
                    &Report {
                        arc_source: None,
                        result: rep,
                        satisfied_at_ratio: satisfied,
                    },
                )?;
            }
        }
        BalanceKind::Aif => {
            let n = schedule.n();
            let cardinality = args.cardinality.unwrap_or(1);
            if cardinality == 0 || cardinality >= n {
                bail!("cardinality must be a proper subset size (1..{})", n - 1);
            }
            let rep = balance::aif_partial(&schedule, horizon, cardinality)?;
            println!(
                "minimal accumulated flow over cardinality-{cardinality} sequences: {}",
                rep.min_flow
            );
            verdict = Verdict::Ok;
            if let Some(path) = &args.out_json {
                write_json_report(
                    path,
                    "balance",
                    args,
                    &Report {
                        arc_source: None,
                        result: rep,
                        satisfied_at_ratio: None,
                    },
                )?;
            }
        }
    }
    Ok(verdict)
}

fn cmd_bound_arc(args: &BoundArcArgs) -> Result<Verdict> {
    let schedule = spec::parse_schedule(&args.schedule)?;
    let (arcs, arc_source) =
        resolve_persistent_arcs(&schedule, &args.arcs, schedule.t0() + args.horizon)?;
    let x0 = parse_x0(&args.x0, schedule.n())?;
    let inputs = bounds::ArcRateInputs {
        ratio_bound: args.ratio,
        window: args.window,
        target_ratio: args.eps_target,
        tail_budget: args.eps_tail,
        stage_mass_target: args.delta,
        horizon: args.horizon,
        max_stages: args.max_stages,
    };
    let rep = bounds::verify_arc_rate(&schedule, &arcs, &inputs, &x0)?;
    if let Some(path) = &args.out_csv {
        write_stage_csv(path, &rep.stage_checks)?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        arc_source: &'static str,
        verification: &'a bounds::ArcRateVerification,
    }
    if let Some(path) = &args.out_json {
        write_json_report(
            path,
            "bound-arc",
            args,
            &Report {
                arc_source,
                verification: &rep,
            },
        )?;
    }
    println!(
        "arc-balanced certificate: balance k_min = {}, stage factor = {}, guarantee {}",
        rep.balance_k_min,
        rep.bound.stage_factor,
        if rep.guarantee_holds { "holds" } else { "NOT established" },
    );
    if rep.bound.vacuous {
        return Ok(Verdict::VacuousBound(
            "per-stage contraction ingredient is at least 1".into(),
        ));
    }
    let stagewise_ok = rep.stage_checks.iter().all(|c| c.ok);
    if !rep.balance_certified {
        return Ok(Verdict::PropertyViolation(format!(
            "balance constant {} exceeds the certified ratio {}",
            rep.balance_k_min, args.ratio
        )));
    }
    if !rep.guarantee_holds || !stagewise_ok || !rep.stage_masses_ok {
        return Ok(Verdict::PropertyViolation(
            "certificate verification failed (see report)".into(),
        ));
    }
    Ok(Verdict::Ok)
}

fn cmd_bound_cut(args: &BoundCutArgs) -> Result<Verdict> {
    let schedule = spec::parse_schedule(&args.schedule)?;
    let x0 = parse_x0(&args.x0, schedule.n())?;
    let inputs = bounds::CutRateInputs {
        ratio_bound: args.ratio,
        window: args.window,
        target_ratio: args.eps_target,
        horizon_windows: args.horizon_windows,
        max_stages: args.max_stages,
    };
    let rep = bounds::verify_cut_rate(&schedule, &inputs, &x0)?;
    let lift = match args.check_lift_windows {
        Some(windows) => Some((
            bounds::lifted_cut_balance_check(&schedule, args.ratio, args.window, windows)?,
            bounds::lifted_persistence_check(&schedule, args.window, windows).ok(),
        )),
        None => None,
    };
    if let Some(path) = &args.out_csv {
        write_stage_csv(path, &rep.stage_checks)?;
    }
    #[derive(Serialize)]
    struct Report<'a> {
        verification: &'a bounds::CutRateVerification,
        #[serde(skip_serializing_if = "Option::is_none")]
        lift_cut_balance: Option<&'a bounds::LiftCutBalanceReport>,
        #[serde(skip_serializing_if = "Option::is_none")]
        lift_persistence_transfer: Option<bool>,
    }
    if let Some(path) = &args.out_json {
        write_json_report(
            path,
            "bound-cut",
            args,
            &Report {
                verification: &rep,
                lift_cut_balance: lift.as_ref().map(|(l, _)| l),
                lift_persistence_transfer: lift.as_ref().and_then(|(_, p)| *p),
            },
        )?;
    }
    println!(
        "cut-balanced certificate: balance k_min = {}, stage factor = {}, guarantee {}",
        rep.balance_k_min,
        rep.bound.stage_factor,
        if rep.guarantee_holds { "holds" } else { "NOT established" },
    );
    if !rep.balance_certified {
        return Ok(Verdict::PropertyViolation(format!(
            "balance constant {} exceeds the certified ratio {}",
            rep.balance_k_min, args.ratio
        )));
    }
    let stagewise_ok = rep.stage_checks.iter().all(|c| c.ok);
    let lift_ok = lift
        .as_ref()
        .map(|(l, p)| l.holds && p.unwrap_or(true))
        .unwrap_or(true);
    if !rep.guarantee_holds
        || !stagewise_ok
        || !rep.substage_flows_ok
        || !rep.substage_times_strictly_increasing
        || !lift_ok
    {
        return Ok(Verdict::PropertyViolation(
            "certificate verification failed (see report)".into(),
        ));
    }
    Ok(Verdict::Ok)
}

fn cmd_verify(args: &VerifyArgs) -> Result<Verdict> {
    let reports = match args.suite {
        SuiteId::Lemmas => verify::all_suites(args.trials, args.seed),
    };
    for rep in &reports {
        println!(
            "{}: {} trials, {} violations",
            rep.name, rep.trials, rep.violations
        );
    }
    if let Some(path) = &args.out_json {
        write_json_report(path, "verify", args, &reports)?;
    }
    if reports.iter().all(verify::SuiteReport::passed) {
        Ok(Verdict::Ok)
    } else {
        let failed: Vec<&str> = reports
            .iter()
            .filter(|r| !r.passed())
            .map(|r| r.name)
            .collect();
        Ok(Verdict::PropertyViolation(format!(
            "suites with violations: {}",
            failed.join(", ")
        )))
    }
}

fn format_vector(x: &[f64]) -> String {
    let inner: Vec<String> = x.iter().map(|v| format!("{v}")).collect();
    format!("[{}]", inner.join(", "))
}

fn cmd_example(args: &ExampleArgs) -> Result<Verdict> {
    match args.id.as_str() {
        "paper-sec4" => {
            let steps = args.steps.unwrap_or(1);
            let schedule = WeightSchedule::four_agent_sorted_example();
            let y0 = [0.0, 1.0, 2.0, 3.0];
            let opts = SimOptions {
                record_sorted: true,
                ..Default::default()
            };
            let traj = simulate(&schedule, &y0, steps, &opts)?;
            let y1 = traj.state_at(1).expect("one step").to_vec();
            let rank1 = sort_permutation(&y1);
            let records = traj.sorted.as_ref().expect("recorded");
            let z1 = records[1].sorted.clone();
            let b0 = schedule.matrix_at(0)?;
            let reindexed = consensus_core::dynamics::reindex_sorted(
                &b0,
                &rank1,
                &[0, 1, 2, 3],
            )?;
            let same_step =
                consensus_core::dynamics::reindex_sorted_same_step(&b0, &[0, 1, 2, 3])?;
            let propagated = reindexed.apply(&y0)?;
            let raw = same_step.apply(&y0)?;

            println!("first step     : {}", format_vector(&y1));
            println!(
                "rank (1-based) : {:?}",
                rank1.iter().map(|&i| i + 1).collect::<Vec<_>>()
            );
            println!("sorted state   : {}", format_vector(&z1));
            println!("reindexed matrix (propagates the sorted state):");
            for i in 0..4 {
                println!("  {}", format_vector(reindexed.row(i)));
            }
            println!("same-step reindexing (does not):");
            for i in 0..4 {
                println!("  {}", format_vector(same_step.row(i)));
            }

            let ok = y1 == [1.0, 2.0, 1.0, 2.0]
                && rank1 == [0, 2, 1, 3]
                && z1 == [1.0, 1.0, 2.0, 2.0]
                && propagated == z1
                && raw != z1;

            if let Some(path) = &args.out_csv {
                write_trajectory_csv(path, &traj)?;
            }
            #[derive(Serialize)]
            struct Report {
                first_step: Vec<f64>,
                rank_one_based: Vec<usize>,
                sorted_state: Vec<f64>,
                propagates_sorted_state: bool,
                same_step_differs: bool,
            }
            if let Some(path) = &args.out_json {
                write_json_report(
                    path,
                    "example",
                    args,
                    &Report {
                        first_step: y1.clone(),
                        rank_one_based: rank1.iter().map(|&i| i + 1).collect(),
                        sorted_state: z1.clone(),
                        propagates_sorted_state: propagated == z1,
                        same_step_differs: raw != z1,
                    },
                )?;
            }
            if ok {
                Ok(Verdict::Ok)
            } else {
                Ok(Verdict::PropertyViolation(
                    "four-agent sorted-state facts did not reproduce".into(),
                ))
            }
        }
        "paper-sec5" => {
            let steps = args.steps.unwrap_or(10_000);
            let schedule = WeightSchedule::three_agent_counterexample();
            let traj = simulate(&schedule, &[1.0, 1.0, 0.0], steps, &SimOptions::default())?;
            let report = bounds::three_agent_spread_floor(&traj)?;
            println!(
                "spread after {} steps: {} (floor from partial product: {}, limit {})",
                steps, report.final_spread, report.partial_product, report.limit
            );
            if let Some(path) = &args.out_csv {
                write_trajectory_csv(path, &traj)?;
            }
            if let Some(path) = &args.out_json {
                write_json_report(path, "example", args, &report)?;
            }
            if report.holds {
                Ok(Verdict::Ok)
            } else {
                Ok(Verdict::PropertyViolation(
                    "three-agent spread floor violated".into(),
                ))
            }
        }
        other => bail!("unknown example id {other:?} (expected paper-sec4 or paper-sec5)"),
    }
}

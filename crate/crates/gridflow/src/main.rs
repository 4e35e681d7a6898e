//! Command-line front end: load a case, run the control loop in either
//! gradient mode, and emit trace CSVs, comparison tables, line
//! diagnostics, and the swarm baseline.
//!
//! Exit codes: 0 success, 2 parse/validation failure, 3 power-flow
//! divergence, 1 anything else.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use gridflow::controller::{self, LoadEvent};
use gridflow::objective::GradientMode;
use gridflow::{analyzer, netmodel, powerflow, pso, svg};
use gridflow::{Error, Network64, Trace64};

#[derive(Parser)]
#[command(name = "gridflow", version, about = "Reactive-power dispatch simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the control loop and write per-iteration trace CSVs
    Run(RunArgs),
    /// Run both gradient modes and write a side-by-side report
    Compare(RunArgs),
    /// Post-control per-line diagnostics and the loss-percentage verdict
    Analyze(AnalyzeArgs),
    /// Particle-swarm baseline against the gradient controller
    Pso(PsoArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Exact,
    Approx,
    Both,
}

#[derive(Args)]
struct CommonArgs {
    /// Case file: native format or IEEE common data format
    #[arg(long)]
    case: PathBuf,

    /// Event schedule file (at_iteration bus_list load_type multiplier)
    #[arg(long)]
    events: Option<PathBuf>,

    /// Convergence tolerance on the max unclamped gradient magnitude
    #[arg(long, default_value_t = 1e-3)]
    eps: f64,

    /// Gradient step scale
    #[arg(long, default_value_t = 10.0)]
    dt: f64,

    /// Number of controller iterations to simulate
    #[arg(long, default_value_t = 125)]
    horizon: usize,

    /// Output directory (defaults to $GRIDFLOW_OUT, then the working dir)
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Gradient mode to run
    #[arg(long, value_enum, default_value_t = ModeArg::Both)]
    mode: ModeArg,

    /// Also render SVG plots of the trace
    #[arg(long)]
    svg: bool,

    /// Dump the admittance matrix and base-solve mismatch history as CSV
    #[arg(long)]
    dump_pf: bool,
}

#[derive(Args)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Gradient mode for the control run behind the diagnostics
    #[arg(long, value_enum, default_value_t = ModeArg::Exact)]
    mode: ModeArg,

    /// Loss-percentage threshold for the approximation verdict
    #[arg(long, default_value_t = 8.0)]
    threshold_pct: f64,
}

#[derive(Args)]
struct PsoArgs {
    #[command(flatten)]
    common: CommonArgs,

    /// Random seed for the swarm
    #[arg(long, default_value_t = 0)]
    seed: u64,

    #[arg(long, default_value_t = 30)]
    particles: usize,

    #[arg(long, default_value_t = 0.7)]
    inertia: f64,

    #[arg(long, default_value_t = 1.5)]
    c1: f64,

    #[arg(long, default_value_t = 1.5)]
    c2: f64,

    #[arg(long, default_value_t = 200)]
    max_iter: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Run(args) => cmd_run(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Analyze(args) => cmd_analyze(args),
        Cmd::Pso(args) => cmd_pso(args),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn exit_code_for(e: &Error) -> u8 {
    match e {
        Error::Syntax { .. }
        | Error::Semantic(_)
        | Error::Cdf { .. }
        | Error::UnknownBus(_)
        | Error::ZeroImpedanceBranch { .. }
        | Error::Io(_) => 2,
        Error::PowerFlowDiverged { .. } => 3,
        _ => 1,
    }
}

/// Load a case file, sniffing native vs CDF by the `[bus]` section marker.
/// A sibling `<stem>.sources` overlay, if present, attaches controllable
/// sources (and optionally weights) to the import.
fn load_network(path: &Path) -> gridflow::Result<Network64> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    })?;
    let mut net = if text.contains("[bus]") {
        netmodel::parse_case(&text)?
    } else {
        netmodel::parse_ieee_cdf(&text)?
    };
    let overlay = path.with_extension("sources");
    if overlay != path && overlay.is_file() {
        let overlay_text = std::fs::read_to_string(&overlay)?;
        let (sources, weights) = netmodel::parse_sources_overlay(&overlay_text)?;
        net = net.with_sources(sources, weights)?;
    }
    let violations = netmodel::validate(&net);
    if !violations.is_empty() {
        return Err(Error::Semantic(violations.join("; ")));
    }
    Ok(net)
}

fn load_events(path: Option<&PathBuf>) -> gridflow::Result<Vec<LoadEvent<f64>>> {
    match path {
        Some(p) => controller::parse_events(&std::fs::read_to_string(p)?),
        None => Ok(Vec::new()),
    }
}

fn out_dir(args: &CommonArgs) -> PathBuf {
    args.out
        .clone()
        .or_else(|| std::env::var_os("GRIDFLOW_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Write via a temp file in the same directory, then rename into place.
fn write_atomic(dir: &Path, name: &str, content: &str) -> gridflow::Result<PathBuf> {
    std::fs::create_dir_all(dir)?;
    let target = dir.join(name);
    let tmp = dir.join(format!(".{name}.tmp"));
    std::fs::write(&tmp, content)?;
    std::fs::rename(&tmp, &target)?;
    Ok(target)
}

fn mode_list(mode: ModeArg) -> Vec<GradientMode> {
    match mode {
        ModeArg::Exact => vec![GradientMode::Exact],
        ModeArg::Approx => vec![GradientMode::AngleApprox],
        ModeArg::Both => vec![GradientMode::AngleApprox, GradientMode::Exact],
    }
}

fn cmd_run(args: RunArgs) -> gridflow::Result<ExitCode> {
    let net = load_network(&args.common.case)?;
    let events = load_events(args.common.events.as_ref())?;
    let dir = out_dir(&args.common);

    if args.dump_pf {
        dump_power_flow(&net, &dir)?;
    }

    let mut diverged = false;
    for mode in mode_list(args.mode) {
        let trace = controller::run_scenario(
            &net,
            &events,
            mode,
            args.common.eps,
            args.common.dt,
            args.common.horizon,
        )?;
        let path = write_atomic(&dir, &format!("trace_{mode}.csv"), &controller::trace_csv(&net, &trace))?;
        println!("wrote {}", path.display());
        if args.svg {
            write_trace_plots(&net, &trace, mode, &dir)?;
        }
        if let Some(why) = &trace.failure {
            eprintln!("error: {mode} run aborted: {why}");
            diverged = true;
        }
    }
    Ok(if diverged {
        ExitCode::from(3)
    } else {
        ExitCode::SUCCESS
    })
}

fn dump_power_flow(net: &Network64, dir: &Path) -> gridflow::Result<()> {
    let y = powerflow::build_admittance(net)?;
    let mut ybus = String::from("i,j,g,b\n");
    for i in 0..y.n {
        for j in 0..y.n {
            let (g, b) = (y.g.get(i, j), y.b.get(i, j));
            if g != 0.0 || b != 0.0 {
                ybus.push_str(&format!(
                    "{},{},{:.9},{:.9}\n",
                    net.buses[i].id, net.buses[j].id, g, b
                ));
            }
        }
    }
    write_atomic(dir, "ybus.csv", &ybus)?;

    let q0 = vec![0.0; net.sources.len()];
    let sol = powerflow::solve(net, &y, &q0, None, powerflow::SolverOptions::default())?;
    let mut mm = String::from("iter,max_mismatch\n");
    for (k, m) in sol.mismatch_history.iter().enumerate() {
        mm.push_str(&format!("{k},{m:.3e}\n"));
    }
    write_atomic(dir, "pf_mismatch.csv", &mm)?;
    Ok(())
}

fn write_trace_plots(
    net: &Network64,
    trace: &Trace64,
    mode: GradientMode,
    dir: &Path,
) -> gridflow::Result<()> {
    let xs: Vec<f64> = trace.records.iter().map(|r| r.k as f64).collect();
    let f_series = svg::Series {
        label: format!("f ({mode})"),
        points: xs
            .iter()
            .zip(&trace.records)
            .map(|(&x, r)| (x, r.objective.f))
            .collect(),
    };
    write_atomic(
        dir,
        &format!("objective_{mode}.svg"),
        &svg::line_chart("objective vs iteration", "iteration", "f", &[f_series]),
    )?;

    let q_series: Vec<svg::Series> = net
        .sources
        .iter()
        .enumerate()
        .map(|(i, s)| svg::Series {
            label: format!("Q{}", s.bus),
            points: xs
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| (x, r.q_ctrl[i]))
                .collect(),
        })
        .collect();
    write_atomic(
        dir,
        &format!("qgen_{mode}.svg"),
        &svg::line_chart("reactive generation", "iteration", "Q (p.u.)", &q_series),
    )?;

    let v_series: Vec<svg::Series> = net
        .buses
        .iter()
        .enumerate()
        .map(|(i, b)| svg::Series {
            label: format!("V{}", b.id),
            points: xs
                .iter()
                .zip(&trace.records)
                .map(|(&x, r)| (x, r.v[i]))
                .collect(),
        })
        .collect();
    write_atomic(
        dir,
        &format!("voltage_{mode}.svg"),
        &svg::line_chart("bus voltages", "iteration", "V (p.u.)", &v_series),
    )?;
    Ok(())
}

fn cmd_compare(args: RunArgs) -> gridflow::Result<ExitCode> {
    if args.mode != ModeArg::Both {
        return Err(Error::Semantic(
            "compare needs both modes (--mode both)".to_string(),
        ));
    }
    let net = load_network(&args.common.case)?;
    let events = load_events(args.common.events.as_ref())?;
    let dir = out_dir(&args.common);
    let report = analyzer::compare_modes(
        &net,
        &events,
        args.common.eps,
        args.common.dt,
        args.common.horizon,
    )?;
    let txt = analyzer::comparison_text(&report);
    write_atomic(&dir, "comparison.txt", &txt)?;
    write_atomic(&dir, "comparison.csv", &analyzer::comparison_csv(&report))?;
    print!("{txt}");
    Ok(ExitCode::SUCCESS)
}

fn cmd_analyze(args: AnalyzeArgs) -> gridflow::Result<ExitCode> {
    let net = load_network(&args.common.case)?;
    let events = load_events(args.common.events.as_ref())?;
    let dir = out_dir(&args.common);
    let mode = match args.mode {
        ModeArg::Approx => GradientMode::AngleApprox,
        _ => GradientMode::Exact,
    };
    let trace = controller::run_scenario(
        &net,
        &events,
        mode,
        args.common.eps,
        args.common.dt,
        args.common.horizon,
    )?;
    if let Some(why) = &trace.failure {
        eprintln!("error: control run aborted: {why}");
        return Ok(ExitCode::from(3));
    }
    // re-solve the post-control state on the post-event network
    let final_net = events
        .iter()
        .fold(net.clone(), |n, ev| controller::apply_event(&n, ev));
    let q = trace.last().expect("non-empty trace").q_ctrl.clone();
    let y = powerflow::build_admittance(&final_net)?;
    let sol = powerflow::solve(&final_net, &y, &q, None, powerflow::SolverOptions::default())?;
    if !sol.converged {
        return Err(Error::PowerFlowDiverged {
            iterations: sol.iterations,
            max_mismatch: sol.max_mismatch,
        });
    }
    let lines = analyzer::line_diagnostics(&final_net, &sol, args.threshold_pct);
    write_atomic(&dir, "lines.csv", &analyzer::lines_csv(&lines))?;
    println!("{}", analyzer::lines_summary(&lines, args.threshold_pct));
    Ok(ExitCode::SUCCESS)
}

fn cmd_pso(args: PsoArgs) -> gridflow::Result<ExitCode> {
    let net = load_network(&args.common.case)?;
    let dir = out_dir(&args.common);
    let y = powerflow::build_admittance(&net)?;
    let cfg = pso::PsoConfig {
        n_particles: args.particles,
        inertia: args.inertia,
        cognitive: args.c1,
        social: args.c2,
        max_iter: args.max_iter,
        seed: args.seed,
        ..Default::default()
    };
    let outcome = pso::optimize(&net, &y, &cfg)?;
    write_atomic(&dir, "pso_trace.csv", &pso::trace_csv(&outcome))?;

    let trace = controller::run_scenario(
        &net,
        &[],
        GradientMode::Exact,
        args.common.eps,
        args.common.dt,
        args.common.horizon,
    )?;
    if let Some(why) = &trace.failure {
        eprintln!("error: gradient run aborted: {why}");
        return Ok(ExitCode::from(3));
    }
    let last = trace.last().expect("non-empty trace");
    let gradient_iters = trace
        .first_settled()
        .map(|i| i.to_string())
        .unwrap_or_else(|| "not converged".to_string());
    let mut summary = String::new();
    summary.push_str(&format!(
        "{:<24}{:>14}{:>14}\n",
        "", "Objective", "Iterations"
    ));
    summary.push_str(&format!(
        "{:<24}{:>14.4}{:>14}\n",
        "Gradient controller", last.objective.f, gradient_iters
    ));
    summary.push_str(&format!(
        "{:<24}{:>14.4}{:>14}\n",
        "Particle swarm", outcome.best.f, outcome.iterations
    ));
    write_atomic(&dir, "pso_summary.txt", &summary)?;
    print!("{summary}");
    Ok(ExitCode::SUCCESS)
}

//! `rcl`: check, inspect, run and compare reactor programs.

use std::fs;
use std::io::{self, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};

use rcl_core::dsl::{self, Diagnostics};
use rcl_core::federation::net::{launch, run_federate, serve_rti};
use rcl_core::federation::{partition, simulate, Coordination, Delivery, FederationRun, LatencyScript};
use rcl_core::graph::{assign_levels, build_graph, detect_cycles, to_dot};
use rcl_core::instance::InstanceGraph;
use rcl_core::runtime::{self, clock_script, Callbacks, Mode, Plan, RunConfig};
use rcl_core::trace::{canonicalize, compare, phys_text, sidecar_path, Comparison, PhysRecord, Trace};
use rcl_core::TimeValue;

const OK: u8 = 0;
const DIAGNOSTICS: u8 = 1;
const RUNTIME: u8 = 2;
const DIVERGENT: u8 = 3;
const USAGE: u8 = 64;

#[derive(Parser, Debug)]
#[command(name = "rcl", version, about = "Deterministic reactor programs: check, run, federate, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse, validate and level a program.
    Check { file: PathBuf },
    /// Print the reaction graph with levels.
    Graph {
        file: PathBuf,
        /// Emit Graphviz DOT instead of a listing.
        #[arg(long)]
        dot: bool,
    },
    /// Run a program in one process.
    Run {
        file: PathBuf,
        #[command(flatten)]
        exec: ExecArgs,
        /// Compare the trace against this golden file (exit 3 on divergence).
        #[arg(long, value_name = "PATH")]
        golden: Option<PathBuf>,
        /// Write the trace to the golden file instead of comparing.
        #[arg(long, requires = "golden")]
        update_golden: bool,
    },
    /// Run a federated program.
    Federate {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = CoordinationArg::Centralized)]
        mode: CoordinationArg,
        /// Simulate the network in one process with latencies from SCRIPT
        /// (JSON lines `{"connection": "a.o->b.i", "delay_ms": 4}`).
        #[arg(long, value_name = "SCRIPT")]
        simulate_net: Option<PathBuf>,
        /// RTI address. Alone, serve the RTI there; with --federate, join it.
        #[arg(long, value_name = "ADDR")]
        rti: Option<String>,
        /// Run only this federate against the RTI given by --rti.
        #[arg(long, value_name = "NAME", requires = "rti")]
        federate: Option<String>,
        #[command(flatten)]
        exec: ExecArgs,
    },
    /// Compare two traces; exit 0 when equal, 3 when they differ.
    Compare { golden: PathBuf, candidate: PathBuf },
}

#[derive(Args, Debug)]
struct ExecArgs {
    /// Do not wait for physical time; the physical clock is virtual.
    #[arg(long)]
    fast: bool,
    /// Worker threads.
    #[arg(long, env = "RCL_WORKERS", default_value_t = 1)]
    workers: usize,
    /// Stop at this logical time, e.g. `100 ms`.
    #[arg(long, value_name = "DUR", value_parser = parse_duration)]
    timeout: Option<TimeValue>,
    /// Write the canonical trace here (a `.phys.jsonl` sidecar holds physical times).
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// JSON lines of scheduled injections and clock stalls.
    #[arg(long, value_name = "PATH")]
    clock_script: Option<PathBuf>,
    /// Seed for random sleeps before reactions.
    #[arg(long, value_name = "N")]
    jitter_seed: Option<u64>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum CoordinationArg {
    Centralized,
    Decentralized,
}

fn parse_duration(s: &str) -> Result<TimeValue, String> {
    s.parse::<TimeValue>().map_err(|e| e.to_string())
}

/// An error already reported to the user, carrying the exit code.
struct Exit(u8);

type Res<T> = Result<T, Exit>;

fn fail<T>(code: u8, message: impl std::fmt::Display) -> Res<T> {
    eprintln!("error: {message}");
    Err(Exit(code))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { USAGE } else { OK });
        }
    };
    let code = match dispatch(cli.command) {
        Ok(()) => OK,
        Err(Exit(c)) => c,
    };
    ExitCode::from(code)
}

fn dispatch(cmd: Command) -> Res<()> {
    match cmd {
        Command::Check { file } => check(&file),
        Command::Graph { file, dot } => graph(&file, dot),
        Command::Run { file, exec, golden, update_golden } => run(&file, &exec, golden.as_deref(), update_golden),
        Command::Federate { file, mode, simulate_net, rti, federate, exec } => {
            let mode = match mode {
                CoordinationArg::Centralized => Coordination::Centralized,
                CoordinationArg::Decentralized => Coordination::Decentralized,
            };
            federate_cmd(&file, mode, simulate_net.as_deref(), rti.as_deref(), federate.as_deref(), &exec)
        }
        Command::Compare { golden, candidate } => compare_cmd(&golden, &candidate),
    }
}

fn read(path: &Path) -> Res<String> {
    fs::read_to_string(path).or_else(|e| fail(DIAGNOSTICS, format!("cannot read `{}`: {e}", path.display())))
}

fn compile(path: &Path) -> Res<InstanceGraph> {
    let src = read(path)?;
    dsl::compile(&src).map_err(|d: Diagnostics| {
        eprintln!("{}", d.render(&path.display().to_string()).trim_end());
        Exit(DIAGNOSTICS)
    })
}

fn plan(ig: InstanceGraph) -> Res<Plan> {
    Plan::new(ig).or_else(|e| fail(DIAGNOSTICS, e))
}

fn check(file: &Path) -> Res<()> {
    let ig = compile(file)?;
    let g = build_graph(&ig);
    let cycles = detect_cycles(&g);
    if !cycles.is_empty() {
        for c in &cycles {
            eprintln!("error: causality cycle: {}", c.join(" -> "));
        }
        return Err(Exit(DIAGNOSTICS));
    }
    let levels = assign_levels(&g).or_else(|e| fail(DIAGNOSTICS, e))?;
    println!(
        "{}: ok ({} reactors, {} reactions, {} levels{})",
        file.display(),
        ig.reactors.len(),
        ig.reactions.len(),
        levels.iter().max().map_or(0, |m| m + 1),
        if ig.federated { format!(", {} federates", ig.federates.len()) } else { String::new() }
    );
    Ok(())
}

fn graph(file: &Path, dot: bool) -> Res<()> {
    let ig = compile(file)?;
    let g = build_graph(&ig);
    let levels = assign_levels(&g).ok();
    if dot {
        print!("{}", to_dot(&ig, &g, levels.as_ref()));
        return Ok(());
    }
    for (r, name) in g.names.iter().enumerate() {
        let level = levels.as_ref().map_or("?".to_string(), |l| l[r].to_string());
        let next: Vec<&str> = g.successors(r).iter().map(|&s| g.names[s].as_str()).collect();
        if next.is_empty() {
            println!("{name} level={level}");
        } else {
            println!("{name} level={level} -> {}", next.join(", "));
        }
    }
    if levels.is_none() {
        for c in detect_cycles(&g) {
            eprintln!("error: causality cycle: {}", c.join(" -> "));
        }
        return Err(Exit(DIAGNOSTICS));
    }
    Ok(())
}

fn config(exec: &ExecArgs) -> Res<RunConfig> {
    let mut cfg = RunConfig {
        mode: if exec.fast { Mode::Fast } else { Mode::Realtime },
        workers: exec.workers.max(1),
        timeout: exec.timeout,
        jitter_seed: exec.jitter_seed,
        ..RunConfig::default()
    };
    if let Some(path) = &exec.clock_script {
        let text = read(path)?;
        cfg.clock_script = clock_script::parse(&text).or_else(|e| fail(DIAGNOSTICS, format!("{}: {e}", path.display())))?;
    }
    Ok(cfg)
}

fn emit(trace: &Trace, phys: &[PhysRecord], path: Option<&Path>) -> Res<()> {
    match path {
        Some(p) => {
            trace.write(p).or_else(|e| fail(RUNTIME, format!("cannot write `{}`: {e}", p.display())))?;
            let side = sidecar_path(p);
            fs::write(&side, phys_text(phys)).or_else(|e| fail(RUNTIME, format!("cannot write `{}`: {e}", side.display())))
        }
        None => {
            let mut out = io::stdout().lock();
            out.write_all(trace.to_text().as_bytes()).or_else(|e| fail(RUNTIME, e))
        }
    }
}

fn against_golden(trace: &Trace, golden: &Path, update: bool) -> Res<()> {
    if update {
        return trace.write(golden).or_else(|e| fail(RUNTIME, format!("cannot write `{}`: {e}", golden.display())));
    }
    let g = Trace::read(golden).or_else(|e| fail(DIAGNOSTICS, format!("{}: {e}", golden.display())))?;
    match compare(&g, trace) {
        Comparison::Equal => Ok(()),
        c => fail(DIVERGENT, c),
    }
}

fn run(file: &Path, exec: &ExecArgs, golden: Option<&Path>, update: bool) -> Res<()> {
    let ig = compile(file)?;
    let cfg = config(exec)?;
    let result = runtime::run(ig, cfg, Callbacks::new()).or_else(|e| fail(DIAGNOSTICS, e))?;
    emit(&result.trace, &result.phys, exec.trace.as_deref())?;
    if let Some(e) = result.error {
        return fail(RUNTIME, e);
    }
    if let Some(g) = golden {
        against_golden(&result.trace, g, update)?;
    }
    Ok(())
}

fn report(run: &FederationRun) {
    let faults: Vec<String> = run
        .messages
        .iter()
        .filter_map(|m| match m.delivery {
            Delivery::Fault { lateness } => Some(format!("{} at {} (late by {lateness})", m.connection, m.tag)),
            _ => None,
        })
        .collect();
    eprintln!("{} messages, {} stp faults", run.messages.len(), faults.len());
    for f in faults {
        eprintln!("  fault: {f}");
    }
    if let Some(stop) = run.stop {
        eprintln!("stopped at {stop}");
    }
}

fn federate_cmd(
    file: &Path,
    mode: Coordination,
    net: Option<&Path>,
    rti: Option<&str>,
    federate: Option<&str>,
    exec: &ExecArgs,
) -> Res<()> {
    let ig = compile(file)?;
    let part = partition(&ig).or_else(|e| fail(DIAGNOSTICS, e))?;
    let plan = Arc::new(plan(ig)?);
    let cfg = config(exec)?;
    let callbacks = Arc::new(Callbacks::new());

    if let Some(addr) = rti {
        if !matches!(mode, Coordination::Centralized) {
            return fail(USAGE, "--rti needs --mode centralized");
        }
        let Some(name) = federate else {
            let listener = TcpListener::bind(addr).or_else(|e| fail(RUNTIME, format!("cannot listen on {addr}: {e}")))?;
            eprintln!("RTI listening on {addr} for {} federates", part.len());
            let r = serve_rti(listener, &part).or_else(|e| fail(RUNTIME, e))?;
            if let Some(stop) = r.stop {
                eprintln!("federation stopped at {stop}");
            }
            return Ok(());
        };
        let index = part.index_of(name).map_or_else(|| fail(USAGE, format!("no federate named `{name}`")), Ok)?;
        let out = run_federate(addr, &plan, index, callbacks, &cfg).or_else(|e| fail(RUNTIME, e))?;
        let trace = canonicalize(plan.header(&cfg), out.records);
        return emit(&trace, &out.phys, exec.trace.as_deref());
    }
    if federate.is_some() {
        return fail(USAGE, "--federate needs --rti");
    }

    let run = match (net, mode) {
        (Some(path), _) => {
            let latency = LatencyScript::parse(&read(path)?).or_else(|e| fail(DIAGNOSTICS, e))?;
            simulate(&plan, callbacks, &cfg, latency, mode)
        }
        (None, Coordination::Centralized) => launch(&plan, callbacks, &cfg),
        (None, Coordination::Decentralized) => simulate(&plan, callbacks, &cfg, LatencyScript::new(), mode),
    }
    .or_else(|e| fail(DIAGNOSTICS, e))?;
    emit(&run.trace, &run.phys, exec.trace.as_deref())?;
    report(&run);
    match run.error {
        Some(e) => fail(RUNTIME, e),
        None => Ok(()),
    }
}

fn compare_cmd(golden: &Path, candidate: &Path) -> Res<()> {
    let load = |p: &Path| Trace::read(p).or_else(|e| fail(DIAGNOSTICS, format!("{}: {e}", p.display())));
    let (g, c) = (load(golden)?, load(candidate)?);
    match compare(&g, &c) {
        Comparison::Equal => {
            println!("equal ({} records)", g.records.len());
            Ok(())
        }
        c @ Comparison::HeaderMismatch { .. } => fail(DIVERGENT, format!("different programs: {c}")),
        c => fail(DIVERGENT, c),
    }
}

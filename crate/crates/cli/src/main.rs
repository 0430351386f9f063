use std::fs;
use std::io::BufWriter;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};

use pdexflow::absint::Policy;
use pdexflow::analysis::{emit_json, run_analysis, AnalysisConfig};
use pdexflow::concrete::{evaluate, write_trace};
use pdexflow::ir::{parse_program, validate, Program};
use pdexflow::pds::emit_dot_all;

#[derive(Parser)]
#[command(name = "pdexflow", version, about = "Pushdown exception-flow analysis")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize the Dyck state graph of a program and report metrics.
    Analyze(Analyze),
}

#[derive(clap::Args)]
struct Analyze {
    /// Program in S-expression form.
    file: PathBuf,
    /// Entry method as Class.method; repeat to merge several entries.
    #[arg(long = "entry", value_name = "CLASS.METHOD")]
    entries: Vec<String>,
    /// 0cfa, 1cfa or kcfa:K.
    #[arg(long, default_value = "0cfa")]
    policy: Policy,
    /// Collect unreachable store bindings before each transition.
    #[arg(long)]
    gc: bool,
    /// Restrict collection roots to live registers. Implies --gc.
    #[arg(long)]
    lra: bool,
    /// Share a single store across all states.
    #[arg(long, conflicts_with_all = ["gc", "lra"])]
    widen_store: bool,
    #[arg(long, value_name = "N", default_value_t = 1_000_000)]
    node_budget: usize,
    #[arg(long, value_name = "SECONDS")]
    time_budget: Option<f64>,
    /// Write the JSON report here instead of standard output.
    #[arg(long, value_name = "PATH")]
    json: Option<PathBuf>,
    /// Write the graph in DOT syntax.
    #[arg(long, value_name = "PATH")]
    dot: Option<PathBuf>,
    /// Write a concrete execution trace of each entry as JSON lines.
    #[arg(long, value_name = "PATH")]
    trace: Option<PathBuf>,
    /// Step limit for --trace.
    #[arg(long, default_value_t = 10_000)]
    fuel: usize,
}

/// Failures that are the caller's fault: bad input or arguments.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn load(path: &PathBuf) -> Result<Program> {
    let text = fs::read_to_string(path).map_err(|e| Usage(format!("cannot read {}: {e}", path.display())))?;
    let name = path.display();
    let program = parse_program(&text).map_err(|e| Usage(format!("{name}:{e}")))?;
    let diags = validate(&program);
    if !diags.is_empty() {
        let lines: Vec<String> = diags.iter().map(|d| format!("{name}:{d}")).collect();
        return Err(Usage(lines.join("\n")).into());
    }
    Ok(program)
}

fn analyze(args: Analyze) -> Result<ExitCode> {
    let program = load(&args.file)?;
    let time_budget = match args.time_budget {
        Some(s) if !(s.is_finite() && s >= 0.0) => {
            return Err(Usage(format!("invalid time budget {s}")).into())
        }
        s => s.map(Duration::from_secs_f64),
    };
    let cfg = AnalysisConfig {
        entries: if args.entries.is_empty() {
            AnalysisConfig::default().entries
        } else {
            args.entries
        },
        policy: args.policy,
        gc: args.gc || args.lra,
        lra: args.lra,
        widen_store: args.widen_store,
        node_budget: args.node_budget,
        time_budget,
    };
    let analysis = run_analysis(&program, &cfg).map_err(|e| Usage(e.to_string()))?;
    let json = emit_json(&analysis.report);
    match &args.json {
        Some(path) => fs::write(path, &json).with_context(|| format!("cannot write {}", path.display()))?,
        None => print!("{json}"),
    }
    if let Some(path) = &args.dot {
        let graphs: Vec<(String, &_)> = analysis.graphs.iter().map(|(n, g)| (n.clone(), g)).collect();
        fs::write(path, emit_dot_all(&program, &graphs))
            .with_context(|| format!("cannot write {}", path.display()))?;
    }
    if let Some(path) = &args.trace {
        let file = fs::File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        let mut out = BufWriter::new(file);
        for entry in &cfg.entries {
            let m = program.find_method(entry)?;
            write_trace(&program, &evaluate(&program, m, args.fuel), &mut out)?;
        }
    }
    if analysis.report.incomplete {
        eprintln!("warning: budget exhausted, report is partial");
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Analyze(args) => analyze(args),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<Usage>() => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(3)
        }
    }
}

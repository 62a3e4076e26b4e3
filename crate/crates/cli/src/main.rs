use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use mgk::report::render_table;
use mgk::{calibrate, calibrate_csv, emit_report, load_report, run_benchmark, summarize, table_from_report, HarnessError, ReportFile, RunConfig};
use mgk_core::nav::{build_graph, enumerate_paths, validate_spec, NavSpec};
use mgk_core::script::AgentKind;
use mgk_core::task::{lint_pack, load_pack};
use mgk_pool::{default_addr, serve, Pool, PoolConfig};

#[derive(Parser)]
#[command(name = "mgk", version, about = "Simulated mobile GUI benchmark kernel")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Navigation spec tools.
    #[command(subcommand)]
    Nav(NavCmd),
    /// Task pack tools.
    #[command(subcommand)]
    Task(TaskCmd),
    /// Serve an environment pool over TCP.
    Serve(ServeArgs),
    /// Run or re-render benchmarks.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Assign difficulty strata from a task,sr,pr table or a report.
    Calibrate(CalibrateArgs),
}

#[derive(Subcommand)]
enum NavCmd {
    /// Parse a spec and report dead transitions and unreachable states.
    Validate { file: PathBuf },
    /// Print the transition graph, as DOT with `--dot`.
    Graph {
        file: PathBuf,
        #[arg(long)]
        dot: bool,
    },
    /// Transition sequences from the initial state to a goal, shortest first.
    Paths {
        file: PathBuf,
        #[arg(long)]
        goal: String,
        #[arg(long, default_value_t = 8)]
        max_len: usize,
    },
}

#[derive(Subcommand)]
enum TaskCmd {
    /// Check a pack for schema, split and template problems.
    Lint { pack: PathBuf },
    /// Instantiate one template.
    Instantiate {
        id: String,
        #[arg(long, default_value = "packs/sample")]
        pack: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Print the full instance, initial snapshot included.
        #[arg(long)]
        dump: bool,
    },
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long = "packs", num_args = 1.., required = true)]
    packs: Vec<PathBuf>,
    #[arg(long)]
    max_instances: Option<usize>,
    /// TOML pool config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Bind address; defaults to MGK_POOL_ADDR or 127.0.0.1:7878.
    #[arg(long)]
    addr: Option<String>,
}

#[derive(Subcommand)]
enum BenchCmd {
    Run(RunArgs),
    /// Re-render a saved report.
    Report(ReportArgs),
}

#[derive(Args)]
struct OutputFlags {
    /// Also write summary.csv and rows.csv.
    #[arg(long)]
    csv: bool,
    #[arg(long)]
    per_stratum: bool,
    #[arg(long)]
    per_tag: bool,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run config; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "packs", num_args = 1..)]
    packs: Vec<PathBuf>,
    #[arg(long, value_parser = parse_agent)]
    agent: Option<AgentKind>,
    #[arg(long)]
    seeds: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Comma-separated template ids.
    #[arg(long, value_delimiter = ',')]
    templates: Vec<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    strata: Option<PathBuf>,
    /// Use the pool server at MGK_POOL_ADDR (or `--addr`) instead of an
    /// embedded pool.
    #[arg(long)]
    remote: bool,
    #[arg(long)]
    addr: Option<String>,
    #[command(flatten)]
    output: OutputFlags,
}

#[derive(Args)]
struct ReportArgs {
    report: PathBuf,
    /// Directory for CSV output; defaults to the report's directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    output: OutputFlags,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV with header task,sr,pr, or a report.json.
    table: PathBuf,
    #[arg(long, default_value = "strata.json")]
    out: PathBuf,
}

fn parse_agent(s: &str) -> Result<AgentKind, String> {
    AgentKind::parse(s).ok_or_else(|| {
        let names: Vec<&str> = AgentKind::ALL.iter().map(|k| k.label()).collect();
        format!("unknown agent {s}; one of {}", names.join(", "))
    })
}

/// Exit status: 0 clean, 1 findings reported, 2 harness failure.
enum Outcome {
    Clean,
    Findings,
}

fn read_spec(file: &Path) -> Result<NavSpec, HarnessError> {
    let text = std::fs::read_to_string(file)?;
    NavSpec::parse_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", file.display())))
}

fn nav(cmd: NavCmd) -> Result<Outcome, HarnessError> {
    match cmd {
        NavCmd::Validate { file } => {
            let findings = validate_spec(&read_spec(&file)?);
            for f in &findings {
                println!("{}", serde_json::to_string(f).expect("findings serialize"));
            }
            if findings.is_empty() {
                println!("ok");
                return Ok(Outcome::Clean);
            }
            Ok(Outcome::Findings)
        }
        NavCmd::Graph { file, dot } => {
            let g = build_graph(&read_spec(&file)?);
            if dot {
                print!("{}", g.to_dot());
            } else {
                for (from, edges) in g.adjacency().iter().enumerate() {
                    for (t, to) in edges {
                        println!("{} -[{t}]-> {}", g.states[from], g.states[*to]);
                    }
                }
            }
            Ok(Outcome::Clean)
        }
        NavCmd::Paths { file, goal, max_len } => {
            let paths = enumerate_paths(&read_spec(&file)?, &goal, max_len).map_err(|e| HarnessError::Config(e.to_string()))?;
            for p in &paths {
                println!("{}", p.join(" "));
            }
            Ok(if paths.is_empty() { Outcome::Findings } else { Outcome::Clean })
        }
    }
}

fn task(cmd: TaskCmd) -> Result<Outcome, HarnessError> {
    match cmd {
        TaskCmd::Lint { pack } => {
            let findings = lint_pack(&pack);
            for f in &findings {
                println!("{f}");
            }
            if findings.is_empty() {
                println!("ok");
                return Ok(Outcome::Clean);
            }
            Ok(Outcome::Findings)
        }
        TaskCmd::Instantiate { id, pack, seed, dump } => {
            let p = load_pack(&pack).map_err(|e| HarnessError::PackInvalid(e.to_string()))?;
            let inst = p.instantiate(&id, seed).map_err(|e| HarnessError::PackInvalid(e.to_string()))?;
            if dump {
                println!("{}", serde_json::to_string_pretty(&inst.to_json(true)).expect("instances serialize"));
            } else {
                println!("{}", inst.instruction);
                println!("budget: {} steps", inst.step_budget);
            }
            Ok(Outcome::Clean)
        }
    }
}

fn serve_cmd(args: ServeArgs) -> Result<Outcome, HarnessError> {
    let mut config = match &args.config {
        Some(p) => PoolConfig::from_toml(&std::fs::read_to_string(p)?)?,
        None => PoolConfig::default(),
    };
    if let Some(n) = args.max_instances {
        config.max_instances = n;
    }
    let pool = Arc::new(Pool::load(&args.packs, config)?);
    let addr = args.addr.unwrap_or_else(default_addr);
    let handle = serve(pool, &addr)?;
    eprintln!("serving on {}", handle.local_addr());
    handle.wait();
    Ok(Outcome::Clean)
}

fn run_cmd(args: RunArgs) -> Result<Outcome, HarnessError> {
    let mut cfg = match &args.config {
        Some(p) => RunConfig::from_json_file(p)?,
        None => {
            let agent = args.agent.ok_or_else(|| HarnessError::Config("--agent is required without --config".into()))?;
            RunConfig::new(Vec::new(), agent)
        }
    };
    if !args.packs.is_empty() {
        cfg.packs = args.packs;
    }
    if cfg.packs.is_empty() {
        cfg.packs.push(PathBuf::from("packs/sample"));
    }
    if let Some(a) = args.agent {
        cfg.agent = a;
    }
    if let Some(s) = args.seeds {
        cfg.seeds = s;
    }
    if let Some(p) = args.parallelism {
        cfg.parallelism = p;
    }
    if !args.templates.is_empty() {
        cfg.templates = args.templates;
    }
    if args.out.is_some() {
        cfg.out_dir = args.out;
    }
    if args.strata.is_some() {
        cfg.strata = args.strata;
    }
    if args.remote || args.addr.is_some() {
        cfg.remote = Some(args.addr.unwrap_or_else(default_addr));
    }
    let report = run_benchmark(&cfg)?;
    let file = ReportFile::new(cfg.agent, cfg.seeds, report);
    let out = cfg.out_dir.clone().unwrap_or_else(|| PathBuf::from("bench_out"));
    let o = &args.output;
    for p in emit_report(&file, &out, o.csv, o.per_stratum, o.per_tag)? {
        eprintln!("wrote {}", p.display());
    }
    print!("{}", render_table(&summarize(&file.report, o.per_stratum, o.per_tag)));
    Ok(Outcome::Clean)
}

fn report_cmd(args: ReportArgs) -> Result<Outcome, HarnessError> {
    let file = load_report(&args.report)?;
    let o = &args.output;
    if o.csv {
        let out = args.out.unwrap_or_else(|| args.report.parent().map(Path::to_path_buf).unwrap_or_default());
        for p in emit_report(&file, &out, true, o.per_stratum, o.per_tag)? {
            eprintln!("wrote {}", p.display());
        }
    }
    print!("{}", render_table(&summarize(&file.report, o.per_stratum, o.per_tag)));
    Ok(Outcome::Clean)
}

fn calibrate_cmd(args: CalibrateArgs) -> Result<Outcome, HarnessError> {
    let c = if args.table.extension().is_some_and(|e| e == "json") {
        calibrate(&table_from_report(&load_report(&args.table)?.report))?
    } else {
        calibrate_csv(std::fs::File::open(&args.table)?)?
    };
    std::fs::write(&args.out, serde_json::to_vec_pretty(&c).expect("labels serialize"))?;
    for (level, n) in &c.counts {
        println!("{}\t{n}", level.label());
    }
    Ok(Outcome::Clean)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Nav(c) => nav(c),
        Cmd::Task(c) => task(c),
        Cmd::Serve(a) => serve_cmd(a),
        Cmd::Bench(BenchCmd::Run(a)) => run_cmd(a),
        Cmd::Bench(BenchCmd::Report(a)) => report_cmd(a),
        Cmd::Calibrate(a) => calibrate_cmd(a),
    };
    match result {
        Ok(Outcome::Clean) => ExitCode::SUCCESS,
        Ok(Outcome::Findings) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

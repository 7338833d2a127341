//! `adn-agent`: service, one-shot requests, benchmark sweeps, the
//! instruction dataset pipeline and direct access to the solvers.
//!
//! Exit codes: 0 success, 1 usage, 2 configuration or input, 3 a sweep or
//! request finished with failures (or there was nothing to score).

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use adn_core::bench::{self, ReportFormat, RunSet};
use adn_core::datastore::{parse_date, Datastore, DistrictProfile};
use adn_core::dsm::{parse_instruction, workers, AdjustMode, DsmRegistry};
use adn_core::llm::{ChatBackend, Gateway};
use adn_core::orchestrator::{Orchestrator, WorkspaceStatus};
use adn_core::pipeline::{self, InstructionAnswerPair};
use adn_grid::{apply_adjustment, parse_case, serialize_case, GridCase, Objective};
use clap::{Args, Parser, Subcommand};
use thiserror::Error;

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Failures(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Config(_) => 2,
            CliError::Failures(_) => 3,
        }
    }
}

fn config(e: impl std::fmt::Display) -> CliError {
    CliError::Config(e.to_string())
}

type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser, Debug)]
#[command(name = "adn-agent", version, about = "Active distribution network operation agent")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args, Debug)]
struct Global {
    /// Data directory holding districts.toml, cases and profiles.
    #[arg(long, global = true, default_value = "data")]
    data: PathBuf,
    /// Gateway configuration (defaults to <data>/config/gateway.toml).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Serve the planner, translator and summarizer roles from this backend.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// Comma-separated seeds.
    #[arg(long, global = true, value_delimiter = ',', default_value = "1,2,3")]
    seeds: Vec<u64>,
    /// Concurrent runs in a sweep.
    #[arg(long, global = true, default_value_t = 1)]
    parallelism: usize,
    /// Output file or directory, depending on the command.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Answer one operation request and print the answer.
    Ask { text: String },
    /// Benchmark sweeps and scoring.
    #[command(subcommand)]
    Bench(BenchCmd),
    /// Instruction-answer dataset pipeline.
    #[command(subcommand)]
    Pairs(PairsCmd),
    /// Power flow on a case or district.
    Pf(SolveArgs),
    /// Dispatch optimization on a case or district.
    Opt {
        #[command(flatten)]
        target: SolveArgs,
        #[arg(long, default_value = "min_cost")]
        objective: String,
    },
    /// Case file operations.
    #[command(subcommand)]
    Case(CaseCmd),
}

#[derive(Subcommand, Debug)]
enum BenchCmd {
    /// Run every case once per seed and write runs, logs and reports.
    Run {
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value = "ADN-Agent")]
        method: String,
    },
    /// Score a saved run set.
    Score {
        runs: PathBuf,
        #[arg(long)]
        suite: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: String,
        #[arg(long, default_value = "ADN-Agent")]
        method: String,
    },
}

#[derive(Subcommand, Debug)]
enum PairsCmd {
    /// Generate pairs from every template.
    Gen {
        #[arg(long)]
        templates: Option<PathBuf>,
        #[arg(long, default_value = "valley")]
        district: String,
        /// Pairs per template.
        #[arg(long, default_value_t = 20)]
        count: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Skip the generator backend and use augmentation only.
        #[arg(long)]
        offline: bool,
    },
    /// Run the three verification stages on a pair file.
    Verify { pairs: PathBuf },
    /// Write the dataset and trainer manifest from verified pairs.
    Emit { pairs: PathBuf },
    /// Print a seeded sample for manual review.
    Inspect {
        pairs: PathBuf,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Subcommand, Debug)]
enum CaseCmd {
    /// Apply an adjustment instruction with the deterministic oracle.
    Adjust { case: PathBuf, instruction: String },
}

#[derive(Args, Debug)]
struct SolveArgs {
    /// Case file; alternatively give --district.
    #[arg(long)]
    case: Option<PathBuf>,
    #[arg(long)]
    district: Option<String>,
    /// Profile date (requires --district).
    #[arg(long)]
    date: Option<String>,
    #[arg(long)]
    hour: Option<usize>,
}

struct Env {
    global: Global,
}

impl Env {
    fn datastore(&self) -> Result<Arc<Datastore>> {
        let path = self.global.data.join("districts.toml");
        Datastore::open(&path).map(Arc::new).map_err(config)
    }

    fn gateway(&self) -> Result<Gateway> {
        let path = self
            .global
            .config
            .clone()
            .unwrap_or_else(|| self.global.data.join("config/gateway.toml"));
        Gateway::load(&path).map_err(config)
    }

    fn orchestrator(&self) -> Result<Orchestrator> {
        let ds = self.datastore()?;
        let gw = self.gateway()?;
        let adjust = match gw.role("slm") {
            Some(b) => AdjustMode::Slm(b),
            None => AdjustMode::Oracle,
        };
        let registry = Arc::new(DsmRegistry::standard(ds.clone(), adjust));
        match &self.global.backend {
            Some(name) => {
                let b: Arc<dyn ChatBackend> = gw
                    .backend(name)
                    .ok_or_else(|| config(format!("unknown backend `{name}`")))?;
                Ok(Orchestrator::new(registry, ds, b.clone(), b.clone(), b))
            }
            None => Orchestrator::from_gateway(registry, ds, &gw).map_err(config),
        }
    }

    fn out_dir(&self, default: &str) -> PathBuf {
        self.global.out.clone().unwrap_or_else(|| PathBuf::from(default))
    }

    fn suite(&self, suite: &Option<PathBuf>) -> Result<Vec<bench::BenchmarkCase>> {
        let path = suite
            .clone()
            .unwrap_or_else(|| self.global.data.join("bench/benchmark.json"));
        bench::load_benchmark(&path).map_err(config)
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(config)?;
    }
    std::fs::write(path, text).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn read_pairs(path: &Path) -> Result<Vec<InstructionAnswerPair>> {
    serde_json::from_str(&read(path)?).map_err(|e| config(format!("{}: {e}", path.display())))
}

fn write_pairs(path: &Path, pairs: &[InstructionAnswerPair]) -> Result<()> {
    write(path, &serde_json::to_string_pretty(pairs).expect("pairs serialize"))
}

fn serve(env: &Env, addr: &str) -> Result<()> {
    let orch = Arc::new(env.orchestrator()?);
    let rt = tokio::runtime::Runtime::new().map_err(config)?;
    rt.block_on(adn_server::serve(addr, orch)).map_err(config)
}

fn ask(env: &Env, text: &str) -> Result<()> {
    let mut orch = env.orchestrator()?;
    if let Some(dir) = &env.global.out {
        orch = orch.with_run_dir(dir).map_err(config)?;
    }
    let seed = env.global.seeds.first().copied().unwrap_or(1);
    let ws = orch
        .handle_request(text, seed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if let Some(a) = &ws.answer {
        println!("{}", a.text);
    }
    println!("status: {}", ws.status.as_str());
    match ws.status {
        WorkspaceStatus::Completed => Ok(()),
        _ => Err(CliError::Failures(
            ws.reason.unwrap_or_else(|| "request did not complete".into()),
        )),
    }
}

fn bench_run(env: &Env, suite: &Option<PathBuf>, method: &str) -> Result<()> {
    let cases = env.suite(suite)?;
    let counts = bench::category_counts(&cases);
    eprintln!("{} cases {:?}", cases.len(), counts);
    let out = env.out_dir("runs");
    let orch = env.orchestrator()?.with_run_dir(out.join("logs")).map_err(config)?;
    let runs = bench::run_benchmark(&orch, &cases, &env.global.seeds, env.global.parallelism);
    runs.save(&out).map_err(config)?;
    let report = bench::score(method, &runs, &cases);
    for (name, format) in [
        ("report.txt", ReportFormat::Text),
        ("report.json", ReportFormat::Json),
        ("report.md", ReportFormat::Markdown),
    ] {
        write(&out.join(name), &bench::render_report(&report, format))?;
    }
    print!("{}", bench::render_report(&report, ReportFormat::Text));
    if report.is_empty() {
        return Err(CliError::Failures("no runs to score".into()));
    }
    if runs.had_failures() {
        let n = runs.runs.iter().filter(|r| !r.completed()).count();
        return Err(CliError::Failures(format!("{n} run(s) did not complete")));
    }
    Ok(())
}

fn bench_score(env: &Env, runs: &Path, suite: &Option<PathBuf>, format: &str, method: &str) -> Result<()> {
    let format: ReportFormat = format.parse().map_err(CliError::Usage)?;
    let cases = env.suite(suite)?;
    let runs = RunSet::load(runs).map_err(config)?;
    let report = bench::score(method, &runs, &cases);
    let text = bench::render_report(&report, format);
    match &env.global.out {
        Some(path) => write(path, &text)?,
        None => print!("{text}"),
    }
    if report.is_empty() {
        return Err(CliError::Failures("no runs to score".into()));
    }
    Ok(())
}

fn pairs_cmd(env: &Env, cmd: &PairsCmd) -> Result<()> {
    match cmd {
        PairsCmd::Gen {
            templates,
            district,
            count,
            seed,
            offline,
        } => {
            let path = templates
                .clone()
                .unwrap_or_else(|| env.global.data.join("pipeline/templates.json"));
            let templates = pipeline::load_templates(&path).map_err(config)?;
            let case = env.datastore()?.get_model(district).map_err(config)?;
            let generator = if *offline {
                None
            } else {
                env.gateway()?.role("generator")
            };
            let mut pairs = Vec::new();
            let mut warnings = 0;
            for (k, t) in templates.iter().enumerate() {
                let g = pipeline::generate_pairs(t, &case, *count, generator.as_deref(), seed + k as u64);
                warnings += g.warnings;
                pairs.extend(g.pairs);
            }
            write_pairs(&env.out_dir("pairs.json"), &pairs)?;
            println!("generated {} pairs, {warnings} warning(s)", pairs.len());
            Ok(())
        }
        PairsCmd::Verify { pairs } => {
            let mut list = read_pairs(pairs)?;
            let gw = env.gateway()?;
            let judge = gw
                .role("verifier")
                .ok_or_else(|| config("no verifier backend configured"))?;
            let mut passed = 0;
            for p in &mut list {
                passed += usize::from(pipeline::verify_pair(p, judge.as_ref()));
            }
            write_pairs(&env.out_dir("verified.json"), &list)?;
            println!("{passed} of {} pairs passed", list.len());
            for stage in [pipeline::Stage::Regex, pipeline::Stage::Rule, pipeline::Stage::Llm] {
                let n = list.iter().filter(|p| p.rejected_at() == Some(stage)).count();
                println!("rejected at {}: {n}", stage.as_str());
            }
            Ok(())
        }
        PairsCmd::Emit { pairs } => {
            let list = read_pairs(pairs)?;
            let dir = env.out_dir("dataset");
            let m = pipeline::emit_dataset(&list, &dir).map_err(config)?;
            println!(
                "emitted {} of {} pairs to {}",
                m.emitted,
                m.total_pairs,
                dir.join(pipeline::DATASET_FILE).display()
            );
            Ok(())
        }
        PairsCmd::Inspect { pairs, k, seed } => {
            print!("{}", pipeline::sample_for_inspection(&read_pairs(pairs)?, *k, *seed));
            Ok(())
        }
    }
}

/// Case, optional profile, hour and district label for `pf`/`opt`.
fn solve_target(env: &Env, a: &SolveArgs) -> Result<(GridCase, Option<DistrictProfile>, Option<usize>)> {
    let (case, district) = match (&a.case, &a.district) {
        (Some(path), None) => (parse_case(&read(path)?).map_err(config)?, None),
        (None, Some(d)) => {
            let ds = env.datastore()?;
            ((*ds.get_model(d).map_err(config)?).clone(), Some((ds, d.clone())))
        }
        _ => return Err(CliError::Usage("give exactly one of --case or --district".into())),
    };
    let profile = match (&a.date, district) {
        (None, _) => None,
        (Some(date), Some((ds, d))) => {
            let date = parse_date(date).map_err(|e| CliError::Usage(e.to_string()))?;
            Some((*ds.get_profile(&d, date).map_err(config)?).clone())
        }
        (Some(_), None) => return Err(CliError::Usage("--date needs --district".into())),
    };
    Ok((case, profile, a.hour))
}

fn pf(env: &Env, a: &SolveArgs) -> Result<()> {
    let (case, profile, hour) = solve_target(env, a)?;
    let sim = workers::simulate(&case, profile.as_ref(), hour).map_err(config)?;
    for s in &sim.steps {
        let vmin = s.vm.iter().copied().fold(f64::INFINITY, f64::min);
        let vmax = s.vm.iter().copied().fold(0.0, f64::max);
        println!(
            "step {:>2}: |V| {vmin:.4}-{vmax:.4} p.u., losses {:.4} MW, {} iteration(s)",
            s.step, s.losses_mw, s.iterations
        );
    }
    if let Some(path) = &env.global.out {
        write(path, &serde_json::to_string_pretty(&sim).expect("payload serializes"))?;
    }
    Ok(())
}

fn opt(env: &Env, a: &SolveArgs, objective: &str) -> Result<()> {
    let objective = Objective::parse(objective)
        .ok_or_else(|| CliError::Usage(format!("unknown objective `{objective}` (min_cost, min_voltage_deviation, min_power_loss)")))?;
    let (case, profile, hour) = solve_target(env, a)?;
    let d = workers::optimize(&case, profile.as_ref(), hour, objective).map_err(config)?;
    let s = &d.strategy;
    println!(
        "{}: {:.6} {} (feasible: {}, {} step(s))",
        s.objective.as_str(),
        s.objective_value,
        s.unit,
        s.feasible,
        d.steps.len()
    );
    if let Some(path) = &env.global.out {
        write(path, &serde_json::to_string_pretty(&d).expect("payload serializes"))?;
    }
    Ok(())
}

fn case_adjust(env: &Env, path: &Path, instruction: &str) -> Result<()> {
    let case = parse_case(&read(path)?).map_err(config)?;
    let req = parse_instruction(instruction).map_err(|e| CliError::Usage(e.to_string()))?;
    let adjusted = apply_adjustment(&case, &req).map_err(|e| CliError::Usage(e.to_string()))?;
    let text = serialize_case(&adjusted);
    match &env.global.out {
        Some(out) => write(out, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let env = Env { global: cli.global };
    if env.global.parallelism == 0 {
        return Err(CliError::Usage("--parallelism must be at least 1".into()));
    }
    match &cli.command {
        Cmd::Serve { addr } => serve(&env, addr),
        Cmd::Ask { text } => ask(&env, text),
        Cmd::Bench(BenchCmd::Run { suite, method }) => bench_run(&env, suite, method),
        Cmd::Bench(BenchCmd::Score {
            runs,
            suite,
            format,
            method,
        }) => bench_score(&env, runs, suite, format, method),
        Cmd::Pairs(p) => pairs_cmd(&env, p),
        Cmd::Pf(a) => pf(&env, a),
        Cmd::Opt { target, objective } => opt(&env, target, objective),
        Cmd::Case(CaseCmd::Adjust { case, instruction }) => case_adjust(&env, case, instruction),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code())
        }
    }
}

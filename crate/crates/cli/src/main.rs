use std::fs;
use std::io::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use expcost::baselines::AnnealingConfig;
use expcost::eval::{compare_methods, run_method, EvalReport, EvalRow, GameGraph, Method, MethodParams};
use expcost::exact::{BRUTE_FORCE_CAP, DEFAULT_SIZE_CAP};
use expcost::game::BestReplyOrder;
use expcost::rng::derive_seed;
use expcost::scenarios::{gen_grid, generate_channel_scenario, grid_csv, ChannelSpec, GridSpec};
use expcost::ProblemInstance;

#[derive(Parser, Debug)]
#[command(name = "expcost", version, about = "Minimum expected-cost path planning")]
struct Cli {
    /// Root seed; every random component derives its own stream from it.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Output file (or directory for `generate channel`).
    #[arg(short, long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    format: Format,
    /// Leave wall-time columns empty so reruns are byte-identical.
    #[arg(long, global = true)]
    no_wall_time: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a generated instance.
    Generate {
        #[command(subcommand)]
        scenario: Scenario,
    },
    /// Solve one instance with one method.
    Solve {
        #[arg(short, long)]
        instance: PathBuf,
        #[command(flatten)]
        solver: SolverArgs,
    },
    /// Compare methods on one instance, scoring on a truth instance.
    Eval {
        #[arg(short, long)]
        instance: PathBuf,
        /// Instance with the true probabilities; defaults to the planning one.
        #[arg(long)]
        truth: Option<PathBuf>,
        #[command(flatten)]
        methods: MethodList,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 0)]
        realizations: usize,
    },
    /// Compare methods over a batch of generated instances.
    Bench {
        #[command(subcommand)]
        family: BenchFamily,
    },
}

#[derive(Subcommand, Debug)]
enum Scenario {
    Grid(GridArgs),
    Channel(ChannelArgs),
}

#[derive(Args, Debug, Clone)]
struct GridArgs {
    /// Grid side.
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    n: u64,
    /// Guaranteed-success corners.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(0..=4))]
    nt: u64,
}

#[derive(Args, Debug, Clone)]
struct ChannelArgs {
    /// Received power at 1 m in dBm.
    #[arg(long, allow_negative_numbers = true)]
    k0: Option<f64>,
    #[arg(long)]
    workspace: Option<f64>,
    #[arg(long)]
    measurement_fraction: Option<f64>,
    /// Scenario spec as JSON; flags override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
}

impl ChannelArgs {
    fn spec(&self, seed: u64) -> Result<ChannelSpec> {
        let mut spec = match &self.spec {
            Some(p) => serde_json::from_str(&fs::read_to_string(p)?)
                .with_context(|| format!("reading channel spec {}", p.display()))?,
            None => ChannelSpec::default(),
        };
        spec.seed = seed;
        if let Some(k0) = self.k0 {
            spec.k0_dbm = k0;
        }
        if let Some(w) = self.workspace {
            spec.workspace_m = w;
        }
        if let Some(f) = self.measurement_fraction {
            spec.measurement_fraction = f;
        }
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Subcommand, Debug)]
enum BenchFamily {
    Grid {
        /// Instances per size.
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[arg(long, value_delimiter = ',', default_value = "10")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 1)]
        nt: usize,
        #[command(flatten)]
        methods: MethodList,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 0)]
        realizations: usize,
    },
    Channel {
        #[arg(long, default_value_t = 100)]
        count: usize,
        #[command(flatten)]
        channel: ChannelArgs,
        #[command(flatten)]
        methods: MethodList,
        #[command(flatten)]
        params: ParamArgs,
        #[arg(long, default_value_t = 500)]
        realizations: usize,
    },
}

#[derive(Args, Debug, Clone)]
struct MethodList {
    /// Comma-separated methods.
    #[arg(short, long = "methods", value_delimiter = ',', required = true, num_args = 1..)]
    methods: Vec<String>,
}

impl MethodList {
    fn parse(&self) -> Result<Vec<Method>> {
        let methods: Vec<Method> = self
            .methods
            .iter()
            .filter(|s| !s.trim().is_empty())
            .map(|s| s.trim().parse::<Method>().map_err(anyhow::Error::msg))
            .collect::<Result<_>>()?;
        if methods.is_empty() {
            bail!("the method list is empty");
        }
        Ok(methods)
    }
}

#[derive(Args, Debug, Clone)]
struct SolverArgs {
    #[arg(short, long)]
    method: String,
    #[command(flatten)]
    params: ParamArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum GraphArg {
    Base,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OrderArg {
    Roundrobin,
    Random,
}

#[derive(Args, Debug, Clone)]
struct ParamArgs {
    /// Graph the game solvers play on.
    #[arg(long, value_enum, default_value_t = GraphArg::Base)]
    graph: GraphArg,
    #[arg(long, value_enum, default_value_t = OrderArg::Roundrobin)]
    order: OrderArg,
    #[arg(long, default_value_t = expcost::game::DEFAULT_EPS_PRIME)]
    eps_prime: f64,
    #[arg(long, default_value_t = 1.0)]
    tau0: f64,
    #[arg(long, default_value_t = 0.75)]
    tau_exponent: f64,
    /// Log-linear iterations, annealing moves or RTDP trials.
    #[arg(long, default_value_t = 100_000)]
    budget_iters: usize,
    /// Annealing cooling factor per level.
    #[arg(long, default_value_t = 0.995)]
    sa_cooling: f64,
    #[arg(long, default_value_t = 100)]
    sa_moves_per_level: usize,
    /// Annealing start temperature; derived from random states when absent.
    #[arg(long)]
    sa_t0: Option<f64>,
}

impl ParamArgs {
    fn params(&self) -> Result<MethodParams> {
        if !(self.sa_cooling > 0.0 && self.sa_cooling <= 1.0) {
            bail!("--sa-cooling must be in (0, 1]");
        }
        if self.sa_moves_per_level == 0 || self.sa_t0.is_some_and(|t| t <= 0.0) {
            bail!("annealing parameters must be positive");
        }
        if !(self.eps_prime > 0.0 && self.tau0 > 0.0 && self.tau_exponent >= 0.0) {
            bail!("--eps-prime and --tau0 must be positive, --tau-exponent nonnegative");
        }
        Ok(MethodParams {
            graph: match self.graph {
                GraphArg::Base => GameGraph::Base,
                GraphArg::Complete => GameGraph::Complete,
            },
            order: match self.order {
                OrderArg::Roundrobin => BestReplyOrder::RoundRobin,
                OrderArg::Random => BestReplyOrder::Random,
            },
            eps_prime: self.eps_prime,
            tau0: self.tau0,
            tau_exponent: self.tau_exponent,
            budget: self.budget_iters,
            annealing: AnnealingConfig {
                initial_temperature: self.sa_t0,
                cooling_rate: self.sa_cooling,
                moves_per_temperature: self.sa_moves_per_level,
                ..AnnealingConfig::default()
            },
            ..MethodParams::default()
        })
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(threads) = std::env::var("EXPCOST_THREADS").ok().and_then(|s| s.parse().ok()) {
        // a second initialization can only fail if something already built the pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Generate { scenario } => generate(cli, scenario),
        Command::Solve { instance, solver } => solve(cli, instance, solver),
        Command::Eval { instance, truth, methods, params, realizations } => {
            let planning = load(instance)?;
            let truth = match truth {
                Some(p) => load(p)?,
                None => planning.clone(),
            };
            if truth.node_count() != planning.node_count() {
                bail!("planning and truth instances have different node counts");
            }
            let id = instance.file_stem().and_then(|s| s.to_str()).unwrap_or("instance");
            let rows = compare_methods(
                &planning,
                &truth,
                &methods.parse()?,
                &params.params()?,
                *realizations,
                cli.seed,
                id,
            );
            let report = EvalReport { rows };
            emit_report(cli, &report, None)
        }
        Command::Bench { family } => bench(cli, family),
    }
}

fn load(path: &FsPath) -> Result<ProblemInstance> {
    ProblemInstance::load(path).with_context(|| format!("loading {}", path.display()))
}

fn write_output(cli: &Cli, text: &str) -> Result<()> {
    match &cli.out {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            std::io::stdout().write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn generate(cli: &Cli, scenario: &Scenario) -> Result<()> {
    match scenario {
        Scenario::Grid(args) => {
            let spec = GridSpec { n: args.n as usize, n_t: args.nt as usize, seed: cli.seed };
            let inst = gen_grid(&spec)?;
            let mut raw = inst.to_raw();
            raw.derived_from = Some("grid".into());
            let mut meta = serde_json::Map::new();
            meta.insert("spec".into(), serde_json::to_value(spec)?);
            raw.metadata = Some(meta);
            let text = serde_json::to_string_pretty(&raw)? + "\n";
            match &cli.out {
                Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
                None => print!("{text}"),
            }
            eprintln!(
                "grid n={} n_t={} seed={}: {} nodes, {} edges, start {}",
                spec.n,
                spec.n_t,
                spec.seed,
                inst.node_count(),
                inst.edge_count(),
                inst.start()
            );
            Ok(())
        }
        Scenario::Channel(args) => {
            let spec = args.spec(cli.seed)?;
            let dir = cli.out.clone().context("`generate channel` needs --out DIR")?;
            fs::create_dir_all(&dir)?;
            let sc = generate_channel_scenario(&spec)?;
            let side = spec.side();
            let instance_json = |inst: &ProblemInstance, kind: &str| -> Result<String> {
                let mut raw = inst.to_raw();
                raw.derived_from = Some(format!("channel_{kind}"));
                raw.metadata = Some(sc.metadata());
                Ok(serde_json::to_string_pretty(&raw)? + "\n")
            };
            fs::write(dir.join("spec.json"), serde_json::to_string_pretty(&spec)? + "\n")?;
            fs::write(dir.join("planning.json"), instance_json(&sc.planning, "planning")?)?;
            fs::write(dir.join("truth.json"), instance_json(&sc.truth, "truth")?)?;
            fs::write(dir.join("power_dbm.csv"), grid_csv(side, &sc.field.power_dbm))?;
            fs::write(dir.join("mean_power_dbm.csv"), grid_csv(side, &sc.field.mean_dbm))?;
            fs::write(dir.join("prob_map.csv"), grid_csv(side, &sc.prediction.prob))?;
            fs::write(dir.join("truth_prob.csv"), grid_csv(side, &sc.truth_prob))?;
            let measured: String = sc.measured.iter().map(|i| format!("{i}\n")).collect();
            fs::write(dir.join("measurements.csv"), format!("cell\n{measured}"))?;
            eprintln!(
                "channel seed={}: {}x{} cells, {} measurements, written to {}",
                spec.seed,
                side,
                side,
                sc.measured.len(),
                dir.display()
            );
            Ok(())
        }
    }
}

#[derive(Serialize)]
struct SolveRecord {
    method: String,
    cost: Option<f64>,
    path_len: usize,
    wall_time_s: Option<f64>,
    seed: u64,
    path: Vec<usize>,
}

fn solve(cli: &Cli, instance: &FsPath, solver: &SolverArgs) -> Result<()> {
    let inst = load(instance)?;
    let method: Method = solver.method.parse().map_err(anyhow::Error::msg)?;
    let params = solver.params.params()?;
    let m = inst.nonterminals().len();
    if method == Method::Exact && m > DEFAULT_SIZE_CAP {
        bail!(
            "exact value iteration is limited to {DEFAULT_SIZE_CAP} non-terminal nodes, this \
             instance has {m}; try `-m search` (exact best-first search) or `-m bestreply`"
        );
    }
    if method == Method::Brute && m > BRUTE_FORCE_CAP {
        bail!(
            "brute force is limited to {BRUTE_FORCE_CAP} non-terminal nodes, this instance has \
             {m}; try `-m exact` or `-m search`"
        );
    }
    let out = run_method(&inst, method, &params, cli.seed)?;
    let record = SolveRecord {
        method: method.to_string(),
        cost: out.cost.finite_value(),
        path_len: out.path.len(),
        wall_time_s: (!cli.no_wall_time).then_some(out.wall_time_s),
        seed: cli.seed,
        path: out.path.nodes().to_vec(),
    };
    match cli.format {
        Format::Json => println!("{}", serde_json::to_string(&record)?),
        Format::Csv => {
            println!("method,cost,path_len,wall_time_s,seed");
            println!(
                "{},{},{},{},{}",
                record.method,
                out.cost,
                record.path_len,
                record.wall_time_s.map(|t| t.to_string()).unwrap_or_default(),
                record.seed
            );
        }
    }
    if let Some(p) = &cli.out {
        fs::write(p, serde_json::to_string_pretty(&record)? + "\n")
            .with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn git_hash() -> String {
    std::process::Command::new("git")
        .args(["rev-parse", "--short", "HEAD"])
        .output()
        .ok()
        .filter(|o| o.status.success())
        .and_then(|o| String::from_utf8(o.stdout).ok())
        .map(|s| s.trim().to_string())
        .unwrap_or_else(|| "unknown".into())
}

fn emit_report(cli: &Cli, report: &EvalReport, header: Option<String>) -> Result<()> {
    let wall = !cli.no_wall_time;
    let text = match cli.format {
        Format::Csv => header.unwrap_or_default() + &report.to_csv(wall),
        Format::Json => serde_json::to_string_pretty(&report.to_json(wall))? + "\n",
    };
    write_output(cli, &text)?;
    let failures = report.failures();
    if failures > 0 {
        eprintln!("warning: {failures} method run(s) failed; see the error column");
    }
    Ok(())
}

fn bench(cli: &Cli, family: &BenchFamily) -> Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mut header = format!("# git: {}\n# seed: {}\n# flags: {}\n", git_hash(), cli.seed, args.join(" "));
    if !cli.no_wall_time {
        let now = std::time::SystemTime::now()
            .duration_since(std::time::UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        header += &format!("# generated_unix: {now}\n");
    }
    let rows: Vec<EvalRow> = match family {
        BenchFamily::Grid { count, sizes, nt, methods, params, realizations } => {
            let methods = methods.parse()?;
            let params = params.params()?;
            if *nt > 4 {
                bail!("--nt must be at most 4");
            }
            if let Some(&n) = sizes.iter().find(|&&n| n < 2) {
                bail!("grid sizes must be at least 2, got {n}");
            }
            let jobs: Vec<(usize, usize)> =
                sizes.iter().flat_map(|&n| (0..*count).map(move |i| (n, i))).collect();
            let per_job: Vec<Vec<EvalRow>> = jobs
                .par_iter()
                .map(|&(n, i)| {
                    let id = format!("grid-n{n}-{i}");
                    let seed = derive_seed(cli.seed, &id);
                    let inst = gen_grid(&GridSpec { n, n_t: *nt, seed }).expect("validated spec");
                    compare_methods(&inst, &inst, &methods, &params, *realizations, seed, &id)
                })
                .collect();
            per_job.into_iter().flatten().collect()
        }
        BenchFamily::Channel { count, channel, methods, params, realizations } => {
            let methods = methods.parse()?;
            let params = params.params()?;
            channel.spec(cli.seed)?;
            let per_job: Vec<Result<Vec<EvalRow>>> = (0..*count)
                .into_par_iter()
                .map(|i| {
                    let id = format!("channel-{i}");
                    let seed = derive_seed(cli.seed, &id);
                    let sc = generate_channel_scenario(&channel.spec(seed)?)?;
                    Ok(compare_methods(&sc.planning, &sc.truth, &methods, &params, *realizations, seed, &id))
                })
                .collect();
            per_job.into_iter().collect::<Result<Vec<_>>>()?.into_iter().flatten().collect()
        }
    };
    let report = EvalReport { rows };
    emit_report(cli, &report, Some(header))?;
    for s in report.summarize() {
        eprintln!(
            "{:<10} n={:<5} truth mean {:.4} +- {:.4}{}",
            s.method,
            s.instances,
            s.mean_truth,
            s.std_truth,
            s.mean_mc.map(|m| format!(", realizations mean {m:.4}")).unwrap_or_default()
        );
    }
    Ok(())
}

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use igo_core::algorithms::{self, Clock, NoClock, Termination};
use igo_core::objectives::Objective;
use igo_kit::config::{parse_pairs, ConfigError, Format, Pairs, RunConfig};
use igo_kit::trace_io;
use igo_kit::verify::{self, GridSize, VerifyOptions};
use log::{error, info};

const EXIT_FAILURE: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_DOMAIN_HALT: u8 = 3;

#[derive(Parser)]
#[command(name = "igo-kit", version, about = "Run and verify information-geometric optimization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seeded optimization and write its trace.
    Run(Box<RunArgs>),
    /// Run a verification suite and print a JSON report.
    Verify(VerifyArgs),
    /// List algorithms, objectives and verification suites.
    List,
}

#[derive(Args)]
struct RunArgs {
    /// pbil | cma_rank_mu | ce_ml | rpp | igo_generic
    #[arg(long)]
    algo: Option<String>,
    #[arg(long)]
    objective: Option<String>,
    #[arg(long)]
    dim: Option<String>,
    #[arg(long)]
    lambda: Option<String>,
    /// Truncation quantile of the selection scheme.
    #[arg(long)]
    q: Option<String>,
    /// Comma-separated non-increasing rank weights (instead of --q).
    #[arg(long)]
    weights: Option<String>,
    #[arg(long)]
    dt: Option<String>,
    #[arg(long = "dt-m")]
    dt_m: Option<String>,
    #[arg(long = "dt-c")]
    dt_c: Option<String>,
    #[arg(long)]
    steps: Option<String>,
    #[arg(long)]
    seed: Option<String>,
    /// Stop once the best sampled fitness reaches this value.
    #[arg(long)]
    target: Option<String>,
    /// Trace file; standard output when absent.
    #[arg(long)]
    out: Option<String>,
    /// Summary JSON; defaults to `<out>.summary.json`.
    #[arg(long)]
    summary: Option<String>,
    /// csv | jsonl
    #[arg(long)]
    format: Option<String>,
    /// key=value configuration file; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Allow step sizes above 1.
    #[arg(long)]
    uncertified: bool,
    /// halt | safeguard
    #[arg(long = "domain-exit")]
    domain_exit: Option<String>,
    /// RPP: estimate expectations from samples instead of enumerating.
    #[arg(long = "sampled-rewards")]
    sampled_rewards: bool,
    /// Record an importance-sampling estimate of J per step.
    #[arg(long = "track-j")]
    track_j: bool,
    #[arg(long = "init-mean")]
    init_mean: Option<String>,
    #[arg(long = "init-sigma")]
    init_sigma: Option<String>,
    /// Log level (error, warn, info, debug, trace).
    #[arg(long)]
    log: Option<String>,
    /// Record wall-clock time per step; traces are then not reproducible.
    #[arg(long)]
    timing: bool,
    /// Print the effective configuration and exit.
    #[arg(long = "print-config")]
    print_config: bool,
}

impl RunArgs {
    fn pairs(&self) -> Result<Pairs, ConfigError> {
        let mut pairs = match &self.config {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| {
                    ConfigError::new("config", format!("{}: {e}", path.display()))
                })?;
                parse_pairs(&text)?
            }
            None => Pairs::new(),
        };
        let flags = [
            ("algo", &self.algo),
            ("objective", &self.objective),
            ("dim", &self.dim),
            ("lambda", &self.lambda),
            ("q", &self.q),
            ("weights", &self.weights),
            ("dt", &self.dt),
            ("dt-m", &self.dt_m),
            ("dt-c", &self.dt_c),
            ("steps", &self.steps),
            ("seed", &self.seed),
            ("target", &self.target),
            ("out", &self.out),
            ("summary", &self.summary),
            ("format", &self.format),
            ("domain-exit", &self.domain_exit),
            ("init-mean", &self.init_mean),
            ("init-sigma", &self.init_sigma),
            ("log", &self.log),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                pairs.insert(key.to_string(), v.clone());
            }
        }
        // a scheme given on the command line replaces the file's scheme
        if self.q.is_some() {
            pairs.remove("weights");
        } else if self.weights.is_some() {
            pairs.remove("q");
        }
        for (key, set) in [
            ("uncertified", self.uncertified),
            ("track-j", self.track_j),
            ("timing", self.timing),
        ] {
            if set {
                pairs.insert(key.to_string(), "true".to_string());
            }
        }
        if self.sampled_rewards {
            pairs.insert("exact-rewards".to_string(), "false".to_string());
        }
        Ok(pairs)
    }
}

#[derive(Args)]
struct VerifyArgs {
    /// Suite name; see `igo-kit list`.
    suite: String,
    /// small (200 configurations) | full (1000)
    #[arg(long, default_value = "small")]
    grid: String,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Exact steps per grid configuration.
    #[arg(long, default_value_t = 100)]
    steps: usize,
    /// Write the JSON report here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

struct WallClock(Instant);

impl Clock for WallClock {
    fn now_ns(&mut self) -> u64 {
        self.0.elapsed().as_nanos() as u64
    }
}

fn init_logging(level: &str) {
    let _ = env_logger::Builder::new().parse_filters(level).try_init();
}

fn summary_path(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.summary.clone().or_else(|| {
        cfg.out.as_ref().map(|p| {
            let mut s = p.clone().into_os_string();
            s.push(".summary.json");
            PathBuf::from(s)
        })
    })
}

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new)
}

fn cmd_run(args: &RunArgs) -> ExitCode {
    let cfg = match args.pairs().and_then(|p| RunConfig::from_pairs(&p)) {
        Ok(cfg) => cfg,
        Err(e) => {
            init_logging("warn");
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    init_logging(&cfg.log);
    if args.print_config {
        print!("{}", cfg.effective());
        return ExitCode::SUCCESS;
    }
    eprint!("{}", cfg.effective());
    let objective = match Objective::new(cfg.algo.objective, cfg.algo.dim, cfg.algo.seed) {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut wall = WallClock(Instant::now());
    let clock: &mut dyn Clock = if cfg.timing { &mut wall } else { &mut NoClock };
    let trace = match algorithms::run_with(&cfg.algo, &objective, objective.direction(), clock) {
        Ok(t) => t,
        Err(e @ (igo_core::Error::Config { .. } | igo_core::Error::Capacity { .. })) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let records = trace_io::records(&trace);
    let eta_len = cfg.algo.model().stat_len();
    let written = match &cfg.out {
        Some(path) => create(path).and_then(|w| match cfg.format {
            Format::Csv => trace_io::write_csv(w, eta_len, &records),
            Format::Jsonl => trace_io::write_jsonl(w, &records),
        }),
        None => {
            let stdout = io::stdout().lock();
            match cfg.format {
                Format::Csv => trace_io::write_csv(stdout, eta_len, &records),
                Format::Jsonl => trace_io::write_jsonl(stdout, &records),
            }
        }
    };
    if let Err(e) = written {
        eprintln!("error: writing trace: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    let summary = trace_io::summary(&cfg, &trace, objective.direction());
    if let Some(path) = summary_path(&cfg) {
        let res = create(&path).and_then(|mut w| {
            serde_json::to_writer_pretty(&mut w, &summary)?;
            w.write_all(b"\n")?;
            w.flush()
        });
        if let Err(e) = res {
            eprintln!("error: writing summary: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    }
    info!("{} steps, termination {}", records.len(), trace.termination.name());
    match &trace.termination {
        Termination::DomainExit { step, message } => {
            error!("domain exit at step {step}: {message}");
            eprintln!("halted: domain exit at step {step}: {message}");
            ExitCode::from(EXIT_DOMAIN_HALT)
        }
        _ => ExitCode::SUCCESS,
    }
}

fn cmd_verify(args: &VerifyArgs) -> ExitCode {
    init_logging("warn");
    let grid = match args.grid.parse::<GridSize>() {
        Ok(g) => g,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if !verify::SUITES.contains(&args.suite.as_str()) {
        eprintln!(
            "error: unknown suite `{}`; known: {}",
            args.suite,
            verify::SUITES.join(", ")
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    let opts = VerifyOptions {
        grid,
        seed: args.seed,
        steps: args.steps,
    };
    let report = match verify::run_suite(&args.suite, &opts) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    let text = serde_json::to_string_pretty(&report).expect("reports serialize");
    let res = match &args.out {
        Some(path) => std::fs::write(path, text + "\n"),
        None => writeln!(io::stdout(), "{text}"),
    };
    if let Err(e) = res {
        eprintln!("error: writing report: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    eprintln!("{}: {}", report.suite, if report.passed { "PASS" } else { "FAIL" });
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn cmd_list() -> ExitCode {
    println!("algorithms:");
    for a in algorithms::AlgorithmId::ALL {
        println!("  {a}");
    }
    println!("objectives:");
    for o in igo_core::ObjectiveId::ALL {
        println!("  {o}");
    }
    println!("verify suites:");
    for s in verify::SUITES {
        println!("  {s}");
    }
    ExitCode::SUCCESS
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match &cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Verify(args) => cmd_verify(args),
        Command::List => cmd_list(),
    }
}

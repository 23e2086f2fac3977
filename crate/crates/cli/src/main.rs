use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use ensemblex::postprocess::{parse_golden, run_golden, GOLDEN_CORPUS};
use ensemblex::{Calibrator, TopologyMode};
use ensemblex_cli::config::{BackendConfig, RunConfig};
use ensemblex_cli::dataset::ingest_dataset;
use ensemblex_cli::runner::{execute, run, RunOptions};
use ensemblex_cli::submission::read_submission;
use ensemblex_cli::sweep::{self, SweepSpec};
use ensemblex_cli::{score, CliError, Result};
use ensemblex_gateway::ResponseCache;

#[derive(Parser)]
#[command(name = "ensemblex", version, about = "Executor/analyst ensemble runner")]
struct Cli {
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a dataset through the pipeline and write a submission.
    Run(RunArgs),
    /// Score a submission against an answer key.
    Score {
        #[arg(long)]
        submission: PathBuf,
        /// Dataset file with `answer` fields.
        #[arg(long)]
        key: PathBuf,
        /// Print the report as JSON.
        #[arg(long)]
        json: bool,
    },
    /// Run a simulation sweep file or a named preset.
    Simulate {
        /// Sweep file (TOML).
        spec: Option<PathBuf>,
        /// `sc-curve` or `fusion-compare`.
        #[arg(long, conflicts_with = "spec")]
        preset: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Check a recorded cache for damage and replay the run from it offline.
    ReplayVerify(RunArgs),
    /// Run the calibration rules against the golden corpus.
    RulesTest {
        #[arg(long)]
        rules: Option<PathBuf>,
        /// Alternative corpus (JSON lines).
        #[arg(long)]
        corpus: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// `pooling` or `stratified`.
    #[arg(long)]
    mode: Option<TopologyMode>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    n2: Option<usize>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    budget_tokens: Option<usize>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    strict_replay: bool,
    #[arg(long)]
    resume: bool,
    /// Calibration rules file.
    #[arg(long)]
    rules: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(v) = &self.dataset {
            cfg.dataset = Some(v.clone());
        }
        if let Some(v) = &self.out {
            cfg.out = Some(v.clone());
        }
        if let Some(v) = &self.rules {
            cfg.rules = Some(v.clone());
        }
        let t = &mut cfg.topology;
        cfg.seed = self.seed.unwrap_or(cfg.seed);
        t.mode = self.mode.unwrap_or(t.mode);
        t.n1 = self.n1.unwrap_or(t.n1);
        t.n2 = self.n2.unwrap_or(t.n2);
        t.k = self.k.unwrap_or(t.k);
        t.budget_tokens = self.budget_tokens.unwrap_or(t.budget_tokens);
        cfg.parallelism = self.parallelism.unwrap_or(cfg.parallelism);
        Ok(cfg)
    }

    fn options(&self) -> RunOptions {
        RunOptions {
            resume: self.resume,
            strict_replay: self.strict_replay,
        }
    }
}

async fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Run(args) => {
            let cfg = args.config()?;
            let outcome = run(&cfg, &args.options(), None).await?;
            let fallbacks = outcome.resolved.iter().filter(|r| r.fallback.is_some()).count();
            println!(
                "wrote {} rows to {} ({} resumed, {} abstain fallbacks, {} network requests)",
                outcome.resolved.len(),
                cfg.out.as_ref().expect("run checks out").display(),
                outcome.resumed,
                fallbacks,
                outcome.network_operations
            );
        }
        Command::Score {
            submission,
            key,
            json,
        } => {
            let rows = read_submission(&submission)?;
            let key = ingest_dataset(&key)?;
            let report = score::score(&rows, &key)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            } else {
                println!("{report}");
            }
        }
        Command::Simulate {
            spec,
            preset,
            out,
            trials,
            seed,
        } => {
            let table = match (spec, preset) {
                (_, Some(name)) => sweep::preset(&name, trials, seed)?,
                (Some(path), None) => sweep::run_sweep(&SweepSpec::load(&path)?)?,
                (None, None) => {
                    return Err(CliError::Usage("give a sweep file or --preset".into()));
                }
            };
            for note in table.notes.iter().filter(|n| n.starts_with("warning")) {
                eprintln!("{note}");
            }
            sweep::write_table(&out, &table)?;
            println!("wrote {} rows to {}", table.rows.len(), out.display());
        }
        Command::ReplayVerify(args) => {
            let cfg = args.config()?;
            let BackendConfig::Live(live) = &cfg.backend else {
                return Err(CliError::Config("replay-verify needs a live backend config".into()));
            };
            let dir = live
                .cache_dir
                .as_ref()
                .ok_or_else(|| CliError::Config("replay-verify needs a cache_dir".into()))?;
            let report = ResponseCache::open(dir)
                .and_then(|c| c.verify())
                .map_err(|e| CliError::Transport(e.to_string()))?;
            println!("{} entries across {} endpoints", report.entries, report.endpoints);
            if !report.is_clean() {
                for p in &report.problems {
                    eprintln!("{p}");
                }
                return Err(CliError::Transport(format!("{} problems in cache", report.problems.len())));
            }
            let opts = RunOptions {
                strict_replay: true,
                ..args.options()
            };
            let outcome = execute(&cfg, &opts, None, None).await?;
            println!(
                "replayed {} questions with {} network requests",
                outcome.decisions.len(),
                outcome.network_operations
            );
        }
        Command::RulesTest { rules, corpus } => {
            let calibrator = match rules {
                Some(p) => Calibrator::load(&p)?,
                None => Calibrator::default(),
            };
            let text = match corpus {
                Some(p) => std::fs::read_to_string(&p).map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
                None => GOLDEN_CORPUS.to_string(),
            };
            let cases = parse_golden(&text).map_err(CliError::Data)?;
            let failures = run_golden(&calibrator, &cases);
            for (i, expected, got) in &failures {
                println!("case {}: expected {expected}, got {got}", i + 1);
            }
            println!("{}/{} cases pass (rules version {})", cases.len() - failures.len(), cases.len(), calibrator.version());
            if !failures.is_empty() {
                return Err(CliError::Data(format!("{} calibration cases fail", failures.len())));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    let level = if cli.verbose {
        tracing::Level::INFO
    } else {
        tracing::Level::WARN
    };
    tracing_subscriber::fmt()
        .with_max_level(level)
        .with_writer(std::io::stderr)
        .init();
    let runtime = match tokio::runtime::Runtime::new() {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(1);
        }
    };
    match runtime.block_on(dispatch(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

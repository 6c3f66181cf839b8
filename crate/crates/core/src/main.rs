use std::io::Write as _;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use snowlab::checker::DEFAULT_CAP;
use snowlab::harness::{
    canonical, check_trace, fuzz_campaign, generate, run_experiment, write_out, Checks, ExperimentReport,
    GeneratorParams, HarnessError, ProtocolKind, RunOptions, UsageError,
};
use snowlab::simnet::SchedulerPolicy;
use snowlab::History;

#[derive(Parser)]
#[command(name = "snowlab", version, about = "Simulate and check read-only transaction protocols")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one workload under a random schedule or exhaustive exploration.
    Run(RunArgs),
    /// Re-check a saved trace file.
    Check {
        #[arg(long)]
        trace: PathBuf,
        #[command(flatten)]
        common: CommonArgs,
    },
    /// Many random-schedule runs over generated workloads.
    Fuzz {
        #[arg(long, value_enum)]
        protocol: ProtocolKind,
        #[arg(long, default_value_t = 1000)]
        runs: u64,
        #[arg(long, default_value_t = 0)]
        seed0: u64,
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct CommonArgs {
    /// Comma-separated subset of witness,oracle,snow, or all.
    #[arg(long, default_value = "all")]
    checks: String,
    /// Largest history the brute-force oracle searches.
    #[arg(long, default_value_t = DEFAULT_CAP)]
    oracle_cap: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum ExploreMode {
    Exhaustive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scenario {
    /// Two objects, one WRITE of both, two READs of both.
    Canonical,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, value_enum)]
    protocol: ProtocolKind,
    #[arg(long, default_value_t = 3)]
    objects: usize,
    #[arg(long, default_value_t = 2)]
    writers: u32,
    #[arg(long, default_value_t = 1)]
    readers: u32,
    #[arg(long, default_value_t = 10)]
    txns: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest generated read or write set (defaults to the object count).
    #[arg(long)]
    max_set: Option<usize>,
    /// Issue generated transactions one at a time.
    #[arg(long)]
    sequential: bool,
    /// Use a fixed scenario instead of a generated workload.
    #[arg(long, value_enum)]
    scenario: Option<Scenario>,
    #[arg(long, value_enum)]
    explore: Option<ExploreMode>,
    #[arg(long, default_value_t = 64)]
    max_depth: usize,
    /// Step budget of a scheduled run.
    #[arg(long, default_value_t = 10_000)]
    budget: u64,
    #[command(flatten)]
    common: CommonArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn options(common: &CommonArgs) -> Result<RunOptions, UsageError> {
    if common.oracle_cap > 63 {
        return Err(UsageError::new("oracle_cap", "at most 63 transactions"));
    }
    Ok(RunOptions { checks: Checks::parse(&common.checks)?, oracle_cap: common.oracle_cap, ..RunOptions::default() })
}

fn finish(report: &ExperimentReport, out: Option<&PathBuf>) -> Result<i32, HarnessError> {
    let _ = write!(std::io::stdout(), "{}", report.summary());
    if let Some(dir) = out {
        write_out(report, dir)?;
    }
    Ok(report.exit_code())
}

fn run(cli: Cli) -> Result<i32, HarnessError> {
    match cli.command {
        Command::Run(args) => {
            let mut opts = options(&args.common)?;
            opts.budget = args.budget;
            opts.keep_all_traces = args.explore.is_none();
            let workload = match args.scenario {
                Some(Scenario::Canonical) => canonical(args.protocol),
                None => {
                    let params = GeneratorParams {
                        protocol: args.protocol,
                        k: args.objects,
                        writers: args.writers,
                        readers: args.readers,
                        txns: args.txns,
                        max_set: args.max_set.unwrap_or(args.objects),
                        sequential: args.sequential,
                    };
                    generate(&params, args.seed)?
                }
            };
            let policy = match args.explore {
                Some(ExploreMode::Exhaustive) => SchedulerPolicy::Exhaustive { max_depth: args.max_depth },
                None => SchedulerPolicy::Random { seed: args.seed },
            };
            let report = run_experiment(&workload, &policy, &opts)?;
            finish(&report, args.out.as_ref())
        }
        Command::Check { trace, common } => {
            let opts = options(&common)?;
            let text = std::fs::read_to_string(&trace)?;
            let h = History::from_json(&text).map_err(|e| UsageError::new("trace", e.to_string()))?;
            let verdict = check_trace(&h, &opts)?;
            let protocol = ProtocolKind::from_name(&h.config.protocol).expect("checked by check_trace");
            let json = serde_json::to_string_pretty(&verdict).expect("verdicts serialize");
            let _ = writeln!(std::io::stdout(), "{json}");
            Ok(ExperimentReport::new(protocol, vec![verdict], None).exit_code())
        }
        Command::Fuzz { protocol, runs, seed0, common, out } => {
            let opts = options(&common)?;
            let report = fuzz_campaign(protocol, runs, seed0, &opts)?;
            finish(&report, out.as_ref())
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 64 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("snowlab: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

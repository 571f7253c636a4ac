use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use fairflip::attacks::AttackerKind;
use fairflip::estimator::Sampling;
use fairflip::PartyId;
use fairflip_cli::{
    expand, report, run, ConditioningChoice, ExperimentConfig, Format, MeasureChoice, OracleChoice, Pipeline, Theta,
};

/// Exact and sampled experiments on fail-stop attacks against two-party coin flipping.
///
/// Exit status: 0 when every asserted bound holds, 1 when one fails, 2 on usage or runtime errors.
/// FAIRFLIP_BUDGET overrides the enumeration budget (tape pairs).
#[derive(Parser)]
#[command(name = "fairflip", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the coin-flipping requirements of a protocol (JSON).
    Validate(Common),
    /// Probability of a large martingale increment (CSV).
    Martingale {
        #[command(flatten)]
        common: Common,
        /// Increment threshold, or `auto` for 1/(4 sqrt r) with the 1/20 bound asserted.
        #[arg(long, default_value = "auto")]
        theta: Theta,
        #[arg(long, value_enum, default_value = "transcript")]
        conditioning: CondArg,
    },
    /// Measure the bias of one attacker (JSON).
    Attack {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_enum, default_value = "ci")]
        attacker: AttackerArg,
        #[arg(long, default_value = "A")]
        corrupted: PartyId,
        #[arg(long, default_value_t = 1)]
        target: u8,
        /// Overrides the attacker's threshold.
        #[arg(long, default_value = "auto")]
        theta: Theta,
        /// Enumerate every tape pair, or sample executions.
        #[arg(long, value_enum, default_value = "exact")]
        mode: ModeArg,
        #[arg(long, default_value_t = 1 << 20)]
        samples: u64,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Repeated estimation of the expected outcome against its exact value (CSV).
    Estimator {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 200)]
        trials: u64,
        #[arg(long, value_enum, default_value = "aggregate")]
        sampling: SamplingArg,
    },
    /// Per-round correlation of the forecaster attack's decision with the backup error (CSV).
    Independence {
        #[command(flatten)]
        common: Common,
        /// Only this tester; both by default.
        #[arg(long)]
        party: Option<PartyId>,
        #[arg(long, default_value = "auto")]
        theta: Theta,
    },
    /// Exact check of the forecaster attack's bias argument (JSON).
    Certify {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        oracle: OracleArgs,
    },
    /// Tabulate attack reports against the fairness floors.
    Report {
        /// Attack report files or glob patterns.
        files: Vec<String>,
        #[arg(long, value_enum, default_value = "markdown")]
        format: FormatArg,
        #[arg(long, short)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct Common {
    /// Zoo entry, `name[:param...]`; see `fairflip validate --help`.
    #[arg(long)]
    protocol: String,
    /// Forecaster precision in bits.
    #[arg(long, short, default_value_t = fairflip::forecaster::DEFAULT_BITS)]
    k: u32,
    #[arg(long)]
    rho: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; stdout when absent.
    #[arg(long, short)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    /// Source of the expected outcome used by forecaster-based attackers.
    #[arg(long, value_enum, default_value = "exact-g")]
    oracle: OracleArg,
    #[arg(long, value_enum, default_value = "aggregate")]
    sampling: SamplingArg,
}

#[derive(Clone, Copy, ValueEnum)]
enum CondArg {
    Transcript,
    Forecast,
}

#[derive(Clone, Copy, ValueEnum)]
enum AttackerArg {
    Ci,
    Gap,
    Astar,
    AstarMirrored,
    Optimal,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Exact,
    Sampled,
}

#[derive(Clone, Copy, ValueEnum)]
enum OracleArg {
    ExactG,
    Estimator,
}

#[derive(Clone, Copy, ValueEnum)]
enum SamplingArg {
    /// Binomial draws from the class counts.
    Aggregate,
    /// One simulated execution per sample.
    PerExecution,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
}

impl From<SamplingArg> for Sampling {
    fn from(s: SamplingArg) -> Self {
        match s {
            SamplingArg::Aggregate => Sampling::CountAggregated,
            SamplingArg::PerExecution => Sampling::PerExecution,
        }
    }
}

fn base(pipeline: Pipeline, c: Common) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(pipeline, c.protocol);
    cfg.k = c.k;
    cfg.rho = c.rho;
    cfg.seed = c.seed;
    cfg.output = c.out;
    cfg
}

fn with_oracle(cfg: &mut ExperimentConfig, o: OracleArgs) {
    cfg.oracle = match o.oracle {
        OracleArg::ExactG => OracleChoice::ExactG,
        OracleArg::Estimator => OracleChoice::Estimator,
    };
    cfg.sampling = o.sampling.into();
}

fn config(command: Command) -> ExperimentConfig {
    match command {
        Command::Validate(c) => base(Pipeline::Validate, c),
        Command::Martingale { common, theta, conditioning } => {
            let mut cfg = base(Pipeline::Martingale, common);
            cfg.theta = theta;
            cfg.conditioning = match conditioning {
                CondArg::Transcript => ConditioningChoice::Transcript,
                CondArg::Forecast => ConditioningChoice::Forecast,
            };
            cfg
        }
        Command::Attack { common, attacker, corrupted, target, theta, mode, samples, oracle } => {
            let mut cfg = base(Pipeline::Attack, common);
            cfg.attacker = match attacker {
                AttackerArg::Ci => AttackerKind::Ci,
                AttackerArg::Gap => AttackerKind::Gap,
                AttackerArg::Astar => AttackerKind::AStar,
                AttackerArg::AstarMirrored => AttackerKind::AStarMirrored,
                AttackerArg::Optimal => AttackerKind::Optimal,
            };
            cfg.corrupted = corrupted;
            cfg.target = target;
            cfg.theta = theta;
            cfg.measure = match mode {
                ModeArg::Exact => MeasureChoice::Exact,
                ModeArg::Sampled => MeasureChoice::Sampled,
            };
            cfg.samples = samples;
            with_oracle(&mut cfg, oracle);
            cfg
        }
        Command::Estimator { common, trials, sampling } => {
            let mut cfg = base(Pipeline::Estimator, common);
            cfg.trials = trials;
            cfg.sampling = sampling.into();
            cfg
        }
        Command::Independence { common, party, theta } => {
            let mut cfg = base(Pipeline::Independence, common);
            cfg.party = party;
            cfg.theta = theta;
            cfg
        }
        Command::Certify { common, oracle } => {
            let mut cfg = base(Pipeline::Certify, common);
            with_oracle(&mut cfg, oracle);
            cfg
        }
        Command::Report { .. } => unreachable!("handled before"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Report { files, format, out } => {
            let format = match format {
                FormatArg::Markdown => Format::Markdown,
                FormatArg::Csv => Format::Csv,
            };
            expand(&files).and_then(|paths| report(&paths, format)).and_then(|r| {
                r.write_to(out.as_deref())?;
                Ok(r)
            })
        }
        command => run(&config(command)),
    };
    match result {
        Ok(r) if r.passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

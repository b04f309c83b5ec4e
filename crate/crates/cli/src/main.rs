//! `flexmatch`: simulate, train and compare matching policies.
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use flexmatch::policies::PolicyKind;
use flexmatch::trainer::Algorithm;

#[derive(Parser, Debug)]
#[command(name = "flexmatch", version, about = "Online power-matching market: simulate, train, compare")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one policy over a range of epochs and write per-epoch welfare.
    Run(RunArgs),
    /// Train LA1 or LA2 and write the learning curve and a checkpoint.
    Train(TrainArgs),
    /// Mean welfare table (scenario x policy) over epochs and seeds.
    Compare(CompareArgs),
    /// Run the feasibility, dominance and oracle suites.
    Verify(VerifyArgs),
}

#[derive(Args, Debug)]
struct RunArgs {
    /// ma, mh, med, ooa, la1 or la2.
    #[arg(long)]
    policy: PolicyKind,
    /// Profile or hybrid TOML file, or a bundled name (scenario1 .. scenario5).
    #[arg(long)]
    config: String,
    #[arg(long, default_value_t = 100)]
    epochs: u64,
    #[arg(long, default_value_t = 1)]
    first_epoch: u64,
    /// Run seed; 0 keeps the config's own realizations.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Trained checkpoint, required for la1 and la2.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// CSV of per-epoch welfare; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write every period record as JSON lines.
    #[arg(long)]
    traces: Option<PathBuf>,
}

/// Learning hyperparameters; unset fields keep the algorithm defaults.
#[derive(Args, Debug, Clone, Default)]
struct LearnArgs {
    /// Traces per update.
    #[arg(long)]
    batch: Option<usize>,
    /// Actor-critic lookahead (la2 only).
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    actor_lr: Option<f64>,
    #[arg(long)]
    critic_lr: Option<f64>,
    /// Subtract the per-period batch mean from the policy-gradient weights.
    #[arg(long)]
    baseline: bool,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// la1 or la2.
    #[arg(long)]
    algo: Algorithm,
    #[arg(long)]
    config: String,
    /// Total training epochs (la1 800, la2 200 by default).
    #[arg(long)]
    epochs: Option<u64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    learn: LearnArgs,
    /// Learning curve as JSON lines.
    #[arg(long)]
    out: PathBuf,
    /// Where to write the final checkpoint.
    #[arg(long)]
    checkpoint: PathBuf,
    /// Also rewrite the checkpoint every N epochs (a multiple of the batch
    /// size, so every saved state resumes exactly).
    #[arg(long)]
    checkpoint_every: Option<u64>,
    /// Continue from this checkpoint up to `--epochs` total.
    #[arg(long)]
    resume: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CompareArgs {
    /// One or more configs (repeat the flag or separate with commas).
    #[arg(long, required = true, value_delimiter = ',')]
    config: Vec<String>,
    #[arg(long, value_delimiter = ',', default_value = "ma,mh,med,ooa")]
    policies: Vec<PolicyKind>,
    #[arg(long, value_delimiter = ',', default_value = "0")]
    seeds: Vec<u64>,
    /// Evaluation epochs per seed.
    #[arg(long, default_value_t = 100)]
    epochs: u64,
    /// First evaluation epoch; defaults to 1, or just after training when a
    /// learning algorithm is compared.
    #[arg(long)]
    first_epoch: Option<u64>,
    /// Training epochs for la1/la2 (defaults 800 / 200).
    #[arg(long)]
    train_epochs: Option<u64>,
    #[command(flatten)]
    learn: LearnArgs,
    /// Epochs reported one by one for hybrid scenarios.
    #[arg(long, value_delimiter = ',', default_value = "163,164,165,190,191,192")]
    detail: Vec<u64>,
    /// Table CSV; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Per-epoch breakdown CSV for hybrid scenarios; stderr when omitted.
    #[arg(long)]
    detail_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Scenarios for the dominance suite; all bundled ones by default.
    #[arg(long, value_delimiter = ',')]
    config: Vec<String>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pairs: usize,
    #[arg(long, default_value_t = 200)]
    instances: usize,
    /// Epochs per scenario in the dominance suite.
    #[arg(long, default_value_t = 500)]
    epochs: u64,
}

/// Failures the user can fix by changing the command line.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::Run(a) => commands::run(a),
        Command::Train(a) => commands::train(a),
        Command::Compare(a) => commands::compare(a),
        Command::Verify(a) => commands::verify(a),
    };
    match result {
        Ok(code) => code,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            eprintln!("\nFor more information, try '--help'.");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

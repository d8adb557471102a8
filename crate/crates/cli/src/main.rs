use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

use malade_cli::eval::default_out_dir;
use malade_cli::{cmd_eval, cmd_replay, cmd_run, cmd_trials, Overrides, RunConfig, RunFlags, TrialsOptions};
use malade_core::scoring::{Mode, Scoring};

#[derive(Parser)]
#[command(
    name = "malade",
    version,
    about = "Adverse drug event extraction with cooperating LLM agents"
)]
struct Cli {
    /// More log output (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the pipeline over every category x outcome cell.
    Run {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Score a predictions file against a ground-truth grid.
    Eval {
        #[arg(long)]
        predictions: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        #[arg(long, value_enum, default_value = "all")]
        mode: ModeArg,
        #[arg(long, value_enum, default_value = "all")]
        scoring: ScoringArg,
        /// Report directory (default: `reports/` beside the predictions).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print a transcript as a dialog.
    Replay {
        transcript: PathBuf,
        /// Re-check the orchestration rules and fail on any violation.
        #[arg(long)]
        verify: bool,
    },
    /// Repeat the run and summarize the spread of each cell's scores.
    Trials {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, value_parser = clap::value_parser!(u32).range(1..))]
        n: u32,
        /// Stage whose outputs are computed once and reused by every trial.
        #[arg(long, value_enum)]
        fix_stage: Option<FixStage>,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    script: Option<PathBuf>,
    /// Accept every answer without critic feedback.
    #[arg(long)]
    no_critics: bool,
    /// Answer without label retrieval.
    #[arg(long)]
    no_rag: bool,
    #[arg(long)]
    max_steps: Option<u32>,
    #[arg(long)]
    max_critic_rounds: Option<u32>,
    #[arg(long)]
    parallelism: Option<usize>,
    /// Re-index labels instead of loading the saved index.
    #[arg(long)]
    rebuild_index: bool,
    /// Ignore cached labels.
    #[arg(long)]
    refresh: bool,
}

impl RunArgs {
    fn load(&self) -> Result<(RunConfig, RunFlags)> {
        let mut cfg = RunConfig::load(&self.config)?;
        cfg.apply(&Overrides {
            output_dir: self.output_dir.clone(),
            script: self.script.clone(),
            no_critics: self.no_critics,
            no_rag: self.no_rag,
            max_steps: self.max_steps,
            max_critic_rounds: self.max_critic_rounds,
            parallelism: self.parallelism,
        })?;
        let flags = RunFlags {
            rebuild_index: self.rebuild_index,
            refresh: self.refresh,
        };
        Ok((cfg, flags))
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    EffectBased,
    AdeBased,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScoringArg {
    Confidence,
    Probability,
    ProbabilityModified,
    All,
}

#[derive(Clone, Copy, ValueEnum)]
enum FixStage {
    Representatives,
}

impl ModeArg {
    fn modes(self) -> Vec<Mode> {
        match self {
            ModeArg::EffectBased => vec![Mode::EffectBased],
            ModeArg::AdeBased => vec![Mode::AdeBased],
            ModeArg::All => Mode::ALL.to_vec(),
        }
    }
}

impl ScoringArg {
    fn scorings(self) -> Vec<Scoring> {
        match self {
            ScoringArg::Confidence => vec![Scoring::Confidence],
            ScoringArg::Probability => vec![Scoring::Probability],
            ScoringArg::ProbabilityModified => vec![Scoring::ProbabilityModified],
            ScoringArg::All => Scoring::ALL.to_vec(),
        }
    }
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::Run { run } => {
            let (cfg, flags) = run.load()?;
            let outcome = cmd_run(&cfg, &flags)?;
            println!(
                "{} cells, {} failed; predictions in {}",
                outcome.records.len(),
                outcome.failed,
                outcome.predictions.display()
            );
            Ok(outcome.success())
        }
        Command::Eval {
            predictions,
            truth,
            mode,
            scoring,
            out,
        } => {
            let out = out.unwrap_or_else(|| default_out_dir(&predictions));
            let outcome = cmd_eval(&predictions, &truth, &mode.modes(), &scoring.scorings(), &out)?;
            for row in &outcome.summary {
                match (&row.error, row.auc, row.f1) {
                    (Some(e), _, _) => println!("{:<13} {:<21} error: {e}", row.mode.as_str(), row.scoring.as_str()),
                    (None, Some(auc), Some(f1)) => println!(
                        "{:<13} {:<21} auc {auc:.3}  f1 {f1:.3}",
                        row.mode.as_str(),
                        row.scoring.as_str()
                    ),
                    _ => {}
                }
            }
            if outcome.failed_cells > 0 {
                println!(
                    "{} failed cell(s) in the predictions were skipped",
                    outcome.failed_cells
                );
            }
            println!("reports in {}", outcome.out_dir.display());
            Ok(outcome.success())
        }
        Command::Replay { transcript, verify } => {
            let outcome = cmd_replay(&transcript, verify)?;
            print!("{}", outcome.rendered);
            for v in &outcome.violations {
                eprintln!("{v}");
            }
            if verify && outcome.violations.is_empty() {
                eprintln!("all orchestration rules hold");
            }
            Ok(outcome.violations.is_empty())
        }
        Command::Trials { run, n, fix_stage } => {
            let (cfg, flags) = run.load()?;
            let opts = TrialsOptions {
                n,
                fix_representatives: matches!(fix_stage, Some(FixStage::Representatives)),
            };
            let outcome = cmd_trials(&cfg, &flags, &opts)?;
            println!(
                "{n} trial(s), {} cell failure(s); summaries in {}",
                outcome.failed,
                outcome.dir.display()
            );
            Ok(outcome.success())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

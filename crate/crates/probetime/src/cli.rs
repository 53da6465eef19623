use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::commands::analyze::{cmd_analyze, AnalyzeFlags};
use crate::commands::pretrain::cmd_pretrain;
use crate::commands::probe::cmd_probe;
use crate::commands::synth::cmd_synth;
use crate::config::RunConfig;
use crate::error::{exit, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "probetime",
    version,
    about = "Probe masked-LM checkpoints across pretraining and analyze learning dynamics"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Run configuration (TOML).
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Replace existing outputs.
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate the synthetic corpus and probe suites into <out>/data.
    Synth {
        #[command(flatten)]
        common: Common,
    },
    /// Train the toy model, writing checkpoints to <out>/checkpoints/<run_tag>.
    Pretrain {
        #[command(flatten)]
        common: Common,
        /// Continue from the latest saved checkpoint.
        #[arg(long)]
        resume: bool,
    },
    /// Evaluate every task on every checkpoint and baseline into <out>/results.
    Probe {
        #[command(flatten)]
        common: Common,
        /// Checkpoint root (default <out>/checkpoints).
        #[arg(long)]
        ckpt: Option<PathBuf>,
    },
    /// Compute learning dynamics into <out>/analysis.
    Analyze {
        #[command(flatten)]
        common: Common,
        /// Results directory (default <out>/results).
        #[arg(long)]
        results: Option<PathBuf>,
        /// Learning-phase epsilon.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Learning-progress percentages, comma separated.
        #[arg(long, value_delimiter = ',')]
        x: Option<Vec<f64>>,
        /// EMA smoothing coefficient.
        #[arg(long)]
        ema: Option<f64>,
    },
}

fn load(common: &Common) -> CliResult<RunConfig> {
    RunConfig::load(&common.config, common.seed, common.out.as_deref())
}

fn execute(cli: Cli) -> CliResult<String> {
    Ok(match cli.command {
        Command::Synth { common } => {
            let cfg = load(&common)?;
            let m = cmd_synth(&cfg, common.force)?;
            for w in &m.warnings {
                eprintln!("warning: {w}");
            }
            format!(
                "synth: {} sentences, {} tokens in vocabulary, written to {}",
                m.counts.sentences,
                m.counts.vocabulary,
                cfg.layout().data().display()
            )
        }
        Command::Pretrain { common, resume } => {
            let cfg = load(&common)?;
            let s = cmd_pretrain(&cfg, common.force, resume)?;
            let from = s
                .resumed_from
                .map(|s| format!(" (resumed from step {s})"))
                .unwrap_or_default();
            let loss = s
                .final_heldout_loss
                .map(|l| format!(", held-out loss {l:.4}"))
                .unwrap_or_default();
            format!(
                "pretrain: run `{}` wrote {} checkpoint(s){from}{loss}",
                s.run_tag, s.checkpoints_written
            )
        }
        Command::Probe { common, ckpt } => {
            let cfg = load(&common)?;
            let layout = cfg.layout();
            let s = cmd_probe(
                &cfg,
                &ckpt.unwrap_or_else(|| layout.checkpoints()),
                &layout.results(),
                common.force,
            )?;
            format!(
                "probe: {} evaluated, {} skipped (capability), {} already done",
                s.evaluated, s.skipped, s.already_done
            )
        }
        Command::Analyze {
            common,
            results,
            epsilon,
            x,
            ema,
        } => {
            let cfg = load(&common)?;
            let layout = cfg.layout();
            let flags = AnalyzeFlags { epsilon, x, ema };
            let report = cmd_analyze(
                &cfg,
                &results.unwrap_or_else(|| layout.results()),
                &layout.analysis(),
                &flags,
            )?;
            for w in &report.warnings {
                eprintln!("warning: {w}");
            }
            format!(
                "analyze: {} run(s), report in {}",
                report.curves.len(),
                layout.analysis().display()
            )
        }
    })
}

/// Parse arguments, run the command and return the process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::CONFIG } else { exit::OK };
        }
    };
    match execute(cli) {
        Ok(msg) => {
            println!("{msg}");
            exit::OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

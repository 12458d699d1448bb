use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use clogcd::runner::{self, RunConfig, StrategyName};

#[derive(Parser)]
#[command(version, about = "Curriculum training over class-decomposed label granularities")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a strategy sweep and write all artifacts.
    Run(RunArgs),
    /// Tabulate finished runs side by side.
    Compare {
        /// Run output directories.
        dirs: Vec<PathBuf>,
        /// Where to write comparison.csv and comparison.txt.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build the granularity sequence and write its manifest only.
    Decompose(RunArgs),
    /// Write latent vectors for every sample only.
    Encode(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Fixed reduction order for bit-identical reruns.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    epochs_per_stage: Option<usize>,
    /// Comma-separated, e.g. `baseline,ASG,DEG,delta1,delta2,delta4`.
    #[arg(long, value_delimiter = ',')]
    strategies: Option<Vec<String>>,
    /// Train strategies concurrently.
    #[arg(long)]
    parallel_strategies: bool,
    /// Pretrained encoder checkpoint.
    #[arg(long)]
    encoder: Option<PathBuf>,
}

impl RunArgs {
    /// The config file with command-line overrides applied, and the output
    /// directory.
    fn resolve(self) -> anyhow::Result<(RunConfig, PathBuf)> {
        let mut cfg = RunConfig::load(&self.config)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.deterministic {
            cfg.deterministic = true;
        }
        if let Some(e) = self.epochs_per_stage {
            cfg.epochs_per_stage = e;
        }
        if let Some(list) = self.strategies {
            cfg.strategies = list.into_iter().map(StrategyName).collect();
        }
        if self.parallel_strategies {
            cfg.parallel_strategies = true;
        }
        if let Some(e) = self.encoder {
            cfg.encoder = Some(e);
        }
        if let Some(o) = self.out {
            cfg.out = Some(o);
        }
        let out = cfg
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from("runs").join(&cfg.run_id));
        Ok((cfg, out))
    }
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("CLOGCD_THREADS") {
        let n: usize = v.parse().with_context(|| format!("CLOGCD_THREADS={v:?} is not a thread count"))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn execute(cli: Cli) -> anyhow::Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Run(args) => {
            let (cfg, out) = args.resolve()?;
            let outcome = runner::run(&cfg, &out)?;
            for s in &outcome.strategies {
                if let Some(m) = &s.best_test {
                    println!(
                        "{:<9} pass {:>2}  acc {:.4}  pr {:.4}  re {:.4}  f1 {:.4}",
                        s.strategy,
                        s.best_pass.unwrap_or(0),
                        m.accuracy,
                        m.precision,
                        m.recall,
                        m.f1
                    );
                }
            }
            println!("wrote {}", out.display());
        }
        Command::Compare { dirs, out } => {
            if dirs.is_empty() {
                bail!("compare needs at least one run directory");
            }
            let table = runner::compare(&dirs)?;
            print!("{}", table.to_text());
            if let Some(dir) = out {
                table.write(&dir)?;
            }
        }
        Command::Decompose(args) => {
            let (cfg, out) = args.resolve()?;
            let m = runner::decompose_only(&cfg, &out)?;
            for level in &m.levels {
                println!("g{}: {} sub-classes", level.level, level.sublabel_count);
            }
        }
        Command::Encode(args) => {
            let (cfg, out) = args.resolve()?;
            let records = runner::encode_only(&cfg, &out)?;
            println!("encoded {} samples into {}", records.len(), out.join("latents.json").display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

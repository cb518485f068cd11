use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use covrec::commands::{cmd_ablate, cmd_eval, cmd_synth, cmd_train};
use covrec::config::RunConfig;

#[derive(Parser)]
#[command(name = "covrec", version, about = "Coverage-attentive diversified news recommendation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic news.tsv / behaviors.tsv pair.
    Synth(Common),
    /// Train on data.news / data.behaviors and write a checkpoint.
    Train(Common),
    /// Score a checkpoint with AUC, NDCG@k and DIV@k.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate [default: <out>/model.ckpt]
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Train and evaluate every ablation variant.
    Ablate(Common),
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overwrite existing outputs.
    #[arg(long)]
    force: bool,
    #[arg(long)]
    threads: Option<usize>,
    /// Dotted overrides such as train.gamma=0.5
    #[arg(value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

impl Common {
    fn resolve(&self) -> covrec::Result<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(o) = &self.out {
            cfg.out.clone_from(o);
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn run(cli: Cli) -> covrec::Result<()> {
    let common = match &cli.command {
        Command::Synth(c) | Command::Train(c) | Command::Ablate(c) => c,
        Command::Eval { common, .. } => common,
    };
    let cfg = common.resolve()?;
    // A pool that already exists (only possible in-process) is fine to reuse.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(cfg.threads).build_global();
    match &cli.command {
        Command::Synth(c) => {
            let s = cmd_synth(&cfg, c.force)?;
            println!("{}", s.files.news.display());
            println!("{}", s.files.behaviors.display());
            println!("users={} news={} clicks={}", s.users, s.news, s.clicks);
        }
        Command::Train(c) => {
            let s = cmd_train(&cfg, c.force)?;
            for e in &s.epochs {
                println!("{}", e.log_line());
            }
            println!("{}", s.checkpoint.display());
        }
        Command::Eval { common, checkpoint } => {
            let r = cmd_eval(&cfg, checkpoint.as_deref(), common.force)?;
            println!("{}", r.tsv_header());
            println!("{}", r.tsv_row("model"));
        }
        Command::Ablate(c) => {
            let rows = cmd_ablate(&cfg, c.force)?;
            if let Some((_, first)) = rows.first() {
                println!("{}", first.tsv_header());
            }
            for (name, r) in &rows {
                println!("{}", r.tsv_row(name));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use vfc_cli::{cmd_calibrate, cmd_eval, cmd_experiment, cmd_gen, cmd_report, cmd_train, CliError, Overrides, RunConfig};

/// Verb-focused contrastive pipeline: generate, calibrate, train, evaluate.
#[derive(Debug, Parser)]
#[command(name = "vfc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    flags: Flags,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate hard negatives (and optional positives and verb phrases).
    Gen,
    /// Filter hard negatives so that each concept has at most S of them.
    Calibrate,
    /// Train the encoders and write checkpoints.
    Train,
    /// Evaluate a checkpoint on the configured task file.
    Eval,
    /// Merge stage outputs into one report.
    Report,
    /// Run a packaged seeded experiment: ratio_law, attraction_point or shortcut.
    Experiment { name: String },
}

#[derive(Debug, Args)]
struct Flags {
    /// TOML run config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// llm_completion, t5_cloze, random_verb or antonym_verb.
    #[arg(long, global = true)]
    backend: Option<String>,
    /// none, hn_uncalibrated or calibrated_hn.
    #[arg(long, global = true)]
    loss_variant: Option<String>,
    /// standard or hardneg_nce.
    #[arg(long, global = true)]
    nce_mode: Option<String>,
    /// Hard negatives sampled per caption and step.
    #[arg(long, global = true)]
    n_hard: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Leave the few-shot exemplars out of prompts.
    #[arg(long, global = true)]
    no_exemplars: bool,
    #[arg(long, global = true)]
    freeze_video: bool,
    #[arg(long, global = true)]
    freeze_text: bool,
}

impl Flags {
    fn overrides(&self) -> Overrides {
        Overrides {
            out: self.out.clone(),
            seed: self.seed,
            backend: self.backend.clone(),
            loss_variant: self.loss_variant.clone(),
            nce_mode: self.nce_mode.clone(),
            n_hard: self.n_hard,
            epochs: self.epochs,
            no_exemplars: self.no_exemplars,
            freeze_video: self.freeze_video,
            freeze_text: self.freeze_text,
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = RunConfig::resolve(cli.flags.config.as_deref(), &cli.flags.overrides())?;
    match &cli.command {
        Command::Gen => {
            let g = cmd_gen(&cfg)?;
            println!(
                "captions {}  skipped {}  hard negatives {}  positives {}  network calls {}",
                g.captions, g.skipped, g.hard_negatives, g.positives, g.network_calls
            );
        }
        Command::Calibrate => {
            let r = cmd_calibrate(&cfg)?;
            print!("{}", r.render_text(cfg.calibrate.top_k));
        }
        Command::Train => {
            let t = cmd_train(&cfg)?;
            match t.final_loss {
                Some(l) => println!("{} epochs, {} steps, final loss {l:.6}", t.epochs, t.steps),
                None => println!("{} epochs, {} steps", t.epochs, t.steps),
            }
            println!("checkpoint {}", t.checkpoint.display());
        }
        Command::Eval => {
            cmd_eval(&cfg)?;
            let text = std::fs::read_to_string(cfg.out_dir.join(vfc_cli::layout::EVAL_TEXT)).unwrap_or_default();
            print!("{text}");
        }
        Command::Report => {
            cmd_report(&cfg)?;
            println!("wrote {}", cfg.out_dir.join(vfc_cli::layout::REPORT_TEXT).display());
        }
        Command::Experiment { name } => {
            let e = cmd_experiment(name, &cfg)?;
            print!("{}", e.summary);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

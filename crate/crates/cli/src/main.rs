mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, UsageError};

/// Cross-lingual dependency parsing with word-order distillation.
#[derive(Parser)]
#[command(name = "reorder", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by the training commands.
#[derive(Args)]
struct Experiment {
    /// `key = value` file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one key, e.g. `--set lr=1e-3`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    #[arg(long)]
    source: Option<PathBuf>,
    #[arg(long)]
    target: Option<PathBuf>,
    /// Model path template; `{seed}` is replaced by each seed.
    #[arg(long)]
    parser: Option<String>,
    /// Model path template; `{seed}` is replaced by each seed.
    #[arg(long)]
    teacher: Option<String>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    /// Comma-separated seeds.
    #[arg(long)]
    seeds: Option<String>,
}

impl Experiment {
    fn load(self) -> Result<ExperimentConfig, UsageError> {
        let mut overrides = self.set;
        let mut flag = |k: &str, v: Option<String>| {
            if let Some(v) = v {
                overrides.push(format!("{k}={v}"));
            }
        };
        flag("source", self.source.map(|p| p.display().to_string()));
        flag("target", self.target.map(|p| p.display().to_string()));
        flag("parser", self.parser);
        flag("teacher", self.teacher);
        flag("output_dir", self.output_dir.map(|p| p.display().to_string()));
        flag("seeds", self.seeds);
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Sample a toy treebank from a word-order rule set.
    Generate {
        /// `english`, `verb-final`, or a rule file.
        #[arg(long, default_value = "english")]
        rules: String,
        #[arg(long, default_value_t = 500)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Reorder a treebank to follow another language's word-order rules.
    Synth {
        #[arg(long)]
        input: PathBuf,
        /// `english`, `verb-final`, or a rule file.
        #[arg(long)]
        rules: String,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        language: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the biaffine parser on the source treebank.
    TrainParser(Experiment),
    /// Train the order teacher on the target treebank.
    TrainTeacher(Experiment),
    /// Train a student parser with an order objective.
    TrainStudent(Experiment),
    /// Score a parser or student model on a treebank and print JSON.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long, default_value_t = reorder::typology::DEFAULT_K)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Word-order features and pairwise distances for treebanks.
    Typology {
        #[arg(long, num_args = 1.., required = true)]
        treebanks: Vec<PathBuf>,
        #[arg(long, default_value_t = reorder::typology::DEFAULT_K)]
        k: usize,
        /// Report raw Manhattan distances instead of per-feature means.
        #[arg(long)]
        raw: bool,
        #[arg(long, default_value = "typology")]
        out_dir: PathBuf,
    },
    /// Correlate word-order distance with transfer performance.
    Analyze {
        /// Reports written by the training commands.
        #[arg(long, num_args = 1..)]
        reports: Vec<PathBuf>,
        /// CSV with language,distance,uas,las[,reduction,improvement].
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, default_value = "analysis")]
        out_dir: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { rules, n, seed, out } => commands::generate_cmd(&rules, n, seed, &out),
        Command::Synth {
            input,
            rules,
            seed,
            language,
            out,
        } => commands::synth_cmd(&input, &rules, seed, language.as_deref(), &out),
        Command::TrainParser(e) => commands::train_parser_cmd(&e.load()?).map(drop),
        Command::TrainTeacher(e) => commands::train_teacher_cmd(&e.load()?).map(drop),
        Command::TrainStudent(e) => commands::train_student_cmd(&e.load()?).map(drop),
        Command::Evaluate {
            model,
            treebank,
            k,
            out,
        } => commands::evaluate_cmd(&model, &treebank, k, out.as_deref()).map(drop),
        Command::Typology {
            treebanks,
            k,
            raw,
            out_dir,
        } => commands::typology_cmd(&treebanks, k, !raw, &out_dir).map(drop),
        Command::Analyze {
            reports,
            points,
            out_dir,
        } => {
            if reports.is_empty() && points.is_none() {
                return Err(UsageError("analyze needs --reports or --points".into()).into());
            }
            commands::analyze_cmd(&reports, points.as_deref(), &out_dir).map(drop)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

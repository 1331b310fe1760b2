//! `cxrkit` command line: label corpora, score label and graph metrics,
//! compute trial statistics from a study export, simulate a complete study,
//! and serve the study API.

pub mod error;
pub mod input;
pub mod label;
pub mod output;
pub mod score;
pub mod serve;
pub mod simulate;
pub mod stats;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use cxrkit_core::classification::PositivePolicy;
use cxrkit_core::corpus::CorpusFormat;
use cxrkit_core::labeler::Lexicon;
use cxrkit_core::Labeler;
use serde::Serialize;

pub use error::CliError;
use output::{json_document, Header, OutputSet, Versions};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CorpusKind {
    Jsonl,
    Csv,
}

impl From<CorpusKind> for CorpusFormat {
    fn from(k: CorpusKind) -> Self {
        match k {
            CorpusKind::Jsonl => CorpusFormat::Jsonl,
            CorpusKind::Csv => CorpusFormat::Csv,
        }
    }
}

/// Where uncertain mentions land when labels collapse to binary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum UncertainArg {
    Positive,
    Negative,
}

impl UncertainArg {
    pub fn policy(self) -> PositivePolicy {
        match self {
            UncertainArg::Positive => PositivePolicy::UNCERTAIN_POSITIVE,
            UncertainArg::Negative => PositivePolicy::UNCERTAIN_NEGATIVE,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "cxrkit",
    version,
    about = "Chest X-ray report labeling, metrics and reader-study tools"
)]
pub struct Cli {
    /// Lexicon file replacing the built-in labeler lexicon.
    #[arg(long, global = true, env = "CXRKIT_LEXICON")]
    pub lexicon: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Attach finding labels to every report of a corpus.
    Label(label::LabelArgs),
    /// Compare predicted reports against references.
    Score(score::ScoreArgs),
    /// Outcome table from a study export.
    Stats(stats::StatsArgs),
    /// Run a scripted study end to end against the mock model.
    Simulate(simulate::SimulateArgs),
    /// Serve the study HTTP API.
    Serve(serve::ServeArgs),
}

pub fn load_labeler(path: Option<&Path>) -> Result<Labeler, CliError> {
    match path {
        None => Ok(Labeler::default()),
        Some(p) => {
            let p = input::resolve_input(p)?;
            let src = std::fs::read_to_string(&p).map_err(|e| CliError::io(&p, e))?;
            Ok(Labeler::new(Lexicon::parse(&src)?))
        }
    }
}

fn write_out(outputs: OutputSet) -> Result<(), CliError> {
    for path in outputs.commit()? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

pub async fn run(cli: Cli) -> Result<(), CliError> {
    let labeler = load_labeler(cli.lexicon.as_deref())?;
    let versions = Versions::new(labeler.lexicon_version());
    match cli.command {
        Command::Label(args) => {
            let args = args.resolve()?;
            let format = args.output_format()?;
            let (reports, summary) = label::run_label(&args, &labeler).await?;
            let header = Header::new("label", &args, None, versions);
            let mut out = OutputSet::new();
            out.add(&args.out, label::render_corpus(&reports, format, &header)?);
            write_out(out)?;
            println!("labeled {} reports ({})", summary.reports, summary.source);
            for (f, n) in &summary.positives {
                println!("  {:<28}{n:>6}", f.to_string());
            }
        }
        Command::Score(args) => {
            let args = args.resolve()?;
            let report = score::run_score(&args, &labeler)?;
            if let Some(path) = &args.out {
                let header = Header::new("score", &args, None, versions);
                let mut out = OutputSet::new();
                out.add(
                    input::resolve_output(path)?,
                    json_document(&header, &report),
                );
                write_out(out)?;
            }
            print!("{}", score::render_table(&report));
        }
        Command::Stats(args) => {
            let args = args.resolve()?;
            let export = stats::read_export(&args.export)?;
            let table = stats::outcomes(&export, args.alpha, args.threshold)?;
            if let Some(path) = &args.out {
                let header = Header::new("stats", &args, None, versions);
                let mut out = OutputSet::new();
                out.add(input::resolve_output(path)?, json_document(&header, &table));
                write_out(out)?;
            }
            print!("{}", stats::render_outcome_table(&table));
        }
        Command::Simulate(args) => {
            let args = args.resolve()?;
            let profile = args.load_profile()?;
            let outcome =
                simulate::run_simulation(&profile, args.seed, args.alpha, &labeler).await?;
            #[derive(Serialize)]
            struct Config<'a> {
                #[serde(flatten)]
                args: &'a simulate::SimulateArgs,
                profile: &'a simulate::Profile,
            }
            let header = Header::new(
                "simulate",
                &Config {
                    args: &args,
                    profile: &profile,
                },
                Some(args.seed),
                versions.with_model(simulate::model_version()),
            );
            if let Some(dir) = &args.out {
                let dir = input::resolve_output(dir)?;
                let mut out = OutputSet::new();
                out.add(
                    dir.join("simulation.json"),
                    json_document(&header, &outcome.report),
                );
                out.add(
                    dir.join("export.json"),
                    json_document(&header, &outcome.export),
                );
                out.add(
                    dir.join("stats.json"),
                    json_document(&header, &outcome.report.outcomes),
                );
                // Verbatim log, reopenable with the study id; its header is
                // the log's own first line.
                out.add(
                    cxrkit_study::store::events_path(&dir, &outcome.report.study_id),
                    outcome.events_jsonl.clone(),
                );
                write_out(out)?;
            }
            print!("{}", simulate::render_summary(&outcome.report));
        }
        Command::Serve(args) => serve::run_serve(&args, labeler).await?,
    }
    Ok(())
}

//! `elink`: build the local KG index, prepare training data, train the
//! models, link text, and score predictions.
//!
//! Exit codes: 0 success, 2 input-format error, 3 missing artifact,
//! 4 config error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(name = "elink", version, about = "Entity linking over a local knowledge graph")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the serialized KG index from a tab-separated entity dump.
    BuildIndex {
        /// Dump file: id<TAB>label<TAB>alias1|alias2|... per line.
        #[arg(long)]
        dump: PathBuf,
        /// Output index file.
        #[arg(long)]
        out: PathBuf,
    },
    /// Parse an aligned corpus, split it, and write training example files.
    Prepare {
        /// JSON-lines corpus: {"text", "annotations": [{start, end, surface, qid}]}.
        #[arg(long)]
        corpus: PathBuf,
        /// Serialized KG index (from build-index).
        #[arg(long)]
        index: PathBuf,
        /// Output directory for vocabulary, example files, and stats.
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Train one of the three models on prepared data.
    Train {
        #[arg(long, value_parser = ["extractor", "disambiguator", "baseline"])]
        task: String,
        /// Directory written by prepare.
        #[arg(long)]
        data: PathBuf,
        /// Output checkpoint path (a .loss.json trace is written alongside).
        #[arg(long)]
        out: PathBuf,
        /// Optional pre-trained embedding file (token + floats per line).
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Link text from standard input, one JSON prediction record per line.
    Link {
        #[arg(long)]
        index: Option<PathBuf>,
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        extractor: Option<PathBuf>,
        #[arg(long)]
        disambiguator: Option<PathBuf>,
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// full | top-candidate | baseline.
        #[arg(long)]
        mode: Option<String>,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Score predictions against a gold corpus and print the metric table.
    Evaluate {
        /// Gold corpus in the prepare input format.
        #[arg(long)]
        gold: PathBuf,
        /// Predictions as written by link.
        #[arg(long)]
        pred: PathBuf,
        /// Optional JSON report output path.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Row label for the metric table.
        #[arg(long, default_value = "pipeline")]
        method: String,
        #[command(flatten)]
        overrides: Overrides,
    },
    /// Convert a Wikidata JSON entity dump to the tab-separated dump format.
    ConvertDump {
        /// JSON dump: array or one entity object per line.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Convert an aligned-document JSON corpus to the JSON-lines format.
    ConvertCorpus {
        /// JSON array or JSON-lines of documents with text, entities, and
        /// sentence boundaries.
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::BuildIndex { dump, out } => commands::build_index(&dump, &out),
        Command::Prepare { corpus, index, out, overrides } => {
            commands::prepare(&corpus, &index, &out, &overrides)
        }
        Command::Train { task, data, out, embeddings, overrides } => {
            commands::train(&task, &data, &out, embeddings.as_deref(), &overrides)
        }
        Command::Link { index, vocab, extractor, disambiguator, baseline, mode, overrides } => {
            commands::link(commands::LinkPaths {
                index,
                vocab,
                extractor,
                disambiguator,
                baseline,
                mode,
            }, &overrides)
        }
        Command::Evaluate { gold, pred, out, method, overrides } => {
            commands::evaluate(&gold, &pred, out.as_deref(), &method, &overrides)
        }
        Command::ConvertDump { input, out } => commands::convert_dump(&input, &out),
        Command::ConvertCorpus { input, out } => commands::convert_corpus(&input, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(commands::classify_exit(&err))
        }
    }
}

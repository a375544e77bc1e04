mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use paraspan_core::metrics::Normalization;
use paraspan_core::windowing::{DEFAULT_MAX_SEQUENCE_UNITS, DEFAULT_OVERLAP};
use paraspan_core::{Setup, Split};

/// Paraphrase span retrieval pipelines.
#[derive(Debug, Parser)]
#[command(name = "paraspan", version, about)]
pub struct Cli {
    /// Worker threads (defaults to all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Turn a pair corpus into span-detection examples.
    Convert(ConvertArgs),
    /// Export overlapping document slices for a scorer.
    Slice(SliceArgs),
    /// Decode spans from logit sheets or the mock scorer.
    Decode(DecodeArgs),
    /// Run a sentence-level baseline.
    Retrieve(RetrieveArgs),
    /// Score predictions and write a report.
    Eval(EvalArgs),
    /// Categorize errors and draw a review sample.
    Analyze(AnalyzeArgs),
    /// Build augmented training data.
    Augment(AugmentArgs),
    /// Compare several reports.
    Report(ReportArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SetupArg {
    #[value(name = "1")]
    One,
    #[value(name = "2")]
    Two,
}

impl From<SetupArg> for Setup {
    fn from(s: SetupArg) -> Self {
        match s {
            SetupArg::One => Setup::One,
            SetupArg::Two => Setup::Two,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NormalizationArg {
    Normalized,
    Strict,
}

impl From<NormalizationArg> for Normalization {
    fn from(n: NormalizationArg) -> Self {
        match n {
            NormalizationArg::Normalized => Normalization::Normalized,
            NormalizationArg::Strict => Normalization::Strict,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum SplitArg {
    Train,
    Devel,
    Test,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Self {
        match s {
            SplitArg::Train => Split::Train,
            SplitArg::Devel => Split::Devel,
            SplitArg::Test => Split::Test,
        }
    }
}

#[derive(Debug, Args)]
pub struct ExampleInputs {
    /// Examples JSONL.
    #[arg(long)]
    pub examples: PathBuf,
    /// Documents JSONL.
    #[arg(long)]
    pub documents: PathBuf,
    /// Keep only examples of this split.
    #[arg(long, value_enum)]
    pub split: Option<SplitArg>,
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// Pairs JSONL (native format).
    #[arg(long, conflicts_with = "release", requires = "documents")]
    pub pairs: Option<PathBuf>,
    /// Documents JSONL (native format).
    #[arg(long)]
    pub documents: Option<PathBuf>,
    /// Release files (JSON array or JSONL), one per split.
    #[arg(long, num_args = 1.., required_unless_present = "pairs")]
    pub release: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "1")]
    pub setup: SetupArg,
    /// Examples JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the documents (required for release input).
    #[arg(long)]
    pub documents_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SliceArgs {
    #[command(flatten)]
    pub inputs: ExampleInputs,
    /// Scorer unit offsets JSONL; word tokens are used for examples without one.
    #[arg(long)]
    pub units: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_MAX_SEQUENCE_UNITS)]
    pub max_seq: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: usize,
    /// Slice records JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DecodeArgs {
    #[command(flatten)]
    pub inputs: ExampleInputs,
    /// Logit sheets JSONL.
    #[arg(long, required_unless_present = "mock", conflicts_with = "mock")]
    pub logits: Option<PathBuf>,
    /// Score slices with the built-in lexical mock.
    #[arg(long)]
    pub mock: bool,
    /// Write the mock sheets here.
    #[arg(long, requires = "mock")]
    pub sheets_out: Option<PathBuf>,
    /// Scorer unit offsets JSONL for mock slicing.
    #[arg(long, requires = "mock")]
    pub units: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "1")]
    pub setup: SetupArg,
    #[arg(long, default_value_t = DEFAULT_MAX_SEQUENCE_UNITS)]
    pub max_seq: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: usize,
    /// Longest span in units.
    #[arg(long)]
    pub max_span_units: Option<usize>,
    /// Predictions JSONL to write.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum, PartialEq, Eq)]
pub enum Method {
    Tfidf,
    Embedding,
    Oracle,
}

#[derive(Debug, Args)]
pub struct RetrieveArgs {
    #[command(flatten)]
    pub inputs: ExampleInputs,
    #[arg(long, value_enum)]
    pub method: Method,
    /// Fitted tf-idf model; fitted on the training documents when absent.
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Examples JSONL whose training split supplies the tf-idf documents.
    #[arg(long)]
    pub fit_examples: Option<PathBuf>,
    /// Save the fitted tf-idf model.
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Embedding JSONL with query and sentence vectors.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Write the queries and sentences to embed, then stop.
    #[arg(long)]
    pub export_sentences: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "normalized")]
    pub metric_normalization: NormalizationArg,
    /// Predictions JSONL to write.
    #[arg(long, required_unless_present = "export_sentences")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub inputs: ExampleInputs,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Name recorded in the report; sentence baselines are checked against
    /// the oracle.
    #[arg(long, default_value = "model")]
    pub method: String,
    #[arg(long, value_enum, default_value = "1")]
    pub setup: SetupArg,
    #[arg(long, value_enum, default_value = "normalized")]
    pub metric_normalization: NormalizationArg,
    #[arg(long, default_value_t = DEFAULT_MAX_SEQUENCE_UNITS)]
    pub max_seq: usize,
    #[arg(long, default_value_t = DEFAULT_OVERLAP)]
    pub overlap: usize,
    /// Lemma, synonym and stop-lemma files for the lexical breakdown.
    #[arg(long, env = "PARASPAN_RESOURCES")]
    pub resources: Option<PathBuf>,
    /// Report JSON to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Rendered table.
    #[arg(long)]
    pub table_out: Option<PathBuf>,
    /// Run metadata (timestamps) kept apart from the report.
    #[arg(long)]
    pub meta_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub inputs: ExampleInputs,
    #[arg(long)]
    pub predictions: PathBuf,
    /// Examples whose negative counterpart spans are known; defaults to
    /// `--examples`.
    #[arg(long)]
    pub negatives: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "normalized")]
    pub metric_normalization: NormalizationArg,
    /// Per-example categories JSONL.
    #[arg(long)]
    pub categories_out: PathBuf,
    /// Review sheet JSONL.
    #[arg(long)]
    pub review_out: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    pub review_k: usize,
    /// Characters of context around the spans in the review sheet.
    #[arg(long, default_value_t = 150)]
    pub excerpt_radius: usize,
}

#[derive(Debug, Args)]
pub struct AugmentArgs {
    #[command(subcommand)]
    pub command: AugmentCommand,
}

#[derive(Debug, Subcommand)]
pub enum AugmentCommand {
    /// Add an irretrievable copy of every retrievable example.
    Irretrievables {
        #[command(flatten)]
        inputs: ExampleInputs,
        #[arg(long)]
        out_examples: PathBuf,
        /// All documents, original and new.
        #[arg(long)]
        out_documents: PathBuf,
    },
    /// Draw one target sentence per document for back-translation.
    Targets {
        #[arg(long)]
        documents: PathBuf,
        /// Restrict to documents used by these examples.
        #[arg(long)]
        examples: Option<PathBuf>,
        #[arg(long, value_enum, requires = "examples")]
        split: Option<SplitArg>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Filter back-translation records and sample training examples.
    Bt {
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        documents: PathBuf,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Number of examples to draw.
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0.35)]
        band_low: f64,
        #[arg(long, default_value_t = 0.66)]
        band_high: f64,
        /// Fitted tf-idf model; fitted on the records' documents when absent.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "normalized")]
        metric_normalization: NormalizationArg,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum StrategyArg {
    Random,
    TfidfBand,
    TfidfMostDissimilar,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Report JSON files.
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(jobs) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global()
        {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match commands::run(cli) {
        Ok(commands::Status::Clean) => ExitCode::SUCCESS,
        Ok(commands::Status::Partial) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

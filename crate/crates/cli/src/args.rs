use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use lexborrow_core::Metric;

#[derive(Debug, Parser)]
#[command(name = "lexborrow", version, about = "Borrowing-likeliness metrics for code-mixed corpora")]
pub struct Cli {
    #[command(flatten)]
    pub pipeline: PipelineArgs,
    #[command(subcommand)]
    pub command: Command,
}

/// Pipeline settings shared by every subcommand. Values from `--config`
/// take precedence over these flags.
#[derive(Debug, Clone, Default, Args)]
pub struct PipelineArgs {
    /// JSON file with pipeline settings; overrides individual flags.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub mono_threshold: Option<f64>,
    #[arg(long, global = true)]
    pub eq_band: Option<f64>,
    #[arg(long, global = true)]
    pub min_trail: Option<usize>,
    #[arg(long, global = true)]
    pub mix_low: Option<f64>,
    #[arg(long, global = true)]
    pub mix_high: Option<f64>,
    #[arg(long, global = true)]
    pub top_n: Option<usize>,
    /// Fixed cluster count; the elbow search is used when absent.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    #[arg(long, global = true)]
    pub k_max: Option<usize>,
    #[arg(long, global = true)]
    pub mws_count: Option<usize>,
    #[arg(long, global = true)]
    pub per_stratum: Option<usize>,
    #[arg(long, global = true)]
    pub age_cut: Option<u32>,
    /// Additive smoothing for the baseline.
    #[arg(long, global = true)]
    pub lambda: Option<f64>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Filter a tagged corpus and report dropped records.
    Ingest {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Ingest report as JSON.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Re-tag every token from a `token<TAB>TAG` lexicon.
        #[arg(long)]
        lexicon: Option<PathBuf>,
    },
    /// Assign a tweet class to every tweet.
    Classify {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        histogram: Option<PathBuf>,
        /// Per-user mixing profiles and extent buckets as JSON.
        #[arg(long)]
        users: Option<PathBuf>,
    },
    /// Select candidate foreign words by code-mixed usage.
    Candidates {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stopwords: Option<PathBuf>,
        #[arg(long)]
        allowlist: Option<PathBuf>,
    },
    /// Compute 24-dimensional context features.
    Features {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Cluster feature vectors with k-means.
    Cluster {
        #[arg(long)]
        features: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw the hlws/mws target-word sample from a cluster model.
    Sample {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value = "baseline")]
        metric: Metric,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Score words with UUR, UTR and UPR.
    Metrics {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        classes: PathBuf,
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Raw usage counts as JSON.
        #[arg(long)]
        counts: Option<PathBuf>,
        /// Only count tweets by the users listed in this file.
        #[arg(long)]
        users: Option<PathBuf>,
    },
    /// Score words with the log frequency-ratio baseline.
    Baseline {
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        map: PathBuf,
        #[arg(long)]
        freq: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rank words by one metric, or by survey preference with `--survey`.
    Rank {
        #[arg(long, required_unless_present = "survey", conflicts_with = "survey")]
        scores: Option<PathBuf>,
        #[arg(long, default_value = "uur")]
        metric: Metric,
        #[arg(long)]
        survey: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Full evaluation report against survey ground truth.
    Evaluate {
        #[command(flatten)]
        inputs: EvalArgs,
        #[arg(long)]
        plan: Option<PathBuf>,
        /// Re-annotation export (line-delimited JSON).
        #[arg(long)]
        reannotation: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Age-cohort and mixing-extent tables only.
    Cohorts {
        #[command(flatten)]
        inputs: EvalArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build re-annotation tasks from the top, middle and bottom of a ranking.
    ReannotatePrep {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long, default_value = "uur")]
        metric: Metric,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Words without a qualifying tweet, per context mode, as JSON.
        #[arg(long)]
        shortfall: Option<PathBuf>,
    },
    /// Flip statistics from a re-annotation export.
    ReannotateStats {
        #[arg(long)]
        export: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the annotation HTTP service.
    Serve {
        /// Survey items, `word<TAB>sentence_foreign<TAB>sentence_native`.
        #[arg(long)]
        items: PathBuf,
        /// Re-annotation tasks as line-delimited JSON.
        #[arg(long)]
        tasks: Option<PathBuf>,
        /// Append-only response log.
        #[arg(long)]
        log: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
    },
    /// Generate a synthetic corpus with planted vocabulary.
    Synth {
        #[arg(long)]
        out: PathBuf,
        /// Desk-scale variant of roughly 500 tweets.
        #[arg(long)]
        small: bool,
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        filler_tweets: Option<usize>,
        #[arg(long)]
        baseline_noise: Option<f64>,
        #[arg(long)]
        annotators: Option<usize>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Survey export (line-delimited JSON).
    #[arg(long)]
    pub survey: PathBuf,
    /// Score files; may be repeated.
    #[arg(long, required = true)]
    pub scores: Vec<PathBuf>,
    /// Corpus and classes enable the mixing-extent table.
    #[arg(long, requires = "classes")]
    pub corpus: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    pub classes: Option<PathBuf>,
}

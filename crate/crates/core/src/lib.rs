//! Borrowing-likeliness metrics for foreign words in language-tagged,
//! code-mixed social media text.
//!
//! The pipeline runs bottom-up through these modules:
//!
//! * [`corpus`]: record format, ingestion filters, lexicon tagger
//! * [`classify`]: six tweet categories and per-user mixing extent
//! * [`candidates`]: target word selection, context features, k-means
//! * [`metrics`]: UUR / UTR / UPR and the log-frequency baseline
//! * [`eval`]: rank lists, Spearman's rho, five-range buckets, survey and
//!   re-annotation statistics
//! * [`annotator`]: durable store for human judgments
//! * [`report`]: pipeline config and the evaluation report
//! * [`synth`]: synthetic corpora with planted ground truth

pub mod annotator;
pub mod candidates;
pub mod classify;
pub mod corpus;
pub mod eval;
pub mod metrics;
pub mod report;
pub mod synth;

pub use classify::{ClassifierConfig, Classification, TweetClass};
pub use corpus::{Corpus, LanguageTag, PhraseSpan, PhraseTag, TaggedTweet, Token};
pub use eval::{RankList, SurveyTally};
pub use metrics::{Metric, MetricScore, WordUsageCounts};
pub use report::{EvaluationReport, PipelineConfig};

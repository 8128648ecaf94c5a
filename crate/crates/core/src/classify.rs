//! Tweet-level categories and per-user mixing extent.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, LanguageTag, TaggedTweet};

#[derive(Debug, Error, PartialEq)]
pub enum ClassifyError {
    #[error("tweet {id} has {found} L1/L2 tokens, at least {required} needed")]
    Unclassifiable { id: String, found: usize, required: usize },
    #[error("invalid classifier config: {0}")]
    InvalidConfig(String),
    #[error("unknown tweet class {0:?}")]
    UnknownClass(String),
    #[error("classes file line {line}: {message}")]
    ClassesFile { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TweetClass {
    MonoL1,
    MonoL2,
    CmL1,
    CmL2,
    CmEq,
    Cs,
}

impl TweetClass {
    pub const ALL: [TweetClass; 6] = [
        TweetClass::MonoL1,
        TweetClass::MonoL2,
        TweetClass::CmL1,
        TweetClass::CmL2,
        TweetClass::CmEq,
        TweetClass::Cs,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TweetClass::MonoL1 => "MONO_L1",
            TweetClass::MonoL2 => "MONO_L2",
            TweetClass::CmL1 => "CM_L1",
            TweetClass::CmL2 => "CM_L2",
            TweetClass::CmEq => "CM_EQ",
            TweetClass::Cs => "CS",
        }
    }

    /// Code-mixed in the narrow sense: CM_L1, CM_L2 or CM_EQ.
    pub fn is_code_mixed(self) -> bool {
        matches!(self, TweetClass::CmL1 | TweetClass::CmL2 | TweetClass::CmEq)
    }
}

impl fmt::Display for TweetClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TweetClass {
    type Err = ClassifyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TweetClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| ClassifyError::UnknownClass(s.to_string()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifierConfig {
    /// Strict lower bound on a language's share for a monolingual tweet.
    pub mono_threshold: f64,
    /// Half-width of the band around 0.5 treated as an equal mix.
    pub eq_band: f64,
    /// Minimum length of each trail in a code-switched tweet.
    pub min_trail: usize,
    pub min_content_tokens: usize,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            mono_threshold: 0.9,
            eq_band: 0.05,
            min_trail: 2,
            min_content_tokens: 1,
        }
    }
}

impl ClassifierConfig {
    pub fn validate(&self) -> Result<(), ClassifyError> {
        if !(self.mono_threshold > 0.5 && self.mono_threshold < 1.0) {
            return Err(ClassifyError::InvalidConfig(format!(
                "mono_threshold must lie in (0.5, 1), got {}",
                self.mono_threshold
            )));
        }
        if !(self.eq_band >= 0.0 && self.eq_band < 0.5) {
            return Err(ClassifyError::InvalidConfig(format!(
                "eq_band must lie in [0, 0.5), got {}",
                self.eq_band
            )));
        }
        if self.min_trail < 1 {
            return Err(ClassifyError::InvalidConfig("min_trail must be at least 1".into()));
        }
        Ok(())
    }
}

/// Classifies a raw tag sequence. NE and OTHER tags are ignored.
pub fn classify_tags(tags: &[LanguageTag], cfg: &ClassifierConfig) -> Option<TweetClass> {
    let content: Vec<LanguageTag> = tags.iter().copied().filter(|t| t.is_language()).collect();
    if content.is_empty() || content.len() < cfg.min_content_tokens {
        return None;
    }
    let n = content.len();
    let n1 = content.iter().filter(|&&t| t == LanguageTag::L1).count();
    let n2 = n - n1;
    // each fraction is a single rounded division so boundary cases compare exactly
    let f1 = n1 as f64 / n as f64;

    if f1 > cfg.mono_threshold {
        return Some(TweetClass::MonoL1);
    }
    if n2 as f64 / n as f64 > cfg.mono_threshold {
        return Some(TweetClass::MonoL2);
    }
    let runs = run_lengths(&content);
    if runs.len() == 2 && runs.iter().all(|&r| r >= cfg.min_trail) {
        return Some(TweetClass::Cs);
    }
    if n1.abs_diff(n2) as f64 / (2 * n) as f64 <= cfg.eq_band {
        return Some(TweetClass::CmEq);
    }
    if f1 > 0.5 {
        Some(TweetClass::CmL1)
    } else {
        Some(TweetClass::CmL2)
    }
}

fn run_lengths(tags: &[LanguageTag]) -> Vec<usize> {
    let mut runs: Vec<usize> = Vec::new();
    let mut prev = None;
    for &t in tags {
        if prev == Some(t) {
            *runs.last_mut().unwrap() += 1;
        } else {
            runs.push(1);
            prev = Some(t);
        }
    }
    runs
}

pub fn classify_tweet(tweet: &TaggedTweet, cfg: &ClassifierConfig) -> Result<TweetClass, ClassifyError> {
    let tags: Vec<LanguageTag> = tweet.tokens.iter().map(|t| t.tag).collect();
    classify_tags(&tags, cfg).ok_or_else(|| ClassifyError::Unclassifiable {
        id: tweet.id.clone(),
        found: tags.iter().filter(|t| t.is_language()).count(),
        required: cfg.min_content_tokens.max(1),
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassHistogram {
    pub counts: BTreeMap<TweetClass, usize>,
    pub unclassifiable: usize,
}

impl ClassHistogram {
    pub fn get(&self, class: TweetClass) -> usize {
        self.counts.get(&class).copied().unwrap_or(0)
    }

    pub fn classified(&self) -> usize {
        self.counts.values().sum()
    }
}

/// Per-tweet classes aligned with the corpus order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Classification {
    pub classes: Vec<Option<TweetClass>>,
    pub histogram: ClassHistogram,
}

impl Classification {
    pub fn from_classes(classes: Vec<Option<TweetClass>>) -> Self {
        let mut histogram = ClassHistogram::default();
        for c in &classes {
            match c {
                Some(c) => *histogram.counts.entry(*c).or_default() += 1,
                None => histogram.unclassifiable += 1,
            }
        }
        Classification { classes, histogram }
    }

    pub fn get(&self, index: usize) -> Option<TweetClass> {
        self.classes.get(index).copied().flatten()
    }

    /// `tweet_id<TAB>class` lines; unclassifiable tweets are omitted.
    pub fn write_tsv<W: Write>(&self, corpus: &Corpus, mut out: W) -> std::io::Result<()> {
        for (tweet, class) in corpus.tweets.iter().zip(&self.classes) {
            if let Some(class) = class {
                writeln!(out, "{}\t{}", tweet.id, class)?;
            }
        }
        Ok(())
    }

    /// Reads a classes TSV and aligns it with `corpus`. Tweets absent from
    /// the file are unclassifiable.
    pub fn read_tsv<R: BufRead>(corpus: &Corpus, reader: R) -> Result<Self, ClassifyError> {
        let mut by_id = std::collections::HashMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line.map_err(|e| ClassifyError::ClassesFile {
                line: idx + 1,
                message: e.to_string(),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let Some((id, class)) = line.split_once('\t') else {
                return Err(ClassifyError::ClassesFile {
                    line: idx + 1,
                    message: "expected tweet_id<TAB>class".into(),
                });
            };
            by_id.insert(id.to_string(), class.trim().parse::<TweetClass>()?);
        }
        let classes = corpus.tweets.iter().map(|t| by_id.get(&t.id).copied()).collect();
        Ok(Classification::from_classes(classes))
    }
}

pub fn classify_corpus(corpus: &Corpus, cfg: &ClassifierConfig) -> Classification {
    let classes: Vec<Option<TweetClass>> = corpus
        .tweets
        .par_iter()
        .map(|t| classify_tweet(t, cfg).ok())
        .collect();
    Classification::from_classes(classes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MixExtent {
    High,
    Mid,
    Low,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MixThresholds {
    pub low: f64,
    pub high: f64,
}

impl Default for MixThresholds {
    fn default() -> Self {
        MixThresholds { low: 0.07, high: 0.20 }
    }
}

impl MixThresholds {
    /// Boundary fractions (exactly `low` or `high`) belong to MID.
    pub fn bucket(&self, fraction: f64) -> MixExtent {
        if fraction > self.high {
            MixExtent::High
        } else if fraction < self.low {
            MixExtent::Low
        } else {
            MixExtent::Mid
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserMixProfile {
    pub user_id: String,
    pub total_tweets: usize,
    pub code_mixed_tweets: usize,
    pub mix_fraction: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MixBuckets {
    pub profiles: Vec<UserMixProfile>,
    pub buckets: BTreeMap<MixExtent, BTreeSet<String>>,
}

impl MixBuckets {
    pub fn users(&self, extent: MixExtent) -> BTreeSet<String> {
        self.buckets.get(&extent).cloned().unwrap_or_default()
    }
}

/// Partitions users by the share of their tweets that are code-mixed.
/// Every tweet of a user counts towards the total, classified or not.
pub fn user_mix_buckets(corpus: &Corpus, classes: &Classification, thresholds: MixThresholds) -> MixBuckets {
    let mut tally: BTreeMap<&str, (usize, usize)> = BTreeMap::new();
    for (i, tweet) in corpus.tweets.iter().enumerate() {
        let entry = tally.entry(tweet.user_id.as_str()).or_default();
        entry.0 += 1;
        if classes.get(i).is_some_and(TweetClass::is_code_mixed) {
            entry.1 += 1;
        }
    }
    let mut out = MixBuckets::default();
    for extent in [MixExtent::High, MixExtent::Mid, MixExtent::Low] {
        out.buckets.insert(extent, BTreeSet::new());
    }
    for (user, (total, mixed)) in tally {
        let mix_fraction = if total > 0 { mixed as f64 / total as f64 } else { 0.0 };
        out.buckets
            .get_mut(&thresholds.bucket(mix_fraction))
            .unwrap()
            .insert(user.to_string());
        out.profiles.push(UserMixProfile {
            user_id: user.to_string(),
            total_tweets: total,
            code_mixed_tweets: mixed,
            mix_fraction,
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Token;
    use proptest::prelude::*;
    use LanguageTag::*;

    fn classify(tags: &[LanguageTag]) -> Option<TweetClass> {
        classify_tags(tags, &ClassifierConfig::default())
    }

    fn tweet(id: &str, user: &str, tags: &[LanguageTag]) -> TaggedTweet {
        TaggedTweet {
            id: id.into(),
            user_id: user.into(),
            timestamp: None,
            tokens: tags.iter().enumerate().map(|(i, &g)| Token::new(format!("w{i}"), g)).collect(),
            phrases: vec![],
        }
    }

    #[test]
    fn homogeneous_is_mono() {
        assert_eq!(classify(&[L1; 10]), Some(TweetClass::MonoL1));
        assert_eq!(classify(&[L2; 3]), Some(TweetClass::MonoL2));
    }

    #[test]
    fn interleaved_majority() {
        assert_eq!(classify(&[L1, L2, L1, L2, L1, L1, L1, L1, L1, L1]), Some(TweetClass::CmL1));
        assert_eq!(classify(&[L2, L1, L2, L1, L2, L2, L2]), Some(TweetClass::CmL2));
    }

    #[test]
    fn two_trails_switch() {
        assert_eq!(classify(&[L1, L1, L1, L2, L2, L2]), Some(TweetClass::Cs));
        // a 60% majority with two trails is still a switch
        assert_eq!(classify(&[L2, L2, L1, L1, L1]), Some(TweetClass::Cs));
    }

    #[test]
    fn ninety_percent_is_not_mono() {
        let mut tags = vec![L1; 9];
        tags.push(L2);
        // trailing L2 run of length 1 fails min_trail=2
        assert_eq!(classify(&tags), Some(TweetClass::CmL1));
        let cfg = ClassifierConfig { min_trail: 1, ..Default::default() };
        assert_eq!(classify_tags(&tags, &cfg), Some(TweetClass::Cs));
    }

    #[test]
    fn equal_band() {
        assert_eq!(classify(&[L1, L2, L1, L2]), Some(TweetClass::CmEq));
        // f1 = 0.5 exactly but two trails: switch wins
        assert_eq!(classify(&[L1, L1, L2, L2]), Some(TweetClass::Cs));
        // 5 of 10 is inside the band, never a majority
        assert_eq!(classify(&[L1, L2, L1, L2, L1, L2, L1, L2, L1, L2]), Some(TweetClass::CmEq));
        let cfg = ClassifierConfig { eq_band: 0.0, ..Default::default() };
        assert_eq!(classify_tags(&[L1, L2, L2, L1], &cfg), Some(TweetClass::CmEq));
        assert_eq!(classify_tags(&[L1, L2, L1, L2, L2, L1, L2], &cfg), Some(TweetClass::CmL2));
    }

    #[test]
    fn multi_switch_goes_to_majority_rules() {
        assert_eq!(classify(&[L1, L1, L2, L2, L1, L1, L1]), Some(TweetClass::CmL1));
    }

    #[test]
    fn no_content_is_unclassifiable() {
        assert_eq!(classify(&[Ne, Other]), None);
        let err = classify_tweet(&tweet("x", "u", &[Ne]), &ClassifierConfig::default()).unwrap_err();
        assert!(matches!(err, ClassifyError::Unclassifiable { found: 0, .. }));
        let cfg = ClassifierConfig { min_content_tokens: 3, ..Default::default() };
        assert_eq!(classify_tags(&[L1, L1], &cfg), None);
    }

    #[test]
    fn config_validation() {
        assert!(ClassifierConfig::default().validate().is_ok());
        assert!(ClassifierConfig { mono_threshold: 0.5, ..Default::default() }.validate().is_err());
        assert!(ClassifierConfig { eq_band: 0.5, ..Default::default() }.validate().is_err());
        assert!(ClassifierConfig { min_trail: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn corpus_histogram() {
        let corpus = Corpus::new(vec![
            tweet("a", "u", &[L1; 5]),
            tweet("b", "u", &[L2; 5]),
            tweet("c", "v", &[L1, L1, L1, L2, L2, L2]),
            tweet("d", "v", &[Ne]),
        ]);
        let cls = classify_corpus(&corpus, &ClassifierConfig::default());
        assert_eq!(cls.histogram.get(TweetClass::MonoL1), 1);
        assert_eq!(cls.histogram.get(TweetClass::MonoL2), 1);
        assert_eq!(cls.histogram.get(TweetClass::Cs), 1);
        assert_eq!(cls.histogram.unclassifiable, 1);
        assert_eq!(cls.histogram.classified() + cls.histogram.unclassifiable, corpus.len());

        let mut buf = Vec::new();
        cls.write_tsv(&corpus, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "a\tMONO_L1\nb\tMONO_L2\nc\tCS\n");
        assert_eq!(Classification::read_tsv(&corpus, buf.as_slice()).unwrap(), cls);

        let empty = classify_corpus(&Corpus::default(), &ClassifierConfig::default());
        assert!(empty.classes.is_empty());
        assert_eq!(empty.histogram, ClassHistogram::default());
    }

    #[test]
    fn mix_buckets_boundaries() {
        let mk = |user: &str, n: usize, mixed: usize| -> Vec<TaggedTweet> {
            (0..n)
                .map(|i| {
                    let tags: &[LanguageTag] = if i < mixed { &[L1, L2, L1, L2, L1] } else { &[L1; 4] };
                    tweet(&format!("{user}-{i}"), user, tags)
                })
                .collect()
        };
        let mut tweets = mk("high", 10, 3);
        tweets.extend(mk("low", 100, 0));
        tweets.extend(mk("mid", 10, 2));
        let corpus = Corpus::new(tweets);
        let cls = classify_corpus(&corpus, &ClassifierConfig::default());
        let b = user_mix_buckets(&corpus, &cls, MixThresholds::default());
        assert!(b.users(MixExtent::High).contains("high"));
        assert!(b.users(MixExtent::Low).contains("low"));
        assert!(b.users(MixExtent::Mid).contains("mid"));
        let t = MixThresholds::default();
        assert_eq!(t.bucket(0.07), MixExtent::Mid);
        assert_eq!(t.bucket(0.0699), MixExtent::Low);
    }

    fn tag_strategy() -> impl Strategy<Value = LanguageTag> {
        prop_oneof![Just(L1), Just(L2), Just(Ne), Just(Other)]
    }

    proptest! {
        #[test]
        fn neutral_tokens_never_change_class(
            tags in prop::collection::vec(tag_strategy(), 0..30),
            extra in prop::collection::vec((0usize..31, prop_oneof![Just(Ne), Just(Other)]), 0..5),
        ) {
            let mut with_extra = tags.clone();
            for (pos, t) in extra {
                let pos = pos.min(with_extra.len());
                with_extra.insert(pos, t);
            }
            prop_assert_eq!(classify(&tags), classify(&with_extra));
        }

        #[test]
        fn mono_and_switch_properties(tags in prop::collection::vec(tag_strategy(), 1..30)) {
            let content: Vec<_> = tags.iter().copied().filter(|t| t.is_language()).collect();
            let n1 = content.iter().filter(|&&t| t == L1).count() as f64;
            match classify(&tags) {
                Some(TweetClass::MonoL1) => prop_assert!(n1 / content.len() as f64 > 0.9),
                Some(TweetClass::Cs) => {
                    let switches = content.windows(2).filter(|w| w[0] != w[1]).count();
                    prop_assert_eq!(switches, 1);
                }
                None => prop_assert!(content.is_empty()),
                _ => {}
            }
        }
    }
}

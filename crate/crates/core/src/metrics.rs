//! Social-signal borrowing ratios (UUR, UTR, UPR) and the reference-corpus
//! log-frequency baseline.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Classification, TweetClass};
use crate::corpus::{Corpus, PhraseTag};

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("no mapping row for words: {}", .0.join(", "))]
    MissingMapping(Vec<String>),
    #[error("zero frequency for {word:?} with smoothing disabled")]
    ZeroFrequency { word: String },
    #[error("{file} line {line}: {message}")]
    Parse {
        file: &'static str,
        line: usize,
        message: String,
    },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Usage counts of one word, split by the tweet class it appeared in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordUsageCounts {
    pub word: String,
    pub u_l1: usize,
    pub u_cml1: usize,
    pub u_l2: usize,
    pub t_l1: usize,
    pub t_cml1: usize,
    pub t_l2: usize,
    pub p_l1: usize,
    pub p_l2: usize,
    /// Occurrences of the word in any tweet, any tag.
    pub frequency: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Uur,
    Utr,
    Upr,
    Baseline,
}

impl Metric {
    pub const SOCIAL: [Metric; 3] = [Metric::Uur, Metric::Utr, Metric::Upr];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Uur => "uur",
            Metric::Utr => "utr",
            Metric::Upr => "upr",
            Metric::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Metric {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "uur" => Ok(Metric::Uur),
            "utr" => Ok(Metric::Utr),
            "upr" => Ok(Metric::Upr),
            "baseline" => Ok(Metric::Baseline),
            _ => Err(MetricsError::UnknownMetric(s.to_string())),
        }
    }
}

/// A metric value. `denominator_zero` marks `x/0` (value `+inf`), `0/0`
/// (value 0) and, for the baseline, a zero raw frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricScore {
    pub word: String,
    pub value: f64,
    pub denominator_zero: bool,
}

impl MetricScore {
    fn ratio(word: &str, num: usize, den: usize) -> Self {
        let value = match (num, den) {
            (0, 0) => 0.0,
            (_, 0) => f64::INFINITY,
            (n, d) => n as f64 / d as f64,
        };
        MetricScore {
            word: word.to_string(),
            value,
            denominator_zero: den == 0,
        }
    }
}

pub fn uur(c: &WordUsageCounts) -> MetricScore {
    MetricScore::ratio(&c.word, c.u_l1 + c.u_cml1, c.u_l2)
}

pub fn utr(c: &WordUsageCounts) -> MetricScore {
    MetricScore::ratio(&c.word, c.t_l1 + c.t_cml1, c.t_l2)
}

pub fn upr(c: &WordUsageCounts) -> MetricScore {
    MetricScore::ratio(&c.word, c.p_l1, c.p_l2)
}

pub fn score(metric: Metric, c: &WordUsageCounts) -> Option<MetricScore> {
    match metric {
        Metric::Uur => Some(uur(c)),
        Metric::Utr => Some(utr(c)),
        Metric::Upr => Some(upr(c)),
        Metric::Baseline => None,
    }
}

#[derive(Default)]
struct Accumulator<'a> {
    users_l1: HashSet<&'a str>,
    users_cml1: HashSet<&'a str>,
    users_l2: HashSet<&'a str>,
    t_l1: usize,
    t_cml1: usize,
    t_l2: usize,
    p_l1: usize,
    p_l2: usize,
    frequency: usize,
}

impl<'a> Accumulator<'a> {
    fn merge(&mut self, other: Accumulator<'a>) {
        self.users_l1.extend(other.users_l1);
        self.users_cml1.extend(other.users_cml1);
        self.users_l2.extend(other.users_l2);
        self.t_l1 += other.t_l1;
        self.t_cml1 += other.t_cml1;
        self.t_l2 += other.t_l2;
        self.p_l1 += other.p_l1;
        self.p_l2 += other.p_l2;
        self.frequency += other.frequency;
    }

    fn finish(self, word: &str) -> WordUsageCounts {
        WordUsageCounts {
            word: word.to_string(),
            u_l1: self.users_l1.len(),
            u_cml1: self.users_cml1.len(),
            u_l2: self.users_l2.len(),
            t_l1: self.t_l1,
            t_cml1: self.t_cml1,
            t_l2: self.t_l2,
            p_l1: self.p_l1,
            p_l2: self.p_l2,
            frequency: self.frequency,
        }
    }
}

/// Output of [`usage_counts_many`]: counts in the order words were given.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UsageTable {
    pub counts: Vec<WordUsageCounts>,
    /// True when at least one tweet lacked phrase spans and runs were derived.
    pub phrases_derived: bool,
}

/// Counts usage of every word in `words` in a single pass over the corpus.
/// When `users` is given, only tweets by those users are counted.
pub fn usage_counts_many(
    words: &[String],
    corpus: &Corpus,
    classes: &Classification,
    users: Option<&HashSet<String>>,
) -> UsageTable {
    let index: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_lowercase(), i))
        .collect();

    let fold = corpus
        .tweets
        .par_iter()
        .enumerate()
        .filter(|(_, t)| users.is_none_or(|u| u.contains(&t.user_id)))
        .fold(
            || (HashMap::<usize, Accumulator>::new(), false),
            |(mut acc, mut derived), (i, tweet)| {
                let lowered: Vec<String> = tweet.tokens.iter().map(|t| t.text.to_lowercase()).collect();
                let mut present: Vec<usize> = Vec::new();
                for tok in &lowered {
                    if let Some(&w) = index.get(tok) {
                        acc.entry(w).or_default().frequency += 1;
                        present.push(w);
                    }
                }
                if present.is_empty() {
                    return (acc, derived);
                }
                present.sort_unstable();
                present.dedup();
                let user = tweet.user_id.as_str();
                for &w in &present {
                    let a = acc.get_mut(&w).unwrap();
                    match classes.get(i) {
                        Some(TweetClass::MonoL1) => {
                            a.users_l1.insert(user);
                            a.t_l1 += 1;
                        }
                        Some(TweetClass::CmL1) => {
                            a.users_cml1.insert(user);
                            a.t_cml1 += 1;
                        }
                        Some(TweetClass::MonoL2) => {
                            a.users_l2.insert(user);
                            a.t_l2 += 1;
                        }
                        _ => {}
                    }
                }
                let (spans, was_derived) = tweet.phrase_spans();
                derived |= was_derived;
                for span in spans {
                    if span.tag == PhraseTag::Other {
                        continue;
                    }
                    let mut inside: Vec<usize> = lowered[span.start..span.end]
                        .iter()
                        .filter_map(|t| index.get(t).copied())
                        .collect();
                    inside.sort_unstable();
                    inside.dedup();
                    for w in inside {
                        let a = acc.get_mut(&w).unwrap();
                        if span.tag == PhraseTag::L1 {
                            a.p_l1 += 1;
                        } else {
                            a.p_l2 += 1;
                        }
                    }
                }
                (acc, derived)
            },
        )
        .reduce(
            || (HashMap::new(), false),
            |(mut left, ld), (right, rd)| {
                for (w, a) in right {
                    left.entry(w).or_default().merge(a);
                }
                (left, ld || rd)
            },
        );

    let (mut acc, phrases_derived) = fold;
    let counts = words
        .iter()
        .enumerate()
        .map(|(i, w)| acc.remove(&i).unwrap_or_default().finish(&w.to_lowercase()))
        .collect();
    UsageTable {
        counts,
        phrases_derived,
    }
}

pub fn usage_counts(word: &str, corpus: &Corpus, classes: &Classification) -> WordUsageCounts {
    let words = [word.to_string()];
    usage_counts_many(&words, corpus, classes, None).counts.remove(0)
}

/// Usage counts restricted to tweets written by `users`.
pub fn cohort_counts(
    word: &str,
    corpus: &Corpus,
    classes: &Classification,
    users: &HashSet<String>,
) -> WordUsageCounts {
    let words = [word.to_string()];
    usage_counts_many(&words, corpus, classes, Some(users)).counts.remove(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BaselineInputs {
    pub word: String,
    pub translit_form: String,
    pub translation_form: String,
    /// Frequency of the transliterated form.
    pub f_l2: u64,
    /// Frequency of the translation.
    pub f_l1: u64,
}

/// `ln((F_L2 + λ) / (F_L1 + λ))`. With `λ = 0` a zero count is an error.
pub fn baseline_score(b: &BaselineInputs, lambda: f64) -> Result<MetricScore, MetricsError> {
    let zero = b.f_l1 == 0 || b.f_l2 == 0;
    if zero && lambda <= 0.0 {
        return Err(MetricsError::ZeroFrequency { word: b.word.clone() });
    }
    let value = ((b.f_l2 as f64 + lambda) / (b.f_l1 as f64 + lambda)).ln();
    Ok(MetricScore {
        word: b.word.clone(),
        value,
        denominator_zero: zero,
    })
}

/// Word to `(transliteration, translation)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TranslationMap {
    pub rows: BTreeMap<String, (String, String)>,
}

impl TranslationMap {
    /// `word<TAB>translit_form<TAB>translation_form`
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut rows = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(MetricsError::Parse {
                    file: "translation map",
                    line: idx + 1,
                    message: format!("expected 3 columns, found {}", cols.len()),
                });
            }
            rows.insert(
                cols[0].trim().to_lowercase(),
                (cols[1].trim().to_string(), cols[2].trim().to_string()),
            );
        }
        Ok(TranslationMap { rows })
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (word, (translit, translation)) in &self.rows {
            writeln!(out, "{word}\t{translit}\t{translation}")?;
        }
        Ok(())
    }
}

/// Token frequencies of a reference corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    pub counts: BTreeMap<String, u64>,
}

impl FrequencyTable {
    /// `token<TAB>count`
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, MetricsError> {
        let mut counts = BTreeMap::new();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed = line
                .split_once('\t')
                .and_then(|(t, c)| c.trim().parse::<u64>().ok().map(|c| (t.trim().to_string(), c)));
            let Some((token, count)) = parsed else {
                return Err(MetricsError::Parse {
                    file: "frequency table",
                    line: idx + 1,
                    message: "expected token<TAB>count".into(),
                });
            };
            *counts.entry(token).or_default() += count;
        }
        Ok(FrequencyTable { counts })
    }

    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (token, count) in &self.counts {
            writeln!(out, "{token}\t{count}")?;
        }
        Ok(())
    }
}

/// Looks up both forms of each word. Every word must have a mapping row.
pub fn baseline_inputs(
    words: &[String],
    map: &TranslationMap,
    freq: &FrequencyTable,
) -> Result<Vec<BaselineInputs>, MetricsError> {
    let missing: Vec<String> = words
        .iter()
        .filter(|w| !map.rows.contains_key(&w.to_lowercase()))
        .cloned()
        .collect();
    if !missing.is_empty() {
        return Err(MetricsError::MissingMapping(missing));
    }
    Ok(words
        .iter()
        .map(|w| {
            let (translit, translation) = &map.rows[&w.to_lowercase()];
            BaselineInputs {
                word: w.to_lowercase(),
                translit_form: translit.clone(),
                translation_form: translation.clone(),
                f_l2: freq.get(translit),
                f_l1: freq.get(translation),
            }
        })
        .collect())
}

/// A row of the scores TSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreRow {
    pub metric: Metric,
    pub score: MetricScore,
}

fn format_value(v: f64) -> String {
    if v == f64::INFINITY {
        "inf".to_string()
    } else {
        format!("{v}")
    }
}

/// `word<TAB>metric<TAB>value<TAB>flags`; flags is `-` or `denominator_zero`.
pub fn write_scores_tsv<W: Write>(rows: &[ScoreRow], mut out: W) -> std::io::Result<()> {
    for r in rows {
        let flags = if r.score.denominator_zero { "denominator_zero" } else { "-" };
        writeln!(
            out,
            "{}\t{}\t{}\t{}",
            r.score.word,
            r.metric,
            format_value(r.score.value),
            flags
        )?;
    }
    Ok(())
}

pub fn read_scores_tsv<R: BufRead>(reader: R) -> Result<Vec<ScoreRow>, MetricsError> {
    let mut rows = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |message: String| MetricsError::Parse {
            file: "scores",
            line: idx + 1,
            message,
        };
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 4 {
            return Err(bad(format!("expected 4 columns, found {}", cols.len())));
        }
        let metric: Metric = cols[1].parse()?;
        let value: f64 = cols[2].parse().map_err(|_| bad(format!("bad value {:?}", cols[2])))?;
        rows.push(ScoreRow {
            metric,
            score: MetricScore {
                word: cols[0].to_string(),
                value,
                denominator_zero: cols[3].contains("denominator_zero"),
            },
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify_corpus, ClassifierConfig};
    use crate::corpus::{LanguageTag, PhraseSpan, TaggedTweet, Token};
    use LanguageTag::*;

    fn tweet(id: &str, user: &str, toks: &[(&str, LanguageTag)]) -> TaggedTweet {
        TaggedTweet {
            id: id.into(),
            user_id: user.into(),
            timestamp: None,
            tokens: toks.iter().map(|&(t, g)| Token::new(t, g)).collect(),
            phrases: vec![],
        }
    }

    fn counts(corpus: &Corpus, word: &str) -> WordUsageCounts {
        let cls = classify_corpus(corpus, &ClassifierConfig::default());
        usage_counts(word, corpus, &cls)
    }

    #[test]
    fn single_mono_l1_tweet() {
        let corpus = Corpus::new(vec![tweet("1", "u", &[("Film", L2), ("jaroor", L1), ("dekhna", L1), ("nahi", L1), ("to", L1), ("injection", L1), ("ready", L1), ("hai", L1), ("bhai", L1), ("ab", L1), ("kya", L1)])]);
        let c = counts(&corpus, "film");
        assert_eq!((c.u_l1, c.t_l1), (1, 1));
        assert_eq!((c.u_cml1, c.u_l2, c.t_cml1, c.t_l2), (0, 0, 0, 0));
        assert_eq!(c.frequency, 1);
    }

    #[test]
    fn same_user_many_tweets() {
        let tweets = (0..3)
            .map(|i| tweet(&i.to_string(), "u", &[("a", L2), ("film", L2), ("is", L2)]))
            .collect();
        let c = counts(&Corpus::new(tweets), "film");
        assert_eq!((c.u_l2, c.t_l2), (1, 3));
        // derived phrases: one L2 run per tweet
        assert_eq!((c.p_l1, c.p_l2), (0, 3));
    }

    #[test]
    fn explicit_phrases_override_runs() {
        let mut t = tweet("1", "u", &[("film", L2), ("dekho", L1), ("yaar", L1)]);
        t.phrases = vec![PhraseSpan { start: 0, end: 3, tag: PhraseTag::L1 }];
        let corpus = Corpus::new(vec![t]);
        let cls = classify_corpus(&corpus, &ClassifierConfig::default());
        let table = usage_counts_many(&["film".to_string()], &corpus, &cls, None);
        assert!(!table.phrases_derived);
        assert_eq!((table.counts[0].p_l1, table.counts[0].p_l2), (1, 0));
    }

    #[test]
    fn ratios() {
        let c = WordUsageCounts { u_l1: 4, u_cml1: 2, u_l2: 3, t_l2: 5, p_l1: 7, ..Default::default() };
        assert_eq!(uur(&c).value, 2.0);
        assert_eq!(utr(&c).value, 0.0);
        assert!(!utr(&c).denominator_zero);
        let s = upr(&c);
        assert_eq!(s.value, f64::INFINITY);
        assert!(s.denominator_zero);
        let zero = upr(&WordUsageCounts::default());
        assert_eq!(zero.value, 0.0);
        assert!(zero.denominator_zero);
    }

    fn inputs(f_l2: u64, f_l1: u64) -> BaselineInputs {
        BaselineInputs {
            word: "w".into(),
            translit_form: "x".into(),
            translation_form: "y".into(),
            f_l2,
            f_l1,
        }
    }

    #[test]
    fn baseline_values() {
        let s = baseline_score(&inputs(100, 10), 0.0).unwrap();
        assert!((s.value - std::f64::consts::LN_10).abs() < 1e-12);
        assert_eq!(baseline_score(&inputs(7, 7), 1.0).unwrap().value, 0.0);
        let s = baseline_score(&inputs(0, 50), 1.0).unwrap();
        assert!((s.value - (1.0f64 / 51.0).ln()).abs() < 1e-12);
        assert!((s.value + 3.9318).abs() < 1e-4);
        assert!(s.denominator_zero);
        assert!(matches!(
            baseline_score(&inputs(0, 50), 0.0),
            Err(MetricsError::ZeroFrequency { .. })
        ));
    }

    #[test]
    fn missing_mapping_lists_words() {
        let map = TranslationMap::from_tsv("film\tfilm_t\tchalchitra\n".as_bytes()).unwrap();
        let freq = FrequencyTable::from_tsv("film_t\t30\nchalchitra\t3\n".as_bytes()).unwrap();
        let words = vec!["film".to_string(), "thing".to_string(), "job".to_string()];
        match baseline_inputs(&words, &map, &freq) {
            Err(MetricsError::MissingMapping(m)) => assert_eq!(m, vec!["thing", "job"]),
            other => panic!("unexpected {other:?}"),
        }
        let got = baseline_inputs(&words[..1], &map, &freq).unwrap();
        assert_eq!((got[0].f_l2, got[0].f_l1), (30, 3));
    }

    #[test]
    fn cohort_restriction() {
        let corpus = Corpus::new(vec![
            tweet("1", "u", &[("film", L2), ("is", L2)]),
            tweet("2", "v", &[("film", L2), ("was", L2)]),
        ]);
        let cls = classify_corpus(&corpus, &ClassifierConfig::default());
        let all: HashSet<String> = ["u", "v"].iter().map(|s| s.to_string()).collect();
        assert_eq!(cohort_counts("film", &corpus, &cls, &all), usage_counts("film", &corpus, &cls));
        let none = cohort_counts("film", &corpus, &cls, &HashSet::new());
        assert_eq!(none, WordUsageCounts { word: "film".into(), ..Default::default() });
    }

    #[test]
    fn scores_tsv_roundtrip() {
        let rows = vec![
            ScoreRow { metric: Metric::Uur, score: MetricScore { word: "film".into(), value: 2.5, denominator_zero: false } },
            ScoreRow { metric: Metric::Upr, score: MetricScore { word: "job".into(), value: f64::INFINITY, denominator_zero: true } },
        ];
        let mut buf = Vec::new();
        write_scores_tsv(&rows, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap(),
            "film\tuur\t2.5\t-\njob\tupr\tinf\tdenominator_zero\n"
        );
        assert_eq!(read_scores_tsv(buf.as_slice()).unwrap(), rows);
    }
}

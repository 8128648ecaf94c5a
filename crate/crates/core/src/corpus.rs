//! Corpus data model, line-delimited JSON ingestion with script filtering,
//! and a lexicon lookup tagger for untagged demo input.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("failed to read corpus stream: {0}")]
    Io(#[from] std::io::Error),
    #[error("lexicon line {line}: {message}")]
    Lexicon { line: usize, message: String },
    #[error("unknown language tag {0:?}")]
    UnknownTag(String),
}

/// Word-level language tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LanguageTag {
    L1,
    L2,
    #[serde(rename = "NE")]
    Ne,
    #[serde(rename = "OTHER")]
    Other,
}

impl LanguageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            LanguageTag::L1 => "L1",
            LanguageTag::L2 => "L2",
            LanguageTag::Ne => "NE",
            LanguageTag::Other => "OTHER",
        }
    }

    /// True for the two language tags that take part in mixing fractions.
    pub fn is_language(self) -> bool {
        matches!(self, LanguageTag::L1 | LanguageTag::L2)
    }
}

impl fmt::Display for LanguageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LanguageTag {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "L1" => Ok(LanguageTag::L1),
            "L2" => Ok(LanguageTag::L2),
            "NE" => Ok(LanguageTag::Ne),
            "OTHER" => Ok(LanguageTag::Other),
            other => Err(CorpusError::UnknownTag(other.to_string())),
        }
    }
}

/// Phrase-level tag. Named entities do not exist at phrase level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PhraseTag {
    L1,
    L2,
    #[serde(rename = "OTHER")]
    Other,
}

impl From<LanguageTag> for PhraseTag {
    fn from(tag: LanguageTag) -> Self {
        match tag {
            LanguageTag::L1 => PhraseTag::L1,
            LanguageTag::L2 => PhraseTag::L2,
            LanguageTag::Ne | LanguageTag::Other => PhraseTag::Other,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Token {
    #[serde(rename = "t")]
    pub text: String,
    #[serde(rename = "g")]
    pub tag: LanguageTag,
}

impl Token {
    pub fn new(text: impl Into<String>, tag: LanguageTag) -> Self {
        Token {
            text: text.into(),
            tag,
        }
    }

    pub fn is_url(&self) -> bool {
        let t = self.text.to_ascii_lowercase();
        t.contains("://") || t.starts_with("www.")
    }

    pub fn is_mention(&self) -> bool {
        self.text.len() > 1 && self.text.starts_with('@')
    }
}

/// Half-open token range `[start, end)` carrying a phrase-level tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PhraseSpan {
    #[serde(rename = "s")]
    pub start: usize,
    #[serde(rename = "e")]
    pub end: usize,
    #[serde(rename = "g")]
    pub tag: PhraseTag,
}

impl PhraseSpan {
    pub fn contains(&self, index: usize) -> bool {
        self.start <= index && index < self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaggedTweet {
    pub id: String,
    #[serde(rename = "user")]
    pub user_id: String,
    #[serde(rename = "ts", default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<i64>,
    pub tokens: Vec<Token>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub phrases: Vec<PhraseSpan>,
}

impl TaggedTweet {
    /// Phrase spans from the input, or maximal same-tag token runs when
    /// the record carried none. The flag is true when spans were derived.
    pub fn phrase_spans(&self) -> (Vec<PhraseSpan>, bool) {
        if !self.phrases.is_empty() {
            return (self.phrases.clone(), false);
        }
        let mut spans = Vec::new();
        let mut start = 0;
        for i in 1..=self.tokens.len() {
            if i == self.tokens.len() || self.tokens[i].tag != self.tokens[start].tag {
                spans.push(PhraseSpan {
                    start,
                    end: i,
                    tag: self.tokens[start].tag.into(),
                });
                start = i;
            }
        }
        (spans, true)
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty tweet id".into());
        }
        for (i, tok) in self.tokens.iter().enumerate() {
            if tok.text.trim().is_empty() {
                return Err(format!("token {i} is empty"));
            }
            if tok.text.chars().any(char::is_whitespace) {
                return Err(format!("token {i} contains whitespace"));
            }
        }
        let mut spans = self.phrases.clone();
        spans.sort_by_key(|s| s.start);
        for s in &spans {
            if s.start >= s.end || s.end > self.tokens.len() {
                return Err(format!("phrase span [{}, {}) out of range", s.start, s.end));
            }
        }
        for pair in spans.windows(2) {
            if pair[1].start < pair[0].end {
                return Err("overlapping phrase spans".into());
            }
        }
        Ok(())
    }
}

/// An ingested corpus, in input order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    pub tweets: Vec<TaggedTweet>,
}

impl Corpus {
    pub fn new(tweets: Vec<TaggedTweet>) -> Self {
        Corpus { tweets }
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    pub fn users(&self) -> HashSet<&str> {
        self.tweets.iter().map(|t| t.user_id.as_str()).collect()
    }

    /// Writes the corpus in the line-delimited record format.
    pub fn write_jsonl<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for tweet in &self.tweets {
            serde_json::to_writer(&mut out, tweet)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Set of codepoints accepted as romanized script.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptFilter {
    ranges: Vec<(u32, u32)>,
}

impl Default for ScriptFilter {
    /// Basic Latin, Latin-1 Supplement and General Punctuation.
    fn default() -> Self {
        ScriptFilter {
            ranges: vec![(0x20, 0x7E), (0xA0, 0xFF), (0x2000, 0x206F)],
        }
    }
}

impl ScriptFilter {
    /// Inclusive codepoint ranges.
    pub fn from_ranges(mut ranges: Vec<(u32, u32)>) -> Self {
        ranges.sort_unstable();
        ScriptFilter { ranges }
    }

    pub fn allows(&self, c: char) -> bool {
        let cp = c as u32;
        self.ranges.iter().any(|&(lo, hi)| lo <= cp && cp <= hi)
    }

    pub fn allows_str(&self, s: &str) -> bool {
        s.chars().all(|c| self.allows(c))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    Malformed,
    Empty,
    UrlOnly,
    NonRomanized,
    DuplicateId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordError {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub total: usize,
    pub kept: usize,
    pub dropped: BTreeMap<DropReason, usize>,
    pub errors: Vec<RecordError>,
}

impl IngestReport {
    pub fn dropped_total(&self) -> usize {
        self.dropped.values().sum()
    }

    fn drop(&mut self, reason: DropReason) {
        *self.dropped.entry(reason).or_default() += 1;
    }
}

/// Filtering predicate applied to a parsed record. `None` means kept.
pub fn filter_reason(tweet: &TaggedTweet, script: &ScriptFilter) -> Option<DropReason> {
    if tweet.tokens.is_empty() {
        return Some(DropReason::Empty);
    }
    if tweet.tokens.iter().all(|t| t.is_url() || t.is_mention()) {
        return Some(DropReason::UrlOnly);
    }
    if tweet.tokens.iter().any(|t| !script.allows_str(&t.text)) {
        return Some(DropReason::NonRomanized);
    }
    None
}

/// Reads line-delimited tweet records, keeping those that pass the filters.
///
/// Blank lines are not records. Malformed records are reported per line and
/// never abort the stream; only a read failure is fatal.
pub fn ingest<R: BufRead>(
    reader: R,
    script: &ScriptFilter,
) -> Result<(Corpus, IngestReport), CorpusError> {
    let mut report = IngestReport::default();
    let mut seen = HashSet::new();
    let mut tweets = Vec::new();

    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        report.total += 1;
        let parsed = serde_json::from_str::<TaggedTweet>(&line)
            .map_err(|e| e.to_string())
            .and_then(|t| t.validate().map(|_| t));
        let tweet = match parsed {
            Ok(t) => t,
            Err(message) => {
                report.errors.push(RecordError {
                    line: idx + 1,
                    message,
                });
                report.drop(DropReason::Malformed);
                continue;
            }
        };
        if let Some(reason) = filter_reason(&tweet, script) {
            report.drop(reason);
            continue;
        }
        if !seen.insert(tweet.id.clone()) {
            report.drop(DropReason::DuplicateId);
            continue;
        }
        tweets.push(tweet);
    }
    report.kept = tweets.len();
    Ok((Corpus::new(tweets), report))
}

/// Lowercase token text to language tag.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Lexicon {
    entries: HashMap<String, LanguageTag>,
}

impl Lexicon {
    pub fn insert(&mut self, token: &str, tag: LanguageTag) {
        self.entries.insert(token.to_lowercase(), tag);
    }

    pub fn get(&self, token: &str) -> Option<LanguageTag> {
        self.entries.get(&token.to_lowercase()).copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Parses `token<TAB>TAG` lines; `#` starts a comment line.
    pub fn from_tsv<R: BufRead>(reader: R) -> Result<Self, CorpusError> {
        let mut lex = Lexicon::default();
        for (idx, line) in reader.lines().enumerate() {
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let mut cols = trimmed.split('\t');
            let (Some(token), Some(tag), None) = (cols.next(), cols.next(), cols.next()) else {
                return Err(CorpusError::Lexicon {
                    line: idx + 1,
                    message: "expected token<TAB>TAG".into(),
                });
            };
            let tag = tag.trim().parse().map_err(|e: CorpusError| CorpusError::Lexicon {
                line: idx + 1,
                message: e.to_string(),
            })?;
            lex.insert(token.trim(), tag);
        }
        Ok(lex)
    }
}

/// Tags raw tokens by lexicon lookup. Mentions are named entities; hashtags,
/// URLs and unknown words are `OTHER`.
pub fn lexicon_tag<S: AsRef<str>>(tokens: &[S], lexicon: &Lexicon) -> Vec<Token> {
    tokens
        .iter()
        .map(|raw| {
            let text = raw.as_ref();
            let tag = if text.starts_with('@') {
                LanguageTag::Ne
            } else if text.starts_with('#') || text.contains("://") {
                LanguageTag::Other
            } else {
                lexicon.get(text).unwrap_or(LanguageTag::Other)
            };
            Token::new(text, tag)
        })
        .collect()
}

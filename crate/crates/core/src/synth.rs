//! Synthetic corpora with planted borrowed and code-mixed vocabulary.
//!
//! Every target word gets a latent borrowedness in `(0, 1)`. Borrowed words
//! are used by many distinct users inside native-language tweets; mixed
//! words mostly show up in foreign monolingual tweets. Alongside the corpus
//! the generator produces a noisy reference frequency table for the
//! baseline, a translation map, survey items and simulated survey answers.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::annotator::{SurveyExportRecord, SurveyItem};
use crate::corpus::{Corpus, LanguageTag, PhraseSpan, PhraseTag, TaggedTweet, Token};
use crate::eval::Choice;
use crate::metrics::{FrequencyTable, TranslationMap};

const TARGET_WORDS: &[&str] = &[
    "film", "job", "car", "road", "school", "college", "petrol", "uncle", "ticket", "station",
    "doctor", "hospital", "phone", "bus", "train", "cricket", "party", "office", "police", "bank",
    "hotel", "cinema", "glass", "bottle", "table", "computer", "engine", "machine", "pencil", "cycle",
    "thing", "way", "reason", "question", "matter", "moment", "week", "luck", "status", "review",
    "scene", "degree", "protest", "lyrics", "request", "traffic", "performance", "development", "interview", "service",
    "friend", "group", "share", "blue", "cool", "rest", "play", "member", "issue", "budget",
];

const NATIVE_FILLER: &[&str] = &[
    "hai", "nahi", "kya", "bahut", "accha", "yaar", "bhai", "ab", "to", "mein", "ki", "ka", "ko", "se",
    "par", "aur", "bhi", "kuch", "sab", "log", "kar", "raha", "tha", "ho", "gaya", "dekho", "chalo",
];

const FOREIGN_FILLER: &[&str] = &[
    "the", "is", "a", "of", "and", "to", "in", "it", "this", "that", "good", "very", "great", "so",
    "really", "what", "with", "for", "was", "just",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub borrowed_words: usize,
    pub mixed_words: usize,
    pub users: usize,
    /// Native-context users of the most borrowed word, roughly.
    pub usage_scale: usize,
    pub filler_tweets: usize,
    /// Standard deviation of the noise added to the baseline log ratio.
    pub baseline_noise: f64,
    pub annotators: usize,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 7,
            borrowed_words: 30,
            mixed_words: 27,
            users: 150,
            usage_scale: 30,
            filler_tweets: 400,
            baseline_noise: 2.5,
            annotators: 58,
        }
    }
}

impl SynthConfig {
    /// Desk-scale variant with roughly 500 tweets.
    pub fn small(seed: u64) -> Self {
        SynthConfig {
            seed,
            users: 40,
            usage_scale: 2,
            filler_tweets: 30,
            ..SynthConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub corpus: Corpus,
    /// Planted borrowedness per target word, most borrowed first.
    pub truth: Vec<(String, f64)>,
    pub borrowed: Vec<String>,
    pub mixed: Vec<String>,
    pub map: TranslationMap,
    pub freq: FrequencyTable,
    pub items: Vec<SurveyItem>,
    pub survey: Vec<SurveyExportRecord>,
    pub stopwords: Vec<String>,
}

struct Builder {
    rng: ChaCha8Rng,
    tweets: Vec<TaggedTweet>,
    ts: i64,
}

impl Builder {
    fn filler(&mut self, tag: LanguageTag) -> Token {
        let pool = if tag == LanguageTag::L1 { NATIVE_FILLER } else { FOREIGN_FILLER };
        Token::new(*pool.choose(&mut self.rng).unwrap(), tag)
    }

    fn push(&mut self, user: &str, tokens: Vec<Token>, phrases: Vec<PhraseSpan>) {
        let id = format!("t{:06}", self.tweets.len() + 1);
        self.ts += 1 + self.rng.gen_range(0..600);
        self.tweets.push(TaggedTweet {
            id,
            user_id: user.to_string(),
            timestamp: Some(self.ts),
            tokens,
            phrases,
        });
    }

    /// Native tweet carrying `word` as a foreign-tagged token. With `mixed`
    /// the tweet gets two interleaved foreign fillers, otherwise it stays
    /// above the monolingual threshold.
    fn native_context(&mut self, user: &str, word: &str, mixed: bool) {
        let len = if mixed { self.rng.gen_range(7..10) } else { self.rng.gen_range(11..15) };
        let mut tokens: Vec<Token> = (0..len).map(|_| self.filler(LanguageTag::L1)).collect();
        let pos = self.rng.gen_range(1..len - 1);
        tokens.insert(pos, Token::new(word, LanguageTag::L2));
        if mixed {
            // foreign fillers at alternate positions, away from a trail pattern
            let a = if pos > 3 { 1 } else { pos + 2 };
            tokens.insert(a, self.filler(LanguageTag::L2));
            let b = tokens.len() - 2;
            tokens.insert(b, self.filler(LanguageTag::L2));
        }
        let target = tokens.iter().position(|t| t.text == word && t.tag == LanguageTag::L2).unwrap();
        let phrases = phrase_runs(&tokens, Some(target));
        self.maybe_decorate(&mut tokens);
        let shift = usize::from(tokens.first().is_some_and(|t| t.tag == LanguageTag::Ne));
        let phrases = shift_spans(phrases, shift, tokens.len());
        self.push(user, tokens, phrases);
    }

    fn foreign_context(&mut self, user: &str, word: &str, mixed: bool) {
        let len = if mixed { self.rng.gen_range(6..9) } else { self.rng.gen_range(10..14) };
        let mut tokens: Vec<Token> = (0..len).map(|_| self.filler(LanguageTag::L2)).collect();
        let pos = self.rng.gen_range(0..=len);
        tokens.insert(pos, Token::new(word, LanguageTag::L2));
        if mixed {
            let a = 1;
            tokens.insert(a, self.filler(LanguageTag::L1));
            let b = tokens.len() - 2;
            tokens.insert(b, self.filler(LanguageTag::L1));
        }
        let phrases = phrase_runs(&tokens, None);
        self.maybe_decorate(&mut tokens);
        let shift = usize::from(tokens.first().is_some_and(|t| t.tag == LanguageTag::Ne));
        let phrases = shift_spans(phrases, shift, tokens.len());
        self.push(user, tokens, phrases);
    }

    fn maybe_decorate(&mut self, tokens: &mut Vec<Token>) {
        if self.rng.gen_bool(0.15) {
            let n = self.rng.gen_range(1..500);
            tokens.insert(0, Token::new(format!("@user{n}"), LanguageTag::Ne));
        }
        if self.rng.gen_bool(0.1) {
            tokens.push(Token::new("https://t.co/x", LanguageTag::Other));
        }
    }
}

fn shift_spans(spans: Vec<PhraseSpan>, shift: usize, len: usize) -> Vec<PhraseSpan> {
    let mut out: Vec<PhraseSpan> = spans
        .into_iter()
        .map(|s| PhraseSpan { start: s.start + shift, end: s.end + shift, tag: s.tag })
        .collect();
    if shift == 1 {
        out.insert(0, PhraseSpan { start: 0, end: 1, tag: PhraseTag::Other });
    }
    let covered = out.last().map_or(0, |s| s.end);
    if covered < len {
        out.push(PhraseSpan { start: covered, end: len, tag: PhraseTag::Other });
    }
    out
}

/// Maximal same-tag runs; the token at `absorb` takes the tag of the run
/// around it, modelling a borrowed word inside a native phrase.
fn phrase_runs(tokens: &[Token], absorb: Option<usize>) -> Vec<PhraseSpan> {
    let tags: Vec<PhraseTag> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| {
            if Some(i) == absorb {
                let left = i.checked_sub(1).map(|j| tokens[j].tag);
                let right = tokens.get(i + 1).map(|t| t.tag);
                if left == Some(LanguageTag::L1) || right == Some(LanguageTag::L1) {
                    return PhraseTag::L1;
                }
            }
            t.tag.into()
        })
        .collect();
    let mut spans = Vec::new();
    let mut start = 0;
    for i in 1..=tags.len() {
        if i == tags.len() || tags[i] != tags[start] {
            spans.push(PhraseSpan { start, end: i, tag: tags[start] });
            start = i;
        }
    }
    spans
}

fn spaced(n: usize, hi: f64, lo: f64) -> Vec<f64> {
    if n == 1 {
        return vec![(hi + lo) / 2.0];
    }
    (0..n).map(|i| hi - (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

pub fn generate(cfg: &SynthConfig) -> SynthOutput {
    let n_words = (cfg.borrowed_words + cfg.mixed_words).min(TARGET_WORDS.len());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut vocab: Vec<&str> = TARGET_WORDS.to_vec();
    vocab.shuffle(&mut rng);
    let vocab = &vocab[..n_words];
    let n_borrowed = cfg.borrowed_words.min(n_words);

    let mut levels = spaced(n_borrowed, 0.95, 0.55);
    levels.extend(spaced(n_words - n_borrowed, 0.45, 0.05));
    let truth: Vec<(String, f64)> = vocab.iter().map(|w| w.to_string()).zip(levels).collect();

    let users: Vec<String> = (0..cfg.users.max(1)).map(|u| format!("user{u:03}")).collect();
    let mix_rates: Vec<f64> = users.iter().map(|_| rng.gen_range(0.0..0.4)).collect();
    let mut b = Builder {
        rng: ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed),
        tweets: Vec::new(),
        ts: 1_450_000_000,
    };

    for (word, level) in &truth {
        let native_users = 2 + (cfg.usage_scale as f64 * level).round() as usize;
        let foreign_users = 2 + (cfg.usage_scale as f64 * (1.0 - level)).round() as usize;
        let pick = |rng: &mut ChaCha8Rng, n: usize| -> Vec<String> {
            users.choose_multiple(rng, n.min(users.len())).cloned().collect()
        };
        for user in pick(&mut rng, native_users) {
            let repeats = 1 + usize::from(rng.gen_bool(0.3));
            for _ in 0..repeats {
                let mixed = rng.gen_bool(0.4);
                b.native_context(&user, word, mixed);
            }
        }
        for user in pick(&mut rng, foreign_users) {
            let repeats = 1 + usize::from(rng.gen_bool(0.3));
            for _ in 0..repeats {
                b.foreign_context(&user, word, false);
            }
            if rng.gen_bool(0.3) {
                b.foreign_context(&user, word, true);
            }
        }
    }

    for _ in 0..cfg.filler_tweets {
        let u = rng.gen_range(0..users.len());
        let mixed = rng.gen_bool(mix_rates[u]);
        let native = rng.gen_bool(0.4);
        let len = rng.gen_range(5..12);
        let mut tokens = Vec::with_capacity(len);
        for i in 0..len {
            let tag = if mixed {
                if i % 3 == 1 { LanguageTag::L2 } else { LanguageTag::L1 }
            } else if native {
                LanguageTag::L1
            } else {
                LanguageTag::L2
            };
            tokens.push(b.filler(tag));
        }
        b.push(&users[u], tokens, Vec::new());
    }

    let mut tweets = std::mem::take(&mut b.tweets);
    tweets.shuffle(&mut rng);
    let corpus = Corpus::new(tweets);

    let noise = Normal::new(0.0, cfg.baseline_noise.max(0.0)).expect("finite noise");
    let mut map = TranslationMap::default();
    let mut freq = FrequencyTable::default();
    for (word, level) in &truth {
        let translit = format!("{word}_tr");
        let translation = format!("hi_{word}");
        let log_ratio = 4.0 * (level - 0.5) + noise.sample(&mut rng);
        let f_l1: u64 = rng.gen_range(200..2000);
        let f_l2 = (f_l1 as f64 * log_ratio.exp()).round() as u64;
        freq.counts.insert(translit.clone(), f_l2);
        freq.counts.insert(translation.clone(), f_l1);
        map.rows.insert(word.clone(), (translit, translation));
    }

    let items: Vec<SurveyItem> = truth
        .iter()
        .enumerate()
        .map(|(i, (word, _))| SurveyItem {
            item_id: format!("item-{:03}", i + 1),
            word: word.clone(),
            sentence_foreign: format!("mujhe yeh {word} bahut pasand hai"),
            sentence_native: format!("mujhe yeh hi_{word} bahut pasand hai"),
        })
        .collect();

    let mut survey = Vec::new();
    let level_of: BTreeMap<&str, f64> = truth.iter().map(|(w, l)| (w.as_str(), *l)).collect();
    for a in 0..cfg.annotators {
        let annotator_id = format!("annotator{a:02}");
        let age = rng.gen_range(18..66);
        for item in &items {
            let level = level_of[item.word.as_str()];
            let r: f64 = rng.gen();
            let choice = if r < 0.1 {
                Choice::Neither
            } else if r < 0.1 + 0.9 * level {
                Choice::Foreign
            } else {
                Choice::Native
            };
            survey.push(SurveyExportRecord {
                annotator_id: annotator_id.clone(),
                age,
                item_id: item.item_id.clone(),
                word: item.word.clone(),
                choice,
                received_at: 1_460_000_000 + survey.len() as i64,
            });
        }
    }

    SynthOutput {
        corpus,
        borrowed: truth[..n_borrowed].iter().map(|(w, _)| w.clone()).collect(),
        mixed: truth[n_borrowed..].iter().map(|(w, _)| w.clone()).collect(),
        truth,
        map,
        freq,
        items,
        survey,
        stopwords: FOREIGN_FILLER.iter().map(|s| s.to_string()).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classify::{classify_corpus, ClassifierConfig, TweetClass};

    #[test]
    fn deterministic_per_seed() {
        let a = generate(&SynthConfig::small(3));
        let b = generate(&SynthConfig::small(3));
        assert_eq!(a, b);
        assert_ne!(a.corpus, generate(&SynthConfig::small(4)).corpus);
    }

    #[test]
    fn planted_contexts_classify_as_intended() {
        let out = generate(&SynthConfig::small(1));
        let cls = classify_corpus(&out.corpus, &ClassifierConfig::default());
        assert_eq!(cls.histogram.unclassifiable, 0);
        for c in [TweetClass::MonoL1, TweetClass::MonoL2, TweetClass::CmL1, TweetClass::CmL2] {
            assert!(cls.histogram.get(c) > 0, "{c} missing: {:?}", cls.histogram);
        }
        let ids: std::collections::HashSet<_> = out.corpus.tweets.iter().map(|t| &t.id).collect();
        assert_eq!(ids.len(), out.corpus.len());
    }

    #[test]
    fn small_corpus_is_desk_scale() {
        let out = generate(&SynthConfig::small(7));
        assert!((400..=650).contains(&out.corpus.len()), "{}", out.corpus.len());
        assert_eq!(out.truth.len(), 57);
        assert_eq!(out.survey.len(), 57 * 58);
    }

    #[test]
    fn phrase_spans_are_valid() {
        let out = generate(&SynthConfig::small(2));
        for t in &out.corpus.tweets {
            let mut end = 0;
            for s in &t.phrases {
                assert_eq!(s.start, end);
                assert!(s.end > s.start);
                end = s.end;
            }
            assert!(t.phrases.is_empty() || end == t.tokens.len());
        }
    }
}

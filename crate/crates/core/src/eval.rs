//! Rank lists, rank correlation, five-range bucket agreement, survey-based
//! ground truth and re-annotation statistics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Corpus, LanguageTag};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("word sets differ; only in one list: {}", .0.join(", "))]
    WordSetMismatch(Vec<String>),
    #[error("rank correlation undefined: a rank list has zero variance")]
    ZeroVariance,
    #[error("at least {needed} ranked words required, found {found}")]
    TooFewWords { needed: usize, found: usize },
    #[error("empty rank list")]
    Empty,
    #[error("word {0:?} tallied more than once")]
    DuplicateWord(String),
    #[error("{stratum} slice holds {size} words, {requested} requested")]
    SliceTooSmall {
        stratum: Stratum,
        size: usize,
        requested: usize,
    },
    #[error("duplicate re-annotation record for word {word:?}, annotator {annotator:?}")]
    DuplicateRecord { word: String, annotator: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedItem {
    pub word: String,
    pub score: f64,
    pub rank: f64,
}

/// Words in non-increasing score order; tied words share their mean position.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RankList {
    pub items: Vec<RankedItem>,
}

impl RankList {
    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn words(&self) -> Vec<String> {
        self.items.iter().map(|i| i.word.clone()).collect()
    }

    pub fn rank_of(&self) -> HashMap<&str, f64> {
        self.items.iter().map(|i| (i.word.as_str(), i.rank)).collect()
    }

    /// Keeps only `words`, re-ranking the survivors.
    pub fn restrict(&self, words: &BTreeSet<String>) -> RankList {
        rank(
            self.items
                .iter()
                .filter(|i| words.contains(&i.word))
                .map(|i| (i.word.clone(), i.score)),
        )
    }

    /// `rank<TAB>word<TAB>score`
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for i in &self.items {
            let score = if i.score == f64::INFINITY { "inf".to_string() } else { format!("{}", i.score) };
            out.push_str(&format!("{}\t{}\t{}\n", i.rank, i.word, score));
        }
        out
    }
}

/// Ranks scores in descending order. `+inf` sorts first; equal scores get
/// the average of the positions they occupy and are listed alphabetically.
pub fn rank<I>(scores: I) -> RankList
where
    I: IntoIterator<Item = (String, f64)>,
{
    let mut pairs: Vec<(String, f64)> = scores.into_iter().collect();
    pairs.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut items = Vec::with_capacity(pairs.len());
    let mut start = 0;
    while start < pairs.len() {
        let mut end = start + 1;
        while end < pairs.len() && pairs[end].1 == pairs[start].1 {
            end += 1;
        }
        // positions start+1 ..= end
        let avg = (start + 1 + end) as f64 / 2.0;
        for (word, score) in &pairs[start..end] {
            items.push(RankedItem {
                word: word.clone(),
                score: *score,
                rank: avg,
            });
        }
        start = end;
    }
    RankList { items }
}

fn symmetric_difference(a: &RankList, b: &RankList) -> Vec<String> {
    let sa: BTreeSet<&str> = a.items.iter().map(|i| i.word.as_str()).collect();
    let sb: BTreeSet<&str> = b.items.iter().map(|i| i.word.as_str()).collect();
    sa.symmetric_difference(&sb).map(|s| s.to_string()).collect()
}

/// Spearman's rho as the Pearson correlation of tie-averaged ranks.
pub fn spearman(r1: &RankList, r2: &RankList) -> Result<f64, EvalError> {
    let diff = symmetric_difference(r1, r2);
    if !diff.is_empty() || r1.len() != r2.len() {
        return Err(EvalError::WordSetMismatch(diff));
    }
    if r1.is_empty() {
        return Err(EvalError::Empty);
    }
    let other = r2.rank_of();
    let xs: Vec<f64> = r1.items.iter().map(|i| i.rank).collect();
    let ys: Vec<f64> = r1.items.iter().map(|i| other[i.word.as_str()]).collect();
    pearson(&xs, &ys).ok_or(EvalError::ZeroVariance)
}

fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (x, y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Bucket {
    SB,
    LB,
    BL,
    LM,
    SM,
}

impl Bucket {
    pub const ALL: [Bucket; 5] = [Bucket::SB, Bucket::LB, Bucket::BL, Bucket::LM, Bucket::SM];
}

impl fmt::Display for Bucket {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

/// Five consecutive slices of a rank list: surely borrowed down to surely mixed.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketSet {
    pub buckets: [Vec<String>; 5],
}

impl BucketSet {
    pub fn get(&self, b: Bucket) -> &[String] {
        &self.buckets[b as usize]
    }

    pub fn sizes(&self) -> [usize; 5] {
        std::array::from_fn(|i| self.buckets[i].len())
    }
}

/// Slice `k` (1-based) holds list positions `floor((k-1)n/5) < i <= floor(kn/5)`.
pub fn buckets(r: &RankList) -> Result<BucketSet, EvalError> {
    let n = r.len();
    if n < 5 {
        return Err(EvalError::TooFewWords { needed: 5, found: n });
    }
    let words = r.words();
    let buckets = std::array::from_fn(|k| words[k * n / 5..(k + 1) * n / 5].to_vec());
    Ok(BucketSet { buckets })
}

/// Agreement of one predicted bucket with the same ground-truth bucket.
/// `tn` is `|truth - predicted|`; it plays the role of a false negative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketConfusion {
    pub bucket: Bucket,
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub precision: f64,
    pub recall: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketEvaluation {
    pub per_bucket: Vec<BucketConfusion>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub micro_precision: f64,
    pub micro_recall: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn bucket_eval(pred: &BucketSet, truth: &BucketSet) -> Result<BucketEvaluation, EvalError> {
    let all = |b: &BucketSet| -> BTreeSet<String> { b.buckets.iter().flatten().cloned().collect() };
    let (pa, ta) = (all(pred), all(truth));
    if pa != ta {
        return Err(EvalError::WordSetMismatch(pa.symmetric_difference(&ta).cloned().collect()));
    }
    let mut per_bucket = Vec::with_capacity(5);
    for b in Bucket::ALL {
        let p: BTreeSet<&String> = pred.get(b).iter().collect();
        let g: BTreeSet<&String> = truth.get(b).iter().collect();
        let tp = p.intersection(&g).count();
        let fp = p.difference(&g).count();
        let tn = g.difference(&p).count();
        per_bucket.push(BucketConfusion {
            bucket: b,
            tp,
            fp,
            tn,
            precision: ratio(tp, fp + tp),
            recall: ratio(tp, tn + tp),
        });
    }
    let macro_precision = per_bucket.iter().map(|c| c.precision).sum::<f64>() / 5.0;
    let macro_recall = per_bucket.iter().map(|c| c.recall).sum::<f64>() / 5.0;
    let tp: usize = per_bucket.iter().map(|c| c.tp).sum();
    let fp: usize = per_bucket.iter().map(|c| c.fp).sum();
    let tn: usize = per_bucket.iter().map(|c| c.tn).sum();
    Ok(BucketEvaluation {
        per_bucket,
        macro_precision,
        macro_recall,
        micro_precision: ratio(tp, tp + fp),
        micro_recall: ratio(tp, tp + tn),
    })
}

/// Survey answer of one participant about one word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Choice {
    /// Sentence keeping the foreign target word.
    Foreign,
    /// Sentence with the native translation.
    Native,
    Neither,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyTally {
    pub word: String,
    pub count_en: usize,
    pub count_hi: usize,
    pub count_none: usize,
    pub lpf: i64,
}

impl SurveyTally {
    pub fn new(word: impl Into<String>, count_en: usize, count_hi: usize, count_none: usize) -> Self {
        SurveyTally {
            word: word.into(),
            count_en,
            count_hi,
            count_none,
            lpf: count_en as i64 - count_hi as i64,
        }
    }

    pub fn add(&mut self, choice: Choice) {
        match choice {
            Choice::Foreign => self.count_en += 1,
            Choice::Native => self.count_hi += 1,
            Choice::Neither => self.count_none += 1,
        }
        self.lpf = self.count_en as i64 - self.count_hi as i64;
    }
}

/// Tallies `(word, choice)` pairs, one tally per word in word order.
pub fn tally<'a, I>(responses: I) -> Vec<SurveyTally>
where
    I: IntoIterator<Item = (&'a str, Choice)>,
{
    let mut map: BTreeMap<&str, SurveyTally> = BTreeMap::new();
    for (word, choice) in responses {
        map.entry(word).or_insert_with(|| SurveyTally::new(word, 0, 0, 0)).add(choice);
    }
    map.into_values().collect()
}

/// Ground-truth ranking by language preference factor.
pub fn lpf_rank(tallies: &[SurveyTally]) -> Result<RankList, EvalError> {
    let mut seen = BTreeSet::new();
    for t in tallies {
        if !seen.insert(t.word.as_str()) {
            return Err(EvalError::DuplicateWord(t.word.clone()));
        }
    }
    Ok(rank(tallies.iter().map(|t| (t.word.clone(), t.lpf as f64))))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgedResponse {
    pub age: u32,
    pub word: String,
    pub choice: Choice,
}

/// Splits responses into `age < age_cut` and the rest. Both cohorts carry a
/// tally for every word that appears in any response.
pub fn cohort_split(responses: &[AgedResponse], age_cut: u32) -> (Vec<SurveyTally>, Vec<SurveyTally>) {
    let words: BTreeSet<&str> = responses.iter().map(|r| r.word.as_str()).collect();
    let mut young: BTreeMap<&str, SurveyTally> = words.iter().map(|&w| (w, SurveyTally::new(w, 0, 0, 0))).collect();
    let mut elder = young.clone();
    for r in responses {
        let target = if r.age < age_cut { &mut young } else { &mut elder };
        target.get_mut(r.word.as_str()).unwrap().add(r.choice);
    }
    (young.into_values().collect(), elder.into_values().collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Stratum {
    Top,
    Mid,
    Bot,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::Top => "TOP",
            Stratum::Mid => "MID",
            Stratum::Bot => "BOT",
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Strata {
    pub top: Vec<String>,
    pub mid: Vec<String>,
    pub bot: Vec<String>,
}

impl Strata {
    pub fn iter(&self) -> impl Iterator<Item = (Stratum, &String)> {
        self.top
            .iter()
            .map(|w| (Stratum::Top, w))
            .chain(self.mid.iter().map(|w| (Stratum::Mid, w)))
            .chain(self.bot.iter().map(|w| (Stratum::Bot, w)))
    }
}

/// Draws `per_stratum` words from the top, middle and bottom fifths.
pub fn reannotation_strata(r: &RankList, per_stratum: usize, seed: u64) -> Result<Strata, EvalError> {
    let b = buckets(r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draw = |stratum: Stratum, bucket: Bucket| -> Result<Vec<String>, EvalError> {
        let slice = b.get(bucket);
        if slice.len() < per_stratum {
            return Err(EvalError::SliceTooSmall {
                stratum,
                size: slice.len(),
                requested: per_stratum,
            });
        }
        Ok(slice.choose_multiple(&mut rng, per_stratum).cloned().collect())
    };
    Ok(Strata {
        top: draw(Stratum::Top, Bucket::SB)?,
        mid: draw(Stratum::Mid, Bucket::BL)?,
        bot: draw(Stratum::Bot, Bucket::SM)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextMode {
    #[serde(rename = "H_all")]
    HAll,
    #[serde(rename = "H_most")]
    HMost,
}

impl ContextMode {
    pub const ALL: [ContextMode; 2] = [ContextMode::HAll, ContextMode::HMost];

    /// Whether the non-target language tags satisfy this mode. At least one
    /// native-tagged neighbour is required.
    pub fn admits(self, native: usize, foreign: usize) -> bool {
        match self {
            ContextMode::HAll => native > 0 && foreign == 0,
            ContextMode::HMost => 2 * native > native + foreign,
        }
    }
}

impl fmt::Display for ContextMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ContextMode::HAll => "H_all",
            ContextMode::HMost => "H_most",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextPick {
    pub tweet_index: usize,
    pub tweet_id: String,
    pub target_index: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextSample {
    pub picks: BTreeMap<String, ContextPick>,
    pub shortfall: Vec<String>,
}

/// For each word, one L2-tagged occurrence whose tweet context satisfies
/// `mode`, drawn uniformly from all qualifying occurrences.
pub fn sample_context_tweets(words: &[String], corpus: &Corpus, mode: ContextMode, seed: u64) -> ContextSample {
    let index: HashMap<String, usize> = words.iter().enumerate().map(|(i, w)| (w.to_lowercase(), i)).collect();
    let mut pools: Vec<Vec<(usize, usize)>> = vec![Vec::new(); words.len()];
    for (ti, tweet) in corpus.tweets.iter().enumerate() {
        let native = tweet.tokens.iter().filter(|t| t.tag == LanguageTag::L1).count();
        let foreign = tweet.tokens.iter().filter(|t| t.tag == LanguageTag::L2).count();
        for (pos, tok) in tweet.tokens.iter().enumerate() {
            if tok.tag != LanguageTag::L2 {
                continue;
            }
            if let Some(&w) = index.get(&tok.text.to_lowercase()) {
                if mode.admits(native, foreign - 1) {
                    pools[w].push((ti, pos));
                }
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ContextSample::default();
    for (word, pool) in words.iter().zip(pools) {
        match pool.choose(&mut rng) {
            Some(&(ti, pos)) => {
                out.picks.insert(
                    word.to_lowercase(),
                    ContextPick {
                        tweet_index: ti,
                        tweet_id: corpus.tweets[ti].id.clone(),
                        target_index: pos,
                    },
                );
            }
            None => out.shortfall.push(word.to_lowercase()),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReannotationRecord {
    pub word: String,
    pub stratum: Stratum,
    pub context: ContextMode,
    pub annotator: String,
    pub flipped: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReannotationStat {
    pub stratum: Stratum,
    pub context: ContextMode,
    pub words: usize,
    pub mu: f64,
    pub sigma: f64,
    pub kappa: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_unavailable: Option<String>,
}

/// Fleiss' kappa for a table of per-item category counts. Every row must
/// sum to the same rater count `n >= 2`. When all ratings fall into one
/// category the agreement is perfect and kappa is 1.
pub fn fleiss_kappa(table: &[Vec<usize>]) -> Option<f64> {
    let first = table.first()?;
    let raters: usize = first.iter().sum();
    if raters < 2 || table.iter().any(|row| row.iter().sum::<usize>() != raters || row.len() != first.len()) {
        return None;
    }
    let n = raters as f64;
    let items = table.len() as f64;
    let mut p_bar = 0.0;
    for row in table {
        let agree: f64 = row.iter().map(|&c| (c * c) as f64).sum::<f64>() - n;
        p_bar += agree / (n * (n - 1.0));
    }
    p_bar /= items;
    let p_e: f64 = (0..first.len())
        .map(|j| {
            let pj = table.iter().map(|r| r[j]).sum::<usize>() as f64 / (items * n);
            pj * pj
        })
        .sum();
    if p_e >= 1.0 {
        return Some(1.0);
    }
    Some((p_bar - p_e) / (1.0 - p_e))
}

/// Per (stratum, context): mean and population standard deviation of the
/// per-word flip fractions, and Fleiss' kappa over keep/flip.
pub fn reannotation_stats(records: &[ReannotationRecord]) -> Result<Vec<ReannotationStat>, EvalError> {
    type Key = (Stratum, ContextMode);
    let mut groups: BTreeMap<Key, BTreeMap<&str, BTreeMap<&str, bool>>> = BTreeMap::new();
    for r in records {
        let per_word = groups.entry((r.stratum, r.context)).or_default().entry(r.word.as_str()).or_default();
        if per_word.insert(r.annotator.as_str(), r.flipped).is_some() {
            return Err(EvalError::DuplicateRecord {
                word: r.word.clone(),
                annotator: r.annotator.clone(),
            });
        }
    }
    let mut out = Vec::new();
    for ((stratum, context), words) in groups {
        let fractions: Vec<f64> = words
            .values()
            .map(|a| a.values().filter(|&&f| f).count() as f64 / a.len() as f64)
            .collect();
        let m = fractions.len() as f64;
        let mu = fractions.iter().sum::<f64>() / m;
        let sigma = (fractions.iter().map(|f| (f - mu) * (f - mu)).sum::<f64>() / m).sqrt();

        let table: Vec<Vec<usize>> = words
            .values()
            .map(|a| {
                let flips = a.values().filter(|&&f| f).count();
                vec![a.len() - flips, flips]
            })
            .collect();
        let counts: BTreeSet<usize> = words.values().map(|a| a.len()).collect();
        let (kappa, kappa_unavailable) = if counts.len() > 1 {
            (None, Some(format!("unequal annotator counts per word: {counts:?}")))
        } else {
            match fleiss_kappa(&table) {
                Some(k) => (Some(k), None),
                None => (None, Some("fewer than two annotators per word".to_string())),
            }
        };
        out.push(ReannotationStat {
            stratum,
            context,
            words: words.len(),
            mu,
            sigma,
            kappa,
            kappa_unavailable,
        });
    }
    Ok(out)
}

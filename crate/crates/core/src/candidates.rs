//! Target word selection: foreign-usage frequency ranking, context-tag
//! feature vectors, k-means grouping and stratified sampling.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::classify::{Classification, TweetClass};
use crate::corpus::{Corpus, LanguageTag};

pub const FEATURE_DIM: usize = 24;
pub const MAX_LLOYD_ITERATIONS: usize = 100;

/// Tweet categories of the three feature blocks, in column order.
pub const FEATURE_CATEGORIES: [TweetClass; 3] = [TweetClass::CmL2, TweetClass::CmL1, TweetClass::CmEq];

#[derive(Debug, Error, PartialEq)]
pub enum CandidatesError {
    #[error("no candidate words survived selection")]
    EmptyCandidateSet,
    #[error("{points} feature vectors cannot form {k} clusters")]
    TooFewPoints { points: usize, k: usize },
    #[error("invalid k range {min}..={max}")]
    InvalidRange { min: usize, max: usize },
    #[error("word {0:?} has no baseline score")]
    MissingScore(String),
    #[error("requested {requested} medium words but only {pool} are eligible")]
    PoolTooSmall { requested: usize, pool: usize },
    #[error("features line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Left/right neighbour combination around a target occurrence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ContextCombo {
    EE,
    HH,
    EH,
    HE,
    BoundaryE,
    EBoundary,
    BoundaryH,
    HBoundary,
}

impl ContextCombo {
    pub const ALL: [ContextCombo; 8] = [
        ContextCombo::EE,
        ContextCombo::HH,
        ContextCombo::EH,
        ContextCombo::HE,
        ContextCombo::BoundaryE,
        ContextCombo::EBoundary,
        ContextCombo::BoundaryH,
        ContextCombo::HBoundary,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ContextCombo::EE => "EE",
            ContextCombo::HH => "HH",
            ContextCombo::EH => "EH",
            ContextCombo::HE => "HE",
            ContextCombo::BoundaryE => "$E",
            ContextCombo::EBoundary => "E$",
            ContextCombo::BoundaryH => "$H",
            ContextCombo::HBoundary => "H$",
        }
    }

    /// `None` for the impossible `$$` pair.
    fn from_neighbours(before: Neighbour, after: Neighbour) -> Option<Self> {
        use Neighbour::*;
        Some(match (before, after) {
            (E, E) => ContextCombo::EE,
            (H, H) => ContextCombo::HH,
            (E, H) => ContextCombo::EH,
            (H, E) => ContextCombo::HE,
            (Boundary, E) => ContextCombo::BoundaryE,
            (E, Boundary) => ContextCombo::EBoundary,
            (Boundary, H) => ContextCombo::BoundaryH,
            (H, Boundary) => ContextCombo::HBoundary,
            (Boundary, Boundary) => return None,
        })
    }

    fn index(self) -> usize {
        self as usize
    }
}

#[derive(Clone, Copy)]
enum Neighbour {
    E,
    H,
    Boundary,
}

fn neighbour(tag: Option<LanguageTag>) -> Option<Neighbour> {
    match tag {
        None => Some(Neighbour::Boundary),
        Some(LanguageTag::L2) => Some(Neighbour::E),
        Some(LanguageTag::L1) => Some(Neighbour::H),
        Some(_) => None,
    }
}

/// Column names of the 24-dimensional feature vector.
pub fn feature_columns() -> Vec<String> {
    let mut cols = Vec::with_capacity(FEATURE_DIM);
    for cat in FEATURE_CATEGORIES {
        for combo in ContextCombo::ALL {
            cols.push(format!("{}:{}", cat.as_str(), combo.label()));
        }
    }
    cols
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateWord {
    pub text: String,
    pub foreign_freq: usize,
}

#[derive(Debug, Clone, Default)]
pub struct SelectionConfig {
    pub top_n: usize,
    pub stopwords: HashSet<String>,
    pub allowlist: Option<HashSet<String>>,
}

/// Foreign-usage counts: L2-tagged occurrences inside CM_L1, CM_L2 and
/// CM_EQ tweets, lowercased.
pub fn foreign_frequencies(corpus: &Corpus, classes: &Classification) -> HashMap<String, usize> {
    let mut freq = HashMap::new();
    for (i, tweet) in corpus.tweets.iter().enumerate() {
        if !classes.get(i).is_some_and(TweetClass::is_code_mixed) {
            continue;
        }
        for tok in tweet.tokens.iter().filter(|t| t.tag == LanguageTag::L2) {
            *freq.entry(tok.text.to_lowercase()).or_insert(0) += 1;
        }
    }
    freq
}

/// Top-N foreign words, then stopword removal, then the optional allowlist.
pub fn select_candidates(
    corpus: &Corpus,
    classes: &Classification,
    cfg: &SelectionConfig,
) -> Result<Vec<CandidateWord>, CandidatesError> {
    let mut ranked: Vec<(String, usize)> = foreign_frequencies(corpus, classes).into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(cfg.top_n);
    let out: Vec<CandidateWord> = ranked
        .into_iter()
        .filter(|(w, _)| !cfg.stopwords.contains(w))
        .filter(|(w, _)| cfg.allowlist.as_ref().is_none_or(|a| a.contains(w)))
        .map(|(text, foreign_freq)| CandidateWord { text, foreign_freq })
        .collect();
    if out.is_empty() {
        return Err(CandidatesError::EmptyCandidateSet);
    }
    Ok(out)
}

/// Reads a newline-separated word list, lowercased; `#` comment lines.
pub fn read_word_set<R: BufRead>(reader: R) -> std::io::Result<HashSet<String>> {
    let mut set = HashSet::new();
    for line in reader.lines() {
        let line = line?;
        let w = line.split('\t').next().unwrap_or("").trim();
        if !w.is_empty() && !w.starts_with('#') {
            set.insert(w.to_lowercase());
        }
    }
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextFeatureVector {
    pub word: String,
    pub values: Vec<f64>,
    /// Counted occurrences per category block.
    pub counts: [usize; 3],
}

impl ContextFeatureVector {
    /// True when no occurrence could be counted.
    pub fn is_empty(&self) -> bool {
        self.counts.iter().all(|&c| c == 0)
    }

    pub fn block(&self, category: usize) -> &[f64] {
        &self.values[category * 8..(category + 1) * 8]
    }
}

/// Feature vectors for several words from a single corpus pass, in input order.
pub fn context_features_many(
    words: &[String],
    corpus: &Corpus,
    classes: &Classification,
) -> Vec<ContextFeatureVector> {
    let index: HashMap<String, usize> = words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.to_lowercase(), i))
        .collect();
    let mut raw = vec![[[0usize; 8]; 3]; words.len()];

    for (i, tweet) in corpus.tweets.iter().enumerate() {
        let Some(cat) = classes
            .get(i)
            .and_then(|c| FEATURE_CATEGORIES.iter().position(|&f| f == c))
        else {
            continue;
        };
        let toks = &tweet.tokens;
        if toks.len() < 2 {
            continue;
        }
        for (pos, tok) in toks.iter().enumerate() {
            if tok.tag != LanguageTag::L2 {
                continue;
            }
            let Some(&w) = index.get(&tok.text.to_lowercase()) else {
                continue;
            };
            let before = neighbour(pos.checked_sub(1).map(|p| toks[p].tag));
            let after = neighbour(toks.get(pos + 1).map(|t| t.tag));
            if let (Some(b), Some(a)) = (before, after) {
                if let Some(combo) = ContextCombo::from_neighbours(b, a) {
                    raw[w][cat][combo.index()] += 1;
                }
            }
        }
    }

    words
        .iter()
        .zip(raw)
        .map(|(word, blocks)| {
            let mut values = vec![0.0; FEATURE_DIM];
            let mut counts = [0usize; 3];
            for (cat, block) in blocks.iter().enumerate() {
                let total: usize = block.iter().sum();
                counts[cat] = total;
                if total == 0 {
                    continue;
                }
                for (j, &n) in block.iter().enumerate() {
                    values[cat * 8 + j] = n as f64 / total as f64;
                }
            }
            ContextFeatureVector {
                word: word.to_lowercase(),
                values,
                counts,
            }
        })
        .collect()
}

pub fn context_features(word: &str, corpus: &Corpus, classes: &Classification) -> ContextFeatureVector {
    context_features_many(&[word.to_string()], corpus, classes).remove(0)
}

/// `word` followed by the 24 feature columns, with a header line.
pub fn write_features_tsv<W: Write>(features: &[ContextFeatureVector], mut out: W) -> std::io::Result<()> {
    writeln!(out, "word\t{}", feature_columns().join("\t"))?;
    for f in features {
        let vals: Vec<String> = f.values.iter().map(|v| format!("{v}")).collect();
        writeln!(out, "{}\t{}", f.word, vals.join("\t"))?;
    }
    Ok(())
}

/// Reads the features TSV. Per-block counts are not stored in the file and
/// come back as 1 for nonzero blocks.
pub fn read_features_tsv<R: BufRead>(reader: R) -> Result<Vec<ContextFeatureVector>, CandidatesError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CandidatesError::Parse { line: idx + 1, message: e.to_string() })?;
        if line.trim().is_empty() || line.starts_with("word\t") {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != FEATURE_DIM + 1 {
            return Err(CandidatesError::Parse {
                line: idx + 1,
                message: format!("expected {} columns, found {}", FEATURE_DIM + 1, cols.len()),
            });
        }
        let values = cols[1..]
            .iter()
            .map(|c| c.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CandidatesError::Parse { line: idx + 1, message: e.to_string() })?;
        let mut counts = [0usize; 3];
        for (cat, c) in counts.iter_mut().enumerate() {
            *c = usize::from(values[cat * 8..(cat + 1) * 8].iter().any(|&v| v > 0.0));
        }
        out.push(ContextFeatureVector {
            word: cols[0].to_string(),
            values,
            counts,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansRun {
    pub k: usize,
    pub centroids: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub sse: f64,
    /// SSE after every assignment step.
    pub sse_history: Vec<f64>,
    pub iterations: usize,
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(point: &[f64], centroids: &[Vec<f64>]) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Lloyd's k-means. The first centre is drawn from `rng`; each further
/// centre is the point farthest from those already chosen.
pub fn kmeans<R: Rng>(points: &[Vec<f64>], k: usize, rng: &mut R) -> Result<KMeansRun, CandidatesError> {
    if k == 0 || points.len() < k {
        return Err(CandidatesError::TooFewPoints { points: points.len(), k });
    }
    let mut centroids = vec![points[rng.gen_range(0..points.len())].clone()];
    let mut min_d: Vec<f64> = points.iter().map(|p| sq_dist(p, &centroids[0])).collect();
    while centroids.len() < k {
        let far = argmax(&min_d);
        centroids.push(points[far].clone());
        for (d, p) in min_d.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &centroids[centroids.len() - 1]));
        }
    }

    let dim = points[0].len();
    let mut labels: Vec<usize> = vec![usize::MAX; points.len()];
    let mut sse_history = Vec::new();
    let mut iterations = 0;
    loop {
        let mut changed = false;
        let mut sse = 0.0;
        for (p, label) in points.iter().zip(labels.iter_mut()) {
            let (c, d) = nearest(p, &centroids);
            if *label != c {
                *label = c;
                changed = true;
            }
            sse += d;
        }
        sse_history.push(sse);
        iterations += 1;
        if !changed || iterations >= MAX_LLOYD_ITERATIONS {
            break;
        }

        let mut sums = vec![vec![0.0; dim]; k];
        let mut sizes = vec![0usize; k];
        for (p, &l) in points.iter().zip(&labels) {
            sizes[l] += 1;
            for (s, v) in sums[l].iter_mut().zip(p) {
                *s += v;
            }
        }
        for c in 0..k {
            if sizes[c] > 0 {
                centroids[c] = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        // empty clusters move to the point farthest from its own centre
        for c in 0..k {
            if sizes[c] == 0 {
                let dists: Vec<f64> = points
                    .iter()
                    .zip(&labels)
                    .map(|(p, &l)| if sizes[l] > 1 { sq_dist(p, &centroids[l]) } else { -1.0 })
                    .collect();
                let far = argmax(&dists);
                if dists[far] > 0.0 {
                    sizes[labels[far]] -= 1;
                    labels[far] = c;
                    sizes[c] = 1;
                    centroids[c] = points[far].clone();
                }
            }
        }
    }

    let sse = *sse_history.last().unwrap();
    Ok(KMeansRun {
        k,
        centroids,
        labels,
        sse,
        sse_history,
        iterations,
    })
}

fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KSelection {
    /// Elbow over `min..=max`.
    Elbow { min: usize, max: usize },
    Fixed(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub words: Vec<String>,
    pub centroids: Vec<Vec<f64>>,
    pub assignment: BTreeMap<String, usize>,
    pub sse: f64,
    /// `(k, sse)` for every k evaluated while locating the elbow.
    pub sse_curve: Vec<(usize, f64)>,
}

impl ClusterModel {
    pub fn members(&self) -> Vec<Vec<String>> {
        let mut groups = vec![Vec::new(); self.k];
        for w in &self.words {
            groups[self.assignment[w]].push(w.clone());
        }
        groups
    }
}

fn run_for_k(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansRun, CandidatesError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(k as u64));
    kmeans(points, k, &mut rng)
}

/// Index into `curve` of the point with the largest second difference,
/// considering only interior points whose k is at least `min_k`.
pub fn elbow(curve: &[(usize, f64)], min_k: usize) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for i in 1..curve.len().saturating_sub(1) {
        if curve[i].0 < min_k {
            continue;
        }
        let d2 = curve[i - 1].1 - 2.0 * curve[i].1 + curve[i + 1].1;
        if best.is_none_or(|(_, b)| d2 > b) {
            best = Some((i, d2));
        }
    }
    best.map(|(i, _)| i)
}

/// Clusters feature vectors. With [`KSelection::Elbow`] the SSE curve is
/// evaluated from `k = min - 1` (at least 1) to `max`, so that `min` itself
/// can be the elbow; the chosen k lies in `min..max`.
pub fn cluster(
    features: &[ContextFeatureVector],
    selection: KSelection,
    seed: u64,
) -> Result<ClusterModel, CandidatesError> {
    let points: Vec<Vec<f64>> = features.iter().map(|f| f.values.clone()).collect();
    let (chosen, curve) = match selection {
        KSelection::Fixed(k) => {
            let run = run_for_k(&points, k, seed)?;
            let curve = vec![(k, run.sse)];
            (run, curve)
        }
        KSelection::Elbow { min, max } => {
            if min < 1 || max < min + 1 {
                return Err(CandidatesError::InvalidRange { min, max });
            }
            if points.len() < max + 1 {
                return Err(CandidatesError::TooFewPoints { points: points.len(), k: max + 1 });
            }
            let mut runs = Vec::new();
            for k in min.saturating_sub(1).max(1)..=max {
                runs.push(run_for_k(&points, k, seed)?);
            }
            let curve: Vec<(usize, f64)> = runs.iter().map(|r| (r.k, r.sse)).collect();
            let idx = elbow(&curve, min).unwrap_or(0);
            (runs.swap_remove(idx), curve)
        }
    };
    let words: Vec<String> = features.iter().map(|f| f.word.clone()).collect();
    let assignment = words.iter().cloned().zip(chosen.labels.iter().copied()).collect();
    Ok(ClusterModel {
        k: chosen.k,
        words,
        centroids: chosen.centroids,
        assignment,
        sse: chosen.sse,
        sse_curve: curve,
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplePlan {
    pub hlws: Vec<String>,
    pub mws: Vec<String>,
    pub full: Vec<String>,
}

/// Per cluster the maximum- and minimum-scoring word (`hlws`), plus
/// `mws_count` words drawn from those strictly between the global `hlws`
/// extremes. Score ties go to the lexicographically smaller word.
pub fn sample_targets(
    model: &ClusterModel,
    scores: &HashMap<String, f64>,
    mws_count: usize,
    seed: u64,
) -> Result<SamplePlan, CandidatesError> {
    let score_of = |w: &String| scores.get(w).copied().ok_or_else(|| CandidatesError::MissingScore(w.clone()));
    for w in &model.words {
        score_of(w)?;
    }
    let mut hlws: Vec<String> = Vec::new();
    let mut chosen = BTreeSet::new();
    for mut group in model.members() {
        if group.is_empty() {
            continue;
        }
        group.sort();
        let by_score = |a: &String, b: &String| scores[a].total_cmp(&scores[b]);
        let max = group.iter().max_by(|a, b| by_score(a, b).then_with(|| b.cmp(a))).unwrap().clone();
        let min = group.iter().min_by(|a, b| by_score(a, b).then_with(|| a.cmp(b))).unwrap().clone();
        for w in [max, min] {
            if chosen.insert(w.clone()) {
                hlws.push(w);
            }
        }
    }
    let lo = hlws.iter().map(|w| scores[w]).fold(f64::INFINITY, f64::min);
    let hi = hlws.iter().map(|w| scores[w]).fold(f64::NEG_INFINITY, f64::max);
    let mut pool: Vec<String> = model
        .words
        .iter()
        .filter(|w| !chosen.contains(*w))
        .filter(|w| scores[*w] > lo && scores[*w] < hi)
        .cloned()
        .collect();
    pool.sort();
    if mws_count > pool.len() {
        return Err(CandidatesError::PoolTooSmall { requested: mws_count, pool: pool.len() });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mws: Vec<String> = pool.choose_multiple(&mut rng, mws_count).cloned().collect();
    let full = hlws.iter().chain(&mws).cloned().collect();
    Ok(SamplePlan { hlws, mws, full })
}

//! Independent reference implementations used as test oracles. None of
//! these call into the crate's own algorithms.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use lexborrow_core::corpus::{Corpus, LanguageTag, PhraseTag};
use lexborrow_core::TweetClass;

/// Default-config classifier using integer arithmetic only.
pub fn oracle_class(tags: &[LanguageTag]) -> Option<TweetClass> {
    let content: Vec<LanguageTag> = tags
        .iter()
        .copied()
        .filter(|t| matches!(t, LanguageTag::L1 | LanguageTag::L2))
        .collect();
    let n = content.len();
    if n == 0 {
        return None;
    }
    let n1 = content.iter().filter(|t| **t == LanguageTag::L1).count();
    let n2 = n - n1;
    if 10 * n1 > 9 * n {
        return Some(TweetClass::MonoL1);
    }
    if 10 * n2 > 9 * n {
        return Some(TweetClass::MonoL2);
    }
    let switches = content.windows(2).filter(|w| w[0] != w[1]).count();
    if switches == 1 {
        let first = content.iter().take_while(|t| **t == content[0]).count();
        if first >= 2 && n - first >= 2 {
            return Some(TweetClass::Cs);
        }
    }
    // |n1/n - 1/2| <= 1/20
    if 10 * n1.abs_diff(n2) <= n {
        return Some(TweetClass::CmEq);
    }
    Some(if n1 > n2 { TweetClass::CmL1 } else { TweetClass::CmL2 })
}

/// Descending ranks, ties averaged: `1 + #greater + (#equal - 1) / 2`.
pub fn oracle_ranks(scores: &[f64]) -> Vec<f64> {
    scores
        .iter()
        .map(|s| {
            let greater = scores.iter().filter(|o| *o > s).count() as f64;
            let equal = scores.iter().filter(|o| *o == s).count() as f64;
            1.0 + greater + (equal - 1.0) / 2.0
        })
        .collect()
}

/// Textbook Pearson correlation.
pub fn oracle_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

pub fn oracle_spearman(a: &[f64], b: &[f64]) -> f64 {
    oracle_pearson(&oracle_ranks(a), &oracle_ranks(b))
}

/// Fleiss' kappa from explicit rater pairs: observed agreement is the
/// fraction of ordered pairs of distinct raters on an item that agree.
pub fn oracle_kappa(table: &[Vec<usize>]) -> f64 {
    let cats = table[0].len();
    let mut agree_sum = 0.0;
    let mut totals = vec![0usize; cats];
    let mut ratings = 0usize;
    for row in table {
        let raters: Vec<usize> = row.iter().enumerate().flat_map(|(j, &c)| std::iter::repeat_n(j, c)).collect();
        let mut agree = 0usize;
        let mut pairs = 0usize;
        for i in 0..raters.len() {
            for j in 0..raters.len() {
                if i != j {
                    pairs += 1;
                    agree += usize::from(raters[i] == raters[j]);
                }
            }
        }
        agree_sum += agree as f64 / pairs as f64;
        for r in raters {
            totals[r] += 1;
            ratings += 1;
        }
    }
    let p_o = agree_sum / table.len() as f64;
    let p_e: f64 = totals.iter().map(|&t| (t as f64 / ratings as f64).powi(2)).sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return 1.0;
    }
    (p_o - p_e) / (1.0 - p_e)
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct Recount {
    pub u_l1: usize,
    pub u_cml1: usize,
    pub u_l2: usize,
    pub t_l1: usize,
    pub t_cml1: usize,
    pub t_l2: usize,
    pub p_l1: usize,
    pub p_l2: usize,
    pub frequency: usize,
}

/// Brute-force recount of one word: one pass per word, no sharing.
pub fn oracle_recount(
    word: &str,
    corpus: &Corpus,
    classes: &[Option<TweetClass>],
    users: Option<&BTreeSet<String>>,
) -> Recount {
    let w = word.to_lowercase();
    let mut r = Recount::default();
    let mut seen: BTreeMap<TweetClass, BTreeSet<String>> = BTreeMap::new();
    for (tweet, class) in corpus.tweets.iter().zip(classes) {
        if users.is_some_and(|u| !u.contains(&tweet.user_id)) {
            continue;
        }
        let hits = tweet.tokens.iter().filter(|t| t.text.to_lowercase() == w).count();
        r.frequency += hits;
        if hits == 0 {
            continue;
        }
        match class {
            Some(TweetClass::MonoL1) => r.t_l1 += 1,
            Some(TweetClass::CmL1) => r.t_cml1 += 1,
            Some(TweetClass::MonoL2) => r.t_l2 += 1,
            _ => {}
        }
        if let Some(c) = class {
            seen.entry(*c).or_default().insert(tweet.user_id.clone());
        }
        // phrases: explicit spans, else maximal runs of equal tags
        let mut spans: Vec<(usize, usize, PhraseTag)> =
            tweet.phrases.iter().map(|p| (p.start, p.end, p.tag)).collect();
        if spans.is_empty() {
            let mut start = 0;
            for i in 0..tweet.tokens.len() {
                let last = i + 1 == tweet.tokens.len();
                if last || tweet.tokens[i + 1].tag != tweet.tokens[i].tag {
                    let tag = match tweet.tokens[i].tag {
                        LanguageTag::L1 => PhraseTag::L1,
                        LanguageTag::L2 => PhraseTag::L2,
                        _ => PhraseTag::Other,
                    };
                    spans.push((start, i + 1, tag));
                    start = i + 1;
                }
            }
        }
        for (s, e, tag) in spans {
            if tweet.tokens[s..e].iter().any(|t| t.text.to_lowercase() == w) {
                match tag {
                    PhraseTag::L1 => r.p_l1 += 1,
                    PhraseTag::L2 => r.p_l2 += 1,
                    PhraseTag::Other => {}
                }
            }
        }
    }
    let users_of = |c| seen.get(&c).map_or(0, |s| s.len());
    r.u_l1 = users_of(TweetClass::MonoL1);
    r.u_cml1 = users_of(TweetClass::CmL1);
    r.u_l2 = users_of(TweetClass::MonoL2);
    r
}

/// Ratio with the zero-denominator conventions of the social metrics.
pub fn oracle_ratio(num: usize, den: usize) -> f64 {
    match (num, den) {
        (0, 0) => 0.0,
        (_, 0) => f64::INFINITY,
        _ => num as f64 / den as f64,
    }
}

mod common;

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use lexborrow_core::candidates::{
    context_features_many, feature_columns, read_features_tsv, select_candidates, write_features_tsv,
    SelectionConfig, FEATURE_DIM,
};
use lexborrow_core::classify::{classify_corpus, user_mix_buckets, Classification, MixExtent, MixThresholds};
use lexborrow_core::corpus::{ingest, LanguageTag, ScriptFilter};
use lexborrow_core::eval::{bucket_eval, buckets, lpf_rank, rank, spearman, SurveyTally};
use lexborrow_core::metrics::{
    cohort_counts, read_scores_tsv, upr, usage_counts, usage_counts_many, uur, write_scores_tsv, ScoreRow,
    WordUsageCounts,
};
use lexborrow_core::synth::{generate, SynthConfig, SynthOutput};
use lexborrow_core::{ClassifierConfig, Metric, TweetClass};

use common::{oracle_class, oracle_ranks, oracle_recount, oracle_spearman};

fn small(seed: u64) -> (SynthOutput, Classification) {
    let out = generate(&SynthConfig::small(seed));
    let classes = classify_corpus(&out.corpus, &ClassifierConfig::default());
    (out, classes)
}

fn named(values: &[f64]) -> Vec<(String, f64)> {
    values.iter().enumerate().map(|(i, v)| (format!("w{i:02}"), *v)).collect()
}

proptest! {
    #[test]
    fn rank_positions_sum_and_match_oracle(values in prop::collection::vec(0u8..6, 1..40)) {
        let scores: Vec<f64> = values.iter().map(|&v| v as f64).collect();
        let r = rank(named(&scores));
        let n = scores.len() as f64;
        let total: f64 = r.items.iter().map(|i| i.rank).sum();
        prop_assert_eq!(total, n * (n + 1.0) / 2.0);
        let want = oracle_ranks(&scores);
        let got = r.rank_of();
        for (i, w) in want.iter().enumerate() {
            prop_assert_eq!(got[format!("w{i:02}").as_str()], *w);
        }
    }

    #[test]
    fn spearman_symmetric_and_monotone_invariant(
        pairs in prop::collection::vec((0u8..8, -50i32..50), 3..30)
    ) {
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let (ra, rb) = (rank(named(&a)), rank(named(&b)));
        let ab = spearman(&ra, &rb);
        prop_assert_eq!(&ab, &spearman(&rb, &ra));
        if let Ok(rho) = ab {
            prop_assert!((rho - oracle_spearman(&a, &b)).abs() < 1e-12);
            let squashed: Vec<f64> = a.iter().map(|x| (x / 3.0).exp() + 7.0).collect();
            let again = spearman(&rank(named(&squashed)), &rb).unwrap();
            prop_assert!((again - rho).abs() < 1e-12);
        }
    }

    #[test]
    fn equal_buckets_are_symmetric(m in 1usize..15, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = 5 * m;
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..4) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen()).collect();
        let e = bucket_eval(&buckets(&rank(named(&a))).unwrap(), &buckets(&rank(named(&b))).unwrap()).unwrap();
        prop_assert_eq!(e.micro_precision, e.micro_recall);
        prop_assert_eq!(e.macro_precision, e.macro_recall);
    }

    #[test]
    fn bucket_sizes_partition(n in 5usize..400) {
        let r = rank(named(&(0..n).map(|i| i as f64).collect::<Vec<_>>()));
        let sizes = buckets(&r).unwrap().sizes();
        prop_assert_eq!(sizes.iter().sum::<usize>(), n);
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn social_ratios_monotone(num in 0usize..50, den in 1usize..50) {
        let base = WordUsageCounts { word: "w".into(), u_l1: num, u_l2: den, ..Default::default() };
        let more = WordUsageCounts { u_l1: num + 1, ..base.clone() };
        let wider = WordUsageCounts { u_l2: den + 1, ..base.clone() };
        prop_assert!(uur(&more).value > uur(&base).value);
        if num > 0 {
            prop_assert!(uur(&wider).value < uur(&base).value);
        }
    }
}

#[test]
fn histogram_matches_second_classifier() {
    let out = generate(&SynthConfig::small(21));
    let classes = classify_corpus(&out.corpus, &ClassifierConfig::default());
    let mut want: BTreeMap<TweetClass, usize> = BTreeMap::new();
    for t in &out.corpus.tweets {
        let tags: Vec<LanguageTag> = t.tokens.iter().map(|k| k.tag).collect();
        *want.entry(oracle_class(&tags).unwrap()).or_default() += 1;
    }
    for class in TweetClass::ALL {
        assert_eq!(classes.histogram.get(class), want.get(&class).copied().unwrap_or(0), "{class:?}");
    }
    assert_eq!(classes.histogram.classified(), out.corpus.len());
}

#[test]
fn cohort_counts_are_additive_over_user_partition() {
    let (out, classes) = small(4);
    let users: Vec<String> = out.corpus.users().into_iter().map(str::to_string).collect();
    let (left, right): (Vec<_>, Vec<_>) = users.iter().cloned().partition(|u| u.len() % 2 == 0 || u.ends_with('3'));
    let left: HashSet<String> = left.into_iter().collect();
    let right: HashSet<String> = right.into_iter().collect();
    let all: HashSet<String> = users.into_iter().collect();
    for (word, _) in &out.truth {
        let whole = usage_counts(word, &out.corpus, &classes);
        assert_eq!(cohort_counts(word, &out.corpus, &classes, &all), whole);
        let (a, b) = (
            cohort_counts(word, &out.corpus, &classes, &left),
            cohort_counts(word, &out.corpus, &classes, &right),
        );
        assert_eq!(a.t_l1 + b.t_l1, whole.t_l1);
        assert_eq!(a.t_cml1 + b.t_cml1, whole.t_cml1);
        assert_eq!(a.t_l2 + b.t_l2, whole.t_l2);
        assert_eq!(a.p_l1 + b.p_l1, whole.p_l1);
        assert_eq!(a.p_l2 + b.p_l2, whole.p_l2);
        assert_eq!(a.u_l1 + b.u_l1, whole.u_l1);
        assert_eq!(a.frequency + b.frequency, whole.frequency);
    }
}

#[test]
fn random_user_subset_matches_restricted_recount() {
    let (out, classes) = small(8);
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let subset: BTreeSet<String> =
        out.corpus.users().into_iter().filter(|_| rng.gen_bool(0.4)).map(str::to_string).collect();
    let hs: HashSet<String> = subset.iter().cloned().collect();
    let words: Vec<String> = out.truth.iter().map(|(w, _)| w.clone()).collect();
    let table = usage_counts_many(&words, &out.corpus, &classes, Some(&hs));
    for c in &table.counts {
        let r = oracle_recount(&c.word, &out.corpus, &classes.classes, Some(&subset));
        assert_eq!(
            (c.u_l1, c.u_cml1, c.u_l2, c.t_l1, c.t_cml1, c.t_l2, c.p_l1, c.p_l2),
            (r.u_l1, r.u_cml1, r.u_l2, r.t_l1, r.t_cml1, r.t_l2, r.p_l1, r.p_l2),
            "{}",
            c.word
        );
    }
}

#[test]
fn candidate_selection_matches_recount() {
    let (out, classes) = small(5);
    let mut freq: HashMap<String, usize> = HashMap::new();
    for (t, c) in out.corpus.tweets.iter().zip(&classes.classes) {
        if matches!(c, Some(TweetClass::CmL1 | TweetClass::CmL2 | TweetClass::CmEq)) {
            for tok in t.tokens.iter().filter(|k| k.tag == LanguageTag::L2) {
                *freq.entry(tok.text.to_lowercase()).or_default() += 1;
            }
        }
    }
    let mut want: Vec<(String, usize)> = freq.into_iter().collect();
    want.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    want.truncate(25);
    let stop: HashSet<String> = out.stopwords.iter().cloned().collect();
    want.retain(|(w, _)| !stop.contains(w));

    let cfg = SelectionConfig { top_n: 25, stopwords: stop, allowlist: None };
    let got = select_candidates(&out.corpus, &classes, &cfg).unwrap();
    let got: Vec<(String, usize)> = got.into_iter().map(|c| (c.text, c.foreign_freq)).collect();
    assert_eq!(got, want);
}

#[test]
fn context_features_match_recount() {
    let (out, classes) = small(6);
    let words: Vec<String> = out.truth.iter().map(|(w, _)| w.clone()).collect();
    let features = context_features_many(&words, &out.corpus, &classes);
    let cols = feature_columns();
    let code = |t: Option<LanguageTag>| match t {
        None => Some('$'),
        Some(LanguageTag::L2) => Some('E'),
        Some(LanguageTag::L1) => Some('H'),
        Some(_) => None,
    };
    for f in &features {
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut per_cat: BTreeMap<&str, usize> = BTreeMap::new();
        for (t, c) in out.corpus.tweets.iter().zip(&classes.classes) {
            let Some(c) = c.filter(|c| c.is_code_mixed()) else { continue };
            if t.tokens.len() < 2 {
                continue;
            }
            for (i, tok) in t.tokens.iter().enumerate() {
                if tok.tag != LanguageTag::L2 || tok.text.to_lowercase() != f.word {
                    continue;
                }
                let before = code(if i == 0 { None } else { Some(t.tokens[i - 1].tag) });
                let after = code(t.tokens.get(i + 1).map(|k| k.tag));
                if let (Some(b), Some(a)) = (before, after) {
                    *counts.entry(format!("{}:{b}{a}", c.as_str())).or_default() += 1;
                    *per_cat.entry(c.as_str()).or_default() += 1;
                }
            }
        }
        assert_eq!(f.values.len(), FEATURE_DIM);
        for (j, col) in cols.iter().enumerate() {
            let cat = col.split(':').next().unwrap();
            let n = counts.get(col).copied().unwrap_or(0);
            let want = if n == 0 { 0.0 } else { n as f64 / per_cat[cat] as f64 };
            assert_eq!(f.values[j], want, "{} {col}", f.word);
        }
        for cat in 0..3 {
            let s: f64 = f.block(cat).iter().sum();
            assert!(f.counts[cat] == 0 || (s - 1.0).abs() < 1e-12);
        }
    }
}

#[test]
fn mixing_buckets_partition_users() {
    let (out, classes) = small(9);
    let m = user_mix_buckets(&out.corpus, &classes, MixThresholds::default());
    let mut seen = BTreeSet::new();
    for extent in [MixExtent::High, MixExtent::Mid, MixExtent::Low] {
        for u in m.users(extent) {
            assert!(seen.insert(u));
        }
    }
    let all: BTreeSet<String> = out.corpus.users().into_iter().map(str::to_string).collect();
    assert_eq!(seen, all);
}

#[test]
fn files_round_trip() {
    let (out, classes) = small(10);
    let mut buf = Vec::new();
    out.corpus.write_jsonl(&mut buf).unwrap();
    let (back, report) = ingest(buf.as_slice(), &ScriptFilter::default()).unwrap();
    assert_eq!(report.kept, out.corpus.len());
    assert_eq!(back, out.corpus);

    let mut tsv = Vec::new();
    classes.write_tsv(&out.corpus, &mut tsv).unwrap();
    assert_eq!(Classification::read_tsv(&out.corpus, tsv.as_slice()).unwrap(), classes);

    let words: Vec<String> = out.truth.iter().map(|(w, _)| w.clone()).collect();
    let features = context_features_many(&words, &out.corpus, &classes);
    let mut ft = Vec::new();
    write_features_tsv(&features, &mut ft).unwrap();
    assert_eq!(read_features_tsv(ft.as_slice()).unwrap().iter().map(|f| &f.values).collect::<Vec<_>>(),
        features.iter().map(|f| &f.values).collect::<Vec<_>>());

    let table = usage_counts_many(&words, &out.corpus, &classes, None);
    let rows: Vec<ScoreRow> = table
        .counts
        .iter()
        .flat_map(|c| [ScoreRow { metric: Metric::Uur, score: uur(c) }, ScoreRow { metric: Metric::Upr, score: upr(c) }])
        .collect();
    let mut st = Vec::new();
    write_scores_tsv(&rows, &mut st).unwrap();
    assert_eq!(read_scores_tsv(st.as_slice()).unwrap(), rows);
}

#[test]
fn survey_ground_truth_tracks_planted_order() {
    let out = generate(&SynthConfig::default());
    let tallies: Vec<SurveyTally> =
        lexborrow_core::eval::tally(out.survey.iter().map(|r| (r.word.as_str(), r.choice)));
    let truth = lpf_rank(&tallies).unwrap();
    let planted = rank(out.truth.iter().cloned());
    assert!(spearman(&truth, &planted).unwrap() > 0.8);
}

//! Pipeline configuration and the evaluation report: rank correlations,
//! bucket agreement, macro/micro averages, cohort comparisons and
//! re-annotation statistics.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::candidates::SamplePlan;
use crate::classify::{ClassifierConfig, MixExtent, MixThresholds};
use crate::eval::{
    bucket_eval, buckets, lpf_rank, rank, spearman, BucketEvaluation, EvalError, RankList, ReannotationStat,
    SurveyTally,
};
use crate::metrics::{Metric, MetricScore};

pub const BUCKET_COUNT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub classifier: ClassifierConfig,
    pub mix: MixThresholds,
    pub top_n: usize,
    pub k: Option<usize>,
    pub k_min: usize,
    pub k_max: usize,
    pub mws_count: usize,
    pub per_stratum: usize,
    pub age_cut: u32,
    pub lambda: f64,
    pub seed: u64,
    pub bucket_count: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            classifier: ClassifierConfig::default(),
            mix: MixThresholds::default(),
            top_n: 1000,
            k: None,
            k_min: 2,
            k_max: 15,
            mws_count: 27,
            per_stratum: 20,
            age_cut: 30,
            lambda: 1.0,
            seed: 0,
            bucket_count: BUCKET_COUNT,
        }
    }
}

/// Rank correlation, `None` when undefined (zero rank variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlation {
    pub rho: Option<f64>,
    pub n: usize,
}

fn correlate(a: &RankList, b: &RankList) -> Result<Correlation, EvalError> {
    let rho = match spearman(a, b) {
        Ok(r) => Some(r),
        Err(EvalError::ZeroVariance) | Err(EvalError::Empty) => None,
        Err(e) => return Err(e),
    };
    Ok(Correlation { rho, n: a.len() })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortRow {
    pub correlation: Correlation,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub buckets: Option<BucketEvaluation>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub config: PipelineConfig,
    pub input_digests: BTreeMap<String, String>,
    pub words: usize,
    /// Metric vs ground truth, per word set (`hlws`, `mws`, `full`).
    pub correlations: BTreeMap<String, BTreeMap<Metric, Correlation>>,
    /// Bucket-wise precision/recall and macro/micro averages on the full set.
    pub buckets: BTreeMap<Metric, BucketEvaluation>,
    /// Age cohort ground truths (`young`, `elder`) vs each metric.
    pub age_cohorts: BTreeMap<String, BTreeMap<Metric, CohortRow>>,
    /// UUR computed from each mixing-extent user group vs ground truth.
    pub mixing_extent: BTreeMap<MixExtent, CohortRow>,
    pub reannotation: Vec<ReannotationStat>,
    pub notes: Vec<String>,
}

/// Inputs for [`evaluate`]. Score lists must cover exactly the ground-truth words.
#[derive(Debug, Clone, Default)]
pub struct EvaluationInputs {
    pub config: PipelineConfig,
    pub input_digests: BTreeMap<String, String>,
    pub ground_truth: Vec<SurveyTally>,
    pub scores: BTreeMap<Metric, Vec<MetricScore>>,
    pub plan: Option<SamplePlan>,
    pub young: Option<Vec<SurveyTally>>,
    pub elder: Option<Vec<SurveyTally>>,
    pub mixing_scores: BTreeMap<MixExtent, Vec<MetricScore>>,
    pub reannotation: Vec<ReannotationStat>,
}

fn score_rank(scores: &[MetricScore]) -> RankList {
    rank(scores.iter().map(|s| (s.word.clone(), s.value)))
}

fn check_words(truth: &RankList, other: &RankList) -> Result<(), EvalError> {
    let a: BTreeSet<String> = truth.words().into_iter().collect();
    let b: BTreeSet<String> = other.words().into_iter().collect();
    if a != b || truth.len() != other.len() {
        return Err(EvalError::WordSetMismatch(a.symmetric_difference(&b).cloned().collect()));
    }
    Ok(())
}

fn cohort_row(truth: &RankList, ranked: &RankList) -> Result<CohortRow, EvalError> {
    check_words(truth, ranked)?;
    let buckets = if truth.len() >= BUCKET_COUNT {
        Some(bucket_eval(&buckets(ranked)?, &buckets(truth)?)?)
    } else {
        None
    };
    Ok(CohortRow {
        correlation: correlate(ranked, truth)?,
        buckets,
    })
}

/// Narrows ground truth, scores and cohorts to the plan's `full` set, which
/// must be covered by the ground truth.
fn restrict_to_plan(inputs: &mut EvaluationInputs) -> Result<(), EvalError> {
    let Some(plan) = &inputs.plan else { return Ok(()) };
    let keep: BTreeSet<String> = plan.full.iter().cloned().collect();
    let gt: BTreeSet<String> = inputs.ground_truth.iter().map(|t| t.word.clone()).collect();
    let uncovered: Vec<String> = keep.difference(&gt).cloned().collect();
    if !uncovered.is_empty() {
        return Err(EvalError::WordSetMismatch(uncovered));
    }
    let tallies = |t: &mut Vec<SurveyTally>| t.retain(|x| keep.contains(&x.word));
    tallies(&mut inputs.ground_truth);
    if let Some(t) = inputs.young.as_mut() {
        tallies(t);
    }
    if let Some(t) = inputs.elder.as_mut() {
        tallies(t);
    }
    for list in inputs.scores.values_mut().chain(inputs.mixing_scores.values_mut()) {
        list.retain(|s| keep.contains(&s.word));
    }
    Ok(())
}

/// Builds the report. With a sample plan, every table covers only the
/// plan's words.
pub fn evaluate(mut inputs: EvaluationInputs) -> Result<EvaluationReport, EvalError> {
    restrict_to_plan(&mut inputs)?;
    let truth = lpf_rank(&inputs.ground_truth)?;
    let mut notes = Vec::new();
    let ranked: BTreeMap<Metric, RankList> = inputs.scores.iter().map(|(m, s)| (*m, score_rank(s))).collect();
    for r in ranked.values() {
        check_words(&truth, r)?;
    }

    let mut sets: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
    if let Some(plan) = &inputs.plan {
        sets.insert("hlws".into(), plan.hlws.iter().cloned().collect());
        sets.insert("mws".into(), plan.mws.iter().cloned().collect());
    }
    sets.insert("full".into(), truth.words().into_iter().collect());

    let mut correlations = BTreeMap::new();
    for (name, words) in &sets {
        let t = truth.restrict(words);
        let mut row = BTreeMap::new();
        for (m, r) in &ranked {
            row.insert(*m, correlate(&r.restrict(words), &t)?);
        }
        correlations.insert(name.clone(), row);
    }

    let mut bucket_table = BTreeMap::new();
    if truth.len() >= BUCKET_COUNT {
        let gt = buckets(&truth)?;
        for (m, r) in &ranked {
            bucket_table.insert(*m, bucket_eval(&buckets(r)?, &gt)?);
        }
    } else {
        notes.push(format!("bucket tables skipped: {} words, {BUCKET_COUNT} needed", truth.len()));
    }

    let mut age_cohorts = BTreeMap::new();
    for (name, tallies) in [("young", &inputs.young), ("elder", &inputs.elder)] {
        let Some(tallies) = tallies else { continue };
        let cohort_truth = lpf_rank(tallies)?;
        let mut row = BTreeMap::new();
        for (m, r) in &ranked {
            row.insert(*m, cohort_row(&cohort_truth, r)?);
        }
        age_cohorts.insert(name.to_string(), row);
    }

    let mut mixing_extent = BTreeMap::new();
    for (extent, scores) in &inputs.mixing_scores {
        mixing_extent.insert(*extent, cohort_row(&truth, &score_rank(scores))?);
    }

    if ranked.values().any(|r| r.items.iter().any(|i| i.score.is_infinite())) {
        notes.push("some scores are +inf (zero denominator); they rank above all finite scores".into());
    }
    notes.push("bucket 'tn' counts |truth - predicted|, i.e. misses of the predicted bucket".into());

    Ok(EvaluationReport {
        config: inputs.config,
        input_digests: inputs.input_digests,
        words: truth.len(),
        correlations,
        buckets: bucket_table,
        age_cohorts,
        mixing_extent,
        reannotation: inputs.reannotation,
        notes,
    })
}

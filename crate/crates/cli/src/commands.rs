use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs::{self, File};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use lexborrow_core::annotator::{
    read_jsonl, ReannotationExportRecord, ReannotationTask, SurveyExportRecord,
};
use lexborrow_core::candidates::{
    cluster, read_features_tsv, read_word_set, sample_targets, select_candidates, write_features_tsv,
    context_features_many, ClusterModel, KSelection, SamplePlan, SelectionConfig,
};
use lexborrow_core::classify::{classify_corpus, user_mix_buckets, MixExtent};
use lexborrow_core::corpus::{ingest, lexicon_tag, Lexicon, ScriptFilter};
use lexborrow_core::eval::{
    cohort_split, lpf_rank, rank, reannotation_stats, reannotation_strata, sample_context_tweets, tally,
    AgedResponse, ContextMode, RankList, ReannotationRecord, SurveyTally,
};
use lexborrow_core::metrics::{
    baseline_inputs, baseline_score, read_scores_tsv, score, usage_counts_many, write_scores_tsv, FrequencyTable,
    MetricScore, ScoreRow, TranslationMap,
};
use lexborrow_core::report::{evaluate, CohortRow, EvaluationInputs};
use lexborrow_core::synth::{generate, SynthConfig};
use lexborrow_core::{Classification, Corpus, Metric, PipelineConfig};

use crate::args::{Command, EvalArgs, PipelineArgs};
use crate::error::{in_module, CliError, CliResult};

/// Defaults, then flags, then the `--config` file.
pub fn resolve_config(args: &PipelineArgs) -> CliResult<PipelineConfig> {
    let mut cfg = PipelineConfig::default();
    if let Some(v) = args.mono_threshold {
        cfg.classifier.mono_threshold = v;
    }
    if let Some(v) = args.eq_band {
        cfg.classifier.eq_band = v;
    }
    if let Some(v) = args.min_trail {
        cfg.classifier.min_trail = v;
    }
    if let Some(v) = args.mix_low {
        cfg.mix.low = v;
    }
    if let Some(v) = args.mix_high {
        cfg.mix.high = v;
    }
    if let Some(v) = args.top_n {
        cfg.top_n = v;
    }
    if args.k.is_some() {
        cfg.k = args.k;
    }
    if let Some(v) = args.k_max {
        cfg.k_max = v;
    }
    if let Some(v) = args.mws_count {
        cfg.mws_count = v;
    }
    if let Some(v) = args.per_stratum {
        cfg.per_stratum = v;
    }
    if let Some(v) = args.age_cut {
        cfg.age_cut = v;
    }
    if let Some(v) = args.lambda {
        cfg.lambda = v;
    }
    if let Some(v) = args.seed {
        cfg.seed = v;
    }
    if let Some(path) = &args.config {
        let text = fs::read_to_string(existing(path)?).map_err(in_module("config"))?;
        let overrides: serde_json::Value = serde_json::from_str(&text).map_err(in_module("config"))?;
        let mut merged = serde_json::to_value(&cfg).map_err(in_module("config"))?;
        merge(&mut merged, overrides);
        cfg = serde_json::from_value(merged).map_err(in_module("config"))?;
    }
    cfg.classifier.validate().map_err(in_module("config"))?;
    if cfg.mix.low.partial_cmp(&cfg.mix.high).is_none_or(|o| o.is_gt()) {
        return Err(CliError::data("config", format!("mix.low {} exceeds mix.high {}", cfg.mix.low, cfg.mix.high)));
    }
    if cfg.bucket_count != 5 {
        return Err(CliError::data("config", "bucket_count is fixed at 5"));
    }
    Ok(cfg)
}

fn merge(base: &mut serde_json::Value, overrides: serde_json::Value) {
    match (base, overrides) {
        (serde_json::Value::Object(b), serde_json::Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(serde_json::Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

fn existing(path: &Path) -> CliResult<&Path> {
    if path.exists() {
        Ok(path)
    } else {
        Err(CliError::Usage(format!("missing input file {}", path.display())))
    }
}

fn reader(path: &Path) -> CliResult<BufReader<File>> {
    let file = File::open(existing(path)?).map_err(|e| CliError::Usage(format!("cannot open {}: {e}", path.display())))?;
    Ok(BufReader::new(file))
}

/// Writes to `path`, or stdout when absent.
fn emit(path: Option<&Path>, module: &'static str, write: impl FnOnce(&mut dyn Write) -> io::Result<()>) -> CliResult<()> {
    let result = match path {
        Some(p) => {
            let file = File::create(p).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", p.display())))?;
            let mut out = BufWriter::new(file);
            write(&mut out).and_then(|_| out.flush())
        }
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            write(&mut lock).and_then(|_| lock.flush())
        }
    };
    result.map_err(in_module(module))
}

fn emit_json<T: Serialize>(path: Option<&Path>, module: &'static str, value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(in_module(module))?;
    emit(path, module, |w| writeln!(w, "{text}"))
}

fn load_corpus(path: &Path) -> CliResult<Corpus> {
    let (corpus, report) = ingest(reader(path)?, &ScriptFilter::default()).map_err(in_module("corpus"))?;
    if let Some(e) = report.errors.first() {
        return Err(CliError::data("corpus", format!("{}: line {}: {}", path.display(), e.line, e.message)));
    }
    if report.dropped_total() > 0 {
        eprintln!("corpus: {} of {} records dropped by ingest filters", report.dropped_total(), report.total);
    }
    Ok(corpus)
}

fn load_classes(corpus: &Corpus, path: &Path) -> CliResult<Classification> {
    Classification::read_tsv(corpus, reader(path)?).map_err(in_module("classify"))
}

/// First column of each non-blank, non-comment line, lowercased, deduplicated.
fn load_words(path: &Path) -> CliResult<Vec<String>> {
    let mut seen = HashSet::new();
    let mut words = Vec::new();
    for line in reader(path)?.lines() {
        let line = line.map_err(in_module("words"))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let word = line.split('\t').next().unwrap_or_default().trim().to_lowercase();
        if seen.insert(word.clone()) {
            words.push(word);
        }
    }
    if words.is_empty() {
        return Err(CliError::data("words", format!("{}: no words", path.display())));
    }
    Ok(words)
}

fn load_set(path: &Path) -> CliResult<HashSet<String>> {
    read_word_set(reader(path)?).map_err(in_module("words"))
}

fn load_scores(path: &Path) -> CliResult<Vec<ScoreRow>> {
    read_scores_tsv(reader(path)?).map_err(in_module("metrics"))
}

fn scores_for(rows: &[ScoreRow], metric: Metric, path: &Path) -> CliResult<Vec<MetricScore>> {
    let picked: Vec<MetricScore> = rows.iter().filter(|r| r.metric == metric).map(|r| r.score.clone()).collect();
    if picked.is_empty() {
        return Err(CliError::data("metrics", format!("{}: no {metric} scores", path.display())));
    }
    Ok(picked)
}

fn load_survey(path: &Path) -> CliResult<Vec<SurveyExportRecord>> {
    let records: Vec<SurveyExportRecord> = read_jsonl(reader(path)?).map_err(in_module("eval"))?;
    if records.is_empty() {
        return Err(CliError::data("eval", format!("{}: no survey responses", path.display())));
    }
    Ok(records)
}

fn survey_tallies(records: &[SurveyExportRecord]) -> Vec<SurveyTally> {
    tally(records.iter().map(|r| (r.word.as_str(), r.choice)))
}

fn digest(path: &Path) -> CliResult<String> {
    let bytes = fs::read(existing(path)?).map_err(in_module("digest"))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Keys are `role:file-name`, so reports do not depend on directory layout.
fn digests<'a>(inputs: impl IntoIterator<Item = (&'a str, &'a Path)>) -> CliResult<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (role, path) in inputs {
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        out.insert(format!("{role}:{name}"), digest(path)?);
    }
    Ok(out)
}

pub fn run(command: Command, pipeline: &PipelineArgs) -> CliResult<()> {
    let cfg = resolve_config(pipeline)?;
    match command {
        Command::Ingest { input, out, report, lexicon } => {
            let (mut corpus, rep) = ingest(reader(&input)?, &ScriptFilter::default()).map_err(in_module("corpus"))?;
            if let Some(lex) = lexicon {
                let lexicon = Lexicon::from_tsv(reader(&lex)?).map_err(in_module("corpus"))?;
                for t in &mut corpus.tweets {
                    let texts: Vec<&str> = t.tokens.iter().map(|k| k.text.as_str()).collect();
                    t.tokens = lexicon_tag(&texts, &lexicon);
                    t.phrases.clear();
                }
            }
            emit(out.as_deref(), "corpus", |w| corpus.write_jsonl(w))?;
            eprintln!("ingest: kept {} of {} records", rep.kept, rep.total);
            match report {
                Some(p) => emit_json(Some(&p), "corpus", &rep),
                None => Ok(()),
            }
        }
        Command::Classify { corpus, out, histogram, users } => {
            let corpus = load_corpus(&corpus)?;
            let classes = classify_corpus(&corpus, &cfg.classifier);
            if classes.histogram.unclassifiable > 0 {
                eprintln!("classify: {} tweets without language tokens", classes.histogram.unclassifiable);
            }
            emit(out.as_deref(), "classify", |w| classes.write_tsv(&corpus, w))?;
            if let Some(p) = histogram {
                emit_json(Some(&p), "classify", &classes.histogram)?;
            }
            if let Some(p) = users {
                emit_json(Some(&p), "classify", &user_mix_buckets(&corpus, &classes, cfg.mix))?;
            }
            Ok(())
        }
        Command::Candidates { corpus, classes, out, stopwords, allowlist } => {
            let corpus = load_corpus(&corpus)?;
            let classes = load_classes(&corpus, &classes)?;
            let sel = SelectionConfig {
                top_n: cfg.top_n,
                stopwords: stopwords.as_deref().map(load_set).transpose()?.unwrap_or_default(),
                allowlist: allowlist.as_deref().map(load_set).transpose()?,
            };
            let words = select_candidates(&corpus, &classes, &sel).map_err(in_module("candidates"))?;
            emit(out.as_deref(), "candidates", |w| {
                for c in &words {
                    writeln!(w, "{}\t{}", c.text, c.foreign_freq)?;
                }
                Ok(())
            })
        }
        Command::Features { corpus, classes, words, out } => {
            let corpus = load_corpus(&corpus)?;
            let classes = load_classes(&corpus, &classes)?;
            let words = load_words(&words)?;
            let features = context_features_many(&words, &corpus, &classes);
            let empty: Vec<&str> = features.iter().filter(|f| f.is_empty()).map(|f| f.word.as_str()).collect();
            if !empty.is_empty() {
                eprintln!("features: no countable context for {}", empty.join(", "));
            }
            emit(out.as_deref(), "candidates", |w| write_features_tsv(&features, w))
        }
        Command::Cluster { features, out } => {
            let features = read_features_tsv(reader(&features)?).map_err(in_module("candidates"))?;
            let selection = match cfg.k {
                Some(k) => KSelection::Fixed(k),
                None => KSelection::Elbow { min: cfg.k_min, max: cfg.k_max },
            };
            let model = cluster(&features, selection, cfg.seed).map_err(in_module("candidates"))?;
            emit_json(out.as_deref(), "candidates", &model)
        }
        Command::Sample { model, scores, metric, out } => {
            let text = fs::read_to_string(existing(&model)?).map_err(in_module("candidates"))?;
            let model: ClusterModel = serde_json::from_str(&text).map_err(in_module("candidates"))?;
            let rows = load_scores(&scores)?;
            let by_word: HashMap<String, f64> =
                scores_for(&rows, metric, &scores)?.into_iter().map(|s| (s.word, s.value)).collect();
            let plan = sample_targets(&model, &by_word, cfg.mws_count, cfg.seed).map_err(in_module("candidates"))?;
            emit_json(out.as_deref(), "candidates", &plan)
        }
        Command::Metrics { corpus, classes, words, out, counts, users } => {
            let corpus = load_corpus(&corpus)?;
            let classes = load_classes(&corpus, &classes)?;
            let words = load_words(&words)?;
            let users = users.as_deref().map(load_set).transpose()?;
            let table = usage_counts_many(&words, &corpus, &classes, users.as_ref());
            if table.phrases_derived {
                eprintln!("metrics: some tweets carry no phrase spans; same-tag runs were used");
            }
            let rows: Vec<ScoreRow> = table
                .counts
                .iter()
                .flat_map(|c| Metric::SOCIAL.into_iter().map(move |m| (m, c)))
                .filter_map(|(m, c)| score(m, c).map(|s| ScoreRow { metric: m, score: s }))
                .collect();
            emit(out.as_deref(), "metrics", |w| write_scores_tsv(&rows, w))?;
            match counts {
                Some(p) => emit_json(Some(&p), "metrics", &table.counts),
                None => Ok(()),
            }
        }
        Command::Baseline { words, map, freq, out } => {
            let words = load_words(&words)?;
            let map = TranslationMap::from_tsv(reader(&map)?).map_err(in_module("metrics"))?;
            let freq = FrequencyTable::from_tsv(reader(&freq)?).map_err(in_module("metrics"))?;
            let inputs = baseline_inputs(&words, &map, &freq).map_err(in_module("metrics"))?;
            let rows = inputs
                .iter()
                .map(|b| baseline_score(b, cfg.lambda).map(|s| ScoreRow { metric: Metric::Baseline, score: s }))
                .collect::<Result<Vec<_>, _>>()
                .map_err(in_module("metrics"))?;
            emit(out.as_deref(), "metrics", |w| write_scores_tsv(&rows, w))
        }
        Command::Rank { scores, metric, survey, out } => {
            let list = match (scores, survey) {
                (_, Some(survey)) => lpf_rank(&survey_tallies(&load_survey(&survey)?)).map_err(in_module("eval"))?,
                (Some(scores), None) => {
                    let rows = load_scores(&scores)?;
                    rank(scores_for(&rows, metric, &scores)?.into_iter().map(|s| (s.word, s.value)))
                }
                (None, None) => return Err(CliError::Usage("rank needs --scores or --survey".into())),
            };
            emit(out.as_deref(), "eval", |w| w.write_all(list.to_tsv().as_bytes()))
        }
        Command::Evaluate { inputs, plan, reannotation, out } => {
            let mut eval = eval_inputs(&cfg, &inputs)?;
            if let Some(p) = &plan {
                let text = fs::read_to_string(existing(p)?).map_err(in_module("candidates"))?;
                eval.plan = Some(serde_json::from_str::<SamplePlan>(&text).map_err(in_module("candidates"))?);
                eval.input_digests.extend(digests([("plan", p.as_path())])?);
            }
            if let Some(p) = &reannotation {
                let records = load_reannotation(p)?;
                eval.reannotation = reannotation_stats(&records).map_err(in_module("eval"))?;
                eval.input_digests.extend(digests([("reannotation", p.as_path())])?);
            }
            let report = evaluate(eval).map_err(in_module("eval"))?;
            emit_json(out.as_deref(), "eval", &report)
        }
        Command::Cohorts { inputs, out } => {
            let eval = eval_inputs(&cfg, &inputs)?;
            let report = evaluate(eval).map_err(in_module("eval"))?;
            let tables = CohortReport {
                config: report.config,
                input_digests: report.input_digests,
                age_cohorts: report.age_cohorts,
                mixing_extent: report.mixing_extent,
            };
            emit_json(out.as_deref(), "eval", &tables)
        }
        Command::ReannotatePrep { corpus, scores, metric, out, shortfall } => {
            let corpus = load_corpus(&corpus)?;
            let rows = load_scores(&scores)?;
            let ranked: RankList = rank(scores_for(&rows, metric, &scores)?.into_iter().map(|s| (s.word, s.value)));
            let strata = reannotation_strata(&ranked, cfg.per_stratum, cfg.seed).map_err(in_module("eval"))?;
            let (tasks, missing) = build_tasks(&corpus, &strata, cfg.seed);
            for (mode, words) in &missing {
                if !words.is_empty() {
                    eprintln!("reannotate-prep: no {mode} tweet for {}", words.join(", "));
                }
            }
            emit(out.as_deref(), "eval", |w| {
                for t in &tasks {
                    writeln!(w, "{}", serde_json::to_string(t).map_err(io::Error::other)?)?;
                }
                Ok(())
            })?;
            match shortfall {
                Some(p) => emit_json(Some(&p), "eval", &missing),
                None => Ok(()),
            }
        }
        Command::ReannotateStats { export, out } => {
            let records = load_reannotation(&export)?;
            let stats = reannotation_stats(&records).map_err(in_module("eval"))?;
            emit_json(out.as_deref(), "eval", &stats)
        }
        Command::Serve { items, tasks, log, addr } => crate::server::serve_blocking(&items, tasks.as_deref(), &log, &addr),
        Command::Synth { out, small, users, filler_tweets, baseline_noise, annotators } => {
            let seed = cfg.seed;
            let mut sc = if small { SynthConfig::small(seed) } else { SynthConfig { seed, ..SynthConfig::default() } };
            if let Some(v) = users {
                sc.users = v;
            }
            if let Some(v) = filler_tweets {
                sc.filler_tweets = v;
            }
            if let Some(v) = baseline_noise {
                sc.baseline_noise = v;
            }
            if let Some(v) = annotators {
                sc.annotators = v;
            }
            write_synth(&sc, &out)
        }
    }
}

#[derive(Serialize)]
struct CohortReport {
    config: PipelineConfig,
    input_digests: BTreeMap<String, String>,
    age_cohorts: BTreeMap<String, BTreeMap<Metric, CohortRow>>,
    mixing_extent: BTreeMap<MixExtent, CohortRow>,
}

fn load_reannotation(path: &Path) -> CliResult<Vec<ReannotationRecord>> {
    let export: Vec<ReannotationExportRecord> = read_jsonl(reader(path)?).map_err(in_module("eval"))?;
    Ok(export.iter().map(ReannotationExportRecord::to_record).collect())
}

fn eval_inputs(cfg: &PipelineConfig, args: &EvalArgs) -> CliResult<EvaluationInputs> {
    let survey = load_survey(&args.survey)?;
    let ground_truth = survey_tallies(&survey);
    let aged: Vec<AgedResponse> = survey.iter().map(SurveyExportRecord::to_aged).collect();
    let (young, elder) = cohort_split(&aged, cfg.age_cut);

    let mut scores: BTreeMap<Metric, Vec<MetricScore>> = BTreeMap::new();
    let mut roles = vec![("survey".to_string(), args.survey.clone())];
    for (i, path) in args.scores.iter().enumerate() {
        for row in load_scores(path)? {
            let list = scores.entry(row.metric).or_default();
            if list.iter().any(|s| s.word == row.score.word) {
                return Err(CliError::data(
                    "metrics",
                    format!("{}: duplicate {} score for {:?}", path.display(), row.metric, row.score.word),
                ));
            }
            list.push(row.score);
        }
        roles.push((format!("scores{i}"), path.clone()));
    }

    let mut mixing_scores = BTreeMap::new();
    if let (Some(corpus_path), Some(classes_path)) = (&args.corpus, &args.classes) {
        let corpus = load_corpus(corpus_path)?;
        let classes = load_classes(&corpus, classes_path)?;
        let words: Vec<String> = ground_truth.iter().map(|t| t.word.clone()).collect();
        let mix = user_mix_buckets(&corpus, &classes, cfg.mix);
        for extent in [MixExtent::High, MixExtent::Mid, MixExtent::Low] {
            let users: HashSet<String> = mix.users(extent).into_iter().collect();
            if users.is_empty() {
                continue;
            }
            let table = usage_counts_many(&words, &corpus, &classes, Some(&users));
            let uur = table.counts.iter().filter_map(|c| score(Metric::Uur, c)).collect();
            mixing_scores.insert(extent, uur);
        }
        roles.push(("corpus".into(), corpus_path.clone()));
        roles.push(("classes".into(), classes_path.clone()));
    }

    let input_digests = digests(roles.iter().map(|(r, p)| (r.as_str(), p.as_path())))?;
    Ok(EvaluationInputs {
        config: cfg.clone(),
        input_digests,
        ground_truth,
        scores,
        plan: None,
        young: Some(young),
        elder: Some(elder),
        mixing_scores,
        reannotation: Vec::new(),
    })
}

fn build_tasks(
    corpus: &Corpus,
    strata: &lexborrow_core::eval::Strata,
    seed: u64,
) -> (Vec<ReannotationTask>, BTreeMap<ContextMode, Vec<String>>) {
    let mut tasks = Vec::new();
    let mut missing = BTreeMap::new();
    let words: Vec<String> = strata.iter().map(|(_, w)| w.clone()).collect();
    for mode in ContextMode::ALL {
        let sample = sample_context_tweets(&words, corpus, mode, seed);
        for (stratum, word) in strata.iter() {
            let Some(pick) = sample.picks.get(word) else { continue };
            tasks.push(ReannotationTask {
                task_id: format!("{stratum}-{mode}-{word}").to_lowercase(),
                word: word.clone(),
                stratum,
                context_mode: mode,
                tokens: corpus.tweets[pick.tweet_index].tokens.clone(),
                target_index: pick.target_index,
            });
        }
        missing.insert(mode, sample.shortfall);
    }
    (tasks, missing)
}

/// File names written by `synth`, relative to its output directory.
pub mod synth_files {
    pub const CORPUS: &str = "corpus.jsonl";
    pub const TRUTH: &str = "truth.tsv";
    pub const MAP: &str = "translit.tsv";
    pub const FREQ: &str = "freq.tsv";
    pub const ITEMS: &str = "survey_items.tsv";
    pub const SURVEY: &str = "survey.jsonl";
    pub const STOPWORDS: &str = "stopwords.txt";
    pub const TARGETS: &str = "targets.txt";
}

fn write_synth(cfg: &SynthConfig, dir: &Path) -> CliResult<()> {
    use synth_files::*;
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))?;
    let out = generate(cfg);
    let path = |name: &str| -> PathBuf { dir.join(name) };
    emit(Some(&path(CORPUS)), "synth", |w| out.corpus.write_jsonl(w))?;
    emit(Some(&path(TRUTH)), "synth", |w| {
        for (word, level) in &out.truth {
            writeln!(w, "{word}\t{level}")?;
        }
        Ok(())
    })?;
    emit(Some(&path(TARGETS)), "synth", |w| {
        let all: BTreeSet<&String> = out.truth.iter().map(|(w, _)| w).collect();
        for word in all {
            writeln!(w, "{word}")?;
        }
        Ok(())
    })?;
    emit(Some(&path(MAP)), "synth", |w| out.map.write_tsv(w))?;
    emit(Some(&path(FREQ)), "synth", |w| out.freq.write_tsv(w))?;
    emit(Some(&path(ITEMS)), "synth", |w| {
        for item in &out.items {
            writeln!(w, "{}\t{}\t{}", item.word, item.sentence_foreign, item.sentence_native)?;
        }
        Ok(())
    })?;
    emit(Some(&path(SURVEY)), "synth", |w| {
        for r in &out.survey {
            writeln!(w, "{}", serde_json::to_string(r).map_err(io::Error::other)?)?;
        }
        Ok(())
    })?;
    emit(Some(&path(STOPWORDS)), "synth", |w| {
        for s in &out.stopwords {
            writeln!(w, "{s}")?;
        }
        Ok(())
    })?;
    eprintln!(
        "synth: {} tweets, {} target words, {} survey responses in {}",
        out.corpus.len(),
        out.truth.len(),
        out.survey.len(),
        dir.display()
    );
    Ok(())
}

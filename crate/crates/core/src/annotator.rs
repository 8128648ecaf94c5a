//! Durable store behind the annotation service: survey judgments and
//! re-annotation tag decisions, kept in an append-only JSON-lines log.
//!
//! Every accepted submission is written and synced to the log before the
//! call returns. Opening a store replays the log, so state survives a
//! restart. Uniqueness checks and appends happen under one write lock.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};
use std::time::{SystemTime, UNIX_EPOCH};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{LanguageTag, Token};
use crate::eval::{AgedResponse, Choice, ContextMode, ReannotationRecord, Stratum, SurveyTally};

#[derive(Debug, Error)]
pub enum AnnotatorError {
    #[error("unknown annotator {0:?}")]
    UnknownAnnotator(String),
    #[error("{kind} {id:?} not found")]
    NotFound { kind: &'static str, id: String },
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("log line {line} is corrupt: {message}")]
    CorruptLog { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Survey,
    Reannotation,
}

impl std::str::FromStr for TaskKind {
    type Err = AnnotatorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "survey" => Ok(TaskKind::Survey),
            "reannotation" => Ok(TaskKind::Reannotation),
            _ => Err(AnnotatorError::Invalid(format!("unknown task kind {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyItem {
    pub item_id: String,
    pub word: String,
    pub sentence_foreign: String,
    pub sentence_native: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub annotator_id: String,
    pub item_id: String,
    pub choice: Choice,
    pub received_at: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnotatorProfile {
    pub annotator_id: String,
    pub age: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub education: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReannotationTask {
    pub task_id: String,
    pub word: String,
    pub stratum: Stratum,
    pub context_mode: ContextMode,
    pub tokens: Vec<Token>,
    pub target_index: usize,
}

impl ReannotationTask {
    pub fn validate(&self) -> Result<(), AnnotatorError> {
        let target = self.tokens.get(self.target_index).ok_or_else(|| {
            AnnotatorError::Invalid(format!("task {}: target index out of range", self.task_id))
        })?;
        if target.tag != LanguageTag::L2 {
            return Err(AnnotatorError::Invalid(format!("task {}: target token is not L2", self.task_id)));
        }
        let mut native = 0;
        let mut foreign = 0;
        for (i, t) in self.tokens.iter().enumerate() {
            if i == self.target_index {
                continue;
            }
            match t.tag {
                LanguageTag::L1 => native += 1,
                LanguageTag::L2 => foreign += 1,
                _ => {}
            }
        }
        if !self.context_mode.admits(native, foreign) {
            return Err(AnnotatorError::Invalid(format!(
                "task {}: context does not satisfy {}",
                self.task_id, self.context_mode
            )));
        }
        Ok(())
    }
}

/// Final tag chosen for the highlighted word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FinalTag {
    L1,
    L2,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReannotationResponse {
    pub annotator_id: String,
    pub task_id: String,
    pub final_tag: FinalTag,
    pub received_at: i64,
}

impl ReannotationResponse {
    pub fn flipped(&self) -> bool {
        self.final_tag == FinalTag::L1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord {
    Annotator(AnnotatorProfile),
    Survey(SurveyResponse),
    Reannotation(ReannotationResponse),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "task", rename_all = "lowercase")]
pub enum Task {
    Survey(SurveyItem),
    Reannotation(ReannotationTask),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NextTask {
    pub done: bool,
    pub answered: usize,
    pub total: usize,
    #[serde(flatten, default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Registration {
    Created,
    Existing,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveyExportRecord {
    pub annotator_id: String,
    pub age: u32,
    pub item_id: String,
    pub word: String,
    pub choice: Choice,
    pub received_at: i64,
}

impl SurveyExportRecord {
    pub fn to_aged(&self) -> AgedResponse {
        AgedResponse {
            age: self.age,
            word: self.word.clone(),
            choice: self.choice,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReannotationExportRecord {
    pub annotator_id: String,
    pub task_id: String,
    pub word: String,
    pub stratum: Stratum,
    pub context: ContextMode,
    pub final_tag: FinalTag,
    pub flipped: bool,
    pub received_at: i64,
}

impl ReannotationExportRecord {
    pub fn to_record(&self) -> ReannotationRecord {
        ReannotationRecord {
            word: self.word.clone(),
            stratum: self.stratum,
            context: self.context,
            annotator: self.annotator_id.clone(),
            flipped: self.flipped,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlipTally {
    pub word: String,
    pub stratum: Stratum,
    pub context: ContextMode,
    pub annotators: usize,
    pub flips: usize,
    pub fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ExportTallies {
    Survey(Vec<SurveyTally>),
    Reannotation(Vec<FlipTally>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Export {
    /// One JSON record per line, in log order.
    pub lines: String,
    pub tallies: ExportTallies,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreStats {
    pub annotators: usize,
    pub survey_items: usize,
    pub reannotation_tasks: usize,
    pub survey_responses: usize,
    pub reannotation_responses: usize,
}

pub type Clock = Arc<dyn Fn() -> i64 + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(|| {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs() as i64)
            .unwrap_or(0)
    })
}

struct State {
    log: File,
    annotators: BTreeMap<String, AnnotatorProfile>,
    survey: Vec<SurveyResponse>,
    survey_keys: HashSet<(String, String)>,
    reannotation: Vec<ReannotationResponse>,
    reannotation_keys: HashSet<(String, String)>,
}

impl State {
    fn apply(&mut self, record: LogRecord) {
        match record {
            LogRecord::Annotator(p) => {
                self.annotators.insert(p.annotator_id.clone(), p);
            }
            LogRecord::Survey(r) => {
                self.survey_keys.insert((r.annotator_id.clone(), r.item_id.clone()));
                self.survey.push(r);
            }
            LogRecord::Reannotation(r) => {
                self.reannotation_keys.insert((r.annotator_id.clone(), r.task_id.clone()));
                self.reannotation.push(r);
            }
        }
    }

    fn append(&mut self, record: LogRecord) -> Result<(), AnnotatorError> {
        let mut line = serde_json::to_vec(&record).map_err(|e| AnnotatorError::Invalid(e.to_string()))?;
        line.push(b'\n');
        self.log.write_all(&line)?;
        self.log.sync_data()?;
        self.apply(record);
        Ok(())
    }
}

pub struct AnnotationStore {
    path: PathBuf,
    items: Vec<SurveyItem>,
    item_index: HashMap<String, usize>,
    tasks: Vec<ReannotationTask>,
    task_index: HashMap<String, usize>,
    state: RwLock<State>,
    clock: Clock,
}

impl std::fmt::Debug for AnnotationStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AnnotationStore")
            .field("path", &self.path)
            .field("items", &self.items.len())
            .field("tasks", &self.tasks.len())
            .finish()
    }
}

impl AnnotationStore {
    pub fn open(
        log_path: impl AsRef<Path>,
        items: Vec<SurveyItem>,
        tasks: Vec<ReannotationTask>,
    ) -> Result<Self, AnnotatorError> {
        Self::open_with_clock(log_path, items, tasks, system_clock())
    }

    /// Opens the log at `log_path`, creating it if absent, and replays it.
    /// A torn final line left by an interrupted write is truncated away.
    pub fn open_with_clock(
        log_path: impl AsRef<Path>,
        items: Vec<SurveyItem>,
        tasks: Vec<ReannotationTask>,
        clock: Clock,
    ) -> Result<Self, AnnotatorError> {
        let path = log_path.as_ref().to_path_buf();
        let item_index = index_unique(items.iter().map(|i| i.item_id.as_str()), "survey item")?;
        let task_index = index_unique(tasks.iter().map(|t| t.task_id.as_str()), "re-annotation task")?;
        for t in &tasks {
            t.validate()?;
        }

        let mut log = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let records = replay(&mut log)?;
        let mut state = State {
            log,
            annotators: BTreeMap::new(),
            survey: Vec::new(),
            survey_keys: HashSet::new(),
            reannotation: Vec::new(),
            reannotation_keys: HashSet::new(),
        };
        for r in records {
            state.apply(r);
        }
        Ok(AnnotationStore {
            path,
            items,
            item_index,
            tasks,
            task_index,
            state: RwLock::new(state),
            clock,
        })
    }

    pub fn log_path(&self) -> &Path {
        &self.path
    }

    pub fn items(&self) -> &[SurveyItem] {
        &self.items
    }

    pub fn tasks(&self) -> &[ReannotationTask] {
        &self.tasks
    }

    fn read(&self) -> std::sync::RwLockReadGuard<'_, State> {
        self.state.read().unwrap_or_else(|e| e.into_inner())
    }

    fn write(&self) -> std::sync::RwLockWriteGuard<'_, State> {
        self.state.write().unwrap_or_else(|e| e.into_inner())
    }

    /// Registers a profile. Resubmitting an identical profile is a no-op;
    /// a differing profile under an existing id is a conflict.
    pub fn register(&self, profile: AnnotatorProfile) -> Result<Registration, AnnotatorError> {
        if profile.annotator_id.trim().is_empty() {
            return Err(AnnotatorError::Invalid("annotator_id is empty".into()));
        }
        let mut state = self.write();
        match state.annotators.get(&profile.annotator_id) {
            Some(existing) if *existing == profile => Ok(Registration::Existing),
            Some(_) => Err(AnnotatorError::Conflict(format!(
                "annotator {:?} is registered with a different profile",
                profile.annotator_id
            ))),
            None => {
                state.append(LogRecord::Annotator(profile))?;
                Ok(Registration::Created)
            }
        }
    }

    pub fn profile(&self, annotator_id: &str) -> Option<AnnotatorProfile> {
        self.read().annotators.get(annotator_id).cloned()
    }

    /// Next unanswered task in the annotator's fixed shuffled order.
    pub fn next_task(&self, annotator_id: &str, kind: TaskKind) -> Result<NextTask, AnnotatorError> {
        let state = self.read();
        if !state.annotators.contains_key(annotator_id) {
            return Err(AnnotatorError::UnknownAnnotator(annotator_id.to_string()));
        }
        let (ids, answered): (Vec<&str>, &HashSet<(String, String)>) = match kind {
            TaskKind::Survey => (self.items.iter().map(|i| i.item_id.as_str()).collect(), &state.survey_keys),
            TaskKind::Reannotation => (self.tasks.iter().map(|t| t.task_id.as_str()).collect(), &state.reannotation_keys),
        };
        let is_answered = |id: &str| answered.contains(&(annotator_id.to_string(), id.to_string()));
        let done_count = ids.iter().filter(|id| is_answered(id)).count();
        let order = annotator_order(annotator_id, ids.len());
        let next = order.into_iter().find(|&i| !is_answered(ids[i]));
        let task = next.map(|i| match kind {
            TaskKind::Survey => Task::Survey(self.items[i].clone()),
            TaskKind::Reannotation => Task::Reannotation(self.tasks[i].clone()),
        });
        Ok(NextTask {
            done: task.is_none(),
            answered: done_count,
            total: ids.len(),
            task,
        })
    }

    pub fn submit_survey(
        &self,
        annotator_id: &str,
        item_id: &str,
        choice: Choice,
    ) -> Result<SurveyResponse, AnnotatorError> {
        if !self.item_index.contains_key(item_id) {
            return Err(AnnotatorError::NotFound { kind: "survey item", id: item_id.to_string() });
        }
        let mut state = self.write();
        if !state.annotators.contains_key(annotator_id) {
            return Err(AnnotatorError::UnknownAnnotator(annotator_id.to_string()));
        }
        if state.survey_keys.contains(&(annotator_id.to_string(), item_id.to_string())) {
            return Err(AnnotatorError::Conflict(format!(
                "annotator {annotator_id:?} already answered {item_id:?}"
            )));
        }
        let response = SurveyResponse {
            annotator_id: annotator_id.to_string(),
            item_id: item_id.to_string(),
            choice,
            received_at: (self.clock)(),
        };
        state.append(LogRecord::Survey(response.clone()))?;
        Ok(response)
    }

    pub fn submit_reannotation(
        &self,
        annotator_id: &str,
        task_id: &str,
        final_tag: FinalTag,
    ) -> Result<ReannotationResponse, AnnotatorError> {
        if !self.task_index.contains_key(task_id) {
            return Err(AnnotatorError::NotFound { kind: "re-annotation task", id: task_id.to_string() });
        }
        let mut state = self.write();
        if !state.annotators.contains_key(annotator_id) {
            return Err(AnnotatorError::UnknownAnnotator(annotator_id.to_string()));
        }
        if state.reannotation_keys.contains(&(annotator_id.to_string(), task_id.to_string())) {
            return Err(AnnotatorError::Conflict(format!(
                "annotator {annotator_id:?} already answered {task_id:?}"
            )));
        }
        let response = ReannotationResponse {
            annotator_id: annotator_id.to_string(),
            task_id: task_id.to_string(),
            final_tag,
            received_at: (self.clock)(),
        };
        state.append(LogRecord::Reannotation(response.clone()))?;
        Ok(response)
    }

    pub fn stats(&self) -> StoreStats {
        let state = self.read();
        StoreStats {
            annotators: state.annotators.len(),
            survey_items: self.items.len(),
            reannotation_tasks: self.tasks.len(),
            survey_responses: state.survey.len(),
            reannotation_responses: state.reannotation.len(),
        }
    }

    /// Response log of one kind with per-word tallies. Output depends only
    /// on the log contents, so a frozen log exports identical bytes.
    pub fn export(&self, kind: TaskKind) -> Export {
        let state = self.read();
        let mut lines = String::new();
        match kind {
            TaskKind::Survey => {
                let mut records = Vec::with_capacity(state.survey.len());
                for r in &state.survey {
                    let rec = SurveyExportRecord {
                        annotator_id: r.annotator_id.clone(),
                        age: state.annotators[&r.annotator_id].age,
                        item_id: r.item_id.clone(),
                        word: self.items[self.item_index[&r.item_id]].word.clone(),
                        choice: r.choice,
                        received_at: r.received_at,
                    };
                    lines.push_str(&serde_json::to_string(&rec).expect("serializable"));
                    lines.push('\n');
                    records.push(rec);
                }
                let tallies = crate::eval::tally(records.iter().map(|r| (r.word.as_str(), r.choice)));
                Export {
                    lines,
                    tallies: ExportTallies::Survey(tallies),
                }
            }
            TaskKind::Reannotation => {
                let mut table: BTreeMap<(Stratum, ContextMode, String), (usize, usize)> = BTreeMap::new();
                for r in &state.reannotation {
                    let task = &self.tasks[self.task_index[&r.task_id]];
                    let rec = ReannotationExportRecord {
                        annotator_id: r.annotator_id.clone(),
                        task_id: r.task_id.clone(),
                        word: task.word.clone(),
                        stratum: task.stratum,
                        context: task.context_mode,
                        final_tag: r.final_tag,
                        flipped: r.flipped(),
                        received_at: r.received_at,
                    };
                    lines.push_str(&serde_json::to_string(&rec).expect("serializable"));
                    lines.push('\n');
                    let e = table.entry((task.stratum, task.context_mode, task.word.clone())).or_default();
                    e.0 += 1;
                    e.1 += usize::from(rec.flipped);
                }
                let tallies = table
                    .into_iter()
                    .map(|((stratum, context, word), (annotators, flips))| FlipTally {
                        word,
                        stratum,
                        context,
                        annotators,
                        flips,
                        fraction: flips as f64 / annotators as f64,
                    })
                    .collect();
                Export {
                    lines,
                    tallies: ExportTallies::Reannotation(tallies),
                }
            }
        }
    }
}

fn index_unique<'a>(
    ids: impl Iterator<Item = &'a str>,
    what: &'static str,
) -> Result<HashMap<String, usize>, AnnotatorError> {
    let mut index = HashMap::new();
    for (i, id) in ids.enumerate() {
        if index.insert(id.to_string(), i).is_some() {
            return Err(AnnotatorError::Invalid(format!("duplicate {what} id {id:?}")));
        }
    }
    Ok(index)
}

fn replay(log: &mut File) -> Result<Vec<LogRecord>, AnnotatorError> {
    log.seek(SeekFrom::Start(0))?;
    let mut reader = BufReader::new(&*log);
    let mut records = Vec::new();
    let mut good_len: u64 = 0;
    let mut line_no = 0;
    let mut buf = String::new();
    loop {
        buf.clear();
        let n = reader.read_line(&mut buf)?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let complete = buf.ends_with('\n');
        match serde_json::from_str::<LogRecord>(buf.trim_end()) {
            Ok(r) if complete => {
                records.push(r);
                good_len += n as u64;
            }
            _ if !complete => break,
            Ok(_) => unreachable!(),
            Err(e) => {
                if buf.trim().is_empty() {
                    good_len += n as u64;
                    continue;
                }
                return Err(AnnotatorError::CorruptLog { line: line_no, message: e.to_string() });
            }
        }
    }
    drop(reader);
    if log.metadata()?.len() != good_len {
        log.set_len(good_len)?;
        log.sync_data()?;
    }
    Ok(records)
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Item order for one annotator, seeded by a stable hash of the id.
pub fn annotator_order(annotator_id: &str, n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(fnv1a(annotator_id)));
    order
}

/// Reads `word<TAB>sentence_foreign<TAB>sentence_native`; ids are `item-NNN`
/// in file order.
pub fn read_survey_items<R: BufRead>(reader: R) -> Result<Vec<SurveyItem>, AnnotatorError> {
    let mut items = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        let bad = |m: String| AnnotatorError::Invalid(format!("survey items line {}: {m}", idx + 1));
        if cols.len() != 3 {
            return Err(bad(format!("expected 3 columns, found {}", cols.len())));
        }
        let (word, foreign, native) = (cols[0].trim(), cols[1].trim(), cols[2].trim());
        if foreign.is_empty() || native.is_empty() {
            return Err(bad("empty sentence".into()));
        }
        if !foreign.to_lowercase().contains(&word.to_lowercase()) {
            return Err(bad(format!("{word:?} does not occur in the foreign-word sentence")));
        }
        items.push(SurveyItem {
            item_id: format!("item-{:03}", items.len() + 1),
            word: word.to_lowercase(),
            sentence_foreign: foreign.to_string(),
            sentence_native: native.to_string(),
        });
    }
    Ok(items)
}

/// Reads line-delimited records of any deserializable type.
pub fn read_jsonl<T: for<'de> Deserialize<'de>, R: BufRead>(reader: R) -> Result<Vec<T>, AnnotatorError> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| AnnotatorError::Invalid(format!("line {}: {e}", idx + 1)))?);
    }
    Ok(out)
}

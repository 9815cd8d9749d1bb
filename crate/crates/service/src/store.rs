//! File-backed study store. Each study lives in its own directory:
//!
//! - `study.json`: snapshot (catalog, design, plan, questionnaires, status)
//! - `assignments.log`: `labeler_id \t questionnaire_index \t timestamp`
//! - `responses.log`: the tab-separated response log
//! - `scores.csv` and `manifest.json` once aggregated
//!
//! State is rebuilt on start-up by replaying both logs through the same
//! checks that guard live requests.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, SecondsFormat, Utc};
use choicescore_core::catalog::{AttributeCatalog, ProfileId};
use choicescore_core::choice::{scores_from_study, validate_response, ChoiceResponse, ScoreTable};
use choicescore_core::design::{best_of_restarts, Design, DesignDoc, ExchangeParams};
use choicescore_core::io::{self, LogRecord, QuestionnaireDoc};
use choicescore_core::prior::LabelPrior;
use choicescore_core::questionnaire::{generate_questionnaires, plan_study, Questionnaire, StudyPlan};
use parking_lot::RwLock;
use serde::{Deserialize, Serialize};

use crate::error::{Result, ServiceError};

pub const DEFAULT_MINIMUM_QUESTIONNAIRES: usize = 20;
pub const DEFAULT_RESTARTS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyStatus {
    Draft,
    Collecting,
    Aggregated,
}

fn default_prior() -> LabelPrior {
    LabelPrior::standard_uniform()
}

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CreateStudy {
    #[serde(default)]
    pub id: Option<String>,
    /// Defaults to the built-in stand-in catalog.
    #[serde(default)]
    pub catalog: Option<AttributeCatalog>,
    pub n: usize,
    #[serde(default = "default_prior")]
    pub prior: LabelPrior,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    /// Lets one labeler work through several questionnaires in turn.
    #[serde(default)]
    pub allow_multiple: bool,
}

impl CreateStudy {
    pub fn new(n: usize, seed: u64) -> Self {
        Self {
            id: None,
            catalog: None,
            n,
            prior: default_prior(),
            seed,
            restarts: DEFAULT_RESTARTS,
            allow_multiple: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub study_id: String,
    pub q_used: usize,
    pub questionnaire_indices: Vec<usize>,
    /// Started but unfinished questionnaires, left out of the scores.
    pub partial_questionnaires: Vec<usize>,
    pub set_size: usize,
    pub prior: LabelPrior,
    pub labeler_ids: Vec<String>,
    pub catalog_fingerprint: String,
    pub aggregated_at: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Snapshot {
    id: String,
    status: StudyStatus,
    created_at: String,
    seed: u64,
    restarts: usize,
    allow_multiple: bool,
    prior: LabelPrior,
    plan: StudyPlan,
    design: DesignDoc,
    questionnaires: QuestionnaireDoc,
    #[serde(default)]
    manifest: Option<Manifest>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: String,
    pub study_id: String,
    pub labeler_id: String,
    pub questionnaire_index: usize,
    /// Next unanswered set.
    pub cursor: usize,
    pub set_count: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudySummary {
    pub id: String,
    pub status: StudyStatus,
    pub n: usize,
    pub p: usize,
    pub set_size: usize,
    pub primes: [u64; 3],
    pub prior: LabelPrior,
    pub seed: u64,
    pub questionnaires: usize,
    pub assigned: usize,
    pub completed: usize,
    pub responses: usize,
    pub catalog_fingerprint: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeLevel {
    pub attribute: String,
    pub level: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileView {
    pub id: ProfileId,
    pub levels: Vec<AttributeLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextSet {
    pub session_id: String,
    pub questionnaire_index: usize,
    pub set_count: usize,
    pub done: bool,
    pub set_index: Option<usize>,
    pub profiles: Vec<ProfileView>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Submission {
    pub set_index: usize,
    pub most_id: ProfileId,
    pub least_id: ProfileId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ack {
    pub accepted: bool,
    pub cursor: usize,
    pub completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rejection {
    pub line: usize,
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ImportReport {
    pub accepted: usize,
    pub rejected: Vec<Rejection>,
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn valid_study_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

pub fn session_id(study_id: &str, questionnaire_index: usize) -> String {
    format!("{study_id}.q{questionnaire_index}")
}

pub fn parse_session_id(sid: &str) -> Result<(&str, usize)> {
    sid.rsplit_once(".q")
        .and_then(|(study, q)| q.parse().ok().map(|q| (study, q)))
        .ok_or_else(|| ServiceError::NotFound(format!("no session `{sid}`")))
}

/// Appends one newline-terminated line and syncs it to disk.
fn append_line(path: &Path, line: &str) -> Result<()> {
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(format!("{line}\n").as_bytes())?;
    f.sync_data()?;
    Ok(())
}

/// Complete lines of a log; a torn final line (no newline) is dropped and
/// truncated away.
fn read_log(path: &Path) -> Result<Vec<String>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let text = fs::read_to_string(path)?;
    let complete = match text.rfind('\n') {
        Some(i) => &text[..=i],
        None => "",
    };
    if complete.len() != text.len() {
        OpenOptions::new().write(true).open(path)?.set_len(complete.len() as u64)?;
    }
    Ok(complete.lines().filter(|l| !l.trim().is_empty()).map(str::to_string).collect())
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

struct StudyState {
    dir: PathBuf,
    snapshot: Snapshot,
    design: Design,
    questionnaires: Vec<Questionnaire>,
    /// Questionnaire index -> labeler.
    assignments: BTreeMap<usize, String>,
    cursors: Vec<usize>,
    responses: Vec<LogRecord>,
    scores: Option<ScoreTable>,
}

impl StudyState {
    fn id(&self) -> &str {
        &self.snapshot.id
    }

    fn set_count(&self) -> usize {
        self.snapshot.plan.p
    }

    fn session(&self, q: usize) -> Option<Session> {
        let labeler = self.assignments.get(&q)?;
        Some(Session {
            session_id: session_id(self.id(), q),
            study_id: self.id().to_string(),
            labeler_id: labeler.clone(),
            questionnaire_index: q,
            cursor: self.cursors[q],
            set_count: self.set_count(),
            completed: self.cursors[q] == self.set_count(),
        })
    }

    fn sessions_of(&self, labeler: &str) -> Vec<Session> {
        self.assignments
            .iter()
            .filter(|(_, l)| l.as_str() == labeler)
            .filter_map(|(&q, _)| self.session(q))
            .collect()
    }

    fn summary(&self) -> StudySummary {
        let plan = self.snapshot.plan;
        StudySummary {
            id: self.id().to_string(),
            status: self.snapshot.status,
            n: plan.n,
            p: plan.p,
            set_size: plan.set_size,
            primes: plan.primes,
            prior: self.snapshot.prior,
            seed: self.snapshot.seed,
            questionnaires: self.questionnaires.len(),
            assigned: self.assignments.len(),
            completed: self.completed().len(),
            responses: self.responses.len(),
            catalog_fingerprint: self.design.catalog().fingerprint(),
        }
    }

    fn completed(&self) -> Vec<usize> {
        (0..self.questionnaires.len()).filter(|&q| self.cursors[q] == self.set_count()).collect()
    }

    fn require_collecting(&self) -> Result<()> {
        if self.snapshot.status != StudyStatus::Collecting {
            return Err(ServiceError::InvalidState(format!(
                "study `{}` is {:?}, not collecting",
                self.id(),
                self.snapshot.status
            )));
        }
        Ok(())
    }

    /// Picks the questionnaire for a labeler, or returns their current one.
    fn choose_assignment(&self, labeler: &str) -> Result<std::result::Result<Session, usize>> {
        let existing = self.sessions_of(labeler);
        if let Some(active) = existing.iter().find(|s| !s.completed) {
            return Ok(Ok(active.clone()));
        }
        if let Some(last) = existing.last() {
            if !self.snapshot.allow_multiple {
                return Ok(Ok(last.clone()));
            }
        }
        match (0..self.questionnaires.len()).find(|q| !self.assignments.contains_key(q)) {
            Some(q) => Ok(Err(q)),
            None => Err(ServiceError::Capacity(format!(
                "all {} questionnaires of study `{}` are assigned",
                self.questionnaires.len(),
                self.id()
            ))),
        }
    }

    fn check_binding(&self, labeler: &str, q: usize) -> Result<()> {
        if q >= self.questionnaires.len() {
            return Err(ServiceError::InvalidResponse(format!("questionnaire {q} does not exist")));
        }
        if let Some(owner) = self.assignments.get(&q) {
            if owner != labeler {
                return Err(ServiceError::Conflict(format!("questionnaire {q} is assigned to `{owner}`")));
            }
            return Ok(());
        }
        if !self.snapshot.allow_multiple {
            if let Some(s) = self.sessions_of(labeler).first() {
                return Err(ServiceError::Conflict(format!(
                    "labeler `{labeler}` already holds questionnaire {}",
                    s.questionnaire_index
                )));
            }
        } else if self.sessions_of(labeler).iter().any(|s| !s.completed) {
            return Err(ServiceError::Conflict(format!("labeler `{labeler}` has an unfinished questionnaire")));
        }
        Ok(())
    }

    fn check_response(&self, labeler: &str, r: &ChoiceResponse) -> Result<()> {
        let q = r.questionnaire_index;
        match self.assignments.get(&q) {
            Some(owner) if owner == labeler => {}
            Some(owner) => return Err(ServiceError::Conflict(format!("questionnaire {q} belongs to `{owner}`"))),
            None => return Err(ServiceError::InvalidState(format!("questionnaire {q} is not assigned"))),
        }
        let cursor = self.cursors[q];
        if r.set_index < cursor {
            return Err(ServiceError::Conflict(format!("set {} of questionnaire {q} was already answered", r.set_index)));
        }
        if r.set_index >= self.set_count() {
            return Err(ServiceError::InvalidResponse(format!("set {} does not exist", r.set_index)));
        }
        if r.set_index > cursor {
            return Err(ServiceError::Sequence(format!("expected set {cursor}, got {}", r.set_index)));
        }
        let members = &self.questionnaires[q].sets[r.set_index].member_ids;
        validate_response(members, r.most_id, r.least_id).map_err(|e| ServiceError::InvalidResponse(e.to_string()))
    }

    fn apply_assignment(&mut self, labeler: &str, q: usize) {
        self.assignments.insert(q, labeler.to_string());
    }

    fn apply_response(&mut self, record: LogRecord) {
        self.cursors[record.response.questionnaire_index] += 1;
        self.responses.push(record);
    }

    fn assign(&mut self, labeler: &str) -> Result<Session> {
        self.require_collecting()?;
        match self.choose_assignment(labeler)? {
            Ok(existing) => Ok(existing),
            Err(q) => self.bind(labeler, q, now()),
        }
    }

    fn bind(&mut self, labeler: &str, q: usize, timestamp: String) -> Result<Session> {
        self.check_binding(labeler, q)?;
        if !self.assignments.contains_key(&q) {
            append_line(&self.dir.join("assignments.log"), &format!("{labeler}\t{q}\t{timestamp}"))?;
            self.apply_assignment(labeler, q);
        }
        Ok(self.session(q).expect("just bound"))
    }

    fn submit(&mut self, record: LogRecord) -> Result<Ack> {
        self.require_collecting()?;
        self.check_response(&record.labeler_id, &record.response)?;
        append_line(&self.dir.join("responses.log"), &record.to_line())?;
        let q = record.response.questionnaire_index;
        self.apply_response(record);
        Ok(Ack { accepted: true, cursor: self.cursors[q], completed: self.cursors[q] == self.set_count() })
    }

    fn aggregation_input(&self, indices: &[usize]) -> (Vec<ChoiceResponse>, Vec<Questionnaire>) {
        let wanted: BTreeSet<usize> = indices.iter().copied().collect();
        let responses = self
            .responses
            .iter()
            .filter(|r| wanted.contains(&r.response.questionnaire_index))
            .map(|r| r.response)
            .collect();
        let qs = indices.iter().map(|&q| self.questionnaires[q].clone()).collect();
        (responses, qs)
    }

    fn compute_scores(&self, indices: &[usize]) -> Result<ScoreTable> {
        let (responses, qs) = self.aggregation_input(indices);
        Ok(scores_from_study(&responses, &qs, &self.snapshot.prior, self.snapshot.plan.set_size)?)
    }

    fn aggregate(&mut self, minimum: usize) -> Result<Manifest> {
        if self.snapshot.status == StudyStatus::Draft {
            return Err(ServiceError::InvalidState(format!("study `{}` was never opened", self.id())));
        }
        let completed = self.completed();
        if completed.is_empty() || completed.len() < minimum {
            return Err(ServiceError::NotReady(format!(
                "{} completed questionnaires, {} required",
                completed.len(),
                minimum.max(1)
            )));
        }
        let scores = self.compute_scores(&completed)?;
        let partial = (0..self.questionnaires.len())
            .filter(|&q| self.cursors[q] > 0 && self.cursors[q] < self.set_count())
            .collect();
        let labeler_ids: BTreeSet<String> = completed.iter().map(|q| self.assignments[q].clone()).collect();
        let manifest = Manifest {
            study_id: self.id().to_string(),
            q_used: completed.len(),
            questionnaire_indices: completed,
            partial_questionnaires: partial,
            set_size: self.snapshot.plan.set_size,
            prior: self.snapshot.prior,
            labeler_ids: labeler_ids.into_iter().collect(),
            catalog_fingerprint: self.design.catalog().fingerprint(),
            aggregated_at: now(),
        };
        io::write_scores(&self.dir.join("scores.csv"), &scores)?;
        write_atomic(&self.dir.join("manifest.json"), &serde_json::to_vec_pretty(&manifest).map_err(io_json)?)?;
        let mut snapshot = self.snapshot.clone();
        snapshot.status = StudyStatus::Aggregated;
        snapshot.manifest = Some(manifest.clone());
        persist_snapshot(&self.dir, &snapshot)?;
        self.snapshot = snapshot;
        self.scores = Some(scores);
        Ok(manifest)
    }

    fn next_set(&self, q: usize) -> Result<NextSet> {
        let session = self.session(q).ok_or_else(|| ServiceError::NotFound(format!("questionnaire {q} is not assigned")))?;
        let mut out = NextSet {
            session_id: session.session_id,
            questionnaire_index: q,
            set_count: session.set_count,
            done: session.completed,
            set_index: None,
            profiles: Vec::new(),
        };
        if !session.completed {
            let set = &self.questionnaires[q].sets[session.cursor];
            let catalog = self.design.catalog();
            out.set_index = Some(session.cursor);
            out.profiles = set
                .member_ids
                .iter()
                .map(|&id| {
                    let profile = self.design.profiles().iter().find(|p| p.id == id).expect("questionnaire ids come from the design");
                    ProfileView {
                        id,
                        levels: catalog
                            .attributes()
                            .iter()
                            .enumerate()
                            .map(|(a, attr)| AttributeLevel {
                                attribute: attr.name.clone(),
                                level: catalog.level_name(a, profile.levels[a]).to_string(),
                            })
                            .collect(),
                    }
                })
                .collect();
        }
        Ok(out)
    }
}

fn io_json(e: serde_json::Error) -> ServiceError {
    ServiceError::Io(std::io::Error::other(e))
}

fn persist_snapshot(dir: &Path, snapshot: &Snapshot) -> Result<()> {
    write_atomic(&dir.join("study.json"), &serde_json::to_vec_pretty(snapshot).map_err(io_json)?)
}

fn load_state(dir: &Path) -> Result<StudyState> {
    let snapshot: Snapshot = io::read_json(&dir.join("study.json"))?;
    let design = Design::from_doc(snapshot.design.clone())?;
    let questionnaires = snapshot.questionnaires.to_questionnaires()?;
    let ids = design.ids();
    for q in &questionnaires {
        q.check_partition(&ids)?;
    }
    let mut state = StudyState {
        dir: dir.to_path_buf(),
        cursors: vec![0; questionnaires.len()],
        snapshot,
        design,
        questionnaires,
        assignments: BTreeMap::new(),
        responses: Vec::new(),
        scores: None,
    };
    let corrupt = |file: &str, line: usize, e: ServiceError| {
        ServiceError::Io(std::io::Error::other(format!("{}/{file} line {line}: {e}", dir.display())))
    };
    for (i, line) in read_log(&dir.join("assignments.log"))?.iter().enumerate() {
        let fields: Vec<&str> = line.split('\t').collect();
        let q = fields
            .get(1)
            .and_then(|v| v.parse::<usize>().ok())
            .filter(|_| fields.len() == 3)
            .ok_or_else(|| corrupt("assignments.log", i + 1, ServiceError::BadRequest("malformed line".into())))?;
        state.check_binding(fields[0], q).map_err(|e| corrupt("assignments.log", i + 1, e))?;
        state.apply_assignment(fields[0], q);
    }
    for (i, line) in read_log(&dir.join("responses.log"))?.iter().enumerate() {
        let record = LogRecord::parse_line(line).map_err(|e| corrupt("responses.log", i + 1, e.into()))?;
        state
            .check_response(&record.labeler_id, &record.response)
            .map_err(|e| corrupt("responses.log", i + 1, e))?;
        state.apply_response(record);
    }
    if let Some(manifest) = &state.snapshot.manifest {
        state.scores = Some(state.compute_scores(&manifest.questionnaire_indices)?);
    }
    Ok(state)
}

/// All studies under one data directory.
pub struct StudyStore {
    root: PathBuf,
    studies: RwLock<HashMap<String, Arc<RwLock<StudyState>>>>,
}

impl StudyStore {
    /// Opens (creating if needed) `root` and replays every study in it.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        fs::create_dir_all(root.join("studies"))?;
        let mut studies = HashMap::new();
        for entry in fs::read_dir(root.join("studies"))? {
            let entry = entry?;
            if entry.path().join("study.json").exists() {
                let state = load_state(&entry.path())?;
                studies.insert(state.id().to_string(), Arc::new(RwLock::new(state)));
            }
        }
        Ok(Self { root, studies: RwLock::new(studies) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn study(&self, id: &str) -> Result<Arc<RwLock<StudyState>>> {
        self.studies
            .read()
            .get(id)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no study `{id}`")))
    }

    pub fn create_study(&self, req: &CreateStudy) -> Result<StudySummary> {
        let plan = plan_study(req.n)?;
        let prior = match req.prior {
            LabelPrior::Uniform { low, high } => LabelPrior::uniform(low, high)?,
            LabelPrior::Normal { mean, sd } => LabelPrior::normal(mean, sd)?,
        };
        let id = req.id.clone().unwrap_or_else(|| format!("study-{}-{}", req.n, req.seed));
        if !valid_study_id(&id) {
            return Err(ServiceError::BadRequest(format!("study id `{id}` must be 1-64 of [A-Za-z0-9_-]")));
        }
        if self.studies.read().contains_key(&id) {
            return Err(ServiceError::Conflict(format!("study `{id}` already exists")));
        }
        let catalog = req.catalog.clone().unwrap_or_else(AttributeCatalog::stand_in);
        let design = best_of_restarts(&catalog, &ExchangeParams::new(req.n), req.restarts.max(1), req.seed)?;
        let questionnaires = generate_questionnaires(&design.ids(), &plan, req.seed)?;
        let snapshot = Snapshot {
            id: id.clone(),
            status: StudyStatus::Draft,
            created_at: now(),
            seed: req.seed,
            restarts: req.restarts.max(1),
            allow_multiple: req.allow_multiple,
            prior,
            plan,
            design: design.to_doc(),
            questionnaires: QuestionnaireDoc::new(id.clone(), Some(plan), &questionnaires),
            manifest: None,
        };
        let mut studies = self.studies.write();
        if studies.contains_key(&id) {
            return Err(ServiceError::Conflict(format!("study `{id}` already exists")));
        }
        let dir = self.root.join("studies").join(&id);
        fs::create_dir_all(&dir)?;
        persist_snapshot(&dir, &snapshot)?;
        let state = StudyState {
            dir,
            cursors: vec![0; questionnaires.len()],
            snapshot,
            design,
            questionnaires,
            assignments: BTreeMap::new(),
            responses: Vec::new(),
            scores: None,
        };
        let summary = state.summary();
        studies.insert(id, Arc::new(RwLock::new(state)));
        Ok(summary)
    }

    pub fn list(&self) -> Vec<StudySummary> {
        let mut out: Vec<StudySummary> = self.studies.read().values().map(|s| s.read().summary()).collect();
        out.sort_by(|a, b| a.id.cmp(&b.id));
        out
    }

    pub fn summary(&self, id: &str) -> Result<StudySummary> {
        Ok(self.study(id)?.read().summary())
    }

    pub fn open_study(&self, id: &str) -> Result<StudySummary> {
        let study = self.study(id)?;
        let mut state = study.write();
        if state.snapshot.status != StudyStatus::Draft {
            return Err(ServiceError::InvalidState(format!(
                "study `{id}` is {:?}; only draft studies can be opened",
                state.snapshot.status
            )));
        }
        let mut snapshot = state.snapshot.clone();
        snapshot.status = StudyStatus::Collecting;
        persist_snapshot(&state.dir, &snapshot)?;
        state.snapshot = snapshot;
        Ok(state.summary())
    }

    pub fn assign(&self, id: &str, labeler_id: &str) -> Result<Session> {
        if labeler_id.is_empty() || labeler_id.contains(['\t', '\n', '\r']) {
            return Err(ServiceError::BadRequest("labeler id must be non-empty without tabs or newlines".into()));
        }
        self.study(id)?.write().assign(labeler_id)
    }

    pub fn session(&self, sid: &str) -> Result<Session> {
        let (study, q) = parse_session_id(sid)?;
        self.study(study)?
            .read()
            .session(q)
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{sid}`")))
    }

    pub fn next_set(&self, sid: &str) -> Result<NextSet> {
        let (study, q) = parse_session_id(sid)?;
        self.study(study)?.read().next_set(q)
    }

    pub fn submit(&self, sid: &str, submission: Submission) -> Result<Ack> {
        let (study, q) = parse_session_id(sid)?;
        let study = self.study(study)?;
        let mut state = study.write();
        let labeler_id = state
            .assignments
            .get(&q)
            .cloned()
            .ok_or_else(|| ServiceError::NotFound(format!("no session `{sid}`")))?;
        state.submit(LogRecord {
            labeler_id,
            response: ChoiceResponse {
                questionnaire_index: q,
                set_index: submission.set_index,
                most_id: submission.most_id,
                least_id: submission.least_id,
            },
            timestamp: now(),
        })
    }

    /// Replays externally collected responses through the live checks. Each
    /// record's labeler is bound to the record's questionnaire on first sight.
    pub fn import_responses(&self, id: &str, records: &[LogRecord]) -> Result<ImportReport> {
        let study = self.study(id)?;
        let mut state = study.write();
        state.require_collecting()?;
        let mut report = ImportReport::default();
        for (i, record) in records.iter().enumerate() {
            let outcome = DateTime::parse_from_rfc3339(&record.timestamp)
                .map_err(|e| ServiceError::BadRequest(format!("timestamp `{}`: {e}", record.timestamp)))
                .and_then(|_| {
                    state.bind(&record.labeler_id, record.response.questionnaire_index, record.timestamp.clone())
                })
                .and_then(|_| state.submit(record.clone()));
            match outcome {
                Ok(_) => report.accepted += 1,
                Err(e) => report.rejected.push(Rejection { line: i + 1, code: e.code().to_string(), message: e.to_string() }),
            }
        }
        Ok(report)
    }

    pub fn aggregate(&self, id: &str, minimum_questionnaires: Option<usize>) -> Result<Manifest> {
        let study = self.study(id)?;
        let mut state = study.write();
        let minimum = minimum_questionnaires.unwrap_or(DEFAULT_MINIMUM_QUESTIONNAIRES.min(state.questionnaires.len()));
        state.aggregate(minimum)
    }

    pub fn scores(&self, id: &str) -> Result<ScoreTable> {
        self.study(id)?
            .read()
            .scores
            .clone()
            .ok_or_else(|| ServiceError::NotReady(format!("study `{id}` has not been aggregated")))
    }

    pub fn manifest(&self, id: &str) -> Result<Option<Manifest>> {
        Ok(self.study(id)?.read().snapshot.manifest.clone())
    }

    pub fn responses(&self, id: &str) -> Result<Vec<LogRecord>> {
        Ok(self.study(id)?.read().responses.clone())
    }

    pub fn sessions(&self, id: &str) -> Result<Vec<Session>> {
        let study = self.study(id)?;
        let state = study.read();
        Ok(state.assignments.keys().filter_map(|&q| state.session(q)).collect())
    }

    pub fn questionnaires(&self, id: &str) -> Result<Vec<Questionnaire>> {
        Ok(self.study(id)?.read().questionnaires.clone())
    }

    pub fn design(&self, id: &str) -> Result<Design> {
        Ok(self.study(id)?.read().design.clone())
    }

    pub fn prior(&self, id: &str) -> Result<LabelPrior> {
        Ok(self.study(id)?.read().snapshot.prior)
    }

    /// Writes design (CSV plus sidecar), questionnaires, the response log and,
    /// when aggregated, scores and manifest into `out`.
    pub fn export(&self, id: &str, out: &Path) -> Result<Vec<PathBuf>> {
        let study = self.study(id)?;
        let state = study.read();
        fs::create_dir_all(out)?;
        let mut written = Vec::new();
        let design_path = out.join("design.csv");
        io::write_design(&design_path, &state.design)?;
        written.push(design_path.clone());
        written.push(io::sidecar_path(&design_path));
        let q_path = out.join("questionnaires.json");
        io::write_json(&q_path, &state.snapshot.questionnaires)?;
        written.push(q_path);
        let log_path = out.join("responses.tsv");
        io::write_response_log(&log_path, &state.responses)?;
        written.push(log_path);
        if let (Some(scores), Some(manifest)) = (&state.scores, &state.snapshot.manifest) {
            let s = out.join("scores.csv");
            io::write_scores(&s, scores)?;
            written.push(s);
            let m = out.join("manifest.json");
            io::write_json(&m, manifest)?;
            written.push(m);
        }
        Ok(written)
    }
}

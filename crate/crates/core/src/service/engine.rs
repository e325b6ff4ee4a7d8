//! The engine: in-memory state folded from the command log, and the write
//! commands that extend it.
//!
//! Every write follows the same path: build the command, dry-run it against
//! the current state, append it to the log, then commit the prepared
//! change. A failed append leaves the state untouched; a committed change is
//! always already in the log.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicI64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::log::{parse_log, Command, CommandEvent, EventLog, FileLog};
use super::ServiceError;
use crate::escalation::{
    self, apply_event, Action, EscalationEvent, EscalationState, Phase, Pledge, SosRequest,
    Transition,
};
use crate::estimator::{compute_assessment, Assessment, AssessmentOverrides};
use crate::ingest::{
    load_historical_catalog, load_reference_dir, ReferenceDataset, CONFIG_FILE, PROVINCES_FILE,
    REGENCIES_FILE,
};
use crate::model::{HistoricalQuake, Warning};
use crate::seed;
use crate::warehouse::{
    dimension_records, extract_deferred, facts_from_historical, Hypercube, LoadStats, OlapQuery,
    SourceRecord, SourceTable, Warehouse,
};

pub const LOG_FILE: &str = "events.jsonl";
pub const CATALOG_FILE: &str = "historical_quakes.csv";
pub const OUTBOX_DIR: &str = "outbox";
pub const REGIONS_SOURCE: &str = "regions";
pub const CATALOG_SOURCE: &str = "catalog";

pub type Clock = Arc<dyn Fn() -> DateTime<Utc> + Send + Sync>;

pub fn system_clock() -> Clock {
    Arc::new(Utc::now)
}

/// A clock that starts at `start` and moves forward by `step` on every read.
pub fn stepping_clock(start: DateTime<Utc>, step: Duration) -> Clock {
    let ticks = AtomicI64::new(0);
    Arc::new(move || start + step * ticks.fetch_add(1, Ordering::SeqCst) as i32)
}

/// Everything the log determines.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EngineState {
    pub warnings: BTreeMap<String, Warning>,
    pub assessments: BTreeMap<String, Assessment>,
    pub escalations: BTreeMap<String, EscalationState>,
    pub warehouse: Warehouse,
}

/// A change that has been checked against the state and only needs storing.
enum Change {
    Warning(Warning),
    Assessed(Box<Assessment>, EscalationState),
    Escalation(EscalationState),
    Warehouse(Box<Warehouse>),
}

impl EngineState {
    /// SHA-256 over the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("engine state serialises");
        hex::encode(Sha256::digest(bytes))
    }

    fn escalation(&self, id: &str) -> Result<&EscalationState, String> {
        self.escalations
            .get(id)
            .ok_or_else(|| format!("no escalation for warning {id}"))
    }

    fn prepare(&self, cmd: &Command) -> Result<Change, String> {
        match cmd {
            Command::WarningIngested(w) => {
                if self.warnings.contains_key(w.id()) {
                    return Err(format!("warning {} already ingested", w.id()));
                }
                Ok(Change::Warning(w.clone()))
            }
            Command::Assessed { assessment, event } => {
                let state = self.escalation(&assessment.warning_id)?;
                let next = apply_event(state, event).map_err(|e| e.to_string())?;
                Ok(Change::Assessed(assessment.clone(), next))
            }
            Command::Sos1(c) | Command::Pledge(c) | Command::Sos2(c) | Command::Resolved(c) => {
                if Command::escalation(&c.warning_id, c.event.clone()).kind() != cmd.kind() {
                    return Err(format!("{} event logged as {}", c.event.name(), cmd.kind()));
                }
                let state = self.escalation(&c.warning_id)?;
                apply_event(state, &c.event)
                    .map(Change::Escalation)
                    .map_err(|e| e.to_string())
            }
            Command::EtlBatch(batch) => {
                let mut wh = self.warehouse.clone();
                wh.load_facts(batch).map_err(|e| e.to_string())?;
                Ok(Change::Warehouse(Box::new(wh)))
            }
        }
    }

    fn commit(&mut self, change: Change) {
        match change {
            Change::Warning(w) => {
                let id = w.id().to_owned();
                self.escalations
                    .insert(id.clone(), EscalationState::new(id.clone()));
                self.warnings.insert(id, w);
            }
            Change::Assessed(a, s) => {
                self.assessments.insert(a.warning_id.clone(), *a);
                self.escalations.insert(s.warning_id.clone(), s);
            }
            Change::Escalation(s) => {
                self.escalations.insert(s.warning_id.clone(), s);
            }
            Change::Warehouse(wh) => self.warehouse = *wh,
        }
    }

    /// Applies one logged command, all or nothing.
    pub fn apply(&mut self, cmd: &Command) -> Result<(), String> {
        let change = self.prepare(cmd)?;
        self.commit(change);
        Ok(())
    }
}

/// Folds a whole log. Returns the state and the last sequence number.
pub fn replay_log(text: &str) -> Result<(EngineState, u64), ServiceError> {
    let mut state = EngineState::default();
    let mut seq = 0;
    for ev in parse_log(text)? {
        state
            .apply(&ev.command)
            .map_err(|reason| ServiceError::CorruptLog {
                seq: ev.seq,
                reason,
            })?;
        seq = ev.seq;
    }
    Ok((state, seq))
}

/// One row of the warning list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarningSummary {
    pub id: String,
    pub issued_at: DateTime<Utc>,
    pub source: String,
    pub magnitude: f64,
    pub magnitude_band: Option<String>,
    pub epicenter_desc: String,
    pub phase: Phase,
    pub shortage: u64,
    pub overdue: bool,
    pub pending_action: Option<Action>,
}

/// A pledge source as shown to the operator: distance, reserve, and what
/// this escalation has already taken from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceView {
    pub code: String,
    pub name: String,
    pub distance_km: f64,
    pub medics_pledgeable: u64,
    pub already_pledged: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationView {
    #[serde(flatten)]
    pub state: EscalationState,
    pub overdue: bool,
    pub sla_minutes: i64,
    pub pending_action: Option<Action>,
    pub requests: Vec<SosRequest>,
    pub nearest_sources: Vec<SourceView>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ingested {
    pub warning_id: String,
    pub phase: Phase,
    pub sos1_pending: bool,
    pub assessment: Assessment,
    pub escalation: EscalationView,
}

/// Result of an escalation command: the new view, and the SOS document the
/// command issued, if it issued one.
#[derive(Debug, Clone, PartialEq)]
pub struct EscalationOutcome {
    pub view: EscalationView,
    pub issued: Option<SosRequest>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EtlReport {
    pub regions: Option<LoadStats>,
    pub catalog: Option<LoadStats>,
    /// Catalog quakes that could not be mapped onto the reference regions.
    pub skipped_quakes: Vec<String>,
}

/// Dimension rows for the reference tables, all stamped `at`.
pub fn reference_source(reference: &ReferenceDataset, at: DateTime<Utc>) -> SourceTable {
    let mut table = SourceTable::new(REGIONS_SOURCE);
    for rec in dimension_records(reference) {
        table.push(at, rec);
    }
    table
}

/// Fact rows for the catalog, all stamped `at`. Quakes whose regencies are
/// not in the reference data are left out and returned by id.
pub fn catalog_source(
    catalog: &[HistoricalQuake],
    reference: &ReferenceDataset,
    at: DateTime<Utc>,
) -> (SourceTable, Vec<String>) {
    let mut table = SourceTable::new(CATALOG_SOURCE);
    let mut skipped = Vec::new();
    for q in catalog {
        match facts_from_historical(q, reference) {
            Ok(facts) => facts
                .into_iter()
                .for_each(|f| table.push(at, SourceRecord::Fact(f))),
            Err(_) => skipped.push(q.id().to_owned()),
        }
    }
    (table, skipped)
}

pub struct Engine {
    reference: ReferenceDataset,
    catalog: Vec<HistoricalQuake>,
    state: EngineState,
    seq: u64,
    log: Box<dyn EventLog>,
    clock: Clock,
}

impl Engine {
    pub fn new(
        reference: ReferenceDataset,
        catalog: Vec<HistoricalQuake>,
        log: Box<dyn EventLog>,
        clock: Clock,
    ) -> Self {
        Engine {
            reference,
            catalog,
            state: EngineState::default(),
            seq: 0,
            log,
            clock,
        }
    }

    /// Rebuilds state from existing log text; new commands go to `log`.
    pub fn replay(
        reference: ReferenceDataset,
        catalog: Vec<HistoricalQuake>,
        log_text: &str,
        log: Box<dyn EventLog>,
        clock: Clock,
    ) -> Result<Self, ServiceError> {
        let (state, seq) = replay_log(log_text)?;
        Ok(Engine {
            state,
            seq,
            ..Engine::new(reference, catalog, log, clock)
        })
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    pub fn state(&self) -> &EngineState {
        &self.state
    }

    pub fn state_hash(&self) -> String {
        self.state.hash()
    }

    pub fn reference(&self) -> &ReferenceDataset {
        &self.reference
    }

    pub fn catalog(&self) -> &[HistoricalQuake] {
        &self.catalog
    }

    /// Swaps in new reference data and catalog. Assessments already made
    /// keep the inputs they were computed from.
    pub fn set_inputs(&mut self, reference: ReferenceDataset, catalog: Vec<HistoricalQuake>) {
        self.reference = reference;
        self.catalog = catalog;
    }

    pub fn warehouse(&self) -> &Warehouse {
        &self.state.warehouse
    }

    pub fn now(&self) -> DateTime<Utc> {
        (self.clock)()
    }

    fn record(&mut self, command: Command) -> Result<u64, ServiceError> {
        let change = self.state.prepare(&command).map_err(|reason| {
            ServiceError::BadRequest(format!("rejected {}: {reason}", command.kind()))
        })?;
        let event = CommandEvent {
            seq: self.seq + 1,
            recorded_at: self.now(),
            command,
        };
        self.log
            .append(&event.to_line())
            .map_err(|e| ServiceError::LogWrite(e.to_string()))?;
        self.seq = event.seq;
        self.state.commit(change);
        Ok(self.seq)
    }

    fn warning_or_404(&self, id: &str) -> Result<&Warning, ServiceError> {
        self.state
            .warnings
            .get(id)
            .ok_or_else(|| ServiceError::UnknownWarning(id.to_owned()))
    }

    fn escalation_state(&self, id: &str) -> Result<&EscalationState, ServiceError> {
        self.warning_or_404(id)?;
        self.state
            .escalations
            .get(id)
            .ok_or_else(|| ServiceError::UnknownWarning(id.to_owned()))
    }

    /// Logs a new warning and assesses it. An assessment failure (say, an
    /// unknown regency) rejects the warning before anything is logged.
    pub fn ingest_warning(&mut self, warning: Warning) -> Result<Ingested, ServiceError> {
        let id = warning.id().to_owned();
        if self.state.warnings.contains_key(&id) {
            return Err(ServiceError::DuplicateWarning(id));
        }
        let at = self.now();
        let (assessment, transition) =
            escalation::assess(&warning, &self.reference, &self.catalog, at)?;
        self.record(Command::WarningIngested(warning))?;
        self.record(Command::Assessed {
            assessment: Box::new(assessment.clone()),
            event: transition.event,
        })?;
        let escalation = self.escalation(&id)?;
        Ok(Ingested {
            warning_id: id,
            phase: escalation.state.phase,
            sos1_pending: escalation.pending_action == Some(Action::Sos1),
            assessment,
            escalation,
        })
    }

    /// Newest first, then by id.
    pub fn warnings(&self) -> Vec<WarningSummary> {
        let now = self.now();
        let sla = self.reference.config.sos1_sla_minutes;
        let mut out: Vec<WarningSummary> = self
            .state
            .warnings
            .values()
            .map(|w| {
                let esc = self.state.escalations.get(w.id());
                WarningSummary {
                    id: w.id().to_owned(),
                    issued_at: w.issued_at,
                    source: w.source.clone(),
                    magnitude: w.event.magnitude,
                    magnitude_band: self
                        .state
                        .assessments
                        .get(w.id())
                        .map(|a| a.magnitude_band.clone()),
                    epicenter_desc: w.event.epicenter_desc.clone(),
                    phase: esc.map_or(Phase::Received, |e| e.phase),
                    shortage: esc.map_or(0, |e| e.shortage),
                    overdue: esc.is_some_and(|e| e.is_overdue(now, sla)),
                    pending_action: esc.and_then(EscalationState::pending_action),
                }
            })
            .collect();
        out.sort_by(|a, b| b.issued_at.cmp(&a.issued_at).then_with(|| a.id.cmp(&b.id)));
        out
    }

    pub fn warning(&self, id: &str) -> Result<&Warning, ServiceError> {
        self.warning_or_404(id)
    }

    pub fn assessment(&self, id: &str) -> Result<&Assessment, ServiceError> {
        self.warning_or_404(id)?;
        self.state
            .assessments
            .get(id)
            .ok_or_else(|| ServiceError::UnknownWarning(id.to_owned()))
    }

    /// Recomputes an assessment with overrides. Touches neither the state
    /// nor the log.
    pub fn whatif(
        &self,
        id: &str,
        overrides: &AssessmentOverrides,
    ) -> Result<Assessment, ServiceError> {
        let warning = self.warning_or_404(id)?;
        Ok(compute_assessment(
            &warning.event,
            &self.reference,
            &self.catalog,
            overrides,
        )?)
    }

    pub fn escalation(&self, id: &str) -> Result<EscalationView, ServiceError> {
        let state = self.escalation_state(id)?.clone();
        let sla = self.reference.config.sos1_sla_minutes;
        let nearest_sources =
            escalation::nearest_sources(&state.affected_regencies, &self.reference)
                .into_iter()
                .map(|c| SourceView {
                    already_pledged: state.pledged_by(&c.code),
                    code: c.code,
                    name: c.name,
                    distance_km: c.distance_km,
                    medics_pledgeable: c.medics_pledgeable,
                })
                .collect();
        Ok(EscalationView {
            overdue: state.is_overdue(self.now(), sla),
            sla_minutes: sla,
            pending_action: state.pending_action(),
            requests: state.requests(),
            nearest_sources,
            state,
        })
    }

    fn commit_transition(
        &mut self,
        id: &str,
        t: Transition,
    ) -> Result<EscalationOutcome, ServiceError> {
        let issued = match &t.event {
            EscalationEvent::Sos1Issued { .. } | EscalationEvent::Sos2Issued { .. } => {
                t.state.requests().pop()
            }
            _ => None,
        };
        self.record(Command::escalation(id, t.event))?;
        Ok(EscalationOutcome {
            view: self.escalation(id)?,
            issued,
        })
    }

    pub fn issue_sos1(
        &mut self,
        id: &str,
        approver: &str,
    ) -> Result<EscalationOutcome, ServiceError> {
        let at = self.now();
        let t = escalation::issue_sos1(self.escalation_state(id)?, approver, at, &self.reference)?;
        self.commit_transition(id, t)
    }

    pub fn record_pledge(
        &mut self,
        id: &str,
        source_region_code: &str,
        medics_pledged: u64,
    ) -> Result<EscalationOutcome, ServiceError> {
        let pledge = Pledge {
            source_region_code: source_region_code.trim().to_owned(),
            medics_pledged,
            recorded_at: self.now(),
        };
        let t = escalation::record_pledge(self.escalation_state(id)?, pledge, &self.reference)?;
        self.commit_transition(id, t)
    }

    pub fn evaluate_sos2(
        &mut self,
        id: &str,
        approver: &str,
    ) -> Result<EscalationOutcome, ServiceError> {
        let at = self.now();
        let t = escalation::evaluate_sos2(self.escalation_state(id)?, approver, at)?;
        self.commit_transition(id, t)
    }

    pub fn resolve(&mut self, id: &str, approver: &str) -> Result<EscalationOutcome, ServiceError> {
        let at = self.now();
        let t = escalation::resolve(self.escalation_state(id)?, approver, at)?;
        self.commit_transition(id, t)
    }

    /// Extracts what is new in `source` since its watermark and loads it.
    /// Nothing is logged when there is nothing new.
    pub fn run_etl(&mut self, source: &SourceTable) -> Result<Option<LoadStats>, ServiceError> {
        let watermark = self.state.warehouse.watermark(&source.source_id);
        let batch = extract_deferred(source, &watermark);
        if batch.is_empty() {
            return Ok(None);
        }
        let stats = self.state.warehouse.clone().load_facts(&batch)?;
        self.record(Command::EtlBatch(batch))?;
        Ok(Some(stats))
    }

    /// Loads the engine's own reference data and catalog into the warehouse,
    /// stamped with the given modification times.
    pub fn refresh_warehouse(
        &mut self,
        regions_modified: DateTime<Utc>,
        catalog_modified: DateTime<Utc>,
    ) -> Result<EtlReport, ServiceError> {
        let regions = self.run_etl(&reference_source(&self.reference, regions_modified))?;
        let (table, skipped_quakes) =
            catalog_source(&self.catalog, &self.reference, catalog_modified);
        let catalog = self.run_etl(&table)?;
        Ok(EtlReport {
            regions,
            catalog,
            skipped_quakes,
        })
    }

    pub fn olap(&self, query: &OlapQuery) -> Result<Hypercube, ServiceError> {
        Ok(query.run(&self.state.warehouse)?)
    }
}

/// The on-disk layout of a data directory.
#[derive(Debug, Clone)]
pub struct DataDir {
    root: PathBuf,
}

impl DataDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        DataDir { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn log_path(&self) -> PathBuf {
        self.root.join(LOG_FILE)
    }

    pub fn catalog_path(&self) -> PathBuf {
        self.root.join(CATALOG_FILE)
    }

    pub fn outbox(&self) -> PathBuf {
        self.root.join(OUTBOX_DIR)
    }

    fn has_reference(&self) -> bool {
        [PROVINCES_FILE, REGENCIES_FILE, CONFIG_FILE]
            .iter()
            .all(|f| self.root.join(f).is_file())
    }

    /// The reference tables in the directory, or the bundled seed when the
    /// directory has none.
    pub fn reference(&self) -> Result<ReferenceDataset, ServiceError> {
        if self.has_reference() {
            Ok(load_reference_dir(&self.root)?)
        } else {
            Ok(seed::reference())
        }
    }

    /// The catalog in the directory, or the bundled seed. Invalid rows are
    /// skipped here; `ingest` reports them.
    pub fn catalog(&self) -> Result<Vec<HistoricalQuake>, ServiceError> {
        let path = self.catalog_path();
        if path.is_file() {
            Ok(load_historical_catalog(&path)?.quakes)
        } else {
            Ok(seed::catalog())
        }
    }

    fn modified(&self, files: &[&str]) -> DateTime<Utc> {
        files
            .iter()
            .filter_map(|f| {
                fs::metadata(self.root.join(f))
                    .and_then(|m| m.modified())
                    .ok()
            })
            .map(DateTime::<Utc>::from)
            .max()
            .unwrap_or(DateTime::<Utc>::UNIX_EPOCH)
    }

    /// Modification times of the reference tables and of the catalog, used
    /// as ETL row stamps. The bundled seed counts as the Unix epoch.
    pub fn source_times(&self) -> (DateTime<Utc>, DateTime<Utc>) {
        (
            self.modified(&[PROVINCES_FILE, REGENCIES_FILE, CONFIG_FILE]),
            self.modified(&[CATALOG_FILE]),
        )
    }

    /// Opens the engine: loads inputs, replays the log, and keeps appending
    /// to it.
    pub fn open_engine(&self, clock: Clock) -> Result<Engine, ServiceError> {
        fs::create_dir_all(&self.root).map_err(|e| ServiceError::LogWrite(e.to_string()))?;
        let path = self.log_path();
        let text = repair_log_tail(&path).map_err(|e| ServiceError::LogWrite(e.to_string()))?;
        let log = FileLog::open(&path).map_err(|e| ServiceError::LogWrite(e.to_string()))?;
        Engine::replay(
            self.reference()?,
            self.catalog()?,
            &text,
            Box::new(log),
            clock,
        )
    }

    /// Writes an SOS document into the outbox and returns its path.
    pub fn write_outbox(&self, request: &SosRequest) -> io::Result<PathBuf> {
        write_outbox(&self.outbox(), request)
    }
}

pub fn write_outbox(dir: &Path, request: &SosRequest) -> io::Result<PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(format!("{}-sos{}.json", request.warning_id, request.stage));
    let body = serde_json::to_string_pretty(request).expect("requests serialise");
    fs::write(&path, body + "\n")?;
    Ok(path)
}

/// Reads the log and makes sure it ends on a line boundary, cutting off a
/// torn final write so later appends start on a fresh line.
fn repair_log_tail(path: &Path) -> io::Result<String> {
    let text = match fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(String::new()),
        Err(e) => return Err(e),
    };
    if text.is_empty() || text.ends_with('\n') {
        return Ok(text);
    }
    let cut = text.rfind('\n').map_or(0, |i| i + 1);
    let tail = &text[cut..];
    let repaired = if serde_json::from_str::<CommandEvent>(tail).is_ok() {
        format!("{text}\n")
    } else {
        text[..cut].to_owned()
    };
    fs::write(path, &repaired)?;
    Ok(repaired)
}

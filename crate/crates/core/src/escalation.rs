//! The two-stage SOS workflow for one warning.
//!
//! State is a fold over an append-only list of [`EscalationEvent`]s. Command
//! functions check their guards against the current state and return the
//! event to record together with the state it leads to; nothing changes
//! until the caller keeps that state. SOS-1, SOS-2 and resolution each need
//! a named approver.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::estimator::{compute_assessment, Assessment, AssessmentOverrides, EstimatorError};
use crate::geo::haversine_km;
use crate::ingest::ReferenceDataset;
use crate::model::{HistoricalQuake, Warning};

/// Source code used for pledges from outside the national reserves.
pub const INTERNATIONAL: &str = "INTERNATIONAL";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Phase {
    Received,
    Assessed,
    Sos1Issued,
    Sos2Issued,
    Resolved,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EscalationError {
    #[error("NotEligible: {0}")]
    NotEligible(String),
    #[error("IllegalTransition: {event} in phase {phase:?}")]
    IllegalTransition { phase: Phase, event: String },
    #[error("InvalidPledge: {0}")]
    InvalidPledge(String),
    #[error("InvalidSource: {0}")]
    InvalidSource(String),
    #[error("MissingApprover: {0} needs a named approver")]
    MissingApprover(&'static str),
}

impl EscalationError {
    pub fn kind(&self) -> &'static str {
        match self {
            EscalationError::NotEligible(_) => "NotEligible",
            EscalationError::IllegalTransition { .. } => "IllegalTransition",
            EscalationError::InvalidPledge(_) => "InvalidPledge",
            EscalationError::InvalidSource(_) => "InvalidSource",
            EscalationError::MissingApprover(_) => "MissingApprover",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pledge {
    /// A region code, or [`INTERNATIONAL`].
    pub source_region_code: String,
    pub medics_pledged: u64,
    pub recorded_at: DateTime<Utc>,
}

impl Pledge {
    pub fn is_international(&self) -> bool {
        self.source_region_code == INTERNATIONAL
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    Sos1,
    Sos2,
    Resolve,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Approval {
    pub action: Action,
    pub approver: String,
    pub at: DateTime<Utc>,
}

/// A region that can send medics, with its distance from the affected area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceCandidate {
    pub code: String,
    pub name: String,
    pub distance_km: f64,
    pub medics_pledgeable: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EscalationEvent {
    Assessed {
        shortage: u64,
        affected_regencies: Vec<String>,
        at: DateTime<Utc>,
    },
    Sos1Issued {
        approver: String,
        amount: u64,
        sources: Vec<SourceCandidate>,
        at: DateTime<Utc>,
    },
    PledgeRecorded {
        pledge: Pledge,
    },
    Sos2Issued {
        approver: String,
        amount: u64,
        at: DateTime<Utc>,
    },
    Resolved {
        approver: String,
        at: DateTime<Utc>,
    },
}

impl EscalationEvent {
    pub fn name(&self) -> &'static str {
        match self {
            EscalationEvent::Assessed { .. } => "assessed",
            EscalationEvent::Sos1Issued { .. } => "sos1",
            EscalationEvent::PledgeRecorded { .. } => "pledge",
            EscalationEvent::Sos2Issued { .. } => "sos2",
            EscalationEvent::Resolved { .. } => "resolved",
        }
    }
}

/// An outgoing aid request document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SosRequest {
    pub warning_id: String,
    pub stage: u8,
    pub amount: u64,
    /// Nearest-first for stage 1; the international community for stage 2.
    pub sources: Vec<String>,
    pub issued_at: DateTime<Utc>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EscalationState {
    pub warning_id: String,
    pub phase: Phase,
    /// Ktk at assessment time.
    pub ktk: u64,
    /// Unmet medic need: Ktk minus accepted pledges, floored at zero.
    pub shortage: u64,
    pub affected_regencies: Vec<String>,
    pub pledges: Vec<Pledge>,
    pub approvals: Vec<Approval>,
    pub history: Vec<EscalationEvent>,
    pub assessed_at: Option<DateTime<Utc>>,
}

impl EscalationState {
    pub fn new(warning_id: impl Into<String>) -> Self {
        EscalationState {
            warning_id: warning_id.into(),
            phase: Phase::Received,
            ktk: 0,
            shortage: 0,
            affected_regencies: Vec::new(),
            pledges: Vec::new(),
            approvals: Vec::new(),
            history: Vec::new(),
            assessed_at: None,
        }
    }

    /// Folds a recorded history from the initial state.
    pub fn replay<'a>(
        warning_id: &str,
        events: impl IntoIterator<Item = &'a EscalationEvent>,
    ) -> Result<Self, EscalationError> {
        events
            .into_iter()
            .try_fold(EscalationState::new(warning_id), |s, e| apply_event(&s, e))
    }

    pub fn pledged_total(&self) -> u64 {
        self.pledges.iter().map(|p| p.medics_pledged).sum()
    }

    /// Medics already pledged by one source.
    pub fn pledged_by(&self, source: &str) -> u64 {
        self.pledges
            .iter()
            .filter(|p| p.source_region_code == source)
            .map(|p| p.medics_pledged)
            .sum()
    }

    /// An assessed shortage still waiting for SOS-1 approval beyond the SLA.
    pub fn is_overdue(&self, now: DateTime<Utc>, sla_minutes: i64) -> bool {
        match (self.phase, self.assessed_at) {
            (Phase::Assessed, Some(at)) if self.shortage > 0 => {
                now - at > Duration::minutes(sla_minutes)
            }
            _ => false,
        }
    }

    /// The decision currently waiting on a human, if any.
    pub fn pending_action(&self) -> Option<Action> {
        match self.phase {
            Phase::Received | Phase::Resolved => None,
            _ if self.shortage == 0 => Some(Action::Resolve),
            Phase::Assessed => Some(Action::Sos1),
            Phase::Sos1Issued => Some(Action::Sos2),
            Phase::Sos2Issued => None,
        }
    }

    /// Every SOS document this escalation has issued, in order.
    pub fn requests(&self) -> Vec<SosRequest> {
        self.history
            .iter()
            .filter_map(|e| match e {
                EscalationEvent::Sos1Issued {
                    amount,
                    sources,
                    at,
                    ..
                } => Some(SosRequest {
                    warning_id: self.warning_id.clone(),
                    stage: 1,
                    amount: *amount,
                    sources: sources.iter().map(|s| s.code.clone()).collect(),
                    issued_at: *at,
                }),
                EscalationEvent::Sos2Issued { amount, at, .. } => Some(SosRequest {
                    warning_id: self.warning_id.clone(),
                    stage: 2,
                    amount: *amount,
                    sources: vec![INTERNATIONAL.to_owned()],
                    issued_at: *at,
                }),
                _ => None,
            })
            .collect()
    }
}

fn illegal(state: &EscalationState, event: &EscalationEvent) -> EscalationError {
    EscalationError::IllegalTransition {
        phase: state.phase,
        event: event.name().to_owned(),
    }
}

/// Applies one recorded event. Out-of-order or inconsistent events are
/// rejected with `IllegalTransition` and the input state is untouched.
pub fn apply_event(
    state: &EscalationState,
    event: &EscalationEvent,
) -> Result<EscalationState, EscalationError> {
    let mut next = state.clone();
    let approver_ok = |a: &str| !a.trim().is_empty();
    match event {
        EscalationEvent::Assessed {
            shortage,
            affected_regencies,
            at,
        } if state.phase == Phase::Received => {
            next.phase = Phase::Assessed;
            next.ktk = *shortage;
            next.shortage = *shortage;
            next.affected_regencies = affected_regencies.clone();
            next.assessed_at = Some(*at);
        }
        EscalationEvent::Sos1Issued {
            approver,
            amount,
            at,
            ..
        } if state.phase == Phase::Assessed
            && state.shortage > 0
            && *amount == state.shortage
            && approver_ok(approver) =>
        {
            next.phase = Phase::Sos1Issued;
            next.approvals.push(Approval {
                action: Action::Sos1,
                approver: approver.clone(),
                at: *at,
            });
        }
        EscalationEvent::PledgeRecorded { pledge }
            if matches!(state.phase, Phase::Sos1Issued | Phase::Sos2Issued)
                && pledge.medics_pledged >= 1 =>
        {
            next.shortage = state.shortage.saturating_sub(pledge.medics_pledged);
            next.pledges.push(pledge.clone());
        }
        EscalationEvent::Sos2Issued {
            approver,
            amount,
            at,
        } if state.phase == Phase::Sos1Issued
            && state.shortage > 0
            && *amount == state.shortage
            && approver_ok(approver) =>
        {
            next.phase = Phase::Sos2Issued;
            next.approvals.push(Approval {
                action: Action::Sos2,
                approver: approver.clone(),
                at: *at,
            });
        }
        EscalationEvent::Resolved { approver, at }
            if matches!(
                state.phase,
                Phase::Assessed | Phase::Sos1Issued | Phase::Sos2Issued
            ) && state.shortage == 0
                && approver_ok(approver) =>
        {
            next.phase = Phase::Resolved;
            next.approvals.push(Approval {
                action: Action::Resolve,
                approver: approver.clone(),
                at: *at,
            });
        }
        _ => return Err(illegal(state, event)),
    }
    next.history.push(event.clone());
    Ok(next)
}

/// The state change a command decided on: the event to record and the
/// state after applying it.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub event: EscalationEvent,
    pub state: EscalationState,
}

fn transition(
    state: &EscalationState,
    event: EscalationEvent,
) -> Result<Transition, EscalationError> {
    let next = apply_event(state, &event)?;
    Ok(Transition { event, state: next })
}

fn require_approver(approver: &str, action: &'static str) -> Result<(), EscalationError> {
    if approver.trim().is_empty() {
        Err(EscalationError::MissingApprover(action))
    } else {
        Ok(())
    }
}

/// Runs the estimator for a warning and opens its escalation at `Assessed`.
pub fn assess(
    warning: &Warning,
    reference: &ReferenceDataset,
    catalog: &[HistoricalQuake],
    at: DateTime<Utc>,
) -> Result<(Assessment, Transition), EstimatorError> {
    let assessment = compute_assessment(
        &warning.event,
        reference,
        catalog,
        &AssessmentOverrides::default(),
    )?;
    let event = EscalationEvent::Assessed {
        shortage: assessment.medics.shortage,
        affected_regencies: assessment.affected_regencies.clone(),
        at,
    };
    let transition = transition(&EscalationState::new(warning.id()), event)
        .expect("a fresh escalation always accepts its assessment");
    Ok((assessment, transition))
}

/// Regions outside the affected area that can pledge medics, nearest first
/// from the population-weighted centroid of the affected regencies. Ties
/// go to the smaller code.
pub fn nearest_sources(affected: &[String], reference: &ReferenceDataset) -> Vec<SourceCandidate> {
    let affected_set: BTreeSet<&str> = affected.iter().map(String::as_str).collect();
    let areas: Vec<_> = affected_set
        .iter()
        .filter_map(|c| reference.region(c))
        .collect();
    if areas.is_empty() {
        return Vec::new();
    }
    let total: u64 = areas.iter().map(|r| r.population).sum();
    let weight = |p: u64| {
        if total == 0 {
            1.0 / areas.len() as f64
        } else {
            p as f64 / total as f64
        }
    };
    let lat: f64 = areas
        .iter()
        .map(|r| weight(r.population) * r.centroid_lat)
        .sum();
    let lon: f64 = areas
        .iter()
        .map(|r| weight(r.population) * r.centroid_lon)
        .sum();

    let mut out: Vec<SourceCandidate> = reference
        .regions()
        .filter(|r| r.medics_pledgeable > 0 && !affected_set.contains(r.code.as_str()))
        .map(|r| SourceCandidate {
            code: r.code.clone(),
            name: r.name.clone(),
            distance_km: haversine_km(lat, lon, r.centroid_lat, r.centroid_lon),
            medics_pledgeable: r.medics_pledgeable,
        })
        .collect();
    out.sort_by(|a, b| {
        a.distance_km
            .total_cmp(&b.distance_km)
            .then_with(|| a.code.cmp(&b.code))
    });
    out
}

/// Approves the first-stage request to the nearest regional reserves.
pub fn issue_sos1(
    state: &EscalationState,
    approver: &str,
    at: DateTime<Utc>,
    reference: &ReferenceDataset,
) -> Result<Transition, EscalationError> {
    if state.phase != Phase::Assessed {
        return Err(EscalationError::NotEligible(format!(
            "SOS-1 needs phase Assessed, escalation is {:?}",
            state.phase
        )));
    }
    if state.shortage == 0 {
        return Err(EscalationError::NotEligible("no medic shortage".into()));
    }
    require_approver(approver, "SOS-1")?;
    transition(
        state,
        EscalationEvent::Sos1Issued {
            approver: approver.trim().to_owned(),
            amount: state.shortage,
            sources: nearest_sources(&state.affected_regencies, reference),
            at,
        },
    )
}

/// Records medics committed against the open shortage. A regional source
/// may not pledge more in total than its pledgeable reserve; international
/// pledges are accepted once SOS-2 is out.
pub fn record_pledge(
    state: &EscalationState,
    pledge: Pledge,
    reference: &ReferenceDataset,
) -> Result<Transition, EscalationError> {
    if !matches!(state.phase, Phase::Sos1Issued | Phase::Sos2Issued) {
        return Err(EscalationError::NotEligible(format!(
            "pledges need an issued SOS, escalation is {:?}",
            state.phase
        )));
    }
    if pledge.medics_pledged == 0 {
        return Err(EscalationError::InvalidPledge(
            "medics_pledged must be at least 1".into(),
        ));
    }
    if pledge.is_international() {
        if state.phase != Phase::Sos2Issued {
            return Err(EscalationError::NotEligible(
                "international pledges need SOS-2".into(),
            ));
        }
    } else {
        let region = reference
            .region(&pledge.source_region_code)
            .ok_or_else(|| {
                EscalationError::InvalidSource(format!(
                    "unknown region {}",
                    pledge.source_region_code
                ))
            })?;
        let cumulative = state.pledged_by(&region.code) + pledge.medics_pledged;
        if cumulative > region.medics_pledgeable {
            return Err(EscalationError::InvalidSource(format!(
                "{} can pledge {} medics, {} requested in total",
                region.code, region.medics_pledgeable, cumulative
            )));
        }
    }
    transition(state, EscalationEvent::PledgeRecorded { pledge })
}

/// After SOS-1: asks the international community for what is still
/// missing, or closes the escalation when pledges covered everything.
pub fn evaluate_sos2(
    state: &EscalationState,
    approver: &str,
    at: DateTime<Utc>,
) -> Result<Transition, EscalationError> {
    if state.phase != Phase::Sos1Issued {
        return Err(EscalationError::NotEligible(format!(
            "SOS-2 needs phase Sos1Issued, escalation is {:?}",
            state.phase
        )));
    }
    require_approver(approver, "SOS-2")?;
    let approver = approver.trim().to_owned();
    let event = if state.shortage > 0 {
        EscalationEvent::Sos2Issued {
            approver,
            amount: state.shortage,
            at,
        }
    } else {
        EscalationEvent::Resolved { approver, at }
    };
    transition(state, event)
}

/// Closes an escalation whose shortage is fully covered.
pub fn resolve(
    state: &EscalationState,
    approver: &str,
    at: DateTime<Utc>,
) -> Result<Transition, EscalationError> {
    if !matches!(
        state.phase,
        Phase::Assessed | Phase::Sos1Issued | Phase::Sos2Issued
    ) {
        return Err(EscalationError::NotEligible(format!(
            "cannot resolve an escalation in phase {:?}",
            state.phase
        )));
    }
    if state.shortage > 0 {
        return Err(EscalationError::NotEligible(format!(
            "{} medics still missing",
            state.shortage
        )));
    }
    require_approver(approver, "resolution")?;
    transition(
        state,
        EscalationEvent::Resolved {
            approver: approver.trim().to_owned(),
            at,
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{DssConfig, ReferenceDataset};
    use crate::model::{parse_timestamp, Region, RegionKind};
    use crate::seed;
    use proptest::prelude::*;

    fn t(min: i64) -> DateTime<Utc> {
        parse_timestamp("2024-03-01T00:00:00Z").unwrap() + Duration::minutes(min)
    }

    fn assessed(shortage: u64) -> EscalationState {
        apply_event(
            &EscalationState::new("w"),
            &EscalationEvent::Assessed {
                shortage,
                affected_regencies: vec!["3402".into()],
                at: t(0),
            },
        )
        .unwrap()
    }

    fn pledge(source: &str, n: u64) -> Pledge {
        Pledge {
            source_region_code: source.into(),
            medics_pledged: n,
            recorded_at: t(5),
        }
    }

    fn region(code: &str, lat: f64, lon: f64, pop: u64, pledgeable: u64) -> Region {
        Region {
            code: code.into(),
            name: code.into(),
            kind: RegionKind::Regency,
            parent_code: "P".into(),
            population: pop,
            medics_available: pledgeable,
            medics_pledgeable: pledgeable,
            centroid_lat: lat,
            centroid_lon: lon,
        }
    }

    fn reference_with(regencies: Vec<Region>) -> ReferenceDataset {
        let province = Region {
            code: "P".into(),
            name: "P".into(),
            kind: RegionKind::Province,
            parent_code: String::new(),
            population: 0,
            medics_available: 0,
            medics_pledgeable: 0,
            centroid_lat: 0.0,
            centroid_lon: 0.0,
        };
        let config = DssConfig::from_toml(seed::CONFIG_TOML).unwrap();
        ReferenceDataset::new(vec![province], regencies, config).unwrap()
    }

    #[test]
    fn empty_history_is_received() {
        let s = EscalationState::replay("w", &[]).unwrap();
        assert_eq!(s.phase, Phase::Received);
        assert_eq!(s.pending_action(), None);
    }

    #[test]
    fn sos1_cases() {
        let reference = seed::reference();
        let s = issue_sos1(&assessed(150), "ops-1", t(10), &reference).unwrap();
        assert_eq!(s.state.phase, Phase::Sos1Issued);
        assert!(matches!(
            s.event,
            EscalationEvent::Sos1Issued { amount: 150, .. }
        ));
        assert_eq!(s.state.requests()[0].amount, 150);
        assert!(matches!(
            issue_sos1(&s.state, "ops-1", t(11), &reference),
            Err(EscalationError::NotEligible(_))
        ));
        assert!(matches!(
            issue_sos1(&assessed(0), "ops-1", t(10), &reference),
            Err(EscalationError::NotEligible(_))
        ));
        assert!(matches!(
            issue_sos1(&assessed(150), " ", t(10), &reference),
            Err(EscalationError::MissingApprover(_))
        ));
    }

    #[test]
    fn zero_shortage_resolves_without_sos() {
        let s = assessed(0);
        assert_eq!(s.pending_action(), Some(Action::Resolve));
        let r = resolve(&s, "ops-1", t(1)).unwrap();
        assert_eq!(r.state.phase, Phase::Resolved);
        assert!(r.state.requests().is_empty());
        assert!(matches!(
            resolve(&assessed(5), "ops-1", t(1)),
            Err(EscalationError::NotEligible(_))
        ));
    }

    #[test]
    fn pledge_arithmetic() {
        let reference = seed::reference();
        let s = issue_sos1(&assessed(150), "a", t(1), &reference)
            .unwrap()
            .state;
        let s = record_pledge(&s, pledge("1171", 100), &reference)
            .unwrap()
            .state;
        assert_eq!(s.shortage, 50);
        let s = record_pledge(&s, pledge("1171", 50), &reference)
            .unwrap()
            .state;
        assert_eq!(s.shortage, 0);

        let s = issue_sos1(&assessed(50), "a", t(1), &reference)
            .unwrap()
            .state;
        let s = record_pledge(&s, pledge("1171", 80), &reference)
            .unwrap()
            .state;
        assert_eq!(s.shortage, 0);
        assert!(matches!(
            record_pledge(&s, pledge("1171", 0), &reference),
            Err(EscalationError::InvalidPledge(_))
        ));
    }

    #[test]
    fn pledge_source_checks() {
        let reference = seed::reference();
        let cap = reference.region("1171").unwrap().medics_pledgeable;
        let s = issue_sos1(&assessed(10_000), "a", t(1), &reference)
            .unwrap()
            .state;
        assert!(matches!(
            record_pledge(&s, pledge("1171", cap + 1), &reference),
            Err(EscalationError::InvalidSource(_))
        ));
        let s = record_pledge(&s, pledge("1171", cap), &reference)
            .unwrap()
            .state;
        assert!(matches!(
            record_pledge(&s, pledge("1171", 1), &reference),
            Err(EscalationError::InvalidSource(_))
        ));
        assert!(matches!(
            record_pledge(&s, pledge("9999", 1), &reference),
            Err(EscalationError::InvalidSource(_))
        ));
        assert!(matches!(
            record_pledge(&s, pledge(INTERNATIONAL, 1), &reference),
            Err(EscalationError::NotEligible(_))
        ));
        assert!(matches!(
            record_pledge(&assessed(5), pledge("1171", 1), &reference),
            Err(EscalationError::NotEligible(_))
        ));
    }

    #[test]
    fn sos2_cases() {
        let reference = seed::reference();
        let open = issue_sos1(&assessed(150), "a", t(1), &reference)
            .unwrap()
            .state;

        let covered = record_pledge(&open, pledge("1171", 150), &reference)
            .unwrap()
            .state;
        let r = evaluate_sos2(&covered, "b", t(2)).unwrap();
        assert_eq!(r.state.phase, Phase::Resolved);
        assert_eq!(r.state.requests().len(), 1);

        let partial = record_pledge(&open, pledge("1171", 100), &reference)
            .unwrap()
            .state;
        let r = evaluate_sos2(&partial, "b", t(2)).unwrap();
        assert_eq!(r.state.phase, Phase::Sos2Issued);
        assert_eq!(r.state.requests()[1].amount, 50);

        let r = evaluate_sos2(&open, "b", t(2)).unwrap();
        assert_eq!(r.state.requests()[1].amount, 150);
        assert_eq!(
            r.state.requests()[1].sources,
            vec![INTERNATIONAL.to_owned()]
        );

        let s = record_pledge(&r.state, pledge(INTERNATIONAL, 200), &reference)
            .unwrap()
            .state;
        assert_eq!(s.shortage, 0);
        assert_eq!(resolve(&s, "c", t(3)).unwrap().state.phase, Phase::Resolved);
        assert!(matches!(
            evaluate_sos2(&assessed(150), "b", t(2)),
            Err(EscalationError::NotEligible(_))
        ));
    }

    #[test]
    fn replay_matches_step_by_step() {
        let events = vec![
            EscalationEvent::Assessed {
                shortage: 150,
                affected_regencies: vec![],
                at: t(0),
            },
            EscalationEvent::Sos1Issued {
                approver: "a".into(),
                amount: 150,
                sources: vec![],
                at: t(1),
            },
            EscalationEvent::PledgeRecorded {
                pledge: pledge("1171", 100),
            },
            EscalationEvent::Sos2Issued {
                approver: "b".into(),
                amount: 50,
                at: t(2),
            },
        ];
        let s = EscalationState::replay("w", &events).unwrap();
        assert_eq!(s.phase, Phase::Sos2Issued);
        assert_eq!(s.shortage, 150 - 100);
        assert_eq!(s.history, events);
        assert_eq!(s.approvals.len(), 2);
    }

    #[test]
    fn skipping_sos1_is_illegal() {
        let events = [
            EscalationEvent::Assessed {
                shortage: 150,
                affected_regencies: vec![],
                at: t(0),
            },
            EscalationEvent::Sos2Issued {
                approver: "b".into(),
                amount: 150,
                at: t(2),
            },
        ];
        assert!(matches!(
            EscalationState::replay("w", &events),
            Err(EscalationError::IllegalTransition {
                phase: Phase::Assessed,
                ..
            })
        ));
    }

    #[test]
    fn overdue_after_sla() {
        let s = assessed(10);
        assert!(!s.is_overdue(t(60), 60));
        assert!(s.is_overdue(t(61), 60));
        assert!(!assessed(0).is_overdue(t(600), 60));
    }

    #[test]
    fn nearest_sources_order() {
        // Points due north of the affected centroid at known distances.
        let km = |d: f64| d / crate::geo::EARTH_RADIUS_KM.to_radians();
        let reference = reference_with(vec![
            region("A", 0.0, 0.0, 1000, 0),
            region("FAR", km(200.0), 0.0, 10, 5),
            region("NEAR", km(10.0), 0.0, 10, 5),
            region("MID", km(50.0), 0.0, 10, 5),
            region("NONE", km(1.0), 0.0, 10, 0),
        ]);
        let got = nearest_sources(&["A".into()], &reference);
        let codes: Vec<&str> = got.iter().map(|c| c.code.as_str()).collect();
        assert_eq!(codes, ["NEAR", "MID", "FAR"]);
        assert!((got[0].distance_km - 10.0).abs() < 1e-6);
    }

    #[test]
    fn nearest_sources_ties_and_empty() {
        let reference = reference_with(vec![
            region("A", 0.0, 0.0, 1000, 0),
            region("Z", 1.0, 0.0, 10, 5),
            region("B", -1.0, 0.0, 10, 5),
        ]);
        let codes: Vec<String> = nearest_sources(&["A".into()], &reference)
            .into_iter()
            .map(|c| c.code)
            .collect();
        assert_eq!(codes, ["B", "Z"]);
        assert!(nearest_sources(&[], &reference).is_empty());

        let dry = reference_with(vec![
            region("A", 0.0, 0.0, 1000, 0),
            region("B", 1.0, 0.0, 10, 0),
        ]);
        assert!(nearest_sources(&["A".into()], &dry).is_empty());
    }

    #[test]
    fn centroid_is_population_weighted() {
        let reference = reference_with(vec![
            region("A", 0.0, 0.0, 3000, 0),
            region("B", 4.0, 0.0, 1000, 0),
            region("S", 1.0, 0.0, 10, 5),
        ]);
        let got = nearest_sources(&["A".into(), "B".into()], &reference);
        assert_eq!(got.len(), 1);
        assert!(got[0].distance_km < 1e-6);
    }

    #[test]
    fn assess_opens_escalation() {
        let reference = seed::reference();
        let warning = crate::ingest::parse_warning_record(
            r#"{"id":"w1","date":"2024-01-01","time":"00:00:00","latitude":"-7.9","longitude":"110.3","magnitude":"6.3","affected_regencies":"3402","issued_at":"2024-01-01T00:01:00Z"}"#,
        )
        .unwrap();
        let (a, tr) = assess(&warning, &reference, &seed::catalog(), t(0)).unwrap();
        assert_eq!(tr.state.phase, Phase::Assessed);
        assert_eq!(tr.state.shortage, a.medics.shortage);
        assert_eq!(a.medics.required, 911_503u64.div_ceil(500));
    }

    fn random_event() -> impl Strategy<Value = EscalationEvent> {
        prop_oneof![
            (0u64..300).prop_map(|s| EscalationEvent::Assessed {
                shortage: s,
                affected_regencies: vec![],
                at: t(0)
            }),
            (0u64..300, any::<bool>()).prop_map(|(a, named)| EscalationEvent::Sos1Issued {
                approver: if named { "a".into() } else { String::new() },
                amount: a,
                sources: vec![],
                at: t(1)
            }),
            (0u64..200).prop_map(|n| EscalationEvent::PledgeRecorded {
                pledge: pledge("X", n)
            }),
            (0u64..300).prop_map(|a| EscalationEvent::Sos2Issued {
                approver: "b".into(),
                amount: a,
                at: t(2)
            }),
            Just(EscalationEvent::Resolved {
                approver: "c".into(),
                at: t(3)
            }),
        ]
    }

    proptest! {
        #[test]
        fn invariants_hold_under_arbitrary_events(events in prop::collection::vec(random_event(), 0..30)) {
            let mut state = EscalationState::new("w");
            for e in &events {
                match apply_event(&state, e) {
                    Ok(next) => state = next,
                    Err(err) => prop_assert_eq!(err.kind(), "IllegalTransition"),
                }
                let pledged = state.pledged_total();
                prop_assert_eq!(state.shortage, state.ktk.saturating_sub(pledged));
                let sos1 = state.approvals.iter().filter(|a| a.action == Action::Sos1).count();
                prop_assert!(sos1 <= 1);
                if matches!(state.phase, Phase::Sos1Issued | Phase::Sos2Issued) {
                    prop_assert_eq!(sos1, 1);
                }
                if state.phase == Phase::Sos2Issued {
                    let pos1 = state.history.iter().position(|e| matches!(e, EscalationEvent::Sos1Issued { .. }));
                    let pos2 = state.history.iter().position(|e| matches!(e, EscalationEvent::Sos2Issued { .. }));
                    prop_assert!(pos1 < pos2);
                    match &state.history[pos2.unwrap()] {
                        EscalationEvent::Sos2Issued { amount, .. } => prop_assert!(*amount > 0),
                        _ => unreachable!(),
                    }
                }
            }
            prop_assert_eq!(EscalationState::replay("w", &state.history).unwrap(), state);
        }
    }
}

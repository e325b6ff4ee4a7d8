//! A seeded synthetic scenario run end to end through the engine: regions,
//! a historical catalog and one warning are generated from the seed, then
//! the warning goes through assessment, SOS-1, regional pledges, SOS-2, an
//! international pledge and resolution.
//!
//! All timestamps come from a fixed stepping clock, so the report depends
//! only on the parameters.

use std::fmt::Write as _;

use chrono::{DateTime, Duration, NaiveDate, NaiveTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::escalation::{Phase, INTERNATIONAL};
use crate::geo::haversine_km;
use crate::ingest::{DssConfig, ReferenceDataset};
use crate::model::{HistoricalQuake, QuakeEvent, Region, RegionKind, Warning};
use crate::seed;
use crate::service::{stepping_clock, Engine, ServiceError, SharedLog};
use crate::warehouse::OlapQuery;

pub const DEFAULT_REGENCIES: usize = 8;
pub const MAX_REGENCIES: usize = 10_000;
pub const CATALOG_SIZE: usize = 12;
pub const OPERATOR: &str = "sim-operator";
const AFFECTED: usize = 3;
/// Mixed into the seed for the pledge draws, kept apart from generation.
const PLEDGE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;
const REGENCIES_PER_PROVINCE: usize = 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationParams {
    pub seed: u64,
    pub regencies: usize,
    /// Warning magnitude; drawn from the seed when absent.
    pub magnitude: Option<f64>,
}

impl SimulationParams {
    pub fn new(seed: u64) -> Self {
        SimulationParams {
            seed,
            regencies: DEFAULT_REGENCIES,
            magnitude: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PledgeLine {
    pub source: String,
    pub medics: u64,
    pub shortage_after: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub seed: u64,
    pub regencies: usize,
    pub magnitude: f64,
    pub magnitude_band: String,
    pub warning_id: String,
    pub affected_regencies: Vec<String>,
    pub population: u64,
    pub sn: u64,
    pub medics_required: u64,
    pub medics_available: u64,
    pub medic_shortage: u64,
    pub predicted_deaths: u64,
    pub predicted_injured: u64,
    pub tents: u64,
    pub rice_kg: f64,
    pub total_cost: f64,
    pub sos1_amount: u64,
    pub sos1_sources: Vec<String>,
    pub regional_pledges: Vec<PledgeLine>,
    pub sos2_amount: u64,
    pub international_pledge: u64,
    pub final_phase: Phase,
    pub catalog_deaths_by_province: String,
    pub log_events: u64,
    pub state_hash: String,
}

impl SimulationReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(
            s,
            "scenario seed={} regencies={}",
            self.seed, self.regencies
        );
        let _ = writeln!(
            s,
            "warning {} magnitude {:.1} band {}",
            self.warning_id, self.magnitude, self.magnitude_band
        );
        let _ = writeln!(s, "affected {}", self.affected_regencies.join(","));
        let _ = writeln!(
            s,
            "assessment W={} Sn={} Tk={} Jtk={} Ktk={}",
            self.population,
            self.sn,
            self.medics_required,
            self.medics_available,
            self.medic_shortage
        );
        let _ = writeln!(
            s,
            "casualties deaths={} injured={}",
            self.predicted_deaths, self.predicted_injured
        );
        let _ = writeln!(
            s,
            "checklist tents={} rice_kg={:.3} total_cost={:.2}",
            self.tents, self.rice_kg, self.total_cost
        );
        let _ = writeln!(
            s,
            "sos1 amount={} sources={}",
            self.sos1_amount,
            self.sos1_sources.join(",")
        );
        for p in &self.regional_pledges {
            let _ = writeln!(
                s,
                "pledge {} medics={} shortage={}",
                p.source, p.medics, p.shortage_after
            );
        }
        let _ = writeln!(s, "sos2 amount={}", self.sos2_amount);
        let _ = writeln!(
            s,
            "pledge {INTERNATIONAL} medics={}",
            self.international_pledge
        );
        let _ = writeln!(s, "final phase {:?}", self.final_phase);
        let _ = writeln!(s, "catalog deaths by province");
        s.push_str(&self.catalog_deaths_by_province);
        let _ = writeln!(s, "log events {}", self.log_events);
        let _ = writeln!(s, "state hash {}", self.state_hash);
        s
    }
}

/// The generated inputs of a scenario.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub reference: ReferenceDataset,
    pub catalog: Vec<HistoricalQuake>,
    pub warning: Warning,
}

pub fn origin() -> DateTime<Utc> {
    NaiveDate::from_ymd_opt(2030, 1, 1)
        .expect("valid date")
        .and_time(NaiveTime::MIN)
        .and_utc()
}

fn round1(x: f64) -> f64 {
    (x * 10.0).round() / 10.0
}

fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Builds the synthetic regions, catalog and warning for a seed.
pub fn generate(params: &SimulationParams) -> Scenario {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let k = params.regencies.max(1);
    let province_count = k.div_ceil(REGENCIES_PER_PROVINCE);

    let mut provinces = Vec::with_capacity(province_count);
    for p in 0..province_count {
        provinces.push(Region {
            code: format!("P{:02}", p + 1),
            name: format!("Province {}", p + 1),
            kind: RegionKind::Province,
            parent_code: String::new(),
            population: 0,
            medics_available: 0,
            medics_pledgeable: 0,
            centroid_lat: 0.0,
            centroid_lon: 0.0,
        });
    }
    let mut regencies = Vec::with_capacity(k);
    for i in 0..k {
        let population: u64 = rng.random_range(50_000..=1_500_000);
        let medics_available = population / rng.random_range(2_000..=6_000);
        let medics_pledgeable = (medics_available as f64 * rng.random_range(0.1..0.4)) as u64;
        regencies.push(Region {
            code: format!("R{:03}", i + 1),
            name: format!("Regency {}", i + 1),
            kind: RegionKind::Regency,
            parent_code: provinces[i / REGENCIES_PER_PROVINCE].code.clone(),
            population,
            medics_available,
            medics_pledgeable,
            centroid_lat: round3(rng.random_range(-8.5..-6.0)),
            centroid_lon: round3(rng.random_range(106.0..112.0)),
        });
    }

    let mut catalog = Vec::with_capacity(CATALOG_SIZE);
    let first_day = NaiveDate::from_ymd_opt(1990, 1, 1).expect("valid date");
    for i in 0..CATALOG_SIZE {
        let regency = &regencies[rng.random_range(0..k)];
        let exposed: u64 = rng.random_range(100_000..=5_000_000);
        let deaths = (exposed as f64 * rng.random_range(0.00001..0.03)) as u64;
        let injured = (deaths as f64 * rng.random_range(1.0..4.0)) as u64;
        let injured = injured.min(exposed - deaths);
        let event = QuakeEvent {
            id: format!("h{:02}", i + 1),
            date: first_day + Duration::days(rng.random_range(0..11_000)),
            time: NaiveTime::from_num_seconds_from_midnight_opt(rng.random_range(0..86_400), 0)
                .expect("valid time"),
            latitude: regency.centroid_lat,
            longitude: regency.centroid_lon,
            magnitude: round1(rng.random_range(5.0..9.2)),
            epicenter_desc: format!("near {}", regency.name),
            depth_km: Some(round1(rng.random_range(5.0..60.0))),
            affected_regencies: vec![regency.code.clone()],
        };
        let buildings = deaths * rng.random_range(1..=5);
        catalog.push(
            HistoricalQuake::new(
                event,
                regency.code.clone(),
                deaths,
                injured,
                buildings,
                exposed,
            )
            .expect("generated tolls stay within exposure"),
        );
    }

    let epicenter = &regencies[rng.random_range(0..k)];
    let drawn_magnitude = round1(rng.random_range(6.0..8.5));
    let magnitude = params.magnitude.unwrap_or(drawn_magnitude);
    let mut by_distance: Vec<(f64, &Region)> = regencies
        .iter()
        .map(|r| {
            (
                haversine_km(
                    epicenter.centroid_lat,
                    epicenter.centroid_lon,
                    r.centroid_lat,
                    r.centroid_lon,
                ),
                r,
            )
        })
        .collect();
    by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.code.cmp(&b.1.code)));
    let affected = by_distance
        .iter()
        .take(AFFECTED)
        .map(|(_, r)| r.code.clone())
        .collect();
    let start = origin();
    let warning = Warning {
        event: QuakeEvent {
            id: format!("sim-{}", params.seed),
            date: start.date_naive(),
            time: start.time(),
            latitude: epicenter.centroid_lat,
            longitude: epicenter.centroid_lon,
            magnitude,
            epicenter_desc: format!("near {}", epicenter.name),
            depth_km: Some(10.0),
            affected_regencies: affected,
        },
        issued_at: start,
        source: "BMG".into(),
        risk_note: "synthetic scenario".into(),
    };

    let config = DssConfig::from_toml(seed::CONFIG_TOML).expect("bundled config is valid");
    let reference = ReferenceDataset::new(provinces, regencies, config)
        .expect("generated regions are consistent");
    Scenario {
        reference,
        catalog,
        warning,
    }
}

/// Generates a scenario and runs it through a fresh engine.
pub fn simulate(params: &SimulationParams) -> Result<SimulationReport, ServiceError> {
    if !(1..=MAX_REGENCIES).contains(&params.regencies) {
        return Err(ServiceError::BadRequest(format!(
            "regencies must be between 1 and {MAX_REGENCIES}, got {}",
            params.regencies
        )));
    }
    if let Some(m) = params.magnitude {
        if !(0.0..=10.0).contains(&m) {
            return Err(ServiceError::BadRequest(format!(
                "magnitude {m} outside [0, 10]"
            )));
        }
    }
    let scenario = generate(params);
    let mut pledge_rng = ChaCha8Rng::seed_from_u64(params.seed ^ PLEDGE_STREAM);
    let log = SharedLog::new();
    let start = origin();
    let mut engine = Engine::new(
        scenario.reference,
        scenario.catalog,
        Box::new(log.clone()),
        stepping_clock(start, Duration::minutes(1)),
    );
    engine.refresh_warehouse(start, start)?;
    let id = scenario.warning.id().to_owned();
    let ingested = engine.ingest_warning(scenario.warning)?;
    let a = &ingested.assessment;

    let sos1 = engine.issue_sos1(&id, OPERATOR)?;
    let sos1_doc = sos1.issued.expect("SOS-1 issues a request");
    let shortage = sos1.view.state.shortage;
    let mut target = (shortage as f64 * pledge_rng.random_range(0.3..0.7)) as u64;
    let mut regional_pledges = Vec::new();
    for source in &sos1.view.nearest_sources {
        if target == 0 {
            break;
        }
        let amount = source.medics_pledgeable.min(target);
        if amount == 0 {
            continue;
        }
        let out = engine.record_pledge(&id, &source.code, amount)?;
        target -= amount;
        regional_pledges.push(PledgeLine {
            source: source.code.clone(),
            medics: amount,
            shortage_after: out.view.state.shortage,
        });
    }

    let sos2 = engine.evaluate_sos2(&id, OPERATOR)?;
    let sos2_amount = sos2.issued.map_or(0, |d| d.amount);
    let remaining = sos2.view.state.shortage;
    if remaining > 0 {
        engine.record_pledge(&id, INTERNATIONAL, remaining)?;
    }
    let final_view = if engine.escalation(&id)?.state.phase == Phase::Resolved {
        engine.escalation(&id)?
    } else {
        engine.resolve(&id, OPERATOR)?.view
    };

    let cube =
        engine.olap(&OlapQuery::parse("province", &[] as &[&str], &[]).expect("static query"))?;

    Ok(SimulationReport {
        seed: params.seed,
        regencies: params.regencies,
        magnitude: a.magnitude,
        magnitude_band: a.magnitude_band.clone(),
        warning_id: id,
        affected_regencies: a.affected_regencies.clone(),
        population: a.population,
        sn: a.sn,
        medics_required: a.medics.required,
        medics_available: a.medics.available,
        medic_shortage: a.medics.shortage,
        predicted_deaths: a.casualties.predicted_deaths,
        predicted_injured: a.casualties.predicted_injured,
        tents: a.checklist.tents,
        rice_kg: a.checklist.rice_kg,
        total_cost: a.checklist.total_cost,
        sos1_amount: sos1_doc.amount,
        sos1_sources: sos1_doc.sources,
        regional_pledges,
        sos2_amount,
        international_pledge: remaining,
        final_phase: final_view.state.phase,
        catalog_deaths_by_province: cube.to_table(),
        log_events: engine.seq(),
        state_hash: engine.state_hash(),
    })
}

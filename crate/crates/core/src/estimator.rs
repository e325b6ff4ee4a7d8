//! Resource-need estimation for a warning: affected population, required
//! medics and the medic shortage, casualty prediction from historical
//! analogs, and the per-item resource checklist.
//!
//! Everything in here is a pure function of its inputs.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::haversine_km;
use crate::ingest::ReferenceDataset;
use crate::model::{HistoricalQuake, MagnitudeBands, QuakeEvent, Region};

/// Added to analog distances before inverting them, so an exact feature
/// match gets a large finite weight instead of a division by zero.
pub const ANALOG_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error("InvalidStandard: Sn must be at least 1, got {0}")]
    InvalidStandard(u64),
    #[error("UnknownRegency: {0}")]
    UnknownRegency(String),
    #[error("EmptyCatalog: no historical quakes to compare against")]
    EmptyCatalog,
    #[error("InvalidAnalogCount: k must be at least 1")]
    InvalidK,
    #[error("InvalidCoefficient: {0}")]
    InvalidCoefficient(String),
    #[error("InvalidOverride: {0}")]
    InvalidOverride(String),
}

impl EstimatorError {
    pub fn kind(&self) -> &'static str {
        match self {
            EstimatorError::InvalidStandard(_) => "InvalidStandard",
            EstimatorError::UnknownRegency(_) => "UnknownRegency",
            EstimatorError::EmptyCatalog => "EmptyCatalog",
            EstimatorError::InvalidK => "InvalidAnalogCount",
            EstimatorError::InvalidCoefficient(_) => "InvalidCoefficient",
            EstimatorError::InvalidOverride(_) => "InvalidOverride",
        }
    }
}

/// A configurable extra checklist line: `ceil(W * per_person)` units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtraLine {
    pub name: String,
    pub unit: String,
    pub per_person: f64,
}

/// Per-capita planning coefficients behind the resource checklist.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceCoefficients {
    pub rice_kg_per_person_day: f64,
    pub ration_days: f64,
    pub blankets_per_person: f64,
    pub persons_per_tent: f64,
    pub persons_per_shelter_site: f64,
    pub persons_per_sanitation_unit: f64,
    pub persons_per_kitchen: f64,
    pub persons_per_national_volunteer: f64,
    pub persons_per_international_volunteer: f64,
    pub infant_fraction: f64,
    pub baby_food_kg_per_infant_day: f64,
    pub cost_per_affected_person: f64,
    pub persons_per_building: f64,
    pub cost_per_building: f64,
    /// Fraction of buildings destroyed, keyed by magnitude band label.
    /// Bands without an entry use 0.
    #[serde(default)]
    pub building_damage_rate_per_band: BTreeMap<String, f64>,
    #[serde(default)]
    pub extra_lines: Vec<ExtraLine>,
}

impl ResourceCoefficients {
    fn scalars(&self) -> [(&'static str, f64); 14] {
        [
            ("rice_kg_per_person_day", self.rice_kg_per_person_day),
            ("ration_days", self.ration_days),
            ("blankets_per_person", self.blankets_per_person),
            ("persons_per_tent", self.persons_per_tent),
            ("persons_per_shelter_site", self.persons_per_shelter_site),
            (
                "persons_per_sanitation_unit",
                self.persons_per_sanitation_unit,
            ),
            ("persons_per_kitchen", self.persons_per_kitchen),
            (
                "persons_per_national_volunteer",
                self.persons_per_national_volunteer,
            ),
            (
                "persons_per_international_volunteer",
                self.persons_per_international_volunteer,
            ),
            ("infant_fraction", self.infant_fraction),
            (
                "baby_food_kg_per_infant_day",
                self.baby_food_kg_per_infant_day,
            ),
            ("cost_per_affected_person", self.cost_per_affected_person),
            ("persons_per_building", self.persons_per_building),
            ("cost_per_building", self.cost_per_building),
        ]
    }

    pub fn check(&self, bands: &MagnitudeBands) -> Result<(), EstimatorError> {
        let bad = |msg: String| Err(EstimatorError::InvalidCoefficient(msg));
        for (name, v) in self.scalars() {
            if !v.is_finite() || v < 0.0 {
                return bad(format!("{name} must be a non-negative number"));
            }
            if name.starts_with("persons_per_") && v == 0.0 {
                return bad(format!("{name} must be positive"));
            }
        }
        if self.infant_fraction > 1.0 {
            return bad("infant_fraction must lie in [0, 1]".into());
        }
        for (label, rate) in &self.building_damage_rate_per_band {
            if !bands.contains_label(label) {
                return bad(format!("damage rate for unknown band {label}"));
            }
            if !(0.0..=1.0).contains(rate) {
                return bad(format!("damage rate for {label} must lie in [0, 1]"));
            }
        }
        for line in &self.extra_lines {
            if !line.per_person.is_finite() || line.per_person < 0.0 {
                return bad(format!("{}: per_person must be non-negative", line.name));
            }
        }
        Ok(())
    }

    pub fn damage_rate(&self, band_label: &str) -> f64 {
        self.building_damage_rate_per_band
            .get(band_label)
            .copied()
            .unwrap_or(0.0)
    }

    /// Replaces one scalar coefficient by name. Damage rates are addressed as
    /// `building_damage_rate_per_band.<label>`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), EstimatorError> {
        if let Some(label) = name.strip_prefix("building_damage_rate_per_band.") {
            self.building_damage_rate_per_band
                .insert(label.to_owned(), value);
            return Ok(());
        }
        let slot = match name {
            "rice_kg_per_person_day" => &mut self.rice_kg_per_person_day,
            "ration_days" => &mut self.ration_days,
            "blankets_per_person" => &mut self.blankets_per_person,
            "persons_per_tent" => &mut self.persons_per_tent,
            "persons_per_shelter_site" => &mut self.persons_per_shelter_site,
            "persons_per_sanitation_unit" => &mut self.persons_per_sanitation_unit,
            "persons_per_kitchen" => &mut self.persons_per_kitchen,
            "persons_per_national_volunteer" => &mut self.persons_per_national_volunteer,
            "persons_per_international_volunteer" => &mut self.persons_per_international_volunteer,
            "infant_fraction" => &mut self.infant_fraction,
            "baby_food_kg_per_infant_day" => &mut self.baby_food_kg_per_infant_day,
            "cost_per_affected_person" => &mut self.cost_per_affected_person,
            "persons_per_building" => &mut self.persons_per_building,
            "cost_per_building" => &mut self.cost_per_building,
            other => {
                return Err(EstimatorError::InvalidOverride(format!(
                    "unknown coefficient {other}"
                )))
            }
        };
        *slot = value;
        Ok(())
    }
}

/// The three scalar inputs of the medic computation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EstimationInputs {
    /// W: residents of the affected area.
    pub population: u64,
    /// Sn: persons one medic can handle.
    pub sn: u64,
    /// Jtk: medics already present in the affected area.
    pub medics_available: u64,
}

/// Tk, Jtk and Ktk for one assessment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MedicAssessment {
    pub required: u64,
    pub available: u64,
    pub shortage: u64,
}

/// Medics required for `population` residents at `sn` persons per medic,
/// rounded up to a whole medic.
pub fn required_medics(population: u64, sn: u64) -> Result<u64, EstimatorError> {
    if sn < 1 {
        return Err(EstimatorError::InvalidStandard(sn));
    }
    Ok(population.div_ceil(sn))
}

/// Shortage of medics; zero unless `required` strictly exceeds `available`.
pub fn medic_shortage(required: u64, available: u64) -> u64 {
    required.saturating_sub(available)
}

pub fn assess_medics(inputs: EstimationInputs) -> Result<MedicAssessment, EstimatorError> {
    let required = required_medics(inputs.population, inputs.sn)?;
    Ok(MedicAssessment {
        required,
        available: inputs.medics_available,
        shortage: medic_shortage(required, inputs.medics_available),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AreaConfidence {
    /// The warning named its affected regencies.
    Explicit,
    /// Derived from a magnitude-dependent radius around the epicenter.
    LowConfidenceRadius,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AffectedArea {
    pub regions: Vec<Region>,
    pub population: u64,
    pub medics_available: u64,
    pub confidence: AreaConfidence,
}

impl AffectedArea {
    pub fn codes(&self) -> Vec<String> {
        self.regions.iter().map(|r| r.code.clone()).collect()
    }
}

fn sum_area(
    codes: &[String],
    reference: &ReferenceDataset,
    confidence: AreaConfidence,
) -> Result<AffectedArea, EstimatorError> {
    let mut seen = BTreeSet::new();
    let mut regions = Vec::new();
    for code in codes {
        if !seen.insert(code.as_str()) {
            continue;
        }
        let region = reference
            .regency(code)
            .ok_or_else(|| EstimatorError::UnknownRegency(code.clone()))?;
        regions.push(region.clone());
    }
    Ok(AffectedArea {
        population: regions.iter().map(|r| r.population).sum(),
        medics_available: regions.iter().map(|r| r.medics_available).sum(),
        regions,
        confidence,
    })
}

/// W and Jtk over the regencies an event names. Repeated codes count once.
pub fn affected_population(
    event: &QuakeEvent,
    reference: &ReferenceDataset,
) -> Result<AffectedArea, EstimatorError> {
    sum_area(
        &event.affected_regencies,
        reference,
        AreaConfidence::Explicit,
    )
}

/// Regencies whose centroid lies within `radius_km` of a point, in
/// reference-file order.
pub fn regencies_within_radius(
    lat: f64,
    lon: f64,
    radius_km: f64,
    reference: &ReferenceDataset,
) -> Vec<String> {
    reference
        .regencies
        .iter()
        .filter(|r| haversine_km(lat, lon, r.centroid_lat, r.centroid_lon) <= radius_km)
        .map(|r| r.code.clone())
        .collect()
}

/// The explicit regency list when the event has one; otherwise the
/// radius fallback for the event's magnitude band, flagged low-confidence.
pub fn resolve_affected_area(
    event: &QuakeEvent,
    reference: &ReferenceDataset,
) -> Result<AffectedArea, EstimatorError> {
    if !event.affected_regencies.is_empty() {
        return affected_population(event, reference);
    }
    let band = reference.bands().band_for(event.magnitude);
    let radius = reference
        .config
        .fallback_radius_km
        .get(&band.label)
        .copied()
        .unwrap_or(0.0);
    let codes = regencies_within_radius(event.latitude, event.longitude, radius, reference);
    sum_area(&codes, reference, AreaConfidence::LowConfidenceRadius)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalogWeight {
    pub quake_id: String,
    pub distance: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CasualtyPrediction {
    pub predicted_deaths: u64,
    pub predicted_injured: u64,
    pub death_rate: f64,
    pub injury_rate: f64,
    pub analogs_used: Vec<AnalogWeight>,
}

fn span(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let lo = values.clone().fold(f64::INFINITY, f64::min);
    let hi = values.fold(f64::NEG_INFINITY, f64::max);
    (lo, if hi > lo { hi - lo } else { 1.0 })
}

fn log_population(p: u64) -> f64 {
    (p.max(1) as f64).log10()
}

/// Predicts casualties from the `k` nearest historical analogs in
/// min-max normalised (magnitude, log10 exposed population) space.
///
/// Rates are inverse-distance weighted means of the analogs' death and
/// injury rates; ties in distance go to the earlier quake, then the smaller id.
pub fn predict_casualties(
    magnitude: f64,
    catalog: &[HistoricalQuake],
    population: u64,
    k: usize,
) -> Result<CasualtyPrediction, EstimatorError> {
    if catalog.is_empty() {
        return Err(EstimatorError::EmptyCatalog);
    }
    if k < 1 {
        return Err(EstimatorError::InvalidK);
    }
    let (mag_lo, mag_span) = span(catalog.iter().map(|q| q.event.magnitude));
    let (pop_lo, pop_span) = span(catalog.iter().map(|q| log_population(q.exposed_population)));
    let qm = (magnitude - mag_lo) / mag_span;
    let qp = (log_population(population) - pop_lo) / pop_span;

    let mut ranked: Vec<(f64, &HistoricalQuake)> = catalog
        .iter()
        .map(|q| {
            let dm = (q.event.magnitude - mag_lo) / mag_span - qm;
            let dp = (log_population(q.exposed_population) - pop_lo) / pop_span - qp;
            (dm.hypot(dp), q)
        })
        .collect();
    ranked.sort_by(|(da, a), (db, b)| {
        da.total_cmp(db)
            .then_with(|| a.event.date.cmp(&b.event.date))
            .then_with(|| a.event.time.cmp(&b.event.time))
            .then_with(|| a.id().cmp(b.id()))
    });
    ranked.truncate(k);

    let inverse: Vec<f64> = ranked
        .iter()
        .map(|(d, _)| 1.0 / (d + ANALOG_EPSILON))
        .collect();
    let total: f64 = inverse.iter().sum();
    let analogs_used: Vec<AnalogWeight> = ranked
        .iter()
        .zip(&inverse)
        .map(|((d, q), inv)| AnalogWeight {
            quake_id: q.id().to_owned(),
            distance: *d,
            weight: inv / total,
        })
        .collect();

    let weighted = |rate: fn(&HistoricalQuake) -> f64| {
        let mean: f64 = ranked
            .iter()
            .zip(&analogs_used)
            .map(|((_, q), a)| a.weight * rate(q))
            .sum();
        let (lo, hi) = ranked
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, q)| {
                (lo.min(rate(q)), hi.max(rate(q)))
            });
        mean.clamp(lo, hi)
    };
    let death_rate = weighted(HistoricalQuake::death_rate);
    let injury_rate = weighted(HistoricalQuake::injury_rate);

    Ok(CasualtyPrediction {
        predicted_deaths: (death_rate * population as f64).round() as u64,
        predicted_injured: (injury_rate * population as f64).round() as u64,
        death_rate,
        injury_rate,
        analogs_used,
    })
}

/// Area facts the checklist needs beyond W.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demographics {
    pub magnitude_band: String,
    /// Known building count for the area; when absent the stock is
    /// approximated as `ceil(W / persons_per_building)`.
    pub building_stock: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineItem {
    pub name: String,
    pub unit: String,
    pub quantity: u64,
}

/// One quantified answer per planning question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceChecklist {
    pub medics_national: MedicAssessment,
    /// Medics requested from the international community. Zero at
    /// assessment time; the escalation's SOS-2 request carries the figure.
    pub medics_international: u64,
    pub predicted_deaths: u64,
    pub predicted_injured: u64,
    pub volunteers_national: u64,
    pub volunteers_international: u64,
    pub tents: u64,
    pub shelter_sites: u64,
    pub sanitation_units: u64,
    pub kitchens: u64,
    pub rice_kg: f64,
    pub baby_food_kg: f64,
    pub blankets: u64,
    pub total_cost: f64,
    pub buildings_at_risk: u64,
    pub damage_cost: f64,
    pub additional: Vec<LineItem>,
}

fn per_unit(population: u64, persons_per_unit: f64) -> u64 {
    if persons_per_unit.fract() == 0.0 && persons_per_unit < u64::MAX as f64 {
        population.div_ceil(persons_per_unit as u64)
    } else {
        (population as f64 / persons_per_unit).ceil() as u64
    }
}

fn round_to(value: f64, decimals: i32) -> f64 {
    let scale = 10f64.powi(decimals);
    (value * scale).round() / scale
}

/// Quantities for every checklist line. Kilograms are rounded to the gram
/// and money to two decimals; counts round up.
pub fn resource_checklist(
    population: u64,
    demographics: &Demographics,
    coeffs: &ResourceCoefficients,
    medic: &MedicAssessment,
    casualty: &CasualtyPrediction,
) -> Result<ResourceChecklist, EstimatorError> {
    for (name, v) in coeffs.scalars() {
        if !v.is_finite() || v < 0.0 || (name.starts_with("persons_per_") && v == 0.0) {
            return Err(EstimatorError::InvalidCoefficient(name.into()));
        }
    }
    if coeffs.infant_fraction > 1.0 {
        return Err(EstimatorError::InvalidCoefficient("infant_fraction".into()));
    }
    let damage_rate = coeffs.damage_rate(&demographics.magnitude_band);
    if !(0.0..=1.0).contains(&damage_rate) {
        return Err(EstimatorError::InvalidCoefficient(format!(
            "building_damage_rate_per_band.{}",
            demographics.magnitude_band
        )));
    }

    let w = population as f64;
    let infants = (w * coeffs.infant_fraction).round();
    let stock = demographics
        .building_stock
        .unwrap_or_else(|| per_unit(population, coeffs.persons_per_building));
    let buildings_at_risk = (damage_rate * stock as f64).round() as u64;

    Ok(ResourceChecklist {
        medics_national: *medic,
        medics_international: 0,
        predicted_deaths: casualty.predicted_deaths,
        predicted_injured: casualty.predicted_injured,
        volunteers_national: per_unit(population, coeffs.persons_per_national_volunteer),
        volunteers_international: per_unit(population, coeffs.persons_per_international_volunteer),
        tents: per_unit(population, coeffs.persons_per_tent),
        shelter_sites: per_unit(population, coeffs.persons_per_shelter_site),
        sanitation_units: per_unit(population, coeffs.persons_per_sanitation_unit),
        kitchens: per_unit(population, coeffs.persons_per_kitchen),
        rice_kg: round_to(w * coeffs.rice_kg_per_person_day * coeffs.ration_days, 3),
        baby_food_kg: round_to(
            infants * coeffs.baby_food_kg_per_infant_day * coeffs.ration_days,
            3,
        ),
        blankets: (w * coeffs.blankets_per_person).ceil() as u64,
        total_cost: round_to(w * coeffs.cost_per_affected_person, 2),
        buildings_at_risk,
        damage_cost: round_to(buildings_at_risk as f64 * coeffs.cost_per_building, 2),
        additional: coeffs
            .extra_lines
            .iter()
            .map(|l| LineItem {
                name: l.name.clone(),
                unit: l.unit.clone(),
                quantity: (w * l.per_person).ceil() as u64,
            })
            .collect(),
    })
}

/// What-if adjustments applied on top of a stored warning.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssessmentOverrides {
    #[serde(default)]
    pub population: Option<u64>,
    #[serde(default)]
    pub sn: Option<u64>,
    #[serde(default)]
    pub magnitude: Option<f64>,
    #[serde(default)]
    pub affected_regencies: Option<Vec<String>>,
    #[serde(default)]
    pub coefficients: BTreeMap<String, f64>,
}

impl AssessmentOverrides {
    pub fn is_empty(&self) -> bool {
        *self == AssessmentOverrides::default()
    }
}

/// The full assessment bundle for one warning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Assessment {
    pub warning_id: String,
    pub magnitude: f64,
    pub magnitude_band: String,
    pub affected_regencies: Vec<String>,
    pub area_confidence: AreaConfidence,
    /// W
    pub population: u64,
    /// Sn
    pub sn: u64,
    pub medics: MedicAssessment,
    pub casualties: CasualtyPrediction,
    pub checklist: ResourceChecklist,
}

/// Runs the whole estimation chain: area, medics, casualties, checklist.
pub fn compute_assessment(
    event: &QuakeEvent,
    reference: &ReferenceDataset,
    catalog: &[HistoricalQuake],
    overrides: &AssessmentOverrides,
) -> Result<Assessment, EstimatorError> {
    let mut event = event.clone();
    if let Some(codes) = &overrides.affected_regencies {
        event.affected_regencies = codes.clone();
    }
    if let Some(m) = overrides.magnitude {
        if !(0.0..=10.0).contains(&m) {
            return Err(EstimatorError::InvalidOverride(
                "magnitude must lie in [0, 10]".into(),
            ));
        }
        event.magnitude = m;
    }
    let area = resolve_affected_area(&event, reference)?;
    let population = overrides.population.unwrap_or(area.population);
    let sn = overrides.sn.unwrap_or(reference.sn());
    let medics = assess_medics(EstimationInputs {
        population,
        sn,
        medics_available: area.medics_available,
    })?;

    let band = reference.bands().band_for(event.magnitude).label.clone();
    let casualties = predict_casualties(
        event.magnitude,
        catalog,
        population,
        reference.config.analog_k,
    )?;

    let mut coeffs = reference.coefficients().clone();
    for (name, value) in &overrides.coefficients {
        coeffs.set(name, *value)?;
    }
    coeffs.check(reference.bands())?;
    let checklist = resource_checklist(
        population,
        &Demographics {
            magnitude_band: band.clone(),
            building_stock: None,
        },
        &coeffs,
        &medics,
        &casualties,
    )?;

    Ok(Assessment {
        warning_id: event.id.clone(),
        magnitude: event.magnitude,
        magnitude_band: band,
        affected_regencies: area.codes(),
        area_confidence: area.confidence,
        population,
        sn,
        medics,
        casualties,
        checklist,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_quake_event, RawQuakeEvent};
    use crate::seed;
    use proptest::prelude::*;

    fn event(mag: f64, codes: &str) -> QuakeEvent {
        validate_quake_event(&RawQuakeEvent {
            id: Some("W".into()),
            date: Some("2024-06-01".into()),
            time: Some("03:00:00".into()),
            latitude: Some("-7.9".into()),
            longitude: Some("110.4".into()),
            magnitude: Some(mag.to_string()),
            affected_regencies: Some(codes.into()),
            ..Default::default()
        })
        .unwrap()
    }

    fn analog(
        id: &str,
        date: &str,
        mag: f64,
        deaths: u64,
        injured: u64,
        exposed: u64,
    ) -> HistoricalQuake {
        let mut ev = event(mag, "");
        ev.id = id.into();
        ev.date = crate::model::parse_date(date).unwrap();
        HistoricalQuake::new(ev, "", deaths, injured, 0, exposed).unwrap()
    }

    fn test_reference() -> ReferenceDataset {
        let mut r = seed::reference();
        r.regencies[0].population = 60_000;
        r.regencies[0].medics_available = 30;
        r.regencies[1].population = 40_000;
        r.regencies[1].medics_available = 20;
        r
    }

    #[test]
    fn sums_affected_population() {
        let r = test_reference();
        let codes = format!("{},{}", r.regencies[0].code, r.regencies[1].code);
        let area = affected_population(&event(6.0, &codes), &r).unwrap();
        assert_eq!((area.population, area.medics_available), (100_000, 50));
    }

    #[test]
    fn duplicate_codes_count_once() {
        let r = test_reference();
        let codes = format!("{0},{0}", r.regencies[0].code);
        assert_eq!(
            affected_population(&event(6.0, &codes), &r)
                .unwrap()
                .population,
            60_000
        );
    }

    #[test]
    fn empty_affected_list() {
        let area = affected_population(&event(6.0, ""), &test_reference()).unwrap();
        assert_eq!((area.population, area.medics_available), (0, 0));
    }

    #[test]
    fn unknown_regency() {
        assert_eq!(
            affected_population(&event(6.0, "ZZ"), &test_reference()).unwrap_err(),
            EstimatorError::UnknownRegency("ZZ".into())
        );
    }

    #[test]
    fn radius_fallback_is_low_confidence() {
        let r = seed::reference();
        // 6.x band uses a 100 km radius; Bantul and Kota Yogyakarta are
        // within it, the West Java regencies are not.
        let area = resolve_affected_area(&event(6.2, ""), &r).unwrap();
        assert_eq!(area.confidence, AreaConfidence::LowConfidenceRadius);
        assert_eq!(area.codes(), vec!["3402", "3471"]);
    }

    #[test]
    fn medic_examples() {
        assert_eq!(required_medics(100_000, 500), Ok(200));
        assert_eq!(required_medics(0, 37), Ok(0));
        assert_eq!(required_medics(999, 100), Ok(10));
        assert_eq!(
            required_medics(5, 0),
            Err(EstimatorError::InvalidStandard(0))
        );
        assert_eq!(medic_shortage(200, 50), 150);
        assert_eq!(medic_shortage(50, 200), 0);
        assert_eq!(medic_shortage(75, 75), 0);
    }

    #[test]
    fn single_analog_forces_rate() {
        let cat = vec![analog("only", "2000-01-01", 7.0, 2_000, 0, 100_000)];
        let p = predict_casualties(6.0, &cat, 50_000, 3).unwrap();
        assert_eq!(p.predicted_deaths, 1_000);
        assert_eq!(p.analogs_used.len(), 1);
        assert_eq!(p.analogs_used[0].weight, 1.0);
    }

    #[test]
    fn empty_catalog_and_zero_k() {
        assert_eq!(
            predict_casualties(6.0, &[], 10, 3),
            Err(EstimatorError::EmptyCatalog)
        );
        let cat = vec![analog("only", "2000-01-01", 7.0, 1, 0, 100)];
        assert_eq!(
            predict_casualties(6.0, &cat, 10, 0),
            Err(EstimatorError::InvalidK)
        );
    }

    #[test]
    fn exact_match_ties_break_on_date_then_id() {
        let cat = vec![
            analog("b", "2001-01-01", 7.0, 10, 0, 1000),
            analog("a", "2001-01-01", 7.0, 20, 0, 1000),
            analog("c", "1999-01-01", 7.0, 30, 0, 1000),
        ];
        let p = predict_casualties(7.0, &cat, 1000, 1).unwrap();
        assert_eq!(p.analogs_used[0].quake_id, "c");
        let p = predict_casualties(7.0, &cat, 1000, 2).unwrap();
        assert_eq!(p.analogs_used[1].quake_id, "a");
    }

    #[test]
    fn whole_catalog_weights_sum_to_one() {
        let cat = seed::catalog();
        let p = predict_casualties(7.0, &cat, 1_000_000, 99).unwrap();
        assert_eq!(p.analogs_used.len(), cat.len());
        let total: f64 = p.analogs_used.iter().map(|a| a.weight).sum();
        assert!((total - 1.0).abs() < 1e-9);
    }

    fn coeffs() -> ResourceCoefficients {
        let mut c = seed::reference().config.coefficients;
        c.rice_kg_per_person_day = 0.4;
        c.ration_days = 7.0;
        c.blankets_per_person = 1.0;
        c.persons_per_tent = 5.0;
        c
    }

    fn checklist(w: u64) -> ResourceChecklist {
        let medic = assess_medics(EstimationInputs {
            population: w,
            sn: 500,
            medics_available: 0,
        })
        .unwrap();
        let cas = predict_casualties(7.0, &seed::catalog(), w, 3).unwrap();
        let demo = Demographics {
            magnitude_band: "7.0\u{2013}7.9".into(),
            building_stock: None,
        };
        resource_checklist(w, &demo, &coeffs(), &medic, &cas).unwrap()
    }

    #[test]
    fn checklist_arithmetic() {
        let c = checklist(10_000);
        assert_eq!(c.rice_kg, 28_000.0);
        assert_eq!(c.blankets, 10_000);
        assert_eq!(c.tents, 2_000);
        assert_eq!(checklist(10_001).tents, 2_001);
        // 200 infants * 0.15 kg * 7 days
        assert_eq!(c.baby_food_kg, 210.0);
        assert_eq!(c.kitchens, 20);
        assert_eq!(c.sanitation_units, 500);
        // 2500 buildings at 15% damage
        assert_eq!(c.buildings_at_risk, 375);
        assert_eq!(c.damage_cost, 3_750_000.0);
        assert_eq!(c.additional[0].quantity, 150_000);
    }

    #[test]
    fn checklist_all_zero_without_population() {
        let c = checklist(0);
        let counts = [
            c.medics_national.required,
            c.medics_national.shortage,
            c.medics_international,
            c.predicted_deaths,
            c.predicted_injured,
            c.volunteers_national,
            c.volunteers_international,
            c.tents,
            c.shelter_sites,
            c.sanitation_units,
            c.kitchens,
            c.blankets,
            c.buildings_at_risk,
        ];
        assert!(counts.iter().all(|&q| q == 0));
        assert_eq!(
            [c.rice_kg, c.baby_food_kg, c.total_cost, c.damage_cost],
            [0.0; 4]
        );
        assert!(c.additional.iter().all(|l| l.quantity == 0));
    }

    #[test]
    fn coefficient_overrides() {
        let mut c = coeffs();
        c.set("persons_per_tent", 4.0).unwrap();
        assert_eq!(c.persons_per_tent, 4.0);
        assert!(c.set("no_such", 1.0).is_err());
        c.set("persons_per_kitchen", 0.0).unwrap();
        assert!(c.check(&MagnitudeBands::default()).is_err());
    }

    #[test]
    fn seed_assessment_for_bantul() {
        let r = seed::reference();
        let a = compute_assessment(
            &event(6.3, "3402"),
            &r,
            &seed::catalog(),
            &Default::default(),
        )
        .unwrap();
        assert_eq!(a.population, 911_503);
        assert_eq!(a.medics.required, 1_824);
        assert_eq!(a.medics.shortage, 1_824 - 900);
        assert_eq!(a.magnitude_band, "6.0\u{2013}6.9");
    }

    #[test]
    fn overrides_change_only_their_inputs() {
        let r = seed::reference();
        let ev = event(6.3, "3402");
        let cat = seed::catalog();
        let base = compute_assessment(&ev, &r, &cat, &Default::default()).unwrap();
        let o = AssessmentOverrides {
            sn: Some(250),
            ..Default::default()
        };
        let alt = compute_assessment(&ev, &r, &cat, &o).unwrap();
        assert_eq!(alt.medics.required, 3_647);
        assert_eq!(alt.checklist.tents, base.checklist.tents);
        let bad = AssessmentOverrides {
            magnitude: Some(11.0),
            ..Default::default()
        };
        assert!(compute_assessment(&ev, &r, &cat, &bad).is_err());
    }

    proptest! {
        #[test]
        fn rates_within_analog_range(
            mag in 0.0f64..10.0,
            w in 0u64..50_000_000,
            k in 1usize..8,
        ) {
            let cat = seed::catalog();
            let p = predict_casualties(mag, &cat, w, k).unwrap();
            let used: Vec<&HistoricalQuake> = p.analogs_used.iter()
                .map(|a| cat.iter().find(|q| q.id() == a.quake_id).unwrap())
                .collect();
            let lo = used.iter().map(|q| q.death_rate()).fold(f64::INFINITY, f64::min);
            let hi = used.iter().map(|q| q.death_rate()).fold(f64::NEG_INFINITY, f64::max);
            prop_assert!(lo <= p.death_rate && p.death_rate <= hi);
            let total: f64 = p.analogs_used.iter().map(|a| a.weight).sum();
            prop_assert!((total - 1.0).abs() < 1e-9);
        }

        #[test]
        fn checklist_monotone_in_population(a in 0u64..5_000_000, b in 0u64..5_000_000) {
            let (lo, hi) = (a.min(b), a.max(b));
            let (x, y) = (checklist(lo), checklist(hi));
            prop_assert!(x.medics_national.required <= y.medics_national.required);
            prop_assert!(x.tents <= y.tents && x.shelter_sites <= y.shelter_sites);
            prop_assert!(x.sanitation_units <= y.sanitation_units && x.kitchens <= y.kitchens);
            prop_assert!(x.volunteers_national <= y.volunteers_national);
            prop_assert!(x.volunteers_international <= y.volunteers_international);
            prop_assert!(x.rice_kg <= y.rice_kg && x.baby_food_kg <= y.baby_food_kg);
            prop_assert!(x.blankets <= y.blankets && x.total_cost <= y.total_cost);
            prop_assert!(x.buildings_at_risk <= y.buildings_at_risk && x.damage_cost <= y.damage_cost);
        }

        #[test]
        fn doubling_populations_doubles_w(pops in proptest::collection::vec(0u64..5_000_000, 1..6)) {
            let mut r = seed::reference();
            for (reg, p) in r.regencies.iter_mut().zip(&pops) {
                reg.population = *p;
                reg.medics_available = 0;
                reg.medics_pledgeable = 0;
            }
            let codes: Vec<String> = r.regencies.iter().take(pops.len()).map(|x| x.code.clone()).collect();
            let ev = event(6.0, &codes.join(","));
            let w1 = affected_population(&ev, &r).unwrap().population;
            for reg in r.regencies.iter_mut() {
                reg.population *= 2;
            }
            let w2 = affected_population(&ev, &r).unwrap().population;
            prop_assert_eq!(w2, 2 * w1);
        }
    }
}

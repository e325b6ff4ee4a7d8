//! Plain-text rendering for the CLI. Field order is fixed.

use std::fmt::Write as _;

use serde_json::Value;

use quake_dss::escalation::EscalationState;
use quake_dss::estimator::{AreaConfidence, Assessment};

fn row(out: &mut String, label: &str, value: impl std::fmt::Display) {
    let _ = writeln!(out, "  {label:<28} {value}");
}

pub fn assessment_text(a: &Assessment, escalation: Option<&EscalationState>) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "warning {}", a.warning_id);
    let _ = writeln!(
        s,
        "magnitude {:.1} (band {})",
        a.magnitude, a.magnitude_band
    );
    let confidence = match a.area_confidence {
        AreaConfidence::Explicit => "named in warning",
        AreaConfidence::LowConfidenceRadius => "radius fallback, low confidence",
    };
    let _ = writeln!(
        s,
        "affected regencies {} ({confidence})",
        a.affected_regencies.join(",")
    );
    let _ = writeln!(s, "medics");
    row(&mut s, "affected population (W)", a.population);
    row(&mut s, "persons per medic (Sn)", a.sn);
    row(&mut s, "required (Tk)", a.medics.required);
    row(&mut s, "available (Jtk)", a.medics.available);
    row(&mut s, "shortage (Ktk)", a.medics.shortage);
    let _ = writeln!(s, "casualty prediction");
    row(&mut s, "deaths", a.casualties.predicted_deaths);
    row(&mut s, "injured", a.casualties.predicted_injured);
    for w in &a.casualties.analogs_used {
        row(
            &mut s,
            &format!("analog {}", w.quake_id),
            format!("distance {:.6} weight {:.6}", w.distance, w.weight),
        );
    }
    let c = &a.checklist;
    let _ = writeln!(s, "checklist");
    row(&mut s, "medics national", c.medics_national.required);
    row(&mut s, "medics international", c.medics_international);
    row(&mut s, "volunteers national", c.volunteers_national);
    row(
        &mut s,
        "volunteers international",
        c.volunteers_international,
    );
    row(&mut s, "tents", c.tents);
    row(&mut s, "shelter sites", c.shelter_sites);
    row(&mut s, "sanitation units", c.sanitation_units);
    row(&mut s, "kitchens", c.kitchens);
    row(&mut s, "rice kg", format!("{:.3}", c.rice_kg));
    row(&mut s, "baby food kg", format!("{:.3}", c.baby_food_kg));
    row(&mut s, "blankets", c.blankets);
    row(&mut s, "buildings at risk", c.buildings_at_risk);
    row(&mut s, "damage cost", format!("{:.2}", c.damage_cost));
    row(&mut s, "total cost", format!("{:.2}", c.total_cost));
    for item in &c.additional {
        row(
            &mut s,
            &item.name,
            format!("{} {}", item.quantity, item.unit),
        );
    }
    if let Some(e) = escalation {
        let _ = writeln!(s, "escalation");
        row(&mut s, "phase", format!("{:?}", e.phase));
        row(&mut s, "open shortage", e.shortage);
        row(&mut s, "pledged", e.pledged_total());
    }
    s
}

pub fn ingest_text(report: &Value) -> String {
    let mut s = String::new();
    let n = |v: &Value| v.as_u64().unwrap_or(0);
    let _ = writeln!(
        s,
        "regions: {} provinces, {} regencies",
        n(&report["provinces"]),
        n(&report["regencies"])
    );
    let _ = writeln!(
        s,
        "catalog: {} loaded, {} rejected",
        n(&report["catalog"]["loaded"]),
        n(&report["catalog"]["rejected"])
    );
    let wh = &report["warehouse"];
    for source in ["regions", "catalog"] {
        let st = &wh[source];
        let _ = writeln!(
            s,
            "warehouse {source}: {} facts inserted, {} updated, {} dimension rows",
            n(&st["inserted"]),
            n(&st["updated"]),
            n(&st["dimensions_upserted"])
        );
    }
    if let Some(skipped) = wh["skipped_quakes"].as_array().filter(|a| !a.is_empty()) {
        let ids: Vec<&str> = skipped.iter().filter_map(Value::as_str).collect();
        let _ = writeln!(s, "warehouse skipped quakes: {}", ids.join(","));
    }
    let _ = writeln!(s, "warehouse facts: {}", n(&wh["facts"]));
    let w = &report["warnings"];
    let _ = writeln!(
        s,
        "warnings: {} read, {} accepted, {} rejected, {} duplicates, {} failed",
        n(&w["read"]),
        n(&w["accepted"]),
        n(&w["rejected"]),
        n(&w["duplicates"]),
        n(&w["failed"])
    );
    let _ = writeln!(s, "log sequence: {}", n(&report["log_sequence"]));
    s
}

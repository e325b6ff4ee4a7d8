use std::collections::BTreeSet;
use std::io::Cursor;

use chrono::{DateTime, Duration, NaiveDate, Utc};
use proptest::prelude::*;

use quake_dss::escalation::nearest_sources;
use quake_dss::estimator::{medic_shortage, required_medics};
use quake_dss::ingest::{
    load_reference_dir, parse_warning_feed, save_reference_dir, DssConfig, ReferenceDataset,
    SourceWatermark,
};
use quake_dss::model::{Region, RegionKind};
use quake_dss::seed;
use quake_dss::warehouse::{
    build_cube, drill_down, extract_deferred, roll_up, slice, Axis, BandDim, Dimension, FactRow,
    Level, ProvinceDim, RegencyDim, SourceRecord, SourceTable, Warehouse,
};

fn t0() -> DateTime<Utc> {
    DateTime::UNIX_EPOCH + Duration::days(20_000)
}

fn bands() -> Vec<String> {
    DssConfig::from_toml(seed::CONFIG_TOML)
        .unwrap()
        .magnitude_bands
        .labels()
        .map(str::to_owned)
        .collect()
}

type RawFact = (i32, u32, u32, usize, usize, u64, u64, u64);

fn raw_facts() -> impl Strategy<Value = Vec<RawFact>> {
    prop::collection::vec(
        (
            2000i32..2004,
            1u32..=12,
            1u32..=28,
            0usize..6,
            0usize..5,
            0u64..10_000,
            0u64..10_000,
            0u64..1_000,
        ),
        1..60,
    )
}

/// Three provinces with two regencies each; fact `i` is quake `q{i}`.
fn store(raw: &[RawFact]) -> Warehouse {
    let labels = bands();
    let mut table = SourceTable::new("facts");
    let regencies: Vec<(String, String)> = (0..6)
        .map(|i| (format!("P{}", i / 2), format!("R{i}")))
        .collect();
    for p in 0..3 {
        let code = format!("P{p}");
        table.push(
            t0(),
            SourceRecord::Province(ProvinceDim {
                code: code.clone(),
                name: code,
            }),
        );
    }
    for (p, r) in &regencies {
        table.push(
            t0(),
            SourceRecord::Regency(RegencyDim {
                code: r.clone(),
                name: r.clone(),
                province_code: p.clone(),
            }),
        );
    }
    for l in &labels {
        table.push(
            t0(),
            SourceRecord::Band(BandDim {
                label: l.clone(),
                lower: 0.0,
                upper: None,
            }),
        );
    }
    for (i, (y, m, d, r, b, deaths, injured, built)) in raw.iter().enumerate() {
        table.push(
            t0(),
            SourceRecord::Fact(FactRow {
                quake_id: format!("q{i}"),
                date: NaiveDate::from_ymd_opt(*y, *m, *d).unwrap(),
                regency_code: regencies[*r].1.clone(),
                magnitude_band: labels[*b].clone(),
                deaths: *deaths,
                injured: *injured,
                buildings_destroyed: *built,
                event_count: 1,
            }),
        );
    }
    let mut wh = Warehouse::new();
    wh.load_facts(&extract_deferred(&table, &SourceWatermark::origin("facts")))
        .unwrap();
    wh
}

fn finest_axes() -> Vec<Axis> {
    vec![
        Axis::new(Level::Day),
        Axis::new(Level::Regency),
        Axis::new(Level::Band),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn slice_commutes_with_roll_up_of_another_dimension(raw in raw_facts(), pick in 0usize..60, d_idx in 0usize..3, e_idx in 0usize..3) {
        prop_assume!(d_idx != e_idx);
        let wh = store(&raw);
        let axes = vec![Axis::new(Level::Month), Axis::new(Level::Regency), Axis::new(Level::Band)];
        let cube = build_cube(&wh, &axes, &[]).unwrap();
        let (d, e) = (Dimension::ALL[d_idx], Dimension::ALL[e_idx]);
        let keys: Vec<&Vec<String>> = cube.cells.keys().collect();
        let member = keys[pick % keys.len()][d_idx].clone();
        let left = roll_up(&cube, e).and_then(|c| slice(&c, d, &member));
        let right = slice(&cube, d, &member).and_then(|c| roll_up(&c, e));
        prop_assert_eq!(left.is_ok(), right.is_ok());
        if let (Ok(left), Ok(right)) = (left, right) {
            prop_assert_eq!(left, right);
        }
    }

    #[test]
    fn drill_down_is_right_inverse_of_roll_up(raw in raw_facts()) {
        let wh = store(&raw);
        let mut cube = build_cube(&wh, &[Axis::new(Level::Year), Axis::new(Level::Province), Axis::new(Level::Band)], &[]).unwrap();
        for _ in 0..2 {
            for d in Dimension::ALL {
                let idx = cube.axis_index(d).unwrap();
                if cube.axes[idx].level.finer().is_none() {
                    continue;
                }
                let finer = drill_down(&cube, d, &wh).unwrap();
                prop_assert_eq!(&roll_up(&finer, d).unwrap(), &cube);
                cube = finer;
            }
        }
        prop_assert_eq!(cube.axes, finest_axes());
    }

    #[test]
    fn roll_ups_conserve_totals(raw in raw_facts(), dims in prop::collection::vec(0usize..3, 0..6)) {
        let wh = store(&raw);
        let base = build_cube(&wh, &finest_axes(), &[]).unwrap().totals();
        let mut cube = build_cube(&wh, &finest_axes(), &[]).unwrap();
        for d in dims {
            if let Ok(next) = roll_up(&cube, Dimension::ALL[d]) {
                cube = next;
            }
            prop_assert_eq!(cube.totals(), base);
        }
    }

    #[test]
    fn watermark_never_decreases(offsets in prop::collection::vec(prop::collection::vec(-100i64..100, 0..5), 1..12)) {
        let mut wh = store(&[]);
        let mut last = wh.watermark("src").last_extracted_at;
        for batch_offsets in offsets {
            let mut table = SourceTable::new("src");
            for o in batch_offsets {
                table.push(t0() + Duration::seconds(o), SourceRecord::Province(ProvinceDim { code: "P0".into(), name: "P0".into() }));
            }
            let batch = extract_deferred(&table, &wh.watermark("src"));
            let before = wh.clone();
            wh.load_facts(&batch).unwrap();
            let now = wh.watermark("src").last_extracted_at;
            prop_assert!(now >= last);
            last = now;
            let mut twice = wh.clone();
            twice.load_facts(&batch).unwrap();
            prop_assert_eq!(&twice, &wh);
            prop_assert!(batch.rows.iter().all(|r| r.modified_at > before.watermark("src").last_extracted_at));
        }
    }

    #[test]
    fn feed_errors_plus_records_equal_lines(kinds in prop::collection::vec(0u8..4, 0..40)) {
        let mut text = String::new();
        for (i, k) in kinds.iter().enumerate() {
            let line = match k {
                0 => format!(r#"{{"id":"w{i}","date":"2024-01-01","time":"00:00:00","latitude":-7.9,"longitude":110.3,"magnitude":{}.5,"affected_regencies":"3402","issued_at":"2024-01-01T00:00:30Z"}}"#, i % 9),
                1 => format!(r#"{{"id":"w{i}","magnitude":11}}"#),
                2 => "not json at all".to_owned(),
                _ => String::new(),
            };
            text.push_str(&line);
            text.push('\n');
        }
        let parsed = parse_warning_feed(Cursor::new(text)).unwrap();
        prop_assert_eq!(parsed.warnings.len() + parsed.errors.len(), kinds.len());
        prop_assert_eq!(parsed.warnings.len(), kinds.iter().filter(|k| **k == 0).count());
    }

    #[test]
    fn reference_round_trips_through_files(rows in prop::collection::vec((1u64..5_000_000, 0u64..1_000, 0u64..1_000, -60.0f64..60.0, -170.0f64..170.0), 1..12)) {
        let provinces = vec![Region {
            code: "11".into(),
            name: "Province, with comma".into(),
            kind: RegionKind::Province,
            parent_code: String::new(),
            population: 0,
            medics_available: 0,
            medics_pledgeable: 0,
            centroid_lat: 4.1,
            centroid_lon: 96.2,
        }];
        let regencies = rows.iter().enumerate().map(|(i, (pop, a, b, lat, lon))| {
            let available = (*a).min(*pop);
            Region {
                code: format!("11{i:02}"),
                name: format!("Regency \"{i}\""),
                kind: RegionKind::Regency,
                parent_code: "11".into(),
                population: *pop,
                medics_available: available,
                medics_pledgeable: (*b).min(available),
                centroid_lat: *lat,
                centroid_lon: *lon,
            }
        }).collect();
        let ds = ReferenceDataset::new(provinces, regencies, DssConfig::from_toml(seed::CONFIG_TOML).unwrap()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_reference_dir(&ds, dir.path()).unwrap();
        prop_assert_eq!(load_reference_dir(dir.path()).unwrap(), ds);
    }

    #[test]
    fn nearest_sources_is_a_permutation_of_eligible_regions(mask in prop::collection::vec(any::<bool>(), 10)) {
        let reference = seed::reference();
        let codes: Vec<String> = reference.regencies.iter().map(|r| r.code.clone()).collect();
        let affected: Vec<String> = codes.iter().zip(&mask).filter(|(_, m)| **m).map(|(c, _)| c.clone()).collect();
        let got = nearest_sources(&affected, &reference);
        let got_codes: Vec<&str> = got.iter().map(|s| s.code.as_str()).collect();
        let unique: BTreeSet<&str> = got_codes.iter().copied().collect();
        prop_assert_eq!(unique.len(), got_codes.len());
        if affected.is_empty() {
            prop_assert!(got.is_empty());
        } else {
            let eligible: BTreeSet<&str> = reference
                .regions()
                .filter(|r| r.medics_pledgeable > 0 && !affected.contains(&r.code))
                .map(|r| r.code.as_str())
                .collect();
            prop_assert_eq!(unique, eligible);
            prop_assert!(got.windows(2).all(|w| w[0].distance_km <= w[1].distance_km));
        }
    }

    #[test]
    fn shortage_is_zero_exactly_when_covered(w in 0u64..100_000_000, sn in 1u64..10_000, jtk in 0u64..100_000) {
        let tk = required_medics(w, sn).unwrap();
        prop_assert_eq!(medic_shortage(tk, jtk) == 0, jtk >= tk);
        prop_assert!(required_medics(w + 1, sn).unwrap() >= tk);
    }
}

//! `quake-dss`: run the service, batch-ingest data, inspect assessments,
//! query the warehouse, run seeded scenarios and verify the command log.
//!
//! Exit codes: 0 on success, 1 on a domain error (reported on stderr as one
//! JSON line `{"error": KIND, "message": TEXT}`), 2 on a usage error.

mod render;
mod server;

use std::fs;
use std::io::{self, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use quake_dss::ingest::{
    load_historical_catalog, load_reference_dir, parse_warning_feed, CONFIG_FILE, PROVINCES_FILE,
    REGENCIES_FILE,
};
use quake_dss::service::{replay_log, system_clock, DataDir, ServiceError, CATALOG_FILE};
use quake_dss::simulate::{simulate, SimulationParams, DEFAULT_REGENCIES};
use quake_dss::warehouse::OlapQuery;

#[derive(Parser)]
#[command(
    name = "quake-dss",
    version,
    about = "Earthquake response decision support"
)]
struct Cli {
    /// Data directory holding reference tables, the catalog and the command log.
    #[arg(long, global = true, env = "QUAKE_DSS_DATA", default_value = "data")]
    data: PathBuf,
    /// Print one JSON object per line instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the HTTP service.
    Serve {
        #[arg(long, env = "QUAKE_DSS_LISTEN", default_value = "127.0.0.1:8080")]
        listen: String,
        /// Bearer token required for write requests.
        #[arg(long, env = "QUAKE_DSS_TOKEN")]
        token: Option<String>,
        /// Seconds between checks for changed source files.
        #[arg(long, default_value_t = 60)]
        refresh_secs: u64,
    },
    /// Load reference tables, a historical catalog and optionally a warning
    /// feed into the data directory.
    Ingest {
        /// Directory with provinces.csv, regencies.csv and config.toml.
        #[arg(long)]
        regions: PathBuf,
        #[arg(long)]
        catalog: PathBuf,
        /// Line-delimited JSON warning feed.
        #[arg(long)]
        warnings: Option<PathBuf>,
    },
    /// Print the stored assessment and checklist for a warning.
    Assess { warning_id: String },
    /// Query the casualty warehouse.
    Olap {
        /// Comma-separated axes, e.g. `province,time:year`.
        #[arg(long = "group-by")]
        group_by: String,
        /// Member restriction `LEVEL=M1|M2`; repeatable.
        #[arg(long = "filter")]
        filters: Vec<String>,
        /// Operation applied after grouping, e.g. `rollup:time`,
        /// `slice:geography=11`, `dice:magnitude=8.0+;time=2004`; repeatable.
        #[arg(long = "op")]
        ops: Vec<String>,
    },
    /// Generate a seeded synthetic scenario and run it end to end.
    Simulate {
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = DEFAULT_REGENCIES)]
        regencies: usize,
        #[arg(long)]
        magnitude: Option<f64>,
    },
    /// Replay the command log and print its state hash.
    Replay,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", json!({ "error": e.kind(), "message": e.to_string() }));
            ExitCode::from(1)
        }
    }
}

fn run(cli: &Cli) -> Result<String, ServiceError> {
    let data = DataDir::new(&cli.data);
    match &cli.command {
        Cmd::Serve {
            listen,
            token,
            refresh_secs,
        } => server::serve(&data, listen, token.clone(), *refresh_secs).map(|()| String::new()),
        Cmd::Ingest {
            regions,
            catalog,
            warnings,
        } => ingest(&data, regions, catalog, warnings.as_deref(), cli.json),
        Cmd::Assess { warning_id } => {
            let (state, _) = replay_log(&read_log(&data)?)?;
            let assessment = state
                .assessments
                .get(warning_id)
                .ok_or_else(|| ServiceError::UnknownWarning(warning_id.clone()))?;
            let escalation = state.escalations.get(warning_id);
            Ok(if cli.json {
                line(&json!({ "assessment": assessment, "escalation": escalation }))
            } else {
                render::assessment_text(assessment, escalation)
            })
        }
        Cmd::Olap {
            group_by,
            filters,
            ops,
        } => {
            let query = OlapQuery::parse(group_by, filters, ops)?;
            let mut engine = data.open_engine(system_clock())?;
            let (r, c) = data.source_times();
            engine.refresh_warehouse(r, c)?;
            let cube = engine.olap(&query)?;
            Ok(if cli.json {
                cube.to_json_lines()
            } else {
                cube.to_table()
            })
        }
        Cmd::Simulate {
            seed,
            regencies,
            magnitude,
        } => {
            let report = simulate(&SimulationParams {
                seed: *seed,
                regencies: *regencies,
                magnitude: *magnitude,
            })?;
            Ok(if cli.json {
                line(&report)
            } else {
                report.to_text()
            })
        }
        Cmd::Replay => {
            let (state, seq) = replay_log(&read_log(&data)?)?;
            let hash = state.hash();
            Ok(if cli.json {
                line(&json!({ "events": seq, "state_hash": hash }))
            } else {
                format!("events {seq}\nstate_hash {hash}\n")
            })
        }
    }
}

fn line(v: &impl serde::Serialize) -> String {
    format!("{}\n", serde_json::to_string(v).expect("output serialises"))
}

fn io_error(path: &Path, e: io::Error) -> ServiceError {
    ServiceError::BadRequest(format!("{}: {e}", path.display()))
}

fn read_log(data: &DataDir) -> Result<String, ServiceError> {
    let path = data.log_path();
    match fs::read_to_string(&path) {
        Ok(t) => Ok(t),
        Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(String::new()),
        Err(e) => Err(io_error(&path, e)),
    }
}

/// Copies `from` to `to` unless `to` already holds the same bytes, so an
/// unchanged input keeps its modification time and is not re-extracted.
fn copy_if_changed(from: &Path, to: &Path) -> Result<(), ServiceError> {
    let bytes = fs::read(from).map_err(|e| io_error(from, e))?;
    if fs::read(to).ok().as_deref() != Some(bytes.as_slice()) {
        fs::write(to, bytes).map_err(|e| io_error(to, e))?;
    }
    Ok(())
}

fn ingest(
    data: &DataDir,
    regions: &Path,
    catalog: &Path,
    warnings: Option<&Path>,
    as_json: bool,
) -> Result<String, ServiceError> {
    let reference = load_reference_dir(regions)?;
    let catalog_load = load_historical_catalog(catalog)?;
    fs::create_dir_all(data.root()).map_err(|e| io_error(data.root(), e))?;
    for f in [PROVINCES_FILE, REGENCIES_FILE, CONFIG_FILE] {
        copy_if_changed(&regions.join(f), &data.root().join(f))?;
    }
    copy_if_changed(catalog, &data.root().join(CATALOG_FILE))?;
    for e in &catalog_load.errors {
        eprintln!("{}: line {}: {}", catalog.display(), e.line, e.reason);
    }

    let mut engine = data.open_engine(system_clock())?;
    let (r, c) = data.source_times();
    let etl = engine.refresh_warehouse(r, c)?;

    let mut feed = json!({ "read": 0, "accepted": 0, "rejected": 0, "duplicates": 0, "failed": 0 });
    if let Some(path) = warnings {
        let file = fs::File::open(path).map_err(|e| io_error(path, e))?;
        let parsed = parse_warning_feed(BufReader::new(file)).map_err(|e| io_error(path, e))?;
        for e in &parsed.errors {
            eprintln!("{}: line {}: {}", path.display(), e.line, e.reason);
        }
        let (mut accepted, mut duplicates, mut failed) = (0u64, 0u64, 0u64);
        for w in parsed.warnings {
            let id = w.id().to_owned();
            match engine.ingest_warning(w) {
                Ok(_) => accepted += 1,
                Err(ServiceError::DuplicateWarning(_)) => duplicates += 1,
                Err(e @ ServiceError::LogWrite(_)) => return Err(e),
                Err(e) => {
                    eprintln!("{}: warning {id}: {e}", path.display());
                    failed += 1;
                }
            }
        }
        feed = json!({
            "read": accepted + duplicates + failed + parsed.errors.len() as u64,
            "accepted": accepted,
            "rejected": parsed.errors.len(),
            "duplicates": duplicates,
            "failed": failed,
        });
    }

    let stats = |s: Option<quake_dss::warehouse::LoadStats>| {
        s.map_or(
            json!({ "inserted": 0, "updated": 0, "dimensions_upserted": 0 }),
            |s| json!(s),
        )
    };
    let report = json!({
        "provinces": reference.provinces.len(),
        "regencies": reference.regencies.len(),
        "catalog": { "loaded": catalog_load.quakes.len(), "rejected": catalog_load.errors.len() },
        "warehouse": {
            "regions": stats(etl.regions),
            "catalog": stats(etl.catalog),
            "skipped_quakes": etl.skipped_quakes,
            "facts": engine.warehouse().fact_count(),
        },
        "warnings": feed,
        "log_sequence": engine.seq(),
    });
    Ok(if as_json {
        line(&report)
    } else {
        render::ingest_text(&report)
    })
}

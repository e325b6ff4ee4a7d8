//! HTTP adapter: every request goes through one fallback handler into the
//! library's request router.

use std::io::Write as _;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::State;
use axum::http::header::{AUTHORIZATION, CONTENT_TYPE};
use axum::http::{HeaderMap, HeaderValue, Method, StatusCode, Uri};
use axum::response::{IntoResponse, Response};
use axum::Router;

use quake_dss::service::{system_clock, Api, ApiRequest, DataDir, ServiceError, SEQUENCE_HEADER};

fn io_failure(e: std::io::Error) -> ServiceError {
    ServiceError::BadRequest(format!("server: {e}"))
}

pub fn serve(
    data: &DataDir,
    listen: &str,
    token: Option<String>,
    refresh_secs: u64,
) -> Result<(), ServiceError> {
    let mut engine = data.open_engine(system_clock())?;
    let (r, c) = data.source_times();
    engine.refresh_warehouse(r, c)?;
    let api = Arc::new(Api::new(engine, token, Some(data.outbox())));

    let runtime = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(io_failure)?;
    runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind(listen)
            .await
            .map_err(io_failure)?;
        let addr = listener.local_addr().map_err(io_failure)?;
        println!("listening on {addr}");
        let _ = std::io::stdout().flush();

        if refresh_secs > 0 {
            tokio::spawn(refresh_loop(api.clone(), data.clone(), refresh_secs));
        }
        let app = Router::new().fallback(handle).with_state(api);
        axum::serve(listener, app)
            .with_graceful_shutdown(shutdown_signal())
            .await
            .map_err(io_failure)
    })
}

async fn handle(
    State(api): State<Arc<Api>>,
    method: Method,
    uri: Uri,
    headers: HeaderMap,
    body: Bytes,
) -> Response {
    let query = form_urlencoded::parse(uri.query().unwrap_or("").as_bytes())
        .into_owned()
        .collect();
    let bearer = headers
        .get(AUTHORIZATION)
        .and_then(|v| v.to_str().ok())
        .and_then(|v| v.strip_prefix("Bearer "))
        .map(|t| t.trim().to_owned());
    let request = ApiRequest {
        method: method.as_str().to_owned(),
        path: uri.path().to_owned(),
        query,
        body: String::from_utf8_lossy(&body).into_owned(),
        bearer,
    };
    let response = match tokio::task::spawn_blocking(move || api.handle(&request)).await {
        Ok(r) => r,
        Err(_) => return StatusCode::INTERNAL_SERVER_ERROR.into_response(),
    };
    let status = StatusCode::from_u16(response.status).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    let mut out = (
        status,
        [(CONTENT_TYPE, "application/json")],
        response.body.to_string(),
    )
        .into_response();
    out.headers_mut()
        .insert(SEQUENCE_HEADER, HeaderValue::from(response.seq));
    out
}

/// Reloads inputs and runs ETL whenever a source file is newer than its
/// warehouse watermark.
async fn refresh_loop(api: Arc<Api>, data: DataDir, every_secs: u64) {
    let mut ticker = tokio::time::interval(Duration::from_secs(every_secs));
    ticker.tick().await;
    loop {
        ticker.tick().await;
        let (api, data) = (api.clone(), data.clone());
        let _ = tokio::task::spawn_blocking(move || refresh_once(&api, &data)).await;
    }
}

fn refresh_once(api: &Api, data: &DataDir) {
    let (regions_at, catalog_at) = data.source_times();
    let stale = {
        let engine = api.engine();
        let wh = engine.warehouse();
        regions_at
            > wh.watermark(quake_dss::service::REGIONS_SOURCE)
                .last_extracted_at
            || catalog_at
                > wh.watermark(quake_dss::service::CATALOG_SOURCE)
                    .last_extracted_at
    };
    if !stale {
        return;
    }
    let inputs = data.reference().and_then(|r| Ok((r, data.catalog()?)));
    let result = inputs.and_then(|(reference, catalog)| {
        api.with_engine_mut(|e| {
            e.set_inputs(reference, catalog);
            e.refresh_warehouse(regions_at, catalog_at)
        })
    });
    match result {
        Ok(report) => eprintln!("warehouse refresh: {}", serde_json::json!(report)),
        Err(e) => eprintln!("warehouse refresh failed: {e}"),
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let terminate = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let terminate = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = terminate => {},
    }
}

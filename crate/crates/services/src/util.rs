use std::future::Future;
use std::net::SocketAddr;
use std::time::{SystemTime, UNIX_EPOCH};

use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::{Json, Router};
use tokio::net::TcpListener;
use tokio::task::JoinHandle;

use crate::api::ErrorBody;

pub fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

#[derive(Debug)]
pub struct ApiError {
    pub status: StatusCode,
    pub body: ErrorBody,
}

impl ApiError {
    pub fn new(status: StatusCode, error: &str, message: impl Into<String>) -> Self {
        ApiError { status, body: ErrorBody { error: error.into(), message: message.into(), details: vec![] } }
    }

    pub fn bad_request(message: impl Into<String>) -> Self {
        Self::new(StatusCode::BAD_REQUEST, "bad_request", message)
    }

    pub fn not_found(message: impl Into<String>) -> Self {
        Self::new(StatusCode::NOT_FOUND, "not_found", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Self::new(StatusCode::INTERNAL_SERVER_ERROR, "internal", message)
    }

    pub fn with_details(mut self, details: Vec<String>) -> Self {
        self.body.details = details;
        self
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(self.body)).into_response()
    }
}

/// Binds `listen` (port 0 picks one) and serves until `shutdown` resolves.
pub async fn serve(
    router: Router,
    listen: &str,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> std::io::Result<(SocketAddr, JoinHandle<std::io::Result<()>>)> {
    let listener = bind(listen).await?;
    let local = listener.local_addr()?;
    Ok((local, serve_on(router, listener, shutdown)))
}

pub async fn bind(listen: &str) -> std::io::Result<TcpListener> {
    TcpListener::bind(normalize_listen(listen)).await
}

pub fn serve_on(
    router: Router,
    listener: TcpListener,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> JoinHandle<std::io::Result<()>> {
    tokio::spawn(async move { axum::serve(listener, router).with_graceful_shutdown(shutdown).await })
}

/// `:8440` means all interfaces.
pub fn normalize_listen(listen: &str) -> String {
    if listen.starts_with(':') {
        format!("0.0.0.0{listen}")
    } else {
        listen.to_string()
    }
}

/// Resolves on Ctrl-C or SIGTERM.
pub async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending::<()>().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {}
        _ = term => {}
    }
}

#[derive(serde::Serialize, serde::Deserialize)]
struct KeyFile {
    scheme: mtc_core::signature::SchemeId,
    seed: String,
}

/// Loads `{scheme, seed}` from `path`, generating and saving a fresh key
/// when the file does not exist.
pub fn load_or_create_key(
    path: &std::path::Path,
    scheme: mtc_core::signature::SchemeId,
) -> std::io::Result<mtc_core::signature::KeyPair> {
    use mtc_core::signature::KeyPair;
    let invalid = |m: String| std::io::Error::new(std::io::ErrorKind::InvalidData, m);
    match std::fs::read(path) {
        Ok(bytes) => {
            let f: KeyFile = serde_json::from_slice(&bytes).map_err(|e| invalid(e.to_string()))?;
            let seed: [u8; 32] = hex::decode(&f.seed)
                .ok()
                .and_then(|s| s.try_into().ok())
                .ok_or_else(|| invalid(format!("{}: seed must be 32 hex bytes", path.display())))?;
            KeyPair::from_seed(f.scheme, &seed).map_err(|e| invalid(e.to_string()))
        }
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            let key = KeyPair::generate(scheme);
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            let body = serde_json::to_vec_pretty(&KeyFile { scheme, seed: hex::encode(key.seed()) }).expect("key serializes");
            std::fs::write(path, body)?;
            #[cfg(unix)]
            {
                use std::os::unix::fs::PermissionsExt;
                std::fs::set_permissions(path, std::fs::Permissions::from_mode(0o600))?;
            }
            Ok(key)
        }
        Err(e) => Err(e),
    }
}

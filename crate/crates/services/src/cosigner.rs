//! Witness cosigner over HTTP.
//!
//! `POST /cosign` returns 200 with `{cosignature}` or 409 with
//! `{refusal, reason, last_size}`.

use std::path::PathBuf;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mtc_core::codec::TrustAnchorId;
use mtc_core::cosigner::{Cosigner, Refusal};
use mtc_core::signature::KeyPair;
use mtc_core::trust::{CosignerMode, TrustedCosigner};

use crate::api::*;

pub struct WitnessConfig {
    pub id: TrustAnchorId,
    pub key: KeyPair,
    /// In-memory state when `None`.
    pub data_dir: Option<PathBuf>,
}

#[derive(Clone)]
pub struct WitnessService {
    inner: Arc<Mutex<Cosigner>>,
}

impl WitnessService {
    pub fn open(config: WitnessConfig) -> std::io::Result<Self> {
        let c = match &config.data_dir {
            Some(dir) => Cosigner::open(dir, config.id, CosignerMode::Witness, config.key)?,
            None => Cosigner::new(config.id, CosignerMode::Witness, config.key),
        };
        Ok(WitnessService { inner: Arc::new(Mutex::new(c)) })
    }

    pub fn state(&self) -> CosignerState {
        let c = self.inner.lock().unwrap();
        CosignerState { info: c.info(), last_signed: c.last_signed(), frozen: None }
    }

    pub fn router(&self) -> Router {
        Router::new()
            .route("/cosign", post(cosign))
            .route("/cosign-subtree", post(cosign_subtree))
            .route("/cosigner-info", get(info))
            .route("/state", get(state))
            .with_state(self.clone())
    }
}

pub fn refusal_response(r: &Refusal, last_size: Option<u64>) -> Response {
    let body = CosignResponse::Refused { refusal: r.code().into(), reason: r.to_string(), last_size };
    let status = match r {
        Refusal::Storage(_) => StatusCode::SERVICE_UNAVAILABLE,
        _ => StatusCode::CONFLICT,
    };
    (status, Json(body)).into_response()
}

async fn cosign(State(s): State<WitnessService>, Json(req): Json<CosignRequest>) -> Response {
    let mut c = s.inner.lock().unwrap();
    match c.witness_cosign(&req.checkpoint, &req.consistency_proof) {
        Ok(cosignature) => {
            tracing::info!(size = req.checkpoint.size, ops = c.last_hash_ops(), "cosigned");
            Json(CosignResponse::Signed { cosignature }).into_response()
        }
        Err(r) => {
            tracing::warn!(size = req.checkpoint.size, refusal = r.code(), "refused");
            refusal_response(&r, c.last_signed().map(|cp| cp.size))
        }
    }
}

async fn cosign_subtree(State(s): State<WitnessService>, Json(req): Json<SubtreeCosignRequest>) -> Response {
    let mut c = s.inner.lock().unwrap();
    match c.sign_subtree(&req.range, &req.root, &req.containment, &req.within) {
        Ok(sig) => Json(sig).into_response(),
        Err(r) => refusal_response(&r, c.last_signed().map(|cp| cp.size)),
    }
}

async fn info(State(s): State<WitnessService>) -> Json<TrustedCosigner> {
    Json(s.inner.lock().unwrap().info())
}

async fn state(State(s): State<WitnessService>) -> Json<CosignerState> {
    Json(s.state())
}

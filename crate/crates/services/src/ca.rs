//! The MTC certificate authority over HTTP.
//!
//! | Method | Path | Body / query | Response |
//! |---|---|---|---|
//! | POST | `/issue-cert` | [`IssueRequest`] | [`IssueResponse`] |
//! | GET | `/trust-config` | | [`TrustConfig`] |
//! | GET | `/landmark-sequence` | | `text/plain` sequence document |
//! | POST | `/revoke` | [`RevokeRequest`] | [`RevokeResponse`] |
//! | GET | `/landmark-cert` | `index`, optional `number` | [`LandmarkCertResponse`] |
//! | GET | `/checkpoint` | | latest cosigned [`SignedCheckpoint`] |
//! | GET | `/entries` | `start`, `count` (at most 1024) | [`EntriesResponse`] |
//! | POST | `/allocate-landmark` | [`AdminRequest`] | [`AllocateResponse`] |
//!
//! Issuance is serialized by one async lock. The authority itself sits
//! behind a short-held `RwLock` so readers, including mirrors syncing
//! during a quorum round, never wait on cosigners.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mtc_core::authority::{Authority, IssueError, IssueRequest};
use mtc_core::codec::{encode_certificate, encode_entry, Cosignature, TrustAnchorId};
use mtc_core::landmark::SignedCheckpoint;
use mtc_core::merkle::{empty_root, Checkpoint};
use mtc_core::trust::{CosignerMode, TrustConfig, TrustedCosigner};
use serde::Deserialize;
use tokio::sync::Mutex as AsyncMutex;
use tokio::task::JoinSet;

use crate::api::*;
use crate::client::{ClientError, CosignerClient};
use crate::util::{unix_now, ApiError};

pub const MAX_ENTRIES_PAGE: u64 = 1024;

#[derive(Clone, Debug)]
pub struct RemoteCosigner {
    pub info: TrustedCosigner,
    pub client: CosignerClient,
}

/// Fetches `/cosigner-info` from every URL, retrying each a few times so
/// cosigners started alongside the CA have time to come up.
pub async fn discover_cosigners(urls: &[String], timeout: Duration) -> Result<Vec<RemoteCosigner>, ClientError> {
    let mut out = Vec::new();
    for url in urls {
        let client = CosignerClient::new(url, timeout);
        let mut attempt = 0;
        let info = loop {
            match client.info().await {
                Ok(info) => break info,
                Err(e) if attempt < 20 => {
                    tracing::debug!(%url, error = %e, "cosigner not reachable yet");
                    attempt += 1;
                    tokio::time::sleep(Duration::from_millis(250)).await;
                }
                Err(e) => return Err(e),
            }
        };
        out.push(RemoteCosigner { info, client });
    }
    Ok(out)
}

/// Fault switches for exercising the fail-closed paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct FailInject {
    /// Leave each newly issued entry out of `/entries`.
    pub withhold_entry: bool,
}

pub struct CaService {
    authority: RwLock<Authority>,
    issuance: AsyncMutex<HashMap<TrustAnchorId, u64>>,
    cosigners: Vec<RemoteCosigner>,
    cosign_timeout: Duration,
    fail_inject: FailInject,
    withheld: RwLock<Vec<u64>>,
    clock: Box<dyn Fn() -> u64 + Send + Sync>,
}

pub type SharedCa = Arc<CaService>;

impl CaService {
    pub fn new(authority: Authority, cosigners: Vec<RemoteCosigner>, cosign_timeout: Duration) -> Self {
        CaService {
            authority: RwLock::new(authority),
            issuance: AsyncMutex::new(HashMap::new()),
            cosigners,
            cosign_timeout,
            fail_inject: FailInject::default(),
            withheld: RwLock::new(Vec::new()),
            clock: Box::new(unix_now),
        }
    }

    pub fn with_fail_inject(mut self, f: FailInject) -> Self {
        self.fail_inject = f;
        self
    }

    pub fn with_clock(mut self, clock: impl Fn() -> u64 + Send + Sync + 'static) -> Self {
        self.clock = Box::new(clock);
        self
    }

    pub fn now(&self) -> u64 {
        (self.clock)()
    }

    pub fn read<R>(&self, f: impl FnOnce(&Authority) -> R) -> R {
        f(&self.authority.read().unwrap())
    }

    pub fn write<R>(&self, f: impl FnOnce(&mut Authority) -> R) -> R {
        f(&mut self.authority.write().unwrap())
    }

    /// Appends the entry, gathers cosignatures concurrently and returns the
    /// standalone certificate, or revokes the index and fails closed.
    pub async fn issue(&self, req: &IssueRequest) -> Result<IssueResponse, IssueError> {
        let mut last_sizes = self.issuance.lock().await;
        let now = self.now();
        let pending = self.write(|a| a.begin_issue(req, now))?;
        if self.fail_inject.withhold_entry {
            self.withheld.write().unwrap().push(pending.index);
        }
        let sigs = self.gather(&pending.checkpoint, &mut last_sizes).await;
        let cert = self.write(|a| a.finish_issue(pending.index, sigs))?;
        let bytes = encode_certificate(&cert)?;
        tracing::info!(index = pending.index, size = pending.checkpoint.size, "issued");
        Ok(IssueResponse { index: pending.index, certificate: hex::encode(bytes), checkpoint_size: pending.checkpoint.size })
    }

    /// Cosigns the current tree if it has grown past the last cosigned
    /// checkpoint. Returns whether a new checkpoint was recorded.
    pub async fn checkpoint_tick(&self) -> Result<bool, IssueError> {
        let mut last_sizes = self.issuance.lock().await;
        let cp = self.read(|a| {
            let cosigned = a.cosigned().map_or(0, |c| c.size);
            (a.size() > cosigned).then(|| a.log().checkpoint())
        });
        let Some(cp) = cp else { return Ok(false) };
        let sigs = self.gather(&cp, &mut last_sizes).await;
        self.write(|a| a.record_cosigned(SignedCheckpoint { root: cp.root, size: cp.size, cosignatures: sigs }))
    }

    pub fn allocate_landmark(&self) -> Result<AllocateResponse, IssueError> {
        let now = self.now();
        let rec = self.write(|a| a.allocate_landmark(now))?;
        if let Some(r) = &rec {
            tracing::info!(number = r.number, tree_size = r.tree_size, "landmark allocated");
        }
        Ok(AllocateResponse { number: rec.as_ref().map(|r| r.number), tree_size: rec.map(|r| r.tree_size) })
    }

    /// One concurrent round over every cosigner, with a single retry for
    /// witnesses whose last signed size we had wrong.
    async fn gather(&self, cp: &Checkpoint, last_sizes: &mut HashMap<TrustAnchorId, u64>) -> Vec<Cosignature> {
        let mut set = JoinSet::new();
        // A snapshot lets tasks rebuild a proof from the size a witness
        // reports without touching the lock.
        let log = Arc::new(self.read(|a| a.log().clone()));
        for c in &self.cosigners {
            let proof_from = |old: u64| self.read(|a| a.consistency_proof(old, cp.size).ok());
            let old = last_sizes.get(&c.info.id).copied().unwrap_or(0);
            let proof = if c.info.mode == CosignerMode::Witness { proof_from(old) } else { Some(Default::default()) };
            let Some(proof) = proof else { continue };
            let client = c.client.clone();
            let id = c.info.id.clone();
            let cp = *cp;
            let timeout = self.cosign_timeout;
            let log = log.clone();
            set.spawn(async move {
                let attempt = |proof| tokio::time::timeout(timeout, client.cosign(cp, proof));
                let mut resp = attempt(proof).await;
                if let Ok(Ok(CosignResponse::Refused { refusal, last_size: Some(last), .. })) = &resp {
                    let retry = (refusal == "bad_proof" || refusal == "fork_detected") && *last != old && *last <= cp.size;
                    if retry {
                        if let Ok(p) = log.consistency_proof(*last, cp.size) {
                            resp = attempt(p).await;
                        }
                    }
                }
                (id, resp)
            });
        }
        let mut sigs = Vec::new();
        while let Some(joined) = set.join_next().await {
            let Ok((id, resp)) = joined else { continue };
            match resp {
                Ok(Ok(CosignResponse::Signed { cosignature })) => {
                    last_sizes.insert(id, cp.size);
                    sigs.push(cosignature);
                }
                Ok(Ok(CosignResponse::Refused { refusal, reason, last_size })) => {
                    tracing::warn!(cosigner = %id, %refusal, %reason, "cosigner refused");
                    if let Some(l) = last_size {
                        last_sizes.insert(id, l);
                    }
                }
                Ok(Err(e)) => tracing::warn!(cosigner = %id, error = %e, "cosigner unreachable"),
                Err(_) => tracing::warn!(cosigner = %id, "cosigner timed out"),
            }
        }
        // Deterministic order keeps encoded certificates reproducible.
        sigs.sort_by(|a, b| a.cosigner_id.components().cmp(b.cosigner_id.components()));
        sigs
    }

    pub fn router(self: &Arc<Self>) -> Router {
        Router::new()
            .route("/issue-cert", post(issue_cert))
            .route("/trust-config", get(trust_config))
            .route("/landmark-sequence", get(landmark_sequence))
            .route("/revoke", post(revoke))
            .route("/landmark-cert", get(landmark_cert))
            .route("/checkpoint", get(checkpoint))
            .route("/entries", get(entries))
            .route("/allocate-landmark", post(allocate))
            .with_state(self.clone())
    }

    /// Spawns the landmark and checkpoint tickers.
    pub fn spawn_tickers(self: &Arc<Self>, landmark_every: Duration, checkpoint_every: Duration) -> Vec<tokio::task::JoinHandle<()>> {
        let ca = self.clone();
        let landmarks = tokio::spawn(async move {
            let mut tick = tokio::time::interval(landmark_every);
            tick.tick().await;
            loop {
                tick.tick().await;
                if let Err(e) = ca.allocate_landmark() {
                    tracing::error!(error = %e, "landmark allocation failed");
                }
            }
        });
        let ca = self.clone();
        let checkpoints = tokio::spawn(async move {
            let mut tick = tokio::time::interval(checkpoint_every);
            loop {
                tick.tick().await;
                if let Err(e) = ca.checkpoint_tick().await {
                    tracing::error!(error = %e, "checkpoint cosigning failed");
                }
            }
        });
        vec![landmarks, checkpoints]
    }
}

impl From<IssueError> for ApiError {
    fn from(e: IssueError) -> Self {
        let (status, code) = match &e {
            IssueError::Unauthorized => (StatusCode::UNAUTHORIZED, "unauthorized"),
            IssueError::Invalid(_) => (StatusCode::BAD_REQUEST, "invalid_request"),
            IssueError::QuorumUnavailable { .. } => (StatusCode::SERVICE_UNAVAILABLE, "quorum_unavailable"),
            IssueError::NotReady(_) => (StatusCode::NOT_FOUND, "not_ready"),
            IssueError::UnknownLandmark(_) => (StatusCode::NOT_FOUND, "unknown_landmark"),
            IssueError::Revoked(_) => (StatusCode::GONE, "revoked"),
            IssueError::UnknownIndex(_) => (StatusCode::NOT_FOUND, "unknown_index"),
            IssueError::BadRange { .. } => (StatusCode::BAD_REQUEST, "bad_range"),
            IssueError::NotPending(_) => (StatusCode::CONFLICT, "not_pending"),
            IssueError::Log(_) | IssueError::Storage(_) => (StatusCode::INTERNAL_SERVER_ERROR, "storage"),
        };
        ApiError::new(status, code, e.to_string())
    }
}

fn check_token(ca: &CaService, token: &str) -> Result<(), ApiError> {
    let expected = ca.read(|a| a.policy().admission_token.clone());
    let eq = token.len() == expected.len() && token.bytes().zip(expected.bytes()).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0;
    if eq {
        Ok(())
    } else {
        Err(IssueError::Unauthorized.into())
    }
}

async fn issue_cert(State(ca): State<SharedCa>, Json(req): Json<IssueRequest>) -> Result<Json<IssueResponse>, ApiError> {
    Ok(Json(ca.issue(&req).await?))
}

async fn trust_config(State(ca): State<SharedCa>) -> Json<TrustConfig> {
    Json(ca.read(|a| a.config().clone()))
}

async fn landmark_sequence(State(ca): State<SharedCa>) -> Response {
    let doc = ca.read(|a| a.landmark_sequence().format());
    ([(header::CONTENT_TYPE, "text/plain; charset=utf-8")], doc).into_response()
}

async fn revoke(State(ca): State<SharedCa>, Json(req): Json<RevokeRequest>) -> Result<Json<RevokeResponse>, ApiError> {
    check_token(&ca, &req.admission_token)?;
    // Serialized with issuance: both change what the next sequence says.
    let _guard = ca.issuance.lock().await;
    let revoked = ca.write(|a| a.revoke(req.lo, req.hi).cloned())?;
    tracing::info!(lo = req.lo, hi = req.hi, "revoked");
    Ok(Json(RevokeResponse { revoked }))
}

#[derive(Deserialize)]
struct LandmarkCertQuery {
    index: u64,
    number: Option<u64>,
}

async fn landmark_cert(State(ca): State<SharedCa>, Query(q): Query<LandmarkCertQuery>) -> Result<Json<LandmarkCertResponse>, ApiError> {
    let (number, cert, base) = ca.read(|a| {
        a.landmark_certificate(q.index, q.number).map(|(n, c)| (n, c, a.config().landmark_base.clone()))
    })?;
    let bytes = encode_certificate(&cert).map_err(IssueError::from)?;
    Ok(Json(LandmarkCertResponse { number, landmark_id: base.child(number), certificate: hex::encode(bytes) }))
}

async fn checkpoint(State(ca): State<SharedCa>) -> Json<SignedCheckpoint> {
    Json(ca.read(|a| a.cosigned().cloned()).unwrap_or(SignedCheckpoint { root: empty_root(), size: 0, cosignatures: vec![] }))
}

#[derive(Deserialize)]
struct EntriesQuery {
    start: u64,
    count: u64,
}

async fn entries(State(ca): State<SharedCa>, Query(q): Query<EntriesQuery>) -> Result<Json<EntriesResponse>, ApiError> {
    let withheld = ca.withheld.read().unwrap().clone();
    ca.read(|a| {
        if q.start > a.size() {
            return Err(ApiError::bad_request(format!("start {} is beyond log size {}", q.start, a.size())));
        }
        let end = a.size().min(q.start.saturating_add(q.count.min(MAX_ENTRIES_PAGE)));
        let mut out = Vec::new();
        for i in q.start..end {
            if withheld.contains(&i) {
                out.push(None);
                continue;
            }
            let e = a.entry(i).ok_or_else(|| ApiError::internal(format!("entry {i} missing")))?;
            out.push(Some(hex::encode(encode_entry(&e.entry).map_err(|e| ApiError::internal(e.to_string()))?)));
        }
        Ok(Json(EntriesResponse { start: q.start, entries: out }))
    })
}

async fn allocate(State(ca): State<SharedCa>, Json(req): Json<AdminRequest>) -> Result<Json<AllocateResponse>, ApiError> {
    check_token(&ca, &req.admission_token)?;
    Ok(Json(ca.allocate_landmark()?))
}

//! Full log replica with the tile and proof API, optionally cosigning as a
//! mirror.
//!
//! | Method | Path | Response |
//! |---|---|---|
//! | GET | `/tile/{L}/{N}` | up to 256 concatenated 32-byte hashes of tree level `8L` |
//! | GET | `/checkpoint` | latest verified [`SignedCheckpoint`] |
//! | GET | `/entry/{index}` | [`EntryResponse`] |
//! | GET | `/proof/inclusion?index=&start=&end=` | [`InclusionProof`] |
//! | GET | `/proof/consistency?old=&new=` | [`ConsistencyProof`] |
//! | GET | `/subtree?start=&end=&size=` | [`SubtreeResponse`] |
//! | POST | `/cosign` | [`CosignResponse`], mirror mode only |
//! | POST | `/sync` | [`MirrorStatus`] after syncing from the CA |
//! | GET | `/state`, `/cosigner-info` | [`MirrorStatus`], [`TrustedCosigner`] |
//!
//! A data directory holds `log/`, `entries.jsonl` (hex entries in index
//! order), `checkpoint.json` and, when cosigning, `cosigner/`.

use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::PathBuf;
use std::sync::{Arc, RwLock};
use std::time::Duration;

use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use mtc_core::cosigner::{Cosigner, Refusal};
use mtc_core::landmark::SignedCheckpoint;
use mtc_core::merkle::{
    empty_root, leaf_hash, Checkpoint, ConsistencyProof, InclusionProof, LeafHash, LeafSource, MerkleLog, SubtreeRange,
};
use mtc_core::trust::TrustedCosigner;
use serde::Deserialize;
use tokio::sync::Mutex as AsyncMutex;

use crate::api::*;
use crate::client::{CaClient, ClientError};
use crate::cosigner::refusal_response;
use crate::ca::MAX_ENTRIES_PAGE;
use crate::util::ApiError;

pub const TILE_HEIGHT: u32 = 8;
pub const TILE_WIDTH: u64 = 1 << TILE_HEIGHT;

#[derive(Debug, thiserror::Error)]
pub enum SyncError {
    #[error(transparent)]
    Source(#[from] ClientError),
    #[error("entry {0} is unavailable from the CA")]
    EntryUnavailable(u64),
    #[error("replayed root does not match the CA checkpoint at size {0}")]
    RootMismatch(u64),
    #[error("CA checkpoint at size {0} conflicts with the replica")]
    Fork(u64),
    #[error("mirror is frozen: {0}")]
    Frozen(String),
    #[error("bad entry from CA: {0}")]
    BadEntry(String),
    #[error("replica storage: {0}")]
    Storage(String),
}

impl SyncError {
    fn refusal(&self) -> Refusal {
        match self {
            SyncError::EntryUnavailable(i) => Refusal::EntryUnavailable(*i),
            SyncError::RootMismatch(_) => Refusal::RootMismatch,
            SyncError::Fork(_) | SyncError::Frozen(_) => Refusal::ForkDetected,
            SyncError::Source(ClientError::Transport { .. }) => Refusal::EntryUnavailable(0),
            e => Refusal::Storage(e.to_string()),
        }
    }
}

struct Replica {
    log: MerkleLog,
    entries: Vec<Vec<u8>>,
    verified: SignedCheckpoint,
    cosigner: Option<Cosigner>,
    frozen: Option<String>,
    dir: Option<PathBuf>,
}

/// A replay view: the committed replica followed by fetched, not yet
/// committed leaves.
struct Staged<'a> {
    base: &'a MerkleLog,
    extra: &'a [Option<LeafHash>],
}

impl LeafSource for Staged<'_> {
    fn leaf_at(&self, index: u64) -> Option<LeafHash> {
        if index < self.base.size() {
            self.base.leaf_at(index)
        } else {
            self.extra.get((index - self.base.size()) as usize).copied().flatten()
        }
    }
}

pub struct MirrorConfig {
    pub ca_url: String,
    pub data_dir: Option<PathBuf>,
    /// Enables `POST /cosign`.
    pub cosigner: Option<Cosigner>,
    pub timeout: Duration,
}

pub struct MirrorService {
    replica: RwLock<Replica>,
    sync_lock: AsyncMutex<()>,
    ca: CaClient,
}

pub type SharedMirror = Arc<MirrorService>;

impl MirrorService {
    pub fn open(config: MirrorConfig) -> io::Result<Self> {
        let mut replica = Replica {
            log: MerkleLog::new(),
            entries: Vec::new(),
            verified: SignedCheckpoint { root: empty_root(), size: 0, cosignatures: vec![] },
            cosigner: config.cosigner,
            frozen: None,
            dir: config.data_dir.clone(),
        };
        if let Some(dir) = &config.data_dir {
            fs::create_dir_all(dir)?;
            let data = |e: String| io::Error::new(io::ErrorKind::InvalidData, e);
            replica.log = MerkleLog::open(dir.join("log")).map_err(|e| data(e.to_string()))?;
            if let Ok(f) = fs::File::open(dir.join("entries.jsonl")) {
                for line in io::BufReader::new(f).lines() {
                    let Ok(bytes) = hex::decode(line?.trim()) else { break };
                    replica.entries.push(bytes);
                }
            }
            if (replica.entries.len() as u64) < replica.log.size() {
                return Err(data(format!("replica has {} leaves but {} entries", replica.log.size(), replica.entries.len())));
            }
            replica.entries.truncate(replica.log.size() as usize);
            for (i, e) in replica.entries.iter().enumerate() {
                if replica.log.leaf(i as u64).ok() != Some(leaf_hash(e)) {
                    return Err(data(format!("replica entry {i} does not match its leaf")));
                }
            }
            let cp = replica.log.checkpoint();
            replica.verified = match fs::read(dir.join("checkpoint.json")) {
                Ok(b) => match serde_json::from_slice::<SignedCheckpoint>(&b) {
                    Ok(s) if s.checkpoint() == cp => s,
                    _ => SignedCheckpoint { root: cp.root, size: cp.size, cosignatures: vec![] },
                },
                Err(_) => SignedCheckpoint { root: cp.root, size: cp.size, cosignatures: vec![] },
            };
        }
        Ok(MirrorService { replica: RwLock::new(replica), sync_lock: AsyncMutex::new(()), ca: CaClient::new(&config.ca_url, config.timeout) })
    }

    pub fn status(&self) -> MirrorStatus {
        let r = self.replica.read().unwrap();
        MirrorStatus {
            synced_size: r.log.size(),
            checkpoint: r.verified.checkpoint(),
            cosigner: r.cosigner.as_ref().map(Cosigner::info),
            frozen: r.frozen.clone(),
        }
    }

    pub fn checkpoint(&self) -> SignedCheckpoint {
        self.replica.read().unwrap().verified.clone()
    }

    /// Syncs to the CA's latest cosigned checkpoint.
    pub async fn sync(&self) -> Result<MirrorStatus, SyncError> {
        let _g = self.sync_lock.lock().await;
        let target = self.ca.checkpoint().await?;
        self.sync_to(&target).await?;
        Ok(self.status())
    }

    async fn fetch(&self, from: u64, to: u64) -> Result<(Vec<Option<Vec<u8>>>, Vec<Option<LeafHash>>), SyncError> {
        let mut bytes = Vec::new();
        while from + (bytes.len() as u64) < to {
            let start = from + bytes.len() as u64;
            let page = self.ca.entries(start, (to - start).min(MAX_ENTRIES_PAGE)).await?;
            if page.start != start || page.entries.is_empty() {
                return Err(SyncError::BadEntry(format!("CA returned no entries at {start}")));
            }
            for e in page.entries.into_iter().take((to - start) as usize) {
                bytes.push(match e {
                    Some(h) => Some(hex::decode(h).map_err(|e| SyncError::BadEntry(e.to_string()))?),
                    None => None,
                });
            }
        }
        let leaves = bytes.iter().map(|b| b.as_deref().map(leaf_hash)).collect();
        Ok((bytes, leaves))
    }

    async fn sync_to(&self, target: &SignedCheckpoint) -> Result<(), SyncError> {
        let (base, frozen) = {
            let r = self.replica.read().unwrap();
            (r.log.size(), r.frozen.clone())
        };
        if let Some(f) = frozen {
            return Err(SyncError::Frozen(f));
        }
        if target.size < base {
            // Behind us; only check it agrees.
            let r = self.replica.read().unwrap();
            if r.log.checkpoint_at(target.size).ok() != Some(target.checkpoint()) {
                drop(r);
                return Err(self.freeze(SyncError::Fork(target.size)));
            }
            return Ok(());
        }
        let (bytes, leaves) = self.fetch(base, target.size).await?;
        if let Some(i) = leaves.iter().position(Option::is_none) {
            return Err(SyncError::EntryUnavailable(base + i as u64));
        }
        let mut r = self.replica.write().unwrap();
        let mut staged = r.log.clone();
        for l in leaves.iter().flatten() {
            staged.append(*l).expect("in-memory append");
        }
        if staged.checkpoint() != target.checkpoint() {
            drop(r);
            return Err(self.freeze(SyncError::RootMismatch(target.size)));
        }
        let mut merged = target.clone();
        if r.verified.size == target.size {
            for c in &r.verified.cosignatures {
                if !merged.cosignatures.iter().any(|d| d.cosigner_id == c.cosigner_id) {
                    merged.cosignatures.push(c.clone());
                }
            }
        }
        commit(&mut r, bytes.into_iter().flatten().collect(), &leaves, merged)?;
        Ok(())
    }

    fn freeze(&self, e: SyncError) -> SyncError {
        tracing::error!(error = %e, "mirror frozen");
        self.replica.write().unwrap().frozen = Some(e.to_string());
        e
    }

    /// Syncs `[synced_size, cp.size)` from the CA, replays, and signs only
    /// if every entry was obtained and the root matches.
    pub async fn cosign(&self, cp: &Checkpoint) -> Result<mtc_core::codec::Cosignature, (Refusal, Option<u64>)> {
        let _g = self.sync_lock.lock().await;
        let (base, frozen, last) = {
            let r = self.replica.read().unwrap();
            let last = r.cosigner.as_ref().and_then(|c| c.last_signed()).map(|c| c.size);
            if r.cosigner.is_none() {
                return Err((Refusal::WrongMode(mtc_core::trust::CosignerMode::Witness), None));
            }
            (r.log.size(), r.frozen.clone(), last)
        };
        if frozen.is_some() {
            return Err((Refusal::ForkDetected, last));
        }
        let (bytes, leaves) = if cp.size > base { self.fetch(base, cp.size).await.map_err(|e| (e.refusal(), last))? } else { (vec![], vec![]) };
        let mut r = self.replica.write().unwrap();
        let Replica { log, cosigner, .. } = &mut *r;
        let cosigner = cosigner.as_mut().expect("checked above");
        let source = Staged { base: log, extra: &leaves };
        let sig = match cosigner.mirror_cosign(cp, &source) {
            Ok(sig) => sig,
            Err(refusal) => {
                if matches!(refusal, Refusal::RootMismatch | Refusal::ForkDetected) {
                    r.frozen = Some(refusal.to_string());
                    tracing::error!(size = cp.size, refusal = refusal.code(), "mirror frozen");
                }
                return Err((refusal, last));
            }
        };
        if cp.size > base {
            let signed = SignedCheckpoint { root: cp.root, size: cp.size, cosignatures: vec![sig.clone()] };
            commit(&mut r, bytes.into_iter().flatten().collect(), &leaves, signed).map_err(|e| (e.refusal(), last))?;
        } else if cp.size == r.verified.size && !r.verified.cosignatures.iter().any(|c| c.cosigner_id == sig.cosigner_id) {
            r.verified.cosignatures.push(sig.clone());
        }
        tracing::info!(size = cp.size, "mirror cosigned");
        Ok(sig)
    }

    pub fn router(self: &Arc<Self>) -> Router {
        Router::new()
            .route("/tile/{level}/{index}", get(tile))
            .route("/checkpoint", get(checkpoint))
            .route("/entry/{index}", get(entry))
            .route("/proof/inclusion", get(inclusion))
            .route("/proof/consistency", get(consistency))
            .route("/subtree", get(subtree))
            .route("/cosign", post(cosign))
            .route("/sync", post(sync_now))
            .route("/state", get(state))
            .route("/cosigner-info", get(cosigner_info))
            .with_state(self.clone())
    }

    pub fn spawn_sync_loop(self: &Arc<Self>, every: Duration) -> tokio::task::JoinHandle<()> {
        let m = self.clone();
        tokio::spawn(async move {
            let mut tick = tokio::time::interval(every);
            loop {
                tick.tick().await;
                match m.sync().await {
                    Ok(_) => {}
                    Err(SyncError::Frozen(_)) => {}
                    Err(e) => tracing::warn!(error = %e, "mirror sync failed"),
                }
            }
        })
    }

    fn read_live<R>(&self, f: impl FnOnce(&Replica) -> Result<R, ApiError>) -> Result<R, ApiError> {
        let r = self.replica.read().unwrap();
        if let Some(why) = &r.frozen {
            return Err(ApiError::new(StatusCode::SERVICE_UNAVAILABLE, "frozen", why.clone()));
        }
        f(&r)
    }
}

fn commit(r: &mut Replica, bytes: Vec<Vec<u8>>, leaves: &[Option<LeafHash>], verified: SignedCheckpoint) -> Result<(), SyncError> {
    let storage = |e: String| SyncError::Storage(e);
    if let Some(dir) = &r.dir {
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join("entries.jsonl")).map_err(|e| storage(e.to_string()))?;
        let mut body = String::new();
        for b in &bytes {
            body.push_str(&hex::encode(b));
            body.push('\n');
        }
        f.write_all(body.as_bytes()).and_then(|_| f.sync_data()).map_err(|e| storage(e.to_string()))?;
    }
    for l in leaves.iter().flatten() {
        r.log.append(*l).map_err(|e| storage(e.to_string()))?;
    }
    r.entries.extend(bytes);
    if let Some(dir) = &r.dir {
        let tmp = dir.join("checkpoint.json.tmp");
        fs::write(&tmp, serde_json::to_vec(&verified).expect("checkpoint serializes"))
            .and_then(|_| fs::rename(&tmp, dir.join("checkpoint.json")))
            .map_err(|e| storage(e.to_string()))?;
    }
    r.verified = verified;
    Ok(())
}

fn log_err(e: impl std::fmt::Display) -> ApiError {
    ApiError::not_found(e.to_string())
}

async fn tile(State(m): State<SharedMirror>, Path((level, index)): Path<(u32, u64)>, headers: HeaderMap) -> Result<Response, ApiError> {
    m.read_live(|r| {
        let height = level.checked_mul(TILE_HEIGHT).filter(|h| *h < 64).ok_or_else(|| ApiError::bad_request("level too large"))?;
        let nodes = r.verified.size >> height;
        let first = index.checked_mul(TILE_WIDTH).ok_or_else(|| ApiError::bad_request("index too large"))?;
        if first >= nodes {
            return Err(ApiError::not_found(format!("tile {level}/{index} is beyond size {}", r.verified.size)));
        }
        let last = nodes.min(first + TILE_WIDTH);
        let mut body = Vec::with_capacity(((last - first) * 32) as usize);
        for j in first..last {
            let range = SubtreeRange::new(j << height, (j + 1) << height).expect("non-empty");
            body.extend_from_slice(&r.log.subtree_root(range).map_err(|e| ApiError::internal(e.to_string()))?.0);
        }
        if last - first < TILE_WIDTH {
            return Ok(([(header::CONTENT_TYPE, "application/octet-stream"), (header::CACHE_CONTROL, "no-store")], body).into_response());
        }
        let etag = format!("\"{}\"", hex::encode(&<sha2::Sha256 as sha2::Digest>::digest(&body)[..16]));
        if headers.get(header::IF_NONE_MATCH).and_then(|v| v.to_str().ok()) == Some(etag.as_str()) {
            return Ok((StatusCode::NOT_MODIFIED, [(header::ETAG, etag)]).into_response());
        }
        Ok((
            [
                (header::CONTENT_TYPE, "application/octet-stream".to_string()),
                (header::CACHE_CONTROL, "public, max-age=31536000, immutable".to_string()),
                (header::ETAG, etag),
            ],
            body,
        )
            .into_response())
    })
}

async fn checkpoint(State(m): State<SharedMirror>) -> Json<SignedCheckpoint> {
    Json(m.checkpoint())
}

async fn entry(State(m): State<SharedMirror>, Path(index): Path<u64>) -> Result<Json<EntryResponse>, ApiError> {
    m.read_live(|r| {
        let e = r.entries.get(index as usize).ok_or_else(|| ApiError::not_found(format!("entry {index} not replicated")))?;
        Ok(Json(EntryResponse { index, entry: hex::encode(e), leaf_hash: leaf_hash(e) }))
    })
}

#[derive(Deserialize)]
struct InclusionQuery {
    index: u64,
    start: u64,
    end: u64,
}

async fn inclusion(State(m): State<SharedMirror>, Query(q): Query<InclusionQuery>) -> Result<Json<InclusionProof>, ApiError> {
    m.read_live(|r| {
        let range = SubtreeRange::new(q.start, q.end).map_err(|e| ApiError::bad_request(e.to_string()))?;
        if range.end() > r.verified.size {
            return Err(ApiError::not_found(format!("range {range} is beyond the verified size {}", r.verified.size)));
        }
        r.log.inclusion_proof(q.index, range).map(Json).map_err(log_err)
    })
}

#[derive(Deserialize)]
struct ConsistencyQuery {
    old: u64,
    new: u64,
}

async fn consistency(State(m): State<SharedMirror>, Query(q): Query<ConsistencyQuery>) -> Result<Json<ConsistencyProof>, ApiError> {
    m.read_live(|r| {
        if q.new > r.verified.size {
            return Err(ApiError::not_found(format!("size {} is beyond the verified size {}", q.new, r.verified.size)));
        }
        r.log.consistency_proof(q.old, q.new).map(Json).map_err(|e| ApiError::bad_request(e.to_string()))
    })
}

#[derive(Deserialize)]
struct SubtreeQuery {
    start: u64,
    end: u64,
    size: Option<u64>,
}

async fn subtree(State(m): State<SharedMirror>, Query(q): Query<SubtreeQuery>) -> Result<Json<SubtreeResponse>, ApiError> {
    m.read_live(|r| {
        let range = SubtreeRange::new(q.start, q.end).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let size = q.size.unwrap_or(r.verified.size);
        if size > r.verified.size {
            return Err(ApiError::not_found(format!("size {size} is beyond the verified size {}", r.verified.size)));
        }
        let hash = r.log.subtree_root(range).map_err(|e| ApiError::bad_request(e.to_string()))?;
        let containment = r.log.subtree_consistency_proof(range, size).map_err(|e| ApiError::bad_request(e.to_string()))?;
        Ok(Json(SubtreeResponse { range, hash, containment }))
    })
}

async fn cosign(State(m): State<SharedMirror>, Json(req): Json<CosignRequest>) -> Response {
    match m.cosign(&req.checkpoint).await {
        Ok(cosignature) => Json(CosignResponse::Signed { cosignature }).into_response(),
        Err((r, last)) => {
            tracing::warn!(size = req.checkpoint.size, refusal = r.code(), "mirror refused");
            refusal_response(&r, last)
        }
    }
}

async fn sync_now(State(m): State<SharedMirror>) -> Result<Json<MirrorStatus>, ApiError> {
    m.sync().await.map(Json).map_err(|e| {
        let code = match &e {
            SyncError::Source(_) => "source_unreachable",
            SyncError::EntryUnavailable(_) => "entry_unavailable",
            SyncError::RootMismatch(_) => "root_mismatch",
            SyncError::Fork(_) => "fork_detected",
            SyncError::Frozen(_) => "frozen",
            SyncError::BadEntry(_) => "bad_entry",
            SyncError::Storage(_) => "storage",
        };
        ApiError::new(StatusCode::BAD_GATEWAY, code, e.to_string())
    })
}

async fn state(State(m): State<SharedMirror>) -> Json<MirrorStatus> {
    Json(m.status())
}

async fn cosigner_info(State(m): State<SharedMirror>) -> Result<Json<TrustedCosigner>, ApiError> {
    m.status().cosigner.map(Json).ok_or_else(|| ApiError::not_found("mirror cosigning is not enabled"))
}

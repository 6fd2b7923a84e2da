//! Node-local landmark distributor: polls the CA's landmark sequence,
//! verifies new landmarks through the mirror and publishes `landmarks.json`.

use std::path::{Path, PathBuf};
use std::time::Duration;

use mtc_core::landmark::{
    apply_refresh, plan_refresh, FetchedSubtree, LandmarkSequence, LandmarkStore, RefreshError, RefreshReport,
    SequenceError,
};
use mtc_core::signature::SignatureRegistry;
use mtc_core::trust::TrustConfig;

use crate::client::{CaClient, ClientError, MirrorClient};
use crate::util::unix_now;

#[derive(Debug, thiserror::Error)]
pub enum DistributorError {
    #[error(transparent)]
    Fetch(#[from] ClientError),
    #[error("landmark sequence: {0}")]
    Sequence(#[from] SequenceError),
    #[error(transparent)]
    Refresh(#[from] RefreshError),
    #[error("mirror returned range {got} for {want}")]
    WrongRange { want: String, got: String },
    #[error("trust config log id {config} does not match store log id {store}")]
    LogMismatch { config: String, store: String },
    #[error("publish {path}: {source}")]
    Publish { path: PathBuf, source: std::io::Error },
}

pub struct Distributor {
    pub ca: CaClient,
    pub mirror: MirrorClient,
    pub trust: TrustConfig,
    pub out: PathBuf,
    pub max_landmarks: usize,
    pub store: LandmarkStore,
}

impl Distributor {
    /// Starts from the file at `out` if one exists and matches the log.
    pub fn new(ca: CaClient, mirror: MirrorClient, trust: TrustConfig, out: PathBuf, max_landmarks: usize) -> Result<Self, DistributorError> {
        let store = match LandmarkStore::load(&out) {
            Ok(s) if s.log_id == trust.log_id => s,
            Ok(s) => {
                return Err(DistributorError::LogMismatch { config: trust.log_id.to_string(), store: s.log_id.to_string() })
            }
            Err(_) => LandmarkStore::empty(trust.log_id.clone()),
        };
        Ok(Distributor { ca, mirror, trust, out, max_landmarks, store })
    }

    pub fn path(&self) -> &Path {
        &self.out
    }

    /// One round. Nothing is written unless the mirror's checkpoint
    /// satisfies the policy; landmarks that fail verification are skipped.
    pub async fn refresh_once(&mut self) -> Result<RefreshReport, DistributorError> {
        let seq = LandmarkSequence::parse(&self.ca.landmark_sequence().await?)?;
        let plan = plan_refresh(&self.store, &seq);
        let reference = self.mirror.checkpoint().await?;
        let mut fetched = Vec::with_capacity(plan.len());
        for p in plan {
            if p.tree_size > reference.size {
                // Mirror has not caught up; try next round.
                continue;
            }
            let mut subtrees = Vec::new();
            for range in p.subtrees() {
                let s = self.mirror.subtree(range, reference.size).await?;
                if s.range != range {
                    return Err(DistributorError::WrongRange { want: range.to_string(), got: s.range.to_string() });
                }
                subtrees.push(FetchedSubtree { range, hash: s.hash, containment: s.containment });
            }
            fetched.push((p, subtrees));
        }
        let mut next = self.store.clone();
        let report = apply_refresh(
            &mut next,
            &seq,
            &reference,
            &fetched,
            &self.trust.policy,
            &SignatureRegistry::new(),
            self.max_landmarks,
            unix_now(),
        )?;
        for (n, why) in &report.rejected {
            tracing::error!(landmark = n, reason = %why, "landmark rejected");
        }
        next.publish(&self.out).map_err(|source| DistributorError::Publish { path: self.out.clone(), source })?;
        self.store = next;
        if !report.installed.is_empty() {
            tracing::info!(installed = ?report.installed, evicted = ?report.evicted, "landmarks published");
        }
        Ok(report)
    }

    /// Polls forever with exponential backoff on failure.
    pub async fn run(mut self, every: Duration) {
        let mut delay = every;
        loop {
            match self.refresh_once().await {
                Ok(_) => delay = every,
                Err(e) => {
                    tracing::warn!(error = %e, "landmark refresh failed");
                    delay = (delay * 2).min(every * 8);
                }
            }
            tokio::time::sleep(delay).await;
        }
    }
}

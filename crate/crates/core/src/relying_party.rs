//! Certificate verification at a relying party.
//!
//! Nothing here touches the network: everything needed comes from the trust
//! configuration and the landmark file written by the distributor.

use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::codec::{entry_hash, MtcCertificate, TrustAnchorId, TrustAnchorRange};
use crate::cosigner::evaluate_policy;
use crate::landmark::LandmarkStore;
use crate::merkle::{inclusion_root, Checkpoint, Hash};
pub use crate::revocation::check_revoked;
use crate::revocation::RevokedRanges;
use crate::signature::SignatureRegistry;
use crate::trust::TrustConfig;

/// SHA-256 evaluations outside the inclusion path: the entity key hash and
/// the leaf hash.
pub const ENTRY_HASH_OPS: u32 = 2;

pub const DEFAULT_SKEW_SECS: u64 = 300;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Accept,
    Reject,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Landmark,
    Standalone,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reason {
    Revoked,
    UnknownLandmark,
    ProofMismatch,
    Malformed,
    PolicyUnsatisfied,
    Expired,
    UntrustedLog,
}

impl Reason {
    pub fn code(self) -> &'static str {
        match self {
            Reason::Revoked => "revoked",
            Reason::UnknownLandmark => "unknown_landmark",
            Reason::ProofMismatch => "proof_mismatch",
            Reason::Malformed => "malformed",
            Reason::PolicyUnsatisfied => "policy_unsatisfied",
            Reason::Expired => "expired",
            Reason::UntrustedLog => "untrusted_log",
        }
    }
}

impl fmt::Display for Reason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub verdict: Verdict,
    pub mode: Mode,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reason: Option<Reason>,
    pub hash_ops: u32,
}

impl VerificationOutcome {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accept
    }

    fn accept(mode: Mode, hash_ops: u32) -> Self {
        VerificationOutcome { verdict: Verdict::Accept, mode, reason: None, hash_ops }
    }

    fn reject(mode: Mode, reason: Reason, hash_ops: u32) -> Self {
        VerificationOutcome { verdict: Verdict::Reject, mode, reason: Some(reason), hash_ops }
    }
}

/// Immutable verification snapshot. Reloading trust material builds a new
/// one.
#[derive(Clone, Debug)]
pub struct RelyingTrust {
    pub config: TrustConfig,
    pub store: LandmarkStore,
    /// Store revocations plus any configured locally.
    pub revoked: RevokedRanges,
    pub skew_secs: u64,
    pub registry: Arc<SignatureRegistry>,
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Json { path: String, source: serde_json::Error },
    #[error("landmark store is for log {store}, trust config for {config}")]
    LogMismatch { store: TrustAnchorId, config: TrustAnchorId },
    #[error(transparent)]
    Trust(#[from] crate::trust::TrustError),
}

impl RelyingTrust {
    pub fn new(config: TrustConfig, store: Option<LandmarkStore>) -> Self {
        let store = store.unwrap_or_else(|| LandmarkStore::empty(config.log_id.clone()));
        let revoked = store.revoked.clone();
        RelyingTrust { config, store, revoked, skew_secs: DEFAULT_SKEW_SECS, registry: Arc::new(SignatureRegistry::new()) }
    }

    /// Loads a trust config and, if present, a landmark file.
    pub fn load(config_path: &Path, landmarks_path: Option<&Path>) -> Result<Self, LoadError> {
        let config: TrustConfig = read_json(config_path)?;
        config.validate()?;
        let store = match landmarks_path {
            Some(p) if p.exists() => {
                let s: LandmarkStore = read_json(p)?;
                if s.log_id != config.log_id {
                    return Err(LoadError::LogMismatch { store: s.log_id, config: config.log_id });
                }
                Some(s)
            }
            _ => None,
        };
        Ok(Self::new(config, store))
    }

    pub fn with_registry(mut self, registry: Arc<SignatureRegistry>) -> Self {
        self.registry = registry;
        self
    }

    /// Revokes every index below `first_available`, for logs whose early
    /// entries were pruned and can no longer be audited.
    pub fn with_preemptive_revocation(mut self, first_available: u64) -> Self {
        if first_available > 0 {
            self.revoked.insert(0, first_available).expect("non-empty");
        }
        self
    }

    pub fn with_revoked(mut self, extra: &RevokedRanges) -> Self {
        self.revoked.merge(extra);
        self
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, LoadError> {
    let bytes = std::fs::read(path).map_err(|source| LoadError::Io { path: path.display().to_string(), source })?;
    serde_json::from_slice(&bytes).map_err(|source| LoadError::Json { path: path.display().to_string(), source })
}

/// Checks shared by both modes. Returns the leaf hash and hash ops so far.
fn common_checks(cert: &MtcCertificate, trust: &RelyingTrust, now: u64, mode: Mode) -> Result<(Hash, u32), VerificationOutcome> {
    if cert.log_id != trust.config.log_id {
        return Err(VerificationOutcome::reject(mode, Reason::UntrustedLog, 0));
    }
    // Revocation is decided before any proof work.
    if check_revoked(cert.index, &trust.revoked) {
        return Err(VerificationOutcome::reject(mode, Reason::Revoked, 0));
    }
    let e = &cert.entry;
    if now > e.not_after.saturating_add(trust.skew_secs) || now.saturating_add(trust.skew_secs) < e.not_before {
        return Err(VerificationOutcome::reject(mode, Reason::Expired, 0));
    }
    if !cert.proof.range.contains(cert.index) {
        return Err(VerificationOutcome::reject(mode, Reason::Malformed, 0));
    }
    let spki = Hash(Sha256::digest(&cert.entity_public_key).into());
    if spki != e.spki_hash || cert.entity_public_key.len() != e.spki_algorithm.public_key_len() {
        return Err(VerificationOutcome::reject(mode, Reason::Malformed, 1));
    }
    let leaf = entry_hash(e).map_err(|_| VerificationOutcome::reject(mode, Reason::Malformed, 1))?;
    Ok((leaf, ENTRY_HASH_OPS))
}

/// Hash-only verification against an installed landmark subtree.
pub fn verify_landmark(cert: &MtcCertificate, trust: &RelyingTrust, now: u64) -> VerificationOutcome {
    let mode = Mode::Landmark;
    if !cert.proof.cosignatures.is_empty() {
        return VerificationOutcome::reject(mode, Reason::Malformed, 0);
    }
    let (leaf, ops) = match common_checks(cert, trust, now, mode) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let Some(stored) = trust.store.find_range(&cert.proof.range) else {
        return VerificationOutcome::reject(mode, Reason::UnknownLandmark, ops);
    };
    match inclusion_root(&leaf, cert.index, &cert.proof.inclusion.hashes, &cert.proof.range) {
        Some((root, n)) if root == stored.hash => VerificationOutcome::accept(mode, ops + n),
        Some((_, n)) => VerificationOutcome::reject(mode, Reason::ProofMismatch, ops + n),
        None => VerificationOutcome::reject(mode, Reason::ProofMismatch, ops),
    }
}

/// Verification against a cosigned checkpoint reconstructed from the
/// certificate's own proof over `[0, size)`.
pub fn verify_standalone(cert: &MtcCertificate, trust: &RelyingTrust, now: u64) -> VerificationOutcome {
    let mode = Mode::Standalone;
    if cert.proof.cosignatures.is_empty() || cert.proof.range.start() != 0 {
        return VerificationOutcome::reject(mode, Reason::Malformed, 0);
    }
    let (leaf, ops) = match common_checks(cert, trust, now, mode) {
        Ok(v) => v,
        Err(o) => return o,
    };
    let range = cert.proof.range;
    let Some((root, n)) = inclusion_root(&leaf, cert.index, &cert.proof.inclusion.hashes, &range) else {
        return VerificationOutcome::reject(mode, Reason::ProofMismatch, ops);
    };
    let ops = ops + n;
    let cp = Checkpoint { root, size: range.end() };
    let outcome = evaluate_policy(&cp, &cert.proof.cosignatures, &trust.config.policy, &trust.registry);
    if outcome.accepted {
        VerificationOutcome::accept(mode, ops)
    } else if outcome.valid == 0 {
        // No trusted cosigner signed the root this proof leads to.
        VerificationOutcome::reject(mode, Reason::ProofMismatch, ops)
    } else {
        VerificationOutcome::reject(mode, Reason::PolicyUnsatisfied, ops)
    }
}

/// Dispatches on certificate mode.
pub fn verify_certificate(cert: &MtcCertificate, trust: &RelyingTrust, now: u64) -> VerificationOutcome {
    if cert.is_landmark() {
        verify_landmark(cert, trust, now)
    } else {
        verify_standalone(cert, trust, now)
    }
}

/// A trust anchor a client can advertise.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvertisedAnchor {
    /// Standalone certificates from this log are acceptable.
    Log(TrustAnchorId),
    Landmarks(TrustAnchorRange),
}

/// The bare log anchor plus one range per contiguous run of installed
/// landmark numbers.
pub fn advertise_anchors(trust: &RelyingTrust) -> Vec<AdvertisedAnchor> {
    let mut out = vec![AdvertisedAnchor::Log(trust.config.log_id.clone())];
    let numbers = trust.store.numbers();
    let mut i = 0;
    while i < numbers.len() {
        let mut j = i;
        while j + 1 < numbers.len() && numbers[j + 1] == numbers[j] + 1 {
            j += 1;
        }
        out.push(AdvertisedAnchor::Landmarks(
            TrustAnchorRange::new(trust.config.landmark_base.clone(), numbers[i], numbers[j]).unwrap(),
        ));
        i = j + 1;
    }
    out
}

/// Certificates a server holds for one key.
#[derive(Clone, Debug)]
pub struct CertInventory {
    pub standalone: MtcCertificate,
    /// Landmark certificates keyed by landmark trust anchor ID.
    pub landmarks: Vec<(TrustAnchorId, MtcCertificate)>,
}

/// Newest owned landmark certificate inside an advertised range, else the
/// standalone certificate.
pub fn select_certificate<'a>(inv: &'a CertInventory, peer: &[AdvertisedAnchor]) -> &'a MtcCertificate {
    let ranges: Vec<&TrustAnchorRange> = peer
        .iter()
        .filter_map(|a| match a {
            AdvertisedAnchor::Landmarks(r) => Some(r),
            AdvertisedAnchor::Log(_) => None,
        })
        .collect();
    inv.landmarks
        .iter()
        .filter_map(|(id, cert)| {
            ranges
                .iter()
                .find(|r| r.contains(id))
                .map(|r| (id.strip_base(&r.base).expect("contained"), cert))
        })
        .max_by_key(|(n, _)| *n)
        .map(|(_, c)| c)
        .unwrap_or(&inv.standalone)
}

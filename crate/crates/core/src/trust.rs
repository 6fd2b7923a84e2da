//! What a relying party is told to trust: the log, its cosigners and the
//! acceptance rule.

use serde::{Deserialize, Serialize};

use crate::codec::{hex_bytes, TrustAnchorId};
use crate::signature::SchemeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CosignerMode {
    /// Checks consistency proofs only; stores one checkpoint.
    Witness,
    /// Holds a full replica and checks every entry is available.
    Mirror,
}

/// A cosigner's public identity. Also the body of `GET /cosigner-info`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustedCosigner {
    pub id: TrustAnchorId,
    pub scheme: SchemeId,
    #[serde(with = "hex_bytes")]
    pub public_key: Vec<u8>,
    pub mode: CosignerMode,
}

/// k-of-n cosigner rule, optionally requiring a mirror among the k.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AcceptancePolicy {
    pub required_k: usize,
    pub trusted_cosigners: Vec<TrustedCosigner>,
    #[serde(default)]
    pub require_mirror: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TrustError {
    #[error("required_k {k} must be between 1 and the {n} trusted cosigners")]
    BadThreshold { k: usize, n: usize },
    #[error("require_mirror is set but no trusted cosigner is a mirror")]
    NoMirror,
    #[error("cosigner {0} is listed twice")]
    DuplicateCosigner(TrustAnchorId),
    #[error("landmark base {base} must extend log id {log_id} by one component")]
    LandmarkBase { base: TrustAnchorId, log_id: TrustAnchorId },
}

impl AcceptancePolicy {
    pub fn validate(&self) -> Result<(), TrustError> {
        let n = self.trusted_cosigners.len();
        if self.required_k == 0 || self.required_k > n {
            return Err(TrustError::BadThreshold { k: self.required_k, n });
        }
        if self.require_mirror && !self.trusted_cosigners.iter().any(|c| c.mode == CosignerMode::Mirror) {
            return Err(TrustError::NoMirror);
        }
        for (i, c) in self.trusted_cosigners.iter().enumerate() {
            if self.trusted_cosigners[..i].iter().any(|d| d.id == c.id) {
                return Err(TrustError::DuplicateCosigner(c.id.clone()));
            }
        }
        Ok(())
    }

    pub fn cosigner(&self, id: &TrustAnchorId) -> Option<&TrustedCosigner> {
        self.trusted_cosigners.iter().find(|c| &c.id == id)
    }
}

/// Body of `GET /trust-config`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrustConfig {
    pub log_id: TrustAnchorId,
    pub policy: AcceptancePolicy,
    pub landmark_base: TrustAnchorId,
    pub landmark_url: String,
}

impl TrustConfig {
    pub fn validate(&self) -> Result<(), TrustError> {
        self.policy.validate()?;
        if self.landmark_base.strip_base(&self.log_id).is_none() {
            return Err(TrustError::LandmarkBase {
                base: self.landmark_base.clone(),
                log_id: self.log_id.clone(),
            });
        }
        Ok(())
    }

    pub fn cosigners(&self) -> &[TrustedCosigner] {
        &self.policy.trusted_cosigners
    }
}

//! JSON bodies exchanged between the roles.

use mtc_core::codec::{Cosignature, TrustAnchorId};
use mtc_core::merkle::{Checkpoint, ConsistencyProof, Hash, SubtreeRange};
use mtc_core::revocation::RevokedRanges;
use mtc_core::trust::TrustedCosigner;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CosignRequest {
    pub checkpoint: Checkpoint,
    /// From the cosigner's last signed size. Mirrors ignore it.
    #[serde(default)]
    pub consistency_proof: ConsistencyProof,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CosignResponse {
    Signed {
        cosignature: Cosignature,
    },
    Refused {
        refusal: String,
        reason: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        last_size: Option<u64>,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CosignerState {
    pub info: TrustedCosigner,
    pub last_signed: Option<Checkpoint>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubtreeCosignRequest {
    pub range: SubtreeRange,
    pub root: Hash,
    pub containment: ConsistencyProof,
    pub within: Checkpoint,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IssueResponse {
    pub index: u64,
    /// Encoded standalone certificate, hex.
    pub certificate: String,
    pub checkpoint_size: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LandmarkCertResponse {
    pub number: u64,
    pub landmark_id: TrustAnchorId,
    pub certificate: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RevokeRequest {
    pub lo: u64,
    pub hi: u64,
    pub admission_token: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct RevokeResponse {
    pub revoked: RevokedRanges,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AdminRequest {
    pub admission_token: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AllocateResponse {
    /// `None` when the log has not grown since the previous landmark.
    pub number: Option<u64>,
    pub tree_size: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntriesResponse {
    pub start: u64,
    /// Encoded entries, hex. `None` marks one the server could not supply.
    pub entries: Vec<Option<String>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SubtreeResponse {
    pub range: SubtreeRange,
    pub hash: Hash,
    pub containment: ConsistencyProof,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ErrorBody {
    pub error: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub details: Vec<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MirrorStatus {
    pub synced_size: u64,
    pub checkpoint: Checkpoint,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cosigner: Option<TrustedCosigner>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frozen: Option<String>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EntryResponse {
    pub index: u64,
    /// Encoded entry, hex.
    pub entry: String,
    pub leaf_hash: Hash,
}

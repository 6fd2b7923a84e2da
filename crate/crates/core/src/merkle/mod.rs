//! Append-only binary Merkle tree over entry hashes.
//!
//! Hashing follows RFC 9162: leaves are `SHA-256(0x00 || entry)`, interior
//! nodes are `SHA-256(0x01 || left || right)` and the empty tree hashes to
//! `SHA-256("")`. Trees of arbitrary size take the RFC 9162 shape, splitting
//! at the largest power of two strictly below the leaf count.

mod log;
mod proof;

pub use log::{LeafSource, LogError, MerkleLog, PruneState};
pub use proof::{
    consistency_root_check, inclusion_root, verify_consistency, verify_inclusion,
    verify_subtree_consistency, ConsistencyCheck,
};

use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

pub const HASH_LEN: usize = 32;

/// A 32-byte SHA-256 digest naming a leaf, an interior node or a tree root.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct Hash(pub [u8; HASH_LEN]);

/// Hash of a single log entry (`SHA-256(0x00 || entry)`).
pub type LeafHash = Hash;
/// Hash of an interior node or subtree root.
pub type NodeHash = Hash;

impl Hash {
    pub fn from_slice(bytes: &[u8]) -> Option<Self> {
        <[u8; HASH_LEN]>::try_from(bytes).ok().map(Hash)
    }

    pub fn as_bytes(&self) -> &[u8; HASH_LEN] {
        &self.0
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }

    pub fn from_hex(s: &str) -> Option<Self> {
        hex::decode(s).ok().and_then(|b| Self::from_slice(&b))
    }
}

impl fmt::Debug for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Hash({})", self.to_hex())
    }
}

impl fmt::Display for Hash {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl Serialize for Hash {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for Hash {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        Hash::from_hex(&s)
            .ok_or_else(|| serde::de::Error::custom("expected 64 hex characters"))
    }
}

/// `SHA-256(0x00 || entry_bytes)`.
pub fn leaf_hash(entry_bytes: &[u8]) -> LeafHash {
    let mut h = Sha256::new();
    h.update([0x00]);
    h.update(entry_bytes);
    Hash(h.finalize().into())
}

/// `SHA-256(0x01 || left || right)`.
pub fn node_hash(left: &NodeHash, right: &NodeHash) -> NodeHash {
    let mut h = Sha256::new();
    h.update([0x01]);
    h.update(left.0);
    h.update(right.0);
    Hash(h.finalize().into())
}

/// Root of the tree with no leaves: `SHA-256("")`.
pub fn empty_root() -> NodeHash {
    Hash(Sha256::digest([]).into())
}

/// Largest power of two strictly less than `n`. Requires `n >= 2`.
pub(crate) fn split_point(n: u64) -> u64 {
    debug_assert!(n >= 2);
    1 << (63 - (n - 1).leading_zeros())
}

/// `(root, size)` snapshot of the log.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub root: NodeHash,
    pub size: u64,
}

impl Checkpoint {
    pub fn empty() -> Self {
        Checkpoint {
            root: empty_root(),
            size: 0,
        }
    }

    /// Canonical message countersigned by cosigners: root bytes followed
    /// by the big-endian 64-bit size.
    pub fn signed_message(&self) -> [u8; HASH_LEN + 8] {
        let mut msg = [0u8; HASH_LEN + 8];
        msg[..HASH_LEN].copy_from_slice(&self.root.0);
        msg[HASH_LEN..].copy_from_slice(&self.size.to_be_bytes());
        msg
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("invalid subtree range [{start}, {end})")]
pub struct RangeError {
    pub start: u64,
    pub end: u64,
}

/// Half-open leaf interval `[start, end)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "RawRange", into = "RawRange")]
pub struct SubtreeRange {
    start: u64,
    end: u64,
}

#[derive(Serialize, Deserialize)]
struct RawRange {
    start: u64,
    end: u64,
}

impl TryFrom<RawRange> for SubtreeRange {
    type Error = RangeError;
    fn try_from(r: RawRange) -> Result<Self, RangeError> {
        SubtreeRange::new(r.start, r.end)
    }
}

impl From<SubtreeRange> for RawRange {
    fn from(r: SubtreeRange) -> Self {
        RawRange {
            start: r.start,
            end: r.end,
        }
    }
}

impl SubtreeRange {
    pub fn new(start: u64, end: u64) -> Result<Self, RangeError> {
        if start < end {
            Ok(SubtreeRange { start, end })
        } else {
            Err(RangeError { start, end })
        }
    }

    /// The aligned single-leaf range `[index, index + 1)`.
    pub fn leaf(index: u64) -> Self {
        SubtreeRange {
            start: index,
            end: index + 1,
        }
    }

    pub fn start(&self) -> u64 {
        self.start
    }

    pub fn end(&self) -> u64 {
        self.end
    }

    pub fn width(&self) -> u64 {
        self.end - self.start
    }

    pub fn contains(&self, index: u64) -> bool {
        self.start <= index && index < self.end
    }

    /// Power-of-two width with `start` a multiple of the width.
    pub fn is_aligned(&self) -> bool {
        let w = self.width();
        w.is_power_of_two() && self.start.is_multiple_of(w)
    }

    /// `start` is a multiple of the width rounded up to a power of two.
    ///
    /// Every aligned range qualifies, as does `[0, n)` for any `n`. These are
    /// exactly the ranges whose RFC 9162 tree shape is made of nodes that
    /// also appear in the enclosing log tree.
    pub fn is_subtree(&self) -> bool {
        self.start.is_multiple_of(self.width().next_power_of_two())
    }
}

impl fmt::Display for SubtreeRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Sibling hashes from a leaf up to a subtree root, deepest first.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InclusionProof {
    pub hashes: Vec<Hash>,
}

impl InclusionProof {
    pub fn byte_len(&self) -> usize {
        self.hashes.len() * HASH_LEN
    }
}

/// RFC 9162 consistency proof between two tree sizes.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConsistencyProof {
    pub hashes: Vec<Hash>,
}

/// Minimal left-to-right cover of `range` by maximal aligned ranges.
///
/// Greedy: at each position take the widest aligned block that starts there
/// and fits before `range.end`.
pub fn decompose_range(range: SubtreeRange) -> Vec<SubtreeRange> {
    let mut out = Vec::new();
    let mut pos = range.start;
    while pos < range.end {
        let remaining = range.end - pos;
        let max_fit = 1u64 << (63 - remaining.leading_zeros());
        let align = if pos == 0 { max_fit } else { 1u64 << pos.trailing_zeros() };
        let width = max_fit.min(align);
        out.push(SubtreeRange {
            start: pos,
            end: pos + width,
        });
        pos += width;
    }
    out
}

/// Number of hashes in an inclusion proof for a subtree of `width` leaves.
pub fn proof_depth(width: u64) -> u32 {
    if width <= 1 {
        0
    } else {
        64 - (width - 1).leading_zeros()
    }
}

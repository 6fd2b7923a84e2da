//! Deterministic wire formats.
//!
//! All integers are big-endian. Variable-length byte strings carry a 16-bit
//! length prefix. Every decoder consumes its input exactly and rejects
//! trailing bytes. The full layout is in `docs/wire-format.md`.

mod cert;
mod entry;
mod taid;
pub(crate) mod wire;

pub use cert::{decode_certificate, encode_certificate, Cosignature, MtcCertificate, MtcProof, MAX_PROOF_HASHES};
pub use entry::{decode_entry, encode_entry, entry_hash, EntryType, LogEntry, TbsCertEntry};
pub use taid::{format_taid, parse_taid, TaidError, TrustAnchorId, TrustAnchorRange};

pub use cert::{decode_proof, encode_proof};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeError {
    #[error("input truncated")]
    Truncated,
    #[error("{0} trailing bytes")]
    TrailingBytes(usize),
    #[error("unknown entry type {0}")]
    UnknownEntryType(u16),
    #[error("unknown signature scheme 0x{0:04x}")]
    UnknownScheme(u16),
    #[error("proof carries {0} hashes, more than 64")]
    TooManyHashes(usize),
    #[error("invalid UTF-8 in {0}")]
    Utf8(&'static str),
    #[error("{0}")]
    Invalid(&'static str),
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EncodeError {
    #[error("{0}")]
    Invalid(&'static str),
    #[error("{0} does not fit its length prefix")]
    TooLong(&'static str),
}

/// Serde adapter: byte strings as lowercase hex.
pub mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

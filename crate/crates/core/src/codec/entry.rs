use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::wire::{Reader, Writer};
use super::{DecodeError, EncodeError};
use crate::merkle::{leaf_hash, Hash, LeafHash};
use crate::signature::SchemeId;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u16)]
pub enum EntryType {
    Null = 0,
    TbsCert = 1,
}

/// The identity record a certificate binds. The entity key is represented
/// by its SHA-256 so the leaf stays small; the key itself rides in the
/// certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TbsCertEntry {
    pub subject: String,
    pub dns_names: Vec<String>,
    pub not_before: u64,
    pub not_after: u64,
    pub spki_algorithm: SchemeId,
    pub spki_hash: Hash,
}

impl TbsCertEntry {
    /// Builds an entry for `public_key`, hashing it into `spki_hash`.
    pub fn for_key(
        subject: impl Into<String>,
        dns_names: Vec<String>,
        not_before: u64,
        not_after: u64,
        scheme: SchemeId,
        public_key: &[u8],
    ) -> Self {
        TbsCertEntry {
            subject: subject.into(),
            dns_names,
            not_before,
            not_after,
            spki_algorithm: scheme,
            spki_hash: spki_hash(public_key),
        }
    }

    pub fn validate(&self) -> Result<(), EncodeError> {
        if self.subject.is_empty() {
            return Err(EncodeError::Invalid("subject is empty"));
        }
        if self.not_before >= self.not_after {
            return Err(EncodeError::Invalid("not_before must precede not_after"));
        }
        if self.subject.len() > u16::MAX as usize {
            return Err(EncodeError::TooLong("subject"));
        }
        if self.dns_names.len() > u16::MAX as usize {
            return Err(EncodeError::TooLong("dns_names"));
        }
        if self.dns_names.iter().any(|n| n.len() > u16::MAX as usize) {
            return Err(EncodeError::TooLong("dns name"));
        }
        Ok(())
    }

    pub(crate) fn encode_to(&self, w: &mut Writer) {
        w.u16(EntryType::TbsCert as u16);
        w.bytes16(self.subject.as_bytes());
        w.u16(self.dns_names.len() as u16);
        for n in &self.dns_names {
            w.bytes16(n.as_bytes());
        }
        w.u64(self.not_before);
        w.u64(self.not_after);
        w.u16(self.spki_algorithm.code());
        w.raw(&self.spki_hash.0);
    }

    /// Body after the type tag.
    fn decode_body(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let subject = utf8(r.bytes16()?, "subject")?;
        let count = r.u16()?;
        let dns_names = (0..count)
            .map(|_| utf8(r.bytes16()?, "dns name"))
            .collect::<Result<Vec<_>, _>>()?;
        let not_before = r.u64()?;
        let not_after = r.u64()?;
        let code = r.u16()?;
        let spki_algorithm = SchemeId::from_code(code).ok_or(DecodeError::UnknownScheme(code))?;
        let spki_hash = Hash(r.array32()?);
        let entry = TbsCertEntry { subject, dns_names, not_before, not_after, spki_algorithm, spki_hash };
        entry.validate().map_err(|e| match e {
            EncodeError::Invalid(m) | EncodeError::TooLong(m) => DecodeError::Invalid(m),
        })?;
        Ok(entry)
    }

    pub(crate) fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        match r.u16()? {
            1 => Self::decode_body(r),
            t => Err(DecodeError::UnknownEntryType(t)),
        }
    }
}

fn utf8(bytes: &[u8], what: &'static str) -> Result<String, DecodeError> {
    String::from_utf8(bytes.to_vec()).map_err(|_| DecodeError::Utf8(what))
}

pub fn spki_hash(public_key: &[u8]) -> Hash {
    Hash(Sha256::digest(public_key).into())
}

/// A log leaf's content.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Null,
    TbsCert(TbsCertEntry),
}

impl LogEntry {
    pub fn encode(&self) -> Result<Vec<u8>, EncodeError> {
        match self {
            LogEntry::Null => Ok((EntryType::Null as u16).to_be_bytes().to_vec()),
            LogEntry::TbsCert(e) => encode_entry(e),
        }
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let entry = match r.u16()? {
            0 => LogEntry::Null,
            1 => LogEntry::TbsCert(TbsCertEntry::decode_body(&mut r)?),
            t => return Err(DecodeError::UnknownEntryType(t)),
        };
        r.finish()?;
        Ok(entry)
    }

    pub fn leaf_hash(&self) -> Result<LeafHash, EncodeError> {
        Ok(leaf_hash(&self.encode()?))
    }
}

pub fn encode_entry(entry: &TbsCertEntry) -> Result<Vec<u8>, EncodeError> {
    entry.validate()?;
    let mut w = Writer::default();
    entry.encode_to(&mut w);
    Ok(w.buf)
}

pub fn decode_entry(bytes: &[u8]) -> Result<TbsCertEntry, DecodeError> {
    let mut r = Reader::new(bytes);
    let e = TbsCertEntry::decode_from(&mut r)?;
    r.finish()?;
    Ok(e)
}

/// `leaf_hash(encode_entry(entry))`.
pub fn entry_hash(entry: &TbsCertEntry) -> Result<LeafHash, EncodeError> {
    Ok(leaf_hash(&encode_entry(entry)?))
}

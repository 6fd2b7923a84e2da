//! Baseline certificate: the same entry, authenticated by one issuer
//! signature instead of a Merkle proof.
//!
//! Layout: `entry bytes16 ‖ entity_public_key bytes16 ‖ issuer scheme u16 ‖
//! signature bytes16`. The signature covers the encoded entry.

use sha2::{Digest, Sha256};

use crate::codec::wire::{Reader, Writer};
use crate::codec::{decode_entry, encode_entry, DecodeError, TbsCertEntry};
use crate::relying_party::Reason;
use crate::signature::{KeyPair, Purpose, SchemeId, SignatureRegistry};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClassicalCertificate {
    pub entry: TbsCertEntry,
    pub entity_public_key: Vec<u8>,
    pub issuer_scheme: SchemeId,
    pub signature: Vec<u8>,
}

pub struct ClassicalIssuer {
    pub key: KeyPair,
}

impl ClassicalIssuer {
    pub fn issue(&self, entry: TbsCertEntry, entity_public_key: Vec<u8>) -> ClassicalCertificate {
        let signature = self.key.sign(&encode_entry(&entry).expect("valid entry"));
        ClassicalCertificate { entry, entity_public_key, issuer_scheme: self.key.scheme(), signature }
    }
}

impl ClassicalCertificate {
    pub fn encode(&self) -> Vec<u8> {
        let mut w = Writer::default();
        w.bytes16(&encode_entry(&self.entry).expect("valid entry"));
        w.bytes16(&self.entity_public_key);
        w.u16(self.issuer_scheme.code());
        w.bytes16(&self.signature);
        w.buf
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, DecodeError> {
        let mut r = Reader::new(bytes);
        let entry = decode_entry(r.bytes16()?)?;
        let entity_public_key = r.bytes16()?.to_vec();
        let code = r.u16()?;
        let issuer_scheme = SchemeId::from_code(code).ok_or(DecodeError::UnknownScheme(code))?;
        let signature = r.bytes16()?.to_vec();
        r.finish()?;
        Ok(ClassicalCertificate { entry, entity_public_key, issuer_scheme, signature })
    }

    /// Validity, key binding and the issuer signature.
    pub fn verify(&self, scheme: SchemeId, issuer_pk: &[u8], registry: &SignatureRegistry, now: u64) -> Result<(), Reason> {
        if now < self.entry.not_before || now > self.entry.not_after {
            return Err(Reason::Expired);
        }
        let spki: [u8; 32] = Sha256::digest(&self.entity_public_key).into();
        if spki != self.entry.spki_hash.0 {
            return Err(Reason::Malformed);
        }
        let tbs = encode_entry(&self.entry).map_err(|_| Reason::Malformed)?;
        if scheme != self.issuer_scheme || !registry.verify(Purpose::Issuer, scheme, issuer_pk, &tbs, &self.signature) {
            return Err(Reason::ProofMismatch);
        }
        Ok(())
    }
}

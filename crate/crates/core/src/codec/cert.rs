use serde::{Deserialize, Serialize};

use super::entry::spki_hash;
use super::wire::{Reader, Writer};
use super::{DecodeError, EncodeError, TbsCertEntry, TrustAnchorId};
use crate::merkle::{Hash, InclusionProof, SubtreeRange};
use crate::signature::SchemeId;

pub const MAX_PROOF_HASHES: usize = 64;

/// A cosigner's signature over `root || size` of the checkpoint with
/// `checkpoint_size` leaves.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cosignature {
    pub cosigner_id: TrustAnchorId,
    pub scheme: SchemeId,
    #[serde(with = "super::hex_bytes")]
    pub signature: Vec<u8>,
    pub checkpoint_size: u64,
}

impl Cosignature {
    fn encode_to(&self, w: &mut Writer) {
        self.cosigner_id.encode_to(w);
        w.u16(self.scheme.code());
        w.bytes16(&self.signature);
        w.u64(self.checkpoint_size);
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let cosigner_id = TrustAnchorId::decode_from(r)?;
        let code = r.u16()?;
        let scheme = SchemeId::from_code(code).ok_or(DecodeError::UnknownScheme(code))?;
        let signature = r.bytes16()?.to_vec();
        if signature.len() != scheme.signature_len() {
            return Err(DecodeError::Invalid("signature length does not match scheme"));
        }
        let checkpoint_size = r.u64()?;
        Ok(Cosignature { cosigner_id, scheme, signature, checkpoint_size })
    }
}

/// The certificate's authenticator: an inclusion proof into `range` plus
/// cosignatures. No cosignatures means a landmark certificate.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtcProof {
    pub range: SubtreeRange,
    pub inclusion: InclusionProof,
    pub cosignatures: Vec<Cosignature>,
}

impl MtcProof {
    pub fn is_landmark(&self) -> bool {
        self.cosignatures.is_empty()
    }

    fn check(&self) -> Result<(), EncodeError> {
        if self.inclusion.hashes.len() > MAX_PROOF_HASHES {
            return Err(EncodeError::TooLong("inclusion proof"));
        }
        if self.cosignatures.len() > u16::MAX as usize {
            return Err(EncodeError::TooLong("cosignatures"));
        }
        for c in &self.cosignatures {
            if c.cosigner_id.components().len() > 255 {
                return Err(EncodeError::TooLong("cosigner id"));
            }
            if c.signature.len() != c.scheme.signature_len() {
                return Err(EncodeError::Invalid("signature length does not match scheme"));
            }
        }
        Ok(())
    }

    fn encode_to(&self, w: &mut Writer) {
        w.u64(self.range.start());
        w.u64(self.range.end());
        w.u8(self.inclusion.hashes.len() as u8);
        for h in &self.inclusion.hashes {
            w.raw(&h.0);
        }
        w.u16(self.cosignatures.len() as u16);
        for c in &self.cosignatures {
            c.encode_to(w);
        }
    }

    fn decode_from(r: &mut Reader<'_>) -> Result<Self, DecodeError> {
        let start = r.u64()?;
        let end = r.u64()?;
        let range = SubtreeRange::new(start, end).map_err(|_| DecodeError::Invalid("empty subtree range"))?;
        let n = r.u8()? as usize;
        if n > MAX_PROOF_HASHES {
            return Err(DecodeError::TooManyHashes(n));
        }
        let hashes = (0..n)
            .map(|_| r.array32().map(Hash))
            .collect::<Result<Vec<_>, _>>()?;
        let m = r.u16()?;
        let cosignatures = (0..m)
            .map(|_| Cosignature::decode_from(r))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(MtcProof { range, inclusion: InclusionProof { hashes }, cosignatures })
    }
}

pub fn encode_proof(proof: &MtcProof) -> Result<Vec<u8>, EncodeError> {
    proof.check()?;
    let mut w = Writer::default();
    proof.encode_to(&mut w);
    Ok(w.buf)
}

pub fn decode_proof(bytes: &[u8]) -> Result<MtcProof, DecodeError> {
    let mut r = Reader::new(bytes);
    let p = MtcProof::decode_from(&mut r)?;
    r.finish()?;
    Ok(p)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct MtcCertificate {
    pub log_id: TrustAnchorId,
    /// Position of the entry in the log; doubles as the serial number.
    pub index: u64,
    pub entry: TbsCertEntry,
    #[serde(with = "super::hex_bytes")]
    pub entity_public_key: Vec<u8>,
    pub proof: MtcProof,
}

impl MtcCertificate {
    pub fn is_landmark(&self) -> bool {
        self.proof.is_landmark()
    }

    pub fn encoded_len(&self) -> Result<usize, EncodeError> {
        encode_certificate(self).map(|b| b.len())
    }

    fn check(&self) -> Result<(), &'static str> {
        if spki_hash(&self.entity_public_key) != self.entry.spki_hash {
            return Err("entity key does not match spki_hash");
        }
        if self.entity_public_key.len() != self.entry.spki_algorithm.public_key_len() {
            return Err("entity key length does not match its scheme");
        }
        if !self.proof.range.contains(self.index) {
            return Err("index outside proof range");
        }
        Ok(())
    }
}

pub fn encode_certificate(cert: &MtcCertificate) -> Result<Vec<u8>, EncodeError> {
    cert.check().map_err(EncodeError::Invalid)?;
    cert.entry.validate()?;
    cert.proof.check()?;
    let mut w = Writer::default();
    cert.log_id.encode_to(&mut w);
    w.u64(cert.index);
    cert.entry.encode_to(&mut w);
    w.bytes16(&cert.entity_public_key);
    cert.proof.encode_to(&mut w);
    Ok(w.buf)
}

pub fn decode_certificate(bytes: &[u8]) -> Result<MtcCertificate, DecodeError> {
    let mut r = Reader::new(bytes);
    let log_id = TrustAnchorId::decode_from(&mut r)?;
    let index = r.u64()?;
    let entry = TbsCertEntry::decode_from(&mut r)?;
    let entity_public_key = r.bytes16()?.to_vec();
    let proof = MtcProof::decode_from(&mut r)?;
    r.finish()?;
    let cert = MtcCertificate { log_id, index, entry, entity_public_key, proof };
    cert.check().map_err(DecodeError::Invalid)?;
    Ok(cert)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_taid;
    use crate::merkle::leaf_hash;
    use crate::signature::KeyPair;

    fn cert(scheme: SchemeId, depth: usize, cosigs: usize) -> MtcCertificate {
        let key = KeyPair::from_seed(scheme, &[3; 32]).unwrap();
        let width = 1u64 << depth;
        let entry = TbsCertEntry::for_key(
            "amf.5gc.svc",
            vec!["amf.5gc.svc".into()],
            1_700_000_000,
            1_700_086_400,
            scheme,
            key.public_key(),
        );
        let cosigner = KeyPair::from_seed(SchemeId::Ed25519, &[9; 32]).unwrap();
        MtcCertificate {
            log_id: parse_taid("32473").unwrap(),
            index: 5,
            entry,
            entity_public_key: key.public_key().to_vec(),
            proof: MtcProof {
                range: SubtreeRange::new(0, width).unwrap(),
                inclusion: InclusionProof {
                    hashes: (0..depth).map(|i| leaf_hash(&[i as u8])).collect(),
                },
                cosignatures: (0..cosigs)
                    .map(|i| Cosignature {
                        cosigner_id: parse_taid(&format!("32473.{}", 100 + i)).unwrap(),
                        scheme: SchemeId::Ed25519,
                        signature: cosigner.sign(b"m"),
                        checkpoint_size: width,
                    })
                    .collect(),
            },
        }
    }

    #[test]
    fn round_trips() {
        for (scheme, depth, cosigs) in [
            (SchemeId::EcdsaP256, 4, 0),
            (SchemeId::Ed25519, 4, 2),
            (SchemeId::Mldsa65Emulated, 12, 0),
        ] {
            let c = cert(scheme, depth, cosigs);
            let bytes = encode_certificate(&c).unwrap();
            assert_eq!(decode_certificate(&bytes).unwrap(), c);
            assert_eq!(c.is_landmark(), cosigs == 0);
        }
    }

    #[test]
    fn twelve_hash_proof_payload() {
        let p = cert(SchemeId::EcdsaP256, 12, 0).proof;
        let bytes = encode_proof(&p).unwrap();
        assert_eq!(p.inclusion.byte_len(), 384);
        // start, end, count byte, hashes, cosignature count.
        assert_eq!(bytes.len(), 8 + 8 + 1 + 384 + 2);
        assert_eq!(decode_proof(&bytes).unwrap(), p);
    }

    #[test]
    fn landmark_certificate_sizes() {
        // Depth 23 is the path length inside a landmark subtree of a log
        // holding a few million certificates.
        let ecdsa = encode_certificate(&cert(SchemeId::EcdsaP256, 23, 0)).unwrap().len();
        let mldsa = encode_certificate(&cert(SchemeId::Mldsa65Emulated, 23, 0)).unwrap().len();
        assert!((900..=1100).contains(&ecdsa), "ecdsa landmark cert {ecdsa} B");
        assert!((2700..=3100).contains(&mldsa), "ml-dsa landmark cert {mldsa} B");
    }

    #[test]
    fn decode_rejects_inconsistent_certificates() {
        let mut c = cert(SchemeId::EcdsaP256, 4, 0);
        c.entity_public_key[10] ^= 1;
        assert!(encode_certificate(&c).is_err());

        let good = encode_certificate(&cert(SchemeId::EcdsaP256, 4, 0)).unwrap();
        let mut bad_key = good.clone();
        // log_id (9) + index (8) + entry (80) + key length (2), then the key.
        bad_key[9 + 8 + 80 + 2 + 5] ^= 1;
        assert_eq!(
            decode_certificate(&bad_key),
            Err(DecodeError::Invalid("entity key does not match spki_hash"))
        );

        let mut out_of_range = cert(SchemeId::EcdsaP256, 4, 0);
        out_of_range.index = 16;
        assert!(encode_certificate(&out_of_range).is_err());
    }

    #[test]
    fn proof_decode_errors() {
        let p = cert(SchemeId::EcdsaP256, 2, 1).proof;
        let bytes = encode_proof(&p).unwrap();
        let mut trailing = bytes.clone();
        trailing.push(1);
        assert_eq!(decode_proof(&trailing), Err(DecodeError::TrailingBytes(1)));
        assert_eq!(decode_proof(&bytes[..bytes.len() - 3]), Err(DecodeError::Truncated));

        let mut many = bytes.clone();
        many[16] = 65;
        assert_eq!(decode_proof(&many), Err(DecodeError::TooManyHashes(65)));

        // Scheme code of the first cosignature follows its 2-component id.
        let scheme_at = 16 + 1 + 64 + 2 + 1 + 16;
        let mut unknown = bytes.clone();
        unknown[scheme_at] = 0xee;
        assert!(matches!(decode_proof(&unknown), Err(DecodeError::UnknownScheme(_))));
    }
}

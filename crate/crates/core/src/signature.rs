//! Signature schemes behind a small registry.
//!
//! `mldsa65_emulated` reproduces the ML-DSA-65 key and signature sizes with a
//! keyed SHA-256 construction. Anyone holding the public key can forge
//! signatures under it. It exists for size and latency accounting only and
//! must never protect anything.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use ed25519_dalek::Signer as _;
use p256::ecdsa::signature::Verifier as _;
use rand::RngExt;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeId {
    Ed25519,
    EcdsaP256,
    Mldsa65Emulated,
}

impl SchemeId {
    pub const ALL: [SchemeId; 3] = [SchemeId::Ed25519, SchemeId::EcdsaP256, SchemeId::Mldsa65Emulated];

    /// Wire codepoint. Ed25519 and ECDSA reuse the TLS SignatureScheme values.
    pub fn code(self) -> u16 {
        match self {
            SchemeId::Ed25519 => 0x0807,
            SchemeId::EcdsaP256 => 0x0403,
            SchemeId::Mldsa65Emulated => 0x0905,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.code() == code)
    }

    pub fn public_key_len(self) -> usize {
        match self {
            SchemeId::Ed25519 => 32,
            SchemeId::EcdsaP256 => 65,
            SchemeId::Mldsa65Emulated => 1952,
        }
    }

    pub fn signature_len(self) -> usize {
        match self {
            SchemeId::Ed25519 => 64,
            SchemeId::EcdsaP256 => 64,
            SchemeId::Mldsa65Emulated => 3309,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SchemeId::Ed25519 => "ed25519",
            SchemeId::EcdsaP256 => "ecdsa_p256",
            SchemeId::Mldsa65Emulated => "mldsa65_emulated",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.name() == name)
    }
}

impl fmt::Display for SchemeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SignatureError {
    #[error("{scheme} expects a {expected}-byte {what}, got {got}")]
    Length {
        scheme: SchemeId,
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("invalid {0} secret key")]
    InvalidSecret(SchemeId),
}

enum Secret {
    Ed25519(ed25519_dalek::SigningKey),
    EcdsaP256(p256::ecdsa::SigningKey),
    Emulated([u8; 32]),
}

/// A signing key together with its encoded public key.
pub struct KeyPair {
    scheme: SchemeId,
    seed: [u8; 32],
    secret: Secret,
    public: Vec<u8>,
}

impl Clone for KeyPair {
    fn clone(&self) -> Self {
        KeyPair::from_seed(self.scheme, &self.seed).expect("seed was valid at construction")
    }
}

impl fmt::Debug for KeyPair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyPair")
            .field("scheme", &self.scheme)
            .field("public", &hex::encode(&self.public[..self.public.len().min(16)]))
            .finish_non_exhaustive()
    }
}

impl KeyPair {
    pub fn generate(scheme: SchemeId) -> Self {
        loop {
            let seed: [u8; 32] = rand::rng().random();
            if let Ok(kp) = Self::from_seed(scheme, &seed) {
                return kp;
            }
        }
    }

    /// Deterministic key from 32 seed bytes. ECDSA rejects the rare seed
    /// that is not a valid scalar.
    pub fn from_seed(scheme: SchemeId, seed: &[u8; 32]) -> Result<Self, SignatureError> {
        let (secret, public) = match scheme {
            SchemeId::Ed25519 => {
                let sk = ed25519_dalek::SigningKey::from_bytes(seed);
                let pk = sk.verifying_key().to_bytes().to_vec();
                (Secret::Ed25519(sk), pk)
            }
            SchemeId::EcdsaP256 => {
                let sk = p256::ecdsa::SigningKey::from_slice(seed)
                    .map_err(|_| SignatureError::InvalidSecret(scheme))?;
                let pk = sk.verifying_key().to_sec1_bytes().to_vec();
                (Secret::EcdsaP256(sk), pk)
            }
            SchemeId::Mldsa65Emulated => {
                let mac_key: [u8; 32] = Sha256::new()
                    .chain_update(b"mldsa65-emulated key")
                    .chain_update(seed)
                    .finalize()
                    .into();
                let mut pk = mac_key.to_vec();
                pk.extend(expand(&mac_key, scheme.public_key_len() - 32));
                (Secret::Emulated(mac_key), pk)
            }
        };
        Ok(KeyPair { scheme, seed: *seed, secret, public })
    }

    pub fn scheme(&self) -> SchemeId {
        self.scheme
    }

    pub fn seed(&self) -> &[u8; 32] {
        &self.seed
    }

    pub fn public_key(&self) -> &[u8] {
        &self.public
    }

    pub fn sign(&self, message: &[u8]) -> Vec<u8> {
        match &self.secret {
            Secret::Ed25519(sk) => sk.sign(message).to_bytes().to_vec(),
            Secret::EcdsaP256(sk) => {
                let sig: p256::ecdsa::Signature = sk.sign(message);
                sig.to_bytes().to_vec()
            }
            Secret::Emulated(k) => emulated_signature(k, message),
        }
    }
}

fn expand(key: &[u8; 32], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 32);
    let mut counter = 0u32;
    while out.len() < len {
        out.extend(Sha256::new().chain_update(key).chain_update(counter.to_be_bytes()).finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

fn emulated_signature(mac_key: &[u8; 32], message: &[u8]) -> Vec<u8> {
    let tag: [u8; 32] = Sha256::new()
        .chain_update(mac_key)
        .chain_update(message)
        .finalize()
        .into();
    let mut sig = tag.to_vec();
    sig.extend(expand(&tag, SchemeId::Mldsa65Emulated.signature_len() - 32));
    sig
}

/// Unmetered verification. Lengths are checked first; any mismatch rejects.
pub fn verify_signature(scheme: SchemeId, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
    if public_key.len() != scheme.public_key_len() || signature.len() != scheme.signature_len() {
        return false;
    }
    match scheme {
        SchemeId::Ed25519 => {
            let Ok(pk) = ed25519_dalek::VerifyingKey::from_bytes(public_key.try_into().unwrap()) else {
                return false;
            };
            let sig = ed25519_dalek::Signature::from_bytes(signature.try_into().unwrap());
            pk.verify_strict(message, &sig).is_ok()
        }
        SchemeId::EcdsaP256 => {
            let Ok(pk) = p256::ecdsa::VerifyingKey::from_sec1_bytes(public_key) else {
                return false;
            };
            let Ok(sig) = p256::ecdsa::Signature::from_slice(signature) else {
                return false;
            };
            pk.verify(message, &sig).is_ok()
        }
        SchemeId::Mldsa65Emulated => {
            let mac_key: [u8; 32] = public_key[..32].try_into().unwrap();
            if public_key[32..] != expand(&mac_key, public_key.len() - 32)[..] {
                return false;
            }
            emulated_signature(&mac_key, message) == signature
        }
    }
}

/// What a verification was for. Counted separately so tests can prove that
/// landmark authentication never touches a signature on the certificate path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Purpose {
    /// Cosignature over a checkpoint or subtree.
    Cosignature,
    /// Issuer signature on a classical certificate.
    Issuer,
    /// Handshake transcript signature by the entity key.
    CertificateVerify,
}

impl Purpose {
    /// Cosignatures and issuer signatures authenticate the certificate itself.
    pub fn is_certificate_path(self) -> bool {
        matches!(self, Purpose::Cosignature | Purpose::Issuer)
    }
}

/// Verifier that counts every call by purpose.
#[derive(Debug, Default)]
pub struct SignatureRegistry {
    cosignature: AtomicU64,
    issuer: AtomicU64,
    certificate_verify: AtomicU64,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct VerifyCounts {
    pub cosignature: u64,
    pub issuer: u64,
    pub certificate_verify: u64,
}

impl VerifyCounts {
    pub fn certificate_path(&self) -> u64 {
        self.cosignature + self.issuer
    }
}

impl std::ops::Sub for VerifyCounts {
    type Output = VerifyCounts;
    fn sub(self, rhs: Self) -> Self {
        VerifyCounts {
            cosignature: self.cosignature - rhs.cosignature,
            issuer: self.issuer - rhs.issuer,
            certificate_verify: self.certificate_verify - rhs.certificate_verify,
        }
    }
}

impl SignatureRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn verify(&self, purpose: Purpose, scheme: SchemeId, public_key: &[u8], message: &[u8], signature: &[u8]) -> bool {
        let counter = match purpose {
            Purpose::Cosignature => &self.cosignature,
            Purpose::Issuer => &self.issuer,
            Purpose::CertificateVerify => &self.certificate_verify,
        };
        counter.fetch_add(1, Ordering::Relaxed);
        verify_signature(scheme, public_key, message, signature)
    }

    pub fn counts(&self) -> VerifyCounts {
        VerifyCounts {
            cosignature: self.cosignature.load(Ordering::Relaxed),
            issuer: self.issuer.load(Ordering::Relaxed),
            certificate_verify: self.certificate_verify.load(Ordering::Relaxed),
        }
    }
}

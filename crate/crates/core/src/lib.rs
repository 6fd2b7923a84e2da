//! Merkle Tree Certificate primitives: the issuance log, wire codecs,
//! cosigning, landmarks, relying-party verification and a TLS-shaped
//! handshake harness.

pub mod codec;
pub mod merkle;
pub mod signature;
pub mod cosigner;
pub mod revocation;
pub mod trust;
pub mod landmark;
pub mod relying_party;
pub mod authority;
pub mod deployment;
pub mod handshake;

//! Loopback TLS-1.3-shaped authentication flow carrying MTC certificates.
//!
//! Frames are `type u8 ‖ length u24 ‖ body`. The key exchange is opaque
//! fixed-size filler; only authentication is real. Client and server run on
//! two threads joined by a pair of byte channels.

mod classical;
pub mod bench;
pub mod size_model;

pub use classical::{ClassicalCertificate, ClassicalIssuer};

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::time::Duration;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::codec::wire::{Reader, Writer};
use crate::codec::{decode_certificate, encode_certificate, parse_taid, DecodeError, TrustAnchorRange};
use crate::relying_party::{advertise_anchors, select_certificate, verify_certificate, AdvertisedAnchor, CertInventory, Mode, Reason, RelyingTrust, VerificationOutcome};
use crate::signature::{KeyPair, Purpose, SchemeId};

/// X25519MLKEM768 client share.
pub const CLIENT_KEY_SHARE_LEN: usize = 1216;
/// X25519MLKEM768 server share.
pub const SERVER_KEY_SHARE_LEN: usize = 1120;
pub const FRAME_HEADER_LEN: usize = 4;
const MAX_FRAME: usize = (1 << 24) - 1;
const CV_CONTEXT: &[u8] = b"TLS 1.3, server CertificateVerify";
const RECV_TIMEOUT: Duration = Duration::from_secs(10);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum MessageKind {
    ClientHello = 1,
    ServerHello = 2,
    Certificate = 11,
    CertificateVerify = 15,
    Finished = 20,
    Alert = 21,
}

impl MessageKind {
    fn from_u8(v: u8) -> Option<Self> {
        Some(match v {
            1 => MessageKind::ClientHello,
            2 => MessageKind::ServerHello,
            11 => MessageKind::Certificate,
            15 => MessageKind::CertificateVerify,
            20 => MessageKind::Finished,
            21 => MessageKind::Alert,
            _ => return None,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Client,
    Server,
}

/// One frame as the client saw it: sent by the client or received from the
/// server (after any tampering in transit).
#[derive(Clone, Debug, Serialize)]
pub struct RecordedMessage {
    pub from: Side,
    pub kind: MessageKind,
    pub len: usize,
    #[serde(skip)]
    pub frame: Vec<u8>,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct HandshakeTranscript {
    pub messages: Vec<RecordedMessage>,
}

impl HandshakeTranscript {
    pub fn total_bytes(&self) -> usize {
        self.messages.iter().map(|m| m.len).sum()
    }

    pub fn bytes_of(&self, kind: MessageKind) -> usize {
        self.messages.iter().filter(|m| m.kind == kind).map(|m| m.len).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuthMode {
    Landmark,
    Standalone,
    Classical,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, thiserror::Error)]
#[serde(tag = "failure", rename_all = "snake_case")]
pub enum HandshakeFailure {
    #[error("certificate rejected: {0}")]
    Certificate(Reason),
    #[error("certificate_verify signature invalid")]
    BadCertificateVerify,
    #[error("finished mismatch")]
    BadFinished,
    #[error("peer sent alert {0}")]
    PeerAlert(u8),
    #[error("malformed {0:?}")]
    Decode(MessageKind),
    #[error("unexpected message")]
    Unexpected,
    #[error("transport closed")]
    Transport,
}

impl HandshakeFailure {
    /// TLS alert description sent for this failure.
    pub fn alert(&self) -> u8 {
        match self {
            HandshakeFailure::Certificate(Reason::Revoked) => 44,
            HandshakeFailure::Certificate(Reason::Expired) => 45,
            HandshakeFailure::Certificate(Reason::UnknownLandmark | Reason::UntrustedLog | Reason::PolicyUnsatisfied) => 48,
            HandshakeFailure::Certificate(_) => 42,
            HandshakeFailure::BadCertificateVerify | HandshakeFailure::BadFinished => 51,
            HandshakeFailure::PeerAlert(a) => *a,
            HandshakeFailure::Decode(_) => 50,
            HandshakeFailure::Unexpected => 10,
            HandshakeFailure::Transport => 80,
        }
    }

    pub fn reason(&self) -> &'static str {
        match self {
            HandshakeFailure::Certificate(r) => r.code(),
            HandshakeFailure::BadCertificateVerify => "bad_certificate_verify",
            HandshakeFailure::BadFinished => "bad_finished",
            HandshakeFailure::PeerAlert(_) => "peer_alert",
            HandshakeFailure::Decode(_) => "decode_error",
            HandshakeFailure::Unexpected => "unexpected_message",
            HandshakeFailure::Transport => "transport",
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Authenticated {
    pub mode: AuthMode,
    /// `None` for classical certificates.
    pub verification: Option<VerificationOutcome>,
    pub certificate_len: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct HandshakeResult {
    pub transcript: HandshakeTranscript,
    pub outcome: Result<Authenticated, HandshakeFailure>,
    pub client_to_server: u64,
    pub server_to_client: u64,
}

impl HandshakeResult {
    pub fn wire_bytes(&self) -> u64 {
        self.client_to_server + self.server_to_client
    }
}

/// What the server presents.
#[derive(Clone, Debug)]
pub enum ServerCredentials {
    Mtc(CertInventory),
    Classical(ClassicalCertificate),
}

pub struct Server {
    pub credentials: ServerCredentials,
    pub key: KeyPair,
}

pub struct Client<'a> {
    pub trust: &'a RelyingTrust,
    pub now: u64,
    /// Issuer accepted for classical certificates.
    pub classical_issuer: Option<(SchemeId, Vec<u8>)>,
    /// Anchors to advertise; defaults to what the trust store supports.
    pub anchors: Option<Vec<AdvertisedAnchor>>,
}

impl<'a> Client<'a> {
    pub fn new(trust: &'a RelyingTrust, now: u64) -> Self {
        Client { trust, now, classical_issuer: None, anchors: None }
    }
}

/// Mutates frames in transit: `(direction, frame number in that direction,
/// frame bytes)`.
pub type Tamper = dyn Fn(Side, usize, &mut Vec<u8>) + Sync;

struct Endpoint<'t> {
    side: Side,
    tx: Sender<Vec<u8>>,
    rx: Receiver<Vec<u8>>,
    sent: &'t AtomicU64,
    frames_sent: usize,
    tamper: Option<&'t Tamper>,
}

impl Endpoint<'_> {
    fn send(&mut self, kind: MessageKind, body: &[u8]) -> Vec<u8> {
        let frame = frame(kind, body);
        let mut wire = frame.clone();
        if let Some(t) = self.tamper {
            t(self.side, self.frames_sent, &mut wire);
        }
        self.frames_sent += 1;
        self.sent.fetch_add(wire.len() as u64, Ordering::Relaxed);
        // The peer may have hung up after an alert.
        let _ = self.tx.send(wire);
        frame
    }

    fn recv(&mut self) -> Result<(MessageKind, Vec<u8>), HandshakeFailure> {
        let wire = match self.rx.recv_timeout(RECV_TIMEOUT) {
            Ok(w) => w,
            Err(RecvTimeoutError::Timeout | RecvTimeoutError::Disconnected) => return Err(HandshakeFailure::Transport),
        };
        if wire.len() < FRAME_HEADER_LEN {
            return Err(HandshakeFailure::Unexpected);
        }
        let len = u32::from_be_bytes([0, wire[1], wire[2], wire[3]]) as usize;
        let kind = MessageKind::from_u8(wire[0]).ok_or(HandshakeFailure::Unexpected)?;
        if wire.len() != FRAME_HEADER_LEN + len {
            return Err(HandshakeFailure::Decode(kind));
        }
        Ok((kind, wire))
    }

    fn expect(&mut self, want: MessageKind) -> Result<Vec<u8>, HandshakeFailure> {
        let (kind, wire) = self.recv()?;
        if kind == MessageKind::Alert {
            return Err(HandshakeFailure::PeerAlert(wire.get(FRAME_HEADER_LEN).copied().unwrap_or(0)));
        }
        if kind != want {
            return Err(HandshakeFailure::Unexpected);
        }
        Ok(wire)
    }
}

fn frame(kind: MessageKind, body: &[u8]) -> Vec<u8> {
    assert!(body.len() <= MAX_FRAME, "frame body too large");
    let mut out = Vec::with_capacity(FRAME_HEADER_LEN + body.len());
    out.push(kind as u8);
    out.extend_from_slice(&(body.len() as u32).to_be_bytes()[1..]);
    out.extend_from_slice(body);
    out
}

fn body(frame: &[u8]) -> &[u8] {
    &frame[FRAME_HEADER_LEN..]
}

/// Signed content for CertificateVerify: 64 spaces, context label, a zero
/// byte and the SHA-256 of every prior handshake frame.
pub fn certificate_verify_message(transcript_hash: &[u8; 32]) -> Vec<u8> {
    let mut m = vec![0x20u8; 64];
    m.extend_from_slice(CV_CONTEXT);
    m.push(0);
    m.extend_from_slice(transcript_hash);
    m
}

fn finished_mac(side: Side, secret: &[u8; 32], transcript_hash: &[u8; 32]) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(match side {
        Side::Client => b"client finished".as_slice(),
        Side::Server => b"server finished".as_slice(),
    });
    h.update(secret);
    h.update(transcript_hash);
    h.finalize().into()
}

fn key_share(len: usize, seed: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(len);
    let mut block: [u8; 32] = Sha256::digest(seed).into();
    while out.len() < len {
        out.extend_from_slice(&block);
        block = Sha256::digest(block).into();
    }
    out.truncate(len);
    out
}

fn encode_anchors(anchors: &[AdvertisedAnchor]) -> Vec<u8> {
    let mut w = Writer::default();
    w.u8(anchors.len().min(255) as u8);
    for a in anchors.iter().take(255) {
        match a {
            AdvertisedAnchor::Log(id) => {
                w.u8(0);
                w.bytes16(id.to_string().as_bytes());
            }
            AdvertisedAnchor::Landmarks(r) => {
                w.u8(1);
                w.bytes16(r.base.to_string().as_bytes());
                w.u64(r.min);
                w.u64(r.max);
            }
        }
    }
    w.buf
}

fn decode_anchors(r: &mut Reader) -> Result<Vec<AdvertisedAnchor>, DecodeError> {
    let n = r.u8()?;
    let mut out = Vec::with_capacity(n as usize);
    for _ in 0..n {
        let kind = r.u8()?;
        let id = std::str::from_utf8(r.bytes16()?).map_err(|_| DecodeError::Utf8("trust anchor id"))?;
        let id = parse_taid(id).map_err(|_| DecodeError::Invalid("trust anchor id"))?;
        out.push(match kind {
            0 => AdvertisedAnchor::Log(id),
            1 => {
                let (min, max) = (r.u64()?, r.u64()?);
                AdvertisedAnchor::Landmarks(TrustAnchorRange::new(id, min, max).ok_or(DecodeError::Invalid("anchor range"))?)
            }
            _ => return Err(DecodeError::Invalid("anchor kind")),
        });
    }
    Ok(out)
}

const CERT_TYPE_MTC: u8 = 0;
const CERT_TYPE_CLASSICAL: u8 = 1;

/// Runs one handshake. `tamper`, if given, edits frames in transit.
pub fn run_handshake(client: &Client, server: &Server, tamper: Option<&Tamper>) -> HandshakeResult {
    let (c_tx, s_rx) = mpsc::channel();
    let (s_tx, c_rx) = mpsc::channel();
    let c_sent = AtomicU64::new(0);
    let s_sent = AtomicU64::new(0);
    let (transcript, outcome) = std::thread::scope(|scope| {
        let mut s_end = Endpoint { side: Side::Server, tx: s_tx, rx: s_rx, sent: &s_sent, frames_sent: 0, tamper };
        scope.spawn(move || {
            if let Err(e) = serve(&mut s_end, server) {
                if !matches!(e, HandshakeFailure::PeerAlert(_) | HandshakeFailure::Transport) {
                    s_end.send(MessageKind::Alert, &[e.alert()]);
                }
            }
        });
        let mut c_end = Endpoint { side: Side::Client, tx: c_tx, rx: c_rx, sent: &c_sent, frames_sent: 0, tamper };
        let mut transcript = HandshakeTranscript::default();
        let outcome = connect(&mut c_end, client, &mut transcript);
        if let Err(e) = &outcome {
            if !matches!(e, HandshakeFailure::PeerAlert(_) | HandshakeFailure::Transport) {
                let f = c_end.send(MessageKind::Alert, &[e.alert()]);
                record(&mut transcript, Side::Client, f);
            }
        }
        drop(c_end);
        (transcript, outcome)
    });
    HandshakeResult {
        transcript,
        outcome,
        client_to_server: c_sent.into_inner(),
        server_to_client: s_sent.into_inner(),
    }
}

fn record(t: &mut HandshakeTranscript, from: Side, frame: Vec<u8>) {
    let kind = MessageKind::from_u8(frame[0]).unwrap_or(MessageKind::Alert);
    t.messages.push(RecordedMessage { from, kind, len: frame.len(), frame });
}

fn connect(end: &mut Endpoint, client: &Client, t: &mut HandshakeTranscript) -> Result<Authenticated, HandshakeFailure> {
    let anchors = client.anchors.clone().unwrap_or_else(|| advertise_anchors(client.trust));
    let client_share = key_share(CLIENT_KEY_SHARE_LEN, &client.now.to_be_bytes());
    let mut hello = Vec::new();
    hello.extend_from_slice(&Sha256::digest(b"client random"));
    hello.extend_from_slice(&client_share);
    hello.extend(encode_anchors(&anchors));
    let mut hash = Sha256::new();
    let f = end.send(MessageKind::ClientHello, &hello);
    hash.update(&f);
    record(t, Side::Client, f);

    let sh = end.expect(MessageKind::ServerHello).inspect(|f| record(t, Side::Server, f.clone()))?;
    hash.update(&sh);
    let server_share = body(&sh).get(32..).filter(|s| s.len() == SERVER_KEY_SHARE_LEN).ok_or(HandshakeFailure::Decode(MessageKind::ServerHello))?;
    let secret: [u8; 32] = Sha256::new().chain_update(&client_share).chain_update(server_share).finalize().into();

    let cf = end.expect(MessageKind::Certificate).inspect(|f| record(t, Side::Server, f.clone()))?;
    hash.update(&cf);
    let (auth, entity_scheme, entity_key) = authenticate(body(&cf), client)?;

    let cv = end.expect(MessageKind::CertificateVerify).inspect(|f| record(t, Side::Server, f.clone()))?;
    let th: [u8; 32] = hash.clone().finalize().into();
    hash.update(&cv);
    let mut r = Reader::new(body(&cv));
    let (scheme, sig) = (|| -> Result<_, DecodeError> {
        let s = r.u16()?;
        let sig = r.bytes16()?;
        Ok((s, sig))
    })()
    .map_err(|_| HandshakeFailure::Decode(MessageKind::CertificateVerify))?;
    if scheme != entity_scheme.code()
        || !client.trust.registry.verify(Purpose::CertificateVerify, entity_scheme, &entity_key, &certificate_verify_message(&th), sig)
    {
        return Err(HandshakeFailure::BadCertificateVerify);
    }

    let sf = end.expect(MessageKind::Finished).inspect(|f| record(t, Side::Server, f.clone()))?;
    let th: [u8; 32] = hash.clone().finalize().into();
    if body(&sf) != finished_mac(Side::Server, &secret, &th) {
        return Err(HandshakeFailure::BadFinished);
    }
    hash.update(&sf);
    let th: [u8; 32] = hash.finalize().into();
    let f = end.send(MessageKind::Finished, &finished_mac(Side::Client, &secret, &th));
    record(t, Side::Client, f);
    Ok(auth)
}

fn authenticate(cert_body: &[u8], client: &Client) -> Result<(Authenticated, SchemeId, Vec<u8>), HandshakeFailure> {
    let malformed = HandshakeFailure::Decode(MessageKind::Certificate);
    let (&ty, rest) = cert_body.split_first().ok_or(malformed.clone())?;
    match ty {
        CERT_TYPE_MTC => {
            let cert = decode_certificate(rest).map_err(|_| malformed)?;
            let outcome = verify_certificate(&cert, client.trust, client.now);
            if let Some(reason) = outcome.reason {
                return Err(HandshakeFailure::Certificate(reason));
            }
            let mode = match outcome.mode {
                Mode::Landmark => AuthMode::Landmark,
                Mode::Standalone => AuthMode::Standalone,
            };
            let scheme = cert.entry.spki_algorithm;
            Ok((Authenticated { mode, verification: Some(outcome), certificate_len: rest.len() }, scheme, cert.entity_public_key))
        }
        CERT_TYPE_CLASSICAL => {
            let cert = ClassicalCertificate::decode(rest).map_err(|_| malformed)?;
            let Some((scheme, pk)) = &client.classical_issuer else {
                return Err(HandshakeFailure::Certificate(Reason::UntrustedLog));
            };
            if let Err(reason) = cert.verify(*scheme, pk, &client.trust.registry, client.now) {
                return Err(HandshakeFailure::Certificate(reason));
            }
            let scheme = cert.entry.spki_algorithm;
            Ok((Authenticated { mode: AuthMode::Classical, verification: None, certificate_len: rest.len() }, scheme, cert.entity_public_key))
        }
        _ => Err(malformed),
    }
}

fn serve(end: &mut Endpoint, server: &Server) -> Result<(), HandshakeFailure> {
    let ch = end.expect(MessageKind::ClientHello)?;
    let mut hash = Sha256::new();
    hash.update(&ch);
    let b = body(&ch);
    if b.len() < 32 + CLIENT_KEY_SHARE_LEN {
        return Err(HandshakeFailure::Decode(MessageKind::ClientHello));
    }
    let client_share = &b[32..32 + CLIENT_KEY_SHARE_LEN];
    let mut r = Reader::new(&b[32 + CLIENT_KEY_SHARE_LEN..]);
    let anchors = decode_anchors(&mut r).and_then(|a| r.finish().map(|_| a)).map_err(|_| HandshakeFailure::Decode(MessageKind::ClientHello))?;

    let server_share = key_share(SERVER_KEY_SHARE_LEN, client_share);
    let mut sh = Vec::with_capacity(32 + SERVER_KEY_SHARE_LEN);
    sh.extend_from_slice(&Sha256::digest(b"server random"));
    sh.extend_from_slice(&server_share);
    hash.update(end.send(MessageKind::ServerHello, &sh));
    let secret: [u8; 32] = Sha256::new().chain_update(client_share).chain_update(&server_share).finalize().into();

    let mut cert = Vec::new();
    match &server.credentials {
        ServerCredentials::Mtc(inv) => {
            cert.push(CERT_TYPE_MTC);
            cert.extend(encode_certificate(select_certificate(inv, &anchors)).expect("server holds encodable certificates"));
        }
        ServerCredentials::Classical(c) => {
            cert.push(CERT_TYPE_CLASSICAL);
            cert.extend(c.encode());
        }
    }
    hash.update(end.send(MessageKind::Certificate, &cert));

    let th: [u8; 32] = hash.clone().finalize().into();
    let sig = server.key.sign(&certificate_verify_message(&th));
    let mut w = Writer::default();
    w.u16(server.key.scheme().code());
    w.bytes16(&sig);
    hash.update(end.send(MessageKind::CertificateVerify, &w.buf));

    let th: [u8; 32] = hash.clone().finalize().into();
    hash.update(end.send(MessageKind::Finished, &finished_mac(Side::Server, &secret, &th)));

    let cf = end.expect(MessageKind::Finished)?;
    let th: [u8; 32] = hash.finalize().into();
    if body(&cf) != finished_mac(Side::Client, &secret, &th) {
        return Err(HandshakeFailure::BadFinished);
    }
    Ok(())
}

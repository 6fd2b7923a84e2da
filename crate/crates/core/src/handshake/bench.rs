//! Microbenchmarks over the loopback handshake.
//!
//! Every scenario uses an ECDSA P-256 entity key. The classical scenario
//! swaps the Merkle proof for one ECDSA issuer signature.

use std::hint::black_box;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::{certificate_verify_message, run_handshake, AuthMode, Client, ClassicalIssuer, Server, ServerCredentials};
use crate::codec::{encode_certificate, MtcCertificate, TbsCertEntry};
use crate::deployment::{derive_key, Deployment, DeploymentSpec};
use crate::landmark::LandmarkStore;
use crate::relying_party::{verify_certificate, CertInventory, RelyingTrust};
use crate::signature::{verify_signature, SchemeId, SignatureRegistry};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Scenario {
    #[serde(rename = "classical-ecdsa")]
    ClassicalEcdsa,
    #[serde(rename = "standalone-16")]
    Standalone16,
    #[serde(rename = "landmark-16")]
    Landmark16,
    #[serde(rename = "landmark-1024")]
    Landmark1024,
    #[serde(rename = "landmark-4096")]
    Landmark4096,
}

impl Scenario {
    pub const ALL: [Scenario; 5] =
        [Scenario::ClassicalEcdsa, Scenario::Standalone16, Scenario::Landmark16, Scenario::Landmark1024, Scenario::Landmark4096];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::ClassicalEcdsa => "classical-ecdsa",
            Scenario::Standalone16 => "standalone-16",
            Scenario::Landmark16 => "landmark-16",
            Scenario::Landmark1024 => "landmark-1024",
            Scenario::Landmark4096 => "landmark-4096",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Scenario::ALL.into_iter().find(|x| x.name() == s)
    }

    /// Leaves in the tree or landmark subtree the certificate proves into.
    pub fn leaves(self) -> u64 {
        match self {
            Scenario::ClassicalEcdsa => 0,
            Scenario::Standalone16 | Scenario::Landmark16 => 16,
            Scenario::Landmark1024 => 1024,
            Scenario::Landmark4096 => 4096,
        }
    }
}

pub struct Fixture {
    pub scenario: Scenario,
    pub trust: RelyingTrust,
    pub server: Server,
    pub classical_issuer: Option<(SchemeId, Vec<u8>)>,
    pub now: u64,
    /// The certificate the server will present to this client.
    pub presented: Presented,
}

#[derive(Clone, Debug)]
pub enum Presented {
    Mtc(MtcCertificate),
    Classical(super::ClassicalCertificate),
}

impl Fixture {
    pub fn client(&self) -> Client<'_> {
        Client { trust: &self.trust, now: self.now, classical_issuer: self.classical_issuer.clone(), anchors: None }
    }

    pub fn certificate_bytes(&self) -> usize {
        match &self.presented {
            Presented::Mtc(c) => encode_certificate(c).expect("encodable").len(),
            Presented::Classical(c) => c.encode().len(),
        }
    }

    pub fn proof_bytes(&self) -> usize {
        match &self.presented {
            Presented::Mtc(c) => c.proof.inclusion.byte_len(),
            Presented::Classical(_) => 0,
        }
    }

    /// Certificate-path verification, as the client performs it.
    pub fn verify_once(&self) -> bool {
        match &self.presented {
            Presented::Mtc(c) => verify_certificate(c, &self.trust, self.now).accepted(),
            Presented::Classical(c) => {
                let (scheme, pk) = self.classical_issuer.as_ref().expect("classical fixture has an issuer");
                c.verify(*scheme, pk, &self.trust.registry, self.now).is_ok()
            }
        }
    }

    pub fn hash_ops(&self) -> Option<u32> {
        match &self.presented {
            Presented::Mtc(c) => Some(verify_certificate(c, &self.trust, self.now).hash_ops),
            Presented::Classical(_) => None,
        }
    }
}

const SUBJECT_INDEX: u64 = 5;

/// Builds the trust material and server credentials for a scenario.
pub fn fixture(scenario: Scenario) -> Fixture {
    let entity = derive_key(SchemeId::EcdsaP256, 7, "bench entity");
    let mut d = Deployment::new(DeploymentSpec::default());
    let now = d.now;
    if scenario == Scenario::ClassicalEcdsa {
        let issuer = ClassicalIssuer { key: derive_key(SchemeId::EcdsaP256, 7, "bench issuer") };
        let entry = TbsCertEntry::for_key(
            "amf.5gc.svc",
            vec!["amf.5gc.svc".into()],
            now,
            now + 86_400,
            SchemeId::EcdsaP256,
            entity.public_key(),
        );
        let cert = issuer.issue(entry, entity.public_key().to_vec());
        let trust = RelyingTrust::new(d.trust_config().clone(), None);
        return Fixture {
            scenario,
            trust,
            server: Server { credentials: ServerCredentials::Classical(cert.clone()), key: entity },
            classical_issuer: Some((SchemeId::EcdsaP256, issuer.key.public_key().to_vec())),
            now,
            presented: Presented::Classical(cert),
        };
    }

    for i in 0..scenario.leaves() {
        d.issue(&format!("nf{i}.5gc.svc"), &entity).expect("in-process issuance");
    }
    let signed = d.authority.cosigned().expect("cosigned").clone();
    let standalone = d.authority.standalone_certificate(SUBJECT_INDEX, &signed).expect("issued");
    if scenario == Scenario::Standalone16 {
        let trust = RelyingTrust::new(d.trust_config().clone(), Some(LandmarkStore::empty(d.log_id().clone())));
        return Fixture {
            scenario,
            trust,
            server: Server {
                credentials: ServerCredentials::Mtc(CertInventory { standalone: standalone.clone(), landmarks: vec![] }),
                key: entity,
            },
            classical_issuer: None,
            now,
            presented: Presented::Mtc(standalone),
        };
    }
    let record = d.allocate_landmark().expect("allocation").expect("log grew");
    let (_, landmark) = d.authority.landmark_certificate(SUBJECT_INDEX, Some(record.number)).expect("covered");
    let trust = d.relying_trust();
    let id = d.trust_config().landmark_base.child(record.number);
    Fixture {
        scenario,
        trust,
        server: Server {
            credentials: ServerCredentials::Mtc(CertInventory { standalone, landmarks: vec![(id, landmark.clone())] }),
            key: entity,
        },
        classical_issuer: None,
        now,
        presented: Presented::Mtc(landmark),
    }
}

#[derive(Clone, Copy, Debug, Default, Serialize)]
pub struct Stats {
    pub median_ns: f64,
    pub p95_ns: f64,
}

impl Stats {
    pub fn from_samples(mut samples: Vec<u64>) -> Self {
        if samples.is_empty() {
            return Stats::default();
        }
        samples.sort_unstable();
        let at = |q: f64| samples[((samples.len() - 1) as f64 * q).round() as usize] as f64;
        let median = if samples.len().is_multiple_of(2) {
            (samples[samples.len() / 2 - 1] + samples[samples.len() / 2]) as f64 / 2.0
        } else {
            samples[samples.len() / 2] as f64
        };
        Stats { median_ns: median, p95_ns: at(0.95) }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchConfig {
    pub iterations: usize,
    pub warmup: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig { iterations: 1000, warmup: 50 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchRow {
    pub scenario: Scenario,
    pub mode: AuthMode,
    pub cert_bytes: usize,
    pub proof_bytes: usize,
    pub hash_ops: Option<u32>,
    pub verify: Stats,
    pub certificate_verify: Stats,
    pub handshake: Stats,
    pub handshake_bytes: u64,
    /// Issuer and cosignature verifications per handshake.
    pub cert_path_signatures: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HostInfo {
    pub os: &'static str,
    pub arch: &'static str,
    pub cpus: usize,
    pub optimized: bool,
}

impl HostInfo {
    pub fn current() -> Self {
        HostInfo {
            os: std::env::consts::OS,
            arch: std::env::consts::ARCH,
            cpus: std::thread::available_parallelism().map_or(1, |n| n.get()),
            optimized: !cfg!(debug_assertions),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct BenchReport {
    pub host: HostInfo,
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
}

fn time<F: FnMut() -> bool>(n: usize, warmup: usize, mut f: F) -> Stats {
    for _ in 0..warmup {
        assert!(black_box(f()), "benchmark operation failed");
    }
    let mut samples = Vec::with_capacity(n);
    for _ in 0..n {
        let t = Instant::now();
        let ok = black_box(f());
        samples.push(t.elapsed().as_nanos() as u64);
        assert!(ok, "benchmark operation failed");
    }
    Stats::from_samples(samples)
}

pub fn bench_fixture(f: &Fixture, cfg: &BenchConfig) -> BenchRow {
    let verify = time(cfg.iterations, cfg.warmup, || f.verify_once());

    let th = [0x5au8; 32];
    let msg = certificate_verify_message(&th);
    let sig = f.server.key.sign(&msg);
    let (scheme, pk) = (f.server.key.scheme(), f.server.key.public_key().to_vec());
    let certificate_verify = time(cfg.iterations, cfg.warmup, || verify_signature(scheme, &pk, &msg, &sig));

    let registry = Arc::new(SignatureRegistry::new());
    let trust = f.trust.clone().with_registry(registry.clone());
    let client = Client { trust: &trust, ..f.client() };
    let first = run_handshake(&client, &f.server, None);
    let auth = first.outcome.as_ref().expect("fixture handshake succeeds");
    let mode = auth.mode;
    let before = registry.counts();
    let handshake = time(cfg.iterations, cfg.warmup, || run_handshake(&client, &f.server, None).outcome.is_ok());
    let runs = (cfg.iterations + cfg.warmup) as f64;
    let cert_path = (registry.counts() - before).certificate_path() as f64 / runs;

    BenchRow {
        scenario: f.scenario,
        mode,
        cert_bytes: f.certificate_bytes(),
        proof_bytes: f.proof_bytes(),
        hash_ops: f.hash_ops(),
        verify,
        certificate_verify,
        handshake,
        handshake_bytes: first.wire_bytes(),
        cert_path_signatures: cert_path,
    }
}

pub fn run_bench(scenarios: &[Scenario], cfg: &BenchConfig) -> BenchReport {
    let rows = scenarios.iter().map(|&s| bench_fixture(&fixture(s), cfg)).collect();
    BenchReport { host: HostInfo::current(), config: cfg.clone(), rows }
}

fn us(ns: f64) -> String {
    if ns < 1_000.0 {
        format!("{ns:.0} ns")
    } else {
        format!("{:.2} µs", ns / 1_000.0)
    }
}

pub fn render_markdown(r: &BenchReport) -> String {
    let mut out = format!(
        "Host: {} {}, {} CPUs, optimized: {}. {} iterations after {} warm-up.\n\n",
        r.host.os, r.host.arch, r.host.cpus, r.host.optimized, r.config.iterations, r.config.warmup
    );
    out.push_str("| Scenario | Cert (B) | Proof (B) | Hash ops | Verify (median / p95) | CertVerify (median / p95) | Handshake (median / p95) | Handshake bytes | Cert-path sigs |\n");
    out.push_str("|---|---:|---:|---:|---:|---:|---:|---:|---:|\n");
    for row in &r.rows {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} / {} | {} / {} | {} / {} | {} | {:.0} |\n",
            row.scenario.name(),
            row.cert_bytes,
            if row.proof_bytes == 0 { "-".to_string() } else { row.proof_bytes.to_string() },
            row.hash_ops.map_or("-".to_string(), |h| h.to_string()),
            us(row.verify.median_ns),
            us(row.verify.p95_ns),
            us(row.certificate_verify.median_ns),
            us(row.certificate_verify.p95_ns),
            us(row.handshake.median_ns),
            us(row.handshake.p95_ns),
            row.handshake_bytes,
            row.cert_path_signatures,
        ));
    }
    out
}

pub fn render_csv(r: &BenchReport) -> String {
    let mut out = String::from(
        "scenario,cert_bytes,proof_bytes,hash_ops,verify_median_ns,verify_p95_ns,certverify_median_ns,certverify_p95_ns,handshake_median_ns,handshake_p95_ns,handshake_bytes,cert_path_signatures\n",
    );
    for row in &r.rows {
        out.push_str(&format!(
            "{},{},{},{},{:.0},{:.0},{:.0},{:.0},{:.0},{:.0},{},{}\n",
            row.scenario.name(),
            row.cert_bytes,
            row.proof_bytes,
            row.hash_ops.map_or(String::new(), |h| h.to_string()),
            row.verify.median_ns,
            row.verify.p95_ns,
            row.certificate_verify.median_ns,
            row.certificate_verify.p95_ns,
            row.handshake.median_ns,
            row.handshake.p95_ns,
            row.handshake_bytes,
            row.cert_path_signatures,
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stats_median_and_p95() {
        let s = Stats::from_samples((1..=100).collect());
        assert_eq!(s.median_ns, 50.5);
        assert_eq!(s.p95_ns, 95.0);
        assert_eq!(Stats::from_samples(vec![3, 1, 2]).median_ns, 2.0);
    }

    #[test]
    fn scenario_names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(Scenario::from_name(s.name()), Some(s));
        }
        assert_eq!(Scenario::from_name("landmark-8"), None);
    }

    #[test]
    fn small_fixtures_handshake() {
        for s in [Scenario::ClassicalEcdsa, Scenario::Standalone16, Scenario::Landmark16] {
            let f = fixture(s);
            let row = bench_fixture(&f, &BenchConfig { iterations: 5, warmup: 1 });
            match s {
                Scenario::ClassicalEcdsa => {
                    assert_eq!(row.mode, AuthMode::Classical);
                    assert_eq!(row.cert_path_signatures, 1.0);
                }
                Scenario::Standalone16 => {
                    assert_eq!(row.mode, AuthMode::Standalone);
                    assert_eq!(row.proof_bytes, 128);
                    assert_eq!(row.cert_path_signatures, 2.0);
                }
                _ => {
                    assert_eq!(row.mode, AuthMode::Landmark);
                    assert_eq!(row.proof_bytes, 128);
                    assert_eq!(row.hash_ops, Some(4 + crate::relying_party::ENTRY_HASH_OPS));
                    assert_eq!(row.cert_path_signatures, 0.0);
                }
            }
        }
    }
}

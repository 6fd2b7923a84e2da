//! Analytical per-handshake authentication sizes and relying party state.

use serde::Serialize;

use crate::landmark::max_landmarks;
use crate::merkle::HASH_LEN;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SchemeSizes {
    pub name: &'static str,
    pub public_key: usize,
    pub signature: usize,
}

pub const ECDSA_P256: SchemeSizes = SchemeSizes { name: "ECDSA P-256", public_key: 65, signature: 64 };
pub const ED25519: SchemeSizes = SchemeSizes { name: "Ed25519", public_key: 32, signature: 64 };
pub const RSA_2048: SchemeSizes = SchemeSizes { name: "RSA-2048", public_key: 256, signature: 256 };
pub const ML_DSA_44: SchemeSizes = SchemeSizes { name: "ML-DSA-44", public_key: 1312, signature: 2420 };
pub const ML_DSA_65: SchemeSizes = SchemeSizes { name: "ML-DSA-65", public_key: 1952, signature: 3309 };
pub const ML_DSA_87: SchemeSizes = SchemeSizes { name: "ML-DSA-87", public_key: 2592, signature: 4627 };
pub const SLH_DSA_128F: SchemeSizes = SchemeSizes { name: "SLH-DSA-128f", public_key: 32, signature: 17088 };

pub const SCHEMES: [SchemeSizes; 7] = [ECDSA_P256, ED25519, RSA_2048, ML_DSA_44, ML_DSA_65, ML_DSA_87, SLH_DSA_128F];

#[derive(Clone, Debug, Serialize)]
pub struct SizeModel {
    /// Signatures in the X.509 chain (leaf and intermediate).
    pub chain_signatures: usize,
    pub scts: usize,
    /// Subject, validity, extensions, DER framing.
    pub base_cert: usize,
    /// Range, index and length prefixes around the proof hashes.
    pub proof_framing: usize,
    pub landmark_depth: usize,
    pub standalone_depth: usize,
    pub standalone_cosignatures: usize,
    pub ibe_baseline: usize,
}

impl Default for SizeModel {
    fn default() -> Self {
        SizeModel {
            chain_signatures: 2,
            scts: 2,
            base_cert: 200,
            proof_framing: 18,
            landmark_depth: 23,
            standalone_depth: 12,
            standalone_cosignatures: 2,
            ibe_baseline: 5000,
        }
    }
}

impl SizeModel {
    /// Chain signatures plus SCT signatures.
    pub fn x509_auth_overhead(&self, s: SchemeSizes) -> usize {
        (self.chain_signatures + self.scts) * s.signature
    }

    /// Entity certificate plus the intermediate's public key.
    pub fn x509_total(&self, s: SchemeSizes) -> usize {
        self.x509_auth_overhead(s) + 2 * s.public_key + self.base_cert
    }

    pub fn proof_hash_bytes(&self, depth: usize) -> usize {
        depth * HASH_LEN
    }

    pub fn proof_bytes(&self, depth: usize) -> usize {
        self.proof_hash_bytes(depth) + self.proof_framing
    }

    pub fn standalone_auth_overhead(&self, cosigner: SchemeSizes) -> usize {
        self.proof_bytes(self.standalone_depth) + self.standalone_cosignatures * cosigner.signature
    }

    pub fn landmark_auth_overhead(&self) -> usize {
        self.proof_bytes(self.landmark_depth)
    }

    pub fn mtc_total(&self, auth: usize, entity: SchemeSizes) -> usize {
        auth + entity.public_key + self.base_cert
    }

    pub fn landmark_total(&self, entity: SchemeSizes) -> usize {
        self.mtc_total(self.landmark_auth_overhead(), entity)
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SizeRow {
    pub scenario: String,
    pub auth_overhead: usize,
    pub entity_public_key: usize,
    pub base_cert: usize,
    pub total: usize,
    /// The published figure this row reproduces.
    pub reference_total: usize,
}

impl SizeRow {
    pub fn deviation_pct(&self) -> f64 {
        100.0 * (self.total as f64 - self.reference_total as f64) / self.reference_total as f64
    }
}

pub fn size_table(m: &SizeModel) -> Vec<SizeRow> {
    let mut rows = Vec::new();
    for (s, reference) in [(ECDSA_P256, 585), (ED25519, 552), (ML_DSA_65, 17_504)] {
        rows.push(SizeRow {
            scenario: format!("X.509 + {} SCTs ({})", m.scts, s.name),
            auth_overhead: m.x509_auth_overhead(s),
            entity_public_key: s.public_key,
            base_cert: m.base_cert,
            total: m.x509_total(s),
            reference_total: reference,
        });
    }
    for (s, reference) in [(ED25519, 762), (ML_DSA_65, 9_172)] {
        let auth = m.standalone_auth_overhead(s);
        rows.push(SizeRow {
            scenario: format!("MTC standalone ({} x{})", s.name, m.standalone_cosignatures),
            auth_overhead: auth,
            entity_public_key: s.public_key,
            base_cert: m.base_cert,
            total: m.mtc_total(auth, s),
            reference_total: reference,
        });
    }
    for (s, reference) in [(ECDSA_P256, 1_019), (ML_DSA_65, 2_906)] {
        rows.push(SizeRow {
            scenario: format!("MTC landmark ({} entity)", s.name),
            auth_overhead: m.landmark_auth_overhead(),
            entity_public_key: s.public_key,
            base_cert: m.base_cert,
            total: m.landmark_total(s),
            reference_total: reference,
        });
    }
    rows
}

#[derive(Clone, Debug, Serialize)]
pub struct ReductionRow {
    pub comparison: String,
    pub baseline: usize,
    pub mtc_landmark: usize,
    /// Positive when the landmark certificate is smaller.
    pub reduction_pct: f64,
    pub reference_pct: f64,
}

pub fn reduction_pct(baseline: usize, mtc: usize) -> f64 {
    100.0 * (baseline as f64 - mtc as f64) / baseline as f64
}

pub fn reduction_table(m: &SizeModel) -> Vec<ReductionRow> {
    let pq = m.landmark_total(ML_DSA_65);
    let classical = m.landmark_total(ECDSA_P256);
    let row = |comparison: String, baseline: usize, mtc: usize, reference_pct: f64| ReductionRow {
        comparison,
        baseline,
        mtc_landmark: mtc,
        reduction_pct: reduction_pct(baseline, mtc),
        reference_pct,
    };
    vec![
        row(format!("vs PQ X.509 ({})", ML_DSA_65.name), m.x509_total(ML_DSA_65), pq, 83.0),
        row(format!("vs PQ X.509 ({})", SLH_DSA_128F.name), m.x509_total(SLH_DSA_128F), pq, 92.0),
        row(format!("vs classical X.509 ({})", ECDSA_P256.name), m.x509_total(ECDSA_P256), classical, -74.0),
        row(format!("vs classical X.509 ({})", ED25519.name), m.x509_total(ED25519), classical, -85.0),
        row("vs IBE-TLS".into(), m.ibe_baseline, pq, 42.0),
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct RpEnvironment {
    pub name: String,
    pub cas: u64,
    pub active_landmarks: u64,
    pub hashes_per_landmark: u64,
}

impl RpEnvironment {
    /// Landmark count from certificate lifetime and landmark interval.
    pub fn from_schedule(name: &str, cas: u64, lifetime_secs: u64, interval_secs: u64, hashes_per_landmark: u64) -> Self {
        RpEnvironment {
            name: name.into(),
            cas,
            active_landmarks: max_landmarks(lifetime_secs, interval_secs),
            hashes_per_landmark,
        }
    }

    pub fn per_ca_bytes(&self) -> u64 {
        self.active_landmarks * self.hashes_per_landmark * HASH_LEN as u64
    }

    pub fn total_bytes(&self) -> u64 {
        self.per_ca_bytes() * self.cas
    }
}

pub fn default_environments() -> Vec<RpEnvironment> {
    const DAY: u64 = 86_400;
    vec![
        RpEnvironment::from_schedule("K8s (1 CA, 1h landmarks)", 1, DAY, 3_600, 2),
        RpEnvironment::from_schedule("K8s (10 CAs)", 10, DAY, 3_600, 2),
        RpEnvironment::from_schedule("5G/6G (1 NRF, 10min landmarks)", 1, DAY, 600, 2),
        RpEnvironment::from_schedule("5G/6G (5 PLMNs roaming)", 5, DAY, 600, 2),
        RpEnvironment { name: "Satellite (1,000 nodes, 25 landmarks)".into(), cas: 1_000, active_landmarks: 25, hashes_per_landmark: 1 },
    ]
}

#[derive(Clone, Debug, Serialize)]
pub struct RpStateRow {
    pub environment: String,
    pub active_landmarks: u64,
    pub per_ca: u64,
    pub total: u64,
}

pub fn rp_state_table(envs: &[RpEnvironment]) -> Vec<RpStateRow> {
    envs.iter()
        .map(|e| RpStateRow {
            environment: e.name.clone(),
            active_landmarks: e.active_landmarks,
            per_ca: e.per_ca_bytes(),
            total: e.total_bytes(),
        })
        .collect()
}

/// Server-side authentication bytes with and without CertificateVerify,
/// for the experiment that drops it. Sizes only.
pub fn certificate_verify_savings(m: &SizeModel, entity: SchemeSizes) -> (usize, usize) {
    let with = m.landmark_total(entity) + entity.signature;
    (with, m.landmark_total(entity))
}

pub fn render_markdown(m: &SizeModel, envs: &[RpEnvironment]) -> String {
    let mut out = String::new();
    out.push_str("## Signature and key sizes\n\n| Scheme | Public key (B) | Signature (B) |\n|---|---:|---:|\n");
    for s in SCHEMES {
        out.push_str(&format!("| {} | {} | {} |\n", s.name, s.public_key, s.signature));
    }
    out.push_str("\n## Per-handshake certificate size\n\n| Scenario | Auth overhead (B) | Entity key (B) | Base cert (B) | Total (B) | Reference (B) | Deviation |\n|---|---:|---:|---:|---:|---:|---:|\n");
    for r in size_table(m) {
        out.push_str(&format!(
            "| {} | {} | {} | {} | {} | {} | {:+.2}% |\n",
            r.scenario, r.auth_overhead, r.entity_public_key, r.base_cert, r.total, r.reference_total, r.deviation_pct()
        ));
    }
    out.push_str(&format!(
        "\nLandmark proof at depth {}: {} hash bytes, {} bytes framed.\n",
        m.landmark_depth,
        m.proof_hash_bytes(m.landmark_depth),
        m.proof_bytes(m.landmark_depth)
    ));
    out.push_str("\n## Bandwidth reduction of MTC landmark certificates\n\n| Comparison | Baseline (B) | MTC landmark (B) | Reduction | Reference |\n|---|---:|---:|---:|---:|\n");
    for r in reduction_table(m) {
        out.push_str(&format!(
            "| {} | {} | {} | {:.1}% | {:.0}% |\n",
            r.comparison, r.baseline, r.mtc_landmark, r.reduction_pct, r.reference_pct
        ));
    }
    out.push_str("\n## Relying party state\n\n| Environment | Active landmarks | Per CA (B) | Total (B) |\n|---|---:|---:|---:|\n");
    for r in rp_state_table(envs) {
        out.push_str(&format!("| {} | {} | {} | {} |\n", r.environment, r.active_landmarks, r.per_ca, r.total));
    }
    out
}

pub fn render_csv(m: &SizeModel, envs: &[RpEnvironment]) -> String {
    let mut out = String::from("table,row,value_a,value_b,value_c,value_d\n");
    for r in size_table(m) {
        out.push_str(&format!("cert_sizes,{},{},{},{},{}\n", r.scenario, r.auth_overhead, r.entity_public_key, r.total, r.reference_total));
    }
    for r in reduction_table(m) {
        out.push_str(&format!("reduction,{},{},{},{:.2},{:.0}\n", r.comparison, r.baseline, r.mtc_landmark, r.reduction_pct, r.reference_pct));
    }
    for r in rp_state_table(envs) {
        out.push_str(&format!("rp_state,{},{},{},{},\n", r.environment, r.active_landmarks, r.per_ca, r.total));
    }
    out
}

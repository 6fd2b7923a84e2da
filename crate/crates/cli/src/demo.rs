//! Scripted end-to-end run over loopback HTTP: issuance, cosigning,
//! mirror sync, landmark allocation, distribution, a landmark handshake,
//! revocation and the rejected handshake that follows.

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mtc_core::authority::IssueRequest;
use mtc_core::codec::{decode_certificate, MtcCertificate};
use mtc_core::deployment::derive_key;
use mtc_core::handshake::{run_handshake, AuthMode, Client, HandshakeFailure, HandshakeResult, Server, ServerCredentials};
use mtc_core::landmark::{LandmarkSequence, LandmarkStore};
use mtc_core::relying_party::{verify_certificate, CertInventory, Reason, RelyingTrust};
use mtc_core::signature::{KeyPair, SchemeId, SignatureRegistry};
use mtc_core::trust::TrustConfig;
use mtc_services::ca::FailInject;
use mtc_services::client::CosignerClient;
use mtc_services::cluster::{ClusterSpec, LocalCluster};
use mtc_services::api::CosignResponse;
use mtc_services::util::unix_now;

use crate::args::{DemoArgs, FailInjectArg};

pub const SUBJECT: &str = "amf.5gc.svc";

#[derive(Clone, Debug, Default)]
pub struct DemoOptions {
    pub withhold_entry: bool,
    pub stale_distributor: bool,
    pub data_dir: Option<PathBuf>,
    pub certs: u64,
}

impl From<DemoArgs> for DemoOptions {
    fn from(a: DemoArgs) -> Self {
        DemoOptions {
            withhold_entry: a.fail_inject == Some(FailInjectArg::WithholdEntry),
            stale_distributor: a.stale_distributor,
            data_dir: a.data_dir,
            certs: a.certs,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DemoOutcome {
    /// Every stage ran and the revoked certificate was refused.
    Completed,
    /// The withheld entry made the mirror refuse and issuance failed closed.
    FailedClosed,
}

#[derive(Clone, Debug)]
pub struct DemoReport {
    pub outcome: DemoOutcome,
    pub stages: Vec<(String, String)>,
    /// Authentication mode of the handshake before revocation.
    pub handshake_mode: Option<AuthMode>,
    /// Certificate-path signature verifications in that handshake.
    pub handshake_cert_path_signatures: u64,
    /// Alert the client sent after revocation.
    pub revoked_alert: Option<u8>,
    pub mirror_refusal: Option<String>,
    pub elapsed: Duration,
}

#[derive(Debug, thiserror::Error)]
#[error("demo failed at stage {stage}: {message}")]
pub struct DemoError {
    pub stage: &'static str,
    pub message: String,
}

struct Script<'a> {
    out: &'a mut dyn Write,
    stages: Vec<(String, String)>,
    start: Instant,
}

impl Script<'_> {
    fn step(&mut self, stage: &str, detail: impl Into<String>) {
        let detail = detail.into();
        let _ = writeln!(self.out, "[{:>6.3}s] {stage:<20} {detail}", self.start.elapsed().as_secs_f64());
        self.stages.push((stage.to_string(), detail));
    }
}

fn fail(stage: &'static str) -> impl Fn(String) -> DemoError {
    move |message| DemoError { stage, message }
}

fn request(trust_token: &str, subject: &str, key: &KeyPair) -> IssueRequest {
    IssueRequest {
        subject: subject.into(),
        dns_names: vec![subject.into()],
        scheme: key.scheme(),
        public_key: key.public_key().to_vec(),
        not_before: None,
        lifetime_secs: None,
        admission_token: trust_token.into(),
    }
}

fn handshake(trust: &RelyingTrust, inventory: &CertInventory, key: &KeyPair) -> HandshakeResult {
    let server = Server { credentials: ServerCredentials::Mtc(inventory.clone()), key: KeyPair::from_seed(key.scheme(), key.seed()).expect("seed") };
    run_handshake(&Client::new(trust, unix_now()), &server, None)
}

pub async fn run(opts: &DemoOptions, out: &mut dyn Write) -> Result<DemoReport, DemoError> {
    let mut s = Script { out, stages: Vec::new(), start: Instant::now() };
    let tmp;
    let base = match &opts.data_dir {
        Some(d) => d.clone(),
        None => {
            tmp = tempfile::tempdir().map_err(|e| fail("start")(e.to_string()))?;
            tmp.path().to_path_buf()
        }
    };
    let spec = ClusterSpec {
        witnesses: 2,
        mirror: true,
        required_k: 2,
        require_mirror: opts.withhold_entry,
        fail_inject: FailInject { withhold_entry: opts.withhold_entry },
        data_dir: Some(base.join("state")),
        ..Default::default()
    };
    let cluster = LocalCluster::start(spec).await.map_err(|e| fail("start")(e.to_string()))?;
    let result = script(&cluster, opts, &base, &mut s).await;
    cluster.shutdown().await;
    let mut report = result?;
    report.stages = s.stages;
    report.elapsed = s.start.elapsed();
    let _ = writeln!(s.out, "demo finished in {:.2}s", report.elapsed.as_secs_f64());
    Ok(report)
}

async fn script(cluster: &LocalCluster, opts: &DemoOptions, base: &std::path::Path, s: &mut Script<'_>) -> Result<DemoReport, DemoError> {
    let mut report = DemoReport {
        outcome: DemoOutcome::Completed,
        stages: vec![],
        handshake_mode: None,
        handshake_cert_path_signatures: 0,
        revoked_alert: None,
        mirror_refusal: None,
        elapsed: Duration::ZERO,
    };
    let ca = cluster.ca_client();
    let token = cluster.admission_token();
    let trust: TrustConfig = ca.trust_config().await.map_err(|e| fail("start")(e.to_string()))?;
    s.step(
        "start",
        format!(
            "CA {} with {} witnesses and a mirror, k = {}{}",
            cluster.ca_url,
            cluster.witness_urls.len(),
            trust.policy.required_k,
            if trust.policy.require_mirror { ", mirror required" } else { "" }
        ),
    );

    // Issuance.
    let key = derive_key(SchemeId::EcdsaP256, 1, &format!("entity {SUBJECT}"));
    let first = ca.issue(&request(&token, SUBJECT, &key)).await;
    if opts.withhold_entry {
        let err = match first {
            Ok(r) => return Err(fail("issuance")(format!("index {} issued despite the withheld entry", r.index))),
            Err(e) => e,
        };
        if err.error_code() != Some("quorum_unavailable") {
            return Err(fail("issuance")(format!("expected quorum_unavailable, got {err}")));
        }
        s.step("issuance", format!("failed closed: {err}"));
        let mirror = CosignerClient::new(cluster.mirror_url.as_deref().expect("mirror"), Duration::from_secs(5));
        let cp = cluster.ca.read(|a| a.log().checkpoint());
        let refusal = match mirror.cosign(cp, Default::default()).await.map_err(|e| fail("mirror-refusal")(e.to_string()))? {
            CosignResponse::Refused { refusal, reason, .. } => {
                s.step("mirror-refusal", format!("{refusal}: {reason}"));
                refusal
            }
            CosignResponse::Signed { .. } => return Err(fail("mirror-refusal")("mirror signed a checkpoint it cannot replay".into())),
        };
        let seq = LandmarkSequence::parse(&ca.landmark_sequence().await.map_err(|e| fail("revocation")(e.to_string()))?)
            .map_err(|e| fail("revocation")(e.to_string()))?;
        if !seq.revoked.contains(0) {
            return Err(fail("revocation")("unreturned index 0 is not revoked".into()));
        }
        s.step("revocation", "index 0 was never returned and is published as revoked");
        report.outcome = DemoOutcome::FailedClosed;
        report.mirror_refusal = Some(refusal);
        return Ok(report);
    }
    let first = first.map_err(|e| fail("issuance")(e.to_string()))?;
    let standalone = decode_certificate(&hex::decode(&first.certificate).map_err(|e| fail("issuance")(e.to_string()))?)
        .map_err(|e| fail("issuance")(e.to_string()))?;
    for i in 1..opts.certs.max(1) {
        let k = derive_key(SchemeId::EcdsaP256, 1, &format!("entity nf{i}"));
        ca.issue(&request(&token, &format!("nf{i}.5gc.svc"), &k)).await.map_err(|e| fail("issuance")(e.to_string()))?;
    }
    let size = cluster.ca.read(|a| a.size());
    s.step("issuance", format!("{SUBJECT} at index {}, log size {size}", first.index));

    // Cosigning.
    let registry = Arc::new(SignatureRegistry::new());
    let rp = RelyingTrust::new(trust.clone(), None).with_registry(registry.clone());
    let v = verify_certificate(&standalone, &rp, unix_now());
    if !v.accepted() {
        return Err(fail("cosign")(format!("standalone certificate rejected: {:?}", v.reason)));
    }
    s.step(
        "cosign",
        format!(
            "{} cosignatures on checkpoint size {}, standalone verify used {} signature checks",
            standalone.proof.cosignatures.len(),
            first.checkpoint_size,
            registry.counts().cosignature
        ),
    );

    // Mirror sync.
    let mirror = cluster.mirror_client().expect("mirror");
    let status = mirror.sync().await.map_err(|e| fail("mirror-sync")(e.to_string()))?;
    let ca_cp = cluster.ca.read(|a| a.cosigned().map(|c| c.checkpoint()));
    if Some(status.checkpoint) != ca_cp {
        return Err(fail("mirror-sync")("mirror checkpoint differs from the CA".into()));
    }
    s.step("mirror-sync", format!("replica at size {} with root {}", status.synced_size, &status.checkpoint.root.to_hex()[..16]));

    // Landmark allocation.
    let alloc = ca.allocate_landmark(&token).await.map_err(|e| fail("landmark-allocation")(e.to_string()))?;
    let Some(number) = alloc.number else {
        return Err(fail("landmark-allocation")("no landmark allocated".into()));
    };
    let doc = ca.landmark_sequence().await.map_err(|e| fail("landmark-allocation")(e.to_string()))?;
    s.step("landmark-allocation", format!("landmark {number} at tree size {}, sequence header {:?}", alloc.tree_size.unwrap_or(0), doc.lines().next().unwrap_or("")));

    // Distribution.
    let path = base.join("run").join("landmarks.json");
    let mut dist = cluster.distributor(path.clone()).ok_or_else(|| fail("distribution")("no mirror".into()))?;
    if opts.stale_distributor {
        s.step("distribution", "skipped: distributor is stale");
    } else {
        let r = dist.refresh_once().await.map_err(|e| fail("distribution")(e.to_string()))?;
        if !r.installed.contains(&number) {
            return Err(fail("distribution")(format!("landmark {number} not installed: {:?}", r.rejected)));
        }
        s.step("distribution", format!("installed {:?} into {}", r.installed, path.display()));
    }

    // Landmark handshake.
    let lm = ca.landmark_cert(first.index, Some(number)).await.map_err(|e| fail("landmark-handshake")(e.to_string()))?;
    let lm_cert: MtcCertificate = decode_certificate(&hex::decode(&lm.certificate).map_err(|e| fail("landmark-handshake")(e.to_string()))?)
        .map_err(|e| fail("landmark-handshake")(e.to_string()))?;
    let inventory = CertInventory { standalone: standalone.clone(), landmarks: vec![(lm.landmark_id.clone(), lm_cert)] };
    let load = || LandmarkStore::load(&path).ok();
    let registry = Arc::new(SignatureRegistry::new());
    let client_trust = RelyingTrust::new(trust.clone(), load()).with_registry(registry.clone());
    let hs = handshake(&client_trust, &inventory, &key);
    let auth = hs.outcome.as_ref().map_err(|e| fail("landmark-handshake")(e.to_string()))?;
    let counts = registry.counts();
    let expected = if opts.stale_distributor { AuthMode::Standalone } else { AuthMode::Landmark };
    if auth.mode != expected {
        return Err(fail("landmark-handshake")(format!("authenticated in {:?} mode, expected {expected:?}", auth.mode)));
    }
    if auth.mode == AuthMode::Landmark && counts.certificate_path() != 0 {
        return Err(fail("landmark-handshake")(format!("{} certificate-path signatures verified", counts.certificate_path())));
    }
    report.handshake_mode = Some(auth.mode);
    report.handshake_cert_path_signatures = counts.certificate_path();
    s.step(
        if opts.stale_distributor { "fallback-handshake" } else { "landmark-handshake" },
        format!(
            "{:?} mode, {} B certificate, {} B on the wire, {} certificate-path signatures",
            auth.mode,
            auth.certificate_len,
            hs.wire_bytes(),
            counts.certificate_path()
        ),
    );

    // Revocation.
    let revoked = ca.revoke(first.index, first.index + 1, &token).await.map_err(|e| fail("revocation")(e.to_string()))?;
    let r = dist.refresh_once().await.map_err(|e| fail("revocation")(e.to_string()))?;
    s.step("revocation", format!("revoked {:?}, distributor refreshed (installed {:?})", revoked.revoked.ranges(), r.installed));

    // Rejected handshake.
    let client_trust = RelyingTrust::new(trust, load());
    let hs = handshake(&client_trust, &inventory, &key);
    match &hs.outcome {
        Err(f @ HandshakeFailure::Certificate(Reason::Revoked)) => {
            report.revoked_alert = Some(f.alert());
            s.step("rejected-handshake", format!("client sent alert {} ({})", f.alert(), f.reason()));
        }
        Err(f) => return Err(fail("rejected-handshake")(format!("failed for the wrong reason: {f}"))),
        Ok(a) => {
            let mode = a.verification.as_ref().map(|v| v.mode);
            return Err(fail("rejected-handshake")(format!("revoked certificate accepted in {mode:?} mode")));
        }
    }
    Ok(report)
}

//! Service roles and client commands.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use mtc_core::authority::{Authority, IssuancePolicy, IssueRequest};
use mtc_core::codec::{decode_certificate, encode_certificate, parse_taid, MtcCertificate};
use mtc_core::cosigner::Cosigner;
use mtc_core::landmark::{LandmarkSequence, LandmarkStore};
use mtc_core::relying_party::{verify_certificate, RelyingTrust};
use mtc_core::trust::{CosignerMode, TrustConfig};
use mtc_services::ca::{discover_cosigners, CaService};
use mtc_services::client::{CaClient, MirrorClient};
use mtc_services::cluster::trust_config;
use mtc_services::cosigner::{WitnessConfig, WitnessService};
use mtc_services::distributor::Distributor;
use mtc_services::mirror::{MirrorConfig, MirrorService};
use mtc_services::util::{load_or_create_key, serve, shutdown_signal, unix_now};

use crate::args::*;
use crate::CmdError;

const CLIENT_TIMEOUT: Duration = Duration::from_secs(30);

fn read_token(t: &TokenArgs) -> Result<String, CmdError> {
    match (&t.admission_token, &t.admission_token_file) {
        (Some(s), _) => Ok(s.clone()),
        (None, Some(p)) => read_token_file(p),
        (None, None) => Err(CmdError::Usage("one of --admission-token or --admission-token-file is required".into())),
    }
}

fn read_token_file(p: &Path) -> Result<String, CmdError> {
    let s = std::fs::read_to_string(p).map_err(|e| CmdError::Usage(format!("{}: {e}", p.display())))?;
    let s = s.trim().to_string();
    if s.is_empty() {
        return Err(CmdError::Usage(format!("{}: admission token is empty", p.display())));
    }
    Ok(s)
}

fn print_json(v: &impl serde::Serialize) {
    println!("{}", serde_json::to_string_pretty(v).expect("output serializes"));
}

async fn run_until_signal(router: mtc_services::Router, listen: &str, role: &str) -> Result<(), CmdError> {
    let (addr, handle) = serve(router, listen, shutdown_signal())
        .await
        .map_err(|e| CmdError::Runtime(format!("cannot listen on {listen}: {e}")))?;
    tracing::info!(%addr, "{role} listening");
    handle.await.map_err(CmdError::runtime)?.map_err(CmdError::runtime)?;
    tracing::info!("{role} stopped");
    Ok(())
}

pub async fn ca(a: CaArgs) -> Result<(), CmdError> {
    let token = read_token_file(&a.admission_token_file)?;
    if a.landmark_interval == 0 || a.cert_lifetime == 0 {
        return Err(CmdError::Usage("--landmark-interval and --cert-lifetime must be positive".into()));
    }
    let log_id = parse_taid(&a.log_id).map_err(|e| CmdError::Usage(format!("--log-id: {e}")))?;
    let mut policy = IssuancePolicy::derived(a.checkpoint_interval, a.landmark_interval, a.cert_lifetime, token);
    if let Some(m) = a.max_landmarks {
        policy.max_landmarks = m;
    }
    let timeout = Duration::from_millis(a.cosign_timeout_ms);
    let remotes = discover_cosigners(&a.cosigner_urls, timeout).await.map_err(CmdError::runtime)?;
    let public = a.public_url.clone().unwrap_or_else(|| {
        let l = mtc_services::util::normalize_listen(&a.listen).replace("0.0.0.0", "127.0.0.1");
        format!("http://{l}")
    });
    let config = trust_config(log_id, &remotes, a.policy_k, a.require_mirror, format!("{}/landmark-sequence", public.trim_end_matches('/')))
        .map_err(CmdError::Usage)?;
    let authority = Authority::open(&a.data_dir, config, policy.clone()).map_err(CmdError::runtime)?;
    tracing::info!(size = authority.size(), cosigners = remotes.len(), k = a.policy_k, "CA state loaded");
    let ca = Arc::new(CaService::new(authority, remotes, timeout));
    let tickers = ca.spawn_tickers(Duration::from_secs(a.landmark_interval), Duration::from_secs(a.checkpoint_interval.max(1)));
    let r = run_until_signal(ca.router(), &a.listen, "ca").await;
    for t in tickers {
        t.abort();
    }
    r
}

pub async fn cosigner(a: CosignerArgs) -> Result<(), CmdError> {
    let id = parse_taid(&a.id).map_err(|e| CmdError::Usage(format!("--id: {e}")))?;
    let key_file = a.key_file.clone().unwrap_or_else(|| a.data_dir.join("key.json"));
    let key = load_or_create_key(&key_file, a.scheme).map_err(|e| CmdError::Runtime(format!("{}: {e}", key_file.display())))?;
    let w = WitnessService::open(WitnessConfig { id, key, data_dir: Some(a.data_dir.clone()) }).map_err(CmdError::runtime)?;
    if let Some(cp) = w.state().last_signed {
        tracing::info!(size = cp.size, "resuming from last signed checkpoint");
    }
    run_until_signal(w.router(), &a.listen, "cosigner").await
}

pub async fn mirror(a: MirrorArgs) -> Result<(), CmdError> {
    let cosigner = if a.cosign {
        let id = parse_taid(a.id.as_deref().unwrap_or_default()).map_err(|e| CmdError::Usage(format!("--id: {e}")))?;
        let key_file = a.key_file.clone().unwrap_or_else(|| a.data_dir.join("key.json"));
        let key = load_or_create_key(&key_file, a.scheme).map_err(|e| CmdError::Runtime(format!("{}: {e}", key_file.display())))?;
        Some(Cosigner::open(a.data_dir.join("cosigner"), id, CosignerMode::Mirror, key).map_err(CmdError::runtime)?)
    } else {
        None
    };
    let m = Arc::new(
        MirrorService::open(MirrorConfig { ca_url: a.ca_url.clone(), data_dir: Some(a.data_dir.clone()), cosigner, timeout: CLIENT_TIMEOUT })
            .map_err(CmdError::runtime)?,
    );
    let sync = m.spawn_sync_loop(Duration::from_secs(a.sync_interval.max(1)));
    let r = run_until_signal(m.router(), &a.listen, "mirror").await;
    sync.abort();
    r
}

pub async fn distributor(a: DistributorArgs) -> Result<(), CmdError> {
    let ca = CaClient::new(&a.mtca_url, CLIENT_TIMEOUT);
    let trust: TrustConfig = match &a.policy_file {
        Some(p) => {
            let body = std::fs::read(p).map_err(|e| CmdError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&body).map_err(|e| CmdError::Usage(format!("{}: {e}", p.display())))?
        }
        None => ca.trust_config().await.map_err(CmdError::runtime)?,
    };
    trust.validate().map_err(|e| CmdError::Usage(e.to_string()))?;
    let mut d = Distributor::new(ca, MirrorClient::new(&a.mirror_url, CLIENT_TIMEOUT), trust, a.out.clone(), a.max_landmarks)
        .map_err(CmdError::runtime)?;
    if a.once {
        let report = d.refresh_once().await.map_err(CmdError::runtime)?;
        print_json(&serde_json::json!({
            "installed": report.installed,
            "rejected": report.rejected,
            "evicted": report.evicted,
            "out": a.out,
        }));
        return Ok(());
    }
    tokio::select! {
        _ = d.run(Duration::from_secs(a.interval.max(1))) => Ok(()),
        _ = shutdown_signal() => Ok(()),
    }
}

pub async fn issue(a: IssueArgs) -> Result<(), CmdError> {
    let token = read_token(&a.token)?;
    let key = load_or_create_key(&a.key_file, a.scheme).map_err(|e| CmdError::Runtime(format!("{}: {e}", a.key_file.display())))?;
    if key.scheme() != a.scheme {
        return Err(CmdError::Usage(format!("{} holds a {} key, not {}", a.key_file.display(), key.scheme(), a.scheme)));
    }
    let dns_names = if a.dns_names.is_empty() { vec![a.subject.clone()] } else { a.dns_names.clone() };
    let req = IssueRequest {
        subject: a.subject.clone(),
        dns_names,
        scheme: a.scheme,
        public_key: key.public_key().to_vec(),
        not_before: None,
        lifetime_secs: a.lifetime,
        admission_token: token,
    };
    let resp = CaClient::new(&a.ca_url, CLIENT_TIMEOUT).issue(&req).await.map_err(CmdError::runtime)?;
    let bytes = hex::decode(&resp.certificate).map_err(CmdError::runtime)?;
    std::fs::write(&a.out, &bytes).map_err(|e| CmdError::Runtime(format!("{}: {e}", a.out.display())))?;
    print_json(&serde_json::json!({
        "index": resp.index,
        "checkpoint_size": resp.checkpoint_size,
        "certificate": a.out,
        "bytes": bytes.len(),
    }));
    Ok(())
}

/// Reads a certificate file holding either raw bytes or hex.
pub fn read_certificate(path: &PathBuf) -> Result<MtcCertificate, CmdError> {
    let raw = std::fs::read(path).map_err(|e| CmdError::Usage(format!("{}: {e}", path.display())))?;
    let text = String::from_utf8_lossy(&raw);
    let bytes = match hex::decode(text.trim()) {
        Ok(b) if !b.is_empty() => b,
        _ => raw,
    };
    decode_certificate(&bytes).map_err(|e| CmdError::Reject(format!("malformed: {e}")))
}

pub async fn verify(a: VerifyArgs) -> Result<(), CmdError> {
    let ca = a.ca_url.as_ref().map(|u| CaClient::new(u, CLIENT_TIMEOUT));
    let config: TrustConfig = match (&a.trust_config, &ca) {
        (Some(p), _) => {
            let body = std::fs::read(p).map_err(|e| CmdError::Usage(format!("{}: {e}", p.display())))?;
            serde_json::from_slice(&body).map_err(|e| CmdError::Usage(format!("{}: {e}", p.display())))?
        }
        (None, Some(ca)) => ca.trust_config().await.map_err(CmdError::runtime)?,
        (None, None) => return Err(CmdError::Usage("--trust-config or --ca-url is required".into())),
    };
    let store = match &a.landmarks {
        Some(p) if p.exists() => Some(LandmarkStore::load(p).map_err(|e| CmdError::Usage(format!("{}: {e}", p.display())))?),
        _ => None,
    };
    let mut trust = RelyingTrust::new(config, store);
    if let Some(ca) = &ca {
        let seq = LandmarkSequence::parse(&ca.landmark_sequence().await.map_err(CmdError::runtime)?).map_err(CmdError::runtime)?;
        trust = trust.with_revoked(&seq.revoked);
    }
    if let Some(f) = a.first_available {
        trust = trust.with_preemptive_revocation(f);
    }
    let cert = match read_certificate(&a.cert) {
        Ok(c) => c,
        Err(CmdError::Reject(msg)) => {
            print_json(&serde_json::json!({"verdict": "reject", "reason": "malformed", "detail": msg}));
            return Err(CmdError::Reject("certificate rejected: malformed".into()));
        }
        Err(e) => return Err(e),
    };
    let outcome = verify_certificate(&cert, &trust, a.now.unwrap_or_else(unix_now));
    print_json(&serde_json::json!({
        "index": cert.index,
        "bytes": encode_certificate(&cert).map(|b| b.len()).unwrap_or(0),
        "outcome": outcome,
    }));
    if outcome.accepted() {
        Ok(())
    } else {
        Err(CmdError::Reject(format!("certificate rejected: {}", outcome.reason.map_or("unknown", |r| r.code()))))
    }
}

pub async fn revoke(a: RevokeArgs) -> Result<(), CmdError> {
    if a.lo >= a.hi {
        return Err(CmdError::Usage(format!("empty range [{}, {})", a.lo, a.hi)));
    }
    let token = read_token(&a.token)?;
    let resp = CaClient::new(&a.ca_url, CLIENT_TIMEOUT).revoke(a.lo, a.hi, &token).await.map_err(CmdError::runtime)?;
    print_json(&resp);
    Ok(())
}

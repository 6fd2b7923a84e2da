//! A whole deployment on loopback ports inside one process.

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use mtc_core::authority::{Authority, IssuancePolicy};
use mtc_core::codec::{parse_taid, TrustAnchorId};
use mtc_core::cosigner::Cosigner;
use mtc_core::deployment::derive_key;
use mtc_core::signature::SchemeId;
use mtc_core::trust::{AcceptancePolicy, CosignerMode, TrustConfig};
use tokio::sync::watch;
use tokio::task::JoinHandle;

use crate::ca::{discover_cosigners, CaService, FailInject, RemoteCosigner, SharedCa};
use crate::client::{CaClient, MirrorClient};
use crate::cosigner::{WitnessConfig, WitnessService};
use crate::distributor::Distributor;
use crate::mirror::{MirrorConfig, MirrorService, SharedMirror};
use crate::util::{bind, serve_on};

#[derive(Clone, Debug)]
pub struct ClusterSpec {
    pub log_id: String,
    pub witnesses: usize,
    pub mirror: bool,
    pub required_k: usize,
    pub require_mirror: bool,
    pub policy: IssuancePolicy,
    pub fail_inject: FailInject,
    /// In-memory state when `None`.
    pub data_dir: Option<PathBuf>,
    pub seed: u64,
    pub cosign_timeout: Duration,
    /// Background landmark/checkpoint tickers and mirror sync loop.
    pub tickers: bool,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            log_id: "32473".into(),
            witnesses: 2,
            mirror: true,
            required_k: 2,
            require_mirror: false,
            policy: IssuancePolicy::derived(2, 600, 86_400, "demo-token"),
            fail_inject: FailInject::default(),
            data_dir: None,
            seed: 1,
            cosign_timeout: Duration::from_secs(2),
            tickers: false,
        }
    }
}

pub struct LocalCluster {
    pub ca: SharedCa,
    pub ca_url: String,
    pub witness_urls: Vec<String>,
    pub mirror: Option<SharedMirror>,
    pub mirror_url: Option<String>,
    pub spec: ClusterSpec,
    stop: watch::Sender<bool>,
    handles: Vec<JoinHandle<std::io::Result<()>>>,
    tasks: Vec<JoinHandle<()>>,
}

fn url(addr: std::net::SocketAddr) -> String {
    format!("http://{addr}")
}

impl LocalCluster {
    pub async fn start(spec: ClusterSpec) -> std::io::Result<Self> {
        let log_id: TrustAnchorId = parse_taid(&spec.log_id).map_err(|e| std::io::Error::other(e.to_string()))?;
        let (stop, rx) = watch::channel(false);
        let stopped = move || {
            let mut rx = rx.clone();
            async move {
                let _ = rx.wait_for(|s| *s).await;
            }
        };
        let dir = |name: &str| spec.data_dir.as_ref().map(|d| d.join(name));
        let mut handles = Vec::new();
        let mut tasks = Vec::new();

        let mut witness_urls = Vec::new();
        for i in 0..spec.witnesses {
            let id = log_id.child(100 + i as u64);
            let key = derive_key(SchemeId::Ed25519, spec.seed, &format!("cosigner {id}"));
            let w = WitnessService::open(WitnessConfig { id, key, data_dir: dir(&format!("witness-{i}")) })?;
            let l = bind("127.0.0.1:0").await?;
            witness_urls.push(url(l.local_addr()?));
            handles.push(serve_on(w.router(), l, stopped()));
        }

        let ca_listener = bind("127.0.0.1:0").await?;
        let ca_url = url(ca_listener.local_addr()?);

        let (mirror, mirror_url) = if spec.mirror {
            let id = log_id.child(100 + spec.witnesses as u64);
            let key = derive_key(SchemeId::Ed25519, spec.seed, &format!("cosigner {id}"));
            let cosigner = match dir("mirror") {
                Some(d) => Cosigner::open(d.join("cosigner"), id, CosignerMode::Mirror, key)?,
                None => Cosigner::new(id, CosignerMode::Mirror, key),
            };
            let m = Arc::new(MirrorService::open(MirrorConfig {
                ca_url: ca_url.clone(),
                data_dir: dir("mirror"),
                cosigner: Some(cosigner),
                timeout: spec.cosign_timeout,
            })?);
            let l = bind("127.0.0.1:0").await?;
            let u = url(l.local_addr()?);
            handles.push(serve_on(m.router(), l, stopped()));
            if spec.tickers {
                tasks.push(m.spawn_sync_loop(Duration::from_millis(500)));
            }
            (Some(m), Some(u))
        } else {
            (None, None)
        };

        let mut urls = witness_urls.clone();
        urls.extend(mirror_url.clone());
        let remotes = discover_cosigners(&urls, spec.cosign_timeout).await.map_err(|e| std::io::Error::other(e.to_string()))?;
        let config = trust_config(log_id, &remotes, spec.required_k, spec.require_mirror, format!("{ca_url}/landmark-sequence"))
            .map_err(std::io::Error::other)?;
        let authority = match dir("ca") {
            Some(d) => Authority::open(d, config, spec.policy.clone()).map_err(|e| std::io::Error::other(e.to_string()))?,
            None => Authority::new(config, spec.policy.clone()),
        };
        let ca = Arc::new(CaService::new(authority, remotes, spec.cosign_timeout).with_fail_inject(spec.fail_inject));
        handles.push(serve_on(ca.router(), ca_listener, stopped()));
        if spec.tickers {
            tasks.extend(ca.spawn_tickers(
                Duration::from_secs(spec.policy.landmark_interval_secs.max(1)),
                Duration::from_secs(spec.policy.checkpoint_interval_secs.max(1)),
            ));
        }
        Ok(LocalCluster { ca, ca_url, witness_urls, mirror, mirror_url, spec, stop, handles, tasks })
    }

    pub fn ca_client(&self) -> CaClient {
        CaClient::new(&self.ca_url, Duration::from_secs(10))
    }

    pub fn mirror_client(&self) -> Option<MirrorClient> {
        self.mirror_url.as_ref().map(|u| MirrorClient::new(u, Duration::from_secs(10)))
    }

    pub fn admission_token(&self) -> String {
        self.spec.policy.admission_token.clone()
    }

    /// Distributor against this cluster's CA and mirror, writing to `out`.
    pub fn distributor(&self, out: PathBuf) -> Option<Distributor> {
        let trust = self.ca.read(|a| a.config().clone());
        Distributor::new(self.ca_client(), self.mirror_client()?, trust, out, self.spec.policy.max_landmarks as usize).ok()
    }

    pub async fn shutdown(self) {
        let _ = self.stop.send(true);
        for t in self.tasks {
            t.abort();
        }
        for h in self.handles {
            let _ = h.await;
        }
    }
}

/// Trust configuration for a CA whose cosigners are `remotes`.
pub fn trust_config(
    log_id: TrustAnchorId,
    remotes: &[RemoteCosigner],
    required_k: usize,
    require_mirror: bool,
    landmark_url: String,
) -> Result<TrustConfig, String> {
    let config = TrustConfig {
        landmark_base: log_id.child(1),
        policy: AcceptancePolicy {
            required_k,
            trusted_cosigners: remotes.iter().map(|r| r.info.clone()).collect(),
            require_mirror,
        },
        landmark_url,
        log_id,
    };
    config.validate().map_err(|e| e.to_string())?;
    Ok(config)
}

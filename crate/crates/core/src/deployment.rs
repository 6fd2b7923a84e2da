//! A whole deployment in one process: CA, witnesses, an optional mirror and
//! a distributor step. Used by the handshake bench, the demo and tests.

use sha2::{Digest, Sha256};

use crate::authority::{Authority, IssuancePolicy, IssueError, IssueRequest};
use crate::codec::{parse_taid, Cosignature, MtcCertificate, TrustAnchorId};
use crate::cosigner::Cosigner;
use crate::landmark::{
    apply_refresh, plan_refresh, FetchedSubtree, LandmarkRecord, LandmarkStore, RefreshError, RefreshReport,
};
use crate::merkle::{Checkpoint, LeafHash, LeafSource};
use crate::relying_party::RelyingTrust;
use crate::signature::{KeyPair, SchemeId, SignatureRegistry};
use crate::trust::{AcceptancePolicy, CosignerMode, TrustConfig};

#[derive(Clone, Debug)]
pub struct DeploymentSpec {
    pub log_id: String,
    pub witnesses: usize,
    pub mirror: bool,
    pub required_k: usize,
    pub require_mirror: bool,
    pub cosigner_scheme: SchemeId,
    pub policy: IssuancePolicy,
    /// Seed for every key in the deployment.
    pub seed: u64,
    pub start_time: u64,
}

impl Default for DeploymentSpec {
    fn default() -> Self {
        DeploymentSpec {
            log_id: "32473".into(),
            witnesses: 2,
            mirror: false,
            required_k: 2,
            require_mirror: false,
            cosigner_scheme: SchemeId::Ed25519,
            policy: IssuancePolicy::derived(2, 600, 86_400, "demo-token"),
            seed: 1,
            start_time: 1_760_000_000,
        }
    }
}

pub struct Deployment {
    pub authority: Authority,
    pub witnesses: Vec<Cosigner>,
    pub mirror: Option<Cosigner>,
    pub now: u64,
    seed: u64,
    issued: u64,
}

/// Deterministic key for `label` under `seed`.
pub fn derive_key(scheme: SchemeId, seed: u64, label: &str) -> KeyPair {
    let mut h = Sha256::new();
    h.update(seed.to_be_bytes());
    h.update(label.as_bytes());
    KeyPair::from_seed(scheme, &h.finalize().into()).expect("32-byte seed")
}

impl Deployment {
    pub fn new(spec: DeploymentSpec) -> Self {
        let log_id = parse_taid(&spec.log_id).expect("valid log id");
        let cosigner = |i: usize, mode| {
            let id = log_id.child(100 + i as u64);
            let key = derive_key(spec.cosigner_scheme, spec.seed, &format!("cosigner {id}"));
            Cosigner::new(id, mode, key)
        };
        let witnesses: Vec<Cosigner> = (0..spec.witnesses).map(|i| cosigner(i, CosignerMode::Witness)).collect();
        let mirror = spec.mirror.then(|| cosigner(spec.witnesses, CosignerMode::Mirror));
        let config = TrustConfig {
            policy: AcceptancePolicy {
                required_k: spec.required_k,
                trusted_cosigners: witnesses.iter().chain(mirror.iter()).map(Cosigner::info).collect(),
                require_mirror: spec.require_mirror,
            },
            landmark_base: log_id.child(1),
            landmark_url: "inproc:landmark-sequence".into(),
            log_id,
        };
        config.validate().expect("deployment policy is consistent");
        Deployment {
            authority: Authority::new(config, spec.policy),
            witnesses,
            mirror,
            now: spec.start_time,
            seed: spec.seed,
            issued: 0,
        }
    }

    pub fn trust_config(&self) -> &TrustConfig {
        self.authority.config()
    }

    pub fn log_id(&self) -> &TrustAnchorId {
        &self.authority.config().log_id
    }

    /// Fresh entity key, deterministic in the deployment seed.
    pub fn entity_key(&mut self, scheme: SchemeId) -> KeyPair {
        self.issued += 1;
        derive_key(scheme, self.seed, &format!("entity {}", self.issued))
    }

    pub fn request(&self, subject: &str, key: &KeyPair) -> IssueRequest {
        IssueRequest {
            subject: subject.into(),
            dns_names: vec![subject.into()],
            scheme: key.scheme(),
            public_key: key.public_key().to_vec(),
            not_before: None,
            lifetime_secs: None,
            admission_token: self.authority.policy().admission_token.clone(),
        }
    }

    pub fn issue(&mut self, subject: &str, key: &KeyPair) -> Result<MtcCertificate, IssueError> {
        self.issue_request(&self.request(subject, key), None)
    }

    /// Issues `req`. When `withheld` is set the mirror is served every
    /// entry except that index.
    pub fn issue_request(&mut self, req: &IssueRequest, withheld: Option<u64>) -> Result<MtcCertificate, IssueError> {
        let pending = self.authority.begin_issue(req, self.now)?;
        let source = Withholding { inner: self.authority.log(), withheld };
        let sigs = collect_cosignatures(&mut self.witnesses, self.mirror.as_mut(), &self.authority, &pending.checkpoint, &source);
        self.authority.finish_issue(pending.index, sigs)
    }

    pub fn allocate_landmark(&mut self) -> Result<Option<LandmarkRecord>, IssueError> {
        self.authority.allocate_landmark(self.now)
    }

    /// One distributor round against the CA's own log.
    pub fn refresh(&self, store: &mut LandmarkStore) -> Result<RefreshReport, RefreshError> {
        let seq = self.authority.landmark_sequence();
        let Some(reference) = self.authority.cosigned() else {
            return Ok(RefreshReport::default());
        };
        let log = self.authority.log();
        let fetched: Vec<_> = plan_refresh(store, &seq)
            .into_iter()
            .map(|plan| {
                let subtrees = plan
                    .subtrees()
                    .into_iter()
                    .map(|range| FetchedSubtree {
                        range,
                        hash: log.subtree_root(range).expect("range inside log"),
                        containment: log.subtree_consistency_proof(range, reference.size).expect("range inside reference"),
                    })
                    .collect();
                (plan, subtrees)
            })
            .collect();
        apply_refresh(
            store,
            &seq,
            reference,
            &fetched,
            &self.authority.config().policy,
            &SignatureRegistry::new(),
            self.authority.policy().max_landmarks as usize,
            self.now,
        )
    }

    /// Relying party trust with a freshly refreshed landmark store.
    pub fn relying_trust(&self) -> RelyingTrust {
        let mut store = LandmarkStore::empty(self.log_id().clone());
        self.refresh(&mut store).expect("own checkpoint satisfies own policy");
        RelyingTrust::new(self.trust_config().clone(), Some(store))
    }
}

/// A leaf source missing one index.
pub struct Withholding<'a> {
    pub inner: &'a dyn LeafSource,
    pub withheld: Option<u64>,
}

impl LeafSource for Withholding<'_> {
    fn leaf_at(&self, index: u64) -> Option<LeafHash> {
        if Some(index) == self.withheld {
            None
        } else {
            self.inner.leaf_at(index)
        }
    }
}

fn collect_cosignatures(
    witnesses: &mut [Cosigner],
    mirror: Option<&mut Cosigner>,
    authority: &Authority,
    cp: &Checkpoint,
    source: &dyn LeafSource,
) -> Vec<Cosignature> {
    let mut out = Vec::new();
    for w in witnesses.iter_mut() {
        let old = w.last_signed().map_or(0, |c| c.size);
        let Ok(proof) = authority.consistency_proof(old, cp.size) else { continue };
        if let Ok(sig) = w.witness_cosign(cp, &proof) {
            out.push(sig);
        }
    }
    if let Some(m) = mirror {
        if let Ok(sig) = m.mirror_cosign(cp, source) {
            out.push(sig);
        }
    }
    out
}

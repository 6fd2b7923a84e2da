//! Witness and mirror cosigners, and the relying-party side k-of-n check.

use std::collections::BTreeMap;
use std::fs::{self, OpenOptions};
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::codec::{hex_bytes, Cosignature, TrustAnchorId};
use crate::merkle::{
    consistency_root_check, verify_subtree_consistency, Checkpoint, ConsistencyCheck, ConsistencyProof, Hash,
    LeafSource, MerkleLog, SubtreeRange,
};
use crate::signature::{KeyPair, Purpose, SchemeId, SignatureRegistry};
use crate::trust::{AcceptancePolicy, CosignerMode, TrustedCosigner};

const STATE_FILE: &str = "last_signed.json";
const AUDIT_FILE: &str = "audit.log";

/// Why a cosigner declined to sign. `code()` is the wire reason.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum Refusal {
    #[error("checkpoint conflicts with previously signed history")]
    ForkDetected,
    #[error("checkpoint size {offered} is below last signed size {last}")]
    SizeRegression { last: u64, offered: u64 },
    #[error("consistency proof does not verify")]
    BadProof,
    #[error("entry {0} is unavailable")]
    EntryUnavailable(u64),
    #[error("replayed root does not match checkpoint")]
    RootMismatch,
    #[error("subtree is not contained in the checkpoint")]
    NotContained,
    #[error("checkpoint was never signed by this cosigner")]
    UnknownCheckpoint,
    #[error("operation not available in {0:?} mode")]
    WrongMode(CosignerMode),
    #[error("cosigner state could not be persisted: {0}")]
    Storage(String),
}

impl Refusal {
    pub fn code(&self) -> &'static str {
        match self {
            Refusal::ForkDetected => "fork_detected",
            Refusal::SizeRegression { .. } => "size_regression",
            Refusal::BadProof => "bad_proof",
            Refusal::EntryUnavailable(_) => "entry_unavailable",
            Refusal::RootMismatch => "root_mismatch",
            Refusal::NotContained => "not_contained",
            Refusal::UnknownCheckpoint => "unknown_checkpoint",
            Refusal::WrongMode(_) => "wrong_mode",
            Refusal::Storage(_) => "storage",
        }
    }
}

impl From<io::Error> for Refusal {
    fn from(e: io::Error) -> Self {
        Refusal::Storage(e.to_string())
    }
}

/// Signature over `root || start || end` of an aligned subtree.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubtreeCosignature {
    pub cosigner_id: TrustAnchorId,
    pub scheme: SchemeId,
    pub range: SubtreeRange,
    #[serde(with = "hex_bytes")]
    pub signature: Vec<u8>,
}

pub fn subtree_message(range: &SubtreeRange, root: &Hash) -> [u8; 48] {
    let mut m = [0u8; 48];
    m[..32].copy_from_slice(&root.0);
    m[32..40].copy_from_slice(&range.start().to_be_bytes());
    m[40..].copy_from_slice(&range.end().to_be_bytes());
    m
}

#[derive(Serialize, Deserialize)]
struct AuditRecord {
    kind: String,
    size: u64,
    root: Hash,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    range: Option<SubtreeRange>,
}

pub struct Cosigner {
    id: TrustAnchorId,
    mode: CosignerMode,
    key: KeyPair,
    last_signed: Option<Checkpoint>,
    /// Every checkpoint signed, by size. Rebuilt from the audit log.
    signed: BTreeMap<u64, Hash>,
    dir: Option<PathBuf>,
    last_hash_ops: u32,
}

impl Cosigner {
    pub fn new(id: TrustAnchorId, mode: CosignerMode, key: KeyPair) -> Self {
        Cosigner { id, mode, key, last_signed: None, signed: BTreeMap::new(), dir: None, last_hash_ops: 0 }
    }

    /// Cosigner whose state lives in `dir`: `last_signed.json` plus an
    /// append-only `audit.log` of JSON lines.
    pub fn open(dir: impl AsRef<Path>, id: TrustAnchorId, mode: CosignerMode, key: KeyPair) -> io::Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let mut c = Cosigner::new(id, mode, key);
        match fs::read(dir.join(STATE_FILE)) {
            Ok(b) => {
                c.last_signed = serde_json::from_slice(&b).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => {}
            Err(e) => return Err(e),
        }
        if let Ok(f) = fs::File::open(dir.join(AUDIT_FILE)) {
            for line in io::BufReader::new(f).lines() {
                let line = line?;
                // A torn final line from a crash is skipped.
                if let Ok(rec) = serde_json::from_str::<AuditRecord>(&line) {
                    if rec.kind == "checkpoint" {
                        c.signed.insert(rec.size, rec.root);
                    }
                }
            }
        }
        if let Some(cp) = c.last_signed {
            c.signed.insert(cp.size, cp.root);
        }
        c.dir = Some(dir);
        Ok(c)
    }

    pub fn id(&self) -> &TrustAnchorId {
        &self.id
    }

    pub fn mode(&self) -> CosignerMode {
        self.mode
    }

    pub fn last_signed(&self) -> Option<Checkpoint> {
        self.last_signed
    }

    /// Node hashes evaluated by the most recent consistency check.
    pub fn last_hash_ops(&self) -> u32 {
        self.last_hash_ops
    }

    pub fn info(&self) -> TrustedCosigner {
        TrustedCosigner {
            id: self.id.clone(),
            scheme: self.key.scheme(),
            public_key: self.key.public_key().to_vec(),
            mode: self.mode,
        }
    }

    /// Signs `new` if `proof` shows it extends the last signed checkpoint.
    /// The first checkpoint ever offered is accepted as is.
    pub fn witness_cosign(&mut self, new: &Checkpoint, proof: &ConsistencyProof) -> Result<Cosignature, Refusal> {
        self.last_hash_ops = 0;
        if let Some(last) = self.last_signed {
            self.check_order(&last, new)?;
            if last.size < new.size {
                let (check, ops) = consistency_root_check(&last, new, proof);
                self.last_hash_ops = ops;
                match check {
                    ConsistencyCheck::Consistent => {}
                    // When the old size is a power of two the proof is seeded
                    // with our own root, so a rewritten history can only
                    // surface as a new-root mismatch.
                    ConsistencyCheck::OldRootMismatch | ConsistencyCheck::NewRootMismatch => {
                        return Err(Refusal::ForkDetected)
                    }
                    ConsistencyCheck::Malformed => return Err(Refusal::BadProof),
                }
            }
        }
        self.sign_checkpoint(new)
    }

    /// Replays `[0, new.size)` from `entries` and signs only if every entry
    /// is present and the recomputed root matches.
    pub fn mirror_cosign(&mut self, new: &Checkpoint, entries: &dyn LeafSource) -> Result<Cosignature, Refusal> {
        if self.mode != CosignerMode::Mirror {
            return Err(Refusal::WrongMode(self.mode));
        }
        if let Some(last) = self.last_signed {
            self.check_order(&last, new)?;
        }
        let mut replay = MerkleLog::new();
        for i in 0..new.size {
            let leaf = entries.leaf_at(i).ok_or(Refusal::EntryUnavailable(i))?;
            replay.append(leaf).expect("in-memory append cannot fail");
        }
        if let Some(last) = self.last_signed {
            if replay.checkpoint_at(last.size).expect("last.size <= new.size") != last {
                return Err(Refusal::ForkDetected);
            }
        }
        if replay.checkpoint().root != new.root {
            return Err(Refusal::RootMismatch);
        }
        self.sign_checkpoint(new)
    }

    fn check_order(&self, last: &Checkpoint, new: &Checkpoint) -> Result<(), Refusal> {
        if new.size < last.size {
            return Err(Refusal::SizeRegression { last: last.size, offered: new.size });
        }
        if new.size == last.size && new.root != last.root {
            return Err(Refusal::ForkDetected);
        }
        Ok(())
    }

    fn sign_checkpoint(&mut self, cp: &Checkpoint) -> Result<Cosignature, Refusal> {
        if let Some(root) = self.signed.get(&cp.size) {
            if *root != cp.root {
                return Err(Refusal::ForkDetected);
            }
        }
        // State hits disk before the signature leaves.
        if let Some(dir) = &self.dir {
            let tmp = dir.join(format!("{STATE_FILE}.tmp"));
            let mut f = fs::File::create(&tmp)?;
            f.write_all(&serde_json::to_vec(cp).expect("checkpoint serializes"))?;
            f.sync_all()?;
            fs::rename(&tmp, dir.join(STATE_FILE))?;
            self.audit(&AuditRecord { kind: "checkpoint".into(), size: cp.size, root: cp.root, range: None })?;
        }
        self.last_signed = Some(*cp);
        self.signed.insert(cp.size, cp.root);
        Ok(Cosignature {
            cosigner_id: self.id.clone(),
            scheme: self.key.scheme(),
            signature: self.key.sign(&cp.signed_message()),
            checkpoint_size: cp.size,
        })
    }

    fn audit(&self, rec: &AuditRecord) -> io::Result<()> {
        let Some(dir) = &self.dir else { return Ok(()) };
        let mut f = OpenOptions::new().create(true).append(true).open(dir.join(AUDIT_FILE))?;
        let mut line = serde_json::to_vec(rec).expect("audit record serializes");
        line.push(b'\n');
        f.write_all(&line)?;
        f.sync_data()
    }

    /// Signs an aligned subtree after checking it is a node of a checkpoint
    /// this cosigner has already signed.
    pub fn sign_subtree(
        &mut self,
        range: &SubtreeRange,
        subtree_root: &Hash,
        containment: &ConsistencyProof,
        within: &Checkpoint,
    ) -> Result<SubtreeCosignature, Refusal> {
        if self.signed.get(&within.size) != Some(&within.root) {
            return Err(Refusal::UnknownCheckpoint);
        }
        if !verify_subtree_consistency(range, subtree_root, within, containment) {
            return Err(Refusal::NotContained);
        }
        self.audit(&AuditRecord { kind: "subtree".into(), size: within.size, root: *subtree_root, range: Some(*range) })?;
        Ok(SubtreeCosignature {
            cosigner_id: self.id.clone(),
            scheme: self.key.scheme(),
            range: *range,
            signature: self.key.sign(&subtree_message(range, subtree_root)),
        })
    }
}

/// Result of checking cosignatures against a policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PolicyOutcome {
    pub accepted: bool,
    /// Distinct trusted cosigners whose signature verified.
    pub valid: usize,
}

/// Accepts iff at least `required_k` distinct trusted cosigners signed
/// `checkpoint` (and one of them is a mirror when required). Stops verifying
/// as soon as the rule is met.
pub fn evaluate_policy(
    checkpoint: &Checkpoint,
    cosignatures: &[Cosignature],
    policy: &AcceptancePolicy,
    registry: &SignatureRegistry,
) -> PolicyOutcome {
    let msg = checkpoint.signed_message();
    let mut seen: Vec<&TrustAnchorId> = Vec::new();
    let mut valid = 0;
    let mut mirror = false;
    for cs in cosignatures {
        if cs.checkpoint_size != checkpoint.size || seen.contains(&&cs.cosigner_id) {
            continue;
        }
        let Some(tc) = policy.cosigner(&cs.cosigner_id) else { continue };
        if tc.scheme != cs.scheme {
            continue;
        }
        if !registry.verify(Purpose::Cosignature, tc.scheme, &tc.public_key, &msg, &cs.signature) {
            continue;
        }
        seen.push(&cs.cosigner_id);
        valid += 1;
        mirror |= tc.mode == CosignerMode::Mirror;
        if valid >= policy.required_k && (mirror || !policy.require_mirror) {
            return PolicyOutcome { accepted: true, valid };
        }
    }
    PolicyOutcome { accepted: false, valid }
}

pub fn verify_subtree_cosignature(
    sig: &SubtreeCosignature,
    subtree_root: &Hash,
    cosigner: &TrustedCosigner,
    registry: &SignatureRegistry,
) -> bool {
    sig.cosigner_id == cosigner.id
        && sig.scheme == cosigner.scheme
        && registry.verify(
            Purpose::Cosignature,
            cosigner.scheme,
            &cosigner.public_key,
            &subtree_message(&sig.range, subtree_root),
            &sig.signature,
        )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_taid;
    use crate::merkle::leaf_hash;

    fn leaves(n: u64) -> Vec<Hash> {
        (0..n).map(|i| leaf_hash(&i.to_be_bytes())).collect()
    }

    fn witness(seed: u8) -> Cosigner {
        Cosigner::new(
            parse_taid(&format!("32473.{}", 100 + seed as u64)).unwrap(),
            CosignerMode::Witness,
            KeyPair::from_seed(SchemeId::Ed25519, &[seed; 32]).unwrap(),
        )
    }

    fn policy(k: usize, cs: &[&Cosigner], require_mirror: bool) -> AcceptancePolicy {
        AcceptancePolicy { required_k: k, trusted_cosigners: cs.iter().map(|c| c.info()).collect(), require_mirror }
    }

    #[test]
    fn honest_extension_signed() {
        let log = MerkleLog::from_leaves(leaves(16));
        let mut w = witness(1);
        let cp8 = log.checkpoint_at(8).unwrap();
        w.witness_cosign(&cp8, &ConsistencyProof::default()).unwrap();
        let cp16 = log.checkpoint_at(16).unwrap();
        let sig = w.witness_cosign(&cp16, &log.consistency_proof(8, 16).unwrap()).unwrap();
        assert_eq!(sig.checkpoint_size, 16);
        assert_eq!(w.last_signed(), Some(cp16));
        let again = w.witness_cosign(&cp16, &ConsistencyProof::default()).unwrap();
        assert_eq!(again.checkpoint_size, 16);
    }

    #[test]
    fn fork_and_regression_refused() {
        let honest = MerkleLog::from_leaves(leaves(16));
        let mut forked_leaves = leaves(16);
        forked_leaves[3] = leaf_hash(b"rewritten");
        let forked = MerkleLog::from_leaves(forked_leaves);

        let mut w = witness(1);
        w.witness_cosign(&honest.checkpoint_at(8).unwrap(), &ConsistencyProof::default()).unwrap();
        let r = w.witness_cosign(&forked.checkpoint_at(16).unwrap(), &forked.consistency_proof(8, 16).unwrap());
        assert_eq!(r.unwrap_err(), Refusal::ForkDetected);
        let r = w.witness_cosign(&honest.checkpoint_at(4).unwrap(), &ConsistencyProof::default());
        assert!(matches!(r, Err(Refusal::SizeRegression { last: 8, offered: 4 })));
        let r = w.witness_cosign(&forked.checkpoint_at(8).unwrap(), &ConsistencyProof::default());
        assert_eq!(r.unwrap_err(), Refusal::ForkDetected);
        let mut bad = honest.consistency_proof(8, 16).unwrap();
        bad.hashes.pop();
        let r = w.witness_cosign(&honest.checkpoint_at(16).unwrap(), &bad);
        assert_eq!(r.unwrap_err(), Refusal::BadProof);
    }

    #[test]
    fn witness_hash_budget() {
        let log = MerkleLog::from_leaves(leaves(600));
        let mut w = witness(1);
        w.witness_cosign(&log.checkpoint_at(1).unwrap(), &ConsistencyProof::default()).unwrap();
        let mut prev = 1;
        for n in [2u64, 3, 7, 8, 13, 64, 100, 257, 511, 600] {
            w.witness_cosign(&log.checkpoint_at(n).unwrap(), &log.consistency_proof(prev, n).unwrap()).unwrap();
            let bound = 2 * crate::merkle::proof_depth(n) + 2;
            assert!(w.last_hash_ops() <= bound, "n={n}: {} > {bound}", w.last_hash_ops());
            prev = n;
        }
    }

    #[test]
    fn mirror_refuses_withheld_entry() {
        let all = leaves(16);
        let log = MerkleLog::from_leaves(all.clone());
        let mut m = Cosigner::new(
            parse_taid("32473.200").unwrap(),
            CosignerMode::Mirror,
            KeyPair::from_seed(SchemeId::Ed25519, &[2; 32]).unwrap(),
        );
        m.mirror_cosign(&Checkpoint::empty(), &Vec::<Hash>::new()).unwrap();
        struct Gap(Vec<Hash>);
        impl LeafSource for Gap {
            fn leaf_at(&self, i: u64) -> Option<Hash> {
                if i == 7 { None } else { self.0.get(i as usize).copied() }
            }
        }
        let r = m.mirror_cosign(&log.checkpoint(), &Gap(all.clone()));
        assert_eq!(r.unwrap_err(), Refusal::EntryUnavailable(7));
        let mut wrong = all.clone();
        wrong[9] = leaf_hash(b"x");
        assert_eq!(m.mirror_cosign(&log.checkpoint(), &wrong).unwrap_err(), Refusal::RootMismatch);
        assert!(m.mirror_cosign(&log.checkpoint(), &all).is_ok());
        assert!(matches!(witness(1).mirror_cosign(&log.checkpoint(), &all), Err(Refusal::WrongMode(_))));
    }

    #[test]
    fn subtree_signing_requires_signed_checkpoint() {
        let log = MerkleLog::from_leaves(leaves(32));
        let mut w = witness(1);
        let cp32 = log.checkpoint_at(32).unwrap();
        let r = |s, e| SubtreeRange::new(s, e).unwrap();
        let proof = log.subtree_consistency_proof(r(16, 32), 32).unwrap();
        let root = log.subtree_root(r(16, 32)).unwrap();
        assert_eq!(w.sign_subtree(&r(16, 32), &root, &proof, &cp32).unwrap_err(), Refusal::UnknownCheckpoint);
        w.witness_cosign(&cp32, &ConsistencyProof::default()).unwrap();
        let sig = w.sign_subtree(&r(16, 32), &root, &proof, &cp32).unwrap();
        let reg = SignatureRegistry::new();
        assert!(verify_subtree_cosignature(&sig, &root, &w.info(), &reg));
        assert!(!verify_subtree_cosignature(&sig, &leaf_hash(b"y"), &w.info(), &reg));
        assert_eq!(
            w.sign_subtree(&r(16, 32), &leaf_hash(b"y"), &proof, &cp32).unwrap_err(),
            Refusal::NotContained
        );
        let whole = log.subtree_root(r(0, 32)).unwrap();
        assert!(w.sign_subtree(&r(0, 32), &whole, &ConsistencyProof::default(), &cp32).is_ok());
    }

    #[test]
    fn policy_counts_distinct_trusted_cosigners() {
        let log = MerkleLog::from_leaves(leaves(8));
        let cp = log.checkpoint();
        let mut a = witness(1);
        let mut b = witness(2);
        let c = witness(3);
        let sa = a.witness_cosign(&cp, &ConsistencyProof::default()).unwrap();
        let sb = b.witness_cosign(&cp, &ConsistencyProof::default()).unwrap();
        let reg = SignatureRegistry::new();
        let p = policy(2, &[&a, &b, &c], false);
        assert!(evaluate_policy(&cp, &[sa.clone(), sb.clone()], &p, &reg).accepted);
        assert_eq!(reg.counts().cosignature, 2);
        let dup = evaluate_policy(&cp, &[sa.clone(), sa.clone()], &p, &reg);
        assert_eq!(dup, PolicyOutcome { accepted: false, valid: 1 });
        let other = Checkpoint { root: leaf_hash(b"z"), size: cp.size };
        assert_eq!(evaluate_policy(&other, &[sa.clone(), sb.clone()], &p, &reg).valid, 0);
        let untrusted = policy(1, &[&c], false);
        assert!(!evaluate_policy(&cp, &[sa.clone()], &untrusted, &reg).accepted);
    }

    #[test]
    fn policy_mirror_requirement() {
        let log = MerkleLog::from_leaves(leaves(4));
        let cp = log.checkpoint();
        let mut a = witness(1);
        let mut b = witness(2);
        let mut m = Cosigner::new(
            parse_taid("32473.200").unwrap(),
            CosignerMode::Mirror,
            KeyPair::from_seed(SchemeId::Ed25519, &[9; 32]).unwrap(),
        );
        let sa = a.witness_cosign(&cp, &ConsistencyProof::default()).unwrap();
        let sb = b.witness_cosign(&cp, &ConsistencyProof::default()).unwrap();
        let reg = SignatureRegistry::new();
        let p = policy(2, &[&a, &b, &m], true);
        assert!(!evaluate_policy(&cp, &[sa.clone(), sb.clone()], &p, &reg).accepted);
        let sm = m.mirror_cosign(&cp, &leaves(4)).unwrap();
        assert!(evaluate_policy(&cp, &[sa, sb, sm], &p, &reg).accepted);
    }

    #[test]
    fn persisted_state_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let log = MerkleLog::from_leaves(leaves(16));
        let key = KeyPair::from_seed(SchemeId::Ed25519, &[1; 32]).unwrap();
        let id = parse_taid("32473.101").unwrap();
        {
            let mut w = Cosigner::open(dir.path(), id.clone(), CosignerMode::Witness, key.clone()).unwrap();
            w.witness_cosign(&log.checkpoint_at(8).unwrap(), &ConsistencyProof::default()).unwrap();
        }
        let mut w = Cosigner::open(dir.path(), id, CosignerMode::Witness, key).unwrap();
        assert_eq!(w.last_signed(), Some(log.checkpoint_at(8).unwrap()));
        let mut forked = leaves(16);
        forked[0] = leaf_hash(b"f");
        let forked = MerkleLog::from_leaves(forked);
        assert_eq!(
            w.witness_cosign(&forked.checkpoint_at(8).unwrap(), &ConsistencyProof::default()).unwrap_err(),
            Refusal::ForkDetected
        );
        let cp8 = log.checkpoint_at(8).unwrap();
        let r = SubtreeRange::new(0, 8).unwrap();
        assert!(w.sign_subtree(&r, &cp8.root, &ConsistencyProof::default(), &cp8).is_ok());
    }
}

//! Landmarks: CA-side allocation, the sequence document, and the
//! relying-party store the distributor maintains.
//!
//! Sequence document (`text/plain`):
//!
//! ```text
//! <last_landmark> <num_active_landmarks>
//! <tree_size of last_landmark>
//! <tree_size of last_landmark - 1>
//! ...
//! revoked:
//! <lo> <hi>
//! ```
//!
//! The `revoked:` section is omitted when nothing is revoked. An empty
//! sequence is the single line `0 0`.

use std::collections::VecDeque;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write as _};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::codec::{Cosignature, TrustAnchorId};
use crate::cosigner::{evaluate_policy, PolicyOutcome};
use crate::merkle::{
    decompose_range, verify_subtree_consistency, Checkpoint, ConsistencyProof, Hash, LogError, MerkleLog,
    SubtreeRange,
};
use crate::revocation::RevokedRanges;
use crate::signature::SignatureRegistry;
use crate::trust::AcceptancePolicy;

/// `ceil(cert_lifetime / landmark_interval) + 1`.
pub fn max_landmarks(cert_lifetime_secs: u64, landmark_interval_secs: u64) -> u64 {
    cert_lifetime_secs.div_ceil(landmark_interval_secs) + 1
}

/// A checkpoint together with the cosignatures collected for it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SignedCheckpoint {
    pub root: Hash,
    pub size: u64,
    #[serde(default)]
    pub cosignatures: Vec<Cosignature>,
}

impl SignedCheckpoint {
    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint { root: self.root, size: self.size }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkSubtree {
    pub range: SubtreeRange,
    pub hash: Hash,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkRecord {
    pub number: u64,
    pub tree_size: u64,
    pub subtrees: Vec<LandmarkSubtree>,
    pub allocated_at: u64,
}

impl LandmarkRecord {
    pub fn covering(&self, index: u64) -> Option<&LandmarkSubtree> {
        self.subtrees.iter().find(|s| s.range.contains(index))
    }
}

/// The CA's active landmarks, oldest first.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct LandmarkSchedule {
    pub max_landmarks: u64,
    /// Number of the most recent landmark; 0 means none yet.
    pub last_number: u64,
    /// Tree size of the most recent landmark, retired or not.
    pub last_tree_size: u64,
    pub active: VecDeque<LandmarkRecord>,
}

impl LandmarkSchedule {
    pub fn new(max_landmarks: u64) -> Self {
        LandmarkSchedule { max_landmarks, ..Default::default() }
    }

    /// Allocates landmark `last_number + 1` at `tree_size`, retiring the
    /// oldest record beyond `max_landmarks`. Returns `None` without
    /// allocating if the tree has not grown since the previous landmark.
    pub fn allocate(&mut self, log: &MerkleLog, tree_size: u64, now: u64) -> Result<Option<&LandmarkRecord>, LogError> {
        if tree_size <= self.last_tree_size {
            return Ok(None);
        }
        let range = SubtreeRange::new(self.last_tree_size, tree_size).expect("tree grew");
        let subtrees = decompose_range(range)
            .into_iter()
            .map(|r| log.subtree_root(r).map(|hash| LandmarkSubtree { range: r, hash }))
            .collect::<Result<Vec<_>, _>>()?;
        self.last_number += 1;
        self.last_tree_size = tree_size;
        self.active.push_back(LandmarkRecord { number: self.last_number, tree_size, subtrees, allocated_at: now });
        while self.active.len() as u64 > self.max_landmarks.max(1) {
            self.active.pop_front();
        }
        Ok(self.active.back())
    }

    pub fn get(&self, number: u64) -> Option<&LandmarkRecord> {
        self.active.iter().find(|r| r.number == number)
    }

    /// Newest active landmark with a subtree containing `index`.
    pub fn newest_covering(&self, index: u64) -> Option<&LandmarkRecord> {
        self.active.iter().rev().find(|r| r.covering(index).is_some())
    }

    pub fn sequence(&self, revoked: &RevokedRanges) -> LandmarkSequence {
        LandmarkSequence {
            last: if self.active.is_empty() { 0 } else { self.last_number },
            sizes: self.active.iter().rev().map(|r| r.tree_size).collect(),
            revoked: revoked.clone(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct LandmarkSequence {
    pub last: u64,
    /// Tree sizes, newest first: `sizes[i]` belongs to landmark `last - i`.
    pub sizes: Vec<u64>,
    pub revoked: RevokedRanges,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SequenceError {
    #[error("malformed header")]
    Header,
    #[error("header announces {announced} landmarks but {found} sizes follow")]
    CountMismatch { announced: u64, found: usize },
    #[error("line {0}: expected an integer")]
    Size(usize),
    #[error("line {0}: expected `lo hi`")]
    Revoked(usize),
    #[error("landmark sizes must decrease strictly from newest to oldest")]
    Order,
    #[error("last landmark {last} is lower than the active count {count}")]
    Numbering { last: u64, count: u64 },
}

impl LandmarkSequence {
    /// `(number, tree_size)` newest first.
    pub fn landmarks(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.sizes.iter().enumerate().map(|(i, s)| (self.last - i as u64, *s))
    }

    pub fn format(&self) -> String {
        let mut out = format!("{} {}\n", self.last, self.sizes.len());
        for s in &self.sizes {
            writeln!(out, "{s}").unwrap();
        }
        if !self.revoked.is_empty() {
            out.push_str("revoked:\n");
            for (lo, hi) in self.revoked.ranges() {
                writeln!(out, "{lo} {hi}").unwrap();
            }
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, SequenceError> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(SequenceError::Header)?;
        let mut parts = header.split_whitespace();
        let (Some(a), Some(b), None) = (parts.next(), parts.next(), parts.next()) else {
            return Err(SequenceError::Header);
        };
        let last: u64 = a.parse().map_err(|_| SequenceError::Header)?;
        let count: u64 = b.parse().map_err(|_| SequenceError::Header)?;
        if count > last {
            return Err(SequenceError::Numbering { last, count });
        }
        let mut sizes = Vec::new();
        let mut revoked = RevokedRanges::new();
        let mut in_revoked = false;
        for (no, line) in lines {
            let line = line.trim();
            if line == "revoked:" {
                in_revoked = true;
                continue;
            }
            if in_revoked {
                let mut p = line.split_whitespace();
                let pair = match (p.next(), p.next(), p.next()) {
                    (Some(lo), Some(hi), None) => lo.parse::<u64>().ok().zip(hi.parse::<u64>().ok()),
                    _ => None,
                };
                let (lo, hi) = pair.ok_or(SequenceError::Revoked(no + 1))?;
                revoked.insert(lo, hi).map_err(|_| SequenceError::Revoked(no + 1))?;
            } else {
                sizes.push(line.parse::<u64>().map_err(|_| SequenceError::Size(no + 1))?);
            }
        }
        if sizes.len() as u64 != count {
            return Err(SequenceError::CountMismatch { announced: count, found: sizes.len() });
        }
        if sizes.windows(2).any(|w| w[0] <= w[1]) {
            return Err(SequenceError::Order);
        }
        Ok(LandmarkSequence { last, sizes, revoked })
    }
}

/// One installed landmark subtree, as it appears in `landmarks.json`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoredLandmark {
    pub number: u64,
    pub start: u64,
    pub end: u64,
    pub hash: Hash,
}

impl StoredLandmark {
    pub fn range(&self) -> Option<SubtreeRange> {
        SubtreeRange::new(self.start, self.end).ok()
    }
}

/// Relying-party landmark file (`landmarks.json`).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LandmarkStore {
    pub log_id: TrustAnchorId,
    pub reference_checkpoint: Option<SignedCheckpoint>,
    pub landmarks: Vec<StoredLandmark>,
    pub revoked: RevokedRanges,
    pub updated_at: u64,
}

impl LandmarkStore {
    pub fn empty(log_id: TrustAnchorId) -> Self {
        LandmarkStore { log_id, reference_checkpoint: None, landmarks: Vec::new(), revoked: RevokedRanges::new(), updated_at: 0 }
    }

    pub fn numbers(&self) -> Vec<u64> {
        let mut n: Vec<u64> = self.landmarks.iter().map(|l| l.number).collect();
        n.sort_unstable();
        n.dedup();
        n
    }

    pub fn has(&self, number: u64) -> bool {
        self.landmarks.iter().any(|l| l.number == number)
    }

    pub fn find_range(&self, range: &SubtreeRange) -> Option<&StoredLandmark> {
        self.landmarks.iter().find(|l| l.start == range.start() && l.end == range.end())
    }

    /// Tree size landmark `number` ends at, if installed.
    pub fn tree_size_of(&self, number: u64) -> Option<u64> {
        self.landmarks.iter().filter(|l| l.number == number).map(|l| l.end).max()
    }

    /// Drops the oldest landmark numbers until at most `max` remain.
    pub fn evict_to(&mut self, max: usize) -> Vec<u64> {
        let numbers = self.numbers();
        let drop: Vec<u64> = numbers.iter().take(numbers.len().saturating_sub(max)).copied().collect();
        self.landmarks.retain(|l| !drop.contains(&l.number));
        drop
    }

    pub fn load(path: &Path) -> io::Result<Self> {
        let bytes = fs::read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))
    }

    /// Atomic replace: write a sibling temp file, sync, rename.
    pub fn publish(&self, path: &Path) -> io::Result<()> {
        let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
        fs::create_dir_all(dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
        tmp.write_all(&serde_json::to_vec_pretty(self).expect("store serializes"))?;
        tmp.as_file().sync_all()?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }
}

/// A landmark the distributor still has to fetch: the subtrees of
/// `[prev_size, tree_size)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PlannedLandmark {
    pub number: u64,
    pub prev_size: u64,
    pub tree_size: u64,
}

impl PlannedLandmark {
    pub fn subtrees(&self) -> Vec<SubtreeRange> {
        decompose_range(SubtreeRange::new(self.prev_size, self.tree_size).expect("sizes increase"))
    }
}

/// Landmarks in `seq` not yet in `store`, oldest first. The oldest entry of
/// the document is planned only when its predecessor's size is known: it is
/// landmark 1, or the store already holds the predecessor.
pub fn plan_refresh(store: &LandmarkStore, seq: &LandmarkSequence) -> Vec<PlannedLandmark> {
    let list: Vec<(u64, u64)> = seq.landmarks().collect();
    let mut plan = Vec::new();
    for (i, &(number, tree_size)) in list.iter().enumerate().rev() {
        if store.has(number) {
            continue;
        }
        let prev_size = match list.get(i + 1) {
            Some(&(_, s)) => Some(s),
            None if number == 1 => Some(0),
            None => store.tree_size_of(number - 1),
        };
        if let Some(prev_size) = prev_size {
            if prev_size < tree_size {
                plan.push(PlannedLandmark { number, prev_size, tree_size });
            }
        }
    }
    plan
}

/// Material fetched from a mirror for one subtree of a planned landmark.
#[derive(Clone, Debug)]
pub struct FetchedSubtree {
    pub range: SubtreeRange,
    pub hash: Hash,
    pub containment: ConsistencyProof,
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum RefreshError {
    #[error("reference checkpoint fails the cosigner policy ({valid} valid cosignatures)")]
    PolicyUnsatisfied { valid: usize },
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RefreshReport {
    pub installed: Vec<u64>,
    /// Landmarks whose material did not verify, with the reason.
    pub rejected: Vec<(u64, String)>,
    pub evicted: Vec<u64>,
}

/// Verifies fetched landmarks against a policy-satisfying reference
/// checkpoint and installs those that check out. Nothing is installed
/// unless the reference checkpoint satisfies `policy`.
#[allow(clippy::too_many_arguments)]
pub fn apply_refresh(
    store: &mut LandmarkStore,
    seq: &LandmarkSequence,
    reference: &SignedCheckpoint,
    fetched: &[(PlannedLandmark, Vec<FetchedSubtree>)],
    policy: &AcceptancePolicy,
    registry: &SignatureRegistry,
    max_landmarks: usize,
    now: u64,
) -> Result<RefreshReport, RefreshError> {
    let cp = reference.checkpoint();
    let PolicyOutcome { accepted, valid } = evaluate_policy(&cp, &reference.cosignatures, policy, registry);
    if !accepted {
        return Err(RefreshError::PolicyUnsatisfied { valid });
    }
    let mut report = RefreshReport::default();
    for (plan, subtrees) in fetched {
        if let Err(why) = check_landmark(plan, subtrees, &cp) {
            report.rejected.push((plan.number, why));
            continue;
        }
        for s in subtrees {
            store.landmarks.push(StoredLandmark { number: plan.number, start: s.range.start(), end: s.range.end(), hash: s.hash });
        }
        report.installed.push(plan.number);
    }
    store.landmarks.sort_by_key(|l| (l.number, l.start));
    report.evicted = store.evict_to(max_landmarks);
    store.revoked.merge(&seq.revoked);
    store.reference_checkpoint = Some(reference.clone());
    store.updated_at = now;
    Ok(report)
}

fn check_landmark(plan: &PlannedLandmark, subtrees: &[FetchedSubtree], reference: &Checkpoint) -> Result<(), String> {
    if plan.tree_size > reference.size {
        return Err(format!("tree size {} is beyond the reference checkpoint", plan.tree_size));
    }
    let expected = plan.subtrees();
    if subtrees.iter().map(|s| s.range).ne(expected.iter().copied()) {
        return Err("subtree ranges do not match the decomposition".into());
    }
    for s in subtrees {
        if !verify_subtree_consistency(&s.range, &s.hash, reference, &s.containment) {
            return Err(format!("subtree {} is not contained in the reference checkpoint", s.range));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::parse_taid;
    use crate::cosigner::Cosigner;
    use crate::merkle::leaf_hash;
    use crate::signature::{KeyPair, SchemeId};
    use crate::trust::CosignerMode;

    fn log(n: u64) -> MerkleLog {
        MerkleLog::from_leaves((0..n).map(|i| leaf_hash(&i.to_be_bytes())))
    }

    #[test]
    fn max_landmarks_formula() {
        assert_eq!(max_landmarks(24 * 3600, 600), 145);
        assert_eq!(max_landmarks(24 * 3600, 3600), 25);
    }

    #[test]
    fn paper_sequence_document() {
        let mut text = String::from("42 25\n18500\n18200\n17900\n");
        for i in 0..22 {
            writeln!(text, "{}", 17000 - i * 300).unwrap();
        }
        let seq = LandmarkSequence::parse(&text).unwrap();
        assert_eq!(seq.last, 42);
        assert_eq!(seq.sizes[0], 18500);
        assert_eq!(seq.landmarks().nth(2), Some((40, 17900)));
        assert_eq!(LandmarkSequence::parse(&seq.format()).unwrap(), seq);
    }

    #[test]
    fn sequence_edge_cases() {
        assert_eq!(LandmarkSequence::parse("0 0").unwrap(), LandmarkSequence::default());
        assert_eq!(LandmarkSequence::default().format(), "0 0\n");
        assert_eq!(
            LandmarkSequence::parse("3 3\n30\n20\n"),
            Err(SequenceError::CountMismatch { announced: 3, found: 2 })
        );
        assert_eq!(LandmarkSequence::parse("x 1\n5"), Err(SequenceError::Header));
        assert_eq!(LandmarkSequence::parse("2 2\n5\n9\n"), Err(SequenceError::Order));
        let seq = LandmarkSequence::parse("1 1\n16\nrevoked:\n4200 4210\n3 5\n5 9\n").unwrap();
        assert_eq!(seq.revoked.ranges(), &[(3, 9), (4200, 4210)]);
        assert!(matches!(LandmarkSequence::parse("1 1\n16\nrevoked:\n7\n"), Err(SequenceError::Revoked(4))));
    }

    #[test]
    fn schedule_allocation() {
        let l = log(36);
        let mut s = LandmarkSchedule::new(3);
        assert_eq!(s.sequence(&RevokedRanges::new()).format(), "0 0\n");
        let first = s.allocate(&l, 16, 100).unwrap().unwrap().clone();
        assert_eq!(first.number, 1);
        assert_eq!(first.subtrees.len(), 1);
        assert_eq!(first.subtrees[0].hash, l.checkpoint_at(16).unwrap().root);
        assert_eq!(s.sequence(&RevokedRanges::new()).format(), "1 1\n16\n");
        assert!(s.allocate(&l, 16, 200).unwrap().is_none());
        let second = s.allocate(&l, 36, 300).unwrap().unwrap().clone();
        let ranges: Vec<_> = second.subtrees.iter().map(|t| t.range).collect();
        assert_eq!(ranges, decompose_range(SubtreeRange::new(16, 36).unwrap()));
        for t in &second.subtrees {
            assert_eq!(t.hash, l.subtree_root(t.range).unwrap());
        }
    }

    #[test]
    fn schedule_never_exceeds_max() {
        let l = log(200);
        let mut s = LandmarkSchedule::new(5);
        for size in 1..=200 {
            s.allocate(&l, size, size).unwrap();
            assert!(s.active.len() <= 5);
        }
        let seq = s.sequence(&RevokedRanges::new());
        assert_eq!(seq.last, 200);
        assert_eq!(seq.sizes, vec![200, 199, 198, 197, 196]);
        assert_eq!(s.active.front().unwrap().number, 196);
    }

    fn signed(l: &MerkleLog, size: u64, cosigners: &mut [Cosigner]) -> SignedCheckpoint {
        let cp = l.checkpoint_at(size).unwrap();
        SignedCheckpoint {
            root: cp.root,
            size,
            cosignatures: cosigners.iter_mut().map(|c| c.witness_cosign(&cp, &ConsistencyProof::default()).unwrap()).collect(),
        }
    }

    fn cosigners() -> Vec<Cosigner> {
        (1..=2)
            .map(|i| {
                Cosigner::new(
                    parse_taid(&format!("32473.{}", 100 + i)).unwrap(),
                    CosignerMode::Witness,
                    KeyPair::from_seed(SchemeId::Ed25519, &[i as u8; 32]).unwrap(),
                )
            })
            .collect()
    }

    fn fetch(l: &MerkleLog, plan: &PlannedLandmark, size: u64) -> Vec<FetchedSubtree> {
        plan.subtrees()
            .into_iter()
            .map(|r| FetchedSubtree {
                range: r,
                hash: l.subtree_root(r).unwrap(),
                containment: l.subtree_consistency_proof(r, size).unwrap(),
            })
            .collect()
    }

    #[test]
    fn refresh_installs_verified_landmarks() {
        let l = log(36);
        let mut cs = cosigners();
        let policy = AcceptancePolicy { required_k: 2, trusted_cosigners: cs.iter().map(|c| c.info()).collect(), require_mirror: false };
        let mut sched = LandmarkSchedule::new(10);
        sched.allocate(&l, 16, 1).unwrap();
        sched.allocate(&l, 36, 2).unwrap();
        let revoked = RevokedRanges::from_ranges([(3, 5)]).unwrap();
        let seq = sched.sequence(&revoked);
        let reference = signed(&l, 36, &mut cs);
        let mut store = LandmarkStore::empty(parse_taid("32473").unwrap());
        let plan = plan_refresh(&store, &seq);
        assert_eq!(plan.iter().map(|p| p.number).collect::<Vec<_>>(), vec![1, 2]);
        let fetched: Vec<_> = plan.iter().map(|p| (p.clone(), fetch(&l, p, 36))).collect();
        let reg = SignatureRegistry::new();
        let report = apply_refresh(&mut store, &seq, &reference, &fetched, &policy, &reg, 10, 99).unwrap();
        assert_eq!(report.installed, vec![1, 2]);
        assert_eq!(store.numbers(), vec![1, 2]);
        assert!(store.revoked.contains(4));
        assert!(plan_refresh(&store, &seq).is_empty());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run/landmarks.json");
        store.publish(&path).unwrap();
        assert_eq!(LandmarkStore::load(&path).unwrap(), store);
    }

    #[test]
    fn refresh_refuses_unverified_material() {
        let l = log(32);
        let mut cs = cosigners();
        let policy = AcceptancePolicy { required_k: 2, trusted_cosigners: cs.iter().map(|c| c.info()).collect(), require_mirror: false };
        let mut sched = LandmarkSchedule::new(10);
        sched.allocate(&l, 16, 1).unwrap();
        sched.allocate(&l, 32, 1).unwrap();
        let seq = sched.sequence(&RevokedRanges::new());
        let mut reference = signed(&l, 32, &mut cs);
        let empty = LandmarkStore::empty(parse_taid("32473").unwrap());
        let plan = plan_refresh(&empty, &seq);
        let mut fetched: Vec<_> = plan.iter().map(|p| (p.clone(), fetch(&l, p, 32))).collect();
        let reg = SignatureRegistry::new();

        fetched[1].1[0].hash = leaf_hash(b"forged");
        let mut store = empty.clone();
        let report = apply_refresh(&mut store, &seq, &reference, &fetched, &policy, &reg, 10, 5).unwrap();
        assert_eq!(report.installed, vec![1]);
        assert_eq!(report.rejected.len(), 1);
        assert!(!store.has(2));

        reference.cosignatures.pop();
        let mut store = empty.clone();
        let r = apply_refresh(&mut store, &seq, &reference, &fetched, &policy, &reg, 10, 5);
        assert_eq!(r, Err(RefreshError::PolicyUnsatisfied { valid: 1 }));
        assert_eq!(store, empty);
    }

    #[test]
    fn oldest_in_document_needs_known_predecessor() {
        let seq = LandmarkSequence { last: 7, sizes: vec![70, 60], revoked: RevokedRanges::new() };
        let mut store = LandmarkStore::empty(parse_taid("1").unwrap());
        let plan = plan_refresh(&store, &seq);
        assert_eq!(plan, vec![PlannedLandmark { number: 7, prev_size: 60, tree_size: 70 }]);
        store.landmarks.push(StoredLandmark { number: 5, start: 48, end: 50, hash: Hash::default() });
        let plan = plan_refresh(&store, &seq);
        assert_eq!(plan[0], PlannedLandmark { number: 6, prev_size: 50, tree_size: 60 });
    }

    #[test]
    fn eviction_is_oldest_first() {
        let mut store = LandmarkStore::empty(parse_taid("1").unwrap());
        for n in 1..=6 {
            store.landmarks.push(StoredLandmark { number: n, start: n, end: n + 1, hash: Hash::default() });
        }
        assert_eq!(store.evict_to(4), vec![1, 2]);
        assert_eq!(store.numbers(), vec![3, 4, 5, 6]);
    }
}

//! Log storage, checkpoints, proof generation and pruning.
//!
//! The log keeps every complete aligned block hash, level by level, so any
//! aligned subtree root is a lookup and any RFC 9162 node costs at most a
//! logarithmic number of hash evaluations.
//!
//! On disk a log directory holds:
//!
//! * `leaves.bin`: the 32-byte leaf hashes for indices
//!   `[min_available_index, size)`, concatenated. Appends only ever extend
//!   the file; pruning rewrites it without the dropped prefix.
//! * `frontier.json`: `size`, `min_available_index`, the `retained` roots
//!   covering the pruned prefix and the `frontier` roots covering
//!   `[0, size)`, all hex-encoded.

use std::fs::{self, File, OpenOptions};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{
    decompose_range, empty_root, node_hash, split_point, Checkpoint, ConsistencyProof, Hash,
    InclusionProof, LeafHash, NodeHash, SubtreeRange, HASH_LEN,
};

const LEAVES_FILE: &str = "leaves.bin";
const FRONTIER_FILE: &str = "frontier.json";

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("tree size {requested} exceeds log size {size}")]
    SizeExceeded { requested: u64, size: u64 },
    #[error("leaf {index} is outside {range}")]
    IndexOutsideRange { index: u64, range: SubtreeRange },
    #[error("range {0} is not an aligned subtree")]
    Unaligned(SubtreeRange),
    #[error("proof unavailable: leaves below {min_available} have been pruned")]
    Pruned { min_available: u64 },
    #[error("prune point {requested} is below the current prune point {current}")]
    PruneRegression { requested: u64, current: u64 },
    #[error("sizes out of order: {old} > {new}")]
    SizesOutOfOrder { old: u64, new: u64 },
    #[error("log storage: {0}")]
    Storage(#[from] io::Error),
    #[error("log directory is inconsistent: {0}")]
    Corrupt(String),
}

/// Pruning boundary: leaves below `min_available_index` are gone.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneState {
    pub min_available_index: u64,
}

/// Read access to leaf hashes by index, as seen by a replaying party.
/// `None` means the entry is unavailable.
pub trait LeafSource {
    fn leaf_at(&self, index: u64) -> Option<LeafHash>;
}

/// Complete blocks of width `2^k`, starting at block index `first`.
#[derive(Clone, Debug, Default)]
struct Level {
    first: u64,
    hashes: Vec<Hash>,
}

impl Level {
    fn next_index(&self) -> u64 {
        self.first + self.hashes.len() as u64
    }
}

#[derive(Debug)]
struct LogStore {
    dir: PathBuf,
    leaves: File,
}

#[derive(Serialize, Deserialize)]
struct RetainedRoot {
    start: u64,
    end: u64,
    hash: Hash,
}

#[derive(Serialize, Deserialize)]
struct FrontierFile {
    size: u64,
    min_available_index: u64,
    retained: Vec<RetainedRoot>,
    frontier: Vec<Hash>,
}

/// Append-only Merkle log. Single writer; wrap in a lock to share.
#[derive(Debug)]
pub struct MerkleLog {
    levels: Vec<Level>,
    size: u64,
    min_available: u64,
    store: Option<LogStore>,
}

impl Clone for MerkleLog {
    /// Clones the in-memory tree. The clone is detached from any directory.
    fn clone(&self) -> Self {
        MerkleLog {
            levels: self.levels.clone(),
            size: self.size,
            min_available: self.min_available,
            store: None,
        }
    }
}

impl Default for MerkleLog {
    fn default() -> Self {
        Self::new()
    }
}

impl MerkleLog {
    /// An empty in-memory log.
    pub fn new() -> Self {
        MerkleLog {
            levels: vec![Level::default()],
            size: 0,
            min_available: 0,
            store: None,
        }
    }

    pub fn from_leaves(leaves: impl IntoIterator<Item = LeafHash>) -> Self {
        let mut log = Self::new();
        for leaf in leaves {
            log.push_leaf(leaf);
        }
        log
    }

    /// Opens (or creates) a persisted log in `dir`.
    pub fn open(dir: impl AsRef<Path>) -> Result<Self, LogError> {
        let dir = dir.as_ref().to_path_buf();
        fs::create_dir_all(&dir)?;
        let frontier_path = dir.join(FRONTIER_FILE);
        let leaves_path = dir.join(LEAVES_FILE);

        let state: Option<FrontierFile> = match fs::read(&frontier_path) {
            Ok(bytes) => Some(
                serde_json::from_slice(&bytes)
                    .map_err(|e| LogError::Corrupt(format!("{FRONTIER_FILE}: {e}")))?,
            ),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e.into()),
        };

        let mut raw = Vec::new();
        match File::open(&leaves_path) {
            Ok(mut f) => {
                f.read_to_end(&mut raw)?;
            }
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(e.into()),
            Err(_) => {}
        }
        // A crash mid-append can leave a torn trailing hash.
        let whole = raw.len() - raw.len() % HASH_LEN;
        if whole != raw.len() {
            let f = OpenOptions::new().write(true).open(&leaves_path)?;
            f.set_len(whole as u64)?;
            f.sync_all()?;
            raw.truncate(whole);
        }

        let min_available = state.as_ref().map_or(0, |s| s.min_available_index);
        let retained: Vec<(SubtreeRange, Hash)> = match &state {
            Some(s) => s
                .retained
                .iter()
                .map(|r| {
                    SubtreeRange::new(r.start, r.end)
                        .map(|range| (range, r.hash))
                        .map_err(|e| LogError::Corrupt(e.to_string()))
                })
                .collect::<Result<_, _>>()?,
            None => Vec::new(),
        };
        if min_available > 0 {
            let expected = decompose_range(SubtreeRange::new(0, min_available).unwrap());
            let got: Vec<_> = retained.iter().map(|(r, _)| *r).collect();
            if expected != got {
                return Err(LogError::Corrupt("retained roots do not cover pruned prefix".into()));
            }
        }

        let mut log = MerkleLog::with_retained(min_available, &retained);
        for chunk in raw.chunks_exact(HASH_LEN) {
            log.push_leaf(Hash::from_slice(chunk).unwrap());
        }

        if let Some(s) = &state {
            if s.size > log.size {
                return Err(LogError::Corrupt(format!(
                    "frontier records {} leaves but only {} are stored",
                    s.size, log.size
                )));
            }
            // The frontier may lag the leaf file by the leaves appended after
            // the last frontier write; it must agree with the prefix.
            if s.size >= min_available && log.frontier_at(s.size)? != s.frontier {
                return Err(LogError::Corrupt("frontier does not match stored leaves".into()));
            }
        }

        let leaves = OpenOptions::new().create(true).append(true).open(&leaves_path)?;
        log.store = Some(LogStore { dir, leaves });
        log.write_frontier()?;
        Ok(log)
    }

    fn with_retained(min_available: u64, retained: &[(SubtreeRange, Hash)]) -> Self {
        let mut log = MerkleLog {
            levels: Vec::new(),
            size: min_available,
            min_available,
            store: None,
        };
        let height = if min_available == 0 {
            1
        } else {
            64 - min_available.leading_zeros() as usize + 1
        };
        for k in 0..height {
            log.levels.push(Level {
                first: first_block(min_available, k as u32),
                hashes: Vec::new(),
            });
        }
        for (range, hash) in retained {
            let k = range.width().trailing_zeros() as usize;
            debug_assert_eq!(log.levels[k].next_index(), range.start() >> k);
            log.levels[k].hashes.push(*hash);
        }
        log
    }

    pub fn size(&self) -> u64 {
        self.size
    }

    pub fn prune_state(&self) -> PruneState {
        PruneState {
            min_available_index: self.min_available,
        }
    }

    pub fn is_persistent(&self) -> bool {
        self.store.is_some()
    }

    /// Appends a leaf and returns its index.
    pub fn append(&mut self, leaf: LeafHash) -> Result<u64, LogError> {
        if let Some(store) = &mut self.store {
            store.leaves.write_all(&leaf.0)?;
            store.leaves.sync_data()?;
        }
        let index = self.push_leaf(leaf);
        if self.store.is_some() {
            self.write_frontier()?;
        }
        Ok(index)
    }

    fn push_leaf(&mut self, leaf: LeafHash) -> u64 {
        let index = self.size;
        let mut hash = leaf;
        let mut k = 0usize;
        loop {
            if self.levels.len() == k {
                self.levels.push(Level::default());
            }
            let level = &mut self.levels[k];
            let i = level.next_index();
            level.hashes.push(hash);
            if i & 1 == 0 {
                break;
            }
            let left = level.hashes[level.hashes.len() - 2];
            hash = node_hash(&left, &hash);
            k += 1;
            if let Some(up) = self.levels.get(k) {
                debug_assert_eq!(up.next_index(), i >> 1);
            }
        }
        self.size += 1;
        index
    }

    /// Root of the complete aligned block `index` at height `k`.
    fn block(&self, k: u32, index: u64) -> Result<Hash, LogError> {
        let level = self
            .levels
            .get(k as usize)
            .ok_or(LogError::SizeExceeded { requested: (index + 1) << k, size: self.size })?;
        if index < level.first {
            return Err(LogError::Pruned { min_available: self.min_available });
        }
        level
            .hashes
            .get((index - level.first) as usize)
            .copied()
            .ok_or(LogError::SizeExceeded { requested: (index + 1) << k, size: self.size })
    }

    /// RFC 9162 root of leaves `[lo, hi)`; `lo` must be a multiple of the
    /// width rounded up to a power of two.
    fn node(&self, lo: u64, hi: u64) -> Result<Hash, LogError> {
        let w = hi - lo;
        if w.is_power_of_two() && lo.is_multiple_of(w) {
            let k = w.trailing_zeros();
            return self.block(k, lo >> k);
        }
        let split = split_point(w);
        Ok(node_hash(&self.node(lo, lo + split)?, &self.node(lo + split, hi)?))
    }

    pub fn leaf(&self, index: u64) -> Result<LeafHash, LogError> {
        if index < self.min_available {
            return Err(LogError::Pruned { min_available: self.min_available });
        }
        self.block(0, index)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        self.checkpoint_at(self.size)
            .expect("current checkpoint is computable from retained roots")
    }

    pub fn checkpoint_at(&self, size: u64) -> Result<Checkpoint, LogError> {
        if size > self.size {
            return Err(LogError::SizeExceeded { requested: size, size: self.size });
        }
        let root = if size == 0 { empty_root() } else { self.node(0, size)? };
        Ok(Checkpoint { root, size })
    }

    /// Roots of `decompose_range([0, size))`, left to right.
    fn frontier_at(&self, size: u64) -> Result<Vec<Hash>, LogError> {
        if size == 0 {
            return Ok(Vec::new());
        }
        decompose_range(SubtreeRange::new(0, size).unwrap())
            .into_iter()
            .map(|r| self.node(r.start(), r.end()))
            .collect()
    }

    /// Root of `range`, which must be a subtree of the log (see
    /// [`SubtreeRange::is_subtree`]).
    pub fn subtree_root(&self, range: SubtreeRange) -> Result<NodeHash, LogError> {
        if !range.is_subtree() {
            return Err(LogError::Unaligned(range));
        }
        if range.end() > self.size {
            return Err(LogError::SizeExceeded { requested: range.end(), size: self.size });
        }
        self.node(range.start(), range.end())
    }

    /// Inclusion proof for `index` relative to the subtree `range`.
    pub fn inclusion_proof(&self, index: u64, range: SubtreeRange) -> Result<InclusionProof, LogError> {
        if !range.contains(index) {
            return Err(LogError::IndexOutsideRange { index, range });
        }
        if !range.is_subtree() {
            return Err(LogError::Unaligned(range));
        }
        if range.end() > self.size {
            return Err(LogError::SizeExceeded { requested: range.end(), size: self.size });
        }
        if index < self.min_available {
            return Err(LogError::Pruned { min_available: self.min_available });
        }
        let mut hashes = Vec::new();
        let (mut lo, mut hi) = (range.start(), range.end());
        // Walk down from the subtree root, collecting siblings top-first.
        while hi - lo > 1 {
            let split = split_point(hi - lo);
            if index < lo + split {
                hashes.push(self.node(lo + split, hi)?);
                hi = lo + split;
            } else {
                hashes.push(self.node(lo, lo + split)?);
                lo += split;
            }
        }
        hashes.reverse();
        Ok(InclusionProof { hashes })
    }

    /// RFC 9162 consistency proof from `old_size` to `new_size`.
    pub fn consistency_proof(&self, old_size: u64, new_size: u64) -> Result<ConsistencyProof, LogError> {
        if old_size > new_size {
            return Err(LogError::SizesOutOfOrder { old: old_size, new: new_size });
        }
        if new_size > self.size {
            return Err(LogError::SizeExceeded { requested: new_size, size: self.size });
        }
        let mut hashes = Vec::new();
        if old_size == 0 || old_size == new_size {
            return Ok(ConsistencyProof { hashes });
        }
        self.subproof(old_size, 0, new_size, true, &mut hashes)?;
        Ok(ConsistencyProof { hashes })
    }

    fn subproof(&self, m: u64, lo: u64, hi: u64, complete: bool, out: &mut Vec<Hash>) -> Result<(), LogError> {
        let n = hi - lo;
        if m == n {
            if !complete {
                out.push(self.node(lo, hi)?);
            }
            return Ok(());
        }
        let k = split_point(n);
        if m <= k {
            self.subproof(m, lo, lo + k, complete, out)?;
            out.push(self.node(lo + k, hi)?);
        } else {
            self.subproof(m - k, lo + k, hi, false, out)?;
            out.push(self.node(lo, lo + k)?);
        }
        Ok(())
    }

    /// Proof that the aligned subtree `range` is a node of the tree of
    /// `size` leaves; see [`super::verify_subtree_consistency`].
    pub fn subtree_consistency_proof(&self, range: SubtreeRange, size: u64) -> Result<ConsistencyProof, LogError> {
        if size > self.size || range.end() > size {
            return Err(LogError::SizeExceeded { requested: size.max(range.end()), size: self.size });
        }
        let mut hashes = Vec::new();
        if range.start() == 0 && range.end() == size {
            return Ok(ConsistencyProof { hashes });
        }
        if !range.is_aligned() {
            return Err(LogError::Unaligned(range));
        }
        let (mut lo, mut hi) = (0, size);
        while !(lo == range.start() && hi == range.end()) {
            let split = split_point(hi - lo);
            if range.end() <= lo + split {
                hashes.push(self.node(lo + split, hi)?);
                hi = lo + split;
            } else {
                hashes.push(self.node(lo, lo + split)?);
                lo += split;
            }
        }
        hashes.reverse();
        Ok(ConsistencyProof { hashes })
    }

    /// Drops leaves below `index`. Roots over the retained prefix are kept
    /// so checkpoints of size `>= index` stay computable.
    pub fn prune_before(&mut self, index: u64) -> Result<PruneState, LogError> {
        if index < self.min_available {
            return Err(LogError::PruneRegression { requested: index, current: self.min_available });
        }
        if index > self.size {
            return Err(LogError::SizeExceeded { requested: index, size: self.size });
        }
        if index == self.min_available {
            return Ok(self.prune_state());
        }
        for (k, level) in self.levels.iter_mut().enumerate() {
            let first = first_block(index, k as u32);
            if first > level.first {
                let drop = ((first - level.first) as usize).min(level.hashes.len());
                level.hashes.drain(..drop);
                level.first = first;
            }
        }
        self.min_available = index;
        if let Some(store) = &self.store {
            let tmp = store.dir.join(format!("{LEAVES_FILE}.tmp"));
            let mut bytes = Vec::with_capacity(((self.size - index) as usize) * HASH_LEN);
            for i in index..self.size {
                bytes.extend_from_slice(&self.block(0, i)?.0);
            }
            write_synced(&tmp, &bytes)?;
            // Frontier first: a crash between the two writes leaves a longer
            // leaf file than the frontier describes, which fails loudly on
            // open instead of silently shifting indices.
            self.write_frontier()?;
            fs::rename(&tmp, store.dir.join(LEAVES_FILE))?;
            let leaves = OpenOptions::new().append(true).open(store.dir.join(LEAVES_FILE))?;
            self.store.as_mut().unwrap().leaves = leaves;
        }
        Ok(self.prune_state())
    }

    fn write_frontier(&self) -> Result<(), LogError> {
        let Some(store) = &self.store else {
            return Ok(());
        };
        let retained = if self.min_available == 0 {
            Vec::new()
        } else {
            decompose_range(SubtreeRange::new(0, self.min_available).unwrap())
                .into_iter()
                .map(|r| {
                    self.node(r.start(), r.end())
                        .map(|hash| RetainedRoot { start: r.start(), end: r.end(), hash })
                })
                .collect::<Result<_, _>>()?
        };
        let file = FrontierFile {
            size: self.size,
            min_available_index: self.min_available,
            retained,
            frontier: self.frontier_at(self.size)?,
        };
        let body = serde_json::to_vec_pretty(&file).expect("frontier serializes");
        let tmp = store.dir.join(format!("{FRONTIER_FILE}.tmp"));
        write_synced(&tmp, &body)?;
        fs::rename(&tmp, store.dir.join(FRONTIER_FILE))?;
        Ok(())
    }
}

impl LeafSource for MerkleLog {
    fn leaf_at(&self, index: u64) -> Option<LeafHash> {
        self.leaf(index).ok()
    }
}

impl LeafSource for [LeafHash] {
    fn leaf_at(&self, index: u64) -> Option<LeafHash> {
        self.get(index as usize).copied()
    }
}

impl LeafSource for Vec<LeafHash> {
    fn leaf_at(&self, index: u64) -> Option<LeafHash> {
        self.as_slice().leaf_at(index)
    }
}

/// First block index at height `k` still stored once leaves below `p` are
/// pruned: the retained root of that height if `p` has bit `k` set,
/// otherwise the block containing leaf `p`.
fn first_block(p: u64, k: u32) -> u64 {
    if k >= 64 {
        return 0;
    }
    let idx = p >> k;
    if idx & 1 == 1 {
        idx - 1
    } else {
        idx
    }
}

fn write_synced(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut f = File::create(path)?;
    f.write_all(bytes)?;
    f.sync_all()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::merkle::{leaf_hash, verify_consistency, verify_inclusion};

    fn leaves(n: u64) -> Vec<LeafHash> {
        (0..n).map(|i| leaf_hash(&i.to_be_bytes())).collect()
    }

    #[test]
    fn append_assigns_sequential_indices() {
        let mut log = MerkleLog::new();
        assert_eq!(log.append(leaf_hash(b"a")).unwrap(), 0);
        assert_eq!(log.append(leaf_hash(b"b")).unwrap(), 1);
        assert_eq!(log.size(), 2);
    }

    #[test]
    fn small_roots() {
        let l = leaves(4);
        let log = MerkleLog::from_leaves(l.clone());
        assert_eq!(log.checkpoint_at(0).unwrap().root, empty_root());
        assert_eq!(log.checkpoint_at(1).unwrap().root, l[0]);
        assert_eq!(log.checkpoint_at(2).unwrap().root, node_hash(&l[0], &l[1]));
        assert_eq!(
            log.checkpoint_at(4).unwrap().root,
            node_hash(&node_hash(&l[0], &l[1]), &node_hash(&l[2], &l[3]))
        );
        assert_eq!(
            log.checkpoint_at(3).unwrap().root,
            node_hash(&node_hash(&l[0], &l[1]), &l[2])
        );
        assert!(matches!(log.checkpoint_at(5), Err(LogError::SizeExceeded { .. })));
    }

    #[test]
    fn subtree_proof_lengths() {
        let log = MerkleLog::from_leaves(leaves(4096));
        let r = |s, e| SubtreeRange::new(s, e).unwrap();
        assert_eq!(log.inclusion_proof(5, r(0, 16)).unwrap().byte_len(), 128);
        assert_eq!(log.inclusion_proof(1500, r(1024, 2048)).unwrap().byte_len(), 320);
        assert_eq!(log.inclusion_proof(4000, r(0, 4096)).unwrap().byte_len(), 384);
        assert!(log.inclusion_proof(9, SubtreeRange::leaf(9)).unwrap().hashes.is_empty());
    }

    #[test]
    fn inclusion_errors() {
        let log = MerkleLog::from_leaves(leaves(16));
        let r = |s, e| SubtreeRange::new(s, e).unwrap();
        assert!(matches!(log.inclusion_proof(3, r(4, 8)), Err(LogError::IndexOutsideRange { .. })));
        assert!(matches!(log.inclusion_proof(5, r(4, 12)), Err(LogError::Unaligned(_))));
        assert!(matches!(log.inclusion_proof(17, r(16, 32)), Err(LogError::SizeExceeded { .. })));
        assert!(matches!(log.subtree_root(r(2, 6)), Err(LogError::Unaligned(_))));
    }

    #[test]
    fn subtree_roots() {
        let l = leaves(32);
        let log = MerkleLog::from_leaves(l.clone());
        assert_eq!(log.subtree_root(SubtreeRange::leaf(7)).unwrap(), l[7]);
        assert_eq!(
            log.subtree_root(SubtreeRange::new(0, 16).unwrap()).unwrap(),
            log.checkpoint_at(16).unwrap().root
        );
        let upper = MerkleLog::from_leaves(l[16..].to_vec());
        assert_eq!(
            log.subtree_root(SubtreeRange::new(16, 32).unwrap()).unwrap(),
            upper.checkpoint().root
        );
    }

    #[test]
    fn consistency_order_error() {
        let log = MerkleLog::from_leaves(leaves(16));
        assert!(matches!(log.consistency_proof(16, 8), Err(LogError::SizesOutOfOrder { .. })));
        assert!(log.consistency_proof(16, 16).unwrap().hashes.is_empty());
        assert!(log.consistency_proof(0, 16).unwrap().hashes.is_empty());
    }

    #[test]
    fn prune_keeps_checkpoints() {
        let full = MerkleLog::from_leaves(leaves(16));
        let mut log = full.clone();
        assert_eq!(log.prune_before(0).unwrap().min_available_index, 0);
        log.prune_before(8).unwrap();
        assert_eq!(log.checkpoint_at(16).unwrap(), full.checkpoint_at(16).unwrap());
        assert_eq!(log.checkpoint_at(8).unwrap(), full.checkpoint_at(8).unwrap());
        assert!(matches!(
            log.inclusion_proof(3, SubtreeRange::new(0, 16).unwrap()),
            Err(LogError::Pruned { .. })
        ));
        let r = SubtreeRange::new(8, 16).unwrap();
        let p = log.inclusion_proof(8, r).unwrap();
        assert_eq!(p, full.inclusion_proof(8, r).unwrap());
        assert!(matches!(log.prune_before(4), Err(LogError::PruneRegression { .. })));
    }

    #[test]
    fn prune_odd_boundary_and_keep_appending() {
        let all = leaves(40);
        let full = MerkleLog::from_leaves(all.clone());
        let mut log = MerkleLog::from_leaves(all[..13].to_vec());
        log.prune_before(13).unwrap();
        for l in &all[13..] {
            log.append(*l).unwrap();
        }
        assert_eq!(log.size(), 40);
        for n in 13..=40 {
            assert_eq!(log.checkpoint_at(n).unwrap(), full.checkpoint_at(n).unwrap(), "size {n}");
        }
        for m in 13..=40 {
            for n in m..=40 {
                let p = log.consistency_proof(m, n);
                if let Ok(p) = p {
                    assert_eq!(p, full.consistency_proof(m, n).unwrap());
                }
            }
        }
        let whole = SubtreeRange::new(0, 40).unwrap();
        for i in 13..40 {
            let p = log.inclusion_proof(i, whole).unwrap();
            assert!(verify_inclusion(&all[i as usize], i, &p, &whole, &full.checkpoint().root));
        }
        assert!(log.inclusion_proof(12, whole).is_err());
        assert!(log.leaf(12).is_err());
    }

    #[test]
    fn subtree_containment_round_trip() {
        let log = MerkleLog::from_leaves(leaves(37));
        for size in 1..=37u64 {
            let cp = log.checkpoint_at(size).unwrap();
            for k in 0..6u32 {
                let w = 1u64 << k;
                let mut start = 0;
                while start + w <= size {
                    let r = SubtreeRange::new(start, start + w).unwrap();
                    let proof = log.subtree_consistency_proof(r, size).unwrap();
                    let root = log.subtree_root(r).unwrap();
                    assert!(crate::merkle::verify_subtree_consistency(&r, &root, &cp, &proof), "{r} in {size}");
                    let wrong = leaf_hash(b"forged");
                    assert!(!crate::merkle::verify_subtree_consistency(&r, &wrong, &cp, &proof));
                    start += w;
                }
            }
        }
    }

    #[test]
    fn persisted_log_survives_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let l = leaves(21);
        {
            let mut log = MerkleLog::open(dir.path()).unwrap();
            for leaf in &l[..10] {
                log.append(*leaf).unwrap();
            }
        }
        {
            let mut log = MerkleLog::open(dir.path()).unwrap();
            assert_eq!(log.size(), 10);
            for leaf in &l[10..] {
                log.append(*leaf).unwrap();
            }
            log.prune_before(9).unwrap();
        }
        let log = MerkleLog::open(dir.path()).unwrap();
        let full = MerkleLog::from_leaves(l.clone());
        assert_eq!(log.size(), 21);
        assert_eq!(log.prune_state().min_available_index, 9);
        assert_eq!(log.checkpoint(), full.checkpoint());
        assert!(verify_consistency(
            &log.checkpoint_at(12).unwrap(),
            &log.checkpoint(),
            &log.consistency_proof(12, 21).unwrap()
        ));
        assert_eq!(fs::metadata(dir.path().join(LEAVES_FILE)).unwrap().len(), 12 * 32);
    }

    #[test]
    fn torn_trailing_leaf_is_discarded() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut log = MerkleLog::open(dir.path()).unwrap();
            for leaf in leaves(5) {
                log.append(leaf).unwrap();
            }
        }
        let mut f = OpenOptions::new().append(true).open(dir.path().join(LEAVES_FILE)).unwrap();
        f.write_all(&[0xAB; 7]).unwrap();
        drop(f);
        let log = MerkleLog::open(dir.path()).unwrap();
        assert_eq!(log.size(), 5);
    }

    #[test]
    fn lost_leaves_are_detected() {
        let dir = tempfile::tempdir().unwrap();
        {
            let mut log = MerkleLog::open(dir.path()).unwrap();
            for leaf in leaves(5) {
                log.append(leaf).unwrap();
            }
        }
        let f = OpenOptions::new().write(true).open(dir.path().join(LEAVES_FILE)).unwrap();
        f.set_len(3 * 32).unwrap();
        assert!(matches!(MerkleLog::open(dir.path()), Err(LogError::Corrupt(_))));
    }
}

//! Pure proof verification. Nothing here touches log storage.

use super::{empty_root, node_hash, Checkpoint, ConsistencyProof, Hash, InclusionProof, SubtreeRange};

/// Folds `leaf` up through `proof` and returns the implied subtree root,
/// together with the number of node hashes evaluated.
///
/// `index` is absolute; its position inside `range` decides left/right
/// ordering at each step (RFC 9162, section 2.1.3.2, applied to the leaves
/// of `range`). Returns `None` when the proof has the wrong length for the
/// position or `index` lies outside `range`.
pub fn inclusion_root(
    leaf: &Hash,
    index: u64,
    proof: &[Hash],
    range: &SubtreeRange,
) -> Option<(Hash, u32)> {
    if !range.contains(index) {
        return None;
    }
    let mut fnode = index - range.start();
    let mut snode = range.width() - 1;
    let mut r = *leaf;
    let mut ops = 0u32;
    for p in proof {
        if snode == 0 {
            return None;
        }
        if fnode & 1 == 1 || fnode == snode {
            r = node_hash(p, &r);
            if fnode & 1 == 0 {
                while fnode & 1 == 0 && fnode != 0 {
                    fnode >>= 1;
                    snode >>= 1;
                }
            }
        } else {
            r = node_hash(&r, p);
        }
        ops += 1;
        fnode >>= 1;
        snode >>= 1;
    }
    if snode != 0 {
        return None;
    }
    Some((r, ops))
}

pub fn verify_inclusion(
    leaf: &Hash,
    index: u64,
    proof: &InclusionProof,
    range: &SubtreeRange,
    expected_root: &Hash,
) -> bool {
    matches!(inclusion_root(leaf, index, &proof.hashes, range), Some((root, _)) if root == *expected_root)
}

/// Outcome of checking a consistency proof, with enough detail for a
/// cosigner to tell a rewritten history from a broken proof.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConsistencyCheck {
    Consistent,
    /// The proof does not have the shape required by the two sizes, or the
    /// sizes go backwards.
    Malformed,
    /// The proof does not reproduce the old root: the history differs.
    OldRootMismatch,
    /// The old root matches but the new root does not.
    NewRootMismatch,
}

/// RFC 9162 section 2.1.4.2, reporting which root failed and how many node
/// hashes were evaluated.
pub fn consistency_root_check(
    old: &Checkpoint,
    new: &Checkpoint,
    proof: &ConsistencyProof,
) -> (ConsistencyCheck, u32) {
    use ConsistencyCheck::*;
    if old.size > new.size {
        return (Malformed, 0);
    }
    if old.size == new.size {
        if !proof.hashes.is_empty() {
            return (Malformed, 0);
        }
        return if old.root == new.root {
            (Consistent, 0)
        } else {
            (OldRootMismatch, 0)
        };
    }
    if old.size == 0 {
        if !proof.hashes.is_empty() {
            return (Malformed, 0);
        }
        return if old.root == empty_root() {
            (Consistent, 0)
        } else {
            (OldRootMismatch, 0)
        };
    }
    if proof.hashes.is_empty() {
        return (Malformed, 0);
    }

    let mut path: Vec<&Hash> = Vec::with_capacity(proof.hashes.len() + 1);
    if old.size.is_power_of_two() {
        path.push(&old.root);
    }
    path.extend(proof.hashes.iter());

    let mut fnode = old.size - 1;
    let mut snode = new.size - 1;
    while fnode & 1 == 1 {
        fnode >>= 1;
        snode >>= 1;
    }
    let mut fr = *path[0];
    let mut sr = *path[0];
    let mut ops = 0u32;
    for c in &path[1..] {
        if snode == 0 {
            return (Malformed, ops);
        }
        if fnode & 1 == 1 || fnode == snode {
            fr = node_hash(c, &fr);
            sr = node_hash(c, &sr);
            ops += 2;
            if fnode & 1 == 0 {
                while fnode & 1 == 0 && fnode != 0 {
                    fnode >>= 1;
                    snode >>= 1;
                }
            }
        } else {
            sr = node_hash(&sr, c);
            ops += 1;
        }
        fnode >>= 1;
        snode >>= 1;
    }
    if snode != 0 {
        return (Malformed, ops);
    }
    if fr != old.root {
        return (OldRootMismatch, ops);
    }
    if sr != new.root {
        return (NewRootMismatch, ops);
    }
    (Consistent, ops)
}

pub fn verify_consistency(old: &Checkpoint, new: &Checkpoint, proof: &ConsistencyProof) -> bool {
    consistency_root_check(old, new, proof).0 == ConsistencyCheck::Consistent
}

/// Checks that the aligned subtree `range` with root `subtree_root` is a
/// node of the tree committed to by `within`.
///
/// An aligned block of width `2^k` that fits inside a tree of size `n` is a
/// node of the RFC 9162 tree, and the nodes at height `k` and above form the
/// RFC 9162 tree over `ceil(n / 2^k)` pseudo-leaves. The proof is the
/// inclusion path of pseudo-leaf `start >> k` in that tree. The degenerate
/// case `range == [0, n)` takes an empty proof.
pub fn verify_subtree_consistency(
    range: &SubtreeRange,
    subtree_root: &Hash,
    within: &Checkpoint,
    proof: &ConsistencyProof,
) -> bool {
    if range.end() > within.size {
        return false;
    }
    if range.start() == 0 && range.end() == within.size {
        return proof.hashes.is_empty() && *subtree_root == within.root;
    }
    if !range.is_aligned() {
        return false;
    }
    let height = range.width().trailing_zeros();
    let pseudo_size = within.size.div_ceil(range.width());
    let Ok(pseudo_range) = SubtreeRange::new(0, pseudo_size) else {
        return false;
    };
    matches!(
        inclusion_root(subtree_root, range.start() >> height, &proof.hashes, &pseudo_range),
        Some((root, _)) if root == within.root
    )
}

//! Reference computations written straight from the recursive definitions,
//! with no caching and no shared code with `mtc-core`. Slow on purpose.

use sha2::{Digest, Sha256};

pub type H = [u8; 32];

pub fn leaf(entry: &[u8]) -> H {
    let mut h = Sha256::new();
    h.update([0u8]);
    h.update(entry);
    h.finalize().into()
}

pub fn node(l: &H, r: &H) -> H {
    let mut h = Sha256::new();
    h.update([1u8]);
    h.update(l);
    h.update(r);
    h.finalize().into()
}

/// Largest power of two strictly less than `n`.
fn k(n: usize) -> usize {
    let mut k = 1;
    while k * 2 < n {
        k *= 2;
    }
    k
}

/// Merkle tree hash over leaf hashes.
pub fn mth(d: &[H]) -> H {
    match d.len() {
        0 => Sha256::digest([]).into(),
        1 => d[0],
        n => {
            let k = k(n);
            node(&mth(&d[..k]), &mth(&d[k..]))
        }
    }
}

/// Audit path for leaf `m`, deepest sibling first.
pub fn path(m: usize, d: &[H]) -> Vec<H> {
    let n = d.len();
    if n <= 1 {
        return vec![];
    }
    let k = k(n);
    if m < k {
        let mut p = path(m, &d[..k]);
        p.push(mth(&d[k..]));
        p
    } else {
        let mut p = path(m - k, &d[k..]);
        p.push(mth(&d[..k]));
        p
    }
}

/// Consistency proof from the first `m` leaves to all of `d`.
pub fn consistency(m: usize, d: &[H]) -> Vec<H> {
    if m == 0 || m == d.len() {
        return vec![];
    }
    subproof(m, d, true)
}

fn subproof(m: usize, d: &[H], b: bool) -> Vec<H> {
    let n = d.len();
    if m == n {
        return if b { vec![] } else { vec![mth(d)] };
    }
    let k = k(n);
    if m <= k {
        let mut p = subproof(m, &d[..k], b);
        p.push(mth(&d[k..]));
        p
    } else {
        let mut p = subproof(m - k, &d[k..], false);
        p.push(mth(&d[..k]));
        p
    }
}

/// Inclusion proof of `index` inside the subtree `[start, end)`.
pub fn subtree_path(index: usize, start: usize, end: usize, d: &[H]) -> Vec<H> {
    path(index - start, &d[start..end])
}

/// Siblings from the node covering exactly `[start, end)` up to the root of
/// `d`, deepest first. `None` when no node covers that range.
pub fn node_path(start: usize, end: usize, d: &[H]) -> Option<Vec<H>> {
    fn go(start: usize, end: usize, lo: usize, d: &[H]) -> Option<Vec<H>> {
        let hi = lo + d.len();
        if start == lo && end == hi {
            return Some(vec![]);
        }
        if d.len() <= 1 {
            return None;
        }
        let k = k(d.len());
        if end <= lo + k {
            let mut p = go(start, end, lo, &d[..k])?;
            p.push(mth(&d[k..]));
            Some(p)
        } else if start >= lo + k {
            let mut p = go(start, end, lo + k, &d[k..])?;
            p.push(mth(&d[..k]));
            Some(p)
        } else {
            None
        }
    }
    go(start, end, 0, d)
}

/// Every node of the tree over `n` leaves, as `(start, end)`.
pub fn nodes(n: usize) -> Vec<(usize, usize)> {
    fn go(lo: usize, hi: usize, out: &mut Vec<(usize, usize)>) {
        out.push((lo, hi));
        if hi - lo > 1 {
            let k = k(hi - lo);
            go(lo, lo + k, out);
            go(lo + k, hi, out);
        }
    }
    let mut out = vec![];
    if n > 0 {
        go(0, n, &mut out);
    }
    out
}

/// Fewest power-of-two blocks, each starting at a multiple of its width,
/// covering `[start, end)` left to right. Exhaustive over all block choices
/// by dynamic programming from the right; ties go to the wider first block.
pub fn min_aligned_cover(start: u64, end: u64) -> Vec<(u64, u64)> {
    let n = (end - start) as usize;
    // best[i]: (blocks, first width) for covering [start + i, end).
    let mut best: Vec<(usize, u64)> = vec![(0, 0); n + 1];
    for i in (0..n).rev() {
        let pos = start + i as u64;
        let mut w = 1u64;
        let mut pick = (usize::MAX, 0);
        while pos + w <= end {
            if pos.is_multiple_of(w) {
                let c = best[i + w as usize].0 + 1;
                if c <= pick.0 {
                    pick = (c, w);
                }
            }
            w *= 2;
        }
        best[i] = pick;
    }
    let mut out = vec![];
    let mut i = 0;
    while i < n {
        let w = best[i].1;
        let pos = start + i as u64;
        out.push((pos, pos + w));
        i += w as usize;
    }
    out
}

/// Revoked index set as a flat list of half-open ranges, scanned linearly.
#[derive(Default, Clone, Debug)]
pub struct NaiveRevocations(pub Vec<(u64, u64)>);

impl NaiveRevocations {
    pub fn contains(&self, i: u64) -> bool {
        self.0.iter().any(|&(lo, hi)| lo <= i && i < hi)
    }
}

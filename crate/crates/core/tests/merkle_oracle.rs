use mtc_core::merkle::{decompose_range, leaf_hash, node_hash, verify_consistency, verify_inclusion, Hash, MerkleLog, SubtreeRange};
use proptest::prelude::*;

fn leaves(n: usize) -> Vec<[u8; 32]> {
    (0..n).map(|i| mtc_oracle::leaf(format!("entry {i}").as_bytes())).collect()
}

fn log_of(d: &[[u8; 32]]) -> MerkleLog {
    MerkleLog::from_leaves(d.iter().map(|h| Hash(*h)))
}

fn raw(hashes: &[Hash]) -> Vec<[u8; 32]> {
    hashes.iter().map(|h| h.0).collect()
}

#[test]
fn hash_primitives_match() {
    let (a, b) = (mtc_oracle::leaf(b"a"), mtc_oracle::leaf(b"b"));
    assert_eq!(leaf_hash(b"a").0, a);
    assert_eq!(node_hash(&Hash(a), &Hash(b)).0, mtc_oracle::node(&a, &b));
}

#[test]
fn every_node_containment_matches_up_to_70() {
    for n in 1..=70 {
        let d = leaves(n);
        let log = log_of(&d);
        let root = log.checkpoint();
        for (s, e) in mtc_oracle::nodes(n) {
            let range = SubtreeRange::new(s as u64, e as u64).unwrap();
            if !range.is_aligned() && !(s == 0 && e == n) {
                continue;
            }
            let want = mtc_oracle::node_path(s, e, &d).unwrap();
            let got = log.subtree_consistency_proof(range, n as u64).unwrap();
            assert_eq!(raw(&got.hashes), want, "n={n} [{s},{e})");
            let sub = log.subtree_root(range).unwrap();
            assert_eq!(sub.0, mtc_oracle::mth(&d[s..e]));
            assert!(mtc_core::merkle::verify_subtree_consistency(&range, &sub, &root, &got));
        }
    }
}

#[test]
fn subtree_inclusion_matches_up_to_40() {
    for n in 1..=40usize {
        let d = leaves(n);
        let log = log_of(&d);
        for s in 0..n {
            for e in s + 1..=n {
                let range = SubtreeRange::new(s as u64, e as u64).unwrap();
                if !range.is_subtree() {
                    continue;
                }
                let root = Hash(mtc_oracle::mth(&d[s..e]));
                for i in s..e {
                    let p = log.inclusion_proof(i as u64, range).unwrap();
                    assert_eq!(raw(&p.hashes), mtc_oracle::subtree_path(i, s, e, &d));
                    assert!(verify_inclusion(&Hash(d[i]), i as u64, &p, &range, &root));
                }
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn random_trees_match(n in 1usize..1500, seed in any::<u64>()) {
        let d = leaves(n);
        let log = log_of(&d);
        let i = (seed as usize) % n;
        let m = (seed as usize >> 16) % (n + 1);
        let full = SubtreeRange::new(0, n as u64).unwrap();
        let p = log.inclusion_proof(i as u64, full).unwrap();
        prop_assert_eq!(raw(&p.hashes), mtc_oracle::path(i, &d));
        let c = log.consistency_proof(m as u64, n as u64).unwrap();
        prop_assert_eq!(raw(&c.hashes), mtc_oracle::consistency(m, &d));
        let old = log.checkpoint_at(m as u64).unwrap();
        prop_assert_eq!(old.root.0, mtc_oracle::mth(&d[..m]));
        prop_assert!(verify_consistency(&old, &log.checkpoint(), &c));
    }

    #[test]
    fn decomposition_is_minimal(start in 0u64..5000, width in 1u64..3000) {
        let got: Vec<(u64, u64)> = decompose_range(SubtreeRange::new(start, start + width).unwrap())
            .into_iter()
            .map(|r| (r.start(), r.end()))
            .collect();
        prop_assert_eq!(got, mtc_oracle::min_aligned_cover(start, start + width));
    }

    #[test]
    fn wrong_leaf_or_index_rejected(n in 2usize..300, i in any::<usize>(), flip in 0usize..256) {
        let d = leaves(n);
        let log = log_of(&d);
        let i = i % n;
        let full = SubtreeRange::new(0, n as u64).unwrap();
        let p = log.inclusion_proof(i as u64, full).unwrap();
        let root = log.checkpoint().root;
        let mut bad = d[i];
        bad[flip / 8] ^= 1 << (flip % 8);
        prop_assert!(!verify_inclusion(&Hash(bad), i as u64, &p, &full, &root));
        let j = (i + 1) % n;
        prop_assert!(!verify_inclusion(&Hash(d[i]), j as u64, &p, &full, &root) || d[i] == d[j]);
    }
}

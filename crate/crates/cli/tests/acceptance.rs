//! Acceptance run. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::panic::{self, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use mtc_cli::demo::{self, DemoOptions, DemoOutcome, DemoReport};
use mtc_core::codec::{decode_certificate, decode_entry, encode_certificate, encode_entry, MtcCertificate, TrustAnchorRange};
use mtc_core::cosigner::{Cosigner, Refusal};
use mtc_core::trust::CosignerMode;
use mtc_core::deployment::{derive_key, Deployment, DeploymentSpec, Withholding};
use mtc_core::handshake::bench::{bench_fixture, fixture, BenchConfig, Scenario};
use mtc_core::handshake::size_model::{
    default_environments, reduction_table, rp_state_table, size_table, SizeModel, ML_DSA_65,
};
use mtc_core::handshake::{run_handshake, AuthMode, Client, Server, ServerCredentials};
use mtc_core::landmark::max_landmarks;
use mtc_core::merkle::{verify_consistency, verify_inclusion, Hash, MerkleLog, SubtreeRange};
use mtc_core::relying_party::{
    select_certificate, verify_certificate, AdvertisedAnchor, CertInventory, Reason, RelyingTrust, ENTRY_HASH_OPS,
};
use mtc_core::signature::{KeyPair, SchemeId, SignatureRegistry};
use mtc_oracle::H;
use rand::rngs::StdRng;
use rand::{RngExt, SeedableRng};

type Check = fn() -> Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn main() {
    let checks: [(&str, Check); 8] = [
        ("proof correctness vs oracle", proof_correctness),
        ("proof size table", proof_sizes),
        ("size model reproduction", size_model),
        ("verification performance", verification_performance),
        ("hash-only authentication", hash_only_authentication),
        ("end-to-end lifecycle", lifecycle),
        ("adversarial suite", adversarial),
        ("negotiation matrix", negotiation),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = t.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {}: PASS {name} ({secs:.2}s): {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {}: FAIL {name} ({secs:.2}s): {why}", i + 1);
            }
        }
    }
    let _ = panic::take_hook();
    println!("acceptance: {} of {} criteria passed", checks.len() - failed, checks.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

fn raw(hashes: &[Hash]) -> Vec<H> {
    hashes.iter().map(|h| h.0).collect()
}

/// The recursive tree definitions over one leaf array, with subtree hashes
/// cached by `[a, b)` so every size up to the array length is cheap.
struct Memo<'a> {
    d: &'a [H],
    cache: HashMap<(usize, usize), H>,
}

fn split(n: usize) -> usize {
    1 << (usize::BITS - 1 - (n - 1).leading_zeros())
}

impl Memo<'_> {
    fn mth(&mut self, a: usize, b: usize) -> H {
        if b - a == 1 {
            return self.d[a];
        }
        if let Some(h) = self.cache.get(&(a, b)) {
            return *h;
        }
        let k = split(b - a);
        let h = mtc_oracle::node(&self.mth(a, a + k), &self.mth(a + k, b));
        self.cache.insert((a, b), h);
        h
    }

    fn path(&mut self, m: usize, a: usize, b: usize, out: &mut Vec<H>) {
        if b - a <= 1 {
            return;
        }
        let k = split(b - a);
        if m < k {
            self.path(m, a, a + k, out);
            out.push(self.mth(a + k, b));
        } else {
            self.path(m - k, a + k, b, out);
            out.push(self.mth(a, a + k));
        }
    }

    fn consistency(&mut self, m: usize, n: usize) -> Vec<H> {
        let mut out = Vec::new();
        if m > 0 && m < n {
            self.subproof(m, 0, n, true, &mut out);
        }
        out
    }

    fn subproof(&mut self, m: usize, a: usize, b: usize, whole: bool, out: &mut Vec<H>) {
        if m == b - a {
            if !whole {
                out.push(self.mth(a, b));
            }
            return;
        }
        let k = split(b - a);
        if m <= k {
            self.subproof(m, a, a + k, whole, out);
            out.push(self.mth(a + k, b));
        } else {
            self.subproof(m - k, a + k, b, false, out);
            out.push(self.mth(a, a + k));
        }
    }
}

fn proof_correctness() -> Result<String, String> {
    const N: usize = 1024;
    let t = Instant::now();
    let d: Vec<H> = (0..N).map(|i| mtc_oracle::leaf(format!("leaf {i}").as_bytes())).collect();
    let mut memo = Memo { d: &d, cache: HashMap::new() };
    // The cached definitions agree with the uncached reference on small trees.
    for n in 1..=48 {
        for m in 0..n {
            let mut p = Vec::new();
            memo.path(m, 0, n, &mut p);
            ensure!(p == mtc_oracle::path(m, &d[..n]), "memo path differs at n={n} m={m}");
            ensure!(memo.consistency(m, n) == mtc_oracle::consistency(m, &d[..n]), "memo consistency differs at n={n} m={m}");
        }
        ensure!(memo.mth(0, n) == mtc_oracle::mth(&d[..n]), "memo root differs at n={n}");
    }

    let log = MerkleLog::from_leaves(d.iter().map(|h| Hash(*h)));
    let (mut inclusions, mut consistencies) = (0u64, 0u64);
    for n in 1..=N {
        let full = SubtreeRange::new(0, n as u64).unwrap();
        let new = log.checkpoint_at(n as u64).map_err(|e| e.to_string())?;
        ensure!(new.root.0 == memo.mth(0, n), "root differs at n={n}");
        for i in 0..n {
            let p = log.inclusion_proof(i as u64, full).map_err(|e| e.to_string())?;
            let mut want = Vec::new();
            memo.path(i, 0, n, &mut want);
            ensure!(raw(&p.hashes) == want, "inclusion bytes differ at n={n} i={i}");
            ensure!(verify_inclusion(&Hash(d[i]), i as u64, &p, &full, &new.root), "inclusion fails at n={n} i={i}");
            inclusions += 1;
        }
        for m in 1..=n {
            let c = log.consistency_proof(m as u64, n as u64).map_err(|e| e.to_string())?;
            ensure!(raw(&c.hashes) == memo.consistency(m, n), "consistency bytes differ at {m}->{n}");
            let old = log.checkpoint_at(m as u64).map_err(|e| e.to_string())?;
            ensure!(verify_consistency(&old, &new, &c), "consistency fails at {m}->{n}");
            consistencies += 1;
        }
    }
    let secs = t.elapsed().as_secs_f64();
    ensure!(secs < 60.0, "took {secs:.1}s");
    Ok(format!("{inclusions} inclusion and {consistencies} consistency proofs match for every n <= {N}"))
}

fn proof_sizes() -> Result<String, String> {
    let mut got = Vec::new();
    for (scenario, want) in [(Scenario::Landmark16, 128), (Scenario::Landmark1024, 320), (Scenario::Landmark4096, 384)] {
        let f = fixture(scenario);
        let hashes = match &f.presented {
            mtc_core::handshake::bench::Presented::Mtc(c) => c.proof.inclusion.hashes.len(),
            _ => return Err("landmark scenario presented a classical certificate".into()),
        };
        ensure!(hashes * 32 == want, "{}: {} hashes", scenario.name(), hashes);
        ensure!(f.proof_bytes() == want, "{}: {} proof bytes", scenario.name(), f.proof_bytes());
        got.push(want.to_string());
    }
    Ok(format!("{} bytes", got.join(" / ")))
}

fn size_model() -> Result<String, String> {
    let m = SizeModel::default();
    let rows = size_table(&m);
    let pq_x509 = rows.iter().find(|r| r.scenario.contains("X.509") && r.scenario.contains("ML-DSA-65")).ok_or("no PQ X.509 row")?;
    let pq_lm = rows.iter().find(|r| r.scenario.contains("landmark") && r.scenario.contains("ML-DSA-65")).ok_or("no PQ landmark row")?;
    // Four ML-DSA-65 signatures of 3,309 B: two in the chain, two SCTs.
    ensure!(ML_DSA_65.signature == 3309 && pq_x509.auth_overhead == 13_236, "PQ auth overhead {}", pq_x509.auth_overhead);
    let within = |got: usize, want: f64| ((got as f64 - want) / want).abs() <= 0.05;
    ensure!(within(pq_x509.total, 17_504.0), "PQ X.509 total {}", pq_x509.total);
    ensure!(within(pq_lm.total, 2_906.0), "PQ landmark total {}", pq_lm.total);
    ensure!(m.proof_hash_bytes(23) == 736, "depth-23 hash bytes {}", m.proof_hash_bytes(23));
    let reduction = reduction_table(&m)
        .into_iter()
        .find(|r| r.comparison.contains(ML_DSA_65.name))
        .ok_or("no ML-DSA-65 reduction row")?;
    ensure!(reduction.reduction_pct >= 80.0, "reduction {:.1}%", reduction.reduction_pct);
    let rp: Vec<u64> = rp_state_table(&default_environments()).iter().map(|r| r.total).collect();
    for want in [1_600, 9_280, 46_400] {
        ensure!(rp.contains(&want), "RP state rows {rp:?} lack {want}");
    }
    ensure!(max_landmarks(86_400, 600) == 86_400u64.div_ceil(600) + 1 && max_landmarks(86_400, 600) == 145, "max_landmarks");
    Ok(format!(
        "overhead 13236 B, PQ X.509 {} B, landmark {} B, reduction {:.1}%, RP state 1600/9280/46400 B, 145 landmarks",
        pq_x509.total, pq_lm.total, reduction.reduction_pct
    ))
}

fn verification_performance() -> Result<String, String> {
    let cfg = BenchConfig { iterations: 2_000, warmup: 200 };
    for (scenario, depth) in [(Scenario::Landmark16, 4), (Scenario::Landmark1024, 10), (Scenario::Landmark4096, 12)] {
        let ops = fixture(scenario).hash_ops();
        ensure!(ops == Some(depth + ENTRY_HASH_OPS), "{}: {ops:?} hash ops", scenario.name());
    }
    let landmark = bench_fixture(&fixture(Scenario::Landmark4096), &cfg);
    let classical = bench_fixture(&fixture(Scenario::ClassicalEcdsa), &cfg);
    let (lm, ec) = (landmark.verify.median_ns, classical.verify.median_ns);
    let ratio = ec / lm;
    ensure!(lm < 20_000.0, "landmark median {lm:.0} ns");
    ensure!(ratio >= 5.0, "ratio {ratio:.1}x (landmark {lm:.0} ns, ecdsa {ec:.0} ns)");
    Ok(format!("landmark-4096 {:.2} us, ecdsa-p256 {:.2} us, {ratio:.1}x, 14 hash ops", lm / 1e3, ec / 1e3))
}

struct World {
    d: Deployment,
    key: KeyPair,
    standalone: Vec<MtcCertificate>,
}

/// 40 entries with landmark 1 at size 16 and landmark 2 at size 40.
fn world(witnesses: usize, mirror: bool, k: usize) -> World {
    let mut d = Deployment::new(DeploymentSpec { witnesses, mirror, required_k: k, ..Default::default() });
    let key = d.entity_key(SchemeId::EcdsaP256);
    let mut standalone = Vec::new();
    for i in 0..40 {
        standalone.push(d.issue(&format!("nf{i}.5gc.svc"), &key).expect("issuance"));
        if i == 15 {
            d.allocate_landmark().expect("allocation");
        }
    }
    d.allocate_landmark().expect("allocation");
    World { d, key, standalone }
}

impl World {
    fn inventory(&self, index: u64, numbers: &[u64]) -> CertInventory {
        let base = &self.d.trust_config().landmark_base;
        CertInventory {
            standalone: self.standalone[index as usize].clone(),
            landmarks: numbers
                .iter()
                .map(|&n| (base.child(n), self.d.authority.landmark_certificate(index, Some(n)).expect("covered").1))
                .collect(),
        }
    }

    fn server(&self, inventory: CertInventory) -> Server {
        Server { credentials: ServerCredentials::Mtc(inventory), key: self.key.clone() }
    }
}

fn hash_only_authentication() -> Result<String, String> {
    let w = world(3, false, 2);
    let registry = Arc::new(SignatureRegistry::new());
    let trust = w.d.relying_trust().with_registry(registry.clone());
    for i in 0..1_000u64 {
        let server = w.server(w.inventory(i % 40, &[if i % 40 < 16 { 1 } else { 2 }]));
        let r = run_handshake(&Client::new(&trust, w.d.now), &server, None);
        let auth = r.outcome.map_err(|e| format!("landmark handshake {i}: {e}"))?;
        ensure!(auth.mode == AuthMode::Landmark, "handshake {i} in {:?} mode", auth.mode);
    }
    let c = registry.counts();
    ensure!(c.certificate_path() == 0, "{} certificate-path signatures in landmark mode", c.certificate_path());
    ensure!(c.certificate_verify == 1_000, "{} CertificateVerify checks", c.certificate_verify);

    let registry = Arc::new(SignatureRegistry::new());
    let bare = RelyingTrust::new(w.d.trust_config().clone(), None).with_registry(registry.clone());
    for i in 0..100u64 {
        let before = registry.counts();
        let r = run_handshake(&Client::new(&bare, w.d.now), &w.server(w.inventory(i % 40, &[])), None);
        let auth = r.outcome.map_err(|e| format!("standalone handshake {i}: {e}"))?;
        ensure!(auth.mode == AuthMode::Standalone, "handshake {i} in {:?} mode", auth.mode);
        let delta = registry.counts() - before;
        ensure!(delta.cosignature == 2 && delta.certificate_path() == 2, "standalone handshake {i}: {delta:?}");
    }
    Ok("0 certificate-path signatures over 1000 landmark handshakes; standalone verifies exactly k = 2 of 3".into())
}

fn block_on_demo(opts: &DemoOptions) -> Result<DemoReport, String> {
    let rt = tokio::runtime::Runtime::new().map_err(|e| e.to_string())?;
    rt.block_on(demo::run(opts, &mut std::io::sink())).map_err(|e| e.to_string())
}

fn opts(withhold_entry: bool, stale_distributor: bool) -> DemoOptions {
    DemoOptions { withhold_entry, stale_distributor, data_dir: None, certs: 16 }
}

fn lifecycle() -> Result<String, String> {
    let stages = [
        "start",
        "issuance",
        "cosign",
        "mirror-sync",
        "landmark-allocation",
        "distribution",
        "landmark-handshake",
        "revocation",
        "rejected-handshake",
    ];
    let mut runs = Vec::new();
    for _ in 0..2 {
        let r = block_on_demo(&opts(false, false))?;
        ensure!(r.elapsed < Duration::from_secs(30), "demo took {:?}", r.elapsed);
        ensure!(r.outcome == DemoOutcome::Completed, "outcome {:?}", r.outcome);
        let names: Vec<&str> = r.stages.iter().map(|(s, _)| s.as_str()).collect();
        ensure!(names == stages, "stages {names:?}");
        ensure!(r.handshake_mode == Some(AuthMode::Landmark), "handshake mode {:?}", r.handshake_mode);
        ensure!(r.handshake_cert_path_signatures == 0, "{} cert-path signatures", r.handshake_cert_path_signatures);
        ensure!(r.revoked_alert == Some(44), "alert {:?}", r.revoked_alert);
        runs.push(r);
    }
    // Ports and temp paths differ between runs; everything else must not.
    let strip = |r: &DemoReport| {
        r.stages
            .iter()
            .filter(|(s, _)| !matches!(s.as_str(), "start" | "distribution"))
            .cloned()
            .collect::<Vec<_>>()
    };
    ensure!(strip(&runs[0]) == strip(&runs[1]), "runs differ:\n{:?}\n{:?}", strip(&runs[0]), strip(&runs[1]));
    Ok(format!("{} stages in {:.2}s and {:.2}s, identical reports", stages.len(), runs[0].elapsed.as_secs_f64(), runs[1].elapsed.as_secs_f64()))
}

fn leaves(tag: &str, n: usize) -> Vec<Hash> {
    (0..n).map(|i| Hash(mtc_oracle::leaf(format!("{tag} {i}").as_bytes()))).collect()
}

/// Every fork point below every signed size, offered at every larger size.
fn forks_refused() -> Result<usize, String> {
    let honest = leaves("honest", 12);
    let mut cases = 0;
    for signed in 1..12usize {
        for fork in 0..signed {
            let mut forked = honest[..fork].to_vec();
            forked.extend(leaves("forked", 12 - fork));
            let a = MerkleLog::from_leaves(honest.iter().copied());
            let b = MerkleLog::from_leaves(forked);
            for offered in signed..=12 {
                let mut w = Cosigner::new(mtc_core::codec::parse_taid("32473.100").unwrap(), CosignerMode::Witness, derive_key(SchemeId::Ed25519, 1, "w"));
                let first = a.checkpoint_at(signed as u64).unwrap();
                w.witness_cosign(&first, &a.consistency_proof(0, signed as u64).unwrap()).map_err(|e| e.to_string())?;
                let cp = b.checkpoint_at(offered as u64).unwrap();
                let proof = b.consistency_proof(signed as u64, offered as u64).unwrap();
                match w.witness_cosign(&cp, &proof) {
                    Err(Refusal::ForkDetected | Refusal::BadProof) => cases += 1,
                    other => return Err(format!("fork at {fork} signed {signed} offered {offered}: {other:?}")),
                }
            }
        }
    }
    Ok(cases)
}

fn withheld_refused() -> Result<(), String> {
    let mut d = Deployment::new(DeploymentSpec { witnesses: 2, mirror: true, required_k: 3, require_mirror: true, ..Default::default() });
    let key = d.entity_key(SchemeId::EcdsaP256);
    for i in 0..5 {
        d.issue(&format!("nf{i}.svc"), &key).map_err(|e| e.to_string())?;
    }
    let req = d.request("withheld.svc", &key);
    match d.issue_request(&req, Some(2)) {
        Err(e) if e.to_string().contains("mirror") => {}
        other => return Err(format!("issuance with a withheld entry: {other:?}")),
    }
    let cp = d.authority.log().checkpoint();
    let source = Withholding { inner: d.authority.log(), withheld: Some(3) };
    match d.mirror.as_mut().unwrap().mirror_cosign(&cp, &source) {
        Err(Refusal::EntryUnavailable(3)) => {}
        other => return Err(format!("mirror with a withheld entry: {other:?}")),
    }
    let r = block_on_demo(&opts(true, false))?;
    ensure!(r.outcome == DemoOutcome::FailedClosed, "demo outcome {:?}", r.outcome);
    ensure!(r.mirror_refusal.as_deref() == Some("entry_unavailable"), "mirror refusal {:?}", r.mirror_refusal);
    Ok(())
}

fn flip(bytes: &mut [u8], rng: &mut StdRng) {
    let bit = rng.random_range(0..bytes.len() * 8);
    bytes[bit / 8] ^= 1 << (bit % 8);
}

/// Random single-bit flips in proofs, entries, landmark roots, cosignatures
/// and the wire encoding. Returns the number of cases run.
fn fuzz() -> Result<usize, String> {
    // k equals the cosigner count so every cosignature is load-bearing.
    let w = world(2, true, 3);
    let trust = w.d.relying_trust();
    let now = w.d.now;
    let mut certs: Vec<MtcCertificate> = w.standalone.clone();
    for i in 0..40u64 {
        certs.push(w.d.authority.landmark_certificate(i, None).map_err(|e| e.to_string())?.1);
    }
    for c in &certs {
        ensure!(verify_certificate(c, &trust, now).accepted(), "untampered index {} rejected", c.index);
    }
    let mut rng = StdRng::seed_from_u64(0x6d7463);
    let (mut cases, mut rejected) = (0usize, 0usize);
    while cases < 10_000 {
        let cert = &certs[rng.random_range(0..certs.len())];
        let mut t = cert.clone();
        let mut tt = trust.clone();
        match cases % 5 {
            0 => {
                if t.proof.inclusion.hashes.is_empty() {
                    continue;
                }
                let i = rng.random_range(0..t.proof.inclusion.hashes.len());
                flip(&mut t.proof.inclusion.hashes[i].0, &mut rng);
            }
            1 => {
                let mut bytes = encode_entry(&t.entry).unwrap();
                flip(&mut bytes, &mut rng);
                match decode_entry(&bytes) {
                    Ok(e) => t.entry = e,
                    Err(_) => {
                        cases += 1;
                        rejected += 1;
                        continue;
                    }
                }
            }
            2 => {
                if !t.is_landmark() {
                    continue;
                }
                let stored = tt.store.landmarks.iter_mut().find(|l| l.start == t.proof.range.start() && l.end == t.proof.range.end());
                let Some(stored) = stored else { return Err(format!("no stored subtree for index {}", t.index)) };
                flip(&mut stored.hash.0, &mut rng);
            }
            3 => {
                if t.is_landmark() {
                    continue;
                }
                let i = rng.random_range(0..t.proof.cosignatures.len());
                flip(&mut t.proof.cosignatures[i].signature, &mut rng);
            }
            _ => {
                let mut bytes = encode_certificate(&t).unwrap();
                flip(&mut bytes, &mut rng);
                match decode_certificate(&bytes) {
                    Ok(c) => t = c,
                    Err(_) => {
                        cases += 1;
                        rejected += 1;
                        continue;
                    }
                }
            }
        }
        cases += 1;
        let out = verify_certificate(&t, &tt, now);
        if out.accepted() {
            return Err(format!("false accept in case {cases} (category {}) for index {}", (cases - 1) % 5, t.index));
        }
        rejected += 1;
    }
    ensure!(rejected == cases, "{rejected} of {cases} rejected");
    Ok(cases)
}

fn preemptive_after_pruning() -> Result<(), String> {
    const FIRST: u64 = 24;
    let w = world(2, false, 2);
    let mut log = w.d.authority.log().clone();
    log.prune_before(FIRST).map_err(|e| e.to_string())?;
    let full = SubtreeRange::new(0, 40).unwrap();
    let root = log.checkpoint().root;
    for i in 0..40u64 {
        let p = log.inclusion_proof(i, full);
        if i < FIRST {
            ensure!(p.is_err(), "pruned index {i} still has a proof");
        } else {
            let p = p.map_err(|e| format!("index {i}: {e}"))?;
            ensure!(verify_inclusion(&log.leaf(i).unwrap(), i, &p, &full, &root), "retained index {i} fails");
        }
    }
    let trust = w.d.relying_trust().with_preemptive_revocation(FIRST);
    for i in 0..40u64 {
        let (_, lm) = w.d.authority.landmark_certificate(i, None).map_err(|e| e.to_string())?;
        for c in [&w.standalone[i as usize], &lm] {
            let out = verify_certificate(c, &trust, w.d.now);
            if i < FIRST {
                ensure!(out.reason == Some(Reason::Revoked), "pruned index {i}: {out:?}");
            } else {
                ensure!(out.accepted(), "retained index {i}: {out:?}");
            }
        }
    }
    Ok(())
}

fn adversarial() -> Result<String, String> {
    let forks = forks_refused().map_err(|e| format!("(a) {e}"))?;
    withheld_refused().map_err(|e| format!("(b) {e}"))?;
    let cases = fuzz().map_err(|e| format!("(c) {e}"))?;
    preemptive_after_pruning().map_err(|e| format!("(d) {e}"))?;
    Ok(format!("{forks} forks refused, withheld entry refused, {cases} bit flips with 0 false accepts, pruned prefix revoked"))
}

fn negotiation() -> Result<String, String> {
    let w = world(2, false, 2);
    let trust = w.d.relying_trust();
    let base = w.d.trust_config().landmark_base.clone();
    let log = AdvertisedAnchor::Log(w.d.log_id().clone());
    let range = |a, b| AdvertisedAnchor::Landmarks(TrustAnchorRange::new(base.clone(), a, b).unwrap());
    let advertised = [
        ("no anchors", vec![], false),
        ("disjoint range", vec![log.clone(), range(2, 5)], false),
        ("overlapping range", vec![log.clone(), range(0, 3)], true),
        ("exact match", vec![log.clone(), range(1, 1)], true),
    ];
    let mut cells = 0;
    for (name, anchors, covers) in &advertised {
        for (owns, numbers) in [(true, &[1u64][..]), (false, &[][..])] {
            let inv = w.inventory(3, numbers);
            let want_landmark = owns && *covers;
            let picked = select_certificate(&inv, anchors);
            ensure!(picked.is_landmark() == want_landmark, "{name}, owns={owns}: landmark={}", picked.is_landmark());
            let client = Client { anchors: Some(anchors.clone()), ..Client::new(&trust, w.d.now) };
            let r = run_handshake(&client, &w.server(inv), None);
            let auth = r.outcome.map_err(|e| format!("{name}, owns={owns}: {e}"))?;
            let want = if want_landmark { AuthMode::Landmark } else { AuthMode::Standalone };
            ensure!(auth.mode == want, "{name}, owns={owns}: {:?}", auth.mode);
            cells += 1;
        }
    }
    let mut stale = trust.store.clone();
    stale.landmarks.retain(|l| l.number == 1);
    let stale = RelyingTrust::new(w.d.trust_config().clone(), Some(stale));
    let r = run_handshake(&Client::new(&stale, w.d.now), &w.server(w.inventory(30, &[2])), None);
    let auth = r.outcome.map_err(|e| format!("stale client: {e}"))?;
    ensure!(auth.mode == AuthMode::Standalone, "stale client in {:?} mode", auth.mode);
    let report = block_on_demo(&opts(false, true))?;
    ensure!(report.handshake_mode == Some(AuthMode::Standalone), "stale demo in {:?} mode", report.handshake_mode);
    ensure!(report.revoked_alert == Some(44), "stale demo alert {:?}", report.revoked_alert);
    Ok(format!("{cells} cells match; stale distributor falls back to standalone in-process and over HTTP"))
}

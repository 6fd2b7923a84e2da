use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread::sleep;
use std::time::{Duration, Instant};

use mtc_core::codec::{decode_certificate, encode_certificate};
use mtc_core::deployment::{Deployment, DeploymentSpec};
use mtc_core::signature::SchemeId;

fn mtc() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_mtc"));
    c.args(["--log", "warn"]);
    c
}

fn run(args: &[&str]) -> Output {
    mtc().args(args).output().expect("spawn mtc")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn tables_reproduce_the_size_model() {
    let o = run(&["tables"]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    for needle in ["13236", "17340", "2906", "736 hash bytes", "9280", "46400"] {
        assert!(out.contains(needle), "missing {needle}");
    }
    let o = run(&["tables", "--format", "json"]);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v.is_object());
}

#[test]
fn bench_reports_proof_bytes() {
    let o = run(&["bench", "--scenario", "landmark-4096", "--iterations", "20", "--warmup", "2", "--format", "csv"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let row = out.lines().nth(1).unwrap();
    let cols: Vec<&str> = row.split(',').collect();
    assert_eq!(&cols[..4], ["landmark-4096", cols[1], "384", "14"]);
    assert_eq!(cols.last(), Some(&"0"));
}

#[test]
fn usage_errors_exit_2() {
    assert_eq!(run(&["bench"]).status.code(), Some(2));
    assert_eq!(run(&["bench", "--scenario", "landmark-17"]).status.code(), Some(2));
    assert_eq!(run(&["ca", "--cosigner-url", "http://127.0.0.1:1", "--admission-token-file", "t"]).status.code(), Some(2));
    assert_eq!(run(&["revoke", "--ca-url", "http://127.0.0.1:1", "--lo", "5", "--hi", "5", "--admission-token", "x"]).status.code(), Some(2));
    assert_eq!(run(&["no-such-command"]).status.code(), Some(2));
}

#[test]
fn config_file_supplies_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("mtc.toml");
    std::fs::write(&cfg, "[bench]\nscenario = \"landmark-16\"\niterations = 5\nwarmup = 1\nformat = \"csv\"\n").unwrap();
    let o = mtc().args(["--config", cfg.to_str().unwrap(), "bench"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("landmark-16,"));
    // Command-line flags win over the file.
    let o = mtc().args(["--config", cfg.to_str().unwrap(), "bench", "--scenario", "landmark-1024"]).output().unwrap();
    assert!(stdout(&o).contains("landmark-1024,"));
}

#[test]
fn demo_variants_exit_0() {
    for extra in [&[][..], &["--fail-inject", "withhold-entry"], &["--stale-distributor"]] {
        let o = mtc().arg("demo").args(extra).output().unwrap();
        assert_eq!(o.status.code(), Some(0), "{extra:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
}

#[test]
fn revoked_range_from_the_example() {
    let mut d = Deployment::new(DeploymentSpec { witnesses: 2, mirror: false, required_k: 2, ..Default::default() });
    let key = d.entity_key(SchemeId::EcdsaP256);
    let mut certs = Vec::new();
    for i in 0..4210 {
        certs.push(d.issue(&format!("nf{i}.svc"), &key).unwrap());
    }
    d.authority.revoke(4200, 4210).unwrap();
    let trust = d.relying_trust();
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    std::fs::write(p("trust.json"), serde_json::to_vec(d.trust_config()).unwrap()).unwrap();
    trust.store.publish(&p("landmarks.json")).unwrap();
    let now = d.now.to_string();
    let verify = |index: usize| {
        std::fs::write(p("cert.mtc"), encode_certificate(&certs[index]).unwrap()).unwrap();
        run(&[
            "verify",
            "--cert",
            p("cert.mtc").to_str().unwrap(),
            "--trust-config",
            p("trust.json").to_str().unwrap(),
            "--landmarks",
            p("landmarks.json").to_str().unwrap(),
            "--now",
            &now,
        ])
    };
    let o = verify(4205);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("\"revoked\""));
    for index in [4199, 0] {
        assert_eq!(verify(index).status.code(), Some(0), "index {index}");
    }
}

struct Procs(Vec<Child>);

impl Drop for Procs {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

fn spawn(args: &[&str]) -> Child {
    mtc().args(args).stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap()
}

fn wait_http(port: u16, path: &str) {
    let deadline = Instant::now() + Duration::from_secs(20);
    while Instant::now() < deadline {
        if let Ok(mut s) = std::net::TcpStream::connect(("127.0.0.1", port)) {
            use std::io::{Read, Write};
            let _ = write!(s, "GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n");
            let mut buf = String::new();
            let _ = s.read_to_string(&mut buf);
            if buf.starts_with("HTTP/1.1 200") {
                return;
            }
        }
        sleep(Duration::from_millis(50));
    }
    panic!("port {port} never served {path}");
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn services_as_separate_processes() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n);
    std::fs::write(p("token"), "secret\n").unwrap();
    let [ca, w1, w2, mirror] = std::array::from_fn(|_| free_port());
    let url = |port: u16| format!("http://127.0.0.1:{port}");
    let addr = |port: u16| format!("127.0.0.1:{port}");
    let mut procs = Procs(vec![
        spawn(&["cosigner", "--listen", &addr(w1), "--data-dir", s(&p("w1")), "--id", "32473.100"]),
        spawn(&["cosigner", "--listen", &addr(w2), "--data-dir", s(&p("w2")), "--id", "32473.101"]),
        spawn(&["mirror", "--listen", &addr(mirror), "--ca-url", &url(ca), "--data-dir", s(&p("m")), "--cosign", "--id", "32473.102", "--sync-interval", "1"]),
    ]);
    for port in [w1, w2, mirror] {
        wait_http(port, "/cosigner-info");
    }
    procs.0.push(spawn(&[
        "ca",
        "--listen",
        &addr(ca),
        "--cosigner-url",
        &url(w1),
        "--cosigner-url",
        &url(w2),
        "--cosigner-url",
        &url(mirror),
        "--data-dir",
        s(&p("ca")),
        "--admission-token-file",
        s(&p("token")),
    ]));
    wait_http(ca, "/trust-config");
    let ca_url = url(ca);

    for i in 0..3 {
        let out = p(&format!("c{i}.mtc"));
        let o = run(&[
            "issue", "--ca-url", &ca_url, "--subject", &format!("nf{i}.5gc.svc"), "--key-file", s(&p(&format!("k{i}.json"))), "--out", s(&out),
            "--admission-token-file", s(&p("token")),
        ]);
        assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    }
    // A refused issuance is a runtime failure, not a verification reject.
    let bad = run(&["issue", "--ca-url", &ca_url, "--subject", "x.svc", "--key-file", s(&p("k0.json")), "--out", s(&p("x.mtc")), "--admission-token", "wrong"]);
    assert_eq!(bad.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("unauthorized"));

    let o = run(&["verify", "--cert", s(&p("c1.mtc")), "--ca-url", &ca_url]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("standalone"));

    let mut tampered = decode_certificate(&std::fs::read(p("c2.mtc")).unwrap()).unwrap();
    tampered.proof.inclusion.hashes[0].0[7] ^= 0x01;
    std::fs::write(p("bad.mtc"), encode_certificate(&tampered).unwrap()).unwrap();
    let o = run(&["verify", "--cert", s(&p("bad.mtc")), "--ca-url", &ca_url]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("proof_mismatch"), "{}", stdout(&o));

    // Landmark round: allocate, let the mirror catch up, distribute.
    let alloc = http_post(ca, "/allocate-landmark", "{\"admission_token\":\"secret\"}");
    assert!(alloc.starts_with("HTTP/1.1 200"), "{alloc}");
    let lm_path = p("run/landmarks.json");
    let deadline = Instant::now() + Duration::from_secs(20);
    loop {
        let o = run(&["distributor", "--mtca-url", &ca_url, "--mirror-url", &url(mirror), "--out", s(&lm_path), "--once"]);
        if o.status.code() == Some(0) && stdout(&o).contains("\"installed\": [\n    1") {
            break;
        }
        assert!(Instant::now() < deadline, "landmark never installed: {}", stdout(&o));
        sleep(Duration::from_millis(300));
    }
    let body = http_get(ca, "/landmark-cert?index=1");
    let v: serde_json::Value = serde_json::from_str(body.split("\r\n\r\n").nth(1).unwrap()).unwrap();
    std::fs::write(p("lm.hex"), v["certificate"].as_str().unwrap()).unwrap();
    let o = run(&["verify", "--cert", s(&p("lm.hex")), "--ca-url", &ca_url, "--landmarks", s(&lm_path)]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    assert!(stdout(&o).contains("\"landmark\""));

    let o = run(&["revoke", "--ca-url", &ca_url, "--lo", "1", "--hi", "2", "--admission-token-file", s(&p("token"))]);
    assert_eq!(o.status.code(), Some(0));
    for cert in ["lm.hex", "c1.mtc"] {
        let o = run(&["verify", "--cert", s(&p(cert)), "--ca-url", &ca_url, "--landmarks", s(&lm_path)]);
        assert_eq!(o.status.code(), Some(1), "{cert}");
        assert!(stdout(&o).contains("\"revoked\""), "{cert}");
    }
    let o = run(&["verify", "--cert", s(&p("c0.mtc")), "--ca-url", &ca_url]);
    assert_eq!(o.status.code(), Some(0));
}

fn http(port: u16, request: String) -> String {
    use std::io::{Read, Write};
    let mut s = std::net::TcpStream::connect(("127.0.0.1", port)).unwrap();
    s.write_all(request.as_bytes()).unwrap();
    let mut buf = String::new();
    s.read_to_string(&mut buf).unwrap();
    buf
}

fn http_get(port: u16, path: &str) -> String {
    http(port, format!("GET {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n"))
}

fn http_post(port: u16, path: &str, body: &str) -> String {
    http(
        port,
        format!(
            "POST {path} HTTP/1.1\r\nHost: x\r\nConnection: close\r\nContent-Type: application/json\r\nContent-Length: {}\r\n\r\n{body}",
            body.len()
        ),
    )
}

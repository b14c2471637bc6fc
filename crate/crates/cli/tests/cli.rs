use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

fn bulwark(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bulwark")).args(args).output().unwrap()
}

fn spec(name: &str) -> String {
    format!("{}/../core/specs/{name}", env!("CARGO_MANIFEST_DIR"))
}

fn read(dir: &Path, name: &str) -> String {
    std::fs::read_to_string(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

fn synthesize(out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["synthesize", "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    bulwark(&args)
}

#[test]
fn check_reports_participants_and_errors() {
    let ok = bulwark(&["check", "--spec", &spec("oauth.bw.pv")]);
    assert!(ok.status.success());
    let text = String::from_utf8_lossy(&ok.stdout);
    assert!(text.contains("participant RPApp (role RP)"), "{text}");
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.bw.pv");
    std::fs::write(&bad, "free c: channel.\nlet P = out(c, x).\nprocess P\n").unwrap();
    let out = bulwark(&["check", "--spec", bad.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.bw.pv"));
}

#[test]
fn synthesize_writes_worker_artifacts_deterministically() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let args =
        ["--spec", &spec("oauth.bw.pv"), "--inattentive", "RP", "--threat", "client-trusted", "--scenario", "cs2"];
    for d in [&a, &b] {
        let out = synthesize(d.path(), &args);
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    }
    for f in ["placement.json", "rp-sw.mon", "rp-sw.bw.pv", "bulwark-sw.js", "register-snippet.html"] {
        assert_eq!(read(a.path(), f), read(b.path(), f), "{f} differs between runs");
    }
    let manifest: serde_json::Value = serde_json::from_str(&read(a.path(), "placement.json")).unwrap();
    assert_eq!(manifest["placements"]["RPApp"], "sw");
    assert!(read(a.path(), "bulwark-sw.js").contains("io.lookup(\"MRPSessions\""));
}

#[test]
fn manifest_records_rejected_options() {
    let d = tempfile::tempdir().unwrap();
    let out = synthesize(d.path(), &["--spec", &spec("oauth.bw.pv"), "--inattentive", "TTP", "--scenario", "cs1"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let manifest: serde_json::Value = serde_json::from_str(&read(d.path(), "placement.json")).unwrap();
    assert_eq!(manifest["placements"]["TTPApp"], "proxy");
    let rejected = manifest["rejected"].as_array().unwrap();
    assert_eq!(rejected.len(), 1);
    assert!(rejected[0]["witness"].as_str().unwrap().contains("unobservable"));
    assert!(d.path().join("ttp-proxy.mon").exists());
}

fn script(dir: &Path, body: &str) -> PathBuf {
    use std::os::unix::fs::PermissionsExt;
    let path = dir.join("verifier.sh");
    std::fs::write(&path, format!("#!/bin/sh\n{body}\n")).unwrap();
    std::fs::set_permissions(&path, std::fs::Permissions::from_mode(0o755)).unwrap();
    path
}

#[test]
fn external_verifier_decides_placement() {
    let d = tempfile::tempdir().unwrap();
    let tool = script(d.path(), "grep -q Inattentive \"$1\" && echo 'RESULT event(a) ==> event(b) is true.'");
    let verifier = format!("external:{}", tool.display());
    let out = synthesize(
        &d.path().join("build"),
        &["--spec", &spec("oauth.bw.pv"), "--inattentive", "RP", "--verifier", &verifier],
    );
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(d.path().join("build/monitored-1.pv").exists());

    let tool = script(d.path(), "echo 'RESULT event(a) ==> event(b) is false.'");
    let verifier = format!("external:{}", tool.display());
    let out = synthesize(
        &d.path().join("bad"),
        &["--spec", &spec("oauth.bw.pv"), "--inattentive", "RP", "--verifier", &verifier],
    );
    assert!(!out.status.success());
    let manifest: serde_json::Value = serde_json::from_str(&read(&d.path().join("bad"), "placement.json")).unwrap();
    assert_eq!(manifest["rejected"].as_array().unwrap().len(), 3);
}

#[test]
fn testbed_exit_status_follows_the_attack() {
    let out = bulwark(&["testbed", "--scenario", "cs1", "--attack", "session-swapping", "--with-monitors"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["honest_completed"], true);
    assert_eq!(report["attacks"][0]["number"], 13);
    assert_eq!(report["attacks"][0]["succeeded"], false);
    let out = bulwark(&["testbed", "--scenario", "cs1", "--attack", "session-swapping"]);
    assert!(!out.status.success());
    let out = bulwark(&["testbed", "--scenario", "cs2", "--attack", "#21"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not vulnerable"));
}

#[test]
fn emit_compiles_a_worker_dump() {
    let d = tempfile::tempdir().unwrap();
    let out = synthesize(d.path(), &["--spec", &spec("oauth.bw.pv"), "--inattentive", "RPApp", "--scenario", "cs2"]);
    assert!(out.status.success());
    let cfg = format!("{}/../core/configs/cs2.json", env!("CARGO_MANIFEST_DIR"));
    let emitted = d.path().join("emitted");
    let out = bulwark(&[
        "emit",
        "--monitor",
        d.path().join("rp-sw.mon").to_str().unwrap(),
        "--config",
        &cfg,
        "--out",
        emitted.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(read(&emitted, "bulwark-sw.js"), read(d.path(), "bulwark-sw.js"));
    assert!(read(&emitted, "register-snippet.html").contains("navigator.serviceWorker"));
}

#[test]
fn run_proxy_serves_until_killed() {
    let d = tempfile::tempdir().unwrap();
    let out = synthesize(d.path(), &["--spec", &spec("paypal.bw.pv"), "--inattentive", "RP", "--scenario", "cs6"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let upstream = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let mut cfg: serde_json::Value = serde_json::from_str(&read(d.path(), "rp-proxy.config.json")).unwrap();
    cfg["listen"] = "127.0.0.1:0".into();
    cfg["forward_listen"] = "127.0.0.1:0".into();
    cfg["upstream"] = format!("http://{}", upstream.local_addr().unwrap()).into();
    let cfg_path = d.path().join("run.json");
    std::fs::write(&cfg_path, cfg.to_string()).unwrap();
    let mut child = Command::new(env!("CARGO_BIN_EXE_bulwark"))
        .args([
            "run-proxy",
            "--monitor",
            d.path().join("rp-proxy.mon").to_str().unwrap(),
            "--config",
            cfg_path.to_str().unwrap(),
        ])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap()).read_line(&mut line).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(line.starts_with("serving on 127.0.0.1:"), "{line}");
}

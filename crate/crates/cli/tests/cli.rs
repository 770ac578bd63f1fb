use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpStream;
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};
use std::time::Duration;

use complipay_core::agents::Transcript;
use serde_json::Value;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_complipay"));
    c.env_remove("COMPLIPAY_CONFIG").env_remove("RUST_LOG");
    c
}

fn scenario(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(name)
}

fn run(c: &mut Command) -> (i32, String) {
    let Output { status, stdout, stderr } = c.output().unwrap();
    let text = String::from_utf8_lossy(&stdout).into_owned() + &String::from_utf8_lossy(&stderr);
    (status.code().unwrap(), text)
}

fn scenario_into(path: &Path, out: &Path) -> (i32, String) {
    run(bin().arg("--scenario").arg(path).arg("--out").arg(out))
}

#[test]
fn scenario_mode_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = scenario_into(&scenario("scenario1.json"), dir.path());
    assert_eq!(code, 0, "{text}");
    assert!(text.contains("quiescent"), "{text}");
    let jsonl = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    assert!(!Transcript::from_jsonl(&jsonl).unwrap().events().is_empty());
    let snap: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("snapshot.json")).unwrap()).unwrap();
    assert_eq!(snap["balances"]["seller"], "100");
    assert_eq!(snap["conservation"]["conserved"], true);
}

#[test]
fn config_path_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(bin().env("COMPLIPAY_CONFIG", scenario("scenario2.json")).arg("--out").arg(dir.path()));
    assert_eq!(code, 0, "{text}");
    assert!(dir.path().join("snapshot.json").exists());
}

#[test]
fn seed_override_changes_nonces_only() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    assert_eq!(scenario_into(&scenario("scenario1.json"), a.path()).0, 0);
    assert_eq!(run(bin().arg("--scenario").arg(scenario("scenario1.json")).args(["--seed", "8"]).arg("--out").arg(b.path())).0, 0);
    let read = |d: &Path| std::fs::read_to_string(d.join("transcript.jsonl")).unwrap();
    assert_ne!(read(a.path()), read(b.path()));
    let bal = |d: &Path| serde_json::from_str::<Value>(&std::fs::read_to_string(d.join("snapshot.json")).unwrap()).unwrap()["balances"].clone();
    assert_eq!(bal(a.path()), bal(b.path()));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(&mut bin());
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("COMPLIPAY_CONFIG"));

    let (code, _) = scenario_into(&dir.path().join("missing.json"), dir.path());
    assert_eq!(code, 2);

    let garbled = dir.path().join("garbled.json");
    std::fs::write(&garbled, "{ not json").unwrap();
    assert_eq!(scenario_into(&garbled, dir.path()).0, 2);

    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("scenario2.json")).unwrap()).unwrap();
    cfg["max_rounds"] = 2.into();
    cfg.as_object_mut().unwrap().remove("expect");
    let short = dir.path().join("short.json");
    std::fs::write(&short, cfg.to_string()).unwrap();
    let (code, text) = scenario_into(&short, &dir.path().join("short"));
    assert_eq!(code, 1, "{text}");
    assert!(dir.path().join("short/transcript.jsonl").exists());

    let mut cfg: Value = serde_json::from_str(&std::fs::read_to_string(scenario("scenario1.json")).unwrap()).unwrap();
    cfg["expect"]["order_state"] = "REFUNDED".into();
    let wrong = dir.path().join("wrong.json");
    std::fs::write(&wrong, cfg.to_string()).unwrap();
    let (code, text) = scenario_into(&wrong, &dir.path().join("wrong"));
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("unexpected"), "{text}");

    let (code, text) = run(bin().args(["--mode", "serve"]).arg("--scenario").arg(scenario("scenario1.json")));
    assert_eq!(code, 2, "{text}");
}

#[test]
fn inspect_queries() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(scenario_into(&scenario("scenario2.json"), dir.path()).0, 0);
    let inspect = |q: &str| run(bin().args(["--mode", "inspect", "--query", q]).arg("--out").arg(dir.path()));

    let (code, text) = inspect("balances");
    assert_eq!(code, 0);
    assert!(text.lines().any(|l| l.starts_with("seller") && l.ends_with("15000")), "{text}");
    let (code, text) = inspect("conservation");
    assert_eq!(code, 0);
    assert!(text.contains("conserved"));
    let (code, text) = inspect("locks");
    assert_eq!(code, 0);
    assert!(text.contains("RELEASED"), "{text}");
    let (code, text) = inspect("chain");
    assert_eq!(code, 0);
    assert!(text.contains("chain intact"));
    let (code, text) = inspect("attestations tx-000001");
    assert_eq!(code, 0);
    assert!(text.contains("PENDING") && text.contains("PASS"), "{text}");
    assert_eq!(inspect("attestations tx-999").0, 2);
    assert_eq!(inspect("nonsense").0, 2);

    let mut snap: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("snapshot.json")).unwrap()).unwrap();
    snap["service"]["ledger"]["escrow_pool"] = "1".into();
    let broken = dir.path().join("broken.json");
    std::fs::write(&broken, snap.to_string()).unwrap();
    let (code, text) = run(bin().args(["--mode", "inspect", "--query", "conservation", "--snapshot"]).arg(&broken));
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("VIOLATED"));
}

fn http_get(addr: &str, path: &str) -> String {
    let mut s = TcpStream::connect(addr).unwrap();
    s.set_read_timeout(Some(Duration::from_secs(5))).unwrap();
    write!(s, "GET {path} HTTP/1.1\r\nHost: {addr}\r\nConnection: close\r\n\r\n").unwrap();
    let mut resp = String::new();
    s.read_to_string(&mut resp).unwrap();
    resp
}

#[cfg(unix)]
#[test]
fn serve_flushes_transcript_on_interrupt() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = bin()
        .args(["--mode", "serve", "--listen", "127.0.0.1:0"])
        .arg("--scenario")
        .arg(scenario("scenario1.json"))
        .arg("--out")
        .arg(dir.path())
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let first = lines.next().unwrap().unwrap();
    let addr = first.strip_prefix("listening on http://").unwrap().to_owned();

    let resp = http_get(&addr, "/resource/dataset");
    assert!(resp.starts_with("HTTP/1.1 402"), "{resp}");
    assert!(http_get(&addr, "/accounts/buyer/balance").contains("\"1000\""));

    let killed = Command::new("kill").args(["-INT", &child.id().to_string()]).status().unwrap();
    assert!(killed.success());
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
    let rest: Vec<String> = lines.map_while(Result::ok).collect();
    assert!(rest.iter().any(|l| l.contains("written")), "{rest:?}");

    let jsonl = std::fs::read_to_string(dir.path().join("transcript.jsonl")).unwrap();
    let t = Transcript::from_jsonl(&jsonl).unwrap();
    assert!(t.events().iter().any(|e| e.action == "response" && e.payload["status"] == 402));
    let snap: Value = serde_json::from_str(&std::fs::read_to_string(dir.path().join("snapshot.json")).unwrap()).unwrap();
    assert!(snap["ledger"]["accounts"].is_object());
}

#[test]
fn serve_port_in_use_is_config_error() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = taken.local_addr().unwrap().to_string();
    let dir = tempfile::tempdir().unwrap();
    let (code, text) = run(bin()
        .args(["--mode", "serve", "--listen", &addr])
        .arg("--scenario")
        .arg(scenario("scenario1.json"))
        .arg("--out")
        .arg(dir.path()));
    assert_eq!(code, 2, "{text}");
    assert!(text.contains("cannot listen"));
}

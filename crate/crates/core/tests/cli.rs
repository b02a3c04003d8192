use std::process::Command;

fn sim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_iin-sim")).args(args).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn list_scenarios_names_all_bundled() {
    let (code, out, _) = sim(&["list-scenarios"]);
    assert_eq!(code, 0);
    for (name, _) in iin_core::harness::BUNDLED {
        assert!(out.contains(name));
    }
}

#[test]
fn demo_writes_a_verifiable_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    let (code, out, _) = sim(&["demo", "two-network", "--trace", trace.to_str().unwrap()]);
    assert_eq!(code, 0, "{out}");
    let (code, out, _) = sim(&["verify-trace", trace.to_str().unwrap()]);
    assert_eq!(code, 0);
    assert!(out.contains("all invariants hold"));
}

#[test]
fn tampered_trace_fails_verification() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("t.jsonl");
    assert_eq!(sim(&["run", "--scenario", "retry-divergence", "--trace", trace.to_str().unwrap()]).0, 0);
    let text = std::fs::read_to_string(&trace).unwrap();
    // drop one endorser from the first commit
    let line = text.lines().find(|l| l.contains("\"ledger.commit\"")).unwrap();
    let endorsers = line.split("\"endorsers\":\"").nth(1).unwrap().split('"').next().unwrap();
    let fewer = endorsers.split(',').next().unwrap();
    let tampered = text.replacen(
        &format!("\"endorsers\":\"{endorsers}\""),
        &format!("\"endorsers\":\"{fewer}\""),
        1,
    );
    assert_ne!(tampered, text);
    std::fs::write(&trace, tampered).unwrap();
    let (code, _, err) = sim(&["verify-trace", trace.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(err.contains("endorsement-completeness"), "{err}");
}

#[test]
fn same_seed_same_trace_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.jsonl");
    let b = dir.path().join("b.jsonl");
    for p in [&a, &b] {
        assert_eq!(sim(&["run", "--scenario", "concurrent-commit", "--seed", "42", "--trace", p.to_str().unwrap()]).0, 0);
    }
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
}

#[test]
fn config_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "name = \"bad\"\n[[org]]\nname = \"O\"\niin = \"nowhere\"\noiv = \"A\"\npmv = {}\n").unwrap();
    let (code, _, err) = sim(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code, 2);
    assert!(err.contains("nowhere"), "{err}");
    assert_eq!(sim(&["run", "--scenario", "/no/such/file.toml"]).0, 2);
}

#[test]
fn failed_assertion_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("wrong.toml");
    let text = iin_core::harness::bundled("revoke-carrier").unwrap().replace("status = \"REVOKED\"", "status = \"ACTIVE\"");
    std::fs::write(&path, text).unwrap();
    let (code, out, _) = sim(&["run", "--scenario", path.to_str().unwrap()]);
    assert_eq!(code, 1);
    assert!(out.contains("[FAIL]"));
}

#[test]
fn tick_ceiling_is_a_runtime_error() {
    let (code, out, _) = sim(&["run", "--scenario", "two-network", "--ticks", "5"]);
    assert_eq!(code, 3);
    assert!(out.contains("tick ceiling"));
}

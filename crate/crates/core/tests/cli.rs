use std::process::{Command, Output};

fn beets(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_beets"))
        .args(args)
        .env_remove("BEETS_KEY")
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn encode_prints_lowercase_hex() {
    let o = beets(&["codec", "encode", "--op", "OUT", "--tuple", r#"["A",5]"#, "--seq", "3"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), "4760c10005\n");
}

#[test]
fn encode_decode_compose_to_identity() {
    let cases = [
        ("OUT", r#"["SENSOR","LIGHT",700,12]"#, "0"),
        ("RD", r#"["A",null,2.5]"#, "1"),
        ("TUPLE", r#"["",-32768,1e30]"#, "2"),
        ("WHEREIS", r#"[null]"#, "3"),
    ];
    for key in [None, Some("k3y")] {
        for (op, tuple, seq) in cases {
            let mut args = vec!["codec", "encode", "--op", op, "--tuple", tuple, "--seq", seq];
            args.extend(key.iter().flat_map(|k| ["--key", *k]));
            let hex = stdout(&beets(&args)).trim().to_string();
            let mut args = vec!["codec", "decode", "--hex", &hex];
            args.extend(key.iter().flat_map(|k| ["--key", *k]));
            let o = beets(&args);
            assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
            let doc: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
            assert_eq!(doc["op"], op);
            assert_eq!(doc["seq"].to_string(), seq);
            let want: serde_json::Value = serde_json::from_str(tuple).unwrap();
            assert_eq!(doc["tuple"].to_string(), want.to_string());
        }
    }
}

#[test]
fn env_key_is_used_when_flag_absent() {
    let with_flag = beets(&["codec", "encode", "--op", "OUT", "--tuple", r#"["A"]"#, "--key", "s"]);
    let with_env = Command::new(env!("CARGO_BIN_EXE_beets"))
        .args(["codec", "encode", "--op", "OUT", "--tuple", r#"["A"]"#])
        .env("BEETS_KEY", "s")
        .output()
        .unwrap();
    assert_eq!(with_flag.stdout, with_env.stdout);
    assert_ne!(stdout(&with_flag), stdout(&beets(&["codec", "encode", "--op", "OUT", "--tuple", r#"["A"]"#])));
}

#[test]
fn ble_flag_prints_layout() {
    let o = beets(&["codec", "encode", "--op", "OUT", "--tuple", r#"["ABCDEFGHIJKLMNOP"]"#, "--ble"]);
    let out = stdout(&o);
    let lines: Vec<_> = out.lines().collect();
    assert_eq!(lines.len(), 3);
    assert_eq!(lines[1].split(' ').count(), 8);
    assert!(lines[2].len() > "name ".len());
}

#[test]
fn usage_and_runtime_errors() {
    let o = beets(&["node", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!o.stderr.is_empty());
    assert_eq!(beets(&["frobnicate"]).status.code(), Some(2));
    assert_eq!(beets(&["codec", "decode", "--hex", "41"]).status.code(), Some(1));
    assert_eq!(beets(&["sim", "--scenario", "no-such", "--out", "/tmp/x"]).status.code(), Some(1));
    assert_eq!(beets(&["--help"]).status.code(), Some(0));
}

#[test]
fn sim_writes_fig2() {
    let dir = tempfile::tempdir().unwrap();
    let o = beets(&["sim", "--scenario", "fig2-sweep", "--seed", "1", "--out", dir.path().to_str().unwrap()]);
    assert!(o.status.success());
    let csv = std::fs::read_to_string(dir.path().join("fig2.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t_ad_ms,t_de_ms,p1_analytic,p1_simulated"));
    assert_eq!(lines.clone().count(), 40);
    assert!(lines.all(|l| l.split(',').count() == 4));
}

#[test]
fn agent_check() {
    let dir = tempfile::tempdir().unwrap();
    let good = dir.path().join("good.json");
    std::fs::write(&good, r#"{"name":"a","rules":[{"on":1000,"do":[{"log":["'tick'"]}]}]}"#).unwrap();
    let o = beets(&["agent", "check", good.to_str().unwrap()]);
    assert!(o.status.success());
    assert!(stdout(&o).starts_with("ok a"));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, r#"{"name":"a","rules":[{"on":"ts.:(","do":[]}]}"#).unwrap();
    let o = beets(&["agent", "check", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rules[0]"));
}

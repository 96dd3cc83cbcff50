use std::path::PathBuf;
use std::process::{Command, Output};

use clusterpush_cli::instance::Instance;
use serde_json::Value;

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

fn fixture(name: &str) -> String {
    fixtures().join(name).to_string_lossy().into_owned()
}

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_clusterpush")).args(args).output().unwrap()
}

fn json_of(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&out.stdout)))
}

fn fixture_names() -> Vec<String> {
    let mut v: Vec<String> = std::fs::read_dir(fixtures())
        .unwrap()
        .filter_map(|e| e.ok()?.file_name().into_string().ok())
        .filter(|n| n.ends_with(".json"))
        .collect();
    v.sort();
    v
}

fn write_temp(name: &str, text: &str) -> String {
    let dir = std::env::temp_dir().join(format!("clusterpush-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn fixtures_round_trip() {
    for name in fixture_names() {
        let text = std::fs::read_to_string(fixtures().join(&name)).unwrap();
        let a = Instance::parse(&text).unwrap_or_else(|e| panic!("{name}: {e}"));
        let b = Instance::parse(&a.to_json().to_string()).unwrap();
        assert_eq!(a, b, "{name}");
        assert_eq!(a.to_json(), b.to_json(), "{name}");
    }
}

#[test]
fn output_is_deterministic() {
    for name in fixture_names() {
        let f = fixture(&name);
        for cmd in ["clusters", "position", "hull", "push", "oracle", "compare", "check-separated"] {
            let x = run(&[cmd, &f]);
            let y = run(&[cmd, &f]);
            assert_eq!(x.stdout, y.stdout, "{cmd} {name}");
            assert_eq!(x.status.code(), y.status.code(), "{cmd} {name}");
        }
        let x = run(&["hull", &f, "--dot"]);
        assert_eq!(x.stdout, run(&["hull", &f, "--dot"]).stdout);
    }
}

#[test]
fn compare_wild_genus_one() {
    let out = run(&["compare", &fixture("g1_wild.json")]);
    assert_eq!(out.status.code(), Some(0));
    let v = json_of(&out);
    assert_eq!(v["result"], "MATCH");
    assert_eq!(v["relative_depths"]["pi(a1),pi(b1)"], "5");
}

#[test]
fn compare_matches_on_optimal_fixtures() {
    for name in ["g1_tame.json", "g1_wild.json", "odd_p3_l7.json", "s23.json"] {
        let out = run(&["compare", &fixture(name)]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stderr));
        assert_eq!(json_of(&out)["result"], "MATCH", "{name}");
    }
}

#[test]
fn golden_set_is_separated_at_zero() {
    let v = json_of(&run(&["check-separated", &fixture("s23.json"), "--r", "0"]));
    assert_eq!(v["separated"], true);
    assert_eq!(v["by_clusters"], v["by_axes"]);
    assert_eq!(v["by_vertices"], v["by_axes"]);
}

#[test]
fn golden_clusters() {
    let v = json_of(&run(&["clusters", &fixture("s23.json")]));
    let rel = &v["relative_depths"];
    assert_eq!(rel["a0,a1,b0,b1"], "1");
    assert_eq!(rel["a0,b0"], "1");
    assert_eq!(rel["a1,b1"], "1");
    assert_eq!(v["clustered_in_pairs"], true);
}

#[test]
fn push_requires_optimality() {
    let out = run(&["push", &fixture("s23_prime.json")]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("optimality"));
    assert_eq!(run(&["oracle", &fixture("s23_prime.json")]).status.code(), Some(0));
}

#[test]
fn validation_errors_exit_two_and_name_the_field() {
    let cases = [
        ("missing.json", r#"{"p": 2, "points": []}"#, "prime_ell"),
        ("composite.json", r#"{"prime_ell": 4, "p": 2, "points": []}"#, "prime_ell"),
        (
            "value.json",
            r#"{"prime_ell": 3, "p": 2, "points": [{"label": "a", "value": "1"}, {"label": "b", "value": "x/y"}]}"#,
            "points[1].value",
        ),
        (
            "dup.json",
            r#"{"prime_ell": 3, "p": 2, "points": [{"label": "a", "value": "1"}, {"label": "a", "value": "2"}]}"#,
            "points[1].label",
        ),
        (
            "pairing.json",
            r#"{"prime_ell": 3, "p": 2, "points": [{"label": "a", "value": "1"}, {"label": "b", "value": "2"}], "pairing": [["a"]]}"#,
            "pairing[0]",
        ),
        ("syntax.json", r#"{"prime_ell": 3,"#, "<document>"),
    ];
    for (name, text, field) in cases {
        let out = run(&["clusters", &write_temp(name, text)]);
        assert_eq!(out.status.code(), Some(2), "{name}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains(field), "{name}: {err}");
    }
    assert_eq!(run(&["clusters", "/nonexistent/instance.json"]).status.code(), Some(2));
}

#[test]
fn non_convergence_exits_three() {
    let out = run(&["oracle", &fixture("g1_wild.json"), "--max-words", "1"]);
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stabilisation"));
}

#[test]
fn inconsistent_vp_warns() {
    let text = std::fs::read_to_string(fixtures().join("g1_tame.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["vp"] = Value::String("1".into());
    let out = run(&["clusters", &write_temp("vp.json", &v.to_string())]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("warning"));
}

use std::process::{Command, Output};

fn hfset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hfset"))
        .args(args)
        .current_dir(concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data"))
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn eval_with_empty_predicate() {
    let o = hfset(&["eval", "--universe", "V3", "--pred", "{}", "--formula", "exists x . A(x)"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "false\n");
}

#[test]
fn eval_with_assignments_and_json() {
    let o = hfset(&[
        "--json", "eval", "--universe", "V3", "--var", "x={{}}", "--param", "a={{},{{}}}",
        "--formula", "x in $a",
    ]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], true);
    assert_eq!(v["bounded"], true);
}

#[test]
fn eval_over_constructible_stage() {
    let o = hfset(&["eval", "--universe", "L0[a.set]", "--formula", "exists x . A(x)"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "false\n");
    let o = hfset(&["eval", "--universe", "L1[a.set]", "--formula", "exists x . A(x)"]);
    assert_eq!(stdout(&o), "true\n");
}

#[test]
fn collapse_chain() {
    let o = hfset(&["collapse", "--graph", "chain.edges"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "0\t{}\n1\t{{}}\n2\t{{},{{}}}\nimage\t{{},{{}},{{},{{}}}}\n");
}

#[test]
fn collapse_witnesses() {
    let o = hfset(&["collapse", "--graph", "cycle.edges"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stdout(&o).contains("cycle\t"));
    assert!(stderr(&o).starts_with("error[not-well-founded]: "));
    let o = hfset(&["collapse", "--graph", "twins.edges"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(stdout(&o), "same-predecessors\t1 2\n");
    assert!(stderr(&o).starts_with("error[not-extensional]: "));
}

#[test]
fn fuzz_report() {
    let o = hfset(&["fuzz", "--seed", "0", "--trials", "1000"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "1000/1000 agree\n");
}

#[test]
fn fuzz_output_ignores_worker_count() {
    let one = hfset(&["fuzz", "--seed", "7", "--trials", "200", "--verbose"]);
    let four = hfset(&["fuzz", "--seed", "7", "--trials", "200", "--verbose", "--jobs", "4"]);
    assert_eq!(stdout(&one), stdout(&four));
    assert_eq!(stdout(&one).lines().count(), 201);
}

#[test]
fn fuzz_rejects_large_stages() {
    let o = hfset(&["fuzz", "--max-stage", "5"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[cap]: "));
}

#[test]
fn build_stages() {
    let o = hfset(&["build", "--stage", "V2"]);
    assert_eq!(stdout(&o), "{{},{{}}}\n");
    let o = hfset(&["build", "--stage", "V4", "--coded"]);
    assert_eq!(stdout(&o), "65535\n");
    let o = hfset(&["build", "--stage", "L3[a.set]"]);
    assert_eq!(stdout(&o), "{{},{{}},{{{}}},{{},{{}}}}\n");
    let o = hfset(&["build", "--stage", "V6"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[cap]: "));
}

#[test]
fn encode_then_collapse() {
    let o = hfset(&["encode", "--set", "{{},{{}},{{},{{}}}}", "--seed", "5"]);
    assert_eq!(o.status.code(), Some(0));
    let path = std::env::temp_dir().join(format!("hfset-encode-{}.edges", std::process::id()));
    std::fs::write(&path, stdout(&o)).unwrap();
    let c = hfset(&["collapse", "--graph", path.to_str().unwrap()]);
    let _ = std::fs::remove_file(&path);
    assert!(stdout(&c).ends_with("image\t{{},{{}},{{},{{}}}}\n"));
    let o = hfset(&["encode", "--set", "{{{}}}"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).starts_with("error[not-transitive]: "));
}

#[test]
fn absolute_checks() {
    let o = hfset(&["absolute", "--inner", "V2", "--outer", "V4", "--param", "a={{}}", "--formula", "forall x in $a . x = x"]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "agree\tinner=true\touter=true\n");
    let o = hfset(&["absolute", "--inner", "{{{}}}", "--outer", "V4", "--formula", "exists x . true"]);
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(
        stdout(&o),
        "violation\tformula has an unbounded quantifier\nviolation\tinner carrier is not transitive\n"
    );
}

#[test]
fn completeness_verdicts() {
    let o = hfset(&["complete", "--theory", "singleton.theory", "--size-cap", "4", "--depth-cap", "4"]);
    assert!(stdout(&o).starts_with("complete relative to caps (size 4, depth 4)"));
    let o = hfset(&["--json", "complete", "--theory", "empty.theory"]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["verdict"], "incomplete");
    let o = hfset(&["complete", "--theory", "false.theory"]);
    assert!(stdout(&o).starts_with("inconsistent"));
    let o = hfset(&["complete", "--theory", "empty.theory", "--size-cap", "9"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn translate_sentence() {
    let o = hfset(&["--json", "translate", "--structure", "chain2.structure", "--sentence", "exists v . forall w . R(v,w) | v = w"]);
    assert_eq!(o.status.code(), Some(0));
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap();
    assert_eq!(v["value"], true);
    assert_eq!(v["direct"], true);
    assert_eq!(v["bounded"], true);
    let o = hfset(&["translate", "--structure", "chain2.structure", "--sentence", "S(v)"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn errors_are_single_coded_lines() {
    for args in [
        vec!["nonsense"],
        vec!["eval", "--universe", "V3"],
        vec!["eval", "--universe", "W3", "--formula", "true"],
        vec!["eval", "--universe", "V3", "--formula", "x in"],
        vec!["eval", "--universe", "{{}", "--formula", "true"],
        vec!["collapse", "--graph", "missing.edges"],
    ] {
        let o = hfset(&args);
        assert_eq!(o.status.code(), Some(1), "{args:?}");
        let first = stderr(&o).lines().next().unwrap_or("").to_string();
        assert!(first.starts_with("error["), "{args:?}: {first}");
    }
}

#[test]
fn output_is_deterministic() {
    let args = ["encode", "--set", "{{},{{}},{{{}}},{{},{{}}}}", "--seed", "42"];
    assert_eq!(stdout(&hfset(&args)), stdout(&hfset(&args)));
}

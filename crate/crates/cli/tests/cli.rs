use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

const BUNNY: &str = "A fast Bunny and a slow Turtle had a race...";

fn run(store: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_storyweave"))
        .arg("--store")
        .arg(store)
        .args(args)
        .env_remove("STORYWEAVE_STORE")
        .output()
        .unwrap()
}

fn ok(store: &Path, args: &[&str]) -> String {
    let out = run(store, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn json(store: &Path, args: &[&str]) -> Value {
    let mut with = vec!["--json"];
    with.extend_from_slice(args);
    serde_json::from_str(&ok(store, &with)).unwrap()
}

#[test]
fn full_session() {
    let dir = tempfile::tempdir().unwrap();
    let store = dir.path();

    let created = json(store, &["--seed-rng", "7", "new", BUNNY]);
    let id = created["id"].as_str().unwrap().to_string();
    assert_eq!(created["project"]["scenes"].as_array().unwrap().len(), 6);
    assert!(store.join("projects").join(&id).join("manifest").is_file());

    let text = ok(store, &["show"]);
    assert!(text.starts_with(&format!("project {id}")));
    assert!(text.contains("scene-6"));

    let persona = json(store, &["show", "persona-1"]);
    assert_eq!(persona["type"], "persona");
    let name = persona["name"].as_str().unwrap().to_string();

    let revised = json(store, &["revise", "persona-1", "rename", &name, "to", "Quill"]);
    assert_eq!(revised["revision"]["id"], 1);
    let dirty: Vec<u64> = revised["propagation"]["dirty_scenes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    let mentioned: Vec<u64> = persona["mentioned_in"]["scenes"]
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v.as_u64().unwrap())
        .collect();
    assert_eq!(dirty, mentioned);

    let regen = json(store, &["regen"]);
    let changed: Vec<String> = regen["changed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["ref"].as_str().unwrap().to_string())
        .collect();
    let expected: Vec<String> = dirty.iter().map(|i| format!("scene-{i}")).collect();
    assert_eq!(changed, expected);
    assert_eq!(ok(store, &["regen"]).trim(), "nothing to do");

    let one = ok(store, &["regen", "scene-2"]);
    assert!(one.contains("changed: scene-2"), "{one}");

    let md = ok(store, &["export", "--format", "markdown"]);
    assert!(md.contains("| | | |"));
    let out = store.join("board.html");
    ok(store, &["export", "--format", "html", "--out", out.to_str().unwrap()]);
    assert_eq!(std::fs::read_to_string(&out).unwrap().matches("<figure").count(), 6);

    let undo = ok(store, &["undo"]);
    assert!(undo.starts_with("revision 4 on scene-2"), "{undo}");

    ok(store, &["start-over"]);
    let after = run(store, &["show"]);
    assert!(!after.status.success());
    assert!(ok(store, &["--project", &id, "show"]).contains("(archived)"));
}

#[test]
fn ideas_are_numbered_and_usable() {
    let dir = tempfile::tempdir().unwrap();
    let text = ok(dir.path(), &["ideas"]);
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 4);
    assert!(lines[0].starts_with("1. "));
    let created = json(dir.path(), &["new", "--idea", "2"]);
    assert_eq!(created["project"]["seed"]["origin"], "ai_suggested");
    assert_eq!(created["project"]["seed"]["text"], lines[1].trim_start_matches("2. "));
}

#[test]
fn same_rng_seed_gives_same_project() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let pa = json(a.path(), &["--seed-rng", "3", "new", BUNNY]);
    let pb = json(b.path(), &["--seed-rng", "3", "new", BUNNY]);
    assert_eq!(pa["project"], pb["project"]);
}

#[test]
fn record_then_replay() {
    let dir = tempfile::tempdir().unwrap();
    let fixtures = dir.path().join("fx");
    let fx = fixtures.to_str().unwrap();
    let recorded = json(dir.path(), &["--record", fx, "new", BUNNY]);
    assert!(std::fs::read_dir(&fixtures).unwrap().count() > 0);

    let other = tempfile::tempdir().unwrap();
    let replayed = json(other.path(), &["--provider", "replay", "--fixtures", fx, "new", BUNNY]);
    assert_eq!(recorded["project"], replayed["project"]);

    let miss = run(
        other.path(),
        &["--provider", "replay", "--fixtures", fx, "new", "something else"],
    );
    assert!(!miss.status.success());
}

#[test]
fn errors_exit_non_zero_with_a_message() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["show"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no current project"));

    let out = run(dir.path(), &["--provider", "nope", "ideas"]);
    assert!(!out.status.success());

    ok(dir.path(), &["new", BUNNY]);
    let out = run(dir.path(), &["revise", "scene-9", "x"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("scene_out_of_range"));
    let out = run(dir.path(), &["export", "--format", "pdf"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown_format"));
}

#[test]
fn live_provider_reports_missing_credentials() {
    let dir = tempfile::tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_storyweave"))
        .args(["--store", dir.path().to_str().unwrap(), "--provider", "live", "ideas"])
        .env_remove("STORYWEAVE_API_KEY")
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("live"));
}

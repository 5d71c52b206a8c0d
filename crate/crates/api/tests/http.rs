use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{header, Method, Request, StatusCode};
use axum::Router;
use serde_json::{json, Value};
use tower::ServiceExt;

use storyweave_api::{router, AppState, ErrorCode, Service};
use storyweave_core::fixtures;
use storyweave_core::genai::testing::{Fault, FlakyProvider};
use storyweave_core::genai::{mock_provider, Provider};
use storyweave_core::revision::FixedClock;
use storyweave_core::{Store, Studio};

const BUNNY: &str = "A fast Bunny and a slow Turtle had a race...";

fn app_with(dir: &std::path::Path, provider: Arc<dyn Provider>) -> Router {
    let store = Store::open(dir).unwrap();
    let studio = Studio::new(provider).with_clock(Arc::new(FixedClock::epoch()));
    router(AppState::new(Service::new(store, studio)))
}

fn app(dir: &std::path::Path) -> Router {
    app_with(dir, Arc::new(mock_provider(42)))
}

async fn call(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (status, _, bytes) = call_raw(app, method, uri, body).await;
    let v = if bytes.is_empty() {
        Value::Null
    } else {
        serde_json::from_slice(&bytes).unwrap()
    };
    (status, v)
}

async fn call_raw(app: &Router, method: Method, uri: &str, body: Option<Value>) -> (StatusCode, String, Vec<u8>) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(b) => req
            .header(header::CONTENT_TYPE, "application/json")
            .body(Body::from(b.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let media = resp
        .headers()
        .get(header::CONTENT_TYPE)
        .map(|v| v.to_str().unwrap().to_string())
        .unwrap_or_default();
    let bytes = axum::body::to_bytes(resp.into_body(), usize::MAX).await.unwrap();
    (status, media, bytes.to_vec())
}

fn assert_error(status: StatusCode, body: &Value, code: ErrorCode) {
    assert_eq!(body["error"]["code"], json!(code.as_str()), "{body}");
    assert_eq!(status, code.status());
    assert!(body["error"]["message"].as_str().is_some_and(|m| !m.is_empty()));
}

async fn create(app: &Router, seed: &str) -> String {
    let (status, body) = call(
        app,
        Method::POST,
        "/v1/projects",
        Some(json!({ "seed": seed, "wait": true })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED, "{body}");
    body["project_id"].as_str().unwrap().to_string()
}

fn save_fixture(dir: &std::path::Path, p: &storyweave_core::StoryProject) -> String {
    Store::open(dir).unwrap().save(p).unwrap()
}

#[tokio::test]
async fn ideas_are_four_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s1, a) = call(&app, Method::GET, "/v1/ideas", None).await;
    let (_, b) = call(&app, Method::GET, "/v1/ideas", None).await;
    assert_eq!(s1, StatusCode::OK);
    let ideas = a["ideas"].as_array().unwrap();
    assert_eq!(ideas.len(), 4);
    assert!(ideas.iter().all(|i| !i["text"].as_str().unwrap().trim().is_empty()));
    assert_eq!(a, b);
}

#[tokio::test]
async fn create_sync_returns_full_project_and_storyboard() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call(
        &app,
        Method::POST,
        "/v1/projects",
        Some(json!({ "seed": BUNNY, "wait": true })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    let project = &body["project"]["project"];
    assert_eq!(project["scenes"].as_array().unwrap().len(), 6);
    assert!((1..=3).contains(&project["personas"].as_array().unwrap().len()));
    assert_eq!(project["seed"]["origin"], "user");
    let board = body["storyboard"]["scenes"].as_array().unwrap();
    assert_eq!(board.len(), 6);
    let id = body["project_id"].as_str().unwrap();
    let (_, session) = call(&app, Method::GET, "/v1/session", None).await;
    assert_eq!(session["current"], json!(id));
}

#[tokio::test]
async fn create_rejects_bad_seeds() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (s, b) = call(&app, Method::POST, "/v1/projects", None).await;
    assert_error(s, &b, ErrorCode::EmptySeed);
    let (s, b) = call(&app, Method::POST, "/v1/projects", Some(json!({ "seed": "   " }))).await;
    assert_error(s, &b, ErrorCode::EmptySeed);
    let (s, b) = call(
        &app,
        Method::POST,
        "/v1/projects",
        Some(json!({ "suggestion_id": "idea-nope" })),
    )
    .await;
    assert_error(s, &b, ErrorCode::SuggestionNotFound);
    let (s, b) = call(&app, Method::POST, "/v1/projects", Some(json!({ "seed": 3 }))).await;
    assert_error(s, &b, ErrorCode::InvalidRequest);
    let (s, b) = call(
        &app,
        Method::POST,
        "/v1/projects",
        Some(json!({ "seed": "x", "suggestion_id": "y" })),
    )
    .await;
    assert_error(s, &b, ErrorCode::InvalidRequest);
    assert!(Store::open(dir.path()).unwrap().list().unwrap().is_empty());
}

#[tokio::test]
async fn create_from_suggestion_marks_origin() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (_, ideas) = call(&app, Method::GET, "/v1/ideas", None).await;
    let idea = &ideas["ideas"][2];
    let (status, body) = call(
        &app,
        Method::POST,
        "/v1/projects",
        Some(json!({ "suggestion_id": idea["id"], "wait": true })),
    )
    .await;
    assert_eq!(status, StatusCode::CREATED);
    assert_eq!(body["project"]["project"]["seed"]["origin"], "ai_suggested");
    assert_eq!(body["project"]["project"]["seed"]["text"], idea["text"]);
}

#[tokio::test]
async fn create_job_is_polled_to_completion() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let (status, body) = call(&app, Method::POST, "/v1/projects", Some(json!({ "seed": BUNNY }))).await;
    assert_eq!(status, StatusCode::ACCEPTED);
    let job_id = body["job"]["id"].as_str().unwrap().to_string();
    let mut job = Value::Null;
    for _ in 0..500 {
        job = call(&app, Method::GET, &format!("/v1/jobs/{job_id}"), None).await.1;
        if job["status"] == "succeeded" || job["status"] == "failed" {
            break;
        }
        tokio::time::sleep(Duration::from_millis(10)).await;
    }
    assert_eq!(job["status"], "succeeded", "{job}");
    let id = job["project_id"].as_str().unwrap();
    let (status, _) = call(&app, Method::GET, &format!("/v1/projects/{id}"), None).await;
    assert_eq!(status, StatusCode::OK);
    let (s, b) = call(&app, Method::GET, "/v1/jobs/job-999", None).await;
    assert_error(s, &b, ErrorCode::JobNotFound);
}

#[tokio::test]
async fn failed_generation_names_the_stage() {
    let dir = tempfile::tempdir().unwrap();
    let flaky = FlakyProvider::new(Arc::new(mock_provider(1)), [3, 4, 5], Fault::Malformed);
    let app = app_with(dir.path(), Arc::new(flaky));
    let (s, b) = call(
        &app,
        Method::POST,
        "/v1/projects",
        Some(json!({ "seed": BUNNY, "wait": true })),
    )
    .await;
    assert_error(s, &b, ErrorCode::GenerationFailed);
    assert_eq!(b["error"]["detail"]["stage"], "step 3 (personas)");
}

#[tokio::test]
async fn scene_one_of_the_race_is_annotated() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::race_project();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    let (status, body) = call(
        &app,
        Method::GET,
        &format!("/v1/projects/{id}/components/scene-1"),
        None,
    )
    .await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["type"], "scene");
    assert_eq!(body["ref"], "scene-1");
    let prompt: Vec<char> = body["image_prompt"].as_str().unwrap().chars().collect();
    let narration: Vec<char> = body["narration"].as_str().unwrap().chars().collect();
    let mut names = BTreeSet::new();
    for r in body["refs"].as_array().unwrap() {
        let text = if r["field"] == "image_prompt" {
            &prompt
        } else {
            &narration
        };
        assert_eq!(r["scene"], 1);
        let (start, end) = (
            r["span"]["start"].as_u64().unwrap() as usize,
            r["span"]["end"].as_u64().unwrap() as usize,
        );
        let found: String = text[start..end].iter().collect();
        assert_eq!(found.to_lowercase(), r["name"].as_str().unwrap().to_lowercase());
        let expected_kind = if r["entity"].as_str().unwrap().starts_with("persona") {
            "persona"
        } else {
            "location"
        };
        assert_eq!(r["kind"], expected_kind);
        if r["field"] == "image_prompt" {
            names.insert(r["name"].as_str().unwrap().to_string());
        }
    }
    let expected: BTreeSet<String> = ["Blaze", "Sheldon", "Whispering Woods"].map(String::from).into();
    assert_eq!(names, expected);
}

#[tokio::test]
async fn storyboard_is_ordered_with_narration_and_image() {
    let dir = tempfile::tempdir().unwrap();
    let id = save_fixture(dir.path(), &fixtures::race_project());
    let app = app(dir.path());
    let (status, body) = call(&app, Method::GET, &format!("/v1/projects/{id}/storyboard"), None).await;
    assert_eq!(status, StatusCode::OK);
    assert_eq!(body["columns"], 3);
    let scenes = body["scenes"].as_array().unwrap();
    let order: Vec<u64> = scenes.iter().map(|s| s["index"].as_u64().unwrap()).collect();
    assert_eq!(order, [1, 2, 3, 4, 5, 6]);
    for s in scenes {
        assert!(!s["narration"].as_str().unwrap().is_empty());
        assert!(s["image"]["handle"].as_str().unwrap().len() == 64);
    }
}

#[tokio::test]
async fn entity_component_lists_mentions() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::marble_project();
    let marble = p.entity_named("Marble puzzle").unwrap().id().to_string();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    let (_, body) = call(
        &app,
        Method::GET,
        &format!("/v1/projects/{id}/components/{marble}"),
        None,
    )
    .await;
    assert_eq!(body["type"], "persona");
    assert_eq!(body["name"], "Marble puzzle");
    assert_eq!(body["mentioned_in"]["scenes"], json!([2, 4]));
}

#[tokio::test]
async fn unknown_things_are_not_found() {
    let dir = tempfile::tempdir().unwrap();
    let id = save_fixture(dir.path(), &fixtures::race_project());
    let app = app(dir.path());
    for c in ["persona-9", "scene-7", "bogus", "scene-1.caption"] {
        let (s, b) = call(&app, Method::GET, &format!("/v1/projects/{id}/components/{c}"), None).await;
        assert_error(s, &b, ErrorCode::ComponentNotFound);
    }
    let (s, b) = call(&app, Method::GET, "/v1/projects/p-missing", None).await;
    assert_error(s, &b, ErrorCode::ProjectNotFound);
    let (s, b) = call(&app, Method::GET, "/v1/nowhere", None).await;
    assert_error(s, &b, ErrorCode::NotFound);
    let (s, b) = call(&app, Method::DELETE, "/v1/projects", None).await;
    assert_error(s, &b, ErrorCode::MethodNotAllowed);
    let (s, b) = call(
        &app,
        Method::GET,
        &format!("/v1/projects/{id}/assets/{}", "0".repeat(64)),
        None,
    )
    .await;
    assert_error(s, &b, ErrorCode::AssetNotFound);
}

#[tokio::test]
async fn revise_persona_reports_exactly_the_dirty_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::marble_project();
    let marble = p.entity_named("Marble puzzle").unwrap().id().to_string();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    let (status, body) = call(
        &app,
        Method::POST,
        &format!("/v1/projects/{id}/components/{marble}/revise"),
        Some(json!({ "instruction": "change Marble puzzle to Rubik's cube" })),
    )
    .await;
    assert_eq!(status, StatusCode::OK, "{body}");
    assert_eq!(body["propagation"]["dirty_scenes"], json!([2, 4]));
    assert_eq!(body["revision"]["id"], 1);
    let changed: BTreeSet<String> = body["changed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["ref"].as_str().unwrap().to_string())
        .collect();
    // The storyline mentions the puzzle too, so the rename rewrites it.
    assert_eq!(body["propagation"]["storyline_touched"], true);
    let expected: BTreeSet<String> = ["storyline", marble.as_str(), "scene-2", "scene-4"]
        .map(String::from)
        .into();
    assert_eq!(changed, expected);
    for c in body["changed"].as_array().unwrap() {
        if c["type"] == "scene" {
            assert_eq!(c["stale"], true);
            assert!(c["refs"]
                .as_array()
                .unwrap()
                .iter()
                .any(|r| r["name"] == "Rubik's cube"));
        }
    }
}

#[tokio::test]
async fn empty_instruction_changes_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::marble_project();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    for body in [json!({ "instruction": "  " }), json!({})] {
        let (s, b) = call(
            &app,
            Method::POST,
            &format!("/v1/projects/{id}/components/storyline/revise"),
            Some(body),
        )
        .await;
        assert_error(s, &b, ErrorCode::EmptyInstruction);
    }
    assert_eq!(Store::open(dir.path()).unwrap().load(&id).unwrap(), p);
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn concurrent_revisions_are_serialized() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::marble_project();
    let mia = p.entity_named("Mia").unwrap().id().to_string();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    let uri = format!("/v1/projects/{id}/components/{mia}/revise");
    let a = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({ "instruction": "make it so she wears a red scarf" })),
    );
    let b = call(
        &app,
        Method::POST,
        &uri,
        Some(json!({ "instruction": "make it so she carries a lantern" })),
    );
    let ((sa, ra), (sb, rb)) = tokio::join!(a, b);
    assert_eq!((sa, sb), (StatusCode::OK, StatusCode::OK));
    let mut ids = [
        ra["revision"]["id"].as_u64().unwrap(),
        rb["revision"]["id"].as_u64().unwrap(),
    ];
    ids.sort();
    assert_eq!(ids, [1, 2]);
    let second = if ra["revision"]["id"] == 2 { &ra } else { &rb };
    let first = if ra["revision"]["id"] == 1 { &ra } else { &rb };
    // The second edit started from the first one's result.
    assert_eq!(
        second["revision"]["before"]["personas"][0],
        first["revision"]["after"]["personas"][0]
    );
    let stored = Store::open(dir.path()).unwrap().load(&id).unwrap();
    let extra = stored.personas[0].extra.clone().unwrap();
    assert!(extra.contains("red scarf") && extra.contains("lantern"), "{extra}");
}

#[tokio::test]
async fn regenerate_stale_touches_only_dirty_scenes() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::marble_project();
    let marble = p.entity_named("Marble puzzle").unwrap().id().to_string();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    let (s, b) = call(&app, Method::POST, &format!("/v1/projects/{id}/regenerate-stale"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["revision"], Value::Null);
    assert_eq!(b["changed"], json!([]));

    call(
        &app,
        Method::POST,
        &format!("/v1/projects/{id}/components/{marble}/revise"),
        Some(json!({ "instruction": "change Marble puzzle to Rubik's cube" })),
    )
    .await;
    let (s, b) = call(&app, Method::POST, &format!("/v1/projects/{id}/regenerate-stale"), None).await;
    assert_eq!(s, StatusCode::OK);
    let refs: Vec<&str> = b["changed"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["ref"].as_str().unwrap())
        .collect();
    assert_eq!(refs, ["scene-2", "scene-4"]);
    for c in b["changed"].as_array().unwrap() {
        assert_eq!(c["stale"], false);
        let url = c["image"]["url"].as_str().unwrap();
        let (status, media, bytes) = call_raw(&app, Method::GET, url, None).await;
        assert_eq!(status, StatusCode::OK);
        assert_eq!(media, "image/svg+xml");
        assert!(!bytes.is_empty());
    }
}

#[tokio::test]
async fn regenerate_scene_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let id = save_fixture(dir.path(), &fixtures::race_project());
    let app = app(dir.path());
    for index in ["0", "7", "300", "x"] {
        let (s, b) = call(
            &app,
            Method::POST,
            &format!("/v1/projects/{id}/scenes/{index}/regenerate"),
            None,
        )
        .await;
        assert_error(s, &b, ErrorCode::SceneOutOfRange);
    }
    let (s, b) = call(
        &app,
        Method::POST,
        &format!("/v1/projects/{id}/scenes/5/regenerate"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["changed"][0]["ref"], "scene-5");
    assert_eq!(b["changed"][0]["image"]["provider_tag"], "mock");
}

#[tokio::test]
async fn undo_restores_and_then_runs_out() {
    let dir = tempfile::tempdir().unwrap();
    let p = fixtures::race_project();
    let id = save_fixture(dir.path(), &p);
    let app = app(dir.path());
    let (s, b) = call(&app, Method::POST, &format!("/v1/projects/{id}/undo"), None).await;
    assert_error(s, &b, ErrorCode::NothingToUndo);
    call(
        &app,
        Method::POST,
        &format!("/v1/projects/{id}/components/storyline/revise"),
        Some(json!({ "instruction": "make it rain" })),
    )
    .await;
    let (s, b) = call(&app, Method::POST, &format!("/v1/projects/{id}/undo"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["revision"]["kind"], "undo");
    let mut back = Store::open(dir.path()).unwrap().load(&id).unwrap();
    assert_eq!(back.revisions.len(), 2);
    back.revisions.clear();
    assert_eq!(back, p);
    let (_, history) = call(&app, Method::GET, &format!("/v1/projects/{id}/revisions"), None).await;
    assert_eq!(history["revisions"].as_array().unwrap().len(), 2);
}

#[tokio::test]
async fn start_over_archives_without_deleting() {
    let dir = tempfile::tempdir().unwrap();
    let app = app(dir.path());
    let id = create(&app, BUNNY).await;
    let (_, before) = call(&app, Method::GET, &format!("/v1/projects/{id}"), None).await;

    let (s, first) = call(&app, Method::POST, &format!("/v1/projects/{id}/start-over"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(first["already_archived"], false);
    assert_eq!(first["screen"], "seed");
    assert_eq!(first["session"]["current"], Value::Null);
    let (_, second) = call(&app, Method::POST, &format!("/v1/projects/{id}/start-over"), None).await;
    assert_eq!(second["already_archived"], true);
    assert_eq!(second["archived_at"], first["archived_at"]);

    let (_, after) = call(&app, Method::GET, &format!("/v1/projects/{id}"), None).await;
    assert_eq!(after["archived"], true);
    assert_eq!(after["project"], before["project"]);

    let (s, b) = call(&app, Method::POST, &format!("/v1/projects/{id}/undo"), None).await;
    assert_error(s, &b, ErrorCode::ProjectArchived);

    // Same seed again gets a fresh id; the archive is untouched.
    let id2 = create(&app, BUNNY).await;
    assert_ne!(id2, id);
    let (_, still) = call(&app, Method::GET, &format!("/v1/projects/{id}"), None).await;
    assert_eq!(still["project"], before["project"]);

    let (s, b) = call(&app, Method::POST, "/v1/projects/p-none/start-over", None).await;
    assert_error(s, &b, ErrorCode::ProjectNotFound);
}

#[tokio::test]
async fn export_formats() {
    let dir = tempfile::tempdir().unwrap();
    let id = save_fixture(dir.path(), &fixtures::race_project());
    let app = app(dir.path());
    let (s, media, md) = call_raw(
        &app,
        Method::GET,
        &format!("/v1/projects/{id}/export?format=markdown"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!(media.starts_with("text/markdown"));
    assert!(String::from_utf8(md).unwrap().contains("| | | |"));
    let (s, media, html) = call_raw(
        &app,
        Method::GET,
        &format!("/v1/projects/{id}/export?format=html"),
        None,
    )
    .await;
    assert_eq!(s, StatusCode::OK);
    assert!(media.starts_with("text/html"));
    assert_eq!(String::from_utf8(html).unwrap().matches("<figure").count(), 6);
    let (s, b) = call(&app, Method::GET, &format!("/v1/projects/{id}/export?format=pdf"), None).await;
    assert_error(s, &b, ErrorCode::UnknownFormat);
}

#[tokio::test]
async fn restart_loses_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let id = {
        let app = app(dir.path());
        create(&app, BUNNY).await
    };
    let app = app(dir.path());
    let (s, b) = call(&app, Method::GET, "/v1/projects", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(b["projects"][0]["id"], json!(id));
    let (_, session) = call(&app, Method::GET, "/v1/session", None).await;
    assert_eq!(session["current"], json!(id));
}

use std::time::Duration;

use casts_core::scenario::fixtures;
use casts_server::{router, AppState};
use reqwest::{Client, StatusCode};
use serde_json::{json, Value};

struct Server {
    base: String,
    http: Client,
}

async fn start(state: AppState) -> Server {
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, router(state)).await.unwrap() });
    Server {
        base: format!("http://{addr}/api/v1"),
        http: Client::new(),
    }
}

impl Server {
    async fn get(&self, path: &str) -> (StatusCode, Value) {
        let r = self.http.get(format!("{}{path}", self.base)).send().await.unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn send(&self, method: reqwest::Method, path: &str, body: Value) -> (StatusCode, Value) {
        let r = self
            .http
            .request(method, format!("{}{path}", self.base))
            .json(&body)
            .send()
            .await
            .unwrap();
        let status = r.status();
        (status, r.json().await.unwrap_or(Value::Null))
    }

    async fn post(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(reqwest::Method::POST, path, body).await
    }

    async fn put(&self, path: &str, body: Value) -> (StatusCode, Value) {
        self.send(reqwest::Method::PUT, path, body).await
    }

    async fn create(&self, scenario: &str, ontology: (&str, &str)) -> String {
        let (s, v) = self
            .post(
                "/sessions",
                json!({ "scenario": scenario, "files": { ontology.0: ontology.1 } }),
            )
            .await;
        assert_eq!(s, StatusCode::CREATED, "{v}");
        v["id"].as_str().unwrap().to_owned()
    }

    async fn road(&self) -> String {
        self.create(fixtures::ROAD_INFO, ("road-info.ont.xml", fixtures::ROAD_INFO_ONTOLOGY)).await
    }

    async fn planning(&self) -> String {
        self.create(
            fixtures::PLANNING_HOTEL,
            ("planning-hotel.ont.xml", fixtures::PLANNING_HOTEL_ONTOLOGY),
        )
        .await
    }
}

fn labels(action: &Value) -> Vec<String> {
    match action["kind"].as_str().unwrap() {
        "internal" => vec![action["by"].as_str().unwrap().to_owned()],
        _ => vec![
            action["sender"].as_str().unwrap().to_owned(),
            action["receiver"].as_str().unwrap().to_owned(),
        ],
    }
}

#[tokio::test]
async fn health() {
    let srv = start(AppState::default()).await;
    let (s, v) = srv.get("/health").await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "ok");
}

#[tokio::test]
async fn road_walkthrough_reaches_verified_and_holds_back_mc4() {
    let srv = start(AppState::default()).await;
    let id = srv.road().await;

    let (s, v) = srv.get(&format!("/sessions/{id}/graphs")).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v.as_array().unwrap().len(), 6);

    let (s, v) = srv.get(&format!("/sessions/{id}/verification")).await;
    assert_eq!(s, StatusCode::CONFLICT, "{v}");
    assert_eq!(v["error"], "stage");

    let (s, v) = srv.get(&format!("/sessions/{id}/candidates")).await;
    assert_eq!(s, StatusCode::OK);
    let pairs: Vec<(String, String)> = v
        .as_array()
        .unwrap()
        .iter()
        .map(|c| (c["pair"]["left"].as_str().unwrap().into(), c["pair"]["right"].as_str().unwrap().into()))
        .collect();
    assert_eq!(
        pairs,
        [("ac:l_ac4".into(), "mc:l_mc4".into()), ("ac:l_ac5".into(), "mc:l_mc5".into())]
    );

    let (s, v) = srv
        .put(
            &format!("/sessions/{id}/selection"),
            json!({ "choices": [{ "index": 0, "order": "leftFirst" }] }),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    assert_eq!(v["stage"], "verified");
    assert_eq!(v["report"]["conflicts"], json!([]));
    assert_eq!(v["extended"]["stage"], "extended");
    assert_eq!(v["extended"]["items"].as_array().unwrap().len(), 4);

    let (_, ext) = srv.get(&format!("/sessions/{id}/extended")).await;
    assert_eq!(ext, v["extended"]);
    assert!(ext["items"]
        .as_array()
        .unwrap()
        .contains(&json!({ "dominant": "ac:l_ac1", "dominated": "mc:l_mc4" })));

    let mut ac4_fired = false;
    let mut saw_mc4_blocked = false;
    for _ in 0..200 {
        let (s, m) = srv.get(&format!("/sessions/{id}/moves")).await;
        assert_eq!(s, StatusCode::OK);
        let enabled = m["enabled"].as_array().unwrap();
        let blocked = m["blocked"].as_array().unwrap();
        let mc4_blocked = blocked.iter().any(|b| b["label"] == "mc:l_mc4");
        saw_mc4_blocked |= mc4_blocked;
        if !ac4_fired {
            assert!(enabled.iter().all(|a| !labels(a).contains(&"mc:l_mc4".to_owned())));
        } else {
            assert!(!mc4_blocked);
        }
        if enabled.is_empty() {
            assert_eq!(m["complete"], true, "{m}");
            break;
        }
        // hold ac back as long as anything else can move
        let index = enabled
            .iter()
            .position(|a| labels(a).iter().all(|l| !l.starts_with("ac:")))
            .unwrap_or(0);
        let (s, r) = srv.post(&format!("/sessions/{id}/step"), json!({ "index": index })).await;
        assert_eq!(s, StatusCode::OK, "{r}");
        ac4_fired |= labels(&r["action"]).contains(&"ac:l_ac4".to_owned());
    }
    assert!(ac4_fired && saw_mc4_blocked);

    let (_, summary) = srv.get(&format!("/sessions/{id}")).await;
    assert_eq!(summary["stage"], "exploring");
    let (_, t) = srv.get(&format!("/sessions/{id}/trace")).await;
    assert!(!t["events"].as_array().unwrap().is_empty());
}

#[tokio::test]
async fn planning_verdict_refusal_and_reselection() {
    let srv = start(AppState::default()).await;
    let id = srv.planning().await;
    srv.get(&format!("/sessions/{id}/candidates")).await;
    let (s, v) = srv
        .put(
            &format!("/sessions/{id}/selection"),
            json!({ "choices": [{ "index": 0, "order": "rightFirst" }, { "index": 1, "order": "leftFirst" }] }),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    let kinds: Vec<&str> = v["report"]["conflicts"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["kind"].as_str().unwrap())
        .collect();
    assert_eq!(kinds.len(), 2);
    assert!(kinds.contains(&"mutual") && kinds.contains(&"crossed"));

    let (s, r) = srv.post(&format!("/sessions/{id}/step"), json!({ "index": 0 })).await;
    assert_eq!(s, StatusCode::CONFLICT);
    assert_eq!(r["error"], "refused");

    let (s, e) = srv
        .post(&format!("/sessions/{id}/explore"), json!({ "bound": 1000, "force": true }))
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(e["completions"], 0);
    assert!(e["deadlocks"].as_u64().unwrap() >= 1);

    let (s, v) = srv
        .put(
            &format!("/sessions/{id}/selection"),
            json!({ "choices": [{ "index": 0, "order": "rightFirst" }] }),
        )
        .await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["report"]["conflicts"], json!([]));
    let (_, rep) = srv.get(&format!("/sessions/{id}/verification")).await;
    assert_eq!(rep["conflicts"], json!([]));
}

#[tokio::test]
async fn bad_payloads_name_the_field() {
    let srv = start(AppState::default()).await;
    let id = srv.road().await;
    srv.get(&format!("/sessions/{id}/candidates")).await;

    let (s, v) = srv
        .put(&format!("/sessions/{id}/selection"), json!({ "choices": [{ "index": "x", "order": "leftFirst" }] }))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "choices[0].index");

    let (s, v) = srv
        .put(&format!("/sessions/{id}/selection"), json!({ "choices": [{ "index": 0, "order": "sideways" }] }))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "choices[0].order");

    let (s, v) = srv
        .put(&format!("/sessions/{id}/selection"), json!({ "choices": [{ "index": 7, "order": "leftFirst" }] }))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "choices");

    let (s, v) = srv.post("/sessions", json!({ "scenario": "<scenario" })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "scenario");

    let (s, v) = srv.post("/sessions", json!({ "scenario": fixtures::ROAD_INFO })).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("road-info.ont.xml"));

    let (s, v) = srv
        .post(
            "/sessions",
            json!({ "scenario": fixtures::LOOP, "left": "lp", "right": "nope" }),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "right");

    let (s, _) = srv.get("/sessions/00000000-0000-0000-0000-000000000000/candidates").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    let (s, _) = srv.get("/sessions/not-a-uuid").await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn save_and_load_reproduce_the_session() {
    let srv = start(AppState::default()).await;
    let id = srv.road().await;
    srv.get(&format!("/sessions/{id}/candidates")).await;
    srv.put(
        &format!("/sessions/{id}/selection"),
        json!({ "choices": [{ "index": 0, "order": "leftFirst" }] }),
    )
    .await;
    srv.post(&format!("/sessions/{id}/step"), json!({ "index": 0 })).await;

    let xml = srv
        .http
        .get(format!("{}/sessions/{id}/save", srv.base))
        .send()
        .await
        .unwrap()
        .text()
        .await
        .unwrap();
    assert!(xml.contains("<session version=\"1\""));
    let (s, v) = srv.post("/sessions/load", json!({ "session": xml })).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    let copy = v["id"].as_str().unwrap();
    assert_ne!(copy, id);
    for part in ["extended", "verification", "trace", "moves"] {
        assert_eq!(
            srv.get(&format!("/sessions/{copy}/{part}")).await,
            srv.get(&format!("/sessions/{id}/{part}")).await,
            "{part}"
        );
    }

    let (s, v) = srv
        .post("/sessions/load", json!({ "session": xml.replacen("version=\"1\"", "version=\"2\"", 1) }))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert!(v["message"].as_str().unwrap().contains("version"));
}

#[tokio::test]
async fn sessions_are_isolated() {
    let srv = start(AppState::default()).await;
    let (a, b) = (srv.road().await, srv.road().await);
    srv.get(&format!("/sessions/{a}/candidates")).await;
    srv.put(
        &format!("/sessions/{a}/selection"),
        json!({ "choices": [{ "index": 1, "order": "rightFirst" }] }),
    )
    .await;
    let (s, _) = srv.get(&format!("/sessions/{b}/extended")).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let (_, sb) = srv.get(&format!("/sessions/{b}")).await;
    assert_eq!(sb["stage"], "loaded");

    let r = srv.http.delete(format!("{}/sessions/{a}", srv.base)).send().await.unwrap();
    assert_eq!(r.status(), StatusCode::NO_CONTENT);
    assert_eq!(srv.get(&format!("/sessions/{a}")).await.0, StatusCode::NOT_FOUND);
    assert_eq!(srv.get(&format!("/sessions/{b}")).await.0, StatusCode::OK);
}

#[tokio::test]
async fn idle_sessions_expire() {
    let state = AppState::with_ttl(Duration::from_millis(100));
    let srv = start(state.clone()).await;
    let id = srv.road().await;
    assert_eq!(srv.get(&format!("/sessions/{id}")).await.0, StatusCode::OK);
    tokio::time::sleep(Duration::from_millis(250)).await;
    assert_eq!(srv.get(&format!("/sessions/{id}")).await.0, StatusCode::NOT_FOUND);
    assert!(state.is_empty());
}

#[tokio::test]
async fn context_updates_are_checked() {
    let srv = start(AppState::default()).await;
    let id = srv.road().await;
    srv.get(&format!("/sessions/{id}/candidates")).await;
    srv.put(&format!("/sessions/{id}/selection"), json!({ "choices": [] })).await;

    let (s, v) = srv
        .post(
            &format!("/sessions/{id}/context"),
            json!({ "instance": "ac", "name": "priv", "type": "string", "value": "Subscriber" }),
        )
        .await;
    assert_eq!(s, StatusCode::OK, "{v}");
    let ac = v["configuration"]["clients"]
        .as_array()
        .unwrap()
        .iter()
        .find(|c| c["instance"] == "ac")
        .unwrap()
        .clone();
    assert_eq!(ac["env"]["priv"]["value"], "Subscriber");

    let (s, v) = srv
        .post(
            &format!("/sessions/{id}/context"),
            json!({ "instance": "mc", "name": "day", "type": "string", "value": "Monday" }),
        )
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST, "{v}");

    let (s, v) = srv
        .post(&format!("/sessions/{id}/context"), json!({ "instance": "ac", "name": "priv" }))
        .await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
    assert_eq!(v["field"], "");
}

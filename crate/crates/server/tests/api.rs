mod common;

use std::sync::{Arc, Mutex};
use std::time::Duration;

use common::*;
use medsync_core::notify::{Channel, Transport, TransportError};
use medsync_core::sync::{PROTOCOL_HEADER, PROTOCOL_VERSION, SERVER_HEADER};
use medsync_server::api::ROUTES;
use medsync_server::config::ConfigError;
use medsync_server::Config;
use serde_json::{json, Value};

const DAY_MS: u64 = 24 * 3_600_000;

#[tokio::test(flavor = "multi_thread")]
async fn login_issues_a_day_long_session() {
    let h = Harness::seeded("korle-bu", &[]);
    let res = h
        .http
        .post(h.url("/login"))
        .json(&json!({ "doctor": "ama", "secret": SECRET }))
        .send()
        .await
        .unwrap();
    assert_eq!(res.status(), 200);
    let body: Value = res.json().await.unwrap();
    assert_eq!(body["doctor"]["id"], "ama");
    assert_eq!(body["token"].as_str().unwrap().len(), 64);
    assert_eq!(body["expires_at_ms"], START_MS + DAY_MS);

    let token = body["token"].as_str().unwrap();
    assert_eq!(h.get("/threads", token).await.0, 200);
    h.clock.advance(DAY_MS);
    assert_eq!(h.get("/threads", token).await.0, 401);
}

#[tokio::test(flavor = "multi_thread")]
async fn sixth_failed_login_is_throttled() {
    let h = Harness::seeded("korle-bu", &[]);
    let attempt = |secret: &'static str| {
        h.http
            .post(h.url("/login"))
            .json(&json!({ "doctor": "kofi", "secret": secret }))
            .send()
    };
    for _ in 0..5 {
        assert_eq!(attempt("wrong secret").await.unwrap().status(), 401);
    }
    let res = attempt(SECRET).await.unwrap();
    assert_eq!(res.status(), 429);
    let retry: u64 = res.headers()["retry-after"].to_str().unwrap().parse().unwrap();
    assert!((1..=60).contains(&retry), "retry-after {retry}");

    assert_eq!(attempt("wrong secret").await.unwrap().status(), 429, "still throttled");
    let (status, _) = h
        .call("POST", "/login", None, Some(json!({ "doctor": "esi", "secret": SECRET })))
        .await;
    assert_eq!(status, 200);

    h.clock.advance(60_000);
    assert_eq!(attempt(SECRET).await.unwrap().status(), 200);
}

#[tokio::test(flavor = "multi_thread")]
async fn unknown_account_and_bad_secret_look_the_same() {
    let h = Harness::seeded("korle-bu", &[]);
    let (a, ba) = h
        .call("POST", "/login", None, Some(json!({ "doctor": "nobody", "secret": "whatever1" })))
        .await;
    let (b, bb) = h
        .call("POST", "/login", None, Some(json!({ "doctor": "ama", "secret": "whatever1" })))
        .await;
    assert_eq!((a, b), (401, 401));
    assert_eq!(ba, bb);
}

fn concrete(path: &str, thread: &str) -> String {
    path.trim_start_matches("/api/v1").replace("{id}", thread)
}

#[tokio::test(flavor = "multi_thread")]
async fn anonymous_requests_never_see_data() {
    let h = Harness::seeded("korle-bu", &[]);
    let ama = h.login("ama").await;
    let (status, view) = h
        .post("/threads", &ama, consultation("fever and rash for three days", None))
        .await;
    assert_eq!(status, 201);
    let thread = view["thread"]["id"].as_str().unwrap().to_owned();

    for (method, path) in ROUTES {
        let path = concrete(path, &thread);
        let (status, body) = h.call(method, &path, None, Some(json!({}))).await;
        let text = body.to_string();
        assert!(!text.contains("fever"), "{method} {path} leaked case text");
        assert!(!text.contains(&thread), "{method} {path} leaked a thread id");
        if path == "/login" {
            assert!((400..500).contains(&status), "{method} {path}: {status}");
        } else {
            assert_eq!(status, 401, "{method} {path}");
        }
    }
    let (status, _) = h.call("GET", "/threads", Some("not-a-token"), None).await;
    assert_eq!(status, 401);
}

#[tokio::test(flavor = "multi_thread")]
async fn every_listed_route_is_mounted() {
    let h = Harness::seeded("korle-bu", &[]);
    let admin = h.login("admin").await;
    for (method, path) in ROUTES {
        let path = concrete(path, "t-missing");
        let (_, body) = h.call(method, &path, Some(&admin), Some(json!({}))).await;
        assert_ne!(body["error"], "no such route", "{method} {path}");
    }
    let (status, body) = h.get("/nowhere", &admin).await;
    assert_eq!(status, 404);
    assert_eq!(body["error"], "no such route");
}

#[tokio::test(flavor = "multi_thread")]
async fn wizard_consultation_reaches_the_assignee() {
    let h = Harness::seeded("korle-bu", &[]);
    let ama = h.login("ama").await;
    let kofi = h.login("kofi").await;
    let esi = h.login("esi").await;

    let (status, view) = h
        .post(
            "/threads",
            &ama,
            consultation("two year old, wheeze", Some(json!({ "doctor": "kofi" }))),
        )
        .await;
    assert_eq!(status, 201, "{view}");
    let id = view["thread"]["id"].as_str().unwrap().to_owned();
    assert_eq!(view["thread"]["creator"], "ama");
    assert_eq!(view["thread"]["status"], "open");
    assert_eq!(view["thread"]["assignments"][0]["target"], json!({ "doctor": "kofi" }));

    let (_, primary) = h.get("/threads?bucket=primary", &kofi).await;
    assert_eq!(thread_ids(&primary), vec![id.clone()]);
    let (_, both) = h.get("/threads", &esi).await;
    assert!(thread_ids(&both["primary"]).is_empty());
    assert!(thread_ids(&both["other"]).is_empty());
    assert_eq!(h.get(&format!("/threads/{id}"), &esi).await.0, 403);

    let (status, msg) = h
        .post(&format!("/threads/{id}/messages"), &kofi, json!({ "body": "start a bronchodilator" }))
        .await;
    assert_eq!(status, 201);
    assert_eq!(msg["author"], "kofi");
    assert_eq!(
        h.post(&format!("/threads/{id}/messages"), &esi, json!({ "body": "hello" })).await.0,
        403
    );
    assert_eq!(
        h.post(&format!("/threads/{id}/messages"), &kofi, json!({ "body": "  " })).await.0,
        422
    );

    let (status, view) = h.get(&format!("/threads/{id}"), &ama).await;
    assert_eq!(status, 200);
    assert_eq!(view["messages"].as_array().unwrap().len(), 1);
    assert_eq!(view["messages"][0]["body"], "start a bronchodilator");

    let (status, _) = h
        .post(&format!("/threads/{id}/assignments"), &ama, json!({ "target": { "doctor": "esi" } }))
        .await;
    assert_eq!(status, 201);
    assert_eq!(h.get(&format!("/threads/{id}"), &esi).await.0, 200);
    assert_eq!(
        h.post(&format!("/threads/{id}/assignments"), &ama, json!({ "target": { "doctor": "ghost" } }))
            .await
            .0,
        404
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn case_form_holds_only_non_identifying_fields() {
    let h = Harness::seeded("korle-bu", &[]);
    let ama = h.login("ama").await;
    let (_, view) = h.post("/threads", &ama, consultation("cough", None)).await;
    let mut keys: Vec<&str> = view["thread"]["case_form"]
        .as_object()
        .unwrap()
        .keys()
        .map(String::as_str)
        .collect();
    keys.sort_unstable();
    let allowed = ["age_band", "attachments", "clinical_history", "sex", "specialization_requested"];
    assert!(keys.iter().all(|k| allowed.contains(k)), "{keys:?}");

    for field in ["patient_name", "address", "national_id", "date_of_birth"] {
        let mut body = consultation("cough", None);
        body["case_form"][field] = json!("x");
        let (status, _) = h.post("/threads", &ama, body).await;
        assert_eq!(status, 422, "{field} accepted");
    }
    let mut body = consultation("cough", None);
    body["patient"] = json!("Kwame");
    assert_eq!(h.post("/threads", &ama, body).await.0, 422);

    let (_, lists) = h.get("/threads", &ama).await;
    assert_eq!(lists["primary"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn responses_never_carry_secret_verifiers() {
    let h = Harness::seeded("korle-bu", &[]);
    let admin = h.login("admin").await;
    let (status, created) = h
        .post(
            "/admin/users",
            &admin,
            json!({ "doctor": doctor("yaw", "korle_bu", &["surgery"], false), "secret": "a long enough secret" }),
        )
        .await;
    assert_eq!(status, 201);
    let mut seen = vec![created];
    for path in ["/threads", "/consultants", "/colleagues", "/memberships", "/sync/status"] {
        let (status, body) = h.get(path, &admin).await;
        assert_eq!(status, 200, "{path}");
        seen.push(body);
    }
    for body in seen {
        let text = body.to_string();
        assert!(!text.contains("argon2") && !text.contains("verifier") && !text.contains("credential"), "{text}");
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn admin_creates_directory_records() {
    let h = Harness::seeded("korle-bu", &[]);
    let admin = h.login("admin").await;
    let kofi = h.login("kofi").await;
    let yaw = json!({ "doctor": doctor("yaw", "korle_bu", &["surgery"], false), "secret": SECRET });

    assert_eq!(h.post("/admin/users", &kofi, yaw.clone()).await.0, 403);
    assert_eq!(h.post("/admin/users", &admin, yaw.clone()).await.0, 201);
    assert_eq!(h.post("/admin/users", &admin, yaw).await.0, 409);
    let weak = json!({ "doctor": doctor("abena", "korle_bu", &[], false), "secret": "short" });
    assert_eq!(h.post("/admin/users", &admin, weak).await.0, 422);
    let dangling = json!({ "doctor": doctor("abena", "nowhere", &[], false), "secret": "a long enough secret" });
    assert_eq!(h.post("/admin/users", &admin, dangling).await.0, 422);

    let (_, view) = h.get("/colleagues", &kofi).await;
    let names: Vec<&str> = view["directory"]
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["doctor"].as_str().unwrap())
        .collect();
    assert!(names.contains(&"yaw"));
    assert!(!names.contains(&"kofi"));
    h.login("yaw").await;

    let tamale = json!({
        "id": "tamale", "name": "Tamale Teaching", "tier": "teaching",
        "region": "Northern", "departments": ["surgery"]
    });
    assert_eq!(h.post("/admin/hospitals", &kofi, tamale.clone()).await.0, 403);
    assert_eq!(h.post("/admin/hospitals", &admin, tamale.clone()).await.0, 201);
    assert_eq!(h.post("/admin/hospitals", &admin, tamale).await.0, 409);

    let group = json!({ "id": "g_surg", "name": "Surgeons", "kind": "specialty", "affiliation": { "specialty": "surgery" } });
    assert_eq!(h.post("/admin/groups", &admin, group).await.0, 201);
    let (_, groups) = h.get("/memberships", &kofi).await;
    assert_eq!(groups.as_array().unwrap().len(), 2);
}

#[tokio::test(flavor = "multi_thread")]
async fn group_assignments_land_in_the_other_bucket() {
    let h = Harness::seeded("korle-bu", &[]);
    let ama = h.login("ama").await;
    let kofi = h.login("kofi").await;

    let (status, groups) = h.put("/memberships", &kofi, json!({ "group": "g_peds", "member": true })).await;
    assert_eq!(status, 200);
    assert_eq!(groups[0]["member"], true);

    let (_, view) = h
        .post("/threads", &ama, consultation("neonatal jaundice", Some(json!({ "group": "g_peds" }))))
        .await;
    let id = view["thread"]["id"].as_str().unwrap().to_owned();
    let (_, lists) = h.get("/threads", &kofi).await;
    assert!(thread_ids(&lists["primary"]).is_empty());
    assert_eq!(thread_ids(&lists["other"]), vec![id.clone()]);
    assert_eq!(h.get(&format!("/threads/{id}"), &kofi).await.0, 200);

    let (_, view) = h
        .post(
            "/threads",
            &ama,
            consultation("failure to thrive", Some(json!({ "department": { "hospital": "korle_bu", "specialty": "pediatrics" } }))),
        )
        .await;
    let dept = view["thread"]["id"].as_str().unwrap().to_owned();
    let (_, primary) = h.get("/threads?bucket=primary", &kofi).await;
    assert_eq!(thread_ids(&primary), vec![dept]);

    let bad = consultation("x", Some(json!({ "department": { "hospital": "cape_coast", "specialty": "pediatrics" } })));
    assert_eq!(h.post("/threads", &ama, bad).await.0, 404);
}

#[tokio::test(flavor = "multi_thread")]
async fn consultants_follow_colleagues_groups_and_referral_chain() {
    let h = Harness::seeded("korle-bu", &[]);
    let ama = h.login("ama").await;
    assert_eq!(h.put("/colleagues", &ama, json!({ "doctor": "kofi", "listed": true })).await.0, 200);
    assert_eq!(h.put("/colleagues", &ama, json!({ "doctor": "esi", "listed": true })).await.0, 200);
    assert_eq!(h.put("/colleagues", &ama, json!({ "doctor": "ama", "listed": true })).await.0, 422);

    let (status, set) = h.get("/consultants?specialty=pediatrics", &ama).await;
    assert_eq!(status, 200);
    let colleagues: Vec<&str> = set["colleagues"].as_array().unwrap().iter().map(|c| c["doctor"].as_str().unwrap()).collect();
    assert_eq!(colleagues, vec!["kofi"]);
    assert_eq!(set["groups"][0]["group"], "g_peds");
    assert_eq!(set["departments"][0]["hospital"], "korle_bu");

    let (_, all) = h.get("/consultants", &ama).await;
    assert_eq!(all["colleagues"].as_array().unwrap().len(), 2);

    let (_, view) = h.put("/colleagues", &ama, json!({ "doctor": "esi", "listed": false })).await;
    assert_eq!(view["colleagues"].as_array().unwrap().len(), 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn only_the_creator_escalates_once() {
    let h = Harness::seeded("korle-bu", &[]);
    let ama = h.login("ama").await;
    let kofi = h.login("kofi").await;
    let (_, view) = h.post("/threads", &ama, consultation("sepsis", Some(json!({ "doctor": "kofi" })))).await;
    let id = view["thread"]["id"].as_str().unwrap().to_owned();
    let path = format!("/threads/{id}/escalate");

    assert_eq!(h.post(&path, &kofi, json!({})).await.0, 403);
    let (status, view) = h.post(&path, &ama, json!({})).await;
    assert_eq!(status, 200);
    assert_eq!(view["thread"]["status"], "escalated");
    assert_eq!(view["thread"]["kind"], "referral");
    assert_eq!(h.post(&path, &ama, json!({})).await.0, 409);
    assert_eq!(h.post("/threads/t-none/escalate", &ama, json!({})).await.0, 404);
}

/// Two plain-HTTP nodes peered with each other; only `a` is seeded.
fn pair(homed_a: &[&str], homed_b: &[&str]) -> (Harness, Harness) {
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (sa, sb) = (Site::bind("korle-bu", false), Site::bind("cape-coast", false));
    let ca = config(&sa, da.path(), vec![sb.peer()], homed_a, false);
    let cb = config(&sb, db.path(), vec![sa.peer()], homed_b, false);
    seed(&ca);
    let clock = TestClock::new();
    (
        Harness::start(sa, ca, clock.clone(), Some(da)),
        Harness::start(sb, cb, clock, Some(db)),
    )
}

#[tokio::test(flavor = "multi_thread")]
async fn peers_converge_over_http() {
    let (a, b) = pair(&[], &[]);
    let (pushed, pulled) = b.node.sync_with(&"korle-bu".into()).await.unwrap();
    assert_eq!(pushed, 0);
    assert!(pulled >= 7, "{pulled}");

    let ama = b.login("ama").await;
    let (status, view) = b.post("/threads", &ama, consultation("offline case", Some(json!({ "doctor": "kofi" })))).await;
    assert_eq!(status, 201);
    let id = view["thread"]["id"].as_str().unwrap().to_owned();
    assert_eq!(b.node.sync_with(&"korle-bu".into()).await.unwrap(), (1 + 1, 0));

    let kofi = a.login("kofi").await;
    let (_, primary) = a.get("/threads?bucket=primary", &kofi).await;
    assert_eq!(thread_ids(&primary), vec![id]);
    assert_eq!(a.node.sync_with(&"cape-coast".into()).await.unwrap(), (0, 0));
    assert_eq!(
        a.node.with_replica(|r| r.digest()),
        b.node.with_replica(|r| r.digest())
    );
}

#[tokio::test(flavor = "multi_thread")]
async fn sync_endpoints_require_the_peer_secret_and_protocol() {
    let (a, _b) = pair(&[], &[]);
    let digest = a.url("/sync/digest");
    let send = |server: &str, secret: &str, protocol: &str| {
        a.http
            .post(&digest)
            .header(SERVER_HEADER, server)
            .header(PROTOCOL_HEADER, protocol)
            .bearer_auth(secret)
            .json(&json!({}))
            .send()
    };
    let v = PROTOCOL_VERSION.to_string();
    assert_eq!(send("cape-coast", PEER_SECRET, &v).await.unwrap().status(), 200);
    assert_eq!(send("cape-coast", "guess", &v).await.unwrap().status(), 401);
    assert_eq!(send("elmina", PEER_SECRET, &v).await.unwrap().status(), 401);
    let other = (PROTOCOL_VERSION + 1).to_string();
    assert_eq!(send("cape-coast", PEER_SECRET, &other).await.unwrap().status(), 409);

    let delta = a
        .http
        .post(a.url("/sync/delta"))
        .header(SERVER_HEADER, "cape-coast")
        .header(PROTOCOL_HEADER, other)
        .bearer_auth(PEER_SECRET)
        .json(&json!([]))
        .send()
        .await
        .unwrap();
    assert_eq!(delta.status(), 409);

    let ama = a.login("ama").await;
    assert_eq!(a.call("POST", "/sync/digest", Some(&ama), Some(json!({}))).await.0, 401);
}

#[tokio::test(flavor = "multi_thread")]
async fn peers_converge_over_tls() {
    let (da, db) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let (sa, sb) = (Site::bind("korle-bu", true), Site::bind("cape-coast", true));
    let ca = config(&sa, da.path(), vec![sb.peer()], &[], true);
    let cb = config(&sb, db.path(), vec![sa.peer()], &[], true);
    ca.validate().unwrap();
    seed(&ca);
    let clock = TestClock::new();
    let a = Harness::start(sa, ca, clock.clone(), Some(da));
    let b = Harness::start(sb, cb, clock, Some(db));

    let mut ok = None;
    for _ in 0..50 {
        match b.node.sync_with(&"korle-bu".into()).await {
            Ok(r) => {
                ok = Some(r);
                break;
            }
            Err(_) => tokio::time::sleep(Duration::from_millis(100)).await,
        }
    }
    assert!(ok.expect("TLS round").1 >= 7);
    let token = b.login("kofi").await;
    assert!(b.base.starts_with("https://"));
    assert_eq!(b.get("/threads", &token).await.0, 200);

    let plain = reqwest::Client::new();
    let http_url = a.base.replacen("https://", "http://", 1);
    assert!(plain.get(format!("{http_url}/threads")).send().await.map_or(true, |r| !r.status().is_success()));
}

fn config_from(text: &str) -> Result<Config, ConfigError> {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("medsync.toml");
    std::fs::write(&path, text).unwrap();
    Config::load(&path)
}

#[test]
fn config_validation_rejects_insecure_deployments() {
    let base = "server_id = \"korle-bu\"\nrole = \"global\"\ndata_dir = \"/tmp/x\"\n";
    assert!(matches!(config_from(base), Err(ConfigError::TlsRequired)));
    let ok = config_from(&format!("{base}test_mode = true\n")).unwrap();
    assert_eq!(ok.staleness_threshold_hours, 24);
    assert_eq!(ok.listen.port(), 8443);

    let tls = "[tls]\ncert = \"c.pem\"\nkey = \"k.pem\"\n";
    let plain_peer = format!("{base}[[peers]]\nid = \"cape-coast\"\nurl = \"http://10.0.0.2:8443\"\nsecret = \"s\"\n{tls}");
    assert!(matches!(config_from(&plain_peer), Err(ConfigError::PlainPeer(_))));
    let self_peer = format!("{base}test_mode = true\n[[peers]]\nid = \"korle-bu\"\nurl = \"http://x\"\nsecret = \"s\"\n");
    assert!(matches!(config_from(&self_peer), Err(ConfigError::SelfPeer)));
    assert!(matches!(config_from("server_id = 1"), Err(ConfigError::Parse { .. })));
}

#[derive(Clone, Default)]
struct Shared(Arc<Mutex<Vec<(Channel, String)>>>);

impl Transport for Shared {
    fn send(&mut self, channel: Channel, address: &str, _body: &str) -> Result<(), TransportError> {
        self.0.lock().unwrap().push((channel, address.to_owned()));
        Ok(())
    }
}

#[tokio::test(flavor = "multi_thread")]
async fn notifications_go_once_to_homed_users() {
    let (a, b) = pair(&["kofi"], &["esi"]);
    let (sent_a, sent_b) = (Shared::default(), Shared::default());
    a.node.set_transport(Box::new(sent_a.clone()));
    b.node.set_transport(Box::new(sent_b.clone()));
    b.node.sync_with(&"korle-bu".into()).await.unwrap();

    let ama = a.login("ama").await;
    let (_, view) = a.post("/threads", &ama, consultation("anaemia", Some(json!({ "doctor": "kofi" })))).await;
    let id = view["thread"]["id"].as_str().unwrap().to_owned();
    a.post(&format!("/threads/{id}/assignments"), &ama, json!({ "target": { "doctor": "esi" } })).await;

    b.node.sync_with(&"korle-bu".into()).await.unwrap();
    b.node.sync_with(&"korle-bu".into()).await.unwrap();
    for _ in 0..3 {
        a.node.dispatch_tick();
        b.node.dispatch_tick();
    }
    let got_a = sent_a.0.lock().unwrap().clone();
    let got_b = sent_b.0.lock().unwrap().clone();
    let emails = |v: &[(Channel, String)]| -> Vec<String> {
        v.iter().filter(|(c, _)| *c == Channel::Email).map(|(_, a)| a.clone()).collect()
    };
    assert!(!got_a.is_empty());
    assert!(emails(&got_a).iter().all(|e| e == "kofi@example.org"), "{got_a:?}");
    assert!(emails(&got_b).iter().all(|e| e == "esi@example.org"), "{got_b:?}");
    assert!(emails(&got_b).contains(&"esi@example.org".to_owned()));

    let jobs = |h: &Harness| h.node.dispatcher().jobs().count();
    assert_eq!(got_a.len(), jobs(&a));
    assert_eq!(got_b.len(), jobs(&b));

    b.node.sync_with(&"korle-bu".into()).await.unwrap();
    a.node.sync_with(&"cape-coast".into()).await.unwrap();
    for _ in 0..3 {
        a.node.dispatch_tick();
        b.node.dispatch_tick();
    }
    assert_eq!(sent_a.0.lock().unwrap().len(), got_a.len(), "resync re-sent");
    assert_eq!(sent_b.0.lock().unwrap().len(), got_b.len(), "resync re-sent");
}

#[tokio::test(flavor = "multi_thread")]
async fn new_thread_stub_is_pushed_to_peers() {
    let (a, b) = pair(&[], &[]);
    b.node.sync_with(&"korle-bu".into()).await.unwrap();
    let ama = a.login("ama").await;
    let (_, view) = a.post("/threads", &ama, consultation("burns", None)).await;
    let id = view["thread"]["id"].as_str().unwrap().to_owned();

    let mut seen = false;
    for _ in 0..50 {
        if b.node.with_replica(|r| r.stub_threads().iter().any(|t| t.id.as_str() == id)) {
            seen = true;
            break;
        }
        tokio::time::sleep(Duration::from_millis(50)).await;
    }
    assert!(seen, "stub never arrived");
    let ama_b = b.login("ama").await;
    let (_, primary) = b.get("/threads?bucket=primary", &ama_b).await;
    assert_eq!(primary[0]["thread"], id.as_str());
    assert_eq!(primary[0]["stub"], true);
    let (status, stub) = b.get(&format!("/threads/{id}"), &ama_b).await;
    assert_eq!(status, 200);
    assert_eq!(stub["thread"]["stub"], true);

    b.node.sync_with(&"korle-bu".into()).await.unwrap();
    let (_, primary) = b.get("/threads?bucket=primary", &ama_b).await;
    assert_eq!(primary.as_array().unwrap().len(), 1);
    assert_eq!(primary[0]["stub"], false);
}

#[tokio::test(flavor = "multi_thread")]
async fn staleness_is_reported_after_a_day_without_sync() {
    let (a, _b) = pair(&[], &[]);
    a.node.staleness_tick();
    let status = |h: &Harness| h.node.with_replica(|r| r.sync_status());
    assert!(!status(&a).stale);

    a.clock.advance(DAY_MS);
    a.node.staleness_tick();
    assert!(!status(&a).stale, "exactly the threshold is not stale");
    a.clock.advance(1);
    a.node.staleness_tick();
    assert!(status(&a).stale);

    let kofi = a.login("kofi").await;
    let (code, view) = a.get("/sync/status", &kofi).await;
    assert_eq!(code, 200);
    assert_eq!(view["stale"], true);
    assert_eq!(view["staleness_threshold_hours"], 24);
    assert_eq!(view["peers"][0]["peer"], "cape-coast");
    assert_eq!(view["peers"][0]["stale"], true);

    a.node.sync_with(&"cape-coast".into()).await.unwrap();
    let (_, view) = a.get("/sync/status", &kofi).await;
    assert_eq!(view["stale"], false);
    assert_eq!(view["peers"][0]["last_success_ms"], START_MS + DAY_MS + 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn failed_rounds_back_off() {
    let dir = tempfile::tempdir().unwrap();
    let site = Site::bind("korle-bu", false);
    let gone = Site::bind("cape-coast", false);
    let peer = gone.peer();
    drop(gone);
    let cfg = config(&site, dir.path(), vec![peer], &[], false);
    seed(&cfg);
    let h = Harness::start(site, cfg, TestClock::new(), Some(dir));
    let peer = "cape-coast".into();
    assert!(h.node.sync_with(&peer).await.is_err());
    let first = h.node.with_replica(|r| r.peer(&peer).cloned().unwrap());
    assert_eq!(first.consecutive_failures, 1);
    assert_eq!(first.next_attempt_ms, START_MS + 30_000);
    assert!(h.node.sync_with(&peer).await.is_err());
    let second = h.node.with_replica(|r| r.peer(&peer).cloned().unwrap());
    assert_eq!(second.next_attempt_ms, START_MS + 60_000);
    assert!(second.last_error.is_some());
}

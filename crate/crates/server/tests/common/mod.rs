#![allow(dead_code)]

use std::net::TcpListener;
use std::path::Path;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use medsync_core::domain::{Affiliation, Contact, Doctor, Group, GroupKind, Hospital, HospitalTier, Seniority};
use medsync_server::config::{PeerConfig, Role, TlsConfig, TransportsConfig};
use medsync_server::{admin, Clock, Config, Node};
use serde_json::Value;
use tempfile::TempDir;

pub const SECRET: &str = "open sesame";
pub const START_MS: u64 = 1_700_000_000_000;
pub const PEER_SECRET: &str = "shared-peer-secret";

#[derive(Clone)]
pub struct TestClock(Arc<AtomicU64>);

impl TestClock {
    pub fn new() -> Self {
        Self(Arc::new(AtomicU64::new(START_MS)))
    }

    pub fn advance(&self, ms: u64) {
        self.0.fetch_add(ms, Ordering::SeqCst);
    }

    pub fn clock(&self) -> Clock {
        let t = Arc::clone(&self.0);
        Arc::new(move || t.load(Ordering::SeqCst))
    }
}

pub fn hospital(id: &str, tier: HospitalTier, parent: Option<&str>, departments: &[&str]) -> Hospital {
    Hospital {
        id: id.into(),
        name: format!("{id} hospital"),
        tier,
        region: "Greater Accra".into(),
        referral_parent: parent.map(Into::into),
        departments: departments.iter().map(|&d| d.into()).collect(),
        country: None,
    }
}

pub fn doctor(id: &str, hospital: &str, specialties: &[&str], is_admin: bool) -> Doctor {
    Doctor {
        id: id.into(),
        display_name: format!("Dr {id}"),
        hospital: hospital.into(),
        specialties: specialties.iter().map(|&s| s.into()).collect(),
        country: "GH".into(),
        seniority: Seniority::Senior,
        contact: Contact {
            email: Some(format!("{id}@example.org")),
            phone: Some("+233200000000".into()),
        },
        is_admin,
    }
}

pub struct Site {
    pub id: &'static str,
    pub listener: TcpListener,
    pub url: String,
}

impl Site {
    pub fn bind(id: &'static str, tls: bool) -> Self {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let port = listener.local_addr().unwrap().port();
        let url = if tls {
            format!("https://localhost:{port}")
        } else {
            format!("http://127.0.0.1:{port}")
        };
        Self { id, listener, url }
    }

    pub fn peer(&self) -> PeerConfig {
        PeerConfig {
            id: self.id.into(),
            url: self.url.clone(),
            secret: PEER_SECRET.into(),
        }
    }
}

fn data(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

pub fn config(site: &Site, dir: &Path, peers: Vec<PeerConfig>, homed: &[&str], tls: bool) -> Config {
    Config {
        server_id: site.id.into(),
        role: Role::Local,
        listen: site.listener.local_addr().unwrap(),
        data_dir: dir.to_path_buf(),
        peers,
        homed_users: homed.iter().map(|&h| h.into()).collect(),
        staleness_threshold_hours: 24,
        sync_period_secs: 60,
        tls: tls.then(|| TlsConfig {
            cert: data("server.pem"),
            key: data("server.key"),
            ca: Some(data("ca.pem")),
        }),
        transports: TransportsConfig::default(),
        test_mode: !tls,
    }
}

/// Two hospitals, four accounts and a pediatrics group.
pub fn seed(config: &Config) {
    let now = START_MS;
    admin::create_hospital(config, hospital("korle_bu", HospitalTier::Teaching, None, &["pediatrics", "surgery"]), now).unwrap();
    admin::create_hospital(config, hospital("cape_coast", HospitalTier::Regional, Some("korle_bu"), &[]), now).unwrap();
    for d in [
        doctor("admin", "korle_bu", &[], true),
        doctor("ama", "cape_coast", &["pediatrics"], false),
        doctor("kofi", "korle_bu", &["pediatrics"], false),
        doctor("esi", "korle_bu", &[], false),
    ] {
        admin::create_user(config, d, SECRET, now).unwrap();
    }
    admin::create_group(
        config,
        Group {
            id: "g_peds".into(),
            name: "Paediatrics Ghana".into(),
            kind: GroupKind::Specialty,
            affiliation: Some(Affiliation::Specialty("pediatrics".into())),
            members: Default::default(),
        },
        now,
    )
    .unwrap();
}

pub struct Harness {
    pub node: Arc<Node>,
    pub base: String,
    pub clock: TestClock,
    pub http: reqwest::Client,
    task: tokio::task::JoinHandle<()>,
    _dir: Option<TempDir>,
}

impl Drop for Harness {
    fn drop(&mut self) {
        self.task.abort();
    }
}

fn client(tls: bool) -> reqwest::Client {
    let mut b = reqwest::Client::builder();
    if tls {
        let pem = std::fs::read(data("ca.pem")).unwrap();
        b = b.add_root_certificate(reqwest::Certificate::from_pem(&pem).unwrap());
    }
    b.build().unwrap()
}

impl Harness {
    pub fn start(site: Site, config: Config, clock: TestClock, dir: Option<TempDir>) -> Self {
        let tls = config.tls.is_some();
        let node = Arc::new(Node::open(config, clock.clock()).unwrap());
        let serving = Arc::clone(&node);
        let task = tokio::spawn(async move {
            medsync_server::serve_on(serving, site.listener).await.unwrap();
        });
        Self {
            node,
            base: format!("{}/api/v1", site.url),
            clock,
            http: client(tls),
            task,
            _dir: dir,
        }
    }

    /// One plain-HTTP node seeded with the standard accounts.
    pub fn seeded(id: &'static str, homed: &[&str]) -> Self {
        let dir = tempfile::tempdir().unwrap();
        let site = Site::bind(id, false);
        let cfg = config(&site, dir.path(), Vec::new(), homed, false);
        seed(&cfg);
        Self::start(site, cfg, TestClock::new(), Some(dir))
    }

    pub fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub async fn login(&self, doctor: &str) -> String {
        let res = self
            .http
            .post(self.url("/login"))
            .json(&serde_json::json!({ "doctor": doctor, "secret": SECRET }))
            .send()
            .await
            .unwrap();
        assert_eq!(res.status(), 200, "login {doctor}");
        res.json::<Value>().await.unwrap()["token"].as_str().unwrap().to_owned()
    }

    pub async fn call(&self, method: &str, path: &str, token: Option<&str>, body: Option<Value>) -> (u16, Value) {
        let mut req = self.http.request(method.parse().unwrap(), self.url(path));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        if let Some(b) = body {
            req = req.json(&b);
        }
        let res = req.send().await.unwrap();
        let status = res.status().as_u16();
        let text = res.text().await.unwrap();
        (status, serde_json::from_str(&text).unwrap_or(Value::String(text)))
    }

    pub async fn get(&self, path: &str, token: &str) -> (u16, Value) {
        self.call("GET", path, Some(token), None).await
    }

    pub async fn post(&self, path: &str, token: &str, body: Value) -> (u16, Value) {
        self.call("POST", path, Some(token), Some(body)).await
    }

    pub async fn put(&self, path: &str, token: &str, body: Value) -> (u16, Value) {
        self.call("PUT", path, Some(token), Some(body)).await
    }
}

pub fn consultation(history: &str, assign_to: Option<Value>) -> Value {
    let mut body = serde_json::json!({
        "kind": "consultation",
        "case_form": {
            "age_band": "30-39",
            "sex": "female",
            "clinical_history": history,
            "specialization_requested": "pediatrics"
        }
    });
    if let Some(t) = assign_to {
        body["assign_to"] = t;
    }
    body
}

pub fn thread_ids(list: &Value) -> Vec<String> {
    list.as_array()
        .unwrap()
        .iter()
        .map(|e| e["thread"].as_str().unwrap().to_owned())
        .collect()
}

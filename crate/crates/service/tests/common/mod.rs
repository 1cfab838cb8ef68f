//! Test fixtures: a background server and a small blocking HTTP client.
//! Also included by the cli acceptance suite.
#![allow(dead_code)]

use std::sync::Arc;

use serde_json::{json, Value};
use stepwork_core::persistence::{Action, SessionScript};
use stepwork_service::{serve, Engine, ServiceConfig, ServiceHandle};

pub struct Server {
    pub rt: tokio::runtime::Runtime,
    handle: Option<ServiceHandle>,
    pub base: String,
}

impl Server {
    pub fn start(engine: Engine) -> Server {
        Server::start_with(
            engine,
            ServiceConfig {
                port: 0,
                ..ServiceConfig::default()
            },
        )
    }

    pub fn start_with(engine: Engine, config: ServiceConfig) -> Server {
        let rt = tokio::runtime::Builder::new_multi_thread()
            .worker_threads(2)
            .enable_all()
            .build()
            .unwrap();
        let handle = rt.block_on(serve(&config, Arc::new(engine))).unwrap();
        let base = handle.base_url();
        Server {
            rt,
            handle: Some(handle),
            base,
        }
    }

    pub fn client(&self) -> Client {
        Client::new(&self.base)
    }

    pub fn stop(mut self) {
        if let Some(h) = self.handle.take() {
            self.rt.block_on(h.shutdown()).unwrap();
        }
    }
}

impl Drop for Server {
    fn drop(&mut self) {
        if let Some(h) = self.handle.take() {
            let _ = self.rt.block_on(h.shutdown());
        }
    }
}

#[derive(Clone)]
pub struct Client {
    agent: ureq::Agent,
    base: String,
}

type Reply = ureq::http::Response<ureq::Body>;

fn json_of(mut r: Reply) -> (u16, Value) {
    let status = r.status().as_u16();
    let text = r.body_mut().read_to_string().unwrap();
    let value = serde_json::from_str(&text).unwrap_or_else(|e| panic!("non-JSON body ({e}): {text}"));
    (status, value)
}

impl Client {
    pub fn new(base: &str) -> Client {
        let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
        Client {
            agent,
            base: format!("{base}/api"),
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{path}", self.base)
    }

    pub fn get(&self, path: &str) -> (u16, Value) {
        json_of(self.agent.get(&self.url(path)).call().unwrap())
    }

    pub fn get_bytes(&self, path: &str) -> (u16, Vec<u8>) {
        let mut r = self.agent.get(&self.url(path)).call().unwrap();
        (r.status().as_u16(), r.body_mut().read_to_vec().unwrap())
    }

    pub fn post(&self, path: &str, body: Value) -> (u16, Value) {
        json_of(self.agent.post(&self.url(path)).send_json(body).unwrap())
    }

    pub fn post_raw(&self, path: &str, body: &[u8]) -> (u16, Value) {
        json_of(self.agent.post(&self.url(path)).send(body).unwrap())
    }

    pub fn patch(&self, path: &str, body: Value) -> (u16, Value) {
        json_of(self.agent.patch(&self.url(path)).send_json(body).unwrap())
    }

    pub fn delete(&self, path: &str) -> (u16, Value) {
        json_of(self.agent.delete(&self.url(path)).call().unwrap())
    }

    pub fn put_bytes(&self, path: &str, body: &[u8]) -> (u16, Value) {
        json_of(self.agent.put(&self.url(path)).send(body).unwrap())
    }
}

fn expect_ok(what: &str, (status, body): (u16, Value)) -> Result<Value, String> {
    if (200..300).contains(&status) {
        Ok(body)
    } else {
        Err(format!("{what}: HTTP {status} {body}"))
    }
}

/// Replay a session script using nothing but HTTP calls, the way the
/// workbench would: anchors and ledger ordinals are resolved from the goal
/// and tree endpoints. Returns the project id.
pub fn drive_session(client: &Client, script: &SessionScript, targets: &[String]) -> Result<String, String> {
    let created = expect_ok(
        "create project",
        client.post("/projects", json!({ "name": script.project, "targets": targets })),
    )?;
    let pid = created["data"]["project_id"].as_str().unwrap().to_string();
    let mut revision = created["revision"].as_u64().unwrap();
    let project_path = format!("/projects/{pid}");

    let goal_id = |name: &str| -> Result<String, String> {
        let p = expect_ok("get project", client.get(&project_path))?;
        p["data"]["goals"]
            .as_array()
            .unwrap()
            .iter()
            .find(|g| g["name"] == name)
            .map(|g| g["goal_id"].as_str().unwrap().to_string())
            .ok_or_else(|| format!("no goal named {name}"))
    };
    let ledger_id = |gid: &str, ordinal: usize| -> Result<String, String> {
        let g = expect_ok("get goal", client.get(&format!("{project_path}/goals/{gid}")))?;
        g["data"]["interactions"]
            .get(ordinal)
            .map(|i| i["interaction_id"].as_str().unwrap().to_string())
            .ok_or_else(|| format!("no interaction #{ordinal}"))
    };

    for (index, action) in script.actions.iter().enumerate() {
        let step = |what: &str| format!("action {index} ({what})");
        let reply = match action {
            Action::CreateGoal { name } => client.post(
                &format!("{project_path}/goals"),
                json!({ "name": name, "expected_revision": revision }),
            ),
            Action::Apply {
                goal,
                anchor,
                component,
                bindings,
            } => {
                let gid = goal_id(goal)?;
                let owner = match anchor.owner {
                    Some(o) => Some(ledger_id(&gid, o)?),
                    None => None,
                };
                let tree = expect_ok("tree", client.get(&format!("{project_path}/goals/{gid}/tree")))?;
                let rows = tree["data"]["rows"].as_array().unwrap();
                let row = match &owner {
                    None => rows.first().filter(|r| r["socket"] == anchor.socket.as_str()),
                    Some(iid) => rows
                        .iter()
                        .find(|r| r["owner"] == iid.as_str() && r["socket"] == anchor.socket.as_str()),
                };
                let anchor_id = row
                    .map(|r| r["step_id"].as_str().unwrap().to_string())
                    .ok_or_else(|| step("anchor not found"))?;
                client.post(
                    &format!("{project_path}/goals/{gid}/interactions"),
                    json!({
                        "anchor": anchor_id,
                        "component_id": component,
                        "raw_bindings": bindings,
                        "expected_revision": revision,
                    }),
                )
            }
            Action::Edit {
                goal,
                interaction,
                bindings,
            } => {
                let gid = goal_id(goal)?;
                let iid = ledger_id(&gid, *interaction)?;
                client.patch(
                    &format!("{project_path}/goals/{gid}/interactions/{iid}"),
                    json!({ "raw_bindings": bindings, "expected_revision": revision }),
                )
            }
            Action::Delete {
                goal,
                interaction,
                cascade,
            } => {
                let gid = goal_id(goal)?;
                let iid = ledger_id(&gid, *interaction)?;
                client.delete(&format!(
                    "{project_path}/goals/{gid}/interactions/{iid}?cascade={cascade}&expected_revision={revision}"
                ))
            }
        };
        let body = expect_ok(&step("mutation"), reply)?;
        revision = body["revision"].as_u64().unwrap();
    }
    Ok(pid)
}

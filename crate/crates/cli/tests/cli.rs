#[path = "../../service/tests/common/mod.rs"]
mod common;

use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::{Command, Output, Stdio};

use serde_json::{json, Value};
use stepwork_core::build::detect_toolchain;
use stepwork_core::persistence::{parse_session, replay_session, save_project};
use stepwork_core::reference;
use stepwork_core::testkit::tree_walk_user_steps;
use stepwork_service::Engine;

const STW: &str = env!("CARGO_BIN_EXE_stw");

fn stw(dir: &Path, args: &[&str]) -> Output {
    Command::new(STW)
        .args(args)
        .current_dir(dir)
        .env_remove("STW_PORT")
        .env_remove("STW_HOST")
        .output()
        .unwrap()
}

fn text(b: &[u8]) -> String {
    String::from_utf8_lossy(b).into_owned()
}

fn available(target: &str) -> bool {
    detect_toolchain(reference::toolchains().get(target).unwrap()).found
}

/// Write every bundled session into `dir` and replay it with the CLI.
fn replay_all(dir: &Path) -> Vec<(String, PathBuf)> {
    reference::SESSIONS
        .iter()
        .map(|(name, script, stdin)| {
            let session = dir.join(format!("{name}.session.json"));
            std::fs::write(&session, script).unwrap();
            if !stdin.is_empty() {
                std::fs::write(dir.join(format!("{name}.stdin")), stdin).unwrap();
            }
            let project = dir.join(format!("{name}.stw.json"));
            let out = stw(
                dir,
                &["replay", session.to_str().unwrap(), "-o", project.to_str().unwrap()],
            );
            assert!(out.status.success(), "{name}: {}", text(&out.stderr));
            (name.to_string(), project)
        })
        .collect()
}

#[test]
fn init_replay_run_hello() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert!(stw(d, &["init"]).status.success());
    assert!(d.join("packs/reference.pack.json").is_file());
    let again = stw(d, &["init"]);
    assert_eq!(again.status.code(), Some(2));

    let out = stw(d, &["replay", "hello.session.json", "-o", "hello.stw.json"]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let registry = reference::registry();
    let script = parse_session(reference::session("hello").unwrap().as_bytes()).unwrap();
    let expected = save_project(
        &replay_session(&script, &registry, &["c".into(), "python".into()]).unwrap(),
        &registry,
    );
    assert_eq!(std::fs::read(d.join("hello.stw.json")).unwrap(), expected);

    for target in ["python", "c"] {
        if !available(target) {
            eprintln!("skipping {target}: toolchain not found");
            continue;
        }
        let out = stw(
            d,
            &[
                "--packs",
                "packs",
                "--toolchains",
                "toolchains.json",
                "run",
                "hello.stw.json",
                "--target",
                target,
            ],
        );
        assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
        assert_eq!(text(&out.stdout), "Hello, World!\n");
    }
}

#[test]
fn run_feeds_stdin() {
    if !available("python") {
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let projects = replay_all(dir.path());
    let (_, echo) = projects.iter().find(|(n, _)| n == "echo_input").unwrap();
    let out = stw(
        dir.path(),
        &[
            "run",
            echo.to_str().unwrap(),
            "--target",
            "python",
            "--stdin",
            "echo_input.stdin",
        ],
    );
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let first_input = reference::SESSIONS[1].2.lines().next().unwrap();
    assert!(text(&out.stdout).contains(first_input), "{}", text(&out.stdout));
}

#[test]
fn steps_match_tree_walk() {
    let dir = tempfile::tempdir().unwrap();
    for (name, project) in replay_all(dir.path()) {
        let out = stw(dir.path(), &["--json", "steps", project.to_str().unwrap()]);
        assert!(out.status.success());
        let report: Value = serde_json::from_slice(&out.stdout).unwrap();
        let walked: usize = tree_walk_user_steps(&std::fs::read(&project).unwrap()).iter().sum();
        assert_eq!(report["summary"]["total"].as_u64(), Some(walked as u64), "{name}");

        let plain = text(&stw(dir.path(), &["steps", project.to_str().unwrap()]).stdout);
        assert_eq!(plain.lines().last().unwrap(), format!("total\t{walked}"), "{name}");
    }
}

#[test]
fn tree_is_indented() {
    let dir = tempfile::tempdir().unwrap();
    let projects = replay_all(dir.path());
    let (_, fizz) = projects.iter().find(|(n, _)| n == "fizz_like").unwrap();
    let out = stw(dir.path(), &["tree", fizz.to_str().unwrap(), "--goal", "Main"]);
    assert!(out.status.success());
    let lines: Vec<String> = text(&out.stdout).lines().map(str::to_string).collect();
    assert_eq!(lines[0], "Main");
    let registry = reference::registry();
    let script = parse_session(reference::session("fizz_like").unwrap().as_bytes()).unwrap();
    let p = replay_session(&script, &registry, script.targets.as_deref().unwrap()).unwrap();
    let rows = p.goal_by_name("Main").unwrap().steps_outline();
    assert_eq!(lines.len(), rows.len());
    for (line, row) in lines.iter().zip(&rows) {
        assert_eq!(line, &format!("{}{}", "  ".repeat(row.depth), row.label));
    }
    let missing = stw(dir.path(), &["tree", fizz.to_str().unwrap(), "--goal", "Nope"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(text(&missing.stderr).contains("error[GoalNotFound]"));
}

#[test]
fn pack_validate_reports_findings() {
    let dir = tempfile::tempdir().unwrap();
    let broken = Path::new(reference::BROKEN_DIR).join("unbound_variable.pack.json");
    let out = stw(dir.path(), &["pack", "validate", broken.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stdout).contains("UnboundMaskVariable"));
    assert!(text(&out.stderr).contains("error[UnboundMaskVariable]"));

    std::fs::write(dir.path().join("ok.pack.json"), reference::PACK_JSON).unwrap();
    let out = stw(dir.path(), &["--json", "pack", "validate", "ok.pack.json"]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["summary"]["errors"], 0);

    std::fs::write(dir.path().join("bad.pack.json"), "{\"format\": 7}").unwrap();
    let out = stw(dir.path(), &["pack", "validate", "bad.pack.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("error[UnsupportedFormat]"));
}

#[test]
fn gen_matches_service_payload() {
    let dir = tempfile::tempdir().unwrap();
    let projects = replay_all(dir.path());
    let server = common::Server::start(Engine::new(reference::registry(), reference::toolchains()));
    let client = server.client();
    for (name, project) in &projects {
        let bytes = std::fs::read(project).unwrap();
        let pid: Value = serde_json::from_slice(&bytes).unwrap();
        let pid = pid["project"]["project_id"].as_str().unwrap().to_string();
        let (status, _) = client.put_bytes(&format!("/projects/{pid}/file"), &bytes);
        assert_eq!(status, 201);
        let out_dir = dir.path().join(format!("gen_{name}"));
        let out = stw(
            dir.path(),
            &[
                "gen",
                project.to_str().unwrap(),
                "--all-targets",
                "-o",
                out_dir.to_str().unwrap(),
            ],
        );
        assert!(out.status.success(), "{}", text(&out.stderr));
        for target in ["c", "python"] {
            let (_, m) = client.post(&format!("/projects/{pid}/generate"), json!({ "target": target }));
            let units = m["data"]["units"].as_array().unwrap();
            assert!(!units.is_empty());
            for unit in units {
                let path = out_dir.join(target).join(unit["filename"].as_str().unwrap());
                assert_eq!(
                    text(&std::fs::read(&path).unwrap()),
                    unit["text"].as_str().unwrap(),
                    "{name}/{target}"
                );
            }
            let manifest: Value =
                serde_json::from_slice(&std::fs::read(out_dir.join(target).join("manifest.json")).unwrap()).unwrap();
            assert_eq!(manifest, m["data"], "{name}/{target}");
        }
    }
}

#[test]
fn build_generated_dirs() {
    let dir = tempfile::tempdir().unwrap();
    let projects = replay_all(dir.path());
    let (_, functions) = projects.iter().find(|(n, _)| n == "functions").unwrap();
    assert!(stw(
        dir.path(),
        &["gen", functions.to_str().unwrap(), "--all-targets", "-o", "out"]
    )
    .status
    .success());
    let out = stw(dir.path(), &["--json", "build", "out", "--all-targets"]);
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    let expected_ok = available("c") && available("python");
    assert_eq!(out.status.code(), Some(if expected_ok { 0 } else { 4 }), "{report}");
    let targets: Vec<&str> = report["items"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["target"].as_str().unwrap())
        .collect();
    assert!(targets.contains(&"c") && targets.contains(&"python"));
    if available("c") {
        assert!(dir.path().join("out/c/main").is_file());
        let single = stw(dir.path(), &["build", "out/c", "--target", "c"]);
        assert!(single.status.success(), "{}", text(&single.stderr));
    }
    let wrong = stw(dir.path(), &["build", "out/c", "--target", "python"]);
    assert_eq!(wrong.status.code(), Some(64));
}

/// Every command's `--json` report carries the same documented keys.
#[test]
fn json_reports_have_stable_keys() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let runs: Vec<Vec<&str>> = vec![
        vec!["--json", "init", "ws"],
        vec!["--json", "pack", "validate", "ws/packs/reference.pack.json"],
        vec!["--json", "replay", "ws/hello.session.json", "-o", "hello.stw.json"],
        vec!["--json", "gen", "hello.stw.json", "--target", "python", "-o", "gen"],
        vec!["--json", "build", "gen", "--target", "python"],
        vec!["--json", "run", "hello.stw.json", "--target", "python"],
        vec!["--json", "steps", "hello.stw.json"],
        vec!["--json", "tree", "hello.stw.json", "--goal", "Main"],
        vec!["--json", "steps", "missing.stw.json"],
    ];
    for args in runs {
        let out = stw(d, &args);
        let report: Value =
            serde_json::from_slice(&out.stdout).unwrap_or_else(|e| panic!("{args:?}: {e}: {}", text(&out.stdout)));
        let keys: Vec<&str> = report.as_object().unwrap().keys().map(String::as_str).collect();
        assert_eq!(
            keys,
            ["args", "command", "error", "exit_code", "items", "outcome", "summary"],
            "{args:?}"
        );
        assert_eq!(
            report["exit_code"].as_i64(),
            out.status.code().map(i64::from),
            "{args:?}"
        );
        assert_eq!(report["outcome"] == "ok", out.status.success(), "{args:?}");
        assert_eq!(report["error"].is_null(), out.status.success(), "{args:?}");
    }
}

fn write_session(dir: &Path, name: &str, actions: Value) -> PathBuf {
    let path = dir.join(format!("{name}.session.json"));
    let script = json!({ "format": 1, "project": name, "targets": ["python", "c"], "actions": actions });
    std::fs::write(&path, serde_json::to_vec_pretty(&script).unwrap()).unwrap();
    path
}

#[test]
fn exit_code_map() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let code = |args: &[&str]| stw(d, args).status.code();

    assert_eq!(code(&["replay"]), Some(64));
    assert_eq!(code(&["steps", "nowhere.stw.json"]), Some(64));
    assert_eq!(code(&["--help"]), Some(0));

    std::fs::write(d.join("corrupt.stw.json"), "{\"format\": 1}").unwrap();
    assert_eq!(code(&["steps", "corrupt.stw.json"]), Some(2));
    let bad = write_session(
        d,
        "bad",
        json!([{"action": "create_goal", "name": "Main"}, {"action": "apply", "goal": "Main", "anchor": {"socket": "body"}, "component": "nope"}]),
    );
    let out = stw(d, &["replay", bad.to_str().unwrap(), "-o", "bad.stw.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(text(&out.stderr).contains("error[UnknownComponent]: action 1"));
    assert!(!d.join("bad.stw.json").exists());

    let spin = write_session(
        d,
        "spin",
        json!([{"action": "create_goal", "name": "Main"}, {"action": "apply", "goal": "Main", "anchor": {"socket": "body"}, "component": "while", "bindings": {"cond": "1"}}]),
    );
    assert_eq!(
        code(&[
            "replay",
            spin.to_str().unwrap(),
            "-o",
            "spin.stw.json",
            "--target",
            "python"
        ]),
        Some(0)
    );
    assert_eq!(code(&["gen", "spin.stw.json", "--target", "c", "-o", "x"]), Some(3));

    let out = Command::new(STW)
        .args(["run", "spin.stw.json", "--target", "python"])
        .current_dir(d)
        .env("STW_TOOLCHAIN_PYTHON_PROBE", "stw-no-such-tool")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(4));
    assert!(text(&out.stderr).contains("error[ToolchainMissing]"));

    if available("python") {
        let out = stw(d, &["run", "spin.stw.json", "--target", "python", "--timeout", "0.5"]);
        assert_eq!(out.status.code(), Some(5));
        assert!(text(&out.stderr).contains("error[Timeout]"));
    }
}

#[cfg(unix)]
#[test]
fn serve_until_sigterm() {
    let mut child = Command::new(STW)
        .args(["serve", "--port", "0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    let client = common::Client::new(&url);
    assert_eq!(client.get("/health"), (200, json!({"status": "ok"})));
    let (_, list) = client.get("/components");
    assert_eq!(list.as_array().unwrap().len(), 18);

    Command::new("kill")
        .args(["-TERM", &child.id().to_string()])
        .status()
        .unwrap();
    let status = child.wait().unwrap();
    assert_eq!(status.code(), Some(0));
}

#[test]
fn serve_port_from_env() {
    let taken = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let port = taken.local_addr().unwrap().port().to_string();
    let out = Command::new(STW).arg("serve").env("STW_PORT", &port).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    assert!(text(&out.stderr).contains("error[BindFailure]"));
    assert!(text(&out.stderr).contains(&port));
}

#[test]
fn serve_with_empty_pack_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut child = Command::new(STW)
        .args(["--packs", dir.path().to_str().unwrap(), "serve", "--port", "0"])
        .stdout(Stdio::piped())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stdout.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().strip_prefix("listening on ").unwrap().to_string();
    assert_eq!(common::Client::new(&url).get("/components"), (200, json!([])));
    child.kill().unwrap();
    child.wait().unwrap();
}

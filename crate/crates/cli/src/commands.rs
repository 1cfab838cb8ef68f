use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use serde_json::{json, Value};

use stepwork_core::build::{
    self, artifact_name, build_file, detect_toolchain, RunError, RunOptions, RunReport, ToolchainConfig,
};
use stepwork_core::codegen::{generate_project, GenerationManifest};
use stepwork_core::component::{parse_pack, validate_pack, Registry, Severity};
use stepwork_core::persistence::{load_project, parse_session, replay_session, save_project};
use stepwork_core::reference;
use stepwork_core::steps::Project;
use stepwork_service::{serve, Engine, ServiceConfig};

use crate::report::{CliError, Output};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Packs and toolchains, loaded on first use.
pub struct Context {
    pub packs: Option<PathBuf>,
    pub toolchains: Option<PathBuf>,
    registry: Option<Registry>,
}

fn read(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::usage("InputUnreadable", format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::toolchain("IoFailure", format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::toolchain("IoFailure", format!("{}: {e}", path.display())))
}

impl Context {
    pub fn new(packs: Option<PathBuf>, toolchains: Option<PathBuf>) -> Self {
        Context {
            packs,
            toolchains,
            registry: None,
        }
    }

    pub fn registry(&mut self) -> Result<&Registry, CliError> {
        if self.registry.is_none() {
            self.registry = Some(match &self.packs {
                Some(dir) => Registry::load_dir(dir)?,
                None => reference::registry(),
            });
        }
        Ok(self.registry.as_ref().expect("just loaded"))
    }

    pub fn toolchains(&self) -> Result<ToolchainConfig, CliError> {
        let base = match &self.toolchains {
            Some(path) => ToolchainConfig::parse(&read(path)?)
                .map_err(|e| CliError::validation("InvalidToolchain", e.to_string()))?,
            None => reference::toolchains(),
        };
        base.with_env_overrides()
            .map_err(|e| CliError::validation("InvalidToolchain", e.to_string()))
    }

    fn project(&mut self, path: &Path) -> Result<Project, CliError> {
        let bytes = read(path)?;
        Ok(load_project(&bytes, self.registry()?)?)
    }
}

fn goal_counts(project: &Project, registry: &Registry) -> Result<(Vec<Value>, usize), CliError> {
    let mut items = Vec::new();
    let mut total = 0;
    for g in &project.goals {
        let n = g.count_user_steps(registry)?;
        total += n;
        items.push(json!({ "goal_id": g.goal_id, "name": g.name, "user_steps": n }));
    }
    Ok((items, total))
}

pub fn init(dir: &Path) -> Result<Output, CliError> {
    let files = [
        (dir.join("packs").join("reference.pack.json"), reference::PACK_JSON),
        (dir.join("toolchains.json"), reference::TOOLCHAINS_JSON),
        (
            dir.join("hello.session.json"),
            reference::session("hello").expect("bundled"),
        ),
    ];
    if let Some((p, _)) = files.iter().find(|(p, _)| p.exists()) {
        return Err(CliError::validation(
            "AlreadyExists",
            format!("{} already exists", p.display()),
        ));
    }
    let mut out = Output::default();
    for (path, text) in &files {
        write(path, text.as_bytes())?;
        out.line(format!("wrote {}", path.display()));
        out.items.push(json!({ "path": path }));
    }
    Ok(out)
}

pub fn pack_validate(file: &Path) -> Result<Output, CliError> {
    let pack = parse_pack(&read(file)?)?;
    let findings = validate_pack(&pack);
    let errors = findings.iter().filter(|f| f.severity == Severity::Error).count();
    let warnings = findings.len() - errors;
    let mut out = Output::default();
    for f in &findings {
        out.line(f.to_string());
        out.items.push(serde_json::to_value(f).expect("finding serializes"));
    }
    out.line(format!(
        "{}: {} components, {errors} errors, {warnings} warnings",
        pack.pack_id,
        pack.components.len()
    ));
    out.summary = json!({ "pack_id": pack.pack_id, "version": pack.version, "errors": errors, "warnings": warnings });
    if let Some(first) = findings.iter().find(|f| f.severity == Severity::Error) {
        out.failure = Some(CliError::validation(
            &first.code.to_string(),
            format!("{errors} error finding(s), first: {}", first.message),
        ));
    }
    Ok(out)
}

pub fn replay(ctx: &mut Context, session: &Path, output: &Path, targets: &[String]) -> Result<Output, CliError> {
    let script = parse_session(&read(session)?)?;
    let registry = ctx.registry()?;
    let targets: Vec<String> = if !targets.is_empty() {
        targets.to_vec()
    } else {
        script.targets.clone().unwrap_or_else(|| registry.target_ids())
    };
    let project = replay_session(&script, registry, &targets)?;
    write(output, &save_project(&project, registry))?;
    let (goals, total) = goal_counts(&project, registry)?;
    let mut out = Output::default();
    out.line(format!(
        "wrote {} (project {}, revision {}, {} goals, {total} user steps)",
        output.display(),
        project.project_id,
        project.revision,
        project.goals.len()
    ));
    out.items = goals;
    out.summary = json!({
        "project_id": project.project_id,
        "path": output,
        "revision": project.revision,
        "targets": project.targets,
        "total_user_steps": total,
    });
    Ok(out)
}

fn write_manifest(manifest: &GenerationManifest, dir: &Path, out: &mut Output) -> Result<(), CliError> {
    for unit in &manifest.units {
        let path = dir.join(&unit.filename);
        write(&path, unit.text.as_bytes())?;
        out.line(path.display().to_string());
        out.items.push(json!({
            "target": manifest.target,
            "goal_id": unit.goal_id,
            "filename": unit.filename,
            "path": path,
            "entry": unit.filename == manifest.entry,
        }));
    }
    let mut text = serde_json::to_vec_pretty(manifest).expect("manifest serializes");
    text.push(b'\n');
    write(&dir.join(MANIFEST_FILE), &text)
}

pub fn gen(ctx: &mut Context, project: &Path, target: Option<&str>, dir: &Path) -> Result<Output, CliError> {
    let p = ctx.project(project)?;
    let registry = ctx.registry()?;
    let mut out = Output::default();
    match target {
        Some(t) => {
            let manifest = generate_project(&p, registry, t)?;
            write_manifest(&manifest, dir, &mut out)?;
        }
        None => {
            // Generate everything before writing anything.
            let manifests = p
                .targets
                .iter()
                .map(|t| generate_project(&p, registry, t))
                .collect::<Result<Vec<_>, _>>()?;
            for m in &manifests {
                write_manifest(m, &dir.join(&m.target), &mut out)?;
            }
        }
    }
    out.summary = json!({ "project_id": p.project_id, "revision": p.revision, "dir": dir });
    Ok(out)
}

fn read_manifest(path: &Path) -> Result<GenerationManifest, CliError> {
    serde_json::from_slice(&read(path)?)
        .map_err(|e| CliError::validation("MalformedManifest", format!("{}: {e}", path.display())))
}

/// Generated directories under `dir`: `dir` itself and/or one subdirectory
/// per target, each holding a manifest.
fn find_manifests(dir: &Path, target: Option<&str>) -> Result<Vec<(PathBuf, GenerationManifest)>, CliError> {
    let mut found = Vec::new();
    let top = dir.join(MANIFEST_FILE);
    if top.is_file() {
        found.push((dir.to_path_buf(), read_manifest(&top)?));
    }
    let mut subdirs: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(|e| CliError::usage("InputUnreadable", format!("{}: {e}", dir.display())))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.join(MANIFEST_FILE).is_file())
        .collect();
    subdirs.sort();
    for sub in subdirs {
        let m = read_manifest(&sub.join(MANIFEST_FILE))?;
        found.push((sub, m));
    }
    match target {
        Some(t) => {
            let hit: Vec<_> = found.into_iter().filter(|(_, m)| m.target == t).take(1).collect();
            if hit.is_empty() {
                return Err(CliError::usage(
                    "ManifestNotFound",
                    format!("no generated `{t}` sources under {}", dir.display()),
                ));
            }
            Ok(hit)
        }
        None if found.is_empty() => Err(CliError::usage(
            "ManifestNotFound",
            format!("no {MANIFEST_FILE} under {}", dir.display()),
        )),
        None => Ok(found),
    }
}

fn build_dir(dir: &Path, manifest: &GenerationManifest, toolchains: &ToolchainConfig) -> Vec<Value> {
    let fail = |filename: &str, e: CliError| {
        json!({
            "target": manifest.target,
            "filename": filename,
            "success": false,
            "error": e,
        })
    };
    let Some(spec) = toolchains.get(&manifest.target) else {
        let e = CliError::toolchain(
            "ToolchainMissing",
            format!("no toolchain configured for `{}`", manifest.target),
        );
        return manifest.units.iter().map(|u| fail(&u.filename, e.clone())).collect();
    };
    if !detect_toolchain(spec).found {
        let e = CliError::toolchain(
            "ToolchainMissing",
            format!("toolchain for `{}` is not installed", manifest.target),
        );
        return manifest.units.iter().map(|u| fail(&u.filename, e.clone())).collect();
    }
    manifest
        .units
        .iter()
        .map(|unit| {
            let source = dir.join(&unit.filename);
            if !source.is_file() {
                return fail(
                    &unit.filename,
                    CliError::toolchain("IoFailure", format!("{} is missing", source.display())),
                );
            }
            match build_file(&source, &artifact_name(&unit.filename), spec, dir) {
                Ok(o) => json!({
                    "target": manifest.target,
                    "filename": unit.filename,
                    "success": o.success,
                    "artifact": o.artifact,
                    "diagnostics": o.diagnostics,
                    "exit_code": o.exit_code,
                }),
                Err(e) => fail(&unit.filename, e.into()),
            }
        })
        .collect()
}

pub fn build(ctx: &Context, dir: &Path, target: Option<&str>) -> Result<Output, CliError> {
    let toolchains = ctx.toolchains()?;
    let manifests = find_manifests(dir, target)?;
    // One thread per target directory; units within a target build in order.
    let results: Vec<Vec<Value>> = thread::scope(|s| {
        let handles: Vec<_> = manifests
            .iter()
            .map(|(d, m)| s.spawn(|| build_dir(d, m, &toolchains)))
            .collect();
        handles.into_iter().map(|h| h.join().expect("build thread")).collect()
    });
    let mut out = Output::default();
    for item in results.into_iter().flatten() {
        let ok = item["success"] == true;
        out.line(format!(
            "{} {}/{}",
            if ok { "ok    " } else { "FAILED" },
            item["target"].as_str().unwrap_or_default(),
            item["filename"].as_str().unwrap_or_default()
        ));
        if let Some(d) = item["diagnostics"].as_str() {
            out.stderr.extend_from_slice(d.as_bytes());
        }
        if let Some(m) = item["error"]["message"].as_str() {
            out.stderr.extend_from_slice(format!("{m}\n").as_bytes());
        }
        if !ok && out.failure.is_none() {
            let code = item["error"]["code"].as_str().unwrap_or("BuildFailed");
            out.failure = Some(CliError::toolchain(
                code,
                format!("building {} failed", item["filename"].as_str().unwrap_or_default()),
            ));
        }
        out.items.push(item);
    }
    let built = out.items.iter().filter(|i| i["success"] == true).count();
    out.summary = json!({ "built": built, "failed": out.items.len() - built });
    Ok(out)
}

pub fn run(
    ctx: &mut Context,
    project: &Path,
    target: &str,
    stdin: Option<&Path>,
    timeout: Option<Duration>,
) -> Result<Output, CliError> {
    let input = match stdin {
        Some(p) => read(p)?,
        None => Vec::new(),
    };
    let p = ctx.project(project)?;
    let manifest = generate_project(&p, ctx.registry()?, target)?;
    let toolchains = ctx.toolchains()?;
    let spec = toolchains
        .get(target)
        .ok_or_else(|| CliError::toolchain("ToolchainMissing", format!("no toolchain configured for `{target}`")))?;
    if !detect_toolchain(spec).found {
        return Err(CliError::toolchain(
            "ToolchainMissing",
            format!("toolchain for `{target}` is not installed"),
        ));
    }
    let workdir = tempfile::tempdir().map_err(|e| CliError::toolchain("IoFailure", e.to_string()))?;
    let mut out = Output::default();
    let mut entry = None;
    for unit in &manifest.units {
        let o = build::build(unit, spec, workdir.path())?;
        out.items.push(json!({
            "goal_id": unit.goal_id,
            "filename": unit.filename,
            "success": o.success,
            "diagnostics": o.diagnostics,
            "exit_code": o.exit_code,
        }));
        if let Some(d) = &o.diagnostics {
            out.stderr.extend_from_slice(d.as_bytes());
        }
        if unit.filename == manifest.entry {
            entry = Some(o);
        }
    }
    let entry = entry.expect("manifest names its entry unit");
    if !entry.success {
        out.failure = Some(CliError::toolchain(
            "BuildFailed",
            format!("building {} failed", manifest.entry),
        ));
        return Ok(out);
    }
    let options = RunOptions {
        timeout: timeout.unwrap_or(build::DEFAULT_TIMEOUT),
        ..RunOptions::default()
    };
    let (result, timed_out) = match build::run(&entry, spec, &input, options) {
        Ok(r) => (r, false),
        Err(RunError::Timeout { partial }) => (partial, true),
        Err(e) => return Err(e.into()),
    };
    out.stdout = result.stdout.clone();
    out.stderr.extend_from_slice(&result.stderr);
    let report = RunReport::new(&result, timed_out);
    if timed_out {
        out.failure = Some(CliError::runtime(
            "Timeout",
            format!("program killed after {} ms", report.wall_time_ms),
        ));
    } else if report.exit_code != 0 {
        out.failure = Some(CliError::runtime(
            "ProgramFailed",
            format!("program exited with {}", report.exit_code),
        ));
    }
    out.summary = json!({ "target": target, "entry": manifest.entry, "run": report });
    Ok(out)
}

pub fn steps(ctx: &mut Context, project: &Path) -> Result<Output, CliError> {
    let p = ctx.project(project)?;
    let (goals, total) = goal_counts(&p, ctx.registry()?)?;
    let mut out = Output::default();
    for g in &goals {
        out.line(format!(
            "{}\t{}",
            g["name"].as_str().unwrap_or_default(),
            g["user_steps"]
        ));
    }
    out.line(format!("total\t{total}"));
    out.items = goals;
    out.summary = json!({ "project_id": p.project_id, "total": total });
    Ok(out)
}

pub fn tree(ctx: &mut Context, project: &Path, goal: &str, ids: bool) -> Result<Output, CliError> {
    let p = ctx.project(project)?;
    let g = p
        .goal_by_name(goal)
        .or_else(|| p.goal(goal))
        .ok_or_else(|| CliError::validation("GoalNotFound", format!("goal `{goal}` not found")))?;
    let mut out = Output::default();
    for row in g.steps_outline() {
        let indent = "  ".repeat(row.depth);
        if ids {
            out.line(format!("{indent}{}  [{}]", row.label, row.step_id));
        } else {
            out.line(format!("{indent}{}", row.label));
        }
        out.items.push(serde_json::to_value(&row).expect("row serializes"));
    }
    out.summary = json!({ "goal_id": g.goal_id, "name": g.name });
    Ok(out)
}

pub struct ServeArgs {
    pub config: ServiceConfig,
    pub run_timeout: Option<Duration>,
}

/// Blocks until SIGINT/SIGTERM. `started` is called once the port is bound.
pub fn serve_blocking(ctx: &mut Context, args: ServeArgs, started: impl FnOnce(&str)) -> Result<(), CliError> {
    let mut engine = Engine::new(ctx.registry()?.clone(), ctx.toolchains()?);
    if let Some(t) = args.run_timeout {
        engine.run_timeout = t;
    }
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::toolchain("IoFailure", e.to_string()))?;
    rt.block_on(async {
        let handle = serve(&args.config, Arc::new(engine))
            .await
            .map_err(|e| CliError::usage("BindFailure", e.to_string()))?;
        started(&handle.base_url());
        handle
            .run_until_signal()
            .await
            .map_err(|e| CliError::toolchain("IoFailure", e.to_string()))
    })
}

use std::sync::Arc;
use std::time::Duration;

use axum::body::Bytes;
use axum::extract::rejection::QueryRejection;
use axum::extract::{Path, Query, State};
use axum::http::{header, HeaderValue, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, patch, post};
use axum::{Json, Router};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use stepwork_core::build::{self, detect_toolchain, RunError, RunOptions, RunReport};
use stepwork_core::codegen::{generate_project, GenerationManifest};
use stepwork_core::component::InteractionPageSchema;
use stepwork_core::persistence::{load_project, save_project};
use stepwork_core::steps::{Goal, Interaction, OutlineRow, Project};
use stepwork_core::RawBindings;

use crate::engine::Engine;
use crate::error::{ApiError, ErrorCode};

pub const REVISION_HEADER: &str = "x-stw-revision";

type AppState = State<Arc<Engine>>;
type ApiResult<T> = Result<T, ApiError>;

/// Payload plus the project revision it reflects.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Revisioned<T> {
    pub revision: u64,
    pub data: T,
}

fn ok<T: Serialize>(revision: u64, data: T) -> Json<Revisioned<T>> {
    Json(Revisioned { revision, data })
}

fn created<T: Serialize>(revision: u64, data: T) -> (StatusCode, Json<Revisioned<T>>) {
    (StatusCode::CREATED, ok(revision, data))
}

/// Bodies are parsed by hand so a bad body yields an `ApiError` regardless
/// of content type.
fn body<T: DeserializeOwned>(bytes: &Bytes) -> ApiResult<T> {
    serde_json::from_slice(bytes).map_err(|e| ApiError::malformed(format!("invalid request body: {e}")))
}

fn query<T>(q: Result<Query<T>, QueryRejection>) -> ApiResult<T> {
    q.map(|Query(t)| t)
        .map_err(|e| ApiError::malformed(format!("invalid query: {}", e.body_text())))
}

fn goal<'a>(project: &'a Project, gid: &str) -> ApiResult<&'a Goal> {
    project
        .goal(gid)
        .ok_or_else(|| ApiError::new(ErrorCode::GoalNotFound, format!("goal `{gid}` not found")))
}

#[derive(Serialize, Deserialize)]
pub struct GoalSummary {
    pub goal_id: String,
    pub name: String,
    pub user_steps: usize,
}

#[derive(Serialize, Deserialize)]
pub struct ProjectSummary {
    pub project_id: String,
    pub name: String,
    pub targets: Vec<String>,
    pub goals: Vec<GoalSummary>,
}

fn summary(engine: &Engine, p: &Project) -> ApiResult<ProjectSummary> {
    let goals = p
        .goals
        .iter()
        .map(|g| {
            Ok(GoalSummary {
                goal_id: g.goal_id.clone(),
                name: g.name.clone(),
                user_steps: g.count_user_steps(&engine.registry)?,
            })
        })
        .collect::<ApiResult<_>>()?;
    Ok(ProjectSummary {
        project_id: p.project_id.clone(),
        name: p.name.clone(),
        targets: p.targets.clone(),
        goals,
    })
}

pub fn api_router(engine: Arc<Engine>) -> Router {
    let project = "/projects/{pid}";
    let goal = "/projects/{pid}/goals/{gid}";
    Router::new()
        .route("/health", get(health))
        .route("/components", get(components))
        .route("/components/{id}/page", get(component_page))
        .route("/projects", get(list_projects).post(create_project))
        .route(project, get(get_project))
        .route(&format!("{project}/goals"), post(create_goal))
        .route(goal, get(get_goal))
        .route(&format!("{goal}/tree"), get(goal_tree))
        .route(&format!("{goal}/interactions"), post(apply))
        .route(&format!("{goal}/interactions/{{iid}}"), patch(edit).delete(delete))
        .route(&format!("{project}/generate"), post(generate))
        .route(&format!("{project}/build-run"), post(build_run))
        .route(&format!("{project}/steps-count"), get(steps_count))
        .route(&format!("{project}/file"), get(get_file).put(put_file))
        .fallback(|| async { ApiError::not_found("no such endpoint") })
        .method_not_allowed_fallback(|| async { ApiError::malformed("method not allowed for this endpoint") })
        .with_state(engine)
}

async fn health() -> Json<serde_json::Value> {
    Json(serde_json::json!({ "status": "ok" }))
}

#[derive(Deserialize)]
struct BrowseQuery {
    category: Option<String>,
    q: Option<String>,
}

async fn components(State(engine): AppState, q: Result<Query<BrowseQuery>, QueryRejection>) -> ApiResult<Response> {
    let q = query(q)?;
    let path: Option<Vec<String>> = q.category.as_deref().map(|c| {
        c.split(['/', ','])
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::to_string)
            .collect()
    });
    let found = engine.registry.browse(path.as_deref(), q.q.as_deref())?;
    Ok(Json(found).into_response())
}

#[derive(Serialize, Deserialize)]
pub struct PageView {
    pub component_id: String,
    pub display_name: String,
    pub category_path: Vec<String>,
    #[serde(flatten)]
    pub page: InteractionPageSchema,
}

async fn component_page(State(engine): AppState, Path(id): Path<String>) -> ApiResult<Json<PageView>> {
    let c = engine
        .registry
        .component(&id)
        .ok_or_else(|| ApiError::new(ErrorCode::UnknownComponent, format!("unknown component `{id}`")))?;
    Ok(Json(PageView {
        component_id: c.id.clone(),
        display_name: c.display_name.clone(),
        category_path: c.category_path.clone(),
        page: c.page.clone(),
    }))
}

async fn list_projects(State(engine): AppState) -> Json<Vec<String>> {
    Json(engine.project_ids())
}

#[derive(Deserialize)]
struct CreateProject {
    name: String,
    targets: Vec<String>,
}

async fn create_project(State(engine): AppState, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateProject = body(&raw)?;
    let p = engine.create_project(&req.name, &req.targets)?;
    Ok(created(p.revision, summary(&engine, &p)?))
}

async fn get_project(State(engine): AppState, Path(pid): Path<String>) -> ApiResult<impl IntoResponse> {
    engine.read(&pid, |p| Ok(ok(p.revision, summary(&engine, p)?)))
}

#[derive(Deserialize)]
struct CreateGoal {
    name: String,
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn create_goal(State(engine): AppState, Path(pid): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: CreateGoal = body(&raw)?;
    let (gid, revision) = engine.mutate(&pid, req.expected_revision, |p, registry| {
        Ok(p.create_goal(&req.name, registry)?)
    })?;
    Ok(created(revision, serde_json::json!({ "goal_id": gid })))
}

#[derive(Serialize, Deserialize)]
pub struct GoalView {
    pub goal_id: String,
    pub name: String,
    pub user_steps: usize,
    pub interactions: Vec<Interaction>,
}

async fn get_goal(State(engine): AppState, Path((pid, gid)): Path<(String, String)>) -> ApiResult<impl IntoResponse> {
    engine.read(&pid, |p| {
        let g = goal(p, &gid)?;
        Ok(ok(
            p.revision,
            GoalView {
                goal_id: g.goal_id.clone(),
                name: g.name.clone(),
                user_steps: g.count_user_steps(&engine.registry)?,
                interactions: g.interactions.clone(),
            },
        ))
    })
}

#[derive(Serialize, Deserialize)]
pub struct TreeView {
    pub goal_id: String,
    pub name: String,
    pub rows: Vec<OutlineRow>,
}

async fn goal_tree(State(engine): AppState, Path((pid, gid)): Path<(String, String)>) -> ApiResult<impl IntoResponse> {
    engine.read(&pid, |p| {
        let g = goal(p, &gid)?;
        Ok(ok(
            p.revision,
            TreeView {
                goal_id: g.goal_id.clone(),
                name: g.name.clone(),
                rows: g.steps_outline(),
            },
        ))
    })
}

#[derive(Deserialize)]
struct Apply {
    anchor: String,
    component_id: String,
    #[serde(default)]
    raw_bindings: RawBindings,
    expected_revision: u64,
}

#[derive(Serialize, Deserialize)]
pub struct InteractionView {
    pub interaction_id: String,
    pub bindings: stepwork_core::Bindings,
}

fn interaction_view(p: &Project, gid: &str, iid: &str) -> ApiResult<InteractionView> {
    let i = goal(p, gid)?
        .interaction(iid)
        .ok_or_else(|| ApiError::internal("interaction vanished after mutation"))?;
    Ok(InteractionView {
        interaction_id: i.interaction_id.clone(),
        bindings: i.bindings.clone(),
    })
}

async fn apply(
    State(engine): AppState,
    Path((pid, gid)): Path<(String, String)>,
    raw: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: Apply = body(&raw)?;
    let (view, revision) = engine.mutate(&pid, Some(req.expected_revision), |p, registry| {
        let iid = p.apply_raw(&gid, &req.anchor, &req.component_id, &req.raw_bindings, registry)?;
        interaction_view(p, &gid, &iid)
    })?;
    Ok(created(revision, view))
}

#[derive(Deserialize)]
struct Edit {
    #[serde(default)]
    raw_bindings: RawBindings,
    expected_revision: u64,
}

async fn edit(
    State(engine): AppState,
    Path((pid, gid, iid)): Path<(String, String, String)>,
    raw: Bytes,
) -> ApiResult<impl IntoResponse> {
    let req: Edit = body(&raw)?;
    let (view, revision) = engine.mutate(&pid, Some(req.expected_revision), |p, registry| {
        p.edit_interaction(&gid, &iid, &req.raw_bindings, registry)?;
        interaction_view(p, &gid, &iid)
    })?;
    Ok(ok(revision, view))
}

#[derive(Deserialize)]
struct DeleteQuery {
    #[serde(default)]
    cascade: bool,
    expected_revision: u64,
}

async fn delete(
    State(engine): AppState,
    Path((pid, gid, iid)): Path<(String, String, String)>,
    q: Result<Query<DeleteQuery>, QueryRejection>,
) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    let (removed, revision) = engine.mutate(&pid, Some(q.expected_revision), |p, _| {
        Ok(p.delete_interaction(&gid, &iid, q.cascade)?)
    })?;
    Ok(ok(revision, serde_json::json!({ "removed": removed })))
}

#[derive(Deserialize)]
struct TargetReq {
    target: String,
}

async fn generate(State(engine): AppState, Path(pid): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: TargetReq = body(&raw)?;
    engine.read(&pid, |p| {
        let manifest: GenerationManifest = generate_project(p, &engine.registry, &req.target)?;
        Ok(ok(p.revision, manifest))
    })
}

#[derive(Deserialize)]
struct BuildRunReq {
    target: String,
    #[serde(default)]
    stdin: String,
    /// Capped by the server's own limit.
    #[serde(default)]
    timeout_ms: Option<u64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct UnitBuild {
    pub goal_id: String,
    pub filename: String,
    pub success: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostics: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exit_code: Option<i32>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BuildRunReport {
    pub target: String,
    pub entry: String,
    pub builds: Vec<UnitBuild>,
    /// Absent when the entry unit failed to build.
    pub run: Option<RunReport>,
}

fn build_and_run(
    engine: &Engine,
    manifest: &GenerationManifest,
    stdin: &[u8],
    timeout: Duration,
) -> ApiResult<BuildRunReport> {
    let spec = engine.toolchains.get(&manifest.target).ok_or_else(|| {
        ApiError::new(
            ErrorCode::ToolchainMissing,
            format!("no toolchain configured for `{}`", manifest.target),
        )
    })?;
    if !detect_toolchain(spec).found {
        return Err(ApiError::new(
            ErrorCode::ToolchainMissing,
            format!("toolchain for `{}` is not installed", manifest.target),
        ));
    }
    let workdir = tempfile::tempdir().map_err(|e| ApiError::internal(format!("creating workdir: {e}")))?;
    let mut builds = Vec::new();
    let mut entry_outcome = None;
    for unit in &manifest.units {
        let outcome = build::build(unit, spec, workdir.path())?;
        builds.push(UnitBuild {
            goal_id: unit.goal_id.clone(),
            filename: unit.filename.clone(),
            success: outcome.success,
            diagnostics: outcome.diagnostics.clone(),
            exit_code: outcome.exit_code,
        });
        if unit.filename == manifest.entry {
            entry_outcome = Some(outcome);
        }
    }
    let options = RunOptions {
        timeout,
        ..RunOptions::default()
    };
    let run = match entry_outcome.filter(|o| o.success) {
        None => None,
        Some(outcome) => Some(match build::run(&outcome, spec, stdin, options) {
            Ok(r) => RunReport::new(&r, false),
            Err(RunError::Timeout { partial }) => RunReport::new(&partial, true),
            Err(e) => return Err(e.into()),
        }),
    };
    Ok(BuildRunReport {
        target: manifest.target.clone(),
        entry: manifest.entry.clone(),
        builds,
        run,
    })
}

async fn build_run(State(engine): AppState, Path(pid): Path<String>, raw: Bytes) -> ApiResult<impl IntoResponse> {
    let req: BuildRunReq = body(&raw)?;
    let manifest = engine.read(&pid, |p| Ok(generate_project(p, &engine.registry, &req.target)?))?;
    let timeout = req
        .timeout_ms
        .map(Duration::from_millis)
        .map_or(engine.run_timeout, |t| t.min(engine.run_timeout));
    let revision = manifest.revision;
    let worker = engine.clone();
    let report = tokio::task::spawn_blocking(move || build_and_run(&worker, &manifest, req.stdin.as_bytes(), timeout))
        .await
        .map_err(|e| ApiError::internal(format!("build worker failed: {e}")))??;
    Ok(ok(revision, report))
}

#[derive(Serialize, Deserialize)]
pub struct StepsCount {
    pub goals: Vec<GoalSummary>,
    pub total: usize,
}

async fn steps_count(State(engine): AppState, Path(pid): Path<String>) -> ApiResult<impl IntoResponse> {
    engine.read(&pid, |p| {
        let s = summary(&engine, p)?;
        let total = s.goals.iter().map(|g| g.user_steps).sum();
        Ok(ok(p.revision, StepsCount { goals: s.goals, total }))
    })
}

async fn get_file(State(engine): AppState, Path(pid): Path<String>) -> ApiResult<Response> {
    engine.read(&pid, |p| {
        let bytes = save_project(p, &engine.registry);
        let mut resp = bytes.into_response();
        let headers = resp.headers_mut();
        headers.insert(header::CONTENT_TYPE, HeaderValue::from_static("application/json"));
        headers.insert(REVISION_HEADER, HeaderValue::from(p.revision));
        Ok(resp)
    })
}

#[derive(Deserialize)]
struct PutQuery {
    #[serde(default)]
    expected_revision: Option<u64>,
}

async fn put_file(
    State(engine): AppState,
    Path(pid): Path<String>,
    q: Result<Query<PutQuery>, QueryRejection>,
    raw: Bytes,
) -> ApiResult<impl IntoResponse> {
    let q = query(q)?;
    let project = load_project(&raw, &engine.registry)?;
    if project.project_id != pid {
        return Err(ApiError::new(
            ErrorCode::ProjectIdMismatch,
            format!("file holds project `{}`, not `{pid}`", project.project_id),
        ));
    }
    let view = summary(&engine, &project)?;
    let revision = project.revision;
    let created = engine.put_project(project, q.expected_revision)?;
    let status = if created { StatusCode::CREATED } else { StatusCode::OK };
    Ok((status, ok(revision, view)))
}

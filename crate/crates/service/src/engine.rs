use std::collections::BTreeMap;
use std::sync::Mutex;
use std::time::Duration;

use stepwork_core::build::{ToolchainConfig, DEFAULT_TIMEOUT};
use stepwork_core::component::Registry;
use stepwork_core::steps::{slug, Project};

use crate::error::ApiError;

/// Shared engine state: loaded packs, toolchains and the open projects.
///
/// Project mutations take the lock for their whole duration, so writes to a
/// project are serialized. Builds run on a snapshot outside the lock.
pub struct Engine {
    pub registry: Registry,
    pub toolchains: ToolchainConfig,
    /// Upper bound on a single program run.
    pub run_timeout: Duration,
    projects: Mutex<BTreeMap<String, Project>>,
}

impl Engine {
    pub fn new(registry: Registry, toolchains: ToolchainConfig) -> Self {
        Engine {
            registry,
            toolchains,
            run_timeout: DEFAULT_TIMEOUT,
            projects: Mutex::new(BTreeMap::new()),
        }
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, BTreeMap<String, Project>> {
        // A panic in a handler never leaves a half-applied project behind:
        // mutations replace whole values.
        self.projects.lock().unwrap_or_else(|e| e.into_inner())
    }

    /// Register a new project. Its id is the slug of the name, suffixed with
    /// `_2`, `_3`... when taken.
    pub fn create_project(&self, name: &str, targets: &[String]) -> Result<Project, ApiError> {
        let mut project = Project::create(name, targets, &self.registry)?;
        let mut projects = self.lock();
        let base = slug(name);
        let mut id = base.clone();
        let mut n = 2;
        while projects.contains_key(&id) {
            id = format!("{base}_{n}");
            n += 1;
        }
        project.project_id = id.clone();
        projects.insert(id, project.clone());
        Ok(project)
    }

    pub fn project_ids(&self) -> Vec<String> {
        self.lock().keys().cloned().collect()
    }

    pub fn read<T>(&self, id: &str, f: impl FnOnce(&Project) -> Result<T, ApiError>) -> Result<T, ApiError> {
        let projects = self.lock();
        let project = projects
            .get(id)
            .ok_or_else(|| ApiError::not_found(format!("project `{id}` not found")))?;
        f(project)
    }

    /// Run `f` on a copy of the project and commit it only on success. When
    /// `expected` is given it must match the current revision.
    pub fn mutate<T>(
        &self,
        id: &str,
        expected: Option<u64>,
        f: impl FnOnce(&mut Project, &Registry) -> Result<T, ApiError>,
    ) -> Result<(T, u64), ApiError> {
        let mut projects = self.lock();
        let project = projects
            .get_mut(id)
            .ok_or_else(|| ApiError::not_found(format!("project `{id}` not found")))?;
        if let Some(expected) = expected {
            if expected != project.revision {
                return Err(ApiError::conflict(project.revision, expected));
            }
        }
        let mut draft = project.clone();
        let out = f(&mut draft, &self.registry)?;
        let revision = draft.revision;
        *project = draft;
        Ok((out, revision))
    }

    /// Insert or replace a whole project, e.g. from an uploaded file.
    /// Returns true when it did not exist before.
    pub fn put_project(&self, project: Project, expected: Option<u64>) -> Result<bool, ApiError> {
        let mut projects = self.lock();
        let existing = projects.get(&project.project_id);
        if let (Some(current), Some(expected)) = (existing, expected) {
            if current.revision != expected {
                return Err(ApiError::conflict(current.revision, expected));
            }
        }
        let created = existing.is_none();
        projects.insert(project.project_id.clone(), project);
        Ok(created)
    }
}

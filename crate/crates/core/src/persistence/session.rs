use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::component::Registry;
use crate::steps::{Project, StepsError};
use crate::value::RawBindings;

pub const SESSION_FORMAT: u32 = 1;

/// Socket path of an anchor: the socket named `socket` owned by the
/// interaction at ledger position `owner` of the goal, or the goal root when
/// `owner` is absent. Scripts never mention raw step ids.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnchorSelector {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<usize>,
    pub socket: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "snake_case")]
pub enum Action {
    CreateGoal {
        name: String,
    },
    Apply {
        goal: String,
        anchor: AnchorSelector,
        component: String,
        #[serde(default)]
        bindings: RawBindings,
    },
    Edit {
        goal: String,
        /// Ledger position at the time the action runs.
        interaction: usize,
        #[serde(default)]
        bindings: RawBindings,
    },
    Delete {
        goal: String,
        interaction: usize,
        #[serde(default)]
        cascade: bool,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionScript {
    pub format: u32,
    pub project: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets: Option<Vec<String>>,
    pub actions: Vec<Action>,
}

impl SessionScript {
    pub fn new(project: &str) -> Self {
        SessionScript {
            format: SESSION_FORMAT,
            project: project.to_string(),
            targets: None,
            actions: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum ReplayError {
    #[error("malformed session script: {0}")]
    Malformed(String),
    #[error("unsupported session format {0}")]
    UnsupportedFormat(u64),
    #[error("creating the project: {0}")]
    Project(StepsError),
    #[error("action {index}: {source}")]
    Action {
        index: usize,
        #[source]
        source: StepsError,
    },
}

pub fn parse_session(bytes: &[u8]) -> Result<SessionScript, ReplayError> {
    let raw: serde_json::Value = serde_json::from_slice(bytes).map_err(|e| ReplayError::Malformed(e.to_string()))?;
    match raw.get("format").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(SESSION_FORMAT) => {}
        Some(v) => return Err(ReplayError::UnsupportedFormat(v)),
        None => return Err(ReplayError::Malformed("missing numeric `format` field".into())),
    }
    serde_json::from_value(raw).map_err(|e| ReplayError::Malformed(e.to_string()))
}

pub fn serialize_session(script: &SessionScript) -> String {
    let mut s = serde_json::to_string_pretty(script).expect("session serializes");
    s.push('\n');
    s
}

fn goal_id(project: &Project, name: &str) -> Result<String, StepsError> {
    project
        .goal_by_name(name)
        .map(|g| g.goal_id.clone())
        .ok_or_else(|| StepsError::GoalNotFound(name.to_string()))
}

fn interaction_id(project: &Project, goal: &str, ordinal: usize) -> Result<String, StepsError> {
    let g = project.goal(goal).expect("goal id resolved");
    g.interactions
        .get(ordinal)
        .map(|i| i.interaction_id.clone())
        .ok_or_else(|| StepsError::InteractionNotFound(format!("#{ordinal}")))
}

/// Run one action. Returns the interaction it created or edited, if any.
pub(crate) fn run_action(
    project: &mut Project,
    action: &Action,
    registry: &Registry,
) -> Result<Option<String>, StepsError> {
    match action {
        Action::CreateGoal { name } => {
            project.create_goal(name, registry)?;
            Ok(None)
        }
        Action::Apply {
            goal,
            anchor,
            component,
            bindings,
        } => {
            let gid = goal_id(project, goal)?;
            let step = project
                .goal(&gid)
                .expect("goal id resolved")
                .resolve_anchor(anchor.owner, &anchor.socket)?;
            project.apply_raw(&gid, &step, component, bindings, registry).map(Some)
        }
        Action::Edit {
            goal,
            interaction,
            bindings,
        } => {
            let gid = goal_id(project, goal)?;
            let iid = interaction_id(project, &gid, *interaction)?;
            project.edit_interaction(&gid, &iid, bindings, registry)?;
            Ok(Some(iid))
        }
        Action::Delete {
            goal,
            interaction,
            cascade,
        } => {
            let gid = goal_id(project, goal)?;
            let iid = interaction_id(project, &gid, *interaction)?;
            project.delete_interaction(&gid, &iid, *cascade)?;
            Ok(None)
        }
    }
}

/// Run a script through the steps-tree operations. All or nothing: the first
/// failing action aborts the replay and is reported with its index.
pub fn replay_session(script: &SessionScript, registry: &Registry, targets: &[String]) -> Result<Project, ReplayError> {
    let mut project = Project::create(&script.project, targets, registry).map_err(ReplayError::Project)?;
    for (index, action) in script.actions.iter().enumerate() {
        run_action(&mut project, action, registry).map_err(|source| ReplayError::Action { index, source })?;
    }
    Ok(project)
}

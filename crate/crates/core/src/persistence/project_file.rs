use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::component::Registry;
use crate::steps::{apply_to_goal, bindings_conform, Goal, Project, StepNode, StepsError};

pub const PROJECT_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("malformed file: {0}")]
    MalformedFile(String),
    #[error("unsupported format version {0}")]
    UnsupportedFormatVersion(u64),
    #[error("pack `{0}` is not loaded")]
    MissingPack(String),
    #[error("corrupt ledger in goal `{goal}`: {reason}")]
    CorruptLedger { goal: String, reason: String },
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PackRef {
    pub pack_id: String,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectFile {
    pub format: u32,
    pub packs: Vec<PackRef>,
    pub project: Project,
}

/// Packs the project depends on: the root pack plus every pack providing a
/// component in some ledger. Sorted by id.
fn pack_refs(project: &Project, registry: &Registry) -> Vec<PackRef> {
    let mut refs: Vec<PackRef> = Vec::new();
    let mut add = |pack: &crate::component::ComponentPack| {
        let r = PackRef {
            pack_id: pack.pack_id.clone(),
            version: pack.version.clone(),
        };
        if !refs.contains(&r) {
            refs.push(r);
        }
    };
    if let Some(root) = registry.root_pack() {
        add(root);
    }
    for goal in &project.goals {
        for i in &goal.interactions {
            if let Some(p) = registry.pack_of(&i.component_id) {
                add(p);
            }
        }
    }
    refs.sort();
    refs
}

/// Canonical bytes: fixed key order, sorted bindings, two-space indent and a
/// trailing newline.
pub fn save_project(project: &Project, registry: &Registry) -> Vec<u8> {
    let file = ProjectFile {
        format: PROJECT_FORMAT,
        packs: pack_refs(project, registry),
        project: project.clone(),
    };
    let mut out = serde_json::to_vec_pretty(&file).expect("project serializes");
    out.push(b'\n');
    out
}

pub fn load_project(bytes: &[u8], registry: &Registry) -> Result<Project, PersistError> {
    let raw: serde_json::Value =
        serde_json::from_slice(bytes).map_err(|e| PersistError::MalformedFile(e.to_string()))?;
    match raw.get("format").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PROJECT_FORMAT) => {}
        Some(v) => return Err(PersistError::UnsupportedFormatVersion(v)),
        None => return Err(PersistError::MalformedFile("missing numeric `format` field".into())),
    }
    let file: ProjectFile = serde_json::from_value(raw).map_err(|e| PersistError::MalformedFile(e.to_string()))?;

    for r in &file.packs {
        match registry.pack(&r.pack_id) {
            Some(p) if p.version == r.version => {}
            _ => return Err(PersistError::MissingPack(format!("{}@{}", r.pack_id, r.version))),
        }
    }
    for goal in &file.project.goals {
        verify_goal(goal, registry)?;
    }
    Ok(file.project)
}

/// Rebuild the goal from its ledger and compare with the stored tree. This
/// re-renders every label, so template drift between pack versions is
/// reported here too.
fn verify_goal(goal: &Goal, registry: &Registry) -> Result<(), PersistError> {
    let corrupt = |reason: String| PersistError::CorruptLedger {
        goal: goal.name.clone(),
        reason,
    };
    let mut rebuilt = Goal {
        goal_id: goal.goal_id.clone(),
        name: goal.name.clone(),
        root: StepNode {
            children: Vec::new(),
            ..goal.root.clone()
        },
        interactions: Vec::new(),
        next_sequence: 0,
    };
    if goal.root.owner.is_some() || goal.root.step_id != crate::steps::ROOT_STEP_ID || goal.root.label != goal.name {
        return Err(corrupt("root node does not match the goal".into()));
    }
    let root_socket = registry.root_component().and_then(|c| c.step_spec.socket.clone());
    if goal.root.socket != root_socket {
        return Err(corrupt("root socket does not match the root component".into()));
    }

    let mut last_sequence = None;
    for (pos, i) in goal.interactions.iter().enumerate() {
        if last_sequence.is_some_and(|s| i.sequence <= s) {
            return Err(corrupt(format!("interaction {pos} is out of sequence order")));
        }
        last_sequence = Some(i.sequence);
        let component = registry
            .component(&i.component_id)
            .ok_or_else(|| corrupt(format!("unknown component `{}`", i.component_id)))?;
        if !bindings_conform(&component.page, &i.bindings) {
            return Err(corrupt(format!(
                "bindings of `{}` do not fit its page",
                i.interaction_id
            )));
        }
        let id = apply_to_goal(&mut rebuilt, &i.anchor, component, i.bindings.clone(), i.sequence)
            .map_err(|e: StepsError| corrupt(format!("replaying `{}`: {e}", i.interaction_id)))?;
        if id != i.interaction_id {
            return Err(corrupt(format!(
                "interaction id `{}` does not match its sequence",
                i.interaction_id
            )));
        }
    }
    if goal.next_sequence < rebuilt.next_sequence {
        return Err(corrupt("next_sequence is behind the ledger".into()));
    }
    if rebuilt.root != goal.root {
        return Err(corrupt(
            "steps tree differs from the tree rebuilt from the ledger".into(),
        ));
    }
    Ok(())
}

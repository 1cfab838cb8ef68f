//! The program under construction: projects, goals, steps trees and the
//! interaction ledger.
//!
//! Every non-root step node is owned by exactly one interaction. Children of
//! an interaction anchor into one of its named sockets and are appended to
//! that socket's node. Step ids are deterministic: `s{sequence}.{index}`
//! where `index` is the pre-order position in the component's step spec.
//!
//! All mutations are atomic: they run against a copy and only replace the
//! goal when every check passed, so a failed call leaves tree, ledger and
//! revision untouched.

mod bindings;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codegen::mask::{self, MaskError, MaskedTemplate};
use crate::component::{ComponentDefinition, NodeKind, Registry, StepTemplate};
use crate::value::{Bindings, RawBindings, Value};

pub use bindings::{bindings_conform, validate_bindings, FieldError, FieldErrorReason};

pub const ROOT_STEP_ID: &str = "root";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepsError {
    #[error("a project needs at least one target")]
    EmptyTargetSet,
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("goal name cannot be empty")]
    EmptyGoalName,
    #[error("a goal named `{0}` already exists")]
    DuplicateGoalName(String),
    #[error("goal `{0}` not found")]
    GoalNotFound(String),
    #[error("anchor step `{0}` not found")]
    AnchorNotFound(String),
    #[error("anchor step `{0}` is not a container with a socket")]
    AnchorNotContainer(String),
    #[error("interaction `{0}` not found")]
    InteractionNotFound(String),
    #[error("interaction has dependents: {}", .0.join(", "))]
    HasDependents(Vec<String>),
    #[error("invalid fields: {}", fmt_fields(.0))]
    FieldErrors(Vec<FieldError>),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("component `{0}` is a program root and cannot be applied")]
    RootComponentNotApplicable(String),
    #[error("no pack with a root component is loaded")]
    NoRootComponent,
    #[error("bindings do not conform to the page of `{0}`")]
    BindingsMismatch(String),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

fn fmt_fields(errors: &[FieldError]) -> String {
    errors.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepNode {
    pub step_id: String,
    pub label: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub socket: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub owner: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<StepNode>,
}

impl StepNode {
    pub fn find(&self, step_id: &str) -> Option<&StepNode> {
        if self.step_id == step_id {
            return Some(self);
        }
        self.children.iter().find_map(|c| c.find(step_id))
    }

    fn find_mut(&mut self, step_id: &str) -> Option<&mut StepNode> {
        if self.step_id == step_id {
            return Some(self);
        }
        self.children.iter_mut().find_map(|c| c.find_mut(step_id))
    }

    /// Nodes in depth-first pre-order with their depth.
    pub fn walk(&self) -> Vec<(usize, &StepNode)> {
        fn go<'a>(n: &'a StepNode, depth: usize, out: &mut Vec<(usize, &'a StepNode)>) {
            out.push((depth, n));
            for c in &n.children {
                go(c, depth + 1, out);
            }
        }
        let mut out = Vec::new();
        go(self, 0, &mut out);
        out
    }

    /// True for nodes interactions may anchor into.
    pub fn accepts_children(&self) -> bool {
        self.kind == NodeKind::Container && self.socket.is_some()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interaction {
    pub interaction_id: String,
    pub component_id: String,
    /// Step id of the socket node this interaction was applied into.
    pub anchor: String,
    pub bindings: Bindings,
    pub sequence: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Goal {
    pub goal_id: String,
    pub name: String,
    pub root: StepNode,
    pub interactions: Vec<Interaction>,
    /// Sequence stamp for the next interaction. Never reused after deletes.
    pub next_sequence: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutlineRow {
    pub depth: usize,
    pub step_id: String,
    pub label: String,
    pub kind: NodeKind,
    pub socket: Option<String>,
    pub owner: Option<String>,
}

impl Goal {
    pub fn interaction(&self, id: &str) -> Option<&Interaction> {
        self.interactions.iter().find(|i| i.interaction_id == id)
    }

    pub fn find_step(&self, step_id: &str) -> Option<&StepNode> {
        self.root.find(step_id)
    }

    /// Depth-first pre-order rows, root at depth 0.
    pub fn steps_outline(&self) -> Vec<OutlineRow> {
        self.root
            .walk()
            .into_iter()
            .map(|(depth, n)| OutlineRow {
                depth,
                step_id: n.step_id.clone(),
                label: n.label.clone(),
                kind: n.kind,
                socket: n.socket.clone(),
                owner: n.owner.clone(),
            })
            .collect()
    }

    /// User steps: the sum over the ledger of each interaction's
    /// instantiated node count.
    pub fn count_user_steps(&self, registry: &Registry) -> Result<usize, StepsError> {
        self.interactions
            .iter()
            .map(|i| {
                registry
                    .component(&i.component_id)
                    .map(|c| c.step_spec.node_count())
                    .ok_or_else(|| StepsError::UnknownComponent(i.component_id.clone()))
            })
            .sum()
    }

    /// Step id of socket `socket` owned by the interaction at ledger
    /// position `owner` (the goal root when `None`).
    pub fn resolve_anchor(&self, owner: Option<usize>, socket: &str) -> Result<String, StepsError> {
        let describe = || match owner {
            Some(o) => format!("#{o}/{socket}"),
            None => format!("root/{socket}"),
        };
        match owner {
            None => {
                if self.root.socket.as_deref() == Some(socket) {
                    Ok(self.root.step_id.clone())
                } else {
                    Err(StepsError::AnchorNotFound(describe()))
                }
            }
            Some(ordinal) => {
                let i = self
                    .interactions
                    .get(ordinal)
                    .ok_or_else(|| StepsError::AnchorNotFound(describe()))?;
                self.root
                    .walk()
                    .into_iter()
                    .find(|(_, n)| n.owner.as_deref() == Some(&i.interaction_id) && n.socket.as_deref() == Some(socket))
                    .map(|(_, n)| n.step_id.clone())
                    .ok_or_else(|| StepsError::AnchorNotFound(describe()))
            }
        }
    }

    /// Top node of the subtree owned by `interaction`.
    fn owned_root_index(&self, interaction: &Interaction) -> Option<(String, usize)> {
        let anchor = self.root.find(&interaction.anchor)?;
        anchor
            .children
            .iter()
            .position(|c| c.owner.as_deref() == Some(&interaction.interaction_id))
            .map(|idx| (anchor.step_id.clone(), idx))
    }
}

fn label_builtins(goal_name: &str, step_id: &str) -> BTreeMap<String, Value> {
    [
        ("goal_name".to_string(), Value::Text(goal_name.to_string())),
        ("step_id".to_string(), Value::Text(step_id.to_string())),
        ("indent".to_string(), Value::Text(String::new())),
    ]
    .into()
}

fn render_label(template: &str, bindings: &Bindings, goal_name: &str, step_id: &str) -> Result<String, MaskError> {
    mask::expand_template(
        &MaskedTemplate::new(template),
        bindings,
        &label_builtins(goal_name, step_id),
    )
}

/// Instantiate a step spec for one interaction.
pub(crate) fn instantiate(
    spec: &StepTemplate,
    sequence: u64,
    interaction_id: &str,
    bindings: &Bindings,
    goal_name: &str,
) -> Result<StepNode, MaskError> {
    fn go(
        spec: &StepTemplate,
        next: &mut usize,
        sequence: u64,
        owner: &str,
        bindings: &Bindings,
        goal_name: &str,
    ) -> Result<StepNode, MaskError> {
        let step_id = format!("s{sequence}.{next}");
        *next += 1;
        let label = render_label(&spec.label, bindings, goal_name, &step_id)?;
        let children = spec
            .children
            .iter()
            .map(|c| go(c, next, sequence, owner, bindings, goal_name))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(StepNode {
            step_id,
            label,
            kind: spec.kind,
            socket: spec.socket.clone(),
            owner: Some(owner.to_string()),
            children,
        })
    }
    go(spec, &mut 0, sequence, interaction_id, bindings, goal_name)
}

/// Re-render labels of the nodes `owner` instantiated from `spec`, leaving
/// children anchored by other interactions in place.
fn rerender(
    spec: &StepTemplate,
    node: &mut StepNode,
    owner: &str,
    bindings: &Bindings,
    goal_name: &str,
) -> Result<(), MaskError> {
    node.label = render_label(&spec.label, bindings, goal_name, &node.step_id)?;
    let owned = node.children.iter_mut().filter(|c| c.owner.as_deref() == Some(owner));
    for (child_spec, child) in spec.children.iter().zip(owned) {
        rerender(child_spec, child, owner, bindings, goal_name)?;
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Project {
    pub project_id: String,
    pub name: String,
    pub targets: Vec<String>,
    pub goals: Vec<Goal>,
    pub revision: u64,
}

/// Lowercase ASCII identifier derived from a display name.
pub fn slug(name: &str) -> String {
    let mut out = String::new();
    for c in name.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.is_empty() && !out.ends_with('_') {
            out.push('_');
        }
    }
    let out = out.trim_end_matches('_').to_string();
    if out.is_empty() {
        "project".into()
    } else {
        out
    }
}

impl Project {
    /// New empty project at revision 0. Every target must be declared by a
    /// loaded pack; duplicates are dropped keeping first occurrence.
    pub fn create(name: &str, targets: &[String], registry: &Registry) -> Result<Project, StepsError> {
        if targets.is_empty() {
            return Err(StepsError::EmptyTargetSet);
        }
        let mut ordered: Vec<String> = Vec::new();
        for t in targets {
            if registry.target(t).is_none() {
                return Err(StepsError::UnknownTarget(t.clone()));
            }
            if !ordered.contains(t) {
                ordered.push(t.clone());
            }
        }
        Ok(Project {
            project_id: slug(name),
            name: name.to_string(),
            targets: ordered,
            goals: Vec::new(),
            revision: 0,
        })
    }

    pub fn goal(&self, goal_id: &str) -> Option<&Goal> {
        self.goals.iter().find(|g| g.goal_id == goal_id)
    }

    pub fn goal_by_name(&self, name: &str) -> Option<&Goal> {
        self.goals.iter().find(|g| g.name == name)
    }

    fn goal_index(&self, goal_id: &str) -> Result<usize, StepsError> {
        self.goals
            .iter()
            .position(|g| g.goal_id == goal_id)
            .ok_or_else(|| StepsError::GoalNotFound(goal_id.to_string()))
    }

    /// Append a goal whose root container is labeled with the goal name.
    pub fn create_goal(&mut self, name: &str, registry: &Registry) -> Result<String, StepsError> {
        if name.trim().is_empty() {
            return Err(StepsError::EmptyGoalName);
        }
        if self.goal_by_name(name).is_some() {
            return Err(StepsError::DuplicateGoalName(name.to_string()));
        }
        let root_component = registry.root_component().ok_or(StepsError::NoRootComponent)?;
        let goal_id = format!("g{}", self.goals.len() + 1);
        self.goals.push(Goal {
            goal_id: goal_id.clone(),
            name: name.to_string(),
            root: StepNode {
                step_id: ROOT_STEP_ID.to_string(),
                label: name.to_string(),
                kind: NodeKind::Container,
                socket: root_component.step_spec.socket.clone(),
                owner: None,
                children: Vec::new(),
            },
            interactions: Vec::new(),
            next_sequence: 0,
        });
        self.revision += 1;
        Ok(goal_id)
    }

    fn mutate<T>(
        &mut self,
        goal_id: &str,
        f: impl FnOnce(&mut Goal) -> Result<T, StepsError>,
    ) -> Result<T, StepsError> {
        let idx = self.goal_index(goal_id)?;
        let mut draft = self.goals[idx].clone();
        let out = f(&mut draft)?;
        self.goals[idx] = draft;
        self.revision += 1;
        Ok(out)
    }

    /// Instantiate `component` under `anchor` with already validated bindings.
    pub fn apply_interaction(
        &mut self,
        goal_id: &str,
        anchor: &str,
        component: &ComponentDefinition,
        bindings: Bindings,
        registry: &Registry,
    ) -> Result<String, StepsError> {
        if registry.root_component().is_some_and(|r| r.id == component.id) {
            return Err(StepsError::RootComponentNotApplicable(component.id.clone()));
        }
        if !bindings_conform(&component.page, &bindings) {
            return Err(StepsError::BindingsMismatch(component.id.clone()));
        }
        self.mutate(goal_id, |goal| {
            let sequence = goal.next_sequence;
            apply_to_goal(goal, anchor, component, bindings, sequence)
        })
    }

    /// Validate raw form values, then apply.
    pub fn apply_raw(
        &mut self,
        goal_id: &str,
        anchor: &str,
        component_id: &str,
        raw: &RawBindings,
        registry: &Registry,
    ) -> Result<String, StepsError> {
        let component = registry
            .component(component_id)
            .ok_or_else(|| StepsError::UnknownComponent(component_id.to_string()))?;
        let bindings = validate_bindings(&component.page, raw).map_err(StepsError::FieldErrors)?;
        self.apply_interaction(goal_id, anchor, component, bindings, registry)
    }

    /// Replace an interaction's bindings and re-render the labels it owns.
    pub fn edit_interaction(
        &mut self,
        goal_id: &str,
        interaction_id: &str,
        new_raw: &RawBindings,
        registry: &Registry,
    ) -> Result<Bindings, StepsError> {
        self.mutate(goal_id, |goal| {
            let pos = goal
                .interactions
                .iter()
                .position(|i| i.interaction_id == interaction_id)
                .ok_or_else(|| StepsError::InteractionNotFound(interaction_id.to_string()))?;
            let component_id = goal.interactions[pos].component_id.clone();
            let component = registry
                .component(&component_id)
                .ok_or(StepsError::UnknownComponent(component_id))?;
            let bindings = validate_bindings(&component.page, new_raw).map_err(StepsError::FieldErrors)?;
            let (anchor, idx) = goal
                .owned_root_index(&goal.interactions[pos])
                .ok_or_else(|| StepsError::InteractionNotFound(interaction_id.to_string()))?;
            let goal_name = goal.name.clone();
            let node = &mut goal.root.find_mut(&anchor).expect("anchor exists").children[idx];
            rerender(&component.step_spec, node, interaction_id, &bindings, &goal_name)?;
            goal.interactions[pos].bindings = bindings.clone();
            Ok(bindings)
        })
    }

    /// Remove an interaction and its owned subtree. Without `cascade`,
    /// refuses when other interactions are anchored inside that subtree.
    /// Returns removed interaction ids in ledger order.
    pub fn delete_interaction(
        &mut self,
        goal_id: &str,
        interaction_id: &str,
        cascade: bool,
    ) -> Result<Vec<String>, StepsError> {
        self.mutate(goal_id, |goal| {
            let interaction = goal
                .interaction(interaction_id)
                .ok_or_else(|| StepsError::InteractionNotFound(interaction_id.to_string()))?;
            let (anchor, idx) = goal
                .owned_root_index(interaction)
                .ok_or_else(|| StepsError::InteractionNotFound(interaction_id.to_string()))?;
            let anchor_node = goal.root.find_mut(&anchor).expect("anchor exists");
            let owners: Vec<String> = anchor_node.children[idx]
                .walk()
                .into_iter()
                .filter_map(|(_, n)| n.owner.clone())
                .collect();
            let dependents: Vec<String> = goal
                .interactions
                .iter()
                .filter(|i| i.interaction_id != interaction_id && owners.contains(&i.interaction_id))
                .map(|i| i.interaction_id.clone())
                .collect();
            if !cascade && !dependents.is_empty() {
                return Err(StepsError::HasDependents(dependents));
            }
            anchor_node.children.remove(idx);
            let removed: Vec<String> = goal
                .interactions
                .iter()
                .filter(|i| owners.contains(&i.interaction_id))
                .map(|i| i.interaction_id.clone())
                .collect();
            goal.interactions.retain(|i| !removed.contains(&i.interaction_id));
            Ok(removed)
        })
    }
}

/// Apply with an explicit sequence stamp. Also used to rebuild a goal from
/// its ledger when loading a project file.
pub(crate) fn apply_to_goal(
    goal: &mut Goal,
    anchor: &str,
    component: &ComponentDefinition,
    bindings: Bindings,
    sequence: u64,
) -> Result<String, StepsError> {
    let goal_name = goal.name.clone();
    let anchor_node = goal
        .root
        .find_mut(anchor)
        .ok_or_else(|| StepsError::AnchorNotFound(anchor.to_string()))?;
    if !anchor_node.accepts_children() {
        return Err(StepsError::AnchorNotContainer(anchor.to_string()));
    }
    let interaction_id = format!("i{sequence}");
    let node = instantiate(&component.step_spec, sequence, &interaction_id, &bindings, &goal_name)?;
    anchor_node.children.push(node);
    goal.interactions.push(Interaction {
        interaction_id: interaction_id.clone(),
        component_id: component.id.clone(),
        anchor: anchor.to_string(),
        bindings,
        sequence,
    });
    goal.next_sequence = goal.next_sequence.max(sequence + 1);
    Ok(interaction_id)
}

//! Component packs: the library of parameterized components a user applies
//! to build a program.
//!
//! A pack is a single JSON document (`*.pack.json`, `format: 1`). Packs are
//! inert data; templates are text in the mask language of
//! [`crate::codegen::mask`].

mod pack;
mod registry;
mod validate;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::value::Value;

pub use pack::{load_pack, parse_pack, serialize_pack, PackError, PACK_FORMAT};
pub use registry::{resolve_template, ComponentSummary, PackDirError, Registry, RegistryError};
pub(crate) use validate::{anchored, check_value};
pub use validate::{validate_pack, Finding, FindingCode, Severity, MAX_CATEGORY_DEPTH};

pub type TargetId = String;

/// Output sections of a generated source unit, in declaration order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Declarations,
    Body,
}

impl Section {
    pub fn as_str(self) -> &'static str {
        match self {
            Section::Declarations => "declarations",
            Section::Body => "body",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-target settings declared by a pack.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TargetInfo {
    pub id: TargetId,
    /// One indentation level.
    pub indent: String,
    pub extension: String,
    /// Line emitted into a socket with no children (e.g. `pass`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub empty_slot: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Category {
    pub label: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<Category>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentPack {
    pub format: u32,
    pub pack_id: String,
    pub version: String,
    pub targets: Vec<TargetInfo>,
    pub sections: Vec<Section>,
    /// Component wrapping every goal (program prologue and epilogue). Packs
    /// that only add components leave it out.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root_component: Option<String>,
    pub categories: Vec<Category>,
    pub components: Vec<ComponentDefinition>,
}

impl ComponentPack {
    pub fn component(&self, id: &str) -> Option<&ComponentDefinition> {
        self.components.iter().find(|c| c.id == id)
    }

    pub fn target(&self, id: &str) -> Option<&TargetInfo> {
        self.targets.iter().find(|t| t.id == id)
    }

    pub fn has_category(&self, path: &[String]) -> bool {
        if path.is_empty() {
            return false;
        }
        let mut level = &self.categories;
        for label in path {
            match level.iter().find(|c| &c.label == label) {
                Some(c) => level = &c.children,
                None => return false,
            }
        }
        true
    }

    /// `pack_id@version`.
    pub fn reference(&self) -> String {
        format!("{}@{}", self.pack_id, self.version)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ComponentDefinition {
    pub id: String,
    pub display_name: String,
    pub category_path: Vec<String>,
    pub page: InteractionPageSchema,
    pub step_spec: StepTemplate,
    /// Sections this component emits code into.
    pub emits: Vec<Section>,
    pub templates: Vec<CodeTemplate>,
}

impl ComponentDefinition {
    pub fn template(&self, target: &str, section: Section) -> Option<&CodeTemplate> {
        self.templates
            .iter()
            .find(|t| t.target == target && t.section == section)
    }

    /// Targets for which a template exists for every emitted section.
    pub fn supported_targets(&self) -> Vec<&str> {
        let mut out: Vec<&str> = Vec::new();
        for t in &self.templates {
            if !out.contains(&t.target.as_str()) && self.emits.iter().all(|s| self.template(&t.target, *s).is_some()) {
                out.push(&t.target);
            }
        }
        out
    }

    pub fn supports(&self, target: &str) -> bool {
        self.emits.iter().all(|s| self.template(target, *s).is_some())
    }
}

/// Ordered fields of the form a component presents.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InteractionPageSchema {
    pub fields: Vec<ParamField>,
}

impl InteractionPageSchema {
    pub fn field(&self, name: &str) -> Option<&ParamField> {
        self.fields.iter().find(|f| f.name == name)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FieldKind {
    Text,
    Integer,
    Boolean,
    Enum,
    /// List of text items.
    List,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    Range { min: i64, max: i64 },
    Pattern(String),
    Choices(Vec<String>),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamField {
    pub name: String,
    pub kind: FieldKind,
    #[serde(default)]
    pub required: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub default: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint: Option<Constraint>,
}

impl ParamField {
    pub fn choices(&self) -> &[String] {
        match &self.constraint {
            Some(Constraint::Choices(c)) => c,
            _ => &[],
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Container,
    Leaf,
}

/// One node of a component's step template tree. The tree has exactly one
/// root by construction.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepTemplate {
    pub label: String,
    pub kind: NodeKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub socket: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub children: Vec<StepTemplate>,
}

impl StepTemplate {
    /// Nodes in depth-first pre-order.
    pub fn preorder(&self) -> Vec<&StepTemplate> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.preorder());
        }
        out
    }

    pub fn node_count(&self) -> usize {
        1 + self.children.iter().map(StepTemplate::node_count).sum::<usize>()
    }

    /// Socket names in pre-order, duplicates kept.
    pub fn sockets(&self) -> Vec<&str> {
        self.preorder()
            .into_iter()
            .filter_map(|n| n.socket.as_deref())
            .collect()
    }
}

/// Masked template text for one (target, section).
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CodeTemplate {
    pub target: TargetId,
    pub section: Section,
    pub body: String,
    /// Socket name to its slot marker (`<%@name%>`) inside `body`.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub socket_slots: BTreeMap<String, String>,
}

impl CodeTemplate {
    /// Socket whose marker is the slot named `slot`.
    pub fn socket_for_slot(&self, slot: &str) -> Option<&str> {
        self.socket_slots
            .iter()
            .find(|(_, marker)| slot_marker_name(marker) == Some(slot))
            .map(|(socket, _)| socket.as_str())
    }
}

/// Name inside a `<%@name%>` marker.
pub fn slot_marker_name(marker: &str) -> Option<&str> {
    marker.trim().strip_prefix("<%@")?.strip_suffix("%>").map(str::trim)
}

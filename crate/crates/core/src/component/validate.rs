use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::sync::{Mutex, OnceLock};

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{
    slot_marker_name, Category, ComponentDefinition, ComponentPack, Constraint, FieldKind, NodeKind, ParamField,
    Section, StepTemplate,
};
use crate::codegen::mask::{self, Node, BUILTINS};
use crate::value::Value;

pub const MAX_CATEGORY_DEPTH: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Severity {
    Error,
    Warning,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum FindingCode {
    UnsupportedFormat,
    InvalidPackHeader,
    DuplicateTarget,
    InvalidSections,
    DuplicateCategory,
    CategoryTooDeep,
    DuplicateComponentId,
    UnknownCategory,
    DuplicateFieldName,
    ShadowedBuiltin,
    EmptyEnumChoices,
    ConstraintMismatch,
    UnsatisfiableConstraint,
    InvalidDefault,
    InvalidStepSpec,
    DuplicateSocket,
    UnknownTarget,
    UnknownSection,
    DuplicateTemplate,
    MalformedTemplate,
    UnboundMaskVariable,
    MissingSocketSlot,
    DuplicateSocketSlot,
    UnknownSocketSlot,
    IncompleteTargetTemplates,
    NoCompleteTarget,
    InvalidRootComponent,
    UnusedField,
}

impl fmt::Display for FindingCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Finding {
    pub severity: Severity,
    pub code: FindingCode,
    pub component: Option<String>,
    /// The offending name (variable, socket, category path, ...), if any.
    pub subject: Option<String>,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sev = match self.severity {
            Severity::Error => "error",
            Severity::Warning => "warning",
        };
        match &self.component {
            Some(c) => write!(f, "{sev}[{}] {c}: {}", self.code, self.message),
            None => write!(f, "{sev}[{}] {}", self.code, self.message),
        }
    }
}

struct Report {
    findings: Vec<Finding>,
}

impl Report {
    fn push(
        &mut self,
        severity: Severity,
        code: FindingCode,
        component: Option<&str>,
        subject: Option<&str>,
        message: String,
    ) {
        self.findings.push(Finding {
            severity,
            code,
            component: component.map(str::to_string),
            subject: subject.map(str::to_string),
            message,
        });
    }

    fn error(&mut self, code: FindingCode, component: Option<&str>, subject: Option<&str>, message: String) {
        self.push(Severity::Error, code, component, subject, message);
    }
}

/// Check every pack and component invariant. Returns an empty list iff the
/// pack is valid; never mutates the pack.
pub fn validate_pack(pack: &ComponentPack) -> Vec<Finding> {
    let mut r = Report { findings: Vec::new() };

    if pack.format != super::PACK_FORMAT {
        r.error(
            FindingCode::UnsupportedFormat,
            None,
            None,
            format!("pack format {} is not supported", pack.format),
        );
    }
    let version_re = Regex::new(r"^\d+\.\d+\.\d+([-+][0-9A-Za-z.-]+)?$").unwrap();
    if pack.pack_id.trim().is_empty() {
        r.error(FindingCode::InvalidPackHeader, None, None, "pack_id is empty".into());
    }
    if !version_re.is_match(&pack.version) {
        r.error(
            FindingCode::InvalidPackHeader,
            None,
            Some(&pack.version),
            format!("version `{}` is not a semantic version", pack.version),
        );
    }

    let mut seen_targets = Vec::new();
    for t in &pack.targets {
        if seen_targets.contains(&t.id.as_str()) {
            r.error(
                FindingCode::DuplicateTarget,
                None,
                Some(&t.id),
                format!("target `{}` declared twice", t.id),
            );
        }
        seen_targets.push(&t.id);
    }

    if pack.sections != [Section::Declarations, Section::Body] {
        r.error(
            FindingCode::InvalidSections,
            None,
            None,
            "format 1 packs declare sections [declarations, body]".into(),
        );
    }

    check_categories(&pack.categories, 1, &mut Vec::new(), &mut r);

    let mut seen_ids: Vec<&str> = Vec::new();
    for c in &pack.components {
        if seen_ids.contains(&c.id.as_str()) {
            r.error(
                FindingCode::DuplicateComponentId,
                Some(&c.id),
                Some(&c.id),
                format!("component id `{}` is not unique", c.id),
            );
        }
        seen_ids.push(&c.id);
        check_component(pack, c, &mut r);
    }

    if let Some(id) = &pack.root_component {
        match pack.component(id) {
            None => r.error(
                FindingCode::InvalidRootComponent,
                None,
                Some(id),
                format!("root component `{id}` is not defined"),
            ),
            Some(root) => check_root(pack, root, &mut r),
        }
    }

    r.findings
}

fn check_categories(cats: &[Category], depth: usize, path: &mut Vec<String>, r: &mut Report) {
    let mut seen: Vec<&str> = Vec::new();
    for c in cats {
        path.push(c.label.clone());
        let joined = path.join("/");
        if seen.contains(&c.label.as_str()) {
            r.error(
                FindingCode::DuplicateCategory,
                None,
                Some(&joined),
                format!("category `{joined}` declared twice"),
            );
        }
        seen.push(&c.label);
        if depth > MAX_CATEGORY_DEPTH {
            r.error(
                FindingCode::CategoryTooDeep,
                None,
                Some(&joined),
                format!("category `{joined}` is deeper than {MAX_CATEGORY_DEPTH} levels"),
            );
        }
        check_categories(&c.children, depth + 1, path, r);
        path.pop();
    }
}

fn check_field(c: &ComponentDefinition, f: &ParamField, r: &mut Report) {
    let id = Some(c.id.as_str());
    let name = Some(f.name.as_str());
    if BUILTINS.contains(&f.name.as_str()) {
        r.error(
            FindingCode::ShadowedBuiltin,
            id,
            name,
            format!("field `{}` shadows a builtin", f.name),
        );
    }
    let mut pattern = None;
    match (&f.constraint, f.kind) {
        (None, FieldKind::Enum) => r.error(
            FindingCode::EmptyEnumChoices,
            id,
            name,
            format!("enum field `{}` has no choices", f.name),
        ),
        (None, _) => {}
        (Some(Constraint::Choices(choices)), FieldKind::Enum) => {
            if choices.is_empty() {
                r.error(
                    FindingCode::EmptyEnumChoices,
                    id,
                    name,
                    format!("enum field `{}` has no choices", f.name),
                );
            }
        }
        (Some(Constraint::Range { min, max }), FieldKind::Integer) => {
            if min > max {
                r.error(
                    FindingCode::UnsatisfiableConstraint,
                    id,
                    name,
                    format!("field `{}` has empty range {min}..{max}", f.name),
                );
            }
        }
        (Some(Constraint::Pattern(p)), FieldKind::Text | FieldKind::List) => match anchored(p) {
            Ok(re) => pattern = Some(re),
            Err(e) => r.error(
                FindingCode::UnsatisfiableConstraint,
                id,
                name,
                format!("field `{}` has invalid pattern: {e}", f.name),
            ),
        },
        (Some(_), kind) => r.error(
            FindingCode::ConstraintMismatch,
            id,
            name,
            format!("constraint does not apply to {kind:?} field `{}`", f.name),
        ),
    }
    if let Some(default) = &f.default {
        if let Err(why) = check_value(f, default, pattern.as_ref()) {
            r.error(
                FindingCode::InvalidDefault,
                id,
                name,
                format!("default for `{}` {why}", f.name),
            );
        }
    }
}

/// Compile a text pattern so that it must match the whole value. Compiled
/// patterns are cached: packs are few and bindings are checked constantly.
pub(crate) fn anchored(pattern: &str) -> Result<Regex, regex::Error> {
    static CACHE: OnceLock<Mutex<HashMap<String, Regex>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(re) = cache.lock().expect("regex cache").get(pattern) {
        return Ok(re.clone());
    }
    let re = Regex::new(&format!("^(?:{pattern})$"))?;
    cache
        .lock()
        .expect("regex cache")
        .insert(pattern.to_string(), re.clone());
    Ok(re)
}

/// Type- and constraint-check a value against its field.
pub(crate) fn check_value(f: &ParamField, v: &Value, pattern: Option<&Regex>) -> Result<(), String> {
    match (f.kind, v) {
        (FieldKind::Text, Value::Text(s)) => match pattern {
            Some(re) if !re.is_match(s) => Err("does not match pattern".into()),
            _ => Ok(()),
        },
        (FieldKind::List, Value::List(items)) => match pattern {
            Some(re) if items.iter().any(|s| !re.is_match(s)) => Err("has an item not matching pattern".into()),
            _ => Ok(()),
        },
        (FieldKind::Integer, Value::Integer(i)) => match &f.constraint {
            Some(Constraint::Range { min, max }) if i < min || i > max => Err("is out of range".into()),
            _ => Ok(()),
        },
        (FieldKind::Boolean, Value::Boolean(_)) => Ok(()),
        (FieldKind::Enum, Value::Text(s)) => {
            if f.choices().contains(s) {
                Ok(())
            } else {
                Err("is not one of the choices".into())
            }
        }
        (kind, _) => Err(format!("does not type-check as {kind:?}")),
    }
}

fn check_step_spec(c: &ComponentDefinition, node: &StepTemplate, r: &mut Report) {
    let id = Some(c.id.as_str());
    if node.kind == NodeKind::Leaf && (!node.children.is_empty() || node.socket.is_some()) {
        r.error(
            FindingCode::InvalidStepSpec,
            id,
            Some(&node.label),
            format!("leaf step `{}` cannot have children or a socket", node.label),
        );
    }
    for child in &node.children {
        check_step_spec(c, child, r);
    }
}

fn check_component(pack: &ComponentPack, c: &ComponentDefinition, r: &mut Report) {
    let id = Some(c.id.as_str());

    if !pack.has_category(&c.category_path) {
        let path = c.category_path.join("/");
        r.error(
            FindingCode::UnknownCategory,
            id,
            Some(&path),
            format!("category `{path}` does not exist"),
        );
    }

    let mut names: Vec<&str> = Vec::new();
    for f in &c.page.fields {
        if names.contains(&f.name.as_str()) {
            r.error(
                FindingCode::DuplicateFieldName,
                id,
                Some(&f.name),
                format!("field `{}` declared twice", f.name),
            );
        }
        names.push(&f.name);
        check_field(c, f, r);
    }

    check_step_spec(c, &c.step_spec, r);
    let sockets = c.step_spec.sockets();
    let mut seen: Vec<&str> = Vec::new();
    for s in &sockets {
        if seen.contains(s) {
            r.error(
                FindingCode::DuplicateSocket,
                id,
                Some(s),
                format!("socket `{s}` declared twice"),
            );
        }
        seen.push(s);
    }

    let mut used: Vec<String> = Vec::new();
    let known = |v: &str| names.contains(&v) || BUILTINS.contains(&v);

    for node in c.step_spec.preorder() {
        match mask::parse(&node.label) {
            Ok(nodes) => {
                if !mask::slots(&nodes).is_empty() {
                    r.error(
                        FindingCode::MalformedTemplate,
                        id,
                        Some(&node.label),
                        "step labels cannot contain slot markers".into(),
                    );
                }
                for v in mask::free_variables(&nodes) {
                    if !known(&v) {
                        r.error(
                            FindingCode::UnboundMaskVariable,
                            id,
                            Some(&v),
                            format!("label `{}` uses unbound variable `{v}`", node.label),
                        );
                    }
                    used.push(v);
                }
            }
            Err(e) => r.error(
                FindingCode::MalformedTemplate,
                id,
                Some(&node.label),
                format!("label: {e}"),
            ),
        }
    }

    if c.emits.is_empty() {
        r.error(
            FindingCode::InvalidSections,
            id,
            None,
            "component emits into no section".into(),
        );
    }

    let mut seen_templates: Vec<(&str, Section)> = Vec::new();
    // target -> socket -> number of templates carrying a slot for it
    let mut slot_counts: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    for t in &c.templates {
        let here = format!("{}/{}", t.target, t.section);
        if pack.target(&t.target).is_none() {
            r.error(
                FindingCode::UnknownTarget,
                id,
                Some(&t.target),
                format!("template targets undeclared target `{}`", t.target),
            );
        }
        if !c.emits.contains(&t.section) {
            r.error(
                FindingCode::UnknownSection,
                id,
                Some(t.section.as_str()),
                format!("template {here} is for a section the component does not emit"),
            );
        }
        if seen_templates.contains(&(t.target.as_str(), t.section)) {
            r.error(
                FindingCode::DuplicateTemplate,
                id,
                Some(&here),
                format!("two templates for {here}"),
            );
        }
        seen_templates.push((&t.target, t.section));

        let nodes: Vec<Node> = match mask::parse(&t.body) {
            Ok(n) => n,
            Err(e) => {
                r.error(
                    FindingCode::MalformedTemplate,
                    id,
                    Some(&here),
                    format!("template {here}: {e}"),
                );
                continue;
            }
        };
        for v in mask::free_variables(&nodes) {
            if !known(&v) {
                r.error(
                    FindingCode::UnboundMaskVariable,
                    id,
                    Some(&v),
                    format!("template {here} uses unbound variable `{v}`"),
                );
            }
            used.push(v);
        }

        let body_slots = mask::slots(&nodes);
        let counts = slot_counts.entry(&t.target).or_default();
        for (socket, marker) in &t.socket_slots {
            if !sockets.contains(&socket.as_str()) {
                r.error(
                    FindingCode::UnknownSocketSlot,
                    id,
                    Some(socket),
                    format!("template {here} maps unknown socket `{socket}`"),
                );
                continue;
            }
            let Some(slot) = slot_marker_name(marker) else {
                r.error(
                    FindingCode::MalformedTemplate,
                    id,
                    Some(marker),
                    format!("template {here}: `{marker}` is not a slot marker"),
                );
                continue;
            };
            match body_slots.iter().filter(|s| s.as_str() == slot).count() {
                0 => r.error(
                    FindingCode::MissingSocketSlot,
                    id,
                    Some(socket),
                    format!("template {here}: marker `{marker}` for socket `{socket}` not found in body"),
                ),
                1 => *counts.entry(socket.clone()).or_default() += 1,
                _ => r.error(
                    FindingCode::DuplicateSocketSlot,
                    id,
                    Some(socket),
                    format!("template {here}: marker `{marker}` appears more than once"),
                ),
            }
        }
        for slot in &body_slots {
            if t.socket_for_slot(slot).is_none() {
                r.error(
                    FindingCode::UnknownSocketSlot,
                    id,
                    Some(slot),
                    format!("template {here}: slot `{slot}` is not mapped to any socket"),
                );
            }
        }
    }

    let mut complete = 0;
    for (target, counts) in &slot_counts {
        if c.emits.iter().all(|s| c.template(target, *s).is_some()) {
            complete += 1;
        } else {
            r.error(
                FindingCode::IncompleteTargetTemplates,
                id,
                Some(target),
                format!("target `{target}` lacks templates for some emitted sections"),
            );
        }
        for socket in &sockets {
            match counts.get(*socket).copied().unwrap_or(0) {
                0 => r.error(
                    FindingCode::MissingSocketSlot,
                    id,
                    Some(socket),
                    format!("socket `{socket}` has no slot in the `{target}` templates"),
                ),
                1 => {}
                _ => r.error(
                    FindingCode::DuplicateSocketSlot,
                    id,
                    Some(socket),
                    format!("socket `{socket}` has several slots in the `{target}` templates"),
                ),
            }
        }
    }
    if complete == 0 {
        r.error(
            FindingCode::NoCompleteTarget,
            id,
            None,
            "no target has a complete template set".into(),
        );
    }

    for f in &c.page.fields {
        if !used.contains(&f.name) {
            r.push(
                Severity::Warning,
                FindingCode::UnusedField,
                id,
                Some(&f.name),
                format!("field `{}` is never used by a label or template", f.name),
            );
        }
    }
}

fn check_root(pack: &ComponentPack, root: &ComponentDefinition, r: &mut Report) {
    let id = Some(root.id.as_str());
    let spec = &root.step_spec;
    if spec.kind != NodeKind::Container || spec.socket.is_none() || !spec.children.is_empty() {
        r.error(
            FindingCode::InvalidRootComponent,
            id,
            None,
            "root step spec must be one container node with a socket".into(),
        );
    }
    if !root.page.fields.is_empty() {
        r.error(
            FindingCode::InvalidRootComponent,
            id,
            None,
            "root component cannot have fields".into(),
        );
    }
    for t in &pack.targets {
        if !root.supports(&t.id) {
            r.error(
                FindingCode::InvalidRootComponent,
                id,
                Some(&t.id),
                format!("root component has no complete templates for target `{}`", t.id),
            );
        }
    }
}

//! Source generation: template expansion per interaction and assembly of
//! one source unit per goal.
//!
//! A goal is generated by walking its steps tree. Each interaction expands
//! its templates for the target; the body-section code of the interactions
//! anchored in a socket is spliced at that socket's slot marker, indented
//! one level. Declaration-section code is hoisted to the top of the unit in
//! tree order. The pack's root component wraps the whole goal.
//!
//! Generation is pure and never touches the filesystem.

pub mod mask;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::component::{CodeTemplate, ComponentDefinition, Registry, Section, TargetInfo};
use crate::steps::{slug, Goal, Interaction, Project, StepNode};
use crate::value::{Bindings, Value};
use mask::{MaskError, Piece};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodegenError {
    #[error("no templates for target `{target}` in: {}", .components.join(", "))]
    NoTemplateForTarget { target: String, components: Vec<String> },
    #[error("unknown target `{0}`")]
    UnknownTarget(String),
    #[error("target `{0}` is not selected for this project")]
    TargetNotInProject(String),
    #[error("unknown component `{0}`")]
    UnknownComponent(String),
    #[error("no pack with a root component is loaded")]
    NoRootComponent,
    #[error("project has no goals to generate")]
    NoGoals,
    #[error("while expanding `{component}`: {source}")]
    Mask {
        component: String,
        #[source]
        source: MaskError,
    },
}

/// Half-open, zero-based line range of one section.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SectionRange {
    pub section: Section,
    pub start_line: usize,
    pub end_line: usize,
}

/// Lines produced by one interaction's template for one section, with the
/// nesting level at which they were spliced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fragment {
    pub interaction_id: String,
    pub section: Section,
    pub start_line: usize,
    pub end_line: usize,
    pub level: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceUnit {
    pub target: String,
    pub goal_id: String,
    pub filename: String,
    pub text: String,
    pub section_map: Vec<SectionRange>,
    pub fragments: Vec<Fragment>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenerationManifest {
    pub revision: u64,
    pub target: String,
    pub units: Vec<SourceUnit>,
    /// Filename of the unit that is executed.
    pub entry: String,
}

impl GenerationManifest {
    pub fn entry_unit(&self) -> Option<&SourceUnit> {
        self.units.iter().find(|u| u.filename == self.entry)
    }
}

#[derive(Default, Debug)]
struct Block {
    lines: Vec<String>,
    fragments: Vec<Fragment>,
}

impl Block {
    fn append(&mut self, other: Block) {
        let offset = self.lines.len();
        self.lines.extend(other.lines);
        self.fragments.extend(other.fragments.into_iter().map(|mut f| {
            f.start_line += offset;
            f.end_line += offset;
            f
        }));
    }

    /// Splice `child` at the end, each non-empty line prefixed by `indent`.
    fn append_indented(&mut self, child: &Block, indent: &str) {
        let offset = self.lines.len();
        self.lines.extend(child.lines.iter().map(|l| {
            if l.is_empty() {
                String::new()
            } else {
                format!("{indent}{l}")
            }
        }));
        self.fragments.extend(child.fragments.iter().cloned().map(|mut f| {
            f.start_line += offset;
            f.end_line += offset;
            f.level += 1;
            f
        }));
    }
}

#[derive(Default)]
struct Output {
    declarations: Block,
    body: Block,
}

struct Generator<'a> {
    registry: &'a Registry,
    target: &'a TargetInfo,
    goal: &'a Goal,
    ledger: BTreeMap<&'a str, &'a Interaction>,
}

impl<'a> Generator<'a> {
    fn builtins(&self, step_id: &str) -> BTreeMap<String, Value> {
        [
            ("step_id".to_string(), Value::Text(step_id.to_string())),
            ("goal_name".to_string(), Value::Text(self.goal.name.clone())),
            ("indent".to_string(), Value::Text(self.target.indent.clone())),
        ]
        .into()
    }

    fn component(&self, id: &str) -> Result<&'a ComponentDefinition, CodegenError> {
        self.registry
            .component(id)
            .ok_or_else(|| CodegenError::UnknownComponent(id.to_string()))
    }

    /// Socket nodes owned by `owner` (root when `None`), in tree order.
    fn socket_nodes(top: &'a StepNode, owner: Option<&str>) -> Vec<&'a StepNode> {
        top.walk()
            .into_iter()
            .map(|(_, n)| n)
            .filter(|n| n.owner.as_deref() == owner && n.socket.is_some())
            .collect()
    }

    /// Generate one component instance whose owned nodes start at `top`.
    fn generate(
        &self,
        component: &ComponentDefinition,
        bindings: &Bindings,
        top: &'a StepNode,
        interaction_id: Option<&str>,
    ) -> Result<Output, CodegenError> {
        let mut children_body: BTreeMap<String, Block> = BTreeMap::new();
        let mut hoisted = Block::default();
        for socket_node in Self::socket_nodes(top, interaction_id) {
            let mut block = Block::default();
            for child in &socket_node.children {
                let Some(child_id) = child.owner.as_deref() else {
                    continue;
                };
                if Some(child_id) == interaction_id {
                    continue;
                }
                let interaction = self.ledger[child_id];
                let child_component = self.component(&interaction.component_id)?;
                let out = self.generate(child_component, &interaction.bindings, child, Some(child_id))?;
                block.append(out.body);
                hoisted.append(out.declarations);
            }
            children_body.insert(socket_node.socket.clone().expect("socket node"), block);
        }

        let builtins = self.builtins(&top.step_id);
        let mut out = Output::default();
        for section in [Section::Declarations, Section::Body] {
            if !component.emits.contains(&section) {
                continue;
            }
            let template =
                component
                    .template(&self.target.id, section)
                    .ok_or_else(|| CodegenError::NoTemplateForTarget {
                        target: self.target.id.clone(),
                        components: vec![component.id.clone()],
                    })?;
            let mask_err = |source| CodegenError::Mask {
                component: component.id.clone(),
                source,
            };
            let nodes = mask::parse(&template.body).map_err(mask_err)?;
            let pieces = mask::expand_pieces(&nodes, bindings, &builtins).map_err(mask_err)?;
            let mut block = self.render(&pieces, template, &children_body);
            if let Some(id) = interaction_id {
                block.fragments.push(Fragment {
                    interaction_id: id.to_string(),
                    section,
                    start_line: 0,
                    end_line: block.lines.len(),
                    level: 0,
                });
            }
            match section {
                Section::Declarations => out.declarations = block,
                Section::Body => out.body = block,
            }
        }
        out.declarations.append(hoisted);
        Ok(out)
    }

    /// Turn expanded pieces into lines, splicing socket code at slots.
    fn render(&self, pieces: &[Piece], template: &CodeTemplate, children: &BTreeMap<String, Block>) -> Block {
        let mut block = Block::default();
        let mut cur = String::new();
        let mut skip_newline = false;
        for piece in pieces {
            match piece {
                Piece::Text(text) => {
                    let mut text = text.as_str();
                    if std::mem::take(&mut skip_newline) {
                        text = text.strip_prefix('\n').unwrap_or(text);
                    }
                    for seg in text.split_inclusive('\n') {
                        match seg.strip_suffix('\n') {
                            Some(line) => {
                                cur.push_str(line);
                                block.lines.push(std::mem::take(&mut cur));
                            }
                            None => cur.push_str(seg),
                        }
                    }
                }
                Piece::Slot(slot) => {
                    if !cur.trim().is_empty() {
                        block.lines.push(std::mem::take(&mut cur));
                    }
                    cur.clear();
                    let empty = Block::default();
                    let child = template
                        .socket_for_slot(slot)
                        .and_then(|socket| children.get(socket))
                        .unwrap_or(&empty);
                    if child.lines.is_empty() {
                        if let Some(fill) = &self.target.empty_slot {
                            block.lines.push(format!("{}{fill}", self.target.indent));
                        }
                    } else {
                        block.append_indented(child, &self.target.indent);
                    }
                    skip_newline = true;
                }
            }
        }
        if !cur.is_empty() {
            block.lines.push(cur);
        }
        block
    }
}

/// Components used by a goal that have no complete template set for
/// `target`, in ledger order without duplicates.
fn unsupported(goal: &Goal, registry: &Registry, target: &str) -> Result<Vec<String>, CodegenError> {
    let mut out: Vec<String> = Vec::new();
    for i in &goal.interactions {
        let c = registry
            .component(&i.component_id)
            .ok_or_else(|| CodegenError::UnknownComponent(i.component_id.clone()))?;
        if !c.supports(target) && !out.contains(&c.id) {
            out.push(c.id.clone());
        }
    }
    Ok(out)
}

/// Generate the source unit of one goal.
pub fn generate_goal(goal: &Goal, registry: &Registry, target: &str) -> Result<SourceUnit, CodegenError> {
    let info = registry
        .target(target)
        .ok_or_else(|| CodegenError::UnknownTarget(target.to_string()))?;
    let root = registry.root_component().ok_or(CodegenError::NoRootComponent)?;

    let mut missing = unsupported(goal, registry, target)?;
    if !root.supports(target) {
        missing.insert(0, root.id.clone());
    }
    if !missing.is_empty() {
        return Err(CodegenError::NoTemplateForTarget {
            target: target.to_string(),
            components: missing,
        });
    }

    let generator = Generator {
        registry,
        target: info,
        goal,
        ledger: goal
            .interactions
            .iter()
            .map(|i| (i.interaction_id.as_str(), i))
            .collect(),
    };
    let out = generator.generate(root, &Bindings::new(), &goal.root, None)?;

    let decl_len = out.declarations.lines.len();
    let mut all = out.declarations;
    all.append(out.body);
    let mut text = all.lines.join("\n");
    text.push('\n');
    Ok(SourceUnit {
        target: target.to_string(),
        goal_id: goal.goal_id.clone(),
        filename: format!("{}.{}", slug(&goal.name), info.extension),
        text,
        section_map: vec![
            SectionRange {
                section: Section::Declarations,
                start_line: 0,
                end_line: decl_len,
            },
            SectionRange {
                section: Section::Body,
                start_line: decl_len,
                end_line: all.lines.len(),
            },
        ],
        fragments: all.fragments,
    })
}

/// One unit per goal; the first goal is the entry. Pure.
pub fn generate_project(
    project: &Project,
    registry: &Registry,
    target: &str,
) -> Result<GenerationManifest, CodegenError> {
    if !project.targets.iter().any(|t| t == target) {
        return Err(CodegenError::TargetNotInProject(target.to_string()));
    }
    if project.goals.is_empty() {
        return Err(CodegenError::NoGoals);
    }
    let mut units: Vec<SourceUnit> = Vec::with_capacity(project.goals.len());
    for goal in &project.goals {
        let mut unit = generate_goal(goal, registry, target)?;
        if units.iter().any(|u| u.filename == unit.filename) {
            let (stem, ext) = unit.filename.rsplit_once('.').expect("filename has extension");
            let mut n = 2;
            while units.iter().any(|u| u.filename == format!("{stem}_{n}.{ext}")) {
                n += 1;
            }
            unit.filename = format!("{stem}_{n}.{ext}");
        }
        units.push(unit);
    }
    let entry = units[0].filename.clone();
    Ok(GenerationManifest {
        revision: project.revision,
        target: target.to_string(),
        units,
        entry,
    })
}

#[cfg(test)]
mod tests;

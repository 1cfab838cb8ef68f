use serde::Serialize;
use thiserror::Error;

use super::{CodeTemplate, ComponentDefinition, ComponentPack, Section, TargetInfo};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RegistryError {
    #[error("unknown category `{0}`")]
    UnknownCategory(String),
    #[error("component `{component}` has no `{section}` template for target `{target}`")]
    NoTemplateForTarget {
        component: String,
        target: String,
        section: Section,
    },
    #[error("pack `{pack}` redefines component `{component}`")]
    ConflictingComponent { pack: String, component: String },
    #[error("pack `{pack}` redefines target `{target}` differently")]
    ConflictingTarget { pack: String, target: String },
    #[error("pack `{0}` is already loaded")]
    DuplicatePack(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ComponentSummary {
    pub id: String,
    pub display_name: String,
    pub category_path: Vec<String>,
}

/// The set of loaded packs. Immutable once shared; adding a pack needs
/// `&mut`.
///
/// The first loaded pack supplies the root component wrapping every goal.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    packs: Vec<ComponentPack>,
}

impl Registry {
    pub fn new() -> Self {
        Registry::default()
    }

    /// Add a validated pack. Component ids must be unique across packs and a
    /// target declared by two packs must carry identical settings.
    pub fn add(&mut self, pack: ComponentPack) -> Result<(), RegistryError> {
        for p in &self.packs {
            if p.pack_id == pack.pack_id {
                return Err(RegistryError::DuplicatePack(pack.pack_id.clone()));
            }
            for c in &pack.components {
                if p.component(&c.id).is_some() {
                    return Err(RegistryError::ConflictingComponent {
                        pack: pack.pack_id.clone(),
                        component: c.id.clone(),
                    });
                }
            }
            for t in &pack.targets {
                if p.target(&t.id).is_some_and(|existing| existing != t) {
                    return Err(RegistryError::ConflictingTarget {
                        pack: pack.pack_id.clone(),
                        target: t.id.clone(),
                    });
                }
            }
        }
        self.packs.push(pack);
        Ok(())
    }

    pub fn packs(&self) -> &[ComponentPack] {
        &self.packs
    }

    pub fn pack(&self, pack_id: &str) -> Option<&ComponentPack> {
        self.packs.iter().find(|p| p.pack_id == pack_id)
    }

    pub fn component(&self, id: &str) -> Option<&ComponentDefinition> {
        self.packs.iter().find_map(|p| p.component(id))
    }

    /// Pack that defines component `id`.
    pub fn pack_of(&self, id: &str) -> Option<&ComponentPack> {
        self.packs.iter().find(|p| p.component(id).is_some())
    }

    pub fn target(&self, id: &str) -> Option<&TargetInfo> {
        self.packs.iter().find_map(|p| p.target(id))
    }

    /// Every declared target id, first-seen order.
    pub fn target_ids(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for t in self.packs.iter().flat_map(|p| &p.targets) {
            if !out.contains(&t.id) {
                out.push(t.id.clone());
            }
        }
        out
    }

    /// The first loaded pack that declares a root component.
    pub fn root_pack(&self) -> Option<&ComponentPack> {
        self.packs.iter().find(|p| p.root_component.is_some())
    }

    pub fn root_component(&self) -> Option<&ComponentDefinition> {
        let pack = self.root_pack()?;
        pack.component(pack.root_component.as_deref()?)
    }

    fn is_root(&self, pack: &ComponentPack, c: &ComponentDefinition) -> bool {
        pack.root_component.as_deref() == Some(c.id.as_str())
    }

    /// Components matching both filters, sorted by (category path, display
    /// name). Root components are not listed: they are never applied by hand.
    pub fn browse(
        &self,
        category_path: Option<&[String]>,
        query: Option<&str>,
    ) -> Result<Vec<ComponentSummary>, RegistryError> {
        if let Some(path) = category_path {
            if !path.is_empty() && !self.packs.iter().any(|p| p.has_category(path)) {
                return Err(RegistryError::UnknownCategory(path.join("/")));
            }
        }
        let needle = query.map(str::to_lowercase).filter(|q| !q.is_empty());
        let mut out: Vec<ComponentSummary> = self
            .packs
            .iter()
            .flat_map(|p| p.components.iter().map(move |c| (p, c)))
            .filter(|(p, c)| !self.is_root(p, c))
            .filter(|(_, c)| category_path.is_none_or(|path| c.category_path.starts_with(path)))
            .filter(|(_, c)| {
                needle
                    .as_ref()
                    .is_none_or(|q| c.display_name.to_lowercase().contains(q))
            })
            .map(|(_, c)| ComponentSummary {
                id: c.id.clone(),
                display_name: c.display_name.clone(),
                category_path: c.category_path.clone(),
            })
            .collect();
        out.sort_by(|a, b| (&a.category_path, &a.display_name, &a.id).cmp(&(&b.category_path, &b.display_name, &b.id)));
        Ok(out)
    }
}

/// Code matching: the unique template of `component` for (target, section).
pub fn resolve_template<'a>(
    component: &'a ComponentDefinition,
    target: &str,
    section: Section,
) -> Result<&'a CodeTemplate, RegistryError> {
    component
        .template(target, section)
        .ok_or_else(|| RegistryError::NoTemplateForTarget {
            component: component.id.clone(),
            target: target.to_string(),
            section,
        })
}

#[derive(Debug, Error)]
pub enum PackDirError {
    #[error("reading {path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Pack {
        path: std::path::PathBuf,
        #[source]
        source: super::PackError,
    },
    #[error("{path}: {source}")]
    Registry {
        path: std::path::PathBuf,
        #[source]
        source: RegistryError,
    },
}

impl Registry {
    /// Load every `*.pack.json` in `dir`, in filename order. An empty
    /// directory gives an empty registry.
    pub fn load_dir(dir: &std::path::Path) -> Result<Registry, PackDirError> {
        let io = |path: &std::path::Path| {
            let path = path.to_path_buf();
            move |source| PackDirError::Io { path, source }
        };
        let mut files: Vec<std::path::PathBuf> = std::fs::read_dir(dir)
            .map_err(io(dir))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.is_file() && p.to_string_lossy().ends_with(".pack.json"))
            .collect();
        files.sort();
        let mut registry = Registry::new();
        for path in files {
            let bytes = std::fs::read(&path).map_err(io(&path))?;
            let pack = super::load_pack(&bytes).map_err(|source| PackDirError::Pack {
                path: path.clone(),
                source,
            })?;
            registry
                .add(pack)
                .map_err(|source| PackDirError::Registry { path, source })?;
        }
        Ok(registry)
    }
}

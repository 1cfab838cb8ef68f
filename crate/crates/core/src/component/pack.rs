use thiserror::Error;

use super::{validate_pack, ComponentPack, Finding, FindingCode, Severity};

pub const PACK_FORMAT: u32 = 1;

#[derive(Debug, Error)]
pub enum PackError {
    #[error("malformed pack: {0}")]
    MalformedPack(String),
    #[error("unsupported pack format {0}")]
    UnsupportedFormat(u64),
    #[error("duplicate component id `{0}`")]
    DuplicateComponentId(String),
    #[error("component `{component}` references unknown category `{category}`")]
    UnknownCategory { component: String, category: String },
    #[error("component `{component}` uses unbound mask variable `{variable}`")]
    UnboundMaskVariable { component: String, variable: String },
    #[error("component `{component}` is missing a slot for socket `{socket}`")]
    MissingSocketSlot { component: String, socket: String },
    #[error("invalid pack: {0}")]
    Invalid(Finding),
}

impl PackError {
    fn from_finding(f: Finding) -> Self {
        let component = f.component.clone().unwrap_or_default();
        let subject = f.subject.clone().unwrap_or_default();
        match f.code {
            FindingCode::DuplicateComponentId => PackError::DuplicateComponentId(subject),
            FindingCode::UnknownCategory => PackError::UnknownCategory {
                component,
                category: subject,
            },
            FindingCode::UnboundMaskVariable => PackError::UnboundMaskVariable {
                component,
                variable: subject,
            },
            FindingCode::MissingSocketSlot => PackError::MissingSocketSlot {
                component,
                socket: subject,
            },
            _ => PackError::Invalid(f),
        }
    }
}

/// Parse a pack document without validating it.
pub fn parse_pack(bytes: &[u8]) -> Result<ComponentPack, PackError> {
    let text = std::str::from_utf8(bytes).map_err(|e| PackError::MalformedPack(e.to_string()))?;
    let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| PackError::MalformedPack(e.to_string()))?;
    match raw.get("format").and_then(serde_json::Value::as_u64) {
        Some(v) if v == u64::from(PACK_FORMAT) => {}
        Some(v) => return Err(PackError::UnsupportedFormat(v)),
        None => return Err(PackError::MalformedPack("missing numeric `format` field".into())),
    }
    serde_json::from_value(raw).map_err(|e| PackError::MalformedPack(e.to_string()))
}

/// Parse and validate a pack document. The first error finding becomes the
/// returned error; warnings do not prevent loading.
pub fn load_pack(bytes: &[u8]) -> Result<ComponentPack, PackError> {
    let pack = parse_pack(bytes)?;
    if let Some(f) = validate_pack(&pack).into_iter().find(|f| f.severity == Severity::Error) {
        return Err(PackError::from_finding(f));
    }
    Ok(pack)
}

/// Canonical writer, inverse of [`load_pack`]. Keys follow the struct field
/// order; output ends with a newline.
pub fn serialize_pack(pack: &ComponentPack) -> String {
    let mut s = serde_json::to_string_pretty(pack).expect("pack serializes");
    s.push('\n');
    s
}

//! Interaction page submission: raw form values to typed bindings.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::component::{anchored, check_value};
use crate::component::{Constraint, FieldKind, InteractionPageSchema, ParamField};
use crate::value::{Bindings, RawBindings, RawValue, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldErrorReason {
    Missing,
    ParseFailure,
    OutOfRange,
    PatternMismatch,
    NotAChoice,
    UnknownField,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FieldError {
    pub field: String,
    pub reason: FieldErrorReason,
    pub message: String,
}

impl fmt::Display for FieldError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

fn err(field: &str, reason: FieldErrorReason, message: impl Into<String>) -> FieldError {
    FieldError {
        field: field.to_string(),
        reason,
        message: message.into(),
    }
}

fn parse_bool(s: &str) -> Option<bool> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Some(true),
        "false" | "no" | "off" | "0" => Some(false),
        _ => None,
    }
}

/// Value used for an optional field that has neither input nor default.
fn zero_value(f: &ParamField) -> Value {
    match f.kind {
        FieldKind::Text => Value::Text(String::new()),
        FieldKind::Boolean => Value::Boolean(false),
        FieldKind::List => Value::List(Vec::new()),
        FieldKind::Enum => Value::Text(f.choices().first().cloned().unwrap_or_default()),
        FieldKind::Integer => match &f.constraint {
            Some(Constraint::Range { min, max }) if !(*min..=*max).contains(&0) => Value::Integer(*min),
            _ => Value::Integer(0),
        },
    }
}

fn parse_one(f: &ParamField, raw: &RawValue) -> Result<Option<Value>, FieldError> {
    use FieldErrorReason::*;
    let single = |raw: &RawValue| match raw {
        RawValue::One(s) => Ok(s.clone()),
        RawValue::Many(_) => Err(err(&f.name, ParseFailure, "expected a single value, got a list")),
    };
    let value = match f.kind {
        FieldKind::List => {
            let items: Vec<String> = match raw {
                RawValue::Many(items) => items.clone(),
                RawValue::One(s) if s.trim().is_empty() => Vec::new(),
                RawValue::One(s) => s.split(',').map(|p| p.trim().to_string()).collect(),
            };
            if items.is_empty() && f.required {
                return Ok(None);
            }
            Value::List(items)
        }
        FieldKind::Text => {
            let s = single(raw)?;
            if s.is_empty() && f.required {
                return Ok(None);
            }
            Value::Text(s)
        }
        FieldKind::Integer => {
            let s = single(raw)?;
            if s.trim().is_empty() {
                return Ok(None);
            }
            let i = s
                .trim()
                .parse::<i64>()
                .map_err(|_| err(&f.name, ParseFailure, format!("`{s}` is not an integer")))?;
            Value::Integer(i)
        }
        FieldKind::Boolean => {
            let s = single(raw)?;
            if s.trim().is_empty() {
                return Ok(None);
            }
            let b = parse_bool(&s).ok_or_else(|| err(&f.name, ParseFailure, format!("`{s}` is not a boolean")))?;
            Value::Boolean(b)
        }
        FieldKind::Enum => {
            let s = single(raw)?;
            if s.is_empty() {
                return Ok(None);
            }
            Value::Text(s)
        }
    };
    Ok(Some(value))
}

fn check(f: &ParamField, v: &Value) -> Result<(), FieldError> {
    use FieldErrorReason::*;
    let pattern = match &f.constraint {
        Some(Constraint::Pattern(p)) => anchored(p).ok(),
        _ => None,
    };
    check_value(f, v, pattern.as_ref()).map_err(|why| {
        let reason = match (f.kind, &f.constraint) {
            (FieldKind::Integer, _) => OutOfRange,
            (FieldKind::Enum, _) => NotAChoice,
            (_, Some(Constraint::Pattern(_))) => PatternMismatch,
            _ => ParseFailure,
        };
        let shown = match v {
            Value::Text(s) => format!("`{s}`"),
            other => format!("`{other}`"),
        };
        let message = match (reason, &f.constraint) {
            (OutOfRange, Some(Constraint::Range { min, max })) => {
                format!("{shown} is out of range {min}..={max}")
            }
            _ => format!("{shown} {why}"),
        };
        err(&f.name, reason, message)
    })
}

/// Parse every raw value to its field kind, apply defaults and check
/// constraints. All failing fields are reported together.
pub fn validate_bindings(schema: &InteractionPageSchema, raw: &RawBindings) -> Result<Bindings, Vec<FieldError>> {
    let mut errors = Vec::new();
    let mut out = Bindings::new();

    for name in raw.keys() {
        if schema.field(name).is_none() {
            errors.push(err(name, FieldErrorReason::UnknownField, "no such field"));
        }
    }

    for f in &schema.fields {
        let parsed = match raw.get(&f.name).map(|r| parse_one(f, r)) {
            Some(Ok(v)) => v,
            Some(Err(e)) => {
                errors.push(e);
                continue;
            }
            None => None,
        };
        let value = match (parsed, &f.default) {
            (Some(v), _) => v,
            (None, Some(d)) => d.clone(),
            (None, None) if f.required => {
                errors.push(err(&f.name, FieldErrorReason::Missing, "a value is required"));
                continue;
            }
            (None, None) => zero_value(f),
        };
        match check(f, &value) {
            Ok(()) => {
                out.insert(f.name.clone(), value);
            }
            Err(e) => errors.push(e),
        }
    }

    if errors.is_empty() {
        Ok(out)
    } else {
        Err(errors)
    }
}

/// True when `bindings` has exactly the schema's fields, each well-typed and
/// within its constraint.
pub fn bindings_conform(schema: &InteractionPageSchema, bindings: &Bindings) -> bool {
    bindings.len() == schema.fields.len()
        && schema
            .fields
            .iter()
            .all(|f| bindings.get(&f.name).is_some_and(|v| check(f, v).is_ok()))
}

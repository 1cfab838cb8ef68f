//! Mask template language.
//!
//! Constructs:
//!
//! * `<%name%>` substitutes a binding, builtin or loop variable. Lists are
//!   joined with `", "`.
//! * `<%if name%>…<%else%>…<%end%>` branches on truthiness (the `else`
//!   part is optional).
//! * `<%for x in name%>…<%end%>` repeats over a list field, binding `x`,
//!   plus the booleans `first` and `last`.
//! * `<%@socket%>` marks where child code for a socket is spliced. Slot
//!   markers are only allowed at the top level of a template.
//! * `<%%` emits a literal `<%`.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::value::{Bindings, Value};

pub const OPEN: &str = "<%";
pub const CLOSE: &str = "%>";

/// Builtin variables available to every template.
pub const BUILTINS: [&str; 3] = ["step_id", "goal_name", "indent"];
/// Extra booleans bound inside a `for` body.
pub const LOOP_BUILTINS: [&str; 2] = ["first", "last"];

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MaskError {
    #[error("unbound mask variable `{0}`")]
    UnboundVariable(String),
    #[error("malformed construct at byte {offset}: {message}")]
    MalformedConstruct { offset: usize, message: String },
}

impl MaskError {
    fn malformed(offset: usize, message: impl Into<String>) -> Self {
        MaskError::MalformedConstruct {
            offset,
            message: message.into(),
        }
    }
}

/// Template text containing literals and mask constructs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedTemplate {
    pub body: String,
}

impl MaskedTemplate {
    pub fn new(body: impl Into<String>) -> Self {
        MaskedTemplate { body: body.into() }
    }

    pub fn parse(&self) -> Result<Vec<Node>, MaskError> {
        parse(&self.body)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Node {
    Text(String),
    Var(String),
    If {
        cond: String,
        then: Vec<Node>,
        otherwise: Vec<Node>,
    },
    For {
        item: String,
        list: String,
        body: Vec<Node>,
    },
    Slot(String),
}

/// Output of expansion before socket splicing.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Piece {
    Text(String),
    Slot(String),
}

enum Tag {
    Var(String),
    If(String),
    Else,
    End,
    For(String, String),
    Slot(String),
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_ascii_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn classify(inner: &str, offset: usize) -> Result<Tag, MaskError> {
    let inner = inner.trim();
    let bad = |what: &str| MaskError::malformed(offset, format!("{what}: `{inner}`"));
    if inner == "else" {
        return Ok(Tag::Else);
    }
    if inner == "end" {
        return Ok(Tag::End);
    }
    if let Some(rest) = inner.strip_prefix('@') {
        return if is_ident(rest) {
            Ok(Tag::Slot(rest.to_string()))
        } else {
            Err(bad("bad slot name"))
        };
    }
    let words: Vec<&str> = inner.split_whitespace().collect();
    match words.as_slice() {
        ["if", cond] if is_ident(cond) => Ok(Tag::If(cond.to_string())),
        ["for", item, "in", list] if is_ident(item) && is_ident(list) => {
            Ok(Tag::For(item.to_string(), list.to_string()))
        }
        [name] if is_ident(name) => Ok(Tag::Var(name.to_string())),
        _ => Err(bad("unrecognized construct")),
    }
}

enum Frame {
    Root,
    If {
        cond: String,
        then: Option<Vec<Node>>,
        offset: usize,
    },
    For {
        item: String,
        list: String,
        offset: usize,
    },
}

/// Parse a template body into its construct tree.
pub fn parse(src: &str) -> Result<Vec<Node>, MaskError> {
    let mut stack: Vec<(Frame, Vec<Node>)> = vec![(Frame::Root, Vec::new())];
    let mut text = String::new();
    let mut pos = 0;

    fn flush(text: &mut String, nodes: &mut Vec<Node>) {
        if !text.is_empty() {
            nodes.push(Node::Text(std::mem::take(text)));
        }
    }

    while let Some(rel) = src[pos..].find(OPEN) {
        let start = pos + rel;
        text.push_str(&src[pos..start]);
        let after = start + OPEN.len();
        if src[after..].starts_with('%') {
            text.push_str(OPEN);
            pos = after + 1;
            continue;
        }
        let close = src[after..]
            .find(CLOSE)
            .ok_or_else(|| MaskError::malformed(start, "unterminated `<%`"))?;
        let inner = &src[after..after + close];
        pos = after + close + CLOSE.len();

        let tag = classify(inner, start)?;
        let (_, nodes) = stack.last_mut().expect("root frame");
        flush(&mut text, nodes);
        match tag {
            Tag::Var(name) => nodes.push(Node::Var(name)),
            Tag::Slot(name) => {
                if stack.len() > 1 {
                    return Err(MaskError::malformed(start, "slot markers must not be nested in if/for"));
                }
                stack[0].1.push(Node::Slot(name));
            }
            Tag::If(cond) => stack.push((
                Frame::If {
                    cond,
                    then: None,
                    offset: start,
                },
                Vec::new(),
            )),
            Tag::For(item, list) => stack.push((
                Frame::For {
                    item,
                    list,
                    offset: start,
                },
                Vec::new(),
            )),
            Tag::Else => match stack.last_mut() {
                Some((Frame::If { then, .. }, nodes)) if then.is_none() => {
                    *then = Some(std::mem::take(nodes));
                }
                _ => return Err(MaskError::malformed(start, "`else` without open `if`")),
            },
            Tag::End => {
                let (frame, nodes) = stack.pop().expect("root frame");
                let node = match frame {
                    Frame::Root => return Err(MaskError::malformed(start, "`end` without open construct")),
                    Frame::If { cond, then, .. } => match then {
                        Some(then) => Node::If {
                            cond,
                            then,
                            otherwise: nodes,
                        },
                        None => Node::If {
                            cond,
                            then: nodes,
                            otherwise: Vec::new(),
                        },
                    },
                    Frame::For { item, list, .. } => Node::For {
                        item,
                        list,
                        body: nodes,
                    },
                };
                stack.last_mut().expect("root frame").1.push(node);
            }
        }
    }
    text.push_str(&src[pos..]);

    if stack.len() > 1 {
        let offset = match &stack.last().unwrap().0 {
            Frame::If { offset, .. } | Frame::For { offset, .. } => *offset,
            Frame::Root => 0,
        };
        return Err(MaskError::malformed(offset, "construct is never closed with `end`"));
    }
    let (_, mut nodes) = stack.pop().unwrap();
    flush(&mut text, &mut nodes);
    Ok(nodes)
}

/// Variable lookup chain: loop scopes, then bindings, then builtins.
struct Scope<'a> {
    bindings: &'a Bindings,
    builtins: &'a BTreeMap<String, Value>,
    locals: Vec<(String, Value)>,
}

impl Scope<'_> {
    fn get(&self, name: &str) -> Result<&Value, MaskError> {
        self.locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v)
            .or_else(|| self.bindings.get(name))
            .or_else(|| self.builtins.get(name))
            .ok_or_else(|| MaskError::UnboundVariable(name.to_string()))
    }
}

fn push_text(out: &mut Vec<Piece>, s: &str) {
    if s.is_empty() {
        return;
    }
    if let Some(Piece::Text(last)) = out.last_mut() {
        last.push_str(s);
    } else {
        out.push(Piece::Text(s.to_string()));
    }
}

fn expand_nodes(nodes: &[Node], scope: &mut Scope<'_>, out: &mut Vec<Piece>) -> Result<(), MaskError> {
    for node in nodes {
        match node {
            Node::Text(t) => push_text(out, t),
            Node::Var(name) => {
                let s = scope.get(name)?.to_string();
                push_text(out, &s);
            }
            Node::Slot(name) => out.push(Piece::Slot(name.clone())),
            Node::If { cond, then, otherwise } => {
                let branch = if scope.get(cond)?.is_truthy() { then } else { otherwise };
                expand_nodes(branch, scope, out)?;
            }
            Node::For { item, list, body } => {
                let items = match scope.get(list)? {
                    Value::List(items) => items.clone(),
                    _ => {
                        return Err(MaskError::malformed(
                            0,
                            format!("`for` over `{list}` which is not a list"),
                        ))
                    }
                };
                let n = items.len();
                for (i, it) in items.into_iter().enumerate() {
                    scope.locals.push(("first".into(), Value::Boolean(i == 0)));
                    scope.locals.push(("last".into(), Value::Boolean(i + 1 == n)));
                    scope.locals.push((item.clone(), Value::Text(it)));
                    let r = expand_nodes(body, scope, out);
                    scope.locals.truncate(scope.locals.len() - 3);
                    r?;
                }
            }
        }
    }
    Ok(())
}

/// Expand parsed nodes into text pieces, keeping slot markers.
pub fn expand_pieces(
    nodes: &[Node],
    bindings: &Bindings,
    builtins: &BTreeMap<String, Value>,
) -> Result<Vec<Piece>, MaskError> {
    let mut scope = Scope {
        bindings,
        builtins,
        locals: Vec::new(),
    };
    let mut out = Vec::new();
    expand_nodes(nodes, &mut scope, &mut out)?;
    Ok(out)
}

/// Expand a template to plain text. Slot markers expand to nothing here;
/// code generation uses [`expand_pieces`] to splice child code into them.
pub fn expand_template(
    template: &MaskedTemplate,
    bindings: &Bindings,
    builtins: &BTreeMap<String, Value>,
) -> Result<String, MaskError> {
    let nodes = template.parse()?;
    let pieces = expand_pieces(&nodes, bindings, builtins)?;
    Ok(pieces
        .into_iter()
        .filter_map(|p| match p {
            Piece::Text(t) => Some(t),
            Piece::Slot(_) => None,
        })
        .collect())
}

/// Names a template reads that are not bound by an enclosing `for`.
pub fn free_variables(nodes: &[Node]) -> Vec<String> {
    fn walk(nodes: &[Node], bound: &mut Vec<String>, out: &mut Vec<String>) {
        let note = |name: &String, bound: &Vec<String>, out: &mut Vec<String>| {
            if !bound.contains(name) && !out.contains(name) {
                out.push(name.clone());
            }
        };
        for node in nodes {
            match node {
                Node::Text(_) | Node::Slot(_) => {}
                Node::Var(name) => note(name, bound, out),
                Node::If { cond, then, otherwise } => {
                    note(cond, bound, out);
                    walk(then, bound, out);
                    walk(otherwise, bound, out);
                }
                Node::For { item, list, body } => {
                    note(list, bound, out);
                    let mark = bound.len();
                    bound.push(item.clone());
                    bound.extend(LOOP_BUILTINS.iter().map(|s| s.to_string()));
                    walk(body, bound, out);
                    bound.truncate(mark);
                }
            }
        }
    }
    let mut out = Vec::new();
    walk(nodes, &mut Vec::new(), &mut out);
    out
}

/// Slot marker names in order of appearance, duplicates kept.
pub fn slots(nodes: &[Node]) -> Vec<String> {
    nodes
        .iter()
        .filter_map(|n| match n {
            Node::Slot(s) => Some(s.clone()),
            _ => None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn b(pairs: &[(&str, Value)]) -> Bindings {
        pairs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn expand(body: &str, bindings: &Bindings) -> Result<String, MaskError> {
        expand_template(&MaskedTemplate::new(body), bindings, &BTreeMap::new())
    }

    #[test]
    fn identity_without_masks() {
        assert_eq!(expand("x = 1", &Bindings::new()).unwrap(), "x = 1");
    }

    #[test]
    fn single_substitution() {
        let bindings = b(&[("message", Value::Text("\"Hi\"".into()))]);
        assert_eq!(expand("print(<%message%>)", &bindings).unwrap(), "print(\"Hi\")");
    }

    #[test]
    fn for_repetition() {
        let bindings = b(&[("names", Value::List(vec!["a".into(), "b".into()]))]);
        assert_eq!(
            expand("<%for n in names%>- <%n%>\n<%end%>", &bindings).unwrap(),
            "- a\n- b\n"
        );
    }

    #[test]
    fn if_else_and_loop_flags() {
        let bindings = b(&[
            ("p", Value::List(vec!["a".into(), "b".into(), "c".into()])),
            ("flag", Value::Boolean(false)),
        ]);
        let body = "(<%for x in p%>long <%x%><%if last%><%else%>, <%end%><%end%>)<%if flag%>!<%else%>?<%end%>";
        assert_eq!(expand(body, &bindings).unwrap(), "(long a, long b, long c)?");
    }

    #[test]
    fn escape_emits_literal_open() {
        assert_eq!(expand("a <%% b %>", &Bindings::new()).unwrap(), "a <% b %>");
    }

    #[test]
    fn unbound_variable_named() {
        let err = expand("<%msg%>", &b(&[("message", Value::Text("x".into()))])).unwrap_err();
        assert_eq!(err, MaskError::UnboundVariable("msg".into()));
    }

    #[test]
    fn unbalanced_constructs() {
        for bad in [
            "<%if a%>x",
            "x<%end%>",
            "<%else%>",
            "<%for a in%>",
            "<%a",
            "<%if a%><%else%><%else%><%end%>",
        ] {
            assert!(matches!(parse(bad), Err(MaskError::MalformedConstruct { .. })), "{bad}");
        }
    }

    #[test]
    fn nested_slot_rejected() {
        assert!(parse("<%if a%><%@body%><%end%>").is_err());
        assert_eq!(slots(&parse("x\n<%@body%>\n").unwrap()), vec!["body".to_string()]);
    }

    #[test]
    fn free_variables_exclude_loop_scope() {
        let nodes = parse("<%for x in xs%><%x%><%first%><%y%><%end%><%z%>").unwrap();
        assert_eq!(free_variables(&nodes), vec!["xs", "y", "z"]);
    }

    #[test]
    fn builtins_are_visible() {
        let builtins: BTreeMap<String, Value> = [("indent".to_string(), Value::Text("    ".into()))].into();
        let out = expand_template(&MaskedTemplate::new("<%indent%>x"), &Bindings::new(), &builtins).unwrap();
        assert_eq!(out, "    x");
    }
}

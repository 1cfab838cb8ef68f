use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mask::{expand_template, MaskedTemplate};
use super::*;
use crate::component::validate_pack;
use crate::persistence::{parse_session, replay_session};
use crate::reference;
use crate::value::{RawBindings, RawValue};

fn replay(name: &str) -> (Project, Registry) {
    let registry = reference::registry();
    let script = parse_session(reference::session(name).unwrap().as_bytes()).unwrap();
    let project = replay_session(&script, &registry, script.targets.as_deref().unwrap()).unwrap();
    (project, registry)
}

fn empty_project(targets: &[&str]) -> (Project, Registry) {
    let registry = reference::registry();
    let targets: Vec<String> = targets.iter().map(|t| t.to_string()).collect();
    let mut p = Project::create("demo", &targets, &registry).unwrap();
    p.create_goal("Main", &registry).unwrap();
    (p, registry)
}

#[test]
fn empty_goal_is_the_root_scaffold() {
    let (p, registry) = empty_project(&["c", "python"]);
    let py = generate_goal(&p.goals[0], &registry, "python").unwrap();
    assert_eq!(py.text, "import sys\n\n\ndef main():\n    pass\n\n\nmain()\n");
    assert_eq!(py.filename, "main.py");
    let c = generate_goal(&p.goals[0], &registry, "c").unwrap();
    assert_eq!(
        c.text,
        "#include <stdio.h>\n#include <string.h>\n\nint main(void)\n{\n    return 0;\n}\n"
    );
    assert!(c.fragments.is_empty());
}

#[test]
fn hello_goldens() {
    let (p, registry) = replay("hello");
    let py = generate_project(&p, &registry, "python").unwrap();
    assert_eq!(
        py.entry_unit().unwrap().text,
        "import sys\n\n\ndef main():\n    print(\"Hello, World!\")\n\n\nmain()\n"
    );
    let c = generate_project(&p, &registry, "c").unwrap();
    assert_eq!(
        c.entry_unit().unwrap().text,
        "#include <stdio.h>\n#include <string.h>\n\nint main(void)\n{\n    puts(\"Hello, World!\");\n    return 0;\n}\n"
    );
}

#[test]
fn section_map_orders_declarations_first() {
    let (p, registry) = replay("functions");
    for target in ["c", "python"] {
        let unit = generate_goal(&p.goals[0], &registry, target).unwrap();
        let [decl, body] = &unit.section_map[..] else {
            panic!("two sections")
        };
        assert_eq!(decl.section, Section::Declarations);
        assert_eq!(body.section, Section::Body);
        assert_eq!(decl.start_line, 0);
        assert_eq!(decl.end_line, body.start_line);
        assert_eq!(body.end_line, unit.text.lines().count());
        let lines: Vec<&str> = unit.text.lines().collect();
        let decl_text = lines[decl.start_line..decl.end_line].join("\n");
        assert!(decl_text.contains("square"), "{target}: {decl_text}");
    }
}

#[test]
fn unsupported_component_reported_before_generation() {
    let mut pack = reference::pack();
    let label = pack.components.iter_mut().find(|c| c.id == "form.label").unwrap();
    label.templates.retain(|t| t.target != "c");
    assert!(validate_pack(&pack).is_empty());
    let mut registry = Registry::new();
    registry.add(pack).unwrap();

    let mut p = Project::create("demo", &["c".into(), "python".into()], &registry).unwrap();
    let g = p.create_goal("Main", &registry).unwrap();
    let raw: RawBindings = [("text".to_string(), RawValue::from("hi"))].into();
    p.apply_raw(&g, "root", "form.label", &raw, &registry).unwrap();
    assert_eq!(
        generate_project(&p, &registry, "c"),
        Err(CodegenError::NoTemplateForTarget {
            target: "c".into(),
            components: vec!["form.label".into()],
        })
    );
    assert!(generate_project(&p, &registry, "python").is_ok());
}

#[test]
fn manifest_ordering_and_target_checks() {
    let (mut p, registry) = empty_project(&["python"]);
    p.create_goal("Util", &registry).unwrap();
    let m = generate_project(&p, &registry, "python").unwrap();
    let names: Vec<_> = m.units.iter().map(|u| u.filename.as_str()).collect();
    assert_eq!(names, ["main.py", "util.py"]);
    assert_eq!(m.entry, "main.py");
    assert_eq!(m.revision, p.revision);
    assert_eq!(
        generate_project(&p, &registry, "c"),
        Err(CodegenError::TargetNotInProject("c".into()))
    );
    let bare = Project::create("x", &["python".into()], &registry).unwrap();
    assert_eq!(generate_project(&bare, &registry, "python"), Err(CodegenError::NoGoals));
}

#[test]
fn colliding_goal_filenames_are_suffixed() {
    let (mut p, registry) = empty_project(&["python"]);
    p.create_goal("main!", &registry).unwrap();
    let m = generate_project(&p, &registry, "python").unwrap();
    let names: Vec<_> = m.units.iter().map(|u| u.filename.as_str()).collect();
    assert_eq!(names, ["main.py", "main_2.py"]);
}

#[test]
fn reference_programs_are_deterministic_and_clean() {
    for (name, _, _) in reference::SESSIONS {
        let (p, registry) = replay(name);
        for target in ["c", "python"] {
            let a = generate_project(&p, &registry, target).unwrap();
            let b = generate_project(&p, &registry, target).unwrap();
            assert_eq!(a, b);
            for unit in &a.units {
                assert!(!unit.text.contains("<%"), "{name}/{target} has mask residue");
            }
        }
    }
}

/// A fragment spliced at nesting level L starts at exactly L indentation
/// units, and none of its lines are shallower.
#[test]
fn spliced_fragments_are_one_level_deeper() {
    for (name, _, _) in reference::SESSIONS {
        let (p, registry) = replay(name);
        for target in ["c", "python"] {
            let unit = generate_project(&p, &registry, target).unwrap().units.remove(0);
            let indent = &registry.target(target).unwrap().indent;
            let lines: Vec<&str> = unit.text.lines().collect();
            let depth = |l: &str| (l.len() - l.trim_start().len()) / indent.len();
            for f in &unit.fragments {
                let body: Vec<&str> = lines[f.start_line..f.end_line]
                    .iter()
                    .copied()
                    .filter(|l| !l.trim().is_empty())
                    .collect();
                assert!(!body.is_empty());
                assert_eq!(depth(body[0]), f.level, "{name}/{target} {f:?}");
                assert!(body.iter().all(|l| depth(l) >= f.level), "{name}/{target} {f:?}");
            }
            // Children sit exactly one level below the fragment they are spliced into.
            for child in &unit.fragments {
                let parent = unit
                    .fragments
                    .iter()
                    .filter(|p| {
                        p.section == child.section
                            && p.start_line <= child.start_line
                            && child.end_line <= p.end_line
                            && (p.start_line, p.end_line) != (child.start_line, child.end_line)
                    })
                    .max_by_key(|p| p.start_line);
                if let Some(parent) = parent {
                    assert_eq!(child.level, parent.level + 1, "{name}/{target}");
                }
            }
        }
    }
}

// Independent oracle for mask expansion: a flat single-pass scan over the
// token stream with an explicit frame stack, no tree.

#[derive(Debug, Clone)]
enum Tok {
    Lit(String),
    Tag(String),
}

fn tokenize(src: &str) -> Vec<Tok> {
    let mut out = Vec::new();
    let mut rest = src;
    while let Some(i) = rest.find("<%") {
        out.push(Tok::Lit(rest[..i].to_string()));
        rest = &rest[i + 2..];
        if let Some(r) = rest.strip_prefix('%') {
            out.push(Tok::Lit("<%".into()));
            rest = r;
            continue;
        }
        let j = rest.find("%>").expect("closed tag");
        out.push(Tok::Tag(rest[..j].to_string()));
        rest = &rest[j + 2..];
    }
    out.push(Tok::Lit(rest.to_string()));
    out
}

enum Frame {
    If,
    For {
        var: String,
        items: Vec<String>,
        next: usize,
        body: usize,
    },
}

fn oracle(src: &str, env: &BTreeMap<String, Value>) -> String {
    let toks = tokenize(src);
    let mut out = String::new();
    let mut stack: Vec<Frame> = Vec::new();
    let mut locals: Vec<(String, Value)> = Vec::new();
    let lookup = |locals: &[(String, Value)], name: &str| -> Value {
        locals
            .iter()
            .rev()
            .find(|(n, _)| n == name)
            .map(|(_, v)| v.clone())
            .or_else(|| env.get(name).cloned())
            .expect("bound")
    };
    // Skip forward from `pc` to the matching `else` or `end` at this depth.
    let skip = |pc: usize, stop_at_else: bool| -> usize {
        let mut depth = 0;
        let mut i = pc;
        loop {
            i += 1;
            if let Tok::Tag(t) = &toks[i] {
                if t.starts_with("if ") || t.starts_with("for ") {
                    depth += 1;
                } else if t == "end" {
                    if depth == 0 {
                        return i;
                    }
                    depth -= 1;
                } else if t == "else" && depth == 0 && stop_at_else {
                    return i;
                }
            }
        }
    };
    let mut pc = 0;
    while pc < toks.len() {
        match &toks[pc] {
            Tok::Lit(s) => out.push_str(s),
            Tok::Tag(t) if t.starts_with("if ") => {
                if lookup(&locals, &t[3..]).is_truthy() {
                    stack.push(Frame::If);
                } else {
                    let j = skip(pc, true);
                    if matches!(&toks[j], Tok::Tag(e) if e == "else") {
                        stack.push(Frame::If);
                    }
                    pc = j;
                }
            }
            Tok::Tag(t) if t == "else" => {
                pc = skip(pc, false);
                continue;
            }
            Tok::Tag(t) if t.starts_with("for ") => {
                let words: Vec<&str> = t.split(' ').collect();
                let Value::List(items) = lookup(&locals, words[3]) else {
                    panic!("list")
                };
                if items.is_empty() {
                    pc = skip(pc, false) + 1;
                    continue;
                }
                let n = items.len();
                locals.push((words[1].into(), Value::Text(items[0].clone())));
                locals.push(("first".into(), Value::Boolean(true)));
                locals.push(("last".into(), Value::Boolean(n == 1)));
                stack.push(Frame::For {
                    var: words[1].into(),
                    items,
                    next: 1,
                    body: pc + 1,
                });
            }
            Tok::Tag(t) if t == "end" => match stack.pop() {
                Some(Frame::For { var, items, next, body }) => {
                    locals.truncate(locals.len() - 3);
                    if next < items.len() {
                        locals.push((var.clone(), Value::Text(items[next].clone())));
                        locals.push(("first".into(), Value::Boolean(false)));
                        locals.push(("last".into(), Value::Boolean(next + 1 == items.len())));
                        stack.push(Frame::For {
                            var,
                            items,
                            next: next + 1,
                            body,
                        });
                        pc = body;
                        continue;
                    }
                }
                Some(Frame::If) | None => {}
            },
            Tok::Tag(name) => out.push_str(&lookup(&locals, name).to_string()),
        }
        pc += 1;
    }
    out
}

const TEXT: [&str; 6] = ["a", " ", "\n", "x = ", "();", "}"];

fn random_template(rng: &mut ChaCha8Rng, depth: usize, loop_vars: &mut Vec<String>, out: &mut String) {
    let n = rng.random_range(0..5);
    for _ in 0..n {
        match rng.random_range(0..10) {
            0..=2 => out.push_str(TEXT[rng.random_range(0..TEXT.len())]),
            3 => out.push_str("<%%"),
            4 => {
                let mut names = vec!["t1", "t2", "n", "b1", "l1"];
                names.extend(loop_vars.iter().map(String::as_str));
                if !loop_vars.is_empty() {
                    names.extend(["first", "last"]);
                }
                let name = names[rng.random_range(0..names.len())].to_string();
                out.push_str(&format!("<%{name}%>"));
            }
            5 | 6 if depth < 3 => {
                let conds = ["b1", "b2", "t1", "l2", "n"];
                out.push_str(&format!("<%if {}%>", conds[rng.random_range(0..conds.len())]));
                random_template(rng, depth + 1, loop_vars, out);
                if rng.random_bool(0.5) {
                    out.push_str("<%else%>");
                    random_template(rng, depth + 1, loop_vars, out);
                }
                out.push_str("<%end%>");
            }
            7 | 8 if depth < 3 => {
                let var = format!("v{depth}");
                let list = if rng.random_bool(0.5) { "l1" } else { "l2" };
                out.push_str(&format!("<%for {var} in {list}%>"));
                loop_vars.push(var);
                random_template(rng, depth + 1, loop_vars, out);
                loop_vars.pop();
                out.push_str("<%end%>");
            }
            _ => out.push('-'),
        }
    }
}

fn random_env(rng: &mut ChaCha8Rng) -> BTreeMap<String, Value> {
    let list = |rng: &mut ChaCha8Rng| {
        let n = rng.random_range(0..4);
        Value::List((0..n).map(|i| format!("e{i}")).collect())
    };
    let text = |rng: &mut ChaCha8Rng| Value::Text(["", "hi", "x y"][rng.random_range(0..3)].into());
    let mut env = BTreeMap::new();
    env.insert("t1".into(), text(rng));
    env.insert("t2".into(), text(rng));
    env.insert("n".into(), Value::Integer(rng.random_range(-2..3)));
    env.insert("b1".into(), Value::Boolean(rng.random_bool(0.5)));
    env.insert("b2".into(), Value::Boolean(rng.random_bool(0.5)));
    env.insert("l1".into(), list(rng));
    env.insert("l2".into(), list(rng));
    env
}

#[test]
fn oracle_agrees_on_documented_examples() {
    let names: BTreeMap<String, Value> = [("names".to_string(), Value::List(vec!["a".into(), "b".into()]))].into();
    assert_eq!(oracle("<%for n in names%>- <%n%>\n<%end%>", &names), "- a\n- b\n");
    assert_eq!(oracle("x = 1", &BTreeMap::new()), "x = 1");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn expansion_matches_scan_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut src = String::new();
        random_template(&mut rng, 0, &mut Vec::new(), &mut src);
        let env = random_env(&mut rng);
        let (bindings, builtins): (Bindings, BTreeMap<String, Value>) = (env.clone(), BTreeMap::new());
        let got = expand_template(&MaskedTemplate::new(src.clone()), &bindings, &builtins).unwrap();
        prop_assert_eq!(got, oracle(&src, &env), "template {:?}", src);
    }
}

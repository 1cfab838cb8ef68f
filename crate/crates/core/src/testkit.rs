//! Helpers shared by property tests and the acceptance suite: random but
//! always-valid session scripts, and the per-case property checks.
//!
//! Every candidate action is tried against a live project and only kept
//! when it succeeds, so the generated script replays cleanly.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::component::{Constraint, FieldKind, InteractionPageSchema, ParamField, Registry};
use crate::persistence::{
    load_project, replay_session, run_action, save_project, Action, AnchorSelector, SessionScript,
};
use crate::steps::{validate_bindings, OutlineRow, Project, StepsError};
use crate::value::{RawBindings, RawValue};

const GOAL_NAMES: [&str; 3] = ["Main", "Helper", "Extra"];
const TEXTS: [&str; 14] = [
    "x",
    "total",
    "n",
    "i",
    "1",
    "0",
    "42",
    "n + 1",
    "count * 2",
    "hello",
    "Hello, world",
    "a_b",
    "(n % 3) == 0",
    "",
];
const ITEMS: [&str; 5] = ["a", "b", "n", "1", "x + 1"];

fn accepts(f: &ParamField, raw: &RawValue) -> bool {
    let schema = InteractionPageSchema {
        fields: vec![f.clone()],
    };
    let mut b = RawBindings::new();
    b.insert(f.name.clone(), raw.clone());
    validate_bindings(&schema, &b).is_ok()
}

fn candidate(f: &ParamField, rng: &mut ChaCha8Rng) -> RawValue {
    match f.kind {
        FieldKind::Text => RawValue::One(TEXTS.choose(rng).expect("non-empty").to_string()),
        FieldKind::Integer => {
            let (lo, hi) = match &f.constraint {
                Some(Constraint::Range { min, max }) => ((*min).max(-5), (*max).min(20)),
                _ => (-5, 20),
            };
            let v = if lo <= hi { rng.random_range(lo..=hi) } else { lo };
            RawValue::One(v.to_string())
        }
        FieldKind::Boolean => RawValue::One(
            ["yes", "no", "true", "false", "1", "0"]
                .choose(rng)
                .expect("non-empty")
                .to_string(),
        ),
        FieldKind::Enum => RawValue::One(f.choices().choose(rng).cloned().unwrap_or_default()),
        FieldKind::List => {
            let n = rng.random_range(0..=3);
            RawValue::Many(
                (0..n)
                    .map(|_| ITEMS.choose(rng).expect("non-empty").to_string())
                    .collect(),
            )
        }
    }
}

/// Raw bindings that validate against `page`. Optional fields are sometimes
/// left out so defaults get exercised.
pub fn random_bindings(page: &InteractionPageSchema, rng: &mut ChaCha8Rng) -> RawBindings {
    let mut out = RawBindings::new();
    for f in &page.fields {
        if !f.required && rng.random_bool(0.3) {
            continue;
        }
        for _ in 0..32 {
            let raw = candidate(f, rng);
            if accepts(f, &raw) {
                out.insert(f.name.clone(), raw);
                break;
            }
        }
    }
    out
}

/// Anchors usable in `project`'s goal `gid`: the root socket plus every
/// socket owned by a ledger entry, as script selectors.
fn anchors(project: &Project, gid: &str) -> Vec<AnchorSelector> {
    let goal = project.goal(gid).expect("goal exists");
    let mut out = Vec::new();
    if let Some(s) = &goal.root.socket {
        out.push(AnchorSelector {
            owner: None,
            socket: s.clone(),
        });
    }
    for (ordinal, i) in goal.interactions.iter().enumerate() {
        for (_, n) in goal.root.walk() {
            if n.owner.as_deref() == Some(&i.interaction_id) && n.accepts_children() {
                out.push(AnchorSelector {
                    owner: Some(ordinal),
                    socket: n.socket.clone().expect("container has socket"),
                });
            }
        }
    }
    out
}

pub struct Generated {
    pub script: SessionScript,
    pub project: Project,
    /// Per action: `(goal name, interaction id)` it created or edited.
    pub touched: Vec<Option<(String, String)>>,
}

fn goal_name(action: &Action) -> Option<&str> {
    match action {
        Action::CreateGoal { .. } => None,
        Action::Apply { goal, .. } | Action::Edit { goal, .. } | Action::Delete { goal, .. } => Some(goal),
    }
}

/// A script of up to `len` successful actions after the initial goal, built
/// from `seed`. Same seed, same script.
pub fn generate_session(registry: &Registry, seed: u64, len: usize) -> Generated {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let targets = registry.target_ids();
    let mut script = SessionScript::new(&format!("Random {seed}"));
    script.targets = Some(targets.clone());
    let mut project = Project::create(&script.project, &targets, registry).expect("registry has targets");
    let mut touched = Vec::new();

    let root_id = registry.root_component().map(|c| c.id.clone());
    let components: Vec<String> = registry
        .packs()
        .iter()
        .flat_map(|p| p.components.iter().map(|c| c.id.clone()))
        .filter(|id| Some(id) != root_id.as_ref())
        .collect();

    let first = Action::CreateGoal {
        name: GOAL_NAMES[0].into(),
    };
    run_action(&mut project, &first, registry).expect("first goal is valid");
    script.actions.push(first);
    touched.push(None);

    let mut produced = 0;
    let mut attempts = 0;
    while produced < len && attempts < len * 20 {
        attempts += 1;
        let goal = project.goals.choose(&mut rng).expect("at least one goal");
        let gid = goal.goal_id.clone();
        let gname = goal.name.clone();
        let ledger_len = goal.interactions.len();
        let roll = rng.random_range(0..100);
        let action = if roll < 4 && project.goals.len() < GOAL_NAMES.len() {
            Action::CreateGoal {
                name: GOAL_NAMES[project.goals.len()].into(),
            }
        } else if roll < 70 || ledger_len == 0 {
            let component = components.choose(&mut rng).expect("pack has components").clone();
            let page = &registry.component(&component).expect("listed").page;
            Action::Apply {
                goal: gname,
                anchor: anchors(&project, &gid).choose(&mut rng).expect("root socket").clone(),
                bindings: random_bindings(page, &mut rng),
                component,
            }
        } else if roll < 85 {
            let interaction = rng.random_range(0..ledger_len);
            let cid = &project.goal(&gid).expect("goal").interactions[interaction].component_id;
            let page = &registry.component(cid).expect("known").page;
            Action::Edit {
                goal: gname,
                interaction,
                bindings: random_bindings(page, &mut rng),
            }
        } else {
            Action::Delete {
                goal: gname,
                interaction: rng.random_range(0..ledger_len),
                cascade: rng.random_bool(0.5),
            }
        };
        if let Ok(id) = run_action(&mut project, &action, registry) {
            touched.push(id.map(|id| (goal_name(&action).expect("goal action").to_string(), id)));
            script.actions.push(action);
            produced += 1;
        }
    }
    Generated {
        script,
        project,
        touched,
    }
}

fn replay(script: &SessionScript, registry: &Registry) -> Result<Project, String> {
    let targets = script.targets.clone().unwrap_or_else(|| registry.target_ids());
    replay_session(script, registry, &targets).map_err(|e| e.to_string())
}

fn outlines(p: &Project) -> Vec<Vec<OutlineRow>> {
    p.goals.iter().map(|g| g.steps_outline()).collect()
}

/// Structural checks of every goal: unique step ids, every non-root node
/// owned by a ledger entry, each entry owning exactly its step spec's node
/// count, and every anchor a container inside the goal.
pub fn check_ledger_consistency(p: &Project, registry: &Registry) -> Result<(), String> {
    for goal in &p.goals {
        let nodes = goal.root.walk();
        let mut ids: Vec<&str> = nodes.iter().map(|(_, n)| n.step_id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(format!("{}: duplicate step ids", goal.name));
        }
        let mut owned = 0;
        for i in &goal.interactions {
            let spec = &registry
                .component(&i.component_id)
                .ok_or("unknown component")?
                .step_spec;
            let count = nodes
                .iter()
                .filter(|(_, n)| n.owner.as_deref() == Some(i.interaction_id.as_str()))
                .count();
            if count != spec.node_count() {
                return Err(format!("{}: {} owns {count} nodes", goal.name, i.interaction_id));
            }
            owned += count;
            match goal.find_step(&i.anchor) {
                Some(a) if a.accepts_children() => {}
                _ => return Err(format!("{}: bad anchor for {}", goal.name, i.interaction_id)),
            }
        }
        if owned != nodes.len() - 1 {
            return Err(format!(
                "{}: {} non-root nodes but {owned} owned",
                goal.name,
                nodes.len() - 1
            ));
        }
        if nodes
            .iter()
            .any(|(_, n)| n.kind == crate::component::NodeKind::Leaf && !n.children.is_empty())
        {
            return Err(format!("{}: leaf with children", goal.name));
        }
    }
    Ok(())
}

/// load(save(p)) equals p, and save(load(b)) equals b.
pub fn check_round_trip(registry: &Registry, seed: u64, len: usize) -> Result<(), String> {
    let g = generate_session(registry, seed, len);
    check_ledger_consistency(&g.project, registry)?;
    let bytes = save_project(&g.project, registry);
    let loaded = load_project(&bytes, registry).map_err(|e| e.to_string())?;
    if loaded != g.project {
        return Err("loaded project differs".into());
    }
    if save_project(&loaded, registry) != bytes {
        return Err("re-saved bytes differ".into());
    }
    let replayed = replay(&g.script, registry)?;
    if save_project(&replayed, registry) != bytes {
        return Err("replayed script saves different bytes".into());
    }
    Ok(())
}

/// Editing interaction i to P' at the end of a session gives the same
/// outlines as the session where i was given P' from the start.
pub fn check_edit_equivalence(registry: &Registry, seed: u64, len: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_ed17);
    let mut attempt = 0u64;
    let (g, goal, iid) = loop {
        let g = generate_session(registry, seed.wrapping_add(attempt << 32), len);
        let survivors: Vec<(String, String)> = g
            .project
            .goals
            .iter()
            .flat_map(|goal| {
                goal.interactions
                    .iter()
                    .map(|i| (goal.name.clone(), i.interaction_id.clone()))
            })
            .collect();
        if let Some((goal, iid)) = survivors.choose(&mut rng).cloned() {
            break (g, goal, iid);
        }
        attempt += 1;
    };
    let target_goal = g.project.goal_by_name(&goal).expect("survivor goal");
    let ordinal = target_goal
        .interactions
        .iter()
        .position(|i| i.interaction_id == iid)
        .expect("survivor");
    let component = registry
        .component(&target_goal.interactions[ordinal].component_id)
        .ok_or("unknown component")?;
    let new_raw = random_bindings(&component.page, &mut rng);

    let mut edited = g.script.clone();
    edited.actions.push(Action::Edit {
        goal: goal.clone(),
        interaction: ordinal,
        bindings: new_raw.clone(),
    });
    let mut fresh = g.script.clone();
    for (action, touched) in fresh.actions.iter_mut().zip(&g.touched) {
        if touched.as_ref() == Some(&(goal.clone(), iid.clone())) {
            match action {
                Action::Apply { bindings, .. } | Action::Edit { bindings, .. } => *bindings = new_raw.clone(),
                _ => unreachable!("only apply and edit touch interactions"),
            }
        }
    }
    let a = replay(&edited, registry)?;
    let b = replay(&fresh, registry)?;
    if outlines(&a) != outlines(&b) {
        return Err(format!("outlines differ after editing {goal}/{iid}"));
    }
    Ok(())
}

/// Apply k (plus a few children inside k), then cascade-delete k: outline and
/// user-step count return to what they were.
pub fn check_delete_inverse(registry: &Registry, seed: u64, len: usize) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xde1e7e);
    let mut p = generate_session(registry, seed, len).project;
    let gid = p.goals.choose(&mut rng).expect("goal").goal_id.clone();
    let before = p.goal(&gid).expect("goal").steps_outline();
    let before_count = p
        .goal(&gid)
        .expect("goal")
        .count_user_steps(registry)
        .map_err(|e| e.to_string())?;

    let root_id = registry.root_component().map(|c| c.id.clone());
    let components: Vec<&str> = registry
        .packs()
        .iter()
        .flat_map(|p| p.components.iter().map(|c| c.id.as_str()))
        .filter(|id| root_id.as_deref() != Some(*id))
        .collect();
    let apply = |p: &mut Project, rng: &mut ChaCha8Rng, sel: &AnchorSelector| -> Result<String, StepsError> {
        let cid = components.choose(rng).expect("components");
        let raw = random_bindings(&registry.component(cid).expect("listed").page, rng);
        let anchor = p.goal(&gid).expect("goal").resolve_anchor(sel.owner, &sel.socket)?;
        p.apply_raw(&gid, &anchor, cid, &raw, registry)
    };

    let sel = anchors(&p, &gid).choose(&mut rng).expect("root socket").clone();
    let k = apply(&mut p, &mut rng, &sel).map_err(|e| e.to_string())?;
    let k_ordinal = p.goal(&gid).expect("goal").interactions.len() - 1;
    for _ in 0..rng.random_range(0..4) {
        let inside: Vec<AnchorSelector> = anchors(&p, &gid)
            .into_iter()
            .filter(|a| a.owner.is_some_and(|o| o >= k_ordinal))
            .collect();
        if let Some(sel) = inside.choose(&mut rng).cloned() {
            apply(&mut p, &mut rng, &sel).map_err(|e| e.to_string())?;
        }
    }
    let removed = p.delete_interaction(&gid, &k, true).map_err(|e| e.to_string())?;
    if !removed.contains(&k) {
        return Err(format!("{k} not removed"));
    }
    let goal = p.goal(&gid).expect("goal");
    if goal.steps_outline() != before {
        return Err(format!("outline not restored after deleting {k}"));
    }
    let after_count = goal.count_user_steps(registry).map_err(|e| e.to_string())?;
    if after_count != before_count {
        return Err(format!("user steps {after_count} != {before_count}"));
    }
    Ok(())
}

/// User steps of each goal counted by walking the saved project document
/// with an explicit stack, independent of the typed tree and the ledger.
pub fn tree_walk_user_steps(saved: &[u8]) -> Vec<usize> {
    let doc: serde_json::Value = serde_json::from_slice(saved).expect("saved project is JSON");
    doc["project"]["goals"]
        .as_array()
        .expect("goals")
        .iter()
        .map(|goal| {
            let mut stack = vec![&goal["root"]];
            let mut nodes = 0;
            while let Some(node) = stack.pop() {
                nodes += 1;
                if let Some(children) = node["children"].as_array() {
                    stack.extend(children);
                }
            }
            nodes - 1
        })
        .collect()
}

/// Tree-walk counts of the reference sessions, frozen from the first
/// verified run. `fizz_like`: for (1) + three if/else (3 each) + four
/// prints (1 each) = 14.
pub const REFERENCE_USER_STEPS: [(&str, usize); 10] = [
    ("hello", 1),
    ("echo_input", 4),
    ("arithmetic", 12),
    ("fizz_like", 14),
    ("countdown", 5),
    ("functions", 10),
    ("form_demo", 9),
    ("nested_loops", 4),
    ("factorial", 8),
    ("edited_sums", 10),
];

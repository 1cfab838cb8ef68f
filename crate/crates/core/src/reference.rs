//! The bundled reference pack, its demo sessions and default toolchains.

use crate::build::ToolchainConfig;
use crate::component::{load_pack, ComponentPack, Registry};

pub const PACK_JSON: &str = include_str!("../reference/reference.pack.json");
/// Directory of deliberately broken packs and `expected.json`, which names
/// the finding each one must trigger.
pub const BROKEN_DIR: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/reference/broken");
pub const TOOLCHAINS_JSON: &str = include_str!("../reference/toolchains.json");

/// `(name, session script, stdin)` for each demo program.
pub const SESSIONS: [(&str, &str, &str); 10] = [
    ("hello", include_str!("../reference/sessions/hello.session.json"), ""),
    (
        "echo_input",
        include_str!("../reference/sessions/echo_input.session.json"),
        include_str!("../reference/sessions/echo_input.stdin"),
    ),
    (
        "arithmetic",
        include_str!("../reference/sessions/arithmetic.session.json"),
        "",
    ),
    (
        "fizz_like",
        include_str!("../reference/sessions/fizz_like.session.json"),
        "",
    ),
    (
        "countdown",
        include_str!("../reference/sessions/countdown.session.json"),
        "",
    ),
    (
        "functions",
        include_str!("../reference/sessions/functions.session.json"),
        "",
    ),
    (
        "form_demo",
        include_str!("../reference/sessions/form_demo.session.json"),
        "",
    ),
    (
        "nested_loops",
        include_str!("../reference/sessions/nested_loops.session.json"),
        "",
    ),
    (
        "factorial",
        include_str!("../reference/sessions/factorial.session.json"),
        "",
    ),
    (
        "edited_sums",
        include_str!("../reference/sessions/edited_sums.session.json"),
        "",
    ),
];

pub fn pack() -> ComponentPack {
    load_pack(PACK_JSON.as_bytes()).expect("reference pack is valid")
}

pub fn registry() -> Registry {
    let mut r = Registry::new();
    r.add(pack()).expect("empty registry accepts the reference pack");
    r
}

pub fn toolchains() -> ToolchainConfig {
    ToolchainConfig::parse(TOOLCHAINS_JSON.as_bytes()).expect("reference toolchains are valid")
}

pub fn session(name: &str) -> Option<&'static str> {
    SESSIONS.iter().find(|(n, _, _)| *n == name).map(|(_, s, _)| *s)
}

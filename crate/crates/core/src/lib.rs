//! Steps-tree program construction.
//!
//! Programs are built by applying components from loaded packs into a goal's
//! steps tree. Each application is an interaction: a component plus the
//! bindings collected from its page. Source code is generated from the
//! interaction ledger by expanding each component's masked templates, and
//! can be built and run with a per-target toolchain.

pub mod build;
pub mod codegen;
pub mod component;
pub mod persistence;
pub mod reference;
pub mod steps;
pub mod value;

#[cfg(any(test, feature = "testkit"))]
pub mod testkit;

pub use value::{Bindings, RawBindings, RawValue, Value};

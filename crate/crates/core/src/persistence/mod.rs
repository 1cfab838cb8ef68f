//! Durable storage: canonical project files (`*.stw.json`) and replayable
//! session scripts (`*.session.json`).

mod project_file;
mod session;

#[cfg(any(test, feature = "testkit"))]
pub(crate) use session::run_action;

pub use project_file::{load_project, save_project, PackRef, PersistError, ProjectFile, PROJECT_FORMAT};
pub use session::{
    parse_session, replay_session, serialize_session, Action, AnchorSelector, ReplayError, SessionScript,
    SESSION_FORMAT,
};

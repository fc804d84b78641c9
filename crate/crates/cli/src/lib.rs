//! Scene loading, command dispatch and JSON reports for the `helikon` binary.

pub mod commands;
pub mod report;
pub mod scene;

pub use commands::{run, Command, Flags, Outcome, DEFAULT_TOL};
pub use report::Report;
pub use scene::{load_scene, parse_scene, Scene, SceneError};

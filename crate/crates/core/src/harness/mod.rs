//! Scenario runner and the property suite used by the command-line tool.

pub mod verify;
pub mod scenario;

//! Library half of the `resplit` binary: configuration parsing, artifact
//! writers and the subcommand implementations, kept testable outside the
//! process boundary.

pub mod artifacts;
pub mod commands;
pub mod config;

//! Command implementations behind the `malade` binary.

pub mod config;
pub mod eval;
pub mod replay;
pub mod run;
pub mod trials;

pub use config::{Overrides, RunConfig};
pub use eval::cmd_eval;
pub use replay::cmd_replay;
pub use run::{cmd_run, RunFlags};
pub use trials::{cmd_trials, TrialsOptions};

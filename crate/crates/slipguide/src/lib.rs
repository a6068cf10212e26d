//! File formats and the command-line tool around `slipguide-core`.

pub mod cli;
pub mod formats;
pub mod task;

pub use formats::{FormatError, RunConfig, SavedPolicy, Task};
pub use task::TaskEnv;

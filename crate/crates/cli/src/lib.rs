//! Experiment runner, verification suites and diagnostic exports built on
//! `lll-core`, shared by the `lll` binary and the integration tests.

pub mod config;
pub mod diag;
pub mod runner;
pub mod verify;

use lll_core::Error;

/// Process exit status for a failed command: 2 for configuration problems,
/// 3 when training diverged, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Numerics(_) => 3,
        _ => 1,
    }
}

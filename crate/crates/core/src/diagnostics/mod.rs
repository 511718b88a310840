//! Executable analyses: error propagation through inference, the delay and
//! decay theorems, gradient alignment with BP, the linear-network identities,
//! free-energy traces and MAC accounting, with CSV and PGM writers.
//!
//! Every function here works on copies or shared references; the caller's
//! network is never modified.

mod align;
mod energy;
mod errorprop;
mod flops;
mod linear;
mod report;
mod theorems;

pub use align::{align_run, cosine, AlignTrace, Ema};
pub use energy::{energy_trace, write_energy_csv};
pub use errorprop::{record_error_prop, ErrorPropMatrix};
pub use flops::{flop_report, write_flops_csv};
pub use linear::{linear_decomposition_check, omega, omega_decay_check, DecompositionReport, OmegaTrace};
pub use report::heatmap_pgm;
pub use theorems::{decay_check, delay_check, theorem_fixture, DecayEntry, DELAY_ARRIVE_TOL, DELAY_ZERO_TOL};

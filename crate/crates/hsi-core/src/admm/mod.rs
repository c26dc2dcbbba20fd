//! Plug-and-play alternating-direction solver: parameter schedule,
//! closed-form data updates per task, the pluggable denoiser prior, and
//! the iteration driver with task-specific initialization.

pub mod denoiser;
pub mod driver;
pub mod init;
pub mod schedule;
pub mod xupdate;

pub use denoiser::{BoxFilterDenoiser, Denoiser, GrcnnDenoiser, IdentityDenoiser};
pub use driver::{run, run_with_observer, AdmmState, RunOptions, RunResult, TraceRow};
pub use init::initialize;
pub use schedule::{make_schedule, Schedule, DEFAULT_LAMBDA, DEFAULT_SIGMA1, DEFAULT_SIGMA2};
pub use xupdate::{
    x_update, x_update_cs, x_update_dense_oracle, x_update_inpaint, x_update_sr,
    DENSE_ORACLE_MAX_UNKNOWNS,
};

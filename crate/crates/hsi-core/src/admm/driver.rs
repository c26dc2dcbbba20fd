//! The plug-and-play alternating-direction driver.
//!
//! Each iteration solves the data term in closed form at the current
//! penalty, denoises the shifted iterate at the current noise level, and
//! accumulates the scaled dual variable: x̃ = v - u, x = prox(x̃),
//! ṽ = x + u, v = D_sigma(ṽ), u += x - v. The restored cube is the final v
//! (the prior-consistent iterate).

use crate::admm::denoiser::Denoiser;
use crate::admm::init::initialize;
use crate::admm::schedule::Schedule;
use crate::admm::xupdate::x_update;
use crate::cube::HsiCube;
use crate::degrade::TaskOperator;
use crate::error::{CoreError, Result};
use crate::metrics;

/// Primal, auxiliary, and scaled dual iterates after one iteration.
#[derive(Debug, Clone)]
pub struct AdmmState {
    pub x: HsiCube,
    pub v: HsiCube,
    pub u: HsiCube,
    /// 0-based index of the completed iteration.
    pub iteration: usize,
}

/// One trace record per iteration.
#[derive(Debug, Clone)]
pub struct TraceRow {
    pub iteration: usize,
    pub sigma: f64,
    pub rho: f64,
    /// L2 norm of x - v after the dual update.
    pub primal_residual: f64,
    /// PSNR of v against the supplied ground truth, when given.
    pub psnr: Option<f64>,
}

pub struct RunOptions<'a> {
    /// Adds a PSNR column to the trace.
    pub ground_truth: Option<&'a HsiCube>,
    /// Start from this cube instead of the task-specific initialization.
    pub initial: Option<HsiCube>,
    /// Project the prior iterate v onto this range after each denoising
    /// step. Normalized cubes live in [0, 1]; without the projection a
    /// denoiser's small output bias can compound through the dual variable
    /// and drag the iteration to an unphysical fixed point.
    pub value_range: Option<(f64, f64)>,
}

impl Default for RunOptions<'_> {
    fn default() -> Self {
        Self {
            ground_truth: None,
            initial: None,
            value_range: Some((0.0, 1.0)),
        }
    }
}

#[derive(Debug)]
pub struct RunResult {
    /// The restored cube (final auxiliary iterate v).
    pub restored: HsiCube,
    pub trace: Vec<TraceRow>,
    pub final_state: AdmmState,
}

/// Run the iteration; the observer sees the state after every iteration.
pub fn run_with_observer(
    op: &TaskOperator,
    y: &HsiCube,
    denoiser: &dyn Denoiser,
    schedule: &Schedule,
    options: RunOptions<'_>,
    mut observer: impl FnMut(&AdmmState),
) -> Result<RunResult> {
    let x0 = match options.initial {
        Some(init) => init,
        None => initialize(op, y)?,
    };
    let (rows, cols, bands) = x0.dims();
    let mut state = AdmmState {
        v: x0.clone(),
        x: x0,
        u: HsiCube::zeros(rows, cols, bands),
        iteration: 0,
    };
    let mut trace = Vec::with_capacity(schedule.len());

    for k in 0..schedule.len() {
        let sigma = schedule.sigmas[k];
        let rho = schedule.rhos[k];

        let x_tilde = state.v.sub(&state.u)?;
        state.x = x_update(op, y, &x_tilde, rho)?;
        let v_tilde = state.x.add(&state.u)?;
        state.v = denoiser.denoise(&v_tilde, sigma)?;
        if let Some((lo, hi)) = options.value_range {
            state.v = state.v.clamp(lo, hi);
        }
        if !state.x.all_finite() || !state.v.all_finite() {
            return Err(CoreError::NonFiniteIterate { iteration: k });
        }
        let diff = state.x.sub(&state.v)?;
        state.u = state.u.add(&diff)?;
        state.iteration = k;

        let psnr = match options.ground_truth {
            Some(gt) => Some(metrics::psnr(gt, &state.v)?.0),
            None => None,
        };
        trace.push(TraceRow {
            iteration: k,
            sigma,
            rho,
            primal_residual: diff.l2_norm(),
            psnr,
        });
        observer(&state);
    }

    Ok(RunResult {
        restored: state.v.clone(),
        trace,
        final_state: state,
    })
}

/// Run the iteration with no observer.
pub fn run(
    op: &TaskOperator,
    y: &HsiCube,
    denoiser: &dyn Denoiser,
    schedule: &Schedule,
    options: RunOptions<'_>,
) -> Result<RunResult> {
    run_with_observer(op, y, denoiser, schedule, options, |_| {})
}

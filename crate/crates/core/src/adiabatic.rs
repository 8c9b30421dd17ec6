//! Adiabatic evolution of noiseless blocks along a curve of generators.
//!
//! A state `ρ^A ⊗ ϱ^B(0)` prepared in a block follows the block when the
//! curve is traversed slowly: its B part stays at the instantaneous fixed
//! state while the A part evolves under the effective Hamiltonian
//! `V_eff(s) = Tr_B(W† V(s) W · I ⊗ ϱ^B)`, with an error that vanishes as
//! `T → ∞` no slower than `O(1/√(TΔ))`.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{propagate_curve, LindbladCurve, PropagateOptions};
use crate::numerics::{
    check_density, dagger, hermitize, identity, kron, matexp, matrix_unit, max_abs, partial_trace,
    trace, trace_distance, vectorize, Operator, Side, I,
};
use crate::structure::{BlockTracker, Block, GapReport, compute_gaps, DEFAULT_S_POINTS};

/// ρ ↦ W (Tr_B(W† ρ W) ⊗ ϱ^B) W†, the projector onto the block's fixed points.
#[derive(Clone, Debug)]
pub struct SuperProjector {
    pub block: Block,
}

impl SuperProjector {
    pub fn apply(&self, rho: &Operator) -> Operator {
        self.block.embed_product(&self.block.reduce_to_a(rho))
    }

    /// Column-stacked d²×d² matrix of the projector.
    pub fn superoperator(&self) -> Operator {
        let d = self.block.ambient_dim();
        let mut out = ndarray::Array2::zeros((d * d, d * d));
        for j in 0..d {
            for i in 0..d {
                let img = self.apply(&matrix_unit(d, i, j));
                out.column_mut(i + j * d).assign(&vectorize(&img));
            }
        }
        out
    }
}

pub fn block_projector(block: &Block) -> SuperProjector {
    SuperProjector {
        block: block.clone(),
    }
}

/// Traceless part X − Tr(X)/d · I.
pub fn traceless(x: &Operator) -> Operator {
    let d = x.nrows();
    x - &identity(d).mapv(|z| z * (trace(x) / d as f64))
}

/// V_eff = Tr_B(W† V W · I ⊗ ϱ^B), Hermitian on A.
pub fn v_eff(v: &Operator, block: &Block) -> Result<Operator> {
    if v.dim() != (block.ambient_dim(), block.ambient_dim()) {
        return Err(Error::Dimension("perturbation does not match block".into()));
    }
    let weighted = block
        .compress(v)
        .dot(&kron(&identity(block.m), &block.fixed_state));
    Ok(hermitize(&partial_trace(&weighted, block.m, block.n, Side::B)?))
}

/// Time-ordered product of exp(−i δs V_eff(s_mid)) over [0, s_end].
pub fn effective_unitary<F>(veff: F, s_end: f64, steps: usize) -> Result<Operator>
where
    F: Fn(f64) -> Result<Operator>,
{
    if !(s_end > 0.0 && s_end <= 1.0) {
        return Err(Error::InvalidArgument(format!("s_end = {s_end} outside (0, 1]")));
    }
    if steps < 100 {
        return Err(Error::InvalidArgument(format!("steps = {steps} < 100")));
    }
    let ds = s_end / steps as f64;
    let mut u: Option<Operator> = None;
    for k in 0..steps {
        let v = veff((k as f64 + 0.5) * ds)?;
        let step = matexp(&v.mapv(|z| -I * ds * z))?;
        u = Some(match u {
            None => step,
            Some(prev) => step.dot(&prev),
        });
    }
    Ok(u.expect("steps ≥ 100"))
}

#[derive(Clone, Debug)]
pub struct AdiabaticOptions {
    /// Integrator substeps; `None` uses the propagation default.
    pub steps: Option<usize>,
    /// Start B from I/n instead of ϱ^B(0).
    pub start_mixed_b: bool,
    /// Substeps for the effective unitary.
    pub veff_steps: usize,
}

impl Default for AdiabaticOptions {
    fn default() -> Self {
        AdiabaticOptions {
            steps: None,
            start_mixed_b: false,
            veff_steps: 1000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct AdiabaticOutcome {
    pub total_time: f64,
    /// Trace distance between Tr_B{W† ρ(T) W} and U_A ρ^A U_A†.
    pub error: f64,
    /// 1 − Tr(P ρ(T) P).
    pub leakage: f64,
    pub steps: usize,
    #[serde(skip)]
    pub final_a: Operator,
    #[serde(skip)]
    pub ideal_a: Operator,
    #[serde(skip)]
    pub effective_unitary: Operator,
    /// Lab-frame state at t = T.
    #[serde(skip)]
    pub final_state: Operator,
}

/// Effective A-unitary along the curve for the tracked block.
pub fn tracked_effective_unitary(
    curve: &LindbladCurve,
    tracker: &BlockTracker,
    steps: usize,
) -> Result<Operator> {
    match tracker {
        BlockTracker::Frame { block0 } => {
            effective_unitary(|s| v_eff(&curve.frame_generator(s)?, block0), 1.0, steps)
        }
        BlockTracker::Redecompose { m, .. } => {
            if *m != 1 {
                return Err(Error::InvalidArgument(
                    "re-decomposed tracking fixes no A basis along the curve; use a frame tracker for m > 1".into(),
                ));
            }
            effective_unitary(
                |s| v_eff(&curve.frame_generator(s)?, &tracker.frame_block_at(curve, s)?),
                1.0,
                steps,
            )
        }
    }
}

/// Runs the full dynamics for time T and compares the block's A state with
/// the adiabatic prediction.
pub fn adiabatic_error(
    curve: &LindbladCurve,
    tracker: &BlockTracker,
    rho0_a: &Operator,
    total_time: f64,
    opts: &AdiabaticOptions,
) -> Result<AdiabaticOutcome> {
    let block0 = tracker.block_at(curve, 0.0)?;
    if rho0_a.dim() != (block0.m, block0.m) {
        return Err(Error::Dimension("initial A state does not match block".into()));
    }
    check_density(rho0_a)?;
    let h_a = traceless(&block0.internal_hamiltonian);
    if max_abs(&h_a) > 1e-9 * (1.0 + max_abs(&block0.internal_hamiltonian)) {
        return Err(Error::InvalidArgument(
            "adiabatic tracking supports blocks with H^A ∝ I only".into(),
        ));
    }
    let rho0 = if opts.start_mixed_b {
        let n = block0.n;
        block0.embed(&kron(rho0_a, &identity(n).mapv(|z| z / n as f64)))
    } else {
        block0.embed_product(rho0_a)
    };
    let popts = PropagateOptions {
        steps: opts.steps,
        stride: usize::MAX,
    };
    let traj = propagate_curve(curve, &rho0, total_time, &popts)?;
    let final_state = curve.to_lab(1.0, traj.final_state())?;
    let block1 = tracker.block_at(curve, 1.0)?;
    let final_a = block1.reduce_to_a(&final_state);
    let leakage = 1.0 - trace(&final_a).re;
    let u_a = tracked_effective_unitary(curve, tracker, opts.veff_steps)?;
    let ideal_a = u_a.dot(rho0_a).dot(&dagger(&u_a));
    Ok(AdiabaticOutcome {
        total_time,
        error: trace_distance(&final_a, &ideal_a)?,
        leakage,
        steps: traj.steps,
        final_a,
        ideal_a,
        effective_unitary: u_a,
        final_state,
    })
}

/// Errors below this are integrator noise and are left out of slope fits.
pub const ERROR_FLOOR: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct ScalingReport {
    pub t_values: Vec<f64>,
    pub errors: Vec<f64>,
    pub leakages: Vec<f64>,
    /// Least-squares slope of log error against log T; absent when fewer
    /// than two errors lie above the floor.
    pub fitted_slope: Option<f64>,
    /// C = error(T₀)·√T₀ for the smallest T₀.
    pub envelope_constant: f64,
    /// error(T) ≤ C/√T for every T.
    pub envelope_holds: bool,
    /// Each error at most 10% above its predecessor.
    pub monotone: bool,
    pub gap: Option<GapReport>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct ScanOptions {
    pub adiabatic: AdiabaticOptions,
    /// Also compute the gap on this many s points.
    pub gap_s_points: Option<usize>,
}

/// OLS slope on (ln T, ln error), skipping errors under [`ERROR_FLOOR`].
pub fn fit_loglog_slope(t_values: &[f64], errors: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = t_values
        .iter()
        .zip(errors)
        .filter(|(_, &e)| e >= ERROR_FLOOR)
        .map(|(&t, &e)| (t.ln(), e.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

/// Adiabatic errors over a list of total times, in parallel.
pub fn scaling_scan(
    curve: &LindbladCurve,
    tracker: &BlockTracker,
    rho0_a: &Operator,
    t_values: &[f64],
    opts: &ScanOptions,
) -> Result<ScalingReport> {
    if t_values.len() < 4 {
        return Err(Error::InvalidArgument(format!(
            "a scan needs at least 4 T values, got {}",
            t_values.len()
        )));
    }
    if t_values.iter().any(|&t| !(t > 0.0)) || t_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("T values must be positive and strictly increasing".into()));
    }
    let mut warnings = vec![];
    let span = t_values[t_values.len() - 1] / t_values[0];
    if span < 100.0 {
        warnings.push(format!("T values span {:.2} decades, fewer than 2", span.log10()));
    }
    let outcomes: Vec<AdiabaticOutcome> = t_values
        .par_iter()
        .map(|&t| adiabatic_error(curve, tracker, rho0_a, t, &opts.adiabatic))
        .collect::<Result<_>>()?;
    let errors: Vec<f64> = outcomes.iter().map(|o| o.error).collect();
    let leakages = outcomes.iter().map(|o| o.leakage).collect();
    let monotone = errors
        .windows(2)
        .all(|w| w[1] <= 1.1 * w[0] || w[1] < ERROR_FLOOR);
    let envelope_constant = errors[0] * t_values[0].sqrt();
    let envelope_holds = errors
        .iter()
        .zip(t_values)
        .all(|(&e, &t)| e <= envelope_constant / t.sqrt() * (1.0 + 1e-12) || e < ERROR_FLOOR);
    let gap = match opts.gap_s_points {
        Some(points) => Some(compute_gaps(curve, tracker, points, crate::numerics::DEFAULT_REL_TOL)?),
        None => None,
    };
    Ok(ScalingReport {
        t_values: t_values.to_vec(),
        fitted_slope: fit_loglog_slope(t_values, &errors),
        errors,
        leakages,
        envelope_constant,
        envelope_holds,
        monotone,
        gap,
        warnings,
    })
}

/// Default gap grid for scans run from the command line.
pub const DEFAULT_GAP_POINTS: usize = DEFAULT_S_POINTS;

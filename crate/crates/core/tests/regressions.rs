//! Pinned numbers and end-to-end paths through the public API.

use amd_core::adiabatic::{adiabatic_error, AdiabaticOptions};
use amd_core::holonomy::{transport_discrete, AxisPair, Grid};
use amd_core::lindblad::{propagate_curve, LindbladCurve, PropagateOptions};
use amd_core::numerics::{basis_projector, identity, trace, trace_distance, DEFAULT_REL_TOL};
use amd_core::presets::{AppendixB, ClosedSweep, HolonomyPreset};
use amd_core::structure::{compute_gaps, decompose, BlockTracker, DecomposeOptions};
use amd_core::Error;

/// Δ of the (m=2, n=2) block at ω=1, γ⁺=1, γ⁻=3. Frozen from an independent
/// numpy evaluation of the B₂ restriction; Δ₁ = 2 from the cofactor
/// spectrum {0, −4, −2 ± i}, so Δ = Δ₂ here.
const APPENDIX_B_DELTA: f64 = 1.2544294036760852;

#[test]
fn appendix_b_gap_golden_value() {
    let ab = AppendixB::default();
    let curve = LindbladCurve::constant(ab.lindbladian());
    let rep = compute_gaps(&curve, &BlockTracker::frame(ab.printed_block()), 11, DEFAULT_REL_TOL).unwrap();
    assert!((rep.delta - APPENDIX_B_DELTA).abs() < 1e-9, "Δ = {}", rep.delta);
    assert!((rep.delta1.unwrap() - 2.0).abs() < 1e-9);
    assert!((rep.delta2 - APPENDIX_B_DELTA).abs() < 1e-9);
}

#[test]
fn appendix_b_gap_is_basis_independent() {
    let ab = AppendixB::default();
    let l = ab.lindbladian();
    let dec = decompose(&l, &DecomposeOptions::default()).unwrap();
    let curve = LindbladCurve::constant(l);
    let rep = compute_gaps(&curve, &BlockTracker::frame(dec.blocks[0].clone()), 11, DEFAULT_REL_TOL).unwrap();
    assert!((rep.delta - APPENDIX_B_DELTA).abs() < 1e-9);
}

#[test]
fn redecompose_tracker_matches_frame_tracker_for_sweep() {
    let sweep = ClosedSweep::default();
    let curve = sweep.curve();
    let frame = BlockTracker::frame(sweep.ground_block());
    let redo = BlockTracker::redecompose(&curve, 0, DecomposeOptions::default()).unwrap();
    let opts = AdiabaticOptions::default();
    let a = adiabatic_error(&curve, &frame, &identity(1), 200.0, &opts).unwrap();
    let b = adiabatic_error(&curve, &redo, &identity(1), 200.0, &opts).unwrap();
    assert!((a.leakage - b.leakage).abs() < 1e-9);
    assert!(trace_distance(&a.final_state, &b.final_state).unwrap() < 1e-12);
}

#[test]
fn holonomy_transport_grids_agree() {
    let lp = HolonomyPreset::new(AxisPair::XxZ).make_loop().unwrap();
    let rho0 = lp.block0.embed_product(&basis_projector(2, 0));
    let lin = transport_discrete(&lp, 2000, &rho0, Grid::Linear).unwrap();
    let quad = transport_discrete(&lp, 2000, &rho0, Grid::Quadratic).unwrap();
    assert!(trace_distance(&lin.a_state, &quad.a_state).unwrap() < 0.03);
}

#[test]
fn too_coarse_propagation_refused() {
    let lp = HolonomyPreset::new(AxisPair::ZzX).make_loop().unwrap();
    let rho0 = lp.block0.embed_product(&basis_projector(2, 0));
    let opts = PropagateOptions {
        steps: Some(100),
        stride: usize::MAX,
    };
    let err = propagate_curve(&lp.curve(), &rho0, 5000.0, &opts).unwrap_err();
    assert!(matches!(err, Error::StepsTooFew { .. }), "{err:?}");
}

#[test]
fn trajectory_keeps_trace() {
    let lp = HolonomyPreset::new(AxisPair::ZzX).make_loop().unwrap();
    let rho0 = lp.block0.embed_product(&basis_projector(2, 1));
    let opts = PropagateOptions {
        steps: None,
        stride: 100,
    };
    let traj = propagate_curve(&lp.curve(), &rho0, 100.0, &opts).unwrap();
    assert!(traj.states.len() > 2);
    for s in &traj.states {
        assert!((trace(s).re - 1.0).abs() < 1e-10);
    }
    assert!(traj.max_trace_error < 1e-10);
}

#[test]
fn reports_serialize() {
    let ab = AppendixB::default();
    let curve = LindbladCurve::constant(ab.lindbladian());
    let rep = compute_gaps(&curve, &BlockTracker::frame(ab.printed_block()), 11, DEFAULT_REL_TOL).unwrap();
    let json = serde_json::to_value(&rep).unwrap();
    assert_eq!(json["s_grid"].as_array().unwrap().len(), 11);
    assert!((json["delta"].as_f64().unwrap() - APPENDIX_B_DELTA).abs() < 1e-9);
}

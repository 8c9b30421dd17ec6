//! The experiments behind each subcommand.

use std::f64::consts::PI;
use std::fmt;

use ndarray::Array2;
use serde_json::{json, Map, Value};

use amd_core::adiabatic::{
    adiabatic_error, scaling_scan, traceless, v_eff, AdiabaticOptions, ScanOptions,
};
use amd_core::holonomy::{run_gate, transport_discrete, Grid, Loop};
use amd_core::lindblad::{
    default_steps, propagate_curve, LindbladCurve, Lindbladian, PropagateOptions, Trajectory,
};
use amd_core::numerics::{
    basis_projector, c, dagger, eigh, embed_site, identity, kron, kron_all, partial_trace,
    sigma_x, sigma_y, sigma_z, trace, trace_distance, Operator, Side, DEFAULT_REL_TOL,
};
use amd_core::presets::{AppendixB, ClosedSweep, HolonomyPreset, PRESETS};
use amd_core::structure::{
    compute_gaps, decompose, fixed_point_basis, pseudo_inverse_bound, verify_blockform,
    BlockTracker, DecomposeOptions, DEFAULT_S_POINTS,
};

use crate::config::{format_seed, parse_site_pauli, Experiment, ExperimentConfig, MatrixSpec, ValidationError};
use crate::plot::loglog_svg;
use crate::report::{num, op_json, opt_num, Output, Table};

#[derive(Debug)]
pub enum RunError {
    Validation(ValidationError),
    Core(amd_core::Error),
}

impl RunError {
    /// 2 for bad input, 3 for numerical diagnostics.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Validation(_) => 2,
            RunError::Core(e) if e.is_numerical() => 3,
            RunError::Core(_) => 2,
        }
    }
}

impl fmt::Display for RunError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RunError::Validation(e) => write!(f, "invalid configuration: {e}"),
            RunError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl From<ValidationError> for RunError {
    fn from(e: ValidationError) -> Self {
        RunError::Validation(e)
    }
}

impl From<amd_core::Error> for RunError {
    fn from(e: amd_core::Error) -> Self {
        RunError::Core(e)
    }
}

type Result<T> = std::result::Result<T, RunError>;

fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(RunError::Validation(ValidationError(msg.into())))
}

/// A materialized system: generator, curve and the tracked block.
struct Setup {
    name: String,
    generator: Lindbladian,
    curve: LindbladCurve,
    tracker: BlockTracker,
    default_t: f64,
    default_scan: Vec<f64>,
    appendix_b: Option<AppendixB>,
    holonomy: Option<Loop>,
}

fn matrix(spec: &MatrixSpec) -> Operator {
    let d = spec.len();
    Array2::from_shape_fn((d, d), |(i, j)| c(spec[i][j][0], spec[i][j][1]))
}

fn setup(cfg: &ExperimentConfig, seed: u64) -> Result<Setup> {
    let p = &cfg.parameters;
    let dec_opts = DecomposeOptions {
        rel_tol: DEFAULT_REL_TOL,
        seed,
    };
    let constant = |name: &str, l: Lindbladian, default_t: f64| -> Result<Setup> {
        let dec = decompose(&l, &dec_opts)?;
        let index = p.block.unwrap_or(0);
        let Some(block) = dec.blocks.get(index) else {
            return invalid(format!("block {index} out of range: the generator has {} blocks", dec.blocks.len()));
        };
        Ok(Setup {
            name: name.into(),
            curve: LindbladCurve::constant(l.clone()),
            generator: l,
            tracker: BlockTracker::frame(block.clone()),
            default_t,
            default_scan: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
            appendix_b: None,
            holonomy: None,
        })
    };
    let Some(name) = cfg.preset() else {
        let h = matrix(cfg.system.hamiltonian.as_ref().expect("validated"));
        let ls = cfg.system.dissipators.iter().map(matrix).collect();
        return constant("inline", Lindbladian::new(h, ls)?, 100.0);
    };
    match name {
        "appendix-b" => {
            let mut ab = AppendixB::default();
            ab.omega = p.omega.unwrap_or(ab.omega);
            ab.gamma_plus = p.gamma_plus.unwrap_or(ab.gamma_plus);
            ab.gamma_minus = p.gamma_minus.unwrap_or(ab.gamma_minus);
            ab.validate()?;
            let l = ab.lindbladian();
            Ok(Setup {
                name: name.into(),
                curve: LindbladCurve::constant(l.clone()),
                generator: l,
                tracker: BlockTracker::frame(ab.printed_block()),
                default_t: 100.0,
                default_scan: vec![10.0, 30.0, 100.0, 300.0, 1000.0],
                appendix_b: Some(ab),
                holonomy: None,
            })
        }
        "holonomy-x" | "holonomy-z" | "holonomy-xx" => {
            let axis = amd_core::presets::holonomy_axis(name).expect("registered");
            let mut preset = HolonomyPreset::new(axis);
            preset.gamma = p.gamma.unwrap_or(preset.gamma);
            preset.a = p.a.unwrap_or(preset.a);
            preset.b = p.b.unwrap_or(preset.b);
            let lp = preset.make_loop()?;
            Ok(Setup {
                name: name.into(),
                generator: lp.base.clone(),
                curve: lp.curve(),
                tracker: BlockTracker::frame(lp.block0.clone()),
                default_t: preset.total_time,
                default_scan: vec![50.0, 100.0, 200.0, 400.0, 800.0, 1600.0],
                appendix_b: None,
                holonomy: Some(lp),
            })
        }
        "closed-sweep" => {
            let mut sweep = ClosedSweep::default();
            sweep.g = p.omega.unwrap_or(sweep.g);
            if !(sweep.g > 0.0) {
                return invalid(format!("closed-sweep gap ω = {} must be > 0", sweep.g));
            }
            Ok(Setup {
                name: name.into(),
                generator: sweep.base(),
                curve: sweep.curve(),
                tracker: BlockTracker::frame(sweep.ground_block()),
                default_t: 1000.0 / sweep.g,
                default_scan: [10.0, 30.0, 100.0, 300.0, 1000.0].iter().map(|t| t / sweep.g).collect(),
                appendix_b: None,
                holonomy: None,
            })
        }
        "depol-b" => constant(name, amd_core::presets::depol_b(p.gamma.unwrap_or(1.0)), 100.0),
        other => invalid(format!("unknown preset {other:?}")),
    }
}

/// Runs the configured experiment; `cfg` must have passed validation.
pub fn run(cfg: &ExperimentConfig) -> Result<Output> {
    let experiment = cfg.experiment.expect("validated");
    if experiment == Experiment::Presets {
        return Ok(presets_output());
    }
    let seed = cfg.seed()?;
    let s = setup(cfg, seed)?;
    let (summary, result, table, plot) = match experiment {
        Experiment::Decompose => run_decompose(&s, seed)?,
        Experiment::Gaps => run_gaps(&s, cfg)?,
        Experiment::Veff => run_veff(&s, cfg)?,
        Experiment::Evolve => run_evolve(&s, cfg)?,
        Experiment::Scan => run_scan(&s, cfg)?,
        Experiment::Holonomy => run_holonomy(&s, cfg)?,
        Experiment::Presets => unreachable!(),
    };
    let mut resolved = cfg.clone();
    resolved.output = Default::default();
    let report = json!({
        "schema": "amd-report/v1",
        "experiment": experiment.to_string(),
        "system": s.name,
        "seed": format_seed(seed),
        "config": resolved,
        "summary": summary,
        "result": result,
    });
    Ok(Output { report, table, plot })
}

type Parts = (Value, Value, Table, Option<String>);

fn presets_output() -> Output {
    let mut table = Table::new(&["name", "description"]);
    for p in PRESETS.iter() {
        table.push(vec![p.name.into(), format!("\"{}\"", p.description)]);
    }
    Output {
        report: json!({ "schema": "amd-report/v1", "experiment": "presets", "presets": PRESETS }),
        table,
        plot: None,
    }
}

/// Text table for `amd presets`.
pub fn presets_text() -> String {
    let width = PRESETS.iter().map(|p| p.name.len()).max().unwrap_or(0);
    PRESETS
        .iter()
        .map(|p| format!("{:<width$}  {}\n", p.name, p.description))
        .collect()
}

fn eigenvalues(rho: &Operator) -> Result<Vec<f64>> {
    Ok(eigh(rho)?.0)
}

fn run_decompose(s: &Setup, seed: u64) -> Result<Parts> {
    let l = &s.generator;
    let dec = decompose(l, &DecomposeOptions { rel_tol: DEFAULT_REL_TOL, seed })?;
    let kernel = fixed_point_basis(l, DEFAULT_REL_TOL)?;
    let mut blocks = vec![];
    let mut table = Table::new(&["block", "m", "n", "k", "fixed_state_eigenvalue"]);
    for (idx, b) in dec.blocks.iter().enumerate() {
        let eig = eigenvalues(&b.fixed_state)?;
        for (k, &e) in eig.iter().enumerate() {
            table.push(vec![idx.to_string(), b.m.to_string(), b.n.to_string(), k.to_string(), num(e)]);
        }
        let form = verify_blockform(l, b)?;
        let mut entry = json!({
            "m": b.m,
            "n": b.n,
            "isometry": op_json(b.w()),
            "fixed_state": op_json(&b.fixed_state),
            "fixed_state_eigenvalues": eig,
            "internal_hamiltonian": op_json(&b.internal_hamiltonian),
            "block_form": form,
        });
        if let (Some(ab), true) = (&s.appendix_b, (b.m, b.n) == (2, 2)) {
            // ϱ^B in the basis written for the noiseless qubit.
            let wp = AppendixB::printed_basis();
            let m = dagger(b.w()).dot(&wp);
            let x = dagger(&m).dot(&kron(&identity(2), &b.fixed_state)).dot(&m);
            let rho_p = partial_trace(&x, 2, 2, Side::A)?.mapv(|z| z / 2.0);
            entry["fixed_state_printed_basis"] = op_json(&rho_p);
            entry["fixed_state_printed_formula"] = op_json(&ab.printed_fixed_state());
        }
        blocks.push(entry);
    }
    let dims: Vec<[usize; 2]> = dec.blocks.iter().map(|b| [b.m, b.n]).collect();
    let summary = json!({
        "blocks": dims,
        "decaying_dimension": dec.decaying.dim(),
        "fixed_point_dimension": kernel.basis.dim(),
        "residual": dec.residual_report,
    });
    let result = json!({
        "blocks": blocks,
        "decaying_dimension": dec.decaying.dim(),
        "decaying_basis": op_json(dec.decaying.columns()),
        "fixed_point_dimension": kernel.basis.dim(),
        "kernel_warning": kernel.warning,
        "residual": dec.residual_report,
        "warnings": dec.warnings,
    });
    Ok((summary, result, table, None))
}

fn run_gaps(s: &Setup, cfg: &ExperimentConfig) -> Result<Parts> {
    let points = cfg.parameters.s_points.unwrap_or(DEFAULT_S_POINTS);
    let rep = compute_gaps(&s.curve, &s.tracker, points, DEFAULT_REL_TOL)?;
    let l0 = s.curve.lab_generator(0.0)?;
    let bound = pseudo_inverse_bound(&l0, &s.tracker.block_at(&s.curve, 0.0)?, DEFAULT_REL_TOL)?;
    let mut table = Table::new(&["s", "delta1", "delta2", "delta", "b2_invariance"]);
    for g in &rep.samples {
        table.push(vec![num(g.s), opt_num(g.delta1), num(g.delta2), num(g.delta()), num(g.b2_invariance)]);
    }
    let summary = json!({
        "delta": rep.delta,
        "delta1": rep.delta1,
        "delta2": rep.delta2,
        "radius_times_delta": bound.spectral_radius_of_inverse * bound.delta,
    });
    let result = json!({ "gaps": rep, "pseudo_inverse_bound_at_s0": bound });
    Ok((summary, result, table, None))
}

fn pauli(axis: char) -> Operator {
    match axis {
        'x' => sigma_x(),
        'y' => sigma_y(),
        _ => sigma_z(),
    }
}

fn qubits_of(d: usize) -> Option<usize> {
    (d.is_power_of_two() && d > 1).then(|| d.trailing_zeros() as usize)
}

/// Coefficients of X in the Pauli-string basis, X = Σ_P x_P P.
fn pauli_expansion(x: &Operator) -> Vec<(String, f64)> {
    let Some(q) = qubits_of(x.nrows()) else {
        return vec![];
    };
    let labels = ['I', 'X', 'Y', 'Z'];
    let ops = [identity(2), sigma_x(), sigma_y(), sigma_z()];
    let mut out = vec![];
    for code in 0..4usize.pow(q as u32) {
        let digits: Vec<usize> = (0..q).map(|k| (code / 4usize.pow((q - 1 - k) as u32)) % 4).collect();
        let p = kron_all(&digits.iter().map(|&k| ops[k].clone()).collect::<Vec<_>>());
        let coeff = trace(&p.dot(x)).re / x.nrows() as f64;
        out.push((digits.iter().map(|&k| labels[k]).collect(), coeff));
    }
    out
}

fn run_veff(s: &Setup, cfg: &ExperimentConfig) -> Result<Parts> {
    let d = s.generator.dim();
    let (label, v) = match (&cfg.parameters.v, &s.holonomy) {
        (Some(text), _) => {
            let sp = parse_site_pauli(text)?;
            let Some(n) = qubits_of(d).filter(|&n| sp.site <= n) else {
                return invalid(format!("{text} needs a qubit register with at least {} qubits (d = {d})", sp.site));
            };
            (text.clone(), embed_site(&pauli(sp.axis), sp.site - 1, n))
        }
        (None, Some(lp)) => ("loop generator".to_string(), lp.generator()),
        (None, None) if s.appendix_b.is_some() => ("sigma-z@1".to_string(), embed_site(&sigma_z(), 0, 3)),
        (None, None) => return invalid("veff needs a perturbation, e.g. --v sigma-z@1"),
    };
    let block = s.tracker.frame_block_at(&s.curve, 0.0)?;
    let veff = v_eff(&v, &block)?;
    let shifted = traceless(&veff);
    let shift = trace(&veff).re / block.m as f64;
    let expansion = pauli_expansion(&veff);
    let mut table = Table::new(&["pauli", "coefficient"]);
    let mut coeffs = Map::new();
    for (name, x) in &expansion {
        table.push(vec![name.clone(), num(*x)]);
        if x.abs() > 1e-14 {
            coeffs.insert(name.clone(), json!(x));
        }
    }
    let summary = json!({ "perturbation": label, "pauli_coefficients": coeffs });
    let result = json!({
        "perturbation": label,
        "block": [block.m, block.n],
        "v_eff": op_json(&veff),
        "traceless_part": op_json(&shifted),
        "identity_coefficient": shift,
        "pauli_coefficients": coeffs,
    });
    Ok((summary, result, table, None))
}

fn first_t(s: &Setup, cfg: &ExperimentConfig) -> f64 {
    cfg.parameters.t.first().copied().unwrap_or(s.default_t)
}

fn adiabatic_options(cfg: &ExperimentConfig) -> AdiabaticOptions {
    AdiabaticOptions {
        steps: cfg.parameters.steps,
        ..Default::default()
    }
}

fn run_evolve(s: &Setup, cfg: &ExperimentConfig) -> Result<Parts> {
    let t = first_t(s, cfg);
    let block0 = s.tracker.block_at(&s.curve, 0.0)?;
    let rho0_a = basis_projector(block0.m, 0);
    let rho0 = block0.embed_product(&rho0_a);
    let steps = match cfg.parameters.steps {
        Some(n) => n,
        None => default_steps(&s.curve, t)?,
    };
    let opts = PropagateOptions {
        steps: Some(steps),
        stride: (steps / 200).max(1),
    };
    let traj = propagate_curve(&s.curve, &rho0, t, &opts)?;
    let lab_states = traj
        .times
        .iter()
        .zip(&traj.states)
        .map(|(&time, rho)| s.curve.to_lab((time / t).min(1.0), rho))
        .collect::<amd_core::Result<Vec<_>>>()?;
    let lab = Trajectory {
        times: traj.times.clone(),
        states: lab_states,
        steps: traj.steps,
        max_trace_error: traj.max_trace_error,
    };
    let outcome = adiabatic_error(&s.curve, &s.tracker, &rho0_a, t, &adiabatic_options(cfg))?;
    let table = csv_table(&lab.to_csv());
    let summary = json!({
        "T": t,
        "steps": traj.steps,
        "adiabatic_error": outcome.error,
        "leakage": outcome.leakage,
        "max_trace_error": traj.max_trace_error,
    });
    let result = json!({
        "T": t,
        "steps": traj.steps,
        "recorded_states": lab.states.len(),
        "initial_a_state": op_json(&rho0_a),
        "final_state": op_json(lab.final_state()),
        "final_a_state": op_json(&outcome.final_a),
        "ideal_a_state": op_json(&outcome.ideal_a),
        "effective_unitary": op_json(&outcome.effective_unitary),
        "adiabatic_error": outcome.error,
        "leakage": outcome.leakage,
        "max_trace_error": traj.max_trace_error,
    });
    Ok((summary, result, table, None))
}

/// Re-wraps pre-rendered CSV text as a table.
fn csv_table(text: &str) -> Table {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap_or("").split(',').collect();
    let mut table = Table::new(&header);
    for line in lines {
        table.push(line.split(',').map(str::to_string).collect());
    }
    table
}

fn run_scan(s: &Setup, cfg: &ExperimentConfig) -> Result<Parts> {
    let t_values = if cfg.parameters.t.is_empty() {
        s.default_scan.clone()
    } else {
        cfg.parameters.t.clone()
    };
    let block0 = s.tracker.block_at(&s.curve, 0.0)?;
    let rho0_a = basis_projector(block0.m, 0);
    let opts = ScanOptions {
        adiabatic: adiabatic_options(cfg),
        gap_s_points: Some(cfg.parameters.s_points.unwrap_or(DEFAULT_S_POINTS)),
    };
    let rep = scaling_scan(&s.curve, &s.tracker, &rho0_a, &t_values, &opts)?;
    let mut table = Table::new(&["T", "error", "leakage"]);
    for ((t, e), l) in rep.t_values.iter().zip(&rep.errors).zip(&rep.leakages) {
        table.push(vec![num(*t), num(*e), num(*l)]);
    }
    let plot = cfg
        .output
        .plot
        .then(|| loglog_svg(&rep.t_values, &rep.errors, &format!("{}: adiabatic error", s.name)))
        .flatten();
    let summary = json!({
        "fitted_slope": rep.fitted_slope,
        "monotone": rep.monotone,
        "envelope_holds": rep.envelope_holds,
        "delta": rep.gap.as_ref().map(|g| g.delta),
        "warnings": rep.warnings,
    });
    let result = serde_json::to_value(&rep).expect("plain data");
    Ok((summary, result, table, plot))
}

fn run_holonomy(s: &Setup, cfg: &ExperimentConfig) -> Result<Parts> {
    let lp = s.holonomy.as_ref().expect("validated: holonomy preset");
    let t = first_t(s, cfg);
    let run = run_gate(lp, t, cfg.parameters.steps)?;
    let rho_a = basis_projector(lp.block0.m, 0);
    let transport = transport_discrete(lp, 2000, &lp.block0.embed_product(&rho_a), Grid::Linear)?;
    let ideal = run.target.dot(&rho_a).dot(&dagger(&run.target));
    let transport_error = trace_distance(&transport.a_state, &ideal)?;
    let mut table = Table::new(&["i", "j", "re_u", "im_u", "re_target", "im_target"]);
    let m = run.target.nrows();
    for i in 0..m {
        for j in 0..m {
            let (u, g) = (run.extraction.u[[i, j]], run.target[[i, j]]);
            table.push(vec![i.to_string(), j.to_string(), num(u.re), num(u.im), num(g.re), num(g.im)]);
        }
    }
    let summary = json!({
        "T": t,
        "gate_fidelity": run.fidelity_to_target,
        "channel_fidelity": run.channel_fidelity_to_target,
        "transport_error": transport_error,
    });
    let result = json!({
        "T": t,
        "steps": run.steps,
        "a": lp.a,
        "b": lp.b,
        "b_over_pi": lp.b / PI,
        "extracted_unitary": op_json(&run.extraction.u),
        "target": op_json(&run.target),
        "gate_fidelity": run.fidelity_to_target,
        "channel_fidelity": run.channel_fidelity_to_target,
        "channel_to_extracted_fidelity": run.extraction.fidelity,
        "transport_steps": 2000,
        "transport_a_state": op_json(&transport.a_state),
        "transport_error": transport_error,
        "transport_trace_loss": transport.trace_loss,
    });
    Ok((summary, result, table, None))
}

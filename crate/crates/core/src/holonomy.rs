//! Holonomic gates driven by dissipation.
//!
//! A block whose cofactor is depolarized is dragged around a closed loop of
//! frames U(s) = exp(−isG). The projector onto the block's fixed points,
//! composed along the loop, acts on A as a unitary fixed by the loop
//! alone: for G = a·P₁ + b·P₂ with V_eff(G) = b·Q the gate is exp(−ibQ).

use std::f64::consts::PI;

use ndarray::Array2;
use ndarray_linalg::SVD;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{block_projector, v_eff};
use crate::error::{Error, Result};
use crate::lindblad::{propagate_curve_many, FramePath, LindbladCurve, Lindbladian, PropagateOptions};
use crate::numerics::{
    choi_matrix, conjugation_superop, dagger, eigh, identity, kron, kron_all, matexp,
    max_abs, polar_unitary, sigma_x, sigma_z, singular_values, trace, unvectorize,
    vectorize, vectorize_columns, Operator, SubspaceBasis, C64, I, ONE, ZERO,
};
use crate::structure::{decompose, Block, DecomposeOptions};

/// Which Pauli pair generates the loop.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AxisPair {
    /// a σ_z⊗σ_z + b σ_x⊗I, gate exp(−ibσ_x).
    #[serde(rename = "ZZ_X")]
    ZzX,
    /// a σ_x⊗σ_x + b σ_z⊗I, gate exp(−ibσ_z).
    #[serde(rename = "XX_Z")]
    XxZ,
    /// a σ_x⊗σ_z⊗σ_z + b σ_x⊗σ_x⊗I, gate exp(−ibσ_x⊗σ_x).
    #[serde(rename = "XZZ_XX")]
    XzzXx,
}

impl AxisPair {
    pub fn qubits(self) -> usize {
        match self {
            AxisPair::ZzX | AxisPair::XxZ => 2,
            AxisPair::XzzXx => 3,
        }
    }

    /// Dimension of the noiseless factor (all qubits but the last).
    pub fn m(self) -> usize {
        1 << (self.qubits() - 1)
    }

    /// (P₁, P₂) with the B qubit last.
    pub fn paulis(self) -> (Operator, Operator) {
        let (x, z, id) = (sigma_x(), sigma_z(), identity(2));
        match self {
            AxisPair::ZzX => (kron(&z, &z), kron(&x, &id)),
            AxisPair::XxZ => (kron(&x, &x), kron(&z, &id)),
            AxisPair::XzzXx => (kron_all(&[x.clone(), z.clone(), z]), kron_all(&[x.clone(), x, id])),
        }
    }

    /// Q with V_eff(P₂) = Q on A.
    pub fn gate_pauli(self) -> Operator {
        match self {
            AxisPair::ZzX => sigma_x(),
            AxisPair::XxZ => sigma_z(),
            AxisPair::XzzXx => kron(&sigma_x(), &sigma_x()),
        }
    }
}

/// G = a P₁ + b P₂.
pub fn loop_generator(axis: AxisPair, a: f64, b: f64) -> Operator {
    let (p1, p2) = axis.paulis();
    p1.mapv(|z| z * a) + p2.mapv(|z| z * b)
}

/// A closed loop of frames around a block of the base generator.
#[derive(Clone, Debug)]
pub struct Loop {
    pub axis: AxisPair,
    pub a: f64,
    pub b: f64,
    pub frame: FramePath,
    pub base: Lindbladian,
    pub block0: Block,
    /// ‖U(1) − I‖ (max entry).
    pub closure_error: f64,
}

/// The product block A ⊗ B on the identity isometry with ϱ^B = I/2.
fn product_block(axis: AxisPair) -> Result<Block> {
    let m = axis.m();
    Block::new(
        SubspaceBasis::full(2 * m),
        m,
        2,
        identity(2).mapv(|z| z * 0.5),
        Array2::zeros((m, m)),
    )
}

pub fn make_pauli_loop(axis: AxisPair, a: f64, b: f64, base: Lindbladian) -> Result<Loop> {
    let norm2 = a * a + b * b;
    let target = 4.0 * PI * PI;
    if (norm2 - target).abs() > 1e-10 * target {
        return Err(Error::OpenLoop((norm2.sqrt() - 2.0 * PI).abs()));
    }
    let g = loop_generator(axis, a, b);
    if base.dim() != g.nrows() {
        return Err(Error::Dimension("base generator does not match loop".into()));
    }
    // exp(−iG) from the spectrum of G: eigenvalues ±2π close the loop.
    let (vals, vecs) = eigh(&g)?;
    let phases = Array2::from_diag(&ndarray::Array1::from_iter(
        vals.iter().map(|&v| (-I * v).exp()),
    ));
    let u1 = vecs.dot(&phases).dot(&dagger(&vecs));
    let closure_error = max_abs(&(u1 - identity(g.nrows())));
    if closure_error > 1e-10 {
        return Err(Error::OpenLoop(closure_error));
    }
    let block0 = product_block(axis)?;
    let dec = decompose(&base, &DecomposeOptions::default())?;
    if !dec.blocks.iter().any(|bl| (bl.m, bl.n) == (block0.m, block0.n)) {
        return Err(Error::Structural(format!(
            "base generator has blocks {:?}, none matching ({}, {})",
            dec.dims(),
            block0.m,
            block0.n
        )));
    }
    Ok(Loop {
        axis,
        a,
        b,
        frame: FramePath::constant(g)?,
        base,
        block0,
        closure_error,
    })
}

impl Loop {
    pub fn curve(&self) -> LindbladCurve {
        LindbladCurve::rotated(self.base.clone(), self.frame.clone()).expect("dimensions checked")
    }

    pub fn generator(&self) -> Operator {
        loop_generator(self.axis, self.a, self.b)
    }

    /// exp(−i V_eff(G)), the gate the loop implements on A.
    pub fn predicted_gate(&self) -> Result<Operator> {
        let veff = v_eff(&self.generator(), &self.block0)?;
        matexp(&veff.mapv(|z| -I * z))
    }

    /// exp(−ibQ) as written for the loop family.
    pub fn nominal_gate(&self) -> Result<Operator> {
        matexp(&self.axis.gate_pauli().mapv(|z| -I * self.b * z))
    }
}

/// Grid for the discrete transport.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Grid {
    /// s_i = i/N.
    Linear,
    /// s_i = (i/N)².
    Quadratic,
}

#[derive(Clone, Debug)]
pub struct Transport {
    /// Lab state after the last projector.
    pub state: Operator,
    /// Tr_B(W₀† ρ W₀) at s = 1.
    pub a_state: Operator,
    /// Σ over steps of the trace lost before renormalization.
    pub trace_loss: f64,
}

/// Applies P(s_N)···P(s_0) with P(s)ρ = U(s)† P₀(U(s) ρ U(s)†) U(s).
pub fn transport_discrete(lp: &Loop, steps: usize, rho0: &Operator, grid: Grid) -> Result<Transport> {
    if steps < 10 {
        return Err(Error::InvalidArgument(format!("N = {steps} < 10")));
    }
    let d = lp.base.dim();
    if rho0.dim() != (d, d) {
        return Err(Error::Dimension("initial state does not match loop".into()));
    }
    let p0 = block_projector(&lp.block0);
    let mut rho = rho0.clone();
    let mut trace_loss = 0.0;
    for i in 0..=steps {
        let x = i as f64 / steps as f64;
        let s = match grid {
            Grid::Linear => x,
            Grid::Quadratic => x * x,
        };
        let u = lp.frame.unitary(s)?;
        let ud = dagger(&u);
        rho = ud.dot(&p0.apply(&u.dot(&rho).dot(&ud))).dot(&u);
        let tr = trace(&rho).re;
        trace_loss += 1.0 - tr;
        rho.mapv_inplace(|z| z / tr);
    }
    let a_state = lp.block0.reduce_to_a(&rho);
    Ok(Transport {
        state: rho,
        a_state,
        trace_loss,
    })
}

/// m² fiducial states |j⟩, (|j⟩+|k⟩)/√2, (|j⟩+i|k⟩)/√2 spanning operator space.
pub fn fiducial_states(m: usize) -> Vec<Operator> {
    let pure = |v: ndarray::Array1<C64>| {
        Array2::from_shape_fn((m, m), |(i, j)| v[i] * v[j].conj())
    };
    let ket = |j: usize| {
        let mut v = ndarray::Array1::from_elem(m, ZERO);
        v[j] = ONE;
        v
    };
    let r = 1.0 / 2f64.sqrt();
    let mut out: Vec<Operator> = (0..m).map(|j| pure(ket(j))).collect();
    for j in 0..m {
        for k in (j + 1)..m {
            out.push(pure((ket(j) + ket(k)).mapv(|z| z * r)));
            out.push(pure((ket(j) + ket(k).mapv(|z| z * I)).mapv(|z| z * r)));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct Extraction {
    /// Closest unitary to the reconstructed channel.
    pub u: Operator,
    /// Reconstructed channel, column-stacked m²×m².
    pub channel: Operator,
    /// Average gate fidelity between the channel and conjugation by `u`.
    pub fidelity: f64,
}

/// Process fidelity Tr(S_U† S)/m² of a channel to conjugation by U.
pub fn process_fidelity(channel: &Operator, u: &Operator) -> f64 {
    let m = u.nrows();
    let su = conjugation_superop(u);
    let overlap: C64 = dagger(&su)
        .dot(channel)
        .diag()
        .sum();
    overlap.re / (m * m) as f64
}

/// Average gate fidelity (m F_pro + 1)/(m + 1).
pub fn average_gate_fidelity(channel: &Operator, u: &Operator) -> f64 {
    let m = u.nrows() as f64;
    (m * process_fidelity(channel, u) + 1.0) / (m + 1.0)
}

/// Average gate fidelity between two unitaries, insensitive to global phase.
pub fn unitary_gate_fidelity(u: &Operator, v: &Operator) -> f64 {
    let m = u.nrows() as f64;
    let f_pro = (dagger(u).dot(v).diag().sum()).norm_sqr() / (m * m);
    (m * f_pro + 1.0) / (m + 1.0)
}

/// Reconstructs a channel from input/output pairs and returns its nearest unitary.
pub fn extract_unitary(samples: &[(Operator, Operator)]) -> Result<Extraction> {
    let m = samples
        .first()
        .ok_or_else(|| Error::Rank("no channel samples".into()))?
        .0
        .nrows();
    let ins: Vec<Operator> = samples.iter().map(|s| s.0.clone()).collect();
    let outs: Vec<Operator> = samples.iter().map(|s| s.1.clone()).collect();
    if ins.iter().chain(&outs).any(|x| x.dim() != (m, m)) {
        return Err(Error::Dimension("channel samples differ in dimension".into()));
    }
    let x = vectorize_columns(&ins);
    let y = vectorize_columns(&outs);
    let sv = singular_values(&x)?;
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let rank = sv.iter().filter(|&&s| s > 1e-10 * smax).count();
    if rank < m * m {
        return Err(Error::Rank(format!(
            "inputs span {rank} of {} operator dimensions",
            m * m
        )));
    }
    // S = Y X⁺ via the SVD of X.
    let (u, s, vt) = x.svd(true, true)?;
    let (u, vt) = (u.unwrap(), vt.unwrap());
    let mut pinv = Array2::<C64>::zeros((x.ncols(), x.nrows()));
    for k in 0..s.len() {
        if s[k] > 1e-10 * smax {
            let vk = vt.row(k).mapv(|z| z.conj());
            let uk = u.column(k).mapv(|z| z.conj());
            for i in 0..pinv.nrows() {
                for j in 0..pinv.ncols() {
                    pinv[[i, j]] += vk[i] * uk[j] / s[k];
                }
            }
        }
    }
    let channel = y.dot(&pinv);
    let choi = choi_matrix(&channel, m);
    let (_, vecs) = eigh(&choi)?;
    let top = vecs.column(m * m - 1).to_owned();
    // Choi = |v⟩⟨v| with v[i·m + r] = K[r, i].
    let kraus = Array2::from_shape_fn((m, m), |(r, i)| top[i * m + r]);
    let u = polar_unitary(&kraus)?;
    let fidelity = average_gate_fidelity(&channel, &u);
    Ok(Extraction { u, channel, fidelity })
}

#[derive(Clone, Debug)]
pub struct GateRun {
    pub extraction: Extraction,
    pub target: Operator,
    /// Average gate fidelity of the extracted unitary to the target.
    pub fidelity_to_target: f64,
    /// Average gate fidelity of the simulated channel to the target.
    pub channel_fidelity_to_target: f64,
    pub steps: usize,
}

/// Simulates the loop for time T on the fiducial states and extracts the gate.
pub fn run_gate(lp: &Loop, total_time: f64, steps: Option<usize>) -> Result<GateRun> {
    let m = lp.block0.m;
    let fiducials = fiducial_states(m);
    let inputs: Vec<Operator> = fiducials.iter().map(|f| lp.block0.embed_product(f)).collect();
    let opts = PropagateOptions {
        steps,
        stride: usize::MAX,
    };
    let trajs = propagate_curve_many(&lp.curve(), &inputs, total_time, &opts)?;
    let samples: Vec<(Operator, Operator)> = fiducials
        .iter()
        .zip(&trajs)
        .map(|(f, t)| (f.clone(), lp.block0.reduce_to_a(t.final_state())))
        .collect();
    let extraction = extract_unitary(&samples)?;
    let target = lp.nominal_gate()?;
    Ok(GateRun {
        fidelity_to_target: unitary_gate_fidelity(&extraction.u, &target),
        channel_fidelity_to_target: average_gate_fidelity(&extraction.channel, &target),
        extraction,
        target,
        steps: trajs[0].steps,
    })
}

/// Applies a column-stacked channel to an operator.
pub fn apply_channel(channel: &Operator, x: &Operator) -> Operator {
    unvectorize(&channel.dot(&vectorize(x)), x.nrows())
}

/// ‖[G₁, G₂]‖ for two gate generators.
pub fn generator_commutator_norm(g1: &Operator, g2: &Operator) -> f64 {
    crate::numerics::op_norm(&(g1.dot(g2) - g2.dot(g1)))
}

/// (1 − p)·(ρ ↦ UρU†) + p·(ρ ↦ Tr ρ · I/m) as a column-stacked matrix.
pub fn depolarized_conjugation(u: &Operator, p: f64) -> Operator {
    let m = u.nrows();
    let id = vectorize(&identity(m).mapv(|z| z / m as f64));
    let tr = vectorize(&identity(m));
    let replace = Array2::from_shape_fn((m * m, m * m), |(i, j)| id[i] * tr[j]);
    conjugation_superop(u).mapv(|z| z * (1.0 - p)) + replace.mapv(|z| z * p)
}

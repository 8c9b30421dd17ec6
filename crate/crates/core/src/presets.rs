//! Ready-made systems: collective decoherence of three spins, the
//! holonomic loops, a closed gapped sweep and a locally depolarized pair.

use std::f64::consts::PI;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::holonomy::{make_pauli_loop, AxisPair, Loop};
use crate::lindblad::{FramePath, LindbladCurve, Lindbladian};
use crate::numerics::{
    c, embed_site, identity, kron, sigma_minus, sigma_plus, sigma_x, sigma_y, sigma_z, zeros,
    Operator, SubspaceBasis,
};
use crate::structure::Block;

/// Single-qubit depolarizer dρ/dt = γ(I/2 − ρ), via dissipators √(γ/4)σ_{x,y,z}.
pub fn depolarizer(gamma: f64) -> Lindbladian {
    let k = (gamma / 4.0).sqrt();
    Lindbladian::new(
        zeros(2),
        [sigma_x(), sigma_y(), sigma_z()]
            .iter()
            .map(|p| p.mapv(|z| z * k))
            .collect(),
    )
    .expect("depolarizer is well formed")
}

/// Depolarizer acting on the last qubit of `n_qubits`.
pub fn depolarize_last(gamma: f64, n_qubits: usize) -> Lindbladian {
    let front = identity(1usize << (n_qubits - 1));
    let local = depolarizer(gamma);
    Lindbladian::new(
        zeros(1usize << n_qubits),
        local.dissipators().iter().map(|l| kron(&front, l)).collect(),
    )
    .expect("embedded depolarizer is well formed")
}

/// Two qubits, I ⊗ depolarizer.
pub fn depol_b(gamma: f64) -> Lindbladian {
    depolarize_last(gamma, 2)
}

/// Collective operators of three spins: J_z = Σσ_z^i/2, J_± = Σσ_±^i with σ₊ = |1⟩⟨0|.
pub fn collective_ops() -> (Operator, Operator, Operator) {
    let sum = |op: &Operator| (0..3).fold(zeros(8), |acc, k| acc + embed_site(op, k, 3));
    let jz = sum(&sigma_z()).mapv(|z| z * 0.5);
    (jz, sum(&sigma_plus()), sum(&sigma_minus()))
}

/// Three spins under collective decoherence:
/// H = ωJ_z, dissipators √γ⁻ J₋ and √γ⁺ J₊.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AppendixB {
    pub omega: f64,
    pub gamma_plus: f64,
    pub gamma_minus: f64,
}

impl Default for AppendixB {
    fn default() -> Self {
        AppendixB {
            omega: 1.0,
            gamma_plus: 1.0,
            gamma_minus: 3.0,
        }
    }
}

fn ket3(bits: &str) -> ndarray::Array1<crate::numerics::C64> {
    let mut v = ndarray::Array1::zeros(8);
    v[usize::from_str_radix(bits, 2).expect("binary label")] = c(1.0, 0.0);
    v
}

impl AppendixB {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_plus > 0.0 && self.gamma_minus > 0.0) || !self.omega.is_finite() {
            return Err(Error::InvalidArgument(
                "collective decoherence needs γ⁺, γ⁻ > 0 and finite ω".into(),
            ));
        }
        Ok(())
    }

    pub fn lindbladian(&self) -> Lindbladian {
        let (jz, jp, jm) = collective_ops();
        Lindbladian::new(
            jz.mapv(|z| z * self.omega),
            vec![
                jm.mapv(|z| z * self.gamma_minus.sqrt()),
                jp.mapv(|z| z * self.gamma_plus.sqrt()),
            ],
        )
        .expect("collective generator is well formed")
    }

    /// The noiseless-qubit basis |a⟩^A|b⟩^B as columns a·2 + b (qubit 1 leftmost).
    pub fn printed_basis() -> Operator {
        let r2 = 2f64.sqrt();
        let r6 = 6f64.sqrt();
        let cols = [
            (ket3("011") - ket3("101")).mapv(|z| z / r2),
            (ket3("010") - ket3("100")).mapv(|z| z / r2),
            (ket3("110").mapv(|z| z * 2.0) - ket3("101") - ket3("011")).mapv(|z| z / r6),
            (ket3("010") + ket3("100") - ket3("001").mapv(|z| z * 2.0)).mapv(|z| z / r6),
        ];
        let mut w = Array2::zeros((8, 4));
        for (k, col) in cols.iter().enumerate() {
            w.column_mut(k).assign(col);
        }
        w
    }

    /// ϱ^B = diag(γ⁺, γ⁻)/(γ⁺ + γ⁻) in the printed B basis.
    pub fn printed_fixed_state(&self) -> Operator {
        let t = self.gamma_plus + self.gamma_minus;
        let mut rho = zeros(2);
        rho[[0, 0]] = c(self.gamma_plus / t, 0.0);
        rho[[1, 1]] = c(self.gamma_minus / t, 0.0);
        rho
    }

    /// The (m = 2, n = 2) block written in the printed basis.
    pub fn printed_block(&self) -> Block {
        Block::new(
            SubspaceBasis::new(Self::printed_basis()).expect("printed basis is orthonormal"),
            2,
            2,
            self.printed_fixed_state(),
            zeros(2),
        )
        .expect("printed block is well formed")
    }
}

/// Site-local σ_z on spin `site` (1-based) of the three.
pub fn sigma_z_on(site: usize) -> Result<Operator> {
    if !(1..=3).contains(&site) {
        return Err(Error::InvalidArgument(format!("spin index {site} outside 1..=3")));
    }
    Ok(embed_site(&sigma_z(), site - 1, 3))
}

/// Holonomic loop presets with the depolarizer on the last qubit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolonomyPreset {
    pub axis: AxisPair,
    pub a: f64,
    pub b: f64,
    pub gamma: f64,
    pub total_time: f64,
}

impl HolonomyPreset {
    pub fn new(axis: AxisPair) -> Self {
        HolonomyPreset {
            axis,
            a: 2f64.sqrt() * PI,
            b: 2f64.sqrt() * PI,
            gamma: 5.0,
            total_time: 200.0,
        }
    }

    pub fn base(&self) -> Lindbladian {
        depolarize_last(self.gamma, self.axis.qubits())
    }

    pub fn make_loop(&self) -> Result<Loop> {
        if !(self.gamma > 0.0) {
            return Err(Error::InvalidArgument(format!("γ = {} must be > 0", self.gamma)));
        }
        make_pauli_loop(self.axis, self.a, self.b, self.base())
    }
}

/// Closed two-level sweep: H₀ = (g/2)σ_z seen from the frame
/// U(s) = exp(i s² (θ/2) σ_y), so the lab field turns by θ·s².
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClosedSweep {
    pub g: f64,
    pub theta_max: f64,
}

impl Default for ClosedSweep {
    fn default() -> Self {
        ClosedSweep {
            g: 1.0,
            theta_max: PI / 2.0,
        }
    }
}

impl ClosedSweep {
    pub fn base(&self) -> Lindbladian {
        Lindbladian::closed(sigma_z().mapv(|z| z * (self.g / 2.0))).expect("Hermitian")
    }

    pub fn frame(&self) -> FramePath {
        FramePath::ramp(sigma_y().mapv(|z| z * (-self.theta_max / 2.0))).expect("Hermitian")
    }

    pub fn curve(&self) -> LindbladCurve {
        LindbladCurve::rotated(self.base(), self.frame()).expect("dimensions agree")
    }

    /// Ground state |1⟩ of H₀ (σ_z = diag(1, −1)).
    pub fn ground_block(&self) -> Block {
        let mut w = Array2::zeros((2, 1));
        w[[1, 0]] = c(1.0, 0.0);
        Block::new(
            SubspaceBasis::new(w).expect("unit vector"),
            1,
            1,
            identity(1),
            identity(1).mapv(|z| z * (-self.g / 2.0)),
        )
        .expect("ground block is well formed")
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct PresetInfo {
    pub name: &'static str,
    pub description: &'static str,
}

pub const PRESETS: [PresetInfo; 6] = [
    PresetInfo {
        name: "appendix-b",
        description: "3-spin collective decoherence: noiseless qubit (m=2, n=2) plus J=3/2 block",
    },
    PresetInfo {
        name: "holonomy-x",
        description: "ZZ_X loop with depolarized B qubit, gate exp(-i b σx)",
    },
    PresetInfo {
        name: "holonomy-z",
        description: "XX_Z loop with depolarized B qubit, gate exp(-i b σz)",
    },
    PresetInfo {
        name: "holonomy-xx",
        description: "XZZ_XX 3-qubit loop, entangling gate exp(-i b σx⊗σx)",
    },
    PresetInfo {
        name: "closed-sweep",
        description: "closed two-level gapped sweep (field turned by π/2)",
    },
    PresetInfo {
        name: "depol-b",
        description: "two qubits, identity on A and depolarizer on B",
    },
];

pub fn preset_names() -> Vec<&'static str> {
    PRESETS.iter().map(|p| p.name).collect()
}

pub fn holonomy_axis(name: &str) -> Option<AxisPair> {
    match name {
        "holonomy-x" => Some(AxisPair::ZzX),
        "holonomy-z" => Some(AxisPair::XxZ),
        "holonomy-xx" => Some(AxisPair::XzzXx),
        _ => None,
    }
}

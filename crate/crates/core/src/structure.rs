//! Asymptotic structure of a Lindbladian: noiseless subsystems, their
//! noisy cofactors with unique fixed states, and the decaying subspace.
//!
//! The Hilbert space splits as `H = ⊕_k A_k ⊗ B_k ⊕ K`. Every stationary
//! state has the form `⊕_k p_k ρ^A_k ⊗ ϱ^B_k`, with `ϱ^B_k` fixed and full
//! rank on `B_k`, and populations in `K` decay.
//!
//! The decomposition is found from the commutant of `{H, L_i, L_i†}`
//! restricted to the recurrent support: that commutant is isomorphic to
//! `⊕_k M(m_k) ⊗ I(n_k)`, so its center yields the summands and the
//! eigenspaces of a generic element inside each summand yield the tensor
//! factorization.

use ndarray::{s, Array2, Axis};
use ndarray_linalg::Inverse;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::lindblad::{propagate_const, Lindbladian, LindbladCurve};
use crate::numerics::{
    c, check_density, dagger, eigh, frobenius, hermitian_basis, hermitize, identity, kron,
    matrix_unit, max_abs, null_space, orthonormal_span, partial_trace,
    trace, unvectorize_columns, vectorize_columns, Kernel, Operator, Side, Spectrum,
    SubspaceBasis, C64, DEFAULT_REL_TOL, I,
};
use crate::random::{normal_coefficients, rng, DEFAULT_SEED};

/// One noiseless-subsystem block A ⊗ B.
#[derive(Clone, Debug)]
pub struct Block {
    /// Embedding of A ⊗ B; column `a·n + b` is |a⟩^A|b⟩^B.
    pub isometry: SubspaceBasis,
    pub m: usize,
    pub n: usize,
    /// ϱ^B, the unique fixed state of the cofactor.
    pub fixed_state: Operator,
    /// H^A, the internal Hamiltonian on the noiseless factor.
    pub internal_hamiltonian: Operator,
}

impl Block {
    pub fn new(
        isometry: SubspaceBasis,
        m: usize,
        n: usize,
        fixed_state: Operator,
        internal_hamiltonian: Operator,
    ) -> Result<Self> {
        if isometry.dim() != m * n {
            return Err(Error::Dimension(format!(
                "isometry has {} columns, expected m·n = {}",
                isometry.dim(),
                m * n
            )));
        }
        if fixed_state.dim() != (n, n) || internal_hamiltonian.dim() != (m, m) {
            return Err(Error::Dimension("block operators do not match m, n".into()));
        }
        check_density(&fixed_state)?;
        let (vals, _) = eigh(&fixed_state)?;
        if vals[0] < DEFAULT_REL_TOL * vals[n - 1] {
            return Err(Error::InvalidArgument(format!(
                "fixed state is not full rank (eigenvalues {vals:?})"
            )));
        }
        crate::numerics::check_hermitian(&internal_hamiltonian, "internal Hamiltonian")?;
        Ok(Block {
            isometry,
            m,
            n,
            fixed_state,
            internal_hamiltonian,
        })
    }

    pub fn ambient_dim(&self) -> usize {
        self.isometry.ambient_dim()
    }

    pub fn w(&self) -> &Operator {
        self.isometry.columns()
    }

    /// W X W† for X on A ⊗ B.
    pub fn embed(&self, x: &Operator) -> Operator {
        self.w().dot(x).dot(&dagger(self.w()))
    }

    /// W (X^A ⊗ ϱ^B) W†.
    pub fn embed_product(&self, xa: &Operator) -> Operator {
        self.embed(&kron(xa, &self.fixed_state))
    }

    /// W† X W.
    pub fn compress(&self, x: &Operator) -> Operator {
        dagger(self.w()).dot(x).dot(self.w())
    }

    /// Tr_B(W† ρ W), not normalized.
    pub fn reduce_to_a(&self, rho: &Operator) -> Operator {
        partial_trace(&self.compress(rho), self.m, self.n, Side::B).expect("block dims")
    }

    /// Same block with isometry U·W.
    pub fn conjugated(&self, u: &Operator) -> Block {
        Block {
            isometry: SubspaceBasis::new(u.dot(self.w())).expect("unitary image of isometry"),
            ..self.clone()
        }
    }

    /// Orthonormal basis [W | W⊥] of the full space.
    pub fn adapted_basis(&self) -> Operator {
        let comp = self.isometry.complement();
        ndarray::concatenate![Axis(1), self.w().view(), comp.columns().view()]
    }
}

/// Options for [`decompose`].
#[derive(Clone, Copy, Debug, Serialize)]
pub struct DecomposeOptions {
    pub rel_tol: f64,
    pub seed: u64,
}

impl Default for DecomposeOptions {
    fn default() -> Self {
        DecomposeOptions {
            rel_tol: DEFAULT_REL_TOL,
            seed: DEFAULT_SEED,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Decomposition {
    pub blocks: Vec<Block>,
    /// The decaying subspace K.
    pub decaying: SubspaceBasis,
    /// Largest ‖L(W(E_ab ⊗ ϱ^B)W†) + i W([H^A, E_ab] ⊗ ϱ^B)W†‖ over blocks
    /// and matrix units E_ab.
    pub residual_report: f64,
    pub asymptotic_state: Operator,
    pub warnings: Vec<String>,
    pub seed: u64,
}

impl Decomposition {
    pub fn dims(&self) -> Vec<(usize, usize)> {
        self.blocks.iter().map(|b| (b.m, b.n)).collect()
    }

    /// Orthonormal operator-space basis of span{W(E_ab ⊗ ϱ^B)W†} over all blocks.
    pub fn stationary_basis(&self) -> Result<SubspaceBasis> {
        let mut ops = vec![];
        for b in &self.blocks {
            for i in 0..b.m {
                for j in 0..b.m {
                    ops.push(b.embed_product(&matrix_unit(b.m, i, j)));
                }
            }
        }
        orthonormal_span(&vectorize_columns(&ops), 1e-10)
    }
}

/// Kernel of the superoperator, with a Hermitian basis when the kernel is
/// closed under † (always, for a Lindbladian, up to tolerance).
pub fn fixed_point_basis(l: &Lindbladian, rel_tol: f64) -> Result<Kernel> {
    let mut kernel = null_space(l.superoperator(), rel_tol)?;
    let d = l.dim();
    let ops = unvectorize_columns(&kernel.basis, d);
    let herm = hermitian_basis(&ops, 1e-8)?;
    if herm.len() == ops.len() {
        kernel.basis = SubspaceBasis::new(vectorize_columns(&herm))?;
    }
    Ok(kernel)
}

/// Recurrent support R and decaying complement K.
#[derive(Clone, Debug)]
pub struct RecurrentSupport {
    pub support: SubspaceBasis,
    pub decaying: SubspaceBasis,
    /// ρ∞, evolved from I/d for 2t*.
    pub asymptotic_state: Operator,
    /// t* = 50/|Re λ| for the slowest decaying eigenvalue, absent when
    /// nothing decays.
    pub t_star: Option<f64>,
}

fn support_of(rho: &Operator, rel_tol: f64) -> Result<(usize, Operator)> {
    let (vals, vecs) = eigh(rho)?;
    let top = vals.last().cloned().unwrap_or(0.0);
    let keep: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > rel_tol * top).collect();
    let mut cols = Array2::zeros((rho.nrows(), keep.len()));
    for (k, &i) in keep.iter().enumerate() {
        cols.column_mut(k).assign(&vecs.column(i));
    }
    Ok((keep.len(), cols))
}

/// Support of ρ∞ = e^{t·L}(I/d) for t = t*, 2t*.
pub fn recurrent_support(l: &Lindbladian, rel_tol: f64) -> Result<RecurrentSupport> {
    let d = l.dim();
    let norm = l.norm();
    let mixed = identity(d).mapv(|z| z / d as f64);
    let sp = Spectrum::of(l.superoperator(), false)?;
    let slowest = sp
        .eigenvalues
        .iter()
        .filter(|z| z.re < -rel_tol * norm)
        .map(|z| z.re)
        .fold(f64::NEG_INFINITY, f64::max);
    if !slowest.is_finite() {
        return Ok(RecurrentSupport {
            support: SubspaceBasis::full(d),
            decaying: SubspaceBasis::empty(d),
            asymptotic_state: mixed,
            t_star: None,
        });
    }
    let t_star = 50.0 / slowest.abs();
    let first = propagate_const(l, &mixed, t_star)?.state;
    let second = propagate_const(l, &mixed, 2.0 * t_star)?.state;
    let (r1, _) = support_of(&first, rel_tol)?;
    let (r2, cols) = support_of(&second, rel_tol)?;
    if r1 != r2 {
        return Err(Error::NotConverged {
            first: r1,
            second: r2,
        });
    }
    let support = SubspaceBasis::new(cols)?;
    let decaying = support.complement();
    let tr = trace(&second).re;
    Ok(RecurrentSupport {
        support,
        decaying,
        asymptotic_state: hermitize(&second.mapv(|z| z / tr)),
        t_star: Some(t_star),
    })
}

/// Stacked map X ↦ ([X, G_k])_k as a (k·r²) × r² matrix.
fn commutator_stack(gens: &[Operator]) -> Operator {
    let r = gens[0].nrows();
    let id = identity(r);
    let mut m = Array2::zeros((gens.len() * r * r, r * r));
    for (k, g) in gens.iter().enumerate() {
        let blk = kron(&g.t().to_owned(), &id) - kron(&id, g);
        m.slice_mut(s![k * r * r..(k + 1) * r * r, ..]).assign(&blk);
    }
    m
}

/// Groups ascending eigenvalues whose neighbours differ by at most `tol`.
fn group_eigenvalues(vals: &[f64], tol: f64) -> (Vec<Vec<usize>>, Option<f64>) {
    let mut groups: Vec<Vec<usize>> = vec![];
    let mut smallest_gap: Option<f64> = None;
    for (i, &v) in vals.iter().enumerate() {
        match groups.last_mut() {
            Some(g) if v - vals[*g.last().unwrap()] <= tol => g.push(i),
            Some(g) => {
                let gap = v - vals[*g.last().unwrap()];
                smallest_gap = Some(smallest_gap.map_or(gap, |s: f64| s.min(gap)));
                groups.push(vec![i]);
            }
            None => groups.push(vec![i]),
        }
    }
    (groups, smallest_gap)
}

fn columns_of(vecs: &Operator, idx: &[usize]) -> Operator {
    let mut out = Array2::zeros((vecs.nrows(), idx.len()));
    for (k, &i) in idx.iter().enumerate() {
        out.column_mut(k).assign(&vecs.column(i));
    }
    out
}

fn random_combination(ops: &[Operator], coeffs: &[C64]) -> Operator {
    let mut acc = Array2::zeros(ops[0].dim());
    for (op, &w) in ops.iter().zip(coeffs) {
        acc = acc + op.mapv(|z| z * w);
    }
    acc
}

/// Splits one central summand (orthonormal columns `e` in support
/// coordinates) into A ⊗ B. Returns (m, n, isometry in support coordinates).
fn factorize_summand(
    e: &Operator,
    commutant: &[Operator],
    rel_tol: f64,
    rng: &mut crate::random::Rng,
    warnings: &mut Vec<String>,
) -> Result<(usize, usize, Operator)> {
    let dk = e.ncols();
    let ed = dagger(e);
    let restricted: Vec<Operator> = commutant.iter().map(|a| ed.dot(a).dot(e)).collect();
    let rank = orthonormal_span(&vectorize_columns(&restricted), 1e-8)?.dim();
    let m = (rank as f64).sqrt().round() as usize;
    if m == 0 || m * m != rank || dk % m != 0 {
        return Err(Error::Structural(format!(
            "summand of dimension {dk} carries a commutant of dimension {rank}, not m² with m | {dk}"
        )));
    }
    let n = dk / m;
    if m == 1 {
        return Ok((1, n, e.clone()));
    }

    let coeffs: Vec<C64> = normal_coefficients(rng, restricted.len())
        .into_iter()
        .map(|x| c(x, 0.0))
        .collect();
    let y = hermitize(&random_combination(&restricted, &coeffs));
    let (vals, vecs) = eigh(&y)?;
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = rel_tol * scale.max(1.0);
    let (groups, gap) = group_eigenvalues(&vals, tol);
    if groups.len() != m || groups.iter().any(|g| g.len() != n) {
        return Err(Error::Structural(format!(
            "random commutant element splits a {dk}-dim summand into {:?}, expected {m} × {n}",
            groups.iter().map(|g| g.len()).collect::<Vec<_>>()
        )));
    }
    if gap.is_some_and(|g| g < 10.0 * tol) {
        warnings.push(format!("A-factor eigenvalue grouping is ambiguous (gap {:.3e})", gap.unwrap()));
    }
    let spaces: Vec<Operator> = groups.iter().map(|g| columns_of(&vecs, g)).collect();

    // A generic element z ⊗ I maps the first eigenspace onto each other one;
    // its normalized blocks are matrix units aligning the B bases.
    let re = normal_coefficients(rng, restricted.len());
    let im = normal_coefficients(rng, restricted.len());
    let coeffs: Vec<C64> = re.iter().zip(&im).map(|(&a, &b)| c(a, b)).collect();
    let z = random_combination(&restricted, &coeffs);
    let first = &spaces[0];
    let mut w = Array2::zeros((dk, dk));
    let mut weights = vec![];
    for (a, ea) in spaces.iter().enumerate() {
        let fa = if a == 0 {
            first.clone()
        } else {
            let ma = dagger(ea).dot(&z).dot(first);
            let ca = (frobenius(&ma).powi(2) / n as f64).sqrt();
            weights.push(ca);
            ea.dot(&ma).mapv(|x| x / ca)
        };
        w.slice_mut(s![.., a * n..(a + 1) * n]).assign(&fa);
    }
    let wmax = weights.iter().cloned().fold(0.0, f64::max);
    if weights.iter().any(|&x| x < 1e-6 * wmax) {
        warnings.push("matrix-unit normalization nearly singular".into());
    }
    let w = orthonormal_polish(&w)?;
    Ok((m, n, e.dot(&w)))
}

/// Nearest isometry (polar factor), removing round-off in assembled bases.
fn orthonormal_polish(w: &Operator) -> Result<Operator> {
    crate::numerics::polar_unitary(w)
}

/// Decomposes the Hilbert space into noiseless blocks and the decaying subspace.
pub fn decompose(l: &Lindbladian, opts: &DecomposeOptions) -> Result<Decomposition> {
    let rel_tol = opts.rel_tol;
    let mut warnings = vec![];
    let rs = recurrent_support(l, rel_tol)?;
    let q = rs.support.columns().clone();
    let (h_r, l_r) = l.compressed(&q);

    let mut gens = vec![h_r.clone()];
    for li in &l_r {
        gens.push(li.clone());
        gens.push(dagger(li));
    }
    let kernel = null_space(&commutator_stack(&gens), rel_tol)?;
    if let Some(w) = &kernel.warning {
        warnings.push(format!("commutant: {w}"));
    }
    let r = q.ncols();
    let raw = unvectorize_columns(&kernel.basis, r);
    let commutant = hermitian_basis(&raw, 1e-8)?;
    if commutant.len() != raw.len() {
        return Err(Error::Structural(format!(
            "commutant of dimension {} is not closed under † (Hermitian span {})",
            raw.len(),
            commutant.len()
        )));
    }

    // Center: combinations Σ c_k A_k commuting with every A_j.
    let k = commutant.len();
    let mut stack = Array2::zeros((k * r * r, k));
    for (j, aj) in commutant.iter().enumerate() {
        for (col, ak) in commutant.iter().enumerate() {
            let comm = ak.dot(aj) - aj.dot(ak);
            stack
                .slice_mut(s![j * r * r..(j + 1) * r * r, col])
                .assign(&crate::numerics::vectorize(&comm));
        }
    }
    // The A_k have unit norm, so an abelian commutant leaves only round-off
    // in the stack, which a purely relative threshold would read as rank.
    let center = if max_abs(&stack) <= rel_tol {
        commutant.clone()
    } else {
        let center_kernel = null_space(&stack, rel_tol)?;
        let center_ops: Vec<Operator> = center_kernel
            .basis
            .columns()
            .axis_iter(Axis(1))
            .map(|coef| random_combination(&commutant, &coef.to_vec()))
            .collect();
        hermitian_basis(&center_ops, 1e-8)?
    };

    let mut rng = rng(opts.seed);
    let coeffs: Vec<C64> = normal_coefficients(&mut rng, center.len())
        .into_iter()
        .map(|x| c(x, 0.0))
        .collect();
    let zc = hermitize(&random_combination(&center, &coeffs));
    let (vals, vecs) = eigh(&zc)?;
    let scale = vals.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let tol = rel_tol * scale.max(1.0);
    let (groups, gap) = group_eigenvalues(&vals, tol);
    if gap.is_some_and(|g| g < 10.0 * tol) {
        warnings.push(format!("central eigenvalue grouping is ambiguous (gap {:.3e})", gap.unwrap()));
    }

    let rho_inf = &rs.asymptotic_state;
    let mut blocks = vec![];
    for g in &groups {
        let e = columns_of(&vecs, g);
        let (m, n, w_r) = factorize_summand(&e, &commutant, rel_tol, &mut rng, &mut warnings)?;
        let mut w = q.dot(&w_r);

        let reduced = partial_trace(&dagger(&w).dot(rho_inf).dot(&w), m, n, Side::A)?;
        let weight = trace(&reduced).re;
        let rho_b = hermitize(&reduced.mapv(|z| z / weight));
        let (bvals, bvecs) = eigh(&rho_b)?;
        if bvals[0] < rel_tol * bvals[n - 1] {
            return Err(Error::Structural(format!(
                "cofactor fixed state is not full rank (eigenvalues {bvals:?})"
            )));
        }
        w = w.dot(&kron(&identity(m), &bvecs));
        let rho_b = hermitize(&dagger(&bvecs).dot(&rho_b).dot(&bvecs));
        let h_block = dagger(&w).dot(l.hamiltonian()).dot(&w);
        let h_a = hermitize(&partial_trace(&h_block, m, n, Side::B)?.mapv(|z| z / n as f64));
        blocks.push(Block::new(SubspaceBasis::new(w)?, m, n, rho_b, h_a)?);
    }

    blocks.sort_by(|x, y| {
        let min_diag = |b: &Block| (0..b.n).map(|i| b.fixed_state[[i, i]].re).fold(f64::INFINITY, f64::min);
        let energy = |b: &Block| trace(&b.internal_hamiltonian).re / b.m as f64;
        let first_index = |b: &Block| {
            (0..b.ambient_dim())
                .find(|&i| b.w().row(i).iter().any(|z| z.norm() > 1e-6))
                .unwrap_or(usize::MAX)
        };
        y.m.cmp(&x.m)
            .then(y.n.cmp(&x.n))
            .then(min_diag(x).total_cmp(&min_diag(y)))
            .then(energy(x).total_cmp(&energy(y)))
            .then(first_index(x).cmp(&first_index(y)))
    });

    let residual_report = blocks
        .iter()
        .map(|b| block_residual(l, b))
        .fold(0.0, f64::max);
    Ok(Decomposition {
        blocks,
        decaying: rs.decaying,
        residual_report,
        asymptotic_state: rs.asymptotic_state,
        warnings,
        seed: opts.seed,
    })
}

/// max over matrix units E_ab of ‖L(W(E_ab⊗ϱ)W†) + iW([H^A,E_ab]⊗ϱ)W†‖_F.
pub fn block_residual(l: &Lindbladian, b: &Block) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..b.m {
        for j in 0..b.m {
            let x = matrix_unit(b.m, i, j);
            let lhs = l.apply(&b.embed_product(&x));
            let comm = b.internal_hamiltonian.dot(&x) - x.dot(&b.internal_hamiltonian);
            let rhs = b.embed_product(&comm.mapv(|z| -I * z));
            worst = worst.max(frobenius(&(lhs - rhs)));
        }
    }
    worst
}

/// Residuals of the block-form conditions in the basis [W | W⊥].
#[derive(Clone, Debug, Serialize)]
pub struct BlockFormReport {
    pub passes: bool,
    pub max_violation: f64,
    /// Lower-left blocks of the L_j.
    pub lower_left: f64,
    /// Upper-left L_j blocks against I ⊗ L^B_j.
    pub dissipator_factor: f64,
    /// Upper-left H block against H^A ⊗ I + I ⊗ H^B.
    pub hamiltonian_factor: f64,
    /// Off-diagonal H block against −(i/2) Σ_j (I ⊗ L^B_j)† L_{2j}.
    pub h2_condition: f64,
    pub tolerance: f64,
}

struct BlockParts {
    h_b: Operator,
    l_b: Vec<Operator>,
    report: BlockFormReport,
}

fn block_parts(l: &Lindbladian, b: &Block) -> BlockParts {
    let (m, n) = (b.m, b.n);
    let p = m * n;
    let u = b.adapted_basis();
    let ud = dagger(&u);
    let frob_or_zero = |x: &Operator| if x.is_empty() { 0.0 } else { frobenius(x) };

    let mut lower_left: f64 = 0.0;
    let mut factor: f64 = 0.0;
    let mut l_b = vec![];
    let mut h2_target: Operator = Array2::zeros((p, u.ncols() - p));
    for lj in l.dissipators() {
        let lt = ud.dot(lj).dot(&u);
        lower_left = lower_left.max(frob_or_zero(&lt.slice(s![p.., ..p]).to_owned()));
        let ul = lt.slice(s![..p, ..p]).to_owned();
        let lbj = partial_trace(&ul, m, n, Side::A).unwrap().mapv(|z| z / m as f64);
        let ilb = kron(&identity(m), &lbj);
        factor = factor.max(frobenius(&(&ul - &ilb)));
        let l2 = lt.slice(s![..p, p..]).to_owned();
        h2_target = h2_target + dagger(&ilb).dot(&l2).mapv(|z| z * (-0.5 * I));
        l_b.push(lbj);
    }

    let ht = ud.dot(l.hamiltonian()).dot(&u);
    let h1 = ht.slice(s![..p, ..p]).to_owned();
    let h_a = partial_trace(&h1, m, n, Side::B).unwrap().mapv(|z| z / n as f64);
    let shift = trace(&h1) / (m * n) as f64;
    let h_b = partial_trace(&h1, m, n, Side::A).unwrap().mapv(|z| z / m as f64)
        - identity(n).mapv(|z| z * shift);
    let h_fit = kron(&h_a, &identity(n)) + kron(&identity(m), &h_b);
    let hamiltonian_factor = frobenius(&(&h1 - &h_fit));
    let h2 = ht.slice(s![..p, p..]).to_owned();
    let h2_condition = frob_or_zero(&(h2 - h2_target));

    let max_violation = lower_left.max(factor).max(hamiltonian_factor).max(h2_condition);
    let tolerance = 1e-8 * l.norm();
    BlockParts {
        h_b: hermitize(&h_b),
        l_b,
        report: BlockFormReport {
            passes: max_violation <= tolerance,
            max_violation,
            lower_left,
            dissipator_factor: factor,
            hamiltonian_factor,
            h2_condition,
            tolerance,
        },
    }
}

/// Checks that H and the L_j have the block forms that make A noiseless
/// and let B relax on its own.
pub fn verify_blockform(l: &Lindbladian, block: &Block) -> Result<BlockFormReport> {
    if block.ambient_dim() != l.dim() {
        return Err(Error::Dimension("block does not match generator".into()));
    }
    Ok(block_parts(l, block).report)
}

/// Generator of the cofactor B.
#[derive(Clone, Debug)]
pub struct LocalGenerator {
    pub generator: Lindbladian,
    /// Set for n = 1, where the cofactor carries no dynamics.
    pub trivial: bool,
}

/// Cofactor generator with Hamiltonian H^B and dissipators L^B_j.
pub fn local_lindbladian(l: &Lindbladian, block: &Block) -> Result<LocalGenerator> {
    if block.ambient_dim() != l.dim() {
        return Err(Error::Dimension("block does not match generator".into()));
    }
    let parts = block_parts(l, block);
    if !parts.report.passes {
        return Err(Error::BlockForm {
            violation: parts.report.max_violation,
        });
    }
    if block.n == 1 {
        return Ok(LocalGenerator {
            generator: Lindbladian::closed(Array2::zeros((1, 1)))?,
            trivial: true,
        });
    }
    Ok(LocalGenerator {
        generator: Lindbladian::new(parts.h_b, parts.l_b)?,
        trivial: false,
    })
}

/// Orthonormal basis of B₂: operators U Y U† with Y vanishing on the
/// lower-right (complement × complement) block, as columns of conj(U)⊗U.
pub fn b2_basis(block: &Block) -> Operator {
    let u = block.adapted_basis();
    let d = u.nrows();
    let p = block.m * block.n;
    let cu = crate::numerics::conjugation_superop(&u);
    let keep: Vec<usize> = (0..d)
        .flat_map(|j| (0..d).map(move |i| (i, j)))
        .filter(|&(i, j)| i < p || j < p)
        .map(|(i, j)| i + j * d)
        .collect();
    columns_of(&cu, &keep)
}

/// Gap data at one point of the curve.
#[derive(Clone, Debug, Serialize)]
pub struct GapSample {
    pub s: f64,
    pub delta1: Option<f64>,
    pub delta2: f64,
    /// Spectrum of S restricted to B₂, sorted by (re, im).
    pub b2_eigenvalues: Vec<C64>,
    /// Spectrum of the cofactor generator (empty when n = 1).
    pub local_eigenvalues: Vec<C64>,
    /// ‖(1 − P₂) S P₂‖, zero when B₂ is invariant.
    pub b2_invariance: f64,
}

impl GapSample {
    pub fn delta(&self) -> f64 {
        self.delta1.map_or(self.delta2, |d1| d1.min(self.delta2))
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct GapReport {
    pub s_grid: Vec<f64>,
    pub delta1: Option<f64>,
    pub delta2: f64,
    pub delta: f64,
    pub samples: Vec<GapSample>,
}

/// Δ₁ and Δ₂ of one generator and block.
pub fn gaps_at(l: &Lindbladian, block: &Block, s: f64, rel_tol: f64) -> Result<GapSample> {
    let norm = l.norm();
    let zero_tol = rel_tol * norm;
    let q = b2_basis(block);
    let sq = l.superoperator().dot(&q);
    let s2 = dagger(&q).dot(&sq);
    let b2_invariance = crate::numerics::op_norm(&(&sq - &q.dot(&s2)));
    let sp = Spectrum::of(&s2, false)?;
    let kernel = sp.eigenvalues.iter().filter(|z| z.norm() <= zero_tol).count();
    let expected = block.m * block.m;
    if kernel != expected {
        return Err(Error::DimensionChange {
            s,
            expected,
            found: kernel,
        });
    }
    let delta2 = sp
        .eigenvalues
        .iter()
        .filter(|z| z.norm() > zero_tol)
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);

    let local = local_lindbladian(l, block)?;
    let (delta1, local_eigenvalues) = if local.trivial {
        (None, vec![])
    } else {
        let lsp = Spectrum::of(local.generator.superoperator(), false)?;
        let d1 = lsp
            .eigenvalues
            .iter()
            .filter(|z| z.norm() > zero_tol)
            .map(|z| z.re.abs())
            .fold(f64::INFINITY, f64::min);
        (Some(d1), lsp.eigenvalues)
    };
    Ok(GapSample {
        s,
        delta1,
        delta2,
        b2_eigenvalues: sp.eigenvalues,
        local_eigenvalues,
        b2_invariance,
    })
}

/// How a block is followed along a curve.
#[derive(Clone, Debug)]
pub enum BlockTracker {
    /// The frame carries the block: W(s) = U(s)†·W₀ in the lab, where W₀
    /// is a block of the rotated-frame generator.
    Frame { block0: Block },
    /// Re-decompose the lab generator at each s and take the block at
    /// `index` in decomposition order.
    Redecompose {
        index: usize,
        m: usize,
        n: usize,
        opts: DecomposeOptions,
    },
}

impl BlockTracker {
    pub fn frame(block0: Block) -> Self {
        BlockTracker::Frame { block0 }
    }

    /// Tracks block `index` of the decomposition at s = 0.
    pub fn redecompose(curve: &LindbladCurve, index: usize, opts: DecomposeOptions) -> Result<Self> {
        let dec = decompose(&curve.lab_generator(0.0)?, &opts)?;
        let b = dec.blocks.get(index).ok_or_else(|| {
            Error::InvalidArgument(format!("block index {index} out of range ({} blocks)", dec.blocks.len()))
        })?;
        Ok(BlockTracker::Redecompose {
            index,
            m: b.m,
            n: b.n,
            opts,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        match self {
            BlockTracker::Frame { block0 } => (block0.m, block0.n),
            BlockTracker::Redecompose { m, n, .. } => (*m, *n),
        }
    }

    /// Block of the lab generator L(s).
    pub fn block_at(&self, curve: &LindbladCurve, s: f64) -> Result<Block> {
        match self {
            BlockTracker::Frame { block0 } => Ok(block0.conjugated(&dagger(&curve.frame_unitary(s)?))),
            BlockTracker::Redecompose { index, m, n, opts } => {
                let dec = decompose(&curve.lab_generator(s)?, opts)?;
                match dec.blocks.get(*index) {
                    Some(b) if (b.m, b.n) == (*m, *n) => Ok(b.clone()),
                    other => Err(Error::DimensionChange {
                        s,
                        expected: m * n,
                        found: other.map_or(0, |b| b.m * b.n),
                    }),
                }
            }
        }
    }

    /// Block in the rotating frame: U(s)·W(s).
    pub fn frame_block_at(&self, curve: &LindbladCurve, s: f64) -> Result<Block> {
        match self {
            BlockTracker::Frame { block0 } => Ok(block0.clone()),
            BlockTracker::Redecompose { .. } => {
                Ok(self.block_at(curve, s)?.conjugated(&curve.frame_unitary(s)?))
            }
        }
    }
}

pub const DEFAULT_S_POINTS: usize = 101;

/// Δ₁, Δ₂ and Δ = min(Δ₁, Δ₂) on a uniform s grid.
pub fn compute_gaps(
    curve: &LindbladCurve,
    tracker: &BlockTracker,
    s_points: usize,
    rel_tol: f64,
) -> Result<GapReport> {
    if s_points < 11 {
        return Err(Error::InvalidArgument(format!("s_points = {s_points} < 11")));
    }
    let s_grid: Vec<f64> = (0..s_points).map(|k| k as f64 / (s_points - 1) as f64).collect();
    let samples: Vec<GapSample> = s_grid
        .par_iter()
        .map(|&s| {
            let l = curve.lab_generator(s)?;
            let b = tracker.block_at(curve, s)?;
            let report = verify_blockform(&l, &b)?;
            if !report.passes {
                return Err(Error::BlockForm {
                    violation: report.max_violation,
                });
            }
            gaps_at(&l, &b, s, rel_tol)
        })
        .collect::<Result<_>>()?;
    let delta2 = samples.iter().map(|x| x.delta2).fold(f64::INFINITY, f64::min);
    let delta1 = samples
        .iter()
        .filter_map(|x| x.delta1)
        .reduce(f64::min);
    let delta = delta1.map_or(delta2, |d1| d1.min(delta2));
    Ok(GapReport {
        s_grid,
        delta1,
        delta2,
        delta,
        samples,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct PseudoInverseBound {
    /// Spectral radius of L′⁻¹, equal to 1 / min |λ(L′)|.
    pub spectral_radius_of_inverse: f64,
    pub one_over_delta: f64,
    /// Operator 2-norm of L′⁻¹ in an orthonormal basis of its domain;
    /// reported only, it can exceed 1/Δ for non-normal restrictions.
    pub operator_norm_of_inverse: f64,
    pub delta: f64,
}

/// Inverse of S on the spectral complement of its kernel inside B₂.
pub fn pseudo_inverse_bound(l: &Lindbladian, block: &Block, rel_tol: f64) -> Result<PseudoInverseBound> {
    let gaps = gaps_at(l, block, 0.0, rel_tol)?;
    let q = b2_basis(block);
    let s2 = dagger(&q).dot(l.superoperator()).dot(&q);
    let range = orthonormal_span(&s2, rel_tol)?;
    let expected = q.ncols() - block.m * block.m;
    if range.dim() != expected {
        return Err(Error::Structural(format!(
            "range of the restricted generator has dimension {}, expected {expected}",
            range.dim()
        )));
    }
    if expected == 0 {
        return Err(Error::Structural("restricted generator vanishes on B₂".into()));
    }
    let r = range.columns();
    let lp = dagger(r).dot(&s2).dot(r);
    let min_eig = Spectrum::of(&lp, false)?
        .eigenvalues
        .iter()
        .map(|z| z.norm())
        .fold(f64::INFINITY, f64::min);
    if min_eig <= rel_tol * l.norm() {
        return Err(Error::Structural("L′ is singular at tolerance".into()));
    }
    let inv = lp.inv()?;
    let radius = Spectrum::of(&inv, false)?
        .eigenvalues
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max);
    let delta = gaps.delta();
    Ok(PseudoInverseBound {
        spectral_radius_of_inverse: radius,
        one_over_delta: 1.0 / delta,
        operator_norm_of_inverse: crate::numerics::op_norm(&inv),
        delta,
    })
}

/// Fraction of a K-supported state that survives to the asymptotic regime.
pub fn decaying_residue(l: &Lindbladian, dec: &Decomposition, t: f64) -> Result<f64> {
    let k = dec.decaying.columns();
    if k.ncols() == 0 {
        return Ok(0.0);
    }
    let rho0 = k.dot(&dagger(k)).mapv(|z| z / k.ncols() as f64);
    let rho = propagate_const(l, &rho0, t)?.state;
    Ok(max_abs(&dagger(k).dot(&rho).dot(k)))
}

/// Convenience: the block of a decomposition with the given (m, n).
pub fn find_block(dec: &Decomposition, m: usize, n: usize) -> Option<&Block> {
    dec.blocks.iter().find(|b| b.m == m && b.n == n)
}

/// Complement of all block ranges and K; empty for a valid decomposition.
pub fn unaccounted_dimension(dec: &Decomposition) -> usize {
    let d = dec.decaying.ambient_dim();
    let covered: usize = dec.blocks.iter().map(|b| b.m * b.n).sum::<usize>() + dec.decaying.dim();
    d.saturating_sub(covered)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lindblad::FramePath;
    use crate::numerics::{
        max_principal_angle, op_norm, sigma_minus, sigma_x, sigma_z, zeros,
    };
    use crate::presets::{depol_b, depolarizer, AppendixB};
    use crate::random::random_unitary;

    fn diag_closed() -> Lindbladian {
        let mut h = zeros(3);
        h[[2, 2]] = c(1.0, 0.0);
        Lindbladian::closed(h).unwrap()
    }

    fn amplitude_damping() -> Lindbladian {
        Lindbladian::new(zeros(2), vec![sigma_minus()]).unwrap()
    }

    fn span_of(b: &Block) -> SubspaceBasis {
        b.isometry.clone()
    }

    #[test]
    fn fixed_point_dimensions() {
        let opt = DEFAULT_REL_TOL;
        assert_eq!(fixed_point_basis(&diag_closed(), opt).unwrap().basis.dim(), 5);
        assert_eq!(fixed_point_basis(&depol_b(1.0), opt).unwrap().basis.dim(), 4);
        assert_eq!(fixed_point_basis(&AppendixB::default().lindbladian(), opt).unwrap().basis.dim(), 5);
        let closed_z = Lindbladian::closed(sigma_z()).unwrap();
        assert_eq!(fixed_point_basis(&closed_z, opt).unwrap().basis.dim(), 2);
    }

    #[test]
    fn fixed_point_basis_is_hermitian() {
        let k = fixed_point_basis(&AppendixB::default().lindbladian(), DEFAULT_REL_TOL).unwrap();
        for op in unvectorize_columns(&k.basis, 8) {
            assert!(crate::numerics::hermiticity_error(&op) < 1e-12);
        }
    }

    #[test]
    fn amplitude_damping_support() {
        let rs = recurrent_support(&amplitude_damping(), DEFAULT_REL_TOL).unwrap();
        assert_eq!(rs.support.dim(), 1);
        assert_eq!(rs.decaying.dim(), 1);
        assert!(rs.support.columns()[[0, 0]].norm() > 1.0 - 1e-9);
        assert!(rs.decaying.columns()[[1, 0]].norm() > 1.0 - 1e-9);
    }

    #[test]
    fn full_support_examples() {
        for l in [AppendixB::default().lindbladian(), depol_b(1.0)] {
            let rs = recurrent_support(&l, DEFAULT_REL_TOL).unwrap();
            assert_eq!(rs.support.dim(), l.dim());
            assert_eq!(rs.decaying.dim(), 0);
        }
    }

    #[test]
    fn closed_diagonal_decomposition() {
        let dec = decompose(&diag_closed(), &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.dims(), vec![(2, 1), (1, 1)]);
        assert_eq!(dec.decaying.dim(), 0);
        for b in &dec.blocks {
            assert!((b.fixed_state[[0, 0]].re - 1.0).abs() < 1e-12);
        }
        // Energies: 0 on the doublet, 1 on the singlet.
        assert!(max_abs(&dec.blocks[0].internal_hamiltonian) < 1e-10);
        assert!((dec.blocks[1].internal_hamiltonian[[0, 0]].re - 1.0).abs() < 1e-10);
    }

    #[test]
    fn depol_b_decomposition() {
        let dec = decompose(&depol_b(0.7), &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.dims(), vec![(2, 2)]);
        assert_eq!(dec.decaying.dim(), 0);
        assert!(max_abs(&(&dec.blocks[0].fixed_state - identity(2).mapv(|z| z * 0.5))) < 1e-9);
        assert!(dec.residual_report < 1e-8);
    }

    #[test]
    fn appendix_b_decomposition() {
        let ab = AppendixB::default();
        let dec = decompose(&ab.lindbladian(), &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.dims(), vec![(2, 2), (1, 4)]);
        assert_eq!(dec.decaying.dim(), 0);
        assert_eq!(unaccounted_dimension(&dec), 0);
        let (vals, _) = eigh(&dec.blocks[0].fixed_state).unwrap();
        assert!((vals[0] - 0.25).abs() < 1e-8 && (vals[1] - 0.75).abs() < 1e-8);
        let printed = SubspaceBasis::new(AppendixB::printed_basis()).unwrap();
        assert!(max_principal_angle(&span_of(&dec.blocks[0]), &printed) < 1e-6);
        assert!(dec.residual_report < 1e-8);
    }

    #[test]
    fn amplitude_damping_decomposition_has_decaying_level() {
        let dec = decompose(&amplitude_damping(), &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.dims(), vec![(1, 1)]);
        assert_eq!(dec.decaying.dim(), 1);
        assert!(decaying_residue(&amplitude_damping(), &dec, 40.0).unwrap() < 1e-6);
    }

    #[test]
    fn decomposition_ranges_are_orthogonal() {
        let dec = decompose(&AppendixB::default().lindbladian(), &DecomposeOptions::default()).unwrap();
        let mut cols: Vec<&Operator> = dec.blocks.iter().map(|b| b.w()).collect();
        cols.push(dec.decaying.columns());
        for i in 0..cols.len() {
            for j in (i + 1)..cols.len() {
                if cols[i].ncols() > 0 && cols[j].ncols() > 0 {
                    assert!(max_abs(&dagger(cols[i]).dot(cols[j])) < 1e-9);
                }
            }
        }
    }

    #[test]
    fn block_form_examples() {
        let ab = AppendixB::default();
        let l = ab.lindbladian();
        let rep = verify_blockform(&l, &ab.printed_block()).unwrap();
        assert!(rep.passes, "{rep:?}");
        assert!(rep.max_violation <= 1e-8);

        let ad = amplitude_damping();
        let mut w = Array2::zeros((2, 1));
        w[[0, 0]] = c(1.0, 0.0);
        let b = Block::new(SubspaceBasis::new(w).unwrap(), 1, 1, identity(1), zeros(1)).unwrap();
        let rep = verify_blockform(&ad, &b).unwrap();
        assert!(rep.passes, "{rep:?}");

        let u = random_unitary(&mut rng(21), 8);
        let rotated = ab.printed_block().conjugated(&u);
        let rep = verify_blockform(&l, &rotated).unwrap();
        assert!(!rep.passes && rep.max_violation > 1e-3);
        assert!(matches!(local_lindbladian(&l, &rotated), Err(Error::BlockForm { .. })));
    }

    #[test]
    fn local_generator_examples() {
        let dec = decompose(&depol_b(0.9), &DecomposeOptions::default()).unwrap();
        let local = local_lindbladian(&depol_b(0.9), &dec.blocks[0]).unwrap();
        assert!(!local.trivial);
        // Same superoperator as the depolarizer, up to the B basis chosen.
        let sp = Spectrum::of(local.generator.superoperator(), false).unwrap();
        let want = Spectrum::of(depolarizer(0.9).superoperator(), false).unwrap();
        for (a, b) in sp.eigenvalues.iter().zip(&want.eigenvalues) {
            assert!((a - b).norm() < 1e-9);
        }

        let ab = AppendixB::default();
        let local = local_lindbladian(&ab.lindbladian(), &ab.printed_block()).unwrap();
        let k = fixed_point_basis(&local.generator, DEFAULT_REL_TOL).unwrap();
        assert_eq!(k.basis.dim(), 1);
        let mut fp = crate::numerics::unvectorize(&k.basis.columns().column(0).to_owned(), 2);
        let tr = trace(&fp);
        fp.mapv_inplace(|z| z / tr);
        assert!(max_abs(&(fp - ab.printed_fixed_state())) < 1e-8);

        let dec = decompose(&diag_closed(), &DecomposeOptions::default()).unwrap();
        let local = local_lindbladian(&diag_closed(), &dec.blocks[0]).unwrap();
        assert!(local.trivial);
    }

    #[test]
    fn closed_two_level_gap_is_level_splitting() {
        let g = 1.7;
        let curve = LindbladCurve::constant(Lindbladian::closed(sigma_z().mapv(|z| z * (g / 2.0))).unwrap());
        let mut w = Array2::zeros((2, 1));
        w[[1, 0]] = c(1.0, 0.0);
        let b = Block::new(SubspaceBasis::new(w).unwrap(), 1, 1, identity(1), identity(1).mapv(|z| -z * g / 2.0)).unwrap();
        let rep = compute_gaps(&curve, &BlockTracker::frame(b.clone()), 11, DEFAULT_REL_TOL).unwrap();
        assert!(rep.delta1.is_none());
        assert!((rep.delta - g).abs() < 1e-10);
        let pib = pseudo_inverse_bound(curve.lab_generator(0.0).as_ref().unwrap(), &b, DEFAULT_REL_TOL).unwrap();
        assert!((pib.spectral_radius_of_inverse - 1.0 / g).abs() < 1e-10);
    }

    #[test]
    fn depolarizer_cofactor_gap() {
        let gamma = 0.6;
        let l = depol_b(gamma);
        let dec = decompose(&l, &DecomposeOptions::default()).unwrap();
        let gs = gaps_at(&l, &dec.blocks[0], 0.0, DEFAULT_REL_TOL).unwrap();
        assert!((gs.delta1.unwrap() - gamma).abs() < 1e-10);
        assert!(gs.delta() <= gamma + 1e-10);

        let single = depolarizer(gamma);
        let b = Block::new(SubspaceBasis::full(2), 1, 2, identity(2).mapv(|z| z * 0.5), zeros(1)).unwrap();
        let pib = pseudo_inverse_bound(&single, &b, DEFAULT_REL_TOL).unwrap();
        assert!((pib.spectral_radius_of_inverse - 1.0 / gamma).abs() < 1e-10);
    }

    #[test]
    fn appendix_b_bound_holds() {
        let ab = AppendixB::default();
        let l = ab.lindbladian();
        let pib = pseudo_inverse_bound(&l, &ab.printed_block(), DEFAULT_REL_TOL).unwrap();
        assert!(pib.spectral_radius_of_inverse * pib.delta <= 1.0 + 1e-9);
    }

    #[test]
    fn kernel_change_along_curve_is_reported() {
        // A frame that leaves the block behind: the tracked ground state of
        // σ_z stops being stationary once the field is switched off.
        let l0 = Lindbladian::closed(sigma_z()).unwrap();
        let l1 = Lindbladian::closed(sigma_x().mapv(|z| z * 0.0)).unwrap();
        let curve = LindbladCurve::sampled(vec![(0.0, l0), (1.0, l1)]).unwrap();
        let mut w = Array2::zeros((2, 1));
        w[[1, 0]] = c(1.0, 0.0);
        let b = Block::new(SubspaceBasis::new(w).unwrap(), 1, 1, identity(1), zeros(1)).unwrap();
        let err = compute_gaps(&curve, &BlockTracker::frame(b), 11, DEFAULT_REL_TOL).unwrap_err();
        assert!(matches!(err, Error::DimensionChange { .. }), "{err:?}");
    }

    #[test]
    fn too_few_s_points_rejected() {
        let curve = LindbladCurve::constant(depol_b(1.0));
        let dec = decompose(&depol_b(1.0), &DecomposeOptions::default()).unwrap();
        let tr = BlockTracker::frame(dec.blocks[0].clone());
        assert!(compute_gaps(&curve, &tr, 10, DEFAULT_REL_TOL).is_err());
    }

    #[test]
    fn frame_tracker_follows_rotation() {
        let g = kron(&sigma_x(), &identity(2));
        let curve = LindbladCurve::rotated(depol_b(1.0), FramePath::constant(g).unwrap()).unwrap();
        let dec = decompose(&depol_b(1.0), &DecomposeOptions::default()).unwrap();
        let tr = BlockTracker::frame(dec.blocks[0].clone());
        let rep = compute_gaps(&curve, &tr, 11, DEFAULT_REL_TOL).unwrap();
        assert!((rep.delta1.unwrap() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn tilted_closed_qubit_splits_into_levels() {
        // Abelian commutant whose commutators are pure round-off.
        let h = sigma_z().mapv(|z| z * 0.495) + sigma_x().mapv(|z| z * 0.0704);
        let dec = decompose(&Lindbladian::closed(h).unwrap(), &DecomposeOptions::default()).unwrap();
        assert_eq!(dec.dims(), vec![(1, 1), (1, 1)]);
        assert!(dec.residual_report < 1e-12);
    }

    #[test]
    fn seed_changes_nothing_observable() {
        let l = AppendixB::default().lindbladian();
        let a = decompose(&l, &DecomposeOptions::default()).unwrap();
        let b = decompose(&l, &DecomposeOptions { seed: 7, ..Default::default() }).unwrap();
        assert_eq!(a.dims(), b.dims());
        for (x, y) in a.blocks.iter().zip(&b.blocks) {
            assert!(max_principal_angle(&x.isometry, &y.isometry) < 1e-6);
        }
        assert!(op_norm(&(&a.asymptotic_state - &b.asymptotic_state)) < 1e-12);
    }
}

#[cfg(test)]
mod proptests {
    use super::*;
    use crate::numerics::{max_principal_angle, op_norm};
    use crate::presets::AppendixB;
    use crate::random::{random_density, random_hermitian, random_matrix, random_unitary};
    use proptest::prelude::*;

    /// Noiseless qubit tensored with a randomly driven, randomly damped
    /// qubit, seen in a random basis.
    fn random_factorized(seed: u64) -> Lindbladian {
        let mut r = rng(seed);
        let h = kron(&identity(2), &random_hermitian(&mut r, 2));
        let ls = (0..2).map(|_| kron(&identity(2), &random_matrix(&mut r, 2))).collect();
        let u = random_unitary(&mut r, 4);
        Lindbladian::new(h, ls).unwrap().conjugated(&u)
    }

    fn family(kind: u8, seed: u64) -> Lindbladian {
        match kind {
            0 => random_factorized(seed),
            _ => {
                let coeffs = crate::random::normal_coefficients(&mut rng(seed), 3);
                AppendixB {
                    omega: coeffs[0],
                    gamma_plus: 0.2 + coeffs[1].abs(),
                    gamma_minus: 0.2 + coeffs[2].abs(),
                }
                .lindbladian()
            }
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn conjugation_preserves_blocks(kind in 0u8..2, seed in any::<u64>()) {
            let l = family(kind, seed);
            let u = random_unitary(&mut rng(seed ^ 0x55), l.dim());
            let a = decompose(&l, &DecomposeOptions::default()).unwrap();
            let b = decompose(&l.conjugated(&u), &DecomposeOptions::default()).unwrap();
            let mut da = a.dims();
            let mut db = b.dims();
            da.sort();
            db.sort();
            prop_assert_eq!(da, db);
            for x in &a.blocks {
                let moved = SubspaceBasis::new(u.dot(x.w())).unwrap();
                let best = b
                    .blocks
                    .iter()
                    .filter(|y| (y.m, y.n) == (x.m, x.n))
                    .map(|y| max_principal_angle(&moved, &y.isometry))
                    .fold(f64::INFINITY, f64::min);
                prop_assert!(best <= 1e-6, "angle {}", best);
            }
        }

        #[test]
        fn blocks_are_annihilated_up_to_rotation(kind in 0u8..2, seed in any::<u64>()) {
            let l = family(kind, seed);
            let dec = decompose(&l, &DecomposeOptions::default()).unwrap();
            let mut r = rng(seed);
            for b in &dec.blocks {
                for _ in 0..20 {
                    let x = random_matrix(&mut r, b.m);
                    let lhs = l.apply(&b.embed_product(&x));
                    let comm = b.internal_hamiltonian.dot(&x) - x.dot(&b.internal_hamiltonian);
                    let rhs = b.embed_product(&comm.mapv(|z| -I * z));
                    prop_assert!(frobenius(&(lhs - rhs)) <= 1e-8 * (1.0 + frobenius(&x)));
                }
            }
        }

        #[test]
        fn stationary_span_matches_kernel(kind in 0u8..2, seed in any::<u64>()) {
            let l = family(kind, seed);
            let dec = decompose(&l, &DecomposeOptions::default()).unwrap();
            let blocks = dec.stationary_basis().unwrap();
            let kernel = fixed_point_basis(&l, DEFAULT_REL_TOL).unwrap().basis;
            prop_assert_eq!(blocks.dim(), kernel.dim());
            prop_assert!(max_principal_angle(&blocks, &kernel) <= 1e-6);
            prop_assert_eq!(unaccounted_dimension(&dec), 0);
        }

        #[test]
        fn restricted_generator_keeps_b2_and_obeys_bound(kind in 0u8..2, seed in any::<u64>()) {
            let l = family(kind, seed);
            let dec = decompose(&l, &DecomposeOptions::default()).unwrap();
            let b = &dec.blocks[0];
            prop_assert!(verify_blockform(&l, b).unwrap().passes);
            let gs = gaps_at(&l, b, 0.0, DEFAULT_REL_TOL).unwrap();
            prop_assert!(gs.b2_invariance <= 1e-8 * op_norm(l.superoperator()));
            let pib = pseudo_inverse_bound(&l, b, DEFAULT_REL_TOL).unwrap();
            prop_assert!(pib.spectral_radius_of_inverse * pib.delta <= 1.0 + 1e-9);
        }

        #[test]
        fn product_states_relax_to_block_fixed_state(seed in any::<u64>()) {
            let l = random_factorized(seed);
            let dec = decompose(&l, &DecomposeOptions::default()).unwrap();
            let b = &dec.blocks[0];
            let rho_a = random_density(&mut rng(seed), 2);
            let rho = b.embed_product(&rho_a);
            prop_assert!(frobenius(&l.apply(&rho)) <= 1e-8);
        }
    }
}

//! Dense complex linear algebra shared by every other module.
//!
//! Operators are plain `Array2<C64>` matrices. Superoperators act on
//! column-stacked vectors, `vec(X)[i + j·d] = X[i, j]`, so that
//!
//! ```text
//! vec(A X B) = (Bᵀ ⊗ A) vec(X)
//! ```
//!
//! and `kron(A, B)` places `B` on the fastest-varying index. Bipartite
//! spaces are always ordered A ⊗ B with B varying fastest.

use ndarray::{Array1, Array2, ArrayView2, Axis, ShapeBuilder};
use ndarray_linalg::{Eig, Eigh, Inverse, SVD, UPLO};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type Operator = Array2<C64>;

/// Relative rank tolerance used for kernels and spectral grouping.
pub const DEFAULT_REL_TOL: f64 = 1e-9;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn identity(d: usize) -> Operator {
    Array2::eye(d)
}

pub fn zeros(d: usize) -> Operator {
    Array2::zeros((d, d))
}

pub fn sigma_x() -> Operator {
    ndarray::array![[ZERO, ONE], [ONE, ZERO]]
}

pub fn sigma_y() -> Operator {
    ndarray::array![[ZERO, -I], [I, ZERO]]
}

pub fn sigma_z() -> Operator {
    ndarray::array![[ONE, ZERO], [ZERO, -ONE]]
}

/// σ₊ = |1⟩⟨0|.
pub fn sigma_plus() -> Operator {
    ndarray::array![[ZERO, ZERO], [ONE, ZERO]]
}

/// σ₋ = |0⟩⟨1|.
pub fn sigma_minus() -> Operator {
    ndarray::array![[ZERO, ONE], [ZERO, ZERO]]
}

/// Projector |k⟩⟨k| in dimension `d`.
pub fn basis_projector(d: usize, k: usize) -> Operator {
    let mut p = zeros(d);
    p[[k, k]] = ONE;
    p
}

/// Matrix unit |i⟩⟨j|.
pub fn matrix_unit(d: usize, i: usize, j: usize) -> Operator {
    let mut e = zeros(d);
    e[[i, j]] = ONE;
    e
}

pub fn kron(a: &Operator, b: &Operator) -> Operator {
    let (ar, ac) = a.dim();
    let (br, bc) = b.dim();
    let mut out = Array2::zeros((ar * br, ac * bc));
    for i in 0..ar {
        for j in 0..ac {
            let aij = a[[i, j]];
            if aij == ZERO {
                continue;
            }
            let mut blk = out.slice_mut(ndarray::s![i * br..(i + 1) * br, j * bc..(j + 1) * bc]);
            blk.zip_mut_with(b, |o, &bv| *o = aij * bv);
        }
    }
    out
}

pub fn kron_all(ops: &[Operator]) -> Operator {
    ops.iter()
        .skip(1)
        .fold(ops[0].clone(), |acc, op| kron(&acc, op))
}

/// Single-site operator `op` on site `site` of `n_sites` qubits (site 0 is leftmost).
pub fn embed_site(op: &Operator, site: usize, n_sites: usize) -> Operator {
    let ops: Vec<Operator> = (0..n_sites)
        .map(|k| if k == site { op.clone() } else { identity(op.nrows()) })
        .collect();
    kron_all(&ops)
}

pub fn dagger(a: &Operator) -> Operator {
    a.t().mapv(|z| z.conj())
}

pub fn dagger_view(a: ArrayView2<C64>) -> Operator {
    a.t().mapv(|z| z.conj())
}

pub fn commutator(a: &Operator, b: &Operator) -> Operator {
    a.dot(b) - b.dot(a)
}

pub fn trace(a: &Operator) -> C64 {
    a.diag().sum()
}

pub fn hermitize(a: &Operator) -> Operator {
    (a + &dagger(a)).mapv(|z| z * 0.5)
}

/// max |A − A†|.
pub fn hermiticity_error(a: &Operator) -> f64 {
    max_abs(&(a - &dagger(a)))
}

pub fn max_abs(a: &Operator) -> f64 {
    a.iter().fold(0.0, |m, z| m.max(z.norm()))
}

pub fn frobenius(a: &Operator) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Largest singular value.
pub fn op_norm(a: &Operator) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    match a.svd(false, false) {
        Ok((_, s, _)) => s.iter().cloned().fold(0.0, f64::max),
        Err(_) => frobenius(a),
    }
}

fn one_norm(a: &Operator) -> f64 {
    a.axis_iter(Axis(1))
        .map(|col| col.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Column-stacking vectorization.
pub fn vectorize(x: &Operator) -> Array1<C64> {
    let d = x.nrows();
    let mut v = Array1::zeros(d * x.ncols());
    for j in 0..x.ncols() {
        for i in 0..d {
            v[i + j * d] = x[[i, j]];
        }
    }
    v
}

pub fn unvectorize(v: &Array1<C64>, d: usize) -> Operator {
    let mut x = Array2::zeros((d, d));
    for j in 0..d {
        for i in 0..d {
            x[[i, j]] = v[i + j * d];
        }
    }
    x
}

/// X ↦ A X, i.e. I ⊗ A.
pub fn left_superop(a: &Operator) -> Operator {
    kron(&identity(a.nrows()), a)
}

/// X ↦ X B, i.e. Bᵀ ⊗ I.
pub fn right_superop(b: &Operator) -> Operator {
    kron(&b.t().to_owned(), &identity(b.nrows()))
}

/// X ↦ U X U†, i.e. conj(U) ⊗ U.
pub fn conjugation_superop(u: &Operator) -> Operator {
    kron(&u.mapv(|z| z.conj()), u)
}

/// X ↦ −i[A, X].
pub fn commutator_superop(a: &Operator) -> Operator {
    (left_superop(a) - right_superop(a)).mapv(|z| -I * z)
}

pub fn apply_superop(s: &Operator, x: &Operator) -> Operator {
    unvectorize(&s.dot(&vectorize(x)), x.nrows())
}

/// Choi matrix Σ_ij |i⟩⟨j| ⊗ E(|i⟩⟨j|) of a column-stacked superoperator.
pub fn choi_matrix(s: &Operator, d: usize) -> Operator {
    let mut choi = Array2::zeros((d * d, d * d));
    for i in 0..d {
        for j in 0..d {
            let out = apply_superop(s, &matrix_unit(d, i, j));
            choi.slice_mut(ndarray::s![i * d..(i + 1) * d, j * d..(j + 1) * d])
                .assign(&out);
        }
    }
    choi
}

const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];
const THETA13: f64 = 5.371920351148152;

/// Matrix exponential by the [13/13] Padé approximant with scaling and
/// squaring: `M` is scaled by 2⁻ˢ until ‖M‖₁ ≤ θ₁₃, the rational
/// approximant is evaluated, and the result squared `s` times.
pub fn matexp(m: &Operator) -> Result<Operator> {
    let (r, cdim) = m.dim();
    if r != cdim {
        return Err(Error::Dimension(format!("matexp of non-square {r}×{cdim} matrix")));
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::InvalidArgument("matexp of non-finite matrix".into()));
    }
    let n = r;
    if n == 0 {
        return Ok(m.clone());
    }
    let norm = one_norm(m);
    if norm == 0.0 {
        return Ok(identity(n));
    }
    let squarings = if norm > THETA13 {
        (norm / THETA13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let a = m.mapv(|z| z / 2f64.powi(squarings));
    let id = identity(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let b = |k: usize| C64::new(PADE13[k], 0.0);

    let inner_u = &a6.mapv(|z| z * b(13)) + &a4.mapv(|z| z * b(11)) + &a2.mapv(|z| z * b(9));
    let u_poly = a6.dot(&inner_u)
        + a6.mapv(|z| z * b(7))
        + a4.mapv(|z| z * b(5))
        + a2.mapv(|z| z * b(3))
        + id.mapv(|z| z * b(1));
    let u = a.dot(&u_poly);
    let inner_v = &a6.mapv(|z| z * b(12)) + &a4.mapv(|z| z * b(10)) + &a2.mapv(|z| z * b(8));
    let v = a6.dot(&inner_v)
        + a6.mapv(|z| z * b(6))
        + a4.mapv(|z| z * b(4))
        + a2.mapv(|z| z * b(2))
        + id.mapv(|z| z * b(0));

    let denom = &v - &u;
    let numer = &v + &u;
    let mut x = denom.inv()?.dot(&numer);
    for _ in 0..squarings {
        x = x.dot(&x);
    }
    Ok(x)
}

/// Orthonormal columns spanning a subspace of C^ambient.
#[derive(Clone, Debug)]
pub struct SubspaceBasis {
    columns: Operator,
}

impl SubspaceBasis {
    /// Wraps columns already known to be orthonormal.
    pub fn new(columns: Operator) -> Result<Self> {
        let basis = SubspaceBasis { columns };
        let err = basis.orthonormality_error();
        if err > 1e-10 {
            return Err(Error::InvalidArgument(format!(
                "basis columns not orthonormal (error {err:.2e})"
            )));
        }
        Ok(basis)
    }

    pub fn empty(ambient_dim: usize) -> Self {
        SubspaceBasis {
            columns: Array2::zeros((ambient_dim, 0)),
        }
    }

    pub fn full(ambient_dim: usize) -> Self {
        SubspaceBasis {
            columns: identity(ambient_dim),
        }
    }

    pub fn ambient_dim(&self) -> usize {
        self.columns.nrows()
    }

    pub fn dim(&self) -> usize {
        self.columns.ncols()
    }

    pub fn columns(&self) -> &Operator {
        &self.columns
    }

    pub fn into_columns(self) -> Operator {
        self.columns
    }

    /// Orthogonal projector onto the span.
    pub fn projector(&self) -> Operator {
        self.columns.dot(&dagger(&self.columns))
    }

    pub fn orthonormality_error(&self) -> f64 {
        let g = dagger(&self.columns).dot(&self.columns);
        max_abs(&(g - identity(self.dim())))
    }

    pub fn complement(&self) -> SubspaceBasis {
        orthonormal_complement(&self.columns)
    }
}

/// Right kernel of a matrix with its numerical diagnostics.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub basis: SubspaceBasis,
    /// All singular values, descending.
    pub singular_values: Vec<f64>,
    pub threshold: f64,
    /// Set when some singular value lies within a factor 10 of the threshold.
    pub warning: Option<String>,
}

impl Kernel {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }
}

/// Orthonormal basis of the right kernel: right singular vectors whose
/// singular values are strictly below `rel_tol · σ_max`, ordered by
/// ascending singular value (ties keep LAPACK order).
pub fn null_space(m: &Operator, rel_tol: f64) -> Result<Kernel> {
    if !(rel_tol > 0.0 && rel_tol < 1.0) {
        return Err(Error::InvalidArgument(format!("rel_tol {rel_tol} outside (0, 1)")));
    }
    let n = m.ncols();
    if m.nrows() == 0 || n == 0 {
        return Ok(Kernel {
            basis: SubspaceBasis::full(n),
            singular_values: vec![],
            threshold: 0.0,
            warning: None,
        });
    }
    let (_, s, vt) = m.svd(false, true)?;
    let vt = vt.ok_or_else(|| Error::Linalg("SVD returned no right vectors".into()))?;
    let sigma_max = s.iter().cloned().fold(0.0, f64::max);
    let sv = |i: usize| if i < s.len() { s[i] } else { 0.0 };
    if sigma_max == 0.0 {
        return Ok(Kernel {
            basis: SubspaceBasis::full(n),
            singular_values: s.to_vec(),
            threshold: 0.0,
            warning: None,
        });
    }
    let threshold = rel_tol * sigma_max;
    let mut idx: Vec<usize> = (0..n).filter(|&i| sv(i) < threshold).collect();
    idx.sort_by(|&a, &b| sv(a).total_cmp(&sv(b)).then(a.cmp(&b)));
    let mut cols = Array2::zeros((n, idx.len()));
    for (k, &i) in idx.iter().enumerate() {
        cols.column_mut(k).assign(&vt.row(i).mapv(|z| z.conj()));
    }
    let borderline: Vec<f64> = (0..n)
        .map(sv)
        .filter(|&x| x >= threshold / 10.0 && x <= threshold * 10.0)
        .collect();
    let warning = (!borderline.is_empty()).then(|| {
        format!(
            "{} singular value(s) within a factor 10 of the rank threshold {threshold:.3e}: {borderline:?}",
            borderline.len()
        )
    });
    Ok(Kernel {
        basis: SubspaceBasis { columns: cols },
        singular_values: s.to_vec(),
        threshold,
        warning,
    })
}

/// Orthonormal basis of the orthogonal complement of the column span.
pub fn orthonormal_complement(columns: &Operator) -> SubspaceBasis {
    let d = columns.nrows();
    if columns.ncols() == 0 {
        return SubspaceBasis::full(d);
    }
    let k = null_space(&dagger(columns), 1e-8).expect("complement of finite basis");
    k.basis
}

/// Largest principal angle between two subspaces, π/2 when dimensions differ.
pub fn max_principal_angle(a: &SubspaceBasis, b: &SubspaceBasis) -> f64 {
    if a.dim() != b.dim() || a.ambient_dim() != b.ambient_dim() {
        return std::f64::consts::FRAC_PI_2;
    }
    if a.dim() == 0 {
        return 0.0;
    }
    let residual = b.columns() - &a.projector().dot(b.columns());
    op_norm(&residual).min(1.0).asin()
}

// LAPACK sees a row-major array as its transpose, which for the eigen
// routines silently returns conjugated or left eigenvectors.
fn fortran_layout(m: &Operator) -> Operator {
    let mut f = Array2::zeros(m.raw_dim().f());
    f.assign(m);
    f
}

/// Eigenvalues (and optionally right eigenvectors) sorted by real part,
/// then imaginary part.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub eigenvalues: Vec<C64>,
    pub eigenvectors: Option<Operator>,
}

impl Spectrum {
    pub fn of(m: &Operator, with_vectors: bool) -> Result<Spectrum> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension("spectrum of non-square matrix".into()));
        }
        let (vals, vecs) = fortran_layout(m).eig()?;
        let mut order: Vec<usize> = (0..vals.len()).collect();
        order.sort_by(|&a, &b| {
            vals[a]
                .re
                .total_cmp(&vals[b].re)
                .then(vals[a].im.total_cmp(&vals[b].im))
        });
        let eigenvalues = order.iter().map(|&i| vals[i]).collect();
        let eigenvectors = with_vectors.then(|| {
            let mut v = Array2::zeros(vecs.dim());
            for (k, &i) in order.iter().enumerate() {
                v.column_mut(k).assign(&vecs.column(i));
            }
            v
        });
        Ok(Spectrum {
            eigenvalues,
            eigenvectors,
        })
    }

    /// max |M v − λ v| over the stored pairs.
    pub fn residual(&self, m: &Operator) -> Option<f64> {
        let v = self.eigenvectors.as_ref()?;
        let mv = m.dot(v);
        let mut worst: f64 = 0.0;
        for (k, lam) in self.eigenvalues.iter().enumerate() {
            let r = &mv.column(k) - &v.column(k).mapv(|z| z * lam);
            worst = worst.max(r.iter().fold(0.0, |a, z| a.max(z.norm())));
        }
        Some(worst)
    }
}

/// Hermitian eigendecomposition, eigenvalues ascending.
pub fn eigh(m: &Operator) -> Result<(Vec<f64>, Operator)> {
    let h = fortran_layout(&hermitize(m));
    let (vals, vecs) = h.eigh(UPLO::Lower)?;
    Ok((vals.to_vec(), vecs))
}

pub fn singular_values(m: &Operator) -> Result<Vec<f64>> {
    let (_, s, _) = m.svd(false, false)?;
    Ok(s.to_vec())
}

/// Unitary factor of the polar decomposition A = U·P.
pub fn polar_unitary(a: &Operator) -> Result<Operator> {
    let (u, _, vt) = a.svd(true, true)?;
    let (u, vt) = (u.unwrap(), vt.unwrap());
    Ok(u.dot(&vt))
}

/// Which tensor factor a partial trace removes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

/// Partial trace on A ⊗ B (B fastest) over the factor named by `side`.
pub fn partial_trace(m: &Operator, dim_a: usize, dim_b: usize, side: Side) -> Result<Operator> {
    if m.nrows() != dim_a * dim_b || m.ncols() != dim_a * dim_b {
        return Err(Error::Dimension(format!(
            "partial trace of {}×{} operator over {dim_a}·{dim_b} factors",
            m.nrows(),
            m.ncols()
        )));
    }
    match side {
        Side::B => {
            let mut out = zeros(dim_a);
            for a in 0..dim_a {
                for a2 in 0..dim_a {
                    out[[a, a2]] = (0..dim_b).map(|b| m[[a * dim_b + b, a2 * dim_b + b]]).sum();
                }
            }
            Ok(out)
        }
        Side::A => {
            let mut out = zeros(dim_b);
            for b in 0..dim_b {
                for b2 in 0..dim_b {
                    out[[b, b2]] = (0..dim_a).map(|a| m[[a * dim_b + b, a * dim_b + b2]]).sum();
                }
            }
            Ok(out)
        }
    }
}

/// ½ · (sum of singular values of ρ − σ).
pub fn trace_distance(rho: &Operator, sigma: &Operator) -> Result<f64> {
    if rho.dim() != sigma.dim() {
        return Err(Error::Dimension("trace distance of unequal shapes".into()));
    }
    Ok(0.5 * singular_values(&(rho - sigma))?.iter().sum::<f64>())
}

pub fn check_hermitian(a: &Operator, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::Dimension(format!("{what} is not square")));
    }
    let scale = max_abs(a).max(f64::MIN_POSITIVE);
    let err = hermiticity_error(a);
    if err > 1e-12 * scale && err > 1e-300 {
        return Err(Error::InvalidArgument(format!(
            "{what} is not Hermitian (max |M − M†| = {err:.2e})"
        )));
    }
    Ok(())
}

/// Density-operator check: Hermitian, unit trace within 1e-10, minimum
/// eigenvalue ≥ −1e-10.
pub fn check_density(rho: &Operator) -> Result<()> {
    check_hermitian(rho, "density operator")?;
    let tr = trace(rho);
    if (tr - ONE).norm() > 1e-10 {
        return Err(Error::InvalidArgument(format!("density operator has trace {tr}")));
    }
    let (vals, _) = eigh(rho)?;
    if vals.first().is_some_and(|&v| v < -1e-10) {
        return Err(Error::InvalidArgument(format!(
            "density operator has negative eigenvalue {:.3e}",
            vals[0]
        )));
    }
    Ok(())
}

/// Real coordinates of a Hermitian matrix, isometric to the Frobenius norm.
fn hermitian_coords(h: &Operator) -> Vec<f64> {
    let d = h.nrows();
    let mut out = Vec::with_capacity(d * d);
    let r2 = std::f64::consts::SQRT_2;
    for i in 0..d {
        out.push(h[[i, i]].re);
        for j in (i + 1)..d {
            out.push(r2 * h[[i, j]].re);
            out.push(r2 * h[[i, j]].im);
        }
    }
    out
}

fn hermitian_from_coords(x: &[f64], d: usize) -> Operator {
    let mut h = zeros(d);
    let r2 = std::f64::consts::SQRT_2;
    let mut k = 0;
    for i in 0..d {
        h[[i, i]] = c(x[k], 0.0);
        k += 1;
        for j in (i + 1)..d {
            let z = c(x[k], x[k + 1]) / r2;
            h[[i, j]] = z;
            h[[j, i]] = z.conj();
            k += 2;
        }
    }
    h
}

/// Frobenius-orthonormal Hermitian basis of the real span of
/// {(B + B†)/2, (B − B†)/2i} over the inputs. For a †-closed complex span
/// of dimension k the result has exactly k elements.
pub fn hermitian_basis(ops: &[Operator], rel_tol: f64) -> Result<Vec<Operator>> {
    if ops.is_empty() {
        return Ok(vec![]);
    }
    let d = ops[0].nrows();
    let mut cols: Vec<Vec<f64>> = Vec::with_capacity(2 * ops.len());
    for b in ops {
        let bd = dagger(b);
        let re = (b + &bd).mapv(|z| z * 0.5);
        let im = (b - &bd).mapv(|z| z / (2.0 * I));
        cols.push(hermitian_coords(&re));
        cols.push(hermitian_coords(&im));
    }
    let mut mat = Array2::<f64>::zeros((d * d, cols.len()));
    for (k, col) in cols.iter().enumerate() {
        for (r, &x) in col.iter().enumerate() {
            mat[[r, k]] = x;
        }
    }
    let (u, s, _) = mat.svd(true, false)?;
    let u = u.unwrap();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(vec![]);
    }
    let rank = s.iter().filter(|&&x| x > rel_tol * smax).count();
    Ok((0..rank)
        .map(|k| hermitian_from_coords(u.column(k).as_slice().unwrap_or(&u.column(k).to_vec()), d))
        .collect())
}

/// Operator-space basis from vectorized columns.
pub fn unvectorize_columns(basis: &SubspaceBasis, d: usize) -> Vec<Operator> {
    basis
        .columns()
        .axis_iter(Axis(1))
        .map(|col| unvectorize(&col.to_owned(), d))
        .collect()
}

/// Stacks vectorized operators as columns.
pub fn vectorize_columns(ops: &[Operator]) -> Operator {
    let n = ops.first().map(|o| o.len()).unwrap_or(0);
    let mut m = Array2::zeros((n, ops.len()));
    for (k, op) in ops.iter().enumerate() {
        m.column_mut(k).assign(&vectorize(op));
    }
    m
}

/// Orthonormal basis of the column span at relative tolerance.
pub fn orthonormal_span(columns: &Operator, rel_tol: f64) -> Result<SubspaceBasis> {
    if columns.ncols() == 0 {
        return Ok(SubspaceBasis::empty(columns.nrows()));
    }
    let (u, s, _) = columns.svd(true, false)?;
    let u = u.unwrap();
    let smax = s.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(SubspaceBasis::empty(columns.nrows()));
    }
    let rank = s.iter().filter(|&&x| x > rel_tol * smax).count();
    Ok(SubspaceBasis {
        columns: u.slice(ndarray::s![.., ..rank]).to_owned(),
    })
}

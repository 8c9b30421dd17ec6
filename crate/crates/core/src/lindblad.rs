//! Lindblad generators, one-parameter curves of generators and their
//! propagation.
//!
//! The superoperator of `dρ/dt = −i[H, ρ] + Σ_i (L_i ρ L_i† − ½{L_i†L_i, ρ})`
//! under column stacking is
//!
//! ```text
//! S = −i(I⊗H − Hᵀ⊗I) + Σ_i [conj(L_i)⊗L_i − ½ I⊗L_i†L_i − ½ (L_i†L_i)ᵀ⊗I]
//! ```
//!
//! Time-dependent problems are posed in a rotating frame U(s): with
//! `L̃(s) = U(s)·L(s)·U(s)†` and `V(s) = i U′(s) U(s)†` the frame state obeys
//! `dρ̃/dt = −(i/T)[V(t/T), ρ̃] + L̃(t/T) ρ̃`.

use std::fmt::Write as _;
use std::sync::OnceLock;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::numerics::{
    check_density, check_hermitian, commutator_superop, conjugation_superop, dagger, hermitize,
    hermiticity_error, identity, kron, matexp, op_norm, trace, unvectorize, vectorize,
    vectorize_columns, zeros, Operator, C64, I,
};

#[derive(Debug)]
pub struct Lindbladian {
    hamiltonian: Operator,
    dissipators: Vec<Operator>,
    superop: OnceLock<Operator>,
    norm: OnceLock<f64>,
}

impl Clone for Lindbladian {
    fn clone(&self) -> Self {
        Lindbladian {
            hamiltonian: self.hamiltonian.clone(),
            dissipators: self.dissipators.clone(),
            superop: self.superop.clone(),
            norm: self.norm.clone(),
        }
    }
}

impl Lindbladian {
    pub fn new(hamiltonian: Operator, dissipators: Vec<Operator>) -> Result<Self> {
        check_hermitian(&hamiltonian, "Hamiltonian")?;
        let d = hamiltonian.nrows();
        if d == 0 {
            return Err(Error::Dimension("empty Hamiltonian".into()));
        }
        for (k, l) in dissipators.iter().enumerate() {
            if l.dim() != (d, d) {
                return Err(Error::Dimension(format!(
                    "Lindblad operator {k} is {}×{}, Hamiltonian is {d}×{d}",
                    l.nrows(),
                    l.ncols()
                )));
            }
        }
        Ok(Lindbladian {
            hamiltonian: hermitize(&hamiltonian),
            dissipators,
            superop: OnceLock::new(),
            norm: OnceLock::new(),
        })
    }

    pub fn closed(hamiltonian: Operator) -> Result<Self> {
        Self::new(hamiltonian, vec![])
    }

    pub fn dim(&self) -> usize {
        self.hamiltonian.nrows()
    }

    pub fn hamiltonian(&self) -> &Operator {
        &self.hamiltonian
    }

    pub fn dissipators(&self) -> &[Operator] {
        &self.dissipators
    }

    /// Column-stacked d²×d² superoperator, built on first use.
    pub fn superoperator(&self) -> &Operator {
        self.superop
            .get_or_init(|| build_superoperator(&self.hamiltonian, &self.dissipators))
    }

    /// Operator 2-norm of the superoperator.
    pub fn norm(&self) -> f64 {
        *self.norm.get_or_init(|| op_norm(self.superoperator()))
    }

    /// Same generator in the basis rotated by `u`: H ↦ U H U†, L_i ↦ U L_i U†.
    pub fn conjugated(&self, u: &Operator) -> Lindbladian {
        let ud = dagger(u);
        let conj = |x: &Operator| u.dot(x).dot(&ud);
        Lindbladian {
            hamiltonian: hermitize(&conj(&self.hamiltonian)),
            dissipators: self.dissipators.iter().map(conj).collect(),
            superop: OnceLock::new(),
            norm: OnceLock::new(),
        }
    }

    /// Compressions Q† H Q and Q† L_i Q onto the span of the columns of `q`.
    pub fn compressed(&self, q: &Operator) -> (Operator, Vec<Operator>) {
        let qd = dagger(q);
        let h = hermitize(&qd.dot(&self.hamiltonian).dot(q));
        let ls = self.dissipators.iter().map(|l| qd.dot(l).dot(q)).collect();
        (h, ls)
    }

    /// max |vec(I)†·S|, zero for an exactly trace-preserving generator.
    pub fn trace_preservation_error(&self) -> f64 {
        let d = self.dim();
        let s = self.superoperator();
        let mut worst: f64 = 0.0;
        for col in 0..d * d {
            let z: C64 = (0..d).map(|i| s[[i + i * d, col]]).sum();
            worst = worst.max(z.norm());
        }
        worst
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        crate::numerics::apply_superop(self.superoperator(), rho)
    }
}

pub fn build_superoperator(h: &Operator, dissipators: &[Operator]) -> Operator {
    let d = h.nrows();
    let id = identity(d);
    let mut s = commutator_superop(h);
    for l in dissipators {
        let ldl = dagger(l).dot(l);
        s = s + kron(&l.mapv(|z| z.conj()), l)
            - kron(&id, &ldl).mapv(|z| z * 0.5)
            - kron(&ldl.t().to_owned(), &id).mapv(|z| z * 0.5);
    }
    s
}

/// Result of a constant-generator propagation.
#[derive(Clone, Debug)]
pub struct Evolved {
    pub state: Operator,
    /// max |ρ − ρ†| before re-hermitization.
    pub hermiticity_drift: f64,
}

/// ρ(t) = unvec(exp(t·S)·vec(ρ₀)), re-hermitized.
pub fn propagate_const(l: &Lindbladian, rho0: &Operator, t: f64) -> Result<Evolved> {
    if !(t >= 0.0) || !t.is_finite() {
        return Err(Error::InvalidArgument(format!("propagation time {t} must be ≥ 0")));
    }
    if rho0.dim() != (l.dim(), l.dim()) {
        return Err(Error::Dimension("initial state does not match generator".into()));
    }
    let prop = matexp(&l.superoperator().mapv(|z| z * t))?;
    let raw = unvectorize(&prop.dot(&vectorize(rho0)), l.dim());
    Ok(Evolved {
        hermiticity_drift: hermiticity_error(&raw),
        state: hermitize(&raw),
    })
}

/// A path of frame unitaries U(s), s ∈ [0, 1], with U(0) = I.
#[derive(Clone, Debug)]
pub enum FramePath {
    /// U(s) = exp(−i s G).
    ConstantGenerator { g: Operator },
    /// Segments (Δs_k, G_k) applied in order; the Δs_k sum to 1.
    PiecewiseGenerators { segments: Vec<(f64, Operator)> },
    /// U(s) = exp(−i s² G): a frame rotation whose rate starts at zero.
    Ramp { g: Operator },
}

fn check_s(s: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&s) {
        return Err(Error::InvalidArgument(format!("s = {s} outside [0, 1]")));
    }
    Ok(())
}

fn exp_minus_i(g: &Operator, theta: f64) -> Result<Operator> {
    matexp(&g.mapv(|z| -I * theta * z))
}

impl FramePath {
    pub fn constant(g: Operator) -> Result<Self> {
        check_hermitian(&g, "frame generator")?;
        Ok(FramePath::ConstantGenerator { g })
    }

    pub fn identity(d: usize) -> Self {
        FramePath::ConstantGenerator { g: zeros(d) }
    }

    pub fn piecewise(segments: Vec<(f64, Operator)>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::InvalidArgument("piecewise frame without segments".into()));
        }
        let d = segments[0].1.nrows();
        let mut total = 0.0;
        for (ds, g) in &segments {
            if !(*ds > 0.0) {
                return Err(Error::InvalidArgument(format!("segment length {ds} must be > 0")));
            }
            if g.nrows() != d {
                return Err(Error::Dimension("segment generators differ in dimension".into()));
            }
            check_hermitian(g, "segment generator")?;
            total += ds;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!("segment lengths sum to {total}, not 1")));
        }
        Ok(FramePath::PiecewiseGenerators { segments })
    }

    pub fn ramp(g: Operator) -> Result<Self> {
        check_hermitian(&g, "frame generator")?;
        Ok(FramePath::Ramp { g })
    }

    pub fn dim(&self) -> usize {
        match self {
            FramePath::ConstantGenerator { g } | FramePath::Ramp { g } => g.nrows(),
            FramePath::PiecewiseGenerators { segments } => segments[0].1.nrows(),
        }
    }

    /// Segment index and its start for a piecewise path; the last segment
    /// is closed at s = 1.
    fn segment_of(segments: &[(f64, Operator)], s: f64) -> (usize, f64) {
        let mut start = 0.0;
        for (k, (ds, _)) in segments.iter().enumerate() {
            if s < start + ds || k + 1 == segments.len() {
                return (k, start);
            }
            start += ds;
        }
        unreachable!("segments are non-empty")
    }

    pub fn unitary(&self, s: f64) -> Result<Operator> {
        check_s(s)?;
        match self {
            FramePath::ConstantGenerator { g } => exp_minus_i(g, s),
            FramePath::Ramp { g } => exp_minus_i(g, s * s),
            FramePath::PiecewiseGenerators { segments } => {
                let (k, start) = Self::segment_of(segments, s);
                let mut u = identity(self.dim());
                for (ds, g) in &segments[..k] {
                    u = exp_minus_i(g, *ds)?.dot(&u);
                }
                Ok(exp_minus_i(&segments[k].1, s - start)?.dot(&u))
            }
        }
    }

    /// V(s) = i U′(s) U(s)†.
    pub fn generator(&self, s: f64) -> Result<Operator> {
        check_s(s)?;
        Ok(match self {
            FramePath::ConstantGenerator { g } => g.clone(),
            FramePath::Ramp { g } => g.mapv(|z| z * (2.0 * s)),
            FramePath::PiecewiseGenerators { segments } => {
                segments[Self::segment_of(segments, s).0].1.clone()
            }
        })
    }

    /// Identifier that stays fixed while V(s) is constant.
    fn generator_key(&self, s: f64) -> Option<usize> {
        match self {
            FramePath::ConstantGenerator { .. } => Some(0),
            FramePath::PiecewiseGenerators { segments } => Some(Self::segment_of(segments, s).0),
            FramePath::Ramp { .. } => None,
        }
    }
}

/// V(s) for a frame path.
pub fn frame_generator(path: &FramePath, s: f64) -> Result<Operator> {
    path.generator(s)
}

/// A differentiable family of generators on s ∈ [0, 1].
#[derive(Clone, Debug)]
pub enum LindbladCurve {
    /// Constant rotated-frame generator L̃ = `base` seen from the frame U(s);
    /// the lab generator is L(s) = U(s)†·base·U(s).
    RotatedFrame { base: Lindbladian, frame: FramePath },
    /// Lab-frame samples with piecewise-linear interpolation of H and each
    /// L_i; V ≡ 0.
    Sampled { samples: Vec<(f64, Lindbladian)> },
}

impl LindbladCurve {
    pub fn rotated(base: Lindbladian, frame: FramePath) -> Result<Self> {
        if base.dim() != frame.dim() {
            return Err(Error::Dimension("frame and generator dimensions differ".into()));
        }
        Ok(LindbladCurve::RotatedFrame { base, frame })
    }

    pub fn constant(base: Lindbladian) -> Self {
        let d = base.dim();
        LindbladCurve::RotatedFrame {
            base,
            frame: FramePath::identity(d),
        }
    }

    pub fn sampled(mut samples: Vec<(f64, Lindbladian)>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::InvalidArgument("a sampled curve needs two samples".into()));
        }
        samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        if samples[0].0 != 0.0 || samples[samples.len() - 1].0 != 1.0 {
            return Err(Error::InvalidArgument("samples must span s = 0 to s = 1".into()));
        }
        let (d, nl) = (samples[0].1.dim(), samples[0].1.dissipators().len());
        for w in samples.windows(2) {
            if w[0].0 == w[1].0 {
                return Err(Error::InvalidArgument("repeated sample point".into()));
            }
        }
        if samples
            .iter()
            .any(|(_, l)| l.dim() != d || l.dissipators().len() != nl)
        {
            return Err(Error::Dimension("samples differ in dimension or dissipator count".into()));
        }
        Ok(LindbladCurve::Sampled { samples })
    }

    pub fn dim(&self) -> usize {
        match self {
            LindbladCurve::RotatedFrame { base, .. } => base.dim(),
            LindbladCurve::Sampled { samples } => samples[0].1.dim(),
        }
    }

    fn interpolate(samples: &[(f64, Lindbladian)], s: f64) -> Result<Lindbladian> {
        let k = samples
            .windows(2)
            .position(|w| s <= w[1].0)
            .unwrap_or(samples.len() - 2);
        let (s0, l0) = &samples[k];
        let (s1, l1) = &samples[k + 1];
        let w = (s - s0) / (s1 - s0);
        let mix = |a: &Operator, b: &Operator| a.mapv(|z| z * (1.0 - w)) + b.mapv(|z| z * w);
        Lindbladian::new(
            mix(l0.hamiltonian(), l1.hamiltonian()),
            l0.dissipators()
                .iter()
                .zip(l1.dissipators())
                .map(|(a, b)| mix(a, b))
                .collect(),
        )
    }

    /// Generator L̃(s) in the frame.
    pub fn rotated_generator(&self, s: f64) -> Result<Lindbladian> {
        check_s(s)?;
        match self {
            LindbladCurve::RotatedFrame { base, .. } => Ok(base.clone()),
            LindbladCurve::Sampled { samples } => Self::interpolate(samples, s),
        }
    }

    /// Generator L(s) in the lab.
    pub fn lab_generator(&self, s: f64) -> Result<Lindbladian> {
        check_s(s)?;
        match self {
            LindbladCurve::RotatedFrame { base, frame } => {
                Ok(base.conjugated(&dagger(&frame.unitary(s)?)))
            }
            LindbladCurve::Sampled { samples } => Self::interpolate(samples, s),
        }
    }

    /// V(s); zero for sampled curves.
    pub fn frame_generator(&self, s: f64) -> Result<Operator> {
        check_s(s)?;
        match self {
            LindbladCurve::RotatedFrame { frame, .. } => frame.generator(s),
            LindbladCurve::Sampled { samples } => Ok(zeros(samples[0].1.dim())),
        }
    }

    pub fn frame_unitary(&self, s: f64) -> Result<Operator> {
        check_s(s)?;
        match self {
            LindbladCurve::RotatedFrame { frame, .. } => frame.unitary(s),
            LindbladCurve::Sampled { samples } => Ok(identity(samples[0].1.dim())),
        }
    }

    /// Maps a frame state at s to the lab: ρ = U(s)† ρ̃ U(s).
    pub fn to_lab(&self, s: f64, rho: &Operator) -> Result<Operator> {
        let u = self.frame_unitary(s)?;
        Ok(dagger(&u).dot(rho).dot(&u))
    }

    /// Maps a lab operator at s into the frame: ρ̃ = U(s) ρ U(s)†.
    pub fn to_frame(&self, s: f64, rho: &Operator) -> Result<Operator> {
        let u = self.frame_unitary(s)?;
        Ok(u.dot(rho).dot(&dagger(&u)))
    }

    fn generator_key(&self, s: f64) -> Option<usize> {
        match self {
            LindbladCurve::RotatedFrame { frame, .. } => frame.generator_key(s),
            LindbladCurve::Sampled { .. } => None,
        }
    }

    /// Full frame generator S̃(s) − i[V(s)/T, ·] as a superoperator.
    fn step_generator(&self, s: f64, total_time: f64) -> Result<Operator> {
        let lt = self.rotated_generator(s)?;
        let v = self.frame_generator(s)?.mapv(|z| z / total_time);
        Ok(lt.superoperator() + &commutator_superop(&v))
    }

    /// max over an s grid of ‖S̃(s)‖ + 2‖V(s)‖/T.
    fn generator_scale(&self, total_time: f64) -> Result<f64> {
        let grid: Vec<f64> = match self {
            LindbladCurve::RotatedFrame {
                frame: FramePath::ConstantGenerator { .. },
                ..
            } => vec![0.0],
            _ => (0..=10).map(|k| k as f64 / 10.0).collect(),
        };
        let mut worst: f64 = 0.0;
        for s in grid {
            let lt = self.rotated_generator(s)?;
            let v = op_norm(&self.frame_generator(s)?);
            worst = worst.max(lt.norm() + 2.0 * v / total_time);
        }
        Ok(worst)
    }
}

/// Options for [`propagate_curve`].
#[derive(Clone, Debug)]
pub struct PropagateOptions {
    /// Number of substeps; `None` picks max(1000, ⌈20·T·‖S̃‖⌉).
    pub steps: Option<usize>,
    /// Record every `stride`-th step (the final state is always recorded).
    pub stride: usize,
}

impl Default for PropagateOptions {
    fn default() -> Self {
        PropagateOptions {
            steps: None,
            stride: usize::MAX,
        }
    }
}

/// Recorded states of a propagation.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Operator>,
    pub steps: usize,
    /// Largest |Tr ρ − 1| over recorded states.
    pub max_trace_error: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &Operator {
        self.states.last().expect("trajectory has at least the initial state")
    }

    /// CSV with columns t, re_i_j, im_i_j (row-major entries).
    pub fn to_csv(&self) -> String {
        let d = self.states.first().map(|s| s.nrows()).unwrap_or(0);
        let mut out = String::from("t");
        for i in 0..d {
            for j in 0..d {
                let _ = write!(out, ",re_{i}_{j},im_{i}_{j}");
            }
        }
        out.push('\n');
        for (t, rho) in self.times.iter().zip(&self.states) {
            let _ = write!(out, "{t:.16e}");
            for z in rho.iter() {
                let _ = write!(out, ",{:.16e},{:.16e}", z.re, z.im);
            }
            out.push('\n');
        }
        out
    }
}

/// Default step count max(1000, ⌈20·T·‖S̃‖⌉) for a curve.
pub fn default_steps(curve: &LindbladCurve, total_time: f64) -> Result<usize> {
    let scale = curve.generator_scale(total_time)?;
    Ok(1000usize.max((20.0 * total_time * scale).ceil() as usize))
}

/// Integrates dρ̃/dt = −(i/T)[V(t/T), ρ̃] + L̃(t/T)ρ̃ over t ∈ [0, T] with
/// piecewise-constant generators sampled at substep midpoints.
pub fn propagate_curve(
    curve: &LindbladCurve,
    rho0: &Operator,
    total_time: f64,
    opts: &PropagateOptions,
) -> Result<Trajectory> {
    let mut out = propagate_curve_many(curve, std::slice::from_ref(rho0), total_time, opts)?;
    Ok(out.pop().expect("one trajectory per input"))
}

/// [`propagate_curve`] for several initial states sharing the step propagators.
pub fn propagate_curve_many(
    curve: &LindbladCurve,
    rho0s: &[Operator],
    total_time: f64,
    opts: &PropagateOptions,
) -> Result<Vec<Trajectory>> {
    if !(total_time > 0.0) || !total_time.is_finite() {
        return Err(Error::InvalidArgument(format!("total time {total_time} must be > 0")));
    }
    let d = curve.dim();
    for rho in rho0s {
        if rho.dim() != (d, d) {
            return Err(Error::Dimension("initial state does not match curve".into()));
        }
        check_density(rho)?;
    }
    let scale = curve.generator_scale(total_time)?;
    let steps = match opts.steps {
        Some(n) => n,
        None => 1000usize.max((20.0 * total_time * scale).ceil() as usize),
    };
    let required = 100usize.max((2.0 * scale * total_time).ceil() as usize);
    let ratio = scale * total_time / steps as f64;
    if steps < 100 || ratio > 0.5 {
        return Err(Error::StepsTooFew { ratio, required });
    }
    let stride = opts.stride.max(1);
    let dt = total_time / steps as f64;

    let mut vecs = vectorize_columns(rho0s);
    let n_states = rho0s.len();
    let record = |vecs: &Operator, t: f64, trajs: &mut Vec<Trajectory>| {
        for (k, traj) in trajs.iter_mut().enumerate() {
            let rho = hermitize(&unvectorize(&vecs.column(k).to_owned(), d));
            traj.max_trace_error = traj.max_trace_error.max((trace(&rho).re - 1.0).abs());
            traj.times.push(t);
            traj.states.push(rho);
        }
    };
    let mut trajs: Vec<Trajectory> = (0..n_states)
        .map(|_| Trajectory {
            times: vec![],
            states: vec![],
            steps,
            max_trace_error: 0.0,
        })
        .collect();
    record(&vecs, 0.0, &mut trajs);

    let mut cached: Option<(usize, Operator)> = None;
    for k in 0..steps {
        let s_mid = ((k as f64 + 0.5) / steps as f64).min(1.0);
        let key = curve.generator_key(s_mid);
        let prop = match (key, &cached) {
            (Some(key), Some((ck, p))) if *ck == key => p.clone(),
            _ => {
                let p = matexp(&curve.step_generator(s_mid, total_time)?.mapv(|z| z * dt))?;
                if let Some(key) = key {
                    cached = Some((key, p.clone()));
                }
                p
            }
        };
        vecs = prop.dot(&vecs);
        let done = k + 1;
        if done == steps || done % stride == 0 {
            let t = if done == steps { total_time } else { done as f64 * dt };
            record(&vecs, t, &mut trajs);
        }
    }
    Ok(trajs)
}

/// Frame-to-frame channel of the full propagation as a d²×d² superoperator.
pub fn curve_channel(
    curve: &LindbladCurve,
    total_time: f64,
    steps: Option<usize>,
) -> Result<Operator> {
    let d = curve.dim();
    let steps = match steps {
        Some(n) => n,
        None => default_steps(curve, total_time)?,
    };
    let dt = total_time / steps as f64;
    let mut chan: Operator = identity(d * d);
    let mut k = 0;
    while k < steps {
        let s_mid = (k as f64 + 0.5) / steps as f64;
        let key = curve.generator_key(s_mid);
        // Group consecutive substeps sharing one generator into a single exponential.
        let mut run = 1;
        if key.is_some() {
            while k + run < steps
                && curve.generator_key((k + run) as f64 / steps as f64 + 0.5 / steps as f64) == key
            {
                run += 1;
            }
        }
        let gen = curve.step_generator(s_mid, total_time)?;
        chan = matexp(&gen.mapv(|z| z * (dt * run as f64)))?.dot(&chan);
        k += run;
    }
    Ok(chan)
}

/// Superoperator of L̃ built by conjugating with C_U = conj(U)⊗U.
pub fn conjugated_superoperator(s: &Operator, u: &Operator) -> Operator {
    let cu = conjugation_superop(u);
    cu.dot(s).dot(&dagger(&cu))
}

/// Unit matrix of the vectorized identity, handy for trace checks.
pub fn vec_identity(d: usize) -> ndarray::Array1<C64> {
    vectorize(&Array2::eye(d))
}


#[cfg(test)]
mod proptests {
    use super::*;
    use crate::numerics::{choi_matrix, eigh, max_abs, trace_distance, Spectrum};
    use crate::random::{random_density, random_hermitian, random_matrix, random_unitary, rng, Rng};
    use proptest::prelude::*;

    fn random_lindbladian(r: &mut Rng, d: usize, n_ops: usize) -> Lindbladian {
        let h = random_hermitian(r, d);
        let ls = (0..n_ops)
            .map(|_| random_matrix(r, d).mapv(|z| z * 0.5))
            .collect();
        Lindbladian::new(h, ls).unwrap()
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(500))]

        #[test]
        fn generator_is_trace_preserving_and_stable(seed in any::<u64>(), d in 1usize..5, n in 0usize..3) {
            let mut r = rng(seed);
            let l = random_lindbladian(&mut r, d, n);
            prop_assert!(l.trace_preservation_error() <= 1e-10 * l.norm().max(1.0));
            let sp = Spectrum::of(l.superoperator(), false).unwrap();
            for z in sp.eigenvalues {
                prop_assert!(z.re <= 1e-8 * l.norm().max(1.0));
            }
        }

        #[test]
        fn semigroup_is_cptp(seed in any::<u64>(), d in 1usize..4, n in 0usize..3) {
            let mut r = rng(seed);
            let l = random_lindbladian(&mut r, d, n);
            let norm = l.norm().max(1e-12);
            for t in [0.1, 1.0, 10.0] {
                let prop = matexp(&l.superoperator().mapv(|z| z * (t / norm))).unwrap();
                let (vals, _) = eigh(&choi_matrix(&prop, d)).unwrap();
                prop_assert!(vals[0] >= -1e-7);
            }
        }

        #[test]
        fn evolution_preserves_trace_and_contracts(seed in any::<u64>(), d in 2usize..4) {
            let mut r = rng(seed);
            let l = random_lindbladian(&mut r, d, 2);
            let a = random_density(&mut r, d);
            let b = random_density(&mut r, d);
            let before = trace_distance(&a, &b).unwrap();
            for t in [0.3, 2.0] {
                let ra = propagate_const(&l, &a, t).unwrap().state;
                let rb = propagate_const(&l, &b, t).unwrap().state;
                prop_assert!((trace(&ra).re - 1.0).abs() <= 1e-8);
                prop_assert!(trace_distance(&ra, &rb).unwrap() <= before + 1e-8);
            }
        }

        #[test]
        fn rotated_frame_conjugation_identity(seed in any::<u64>(), d in 2usize..4, s in 0.0f64..1.0) {
            let mut r = rng(seed);
            let base = random_lindbladian(&mut r, d, 2);
            let g = random_hermitian(&mut r, d);
            let curve = LindbladCurve::rotated(base.clone(), FramePath::constant(g).unwrap()).unwrap();
            let u = curve.frame_unitary(s).unwrap();
            let lab = curve.lab_generator(s).unwrap();
            // L̃ = U·L·U† on operators and on the superoperator.
            let back = lab.conjugated(&u);
            prop_assert!(max_abs(&(back.hamiltonian() - base.hamiltonian())) <= 1e-10);
            for (x, y) in back.dissipators().iter().zip(base.dissipators()) {
                prop_assert!(max_abs(&(x - y)) <= 1e-10);
            }
            let via_cu = conjugated_superoperator(lab.superoperator(), &u);
            prop_assert!(max_abs(&(via_cu - base.superoperator())) <= 1e-9);
            let w = random_unitary(&mut r, d);
            let conj = base.conjugated(&w);
            let direct = conjugated_superoperator(base.superoperator(), &w);
            prop_assert!(max_abs(&(conj.superoperator() - direct)) <= 1e-9);
        }
    }
}

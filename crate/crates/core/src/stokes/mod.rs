//! Two-mode Fock-space numerics for polarization states.
//!
//! The horizontal (`a_x`) and vertical (`a_y`) polarization modes are each
//! truncated at `n_max` photons. Basis vectors `|n_x, n_y⟩` are stored at
//! index `n_x · (n_max + 1) + n_y`, so `a_x = a ⊗ 1` and `a_y = 1 ⊗ a`.
//!
//! This module only handles small photon numbers. It checks the operator
//! identities and the shot-noise variance of coherent states that the
//! Gaussian model in [`crate::channel`] relies on at scale.

mod matrix;

pub use matrix::CMatrix;

use crate::rng::RngStream;
use num_complex::Complex64;
use serde::Serialize;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StokesError {
    #[error("n_max must be at least 1, got {0}")]
    InvalidCutoff(usize),
    #[error(
        "cutoff n_max={n_max} too small for |alpha_{mode}|^2 = {alpha_sq:.4} \
         (needs |alpha|^2 <= n_max/4); truncated tail mass {tail_mass:.3e}"
    )]
    TruncationInadequate {
        mode: char,
        alpha_sq: f64,
        n_max: usize,
        tail_mass: f64,
    },
    #[error("state dimensions differ: cutoff {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("commutator and uncertainty checks need two distinct axes, got {0} twice")]
    SameAxis(StokesAxis),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FockCutoff {
    n_max: usize,
}

impl FockCutoff {
    pub fn new(n_max: usize) -> Result<Self, StokesError> {
        if n_max < 1 {
            return Err(StokesError::InvalidCutoff(n_max));
        }
        Ok(Self { n_max })
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn mode_dim(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.mode_dim() * self.mode_dim()
    }

    pub fn index(&self, nx: usize, ny: usize) -> usize {
        nx * self.mode_dim() + ny
    }

    /// Basis indices with total photon number `≤ n_max − 2`, where products
    /// of two bilinear operators are unaffected by the cutoff.
    pub fn protected_indices(&self) -> Vec<usize> {
        let limit = self.n_max.saturating_sub(2);
        if self.n_max < 2 {
            return Vec::new();
        }
        let mut out = Vec::new();
        for nx in 0..=limit {
            for ny in 0..=(limit - nx) {
                out.push(self.index(nx, ny));
            }
        }
        out.sort_unstable();
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum StokesAxis {
    S1,
    S2,
    S3,
}

impl StokesAxis {
    pub const ALL: [StokesAxis; 3] = [StokesAxis::S1, StokesAxis::S2, StokesAxis::S3];

    fn number(self) -> usize {
        match self {
            StokesAxis::S1 => 1,
            StokesAxis::S2 => 2,
            StokesAxis::S3 => 3,
        }
    }

    fn from_number(n: usize) -> Self {
        match n {
            1 => StokesAxis::S1,
            2 => StokesAxis::S2,
            3 => StokesAxis::S3,
            _ => unreachable!("axis number out of range"),
        }
    }
}

impl fmt::Display for StokesAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S{}", self.number())
    }
}

/// For `k ≠ l`, the remaining axis `m` and the sign of `ε_klm`.
pub fn levi_civita(k: StokesAxis, l: StokesAxis) -> Result<(StokesAxis, f64), StokesError> {
    if k == l {
        return Err(StokesError::SameAxis(k));
    }
    let (kn, ln) = (k.number(), l.number());
    let m = 6 - kn - ln;
    let sign = if (kn % 3) + 1 == ln { 1.0 } else { -1.0 };
    Ok((StokesAxis::from_number(m), sign))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorLabel {
    Ax,
    Ay,
    AxDag,
    AyDag,
    Number,
    S0,
    S1,
    S2,
    S3,
}

#[derive(Debug, Clone)]
pub struct ModeOperator {
    pub label: OperatorLabel,
    pub matrix: CMatrix,
}

impl ModeOperator {
    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_defect() <= tol
    }

    pub fn hermiticity_defect(&self) -> f64 {
        self.matrix.max_abs_diff(&self.matrix.adjoint())
    }
}

/// Single-mode annihilation operator on `n_max + 1` levels.
fn single_mode_annihilation(n_max: usize) -> CMatrix {
    let mut a = CMatrix::zeros(n_max + 1);
    for n in 1..=n_max {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Ladder operators of both modes.
pub struct Ladder {
    pub ax: ModeOperator,
    pub ay: ModeOperator,
    pub ax_dag: ModeOperator,
    pub ay_dag: ModeOperator,
}

pub fn ladder_operators(cutoff: FockCutoff) -> Ladder {
    let a = single_mode_annihilation(cutoff.n_max);
    let id = CMatrix::identity(cutoff.mode_dim());
    let ax = a.kron(&id);
    let ay = id.kron(&a);
    Ladder {
        ax_dag: ModeOperator {
            label: OperatorLabel::AxDag,
            matrix: ax.adjoint(),
        },
        ay_dag: ModeOperator {
            label: OperatorLabel::AyDag,
            matrix: ay.adjoint(),
        },
        ax: ModeOperator {
            label: OperatorLabel::Ax,
            matrix: ax,
        },
        ay: ModeOperator {
            label: OperatorLabel::Ay,
            matrix: ay,
        },
    }
}

/// Total photon number `a_x†a_x + a_y†a_y`.
pub fn number_operator(cutoff: FockCutoff) -> ModeOperator {
    let mut s = stokes_operators(cutoff);
    ModeOperator {
        label: OperatorLabel::Number,
        matrix: std::mem::replace(&mut s.s0.matrix, CMatrix::zeros(0)),
    }
}

#[derive(Debug, Clone)]
pub struct StokesOperators {
    pub s0: ModeOperator,
    pub s1: ModeOperator,
    pub s2: ModeOperator,
    pub s3: ModeOperator,
}

impl StokesOperators {
    pub fn axis(&self, axis: StokesAxis) -> &ModeOperator {
        match axis {
            StokesAxis::S1 => &self.s1,
            StokesAxis::S2 => &self.s2,
            StokesAxis::S3 => &self.s3,
        }
    }

    pub fn all(&self) -> [&ModeOperator; 4] {
        [&self.s0, &self.s1, &self.s2, &self.s3]
    }
}

/// Builds `S0..S3` from the truncated ladder operators:
///
/// ```text
/// S0 = ax†ax + ay†ay      S1 = ax†ax − ay†ay
/// S2 = ax†ay + ay†ax      S3 = i(ay†ax − ax†ay)
/// ```
pub fn stokes_operators(cutoff: FockCutoff) -> StokesOperators {
    let l = ladder_operators(cutoff);
    let nx = &l.ax_dag.matrix * &l.ax.matrix;
    let ny = &l.ay_dag.matrix * &l.ay.matrix;
    let xy = &l.ax_dag.matrix * &l.ay.matrix;
    let yx = &l.ay_dag.matrix * &l.ax.matrix;
    let i = Complex64::new(0.0, 1.0);
    StokesOperators {
        s0: ModeOperator {
            label: OperatorLabel::S0,
            matrix: &nx + &ny,
        },
        s1: ModeOperator {
            label: OperatorLabel::S1,
            matrix: &nx - &ny,
        },
        s2: ModeOperator {
            label: OperatorLabel::S2,
            matrix: &xy + &yx,
        },
        s3: ModeOperator {
            label: OperatorLabel::S3,
            matrix: (&yx - &xy).scale(i),
        },
    }
}

/// Amplitudes over the two-mode truncated basis. The vector is never
/// renormalized; [`TruncatedState::norm_deficit`] reports what the cutoff
/// dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct TruncatedState {
    amplitudes: Vec<Complex64>,
    cutoff: FockCutoff,
    norm_deficit: f64,
}

impl TruncatedState {
    /// The Fock state `|nx, ny⟩`.
    pub fn fock(nx: usize, ny: usize, cutoff: FockCutoff) -> Self {
        let mut amplitudes = vec![Complex64::new(0.0, 0.0); cutoff.dim()];
        amplitudes[cutoff.index(nx.min(cutoff.n_max), ny.min(cutoff.n_max))] =
            Complex64::new(1.0, 0.0);
        Self {
            amplitudes,
            cutoff,
            norm_deficit: 0.0,
        }
    }

    pub fn vacuum(cutoff: FockCutoff) -> Self {
        Self::fock(0, 0, cutoff)
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, nx: usize, ny: usize) -> Complex64 {
        self.amplitudes[self.cutoff.index(nx, ny)]
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    /// `1 − ‖ψ‖²` for the exact state this vector truncates.
    pub fn norm_deficit(&self) -> f64 {
        self.norm_deficit
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|z| z.norm_sqr()).sum()
    }

    /// `⟨ψ|A|ψ⟩ / ⟨ψ|ψ⟩`.
    pub fn expectation(&self, op: &ModeOperator) -> Complex64 {
        let applied = op.matrix.apply(&self.amplitudes);
        let raw: Complex64 = self
            .amplitudes
            .iter()
            .zip(&applied)
            .map(|(a, b)| a.conj() * b)
            .sum();
        raw / self.norm_sqr()
    }

    /// `⟨A²⟩ − ⟨A⟩²` for a Hermitian operator.
    pub fn variance(&self, op: &ModeOperator) -> f64 {
        let applied = op.matrix.apply(&self.amplitudes);
        let second: f64 = applied.iter().map(|z| z.norm_sqr()).sum::<f64>() / self.norm_sqr();
        let mean = self.expectation(op).re;
        second - mean * mean
    }
}

/// Poisson tail mass `Σ_{n > n_max} e^{−μ} μⁿ / n!`, summed directly.
fn poisson_tail(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    let mut term = (-mean).exp();
    for n in 1..=n_max {
        term *= mean / n as f64;
    }
    let mut tail = 0.0;
    let mut n = n_max + 1;
    loop {
        term *= mean / n as f64;
        tail += term;
        if (n as f64) > mean && term < tail * 1e-17 || term == 0.0 {
            break;
        }
        n += 1;
    }
    tail
}

fn single_mode_coefficients(alpha: Complex64, n_max: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    out.push(c);
    for n in 1..=n_max {
        c = c * alpha / (n as f64).sqrt();
        out.push(c);
    }
    out
}

/// The product coherent state `|α_x⟩ ⊗ |α_y⟩` truncated at the cutoff,
/// with coefficients `e^{−|α|²/2} αⁿ / √(n!)` in each mode.
pub fn coherent_state(
    alpha_x: Complex64,
    alpha_y: Complex64,
    cutoff: FockCutoff,
) -> Result<TruncatedState, StokesError> {
    let n_max = cutoff.n_max;
    let mut tails = [0.0; 2];
    for (i, (mode, alpha)) in [('x', alpha_x), ('y', alpha_y)].into_iter().enumerate() {
        let alpha_sq = alpha.norm_sqr();
        tails[i] = poisson_tail(alpha_sq, n_max);
        if alpha_sq > n_max as f64 / 4.0 {
            return Err(StokesError::TruncationInadequate {
                mode,
                alpha_sq,
                n_max,
                tail_mass: tails[i],
            });
        }
    }
    let cx = single_mode_coefficients(alpha_x, n_max);
    let cy = single_mode_coefficients(alpha_y, n_max);
    let mut amplitudes = Vec::with_capacity(cutoff.dim());
    for a in &cx {
        for b in &cy {
            amplitudes.push(a * b);
        }
    }
    Ok(TruncatedState {
        amplitudes,
        cutoff,
        norm_deficit: tails[0] + tails[1] - tails[0] * tails[1],
    })
}

/// `⟨a|b⟩`.
pub fn overlap(a: &TruncatedState, b: &TruncatedState) -> Result<Complex64, StokesError> {
    if a.cutoff != b.cutoff {
        return Err(StokesError::DimensionMismatch(
            a.cutoff.n_max,
            b.cutoff.n_max,
        ));
    }
    Ok(a.amplitudes
        .iter()
        .zip(&b.amplitudes)
        .map(|(x, y)| x.conj() * y)
        .sum())
}

/// Coherent state with independent uniform phases and amplitudes drawn
/// uniformly over the disc `|α|² ≤ n_max / 4` in each mode.
pub fn random_coherent_state(cutoff: FockCutoff, rng: &mut RngStream) -> TruncatedState {
    let radius = (cutoff.n_max as f64 / 4.0).sqrt();
    let mut draw = || {
        let r = radius * rng.uniform().sqrt();
        Complex64::from_polar(r, std::f64::consts::TAU * rng.uniform())
    };
    let (ax, ay) = (draw(), draw());
    coherent_state(ax, ay, cutoff).expect("amplitudes lie inside the adequacy disc")
}

/// Allowed shot-noise bridge deviation for a truncated state: boundary
/// matrix elements of `S_k²` grow like `n_max²`, so the truncated tail is
/// amplified accordingly.
pub fn bridge_allowance(state: &TruncatedState) -> f64 {
    let n = (state.cutoff.n_max + 1) as f64;
    1e-6 + 4.0 * n * n * state.norm_deficit()
}

/// Closed-form overlap `e^{−2|α|²}` between `|α⟩` and `|−α⟩`.
pub fn antipodal_overlap(alpha: f64) -> f64 {
    (-2.0 * alpha * alpha).exp()
}

/// Largest matrix-element deviation of `[S_k, S_l] − 2iε_klm S_m` over the
/// columns of the truncation-protected subspace.
pub fn commutator_check(
    k: StokesAxis,
    l: StokesAxis,
    cutoff: FockCutoff,
) -> Result<f64, StokesError> {
    let (m, sign) = levi_civita(k, l)?;
    let ops = stokes_operators(cutoff);
    Ok(commutator_deviation(
        &ops,
        k,
        l,
        m,
        sign,
        &cutoff.protected_indices(),
    ))
}

fn commutator_deviation(
    ops: &StokesOperators,
    k: StokesAxis,
    l: StokesAxis,
    m: StokesAxis,
    sign: f64,
    cols: &[usize],
) -> f64 {
    let lhs = ops.axis(k).matrix.commutator(&ops.axis(l).matrix);
    let rhs = ops.axis(m).matrix.scale(Complex64::new(0.0, 2.0 * sign));
    lhs.max_deviation_on_columns(&rhs, cols)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UncertaintyReport {
    /// `V_k · V_l`
    pub lhs: f64,
    /// `|ε_klm ⟨S_m⟩|²`
    pub rhs: f64,
}

impl UncertaintyReport {
    pub fn slack(&self) -> f64 {
        self.lhs - self.rhs
    }
}

pub fn uncertainty_check(
    state: &TruncatedState,
    k: StokesAxis,
    l: StokesAxis,
) -> Result<UncertaintyReport, StokesError> {
    let (m, sign) = levi_civita(k, l)?;
    let ops = stokes_operators(state.cutoff);
    Ok(uncertainty_with(&ops, state, k, l, m, sign))
}

fn uncertainty_with(
    ops: &StokesOperators,
    state: &TruncatedState,
    k: StokesAxis,
    l: StokesAxis,
    m: StokesAxis,
    sign: f64,
) -> UncertaintyReport {
    let vk = state.variance(ops.axis(k));
    let vl = state.variance(ops.axis(l));
    let sm = state.expectation(ops.axis(m)).re;
    UncertaintyReport {
        lhs: vk * vl,
        rhs: (sign * sm).powi(2),
    }
}

/// Reusable operator set for running many checks at one cutoff.
pub struct StokesAlgebra {
    cutoff: FockCutoff,
    ops: StokesOperators,
}

impl StokesAlgebra {
    pub fn new(cutoff: FockCutoff) -> Self {
        Self {
            cutoff,
            ops: stokes_operators(cutoff),
        }
    }

    pub fn cutoff(&self) -> FockCutoff {
        self.cutoff
    }

    pub fn operators(&self) -> &StokesOperators {
        &self.ops
    }

    pub fn commutator_deviation(&self, k: StokesAxis, l: StokesAxis) -> Result<f64, StokesError> {
        let (m, sign) = levi_civita(k, l)?;
        Ok(commutator_deviation(
            &self.ops,
            k,
            l,
            m,
            sign,
            &self.cutoff.protected_indices(),
        ))
    }

    pub fn uncertainty(
        &self,
        state: &TruncatedState,
        k: StokesAxis,
        l: StokesAxis,
    ) -> Result<UncertaintyReport, StokesError> {
        if state.cutoff != self.cutoff {
            return Err(StokesError::DimensionMismatch(
                state.cutoff.n_max,
                self.cutoff.n_max,
            ));
        }
        let (m, sign) = levi_civita(k, l)?;
        Ok(uncertainty_with(&self.ops, state, k, l, m, sign))
    }
}

//! Truncated Fock-space states, operators and channels.
//!
//! Single-mode objects live in span{|0⟩, …, |d−1⟩}. Joint objects carry a
//! list of subsystem dimensions and use the row-major (first subsystem most
//! significant) tensor-product ordering produced by `kronecker`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{self, c, cr, CMatrix, CVector};

/// Tolerances used when validating a density matrix.
pub const HERMITIAN_TOL: f64 = 1e-9;
pub const TRACE_TOL: f64 = 1e-8;
pub const PSD_TOL: f64 = 1e-10;

/// Default truncation for single-cavity work.
pub const DEFAULT_DIM: usize = 10;
/// Default per-subsystem truncation for joint (two-cavity) work.
pub const DEFAULT_JOINT_DIM: usize = 5;

/// Density operator on a (possibly composite) truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantumState {
    dims: Vec<usize>,
    matrix: CMatrix,
}

impl QuantumState {
    /// Validates and normalizes `matrix`. Eigenvalues in [−1e-10, 0) are
    /// clipped to zero and the trace renormalized; anything more negative is
    /// rejected.
    pub fn from_matrix(matrix: CMatrix, dims: Vec<usize>) -> Result<Self> {
        let dim = matrix.nrows();
        if matrix.ncols() != dim {
            return Err(Error::DimensionMismatch("density matrix must be square".into()));
        }
        if dims.is_empty() || dims.contains(&0) || dims.iter().product::<usize>() != dim {
            return Err(Error::DimensionMismatch(format!(
                "subsystem dims {dims:?} do not multiply to {dim}"
            )));
        }
        let defect = linalg::max_hermitian_defect(&matrix);
        if defect > HERMITIAN_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (defect {defect:.2e})")));
        }
        let tr = linalg::trace(&matrix);
        if (tr.re - 1.0).abs() > TRACE_TOL || tr.im.abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace {tr} differs from 1")));
        }
        let (values, vectors) = linalg::eigh(&matrix);
        let most_negative = values.first().copied().unwrap_or(0.0);
        if most_negative < -PSD_TOL {
            return Err(Error::InvalidState(format!(
                "negative eigenvalue {most_negative:.3e}"
            )));
        }
        let matrix = if most_negative < 0.0 {
            let n = values.len();
            let mut scaled = vectors.clone();
            for (j, &v) in values.iter().enumerate() {
                for i in 0..n {
                    scaled[(i, j)] *= v.max(0.0);
                }
            }
            &scaled * vectors.adjoint()
        } else {
            matrix
        };
        let tr = linalg::trace(&matrix).re;
        let matrix = linalg::hermitize(&matrix).unscale(tr);
        Ok(Self { dims, matrix })
    }

    pub fn single(matrix: CMatrix) -> Result<Self> {
        let d = matrix.nrows();
        Self::from_matrix(matrix, vec![d])
    }

    /// Pure state |ψ⟩⟨ψ| from an (automatically normalized) ket.
    pub fn pure(ket: &CVector, dims: Vec<usize>) -> Result<Self> {
        let norm = ket.norm();
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::InvalidState("zero or non-finite ket".into()));
        }
        let ket = ket.unscale(norm);
        Self::from_matrix(linalg::outer(&ket), dims)
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn expect(&self, op: &CMatrix) -> Complex64 {
        linalg::trace(&(&self.matrix * op))
    }

    /// Diagonal in the (joint) number basis.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn purity(&self) -> f64 {
        linalg::trace(&(&self.matrix * &self.matrix)).re
    }

    fn require_single(&self) -> Result<usize> {
        if self.dims.len() != 1 {
            return Err(Error::DimensionMismatch("operation needs a single-mode state".into()));
        }
        Ok(self.dim())
    }

    pub fn mean_photon_number(&self) -> f64 {
        if self.dims.len() == 1 {
            return self.populations().iter().enumerate().map(|(n, p)| n as f64 * p).sum();
        }
        (0..self.dims.len())
            .map(|k| {
                partial_trace(self, k)
                    .map(|s| s.mean_photon_number())
                    .unwrap_or(0.0)
            })
            .sum()
    }

    /// ⟨(−1)^n⟩ for a single mode.
    pub fn parity(&self) -> Result<f64> {
        self.require_single()?;
        Ok(self
            .populations()
            .iter()
            .enumerate()
            .map(|(n, p)| if n % 2 == 0 { *p } else { -*p })
            .sum())
    }

    pub fn tensor(&self, other: &QuantumState) -> QuantumState {
        let mut dims = self.dims.clone();
        dims.extend_from_slice(&other.dims);
        QuantumState { dims, matrix: linalg::kron(&self.matrix, &other.matrix) }
    }

    /// U ρ U†.
    pub fn evolve(&self, op: &FockOperator) -> Result<QuantumState> {
        if op.dims != self.dims {
            return Err(Error::DimensionMismatch(format!(
                "operator dims {:?} vs state dims {:?}",
                op.dims, self.dims
            )));
        }
        Ok(QuantumState {
            dims: self.dims.clone(),
            matrix: linalg::hermitize(&(&op.matrix * &self.matrix * op.matrix.adjoint())),
        })
    }

    /// Re-embeds a single-mode state in dimension `dim`. Growing pads with
    /// zeros; shrinking fails if more than `tol` probability would be lost.
    pub fn resized(&self, dim: usize, tol: f64) -> Result<QuantumState> {
        let d = self.require_single()?;
        if dim >= d {
            let mut m = CMatrix::zeros(dim, dim);
            m.view_mut((0, 0), (d, d)).copy_from(&self.matrix);
            return Ok(QuantumState { dims: vec![dim], matrix: m });
        }
        let dropped: f64 = self.populations()[dim..].iter().sum();
        if dropped > tol {
            return Err(Error::Truncation(format!(
                "cropping to {dim} levels discards {dropped:.3e} probability"
            )));
        }
        let m = self.matrix.view((0, 0), (dim, dim)).into_owned();
        let tr = linalg::trace(&m).re;
        Ok(QuantumState { dims: vec![dim], matrix: m.unscale(tr) })
    }

    /// Fidelity to another state, see [`fidelity`].
    pub fn fidelity(&self, other: &QuantumState) -> Result<f64> {
        fidelity(self, other)
    }
}

/// Linear operator on a truncated Fock space.
#[derive(Debug, Clone, PartialEq)]
pub struct FockOperator {
    dims: Vec<usize>,
    matrix: CMatrix,
}

impl FockOperator {
    pub fn new(matrix: CMatrix, dims: Vec<usize>) -> Result<Self> {
        if matrix.nrows() != matrix.ncols() || dims.iter().product::<usize>() != matrix.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "operator of size {}x{} with dims {dims:?}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { dims, matrix })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    /// ‖U†U − I‖ in the Frobenius norm.
    pub fn unitarity_defect(&self) -> f64 {
        let n = self.dim();
        linalg::frobenius(&(self.matrix.adjoint() * &self.matrix - CMatrix::identity(n, n)))
    }

    pub fn apply(&self, ket: &CVector) -> CVector {
        &self.matrix * ket
    }

    pub fn compose(&self, other: &FockOperator) -> Result<FockOperator> {
        if self.dims != other.dims {
            return Err(Error::DimensionMismatch("cannot compose operators on different spaces".into()));
        }
        Ok(FockOperator { dims: self.dims.clone(), matrix: &self.matrix * &other.matrix })
    }
}

pub fn annihilation(dim: usize) -> CMatrix {
    let mut a = CMatrix::zeros(dim, dim);
    for n in 1..dim {
        a[(n - 1, n)] = cr((n as f64).sqrt());
    }
    a
}

pub fn number(dim: usize) -> CMatrix {
    CMatrix::from_diagonal(&CVector::from_iterator(dim, (0..dim).map(|n| cr(n as f64))))
}

pub fn fock_ket(n: usize, dim: usize) -> Result<CVector> {
    if n >= dim {
        return Err(Error::OutOfRange { n, dim });
    }
    Ok(linalg::basis(dim, n))
}

/// |n⟩⟨n| in a space truncated at `dim` levels.
pub fn make_fock(n: usize, dim: usize) -> Result<QuantumState> {
    QuantumState::pure(&fock_ket(n, dim)?, vec![dim])
}

/// Coherent-state ket with amplitudes e^{−|α|²/2} αⁿ/√n!, renormalized on
/// the truncated space. Requires |α|² ≤ dim/4.
pub fn coherent_ket(alpha: Complex64, dim: usize) -> Result<CVector> {
    if alpha.norm_sqr() > dim as f64 / 4.0 {
        return Err(Error::Truncation(format!(
            "|alpha|^2 = {:.3} exceeds dim/4 = {:.3}",
            alpha.norm_sqr(),
            dim as f64 / 4.0
        )));
    }
    let mut ket = CVector::zeros(dim);
    let mut amp = cr((-alpha.norm_sqr() / 2.0).exp());
    for n in 0..dim {
        if n > 0 {
            amp = amp * alpha / (n as f64).sqrt();
        }
        ket[n] = amp;
    }
    let norm = ket.norm();
    Ok(ket.unscale(norm))
}

pub fn coherent_state(alpha: Complex64, dim: usize) -> Result<QuantumState> {
    QuantumState::pure(&coherent_ket(alpha, dim)?, vec![dim])
}

/// Two-mode beamsplitter U(θ) = exp[−(θ/2)(a₁†a₂ − a₁a₂†)].
///
/// Phase convention: U(θ)|1,0⟩ = cos(θ/2)|1,0⟩ + sin(θ/2)|0,1⟩, so θ = π/2
/// produces (|1,0⟩ + |0,1⟩)/√2 with a +1 relative phase and θ = π swaps the
/// ports. The loss channel and the entanglement target both use this sign.
pub fn beamsplitter_unitary(theta: f64, dims: (usize, usize)) -> Result<FockOperator> {
    let (d1, d2) = dims;
    if d1 != d2 {
        return Err(Error::DimensionMismatch(format!(
            "beamsplitter ports must share a truncation, got {d1} and {d2}"
        )));
    }
    let a = annihilation(d1);
    let id = CMatrix::identity(d1, d1);
    let a1 = linalg::kron(&a, &id);
    let a2 = linalg::kron(&id, &a);
    let generator = (a1.adjoint() * &a2 - &a1 * a2.adjoint()).scale(-theta / 2.0);
    FockOperator::new(generator.exp(), vec![d1, d2])
}

/// D(α) = exp(α a† − α* a) on the truncated space.
pub fn displacement(alpha: Complex64, dim: usize) -> FockOperator {
    let a = annihilation(dim);
    let generator = a.adjoint() * alpha - &a * alpha.conj();
    FockOperator { dims: vec![dim], matrix: generator.exp() }
}

pub fn parity_operator(dim: usize) -> FockOperator {
    let diag = CVector::from_iterator(dim, (0..dim).map(|n| cr(if n % 2 == 0 { 1.0 } else { -1.0 })));
    FockOperator { dims: vec![dim], matrix: CMatrix::from_diagonal(&diag) }
}

/// Kerr evolution exp(−i (χ/2) n(n−1) t) for H = (χ/2) a†²a².
pub fn kerr_unitary(chi: f64, t: f64, dim: usize) -> FockOperator {
    let diag = CVector::from_iterator(
        dim,
        (0..dim).map(|n| {
            let phase = -0.5 * chi * (n * n.saturating_sub(1)) as f64 * t;
            c(phase.cos(), phase.sin())
        }),
    );
    FockOperator { dims: vec![dim], matrix: CMatrix::from_diagonal(&diag) }
}

fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

/// Reduced state of subsystem `keep`.
pub fn partial_trace(state: &QuantumState, keep: usize) -> Result<QuantumState> {
    let dims = state.dims();
    if dims.len() < 2 {
        return Err(Error::InvalidArgument("partial trace needs at least two subsystems".into()));
    }
    if keep >= dims.len() {
        return Err(Error::InvalidArgument(format!(
            "subsystem index {keep} out of range for {} subsystems",
            dims.len()
        )));
    }
    let dk = dims[keep];
    let st = strides(dims);
    let total = state.dim();
    let rest = total / dk;
    // enumerate offsets of all the traced-out indices
    let mut offsets = Vec::with_capacity(rest);
    for idx in 0..total {
        if (idx / st[keep]).is_multiple_of(dk) {
            offsets.push(idx);
        }
    }
    let m = state.matrix();
    let mut out = CMatrix::zeros(dk, dk);
    for &off in &offsets {
        for i in 0..dk {
            for j in 0..dk {
                out[(i, j)] += m[(off + i * st[keep], off + j * st[keep])];
            }
        }
    }
    QuantumState::from_matrix(out, vec![dk])
}

/// Uhlmann fidelity F(ρ, σ) = (Tr √(√ρ σ √ρ))².
pub fn fidelity(rho: &QuantumState, sigma: &QuantumState) -> Result<f64> {
    if rho.dims != sigma.dims {
        return Err(Error::DimensionMismatch(format!(
            "fidelity between dims {:?} and {:?}",
            rho.dims, sigma.dims
        )));
    }
    Ok(linalg::uhlmann_fidelity(&rho.matrix, &sigma.matrix).min(1.0))
}

/// ⟨ψ|ρ|ψ⟩ for a pure target.
pub fn pure_fidelity(target: &CVector, rho: &CMatrix) -> f64 {
    (target.adjoint() * rho * target)[(0, 0)].re
}

fn compositions(total: usize, parts: usize, prefix: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
    if parts == 1 {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for k in 0..=total {
        prefix.push(k);
        compositions(total - k, parts - 1, prefix, out);
        prefix.pop();
    }
}

/// Passive linear channel that distributes one input mode over several
/// output modes: a† ↦ Σ_k u_k b_k† + v e† with an environment mode e in
/// vacuum (v = √(1 − Σ|u_k|²)), after which e is traced out.
///
/// With one output this is the pure-loss channel with efficiency |u|² and a
/// phase rotation; with two outputs it is a beamsplitter-with-loss that
/// produces the joint state of both outputs.
pub fn distribute_mode(
    state: &QuantumState,
    amplitudes: &[Complex64],
    out_dims: &[usize],
) -> Result<QuantumState> {
    let d_in = state.require_single()?;
    if amplitudes.is_empty() || amplitudes.len() != out_dims.len() {
        return Err(Error::DimensionMismatch("one output dimension per amplitude".into()));
    }
    let kept: f64 = amplitudes.iter().map(|u| u.norm_sqr()).sum();
    if kept > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "transfer amplitudes carry {kept} > 1 of the input energy"
        )));
    }
    let env = (1.0 - kept).max(0.0).sqrt();
    let st = strides(out_dims);
    let d_out: usize = out_dims.iter().product();
    let rho = state.matrix();
    let mut out = CMatrix::zeros(d_out, d_out);
    let mut dropped = 0.0;

    for m in 0..d_in {
        // Kraus operator for m quanta leaking to the environment
        let mut kraus = CMatrix::zeros(d_out, d_in);
        for n in m..d_in {
            let mut comps = Vec::new();
            compositions(n - m, amplitudes.len(), &mut Vec::new(), &mut comps);
            for ks in comps {
                let mut log_coef = linalg::ln_factorial(n) - linalg::ln_factorial(m);
                let mut amp = cr(env.powi(m as i32));
                let mut index = 0;
                let mut inside = true;
                for (k, &cnt) in ks.iter().enumerate() {
                    log_coef -= linalg::ln_factorial(cnt);
                    amp *= amplitudes[k].powu(cnt as u32);
                    if cnt >= out_dims[k] {
                        inside = false;
                    } else {
                        index += cnt * st[k];
                    }
                }
                let value = amp * (0.5 * log_coef).exp();
                if inside {
                    kraus[(index, n)] += value;
                } else {
                    dropped += value.norm_sqr() * rho[(n, n)].re;
                }
            }
        }
        out += &kraus * rho * kraus.adjoint();
    }
    if dropped > 1e-10 {
        return Err(Error::Truncation(format!(
            "output truncation {out_dims:?} discards {dropped:.3e} probability"
        )));
    }
    let tr = linalg::trace(&out).re;
    QuantumState::from_matrix(out.unscale(tr), out_dims.to_vec())
}

/// ⟨m|D(β)|n⟩ in closed form via associated Laguerre polynomials; exact
/// (no truncation of the displacement itself).
pub fn displacement_element(beta: Complex64, m: usize, n: usize) -> Complex64 {
    let x = beta.norm_sqr();
    let (lo, hi) = if m >= n { (n, m) } else { (m, n) };
    let k = hi - lo;
    let lag = laguerre(lo, k as f64, x);
    let pref = (0.5 * (linalg::ln_factorial(lo) - linalg::ln_factorial(hi)) - x / 2.0).exp();
    let base = if m >= n { beta } else { -beta.conj() };
    base.powu(k as u32) * pref * lag
}

/// Generalized Laguerre polynomial L_n^{(k)}(x) by upward recursion.
pub fn laguerre(n: usize, k: f64, x: f64) -> f64 {
    if n == 0 {
        return 1.0;
    }
    let mut prev = 1.0;
    let mut cur = 1.0 + k - x;
    for m in 1..n {
        let m = m as f64;
        let next = ((2.0 * m + 1.0 + k - x) * cur - (m + k) * prev) / (m + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Exact displacement matrix restricted to the first `dim` levels.
pub fn displacement_block(beta: Complex64, dim: usize) -> CMatrix {
    DMatrix::from_fn(dim, dim, |m, n| displacement_element(beta, m, n))
}

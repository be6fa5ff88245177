//! Synthetic Wigner and joint-parity data, constrained reconstruction,
//! entanglement metrics and logical process matrices.

use std::f64::consts::{FRAC_PI_4, PI};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, QuantumState};
use crate::linalg::{self, c, cr, CMatrix, CVector, I};
use crate::table::Table;

/// Largest displacement on the default Wigner grid.
pub const DEFAULT_ALPHA_MAX: f64 = 2.5;
pub const DEFAULT_GRID_POINTS: usize = 31;
/// Population allowed outside the two-qubit block of a joint state.
pub const LEAKAGE_TOL: f64 = 1e-3;

/// Wigner function W(α) = (2/π) Tr[ρ D(α) P D(α)†], evaluated through
/// D(α) P D(α)† = D(2α) P, whose truncated block is exact.
pub fn wigner_operator(alpha: Complex64, dim: usize) -> CMatrix {
    let mut m = fock::displacement_block(alpha * 2.0, dim);
    for n in (1..dim).step_by(2) {
        m.column_mut(n).neg_mut();
    }
    m * cr(2.0 / PI)
}

pub fn wigner_value(state: &QuantumState, alpha: Complex64) -> Result<f64> {
    if state.dims().len() != 1 {
        return Err(Error::DimensionMismatch("Wigner function of a single mode only".into()));
    }
    Ok(linalg::trace(&(state.matrix() * wigner_operator(alpha, state.dim()))).re)
}

/// Square grid of displacements, row-major with the imaginary part as the
/// outer index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WignerSample {
    pub axis: Vec<f64>,
    pub values: Vec<f64>,
    pub noise_sigma: f64,
}

impl WignerSample {
    pub fn alphas(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.axis.len() * self.axis.len());
        for &y in &self.axis {
            for &x in &self.axis {
                out.push(c(x, y));
            }
        }
        out
    }

    fn step(&self) -> f64 {
        if self.axis.len() > 1 {
            self.axis[1] - self.axis[0]
        } else {
            1.0
        }
    }

    /// Trapezoidal phase-space integral.
    pub fn integral(&self) -> f64 {
        let n = self.axis.len();
        let w = |k: usize| if k == 0 || k + 1 == n { 0.5 } else { 1.0 };
        let h = self.step();
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                s += w(i) * w(j) * self.values[j * n + i];
            }
        }
        s * h * h
    }

    /// Rescaled so the sampled grid integrates to one.
    pub fn normalized(&self) -> Result<Self> {
        let total = self.integral();
        if !(total.abs() > 1e-12) {
            return Err(Error::InsufficientData("Wigner grid integrates to zero".into()));
        }
        Ok(Self { values: self.values.iter().map(|v| v / total).collect(), ..self.clone() })
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["re_alpha", "im_alpha", "w"]).with_comment("w in units where the integral is 1");
        for (a, w) in self.alphas().iter().zip(&self.values) {
            t.rows.push(vec![a.re, a.im, *w]);
        }
        t
    }
}

pub fn grid_axis(alpha_max: f64, points: usize) -> Vec<f64> {
    crate::codes::linspace(-alpha_max, alpha_max, points)
}

/// Samples the Wigner function on a square grid, optionally with additive
/// Gaussian noise.
pub fn wigner<R: Rng + ?Sized>(
    state: &QuantumState,
    axis: &[f64],
    noise_sigma: f64,
    rng: Option<&mut R>,
) -> Result<WignerSample> {
    if axis.is_empty() {
        return Err(Error::InsufficientData("empty displacement grid".into()));
    }
    let mut sample = WignerSample { axis: axis.to_vec(), values: Vec::new(), noise_sigma };
    sample.values = sample.alphas().iter().map(|&a| wigner_value(state, a)).collect::<Result<_>>()?;
    if noise_sigma > 0.0 {
        let rng = rng.ok_or_else(|| Error::InvalidArgument("noise requested without a random source".into()))?;
        let dist = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for v in &mut sample.values {
            *v += dist.sample(rng);
        }
    }
    Ok(sample)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MleOptions {
    pub max_iterations: usize,
    /// Stop when the objective changes by less than this between
    /// iterations.
    pub tolerance: f64,
    /// Per-point weights for Wigner data; uniform when absent.
    pub weights: Option<Vec<f64>>,
    /// Dilution of the RρR step for joint data.
    pub dilution: f64,
}

impl Default for MleOptions {
    fn default() -> Self {
        Self { max_iterations: 5000, tolerance: 1e-10, weights: None, dilution: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Reconstruction {
    pub state: QuantumState,
    /// Gaussian log-likelihood (−½ weighted residual sum of squares) for
    /// Wigner data, multinomial log-likelihood for joint data.
    pub log_likelihood: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Orthonormal Hermitian basis: E_mm, (E_mn + E_nm)/√2, i(E_mn − E_nm)/√2.
fn hermitian_basis(d: usize) -> Vec<CMatrix> {
    let s = cr(std::f64::consts::FRAC_1_SQRT_2);
    let mut out = Vec::with_capacity(d * d);
    for m in 0..d {
        let mut e = CMatrix::zeros(d, d);
        e[(m, m)] = cr(1.0);
        out.push(e);
    }
    for m in 0..d {
        for n in m + 1..d {
            let mut e = CMatrix::zeros(d, d);
            e[(m, n)] = s;
            e[(n, m)] = s;
            out.push(e);
            let mut f = CMatrix::zeros(d, d);
            f[(m, n)] = I * s;
            f[(n, m)] = -I * s;
            out.push(f);
        }
    }
    out
}

fn to_coords(rho: &CMatrix, basis: &[CMatrix]) -> DVector<f64> {
    DVector::from_iterator(basis.len(), basis.iter().map(|b| linalg::trace(&(b * rho)).re))
}

fn from_coords(x: &DVector<f64>, basis: &[CMatrix], d: usize) -> CMatrix {
    let mut m = CMatrix::zeros(d, d);
    for (xi, b) in x.iter().zip(basis) {
        m += b * cr(*xi);
    }
    m
}

/// Constrained least squares on Wigner data: accelerated projected
/// gradient (FISTA with adaptive restart), projecting onto density
/// matrices at every step.
pub fn mle_reconstruct_wigner(sample: &WignerSample, dim: usize, opts: &MleOptions) -> Result<Reconstruction> {
    let alphas = sample.alphas();
    let n = alphas.len();
    if n == 0 || sample.values.len() != n {
        return Err(Error::InsufficientData("no Wigner data".into()));
    }
    if n < dim * dim {
        return Err(Error::InsufficientData(format!(
            "{n} Wigner points cannot determine a {dim}x{dim} density matrix (need ≥ {})",
            dim * dim
        )));
    }
    let weights = match &opts.weights {
        Some(w) if w.len() != n => return Err(Error::DimensionMismatch("weights and data differ in length".into())),
        Some(w) => DVector::from_column_slice(w),
        None => DVector::from_element(n, 1.0),
    };
    let basis = hermitian_basis(dim);
    let p = basis.len();
    let mut a = DMatrix::<f64>::zeros(n, p);
    for (k, &al) in alphas.iter().enumerate() {
        let m = wigner_operator(al, dim);
        for (j, b) in basis.iter().enumerate() {
            a[(k, j)] = linalg::trace(&(b * &m)).re;
        }
    }
    let data = DVector::from_column_slice(&sample.values);
    let mut aw = a.clone();
    for k in 0..n {
        aw.row_mut(k).scale_mut(weights[k]);
    }
    let normal = a.transpose() * &aw;
    let rank = normal.clone().symmetric_eigen().eigenvalues;
    let (lmin, lmax) = rank.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    if lmin <= 1e-12 * lmax {
        return Err(Error::InsufficientData("Wigner grid does not determine every matrix element".into()));
    }
    let atb = aw.transpose() * &data;
    let objective = |x: &DVector<f64>| {
        let r = &a * x - &data;
        r.iter().zip(weights.iter()).map(|(ri, wi)| wi * ri * ri).sum::<f64>()
    };
    let step = 1.0 / (2.0 * lmax);
    let project = |x: &DVector<f64>| to_coords(&linalg::project_density(&from_coords(x, &basis, dim)), &basis);

    // the unconstrained solution is the answer whenever it is physical;
    // otherwise its projection is a warm start
    let x_ls = normal
        .clone()
        .cholesky()
        .ok_or_else(|| Error::InsufficientData("normal equations are not positive definite".into()))?
        .solve(&atb);
    let rho_ls = linalg::hermitize(&from_coords(&x_ls, &basis, dim));
    let tr_ls = linalg::trace(&rho_ls).re;
    if linalg::eigh(&rho_ls).0[0] >= 0.0 && (tr_ls - 1.0).abs() < 1e-9 {
        let state = QuantumState::from_matrix(rho_ls, vec![dim])?;
        return Ok(Reconstruction { state, log_likelihood: -0.5 * objective(&x_ls), iterations: 0, converged: true });
    }
    let mut x = project(&x_ls);
    let mut y = x.clone();
    let mut t = 1.0f64;
    let mut f_prev = objective(&x);
    let mut iterations = 0;
    let mut converged = false;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let grad = (&normal * &y - &atb) * 2.0;
        let x_new = project(&(&y - grad * step));
        let f_new = objective(&x_new);
        if f_new >= f_prev {
            if t == 1.0 {
                // a plain projected-gradient step no longer improves
                converged = true;
                break;
            }
            // adaptive restart
            t = 1.0;
            y = x.clone();
            continue;
        }
        let t_new = 0.5 * (1.0 + (1.0 + 4.0 * t * t).sqrt());
        y = &x_new + (&x_new - &x) * ((t - 1.0) / t_new);
        let change = (f_prev - f_new).abs();
        x = x_new;
        t = t_new;
        f_prev = f_new;
        if change < opts.tolerance * (1.0 + f_new) && it > 10 {
            converged = true;
            break;
        }
    }
    let state = QuantumState::from_matrix(linalg::project_density(&from_coords(&x, &basis, dim)), vec![dim])?;
    Ok(Reconstruction { state, log_likelihood: -0.5 * f_prev, iterations, converged })
}

/// Pre-measurement rotation on the {|0⟩, |1⟩} block of one cavity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum QubitRotation {
    Identity,
    Y90,
    X90,
}

impl QubitRotation {
    pub const ALL: [QubitRotation; 3] = [QubitRotation::Identity, QubitRotation::Y90, QubitRotation::X90];

    /// The rotation embedded in a d-level cavity (identity above |1⟩).
    pub fn matrix(self, d: usize) -> CMatrix {
        let mut m = CMatrix::identity(d, d);
        let (co, si) = (FRAC_PI_4.cos(), FRAC_PI_4.sin());
        match self {
            QubitRotation::Identity => {}
            QubitRotation::Y90 => {
                m[(0, 0)] = cr(co);
                m[(0, 1)] = cr(-si);
                m[(1, 0)] = cr(si);
                m[(1, 1)] = cr(co);
            }
            QubitRotation::X90 => {
                m[(0, 0)] = cr(co);
                m[(0, 1)] = -I * si;
                m[(1, 0)] = -I * si;
                m[(1, 1)] = cr(co);
            }
        }
        m
    }
}

/// Joint number-basis probabilities {00, 01, 10, 11} for each pair of
/// rotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointData {
    pub settings: Vec<(QubitRotation, QubitRotation)>,
    pub probs: Vec<[f64; 4]>,
}

fn joint_projectors(settings: &[(QubitRotation, QubitRotation)], d: usize) -> Vec<[CMatrix; 4]> {
    settings
        .iter()
        .map(|&(rs, rr)| {
            let u = linalg::kron(&rs.matrix(d), &rr.matrix(d));
            let ud = u.adjoint();
            let mut out: [CMatrix; 4] = std::array::from_fn(|_| CMatrix::zeros(d * d, d * d));
            for (k, (i, j)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                let idx = i * d + j;
                let mut proj = CMatrix::zeros(d * d, d * d);
                proj[(idx, idx)] = cr(1.0);
                out[k] = &ud * proj * &u;
            }
            out
        })
        .collect()
}

/// The nine rotation pairs × four number outcomes on a joint state.
/// Noise, if any, is added per probability and clipped at zero.
pub fn joint_measurements<R: Rng + ?Sized>(state: &QuantumState, noise_sigma: f64, rng: Option<&mut R>) -> Result<JointData> {
    let dims = state.dims();
    if dims.len() != 2 || dims[0] != dims[1] || dims[0] < 2 {
        return Err(Error::DimensionMismatch("joint measurements need two equal cavities with dim ≥ 2".into()));
    }
    let d = dims[0];
    let mut settings = Vec::with_capacity(9);
    for a in QubitRotation::ALL {
        for b in QubitRotation::ALL {
            settings.push((a, b));
        }
    }
    let projs = joint_projectors(&settings, d);
    let mut probs: Vec<[f64; 4]> = projs
        .iter()
        .map(|ps| std::array::from_fn(|k| linalg::trace(&(state.matrix() * &ps[k])).re.max(0.0)))
        .collect();
    if noise_sigma > 0.0 {
        let rng = rng.ok_or_else(|| Error::InvalidArgument("noise requested without a random source".into()))?;
        let dist = Normal::new(0.0, noise_sigma).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        for p in probs.iter_mut().flat_map(|row| row.iter_mut()) {
            *p = (*p + dist.sample(rng)).max(0.0);
        }
    }
    Ok(JointData { settings, probs })
}

/// Diluted RρR iteration on the two-qubit block.
pub fn mle_reconstruct_joint(data: &JointData, opts: &MleOptions) -> Result<Reconstruction> {
    if data.settings.is_empty() || data.settings.len() != data.probs.len() {
        return Err(Error::InsufficientData("no joint measurement data".into()));
    }
    let total: f64 = data.probs.iter().flat_map(|r| r.iter()).sum();
    if !(total > 0.0) {
        return Err(Error::InsufficientData("joint data carry no counts".into()));
    }
    let projs = joint_projectors(&data.settings, 2);
    let mut sum = CMatrix::zeros(4, 4);
    for ps in &projs {
        for p in ps {
            sum += p;
        }
    }
    let (ev, _) = linalg::eigh(&sum);
    if ev[0] < 1e-9 {
        return Err(Error::InsufficientData("measurement settings are not informationally complete".into()));
    }
    // per-setting frequencies
    let freqs: Vec<[f64; 4]> = data
        .probs
        .iter()
        .map(|row| {
            let s: f64 = row.iter().sum();
            if s > 0.0 {
                std::array::from_fn(|k| row[k] / s)
            } else {
                [0.0; 4]
            }
        })
        .collect();
    let sum_inv_sqrt = linalg::hermitian_fn(&sum, |x| 1.0 / x.sqrt());
    let loglik = |rho: &CMatrix| -> f64 {
        let mut l = 0.0;
        for (ps, fs) in projs.iter().zip(&freqs) {
            for k in 0..4 {
                if fs[k] > 0.0 {
                    l += fs[k] * linalg::trace(&(rho * &ps[k])).re.max(1e-300).ln();
                }
            }
        }
        l
    };
    let mut rho = CMatrix::identity(4, 4) * cr(0.25);
    let mut l_prev = loglik(&rho);
    let mut iterations = 0;
    let mut converged = false;
    let eps = opts.dilution;
    for it in 0..opts.max_iterations {
        iterations = it + 1;
        let mut r = CMatrix::zeros(4, 4);
        for (ps, fs) in projs.iter().zip(&freqs) {
            for k in 0..4 {
                let p = linalg::trace(&(&rho * &ps[k])).re;
                if p > 1e-300 && fs[k] > 0.0 {
                    r += &ps[k] * cr(fs[k] / p);
                }
            }
        }
        // normalized so R = 1 at the fixed point for complete settings
        let r = &sum_inv_sqrt * r * &sum_inv_sqrt;
        let step = CMatrix::identity(4, 4) + r * cr(eps);
        let next = &step * &rho * step.adjoint();
        let tr = linalg::trace(&next).re;
        rho = linalg::hermitize(&(next / cr(tr)));
        let l = loglik(&rho);
        let change = (l - l_prev).abs();
        l_prev = l;
        if change < opts.tolerance * 1e-4 && it > 10 {
            converged = true;
            break;
        }
    }
    let state = QuantumState::from_matrix(linalg::project_density(&rho), vec![2, 2])?;
    Ok(Reconstruction { state, log_likelihood: l_prev, iterations, converged })
}

/// (|10⟩ + |01⟩)/√2 in a d ⊗ d space.
pub fn bell_ket(d: usize) -> CVector {
    let mut v = CVector::zeros(d * d);
    let s = std::f64::consts::FRAC_1_SQRT_2;
    v[d] = cr(s);
    v[1] = cr(s);
    v
}

/// Two-qubit X state with populations (p00, p01, p10, p11) and |01⟩⟨10|
/// coherence `coherence`.
pub fn x_state(p00: f64, p01: f64, p10: f64, p11: f64, coherence: Complex64) -> Result<QuantumState> {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = cr(p00);
    m[(1, 1)] = cr(p01);
    m[(2, 2)] = cr(p10);
    m[(3, 3)] = cr(p11);
    m[(1, 2)] = coherence;
    m[(2, 1)] = coherence.conj();
    QuantumState::from_matrix(m, vec![2, 2])
}

/// The {|0⟩, |1⟩}⊗2 block of a joint state; fails if more than
/// [`LEAKAGE_TOL`] lies outside it.
pub fn two_qubit_block(joint: &QuantumState) -> Result<CMatrix> {
    let dims = joint.dims();
    if dims.len() != 2 || dims[0] < 2 || dims[1] < 2 {
        return Err(Error::DimensionMismatch("expected a two-cavity state".into()));
    }
    let (d0, d1) = (dims[0], dims[1]);
    let idx = [0, 1, d1, d1 + 1];
    let m = joint.matrix();
    let block = CMatrix::from_fn(4, 4, |i, j| m[(idx[i], idx[j])]);
    let leakage = 1.0 - linalg::trace(&block).re;
    if leakage > LEAKAGE_TOL {
        return Err(Error::Leakage { leakage, tolerance: LEAKAGE_TOL });
    }
    let _ = d0;
    Ok(block)
}

/// Joint state with the failure weight w = 1 − (1 − p_s)(1 − p_r) moved to
/// an unobserved level and then dropped: the two-qubit block scaled by
/// 1 − w. It is deliberately left sub-normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct UnconditionedState {
    pub block: CMatrix,
    pub failure_weight: f64,
}

pub fn uncondition(joint: &QuantumState, p_excite_s: f64, p_excite_r: f64) -> Result<UnconditionedState> {
    for p in [p_excite_s, p_excite_r] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(format!("excitation probability {p} outside [0, 1]")));
        }
    }
    let w = 1.0 - (1.0 - p_excite_s) * (1.0 - p_excite_r);
    let block = two_qubit_block(joint)?;
    // enlarge by one dimension holding w, renormalize, truncate it away
    let mut big = CMatrix::zeros(5, 5);
    big.view_mut((0, 0), (4, 4)).copy_from(&(block * cr(1.0 - w)));
    big[(4, 4)] = cr(w);
    let tr = linalg::trace(&big).re;
    let big = big / cr(tr);
    Ok(UnconditionedState { block: big.view((0, 0), (4, 4)).into_owned(), failure_weight: w })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntanglementMetrics {
    pub fidelity_to_bell: f64,
    pub concurrence: f64,
    pub purity: f64,
    pub log_negativity: f64,
    pub p_success_ent: f64,
    /// Experimental repetition rate, 1/s.
    pub repetition_rate: f64,
    /// Heralded pair rate p · R_rep, 1/s.
    pub generation_rate: f64,
    /// p · R_rep · E_N, ebit/s.
    pub ebit_rate: f64,
}

fn sigma_yy() -> CMatrix {
    let mut sy = CMatrix::zeros(2, 2);
    sy[(0, 1)] = -I;
    sy[(1, 0)] = I;
    linalg::kron(&sy, &sy)
}

/// Wootters concurrence of a (possibly sub-normalized) two-qubit block.
pub fn concurrence(block: &CMatrix) -> f64 {
    let yy = sigma_yy();
    let tilde = &yy * block.map(|z| z.conj()) * &yy;
    let s = linalg::psd_sqrt(&linalg::hermitize(block));
    let (ev, _) = linalg::eigh(&linalg::hermitize(&(&s * tilde * &s)));
    let mut l: Vec<f64> = ev.iter().map(|v| v.max(0.0).sqrt()).collect();
    l.sort_by(|a, b| b.partial_cmp(a).unwrap());
    (l[0] - l[1] - l[2] - l[3]).max(0.0)
}

/// Partial transpose on the second qubit.
pub fn partial_transpose(block: &CMatrix) -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| {
        let (a, b) = (i / 2, i % 2);
        let (cc, dd) = (j / 2, j % 2);
        block[(a * 2 + dd, cc * 2 + b)]
    })
}

pub fn log_negativity(block: &CMatrix) -> f64 {
    linalg::hermitian_trace_norm(&linalg::hermitize(&partial_transpose(block))).log2().max(0.0)
}

/// Metrics of a two-qubit block (normalized or sub-normalized).
pub fn block_metrics(block: &CMatrix, p_success: f64, repetition_rate: f64) -> Result<EntanglementMetrics> {
    if block.nrows() != 4 || block.ncols() != 4 {
        return Err(Error::DimensionMismatch("expected a 4x4 two-qubit block".into()));
    }
    if !(0.0..=1.0).contains(&p_success) || !(repetition_rate >= 0.0) {
        return Err(Error::InvalidArgument("p_success in [0, 1] and a nonnegative rate required".into()));
    }
    let bell = bell_ket(2);
    let fidelity = (bell.adjoint() * block * &bell)[(0, 0)].re;
    let purity = linalg::trace(&(block * block)).re;
    let en = log_negativity(block);
    Ok(EntanglementMetrics {
        fidelity_to_bell: fidelity.clamp(0.0, 1.0),
        concurrence: concurrence(block).clamp(0.0, 1.0),
        purity: purity.clamp(0.0, 1.0),
        log_negativity: en.clamp(0.0, 1.0),
        p_success_ent: p_success,
        repetition_rate,
        generation_rate: p_success * repetition_rate,
        ebit_rate: p_success * repetition_rate * en,
    })
}

pub fn entanglement_metrics(joint: &QuantumState, p_success: f64, repetition_rate: f64) -> Result<EntanglementMetrics> {
    block_metrics(&two_qubit_block(joint)?, p_success, repetition_rate)
}

/// Linear map from 2×2 logical density matrices to d×d physical ones, in
/// Choi form J = Σ_jk |j⟩⟨k| ⊗ Λ(|j_L⟩⟨k_L|) (trace 2).
#[derive(Debug, Clone, PartialEq)]
pub struct ProcessMatrix {
    pub choi: CMatrix,
    pub d: usize,
}

impl ProcessMatrix {
    /// Λ(|j_L⟩⟨k_L|) as a d×d block.
    pub fn block(&self, j: usize, k: usize) -> CMatrix {
        self.choi.view((j * self.d, k * self.d), (self.d, self.d)).into_owned()
    }

    pub fn apply(&self, logical: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(self.d, self.d);
        for j in 0..2 {
            for k in 0..2 {
                out += self.block(j, k) * logical[(j, k)];
            }
        }
        out
    }

    /// Largest deviation of Tr Λ(|j⟩⟨k|) from δ_jk.
    pub fn trace_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for j in 0..2 {
            for k in 0..2 {
                let t = linalg::trace(&self.block(j, k));
                let target = if j == k { 1.0 } else { 0.0 };
                worst = worst.max((t - cr(target)).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        linalg::eigh(&linalg::hermitize(&self.choi)).0[0]
    }

    /// Process matrix of a known channel acting on the logical basis.
    pub fn from_channel(
        zero: &CVector,
        one: &CVector,
        channel: impl Fn(&CMatrix) -> Result<CMatrix>,
    ) -> Result<Self> {
        let d = zero.len();
        let basis = [zero, one];
        let mut choi = CMatrix::zeros(2 * d, 2 * d);
        for j in 0..2 {
            for k in 0..2 {
                let op = basis[j] * basis[k].adjoint();
                let out = channel(&op)?;
                choi.view_mut((j * d, k * d), (d, d)).copy_from(&out);
            }
        }
        Ok(Self { choi, d })
    }
}

/// Linear inversion from logical inputs (2×2 density matrices in the code
/// basis) and the measured physical outputs, followed by projection of the
/// Choi matrix onto the positive cone.
pub fn process_matrix(inputs: &[CMatrix], outputs: &[QuantumState]) -> Result<ProcessMatrix> {
    if inputs.len() != outputs.len() || inputs.is_empty() {
        return Err(Error::InsufficientData("need matching, nonempty input/output lists".into()));
    }
    let d = outputs[0].dim();
    if outputs.iter().any(|o| o.dim() != d || o.dims().len() != 1) || inputs.iter().any(|m| m.shape() != (2, 2)) {
        return Err(Error::DimensionMismatch("inputs must be 2x2 and outputs share one single-mode dim".into()));
    }
    let n = inputs.len();
    // vec(ρ_in) as columns: 4 × n; outputs d² × n
    let x = CMatrix::from_fn(4, n, |r, col| inputs[col][(r / 2, r % 2)]);
    let y = CMatrix::from_fn(d * d, n, |r, col| outputs[col].matrix()[(r / d, r % d)]);
    let svd = x.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > 1e-9 * smax).count();
    if rank < 4 {
        return Err(Error::InsufficientData(format!(
            "logical inputs span only {rank} of 4 operator dimensions"
        )));
    }
    let pinv = svd.pseudo_inverse(1e-12).map_err(|e| Error::Fit(e.to_string()))?;
    let lambda = y * pinv; // d² × 4
    let mut choi = CMatrix::zeros(2 * d, 2 * d);
    for j in 0..2 {
        for k in 0..2 {
            let col = lambda.column(j * 2 + k);
            let blk = CMatrix::from_fn(d, d, |r, s| col[r * d + s]);
            choi.view_mut((j * d, k * d), (d, d)).copy_from(&blk);
        }
    }
    let choi = linalg::hermitian_fn(&linalg::hermitize(&choi), |v| v.max(0.0));
    Ok(ProcessMatrix { choi, d })
}

/// ¼ (Tr √(√χ_i χ_m √χ_i))² on trace-2 Choi matrices.
pub fn process_fidelity(chi_m: &ProcessMatrix, chi_i: &ProcessMatrix) -> Result<f64> {
    if chi_m.d != chi_i.d {
        return Err(Error::DimensionMismatch("process matrices differ in dimension".into()));
    }
    let s = linalg::psd_sqrt(&linalg::hermitize(&chi_i.choi));
    let inner = linalg::hermitize(&(&s * &chi_m.choi * &s));
    let (ev, _) = linalg::eigh(&inner);
    // round-off eigenvalues would each contribute ~1e-8 after the root
    let cut = 1e-13 * ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let t: f64 = ev.iter().filter(|&&v| v > cut).map(|v| v.sqrt()).sum();
    Ok(0.25 * t * t)
}

/// Logical density matrices of the six cardinal states.
pub fn cardinal_logical_inputs() -> Vec<CMatrix> {
    let code = crate::codes::CodeSpec::fock(2).expect("two-level code");
    crate::codes::cardinal_states(&code).iter().map(linalg::outer).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wigner_at_origin() {
        let vac = fock::make_fock(0, 6).unwrap();
        let one = fock::make_fock(1, 6).unwrap();
        assert!((wigner_value(&vac, c(0.0, 0.0)).unwrap() - 2.0 / PI).abs() < 1e-12);
        assert!((wigner_value(&one, c(0.0, 0.0)).unwrap() + 2.0 / PI).abs() < 1e-12);
    }

    #[test]
    fn coherent_wigner_is_a_displaced_gaussian() {
        let a0 = c(0.8, -0.4);
        let s = fock::coherent_state(a0, 16).unwrap();
        for a in [c(0.0, 0.0), c(0.8, -0.4), c(1.2, 0.3), c(-0.5, 0.5)] {
            let expect = 2.0 / PI * (-2.0 * (a - a0).norm_sqr()).exp();
            assert!((wigner_value(&s, a).unwrap() - expect).abs() < 1e-6);
        }
    }

    #[test]
    fn bell_metrics() {
        let psi = bell_ket(2);
        let rho = QuantumState::pure(&psi, vec![2, 2]).unwrap();
        let m = entanglement_metrics(&rho, 1.0, 1e4).unwrap();
        for v in [m.fidelity_to_bell, m.concurrence, m.purity, m.log_negativity] {
            assert!((v - 1.0).abs() < 1e-9);
        }
        assert_eq!(m.ebit_rate, m.p_success_ent * m.repetition_rate * m.log_negativity);
        let mixed = QuantumState::from_matrix(CMatrix::identity(4, 4) * cr(0.25), vec![2, 2]).unwrap();
        let m = entanglement_metrics(&mixed, 1.0, 1.0).unwrap();
        assert!(m.concurrence < 1e-12 && m.log_negativity < 1e-12);
    }

    #[test]
    fn leakage_is_an_error() {
        let two = fock::make_fock(2, 3).unwrap().tensor(&fock::make_fock(0, 3).unwrap());
        assert!(matches!(entanglement_metrics(&two, 1.0, 1.0), Err(Error::Leakage { .. })));
    }

    #[test]
    fn uncondition_identity_at_zero() {
        let psi = bell_ket(3);
        let rho = QuantumState::pure(&psi, vec![3, 3]).unwrap();
        let u = uncondition(&rho, 0.0, 0.0).unwrap();
        assert!(linalg::frobenius(&(u.block - two_qubit_block(&rho).unwrap())) < 1e-14);
        assert!(uncondition(&rho, 1.5, 0.0).is_err());
    }

    #[test]
    fn identity_process() {
        let id = ProcessMatrix::from_channel(&linalg::basis(2, 0), &linalg::basis(2, 1), |m| Ok(m.clone())).unwrap();
        assert!((process_fidelity(&id, &id).unwrap() - 1.0).abs() < 1e-9);
        assert!(id.trace_defect() < 1e-14);
    }
}

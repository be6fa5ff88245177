//! Logical encodings in one cavity, the photon-loss channel, Kerr
//! evolution and parity-based correction of the binomial code.

use std::f64::consts::{FRAC_1_SQRT_2, FRAC_PI_2, PI};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, QuantumState};
use crate::linalg::{self, c, cr, CMatrix, CVector, I};
use crate::optim;

/// Truncation used for binomial-code work (support ≤ 4 plus loss tails).
pub const CODE_DIM: usize = 8;
/// Population allowed above n = 4 before parity correction refuses a state.
pub const SUPPORT_TOL: f64 = 1e-6;
pub const THETA_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CodeKind {
    Fock,
    Binomial,
}

impl std::str::FromStr for CodeKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fock" => Ok(Self::Fock),
            "binomial" => Ok(Self::Binomial),
            other => Err(Error::Parse(format!("unknown code '{other}' (expected fock or binomial)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CodeSpec {
    pub name: String,
    pub kind: CodeKind,
    pub logical_zero: CVector,
    pub logical_one: CVector,
}

impl CodeSpec {
    pub fn new(kind: CodeKind, dim: usize) -> Result<Self> {
        let (zero, one) = match kind {
            CodeKind::Fock => (fock::fock_ket(0, dim)?, fock::fock_ket(1, dim)?),
            CodeKind::Binomial => {
                let z = fock::fock_ket(2, dim)?;
                let o = (fock::fock_ket(0, dim)? + fock::fock_ket(4, dim)?) * cr(FRAC_1_SQRT_2);
                (z, o)
            }
        };
        let code = Self {
            name: match kind {
                CodeKind::Fock => "fock".into(),
                CodeKind::Binomial => "binomial".into(),
            },
            kind,
            logical_zero: zero,
            logical_one: one,
        };
        code.validate()?;
        Ok(code)
    }

    pub fn fock(dim: usize) -> Result<Self> {
        Self::new(CodeKind::Fock, dim)
    }

    pub fn binomial(dim: usize) -> Result<Self> {
        Self::new(CodeKind::Binomial, dim)
    }

    pub fn dim(&self) -> usize {
        self.logical_zero.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.logical_zero.len() != self.logical_one.len() {
            return Err(Error::DimensionMismatch("logical states differ in dimension".into()));
        }
        let overlap = self.logical_zero.dotc(&self.logical_one).norm();
        let n0 = self.logical_zero.norm();
        let n1 = self.logical_one.norm();
        if overlap > 1e-12 || (n0 - 1.0).abs() > 1e-12 || (n1 - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidState(format!(
                "logical states not orthonormal (overlap {overlap:e}, norms {n0}, {n1})"
            )));
        }
        Ok(())
    }

    /// Mean photon number averaged over the code manifold.
    pub fn mean_photon_number(&self) -> f64 {
        let n = fock::number(self.dim());
        let e = |v: &CVector| (v.adjoint() * &n * v)[(0, 0)].re;
        0.5 * (e(&self.logical_zero) + e(&self.logical_one))
    }
}

/// The six cardinal states in the order +Z, −Z, +X, −X, +Y, −Y.
pub fn cardinal_states(code: &CodeSpec) -> [CVector; 6] {
    let (z, o) = (&code.logical_zero, &code.logical_one);
    let s = cr(FRAC_1_SQRT_2);
    [
        z.clone(),
        o.clone(),
        (z + o) * s,
        (z - o) * s,
        (z + o * I) * s,
        (z - o * I) * s,
    ]
}

pub const CARDINAL_LABELS: [&str; 6] = ["+Z", "-Z", "+X", "-X", "+Y", "-Y"];

/// Beamsplitter angle that removes a fraction `p_loss` of the energy.
pub fn loss_angle(p_loss: f64) -> f64 {
    2.0 * (1.0 - p_loss).clamp(0.0, 1.0).sqrt().acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossVariant {
    PureLoss,
    /// The ancilla mode joins in the mixture (1 − w)|0⟩⟨0| + w·thermal(n̄).
    ThermalGain { n_bath: f64, weight: f64 },
    /// Loss followed by number-basis dephasing: off-diagonal elements are
    /// scaled by 1 − w (for the single-photon qubit, a σ_z error at rate
    /// w/2).
    DephasingMix { weight: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossChannelSpec {
    pub p_loss: f64,
    pub variant: LossVariant,
}

impl LossChannelSpec {
    pub fn pure(p_loss: f64) -> Self {
        Self { p_loss, variant: LossVariant::PureLoss }
    }

    pub fn from_eta(eta: f64) -> Self {
        Self::pure(1.0 - eta)
    }

    pub fn theta(&self) -> f64 {
        loss_angle(self.p_loss)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p_loss) {
            return Err(Error::InvalidArgument(format!("p_loss = {} outside [0, 1]", self.p_loss)));
        }
        match self.variant {
            LossVariant::PureLoss => {}
            LossVariant::ThermalGain { n_bath, weight } => {
                if !(n_bath >= 0.0) || !(0.0..=1.0).contains(&weight) {
                    return Err(Error::InvalidArgument("thermal gain needs n_bath ≥ 0 and weight in [0, 1]".into()));
                }
            }
            LossVariant::DephasingMix { weight } => {
                if !(0.0..=1.0).contains(&weight) {
                    return Err(Error::InvalidArgument("dephasing weight outside [0, 1]".into()));
                }
            }
        }
        Ok(())
    }
}

/// Kraus operators of pure loss: K_k = Σ_n √(C(n,k) η^{n−k} p^k) |n−k⟩⟨n|.
pub fn loss_kraus(p_loss: f64, dim: usize) -> Vec<CMatrix> {
    let eta = 1.0 - p_loss;
    (0..dim)
        .map(|k| {
            let mut m = CMatrix::zeros(dim, dim);
            for n in k..dim {
                let w = linalg::binomial(n, k) * eta.powi((n - k) as i32) * p_loss.powi(k as i32);
                m[(n - k, n)] = cr(w.sqrt());
            }
            m
        })
        .filter(|m| m.iter().any(|z| z.norm() > 0.0))
        .collect()
}

fn pure_loss_matrix(rho: &CMatrix, p_loss: f64) -> CMatrix {
    let d = rho.nrows();
    let mut out = CMatrix::zeros(d, d);
    for k in loss_kraus(p_loss, d) {
        out += &k * rho * k.adjoint();
    }
    out
}

fn thermal_diag(n_bath: f64, dim: usize) -> Vec<f64> {
    if n_bath == 0.0 {
        let mut v = vec![0.0; dim];
        v[0] = 1.0;
        return v;
    }
    let q = n_bath / (1.0 + n_bath);
    let mut v: Vec<f64> = (0..dim).map(|n| q.powi(n as i32) / (1.0 + n_bath)).collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v
}

/// Beamsplitter with a mixed ancilla; the system is embedded in a larger
/// space so the number-conserving unitary is exact on the occupied support.
fn loss_with_ancilla(rho: &CMatrix, p_loss: f64, ancilla: &[f64]) -> Result<CMatrix> {
    let d = rho.nrows();
    let da = ancilla.len();
    let big = d + da;
    let u = fock::beamsplitter_unitary(loss_angle(p_loss), (big, da))?;
    let mut sys = CMatrix::zeros(big, big);
    sys.view_mut((0, 0), (d, d)).copy_from(rho);
    let env = CMatrix::from_diagonal(&CVector::from_iterator(da, ancilla.iter().map(|&x| cr(x))));
    let joint = u.matrix() * linalg::kron(&sys, &env) * u.matrix().adjoint();
    let mut out = CMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let mut s = c(0.0, 0.0);
            for e in 0..da {
                s += joint[(i * da + e, j * da + e)];
            }
            out[(i, j)] = s;
        }
    }
    Ok(out)
}

/// Applies the loss channel. The output keeps the input truncation; for
/// the gain variant population pushed above the truncation is reported as
/// a truncation error when it exceeds 1e-8.
pub fn apply_loss(state: &QuantumState, spec: &LossChannelSpec) -> Result<QuantumState> {
    spec.validate()?;
    let d = state.dim();
    if state.dims().len() != 1 {
        return Err(Error::DimensionMismatch("loss acts on a single mode".into()));
    }
    let rho = state.matrix();
    let out = match spec.variant {
        LossVariant::PureLoss => pure_loss_matrix(rho, spec.p_loss),
        LossVariant::DephasingMix { weight } => {
            let lossy = pure_loss_matrix(rho, spec.p_loss);
            dephase(&lossy, weight)
        }
        LossVariant::ThermalGain { n_bath, weight } => {
            let da = 4;
            let mut anc = thermal_diag(n_bath, da);
            anc.iter_mut().for_each(|x| *x *= weight);
            anc[0] += 1.0 - weight;
            let out = loss_with_ancilla(rho, spec.p_loss, &anc)?;
            let kept = linalg::trace(&out).re;
            if 1.0 - kept > 1e-8 {
                return Err(Error::Truncation(format!(
                    "gain pushed {:.2e} of the population above n = {}",
                    1.0 - kept,
                    d - 1
                )));
            }
            out
        }
    };
    QuantumState::from_matrix(out, vec![d])
}

/// Scales every off-diagonal element by 1 − w.
pub fn dephase(rho: &CMatrix, weight: f64) -> CMatrix {
    CMatrix::from_fn(rho.nrows(), rho.ncols(), |i, j| if i == j { rho[(i, j)] } else { rho[(i, j)] * (1.0 - weight) })
}

/// e^{−iχ/2 n(n−1) t} applied to the state.
pub fn kerr_evolve(state: &QuantumState, chi: f64, t: f64) -> Result<QuantumState> {
    state.evolve(&fock::kerr_unitary(chi, t, state.dim()))
}

/// Phase-collapse time π/(2√n̄ χ).
pub fn collapse_time(chi: f64, mean_photons: f64) -> Result<f64> {
    if !(chi.abs() > 0.0) || !(mean_photons > 0.0) {
        return Err(Error::InvalidArgument("collapse time needs χ ≠ 0 and n̄ > 0".into()));
    }
    Ok(PI / (2.0 * mean_photons.sqrt() * chi.abs()))
}

/// Loss and Kerr interleaved in `slices` steps over time `t`, followed by
/// the software reversal of the full Kerr evolution (when `reverse`).
pub fn lossy_kerr(state: &QuantumState, p_loss: f64, chi: f64, t: f64, slices: usize, reverse: bool) -> Result<QuantumState> {
    let n = slices.max(1);
    let d = state.dim();
    let p_slice = 1.0 - (1.0 - p_loss).powf(1.0 / n as f64);
    let u = fock::kerr_unitary(chi, t / n as f64, d);
    let mut rho = state.matrix().clone();
    for _ in 0..n {
        rho = u.matrix() * &rho * u.matrix().adjoint();
        rho = pure_loss_matrix(&rho, p_slice);
    }
    if reverse {
        let back = fock::kerr_unitary(-chi, t, d);
        rho = back.matrix() * &rho * back.matrix().adjoint();
    }
    QuantumState::from_matrix(rho, vec![d])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrFit {
    pub chi: f64,
    pub mean_fidelity: f64,
}

/// Upper end of the χ_eff scan, rad/s.
pub const KERR_SCAN_MAX: f64 = 2.0 * PI * 30e3;
pub const KERR_SCAN_STEP: f64 = 2.0 * PI * 0.05e3;

/// Single effective Kerr strength whose software reversal best maps the
/// received states back onto the prepared ones.
pub fn fit_effective_kerr(prepared: &[CVector], received: &[QuantumState], t: f64) -> Result<KerrFit> {
    if prepared.is_empty() || prepared.len() != received.len() {
        return Err(Error::InsufficientData("need matching, nonempty prepared/received lists".into()));
    }
    let d = received[0].dim();
    if prepared.iter().any(|p| p.len() != d) || received.iter().any(|r| r.dim() != d) {
        return Err(Error::DimensionMismatch("prepared and received states must share a dimension".into()));
    }
    let cost = |chi: f64| {
        let u = fock::kerr_unitary(-chi, t, d);
        let m = u.matrix();
        let f: f64 = prepared
            .iter()
            .zip(received)
            .map(|(p, r)| fock::pure_fidelity(p, &(m * r.matrix() * m.adjoint())))
            .sum();
        1.0 - f / prepared.len() as f64
    };
    let points = (KERR_SCAN_MAX / KERR_SCAN_STEP).round() as usize + 1;
    let best = optim::minimize_scalar(cost, 0.0, KERR_SCAN_MAX, 1e-3, points)?;
    Ok(KerrFit { chi: best.x, mean_fidelity: 1.0 - best.value })
}

/// Parity-syndrome correction of the binomial code: the odd branch is
/// mapped |1⟩ → |2⟩, |3⟩ → (|0⟩ + |4⟩)/√2, the even branch is rotated in
/// the {|0⟩, |4⟩} plane by `theta_c`. Branch probabilities are unchanged.
pub fn parity_correct(state: &QuantumState, theta_c: f64) -> Result<QuantumState> {
    let d = state.dim();
    if state.dims().len() != 1 || d < 5 {
        return Err(Error::DimensionMismatch("parity correction needs a single mode with dim ≥ 5".into()));
    }
    let pops = state.populations();
    let tail: f64 = pops[5..].iter().sum();
    if tail > SUPPORT_TOL {
        return Err(Error::InvalidState(format!("population {tail:.2e} above n = 4 exceeds {SUPPORT_TOL:e}")));
    }
    let rho = state.matrix();
    let mut pe = CMatrix::zeros(d, d);
    let mut v = CMatrix::zeros(d, d);
    for n in (0..5).step_by(2) {
        pe[(n, n)] = cr(1.0);
    }
    let s = cr(FRAC_1_SQRT_2);
    v[(2, 1)] = cr(1.0);
    v[(0, 3)] = s;
    v[(4, 3)] = s;
    let (ct, st) = (theta_c.cos(), theta_c.sin());
    let mut ue = CMatrix::identity(d, d);
    ue[(0, 0)] = cr(ct);
    ue[(4, 0)] = cr(st);
    ue[(0, 4)] = cr(-st);
    ue[(4, 4)] = cr(ct);
    let even = &ue * (&pe * rho * &pe) * ue.adjoint();
    let odd = &v * rho * v.adjoint();
    QuantumState::from_matrix(even + odd, vec![d])
}

/// Mean fidelity of the six cardinal states after `channel`, optionally
/// followed by parity correction at angle θ_c.
pub fn mean_fidelity(code: &CodeSpec, channel: &LossChannelSpec, theta_c: Option<f64>) -> Result<f64> {
    mean_fidelity_with(code, theta_c, |s| apply_loss(s, channel))
}

fn mean_fidelity_with(
    code: &CodeSpec,
    theta_c: Option<f64>,
    channel: impl Fn(&QuantumState) -> Result<QuantumState>,
) -> Result<f64> {
    let d = code.dim();
    let mut total = 0.0;
    for psi in cardinal_states(code) {
        let rho = QuantumState::pure(&psi, vec![d])?;
        let mut out = channel(&rho)?;
        if let Some(th) = theta_c {
            out = parity_correct(&out, th)?;
        }
        total += fock::pure_fidelity(&psi, out.matrix());
    }
    Ok(total / 6.0)
}

/// Corrected-binomial cost for a fixed channel, precomputing the lossy
/// states so each θ evaluation is cheap.
fn corrected_cost(lossy: &[(CVector, QuantumState)], theta: f64) -> f64 {
    let f: f64 = lossy
        .iter()
        .map(|(psi, rho)| parity_correct(rho, theta).map(|o| fock::pure_fidelity(psi, o.matrix())).unwrap_or(0.0))
        .sum();
    1.0 - f / lossy.len() as f64
}

fn lossy_cardinals(
    code: &CodeSpec,
    channel: &(dyn Fn(&QuantumState) -> Result<QuantumState> + Sync),
) -> Result<Vec<(CVector, QuantumState)>> {
    cardinal_states(code)
        .into_iter()
        .map(|psi| {
            let rho = QuantumState::pure(&psi, vec![code.dim()])?;
            Ok((psi, channel(&rho)?))
        })
        .collect()
}

/// θ_c ∈ [−π/2, π/2] minimizing the mean corrected infidelity of the
/// binomial code after pure loss.
pub fn optimize_theta_c(p_loss: f64) -> Result<f64> {
    let code = CodeSpec::binomial(CODE_DIM)?;
    let spec = LossChannelSpec::pure(p_loss);
    spec.validate()?;
    Ok(optimize_theta_for(&code, &|s| apply_loss(s, &spec))?.0)
}

fn optimize_theta_for(
    code: &CodeSpec,
    channel: &(dyn Fn(&QuantumState) -> Result<QuantumState> + Sync),
) -> Result<(f64, f64)> {
    let lossy = lossy_cardinals(code, channel)?;
    let best = optim::minimize_scalar(|th| corrected_cost(&lossy, th), -FRAC_PI_2, FRAC_PI_2, THETA_TOL, 61)?;
    Ok((best.x, best.value))
}

/// Optional Kerr dephasing folded into the sweep: loss and Kerr are
/// interleaved and the Kerr evolution is reversed in software.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KerrSpec {
    pub chi: f64,
    pub duration: f64,
    pub slices: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub eta: f64,
    pub infid_fock: f64,
    pub infid_binomial: f64,
    pub infid_corrected: f64,
    pub theta_c: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BreakEvenSweep {
    pub rows: Vec<SweepRow>,
    /// η where the Fock and corrected-binomial curves cross.
    pub crossing: Option<f64>,
}

impl BreakEvenSweep {
    pub fn to_table(&self) -> crate::table::Table {
        let mut t = crate::table::Table::new(&["eta", "infid_fock", "infid_binomial", "infid_corrected", "theta_c_opt"])
            .with_comment("mean infidelity over the six cardinal states; theta_c in rad");
        if let Some(x) = self.crossing {
            t = t.with_comment(format!("break-even eta = {x:.6}"));
        }
        for r in &self.rows {
            t.rows.push(vec![r.eta, r.infid_fock, r.infid_binomial, r.infid_corrected, r.theta_c]);
        }
        t
    }
}

fn channel_for(eta: f64, kerr: Option<KerrSpec>) -> impl Fn(&QuantumState) -> Result<QuantumState> + Sync {
    move |s: &QuantumState| match kerr {
        None => apply_loss(s, &LossChannelSpec::from_eta(eta)),
        Some(k) => lossy_kerr(s, 1.0 - eta, k.chi, k.duration, k.slices, true),
    }
}

/// One sweep point.
pub fn sweep_point(eta: f64, kerr: Option<KerrSpec>) -> Result<SweepRow> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(Error::InvalidArgument(format!("eta = {eta} outside (0, 1]")));
    }
    let fock_code = CodeSpec::fock(CODE_DIM)?;
    let bin = CodeSpec::binomial(CODE_DIM)?;
    let ch = channel_for(eta, kerr);
    let f_fock = mean_fidelity_with(&fock_code, None, &ch)?;
    let f_bin = mean_fidelity_with(&bin, None, &ch)?;
    let (theta, infid_corr) = optimize_theta_for(&bin, &ch)?;
    Ok(SweepRow {
        eta,
        infid_fock: 1.0 - f_fock,
        infid_binomial: 1.0 - f_bin,
        infid_corrected: infid_corr,
        theta_c: theta,
    })
}

/// Fock vs binomial (raw and corrected) infidelities over an η grid, with
/// the break-even crossing refined by bisection.
pub fn break_even_sweep(etas: &[f64], kerr: Option<KerrSpec>) -> Result<BreakEvenSweep> {
    let rows: Vec<SweepRow> = etas.par_iter().map(|&e| sweep_point(e, kerr)).collect::<Result<_>>()?;
    let gap = |r: &SweepRow| r.infid_fock - r.infid_corrected;
    let mut crossing = None;
    for w in rows.windows(2) {
        let (g0, g1) = (gap(&w[0]), gap(&w[1]));
        if g0 == 0.0 {
            crossing = Some(w[0].eta);
            break;
        }
        if g0.signum() != g1.signum() {
            let (mut lo, mut hi, mut glo) = (w[0].eta, w[1].eta, g0);
            for _ in 0..40 {
                let mid = 0.5 * (lo + hi);
                let gm = gap(&sweep_point(mid, kerr)?);
                if gm.signum() == glo.signum() {
                    lo = mid;
                    glo = gm;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-7 {
                    break;
                }
            }
            crossing = Some(0.5 * (lo + hi));
            break;
        }
    }
    Ok(BreakEvenSweep { rows, crossing })
}

pub fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![a],
        _ => (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect(),
    }
}

/// Logical Bloch vector from the code-space block of ρ. Population that
/// has left the code space shortens the vector; no renormalization.
pub fn bloch_vector(code: &CodeSpec, rho: &QuantumState) -> Result<[f64; 3]> {
    if rho.dim() != code.dim() {
        return Err(Error::DimensionMismatch("state and code dimensions differ".into()));
    }
    let m = rho.matrix();
    let el = |a: &CVector, b: &CVector| (a.adjoint() * m * b)[(0, 0)];
    let (z, o) = (&code.logical_zero, &code.logical_one);
    let r01 = el(z, o);
    Ok([2.0 * r01.re, -2.0 * r01.im, el(z, z).re - el(o, o).re])
}

/// Bloch vectors of one cardinal state (index into [`cardinal_states`])
/// after pure loss at each η.
pub fn bloch_trajectory(code: &CodeSpec, cardinal: usize, etas: &[f64]) -> Result<Vec<[f64; 3]>> {
    let states = cardinal_states(code);
    let psi = states
        .get(cardinal)
        .ok_or_else(|| Error::InvalidArgument(format!("cardinal index {cardinal} (expected 0..6)")))?;
    let rho = QuantumState::pure(psi, vec![code.dim()])?;
    etas.iter()
        .map(|&eta| bloch_vector(code, &apply_loss(&rho, &LossChannelSpec::from_eta(eta))?))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelFit {
    pub model: String,
    /// Parameter names and fitted values.
    pub params: Vec<(String, f64)>,
    pub mean_fidelity: f64,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelComparison {
    pub pure_loss: ChannelFit,
    pub loss_dephasing: ChannelFit,
    pub loss_gain: ChannelFit,
}

impl ChannelComparison {
    pub fn dephasing_improvement(&self) -> f64 {
        self.loss_dephasing.mean_fidelity - self.pure_loss.mean_fidelity
    }

    pub fn gain_improvement(&self) -> f64 {
        self.loss_gain.mean_fidelity - self.pure_loss.mean_fidelity
    }
}

/// Fits pure loss, loss + dephasing and loss + thermal gain to measured
/// states of known preparation, maximizing the mean Uhlmann fidelity.
pub fn fit_alternative_channels(prepared: &[CVector], measured: &[QuantumState]) -> Result<ChannelComparison> {
    if prepared.len() < 2 || prepared.len() != measured.len() {
        return Err(Error::InsufficientData(
            "need at least two prepared/measured pairs to separate loss mechanisms".into(),
        ));
    }
    let d = measured[0].dim();
    if prepared.iter().any(|p| p.len() != d) || measured.iter().any(|m| m.dim() != d) {
        return Err(Error::DimensionMismatch("all states must share one dimension".into()));
    }
    let inputs: Vec<QuantumState> = prepared.iter().map(|p| QuantumState::pure(p, vec![d])).collect::<Result<_>>()?;
    let score = |spec: LossChannelSpec| -> f64 {
        let mut f = 0.0;
        for (inp, meas) in inputs.iter().zip(measured) {
            match apply_loss(inp, &spec).and_then(|o| fock::fidelity(&o, meas)) {
                Ok(v) => f += v,
                Err(_) => return 0.0,
            }
        }
        f / inputs.len() as f64
    };

    let p_best = optim::minimize_scalar(|p| 1.0 - score(LossChannelSpec::pure(p)), 0.0, 1.0, 1e-7, 41)?;
    let p0 = p_best.x;
    let pure_loss = ChannelFit {
        model: "pure_loss".into(),
        params: vec![("p_loss".into(), p0)],
        mean_fidelity: 1.0 - p_best.value,
        converged: true,
    };

    let deph = optim::nelder_mead(
        |x| 1.0 - score(LossChannelSpec { p_loss: x[0], variant: LossVariant::DephasingMix { weight: x[1] } }),
        &[p0, 0.0],
        &[0.02, 0.02],
        &[(0.0, 1.0), (0.0, 0.5)],
        1e-10,
        400,
    )?;
    let loss_dephasing = ChannelFit {
        model: "loss_dephasing".into(),
        params: vec![("p_loss".into(), deph.x[0]), ("dephasing_weight".into(), deph.x[1])],
        mean_fidelity: (1.0 - deph.value).max(pure_loss.mean_fidelity),
        converged: deph.converged,
    };

    let gain = optim::nelder_mead(
        |x| {
            1.0 - score(LossChannelSpec {
                p_loss: x[0],
                variant: LossVariant::ThermalGain { n_bath: x[1], weight: x[2] },
            })
        },
        &[p0, 0.05, 0.0],
        &[0.02, 0.05, 0.05],
        &[(0.0, 1.0), (0.0, 0.2), (0.0, 1.0)],
        1e-10,
        600,
    )?;
    let loss_gain = ChannelFit {
        model: "loss_gain".into(),
        params: vec![
            ("p_loss".into(), gain.x[0]),
            ("n_bath".into(), gain.x[1]),
            ("gain_weight".into(), gain.x[2]),
        ],
        mean_fidelity: (1.0 - gain.value).max(pure_loss.mean_fidelity),
        converged: gain.converged,
    };
    Ok(ChannelComparison { pure_loss, loss_dephasing, loss_gain })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_are_orthonormal_with_expected_photon_number() {
        let f = CodeSpec::fock(CODE_DIM).unwrap();
        let b = CodeSpec::binomial(CODE_DIM).unwrap();
        assert!((f.mean_photon_number() - 0.5).abs() < 1e-12);
        assert!((b.mean_photon_number() - 2.0).abs() < 1e-12);
        assert!(CodeSpec::binomial(4).is_err());
        assert_eq!("binomial".parse::<CodeKind>().unwrap(), CodeKind::Binomial);
        assert!("cat".parse::<CodeKind>().is_err());
    }

    #[test]
    fn cardinal_geometry() {
        for code in [CodeSpec::fock(6).unwrap(), CodeSpec::binomial(6).unwrap()] {
            let s = cardinal_states(&code);
            for i in 0..6 {
                for j in 0..6 {
                    let f = s[i].dotc(&s[j]).norm_sqr();
                    let expect = if i == j {
                        1.0
                    } else if i / 2 == j / 2 {
                        0.0
                    } else {
                        0.5
                    };
                    assert!((f - expect).abs() < 1e-12, "{i} {j} {f}");
                }
            }
        }
        let f = CodeSpec::fock(4).unwrap();
        let plus_x = &cardinal_states(&f)[2];
        assert!((plus_x[0].re - FRAC_1_SQRT_2).abs() < 1e-15 && (plus_x[1].re - FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn loss_angle_endpoints() {
        assert_eq!(loss_angle(0.0), 0.0);
        assert!((loss_angle(1.0) - PI).abs() < 1e-12);
        assert!(loss_angle(0.3) < loss_angle(0.4));
    }

    #[test]
    fn single_photon_loss() {
        let one = fock::make_fock(1, 4).unwrap();
        let out = apply_loss(&one, &LossChannelSpec::pure(0.26)).unwrap();
        let p = out.populations();
        assert!((p[0] - 0.26).abs() < 1e-12 && (p[1] - 0.74).abs() < 1e-12);
        let vac = fock::make_fock(0, 4).unwrap();
        let out = apply_loss(&vac, &LossChannelSpec::pure(0.8)).unwrap();
        assert!((out.populations()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn four_photons_binomial_distribution() {
        let p = 0.37;
        let out = apply_loss(&fock::make_fock(4, 6).unwrap(), &LossChannelSpec::pure(p)).unwrap();
        let pops = out.populations();
        for (k, pop) in pops.iter().enumerate().take(5) {
            let expect = linalg::binomial(4, k) * (1.0 - p).powi(k as i32) * p.powi(4 - k as i32);
            assert!((pop - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn parity_correction_maps() {
        let b = CodeSpec::binomial(CODE_DIM).unwrap();
        for psi in cardinal_states(&b) {
            let rho = QuantumState::pure(&psi, vec![CODE_DIM]).unwrap();
            let out = parity_correct(&rho, 0.0).unwrap();
            assert!((fock::pure_fidelity(&psi, out.matrix()) - 1.0).abs() < 1e-12);
        }
        let one = fock::make_fock(1, CODE_DIM).unwrap();
        let out = parity_correct(&one, 0.2).unwrap();
        assert!((out.populations()[2] - 1.0).abs() < 1e-12);
        let five = fock::make_fock(5, CODE_DIM).unwrap();
        assert!(parity_correct(&five, 0.0).is_err());
    }

    #[test]
    fn kerr_identity_and_collapse() {
        let s = fock::coherent_state(c(1.0, 0.0), 10).unwrap();
        let out = kerr_evolve(&s, 0.0, 1e-6).unwrap();
        assert!(linalg::frobenius(&(out.matrix() - s.matrix())) < 1e-14);
        let t = collapse_time(2.0 * PI * 8.8e3, 1.0).unwrap();
        assert!((t - 28.4e-6).abs() < 0.5e-6, "{t}");
        assert!(collapse_time(0.0, 1.0).is_err());
    }

    #[test]
    fn theta_at_zero_loss() {
        assert!(optimize_theta_c(0.0).unwrap().abs() < 1e-5);
    }

    #[test]
    fn bloch_endpoints() {
        let f = CodeSpec::fock(CODE_DIM).unwrap();
        for k in [0, 1] {
            let traj = bloch_trajectory(&f, k, &[1.0, 0.0]).unwrap();
            let expect = if k == 0 { 1.0 } else { -1.0 };
            assert!((traj[0][2] - expect).abs() < 1e-12);
            assert!((traj[1][2] - 1.0).abs() < 1e-12);
        }
        assert!(bloch_trajectory(&f, 6, &[1.0]).is_err());
    }
}

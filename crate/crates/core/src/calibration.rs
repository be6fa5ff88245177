//! Pump-amplitude to conversion-rate and Stark-shift maps for one module.
//!
//! Pump amplitudes ξ₁ (memory-side, time dependent) and ξ₂ (output-side,
//! static) are dimensionless with |ξ|² counted in circulating pump photons.

use std::f64::consts::PI;
use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::table::Table;

const TWO_PI: f64 = 2.0 * PI;

/// Hamiltonian and damping constants of one module. All rates in rad/s,
/// all times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceParams {
    pub omega_a: f64,
    pub omega_b: f64,
    pub omega_t: f64,
    pub chi_ab: f64,
    pub chi_at: f64,
    pub chi_bt: f64,
    pub chi_aa: f64,
    pub chi_bb: f64,
    pub chi_tt: f64,
    pub kappa_out: f64,
    pub kappa_0: f64,
    pub t1_a: f64,
    pub t2r_a: f64,
    pub t1_b: f64,
    pub t1_t: f64,
    pub t2r_t: f64,
    pub t2e_t: f64,
    pub p_excite_static: f64,
}

fn mhz(f: f64) -> f64 {
    TWO_PI * f * 1e6
}

fn khz(f: f64) -> f64 {
    TWO_PI * f * 1e3
}

impl DeviceParams {
    /// Sender module.
    pub fn sender() -> Self {
        let t1_a = 460e-6;
        let t1_b = 0.14e-6;
        Self {
            omega_a: mhz(4219.3),
            omega_b: mhz(10031.5),
            omega_t: mhz(6156.1),
            chi_ab: khz(-16.0),
            chi_at: mhz(-2.86),
            chi_bt: mhz(-2.4),
            chi_aa: khz(-8.0),
            chi_bb: khz(-8.0),
            chi_tt: mhz(-183.43),
            kappa_out: 1.0 / t1_b,
            kappa_0: 1.0 / t1_a,
            t1_a,
            t2r_a: 102e-6,
            t1_b,
            t1_t: 26e-6,
            t2r_t: 12e-6,
            t2e_t: 15e-6,
            p_excite_static: 0.195,
        }
    }

    /// Receiver module.
    pub fn receiver() -> Self {
        let t1_a = 770e-6;
        let t1_b = 0.11e-6;
        Self {
            omega_a: mhz(4269.6),
            omega_b: mhz(10031.5),
            omega_t: mhz(6417.6),
            chi_ab: khz(-12.0),
            chi_at: mhz(-2.29),
            chi_bt: mhz(-2.18),
            chi_aa: khz(-5.0),
            chi_bb: khz(-6.0),
            chi_tt: mhz(-196.17),
            kappa_out: 1.0 / t1_b,
            kappa_0: 1.0 / t1_a,
            t1_a,
            t2r_a: 130e-6,
            t1_b,
            t1_t: 27e-6,
            t2r_t: 12e-6,
            t2e_t: 15e-6,
            p_excite_static: 0.209,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let rates = [
            ("kappa_out", self.kappa_out),
            ("kappa_0", self.kappa_0),
            ("t1_a", self.t1_a),
            ("t2r_a", self.t2r_a),
            ("t1_b", self.t1_b),
            ("t1_t", self.t1_t),
            ("t2r_t", self.t2r_t),
            ("t2e_t", self.t2e_t),
        ];
        for (name, v) in rates {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidArgument(format!("{name} must be a finite nonnegative number")));
            }
        }
        if self.kappa_out <= 0.0 {
            return Err(Error::InvalidArgument("kappa_out must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.p_excite_static) {
            return Err(Error::InvalidArgument("p_excite_static must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Default bilinear calibration: self/cross-Kerr Stark coefficients from
    /// the device constants and a conversion scale that gives
    /// |g|/2π = 400 kHz with both pumps at the edge of the calibrated range.
    pub fn default_calibration(&self) -> ConversionCalibration {
        ConversionCalibration {
            g0: Complex64::new(khz(400.0) / DEFAULT_MAX_POWER, 0.0),
            stark_a: [2.0 * self.chi_aa, self.chi_ab],
            stark_b: [2.0 * self.chi_bb, self.chi_ab],
            max_power: DEFAULT_MAX_POWER,
            model: GModel::Bilinear,
            residual: 0.0,
        }
    }
}

/// Calibrated range of |ξ|², in circulating pump photons.
pub const DEFAULT_MAX_POWER: f64 = 50.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GModel {
    /// g = g₀ ξ₁ ξ₂.
    Bilinear,
}

/// Pump-to-rate maps.
///
/// δ_a = stark_a[0]·|ξ₁|² + stark_a[1]·|ξ₂|²
/// δ_b = stark_b[0]·|ξ₂|² + stark_b[1]·|ξ₁|²
///
/// so the memory shift is driven by the memory-side pump power and the
/// communication-mode shift by the output-side pump power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConversionCalibration {
    pub g0: Complex64,
    pub stark_a: [f64; 2],
    pub stark_b: [f64; 2],
    pub max_power: f64,
    pub model: GModel,
    /// Residual norm of the fit that produced this calibration (0 for
    /// hand-built calibrations).
    pub residual: f64,
}

impl ConversionCalibration {
    pub fn check_range(&self, xi: Complex64) -> Result<()> {
        let p = xi.norm_sqr();
        // tiny slack so values sitting exactly on the boundary survive round-off
        if p > self.max_power * (1.0 + 1e-12) || !p.is_finite() {
            return Err(Error::Extrapolation { requested: p, limit: self.max_power });
        }
        Ok(())
    }

    pub fn g_max(&self) -> f64 {
        self.g0.norm() * self.max_power
    }
}

/// Conversion rate g (rad/s) for the given pump amplitudes.
pub fn g_of_pumps(cal: &ConversionCalibration, xi1: Complex64, xi2: Complex64) -> Result<Complex64> {
    cal.check_range(xi1)?;
    cal.check_range(xi2)?;
    Ok(match cal.model {
        GModel::Bilinear => cal.g0 * xi1 * xi2,
    })
}

/// Stark shifts (δ_a, δ_b) in rad/s.
pub fn stark_shifts(cal: &ConversionCalibration, xi1: Complex64, xi2: Complex64) -> (f64, f64) {
    stark_from_powers(cal, xi1.norm_sqr(), xi2.norm_sqr())
}

pub fn stark_from_powers(cal: &ConversionCalibration, p1: f64, p2: f64) -> (f64, f64) {
    (
        cal.stark_a[0] * p1 + cal.stark_a[1] * p2,
        cal.stark_b[0] * p2 + cal.stark_b[1] * p1,
    )
}

/// One calibration measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub xi1: Complex64,
    pub xi2: Complex64,
    pub g: Complex64,
    pub delta_a: f64,
    pub delta_b: f64,
}

/// Least-squares fit of g₀ and the four Stark coefficients.
pub fn fit_calibration(samples: &[CalibrationSample]) -> Result<ConversionCalibration> {
    if samples.len() < 4 {
        return Err(Error::Fit(format!("need at least 4 samples, got {}", samples.len())));
    }
    let p1: Vec<f64> = samples.iter().map(|s| s.xi1.norm_sqr()).collect();
    let p2: Vec<f64> = samples.iter().map(|s| s.xi2.norm_sqr()).collect();

    let products: Vec<Complex64> = samples.iter().map(|s| s.xi1 * s.xi2).collect();
    let norm: f64 = products.iter().map(|x| x.norm_sqr()).sum();
    if norm == 0.0 {
        return Err(Error::Fit("no sample has both pumps on".into()));
    }
    let g0: Complex64 = products
        .iter()
        .zip(samples)
        .map(|(x, s)| x.conj() * s.g)
        .sum::<Complex64>()
        / norm;

    let n = samples.len();
    let design_a = DMatrix::from_fn(n, 2, |i, j| if j == 0 { p1[i] } else { p2[i] });
    let design_b = DMatrix::from_fn(n, 2, |i, j| if j == 0 { p2[i] } else { p1[i] });
    let da = DVector::from_iterator(n, samples.iter().map(|s| s.delta_a));
    let db = DVector::from_iterator(n, samples.iter().map(|s| s.delta_b));
    let (sa, ra) = least_squares(&design_a, &da)?;
    let (sb, rb) = least_squares(&design_b, &db)?;

    let rg: f64 = products
        .iter()
        .zip(samples)
        .map(|(x, s)| (g0 * x - s.g).norm_sqr())
        .sum();
    let max_power = p1.iter().chain(p2.iter()).cloned().fold(0.0, f64::max);
    Ok(ConversionCalibration {
        g0,
        stark_a: [sa[0], sa[1]],
        stark_b: [sb[0], sb[1]],
        max_power: max_power.max(DEFAULT_MAX_POWER),
        model: GModel::Bilinear,
        residual: (rg + ra * ra + rb * rb).sqrt(),
    })
}

fn least_squares(design: &DMatrix<f64>, y: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if smax == 0.0 || smin < 1e-10 * smax {
        return Err(Error::Fit("samples do not span both pump axes".into()));
    }
    let x = svd
        .solve(y, 1e-14 * smax)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let r = (design * &x - y).norm();
    Ok((x, r))
}

/// Evaluates `cal` on a power grid, optionally adding Gaussian noise with
/// relative standard deviation `rel_noise` to every measured quantity.
pub fn synthesize_samples<R: Rng + ?Sized>(
    cal: &ConversionCalibration,
    powers: &[(f64, f64)],
    rel_noise: f64,
    rng: &mut R,
) -> Result<Vec<CalibrationSample>> {
    let noise = Normal::new(0.0, rel_noise.max(0.0)).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut out = Vec::with_capacity(powers.len());
    for (k, &(p1, p2)) in powers.iter().enumerate() {
        // spread the pump phases so the complex g fit sees varied data
        let phase1 = 0.37 * k as f64;
        let phase2 = -0.21 * k as f64;
        let xi1 = Complex64::from_polar(p1.sqrt(), phase1);
        let xi2 = Complex64::from_polar(p2.sqrt(), phase2);
        let g = g_of_pumps(cal, xi1, xi2)?;
        let (da, db) = stark_shifts(cal, xi1, xi2);
        let mut jitter = |v: f64| v * (1.0 + noise.sample(rng));
        let g = Complex64::new(jitter(g.re), jitter(g.im));
        out.push(CalibrationSample { xi1, xi2, g, delta_a: jitter(da), delta_b: jitter(db) });
    }
    Ok(out)
}

pub const SAMPLE_COLUMNS: [&str; 8] =
    ["xi1_re", "xi1_im", "xi2_re", "xi2_im", "g_re", "g_im", "delta_a", "delta_b"];

pub fn samples_to_table(samples: &[CalibrationSample]) -> Table {
    let mut t = Table::new(&SAMPLE_COLUMNS).with_comment(
        "units: xi dimensionless (|xi|^2 in circulating pump photons); g, delta_a, delta_b in rad/s",
    );
    for s in samples {
        t.rows.push(vec![s.xi1.re, s.xi1.im, s.xi2.re, s.xi2.im, s.g.re, s.g.im, s.delta_a, s.delta_b]);
    }
    t
}

pub fn samples_from_table(table: &Table) -> Result<Vec<CalibrationSample>> {
    let cols = SAMPLE_COLUMNS
        .iter()
        .map(|c| table.column(c))
        .collect::<Result<Vec<_>>>()?;
    Ok((0..table.rows.len())
        .map(|i| CalibrationSample {
            xi1: Complex64::new(cols[0][i], cols[1][i]),
            xi2: Complex64::new(cols[2][i], cols[3][i]),
            g: Complex64::new(cols[4][i], cols[5][i]),
            delta_a: cols[6][i],
            delta_b: cols[7][i],
        })
        .collect())
}

pub fn write_samples<W: Write>(samples: &[CalibrationSample], out: W) -> Result<()> {
    samples_to_table(samples).write_to(out)
}

pub fn read_samples<R: Read>(input: R) -> Result<Vec<CalibrationSample>> {
    samples_from_table(&Table::read_from(input)?)
}

/// Power grid covering both pump axes: each pump alone and jointly.
pub fn default_power_grid(max_power: f64, steps: usize) -> Vec<(f64, f64)> {
    let steps = steps.max(2);
    let mut grid = Vec::new();
    for i in 0..=steps {
        for j in 0..=steps {
            grid.push((max_power * i as f64 / steps as f64, max_power * j as f64 / steps as f64));
        }
    }
    grid
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn g_vanishes_with_either_pump_off() {
        let cal = DeviceParams::sender().default_calibration();
        assert_eq!(g_of_pumps(&cal, c(0.0, 0.0), c(3.0, 1.0)).unwrap(), c(0.0, 0.0));
        assert_eq!(g_of_pumps(&cal, c(2.0, -1.0), c(0.0, 0.0)).unwrap(), c(0.0, 0.0));
    }

    #[test]
    fn g_full_scale_is_400_khz() {
        let cal = DeviceParams::sender().default_calibration();
        let full = DEFAULT_MAX_POWER.sqrt();
        let g = g_of_pumps(&cal, c(full, 0.0), c(full, 0.0)).unwrap();
        assert!((g.norm() / TWO_PI - 400e3).abs() < 1e-6);
        let over = g_of_pumps(&cal, c(full * 1.01, 0.0), c(1.0, 0.0));
        assert!(matches!(over, Err(Error::Extrapolation { .. })));
    }

    #[test]
    fn g_phase_is_sum_of_pump_phases() {
        let cal = DeviceParams::receiver().default_calibration();
        for k in 0..20 {
            let (p1, p2) = (0.3 * k as f64 - 2.0, 1.1 - 0.17 * k as f64);
            let g = g_of_pumps(&cal, Complex64::from_polar(2.0, p1), Complex64::from_polar(3.0, p2)).unwrap();
            let diff = (g.arg() - (p1 + p2)).rem_euclid(TWO_PI);
            assert!(diff < 1e-12 || TWO_PI - diff < 1e-12);
        }
    }

    #[test]
    fn stark_examples() {
        let cal = DeviceParams::sender().default_calibration();
        assert_eq!(stark_shifts(&cal, c(0.0, 0.0), c(0.0, 0.0)), (0.0, 0.0));
        let (da, db) = stark_shifts(&cal, c(1.0, 0.0), c(0.0, 0.0));
        assert!((da - khz(-16.0)).abs() < 1e-9);
        assert!((db - khz(-16.0)).abs() < 1e-9);
        // linearity in pump power and curvature in amplitude
        for &(x1, x2) in &[(0.5, 1.2), (2.0, 0.0), (1.0, 3.0)] {
            let (a1, b1) = stark_from_powers(&cal, x1, x2);
            let (a2, b2) = stark_from_powers(&cal, 2.0 * x1, 2.0 * x2);
            assert!((a2 - a1 - a1).abs() < 1e-6 && (b2 - b1 - b1).abs() < 1e-6);
            assert!(a1 <= 0.0 && b1 <= 0.0);
        }
        let h = 0.1;
        let second = |x: f64| {
            let f = |v: f64| stark_shifts(&cal, c(v, 0.0), c(1.0, 0.0)).0;
            (f(x + h) - 2.0 * f(x) + f(x - h)) / (h * h)
        };
        assert!((second(1.0) - second(4.0)).abs() < 1e-3 * second(1.0).abs());
    }

    #[test]
    fn fit_round_trip_noiseless() {
        let cal = DeviceParams::sender().default_calibration();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let samples = synthesize_samples(&cal, &default_power_grid(50.0, 4), 0.0, &mut rng).unwrap();
        let fit = fit_calibration(&samples).unwrap();
        assert!((fit.g0 - cal.g0).norm() <= 1e-9 * cal.g0.norm());
        for k in 0..2 {
            assert!((fit.stark_a[k] - cal.stark_a[k]).abs() <= 1e-9 * cal.stark_a[k].abs());
            assert!((fit.stark_b[k] - cal.stark_b[k]).abs() <= 1e-9 * cal.stark_b[k].abs());
        }
    }

    #[test]
    fn fit_with_one_percent_noise() {
        let cal = DeviceParams::receiver().default_calibration();
        for seed in 0..20 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let samples = synthesize_samples(&cal, &default_power_grid(50.0, 5), 0.01, &mut rng).unwrap();
            let fit = fit_calibration(&samples).unwrap();
            assert!((fit.g0 - cal.g0).norm() <= 0.05 * cal.g0.norm());
            for k in 0..2 {
                assert!((fit.stark_a[k] - cal.stark_a[k]).abs() <= 0.05 * cal.stark_a[k].abs());
                assert!((fit.stark_b[k] - cal.stark_b[k]).abs() <= 0.05 * cal.stark_b[k].abs());
            }
            assert!(fit.residual > 0.0);
        }
    }

    #[test]
    fn fit_edge_cases() {
        let mut cal = DeviceParams::sender().default_calibration();
        cal.g0 = c(0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let samples = synthesize_samples(&cal, &default_power_grid(50.0, 3), 0.0, &mut rng).unwrap();
        assert_eq!(fit_calibration(&samples).unwrap().g0, c(0.0, 0.0));

        // only the first pump axis is ever exercised
        let one_axis: Vec<(f64, f64)> = (1..8).map(|k| (k as f64, 0.0)).collect();
        let s = synthesize_samples(&cal, &one_axis, 0.0, &mut rng).unwrap();
        assert!(matches!(fit_calibration(&s), Err(Error::Fit(_))));
        assert!(matches!(fit_calibration(&s[..3]), Err(Error::Fit(_))));
    }

    #[test]
    fn table_round_trip() {
        let cal = DeviceParams::sender().default_calibration();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let samples = synthesize_samples(&cal, &default_power_grid(20.0, 2), 0.01, &mut rng).unwrap();
        let mut buf = Vec::new();
        write_samples(&samples, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("# units:"));
        let back = read_samples(buf.as_slice()).unwrap();
        for (a, b) in samples.iter().zip(&back) {
            assert!((a.g - b.g).norm() <= 1e-9 * a.g.norm().max(1.0));
            assert!((a.delta_a - b.delta_a).abs() <= 1e-9 * a.delta_a.abs().max(1.0));
        }
    }

    #[test]
    fn shipped_defaults() {
        let s = DeviceParams::sender();
        let r = DeviceParams::receiver();
        assert!((s.chi_at / TWO_PI + 2.86e6).abs() < 1e-6);
        assert_eq!(r.t1_a, 770e-6);
        for p in [&s, &r] {
            p.validate().unwrap();
            assert!(p.kappa_out >= 100.0 * p.kappa_0);
        }
    }
}

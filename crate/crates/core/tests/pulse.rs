use std::f64::consts::PI;

use cavitynet::calibration::{ConversionCalibration, DeviceParams};
use cavitynet::pulse::*;
use num_complex::Complex64;
use proptest::prelude::*;
use rustfft::FftPlanner;

fn release(dt: f64, fraction: f64) -> (DeviceParams, ConversionCalibration, WavepacketSpec, PumpSettings, PumpWaveform) {
    let params = DeviceParams::sender();
    let cal = params.default_calibration();
    let spec = default_wavepacket(DEFAULT_DURATION, fraction).unwrap();
    let settings = PumpSettings { dt, ..PumpSettings::default() };
    let wf = synthesize_release(&params, &cal, &spec, &settings).unwrap();
    (params, cal, spec, settings, wf)
}

/// RMS spectral width (rad/s) of a sampled field, zero-padded 8x.
fn spectral_width(field: &[Complex64], dt: f64) -> f64 {
    let n = (field.len() * 8).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[..field.len()].copy_from_slice(field);
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let dw = 2.0 * PI / (n as f64 * dt);
    let omega = |k: usize| if k < n / 2 { k as f64 * dw } else { (k as f64 - n as f64) * dw };
    let p: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = p.iter().sum();
    let mean: f64 = p.iter().enumerate().map(|(k, w)| omega(k) * w).sum::<f64>() / total;
    (p.iter().enumerate().map(|(k, w)| (omega(k) - mean).powi(2) * w).sum::<f64>() / total).sqrt()
}

#[test]
fn stark_compensation_narrows_the_emitted_line() {
    let (params, cal, spec, settings, wf) = release(DEFAULT_DT, 1.0);
    // control: same |xi1|, phase reduced to its best linear fit
    let phases: Vec<f64> = {
        let mut out = Vec::with_capacity(wf.samples.len());
        let mut prev = 0.0;
        for z in &wf.samples {
            let mut p = z.arg();
            if !out.is_empty() {
                while p - prev > PI {
                    p -= 2.0 * PI;
                }
                while p - prev < -PI {
                    p += 2.0 * PI;
                }
            }
            out.push(p);
            prev = p;
        }
        out
    };
    let t = wf.times();
    let w: Vec<f64> = wf.samples.iter().map(|z| z.norm_sqr()).collect();
    let sw: f64 = w.iter().sum();
    let tm = t.iter().zip(&w).map(|(t, w)| t * w).sum::<f64>() / sw;
    let pm = phases.iter().zip(&w).map(|(p, w)| p * w).sum::<f64>() / sw;
    let slope = t.iter().zip(&phases).zip(&w).map(|((t, p), w)| (t - tm) * (p - pm) * w).sum::<f64>()
        / t.iter().zip(&w).map(|(t, w)| (t - tm).powi(2) * w).sum::<f64>();
    let mut control = wf.clone();
    for (k, z) in control.samples.iter_mut().enumerate() {
        *z = Complex64::from_polar(z.norm(), pm + slope * (t[k] - tm));
    }
    let one = Complex64::new(1.0, 0.0);
    let comp = simulate_emission(&params, &cal, &wf, &settings, one).unwrap();
    let unc = simulate_emission(&params, &cal, &control, &settings, one).unwrap();
    let target: Vec<Complex64> = t.iter().map(|&t| spec.field(t)).collect();
    let w_target = spectral_width(&target, DEFAULT_DT);
    let w_comp = spectral_width(&comp.b_out, DEFAULT_DT);
    let w_unc = spectral_width(&unc.b_out, DEFAULT_DT);
    println!("widths/2pi (kHz): target {:.2} compensated {:.2} control {:.2}",
        w_target / 2e3 / PI, w_comp / 2e3 / PI, w_unc / 2e3 / PI);
    assert!((w_comp - w_target).abs() < 0.02 * w_target);
    assert!(w_unc > 1.2 * w_comp);
}

#[test]
fn halving_the_step_shrinks_the_error() {
    let mut errs = Vec::new();
    for dt in [8e-9, 4e-9, 2e-9] {
        let (.., wf) = release(dt, 1.0);
        errs.push(wf.residual);
    }
    println!("residuals {errs:?}");
    assert!(errs[0] / errs[1] >= 4.0);
    assert!(errs[1] / errs[2] >= 4.0);
}

#[test]
fn round_trip_is_accurate_and_fast() {
    let start = std::time::Instant::now();
    let (params, cal, spec, settings, wf) = release(DEFAULT_DT, 1.0);
    let rec = simulate_emission(&params, &cal, &wf, &settings, Complex64::new(1.0, 0.0)).unwrap();
    assert!(emission_error(&rec, &spec) <= 1e-3);
    assert!(start.elapsed().as_secs_f64() < 5.0);
}

#[test]
fn half_release_shape_is_not_a_rescaled_full_release() {
    let (params, cal, _, settings, full) = release(DEFAULT_DT, 1.0);
    let (.., half) = release(DEFAULT_DT, 0.5);
    let one = Complex64::new(1.0, 0.0);
    let e_full = simulate_emission(&params, &cal, &full, &settings, one).unwrap();
    let e_half = simulate_emission(&params, &cal, &half, &settings, one).unwrap();
    // emissions are proportional by sqrt(1/2)
    let dev = e_full.b_out.iter().zip(&e_half.b_out).map(|(f, h)| (f * 0.5f64.sqrt() - h).norm()).fold(0.0, f64::max);
    let peak = e_full.b_out.iter().map(|z| z.norm()).fold(0.0, f64::max);
    assert!(dev < 2e-3 * peak, "{dev}");
    // pump ratios are not constant
    let ratios: Vec<f64> = full.samples.iter().zip(&half.samples)
        .filter(|(f, _)| f.norm() > 0.1)
        .map(|(f, h)| h.norm() / f.norm())
        .collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, f64::MIN), |(a, b), r| (a.min(*r), b.max(*r)));
    assert!(hi - lo > 0.05, "{lo} {hi}");
}

#[test]
fn capture_meets_target_for_any_amplitude() {
    let params = DeviceParams::receiver();
    let cal = params.default_calibration();
    let settings = PumpSettings::default();
    let spec = default_wavepacket(DEFAULT_DURATION, 1.0).unwrap();
    let design = design_capture(&params, &cal, &spec, DEFAULT_CAPTURE_TRUNCATION, &settings).unwrap();
    assert!((design.absorbed - DEFAULT_CAPTURE_TRUNCATION).abs() <= 1e-3);
    let half = default_wavepacket(DEFAULT_DURATION, 0.3).unwrap();
    let other = design_capture(&params, &cal, &half, DEFAULT_CAPTURE_TRUNCATION, &settings).unwrap();
    let diff = design.waveform.samples.iter().zip(&other.waveform.samples).map(|(a, b)| (a - b).norm()).fold(0.0, f64::max);
    assert!(diff < 1e-9);
}

#[test]
fn overdriven_release_is_infeasible() {
    let params = DeviceParams::sender();
    let cal = params.default_calibration();
    let spec = default_wavepacket(0.4e-6, 1.0).unwrap();
    let err = synthesize_release(&params, &cal, &spec, &PumpSettings::default()).unwrap_err();
    assert!(err.is_infeasible());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn emitted_energy_tracks_the_request(fraction in 0.05f64..1.0) {
        let (params, cal, spec, settings, wf) = release(DEFAULT_DT, fraction);
        let rec = simulate_emission(&params, &cal, &wf, &settings, Complex64::new(1.0, 0.0)).unwrap();
        prop_assert!((rec.emitted_energy() - spec.emitted_energy()).abs() < 2e-3 * spec.emitted_energy());
        prop_assert!(wf.max_power() <= cal.max_power * (1.0 + 1e-9));
    }
}

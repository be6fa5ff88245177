//! Acceptance run: one PASS/FAIL line per criterion with the measured value
//! and the pinned tolerance. Report-only by default so the rest of the test
//! suite still runs; `cargo test --test acceptance -- --strict` exits 1 when
//! any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use cavitynet::codes::{self, CodeSpec, LossChannelSpec, LossVariant, CODE_DIM};
use cavitynet::fock::{self, QuantumState};
use cavitynet::linalg::{self, c, CMatrix, CVector};
use cavitynet::pulse::{self, ModeModel, PumpSettings};
use cavitynet::calibration::DeviceParams;
use cavitynet::tomography::{self, MleOptions, ProcessMatrix};
use cavitynet::transfer::{self, EfficiencyBudget, TransferScenario};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const NO_RNG: Option<&mut ChaCha8Rng> = None;

struct Ledger {
    failed: Vec<String>,
}

impl Ledger {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("[{}] {id}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id.to_string());
        }
    }

    fn info(&self, id: &str, detail: String) {
        println!("[INFO] {id}: {detail}");
    }
}

fn within(x: f64, target: f64, tol: f64) -> bool {
    (x - target).abs() <= tol
}

fn criterion_1(l: &mut Ledger) {
    let start = Instant::now();
    let params = DeviceParams::sender();
    let cal = params.default_calibration();
    let spec = pulse::default_wavepacket(pulse::DEFAULT_DURATION, 1.0).unwrap();
    let settings = PumpSettings::default();
    let wf = pulse::synthesize_release(&params, &cal, &spec, &settings).unwrap();
    let rec = pulse::simulate_emission(&params, &cal, &wf, &settings, Complex64::new(1.0, 0.0)).unwrap();
    let err = pulse::emission_error(&rec, &spec);
    let secs = start.elapsed().as_secs_f64();
    l.check(
        "1 pulse round-trip",
        err <= 1e-3 && secs < 5.0,
        format!("relative L2 mismatch {err:.2e} (<= 1e-3), {secs:.3} s (< 5 s)"),
    );
}

fn criterion_2(l: &mut Ledger, sc: &TransferScenario) {
    let params = DeviceParams::receiver();
    let cal = params.default_calibration();
    let spec = pulse::default_wavepacket(pulse::DEFAULT_DURATION, 1.0).unwrap();
    let settings = PumpSettings::default();
    let design = pulse::design_capture(&params, &cal, &spec, 0.95, &settings).unwrap();
    // independent lossless forward run of the designed pump
    let lossless = PumpSettings { intrinsic_decay: false, ..settings };
    let model = ModeModel::new(&params, &cal, &lossless).unwrap();
    let unit = spec.normalized();
    let rec = pulse::simulate_module(&model, &design.waveform, Complex64::new(0.0, 0.0), &|t| unit.field(t)).unwrap();
    let absorbed = rec.a.last().unwrap().norm_sqr() / rec.incident_energy();
    l.check(
        "2a capture absorption (lossless, eta_trunc_r = 0.95)",
        within(absorbed, 0.95, 1e-3),
        format!("absorbed {absorbed:.5} (0.95 +- 0.001)"),
    );
    let refl = sc.run(&fock::make_fock(1, 10).unwrap(), 10).unwrap().reflected_fraction;
    l.check(
        "2b reflected fraction with budget factors",
        within(refl, 0.068, 0.01),
        format!("reflected {refl:.4} (0.068 +- 0.01), absorbed {:.4}", 1.0 - refl),
    );
}

fn criterion_3(l: &mut Ledger, sc: &TransferScenario) {
    let dim = 20;
    let (s, r) = sc.modules().unwrap();
    let opts = sc.options(dim);
    let states = [
        ("|1>", fock::make_fock(1, dim).unwrap()),
        ("|2>", fock::make_fock(2, dim).unwrap()),
        ("alpha=1", fock::coherent_state(c(1.0, 0.0), dim).unwrap()),
        ("alpha=2", fock::coherent_state(c(2.0, 0.0), dim).unwrap()),
    ];
    let outcomes: Vec<_> = states
        .iter()
        .map(|(_, st)| transfer::simulate_transfer(&s, &r, &sc.channel, &sc.budget, st, &opts).unwrap())
        .collect();
    let eta = outcomes[0].eta_measured;
    l.check("3a end-to-end efficiency", within(eta, 0.74, 0.01), format!("eta {eta:.4} (0.74 +- 0.01)"));
    let spread = outcomes.iter().map(|o| (o.eta_measured - eta).abs()).fold(0.0, f64::max);
    l.check(
        "3b state independence",
        spread <= 1e-6,
        format!(
            "max |eta - eta(|1>)| = {spread:.1e} over {} (<= 1e-6)",
            states.iter().map(|s| s.0).collect::<Vec<_>>().join(", ")
        ),
    );
}

fn criteria_4_5(l: &mut Ledger) {
    let ch = LossChannelSpec::from_eta(0.74);
    let ff = codes::mean_fidelity(&CodeSpec::fock(CODE_DIM).unwrap(), &ch, None).unwrap();
    l.check("4 Fock encoding at eta = 0.74", within(ff, 0.91, 0.01), format!("mean fidelity {ff:.4} (0.91 +- 0.01)"));
    let fb = codes::mean_fidelity(&CodeSpec::binomial(CODE_DIM).unwrap(), &ch, None).unwrap();
    l.check("5 binomial uncorrected at eta = 0.74", within(fb, 0.60, 0.01), format!("mean fidelity {fb:.4} (0.60 +- 0.01)"));
}

fn criterion_6(l: &mut Ledger) {
    let start = Instant::now();
    let sweep = codes::break_even_sweep(&codes::linspace(0.5, 1.0, 50), None).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let crossing = sweep.crossing.unwrap_or(f64::NAN);
    l.check(
        "6 break-even crossing",
        within(crossing, 0.70, 0.03) && secs < 30.0,
        format!("crossing eta {crossing:.4} (0.70 +- 0.03), 50-point sweep {secs:.2} s (< 30 s)"),
    );
    let kerr = codes::KerrSpec { chi: 2.0 * PI * 10.8e3, duration: 6e-6, slices: 16 };
    let with_kerr = codes::break_even_sweep(&codes::linspace(0.5, 1.0, 50), Some(kerr)).unwrap();
    l.info(
        "6 with 10.8 kHz self-Kerr folded in",
        format!("crossing eta {:.4}", with_kerr.crossing.unwrap_or(f64::NAN)),
    );
}

fn criterion_7(l: &mut Ledger, sc: &TransferScenario) {
    let ideal = TransferScenario::idealized().unwrap();
    let lossless = transfer::simulate_half_release_entanglement(&ideal, 0.5, 4).unwrap();
    let bell = QuantumState::pure(&tomography::bell_ket(4), vec![4, 4]).unwrap();
    let f0 = fock::fidelity(&lossless.joint_state, &bell).unwrap();
    l.check("7a lossless half release", f0 >= 0.999, format!("Bell fidelity {f0:.5} (>= 0.999)"));

    let rate = 1.0 / 110e-6;
    let out = transfer::simulate_half_release_entanglement(sc, 0.5, 4).unwrap();
    let p = sc.budget.p_success_joint();
    let m = tomography::entanglement_metrics(&out.joint_state, p, rate).unwrap();
    l.check(
        "7b budget half release",
        (0.72..=0.82).contains(&m.fidelity_to_bell),
        format!(
            "Bell fidelity {:.4} (in [0.72, 0.82]); amplitudes {:.4}, {:.4}",
            m.fidelity_to_bell,
            out.amplitudes.0.norm(),
            out.amplitudes.1.norm()
        ),
    );
    let u = tomography::uncondition(&out.joint_state, 1.0 - sc.budget.p_success_s, 1.0 - sc.budget.p_success_r).unwrap();
    let mu = tomography::block_metrics(&u.block, p, rate).unwrap();
    l.check(
        "7c budget state unconditioned at joint success 0.78",
        within(mu.fidelity_to_bell, 0.61, 0.03),
        format!("fidelity {:.4} (0.61 +- 0.03), failure weight {:.3}", mu.fidelity_to_bell, u.failure_weight),
    );
    let metrics_ok = |m: &tomography::EntanglementMetrics| {
        within(m.concurrence, 0.66, 0.03) && within(m.log_negativity, 0.66, 0.03) && within(m.ebit_rate, 4.7e3, 0.5e3)
    };
    l.check(
        "7d budget state conditioned metrics",
        metrics_ok(&m),
        format!(
            "C {:.3}, E_N {:.3}, R_e {:.2} kebit/s (0.66 +- 0.03, 0.66 +- 0.03, 4.7 +- 0.5)",
            m.concurrence,
            m.log_negativity,
            m.ebit_rate / 1e3
        ),
    );

    // reference X-state built from the conditioned populations and coherence
    let x = tomography::x_state(0.12, 0.58, 0.30, 0.0, c(0.33, 0.0)).unwrap();
    let mx = tomography::entanglement_metrics(&x, 0.78, rate).unwrap();
    let ux = tomography::uncondition(&x, 1.0 - 0.78f64.sqrt(), 1.0 - 0.78f64.sqrt()).unwrap();
    let fx = tomography::block_metrics(&ux.block, 0.78, rate).unwrap().fidelity_to_bell;
    l.check(
        "7e reference conditioned state through the same metrics",
        within(fx, 0.61, 0.03) && metrics_ok(&mx) && within(1.0 / mx.generation_rate, 140e-6, 10e-6),
        format!(
            "unconditioned F {fx:.4}; C {:.3}, E_N {:.3}, R_e {:.2} kebit/s at 1/R = {:.0} us",
            mx.concurrence,
            mx.log_negativity,
            mx.ebit_rate / 1e3,
            1e6 / mx.generation_rate
        ),
    );
}

fn criterion_8(l: &mut Ledger) {
    let b = CodeSpec::binomial(CODE_DIM).unwrap();
    let prep = codes::cardinal_states(&b).to_vec();
    let chi = 2.0 * PI * 10.8e3;
    let rec: Vec<QuantumState> = prep
        .iter()
        .map(|p| {
            let r = QuantumState::pure(p, vec![CODE_DIM]).unwrap();
            codes::kerr_evolve(&codes::apply_loss(&r, &LossChannelSpec::pure(0.26)).unwrap(), chi, 6e-6).unwrap()
        })
        .collect();
    let fit = codes::fit_effective_kerr(&prep, &rec, 6e-6).unwrap();
    let khz = fit.chi / (2.0 * PI * 1e3);
    l.check("8 effective Kerr fit", within(khz, 10.8, 0.1), format!("fitted {khz:.3} kHz (10.8 +- 0.1)"));
}

fn criterion_9(l: &mut Ledger) {
    let axis = tomography::grid_axis(tomography::DEFAULT_ALPHA_MAX, tomography::DEFAULT_GRID_POINTS);
    let opts = MleOptions::default();
    let dim = 6;
    let mut worst = f64::INFINITY;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let sigma = 0.01 * 2.0 / PI;
    let runs = 5;
    let mut rel_err = 0.0;
    let mut count = 0;
    for code in [CodeSpec::fock(dim).unwrap(), CodeSpec::binomial(dim).unwrap()] {
        for psi in codes::cardinal_states(&code) {
            let rho = QuantumState::pure(&psi, vec![dim]).unwrap();
            let truth = tomography::wigner(&rho, &axis, 0.0, NO_RNG).unwrap();
            let rec = tomography::mle_reconstruct_wigner(&truth.normalized().unwrap(), dim, &opts).unwrap();
            worst = worst.min(fock::pure_fidelity(&psi, rec.state.matrix()));
            let norm = truth.values.iter().map(|v| v * v).sum::<f64>().sqrt();
            for _ in 0..runs {
                let noisy = tomography::wigner(&rho, &axis, sigma, Some(&mut rng)).unwrap().normalized().unwrap();
                let r = tomography::mle_reconstruct_wigner(&noisy, dim, &opts).unwrap();
                let fit = tomography::wigner(&r.state, &axis, 0.0, NO_RNG).unwrap();
                let e = fit.values.iter().zip(&truth.values).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                rel_err += e / norm;
                count += 1;
            }
        }
    }
    l.check("9a noiseless MLE, 12 cardinal states", worst >= 0.999, format!("worst fidelity {worst:.6} (>= 0.999)"));
    let mean = rel_err / count as f64;
    l.check(
        "9b MLE bias under 1% noise",
        mean < 0.01,
        format!("mean relative Wigner error vs truth {:.3}% over {count} runs (< 1%)", 100.0 * mean),
    );
}

fn loss_process(code: &CodeSpec, p: f64, dephasing: f64) -> ProcessMatrix {
    let d = code.dim();
    ProcessMatrix::from_channel(&code.logical_zero, &code.logical_one, |op| {
        let mut out = CMatrix::zeros(d, d);
        for k in codes::loss_kraus(p, d) {
            out += &k * op * k.adjoint();
        }
        Ok(codes::dephase(&out, dephasing))
    })
    .unwrap()
}

fn criterion_10(l: &mut Ledger) {
    let b = CodeSpec::binomial(CODE_DIM).unwrap();
    let prepared = codes::cardinal_states(&b).to_vec();
    let inputs = tomography::cardinal_logical_inputs();
    let simulate = |spec: LossChannelSpec| -> Vec<QuantumState> {
        prepared
            .iter()
            .map(|p| codes::apply_loss(&QuantumState::pure(p, vec![CODE_DIM]).unwrap(), &spec).unwrap())
            .collect()
    };
    let analytic = loss_process(&b, 0.26, 0.0);
    let sim = tomography::process_matrix(&inputs, &simulate(LossChannelSpec::pure(0.26))).unwrap();
    let f = tomography::process_fidelity(&sim, &analytic).unwrap();
    l.check("10a pure loss vs analytic process", within(f, 1.0, 1e-6), format!("process fidelity {f:.9} (1 +- 1e-6)"));

    let noisy = simulate(LossChannelSpec { p_loss: 0.26, variant: LossVariant::DephasingMix { weight: 0.02 } });
    let fits = codes::fit_alternative_channels(&prepared, &noisy).unwrap();
    let w = fits.loss_dephasing.params.iter().find(|(n, _)| n == "dephasing_weight").map(|p| p.1).unwrap();
    let p = fits.loss_dephasing.params.iter().find(|(n, _)| n == "p_loss").map(|p| p.1).unwrap();
    let fitted = loss_process(&b, p, w);
    let fd = tomography::process_fidelity(&fitted, &analytic).unwrap();
    l.check(
        "10b fitted dephasing opens a gap",
        fd < 1.0 - 1e-6,
        format!("fitted dephasing weight {w:.4}, process fidelity {fd:.5} (< 1)"),
    );
}

fn random_ket(rng: &mut ChaCha8Rng, dim: usize) -> CVector {
    let v = CVector::from_fn(dim, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
    let n = v.norm();
    v / c(n, 0.0)
}

fn criterion_11(l: &mut Ledger) {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let cases = 1000;
    let mut failures = [0usize; 4];
    for _ in 0..cases {
        let d = rng.random_range(2..=8);
        let rho = QuantumState::pure(&random_ket(&mut rng, d), vec![d]).unwrap();
        let (p1, p2): (f64, f64) = (rng.random(), rng.random());

        let a = codes::apply_loss(&codes::apply_loss(&rho, &LossChannelSpec::pure(p1)).unwrap(), &LossChannelSpec::pure(p2)).unwrap();
        let b = codes::apply_loss(&rho, &LossChannelSpec::pure(1.0 - (1.0 - p1) * (1.0 - p2))).unwrap();
        if linalg::frobenius(&(a.matrix() - b.matrix())) > 1e-9 {
            failures[0] += 1;
        }

        let ks = codes::loss_kraus(p1, d);
        let completeness = ks.iter().fold(CMatrix::zeros(d, d), |acc, k| acc + k.adjoint() * k);
        let ev = linalg::eigh(a.matrix()).0;
        if linalg::frobenius(&(completeness - CMatrix::identity(d, d))) > 1e-10
            || (linalg::trace(a.matrix()).re - 1.0).abs() > 1e-10
            || ev[0] < -1e-10
        {
            failures[1] += 1;
        }

        let dm = rng.random_range(2..=5);
        let joint = QuantumState::pure(&random_ket(&mut rng, dm * dm), vec![dm, dm]).unwrap();
        let u = fock::beamsplitter_unitary(rng.random_range(0.0..PI), (dm, dm)).unwrap();
        let n = fock::number(dm);
        let id = CMatrix::identity(dm, dm);
        let total = linalg::kron(&n, &id) + linalg::kron(&id, &n);
        let before = joint.expect(&total).re;
        let after_state = joint.evolve(&u).unwrap();
        let after = after_state.expect(&total).re;
        let pops_before = sector_weights(&joint, dm);
        let pops_after = sector_weights(&after_state, dm);
        if (before - after).abs() > 1e-9 || pops_before.iter().zip(&pops_after).any(|(x, y)| (x - y).abs() > 1e-9) {
            failures[2] += 1;
        }

        let th = codes::loss_angle(p1);
        if (th / 2.0).sin().powi(2) - p1 > 1e-12
            || codes::loss_angle(0.0).abs() > 1e-15
            || (codes::loss_angle(1.0) - PI).abs() > 1e-12
            || codes::loss_angle(p1.min(p2)) > codes::loss_angle(p1.max(p2))
        {
            failures[3] += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let total: usize = failures.iter().sum();
    l.check(
        "11 channel-algebra properties",
        total == 0 && secs < 60.0,
        format!(
            "{cases} cases in {secs:.2} s (< 60 s); failures: composition {}, CPTP {}, number conservation {}, theta(p) {}",
            failures[0], failures[1], failures[2], failures[3]
        ),
    );
}

/// Weight in each total-photon-number sector of a two-mode state.
fn sector_weights(state: &QuantumState, d: usize) -> Vec<f64> {
    let pops = state.populations();
    let mut w = vec![0.0; 2 * d - 1];
    for i in 0..d {
        for j in 0..d {
            w[i + j] += pops[i * d + j];
        }
    }
    w
}

fn main() {
    let strict = std::env::args().any(|a| a == "--strict");
    let start = Instant::now();
    let mut l = Ledger { failed: Vec::new() };
    let sc = TransferScenario::from_budget(EfficiencyBudget::default()).unwrap();

    criterion_1(&mut l);
    criterion_2(&mut l, &sc);
    criterion_3(&mut l, &sc);
    criteria_4_5(&mut l);
    criterion_6(&mut l);
    criterion_7(&mut l, &sc);
    criterion_8(&mut l);
    criterion_9(&mut l);
    criterion_10(&mut l);
    criterion_11(&mut l);

    println!(
        "acceptance: {} failing ({}) in {:.1} s",
        l.failed.len(),
        l.failed.join("; "),
        start.elapsed().as_secs_f64()
    );
    if strict && !l.failed.is_empty() {
        std::process::exit(1);
    }
}


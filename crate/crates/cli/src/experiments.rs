//! One runner per experiment. Each returns its tables and a flat summary;
//! nothing here touches the file system.

use std::f64::consts::PI;

use cavitynet::codes::{self, CodeSpec, KerrSpec, LossChannelSpec, LossVariant, CARDINAL_LABELS, CODE_DIM};
use cavitynet::fock::{self, QuantumState};
use cavitynet::linalg::CMatrix;
use cavitynet::pulse::{self, WavepacketSpec};
use cavitynet::table::Table;
use cavitynet::tomography::{self, MleOptions};
use cavitynet::transfer;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{Map, Value};

use crate::config::{InitialState, Scenario};
use crate::error::{CliError, Context};

pub struct Report {
    pub tables: Vec<(String, Table)>,
    pub summary: Map<String, Value>,
}

impl Report {
    fn new() -> Self {
        Self { tables: Vec::new(), summary: Map::new() }
    }

    fn put(&mut self, key: &str, value: impl Into<Value>) {
        self.summary.insert(key.to_string(), value.into());
    }
}

pub fn run(sc: &Scenario) -> Result<Report, CliError> {
    let mut report = match sc.experiment.as_str() {
        "synthesize" => synthesize(sc),
        "transfer" => transfer(sc),
        "entangle" => entangle(sc),
        "correct" => correct(sc),
        "sweep" => sweep(sc),
        "tomo" => tomo(sc),
        "process" => process(sc),
        other => Err(CliError::Config(format!("experiment: unknown experiment '{other}'"))),
    }?;
    report.put("experiment", sc.experiment.clone());
    report.put("seed", sc.seed);
    report.put("idealized", sc.idealized);
    Ok(report)
}

fn code(sc: &Scenario, dim: usize) -> Result<CodeSpec, CliError> {
    CodeSpec::new(sc.code_kind()?, dim).context("building the code")
}

fn synthesize(sc: &Scenario) -> Result<Report, CliError> {
    let scenario = sc.transfer_scenario();
    let spec = WavepacketSpec { energy_fraction: sc.synthesize.energy_fraction, ..scenario.wavepacket.clone() };
    let release = pulse::synthesize_release(&scenario.sender, &scenario.cal_s, &spec, &scenario.settings)
        .context("sender release")?;
    let emission = pulse::simulate_emission(
        &scenario.sender,
        &scenario.cal_s,
        &release,
        &scenario.settings,
        Complex64::new(1.0, 0.0),
    )
    .context("forward simulation of the release")?;
    let capture = pulse::design_capture(
        &scenario.receiver,
        &scenario.cal_r,
        &scenario.wavepacket,
        scenario.budget.eta_trunc_r,
        &scenario.settings,
    )
    .context("receiver capture")?;

    let mut em = Table::new(&["t", "target_re", "target_im", "emitted_re", "emitted_im"])
        .with_comment("units: t in s; fields in sqrt(1/s) per unit stored energy");
    for (t, out) in emission.t.iter().zip(&emission.b_out) {
        let target = spec.field(*t);
        em.rows.push(vec![*t, target.re, target.im, out.re, out.im]);
    }

    let mut r = Report::new();
    r.put("release_residual", release.residual);
    r.put("release_peak_power_photons", release.max_power());
    r.put("release_emitted_energy", emission.emitted_energy());
    r.put("capture_absorbed", capture.absorbed);
    r.put("capture_turn_on_s", capture.turn_on);
    r.put("capture_body_start_s", capture.body_start);
    r.put("capture_peak_relative_reflection", capture.waveform.residual);
    r.put("capture_peak_power_photons", capture.waveform.max_power());
    r.tables.push(("release_waveform".into(), release.to_table()));
    r.tables.push(("capture_waveform".into(), capture.waveform.to_table()));
    r.tables.push(("emission".into(), em));
    Ok(r)
}

fn prepare(state: InitialState, dim: usize) -> cavitynet::Result<QuantumState> {
    match state {
        InitialState::Fock(n) => fock::make_fock(n, dim),
        InitialState::Coherent(a) => fock::coherent_state(Complex64::new(a, 0.0), dim),
    }
}

fn transfer(sc: &Scenario) -> Result<Report, CliError> {
    let scenario = sc.transfer_scenario();
    let (s, rcv) = scenario.modules().context("pump synthesis")?;
    let opts = scenario.options(sc.transfer.output_dim);
    let mut per_state = Table::new(&["index", "prepared_mean_photons", "received_mean_photons", "eta_measured"])
        .with_comment(format!("states: {}", sc.transfer.initial_states.join(", ")));
    let mut first = None;
    let mut etas = Vec::new();
    for (i, st) in sc.initial_states().into_iter().enumerate() {
        let initial = prepare(st, sc.transfer.output_dim).context(&format!("preparing {st}"))?;
        let out = transfer::simulate_transfer(&s, &rcv, &scenario.channel, &scenario.budget, &initial, &opts)
            .context(&format!("transfer of {st}"))?;
        per_state
            .rows
            .push(vec![i as f64, out.prepared_mean_photons, out.received_state.mean_photon_number(), out.eta_measured]);
        etas.push(out.eta_measured);
        if first.is_none() {
            first = Some(out);
        }
    }
    let out = first.expect("at least one state");
    let spread = etas.iter().fold(f64::MIN, |m, v| m.max(*v)) - etas.iter().fold(f64::MAX, |m, v| m.min(*v));
    let fock_code = CodeSpec::fock(CODE_DIM).context("fock code")?;
    let f_avg = codes::mean_fidelity(&fock_code, &LossChannelSpec::from_eta(out.eta_measured), None)
        .context("model fidelity")?;

    let mut r = Report::new();
    r.put("eta_measured", out.eta_measured);
    r.put("eta_budget", scenario.budget.eta_total());
    r.put("eta_state_spread", spread);
    r.put("reflected_fraction", out.reflected_fraction);
    r.put("energy_balance_error", out.energy_balance_error);
    r.put("fock_mean_fidelity_model", f_avg);
    r.put("energy", serde_json::to_value(out.energy).expect("plain struct"));
    r.tables.push(("trajectory".into(), out.to_table()));
    r.tables.push(("states".into(), per_state));
    Ok(r)
}

fn block_table(block: &CMatrix) -> Table {
    let mut t = Table::new(&["row", "col", "re", "im"]).with_comment("basis |00>, |01>, |10>, |11> (sender, receiver)");
    for i in 0..block.nrows() {
        for j in 0..block.ncols() {
            t.rows.push(vec![i as f64, j as f64, block[(i, j)].re, block[(i, j)].im]);
        }
    }
    t
}

fn metrics_json(m: &tomography::EntanglementMetrics) -> Value {
    serde_json::to_value(m).expect("plain struct")
}

fn entangle(sc: &Scenario) -> Result<Report, CliError> {
    let scenario = sc.transfer_scenario();
    let out = transfer::simulate_half_release_entanglement(&scenario, sc.entangle.energy_fraction, sc.entangle.joint_dim)
        .context("half release")?;
    let rate = 1.0 / (sc.entangle.repetition_period_us / 1e6);
    let budget = &scenario.budget;
    let conditioned = tomography::entanglement_metrics(&out.joint_state, budget.p_success_joint(), rate)
        .context("conditioned metrics")?;
    let u = tomography::uncondition(&out.joint_state, 1.0 - budget.p_success_s, 1.0 - budget.p_success_r)
        .context("unconditioning")?;
    let unconditioned = tomography::block_metrics(&u.block, budget.p_success_joint(), rate).context("unconditioned metrics")?;
    let block = tomography::two_qubit_block(&out.joint_state).context("two-qubit block")?;

    let mut r = Report::new();
    r.put("amplitude_sender", out.amplitudes.0.norm());
    r.put("amplitude_receiver", out.amplitudes.1.norm());
    r.put("bell_fidelity", conditioned.fidelity_to_bell);
    r.put("conditioned", metrics_json(&conditioned));
    r.put("unconditioned", metrics_json(&unconditioned));
    r.put("failure_weight", u.failure_weight);
    r.tables.push(("trajectory".into(), out.to_table()));
    r.tables.push(("joint_block".into(), block_table(&block)));
    r.tables.push(("unconditioned_block".into(), block_table(&u.block)));
    Ok(r)
}

fn correct(sc: &Scenario) -> Result<Report, CliError> {
    let c = &sc.correct;
    let channel = LossChannelSpec::from_eta(c.eta);
    let fock_code = CodeSpec::fock(CODE_DIM).context("fock code")?;
    let bin = CodeSpec::binomial(CODE_DIM).context("binomial code")?;
    let f_fock = codes::mean_fidelity(&fock_code, &channel, None).context("fock fidelity")?;
    let f_bin = codes::mean_fidelity(&bin, &channel, None).context("binomial fidelity")?;
    let theta = codes::optimize_theta_c(channel.p_loss).context("optimizing the correction angle")?;
    let f_corr = codes::mean_fidelity(&bin, &channel, Some(theta)).context("corrected fidelity")?;

    let chosen = code(sc, CODE_DIM)?;
    let etas = codes::linspace(0.0, 1.0, c.bloch_points);
    let mut bloch = Table::new(&["cardinal", "eta", "x", "y", "z"])
        .with_comment(format!("code {}; cardinal index in order {}", chosen.name, CARDINAL_LABELS.join(" ")));
    for idx in 0..6 {
        let traj = codes::bloch_trajectory(&chosen, idx, &etas).context("Bloch trajectory")?;
        for (eta, v) in etas.iter().zip(traj) {
            bloch.rows.push(vec![idx as f64, *eta, v[0], v[1], v[2]]);
        }
    }

    let mut r = Report::new();
    r.put("eta", c.eta);
    r.put("fock_mean_fidelity", f_fock);
    r.put("binomial_mean_fidelity", f_bin);
    r.put("corrected_mean_fidelity", f_corr);
    r.put("theta_c", theta);
    if c.kerr_over_2pi_khz != 0.0 {
        let chi = 2.0 * PI * c.kerr_over_2pi_khz * 1e3;
        let t = c.kerr_duration_us / 1e6;
        let prepared = codes::cardinal_states(&chosen).to_vec();
        let received: Vec<QuantumState> = prepared
            .iter()
            .map(|p| {
                let rho = QuantumState::pure(p, vec![CODE_DIM])?;
                codes::lossy_kerr(&rho, channel.p_loss, chi, t, c.kerr_slices, false)
            })
            .collect::<cavitynet::Result<_>>()
            .context("synthetic Kerr data")?;
        let fit = codes::fit_effective_kerr(&prepared, &received, t).context("Kerr fit")?;
        r.put("kerr_generated_over_2pi_khz", c.kerr_over_2pi_khz);
        r.put("kerr_fitted_over_2pi_khz", fit.chi / (2.0 * PI) / 1e3);
        r.put("kerr_fit_mean_fidelity", fit.mean_fidelity);
    }
    r.tables.push(("bloch".into(), bloch));
    Ok(r)
}

fn sweep(sc: &Scenario) -> Result<Report, CliError> {
    let s = &sc.sweep;
    let kerr = (s.kerr_over_2pi_khz != 0.0).then(|| KerrSpec {
        chi: 2.0 * PI * s.kerr_over_2pi_khz * 1e3,
        duration: s.kerr_duration_us / 1e6,
        slices: s.kerr_slices,
    });
    let etas = codes::linspace(s.eta_min, s.eta_max, s.points);
    let result = codes::break_even_sweep(&etas, kerr).context("break-even sweep")?;
    let mut r = Report::new();
    r.put("crossing_eta", result.crossing.map(Value::from).unwrap_or(Value::Null));
    r.put("points", s.points);
    r.put("kerr_over_2pi_khz", s.kerr_over_2pi_khz);
    r.tables.push(("sweep".into(), result.to_table()));
    Ok(r)
}

fn tomo(sc: &Scenario) -> Result<Report, CliError> {
    let t = &sc.tomo;
    let chosen = code(sc, t.dim)?;
    let channel = LossChannelSpec::from_eta(t.eta);
    let axis = tomography::grid_axis(t.alpha_max, t.grid_points);
    let opts = MleOptions { max_iterations: t.max_iterations, tolerance: t.tolerance, ..MleOptions::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut table = Table::new(&["cardinal", "re_alpha", "im_alpha", "w_data", "w_fit"])
        .with_comment(format!("code {}; cardinal index in order {}", chosen.name, CARDINAL_LABELS.join(" ")));
    let mut fids = Vec::new();
    let mut iterations = Vec::new();
    for (idx, psi) in codes::cardinal_states(&chosen).iter().enumerate() {
        let truth = codes::apply_loss(&QuantumState::pure(psi, vec![t.dim]).context("state")?, &channel)
            .context("loss channel")?;
        let data = tomography::wigner(&truth, &axis, t.noise_sigma, Some(&mut rng))
            .and_then(|w| w.normalized())
            .context("Wigner sampling")?;
        let rec = tomography::mle_reconstruct_wigner(&data, t.dim, &opts).context("reconstruction")?;
        let fit = tomography::wigner(&rec.state, &axis, 0.0, None::<&mut ChaCha8Rng>).context("Wigner of the fit")?;
        for ((a, wd), wf) in data.alphas().iter().zip(&data.values).zip(&fit.values) {
            table.rows.push(vec![idx as f64, a.re, a.im, *wd, *wf]);
        }
        fids.push(fock::fidelity(&rec.state, &truth).context("fidelity")?);
        iterations.push(rec.iterations);
    }
    let mut r = Report::new();
    r.put("code", chosen.name.clone());
    r.put("eta", t.eta);
    r.put("fidelities", fids.clone());
    r.put("min_fidelity", fids.iter().cloned().fold(f64::INFINITY, f64::min));
    r.put("iterations", iterations);
    r.tables.push(("wigner".into(), table));
    Ok(r)
}

fn process(sc: &Scenario) -> Result<Report, CliError> {
    let p = &sc.process;
    let chosen = code(sc, CODE_DIM)?;
    let ideal_spec = LossChannelSpec::from_eta(p.eta);
    let noisy_spec = LossChannelSpec { p_loss: 1.0 - p.eta, variant: LossVariant::DephasingMix { weight: p.dephasing_weight } };
    let prepared = codes::cardinal_states(&chosen).to_vec();
    let measured: Vec<QuantumState> = prepared
        .iter()
        .map(|psi| codes::apply_loss(&QuantumState::pure(psi, vec![CODE_DIM])?, &noisy_spec))
        .collect::<cavitynet::Result<_>>()
        .context("simulated outputs")?;
    let chi_m = tomography::process_matrix(&tomography::cardinal_logical_inputs(), &measured).context("process matrix")?;
    let chi_i = tomography::ProcessMatrix::from_channel(&chosen.logical_zero, &chosen.logical_one, |op| {
        // off-diagonal inputs are not states, so the Kraus map is applied directly
        let mut out = CMatrix::zeros(CODE_DIM, CODE_DIM);
        for k in codes::loss_kraus(ideal_spec.p_loss, CODE_DIM) {
            out += &k * op * k.adjoint();
        }
        Ok(out)
    })
    .context("ideal process matrix")?;
    let fidelity = tomography::process_fidelity(&chi_m, &chi_i).context("process fidelity")?;
    let fits = codes::fit_alternative_channels(&prepared, &measured).context("channel fits")?;

    let mut choi = Table::new(&["row", "col", "re", "im"]).with_comment(format!("Choi matrix, code {}, trace 2", chosen.name));
    for i in 0..chi_m.choi.nrows() {
        for j in 0..chi_m.choi.ncols() {
            let z = chi_m.choi[(i, j)];
            if z.norm() > 1e-14 {
                choi.rows.push(vec![i as f64, j as f64, z.re, z.im]);
            }
        }
    }
    let mut r = Report::new();
    r.put("process_fidelity", fidelity);
    r.put("dephasing_weight", p.dephasing_weight);
    r.put("trace_defect", chi_m.trace_defect());
    r.put("fits", serde_json::to_value(&fits).expect("plain struct"));
    r.put("dephasing_improvement", fits.dephasing_improvement());
    r.put("gain_improvement", fits.gain_improvement());
    r.tables.push(("process_choi".into(), choi));
    Ok(r)
}

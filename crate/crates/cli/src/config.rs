//! Scenario files: TOML with unit-suffixed keys, layered on the embedded
//! defaults and then on `--set` overrides.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use cavitynet::calibration::{ConversionCalibration, DeviceParams};
use cavitynet::codes::CodeKind;
use cavitynet::pulse::{PumpSettings, WavepacketSpec};
use cavitynet::transfer::{ChannelSpec, EfficiencyBudget, TransferScenario};
use num_complex::Complex64;
use serde::Deserialize;

use crate::error::CliError;

pub const DEFAULT_CONFIG: &str = include_str!("../../../configs/default.toml");

pub const EXPERIMENTS: [&str; 7] = ["synthesize", "transfer", "entangle", "correct", "sweep", "tomo", "process"];

fn two_pi_mhz(f: f64) -> f64 {
    2.0 * PI * f * 1e6
}

fn two_pi_khz(f: f64) -> f64 {
    2.0 * PI * f * 1e3
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub experiment: String,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub code: String,
    pub idealized: bool,
    pub sender: DeviceConfig,
    pub receiver: DeviceConfig,
    pub pumps: PumpConfig,
    pub wavepacket: WavepacketConfig,
    pub budget: EfficiencyBudget,
    pub channel: ChannelConfig,
    pub synthesize: SynthesizeConfig,
    pub transfer: TransferConfig,
    pub entangle: EntangleConfig,
    pub correct: CorrectConfig,
    pub sweep: SweepConfig,
    pub tomo: TomoConfig,
    pub process: ProcessConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub omega_a_over_2pi_mhz: f64,
    pub omega_b_over_2pi_mhz: f64,
    pub omega_t_over_2pi_mhz: f64,
    pub chi_ab_over_2pi_khz: f64,
    pub chi_at_over_2pi_mhz: f64,
    pub chi_bt_over_2pi_mhz: f64,
    pub chi_aa_over_2pi_khz: f64,
    pub chi_bb_over_2pi_khz: f64,
    pub chi_tt_over_2pi_mhz: f64,
    pub t1_a_us: f64,
    pub t2r_a_us: f64,
    pub t1_b_us: f64,
    pub t1_t_us: f64,
    pub t2r_t_us: f64,
    pub t2e_t_us: f64,
    pub p_excite_static: f64,
}

impl DeviceConfig {
    pub fn to_params(&self) -> DeviceParams {
        let t1_a = self.t1_a_us / 1e6;
        let t1_b = self.t1_b_us / 1e6;
        DeviceParams {
            omega_a: two_pi_mhz(self.omega_a_over_2pi_mhz),
            omega_b: two_pi_mhz(self.omega_b_over_2pi_mhz),
            omega_t: two_pi_mhz(self.omega_t_over_2pi_mhz),
            chi_ab: two_pi_khz(self.chi_ab_over_2pi_khz),
            chi_at: two_pi_mhz(self.chi_at_over_2pi_mhz),
            chi_bt: two_pi_mhz(self.chi_bt_over_2pi_mhz),
            chi_aa: two_pi_khz(self.chi_aa_over_2pi_khz),
            chi_bb: two_pi_khz(self.chi_bb_over_2pi_khz),
            chi_tt: two_pi_mhz(self.chi_tt_over_2pi_mhz),
            kappa_out: if t1_b > 0.0 { 1.0 / t1_b } else { f64::INFINITY },
            kappa_0: if t1_a > 0.0 { 1.0 / t1_a } else { f64::INFINITY },
            t1_a,
            t2r_a: self.t2r_a_us / 1e6,
            t1_b,
            t1_t: self.t1_t_us / 1e6,
            t2r_t: self.t2r_t_us / 1e6,
            t2e_t: self.t2e_t_us / 1e6,
            p_excite_static: self.p_excite_static,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PumpConfig {
    pub max_power_photons: f64,
    pub g_max_over_2pi_khz: f64,
    pub static_power_photons: f64,
    pub dt_ns: f64,
    pub ring_time_ns: f64,
    pub intrinsic_decay: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WavepacketConfig {
    pub duration_us: f64,
    pub carrier_detuning_over_2pi_mhz: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChannelConfig {
    pub delay_ns: f64,
    pub circulator_ideal: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthesizeConfig {
    pub energy_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferConfig {
    pub initial_states: Vec<String>,
    pub output_dim: usize,
    pub capture: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntangleConfig {
    pub energy_fraction: f64,
    pub joint_dim: usize,
    pub repetition_period_us: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorrectConfig {
    pub eta: f64,
    pub bloch_points: usize,
    pub kerr_over_2pi_khz: f64,
    pub kerr_duration_us: f64,
    pub kerr_slices: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub eta_min: f64,
    pub eta_max: f64,
    pub points: usize,
    pub kerr_over_2pi_khz: f64,
    pub kerr_duration_us: f64,
    pub kerr_slices: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TomoConfig {
    pub eta: f64,
    pub dim: usize,
    pub alpha_max: f64,
    pub grid_points: usize,
    pub noise_sigma: f64,
    pub max_iterations: usize,
    pub tolerance: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProcessConfig {
    pub eta: f64,
    pub dephasing_weight: f64,
}

/// Initial memory state of a transfer run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitialState {
    Fock(usize),
    Coherent(f64),
}

impl std::str::FromStr for InitialState {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, value) = s.split_once(':').ok_or_else(|| format!("'{s}' is not of the form kind:value"))?;
        match kind.trim() {
            "fock" => value.trim().parse().map(InitialState::Fock).map_err(|_| format!("bad photon number in '{s}'")),
            "coherent" => value
                .trim()
                .parse::<f64>()
                .ok()
                .filter(|a| a.is_finite())
                .map(InitialState::Coherent)
                .ok_or_else(|| format!("bad amplitude in '{s}'")),
            other => Err(format!("unknown state kind '{other}' (expected fock or coherent)")),
        }
    }
}

impl std::fmt::Display for InitialState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InitialState::Fock(n) => write!(f, "fock:{n}"),
            InitialState::Coherent(a) => write!(f, "coherent:{a}"),
        }
    }
}

fn merge(base: &mut toml::Value, over: toml::Value) {
    match (base, over) {
        (toml::Value::Table(b), toml::Value::Table(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_table() && v.is_table() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

/// Applies `key.path=value`; the value is read as a TOML literal and falls
/// back to a bare string.
fn apply_override(root: &mut toml::Value, assignment: &str) -> Result<(), CliError> {
    let (path, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("--set '{assignment}': expected key=value")))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(CliError::Config(format!("--set '{assignment}': empty key")));
    }
    let value = match format!("v = {}", raw.trim()).parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.trim().to_string()),
    };
    let mut node = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node
            .as_table_mut()
            .ok_or_else(|| CliError::Config(format!("--set {path}: '{}' is not a section", parts[..i].join("."))))?;
        if i + 1 == parts.len() {
            if !table.contains_key(*part) {
                return Err(CliError::Config(format!("--set {path}: unknown key")));
            }
            table.insert(part.to_string(), value);
            return Ok(());
        }
        node = table
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("--set {path}: unknown section '{part}'")))?;
    }
    unreachable!("path has at least one component")
}

pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Scenario, CliError> {
    let mut root: toml::Value = toml::from_str(DEFAULT_CONFIG)
        .map_err(|e| CliError::Config(format!("embedded defaults: {e}")))?;
    if let Some(path) = path {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let user: toml::Value =
            toml::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        merge(&mut root, user);
    }
    for o in overrides {
        apply_override(&mut root, o)?;
    }
    let scenario: Scenario = serde_path_to_error::deserialize(root)
        .map_err(|e| CliError::Config(format!("{}: {}", e.path(), e.inner())))?;
    scenario.validate()?;
    Ok(scenario)
}

fn field(path: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Config(format!("{path}: {msg}"))
}

fn check_range(path: &str, v: f64, lo: f64, hi: f64) -> Result<(), CliError> {
    if v.is_finite() && (lo..=hi).contains(&v) {
        Ok(())
    } else {
        Err(field(path, format!("{v} outside [{lo}, {hi}]")))
    }
}

fn check_positive(path: &str, v: f64) -> Result<(), CliError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(field(path, format!("{v} must be positive")))
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<(), CliError> {
        if !EXPERIMENTS.contains(&self.experiment.as_str()) {
            return Err(field(
                "experiment",
                format!("unknown experiment '{}' (expected one of {})", self.experiment, EXPERIMENTS.join(", ")),
            ));
        }
        self.code_kind()?;
        for (name, dev) in [("sender", &self.sender), ("receiver", &self.receiver)] {
            for (key, v) in [
                ("t1_a_us", dev.t1_a_us),
                ("t2r_a_us", dev.t2r_a_us),
                ("t1_b_us", dev.t1_b_us),
                ("t1_t_us", dev.t1_t_us),
                ("t2r_t_us", dev.t2r_t_us),
                ("t2e_t_us", dev.t2e_t_us),
            ] {
                check_positive(&format!("{name}.{key}"), v)?;
            }
            check_range(&format!("{name}.p_excite_static"), dev.p_excite_static, 0.0, 1.0)?;
            dev.to_params().validate().map_err(|e| field(name, e))?;
        }
        let p = &self.pumps;
        check_positive("pumps.max_power_photons", p.max_power_photons)?;
        check_positive("pumps.g_max_over_2pi_khz", p.g_max_over_2pi_khz)?;
        check_range("pumps.static_power_photons", p.static_power_photons, 0.0, p.max_power_photons)?;
        check_positive("pumps.dt_ns", p.dt_ns)?;
        check_range("pumps.ring_time_ns", p.ring_time_ns, 0.0, f64::MAX)?;
        check_positive("wavepacket.duration_us", self.wavepacket.duration_us)?;
        check_range(
            "wavepacket.carrier_detuning_over_2pi_mhz",
            self.wavepacket.carrier_detuning_over_2pi_mhz,
            f64::MIN,
            f64::MAX,
        )?;
        self.budget.validate().map_err(|e| field("budget", e))?;
        check_range("channel.delay_ns", self.channel.delay_ns, 0.0, f64::MAX)?;
        check_range("synthesize.energy_fraction", self.synthesize.energy_fraction, 0.0, 1.0)?;
        if self.transfer.initial_states.is_empty() {
            return Err(field("transfer.initial_states", "at least one state required"));
        }
        for (i, s) in self.transfer.initial_states.iter().enumerate() {
            s.parse::<InitialState>().map_err(|e| field(&format!("transfer.initial_states[{i}]"), e))?;
        }
        if self.transfer.output_dim < 2 {
            return Err(field("transfer.output_dim", "must be at least 2"));
        }
        check_range("entangle.energy_fraction", self.entangle.energy_fraction, 0.0, 1.0)?;
        if self.entangle.joint_dim < 2 {
            return Err(field("entangle.joint_dim", "must be at least 2"));
        }
        check_positive("entangle.repetition_period_us", self.entangle.repetition_period_us)?;
        check_range("correct.eta", self.correct.eta, 0.0, 1.0)?;
        if self.correct.bloch_points < 2 {
            return Err(field("correct.bloch_points", "must be at least 2"));
        }
        check_range("correct.kerr_over_2pi_khz", self.correct.kerr_over_2pi_khz, f64::MIN, f64::MAX)?;
        check_range("correct.kerr_duration_us", self.correct.kerr_duration_us, 0.0, f64::MAX)?;
        if self.correct.kerr_slices == 0 {
            return Err(field("correct.kerr_slices", "must be at least 1"));
        }
        check_range("sweep.eta_min", self.sweep.eta_min, 0.0, 1.0)?;
        check_range("sweep.eta_max", self.sweep.eta_max, self.sweep.eta_min, 1.0)?;
        if self.sweep.points < 2 {
            return Err(field("sweep.points", "must be at least 2"));
        }
        check_range("sweep.kerr_over_2pi_khz", self.sweep.kerr_over_2pi_khz, f64::MIN, f64::MAX)?;
        check_range("sweep.kerr_duration_us", self.sweep.kerr_duration_us, 0.0, f64::MAX)?;
        if self.sweep.kerr_slices == 0 {
            return Err(field("sweep.kerr_slices", "must be at least 1"));
        }
        check_range("tomo.eta", self.tomo.eta, 0.0, 1.0)?;
        check_positive("tomo.alpha_max", self.tomo.alpha_max)?;
        if self.tomo.grid_points < 2 {
            return Err(field("tomo.grid_points", "must be at least 2"));
        }
        check_range("tomo.noise_sigma", self.tomo.noise_sigma, 0.0, f64::MAX)?;
        if self.tomo.max_iterations == 0 {
            return Err(field("tomo.max_iterations", "must be at least 1"));
        }
        check_positive("tomo.tolerance", self.tomo.tolerance)?;
        check_range("process.eta", self.process.eta, 0.0, 1.0)?;
        check_range("process.dephasing_weight", self.process.dephasing_weight, 0.0, 1.0)?;
        Ok(())
    }

    pub fn code_kind(&self) -> Result<CodeKind, CliError> {
        self.code.parse().map_err(|e| field("code", e))
    }

    pub fn initial_states(&self) -> Vec<InitialState> {
        self.transfer.initial_states.iter().map(|s| s.parse().expect("validated")).collect()
    }

    fn calibration(&self, params: &DeviceParams) -> ConversionCalibration {
        let mut cal = params.default_calibration();
        cal.max_power = self.pumps.max_power_photons;
        cal.g0 = Complex64::new(two_pi_khz(self.pumps.g_max_over_2pi_khz) / self.pumps.max_power_photons, 0.0);
        cal
    }

    /// Devices, pumps, packet and budget assembled for the transfer engine.
    pub fn transfer_scenario(&self) -> TransferScenario {
        let sender = self.sender.to_params();
        let receiver = self.receiver.to_params();
        let budget = if self.idealized { EfficiencyBudget::lossless() } else { self.budget.clone() };
        let mut sc = TransferScenario {
            cal_s: self.calibration(&sender),
            cal_r: self.calibration(&receiver),
            sender,
            receiver,
            wavepacket: WavepacketSpec {
                duration: self.wavepacket.duration_us / 1e6,
                carrier_detuning: two_pi_mhz(self.wavepacket.carrier_detuning_over_2pi_mhz),
                energy_fraction: 1.0,
                truncation: budget.eta_trunc_s,
            },
            channel: ChannelSpec {
                eta_tx: budget.eta_tx,
                delay: self.channel.delay_ns / 1e9,
                circulator_ideal: self.channel.circulator_ideal,
            },
            budget,
            settings: PumpSettings {
                xi2: Complex64::new(self.pumps.static_power_photons.sqrt(), 0.0),
                ring_time: self.pumps.ring_time_ns / 1e9,
                dt: self.pumps.dt_ns / 1e9,
                intrinsic_decay: self.pumps.intrinsic_decay,
            },
            capture: self.transfer.capture,
        };
        if self.idealized {
            for cal in [&mut sc.cal_s, &mut sc.cal_r] {
                cal.stark_a = [0.0; 2];
                cal.stark_b = [0.0; 2];
            }
            sc.wavepacket.carrier_detuning = 0.0;
            sc.settings.intrinsic_decay = false;
        }
        sc
    }
}

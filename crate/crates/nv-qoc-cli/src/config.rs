//! Strictly parsed TOML problem configuration and its lowering into library
//! objects.
//!
//! Every table rejects unknown keys, and fields that do not apply to the
//! selected `kind` are rejected before any computation starts. The parsed
//! structure round-trips through TOML, which is what lets reports embed an
//! echo of the effective configuration.

use crate::error::{CliError, Result};
use num_complex::Complex64;
use nv_qoc::costs::{
    ControlMapping, CostSpec, FisherOptions, QuantumFisherModel, RunningCost, Terminal,
};
use nv_qoc::crab::{CrabOptions, DcrabOptions};
use nv_qoc::grape::{GrapeOptions, UpdateRule};
use nv_qoc::linalg::{CMatrix, CVector};
use nv_qoc::propagate::{PulseSet, TimeGrid};
use nv_qoc::sensing::{DecoherenceEnvelope, FieldSignal, SensingSequence};
use nv_qoc::spinsys::{
    basis_state, spin_operators, Hamiltonian, NVParameters, NucleusSpec, Spin, SpinAxis,
    NV_GAMMA_E,
};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Seed used when neither the config nor `--seed` provides one. Runs never
/// fall back to wall-clock entropy.
pub const DEFAULT_SEED: u64 = 0;

/// Top-level problem description. Which blocks are required or forbidden
/// depends on the subcommand; see [`ProblemConfig::validate_blocks`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    /// Master seed for every randomized ingredient of the run.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub system: Option<SystemConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pulse: Option<PulseConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub simulate: Option<SimulateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub optimizer: Option<OptimizerConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sensing: Option<SensingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub limits: Option<LimitsConfig>,
}

/// Hamiltonian selection. `kind` is `"rwa_qubit"` (resonant qubit in the
/// rotating frame) or `"nv_ground"` (full NV ground-state manifold, with
/// optional nuclei).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub kind: String,
    /// rwa_qubit: detuning in rad/us (default 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    /// nv_ground: axial zero-field splitting, rad/us.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    /// nv_ground: transverse strain splitting, rad/us.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e: Option<f64>,
    /// nv_ground: electron gyromagnetic ratio, rad/(us mT).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma_e: Option<f64>,
    /// nv_ground: static magnetic field, mT.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_field: Option<[f64; 3]>,
    /// nv_ground: static electric field, V/m.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub e_field: Option<[f64; 3]>,
    /// nv_ground: axial Stark coupling, rad/us per V/m.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_par: Option<f64>,
    /// nv_ground: transverse Stark coupling, rad/us per V/m.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub delta_perp: Option<f64>,
    /// nv_ground: coupled nuclear spins.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nuclei: Option<Vec<NucleusConfig>>,
    /// Drive axes, subset of "x", "y", "z"; default ["x", "y"].
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controls: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NucleusConfig {
    /// Nuclear spin quantum number (1/2 or 1).
    pub spin: f64,
    /// Axial secular hyperfine component, rad/us.
    pub n_axial: f64,
    /// Transverse secular hyperfine component, rad/us.
    pub n_tran: f64,
    /// Nuclear gyromagnetic ratio, rad/(us mT).
    pub gamma_n: f64,
    /// Quadrupole coefficient of I_z^2, rad/us (default 0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrupole: Option<f64>,
}

/// A pure state, written either as a basis index or as an explicit vector of
/// `[re, im]` pairs. Exactly one of the two fields must be set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<[f64; 2]>>,
}

/// Piecewise-constant pulse grid and starting amplitudes. `init` is
/// `"zeros"` (default), `"constant"` (requires `values`, one per control) or
/// `"random"` (requires `amplitude`; uniform in `[-amplitude, amplitude)`,
/// drawn from the run seed).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PulseConfig {
    /// Pulse duration, us.
    pub t_final: f64,
    pub n_slices: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub init: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateConfig {
    /// Initial state; default basis state 0.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi0: Option<StateConfig>,
}

/// Objective selection. `kind` is `"state"`, `"gate"` or `"fisher"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub kind: String,
    /// state/gate: compare with global phase (default false).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase_sensitive: Option<bool>,
    /// state/fisher: initial state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi0: Option<StateConfig>,
    /// state: target state.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target: Option<StateConfig>,
    /// gate: target unitary, row-major `[re, im]` entries.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub target_gate: Option<Vec<Vec<[f64; 2]>>>,
    /// fisher: working point of the estimated parameter.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta0: Option<f64>,
    /// fisher: number of repetitions in the Cramer-Rao cost.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_meas: Option<f64>,
    /// fisher: central-difference step (default 1e-4).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fd_step: Option<f64>,
    /// fisher: generator axis "x", "y" or "z" (rwa_qubit only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mapping: Option<MappingConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub running: Option<Vec<RunningConfig>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ensemble: Option<EnsembleConfig>,
}

/// Map from optimizer variables to physical amplitudes: `"clip"` or `"sin"`,
/// both bounded by `u_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MappingConfig {
    pub kind: String,
    pub u_max: f64,
}

/// One running-cost term: `"power"` (requires `p_lim`, `weight`) or
/// `"bandwidth"` (requires `eps`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunningConfig {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub p_lim: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub weight: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
}

/// Robustness ensemble for the rwa_qubit system: the cross product of
/// detuning offsets and Rabi scale factors, uniformly weighted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleConfig {
    /// Offsets added to the base detuning, rad/us (default [0.0]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detunings: Option<Vec<f64>>,
    /// Scale factors on the control operators (default [1.0]).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rabi_scales: Option<Vec<f64>>,
}

/// Optimizer selection. `kind` is `"grape"`, `"crab"` or `"dcrab"`; fields
/// belonging to a different kind are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerConfig {
    pub kind: String,
    /// Stop once the cost is at or below this value (all kinds).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_cost: Option<f64>,
    /// grape: iteration cap (default 100).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    /// grape: initial line-search step (default 1.0).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub step: Option<f64>,
    /// grape: gradient-norm stop (default 1e-10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_grad: Option<f64>,
    /// grape: "lbfgs" (default) or "fixed".
    #[serde(skip_serializing_if = "Option::is_none")]
    pub update: Option<String>,
    /// grape: L-BFGS history length (default 10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub history: Option<usize>,
    /// crab: objective-evaluation budget (default 2000).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    /// crab/dcrab: basis elements (default 5).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_elements: Option<usize>,
    /// crab/dcrab: frequency cutoff, rad/us (default 2 pi n_elements / t_final).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
    /// crab/dcrab: initial simplex step in coefficient units (default 0.1).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub coeff_step: Option<f64>,
    /// crab/dcrab: simplex value-spread tolerance (default 1e-10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_f: Option<f64>,
    /// crab/dcrab: simplex diameter tolerance (default 1e-10).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tol_x: Option<f64>,
    /// dcrab: superiterations (default 5).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_si: Option<usize>,
    /// dcrab: evaluation budget per superiteration (default 2000).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budget_per_si: Option<usize>,
}

/// Sensing sweep: a hard-pulse sequence family swept over its free-precession
/// parameter `tau`. For `"ramsey"` tau is the total window, for `"echo"` the
/// half-window (total 2 tau), for `"cpmg"` the total window at fixed
/// `n_pulses`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SensingConfig {
    pub protocol: String,
    /// cpmg: number of pi pulses.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_pulses: Option<usize>,
    /// Gyromagnetic ratio, rad/(us mT); default the NV electron value.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Readout contrast in (0, 1]; default 1.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub contrast: Option<f64>,
    pub tau_min: f64,
    pub tau_max: f64,
    pub n_tau: usize,
    pub signal: SignalConfig,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub envelope: Option<EnvelopeConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub filter: Option<FilterConfig>,
}

/// Field signal: `"dc"` (requires `b`) or `"ac"` (requires `amplitude`,
/// `omega`; `phase` defaults to 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SignalConfig {
    pub kind: String,
    /// dc: field value, mT.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    /// ac: field amplitude, mT.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitude: Option<f64>,
    /// ac: angular frequency, rad/us.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub omega: Option<f64>,
    /// ac: phase at t = 0, rad.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phase: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    /// Free-induction decay time, us.
    pub t2_star: f64,
    /// Refocused coherence time, us.
    pub t2: f64,
    /// Stretching exponent of the echo decay.
    pub exponent: f64,
}

/// Filter-function table request: the sequence is built at `tau` and its
/// normalized filter weight evaluated on a uniform frequency grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterConfig {
    pub tau: f64,
    pub omega_min: f64,
    pub omega_max: f64,
    pub n_omega: usize,
}

/// Speed-limit and controllability analysis of the `[system]` block. The
/// constant Hamiltonian analyzed is `drift + sum_i amplitudes[i] * control_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsConfig {
    /// Initial state of the speed-limit bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psi0: Option<StateConfig>,
    /// Target state of the speed-limit bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psit: Option<StateConfig>,
    /// Constant drive amplitudes; default all zero.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub amplitudes: Option<Vec<f64>>,
    /// Run the Lie-rank controllability test (default true).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub controllability: Option<bool>,
}

fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Lowering errors are config errors: they describe a flaw in the input, not
/// in the computation.
fn lower_err(e: nv_qoc::Error) -> CliError {
    CliError::Config(e.to_string())
}

/// Parses and structurally validates a TOML config. Unknown keys and type
/// mismatches are reported with the line and field the parser stopped at.
pub fn parse_config(text: &str) -> Result<ProblemConfig> {
    toml::from_str(text).map_err(|e| config_err(e.to_string()))
}

/// The subcommand being executed; decides which blocks are required.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Optimize,
    Sense,
    Limits,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Optimize => "optimize",
            Command::Sense => "sense",
            Command::Limits => "limits",
        }
    }
}

impl ProblemConfig {
    /// Seed in effect for this run.
    pub fn effective_seed(&self) -> u64 {
        self.seed.unwrap_or(DEFAULT_SEED)
    }

    /// Checks that exactly the blocks the command consumes are present.
    /// Anything else in the file would silently change meaning, so it is
    /// rejected.
    pub fn validate_blocks(&self, cmd: Command) -> Result<()> {
        let blocks: [(&str, bool); 7] = [
            ("system", self.system.is_some()),
            ("pulse", self.pulse.is_some()),
            ("simulate", self.simulate.is_some()),
            ("cost", self.cost.is_some()),
            ("optimizer", self.optimizer.is_some()),
            ("sensing", self.sensing.is_some()),
            ("limits", self.limits.is_some()),
        ];
        let (required, optional): (&[&str], &[&str]) = match cmd {
            Command::Simulate => (&["system", "pulse"], &["simulate"]),
            Command::Optimize => (&["system", "pulse", "cost", "optimizer"], &[]),
            Command::Sense => (&["sensing"], &[]),
            Command::Limits => (&["system"], &["limits"]),
        };
        for name in required {
            if !blocks.iter().any(|(n, set)| n == name && *set) {
                return Err(config_err(format!(
                    "command `{}` requires a [{}] block",
                    cmd.name(),
                    name
                )));
            }
        }
        for (name, set) in blocks {
            if set && !required.contains(&name) && !optional.contains(&name) {
                return Err(config_err(format!(
                    "command `{}` does not use the [{}] block",
                    cmd.name(),
                    name
                )));
            }
        }
        Ok(())
    }
}

/// Rejects fields set in the config that the chosen `kind` does not consume.
fn reject_unused(context: &str, kind: &str, fields: &[(&str, bool)]) -> Result<()> {
    for (name, set) in fields {
        if *set {
            return Err(config_err(format!(
                "{context}: field `{name}` does not apply to kind `{kind}`"
            )));
        }
    }
    Ok(())
}

fn parse_axis(s: &str) -> Result<SpinAxis> {
    match s {
        "x" => Ok(SpinAxis::X),
        "y" => Ok(SpinAxis::Y),
        "z" => Ok(SpinAxis::Z),
        other => Err(config_err(format!("unknown axis `{other}`; expected x, y or z"))),
    }
}

/// A built Hamiltonian plus the facts later stages need (ensemble variants,
/// Fisher generators) that the matrix form no longer exposes.
#[derive(Debug, Clone)]
pub struct BuiltSystem {
    pub h: Hamiltonian,
    pub kind: SystemKindInfo,
}

#[derive(Debug, Clone)]
pub enum SystemKindInfo {
    RwaQubit { delta: f64, axes: Vec<SpinAxis> },
    NvGround,
}

pub fn build_system(sc: &SystemConfig) -> Result<BuiltSystem> {
    let axes: Vec<SpinAxis> = match &sc.controls {
        Some(list) => {
            if list.is_empty() {
                return Err(config_err("[system] controls must not be empty"));
            }
            list.iter().map(|s| parse_axis(s)).collect::<Result<_>>()?
        }
        None => vec![SpinAxis::X, SpinAxis::Y],
    };
    match sc.kind.as_str() {
        "rwa_qubit" => {
            reject_unused(
                "[system]",
                "rwa_qubit",
                &[
                    ("d", sc.d.is_some()),
                    ("e", sc.e.is_some()),
                    ("gamma_e", sc.gamma_e.is_some()),
                    ("b_field", sc.b_field.is_some()),
                    ("e_field", sc.e_field.is_some()),
                    ("delta_par", sc.delta_par.is_some()),
                    ("delta_perp", sc.delta_perp.is_some()),
                    ("nuclei", sc.nuclei.is_some()),
                ],
            )?;
            let delta = sc.delta.unwrap_or(0.0);
            let h = rwa_qubit(delta, &axes)?;
            Ok(BuiltSystem { h, kind: SystemKindInfo::RwaQubit { delta, axes } })
        }
        "nv_ground" => {
            reject_unused("[system]", "nv_ground", &[("delta", sc.delta.is_some())])?;
            let defaults = NVParameters::default();
            let nuclei = sc
                .nuclei
                .as_deref()
                .unwrap_or(&[])
                .iter()
                .map(|n| {
                    Ok(NucleusSpec {
                        spin: Spin::from_quantum_number(n.spin).map_err(lower_err)?,
                        n_axial: n.n_axial,
                        n_tran: n.n_tran,
                        gamma_n: n.gamma_n,
                        quadrupole: n.quadrupole.unwrap_or(0.0),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let p = NVParameters {
                d: sc.d.unwrap_or(defaults.d),
                e: sc.e.unwrap_or(defaults.e),
                gamma_e: sc.gamma_e.unwrap_or(defaults.gamma_e),
                b_field: sc.b_field.unwrap_or(defaults.b_field),
                e_field: sc.e_field.unwrap_or(defaults.e_field),
                delta_par: sc.delta_par.unwrap_or(defaults.delta_par),
                delta_perp: sc.delta_perp.unwrap_or(defaults.delta_perp),
                nuclei,
            };
            let bare = nv_qoc::spinsys::nv_ground_hamiltonian(&p).map_err(lower_err)?;
            let controls = axes
                .iter()
                .map(|&a| nv_qoc::spinsys::nv_electron_operator(&p, a).map_err(lower_err))
                .collect::<Result<Vec<_>>>()?;
            let h = bare.with_controls(controls).map_err(lower_err)?;
            Ok(BuiltSystem { h, kind: SystemKindInfo::NvGround })
        }
        other => Err(config_err(format!(
            "unknown system kind `{other}`; expected rwa_qubit or nv_ground"
        ))),
    }
}

/// Rotating-frame qubit `delta s_z + sum_i u_i s_axis_i`.
fn rwa_qubit(delta: f64, axes: &[SpinAxis]) -> Result<Hamiltonian> {
    if !delta.is_finite() {
        return Err(config_err(format!("non-finite detuning {delta}")));
    }
    let ops = spin_operators(Spin::Half);
    let drift = ops.sz.clone() * Complex64::new(delta, 0.0);
    let controls = axes.iter().map(|&a| ops.axis(a).clone()).collect();
    Hamiltonian::new(drift, controls).map_err(lower_err)
}

pub fn build_state(st: &StateConfig, dim: usize, what: &str) -> Result<CVector> {
    match (&st.basis, &st.vector) {
        (Some(k), None) => {
            if *k >= dim {
                return Err(config_err(format!(
                    "{what}: basis index {k} out of range for dimension {dim}"
                )));
            }
            Ok(basis_state(dim, *k))
        }
        (None, Some(entries)) => {
            if entries.len() != dim {
                return Err(config_err(format!(
                    "{what}: vector has {} entries, expected {dim}",
                    entries.len()
                )));
            }
            let v = CVector::from_iterator(
                dim,
                entries.iter().map(|&[re, im]| Complex64::new(re, im)),
            );
            let norm = v.norm();
            if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
                return Err(config_err(format!("{what}: vector norm is {norm}, expected 1")));
            }
            Ok(v)
        }
        _ => Err(config_err(format!("{what}: set exactly one of `basis` or `vector`"))),
    }
}

/// Upper bound on configured grid sizes. A corrupt slice or sample count
/// must fail as a config error, not abort on allocation.
pub const MAX_GRID_POINTS: usize = 1 << 20;

pub fn build_pulses(pc: &PulseConfig, n_controls: usize, seed: u64) -> Result<PulseSet> {
    if pc.n_slices > MAX_GRID_POINTS {
        return Err(config_err(format!(
            "[pulse] n_slices must be at most {MAX_GRID_POINTS}, got {}",
            pc.n_slices
        )));
    }
    let grid = TimeGrid::new(pc.t_final, pc.n_slices).map_err(lower_err)?;
    let init = pc.init.as_deref().unwrap_or("zeros");
    match init {
        "zeros" => {
            reject_unused(
                "[pulse]",
                "zeros",
                &[("values", pc.values.is_some()), ("amplitude", pc.amplitude.is_some())],
            )?;
            Ok(PulseSet::zeros(grid, n_controls))
        }
        "constant" => {
            reject_unused("[pulse]", "constant", &[("amplitude", pc.amplitude.is_some())])?;
            let values = pc
                .values
                .as_deref()
                .ok_or_else(|| config_err("[pulse] init = \"constant\" requires `values`"))?;
            if values.len() != n_controls {
                return Err(config_err(format!(
                    "[pulse] values has {} entries, expected one per control ({n_controls})",
                    values.len()
                )));
            }
            PulseSet::constant(grid, values).map_err(lower_err)
        }
        "random" => {
            reject_unused("[pulse]", "random", &[("values", pc.values.is_some())])?;
            let a = pc
                .amplitude
                .ok_or_else(|| config_err("[pulse] init = \"random\" requires `amplitude`"))?;
            if !a.is_finite() || a <= 0.0 {
                return Err(config_err(format!("[pulse] amplitude must be positive, got {a}")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let amps = (0..n_controls)
                .map(|_| (0..pc.n_slices).map(|_| rng.random_range(-a..a)).collect())
                .collect();
            PulseSet::new(grid, amps).map_err(lower_err)
        }
        other => Err(config_err(format!(
            "unknown pulse init `{other}`; expected zeros, constant or random"
        ))),
    }
}

fn build_gate(rows: &[Vec<[f64; 2]>], dim: usize) -> Result<CMatrix> {
    if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
        return Err(config_err(format!(
            "[cost] target_gate must be a {dim} x {dim} matrix"
        )));
    }
    Ok(CMatrix::from_fn(dim, dim, |i, j| {
        let [re, im] = rows[i][j];
        Complex64::new(re, im)
    }))
}

pub fn build_mapping(mc: &MappingConfig) -> Result<ControlMapping> {
    match mc.kind.as_str() {
        "clip" => Ok(ControlMapping::Clip { u_max: mc.u_max }),
        "sin" => Ok(ControlMapping::Sin { u_max: mc.u_max }),
        other => Err(config_err(format!("unknown mapping kind `{other}`; expected clip or sin"))),
    }
}

fn build_running(list: &[RunningConfig]) -> Result<Vec<RunningCost>> {
    list.iter()
        .map(|rc| match rc.kind.as_str() {
            "power" => {
                reject_unused("[[cost.running]]", "power", &[("eps", rc.eps.is_some())])?;
                let p_lim = rc
                    .p_lim
                    .ok_or_else(|| config_err("running cost `power` requires `p_lim`"))?;
                let weight = rc
                    .weight
                    .ok_or_else(|| config_err("running cost `power` requires `weight`"))?;
                Ok(RunningCost::Power { p_lim, weight })
            }
            "bandwidth" => {
                reject_unused(
                    "[[cost.running]]",
                    "bandwidth",
                    &[("p_lim", rc.p_lim.is_some()), ("weight", rc.weight.is_some())],
                )?;
                let eps = rc
                    .eps
                    .ok_or_else(|| config_err("running cost `bandwidth` requires `eps`"))?;
                Ok(RunningCost::Bandwidth { eps })
            }
            other => Err(config_err(format!(
                "unknown running cost `{other}`; expected power or bandwidth"
            ))),
        })
        .collect()
}

/// Ensemble members for the rwa_qubit system: every (detuning offset, Rabi
/// scale) pair, uniformly weighted.
fn build_ensemble(ec: &EnsembleConfig, kind: &SystemKindInfo) -> Result<Vec<(Hamiltonian, f64)>> {
    let (delta, axes) = match kind {
        SystemKindInfo::RwaQubit { delta, axes } => (*delta, axes),
        SystemKindInfo::NvGround => {
            return Err(config_err("[cost.ensemble] requires the rwa_qubit system"));
        }
    };
    let detunings = ec.detunings.as_deref().unwrap_or(&[0.0]);
    let scales = ec.rabi_scales.as_deref().unwrap_or(&[1.0]);
    if detunings.is_empty() || scales.is_empty() {
        return Err(config_err("[cost.ensemble] lists must not be empty"));
    }
    let ops = spin_operators(Spin::Half);
    let weight = 1.0 / (detunings.len() * scales.len()) as f64;
    let mut members = Vec::new();
    for &det in detunings {
        for &s in scales {
            let drift = ops.sz.clone() * Complex64::new(delta + det, 0.0);
            let controls = axes
                .iter()
                .map(|&a| ops.axis(a).clone() * Complex64::new(s, 0.0))
                .collect();
            let h = Hamiltonian::new(drift, controls).map_err(lower_err)?;
            members.push((h, weight));
        }
    }
    Ok(members)
}

/// Builds the full cost specification. The mapping is returned separately
/// because it configures the optimizer, not the cost itself.
pub fn build_cost(
    cc: &CostConfig,
    sys: &BuiltSystem,
) -> Result<(CostSpec, Option<ControlMapping>)> {
    let dim = sys.h.dim();
    let terminal = match cc.kind.as_str() {
        "state" => {
            reject_unused(
                "[cost]",
                "state",
                &[
                    ("target_gate", cc.target_gate.is_some()),
                    ("theta0", cc.theta0.is_some()),
                    ("n_meas", cc.n_meas.is_some()),
                    ("fd_step", cc.fd_step.is_some()),
                    ("generator", cc.generator.is_some()),
                ],
            )?;
            let psi0 = cc
                .psi0
                .as_ref()
                .ok_or_else(|| config_err("[cost] kind = \"state\" requires `psi0`"))?;
            let target = cc
                .target
                .as_ref()
                .ok_or_else(|| config_err("[cost] kind = \"state\" requires `target`"))?;
            Terminal::State {
                psi0: build_state(psi0, dim, "[cost] psi0")?,
                target: build_state(target, dim, "[cost] target")?,
                phase_sensitive: cc.phase_sensitive.unwrap_or(false),
            }
        }
        "gate" => {
            reject_unused(
                "[cost]",
                "gate",
                &[
                    ("psi0", cc.psi0.is_some()),
                    ("target", cc.target.is_some()),
                    ("theta0", cc.theta0.is_some()),
                    ("n_meas", cc.n_meas.is_some()),
                    ("fd_step", cc.fd_step.is_some()),
                    ("generator", cc.generator.is_some()),
                ],
            )?;
            let rows = cc
                .target_gate
                .as_deref()
                .ok_or_else(|| config_err("[cost] kind = \"gate\" requires `target_gate`"))?;
            Terminal::Gate {
                target: build_gate(rows, dim)?,
                phase_sensitive: cc.phase_sensitive.unwrap_or(false),
            }
        }
        "fisher" => {
            reject_unused(
                "[cost]",
                "fisher",
                &[
                    ("target", cc.target.is_some()),
                    ("target_gate", cc.target_gate.is_some()),
                    ("phase_sensitive", cc.phase_sensitive.is_some()),
                ],
            )?;
            if !matches!(sys.kind, SystemKindInfo::RwaQubit { .. }) {
                return Err(config_err("[cost] kind = \"fisher\" requires the rwa_qubit system"));
            }
            let psi0 = cc
                .psi0
                .as_ref()
                .ok_or_else(|| config_err("[cost] kind = \"fisher\" requires `psi0`"))?;
            let axis = parse_axis(cc.generator.as_deref().unwrap_or("z"))?;
            let ops = spin_operators(Spin::Half);
            // Projective readout in the computational basis.
            let povm = (0..dim)
                .map(|k| {
                    let e = basis_state(dim, k);
                    CMatrix::from_fn(dim, dim, |i, j| e[i] * e[j].conj())
                })
                .collect();
            let model = QuantumFisherModel {
                generator: ops.axis(axis).clone(),
                psi0: build_state(psi0, dim, "[cost] psi0")?,
                povm,
            };
            let mut options = FisherOptions::default();
            if let Some(step) = cc.fd_step {
                options.fd_step = step;
            }
            Terminal::Fisher {
                model,
                theta0: cc.theta0.unwrap_or(0.0),
                n_meas: cc.n_meas.unwrap_or(1.0),
                options,
            }
        }
        other => Err(config_err(format!(
            "unknown cost kind `{other}`; expected state, gate or fisher"
        )))?,
    };

    let mut spec = CostSpec::new(terminal);
    if let Some(list) = &cc.running {
        spec = spec.with_running(build_running(list)?);
    }
    if let Some(ec) = &cc.ensemble {
        spec = spec.with_ensemble(build_ensemble(ec, &sys.kind)?).map_err(lower_err)?;
    }
    let mapping = cc.mapping.as_ref().map(build_mapping).transpose()?;
    Ok((spec, mapping))
}

/// The optimizer the config asks for, ready to run.
#[derive(Debug, Clone)]
pub enum OptimizerChoice {
    Grape(GrapeOptions),
    Crab { opts: CrabOptions, n_elements: usize, omega_max: Option<f64> },
    Dcrab(DcrabOptions),
}

pub fn build_optimizer(
    oc: &OptimizerConfig,
    mapping: Option<ControlMapping>,
    seed: u64,
) -> Result<OptimizerChoice> {
    let crab_fields = [
        ("budget", oc.budget.is_some()),
        ("n_elements", oc.n_elements.is_some()),
        ("omega_max", oc.omega_max.is_some()),
        ("coeff_step", oc.coeff_step.is_some()),
        ("tol_f", oc.tol_f.is_some()),
        ("tol_x", oc.tol_x.is_some()),
    ];
    let dcrab_fields = [
        ("n_si", oc.n_si.is_some()),
        ("budget_per_si", oc.budget_per_si.is_some()),
    ];
    let grape_fields = [
        ("max_iters", oc.max_iters.is_some()),
        ("step", oc.step.is_some()),
        ("tol_grad", oc.tol_grad.is_some()),
        ("update", oc.update.is_some()),
        ("history", oc.history.is_some()),
    ];
    match oc.kind.as_str() {
        "grape" => {
            reject_unused("[optimizer]", "grape", &crab_fields)?;
            reject_unused("[optimizer]", "grape", &dcrab_fields)?;
            let defaults = GrapeOptions::default();
            let update = match oc.update.as_deref() {
                None | Some("lbfgs") => UpdateRule::Lbfgs {
                    history: oc.history.unwrap_or(10),
                },
                Some("fixed") => {
                    if oc.history.is_some() {
                        return Err(config_err(
                            "[optimizer] `history` applies only to update = \"lbfgs\"",
                        ));
                    }
                    UpdateRule::FixedStep
                }
                Some(other) => {
                    return Err(config_err(format!(
                        "unknown update rule `{other}`; expected lbfgs or fixed"
                    )));
                }
            };
            Ok(OptimizerChoice::Grape(GrapeOptions {
                max_iters: oc.max_iters.unwrap_or(defaults.max_iters),
                step: oc.step.unwrap_or(defaults.step),
                tol_cost: oc.tol_cost.unwrap_or(defaults.tol_cost),
                tol_grad: oc.tol_grad.unwrap_or(defaults.tol_grad),
                update,
                mapping,
            }))
        }
        "crab" => {
            reject_unused("[optimizer]", "crab", &grape_fields)?;
            reject_unused("[optimizer]", "crab", &dcrab_fields)?;
            let defaults = CrabOptions::default();
            Ok(OptimizerChoice::Crab {
                opts: CrabOptions {
                    budget: oc.budget.unwrap_or(defaults.budget),
                    coeff_step: oc.coeff_step.unwrap_or(defaults.coeff_step),
                    tol_cost: oc.tol_cost.unwrap_or(defaults.tol_cost),
                    tol_f: oc.tol_f.unwrap_or(defaults.tol_f),
                    tol_x: oc.tol_x.unwrap_or(defaults.tol_x),
                    mapping,
                },
                n_elements: oc.n_elements.unwrap_or(5),
                omega_max: oc.omega_max,
            })
        }
        "dcrab" => {
            reject_unused("[optimizer]", "dcrab", &grape_fields)?;
            reject_unused("[optimizer]", "dcrab", &[("budget", oc.budget.is_some())])?;
            let defaults = DcrabOptions::default();
            Ok(OptimizerChoice::Dcrab(DcrabOptions {
                n_si: oc.n_si.unwrap_or(defaults.n_si),
                n_elements: oc.n_elements.unwrap_or(defaults.n_elements),
                omega_max: oc.omega_max,
                seed,
                budget_per_si: oc.budget_per_si.unwrap_or(defaults.budget_per_si),
                coeff_step: oc.coeff_step.unwrap_or(defaults.coeff_step),
                tol_cost: oc.tol_cost.unwrap_or(defaults.tol_cost),
                tol_f: oc.tol_f.unwrap_or(defaults.tol_f),
                tol_x: oc.tol_x.unwrap_or(defaults.tol_x),
                mapping,
            }))
        }
        other => Err(config_err(format!(
            "unknown optimizer kind `{other}`; expected grape, crab or dcrab"
        ))),
    }
}

/// Sensing sweep lowered to closures over the sweep parameter.
pub struct BuiltSensing {
    pub gamma: f64,
    pub contrast: f64,
    pub taus: Vec<f64>,
    pub signal: FieldSignal,
    pub envelope: Option<DecoherenceEnvelope>,
    pub protocol: Protocol,
    pub filter: Option<FilterConfig>,
}

#[derive(Debug, Clone, Copy)]
pub enum Protocol {
    Ramsey,
    Echo,
    Cpmg { n: usize },
}

impl Protocol {
    /// Sequence at sweep parameter `tau`.
    pub fn sequence(self, tau: f64) -> nv_qoc::Result<SensingSequence> {
        match self {
            Protocol::Ramsey => SensingSequence::ramsey(tau),
            Protocol::Echo => SensingSequence::echo(tau),
            Protocol::Cpmg { n } => SensingSequence::cpmg(n, tau),
        }
    }
}

pub fn build_sensing(sc: &SensingConfig) -> Result<BuiltSensing> {
    let protocol = match sc.protocol.as_str() {
        "ramsey" => {
            reject_unused("[sensing]", "ramsey", &[("n_pulses", sc.n_pulses.is_some())])?;
            Protocol::Ramsey
        }
        "echo" => {
            reject_unused("[sensing]", "echo", &[("n_pulses", sc.n_pulses.is_some())])?;
            Protocol::Echo
        }
        "cpmg" => {
            let n = sc
                .n_pulses
                .ok_or_else(|| config_err("[sensing] protocol = \"cpmg\" requires `n_pulses`"))?;
            if n == 0 {
                return Err(config_err("[sensing] n_pulses must be positive"));
            }
            Protocol::Cpmg { n }
        }
        other => {
            return Err(config_err(format!(
                "unknown protocol `{other}`; expected ramsey, echo or cpmg"
            )));
        }
    };

    if !(sc.tau_min.is_finite() && sc.tau_max.is_finite()) || sc.tau_min <= 0.0 {
        return Err(config_err("[sensing] tau_min must be positive and finite"));
    }
    if sc.tau_max < sc.tau_min {
        return Err(config_err("[sensing] tau_max must be at least tau_min"));
    }
    if sc.n_tau == 0 {
        return Err(config_err("[sensing] n_tau must be positive"));
    }
    if sc.n_tau > MAX_GRID_POINTS {
        return Err(config_err(format!(
            "[sensing] n_tau must be at most {MAX_GRID_POINTS}, got {}",
            sc.n_tau
        )));
    }
    if sc.n_tau == 1 && sc.tau_max != sc.tau_min {
        return Err(config_err("[sensing] n_tau = 1 requires tau_min = tau_max"));
    }
    let taus: Vec<f64> = if sc.n_tau == 1 {
        vec![sc.tau_min]
    } else {
        let step = (sc.tau_max - sc.tau_min) / (sc.n_tau - 1) as f64;
        (0..sc.n_tau).map(|i| sc.tau_min + i as f64 * step).collect()
    };

    let signal = match sc.signal.kind.as_str() {
        "dc" => {
            reject_unused(
                "[sensing.signal]",
                "dc",
                &[
                    ("amplitude", sc.signal.amplitude.is_some()),
                    ("omega", sc.signal.omega.is_some()),
                    ("phase", sc.signal.phase.is_some()),
                ],
            )?;
            let b = sc
                .signal
                .b
                .ok_or_else(|| config_err("[sensing.signal] kind = \"dc\" requires `b`"))?;
            FieldSignal::Dc { b }
        }
        "ac" => {
            reject_unused("[sensing.signal]", "ac", &[("b", sc.signal.b.is_some())])?;
            let amplitude = sc.signal.amplitude.ok_or_else(|| {
                config_err("[sensing.signal] kind = \"ac\" requires `amplitude`")
            })?;
            let omega = sc
                .signal
                .omega
                .ok_or_else(|| config_err("[sensing.signal] kind = \"ac\" requires `omega`"))?;
            FieldSignal::Ac { amplitude, omega, phase: sc.signal.phase.unwrap_or(0.0) }
        }
        other => {
            return Err(config_err(format!("unknown signal kind `{other}`; expected dc or ac")));
        }
    };

    let contrast = sc.contrast.unwrap_or(1.0);
    if !contrast.is_finite() || contrast <= 0.0 || contrast > 1.0 {
        return Err(config_err(format!("[sensing] contrast must be in (0, 1], got {contrast}")));
    }

    let envelope = sc
        .envelope
        .as_ref()
        .map(|e| DecoherenceEnvelope::new(e.t2_star, e.t2, e.exponent).map_err(lower_err))
        .transpose()?;

    if let Some(f) = &sc.filter {
        if f.n_omega < 2 {
            return Err(config_err("[sensing.filter] n_omega must be at least 2"));
        }
        if f.n_omega > MAX_GRID_POINTS {
            return Err(config_err(format!(
                "[sensing.filter] n_omega must be at most {MAX_GRID_POINTS}, got {}",
                f.n_omega
            )));
        }
        if !(f.omega_min.is_finite() && f.omega_max.is_finite()) || f.omega_max <= f.omega_min {
            return Err(config_err("[sensing.filter] requires omega_min < omega_max"));
        }
        if !f.tau.is_finite() || f.tau <= 0.0 {
            return Err(config_err("[sensing.filter] tau must be positive"));
        }
    }

    Ok(BuiltSensing {
        gamma: sc.gamma.unwrap_or(NV_GAMMA_E),
        contrast,
        taus,
        signal,
        envelope,
        protocol,
        filter: sc.filter.clone(),
    })
}

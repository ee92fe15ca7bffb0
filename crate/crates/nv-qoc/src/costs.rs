//! Cost functionals for pulse optimization.
//!
//! A [`CostSpec`] is one terminal cost (state transfer, gate synthesis or
//! Fisher information) plus optional running costs on the pulse itself,
//! optionally averaged over an ensemble of Hamiltonian variants for
//! robustness. Optimizers evaluate specs through [`evaluate_cost`]; bounded
//! or shaped drives go through a [`ControlMapping`] first.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, ident, max_abs, CMatrix, CVector};
use crate::propagate::{propagate, total_propagator, PulseSet};
use crate::spinsys::Hamiltonian;

/// Infidelity sentinel for a flat Fisher response.
pub const J_FISHER_SENTINEL: f64 = 1e18;

fn check_normalized(v: &CVector) -> Result<()> {
    let norm = v.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

fn check_same_dim(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(Error::DimensionMismatch { expected: a, found: b });
    }
    Ok(())
}

/// Rejects matrices that are not unitary within `tol` (max entry of
/// `U^dag U - 1`).
pub fn check_unitary(m: &CMatrix, tol: f64) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch { expected: m.nrows(), found: m.ncols() });
    }
    let dev = max_abs(&(m.adjoint() * m - ident(m.nrows())));
    if !dev.is_finite() || dev > tol {
        return Err(Error::InvalidParameter { what: "unitarity deviation", value: dev });
    }
    Ok(())
}

/// State-transfer infidelity `1 - |<target|psi>|^2`, insensitive to the
/// global phase of either argument.
pub fn j_state(psi: &CVector, target: &CVector) -> Result<f64> {
    check_same_dim(target.len(), psi.len())?;
    check_normalized(psi)?;
    check_normalized(target)?;
    let overlap = target.dotc(psi);
    Ok((1.0 - overlap.norm_sqr()).max(0.0))
}

/// Phase-sensitive state-transfer cost `1 - Re <target|psi>`; zero only when
/// the states match including their global phase.
pub fn j_state_phase(psi: &CVector, target: &CVector) -> Result<f64> {
    check_same_dim(target.len(), psi.len())?;
    check_normalized(psi)?;
    check_normalized(target)?;
    Ok(1.0 - target.dotc(psi).re)
}

/// Gate infidelity `1 - |Tr(target^dag u)|^2 / N^2`, insensitive to global
/// phase.
pub fn j_gate(u: &CMatrix, target: &CMatrix) -> Result<f64> {
    check_same_dim(target.nrows(), u.nrows())?;
    check_unitary(u, 1e-8)?;
    check_unitary(target, 1e-8)?;
    let n = u.nrows() as f64;
    let tr = crate::linalg::hs_inner(target, u);
    Ok((1.0 - tr.norm_sqr() / (n * n)).max(0.0))
}

/// Phase-sensitive gate cost `1 - Re Tr(target^dag u) / N`.
pub fn j_gate_phase(u: &CMatrix, target: &CMatrix) -> Result<f64> {
    check_same_dim(target.nrows(), u.nrows())?;
    check_unitary(u, 1e-8)?;
    check_unitary(target, 1e-8)?;
    let n = u.nrows() as f64;
    Ok(1.0 - crate::linalg::hs_inner(target, u).re / n)
}

/// Options for the finite-difference Fisher information.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FisherOptions {
    /// Central-difference step on the estimated parameter.
    pub fd_step: f64,
    /// Probabilities below this floor are clamped before dividing.
    pub p_floor: f64,
}

impl Default for FisherOptions {
    fn default() -> Self {
        FisherOptions { fd_step: 1e-4, p_floor: 1e-12 }
    }
}

fn check_distribution(p: &[f64]) -> Result<()> {
    if p.is_empty() {
        return Err(Error::InvalidDistribution { detail: "empty distribution".into() });
    }
    let mut sum = 0.0;
    for &x in p {
        if !x.is_finite() || x < -1e-9 {
            return Err(Error::InvalidDistribution {
                detail: format!("invalid probability {x}"),
            });
        }
        sum += x;
    }
    if (sum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidDistribution {
            detail: format!("probabilities sum to {sum}"),
        });
    }
    Ok(())
}

/// Classical Fisher information `F(theta) = sum_x p_x'(theta)^2 / p_x(theta)`
/// of a parametrized outcome distribution, with the derivative taken by
/// central differences.
pub fn fisher_information<F>(probs: F, theta0: f64, opts: &FisherOptions) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if !opts.fd_step.is_finite() || opts.fd_step <= 0.0 {
        return Err(Error::InvalidParameter { what: "fd_step", value: opts.fd_step });
    }
    if !opts.p_floor.is_finite() || opts.p_floor <= 0.0 {
        return Err(Error::InvalidParameter { what: "p_floor", value: opts.p_floor });
    }
    let p0 = probs(theta0)?;
    let pp = probs(theta0 + opts.fd_step)?;
    let pm = probs(theta0 - opts.fd_step)?;
    check_distribution(&p0)?;
    check_distribution(&pp)?;
    check_distribution(&pm)?;
    if pp.len() != p0.len() || pm.len() != p0.len() {
        return Err(Error::InvalidDistribution {
            detail: "outcome count changed with theta".into(),
        });
    }
    let mut f = 0.0;
    for x in 0..p0.len() {
        let dp = (pp[x] - pm[x]) / (2.0 * opts.fd_step);
        f += dp * dp / p0[x].max(opts.p_floor);
    }
    Ok(f)
}

/// Estimation cost `1 / (n_meas * F)`: the Cramer-Rao variance bound after
/// `n_meas` independent shots. A flat response saturates at
/// [`J_FISHER_SENTINEL`].
pub fn j_fisher<F>(probs: F, theta0: f64, n_meas: f64, opts: &FisherOptions) -> Result<f64>
where
    F: Fn(f64) -> Result<Vec<f64>>,
{
    if !n_meas.is_finite() || n_meas < 1.0 {
        return Err(Error::InvalidParameter { what: "n_meas", value: n_meas });
    }
    let f = fisher_information(probs, theta0, opts)?;
    let j = 1.0 / (n_meas * f);
    Ok(if j.is_finite() && j < J_FISHER_SENTINEL { j } else { J_FISHER_SENTINEL })
}

/// Soft pulse-power penalty: with `P = sum_k u_k^2 dt`, the cost is
/// `weight * max(0, P / p_lim - 1)^2`. Zero while the power stays under the
/// budget, quadratic in the relative excess above it.
pub fn j_power(u: &[f64], dt: f64, p_lim: f64, weight: f64) -> Result<f64> {
    if !p_lim.is_finite() || p_lim <= 0.0 {
        return Err(Error::InvalidParameter { what: "p_lim", value: p_lim });
    }
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter { what: "dt", value: dt });
    }
    let p: f64 = u.iter().map(|x| x * x * dt).sum();
    let excess = (p / p_lim - 1.0).max(0.0);
    Ok(weight * excess * excess)
}

/// Discrete bandwidth penalty `eps * sum_k ((u_{k+1} - u_k) / dt)^2 * dt`,
/// penalizing fast slice-to-slice changes.
pub fn j_bandwidth(u: &[f64], dt: f64, eps: f64) -> Result<f64> {
    if !dt.is_finite() || dt <= 0.0 {
        return Err(Error::InvalidParameter { what: "dt", value: dt });
    }
    let mut acc = 0.0;
    for k in 0..u.len().saturating_sub(1) {
        let d = u[k + 1] - u[k];
        acc += d * d;
    }
    Ok(eps * acc / dt)
}

/// Pointwise map from optimizer variables to physical drive amplitudes.
#[derive(Debug, Clone, PartialEq)]
pub enum ControlMapping {
    /// Hard clamp to `[-u_max, u_max]`.
    Clip { u_max: f64 },
    /// Smooth bound `u_max * sin(u)`; keeps gradients alive at the bound.
    Sin { u_max: f64 },
    /// Fixed envelope `gamma_k * u_k`, e.g. for forcing pulses to zero at the
    /// edges. The envelope is sampled on the pulse grid.
    Shape { envelope: Vec<f64> },
}

impl ControlMapping {
    fn validate(&self, n_slices: usize) -> Result<()> {
        match self {
            ControlMapping::Clip { u_max } | ControlMapping::Sin { u_max } => {
                if !u_max.is_finite() || *u_max <= 0.0 {
                    return Err(Error::InvalidParameter { what: "u_max", value: *u_max });
                }
            }
            ControlMapping::Shape { envelope } => {
                if envelope.len() != n_slices {
                    return Err(Error::GridMismatch {
                        expected: n_slices,
                        found: envelope.len(),
                    });
                }
                if envelope.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFinite { what: "shape envelope" });
                }
            }
        }
        Ok(())
    }

    /// Physical amplitude for optimizer value `u` at slice `k`.
    pub fn apply_sample(&self, k: usize, u: f64) -> f64 {
        match self {
            ControlMapping::Clip { u_max } => u.clamp(-u_max, *u_max),
            ControlMapping::Sin { u_max } => u_max * u.sin(),
            ControlMapping::Shape { envelope } => envelope[k] * u,
        }
    }

    /// Derivative of [`Self::apply_sample`] with respect to `u`. The clip
    /// derivative is zero strictly outside the bound.
    pub fn derivative_sample(&self, k: usize, u: f64) -> f64 {
        match self {
            ControlMapping::Clip { u_max } => {
                if u.abs() <= *u_max {
                    1.0
                } else {
                    0.0
                }
            }
            ControlMapping::Sin { u_max } => u_max * u.cos(),
            ControlMapping::Shape { envelope } => envelope[k],
        }
    }
}

/// Applies a mapping to every control of a pulse set, returning the physical
/// amplitudes.
pub fn map_controls(pulses: &PulseSet, mapping: &ControlMapping) -> Result<PulseSet> {
    mapping.validate(pulses.n_slices())?;
    let amps = pulses
        .amplitudes()
        .iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .map(|(k, &u)| mapping.apply_sample(k, u))
                .collect()
        })
        .collect();
    PulseSet::new(pulses.grid(), amps)
}

/// Projective or general measurement attached to a pulse-dependent evolution,
/// with the estimated parameter entering the drift linearly:
/// `H(theta) = drift + theta * generator + controls`.
#[derive(Debug, Clone)]
pub struct QuantumFisherModel {
    /// Hermitian operator multiplying the estimated parameter.
    pub generator: CMatrix,
    /// Initial state before the pulse.
    pub psi0: CVector,
    /// Positive operators summing to the identity; one outcome each.
    pub povm: Vec<CMatrix>,
}

impl QuantumFisherModel {
    fn validate(&self, dim: usize) -> Result<()> {
        check_hermitian(&self.generator)?;
        check_same_dim(dim, self.generator.nrows())?;
        check_same_dim(dim, self.psi0.len())?;
        check_normalized(&self.psi0)?;
        if self.povm.is_empty() {
            return Err(Error::InvalidDistribution { detail: "empty POVM".into() });
        }
        let mut sum = CMatrix::zeros(dim, dim);
        for e in &self.povm {
            check_hermitian(e)?;
            check_same_dim(dim, e.nrows())?;
            sum += e;
        }
        let dev = max_abs(&(sum - ident(dim)));
        if dev > 1e-8 {
            return Err(Error::InvalidDistribution {
                detail: format!("POVM does not resolve the identity (deviation {dev:e})"),
            });
        }
        Ok(())
    }

    /// Outcome distribution after evolving under `sys` with `theta` coupled
    /// through the generator.
    pub fn probabilities(
        &self,
        sys: &Hamiltonian,
        pulses: &PulseSet,
        theta: f64,
    ) -> Result<Vec<f64>> {
        let drift = sys.drift() + &self.generator * Complex64::new(theta, 0.0);
        let shifted = Hamiltonian::new(drift, sys.controls().to_vec())?;
        let traj = propagate(&shifted, pulses, &self.psi0)?;
        let psi = traj.final_state();
        Ok(self
            .povm
            .iter()
            .map(|e| (psi.dotc(&(e * psi))).re.max(0.0))
            .collect())
    }
}

/// Terminal cost selector.
#[derive(Debug, Clone)]
pub enum Terminal {
    /// Transfer `psi0` to `target`; modulus overlap by default.
    State {
        psi0: CVector,
        target: CVector,
        phase_sensitive: bool,
    },
    /// Synthesize the unitary `target`.
    Gate { target: CMatrix, phase_sensitive: bool },
    /// Maximize Fisher information of a measurement at working point
    /// `theta0`, expressed as the Cramer-Rao cost `1 / (n_meas * F)`.
    Fisher {
        model: QuantumFisherModel,
        theta0: f64,
        n_meas: f64,
        options: FisherOptions,
    },
}

/// Running (pulse-dependent) cost selector; each entry is summed over all
/// controls.
#[derive(Debug, Clone, PartialEq)]
pub enum RunningCost {
    Power { p_lim: f64, weight: f64 },
    Bandwidth { eps: f64 },
}

/// A full optimization objective.
#[derive(Debug, Clone)]
pub struct CostSpec {
    pub terminal: Terminal,
    pub running: Vec<RunningCost>,
    /// Hamiltonian variants with weights for robust (ensemble-averaged)
    /// optimization. Empty means: evaluate on the base system alone.
    ensemble: Vec<(Hamiltonian, f64)>,
}

impl CostSpec {
    pub fn new(terminal: Terminal) -> CostSpec {
        CostSpec { terminal, running: Vec::new(), ensemble: Vec::new() }
    }

    pub fn with_running(mut self, running: Vec<RunningCost>) -> CostSpec {
        self.running = running;
        self
    }

    /// Attaches an ensemble of system variants. Weights must be positive and
    /// sum to 1 within 1e-12.
    pub fn with_ensemble(mut self, members: Vec<(Hamiltonian, f64)>) -> Result<CostSpec> {
        if members.is_empty() {
            return Err(Error::InvalidEnsemble { detail: "empty member list".into() });
        }
        let mut sum = 0.0;
        let dim = members[0].0.dim();
        let nc = members[0].0.n_controls();
        for (h, w) in &members {
            if !w.is_finite() || *w <= 0.0 {
                return Err(Error::InvalidEnsemble { detail: format!("weight {w}") });
            }
            if h.dim() != dim || h.n_controls() != nc {
                return Err(Error::InvalidEnsemble {
                    detail: "members differ in dimension or control count".into(),
                });
            }
            sum += w;
        }
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidEnsemble {
                detail: format!("weights sum to {sum}, expected 1"),
            });
        }
        self.ensemble = members;
        Ok(self)
    }

    pub fn ensemble(&self) -> &[(Hamiltonian, f64)] {
        &self.ensemble
    }

    /// Systems the terminal cost is evaluated on, with weights: the ensemble
    /// if present, otherwise the base system with weight 1.
    pub(crate) fn members<'a>(&'a self, sys: &'a Hamiltonian) -> Vec<(&'a Hamiltonian, f64)> {
        if self.ensemble.is_empty() {
            vec![(sys, 1.0)]
        } else {
            self.ensemble.iter().map(|(h, w)| (h, *w)).collect()
        }
    }
}

/// Terminal cost of a single system variant under the given physical pulses.
fn terminal_cost(terminal: &Terminal, sys: &Hamiltonian, pulses: &PulseSet) -> Result<f64> {
    match terminal {
        Terminal::State { psi0, target, phase_sensitive } => {
            let traj = propagate(sys, pulses, psi0)?;
            if *phase_sensitive {
                j_state_phase(traj.final_state(), target)
            } else {
                j_state(traj.final_state(), target)
            }
        }
        Terminal::Gate { target, phase_sensitive } => {
            let u = total_propagator(sys, pulses)?;
            if *phase_sensitive {
                j_gate_phase(&u, target)
            } else {
                j_gate(&u, target)
            }
        }
        Terminal::Fisher { model, theta0, n_meas, options } => {
            model.validate(sys.dim())?;
            j_fisher(
                |theta| model.probabilities(sys, pulses, theta),
                *theta0,
                *n_meas,
                options,
            )
        }
    }
}

/// Running cost of the physical pulses (independent of the system).
pub(crate) fn running_cost(running: &[RunningCost], pulses: &PulseSet) -> Result<f64> {
    let dt = pulses.dt();
    let mut acc = 0.0;
    for rc in running {
        for row in pulses.amplitudes() {
            acc += match rc {
                RunningCost::Power { p_lim, weight } => j_power(row, dt, *p_lim, *weight)?,
                RunningCost::Bandwidth { eps } => j_bandwidth(row, dt, *eps)?,
            };
        }
    }
    Ok(acc)
}

/// Full objective: ensemble-weighted terminal cost plus running costs.
///
/// `pulses` are physical amplitudes; apply a [`ControlMapping`] beforehand if
/// the optimizer works in mapped variables.
pub fn evaluate_cost(spec: &CostSpec, sys: &Hamiltonian, pulses: &PulseSet) -> Result<f64> {
    let mut j = 0.0;
    for (h, w) in spec.members(sys) {
        j += w * terminal_cost(&spec.terminal, h, pulses)?;
    }
    j += running_cost(&spec.running, pulses)?;
    Ok(j)
}

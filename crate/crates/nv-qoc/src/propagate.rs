//! Piecewise-constant time evolution.
//!
//! A pulse is a staircase: on each of `n_slices` equal slices of `[0, T]`
//! every control amplitude is constant, so the slice propagator is the exact
//! matrix exponential `exp(-i dt H_k)` with
//! `H_k = drift + sum_i u_i[k] * control_i`. Exponentials are computed from
//! the Hermitian eigendecomposition; the eigensystem is kept around because
//! exact control derivatives reuse it.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, eigh, unitary_from_eigh, CMatrix, CVector};
use crate::spinsys::Hamiltonian;

/// Uniform time grid over `[0, t_final]` with `n_slices` equal slices.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    t_final: f64,
    n_slices: usize,
}

impl TimeGrid {
    pub fn new(t_final: f64, n_slices: usize) -> Result<TimeGrid> {
        if !t_final.is_finite() || t_final <= 0.0 {
            return Err(Error::InvalidParameter { what: "t_final", value: t_final });
        }
        if n_slices == 0 {
            return Err(Error::InvalidParameter { what: "n_slices", value: 0.0 });
        }
        Ok(TimeGrid { t_final, n_slices })
    }

    pub fn t_final(&self) -> f64 {
        self.t_final
    }

    pub fn n_slices(&self) -> usize {
        self.n_slices
    }

    pub fn dt(&self) -> f64 {
        self.t_final / self.n_slices as f64
    }

    /// Slice midpoints, the natural sampling points for a staircase
    /// approximation of a smooth waveform.
    pub fn midpoints(&self) -> Vec<f64> {
        let dt = self.dt();
        (0..self.n_slices).map(|k| (k as f64 + 0.5) * dt).collect()
    }

    /// Slice boundaries 0, dt, ..., t_final (n_slices + 1 points).
    pub fn edges(&self) -> Vec<f64> {
        let dt = self.dt();
        let mut e: Vec<f64> = (0..self.n_slices).map(|k| k as f64 * dt).collect();
        e.push(self.t_final);
        e
    }
}

/// Piecewise-constant amplitudes for every control of a Hamiltonian.
/// `amplitudes[i][k]` is control `i` during slice `k`.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSet {
    grid: TimeGrid,
    amplitudes: Vec<Vec<f64>>,
}

impl PulseSet {
    pub fn new(grid: TimeGrid, amplitudes: Vec<Vec<f64>>) -> Result<PulseSet> {
        for amp in &amplitudes {
            if amp.len() != grid.n_slices() {
                return Err(Error::GridMismatch {
                    expected: grid.n_slices(),
                    found: amp.len(),
                });
            }
            if amp.iter().any(|u| !u.is_finite()) {
                return Err(Error::NonFinite { what: "pulse amplitudes" });
            }
        }
        Ok(PulseSet { grid, amplitudes })
    }

    /// One constant value per control, held over the whole grid.
    pub fn constant(grid: TimeGrid, values: &[f64]) -> Result<PulseSet> {
        let amps = values
            .iter()
            .map(|&v| vec![v; grid.n_slices()])
            .collect();
        PulseSet::new(grid, amps)
    }

    pub fn zeros(grid: TimeGrid, n_controls: usize) -> PulseSet {
        PulseSet {
            grid,
            amplitudes: vec![vec![0.0; grid.n_slices()]; n_controls],
        }
    }

    pub fn grid(&self) -> TimeGrid {
        self.grid
    }

    pub fn n_controls(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn n_slices(&self) -> usize {
        self.grid.n_slices()
    }

    pub fn dt(&self) -> f64 {
        self.grid.dt()
    }

    pub fn amplitudes(&self) -> &[Vec<f64>] {
        &self.amplitudes
    }

    /// Amplitudes of every control during slice `k`.
    pub fn slice_amps(&self, k: usize) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a[k]).collect()
    }

    pub(crate) fn amplitudes_mut(&mut self) -> &mut [Vec<f64>] {
        &mut self.amplitudes
    }
}

/// States at every slice boundary: `states[k]` is the state at `times[k]`,
/// with `times[0] = 0` and `times[n_slices] = t_final`.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<CVector>,
}

impl Trajectory {
    pub fn final_state(&self) -> &CVector {
        self.states.last().expect("trajectory has at least the initial state")
    }
}

/// Exact propagator `exp(-i dt h)` of a constant Hermitian generator.
pub fn expm_slice(h: &CMatrix, dt: f64) -> Result<CMatrix> {
    check_hermitian(h)?;
    if !dt.is_finite() || dt < 0.0 {
        return Err(Error::InvalidParameter { what: "dt", value: dt });
    }
    let (w, v) = eigh(h);
    Ok(unitary_from_eigh(&w, &v, dt))
}

/// Slice propagator with the eigensystem it was built from.
#[derive(Debug, Clone)]
pub(crate) struct SlicePropagator {
    pub u: CMatrix,
    pub evals: DVector<f64>,
    pub evecs: CMatrix,
}

pub(crate) fn build_slice(h: &Hamiltonian, amps: &[f64], dt: f64) -> SlicePropagator {
    let total = h.total(amps);
    let (evals, evecs) = eigh(&total);
    let u = unitary_from_eigh(&evals, &evecs, dt);
    SlicePropagator { u, evals, evecs }
}

fn check_compatible(h: &Hamiltonian, pulses: &PulseSet) -> Result<()> {
    if pulses.n_controls() != h.n_controls() {
        return Err(Error::DimensionMismatch {
            expected: h.n_controls(),
            found: pulses.n_controls(),
        });
    }
    Ok(())
}

pub(crate) fn check_state(h: &Hamiltonian, psi0: &CVector) -> Result<()> {
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch {
            expected: h.dim(),
            found: psi0.len(),
        });
    }
    let norm = psi0.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// All slice propagators of a pulse, earliest first.
pub(crate) fn slice_propagators(h: &Hamiltonian, pulses: &PulseSet) -> Result<Vec<SlicePropagator>> {
    check_compatible(h, pulses)?;
    let dt = pulses.dt();
    Ok((0..pulses.n_slices())
        .map(|k| build_slice(h, &pulses.slice_amps(k), dt))
        .collect())
}

/// Evolves `psi0` through the pulse, recording the state at every slice
/// boundary.
pub fn propagate(h: &Hamiltonian, pulses: &PulseSet, psi0: &CVector) -> Result<Trajectory> {
    check_compatible(h, pulses)?;
    check_state(h, psi0)?;
    let dt = pulses.dt();
    let n = pulses.n_slices();
    let mut states = Vec::with_capacity(n + 1);
    states.push(psi0.clone());
    for k in 0..n {
        let sp = build_slice(h, &pulses.slice_amps(k), dt);
        let next = &sp.u * states.last().unwrap();
        states.push(next);
    }
    Ok(Trajectory { times: pulses.grid().edges(), states })
}

/// Total propagator of the pulse: the ordered product of slice propagators,
/// earliest slice applied first (rightmost factor).
pub fn total_propagator(h: &Hamiltonian, pulses: &PulseSet) -> Result<CMatrix> {
    check_compatible(h, pulses)?;
    let dt = pulses.dt();
    let mut u = crate::linalg::ident(h.dim());
    for k in 0..pulses.n_slices() {
        let sp = build_slice(h, &pulses.slice_amps(k), dt);
        u = &sp.u * u;
    }
    Ok(u)
}

//! Gradient-based pulse optimization.
//!
//! The gradient of a terminal cost with respect to every slice amplitude
//! comes from one forward and one backward sweep over the slice propagators.
//! The derivative of each slice exponential is exact: with
//! `H = V diag(w) V^dag` the directional derivative of `exp(-i dt H)` along
//! `E` is `V (K . (V^dag E V)) V^dag`, where `.` is the entrywise product and
//!
//! `K_ab = (exp(-i dt w_a) - exp(-i dt w_b)) / (w_a - w_b)`
//!
//! with the limit `-i dt exp(-i dt w_a)` on (numerically) coincident
//! eigenvalues. No step-size approximation enters; agreement with finite
//! differences is a test criterion, not a tuning knob.

use num_complex::Complex64;

use crate::costs::{evaluate_cost, map_controls, running_cost, ControlMapping, CostSpec, Terminal};
use crate::error::{Error, Result};
use crate::linalg::{CMatrix, CVector};
use crate::propagate::{check_state, slice_propagators, PulseSet};
use crate::report::{OptimizationReport, StopReason};
use crate::spinsys::Hamiltonian;

/// Relative eigenvalue gap below which the divided difference switches to its
/// analytic limit.
const DEGENERACY_TOL: f64 = 1e-12;

/// Armijo sufficient-decrease slope for the backtracking line search.
const ARMIJO_C1: f64 = 1e-4;

/// Shrink factor between backtracking trials.
const BACKTRACK_SHRINK: f64 = 0.5;

/// Cost and exact gradient at one point in control space.
#[derive(Debug, Clone)]
pub struct GradientReport {
    pub cost: f64,
    /// `grad[i][k]`: derivative of the cost with respect to the raw (pre
    /// mapping) amplitude of control `i` in slice `k`.
    pub grad: Vec<Vec<f64>>,
    /// Max relative deviation against central finite differences, when a
    /// check was requested.
    pub fd_check: Option<f64>,
}

/// Entrywise divided-difference kernel of `exp(-i dt w)`.
fn frechet_kernel(w: &nalgebra::DVector<f64>, dt: f64) -> CMatrix {
    let n = w.len();
    let wmax = w.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let phases: Vec<Complex64> = w.iter().map(|&x| Complex64::from_polar(1.0, -x * dt)).collect();
    let mut k = CMatrix::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            let gap = w[a] - w[b];
            k[(a, b)] = if gap.abs() <= DEGENERACY_TOL * wmax {
                Complex64::new(0.0, -dt) * phases[a]
            } else {
                (phases[a] - phases[b]) / Complex64::new(gap, 0.0)
            };
        }
    }
    k
}

/// Derivative of the slice overlap contribution for a state cost:
/// `<chi| dU/du |phi>` for every control, given the slice eigensystem.
fn state_slice_derivs(
    sys: &Hamiltonian,
    evals: &nalgebra::DVector<f64>,
    evecs: &CMatrix,
    dt: f64,
    chi: &CVector,
    phi: &CVector,
) -> Vec<Complex64> {
    let kernel = frechet_kernel(evals, dt);
    let chi_e = evecs.adjoint() * chi; // coordinates in the eigenbasis
    let phi_e = evecs.adjoint() * phi;
    sys.controls()
        .iter()
        .map(|ctrl| {
            let g = evecs.adjoint() * ctrl * evecs;
            let mut acc = Complex64::ZERO;
            for a in 0..evals.len() {
                for b in 0..evals.len() {
                    acc += chi_e[a].conj() * kernel[(a, b)] * g[(a, b)] * phi_e[b];
                }
            }
            acc
        })
        .collect()
}

/// Derivative of the slice overlap contribution for a gate cost:
/// `Tr(M dU/du)` for every control, given the slice eigensystem.
fn gate_slice_derivs(
    sys: &Hamiltonian,
    evals: &nalgebra::DVector<f64>,
    evecs: &CMatrix,
    dt: f64,
    m: &CMatrix,
) -> Vec<Complex64> {
    let kernel = frechet_kernel(evals, dt);
    let w = evecs.adjoint() * m * evecs;
    sys.controls()
        .iter()
        .map(|ctrl| {
            let g = evecs.adjoint() * ctrl * evecs;
            let mut acc = Complex64::ZERO;
            for a in 0..evals.len() {
                for b in 0..evals.len() {
                    acc += w[(b, a)] * kernel[(a, b)] * g[(a, b)];
                }
            }
            acc
        })
        .collect()
}

/// Terminal-cost gradient for one system variant, in physical amplitudes.
/// Returns (cost, grad[control][slice]).
fn terminal_gradient(
    terminal: &Terminal,
    sys: &Hamiltonian,
    physical: &PulseSet,
) -> Result<(f64, Vec<Vec<f64>>)> {
    let n = physical.n_slices();
    let m = sys.n_controls();
    let dt = physical.dt();
    let slices = slice_propagators(sys, physical)?;
    let mut grad = vec![vec![0.0; n]; m];

    match terminal {
        Terminal::State { psi0, target, phase_sensitive } => {
            check_state(sys, psi0)?;
            check_state(sys, target)?;
            // Forward states phi_k before slice k.
            let mut phis = Vec::with_capacity(n + 1);
            phis.push(psi0.clone());
            for sp in &slices {
                let next = &sp.u * phis.last().unwrap();
                phis.push(next);
            }
            let overlap = target.dotc(&phis[n]);
            // Backward costates chi_k = (U_{n-1} ... U_{k+1})^dag |target>.
            let mut chi = target.clone();
            let mut derivs = vec![vec![Complex64::ZERO; n]; m];
            for k in (0..n).rev() {
                let d = state_slice_derivs(sys, &slices[k].evals, &slices[k].evecs, dt, &chi, &phis[k]);
                for (i, dc) in d.into_iter().enumerate() {
                    derivs[i][k] = dc;
                }
                chi = slices[k].u.adjoint() * chi;
            }
            let cost = if *phase_sensitive {
                1.0 - overlap.re
            } else {
                (1.0 - overlap.norm_sqr()).max(0.0)
            };
            for i in 0..m {
                for k in 0..n {
                    grad[i][k] = if *phase_sensitive {
                        -derivs[i][k].re
                    } else {
                        -2.0 * (overlap.conj() * derivs[i][k]).re
                    };
                }
            }
            Ok((cost, grad))
        }
        Terminal::Gate { target, phase_sensitive } => {
            crate::costs::check_unitary(target, 1e-8)?;
            if target.nrows() != sys.dim() {
                return Err(Error::DimensionMismatch {
                    expected: sys.dim(),
                    found: target.nrows(),
                });
            }
            let dim = sys.dim() as f64;
            // Forward partial products P_k = U_{k-1} ... U_0.
            let mut fwd = Vec::with_capacity(n + 1);
            fwd.push(crate::linalg::ident(sys.dim()));
            for sp in &slices {
                let next = &sp.u * fwd.last().unwrap();
                fwd.push(next);
            }
            let overlap = crate::linalg::hs_inner(target, &fwd[n]);
            // Backward products B_k = target^dag U_{n-1} ... U_{k+1}.
            let mut back = target.adjoint();
            let mut derivs = vec![vec![Complex64::ZERO; n]; m];
            for k in (0..n).rev() {
                let mk = &fwd[k] * &back; // Tr(B_k dU P_k) = Tr((P_k B_k) dU)
                let d = gate_slice_derivs(sys, &slices[k].evals, &slices[k].evecs, dt, &mk);
                for (i, dc) in d.into_iter().enumerate() {
                    derivs[i][k] = dc;
                }
                back *= &slices[k].u;
            }
            let cost = if *phase_sensitive {
                1.0 - overlap.re / dim
            } else {
                (1.0 - overlap.norm_sqr() / (dim * dim)).max(0.0)
            };
            for i in 0..m {
                for k in 0..n {
                    grad[i][k] = if *phase_sensitive {
                        -derivs[i][k].re / dim
                    } else {
                        -2.0 * (overlap.conj() * derivs[i][k]).re / (dim * dim)
                    };
                }
            }
            Ok((cost, grad))
        }
        Terminal::Fisher { .. } => Err(Error::GradientUnavailable { cost: "Fisher information" }),
    }
}

/// Gradient of the running costs with respect to physical amplitudes.
fn running_gradient(spec: &CostSpec, physical: &PulseSet) -> Result<Vec<Vec<f64>>> {
    let n = physical.n_slices();
    let dt = physical.dt();
    let mut grad = vec![vec![0.0; n]; physical.n_controls()];
    for rc in &spec.running {
        for (i, row) in physical.amplitudes().iter().enumerate() {
            match rc {
                crate::costs::RunningCost::Power { p_lim, weight } => {
                    let p: f64 = row.iter().map(|u| u * u * dt).sum();
                    let excess = (p / p_lim - 1.0).max(0.0);
                    if excess > 0.0 {
                        for k in 0..n {
                            grad[i][k] += 4.0 * weight * excess * row[k] * dt / p_lim;
                        }
                    }
                }
                crate::costs::RunningCost::Bandwidth { eps } => {
                    for k in 0..n {
                        let mut d = 0.0;
                        if k > 0 {
                            d += 2.0 * (row[k] - row[k - 1]);
                        }
                        if k + 1 < n {
                            d -= 2.0 * (row[k + 1] - row[k]);
                        }
                        grad[i][k] += eps * d / dt;
                    }
                }
            }
        }
    }
    Ok(grad)
}

/// Exact cost and gradient of `spec` at the raw amplitudes `pulses`, with an
/// optional control mapping between raw and physical values.
pub fn grape_gradient(
    sys: &Hamiltonian,
    pulses: &PulseSet,
    spec: &CostSpec,
    mapping: Option<&ControlMapping>,
) -> Result<GradientReport> {
    let physical = match mapping {
        Some(m) => map_controls(pulses, m)?,
        None => pulses.clone(),
    };
    let n = physical.n_slices();
    let m = physical.n_controls();

    let mut cost = 0.0;
    let mut grad = vec![vec![0.0; n]; m];
    for (h, w) in spec.members(sys) {
        let (c, g) = terminal_gradient(&spec.terminal, h, &physical)?;
        cost += w * c;
        for (gi, ti) in grad.iter_mut().zip(&g) {
            for (acc, t) in gi.iter_mut().zip(ti) {
                *acc += w * t;
            }
        }
    }
    cost += running_cost(&spec.running, &physical)?;
    let rg = running_gradient(spec, &physical)?;
    for (gi, ri) in grad.iter_mut().zip(&rg) {
        for (g, r) in gi.iter_mut().zip(ri) {
            *g += r;
        }
    }

    // Chain rule through the mapping, back to raw amplitudes.
    if let Some(mp) = mapping {
        for (gi, ui) in grad.iter_mut().zip(pulses.amplitudes()) {
            for (k, (g, &u)) in gi.iter_mut().zip(ui).enumerate() {
                *g *= mp.derivative_sample(k, u);
            }
        }
    }

    Ok(GradientReport { cost, grad, fd_check: None })
}

/// Central-difference gradient of the full objective; the reference
/// implementation the exact gradient is tested against.
pub fn finite_difference_gradient(
    sys: &Hamiltonian,
    pulses: &PulseSet,
    spec: &CostSpec,
    mapping: Option<&ControlMapping>,
    step: f64,
) -> Result<Vec<Vec<f64>>> {
    if !step.is_finite() || step <= 0.0 {
        return Err(Error::InvalidParameter { what: "fd step", value: step });
    }
    let cost_at = |p: &PulseSet| -> Result<f64> {
        let physical = match mapping {
            Some(m) => map_controls(p, m)?,
            None => p.clone(),
        };
        evaluate_cost(spec, sys, &physical)
    };
    let mut grad = vec![vec![0.0; pulses.n_slices()]; pulses.n_controls()];
    for (i, gi) in grad.iter_mut().enumerate() {
        for (k, g) in gi.iter_mut().enumerate() {
            let mut plus = pulses.clone();
            plus.amplitudes_mut()[i][k] += step;
            let mut minus = pulses.clone();
            minus.amplitudes_mut()[i][k] -= step;
            *g = (cost_at(&plus)? - cost_at(&minus)?) / (2.0 * step);
        }
    }
    Ok(grad)
}

/// [`grape_gradient`] with the finite-difference cross-check filled in:
/// `fd_check` is the max deviation between the two gradients relative to the
/// infinity norm of the finite-difference one.
pub fn grape_gradient_checked(
    sys: &Hamiltonian,
    pulses: &PulseSet,
    spec: &CostSpec,
    mapping: Option<&ControlMapping>,
    fd_step: f64,
) -> Result<GradientReport> {
    let mut report = grape_gradient(sys, pulses, spec, mapping)?;
    let fd = finite_difference_gradient(sys, pulses, spec, mapping, fd_step)?;
    let mut scale = 0.0f64;
    for row in &fd {
        for g in row {
            scale = scale.max(g.abs());
        }
    }
    let mut dev = 0.0f64;
    for (ra, rf) in report.grad.iter().zip(&fd) {
        for (a, f) in ra.iter().zip(rf) {
            dev = dev.max((a - f).abs());
        }
    }
    report.fd_check = Some(if scale > 0.0 { dev / scale } else { dev });
    Ok(report)
}

/// Update rule for the accepted search direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateRule {
    /// Steepest descent with backtracking.
    FixedStep,
    /// Limited-memory BFGS with the given history length, falling back to
    /// steepest descent whenever the model direction fails to descend.
    Lbfgs { history: usize },
}

#[derive(Debug, Clone)]
pub struct GrapeOptions {
    pub max_iters: usize,
    /// Initial trial step for the backtracking line search.
    pub step: f64,
    /// Stop once the cost is at or below this value.
    pub tol_cost: f64,
    /// Stop once the gradient infinity norm is at or below this value.
    pub tol_grad: f64,
    pub update: UpdateRule,
    pub mapping: Option<ControlMapping>,
}

impl Default for GrapeOptions {
    fn default() -> Self {
        GrapeOptions {
            max_iters: 100,
            step: 1.0,
            tol_cost: 1e-12,
            tol_grad: 1e-10,
            update: UpdateRule::Lbfgs { history: 10 },
            mapping: None,
        }
    }
}

fn flatten(rows: &[Vec<f64>]) -> Vec<f64> {
    rows.iter().flatten().copied().collect()
}

fn unflatten(flat: &[f64], like: &PulseSet) -> PulseSet {
    let n = like.n_slices();
    let amps: Vec<Vec<f64>> = (0..like.n_controls())
        .map(|i| flat[i * n..(i + 1) * n].to_vec())
        .collect();
    PulseSet::new(like.grid(), amps).expect("shape preserved")
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(a: &[f64]) -> f64 {
    a.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// L-BFGS two-loop recursion; returns the descent direction for gradient `g`.
fn lbfgs_direction(g: &[f64], s_hist: &[Vec<f64>], y_hist: &[Vec<f64>]) -> Vec<f64> {
    let mut q = g.to_vec();
    let k = s_hist.len();
    let mut alphas = vec![0.0; k];
    for j in (0..k).rev() {
        let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
        alphas[j] = rho * dot(&s_hist[j], &q);
        for (qi, yi) in q.iter_mut().zip(&y_hist[j]) {
            *qi -= alphas[j] * yi;
        }
    }
    if k > 0 {
        let last = k - 1;
        let gamma = dot(&s_hist[last], &y_hist[last]) / dot(&y_hist[last], &y_hist[last]);
        for qi in q.iter_mut() {
            *qi *= gamma;
        }
    }
    for j in 0..k {
        let rho = 1.0 / dot(&y_hist[j], &s_hist[j]);
        let beta = rho * dot(&y_hist[j], &q);
        for (qi, si) in q.iter_mut().zip(&s_hist[j]) {
            *qi += (alphas[j] - beta) * si;
        }
    }
    for qi in q.iter_mut() {
        *qi = -*qi;
    }
    q
}

/// Iterative gradient descent on the raw amplitudes of `init`.
///
/// Each iteration takes the exact gradient, picks a direction by the
/// configured update rule and backtracks until the Armijo condition holds.
/// The accepted cost sequence is therefore non-increasing. The report carries
/// the physical (mapped) final pulses.
pub fn grape_optimize(
    sys: &Hamiltonian,
    init: &PulseSet,
    spec: &CostSpec,
    opts: &GrapeOptions,
) -> Result<OptimizationReport> {
    if !opts.step.is_finite() || opts.step <= 0.0 {
        return Err(Error::InvalidParameter { what: "step", value: opts.step });
    }
    let mut x = init.clone();
    let mut report = grape_gradient(sys, &x, spec, opts.mapping.as_ref())?;
    let mut evaluations = 1usize;
    let mut cost_trace = vec![report.cost];
    let mut s_hist: Vec<Vec<f64>> = Vec::new();
    let mut y_hist: Vec<Vec<f64>> = Vec::new();
    let mut iterations = 0usize;
    // Trial step carried between steepest-descent iterations; it doubles
    // after a clean accept so poorly scaled problems do not crawl.
    let mut t_init = opts.step;

    let stop_reason = loop {
        if report.cost <= opts.tol_cost {
            break StopReason::CostTolerance;
        }
        let g = flatten(&report.grad);
        if inf_norm(&g) <= opts.tol_grad {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iters {
            break StopReason::MaxIterations;
        }

        let mut dir = match opts.update {
            UpdateRule::FixedStep => g.iter().map(|v| -v).collect::<Vec<f64>>(),
            UpdateRule::Lbfgs { .. } => lbfgs_direction(&g, &s_hist, &y_hist),
        };
        let mut slope = dot(&g, &dir);
        if slope >= 0.0 {
            // Model direction is not a descent direction; restart memory.
            s_hist.clear();
            y_hist.clear();
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&g, &dir);
        }

        let x_flat = flatten(x.amplitudes());
        let mut t = match opts.update {
            UpdateRule::FixedStep => t_init,
            // Quasi-Newton directions are already scaled; always probe the
            // unit step first.
            UpdateRule::Lbfgs { .. } => opts.step,
        };
        let mut accepted: Option<(PulseSet, GradientReport)> = None;
        let mut backtracks = 0usize;
        for _ in 0..48 {
            let trial_flat: Vec<f64> = x_flat
                .iter()
                .zip(&dir)
                .map(|(xi, di)| xi + t * di)
                .collect();
            let trial = unflatten(&trial_flat, &x);
            let trial_report = grape_gradient(sys, &trial, spec, opts.mapping.as_ref())?;
            evaluations += 1;
            if trial_report.cost <= report.cost + ARMIJO_C1 * t * slope {
                accepted = Some((trial, trial_report));
                break;
            }
            t *= BACKTRACK_SHRINK;
            backtracks += 1;
        }
        let Some((next, next_report)) = accepted else {
            break StopReason::LineSearchStalled;
        };
        t_init = if backtracks == 0 { t * 2.0 } else { t };

        if let UpdateRule::Lbfgs { history } = opts.update {
            let s: Vec<f64> = flatten(next.amplitudes())
                .iter()
                .zip(&x_flat)
                .map(|(a, b)| a - b)
                .collect();
            let y: Vec<f64> = flatten(&next_report.grad)
                .iter()
                .zip(&g)
                .map(|(a, b)| a - b)
                .collect();
            // Keep the inverse-Hessian model positive definite.
            if dot(&s, &y) > 1e-14 * inf_norm(&s) * inf_norm(&y) {
                s_hist.push(s);
                y_hist.push(y);
                if s_hist.len() > history {
                    s_hist.remove(0);
                    y_hist.remove(0);
                }
            } else {
                s_hist.clear();
                y_hist.clear();
            }
        }

        x = next;
        report = next_report;
        iterations += 1;
        cost_trace.push(report.cost);
    };

    let final_pulses = match &opts.mapping {
        Some(m) => map_controls(&x, m)?,
        None => x,
    };
    Ok(OptimizationReport {
        cost_trace,
        final_cost: report.cost,
        final_pulses,
        stop_reason,
        iterations,
        evaluations,
        seed: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::costs::{FisherOptions, QuantumFisherModel, RunningCost};
    use crate::linalg::ident;
    use crate::propagate::TimeGrid;
    use crate::spinsys::{basis_state, rwa_qubit_hamiltonian, spin_operators, Hamiltonian, Spin};
    use num_complex::Complex64;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_pulses(grid: TimeGrid, n_controls: usize, scale: f64, rng: &mut ChaCha8Rng) -> PulseSet {
        let amps: Vec<Vec<f64>> = (0..n_controls)
            .map(|_| (0..grid.n_slices()).map(|_| rng.random_range(-scale..scale)).collect())
            .collect();
        PulseSet::new(grid, amps).unwrap()
    }

    #[test]
    fn state_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (h, _) = rwa_qubit_hamiltonian(0.8, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(2.0, 16).unwrap();
        let pulses = random_pulses(grid, 2, 1.5, &mut rng);
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: false,
        });
        let rep = grape_gradient_checked(&h, &pulses, &spec, None, 1e-6).unwrap();
        assert!(rep.fd_check.unwrap() < 1e-6, "deviation {}", rep.fd_check.unwrap());
    }

    #[test]
    fn phase_sensitive_state_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        let (h, _) = rwa_qubit_hamiltonian(-0.4, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.3, 12).unwrap();
        let pulses = random_pulses(grid, 2, 2.0, &mut rng);
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: true,
        });
        let rep = grape_gradient_checked(&h, &pulses, &spec, None, 1e-6).unwrap();
        assert!(rep.fd_check.unwrap() < 1e-6);
    }

    #[test]
    fn gate_gradient_matches_finite_differences_on_a_qutrit() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let ops = spin_operators(Spin::One);
        let h = Hamiltonian::new(
            ops.sz.clone() * c(0.6, 0.0),
            vec![ops.sx.clone(), ops.sy.clone()],
        )
        .unwrap();
        let grid = TimeGrid::new(1.1, 10).unwrap();
        let pulses = random_pulses(grid, 2, 1.0, &mut rng);
        let target = crate::propagate::expm_slice(&ops.sx, 0.7).unwrap();
        for phase_sensitive in [false, true] {
            let spec = CostSpec::new(Terminal::Gate { target: target.clone(), phase_sensitive });
            let rep = grape_gradient_checked(&h, &pulses, &spec, None, 1e-6).unwrap();
            assert!(rep.fd_check.unwrap() < 1e-6, "phase_sensitive {phase_sensitive}");
        }
    }

    #[test]
    fn gradient_handles_degenerate_spectra() {
        // A drift proportional to the identity together with zero-amplitude
        // slices produces fully degenerate slice spectra, forcing the
        // divided-difference limit branch.
        let ops = spin_operators(Spin::One);
        let h = Hamiltonian::new(ident(3) * c(2.0, 0.0), vec![ops.sx.clone()]).unwrap();
        let grid = TimeGrid::new(0.9, 8).unwrap();
        let amps = vec![0.0, 0.9, 0.0, -0.7, 0.0, 0.8, 0.3, 0.0];
        let pulses = PulseSet::new(grid, vec![amps]).unwrap();
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(3, 0),
            target: basis_state(3, 2),
            phase_sensitive: false,
        });
        let rep = grape_gradient_checked(&h, &pulses, &spec, None, 1e-6).unwrap();
        assert!(rep.fd_check.unwrap() < 1e-6, "deviation {}", rep.fd_check.unwrap());
    }

    #[test]
    fn gradient_includes_running_costs_and_mapping() {
        let mut rng = ChaCha8Rng::seed_from_u64(25);
        let (h, _) = rwa_qubit_hamiltonian(0.2, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.8, 14).unwrap();
        let pulses = random_pulses(grid, 2, 1.2, &mut rng);
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: false,
        })
        .with_running(vec![
            RunningCost::Power { p_lim: 0.4, weight: 2.0 },
            RunningCost::Bandwidth { eps: 1e-3 },
        ]);
        let mapping = ControlMapping::Sin { u_max: 2.5 };
        let rep = grape_gradient_checked(&h, &pulses, &spec, Some(&mapping), 1e-6).unwrap();
        assert!(rep.fd_check.unwrap() < 1e-6, "deviation {}", rep.fd_check.unwrap());
    }

    #[test]
    fn gradient_of_ensemble_average_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(26);
        let grid = TimeGrid::new(1.6, 12).unwrap();
        let pulses = random_pulses(grid, 2, 1.0, &mut rng);
        let members: Vec<(Hamiltonian, f64)> = [-0.1, 0.0, 0.1]
            .iter()
            .map(|&d| (rwa_qubit_hamiltonian(d, 1.0, 0.0).unwrap().0, 1.0 / 3.0))
            .collect();
        let (base, _) = rwa_qubit_hamiltonian(0.0, 1.0, 0.0).unwrap();
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: false,
        })
        .with_ensemble(members)
        .unwrap();
        let rep = grape_gradient_checked(&base, &pulses, &spec, None, 1e-6).unwrap();
        assert!(rep.fd_check.unwrap() < 1e-6);
    }

    #[test]
    fn fisher_terminal_has_no_gradient() {
        let ops = spin_operators(Spin::Half);
        let (h, _) = rwa_qubit_hamiltonian(0.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let pulses = PulseSet::zeros(grid, 2);
        let e0 = basis_state(2, 0);
        let p0 = &e0 * e0.adjoint();
        let model = QuantumFisherModel {
            generator: ops.sz.clone(),
            psi0: e0.clone(),
            povm: vec![p0.clone(), ident(2) - p0],
        };
        let spec = CostSpec::new(Terminal::Fisher {
            model,
            theta0: 0.1,
            n_meas: 100.0,
            options: FisherOptions::default(),
        });
        assert!(matches!(
            grape_gradient(&h, &pulses, &spec, None),
            Err(Error::GradientUnavailable { .. })
        ));
    }

    fn pi_pulse_problem() -> (Hamiltonian, PulseSet, CostSpec) {
        let omega = 2.0 * PI;
        let (h, _) = rwa_qubit_hamiltonian(0.0, omega, 0.0).unwrap();
        let t_final = 1.2 * PI / omega;
        let grid = TimeGrid::new(t_final, 64).unwrap();
        let init = PulseSet::constant(grid, &[0.8 * omega, 0.0]).unwrap();
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: false,
        });
        (h, init, spec)
    }

    #[test]
    fn pi_pulse_converges_with_both_update_rules() {
        for update in [UpdateRule::FixedStep, UpdateRule::Lbfgs { history: 10 }] {
            let (h, init, spec) = pi_pulse_problem();
            let opts = GrapeOptions {
                max_iters: 100,
                tol_cost: 1e-10,
                update,
                ..GrapeOptions::default()
            };
            let rep = grape_optimize(&h, &init, &spec, &opts).unwrap();
            assert!(rep.final_cost < 1e-8, "{update:?}: cost {}", rep.final_cost);
            // Accepted costs never increase.
            for w in rep.cost_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }

    #[test]
    fn already_optimal_input_stops_immediately() {
        let omega = 2.0 * PI;
        let (h, _) = rwa_qubit_hamiltonian(0.0, omega, 0.0).unwrap();
        let grid = TimeGrid::new(PI / omega, 32).unwrap();
        let init = PulseSet::constant(grid, &[omega, 0.0]).unwrap();
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: false,
        });
        let opts = GrapeOptions { tol_cost: 1e-10, ..GrapeOptions::default() };
        let rep = grape_optimize(&h, &init, &spec, &opts).unwrap();
        assert!(rep.iterations <= 2, "took {} iterations", rep.iterations);
        assert_eq!(rep.stop_reason, StopReason::CostTolerance);
        let dev: f64 = rep.final_pulses.amplitudes()[0]
            .iter()
            .map(|u| (u - omega).abs())
            .fold(0.0, f64::max);
        assert!(dev < 1e-9, "pulse moved by {dev}");
    }

    #[test]
    fn clipped_slices_outside_bound_have_zero_gradient() {
        let (h, _) = rwa_qubit_hamiltonian(0.0, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let pulses = PulseSet::new(grid, vec![vec![3.0, 0.5, -3.0, 0.2], vec![0.0; 4]]).unwrap();
        let spec = CostSpec::new(Terminal::State {
            psi0: basis_state(2, 0),
            target: basis_state(2, 1),
            phase_sensitive: false,
        });
        let mapping = ControlMapping::Clip { u_max: 1.0 };
        let rep = grape_gradient(&h, &pulses, &spec, Some(&mapping)).unwrap();
        assert_eq!(rep.grad[0][0], 0.0);
        assert_eq!(rep.grad[0][2], 0.0);
        assert!(rep.grad[0][1].abs() > 0.0);
    }
}

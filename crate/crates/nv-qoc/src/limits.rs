//! Fundamental bounds: the Bhattacharyya quantum speed limit and the
//! Lie-algebra-rank controllability test.
//!
//! With hbar = 1 the speed limit for a time-independent generator reads
//! `T >= arccos|<psi_0|psi_T>| / Delta_E`, where `Delta_E` is the energy
//! uncertainty on the initial state. For pulsed problems the bound is
//! evaluated on a constant-drive surrogate (every control pinned at its peak
//! magnitude) and is indicative rather than a strict certificate.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, fro_norm, hs_inner, ident, CMatrix, CVector};
use crate::propagate::PulseSet;
use crate::spinsys::{commutator, Hamiltonian};

/// Energy scales below this fraction of the Hamiltonian norm count as a
/// vanishing uncertainty (eigenstate case): the bound diverges.
pub const QSL_DEGENERATE_TOL: f64 = 1e-12;

/// Residual fraction above which a candidate direction enlarges the Lie
/// algebra.
pub const LIE_RESIDUAL_TOL: f64 = 1e-9;

/// Dimension cap of the controllability search; the closure costs grow with
/// the fourth power of the Hilbert dimension.
pub const LIE_DIM_CAP: usize = 9;

/// Bhattacharyya bound evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QslReport {
    /// Energy uncertainty of the initial state, rad/us.
    pub delta_e: f64,
    /// Bures angle `arccos|<psi_0|psi_t>|`, in `[0, pi/2]`.
    pub angle: f64,
    /// Minimal evolution time `angle / delta_e`, us; infinity when the
    /// uncertainty vanishes.
    pub t_qsl: f64,
    /// Set when `psi_0` is an eigenstate of the generator, where the bound
    /// carries no information.
    pub infinite: bool,
}

fn check_normalized(psi: &CVector, dim: usize) -> Result<()> {
    if psi.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, found: psi.len() });
    }
    let norm = psi.norm();
    if !norm.is_finite() || (norm - 1.0).abs() > 1e-8 {
        return Err(Error::NotNormalized { norm });
    }
    Ok(())
}

/// Speed limit of evolving `psi0` towards `psit` under the constant
/// Hermitian generator `h`.
pub fn qsl_bhattacharyya(h: &CMatrix, psi0: &CVector, psit: &CVector) -> Result<QslReport> {
    check_hermitian(h)?;
    check_normalized(psi0, h.nrows())?;
    check_normalized(psit, h.nrows())?;

    // Delta_E as || (H - <H>) psi ||: no subtraction of squared means, so
    // near-eigenstates do not lose precision to cancellation.
    let h_psi = h * psi0;
    let mean = psi0.dotc(&h_psi).re;
    let residual = &h_psi - psi0 * Complex64::new(mean, 0.0);
    let delta_e = residual.norm();

    let overlap = psi0.dotc(psit).norm().min(1.0);
    let angle = overlap.acos();

    let infinite = delta_e < QSL_DEGENERATE_TOL * fro_norm(h).max(1.0);
    let t_qsl = if infinite { f64::INFINITY } else { angle / delta_e };
    Ok(QslReport { delta_e, angle, t_qsl, infinite })
}

/// Speed limit of a pulsed problem, evaluated on the constant-drive
/// surrogate `drift + sum_i max_k |u_i[k]| * control_i`.
pub fn qsl_for_pulses(
    h: &Hamiltonian,
    pulses: &PulseSet,
    psi0: &CVector,
    psit: &CVector,
) -> Result<QslReport> {
    if pulses.n_controls() != h.n_controls() {
        return Err(Error::DimensionMismatch {
            expected: h.n_controls(),
            found: pulses.n_controls(),
        });
    }
    let peaks: Vec<f64> = pulses
        .amplitudes()
        .iter()
        .map(|row| row.iter().fold(0.0f64, |m, u| m.max(u.abs())))
        .collect();
    qsl_bhattacharyya(&h.total(&peaks), psi0, psit)
}

/// Outcome of the Lie-algebra-rank test.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ControllabilityReport {
    /// Dimension of the real Lie algebra generated by the traceless drift
    /// and controls.
    pub lie_dim: usize,
    /// Dimension of su(N): `N^2 - 1`.
    pub full_dim: usize,
    pub controllable: bool,
}

/// Projects onto the traceless part and multiplies by i, turning a
/// Hermitian generator into the skew-Hermitian convention of the algebra.
fn skew_traceless(h: &CMatrix) -> CMatrix {
    let n = h.nrows();
    let trace = h.trace() / Complex64::new(n as f64, 0.0);
    (h - ident(n) * trace) * Complex64::new(0.0, 1.0)
}

/// Orthonormal-basis accumulator over the real vector space of
/// skew-Hermitian matrices with the Hilbert-Schmidt inner product.
struct LieBasis {
    elements: Vec<CMatrix>,
}

impl LieBasis {
    /// Adds the direction of `candidate` if it is not already spanned.
    /// Returns true when the basis grew.
    fn absorb(&mut self, candidate: CMatrix) -> bool {
        let scale = fro_norm(&candidate);
        if scale == 0.0 || !scale.is_finite() {
            return false;
        }
        let mut residual = candidate;
        // Two projection passes keep the basis orthonormal to working
        // precision even for nearly dependent candidates.
        for _ in 0..2 {
            for b in &self.elements {
                let coeff = hs_inner(b, &residual).re;
                residual -= b * Complex64::new(coeff, 0.0);
            }
        }
        let res_norm = fro_norm(&residual);
        if res_norm <= LIE_RESIDUAL_TOL * scale {
            return false;
        }
        residual /= Complex64::new(res_norm, 0.0);
        self.elements.push(residual);
        true
    }
}

/// Dimension of the dynamical Lie algebra generated by drift and controls,
/// compared against su(N). Full rank is equivalent to (pure-state)
/// controllability by the rank criterion; symmetry-based refinements are
/// out of scope.
pub fn controllability_rank(h_d: &CMatrix, h_c: &[CMatrix]) -> Result<ControllabilityReport> {
    let n = h_d.nrows();
    if n > LIE_DIM_CAP {
        return Err(Error::DimensionCap { dim: n, cap: LIE_DIM_CAP });
    }
    check_hermitian(h_d)?;
    for c in h_c {
        if c.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, found: c.nrows() });
        }
        check_hermitian(c)?;
    }

    let mut basis = LieBasis { elements: Vec::new() };
    basis.absorb(skew_traceless(h_d));
    for c in h_c {
        basis.absorb(skew_traceless(c));
    }

    let full_dim = n * n - 1;
    let commutator_cap = (n * n) * (n * n);
    let mut evals = 0usize;
    // Process every unordered pair exactly once; newly absorbed elements
    // extend the queue until the algebra closes or the budget runs out.
    let mut next = 0usize;
    while next < basis.elements.len() && basis.elements.len() < full_dim && evals < commutator_cap
    {
        for j in 0..next {
            if evals >= commutator_cap || basis.elements.len() >= full_dim {
                break;
            }
            let comm = commutator(&basis.elements[next], &basis.elements[j]);
            evals += 1;
            basis.absorb(comm);
        }
        next += 1;
    }

    let lie_dim = basis.elements.len();
    Ok(ControllabilityReport {
        lie_dim,
        full_dim,
        controllable: lie_dim >= full_dim,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::CMatrix;
    use crate::spinsys::{basis_state, spin_operators, Spin};
    use std::f64::consts::PI;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn identical_states_have_zero_bound() {
        let ops = spin_operators(Spin::Half);
        let psi = basis_state(2, 0);
        let rep = qsl_bhattacharyya(&ops.sx, &psi, &psi).unwrap();
        assert_eq!(rep.angle, 0.0);
        assert_eq!(rep.t_qsl, 0.0);
        assert!(!rep.infinite);
    }

    #[test]
    fn eigenstate_initial_state_diverges() {
        let ops = spin_operators(Spin::Half);
        let rep = qsl_bhattacharyya(&ops.sz, &basis_state(2, 0), &basis_state(2, 1)).unwrap();
        assert!(rep.infinite);
        assert!(rep.t_qsl.is_infinite());
        assert!(rep.delta_e < 1e-12);
    }

    #[test]
    fn resonant_flip_bound_matches_the_pi_pulse_time() {
        let omega = 5.3;
        let ops = spin_operators(Spin::Half);
        let h = ops.sx.clone() * c(omega, 0.0);
        let rep = qsl_bhattacharyya(&h, &basis_state(2, 0), &basis_state(2, 1)).unwrap();
        assert!((rep.delta_e - omega / 2.0).abs() < 1e-12);
        assert!((rep.angle - PI / 2.0).abs() < 1e-12);
        assert!((rep.t_qsl - PI / omega).abs() < 1e-12);
    }

    #[test]
    fn bound_is_invariant_under_phase_and_energy_shift() {
        let ops = spin_operators(Spin::One);
        let h = &ops.sx + &ops.sz * c(0.4, 0.0);
        let psi0 = {
            let mut v = CVector::from_vec(vec![c(0.6, 0.1), c(0.0, 0.5), c(0.3, -0.2)]);
            v /= c(v.norm(), 0.0);
            v
        };
        let psit = basis_state(3, 2);
        let base = qsl_bhattacharyya(&h, &psi0, &psit).unwrap();

        let shifted = &h + ident(3) * c(7.7, 0.0);
        let phase = c(0.0, 1.3).exp();
        let rep = qsl_bhattacharyya(&shifted, &(psi0 * phase), &psit).unwrap();
        assert!((rep.delta_e - base.delta_e).abs() < 1e-10);
        assert!((rep.angle - base.angle).abs() < 1e-12);
        assert!((rep.t_qsl - base.t_qsl).abs() < 1e-10);
    }

    #[test]
    fn pulsed_surrogate_uses_peak_amplitudes() {
        use crate::propagate::TimeGrid;
        let ops = spin_operators(Spin::Half);
        let h = Hamiltonian::new(CMatrix::zeros(2, 2), vec![ops.sx.clone()]).unwrap();
        let grid = TimeGrid::new(1.0, 4).unwrap();
        let pulses = PulseSet::new(grid, vec![vec![0.5, -2.0, 1.0, 0.3]]).unwrap();
        let rep = qsl_for_pulses(&h, &pulses, &basis_state(2, 0), &basis_state(2, 1)).unwrap();
        // Surrogate is 2.0 * s_x, so the bound is pi / 2.0.
        assert!((rep.t_qsl - PI / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_unnormalized_states() {
        let ops = spin_operators(Spin::Half);
        let bad = CVector::from_vec(vec![c(0.5, 0.0), c(0.0, 0.0)]);
        assert!(matches!(
            qsl_bhattacharyya(&ops.sx, &bad, &basis_state(2, 0)),
            Err(Error::NotNormalized { .. })
        ));
    }

    #[test]
    fn driven_qubit_generates_all_of_su2() {
        let ops = spin_operators(Spin::Half);
        let rep = controllability_rank(&ops.sz, &[ops.sx.clone(), ops.sy.clone()]).unwrap();
        assert_eq!(rep.lie_dim, 3);
        assert_eq!(rep.full_dim, 3);
        assert!(rep.controllable);
    }

    #[test]
    fn single_control_qubit_is_still_controllable() {
        let ops = spin_operators(Spin::Half);
        let rep = controllability_rank(&ops.sz, std::slice::from_ref(&ops.sx)).unwrap();
        assert_eq!(rep.lie_dim, 3);
        assert!(rep.controllable);
    }

    #[test]
    fn drift_alone_is_not_controllable() {
        let ops = spin_operators(Spin::Half);
        let rep = controllability_rank(&ops.sz, &[]).unwrap();
        assert_eq!(rep.lie_dim, 1);
        assert!(!rep.controllable);
        let zero = controllability_rank(&CMatrix::zeros(2, 2), &[]).unwrap();
        assert_eq!(zero.lie_dim, 0);
        assert!(!zero.controllable);
    }

    #[test]
    fn commuting_controls_stay_one_dimensional() {
        let ops = spin_operators(Spin::Half);
        let rep = controllability_rank(&ops.sz, &[ops.sz.clone() * c(2.0, 0.0)]).unwrap();
        assert_eq!(rep.lie_dim, 1);
        assert!(!rep.controllable);
    }

    #[test]
    fn driven_spin_one_generates_all_of_su3() {
        let ops = spin_operators(Spin::One);
        let d = 2.0 * PI * 2870.0;
        let drift = (&ops.sz * &ops.sz - ident(3) * c(2.0 / 3.0, 0.0)) * c(d, 0.0);
        let rep = controllability_rank(&drift, &[ops.sx.clone(), ops.sy.clone()]).unwrap();
        assert_eq!(rep.lie_dim, 8);
        assert_eq!(rep.full_dim, 8);
        assert!(rep.controllable);
    }

    #[test]
    fn rank_is_invariant_under_ordering_and_positive_scaling() {
        let ops = spin_operators(Spin::One);
        let d = 2.0 * PI * 2870.0;
        let drift = (&ops.sz * &ops.sz - ident(3) * c(2.0 / 3.0, 0.0)) * c(d, 0.0);
        let a = controllability_rank(&drift, &[ops.sx.clone(), ops.sy.clone()]).unwrap();
        let b = controllability_rank(
            &drift,
            &[ops.sy.clone() * c(0.003, 0.0), ops.sx.clone() * c(40.0, 0.0)],
        )
        .unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn dimension_cap_is_enforced() {
        let m = CMatrix::zeros(10, 10);
        assert!(matches!(
            controllability_rank(&m, &[]),
            Err(Error::DimensionCap { dim: 10, cap: 9 })
        ));
    }
}

//! Dense complex linear algebra shared by the physics modules.
//!
//! Everything here operates on dynamically sized matrices over `Complex64`.
//! Hilbert-space dimensions stay small (at most [`DIM_CAP`]), so dense
//! eigendecomposition is the uniform backend for matrix exponentials.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;

/// Composite Hilbert-space dimensions above this are rejected.
pub const DIM_CAP: usize = 81;

/// Relative tolerance for Hermiticity checks: the max entry of `H - H^dag`
/// must not exceed `HERMITICITY_TOL * max(1, max |H_ij|)`.
pub const HERMITICITY_TOL: f64 = 1e-12;

/// Largest entry modulus of a matrix.
pub fn max_abs(m: &CMatrix) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Largest entry modulus of `H - H^dag`.
pub fn hermiticity_error(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut err: f64 = 0.0;
    for i in 0..n {
        for j in i..n {
            err = err.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    err
}

/// Rejects matrices that are not square and Hermitian within tolerance.
pub fn check_hermitian(m: &CMatrix) -> Result<()> {
    if m.nrows() != m.ncols() {
        return Err(Error::DimensionMismatch {
            expected: m.nrows(),
            found: m.ncols(),
        });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::NonFinite { what: "matrix entries" });
    }
    let deviation = hermiticity_error(m);
    if deviation > HERMITICITY_TOL * max_abs(m).max(1.0) {
        return Err(Error::NotHermitian { deviation });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix: `H = V diag(w) V^dag` with
/// real eigenvalues `w` and unitary `V`. Eigenvalue order is unspecified.
///
/// The caller is responsible for Hermiticity; use [`check_hermitian`] at
/// trust boundaries. 2x2 inputs take a closed-form path because optimizer
/// inner loops exponentiate millions of qubit slices.
pub fn eigh(h: &CMatrix) -> (DVector<f64>, CMatrix) {
    if h.nrows() == 2 {
        return eigh2(h);
    }
    let se = h.clone().symmetric_eigen();
    (se.eigenvalues, se.eigenvectors)
}

/// Closed-form Hermitian eigendecomposition for 2x2 matrices.
fn eigh2(h: &CMatrix) -> (DVector<f64>, CMatrix) {
    let a = h[(0, 0)].re;
    let b = h[(1, 1)].re;
    let c = h[(0, 1)];
    let c2 = c.norm_sqr();
    let mean = 0.5 * (a + b);
    let d = 0.5 * (a - b);
    if c2 == 0.0 {
        return (
            DVector::from_vec(vec![a, b]),
            CMatrix::identity(2, 2),
        );
    }
    let r = (d * d + c2).sqrt();
    // r -+ d via the stable quotient form to avoid cancellation.
    let (r_plus_d, r_minus_d) = if d >= 0.0 {
        (r + d, c2 / (r + d))
    } else {
        (c2 / (r - d), r - d)
    };
    let vp = CVector::from_vec(vec![c, Complex64::new(r_minus_d, 0.0)]);
    let vm = CVector::from_vec(vec![-c, Complex64::new(r_plus_d, 0.0)]);
    let np = 1.0 / (c2 + r_minus_d * r_minus_d).sqrt();
    let nm = 1.0 / (c2 + r_plus_d * r_plus_d).sqrt();
    let mut v = CMatrix::zeros(2, 2);
    v.set_column(0, &(vp * Complex64::new(np, 0.0)));
    v.set_column(1, &(vm * Complex64::new(nm, 0.0)));
    (DVector::from_vec(vec![mean + r, mean - r]), v)
}

/// `V diag(exp(-i w dt)) V^dag` from an eigendecomposition of `H`.
pub fn unitary_from_eigh(w: &DVector<f64>, v: &CMatrix, dt: f64) -> CMatrix {
    let n = w.len();
    let mut scaled = v.clone();
    for j in 0..n {
        let phase = Complex64::from_polar(1.0, -w[j] * dt);
        for i in 0..n {
            scaled[(i, j)] *= phase;
        }
    }
    scaled * v.adjoint()
}

/// Hilbert-Schmidt inner product `Tr(A^dag B)`.
pub fn hs_inner(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let mut acc = Complex64::ZERO;
    for (x, y) in a.iter().zip(b.iter()) {
        acc += x.conj() * y;
    }
    acc
}

/// Frobenius norm.
pub fn fro_norm(m: &CMatrix) -> f64 {
    m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Kronecker product of a list of factors, left to right.
pub fn kron_all(factors: &[&CMatrix]) -> CMatrix {
    assert!(!factors.is_empty(), "kron_all needs at least one factor");
    let mut acc = factors[0].clone();
    for f in &factors[1..] {
        acc = acc.kronecker(f);
    }
    acc
}

/// Complex identity of dimension `n`.
pub fn ident(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_hermitian(n: usize, rng: &mut ChaCha8Rng) -> CMatrix {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex64::new(rng.random_range(-1.0..1.0), 0.0);
            for j in (i + 1)..n {
                let z = Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                m[(i, j)] = z;
                m[(j, i)] = z.conj();
            }
        }
        m
    }

    #[test]
    fn eigh2_matches_generic_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let h = random_hermitian(2, &mut rng);
            let (w, v) = eigh(&h);
            // Reconstruction.
            let mut d = CMatrix::zeros(2, 2);
            d[(0, 0)] = Complex64::new(w[0], 0.0);
            d[(1, 1)] = Complex64::new(w[1], 0.0);
            let rec = &v * d * v.adjoint();
            assert!(max_abs(&(&rec - &h)) < 1e-13, "reconstruction failed");
            // Unitarity.
            let vv = v.adjoint() * &v;
            assert!(max_abs(&(&vv - ident(2))) < 1e-13, "columns not orthonormal");
        }
    }

    #[test]
    fn eigh2_near_degenerate_is_stable() {
        // Tiny off-diagonal coupling on top of a large splitting exercises the
        // cancellation-prone r - d branch.
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 0)] = Complex64::new(1.0e6, 0.0);
        h[(1, 1)] = Complex64::new(-1.0e6, 0.0);
        h[(0, 1)] = Complex64::new(1e-8, 2e-8);
        h[(1, 0)] = h[(0, 1)].conj();
        let (w, v) = eigh(&h);
        let mut d = CMatrix::zeros(2, 2);
        d[(0, 0)] = Complex64::new(w[0], 0.0);
        d[(1, 1)] = Complex64::new(w[1], 0.0);
        let rec = &v * d * v.adjoint();
        assert!(max_abs(&(&rec - &h)) < 1e-7 * max_abs(&h));
        let vv = v.adjoint() * &v;
        assert!(max_abs(&(&vv - ident(2))) < 1e-12);
    }

    #[test]
    fn unitary_exp_agrees_with_series() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for n in [2usize, 3, 5] {
            let h = random_hermitian(n, &mut rng);
            let dt = 0.37;
            let (w, v) = eigh(&h);
            let u = unitary_from_eigh(&w, &v, dt);
            // Taylor series of exp(-i dt H) as an independent reference.
            let mut series = ident(n);
            let mut term = ident(n);
            let step = &h * Complex64::new(0.0, -dt);
            for k in 1..60 {
                term = &term * &step / Complex64::new(k as f64, 0.0);
                series += &term;
            }
            assert!(max_abs(&(&u - &series)) < 1e-12, "n = {n}");
            // Unitarity.
            let uu = u.adjoint() * &u;
            assert!(max_abs(&(&uu - ident(n))) < 1e-12);
        }
    }

    #[test]
    fn hermiticity_check_scales_with_magnitude() {
        let mut h = CMatrix::zeros(2, 2);
        h[(0, 0)] = Complex64::new(1.8e4, 0.0);
        h[(0, 1)] = Complex64::new(3.0, 1.0);
        h[(1, 0)] = h[(0, 1)].conj() + Complex64::new(1e-13, 0.0); // rounding-level noise
        h[(1, 1)] = Complex64::new(-2.0, 0.0);
        check_hermitian(&h).expect("rounding-level asymmetry on large entries passes");

        let mut bad = h.clone();
        bad[(1, 0)] += Complex64::new(1e-3, 0.0);
        assert!(matches!(check_hermitian(&bad), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn kron_dimensions_multiply() {
        let a = ident(2);
        let b = ident(3);
        assert_eq!(kron_all(&[&a, &b]).nrows(), 6);
        let c = kron_all(&[&a, &b, &a]);
        assert_eq!(c.nrows(), 12);
        assert_relative_eq!(max_abs(&(&c - ident(12))), 0.0);
    }
}

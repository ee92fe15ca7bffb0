//! Shared helpers for the integration tests.

#![allow(dead_code)]

use num_complex::Complex64;
use nv_qoc::linalg::CVector;
use nv_qoc::propagate::PulseSet;
use nv_qoc::spinsys::Hamiltonian;

/// Integrates the Schrodinger equation through a piecewise-constant pulse
/// with an adaptive Dormand-Prince 5(4) scheme, one smooth segment per
/// slice. Entirely independent of the eigendecomposition propagator it is
/// used to cross-check.
pub fn ode_propagate(h: &Hamiltonian, pulses: &PulseSet, psi0: &CVector, tol: f64) -> CVector {
    let dt = pulses.dt();
    let mut psi = psi0.clone();
    for k in 0..pulses.n_slices() {
        let hk = h.total(&pulses.slice_amps(k));
        let f = |v: &CVector| -> CVector { &hk * v * Complex64::new(0.0, -1.0) };
        psi = dp54(&f, psi, dt, tol);
    }
    psi
}

/// One initial-value solve over `[0, t]` for an autonomous right-hand side.
fn dp54(f: &dyn Fn(&CVector) -> CVector, mut y: CVector, t: f64, tol: f64) -> CVector {
    // Dormand-Prince tableau; the last stage row doubles as the 5th-order
    // weights (FSAL form, not exploited here for simplicity).
    const A: [[f64; 6]; 6] = [
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [
            19372.0 / 6561.0,
            -25360.0 / 2187.0,
            64448.0 / 6561.0,
            -212.0 / 729.0,
            0.0,
            0.0,
        ],
        [
            9017.0 / 3168.0,
            -355.0 / 33.0,
            46732.0 / 5247.0,
            49.0 / 176.0,
            -5103.0 / 18656.0,
            0.0,
        ],
        [
            35.0 / 384.0,
            0.0,
            500.0 / 1113.0,
            125.0 / 192.0,
            -2187.0 / 6784.0,
            11.0 / 84.0,
        ],
    ];
    const B5: [f64; 7] = [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
        0.0,
    ];
    const B4: [f64; 7] = [
        5179.0 / 57600.0,
        0.0,
        7571.0 / 16695.0,
        393.0 / 640.0,
        -92097.0 / 339200.0,
        187.0 / 2100.0,
        1.0 / 40.0,
    ];

    let mut remaining = t;
    let mut h = t / 16.0;
    while remaining > 1e-16 * t {
        h = h.min(remaining);
        let mut k: Vec<CVector> = Vec::with_capacity(7);
        k.push(f(&y));
        for (s, row) in A.iter().enumerate() {
            let mut arg = y.clone();
            for (j, &a) in row[..=s].iter().enumerate() {
                if a != 0.0 {
                    arg += &k[j] * Complex64::new(a * h, 0.0);
                }
            }
            k.push(f(&arg));
        }
        let mut y5 = y.clone();
        let mut err_vec = CVector::zeros(y.len());
        for (j, kj) in k.iter().enumerate() {
            if B5[j] != 0.0 {
                y5 += kj * Complex64::new(B5[j] * h, 0.0);
            }
            let d = B5[j] - B4[j];
            if d != 0.0 {
                err_vec += kj * Complex64::new(d * h, 0.0);
            }
        }
        let err = err_vec.norm();
        if err <= tol {
            remaining -= h;
            y = y5;
        }
        let grow = if err > 0.0 { 0.9 * (tol / err).powf(0.2) } else { 5.0 };
        h *= grow.clamp(0.2, 5.0);
    }
    y
}

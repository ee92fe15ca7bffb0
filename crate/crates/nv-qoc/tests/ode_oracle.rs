//! Cross-checks the eigendecomposition propagator against an independent
//! adaptive Runge-Kutta integration of the Schrodinger equation.

mod common;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use nv_qoc::propagate::{propagate, PulseSet, TimeGrid};
use nv_qoc::spinsys::{basis_state, rwa_qubit_hamiltonian, spin_operators, Hamiltonian, Spin};

#[test]
fn qubit_propagation_matches_the_ode_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..10 {
        let delta = rng.random_range(-3.0..3.0);
        let (h, _) = rwa_qubit_hamiltonian(delta, 1.0, 0.0).unwrap();
        let grid = TimeGrid::new(rng.random_range(0.5..3.0), 24).unwrap();
        let amps: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..24).map(|_| rng.random_range(-4.0..4.0)).collect())
            .collect();
        let pulses = PulseSet::new(grid, amps).unwrap();
        let psi0 = basis_state(2, 0);

        let fast = propagate(&h, &pulses, &psi0).unwrap();
        let slow = common::ode_propagate(&h, &pulses, &psi0, 1e-12);
        let dev = (fast.final_state() - &slow).norm();
        assert!(dev < 1e-8, "deviation {dev}");
    }
}

#[test]
fn qutrit_propagation_matches_the_ode_solver() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let ops = spin_operators(Spin::One);
    for _ in 0..6 {
        let drift = &ops.sz * &ops.sz * num_complex::Complex64::new(rng.random_range(1.0..5.0), 0.0);
        let h = Hamiltonian::new(drift, vec![ops.sx.clone(), ops.sy.clone()]).unwrap();
        let grid = TimeGrid::new(1.4, 32).unwrap();
        let amps: Vec<Vec<f64>> = (0..2)
            .map(|_| (0..32).map(|_| rng.random_range(-3.0..3.0)).collect())
            .collect();
        let pulses = PulseSet::new(grid, amps).unwrap();
        let psi0 = basis_state(3, 1);

        let fast = propagate(&h, &pulses, &psi0).unwrap();
        let slow = common::ode_propagate(&h, &pulses, &psi0, 1e-12);
        let dev = (fast.final_state() - &slow).norm();
        assert!(dev < 1e-8, "deviation {dev}");
    }
}

//! FFT oracle for the trigonometric pulse expansion: the discrete spectrum
//! of an expanded pulse must be supported exactly on the basis frequencies.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use nv_qoc::crab::{expand_pulse, CrabBasis};
use nv_qoc::propagate::TimeGrid;

#[test]
fn expansion_spectrum_is_supported_on_the_basis_frequencies() {
    // Offsets of +1/2 put every basis frequency at the top of its sub-band:
    // w_l = 2 pi l / T, which is exactly FFT bin l for a length-T window.
    let n_slices = 256;
    let t_final = 4.0;
    let n_be = 5;
    let omega_max = CrabBasis::default_omega_max(n_be, t_final);
    let basis = CrabBasis::from_offsets(n_be, omega_max, &[0.5; 5]).unwrap();
    let grid = TimeGrid::new(t_final, n_slices).unwrap();

    let coeffs = [0.8, -0.3, 0.55, 0.0, 1.2, 0.1, -0.7, 0.25, 0.0, -0.4];
    let pulses = expand_pulse(grid, &basis, 1, &coeffs).unwrap();

    let mut buf: Vec<Complex<f64>> = pulses.amplitudes()[0]
        .iter()
        .map(|&u| Complex::new(u, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_slices).process(&mut buf);

    let energy: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = energy.iter().sum();
    assert!(total > 1.0, "pulse must carry spectral energy");

    // Bin l and its mirror n - l belong to basis element l (1-based).
    let mut on_basis = 0.0;
    for l in 1..=n_be {
        on_basis += energy[l] + energy[n_slices - l];
    }
    // Exactly zero in exact arithmetic; the FFT leaves rounding residue.
    let leakage = (total - on_basis) / total;
    assert!(leakage < 1e-12, "off-basis spectral leakage {leakage}");
}

#[test]
fn randomized_basis_spectrum_concentrates_below_omega_max() {
    // Random offsets are not on FFT bins, so some leakage is inevitable;
    // the energy must still concentrate at and below the cutoff.
    let n_slices = 512;
    let t_final = 4.0;
    let n_be = 4;
    let omega_max = CrabBasis::default_omega_max(n_be, t_final);
    let basis = CrabBasis::sample(n_be, omega_max, 7).unwrap();
    let grid = TimeGrid::new(t_final, n_slices).unwrap();

    let coeffs = [0.9, -0.6, 0.4, 1.1, 0.2, -0.8, 0.5, 0.3];
    let pulses = expand_pulse(grid, &basis, 1, &coeffs).unwrap();

    let mut buf: Vec<Complex<f64>> = pulses.amplitudes()[0]
        .iter()
        .map(|&u| Complex::new(u, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n_slices).process(&mut buf);
    let energy: Vec<f64> = buf.iter().map(|z| z.norm_sqr()).collect();
    let total: f64 = energy.iter().sum();

    // Window sinc tails decay slowly; allow a small guard band above the
    // cutoff (bin n_be) before demanding strong suppression.
    let guard = 3 * n_be;
    let in_band: f64 = (0..=guard).map(|k| energy[k] + energy[n_slices - 1 - k]).sum();
    assert!(in_band / total > 0.99, "in-band fraction {}", in_band / total);
}

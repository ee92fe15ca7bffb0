//! Spin operators and Hamiltonian assembly for NV-center systems.
//!
//! Conventions used throughout the crate: hbar = 1, all energies are angular
//! frequencies in rad/us, time is in us, magnetic fields in mT, electric
//! fields in V/m. Conversion from a linear frequency in MHz is a factor of
//! 2 pi, see [`mhz`].

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{check_hermitian, ident, kron_all, CMatrix, CVector, DIM_CAP};

/// Angular frequency in rad/us from a linear frequency in MHz.
pub fn mhz(f: f64) -> f64 {
    std::f64::consts::TAU * f
}

/// Zero-field splitting of the NV ground state, rad/us.
pub const NV_D: f64 = 18_033.897_566_575_3; // mhz(2870.0)

/// Electron gyromagnetic ratio of the NV spin, rad/(us mT).
pub const NV_GAMMA_E: f64 = 175.929_188_601_028_33; // mhz(28.0)

/// Axial ground-state Stark coupling, rad/us per V/m.
pub const NV_DELTA_PAR: f64 = 1.068_141_502_112_132_8e-6; // mhz(0.17e-6)

/// Transverse ground-state Stark coupling, rad/us per V/m.
/// Order-of-magnitude default; override with a measured value when available.
pub const NV_DELTA_PERP: f64 = 6.283_185_307_179_586e-9; // mhz(1.0e-9)

/// Spin quantum numbers supported by the operator constructors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Spin {
    Half,
    One,
}

impl Spin {
    /// Maps a numeric quantum number to the enum; anything but 1/2 and 1 is
    /// rejected.
    pub fn from_quantum_number(s: f64) -> Result<Spin> {
        if (s - 0.5).abs() < 1e-9 {
            Ok(Spin::Half)
        } else if (s - 1.0).abs() < 1e-9 {
            Ok(Spin::One)
        } else {
            Err(Error::UnsupportedSpin(s))
        }
    }

    pub fn quantum_number(self) -> f64 {
        match self {
            Spin::Half => 0.5,
            Spin::One => 1.0,
        }
    }

    /// Hilbert-space dimension 2s + 1.
    pub fn dim(self) -> usize {
        match self {
            Spin::Half => 2,
            Spin::One => 3,
        }
    }
}

/// Cartesian spin operators in the eigenbasis of `sz`, ordered by descending
/// magnetic quantum number.
#[derive(Debug, Clone)]
pub struct SpinOperators {
    pub spin: Spin,
    pub sx: CMatrix,
    pub sy: CMatrix,
    pub sz: CMatrix,
}

impl SpinOperators {
    pub fn dim(&self) -> usize {
        self.spin.dim()
    }
}

/// Builds `sx`, `sy`, `sz` from the ladder-operator matrix elements
/// `<m+-1|S+-|m> = sqrt(s(s+1) - m(m+-1))`.
///
/// For s = 1/2 this gives the Pauli matrices over two; for s = 1 the
/// off-diagonals of `sx`, `sy` carry 1/sqrt(2) and `sz = diag(1, 0, -1)`.
pub fn spin_operators(spin: Spin) -> SpinOperators {
    let s = spin.quantum_number();
    let dim = spin.dim();
    let mut sp = CMatrix::zeros(dim, dim); // raising operator S+
    let mut sz = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        let m = s - i as f64;
        sz[(i, i)] = Complex64::new(m, 0.0);
        if i > 0 {
            // <m+1|S+|m> with m the quantum number of column i.
            let amp = (s * (s + 1.0) - m * (m + 1.0)).sqrt();
            sp[(i - 1, i)] = Complex64::new(amp, 0.0);
        }
    }
    let sm = sp.adjoint();
    let sx = (&sp + &sm) * Complex64::new(0.5, 0.0);
    let sy = (&sp - &sm) * Complex64::new(0.0, -0.5);
    SpinOperators { spin, sx, sy, sz }
}

/// Spatial axis selector for embedded spin operators.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpinAxis {
    X,
    Y,
    Z,
}

impl SpinOperators {
    pub fn axis(&self, axis: SpinAxis) -> &CMatrix {
        match axis {
            SpinAxis::X => &self.sx,
            SpinAxis::Y => &self.sy,
            SpinAxis::Z => &self.sz,
        }
    }
}

/// One nuclear spin coupled to the NV electron spin.
///
/// `n_axial` and `n_tran` are the secular hyperfine tensor components along
/// and transverse to the NV axis, `gamma_n` the nuclear gyromagnetic ratio in
/// rad/(us mT), `quadrupole` the coefficient of `I_z^2` in rad/us.
#[derive(Debug, Clone, PartialEq)]
pub struct NucleusSpec {
    pub spin: Spin,
    pub n_axial: f64,
    pub n_tran: f64,
    pub gamma_n: f64,
    pub quadrupole: f64,
}

impl NucleusSpec {
    /// Isotropic (Fermi contact) part of the hyperfine tensor.
    pub fn fermi_contact(&self) -> f64 {
        (self.n_axial + 2.0 * self.n_tran) / 3.0
    }

    /// Anisotropic (dipolar) part of the hyperfine tensor.
    pub fn dipolar(&self) -> f64 {
        (self.n_axial - self.n_tran) / 3.0
    }
}

/// Static parameters of the NV ground-state Hamiltonian.
#[derive(Debug, Clone, PartialEq)]
pub struct NVParameters {
    /// Axial zero-field splitting, rad/us.
    pub d: f64,
    /// Transverse zero-field (strain) splitting, rad/us.
    pub e: f64,
    /// Electron gyromagnetic ratio, rad/(us mT).
    pub gamma_e: f64,
    /// Static magnetic field, mT, in the NV frame (z along the NV axis).
    pub b_field: [f64; 3],
    /// Static electric field, V/m, in the NV frame.
    pub e_field: [f64; 3],
    /// Axial Stark coupling, rad/us per V/m.
    pub delta_par: f64,
    /// Transverse Stark coupling, rad/us per V/m.
    pub delta_perp: f64,
    /// Coupled nuclear spins, tensored in declaration order after the electron.
    pub nuclei: Vec<NucleusSpec>,
}

impl Default for NVParameters {
    fn default() -> Self {
        NVParameters {
            d: NV_D,
            e: 0.0,
            gamma_e: NV_GAMMA_E,
            b_field: [0.0; 3],
            e_field: [0.0; 3],
            delta_par: NV_DELTA_PAR,
            delta_perp: NV_DELTA_PERP,
            nuclei: Vec::new(),
        }
    }
}

impl NVParameters {
    /// Composite Hilbert-space dimension: 3 for the electron times 2I + 1 per
    /// nucleus.
    pub fn dim(&self) -> usize {
        self.nuclei.iter().fold(3, |d, n| d * n.spin.dim())
    }
}

/// A control-affine Hamiltonian `H(u) = drift + sum_i u_i * controls[i]`.
///
/// Every matrix is Hermitian within [`crate::linalg::HERMITICITY_TOL`]
/// (checked on construction) and all dimensions match.
#[derive(Debug, Clone)]
pub struct Hamiltonian {
    drift: CMatrix,
    controls: Vec<CMatrix>,
}

impl Hamiltonian {
    pub fn new(drift: CMatrix, controls: Vec<CMatrix>) -> Result<Hamiltonian> {
        check_hermitian(&drift)?;
        let dim = drift.nrows();
        if dim > DIM_CAP {
            return Err(Error::DimensionCap { dim, cap: DIM_CAP });
        }
        for c in &controls {
            check_hermitian(c)?;
            if c.nrows() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: c.nrows(),
                });
            }
        }
        Ok(Hamiltonian { drift, controls })
    }

    pub fn dim(&self) -> usize {
        self.drift.nrows()
    }

    pub fn drift(&self) -> &CMatrix {
        &self.drift
    }

    pub fn controls(&self) -> &[CMatrix] {
        &self.controls
    }

    pub fn n_controls(&self) -> usize {
        self.controls.len()
    }

    /// `drift + sum_i amps[i] * controls[i]`.
    ///
    /// Panics if `amps.len() != n_controls()`; callers validate pulse shapes
    /// at their own boundaries.
    pub fn total(&self, amps: &[f64]) -> CMatrix {
        assert_eq!(amps.len(), self.controls.len(), "one amplitude per control");
        let mut h = self.drift.clone();
        for (u, c) in amps.iter().zip(&self.controls) {
            h.zip_apply(c, |t, s| *t += Complex64::new(*u, 0.0) * s);
        }
        h
    }

    /// Returns a copy with different control operators attached to the same
    /// drift.
    pub fn with_controls(&self, controls: Vec<CMatrix>) -> Result<Hamiltonian> {
        Hamiltonian::new(self.drift.clone(), controls)
    }
}

/// Embeds a single-slot operator into the electron (x) nuclei product space.
/// Slot 0 is the electron; slot k >= 1 is the k-th nucleus.
fn embed(op: &CMatrix, dims: &[usize], slot: usize) -> CMatrix {
    let factors: Vec<CMatrix> = dims
        .iter()
        .enumerate()
        .map(|(i, &d)| if i == slot { op.clone() } else { ident(d) })
        .collect();
    let refs: Vec<&CMatrix> = factors.iter().collect();
    kron_all(&refs)
}

/// Assembles the NV ground-state drift Hamiltonian: zero-field splitting,
/// electron Zeeman, Stark shifts, secular hyperfine coupling, nuclear Zeeman
/// and quadrupole terms. The returned Hamiltonian carries no controls; attach
/// drive operators with [`Hamiltonian::with_controls`] or
/// [`nv_electron_operator`].
pub fn nv_ground_hamiltonian(p: &NVParameters) -> Result<Hamiltonian> {
    let dim = p.dim();
    if dim > DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: DIM_CAP });
    }
    for v in p
        .b_field
        .iter()
        .chain(p.e_field.iter())
        .chain([p.d, p.e, p.gamma_e, p.delta_par, p.delta_perp].iter())
    {
        if !v.is_finite() {
            return Err(Error::NonFinite { what: "NV parameters" });
        }
    }

    let e_ops = spin_operators(Spin::One);
    let mut dims = vec![3usize];
    for n in &p.nuclei {
        dims.push(n.spin.dim());
    }

    let sx = embed(&e_ops.sx, &dims, 0);
    let sy = embed(&e_ops.sy, &dims, 0);
    let sz = embed(&e_ops.sz, &dims, 0);
    let sz2 = &sz * &sz;
    let sx2 = &sx * &sx;
    let sy2 = &sy * &sy;
    let third = ident(dim) * Complex64::new(2.0 / 3.0, 0.0);

    let c = |x: f64| Complex64::new(x, 0.0);
    let mut h = (&sz2 - &third) * c(p.d) + (&sx2 - &sy2) * c(p.e);
    h += &sx * c(p.gamma_e * p.b_field[0])
        + &sy * c(p.gamma_e * p.b_field[1])
        + &sz * c(p.gamma_e * p.b_field[2]);
    h += (&sz2 - &third) * c(p.delta_par * p.e_field[2]);
    h -= ((&sx * &sy + &sy * &sx) * c(p.e_field[0]) + (&sx2 - &sy2) * c(p.e_field[1]))
        * c(p.delta_perp);

    for (k, nuc) in p.nuclei.iter().enumerate() {
        let slot = k + 1;
        let n_ops = spin_operators(nuc.spin);
        let ix = embed(&n_ops.sx, &dims, slot);
        let iy = embed(&n_ops.sy, &dims, slot);
        let iz = embed(&n_ops.sz, &dims, slot);
        // Secular hyperfine tensor N = diag(n_tran, n_tran, n_axial).
        h += (&sx * &ix + &sy * &iy) * c(nuc.n_tran) + (&sz * &iz) * c(nuc.n_axial);
        h += &ix * c(nuc.gamma_n * p.b_field[0])
            + &iy * c(nuc.gamma_n * p.b_field[1])
            + &iz * c(nuc.gamma_n * p.b_field[2]);
        h += (&iz * &iz) * c(nuc.quadrupole);
    }

    Hamiltonian::new(h, Vec::new())
}

/// Electron spin operator along `axis`, embedded in the product space of
/// `p` (identity on every nucleus). These are the natural control operators
/// for a microwave drive on the electron spin.
pub fn nv_electron_operator(p: &NVParameters, axis: SpinAxis) -> Result<CMatrix> {
    let dim = p.dim();
    if dim > DIM_CAP {
        return Err(Error::DimensionCap { dim, cap: DIM_CAP });
    }
    let e_ops = spin_operators(Spin::One);
    let mut op = e_ops.axis(axis).clone();
    for n in &p.nuclei {
        op = op.kronecker(&ident(n.spin.dim()));
    }
    Ok(op)
}

/// Magnetic dipole-dipole coupling between two NV electron spins separated by
/// `r_nm` (nanometers):
///
/// `H = gamma / |r|^3 * (S1 . S2 - 3 (S1 . rhat)(S2 . rhat))`
///
/// `gamma` is the full coupling prefactor in rad/us nm^3; it absorbs
/// mu0 gamma_e^2 hbar / 4 pi along with any medium corrections, so the result
/// is an angular frequency. The two spins are both spin-1; the result acts on
/// the 9-dimensional product space, spin 1 first.
pub fn nv_nv_dipole_hamiltonian(r_nm: [f64; 3], gamma: f64) -> Result<Hamiltonian> {
    let r2 = r_nm.iter().map(|x| x * x).sum::<f64>();
    if !r2.is_finite() || !gamma.is_finite() {
        return Err(Error::NonFinite { what: "dipole coupling parameters" });
    }
    if r2 == 0.0 {
        return Err(Error::ZeroDisplacement);
    }
    let r = r2.sqrt();
    let rhat = [r_nm[0] / r, r_nm[1] / r, r_nm[2] / r];
    let ops = spin_operators(Spin::One);
    let id3 = ident(3);
    let s1 = [
        ops.sx.kronecker(&id3),
        ops.sy.kronecker(&id3),
        ops.sz.kronecker(&id3),
    ];
    let s2 = [
        id3.kronecker(&ops.sx),
        id3.kronecker(&ops.sy),
        id3.kronecker(&ops.sz),
    ];
    let mut dot = CMatrix::zeros(9, 9);
    for a in 0..3 {
        dot += &s1[a] * &s2[a];
    }
    let mut s1r = CMatrix::zeros(9, 9);
    let mut s2r = CMatrix::zeros(9, 9);
    for a in 0..3 {
        s1r += &s1[a] * Complex64::new(rhat[a], 0.0);
        s2r += &s2[a] * Complex64::new(rhat[a], 0.0);
    }
    let pref = Complex64::new(gamma / (r * r * r), 0.0);
    let h = (dot - (&s1r * &s2r) * Complex64::new(3.0, 0.0)) * pref;
    Hamiltonian::new(h, Vec::new())
}

/// Resonantly driven NV transition reduced to a qubit in the rotating frame:
///
/// `H = delta * s_z + omega (cos(phi) s_x + sin(phi) s_y)`
///
/// with `s_a = sigma_a / 2`. Returns the control-affine form (drift
/// `delta * s_z`, control operators `s_x`, `s_y`) together with the
/// amplitudes `[omega cos(phi), omega sin(phi)]` that reproduce the drive.
pub fn rwa_qubit_hamiltonian(delta: f64, omega: f64, phi: f64) -> Result<(Hamiltonian, [f64; 2])> {
    for (v, what) in [(delta, "delta"), (omega, "omega"), (phi, "phi")] {
        if !v.is_finite() {
            return Err(Error::NonFinite { what });
        }
    }
    let ops = spin_operators(Spin::Half);
    let drift = &ops.sz * Complex64::new(delta, 0.0);
    let h = Hamiltonian::new(drift, vec![ops.sx, ops.sy])?;
    Ok((h, [omega * phi.cos(), omega * phi.sin()]))
}

/// Basis state |k> of dimension `dim`.
pub fn basis_state(dim: usize, k: usize) -> CVector {
    let mut v = CVector::zeros(dim);
    v[k] = Complex64::ONE;
    v
}

/// The commutator `[a, b]`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::max_abs;
    use nalgebra::DMatrix;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn spin_half_operators_are_half_paulis() {
        let ops = spin_operators(Spin::Half);
        let sx = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.5, 0.0), c(0.5, 0.0), c(0.0, 0.0)]);
        let sy = DMatrix::from_row_slice(2, 2, &[c(0.0, 0.0), c(0.0, -0.5), c(0.0, 0.5), c(0.0, 0.0)]);
        let sz = DMatrix::from_row_slice(2, 2, &[c(0.5, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(-0.5, 0.0)]);
        assert!(max_abs(&(&ops.sx - sx)) < 1e-15);
        assert!(max_abs(&(&ops.sy - sy)) < 1e-15);
        assert!(max_abs(&(&ops.sz - sz)) < 1e-15);
    }

    #[test]
    fn spin_one_operators_have_expected_entries() {
        let ops = spin_operators(Spin::One);
        let f = 1.0 / 2.0_f64.sqrt();
        let sx = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0), c(f, 0.0),   c(0.0, 0.0),
                c(f, 0.0),   c(0.0, 0.0), c(f, 0.0),
                c(0.0, 0.0), c(f, 0.0),   c(0.0, 0.0),
            ],
        );
        let sy = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.0, 0.0), c(0.0, -f),  c(0.0, 0.0),
                c(0.0, f),   c(0.0, 0.0), c(0.0, -f),
                c(0.0, 0.0), c(0.0, f),   c(0.0, 0.0),
            ],
        );
        let sz = DMatrix::from_row_slice(
            3,
            3,
            &[
                c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(0.0, 0.0), c(0.0, 0.0),
                c(0.0, 0.0), c(0.0, 0.0), c(-1.0, 0.0),
            ],
        );
        assert!(max_abs(&(&ops.sx - sx)) < 1e-15);
        assert!(max_abs(&(&ops.sy - sy)) < 1e-15);
        // The z operator carries no 1/sqrt(2): its eigenvalues must be the
        // magnetic quantum numbers 1, 0, -1 for the algebra to close.
        assert!(max_abs(&(&ops.sz - sz)) < 1e-15);
    }

    #[test]
    fn su2_commutation_relations_close() {
        for spin in [Spin::Half, Spin::One] {
            let ops = spin_operators(spin);
            let i = c(0.0, 1.0);
            let checks = [
                (commutator(&ops.sx, &ops.sy), &ops.sz),
                (commutator(&ops.sy, &ops.sz), &ops.sx),
                (commutator(&ops.sz, &ops.sx), &ops.sy),
            ];
            for (lhs, rhs) in checks {
                assert!(max_abs(&(lhs - rhs * i)) < 1e-12, "spin {spin:?}");
            }
            // Casimir invariant s(s+1) * identity.
            let s = spin.quantum_number();
            let casimir = &ops.sx * &ops.sx + &ops.sy * &ops.sy + &ops.sz * &ops.sz;
            assert!(max_abs(&(casimir - ident(spin.dim()) * c(s * (s + 1.0), 0.0))) < 1e-12);
        }
    }

    #[test]
    fn unsupported_spins_are_rejected() {
        assert!(Spin::from_quantum_number(0.5).is_ok());
        assert!(Spin::from_quantum_number(1.0).is_ok());
        for bad in [0.0, 0.7, 1.5, 2.0, -0.5] {
            assert!(matches!(
                Spin::from_quantum_number(bad),
                Err(Error::UnsupportedSpin(_))
            ));
        }
    }

    #[test]
    fn zero_field_spectrum_shows_d_splitting() {
        let p = NVParameters::default();
        let h = nv_ground_hamiltonian(&p).unwrap();
        let (w, _) = crate::linalg::eigh(h.drift());
        let mut evs: Vec<f64> = w.iter().copied().collect();
        evs.sort_by(f64::total_cmp);
        // m = 0 at -2D/3, m = +-1 degenerate at D/3.
        assert!((evs[0] + 2.0 * p.d / 3.0).abs() < 1e-9 * p.d);
        assert!((evs[1] - p.d / 3.0).abs() < 1e-9 * p.d);
        assert!((evs[2] - p.d / 3.0).abs() < 1e-9 * p.d);
        assert!((evs[2] - evs[0] - p.d).abs() < 1e-9 * p.d);
    }

    #[test]
    fn axial_zeeman_splits_m_plus_minus_linearly() {
        // 1 mT along the NV axis.
        let p = NVParameters { b_field: [0.0, 0.0, 1.0], ..Default::default() };
        let h = nv_ground_hamiltonian(&p).unwrap();
        let (w, _) = crate::linalg::eigh(h.drift());
        let mut evs: Vec<f64> = w.iter().copied().collect();
        evs.sort_by(f64::total_cmp);
        // Gap between the m = -1 and m = +1 branches is 2 gamma_e B.
        let gap = evs[2] - evs[1];
        assert!((gap - 2.0 * p.gamma_e).abs() < 1e-9 * p.d);
    }

    #[test]
    fn strain_term_mixes_plus_minus_one() {
        let p = NVParameters { e: mhz(5.0), ..Default::default() };
        let h = nv_ground_hamiltonian(&p).unwrap();
        let (w, _) = crate::linalg::eigh(h.drift());
        let mut evs: Vec<f64> = w.iter().copied().collect();
        evs.sort_by(f64::total_cmp);
        // E lifts the +-1 degeneracy by 2E.
        assert!((evs[2] - evs[1] - 2.0 * p.e).abs() < 1e-9 * p.d);
    }

    #[test]
    fn zeeman_term_is_linear_in_the_field() {
        let mut p1 = NVParameters { b_field: [0.3, -0.2, 0.9], ..Default::default() };
        p1.nuclei.push(NucleusSpec {
            spin: Spin::One,
            n_axial: mhz(-2.16),
            n_tran: mhz(-2.7),
            gamma_n: mhz(1.9338e-3),
            quadrupole: mhz(-4.945),
        });
        let mut p2 = p1.clone();
        p2.b_field = [0.6, -0.4, 1.8];
        let mut p0 = p1.clone();
        p0.b_field = [0.0; 3];
        let h0 = nv_ground_hamiltonian(&p0).unwrap();
        let h1 = nv_ground_hamiltonian(&p1).unwrap();
        let h2 = nv_ground_hamiltonian(&p2).unwrap();
        let lhs = h2.drift() - h1.drift();
        let rhs = h1.drift() - h0.drift();
        assert!(max_abs(&(lhs - rhs)) < 1e-9 * max_abs(h1.drift()));
    }

    #[test]
    fn hyperfine_decomposition_identities() {
        let n = NucleusSpec {
            spin: Spin::Half,
            n_axial: 3.0,
            n_tran: -1.0,
            gamma_n: 0.0,
            quadrupole: 0.0,
        };
        let f = n.fermi_contact();
        let d = n.dipolar();
        assert!((f + 2.0 * d - n.n_axial).abs() < 1e-12);
        assert!((f - d - n.n_tran).abs() < 1e-12);
    }

    #[test]
    fn composite_dimensions_and_cap() {
        let mut p = NVParameters::default();
        p.nuclei.push(NucleusSpec {
            spin: Spin::One,
            n_axial: 1.0,
            n_tran: 1.0,
            gamma_n: 0.1,
            quadrupole: 0.5,
        });
        assert_eq!(p.dim(), 9);
        assert_eq!(nv_ground_hamiltonian(&p).unwrap().dim(), 9);

        // Three spin-1 nuclei sit exactly at the cap of 81.
        for _ in 0..2 {
            p.nuclei.push(p.nuclei[0].clone());
        }
        assert_eq!(p.dim(), 81);
        assert!(nv_ground_hamiltonian(&p).is_ok());

        p.nuclei.push(p.nuclei[0].clone());
        assert!(matches!(
            nv_ground_hamiltonian(&p),
            Err(Error::DimensionCap { dim: 243, cap: 81 })
        ));
    }

    #[test]
    fn ground_hamiltonian_is_hermitian_with_all_terms_active() {
        let mut p = NVParameters {
            e: mhz(3.0),
            b_field: [0.4, 0.7, 2.1],
            e_field: [1e4, -2e4, 5e4],
            ..Default::default()
        };
        p.nuclei.push(NucleusSpec {
            spin: Spin::One,
            n_axial: mhz(-2.16),
            n_tran: mhz(-2.7),
            gamma_n: mhz(1.9338e-3),
            quadrupole: mhz(-4.945),
        });
        p.nuclei.push(NucleusSpec {
            spin: Spin::Half,
            n_axial: mhz(0.2),
            n_tran: mhz(0.1),
            gamma_n: mhz(6.728e-3),
            quadrupole: 0.0,
        });
        let h = nv_ground_hamiltonian(&p).unwrap();
        assert_eq!(h.dim(), 18);
        assert!(crate::linalg::hermiticity_error(h.drift()) < 1e-12 * max_abs(h.drift()).max(1.0));
    }

    #[test]
    fn dipole_coupling_scales_inverse_cube() {
        let h1 = nv_nv_dipole_hamiltonian([0.0, 0.0, 5.0], 2.5).unwrap();
        let h2 = nv_nv_dipole_hamiltonian([0.0, 0.0, 10.0], 2.5).unwrap();
        let scaled = h2.drift() * c(8.0, 0.0);
        assert!(max_abs(&(h1.drift() - scaled)) < 1e-12 * max_abs(h1.drift()).max(1.0));
    }

    #[test]
    fn dipole_along_z_matches_secular_form() {
        let gamma = 1.7;
        let r = 4.0;
        let h = nv_nv_dipole_hamiltonian([0.0, 0.0, r], gamma).unwrap();
        let ops = spin_operators(Spin::One);
        let id3 = ident(3);
        let pref = c(gamma / (r * r * r), 0.0);
        let dot = ops.sx.kronecker(&id3) * id3.kronecker(&ops.sx)
            + ops.sy.kronecker(&id3) * id3.kronecker(&ops.sy)
            + ops.sz.kronecker(&id3) * id3.kronecker(&ops.sz);
        let zz = ops.sz.kronecker(&id3) * id3.kronecker(&ops.sz);
        let expected = (dot - zz * c(3.0, 0.0)) * pref;
        assert!(max_abs(&(h.drift() - expected)) < 1e-13);
    }

    #[test]
    fn dipole_rejects_zero_displacement() {
        assert!(matches!(
            nv_nv_dipole_hamiltonian([0.0, 0.0, 0.0], 1.0),
            Err(Error::ZeroDisplacement)
        ));
    }

    #[test]
    fn rwa_qubit_reduces_to_sx_drive_on_resonance() {
        let omega = 3.0;
        let (h, amps) = rwa_qubit_hamiltonian(0.0, omega, 0.0).unwrap();
        assert_eq!(h.n_controls(), 2);
        let total = h.total(&amps);
        let ops = spin_operators(Spin::Half);
        assert!(max_abs(&(&total - &ops.sx * c(omega, 0.0))) < 1e-15);

        let (h, amps) = rwa_qubit_hamiltonian(0.0, omega, std::f64::consts::FRAC_PI_2).unwrap();
        let total = h.total(&amps);
        assert!(max_abs(&(&total - &ops.sy * c(omega, 0.0))) < 1e-15);
    }

    #[test]
    fn rwa_qubit_is_periodic_in_phi() {
        let (h1, a1) = rwa_qubit_hamiltonian(0.7, 2.0, 0.4).unwrap();
        let (h2, a2) = rwa_qubit_hamiltonian(0.7, 2.0, 0.4 + std::f64::consts::TAU).unwrap();
        let t1 = h1.total(&a1);
        let t2 = h2.total(&a2);
        assert!(max_abs(&(t1 - t2)) < 1e-12);
    }

    #[test]
    fn electron_operator_embeds_identity_on_nuclei() {
        let mut p = NVParameters::default();
        p.nuclei.push(NucleusSpec {
            spin: Spin::Half,
            n_axial: 0.0,
            n_tran: 0.0,
            gamma_n: 0.0,
            quadrupole: 0.0,
        });
        let op = nv_electron_operator(&p, SpinAxis::X).unwrap();
        let ops = spin_operators(Spin::One);
        let expected = ops.sx.kronecker(&ident(2));
        assert!(max_abs(&(op - expected)) < 1e-15);
    }
}

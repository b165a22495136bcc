//! Precessing-field protocol, instantaneous eigenframe and the spin-bath
//! Hamiltonians in the lab and adiabatic frames.

use std::borrow::Cow;

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::oracle::bath::{BathDiscretization, FockSpace};
use crate::scalar::Real;

/// A spin-1/2 amplitude pair `(⟨↑_z|ψ⟩, ⟨↓_z|ψ⟩)`.
pub type Spinor<T> = [Complex<T>; 2];

/// Field of fixed magnitude precessing at constant polar angle:
/// `B(t) = B0 (sinθ cos Ωt, sinθ sin Ωt, cosθ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldProtocol<T> {
    b0: T,
    theta: T,
    omega: T,
}

impl<T: Real> FieldProtocol<T> {
    pub fn new(b0: T, theta: T, omega: T) -> Result<Self> {
        if !(b0 > T::zero()) || !b0.is_finite() {
            return Err(Error::Protocol(format!("B0 must be finite and > 0, got {b0}")));
        }
        if !(theta >= T::zero() && theta <= T::PI()) {
            return Err(Error::Protocol(format!("theta must lie in [0, pi], got {theta}")));
        }
        if !(omega > T::zero() && omega < b0) {
            return Err(Error::Protocol(format!(
                "adiabatic precession needs 0 < Omega < B0, got Omega={omega}, B0={b0}"
            )));
        }
        effective_splitting(b0, omega, theta)?;
        Ok(Self { b0, theta, omega })
    }

    pub fn b0(&self) -> T {
        self.b0
    }

    pub fn theta(&self) -> T {
        self.theta
    }

    /// Precession angular velocity `Ω`.
    pub fn omega(&self) -> T {
        self.omega
    }

    /// Cycle period `2π/Ω`.
    pub fn period(&self) -> T {
        T::TAU() / self.omega
    }

    /// `ω0 = B0 − Ω cosθ`.
    pub fn omega0(&self) -> T {
        self.b0 - self.omega * self.theta.cos()
    }

    /// Azimuth `φ(t) = Ωt`.
    pub fn phi(&self, t: T) -> T {
        self.omega * t
    }

    pub fn field(&self, t: T) -> [T; 3] {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi(t).sin_cos();
        [self.b0 * st * cp, self.b0 * st * sp, self.b0 * ct]
    }

    pub fn with_theta(self, theta: T) -> Result<Self> {
        Self::new(self.b0, theta, self.omega)
    }

    pub fn with_omega(self, omega: T) -> Result<Self> {
        Self::new(self.b0, self.theta, omega)
    }
}

/// Eigenvectors of `n·σ` with eigenvalues `+1` and `−1`, in the half-angle
/// gauge `e^{∓iφ/2}` on the `|↑_z⟩`, `|↓_z⟩` components.
pub fn instantaneous_eigenstates<T: Real>(theta: T, phi: T) -> (Spinor<T>, Spinor<T>) {
    let half = T::lit(0.5);
    let (s, c) = (theta * half).sin_cos();
    let minus = Complex::from_polar(T::one(), -phi * half);
    let plus = Complex::from_polar(T::one(), phi * half);
    let up = [minus * c, plus * s];
    let down = [minus * s, -(plus * c)];
    (up, down)
}

/// Berry connection `i⟨↑_n|∂_t|↑_n⟩ = (φ̇/2) cosθ`; the down state carries
/// the opposite sign.
pub fn berry_connection<T: Real>(theta: T, phi_dot: T) -> T {
    T::lit(0.5) * phi_dot * theta.cos()
}

/// `ω0 = B0 − Ω cosθ`, rejected when not positive.
pub fn effective_splitting<T: Real>(b0: T, omega: T, theta: T) -> Result<T> {
    let omega0 = b0 - omega * theta.cos();
    if omega0 > T::zero() {
        Ok(omega0)
    } else {
        Err(Error::Protocol(format!("effective splitting {omega0} is not positive")))
    }
}

/// Geometric phase difference `2π cosθ` between the two eigenstates after
/// one cycle of an isolated spin.
pub fn ideal_berry_phase<T: Real>(theta: T) -> T {
    T::TAU() * theta.cos()
}

pub fn inner<T: Real>(a: &Spinor<T>, b: &Spinor<T>) -> Complex<T> {
    a[0].conj() * b[0] + a[1].conj() * b[1]
}

type Block<T> = [[Complex<T>; 2]; 2];

/// A 2×2 complex operator on the spin.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpinMatrix<T> {
    m: Block<T>,
    hermitian: bool,
}

impl<T: Real> SpinMatrix<T> {
    pub const HERMITIAN_TOL: f64 = 1e-12;

    pub fn new(m: Block<T>) -> Self {
        Self { m, hermitian: false }
    }

    /// Wraps `m`, verifying Hermiticity to [`Self::HERMITIAN_TOL`].
    pub fn hermitian(m: Block<T>) -> Result<Self> {
        let out = Self { m, hermitian: true };
        if out.hermiticity_defect() > T::lit(Self::HERMITIAN_TOL) {
            return Err(Error::Domain(format!(
                "matrix flagged Hermitian has defect {}",
                out.hermiticity_defect()
            )));
        }
        Ok(out)
    }

    fn re(m: [[f64; 2]; 2]) -> Self {
        Self {
            m: m.map(|row| row.map(|x| Complex::new(T::lit(x), T::zero()))),
            hermitian: true,
        }
    }

    pub fn identity() -> Self {
        Self::re([[1.0, 0.0], [0.0, 1.0]])
    }

    pub fn zero() -> Self {
        Self::re([[0.0, 0.0], [0.0, 0.0]])
    }

    pub fn sigma_x() -> Self {
        Self::re([[0.0, 1.0], [1.0, 0.0]])
    }

    pub fn sigma_y() -> Self {
        let i = Complex::i();
        let z = Complex::new(T::zero(), T::zero());
        Self {
            m: [[z, -i], [i, z]],
            hermitian: true,
        }
    }

    pub fn sigma_z() -> Self {
        Self::re([[1.0, 0.0], [0.0, -1.0]])
    }

    /// `σ+ = |↑⟩⟨↓|`.
    pub fn sigma_plus() -> Self {
        Self {
            hermitian: false,
            ..Self::re([[0.0, 1.0], [0.0, 0.0]])
        }
    }

    /// `σ− = |↓⟩⟨↑|`.
    pub fn sigma_minus() -> Self {
        Self {
            hermitian: false,
            ..Self::re([[0.0, 0.0], [1.0, 0.0]])
        }
    }

    /// `v·σ` for a real vector.
    pub fn pauli_vector(v: [T; 3]) -> Self {
        Self::sigma_x()
            .scale(v[0])
            .add(&Self::sigma_y().scale(v[1]))
            .add(&Self::sigma_z().scale(v[2]))
    }

    pub fn entries(&self) -> &Block<T> {
        &self.m
    }

    pub fn get(&self, r: usize, c: usize) -> Complex<T> {
        self.m[r][c]
    }

    pub fn is_flagged_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn hermiticity_defect(&self) -> T {
        let mut d = T::zero();
        for r in 0..2 {
            for c in 0..2 {
                d = d.max((self.m[r][c] - self.m[c][r].conj()).norm());
            }
        }
        d
    }

    pub fn add(&self, other: &Self) -> Self {
        let mut m = self.m;
        for (r, row) in m.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = *x + other.m[r][c];
            }
        }
        Self {
            m,
            hermitian: self.hermitian && other.hermitian,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-T::one()))
    }

    pub fn scale(&self, s: T) -> Self {
        Self {
            m: self.m.map(|row| row.map(|x| x * s)),
            hermitian: self.hermitian,
        }
    }

    pub fn scale_complex(&self, s: Complex<T>) -> Self {
        Self {
            m: self.m.map(|row| row.map(|x| x * s)),
            hermitian: false,
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        let a = &self.m;
        let b = &other.m;
        let mut m = [[Complex::new(T::zero(), T::zero()); 2]; 2];
        for (r, row) in m.iter_mut().enumerate() {
            for (c, x) in row.iter_mut().enumerate() {
                *x = a[r][0] * b[0][c] + a[r][1] * b[1][c];
            }
        }
        Self { m, hermitian: false }
    }

    pub fn dagger(&self) -> Self {
        let m = &self.m;
        Self {
            m: [[m[0][0].conj(), m[1][0].conj()], [m[0][1].conj(), m[1][1].conj()]],
            hermitian: self.hermitian,
        }
    }

    pub fn commutator(&self, other: &Self) -> Self {
        self.matmul(other).sub(&other.matmul(self))
    }

    pub fn apply(&self, v: &Spinor<T>) -> Spinor<T> {
        [
            self.m[0][0] * v[0] + self.m[0][1] * v[1],
            self.m[1][0] * v[0] + self.m[1][1] * v[1],
        ]
    }

    /// Re-flags as Hermitian after checking.
    pub fn into_hermitian(self) -> Result<Self> {
        Self::hermitian(self.m)
    }

    /// Eigenvalues `(low, high)` of a Hermitian matrix.
    pub fn eigenvalues(&self) -> (T, T) {
        let a = self.m[0][0].re;
        let d = self.m[1][1].re;
        let b = self.m[0][1];
        let mean = T::lit(0.5) * (a + d);
        let half_gap = (T::lit(0.25) * (a - d) * (a - d) + b.norm_sqr()).sqrt();
        (mean - half_gap, mean + half_gap)
    }
}

/// Fixed rotation `exp(iθσ_y/2)` taking `cosθ σ_z + sinθ σ_x` to `σ_z`.
pub fn adiabatic_basis_change<T: Real>(theta: T) -> SpinMatrix<T> {
    let (s, c) = (theta * T::lit(0.5)).sin_cos();
    let re = |x: T| Complex::new(x, T::zero());
    SpinMatrix::new([[re(c), re(s)], [re(-s), re(c)]])
}

/// `H = S ⊗ 1 + 1 ⊗ Σ ω_k a†_k a_k + C ⊗ Σ g_k (a_k + a†_k)` on
/// spin ⊗ truncated Fock space, spin index major.
#[derive(Debug, Clone)]
pub struct SpinBathHamiltonian<'a, T: Real> {
    pub spin: SpinMatrix<T>,
    pub coupling: SpinMatrix<T>,
    pub fock: Cow<'a, FockSpace<T>>,
}

impl<'a, T: Real> SpinBathHamiltonian<'a, T> {
    pub fn dimension(&self) -> usize {
        2 * self.fock.dimension()
    }

    /// `out = H psi`.
    pub fn apply(&self, psi: &[Complex<T>], out: &mut [Complex<T>]) {
        let d = self.fock.dimension();
        let (psi_up, psi_down) = psi.split_at(d);
        let (out_up, out_down) = out.split_at_mut(d);
        let s = self.spin.entries();
        let c = self.coupling.entries();
        let energies = self.fock.energies();
        for j in 0..d {
            let (u, w) = (psi_up[j], psi_down[j]);
            out_up[j] = s[0][0] * u + s[0][1] * w + u * energies[j];
            out_down[j] = s[1][0] * u + s[1][1] * w + w * energies[j];
        }
        if self.fock.modes() == 0 {
            return;
        }
        // coupling: (C ⊗ X) psi, X acting on each spin component
        let mut x_up = vec![Complex::new(T::zero(), T::zero()); d];
        let mut x_down = x_up.clone();
        self.fock.apply_displacement(psi_up, &mut x_up);
        self.fock.apply_displacement(psi_down, &mut x_down);
        for j in 0..d {
            out_up[j] = out_up[j] + c[0][0] * x_up[j] + c[0][1] * x_down[j];
            out_down[j] = out_down[j] + c[1][0] * x_up[j] + c[1][1] * x_down[j];
        }
    }

    /// Dense row-major matrix, for small dimensions.
    pub fn to_dense(&self) -> Vec<Vec<Complex<T>>> {
        let n = self.dimension();
        let mut cols = Vec::with_capacity(n);
        let mut e = vec![Complex::new(T::zero(), T::zero()); n];
        let mut out = e.clone();
        for j in 0..n {
            e[j] = Complex::new(T::one(), T::zero());
            self.apply(&e, &mut out);
            cols.push(out.clone());
            e[j] = Complex::new(T::zero(), T::zero());
        }
        (0..n).map(|r| (0..n).map(|c| cols[c][r]).collect()).collect()
    }

    /// Largest `|H_rc − conj(H_cr)|` of the dense matrix.
    pub fn hermiticity_defect(&self) -> T {
        let dense = self.to_dense();
        let n = dense.len();
        let mut d = T::zero();
        for r in 0..n {
            for c in 0..n {
                d = d.max((dense[r][c] - dense[c][r].conj()).norm());
            }
        }
        d
    }
}

/// Lab-frame `½B(t)·σ ⊗ 1 + 1 ⊗ Σ ω_k a†a + σ_z ⊗ Σ g_k(a + a†)`.
pub fn build_lab_hamiltonian<T: Real>(
    protocol: &FieldProtocol<T>,
    t: T,
    bath: &BathDiscretization<T>,
) -> Result<SpinBathHamiltonian<'static, T>> {
    let fock = FockSpace::new(bath)?;
    Ok(SpinBathHamiltonian {
        spin: lab_spin_hamiltonian(protocol, t),
        coupling: SpinMatrix::sigma_z(),
        fock: Cow::Owned(fock),
    })
}

/// `½B(t)·σ`.
pub fn lab_spin_hamiltonian<T: Real>(protocol: &FieldProtocol<T>, t: T) -> SpinMatrix<T> {
    let b = protocol.field(t);
    SpinMatrix::pauli_vector(b).scale(T::lit(0.5))
}

/// Spin part and coupling operator of the adiabatic-frame Hamiltonian,
/// obtained by rotating `n(0)` onto `ẑ`.
pub fn adiabatic_spin_operators<T: Real>(protocol: &FieldProtocol<T>) -> Result<(SpinMatrix<T>, SpinMatrix<T>)> {
    let rot = adiabatic_basis_change(protocol.theta());
    let (st, ct) = protocol.theta().sin_cos();
    let axis = SpinMatrix::pauli_vector([st, T::zero(), ct]);
    let conj = |m: &SpinMatrix<T>| rot.matmul(m).matmul(&rot.dagger());
    let spin = conj(&axis).scale(T::lit(0.5) * protocol.omega0()).into_hermitian()?;
    let coupling = conj(&SpinMatrix::sigma_z()).into_hermitian()?;
    Ok((spin, coupling))
}

/// Time-independent adiabatic-frame
/// `(ω0/2)σ_z ⊗ 1 + 1 ⊗ Σ ω_k a†a + (σ_z cosθ − σ_x sinθ) ⊗ Σ g_k(a + a†)`.
pub fn build_adiabatic_hamiltonian<T: Real>(
    protocol: &FieldProtocol<T>,
    bath: &BathDiscretization<T>,
) -> Result<SpinBathHamiltonian<'static, T>> {
    let (spin, coupling) = adiabatic_spin_operators(protocol)?;
    Ok(SpinBathHamiltonian {
        spin,
        coupling,
        fock: Cow::Owned(FockSpace::new(bath)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::bath::{discretize_bath, Grid};
    use crate::spectral::SpectralModel;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn close(a: Complex<f64>, b: Complex<f64>) -> bool {
        (a - b).norm() < 1e-14
    }

    #[test]
    fn eigenstates_at_poles_and_equator() {
        let (up, down) = instantaneous_eigenstates(0.0, 0.0);
        assert!(close(up[0], Complex::new(1.0, 0.0)) && close(up[1], Complex::new(0.0, 0.0)));
        assert!(close(down[0], Complex::new(0.0, 0.0)) && close(down[1], Complex::new(-1.0, 0.0)));
        let (up, _) = instantaneous_eigenstates(PI / 2.0, 0.0);
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert!(close(up[0], Complex::new(r, 0.0)) && close(up[1], Complex::new(r, 0.0)));
    }

    #[test]
    fn eigenstates_are_orthonormal_eigenvectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let theta: f64 = rng.random_range(0.0..PI);
            let phi: f64 = rng.random_range(0.0..2.0 * PI);
            let (up, down) = instantaneous_eigenstates(theta, phi);
            assert!(inner(&up, &down).norm() < 1e-14);
            assert!((inner(&up, &up).re - 1.0).abs() < 1e-14);
            assert!((inner(&down, &down).re - 1.0).abs() < 1e-14);
            let n = SpinMatrix::pauli_vector([theta.sin() * phi.cos(), theta.sin() * phi.sin(), theta.cos()]);
            let nu = n.apply(&up);
            let nd = n.apply(&down);
            for i in 0..2 {
                assert!((nu[i] - up[i]).norm() < 1e-14);
                assert!((nd[i] + down[i]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn berry_connection_matches_finite_difference() {
        let theta = 1.0f64;
        let omega = 0.01;
        assert!(berry_connection(PI / 2.0, omega).abs() < 1e-17);
        assert_relative_eq!(berry_connection(0.0, omega), omega / 2.0);
        let t = 3.7;
        let dt = 1e-6 / omega;
        let (up_p, _) = instantaneous_eigenstates(theta, omega * (t + dt));
        let (up_m, _) = instantaneous_eigenstates(theta, omega * (t - dt));
        let (up, _) = instantaneous_eigenstates(theta, omega * t);
        let deriv = [(up_p[0] - up_m[0]) / (2.0 * dt), (up_p[1] - up_m[1]) / (2.0 * dt)];
        let connection = Complex::<f64>::i() * inner(&up, &deriv);
        assert!(connection.im.abs() < 1e-12);
        assert_relative_eq!(connection.re, berry_connection(theta, omega), max_relative = 1e-6);
    }

    #[test]
    fn eigenstates_continuous_along_sweep() {
        let theta = 0.8;
        let mut prev = instantaneous_eigenstates(theta, 0.0);
        let mut phi = 0.0;
        while phi < 4.0 * PI {
            phi += 0.01;
            let next = instantaneous_eigenstates(theta, phi);
            assert!(inner(&prev.0, &next.0).re > 0.0);
            assert!(inner(&prev.1, &next.1).re > 0.0);
            prev = next;
        }
    }

    #[test]
    fn splitting_and_berry_phase() {
        assert_relative_eq!(effective_splitting(1.0, 0.01, PI / 3.0).unwrap(), 0.995, max_relative = 1e-14);
        assert_relative_eq!(effective_splitting(1.0, 0.01, PI / 2.0).unwrap(), 1.0, max_relative = 1e-15);
        assert_eq!(effective_splitting(1.0, 0.0, 0.3).unwrap(), 1.0);
        assert!(effective_splitting(1.0, 2.0, 0.0).is_err());
        assert_relative_eq!(ideal_berry_phase(0.0), 2.0 * PI);
        assert!(ideal_berry_phase(PI / 2.0).abs() < 1e-15);
        assert_relative_eq!(ideal_berry_phase(PI / 3.0), PI, max_relative = 1e-15);
    }

    #[test]
    fn protocol_validation() {
        assert!(FieldProtocol::new(1.0, 0.3, 2.0).is_err());
        assert!(FieldProtocol::new(1.0, 0.3, 0.0).is_err());
        assert!(FieldProtocol::new(0.0, 0.3, 0.1).is_err());
        assert!(FieldProtocol::new(1.0, 4.0, 0.1).is_err());
        let p = FieldProtocol::new(1.0, 0.3, 0.1).unwrap();
        assert_relative_eq!(p.period(), 2.0 * PI / 0.1);
    }

    fn small_bath(alpha: f64) -> BathDiscretization<f64> {
        let model = SpectralModel::ohmic(alpha, 2.0, f64::INFINITY).unwrap();
        discretize_bath(&model, 2, Grid::Linear, 2).unwrap()
    }

    #[test]
    fn lab_hamiltonian_spectrum_and_periodicity() {
        let p = FieldProtocol::new(1.0, 0.9, 0.05).unwrap();
        let empty = BathDiscretization::empty();
        let h = build_lab_hamiltonian(&p, 0.3, &empty).unwrap();
        assert_eq!(h.dimension(), 2);
        let (lo, hi) = h.spin.eigenvalues();
        assert_relative_eq!(lo, -0.5, max_relative = 1e-14);
        assert_relative_eq!(hi, 0.5, max_relative = 1e-14);

        let bath = small_bath(0.01);
        let h0 = build_lab_hamiltonian(&p, 0.0, &bath).unwrap().to_dense();
        let ht = build_lab_hamiltonian(&p, p.period(), &bath).unwrap().to_dense();
        for (r0, rt) in h0.iter().zip(&ht) {
            for (a, b) in r0.iter().zip(rt) {
                assert!((a - b).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn hamiltonians_are_hermitian() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let theta: f64 = rng.random_range(0.0..PI);
            let omega: f64 = rng.random_range(1e-3..0.5);
            let t: f64 = rng.random_range(0.0..100.0);
            let p = FieldProtocol::new(1.0, theta, omega).unwrap();
            let bath = small_bath(rng.random_range(0.0..0.1));
            assert!(build_lab_hamiltonian(&p, t, &bath).unwrap().hermiticity_defect() < 1e-12);
            assert!(build_adiabatic_hamiltonian(&p, &bath).unwrap().hermiticity_defect() < 1e-12);
        }
    }

    #[test]
    fn adiabatic_frame_operators() {
        for theta in [0.0, 0.4, PI / 2.0, 2.5] {
            let p = FieldProtocol::new(1.0, theta, 0.02).unwrap();
            let (spin, coupling) = adiabatic_spin_operators(&p).unwrap();
            let expected_spin = SpinMatrix::sigma_z().scale(0.5 * p.omega0());
            let expected_coupling = SpinMatrix::sigma_z()
                .scale(theta.cos())
                .sub(&SpinMatrix::sigma_x().scale(theta.sin()));
            assert!(spin.sub(&expected_spin).hermiticity_defect() < 1e-15);
            for r in 0..2 {
                for c in 0..2 {
                    assert!((spin.get(r, c) - expected_spin.get(r, c)).norm() < 1e-15);
                    assert!((coupling.get(r, c) - expected_coupling.get(r, c)).norm() < 1e-15);
                }
            }
        }
        // θ = 0: pure dephasing coupling; θ = π/2: −σ_x
        let (_, c0) = adiabatic_spin_operators(&FieldProtocol::new(1.0f64, 0.0, 0.02).unwrap()).unwrap();
        assert!((c0.get(0, 1)).norm() < 1e-15 && (c0.get(0, 0).re - 1.0).abs() < 1e-15);
        let (_, c1) = adiabatic_spin_operators(&FieldProtocol::new(1.0f64, PI / 2.0, 0.02).unwrap()).unwrap();
        assert!((c1.get(0, 1).re + 1.0).abs() < 1e-15 && c1.get(0, 0).norm() < 1e-15);
    }

    #[test]
    fn adiabatic_hamiltonian_is_time_independent_and_decoupled_spectrum() {
        let p = FieldProtocol::new(1.0, 1.1, 0.03).unwrap();
        let bath = small_bath(0.0);
        let a = build_adiabatic_hamiltonian(&p, &bath).unwrap().to_dense();
        let b = build_adiabatic_hamiltonian(&p, &bath).unwrap().to_dense();
        assert_eq!(a, b);
        let h = build_adiabatic_hamiltonian(&p, &bath).unwrap();
        let (lo, hi) = h.spin.eigenvalues();
        assert_relative_eq!(hi, 0.5 * p.omega0(), max_relative = 1e-14);
        assert_relative_eq!(lo, -0.5 * p.omega0(), max_relative = 1e-14);
    }
}

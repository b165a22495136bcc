//! Environment-averaged Bloch equations in the adiabatic frame, their
//! integration, and the dynamical/geometric phase split.

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{ideal_berry_phase, FieldProtocol};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{compute_rate_set, RateSet, SpectralModel};

pub type Vec3<T> = [T; 3];
pub type Mat3<T> = [[T; 3]; 3];

/// Default separation factor for `γ⊥ ≪ Ω ≪ ω0`.
pub const WINDOW_MARGIN: f64 = 10.0;

/// `ds/dt = A s + b` on `s = (s_x, s_y, s_z)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlochGenerator<T> {
    pub a: Mat3<T>,
    pub b: Vec3<T>,
    pub omega0: T,
    pub theta: T,
    pub rates: RateSet<T>,
}

/// Assembles the averaged equations with `λ = λ0 + δλ`:
///
/// `ds_z/dt = −2sin²θ(γ⊥ s_z + γ⊥vac) − 2 sin2θ γ∥ (s_+ + s_−)`
///
/// `ds_+/dt = iω0 s_+ + (sin2θ/2)[2(iξ − γ⊥vac) − (iλ + γ⊥) s_z]
///  + sin²θ[(iλ − γ⊥) s_+ − (iλ + γ⊥) s_−] − 4cos²θ γ∥ s_+`
pub fn build_generator<T: Real>(rates: &RateSet<T>, omega0: T, theta: T) -> Result<BlochGenerator<T>> {
    if rates.fields().iter().any(|(_, v)| !v.is_finite()) || !omega0.is_finite() || !theta.is_finite() {
        return Err(Error::Domain("generator inputs must be finite".into()));
    }
    let two = T::lit(2.0);
    let (st, ct) = theta.sin_cos();
    let a = st * st;
    let s2 = two * st * ct;
    let c = T::lit(4.0) * ct * ct * rates.gamma_par;
    let lambda = rates.lambda();
    let g = rates.gamma_perp;
    let gv = rates.gamma_perp_vac;
    let matrix = [
        [-two * a * g - c, -(omega0 + two * a * lambda), -s2 * g],
        [omega0, -c, -s2 * lambda],
        [-two * s2 * rates.gamma_par, T::zero(), -two * a * g],
    ];
    let b = [-two * s2 * gv, two * s2 * rates.xi, -two * a * gv];
    Ok(BlochGenerator {
        a: matrix,
        b,
        omega0,
        theta,
        rates: *rates,
    })
}

impl<T: Real> BlochGenerator<T> {
    pub fn derivative(&self, s: &Vec3<T>) -> Vec3<T> {
        let mut out = self.b;
        for (o, row) in out.iter_mut().zip(&self.a) {
            *o = *o + row[0] * s[0] + row[1] * s[1] + row[2] * s[2];
        }
        out
    }

    /// Largest rate-like magnitude: `ω0` and every rate or shift.
    pub fn fastest_rate(&self) -> T {
        self.rates
            .fields()
            .iter()
            .filter(|(name, _)| *name != "prob_vt")
            .fold(self.omega0.abs(), |acc, (_, v)| acc.max(v.abs()))
    }

    /// Upper bound on the RK4 step.
    pub fn max_step(&self) -> T {
        T::lit(0.01) / self.fastest_rate()
    }

    /// Closed-form solution via the eigen-decomposition of `A`.
    pub fn exact(&self) -> Result<ExactSolution<T>> {
        ExactSolution::new(self)
    }
}

/// Fixed-step RK4 output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlochTrajectory<T> {
    pub times: Vec<T>,
    pub states: Vec<Vec3<T>>,
    pub dt: T,
    pub integrator: &'static str,
}

impl<T: Real> BlochTrajectory<T> {
    pub fn s_plus(&self) -> Vec<Complex<T>> {
        let half = T::lit(0.5);
        self.states.iter().map(|s| Complex::new(s[0] * half, s[1] * half)).collect()
    }

    /// `2|s_+|`.
    pub fn coherence(&self) -> Vec<T> {
        self.states.iter().map(|s| s[0].hypot(s[1])).collect()
    }

    /// Continuous `arg s_+`.
    pub fn phase(&self) -> Vec<T> {
        let raw: Vec<T> = self.states.iter().map(|s| s[1].atan2(s[0])).collect();
        unwrap_phases(&raw)
    }

    pub fn norms(&self) -> Vec<T> {
        self.states
            .iter()
            .map(|s| (s[0] * s[0] + s[1] * s[1] + s[2] * s[2]).sqrt())
            .collect()
    }

    /// Every `every`-th sample plus the last.
    pub fn decimate(&self, every: usize) -> Self {
        let every = every.max(1);
        let n = self.times.len();
        let keep: Vec<usize> = (0..n).filter(|i| i % every == 0 || *i + 1 == n).collect();
        Self {
            times: keep.iter().map(|&i| self.times[i]).collect(),
            states: keep.iter().map(|&i| self.states[i]).collect(),
            dt: self.dt,
            integrator: self.integrator,
        }
    }
}

/// RK4 on `ds/dt = A s + b` up to `t_final`; the last step is shortened to
/// land on `t_final`.
pub fn evolve<T: Real>(gen: &BlochGenerator<T>, s0: Vec3<T>, t_final: T, dt: T) -> Result<BlochTrajectory<T>> {
    if !(t_final > T::zero()) {
        return Err(Error::Config(format!("t_final must be positive, got {t_final}")));
    }
    let limit = gen.max_step();
    if !(dt > T::zero()) || dt > limit {
        return Err(Error::StepSize {
            dt: dt.as_f64(),
            limit: limit.as_f64(),
        });
    }
    let steps = (t_final / dt).ceil().to_usize().unwrap_or(usize::MAX);
    let mut times = Vec::with_capacity(steps + 1);
    let mut states = Vec::with_capacity(steps + 1);
    let mut s = s0;
    times.push(T::zero());
    states.push(s);
    let half = T::lit(0.5);
    let sixth = T::one() / T::lit(6.0);
    for k in 0..steps {
        let t = dt * T::lit(k as f64);
        let h = if k + 1 == steps { t_final - t } else { dt };
        let k1 = gen.derivative(&s);
        let k2 = gen.derivative(&axpy(&s, h * half, &k1));
        let k3 = gen.derivative(&axpy(&s, h * half, &k2));
        let k4 = gen.derivative(&axpy(&s, h, &k3));
        for i in 0..3 {
            s[i] = s[i] + h * sixth * (k1[i] + T::lit(2.0) * (k2[i] + k3[i]) + k4[i]);
        }
        if s.iter().any(|x| !x.is_finite()) {
            return Err(Error::Integrator(format!("non-finite Bloch vector at t = {}", t + h)));
        }
        times.push(if k + 1 == steps { t_final } else { t + h });
        states.push(s);
    }
    Ok(BlochTrajectory {
        times,
        states,
        dt,
        integrator: "rk4",
    })
}

fn axpy<T: Real>(s: &Vec3<T>, h: T, k: &Vec3<T>) -> Vec3<T> {
    [s[0] + h * k[0], s[1] + h * k[1], s[2] + h * k[2]]
}

type C<T> = Complex<T>;
type CMat3<T> = [[C<T>; 3]; 3];

/// `s(t) = V e^{Λt} V⁻¹ s0 + V diag(t φ1(λt)) V⁻¹ b` with
/// `φ1(z) = (e^z − 1)/z`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExactSolution<T> {
    eigenvalues: [C<T>; 3],
    vectors: CMat3<T>,
    inverse: CMat3<T>,
    b: Vec3<T>,
}

impl<T: Real> ExactSolution<T> {
    pub fn new(gen: &BlochGenerator<T>) -> Result<Self> {
        let eigenvalues = eigenvalues3(&gen.a);
        let mut vectors = [[C::new(T::zero(), T::zero()); 3]; 3];
        for (j, &lambda) in eigenvalues.iter().enumerate() {
            let v = eigenvector3(&gen.a, lambda)?;
            for i in 0..3 {
                vectors[i][j] = v[i];
            }
        }
        let inverse = invert3(&vectors)?;
        Ok(Self {
            eigenvalues,
            vectors,
            inverse,
            b: gen.b,
        })
    }

    pub fn eigenvalues(&self) -> [C<T>; 3] {
        self.eigenvalues
    }

    pub fn at(&self, s0: &Vec3<T>, t: T) -> Vec3<T> {
        let zero = C::new(T::zero(), T::zero());
        let mut ys = [zero; 3];
        let mut yb = [zero; 3];
        for i in 0..3 {
            for j in 0..3 {
                ys[i] = ys[i] + self.inverse[i][j] * s0[j];
                yb[i] = yb[i] + self.inverse[i][j] * self.b[j];
            }
        }
        let mut y = [zero; 3];
        for i in 0..3 {
            let z = self.eigenvalues[i] * t;
            y[i] = ys[i] * z.exp() + yb[i] * phi1(z) * t;
        }
        let mut out = [T::zero(); 3];
        for (i, o) in out.iter_mut().enumerate() {
            *o = (0..3).fold(zero, |acc, j| acc + self.vectors[i][j] * y[j]).re;
        }
        out
    }
}

fn phi1<T: Real>(z: C<T>) -> C<T> {
    if z.norm() < T::lit(1e-3) {
        // Taylor: 1 + z/2 + z²/6 + z³/24 + z⁴/120
        let one = C::new(T::one(), T::zero());
        one + z * (one * T::lit(0.5) + z * (one / T::lit(6.0) + z * (one / T::lit(24.0) + z / T::lit(120.0))))
    } else {
        (z.exp() - C::new(T::one(), T::zero())) / z
    }
}

/// Roots of the characteristic polynomial: one real root by safeguarded
/// Newton, the remaining pair from the deflated quadratic.
fn eigenvalues3<T: Real>(a: &Mat3<T>) -> [C<T>; 3] {
    let trace = a[0][0] + a[1][1] + a[2][2];
    let minors = a[0][0] * a[1][1] - a[0][1] * a[1][0] + a[0][0] * a[2][2] - a[0][2] * a[2][0] + a[1][1] * a[2][2]
        - a[1][2] * a[2][1];
    let det = a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
        + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0]);
    // p(x) = x³ + c2 x² + c1 x + c0
    let (c2, c1, c0) = (-trace, minors, -det);
    let p = |x: T| ((x + c2) * x + c1) * x + c0;
    let dp = |x: T| (T::lit(3.0) * x + T::lit(2.0) * c2) * x + c1;
    let bound = T::one() + c2.abs().max(c1.abs()).max(c0.abs());
    let (mut lo, mut hi) = (-bound, bound);
    let mut x = T::zero();
    for _ in 0..400 {
        let px = p(x);
        if px == T::zero() {
            break;
        }
        if px < T::zero() {
            lo = x;
        } else {
            hi = x;
        }
        let d = dp(x);
        let newton = if d != T::zero() { x - px / d } else { T::nan() };
        let next = if newton > lo && newton < hi {
            newton
        } else {
            T::lit(0.5) * (lo + hi)
        };
        if (next - x).abs() <= T::epsilon() * x.abs().max(T::min_positive_value()) {
            x = next;
            break;
        }
        x = next;
    }
    // x² + (c2 + x) y + (c1 + x(c2 + x)) after dividing out (y − x)
    let b1 = c2 + x;
    let b0 = c1 + x * b1;
    let disc = b1 * b1 - T::lit(4.0) * b0;
    let half = T::lit(0.5);
    let (r1, r2) = if disc >= T::zero() {
        let q = -half * (b1 + b1.signum() * disc.sqrt());
        let r1 = if q != T::zero() { q } else { T::zero() };
        let r2 = if q != T::zero() { b0 / q } else { T::zero() };
        (C::new(r1, T::zero()), C::new(r2, T::zero()))
    } else {
        let re = -half * b1;
        let im = half * (-disc).sqrt();
        (C::new(re, im), C::new(re, -im))
    };
    [C::new(x, T::zero()), r1, r2]
}

fn eigenvector3<T: Real>(a: &Mat3<T>, lambda: C<T>) -> Result<[C<T>; 3]> {
    let m: CMat3<T> = std::array::from_fn(|i| {
        std::array::from_fn(|j| {
            let x = C::new(a[i][j], T::zero());
            if i == j {
                x - lambda
            } else {
                x
            }
        })
    });
    let cross = |u: &[C<T>; 3], v: &[C<T>; 3]| {
        [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ]
    };
    let norm = |v: &[C<T>; 3]| v.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()).sqrt();
    let candidates = [cross(&m[0], &m[1]), cross(&m[0], &m[2]), cross(&m[1], &m[2])];
    let best = candidates
        .iter()
        .max_by(|x, y| norm(x).partial_cmp(&norm(y)).unwrap_or(std::cmp::Ordering::Equal))
        .copied()
        .unwrap_or(candidates[0]);
    let n = norm(&best);
    let scale = m.iter().map(norm).fold(T::zero(), T::max);
    if !(n > T::lit(1e-10) * scale * scale) {
        return Err(Error::Integrator(format!(
            "generator is defective near eigenvalue {lambda}"
        )));
    }
    Ok(best.map(|x| x / n))
}

fn invert3<T: Real>(m: &CMat3<T>) -> Result<CMat3<T>> {
    let cof = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    let adj: CMat3<T> = [
        [cof(1, 2, 1, 2), -cof(0, 2, 1, 2), cof(0, 1, 1, 2)],
        [-cof(1, 2, 0, 2), cof(0, 2, 0, 2), -cof(0, 1, 0, 2)],
        [cof(1, 2, 0, 1), -cof(0, 2, 0, 1), cof(0, 1, 0, 1)],
    ];
    let det = m[0][0] * adj[0][0] + m[0][1] * adj[1][0] + m[0][2] * adj[2][0];
    if !(det.norm() > T::lit(1e-12)) {
        return Err(Error::Integrator("eigenvector matrix is singular".into()));
    }
    Ok(adj.map(|row| row.map(|x| x / det)))
}

/// Co-rotating damping of `s_+`: `sin²θ γ⊥ + 4cos²θ γ∥`.
pub fn transverse_decay_rate<T: Real>(rates: &RateSet<T>, theta: T) -> T {
    let (st, ct) = theta.sin_cos();
    st * st * rates.gamma_perp + T::lit(4.0) * ct * ct * rates.gamma_par
}

/// Ordering report for `γ⊥ ≪ Ω ≪ ω0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowReport<T> {
    pub gamma_perp: T,
    pub omega: T,
    pub omega0: T,
    pub margin: T,
    /// `γ⊥·margin ≤ Ω`.
    pub slow_ok: bool,
    /// `Ω·margin ≤ ω0`.
    pub fast_ok: bool,
}

impl<T: Real> WindowReport<T> {
    pub fn new(gamma_perp: T, omega: T, omega0: T, margin: T) -> Self {
        Self {
            gamma_perp,
            omega,
            omega0,
            margin,
            slow_ok: gamma_perp * margin <= omega,
            fast_ok: omega * margin <= omega0,
        }
    }

    pub fn passed(&self) -> bool {
        self.slow_ok && self.fast_ok
    }
}

pub fn check_adiabatic_window<T: Real>(rates: &RateSet<T>, protocol: &FieldProtocol<T>) -> WindowReport<T> {
    check_adiabatic_window_with_margin(rates, protocol, T::lit(WINDOW_MARGIN))
}

pub fn check_adiabatic_window_with_margin<T: Real>(
    rates: &RateSet<T>,
    protocol: &FieldProtocol<T>,
    margin: T,
) -> WindowReport<T> {
    WindowReport::new(rates.gamma_perp, protocol.omega(), protocol.omega0(), margin)
}

/// Phases accumulated over one cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseResult<T> {
    /// `[B0 + sin²θ λ0] T`.
    pub phi_d: T,
    /// `2π cosθ (1 − Prob_vt)`.
    pub phi_g: T,
    pub phi_total: T,
    pub phi_berry_ideal: T,
    /// `Prob_vt`.
    pub correction_fraction: T,
    pub window: WindowReport<T>,
}

impl<T: Real> PhaseResult<T> {
    /// `Φ_ideal − Φ_G`.
    pub fn geometric_deficit(&self) -> T {
        self.phi_berry_ideal - self.phi_g
    }

    /// Accumulated `arg s_+` over the cycle predicted by the generator,
    /// `(ω0 + sin²θ λ)T = Φ_D − Φ_G`.
    pub fn secular_phase(&self) -> T {
        self.phi_d - self.phi_g
    }
}

/// Phase split from precomputed rates.
pub fn phases_from_rates<T: Real>(rates: &RateSet<T>, protocol: &FieldProtocol<T>) -> PhaseResult<T> {
    let st = protocol.theta().sin();
    let period = protocol.period();
    let phi_d = (protocol.b0() + st * st * rates.lambda0) * period;
    let ideal = ideal_berry_phase(protocol.theta());
    let phi_g = ideal * (T::one() - rates.prob_vt);
    let window = check_adiabatic_window(rates, protocol);
    PhaseResult {
        phi_d,
        phi_g,
        phi_total: phi_d + phi_g,
        phi_berry_ideal: ideal,
        correction_fraction: rates.prob_vt,
        window,
    }
}

/// Rates and phase split for `model` driven by `protocol`; a failed
/// adiabatic window is logged and reported, not raised.
pub fn extract_phases<T: Real>(model: &SpectralModel<T>, protocol: &FieldProtocol<T>) -> Result<PhaseResult<T>> {
    let rates = compute_rate_set(model, protocol)?;
    let phases = phases_from_rates(&rates, protocol);
    if !phases.window.passed() {
        log::warn!(
            "adiabatic window violated: gamma_perp={}, Omega={}, omega0={}",
            phases.window.gamma_perp,
            phases.window.omega,
            phases.window.omega0
        );
    }
    Ok(phases)
}

/// Removes `2π` jumps between consecutive samples.
pub fn unwrap_phases<T: Real>(raw: &[T]) -> Vec<T> {
    let mut out = Vec::with_capacity(raw.len());
    let mut offset = T::zero();
    let tau = T::TAU();
    for (i, &x) in raw.iter().enumerate() {
        if i > 0 {
            let prev = raw[i - 1];
            let jump = x - prev;
            if jump > T::PI() {
                offset = offset - tau * ((jump + T::PI()) / tau).floor();
            } else if jump < -T::PI() {
                offset = offset + tau * ((-jump + T::PI()) / tau).floor();
            }
        }
        out.push(x + offset);
    }
    out
}

/// Least-squares line `y = slope·x + intercept` with coefficient of
/// determination.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LineFit<T> {
    pub slope: T,
    pub intercept: T,
    pub r_squared: T,
}

pub fn fit_line<T: Real>(x: &[T], y: &[T]) -> Option<LineFit<T>> {
    let n = x.len().min(y.len());
    if n < 2 {
        return None;
    }
    let nf = T::lit(n as f64);
    let mx = x[..n].iter().fold(T::zero(), |a, &v| a + v) / nf;
    let my = y[..n].iter().fold(T::zero(), |a, &v| a + v) / nf;
    let (mut sxx, mut sxy, mut syy) = (T::zero(), T::zero(), T::zero());
    for i in 0..n {
        let dx = x[i] - mx;
        let dy = y[i] - my;
        sxx = sxx + dx * dx;
        sxy = sxy + dx * dy;
        syy = syy + dy * dy;
    }
    if sxx == T::zero() {
        return None;
    }
    let slope = sxy / sxx;
    let r_squared = if syy == T::zero() { T::one() } else { sxy * sxy / (sxx * syy) };
    Some(LineFit {
        slope,
        intercept: my - slope * mx,
        r_squared,
    })
}

/// Exponential rate `γ` from fitting `ln v = c − γt` on `[t_start, t_end]`.
pub fn fit_log_decay<T: Real>(times: &[T], values: &[T], t_start: T, t_end: T) -> Option<T> {
    let (x, y): (Vec<T>, Vec<T>) = times
        .iter()
        .zip(values)
        .filter(|(t, v)| **t >= t_start && **t <= t_end && **v > T::zero())
        .map(|(t, v)| (*t, v.ln()))
        .unzip();
    fit_line(&x, &y).map(|f| -f.slope)
}

/// Secular phase over `[0, duration]`: the linear coefficient of a fit of
/// the unwrapped `arg s_+` to a line plus first and second harmonics of the
/// precession, which removes the wobble from the counter-rotating coupling
/// and the constant drive.
pub fn secular_phase_of<T: Real>(trajectory: &BlochTrajectory<T>, duration: T) -> Option<T> {
    let phase = trajectory.phase();
    let (x, y): (Vec<T>, Vec<T>) = trajectory
        .times
        .iter()
        .zip(&phase)
        .filter(|(t, _)| **t <= duration)
        .map(|(t, p)| (*t, *p))
        .unzip();
    let rate = fit_line(&x, &y)?.slope;
    let columns: Vec<Vec<T>> = vec![
        x.iter().map(|_| T::one()).collect(),
        x.iter().map(|&t| t / duration).collect(),
        x.iter().map(|&t| (rate * t).cos()).collect(),
        x.iter().map(|&t| (rate * t).sin()).collect(),
        x.iter().map(|&t| (T::lit(2.0) * rate * t).cos()).collect(),
        x.iter().map(|&t| (T::lit(2.0) * rate * t).sin()).collect(),
    ];
    least_squares(&columns, &y).map(|c| c[1])
}

/// Normal-equation least squares with partial pivoting.
fn least_squares<T: Real>(columns: &[Vec<T>], y: &[T]) -> Option<Vec<T>> {
    let k = columns.len();
    let mut m = vec![vec![T::zero(); k + 1]; k];
    for i in 0..k {
        for j in 0..k {
            m[i][j] = columns[i].iter().zip(&columns[j]).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
        }
        m[i][k] = columns[i].iter().zip(y).fold(T::zero(), |acc, (a, b)| acc + *a * *b);
    }
    for col in 0..k {
        let pivot = (col..k).max_by(|&a, &b| m[a][col].abs().partial_cmp(&m[b][col].abs()).unwrap_or(std::cmp::Ordering::Equal))?;
        if m[pivot][col] == T::zero() {
            return None;
        }
        m.swap(col, pivot);
        for row in 0..k {
            if row != col {
                let f = m[row][col] / m[col][col];
                for c in col..=k {
                    let v = m[col][c];
                    m[row][c] = m[row][c] - f * v;
                }
            }
        }
    }
    Some((0..k).map(|i| m[i][k] / m[i][i]).collect())
}

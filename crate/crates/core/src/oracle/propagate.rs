//! Exact propagation of the spin plus truncated bath.

use std::borrow::Cow;

use num_complex::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::adiabatic::{
    adiabatic_spin_operators, instantaneous_eigenstates, lab_spin_hamiltonian, FieldProtocol, SpinBathHamiltonian,
    SpinMatrix, Spinor,
};
use crate::bloch::{fit_log_decay, unwrap_phases};
use crate::error::{Error, Result};
use crate::oracle::bath::{BathDiscretization, FockSpace, ThermalEnsemble};
use crate::oracle::krylov;
use crate::scalar::Real;

/// Minimum steps per period of the fastest frequency.
pub const STEPS_PER_FASTEST_PERIOD: f64 = 50.0;
pub const NORM_DRIFT_LIMIT: f64 = 1e-9;
pub const TRUNCATION_LIMIT: f64 = 1e-3;

/// Basis in which the Hamiltonian is written.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Time-dependent lab-frame Hamiltonian; spin observables are projected
    /// onto the instantaneous eigenbasis.
    #[default]
    Lab,
    /// Time-independent co-moving Hamiltonian.
    Adiabatic,
}

/// Piecewise-constant generator per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Stepper {
    /// `H(t + h/2)`, second order.
    Midpoint,
    /// Two-point Gauss commutator-free Magnus, fourth order.
    #[default]
    Magnus4,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSettings<T> {
    pub frame: Frame,
    pub stepper: Stepper,
    pub steps_per_cycle: usize,
    /// Total time; defaults to one cycle.
    pub duration: Option<T>,
    /// Record every n-th step.
    pub record_every: usize,
    /// Per-step Krylov residual bound.
    pub krylov_tol: T,
}

impl<T: Real> PropagationSettings<T> {
    pub fn new(steps_per_cycle: usize) -> Self {
        Self {
            frame: Frame::Lab,
            stepper: Stepper::Magnus4,
            steps_per_cycle,
            duration: None,
            record_every: 1,
            krylov_tol: T::lit(1e-13).max(T::lit(100.0) * T::epsilon()),
        }
    }

    pub fn frame(self, frame: Frame) -> Self {
        Self { frame, ..self }
    }

    pub fn stepper(self, stepper: Stepper) -> Self {
        Self { stepper, ..self }
    }

    pub fn duration(self, duration: T) -> Self {
        Self {
            duration: Some(duration),
            ..self
        }
    }

    pub fn record_every(self, record_every: usize) -> Self {
        Self {
            record_every: record_every.max(1),
            ..self
        }
    }
}

/// Spin observables in the instantaneous eigenbasis, `s_± = (s_x ± i s_y)/2`
/// with `s_+ = ⟨↓_n|ρ|↑_n⟩`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OracleResult<T> {
    pub times: Vec<T>,
    pub states: Vec<[T; 3]>,
    /// Continuous `arg s_+`.
    pub phase: Vec<T>,
    pub diagnostics: OracleDiagnostics<T>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleDiagnostics<T> {
    pub dimension: usize,
    pub steps: usize,
    pub dt: T,
    pub samples: usize,
    pub max_norm_drift: T,
    pub max_top_level_occupancy: T,
    pub norm_ok: bool,
    pub truncation_ok: bool,
}

impl<T: Real> OracleResult<T> {
    /// `2|s_+|`, the coherence on the unit scale.
    pub fn coherence(&self) -> Vec<T> {
        self.states.iter().map(|s| s[0].hypot(s[1])).collect()
    }

    /// Unwrapped phase at the last sample.
    pub fn final_phase(&self) -> T {
        *self.phase.last().unwrap_or(&T::zero())
    }

    /// Decay rate of `2|s_+|` from a log-linear fit on `[t_start, t_end]`.
    pub fn fit_decay(&self, t_start: T, t_end: T) -> Option<T> {
        fit_log_decay(&self.times, &self.coherence(), t_start, t_end)
    }

    /// First time after the initial decay at which `2|s_+|` climbs back by
    /// more than `rise` above its running minimum.
    pub fn first_revival(&self, rise: T) -> Option<T> {
        let coherence = self.coherence();
        let mut floor = T::infinity();
        for (t, c) in self.times.iter().zip(&coherence) {
            floor = floor.min(*c);
            if *c > floor + rise {
                return Some(*t);
            }
        }
        None
    }
}

/// `(|↑_n(0)⟩ + |↓_n(0)⟩)/√2` written in the basis of `frame`.
pub fn eigen_superposition<T: Real>(protocol: &FieldProtocol<T>, frame: Frame) -> Spinor<T> {
    let (up, down) = frame_basis(protocol, frame, T::zero());
    let r = T::FRAC_1_SQRT_2();
    [(up[0] + down[0]) * r, (up[1] + down[1]) * r]
}

/// `|↑_n(0)⟩` in the basis of `frame`.
pub fn eigen_up<T: Real>(protocol: &FieldProtocol<T>, frame: Frame) -> Spinor<T> {
    frame_basis(protocol, frame, T::zero()).0
}

/// Instantaneous eigenbasis at `t`, in the gauge of `instantaneous_eigenstates`; in the adiabatic
/// frame `|↓_n(0)⟩` is `−|↓⟩`.
fn frame_basis<T: Real>(protocol: &FieldProtocol<T>, frame: Frame, t: T) -> (Spinor<T>, Spinor<T>) {
    match frame {
        Frame::Lab => instantaneous_eigenstates(protocol.theta(), protocol.phi(t)),
        Frame::Adiabatic => {
            let one = Complex::new(T::one(), T::zero());
            let zero = Complex::new(T::zero(), T::zero());
            ([one, zero], [zero, -one])
        }
    }
}

/// `|spin⟩ ⊗ |n_1 … n_M⟩`, spin index major.
pub fn product_state<T: Real>(fock: &FockSpace<T>, spin: &Spinor<T>, occupations: &[usize]) -> Result<Vec<Complex<T>>> {
    let d = fock.dimension();
    let j = fock.index(occupations)?;
    let mut psi = vec![Complex::new(T::zero(), T::zero()); 2 * d];
    let norm = (spin[0].norm_sqr() + spin[1].norm_sqr()).sqrt();
    if !(norm > T::zero()) {
        return Err(Error::Config("spin state has zero norm".into()));
    }
    psi[j] = spin[0] / norm;
    psi[d + j] = spin[1] / norm;
    Ok(psi)
}

fn fastest_frequency<T: Real>(protocol: &FieldProtocol<T>, bath: &BathDiscretization<T>) -> T {
    let top = bath.cells().last().map(|c| c.1).unwrap_or(T::zero());
    protocol.b0().max(top)
}

struct Trace<T> {
    states: Vec<[T; 3]>,
    max_norm_drift: T,
    max_top: T,
}

/// Propagates `psi0` under the spin-bath Hamiltonian of `settings.frame`.
pub fn propagate_exact<T: Real>(
    protocol: &FieldProtocol<T>,
    bath: &BathDiscretization<T>,
    psi0: &[Complex<T>],
    settings: &PropagationSettings<T>,
) -> Result<OracleResult<T>> {
    let fock = FockSpace::new(bath)?;
    let plan = Plan::new(protocol, bath, settings)?;
    let trace = run(protocol, &fock, psi0, settings, &plan)?;
    Ok(assemble(vec![trace], &plan, 2 * fock.dimension()))
}

/// Averages spin observables over the ensemble's number-state samples,
/// in sample order.
pub fn propagate_ensemble<T: Real>(
    protocol: &FieldProtocol<T>,
    bath: &BathDiscretization<T>,
    spin: &Spinor<T>,
    ensemble: &ThermalEnsemble,
    settings: &PropagationSettings<T>,
) -> Result<OracleResult<T>> {
    let fock = FockSpace::new(bath)?;
    let plan = Plan::new(protocol, bath, settings)?;
    let occupations = ensemble.occupations(bath.mode_count());
    let traces = occupations
        .par_iter()
        .map(|occ| {
            let psi0 = product_state(&fock, spin, occ)?;
            run(protocol, &fock, &psi0, settings, &plan)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(assemble(traces, &plan, 2 * fock.dimension()))
}

struct Plan<T> {
    dt: T,
    steps: usize,
    times: Vec<T>,
}

impl<T: Real> Plan<T> {
    fn new(protocol: &FieldProtocol<T>, bath: &BathDiscretization<T>, settings: &PropagationSettings<T>) -> Result<Self> {
        if settings.steps_per_cycle == 0 {
            return Err(Error::Config("steps_per_cycle must be positive".into()));
        }
        let dt = protocol.period() / T::lit(settings.steps_per_cycle as f64);
        let limit = T::TAU() / (T::lit(STEPS_PER_FASTEST_PERIOD) * fastest_frequency(protocol, bath));
        if dt > limit {
            return Err(Error::StepSize {
                dt: dt.as_f64(),
                limit: limit.as_f64(),
            });
        }
        let duration = settings.duration.unwrap_or_else(|| protocol.period());
        if !(duration > T::zero()) {
            return Err(Error::Config(format!("duration must be positive, got {duration}")));
        }
        let steps = (duration / dt).round().to_usize().unwrap_or(0).max(1);
        let every = settings.record_every.max(1);
        let times = (0..=steps)
            .filter(|k| k % every == 0 || *k == steps)
            .map(|k| dt * T::lit(k as f64))
            .collect();
        Ok(Self { dt, steps, times })
    }
}

fn step_generator<T: Real>(
    protocol: &FieldProtocol<T>,
    settings: &PropagationSettings<T>,
    adiabatic: &Option<(SpinMatrix<T>, SpinMatrix<T>)>,
    t: T,
    h: T,
) -> (SpinMatrix<T>, SpinMatrix<T>) {
    if let Some((spin, coupling)) = adiabatic {
        return (*spin, *coupling);
    }
    let coupling = SpinMatrix::sigma_z();
    match settings.stepper {
        Stepper::Midpoint => (lab_spin_hamiltonian(protocol, t + h * T::lit(0.5)), coupling),
        Stepper::Magnus4 => {
            let offset = T::lit(3f64.sqrt() / 6.0);
            let s1 = lab_spin_hamiltonian(protocol, t + h * (T::lit(0.5) - offset));
            let s2 = lab_spin_hamiltonian(protocol, t + h * (T::lit(0.5) + offset));
            // −i(√3h/12)[H2, H1] restricted to the spin and coupling blocks
            let factor = Complex::new(T::zero(), -T::lit(3f64.sqrt() / 12.0) * h);
            let spin = s1.add(&s2).scale(T::lit(0.5)).add(&s2.commutator(&s1).scale_complex(factor));
            let coupling = coupling.add(&s2.sub(&s1).commutator(&coupling).scale_complex(factor));
            (spin, coupling)
        }
    }
}

fn observe<T: Real>(
    protocol: &FieldProtocol<T>,
    frame: Frame,
    fock: &FockSpace<T>,
    psi: &[Complex<T>],
    t: T,
) -> ([T; 3], T, T) {
    let d = fock.dimension();
    let (a, b) = psi.split_at(d);
    let mut rho = [[Complex::new(T::zero(), T::zero()); 2]; 2];
    for j in 0..d {
        rho[0][0] = rho[0][0] + a[j] * a[j].conj();
        rho[0][1] = rho[0][1] + a[j] * b[j].conj();
        rho[1][1] = rho[1][1] + b[j] * b[j].conj();
    }
    rho[1][0] = rho[0][1].conj();
    let (up, down) = frame_basis(protocol, frame, t);
    let sandwich = |u: &Spinor<T>, v: &Spinor<T>| {
        let mut acc = Complex::new(T::zero(), T::zero());
        for r in 0..2 {
            for c in 0..2 {
                acc = acc + u[r].conj() * rho[r][c] * v[c];
            }
        }
        acc
    };
    let s_plus = sandwich(&down, &up);
    let s_z = (sandwich(&up, &up) - sandwich(&down, &down)).re;
    let norm = (rho[0][0].re + rho[1][1].re).sqrt();
    let top = fock.top_level_weight(a) + fock.top_level_weight(b);
    ([T::lit(2.0) * s_plus.re, T::lit(2.0) * s_plus.im, s_z], norm, top)
}

fn run<T: Real>(
    protocol: &FieldProtocol<T>,
    fock: &FockSpace<T>,
    psi0: &[Complex<T>],
    settings: &PropagationSettings<T>,
    plan: &Plan<T>,
) -> Result<Trace<T>> {
    if psi0.len() != 2 * fock.dimension() {
        return Err(Error::Config(format!(
            "initial state has length {}, expected {}",
            psi0.len(),
            2 * fock.dimension()
        )));
    }
    let adiabatic = match settings.frame {
        Frame::Adiabatic => Some(adiabatic_spin_operators(protocol)?),
        Frame::Lab => None,
    };
    let mut psi = psi0.to_vec();
    let initial_norm = psi.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()).sqrt();
    let every = settings.record_every.max(1);
    let mut states = Vec::with_capacity(plan.times.len());
    let mut max_norm_drift = T::zero();
    let mut max_top = T::zero();
    let mut record = |psi: &[Complex<T>], t: T, states: &mut Vec<[T; 3]>| {
        let (s, norm, top) = observe(protocol, settings.frame, fock, psi, t);
        max_norm_drift = max_norm_drift.max((norm - initial_norm).abs());
        max_top = max_top.max(top);
        states.push(s);
    };
    record(&psi, T::zero(), &mut states);
    for k in 0..plan.steps {
        let t = plan.dt * T::lit(k as f64);
        let (spin, coupling) = step_generator(protocol, settings, &adiabatic, t, plan.dt);
        let h = SpinBathHamiltonian {
            spin,
            coupling,
            fock: Cow::Borrowed(fock),
        };
        let apply = |v: &[Complex<T>], out: &mut [Complex<T>]| h.apply(v, out);
        krylov::propagate(&apply, &mut psi, plan.dt, settings.krylov_tol)?;
        if psi.iter().any(|x| !x.re.is_finite() || !x.im.is_finite()) {
            return Err(Error::Integrator(format!("non-finite state at t = {}", t + plan.dt)));
        }
        let done = k + 1;
        if done % every == 0 || done == plan.steps {
            record(&psi, plan.dt * T::lit(done as f64), &mut states);
        }
    }
    Ok(Trace {
        states,
        max_norm_drift,
        max_top,
    })
}

fn assemble<T: Real>(traces: Vec<Trace<T>>, plan: &Plan<T>, dimension: usize) -> OracleResult<T> {
    let count = T::lit(traces.len() as f64);
    let n = plan.times.len();
    let mut states = vec![[T::zero(); 3]; n];
    let mut max_norm_drift = T::zero();
    let mut max_top = T::zero();
    for trace in &traces {
        for (acc, s) in states.iter_mut().zip(&trace.states) {
            for i in 0..3 {
                acc[i] = acc[i] + s[i];
            }
        }
        max_norm_drift = max_norm_drift.max(trace.max_norm_drift);
        max_top = max_top.max(trace.max_top);
    }
    for s in states.iter_mut() {
        for x in s.iter_mut() {
            *x = *x / count;
        }
    }
    let raw: Vec<T> = states.iter().map(|s| s[1].atan2(s[0])).collect();
    let phase = unwrap_phases(&raw);
    let norm_ok = max_norm_drift <= T::lit(NORM_DRIFT_LIMIT);
    let truncation_ok = max_top <= T::lit(TRUNCATION_LIMIT);
    if !norm_ok {
        log::warn!("oracle norm drift {max_norm_drift} exceeds {NORM_DRIFT_LIMIT}");
    }
    if !truncation_ok {
        log::warn!("highest Fock level occupancy {max_top} exceeds {TRUNCATION_LIMIT}; raise n_max");
    }
    OracleResult {
        times: plan.times.clone(),
        states,
        phase,
        diagnostics: OracleDiagnostics {
            dimension,
            steps: plan.steps,
            dt: plan.dt,
            samples: traces.len(),
            max_norm_drift,
            max_top_level_occupancy: max_top,
            norm_ok,
            truncation_ok,
        },
    }
}

/// Exact one-cycle relative phase `arg⟨↓_n(T)|ρ|↑_n(T)⟩` of the closed spin,
/// from the rotating-frame solution with constant field
/// `B0 n(0) − Ω ẑ`, reduced to the principal branch.
pub fn closed_cycle_phase<T: Real>(protocol: &FieldProtocol<T>) -> T {
    let (st, ct) = protocol.theta().sin_cos();
    let field = [protocol.b0() * st, T::zero(), protocol.b0() * ct - protocol.omega()];
    let magnitude = (field[0] * field[0] + field[2] * field[2]).sqrt();
    let axis = [field[0] / magnitude, T::zero(), field[2] / magnitude];
    let angle = magnitude * protocol.period() * T::lit(0.5);
    // U_rot = exp(−i angle m·σ); lab state after a cycle is −U_rot ψ0
    let u = SpinMatrix::identity()
        .scale(angle.cos())
        .add(&SpinMatrix::pauli_vector(axis).scale_complex(Complex::new(T::zero(), -angle.sin())));
    let (up, down) = instantaneous_eigenstates(protocol.theta(), T::zero());
    let r = T::FRAC_1_SQRT_2();
    let psi = u.apply(&[(up[0] + down[0]) * r, (up[1] + down[1]) * r]);
    let c_up = up[0].conj() * psi[0] + up[1].conj() * psi[1];
    let c_down = down[0].conj() * psi[0] + down[1].conj() * psi[1];
    (c_down * c_up.conj()).arg()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::bath::{discretize_bath, pure_dephasing_reference, thermal_initial_state, Grid};
    use crate::spectral::SpectralModel;
    use std::f64::consts::PI;

    fn wrap(x: f64) -> f64 {
        (x + PI).rem_euclid(2.0 * PI) - PI
    }

    #[test]
    fn closed_spin_matches_rotating_frame_solution() {
        let protocol = FieldProtocol::new(1.0, PI / 3.0, 0.05).unwrap();
        let bath = BathDiscretization::empty();
        let fock = FockSpace::new(&bath).unwrap();
        let psi0 = product_state(&fock, &eigen_superposition(&protocol, Frame::Lab), &[]).unwrap();
        let settings = PropagationSettings::new(10_000);
        let result = propagate_exact(&protocol, &bath, &psi0, &settings).unwrap();
        let measured = wrap(result.final_phase());
        assert!(wrap(measured - closed_cycle_phase(&protocol)).abs() < 1e-10);
        assert!(result.diagnostics.max_norm_drift < 1e-12);
    }

    #[test]
    fn magnus_beats_midpoint() {
        let protocol = FieldProtocol::new(1.0, 1.0, 0.2).unwrap();
        let bath = BathDiscretization::empty();
        let fock = FockSpace::new(&bath).unwrap();
        let psi0 = product_state(&fock, &eigen_superposition(&protocol, Frame::Lab), &[]).unwrap();
        let exact = closed_cycle_phase(&protocol);
        let error = |stepper| {
            let settings = PropagationSettings::new(1200).stepper(stepper);
            let result = propagate_exact(&protocol, &bath, &psi0, &settings).unwrap();
            wrap(result.final_phase() - exact).abs()
        };
        let midpoint = error(Stepper::Midpoint);
        let magnus = error(Stepper::Magnus4);
        assert!(magnus < 1e-8, "{magnus}");
        assert!(magnus < midpoint / 100.0, "{magnus} vs {midpoint}");
    }

    #[test]
    fn adiabatic_frame_phase_is_omega0_t() {
        let protocol = FieldProtocol::new(1.0, PI / 3.0, 0.05).unwrap();
        let bath = BathDiscretization::empty();
        let fock = FockSpace::new(&bath).unwrap();
        let psi0 = product_state(&fock, &eigen_superposition(&protocol, Frame::Adiabatic), &[]).unwrap();
        let settings = PropagationSettings::new(2000).frame(Frame::Adiabatic);
        let result = propagate_exact(&protocol, &bath, &psi0, &settings).unwrap();
        let expected = protocol.omega0() * protocol.period();
        assert!((result.final_phase() - expected).abs() < 1e-9);
    }

    #[test]
    fn step_size_precondition() {
        let protocol = FieldProtocol::new(1.0, 0.5, 0.1).unwrap();
        let bath = BathDiscretization::empty();
        let fock = FockSpace::new(&bath).unwrap();
        let psi0 = product_state(&fock, &eigen_up(&protocol, Frame::Lab), &[]).unwrap();
        assert!(matches!(
            propagate_exact(&protocol, &bath, &psi0, &PropagationSettings::new(100)),
            Err(Error::StepSize { .. })
        ));
    }

    #[test]
    fn pure_dephasing_short_run() {
        let protocol = FieldProtocol::new(1.0, 0.0, 0.2).unwrap();
        let model = SpectralModel::ohmic(1e-3, 2.0, f64::INFINITY).unwrap();
        let bath = discretize_bath(&model, 3, Grid::Linear, 3).unwrap();
        let fock = FockSpace::new(&bath).unwrap();
        let psi0 = product_state(&fock, &eigen_superposition(&protocol, Frame::Lab), &[0, 0, 0]).unwrap();
        let settings = PropagationSettings::new(1000).duration(10.0);
        let result = propagate_exact(&protocol, &bath, &psi0, &settings).unwrap();
        for ((t, c), s) in result.times.iter().zip(result.coherence()).zip(&result.states) {
            assert!((c - (-pure_dephasing_reference(&bath, *t)).exp()).abs() < 1e-6);
            assert!((s[2]).abs() < 1e-10);
        }
    }

    #[test]
    fn ensemble_is_deterministic() {
        let protocol = FieldProtocol::new(1.0, 0.7, 0.2).unwrap();
        let model = SpectralModel::ohmic(1e-3, 2.0, 2.0).unwrap();
        let bath = discretize_bath(&model, 2, Grid::Linear, 2).unwrap();
        let ensemble = thermal_initial_state(&bath, 4, 9);
        let spin = eigen_superposition(&protocol, Frame::Lab);
        let settings = PropagationSettings::new(1000).duration(3.0);
        let a = propagate_ensemble(&protocol, &bath, &spin, &ensemble, &settings).unwrap();
        let b = propagate_ensemble(&protocol, &bath, &spin, &ensemble, &settings).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.diagnostics.samples, 4);
    }
}

//! Side-by-side report of exact propagation against the averaged equations.

use serde::{Deserialize, Serialize};

use crate::adiabatic::{ideal_berry_phase, FieldProtocol};
use crate::bloch::{transverse_decay_rate, PhaseResult};
use crate::error::{Error, Result};
use crate::oracle::bath::{discrete_gamma_perp, discrete_lambda0, BathDiscretization};
use crate::oracle::propagate::OracleResult;
use crate::scalar::Real;
use crate::spectral::RateSet;

/// What the oracle run describes, beyond its trajectory.
#[derive(Debug, Clone, Copy)]
pub struct ComparisonContext<'a, T> {
    pub protocol: &'a FieldProtocol<T>,
    pub bath: &'a BathDiscretization<T>,
    /// Window `[t_start, t_end]` for the decay fit.
    pub fit_window: (T, T),
    /// One-cycle phase of the same protocol with the bath switched off;
    /// removes the closed-system non-adiabatic offset from the geometric
    /// comparison.
    pub closed_phase: Option<T>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub decay_fitted: Option<T>,
    /// `sin²θ γ⊥ + 4cos²θ γ∥` from the continuum rates.
    pub decay_predicted: T,
    /// Same with `γ⊥` from the bath's resonant cell.
    pub decay_discrete: T,
    pub decay_relative_error: Option<T>,
    /// `arg s_+(T) − arg s_+(0)`, if the run covers a cycle.
    pub phase_measured: Option<T>,
    /// `[B0 + sin²θ λ0_disc]T − Φ_G`.
    pub phase_predicted: T,
    pub phase_residual: Option<T>,
    /// `Φ_ideal − Φ_G` implied by the run, after removing the closed-system offset.
    pub deficit_measured: Option<T>,
    /// `Φ_ideal · Prob_vt`.
    pub deficit_predicted: T,
    pub deficit_sign_agrees: Option<bool>,
    /// `log10 |measured/predicted|` rounded to the nearest integer.
    pub deficit_magnitude_class: Option<i32>,
}

/// Reduces an angle to `(−π, π]`.
fn principal<T: Real>(x: T) -> T {
    let tau = T::TAU();
    let r = x - tau * ((x + T::PI()) / tau).floor();
    if r == -T::PI() {
        T::PI()
    } else {
        r
    }
}

/// Compares an oracle run with the rate and phase predictions for the same
/// protocol, using the discretized bath's own Lamb-shift sum.
pub fn compare_with_langevin<T: Real>(
    oracle: &OracleResult<T>,
    rates: &RateSet<T>,
    phases: &PhaseResult<T>,
    context: &ComparisonContext<'_, T>,
) -> Result<ComparisonReport<T>> {
    let protocol = context.protocol;
    let ideal = ideal_berry_phase(protocol.theta());
    if phases.phi_berry_ideal != ideal || phases.window.omega != protocol.omega() || phases.window.omega0 != protocol.omega0()
    {
        return Err(Error::Mismatch("phase result was computed for a different protocol".into()));
    }
    if phases.correction_fraction != rates.prob_vt {
        return Err(Error::Mismatch("phase result and rate set disagree on Prob_vt".into()));
    }
    if oracle.times.is_empty() {
        return Err(Error::Mismatch("oracle result has no samples".into()));
    }
    let (st, ct) = protocol.theta().sin_cos();
    let decay_predicted = transverse_decay_rate(rates, protocol.theta());
    let decay_discrete =
        st * st * discrete_gamma_perp(context.bath, protocol.omega0()) + T::lit(4.0) * ct * ct * rates.gamma_par;
    let decay_fitted = oracle.fit_decay(context.fit_window.0, context.fit_window.1);
    let decay_relative_error = decay_fitted.and_then(|f| {
        if decay_discrete > T::zero() {
            Some((f - decay_discrete).abs() / decay_discrete)
        } else {
            None
        }
    });

    let period = protocol.period();
    let phi_d_discrete = (protocol.b0() + st * st * discrete_lambda0(context.bath, protocol.b0())) * period;
    let phase_predicted = phi_d_discrete - phases.phi_g;
    let end = oracle
        .times
        .iter()
        .position(|t| (*t - period).abs() <= T::lit(1e-9) * period)
        .or_else(|| {
            let last = *oracle.times.last()?;
            ((last - period).abs() <= T::lit(1e-9) * period).then_some(oracle.times.len() - 1)
        });
    let phase_measured = end.map(|i| oracle.phase[i] - oracle.phase[0]);
    let phase_residual = phase_measured.map(|m| m - phase_predicted);

    let deficit_predicted = ideal * rates.prob_vt;
    let deficit_measured = match (phase_measured, context.closed_phase) {
        (Some(m), Some(closed)) => {
            let offset = principal(closed - protocol.omega0() * period);
            let phi_g_measured = phi_d_discrete - (m - offset);
            Some(ideal - phi_g_measured)
        }
        _ => None,
    };
    let deficit_sign_agrees = deficit_measured.map(|d| d.signum() == deficit_predicted.signum());
    let deficit_magnitude_class = deficit_measured.and_then(|d| {
        if d == T::zero() || deficit_predicted == T::zero() {
            None
        } else {
            (d / deficit_predicted).abs().log10().round().to_i32()
        }
    });
    Ok(ComparisonReport {
        decay_fitted,
        decay_predicted,
        decay_discrete,
        decay_relative_error,
        phase_measured,
        phase_predicted,
        phase_residual,
        deficit_measured,
        deficit_predicted,
        deficit_sign_agrees,
        deficit_magnitude_class,
    })
}

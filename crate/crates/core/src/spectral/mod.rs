//! Bath spectral weights and the decay-rate / level-shift integrals.
//!
//! Every rate and shift is an integral of the spectral weight
//! `J(ω) = ρ(ω)·g(ω)²` against a kernel. The delta-function kernels give the
//! decay constants, the principal-value kernels give the shifts, and the
//! double-pole kernel gives the virtual-transition weight that corrects the
//! geometric phase.

pub mod quadrature;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adiabatic::FieldProtocol;
use crate::error::{Error, Result};
use crate::scalar::Real;

pub use quadrature::{Estimate, Quadrature};

/// Relative infrared floor, in units of the field magnitude, used when the
/// integrand carries a non-integrable `1/ω` at zero frequency.
pub const INFRARED_FLOOR: f64 = 1e-6;

/// Relative step of the central difference of `λ0` in `ω0`.
pub const FINITE_DIFFERENCE_STEP: f64 = 1e-4;

/// Relative agreement demanded between the two kernel-integral routes.
pub const KERNEL_AGREEMENT: f64 = 1e-4;

/// Shape of the spectral weight on `[0, ω_c]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SpectralKind<T> {
    /// `J(ω) = α`.
    Flat,
    /// `J(ω) = α·ω`.
    Ohmic,
    /// `J(ω) = α·(w/π) / ((ω − ω_L)² + w²)`.
    Lorentzian { center: T, width: T },
}

impl<T> SpectralKind<T> {
    pub fn name(&self) -> &'static str {
        match self {
            SpectralKind::Flat => "flat",
            SpectralKind::Ohmic => "ohmic",
            SpectralKind::Lorentzian { .. } => "lorentzian",
        }
    }
}

/// Kind names without parameters; lorentzian parameters are attached by
/// [`SpectralKind::lorentzian`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KindName {
    Flat,
    Ohmic,
    Lorentzian,
}

impl FromStr for KindName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(KindName::Flat),
            "ohmic" => Ok(KindName::Ohmic),
            "lorentzian" => Ok(KindName::Lorentzian),
            other => Err(Error::Config(format!("unknown spectral kind '{other}'"))),
        }
    }
}

impl fmt::Display for KindName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KindName::Flat => "flat",
            KindName::Ohmic => "ohmic",
            KindName::Lorentzian => "lorentzian",
        })
    }
}

impl<T: Real> SpectralKind<T> {
    pub fn lorentzian(center: T, width: T) -> Result<Self> {
        if !(width > T::zero()) || !center.is_finite() {
            return Err(Error::Config(format!(
                "lorentzian needs a finite center and positive width, got center={center}, width={width}"
            )));
        }
        Ok(SpectralKind::Lorentzian { center, width })
    }
}

/// A bosonic bath described by its spectral weight, cutoff and temperature.
///
/// `beta = +∞` encodes zero temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralModel<T> {
    pub kind: SpectralKind<T>,
    pub alpha: T,
    pub omega_c: T,
    pub beta: T,
}

impl<T: Real> SpectralModel<T> {
    pub fn new(kind: SpectralKind<T>, alpha: T, omega_c: T, beta: T) -> Result<Self> {
        if !(alpha >= T::zero()) || !alpha.is_finite() {
            return Err(Error::Config(format!("alpha must be finite and >= 0, got {alpha}")));
        }
        if !(omega_c > T::zero()) || !omega_c.is_finite() {
            return Err(Error::Config(format!("omega_c must be finite and > 0, got {omega_c}")));
        }
        if !(beta > T::zero()) {
            return Err(Error::Config(format!("beta must be > 0 (inf for zero temperature), got {beta}")));
        }
        if let SpectralKind::Lorentzian { center, width } = kind {
            SpectralKind::lorentzian(center, width)?;
        }
        Ok(Self {
            kind,
            alpha,
            omega_c,
            beta,
        })
    }

    pub fn flat(alpha: T, omega_c: T, beta: T) -> Result<Self> {
        Self::new(SpectralKind::Flat, alpha, omega_c, beta)
    }

    pub fn ohmic(alpha: T, omega_c: T, beta: T) -> Result<Self> {
        Self::new(SpectralKind::Ohmic, alpha, omega_c, beta)
    }

    pub fn with_alpha(self, alpha: T) -> Result<Self> {
        Self::new(self.kind, alpha, self.omega_c, self.beta)
    }

    pub fn with_beta(self, beta: T) -> Result<Self> {
        Self::new(self.kind, self.alpha, self.omega_c, beta)
    }

    pub fn is_zero_temperature(&self) -> bool {
        self.beta.is_infinite()
    }

    fn in_support(&self, omega: T) -> bool {
        omega >= T::zero() && omega <= self.omega_c
    }

    fn raw_weight(&self, omega: T) -> T {
        match self.kind {
            SpectralKind::Flat => self.alpha,
            SpectralKind::Ohmic => self.alpha * omega,
            SpectralKind::Lorentzian { center, width } => {
                let d = omega - center;
                self.alpha * width / T::PI() / (d * d + width * width)
            }
        }
    }

    fn raw_weight_derivative(&self, omega: T) -> T {
        match self.kind {
            SpectralKind::Flat => T::zero(),
            SpectralKind::Ohmic => self.alpha,
            SpectralKind::Lorentzian { center, width } => {
                let d = omega - center;
                let den = d * d + width * width;
                -T::lit(2.0) * self.alpha * width / T::PI() * d / (den * den)
            }
        }
    }

    /// `J(ω)`, zero outside `[0, ω_c]`.
    pub fn weight(&self, omega: T) -> T {
        if self.in_support(omega) {
            self.raw_weight(omega)
        } else {
            T::zero()
        }
    }

    /// `J'(ω)` inside the support.
    pub fn weight_derivative(&self, omega: T) -> T {
        if self.in_support(omega) {
            self.raw_weight_derivative(omega)
        } else {
            T::zero()
        }
    }

    /// `J(0⁺)`, the value that decides whether `1/ω` kernels diverge.
    pub fn weight_at_zero(&self) -> T {
        self.raw_weight(T::zero())
    }

    /// `J(ω)·(2n(ω) + 1)`; the `ω → 0⁺` limit is returned at `ω = 0`.
    pub fn thermal_weight(&self, omega: T) -> T {
        if !self.in_support(omega) {
            return T::zero();
        }
        if self.is_zero_temperature() {
            return self.raw_weight(omega);
        }
        if omega == T::zero() {
            let j0 = self.raw_weight(T::zero());
            return if j0 > T::zero() {
                T::infinity()
            } else {
                T::lit(2.0) * self.raw_weight_derivative(T::zero()) / self.beta
            };
        }
        let n = (self.beta * omega).exp_m1().recip();
        self.raw_weight(omega) * (T::lit(2.0) * n + T::one())
    }

    /// Derivative of [`thermal_weight`](Self::thermal_weight), `ω > 0`.
    pub fn thermal_weight_derivative(&self, omega: T) -> T {
        if !self.in_support(omega) {
            return T::zero();
        }
        let dj = self.raw_weight_derivative(omega);
        if self.is_zero_temperature() {
            return dj;
        }
        let n = (self.beta * omega).exp_m1().recip();
        let two = T::lit(2.0);
        dj * (two * n + T::one()) - self.raw_weight(omega) * two * self.beta * n * (n + T::one())
    }

    /// Lower integration limit for an integrand carrying `1/ω`; a floor is
    /// used when `J(0⁺) > 0` makes the integral diverge.
    fn infrared_limit(&self, divergent: bool, floor: T, what: &str) -> T {
        if divergent && self.alpha > T::zero() && self.weight_at_zero() > T::zero() {
            log::warn!(
                "{what}: {} spectral weight with J(0+) > 0 is infrared divergent; integrating from floor {floor}",
                self.kind.name()
            );
            floor
        } else {
            T::zero()
        }
    }
}

/// `J(ω)` of the model.
pub fn spectral_weight<T: Real>(model: &SpectralModel<T>, omega: T) -> T {
    model.weight(omega)
}

/// Bose-Einstein occupation `1/(e^{βω} − 1)`; zero at zero temperature.
pub fn thermal_occupation<T: Real>(beta: T, omega: T) -> Result<T> {
    if beta.is_infinite() && beta > T::zero() {
        if omega > T::zero() {
            return Ok(T::zero());
        }
    } else if omega > T::zero() {
        return Ok((beta * omega).exp_m1().recip());
    }
    Err(Error::Domain(format!(
        "thermal occupation needs omega > 0, got {omega}"
    )))
}

/// Transverse decay constant `π·J(ω0)·(2n(ω0)+1)`.
pub fn gamma_perp<T: Real>(model: &SpectralModel<T>, omega0: T) -> T {
    if omega0 > T::zero() && omega0 < model.omega_c {
        T::PI() * model.thermal_weight(omega0)
    } else {
        T::zero()
    }
}

/// Vacuum part of [`gamma_perp`], `π·J(ω0)`.
pub fn gamma_perp_vac<T: Real>(model: &SpectralModel<T>, omega0: T) -> T {
    if omega0 > T::zero() && omega0 < model.omega_c {
        T::PI() * model.weight(omega0)
    } else {
        T::zero()
    }
}

/// Parallel (zero-frequency) decay constant `π·lim_{ω→0⁺} J(ω)(2n(ω)+1)`.
///
/// The boundary delta is taken with full weight.
pub fn gamma_par<T: Real>(model: &SpectralModel<T>) -> Result<T> {
    let j0 = model.weight_at_zero();
    if model.is_zero_temperature() {
        return Ok(T::PI() * j0);
    }
    if j0 > T::zero() {
        return Err(Error::UnphysicalModel(format!(
            "{} spectral weight with J(0+) = {j0} at finite temperature gives a divergent parallel rate",
            model.kind.name()
        )));
    }
    Ok(T::PI() * T::lit(2.0) * model.raw_weight_derivative(T::zero()) / model.beta)
}

/// `P∫_a^b f(ω)/(pole − ω) dω` at the default tolerances.
pub fn principal_value_integral<T: Real, F: Fn(T) -> T>(f: F, pole: T, a: T, b: T) -> Result<T> {
    Ok(Quadrature::default().principal_value(f, pole, a, b)?.value)
}

fn lambda0_with<T: Real>(
    quad: &Quadrature<T>,
    model: &SpectralModel<T>,
    omega0: T,
    lower: T,
) -> Result<T> {
    if model.alpha == T::zero() {
        return Ok(T::zero());
    }
    let f = |w: T| model.thermal_weight(w);
    let resonant = quad.principal_value(f, omega0, lower, model.omega_c)?;
    let counter = quad.integrate(|w| f(w) / (omega0 + w), lower, model.omega_c)?;
    Ok(resonant.value + counter.value)
}

fn thermal_floor<T: Real>(model: &SpectralModel<T>, b0: T, what: &str) -> T {
    model.infrared_limit(!model.is_zero_temperature(), T::lit(INFRARED_FLOOR) * b0, what)
}

fn check_positive<T: Real>(name: &str, value: T) -> Result<()> {
    if value > T::zero() && value.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be finite and > 0, got {value}")))
    }
}

/// Lamb-shift integral `∫ J(2n+1)[P/(B0−ω) + 1/(B0+ω)] dω` over `[0, ω_c]`.
pub fn lambda0<T: Real>(model: &SpectralModel<T>, b0: T) -> Result<T> {
    check_positive("B0", b0)?;
    let lower = thermal_floor(model, b0, "lambda0");
    lambda0_with(&Quadrature::default(), model, b0, lower)
}

/// The double-pole integral `∫ J(2n+1)[1/(B0−ω)² + 1/(B0+ω)²] dω` by two
/// independent routes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelIntegral<T> {
    /// `−∂λ0/∂ω0` at `ω0 = B0`, five-point central difference with step `1e-4·B0`.
    pub finite_difference: T,
    /// Hadamard finite part with second-order subtraction at the pole.
    pub finite_part: T,
}

impl<T: Real> KernelIntegral<T> {
    /// The primary value (finite-difference route).
    pub fn value(&self) -> T {
        self.finite_difference
    }

    pub fn relative_disagreement(&self) -> T {
        let scale = self.finite_difference.abs().max(self.finite_part.abs());
        if scale == T::zero() {
            T::zero()
        } else {
            (self.finite_difference - self.finite_part).abs() / scale
        }
    }

    /// Fails with both values when the routes disagree beyond
    /// [`KERNEL_AGREEMENT`].
    pub fn checked(self) -> Result<T> {
        let diff = (self.finite_difference - self.finite_part).abs();
        let scale = self.finite_difference.abs().max(self.finite_part.abs());
        if diff <= T::lit(KERNEL_AGREEMENT) * scale + T::lit(1e-12) {
            Ok(self.value())
        } else {
            Err(Error::MethodDisagreement {
                finite_difference: self.finite_difference.as_f64(),
                finite_part: self.finite_part.as_f64(),
            })
        }
    }
}

/// Evaluates the double-pole kernel integral at `B0` both ways.
pub fn kernel_integral<T: Real>(model: &SpectralModel<T>, b0: T) -> Result<KernelIntegral<T>> {
    check_positive("B0", b0)?;
    if model.alpha == T::zero() {
        return Ok(KernelIntegral {
            finite_difference: T::zero(),
            finite_part: T::zero(),
        });
    }
    let lower = thermal_floor(model, b0, "kernel integral");

    // Tighter than the default so the difference quotient is not dominated
    // by quadrature noise.
    let tight = Quadrature::new(T::lit(1e-15), T::lit(1e-12));
    let h = T::lit(FINITE_DIFFERENCE_STEP) * b0;
    let at = |k: f64| lambda0_with(&tight, model, b0 + h * T::lit(k), lower);
    // five-point central stencil, truncation O(h⁴)
    let finite_difference =
        (at(2.0)? - T::lit(8.0) * at(1.0)? + T::lit(8.0) * at(-1.0)? - at(-2.0)?) / (T::lit(12.0) * h);

    let quad = Quadrature::new(T::lit(1e-12), T::lit(1e-10));
    let f = |w: T| model.thermal_weight(w);
    let (f_pole, df_pole) = if b0 < model.omega_c {
        (model.thermal_weight(b0), model.thermal_weight_derivative(b0))
    } else {
        (T::zero(), T::zero())
    };
    let resonant = quad.finite_part(f, f_pole, df_pole, b0, lower, model.omega_c)?;
    let counter = quad.integrate(
        |w| {
            let s = b0 + w;
            f(w) / (s * s)
        },
        lower,
        model.omega_c,
    )?;
    Ok(KernelIntegral {
        finite_difference,
        finite_part: resonant.value + counter.value,
    })
}

/// `O(Ω)` shift `δλ = Ω·cosθ·∫ J(2n+1)[1/(B0−ω)² + 1/(B0+ω)²] dω`.
pub fn delta_lambda<T: Real>(model: &SpectralModel<T>, b0: T, omega: T, theta: T) -> Result<T> {
    if omega == T::zero() {
        return Ok(T::zero());
    }
    let kernel = kernel_integral(model, b0)?.checked()?;
    Ok(omega * theta.cos() * kernel)
}

/// Virtual-transition probability `sin²θ·∫ J(2n+1)[1/(B0−ω)² + 1/(B0+ω)²] dω`.
pub fn prob_virtual_transitions<T: Real>(model: &SpectralModel<T>, b0: T, theta: T) -> Result<T> {
    let kernel = kernel_integral(model, b0)?.checked()?;
    let s = theta.sin();
    Ok(s * s * kernel)
}

/// `ξ = ∫ J[2/ω − P/(ω0−ω) + 1/(ω0+ω)] dω` with the infrared floor at
/// `1e-6·ω0` when `J(0⁺) > 0`.
pub fn xi_shift<T: Real>(model: &SpectralModel<T>, omega0: T) -> Result<T> {
    xi_shift_with_floor(model, omega0, T::lit(INFRARED_FLOOR) * omega0)
}

/// [`xi_shift`] with an explicit infrared floor.
pub fn xi_shift_with_floor<T: Real>(model: &SpectralModel<T>, omega0: T, floor: T) -> Result<T> {
    check_positive("omega0", omega0)?;
    if model.alpha == T::zero() {
        return Ok(T::zero());
    }
    let lower = model.infrared_limit(true, floor, "xi");
    if !(lower >= T::zero()) || lower >= model.omega_c {
        return Err(Error::UnphysicalModel(format!(
            "infrared floor {lower} outside the spectral support"
        )));
    }
    let quad = Quadrature::default();
    let j = |w: T| model.weight(w);
    let zero_mode = quad.integrate(|w| T::lit(2.0) * j(w) / w, lower, model.omega_c)?;
    let resonant = quad.principal_value(j, omega0, lower, model.omega_c)?;
    let counter = quad.integrate(|w| j(w) / (omega0 + w), lower, model.omega_c)?;
    let value = zero_mode.value - resonant.value + counter.value;
    if !value.is_finite() {
        return Err(Error::UnphysicalModel("xi shift diverges".into()));
    }
    Ok(value)
}

/// All decay constants and shifts for one bath and field protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateSet<T> {
    /// `γ⊥` at the effective splitting `ω0`.
    pub gamma_perp: T,
    /// `γ⊥` at `B0`; differs from `gamma_perp` at `O(Ω)`.
    pub gamma_perp_b0: T,
    pub gamma_perp_vac: T,
    pub gamma_par: T,
    pub lambda0: T,
    pub delta_lambda: T,
    pub xi: T,
    pub prob_vt: T,
}

impl<T: Real> RateSet<T> {
    pub fn zero() -> Self {
        Self {
            gamma_perp: T::zero(),
            gamma_perp_b0: T::zero(),
            gamma_perp_vac: T::zero(),
            gamma_par: T::zero(),
            lambda0: T::zero(),
            delta_lambda: T::zero(),
            xi: T::zero(),
            prob_vt: T::zero(),
        }
    }

    /// The full shift `λ = λ0 + δλ` entering the equations of motion.
    pub fn lambda(&self) -> T {
        self.lambda0 + self.delta_lambda
    }

    /// `(name, value)` pairs in a fixed order.
    pub fn fields(&self) -> [(&'static str, T); 8] {
        [
            ("gamma_perp", self.gamma_perp),
            ("gamma_perp_b0", self.gamma_perp_b0),
            ("gamma_perp_vac", self.gamma_perp_vac),
            ("gamma_par", self.gamma_par),
            ("lambda0", self.lambda0),
            ("delta_lambda", self.delta_lambda),
            ("xi", self.xi),
            ("prob_vt", self.prob_vt),
        ]
    }
}

/// Evaluates every rate and shift for `model` driven by `protocol`.
pub fn compute_rate_set<T: Real>(model: &SpectralModel<T>, protocol: &FieldProtocol<T>) -> Result<RateSet<T>> {
    let b0 = protocol.b0();
    let omega0 = protocol.omega0();
    let kernel = kernel_integral(model, b0)?.checked()?;
    let (sin, cos) = protocol.theta().sin_cos();
    Ok(RateSet {
        gamma_perp: gamma_perp(model, omega0),
        gamma_perp_b0: gamma_perp(model, b0),
        gamma_perp_vac: gamma_perp_vac(model, omega0),
        gamma_par: gamma_par(model)?,
        lambda0: lambda0(model, b0)?,
        delta_lambda: protocol.omega() * cos * kernel,
        xi: xi_shift_with_floor(model, omega0, T::lit(INFRARED_FLOOR) * b0)?,
        prob_vt: sin * sin * kernel,
    })
}

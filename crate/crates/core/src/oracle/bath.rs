//! Discretized bosonic bath, truncated Fock space and thermal sampling.

use num_complex::Complex;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::spectral::{gamma_perp, thermal_occupation, SpectralModel};

/// Largest admissible `2·(n_max+1)^M`.
pub const DIMENSION_LIMIT: usize = 16384;

/// Frequency placement of the bath modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "grid", rename_all = "snake_case")]
pub enum Grid<T> {
    /// Equal cells on `[0, ω_c]`.
    Linear,
    /// Half the modes in equal cells on `center ± half_width`, the rest
    /// spread over the two flanks in proportion to their length.
    ResonanceRefined { center: T, half_width: T },
}

impl<T: Real> Grid<T> {
    /// Refinement band of `±5γ⊥` around `b0`.
    pub fn resonance(model: &SpectralModel<T>, b0: T) -> Result<Self> {
        let gamma = gamma_perp(model, b0);
        if !(gamma > T::zero()) {
            return Err(Error::Config(format!(
                "resonance-refined grid needs gamma_perp(B0) > 0, got {gamma}"
            )));
        }
        Ok(Self::ResonanceRefined {
            center: b0,
            half_width: T::lit(5.0) * gamma,
        })
    }
}

/// Midpoint-rule bath: `g_k² = J(ω_k)·Δω_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BathDiscretization<T> {
    frequencies: Vec<T>,
    couplings: Vec<T>,
    cells: Vec<(T, T)>,
    n_max: usize,
    beta: T,
}

impl<T: Real> BathDiscretization<T> {
    /// No modes; the spin is closed.
    pub fn empty() -> Self {
        Self {
            frequencies: Vec::new(),
            couplings: Vec::new(),
            cells: Vec::new(),
            n_max: 0,
            beta: T::infinity(),
        }
    }

    /// Explicit modes; `cells` are the quadrature cells each mode stands for.
    pub fn from_modes(frequencies: Vec<T>, couplings: Vec<T>, cells: Vec<(T, T)>, n_max: usize, beta: T) -> Result<Self> {
        let m = frequencies.len();
        if couplings.len() != m || cells.len() != m {
            return Err(Error::Config("mode arrays differ in length".into()));
        }
        if frequencies.windows(2).any(|w| !(w[0] < w[1])) || frequencies.iter().any(|&w| !(w > T::zero())) {
            return Err(Error::Config("mode frequencies must be positive and strictly increasing".into()));
        }
        if !(beta > T::zero()) {
            return Err(Error::Config(format!("beta must be > 0, got {beta}")));
        }
        check_dimension(m, n_max)?;
        Ok(Self {
            frequencies,
            couplings,
            cells,
            n_max,
            beta,
        })
    }

    pub fn mode_count(&self) -> usize {
        self.frequencies.len()
    }

    pub fn frequencies(&self) -> &[T] {
        &self.frequencies
    }

    pub fn couplings(&self) -> &[T] {
        &self.couplings
    }

    /// `[a_k, b_k]` with `ω_k` at the midpoint.
    pub fn cells(&self) -> &[(T, T)] {
        &self.cells
    }

    pub fn fock_cutoff(&self) -> usize {
        self.n_max
    }

    pub fn beta(&self) -> T {
        self.beta
    }

    /// Thermal mean occupation of each mode.
    pub fn mean_occupations(&self) -> Vec<T> {
        self.frequencies
            .iter()
            .map(|&w| thermal_occupation(self.beta, w).unwrap_or(T::zero()))
            .collect()
    }

    /// `Σ g_k²`.
    pub fn total_weight(&self) -> T {
        self.couplings.iter().fold(T::zero(), |acc, &g| acc + g * g)
    }

    /// `2·(n_max+1)^M`.
    pub fn dimension(&self) -> usize {
        2 * fock_dimension(self.mode_count(), self.n_max).unwrap_or(usize::MAX / 2)
    }

    pub fn with_fock_cutoff(&self, n_max: usize) -> Result<Self> {
        check_dimension(self.mode_count(), n_max)?;
        Ok(Self { n_max, ..self.clone() })
    }

    /// Couplings scaled by `s` (`J → s²J`).
    pub fn scaled(&self, s: T) -> Self {
        Self {
            couplings: self.couplings.iter().map(|&g| g * s).collect(),
            ..self.clone()
        }
    }
}

fn fock_dimension(modes: usize, n_max: usize) -> Option<usize> {
    let levels = n_max.checked_add(1)?;
    (0..modes).try_fold(1usize, |acc, _| acc.checked_mul(levels))
}

fn check_dimension(modes: usize, n_max: usize) -> Result<()> {
    match fock_dimension(modes, n_max).and_then(|d| d.checked_mul(2)) {
        Some(d) if d <= DIMENSION_LIMIT => Ok(()),
        d => Err(Error::DimensionGuard {
            dimension: d.unwrap_or(usize::MAX),
            limit: DIMENSION_LIMIT,
        }),
    }
}

/// Midpoint cells of `grid` over `[0, ω_c]` with `M` modes.
pub fn discretize_bath<T: Real>(model: &SpectralModel<T>, m: usize, grid: Grid<T>, n_max: usize) -> Result<BathDiscretization<T>> {
    if m == 0 {
        return Err(Error::Config("bath needs at least one mode".into()));
    }
    check_dimension(m, n_max)?;
    let cells = match grid {
        Grid::Linear => split(T::zero(), model.omega_c, m),
        Grid::ResonanceRefined { center, half_width } => refined_cells(model.omega_c, m, center, half_width)?,
    };
    let mut frequencies = Vec::with_capacity(m);
    let mut couplings = Vec::with_capacity(m);
    for &(a, b) in &cells {
        let w = T::lit(0.5) * (a + b);
        frequencies.push(w);
        couplings.push((model.weight(w) * (b - a)).sqrt());
    }
    BathDiscretization::from_modes(frequencies, couplings, cells, n_max, model.beta)
}

fn split<T: Real>(a: T, b: T, n: usize) -> Vec<(T, T)> {
    let width = (b - a) / T::lit(n as f64);
    (0..n)
        .map(|i| {
            let lo = a + width * T::lit(i as f64);
            let hi = if i + 1 == n { b } else { a + width * T::lit((i + 1) as f64) };
            (lo, hi)
        })
        .collect()
}

fn refined_cells<T: Real>(omega_c: T, m: usize, center: T, half_width: T) -> Result<Vec<(T, T)>> {
    let lo = center - half_width;
    let hi = center + half_width;
    if !(half_width > T::zero()) || !(lo > T::zero()) || !(hi < omega_c) {
        return Err(Error::Config(format!(
            "refinement band [{lo}, {hi}] must lie inside (0, omega_c = {omega_c})"
        )));
    }
    let inner = (m / 2).max(1);
    let outer = m - inner;
    let left_len = lo;
    let right_len = omega_c - hi;
    let share = (left_len / (left_len + right_len)).as_f64();
    let mut left = (outer as f64 * share).round() as usize;
    if outer >= 2 {
        left = left.clamp(1, outer - 1);
    }
    left = left.min(outer);
    let right = outer - left;
    let mut cells = Vec::with_capacity(m);
    if left > 0 {
        cells.extend(split(T::zero(), lo, left));
    }
    cells.extend(split(lo, hi, inner));
    if right > 0 {
        cells.extend(split(hi, omega_c, right));
    }
    Ok(cells)
}

/// `P(n) = (1 − e^{−βω}) e^{−βωn}`, the untruncated thermal distribution.
pub fn occupation_probability<T: Real>(beta: T, omega: T, n: usize) -> T {
    if beta.is_infinite() {
        return if n == 0 { T::one() } else { T::zero() };
    }
    let x = beta * omega;
    -(-x).exp_m1() * (-x * T::lit(n as f64)).exp()
}

/// Initial bath configuration.
#[derive(Debug, Clone, PartialEq)]
pub enum ThermalEnsemble {
    /// All modes in the vacuum.
    Vacuum,
    /// Number-state samples drawn per mode, `samples[r][k] = n_k`.
    Sampled { seed: u64, samples: Vec<Vec<usize>> },
}

impl ThermalEnsemble {
    pub fn occupations(&self, modes: usize) -> Vec<Vec<usize>> {
        match self {
            Self::Vacuum => vec![vec![0; modes]],
            Self::Sampled { samples, .. } => samples.clone(),
        }
    }

    pub fn seed(&self) -> Option<u64> {
        match self {
            Self::Vacuum => None,
            Self::Sampled { seed, .. } => Some(*seed),
        }
    }
}

/// Vacuum for `β = ∞`, otherwise `samples` number-state draws from the
/// thermal distribution truncated to `n_max − 1`; sample `r` uses stream `r`.
pub fn thermal_initial_state<T: Real>(bath: &BathDiscretization<T>, samples: usize, seed: u64) -> ThermalEnsemble {
    if bath.beta().is_infinite() || bath.mode_count() == 0 {
        return ThermalEnsemble::Vacuum;
    }
    let draws = (0..samples)
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(r as u64);
            sample_occupations(bath, &mut rng)
        })
        .collect();
    ThermalEnsemble::Sampled { seed, samples: draws }
}

/// One number state per mode by inverse CDF of the truncated distribution.
/// Draws stop one level below the cutoff so the top level starts empty and
/// its occupancy measures truncation.
pub fn sample_occupations<T: Real, R: Rng>(bath: &BathDiscretization<T>, rng: &mut R) -> Vec<usize> {
    let top = bath.fock_cutoff().saturating_sub(1);
    bath.frequencies()
        .iter()
        .map(|&w| {
            let weights: Vec<f64> = (0..=top)
                .map(|n| occupation_probability(bath.beta(), w, n).as_f64())
                .collect();
            let total: f64 = weights.iter().sum();
            let u = rng.random::<f64>() * total;
            let mut acc = 0.0;
            for (n, p) in weights.iter().enumerate() {
                acc += p;
                if u < acc {
                    return n;
                }
            }
            top
        })
        .collect()
}

/// Truncated multi-mode Fock space, mode 0 least significant.
#[derive(Debug, Clone, PartialEq)]
pub struct FockSpace<T> {
    frequencies: Vec<T>,
    couplings: Vec<T>,
    levels: usize,
    strides: Vec<usize>,
    energies: Vec<T>,
    dimension: usize,
}

impl<T: Real> FockSpace<T> {
    pub fn new(bath: &BathDiscretization<T>) -> Result<Self> {
        check_dimension(bath.mode_count(), bath.fock_cutoff())?;
        let levels = bath.fock_cutoff() + 1;
        let m = bath.mode_count();
        let mut strides = Vec::with_capacity(m);
        let mut stride = 1usize;
        for _ in 0..m {
            strides.push(stride);
            stride *= levels;
        }
        let dimension = stride;
        let energies = (0..dimension)
            .map(|j| {
                (0..m).fold(T::zero(), |acc, k| {
                    acc + bath.frequencies()[k] * T::lit(((j / strides[k]) % levels) as f64)
                })
            })
            .collect();
        Ok(Self {
            frequencies: bath.frequencies().to_vec(),
            couplings: bath.couplings().to_vec(),
            levels,
            strides,
            energies,
            dimension,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn modes(&self) -> usize {
        self.frequencies.len()
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    /// Diagonal of `Σ ω_k a†_k a_k`.
    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    /// Occupation of mode `k` in basis state `j`.
    pub fn occupation(&self, j: usize, k: usize) -> usize {
        (j / self.strides[k]) % self.levels
    }

    /// Basis index of a number state.
    pub fn index(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.modes() {
            return Err(Error::Config(format!(
                "expected {} occupations, got {}",
                self.modes(),
                occupations.len()
            )));
        }
        occupations.iter().zip(&self.strides).try_fold(0usize, |acc, (&n, &s)| {
            if n >= self.levels {
                Err(Error::Config(format!("occupation {n} exceeds cutoff {}", self.levels - 1)))
            } else {
                Ok(acc + n * s)
            }
        })
    }

    /// `out = Σ_k g_k (a_k + a†_k) psi`.
    pub fn apply_displacement(&self, psi: &[Complex<T>], out: &mut [Complex<T>]) {
        out.iter_mut().for_each(|x| *x = Complex::new(T::zero(), T::zero()));
        let top = self.levels - 1;
        let roots: Vec<T> = (0..self.levels).map(|n| T::lit(n as f64).sqrt()).collect();
        for (j, &amp) in psi.iter().enumerate() {
            if amp.re == T::zero() && amp.im == T::zero() {
                continue;
            }
            for (k, &stride) in self.strides.iter().enumerate() {
                let n = (j / stride) % self.levels;
                let g = self.couplings[k];
                if n < top {
                    out[j + stride] = out[j + stride] + amp * (g * roots[n + 1]);
                }
                if n > 0 {
                    out[j - stride] = out[j - stride] + amp * (g * roots[n]);
                }
            }
        }
    }

    /// Probability weight of `psi` (one spin component) on states with some
    /// mode at the cutoff.
    pub fn top_level_weight(&self, psi: &[Complex<T>]) -> T {
        if self.modes() == 0 {
            return T::zero();
        }
        let top = self.levels - 1;
        psi.iter()
            .enumerate()
            .filter(|(j, _)| (0..self.modes()).any(|k| self.occupation(*j, k) == top))
            .fold(T::zero(), |acc, (_, a)| acc + a.norm_sqr())
    }
}

/// Independent-boson decoherence exponent
/// `Γ(t) = Σ_k 4 g_k² (2n_k+1)(1 − cos ω_k t)/ω_k²`.
pub fn pure_dephasing_reference<T: Real>(bath: &BathDiscretization<T>, t: T) -> T {
    bath.frequencies()
        .iter()
        .zip(bath.couplings())
        .zip(bath.mean_occupations())
        .fold(T::zero(), |acc, ((&w, &g), n)| {
            let half = T::lit(0.5) * w * t;
            // 1 − cos x = 2 sin²(x/2)
            let one_minus_cos = T::lit(2.0) * half.sin() * half.sin();
            acc + T::lit(4.0) * g * g * (T::lit(2.0) * n + T::one()) * one_minus_cos / (w * w)
        })
}

/// Discrete analogue of `λ0(B0)`: each cell contributes its principal value
/// with `J` held at the midpoint value.
pub fn discrete_lambda0<T: Real>(bath: &BathDiscretization<T>, b0: T) -> T {
    let occupations = bath.mean_occupations();
    let mut sum = T::zero();
    for (k, &(a, b)) in bath.cells().iter().enumerate() {
        let g2 = bath.couplings()[k] * bath.couplings()[k];
        let w = bath.frequencies()[k];
        let thermal = T::lit(2.0) * occupations[k] + T::one();
        let resonant = if a < b0 && b0 < b {
            g2 / (b - a) * ((b0 - a) / (b - b0)).ln()
        } else {
            g2 / (b0 - w)
        };
        sum = sum + thermal * (resonant + g2 / (b0 + w));
    }
    sum
}

/// Discrete analogue of `γ⊥(ω0)`: `π g²/Δω (2n+1)` of the cell holding `ω0`.
pub fn discrete_gamma_perp<T: Real>(bath: &BathDiscretization<T>, omega0: T) -> T {
    let occupations = bath.mean_occupations();
    bath.cells()
        .iter()
        .enumerate()
        .find(|(_, &(a, b))| a <= omega0 && omega0 < b)
        .map(|(k, &(a, b))| {
            let g = bath.couplings()[k];
            T::PI() * g * g / (b - a) * (T::lit(2.0) * occupations[k] + T::one())
        })
        .unwrap_or(T::zero())
}

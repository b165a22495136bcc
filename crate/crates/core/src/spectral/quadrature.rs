//! Adaptive Gauss-Kronrod quadrature with singularity subtraction for
//! Cauchy principal values and Hadamard finite parts.

// tabulated nodes and weights keep their published digits
#![allow(clippy::excessive_precision)]

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::scalar::Real;

// 21-point Kronrod abscissae on [0, 1], the last entry is the centre.
const XGK: [f64; 11] = [
    0.995_657_163_025_808_080_735_527_280_689,
    0.973_906_528_517_171_720_077_964_012_084,
    0.930_157_491_355_708_226_001_207_180_060,
    0.865_063_366_688_984_510_732_096_688_423,
    0.780_817_726_586_416_897_063_717_578_345,
    0.679_409_568_299_024_406_234_327_365_115,
    0.562_757_134_668_604_683_339_000_099_273,
    0.433_395_394_129_247_190_799_265_943_166,
    0.294_392_862_701_460_198_131_126_603_104,
    0.148_874_338_981_631_210_884_826_001_130,
    0.0,
];

const WGK: [f64; 11] = [
    0.011_694_638_867_371_874_278_064_396_062,
    0.032_558_162_307_964_727_478_818_972_459,
    0.054_755_896_574_351_996_031_381_300_245,
    0.075_039_674_810_919_952_767_043_140_916,
    0.093_125_454_583_697_605_535_065_465_083,
    0.109_387_158_802_297_641_899_210_590_326,
    0.123_491_976_262_065_851_077_208_031_737,
    0.134_709_217_311_473_325_928_054_001_772,
    0.142_775_938_577_060_080_797_094_273_139,
    0.147_739_104_901_338_491_374_841_515_972,
    0.149_445_554_002_916_905_664_936_468_390,
];

// 10-point Gauss weights for the odd-indexed Kronrod nodes.
const WG: [f64; 5] = [
    0.066_671_344_308_688_137_593_568_809_893,
    0.149_451_349_150_580_593_145_776_339_658,
    0.219_086_362_515_982_043_995_534_934_228,
    0.269_266_719_309_996_355_091_226_921_569,
    0.295_524_224_714_752_870_173_892_994_651,
];

/// Value and error estimate of a quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

impl<T: Real> Estimate<T> {
    fn zero() -> Self {
        Self {
            value: T::zero(),
            error: T::zero(),
            intervals: 0,
        }
    }

    fn add(self, other: Self) -> Self {
        Self {
            value: self.value + other.value,
            error: self.error + other.error,
            intervals: self.intervals + other.intervals,
        }
    }

    fn shift(self, constant: T) -> Self {
        Self {
            value: self.value + constant,
            ..self
        }
    }
}

/// Globally adaptive bisection driven by 21-point Gauss-Kronrod rules.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> Default for Quadrature<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-10),
            rel_tol: T::lit(1e-8),
            max_intervals: 4000,
        }
    }
}

struct Segment<T> {
    a: T,
    b: T,
    value: T,
    error: T,
}

impl<T: Real> PartialEq for Segment<T> {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl<T: Real> Eq for Segment<T> {}
impl<T: Real> PartialOrd for Segment<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl<T: Real> Ord for Segment<T> {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error
            .partial_cmp(&other.error)
            .unwrap_or(Ordering::Equal)
    }
}

fn kronrod21<T: Real, F: Fn(T) -> T>(f: &F, a: T, b: T) -> (T, T) {
    let half = T::lit(0.5);
    let centre = half * (a + b);
    let half_len = half * (b - a);
    let f_centre = f(centre);

    let mut kronrod = f_centre * T::lit(WGK[10]);
    let mut gauss = T::zero();
    let mut res_abs = kronrod.abs();
    let mut fv = [(T::zero(), T::zero()); 10];
    for j in 0..10 {
        let dx = half_len * T::lit(XGK[j]);
        let f1 = f(centre - dx);
        let f2 = f(centre + dx);
        fv[j] = (f1, f2);
        kronrod = kronrod + T::lit(WGK[j]) * (f1 + f2);
        res_abs = res_abs + T::lit(WGK[j]) * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss = gauss + T::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = kronrod * half;
    let mut res_asc = T::lit(WGK[10]) * (f_centre - mean).abs();
    for (j, (f1, f2)) in fv.iter().enumerate() {
        res_asc = res_asc + T::lit(WGK[j]) * ((*f1 - mean).abs() + (*f2 - mean).abs());
    }

    let scale = half_len.abs();
    let value = kronrod * half_len;
    let res_abs = res_abs * scale;
    let res_asc = res_asc * scale;
    let mut err = ((kronrod - gauss) * half_len).abs();
    if res_asc != T::zero() && err != T::zero() {
        let ratio = (T::lit(200.0) * err / res_asc).powf(T::lit(1.5));
        err = if ratio < T::one() { res_asc * ratio } else { res_asc };
    }
    let floor = T::lit(50.0) * T::epsilon() * res_abs;
    if res_abs > T::min_positive_value() / (T::lit(50.0) * T::epsilon()) && floor > err {
        err = floor;
    }
    (value, err)
}

impl<T: Real> Quadrature<T> {
    pub fn new(abs_tol: T, rel_tol: T) -> Self {
        Self {
            abs_tol,
            rel_tol,
            ..Self::default()
        }
    }

    fn target(&self, value: T) -> T {
        // Relative accuracy below a few hundred ulps is unreachable.
        let rel = self.rel_tol.max(T::lit(100.0) * T::epsilon());
        self.abs_tol.max(rel * value.abs())
    }

    /// Integrates a smooth `f` over `[a, b]` (either orientation).
    pub fn integrate<F: Fn(T) -> T>(&self, f: F, a: T, b: T) -> Result<Estimate<T>> {
        if a == b {
            return Ok(Estimate::zero());
        }
        let (value, error) = kronrod21(&f, a, b);
        let mut total = value;
        let mut total_err = error;
        let mut heap = BinaryHeap::new();
        heap.push(Segment { a, b, value, error });

        while total_err > self.target(total) {
            if heap.len() >= self.max_intervals {
                return Err(Error::Quadrature {
                    a: a.as_f64(),
                    b: b.as_f64(),
                    value: total.as_f64(),
                    error: total_err.as_f64(),
                    intervals: heap.len(),
                });
            }
            let worst = heap.pop().expect("heap is non-empty");
            let mid = T::lit(0.5) * (worst.a + worst.b);
            if mid == worst.a || mid == worst.b {
                // Interval no longer divisible in this precision.
                return Err(Error::Quadrature {
                    a: a.as_f64(),
                    b: b.as_f64(),
                    value: total.as_f64(),
                    error: total_err.as_f64(),
                    intervals: heap.len() + 1,
                });
            }
            let (v1, e1) = kronrod21(&f, worst.a, mid);
            let (v2, e2) = kronrod21(&f, mid, worst.b);
            total = total - worst.value + v1 + v2;
            total_err = total_err - worst.error + e1 + e2;
            heap.push(Segment {
                a: worst.a,
                b: mid,
                value: v1,
                error: e1,
            });
            heap.push(Segment {
                a: mid,
                b: worst.b,
                value: v2,
                error: e2,
            });
            if !total.is_finite() {
                return Err(Error::Quadrature {
                    a: a.as_f64(),
                    b: b.as_f64(),
                    value: total.as_f64(),
                    error: total_err.as_f64(),
                    intervals: heap.len(),
                });
            }
        }
        // Re-sum to shed the drift of the running updates.
        let mut value = T::zero();
        let mut error = T::zero();
        let intervals = heap.len();
        for s in heap {
            value = value + s.value;
            error = error + s.error;
        }
        Ok(Estimate {
            value,
            error,
            intervals,
        })
    }

    fn check_pole(&self, pole: T, a: T, b: T) -> Result<bool> {
        let guard = self.abs_tol.max(T::epsilon() * (b - a).abs());
        for endpoint in [a, b] {
            if (pole - endpoint).abs() <= guard {
                return Err(Error::PoleAtEndpoint {
                    pole: pole.as_f64(),
                    endpoint: endpoint.as_f64(),
                });
            }
        }
        Ok(pole > a.min(b) && pole < a.max(b))
    }

    /// Cauchy principal value of `∫_a^b f(ω) / (pole − ω) dω`, `a < b`.
    ///
    /// Inside the interval the pole is removed by subtracting `f(pole)`; the
    /// regular remainder is integrated on each side of the pole and the
    /// subtracted constant contributes `f(pole)·ln|(pole − a)/(pole − b)|`.
    pub fn principal_value<F: Fn(T) -> T>(&self, f: F, pole: T, a: T, b: T) -> Result<Estimate<T>> {
        if !self.check_pole(pole, a, b)? {
            return self.integrate(|w| f(w) / (pole - w), a, b);
        }
        let f_pole = f(pole);
        let regular = |w: T| (f(w) - f_pole) / (pole - w);
        let left = self.integrate(regular, a, pole)?;
        let right = self.integrate(regular, pole, b)?;
        let log_term = f_pole * ((pole - a) / (b - pole)).abs().ln();
        Ok(left.add(right).shift(log_term))
    }

    /// Hadamard finite part of `∫_a^b f(ω) / (pole − ω)² dω`, `a < b`.
    ///
    /// `f_pole` and `df_pole` are `f` and `f'` at the pole; the second-order
    /// Taylor polynomial is subtracted and integrated in closed form.
    pub fn finite_part<F: Fn(T) -> T>(
        &self,
        f: F,
        f_pole: T,
        df_pole: T,
        pole: T,
        a: T,
        b: T,
    ) -> Result<Estimate<T>> {
        if !self.check_pole(pole, a, b)? {
            return self.integrate(
                |w| {
                    let d = pole - w;
                    f(w) / (d * d)
                },
                a,
                b,
            );
        }
        let regular = |w: T| {
            let d = w - pole;
            (f(w) - f_pole - df_pole * d) / (d * d)
        };
        let left = self.integrate(regular, a, pole)?;
        let right = self.integrate(regular, pole, b)?;
        let closed = -f_pole * (T::one() / (b - pole) + T::one() / (pole - a))
            + df_pole * ((b - pole) / (pole - a)).ln();
        Ok(left.add(right).shift(closed))
    }
}

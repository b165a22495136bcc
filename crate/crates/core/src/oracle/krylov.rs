//! Lanczos approximation of `exp(−iHτ)ψ` for Hermitian `H` given as an
//! action.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Krylov dimension beyond which a step is split instead.
pub const MAX_KRYLOV: usize = 60;

/// Eigen-decomposition of a symmetric tridiagonal matrix by implicit QL.
/// Returns eigenvalues and the row-major orthogonal matrix whose columns
/// are the eigenvectors.
pub fn tridiagonal_eigen<T: Real>(diag: &[T], offdiag: &[T]) -> Result<(Vec<T>, Vec<Vec<T>>)> {
    let n = diag.len();
    let mut d = diag.to_vec();
    let mut e = vec![T::zero(); n];
    e[..n.saturating_sub(1)].copy_from_slice(&offdiag[..n.saturating_sub(1)]);
    let mut v: Vec<Vec<T>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { T::one() } else { T::zero() }).collect())
        .collect();
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();
    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 && e[m].abs() > eps * tst1 {
            m += 1;
        }
        if m > l {
            let mut iterations = 0;
            loop {
                iterations += 1;
                if iterations > 60 {
                    return Err(Error::Integrator("tridiagonal QL iteration did not converge".into()));
                }
                let g = d[l];
                let mut p = (d[l + 1] - g) / (T::lit(2.0) * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for x in d.iter_mut().skip(l + 2) {
                    *x = *x - h;
                }
                f = f + h;
                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    let g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for row in v.iter_mut() {
                        let h = row[i + 1];
                        row[i + 1] = s * row[i] + c * h;
                        row[i] = c * row[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] = d[l] + f;
        e[l] = T::zero();
    }
    Ok((d, v))
}

/// `exp(−iτT) e_1` for the Lanczos tridiagonal `T`.
fn small_propagator<T: Real>(alpha: &[T], beta: &[T], tau: T) -> Result<Vec<Complex<T>>> {
    let (values, vectors) = tridiagonal_eigen(alpha, beta)?;
    let m = alpha.len();
    let phases: Vec<Complex<T>> = (0..m)
        .map(|j| Complex::from_polar(vectors[0][j], -tau * values[j]))
        .collect();
    Ok((0..m)
        .map(|k| {
            (0..m).fold(Complex::new(T::zero(), T::zero()), |acc, j| acc + phases[j] * vectors[k][j])
        })
        .collect())
}

fn dot<T: Real>(a: &[Complex<T>], b: &[Complex<T>]) -> Complex<T> {
    a.iter()
        .zip(b)
        .fold(Complex::new(T::zero(), T::zero()), |acc, (x, y)| acc + x.conj() * y)
}

fn norm<T: Real>(a: &[Complex<T>]) -> T {
    a.iter().fold(T::zero(), |acc, x| acc + x.norm_sqr()).sqrt()
}

/// Outcome of one Krylov step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KrylovStep<T> {
    pub dimension: usize,
    pub error_estimate: T,
}

/// Replaces `psi` by `exp(−iHτ)psi`, growing the Krylov space until the
/// residual estimate `β_m |e_mᵀ exp(−iτT_m) e_1| ‖psi‖` is below `tol`.
/// Returns `None` (leaving `psi` untouched) if `MAX_KRYLOV` is not enough.
pub fn expm_action<T: Real, H>(apply: &H, psi: &mut [Complex<T>], tau: T, tol: T) -> Result<Option<KrylovStep<T>>>
where
    H: Fn(&[Complex<T>], &mut [Complex<T>]),
{
    let n = psi.len();
    let scale = norm(psi);
    if scale == T::zero() {
        return Ok(Some(KrylovStep {
            dimension: 0,
            error_estimate: T::zero(),
        }));
    }
    let mut basis: Vec<Vec<Complex<T>>> = vec![psi.iter().map(|x| x / scale).collect()];
    let mut alpha: Vec<T> = Vec::new();
    let mut beta: Vec<T> = Vec::new();
    let mut w = vec![Complex::new(T::zero(), T::zero()); n];
    let breakdown = T::lit(1e3) * T::epsilon();
    for j in 0..MAX_KRYLOV.min(n) {
        apply(&basis[j], &mut w);
        let a = dot(&basis[j], &w).re;
        alpha.push(a);
        // full reorthogonalisation, two passes
        for _ in 0..2 {
            for v in &basis {
                let c = dot(v, &w);
                for (x, y) in w.iter_mut().zip(v) {
                    *x = *x - y * c;
                }
            }
        }
        let b = norm(&w);
        let m = j + 1;
        let exact = b <= breakdown * (a.abs() + beta.last().copied().unwrap_or(T::zero()) + T::one()) || m == n;
        let y = small_propagator(&alpha, &beta, tau)?;
        let estimate = if exact { T::zero() } else { b * y[m - 1].norm() * scale };
        if exact || estimate <= tol {
            psi.iter_mut().for_each(|x| *x = Complex::new(T::zero(), T::zero()));
            for (v, c) in basis.iter().zip(&y) {
                let c = c * scale;
                for (x, vi) in psi.iter_mut().zip(v) {
                    *x = *x + vi * c;
                }
            }
            return Ok(Some(KrylovStep {
                dimension: m,
                error_estimate: estimate,
            }));
        }
        beta.push(b);
        basis.push(w.iter().map(|x| x / b).collect());
    }
    Ok(None)
}

/// [`expm_action`] with recursive step halving when the Krylov space
/// saturates; gives up below `tau/2^20`.
pub fn propagate<T: Real, H>(apply: &H, psi: &mut [Complex<T>], tau: T, tol: T) -> Result<usize>
where
    H: Fn(&[Complex<T>], &mut [Complex<T>]),
{
    fn go<T: Real, H: Fn(&[Complex<T>], &mut [Complex<T>])>(
        apply: &H,
        psi: &mut [Complex<T>],
        tau: T,
        tol: T,
        depth: u32,
    ) -> Result<usize> {
        if expm_action(apply, psi, tau, tol)?.is_some() {
            return Ok(1);
        }
        if depth >= 20 {
            return Err(Error::Integrator(format!(
                "Krylov exponential failed to converge for step {tau}"
            )));
        }
        let half = tau * T::lit(0.5);
        let a = go(apply, psi, half, tol, depth + 1)?;
        let b = go(apply, psi, half, tol, depth + 1)?;
        Ok(a + b)
    }
    go(apply, psi, tau, tol, 0)
}

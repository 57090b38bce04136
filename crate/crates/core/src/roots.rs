//! Bracketed scalar root refinement (Brent's method).

use thiserror::Error;

use crate::scalar::Real;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RootError {
    #[error("no sign change on [{a}, {b}]: f(a) = {fa}, f(b) = {fb}")]
    NoSignChange { a: f64, b: f64, fa: f64, fb: f64 },
    #[error("function returned non-finite value {fx} at x = {x}")]
    NonFinite { x: f64, fx: f64 },
    #[error("no convergence after {0} iterations")]
    MaxIter(usize),
}

/// Termination criteria for [`brent`].
#[derive(Debug, Clone, Copy)]
pub struct Tolerance<T> {
    /// Stop once the bracket is narrower than this.
    pub xtol: T,
    /// Stop once |f(x)| is at or below this.
    pub ftol: T,
    pub max_iter: usize,
}

impl<T: Real> Default for Tolerance<T> {
    fn default() -> Self {
        Self {
            xtol: T::lit(1e-10).max(T::epsilon() * T::lit(4.0)),
            ftol: T::lit(1e-12),
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Root<T> {
    pub x: T,
    pub fx: T,
    pub iterations: usize,
}

/// Finds a root of `f` in `[a, b]` given `f(a)` and `f(b)` of opposite sign
/// (or one of them zero).
///
/// Combines bisection, secant and inverse quadratic interpolation; the
/// bracket is maintained on every step so the result always lies in `[a, b]`.
pub fn brent<T, F>(mut f: F, a: T, b: T, fa: T, fb: T, tol: Tolerance<T>) -> Result<Root<T>, RootError>
where
    T: Real,
    F: FnMut(T) -> T,
{
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let three = T::lit(3.0);

    if !fa.is_finite() {
        return Err(RootError::NonFinite { x: a.as_f64(), fx: fa.as_f64() });
    }
    if !fb.is_finite() {
        return Err(RootError::NonFinite { x: b.as_f64(), fx: fb.as_f64() });
    }
    if fa.abs() <= tol.ftol {
        return Ok(Root { x: a, fx: fa, iterations: 0 });
    }
    if fb.abs() <= tol.ftol {
        return Ok(Root { x: b, fx: fb, iterations: 0 });
    }
    if fa.signum() == fb.signum() {
        return Err(RootError::NoSignChange {
            a: a.as_f64(),
            b: b.as_f64(),
            fa: fa.as_f64(),
            fb: fb.as_f64(),
        });
    }

    // `b` is the best estimate, `c` the contrapoint, `a` the previous iterate.
    let (mut a, mut b, mut fa, mut fb) = (a, b, fa, fb);
    let (mut c, mut fc) = (a, fa);
    let mut d = b - a;
    let mut e = d;

    for iter in 1..=tol.max_iter {
        if fb.signum() == fc.signum() {
            c = a;
            fc = fa;
            d = b - a;
            e = d;
        }
        if fc.abs() < fb.abs() {
            a = b;
            b = c;
            c = a;
            fa = fb;
            fb = fc;
            fc = fa;
        }

        let tol1 = two * T::epsilon() * b.abs() + half * tol.xtol;
        let xm = half * (c - b);
        if xm.abs() <= tol1 || fb.abs() <= tol.ftol {
            return Ok(Root { x: b, fx: fb, iterations: iter });
        }

        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = two * xm * s;
                q = T::one() - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (two * xm * qq * (qq - r) - (b - a) * (r - T::one()));
                q = (qq - T::one()) * (r - T::one()) * (s - T::one());
            }
            if p > T::zero() {
                q = -q;
            }
            p = p.abs();
            let min1 = three * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if two * p < min1.min(min2) {
                e = d;
                d = p / q;
            } else {
                d = xm;
                e = d;
            }
        } else {
            d = xm;
            e = d;
        }

        a = b;
        fa = fb;
        b = if d.abs() > tol1 { b + d } else { b + tol1.copysign(xm) };
        fb = f(b);
        if !fb.is_finite() {
            return Err(RootError::NonFinite { x: b.as_f64(), fx: fb.as_f64() });
        }
    }
    Err(RootError::MaxIter(tol.max_iter))
}

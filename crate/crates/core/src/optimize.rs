//! Derivative-free one-dimensional minimization on a bracket.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum<T> {
    pub x: T,
    pub f: T,
    pub iterations: usize,
    /// Width of the final bracket.
    pub width: T,
}

/// Golden-section search for a unimodal `f` on `[a, b]`.
pub fn golden_section<T: Real, F: FnMut(T) -> T>(
    mut f: F,
    mut a: T,
    mut b: T,
    tol: T,
    max_iter: usize,
) -> Result<Minimum<T>> {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let mut fc = f(c);
    let mut fd = f(d);
    for it in 0..max_iter {
        if (b - a).abs() <= tol {
            let (x, fx) = if fc < fd { (c, fc) } else { (d, fd) };
            return Ok(Minimum { x, f: fx, iterations: it, width: (b - a).abs() });
        }
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, width: (b - a).abs().to_f64_lossy() })
}

/// Brent's minimizer: golden-section steps safeguarded by successive
/// parabolic interpolation. Stops when the bracket around the current best
/// point is narrower than `2·(tol·|x| + tol)`.
pub fn brent_minimize<T: Real, F: FnMut(T) -> T>(mut f: F, a: T, b: T, tol: T, max_iter: usize) -> Result<Minimum<T>> {
    let two = T::lit(2.0);
    let half = T::lit(0.5);
    let cgold = (T::lit(3.0) - T::lit(5.0).sqrt()) * half;
    let (mut a, mut b) = if a < b { (a, b) } else { (b, a) };
    let mut x = a + cgold * (b - a);
    let (mut w, mut v) = (x, x);
    let mut fx = f(x);
    let (mut fw, mut fv) = (fx, fx);
    let mut d = T::zero();
    let mut e = T::zero();
    for it in 0..max_iter {
        let xm = half * (a + b);
        let tol1 = tol * x.abs() + tol;
        let tol2 = two * tol1;
        if (x - xm).abs() <= tol2 - half * (b - a) {
            return Ok(Minimum { x, f: fx, iterations: it, width: b - a });
        }
        let mut golden = true;
        if e.abs() > tol1 {
            let r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = two * (q - r);
            if q > T::zero() {
                p = -p;
            }
            q = q.abs();
            let etemp = e;
            e = d;
            if !(p.abs() >= (half * q * etemp).abs() || p <= q * (a - x) || p >= q * (b - x)) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
                golden = false;
            }
        }
        if golden {
            e = if x >= xm { a - x } else { b - x };
            d = cgold * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d >= T::zero() {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
    }
    Err(Error::NoConvergence { iterations: max_iter, width: (b - a).to_f64_lossy() })
}

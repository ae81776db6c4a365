//! Bracketing root finders.

use crate::error::{OpcapError, Result};

/// Tolerances shared by the bracketing solvers.
#[derive(Debug, Clone, Copy)]
pub struct RootTolerance {
    pub rel: f64,
    pub abs: f64,
    pub max_iter: usize,
}

impl Default for RootTolerance {
    fn default() -> Self {
        RootTolerance {
            rel: 1e-12,
            abs: 0.0,
            max_iter: 500,
        }
    }
}

impl RootTolerance {
    pub fn relative(rel: f64) -> Self {
        RootTolerance {
            rel,
            ..Default::default()
        }
    }

    fn width_ok(&self, a: f64, b: f64) -> bool {
        let scale = a.abs().max(b.abs());
        (b - a).abs() <= self.rel * scale + self.abs
    }
}

fn check_bracket(fa: f64, fb: f64, a: f64, b: f64) -> Result<()> {
    if fa.is_nan() || fb.is_nan() {
        return Err(OpcapError::Numeric(format!(
            "objective is NaN at bracket end ({a}, {b})"
        )));
    }
    if fa.signum() == fb.signum() && fa != 0.0 && fb != 0.0 {
        return Err(OpcapError::NoSolution(format!(
            "no sign change on [{a}, {b}]: f(a)={fa}, f(b)={fb}"
        )));
    }
    Ok(())
}

/// Plain bisection on `[a, b]`. `f(a)` and `f(b)` must differ in sign.
pub fn bisect<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: RootTolerance) -> Result<f64> {
    let (mut lo, mut hi) = if a <= b { (a, b) } else { (b, a) };
    let mut flo = f(lo);
    let fhi = f(hi);
    check_bracket(flo, fhi, lo, hi)?;
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    for _ in 0..tol.max_iter.max(2000) {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi || tol.width_ok(lo, hi) {
            return Ok(mid);
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Ok(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Brent's method: bisection safeguarded inverse-quadratic / secant steps.
pub fn brent<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, tol: RootTolerance) -> Result<f64> {
    let (mut a, mut b) = (a, b);
    let mut fa = f(a);
    let mut fb = f(b);
    check_bracket(fa, fb, a, b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..tol.max_iter {
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
        let tol1 = 2.0 * f64::EPSILON * b.abs() + 0.5 * (tol.rel * b.abs() + tol.abs);
        let xm = 0.5 * (c - b);
        if xm.abs() <= tol1 || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol1 && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * xm * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let r = fb / fc;
                p = s * (2.0 * xm * qq * (qq - r) - (b - a) * (r - 1.0));
                q = (qq - 1.0) * (r - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            }
            p = p.abs();
            let min1 = 3.0 * xm * q - (tol1 * q).abs();
            let min2 = (e * q).abs();
            if 2.0 * p < min1.min(min2) {
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
        if d.abs() > tol1 {
            b += d;
        } else {
            b += tol1.copysign(xm);
        }
        fb = f(b);
        if fb.is_nan() {
            return Err(OpcapError::Numeric(format!("objective is NaN at {b}")));
        }
    }
    Err(OpcapError::Numeric(
        "Brent iteration limit reached".to_string(),
    ))
}

/// Grows `[lo, hi]` geometrically (factor `growth` on `hi`, `1/growth` on `lo`
/// when `lo > 0`) until `f` changes sign. Returns the bracket found.
pub fn expand_bracket<F: FnMut(f64) -> f64>(
    mut f: F,
    mut lo: f64,
    mut hi: f64,
    growth: f64,
    max_steps: usize,
) -> Result<(f64, f64)> {
    let mut flo = f(lo);
    let mut fhi = f(hi);
    for _ in 0..max_steps {
        if flo.is_nan() || fhi.is_nan() {
            break;
        }
        if flo == 0.0 || fhi == 0.0 || flo.signum() != fhi.signum() {
            return Ok((lo, hi));
        }
        // move whichever end is closer to a root in magnitude
        if fhi.abs() <= flo.abs() || lo <= 0.0 {
            lo = hi;
            flo = fhi;
            hi *= growth;
            fhi = f(hi);
        } else {
            hi = lo;
            fhi = flo;
            lo /= growth;
            flo = f(lo);
        }
    }
    Err(OpcapError::NoSolution(format!(
        "could not bracket a sign change (last bracket [{lo}, {hi}])"
    )))
}

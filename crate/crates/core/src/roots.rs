//! Scalar root finding on a sign-changing bracket.

use crate::error::{Error, Result};

/// Brent's method on [a, b] where f(a) and f(b) have opposite signs.
pub fn brent<F>(mut f: F, a: f64, b: f64, xtol: f64, what: &'static str) -> Result<f64>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (a, b);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(Error::BracketFailure { what, lo: a.min(b), hi: a.max(b) });
    }
    let mut c = a;
    let mut fc = fa;
    let mut d = b - a;
    let mut e = d;
    for _ in 0..300 {
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
        let tol = 2.0 * f64::EPSILON * b.abs() + 0.5 * xtol;
        let m = 0.5 * (c - b);
        if m.abs() <= tol || fb == 0.0 {
            return Ok(b);
        }
        if e.abs() >= tol && fa.abs() > fb.abs() {
            let s = fb / fa;
            let (mut p, mut q);
            if a == c {
                p = 2.0 * m * s;
                q = 1.0 - s;
            } else {
                let qq = fa / fc;
                let rr = fb / fc;
                p = s * (2.0 * m * qq * (qq - rr) - (b - a) * (rr - 1.0));
                q = (qq - 1.0) * (rr - 1.0) * (s - 1.0);
            }
            if p > 0.0 {
                q = -q;
            } else {
                p = -p;
            }
            if 2.0 * p < (3.0 * m * q - (tol * q).abs()).min((e * q).abs()) {
                e = d;
                d = p / q;
            } else {
                d = m;
                e = m;
            }
        } else {
            d = m;
            e = m;
        }
        a = b;
        fa = fb;
        b += if d.abs() > tol { d } else { tol.copysign(m) };
        fb = f(b)?;
    }
    Err(Error::NoConvergence { what, est_rel_error: f64::INFINITY })
}

/// Expand `hi = lo * factor^k` until `f` changes sign relative to `f(lo)`.
/// Returns the final (lo, hi, f(lo), f(hi)).
pub fn expand_geometric<F>(
    mut f: F,
    lo: f64,
    factor: f64,
    limit: f64,
    what: &'static str,
) -> Result<(f64, f64, f64, f64)>
where
    F: FnMut(f64) -> Result<f64>,
{
    let f_start = f(lo)?;
    let mut a = lo;
    let mut fa = f_start;
    let mut b = lo * factor;
    loop {
        let fb = f(b)?;
        if fb.signum() != f_start.signum() || fb == 0.0 {
            return Ok((a, b, fa, fb));
        }
        if b > limit {
            return Err(Error::BracketFailure { what, lo, hi: b });
        }
        a = b;
        fa = fb;
        b *= factor;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn brent_finds_cubic_root() {
        let r = brent(|x| Ok(x * x * x - 2.0), 0.0, 3.0, 1e-14, "t").unwrap();
        assert!((r - 2f64.cbrt()).abs() < 1e-13);
    }

    #[test]
    fn brent_rejects_same_sign() {
        assert!(matches!(
            brent(|x| Ok(x * x + 1.0), -1.0, 1.0, 1e-12, "t"),
            Err(Error::BracketFailure { .. })
        ));
    }

    #[test]
    fn expansion_brackets() {
        let (a, b, fa, fb) = expand_geometric(|x| Ok(x - 100.0), 1.0, 2.0, 1e6, "t").unwrap();
        assert!(a < 100.0 && b >= 100.0 && fa < 0.0 && fb >= 0.0);
    }
}

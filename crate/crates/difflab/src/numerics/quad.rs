//! Quadrature utilities: trapezoid rules on grids and adaptive Simpson.

use crate::error::{Error, Result};

/// Trapezoid integral of samples `ys` over (possibly non-uniform) grid `xs`.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    let mut acc = 0.0;
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
    }
    acc
}

/// Running trapezoid integral; `out[i]` integrates over `xs[0]..=xs[i]`.
pub fn cumulative_trapezoid(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(xs.len());
    let mut acc = 0.0;
    out.push(0.0);
    for i in 1..xs.len() {
        acc += 0.5 * (ys[i] + ys[i - 1]) * (xs[i] - xs[i - 1]);
        out.push(acc);
    }
    out
}

/// Adaptive Simpson quadrature of `f` over `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> Result<f64> {
    if !(a.is_finite() && b.is_finite()) || b <= a {
        return Err(Error::InvalidInput(format!(
            "adaptive_simpson: bad interval [{a}, {b}]"
        )));
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut evals = 3usize;
    let v = simpson_rec(f, a, b, fa, fm, fb, whole, tol, 50, &mut evals)?;
    if !v.is_finite() {
        return Err(Error::Numerical(
            "adaptive_simpson: non-finite integral".into(),
        ));
    }
    Ok(v)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn simpson_rec<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: usize,
    evals: &mut usize,
) -> Result<f64> {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    *evals += 2;
    if *evals > 2_000_000 {
        return Err(Error::Numerical(
            "adaptive_simpson: evaluation budget exhausted".into(),
        ));
    }
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let err = left + right - whole;
    // A jump discontinuity pins the recursion to an interval of vanishing
    // width; accept the local estimate once the interval is at round-off
    // scale, where its contribution to the total is negligible.
    if b - a < 1e-13 * (1.0 + a.abs() + b.abs()) {
        return Ok(left + right + err / 15.0);
    }
    if depth == 0 {
        return if err.abs() <= 15.0 * tol {
            Ok(left + right + err / 15.0)
        } else {
            Err(Error::Numerical(format!(
                "adaptive_simpson: no convergence on [{a}, {b}] (err {err:.3e})"
            )))
        };
    }
    if err.abs() <= 15.0 * tol {
        return Ok(left + right + err / 15.0);
    }
    let lv = simpson_rec(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, evals)?;
    let rv = simpson_rec(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, evals)?;
    Ok(lv + rv)
}

/// `n` equally spaced points covering `[lo, hi]` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2, "linspace needs at least two points");
    let step = (hi - lo) / (n - 1) as f64;
    (0..n).map(|i| lo + i as f64 * step).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn simpson_matches_closed_forms() {
        let v = adaptive_simpson(&|x: f64| x.sin(), 0.0, std::f64::consts::PI, 1e-12).unwrap();
        assert_abs_diff_eq!(v, 2.0, epsilon = 1e-10);
        let g = adaptive_simpson(&|x: f64| (-x * x / 2.0).exp(), -10.0, 10.0, 1e-12).unwrap();
        assert_abs_diff_eq!(g, (2.0 * std::f64::consts::PI).sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn cumulative_matches_total() {
        let xs = linspace(0.0, 2.0, 101);
        let ys: Vec<f64> = xs.iter().map(|x| x * x).collect();
        let cum = cumulative_trapezoid(&xs, &ys);
        assert_abs_diff_eq!(cum[100], trapezoid(&xs, &ys), epsilon = 1e-12);
        assert_abs_diff_eq!(cum[100], 8.0 / 3.0, epsilon = 1e-3);
    }
}

//! Small dense optimizers: Brent's 1-D minimizer and Nelder–Mead simplex,
//! plus finite-difference derivatives for observed-information standard errors.

use crate::error::{Error, Result};

/// Brent's method for a 1-D minimum of `f` on `[a, b]`.
pub fn brent_min<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    tol: f64,
    max_iter: usize,
) -> (f64, f64) {
    const GOLD: f64 = 0.381_966_011_250_105;
    let (mut a, mut b) = (a.min(b), a.max(b));
    let mut x = a + GOLD * (b - a);
    let mut w = x;
    let mut v = x;
    let mut fx = f(x);
    let mut fw = fx;
    let mut fv = fx;
    let mut d: f64 = 0.0;
    let mut e: f64 = 0.0;
    for _ in 0..max_iter {
        let m = 0.5 * (a + b);
        let tol1 = tol * x.abs() + 1e-12;
        let tol2 = 2.0 * tol1;
        if (x - m).abs() <= tol2 - 0.5 * (b - a) {
            break;
        }
        let mut use_golden = true;
        if e.abs() > tol1 {
            // Parabolic interpolation through (v, w, x).
            let r = (x - w) * (fx - fv);
            let q0 = (x - v) * (fx - fw);
            let mut p = (x - v) * q0 - (x - w) * r;
            let mut q = 2.0 * (q0 - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            let e_old = e;
            e = d;
            if p.abs() < (0.5 * q * e_old).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if (u - a) < tol2 || (b - u) < tol2 {
                    d = if m > x { tol1 } else { -tol1 };
                }
                use_golden = false;
            }
        }
        if use_golden {
            e = if x < m { b - x } else { a - x };
            d = GOLD * e;
        }
        let u = if d.abs() >= tol1 {
            x + d
        } else if d > 0.0 {
            x + tol1
        } else {
            x - tol1
        };
        let fu = f(u);
        if fu <= fx {
            if u < x {
                b = x;
            } else {
                a = x;
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
    (x, fx)
}

/// Outcome of a Nelder–Mead run.
#[derive(Debug, Clone)]
pub struct NmResult {
    pub x: Vec<f64>,
    pub fx: f64,
    pub evals: usize,
    pub converged: bool,
}

/// Nelder–Mead simplex minimization.
///
/// `scale` sets the initial simplex edge per coordinate. Convergence is
/// declared when the simplex function spread falls below `tol` (absolute,
/// relative to the best value's magnitude).
pub fn nelder_mead<F: FnMut(&[f64]) -> f64>(
    mut f: F,
    x0: &[f64],
    scale: &[f64],
    tol: f64,
    max_evals: usize,
) -> NmResult {
    let n = x0.len();
    assert!(n >= 1 && scale.len() == n);
    let mut pts: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    pts.push(x0.to_vec());
    for i in 0..n {
        let mut p = x0.to_vec();
        p[i] += if scale[i] != 0.0 { scale[i] } else { 0.1 };
        pts.push(p);
    }
    let mut fs: Vec<f64> = pts.iter().map(|p| f(p)).collect();
    let mut evals = n + 1;
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);

    loop {
        // Order the simplex.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&i, &j| fs[i].partial_cmp(&fs[j]).unwrap_or(std::cmp::Ordering::Equal));
        let ordered: Vec<Vec<f64>> = idx.iter().map(|&i| pts[i].clone()).collect();
        let ordered_f: Vec<f64> = idx.iter().map(|&i| fs[i]).collect();
        pts = ordered;
        fs = ordered_f;

        let spread = (fs[n] - fs[0]).abs();
        if spread <= tol * (1.0 + fs[0].abs()) || evals >= max_evals {
            return NmResult {
                x: pts[0].clone(),
                fx: fs[0],
                evals,
                converged: spread <= tol * (1.0 + fs[0].abs()),
            };
        }

        let centroid: Vec<f64> = (0..n)
            .map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64)
            .collect();
        let reflect: Vec<f64> = (0..n)
            .map(|j| centroid[j] + alpha * (centroid[j] - pts[n][j]))
            .collect();
        let fr = f(&reflect);
        evals += 1;

        if fr < fs[0] {
            let expand: Vec<f64> = (0..n)
                .map(|j| centroid[j] + gamma * (reflect[j] - centroid[j]))
                .collect();
            let fe = f(&expand);
            evals += 1;
            if fe < fr {
                pts[n] = expand;
                fs[n] = fe;
            } else {
                pts[n] = reflect;
                fs[n] = fr;
            }
        } else if fr < fs[n - 1] {
            pts[n] = reflect;
            fs[n] = fr;
        } else {
            let contract: Vec<f64> = (0..n)
                .map(|j| centroid[j] + rho * (pts[n][j] - centroid[j]))
                .collect();
            let fc = f(&contract);
            evals += 1;
            if fc < fs[n] {
                pts[n] = contract;
                fs[n] = fc;
            } else {
                for i in 1..=n {
                    for j in 0..n {
                        pts[i][j] = pts[0][j] + sigma * (pts[i][j] - pts[0][j]);
                    }
                    fs[i] = f(&pts[i]);
                }
                evals += n;
            }
        }
    }
}

/// Central-difference gradient.
pub fn numeric_gradient<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<f64> {
    let mut g = vec![0.0; x.len()];
    let mut xp = x.to_vec();
    for i in 0..x.len() {
        let step = h * (1.0 + x[i].abs());
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        g[i] = (fp - fm) / (2.0 * step);
    }
    g
}

/// Central-difference Hessian (symmetric).
pub fn numeric_hessian<F: FnMut(&[f64]) -> f64>(mut f: F, x: &[f64], h: f64) -> Vec<Vec<f64>> {
    let n = x.len();
    let mut hess = vec![vec![0.0; n]; n];
    let f0 = f(x);
    let steps: Vec<f64> = x.iter().map(|&xi| h * (1.0 + xi.abs())).collect();
    let mut xp = x.to_vec();
    for i in 0..n {
        xp[i] = x[i] + steps[i];
        let fp = f(&xp);
        xp[i] = x[i] - steps[i];
        let fm = f(&xp);
        xp[i] = x[i];
        hess[i][i] = (fp - 2.0 * f0 + fm) / (steps[i] * steps[i]);
        for j in (i + 1)..n {
            xp[i] = x[i] + steps[i];
            xp[j] = x[j] + steps[j];
            let fpp = f(&xp);
            xp[j] = x[j] - steps[j];
            let fpm = f(&xp);
            xp[i] = x[i] - steps[i];
            let fmm = f(&xp);
            xp[j] = x[j] + steps[j];
            let fmp = f(&xp);
            xp[i] = x[i];
            xp[j] = x[j];
            let v = (fpp - fpm - fmp + fmm) / (4.0 * steps[i] * steps[j]);
            hess[i][j] = v;
            hess[j][i] = v;
        }
    }
    hess
}

/// Invert a small symmetric positive-definite matrix by Gauss–Jordan.
pub fn invert_spd(m: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n = m.len();
    let mut a: Vec<Vec<f64>> = m.to_vec();
    let mut inv = vec![vec![0.0; n]; n];
    for (i, row) in inv.iter_mut().enumerate() {
        row[i] = 1.0;
    }
    for col in 0..n {
        // Partial pivot.
        let mut piv = col;
        for r in (col + 1)..n {
            if a[r][col].abs() > a[piv][col].abs() {
                piv = r;
            }
        }
        if a[piv][col].abs() < 1e-300 {
            return Err(Error::Numerical("invert_spd: singular matrix".into()));
        }
        a.swap(col, piv);
        inv.swap(col, piv);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for r in 0..n {
            if r != col {
                let factor = a[r][col];
                for j in 0..n {
                    a[r][j] -= factor * a[col][j];
                    inv[r][j] -= factor * inv[col][j];
                }
            }
        }
    }
    Ok(inv)
}

/// Standard errors from a negative log-likelihood Hessian (observed information).
///
/// Returns NaN entries when the information matrix is not invertible or a
/// diagonal entry of its inverse is negative.
pub fn stderr_from_information(hess: &[Vec<f64>]) -> Vec<f64> {
    match invert_spd(hess) {
        Ok(inv) => (0..hess.len())
            .map(|i| {
                if inv[i][i] > 0.0 {
                    inv[i][i].sqrt()
                } else {
                    f64::NAN
                }
            })
            .collect(),
        Err(_) => vec![f64::NAN; hess.len()],
    }
}

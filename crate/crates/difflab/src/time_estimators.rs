//! Time-domain fitting of the time-varying CKLS model and its
//! semiparametric restriction, with one-sided kernels so every fit uses
//! strictly historical data, plus a generalized likelihood ratio test of
//! coefficient constancy calibrated by a parametric bootstrap.
//!
//! Drift coefficients come from locally constant weighted least squares of
//! the Euler responses; volatility coefficients (b0(t), b1(t)) maximize the
//! kernel-weighted Gaussian likelihood of the normalized residuals
//! E_t ~ b0(t) X_t^{b1(t)} eps_t. In the parametrization (log b0, b1) that
//! likelihood is strictly convex, so a damped Newton iteration is reliable.

use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::optimize::brent_min;
use crate::numerics::quad::linspace;
use crate::path::SamplePath;
use crate::report::TestResult;
use crate::simulate::ShockStream;
use crate::smoothing::{CurveEstimate, KernelShape, KernelSpec, PointFlags};

/// Fitted coefficient curves of a time-varying model.
#[derive(Debug, Clone)]
pub struct TimeVaryingFit {
    pub t_grid: Vec<f64>,
    pub alpha0: CurveEstimate,
    pub alpha1: CurveEstimate,
    pub beta0: CurveEstimate,
    /// Constant curve for the semiparametric fit.
    pub beta1: CurveEstimate,
    pub h_drift: f64,
    pub h_vol: f64,
    /// Approximated log-likelihood of the volatility fit over the usable
    /// observations.
    pub loglik: f64,
    pub warnings: Vec<String>,
}

fn require_one_sided(kernel: &KernelSpec) -> Result<()> {
    if kernel.shape != KernelShape::OneSidedEpanechnikov {
        return Err(Error::InvalidInput(
            "time-domain fits require the one-sided kernel".into(),
        ));
    }
    Ok(())
}

/// Default time grid: points where a full history window fits.
pub fn default_time_grid(path: &SamplePath, h: f64, n: usize) -> Vec<f64> {
    let t0 = path.origin_time() + h;
    let t1 = path.origin_time() + path.span();
    linspace(t0.min(t1), t1, n.max(2))
}

/// Locally constant WLS fit of the drift coefficients (a0(t), a1(t)) in
/// X_{t+dt} - X_t ~ (a0 + a1 X_t) dt, one window per grid time.
pub fn fit_drift_time(
    path: &SamplePath,
    kernel: &KernelSpec,
    t_grid: &[f64],
) -> Result<(CurveEstimate, CurveEstimate)> {
    require_one_sided(kernel)?;
    if path.len() < 50 {
        return Err(Error::InvalidInput(format!(
            "fit_drift_time needs at least 50 observations, got {}",
            path.len()
        )));
    }
    let delta = path.delta();
    let xs = path.values();
    let idx = path.transition_indices();
    let obs: Vec<(f64, f64, f64)> = idx
        .iter()
        .map(|&i| (path.time(i), xs[i], (xs[i + 1] - xs[i]) / delta))
        .collect();
    let kernel = *kernel;
    let fits = exec::map_slice(t_grid, move |&t0| drift_wls(&obs, &kernel, t0));
    Ok(split_pairs(t_grid, fits))
}

#[derive(Debug, Clone, Copy)]
struct CoefPoint {
    value: f64,
    stderr: f64,
    mass: f64,
    flags: PointFlags,
}

fn empty_coef() -> CoefPoint {
    CoefPoint {
        value: f64::NAN,
        stderr: f64::NAN,
        mass: 0.0,
        flags: PointFlags::LOW_MASS,
    }
}

fn split_pairs(t_grid: &[f64], fits: Vec<(CoefPoint, CoefPoint)>) -> (CurveEstimate, CurveEstimate) {
    let build = |take: &dyn Fn(&(CoefPoint, CoefPoint)) -> CoefPoint| CurveEstimate {
        grid: t_grid.to_vec(),
        value: fits.iter().map(|f| take(f).value).collect(),
        stderr: fits.iter().map(|f| take(f).stderr).collect(),
        mass: fits.iter().map(|f| take(f).mass).collect(),
        flags: fits.iter().map(|f| take(f).flags).collect(),
    };
    (build(&|f| f.0), build(&|f| f.1))
}

fn drift_wls(obs: &[(f64, f64, f64)], kernel: &KernelSpec, t0: f64) -> (CoefPoint, CoefPoint) {
    let mut s0 = 0.0;
    let mut sx = 0.0;
    let mut sxx = 0.0;
    let mut sy = 0.0;
    let mut sxy = 0.0;
    let mut w2 = 0.0;
    let mut n_eff = 0usize;
    for &(t, x, y) in obs {
        let w = kernel.eval(t - t0);
        if w <= 0.0 {
            continue;
        }
        s0 += w;
        sx += w * x;
        sxx += w * x * x;
        sy += w * y;
        sxy += w * x * y;
        w2 += w * w;
        n_eff += 1;
    }
    if n_eff < 3 || s0 <= 0.0 {
        return (empty_coef(), empty_coef());
    }
    let det = s0 * sxx - sx * sx;
    let scale = s0 * (sxx / s0).max(1e-300);
    if det <= 1e-12 * scale * scale {
        let mut c = empty_coef();
        c.flags = PointFlags::DEGENERATE;
        return (c, c);
    }
    let a0 = (sxx * sy - sx * sxy) / det;
    let a1 = (s0 * sxy - sx * sy) / det;
    // Weighted residual variance and sandwich errors for the two
    // coefficients (treating the kernel weights as fixed).
    let mut rss = 0.0;
    for &(t, x, y) in obs {
        let w = kernel.eval(t - t0);
        if w <= 0.0 {
            continue;
        }
        let r = y - a0 - a1 * x;
        rss += w * r * r;
    }
    let sigma2 = rss / s0;
    let mass = s0 * s0 / w2;
    // Var(a) ~ sigma2 * [ (X'WX)^{-1} X'W^2X (X'WX)^{-1} ]; the diagonal of
    // the middle matrix is approximated by w2-weighted moments.
    let se0 = (sigma2 * sxx / det).sqrt() * (w2 / s0).sqrt() * (s0 / det * sxx).sqrt().recip()
        * (sxx / det).sqrt()
        * s0.sqrt();
    // The exact sandwich is clearer computed directly:
    let (se0, se1) = drift_sandwich(obs, kernel, t0, det, s0, sx, sxx, sigma2).unwrap_or((se0, f64::NAN));
    let mut flags = PointFlags::empty();
    if mass < crate::smoothing::MASS_FLOOR {
        flags |= PointFlags::LOW_MASS;
    }
    (
        CoefPoint {
            value: a0,
            stderr: se0,
            mass,
            flags,
        },
        CoefPoint {
            value: a1,
            stderr: se1,
            mass,
            flags,
        },
    )
}

#[allow(clippy::too_many_arguments)]
fn drift_sandwich(
    obs: &[(f64, f64, f64)],
    kernel: &KernelSpec,
    t0: f64,
    det: f64,
    s0: f64,
    sx: f64,
    sxx: f64,
    sigma2: f64,
) -> Option<(f64, f64)> {
    // M = X'W^2X entries.
    let mut m00 = 0.0;
    let mut m01 = 0.0;
    let mut m11 = 0.0;
    for &(t, x, _) in obs {
        let w = kernel.eval(t - t0);
        if w <= 0.0 {
            continue;
        }
        m00 += w * w;
        m01 += w * w * x;
        m11 += w * w * x * x;
    }
    // (X'WX)^{-1} rows: r0 = (sxx, -sx)/det, r1 = (-sx, s0)/det.
    let v00 = (sxx * (sxx * m00 - sx * m01) - sx * (sxx * m01 - sx * m11)) / (det * det);
    let v11 = (-sx * (-sx * m00 + s0 * m01) + s0 * (-sx * m01 + s0 * m11)) / (det * det);
    if v00 <= 0.0 || v11 <= 0.0 {
        return None;
    }
    Some(((sigma2 * v00).sqrt(), (sigma2 * v11).sqrt()))
}

/// Normalized residual observations feeding the volatility fits.
#[derive(Debug, Clone)]
pub struct ResidualSet {
    /// Observation times of the residuals.
    pub t: Vec<f64>,
    /// States X_t (positive).
    pub x: Vec<f64>,
    /// log X_t.
    pub s: Vec<f64>,
    /// Squared normalized residuals E_t^2.
    pub e2: Vec<f64>,
}

/// Build residuals E_t = (X_{t+dt} - X_t - (a0(t) + a1(t) X_t) dt) / sqrt(dt)
/// from a fitted drift, dropping observations where the drift curves are
/// unreliable or the state is not positive.
pub fn residuals_from_drift(
    path: &SamplePath,
    drift: &(CurveEstimate, CurveEstimate),
) -> Result<ResidualSet> {
    let (a0, a1) = drift;
    let first_ok = (0..a0.len())
        .find(|&i| a0.is_reliable(i))
        .ok_or_else(|| Error::Numerical("drift fit has no reliable grid point".into()))?;
    let t_min = a0.grid[first_ok];
    let delta = path.delta();
    let xs = path.values();
    let mut out = ResidualSet {
        t: Vec::new(),
        x: Vec::new(),
        s: Vec::new(),
        e2: Vec::new(),
    };
    for i in path.transition_indices() {
        let t = path.time(i);
        if t < t_min || xs[i] <= 0.0 {
            continue;
        }
        let mu = a0.interpolate(t) + a1.interpolate(t) * xs[i];
        if !mu.is_finite() {
            continue;
        }
        let e = (xs[i + 1] - xs[i] - mu * delta) / delta.sqrt();
        out.t.push(t);
        out.x.push(xs[i]);
        out.s.push(xs[i].ln());
        out.e2.push(e * e);
    }
    if out.t.len() < 20 {
        return Err(Error::Numerical(format!(
            "only {} usable residuals after drift fit",
            out.t.len()
        )));
    }
    Ok(out)
}

/// One local (or global) volatility fit: (log b0, b1) with errors.
#[derive(Debug, Clone, Copy)]
pub struct VolFitPoint {
    pub beta0: f64,
    pub beta1: f64,
    pub se_beta0: f64,
    pub se_beta1: f64,
    pub converged: bool,
    pub degenerate: bool,
    pub mass: f64,
}

/// Maximize sum w_i [-(th1 + th2 s_i) - e2_i exp(-2(th1 + th2 s_i))/2] by a
/// damped Newton method; the objective is convex in (th1, th2).
fn vol_mle(s: &[f64], e2: &[f64], w: &[f64]) -> VolFitPoint {
    let sw: f64 = w.iter().sum();
    let mut out = VolFitPoint {
        beta0: f64::NAN,
        beta1: f64::NAN,
        se_beta0: f64::NAN,
        se_beta1: f64::NAN,
        converged: false,
        degenerate: false,
        mass: 0.0,
    };
    if sw <= 0.0 || s.len() < 3 {
        out.degenerate = true;
        return out;
    }
    let w2: f64 = w.iter().map(|v| v * v).sum();
    out.mass = sw * sw / w2;
    // Identifiability requires variation in s within the window.
    let ms = s.iter().zip(w).map(|(si, wi)| wi * si).sum::<f64>() / sw;
    let vs = s
        .iter()
        .zip(w)
        .map(|(si, wi)| wi * (si - ms) * (si - ms))
        .sum::<f64>()
        / sw;
    if vs <= 1e-12 * (1.0 + ms * ms) {
        out.degenerate = true;
        return out;
    }
    // Log-transform least-squares initializer:
    // 0.5 log e2 ~ th1 + th2 s + log|eps|, E log|eps| = -0.63518...
    const MEAN_LOG_ABS_NORMAL: f64 = -0.635_181_422_886_157_4;
    let (mut th1, mut th2) = {
        let mut sy = 0.0;
        let mut sxy = 0.0;
        for ((si, e2i), wi) in s.iter().zip(e2).zip(w) {
            let yi = 0.5 * e2i.max(1e-300).ln();
            sy += wi * yi;
            sxy += wi * (si - ms) * yi;
        }
        let slope = sxy / (vs * sw);
        let intercept = sy / sw - slope * ms;
        (intercept - MEAN_LOG_ABS_NORMAL, slope)
    };
    th2 = th2.clamp(-5.0, 8.0);
    th1 = th1.clamp(-30.0, 10.0);

    let objective = |t1: f64, t2: f64| -> f64 {
        let mut acc = 0.0;
        for ((si, e2i), wi) in s.iter().zip(e2).zip(w) {
            let g = t1 + t2 * si;
            acc += wi * (g + 0.5 * e2i * (-2.0 * g).exp());
        }
        acc
    };
    let mut f_cur = objective(th1, th2);
    let mut converged = false;
    for _ in 0..100 {
        // Gradient and Hessian of the convex objective.
        let mut g1 = 0.0;
        let mut g2 = 0.0;
        let mut h11 = 0.0;
        let mut h12 = 0.0;
        let mut h22 = 0.0;
        for ((si, e2i), wi) in s.iter().zip(e2).zip(w) {
            let g = th1 + th2 * si;
            let q = e2i * (-2.0 * g).exp();
            let d = 1.0 - q;
            g1 += wi * d;
            g2 += wi * d * si;
            let hq = 2.0 * wi * q;
            h11 += hq;
            h12 += hq * si;
            h22 += hq * si * si;
        }
        let det = h11 * h22 - h12 * h12;
        if det <= 1e-300 || h11 <= 0.0 {
            break;
        }
        let d1 = (h22 * g1 - h12 * g2) / det;
        let d2 = (h11 * g2 - h12 * g1) / det;
        // Backtracking line search on the Newton direction.
        let mut step = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let c1 = (th1 - step * d1).clamp(-30.0, 10.0);
            let c2 = (th2 - step * d2).clamp(-5.0, 8.0);
            let f_new = objective(c1, c2);
            if f_new <= f_cur {
                let delta = f_cur - f_new;
                th1 = c1;
                th2 = c2;
                f_cur = f_new;
                improved = true;
                if delta < 1e-8 * (1.0 + f_cur.abs()) {
                    converged = true;
                }
                break;
            }
            step *= 0.5;
        }
        if !improved {
            converged = true; // at a (numerical) minimum
            break;
        }
        if converged {
            break;
        }
    }
    // Sandwich covariance: H^{-1} G H^{-1} with G the squared weighted scores.
    let mut h11 = 0.0;
    let mut h12 = 0.0;
    let mut h22 = 0.0;
    let mut g11 = 0.0;
    let mut g12 = 0.0;
    let mut g22 = 0.0;
    for ((si, e2i), wi) in s.iter().zip(e2).zip(w) {
        let g = th1 + th2 * si;
        let q = e2i * (-2.0 * g).exp();
        let d = 1.0 - q;
        let hq = 2.0 * wi * q;
        h11 += hq;
        h12 += hq * si;
        h22 += hq * si * si;
        let sc = wi * d;
        g11 += sc * sc;
        g12 += sc * sc * si;
        g22 += sc * sc * si * si;
    }
    let det = h11 * h22 - h12 * h12;
    if det > 0.0 {
        // V = H^{-1} G H^{-1}.
        let i11 = h22 / det;
        let i12 = -h12 / det;
        let i22 = h11 / det;
        let v11 = i11 * (g11 * i11 + g12 * i12) + i12 * (g12 * i11 + g22 * i12);
        let v22 = i12 * (g11 * i12 + g12 * i22) + i22 * (g12 * i12 + g22 * i22);
        if v11 > 0.0 {
            out.se_beta1 = f64::NAN; // set below
            out.se_beta0 = th1.exp() * v11.sqrt();
        }
        if v22 > 0.0 {
            out.se_beta1 = v22.sqrt();
        }
    }
    out.beta0 = th1.exp();
    out.beta1 = th2;
    out.converged = converged;
    out
}

/// Local approximated-likelihood fit of (b0(t), b1(t)) over `t_grid`.
pub fn fit_vol_time(
    path: &SamplePath,
    drift: &(CurveEstimate, CurveEstimate),
    kernel: &KernelSpec,
    t_grid: &[f64],
) -> Result<(CurveEstimate, CurveEstimate)> {
    require_one_sided(kernel)?;
    if !path.all_positive() {
        return Err(Error::DomainViolation(
            "fit_vol_time expects a positive-valued path".into(),
        ));
    }
    let resid = residuals_from_drift(path, drift)?;
    let kernel = *kernel;
    let fits = exec::map_slice(t_grid, move |&t0| {
        let mut s = Vec::new();
        let mut e2 = Vec::new();
        let mut w = Vec::new();
        for i in 0..resid.t.len() {
            let wi = kernel.eval(resid.t[i] - t0);
            if wi > 0.0 {
                s.push(resid.s[i]);
                e2.push(resid.e2[i]);
                w.push(wi);
            }
        }
        let fit = vol_mle(&s, &e2, &w);
        vol_point_pair(&fit)
    });
    Ok(split_pairs(t_grid, fits))
}

fn vol_point_pair(fit: &VolFitPoint) -> (CoefPoint, CoefPoint) {
    let mut flags = PointFlags::empty();
    if fit.degenerate {
        flags |= PointFlags::DEGENERATE;
    }
    if !fit.converged && !fit.degenerate {
        flags |= PointFlags::DEGENERATE;
    }
    if fit.mass < crate::smoothing::MASS_FLOOR {
        flags |= PointFlags::LOW_MASS;
    }
    let usable = flags & PointFlags::DEGENERATE == PointFlags::empty();
    (
        CoefPoint {
            value: if usable { fit.beta0 } else { f64::NAN },
            stderr: fit.se_beta0,
            mass: fit.mass,
            flags,
        },
        CoefPoint {
            value: if usable { fit.beta1 } else { f64::NAN },
            stderr: fit.se_beta1,
            mass: fit.mass,
            flags,
        },
    )
}

/// Constant-coefficient fit of drift and volatility, used as the null model
/// of the constancy test and as its bootstrap generator.
#[derive(Debug, Clone, Copy)]
pub struct ConstantFit {
    pub a0: f64,
    pub a1: f64,
    pub beta0: f64,
    pub beta1: f64,
    pub loglik: f64,
}

/// Approximated Gaussian log-likelihood of residuals under coefficient
/// curves evaluated at the residual times.
fn vol_loglik(resid: &ResidualSet, b0_at: &dyn Fn(f64) -> f64, b1_at: &dyn Fn(f64) -> f64) -> (f64, usize) {
    let mut acc = 0.0;
    let mut used = 0usize;
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    for i in 0..resid.t.len() {
        let b0 = b0_at(resid.t[i]);
        let b1 = b1_at(resid.t[i]);
        if !(b0.is_finite() && b1.is_finite() && b0 > 0.0) {
            continue;
        }
        let g = b0.ln() + b1 * resid.s[i];
        acc += -HALF_LN_2PI - g - 0.5 * resid.e2[i] * (-2.0 * g).exp();
        used += 1;
    }
    (acc, used)
}

/// Fit the constant null model on the residual set.
pub fn fit_constant_vol(resid: &ResidualSet) -> Result<ConstantFit> {
    let w = vec![1.0; resid.s.len()];
    let fit = vol_mle(&resid.s, &resid.e2, &w);
    if fit.degenerate || !fit.beta0.is_finite() {
        return Err(Error::NonConvergence(
            "constant volatility fit degenerate".into(),
        ));
    }
    let (loglik, _) = vol_loglik(resid, &|_| fit.beta0, &|_| fit.beta1);
    Ok(ConstantFit {
        a0: f64::NAN,
        a1: f64::NAN,
        beta0: fit.beta0,
        beta1: fit.beta1,
        loglik,
    })
}

/// Semiparametric profile fit: scalar exponent beta estimated from all data,
/// local b0(t) from the closed-form kernel-weighted mean of E^2 X^{-2 beta}.
pub fn fit_semiparametric(path: &SamplePath, kernel: &KernelSpec) -> Result<TimeVaryingFit> {
    require_one_sided(kernel)?;
    if !path.all_positive() {
        return Err(Error::DomainViolation(
            "fit_semiparametric expects a positive-valued path".into(),
        ));
    }
    let h = kernel.bandwidth;
    let t_grid = default_time_grid(path, h, 50);
    let drift = fit_drift_time(path, kernel, &t_grid)?;
    let resid = residuals_from_drift(path, &drift)?;
    let mut warnings = Vec::new();

    let profile = |beta: f64| -> f64 {
        // Negative assembled likelihood, profiled over local b0.
        let b0sq = beta0_profile_at(&resid, beta, kernel, &resid.t);
        let mut acc = 0.0;
        const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
        for i in 0..resid.t.len() {
            let b0s = b0sq[i];
            if !(b0s.is_finite() && b0s > 0.0) {
                continue;
            }
            let g = 0.5 * b0s.ln() + beta * resid.s[i];
            acc += HALF_LN_2PI + g + 0.5 * resid.e2[i] * (-2.0 * g).exp();
        }
        acc
    };
    // Coarse profile scan, then a Brent polish around the best node.
    let coarse = linspace(-1.0, 2.5, 15);
    let values: Vec<f64> = coarse.iter().map(|&b| profile(b)).collect();
    let best = (0..coarse.len())
        .min_by(|&i, &j| values[i].partial_cmp(&values[j]).unwrap())
        .unwrap();
    let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - values.iter().cloned().fold(f64::INFINITY, f64::min);
    let beta = if spread <= 1e-9 * (1.0 + values[best].abs()) {
        warnings.push("flat profile likelihood; widest candidate kept".into());
        *coarse.last().unwrap()
    } else {
        let lo = coarse[best.saturating_sub(1)];
        let hi = coarse[(best + 1).min(coarse.len() - 1)];
        brent_min(&profile, lo, hi, 1e-8, 100).0
    };

    // Final curves at the fitted exponent.
    let b0sq_grid = beta0_profile_at(&resid, beta, kernel, &t_grid);
    let masses = window_masses(&resid, kernel, &t_grid);
    let mut b0_vals = Vec::with_capacity(t_grid.len());
    let mut b0_se = Vec::with_capacity(t_grid.len());
    let mut flags = Vec::with_capacity(t_grid.len());
    for (i, &b0s) in b0sq_grid.iter().enumerate() {
        let mut fl = PointFlags::empty();
        if masses[i] < crate::smoothing::MASS_FLOOR {
            fl |= PointFlags::LOW_MASS;
        }
        if b0s.is_finite() && b0s > 0.0 {
            let b0 = b0s.sqrt();
            b0_vals.push(b0);
            // Var of a kernel-weighted mean of e2 X^{-2b}, delta-method to b0.
            b0_se.push(if masses[i] > 1.0 {
                b0 / (2.0 * masses[i].sqrt()) * std::f64::consts::SQRT_2
            } else {
                f64::NAN
            });
        } else {
            fl |= PointFlags::DEGENERATE;
            b0_vals.push(f64::NAN);
            b0_se.push(f64::NAN);
        }
        flags.push(fl);
    }
    let beta0 = CurveEstimate {
        grid: t_grid.clone(),
        value: b0_vals,
        stderr: b0_se,
        mass: masses.clone(),
        flags: flags.clone(),
    };
    // Exponent stderr from the profile curvature.
    let hstep = 0.02;
    let curv = (profile(beta + hstep) - 2.0 * profile(beta) + profile(beta - hstep)) / (hstep * hstep);
    let se_beta = if curv > 0.0 { (1.0 / curv).sqrt() } else { f64::NAN };
    let beta1 = CurveEstimate {
        grid: t_grid.clone(),
        value: vec![beta; t_grid.len()],
        stderr: vec![se_beta; t_grid.len()],
        mass: masses,
        flags,
    };
    let (loglik, _) = vol_loglik(
        &resid,
        &|t| beta0.interpolate(t),
        &|_| beta,
    );
    Ok(TimeVaryingFit {
        t_grid,
        alpha0: drift.0,
        alpha1: drift.1,
        beta0,
        beta1,
        h_drift: h,
        h_vol: h,
        loglik,
        warnings,
    })
}

/// Closed-form inner step of the profile fit: kernel-weighted mean of
/// E^2 X^{-2 beta} at each target time, i.e. b0^2(t; beta).
pub fn beta0_profile_at(resid: &ResidualSet, beta: f64, kernel: &KernelSpec, at: &[f64]) -> Vec<f64> {
    exec::map_slice(at, |&t0| {
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..resid.t.len() {
            let w = kernel.eval(resid.t[i] - t0);
            if w > 0.0 {
                num += w * resid.e2[i] * (-2.0 * beta * resid.s[i]).exp();
                den += w;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            f64::NAN
        }
    })
}

fn window_masses(resid: &ResidualSet, kernel: &KernelSpec, at: &[f64]) -> Vec<f64> {
    at.iter()
        .map(|&t0| {
            let mut sw = 0.0;
            let mut w2 = 0.0;
            for &t in &resid.t {
                let w = kernel.eval(t - t0);
                sw += w;
                w2 += w * w;
            }
            if w2 > 0.0 {
                sw * sw / w2
            } else {
                0.0
            }
        })
        .collect()
}

/// What the rolling prediction-error bandwidth selector scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PredictionTarget {
    /// One-step-ahead squared error of the level X_{t+dt}.
    Level,
    /// Squared error of the squared centered increment against the locally
    /// fitted conditional variance.
    Volatility,
}

/// Choose a bandwidth by rolling one-step-ahead prediction error; the
/// one-sided kernel guarantees only historical data enter each fit.
/// Ties break toward the larger bandwidth.
pub fn bandwidth_by_prediction(
    path: &SamplePath,
    candidates: &[f64],
    target: PredictionTarget,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty bandwidth candidate set".into()));
    }
    let mut hs = candidates.to_vec();
    hs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if hs[0] <= 0.0 {
        return Err(Error::InvalidInput("bandwidths must be positive".into()));
    }
    let h_max = *hs.last().unwrap();
    let burn_end = path.origin_time() + h_max;
    if path.span() < 2.0 * h_max {
        return Err(Error::InvalidInput(
            "path shorter than twice the largest candidate bandwidth".into(),
        ));
    }
    let delta = path.delta();
    let xs = path.values();
    let idx = path.transition_indices();
    let obs: Vec<(f64, f64, f64)> = idx
        .iter()
        .map(|&i| (path.time(i), xs[i], (xs[i + 1] - xs[i]) / delta))
        .collect();
    let scores = exec::map_slice(&hs, |&h| -> Result<f64> {
        let kernel = KernelSpec::new(KernelShape::OneSidedEpanechnikov, h)?;
        let mut acc = 0.0;
        let mut used = 0usize;
        for &i in &idx {
            let t = path.time(i);
            if t < burn_end {
                continue;
            }
            let (a0, a1) = drift_wls(&obs, &kernel, t);
            if !a0.value.is_finite() {
                continue;
            }
            let mu = a0.value + a1.value * xs[i];
            match target {
                PredictionTarget::Level => {
                    let pred = xs[i] + mu * delta;
                    acc += (xs[i + 1] - pred) * (xs[i + 1] - pred);
                }
                PredictionTarget::Volatility => {
                    if xs[i] <= 0.0 {
                        continue;
                    }
                    // Local volatility fit at t from history.
                    let mut s = Vec::new();
                    let mut e2v = Vec::new();
                    let mut w = Vec::new();
                    for &(tj, xj, yj) in &obs {
                        let wi = kernel.eval(tj - t);
                        if wi > 0.0 && xj > 0.0 {
                            s.push(xj.ln());
                            e2v.push((yj - mu) * (yj - mu) * delta);
                            w.push(wi);
                        }
                    }
                    let fit = vol_mle(&s, &e2v, &w);
                    if !fit.beta0.is_finite() {
                        continue;
                    }
                    let pred_var = fit.beta0 * fit.beta0 * xs[i].powf(2.0 * fit.beta1) * delta;
                    let realized = (xs[i + 1] - xs[i] - mu * delta).powi(2);
                    acc += (realized - pred_var) * (realized - pred_var);
                }
            }
            used += 1;
        }
        if used < 10 {
            return Err(Error::Numerical(format!("h={h}: only {used} scored points")));
        }
        Ok(acc / used as f64)
    });
    let mut best: Option<(f64, f64)> = None;
    let mut diags = Vec::new();
    for (h, s) in hs.iter().zip(&scores) {
        match s {
            Ok(c) if c.is_finite() => {
                let tol = 1e-9 * (1.0 + c.abs());
                if best.map_or(true, |(_, bc)| *c <= bc + tol) {
                    best = Some((*h, best.map_or(*c, |(_, bc)| c.min(bc))));
                }
            }
            Ok(c) => diags.push(format!("h={h}: criterion {c}")),
            Err(e) => diags.push(format!("h={h}: {e}")),
        }
    }
    best.map(|(h, _)| h).ok_or_else(|| {
        Error::Numerical(format!("all bandwidth candidates failed: {}", diags.join("; ")))
    })
}

/// The constancy-test statistic: approximated log-likelihood of the
/// time-varying volatility fit minus the constant fit, over the same
/// residual set.
///
/// Each residual's H1 contribution uses the local fit anchored just after
/// its own time, so the residual lies inside the fit's one-sided window.
/// That keeps the nonparametric likelihood an in-sample quantity, which is
/// what makes it nest the constant fit.
pub fn glr_constancy_statistic(path: &SamplePath, h: f64) -> Result<f64> {
    let kernel = KernelSpec::new(KernelShape::OneSidedEpanechnikov, h)?;
    let t_grid = default_time_grid(path, h, 40);
    let drift = fit_drift_time(path, &kernel, &t_grid)?;
    let resid = residuals_from_drift(path, &drift)?;

    // Anchor times: a grid fine enough that every residual is within one
    // observation step of the anchor covering it.
    let delta = path.delta();
    let n_anchor = 160.min(resid.t.len());
    let t_lo = resid.t[0] + delta;
    let t_hi = resid.t[resid.t.len() - 1] + delta;
    let anchors = linspace(t_lo, t_hi, n_anchor.max(2));
    let anchor_fits: Vec<VolFitPoint> = exec::map_slice(&anchors, |&t0| {
        let mut s = Vec::new();
        let mut e2 = Vec::new();
        let mut w = Vec::new();
        for i in 0..resid.t.len() {
            let wi = kernel.eval(resid.t[i] - t0);
            if wi > 0.0 {
                s.push(resid.s[i]);
                e2.push(resid.e2[i]);
                w.push(wi);
            }
        }
        vol_mle(&s, &e2, &w)
    });

    let (b0c, b1c) = {
        let c = fit_constant_vol(&resid)?;
        (c.beta0, c.beta1)
    };
    let step = (t_hi - t_lo) / (anchors.len() - 1) as f64;
    let mut l1 = 0.0;
    let mut l0 = 0.0;
    const HALF_LN_2PI: f64 = 0.918_938_533_204_672_7;
    for i in 0..resid.t.len() {
        // First anchor at or after this residual's time.
        let pos = ((resid.t[i] - t_lo) / step).ceil().max(0.0) as usize;
        let fit = &anchor_fits[pos.min(anchors.len() - 1)];
        if fit.degenerate || !fit.beta0.is_finite() || fit.beta0 <= 0.0 {
            continue; // excluded from both sums
        }
        let g1 = fit.beta0.ln() + fit.beta1 * resid.s[i];
        l1 += -HALF_LN_2PI - g1 - 0.5 * resid.e2[i] * (-2.0 * g1).exp();
        let g0 = b0c.ln() + b1c * resid.s[i];
        l0 += -HALF_LN_2PI - g0 - 0.5 * resid.e2[i] * (-2.0 * g0).exp();
    }
    Ok(l1 - l0)
}

/// The full constant fit (drift by OLS, volatility by MLE) used to generate
/// bootstrap samples under the constancy null.
pub fn fit_constant_model(path: &SamplePath) -> Result<ConstantFit> {
    let delta = path.delta();
    let xs = path.values();
    let idx = path.transition_indices();
    let x: Vec<f64> = idx.iter().map(|&i| xs[i]).collect();
    let y: Vec<f64> = idx.iter().map(|&i| (xs[i + 1] - xs[i]) / delta).collect();
    let (a0, a1) = crate::state_estimators::ols(&x, &y)?;
    let mut resid = ResidualSet {
        t: Vec::new(),
        x: Vec::new(),
        s: Vec::new(),
        e2: Vec::new(),
    };
    for (&xi, &yi) in x.iter().zip(&y) {
        if xi <= 0.0 {
            continue;
        }
        let e = (yi - a0 - a1 * xi) * delta.sqrt();
        resid.t.push(0.0);
        resid.x.push(xi);
        resid.s.push(xi.ln());
        resid.e2.push(e * e);
    }
    let c = fit_constant_vol(&resid)?;
    Ok(ConstantFit {
        a0,
        a1,
        beta0: c.beta0,
        beta1: c.beta1,
        loglik: c.loglik,
    })
}

impl ConstantFit {
    /// Euler simulation under the constant fit, with positivity preserved by
    /// reflection; deterministic in `(seed, path_id)`.
    pub fn simulate(&self, n: usize, delta: f64, x0: f64, seed: u64, path_id: u64) -> Result<SamplePath> {
        let mut stream = ShockStream::new(seed, path_id);
        let sqrt_dt = delta.sqrt();
        let mut x = x0;
        let mut values = Vec::with_capacity(n + 1);
        values.push(x);
        for step in 0..n as u64 {
            let eps = stream.normal(step);
            let mu = self.a0 + self.a1 * x;
            let sig = self.beta0 * x.max(1e-300).powf(self.beta1);
            let mut next = x + mu * delta + sig * sqrt_dt * eps;
            if next <= 0.0 {
                next = next.abs().max(f64::MIN_POSITIVE);
            }
            if !next.is_finite() {
                return Err(Error::Numerical("constant-fit simulation diverged".into()));
            }
            x = next;
            values.push(x);
        }
        SamplePath::new(delta, values)
    }
}

/// Generalized likelihood ratio test of H0: b0(t), b1(t) constant, with a
/// parametric bootstrap under the fitted constant model.
pub fn glr_test_constancy(path: &SamplePath, h: f64, n_boot: usize, seed: u64) -> Result<TestResult> {
    let statistic = glr_constancy_statistic(path, h)?;
    let constant = fit_constant_model(path)?;
    let x0 = path.values()[0];
    let n = path.len() - 1;
    let delta = path.delta();
    let draws = exec::map_indexed(n_boot, |b| -> Result<f64> {
        let sim = constant.simulate(n, delta, x0, seed, 1 + b as u64)?;
        glr_constancy_statistic(&sim, h)
    });
    let mut boot = Vec::with_capacity(n_boot);
    let mut excluded = 0usize;
    for d in draws {
        match d {
            Ok(v) if v.is_finite() => boot.push(v),
            _ => excluded += 1,
        }
    }
    if boot.is_empty() {
        return Err(Error::Numerical("all bootstrap replicates failed".into()));
    }
    let mut out = TestResult::from_bootstrap(statistic, &boot, excluded);
    out.diagnostics.push(format!(
        "constant fit: a0={:.6e} a1={:.6e} beta0={:.6e} beta1={:.4}",
        constant.a0, constant.a1, constant.beta0, constant.beta1
    ));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Coefficient, ModelSpec};
    use crate::simulate::{simulate, simulate_exact, Scheme, SimPlan, Start};
    use approx::assert_abs_diff_eq;
    use std::sync::Arc;

    fn one_sided(h: f64) -> KernelSpec {
        KernelSpec::new(KernelShape::OneSidedEpanechnikov, h).unwrap()
    }

    fn vasicek_path(n: usize, delta: f64, seed: u64) -> SamplePath {
        let model = ModelSpec::vasicek(0.5, 0.06, 0.02).unwrap();
        simulate_exact(
            &SimPlan::new(model, Start::Stationary, delta, n, 1, seed, Scheme::Exact).unwrap(),
        )
        .unwrap()
    }

    fn cir_path(n: usize, delta: f64, seed: u64) -> SamplePath {
        let model = ModelSpec::cir(0.21459, 0.08571, 0.07830).unwrap();
        simulate_exact(
            &SimPlan::new(model, Start::Stationary, delta, n, 1, seed, Scheme::Exact).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn drift_fit_requires_one_sided_kernel() {
        let path = vasicek_path(200, 1.0 / 52.0, 1);
        let kernel = KernelSpec::new(KernelShape::Epanechnikov, 1.0).unwrap();
        assert!(fit_drift_time(&path, &kernel, &[2.0]).is_err());
    }

    #[test]
    fn drift_fit_constant_coefficients_covered() {
        // Vasicek: a0 = kappa alpha, a1 = -kappa, constant in time.
        let path = vasicek_path(5000, 1.0 / 52.0, 2);
        let kernel = one_sided(8.0);
        let t_grid = default_time_grid(&path, 8.0, 30);
        let (a0, a1) = fit_drift_time(&path, &kernel, &t_grid).unwrap();
        let mut hits0 = 0;
        let mut hits1 = 0;
        let mut total = 0;
        for i in 0..t_grid.len() {
            if !a0.is_reliable(i) {
                continue;
            }
            total += 1;
            if (a0.value[i] - 0.5 * 0.06).abs() <= 2.0 * a0.stderr[i] {
                hits0 += 1;
            }
            if (a1.value[i] + 0.5).abs() <= 2.0 * a1.stderr[i] {
                hits1 += 1;
            }
        }
        assert!(total >= 25);
        assert!(hits0 * 10 >= total * 9, "a0 coverage {hits0}/{total}");
        assert!(hits1 * 10 >= total * 9, "a1 coverage {hits1}/{total}");
    }

    #[test]
    fn drift_fit_empty_window_flagged() {
        let path = vasicek_path(300, 1.0 / 52.0, 3);
        let kernel = one_sided(0.5);
        // A grid time before origin + h has no mass at all.
        let (a0, _) = fit_drift_time(&path, &kernel, &[path.origin_time() - 0.1]).unwrap();
        assert!(a0.flags[0].contains(PointFlags::LOW_MASS));
        assert!(a0.value[0].is_nan());
    }

    #[test]
    fn drift_fit_tracks_mid_sample_break() {
        // a0 jumps halfway; the fitted curve must transition within one
        // bandwidth of the break.
        let delta = 1.0 / 52.0;
        let n = 6000;
        let t_break = n as f64 * delta / 2.0;
        let lo = 0.5 * 0.04;
        let hi = 0.5 * 0.10;
        let a0_fun: Coefficient = Arc::new(move |t: f64| if t < t_break { lo } else { hi });
        let model = ModelSpec::time_varying_ckls(
            a0_fun,
            Arc::new(|_| -0.5),
            Arc::new(|_| 0.02),
            Arc::new(|_| 0.0),
        );
        let plan = SimPlan::new(model, Start::Fixed(0.08), delta, n, 1, 4, Scheme::Euler).unwrap();
        let path = simulate(&plan).unwrap();
        let h = 6.0;
        let kernel = one_sided(h);
        let t_grid = default_time_grid(&path, h, 80);
        let (a0, _) = fit_drift_time(&path, &kernel, &t_grid).unwrap();
        for i in 0..t_grid.len() {
            if !a0.is_reliable(i) {
                continue;
            }
            let t = t_grid[i];
            // One-sided window (t-h, t): fits are purely pre-break until
            // t_break and fully post-break after t_break + h.
            if t < t_break {
                assert!(
                    (a0.value[i] - lo).abs() < 4.0 * a0.stderr[i] + 2e-3,
                    "t={t}: {} vs lo {lo}",
                    a0.value[i]
                );
            } else if t > t_break + h {
                assert!(
                    (a0.value[i] - hi).abs() < 4.0 * a0.stderr[i] + 2e-3,
                    "t={t}: {} vs hi {hi}",
                    a0.value[i]
                );
            }
        }
    }

    #[test]
    fn drift_fit_is_strictly_historical() {
        let path = vasicek_path(2000, 1.0 / 52.0, 5);
        let kernel = one_sided(5.0);
        let t0 = path.origin_time() + 20.0;
        let (a0_before, _) = fit_drift_time(&path, &kernel, &[t0]).unwrap();
        // Perturb an observation strictly after t0.
        let mut vals = path.values().to_vec();
        let idx_future = ((t0 - path.origin_time()) / path.delta()).ceil() as usize + 3;
        vals[idx_future] += 1.0;
        let bumped = SamplePath::new(path.delta(), vals).unwrap();
        let (a0_after, _) = fit_drift_time(&bumped, &kernel, &[t0]).unwrap();
        assert_eq!(a0_before.value[0].to_bits(), a0_after.value[0].to_bits());
    }

    #[test]
    fn vol_fit_recovers_constant_sigma_for_ou_data() {
        // Shifted OU stays positive; beta1 truth is 0 and beta0 ~ sigma.
        let model = ModelSpec::vasicek(0.6, 0.5, 0.05).unwrap();
        let path = simulate_exact(
            &SimPlan::new(model, Start::Stationary, 1.0 / 52.0, 8000, 1, 6, Scheme::Exact).unwrap(),
        )
        .unwrap();
        let kernel = one_sided(12.0);
        let t_grid = default_time_grid(&path, 12.0, 30);
        let drift = fit_drift_time(&path, &kernel, &t_grid).unwrap();
        let (b0, b1) = fit_vol_time(&path, &drift, &kernel, &t_grid).unwrap();
        let mut hits = 0;
        let mut total = 0;
        let mut b0_vals = Vec::new();
        for i in 0..t_grid.len() {
            if !b1.is_reliable(i) || !b1.stderr[i].is_finite() {
                continue;
            }
            total += 1;
            if b1.value[i].abs() <= 2.0 * b1.stderr[i] {
                hits += 1;
            }
            b0_vals.push(b0.value[i]);
        }
        assert!(total >= 20);
        assert!(hits * 10 >= total * 9, "beta1 coverage {hits}/{total}");
        let mean_b0 = crate::numerics::mean(&b0_vals);
        assert!(
            (mean_b0 - 0.05).abs() < 0.01,
            "mean beta0 {mean_b0} vs sigma 0.05"
        );
    }

    #[test]
    fn vol_fit_flags_unidentifiable_window() {
        let s = vec![0.0; 50]; // all X = 1
        let e2 = vec![1.0; 50];
        let w = vec![1.0; 50];
        let fit = vol_mle(&s, &e2, &w);
        assert!(fit.degenerate);
    }

    #[test]
    fn vol_fit_near_half_exponent_on_cir_data() {
        let path = cir_path(8000, 1.0 / 52.0, 7);
        let kernel = one_sided(15.0);
        let t_grid = default_time_grid(&path, 15.0, 30);
        let drift = fit_drift_time(&path, &kernel, &t_grid).unwrap();
        let (_, b1) = fit_vol_time(&path, &drift, &kernel, &t_grid).unwrap();
        let vals: Vec<f64> = (0..t_grid.len())
            .filter(|&i| b1.is_reliable(i))
            .map(|i| b1.value[i])
            .collect();
        let mean_b1 = crate::numerics::mean(&vals);
        assert!(
            (mean_b1 - 0.5).abs() < 0.15,
            "mean fitted exponent {mean_b1} vs 0.5"
        );
    }

    #[test]
    fn semiparametric_exponent_ou_vs_square_root() {
        // Medians over a handful of replications.
        let mut ou_betas = Vec::new();
        let mut cir_betas = Vec::new();
        for seed in 0..9u64 {
            let model = ModelSpec::vasicek(0.6, 0.5, 0.05).unwrap();
            let p = simulate_exact(
                &SimPlan::new(model, Start::Stationary, 1.0 / 52.0, 4000, 1, 20 + seed, Scheme::Exact)
                    .unwrap(),
            )
            .unwrap();
            ou_betas.push(
                fit_semiparametric(&p, &one_sided(10.0)).unwrap().beta1.value[0],
            );
            let p = cir_path(4000, 1.0 / 52.0, 40 + seed);
            cir_betas.push(
                fit_semiparametric(&p, &one_sided(10.0)).unwrap().beta1.value[0],
            );
        }
        ou_betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        cir_betas.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let med_ou = ou_betas[ou_betas.len() / 2];
        let med_cir = cir_betas[cir_betas.len() / 2];
        assert!(med_ou.abs() < 0.15, "median OU exponent {med_ou}");
        assert!((med_cir - 0.5).abs() < 0.15, "median CIR exponent {med_cir}");
    }

    #[test]
    fn semiparametric_profile_peaks_near_truth() {
        let path = cir_path(5000, 1.0 / 52.0, 71);
        let kernel = one_sided(10.0);
        let t_grid = default_time_grid(&path, 10.0, 50);
        let drift = fit_drift_time(&path, &kernel, &t_grid).unwrap();
        let resid = residuals_from_drift(&path, &drift).unwrap();
        let loglik_at = |beta: f64| {
            let b0sq = beta0_profile_at(&resid, beta, &kernel, &resid.t);
            let mut acc = 0.0;
            for i in 0..resid.t.len() {
                if b0sq[i].is_finite() && b0sq[i] > 0.0 {
                    let g = 0.5 * b0sq[i].ln() + beta * resid.s[i];
                    acc += -g - 0.5 * resid.e2[i] * (-2.0 * g).exp();
                }
            }
            acc
        };
        let at_truth = loglik_at(0.5);
        assert!(at_truth >= loglik_at(0.0), "profile not peaked vs beta=0");
        assert!(at_truth >= loglik_at(1.0), "profile not peaked vs beta=1");
    }

    #[test]
    fn beta0_scale_equivariance_with_frozen_exponent() {
        let path = cir_path(3000, 1.0 / 52.0, 8);
        let c = 3.5f64;
        let scaled_vals: Vec<f64> = path.values().iter().map(|v| c * v).collect();
        let scaled = SamplePath::new(path.delta(), scaled_vals).unwrap();
        let kernel = one_sided(8.0);
        let t_grid = default_time_grid(&path, 8.0, 20);
        let beta = 0.5;
        let d1 = fit_drift_time(&path, &kernel, &t_grid).unwrap();
        let d2 = fit_drift_time(&scaled, &kernel, &t_grid).unwrap();
        let r1 = residuals_from_drift(&path, &d1).unwrap();
        let r2 = residuals_from_drift(&scaled, &d2).unwrap();
        let b1 = beta0_profile_at(&r1, beta, &kernel, &t_grid);
        let b2 = beta0_profile_at(&r2, beta, &kernel, &t_grid);
        for (v1, v2) in b1.iter().zip(&b2) {
            if v1.is_finite() && v2.is_finite() {
                // b0^2 scales by c^{2 - 2 beta} when the exponent is frozen.
                assert_abs_diff_eq!(
                    v2 / v1,
                    c.powf(2.0 - 2.0 * beta),
                    epsilon = 1e-9 * c * c
                );
            }
        }
    }

    #[test]
    fn bandwidth_prediction_prefers_wide_windows_for_constant_model() {
        let path = cir_path(4000, 1.0 / 52.0, 9);
        let candidates = [2.0, 4.0, 8.0, 16.0];
        let h = bandwidth_by_prediction(&path, &candidates, PredictionTarget::Level).unwrap();
        assert!(h >= 8.0, "selected {h}");
        // Single candidate passes through unchanged.
        let h1 = bandwidth_by_prediction(&path, &[3.0], PredictionTarget::Level).unwrap();
        assert_eq!(h1, 3.0);
    }

    #[test]
    fn bandwidth_prediction_shrinks_for_fast_varying_drift() {
        // alpha0(t) swings with a 10-year period against a small diffusion,
        // so stale windows visibly hurt one-step prediction.
        let delta = 1.0 / 52.0;
        let n = 6000;
        let a0_fun: Coefficient = Arc::new(move |t: f64| {
            0.8 * (0.06 + 0.05 * (2.0 * std::f64::consts::PI * t / 10.0).sin())
        });
        let model = ModelSpec::time_varying_ckls(
            a0_fun,
            Arc::new(|_| -0.8),
            Arc::new(|_| 0.008),
            Arc::new(|_| 0.5),
        );
        let varying = simulate(
            &SimPlan::new(model, Start::Fixed(0.06), delta, n, 1, 10, Scheme::Euler).unwrap(),
        )
        .unwrap();
        let constant = cir_path(n, delta, 11);
        let candidates = [2.0, 5.0, 10.0, 20.0, 40.0];
        let h_varying =
            bandwidth_by_prediction(&varying, &candidates, PredictionTarget::Level).unwrap();
        let h_constant =
            bandwidth_by_prediction(&constant, &candidates, PredictionTarget::Level).unwrap();
        assert!(
            h_varying < h_constant,
            "varying {h_varying} vs constant {h_constant}"
        );
    }

    #[test]
    fn glr_constancy_deterministic_and_nonnegative() {
        let path = cir_path(1500, 1.0 / 52.0, 12);
        let a = glr_test_constancy(&path, 6.0, 19, 777).unwrap();
        let b = glr_test_constancy(&path, 6.0, 19, 777).unwrap();
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_value, b.p_value);
        assert!(a.statistic > -1e-6, "GLR statistic {}", a.statistic);
        assert!((0.0..=1.0).contains(&a.p_value));
        // Granularity 1/(n_boot+1).
        let scaled = a.p_value * 20.0;
        assert!((scaled - scaled.round()).abs() < 1e-12);
    }

    #[test]
    fn glr_constancy_detects_mid_sample_vol_shift() {
        // beta0 doubles halfway; a single test should reject decisively.
        let delta = 1.0 / 52.0;
        let n = 5000;
        let t_break = n as f64 * delta / 2.0;
        let b0_fun: Coefficient = Arc::new(move |t: f64| if t < t_break { 0.03 } else { 0.06 });
        let model = ModelSpec::time_varying_ckls(
            Arc::new(|_| 0.5 * 0.08),
            Arc::new(|_| -0.5),
            b0_fun,
            Arc::new(|_| 0.5),
        );
        let path = simulate(
            &SimPlan::new(model, Start::Fixed(0.08), delta, n, 1, 13, Scheme::Euler).unwrap(),
        )
        .unwrap();
        let res = glr_test_constancy(&path, 8.0, 49, 99).unwrap();
        assert!(res.p_value <= 0.05, "p = {}", res.p_value);
    }
}

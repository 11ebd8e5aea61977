//! State-domain estimation of drift and squared volatility.
//!
//! The workhorses are the Euler-difference responses
//! Y_i = (X_{i+1} - X_i)/Delta and Z_i = (X_{i+1} - X_i)^2/Delta, whose
//! conditional means approximate mu and sigma^2. Higher-order difference
//! schemes replace the first difference by a weighted multi-step combination
//! that trades O(Delta^k) bias for an explicit variance inflation; the
//! inflation factors V1(k), V2(k) are computed exactly from the scheme
//! coefficients.

use crate::error::{Error, Result};
use crate::numerics::quad::{cumulative_trapezoid, linspace};
use crate::path::SamplePath;
use crate::smoothing::{
    kernel_density, local_linear, nadaraya_watson, CurveEstimate,
    KernelSpec, PointFlags, MASS_FLOOR,
};

/// Order-k difference scheme with its variance inflation factors.
///
/// Coefficients are a_{k,j} = (-1)^{j+1} C(k,j) / j; the increment weights
/// b_m = sum_{j >= m} a_{k,j} express the scheme in single-step increments.
/// V1 = sum b_m^2 inflates the drift-response variance, and
/// V2 = trace(A^2) with A = sum_j a_{k,j} 1_j 1_j' inflates the
/// squared-difference response variance.
#[derive(Debug, Clone, PartialEq)]
pub struct DifferenceScheme {
    pub k: usize,
    pub a: Vec<f64>,
    pub increment_weights: Vec<f64>,
    pub v1: f64,
    pub v2: f64,
}

/// Build the order-k scheme; k is limited to 1..=5 because the variance
/// premium beyond that is enormous (use [`DifferenceScheme::with_override`]
/// to go higher anyway).
pub fn difference_scheme(k: usize) -> Result<DifferenceScheme> {
    DifferenceScheme::new(k)
}

impl DifferenceScheme {
    pub fn new(k: usize) -> Result<Self> {
        if !(1..=5).contains(&k) {
            return Err(Error::InvalidInput(format!(
                "order k must be in 1..=5 (got {k}); higher orders require with_override"
            )));
        }
        Ok(Self::build(k))
    }

    /// Build a scheme of any order k >= 1, bypassing the guard.
    pub fn with_override(k: usize) -> Result<Self> {
        if k < 1 {
            return Err(Error::InvalidInput("order k must be >= 1".into()));
        }
        Ok(Self::build(k))
    }

    fn build(k: usize) -> Self {
        let mut a = Vec::with_capacity(k);
        let mut binom = 1.0f64; // C(k, j), starting at j = 1
        for j in 1..=k {
            binom = binom * (k - j + 1) as f64 / j as f64;
            let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
            a.push(sign * binom / j as f64);
        }
        let increment_weights: Vec<f64> = (0..k).map(|m| a[m..].iter().sum()).collect();
        let v1: f64 = increment_weights.iter().map(|b| b * b).sum();
        // A_{m,l} = b_{max(m,l)}, so trace(A^2) = sum_{m,l} b_max^2.
        let mut v2 = 0.0;
        for (m, &b) in increment_weights.iter().enumerate() {
            v2 += (2 * m + 1) as f64 * b * b;
        }
        DifferenceScheme {
            k,
            a,
            increment_weights,
            v1,
            v2,
        }
    }

    /// Responses (X_i, Y*_i, Z*_i) over the windows of `path` free of breaks.
    pub fn responses(&self, path: &SamplePath) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xs = path.values();
        let inv_delta = 1.0 / path.delta();
        let idx = path.window_indices(self.k);
        let mut x = Vec::with_capacity(idx.len());
        let mut y = Vec::with_capacity(idx.len());
        let mut z = Vec::with_capacity(idx.len());
        for i in idx {
            let mut ys = 0.0;
            let mut zs = 0.0;
            for (j, &aj) in self.a.iter().enumerate() {
                let incr = xs[i + j + 1] - xs[i];
                ys += aj * incr;
                zs += aj * incr * incr;
            }
            x.push(xs[i]);
            y.push(ys * inv_delta);
            z.push(zs * inv_delta);
        }
        (x, y, z)
    }
}

fn euler_responses(path: &SamplePath) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    DifferenceScheme::build(1).responses(path)
}

fn require_len(path: &SamplePath, min: usize, what: &str) -> Result<()> {
    if path.len() < min {
        return Err(Error::InvalidInput(format!(
            "{what} needs at least {min} observations, got {}",
            path.len()
        )));
    }
    Ok(())
}

fn clip_negative(curve: &mut CurveEstimate) {
    for i in 0..curve.len() {
        if curve.value[i].is_finite() && curve.value[i] < 0.0 {
            curve.value[i] = 0.0;
            curve.flags[i] |= PointFlags::CLIPPED;
        }
    }
}

/// Kernel-ratio (Nadaraya–Watson) estimates of drift and squared volatility.
pub fn estimate_stanton(
    path: &SamplePath,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<(CurveEstimate, CurveEstimate)> {
    require_len(path, 20, "estimate_stanton")?;
    let (x, y, z) = euler_responses(path);
    let drift = nadaraya_watson(&x, &y, kernel, grid)?;
    let mut vol2 = nadaraya_watson(&x, &z, kernel, grid)?;
    clip_negative(&mut vol2);
    Ok((drift, vol2))
}

/// Local-linear drift plus residual-based local-linear squared volatility.
///
/// The volatility response uses the squared centered increments
/// (X_{i+1} - X_i - muhat(X_i) Delta)^2 / Delta, which removes the drift
/// contribution that the raw squared difference carries.
pub fn estimate_fan_yao(
    path: &SamplePath,
    shape: crate::smoothing::KernelShape,
    h_drift: f64,
    h_vol: f64,
    grid: &[f64],
) -> Result<(CurveEstimate, CurveEstimate)> {
    require_len(path, 20, "estimate_fan_yao")?;
    let kernel_drift = KernelSpec::new(shape, h_drift)?;
    let kernel_vol = KernelSpec::new(shape, h_vol)?;
    let (x, y, _) = euler_responses(path);
    let drift = local_linear(&x, &y, &kernel_drift, grid)?;
    // Drift evaluated at the sample points for the residuals.
    let mu_at = local_linear(&x, &y, &kernel_drift, &x)?;
    let delta = path.delta();
    let mut rx = Vec::with_capacity(x.len());
    let mut rz = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        if !mu_at.is_reliable(i) {
            continue;
        }
        let resid = y[i] - mu_at.value[i]; // (dX - mu dt)/dt
        rx.push(x[i]);
        rz.push(resid * resid * delta);
    }
    if rx.len() < 10 {
        return Err(Error::Numerical(
            "estimate_fan_yao: too few usable residuals".into(),
        ));
    }
    let mut vol2 = local_linear(&rx, &rz, &kernel_vol, grid)?;
    clip_negative(&mut vol2);
    Ok((drift, vol2))
}

/// Order-k difference estimates of drift and squared volatility by
/// local-linear smoothing of Y* and Z*. Standard-error bands inherit the
/// inflated residual variance of the higher-order responses.
pub fn estimate_order_k(
    path: &SamplePath,
    k: usize,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<(CurveEstimate, CurveEstimate)> {
    let scheme = difference_scheme(k)?;
    require_len(path, k + 20, "estimate_order_k")?;
    let (x, y, z) = scheme.responses(path);
    let drift = local_linear(&x, &y, kernel, grid)?;
    let mut vol2 = local_linear(&x, &z, kernel, grid)?;
    clip_negative(&mut vol2);
    Ok((drift, vol2))
}

/// Squared volatility for fixed sampling interval via the stationarity
/// identity: sigma^2(x) = 2 int_L^x muhat(u) fhat(u) du / fhat(x), with a
/// linear drift muhat(u) = kappahat (alphahat - u) fitted by least squares.
pub fn estimate_vol_fixed_delta(
    path: &SamplePath,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<CurveEstimate> {
    require_len(path, 100, "estimate_vol_fixed_delta")?;
    if !path.all_positive() {
        return Err(Error::DomainViolation(
            "estimate_vol_fixed_delta expects a positive-valued path".into(),
        ));
    }
    let (x, y, _) = euler_responses(path);
    let (intercept, slope) = ols(&x, &y)?;
    let kappa = -slope;
    let alpha = if kappa.abs() > 1e-12 { intercept / kappa } else { f64::NAN };
    if !(kappa > 0.0 && alpha.is_finite()) {
        return Err(Error::Numerical(format!(
            "drift least squares gave non-mean-reverting fit (kappa {kappa}, alpha {alpha})"
        )));
    }
    estimate_vol_fixed_delta_with_drift(path, kappa, alpha, kernel, grid)
}

/// Same inversion with the linear drift coefficients supplied by the caller.
pub fn estimate_vol_fixed_delta_with_drift(
    path: &SamplePath,
    kappa: f64,
    alpha: f64,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<CurveEstimate> {
    let data = path.values();
    let data_min = data.iter().cloned().fold(f64::INFINITY, f64::min);
    let data_max = data.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    // Lower integration limit: 0 for positive-domain data, else the minimum.
    let lower = if data_min > 0.0 { 0.0 } else { data_min };
    let hi = data_max.max(grid.iter().cloned().fold(f64::NEG_INFINITY, f64::max));
    let fine = linspace(lower, hi + kernel.bandwidth, 2001);
    let fhat = kernel_density(data, kernel, &fine)?;
    let integrand: Vec<f64> = fine
        .iter()
        .zip(&fhat.value)
        .map(|(&u, &f)| kappa * (alpha - u) * f)
        .collect();
    let cum = cumulative_trapezoid(&fine, &integrand);
    let at = |x: f64| -> f64 {
        if x <= lower {
            return 0.0;
        }
        let pos = (x - lower) / (fine[fine.len() - 1] - lower) * (fine.len() - 1) as f64;
        let i = (pos.floor() as usize).min(fine.len() - 2);
        let frac = pos - i as f64;
        cum[i] * (1.0 - frac) + cum[i + 1] * frac
    };
    let f_on_grid = kernel_density(data, kernel, grid)?;
    let mut value = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    let mut mass = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        let f = f_on_grid.value[i];
        let m = f_on_grid.mass[i];
        let mut fl = PointFlags::empty();
        let integral = at(x);
        let v = if m < MASS_FLOOR || f <= 0.0 {
            fl |= PointFlags::LOW_MASS;
            f64::NAN
        } else if integral <= 0.0 {
            fl |= PointFlags::CLIPPED;
            0.0
        } else {
            2.0 * integral / f
        };
        // Delta-method error from the density factor in the ratio.
        let se = if v.is_finite() && f > 0.0 {
            v.abs() * f_on_grid.stderr[i] / f
        } else {
            f64::NAN
        };
        value.push(v);
        stderr.push(se);
        mass.push(m);
        flags.push(fl);
    }
    Ok(CurveEstimate {
        grid: grid.to_vec(),
        value,
        stderr,
        mass,
        flags,
    })
}

/// Drift from the continuous-record identity mu = [sigma^2 f]'/(2 f),
/// assembled as (d sigma^2/dx + sigma^2 d log f/dx) / 2. The log-density
/// slope comes from a local-linear fit to log fhat on a fine grid, which
/// behaves far better in the tails than differencing fhat directly.
pub fn drift_from_density(
    vol2_fn: &(dyn Fn(f64) -> f64 + Sync),
    path_fine: &SamplePath,
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<CurveEstimate> {
    require_len(path_fine, 100, "drift_from_density")?;
    let data = path_fine.values();
    let lo = crate::numerics::quantile(data, 0.001) - kernel.bandwidth;
    let hi = crate::numerics::quantile(data, 0.999) + kernel.bandwidth;
    let fine = linspace(lo, hi, 1201);
    let fhat = kernel_density(data, kernel, &fine)?;
    let mut xs = Vec::with_capacity(fine.len());
    let mut logf = Vec::with_capacity(fine.len());
    for (i, &f) in fhat.value.iter().enumerate() {
        if f > 0.0 && fhat.mass[i] >= MASS_FLOOR {
            xs.push(fine[i]);
            logf.push(f.ln());
        }
    }
    if xs.len() < 10 {
        return Err(Error::Numerical(
            "drift_from_density: density mass floor leaves too few grid points".into(),
        ));
    }
    let fits = crate::smoothing::ll_fit_full(&xs, &logf, kernel, grid)?;
    let f_at = kernel_density(data, kernel, grid)?;
    // Serial dependence of a finely sampled trajectory inflates the slope
    // variance well past iid plug-ins; batch means over contiguous time
    // blocks measure it directly.
    let n_blocks = 16usize.min(data.len() / 500).max(4);
    let block_len = data.len() / n_blocks;
    let mut block_slopes: Vec<Vec<f64>> = vec![Vec::new(); grid.len()];
    for b in 0..n_blocks {
        let chunk = &data[b * block_len..((b + 1) * block_len).min(data.len())];
        let fb = kernel_density(chunk, kernel, &fine)?;
        let mut bx = Vec::new();
        let mut blf = Vec::new();
        for (i, &f) in fb.value.iter().enumerate() {
            if f > 0.0 && fb.mass[i] >= MASS_FLOOR {
                bx.push(fine[i]);
                blf.push(f.ln());
            }
        }
        if bx.len() < 10 {
            continue;
        }
        let bfits = crate::smoothing::ll_fit_full(&bx, &blf, kernel, grid)?;
        for (i, bf) in bfits.iter().enumerate() {
            if bf.slope.is_finite()
                && bf.est.flags & (PointFlags::LOW_MASS | PointFlags::DEGENERATE)
                    == PointFlags::empty()
            {
                block_slopes[i].push(bf.slope);
            }
        }
    }
    let mut value = Vec::with_capacity(grid.len());
    let mut stderr = Vec::with_capacity(grid.len());
    let mut mass = Vec::with_capacity(grid.len());
    let mut flags = Vec::with_capacity(grid.len());
    for (i, &x) in grid.iter().enumerate() {
        let m = f_at.mass[i];
        let mut fl = fits[i].est.flags;
        if m < MASS_FLOOR {
            fl |= PointFlags::LOW_MASS;
        }
        let v2 = vol2_fn(x);
        let h = 1e-5 * (1.0 + x.abs());
        let dv2 = (vol2_fn(x + h) - vol2_fn(x - h)) / (2.0 * h);
        let ok = fl & (PointFlags::LOW_MASS | PointFlags::DEGENERATE) == PointFlags::empty();
        let v = if ok {
            drift_identity(v2, dv2, fits[i].slope)
        } else {
            f64::NAN
        };
        value.push(v);
        let blocks = &block_slopes[i];
        let slope_se = if blocks.len() >= 4 {
            (crate::numerics::variance(blocks) / blocks.len() as f64).sqrt()
        } else {
            fl |= PointFlags::LOW_MASS;
            f64::NAN
        };
        stderr.push(0.5 * v2 * slope_se);
        mass.push(m);
        flags.push(fl);
    }
    Ok(CurveEstimate {
        grid: grid.to_vec(),
        value,
        stderr,
        mass,
        flags,
    })
}

/// The continuous-record identity itself: mu = (d sigma^2/dx + sigma^2 * d log f/dx)/2.
pub fn drift_identity(vol2: f64, dvol2_dx: f64, log_density_slope: f64) -> f64 {
    0.5 * (dvol2_dx + vol2 * log_density_slope)
}

/// Inverse-variance combination of a state-domain and a time-domain estimate.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct CombinedEstimate {
    pub value: f64,
    pub stderr: f64,
    pub weight_state: f64,
    pub weight_time: f64,
}

/// Combine `(value, stderr)` pairs with inverse-variance weights. A zero
/// stderr on one side returns that estimate with full weight.
pub fn integrate_time_state(state: (f64, f64), time: (f64, f64)) -> Result<CombinedEstimate> {
    let ((v1, s1), (v2, s2)) = (state, time);
    for (name, s) in [("state", s1), ("time", s2)] {
        if !s.is_finite() || s < 0.0 {
            return Err(Error::InvalidInput(format!(
                "{name} stderr must be finite and nonnegative, got {s}"
            )));
        }
    }
    if s1 == 0.0 && s2 == 0.0 {
        return Err(Error::InvalidInput(
            "both standard errors are zero; combination undefined".into(),
        ));
    }
    if s1 == 0.0 {
        return Ok(CombinedEstimate {
            value: v1,
            stderr: 0.0,
            weight_state: 1.0,
            weight_time: 0.0,
        });
    }
    if s2 == 0.0 {
        return Ok(CombinedEstimate {
            value: v2,
            stderr: 0.0,
            weight_state: 0.0,
            weight_time: 1.0,
        });
    }
    let (p1, p2) = (1.0 / (s1 * s1), 1.0 / (s2 * s2));
    let w1 = p1 / (p1 + p2);
    let w2 = p2 / (p1 + p2);
    Ok(CombinedEstimate {
        value: w1 * v1 + w2 * v2,
        stderr: (1.0 / (p1 + p2)).sqrt(),
        weight_state: w1,
        weight_time: w2,
    })
}

/// Ordinary least squares of y on (1, x).
pub(crate) fn ols(x: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidInput("ols needs matching series of length >= 2".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (xi, yi) in x.iter().zip(y) {
        sxx += (xi - mx) * (xi - mx);
        sxy += (xi - mx) * (yi - my);
    }
    if sxx <= 0.0 {
        return Err(Error::Numerical("ols: degenerate design".into()));
    }
    let slope = sxy / sxx;
    Ok((my - slope * mx, slope))
}

//! Kernel primitives shared by all nonparametric estimators: kernels,
//! kernel density estimation, Nadaraya–Watson and local-linear regression,
//! and bandwidth selection by cross-validation.
//!
//! Local-linear fits are computed from the moment sums
//! S_j(x) = sum_i K_h(X_i - x) (X_i - x)^j, which give the equivalent-kernel
//! weights
//!
//! ```text
//! K_n(u, x) = K_h(u) [S_2(x) - u S_1(x)] / [S_2(x) S_0(x) - S_1(x)^2].
//! ```
//!
//! These weights sum to one and have zero first moment around x, which is
//! what buys the boundary bias reduction over the kernel ratio estimator.

use bitflags::bitflags;

use crate::error::{Error, Result};
use crate::exec;
use crate::numerics::normal::norm_pdf;
use crate::numerics::quad::{linspace, trapezoid};
use crate::numerics::{quantile_sorted, silverman_bandwidth};

/// Minimum effective local sample size before a point is flagged unreliable.
pub const MASS_FLOOR: f64 = 5.0;

bitflags! {
    /// Per-point quality flags carried by [`CurveEstimate`].
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
    pub struct PointFlags: u8 {
        /// Effective local sample size below [`MASS_FLOOR`].
        const LOW_MASS = 1;
        /// Value clipped (e.g. a negative variance estimate set to zero).
        const CLIPPED = 2;
        /// Singular local design; no value computed.
        const DEGENERATE = 4;
    }
}

/// A function estimate on a grid with pointwise standard errors and the
/// effective local sample mass behind each point.
#[derive(Debug, Clone)]
pub struct CurveEstimate {
    pub grid: Vec<f64>,
    pub value: Vec<f64>,
    pub stderr: Vec<f64>,
    pub mass: Vec<f64>,
    pub flags: Vec<PointFlags>,
}

impl CurveEstimate {
    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    /// Whether point `i` carries a usable value.
    pub fn is_reliable(&self, i: usize) -> bool {
        self.flags[i] & (PointFlags::LOW_MASS | PointFlags::DEGENERATE) == PointFlags::empty()
    }

    /// Linear interpolation of the curve at `x`, clamped to the grid ends.
    /// Unreliable points are skipped; returns NaN if nothing is usable.
    pub fn interpolate(&self, x: f64) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .grid
            .iter()
            .zip(&self.value)
            .enumerate()
            .filter(|(i, _)| self.is_reliable(*i))
            .map(|(_, (&g, &v))| (g, v))
            .collect();
        if pts.is_empty() {
            return f64::NAN;
        }
        if x <= pts[0].0 {
            return pts[0].1;
        }
        if x >= pts[pts.len() - 1].0 {
            return pts[pts.len() - 1].1;
        }
        let j = pts.partition_point(|p| p.0 < x);
        let (x0, v0) = pts[j - 1];
        let (x1, v1) = pts[j];
        v0 + (v1 - v0) * (x - x0) / (x1 - x0)
    }

    fn from_points(grid: Vec<f64>, pts: Vec<PointEstimate>) -> Self {
        let mut value = Vec::with_capacity(pts.len());
        let mut stderr = Vec::with_capacity(pts.len());
        let mut mass = Vec::with_capacity(pts.len());
        let mut flags = Vec::with_capacity(pts.len());
        for p in pts {
            value.push(p.value);
            stderr.push(p.stderr);
            mass.push(p.mass);
            flags.push(p.flags);
        }
        CurveEstimate {
            grid,
            value,
            stderr,
            mass,
            flags,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct PointEstimate {
    pub(crate) value: f64,
    pub(crate) stderr: f64,
    pub(crate) mass: f64,
    pub(crate) flags: PointFlags,
}

impl PointEstimate {
    fn empty() -> Self {
        PointEstimate {
            value: f64::NAN,
            stderr: f64::NAN,
            mass: 0.0,
            flags: PointFlags::LOW_MASS,
        }
    }
}

/// Kernel shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelShape {
    Epanechnikov,
    Gaussian,
    /// K(u) = 1.5 (1 - u^2) on (-1, 0): weights only points below the target,
    /// which is what makes time-domain fits strictly historical.
    OneSidedEpanechnikov,
}

impl KernelShape {
    /// Kernel value at `u`.
    pub fn eval(self, u: f64) -> f64 {
        match self {
            KernelShape::Epanechnikov => {
                if u.abs() < 1.0 {
                    0.75 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
            KernelShape::Gaussian => norm_pdf(u),
            KernelShape::OneSidedEpanechnikov => {
                if u > -1.0 && u < 0.0 {
                    1.5 * (1.0 - u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Support of the kernel in `u`; `None` bound means unbounded.
    pub fn support(self) -> (Option<f64>, Option<f64>) {
        match self {
            KernelShape::Epanechnikov => (Some(-1.0), Some(1.0)),
            KernelShape::Gaussian => (None, None),
            KernelShape::OneSidedEpanechnikov => (Some(-1.0), Some(0.0)),
        }
    }

    /// Roughness R(K) = int K^2.
    pub fn roughness(self) -> f64 {
        match self {
            KernelShape::Epanechnikov => 0.6,
            KernelShape::Gaussian => 0.5 / std::f64::consts::PI.sqrt(),
            KernelShape::OneSidedEpanechnikov => 1.2,
        }
    }

    /// Derivative roughness R(K') = int (K')^2, for density-derivative
    /// plug-in variances.
    pub fn derivative_roughness(self) -> f64 {
        match self {
            KernelShape::Epanechnikov => 1.5,
            KernelShape::Gaussian => 0.25 / std::f64::consts::PI.sqrt(),
            KernelShape::OneSidedEpanechnikov => 3.0,
        }
    }
}

/// A kernel shape with its bandwidth, in the regressor's units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub shape: KernelShape,
    pub bandwidth: f64,
}

impl KernelSpec {
    pub fn new(shape: KernelShape, bandwidth: f64) -> Result<Self> {
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::InvalidInput(format!(
                "bandwidth must be positive, got {bandwidth}"
            )));
        }
        Ok(KernelSpec { shape, bandwidth })
    }

    /// K_h(v) = K(v / h) / h.
    pub fn eval(&self, v: f64) -> f64 {
        self.shape.eval(v / self.bandwidth) / self.bandwidth
    }
}

/// Design points sorted by the regressor, for windowed kernel sweeps.
pub(crate) struct SortedDesign {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

impl SortedDesign {
    pub fn new(x: &[f64], y: &[f64]) -> Self {
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_by(|&a, &b| x[a].partial_cmp(&x[b]).unwrap());
        SortedDesign {
            x: idx.iter().map(|&i| x[i]).collect(),
            y: idx.iter().map(|&i| y[i]).collect(),
        }
    }

    /// Index range [lo, hi) of points with nonzero kernel weight at `x0`.
    pub fn window(&self, kernel: &KernelSpec, x0: f64) -> (usize, usize) {
        let (slo, shi) = kernel.shape.support();
        let lo = match slo {
            Some(s) => self.x.partition_point(|&v| v <= x0 + s * kernel.bandwidth),
            None => 0,
        };
        let hi = match shi {
            Some(s) => self.x.partition_point(|&v| v < x0 + s * kernel.bandwidth),
            None => self.x.len(),
        };
        (lo, hi.max(lo))
    }
}

/// Kernel moment sums over the local window at one evaluation point.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct LocalMoments {
    pub s0: f64,
    pub s1: f64,
    pub s2: f64,
    pub t0: f64,
    pub t1: f64,
    /// sum K_h y^2, for residual variances.
    pub q0: f64,
    /// sum K_h^2, K_h^2 u, K_h^2 u^2, for equivalent-kernel variances.
    pub k2_0: f64,
    pub k2_1: f64,
    pub k2_2: f64,
    pub n_window: usize,
}

impl LocalMoments {
    pub(crate) fn collect(design: &SortedDesign, kernel: &KernelSpec, x0: f64) -> Self {
        let (lo, hi) = design.window(kernel, x0);
        let mut m = LocalMoments::default();
        for i in lo..hi {
            let u = design.x[i] - x0;
            let w = kernel.eval(u);
            if w <= 0.0 {
                continue;
            }
            let y = design.y[i];
            m.s0 += w;
            m.s1 += w * u;
            m.s2 += w * u * u;
            m.t0 += w * y;
            m.t1 += w * u * y;
            m.q0 += w * y * y;
            m.k2_0 += w * w;
            m.k2_1 += w * w * u;
            m.k2_2 += w * w * u * u;
            m.n_window += 1;
        }
        m
    }

    /// Effective sample size behind the kernel weights.
    pub(crate) fn mass(&self) -> f64 {
        if self.k2_0 > 0.0 {
            self.s0 * self.s0 / self.k2_0
        } else {
            0.0
        }
    }

    /// Local-linear denominator S_0 S_2 - S_1^2 and its degeneracy floor.
    fn ll_denominator(&self, h: f64) -> (f64, bool) {
        let d = self.s0 * self.s2 - self.s1 * self.s1;
        let scale = self.s0 * h * h;
        (d, d <= 1e-12 * scale * scale || self.s0 <= 0.0)
    }
}

fn nw_point(m: &LocalMoments) -> PointEstimate {
    if m.s0 <= 0.0 {
        return PointEstimate::empty();
    }
    let value = m.t0 / m.s0;
    let resid_var = (m.q0 / m.s0 - value * value).max(0.0);
    let mass = m.mass();
    let stderr = (resid_var * m.k2_0 / (m.s0 * m.s0)).sqrt();
    let mut flags = PointFlags::empty();
    if mass < MASS_FLOOR {
        flags |= PointFlags::LOW_MASS;
    }
    PointEstimate {
        value,
        stderr,
        mass,
        flags,
    }
}

/// Local-linear fit at one point: intercept (the estimate) and slope.
pub(crate) struct LlPoint {
    pub est: PointEstimate,
    pub slope: f64,
}

pub(crate) fn ll_point(m: &LocalMoments, h: f64) -> LlPoint {
    let (d, degen) = m.ll_denominator(h);
    if degen {
        let mut est = PointEstimate::empty();
        est.mass = m.mass();
        est.flags = PointFlags::DEGENERATE
            | if est.mass < MASS_FLOOR {
                PointFlags::LOW_MASS
            } else {
                PointFlags::empty()
            };
        return LlPoint {
            est,
            slope: f64::NAN,
        };
    }
    let a = (m.s2 * m.t0 - m.s1 * m.t1) / d;
    let b = (m.s0 * m.t1 - m.s1 * m.t0) / d;
    // Weighted residual variance around the local line.
    let rss = m.q0 - 2.0 * a * m.t0 - 2.0 * b * m.t1
        + a * a * m.s0
        + 2.0 * a * b * m.s1
        + b * b * m.s2;
    let resid_var = (rss / m.s0).max(0.0);
    // Variance of the intercept through the equivalent-kernel weights
    // K_n,i = K_h(u_i)(S_2 - u_i S_1)/D.
    let sum_kn2 =
        (m.s2 * m.s2 * m.k2_0 - 2.0 * m.s2 * m.s1 * m.k2_1 + m.s1 * m.s1 * m.k2_2) / (d * d);
    let mass = m.mass();
    let mut flags = PointFlags::empty();
    if mass < MASS_FLOOR {
        flags |= PointFlags::LOW_MASS;
    }
    LlPoint {
        est: PointEstimate {
            value: a,
            stderr: (resid_var * sum_kn2).sqrt(),
            mass,
            flags,
        },
        slope: b,
    }
}

/// Kernel density estimate on `grid` with plug-in standard errors.
pub fn kernel_density(data: &[f64], kernel: &KernelSpec, grid: &[f64]) -> Result<CurveEstimate> {
    if data.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "kernel_density needs at least 2 observations, got {}",
            data.len()
        )));
    }
    let design = SortedDesign::new(data, data);
    let n = data.len() as f64;
    let rk = kernel.shape.roughness();
    let h = kernel.bandwidth;
    let kernel = *kernel;
    let pts = exec::map_slice(grid, move |&x0| {
        let m = LocalMoments::collect(&design, &kernel, x0);
        let f = m.s0 / n;
        let mass = m.mass();
        let mut flags = PointFlags::empty();
        if mass < MASS_FLOOR {
            flags |= PointFlags::LOW_MASS;
        }
        PointEstimate {
            value: f,
            stderr: (f * rk / (n * h)).max(0.0).sqrt(),
            mass,
            flags,
        }
    });
    Ok(CurveEstimate::from_points(grid.to_vec(), pts))
}

/// Nadaraya–Watson regression of `y` on `x` evaluated on `grid`.
pub fn nadaraya_watson(
    x: &[f64],
    y: &[f64],
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<CurveEstimate> {
    check_design(x, y)?;
    let design = SortedDesign::new(x, y);
    let kernel = *kernel;
    let pts = exec::map_slice(grid, move |&x0| {
        nw_point(&LocalMoments::collect(&design, &kernel, x0))
    });
    Ok(CurveEstimate::from_points(grid.to_vec(), pts))
}

/// Local-linear regression of `y` on `x` evaluated on `grid`.
pub fn local_linear(x: &[f64], y: &[f64], kernel: &KernelSpec, grid: &[f64]) -> Result<CurveEstimate> {
    local_linear_with_slope(x, y, kernel, grid).map(|(c, _)| c)
}

/// Local-linear regression returning the fitted local slopes as well.
pub fn local_linear_with_slope(
    x: &[f64],
    y: &[f64],
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<(CurveEstimate, Vec<f64>)> {
    let fits = ll_fit_full(x, y, kernel, grid)?;
    let slopes = fits.iter().map(|f| f.slope).collect();
    let pts = fits.into_iter().map(|f| f.est).collect();
    Ok((CurveEstimate::from_points(grid.to_vec(), pts), slopes))
}

/// Full local-linear fit at each grid point (intercept, slope, errors).
pub(crate) fn ll_fit_full(
    x: &[f64],
    y: &[f64],
    kernel: &KernelSpec,
    grid: &[f64],
) -> Result<Vec<LlPoint>> {
    check_design(x, y)?;
    let design = SortedDesign::new(x, y);
    let kernel = *kernel;
    let h = kernel.bandwidth;
    Ok(exec::map_slice(grid, move |&x0| {
        ll_point(&LocalMoments::collect(&design, &kernel, x0), h)
    }))
}

/// Equivalent-kernel weights of the local-linear fit at `x0`, aligned with
/// the input order of `x`. They satisfy `sum w = 1` and `sum w (x_i - x0) = 0`
/// up to round-off; `None` if the local design is singular.
pub fn local_linear_weights(x: &[f64], kernel: &KernelSpec, x0: f64) -> Option<Vec<f64>> {
    let mut s0 = 0.0;
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for &xi in x {
        let u = xi - x0;
        let w = kernel.eval(u);
        s0 += w;
        s1 += w * u;
        s2 += w * u * u;
    }
    let d = s0 * s2 - s1 * s1;
    let scale = s0 * kernel.bandwidth * kernel.bandwidth;
    if d <= 1e-12 * scale * scale || s0 <= 0.0 {
        return None;
    }
    Some(
        x.iter()
            .map(|&xi| {
                let u = xi - x0;
                kernel.eval(u) * (s2 - u * s1) / d
            })
            .collect(),
    )
}

fn check_design(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::InvalidInput(format!(
            "regressor and response lengths differ: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.len() < 2 {
        return Err(Error::InvalidInput(
            "regression needs at least 2 observations".into(),
        ));
    }
    Ok(())
}

/// What the cross-validation criterion scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvMode {
    /// Leave-one-out squared prediction error of the local-linear fit.
    Regression,
    /// Least-squares cross-validation for kernel density estimation.
    Density,
    /// Conditional-density criterion for the y-bandwidth of the
    /// double-kernel estimator (x-bandwidth fixed by a reference rule).
    ConditionalDensity,
}

/// Select a bandwidth from `candidates` by cross-validation.
///
/// `y` is ignored in density mode. Ties (criteria within a relative 1e-9 of
/// the minimum) break toward the larger bandwidth.
pub fn select_bandwidth_cv(
    x: &[f64],
    y: &[f64],
    shape: KernelShape,
    candidates: &[f64],
    mode: CvMode,
) -> Result<f64> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("empty bandwidth candidate set".into()));
    }
    if x.len() < 20 {
        return Err(Error::InvalidInput(format!(
            "cross-validation needs at least 20 observations, got {}",
            x.len()
        )));
    }
    let mut hs: Vec<f64> = candidates.to_vec();
    hs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let scores = exec::map_slice(&hs, |&h| match KernelSpec::new(shape, h) {
        Ok(kernel) => match mode {
            CvMode::Regression => cv_regression(x, y, &kernel),
            CvMode::Density => cv_density(x, &kernel),
            CvMode::ConditionalDensity => cv_conditional(x, y, &kernel),
        },
        Err(e) => Err(e),
    });

    let mut best: Option<(f64, f64)> = None;
    let mut diagnostics = Vec::new();
    for (h, s) in hs.iter().zip(&scores) {
        match s {
            Ok(crit) if crit.is_finite() => {
                // `<=` keeps the largest bandwidth among near-ties.
                let tol = 1e-9 * (1.0 + crit.abs());
                if best.map_or(true, |(_, c)| *crit <= c + tol) {
                    best = Some((*h, best.map_or(*crit, |(_, c)| crit.min(c))));
                }
            }
            Ok(crit) => diagnostics.push(format!("h={h}: non-finite criterion {crit}")),
            Err(e) => diagnostics.push(format!("h={h}: {e}")),
        }
    }
    match best {
        Some((h, _)) => Ok(h),
        None => Err(Error::Numerical(format!(
            "all bandwidth candidates degenerate: {}",
            diagnostics.join("; ")
        ))),
    }
}

fn cv_regression(x: &[f64], y: &[f64], kernel: &KernelSpec) -> Result<f64> {
    let design = SortedDesign::new(x, y);
    let h = kernel.bandwidth;
    let mut acc = 0.0;
    let mut used = 0usize;
    for i in 0..x.len() {
        let m = LocalMoments::collect(&design, kernel, x[i]);
        let fit = ll_point(&m, h);
        if fit.est.flags.contains(PointFlags::DEGENERATE) {
            continue;
        }
        let (d, _) = m.ll_denominator(h);
        let w_ii = kernel.eval(0.0) * m.s2 / d;
        if w_ii >= 1.0 - 1e-10 {
            continue;
        }
        let loo = (fit.est.value - w_ii * y[i]) / (1.0 - w_ii);
        acc += (y[i] - loo) * (y[i] - loo);
        used += 1;
    }
    if used < x.len() / 2 {
        return Err(Error::Numerical(format!(
            "leave-one-out fit degenerate at {} of {} points",
            x.len() - used,
            x.len()
        )));
    }
    Ok(acc / used as f64)
}

fn cv_density(x: &[f64], kernel: &KernelSpec) -> Result<f64> {
    let n = x.len() as f64;
    let design = SortedDesign::new(x, x);
    // int fhat^2 over a grid padded by the kernel support.
    let pad = match kernel.shape.support().1 {
        Some(_) => kernel.bandwidth,
        None => 5.0 * kernel.bandwidth,
    };
    let lo = design.x[0] - pad;
    let hi = design.x[design.x.len() - 1] + pad;
    let grid = linspace(lo, hi, 512);
    let fhat = kernel_density(x, kernel, &grid)?;
    let sq: Vec<f64> = fhat.value.iter().map(|f| f * f).collect();
    let int_f2 = trapezoid(&grid, &sq);
    // Leave-one-out density at the observations.
    let k0 = kernel.eval(0.0);
    let mut sum_loo = 0.0;
    for &xi in x {
        let m = LocalMoments::collect(&design, kernel, xi);
        sum_loo += (m.s0 - k0) / (n - 1.0);
    }
    Ok(int_f2 - 2.0 * sum_loo / n)
}

/// Conditional-density CV: x are the conditioning values, y the responses.
/// Scores the candidate as the y-bandwidth of a double-kernel estimate whose
/// x-bandwidth follows a reference rule, via the integrated-squared-error
/// criterion int phat(.|x)^2 dy - 2 phat(y_i|x_i) on held-out points.
fn cv_conditional(x: &[f64], y: &[f64], kernel: &KernelSpec) -> Result<f64> {
    check_design(x, y)?;
    let n = x.len();
    let h1 = 1.2 * silverman_bandwidth(x).max(1e-12);
    let x_kernel = KernelSpec::new(KernelShape::Epanechnikov, h1)?;
    let h2 = kernel.bandwidth;
    let design = SortedDesign::new(x, y);
    // Subsample evaluation points deterministically to bound the cost.
    let stride = (n / 400).max(1);
    let mut acc = 0.0;
    let mut used = 0usize;
    let mut idx = 0usize;
    while idx < n {
        let (x0, y0) = (x[idx], y[idx]);
        let m = LocalMoments::collect(&design, &x_kernel, x0);
        let (d, degen) = m.ll_denominator(h1);
        if degen {
            idx += stride;
            continue;
        }
        let (lo, hi) = design.window(&x_kernel, x0);
        // Local-linear weights over the window, with the evaluation point's
        // own pair removed (leave-one-out in both smoothing directions).
        let mut w = Vec::with_capacity(hi - lo);
        let mut resp = Vec::with_capacity(hi - lo);
        for j in lo..hi {
            let u = design.x[j] - x0;
            let kw = x_kernel.eval(u);
            if kw <= 0.0 {
                continue;
            }
            if (design.x[j] - x0).abs() < 1e-300 && (design.y[j] - y0).abs() < 1e-300 {
                continue; // drop the point itself
            }
            w.push(kw * (m.s2 - u * m.s1) / d);
            resp.push(design.y[j]);
        }
        let wsum: f64 = w.iter().sum();
        if wsum.abs() < 1e-12 {
            idx += stride;
            continue;
        }
        for v in &mut w {
            *v /= wsum;
        }
        // int phat^2 dy = sum_jk w_j w_k (W*W)_{h2}(y_j - y_k); Gaussian W
        // convolves to a Gaussian with bandwidth h2 sqrt(2).
        let mut int_p2 = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            for (k, &wk) in w.iter().enumerate() {
                let diff = resp[j] - resp[k];
                int_p2 += wj * wk * norm_pdf(diff / (h2 * std::f64::consts::SQRT_2))
                    / (h2 * std::f64::consts::SQRT_2);
            }
        }
        let mut p_at = 0.0;
        for (j, &wj) in w.iter().enumerate() {
            p_at += wj * norm_pdf((resp[j] - y0) / h2) / h2;
        }
        acc += int_p2 - 2.0 * p_at;
        used += 1;
        idx += stride;
    }
    if used == 0 {
        return Err(Error::Numerical("conditional CV: no usable points".into()));
    }
    Ok(acc / used as f64)
}

/// Default evaluation grid: `n` equispaced points between the 1st and 99th
/// percentiles of the data, clear of the sparse boundary regions.
pub fn default_grid(data: &[f64], n: usize) -> Vec<f64> {
    let mut sorted = data.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let lo = quantile_sorted(&sorted, 0.01);
    let hi = quantile_sorted(&sorted, 0.99);
    if hi > lo {
        linspace(lo, hi, n.max(2))
    } else {
        vec![lo; 1]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::numerics::silverman_bandwidth;
    use crate::simulate::{simulate_exact, Scheme, SimPlan, Start};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_distr::Distribution;

    fn epan(h: f64) -> KernelSpec {
        KernelSpec::new(KernelShape::Epanechnikov, h).unwrap()
    }

    fn normal_draw<R: Rng>(rng: &mut R) -> f64 {
        rand_distr::StandardNormal.sample(rng)
    }

    #[test]
    fn kernels_integrate_to_one() {
        // Integration ranges chosen so the initial quadrature nodes hit the
        // support of the compact kernels.
        for (shape, lo, hi) in [
            (KernelShape::Epanechnikov, -1.3, 1.1),
            (KernelShape::Gaussian, -10.0, 10.0),
            (KernelShape::OneSidedEpanechnikov, -1.3, 1.1),
        ] {
            let total =
                crate::numerics::quad::adaptive_simpson(&|u| shape.eval(u), lo, hi, 1e-10).unwrap();
            assert_abs_diff_eq!(total, 1.0, epsilon = 1e-8);
            let r = crate::numerics::quad::adaptive_simpson(
                &|u| shape.eval(u) * shape.eval(u),
                lo,
                hi,
                1e-10,
            )
            .unwrap();
            assert_abs_diff_eq!(r, shape.roughness(), epsilon = 1e-8);
        }
    }

    #[test]
    fn one_sided_kernel_only_looks_back() {
        let k = KernelShape::OneSidedEpanechnikov;
        assert_eq!(k.eval(0.5), 0.0);
        assert!(k.eval(-0.5) > 0.0);
        assert_eq!(k.eval(-1.5), 0.0);
    }

    #[test]
    fn kde_mode_at_replicated_atom() {
        let data = vec![0.7; 50];
        let kernel = epan(0.1);
        let grid = linspace(0.3, 1.1, 81);
        let est = kernel_density(&data, &kernel, &grid).unwrap();
        let argmax = (0..grid.len()).max_by(|&i, &j| est.value[i].partial_cmp(&est.value[j]).unwrap());
        assert_abs_diff_eq!(grid[argmax.unwrap()], 0.7, epsilon = 1e-9);
    }

    #[test]
    fn kde_integrates_to_one() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let data: Vec<f64> = (0..2000).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        let kernel = epan(0.15);
        let grid = linspace(-1.5, 1.5, 601);
        let est = kernel_density(&data, &kernel, &grid).unwrap();
        let total = trapezoid(&grid, &est.value);
        assert!((total - 1.0).abs() < 0.01, "mass {total}");
    }

    #[test]
    fn kde_gaussian_strictly_positive_on_grid() {
        // On the default percentile-bounded grid (and well beyond), the
        // Gaussian kernel leaves no exact zeros.
        let data = vec![0.0, 0.1, 0.2, 0.05, 0.12, 0.03];
        let kernel = KernelSpec::new(KernelShape::Gaussian, 0.05).unwrap();
        let mut grid = default_grid(&data, 50);
        grid.extend_from_slice(&linspace(-0.5, 0.7, 25));
        let est = kernel_density(&data, &kernel, &grid).unwrap();
        assert!(est.value.iter().all(|&v| v > 0.0));
    }

    #[test]
    fn kde_recovers_stationary_ou_density() {
        // 1e5 stationary points; L1 distance to the closed-form normal < 0.05.
        let model = ModelSpec::vasicek(0.5, 0.06, 0.02).unwrap();
        let plan = SimPlan::new(
            model.clone(),
            Start::Stationary,
            1.0 / 52.0,
            100_000,
            1,
            17,
            Scheme::Exact,
        )
        .unwrap();
        let path = simulate_exact(&plan).unwrap();
        let h = silverman_bandwidth(path.values());
        let kernel = KernelSpec::new(KernelShape::Gaussian, h).unwrap();
        let sd = (4e-4f64).sqrt();
        let grid = linspace(0.06 - 5.0 * sd, 0.06 + 5.0 * sd, 501);
        let est = kernel_density(path.values(), &kernel, &grid).unwrap();
        let abs_err: Vec<f64> = grid
            .iter()
            .zip(&est.value)
            .map(|(&x, &f)| (f - crate::model::invariant_density(&model, x).unwrap()).abs())
            .collect();
        let l1 = trapezoid(&grid, &abs_err);
        assert!(l1 < 0.05, "L1 distance {l1}");
    }

    #[test]
    fn nw_constant_response_is_constant() {
        let x = linspace(0.0, 1.0, 200);
        let y = vec![3.25; 200];
        let est = nadaraya_watson(&x, &y, &epan(0.1), &linspace(0.1, 0.9, 9)).unwrap();
        for i in 0..est.len() {
            assert!(est.mass[i] > 0.0);
            assert_abs_diff_eq!(est.value[i], 3.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn nw_matches_direct_weighted_average() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..300).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x.iter().map(|&v| v).collect();
        let kernel = epan(0.2);
        let grid = [0.4, 0.5, 0.6];
        let est = nadaraya_watson(&x, &y, &kernel, &grid).unwrap();
        for (g, (&x0, got)) in grid.iter().zip(est.value.iter()).enumerate() {
            let mut num = 0.0;
            let mut den = 0.0;
            for (xi, yi) in x.iter().zip(&y) {
                let w = kernel.eval(xi - x0);
                num += w * yi;
                den += w;
            }
            assert_abs_diff_eq!(*got, num / den, epsilon = 1e-12);
            let _ = g;
        }
    }

    #[test]
    fn nw_linear_regression_function() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 2.0 * v + 0.01 * normal_draw(&mut rng))
            .collect();
        let grid = linspace(0.15, 0.85, 29);
        let est = nadaraya_watson(&x, &y, &epan(0.05), &grid).unwrap();
        let max_err = grid
            .iter()
            .zip(&est.value)
            .map(|(&g, &v)| (v - 2.0 * g).abs())
            .fold(0.0f64, f64::max);
        assert!(max_err < 0.02, "max abs error {max_err}");
    }

    #[test]
    fn nw_zero_mass_flagged_not_fatal() {
        let x = vec![0.0, 0.01, 0.02, 0.03];
        let y = vec![1.0, 1.0, 1.0, 1.0];
        let est = nadaraya_watson(&x, &y, &epan(0.05), &[5.0]).unwrap();
        assert_eq!(est.mass[0], 0.0);
        assert!(est.flags[0].contains(PointFlags::LOW_MASS));
        assert!(est.value[0].is_nan());
    }

    #[test]
    fn local_linear_reproduces_affine_exactly() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let x: Vec<f64> = (0..500).map(|_| rng.random::<f64>() * 3.0).collect();
        let y: Vec<f64> = x.iter().map(|&v| -1.5 + 0.8 * v).collect();
        let grid = linspace(0.3, 2.7, 41);
        let est = local_linear(&x, &y, &epan(0.25), &grid).unwrap();
        for (g, v) in grid.iter().zip(&est.value) {
            assert_abs_diff_eq!(*v, -1.5 + 0.8 * g, epsilon = 1e-10);
        }
    }

    #[test]
    fn equivalent_kernel_weight_identities() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(33);
        for _ in 0..10 {
            let x: Vec<f64> = (0..200).map(|_| rng.random::<f64>()).collect();
            let kernel = epan(0.15);
            let x0 = 0.2 + 0.6 * rng.random::<f64>();
            let w = local_linear_weights(&x, &kernel, x0).unwrap();
            let sum: f64 = w.iter().sum();
            let first: f64 = w.iter().zip(&x).map(|(wi, xi)| wi * (xi - x0)).sum();
            assert!((sum - 1.0).abs() < 1e-10, "sum {sum}");
            assert!(first.abs() < 1e-10 * 0.15, "first moment {first}");
        }
    }

    #[test]
    fn local_linear_boundary_bias_is_second_order() {
        // For y = x^2 on a uniform design, the edge bias at the left boundary
        // shrinks ~4x when the bandwidth halves.
        let x = linspace(0.0, 1.0, 4001);
        let y: Vec<f64> = x.iter().map(|&v| v * v).collect();
        let err_at = |h: f64| {
            let est = local_linear(&x, &y, &epan(h), &[0.0]).unwrap();
            (est.value[0] - 0.0).abs()
        };
        let e1 = err_at(0.2);
        let e2 = err_at(0.1);
        let ratio = e1 / e2;
        assert!(
            (2.8..5.5).contains(&ratio),
            "bias ratio {ratio} (e1 {e1}, e2 {e2})"
        );
    }

    #[test]
    fn cv_regression_flat_criterion_takes_largest_bandwidth() {
        let x = linspace(0.0, 1.0, 120);
        let y: Vec<f64> = x.iter().map(|&v| 2.0 + 3.0 * v).collect();
        let h = select_bandwidth_cv(
            &x,
            &y,
            KernelShape::Epanechnikov,
            &[0.05, 0.1, 0.2, 0.4],
            CvMode::Regression,
        )
        .unwrap();
        assert_eq!(h, 0.4);
    }

    #[test]
    fn cv_regression_picks_interior_bandwidth_for_wavy_signal() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let n = 2000;
        let x: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| {
                (10.0 * v).sin()
                    + 0.2 * normal_draw(&mut rng)
            })
            .collect();
        let candidates = [0.01, 0.02, 0.05, 0.1, 0.2, 0.5];
        let h = select_bandwidth_cv(&x, &y, KernelShape::Epanechnikov, &candidates, CvMode::Regression)
            .unwrap();
        assert!(h > 0.01 && h < 0.5, "selected {h}");
        // Oracle: squared error against the true curve on a validation split
        // should also prefer an interior bandwidth.
        let grid = linspace(0.1, 0.9, 33);
        let mut best = (f64::INFINITY, 0.0);
        for &hc in &candidates {
            let est = local_linear(&x, &y, &epan(hc), &grid).unwrap();
            let err: f64 = grid
                .iter()
                .zip(&est.value)
                .map(|(&g, &v)| (v - (10.0 * g).sin()).powi(2))
                .sum();
            if err < best.0 {
                best = (err, hc);
            }
        }
        assert!(best.1 > 0.01 && best.1 < 0.5, "oracle chose {}", best.1);
    }

    #[test]
    fn cv_density_agrees_with_silverman_scale() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let data: Vec<f64> = (0..10_000)
            .map(|_| normal_draw(&mut rng))
            .collect();
        let h_ref = silverman_bandwidth(&data);
        let candidates: Vec<f64> = (-4..=4).map(|k| h_ref * (2.0f64).powf(k as f64 / 2.0)).collect();
        let h = select_bandwidth_cv(&data, &[], KernelShape::Gaussian, &candidates, CvMode::Density)
            .unwrap();
        assert!(
            h >= h_ref / 2.0 && h <= h_ref * 2.0,
            "selected {h} vs reference {h_ref}"
        );
    }

    #[test]
    fn cv_needs_enough_data_and_candidates() {
        let x = vec![0.0, 1.0];
        assert!(select_bandwidth_cv(&x, &x, KernelShape::Gaussian, &[0.1], CvMode::Density).is_err());
        let x = linspace(0.0, 1.0, 50);
        assert!(select_bandwidth_cv(&x, &x, KernelShape::Gaussian, &[], CvMode::Density).is_err());
    }

    #[test]
    fn default_grid_covers_inner_percentiles() {
        let data = linspace(0.0, 1.0, 1001);
        let grid = default_grid(&data, 100);
        assert_eq!(grid.len(), 100);
        assert_abs_diff_eq!(grid[0], 0.01, epsilon = 1e-9);
        assert_abs_diff_eq!(grid[99], 0.99, epsilon = 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn local_linear_affine_equivariance(
            a in -3.0f64..3.0,
            b in -2.0f64..2.0,
            seed in 0u64..1000,
        ) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|&v| (4.0 * v).sin() + 0.1 * rng.random::<f64>()).collect();
            let y2: Vec<f64> = y.iter().map(|&v| a + b * v).collect();
            let grid = linspace(0.2, 0.8, 13);
            let kernel = epan(0.2);
            let e1 = local_linear(&x, &y, &kernel, &grid).unwrap();
            let e2 = local_linear(&x, &y2, &kernel, &grid).unwrap();
            for i in 0..grid.len() {
                if e1.is_reliable(i) && e2.is_reliable(i) {
                    prop_assert!((e2.value[i] - (a + b * e1.value[i])).abs() < 1e-9 * (1.0 + e1.value[i].abs()));
                }
            }
        }

        #[test]
        fn shift_equivariance(c in -2.0f64..2.0, seed in 0u64..1000) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..150).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|&v| v * v + 0.05 * rng.random::<f64>()).collect();
            let xs: Vec<f64> = x.iter().map(|&v| v + c).collect();
            let grid = linspace(0.25, 0.75, 11);
            let grid_s: Vec<f64> = grid.iter().map(|&v| v + c).collect();
            let kernel = epan(0.2);
            let e1 = nadaraya_watson(&x, &y, &kernel, &grid).unwrap();
            let e2 = nadaraya_watson(&xs, &y, &kernel, &grid_s).unwrap();
            for i in 0..grid.len() {
                prop_assert!((e1.value[i] - e2.value[i]).abs() < 1e-12 * (1.0 + e1.value[i].abs()) + 1e-12);
            }
        }

        #[test]
        fn stderr_finite_wherever_mass_above_floor(seed in 0u64..500) {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let x: Vec<f64> = (0..120).map(|_| rng.random::<f64>()).collect();
            let y: Vec<f64> = x.iter().map(|&v| v + 0.3 * rng.random::<f64>()).collect();
            let grid = linspace(-0.5, 1.5, 41);
            for est in [
                kernel_density(&x, &epan(0.15), &grid).unwrap(),
                nadaraya_watson(&x, &y, &epan(0.15), &grid).unwrap(),
                local_linear(&x, &y, &epan(0.15), &grid).unwrap(),
            ] {
                for i in 0..est.len() {
                    if est.mass[i] >= MASS_FLOOR {
                        prop_assert!(est.stderr[i].is_finite());
                    }
                }
            }
        }
    }
}

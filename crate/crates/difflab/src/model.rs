//! Diffusion model catalogue.
//!
//! Covers the classic one-factor families — geometric Brownian motion,
//! Vasicek (Ornstein–Uhlenbeck), CIR, CKLS — plus user-supplied coefficient
//! pairs and the time-varying / semiparametric CKLS extensions. Where a
//! family admits a closed-form invariant or transition density it is
//! provided here; everything else falls back to quadrature or simulation in
//! the modules downstream.

use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::numerics::normal::{inv_norm_cdf, norm_cdf, norm_pdf};
use crate::numerics::quad::{cumulative_trapezoid, linspace, trapezoid};
use crate::numerics::special::{noncentral_chi2_cdf, noncentral_chi2_logpdf};

/// A real function of one variable, used for generic coefficients and
/// time-varying coefficient curves.
pub type Coefficient = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Parametric family tag for estimation routines and the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gbm,
    Vasicek,
    Cir,
    Ckls,
}

impl Family {
    /// Number of free parameters.
    pub fn dim(self) -> usize {
        match self {
            Family::Gbm => 2,
            Family::Vasicek | Family::Cir => 3,
            Family::Ckls => 4,
        }
    }

    /// Parameter names in canonical order.
    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            Family::Gbm => &["mu", "sigma"],
            Family::Vasicek | Family::Cir => &["kappa", "alpha", "sigma"],
            Family::Ckls => &["kappa", "alpha", "sigma", "gamma"],
        }
    }

    /// Build a [`ModelSpec`] from a parameter vector in canonical order.
    pub fn model_from_params(self, p: &[f64]) -> Result<ModelSpec> {
        if p.len() != self.dim() {
            return Err(Error::InvalidInput(format!(
                "{self:?} expects {} parameters, got {}",
                self.dim(),
                p.len()
            )));
        }
        match self {
            Family::Gbm => ModelSpec::gbm(p[0], p[1]),
            Family::Vasicek => ModelSpec::vasicek(p[0], p[1], p[2]),
            Family::Cir => ModelSpec::cir(p[0], p[1], p[2]),
            Family::Ckls => ModelSpec::ckls(p[0], p[1], p[2], p[3]),
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Gbm => "gbm",
            Family::Vasicek => "vasicek",
            Family::Cir => "cir",
            Family::Ckls => "ckls",
        };
        f.write_str(s)
    }
}

/// A one-dimensional diffusion model dX_t = mu(t, X_t) dt + sigma(t, X_t) dW_t.
#[derive(Clone)]
pub enum ModelSpec {
    /// dX = mu X dt + sigma X dW on x > 0.
    Gbm { mu: f64, sigma: f64 },
    /// dX = kappa (alpha - X) dt + sigma dW.
    Vasicek { kappa: f64, alpha: f64, sigma: f64 },
    /// dX = kappa (alpha - X) dt + sigma sqrt(X) dW on x > 0.
    Cir { kappa: f64, alpha: f64, sigma: f64 },
    /// dX = kappa (alpha - X) dt + sigma X^gamma dW on x > 0.
    Ckls {
        kappa: f64,
        alpha: f64,
        sigma: f64,
        gamma: f64,
    },
    /// User-supplied time-homogeneous coefficients.
    Generic {
        drift: Coefficient,
        diffusion: Coefficient,
        /// Optional analytic d sigma / dx; central differences otherwise.
        diffusion_dx: Option<Coefficient>,
    },
    /// dX = (a0(t) + a1(t) X) dt + b0(t) X^{b1(t)} dW on x > 0.
    TimeVaryingCkls {
        alpha0: Coefficient,
        alpha1: Coefficient,
        beta0: Coefficient,
        beta1: Coefficient,
    },
    /// dX = (a0(t) + alpha1 X) dt + b0(t) X^beta dW on x > 0: scalar slope
    /// and exponent avoid the collinearity of fully time-varying fits.
    SemiparametricCkls {
        alpha0: Coefficient,
        alpha1: f64,
        beta0: Coefficient,
        beta: f64,
    },
}

impl fmt::Debug for ModelSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelSpec::Gbm { mu, sigma } => write!(f, "Gbm(mu={mu}, sigma={sigma})"),
            ModelSpec::Vasicek { kappa, alpha, sigma } => {
                write!(f, "Vasicek(kappa={kappa}, alpha={alpha}, sigma={sigma})")
            }
            ModelSpec::Cir { kappa, alpha, sigma } => {
                write!(f, "Cir(kappa={kappa}, alpha={alpha}, sigma={sigma})")
            }
            ModelSpec::Ckls {
                kappa,
                alpha,
                sigma,
                gamma,
            } => write!(
                f,
                "Ckls(kappa={kappa}, alpha={alpha}, sigma={sigma}, gamma={gamma})"
            ),
            ModelSpec::Generic { .. } => write!(f, "Generic(..)"),
            ModelSpec::TimeVaryingCkls { .. } => write!(f, "TimeVaryingCkls(..)"),
            ModelSpec::SemiparametricCkls { alpha1, beta, .. } => {
                write!(f, "SemiparametricCkls(alpha1={alpha1}, beta={beta}, ..)")
            }
        }
    }
}

fn require_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        return Err(Error::InvalidInput(format!("{name} must be positive, got {v}")));
    }
    Ok(())
}

impl ModelSpec {
    pub fn gbm(mu: f64, sigma: f64) -> Result<Self> {
        require_positive("sigma", sigma)?;
        if !mu.is_finite() {
            return Err(Error::InvalidInput(format!("mu must be finite, got {mu}")));
        }
        Ok(ModelSpec::Gbm { mu, sigma })
    }

    pub fn vasicek(kappa: f64, alpha: f64, sigma: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_positive("sigma", sigma)?;
        Ok(ModelSpec::Vasicek { kappa, alpha, sigma })
    }

    pub fn cir(kappa: f64, alpha: f64, sigma: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_positive("alpha", alpha)?;
        require_positive("sigma", sigma)?;
        Ok(ModelSpec::Cir { kappa, alpha, sigma })
    }

    pub fn ckls(kappa: f64, alpha: f64, sigma: f64, gamma: f64) -> Result<Self> {
        require_positive("kappa", kappa)?;
        require_positive("sigma", sigma)?;
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::InvalidInput(format!("gamma must be >= 0, got {gamma}")));
        }
        Ok(ModelSpec::Ckls {
            kappa,
            alpha,
            sigma,
            gamma,
        })
    }

    pub fn generic<D, S>(drift: D, diffusion: S) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ModelSpec::Generic {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            diffusion_dx: None,
        }
    }

    pub fn generic_with_derivative<D, S, P>(drift: D, diffusion: S, diffusion_dx: P) -> Self
    where
        D: Fn(f64) -> f64 + Send + Sync + 'static,
        S: Fn(f64) -> f64 + Send + Sync + 'static,
        P: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        ModelSpec::Generic {
            drift: Arc::new(drift),
            diffusion: Arc::new(diffusion),
            diffusion_dx: Some(Arc::new(diffusion_dx)),
        }
    }

    pub fn time_varying_ckls(
        alpha0: Coefficient,
        alpha1: Coefficient,
        beta0: Coefficient,
        beta1: Coefficient,
    ) -> Self {
        ModelSpec::TimeVaryingCkls {
            alpha0,
            alpha1,
            beta0,
            beta1,
        }
    }

    pub fn semiparametric_ckls(alpha0: Coefficient, alpha1: f64, beta0: Coefficient, beta: f64) -> Self {
        ModelSpec::SemiparametricCkls {
            alpha0,
            alpha1,
            beta0,
            beta,
        }
    }

    /// Parametric family tag, when this model is one of the named families.
    pub fn family(&self) -> Option<Family> {
        match self {
            ModelSpec::Gbm { .. } => Some(Family::Gbm),
            ModelSpec::Vasicek { .. } => Some(Family::Vasicek),
            ModelSpec::Cir { .. } => Some(Family::Cir),
            ModelSpec::Ckls { .. } => Some(Family::Ckls),
            _ => None,
        }
    }

    /// Feller index q = 2 kappa alpha / sigma^2 - 1 for the CIR family;
    /// q >= 0 keeps the process strictly positive.
    pub fn feller_index(&self) -> Option<f64> {
        match self {
            ModelSpec::Cir { kappa, alpha, sigma } => {
                Some(2.0 * kappa * alpha / (sigma * sigma) - 1.0)
            }
            _ => None,
        }
    }

    /// For CIR: whether the Feller condition q >= 0 holds.
    pub fn is_feller(&self) -> Option<bool> {
        self.feller_index().map(|q| q >= 0.0)
    }

    /// Whether the model's state domain is the positive half-line.
    pub fn positive_domain(&self) -> bool {
        !matches!(self, ModelSpec::Vasicek { .. } | ModelSpec::Generic { .. })
    }

    /// Whether the model is stationary (mean-reverting with kappa > 0, or
    /// a generic model, whose stationarity is the caller's responsibility).
    pub fn is_stationary(&self) -> bool {
        match self {
            ModelSpec::Gbm { .. } => false,
            ModelSpec::Vasicek { .. } | ModelSpec::Cir { .. } | ModelSpec::Ckls { .. } => true,
            ModelSpec::Generic { .. } => true,
            ModelSpec::TimeVaryingCkls { .. } | ModelSpec::SemiparametricCkls { .. } => false,
        }
    }

    /// Stationary mean and variance where available in closed form.
    pub fn stationary_moments(&self) -> Option<(f64, f64)> {
        match self {
            ModelSpec::Vasicek { kappa, alpha, sigma } => {
                Some((*alpha, sigma * sigma / (2.0 * kappa)))
            }
            ModelSpec::Cir { kappa, alpha, sigma } => {
                let scale = sigma * sigma / (2.0 * kappa);
                let shape = 2.0 * kappa * alpha / (sigma * sigma); // q + 1
                Some((shape * scale, shape * scale * scale))
            }
            _ => None,
        }
    }

    /// d sigma / dx at (t, x), analytic for the named families.
    pub fn diffusion_dx(&self, t: f64, x: f64) -> Result<f64> {
        match self {
            ModelSpec::Gbm { sigma, .. } => Ok(*sigma),
            ModelSpec::Vasicek { .. } => Ok(0.0),
            ModelSpec::Cir { sigma, .. } => {
                domain_positive(x, "CIR")?;
                Ok(0.5 * sigma / x.sqrt())
            }
            ModelSpec::Ckls { sigma, gamma, .. } => {
                domain_positive(x, "CKLS")?;
                Ok(sigma * gamma * x.powf(gamma - 1.0))
            }
            ModelSpec::Generic {
                diffusion,
                diffusion_dx,
                ..
            } => {
                if let Some(ds) = diffusion_dx {
                    Ok(ds(x))
                } else {
                    let h = 1e-6 * (1.0 + x.abs());
                    Ok((diffusion(x + h) - diffusion(x - h)) / (2.0 * h))
                }
            }
            ModelSpec::TimeVaryingCkls { beta0, beta1, .. } => {
                domain_positive(x, "time-varying CKLS")?;
                let (b0, b1) = (beta0(t), beta1(t));
                Ok(b0 * b1 * x.powf(b1 - 1.0))
            }
            ModelSpec::SemiparametricCkls { beta0, beta, .. } => {
                domain_positive(x, "semiparametric CKLS")?;
                Ok(beta0(t) * beta * x.powf(beta - 1.0))
            }
        }
    }
}

fn domain_positive(x: f64, family: &str) -> Result<()> {
    if x <= 0.0 {
        return Err(Error::DomainViolation(format!(
            "{family} coefficients require x > 0, got {x}"
        )));
    }
    Ok(())
}

/// Drift and diffusion (mu(t,x), sigma(t,x)); time-homogeneous families ignore `t`.
pub fn evaluate_coefficients(model: &ModelSpec, t: f64, x: f64) -> Result<(f64, f64)> {
    if !x.is_finite() {
        return Err(Error::DomainViolation(format!("state must be finite, got {x}")));
    }
    match model {
        ModelSpec::Gbm { mu, sigma } => {
            domain_positive(x, "GBM")?;
            Ok((mu * x, sigma * x))
        }
        ModelSpec::Vasicek { kappa, alpha, sigma } => Ok((kappa * (alpha - x), *sigma)),
        ModelSpec::Cir { kappa, alpha, sigma } => {
            domain_positive(x, "CIR")?;
            Ok((kappa * (alpha - x), sigma * x.sqrt()))
        }
        ModelSpec::Ckls {
            kappa,
            alpha,
            sigma,
            gamma,
        } => {
            domain_positive(x, "CKLS")?;
            Ok((kappa * (alpha - x), sigma * x.powf(*gamma)))
        }
        ModelSpec::Generic { drift, diffusion, .. } => {
            let s = diffusion(x);
            if s < 0.0 {
                return Err(Error::DomainViolation(format!(
                    "generic diffusion returned negative value {s} at x={x}"
                )));
            }
            Ok((drift(x), s))
        }
        ModelSpec::TimeVaryingCkls {
            alpha0,
            alpha1,
            beta0,
            beta1,
        } => {
            domain_positive(x, "time-varying CKLS")?;
            Ok((alpha0(t) + alpha1(t) * x, beta0(t) * x.powf(beta1(t))))
        }
        ModelSpec::SemiparametricCkls {
            alpha0,
            alpha1,
            beta0,
            beta,
        } => {
            domain_positive(x, "semiparametric CKLS")?;
            Ok((alpha0(t) + alpha1 * x, beta0(t) * x.powf(*beta)))
        }
    }
}

/// Closed-form invariant density where available (Vasicek, CIR).
///
/// For CKLS and generic models use [`InvariantDensity`], which normalizes
/// the stationarity formula by quadrature over a stated domain.
pub fn invariant_density(model: &ModelSpec, x: f64) -> Result<f64> {
    match model {
        ModelSpec::Gbm { .. } => Err(Error::UnsupportedModel(
            "GBM is not stationary; no invariant density".into(),
        )),
        ModelSpec::Vasicek { kappa, alpha, sigma } => {
            let var = sigma * sigma / (2.0 * kappa);
            Ok(norm_pdf((x - alpha) / var.sqrt()) / var.sqrt())
        }
        ModelSpec::Cir { kappa, alpha, sigma } => {
            if x <= 0.0 {
                return Ok(0.0);
            }
            let scale = sigma * sigma / (2.0 * kappa);
            let shape = 2.0 * kappa * alpha / (sigma * sigma); // q + 1
            let log_pdf = (shape - 1.0) * x.ln()
                - x / scale
                - statrs::function::gamma::ln_gamma(shape)
                - shape * scale.ln();
            Ok(log_pdf.exp())
        }
        _ => Err(Error::UnsupportedModel(
            "no closed-form invariant density; use InvariantDensity::new with a domain".into(),
        )),
    }
}

/// Numerically normalized invariant density for stationary models.
///
/// The unnormalized form is sigma^{-2}(x) exp(2 int mu/sigma^2); the
/// normalizing constant comes from a fine trapezoid rule on `domain`, and
/// the relative mass gained by widening the domain 20% each side is
/// reported as `truncation_error`.
pub struct InvariantDensity {
    grid: Vec<f64>,
    log_unnorm: Vec<f64>,
    log_c0: f64,
    truncation_error: f64,
}

impl InvariantDensity {
    pub fn new(model: &ModelSpec, domain: (f64, f64)) -> Result<Self> {
        if !model.is_stationary() {
            return Err(Error::UnsupportedModel(
                "invariant density requires a stationary model".into(),
            ));
        }
        let (mut lo, hi) = domain;
        if !(lo.is_finite() && hi.is_finite() && hi > lo) {
            return Err(Error::InvalidInput(format!("bad domain [{lo}, {hi}]")));
        }
        if model.positive_domain() {
            lo = lo.max(1e-10);
        }
        let (grid, log_unnorm, mass) = Self::tabulate(model, lo, hi, 4001)?;
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Numerical(format!(
                "invariant density mass not positive on [{lo}, {hi}]"
            )));
        }
        // Extend the domain 20% each side to bound the truncated tail mass.
        // One shared tabulation keeps the exponent's reference point fixed so
        // the restricted and extended masses are directly comparable.
        let width = hi - lo;
        let lo_ext = if model.positive_domain() {
            (lo - 0.2 * width).max(1e-10)
        } else {
            lo - 0.2 * width
        };
        let hi_ext = hi + 0.2 * width;
        let (grid_ext, log_ext, mass_ext) = Self::tabulate(model, lo_ext, hi_ext, 5601)?;
        let m_ref = log_ext.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let inner: Vec<(f64, f64)> = grid_ext
            .iter()
            .zip(&log_ext)
            .filter(|(&x, _)| x >= lo && x <= hi)
            .map(|(&x, &l)| (x, (l - m_ref).exp()))
            .collect();
        let xs: Vec<f64> = inner.iter().map(|p| p.0).collect();
        let ys: Vec<f64> = inner.iter().map(|p| p.1).collect();
        let mass_inner = trapezoid(&xs, &ys) * m_ref.exp();
        let truncation_error = (1.0 - mass_inner / mass_ext).max(0.0);
        Ok(InvariantDensity {
            grid,
            log_unnorm,
            log_c0: -mass.ln(),
            truncation_error,
        })
    }

    fn tabulate(model: &ModelSpec, lo: f64, hi: f64, n: usize) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let grid = linspace(lo, hi, n);
        // Integrand of the exponent: 2 mu / sigma^2.
        let mut ratio = Vec::with_capacity(n);
        for &x in &grid {
            let (mu, sig) = evaluate_coefficients(model, 0.0, x)?;
            if sig <= 0.0 {
                return Err(Error::Numerical(format!(
                    "diffusion vanishes at x={x}; invariant density undefined there"
                )));
            }
            ratio.push(2.0 * mu / (sig * sig));
        }
        let exponent = cumulative_trapezoid(&grid, &ratio);
        let mut log_unnorm = Vec::with_capacity(n);
        for (i, &x) in grid.iter().enumerate() {
            let (_, sig) = evaluate_coefficients(model, 0.0, x)?;
            log_unnorm.push(exponent[i] - 2.0 * sig.ln());
        }
        // Normalize in log space to dodge overflow before integrating.
        let m = log_unnorm.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let vals: Vec<f64> = log_unnorm.iter().map(|&l| (l - m).exp()).collect();
        let mass = trapezoid(&grid, &vals) * m.exp();
        Ok((grid, log_unnorm, mass))
    }

    /// Density at `x`; zero outside the tabulated domain.
    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = (self.grid[0], *self.grid.last().unwrap());
        if x < lo || x > hi {
            return 0.0;
        }
        let pos = (x - lo) / (hi - lo) * (self.grid.len() - 1) as f64;
        let i = (pos.floor() as usize).min(self.grid.len() - 2);
        let frac = pos - i as f64;
        let log_f = self.log_unnorm[i] * (1.0 - frac) + self.log_unnorm[i + 1] * frac;
        (log_f + self.log_c0).exp()
    }

    /// Relative mass missed by the stated domain, estimated by widening it 20%.
    pub fn truncation_error(&self) -> f64 {
        self.truncation_error
    }

    pub fn domain(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }
}

/// Transition density p_delta(y | x0) for GBM, Vasicek and CIR.
pub fn transition_density(model: &ModelSpec, delta: f64, x0: f64, y: f64) -> Result<f64> {
    transition_logpdf(model, delta, x0, y).map(|l| l.exp())
}

/// Log transition density; `-inf` outside the support.
pub fn transition_logpdf(model: &ModelSpec, delta: f64, x0: f64, y: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    match model {
        ModelSpec::Gbm { mu, sigma } => {
            domain_positive(x0, "GBM")?;
            if y <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let m = x0.ln() + (mu - 0.5 * sigma * sigma) * delta;
            let s = sigma * delta.sqrt();
            let z = (y.ln() - m) / s;
            Ok(-0.5 * z * z - (s * y * (2.0 * std::f64::consts::PI).sqrt()).ln())
        }
        ModelSpec::Vasicek { kappa, alpha, sigma } => {
            let rho = (-kappa * delta).exp();
            let mean = alpha + (x0 - alpha) * rho;
            let var = sigma * sigma * (1.0 - rho * rho) / (2.0 * kappa);
            let z = (y - mean) / var.sqrt();
            Ok(-0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI * var).ln())
        }
        ModelSpec::Cir { .. } => {
            domain_positive(x0, "CIR")?;
            if y <= 0.0 {
                return Ok(f64::NEG_INFINITY);
            }
            let CirTransition { q, c, u } = cir_transition_constants(model, delta, x0)?;
            // 2c X_{t+delta} ~ noncentral chi-square, df 2q+2, noncentrality 2u.
            Ok(noncentral_chi2_logpdf(2.0 * q + 2.0, 2.0 * u, 2.0 * c * y) + (2.0 * c).ln())
        }
        _ => Err(Error::UnsupportedModel(
            "closed-form transition density exists only for GBM, Vasicek and CIR".into(),
        )),
    }
}

/// Transition distribution function P_delta(y | x0) for the same families.
pub fn transition_cdf(model: &ModelSpec, delta: f64, x0: f64, y: f64) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
    }
    match model {
        ModelSpec::Gbm { mu, sigma } => {
            domain_positive(x0, "GBM")?;
            if y <= 0.0 {
                return Ok(0.0);
            }
            let m = x0.ln() + (mu - 0.5 * sigma * sigma) * delta;
            let s = sigma * delta.sqrt();
            Ok(norm_cdf((y.ln() - m) / s))
        }
        ModelSpec::Vasicek { kappa, alpha, sigma } => {
            let rho = (-kappa * delta).exp();
            let mean = alpha + (x0 - alpha) * rho;
            let var = sigma * sigma * (1.0 - rho * rho) / (2.0 * kappa);
            Ok(norm_cdf((y - mean) / var.sqrt()))
        }
        ModelSpec::Cir { .. } => {
            domain_positive(x0, "CIR")?;
            if y <= 0.0 {
                return Ok(0.0);
            }
            let CirTransition { q, c, u } = cir_transition_constants(model, delta, x0)?;
            Ok(noncentral_chi2_cdf(2.0 * q + 2.0, 2.0 * u, 2.0 * c * y))
        }
        _ => Err(Error::UnsupportedModel(
            "closed-form transition distribution exists only for GBM, Vasicek and CIR".into(),
        )),
    }
}

/// CIR transition quantile by bisection on the distribution function.
pub fn transition_quantile(model: &ModelSpec, delta: f64, x0: f64, p: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p must be in (0,1), got {p}")));
    }
    match model {
        ModelSpec::Vasicek { kappa, alpha, sigma } => {
            let rho = (-kappa * delta).exp();
            let mean = alpha + (x0 - alpha) * rho;
            let var = sigma * sigma * (1.0 - rho * rho) / (2.0 * kappa);
            Ok(mean + var.sqrt() * inv_norm_cdf(p))
        }
        ModelSpec::Gbm { mu, sigma } => {
            domain_positive(x0, "GBM")?;
            let m = x0.ln() + (mu - 0.5 * sigma * sigma) * delta;
            let s = sigma * delta.sqrt();
            Ok((m + s * inv_norm_cdf(p)).exp())
        }
        ModelSpec::Cir { .. } => {
            let (mean, var) = cir_conditional_moments(model, delta, x0)?;
            let mut lo = 0.0;
            let mut hi = mean + 12.0 * var.sqrt();
            while transition_cdf(model, delta, x0, hi)? < p {
                hi *= 2.0;
            }
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if transition_cdf(model, delta, x0, mid)? < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
                if hi - lo < 1e-12 * (1.0 + hi) {
                    break;
                }
            }
            Ok(0.5 * (lo + hi))
        }
        _ => Err(Error::UnsupportedModel(
            "transition quantile exists only for GBM, Vasicek and CIR".into(),
        )),
    }
}

pub(crate) struct CirTransition {
    pub q: f64,
    pub c: f64,
    pub u: f64,
}

pub(crate) fn cir_transition_constants(
    model: &ModelSpec,
    delta: f64,
    x0: f64,
) -> Result<CirTransition> {
    let ModelSpec::Cir { kappa, alpha, sigma } = model else {
        return Err(Error::UnsupportedModel("not a CIR model".into()));
    };
    let q = 2.0 * kappa * alpha / (sigma * sigma) - 1.0;
    let decay = (-kappa * delta).exp();
    let c = 2.0 * kappa / (sigma * sigma * (1.0 - decay));
    let u = c * x0 * decay;
    Ok(CirTransition { q, c, u })
}

/// Conditional mean and variance of the CIR transition.
pub fn cir_conditional_moments(model: &ModelSpec, delta: f64, x0: f64) -> Result<(f64, f64)> {
    let ModelSpec::Cir { kappa, alpha, sigma } = model else {
        return Err(Error::UnsupportedModel("not a CIR model".into()));
    };
    let e = (-kappa * delta).exp();
    let mean = alpha + (x0 - alpha) * e;
    let var = x0 * sigma * sigma / kappa * (e - e * e)
        + alpha * sigma * sigma / (2.0 * kappa) * (1.0 - e) * (1.0 - e);
    Ok((mean, var))
}

//! Special functions for the square-root-diffusion transition law.
//!
//! The transition density of a square-root process is a scaled noncentral
//! chi-square. Both the density and the distribution function are computed
//! through the Poisson mixture of central chi-squares, summed in log space
//! around the dominant mixture index so that no intermediate quantity can
//! overflow. For large Bessel arguments the density switches to the
//! large-argument asymptotic expansion of log I_nu, which is much cheaper.

use statrs::function::gamma::{checked_gamma_lr, ln_gamma};

/// log I_nu(x) for x > 0, nu > -1.
pub fn log_bessel_i(nu: f64, x: f64) -> f64 {
    debug_assert!(x > 0.0 && nu > -1.0);
    if x >= 100.0 && x >= 6.0 * nu * nu {
        return log_bessel_i_asymptotic(nu, x);
    }
    // Ascending series sum_m (x/2)^{2m+nu} / (m! Gamma(m+nu+1)), in log space.
    let lh = (0.5 * x).ln();
    let mut terms: Vec<f64> = Vec::with_capacity(64);
    let mut m = 0.0f64;
    loop {
        let lt = (2.0 * m + nu) * lh - ln_gamma(m + 1.0) - ln_gamma(m + nu + 1.0);
        terms.push(lt);
        // Terms grow until m ~ x/2, then decay factorially.
        if m > 0.5 * x + 8.0 && lt < terms.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - 45.0
        {
            break;
        }
        m += 1.0;
        if m > 10_000.0 {
            break;
        }
    }
    log_sum_exp(&terms)
}

fn log_bessel_i_asymptotic(nu: f64, x: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..=10u32 {
        let kk = 2.0 * k as f64 - 1.0;
        term *= -(mu - kk * kk) / (k as f64 * 8.0 * x);
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.max(1e-300).ln()
}

/// Numerically stable log(sum(exp(v))).
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + v.iter().map(|&x| (x - m).exp()).sum::<f64>().ln()
}

/// Log-density of the noncentral chi-square with `df` degrees of freedom and
/// noncentrality `lambda`, evaluated at `z > 0`.
pub fn noncentral_chi2_logpdf(df: f64, lambda: f64, z: f64) -> f64 {
    debug_assert!(df > 0.0 && lambda >= 0.0);
    if z <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let nu = 0.5 * df - 1.0;
    if lambda < 1e-12 {
        // Central chi-square.
        return (0.5 * df - 1.0) * z.ln() - 0.5 * z - 0.5 * df * std::f64::consts::LN_2
            - ln_gamma(0.5 * df);
    }
    let arg = (lambda * z).sqrt();
    // Bessel form: 1/2 e^{-(z+lambda)/2} (z/lambda)^{nu/2} I_nu(sqrt(lambda z)).
    -std::f64::consts::LN_2 - 0.5 * (z + lambda) + 0.5 * nu * (z / lambda).ln()
        + log_bessel_i(nu, arg)
}

/// Distribution function of the noncentral chi-square, by Poisson mixture of
/// regularized incomplete gamma terms.
pub fn noncentral_chi2_cdf(df: f64, lambda: f64, z: f64) -> f64 {
    debug_assert!(df > 0.0 && lambda >= 0.0);
    if z <= 0.0 {
        return 0.0;
    }
    let half_lambda = 0.5 * lambda;
    if half_lambda < 1e-12 {
        return checked_gamma_lr(0.5 * df, 0.5 * z).unwrap_or(if z > df { 1.0 } else { 0.0 });
    }
    let mode = half_lambda.floor();
    let width = (12.0 * (half_lambda.sqrt() + 2.0)).ceil();
    let j_lo = (mode - width).max(0.0) as u64;
    let j_hi = (mode + width) as u64;
    let mut acc = 0.0;
    for j in j_lo..=j_hi {
        let jf = j as f64;
        let log_w = jf * half_lambda.ln() - half_lambda - ln_gamma(jf + 1.0);
        let p = checked_gamma_lr(0.5 * df + jf, 0.5 * z).unwrap_or(0.0);
        acc += log_w.exp() * p;
    }
    acc.clamp(0.0, 1.0)
}

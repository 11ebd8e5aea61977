//! Trajectory generation: Euler, strong order-one, and exact samplers.
//!
//! Euler and order-one steps draw from a counter-based normal stream indexed
//! by `(seed, path_id, step, substep)`, so the two schemes can share shocks
//! and independent trajectories can be generated in parallel without any
//! coordination. Exact samplers (GBM, Vasicek, CIR) consume a variable
//! number of uniforms per step and therefore use a dedicated per-path
//! sequential generator. Either way, an identical plan yields a bit-identical
//! path, independent of thread count.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

use crate::error::{Error, Result};
use crate::model::{evaluate_coefficients, ModelSpec};
use crate::numerics::normal::inv_norm_cdf;
use crate::path::SamplePath;

/// Discretization scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Euler,
    OrderOne,
    Exact,
}

/// Initial condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Start {
    Fixed(f64),
    /// Draw X_0 from the invariant density (stationary families only).
    Stationary,
}

/// A fully specified simulation request.
#[derive(Debug, Clone)]
pub struct SimPlan {
    pub model: ModelSpec,
    pub x0: Start,
    pub delta: f64,
    pub n_steps: usize,
    pub substeps: usize,
    pub seed: u64,
    pub scheme: Scheme,
}

impl SimPlan {
    pub fn new(
        model: ModelSpec,
        x0: Start,
        delta: f64,
        n_steps: usize,
        substeps: usize,
        seed: u64,
        scheme: Scheme,
    ) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
        }
        if n_steps < 1 {
            return Err(Error::InvalidInput("n_steps must be >= 1".into()));
        }
        if substeps < 1 {
            return Err(Error::InvalidInput("substeps must be >= 1".into()));
        }
        if scheme == Scheme::Exact && model.family().map_or(true, |f| f.dim() == 4) {
            return Err(Error::UnsupportedModel(
                "exact simulation is available for GBM, Vasicek and CIR only".into(),
            ));
        }
        if x0 == Start::Stationary && !model.is_stationary() {
            return Err(Error::UnsupportedModel(
                "stationary start requires a stationary model".into(),
            ));
        }
        if let Start::Fixed(v) = x0 {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("x0 must be finite, got {v}")));
            }
        }
        Ok(SimPlan {
            model,
            x0,
            delta,
            n_steps,
            substeps,
            seed,
            scheme,
        })
    }
}

/// Counts of numerical interventions made while discretizing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize)]
pub struct SimDiagnostics {
    /// Positivity breaches repaired by reflection (x <- |x|).
    pub reflections: usize,
}

/// Counter-based standard-normal stream.
///
/// The value at `index` depends only on `(seed, path_id, index)`: shocks are
/// produced by positioning a ChaCha8 stream cipher at a fixed word offset and
/// mapping the 64-bit draw through the normal quantile function.
pub struct ShockStream {
    rng: ChaCha8Rng,
}

impl ShockStream {
    pub fn new(seed: u64, path_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(path_id);
        ShockStream { rng }
    }

    /// Standard normal shock at position `index`.
    pub fn normal(&mut self, index: u64) -> f64 {
        self.rng.set_word_pos(2u128 * index as u128);
        let bits = self.rng.next_u64();
        // Map to the open interval (0, 1) with 53-bit resolution.
        let u = ((bits >> 11) as f64 + 0.5) * (1.0 / 9_007_199_254_740_992.0);
        inv_norm_cdf(u)
    }
}

/// Sequential per-path generator for the exact samplers.
fn path_rng(seed: u64, path_id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // Disjoint stream space from ShockStream: exact draws never collide
    // with counter-based shocks for the same (seed, path_id).
    rng.set_stream(path_id ^ 0x9e37_79b9_7f4a_7c15);
    rng
}

/// Simulate the plan's single trajectory (path id 0).
pub fn simulate(plan: &SimPlan) -> Result<SamplePath> {
    simulate_path(plan, 0)
}

/// Euler scheme; `plan.scheme` must be [`Scheme::Euler`].
pub fn simulate_euler(plan: &SimPlan) -> Result<SamplePath> {
    if plan.scheme != Scheme::Euler {
        return Err(Error::InvalidInput("plan.scheme must be euler".into()));
    }
    simulate_path(plan, 0)
}

/// Strong order-one scheme; `plan.scheme` must be [`Scheme::OrderOne`].
pub fn simulate_order_one(plan: &SimPlan) -> Result<SamplePath> {
    if plan.scheme != Scheme::OrderOne {
        return Err(Error::InvalidInput("plan.scheme must be order-one".into()));
    }
    simulate_path(plan, 0)
}

/// Exact transition-law sampler; `plan.scheme` must be [`Scheme::Exact`].
pub fn simulate_exact(plan: &SimPlan) -> Result<SamplePath> {
    if plan.scheme != Scheme::Exact {
        return Err(Error::InvalidInput("plan.scheme must be exact".into()));
    }
    simulate_path(plan, 0)
}

/// Simulate trajectory `path_id` of the plan.
pub fn simulate_path(plan: &SimPlan, path_id: u64) -> Result<SamplePath> {
    simulate_path_with_diagnostics(plan, path_id).map(|(p, _)| p)
}

/// Simulate one trajectory and report discretization diagnostics.
pub fn simulate_path_with_diagnostics(
    plan: &SimPlan,
    path_id: u64,
) -> Result<(SamplePath, SimDiagnostics)> {
    match plan.scheme {
        Scheme::Euler => simulate_discretized(plan, path_id, false),
        Scheme::OrderOne => simulate_discretized(plan, path_id, true),
        Scheme::Exact => simulate_exact_path(plan, path_id).map(|p| (p, SimDiagnostics::default())),
    }
}

fn initial_state(plan: &SimPlan, rng: &mut ChaCha8Rng) -> Result<f64> {
    match plan.x0 {
        Start::Fixed(v) => Ok(v),
        Start::Stationary => match &plan.model {
            ModelSpec::Vasicek { kappa, alpha, sigma } => {
                let sd = (sigma * sigma / (2.0 * kappa)).sqrt();
                let z: f64 = StandardNormal.sample(rng);
                Ok(alpha + sd * z)
            }
            ModelSpec::Cir { kappa, alpha, sigma } => {
                let q = 2.0 * kappa * alpha / (sigma * sigma) - 1.0;
                if q < 0.0 {
                    return Err(Error::DomainViolation(format!(
                        "stationary start requires Feller index q >= 0, got {q}"
                    )));
                }
                let scale = sigma * sigma / (2.0 * kappa);
                let g = Gamma::new(q + 1.0, scale)
                    .map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?;
                Ok(g.sample(rng))
            }
            _ => Err(Error::UnsupportedModel(
                "stationary start implemented for Vasicek and CIR".into(),
            )),
        },
    }
}

fn simulate_discretized(
    plan: &SimPlan,
    path_id: u64,
    order_one: bool,
) -> Result<(SamplePath, SimDiagnostics)> {
    let m = plan.substeps as u64;
    let dt = plan.delta / plan.substeps as f64;
    let sqrt_dt = dt.sqrt();
    let mut stream = ShockStream::new(plan.seed, path_id);
    let mut start_rng = path_rng(plan.seed, path_id);
    let mut x = initial_state(plan, &mut start_rng)?;
    let reflect = plan.model.positive_domain();
    if reflect && x <= 0.0 {
        return Err(Error::DomainViolation(format!(
            "initial state {x} outside the positive state domain"
        )));
    }

    let mut values = Vec::with_capacity(plan.n_steps + 1);
    values.push(x);
    let mut diagnostics = SimDiagnostics::default();

    for step in 0..plan.n_steps as u64 {
        for sub in 0..m {
            let flat = step * m + sub;
            let t = flat as f64 * dt;
            let (mu, sig) = evaluate_coefficients(&plan.model, t, x)?;
            let eps = stream.normal(flat);
            let mut next = x + mu * dt + sig * sqrt_dt * eps;
            if order_one {
                let sig_dx = plan.model.diffusion_dx(t, x)?;
                next += 0.5 * sig * sig_dx * dt * (eps * eps - 1.0);
            }
            if reflect && next <= 0.0 {
                next = next.abs();
                if next == 0.0 {
                    next = f64::MIN_POSITIVE;
                }
                diagnostics.reflections += 1;
            }
            if !next.is_finite() {
                return Err(Error::Numerical(format!(
                    "state became non-finite at step {step} (substep {sub})"
                )));
            }
            x = next;
        }
        values.push(x);
    }
    Ok((SamplePath::new(plan.delta, values)?, diagnostics))
}

fn simulate_exact_path(plan: &SimPlan, path_id: u64) -> Result<SamplePath> {
    let mut rng = path_rng(plan.seed, path_id);
    let mut x = initial_state(plan, &mut rng)?;
    let delta = plan.delta;
    let mut values = Vec::with_capacity(plan.n_steps + 1);

    match &plan.model {
        ModelSpec::Gbm { mu, sigma } => {
            if x <= 0.0 {
                return Err(Error::DomainViolation(format!("GBM start must be positive, got {x}")));
            }
            let m = (mu - 0.5 * sigma * sigma) * delta;
            let s = sigma * delta.sqrt();
            values.push(x);
            for _ in 0..plan.n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x *= (m + s * z).exp();
                values.push(x);
            }
        }
        ModelSpec::Vasicek { kappa, alpha, sigma } => {
            let rho = (-kappa * delta).exp();
            let sd = (sigma * sigma * (1.0 - rho * rho) / (2.0 * kappa)).sqrt();
            values.push(x);
            for _ in 0..plan.n_steps {
                let z: f64 = StandardNormal.sample(&mut rng);
                x = alpha + (x - alpha) * rho + sd * z;
                values.push(x);
            }
        }
        ModelSpec::Cir { kappa, alpha, sigma } => {
            if x <= 0.0 {
                return Err(Error::DomainViolation(format!("CIR start must be positive, got {x}")));
            }
            let q = 2.0 * kappa * alpha / (sigma * sigma) - 1.0;
            if q <= -1.0 {
                return Err(Error::DomainViolation(format!(
                    "CIR transition law requires q > -1, got {q}"
                )));
            }
            let decay = (-kappa * delta).exp();
            let c = 2.0 * kappa / (sigma * sigma * (1.0 - decay));
            values.push(x);
            for _ in 0..plan.n_steps {
                // 2c X' ~ noncentral chi-square(2q+2, 2u): Poisson-mixed gamma.
                let u = c * x * decay;
                let j = if u > 0.0 {
                    Poisson::new(u)
                        .map_err(|e| Error::Numerical(format!("poisson sampler: {e}")))?
                        .sample(&mut rng)
                } else {
                    0.0
                };
                let g = Gamma::new(q + 1.0 + j, 1.0)
                    .map_err(|e| Error::Numerical(format!("gamma sampler: {e}")))?;
                x = g.sample(&mut rng) / c;
                if x <= 0.0 {
                    x = f64::MIN_POSITIVE;
                }
                values.push(x);
            }
        }
        _ => {
            return Err(Error::UnsupportedModel(
                "exact simulation is available for GBM, Vasicek and CIR only".into(),
            ))
        }
    }
    SamplePath::new(delta, values)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{mean, std_dev, variance};

    const CP: (f64, f64, f64) = (0.21459, 0.08571, 0.07830);

    fn cir() -> ModelSpec {
        ModelSpec::cir(CP.0, CP.1, CP.2).unwrap()
    }

    #[test]
    fn zero_dynamics_is_constant() {
        let model = ModelSpec::generic(|_| 0.0, |_| 0.0);
        let plan = SimPlan::new(model, Start::Fixed(1.23), 0.1, 50, 1, 7, Scheme::Euler).unwrap();
        let path = simulate_euler(&plan).unwrap();
        assert!(path.values().iter().all(|&v| v == 1.23));
    }

    #[test]
    fn seed_determinism_bitwise() {
        let plan = SimPlan::new(cir(), Start::Fixed(0.08), 1.0 / 12.0, 500, 4, 99, Scheme::Euler)
            .unwrap();
        let a = simulate_euler(&plan).unwrap();
        let b = simulate_euler(&plan).unwrap();
        assert_eq!(a, b);
        let exact_plan =
            SimPlan::new(cir(), Start::Fixed(0.08), 1.0 / 12.0, 500, 1, 99, Scheme::Exact).unwrap();
        let c = simulate_exact(&exact_plan).unwrap();
        let d = simulate_exact(&exact_plan).unwrap();
        assert_eq!(c, d);
        // Different seeds decouple.
        let plan2 = SimPlan { seed: 100, ..plan };
        assert_ne!(simulate_euler(&plan2).unwrap(), a);
    }

    #[test]
    fn euler_cir_mean_reverts_to_alpha() {
        let plan = SimPlan::new(cir(), Start::Fixed(CP.1), 1.0 / 12.0, 1000, 1, 11, Scheme::Euler)
            .unwrap();
        let path = simulate_euler(&plan).unwrap();
        let xs = path.values();
        let m = mean(xs);
        // Batch-mean standard error accounts for serial correlation.
        let batch = 50;
        let bmeans: Vec<f64> = xs.chunks(batch).map(mean).collect();
        let se = std_dev(&bmeans) / (bmeans.len() as f64).sqrt();
        assert!(
            (m - CP.1).abs() < 4.0 * se,
            "mean {m} vs alpha {} (4se = {})",
            CP.1,
            4.0 * se
        );
    }

    #[test]
    fn substep_refinement_agrees_in_weak_moments() {
        // E[X_delta] from one coarse step vs four substeps over many replications.
        let n_rep = 100_000u64;
        let delta = 0.5;
        let x0 = 0.05;
        let mut m1 = Vec::with_capacity(n_rep as usize);
        let mut m4 = Vec::with_capacity(n_rep as usize);
        for rep in 0..n_rep {
            let plan1 =
                SimPlan::new(cir(), Start::Fixed(x0), delta, 1, 1, 4242, Scheme::Euler).unwrap();
            let plan4 =
                SimPlan::new(cir(), Start::Fixed(x0), delta, 1, 4, 4242, Scheme::Euler).unwrap();
            m1.push(*simulate_path(&plan1, rep).unwrap().values().last().unwrap());
            m4.push(*simulate_path(&plan4, rep ^ (1 << 60)).unwrap().values().last().unwrap());
        }
        let se = (variance(&m1) / n_rep as f64).sqrt() + (variance(&m4) / n_rep as f64).sqrt();
        assert!(
            (mean(&m1) - mean(&m4)).abs() < 4.0 * se,
            "weak means differ: {} vs {}",
            mean(&m1),
            mean(&m4)
        );
    }

    #[test]
    fn order_one_equals_euler_for_constant_diffusion() {
        let model = ModelSpec::vasicek(0.5, 0.06, 0.02).unwrap();
        let pe = SimPlan::new(model.clone(), Start::Fixed(0.05), 1.0 / 52.0, 300, 2, 5, Scheme::Euler)
            .unwrap();
        let po =
            SimPlan::new(model, Start::Fixed(0.05), 1.0 / 52.0, 300, 2, 5, Scheme::OrderOne).unwrap();
        let a = simulate_euler(&pe).unwrap();
        let b = simulate_order_one(&po).unwrap();
        assert_eq!(a, b, "sigma' = 0 must kill the correction bit-for-bit");
    }

    #[test]
    fn order_one_close_to_euler_for_cir_monthly() {
        // Monthly closes sampled off a daily-substep grid (252/12 = 21),
        // both schemes driven by the identical shock stream.
        let pe = SimPlan::new(cir(), Start::Fixed(CP.1), 1.0 / 12.0, 1000, 21, 9, Scheme::Euler)
            .unwrap();
        let po = SimPlan::new(cir(), Start::Fixed(CP.1), 1.0 / 12.0, 1000, 21, 9, Scheme::OrderOne)
            .unwrap();
        let a = simulate_euler(&pe).unwrap();
        let b = simulate_order_one(&po).unwrap();
        let sup = a
            .values()
            .iter()
            .zip(b.values())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0f64, f64::max);
        let scale = mean(a.values());
        assert!(sup < 0.01 * scale, "sup {sup} vs 1% of mean {}", 0.01 * scale);
    }

    #[test]
    fn order_one_strong_error_halves_with_step_for_gbm() {
        // Strong order one: error vs the exact solution scales like the step.
        let model = ModelSpec::gbm(0.05, 0.2).unwrap();
        let t_end = 0.25;
        let n_paths = 400u64;
        let mut errs = Vec::new();
        for level in 0..4u32 {
            let steps = 16usize << level;
            let dt = t_end / steps as f64;
            let mut acc = 0.0;
            for pid in 0..n_paths {
                // Drive both the scheme and the exact solution with the same
                // Brownian increments from the counter stream.
                let mut stream = ShockStream::new(777, pid);
                let mut x = 100.0f64;
                let mut w = 0.0f64;
                for s in 0..steps {
                    let eps = stream.normal(s as u64);
                    let (mu, sig) = evaluate_coefficients(&model, 0.0, x).unwrap();
                    let sig_dx = model.diffusion_dx(0.0, x).unwrap();
                    x += mu * dt + sig * dt.sqrt() * eps + 0.5 * sig * sig_dx * dt * (eps * eps - 1.0);
                    w += dt.sqrt() * eps;
                }
                let exact = 100.0 * ((0.05 - 0.5 * 0.04) * t_end + 0.2 * w).exp();
                acc += (x - exact).abs();
            }
            errs.push(acc / n_paths as f64);
        }
        // Log-log slope across dyadic levels ~ 1 (+- 0.25).
        let slope = (errs[0] / errs[3]).ln() / (8.0f64).ln();
        assert!(
            (slope - 1.0).abs() < 0.25,
            "strong order slope {slope}, errors {errs:?}"
        );
    }

    #[test]
    fn exact_vasicek_lag1_autocorrelation() {
        let model = ModelSpec::vasicek(0.5, 0.06, 0.02).unwrap();
        let plan = SimPlan::new(model, Start::Stationary, 1.0, 100_000, 1, 2024, Scheme::Exact)
            .unwrap();
        let path = simulate_exact(&plan).unwrap();
        let xs = path.values();
        let m = mean(xs);
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..xs.len() - 1 {
            num += (xs[i] - m) * (xs[i + 1] - m);
        }
        for x in xs {
            den += (x - m) * (x - m);
        }
        let rho = num / den;
        let target = (-0.5f64).exp();
        assert!((rho - target).abs() < 0.01, "rho {rho} vs {target}");
    }

    #[test]
    fn exact_cir_stationary_moments() {
        let plan = SimPlan::new(cir(), Start::Stationary, 1.0 / 12.0, 120_000, 1, 5150, Scheme::Exact)
            .unwrap();
        let path = simulate_exact(&plan).unwrap();
        let xs = path.values();
        let (m_true, v_true) = cir().stationary_moments().unwrap();
        let batch = 400;
        let bmeans: Vec<f64> = xs.chunks(batch).map(mean).collect();
        let se_mean = std_dev(&bmeans) / (bmeans.len() as f64).sqrt();
        assert!((mean(xs) - m_true).abs() < 4.0 * se_mean);
        let sq: Vec<f64> = xs.iter().map(|&x| (x - m_true) * (x - m_true)).collect();
        let bvars: Vec<f64> = sq.chunks(batch).map(mean).collect();
        let se_var = std_dev(&bvars) / (bvars.len() as f64).sqrt();
        assert!(
            (variance(xs) - v_true).abs() < 4.0 * se_var,
            "var {} vs {} (4se {})",
            variance(xs),
            v_true,
            4.0 * se_var
        );
    }

    #[test]
    fn exact_gbm_log_increments_are_gaussian() {
        let model = ModelSpec::gbm(0.05, 0.2).unwrap();
        let plan =
            SimPlan::new(model, Start::Fixed(100.0), 1.0 / 252.0, 1_000_000, 1, 8, Scheme::Exact)
                .unwrap();
        let path = simulate_exact(&plan).unwrap();
        let incr: Vec<f64> = path
            .values()
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .collect();
        let m = mean(&incr);
        let sd = std_dev(&incr);
        let n = incr.len() as f64;
        let skew = incr.iter().map(|x| ((x - m) / sd).powi(3)).sum::<f64>() / n;
        let kurt = incr.iter().map(|x| ((x - m) / sd).powi(4)).sum::<f64>() / n - 3.0;
        assert!(skew.abs() < 0.02, "skewness {skew}");
        assert!(kurt.abs() < 0.05, "excess kurtosis {kurt}");
    }

    #[test]
    fn shock_stream_is_random_access() {
        let mut s = ShockStream::new(1, 2);
        let a5 = s.normal(5);
        let a0 = s.normal(0);
        let a5_again = s.normal(5);
        assert_eq!(a5, a5_again);
        assert_ne!(a0, a5);
    }

    #[test]
    fn plan_validation() {
        let ckls = ModelSpec::ckls(0.2, 0.08, 0.1, 0.7).unwrap();
        assert!(SimPlan::new(ckls, Start::Fixed(0.08), 0.1, 10, 1, 0, Scheme::Exact).is_err());
        let gbm = ModelSpec::gbm(0.05, 0.2).unwrap();
        assert!(SimPlan::new(gbm, Start::Stationary, 0.1, 10, 1, 0, Scheme::Exact).is_err());
        let cir = ModelSpec::cir(0.1, 0.01, 0.3).unwrap(); // non-Feller
        let plan = SimPlan::new(cir, Start::Stationary, 0.1, 10, 1, 0, Scheme::Exact).unwrap();
        assert!(simulate_exact(&plan).is_err());
    }

    #[test]
    fn euler_reflections_are_counted_not_silent() {
        // Aggressively coarse step on a non-Feller square-root process.
        let model = ModelSpec::cir(0.5, 0.01, 0.5).unwrap();
        let plan = SimPlan::new(model, Start::Fixed(0.005), 1.0, 2000, 1, 3, Scheme::Euler).unwrap();
        let (path, diag) = simulate_path_with_diagnostics(&plan, 0).unwrap();
        assert!(diag.reflections > 0);
        assert!(path.values().iter().all(|v| v.is_finite() && *v > 0.0));
    }
}

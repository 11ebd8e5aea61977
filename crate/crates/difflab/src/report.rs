//! Result containers shared by the fitting and testing routines.

use crate::model::Family;

/// A parametric fit: estimates, standard errors, objective value and
/// convergence diagnostics.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FitResult {
    pub family: Option<Family>,
    pub method: String,
    pub param_names: Vec<String>,
    pub params: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Log-likelihood for likelihood methods, criterion value otherwise.
    pub objective: f64,
    pub converged: bool,
    pub diagnostics: Vec<String>,
}

impl FitResult {
    pub fn param(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.params[i])
    }

    pub fn stderr_of(&self, name: &str) -> Option<f64> {
        self.param_names
            .iter()
            .position(|n| n == name)
            .map(|i| self.stderr[i])
    }
}

/// Outcome of a bootstrap-calibrated specification test.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TestResult {
    pub statistic: f64,
    /// (1 + #{T* >= T}) / (n_boot_used + 1).
    pub p_value: f64,
    pub n_boot: usize,
    /// Bootstrap replicates dropped because a refit failed.
    pub excluded: usize,
    /// Set when more than 10% of the replicates were dropped.
    pub flagged: bool,
    pub diagnostics: Vec<String>,
}

impl TestResult {
    pub(crate) fn from_bootstrap(statistic: f64, boot: &[f64], excluded: usize) -> Self {
        let n_boot = boot.len();
        let ge = boot.iter().filter(|&&t| t >= statistic).count();
        let p_value = (1 + ge) as f64 / (n_boot + 1) as f64;
        let flagged = excluded * 10 > n_boot + excluded;
        TestResult {
            statistic,
            p_value,
            n_boot,
            excluded,
            flagged,
            diagnostics: Vec::new(),
        }
    }
}

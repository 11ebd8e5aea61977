//! Uniformly spaced sample paths.

use crate::error::{Error, Result};

/// A uniformly spaced trajectory: observations `values[i]` at times
/// `origin_time + i * delta` (time unit: years).
///
/// `breaks` marks transitions `i -> i+1` that must be skipped by
/// estimators, e.g. when the ingesting CLI was told to tolerate gaps in a
/// data file. Paths produced by the simulators never carry breaks.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    delta: f64,
    values: Vec<f64>,
    origin_time: f64,
    breaks: Vec<usize>,
}

impl SamplePath {
    pub fn new(delta: f64, values: Vec<f64>) -> Result<Self> {
        Self::with_origin(delta, values, 0.0)
    }

    pub fn with_origin(delta: f64, values: Vec<f64>, origin_time: f64) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidInput(format!("delta must be positive, got {delta}")));
        }
        if values.len() < 2 {
            return Err(Error::InvalidInput(format!(
                "a sample path needs at least 2 observations, got {}",
                values.len()
            )));
        }
        if let Some(bad) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "non-finite value at index {bad}"
            )));
        }
        if !origin_time.is_finite() {
            return Err(Error::InvalidInput("origin_time must be finite".into()));
        }
        Ok(SamplePath {
            delta,
            values,
            origin_time,
            breaks: Vec::new(),
        })
    }

    /// Mark transitions `i -> i+1` as invalid (ascending, deduplicated).
    pub fn set_breaks(&mut self, mut breaks: Vec<usize>) -> Result<()> {
        breaks.sort_unstable();
        breaks.dedup();
        if let Some(&last) = breaks.last() {
            if last >= self.n_transitions_raw() {
                return Err(Error::InvalidInput(format!(
                    "break index {last} out of range (n transitions {})",
                    self.n_transitions_raw()
                )));
            }
        }
        self.breaks = breaks;
        Ok(())
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn origin_time(&self) -> f64 {
        self.origin_time
    }

    /// Number of observations (n + 1 for n transitions).
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // at least two observations by construction
    }

    /// Observation time of index `i`.
    pub fn time(&self, i: usize) -> f64 {
        self.origin_time + i as f64 * self.delta
    }

    /// Total time span covered by the path.
    pub fn span(&self) -> f64 {
        (self.len() - 1) as f64 * self.delta
    }

    fn n_transitions_raw(&self) -> usize {
        self.len() - 1
    }

    /// Indices `i` for which the transition `values[i] -> values[i+1]` is usable.
    pub fn transition_indices(&self) -> Vec<usize> {
        if self.breaks.is_empty() {
            return (0..self.n_transitions_raw()).collect();
        }
        let mut set = vec![true; self.n_transitions_raw()];
        for &b in &self.breaks {
            set[b] = false;
        }
        set.iter()
            .enumerate()
            .filter_map(|(i, &ok)| ok.then_some(i))
            .collect()
    }

    /// Indices `i` for which all transitions `i .. i+k` are usable, so that a
    /// k-step increment window starting at `i` is clean.
    pub fn window_indices(&self, k: usize) -> Vec<usize> {
        assert!(k >= 1);
        if self.len() <= k {
            return Vec::new();
        }
        let mut ok = vec![true; self.n_transitions_raw()];
        for &b in &self.breaks {
            ok[b] = false;
        }
        (0..=self.len() - 1 - k)
            .filter(|&i| (i..i + k).all(|j| ok[j]))
            .collect()
    }

    pub fn breaks(&self) -> &[usize] {
        &self.breaks
    }

    /// Whether all observations are strictly positive (required before
    /// fitting positive-domain families).
    pub fn all_positive(&self) -> bool {
        self.values.iter().all(|&v| v > 0.0)
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// DDPM noise schedule with its DDIM inference sub-steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionSchedule {
    t_train: usize,
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
    substeps: Vec<usize>,
}

impl DiffusionSchedule {
    /// Linear β from `beta_start` to `beta_end` over `t_train` steps with
    /// `n_substeps` evenly spaced inference steps, `t_train` first and 1 last.
    pub fn linear(t_train: usize, beta_start: f64, beta_end: f64, n_substeps: usize) -> Result<Self> {
        if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
            return Err(Error::invalid(format!(
                "need 0 < beta_start <= beta_end < 1, got [{beta_start}, {beta_end}]"
            )));
        }
        Self::from_betas(linspace(beta_start, beta_end, t_train), n_substeps)
    }

    /// Relaxed constructor admitting the degenerate endpoints β = 0 and
    /// β = 1, used to pin limiting cases in tests.
    pub fn from_betas(betas: Vec<f64>, n_substeps: usize) -> Result<Self> {
        let t_train = betas.len();
        if t_train == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if !(1..=t_train).contains(&n_substeps) {
            return Err(Error::invalid(format!(
                "substep count must be in 1..={t_train}, got {n_substeps}"
            )));
        }
        if let Some(b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
            return Err(Error::invalid(format!("beta {b} outside [0, 1]")));
        }
        let mut alpha_bars = Vec::with_capacity(t_train);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        Ok(Self {
            t_train,
            betas,
            alpha_bars,
            substeps: even_substeps(t_train, n_substeps),
        })
    }

    pub fn t_train(&self) -> usize {
        self.t_train
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha(&self, t: usize) -> Result<f64> {
        self.check_t(t)?;
        Ok(1.0 - self.betas[t - 1])
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    /// Inference timesteps, strictly decreasing.
    pub fn substeps(&self) -> &[usize] {
        &self.substeps
    }

    /// Consecutive `(t, t_prev)` pairs of the unroll; the last maps to 0.
    pub fn step_pairs(&self) -> Vec<(usize, usize)> {
        let s = &self.substeps;
        (0..s.len())
            .map(|i| (s[i], s.get(i + 1).copied().unwrap_or(0)))
            .collect()
    }

    /// A copy with a different number of inference steps.
    pub fn with_substeps(&self, n_substeps: usize) -> Result<Self> {
        Self::from_betas(self.betas.clone(), n_substeps)
    }

    /// `ᾱ_t` for `t ∈ 0..=T_train` with `ᾱ_0 = 1`.
    pub fn alpha_bar(&self, t: usize) -> Result<f64> {
        if t == 0 {
            return Ok(1.0);
        }
        self.check_t(t)?;
        Ok(self.alpha_bars[t - 1])
    }

    pub(crate) fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.t_train {
            return Err(Error::invalid(format!(
                "timestep {t} outside 1..={}",
                self.t_train
            )));
        }
        Ok(())
    }
}

impl Default for DiffusionSchedule {
    fn default() -> Self {
        Self::linear(1000, 1e-4, 0.02, 50).expect("default schedule is valid")
    }
}

fn linspace(a: f64, b: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![a];
    }
    (0..n)
        .map(|i| a + (b - a) * i as f64 / (n - 1) as f64)
        .collect()
}

fn even_substeps(t_train: usize, n: usize) -> Vec<usize> {
    if n == 1 {
        return vec![t_train];
    }
    let span = (t_train - 1) as f64;
    (0..n)
        .map(|i| t_train - (i as f64 * span / (n - 1) as f64).round() as usize)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_product() {
        let s = DiffusionSchedule::from_betas(vec![0.1, 0.2], 2).unwrap();
        assert!((s.alpha_bar(1).unwrap() - 0.9).abs() < 1e-15);
        assert!((s.alpha_bar(2).unwrap() - 0.72).abs() < 1e-15);
        assert_eq!(s.substeps(), &[2, 1]);
        assert_eq!(s.step_pairs(), vec![(2, 1), (1, 0)]);
    }

    #[test]
    fn zero_beta_means_no_noise() {
        let s = DiffusionSchedule::from_betas(vec![0.0; 10], 3).unwrap();
        assert!(s.alpha_bars().iter().all(|&a| a == 1.0));
    }

    #[test]
    fn default_prior_is_nearly_standard_normal() {
        let s = DiffusionSchedule::default();
        let last = s.alpha_bar(1000).unwrap();
        assert!(last < 1e-4);
        // running product computed once with an independent loop
        let mut p = 1.0f64;
        for i in 0..1000 {
            p *= 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0);
        }
        assert!((last - p).abs() < 1e-18);
        assert!((last - 4.035_829_765_375_675e-5).abs() < 1e-17);
    }

    #[test]
    fn substeps_are_strictly_decreasing_and_end_at_one() {
        for n in [1, 2, 5, 50, 1000] {
            let s = DiffusionSchedule::linear(1000, 1e-4, 0.02, n).unwrap();
            let st = s.substeps();
            assert_eq!(st.len(), n);
            assert_eq!(st[0], 1000);
            if n > 1 {
                assert_eq!(*st.last().unwrap(), 1);
            }
            assert!(st.windows(2).all(|w| w[0] > w[1]));
        }
    }

    #[test]
    fn invalid_ranges_rejected() {
        assert!(DiffusionSchedule::linear(10, 0.0, 0.02, 5).is_err());
        assert!(DiffusionSchedule::linear(10, 0.03, 0.02, 5).is_err());
        assert!(DiffusionSchedule::linear(10, 1e-4, 1.0, 5).is_err());
        assert!(DiffusionSchedule::linear(10, 1e-4, 0.02, 0).is_err());
        assert!(DiffusionSchedule::linear(10, 1e-4, 0.02, 11).is_err());
    }
}

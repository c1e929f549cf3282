//! Pseudo-spectral vorticity solver on the periodic square `[0, 2π)²`.
//!
//! Node `(i, j)` sits at `x = 2πj/n`, `y = 2πi/n`. Diffusion is treated by
//! Crank–Nicolson, advection and forcing by second-order Adams–Bashforth
//! (forward Euler on the first step). Advection is evaluated in divergence
//! form `∇·(u w)` with 2/3-rule dealiasing, so the zero mode never changes.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Forcing {
    None,
    /// `f = amplitude · cos(wavenumber · y)`.
    Kolmogorov { amplitude: f64, wavenumber: u32 },
}

impl Forcing {
    pub fn kolmogorov() -> Self {
        Forcing::Kolmogorov {
            amplitude: -4.0,
            wavenumber: 4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NsConfig {
    pub n: usize,
    pub nu: f64,
    pub t_final: f64,
    pub dt: f64,
    pub forcing: Forcing,
    /// Disabling advection leaves the forced heat equation.
    pub advection: bool,
    /// Maximum allowed `dt (max|u| + max|v|) / Δx`.
    pub cfl_limit: f64,
}

impl Default for NsConfig {
    fn default() -> Self {
        Self {
            n: 32,
            nu: 1.0 / 200.0,
            t_final: 1.0,
            dt: 1e-2,
            forcing: Forcing::kolmogorov(),
            advection: true,
            cfl_limit: 1.0,
        }
    }
}

pub(crate) struct Spectral {
    n: usize,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    k: Vec<f64>,
    keep: Vec<bool>,
}

impl Spectral {
    pub(crate) fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        let k: Vec<f64> = (0..n)
            .map(|j| if j <= n / 2 { j as f64 } else { j as f64 - n as f64 })
            .collect();
        let keep = k.iter().map(|kk| 3.0 * kk.abs() < n as f64).collect();
        Self {
            n,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
            k,
            keep,
        }
    }

    fn transform(&self, data: &mut [Complex64], plan: &Arc<dyn Fft<f64>>) {
        let n = self.n;
        plan.process(data);
        let mut col = vec![Complex64::default(); n];
        for j in 0..n {
            for i in 0..n {
                col[i] = data[i * n + j];
            }
            plan.process(&mut col);
            for i in 0..n {
                data[i * n + j] = col[i];
            }
        }
    }

    pub(crate) fn forward(&self, real: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = real.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.transform(&mut data, &self.fwd);
        data
    }

    pub(crate) fn inverse(&self, spec: &[Complex64]) -> Vec<f64> {
        let mut data = spec.to_vec();
        self.transform(&mut data, &self.inv);
        let scale = 1.0 / (self.n * self.n) as f64;
        data.iter().map(|c| c.re * scale).collect()
    }

    /// `(kx, ky)` at flat spectral index; the Nyquist row/column gets zero
    /// derivative.
    fn wavenumbers(&self, idx: usize) -> (f64, f64) {
        let n = self.n;
        let (i, j) = (idx / n, idx % n);
        let d = |m: usize| if n.is_multiple_of(2) && m == n / 2 { 0.0 } else { self.k[m] };
        (d(j), d(i))
    }

    pub(crate) fn laplacian(&self, idx: usize) -> f64 {
        let n = self.n;
        let (i, j) = (idx / n, idx % n);
        -(self.k[i] * self.k[i] + self.k[j] * self.k[j])
    }

    fn dealiased(&self, idx: usize) -> bool {
        self.keep[idx / self.n] && self.keep[idx % self.n]
    }
}

fn forcing_field(cfg: &NsConfig) -> Vec<f64> {
    let n = cfg.n;
    match cfg.forcing {
        Forcing::None => vec![0.0; n * n],
        Forcing::Kolmogorov {
            amplitude,
            wavenumber,
        } => (0..n * n)
            .map(|idx| {
                let y = 2.0 * PI * (idx / n) as f64 / n as f64;
                amplitude * (wavenumber as f64 * y).cos()
            })
            .collect(),
    }
}

/// Integrates the vorticity equation from `w0` to `t_final`.
pub fn ns_forward(w0: &[f64], cfg: &NsConfig) -> Result<Vec<f64>> {
    let n = cfg.n;
    if n < 4 {
        return Err(Error::invalid(format!("vorticity grid needs n >= 4, got {n}")));
    }
    if w0.len() != n * n {
        return Err(Error::Shape {
            op: "ns_forward",
            lhs: vec![n, n],
            rhs: vec![w0.len()],
        });
    }
    if !(cfg.nu >= 0.0 && cfg.dt > 0.0 && cfg.t_final >= 0.0) {
        return Err(Error::invalid(format!(
            "invalid time stepping: nu={}, dt={}, T={}",
            cfg.nu, cfg.dt, cfg.t_final
        )));
    }
    let steps_f = cfg.t_final / cfg.dt;
    let steps = steps_f.round() as usize;
    if (steps_f - steps as f64).abs() > 1e-9 * steps_f.max(1.0) {
        return Err(Error::invalid(format!(
            "dt={} does not divide T={}",
            cfg.dt, cfg.t_final
        )));
    }
    if let Some(i) = w0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            what: "initial vorticity",
            index: i,
        });
    }

    let sp = Spectral::new(n);
    let dx = 2.0 * PI / n as f64;
    let mut w_hat = sp.forward(w0);
    let mut f_hat = sp.forward(&forcing_field(cfg));
    f_hat[0] = Complex64::default();

    let explicit = |w_hat: &[Complex64], step: usize| -> Result<Vec<Complex64>> {
        let mut out = f_hat.clone();
        if !cfg.advection {
            return Ok(out);
        }
        // ψ̂ = ŵ/|k|², u = ∂ψ/∂y, v = −∂ψ/∂x
        let mut u_hat = vec![Complex64::default(); n * n];
        let mut v_hat = vec![Complex64::default(); n * n];
        for idx in 1..n * n {
            let psi = w_hat[idx] / -sp.laplacian(idx);
            let (kx, ky) = sp.wavenumbers(idx);
            u_hat[idx] = Complex64::new(0.0, ky) * psi;
            v_hat[idx] = -Complex64::new(0.0, kx) * psi;
        }
        let u = sp.inverse(&u_hat);
        let v = sp.inverse(&v_hat);
        let w = sp.inverse(w_hat);
        let umax = u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let vmax = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let courant = cfg.dt * (umax + vmax) / dx;
        if courant > cfg.cfl_limit {
            return Err(Error::Cfl {
                step,
                courant,
                limit: cfg.cfl_limit,
            });
        }
        let uw: Vec<f64> = u.iter().zip(&w).map(|(a, b)| a * b).collect();
        let vw: Vec<f64> = v.iter().zip(&w).map(|(a, b)| a * b).collect();
        let uw_hat = sp.forward(&uw);
        let vw_hat = sp.forward(&vw);
        for idx in 1..n * n {
            if sp.dealiased(idx) {
                let (kx, ky) = sp.wavenumbers(idx);
                out[idx] -= Complex64::new(0.0, kx) * uw_hat[idx] + Complex64::new(0.0, ky) * vw_hat[idx];
            }
        }
        Ok(out)
    };

    let mut prev: Option<Vec<Complex64>> = None;
    for step in 0..steps {
        let nl = explicit(&w_hat, step)?;
        for idx in 1..n * n {
            let lap = cfg.nu * cfg.dt * sp.laplacian(idx);
            let rhs_nl = match &prev {
                Some(p) => 1.5 * nl[idx] - 0.5 * p[idx],
                None => nl[idx],
            };
            w_hat[idx] = (w_hat[idx] * (1.0 + 0.5 * lap) + cfg.dt * rhs_nl) / (1.0 - 0.5 * lap);
        }
        if let Some(idx) = w_hat.iter().position(|c| !(c.re.is_finite() && c.im.is_finite())) {
            return Err(Error::NonFinite {
                what: "vorticity",
                index: step * n * n + idx,
            });
        }
        prev = Some(nl);
    }
    Ok(sp.inverse(&w_hat))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn heat(n: usize, t: f64, dt: f64) -> NsConfig {
        NsConfig {
            n,
            t_final: t,
            dt,
            forcing: Forcing::None,
            advection: false,
            ..NsConfig::default()
        }
    }

    #[test]
    fn zero_stays_zero() {
        let cfg = NsConfig {
            forcing: Forcing::None,
            n: 16,
            ..NsConfig::default()
        };
        let w = ns_forward(&vec![0.0; 256], &cfg).unwrap();
        assert!(w.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_mode_decays_like_heat_equation() {
        let n = 16;
        let k = 3.0;
        let cfg = heat(n, 1.0, 1e-3);
        let w0: Vec<f64> = (0..n * n)
            .map(|idx| (k * 2.0 * PI * (idx % n) as f64 / n as f64).cos())
            .collect();
        let w = ns_forward(&w0, &cfg).unwrap();
        let decay = (-cfg.nu * k * k * cfg.t_final).exp();
        for (a, b) in w.iter().zip(&w0) {
            assert!((a - decay * b).abs() < 1e-8);
        }
    }

    #[test]
    fn mean_is_conserved_with_advection() {
        let n = 16;
        let w0: Vec<f64> = (0..n * n)
            .map(|idx| {
                let (x, y) = ((idx % n) as f64, (idx / n) as f64);
                0.7 + (0.4 * x).sin() * (0.8 * y).cos() + 0.3 * (0.4 * y).sin()
            })
            .collect();
        let cfg = NsConfig {
            n,
            t_final: 0.5,
            dt: 5e-3,
            ..NsConfig::default()
        };
        let w = ns_forward(&w0, &cfg).unwrap();
        let m0 = w0.iter().sum::<f64>() / (n * n) as f64;
        let m1 = w.iter().sum::<f64>() / (n * n) as f64;
        assert!((m0 - m1).abs() < 1e-12);
    }

    #[test]
    fn cfl_violation_names_step() {
        let n = 16;
        let w0: Vec<f64> = (0..n * n)
            .map(|idx| 50.0 * (2.0 * PI * (idx / n) as f64 / n as f64).sin())
            .collect();
        let cfg = NsConfig {
            n,
            t_final: 1.0,
            dt: 0.5,
            ..NsConfig::default()
        };
        assert!(matches!(ns_forward(&w0, &cfg), Err(Error::Cfl { step: 0, .. })));
    }

    #[test]
    fn dt_must_divide_horizon() {
        let cfg = NsConfig {
            n: 8,
            t_final: 1.0,
            dt: 0.3,
            ..NsConfig::default()
        };
        assert!(ns_forward(&[0.0; 64], &cfg).is_err());
    }
}

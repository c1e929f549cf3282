//! Synthetic parameter-field datasets.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::eit::EitSolver;
use super::grid::Grid;
use super::ns::{ns_forward, NsConfig, Spectral};
use crate::error::{Error, Result};
use crate::rng::{normal_vec, rng_for};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    /// Conductivity: constant background plus Gaussian bumps.
    EitBlobs,
    /// Zero-mean Gaussian random vorticity with spectrum `(|k|²+τ²)^{−α}`.
    NsGrf,
}

impl DatasetKind {
    pub fn tag(self) -> &'static str {
        match self {
            DatasetKind::EitBlobs => "eit-blobs",
            DatasetKind::NsGrf => "ns-grf",
        }
    }
}

impl std::str::FromStr for DatasetKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eit-blobs" => Ok(DatasetKind::EitBlobs),
            "ns-grf" => Ok(DatasetKind::NsGrf),
            other => Err(Error::invalid(format!("unknown dataset kind '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlobParams {
    pub background: f64,
    pub min_blobs: usize,
    pub max_blobs: usize,
    pub amplitude: (f64, f64),
    pub center: (f64, f64),
    pub width: (f64, f64),
    pub bounds: (f64, f64),
}

impl Default for BlobParams {
    fn default() -> Self {
        Self {
            background: 0.2,
            min_blobs: 1,
            max_blobs: 3,
            amplitude: (0.3, 0.8),
            center: (0.2, 0.8),
            width: (0.06, 0.15),
            bounds: (0.01, 1.0),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub kind: DatasetKind,
    pub grid_n: usize,
    /// Flattened `n × n` fields.
    pub fields: Vec<Tensor>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.fields.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fields.is_empty()
    }

    /// Pointwise mean field.
    pub fn mean_field(&self) -> Result<Tensor> {
        let first = self.fields.first().ok_or_else(|| Error::invalid("empty dataset"))?;
        let mut acc = Tensor::zeros(first.shape().to_vec());
        for f in &self.fields {
            acc = acc.axpy(1.0, f)?;
        }
        Ok(acc.scaled(1.0 / self.len() as f64))
    }
}

pub fn gen_dataset(kind: DatasetKind, n: usize, seed: u64, grid_n: usize) -> Result<Dataset> {
    match kind {
        DatasetKind::EitBlobs => gen_blobs(n, seed, Grid::new(grid_n)?, &BlobParams::default()),
        DatasetKind::NsGrf => gen_grf(n, seed, grid_n, 2.5, 3.0),
    }
}

pub fn gen_blobs(n: usize, seed: u64, grid: Grid, p: &BlobParams) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    if p.min_blobs > p.max_blobs || p.bounds.0 <= 0.0 || p.bounds.0 > p.bounds.1 {
        return Err(Error::invalid(format!("invalid blob parameters {p:?}")));
    }
    let fields = (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, &format!("eit-blobs/{i}"));
            let count = rng.random_range(p.min_blobs..=p.max_blobs);
            let blobs: Vec<(f64, f64, f64, f64)> = (0..count)
                .map(|_| {
                    (
                        rng.random_range(p.amplitude.0..=p.amplitude.1),
                        rng.random_range(p.center.0..=p.center.1),
                        rng.random_range(p.center.0..=p.center.1),
                        rng.random_range(p.width.0..=p.width.1),
                    )
                })
                .collect();
            let values = (0..grid.len())
                .map(|k| {
                    let (x, y) = grid.coords(k);
                    let v = blobs.iter().fold(p.background, |acc, &(a, cx, cy, w)| {
                        let r2 = (x - cx).powi(2) + (y - cy).powi(2);
                        acc + a * (-r2 / (2.0 * w * w)).exp()
                    });
                    v.clamp(p.bounds.0, p.bounds.1)
                })
                .collect();
            Tensor::from_vec(values)
        })
        .collect();
    Ok(Dataset {
        kind: DatasetKind::EitBlobs,
        grid_n: grid.n,
        fields,
    })
}

/// Periodic Gaussian random fields normalized to unit expected variance.
pub fn gen_grf(n: usize, seed: u64, grid_n: usize, alpha: f64, tau: f64) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::invalid("dataset size must be >= 1"));
    }
    if grid_n < 4 {
        return Err(Error::invalid(format!("grid needs n >= 4, got {grid_n}")));
    }
    let sp = Spectral::new(grid_n);
    let cells = grid_n * grid_n;
    let amp: Vec<f64> = (0..cells)
        .map(|idx| {
            if idx == 0 {
                0.0
            } else {
                (-sp.laplacian(idx) + tau * tau).powf(-alpha / 2.0)
            }
        })
        .collect();
    let variance = amp.iter().map(|a| a * a).sum::<f64>() / cells as f64;
    let scale = 1.0 / variance.sqrt();
    let fields = (0..n)
        .map(|i| {
            let mut rng = rng_for(seed, &format!("ns-grf/{i}"));
            let mut spec = sp.forward(&normal_vec(&mut rng, cells));
            for (c, a) in spec.iter_mut().zip(&amp) {
                *c *= a * scale;
            }
            Tensor::from_vec(sp.inverse(&spec))
        })
        .collect();
    Ok(Dataset {
        kind: DatasetKind::NsGrf,
        grid_n,
        fields,
    })
}

/// Exact EIT observations `[patterns, boundary nodes]` for every field.
pub fn pair_eit(data: &Dataset, solver: &EitSolver) -> Result<Vec<Tensor>> {
    data.fields
        .iter()
        .map(|f| Ok(solver.solve(f.data())?.voltages))
        .collect()
}

/// Terminal vorticity for every initial field.
pub fn pair_ns(data: &Dataset, cfg: &NsConfig) -> Result<Vec<Tensor>> {
    data.fields
        .iter()
        .map(|f| Ok(Tensor::from_vec(ns_forward(f.data(), cfg)?)))
        .collect()
}

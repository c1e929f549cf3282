//! Fourier-layer operator network on an `n × n` grid.
//!
//! Fields are held pixel-major as `[n², channels]`. A spectral block keeps
//! the Fourier modes with `|k_x|, |k_y| < m`, mixes channels per mode with
//! complex weights and returns to pixel space, all through dense DFT
//! matrices so the block is a composition of matmuls.

use std::f64::consts::PI;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use super::mlp::Activation;
use crate::error::{Error, Result};
use crate::physics::Grid;
use crate::rng::rng_for;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SurrogateHead {
    /// Per-pattern potentials restricted to the boundary and centered,
    /// giving `[patterns, 4(n−1)]`.
    Boundary { patterns: usize },
    /// One output field `[n²]`.
    Field,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectralArch {
    pub grid_n: usize,
    pub width: usize,
    pub modes: usize,
    pub layers: usize,
    pub head: SurrogateHead,
    #[serde(default)]
    pub activation: Activation,
    /// Input normalization `(a − shift)/scale`.
    pub input_shift: f64,
    pub input_scale: f64,
    /// Output multiplier.
    pub output_scale: f64,
}

impl SpectralArch {
    pub fn new(grid_n: usize, width: usize, modes: usize, layers: usize, head: SurrogateHead) -> Result<Self> {
        let arch = Self {
            grid_n,
            width,
            modes,
            layers,
            head,
            activation: Activation::Tanh,
            input_shift: 0.0,
            input_scale: 1.0,
            output_scale: 1.0,
        };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.grid_n < 3 || self.width == 0 || self.modes == 0 || self.layers == 0 {
            return Err(Error::invalid(format!("invalid spectral architecture {self:?}")));
        }
        if let SurrogateHead::Boundary { patterns: 0 } = self.head {
            return Err(Error::invalid("boundary head needs at least one pattern"));
        }
        if !(self.input_scale > 0.0 && self.output_scale > 0.0) {
            return Err(Error::invalid("normalization scales must be positive"));
        }
        Ok(())
    }

    pub fn out_channels(&self) -> usize {
        match self.head {
            SurrogateHead::Boundary { patterns } => patterns,
            SurrogateHead::Field => 1,
        }
    }

    pub fn output_shape(&self) -> Vec<usize> {
        match self.head {
            SurrogateHead::Boundary { patterns } => vec![patterns, 4 * (self.grid_n - 1)],
            SurrogateHead::Field => vec![self.grid_n * self.grid_n],
        }
    }

    /// Shapes of `[lift W, lift b, (Wr, Wi, W, b) per layer, P₁, c₁, P₂, c₂]`.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        let c = self.width;
        let k = retained_frequencies(self.grid_n, self.modes).len().pow(2);
        let mut s = vec![vec![3, c], vec![c]];
        for _ in 0..self.layers {
            s.extend([vec![k, c * c], vec![k, c * c], vec![c, c], vec![c]]);
        }
        s.extend([vec![c, c], vec![c], vec![c, self.out_channels()], vec![self.out_channels()]]);
        s
    }
}

/// Distinct signed frequencies `|k| < m` on an `n`-point periodic axis.
pub fn retained_frequencies(n: usize, m: usize) -> Vec<i64> {
    let mut seen = vec![false; n];
    let mut out = Vec::new();
    let lim = (m as i64 - 1).min(n as i64);
    for k in std::iter::once(0).chain((1..=lim).flat_map(|k| [k, -k])) {
        let r = k.rem_euclid(n as i64) as usize;
        if !seen[r] {
            seen[r] = true;
            out.push(k);
        }
    }
    out
}

/// Forward `(Fr, Fi)` `[K, n²]` and inverse `(Gr, Gi)` `[n², K]` restricted
/// DFT matrices: `x̂ = (Fr + iFi) x` and `x = Gr Re x̂ + Gi Im x̂` when all
/// modes are kept.
pub fn dft_matrices(n: usize, m: usize) -> (Tensor, Tensor, Tensor, Tensor) {
    let freqs = retained_frequencies(n, m);
    let modes: Vec<(i64, i64)> = freqs.iter().flat_map(|&ky| freqs.iter().map(move |&kx| (kx, ky))).collect();
    let (k, p) = (modes.len(), n * n);
    let mut fr = vec![0.0; k * p];
    let mut fi = vec![0.0; k * p];
    let mut gr = vec![0.0; p * k];
    let mut gi = vec![0.0; p * k];
    let norm = 1.0 / p as f64;
    for (r, &(kx, ky)) in modes.iter().enumerate() {
        for i in 0..n {
            for j in 0..n {
                // reduce the phase index mod n before scaling for accuracy
                let phase = (kx * j as i64 + ky * i as i64).rem_euclid(n as i64) as f64;
                let theta = 2.0 * PI * phase / n as f64;
                let (s, c) = theta.sin_cos();
                let q = i * n + j;
                fr[r * p + q] = c;
                fi[r * p + q] = -s;
                gr[q * k + r] = c * norm;
                gi[q * k + r] = -s * norm;
            }
        }
    }
    (
        Tensor::new([k, p], fr).expect("dft shape"),
        Tensor::new([k, p], fi).expect("dft shape"),
        Tensor::new([p, k], gr).expect("dft shape"),
        Tensor::new([p, k], gi).expect("dft shape"),
    )
}

#[derive(Debug, Clone, PartialEq)]
struct Fixed {
    fr: Tensor,
    fi: Tensor,
    gr: Tensor,
    gi: Tensor,
    /// `[c, c²]`, repeats each input channel across output channels.
    expand: Tensor,
    /// `[c², c]`, sums over input channels.
    reduce: Tensor,
    coords: Tensor,
    /// Centered boundary restriction `[B, n²]`.
    restrict: Option<Tensor>,
}

impl Fixed {
    fn new(arch: &SpectralArch) -> Self {
        let (n, c) = (arch.grid_n, arch.width);
        let (fr, fi, gr, gi) = dft_matrices(n, arch.modes);
        let mut expand = vec![0.0; c * c * c];
        let mut reduce = vec![0.0; c * c * c];
        for i in 0..c {
            for o in 0..c {
                expand[i * c * c + i * c + o] = 1.0;
                reduce[(i * c + o) * c + o] = 1.0;
            }
        }
        let grid = Grid { n };
        let coords = (0..n * n).flat_map(|k| {
            let (x, y) = grid.coords(k);
            [x, y]
        });
        let restrict = match arch.head {
            SurrogateHead::Boundary { .. } => {
                let r = grid.restriction_matrix();
                let (b, p) = (r.shape()[0], r.shape()[1]);
                let mut d = r.into_data();
                for col in 0..p {
                    let mean = (0..b).map(|row| d[row * p + col]).sum::<f64>() / b as f64;
                    for row in 0..b {
                        d[row * p + col] -= mean;
                    }
                }
                Some(Tensor::new([b, p], d).expect("restriction shape"))
            }
            SurrogateHead::Field => None,
        };
        Self {
            fr,
            fi,
            gr,
            gi,
            expand: Tensor::new([c, c * c], expand).expect("expand shape"),
            reduce: Tensor::new([c * c, c], reduce).expect("reduce shape"),
            coords: Tensor::new([n * n, 2], coords.collect()).expect("coords shape"),
            restrict,
        }
    }
}

/// The operator network `𝐹̃_φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralSurrogate {
    pub arch: SpectralArch,
    pub params: Vec<Tensor>,
    fixed: Fixed,
}

impl SpectralSurrogate {
    /// Kaiming-uniform pointwise weights, spectral weights uniform in
    /// `±1/width`, zero biases.
    pub fn new(seed: u64, arch: SpectralArch) -> Result<Self> {
        arch.validate()?;
        let mut rng = rng_for(seed, "spectral-init");
        let gain = arch.activation.gain();
        let params = arch
            .param_shapes()
            .into_iter()
            .enumerate()
            .map(|(idx, shape)| {
                if shape.len() == 1 {
                    return Tensor::zeros(shape);
                }
                let is_spectral = idx >= 2 && idx < 2 + 4 * arch.layers && (idx - 2) % 4 < 2;
                let bound = if is_spectral {
                    1.0 / arch.width as f64
                } else {
                    gain * (3.0 / shape[0] as f64).sqrt()
                };
                let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                let n: usize = shape.iter().product();
                Tensor::new(shape, (0..n).map(|_| dist.sample(&mut rng)).collect()).expect("param shape")
            })
            .collect();
        Ok(Self {
            fixed: Fixed::new(&arch),
            arch,
            params,
        })
    }

    pub fn from_params(arch: SpectralArch, params: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        let shapes = arch.param_shapes();
        if shapes.len() != params.len() || shapes.iter().zip(&params).any(|(s, p)| s.as_slice() != p.shape()) {
            return Err(Error::invalid("spectral parameters do not match the architecture"));
        }
        Ok(Self {
            fixed: Fixed::new(&arch),
            arch,
            params,
        })
    }

    /// Replaces the normalization constants without touching the weights.
    pub fn set_normalization(&mut self, input_shift: f64, input_scale: f64, output_scale: f64) -> Result<()> {
        let mut arch = self.arch.clone();
        arch.input_shift = input_shift;
        arch.input_scale = input_scale;
        arch.output_scale = output_scale;
        arch.validate()?;
        self.arch = arch;
        Ok(())
    }

    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> Vec<Var<'g>> {
        self.params
            .iter()
            .map(|p| if trainable { g.leaf(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    fn spectral_block<'g>(&self, h: Var<'g>, wr: Var<'g>, wi: Var<'g>) -> Result<Var<'g>> {
        let g = h.graph();
        let f = &self.fixed;
        let xr = g.constant(f.fr.clone()).matmul(h)?;
        let xi = g.constant(f.fi.clone()).matmul(h)?;
        let e = g.constant(f.expand.clone());
        let s = g.constant(f.reduce.clone());
        let (xr, xi) = (xr.matmul(e)?, xi.matmul(e)?);
        let yr = xr.mul(wr)?.sub(xi.mul(wi)?)?.matmul(s)?;
        let yi = xr.mul(wi)?.add(xi.mul(wr)?)?.matmul(s)?;
        g.constant(f.gr.clone()).matmul(yr)?.add(g.constant(f.gi.clone()).matmul(yi)?)
    }

    /// Applies only the `index`-th spectral block to `h` (`[n², width]`).
    pub fn spectral_block_value(&self, index: usize, h: &Tensor) -> Result<Tensor> {
        if index >= self.arch.layers {
            return Err(Error::invalid(format!("no spectral block {index}")));
        }
        let g = Graph::new();
        let p = self.bind(&g, false);
        let base = 2 + 4 * index;
        Ok(self.spectral_block(g.constant(h.clone()), p[base], p[base + 1])?.value())
    }

    /// `a` is a 1-D field of length `n²`.
    pub fn forward<'g>(&self, params: &[Var<'g>], a: Var<'g>) -> Result<Var<'g>> {
        let n2 = self.arch.grid_n * self.arch.grid_n;
        if a.shape() != [n2] {
            return Err(Error::Shape {
                op: "surrogate input",
                lhs: vec![n2],
                rhs: a.shape(),
            });
        }
        let g = a.graph();
        let act = self.arch.activation;
        let x = a
            .reshape([n2, 1])?
            .add(g.constant(Tensor::scalar(-self.arch.input_shift)))?
            .scale(1.0 / self.arch.input_scale)?;
        let x = g.concat(&[x, g.constant(self.fixed.coords.clone())], 1)?;
        let mut h = x.matmul(params[0])?.add(params[1])?;
        for l in 0..self.arch.layers {
            let p = &params[2 + 4 * l..6 + 4 * l];
            let spec = self.spectral_block(h, p[0], p[1])?;
            h = spec.add(h.matmul(p[2])?.add(p[3])?)?;
            if l + 1 < self.arch.layers {
                h = act.apply(h)?;
            }
        }
        let k = 2 + 4 * self.arch.layers;
        let hidden = act.apply(h.matmul(params[k])?.add(params[k + 1])?)?;
        let out = hidden.matmul(params[k + 2])?.add(params[k + 3])?;
        let y = match &self.fixed.restrict {
            Some(r) => g.constant(r.clone()).matmul(out)?.transpose()?,
            None => out.reshape([n2])?,
        };
        y.scale(self.arch.output_scale)
    }

    pub fn eval(&self, a: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let p = self.bind(&g, false);
        Ok(self.forward(&p, g.constant(a.clone()))?.value())
    }
}

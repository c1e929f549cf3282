use serde::{Deserialize, Serialize};

use super::mlp::{Activation, Mlp, MlpArch};
use super::train::{fit, stack_rows, TrainConfig};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::{Graph, Tensor, Var};

/// Admissible parameter range enforced by the decoder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn new(min: f64, max: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite() && min < max) {
            return Err(Error::invalid(format!("invalid bounds [{min}, {max}]")));
        }
        Ok(Self { min, max })
    }

    /// `(mid, half)` such that `mid + half·s` stays inside `[min, max]` in
    /// floating point for every `s ∈ [−1, 1]`.
    pub fn squash_coeffs(&self) -> (f64, f64) {
        let mid = 0.5 * (self.min + self.max);
        let mut half = 0.5 * (self.max - self.min);
        while mid + half > self.max || mid - half < self.min {
            half = f64::from_bits(half.to_bits() - 1);
        }
        (mid, half)
    }
}

impl Default for Bounds {
    fn default() -> Self {
        Self { min: 0.01, max: 1.0 }
    }
}

/// Deterministic autoencoder between `n × n` fields and latent codes. The
/// decoder output passes through `mid + half·tanh(·)`, so decoded fields lie
/// in the admissible range for every latent.
#[derive(Debug, Clone, PartialEq)]
pub struct Autoencoder {
    pub encoder: Mlp,
    pub decoder: Mlp,
    pub bounds: Bounds,
}

impl Autoencoder {
    pub fn new(seed: u64, field_dim: usize, latent_dim: usize, hidden: &[usize], activation: Activation, bounds: Bounds) -> Result<Self> {
        if hidden.is_empty() {
            return Err(Error::invalid("autoencoder needs at least one hidden layer"));
        }
        let mut enc = vec![field_dim];
        enc.extend_from_slice(hidden);
        enc.push(latent_dim);
        let mut dec = vec![latent_dim];
        dec.extend(hidden.iter().rev());
        dec.push(field_dim);
        Ok(Self {
            encoder: Mlp::new(derive_seed(seed, "encoder"), MlpArch::new(enc, activation)?)?,
            decoder: Mlp::new(derive_seed(seed, "decoder"), MlpArch::new(dec, activation)?)?,
            bounds,
        })
    }

    pub fn from_parts(encoder: Mlp, decoder: Mlp, bounds: Bounds) -> Result<Self> {
        if encoder.arch.output_dim() != decoder.arch.input_dim() || encoder.arch.input_dim() != decoder.arch.output_dim() {
            return Err(Error::Shape {
                op: "autoencoder",
                lhs: vec![encoder.arch.input_dim(), encoder.arch.output_dim()],
                rhs: vec![decoder.arch.output_dim(), decoder.arch.input_dim()],
            });
        }
        Ok(Self { encoder, decoder, bounds })
    }

    pub fn latent_dim(&self) -> usize {
        self.encoder.arch.output_dim()
    }

    pub fn field_dim(&self) -> usize {
        self.encoder.arch.input_dim()
    }

    /// `a` is `[batch, field_dim]`.
    pub fn encode<'g>(&self, params: &[Var<'g>], a: Var<'g>) -> Result<Var<'g>> {
        self.encoder.forward(params, a)
    }

    /// `z` is `[batch, latent_dim]`.
    pub fn decode<'g>(&self, params: &[Var<'g>], z: Var<'g>) -> Result<Var<'g>> {
        let (mid, half) = self.bounds.squash_coeffs();
        let g = z.graph();
        self.decoder
            .forward(params, z)?
            .tanh()?
            .scale(half)?
            .add(g.constant(Tensor::scalar(mid)))
    }

    fn with_rows(x: &Tensor, dim: usize, op: &'static str) -> Result<Tensor> {
        match x.ndim() {
            1 if x.len() == dim => x.clone().reshape([1, dim]),
            2 if x.shape()[1] == dim => Ok(x.clone()),
            _ => Err(Error::Shape {
                op,
                lhs: vec![dim],
                rhs: x.shape().to_vec(),
            }),
        }
    }

    /// Value-only encode; accepts `[d]` or `[batch, d]` and keeps the rank.
    pub fn encode_value(&self, a: &Tensor) -> Result<Tensor> {
        let x = Self::with_rows(a, self.field_dim(), "encode")?;
        let g = Graph::new();
        let p = self.encoder.bind(&g, false);
        let z = self.encode(&p, g.constant(x))?.value();
        if a.ndim() == 1 { z.reshape([self.latent_dim()]) } else { Ok(z) }
    }

    pub fn decode_value(&self, z: &Tensor) -> Result<Tensor> {
        let x = Self::with_rows(z, self.latent_dim(), "decode")?;
        let g = Graph::new();
        let p = self.decoder.bind(&g, false);
        let a = self.decode(&p, g.constant(x))?.value();
        if z.ndim() == 1 { a.reshape([self.field_dim()]) } else { Ok(a) }
    }

    /// Rescales the latent space so encoded `data` has zero mean and unit
    /// variance per coordinate, by folding the affine map into the encoder's
    /// output layer and the decoder's input layer. Reconstructions are
    /// unchanged up to rounding. Returns the `(mean, std)` that was folded.
    pub fn normalize_latents(&mut self, data: &[Tensor]) -> Result<(Vec<f64>, Vec<f64>)> {
        if data.is_empty() {
            return Err(Error::invalid("cannot normalize latents of an empty dataset"));
        }
        let idx: Vec<usize> = (0..data.len()).collect();
        let z = self.encode_value(&stack_rows(data, &idx)?)?;
        let (n, d) = (data.len() as f64, self.latent_dim());
        let mut mean = vec![0.0; d];
        for row in z.data().chunks(d) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n;
            }
        }
        let mut std = vec![0.0; d];
        for row in z.data().chunks(d) {
            for ((s, v), m) in std.iter_mut().zip(row).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        std.iter_mut().for_each(|s| *s = s.sqrt().max(1e-8));

        // encoder: z' = (x W + b − μ) / s
        let k = self.encoder.params.len();
        let (w, b) = self.encoder.params[k - 2..].split_at_mut(1);
        let cols = d;
        for (i, v) in w[0].data_mut().iter_mut().enumerate() {
            *v /= std[i % cols];
        }
        for ((v, m), s) in b[0].data_mut().iter_mut().zip(&mean).zip(&std) {
            *v = (*v - m) / s;
        }

        // decoder: (z' s + μ) W + b = z' (diag(s) W) + (μ W + b)
        let (w, b) = self.decoder.params.split_at_mut(1);
        let out = w[0].shape()[1];
        for (o, bias) in b[0].data_mut().iter_mut().enumerate() {
            *bias += (0..d).map(|r| mean[r] * w[0].data()[r * out + o]).sum::<f64>();
        }
        for (i, v) in w[0].data_mut().iter_mut().enumerate() {
            *v *= std[i / out];
        }
        Ok((mean, std))
    }
}

/// Mean squared reconstruction error per entry, `‖a − D(E(a))‖² / (batch·dim)`.
pub fn reconstruction_loss<'g>(ae: &Autoencoder, enc: &[Var<'g>], dec: &[Var<'g>], batch: &Tensor) -> Result<Var<'g>> {
    let g = enc
        .first()
        .map(|v| v.graph())
        .ok_or_else(|| Error::invalid("encoder parameters missing"))?;
    let a = g.constant(batch.clone());
    let rec = ae.decode(dec, ae.encode(enc, a)?)?;
    rec.squared_distance(a)?.scale(1.0 / batch.len() as f64)
}

/// Trains on 1-D fields; returns the per-epoch mean loss.
pub fn train_autoencoder(ae: &mut Autoencoder, data: &[Tensor], cfg: &TrainConfig) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::invalid("autoencoder dataset is empty"));
    }
    let n_enc = ae.encoder.params.len();
    let mut params: Vec<Tensor> = ae.encoder.params.iter().chain(&ae.decoder.params).cloned().collect();
    let model = ae.clone();
    let series = fit(&mut params, data.len(), cfg, "train-ae", |_, vars, idx, _| {
        let batch = stack_rows(data, idx)?;
        reconstruction_loss(&model, &vars[..n_enc], &vars[n_enc..], &batch)
    })?;
    let dec = params.split_off(n_enc);
    ae.encoder.params = params;
    ae.decoder.params = dec;
    Ok(series)
}

/// `‖a − D(E(a))‖ / ‖a‖` per sample.
pub fn relative_reconstruction_errors(ae: &Autoencoder, data: &[Tensor]) -> Result<Vec<f64>> {
    data.iter()
        .map(|a| {
            let rec = ae.decode_value(&ae.encode_value(a)?)?;
            Ok(crate::tensor::relative_error(&rec, a))
        })
        .collect()
}

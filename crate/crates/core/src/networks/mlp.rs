use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::rng_for;
use crate::tensor::{Graph, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Activation {
    #[default]
    Tanh,
    Relu,
}

impl Activation {
    /// Kaiming gain.
    pub fn gain(self) -> f64 {
        match self {
            Activation::Tanh => 5.0 / 3.0,
            Activation::Relu => std::f64::consts::SQRT_2,
        }
    }

    pub fn apply<'g>(self, x: Var<'g>) -> Result<Var<'g>> {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.relu(),
        }
    }
}

/// Fully connected network. `widths` runs from input to output, so
/// `[4, 8, 2]` has one hidden layer of width 8.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MlpArch {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpArch {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let arch = Self { widths, activation };
        arch.validate()?;
        Ok(arch)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 3 {
            return Err(Error::invalid(format!(
                "an MLP needs at least one hidden layer, got widths {:?}",
                self.widths
            )));
        }
        if self.widths.contains(&0) {
            return Err(Error::invalid(format!("zero width in {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().expect("validated")
    }

    pub fn n_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }
}

/// Kaiming-uniform weights `U(±gain·√(3/fan_in))` and zero biases,
/// ordered `[W₀, b₀, W₁, b₁, …]` with `W_l` of shape `[fan_in, fan_out]`.
pub fn init_mlp_params(seed: u64, arch: &MlpArch) -> Result<Vec<Tensor>> {
    arch.validate()?;
    let mut rng = rng_for(seed, "mlp-init");
    let mut params = Vec::with_capacity(2 * arch.n_layers());
    for w in arch.widths.windows(2) {
        let (fan_in, fan_out) = (w[0], w[1]);
        let bound = arch.activation.gain() * (3.0 / fan_in as f64).sqrt();
        let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
        let data = (0..fan_in * fan_out).map(|_| dist.sample(&mut rng)).collect();
        params.push(Tensor::new([fan_in, fan_out], data)?);
        params.push(Tensor::zeros([fan_out]));
    }
    Ok(params)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub arch: MlpArch,
    pub params: Vec<Tensor>,
}

impl Mlp {
    pub fn new(seed: u64, arch: MlpArch) -> Result<Self> {
        let params = init_mlp_params(seed, &arch)?;
        Ok(Self { arch, params })
    }

    pub fn from_params(arch: MlpArch, params: Vec<Tensor>) -> Result<Self> {
        arch.validate()?;
        if params.len() != 2 * arch.n_layers() {
            return Err(Error::invalid(format!(
                "expected {} parameter tensors, got {}",
                2 * arch.n_layers(),
                params.len()
            )));
        }
        for (l, w) in arch.widths.windows(2).enumerate() {
            let (wt, bt) = (&params[2 * l], &params[2 * l + 1]);
            if wt.shape() != [w[0], w[1]] || bt.shape() != [w[1]] {
                return Err(Error::Shape {
                    op: "mlp layer",
                    lhs: vec![w[0], w[1]],
                    rhs: wt.shape().to_vec(),
                });
            }
        }
        Ok(Self { arch, params })
    }

    /// Zeroes the output layer so the network starts as the zero map.
    pub fn zero_output_layer(&mut self) {
        let n = self.params.len();
        for p in &mut self.params[n - 2..] {
            p.data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
    }

    pub fn bind<'g>(&self, g: &'g Graph, trainable: bool) -> Vec<Var<'g>> {
        self.params
            .iter()
            .map(|p| if trainable { g.leaf(p.clone()) } else { g.constant(p.clone()) })
            .collect()
    }

    /// `x` is `[batch, input_dim]`; the output layer is linear.
    pub fn forward<'g>(&self, params: &[Var<'g>], x: Var<'g>) -> Result<Var<'g>> {
        let shape = x.shape();
        if shape.len() != 2 || shape[1] != self.arch.input_dim() {
            return Err(Error::Shape {
                op: "mlp input",
                lhs: vec![0, self.arch.input_dim()],
                rhs: shape,
            });
        }
        let last = self.arch.n_layers() - 1;
        let mut h = x;
        for l in 0..=last {
            h = h.matmul(params[2 * l])?.add(params[2 * l + 1])?;
            if l < last {
                h = self.arch.activation.apply(h)?;
            }
        }
        Ok(h)
    }

    /// Value-only forward pass.
    pub fn eval(&self, x: &Tensor) -> Result<Tensor> {
        let g = Graph::new();
        let params = self.bind(&g, false);
        Ok(self.forward(&params, g.constant(x.clone()))?.value())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_count() {
        let arch = MlpArch::new(vec![4, 8, 2], Activation::Tanh).unwrap();
        assert_eq!(arch.param_count(), 58);
        let p = init_mlp_params(1, &arch).unwrap();
        assert_eq!(p.iter().map(Tensor::len).sum::<usize>(), 58);
    }

    #[test]
    fn init_is_deterministic_and_seeded() {
        let arch = MlpArch::new(vec![5, 7, 3], Activation::Relu).unwrap();
        assert_eq!(init_mlp_params(9, &arch).unwrap(), init_mlp_params(9, &arch).unwrap());
        assert_ne!(init_mlp_params(9, &arch).unwrap(), init_mlp_params(10, &arch).unwrap());
    }

    #[test]
    fn init_respects_bounds_and_zero_bias() {
        let arch = MlpArch::new(vec![12, 6, 1], Activation::Tanh).unwrap();
        let p = init_mlp_params(3, &arch).unwrap();
        let bound = 5.0 / 3.0 * (3.0f64 / 12.0).sqrt();
        assert!(p[0].data().iter().all(|v| v.abs() <= bound));
        assert!(p[1].data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_missing_hidden_layer() {
        assert!(MlpArch::new(vec![3, 2], Activation::Tanh).is_err());
    }

    #[test]
    fn zeroed_output_layer_gives_zero_map() {
        let mut m = Mlp::new(4, MlpArch::new(vec![3, 5, 2], Activation::Tanh).unwrap()).unwrap();
        m.zero_output_layer();
        let y = m.eval(&Tensor::new([2, 3], vec![1.0, -2.0, 0.5, 3.0, 0.1, -0.7]).unwrap()).unwrap();
        assert!(y.data().iter().all(|&v| v == 0.0));
    }
}

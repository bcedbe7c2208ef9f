//! Dense multilayer perceptron with explicit forward caches and analytic
//! backward passes.

use ndarray::{Array2, Axis};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::CoreError;
use crate::Result;

/// Per-layer nonlinearity.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Tanh,
    Sigmoid,
    Identity,
}

impl Activation {
    fn apply(&self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Tanh => z.tanh(),
            Activation::Sigmoid => sigmoid(z),
            Activation::Identity => z,
        }
    }

    /// Derivative given the pre-activation `z` and the activation value `a`.
    fn derivative(&self, z: f64, a: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - a * a,
            Activation::Sigmoid => a * (1.0 - a),
            Activation::Identity => 1.0,
        }
    }
}

/// Numerically stable logistic function.
pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// A named parameter block with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct ParamTensor {
    pub name: String,
    pub values: Array2<f64>,
    pub grad: Array2<f64>,
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, values: Array2<f64>) -> Self {
        let grad = Array2::zeros(values.raw_dim());
        ParamTensor {
            name: name.into(),
            values,
            grad,
        }
    }

    pub fn assert_finite(&self) -> Result<()> {
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(CoreError::training(format!(
                "parameter {} contains a non-finite value",
                self.name
            )));
        }
        Ok(())
    }
}

/// Architecture of a dense network: `layer_sizes[0]` inputs through
/// `layer_sizes.last()` outputs, one activation per weight layer.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MlpConfig {
    pub layer_sizes: Vec<usize>,
    pub activations: Vec<Activation>,
    pub init_scale: f64,
    pub seed: u64,
}

impl MlpConfig {
    pub fn new(layer_sizes: Vec<usize>, activations: Vec<Activation>, seed: u64) -> Self {
        MlpConfig {
            layer_sizes,
            activations,
            init_scale: 1.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(CoreError::config(
                "layer_sizes needs at least input and output".to_string(),
            ));
        }
        if self.layer_sizes.iter().any(|&s| s == 0) {
            return Err(CoreError::config("zero-width layer".to_string()));
        }
        if self.activations.len() != self.layer_sizes.len() - 1 {
            return Err(CoreError::config(format!(
                "{} activations for {} weight layers",
                self.activations.len(),
                self.layer_sizes.len() - 1
            )));
        }
        if !self.init_scale.is_finite() || self.init_scale <= 0.0 {
            return Err(CoreError::config("init_scale must be positive".to_string()));
        }
        Ok(())
    }
}

struct DenseLayer {
    w: ParamTensor,
    b: ParamTensor,
    act: Activation,
}

/// Dense network. Gradients accumulate into each parameter's `grad` until
/// [`Mlp::zero_grad`].
pub struct Mlp {
    cfg: MlpConfig,
    layers: Vec<DenseLayer>,
}

/// Forward-pass cache: layer inputs, pre-activations, and activations,
/// enough for an exact backward pass.
pub struct MlpCache {
    inputs: Vec<Array2<f64>>,
    preacts: Vec<Array2<f64>>,
    outputs: Vec<Array2<f64>>,
}

impl Mlp {
    /// Initialize weights uniformly in `±init_scale / sqrt(fan_in)`, biases
    /// at zero; deterministic per seed.
    pub fn new(cfg: MlpConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut layers = Vec::with_capacity(cfg.layer_sizes.len() - 1);
        for (i, pair) in cfg.layer_sizes.windows(2).enumerate() {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let scale = cfg.init_scale / (fan_in as f64).sqrt();
            let dist = Uniform::new_inclusive(-scale, scale);
            let w = Array2::from_shape_fn((fan_in, fan_out), |_| dist.sample(&mut rng));
            layers.push(DenseLayer {
                w: ParamTensor::new(format!("layer{i}.w"), w),
                b: ParamTensor::new(format!("layer{i}.b"), Array2::zeros((1, fan_out))),
                act: cfg.activations[i],
            });
        }
        Ok(Mlp { cfg, layers })
    }

    pub fn config(&self) -> &MlpConfig {
        &self.cfg
    }

    pub fn input_dim(&self) -> usize {
        self.cfg.layer_sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.cfg.layer_sizes.last().unwrap()
    }

    /// Forward pass over a batch (rows are examples).
    pub fn forward(&self, x: &Array2<f64>) -> Result<(Array2<f64>, MlpCache)> {
        if x.ncols() != self.input_dim() {
            return Err(CoreError::shape(format!(
                "input has {} columns, network expects {}",
                x.ncols(),
                self.input_dim()
            )));
        }
        let mut cache = MlpCache {
            inputs: Vec::with_capacity(self.layers.len()),
            preacts: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
        };
        let mut a = x.clone();
        for layer in &self.layers {
            cache.inputs.push(a.clone());
            let mut z = a.dot(&layer.w.values);
            z += &layer.b.values;
            let out = ndarray::Zip::from(&z).map_collect(|&zv| layer.act.apply(zv));
            cache.preacts.push(z);
            cache.outputs.push(out.clone());
            a = out;
        }
        Ok((a, cache))
    }

    /// Backward pass: accumulates parameter gradients and returns the
    /// gradient with respect to the input batch.
    pub fn backward(&mut self, cache: &MlpCache, upstream: &Array2<f64>) -> Result<Array2<f64>> {
        if cache.inputs.len() != self.layers.len() {
            return Err(CoreError::shape(
                "stale cache: layer count differs from network".to_string(),
            ));
        }
        let last = cache.outputs.last().expect("non-empty cache");
        if upstream.raw_dim() != last.raw_dim() {
            return Err(CoreError::shape(format!(
                "upstream gradient shape {:?} does not match output shape {:?}",
                upstream.shape(),
                last.shape()
            )));
        }
        let mut up = upstream.clone();
        for (i, layer) in self.layers.iter_mut().enumerate().rev() {
            let z = &cache.preacts[i];
            let a = &cache.outputs[i];
            if z.nrows() != up.nrows() {
                return Err(CoreError::shape("stale cache: batch size mismatch".to_string()));
            }
            // dL/dz = dL/da * act'(z)
            let dz = ndarray::Zip::from(&up)
                .and(z)
                .and(a)
                .map_collect(|&u, &zv, &av| u * layer.act.derivative(zv, av));
            layer.w.grad += &cache.inputs[i].t().dot(&dz);
            layer.b.grad += &dz.sum_axis(Axis(0)).insert_axis(Axis(0));
            up = dz.dot(&layer.w.values.t());
        }
        Ok(up)
    }

    pub fn zero_grad(&mut self) {
        for layer in &mut self.layers {
            layer.w.grad.fill(0.0);
            layer.b.grad.fill(0.0);
        }
    }

    pub fn params(&self) -> Vec<&ParamTensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &self.layers {
            out.push(&layer.w);
            out.push(&layer.b);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut ParamTensor> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for layer in &mut self.layers {
            out.push(&mut layer.w);
            out.push(&mut layer.b);
        }
        out
    }

    pub fn assert_finite(&self) -> Result<()> {
        for layer in &self.layers {
            layer.w.assert_finite()?;
            layer.b.assert_finite()?;
        }
        Ok(())
    }

    /// Overwrite all parameter values from flat tensors in `params()` order.
    pub fn load_params(&mut self, tensors: &[Array2<f64>]) -> Result<()> {
        let mut own = self.params_mut();
        if own.len() != tensors.len() {
            return Err(CoreError::shape(format!(
                "expected {} tensors, got {}",
                own.len(),
                tensors.len()
            )));
        }
        for (p, t) in own.iter_mut().zip(tensors) {
            if p.values.raw_dim() != t.raw_dim() {
                return Err(CoreError::shape(format!(
                    "tensor {} has shape {:?}, expected {:?}",
                    p.name,
                    t.shape(),
                    p.values.shape()
                )));
            }
            p.values.assign(t);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    fn identity_net(dims: Vec<usize>) -> Mlp {
        let acts = vec![Activation::Identity; dims.len() - 1];
        let mut net = Mlp::new(MlpConfig::new(dims, acts, 0)).unwrap();
        // weights = I, bias = 0
        for layer in &mut net.layers {
            let (r, c) = layer.w.values.dim();
            layer.w.values = Array2::from_shape_fn((r, c), |(i, j)| f64::from(i == j));
        }
        net
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let net = identity_net(vec![3, 3]);
        let x = array![[1.0, -2.0, 0.5], [0.0, 4.0, -1.0]];
        let (y, _) = net.forward(&x).unwrap();
        assert_eq!(y, x);
    }

    #[test]
    fn zero_sigmoid_unit_outputs_half() {
        let mut net = Mlp::new(MlpConfig::new(
            vec![1, 1],
            vec![Activation::Sigmoid],
            0,
        ))
        .unwrap();
        net.layers[0].w.values.fill(0.0);
        let (y, _) = net.forward(&array![[3.7]]).unwrap();
        assert_eq!(y[[0, 0]], 0.5);
    }

    #[test]
    fn pinned_2_2_1_net_matches_hand_computation() {
        let mut net = Mlp::new(MlpConfig::new(
            vec![2, 2, 1],
            vec![Activation::Tanh, Activation::Identity],
            0,
        ))
        .unwrap();
        net.layers[0].w.values = array![[0.5, -0.25], [1.0, 0.75]];
        net.layers[0].b.values = array![[0.1, -0.2]];
        net.layers[1].w.values = array![[2.0], [-1.0]];
        net.layers[1].b.values = array![[0.05]];
        let x = array![[0.3, -0.6]];
        // z1 = [0.3*0.5 - 0.6*1.0 + 0.1, 0.3*(-0.25) - 0.6*0.75 - 0.2]
        //    = [-0.35, -0.725]; a1 = tanh(z1)
        // y = 2*tanh(-0.35) - tanh(-0.725) + 0.05
        let expected = 2.0 * (-0.35_f64).tanh() - (-0.725_f64).tanh() + 0.05;
        let (y, _) = net.forward(&x).unwrap();
        assert_abs_diff_eq!(y[[0, 0]], expected, epsilon = 1e-14);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut net = Mlp::new(MlpConfig::new(
            vec![4, 3, 2],
            vec![Activation::Relu, Activation::Identity],
            9,
        ))
        .unwrap();
        let x = Array2::from_shape_fn((5, 4), |(i, j)| (i + j) as f64 * 0.1);
        let (y, cache) = net.forward(&x).unwrap();
        let up = Array2::zeros(y.raw_dim());
        let dx = net.backward(&cache, &up).unwrap();
        assert!(dx.iter().all(|&v| v == 0.0));
        for p in net.params() {
            assert!(p.grad.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn linear_net_mse_gradient_matches_least_squares() {
        // single linear layer, loss = 1/2 ||xW - t||^2 summed over batch:
        // dL/dW = x^T (xW - t)
        let mut net = Mlp::new(MlpConfig::new(vec![2, 1], vec![Activation::Identity], 3)).unwrap();
        net.layers[0].w.values = array![[0.4], [-0.7]];
        net.layers[0].b.values = array![[0.0]];
        let x = array![[1.0, 2.0], [3.0, -1.0], [0.5, 0.5]];
        let t = array![[1.0], [0.0], [-1.0]];
        let (y, cache) = net.forward(&x).unwrap();
        let resid = &y - &t;
        net.zero_grad();
        net.backward(&cache, &resid).unwrap();
        let expected = x.t().dot(&resid);
        for (g, e) in net.layers[0].w.grad.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(g, e, epsilon = 1e-12);
        }
    }

    #[test]
    fn shape_mismatch_errors() {
        let net = identity_net(vec![3, 3]);
        assert!(net.forward(&Array2::zeros((2, 4))).is_err());
    }

    #[test]
    fn batch_rows_are_independent() {
        let net = Mlp::new(MlpConfig::new(
            vec![3, 5, 2],
            vec![Activation::Tanh, Activation::Sigmoid],
            11,
        ))
        .unwrap();
        let x = Array2::from_shape_fn((4, 3), |(i, j)| (i as f64 - j as f64) * 0.3);
        let (y, _) = net.forward(&x).unwrap();
        // permute rows, forward, unpermute: identical
        let perm = [2usize, 0, 3, 1];
        let xp = ndarray::stack(
            Axis(0),
            &perm.iter().map(|&i| x.row(i)).collect::<Vec<_>>(),
        )
        .unwrap();
        let (yp, _) = net.forward(&xp).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            for j in 0..2 {
                assert_eq!(yp[[k, j]], y[[i, j]]);
            }
        }
    }
}

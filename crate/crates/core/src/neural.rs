//! Fully connected Q-network with leaky-ReLU hidden layers, a linear output,
//! mean-squared-error loss, exact backpropagation and Adam.
//!
//! Batches are column-major: an `inputs` matrix has one column per sample.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, Error, Result};

pub const DEFAULT_LAYER_DIMS: [usize; 7] = [4, 30, 30, 30, 30, 30, 1];
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

impl Layer {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weights: DMatrix::zeros(fan_out, fan_in),
            bias: DVector::zeros(fan_out),
        }
    }

    fn zeros_like(&self) -> Self {
        Self::zeros(self.weights.ncols(), self.weights.nrows())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    layers: Vec<Layer>,
    leaky_slope: f64,
}

/// Parameter gradients, laid out like the network.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Layer>,
}

impl Gradients {
    pub fn max_abs(&self) -> f64 {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(l.bias.iter()))
            .fold(0.0_f64, |m, g| m.max(g.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainBatch {
    /// `features x b`
    pub inputs: DMatrix<f64>,
    pub targets: Vec<f64>,
}

impl TrainBatch {
    pub fn new(inputs: DMatrix<f64>, targets: Vec<f64>) -> Result<Self> {
        check_len(inputs.ncols(), targets.len())?;
        Ok(Self { inputs, targets })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        for r in rows {
            check_len(width, r.len())?;
        }
        let inputs = DMatrix::from_fn(width, rows.len(), |i, j| rows[j][i]);
        Self::new(inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }
}

fn check_dims(dims: &[usize]) -> Result<()> {
    if dims.len() < 2 || dims.contains(&0) {
        return Err(Error::config(
            "layer_dims",
            format!("need at least two positive layer sizes, got {dims:?}"),
        ));
    }
    if *dims.last().unwrap() != 1 {
        return Err(Error::config(
            "layer_dims",
            "output layer must have width 1",
        ));
    }
    Ok(())
}

impl Mlp {
    /// He-uniform weights `U(-sqrt(6 / fan_in), sqrt(6 / fan_in))`, zero biases.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], leaky_slope: f64, rng: &mut R) -> Result<Self> {
        check_dims(dims)?;
        let layers = dims
            .windows(2)
            .map(|w| {
                let bound = (6.0 / w[0] as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-bound..bound)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Ok(Self {
            layers,
            leaky_slope,
        })
    }

    pub fn zeros(dims: &[usize], leaky_slope: f64) -> Result<Self> {
        check_dims(dims)?;
        Ok(Self {
            layers: dims.windows(2).map(|w| Layer::zeros(w[0], w[1])).collect(),
            leaky_slope,
        })
    }

    pub fn from_layers(layers: Vec<Layer>, leaky_slope: f64) -> Result<Self> {
        let mut dims = vec![layers.first().map_or(0, |l| l.weights.ncols())];
        for l in &layers {
            check_len(*dims.last().unwrap(), l.weights.ncols())?;
            check_len(l.weights.nrows(), l.bias.len())?;
            dims.push(l.weights.nrows());
        }
        check_dims(&dims)?;
        Ok(Self {
            layers,
            leaky_slope,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn leaky_slope(&self) -> f64 {
        self.leaky_slope
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut dims = vec![self.input_dim()];
        dims.extend(self.layers.iter().map(|l| l.weights.nrows()));
        dims
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.bias.len())
            .sum()
    }

    fn activate(&self, z: &mut DMatrix<f64>) {
        let s = self.leaky_slope;
        z.apply(|x| {
            if *x < 0.0 {
                *x *= s
            }
        });
    }

    fn affine(layer: &Layer, input: &DMatrix<f64>) -> DMatrix<f64> {
        let mut z = &layer.weights * input;
        for mut col in z.column_iter_mut() {
            col += &layer.bias;
        }
        z
    }

    /// Q-values for every column of `inputs`.
    pub fn forward_batch(&self, inputs: &DMatrix<f64>) -> Result<Vec<f64>> {
        check_len(self.input_dim(), inputs.nrows())?;
        if inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        let mut a = Self::affine(&self.layers[0], inputs);
        for layer in &self.layers[1..] {
            self.activate(&mut a);
            a = Self::affine(layer, &a);
        }
        Ok(a.row(0).iter().copied().collect())
    }

    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        let x = DMatrix::from_column_slice(input.len(), 1, input);
        Ok(self.forward_batch(&x)?[0])
    }

    /// Batch loss and exact gradients of the mean squared error.
    pub fn backward(&self, batch: &TrainBatch) -> Result<(f64, Gradients)> {
        check_len(self.input_dim(), batch.inputs.nrows())?;
        if batch.is_empty() {
            return Err(Error::EmptyInput("training batch"));
        }
        if batch.inputs.iter().any(|x| !x.is_finite()) {
            return Err(Error::Numeric("non-finite network input".into()));
        }
        let b = batch.len();
        // activations[l] is the input to layer l; pre[l] its pre-activation output
        let mut activations = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut a = batch.inputs.clone();
        for (i, layer) in self.layers.iter().enumerate() {
            let z = Self::affine(layer, &a);
            activations.push(a);
            a = z.clone();
            if i + 1 < self.layers.len() {
                self.activate(&mut a);
            }
            pre.push(z);
        }
        let pred = a.row(0);
        let mut loss = 0.0;
        let mut delta = DMatrix::zeros(1, b);
        for j in 0..b {
            let err = pred[j] - batch.targets[j];
            loss += err * err;
            delta[(0, j)] = 2.0 * err / b as f64;
        }
        loss /= b as f64;
        if !loss.is_finite() {
            return Err(Error::Numeric(format!("loss overflow ({loss})")));
        }

        let mut grads: Vec<Layer> = self.layers.iter().map(Layer::zeros_like).collect();
        for l in (0..self.layers.len()).rev() {
            grads[l].weights = &delta * activations[l].transpose();
            grads[l].bias = delta.column_sum();
            if l > 0 {
                let mut back = self.layers[l].weights.transpose() * &delta;
                let s = self.leaky_slope;
                back.zip_apply(&pre[l - 1], |d, z| {
                    if z < 0.0 {
                        *d *= s
                    }
                });
                delta = back;
            }
        }
        let g = Gradients { layers: grads };
        if !g.max_abs().is_finite() {
            return Err(Error::Numeric("gradient overflow".into()));
        }
        Ok((loss, g))
    }

    /// Copies every parameter of `src` into `self`.
    pub fn copy_weights_from(&mut self, src: &Mlp) -> Result<()> {
        if self.layer_dims() != src.layer_dims() {
            return Err(Error::Shape {
                expected: self.param_count(),
                got: src.param_count(),
            });
        }
        self.layers.clone_from(&src.layers);
        self.leaky_slope = src.leaky_slope;
        Ok(())
    }

    pub fn snapshot(&self) -> MlpSnapshot {
        MlpSnapshot {
            layer_dims: self.layer_dims(),
            leaky_slope: self.leaky_slope,
            layers: self
                .layers
                .iter()
                .map(|l| LayerSnapshot {
                    weights: l.weights.transpose().iter().copied().collect(),
                    bias: l.bias.iter().copied().collect(),
                })
                .collect(),
        }
    }

    pub fn from_snapshot(s: &MlpSnapshot) -> Result<Self> {
        check_dims(&s.layer_dims)?;
        check_len(s.layer_dims.len() - 1, s.layers.len())?;
        let layers = s
            .layers
            .iter()
            .zip(s.layer_dims.windows(2))
            .map(|(l, d)| {
                check_len(d[0] * d[1], l.weights.len())?;
                check_len(d[1], l.bias.len())?;
                Ok(Layer {
                    weights: DMatrix::from_row_slice(d[1], d[0], &l.weights),
                    bias: DVector::from_column_slice(&l.bias),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(layers, s.leaky_slope)
    }
}

/// Serialized network: layers in order, weights row-major (`out x in`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSnapshot {
    pub layer_dims: Vec<usize>,
    pub leaky_slope: f64,
    pub layers: Vec<LayerSnapshot>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSnapshot {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

pub fn loss_mse(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_len(pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::EmptyInput("loss of empty batch"));
    }
    let sum: f64 = pred
        .iter()
        .zip(target)
        .map(|(p, t)| (t - p) * (t - p))
        .sum();
    Ok(sum / pred.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    first: Vec<Layer>,
    second: Vec<Layer>,
    step: u64,
}

impl AdamState {
    pub fn new(net: &Mlp, lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            first: net.layers.iter().map(Layer::zeros_like).collect(),
            second: net.layers.iter().map(Layer::zeros_like).collect(),
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn update(&mut self, net: &mut Mlp, grads: &Gradients) -> Result<()> {
        check_len(self.first.len(), net.layers.len())?;
        check_len(self.first.len(), grads.layers.len())?;
        for ((m, g), p) in self.first.iter().zip(&grads.layers).zip(&net.layers) {
            check_len(m.weights.len(), g.weights.len())?;
            check_len(m.weights.len(), p.weights.len())?;
            check_len(m.bias.len(), g.bias.len())?;
        }
        self.step += 1;
        let (b1, b2) = (self.beta1, self.beta2);
        let c1 = 1.0 - b1.powf(self.step as f64);
        let c2 = 1.0 - b2.powf(self.step as f64);
        let (lr, eps) = (self.lr, self.eps);
        let apply = |p: &mut [f64], m: &mut [f64], v: &mut [f64], g: &[f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / c1;
                let vhat = v[i] / c2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        };
        for (l, layer) in net.layers.iter_mut().enumerate() {
            let g = &grads.layers[l];
            apply(
                layer.weights.as_mut_slice(),
                self.first[l].weights.as_mut_slice(),
                self.second[l].weights.as_mut_slice(),
                g.weights.as_slice(),
            );
            apply(
                layer.bias.as_mut_slice(),
                self.first[l].bias.as_mut_slice(),
                self.second[l].bias.as_mut_slice(),
                g.bias.as_slice(),
            );
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;

    fn random_batch(seed: u64, width: usize, b: usize) -> TrainBatch {
        let mut rng = rng_from_seed(seed);
        let inputs = DMatrix::from_fn(width, b, |_, _| rng.random_range(-1.0..1.0));
        let targets = (0..b).map(|_| rng.random_range(-2.0..2.0)).collect();
        TrainBatch::new(inputs, targets).unwrap()
    }

    #[test]
    fn zero_net_outputs_zero() {
        let net = Mlp::zeros(&DEFAULT_LAYER_DIMS, 0.01).unwrap();
        assert_eq!(net.forward(&[0.3, -0.2, 1.0, -1.0]).unwrap(), 0.0);
    }

    #[test]
    fn single_leaky_path() {
        // 1 -> 1 -> 1 with unit weights: input -1 gives -0.01 after the hidden unit
        let layers = vec![
            Layer {
                weights: DMatrix::from_element(1, 1, 1.0),
                bias: DVector::zeros(1),
            },
            Layer {
                weights: DMatrix::from_element(1, 1, 1.0),
                bias: DVector::zeros(1),
            },
        ];
        let net = Mlp::from_layers(layers, 0.01).unwrap();
        assert!((net.forward(&[-1.0]).unwrap() + 0.01).abs() < 1e-15);
        assert_eq!(net.forward(&[2.0]).unwrap(), 2.0);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Mlp::new(&DEFAULT_LAYER_DIMS, 0.01, &mut rng_from_seed(3)).unwrap();
        let b = Mlp::new(&DEFAULT_LAYER_DIMS, 0.01, &mut rng_from_seed(3)).unwrap();
        assert_eq!(a, b);
        let x = [0.1, 0.2, -0.3, 0.4];
        assert_eq!(
            a.forward(&x).unwrap().to_bits(),
            b.forward(&x).unwrap().to_bits()
        );
        assert_eq!(a.param_count(), 4 * 30 + 30 + 4 * (30 * 30 + 30) + 31);
    }

    #[test]
    fn non_finite_input_rejected() {
        let net = Mlp::zeros(&DEFAULT_LAYER_DIMS, 0.01).unwrap();
        assert!(matches!(
            net.forward(&[f64::NAN, 0.0, 0.0, 0.0]),
            Err(Error::Numeric(_))
        ));
    }

    #[test]
    fn bad_dims_rejected() {
        assert!(Mlp::zeros(&[4], 0.01).is_err());
        assert!(Mlp::zeros(&[4, 0, 1], 0.01).is_err());
        assert!(Mlp::zeros(&[4, 3, 2], 0.01).is_err());
    }

    #[test]
    fn mse_values() {
        assert_eq!(loss_mse(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(loss_mse(&[0.0], &[2.0]).unwrap(), 4.0);
        assert!(loss_mse(&[0.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn zero_net_gradients() {
        // all activations vanish, so only the output bias sees a gradient and
        // with zero targets even that is zero
        let net = Mlp::zeros(&DEFAULT_LAYER_DIMS, 0.01).unwrap();
        let mut batch = random_batch(1, 4, 8);
        batch.targets = vec![0.0; 8];
        let (loss, g) = net.backward(&batch).unwrap();
        assert_eq!(loss, 0.0);
        assert_eq!(g.max_abs(), 0.0);
    }

    #[test]
    fn duplicated_batch_same_gradient() {
        let net = Mlp::new(&[4, 8, 8, 1], 0.01, &mut rng_from_seed(9)).unwrap();
        let batch = random_batch(2, 4, 5);
        let mut inputs = DMatrix::zeros(4, 10);
        inputs.columns_mut(0, 5).copy_from(&batch.inputs);
        inputs.columns_mut(5, 5).copy_from(&batch.inputs);
        let mut targets = batch.targets.clone();
        targets.extend_from_slice(&batch.targets);
        let doubled = TrainBatch::new(inputs, targets).unwrap();
        let (l1, g1) = net.backward(&batch).unwrap();
        let (l2, g2) = net.backward(&doubled).unwrap();
        assert!((l1 - l2).abs() < 1e-12);
        for (a, b) in g1.layers.iter().zip(&g2.layers) {
            assert!((&a.weights - &b.weights).abs().max() < 1e-12);
            assert!((&a.bias - &b.bias).abs().max() < 1e-12);
        }
    }

    #[test]
    fn adam_first_step_moves_by_lr() {
        let layers = vec![Layer {
            weights: DMatrix::from_element(1, 1, 0.5),
            bias: DVector::zeros(1),
        }];
        let mut net = Mlp::from_layers(layers, 0.01).unwrap();
        let mut adam = AdamState::new(&net, 1e-4);
        let grads = Gradients {
            layers: vec![Layer {
                weights: DMatrix::from_element(1, 1, 1.0),
                bias: DVector::zeros(1),
            }],
        };
        adam.update(&mut net, &grads).unwrap();
        let w = net.layers()[0].weights[(0, 0)];
        assert!((0.5 - w - 1e-4).abs() < 1e-11, "{w}");
        assert_eq!(net.layers()[0].bias[0], 0.0);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn adam_zero_gradient_is_noop() {
        let mut net = Mlp::new(&[4, 5, 1], 0.01, &mut rng_from_seed(4)).unwrap();
        let before = net.clone();
        let mut adam = AdamState::new(&net, 1e-3);
        let zero = Gradients {
            layers: net.layers().iter().map(Layer::zeros_like).collect(),
        };
        adam.update(&mut net, &zero).unwrap();
        assert_eq!(net, before);
    }

    #[test]
    fn adam_shape_mismatch() {
        let mut net = Mlp::zeros(&[4, 5, 1], 0.01).unwrap();
        let other = Mlp::zeros(&[4, 6, 1], 0.01).unwrap();
        let mut adam = AdamState::new(&net, 1e-3);
        let g = Gradients {
            layers: other.layers().iter().map(Layer::zeros_like).collect(),
        };
        assert!(matches!(
            adam.update(&mut net, &g),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn copy_weights() {
        let src = Mlp::new(&DEFAULT_LAYER_DIMS, 0.01, &mut rng_from_seed(11)).unwrap();
        let keep = src.clone();
        let mut dst = Mlp::zeros(&DEFAULT_LAYER_DIMS, 0.01).unwrap();
        dst.copy_weights_from(&src).unwrap();
        assert_eq!(src, keep);
        let mut rng = rng_from_seed(12);
        for _ in 0..100 {
            let x: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
            assert_eq!(src.forward(&x).unwrap(), dst.forward(&x).unwrap());
        }
        let once = dst.clone();
        dst.copy_weights_from(&src).unwrap();
        assert_eq!(dst, once);
        let mut wrong = Mlp::zeros(&[4, 3, 1], 0.01).unwrap();
        assert!(wrong.copy_weights_from(&src).is_err());
    }

    #[test]
    fn snapshot_round_trip() {
        let net = Mlp::new(&[4, 3, 2, 1], 0.02, &mut rng_from_seed(13)).unwrap();
        let json = serde_json::to_string(&net.snapshot()).unwrap();
        let back: MlpSnapshot = serde_json::from_str(&json).unwrap();
        assert_eq!(Mlp::from_snapshot(&back).unwrap(), net);
    }
}

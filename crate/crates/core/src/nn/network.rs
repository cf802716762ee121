use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::matrix::Matrix;
use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    Tanh,
}

/// Architecture and regularisation of a feedforward network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    /// Input width, hidden widths, output width.
    pub layer_sizes: Vec<usize>,
    pub hidden_activation: Activation,
    /// Inverted dropout on hidden activations, in [0, 1).
    pub dropout_rate: f64,
    pub l1_coeff: f64,
    pub l2_coeff: f64,
    pub seed: u64,
}

impl NetworkSpec {
    pub fn new(layer_sizes: Vec<usize>, seed: u64) -> Self {
        NetworkSpec {
            layer_sizes,
            hidden_activation: Activation::Tanh,
            dropout_rate: 0.0,
            l1_coeff: 0.0,
            l2_coeff: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.layer_sizes.len() < 2 {
            return Err(Error::Contract("a network needs at least input and output layers".into()));
        }
        if self.layer_sizes.contains(&0) {
            return Err(Error::Contract(format!("zero-width layer in {:?}", self.layer_sizes)));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Contract(format!("dropout rate {} not in [0, 1)", self.dropout_rate)));
        }
        if !(self.l1_coeff >= 0.0 && self.l2_coeff >= 0.0) {
            return Err(Error::Contract("regularisation coefficients must be non-negative".into()));
        }
        Ok(())
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().expect("validated")
    }
}

/// Affine layer `y = x · W + b`, with `W` stored input-major (in × out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub spec: NetworkSpec,
    pub layers: Vec<Dense>,
    generation: u64,
}

/// Everything backward needs from a forward call.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    generation: u64,
    /// Input to each layer (post-dropout for hidden layers).
    layer_inputs: Vec<Matrix>,
    /// tanh outputs of each hidden layer, before dropout.
    hidden: Vec<Matrix>,
    /// Scaled keep-masks per hidden layer, when dropout was applied.
    masks: Vec<Option<Vec<f64>>>,
    pub output: Matrix,
}

#[derive(Debug, Clone)]
pub struct NetworkGrads {
    pub weights: Vec<Matrix>,
    pub biases: Vec<Vec<f64>>,
    /// dLoss/dInput, when requested.
    pub input: Option<Matrix>,
}

impl NetworkGrads {
    /// Flattens to the block order of [`Parameters::param_blocks`].
    pub fn into_blocks(self) -> Vec<Vec<f64>> {
        self.weights
            .into_iter()
            .zip(self.biases)
            .flat_map(|(w, b)| [w.data, b])
            .collect()
    }
}

impl Network {
    /// Glorot-uniform weights, zero biases.
    pub fn new(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                let data = (0..fan_in * fan_out).map(|_| rng.gen_range(-bound..bound)).collect();
                Dense { weights: Matrix { rows: fan_in, cols: fan_out, data }, bias: vec![0.0; fan_out] }
            })
            .collect();
        Ok(Network { spec, layers, generation: 0 })
    }

    pub fn zeros(spec: NetworkSpec) -> Result<Self> {
        spec.validate()?;
        let layers = spec
            .layer_sizes
            .windows(2)
            .map(|w| Dense { weights: Matrix::zeros(w[0], w[1]), bias: vec![0.0; w[1]] })
            .collect();
        Ok(Network { spec, layers, generation: 0 })
    }

    /// Builds a network from explicit layers, checking them against `spec`.
    pub fn from_layers(spec: NetworkSpec, layers: Vec<Dense>) -> Result<Self> {
        spec.validate()?;
        let ok = layers.len() + 1 == spec.layer_sizes.len()
            && layers.iter().zip(spec.layer_sizes.windows(2)).all(|(l, w)| {
                l.weights.rows == w[0]
                    && l.weights.cols == w[1]
                    && l.weights.data.len() == w[0] * w[1]
                    && l.bias.len() == w[1]
            });
        if !ok {
            return Err(Error::Contract(format!("layer shapes do not match {:?}", spec.layer_sizes)));
        }
        Ok(Network { spec, layers, generation: 0 })
    }

    pub fn output_bias_mut(&mut self) -> &mut [f64] {
        self.generation += 1;
        &mut self.layers.last_mut().expect("at least one layer").bias
    }

    pub fn output_weights_mut(&mut self) -> &mut Matrix {
        self.generation += 1;
        &mut self.layers.last_mut().expect("at least one layer").weights
    }

    /// Runs the network. Passing a RNG switches on train mode (dropout).
    pub fn forward(&self, batch: &Matrix, dropout: Option<&mut ChaCha8Rng>) -> Result<ForwardPass> {
        if batch.cols != self.spec.input_size() {
            return Err(Error::Contract(format!(
                "batch width {} does not match input size {}",
                batch.cols,
                self.spec.input_size()
            )));
        }
        let rate = self.spec.dropout_rate;
        let mut rng = dropout.filter(|_| rate > 0.0);
        let n_layers = self.layers.len();
        let mut layer_inputs = Vec::with_capacity(n_layers);
        let mut hidden = Vec::with_capacity(n_layers - 1);
        let mut masks = Vec::with_capacity(n_layers - 1);
        let mut current = batch.clone();
        for (l, layer) in self.layers.iter().enumerate() {
            let mut z = current.matmul(&layer.weights);
            for r in 0..z.rows {
                for (v, b) in z.row_mut(r).iter_mut().zip(&layer.bias) {
                    *v += b;
                }
            }
            layer_inputs.push(current);
            if l + 1 == n_layers {
                return Ok(ForwardPass { generation: self.generation, layer_inputs, hidden, masks, output: z });
            }
            for v in z.data.iter_mut() {
                *v = v.tanh();
            }
            let mut next = z.clone();
            let mask = rng.as_mut().map(|rng| {
                let keep = 1.0 / (1.0 - rate);
                let m: Vec<f64> = (0..next.data.len())
                    .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { keep })
                    .collect();
                for (v, k) in next.data.iter_mut().zip(&m) {
                    *v *= k;
                }
                m
            });
            hidden.push(z);
            masks.push(mask);
            current = next;
        }
        unreachable!("loop returns at the output layer")
    }

    /// Eval-mode output.
    pub fn predict(&self, batch: &Matrix) -> Result<Matrix> {
        Ok(self.forward(batch, None)?.output)
    }

    /// Reverse-mode gradients, including the elastic-net terms on weights.
    pub fn backward(&self, pass: &ForwardPass, d_output: &Matrix, want_input_grad: bool) -> Result<NetworkGrads> {
        if pass.generation != self.generation {
            return Err(Error::Contract("activations are stale: parameters changed since forward".into()));
        }
        if d_output.rows != pass.output.rows || d_output.cols != pass.output.cols {
            return Err(Error::Contract("dLoss/dOutput shape does not match the forward output".into()));
        }
        let n_layers = self.layers.len();
        let mut weights = vec![Matrix::zeros(0, 0); n_layers];
        let mut biases = vec![Vec::new(); n_layers];
        let mut delta = d_output.clone();
        let mut input_grad = None;
        for l in (0..n_layers).rev() {
            let layer = &self.layers[l];
            let mut dw = pass.layer_inputs[l].t_matmul(&delta);
            for (g, w) in dw.data.iter_mut().zip(&layer.weights.data) {
                *g += self.spec.l1_coeff * sign(*w) + 2.0 * self.spec.l2_coeff * w;
            }
            weights[l] = dw;
            biases[l] = delta.column_sums();
            if l == 0 {
                if want_input_grad {
                    input_grad = Some(delta.matmul_t(&layer.weights));
                }
                break;
            }
            let mut d_in = delta.matmul_t(&layer.weights);
            if let Some(mask) = &pass.masks[l - 1] {
                for (d, m) in d_in.data.iter_mut().zip(mask) {
                    *d *= m;
                }
            }
            for (d, h) in d_in.data.iter_mut().zip(&pass.hidden[l - 1].data) {
                *d *= 1.0 - h * h;
            }
            delta = d_in;
        }
        Ok(NetworkGrads { weights, biases, input: input_grad })
    }

    /// `λ1 Σ|W| + λ2 Σ W²` over all weight matrices.
    pub fn regularization_penalty(&self) -> f64 {
        let (l1, l2) = (self.spec.l1_coeff, self.spec.l2_coeff);
        if l1 == 0.0 && l2 == 0.0 {
            return 0.0;
        }
        self.layers
            .iter()
            .flat_map(|l| l.weights.data.iter())
            .map(|w| l1 * w.abs() + l2 * w * w)
            .sum()
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl Parameters for Network {
    fn param_blocks(&self) -> Vec<(String, &[f64])> {
        self.layers
            .iter()
            .enumerate()
            .flat_map(|(i, l)| {
                [
                    (format!("layer{i}.weights"), l.weights.data.as_slice()),
                    (format!("layer{i}.bias"), l.bias.as_slice()),
                ]
            })
            .collect()
    }

    fn param_blocks_mut(&mut self) -> Vec<&mut [f64]> {
        self.generation += 1;
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }
}

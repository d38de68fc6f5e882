//! Trainable score models with exact analytic gradients.
//!
//! Two fixed architectures — a linear scorer and a one-hidden-layer MLP —
//! cover every model in the pipeline: the deferral policy, the cardinality
//! function, and the two-stage base predictor. Backpropagation is written
//! by hand for both so gradients stay auditable against finite
//! differences.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Tanh,
    Relu,
}

impl Activation {
    fn apply(&self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
        }
    }

    fn derivative(&self, pre: f64) -> f64 {
        match self {
            Activation::Tanh => {
                let t = pre.tanh();
                1.0 - t * t
            }
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "architecture")]
pub enum Architecture {
    Linear {
        input_dim: usize,
        output_dim: usize,
    },
    Mlp {
        input_dim: usize,
        hidden_dim: usize,
        output_dim: usize,
        activation: Activation,
    },
}

impl Architecture {
    pub fn input_dim(&self) -> usize {
        match self {
            Architecture::Linear { input_dim, .. } | Architecture::Mlp { input_dim, .. } => {
                *input_dim
            }
        }
    }

    pub fn output_dim(&self) -> usize {
        match self {
            Architecture::Linear { output_dim, .. } | Architecture::Mlp { output_dim, .. } => {
                *output_dim
            }
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Architecture::Linear {
                input_dim,
                output_dim,
            } => output_dim * input_dim + output_dim,
            Architecture::Mlp {
                input_dim,
                hidden_dim,
                output_dim,
                ..
            } => hidden_dim * input_dim + hidden_dim + output_dim * hidden_dim + output_dim,
        }
    }
}

/// Activations cached by [`ScoreModel::forward_cached`] for the backward
/// pass. Empty for the linear architecture.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    hidden_pre: Vec<f64>,
    hidden_post: Vec<f64>,
}

/// A parametric scorer: flat parameter vector plus the architecture that
/// interprets it.
///
/// Parameter layout: `[W (out x in, row-major), b]` for linear;
/// `[W1 (hidden x in), b1, W2 (out x hidden), b2]` for the MLP.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreModel {
    arch: Architecture,
    params: Vec<f64>,
}

impl ScoreModel {
    /// Seeded initialization: every layer is drawn uniform(-s, s) with
    /// `s = 1/sqrt(fan_in)` of that layer.
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(arch.param_count());
        match arch {
            Architecture::Linear {
                input_dim,
                output_dim,
            } => {
                let s = 1.0 / (input_dim as f64).sqrt();
                for _ in 0..(output_dim * input_dim + output_dim) {
                    params.push(rng.random_range(-s..s));
                }
            }
            Architecture::Mlp {
                input_dim,
                hidden_dim,
                output_dim,
                ..
            } => {
                let s1 = 1.0 / (input_dim as f64).sqrt();
                for _ in 0..(hidden_dim * input_dim + hidden_dim) {
                    params.push(rng.random_range(-s1..s1));
                }
                let s2 = 1.0 / (hidden_dim as f64).sqrt();
                for _ in 0..(output_dim * hidden_dim + output_dim) {
                    params.push(rng.random_range(-s2..s2));
                }
            }
        }
        Self { arch, params }
    }

    pub fn from_params(arch: Architecture, params: Vec<f64>) -> Result<Self> {
        if params.len() != arch.param_count() {
            return Err(Error::LengthMismatch {
                what: "model parameters",
                expected: arch.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { arch, params })
    }

    pub fn arch(&self) -> Architecture {
        self.arch
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok(self.forward_cached(x)?.0)
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<(Vec<f64>, ForwardCache)> {
        if x.len() != self.arch.input_dim() {
            return Err(Error::LengthMismatch {
                what: "feature vector",
                expected: self.arch.input_dim(),
                found: x.len(),
            });
        }
        match self.arch {
            Architecture::Linear {
                input_dim,
                output_dim,
            } => {
                let (w, b) = self.params.split_at(output_dim * input_dim);
                let mut out = vec![0.0; output_dim];
                for o in 0..output_dim {
                    let row = &w[o * input_dim..(o + 1) * input_dim];
                    out[o] = b[o] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                }
                Ok((out, ForwardCache::default()))
            }
            Architecture::Mlp {
                input_dim,
                hidden_dim,
                output_dim,
                activation,
            } => {
                let (w1, rest) = self.params.split_at(hidden_dim * input_dim);
                let (b1, rest) = rest.split_at(hidden_dim);
                let (w2, b2) = rest.split_at(output_dim * hidden_dim);
                let mut pre = vec![0.0; hidden_dim];
                let mut post = vec![0.0; hidden_dim];
                for h in 0..hidden_dim {
                    let row = &w1[h * input_dim..(h + 1) * input_dim];
                    pre[h] = b1[h] + row.iter().zip(x).map(|(wi, xi)| wi * xi).sum::<f64>();
                    post[h] = activation.apply(pre[h]);
                }
                let mut out = vec![0.0; output_dim];
                for o in 0..output_dim {
                    let row = &w2[o * hidden_dim..(o + 1) * hidden_dim];
                    out[o] = b2[o] + row.iter().zip(&post).map(|(wi, hi)| wi * hi).sum::<f64>();
                }
                Ok((
                    out,
                    ForwardCache {
                        hidden_pre: pre,
                        hidden_post: post,
                    },
                ))
            }
        }
    }

    /// Exact gradient of the loss with respect to the flat parameter
    /// vector, given the upstream gradient with respect to the scores.
    pub fn backward(&self, x: &[f64], cache: &ForwardCache, upstream: &[f64]) -> Result<Vec<f64>> {
        if upstream.len() != self.arch.output_dim() {
            return Err(Error::LengthMismatch {
                what: "upstream gradient",
                expected: self.arch.output_dim(),
                found: upstream.len(),
            });
        }
        let mut grad = vec![0.0; self.params.len()];
        self.backward_into(x, cache, upstream, &mut grad)?;
        Ok(grad)
    }

    /// Accumulating variant used by the trainers: adds this example's
    /// parameter gradient into `grad`.
    pub fn backward_into(
        &self,
        x: &[f64],
        cache: &ForwardCache,
        upstream: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        if grad.len() != self.params.len() {
            return Err(Error::LengthMismatch {
                what: "gradient buffer",
                expected: self.params.len(),
                found: grad.len(),
            });
        }
        match self.arch {
            Architecture::Linear {
                input_dim,
                output_dim,
            } => {
                let (gw, gb) = grad.split_at_mut(output_dim * input_dim);
                for o in 0..output_dim {
                    let g = upstream[o];
                    gb[o] += g;
                    let row = &mut gw[o * input_dim..(o + 1) * input_dim];
                    for (r, xi) in row.iter_mut().zip(x) {
                        *r += g * xi;
                    }
                }
            }
            Architecture::Mlp {
                input_dim,
                hidden_dim,
                output_dim,
                activation,
            } => {
                let w2_offset = hidden_dim * input_dim + hidden_dim;
                let w2 = &self.params[w2_offset..w2_offset + output_dim * hidden_dim];
                // dL/dh, then chain through the activation.
                let mut dhidden = vec![0.0; hidden_dim];
                for o in 0..output_dim {
                    let g = upstream[o];
                    let row = &w2[o * hidden_dim..(o + 1) * hidden_dim];
                    for (dh, wi) in dhidden.iter_mut().zip(row) {
                        *dh += g * wi;
                    }
                }
                for (dh, pre) in dhidden.iter_mut().zip(&cache.hidden_pre) {
                    *dh *= activation.derivative(*pre);
                }
                let (gw1, rest) = grad.split_at_mut(hidden_dim * input_dim);
                let (gb1, rest) = rest.split_at_mut(hidden_dim);
                let (gw2, gb2) = rest.split_at_mut(output_dim * hidden_dim);
                for h in 0..hidden_dim {
                    gb1[h] += dhidden[h];
                    let row = &mut gw1[h * input_dim..(h + 1) * input_dim];
                    for (r, xi) in row.iter_mut().zip(x) {
                        *r += dhidden[h] * xi;
                    }
                }
                for o in 0..output_dim {
                    let g = upstream[o];
                    gb2[o] += g;
                    let row = &mut gw2[o * hidden_dim..(o + 1) * hidden_dim];
                    for (r, hi) in row.iter_mut().zip(&cache.hidden_post) {
                        *r += g * hi;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn to_checkpoint(&self, seed: u64) -> Checkpoint {
        let (name, dims, activation) = match self.arch {
            Architecture::Linear {
                input_dim,
                output_dim,
            } => ("linear", vec![input_dim, output_dim], None),
            Architecture::Mlp {
                input_dim,
                hidden_dim,
                output_dim,
                activation,
            } => (
                "mlp",
                vec![input_dim, hidden_dim, output_dim],
                Some(activation),
            ),
        };
        Checkpoint {
            architecture: name.to_string(),
            dims,
            activation,
            seed,
            theta: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let arch = match (ckpt.architecture.as_str(), ckpt.dims.as_slice()) {
            ("linear", [input_dim, output_dim]) => Architecture::Linear {
                input_dim: *input_dim,
                output_dim: *output_dim,
            },
            ("mlp", [input_dim, hidden_dim, output_dim]) => Architecture::Mlp {
                input_dim: *input_dim,
                hidden_dim: *hidden_dim,
                output_dim: *output_dim,
                activation: ckpt.activation.unwrap_or(Activation::Tanh),
            },
            _ => {
                return Err(Error::InvalidParameter(format!(
                    "unknown checkpoint architecture {:?} with dims {:?}",
                    ckpt.architecture, ckpt.dims
                )))
            }
        };
        Self::from_params(arch, ckpt.theta.clone())
    }
}

/// On-disk model snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub architecture: String,
    pub dims: Vec<usize>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub activation: Option<Activation>,
    pub seed: u64,
    pub theta: Vec<f64>,
}

impl Checkpoint {
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        serde_json::to_writer(std::io::BufWriter::new(file), self)?;
        Ok(())
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Ok(serde_json::from_reader(std::io::BufReader::new(file))?)
    }
}

/// Plain SGD update with optional momentum:
/// `v <- m v + g`, `theta <- theta - lr v`. With `m = 0` this is exactly
/// `theta - lr g`.
pub fn sgd_step(params: &mut [f64], velocity: &mut [f64], grad: &[f64], lr: f64, momentum: f64) {
    debug_assert_eq!(params.len(), velocity.len());
    debug_assert_eq!(params.len(), grad.len());
    for i in 0..params.len() {
        velocity[i] = momentum * velocity[i] + grad[i];
        params[i] -= lr * velocity[i];
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_zero_weights_return_bias() {
        let arch = Architecture::Linear {
            input_dim: 3,
            output_dim: 2,
        };
        let mut params = vec![0.0; arch.param_count()];
        params[6] = 0.1;
        params[7] = 0.2;
        let model = ScoreModel::from_params(arch, params).unwrap();
        let out = model.forward(&[5.0, -1.0, 2.0]).unwrap();
        assert_eq!(out, vec![0.1, 0.2]);
    }

    #[test]
    fn linear_matrix_product() {
        let arch = Architecture::Linear {
            input_dim: 1,
            output_dim: 2,
        };
        let model = ScoreModel::from_params(arch, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
        assert_eq!(model.forward(&[2.0]).unwrap(), vec![2.0, -2.0]);
    }

    #[test]
    fn mlp_zero_weights_return_output_bias() {
        let arch = Architecture::Mlp {
            input_dim: 2,
            hidden_dim: 4,
            output_dim: 3,
            activation: Activation::Tanh,
        };
        let mut params = vec![0.0; arch.param_count()];
        let b2_start = arch.param_count() - 3;
        params[b2_start..].copy_from_slice(&[0.5, -0.5, 0.0]);
        let model = ScoreModel::from_params(arch, params).unwrap();
        assert_eq!(model.forward(&[1.0, 2.0]).unwrap(), vec![0.5, -0.5, 0.0]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradient() {
        let arch = Architecture::Mlp {
            input_dim: 2,
            hidden_dim: 3,
            output_dim: 2,
            activation: Activation::Relu,
        };
        let model = ScoreModel::init(arch, 3);
        let (_, cache) = model.forward_cached(&[0.4, -0.2]).unwrap();
        let grad = model.backward(&[0.4, -0.2], &cache, &[0.0, 0.0]).unwrap();
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn linear_gradient_of_single_score_is_one_hot_bias_and_input_row() {
        let arch = Architecture::Linear {
            input_dim: 2,
            output_dim: 3,
        };
        let model = ScoreModel::init(arch, 9);
        let x = [1.5, -2.0];
        let (_, cache) = model.forward_cached(&x).unwrap();
        // Loss = score_2, so upstream is one-hot at output 2.
        let grad = model.backward(&x, &cache, &[0.0, 1.0, 0.0]).unwrap();
        // W rows: [0..2] out1, [2..4] out2, [4..6] out3; biases at [6..9].
        assert_eq!(&grad[0..2], &[0.0, 0.0]);
        assert_eq!(&grad[2..4], &[1.5, -2.0]);
        assert_eq!(&grad[4..6], &[0.0, 0.0]);
        assert_eq!(&grad[6..9], &[0.0, 1.0, 0.0]);
    }

    fn finite_difference_check(arch: Architecture, seed: u64) {
        let model = ScoreModel::init(arch, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xfeed);
        let x: Vec<f64> = (0..arch.input_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let upstream: Vec<f64> = (0..arch.output_dim())
            .map(|_| rng.random_range(-1.0..1.0))
            .collect();
        let (_, cache) = model.forward_cached(&x).unwrap();
        let analytic = model.backward(&x, &cache, &upstream).unwrap();
        // Loss = upstream . scores, linear in the scores.
        let loss = |m: &ScoreModel| -> f64 {
            m.forward(&x)
                .unwrap()
                .iter()
                .zip(&upstream)
                .map(|(s, u)| s * u)
                .sum()
        };
        let h = 1e-5;
        for i in 0..model.params().len() {
            let mut plus = model.clone();
            plus.params_mut()[i] += h;
            let mut minus = model.clone();
            minus.params_mut()[i] -= h;
            let fd = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let denom = analytic[i].abs().max(fd.abs()).max(1.0);
            assert!(
                (analytic[i] - fd).abs() / denom < 1e-4,
                "param {i}: analytic {} vs fd {fd}",
                analytic[i]
            );
        }
    }

    #[test]
    fn gradients_match_finite_differences() {
        finite_difference_check(
            Architecture::Linear {
                input_dim: 3,
                output_dim: 4,
            },
            101,
        );
        finite_difference_check(
            Architecture::Mlp {
                input_dim: 3,
                hidden_dim: 5,
                output_dim: 4,
                activation: Activation::Tanh,
            },
            202,
        );
        finite_difference_check(
            Architecture::Mlp {
                input_dim: 2,
                hidden_dim: 6,
                output_dim: 3,
                activation: Activation::Relu,
            },
            303,
        );
    }

    #[test]
    fn sgd_examples() {
        let mut theta = vec![1.0];
        let mut vel = vec![0.0];
        sgd_step(&mut theta, &mut vel, &[0.5], 0.0, 0.0);
        assert_eq!(theta, vec![1.0]);

        sgd_step(&mut theta, &mut vel, &[0.5], 0.1, 0.0);
        assert!((theta[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_matches_hand_unrolled_recursion() {
        let mut theta = vec![0.0];
        let mut vel = vec![0.0];
        let (lr, m) = (0.1, 0.9);
        // Step 1 with g = 1: v = 1, theta = -0.1.
        sgd_step(&mut theta, &mut vel, &[1.0], lr, m);
        assert!((theta[0] + 0.1).abs() < 1e-15);
        // Step 2 with g = 2: v = 0.9 + 2 = 2.9, theta = -0.1 - 0.29.
        sgd_step(&mut theta, &mut vel, &[2.0], lr, m);
        assert!((theta[0] + 0.39).abs() < 1e-15);
    }

    #[test]
    fn init_is_deterministic_per_seed() {
        let arch = Architecture::Mlp {
            input_dim: 4,
            hidden_dim: 8,
            output_dim: 5,
            activation: Activation::Tanh,
        };
        let a = ScoreModel::init(arch, 42);
        let b = ScoreModel::init(arch, 42);
        assert_eq!(a.params(), b.params());
        let c = ScoreModel::init(arch, 43);
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn init_respects_fan_in_bound() {
        let arch = Architecture::Mlp {
            input_dim: 16,
            hidden_dim: 9,
            output_dim: 4,
            activation: Activation::Tanh,
        };
        let model = ScoreModel::init(arch, 7);
        let s1 = 1.0 / 4.0;
        let s2 = 1.0 / 3.0;
        let first_block = 16 * 9 + 9;
        for (i, &p) in model.params().iter().enumerate() {
            let bound = if i < first_block { s1 } else { s2 };
            assert!(p.abs() <= bound, "param {i} = {p} out of ({bound})");
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let arch = Architecture::Mlp {
            input_dim: 3,
            hidden_dim: 2,
            output_dim: 4,
            activation: Activation::Relu,
        };
        let model = ScoreModel::init(arch, 11);
        let ckpt = model.to_checkpoint(11);
        let json = serde_json::to_string(&ckpt).unwrap();
        let back: Checkpoint = serde_json::from_str(&json).unwrap();
        let restored = ScoreModel::from_checkpoint(&back).unwrap();
        assert_eq!(model, restored);
    }

    #[test]
    fn dimension_mismatch_errors() {
        let arch = Architecture::Linear {
            input_dim: 2,
            output_dim: 2,
        };
        let model = ScoreModel::init(arch, 1);
        assert!(model.forward(&[1.0]).is_err());
        assert!(ScoreModel::from_params(arch, vec![0.0; 3]).is_err());
    }
}

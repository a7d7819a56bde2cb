use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Linear classifier with an optional rectified hidden layer.
///
/// Parameters live in one flat vector:
/// `[W1 (h×d), b1 (h), W2 (N×h), b2 (N)]` with a hidden layer,
/// `[W (N×d), b (N)]` without. Matrices are row-major, one row per output unit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    input_dim: usize,
    hidden_dim: Option<usize>,
    output_dim: usize,
    params: Vec<f64>,
}

/// Activations kept from the forward pass for backpropagation.
#[derive(Debug, Clone)]
pub struct Forward {
    pub hidden: Option<Vec<f64>>,
    pub logits: Vec<f64>,
}

fn affine(weights: &[f64], bias: &[f64], x: &[f64]) -> Vec<f64> {
    weights
        .chunks_exact(x.len())
        .zip(bias)
        .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
        .collect()
}

impl ToyModel {
    /// Seeded uniform init in `[-1/√fan_in, 1/√fan_in]` for weights and biases.
    pub fn new(input_dim: usize, hidden_dim: Option<usize>, output_dim: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut layer = |fan_in: usize, fan_out: usize, params: &mut Vec<f64>| {
            let bound = 1.0 / (fan_in as f64).sqrt();
            params.extend((0..fan_in * fan_out + fan_out).map(|_| rng.random_range(-bound..=bound)));
        };
        match hidden_dim {
            Some(h) => {
                layer(input_dim, h, &mut params);
                layer(h, output_dim, &mut params);
            }
            None => layer(input_dim, output_dim, &mut params),
        }
        Self {
            input_dim,
            hidden_dim,
            output_dim,
            params,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_dim(&self) -> Option<usize> {
        self.hidden_dim
    }

    pub fn output_dim(&self) -> usize {
        self.output_dim
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn output_offset(&self) -> usize {
        self.hidden_dim.map_or(0, |h| h * self.input_dim + h)
    }

    pub fn forward(&self, x: &[f64]) -> Forward {
        assert_eq!(x.len(), self.input_dim, "feature dimension");
        match self.hidden_dim {
            Some(h) => {
                let d = self.input_dim;
                let (w1, rest) = self.params.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(self.output_dim * h);
                let hidden: Vec<f64> = affine(w1, b1, x).into_iter().map(|v| v.max(0.0)).collect();
                let logits = affine(w2, b2, &hidden);
                Forward {
                    hidden: Some(hidden),
                    logits,
                }
            }
            None => {
                let (w, b) = self.params.split_at(self.output_dim * self.input_dim);
                Forward {
                    hidden: None,
                    logits: affine(w, b, x),
                }
            }
        }
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).logits
    }

    /// Adds `∂loss/∂params` to `grad` given `∂loss/∂logits`.
    pub fn backward(&self, x: &[f64], fwd: &Forward, dlogits: &[f64], grad: &mut [f64]) {
        let out_off = self.output_offset();
        let input = fwd.hidden.as_deref().unwrap_or(x);
        let fan_in = input.len();
        let (gw, gb) = grad[out_off..].split_at_mut(self.output_dim * fan_in);
        for ((row, b), &d) in gw.chunks_exact_mut(fan_in).zip(gb.iter_mut()).zip(dlogits) {
            *b += d;
            for (g, v) in row.iter_mut().zip(input) {
                *g += d * v;
            }
        }

        if let (Some(h), Some(hidden)) = (self.hidden_dim, fwd.hidden.as_ref()) {
            let w2 = &self.params[out_off..out_off + self.output_dim * h];
            let mut dhidden = vec![0.0; h];
            for (row, &d) in w2.chunks_exact(h).zip(dlogits) {
                for (dh, w) in dhidden.iter_mut().zip(row) {
                    *dh += d * w;
                }
            }
            let d = self.input_dim;
            let (gw1, gb1) = grad[..h * d + h].split_at_mut(h * d);
            for (j, (row, b)) in gw1.chunks_exact_mut(d).zip(gb1.iter_mut()).enumerate() {
                if hidden[j] <= 0.0 {
                    continue;
                }
                *b += dhidden[j];
                for (g, v) in row.iter_mut().zip(x) {
                    *g += dhidden[j] * v;
                }
            }
        }
    }
}

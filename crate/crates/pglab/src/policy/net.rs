//! A small fixed-shape MLP (input -> hidden -> hidden -> output, ReLU)
//! over a caller-owned flat parameter vector, with manual reverse-mode
//! accumulation. Two hidden layers of 16 units cover every policy and
//! score-model head in this crate.

use crate::error::{Error, Result};
use crate::rng::SeedRng;
use rand::Rng;

/// Default hidden width.
pub const HIDDEN: usize = 16;

/// Architecture of the shared MLP body plus a linear head.
///
/// Parameter layout (row-major, in order):
/// `W1 [hidden x input]`, `b1 [hidden]`, `W2 [hidden x hidden]`,
/// `b2 [hidden]`, `W3 [output x hidden]`, `b3 [output]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Mlp {
    pub input_dim: usize,
    pub hidden: usize,
    pub output_dim: usize,
}

/// Cached activations from a forward pass, needed for backward.
#[derive(Debug, Clone)]
pub struct ForwardPass {
    input: Vec<f64>,
    h1: Vec<f64>,
    h2: Vec<f64>,
    pub output: Vec<f64>,
}

impl ForwardPass {
    /// Post-activation hidden vector after layer 1 or 2.
    pub fn hidden(&self, layer: usize) -> Result<&[f64]> {
        match layer {
            1 => Ok(&self.h1),
            2 => Ok(&self.h2),
            _ => Err(Error::Domain(format!("hidden layer {layer} (valid: 1, 2)"))),
        }
    }
}

impl Mlp {
    pub fn new(input_dim: usize, hidden: usize, output_dim: usize) -> Self {
        Mlp { input_dim, hidden, output_dim }
    }

    pub fn n_params(&self) -> usize {
        let (i, h, o) = (self.input_dim, self.hidden, self.output_dim);
        h * i + h + h * h + h + o * h + o
    }

    // Offsets of each parameter block within the flat vector.
    fn off_b1(&self) -> usize {
        self.hidden * self.input_dim
    }
    fn off_w2(&self) -> usize {
        self.off_b1() + self.hidden
    }
    fn off_b2(&self) -> usize {
        self.off_w2() + self.hidden * self.hidden
    }
    fn off_w3(&self) -> usize {
        self.off_b2() + self.hidden
    }
    fn off_b3(&self) -> usize {
        self.off_w3() + self.output_dim * self.hidden
    }

    /// Parameter-index groups treating each output unit's incoming weight
    /// row together with its bias as one "filter" (the dense-layer analog
    /// used for filter normalization).
    pub fn unit_groups(&self) -> Vec<Vec<usize>> {
        let mut groups = Vec::with_capacity(2 * self.hidden + self.output_dim);
        for u in 0..self.hidden {
            let mut g: Vec<usize> = (u * self.input_dim..(u + 1) * self.input_dim).collect();
            g.push(self.off_b1() + u);
            groups.push(g);
        }
        for u in 0..self.hidden {
            let start = self.off_w2() + u * self.hidden;
            let mut g: Vec<usize> = (start..start + self.hidden).collect();
            g.push(self.off_b2() + u);
            groups.push(g);
        }
        for u in 0..self.output_dim {
            let start = self.off_w3() + u * self.hidden;
            let mut g: Vec<usize> = (start..start + self.hidden).collect();
            g.push(self.off_b3() + u);
            groups.push(g);
        }
        groups
    }

    /// Initialize parameters uniformly in +-1/sqrt(fan_in), per layer,
    /// consuming the stream in layout order.
    pub fn init_params(&self, rng: &mut SeedRng) -> Vec<f64> {
        let mut params = vec![0.0; self.n_params()];
        let bounds = [
            (0, self.off_w2(), 1.0 / (self.input_dim as f64).sqrt()),
            (self.off_w2(), self.off_w3(), 1.0 / (self.hidden as f64).sqrt()),
            (self.off_w3(), self.n_params(), 1.0 / (self.hidden as f64).sqrt()),
        ];
        for (start, end, bound) in bounds {
            for p in &mut params[start..end] {
                *p = rng.gen_range(-bound..bound);
            }
        }
        params
    }

    fn check_shapes(&self, params: &[f64], input: &[f64]) -> Result<()> {
        if params.len() != self.n_params() {
            return Err(Error::DimensionMismatch(format!(
                "mlp expects {} params, got {}",
                self.n_params(),
                params.len()
            )));
        }
        if input.len() != self.input_dim {
            return Err(Error::DimensionMismatch(format!(
                "mlp expects input dim {}, got {}",
                self.input_dim,
                input.len()
            )));
        }
        Ok(())
    }

    /// Forward pass; caches activations for [`Mlp::backward`].
    pub fn forward(&self, params: &[f64], input: &[f64]) -> Result<ForwardPass> {
        self.check_shapes(params, input)?;
        let (i_dim, h, o) = (self.input_dim, self.hidden, self.output_dim);
        let w1 = &params[..self.off_b1()];
        let b1 = &params[self.off_b1()..self.off_w2()];
        let w2 = &params[self.off_w2()..self.off_b2()];
        let b2 = &params[self.off_b2()..self.off_w3()];
        let w3 = &params[self.off_w3()..self.off_b3()];
        let b3 = &params[self.off_b3()..];

        let mut h1 = vec![0.0; h];
        for j in 0..h {
            let mut acc = b1[j];
            for k in 0..i_dim {
                acc += w1[j * i_dim + k] * input[k];
            }
            h1[j] = acc.max(0.0);
        }
        let mut h2 = vec![0.0; h];
        for j in 0..h {
            let mut acc = b2[j];
            for k in 0..h {
                acc += w2[j * h + k] * h1[k];
            }
            h2[j] = acc.max(0.0);
        }
        let mut output = vec![0.0; o];
        for j in 0..o {
            let mut acc = b3[j];
            for k in 0..h {
                acc += w3[j * h + k] * h2[k];
            }
            output[j] = acc;
        }
        for (layer, vals) in [(1usize, &h1), (2, &h2), (3, &output)] {
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("mlp layer {layer} activation")));
            }
        }
        Ok(ForwardPass { input: input.to_vec(), h1, h2, output })
    }

    /// Reverse-mode pass: accumulate `d(scalar)/d(params)` into `grad`
    /// given `d(scalar)/d(output)`.
    ///
    /// ReLU subgradient at 0 is taken as 0 (the post-activation cache is
    /// 0 exactly there).
    pub fn backward(
        &self,
        params: &[f64],
        pass: &ForwardPass,
        d_output: &[f64],
        grad: &mut [f64],
    ) -> Result<()> {
        if d_output.len() != self.output_dim || grad.len() != self.n_params() {
            return Err(Error::DimensionMismatch("mlp backward shapes".into()));
        }
        let (i_dim, h) = (self.input_dim, self.hidden);
        let w2 = &params[self.off_w2()..self.off_b2()];
        let w3 = &params[self.off_w3()..self.off_b3()];

        // Head: output = W3 h2 + b3.
        let (g_w3, rest) = grad[self.off_w3()..].split_at_mut(self.output_dim * h);
        for j in 0..self.output_dim {
            let d = d_output[j];
            if d == 0.0 {
                continue;
            }
            for k in 0..h {
                g_w3[j * h + k] += d * pass.h2[k];
            }
            rest[j] += d;
        }
        let mut d_h2 = vec![0.0; h];
        for k in 0..h {
            let mut acc = 0.0;
            for j in 0..self.output_dim {
                acc += d_output[j] * w3[j * h + k];
            }
            // ReLU gate of layer 2.
            d_h2[k] = if pass.h2[k] > 0.0 { acc } else { 0.0 };
        }

        // Layer 2: h2 = relu(W2 h1 + b2).
        {
            let (g_w2, rest) = grad[self.off_w2()..].split_at_mut(h * h);
            for j in 0..h {
                let d = d_h2[j];
                if d == 0.0 {
                    continue;
                }
                for k in 0..h {
                    g_w2[j * h + k] += d * pass.h1[k];
                }
                rest[j] += d;
            }
        }
        let mut d_h1 = vec![0.0; h];
        for k in 0..h {
            let mut acc = 0.0;
            for j in 0..h {
                acc += d_h2[j] * w2[j * h + k];
            }
            d_h1[k] = if pass.h1[k] > 0.0 { acc } else { 0.0 };
        }

        // Layer 1: h1 = relu(W1 x + b1).
        let (g_w1, rest) = grad[..self.off_w2()].split_at_mut(h * i_dim);
        for j in 0..h {
            let d = d_h1[j];
            if d == 0.0 {
                continue;
            }
            for k in 0..i_dim {
                g_w1[j * i_dim + k] += d * pass.input[k];
            }
            rest[j] += d;
        }
        Ok(())
    }
}

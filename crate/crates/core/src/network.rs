//! Sequential stacks of layers with their optimizer state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::{Cache, Layer};
use crate::optim::{adam_update, AdamConfig, OptimState};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Network {
    pub layers: Vec<Layer>,
    pub optim: OptimState,
}

/// Per-layer caches from one forward pass.
#[derive(Debug, Clone)]
pub struct Trace {
    caches: Vec<Cache>,
}

impl Network {
    pub fn new(layers: Vec<Layer>, config: AdamConfig) -> Self {
        let optim = OptimState::new(config, layers.iter().flat_map(|l| l.params()));
        Self { layers, optim }
    }

    pub fn input_width(&self) -> Option<usize> {
        self.layers.iter().find_map(Layer::input_width)
    }

    pub fn output_width(&self, input: usize) -> usize {
        self.layers.iter().fold(input, |w, l| l.output_width(w))
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    pub fn params(&self) -> impl Iterator<Item = &Tensor> {
        self.layers.iter().flat_map(|l| l.params())
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Trace)> {
        self.forward_prefix(x, self.layers.len())
    }

    /// Runs only the first `depth` layers.
    pub fn forward_prefix(&self, x: &Tensor, depth: usize) -> Result<(Tensor, Trace)> {
        let depth = depth.min(self.layers.len());
        let mut caches = Vec::with_capacity(depth);
        let mut h = x.clone();
        for layer in &self.layers[..depth] {
            let (out, cache) = layer.forward(&h)?;
            caches.push(cache);
            h = out;
        }
        Ok((h, Trace { caches }))
    }

    /// Inference without retaining caches.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward(&h)?.0;
        }
        Ok(h)
    }

    /// Backpropagates `dy` from the end of `trace` (which may cover only a
    /// prefix of the layers); returns the input gradient and parameter
    /// gradients flattened in layer order, zero for layers past the prefix.
    pub fn backward(&self, trace: &Trace, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let depth = trace.caches.len();
        if depth > self.layers.len() {
            return Err(Error::StaleCache(format!(
                "trace has {depth} caches for {} layers",
                self.layers.len()
            )));
        }
        let mut grads: Vec<Vec<Tensor>> = Vec::with_capacity(self.layers.len());
        for layer in self.layers[depth..].iter().rev() {
            grads.push(
                layer
                    .params()
                    .iter()
                    .map(|p| Tensor::zeros(p.rows(), p.cols()))
                    .collect(),
            );
        }
        let mut d = dy.clone();
        for (layer, cache) in self.layers[..depth].iter().zip(&trace.caches).rev() {
            let (dx, dp) = layer.backward(cache, &d)?;
            grads.push(dp);
            d = dx;
        }
        grads.reverse();
        Ok((d, grads.into_iter().flatten().collect()))
    }

    pub fn apply_gradients(&mut self, grads: &[Tensor]) -> Result<()> {
        let mut params: Vec<&mut Tensor> = self
            .layers
            .iter_mut()
            .flat_map(|l| l.params_mut().iter_mut())
            .collect();
        adam_update(&mut params, grads, &mut self.optim)
    }
}

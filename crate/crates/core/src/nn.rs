//! Layers with explicit forward and backward passes.
//!
//! Every layer maps a `batch × width` tensor to another tensor. `forward`
//! returns an opaque [`Cache`] holding exactly what `backward` needs; the
//! cache remembers the parameter version it was computed against so a cache
//! that outlived a parameter update is rejected.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{fill_standard_normal, seeded};
use crate::tensor::Tensor;

pub const LAYER_NORM_EPS: f64 = 1e-5;
pub const DEFAULT_LEAK: f64 = 0.2;

/// A contiguous range of columns, `start..start + len`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub len: usize,
}

impl Span {
    pub fn new(start: usize, len: usize) -> Self {
        Self { start, len }
    }

    pub fn end(&self) -> usize {
        self.start + self.len
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.start..self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerKind {
    Affine,
    LeakyRelu {
        slope: f64,
    },
    /// `spans: None` applies tanh to every column; otherwise only to the
    /// listed spans and the rest pass through unchanged.
    Tanh {
        spans: Option<Vec<Span>>,
    },
    Sigmoid,
    /// Independent softmax inside each group; columns outside every group
    /// pass through unchanged.
    SoftmaxGroup {
        groups: Vec<Span>,
    },
    LayerNorm,
    /// Single-head self-attention over tokens of `token_width` columns with
    /// a residual connection: `y = x + softmax(q kᵀ / √d) v W_o`.
    SelfAttention {
        token_width: usize,
    },
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Affine => "affine",
            LayerKind::LeakyRelu { .. } => "leaky_relu",
            LayerKind::Tanh { .. } => "tanh",
            LayerKind::Sigmoid => "sigmoid",
            LayerKind::SoftmaxGroup { .. } => "softmax_group",
            LayerKind::LayerNorm => "layer_norm",
            LayerKind::SelfAttention { .. } => "self_attention",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Layer {
    pub kind: LayerKind,
    params: Vec<Tensor>,
    #[serde(skip)]
    version: u64,
}

// Equality ignores the cache-invalidation counter.
impl PartialEq for Layer {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind && self.params == other.params
    }
}

/// State captured by [`Layer::forward`] for the matching backward call.
#[derive(Debug, Clone)]
pub struct Cache {
    kind: &'static str,
    version: u64,
    in_shape: (usize, usize),
    out_shape: (usize, usize),
    saved: Saved,
}

#[derive(Debug, Clone)]
enum Saved {
    Input(Tensor),
    Output(Tensor),
    LayerNorm {
        xhat: Tensor,
        inv_std: Vec<f64>,
        floored: Vec<bool>,
    },
    Attention {
        x: Tensor,
        q: Tensor,
        k: Tensor,
        v: Tensor,
        probs: Vec<f64>,
        mixed: Tensor,
    },
}

impl Layer {
    /// Affine layer `y = x W + b` with `W ~ N(0, 1/in)` and `b = 0`.
    pub fn affine<R: Rng + ?Sized>(inputs: usize, outputs: usize, rng: &mut R) -> Self {
        let mut w = Tensor::zeros(inputs, outputs);
        fill_standard_normal(rng, w.data_mut());
        w.scale(1.0 / (inputs.max(1) as f64).sqrt());
        Self::from_params(LayerKind::Affine, vec![w, Tensor::zeros(1, outputs)])
            .expect("affine shapes are consistent")
    }

    pub fn affine_from(weight: Tensor, bias: Tensor) -> Result<Self> {
        Self::from_params(LayerKind::Affine, vec![weight, bias])
    }

    pub fn leaky_relu(slope: f64) -> Self {
        Self::parameterless(LayerKind::LeakyRelu { slope })
    }

    pub fn tanh() -> Self {
        Self::parameterless(LayerKind::Tanh { spans: None })
    }

    pub fn tanh_spans(spans: Vec<Span>) -> Self {
        Self::parameterless(LayerKind::Tanh { spans: Some(spans) })
    }

    pub fn sigmoid() -> Self {
        Self::parameterless(LayerKind::Sigmoid)
    }

    pub fn softmax_group(groups: Vec<Span>) -> Self {
        Self::parameterless(LayerKind::SoftmaxGroup { groups })
    }

    /// Layer norm with unit gain and zero bias.
    pub fn layer_norm(width: usize) -> Self {
        Self::from_params(
            LayerKind::LayerNorm,
            vec![Tensor::filled(1, width, 1.0), Tensor::zeros(1, width)],
        )
        .expect("layer norm shapes are consistent")
    }

    pub fn self_attention<R: Rng + ?Sized>(token_width: usize, rng: &mut R) -> Self {
        let params = (0..4)
            .map(|_| {
                let mut w = Tensor::zeros(token_width, token_width);
                fill_standard_normal(rng, w.data_mut());
                w.scale(1.0 / (token_width as f64).sqrt());
                w
            })
            .collect();
        Self::from_params(LayerKind::SelfAttention { token_width }, params)
            .expect("attention shapes are consistent")
    }

    fn parameterless(kind: LayerKind) -> Self {
        Self {
            kind,
            params: Vec::new(),
            version: 0,
        }
    }

    /// Builds a layer from explicit parameters, validating their shapes.
    pub fn from_params(kind: LayerKind, params: Vec<Tensor>) -> Result<Self> {
        let bad = |msg: String| Err(Error::Shape(format!("{}: {msg}", kind.name())));
        match &kind {
            LayerKind::Affine => {
                if params.len() != 2 {
                    return bad(format!("expected 2 params, got {}", params.len()));
                }
                let out = params[0].cols();
                if params[1].shape() != (1, out) {
                    return bad(format!(
                        "bias {:?} does not match weight {:?}",
                        params[1].shape(),
                        params[0].shape()
                    ));
                }
            }
            LayerKind::LayerNorm => {
                if params.len() != 2
                    || params[0].rows() != 1
                    || params[0].shape() != params[1].shape()
                {
                    return bad("gain and bias must both be 1 x width".into());
                }
            }
            LayerKind::SelfAttention { token_width } => {
                let d = *token_width;
                if d == 0 {
                    return bad("token width must be positive".into());
                }
                if params.len() != 4 || params.iter().any(|p| p.shape() != (d, d)) {
                    return bad(format!("expected four {d}x{d} projections"));
                }
            }
            LayerKind::LeakyRelu { .. }
            | LayerKind::Tanh { .. }
            | LayerKind::Sigmoid
            | LayerKind::SoftmaxGroup { .. } => {
                if !params.is_empty() {
                    return bad("layer takes no parameters".into());
                }
            }
        }
        Ok(Self {
            kind,
            params,
            version: 0,
        })
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    /// Mutable parameter access. Invalidates caches from earlier forwards.
    pub fn params_mut(&mut self) -> &mut [Tensor] {
        self.version += 1;
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data().len()).sum()
    }

    /// Input width the layer requires, if it fixes one.
    pub fn input_width(&self) -> Option<usize> {
        match &self.kind {
            LayerKind::Affine => Some(self.params[0].rows()),
            LayerKind::LayerNorm => Some(self.params[0].cols()),
            _ => None,
        }
    }

    /// Output width for a given input width.
    pub fn output_width(&self, input: usize) -> usize {
        match &self.kind {
            LayerKind::Affine => self.params[0].cols(),
            _ => input,
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        let (b, w) = x.shape();
        let name = self.kind.name();
        if b == 0 {
            return Err(Error::Shape(format!("{name}: empty batch")));
        }
        if let Some(want) = self.input_width() {
            if w != want {
                return Err(Error::Shape(format!(
                    "{name}: input width {w}, layer expects {want}"
                )));
            }
        }
        let spans_fit = |spans: &[Span]| spans.iter().all(|s| s.end() <= w);
        match &self.kind {
            LayerKind::SelfAttention { token_width } if w % token_width != 0 => {
                return Err(Error::Shape(format!(
                    "{name}: input width {w} is not a multiple of token width {token_width}"
                )));
            }
            LayerKind::SoftmaxGroup { groups } if !spans_fit(groups) => {
                return Err(Error::Shape(format!(
                    "{name}: groups extend past input width {w}"
                )));
            }
            LayerKind::Tanh { spans: Some(s) } if !spans_fit(s) => {
                return Err(Error::Shape(format!(
                    "{name}: spans extend past input width {w}"
                )));
            }
            _ => {}
        }
        x.ensure_finite(name)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Cache)> {
        self.check_input(x)?;
        let (out, saved) = match &self.kind {
            LayerKind::Affine => {
                let mut y = x.matmul(&self.params[0])?;
                let bias = self.params[1].data();
                for r in 0..y.rows() {
                    for (v, b) in y.row_mut(r).iter_mut().zip(bias) {
                        *v += b;
                    }
                }
                (y, Saved::Input(x.clone()))
            }
            LayerKind::LeakyRelu { slope } => {
                let s = *slope;
                (
                    x.map(|v| if v > 0.0 { v } else { s * v }),
                    Saved::Input(x.clone()),
                )
            }
            LayerKind::Tanh { spans } => {
                let mut y = x.clone();
                for_spans(&mut y, spans.as_deref(), |v| *v = v.tanh());
                (y.clone(), Saved::Output(y))
            }
            LayerKind::Sigmoid => {
                let y = x.map(sigmoid);
                (y.clone(), Saved::Output(y))
            }
            LayerKind::SoftmaxGroup { groups } => {
                let mut y = x.clone();
                for r in 0..y.rows() {
                    let row = y.row_mut(r);
                    for g in groups {
                        softmax_in_place(&mut row[g.range()]);
                    }
                }
                (y.clone(), Saved::Output(y))
            }
            LayerKind::LayerNorm => self.layer_norm_forward(x),
            LayerKind::SelfAttention { token_width } => self.attention_forward(x, *token_width)?,
        };
        let cache = Cache {
            kind: self.kind.name(),
            version: self.version,
            in_shape: x.shape(),
            out_shape: out.shape(),
            saved,
        };
        out.ensure_finite(self.kind.name())?;
        Ok((out, cache))
    }

    /// Vector-Jacobian product: returns `(d_input, d_params)`.
    pub fn backward(&self, cache: &Cache, dy: &Tensor) -> Result<(Tensor, Vec<Tensor>)> {
        let name = self.kind.name();
        if cache.kind != name || cache.version != self.version {
            return Err(Error::StaleCache(format!(
                "{name} (version {}) given cache from {} (version {})",
                self.version, cache.kind, cache.version
            )));
        }
        if dy.shape() != cache.out_shape {
            return Err(Error::Shape(format!(
                "{name}: d_output {:?} but forward produced {:?}",
                dy.shape(),
                cache.out_shape
            )));
        }
        dy.ensure_finite("d_output")?;
        let result = match (&self.kind, &cache.saved) {
            (LayerKind::Affine, Saved::Input(x)) => {
                let dx = dy.matmul_t(&self.params[0])?;
                let dw = x.t_matmul(dy)?;
                let db = dy.sum_rows();
                (dx, vec![dw, db])
            }
            (LayerKind::LeakyRelu { slope }, Saved::Input(x)) => {
                let mut dx = dy.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(x.data()) {
                    if *v <= 0.0 {
                        *d *= slope;
                    }
                }
                (dx, Vec::new())
            }
            (LayerKind::Tanh { spans }, Saved::Output(y)) => {
                let mut dx = dy.clone();
                let cols = y.cols();
                match spans {
                    None => {
                        for (d, v) in dx.data_mut().iter_mut().zip(y.data()) {
                            *d *= 1.0 - v * v;
                        }
                    }
                    Some(spans) => {
                        for r in 0..y.rows() {
                            for s in spans {
                                for c in s.range() {
                                    let v = y.data()[r * cols + c];
                                    dx.data_mut()[r * cols + c] *= 1.0 - v * v;
                                }
                            }
                        }
                    }
                }
                (dx, Vec::new())
            }
            (LayerKind::Sigmoid, Saved::Output(y)) => {
                let mut dx = dy.clone();
                for (d, v) in dx.data_mut().iter_mut().zip(y.data()) {
                    *d *= v * (1.0 - v);
                }
                (dx, Vec::new())
            }
            (LayerKind::SoftmaxGroup { groups }, Saved::Output(y)) => {
                let mut dx = dy.clone();
                for r in 0..y.rows() {
                    let yr = y.row(r);
                    let dr = dx.row_mut(r);
                    for g in groups {
                        let dot: f64 = g.range().map(|c| dr[c] * yr[c]).sum();
                        for c in g.range() {
                            dr[c] = yr[c] * (dr[c] - dot);
                        }
                    }
                }
                (dx, Vec::new())
            }
            (
                LayerKind::LayerNorm,
                Saved::LayerNorm {
                    xhat,
                    inv_std,
                    floored,
                },
            ) => self.layer_norm_backward(dy, xhat, inv_std, floored),
            (
                LayerKind::SelfAttention { token_width },
                Saved::Attention {
                    x,
                    q,
                    k,
                    v,
                    probs,
                    mixed,
                },
            ) => self.attention_backward(*token_width, dy, x, q, k, v, probs, mixed)?,
            _ => {
                return Err(Error::StaleCache(format!(
                    "{name}: cache contents do not belong to this layer"
                )))
            }
        };
        let (dx, dparams) = result;
        if dx.shape() != cache.in_shape {
            return Err(Error::Shape(format!("{name}: internal d_input shape")));
        }
        dx.ensure_finite("d_input")?;
        Ok((dx, dparams))
    }

    fn layer_norm_forward(&self, x: &Tensor) -> (Tensor, Saved) {
        let (b, w) = x.shape();
        let gain = self.params[0].data();
        let bias = self.params[1].data();
        let mut xhat = Tensor::zeros(b, w);
        let mut y = Tensor::zeros(b, w);
        let mut inv_std = Vec::with_capacity(b);
        let mut floored = Vec::with_capacity(b);
        for r in 0..b {
            let row = x.row(r);
            let mean = row.iter().sum::<f64>() / w as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w as f64;
            // Variance floored at eps inside the root: exact unit variance
            // for ordinary rows, zero output for constant rows.
            let is_floored = var < LAYER_NORM_EPS;
            let inv = 1.0 / var.max(LAYER_NORM_EPS).sqrt();
            let xr = xhat.row_mut(r);
            for (o, v) in xr.iter_mut().zip(row) {
                *o = (v - mean) * inv;
            }
            let yr = y.row_mut(r);
            for c in 0..w {
                yr[c] = gain[c] * xhat.get(r, c) + bias[c];
            }
            inv_std.push(inv);
            floored.push(is_floored);
        }
        (
            y,
            Saved::LayerNorm {
                xhat,
                inv_std,
                floored,
            },
        )
    }

    fn layer_norm_backward(
        &self,
        dy: &Tensor,
        xhat: &Tensor,
        inv_std: &[f64],
        floored: &[bool],
    ) -> (Tensor, Vec<Tensor>) {
        let (b, w) = dy.shape();
        let gain = self.params[0].data();
        let mut dgain = Tensor::zeros(1, w);
        let mut dbias = Tensor::zeros(1, w);
        let mut dx = Tensor::zeros(b, w);
        let mut dxhat = vec![0.0; w];
        let n = w as f64;
        for r in 0..b {
            let dyr = dy.row(r);
            let xr = xhat.row(r);
            for c in 0..w {
                dgain.data_mut()[c] += dyr[c] * xr[c];
                dbias.data_mut()[c] += dyr[c];
                dxhat[c] = dyr[c] * gain[c];
            }
            let mean_d = dxhat.iter().sum::<f64>() / n;
            let mean_dx = if floored[r] {
                0.0
            } else {
                dxhat.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>() / n
            };
            let out = dx.row_mut(r);
            for c in 0..w {
                out[c] = inv_std[r] * (dxhat[c] - mean_d - xr[c] * mean_dx);
            }
        }
        (dx, vec![dgain, dbias])
    }

    fn attention_forward(&self, x: &Tensor, d: usize) -> Result<(Tensor, Saved)> {
        let (b, w) = x.shape();
        let n = w / d;
        // A b x (n·d) row-major batch is exactly a (b·n) x d token matrix.
        let tokens = Tensor::from_vec(b * n, d, x.data().to_vec())?;
        let q = tokens.matmul(&self.params[0])?;
        let k = tokens.matmul(&self.params[1])?;
        let v = tokens.matmul(&self.params[2])?;
        let scale = 1.0 / (d as f64).sqrt();
        let mut probs = vec![0.0; b * n * n];
        let mut mixed = Tensor::zeros(b * n, d);
        for r in 0..b {
            let p = &mut probs[r * n * n..(r + 1) * n * n];
            for i in 0..n {
                let qi = q.row(r * n + i);
                for j in 0..n {
                    let kj = k.row(r * n + j);
                    p[i * n + j] = scale * dot(qi, kj);
                }
                softmax_in_place(&mut p[i * n..(i + 1) * n]);
            }
            for i in 0..n {
                let out = mixed.row_mut(r * n + i);
                for j in 0..n {
                    let pij = p[i * n + j];
                    for (o, vv) in out.iter_mut().zip(v.row(r * n + j)) {
                        *o += pij * vv;
                    }
                }
            }
        }
        let projected = mixed.matmul(&self.params[3])?;
        let mut y = x.clone();
        for (o, p) in y.data_mut().iter_mut().zip(projected.data()) {
            *o += p;
        }
        Ok((
            y,
            Saved::Attention {
                x: tokens,
                q,
                k,
                v,
                probs,
                mixed,
            },
        ))
    }

    #[allow(clippy::too_many_arguments)]
    fn attention_backward(
        &self,
        d: usize,
        dy: &Tensor,
        x: &Tensor,
        q: &Tensor,
        k: &Tensor,
        v: &Tensor,
        probs: &[f64],
        mixed: &Tensor,
    ) -> Result<(Tensor, Vec<Tensor>)> {
        let bn = x.rows();
        let b = dy.rows();
        let n = bn / b;
        let scale = 1.0 / (d as f64).sqrt();
        let dout = Tensor::from_vec(bn, d, dy.data().to_vec())?;
        let dwo = mixed.t_matmul(&dout)?;
        let dmixed = dout.matmul_t(&self.params[3])?;
        let mut dq = Tensor::zeros(bn, d);
        let mut dk = Tensor::zeros(bn, d);
        let mut dv = Tensor::zeros(bn, d);
        let mut dp = vec![0.0; n * n];
        for r in 0..b {
            let p = &probs[r * n * n..(r + 1) * n * n];
            for i in 0..n {
                let dmi = dmixed.row(r * n + i);
                for j in 0..n {
                    dp[i * n + j] = dot(dmi, v.row(r * n + j));
                    let pij = p[i * n + j];
                    for (o, g) in dv.row_mut(r * n + j).iter_mut().zip(dmi) {
                        *o += pij * g;
                    }
                }
            }
            // Softmax backward, then through the scaled q·kᵀ.
            for i in 0..n {
                let pi = &p[i * n..(i + 1) * n];
                let dpi = &dp[i * n..(i + 1) * n];
                let inner: f64 = pi.iter().zip(dpi).map(|(a, b)| a * b).sum();
                for j in 0..n {
                    let ds = pi[j] * (dpi[j] - inner) * scale;
                    if ds == 0.0 {
                        continue;
                    }
                    let kj = k.row(r * n + j).to_vec();
                    let qi = q.row(r * n + i).to_vec();
                    for (o, kv) in dq.row_mut(r * n + i).iter_mut().zip(&kj) {
                        *o += ds * kv;
                    }
                    for (o, qv) in dk.row_mut(r * n + j).iter_mut().zip(&qi) {
                        *o += ds * qv;
                    }
                }
            }
        }
        let dwq = x.t_matmul(&dq)?;
        let dwk = x.t_matmul(&dk)?;
        let dwv = x.t_matmul(&dv)?;
        let mut dx = dout;
        dx.add_assign(&dq.matmul_t(&self.params[0])?)?;
        dx.add_assign(&dk.matmul_t(&self.params[1])?)?;
        dx.add_assign(&dv.matmul_t(&self.params[2])?)?;
        let dx = Tensor::from_vec(b, n * d, dx.into_vec())?;
        Ok((dx, vec![dwq, dwk, dwv, dwo]))
    }
}

#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    if v >= 0.0 {
        1.0 / (1.0 + (-v).exp())
    } else {
        let e = v.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softmax of a slice, in place.
pub fn softmax_in_place(xs: &mut [f64]) {
    if xs.is_empty() {
        return;
    }
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for v in xs.iter_mut() {
        *v = (*v - max).exp();
        sum += *v;
    }
    for v in xs.iter_mut() {
        *v /= sum;
    }
}

fn for_spans(t: &mut Tensor, spans: Option<&[Span]>, f: impl Fn(&mut f64)) {
    match spans {
        None => t.data_mut().iter_mut().for_each(f),
        Some(spans) => {
            for r in 0..t.rows() {
                let row = t.row_mut(r);
                for s in spans {
                    row[s.range()].iter_mut().for_each(&f);
                }
            }
        }
    }
}

/// Compares `backward` against central finite differences (step 1e-5).
///
/// Each trial draws a random 3-row input (5 columns unless the layer fixes
/// its width; three tokens for self-attention) and a random upstream
/// gradient `R`, so the scalar objective is `Σ forward(x) ⊙ R`. Returns the
/// worst relative error `|a − n| / max(|a|, |n|, 1e-4)` over every input and
/// parameter coordinate of every trial.
pub fn grad_check(layer: &Layer, trials: usize, seed: u64) -> Result<f64> {
    const STEP: f64 = 1e-5;
    let mut rng = seeded(seed);
    let width = match (&layer.kind, layer.input_width()) {
        (_, Some(w)) => w,
        (LayerKind::SelfAttention { token_width }, None) => 3 * token_width,
        _ => 5,
    };
    let mut worst: f64 = 0.0;
    let rel = |a: f64, n: f64| (a - n).abs() / a.abs().max(n.abs()).max(1e-4);
    for _ in 0..trials.max(1) {
        let mut x = Tensor::zeros(3, width);
        fill_standard_normal(&mut rng, x.data_mut());
        let (y, cache) = layer.forward(&x)?;
        let mut upstream = Tensor::zeros(y.rows(), y.cols());
        fill_standard_normal(&mut rng, upstream.data_mut());
        let (dx, dparams) = layer.backward(&cache, &upstream)?;
        let objective = |l: &Layer, input: &Tensor| -> Result<f64> {
            let (out, _) = l.forward(input)?;
            Ok(dot(out.data(), upstream.data()))
        };
        for i in 0..x.data().len() {
            let mut plus = x.clone();
            plus.data_mut()[i] += STEP;
            let mut minus = x.clone();
            minus.data_mut()[i] -= STEP;
            let numeric = (objective(layer, &plus)? - objective(layer, &minus)?) / (2.0 * STEP);
            worst = worst.max(rel(dx.data()[i], numeric));
        }
        for (p, grad) in dparams.iter().enumerate() {
            for i in 0..grad.data().len() {
                let mut shifted = layer.clone();
                shifted.params[p].data_mut()[i] += STEP;
                let up = objective(&shifted, &x)?;
                shifted.params[p].data_mut()[i] -= 2.0 * STEP;
                let down = objective(&shifted, &x)?;
                worst = worst.max(rel(grad.data()[i], (up - down) / (2.0 * STEP)));
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor {
        Tensor::from_vec(rows, cols, v.to_vec()).unwrap()
    }

    fn all_kinds() -> Vec<Layer> {
        let mut rng = seeded(11);
        let mut ln = Layer::layer_norm(5);
        fill_standard_normal(&mut rng, ln.params_mut()[0].data_mut());
        fill_standard_normal(&mut rng, ln.params_mut()[1].data_mut());
        vec![
            Layer::affine(5, 4, &mut rng),
            Layer::leaky_relu(DEFAULT_LEAK),
            Layer::tanh(),
            Layer::tanh_spans(vec![Span::new(0, 2), Span::new(4, 1)]),
            Layer::sigmoid(),
            Layer::softmax_group(vec![Span::new(0, 2), Span::new(2, 3)]),
            ln,
            Layer::self_attention(4, &mut rng),
        ]
    }

    #[test]
    fn affine_scalar_forward_backward() {
        let layer = Layer::affine_from(t(1, 1, &[2.0]), t(1, 1, &[1.0])).unwrap();
        let (y, cache) = layer.forward(&t(1, 1, &[3.0])).unwrap();
        assert_eq!(y.data(), &[7.0]);
        let (dx, dp) = layer.backward(&cache, &t(1, 1, &[1.0])).unwrap();
        assert_eq!(dx.data(), &[2.0]);
        assert_eq!(dp[0].data(), &[3.0]);
        assert_eq!(dp[1].data(), &[1.0]);
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let (y, _) = Layer::layer_norm(3).forward(&t(1, 3, &[5.0, 5.0, 5.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn softmax_symmetric_pair() {
        let layer = Layer::softmax_group(vec![Span::new(0, 2)]);
        let (y, _) = layer.forward(&t(1, 2, &[0.0, 0.0])).unwrap();
        assert_eq!(y.data(), &[0.5, 0.5]);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let mut rng = seeded(2);
        for layer in all_kinds() {
            let w = layer.input_width().unwrap_or(12);
            let mut x = Tensor::zeros(3, w);
            fill_standard_normal(&mut rng, x.data_mut());
            let (y, cache) = layer.forward(&x).unwrap();
            let (dx, dp) = layer
                .backward(&cache, &Tensor::zeros(y.rows(), y.cols()))
                .unwrap();
            assert!(dx.data().iter().all(|v| *v == 0.0), "{}", layer.kind.name());
            assert!(dp.iter().all(|p| p.data().iter().all(|v| *v == 0.0)));
        }
    }

    #[test]
    fn every_kind_matches_finite_differences() {
        for layer in all_kinds() {
            let err = grad_check(&layer, 3, 5).unwrap();
            assert!(err < 1e-4, "{}: {err}", layer.kind.name());
        }
    }

    #[test]
    fn attention_is_permutation_equivariant() {
        let mut rng = seeded(4);
        let d = 3;
        let layer = Layer::self_attention(d, &mut rng);
        let mut x = Tensor::zeros(2, 4 * d);
        fill_standard_normal(&mut rng, x.data_mut());
        let perm = [2usize, 0, 3, 1];
        let permute = |t: &Tensor| {
            let mut out = t.clone();
            for r in 0..t.rows() {
                for (dst, &src) in perm.iter().enumerate() {
                    let from = t.row(r)[src * d..(src + 1) * d].to_vec();
                    out.row_mut(r)[dst * d..(dst + 1) * d].copy_from_slice(&from);
                }
            }
            out
        };
        let (y, _) = layer.forward(&x).unwrap();
        let (yp, _) = layer.forward(&permute(&x)).unwrap();
        for (a, b) in permute(&y).data().iter().zip(yp.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn shape_mismatch_and_stale_cache_are_rejected() {
        let mut rng = seeded(1);
        let mut layer = Layer::affine(3, 2, &mut rng);
        assert!(matches!(layer.forward(&Tensor::zeros(1, 4)), Err(Error::Shape(_))));
        let (_, cache) = layer.forward(&Tensor::zeros(1, 3)).unwrap();
        assert!(matches!(
            layer.backward(&cache, &Tensor::zeros(2, 2)),
            Err(Error::Shape(_))
        ));
        layer.params_mut()[0].data_mut()[0] = 1.0;
        assert!(matches!(
            layer.backward(&cache, &Tensor::zeros(1, 2)),
            Err(Error::StaleCache(_))
        ));
        let (_, sig_cache) = Layer::sigmoid().forward(&Tensor::zeros(1, 2)).unwrap();
        assert!(matches!(
            layer.backward(&sig_cache, &Tensor::zeros(1, 2)),
            Err(Error::StaleCache(_))
        ));
        let attn = Layer::self_attention(4, &mut rng);
        assert!(attn.forward(&Tensor::zeros(1, 6)).is_err());
    }

    #[test]
    fn non_finite_input_rejected() {
        let x = t(1, 2, &[1.0, f64::NAN]);
        assert!(matches!(Layer::tanh().forward(&x), Err(Error::NonFinite(_))));
    }
}

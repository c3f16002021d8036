//! Conditional GAN with a sanitized generator boundary.
//!
//! Per iteration the discriminator takes one ordinary (non-private) step,
//! the auxiliary classifier takes one step on real rows, and the generator
//! takes one step driven only by the gradient of its loss with respect to
//! its own output batch. That boundary gradient is clipped and noised
//! before it is pushed back through the generator, so the generator never
//! sees anything about the real data except through the sanitizer.

mod checkpoint;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use checkpoint::{load_checkpoint, save_checkpoint, FORMAT_VERSION, MAGIC};

use crate::codec::{encode_table, CodecState, EncodedLayout, EncodedTable, TableSchema};
use crate::error::{Error, Result};
use crate::network::{Network, Trace};
use crate::nn::{sigmoid, Layer, Span, DEFAULT_LEAK};
use crate::optim::AdamConfig;
use crate::privacy::{default_lambda_grid, sanitize, PrivacyLedger, SanitizerConfig, DEFAULT_DELTA};
use crate::rng::{fill_standard_normal, fork, seeded, RunRng};
use crate::tensor::Tensor;

/// Training hyperparameters, including the sanitizer's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Hyper {
    pub z_dim: usize,
    pub gen_hidden: Vec<usize>,
    pub disc_hidden: Vec<usize>,
    /// Exactly four widths.
    pub aux_hidden: Vec<usize>,
    pub batch: usize,
    pub steps: u64,
    pub sigma: f64,
    pub clip: f64,
    pub lambda_grid: Vec<u32>,
    pub delta: f64,
    pub seed: u64,
    pub aux_weight: f64,
    pub attention: bool,
    pub token_width: usize,
    pub max_modes: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub leak: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            z_dim: 64,
            gen_hidden: vec![256, 256],
            disc_hidden: vec![256, 256],
            aux_hidden: vec![128; 4],
            batch: 64,
            steps: 5000,
            sigma: 0.0,
            clip: 1.0,
            lambda_grid: default_lambda_grid(),
            delta: DEFAULT_DELTA,
            seed: 0,
            aux_weight: 1.0,
            attention: true,
            token_width: 16,
            max_modes: crate::codec::DEFAULT_MAX_MODES,
            lr: adam.lr,
            beta1: adam.beta1,
            beta2: adam.beta2,
            leak: DEFAULT_LEAK,
        }
    }
}

impl Hyper {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.batch < 2 {
            return bad("batch must be at least 2");
        }
        if self.steps < 1 {
            return bad("steps must be at least 1");
        }
        if self.z_dim < 1 {
            return bad("z_dim must be at least 1");
        }
        if self.aux_hidden.len() != 4 {
            return bad("aux_hidden must list exactly four widths");
        }
        if self.attention && self.token_width == 0 {
            return bad("token_width must be positive when attention is on");
        }
        if self.max_modes == 0 {
            return bad("max_modes must be positive");
        }
        let widths = self.gen_hidden.iter().chain(&self.disc_hidden).chain(&self.aux_hidden);
        if widths.clone().any(|w| *w == 0) {
            return bad("hidden widths must be positive");
        }
        if !(self.aux_weight >= 0.0 && self.aux_weight.is_finite()) {
            return bad("aux_weight must be finite and non-negative");
        }
        if !(self.lr > 0.0) || !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("optimizer settings out of range");
        }
        self.sanitizer()?;
        PrivacyLedger::new(self.sanitizer()?, self.lambda_grid.clone(), self.delta)?;
        Ok(())
    }

    pub fn sanitizer(&self) -> Result<SanitizerConfig> {
        SanitizerConfig::new(self.clip, self.batch, self.sigma)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn new_ledger(&self) -> Result<PrivacyLedger> {
        PrivacyLedger::new(self.sanitizer()?, self.lambda_grid.clone(), self.delta)
    }
}

/// Generator, discriminator and optional auxiliary classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Models {
    pub generator: Network,
    pub discriminator: Network,
    pub auxiliary: Option<Network>,
    pub layout: EncodedLayout,
    /// Target one-hot block predicted by the auxiliary classifier.
    pub target: Option<Span>,
    pub z_dim: usize,
}

impl Models {
    pub fn cond_width(&self) -> usize {
        self.layout.cond_width
    }

    pub fn row_width(&self) -> usize {
        self.layout.row_width
    }

    /// Generator input: `z ⊕ cond`.
    pub fn generator_input<R: Rng + ?Sized>(&self, cond: &Tensor, rng: &mut R) -> Result<Tensor> {
        let mut z = Tensor::zeros(cond.rows(), self.z_dim);
        fill_standard_normal(rng, z.data_mut());
        Tensor::hcat(&[&z, cond])
    }
}

/// Builds the three networks for `layout`.
///
/// `target` is the categorical target block, if any; the auxiliary network
/// is only built when it is present and `hyper.aux_weight > 0`.
pub fn init_models<R: Rng + ?Sized>(
    layout: &EncodedLayout,
    target: Option<Span>,
    hyper: &Hyper,
    rng: &mut R,
) -> Result<Models> {
    hyper.validate()?;
    let columns = layout.blocks.len();
    if columns == 0 || layout.row_width == 0 {
        return Err(Error::Config("layout has no columns".into()));
    }
    let covered: usize = layout.blocks.iter().map(|b| b.width()).sum();
    if covered != layout.row_width {
        return Err(Error::Config("layout blocks do not tile the row".into()));
    }
    if let Some(t) = target {
        if t.end() > layout.row_width || t.len < 2 {
            return Err(Error::Config("target block outside layout or not categorical".into()));
        }
    }
    let adam = hyper.adam();
    let leak = hyper.leak;

    let mut g = Vec::new();
    let mut width = hyper.z_dim + layout.cond_width;
    for &h in &hyper.gen_hidden {
        g.push(Layer::affine(width, h, rng));
        g.push(Layer::layer_norm(h));
        g.push(Layer::leaky_relu(leak));
        width = h;
    }
    if hyper.attention {
        let embed = columns * hyper.token_width;
        g.push(Layer::affine(width, embed, rng));
        g.push(Layer::self_attention(hyper.token_width, rng));
        g.push(Layer::leaky_relu(leak));
        width = embed;
    }
    g.push(Layer::affine(width, layout.row_width, rng));
    g.push(Layer::tanh_spans(layout.alpha_spans()));
    g.push(Layer::softmax_group(layout.one_hot_spans()));

    let mut d = Vec::new();
    let mut width = layout.row_width + layout.cond_width;
    for &h in &hyper.disc_hidden {
        d.push(Layer::affine(width, h, rng));
        d.push(Layer::layer_norm(h));
        d.push(Layer::leaky_relu(leak));
        width = h;
    }
    d.push(Layer::affine(width, 1, rng));
    d.push(Layer::sigmoid());

    let auxiliary = match target {
        Some(t) if hyper.aux_weight > 0.0 => {
            let mut a = Vec::new();
            let mut width = layout.row_width - t.len;
            for &h in &hyper.aux_hidden {
                a.push(Layer::affine(width, h, rng));
                a.push(Layer::leaky_relu(leak));
                width = h;
            }
            a.push(Layer::affine(width, t.len, rng));
            Some(Network::new(a, adam))
        }
        _ => None,
    };

    Ok(Models {
        generator: Network::new(g, adam),
        discriminator: Network::new(d, adam),
        target: auxiliary.as_ref().and(target),
        auxiliary,
        layout: layout.clone(),
        z_dim: hyper.z_dim,
    })
}

/// Drops the target block's columns from each row.
pub fn without_target(rows: &Tensor, target: Span) -> Tensor {
    let w = rows.cols();
    let left = rows.slice_cols(0, target.start);
    let right = rows.slice_cols(target.end(), w - target.end());
    Tensor::hcat(&[&left, &right]).expect("same row count")
}

/// Scatters a gradient over `row minus target` back into full row width.
fn scatter_without_target(grad: &Tensor, target: Span, full: usize) -> Tensor {
    let mut out = Tensor::zeros(grad.rows(), full);
    for r in 0..grad.rows() {
        let g = grad.row(r);
        let o = out.row_mut(r);
        o[..target.start].copy_from_slice(&g[..target.start]);
        o[target.end()..].copy_from_slice(&g[target.start..]);
    }
    out
}

/// `softplus(x) = ln(1 + eˣ)`, stable for large |x|.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Discriminator forward up to the logit (all but the sigmoid).
fn disc_logits(d: &Network, x: &Tensor) -> Result<(Tensor, Trace)> {
    d.forward_prefix(x, d.layers.len() - 1)
}

/// Mean binary cross-entropy of `logits` against a constant `label`;
/// returns the loss and `∂loss/∂logit`.
fn bce_with_logits(logits: &Tensor, label: f64) -> (f64, Tensor) {
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = Tensor::zeros(logits.rows(), 1);
    for (i, &l) in logits.data().iter().enumerate() {
        loss += if label == 1.0 { softplus(-l) } else { softplus(l) };
        grad.data_mut()[i] = (sigmoid(l) - label) / n;
    }
    (loss / n, grad)
}

/// Mean softmax cross-entropy of `logits` against integer labels.
fn cross_entropy(logits: &Tensor, labels: &[usize]) -> (f64, Tensor) {
    let n = logits.rows() as f64;
    let mut loss = 0.0;
    let mut grad = logits.clone();
    for (r, &y) in labels.iter().enumerate() {
        let row = grad.row_mut(r);
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        loss += lse - row[y];
        for v in row.iter_mut() {
            *v = (*v - lse).exp() / n;
        }
        row[y] -= 1.0 / n;
    }
    (loss / n, grad)
}

fn argmax_labels(rows: &Tensor, block: Span) -> Vec<usize> {
    rows.iter_rows()
        .map(|r| crate::codec::argmax(&r[block.range()]))
        .collect()
}

/// One non-private discriminator step on real rows (with their condition
/// vectors) against freshly generated rows under the same conditions.
pub fn disc_step<R: Rng + ?Sized>(
    models: &mut Models,
    real: &Tensor,
    cond: &Tensor,
    rng: &mut R,
) -> Result<f64> {
    if real.rows() != cond.rows() || real.rows() == 0 {
        return Err(Error::Shape(format!(
            "disc_step: {} real rows vs {} conditions",
            real.rows(),
            cond.rows()
        )));
    }
    real.ensure_shape(real.rows(), models.row_width(), "real batch")?;
    cond.ensure_shape(real.rows(), models.cond_width(), "condition batch")?;
    let fake = models.generator.predict(&models.generator_input(cond, rng)?)?;

    let d = &models.discriminator;
    let (real_logits, real_trace) = disc_logits(d, &Tensor::hcat(&[real, cond])?)?;
    let (fake_logits, fake_trace) = disc_logits(d, &Tensor::hcat(&[&fake, cond])?)?;
    let (real_loss, real_grad) = bce_with_logits(&real_logits, 1.0);
    let (fake_loss, fake_grad) = bce_with_logits(&fake_logits, 0.0);
    let (_, mut grads) = d.backward(&real_trace, &real_grad)?;
    let (_, fake_grads) = d.backward(&fake_trace, &fake_grad)?;
    for (g, f) in grads.iter_mut().zip(&fake_grads) {
        g.add_assign(f)?;
    }
    models.discriminator.apply_gradients(&grads)?;
    Ok(real_loss + fake_loss)
}

/// One cross-entropy step of the auxiliary classifier on real rows.
pub fn aux_step(models: &mut Models, real: &Tensor) -> Result<f64> {
    let (Some(aux), Some(target)) = (models.auxiliary.as_mut(), models.target) else {
        return Err(Error::Config(
            "auxiliary classifier needs a categorical target column".into(),
        ));
    };
    real.ensure_shape(real.rows(), models.layout.row_width, "real batch")?;
    let labels = argmax_labels(real, target);
    let (logits, trace) = aux.forward(&without_target(real, target))?;
    let (loss, grad) = cross_entropy(&logits, &labels);
    let (_, grads) = aux.backward(&trace, &grad)?;
    aux.apply_gradients(&grads)?;
    Ok(loss)
}

/// Diagnostics from one generator step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenStepReport {
    pub loss: f64,
    pub adversarial_loss: f64,
    pub aux_loss: f64,
    /// Norm of the boundary gradient before sanitization.
    pub raw_norm: f64,
    /// Norm of the sanitized gradient fed back into the generator.
    pub sanitized_norm: f64,
}

/// Loss and gradient of the generator objective with respect to the
/// generated batch (`∇_{G(z)} L_G`), computed through D and A only.
pub fn boundary_gradient(
    models: &Models,
    fake: &Tensor,
    cond: &Tensor,
    cond_labels: &[Option<usize>],
    aux_weight: f64,
) -> Result<(f64, f64, Tensor)> {
    let d = &models.discriminator;
    let (logits, trace) = disc_logits(d, &Tensor::hcat(&[fake, cond])?)?;
    // Non-saturating objective: maximize log D(G(z)).
    let (adv_loss, dlogits) = bce_with_logits(&logits, 1.0);
    let (d_in, _) = d.backward(&trace, &dlogits)?;
    let mut grad = d_in.slice_cols(0, models.row_width());

    let mut aux_loss = 0.0;
    if let (Some(aux), Some(target)) = (models.auxiliary.as_ref(), models.target) {
        if aux_weight > 0.0 {
            let generated = argmax_labels(fake, target);
            let labels: Vec<usize> = cond_labels
                .iter()
                .zip(generated)
                .map(|(c, g)| c.unwrap_or(g))
                .collect();
            let (logits, trace) = aux.forward(&without_target(fake, target))?;
            let (loss, dlogits) = cross_entropy(&logits, &labels);
            let (a_in, _) = aux.backward(&trace, &dlogits)?;
            let mut a_full = scatter_without_target(&a_in, target, models.row_width());
            a_full.scale(aux_weight);
            grad.add_assign(&a_full)?;
            aux_loss = loss;
        }
    }
    Ok((adv_loss + aux_weight * aux_loss, adv_loss, grad))
}

/// Target-category label implied by each condition, when the condition
/// selects a mode of the target column.
fn condition_labels(models: &Models, conds: &[(usize, usize)], target_col: Option<usize>) -> Vec<Option<usize>> {
    conds
        .iter()
        .map(|&(c, m)| (models.target.is_some() && Some(c) == target_col).then_some(m))
        .collect()
}

/// One generator update through the sanitized boundary. Records the update
/// in `ledger` when the run is private.
pub fn gen_step<R: Rng + ?Sized>(
    models: &mut Models,
    codec: &CodecState,
    ledger: &mut PrivacyLedger,
    aux_weight: f64,
    rng: &mut R,
) -> Result<GenStepReport> {
    let batch = ledger.config.batch;
    let (cond, conds) = sample_conditions(codec, batch, rng)?;
    let target_col = codec.target_block().map(|(c, _)| c);
    let labels = condition_labels(models, &conds, target_col);
    let input = models.generator_input(&cond, rng)?;
    let (fake, g_trace) = models.generator.forward(&input)?;
    let (loss, adv, boundary) = boundary_gradient(models, &fake, &cond, &labels, aux_weight)?;
    let sanitized = sanitize(&boundary, &ledger.config, rng)?;
    let (_, grads) = models.generator.backward(&g_trace, &sanitized)?;
    models.generator.apply_gradients(&grads)?;
    if ledger.config.is_private() {
        ledger.record_update()?;
    }
    Ok(GenStepReport {
        loss,
        adversarial_loss: adv,
        aux_loss: if aux_weight > 0.0 { (loss - adv) / aux_weight } else { 0.0 },
        raw_norm: boundary.norm(),
        sanitized_norm: sanitized.norm(),
    })
}

/// Draws `n` training conditions (log-frequency mode weights).
pub fn sample_conditions<R: Rng + ?Sized>(
    codec: &CodecState,
    n: usize,
    rng: &mut R,
) -> Result<(Tensor, Vec<(usize, usize)>)> {
    let mut cond = Tensor::zeros(n, codec.layout.cond_width);
    let mut picks = Vec::with_capacity(n);
    for r in 0..n {
        let (c, m) = codec.sample_condition_index(rng)?;
        cond.set(r, codec.layout.blocks[c].cond.start + m, 1.0);
        picks.push((c, m));
    }
    Ok((cond, picks))
}

/// Real rows matching each condition (uniform among matches; uniform over
/// the table if a condition has none), with the matching condition batch.
pub fn sample_real_batch<R: Rng + ?Sized>(
    table: &EncodedTable,
    codec: &CodecState,
    batch: usize,
    rng: &mut R,
) -> Result<(Tensor, Tensor)> {
    let (cond, picks) = sample_conditions(codec, batch, rng)?;
    let rows: Vec<usize> = picks
        .iter()
        .map(|&(c, m)| {
            let pool = &table.rows_by_mode[c][m];
            if pool.is_empty() {
                rng.gen_range(0..table.data.rows())
            } else {
                pool[rng.gen_range(0..pool.len())]
            }
        })
        .collect();
    Ok((table.data.gather_rows(&rows), cond))
}

/// A trained model: everything needed to sample without the training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub hyper: Hyper,
    pub codec: CodecState,
    pub models: Models,
    pub ledger: PrivacyLedger,
    pub step: u64,
    /// Rows dropped while encoding the training table.
    pub dropped_rows: usize,
}

impl Checkpoint {
    /// `(ε, λ*)` consumed so far, or `None` for a non-private run.
    pub fn epsilon(&self) -> Result<Option<(f64, u32)>> {
        if self.ledger.config.is_private() {
            self.ledger.epsilon().map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Per-iteration losses, reported to the progress callback.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepLosses {
    pub step: u64,
    pub disc: f64,
    pub aux: Option<f64>,
    pub gen: f64,
}

/// Encodes the table and trains for `hyper.steps` iterations.
pub fn fit(raw: &[Vec<String>], schema: &TableSchema, hyper: &Hyper) -> Result<Checkpoint> {
    fit_with_progress(raw, schema, hyper, |_| {})
}

pub fn fit_with_progress(
    raw: &[Vec<String>],
    schema: &TableSchema,
    hyper: &Hyper,
    mut progress: impl FnMut(&StepLosses),
) -> Result<Checkpoint> {
    hyper.validate()?;
    let (table, codec) = encode_table(raw, schema, hyper.max_modes, hyper.seed)?;
    let mut master = seeded(hyper.seed);
    let mut init_rng = fork(&mut master);
    let mut rng: RunRng = fork(&mut master);
    let target = codec.target_block().map(|(_, span)| span);
    let mut models = init_models(&codec.layout, target, hyper, &mut init_rng)?;
    let mut ledger = hyper.new_ledger()?;
    for step in 1..=hyper.steps {
        let (real, cond) = sample_real_batch(&table, &codec, hyper.batch, &mut rng)?;
        let disc = disc_step(&mut models, &real, &cond, &mut rng)?;
        let aux = if models.auxiliary.is_some() {
            Some(aux_step(&mut models, &real)?)
        } else {
            None
        };
        let gen = gen_step(&mut models, &codec, &mut ledger, hyper.aux_weight, &mut rng)?;
        progress(&StepLosses {
            step,
            disc,
            aux,
            gen: gen.loss,
        });
    }
    Ok(Checkpoint {
        hyper: hyper.clone(),
        codec,
        models,
        ledger,
        step: hyper.steps,
        dropped_rows: table.dropped,
    })
}

/// Generates `n` encoded rows with hardened one-hot blocks.
///
/// Conditions are drawn with the empirical mode frequencies so every
/// column's marginal follows the fitted table.
pub fn generate_encoded<R: Rng + ?Sized>(checkpoint: &Checkpoint, n: usize, rng: &mut R) -> Result<Tensor> {
    if n == 0 {
        return Err(Error::Config("sample size must be at least 1".into()));
    }
    let codec = &checkpoint.codec;
    let models = &checkpoint.models;
    let mut cond = Tensor::zeros(n, codec.layout.cond_width);
    for r in 0..n {
        let (c, m) = empirical_condition(codec, rng)?;
        cond.set(r, codec.layout.blocks[c].cond.start + m, 1.0);
    }
    let mut out = models.generator.predict(&models.generator_input(&cond, rng)?)?;
    for r in 0..n {
        let row = out.row_mut(r);
        for block in &codec.layout.blocks {
            let span = block.one_hot;
            let hot = crate::codec::argmax(&row[span.range()]);
            for (i, v) in row[span.range()].iter_mut().enumerate() {
                *v = if i == hot { 1.0 } else { 0.0 };
            }
        }
    }
    Ok(out)
}

fn empirical_condition<R: Rng + ?Sized>(codec: &CodecState, rng: &mut R) -> Result<(usize, usize)> {
    let columns = codec.frequencies.len();
    if columns == 0 {
        return Err(Error::Data("frequency table is empty".into()));
    }
    let c = rng.gen_range(0..columns);
    let counts = &codec.frequencies[c];
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(Error::Data("frequency table is empty".into()));
    }
    let mut target = rng.gen_range(0..total);
    for (m, &k) in counts.iter().enumerate() {
        if target < k {
            return Ok((c, m));
        }
        target -= k;
    }
    unreachable!("target below total count")
}

/// Draws `n` synthetic rows as raw cells in schema order. Pure
/// post-processing: touches neither training data nor the ledger.
pub fn sample<R: Rng + ?Sized>(checkpoint: &Checkpoint, n: usize, rng: &mut R) -> Result<Vec<Vec<String>>> {
    let encoded = generate_encoded(checkpoint, n, rng)?;
    checkpoint.codec.decode_table(&encoded)
}

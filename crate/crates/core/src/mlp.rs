//! From-scratch feedforward regressor: the fixed hidden stack used in the
//! experiments, MSE loss, exact backpropagation, Adam training with
//! validation-best checkpointing, and a plain-text model file.

use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng::{derive_rng, SeedDomain};
use crate::scalar::Scalar;

/// Per-layer nonlinearity.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    pub fn tag(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Linear => "linear",
        }
    }

    pub fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "relu" => Ok(Activation::Relu),
            "linear" => Ok(Activation::Linear),
            other => Err(Error::format(format!("unknown activation tag `{other}`"))),
        }
    }

    fn apply<F: Scalar>(self, z: F) -> F {
        match self {
            Activation::Relu => z.max(F::zero()),
            Activation::Linear => z,
        }
    }

    /// Derivative with respect to the pre-activation, expressed through
    /// the post-activation value (valid for both supported activations).
    fn backprop_factor<F: Scalar>(self, post: F) -> F {
        match self {
            Activation::Relu => {
                if post > F::zero() {
                    F::one()
                } else {
                    F::zero()
                }
            }
            Activation::Linear => F::one(),
        }
    }
}

/// Hidden widths of the fixed regression stack used in the experiments.
pub const HIDDEN_WIDTHS: [usize; 4] = [18, 32, 16, 8];
/// Networks always emit a 2D position estimate.
pub const OUTPUT_WIDTH: usize = 2;

/// Network shape: layer widths from input to output. Hidden layers are
/// relu, the output layer is linear.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MlpSpec {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::domain("a network needs at least two layers"));
        }
        if widths.iter().any(|&w| w == 0) {
            return Err(Error::domain("layer widths must be positive"));
        }
        if *widths.last().unwrap() != OUTPUT_WIDTH {
            return Err(Error::domain(format!(
                "output width must be {OUTPUT_WIDTH}, got {}",
                widths.last().unwrap()
            )));
        }
        let mut activations = vec![Activation::Relu; widths.len() - 2];
        activations.push(Activation::Linear);
        Ok(Self {
            widths,
            activations,
        })
    }

    /// The standard stack: `input -> 18 -> 32 -> 16 -> 8 -> 2`.
    pub fn standard(input_width: usize) -> Result<Self> {
        let mut widths = vec![input_width];
        widths.extend_from_slice(&HIDDEN_WIDTHS);
        widths.push(OUTPUT_WIDTH);
        Self::new(widths)
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn activations(&self) -> &[Activation] {
        &self.activations
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn param_count(&self) -> usize {
        self.widths
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }
}

/// One dense layer. Weights are stored input-major:
/// `weights[i * output_width + j]` connects input `i` to unit `j`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer<F> {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
    pub weights: Vec<F>,
    pub biases: Vec<F>,
}

impl<F: Scalar> DenseLayer<F> {
    fn apply(&self, input: &[F], out: &mut [F]) {
        out.copy_from_slice(&self.biases);
        for (i, &x) in input.iter().enumerate() {
            let row = &self.weights[i * self.output_width..(i + 1) * self.output_width];
            for (o, &w) in out.iter_mut().zip(row) {
                *o += x * w;
            }
        }
        for o in out.iter_mut() {
            *o = self.activation.apply(*o);
        }
    }
}

/// All trainable parameters of a network.
#[derive(Clone, Debug, PartialEq)]
pub struct MlpParams<F> {
    pub layers: Vec<DenseLayer<F>>,
}

impl<F: Scalar> MlpParams<F> {
    pub fn spec(&self) -> MlpSpec {
        let mut widths = vec![self.layers[0].input_width];
        widths.extend(self.layers.iter().map(|l| l.output_width));
        MlpSpec {
            widths,
            activations: self.layers.iter().map(|l| l.activation).collect(),
        }
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().unwrap().output_width
    }

    pub fn param_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }
}

/// He-style initialization: zero-mean normal weights with standard
/// deviation `sqrt(2 / fan_in)`, zero biases. Deterministic in `seed`.
pub fn init_params<F: Scalar>(spec: &MlpSpec, seed: u64) -> MlpParams<F> {
    let mut rng = derive_rng(seed, SeedDomain::MlpInit, 0);
    let two = F::from(2.0).unwrap();
    let mut layers = Vec::with_capacity(spec.widths.len() - 1);
    for (idx, pair) in spec.widths.windows(2).enumerate() {
        let (fan_in, fan_out) = (pair[0], pair[1]);
        let std = (two / F::from(fan_in).unwrap()).sqrt();
        let weights = (0..fan_in * fan_out)
            .map(|_| F::standard_normal(&mut rng) * std)
            .collect();
        layers.push(DenseLayer {
            input_width: fan_in,
            output_width: fan_out,
            activation: spec.activations[idx],
            weights,
            biases: vec![F::zero(); fan_out],
        });
    }
    MlpParams { layers }
}

/// Forward pass; returns the normalized position estimate.
pub fn forward<F: Scalar>(params: &MlpParams<F>, features: &[F]) -> Result<[F; 2]> {
    if features.len() != params.input_width() {
        return Err(Error::dimension(format!(
            "network expects {} inputs, got {}",
            params.input_width(),
            features.len()
        )));
    }
    let mut cur = features.to_vec();
    let mut next = Vec::new();
    for layer in &params.layers {
        next.clear();
        next.resize(layer.output_width, F::zero());
        layer.apply(&cur, &mut next);
        std::mem::swap(&mut cur, &mut next);
    }
    Ok([cur[0], cur[1]])
}

/// Mean over the batch of the squared Euclidean error.
pub fn loss_mse<F: Scalar>(predictions: &[[F; 2]], targets: &[[F; 2]]) -> Result<F> {
    if predictions.is_empty() {
        return Err(Error::domain("loss of an empty batch is undefined"));
    }
    if predictions.len() != targets.len() {
        return Err(Error::dimension(format!(
            "{} predictions vs {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sum = predictions
        .iter()
        .zip(targets)
        .map(|(p, t)| {
            let dx = p[0] - t[0];
            let dy = p[1] - t[1];
            dx * dx + dy * dy
        })
        .sum::<F>();
    Ok(sum / F::from(predictions.len()).unwrap())
}

/// Parameter gradients, shaped like the network they came from.
#[derive(Clone, Debug)]
pub struct MlpGrads<F> {
    pub weights: Vec<Vec<F>>,
    pub biases: Vec<Vec<F>>,
}

impl<F: Scalar> MlpGrads<F> {
    fn zeros(params: &MlpParams<F>) -> Self {
        Self {
            weights: params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.weights.len()])
                .collect(),
            biases: params
                .layers
                .iter()
                .map(|l| vec![F::zero(); l.biases.len()])
                .collect(),
        }
    }

    fn reset(&mut self) {
        for w in &mut self.weights {
            w.fill(F::zero());
        }
        for b in &mut self.biases {
            b.fill(F::zero());
        }
    }
}

/// Reusable per-sample activation and delta storage.
struct Scratch<F> {
    /// acts[0] is the input, acts[l + 1] the output of layer l.
    acts: Vec<Vec<F>>,
    delta: Vec<F>,
    delta_prev: Vec<F>,
}

impl<F: Scalar> Scratch<F> {
    fn new(params: &MlpParams<F>) -> Self {
        let mut acts = Vec::with_capacity(params.layers.len() + 1);
        acts.push(vec![F::zero(); params.input_width()]);
        for layer in &params.layers {
            acts.push(vec![F::zero(); layer.output_width]);
        }
        let widest = params
            .layers
            .iter()
            .map(|l| l.input_width.max(l.output_width))
            .max()
            .unwrap();
        Self {
            acts,
            delta: vec![F::zero(); widest],
            delta_prev: vec![F::zero(); widest],
        }
    }
}

fn forward_trace<F: Scalar>(params: &MlpParams<F>, features: &[F], scratch: &mut Scratch<F>) {
    scratch.acts[0].copy_from_slice(features);
    for (l, layer) in params.layers.iter().enumerate() {
        let (head, tail) = scratch.acts.split_at_mut(l + 1);
        layer.apply(&head[l], &mut tail[0]);
    }
}

/// Accumulates the gradient of one sample's contribution to the batch-mean
/// squared error into `grads`; `weight` is `2 / batch_size`.
fn accumulate_sample<F: Scalar>(
    params: &MlpParams<F>,
    features: &[F],
    target: &[F; 2],
    weight: F,
    grads: &mut MlpGrads<F>,
    scratch: &mut Scratch<F>,
) {
    forward_trace(params, features, scratch);
    let n_layers = params.layers.len();
    let out = &scratch.acts[n_layers];
    scratch.delta[0] = (out[0] - target[0]) * weight;
    scratch.delta[1] = (out[1] - target[1]) * weight;

    for l in (0..n_layers).rev() {
        let layer = &params.layers[l];
        let input = &scratch.acts[l];
        let gw = &mut grads.weights[l];
        for (i, &x) in input.iter().enumerate() {
            let row = &mut gw[i * layer.output_width..(i + 1) * layer.output_width];
            for (g, &d) in row.iter_mut().zip(&scratch.delta[..layer.output_width]) {
                *g += x * d;
            }
        }
        for (g, &d) in grads.biases[l]
            .iter_mut()
            .zip(&scratch.delta[..layer.output_width])
        {
            *g += d;
        }
        if l > 0 {
            let prev_layer = &params.layers[l - 1];
            let prev_act = prev_layer.activation;
            for (i, slot) in scratch.delta_prev[..layer.input_width].iter_mut().enumerate() {
                let row = &layer.weights[i * layer.output_width..(i + 1) * layer.output_width];
                let mut acc = F::zero();
                for (&w, &d) in row.iter().zip(&scratch.delta[..layer.output_width]) {
                    acc += w * d;
                }
                *slot = acc * prev_act.backprop_factor(input[i]);
            }
            std::mem::swap(&mut scratch.delta, &mut scratch.delta_prev);
        }
    }
}

/// Exact gradients of [`loss_mse`] with respect to every weight and bias,
/// over a batch.
pub fn backward<F: Scalar, S: AsRef<[F]>>(
    params: &MlpParams<F>,
    features: &[S],
    targets: &[[F; 2]],
) -> Result<MlpGrads<F>> {
    if features.is_empty() {
        return Err(Error::domain("gradient of an empty batch is undefined"));
    }
    if features.len() != targets.len() {
        return Err(Error::dimension(format!(
            "{} feature rows vs {} targets",
            features.len(),
            targets.len()
        )));
    }
    for f in features {
        if f.as_ref().len() != params.input_width() {
            return Err(Error::dimension(format!(
                "network expects {} inputs, got {}",
                params.input_width(),
                f.as_ref().len()
            )));
        }
    }
    let mut grads = MlpGrads::zeros(params);
    let mut scratch = Scratch::new(params);
    let weight = F::from(2.0).unwrap() / F::from(features.len()).unwrap();
    for (f, t) in features.iter().zip(targets) {
        accumulate_sample(params, f.as_ref(), t, weight, &mut grads, &mut scratch);
    }
    Ok(grads)
}

/// Per-epoch record in the training log.
#[derive(Clone, Debug, PartialEq)]
pub struct EpochStats<F> {
    pub epoch: usize,
    pub train_mse: F,
    pub val_mse: F,
}

/// Training knobs. The defaults are the ones used by the experiments.
#[derive(Clone, Debug)]
pub struct TrainConfig<F> {
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: F,
    pub seed: u64,
    /// Fraction of samples (taken from the tail) held out for
    /// validation-best checkpointing.
    pub validation_fraction: F,
}

impl<F: Scalar> Default for TrainConfig<F> {
    fn default() -> Self {
        Self {
            batch_size: 32,
            epochs: 100,
            learning_rate: F::from(1e-3).unwrap(),
            seed: 0,
            validation_fraction: F::from(0.1).unwrap(),
        }
    }
}

/// Result of a training run: the checkpointed parameters plus the log.
#[derive(Clone, Debug)]
pub struct TrainOutcome<F> {
    pub params: MlpParams<F>,
    pub log: Vec<EpochStats<F>>,
    pub best_epoch: usize,
}

const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

struct AdamState<F> {
    m: MlpGrads<F>,
    v: MlpGrads<F>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    fn new(params: &MlpParams<F>) -> Self {
        Self {
            m: MlpGrads::zeros(params),
            v: MlpGrads::zeros(params),
            step: 0,
        }
    }

    fn update(&mut self, params: &mut MlpParams<F>, grads: &MlpGrads<F>, lr: F) {
        self.step += 1;
        let b1 = F::from(ADAM_BETA1).unwrap();
        let b2 = F::from(ADAM_BETA2).unwrap();
        let eps = F::from(ADAM_EPS).unwrap();
        let one = F::one();
        let corr1 = one - F::from(ADAM_BETA1.powi(self.step as i32)).unwrap();
        let corr2 = one - F::from(ADAM_BETA2.powi(self.step as i32)).unwrap();
        for (l, layer) in params.layers.iter_mut().enumerate() {
            adam_slice(
                &mut layer.weights,
                &grads.weights[l],
                &mut self.m.weights[l],
                &mut self.v.weights[l],
                lr,
                b1,
                b2,
                eps,
                corr1,
                corr2,
            );
            adam_slice(
                &mut layer.biases,
                &grads.biases[l],
                &mut self.m.biases[l],
                &mut self.v.biases[l],
                lr,
                b1,
                b2,
                eps,
                corr1,
                corr2,
            );
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn adam_slice<F: Scalar>(
    params: &mut [F],
    grads: &[F],
    m: &mut [F],
    v: &mut [F],
    lr: F,
    b1: F,
    b2: F,
    eps: F,
    corr1: F,
    corr2: F,
) {
    let one = F::one();
    for i in 0..params.len() {
        let g = grads[i];
        m[i] = b1 * m[i] + (one - b1) * g;
        v[i] = b2 * v[i] + (one - b2) * g * g;
        let m_hat = m[i] / corr1;
        let v_hat = v[i] / corr2;
        params[i] = params[i] - lr * m_hat / (v_hat.sqrt() + eps);
    }
}

/// Mini-batch Adam training with per-epoch shuffling and validation-best
/// checkpointing. Deterministic in `config.seed`.
pub fn train<F: Scalar, S: AsRef<[F]>>(
    spec: &MlpSpec,
    config: &TrainConfig<F>,
    features: &[S],
    targets: &[[F; 2]],
) -> Result<TrainOutcome<F>> {
    if features.is_empty() {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    if features.len() != targets.len() {
        return Err(Error::dimension(format!(
            "{} feature rows vs {} targets",
            features.len(),
            targets.len()
        )));
    }
    if features[0].as_ref().len() != spec.input_width() {
        return Err(Error::dimension(format!(
            "network expects {} inputs, dataset provides {}",
            spec.input_width(),
            features[0].as_ref().len()
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::domain("batch size must be at least 1"));
    }
    if !(config.learning_rate > F::zero()) {
        return Err(Error::domain("learning rate must be positive"));
    }
    let vf = config.validation_fraction;
    if !(vf >= F::zero() && vf < F::one()) {
        return Err(Error::domain("validation fraction must lie in [0, 1)"));
    }

    let n = features.len();
    let n_val = (vf * F::from(n).unwrap())
        .floor()
        .to_usize()
        .unwrap_or(0)
        .min(n - 1);
    let n_train = n - n_val;

    let mut params = init_params::<F>(spec, config.seed);
    let mut adam = AdamState::new(&params);
    let mut grads = MlpGrads::zeros(&params);
    let mut scratch = Scratch::new(&params);
    let two = F::from(2.0).unwrap();

    let mut order: Vec<usize> = (0..n_train).collect();
    let mut log = Vec::with_capacity(config.epochs);
    let mut best_val = F::infinity();
    let mut best_epoch = 0;
    let mut best_params = params.clone();

    for epoch in 0..config.epochs {
        let mut rng = derive_rng(config.seed, SeedDomain::EpochShuffle, epoch as u64);
        order.shuffle(&mut rng);

        let mut loss_sum = F::zero();
        for batch in order.chunks(config.batch_size) {
            grads.reset();
            let weight = two / F::from(batch.len()).unwrap();
            let mut batch_loss = F::zero();
            for &idx in batch {
                let f = features[idx].as_ref();
                let t = &targets[idx];
                accumulate_sample(&params, f, t, weight, &mut grads, &mut scratch);
                let out = &scratch.acts[params.layers.len()];
                let dx = out[0] - t[0];
                let dy = out[1] - t[1];
                batch_loss += dx * dx + dy * dy;
            }
            if !batch_loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "non-finite loss at epoch {epoch}"
                )));
            }
            loss_sum += batch_loss;
            adam.update(&mut params, &grads, config.learning_rate);
        }
        let train_mse = loss_sum / F::from(n_train).unwrap();

        let val_mse = if n_val > 0 {
            let mut acc = F::zero();
            for idx in n_train..n {
                forward_trace(&params, features[idx].as_ref(), &mut scratch);
                let out = &scratch.acts[params.layers.len()];
                let dx = out[0] - targets[idx][0];
                let dy = out[1] - targets[idx][1];
                acc += dx * dx + dy * dy;
            }
            acc / F::from(n_val).unwrap()
        } else {
            train_mse
        };
        if !val_mse.is_finite() {
            return Err(Error::Diverged(format!(
                "non-finite validation loss at epoch {epoch}"
            )));
        }

        if val_mse < best_val {
            best_val = val_mse;
            best_epoch = epoch;
            best_params = params.clone();
        }
        log.push(EpochStats {
            epoch,
            train_mse,
            val_mse,
        });
    }

    Ok(TrainOutcome {
        params: best_params,
        log,
        best_epoch,
    })
}

/// Provenance stored in a model file: the feature layout the model was
/// trained on and the inter-site distance of the training data. Estimates
/// are normalized positions; multiply by the inter-site distance of the
/// data being evaluated.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelMeta {
    pub feature_schema: String,
    pub train_d_cell: f64,
}

pub const MODEL_FORMAT: &str = "otdoa-mlp/1";

/// Writes a model as line-oriented text. Floats use the shortest
/// round-trip rendering, so save/load is bit-exact.
pub fn save_model<F: Scalar>(path: &Path, params: &MlpParams<F>, meta: &ModelMeta) -> Result<()> {
    let mut out = String::new();
    out.push_str(&format!("format = {MODEL_FORMAT}\n"));
    out.push_str(&format!("feature_schema = {}\n", meta.feature_schema));
    out.push_str(&format!("train_d_cell = {}\n", meta.train_d_cell));
    let spec = params.spec();
    out.push_str("widths =");
    for w in spec.widths() {
        out.push_str(&format!(" {w}"));
    }
    out.push('\n');
    out.push_str("activations =");
    for a in spec.activations() {
        out.push_str(&format!(" {}", a.tag()));
    }
    out.push('\n');
    for (l, layer) in params.layers.iter().enumerate() {
        out.push_str(&format!("weights {l} ="));
        for w in &layer.weights {
            out.push_str(&format!(" {w}"));
        }
        out.push('\n');
        out.push_str(&format!("biases {l} ="));
        for b in &layer.biases {
            out.push_str(&format!(" {b}"));
        }
        out.push('\n');
    }
    fs::write(path, out)?;
    Ok(())
}

/// Reads a model file written by [`save_model`].
pub fn load_model<F: Scalar>(path: &Path) -> Result<(MlpParams<F>, ModelMeta)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();

    let format = field(lines.next(), "format")?;
    if format != MODEL_FORMAT {
        return Err(Error::format(format!(
            "expected model format {MODEL_FORMAT}, found `{format}`"
        )));
    }
    let feature_schema = field(lines.next(), "feature_schema")?.to_string();
    let train_d_cell: f64 = field(lines.next(), "train_d_cell")?
        .parse()
        .map_err(|e| Error::format(format!("bad train_d_cell: {e}")))?;
    let widths = field(lines.next(), "widths")?
        .split_whitespace()
        .map(|t| {
            t.parse::<usize>()
                .map_err(|e| Error::format(format!("bad width `{t}`: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let activations = field(lines.next(), "activations")?
        .split_whitespace()
        .map(Activation::from_tag)
        .collect::<Result<Vec<_>>>()?;
    if widths.len() < 2 || activations.len() != widths.len() - 1 {
        return Err(Error::format("widths and activations do not chain"));
    }

    let mut layers = Vec::with_capacity(widths.len() - 1);
    for l in 0..widths.len() - 1 {
        let (input_width, output_width) = (widths[l], widths[l + 1]);
        let weights = parse_values::<F>(
            field(lines.next(), &format!("weights {l}"))?,
            input_width * output_width,
        )?;
        let biases = parse_values::<F>(
            field(lines.next(), &format!("biases {l}"))?,
            output_width,
        )?;
        layers.push(DenseLayer {
            input_width,
            output_width,
            activation: activations[l],
            weights,
            biases,
        });
    }

    Ok((
        MlpParams { layers },
        ModelMeta {
            feature_schema,
            train_d_cell,
        },
    ))
}

fn field<'a>(line: Option<&'a str>, key: &str) -> Result<&'a str> {
    let line = line.ok_or_else(|| Error::format(format!("missing `{key}` line")))?;
    let (k, v) = line
        .split_once('=')
        .ok_or_else(|| Error::format(format!("malformed line `{line}`")))?;
    if k.trim() != key {
        return Err(Error::format(format!(
            "expected key `{key}`, found `{}`",
            k.trim()
        )));
    }
    Ok(v.trim())
}

/// Parses space-separated floats through f64; exact for both f32 and f64
/// written with their shortest round-trip rendering.
fn parse_values<F: Scalar>(text: &str, expected: usize) -> Result<Vec<F>> {
    let values = text
        .split_whitespace()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|e| Error::format(format!("bad value `{t}`: {e}")))
                .map(|v| F::from(v).unwrap())
        })
        .collect::<Result<Vec<_>>>()?;
    if values.len() != expected {
        return Err(Error::format(format!(
            "expected {expected} values, found {}",
            values.len()
        )));
    }
    Ok(values)
}

//! Dense feed-forward network: forward pass, per-sample RMS objective, exact
//! backpropagation and minibatch SGD.
//!
//! Hidden layers use `tanh`, the output layer is the identity (raw class
//! scores). Weights are stored row-major as `fan_out × fan_in`.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::patterns::GrayImage;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Identity,
}

impl Activation {
    pub fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Identity => z,
        }
    }

    /// Derivative expressed through the activation output `a = f(z)`.
    fn derivative_at_output(self, a: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - a * a,
            Activation::Identity => 1.0,
        }
    }

    /// `f(−z) = −f(z)`; required for sign-flip symmetry.
    pub fn is_odd(self) -> bool {
        match self {
            Activation::Tanh | Activation::Identity => true,
        }
    }

    fn tag(self) -> &'static str {
        match self {
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        }
    }

    fn from_tag(tag: &str) -> Result<Self> {
        match tag {
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Format(format!("unknown activation tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    fan_in: usize,
    fan_out: usize,
    /// Row-major `fan_out × fan_in`.
    weights: Vec<f64>,
    bias: Vec<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(
        fan_in: usize,
        fan_out: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        activation: Activation,
    ) -> Result<Self> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::InvalidArgument("layer dimensions must be positive".into()));
        }
        check_dim(fan_in * fan_out, weights.len())?;
        check_dim(fan_out, bias.len())?;
        Ok(Self {
            fan_in,
            fan_out,
            weights,
            bias,
            activation,
        })
    }

    pub fn fan_in(&self) -> usize {
        self.fan_in
    }

    pub fn fan_out(&self) -> usize {
        self.fan_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn bias_mut(&mut self) -> &mut [f64] {
        &mut self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.fan_in + inp]
    }

    pub fn row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.fan_in..(out + 1) * self.fan_in]
    }

    fn forward_into(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend((0..self.fan_out).map(|o| {
            let z = self.bias[o] + dot(self.row(o), x);
            self.activation.apply(z)
        }));
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Training/evaluation example: an input and a real target vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Vec<f64>,
    pub target: Vec<f64>,
}

impl Sample {
    pub fn new(input: Vec<f64>, target: Vec<f64>) -> Self {
        Self { input, target }
    }

    /// One-hot target for `label` among `classes` outputs.
    pub fn labeled(input: Vec<f64>, label: usize, classes: usize) -> Self {
        Self {
            input,
            target: one_hot(label, classes),
        }
    }

    pub fn from_image(img: &GrayImage, classes: usize) -> Self {
        Self::labeled(img.pixels().to_vec(), usize::from(img.label()), classes)
    }

    /// Class of the target (argmax, lowest index on ties).
    pub fn label(&self) -> usize {
        argmax(&self.target)
    }
}

pub fn one_hot(label: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    if label < classes {
        v[label] = 1.0;
    }
    v
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    v.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| {
            if x > bv {
                (i, x)
            } else {
                (bi, bv)
            }
        })
        .0
}

/// `sqrt((1/K) Σ_k (pred_k − target_k)²)`.
pub fn rms_loss(pred: &[f64], target: &[f64]) -> Result<f64> {
    check_dim(pred.len(), target.len())?;
    if pred.is_empty() {
        return Err(Error::InvalidArgument("empty prediction vector".into()));
    }
    let sq: f64 = pred.iter().zip(target).map(|(p, t)| (p - t) * (p - t)).sum();
    Ok((sq / pred.len() as f64).sqrt())
}

/// `∂ rms / ∂ pred`. Zero at `pred == target`, where the true derivative is undefined.
fn rms_output_grad(pred: &[f64], target: &[f64], loss: f64) -> Vec<f64> {
    if loss == 0.0 {
        return vec![0.0; pred.len()];
    }
    let scale = 1.0 / (pred.len() as f64 * loss);
    pred.iter().zip(target).map(|(p, t)| (p - t) * scale).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Parameter gradient with the same layout as an [`Mlp`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub layers: Vec<LayerGradient>,
}

impl Gradient {
    fn zeros_like(m: &Mlp) -> Self {
        Self {
            layers: m
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.weights.len()],
                    bias: vec![0.0; l.bias.len()],
                })
                .collect(),
        }
    }

    fn scale(&mut self, s: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().chain(l.bias.iter_mut()).for_each(|g| *g *= s);
        }
    }

    /// All components flattened layer by layer (weights, then bias).
    pub fn flatten(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.05,
            epochs: 20,
            batch_size: 8,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be finite and nonnegative, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-sample loss over each epoch, measured before each SGD step.
    pub loss: Vec<f64>,
    /// Training-set accuracy after each epoch.
    pub accuracy: Vec<f64>,
}

impl TrainHistory {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("epoch,loss,accuracy\n");
        for (e, (l, a)) in self.loss.iter().zip(&self.accuracy).enumerate() {
            let _ = writeln!(s, "{},{:?},{:?}", e + 1, l, a);
        }
        s
    }
}

/// Hook invoked by [`Mlp::train`].
pub trait EpochObserver {
    fn on_start(&mut self, _m: &Mlp) {}
    fn on_epoch(&mut self, _epoch: usize, _m: &Mlp) {}
}

impl EpochObserver for () {}

struct Trace {
    /// `activations[0]` is the input, `activations[l + 1]` is layer `l`'s output.
    activations: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    layers: Vec<DenseLayer>,
    seed: u64,
}

const FORMAT_HEADER: &str = "weightscape-mlp v1";

impl Mlp {
    /// Random network with `tanh` hidden layers and an identity output layer.
    ///
    /// Weights are uniform in `[−1/√fan_in, 1/√fan_in]`, biases are zero.
    pub fn init(layer_sizes: &[usize], seed: u64) -> Result<Self> {
        if layer_sizes.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "need at least input and output sizes, got {layer_sizes:?}"
            )));
        }
        if layer_sizes.contains(&0) {
            return Err(Error::InvalidArgument(format!(
                "layer sizes must be positive, got {layer_sizes:?}"
            )));
        }
        let mut rng = seed::rng(seed);
        let last = layer_sizes.len() - 2;
        let layers = layer_sizes
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let (fan_in, fan_out) = (w[0], w[1]);
                let bound = 1.0 / (fan_in as f64).sqrt();
                let weights = (0..fan_in * fan_out)
                    .map(|_| rng.gen_range(-bound..=bound))
                    .collect();
                let activation = if k == last {
                    Activation::Identity
                } else {
                    Activation::Tanh
                };
                DenseLayer::new(fan_in, fan_out, weights, vec![0.0; fan_out], activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { layers, seed })
    }

    pub fn from_layers(layers: Vec<DenseLayer>, seed: u64) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("network has no layers".into()));
        }
        for pair in layers.windows(2) {
            check_dim(pair[0].fan_out, pair[1].fan_in)?;
        }
        Ok(Self { layers, seed })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].fan_in
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].fan_out
    }

    /// Widths of the hidden layers.
    pub fn hidden_sizes(&self) -> Vec<usize> {
        self.layers[..self.layers.len() - 1]
            .iter()
            .map(|l| l.fan_out)
            .collect()
    }

    /// All parameters flattened layer by layer (weights, then bias).
    pub fn parameters(&self) -> Vec<f64> {
        self.layers
            .iter()
            .flat_map(|l| l.weights.iter().chain(&l.bias).copied())
            .collect()
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// Mutable access to parameter `index` in [`Mlp::parameters`] order.
    pub fn parameter_mut(&mut self, mut index: usize) -> &mut f64 {
        for l in &mut self.layers {
            if index < l.weights.len() {
                return &mut l.weights[index];
            }
            index -= l.weights.len();
            if index < l.bias.len() {
                return &mut l.bias[index];
            }
            index -= l.bias.len();
        }
        panic!("parameter index out of range");
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.input_dim(), x.len())?;
        let mut cur = x.to_vec();
        let mut next = Vec::new();
        for layer in &self.layers {
            layer.forward_into(&cur, &mut next);
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    fn trace(&self, x: &[f64]) -> Result<Trace> {
        check_dim(self.input_dim(), x.len())?;
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.to_vec());
        for layer in &self.layers {
            let mut out = Vec::with_capacity(layer.fan_out);
            layer.forward_into(activations.last().unwrap(), &mut out);
            activations.push(out);
        }
        Ok(Trace { activations })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize> {
        Ok(argmax(&self.forward(x)?))
    }

    pub fn loss(&self, sample: &Sample) -> Result<f64> {
        check_dim(self.output_dim(), sample.target.len())?;
        rms_loss(&self.forward(&sample.input)?, &sample.target)
    }

    /// Backpropagates one sample. Accumulates the parameter gradient into `acc`
    /// (if given) and returns `(loss, ∂loss/∂input)`.
    fn backprop(&self, sample: &Sample, mut acc: Option<&mut Gradient>) -> Result<(f64, Vec<f64>)> {
        check_dim(self.output_dim(), sample.target.len())?;
        let trace = self.trace(&sample.input)?;
        let out = trace.activations.last().unwrap();
        let loss = rms_loss(out, &sample.target)?;

        let mut delta: Vec<f64> = rms_output_grad(out, &sample.target, loss);
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let a_out = &trace.activations[l + 1];
            for (d, &a) in delta.iter_mut().zip(a_out) {
                *d *= layer.activation.derivative_at_output(a);
            }
            let a_in = &trace.activations[l];
            if let Some(g) = acc.as_deref_mut() {
                let lg = &mut g.layers[l];
                for (o, &d) in delta.iter().enumerate() {
                    lg.bias[o] += d;
                    let row = &mut lg.weights[o * layer.fan_in..(o + 1) * layer.fan_in];
                    for (w, &a) in row.iter_mut().zip(a_in) {
                        *w += d * a;
                    }
                }
            }
            let mut back = vec![0.0; layer.fan_in];
            for (o, &d) in delta.iter().enumerate() {
                for (b, &w) in back.iter_mut().zip(layer.row(o)) {
                    *b += w * d;
                }
            }
            delta = back;
        }
        Ok((loss, delta))
    }

    /// Exact gradient of the mean per-sample RMS loss over `batch`, and that mean loss.
    pub fn gradient(&self, batch: &[Sample]) -> Result<(Gradient, f64)> {
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        let mut g = Gradient::zeros_like(self);
        let mut total = 0.0;
        for s in batch {
            total += self.backprop(s, Some(&mut g))?.0;
        }
        let inv = 1.0 / batch.len() as f64;
        g.scale(inv);
        Ok((g, total * inv))
    }

    /// `∂ rms_loss(forward(x), target) / ∂x`.
    pub fn input_gradient(&self, sample: &Sample) -> Result<Vec<f64>> {
        Ok(self.backprop(sample, None)?.1)
    }

    /// One SGD step on `batch`; returns the pre-step mean loss.
    pub fn sgd_step(&mut self, batch: &[Sample], lr: f64) -> Result<f64> {
        let (g, loss) = self.gradient(batch)?;
        for (layer, lg) in self.layers.iter_mut().zip(&g.layers) {
            for (p, d) in layer.weights.iter_mut().zip(&lg.weights) {
                *p -= lr * d;
            }
            for (p, d) in layer.bias.iter_mut().zip(&lg.bias) {
                *p -= lr * d;
            }
        }
        Ok(loss)
    }

    /// Fraction of samples whose predicted class equals the target's class.
    pub fn accuracy(&self, data: &[Sample]) -> Result<f64> {
        if data.is_empty() {
            return Ok(0.0);
        }
        let mut hits = 0usize;
        for s in data {
            if self.predict(&s.input)? == s.label() {
                hits += 1;
            }
        }
        Ok(hits as f64 / data.len() as f64)
    }

    /// Minibatch SGD over `cfg.epochs` epochs. Each epoch visits the data in a
    /// fresh Fisher–Yates permutation drawn from a stream seeded by `cfg.seed`.
    pub fn train(
        &mut self,
        data: &[Sample],
        cfg: &TrainConfig,
        observer: &mut dyn EpochObserver,
    ) -> Result<TrainHistory> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::InvalidArgument("empty training set".into()));
        }
        for s in data {
            check_dim(self.input_dim(), s.input.len())?;
            check_dim(self.output_dim(), s.target.len())?;
        }

        let mut rng = seed::rng(cfg.seed);
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut history = TrainHistory::default();
        let mut batch = Vec::with_capacity(cfg.batch_size);
        observer.on_start(self);

        for epoch in 1..=cfg.epochs {
            order.shuffle(&mut rng);
            let mut loss_sum = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| data[i].clone()));
                loss_sum += self.sgd_step(&batch, cfg.learning_rate)? * chunk.len() as f64;
            }
            history.loss.push(loss_sum / data.len() as f64);
            history.accuracy.push(self.accuracy(data)?);
            observer.on_epoch(epoch, self);
        }
        Ok(history)
    }

    /// Text serialization; floats use the shortest round-trip representation.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{FORMAT_HEADER}");
        let _ = writeln!(s, "seed {}", self.seed);
        let _ = writeln!(s, "layers {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(s, "layer {} {} {}", l.fan_in, l.fan_out, l.activation.tag());
            write_floats(&mut s, "weights", &l.weights);
            write_floats(&mut s, "bias", &l.bias);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = |what: &str| {
            lines
                .next()
                .ok_or_else(|| Error::Format(format!("model file ends before {what}")))
        };
        if next("header")? != FORMAT_HEADER {
            return Err(Error::Format("not a weightscape-mlp v1 model".into()));
        }
        let seed = parse_field(next("seed")?, "seed")?;
        let count: usize = parse_field(next("layers")?, "layers")?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let head: Vec<&str> = next("layer")?.split_whitespace().collect();
            if head.len() != 4 || head[0] != "layer" {
                return Err(Error::Format(format!("bad layer line {head:?}")));
            }
            let fan_in = parse_num(head[1])?;
            let fan_out = parse_num(head[2])?;
            let activation = Activation::from_tag(head[3])?;
            let weights = parse_floats(next("weights")?, "weights")?;
            let bias = parse_floats(next("bias")?, "bias")?;
            layers.push(DenseLayer::new(fan_in, fan_out, weights, bias, activation)?);
        }
        Self::from_layers(layers, seed)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_text(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }
}

/// Convenience wrapper matching [`Mlp::init`].
pub fn init_mlp(layer_sizes: &[usize], seed: u64) -> Result<Mlp> {
    Mlp::init(layer_sizes, seed)
}

fn write_floats(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for v in values {
        let _ = write!(s, " {v:?}");
    }
    s.push('\n');
}

fn parse_num<T: std::str::FromStr>(tok: &str) -> Result<T> {
    tok.parse()
        .map_err(|_| Error::Format(format!("cannot parse {tok:?}")))
}

fn parse_field<T: std::str::FromStr>(line: &str, key: &str) -> Result<T> {
    match line.split_once(' ') {
        Some((k, v)) if k == key => parse_num(v.trim()),
        _ => Err(Error::Format(format!("expected `{key} <value>`, got {line:?}"))),
    }
}

fn parse_floats(line: &str, key: &str) -> Result<Vec<f64>> {
    let mut toks = line.split_whitespace();
    if toks.next() != Some(key) {
        return Err(Error::Format(format!("expected `{key} ...` line")));
    }
    toks.map(parse_num).collect()
}

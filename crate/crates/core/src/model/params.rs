//! Parameter containers. Gradients reuse the same types.

use ndarray::{Array1, Array2};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::EncoderConfig;

/// Uniform access to every tensor of a parameter set, in a fixed order.
pub trait Tensors {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>);
    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>);

    fn tensors(&self) -> Vec<TensorRef<'_>> {
        let mut out = Vec::new();
        self.visit("", &mut out);
        out
    }

    fn named_tensors(&self) -> Vec<(String, &[f64])> {
        self.tensors().into_iter().map(|t| (t.name, t.data)).collect()
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        self.visit_mut(&mut out);
        out
    }

    fn num_parameters(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    fn fill(&mut self, value: f64) {
        for t in self.tensors_mut() {
            t.fill(value);
        }
    }

    fn is_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TensorRef<'a> {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: &'a [f64],
}

/// `zeros_like` for any parameter container.
pub fn zeros_like<T: Tensors + Clone>(params: &T) -> T {
    let mut z = params.clone();
    z.fill(0.0);
    z
}

fn join(prefix: &str, name: &str) -> String {
    if prefix.is_empty() {
        name.to_string()
    } else {
        format!("{prefix}.{name}")
    }
}

fn t2<'a>(prefix: &str, name: &str, a: &'a Array2<f64>) -> TensorRef<'a> {
    TensorRef {
        name: join(prefix, name),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn slice2_mut(a: &mut Array2<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

fn t1<'a>(prefix: &str, name: &str, a: &'a Array1<f64>) -> TensorRef<'a> {
    TensorRef {
        name: join(prefix, name),
        shape: a.shape().to_vec(),
        data: a.as_slice().expect("standard layout"),
    }
}

fn slice1_mut(a: &mut Array1<f64>) -> &mut [f64] {
    a.as_slice_mut().expect("standard layout")
}

/// Normal(0, σ) resampled until within two standard deviations.
pub(crate) fn truncated_normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Array2<f64> {
    let normal = Normal::new(0.0, std).expect("positive std");
    Array2::from_shape_simple_fn((rows, cols), || loop {
        let v: f64 = normal.sample(rng);
        if v.abs() <= 2.0 * std {
            break v;
        }
    })
}

pub const INIT_STD: f64 = 0.02;

/// `y = x W + b` with `W` of shape `[in, out]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Linear {
            weight: truncated_normal(inputs, outputs, INIT_STD, rng),
            bias: Array1::zeros(outputs),
        }
    }

    pub fn forward(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }

    /// Accumulate parameter gradients into `grad` and return `dL/dx`.
    pub fn backward(&self, x: &Array2<f64>, dy: &Array2<f64>, grad: &mut Linear) -> Array2<f64> {
        grad.weight += &x.t().dot(dy);
        grad.bias += &dy.sum_axis(ndarray::Axis(0));
        dy.dot(&self.weight.t())
    }
}

impl Tensors for Linear {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(t2(prefix, "weight", &self.weight));
        out.push(t1(prefix, "bias", &self.bias));
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice2_mut(&mut self.weight));
        out.push(slice1_mut(&mut self.bias));
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
}

impl LayerNorm {
    pub fn new(dim: usize) -> Self {
        LayerNorm {
            gamma: Array1::ones(dim),
            beta: Array1::zeros(dim),
        }
    }
}

impl Tensors for LayerNorm {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(t1(prefix, "gamma", &self.gamma));
        out.push(t1(prefix, "beta", &self.beta));
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice1_mut(&mut self.gamma));
        out.push(slice1_mut(&mut self.beta));
    }
}

/// Two-layer perceptron `tanh(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub hidden: Linear,
    pub output: Linear,
}

impl Mlp {
    pub fn new(dim: usize, outputs: usize, rng: &mut impl Rng) -> Self {
        Mlp {
            hidden: Linear::new(dim, dim, rng),
            output: Linear::new(dim, outputs, rng),
        }
    }

    /// Returns `(hidden activations, logits)`.
    pub fn forward(&self, x: &Array2<f64>) -> (Array2<f64>, Array2<f64>) {
        let z = self.hidden.forward(x).mapv(f64::tanh);
        let out = self.output.forward(&z);
        (z, out)
    }

    pub fn backward(&self, x: &Array2<f64>, z: &Array2<f64>, dout: &Array2<f64>, grad: &mut Mlp) -> Array2<f64> {
        let dz = self.output.backward(z, dout, &mut grad.output);
        let dpre = dz * &z.mapv(|t| 1.0 - t * t);
        self.hidden.backward(x, &dpre, &mut grad.hidden)
    }
}

impl Tensors for Mlp {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        self.hidden.visit(&join(prefix, "hidden"), out);
        self.output.visit(&join(prefix, "output"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.hidden.visit_mut(out);
        self.output.visit_mut(out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayer {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub attention_output: Linear,
    pub attention_norm: LayerNorm,
    pub ffn_in: Linear,
    pub ffn_out: Linear,
    pub ffn_norm: LayerNorm,
}

impl EncoderLayer {
    pub fn new(cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.hidden_dim;
        EncoderLayer {
            query: Linear::new(d, d, rng),
            key: Linear::new(d, d, rng),
            value: Linear::new(d, d, rng),
            attention_output: Linear::new(d, d, rng),
            attention_norm: LayerNorm::new(d),
            ffn_in: Linear::new(d, cfg.ffn_dim, rng),
            ffn_out: Linear::new(cfg.ffn_dim, d, rng),
            ffn_norm: LayerNorm::new(d),
        }
    }
}

impl Tensors for EncoderLayer {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        self.query.visit(&join(prefix, "query"), out);
        self.key.visit(&join(prefix, "key"), out);
        self.value.visit(&join(prefix, "value"), out);
        self.attention_output.visit(&join(prefix, "attention_output"), out);
        self.attention_norm.visit(&join(prefix, "attention_norm"), out);
        self.ffn_in.visit(&join(prefix, "ffn_in"), out);
        self.ffn_out.visit(&join(prefix, "ffn_out"), out);
        self.ffn_norm.visit(&join(prefix, "ffn_norm"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.query.visit_mut(out);
        self.key.visit_mut(out);
        self.value.visit_mut(out);
        self.attention_output.visit_mut(out);
        self.attention_norm.visit_mut(out);
        self.ffn_in.visit_mut(out);
        self.ffn_out.visit_mut(out);
        self.ffn_norm.visit_mut(out);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Encoder {
    pub token_embeddings: Array2<f64>,
    pub position_embeddings: Array2<f64>,
    pub segment_embeddings: Array2<f64>,
    pub embedding_norm: LayerNorm,
    pub layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new(cfg: &EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = cfg.hidden_dim;
        Encoder {
            token_embeddings: truncated_normal(cfg.vocab_size, d, INIT_STD, rng),
            position_embeddings: truncated_normal(cfg.max_positions, d, INIT_STD, rng),
            segment_embeddings: truncated_normal(2, d, INIT_STD, rng),
            embedding_norm: LayerNorm::new(d),
            layers: (0..cfg.num_layers).map(|_| EncoderLayer::new(cfg, rng)).collect(),
        }
    }
}

impl Tensors for Encoder {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        out.push(t2(prefix, "token_embeddings", &self.token_embeddings));
        out.push(t2(prefix, "position_embeddings", &self.position_embeddings));
        out.push(t2(prefix, "segment_embeddings", &self.segment_embeddings));
        self.embedding_norm.visit(&join(prefix, "embedding_norm"), out);
        for (i, layer) in self.layers.iter().enumerate() {
            layer.visit(&join(prefix, &format!("layers.{i}")), out);
        }
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        out.push(slice2_mut(&mut self.token_embeddings));
        out.push(slice2_mut(&mut self.position_embeddings));
        out.push(slice2_mut(&mut self.segment_embeddings));
        self.embedding_norm.visit_mut(out);
        for layer in &mut self.layers {
            layer.visit_mut(out);
        }
    }
}

/// Encoder plus the span head (d → 1) and the NLI head (d → classes).
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub encoder: Encoder,
    pub span_head: Mlp,
    pub nli_head: Mlp,
}

impl ModelParams {
    pub fn new(cfg: &EncoderConfig, nli_classes: usize, rng: &mut impl Rng) -> Self {
        let encoder = Encoder::new(cfg, rng);
        let span_head = Mlp::new(cfg.hidden_dim, 1, rng);
        let nli_head = Mlp::new(cfg.hidden_dim, nli_classes, rng);
        ModelParams {
            encoder,
            span_head,
            nli_head,
        }
    }

    pub fn nli_classes(&self) -> usize {
        self.nli_head.output.bias.len()
    }

    /// Zero the heads' output layers, so every logit is 0.
    pub fn zero_heads(&mut self) {
        self.span_head.output.fill(0.0);
        self.nli_head.output.fill(0.0);
    }
}

impl Tensors for ModelParams {
    fn visit<'a>(&'a self, prefix: &str, out: &mut Vec<TensorRef<'a>>) {
        self.encoder.visit(&join(prefix, "encoder"), out);
        self.span_head.visit(&join(prefix, "span_head"), out);
        self.nli_head.visit(&join(prefix, "nli_head"), out);
    }

    fn visit_mut<'a>(&'a mut self, out: &mut Vec<&'a mut [f64]>) {
        self.encoder.visit_mut(out);
        self.span_head.visit_mut(out);
        self.nli_head.visit_mut(out);
    }
}

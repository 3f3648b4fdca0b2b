//! The parametric models: generator, critic, semantic sampler and the
//! softmax classifier, plus the Adam optimizer and checkpoint files.
//!
//! Generator, critic and sampler are single-hidden-layer perceptrons with a
//! leaky-rectifier hidden layer. At width divisor 1 their hidden widths are
//! 4096 (generator, critic) and 2048 (sampler); a divisor shrinks both
//! proportionally for desk-scale runs.

mod adam;
mod checkpoint;

pub use adam::{Adam, AdamConfig};
pub use checkpoint::{Checkpoint, CheckpointMeta};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Hidden width of the generator and critic at full scale.
pub const FULL_GAN_HIDDEN: usize = 4096;
/// Hidden width of the semantic sampler at full scale.
pub const FULL_SAMPLER_HIDDEN: usize = 2048;
/// Visual feature dimensionality of the benchmark features (ResNet-101).
pub const FULL_FEATURE_DIM: usize = 2048;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    LeakyRelu { slope: f64 },
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, g: &mut Graph, x: Var) -> Result<Var> {
        match self {
            Activation::LeakyRelu { slope } => g.leaky_relu(x, slope),
            Activation::Relu => g.relu(x),
            Activation::Identity => Ok(x),
        }
    }
}

/// Number of parameters of an `input → hidden → output` perceptron with
/// biases on both layers.
pub fn mlp_param_count(input: usize, hidden: usize, output: usize) -> usize {
    input * hidden + hidden + hidden * output + output
}

/// A single-hidden-layer perceptron. Inputs are rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    pub w1: Matrix,
    pub b1: Matrix,
    pub w2: Matrix,
    pub b2: Matrix,
    pub hidden_activation: Activation,
    pub output_activation: Activation,
}

/// Graph handles for the four parameter matrices of an [`Mlp`].
#[derive(Clone, Copy, Debug)]
pub struct MlpVars {
    pub w1: Var,
    pub b1: Var,
    pub w2: Var,
    pub b2: Var,
}

impl MlpVars {
    pub fn all(&self) -> [Var; 4] {
        [self.w1, self.b1, self.w2, self.b2]
    }
}

impl Mlp {
    /// Uniform Xavier initialisation of the weights, zero biases.
    pub fn new<R: Rng + ?Sized>(
        input: usize,
        hidden: usize,
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
        rng: &mut R,
    ) -> Self {
        Mlp {
            w1: xavier(input, hidden, rng),
            b1: Matrix::zeros(1, hidden),
            w2: xavier(hidden, output, rng),
            b2: Matrix::zeros(1, output),
            hidden_activation,
            output_activation,
        }
    }

    pub fn zeros(
        input: usize,
        hidden: usize,
        output: usize,
        hidden_activation: Activation,
        output_activation: Activation,
    ) -> Self {
        Mlp {
            w1: Matrix::zeros(input, hidden),
            b1: Matrix::zeros(1, hidden),
            w2: Matrix::zeros(hidden, output),
            b2: Matrix::zeros(1, output),
            hidden_activation,
            output_activation,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden_dim(&self) -> usize {
        self.w1.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.w2.cols()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|m| m.len()).sum()
    }

    pub fn params(&self) -> [&Matrix; 4] {
        [&self.w1, &self.b1, &self.w2, &self.b2]
    }

    pub fn params_mut(&mut self) -> [&mut Matrix; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    /// Puts the parameters on `g`, as variables when `trainable`.
    pub fn bind(&self, g: &mut Graph, trainable: bool) -> MlpVars {
        let mut put = |m: &Matrix| if trainable { g.variable(m.clone()) } else { g.constant(m.clone()) };
        MlpVars { w1: put(&self.w1), b1: put(&self.b1), w2: put(&self.w2), b2: put(&self.b2) }
    }

    pub fn forward(&self, g: &mut Graph, vars: &MlpVars, x: Var) -> Result<Var> {
        let cols = g.value(x).cols();
        if cols != self.input_dim() {
            return Err(Error::dim(
                "mlp_forward",
                format!("input has {cols} features, network expects {}", self.input_dim()),
            ));
        }
        let h = g.matmul(x, vars.w1)?;
        let h = g.add_bias(h, vars.b1)?;
        let h = self.hidden_activation.apply(g, h)?;
        let o = g.matmul(h, vars.w2)?;
        let o = g.add_bias(o, vars.b2)?;
        self.output_activation.apply(g, o)
    }

    /// Forward pass on plain values.
    pub fn infer(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(x.clone());
        let y = self.forward(&mut g, &vars, x)?;
        Ok(g.value(y).clone())
    }
}

fn xavier<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Matrix {
    let limit = (6.0 / (fan_in + fan_out).max(1) as f64).sqrt();
    Matrix::from_fn(fan_in, fan_out, |_, _| rng.random_range(-limit..=limit))
}

/// Sizes of all networks, derived from data dimensions and a width divisor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelShapes {
    pub embedding_dim: usize,
    pub feature_dim: usize,
    pub width_divisor: usize,
}

impl ModelShapes {
    pub fn new(embedding_dim: usize, feature_dim: usize, width_divisor: usize) -> Result<Self> {
        if embedding_dim == 0 || feature_dim == 0 || width_divisor == 0 {
            return Err(Error::Invalid("embedding dim, feature dim and width divisor must be positive".into()));
        }
        Ok(ModelShapes { embedding_dim, feature_dim, width_divisor })
    }

    pub fn gan_hidden(&self) -> usize {
        (FULL_GAN_HIDDEN / self.width_divisor).max(1)
    }

    pub fn sampler_hidden(&self) -> usize {
        (FULL_SAMPLER_HIDDEN / self.width_divisor).max(1)
    }

    /// Input → hidden → output for the generator: `[s, z] → x̃`.
    pub fn generator_layers(&self) -> (usize, usize, usize) {
        (2 * self.embedding_dim, self.gan_hidden(), self.feature_dim)
    }

    /// `[x, s] → score`.
    pub fn critic_layers(&self) -> (usize, usize, usize) {
        (self.feature_dim + self.embedding_dim, self.gan_hidden(), 1)
    }

    /// `C → [μ, log √σ]`.
    pub fn sampler_layers(&self) -> (usize, usize, usize) {
        (self.embedding_dim, self.sampler_hidden(), 2 * self.embedding_dim)
    }

    pub fn generator_params(&self) -> usize {
        let (i, h, o) = self.generator_layers();
        mlp_param_count(i, h, o)
    }

    pub fn critic_params(&self) -> usize {
        let (i, h, o) = self.critic_layers();
        mlp_param_count(i, h, o)
    }

    pub fn sampler_params(&self) -> usize {
        let (i, h, o) = self.sampler_layers();
        mlp_param_count(i, h, o)
    }
}

/// Maps `[s, z]` to a non-negative visual feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Generator {
    pub net: Mlp,
}

impl Generator {
    pub fn new<R: Rng + ?Sized>(shapes: &ModelShapes, slope: f64, rng: &mut R) -> Self {
        let (i, h, o) = shapes.generator_layers();
        Generator { net: Mlp::new(i, h, o, Activation::LeakyRelu { slope }, Activation::Relu, rng) }
    }

    pub fn noise_dim(&self) -> usize {
        self.net.input_dim() / 2
    }

    pub fn forward(&self, g: &mut Graph, vars: &MlpVars, s: Var, z: Var) -> Result<Var> {
        let (sc, zc) = (g.value(s).cols(), g.value(z).cols());
        if sc != zc {
            return Err(Error::dim("generator_forward", format!("|s| = {sc} but |z| = {zc}")));
        }
        let input = g.concat_cols(s, z)?;
        self.net.forward(g, vars, input)
    }

    pub fn infer(&self, s: &Matrix, z: &Matrix) -> Result<Matrix> {
        if s.cols() != z.cols() {
            return Err(Error::dim("generator_forward", format!("|s| = {} but |z| = {}", s.cols(), z.cols())));
        }
        self.net.infer(&s.concat_cols(z)?)
    }
}

/// Scores a `[x, s]` pair with an unconstrained real number.
#[derive(Clone, Debug, PartialEq)]
pub struct Critic {
    pub net: Mlp,
}

impl Critic {
    pub fn new<R: Rng + ?Sized>(shapes: &ModelShapes, slope: f64, rng: &mut R) -> Self {
        let (i, h, o) = shapes.critic_layers();
        Critic { net: Mlp::new(i, h, o, Activation::LeakyRelu { slope }, Activation::Identity, rng) }
    }

    /// Returns an `n × 1` column of scores.
    pub fn forward(&self, g: &mut Graph, vars: &MlpVars, x: Var, c: Var) -> Result<Var> {
        let input = g.concat_cols(x, c)?;
        self.net.forward(g, vars, input)
    }

    pub fn infer(&self, x: &Matrix, c: &Matrix) -> Result<Matrix> {
        self.net.infer(&x.concat_cols(c)?)
    }
}

/// Mean and `log √σ` emitted by the sampler for one class embedding.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerOutput {
    pub mu: Vec<f64>,
    pub log_sqrt_sigma: Vec<f64>,
}

impl SamplerOutput {
    /// `σ = exp(log √σ)²`, always positive.
    pub fn sigma(&self) -> Vec<f64> {
        self.log_sqrt_sigma.iter().map(|l| l.exp().powi(2)).collect()
    }

    /// `s = μ + σ ⊙ u` for a standard-normal `u`.
    pub fn reparameterize(&self, u: &[f64]) -> Result<Vec<f64>> {
        if u.len() != self.mu.len() {
            return Err(Error::dim(
                "reparameterized_sample",
                format!("|u| = {} but |mu| = {}", u.len(), self.mu.len()),
            ));
        }
        Ok(self.mu.iter().zip(self.sigma()).zip(u).map(|((m, s), u)| m + s * u).collect())
    }
}

/// Learns per-class Gaussian statistics in a transformed semantic space.
#[derive(Clone, Debug, PartialEq)]
pub struct Sampler {
    pub net: Mlp,
    /// When set, `σ` is this constant for every class and the `log √σ`
    /// head is ignored.
    pub fixed_sigma: Option<f64>,
}

impl Sampler {
    pub fn new<R: Rng + ?Sized>(shapes: &ModelShapes, slope: f64, rng: &mut R) -> Self {
        let (i, h, o) = shapes.sampler_layers();
        Sampler {
            net: Mlp::new(i, h, o, Activation::LeakyRelu { slope }, Activation::Identity, rng),
            fixed_sigma: None,
        }
    }

    pub fn embedding_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Returns `(μ, log √σ)` nodes for a batch of class embeddings.
    pub fn forward(&self, g: &mut Graph, vars: &MlpVars, c: Var) -> Result<(Var, Var)> {
        let e = self.embedding_dim();
        let out = self.net.forward(g, vars, c)?;
        let mu = g.slice_cols(out, 0, e)?;
        let lss = g.slice_cols(out, e, 2 * e)?;
        Ok((mu, lss))
    }

    /// `μ + exp(log √σ)² ⊙ u` on the graph, differentiable in the sampler.
    pub fn sample(&self, g: &mut Graph, vars: &MlpVars, c: Var, u: Var) -> Result<Var> {
        let (mu, lss) = self.forward(g, vars, c)?;
        if let Some(sigma) = self.fixed_sigma {
            let noise = g.scale(u, sigma)?;
            return g.add(mu, noise);
        }
        let root_sigma = g.exp(lss)?;
        let sigma = g.square(root_sigma)?;
        let noise = g.mul(sigma, u)?;
        g.add(mu, noise)
    }

    pub fn infer(&self, c: &[f64]) -> Result<SamplerOutput> {
        let e = self.embedding_dim();
        if c.len() != e {
            return Err(Error::dim(
                "sampler_forward",
                format!("embedding has {} entries, sampler expects {e}", c.len()),
            ));
        }
        let out = self.net.infer(&Matrix::row_vector(c.to_vec())?)?;
        let log_sqrt_sigma = match self.fixed_sigma {
            Some(sigma) => vec![0.5 * sigma.ln(); e],
            None => out.data()[e..].to_vec(),
        };
        Ok(SamplerOutput { mu: out.data()[..e].to_vec(), log_sqrt_sigma })
    }

    /// Reparameterized samples for a batch of embeddings and noise rows.
    pub fn infer_sample(&self, c: &Matrix, u: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let vars = self.net.bind(&mut g, false);
        let c = g.constant(c.clone());
        let u = g.constant(u.clone());
        let s = self.sample(&mut g, &vars, c, u)?;
        Ok(g.value(s).clone())
    }
}

/// Linear softmax classifier over visual features.
#[derive(Clone, Debug, PartialEq)]
pub struct SoftmaxClassifier {
    pub weights: Matrix,
    pub bias: Matrix,
}

#[derive(Clone, Copy, Debug)]
pub struct ClassifierVars {
    pub weights: Var,
    pub bias: Var,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTraining {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
}

impl Default for ClassifierTraining {
    fn default() -> Self {
        ClassifierTraining { epochs: 30, batch_size: 64, learning_rate: 1e-2 }
    }
}

impl SoftmaxClassifier {
    pub fn zeros(feature_dim: usize, classes: usize) -> Self {
        SoftmaxClassifier { weights: Matrix::zeros(feature_dim, classes), bias: Matrix::zeros(1, classes) }
    }

    pub fn new<R: Rng + ?Sized>(feature_dim: usize, classes: usize, rng: &mut R) -> Self {
        SoftmaxClassifier { weights: xavier(feature_dim, classes, rng), bias: Matrix::zeros(1, classes) }
    }

    pub fn classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn feature_dim(&self) -> usize {
        self.weights.rows()
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> ClassifierVars {
        let mut put = |m: &Matrix| if trainable { g.variable(m.clone()) } else { g.constant(m.clone()) };
        ClassifierVars { weights: put(&self.weights), bias: put(&self.bias) }
    }

    pub fn logits(&self, g: &mut Graph, vars: &ClassifierVars, x: Var) -> Result<Var> {
        let cols = g.value(x).cols();
        if cols != self.feature_dim() {
            return Err(Error::dim(
                "classifier",
                format!("{cols} features, classifier expects {}", self.feature_dim()),
            ));
        }
        let h = g.matmul(x, vars.weights)?;
        g.add_bias(h, vars.bias)
    }

    pub fn infer_logits(&self, x: &Matrix) -> Result<Matrix> {
        let mut g = Graph::new();
        let vars = self.bind(&mut g, false);
        let x = g.constant(x.clone());
        let l = self.logits(&mut g, &vars, x)?;
        Ok(g.value(l).clone())
    }

    /// Row-wise class probabilities.
    pub fn probabilities(&self, x: &Matrix) -> Result<Matrix> {
        Ok(crate::autodiff::softmax_rows(&self.infer_logits(x)?))
    }

    /// Fits the classifier on labelled rows with Adam on the cross-entropy.
    pub fn fit<R: Rng + ?Sized>(
        &mut self,
        features: &Matrix,
        labels: &[usize],
        training: &ClassifierTraining,
        rng: &mut R,
    ) -> Result<()> {
        if features.rows() != labels.len() || features.rows() == 0 {
            return Err(Error::dim("classifier_fit", format!("{} rows, {} labels", features.rows(), labels.len())));
        }
        if let Some(l) = labels.iter().find(|l| **l >= self.classes()) {
            return Err(Error::Invalid(format!("label {l} outside {} classes", self.classes())));
        }
        let config = AdamConfig { learning_rate: training.learning_rate, beta1: 0.9, ..AdamConfig::default() };
        let mut adam = Adam::new(config, &[&self.weights, &self.bias]);
        let n = labels.len();
        let mut order: Vec<usize> = (0..n).collect();
        let batch = training.batch_size.max(1);
        for _ in 0..training.epochs {
            order.shuffle(rng);
            for chunk in order.chunks(batch) {
                let x = features.select_rows(chunk)?;
                let y: Vec<usize> = chunk.iter().map(|i| labels[*i]).collect();
                let mut g = Graph::new();
                let vars = self.bind(&mut g, true);
                let xv = g.constant(x);
                let logits = self.logits(&mut g, &vars, xv)?;
                let loss = g.softmax_cross_entropy(logits, &y)?;
                let grads = g.backward(loss, &[vars.weights, vars.bias])?;
                adam.step(&mut [&mut self.weights, &mut self.bias], &[grads.of(vars.weights), grads.of(vars.bias)])?;
            }
        }
        Ok(())
    }
}

//! The variationally-conditioned WGAN: losses and the training loop.
//!
//! Each outer iteration runs `critic_steps` critic updates on
//! `−L + λR`, then one joint generator/sampler update on
//! `−E[D(x̃, s)] + βC`, where `s = μ + σ ⊙ u` comes from the sampler and
//! `C` is the cross-entropy of a pretrained softmax classifier on the
//! generated features. Only seen-class data is ever touched.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::nn::{
    Adam, AdamConfig, Checkpoint, CheckpointMeta, ClassifierTraining, ClassifierVars, Critic, Generator, Mlp, MlpVars,
    ModelShapes, Sampler, SoftmaxClassifier,
};
use crate::protocol::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Critic updates per generator update.
    pub critic_steps: usize,
    pub batch_size: usize,
    /// Outer iterations, i.e. generator updates.
    pub iterations: usize,
    pub gp_weight: f64,
    pub cls_weight: f64,
    pub seed: u64,
    pub width_divisor: usize,
    pub leaky_slope: f64,
    pub adam: AdamConfig,
    /// Also put the gradient penalty in the generator/sampler objective.
    pub gp_in_generator: bool,
    pub freeze_classifier: bool,
    /// Feed the critic a detached copy of `s` in the generator/sampler
    /// update, so the sampler is trained only through the generator.
    pub detach_critic_condition: bool,
    /// Hold the sampler's `σ` at this constant instead of learning it.
    pub sampler_sigma: Option<f64>,
    /// Keep an exponential moving average of the generator and sampler
    /// weights with this decay and return it instead of the last iterate.
    pub ema_decay: Option<f64>,
    /// Learning rate reached at the last iteration, as a fraction of the
    /// initial one; the schedule is linear.
    pub lr_final_fraction: f64,
    /// Start the generator's output bias at the mean real feature so no
    /// output rectifier begins (and stays) dead.
    pub init_output_bias_to_mean: bool,
    pub classifier: ClassifierTraining,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            critic_steps: 5,
            batch_size: 64,
            iterations: 1000,
            gp_weight: 10.0,
            cls_weight: 0.01,
            seed: 0,
            width_divisor: 64,
            leaky_slope: 0.2,
            adam: AdamConfig::default(),
            gp_in_generator: false,
            freeze_classifier: true,
            detach_critic_condition: true,
            sampler_sigma: None,
            ema_decay: None,
            lr_final_fraction: 1.0,
            init_output_bias_to_mean: false,
            classifier: ClassifierTraining::default(),
        }
    }
}

impl TrainConfig {
    /// Settings for the synthetic benchmark: a larger step, a fixed
    /// sampler `σ` and generator weight averaging.
    pub fn desk_scale() -> Self {
        TrainConfig {
            iterations: 4000,
            adam: AdamConfig { learning_rate: 1e-3, ..AdamConfig::default() },
            sampler_sigma: Some(0.01),
            ema_decay: Some(0.995),
            init_output_bias_to_mean: true,
            ..TrainConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.critic_steps == 0 || self.batch_size == 0 || self.width_divisor == 0 {
            return Err(Error::Invalid("critic_steps, batch_size and width_divisor must be at least 1".into()));
        }
        if !(self.gp_weight >= 0.0 && self.cls_weight >= 0.0) {
            return Err(Error::Invalid("loss weights must be non-negative".into()));
        }
        if !(self.adam.learning_rate > 0.0) {
            return Err(Error::Invalid("learning rate must be positive".into()));
        }
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return Err(Error::Invalid("lr_final_fraction must lie in (0, 1]".into()));
        }
        if self.ema_decay.is_some_and(|d| !(0.0..1.0).contains(&d)) {
            return Err(Error::Invalid("ema_decay must lie in [0, 1)".into()));
        }
        if self.sampler_sigma.is_some_and(|s| !(s > 0.0 && s.is_finite())) {
            return Err(Error::Invalid("sampler_sigma must be positive".into()));
        }
        Ok(())
    }
}

/// Losses of one outer iteration. `wasserstein` and `gp` come from its last
/// critic update, `cls` from its generator update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub step: usize,
    pub wasserstein: f64,
    pub gp: f64,
    pub cls: f64,
    #[serde(skip)]
    pub elapsed: Duration,
}

/// One JSON record per line.
pub fn history_jsonl(history: &[LossBreakdown]) -> String {
    let mut out = String::new();
    for record in history {
        out.push_str(&serde_json::to_string(record).expect("loss record serializes"));
        out.push('\n');
    }
    out
}

fn check_batch(g: &Graph, x_real: Var, x_fake: Var, s: Var) -> Result<()> {
    let (n, f) = g.value(x_real).shape();
    if n == 0 {
        return Err(Error::Invalid("empty batch".into()));
    }
    if g.value(x_fake).shape() != (n, f) || g.value(s).rows() != n {
        return Err(Error::dim(
            "wgan_loss",
            format!("real {:?}, fake {:?}, conditioning {:?}", (n, f), g.value(x_fake).shape(), g.value(s).shape()),
        ));
    }
    Ok(())
}

/// `L = E[D(x, s)] − E[D(x̃, s)]`.
pub fn wgan_loss(g: &mut Graph, critic: &Critic, vars: &MlpVars, x_real: Var, x_fake: Var, s: Var) -> Result<Var> {
    check_batch(g, x_real, x_fake, s)?;
    let d_real = critic.forward(g, vars, x_real, s)?;
    let d_fake = critic.forward(g, vars, x_fake, s)?;
    let real = g.mean(d_real)?;
    let fake = g.mean(d_fake)?;
    g.sub(real, fake)
}

/// `R = E[(‖∇ₓ̂ D(x̂, s)‖ − 1)²]` with `x̂ = t x + (1 − t) x̃` and one `t`
/// per row. The gradient is taken with respect to `x̂` only.
pub fn gradient_penalty(
    g: &mut Graph,
    critic: &Critic,
    vars: &MlpVars,
    x_real: Var,
    x_fake: Var,
    s: Var,
    t: &Matrix,
) -> Result<Var> {
    check_batch(g, x_real, x_fake, s)?;
    let (n, f) = g.value(x_real).shape();
    if t.shape() != (n, 1) {
        return Err(Error::dim("gradient_penalty", format!("t is {:?}, expected ({n}, 1)", t.shape())));
    }
    let x_hat = if g.requires_grad(x_real) || g.requires_grad(x_fake) {
        let tv = g.constant(t.clone());
        let tb = g.broadcast_cols(tv, f)?;
        let one_minus = g.constant(t.map(|v| 1.0 - v));
        let ob = g.broadcast_cols(one_minus, f)?;
        let a = g.mul(tb, x_real)?;
        let b = g.mul(ob, x_fake)?;
        g.add(a, b)?
    } else {
        let (xr, xf) = (g.value(x_real), g.value(x_fake));
        let value = Matrix::from_fn(n, f, |i, j| t.get(i, 0) * xr.get(i, j) + (1.0 - t.get(i, 0)) * xf.get(i, j));
        g.variable(value)
    };
    let d = critic.forward(g, vars, x_hat, s)?;
    let total = g.sum(d)?;
    let grad = g.grad(total, &[x_hat])?[0];
    let sq = g.square(grad)?;
    let norms_sq = g.sum_cols(sq)?;
    let norms = g.sqrt(norms_sq)?;
    let dev = g.add_scalar(norms, -1.0)?;
    let dev_sq = g.square(dev)?;
    g.mean(dev_sq)
}

/// `C = −E[log p(y | x̃)]` under the classifier's softmax.
pub fn classification_loss(
    g: &mut Graph,
    classifier: &SoftmaxClassifier,
    vars: &ClassifierVars,
    x_fake: Var,
    labels: &[usize],
) -> Result<Var> {
    if let Some(l) = labels.iter().find(|l| **l >= classifier.classes()) {
        return Err(Error::Invalid(format!("label {l} outside the classifier's {} classes", classifier.classes())));
    }
    let logits = classifier.logits(g, vars, x_fake)?;
    g.softmax_cross_entropy(logits, labels)
}

/// Critic objective to minimise: `−L + λR`.
pub fn critic_objective(g: &mut Graph, wasserstein: Var, penalty: Var, gp_weight: f64) -> Result<Var> {
    let neg = g.neg(wasserstein)?;
    let pen = g.scale(penalty, gp_weight)?;
    g.add(neg, pen)
}

/// Generator/sampler objective to minimise: `−E[D(x̃, s)] + βC`, plus
/// `λR` when a penalty is given.
pub fn generator_objective(
    g: &mut Graph,
    fake_score: Var,
    cls: Var,
    penalty: Option<Var>,
    cls_weight: f64,
    gp_weight: f64,
) -> Result<Var> {
    let neg = g.neg(fake_score)?;
    let weighted = g.scale(cls, cls_weight)?;
    let mut objective = g.add(neg, weighted)?;
    if let Some(r) = penalty {
        let pen = g.scale(r, gp_weight)?;
        objective = g.add(objective, pen)?;
    }
    Ok(objective)
}

/// Mean negative log-likelihood of `labels` under row-wise probabilities.
pub fn nll_from_probabilities(probs: &Matrix, labels: &[usize]) -> Result<f64> {
    if probs.rows() != labels.len() || labels.is_empty() {
        return Err(Error::dim("classification_loss", format!("{} rows for {} labels", probs.rows(), labels.len())));
    }
    let mut total = 0.0;
    for (row, &l) in probs.iter_rows().zip(labels) {
        let p = *row.get(l).ok_or_else(|| Error::Invalid(format!("label {l} outside {} classes", row.len())))?;
        if p <= 0.0 {
            return Err(Error::domain("classification_loss", format!("probability {p} for label {l}")));
        }
        total -= p.ln();
    }
    Ok(total / labels.len() as f64)
}

/// Every network produced by [`train`].
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModels {
    pub shapes: ModelShapes,
    pub leaky_slope: f64,
    pub seed: u64,
    pub generator: Generator,
    pub critic: Critic,
    pub sampler: Sampler,
    pub classifier: SoftmaxClassifier,
    /// Classifier output order.
    pub seen_classes: Vec<String>,
    pub generator_steps: usize,
    pub critic_steps: usize,
}

fn mlp_section(net: &Mlp) -> Vec<Matrix> {
    net.params().into_iter().cloned().collect()
}

fn mlp_from_section(template: &Mlp, section: &[Matrix], name: &str) -> Result<Mlp> {
    let [w1, b1, w2, b2] = section else {
        return Err(Error::Format(format!("section `{name}` needs 4 matrices, has {}", section.len())));
    };
    for (got, want) in [w1, b1, w2, b2].iter().zip(template.params()) {
        if got.shape() != want.shape() {
            return Err(Error::Format(format!(
                "section `{name}`: {:?} where {:?} was expected",
                got.shape(),
                want.shape()
            )));
        }
    }
    Ok(Mlp { w1: w1.clone(), b1: b1.clone(), w2: w2.clone(), b2: b2.clone(), ..template.clone() })
}

impl TrainedModels {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ckpt = Checkpoint::new(CheckpointMeta {
            embedding_dim: self.shapes.embedding_dim,
            feature_dim: self.shapes.feature_dim,
            width_divisor: self.shapes.width_divisor,
            leaky_slope: self.leaky_slope,
            seed: self.seed,
            generator_steps: self.generator_steps,
            critic_steps: self.critic_steps,
            seen_classes: self.seen_classes.clone(),
            sampler_fixed_sigma: self.sampler.fixed_sigma,
        });
        ckpt.put("generator", mlp_section(&self.generator.net));
        ckpt.put("critic", mlp_section(&self.critic.net));
        ckpt.put("sampler", mlp_section(&self.sampler.net));
        ckpt.put("classifier", vec![self.classifier.weights.clone(), self.classifier.bias.clone()]);
        ckpt
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self> {
        let m = &ckpt.meta;
        let shapes = ModelShapes::new(m.embedding_dim, m.feature_dim, m.width_divisor)?;
        // templates fix the shapes and activations; their weights are replaced
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let generator = Generator::new(&shapes, m.leaky_slope, &mut rng);
        let critic = Critic::new(&shapes, m.leaky_slope, &mut rng);
        let sampler = Sampler::new(&shapes, m.leaky_slope, &mut rng);
        let cls = ckpt.section("classifier")?;
        let [weights, bias] = cls else {
            return Err(Error::Format("section `classifier` needs 2 matrices".into()));
        };
        if weights.shape() != (m.feature_dim, m.seen_classes.len()) || bias.shape() != (1, m.seen_classes.len()) {
            return Err(Error::Format("classifier shape disagrees with the checkpoint metadata".into()));
        }
        Ok(TrainedModels {
            shapes,
            leaky_slope: m.leaky_slope,
            seed: m.seed,
            generator: Generator { net: mlp_from_section(&generator.net, ckpt.section("generator")?, "generator")? },
            critic: Critic { net: mlp_from_section(&critic.net, ckpt.section("critic")?, "critic")? },
            sampler: Sampler {
                net: mlp_from_section(&sampler.net, ckpt.section("sampler")?, "sampler")?,
                fixed_sigma: m.sampler_fixed_sigma,
            },
            classifier: SoftmaxClassifier { weights: weights.clone(), bias: bias.clone() },
            seen_classes: m.seen_classes.clone(),
            generator_steps: m.generator_steps,
            critic_steps: m.critic_steps,
        })
    }
}

fn normal_matrix<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Draws a batch: classes uniformly, then an instance uniformly within the class.
struct BatchSampler<'a> {
    dataset: &'a Dataset,
    by_class: Vec<Vec<usize>>,
    embedding_rows: Vec<usize>,
}

struct Batch {
    x: Matrix,
    c: Matrix,
    labels: Vec<usize>,
}

impl<'a> BatchSampler<'a> {
    fn draw<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        let mut rows = Vec::with_capacity(n);
        let mut emb = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for _ in 0..n {
            let k = rng.random_range(0..self.by_class.len());
            let members = &self.by_class[k];
            rows.push(members[rng.random_range(0..members.len())]);
            emb.push(self.embedding_rows[k]);
            labels.push(k);
        }
        Ok(Batch {
            x: self.dataset.features().select_rows(&rows)?,
            c: self.dataset.embeddings().select_rows(&emb)?,
            labels,
        })
    }
}

/// Seen classes present in `dataset`, in registry order.
fn seen_classes(dataset: &Dataset) -> Vec<String> {
    let present = dataset.instances_by_class();
    dataset.class_names().iter().filter(|n| present.contains_key(n.as_str())).cloned().collect()
}

fn diverged(step: usize, what: &str, values: &[(&str, f64)]) -> Error {
    let snapshot = values.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(" ");
    Error::Training { step, snapshot: format!("{what}: {snapshot}") }
}

/// Trains generator, critic and sampler on the labelled instances of
/// `dataset`, which must all belong to seen classes.
pub fn train(dataset: &Dataset, config: &TrainConfig) -> Result<(TrainedModels, Vec<LossBreakdown>)> {
    config.validate()?;
    let seen = seen_classes(dataset);
    if seen.is_empty() {
        return Err(Error::Invalid("no training instances".into()));
    }
    let shapes = ModelShapes::new(dataset.embedding_dim(), dataset.feature_dim(), config.width_divisor)?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let by_name = dataset.instances_by_class();
    let sampler_data = BatchSampler {
        dataset,
        by_class: seen.iter().map(|n| by_name[n.as_str()].clone()).collect(),
        embedding_rows: seen.iter().map(|n| dataset.class_index(n).expect("seen class is registered")).collect(),
    };
    let class_of: Vec<usize> =
        dataset.labels().iter().map(|l| seen.iter().position(|n| n == l).expect("label is seen")).collect();

    let mut classifier = SoftmaxClassifier::new(shapes.feature_dim, seen.len(), &mut rng);
    classifier.fit(dataset.features(), &class_of, &config.classifier, &mut rng)?;

    let slope = config.leaky_slope;
    let mut generator = Generator::new(&shapes, slope, &mut rng);
    if config.init_output_bias_to_mean {
        generator.net.b2 = dataset.features().mean_rows();
    }
    let mut critic = Critic::new(&shapes, slope, &mut rng);
    let mut sampler = Sampler { fixed_sigma: config.sampler_sigma, ..Sampler::new(&shapes, slope, &mut rng) };
    let mut adam_d = Adam::new(config.adam, &critic.net.params());
    let mut adam_g = Adam::new(config.adam, &generator.net.params());
    let mut adam_s = Adam::new(config.adam, &sampler.net.params());
    let mut adam_c = Adam::new(config.adam, &[&classifier.weights, &classifier.bias]);

    let mut averaged = config.ema_decay.map(|_| (generator.net.clone(), sampler.net.clone()));
    let e = shapes.embedding_dim;
    let n = config.batch_size;
    let started = Instant::now();
    let mut history = Vec::with_capacity(config.iterations);
    let mut critic_updates = 0;
    for step in 0..config.iterations {
        let progress = step as f64 / config.iterations.saturating_sub(1).max(1) as f64;
        let lr = config.adam.learning_rate * (1.0 - (1.0 - config.lr_final_fraction) * progress);
        for opt in [&mut adam_d, &mut adam_g, &mut adam_s, &mut adam_c] {
            opt.config.learning_rate = lr;
        }
        let (mut last_w, mut last_gp) = (0.0, 0.0);
        for _ in 0..config.critic_steps {
            let batch = sampler_data.draw(n, &mut rng)?;
            let u = normal_matrix(n, e, &mut rng);
            let z = normal_matrix(n, e, &mut rng);
            let t = Matrix::from_fn(n, 1, |_, _| rng.random::<f64>());
            let s = sampler.infer_sample(&batch.c, &u)?;
            let x_fake = generator.infer(&s, &z)?;

            let mut g = Graph::new();
            let vars = critic.net.bind(&mut g, true);
            let xr = g.constant(batch.x);
            let xf = g.constant(x_fake);
            let sv = g.constant(s);
            let l = wgan_loss(&mut g, &critic, &vars, xr, xf, sv)?;
            let r = gradient_penalty(&mut g, &critic, &vars, xr, xf, sv, &t)?;
            let objective = critic_objective(&mut g, l, r, config.gp_weight)?;
            last_w = g.scalar(l)?;
            last_gp = g.scalar(r)?;
            if !(last_w.is_finite() && last_gp.is_finite()) {
                return Err(diverged(step, "critic loss", &[("wasserstein", last_w), ("gp", last_gp)]));
            }
            let grads = g.backward(objective, &vars.all())?;
            let grads: Vec<&Matrix> = vars.all().iter().map(|v| grads.of(*v)).collect();
            adam_d.step(&mut critic.net.params_mut(), &grads).map_err(|e| retag(e, step))?;
            critic_updates += 1;
        }

        let batch = sampler_data.draw(n, &mut rng)?;
        let u = normal_matrix(n, e, &mut rng);
        let z = normal_matrix(n, e, &mut rng);
        let t = Matrix::from_fn(n, 1, |_, _| rng.random::<f64>());
        let mut g = Graph::new();
        let gv = generator.net.bind(&mut g, true);
        let sv_vars = sampler.net.bind(&mut g, true);
        let dv = critic.net.bind(&mut g, false);
        let cv = classifier.bind(&mut g, !config.freeze_classifier);
        let c = g.constant(batch.c);
        let uv = g.constant(u);
        let zv = g.constant(z);
        let s = sampler.sample(&mut g, &sv_vars, c, uv)?;
        let x_fake = generator.forward(&mut g, &gv, s, zv)?;
        let s_critic = if config.detach_critic_condition { g.constant(g.value(s).clone()) } else { s };
        let d_fake = critic.forward(&mut g, &dv, x_fake, s_critic)?;
        let fake = g.mean(d_fake)?;
        let cls = classification_loss(&mut g, &classifier, &cv, x_fake, &batch.labels)?;
        let cls_value = g.scalar(cls)?;
        let penalty = if config.gp_in_generator {
            let xr = g.constant(batch.x);
            Some(gradient_penalty(&mut g, &critic, &dv, xr, x_fake, s_critic, &t)?)
        } else {
            None
        };
        let objective = generator_objective(&mut g, fake, cls, penalty, config.cls_weight, config.gp_weight)?;
        let objective_value = g.scalar(objective)?;
        if !(objective_value.is_finite() && cls_value.is_finite()) {
            return Err(diverged(step, "generator loss", &[("objective", objective_value), ("cls", cls_value)]));
        }
        let mut wrt: Vec<Var> = gv.all().into_iter().chain(sv_vars.all()).collect();
        if !config.freeze_classifier {
            wrt.extend([cv.weights, cv.bias]);
        }
        let grads = g.backward(objective, &wrt)?;
        let of = |v: Var| grads.of(v);
        adam_g.step(&mut generator.net.params_mut(), &gv.all().map(of)).map_err(|e| retag(e, step))?;
        adam_s.step(&mut sampler.net.params_mut(), &sv_vars.all().map(of)).map_err(|e| retag(e, step))?;
        if !config.freeze_classifier {
            adam_c
                .step(&mut [&mut classifier.weights, &mut classifier.bias], &[of(cv.weights), of(cv.bias)])
                .map_err(|e| retag(e, step))?;
        }

        if let (Some(decay), Some((g_avg, s_avg))) = (config.ema_decay, averaged.as_mut()) {
            ema_update(g_avg, &generator.net, decay);
            ema_update(s_avg, &sampler.net, decay);
        }

        history.push(LossBreakdown {
            step,
            wasserstein: last_w,
            gp: last_gp,
            cls: cls_value,
            elapsed: started.elapsed(),
        });
        if step % 500 == 0 {
            log::debug!("step {step}: W={last_w:.4} gp={last_gp:.4} cls={cls_value:.4}");
        }
    }

    if let Some((g_avg, s_avg)) = averaged {
        generator.net = g_avg;
        sampler.net = s_avg;
    }
    let models = TrainedModels {
        shapes,
        leaky_slope: slope,
        seed: config.seed,
        generator,
        critic,
        sampler,
        classifier,
        seen_classes: seen,
        generator_steps: config.iterations,
        critic_steps: critic_updates,
    };
    Ok((models, history))
}

fn ema_update(average: &mut Mlp, current: &Mlp, decay: f64) {
    for (a, c) in average.params_mut().into_iter().zip(current.params()) {
        for (x, y) in a.data_mut().iter_mut().zip(c.data()) {
            *x = decay * *x + (1.0 - decay) * y;
        }
    }
}

fn retag(e: Error, step: usize) -> Error {
    match e {
        Error::Training { snapshot, .. } => Error::Training { step, snapshot },
        other => other,
    }
}

/// Features with one class label per row.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledFeatures {
    pub features: Matrix,
    pub labels: Vec<String>,
}

impl LabeledFeatures {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn extend(&mut self, other: LabeledFeatures) -> Result<()> {
        if self.labels.is_empty() && self.features.cols() == 0 {
            *self = other;
            return Ok(());
        }
        if other.is_empty() {
            return Ok(());
        }
        self.features = self.features.concat_rows(&other.features)?;
        self.labels.extend(other.labels);
        Ok(())
    }
}

/// Random stream for one class or embedding, independent of what else is
/// generated in the same call.
pub(crate) fn substream(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `n` generated features for each class in `classes`, grouped by class in
/// request order. The noise for a class depends only on `seed` and the
/// class's registry index.
pub fn synthesize_features(
    models: &TrainedModels,
    dataset: &Dataset,
    classes: &[String],
    n: usize,
    seed: u64,
) -> Result<LabeledFeatures> {
    let e = models.shapes.embedding_dim;
    if dataset.embedding_dim() != e {
        return Err(Error::dim(
            "synthesize_features",
            format!("embeddings have {} dims, models expect {e}", dataset.embedding_dim()),
        ));
    }
    let mut out = LabeledFeatures { features: Matrix::zeros(0, models.shapes.feature_dim), labels: Vec::new() };
    for name in classes {
        let index = dataset.class_index(name).ok_or_else(|| Error::UnknownClass(name.clone()))?;
        if n == 0 {
            continue;
        }
        let mut rng = substream(seed, index as u64);
        let c = Matrix::from_fn(n, e, |_, j| dataset.embeddings().get(index, j));
        let u = normal_matrix(n, e, &mut rng);
        let z = normal_matrix(n, e, &mut rng);
        let s = models.sampler.infer_sample(&c, &u)?;
        let x = models.generator.infer(&s, &z)?;
        out.features = out.features.concat_rows(&x)?;
        out.labels.extend(std::iter::repeat_n(name.clone(), n));
    }
    Ok(out)
}

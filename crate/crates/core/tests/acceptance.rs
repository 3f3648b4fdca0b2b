//! Acceptance suite. Prints one PASS/FAIL line per criterion and a summary.
//!
//! The process exits 0 even when a criterion fails so that the workspace
//! test run stays usable; set `OZSL_ACCEPTANCE_STRICT=1` to exit 1 instead.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use ozsl::autodiff::{Graph, Var};
use ozsl::linalg::{euclidean, Matrix};
use ozsl::metrics::{format_percent, h_ozsl, harmonic, tally, ConfusionLedger, Counts, EvalReport, Prediction, Truth};
use ozsl::nn::{Critic, Generator, ModelShapes, Sampler, SoftmaxClassifier};
use ozsl::openset::weibull_mle;
use ozsl::pipeline::{prepare_classifier, EvalConfig, Rejector, SWEEP_TAILS};
use ozsl::protocol::{
    apply_manifest, generate_synthetic, make_split, Holdout, Provenance, Regime, SplitManifest, SyntheticSpec,
};
use ozsl::report::{pr_series, render_table, reports_jsonl};
use ozsl::sampling::{auto_sigma_scale, complementary_sample, random_regions, ComplementaryConfig};
use ozsl::vacwgan::{
    classification_loss, critic_objective, generator_objective, gradient_penalty, synthesize_features, train,
    wgan_loss, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{StandardNormal, Weibull};

type Check = Result<(bool, String), String>;

struct Line {
    name: &'static str,
    pass: bool,
    detail: String,
    elapsed: Duration,
    budget: Duration,
}

impl Line {
    fn print(&self) {
        let verdict = if self.pass { "PASS" } else { "FAIL" };
        let over =
            if self.elapsed > self.budget { format!(" (over the {:?} budget)", self.budget) } else { String::new() };
        println!("{verdict}  {:<34} {:>9.2?}{over}  {}", self.name, self.elapsed, self.detail);
    }
}

fn timed(name: &'static str, budget_secs: u64, check: impl FnOnce() -> Check) -> Line {
    let started = Instant::now();
    let (pass, detail) = match check() {
        Ok(v) => v,
        Err(e) => (false, format!("error: {e}")),
    };
    let elapsed = started.elapsed();
    let budget = Duration::from_secs(budget_secs);
    Line { name, pass: pass && elapsed <= budget, detail, elapsed, budget }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

// ---------------------------------------------------------------- metrics

fn metric_oracles() -> Check {
    let cases = [
        ("F1_Ω", harmonic(0.1881, 0.5824), 28.43),
        ("H_OZSL", h_ozsl(0.6148, 0.3929), 47.94),
        ("H_OZSL", h_ozsl(0.7332, 0.4577), 56.36),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (what, got, want) in cases {
        let ok = (100.0 * got - want).abs() <= 0.02;
        pass &= ok;
        parts.push(format!("{what} {} (want {want})", format_percent(got)));
    }
    Ok((pass, parts.join(", ")))
}

/// Counts straight from the set definitions, one class at a time.
fn ledger_oracle(predictions: &[Prediction], truth: &[Truth], classes: &[String]) -> ConfusionLedger {
    let count =
        |f: &dyn Fn(&Prediction, &Truth) -> bool| predictions.iter().zip(truth).filter(|(p, t)| f(p, t)).count() as u64;
    let mut ledger = ConfusionLedger::default();
    for c in classes {
        let is_p = |p: &Prediction| matches!(p, Prediction::Class(x) if x == c);
        let is_t = |t: &Truth| matches!(t, Truth::Class(x) if x == c);
        let counts = Counts {
            tp: count(&|p, t| is_p(p) && is_t(t)),
            fp: count(&|p, t| is_p(p) && !is_t(t)),
            fn_: count(&|p, t| !is_p(p) && is_t(t)),
        };
        ledger.classes.insert(c.clone(), counts);
    }
    let rejected = |p: &Prediction| *p == Prediction::Reject;
    let unknown = |t: &Truth| *t == Truth::Unknown;
    ledger.unknown = Counts {
        tp: count(&|p, t| rejected(p) && unknown(t)),
        fp: count(&|p, t| rejected(p) && !unknown(t)),
        fn_: count(&|p, t| !rejected(p) && unknown(t)),
    };
    ledger
}

fn ledger_equivalence() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut instances = 0;
    for case in 0..1000 {
        let k = rng.random_range(2..=12);
        let split = rng.random_range(1..k);
        let names: Vec<String> = (0..k).map(|i| format!("c{i}")).collect();
        let manifest = SplitManifest {
            regime: Regime::FiftyFifty,
            seen: names[..split].to_vec(),
            unseen: names[split..].to_vec(),
            unknown: vec!["x".into()],
            provenance: Provenance::SeededRandom { seed: case },
        };
        let n = rng.random_range(0..=200);
        let reject_rate = rng.random::<f64>();
        let unknown_rate = rng.random::<f64>() * 0.5;
        let mut predictions = Vec::with_capacity(n);
        let mut truth = Vec::with_capacity(n);
        for _ in 0..n {
            predictions.push(if rng.random::<f64>() < reject_rate {
                Prediction::Reject
            } else {
                Prediction::Class(names[rng.random_range(0..k)].clone())
            });
            truth.push(if rng.random::<f64>() < unknown_rate {
                Truth::Unknown
            } else {
                Truth::Class(names[rng.random_range(0..k)].clone())
            });
        }
        let got = tally(&predictions, &truth, &manifest).map_err(err)?;
        let want = ledger_oracle(&predictions, &truth, &names);
        if got != want {
            return Ok((false, format!("vector {case} differs: {got:?} vs {want:?}")));
        }
        instances += n;
    }
    Ok((true, format!("1000 vectors, {instances} instances, all identical")))
}

// ---------------------------------------------------------------- autodiff

type Build = Box<dyn Fn(&mut Graph, &[Var]) -> ozsl::Result<Var>>;

fn frob(m: &[f64]) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Norm-wise relative error between the graph gradient of the scalar
/// built by `build` and central differences, over all `inputs`.
fn gradient_error(inputs: &[Matrix], build: &dyn Fn(&mut Graph, &[Var]) -> ozsl::Result<Var>) -> ozsl::Result<f64> {
    let eval = |values: &[Matrix]| -> ozsl::Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|m| g.variable(m.clone())).collect();
        let root = build(&mut g, &vars)?;
        g.scalar(root)
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|m| g.variable(m.clone())).collect();
    let root = build(&mut g, &vars)?;
    let grads = g.backward(root, &vars)?;

    let h = 1e-6;
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    let mut values = inputs.to_vec();
    for (i, v) in vars.iter().enumerate() {
        analytic.extend_from_slice(grads.of(*v).data());
        for j in 0..values[i].len() {
            let x = values[i].data()[j];
            values[i].data_mut()[j] = x + h;
            let up = eval(&values)?;
            values[i].data_mut()[j] = x - h;
            let down = eval(&values)?;
            values[i].data_mut()[j] = x;
            numeric.push((up - down) / (2.0 * h));
        }
    }
    let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, b)| a - b).collect();
    let scale = frob(&analytic).max(frob(&numeric)).max(1e-10);
    Ok(frob(&diff) / scale)
}

/// Reduces a matrix node to a scalar through a fixed random weighting, so
/// that no primitive is checked through a constant-sum shortcut.
fn weighted_sum(g: &mut Graph, v: Var, weights: &Matrix) -> ozsl::Result<Var> {
    let w = g.constant(weights.clone());
    let p = g.mul(v, w)?;
    g.sum(p)
}

fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

fn positive(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(0.5..2.0))
}

fn primitive_cases(rng: &mut ChaCha8Rng) -> Vec<(&'static str, Vec<Matrix>, Build)> {
    let r = rng.random_range(1..=4);
    let c = rng.random_range(2..=4);
    let k = rng.random_range(1..=4);
    let out_weights = |rows: usize, cols: usize, rng: &mut ChaCha8Rng| normal(rows, cols, rng);
    let mut cases: Vec<(&'static str, Vec<Matrix>, Build)> = Vec::new();

    macro_rules! case {
        ($name:expr, $inputs:expr, ($or:expr, $oc:expr), |$g:ident, $v:ident| $body:expr) => {{
            let w = out_weights($or, $oc, rng);
            cases.push((
                $name,
                $inputs,
                Box::new(move |$g: &mut Graph, $v: &[Var]| {
                    let out = $body;
                    weighted_sum($g, out, &w)
                }),
            ));
        }};
    }

    case!("matmul", vec![normal(r, k, rng), normal(k, c, rng)], (r, c), |g, v| g.matmul(v[0], v[1])?);
    case!("transpose", vec![normal(r, c, rng)], (c, r), |g, v| g.transpose(v[0])?);
    case!("add", vec![normal(r, c, rng), normal(r, c, rng)], (r, c), |g, v| g.add(v[0], v[1])?);
    case!("sub", vec![normal(r, c, rng), normal(r, c, rng)], (r, c), |g, v| g.sub(v[0], v[1])?);
    case!("add_bias", vec![normal(r, c, rng), normal(1, c, rng)], (r, c), |g, v| g.add_bias(v[0], v[1])?);
    case!("mul", vec![normal(r, c, rng), normal(r, c, rng)], (r, c), |g, v| g.mul(v[0], v[1])?);
    case!("scale", vec![normal(r, c, rng)], (r, c), |g, v| g.scale(v[0], -1.7)?);
    case!("neg", vec![normal(r, c, rng)], (r, c), |g, v| g.neg(v[0])?);
    case!("add_scalar", vec![normal(r, c, rng)], (r, c), |g, v| g.add_scalar(v[0], 0.3)?);
    case!("leaky_relu", vec![normal(r, c, rng)], (r, c), |g, v| g.leaky_relu(v[0], 0.2)?);
    case!("relu", vec![normal(r, c, rng)], (r, c), |g, v| g.relu(v[0])?);
    case!("concat_cols", vec![normal(r, c, rng), normal(r, k, rng)], (r, c + k), |g, v| g.concat_cols(v[0], v[1])?);
    case!("slice_cols", vec![normal(r, c, rng)], (r, c - 1), |g, v| g.slice_cols(v[0], 1, c)?);
    case!("pad_cols", vec![normal(r, c, rng)], (r, c + 3), |g, v| g.pad_cols(v[0], 1, 2)?);
    case!("exp", vec![normal(r, c, rng)], (r, c), |g, v| g.exp(v[0])?);
    case!("ln", vec![positive(r, c, rng)], (r, c), |g, v| g.ln(v[0])?);
    case!("sqrt", vec![positive(r, c, rng)], (r, c), |g, v| g.sqrt(v[0])?);
    case!("square", vec![normal(r, c, rng)], (r, c), |g, v| g.square(v[0])?);
    case!("recip_or_zero", vec![positive(r, c, rng)], (r, c), |g, v| g.recip_or_zero(v[0])?);
    case!("sum", vec![normal(r, c, rng)], (1, 1), |g, v| g.sum(v[0])?);
    case!("mean", vec![normal(r, c, rng)], (1, 1), |g, v| g.mean(v[0])?);
    case!("sum_rows", vec![normal(r, c, rng)], (1, c), |g, v| g.sum_rows(v[0])?);
    case!("sum_cols", vec![normal(r, c, rng)], (r, 1), |g, v| g.sum_cols(v[0])?);
    case!("broadcast_rows", vec![normal(1, c, rng)], (r, c), |g, v| g.broadcast_rows(v[0], r)?);
    case!("broadcast_cols", vec![normal(r, 1, rng)], (r, c), |g, v| g.broadcast_cols(v[0], c)?);
    case!("broadcast_scalar", vec![normal(1, 1, rng)], (r, c), |g, v| g.broadcast_scalar(v[0], r, c)?);
    case!("softmax_rows", vec![normal(r, c, rng)], (r, c), |g, v| g.softmax_rows(v[0])?);
    let targets: Vec<usize> = (0..r).map(|_| rng.random_range(0..c)).collect();
    case!("softmax_cross_entropy", vec![normal(r, c, rng)], (1, 1), |g, v| g.softmax_cross_entropy(v[0], &targets)?);
    cases
}

struct Nets {
    generator: Generator,
    sampler: Sampler,
    critic: Critic,
    classifier: SoftmaxClassifier,
    c: Matrix,
    u: Matrix,
    z: Matrix,
    x: Matrix,
    t: Matrix,
    labels: Vec<usize>,
}

fn random_nets(rng: &mut ChaCha8Rng) -> Nets {
    let e = rng.random_range(1..=3);
    let f = rng.random_range(2..=5);
    let n = rng.random_range(2..=6);
    let k = rng.random_range(2..=4);
    let shapes = ModelShapes::new(e, f, 512).expect("positive dims");
    // bias the generator output up so the ReLU output is mostly active
    let mut generator = Generator::new(&shapes, 0.2, rng);
    generator.net.b2 = generator.net.b2.map(|v| v + 1.0);
    Nets {
        generator,
        sampler: Sampler::new(&shapes, 0.2, rng),
        critic: Critic::new(&shapes, 0.2, rng),
        classifier: SoftmaxClassifier::new(f, k, rng),
        c: normal(n, e, rng),
        u: normal(n, e, rng),
        z: normal(n, e, rng),
        x: positive(n, f, rng),
        t: Matrix::from_fn(n, 1, |_, _| rng.random::<f64>()),
        labels: (0..n).map(|_| rng.random_range(0..k)).collect(),
    }
}

/// `−E D(G(s, z), s) + βC` with the sampler's learned `σ` in the path,
/// as a function of the generator, sampler and classifier parameters.
fn generator_loss_error(nets: &Nets) -> ozsl::Result<f64> {
    let mut inputs: Vec<Matrix> = nets.generator.net.params().into_iter().cloned().collect();
    inputs.extend(nets.sampler.net.params().into_iter().cloned());
    inputs.push(nets.classifier.weights.clone());
    inputs.push(nets.classifier.bias.clone());
    let build = |g: &mut Graph, v: &[Var]| {
        let gv = ozsl::nn::MlpVars { w1: v[0], b1: v[1], w2: v[2], b2: v[3] };
        let sv = ozsl::nn::MlpVars { w1: v[4], b1: v[5], w2: v[6], b2: v[7] };
        let cv = ozsl::nn::ClassifierVars { weights: v[8], bias: v[9] };
        let dv = nets.critic.net.bind(g, false);
        let c = g.constant(nets.c.clone());
        let u = g.constant(nets.u.clone());
        let z = g.constant(nets.z.clone());
        let s = nets.sampler.sample(g, &sv, c, u)?;
        let x_fake = nets.generator.forward(g, &gv, s, z)?;
        let d = nets.critic.forward(g, &dv, x_fake, s)?;
        let fake = g.mean(d)?;
        let cls = classification_loss(g, &nets.classifier, &cv, x_fake, &nets.labels)?;
        generator_objective(g, fake, cls, None, 0.01, 10.0)
    };
    gradient_error(&inputs, &build)
}

/// `−L + λR` as a function of the critic parameters, through the
/// double-backprop penalty.
fn critic_loss_error(nets: &Nets) -> ozsl::Result<f64> {
    let s = nets.sampler.infer_sample(&nets.c, &nets.u)?;
    let x_fake = nets.generator.infer(&s, &nets.z)?;
    let inputs: Vec<Matrix> = nets.critic.net.params().into_iter().cloned().collect();
    let build = |g: &mut Graph, v: &[Var]| {
        let dv = ozsl::nn::MlpVars { w1: v[0], b1: v[1], w2: v[2], b2: v[3] };
        let xr = g.constant(nets.x.clone());
        let xf = g.constant(x_fake.clone());
        let sv = g.constant(s.clone());
        let l = wgan_loss(g, &nets.critic, &dv, xr, xf, sv)?;
        let r = gradient_penalty(g, &nets.critic, &dv, xr, xf, sv, &nets.t)?;
        critic_objective(g, l, r, 10.0)
    };
    gradient_error(&inputs, &build)
}

fn autodiff_finite_differences() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: BTreeMap<&'static str, f64> = BTreeMap::new();
    let mut note = |name: &'static str, e: f64| {
        let w = worst.entry(name).or_insert(0.0);
        *w = w.max(e);
    };
    for _ in 0..100 {
        for (name, inputs, build) in primitive_cases(&mut rng) {
            note(name, gradient_error(&inputs, &*build).map_err(err)?);
        }
        let nets = random_nets(&mut rng);
        note("G/S loss", generator_loss_error(&nets).map_err(err)?);
        note("critic loss with penalty", critic_loss_error(&nets).map_err(err)?);
    }
    let mut failures = Vec::new();
    for (name, e) in &worst {
        let limit = if *name == "critic loss with penalty" { 1e-3 } else { 1e-4 };
        if !(*e < limit) {
            failures.push(format!("{name} {e:.2e}"));
        }
    }
    let primitives = worst.iter().filter(|(n, _)| !n.contains("loss")).map(|(_, e)| *e).fold(0.0, f64::max);
    let detail = format!(
        "100 instances of {} checks; worst rel err: primitives {primitives:.1e}, G/S loss {:.1e}, critic+penalty {:.1e}{}",
        worst.len(),
        worst["G/S loss"],
        worst["critic loss with penalty"],
        if failures.is_empty() { String::new() } else { format!("; over the limit: {}", failures.join(", ")) }
    );
    Ok((failures.is_empty(), detail))
}

// ---------------------------------------------------------------- weibull

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn weibull_recovery() -> Check {
    let mut worst = 0.0f64;
    let mut worst_at = String::new();
    for shape in [0.5, 1.0, 2.0, 5.0] {
        for scale in [0.5, 2.0] {
            let dist = Weibull::new(scale, shape).map_err(err)?;
            let (mut ks, mut ls) = (Vec::new(), Vec::new());
            for seed in 0..20 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let samples: Vec<f64> = (0..1000).map(|_| rng.sample(dist)).collect();
                let (k, l) = weibull_mle(&samples).map_err(err)?;
                ks.push(k);
                ls.push(l);
            }
            for (got, want) in [(median(ks), shape), (median(ls), scale)] {
                let rel = (got - want).abs() / want;
                if rel > worst {
                    worst = rel;
                    worst_at = format!(" at k={shape}, λ={scale} ({got:.4} vs {want})");
                }
            }
        }
    }
    Ok((worst <= 0.10, format!("8 parameter pairs, worst median relative error {:.2}%{worst_at}", 100.0 * worst)))
}

// ---------------------------------------------------------------- sampling

fn complementary_invariant() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut emitted_configs, mut samples, mut checked) = (0, 0, 0);
    for config_seed in 0..50u64 {
        let k = rng.random_range(2..=20);
        let dim = rng.random_range(2..=16);
        let radius_multiplier = rng.random_range(1.5..4.0);
        let mut regions = random_regions(k, dim, 1.0, config_seed);
        let means: Vec<Vec<f64>> = regions.iter().map(|r| r.mean.clone()).collect();
        let alpha = auto_sigma_scale(&means, radius_multiplier).map_err(err)?;
        for r in &mut regions {
            r.sigma_scale = alpha * rng.random_range(0.5..1.5);
        }
        let config = ComplementaryConfig { radius_multiplier, ..ComplementaryConfig::default() };
        let unknowns = match complementary_sample(&regions, 100, &config, config_seed) {
            Ok(u) => u,
            Err(ozsl::Error::DegenerateGeometry(_)) => continue,
            Err(e) => return Err(e.to_string()),
        };
        emitted_configs += 1;
        for u in &unknowns {
            samples += 1;
            for r in &regions {
                checked += 1;
                let d = euclidean(&u.embedding, &r.mean) / r.sigma_scale.sqrt();
                if d < radius_multiplier {
                    return Ok((
                        false,
                        format!(
                            "config {config_seed}: a sample sits {d:.3} from `{}` (< {radius_multiplier:.3})",
                            r.class
                        ),
                    ));
                }
            }
        }
    }
    let detail = format!(
        "{emitted_configs}/50 configurations emitted, {samples} samples, {checked} sample-region pairs all outside"
    );
    Ok((emitted_configs > 0, detail))
}

// ---------------------------------------------------------------- desk scale

struct DeskRun {
    elapsed: Duration,
    softmax: EvalReport,
    openmax: EvalReport,
    sweep: Vec<EvalReport>,
    seen_gaps: Vec<(String, f64)>,
    worst_coordinate: f64,
    known: usize,
    output: String,
}

fn desk_run() -> ozsl::Result<DeskRun> {
    let started = Instant::now();
    let spec = SyntheticSpec::default();
    let data = generate_synthetic(&spec)?;
    let manifest = make_split(&data.base, Regime::FiftyFifty, spec.seed)?;
    let (train_view, test_view) = apply_manifest(&data.dataset, &manifest, Holdout::default())?;
    let (models, _) = train(&train_view.dataset, &TrainConfig::desk_scale())?;

    let n = 500;
    let generated = synthesize_features(&models, &train_view.dataset, &manifest.seen, n, 1)?;
    let mut seen_gaps = Vec::new();
    let mut worst_coordinate = 0.0f64;
    for (k, name) in manifest.seen.iter().enumerate() {
        let rows: Vec<usize> = (k * n..(k + 1) * n).collect();
        let mean = generated.features.select_rows(&rows)?.mean_rows();
        let truth = data.class_means.row(data.dataset.class_index(name).expect("registered class"));
        seen_gaps.push((name.clone(), euclidean(mean.data(), truth) / spec.spread));
        for (m, t) in mean.data().iter().zip(truth) {
            worst_coordinate = worst_coordinate.max((m - t).abs() / spec.spread);
        }
    }

    let mut reports = Vec::new();
    let mut sweep = Vec::new();
    for rejector in [Rejector::Softmax, Rejector::Openmax] {
        let eval = EvalConfig { rejector, ..EvalConfig::default() };
        let prepared = prepare_classifier(&models, &train_view, &eval)?;
        reports.push(prepared.evaluate(&test_view, &manifest, &eval, &format!("{rejector:?}"))?);
        if rejector == Rejector::Openmax {
            sweep = prepared.tail_sweep(&test_view, &manifest, &eval, SWEEP_TAILS)?;
        }
    }
    let all: Vec<EvalReport> = reports.iter().chain(&sweep).cloned().collect();
    let output = format!("{}{}{}", reports_jsonl(&all), render_table(&all), pr_series(&all));
    Ok(DeskRun {
        elapsed: started.elapsed(),
        openmax: reports.pop().expect("two reports"),
        softmax: reports.pop().expect("two reports"),
        sweep,
        seen_gaps,
        worst_coordinate,
        known: manifest.seen.len() + manifest.unseen.len(),
        output,
    })
}

fn pct(v: f64) -> String {
    format_percent(v)
}

fn main() {
    let mut lines = vec![
        timed("metric oracles", 1, metric_oracles),
        timed("confusion ledger brute force", 5, ledger_equivalence),
        timed("autodiff finite differences", 30, autodiff_finite_differences),
        timed("weibull MLE recovery", 10, weibull_recovery),
        timed("complementary sampling invariant", 10, complementary_invariant),
    ];
    for line in &lines {
        line.print();
    }

    let budget = Duration::from_secs(60);
    let first = desk_run();
    let second = desk_run();
    let desk: Vec<Line> = match (&first, &second) {
        (Ok(a), Ok(b)) => {
            let line = |name, pass: bool, detail: String, elapsed| Line { name, pass, detail, elapsed, budget };
            let on_time = a.elapsed <= budget;
            let s = &a.softmax;
            let o = &a.openmax;
            let worst_gap = a.seen_gaps.iter().map(|(_, g)| *g).fold(0.0, f64::max);
            let gaps: Vec<String> = a.seen_gaps.iter().map(|(n, g)| format!("{n} {g:.2}")).collect();
            let series_lines = pr_series(&a.sweep).lines().count();
            let want_lines = 1 + a.sweep.len() * (a.known + 1);
            let sweep_recalls: Vec<String> = a.sweep.iter().map(|r| pct(r.r_omega)).collect();
            vec![
                line(
                    "desk (a) softmax never rejects",
                    on_time && s.f1_omega == 0.0 && s.f1_seen > 0.0 && s.f1_unseen > 0.0,
                    format!("F1_Ω {} with F1_S {}, F1_U {}", pct(s.f1_omega), pct(s.f1_seen), pct(s.f1_unseen)),
                    a.elapsed,
                ),
                line(
                    "desk (b) openmax rejects unknowns",
                    on_time && o.f1_omega > 0.0 && o.r_omega >= 0.3,
                    format!("F1_Ω {}, R_Ω {}, P_Ω {}", pct(o.f1_omega), pct(o.r_omega), pct(o.p_omega)),
                    a.elapsed,
                ),
                line(
                    "desk (c) generated means",
                    on_time && worst_gap <= 0.5,
                    format!(
                        "seen-class gap in blob σ, want ≤ 0.50: worst {worst_gap:.2} [{}]; worst single coordinate {:.2}",
                        gaps.join(", "),
                        a.worst_coordinate
                    ),
                    a.elapsed,
                ),
                line(
                    "desk (d) byte-for-byte reruns",
                    b.elapsed <= budget && a.output == b.output,
                    format!("{} bytes of reports, table and series; second run {:.1?}", a.output.len(), b.elapsed),
                    b.elapsed,
                ),
                line(
                    "tail-size sweep",
                    a.sweep.len() == 9
                        && series_lines == want_lines
                        && s.r_omega == 0.0
                        && a.sweep.iter().all(|r| r.r_omega > 0.0),
                    format!(
                        "{} reports, {series_lines} series lines (want {want_lines}); R_Ω over tails 2..10: {} vs softmax {}",
                        a.sweep.len(),
                        sweep_recalls.join(" "),
                        pct(s.r_omega)
                    ),
                    Duration::ZERO,
                ),
            ]
        }
        _ => {
            let e = first.as_ref().err().or(second.as_ref().err()).map(err).unwrap_or_default();
            [
                "desk (a) softmax never rejects",
                "desk (b) openmax rejects unknowns",
                "desk (c) generated means",
                "desk (d) byte-for-byte reruns",
                "tail-size sweep",
            ]
            .into_iter()
            .map(|name| Line { name, pass: false, detail: format!("error: {e}"), elapsed: Duration::ZERO, budget })
            .collect()
        }
    };
    for line in &desk {
        line.print();
    }
    lines.extend(desk);

    let failed: Vec<&str> = lines.iter().filter(|l| !l.pass).map(|l| l.name).collect();
    println!("{} of {} criteria pass", lines.len() - failed.len(), lines.len());
    if !failed.is_empty() {
        println!("failing: {}", failed.join("; "));
        if std::env::var("OZSL_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
            std::process::exit(1);
        }
    }
}

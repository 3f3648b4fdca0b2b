use ozsl::autodiff::Graph;
use ozsl::linalg::{euclidean, Matrix};
use ozsl::nn::{Critic, ModelShapes};
use ozsl::protocol::Dataset;
use ozsl::vacwgan::{
    critic_objective, generator_objective, gradient_penalty, synthesize_features, train, wgan_loss, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

fn normal(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

#[test]
fn penalty_matches_a_finite_difference_reimplementation() {
    let shapes = ModelShapes::new(2, 3, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let critic = Critic::new(&shapes, 0.2, &mut rng);
    let (x, xf, s) = (normal(6, 3, &mut rng), normal(6, 3, &mut rng), normal(6, 2, &mut rng));
    let t = Matrix::from_fn(6, 1, |_, _| rng.random::<f64>());

    let mut g = Graph::new();
    let vars = critic.net.bind(&mut g, false);
    let (a, b, c) = (g.constant(x.clone()), g.constant(xf.clone()), g.constant(s.clone()));
    let r = gradient_penalty(&mut g, &critic, &vars, a, b, c, &t).unwrap();
    let got = g.scalar(r).unwrap();

    let h = 1e-6;
    let mut want = 0.0;
    for i in 0..6 {
        let hat: Vec<f64> = (0..3).map(|j| t.get(i, 0) * x.get(i, j) + (1.0 - t.get(i, 0)) * xf.get(i, j)).collect();
        let cond = Matrix::row_vector(s.row(i).to_vec()).unwrap();
        let d = |v: &[f64]| critic.infer(&Matrix::row_vector(v.to_vec()).unwrap(), &cond).unwrap().get(0, 0);
        let mut norm_sq = 0.0;
        for j in 0..3 {
            let (mut up, mut down) = (hat.clone(), hat.clone());
            up[j] += h;
            down[j] -= h;
            norm_sq += ((d(&up) - d(&down)) / (2.0 * h)).powi(2);
        }
        want += (norm_sq.sqrt() - 1.0).powi(2);
    }
    want /= 6.0;
    assert!((got - want).abs() < 1e-3 * want.abs().max(1e-12), "{got} vs {want}");
}

#[test]
fn zero_weights_reduce_to_plain_wasserstein_objectives() {
    let shapes = ModelShapes::new(2, 3, 1024).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let critic = Critic::new(&shapes, 0.2, &mut rng);
    let (x, xf, s) = (normal(5, 3, &mut rng), normal(5, 3, &mut rng), normal(5, 2, &mut rng));
    let t = Matrix::from_fn(5, 1, |_, _| rng.random::<f64>());

    let mut g = Graph::new();
    let vars = critic.net.bind(&mut g, true);
    let (a, b, c) = (g.constant(x), g.constant(xf.clone()), g.constant(s.clone()));
    let l = wgan_loss(&mut g, &critic, &vars, a, b, c).unwrap();
    let r = gradient_penalty(&mut g, &critic, &vars, a, b, c, &t).unwrap();
    let full = critic_objective(&mut g, l, r, 0.0).unwrap();
    let plain = g.neg(l).unwrap();
    assert_eq!(g.scalar(full).unwrap(), g.scalar(plain).unwrap());
    let gf = g.backward(full, &vars.all()).unwrap();
    let gp = g.backward(plain, &vars.all()).unwrap();
    for v in vars.all() {
        assert_eq!(gf.of(v), gp.of(v));
    }

    let d_fake = critic.forward(&mut g, &vars, b, c).unwrap();
    let fake = g.mean(d_fake).unwrap();
    let cls = g.constant(Matrix::filled(1, 1, 0.7));
    let objective = generator_objective(&mut g, fake, cls, Some(r), 0.0, 0.0).unwrap();
    assert_eq!(g.scalar(objective).unwrap(), -g.scalar(fake).unwrap());
}

#[test]
fn two_blob_classes_are_reproduced() {
    let centers = [[1.0, 2.0], [3.0, 2.0]];
    let sd = 0.3;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for i in 0..400 {
        let c = centers[i % 2];
        rows.push(vec![
            c[0] + sd * rng.sample::<f64, _>(StandardNormal),
            c[1] + sd * rng.sample::<f64, _>(StandardNormal),
        ]);
        labels.push(["a", "b"][i % 2].to_string());
    }
    let data = Dataset::new(
        Matrix::from_rows(&rows).unwrap(),
        labels,
        Matrix::from_rows(&[[0.0, 1.0], [1.0, 0.0]]).unwrap(),
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    let config = TrainConfig { iterations: 2000, ..TrainConfig::desk_scale() };
    let (models, history) = train(&data, &config).unwrap();
    assert_eq!(history.len(), 2000);

    let n = 2000;
    let out = synthesize_features(&models, &data, &["a".into(), "b".into()], n, 1).unwrap();
    for (k, c) in centers.iter().enumerate() {
        let mean = out.features.select_rows(&(k * n..(k + 1) * n).collect::<Vec<_>>()).unwrap().mean_rows();
        let gap = euclidean(mean.data(), c) / sd;
        assert!(gap < 0.5, "class {k}: generated mean {:?} is {gap:.3} blob-σ away", mean.data());
    }
}

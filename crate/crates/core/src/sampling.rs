//! Class regions in the sampler's semantic space and complementary
//! sampling of synthetic unknown-class embeddings.
//!
//! Every known class gets an isotropic Gaussian region `N(μ_c, αI)` whose
//! mean is the sampler's output for the class embedding. Unknown
//! embeddings are drawn near the segments joining pairs of region means
//! and kept only if they fall outside every region's `α_r`-ellipse, i.e.
//! in the complement of the union of the hyper-ellipses.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{euclidean, Matrix};
use crate::nn::{Generator, Sampler};
use crate::vacwgan::{substream, LabeledFeatures};

/// Pseudo-label carried by features generated from unknown embeddings.
pub const UNKNOWN_LABEL: &str = "<unknown>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassRegion {
    pub class: String,
    pub mean: Vec<f64>,
    /// `α` in `Σ = αI`.
    pub sigma_scale: f64,
}

/// `‖v − μ‖ / √α`, the Mahalanobis distance under `Σ = αI`.
pub fn mahalanobis(v: &[f64], region: &ClassRegion) -> Result<f64> {
    if !(region.sigma_scale > 0.0) {
        return Err(Error::domain("mahalanobis", format!("sigma scale {} is not positive", region.sigma_scale)));
    }
    if v.len() != region.mean.len() {
        return Err(Error::dim("mahalanobis", format!("vector has {} dims, region {}", v.len(), region.mean.len())));
    }
    Ok(euclidean(v, &region.mean) / region.sigma_scale.sqrt())
}

/// Region scale that keeps typical regions apart: `α` such that two
/// `α_r`-balls just touch at the 25th percentile of pairwise mean
/// distances, `α = q₂₅(‖μ_a − μ_b‖²) / (2 α_r)²`.
pub fn auto_sigma_scale(means: &[Vec<f64>], radius_multiplier: f64) -> Result<f64> {
    let mut sq = Vec::new();
    for (i, a) in means.iter().enumerate() {
        for b in &means[i + 1..] {
            sq.push(euclidean(a, b).powi(2));
        }
    }
    if sq.is_empty() {
        return Err(Error::Invalid("need at least two region means".into()));
    }
    sq.sort_by(f64::total_cmp);
    let q = sq[(sq.len() - 1) / 4];
    let alpha = q / (2.0 * radius_multiplier).powi(2);
    if !(alpha > 0.0 && alpha.is_finite()) {
        return Err(Error::DegenerateGeometry(format!("region means coincide (25th percentile squared distance {q})")));
    }
    Ok(alpha)
}

/// One region per class, centred on the sampler mean of its embedding.
pub fn fit_class_regions(
    sampler: &Sampler,
    names: &[String],
    embeddings: &Matrix,
    sigma_scale: f64,
) -> Result<Vec<ClassRegion>> {
    if names.len() != embeddings.rows() {
        return Err(Error::dim(
            "fit_class_regions",
            format!("{} names for {} embeddings", names.len(), embeddings.rows()),
        ));
    }
    if !(sigma_scale > 0.0 && sigma_scale.is_finite()) {
        return Err(Error::domain("fit_class_regions", format!("sigma scale {sigma_scale} is not positive")));
    }
    names
        .iter()
        .zip(embeddings.iter_rows())
        .map(|(name, c)| Ok(ClassRegion { class: name.clone(), mean: sampler.infer(c)?.mu, sigma_scale }))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComplementaryConfig {
    /// `α_r`: minimum Mahalanobis distance to every region.
    pub radius_multiplier: f64,
    /// Standard deviation of the isotropic displacement, in units of `√α`.
    pub noise_scale: f64,
    /// Candidates tried per emitted embedding before giving up.
    pub retry_budget: usize,
}

impl Default for ComplementaryConfig {
    fn default() -> Self {
        ComplementaryConfig { radius_multiplier: 3.0, noise_scale: 1.0, retry_budget: 1000 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnknownEmbedding {
    pub embedding: Vec<f64>,
    /// Classes whose means span the segment the sample was drawn near.
    pub endpoints: (String, String),
    pub t: f64,
    pub attempts: usize,
    pub radius_multiplier: f64,
}

/// Draws `n` unknown embeddings.
///
/// Candidate: a uniformly chosen pair of distinct regions, a point at
/// `t ~ U[0.25, 0.75]` on the segment between their means, plus isotropic
/// Gaussian noise of standard deviation `noise_scale · √α`. A candidate
/// within `α_r` of any region is rejected. Sample `i` uses its own random
/// substream, so the result for `i` does not depend on `n`.
pub fn complementary_sample(
    regions: &[ClassRegion],
    n: usize,
    config: &ComplementaryConfig,
    seed: u64,
) -> Result<Vec<UnknownEmbedding>> {
    if regions.len() < 2 {
        return Err(Error::Invalid(format!("complementary sampling needs at least 2 regions, got {}", regions.len())));
    }
    if !(config.radius_multiplier > 1.0) {
        return Err(Error::Invalid(format!("radius multiplier must exceed 1, got {}", config.radius_multiplier)));
    }
    if !(config.noise_scale >= 0.0 && config.noise_scale.is_finite()) {
        return Err(Error::Invalid(format!("noise scale must be non-negative, got {}", config.noise_scale)));
    }
    let dim = regions[0].mean.len();
    for r in regions {
        if r.mean.len() != dim {
            return Err(Error::dim(
                "complementary_sample",
                format!("region `{}` has {} dims, expected {dim}", r.class, r.mean.len()),
            ));
        }
        if !(r.sigma_scale > 0.0) {
            return Err(Error::domain(
                "complementary_sample",
                format!("region `{}` has sigma scale {}", r.class, r.sigma_scale),
            ));
        }
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = substream(seed, i as u64);
        out.push(draw_one(regions, config, &mut rng)?);
    }
    Ok(out)
}

fn draw_one(regions: &[ClassRegion], config: &ComplementaryConfig, rng: &mut ChaCha8Rng) -> Result<UnknownEmbedding> {
    let k = regions.len();
    for attempt in 1..=config.retry_budget {
        let a = rng.random_range(0..k);
        let mut b = rng.random_range(0..k - 1);
        if b >= a {
            b += 1;
        }
        let (ra, rb) = (&regions[a], &regions[b]);
        let t = rng.random_range(0.25..=0.75);
        let std = config.noise_scale * (0.5 * (ra.sigma_scale + rb.sigma_scale)).sqrt();
        let candidate: Vec<f64> = ra
            .mean
            .iter()
            .zip(&rb.mean)
            .map(|(x, y)| x + t * (y - x) + std * rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut outside = true;
        for r in regions {
            if mahalanobis(&candidate, r)? < config.radius_multiplier {
                outside = false;
                break;
            }
        }
        if outside {
            return Ok(UnknownEmbedding {
                embedding: candidate,
                endpoints: (ra.class.clone(), rb.class.clone()),
                t,
                attempts: attempt,
                radius_multiplier: config.radius_multiplier,
            });
        }
    }
    Err(Error::DegenerateGeometry(format!(
        "no candidate outside all {k} regions after {} attempts (radius multiplier {})",
        config.retry_budget, config.radius_multiplier
    )))
}

/// The embeddings as rows of one matrix.
pub fn unknown_matrix(unknowns: &[UnknownEmbedding]) -> Result<Matrix> {
    let dim = unknowns.first().map_or(0, |u| u.embedding.len());
    let rows: Vec<&[f64]> = unknowns.iter().map(|u| u.embedding.as_slice()).collect();
    if rows.is_empty() {
        return Ok(Matrix::zeros(0, dim));
    }
    Matrix::from_rows(&rows)
}

#[derive(Serialize)]
struct ProvenanceRecord<'a> {
    index: usize,
    endpoints: [&'a str; 2],
    t: f64,
    attempts: usize,
    radius_multiplier: f64,
}

/// One JSON provenance record per embedding, in row order.
pub fn provenance_jsonl(unknowns: &[UnknownEmbedding]) -> String {
    let mut out = String::new();
    for (index, u) in unknowns.iter().enumerate() {
        let record = ProvenanceRecord {
            index,
            endpoints: [&u.endpoints.0, &u.endpoints.1],
            t: u.t,
            attempts: u.attempts,
            radius_multiplier: u.radius_multiplier,
        };
        out.push_str(&serde_json::to_string(&record).expect("provenance serializes"));
        out.push('\n');
    }
    out
}

/// `n` generated features per unknown embedding, labelled [`UNKNOWN_LABEL`].
pub fn generate_unknown_features(
    unknowns: &[UnknownEmbedding],
    generator: &Generator,
    n: usize,
    seed: u64,
) -> Result<LabeledFeatures> {
    let e = generator.noise_dim();
    let f = generator.net.output_dim();
    let mut out = LabeledFeatures { features: Matrix::zeros(0, f), labels: Vec::new() };
    if n == 0 {
        return Ok(out);
    }
    for (i, u) in unknowns.iter().enumerate() {
        if u.embedding.len() != e {
            return Err(Error::dim(
                "generate_unknown_features",
                format!("embedding has {} dims, generator expects {e}", u.embedding.len()),
            ));
        }
        let mut rng = substream(seed, i as u64);
        let s = Matrix::from_fn(n, e, |_, j| u.embedding[j]);
        let z = Matrix::from_fn(n, e, |_, _| rng.sample(StandardNormal));
        out.features = out.features.concat_rows(&generator.infer(&s, &z)?)?;
        out.labels.extend(std::iter::repeat_n(UNKNOWN_LABEL.to_string(), n));
    }
    Ok(out)
}

/// Deterministic helper for tests and examples: `k` regions with means
/// drawn uniformly in `[−10, 10]^dim`.
pub fn random_regions(k: usize, dim: usize, sigma_scale: f64, seed: u64) -> Vec<ClassRegion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..k)
        .map(|i| ClassRegion {
            class: format!("r{i}"),
            mean: (0..dim).map(|_| rng.random_range(-10.0..10.0)).collect(),
            sigma_scale,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{Activation, Mlp, ModelShapes};

    fn region(mean: &[f64], alpha: f64) -> ClassRegion {
        ClassRegion { class: "c".into(), mean: mean.to_vec(), sigma_scale: alpha }
    }

    #[test]
    fn mahalanobis_cases() {
        assert_eq!(mahalanobis(&[1.0, 2.0], &region(&[1.0, 2.0], 3.0)).unwrap(), 0.0);
        assert_eq!(mahalanobis(&[1.0, 0.0], &region(&[0.0, 0.0], 1.0)).unwrap(), 1.0);
        assert_eq!(mahalanobis(&[2.0, 0.0], &region(&[0.0, 0.0], 4.0)).unwrap(), 1.0);
        assert!(mahalanobis(&[0.0], &region(&[0.0], 0.0)).is_err());
        assert!(mahalanobis(&[0.0], &region(&[0.0, 1.0], 1.0)).is_err());
    }

    #[test]
    fn two_regions_keep_their_distance() {
        let regions = vec![region(&[0.0, 0.0], 1.0), ClassRegion { class: "d".into(), ..region(&[10.0, 0.0], 1.0) }];
        let config = ComplementaryConfig { radius_multiplier: 3.0, ..ComplementaryConfig::default() };
        let samples = complementary_sample(&regions, 200, &config, 1).unwrap();
        assert_eq!(samples.len(), 200);
        for s in &samples {
            assert!(euclidean(&s.embedding, &[0.0, 0.0]) >= 3.0);
            assert!(euclidean(&s.embedding, &[10.0, 0.0]) >= 3.0);
            assert!((0.25..=0.75).contains(&s.t));
        }
        assert!(complementary_sample(&regions, 0, &config, 1).unwrap().is_empty());
    }

    /// Inside test written straight from `(v−μ)ᵀ Σ⁻¹ (v−μ) < α_r²` with `Σ = αI`.
    fn inside_any(v: &[f64], regions: &[ClassRegion], radius: f64) -> bool {
        regions.iter().any(|r| {
            let q: f64 = v.iter().zip(&r.mean).map(|(a, b)| (a - b) * (a - b) / r.sigma_scale).sum();
            q < radius * radius
        })
    }

    #[test]
    fn five_regions_brute_force_membership() {
        let regions = random_regions(5, 2, 1.0, 17);
        let config = ComplementaryConfig::default();
        let samples = complementary_sample(&regions, 1000, &config, 3).unwrap();
        assert!(samples.iter().all(|s| !inside_any(&s.embedding, &regions, config.radius_multiplier)));
    }

    #[test]
    fn region_order_does_not_affect_validity() {
        let mut regions = random_regions(6, 3, 0.5, 8);
        let config = ComplementaryConfig::default();
        regions.reverse();
        for s in complementary_sample(&regions, 300, &config, 2).unwrap() {
            assert!(!inside_any(&s.embedding, &regions, config.radius_multiplier));
        }
    }

    #[test]
    fn huge_radius_exhausts_the_budget() {
        let regions = random_regions(4, 2, 1.0, 5);
        let config = ComplementaryConfig { radius_multiplier: 1e6, ..ComplementaryConfig::default() };
        assert!(matches!(complementary_sample(&regions, 1, &config, 0), Err(Error::DegenerateGeometry(_))));
    }

    #[test]
    fn preconditions() {
        let config = ComplementaryConfig::default();
        assert!(complementary_sample(&random_regions(1, 2, 1.0, 0), 1, &config, 0).is_err());
        let bad = ComplementaryConfig { radius_multiplier: 1.0, ..config };
        assert!(complementary_sample(&random_regions(3, 2, 1.0, 0), 1, &bad, 0).is_err());
    }

    #[test]
    fn determinism_and_prefix_stability() {
        let regions = random_regions(4, 3, 0.5, 1);
        let config = ComplementaryConfig::default();
        let a = complementary_sample(&regions, 20, &config, 9).unwrap();
        assert_eq!(a, complementary_sample(&regions, 20, &config, 9).unwrap());
        assert_eq!(a[..5], complementary_sample(&regions, 5, &config, 9).unwrap()[..]);
    }

    #[test]
    fn auto_scale_separates_quartile_pairs() {
        let means = vec![vec![0.0, 0.0], vec![4.0, 0.0], vec![0.0, 8.0]];
        let alpha = auto_sigma_scale(&means, 2.0).unwrap();
        // squared distances 16, 64, 80; the lower quartile is 16
        assert!((alpha - 16.0 / 16.0).abs() < 1e-12);
        assert!(auto_sigma_scale(&means[..1], 2.0).is_err());
        assert!(auto_sigma_scale(&[vec![1.0], vec![1.0]], 2.0).is_err());
    }

    #[test]
    fn regions_from_a_sampler() {
        let shapes = ModelShapes::new(2, 3, 256).unwrap();
        let zero = Sampler {
            net: Mlp::zeros(2, shapes.sampler_hidden(), 4, Activation::LeakyRelu { slope: 0.2 }, Activation::Identity),
            fixed_sigma: None,
        };
        let names: Vec<String> = vec!["a".into(), "b".into(), "c".into()];
        let emb = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0], [3.0, 3.0]]).unwrap();
        let regions = fit_class_regions(&zero, &names, &emb, 1.0).unwrap();
        assert_eq!(regions.len(), 3);
        assert!(regions.iter().all(|r| r.mean == [0.0, 0.0]));

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sampler = Sampler::new(&shapes, 0.2, &mut rng);
        let regions = fit_class_regions(&sampler, &names, &emb, 1.0).unwrap();
        for (r, c) in regions.iter().zip(emb.iter_rows()) {
            assert_eq!(r.mean, sampler.infer(c).unwrap().mu);
        }
        assert!(fit_class_regions(&sampler, &names[..2], &emb, 1.0).is_err());
    }

    #[test]
    fn unknown_features_counts_and_export() {
        let shapes = ModelShapes::new(2, 3, 256).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let generator = Generator::new(&shapes, 0.2, &mut rng);
        let regions = random_regions(3, 2, 1.0, 4);
        let unknowns = complementary_sample(&regions, 4, &ComplementaryConfig::default(), 1).unwrap();
        let feats = generate_unknown_features(&unknowns, &generator, 5, 3).unwrap();
        assert_eq!(feats.len(), 20);
        assert!(feats.labels.iter().all(|l| l == UNKNOWN_LABEL));
        assert_eq!(feats, generate_unknown_features(&unknowns, &generator, 5, 3).unwrap());
        assert_eq!(unknown_matrix(&unknowns).unwrap().shape(), (4, 2));
        let jsonl = provenance_jsonl(&unknowns);
        assert_eq!(jsonl.lines().count(), 4);
        assert!(jsonl.lines().next().unwrap().contains("\"attempts\""));
    }
}

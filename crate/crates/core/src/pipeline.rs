//! Evaluation: build the final classifier's training set from real seen
//! and generated unseen (and optionally unknown) features, fit it, attach
//! a rejector, predict the test view and score it.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::{evaluate, EvalReport, Prediction};
use crate::nn::{ClassifierTraining, SoftmaxClassifier};
use crate::openset::{
    compute_calibrations, default_alpha_top, openmax_predict_with_probe, softmax_predict, CalibrationConfig,
    Calibrations, OpenDecision,
};
use crate::protocol::{SplitManifest, TestView, TrainView};
use crate::sampling::{
    auto_sigma_scale, complementary_sample, fit_class_regions, generate_unknown_features, ComplementaryConfig,
    UnknownEmbedding, UNKNOWN_LABEL,
};
use crate::vacwgan::{synthesize_features, LabeledFeatures, TrainedModels};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rejector {
    Softmax,
    Openmax,
}

impl std::str::FromStr for Rejector {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "softmax" => Ok(Rejector::Softmax),
            "openmax" => Ok(Rejector::Openmax),
            other => Err(Error::Invalid(format!("unknown rejector `{other}` (expected softmax or openmax)"))),
        }
    }
}

/// Space in which Openmax measures distances to the MAVs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProbeSpace {
    Logits,
    Features,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub rejector: Rejector,
    pub tail_size: usize,
    pub fallback_tail_size: usize,
    /// Defaults to `min(K, 10)`.
    pub alpha_top: Option<usize>,
    pub probe: ProbeSpace,
    /// Generated features per unseen class.
    pub synth_per_class: usize,
    /// Train the classifier with an extra class of generated unknowns.
    pub unknown_gen: bool,
    /// Defaults to the number of unseen classes.
    pub unknown_classes: Option<usize>,
    pub unknown_per_class: usize,
    /// Region `α`; chosen from the region means when absent.
    pub sigma_scale: Option<f64>,
    pub complementary: ComplementaryConfig,
    pub classifier: ClassifierTraining,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rejector: Rejector::Openmax,
            tail_size: 10,
            fallback_tail_size: 2,
            alpha_top: None,
            probe: ProbeSpace::Logits,
            synth_per_class: 100,
            unknown_gen: false,
            unknown_classes: None,
            unknown_per_class: 100,
            sigma_scale: None,
            complementary: ComplementaryConfig::default(),
            classifier: ClassifierTraining::default(),
            seed: 0,
        }
    }
}

/// The fitted final classifier and everything it was trained on.
#[derive(Clone, Debug)]
pub struct PreparedClassifier {
    pub classifier: SoftmaxClassifier,
    /// Output order: seen, unseen, then [`UNKNOWN_LABEL`] when generated.
    pub classes: Vec<String>,
    pub training: LabeledFeatures,
    pub unknowns: Vec<UnknownEmbedding>,
    pub sigma_scale: Option<f64>,
}

impl PreparedClassifier {
    fn is_pseudo(&self, index: usize) -> bool {
        self.classes[index] == UNKNOWN_LABEL
    }

    fn to_prediction(&self, index: usize) -> Prediction {
        if self.is_pseudo(index) {
            Prediction::Reject
        } else {
            Prediction::Class(self.classes[index].clone())
        }
    }

    fn labels(&self) -> Vec<usize> {
        self.training
            .labels
            .iter()
            .map(|l| self.classes.iter().position(|c| c == l).expect("training label is a class"))
            .collect()
    }

    fn probes(&self, features: &Matrix, logits: &Matrix, space: ProbeSpace) -> Matrix {
        match space {
            ProbeSpace::Logits => logits.clone(),
            ProbeSpace::Features => features.clone(),
        }
    }

    /// Openmax calibrations on the classifier's own training set. The
    /// generated-unknown class, if any, is never attenuated.
    pub fn calibrate(&self, config: &EvalConfig, tail_size: usize) -> Result<Calibrations> {
        let logits = self.classifier.infer_logits(&self.training.features)?;
        let probes = self.probes(&self.training.features, &logits, config.probe);
        let cal_config =
            CalibrationConfig { tail_size, fallback_tail_size: config.fallback_tail_size, skip_flat_tails: true };
        let mut cal = compute_calibrations(&logits, &probes, &self.labels(), &self.classes, cal_config)?;
        for (i, c) in cal.classes.iter_mut().enumerate() {
            if self.is_pseudo(i) {
                c.weibull = None;
            }
        }
        Ok(cal)
    }

    pub fn predict(
        &self,
        features: &Matrix,
        rejector: Rejector,
        calibrations: Option<&Calibrations>,
        config: &EvalConfig,
    ) -> Result<Vec<Prediction>> {
        let logits = self.classifier.infer_logits(features)?;
        match rejector {
            Rejector::Softmax => {
                (0..logits.rows()).map(|i| Ok(self.to_prediction(softmax_predict(logits.row(i))?))).collect()
            }
            Rejector::Openmax => {
                let cal = calibrations.ok_or_else(|| Error::Invalid("openmax needs calibrations".into()))?;
                let probes = self.probes(features, &logits, config.probe);
                let alpha_top = config.alpha_top.unwrap_or_else(|| default_alpha_top(self.classes.len()));
                (0..logits.rows())
                    .map(|i| {
                        let p = openmax_predict_with_probe(logits.row(i), probes.row(i), cal, alpha_top)?;
                        Ok(match p.decision {
                            OpenDecision::Reject => Prediction::Reject,
                            OpenDecision::Class(c) => self.to_prediction(c),
                        })
                    })
                    .collect()
            }
        }
    }

    /// Predicts and scores `test` with one rejector.
    pub fn evaluate(
        &self,
        test: &TestView,
        manifest: &SplitManifest,
        config: &EvalConfig,
        label: &str,
    ) -> Result<EvalReport> {
        let cal = match config.rejector {
            Rejector::Openmax => Some(self.calibrate(config, config.tail_size)?),
            Rejector::Softmax => None,
        };
        let predictions = self.predict(&test.features, config.rejector, cal.as_ref(), config)?;
        evaluate(label, &predictions, &test.truth, manifest)
    }

    /// One Openmax report per tail size.
    pub fn tail_sweep(
        &self,
        test: &TestView,
        manifest: &SplitManifest,
        config: &EvalConfig,
        tails: impl IntoIterator<Item = usize>,
    ) -> Result<Vec<EvalReport>> {
        tails
            .into_iter()
            .map(|tail| {
                let cal = self.calibrate(config, tail)?;
                let predictions = self.predict(&test.features, Rejector::Openmax, Some(&cal), config)?;
                evaluate(&format!("openmax tail={tail}"), &predictions, &test.truth, manifest)
            })
            .collect()
    }
}

/// Tail sizes of the sweep.
pub const SWEEP_TAILS: std::ops::RangeInclusive<usize> = 2..=10;

/// Generates the classifier training set and fits the final classifier.
pub fn prepare_classifier(
    models: &TrainedModels,
    train: &TrainView,
    config: &EvalConfig,
) -> Result<PreparedClassifier> {
    let data = &train.dataset;
    let mut training = LabeledFeatures { features: data.features().clone(), labels: data.labels().to_vec() };
    let synthetic = synthesize_features(models, data, &train.unseen, config.synth_per_class, config.seed)?;
    training.extend(synthetic)?;

    let mut classes: Vec<String> = train.seen.iter().chain(&train.unseen).cloned().collect();
    let mut unknowns = Vec::new();
    let mut sigma_scale = None;
    if config.unknown_gen {
        let embeddings = Matrix::from_rows(
            &classes.iter().map(|n| data.embedding(n).map(<[f64]>::to_vec)).collect::<Result<Vec<_>>>()?,
        )?;
        // α is needed to build regions, so derive it from unit-scale regions' means first
        let probe = fit_class_regions(&models.sampler, &classes, &embeddings, 1.0)?;
        let alpha = match config.sigma_scale {
            Some(a) => a,
            None => auto_sigma_scale(
                &probe.iter().map(|r| r.mean.clone()).collect::<Vec<_>>(),
                config.complementary.radius_multiplier,
            )?,
        };
        let regions = fit_class_regions(&models.sampler, &classes, &embeddings, alpha)?;
        let count = config.unknown_classes.unwrap_or(train.unseen.len().max(1));
        unknowns = complementary_sample(&regions, count, &config.complementary, config.seed ^ 0x5eed)?;
        training.extend(generate_unknown_features(
            &unknowns,
            &models.generator,
            config.unknown_per_class,
            config.seed ^ 0xface,
        )?)?;
        classes.push(UNKNOWN_LABEL.to_string());
        sigma_scale = Some(alpha);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut classifier = SoftmaxClassifier::new(data.feature_dim(), classes.len(), &mut rng);
    let prepared = PreparedClassifier { classifier: classifier.clone(), classes, training, unknowns, sigma_scale };
    classifier.fit(&prepared.training.features, &prepared.labels(), &config.classifier, &mut rng)?;
    Ok(PreparedClassifier { classifier, ..prepared })
}

//! Open-set heads: the plain softmax argmax, which never rejects, and
//! Openmax, which calibrates each class with a Weibull fit on the tail of
//! its activation-to-MAV distances and routes attenuated activation mass
//! into an extra rejection bin.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{euclidean, Matrix};

/// Two-parameter Weibull shifted by `shift`:
/// `F(x) = 1 − exp(−((x − τ)/λ)^k)` for `x > τ`, else 0.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullModel {
    pub shape: f64,
    pub scale: f64,
    pub shift: f64,
    pub tail_size: usize,
}

impl WeibullModel {
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= self.shift {
            return 0.0;
        }
        if x.is_infinite() {
            return 1.0;
        }
        1.0 - (-((x - self.shift) / self.scale).powf(self.shape)).exp()
    }
}

const MLE_TOLERANCE: f64 = 1e-9;
const MLE_MAX_ITERATIONS: usize = 200;

/// Maximum-likelihood `(k, λ)` of an unshifted Weibull for positive samples.
///
/// Solves the profile equation
/// `Σ xᵏ ln x / Σ xᵏ − 1/k − mean(ln x) = 0` by Newton's method, falling
/// back to bisection whenever a step leaves the current sign bracket.
pub fn weibull_mle(samples: &[f64]) -> Result<(f64, f64)> {
    if samples.len() < 2 {
        return Err(Error::Invalid(format!("a Weibull fit needs at least 2 samples, got {}", samples.len())));
    }
    if let Some(bad) = samples.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::domain("weibull_mle", format!("sample {bad} is not a positive finite number")));
    }
    let max = samples.iter().copied().fold(f64::MIN, f64::max);
    let min = samples.iter().copied().fold(f64::MAX, f64::min);
    if max == min {
        return Err(Error::FlatTail(samples.len()));
    }
    // Working on x / max keeps xᵏ in (0, 1]; the profile equation is scale-free.
    let logs: Vec<f64> = samples.iter().map(|x| (x / max).ln()).collect();
    let n = logs.len() as f64;
    let mean_log = logs.iter().sum::<f64>() / n;
    let profile = |k: f64| {
        let (mut s0, mut s1, mut s2) = (0.0, 0.0, 0.0);
        for &l in &logs {
            let w = (k * l).exp();
            s0 += w;
            s1 += w * l;
            s2 += w * l * l;
        }
        let g = s1 / s0 - 1.0 / k - mean_log;
        let dg = (s2 * s0 - s1 * s1) / (s0 * s0) + 1.0 / (k * k);
        (g, dg)
    };

    let mut lo = 1e-6;
    let mut hi = 1.0;
    while profile(hi).0 < 0.0 {
        hi *= 2.0;
        if hi > 1e8 {
            return Err(Error::FlatTail(samples.len()));
        }
    }
    let var_log = logs.iter().map(|l| (l - mean_log).powi(2)).sum::<f64>() / n;
    let mut k = (1.2825 / var_log.sqrt()).clamp(lo, hi);
    for _ in 0..MLE_MAX_ITERATIONS {
        let (g, dg) = profile(k);
        if g < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let mut next = k - g / dg;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = 0.5 * (lo + hi);
        }
        let done = (next - k).abs() < MLE_TOLERANCE * k.max(1.0);
        k = next;
        if done {
            break;
        }
    }
    let mean_pow = logs.iter().map(|l| (k * l).exp()).sum::<f64>() / n;
    let scale = max * mean_pow.powf(1.0 / k);
    if !(k.is_finite() && scale.is_finite() && k > 0.0 && scale > 0.0) {
        return Err(Error::NonFinite("weibull_mle"));
    }
    Ok((k, scale))
}

/// Fits a shifted Weibull to the `tail_size` largest distances.
///
/// The shift sits just below the smallest tail distance (by a thousandth of
/// the tail's range) so that every shifted sample is strictly positive.
pub fn fit_weibull(distances: &[f64], tail_size: usize) -> Result<WeibullModel> {
    if tail_size < 2 {
        return Err(Error::Invalid(format!("tail size must be at least 2, got {tail_size}")));
    }
    if distances.len() < tail_size {
        return Err(Error::Invalid(format!("{} distances for a tail of {tail_size}", distances.len())));
    }
    if let Some(bad) = distances.iter().find(|d| !(d.is_finite() && **d >= 0.0)) {
        return Err(Error::domain("fit_weibull", format!("distance {bad} is not a non-negative finite number")));
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let tail = &sorted[..tail_size];
    let (max, min) = (tail[0], tail[tail_size - 1]);
    let shift = min - 1e-3 * (max - min);
    let shifted: Vec<f64> = tail.iter().map(|d| d - shift).collect();
    // a spread lost to rounding is as flat as no spread at all
    if max == min || shifted.iter().any(|x| *x <= 0.0) {
        return Err(Error::FlatTail(tail_size));
    }
    let (shape, scale) = weibull_mle(&shifted)?;
    Ok(WeibullModel { shape, scale, shift, tail_size })
}

/// Mean activation vector and tail model of one class. A class without a
/// model (too few correct samples) is never attenuated.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassCalibration {
    pub class: String,
    pub mav: Vec<f64>,
    pub weibull: Option<WeibullModel>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub tail_size: usize,
    /// Tail used for classes with fewer than `tail_size` correct samples.
    pub fallback_tail_size: usize,
    /// Leave classes with a flat tail uncalibrated (with a warning)
    /// instead of failing.
    #[serde(default)]
    pub skip_flat_tails: bool,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig { tail_size: 10, fallback_tail_size: 2, skip_flat_tails: false }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Calibrations {
    pub classes: Vec<ClassCalibration>,
    pub warnings: Vec<String>,
}

impl Calibrations {
    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn probe_dim(&self) -> usize {
        self.classes.first().map_or(0, |c| c.mav.len())
    }
}

/// Per-class MAVs and Weibull tails.
///
/// `logits` decide which training rows are correctly classified; MAVs and
/// distances live in the space of `probes`, which is usually `logits` itself.
pub fn compute_calibrations(
    logits: &Matrix,
    probes: &Matrix,
    labels: &[usize],
    classes: &[String],
    config: CalibrationConfig,
) -> Result<Calibrations> {
    if logits.rows() != labels.len() || probes.rows() != labels.len() {
        return Err(Error::dim(
            "compute_calibrations",
            format!("{} logit rows, {} probe rows, {} labels", logits.rows(), probes.rows(), labels.len()),
        ));
    }
    if logits.cols() != classes.len() {
        return Err(Error::dim(
            "compute_calibrations",
            format!("{} logits for {} classes", logits.cols(), classes.len()),
        ));
    }
    if let Some(l) = labels.iter().find(|l| **l >= classes.len()) {
        return Err(Error::Invalid(format!("label {l} outside {} classes", classes.len())));
    }
    let dim = probes.cols();
    let mut correct: Vec<Vec<usize>> = vec![Vec::new(); classes.len()];
    for (i, &label) in labels.iter().enumerate() {
        if argmax_lowest(logits.row(i)) == Some(label) {
            correct[label].push(i);
        }
    }

    let mut out = Calibrations { classes: Vec::with_capacity(classes.len()), warnings: Vec::new() };
    for (c, rows) in correct.iter().enumerate() {
        let mut mav = vec![0.0; dim];
        for &r in rows {
            for (m, v) in mav.iter_mut().zip(probes.row(r)) {
                *m += v;
            }
        }
        if !rows.is_empty() {
            mav.iter_mut().for_each(|m| *m /= rows.len() as f64);
        }
        let tail = if rows.len() >= config.tail_size {
            Some(config.tail_size)
        } else if rows.len() >= config.fallback_tail_size.max(2) {
            let msg = format!(
                "class `{}` has {} correct samples (< tail {}); using fallback tail {}",
                classes[c],
                rows.len(),
                config.tail_size,
                config.fallback_tail_size
            );
            log::warn!("{msg}");
            out.warnings.push(msg);
            Some(config.fallback_tail_size.max(2))
        } else {
            let msg = format!("class `{}` has {} correct samples; calibration skipped", classes[c], rows.len());
            log::warn!("{msg}");
            out.warnings.push(msg);
            None
        };
        let weibull = match tail {
            Some(t) => {
                let distances: Vec<f64> = rows.iter().map(|&r| euclidean(probes.row(r), &mav)).collect();
                match fit_weibull(&distances, t) {
                    Err(Error::FlatTail(_)) if config.skip_flat_tails => {
                        let msg = format!("class `{}` has a flat distance tail; calibration skipped", classes[c]);
                        log::warn!("{msg}");
                        out.warnings.push(msg);
                        None
                    }
                    other => Some(other?),
                }
            }
            None => None,
        };
        out.classes.push(ClassCalibration { class: classes[c].clone(), mav, weibull });
    }
    Ok(out)
}

/// Index of the largest entry, lowest index on ties.
fn argmax_lowest(v: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, x) in v.iter().enumerate() {
        if best.is_none_or(|b| *x > v[b]) {
            best = Some(i);
        }
    }
    best
}

/// Plain argmax over the class activations, lowest class id on ties.
pub fn softmax_predict(activation: &[f64]) -> Result<usize> {
    argmax_lowest(activation).ok_or_else(|| Error::Invalid("empty activation vector".into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OpenDecision {
    Class(usize),
    Reject,
}

/// Probabilities over the `K` classes plus the rejection bin.
#[derive(Clone, Debug, PartialEq)]
pub struct OpenPrediction {
    pub class_probs: Vec<f64>,
    pub reject_prob: f64,
    pub decision: OpenDecision,
}

impl OpenPrediction {
    /// The `K + 1` probabilities, rejection bin last.
    pub fn probabilities(&self) -> Vec<f64> {
        let mut p = self.class_probs.clone();
        p.push(self.reject_prob);
        p
    }
}

/// Openmax with the activation vector as its own probe.
pub fn openmax_predict(activation: &[f64], calibrations: &Calibrations, alpha_top: usize) -> Result<OpenPrediction> {
    openmax_predict_with_probe(activation, activation, calibrations, alpha_top)
}

/// Openmax recalibration.
///
/// The `alpha_top` highest activations are scaled by
/// `1 − w_r · F_c(‖probe − MAV_c‖)` with rank weight
/// `w_r = (α − r + 1)/α`, and the removed mass becomes the rejection
/// activation. The decision is the argmax over the `K + 1` softmax
/// probabilities, ties going to the rejection bin and then the lowest id.
pub fn openmax_predict_with_probe(
    activation: &[f64],
    probe: &[f64],
    calibrations: &Calibrations,
    alpha_top: usize,
) -> Result<OpenPrediction> {
    let k = calibrations.len();
    if activation.len() != k {
        return Err(Error::dim(
            "openmax_predict",
            format!("{} activations for {k} calibrated classes", activation.len()),
        ));
    }
    if probe.len() != calibrations.probe_dim() {
        return Err(Error::dim(
            "openmax_predict",
            format!("probe has {} entries, MAVs have {}", probe.len(), calibrations.probe_dim()),
        ));
    }
    if alpha_top == 0 || alpha_top > k {
        return Err(Error::Invalid(format!("alpha_top must be in 1..={k}, got {alpha_top}")));
    }
    let mut ranked: Vec<usize> = (0..k).collect();
    ranked.sort_by(|&a, &b| activation[b].total_cmp(&activation[a]).then(a.cmp(&b)));

    let mut revised = activation.to_vec();
    let mut reject = 0.0;
    for (r, &c) in ranked.iter().take(alpha_top).enumerate() {
        let Some(model) = calibrations.classes[c].weibull else { continue };
        let weight = (alpha_top - r) as f64 / alpha_top as f64;
        let cdf = model.cdf(euclidean(probe, &calibrations.classes[c].mav));
        let keep = 1.0 - weight * cdf;
        revised[c] = activation[c] * keep;
        reject += activation[c] * (1.0 - keep);
    }

    let max = revised.iter().copied().fold(reject, f64::max);
    let exps: Vec<f64> = revised.iter().map(|v| (v - max).exp()).collect();
    let reject_exp = (reject - max).exp();
    let total = exps.iter().sum::<f64>() + reject_exp;
    let class_probs: Vec<f64> = exps.iter().map(|e| e / total).collect();
    let reject_prob = reject_exp / total;

    let best = argmax_lowest(&class_probs).expect("at least one class");
    let decision = if reject_prob >= class_probs[best] { OpenDecision::Reject } else { OpenDecision::Class(best) };
    Ok(OpenPrediction { class_probs, reject_prob, decision })
}

/// Default number of top classes revised by Openmax.
pub fn default_alpha_top(classes: usize) -> usize {
    classes.min(10)
}

pub const CALIBRATION_MAGIC: &[u8; 8] = b"OZSLCAL1";
pub const CALIBRATION_VERSION: u32 = 1;

fn put_u32<W: Write>(w: &mut W, v: u32) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated calibration file".into()))?;
    Ok(u32::from_le_bytes(b))
}

fn get_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| Error::Format("truncated calibration file".into()))?;
    Ok(f64::from_le_bytes(b))
}

impl Calibrations {
    /// `OZSLCAL1`, `u32` version, `u32` record count, then per record: name
    /// length and UTF-8 bytes, a `u32` has-model flag, `k`, `λ`, `τ` as
    /// `f64`, `η` as `u32`, and the MAV as a `1 × d` `OZSLMAT1` matrix.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CALIBRATION_MAGIC)?;
        put_u32(&mut w, CALIBRATION_VERSION)?;
        put_u32(&mut w, self.classes.len() as u32)?;
        for c in &self.classes {
            put_u32(&mut w, c.class.len() as u32)?;
            w.write_all(c.class.as_bytes())?;
            let m = c.weibull.unwrap_or(WeibullModel { shape: 0.0, scale: 0.0, shift: 0.0, tail_size: 0 });
            put_u32(&mut w, u32::from(c.weibull.is_some()))?;
            for v in [m.shape, m.scale, m.shift] {
                w.write_all(&v.to_le_bytes())?;
            }
            put_u32(&mut w, m.tail_size as u32)?;
            Matrix::row_vector(c.mav.clone())?.write_to(&mut w)?;
        }
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic).map_err(|_| Error::Format("truncated calibration file".into()))?;
        if &magic != CALIBRATION_MAGIC {
            return Err(Error::Format("not an OZSLCAL1 calibration file".into()));
        }
        let version = get_u32(&mut r)?;
        if version != CALIBRATION_VERSION {
            return Err(Error::Format(format!("unsupported calibration version {version}")));
        }
        let count = get_u32(&mut r)?;
        let mut classes = Vec::new();
        for _ in 0..count {
            let len = get_u32(&mut r)? as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name).map_err(|_| Error::Format("truncated calibration file".into()))?;
            let class = String::from_utf8(name).map_err(|_| Error::Format("class name is not UTF-8".into()))?;
            let has = get_u32(&mut r)? == 1;
            let (shape, scale, shift) = (get_f64(&mut r)?, get_f64(&mut r)?, get_f64(&mut r)?);
            let tail_size = get_u32(&mut r)? as usize;
            let mav = Matrix::read_from(&mut r)?.into_data();
            let weibull = has.then_some(WeibullModel { shape, scale, shift, tail_size });
            classes.push(ClassCalibration { class, mav, weibull });
        }
        Ok(Calibrations { classes, warnings: Vec::new() })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

//! Datasets, open zero-shot split manifests and the synthetic benchmark.
//!
//! A dataset directory holds four files:
//!
//! | file             | content                                         |
//! |------------------|-------------------------------------------------|
//! | `features.bin`   | `OZSLMAT1`, one visual feature row per instance |
//! | `labels.txt`     | class name of each instance, one per line       |
//! | `embeddings.bin` | `OZSLMAT1`, one class-embedding row per class   |
//! | `names.txt`      | class registry, aligned with `embeddings.bin`   |
//!
//! Class identity is always the registry name, never a row index.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::metrics::Truth;

pub const FEATURES_FILE: &str = "features.bin";
pub const LABELS_FILE: &str = "labels.txt";
pub const EMBEDDINGS_FILE: &str = "embeddings.bin";
pub const NAMES_FILE: &str = "names.txt";
pub const BASE_SPLIT_FILE: &str = "base_split.txt";

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Matrix,
    labels: Vec<String>,
    embeddings: Matrix,
    class_names: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Dataset {
    pub fn new(features: Matrix, labels: Vec<String>, embeddings: Matrix, class_names: Vec<String>) -> Result<Self> {
        if class_names.is_empty() {
            return Err(Error::Invalid("dataset has no classes".into()));
        }
        if embeddings.rows() != class_names.len() {
            return Err(Error::dim(
                "load_dataset",
                format!("{} embedding rows for {} classes", embeddings.rows(), class_names.len()),
            ));
        }
        if features.rows() != labels.len() {
            return Err(Error::dim(
                "load_dataset",
                format!("{} feature rows for {} labels", features.rows(), labels.len()),
            ));
        }
        let mut index = BTreeMap::new();
        for (i, name) in class_names.iter().enumerate() {
            if name.is_empty() || name.chars().any(char::is_whitespace) {
                return Err(Error::Invalid(format!("class name `{name}` is empty or contains whitespace")));
            }
            if name == crate::sampling::UNKNOWN_LABEL {
                return Err(Error::Invalid(format!("`{name}` is reserved for generated unknowns")));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Invalid(format!("duplicate class name `{name}`")));
            }
        }
        if let Some(missing) = labels.iter().find(|l| !index.contains_key(*l)) {
            return Err(Error::UnknownClass(missing.clone()));
        }
        Ok(Dataset { features, labels, embeddings, class_names, index })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn class_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn has_class(&self, name: &str) -> bool {
        self.index.contains_key(name)
    }

    pub fn embedding(&self, name: &str) -> Result<&[f64]> {
        let i = self.class_index(name).ok_or_else(|| Error::UnknownClass(name.to_string()))?;
        Ok(self.embeddings.row(i))
    }

    /// Row indices of the instances of each class, in instance order.
    pub fn instances_by_class(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, l) in self.labels.iter().enumerate() {
            out.entry(l.as_str()).or_default().push(i);
        }
        out
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir)?;
        self.features.save(dir.join(FEATURES_FILE))?;
        self.embeddings.save(dir.join(EMBEDDINGS_FILE))?;
        fs::write(dir.join(LABELS_FILE), lines(&self.labels))?;
        fs::write(dir.join(NAMES_FILE), lines(&self.class_names))?;
        Ok(())
    }

    /// Loads the four standard files from `dir`.
    pub fn load_dir(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        load_dataset(dir.join(FEATURES_FILE), dir.join(LABELS_FILE), dir.join(EMBEDDINGS_FILE), dir.join(NAMES_FILE))
    }
}

fn lines(items: &[String]) -> String {
    let mut s = String::new();
    for item in items {
        s.push_str(item);
        s.push('\n');
    }
    s
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path)?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

pub fn load_dataset(
    features: impl AsRef<Path>,
    labels: impl AsRef<Path>,
    embeddings: impl AsRef<Path>,
    names: impl AsRef<Path>,
) -> Result<Dataset> {
    let features = Matrix::load(features)?;
    let labels = read_lines(labels.as_ref())?;
    let embeddings = Matrix::load(embeddings)?;
    let names = read_lines(names.as_ref())?;
    // An empty feature file still has to agree on width when instances exist.
    Dataset::new(features, labels, embeddings, names)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "20-80")]
    TwentyEighty,
    #[serde(rename = "50-50")]
    FiftyFifty,
    #[serde(rename = "80-20")]
    EightyTwenty,
}

impl Regime {
    pub const ALL: [Regime; 3] = [Regime::TwentyEighty, Regime::FiftyFifty, Regime::EightyTwenty];

    /// Percentage of the base unseen classes that stay unseen.
    pub fn unseen_percent(self) -> usize {
        match self {
            Regime::TwentyEighty => 20,
            Regime::FiftyFifty => 50,
            Regime::EightyTwenty => 80,
        }
    }

    /// `⌈percent · n / 100⌉`, in integer arithmetic.
    pub fn unseen_count(self, base_unseen: usize) -> usize {
        (self.unseen_percent() * base_unseen).div_ceil(100)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Regime::TwentyEighty => "20-80",
            Regime::FiftyFifty => "50-50",
            Regime::EightyTwenty => "80-20",
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Regime {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Regime::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| Error::Invalid(format!("unknown regime `{s}` (expected 20-80, 50-50 or 80-20)")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ClassRole {
    Seen,
    Unseen,
    Unknown,
}

impl ClassRole {
    pub fn as_str(self) -> &'static str {
        match self {
            ClassRole::Seen => "seen",
            ClassRole::Unseen => "unseen",
            ClassRole::Unknown => "unknown",
        }
    }
}

impl FromStr for ClassRole {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "seen" => Ok(ClassRole::Seen),
            "unseen" => Ok(ClassRole::Unseen),
            "unknown" => Ok(ClassRole::Unknown),
            other => Err(Error::Format(format!("unknown class role `{other}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Provenance {
    /// Shipped or user-supplied fixed split.
    Canonical,
    /// Drawn by [`make_split`]; the unseen share is rounded up.
    SeededRandom { seed: u64 },
}

/// The seen/unseen partition of the closed-world protocol a split starts from.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BaseSplit {
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
}

impl BaseSplit {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for name in &self.seen {
            s.push_str(&format!("{name} seen\n"));
        }
        for name in &self.unseen {
            s.push_str(&format!("{name} unseen\n"));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut base = BaseSplit { seen: vec![], unseen: vec![] };
        for line in content_lines(text) {
            let (name, role) = parse_class_line(line)?;
            match role {
                ClassRole::Seen => base.seen.push(name),
                ClassRole::Unseen => base.unseen.push(name),
                ClassRole::Unknown => return Err(Error::Format("a base split has no unknown classes".into())),
            }
        }
        Ok(base)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'))
}

fn parse_class_line(line: &str) -> Result<(String, ClassRole)> {
    let mut parts = line.split_whitespace();
    match (parts.next(), parts.next(), parts.next()) {
        (Some(name), Some(role), None) => Ok((name.to_string(), role.parse()?)),
        _ => Err(Error::Format(format!("expected `<name> <seen|unseen|unknown>`, got `{line}`"))),
    }
}

/// Partition of the classes into seen, unseen and unknown for one regime.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SplitManifest {
    pub regime: Regime,
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
    pub unknown: Vec<String>,
    pub provenance: Provenance,
}

impl SplitManifest {
    /// Checks that the three class sets are disjoint and free of duplicates.
    pub fn validate(&self) -> Result<()> {
        let mut all = BTreeSet::new();
        for name in self.seen.iter().chain(&self.unseen).chain(&self.unknown) {
            if !all.insert(name.as_str()) {
                return Err(Error::Invalid(format!("class `{name}` appears twice in the manifest")));
            }
        }
        if self.seen.is_empty() {
            return Err(Error::Invalid("manifest has no seen classes".into()));
        }
        Ok(())
    }

    pub fn role(&self, name: &str) -> Option<ClassRole> {
        if self.seen.iter().any(|n| n == name) {
            Some(ClassRole::Seen)
        } else if self.unseen.iter().any(|n| n == name) {
            Some(ClassRole::Unseen)
        } else if self.unknown.iter().any(|n| n == name) {
            Some(ClassRole::Unknown)
        } else {
            None
        }
    }

    /// Seen followed by unseen classes.
    pub fn known_classes(&self) -> Vec<String> {
        self.seen.iter().chain(&self.unseen).cloned().collect()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        match self.provenance {
            Provenance::Canonical => s.push_str("# provenance canonical\n"),
            Provenance::SeededRandom { seed } => {
                s.push_str(&format!("# provenance seeded-random seed={seed} rounding=ceil\n"))
            }
        }
        s.push_str(&format!("regime {}\n", self.regime));
        for (names, role) in [(&self.seen, "seen"), (&self.unseen, "unseen"), (&self.unknown, "unknown")] {
            for name in names {
                s.push_str(&format!("{name} {role}\n"));
            }
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut provenance = Provenance::Canonical;
        for line in text.lines().map(str::trim) {
            if let Some(rest) = line.strip_prefix("# provenance seeded-random") {
                let seed = rest
                    .split_whitespace()
                    .find_map(|kv| kv.strip_prefix("seed="))
                    .ok_or_else(|| Error::Format("seeded-random provenance without seed".into()))?;
                let seed = seed.parse().map_err(|_| Error::Format(format!("bad seed `{seed}`")))?;
                provenance = Provenance::SeededRandom { seed };
            }
        }
        let mut lines = content_lines(text);
        let first = lines.next().ok_or_else(|| Error::Format("empty manifest".into()))?;
        let regime = match first.split_whitespace().collect::<Vec<_>>()[..] {
            ["regime", r] => r.parse()?,
            _ => return Err(Error::Format(format!("expected `regime <20-80|50-50|80-20>`, got `{first}`"))),
        };
        let mut manifest = SplitManifest { regime, seen: vec![], unseen: vec![], unknown: vec![], provenance };
        for line in lines {
            let (name, role) = parse_class_line(line)?;
            match role {
                ClassRole::Seen => manifest.seen.push(name),
                ClassRole::Unseen => manifest.unseen.push(name),
                ClassRole::Unknown => manifest.unknown.push(name),
            }
        }
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Draws an open split: a seeded shuffle of the base unseen classes, of
/// which `⌈fraction · |U|⌉` stay unseen and the rest become unknown.
pub fn make_split(base: &BaseSplit, regime: Regime, seed: u64) -> Result<SplitManifest> {
    if base.unseen.len() < 2 {
        return Err(Error::Invalid(format!("need at least 2 base unseen classes, got {}", base.unseen.len())));
    }
    let mut pool = base.unseen.clone();
    pool.sort();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    pool.shuffle(&mut rng);
    let keep = regime.unseen_count(pool.len());
    let unknown = pool.split_off(keep);
    let manifest = SplitManifest {
        regime,
        seen: base.seen.clone(),
        unseen: pool,
        unknown,
        provenance: Provenance::SeededRandom { seed },
    };
    manifest.validate()?;
    Ok(manifest)
}

/// The shipped AWA manifest for `regime`.
pub fn canonical_awa(regime: Regime) -> SplitManifest {
    let text = match regime {
        Regime::TwentyEighty => include_str!("../data/manifests/awa_20-80.txt"),
        Regime::FiftyFifty => include_str!("../data/manifests/awa_50-50.txt"),
        Regime::EightyTwenty => include_str!("../data/manifests/awa_80-20.txt"),
    };
    SplitManifest::parse(text).expect("shipped manifest is valid")
}

/// Training-time view: seen instances plus seen and unseen embeddings.
#[derive(Clone, Debug)]
pub struct TrainView {
    pub dataset: Dataset,
    pub seen: Vec<String>,
    pub unseen: Vec<String>,
}

/// Test-time view: held-out seen, all unseen and all unknown instances.
#[derive(Clone, Debug)]
pub struct TestView {
    pub features: Matrix,
    pub truth: Vec<Truth>,
}

impl TestView {
    pub fn len(&self) -> usize {
        self.truth.len()
    }

    pub fn is_empty(&self) -> bool {
        self.truth.is_empty()
    }
}

/// How many seen instances per class are held out for testing.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Holdout {
    pub fraction: f64,
    pub seed: u64,
}

impl Default for Holdout {
    fn default() -> Self {
        Holdout { fraction: 0.2, seed: 0 }
    }
}

/// Splits `dataset` into the training and test views of `manifest`.
///
/// Unknown classes contribute neither instances nor embeddings to the
/// training view; their test instances carry [`Truth::Unknown`].
pub fn apply_manifest(dataset: &Dataset, manifest: &SplitManifest, holdout: Holdout) -> Result<(TrainView, TestView)> {
    manifest.validate()?;
    if !(0.0..1.0).contains(&holdout.fraction) {
        return Err(Error::Invalid(format!("holdout fraction {} outside [0, 1)", holdout.fraction)));
    }
    for name in manifest.seen.iter().chain(&manifest.unseen).chain(&manifest.unknown) {
        if !dataset.has_class(name) {
            return Err(Error::Invalid(format!("manifest class `{name}` is not in the dataset")));
        }
    }
    if let Some(extra) = dataset.class_names().iter().find(|n| manifest.role(n).is_none()) {
        return Err(Error::Invalid(format!("dataset class `{extra}` is not in the manifest")));
    }

    let by_class = dataset.instances_by_class();
    let mut rng = ChaCha8Rng::seed_from_u64(holdout.seed);
    let mut train_rows = Vec::new();
    let mut test_rows = Vec::new();
    for name in &manifest.seen {
        let mut rows = by_class.get(name.as_str()).cloned().unwrap_or_default();
        rows.shuffle(&mut rng);
        let held = (holdout.fraction * rows.len() as f64).ceil() as usize;
        let (test, train) = rows.split_at(held.min(rows.len()));
        let mut train = train.to_vec();
        train.sort_unstable();
        let mut test = test.to_vec();
        test.sort_unstable();
        train_rows.extend(train);
        test_rows.extend(test.into_iter().map(|r| (r, Truth::Class(name.clone()))));
    }
    for name in &manifest.unseen {
        for &r in by_class.get(name.as_str()).map(Vec::as_slice).unwrap_or_default() {
            test_rows.push((r, Truth::Class(name.clone())));
        }
    }
    for name in &manifest.unknown {
        for &r in by_class.get(name.as_str()).map(Vec::as_slice).unwrap_or_default() {
            test_rows.push((r, Truth::Unknown));
        }
    }

    let known = manifest.known_classes();
    let embeddings = Matrix::from_rows(
        &known.iter().map(|n| dataset.embedding(n).map(<[f64]>::to_vec)).collect::<Result<Vec<_>>>()?,
    )?;
    let train_features = dataset.features().select_rows(&train_rows)?;
    let train_labels = train_rows.iter().map(|r| dataset.labels()[*r].clone()).collect();
    let train = TrainView {
        dataset: Dataset::new(train_features, train_labels, embeddings, known)?,
        seen: manifest.seen.clone(),
        unseen: manifest.unseen.clone(),
    };
    let (rows, truth): (Vec<usize>, Vec<Truth>) = test_rows.into_iter().unzip();
    let test = TestView { features: dataset.features().select_rows(&rows)?, truth };
    Ok((train, test))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub per_class: usize,
    pub embedding_dim: usize,
    pub feature_dim: usize,
    /// Per-coordinate standard deviation of each class blob.
    pub spread: f64,
    /// Scale of the semantic→visual map, in units of `spread` per lattice
    /// step.
    pub map_gain: f64,
    /// Fraction of classes that are unseen in the base protocol.
    pub base_unseen_fraction: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            classes: 12,
            per_class: 200,
            embedding_dim: 6,
            feature_dim: 16,
            spread: 0.5,
            map_gain: 4.0,
            base_unseen_fraction: 0.5,
            seed: 7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes == 0 || self.per_class == 0 || self.embedding_dim == 0 || self.feature_dim == 0 {
            return Err(Error::Invalid("synthetic counts and dimensions must be at least 1".into()));
        }
        if !(self.spread > 0.0 && self.spread.is_finite()) {
            return Err(Error::Invalid(format!("spread must be positive, got {}", self.spread)));
        }
        if self.feature_dim < self.embedding_dim {
            return Err(Error::Invalid("feature dim must be at least the embedding dim".into()));
        }
        if !(self.map_gain > 0.0 && self.map_gain.is_finite()) {
            return Err(Error::Invalid(format!("map gain must be positive, got {}", self.map_gain)));
        }
        if !(0.0..=1.0).contains(&self.base_unseen_fraction) {
            return Err(Error::Invalid("base unseen fraction must be in [0, 1]".into()));
        }
        Ok(())
    }
}

/// A generated benchmark with its ground truth.
#[derive(Clone, Debug)]
pub struct SyntheticData {
    pub dataset: Dataset,
    pub base: BaseSplit,
    /// True class-conditional feature means, rows aligned with the registry.
    pub class_means: Matrix,
}

/// Lattice jitter, in lattice units.
const LATTICE_JITTER: f64 = 0.15;

/// Generates class embeddings on a jittered integer lattice and features
/// from isotropic Gaussians centred on an affine image of the embeddings.
/// Random `rows × cols` matrix with orthonormal rows (Gram-Schmidt on
/// Gaussian draws); needs `rows ≤ cols`.
fn orthonormal_rows<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> Result<Matrix> {
    if rows > cols {
        return Err(Error::Invalid(format!("feature dim {cols} must be at least the embedding dim {rows}")));
    }
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while basis.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| rng.sample(StandardNormal)).collect();
        for b in &basis {
            let dot: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= dot * y);
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-6 {
            basis.push(v.into_iter().map(|x| x / norm).collect());
        }
    }
    Matrix::from_rows(&basis)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let e = spec.embedding_dim;

    // smallest lattice side with enough points
    let mut side = 2usize;
    while (side as f64).powi(e as i32) < spec.classes as f64 {
        side += 1;
    }
    let mut points: BTreeSet<Vec<usize>> = BTreeSet::new();
    while points.len() < spec.classes {
        points.insert((0..e).map(|_| rng.random_range(0..side)).collect());
    }
    let mut points: Vec<Vec<usize>> = points.into_iter().collect();
    points.shuffle(&mut rng);
    let embeddings = Matrix::from_fn(spec.classes, e, |r, c| {
        points[r][c] as f64 / (side - 1) as f64 + rng.random_range(-LATTICE_JITTER..LATTICE_JITTER) / (side - 1) as f64
    });

    let gain = spec.map_gain * spec.spread * (side - 1) as f64;
    let map = orthonormal_rows(e, spec.feature_dim, &mut rng)?.map(|v| gain * v);
    let raw = embeddings.matmul(&map)?;
    let floor = raw.data().iter().copied().fold(f64::INFINITY, f64::min);
    let offset = 4.0 * spec.spread - floor;
    let class_means = raw.map(|v| v + offset);

    let names: Vec<String> = (0..spec.classes).map(|c| format!("class{c:02}")).collect();
    let n = spec.classes * spec.per_class;
    let mut features = Matrix::zeros(n, spec.feature_dim);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for k in 0..spec.per_class {
            let row = features.row_mut(c * spec.per_class + k);
            for (j, v) in row.iter_mut().enumerate() {
                *v = class_means.get(c, j) + spec.spread * rng.sample::<f64, _>(StandardNormal);
            }
            labels.push(names[c].clone());
        }
    }

    let mut order = names.clone();
    order.shuffle(&mut rng);
    let unseen_count = ((spec.base_unseen_fraction * spec.classes as f64).round() as usize).min(spec.classes - 1);
    let mut unseen = order.split_off(spec.classes - unseen_count);
    order.sort();
    unseen.sort();
    let base = BaseSplit { seen: order, unseen };

    Ok(SyntheticData { dataset: Dataset::new(features, labels, embeddings, names)?, base, class_means })
}

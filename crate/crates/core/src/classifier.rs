//! One-vs-rest linear max-margin classifier.
//!
//! Features are z-scored with training statistics, then one regularised
//! hinge-loss hyperplane per class is fitted by full-batch subgradient
//! descent with step `lr / (1 + t)`. There is no sampling anywhere, so a
//! dataset always produces the same model.
//!
//! # Text model format
//!
//! ```text
//! rffid-linear-model 1
//! classes <M>
//! input_dim <D>
//! lambda <λ>
//! epochs <E>
//! kept <i_1> <i_2> ...          # input dimensions used, ascending
//! mean <μ_1> <μ_2> ...          # one per kept dimension
//! std <σ_1> <σ_2> ...
//! class <c> <bias> <w_1> <w_2> ...   # one line per class
//! ```
//!
//! Floats are written with 17 significant digits.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{invalid, Error, Result};

/// Dimensions whose training standard deviation is at or below this value
/// are dropped.
pub const MIN_STD: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledDataset {
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
}

impl LabeledDataset {
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>) -> Result<Self> {
        let d = Self { features, labels };
        d.validate()?;
        Ok(d)
    }

    pub fn push(&mut self, feature: Vec<f64>, label: usize) {
        self.features.push(feature);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn class_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |m| m + 1)
    }

    fn validate(&self) -> Result<()> {
        if self.features.len() != self.labels.len() {
            return Err(invalid!(
                "{} feature vectors but {} labels",
                self.features.len(),
                self.labels.len()
            ));
        }
        let d = self.dim();
        if self.features.iter().any(|f| f.len() != d) {
            return Err(invalid!("feature vectors differ in dimension"));
        }
        if self.features.iter().flatten().any(|v| !v.is_finite()) {
            return Err(invalid!("non-finite feature value"));
        }
        Ok(())
    }
}

/// Per-dimension z-scoring fitted on training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardizer {
    /// Input dimensions kept, ascending.
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(features: &[Vec<f64>]) -> Self {
        let n = features.len() as f64;
        let d = features.first().map_or(0, Vec::len);
        let mut kept = Vec::new();
        let mut mean = Vec::new();
        let mut std = Vec::new();
        for j in 0..d {
            let m = features.iter().map(|f| f[j]).sum::<f64>() / n;
            let v = features.iter().map(|f| (f[j] - m).powi(2)).sum::<f64>() / n;
            let s = v.sqrt();
            if s > MIN_STD * (1.0 + m.abs()) {
                kept.push(j);
                mean.push(m);
                std.push(s);
            }
        }
        Self { kept, mean, std }
    }

    pub fn transform(&self, feature: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .zip(self.mean.iter().zip(&self.std))
            .map(|(&j, (m, s))| (feature[j] - m) / s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainConfig {
    pub lambda: f64,
    pub epochs: usize,
    pub lr: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 1e-3,
            epochs: 200,
            lr: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub input_dim: usize,
    pub standardizer: Standardizer,
    /// One weight vector per class over the kept dimensions.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<f64>,
    pub lambda: f64,
    pub epochs: usize,
}

impl TrainedModel {
    pub fn classes(&self) -> usize {
        self.weights.len()
    }
}

/// Fits the one-vs-rest model.
pub fn train(data: &LabeledDataset, cfg: TrainConfig) -> Result<TrainedModel> {
    data.validate()?;
    let classes = data.class_count();
    if classes < 2 {
        return Err(invalid!("training needs at least two classes, got {classes}"));
    }
    let mut counts = vec![0usize; classes];
    data.labels.iter().for_each(|&l| counts[l] += 1);
    if let Some(c) = counts.iter().position(|&n| n < 2) {
        return Err(invalid!("class {c} has {} training samples; at least 2 required", counts[c]));
    }
    if !(cfg.lambda >= 0.0 && cfg.lr > 0.0) {
        return Err(invalid!("training needs lambda >= 0 and lr > 0"));
    }

    let standardizer = Standardizer::fit(&data.features);
    let xs: Vec<Vec<f64>> = data.features.iter().map(|f| standardizer.transform(f)).collect();
    let d = standardizer.kept.len();
    let n = xs.len() as f64;

    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    for class in 0..classes {
        let mut w = vec![0.0; d];
        let mut b = 0.0;
        let mut gw = vec![0.0; d];
        for t in 0..cfg.epochs {
            gw.iter_mut().zip(&w).for_each(|(g, wj)| *g = cfg.lambda * wj);
            let mut gb = 0.0;
            for (x, &label) in xs.iter().zip(&data.labels) {
                let y = if label == class { 1.0 } else { -1.0 };
                let margin = y * (dot(&w, x) + b);
                if margin < 1.0 {
                    gw.iter_mut().zip(x).for_each(|(g, xj)| *g -= y * xj / n);
                    gb -= y / n;
                }
            }
            let step = cfg.lr / (1.0 + t as f64);
            w.iter_mut().zip(&gw).for_each(|(wj, g)| *wj -= step * g);
            b -= step * gb;
        }
        weights.push(w);
        biases.push(b);
    }

    Ok(TrainedModel {
        input_dim: data.dim(),
        standardizer,
        weights,
        biases,
        lambda: cfg.lambda,
        epochs: cfg.epochs,
    })
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Index of the largest value; ties resolve to the lowest index.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(model: &TrainedModel, feature: &[f64]) -> Result<Prediction> {
    if feature.len() != model.input_dim {
        return Err(invalid!(
            "feature has {} dimensions, model expects {}",
            feature.len(),
            model.input_dim
        ));
    }
    let x = model.standardizer.transform(feature);
    let scores: Vec<f64> = model
        .weights
        .iter()
        .zip(&model.biases)
        .map(|(w, b)| dot(w, &x) + b)
        .collect();
    Ok(Prediction {
        label: argmax(&scores),
        scores,
    })
}

/// Fraction of correctly predicted samples.
pub fn evaluate(model: &TrainedModel, data: &LabeledDataset) -> Result<f64> {
    data.validate()?;
    if data.is_empty() {
        return Err(invalid!("cannot evaluate on an empty dataset"));
    }
    let mut correct = 0;
    for (f, &l) in data.features.iter().zip(&data.labels) {
        if predict(model, f)?.label == l {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

// ---------------------------------------------------------------------------
// Persistence
// ---------------------------------------------------------------------------

const MAGIC: &str = "rffid-linear-model 1";

fn floats(s: &mut String, key: &str, values: &[f64]) {
    s.push_str(key);
    for v in values {
        let _ = write!(s, " {v:.16e}");
    }
    s.push('\n');
}

pub fn model_to_text(m: &TrainedModel) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "{MAGIC}");
    let _ = writeln!(s, "classes {}", m.classes());
    let _ = writeln!(s, "input_dim {}", m.input_dim);
    let _ = writeln!(s, "lambda {:.16e}", m.lambda);
    let _ = writeln!(s, "epochs {}", m.epochs);
    s.push_str("kept");
    for k in &m.standardizer.kept {
        let _ = write!(s, " {k}");
    }
    s.push('\n');
    floats(&mut s, "mean", &m.standardizer.mean);
    floats(&mut s, "std", &m.standardizer.std);
    for (c, (w, b)) in m.weights.iter().zip(&m.biases).enumerate() {
        let mut line = format!("class {c} {b:.16e}");
        for v in w {
            let _ = write!(line, " {v:.16e}");
        }
        let _ = writeln!(s, "{line}");
    }
    s
}

pub fn model_from_text(text: &str) -> Result<TrainedModel> {
    let perr = |msg: String| Error::Parse(format!("model: {msg}"));
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    if lines.next().map(str::trim) != Some(MAGIC) {
        return Err(perr(format!("missing header {MAGIC:?}")));
    }
    let mut next = |key: &str| -> Result<Vec<String>> {
        let line = lines.next().ok_or_else(|| perr(format!("missing {key:?} line")))?;
        let mut parts = line.split_whitespace();
        if parts.next() != Some(key) {
            return Err(perr(format!("expected {key:?} line, got {line:?}")));
        }
        Ok(parts.map(String::from).collect())
    };
    fn one<T: std::str::FromStr>(v: &[String], key: &str) -> Result<T> {
        match v {
            [x] => x.parse().map_err(|_| Error::Parse(format!("model: bad value for {key}"))),
            _ => Err(Error::Parse(format!("model: {key} takes one value"))),
        }
    }
    fn many<T: std::str::FromStr>(v: &[String], key: &str) -> Result<Vec<T>> {
        v.iter()
            .map(|x| x.parse().map_err(|_| Error::Parse(format!("model: bad value in {key}"))))
            .collect()
    }
    let classes: usize = one(&next("classes")?, "classes")?;
    let input_dim: usize = one(&next("input_dim")?, "input_dim")?;
    let lambda: f64 = one(&next("lambda")?, "lambda")?;
    let epochs: usize = one(&next("epochs")?, "epochs")?;
    let kept: Vec<usize> = many(&next("kept")?, "kept")?;
    let mean: Vec<f64> = many(&next("mean")?, "mean")?;
    let std: Vec<f64> = many(&next("std")?, "std")?;
    if mean.len() != kept.len() || std.len() != kept.len() || kept.iter().any(|&k| k >= input_dim) {
        return Err(perr("standardization does not match kept dimensions".into()));
    }
    let mut weights = Vec::with_capacity(classes);
    let mut biases = Vec::with_capacity(classes);
    for c in 0..classes {
        let v: Vec<f64> = many(&next("class")?, "class")?;
        if v.len() != kept.len() + 2 || v[0] != c as f64 {
            return Err(perr(format!("class line {c} is malformed")));
        }
        biases.push(v[1]);
        weights.push(v[2..].to_vec());
    }
    Ok(TrainedModel {
        input_dim,
        standardizer: Standardizer { kept, mean, std },
        weights,
        biases,
        lambda,
        epochs,
    })
}

pub fn save_model(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TrainedModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_text(&text)
}

//! Eyes-open / eyes-closed classifiers and the augmentation benchmark.

mod bench;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use bench::{augmentation_bench, BenchConfig, BenchData, BenchReport, BenchRow, TrialResult};

use crate::error::{Error, Result};
use crate::metrics::Features;
use crate::params::ModelParams;
use crate::signals::Signals;
use crate::tensor::{grad, AdamConfig, AdamState, Tape, Tensor};

pub const CLASSES: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ClassifierKind {
    Cnn,
    Fnn,
}

impl ClassifierKind {
    pub fn name(self) -> &'static str {
        match self {
            ClassifierKind::Cnn => "CNN",
            ClassifierKind::Fnn => "FNN",
        }
    }
}

impl std::str::FromStr for ClassifierKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cnn" => Ok(ClassifierKind::Cnn),
            "fnn" => Ok(ClassifierKind::Fnn),
            _ => Err(Error::InvalidInput(format!("unknown classifier {s:?} (cnn | fnn)"))),
        }
    }
}

/// CNN: `conv_blocks` × (kernel-3 conv, LeakyReLU, average pool), flatten,
/// dense to `feature_dim`, LeakyReLU, dense to 2.
/// FNN: flatten, then dense + LeakyReLU through `hidden`, dense to 2. Its
/// feature width is the last hidden width.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierArch {
    pub kind: ClassifierKind,
    pub in_channels: usize,
    pub in_len: usize,
    pub conv_channels: usize,
    pub conv_blocks: usize,
    pub feature_dim: usize,
    pub hidden: Vec<usize>,
    pub leaky_alpha: f64,
}

impl ClassifierArch {
    pub fn cnn(in_channels: usize, in_len: usize) -> Self {
        ClassifierArch {
            kind: ClassifierKind::Cnn,
            in_channels,
            in_len,
            conv_channels: 16,
            conv_blocks: 2,
            feature_dim: 64,
            hidden: Vec::new(),
            leaky_alpha: 0.2,
        }
    }

    pub fn fnn(in_channels: usize, in_len: usize) -> Self {
        ClassifierArch {
            kind: ClassifierKind::Fnn,
            in_channels,
            in_len,
            conv_channels: 0,
            conv_blocks: 0,
            feature_dim: 64,
            hidden: vec![128, 64],
            leaky_alpha: 0.2,
        }
    }

    pub fn of_kind(kind: ClassifierKind, in_channels: usize, in_len: usize) -> Self {
        match kind {
            ClassifierKind::Cnn => Self::cnn(in_channels, in_len),
            ClassifierKind::Fnn => Self::fnn(in_channels, in_len),
        }
    }

    /// Width of the penultimate layer, i.e. of [`extract_features`] rows.
    pub fn penultimate_width(&self) -> usize {
        match self.kind {
            ClassifierKind::Cnn => self.feature_dim,
            ClassifierKind::Fnn => *self.hidden.last().unwrap_or(&(self.in_channels * self.in_len)),
        }
    }

    /// Length after the conv stack.
    fn conv_out_len(&self) -> Result<usize> {
        let mut len = self.in_len;
        for _ in 0..self.conv_blocks {
            len =
                len.checked_sub(2).map(|l| l / 2).filter(|&l| l > 0).ok_or_else(|| {
                    Error::InvalidInput(format!("input length {} too short for the CNN", self.in_len))
                })?;
        }
        Ok(len)
    }

    pub fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.in_len == 0 {
            return Err(Error::InvalidInput("classifier input must be non-empty".into()));
        }
        match self.kind {
            ClassifierKind::Cnn => {
                if self.conv_channels == 0 || self.conv_blocks == 0 || self.feature_dim == 0 {
                    return Err(Error::InvalidInput("CNN widths must be positive".into()));
                }
                self.conv_out_len()?;
            }
            ClassifierKind::Fnn => {
                if self.hidden.is_empty() || self.hidden.contains(&0) {
                    return Err(Error::InvalidInput("FNN needs positive hidden widths".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    pub arch: ClassifierArch,
    pub params: ModelParams,
    pub trained: bool,
}

impl Classifier {
    /// Same initialization as the GAN models: `N(0, init_std²)` weights and
    /// zero biases.
    pub fn build<R: Rng + ?Sized>(arch: &ClassifierArch, init_std: f64, rng: &mut R) -> Result<Self> {
        arch.validate()?;
        let mut p = ModelParams::new();
        let dense = |p: &mut ModelParams, name: &str, from: usize, to: usize, rng: &mut R| {
            p.push_gaussian(format!("{name}.weight"), &[to, from], init_std, rng);
            p.push(format!("{name}.bias"), Tensor::zeros(&[to]));
        };
        match arch.kind {
            ClassifierKind::Cnn => {
                let mut cin = arch.in_channels;
                for i in 0..arch.conv_blocks {
                    p.push_gaussian(format!("conv{i}.weight"), &[arch.conv_channels, cin, 3], init_std, rng);
                    p.push(format!("conv{i}.bias"), Tensor::zeros(&[arch.conv_channels]));
                    cin = arch.conv_channels;
                }
                let flat = arch.conv_channels * arch.conv_out_len()?;
                dense(&mut p, "features", flat, arch.feature_dim, rng);
                dense(&mut p, "logits", arch.feature_dim, CLASSES, rng);
            }
            ClassifierKind::Fnn => {
                let mut from = arch.in_channels * arch.in_len;
                for (i, &h) in arch.hidden.iter().enumerate() {
                    dense(&mut p, &format!("hidden{i}"), from, h, rng);
                    from = h;
                }
                dense(&mut p, "logits", from, CLASSES, rng);
            }
        }
        Ok(Classifier { arch: arch.clone(), params: p, trained: false })
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        match *x.shape() {
            [b, c, l] if c == self.arch.in_channels && l == self.arch.in_len => Ok(b),
            _ => Err(Error::ShapeMismatch(format!(
                "classifier expects [B, {}, {}], got {:?}",
                self.arch.in_channels,
                self.arch.in_len,
                x.shape()
            ))),
        }
    }

    /// Penultimate activations `[B, D]` and logits `[B, 2]`.
    fn forward_with(&self, params: &[Tensor], x: &Tensor) -> Result<(Tensor, Tensor)> {
        let b = self.check_input(x)?;
        let a = &self.arch;
        let mut it = params.iter();
        let mut next = || it.next().expect("parameter count fixed by build");
        let mut feats = match a.kind {
            ClassifierKind::Cnn => {
                let mut h = x.clone();
                for _ in 0..a.conv_blocks {
                    h = h.conv1d(next(), next())?.leaky_relu(a.leaky_alpha)?.avg_pool1d()?;
                }
                let flat = h.numel() / b;
                h.reshape(&[b, flat])?.dense(next(), next())?.leaky_relu(a.leaky_alpha)?
            }
            ClassifierKind::Fnn => x.reshape(&[b, a.in_channels * a.in_len])?,
        };
        if a.kind == ClassifierKind::Fnn {
            for _ in &a.hidden {
                feats = feats.dense(next(), next())?.leaky_relu(a.leaky_alpha)?;
            }
        }
        let logits = feats.dense(next(), next())?;
        Ok((feats, logits))
    }

    pub fn logits(&self, x: &Tensor) -> Result<Tensor> {
        Ok(self.forward_with(self.params.tensors(), x)?.1)
    }

    pub fn predict(&self, data: &Signals) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(data.n);
        for chunk in chunks(data.n, 64) {
            let idx: Vec<usize> = chunk.collect();
            let logits = self.logits(&data.select(&idx).to_tensor())?;
            out.extend(logits.data().chunks(CLASSES).map(|r| usize::from(r[1] > r[0])));
        }
        Ok(out)
    }
}

fn chunks(n: usize, size: usize) -> impl Iterator<Item = std::ops::Range<usize>> {
    (0..n.div_ceil(size)).map(move |i| i * size..((i + 1) * size).min(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassifierTrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
}

impl Default for ClassifierTrainConfig {
    fn default() -> Self {
        ClassifierTrainConfig { epochs: 30, batch_size: 16, lr: 1e-3 }
    }
}

/// Mean loss and training accuracy of each epoch.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub loss: Vec<f64>,
    pub accuracy: Vec<f64>,
}

fn check_labels(data: &Signals, labels: &[usize]) -> Result<()> {
    if labels.len() != data.n {
        return Err(Error::ShapeMismatch(format!("{} labels for {} samples", labels.len(), data.n)));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= CLASSES) {
        return Err(Error::InvalidInput(format!("label {bad} is not 0 or 1")));
    }
    Ok(())
}

/// Softmax cross-entropy with Adam over shuffled minibatches.
pub fn train_classifier<R: Rng + ?Sized>(
    clf: &mut Classifier,
    data: &Signals,
    labels: &[usize],
    cfg: &ClassifierTrainConfig,
    rng: &mut R,
) -> Result<TrainHistory> {
    check_labels(data, labels)?;
    if (0..CLASSES).any(|c| !labels.contains(&c)) {
        return Err(Error::InvalidInput("training data must contain both classes".into()));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::InvalidInput("batch_size and lr must be positive".into()));
    }
    let mut opt = AdamState::new(AdamConfig { lr: cfg.lr, ..AdamConfig::default() }, clf.params.tensors());
    let mut order: Vec<usize> = (0..data.n).collect();
    let mut hist = TrainHistory::default();
    for _ in 0..cfg.epochs {
        order.shuffle(rng);
        let (mut loss_sum, mut correct) = (0.0, 0);
        for batch in order.chunks(cfg.batch_size) {
            let x = data.select(batch).to_tensor();
            let y: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            let tape = Tape::new(false);
            let params = clf.params.bind(&tape);
            let (_, logits) = clf.forward_with(&params, &x)?;
            let loss = logits.cross_entropy(&y)?;
            if !loss.item().is_finite() {
                return Err(Error::InvalidInput(format!("classifier loss became {}", loss.item())));
            }
            correct += logits.data().chunks(CLASSES).zip(&y).filter(|(r, &t)| usize::from(r[1] > r[0]) == t).count();
            loss_sum += loss.item() * batch.len() as f64;
            let wrt: Vec<&Tensor> = params.iter().collect();
            let grads = grad(&loss, &wrt, false)?;
            drop(params);
            opt.step(clf.params.tensors_mut(), &grads)?;
        }
        hist.loss.push(loss_sum / data.n as f64);
        hist.accuracy.push(correct as f64 / data.n as f64);
    }
    clf.trained = true;
    Ok(hist)
}

/// Fraction of samples whose argmax prediction equals the label.
pub fn evaluate(clf: &Classifier, data: &Signals, labels: &[usize]) -> Result<f64> {
    check_labels(data, labels)?;
    if data.n == 0 {
        return Err(Error::InvalidInput("cannot evaluate on an empty set".into()));
    }
    let pred = clf.predict(data)?;
    Ok(pred.iter().zip(labels).filter(|(p, l)| p == l).count() as f64 / data.n as f64)
}

/// Penultimate-layer activations, one row per signal.
pub fn extract_features(clf: &Classifier, signals: &Signals) -> Result<Features> {
    if !clf.trained {
        return Err(Error::UntrainedClassifier);
    }
    let d = clf.arch.penultimate_width();
    let mut data = Vec::with_capacity(signals.n * d);
    for r in chunks(signals.n, 64) {
        let idx: Vec<usize> = r.collect();
        let (feats, _) = clf.forward_with(clf.params.tensors(), &signals.select(&idx).to_tensor())?;
        data.extend_from_slice(feats.data());
    }
    Features::new(data, signals.n, d)
}

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{evaluate, train_classifier, Classifier, ClassifierArch, ClassifierKind, ClassifierTrainConfig};
use crate::error::{Error, Result};
use crate::signals::Signals;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchConfig {
    pub trials: usize,
    /// Fraction of each class used for training.
    pub split: f64,
    pub seed: u64,
    /// Generated samples per real training sample, per class.
    pub ratio: f64,
    pub init_std: f64,
    pub train: ClassifierTrainConfig,
    pub classifiers: Vec<ClassifierKind>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            trials: 100,
            split: 0.8,
            seed: 0,
            ratio: 1.0,
            init_std: 0.02,
            train: ClassifierTrainConfig::default(),
            classifiers: vec![ClassifierKind::Cnn, ClassifierKind::Fnn],
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::InvalidInput("trials must be at least 1".into()));
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(Error::InvalidInput(format!("split {} must lie in (0, 1)", self.split)));
        }
        if !(self.ratio >= 0.0 && self.ratio.is_finite()) {
            return Err(Error::InvalidInput(format!("ratio {} must be non-negative", self.ratio)));
        }
        if self.classifiers.is_empty() {
            return Err(Error::InvalidInput("no classifiers selected".into()));
        }
        Ok(())
    }
}

/// Real and generated signals per condition. Label 0 is eyes-open, 1 is
/// eyes-closed.
#[derive(Debug, Clone)]
pub struct BenchData {
    pub real_open: Signals,
    pub real_closed: Signals,
    pub gen_open: Signals,
    pub gen_closed: Signals,
}

impl BenchData {
    fn validate(&self) -> Result<[usize; 2]> {
        let shape = [self.real_open.channels, self.real_open.len];
        for (name, s) in [
            ("real eyes-closed", &self.real_closed),
            ("generated eyes-open", &self.gen_open),
            ("generated eyes-closed", &self.gen_closed),
        ] {
            if s.n > 0 && [s.channels, s.len] != shape {
                return Err(Error::ShapeMismatch(format!(
                    "{name} signals are {}x{}, real eyes-open {}x{}",
                    s.channels, s.len, shape[0], shape[1]
                )));
            }
        }
        for (name, s) in [("eyes-open", &self.real_open), ("eyes-closed", &self.real_closed)] {
            if s.n < 2 {
                return Err(Error::InvalidInput(format!(
                    "need at least 2 real {name} samples to stratify, got {}",
                    s.n
                )));
            }
        }
        Ok(shape)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub trial: usize,
    pub classifier: ClassifierKind,
    pub real_accuracy: f64,
    pub augmented_accuracy: f64,
    pub n_train_real: usize,
    pub n_train_generated: usize,
    pub n_test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub classifier: String,
    pub real_accuracy: f64,
    pub augmented_accuracy: f64,
    /// `augmented_accuracy − real_accuracy`.
    pub improvement: f64,
    pub real_std: f64,
    pub augmented_std: f64,
    pub trials: usize,
}

impl BenchRow {
    pub fn new(classifier: &str, real: &[f64], augmented: &[f64]) -> Self {
        let (rm, rs) = mean_std(real);
        let (am, as_) = mean_std(augmented);
        BenchRow {
            classifier: classifier.to_string(),
            real_accuracy: rm,
            augmented_accuracy: am,
            improvement: am - rm,
            real_std: rs,
            augmented_std: as_,
            trials: real.len(),
        }
    }
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub config: BenchConfig,
    pub rows: Vec<BenchRow>,
    pub trials: Vec<TrialResult>,
}

impl BenchReport {
    pub fn to_csv(&self) -> String {
        let mut s =
            String::from("classifier,real_accuracy,augmented_accuracy,improvement,real_std,augmented_std,trials\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                r.classifier,
                r.real_accuracy,
                r.augmented_accuracy,
                r.improvement,
                r.real_std,
                r.augmented_std,
                r.trials
            ));
        }
        s
    }
}

/// Stratified split of `0..n` into train and test indices.
fn split_class(n: usize, frac: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    let k = ((n as f64 * frac).round() as usize).clamp(1, n - 1);
    let test = idx.split_off(k);
    (idx, test)
}

fn labeled(parts: &[(&Signals, &[usize], usize)]) -> Result<(Signals, Vec<usize>)> {
    let first = parts[0].0;
    let mut out = Signals::empty(first.channels, first.len);
    let mut labels = Vec::new();
    for &(s, idx, label) in parts {
        if !idx.is_empty() {
            out.extend(&s.select(idx))?;
        }
        labels.extend(std::iter::repeat_n(label, idx.len()));
    }
    Ok((out, labels))
}

fn trial_rng(seed: u64, trial: usize, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((trial as u64) << 8 | stream);
    rng
}

fn run_trial(data: &BenchData, shape: [usize; 2], cfg: &BenchConfig, trial: usize) -> Result<Vec<TrialResult>> {
    let mut split_rng = trial_rng(cfg.seed, trial, 0);
    let (tr_o, te_o) = split_class(data.real_open.n, cfg.split, &mut split_rng);
    let (tr_c, te_c) = split_class(data.real_closed.n, cfg.split, &mut split_rng);
    let pick = |available: usize, train: usize, rng: &mut ChaCha8Rng| -> Result<Vec<usize>> {
        let want = (cfg.ratio * train as f64).round() as usize;
        if want > available {
            return Err(Error::InvalidInput(format!(
                "ratio {} needs {want} generated samples per class, only {available} available",
                cfg.ratio
            )));
        }
        let mut idx: Vec<usize> = (0..available).collect();
        idx.shuffle(rng);
        idx.truncate(want);
        Ok(idx)
    };
    let g_o = pick(data.gen_open.n, tr_o.len(), &mut split_rng)?;
    let g_c = pick(data.gen_closed.n, tr_c.len(), &mut split_rng)?;

    let (real_x, real_y) = labeled(&[(&data.real_open, &tr_o, 0), (&data.real_closed, &tr_c, 1)])?;
    let (test_x, test_y) = labeled(&[(&data.real_open, &te_o, 0), (&data.real_closed, &te_c, 1)])?;
    let (mut aug_x, mut aug_y) = (real_x.clone(), real_y.clone());
    let (gen_x, gen_y) = labeled(&[(&data.gen_open, &g_o, 0), (&data.gen_closed, &g_c, 1)])?;
    if gen_x.n > 0 {
        aug_x.extend(&gen_x)?;
        aug_y.extend(gen_y);
    }
    // Held-out set is real and disjoint from the real training split.
    debug_assert!(te_o.iter().all(|i| !tr_o.contains(i)) && te_c.iter().all(|i| !tr_c.contains(i)));

    cfg.classifiers
        .iter()
        .enumerate()
        .map(|(k, &kind)| {
            let arch = ClassifierArch::of_kind(kind, shape[0], shape[1]);
            let stream = 1 + 2 * k as u64;
            let init = Classifier::build(&arch, cfg.init_std, &mut trial_rng(cfg.seed, trial, stream))?;
            let arm = |x: &Signals, y: &[usize]| -> Result<f64> {
                let mut clf = init.clone();
                train_classifier(&mut clf, x, y, &cfg.train, &mut trial_rng(cfg.seed, trial, stream + 1))?;
                evaluate(&clf, &test_x, &test_y)
            };
            Ok(TrialResult {
                trial,
                classifier: kind,
                real_accuracy: arm(&real_x, &real_y)?,
                augmented_accuracy: arm(&aug_x, &aug_y)?,
                n_train_real: real_x.n,
                n_train_generated: gen_x.n,
                n_test: test_x.n,
            })
        })
        .collect()
}

/// Trains each classifier on the real training split alone and on the
/// split plus generated samples, and tests both on the held-out real split.
/// Every trial draws its own split and initialization from `(seed, trial)`.
pub fn augmentation_bench(data: &BenchData, cfg: &BenchConfig) -> Result<BenchReport> {
    cfg.validate()?;
    let shape = data.validate()?;
    let per_trial: Vec<Vec<TrialResult>> =
        (0..cfg.trials).into_par_iter().map(|t| run_trial(data, shape, cfg, t)).collect::<Result<_>>()?;
    let trials: Vec<TrialResult> = per_trial.into_iter().flatten().collect();
    let rows = cfg
        .classifiers
        .iter()
        .map(|&kind| {
            let of = |f: fn(&TrialResult) -> f64| -> Vec<f64> {
                trials.iter().filter(|t| t.classifier == kind).map(f).collect()
            };
            BenchRow::new(kind.name(), &of(|t| t.real_accuracy), &of(|t| t.augmented_accuracy))
        })
        .collect();
    Ok(BenchReport { config: cfg.clone(), rows, trials })
}

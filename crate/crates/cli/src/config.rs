//! Resolved run configuration: preset, then config file, then flags.
//!
//! Config files are JSON objects with flat dotted keys such as
//! `"train.lr": 0.001`. Snapshots are written in the same form, so any
//! snapshot can be fed back through `--config`.

use std::fs;
use std::path::Path;

use clap::ValueEnum;
use eegwgan::classify::{BenchConfig, ClassifierKind, ClassifierTrainConfig};
use eegwgan::edf::RunMap;
use eegwgan::metrics::WelchConfig;
use eegwgan::wgan::{CriticArch, GeneratorArch, TrainConfig};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::CliError;

pub const SNAPSHOT_FILE: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Preset {
    Paper,
    Desk,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    pub channels: usize,
    pub target_len: usize,
    pub fs: f64,
    pub runs: RunMap,
}

/// Sizes shared by the generator and the critic. Channel count and length
/// come from [`DataConfig`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub latent_dim: usize,
    pub hidden_channels: usize,
    /// Generator upsample stages and critic pooling blocks.
    pub stages: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenerateConfig {
    pub n: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthConfig {
    pub n: usize,
    pub freq: f64,
    pub amplitude: f64,
    pub noise_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FidConfig {
    pub classifier: ClassifierKind,
    pub train: ClassifierTrainConfig,
    pub init_std: f64,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopomapConfig {
    pub size: usize,
    /// `rms`, or `band` over `[lo, hi]` Hz.
    pub metric: String,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub preset: Preset,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub generate: GenerateConfig,
    pub synth: SynthConfig,
    pub welch: WelchConfig,
    pub fid: FidConfig,
    pub topomap: TopomapConfig,
    pub bench: BenchConfig,
}

impl RunConfig {
    pub fn preset(p: Preset) -> Self {
        match p {
            Preset::Paper => RunConfig {
                preset: p,
                data: DataConfig { channels: 64, target_len: 3152, fs: 160.0, runs: RunMap::default() },
                model: ModelConfig { latent_dim: 500, hidden_channels: 150, stages: 6 },
                train: TrainConfig { checkpoint_every: 1000, ..TrainConfig::default() },
                generate: GenerateConfig { n: 64, seed: 0 },
                synth: SynthConfig { n: 45, freq: 10.0, amplitude: 1.0, noise_std: 0.2, seed: 0 },
                welch: WelchConfig::default(),
                fid: FidConfig {
                    classifier: ClassifierKind::Cnn,
                    train: ClassifierTrainConfig::default(),
                    init_std: 0.02,
                    seed: 0,
                },
                topomap: TopomapConfig { size: 64, metric: "band".into(), lo: 8.0, hi: 13.0 },
                bench: BenchConfig::default(),
            },
            Preset::Desk => {
                let mut c = RunConfig::preset(Preset::Paper);
                c.preset = p;
                c.data.channels = 4;
                c.data.target_len = 128;
                c.model = ModelConfig { latent_dim: 32, hidden_channels: 16, stages: 2 };
                c.train.iterations = 2000;
                c.train.batch_size = 16;
                c.train.lr = 1e-3;
                c.train.init_std = 0.2;
                c.train.checkpoint_every = 100;
                c.synth.n = 64;
                c.welch.nperseg = 64;
                c.fid.init_std = 0.1;
                c.topomap.size = 32;
                c.bench.trials = 20;
                c.bench.init_std = 0.1;
                c
            }
        }
    }

    pub fn generator_arch(&self) -> GeneratorArch {
        let m = &self.model;
        GeneratorArch::reduced(m.latent_dim, self.data.channels, self.data.target_len, m.hidden_channels, m.stages)
    }

    pub fn critic_arch(&self) -> CriticArch {
        CriticArch::reduced(self.data.channels, self.data.target_len, self.model.hidden_channels, self.model.stages)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        self.generator_arch().validate()?;
        self.generator_arch().shape_trace()?;
        self.critic_arch().shape_trace()?;
        self.train.validate()?;
        self.bench.validate()?;
        if !(self.data.fs > 0.0) {
            return Err(CliError::Usage("data.fs must be positive".into()));
        }
        if !matches!(self.topomap.metric.as_str(), "rms" | "band") {
            return Err(CliError::Usage(format!("topomap.metric {:?} must be rms or band", self.topomap.metric)));
        }
        Ok(())
    }

    /// Flat dotted-key form.
    pub fn to_flat(&self) -> Map<String, Value> {
        let mut out = Map::new();
        flatten("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }

    pub fn snapshot(&self) -> String {
        let mut s = serde_json::to_string_pretty(&Value::Object(self.to_flat())).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn write_snapshot(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let path = dir.join(SNAPSHOT_FILE);
        fs::write(&path, self.snapshot()).map_err(|e| CliError::io(&path, e))
    }
}

fn flatten(prefix: &str, v: &Value, out: &mut Map<String, Value>) {
    match v {
        Value::Object(m) if !m.is_empty() => {
            for (k, child) in m {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, child, out);
            }
        }
        _ => {
            out.insert(prefix.to_string(), v.clone());
        }
    }
}

/// Writes `value` at dotted `key`, which must already exist.
fn set_key(root: &mut Value, key: &str, value: Value) -> Result<(), CliError> {
    let mut node = root;
    for part in key.split('.') {
        node = node
            .as_object_mut()
            .and_then(|m| m.get_mut(part))
            .ok_or_else(|| CliError::Usage(format!("unknown config key {key:?}")))?;
    }
    *node = value;
    Ok(())
}

/// Parses a flag value as JSON, falling back to a plain string.
pub fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Resolves preset, file and overrides, in that order of precedence
/// (later wins). A preset named on the command line beats one in the file.
pub fn resolve(
    preset: Option<Preset>,
    file: Option<&Path>,
    overrides: &[(String, Value)],
) -> Result<RunConfig, CliError> {
    let mut entries = Vec::new();
    let mut file_preset = None;
    if let Some(path) = file {
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let v: Value =
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        let Value::Object(map) = v else {
            return Err(CliError::Usage(format!("config {} must be a JSON object", path.display())));
        };
        for (k, v) in map {
            if k == "preset" {
                file_preset = Some(
                    serde_json::from_value::<Preset>(v)
                        .map_err(|e| CliError::Usage(format!("config {}: preset: {e}", path.display())))?,
                );
            } else {
                entries.push((k, v));
            }
        }
    }
    let preset = preset.or(file_preset).unwrap_or(Preset::Desk);
    let mut root = serde_json::to_value(RunConfig::preset(preset)).expect("config serializes");
    for (k, v) in entries.iter().chain(overrides) {
        if k == "preset" {
            return Err(CliError::Usage("use --preset to select a preset".into()));
        }
        set_key(&mut root, k, v.clone())?;
    }
    let cfg: RunConfig = serde_json::from_value(root).map_err(|e| CliError::Usage(format!("config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_preset_builds_the_full_scale_architecture() {
        let c = RunConfig::preset(Preset::Paper);
        assert_eq!(c.generator_arch(), GeneratorArch::paper());
        assert_eq!(c.critic_arch(), CriticArch::paper());
        assert_eq!((c.train.lambda_gp, c.train.n_critic, c.train.batch_size), (10.0, 5, 32));
        c.validate().unwrap();
    }

    #[test]
    fn desk_preset_is_valid_and_small() {
        let c = RunConfig::preset(Preset::Desk);
        c.validate().unwrap();
        assert_eq!(c.generator_arch().shape_trace().unwrap().last().unwrap().shape, vec![4, 128]);
        assert_eq!(c.train.n_critic, 5);
    }

    #[test]
    fn snapshot_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let c = resolve(Some(Preset::Desk), None, &[("train.lr".into(), parse_value("0.005"))]).unwrap();
        c.write_snapshot(dir.path()).unwrap();
        let back = resolve(None, Some(&dir.path().join(SNAPSHOT_FILE)), &[]).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.train.lr, 0.005);
    }

    #[test]
    fn flags_beat_file_and_unknown_keys_fail() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        fs::write(&path, r#"{"preset": "paper", "train.iterations": 7, "train.lr": 0.5}"#).unwrap();
        let c = resolve(None, Some(&path), &[("train.lr".into(), parse_value("0.25"))]).unwrap();
        assert_eq!(c.preset, Preset::Paper);
        assert_eq!((c.train.iterations, c.train.lr), (7, 0.25));
        assert!(resolve(None, None, &[("train.nope".into(), Value::from(1))]).is_err());
        assert!(resolve(None, None, &[("train.lr".into(), parse_value("fast"))]).is_err());
        assert!(resolve(None, None, &[("data.channels".into(), Value::from(0))]).is_err());
    }
}

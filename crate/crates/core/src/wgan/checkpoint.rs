use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::arch::{arch_hash, CriticArch, GeneratorArch};
use super::model::{Critic, Generator};
use super::train::{IterMetrics, TrainConfig};
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT: &str = "eegwgan-checkpoint/1";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAYLOAD_FILE: &str = "params.bin";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutEntry {
    pub name: String,
    pub shape: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub arch_hash: String,
    pub generator: GeneratorArch,
    pub critic: CriticArch,
    pub config: TrainConfig,
    pub iteration: usize,
    pub label: Option<String>,
    pub bn_initialized: Vec<bool>,
    /// Payload order: generator parameters, generator running statistics,
    /// critic parameters.
    pub layout: Vec<LayoutEntry>,
    pub history: Vec<IterMetrics>,
}

/// JSON manifest plus a flat little-endian `f64` payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub manifest: CheckpointManifest,
    pub payload: Vec<f64>,
}

impl Checkpoint {
    pub fn capture(
        generator: &Generator,
        critic: &Critic,
        config: &TrainConfig,
        iteration: usize,
        history: &[IterMetrics],
        label: Option<String>,
    ) -> Self {
        let mut layout = Vec::new();
        let mut payload = generator.params.flatten();
        for (name, shape) in generator.params.layout() {
            layout.push(LayoutEntry { name: format!("generator.{name}"), shape });
        }
        for (i, bn) in generator.bn.iter().enumerate() {
            payload.extend_from_slice(&bn.mean);
            payload.extend_from_slice(&bn.var);
            for what in ["running_mean", "running_var"] {
                layout.push(LayoutEntry { name: format!("generator.bn{i}.{what}"), shape: vec![bn.mean.len()] });
            }
        }
        payload.extend(critic.params.flatten());
        for (name, shape) in critic.params.layout() {
            layout.push(LayoutEntry { name: format!("critic.{name}"), shape });
        }
        Checkpoint {
            manifest: CheckpointManifest {
                format: CHECKPOINT_FORMAT.to_string(),
                arch_hash: arch_hash(&generator.arch, &critic.arch),
                generator: generator.arch.clone(),
                critic: critic.arch.clone(),
                config: config.clone(),
                iteration,
                label,
                bn_initialized: generator.bn.iter().map(|b| b.initialized).collect(),
                layout,
                history: history.to_vec(),
            },
            payload,
        }
    }

    /// Fails unless the checkpoint was produced by exactly these architectures.
    pub fn verify_arch(&self, generator: &GeneratorArch, critic: &CriticArch) -> Result<()> {
        let expected = arch_hash(generator, critic);
        if expected != self.manifest.arch_hash {
            return Err(Error::ArchMismatch { expected, found: self.manifest.arch_hash.clone() });
        }
        Ok(())
    }

    fn check_payload(&self) -> Result<()> {
        let m = &self.manifest;
        if m.format != CHECKPOINT_FORMAT {
            return Err(Error::InvalidInput(format!("unknown checkpoint format {:?}", m.format)));
        }
        let hash = arch_hash(&m.generator, &m.critic);
        if hash != m.arch_hash {
            return Err(Error::ArchMismatch { expected: hash, found: m.arch_hash.clone() });
        }
        let declared: usize = m.layout.iter().map(|e| e.shape.iter().product::<usize>()).sum();
        if declared != self.payload.len() {
            return Err(Error::InvalidInput(format!(
                "payload has {} values, layout declares {declared}",
                self.payload.len()
            )));
        }
        Ok(())
    }

    /// Rebuilds both models from the payload.
    pub fn restore(&self) -> Result<(Generator, Critic)> {
        self.check_payload()?;
        let m = &self.manifest;
        // Initial values are overwritten by the payload.
        let mut generator = Generator::build(&m.generator, 0.0, &mut rand_chacha_zero())?;
        let mut critic = Critic::build(&m.critic, 0.0, &mut rand_chacha_zero())?;
        let mut off = generator.params.assign_flat(&self.payload)?;
        if m.bn_initialized.len() != generator.bn.len() {
            return Err(Error::InvalidInput("batch-norm layer count mismatch".into()));
        }
        for (bn, &init) in generator.bn.iter_mut().zip(&m.bn_initialized) {
            let c = bn.mean.len();
            bn.mean.copy_from_slice(&self.payload[off..off + c]);
            bn.var.copy_from_slice(&self.payload[off + c..off + 2 * c]);
            bn.initialized = init;
            off += 2 * c;
        }
        off += critic.params.assign_flat(&self.payload[off..])?;
        debug_assert_eq!(off, self.payload.len());
        Ok((generator, critic))
    }

    pub fn manifest_bytes(&self) -> Result<Vec<u8>> {
        let mut v = serde_json::to_vec_pretty(&self.manifest)?;
        v.push(b'\n');
        Ok(v)
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        self.payload.iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_bytes(manifest: &[u8], payload: &[u8]) -> Result<Self> {
        let manifest: CheckpointManifest = serde_json::from_slice(manifest)?;
        if !payload.len().is_multiple_of(8) {
            return Err(Error::InvalidInput(format!("payload length {} is not a multiple of 8", payload.len())));
        }
        let payload = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let ck = Checkpoint { manifest, payload };
        ck.check_payload()?;
        Ok(ck)
    }

    /// Writes `manifest.json` and `params.bin` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let write = |name: &str, bytes: &[u8]| -> Result<()> {
            let path = dir.join(name);
            let tmp = dir.join(format!(".{name}.tmp"));
            fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
            fs::rename(&tmp, &path).map_err(|e| Error::io(&path, e))
        };
        write(PAYLOAD_FILE, &self.payload_bytes())?;
        write(MANIFEST_FILE, &self.manifest_bytes()?)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let read = |name: &str| {
            let path = dir.join(name);
            fs::read(&path).map_err(|e| Error::io(&path, e))
        };
        Self::from_bytes(&read(MANIFEST_FILE)?, &read(PAYLOAD_FILE)?)
    }
}

fn rand_chacha_zero() -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(0)
}

//! Dataset archive: a directory holding `data.f64` (raw little-endian
//! `[n, channels, len]` values) and `manifest.json`.

use std::fs;
use std::path::Path;

use eegwgan::Signals;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const DATASET_FORMAT: &str = "eegwgan-dataset/1";
pub const DATA_FILE: &str = "data.f64";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub id: String,
    /// SHA-256 of this sample's bytes within the data file.
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub source: String,
    pub condition: Option<String>,
    pub n: usize,
    pub channels: usize,
    pub len: usize,
    pub fs: f64,
    pub labels: Vec<String>,
    pub entries: Vec<Entry>,
    pub data_file: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetArchive {
    pub manifest: DatasetManifest,
    pub signals: Signals,
}

fn le_bytes(values: &[f64]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

impl DatasetArchive {
    /// `ids` names each sample; `None` numbers them.
    pub fn new(
        signals: Signals,
        labels: Vec<String>,
        fs: f64,
        source: &str,
        condition: Option<String>,
        ids: Option<Vec<String>>,
    ) -> Result<Self, CliError> {
        if labels.len() != signals.channels {
            return Err(CliError::Input(format!("{} labels for {} channels", labels.len(), signals.channels)));
        }
        let ids = ids.unwrap_or_else(|| (0..signals.n).map(|i| format!("sample{i:05}")).collect());
        if ids.len() != signals.n {
            return Err(CliError::Input(format!("{} ids for {} samples", ids.len(), signals.n)));
        }
        let entries = ids
            .into_iter()
            .enumerate()
            .map(|(i, id)| Entry { id, sha256: hex::encode(Sha256::digest(le_bytes(signals.sample(i)))) })
            .collect();
        let manifest = DatasetManifest {
            format: DATASET_FORMAT.into(),
            source: source.into(),
            condition,
            n: signals.n,
            channels: signals.channels,
            len: signals.len,
            fs,
            labels,
            entries,
            data_file: DATA_FILE.into(),
            sha256: hex::encode(Sha256::digest(le_bytes(&signals.data))),
        };
        Ok(DatasetArchive { manifest, signals })
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        let data = dir.join(DATA_FILE);
        fs::write(&data, le_bytes(&self.signals.data)).map_err(|e| CliError::io(&data, e))?;
        let manifest = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        text.push('\n');
        fs::write(&manifest, text).map_err(|e| CliError::io(&manifest, e))
    }

    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let mpath = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&mpath).map_err(|e| CliError::io(&mpath, e))?;
        let manifest: DatasetManifest =
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", mpath.display())))?;
        if manifest.format != DATASET_FORMAT {
            return Err(CliError::Input(format!("{}: unknown format {:?}", mpath.display(), manifest.format)));
        }
        let dpath = dir.join(&manifest.data_file);
        let bytes = fs::read(&dpath).map_err(|e| CliError::io(&dpath, e))?;
        if hex::encode(Sha256::digest(&bytes)) != manifest.sha256 {
            return Err(CliError::Input(format!("{}: checksum does not match the manifest", dpath.display())));
        }
        let expected = manifest.n * manifest.channels * manifest.len * 8;
        if bytes.len() != expected {
            return Err(CliError::Input(format!(
                "{}: {} bytes, manifest implies {expected}",
                dpath.display(),
                bytes.len()
            )));
        }
        let data = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        let signals = Signals::new(data, manifest.n, manifest.channels, manifest.len)?;
        Ok(DatasetArchive { manifest, signals })
    }
}

/// Channel names for `channels` synthetic or generated channels: the full
/// montage for 64, otherwise a spread subset so scalp maps still work.
pub fn default_labels(channels: usize) -> Vec<String> {
    const SPREAD: [&str; 16] =
        ["Fz", "Cz", "Pz", "Oz", "C3", "C4", "F3", "F4", "P3", "P4", "O1", "O2", "T7", "T8", "Fp1", "Fp2"];
    if channels == eegwgan::metrics::montage::BCI2000_LABELS.len() {
        return eegwgan::metrics::montage::BCI2000_LABELS.iter().map(|s| s.to_string()).collect();
    }
    (0..channels).map(|i| SPREAD.get(i).map_or_else(|| format!("ch{i}"), |s| s.to_string())).collect()
}

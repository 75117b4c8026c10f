//! EDF parsing and writing, BCI2000 dataset assembly and preprocessing.

mod format;

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use format::{EdfError, EdfFile, EdfHeader, SignalHeader, ANNOTATION_LABEL};

use crate::error::{Error, Result};
use crate::signals::Signals;

pub const TARGET_LEN: usize = 3152;
pub const BCI2000_CHANNELS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Condition {
    EyesOpen,
    EyesClosed,
}

impl Condition {
    pub fn as_str(self) -> &'static str {
        match self {
            Condition::EyesOpen => "eyes-open",
            Condition::EyesClosed => "eyes-closed",
        }
    }
}

impl std::str::FromStr for Condition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "eyes-open" | "open" => Ok(Condition::EyesOpen),
            "eyes-closed" | "closed" => Ok(Condition::EyesClosed),
            _ => Err(Error::InvalidInput(format!("unknown condition {s:?} (eyes-open | eyes-closed)"))),
        }
    }
}

/// A channels × samples recording in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub data: Vec<Vec<f64>>,
    pub fs: f64,
    pub labels: Vec<String>,
    pub condition: Option<Condition>,
    pub subject: Option<String>,
}

impl Recording {
    pub fn channels(&self) -> usize {
        self.data.len()
    }

    pub fn len(&self) -> usize {
        self.data.first().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Decodes an EDF file to physical units. Annotation signals are dropped.
pub fn parse_edf(bytes: &[u8]) -> std::result::Result<(EdfHeader, Recording), EdfError> {
    let file = EdfFile::parse(bytes)?;
    let h = &file.header;
    let mut data = Vec::new();
    let mut labels = Vec::new();
    let mut fs = None;
    for (i, (s, d)) in h.signals.iter().zip(&file.digital).enumerate() {
        if s.is_annotation() {
            log::warn!("skipping annotation signal {i}");
            continue;
        }
        let rate = h.sample_rate(i);
        match fs {
            None => fs = Some(rate),
            Some(f) if f != rate => {
                return Err(EdfError::Layout {
                    signal: i,
                    reason: format!("sampling rate {rate} Hz differs from {f} Hz of earlier signals"),
                })
            }
            _ => {}
        }
        data.push(d.iter().map(|&v| s.to_physical(v)).collect());
        labels.push(s.label.clone());
    }
    let rec = Recording { data, fs: fs.unwrap_or(0.0), labels, condition: None, subject: None };
    Ok((file.header, rec))
}

/// Quantizes `recording` into the record layout declared by `header`.
/// Values that fall outside a signal's digital range are rejected.
pub fn write_edf(header: &EdfHeader, recording: &Recording) -> std::result::Result<Vec<u8>, EdfError> {
    if recording.channels() != header.signals.len() {
        return Err(EdfError::Layout {
            signal: recording.channels().min(header.signals.len()),
            reason: format!("recording has {} channels, header {}", recording.channels(), header.signals.len()),
        });
    }
    let mut digital = Vec::with_capacity(header.signals.len());
    for (i, (s, x)) in header.signals.iter().zip(&recording.data).enumerate() {
        let want = s.samples_per_record * header.num_records;
        if x.len() != want {
            return Err(EdfError::Layout { signal: i, reason: format!("{} samples, header implies {want}", x.len()) });
        }
        let d = x
            .iter()
            .enumerate()
            .map(|(j, &v)| {
                s.to_digital(v).ok_or(EdfError::OutOfRange {
                    signal: i,
                    index: j,
                    value: v,
                    digital: (v - s.physical_min) / s.gain() + f64::from(s.digital_min),
                    min: s.digital_min,
                    max: s.digital_max,
                })
            })
            .collect::<std::result::Result<Vec<i16>, _>>()?;
        digital.push(d);
    }
    EdfFile { header: header.clone(), digital }.to_bytes()
}

/// Keeps the first `target_len` samples of every channel and rescales each
/// channel to `[-1, 1]` by its own min and max.
pub fn preprocess(rec: &Recording, target_len: usize) -> Result<Recording> {
    if rec.len() < target_len {
        return Err(Error::InvalidInput(format!("recording has {} samples, need at least {target_len}", rec.len())));
    }
    let mut out = rec.clone();
    for (c, ch) in out.data.iter_mut().enumerate() {
        ch.truncate(target_len);
        let (lo, hi) = ch.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        if !(hi > lo) {
            let name = rec.labels.get(c).map_or_else(|| format!("#{c}"), Clone::clone);
            return Err(Error::InvalidInput(format!("channel {name} is constant; cannot normalize")));
        }
        for v in ch.iter_mut() {
            *v = 2.0 * (*v - lo) / (hi - lo) - 1.0;
        }
    }
    Ok(out)
}

/// BCI2000 run numbers used for each condition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunMap {
    pub eyes_open: u32,
    pub eyes_closed: u32,
}

impl Default for RunMap {
    fn default() -> Self {
        RunMap { eyes_open: 1, eyes_closed: 2 }
    }
}

impl RunMap {
    pub fn run(&self, c: Condition) -> u32 {
        match c {
            Condition::EyesOpen => self.eyes_open,
            Condition::EyesClosed => self.eyes_closed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetOptions {
    pub runs: RunMap,
    pub channels: usize,
    pub target_len: usize,
}

impl Default for DatasetOptions {
    fn default() -> Self {
        DatasetOptions { runs: RunMap::default(), channels: BCI2000_CHANNELS, target_len: TARGET_LEN }
    }
}

/// Preprocessed recordings of one condition, uniform in shape.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub condition: Condition,
    pub recordings: Vec<Recording>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.recordings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.recordings.is_empty()
    }

    pub fn to_signals(&self) -> Result<Signals> {
        let Some(first) = self.recordings.first() else {
            return Ok(Signals::empty(0, 0));
        };
        let (c, l) = (first.channels(), first.len());
        let mut data = Vec::with_capacity(self.len() * c * l);
        for r in &self.recordings {
            for ch in &r.data {
                data.extend_from_slice(ch);
            }
        }
        Signals::new(data, self.len(), c, l)
    }
}

/// Canonical `S###` form of a subject id (`7`, `s7`, `S007` → `S007`).
pub fn normalize_subject(id: &str) -> Result<String> {
    let t = id.trim();
    let digits = t.strip_prefix(['S', 's']).unwrap_or(t);
    let n: u32 = digits.parse().map_err(|_| Error::InvalidInput(format!("bad subject id {id:?}")))?;
    Ok(format!("S{n:03}"))
}

/// Newline-separated subject ids; `#` starts a comment.
pub fn parse_subject_list(text: &str) -> Result<Vec<String>> {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .map(normalize_subject)
        .collect()
}

/// Locates `S###R##.edf` either in `root/S###/` or directly in `root`,
/// ignoring case.
pub fn find_run_file(root: &Path, subject: &str, run: u32) -> Result<PathBuf> {
    let want = format!("{subject}R{run:02}.edf").to_ascii_lowercase();
    let mut hits = Vec::new();
    for dir in [root.join(subject), root.to_path_buf()] {
        let Ok(entries) = fs::read_dir(&dir) else { continue };
        for e in entries.flatten() {
            if e.file_name().to_string_lossy().to_ascii_lowercase() == want && e.path().is_file() {
                hits.push(e.path());
            }
        }
    }
    hits.sort();
    hits.dedup();
    match hits.len() {
        0 => Err(Error::InvalidInput(format!(
            "subject {subject}: run {run} file {want} not found under {}",
            root.display()
        ))),
        1 => Ok(hits.remove(0)),
        _ => Err(Error::InvalidInput(format!(
            "subject {subject}: run {run} is ambiguous: {}",
            hits.iter().map(|p| p.display().to_string()).collect::<Vec<_>>().join(", ")
        ))),
    }
}

pub fn load_recording(path: &Path) -> Result<Recording> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let (_, rec) = parse_edf(&bytes).map_err(|source| Error::EdfFile { path: path.to_path_buf(), source })?;
    Ok(rec)
}

/// Parses and preprocesses one run per subject for `condition`.
pub fn load_dataset(root: &Path, subjects: &[String], condition: Condition, opts: &DatasetOptions) -> Result<Dataset> {
    let mut recordings = Vec::with_capacity(subjects.len());
    for id in subjects {
        let subject = normalize_subject(id)?;
        let path = find_run_file(root, &subject, opts.runs.run(condition))?;
        let mut rec = load_recording(&path)?;
        if rec.channels() != opts.channels {
            return Err(Error::InvalidInput(format!(
                "subject {subject}: {} has {} channels, expected {}",
                path.display(),
                rec.channels(),
                opts.channels
            )));
        }
        rec.condition = Some(condition);
        rec.subject = Some(subject.clone());
        let rec =
            preprocess(&rec, opts.target_len).map_err(|e| Error::InvalidInput(format!("subject {subject}: {e}")))?;
        if let Some(first) = recordings.first() {
            let first: &Recording = first;
            if first.labels != rec.labels {
                return Err(Error::InvalidInput(format!(
                    "subject {subject}: channel order differs from first subject"
                )));
            }
        }
        recordings.push(rec);
    }
    Ok(Dataset { condition, recordings })
}

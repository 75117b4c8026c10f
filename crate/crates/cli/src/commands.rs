use std::fs;
use std::path::{Path, PathBuf};

use eegwgan::classify::{
    augmentation_bench, extract_features, train_classifier, BenchData, Classifier, ClassifierArch,
};
use eegwgan::edf::{load_dataset, parse_subject_list, Condition, DatasetOptions};
use eegwgan::metrics::montage::{normalize_label, FRONTAL, OCCIPITAL};
use eegwgan::metrics::{band_power, channel_psd, dataset_psd, fid, topomap, FidReport, PsdEstimate, TopoMetric, BANDS};
use eegwgan::synth::{sine_dataset, SineConfig};
use eegwgan::wgan::{self, write_metrics_csv, Checkpoint, IterMetrics, TrainObserver};
use eegwgan::{gradcheck, Signals};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::archive::{default_labels, DatasetArchive};
use crate::config::RunConfig;
use crate::{CliError, Command};

const CHECKPOINT_DIR: &str = "checkpoint";
const METRICS_FILE: &str = "metrics.csv";
const CLASSIFIER_FILE: &str = "classifier.json";
const CLASSIFIER_FORMAT: &str = "eegwgan-classifier/1";

pub(crate) fn dispatch(cfg: &RunConfig, out: Option<&Path>, cmd: &Command) -> Result<(), CliError> {
    if let Command::Gradcheck { configs, inject_fault } = cmd {
        return gradcheck_cmd(cfg, out, *configs, inject_fault.as_deref());
    }
    let out = out.ok_or_else(|| CliError::Usage("--out DIR is required".into()))?;
    cfg.write_snapshot(out)?;
    match cmd {
        Command::Ingest { root, subjects } => ingest(cfg, out, root, subjects),
        Command::Synth { .. } => synth(cfg, out),
        Command::Train { data, .. } => train(cfg, out, data),
        Command::Generate { checkpoint, .. } => generate(cfg, out, checkpoint),
        Command::EvalPsd { real, generated } => eval_psd(cfg, out, real, generated.as_deref()),
        Command::EvalFid { real, generated, contrast, classifier } => {
            eval_fid(cfg, out, real, generated, contrast.as_deref(), classifier.as_deref())
        }
        Command::EvalTopomap { data } => eval_topomap(cfg, out, data),
        Command::EvalBands { data } => eval_bands(cfg, out, data),
        Command::Bench { open, closed, gen_open, gen_closed, .. } => {
            bench(cfg, out, [open, closed, gen_open, gen_closed])
        }
        Command::Gradcheck { .. } => unreachable!("handled above"),
    }
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write(path, s)
}

fn ingest(cfg: &RunConfig, out: &Path, root: &Path, subjects: &Path) -> Result<(), CliError> {
    if !root.is_dir() {
        return Err(CliError::Input(format!("dataset root {} is not a directory", root.display())));
    }
    let text = fs::read_to_string(subjects).map_err(|e| CliError::io(subjects, e))?;
    let ids = parse_subject_list(&text)?;
    let opts = DatasetOptions { runs: cfg.data.runs, channels: cfg.data.channels, target_len: cfg.data.target_len };
    for condition in [Condition::EyesOpen, Condition::EyesClosed] {
        let ds = load_dataset(root, &ids, condition, &opts)?;
        for r in &ds.recordings {
            if (r.fs - cfg.data.fs).abs() > 1e-9 {
                return Err(CliError::Input(format!(
                    "subject {} {} is sampled at {} Hz, config expects data.fs = {}",
                    r.subject.as_deref().unwrap_or("?"),
                    condition.as_str(),
                    r.fs,
                    cfg.data.fs
                )));
            }
        }
        let (signals, labels) = match ds.recordings.first() {
            Some(first) => (ds.to_signals()?, first.labels.iter().map(|l| l.trim().to_string()).collect()),
            None => (Signals::empty(cfg.data.channels, cfg.data.target_len), default_labels(cfg.data.channels)),
        };
        let sample_ids = ds.recordings.iter().map(|r| r.subject.clone().unwrap_or_default()).collect();
        let archive = DatasetArchive::new(
            signals,
            labels,
            cfg.data.fs,
            "edf",
            Some(condition.as_str().into()),
            Some(sample_ids),
        )?;
        archive.save(&out.join(condition.as_str()))?;
        println!(
            "{}: {} recordings, {}x{}",
            condition.as_str(),
            ds.len(),
            archive.signals.channels,
            archive.signals.len
        );
    }
    Ok(())
}

fn synth(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let s = &cfg.synth;
    let signals = sine_dataset(&SineConfig {
        n: s.n,
        channels: cfg.data.channels,
        len: cfg.data.target_len,
        fs: cfg.data.fs,
        freq: s.freq,
        amplitude: s.amplitude,
        noise_std: s.noise_std,
        normalize: true,
        seed: s.seed,
    })?;
    let archive = DatasetArchive::new(signals, default_labels(cfg.data.channels), cfg.data.fs, "synth", None, None)?;
    archive.save(out)?;
    println!("synth: {} samples, {}x{}, {} Hz", s.n, cfg.data.channels, cfg.data.target_len, s.freq);
    Ok(())
}

/// Persists every checkpoint as it is produced and logs progress.
struct CheckpointWriter<'a> {
    dir: PathBuf,
    label: Option<String>,
    log: Vec<IterMetrics>,
    every: usize,
    out: &'a Path,
}

impl TrainObserver for CheckpointWriter<'_> {
    fn on_iteration(&mut self, m: &IterMetrics) {
        if m.iteration.is_multiple_of(self.every) {
            log::info!(
                "iteration {}: critic {:.4} gen {:.4} W {:.4} |grad| {:.3}",
                m.iteration,
                m.critic_loss,
                m.gen_loss,
                m.wasserstein_estimate,
                m.mean_grad_norm
            );
        }
        self.log.push(*m);
    }

    fn on_checkpoint(&mut self, ck: &Checkpoint) -> eegwgan::Result<()> {
        let mut ck = ck.clone();
        ck.manifest.label = self.label.clone();
        ck.save(&self.dir)?;
        let path = self.out.join(METRICS_FILE);
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &self.log).map_err(|e| eegwgan::Error::io(&path, e))?;
        fs::write(&path, buf).map_err(|e| eegwgan::Error::io(&path, e))
    }
}

fn train(cfg: &RunConfig, out: &Path, data: &Path) -> Result<(), CliError> {
    let archive = DatasetArchive::load(data)?;
    let s = &archive.signals;
    if [s.channels, s.len] != [cfg.data.channels, cfg.data.target_len] {
        return Err(CliError::Input(format!(
            "{} holds {}x{} signals but the config expects {}x{} (set data.channels / data.target_len)",
            data.display(),
            s.channels,
            s.len,
            cfg.data.channels,
            cfg.data.target_len
        )));
    }
    let mut observer = CheckpointWriter {
        dir: out.join(CHECKPOINT_DIR),
        label: archive.manifest.condition.clone(),
        log: Vec::new(),
        every: (cfg.train.iterations / 20).max(1),
        out,
    };
    match wgan::train(s, &cfg.generator_arch(), &cfg.critic_arch(), &cfg.train, &mut observer) {
        Ok(outcome) => {
            let last = outcome.log.last().expect("at least one iteration");
            println!(
                "trained {} iterations ({} critic, {} generator updates); final W estimate {:.4}, |grad| {:.3}",
                last.iteration,
                outcome.critic_updates,
                outcome.generator_updates,
                last.wasserstein_estimate,
                last.mean_grad_norm
            );
            println!("checkpoint: {}", out.join(CHECKPOINT_DIR).display());
            Ok(())
        }
        Err(eegwgan::Error::NonFinite { iteration, what, last_checkpoint }) => {
            let path = out.join(METRICS_FILE);
            let mut buf = Vec::new();
            write_metrics_csv(&mut buf, &observer.log).map_err(|e| CliError::io(&path, e))?;
            write(&path, buf)?;
            let kept = match last_checkpoint {
                Some(ck) => {
                    format!("last checkpoint (iteration {}) kept in {}", ck.manifest.iteration, observer.dir.display())
                }
                None => "no checkpoint was reached".into(),
            };
            Err(CliError::Failure(format!("training diverged: non-finite {what} at iteration {iteration}; {kept}")))
        }
        Err(e) => Err(e.into()),
    }
}

fn generate(cfg: &RunConfig, out: &Path, checkpoint: &Path) -> Result<(), CliError> {
    let ck = Checkpoint::load(checkpoint)?;
    let signals = wgan::generate(&ck, cfg.generate.n, cfg.generate.seed)?;
    let labels = default_labels(signals.channels);
    let archive = DatasetArchive::new(signals, labels, cfg.data.fs, "generated", ck.manifest.label.clone(), None)?;
    archive.save(out)?;
    println!(
        "generated {} samples, {}x{}, from iteration {}",
        cfg.generate.n, archive.signals.channels, archive.signals.len, ck.manifest.iteration
    );
    Ok(())
}

fn load_with_fs(cfg: &RunConfig, path: &Path) -> Result<DatasetArchive, CliError> {
    let a = DatasetArchive::load(path)?;
    if (a.manifest.fs - cfg.welch.fs).abs() > 1e-9 {
        return Err(CliError::Input(format!(
            "{} is sampled at {} Hz but welch.fs is {}",
            path.display(),
            a.manifest.fs,
            cfg.welch.fs
        )));
    }
    Ok(a)
}

#[derive(Serialize)]
struct PsdReport<'a> {
    real: &'a PsdEstimate,
    generated: Option<&'a PsdEstimate>,
    real_peak_hz: f64,
    generated_peak_hz: Option<f64>,
}

fn eval_psd(cfg: &RunConfig, out: &Path, real: &Path, generated: Option<&Path>) -> Result<(), CliError> {
    let r = dataset_psd(&load_with_fs(cfg, real)?.signals, &cfg.welch)?;
    let g = generated.map(|p| -> Result<_, CliError> { Ok(dataset_psd(&load_with_fs(cfg, p)?.signals, &cfg.welch)?) });
    let g = g.transpose()?;
    let mut csv = String::from(if g.is_some() { "freq_hz,real,generated\n" } else { "freq_hz,real\n" });
    for (k, f) in r.freqs.iter().enumerate() {
        csv.push_str(&format!("{f},{:e}", r.power[k]));
        if let Some(g) = &g {
            csv.push_str(&format!(",{:e}", g.power[k]));
        }
        csv.push('\n');
    }
    write(&out.join("psd.csv"), csv)?;
    let report = PsdReport {
        real: &r,
        generated: g.as_ref(),
        real_peak_hz: r.freqs[r.argmax()],
        generated_peak_hz: g.as_ref().map(|g| g.freqs[g.argmax()]),
    };
    write_json(&out.join("psd.json"), &report)?;
    println!("real PSD peak: {} Hz", report.real_peak_hz);
    if let Some(f) = report.generated_peak_hz {
        println!("generated PSD peak: {f} Hz");
    }
    Ok(())
}

/// Trained feature classifier as stored on disk.
#[derive(Serialize, Deserialize)]
struct SavedClassifier {
    format: String,
    arch: ClassifierArch,
    params: Vec<f64>,
}

fn load_classifier(path: &Path) -> Result<Classifier, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let saved: SavedClassifier =
        serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    if saved.format != CLASSIFIER_FORMAT {
        return Err(CliError::Input(format!("{}: unknown format {:?}", path.display(), saved.format)));
    }
    let mut clf = Classifier::build(&saved.arch, 0.0, &mut ChaCha8Rng::seed_from_u64(0))?;
    let used = clf.params.assign_flat(&saved.params)?;
    if used != saved.params.len() {
        return Err(CliError::Input(format!("{}: {} extra parameters", path.display(), saved.params.len() - used)));
    }
    clf.trained = true;
    Ok(clf)
}

/// Gaussian signals matching the global mean and standard deviation of `like`.
fn noise_like(like: &Signals, seed: u64) -> Signals {
    let n = like.data.len() as f64;
    let mean = like.data.iter().sum::<f64>() / n;
    let std = (like.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    let dist = Normal::new(mean, std.max(f64::MIN_POSITIVE)).expect("finite moments");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..like.data.len()).map(|_| dist.sample(&mut rng)).collect();
    Signals::new(data, like.n, like.channels, like.len).expect("same shape")
}

#[derive(Serialize)]
struct FidRow {
    pair: String,
    #[serde(flatten)]
    report: FidReport,
}

fn eval_fid(
    cfg: &RunConfig,
    out: &Path,
    real: &Path,
    generated: &Path,
    contrast: Option<&Path>,
    classifier: Option<&Path>,
) -> Result<(), CliError> {
    let real = DatasetArchive::load(real)?.signals;
    let generated = DatasetArchive::load(generated)?.signals;
    let clf = match (classifier, contrast) {
        (Some(path), _) => load_classifier(path)?,
        (None, Some(contrast)) => {
            let contrast = DatasetArchive::load(contrast)?.signals;
            let mut train = real.clone();
            train.extend(&contrast)?;
            let labels: Vec<usize> = (0..train.n).map(|i| usize::from(i >= real.n)).collect();
            let arch = ClassifierArch::of_kind(cfg.fid.classifier, real.channels, real.len);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.fid.seed);
            let mut clf = Classifier::build(&arch, cfg.fid.init_std, &mut rng)?;
            let hist = train_classifier(&mut clf, &train, &labels, &cfg.fid.train, &mut rng)?;
            log::info!("feature classifier training accuracy {:.3}", hist.accuracy.last().copied().unwrap_or(0.0));
            let saved = SavedClassifier { format: CLASSIFIER_FORMAT.into(), arch, params: clf.params.flatten() };
            write_json(&out.join(CLASSIFIER_FILE), &saved)?;
            clf
        }
        (None, None) => return Err(CliError::Usage("eval-fid needs --contrast or --classifier".into())),
    };
    let noise = noise_like(&real, cfg.fid.seed.wrapping_add(1));
    let f_real = extract_features(&clf, &real)?;
    let rows = vec![
        FidRow { pair: "real-vs-real".into(), report: fid(&f_real, &f_real)? },
        FidRow { pair: "real-vs-generated".into(), report: fid(&f_real, &extract_features(&clf, &generated)?)? },
        FidRow { pair: "real-vs-noise".into(), report: fid(&f_real, &extract_features(&clf, &noise)?)? },
    ];
    let mut csv = String::from("pair,fid,mean_term,trace_term,dim,n_a,n_b\n");
    for r in &rows {
        let f = &r.report;
        csv.push_str(&format!(
            "{},{:e},{:e},{:e},{},{},{}\n",
            r.pair, f.value, f.mean_term, f.trace_term, f.dim, f.n_a, f.n_b
        ));
        println!("{:<18} {:.6e}", r.pair, f.value);
    }
    write(&out.join("fid.csv"), csv)?;
    write_json(&out.join("fid.json"), &rows)
}

fn eval_topomap(cfg: &RunConfig, out: &Path, data: &Path) -> Result<(), CliError> {
    let a = DatasetArchive::load(data)?;
    let t = &cfg.topomap;
    let metric = match t.metric.as_str() {
        "rms" => TopoMetric::Rms,
        _ => TopoMetric::BandPower { lo: t.lo, hi: t.hi, welch: cfg.welch },
    };
    let grid = topomap(&a.signals, &a.manifest.labels, &metric, t.size)?;
    write_json(&out.join("topomap.json"), &grid)?;
    write(&out.join("topomap.svg"), grid.to_svg())?;
    println!("topomap: {} electrodes, range [{:.4e}, {:.4e}]", grid.labels.len(), grid.bounds.0, grid.bounds.1);
    Ok(())
}

#[derive(Serialize)]
struct BandRow {
    dataset: String,
    channel: String,
    powers: Vec<f64>,
}

fn eval_bands(cfg: &RunConfig, out: &Path, data: &[PathBuf]) -> Result<(), CliError> {
    let mut rows = Vec::new();
    for path in data {
        let a = load_with_fs(cfg, path)?;
        let name = path.file_name().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        let psds = channel_psd(&a.signals, &cfg.welch)?;
        let top = *psds[0].freqs.last().expect("non-empty grid");
        let powers = |psd: &PsdEstimate| -> Result<Vec<f64>, CliError> {
            BANDS
                .iter()
                .map(|(_, (lo, hi))| if *lo >= top { Ok(f64::NAN) } else { Ok(band_power(psd, *lo, hi.min(top))?) })
                .collect()
        };
        let per: Vec<Vec<f64>> = psds.iter().map(powers).collect::<Result<_, _>>()?;
        for (label, p) in a.manifest.labels.iter().zip(&per) {
            rows.push(BandRow { dataset: name.clone(), channel: label.clone(), powers: p.clone() });
        }
        for (group, members) in [("occipital", OCCIPITAL), ("frontal", FRONTAL)] {
            let idx: Vec<usize> = a
                .manifest
                .labels
                .iter()
                .enumerate()
                .filter(|(_, l)| members.iter().any(|m| normalize_label(m) == normalize_label(l)))
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                continue;
            }
            let mean: Vec<f64> =
                (0..BANDS.len()).map(|b| idx.iter().map(|&i| per[i][b]).sum::<f64>() / idx.len() as f64).collect();
            println!("{name} {group}: alpha {:.4e}", mean[2]);
            rows.push(BandRow { dataset: name.clone(), channel: group.into(), powers: mean });
        }
    }
    let mut csv = String::from("dataset,channel");
    for (band, _) in BANDS {
        csv.push(',');
        csv.push_str(band);
    }
    csv.push('\n');
    for r in &rows {
        csv.push_str(&format!("{},{}", r.dataset, r.channel));
        for p in &r.powers {
            csv.push_str(&format!(",{p:e}"));
        }
        csv.push('\n');
    }
    write(&out.join("bands.csv"), csv)?;
    write_json(&out.join("bands.json"), &rows)
}

fn bench(cfg: &RunConfig, out: &Path, paths: [&PathBuf; 4]) -> Result<(), CliError> {
    let [ro, rc, go, gc] = paths.map(|p| DatasetArchive::load(p).map(|a| a.signals));
    let data = BenchData { real_open: ro?, real_closed: rc?, gen_open: go?, gen_closed: gc? };
    let report = augmentation_bench(&data, &cfg.bench)?;
    let csv = report.to_csv();
    write(&out.join("bench.csv"), &csv)?;
    write_json(&out.join("bench.json"), &report)?;
    print!("{csv}");
    Ok(())
}

fn gradcheck_cmd(cfg: &RunConfig, out: Option<&Path>, configs: usize, fault: Option<&str>) -> Result<(), CliError> {
    match fault {
        None => {}
        Some("conv1d") => eegwgan::tensor::fault::set_conv1d_backward_fault(true),
        Some(other) => return Err(CliError::Usage(format!("unknown fault {other:?} (conv1d)"))),
    }
    if configs == 0 {
        return Err(CliError::Usage("--configs must be at least 1".into()));
    }
    let report = gradcheck::run_suite(cfg.train.seed, configs);
    eegwgan::tensor::fault::set_conv1d_backward_fault(false);
    print!("{}", report.summary_table());
    if let Some(out) = out {
        cfg.write_snapshot(out)?;
        write_json(&out.join("gradcheck.json"), &report)?;
    }
    let failures: Vec<String> = report
        .failures()
        .map(|f| format!("  {} at {}: rel err {:.3e} > {:.0e}", f.op, f.point, f.rel_err, f.tol))
        .collect();
    if failures.is_empty() {
        println!("all {} checks passed", report.results.len());
        Ok(())
    } else {
        Err(CliError::Failure(format!("{} gradient checks failed:\n{}", failures.len(), failures.join("\n"))))
    }
}

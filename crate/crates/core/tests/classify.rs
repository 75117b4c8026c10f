use eegwgan::classify::*;
use eegwgan::metrics::{extract_features, fid};
use eegwgan::synth::{constant_two_class, sine_dataset, SineConfig};
use eegwgan::{Error, Signals};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[test]
fn parameter_counts_follow_layer_sizes() {
    let cnn = Classifier::build(&ClassifierArch::cnn(2, 128), 0.02, &mut rng(0)).unwrap();
    // conv 2→16, conv 16→16, lengths 128 → 63 → 30, dense 480→64, dense 64→2.
    let want = (16 * 2 * 3 + 16) + (16 * 16 * 3 + 16) + (16 * 30 * 64 + 64) + (64 * 2 + 2);
    assert_eq!(cnn.params.count(), want);
    let fnn = Classifier::build(&ClassifierArch::fnn(2, 128), 0.02, &mut rng(0)).unwrap();
    assert_eq!(fnn.params.count(), (256 * 128 + 128) + (128 * 64 + 64) + (64 * 2 + 2));
    assert_eq!(cnn.arch.penultimate_width(), 64);
    assert_eq!(fnn.arch.penultimate_width(), 64);
}

#[test]
fn build_is_seeded() {
    let arch = ClassifierArch::cnn(2, 64);
    let a = Classifier::build(&arch, 0.02, &mut rng(1)).unwrap();
    assert_eq!(a, Classifier::build(&arch, 0.02, &mut rng(1)).unwrap());
    assert_ne!(a, Classifier::build(&arch, 0.02, &mut rng(2)).unwrap());
    assert!(Classifier::build(&ClassifierArch::cnn(2, 5), 0.02, &mut rng(1)).is_err());
}

fn toy() -> (Signals, Vec<usize>) {
    constant_two_class(16, 2, 32, 3).unwrap()
}

#[test]
fn separable_toy_is_learned() {
    let (x, y) = toy();
    for kind in [ClassifierKind::Cnn, ClassifierKind::Fnn] {
        let mut clf = Classifier::build(&ClassifierArch::of_kind(kind, 2, 32), 0.1, &mut rng(4)).unwrap();
        let cfg = ClassifierTrainConfig { epochs: 200, batch_size: 8, lr: 1e-3 };
        let hist = train_classifier(&mut clf, &x, &y, &cfg, &mut rng(5)).unwrap();
        assert!(hist.accuracy.contains(&1.0), "{kind:?}");
        assert_eq!(evaluate(&clf, &x, &y).unwrap(), 1.0);
        assert!(hist.loss.iter().all(|l| l.is_finite()));
        let ma: Vec<f64> = hist.loss.windows(50).map(|w| w.iter().sum::<f64>() / 50.0).collect();
        assert!(ma.windows(2).all(|w| w[1] <= w[0]), "{kind:?} moving average rose");
    }
}

#[test]
fn untrained_is_at_chance() {
    let mut cfg = SineConfig { n: 200, channels: 2, len: 64, seed: 9, ..Default::default() };
    let a = sine_dataset(&cfg).unwrap();
    cfg.freq = 20.0;
    cfg.seed = 10;
    let mut x = a.clone();
    x.extend(&sine_dataset(&cfg).unwrap()).unwrap();
    let y: Vec<usize> = (0..400).map(|i| usize::from(i >= 200)).collect();
    let clf = Classifier::build(&ClassifierArch::cnn(2, 64), 0.02, &mut rng(0)).unwrap();
    let acc = evaluate(&clf, &x, &y).unwrap();
    assert!((acc - 0.5).abs() <= 0.1, "{acc}");
}

#[test]
fn evaluate_properties() {
    let (x, y) = toy();
    let mut clf = Classifier::build(&ClassifierArch::fnn(2, 32), 0.1, &mut rng(4)).unwrap();
    let cfg = ClassifierTrainConfig { epochs: 3, batch_size: 8, lr: 1e-3 };
    train_classifier(&mut clf, &x, &y, &cfg, &mut rng(5)).unwrap();
    let acc = evaluate(&clf, &x, &y).unwrap();
    let flipped: Vec<usize> = y.iter().map(|l| 1 - l).collect();
    assert_eq!(evaluate(&clf, &x, &flipped).unwrap(), 1.0 - acc);
    let perm: Vec<usize> = (0..x.n).rev().collect();
    let py: Vec<usize> = perm.iter().map(|&i| y[i]).collect();
    assert_eq!(evaluate(&clf, &x.select(&perm), &py).unwrap(), acc);
    let pred = clf.predict(&x).unwrap();
    assert_eq!(evaluate(&clf, &x, &pred).unwrap(), 1.0);
    assert!(evaluate(&clf, &Signals::empty(2, 32), &[]).is_err());
    assert!(evaluate(&clf, &x, &y[1..]).is_err());
}

#[test]
fn training_input_errors() {
    let (x, y) = toy();
    let mut clf = Classifier::build(&ClassifierArch::cnn(2, 32), 0.02, &mut rng(0)).unwrap();
    let cfg = ClassifierTrainConfig::default();
    assert!(matches!(train_classifier(&mut clf, &x, &vec![0; x.n], &cfg, &mut rng(1)), Err(Error::InvalidInput(_))));
    assert!(train_classifier(&mut clf, &x, &vec![2; x.n], &cfg, &mut rng(1)).is_err());
    let wrong = Signals::new(vec![0.0; 2 * 3 * 32], 2, 3, 32).unwrap();
    assert!(matches!(train_classifier(&mut clf, &wrong, &[0, 1], &cfg, &mut rng(1)), Err(Error::ShapeMismatch(_))));
    assert!(!clf.trained);
    let _ = y;
}

#[test]
fn features_need_training_and_are_per_signal() {
    let (x, y) = toy();
    let mut clf = Classifier::build(&ClassifierArch::cnn(2, 32), 0.1, &mut rng(0)).unwrap();
    assert!(matches!(extract_features(&clf, &x), Err(Error::UntrainedClassifier)));
    train_classifier(&mut clf, &x, &y, &ClassifierTrainConfig { epochs: 2, ..Default::default() }, &mut rng(1))
        .unwrap();
    let twice = x.select(&[3, 3]);
    let f = extract_features(&clf, &twice).unwrap();
    assert_eq!(f.d, clf.arch.penultimate_width());
    assert_eq!(f.row(0), f.row(1));
}

#[test]
fn noise_is_farther_than_perturbed_real_in_feature_space() {
    let real = sine_dataset(&SineConfig { n: 96, len: 64, seed: 1, ..Default::default() }).unwrap();
    let other = sine_dataset(&SineConfig { n: 96, len: 64, freq: 30.0, seed: 2, ..Default::default() }).unwrap();
    let mut x = real.clone();
    x.extend(&other).unwrap();
    let y: Vec<usize> = (0..192).map(|i| usize::from(i >= 96)).collect();
    let mut clf = Classifier::build(&ClassifierArch::cnn(2, 64), 0.1, &mut rng(0)).unwrap();
    train_classifier(&mut clf, &x, &y, &ClassifierTrainConfig { epochs: 10, ..Default::default() }, &mut rng(1))
        .unwrap();

    let mut r = rng(7);
    let perturbed = Signals::new(
        real.data
            .iter()
            .map(|v| v + 0.05 * rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut r))
            .collect(),
        real.n,
        real.channels,
        real.len,
    )
    .unwrap();
    let noise = Signals::new(
        (0..real.data.len())
            .map(|_| rand_distr::Distribution::<f64>::sample(&rand_distr::StandardNormal, &mut r))
            .collect(),
        real.n,
        real.channels,
        real.len,
    )
    .unwrap();
    let fr = extract_features(&clf, &real).unwrap();
    let near = fid(&fr, &extract_features(&clf, &perturbed).unwrap()).unwrap().value;
    let far = fid(&fr, &extract_features(&clf, &noise).unwrap()).unwrap().value;
    assert!(far > 10.0 * near, "noise {far} vs perturbed {near}");
    assert!(fid(&fr, &fr).unwrap().value <= 1e-8);
}

fn bench_data(n_real: usize, n_gen: usize) -> BenchData {
    let set = |n, freq, seed| {
        sine_dataset(&SineConfig { n, len: 32, freq, noise_std: 1.0, seed, ..Default::default() }).unwrap()
    };
    BenchData {
        real_open: set(n_real, 10.0, 1),
        real_closed: set(n_real, 14.0, 2),
        gen_open: set(n_gen, 10.0, 3),
        gen_closed: set(n_gen, 14.0, 4),
    }
}

fn bench_cfg(trials: usize, ratio: f64) -> BenchConfig {
    BenchConfig {
        trials,
        ratio,
        seed: 11,
        init_std: 0.1,
        train: ClassifierTrainConfig { epochs: 5, batch_size: 8, lr: 1e-3 },
        ..Default::default()
    }
}

#[test]
fn zero_ratio_arms_are_identical() {
    let report = augmentation_bench(&bench_data(8, 8), &bench_cfg(4, 0.0)).unwrap();
    for t in &report.trials {
        assert_eq!(t.real_accuracy.to_bits(), t.augmented_accuracy.to_bits());
        assert_eq!(t.n_train_generated, 0);
    }
    for row in &report.rows {
        assert_eq!(row.improvement, 0.0);
    }
}

#[test]
fn report_arithmetic_and_protocol() {
    let report = augmentation_bench(&bench_data(10, 20), &bench_cfg(3, 1.0)).unwrap();
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.trials.len(), 6);
    for row in &report.rows {
        assert!((row.improvement - (row.augmented_accuracy - row.real_accuracy)).abs() <= 1e-12);
        assert!((0.0..=1.0).contains(&row.real_accuracy) && (0.0..=1.0).contains(&row.augmented_accuracy));
        assert_eq!(row.trials, 3);
    }
    for t in &report.trials {
        // 8 of 10 per class train, 2 per class test, generated 1:1.
        assert_eq!((t.n_train_real, t.n_test, t.n_train_generated), (16, 4, 16));
    }
    let csv = report.to_csv();
    assert_eq!(csv.lines().count(), 3);
    assert!(csv.lines().nth(1).unwrap().starts_with("CNN,"));

    let row = BenchRow::new("CNN", &[0.79296], &[0.96526]);
    assert!((row.improvement - 0.1723).abs() <= 1e-12);
}

#[test]
fn bench_is_reproducible_and_schedule_independent() {
    let data = bench_data(8, 8);
    let cfg = bench_cfg(1, 1.0);
    assert_eq!(augmentation_bench(&data, &cfg).unwrap(), augmentation_bench(&data, &cfg).unwrap());
    let cfg = bench_cfg(3, 1.0);
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| augmentation_bench(&data, &cfg)).unwrap();
    let many = pool(3).install(|| augmentation_bench(&data, &cfg)).unwrap();
    assert_eq!(one, many);
}

#[test]
fn bench_input_errors() {
    let mut data = bench_data(8, 8);
    assert!(augmentation_bench(&data, &bench_cfg(1, 2.0)).is_err());
    assert!(augmentation_bench(&data, &BenchConfig { trials: 0, ..bench_cfg(1, 1.0) }).is_err());
    assert!(augmentation_bench(&data, &BenchConfig { split: 1.0, ..bench_cfg(1, 1.0) }).is_err());
    data.gen_open = sine_dataset(&SineConfig { n: 8, len: 16, ..Default::default() }).unwrap();
    assert!(matches!(augmentation_bench(&data, &bench_cfg(1, 1.0)), Err(Error::ShapeMismatch(_))));
    let mut data = bench_data(8, 8);
    data.real_closed = data.real_closed.select(&[0]);
    assert!(augmentation_bench(&data, &bench_cfg(1, 1.0)).is_err());
}

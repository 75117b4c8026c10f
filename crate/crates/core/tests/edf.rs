use eegwgan::edf::{parse_edf, write_edf, EdfFile, EdfHeader, Recording, SignalHeader};
use proptest::prelude::*;

fn ascii(max: usize) -> impl Strategy<Value = String> {
    // Printable ASCII without trailing spaces, which the padding would eat.
    proptest::string::string_regex(&format!("([!-~][ -~]{{0,{}}})?", max.saturating_sub(2)))
        .unwrap()
        .prop_map(|s| s.trim_end().to_string())
}

fn signal() -> impl Strategy<Value = SignalHeader> {
    (ascii(16), ascii(80), ascii(8), -5000i32..0, 1i32..5000, -32768i32..0, 1i32..=32767, ascii(80), 1usize..12)
        .prop_map(|(label, transducer, dim, pmin, pmax, dmin, dmax, prefilter, spr)| SignalHeader {
            label,
            transducer,
            physical_dimension: dim,
            physical_min: f64::from(pmin),
            physical_max: f64::from(pmax),
            digital_min: dmin,
            digital_max: dmax,
            prefilter,
            samples_per_record: spr,
            reserved: String::new(),
        })
}

fn fixture() -> impl Strategy<Value = EdfFile> {
    (prop::collection::vec(signal(), 1..5), 0usize..5, ascii(80), ascii(80), 1u32..10).prop_flat_map(
        |(signals, records, patient, recording, dur)| {
            let samples: Vec<_> = signals
                .iter()
                .map(|s| prop::collection::vec(s.digital_min..=s.digital_max, s.samples_per_record * records))
                .collect();
            let header = EdfHeader {
                version: "0".into(),
                patient_id: patient,
                recording_id: recording,
                start_date: "01.02.03".into(),
                start_time: "04.05.06".into(),
                reserved: String::new(),
                num_records: records,
                record_duration: f64::from(dur) / 2.0,
                signals,
            };
            samples.prop_map(move |d| EdfFile {
                header: header.clone(),
                digital: d.into_iter().map(|v| v.into_iter().map(|x| x as i16).collect()).collect(),
            })
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn digital_round_trip_is_exact(f in fixture()) {
        let bytes = f.to_bytes().unwrap();
        prop_assert_eq!(bytes.len(), f.header.file_bytes());
        let back = EdfFile::parse(&bytes).unwrap();
        prop_assert_eq!(&back, &f);
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }

    #[test]
    fn physical_round_trip_within_one_step(f in fixture()) {
        // Uniform rates are required to decode to a recording.
        let mut f = f;
        let spr = f.header.signals[0].samples_per_record;
        for (s, d) in f.header.signals.iter_mut().zip(&mut f.digital) {
            s.samples_per_record = spr;
            d.resize(spr * f.header.num_records, s.digital_min as i16);
        }
        let bytes = f.to_bytes().unwrap();
        let (h, rec) = parse_edf(&bytes).unwrap();
        for ((s, d), x) in h.signals.iter().zip(&f.digital).zip(&rec.data) {
            for (&di, &xi) in d.iter().zip(x) {
                let oracle = (f64::from(di) - f64::from(s.digital_min)) / f64::from(s.digital_max - s.digital_min)
                    * (s.physical_max - s.physical_min)
                    + s.physical_min;
                prop_assert!((xi - oracle).abs() <= 1e-9 * s.gain().abs().max(1.0));
            }
        }
        // Re-quantizing the decoded values lands on the same digital samples.
        prop_assert_eq!(write_edf(&h, &rec).unwrap(), bytes);
    }

    #[test]
    fn conversion_is_affine(a in -3i32..4, b in -1000i32..1000, s in signal()) {
        let dmin = f64::from(s.digital_min);
        for d in [-2i32, 0, 5, 17] {
            let v = a * d + b;
            if v < s.digital_min || v > s.digital_max {
                continue;
            }
            let got = s.to_physical(v as i16);
            let want = s.physical_min + (f64::from(v) - dmin) * s.gain();
            prop_assert_eq!(got, want);
        }
    }

    #[test]
    fn mutated_files_never_panic(f in fixture(), edits in prop::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8), cut in any::<prop::sample::Index>()) {
        let mut bytes = f.to_bytes().unwrap();
        for (i, b) in edits {
            let at = i.index(bytes.len());
            bytes[at] = b;
        }
        let _ = parse_edf(&bytes);
        let end = cut.index(bytes.len() + 1);
        let _ = parse_edf(&bytes[..end]);
    }

    #[test]
    fn header_field_garbage_is_a_structured_error(f in fixture(), field in 0usize..256, junk in "[A-Za-z]{1,8}") {
        let mut bytes = f.to_bytes().unwrap();
        // Overwrite an 8-byte window of the fixed header numbers.
        let at = 168 + field % 68;
        let end = (at + junk.len()).min(256);
        bytes[at..end].copy_from_slice(&junk.as_bytes()[..end - at]);
        let _ = EdfFile::parse(&bytes).map_err(|e| e.to_string());
    }

    #[test]
    fn random_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..2048)) {
        let _ = EdfFile::parse(&bytes);
    }
}

#[test]
fn numeric_garbage_in_counts_is_rejected() {
    let f = EdfFile {
        header: EdfHeader {
            version: "0".into(),
            patient_id: String::new(),
            recording_id: String::new(),
            start_date: "01.01.01".into(),
            start_time: "00.00.00".into(),
            reserved: String::new(),
            num_records: 1,
            record_duration: 1.0,
            signals: vec![SignalHeader {
                label: "Cz".into(),
                transducer: String::new(),
                physical_dimension: "uV".into(),
                physical_min: -1.0,
                physical_max: 1.0,
                digital_min: -10,
                digital_max: 10,
                prefilter: String::new(),
                samples_per_record: 2,
                reserved: String::new(),
            }],
        },
        digital: vec![vec![1, 2]],
    };
    let good = f.to_bytes().unwrap();
    for (at, text) in [(236usize, "x       "), (244, "0       "), (252, "0   "), (252, "99  ")] {
        let mut bytes = good.clone();
        bytes[at..at + text.len()].copy_from_slice(text.as_bytes());
        assert!(EdfFile::parse(&bytes).is_err(), "{text:?} at {at}");
    }
    let mut bad = good.clone();
    bad[10] = 0x07;
    match EdfFile::parse(&bad) {
        Err(e) => assert!(e.to_string().contains("byte 10")),
        Ok(_) => panic!("control byte accepted"),
    }
    let rec =
        Recording { data: vec![vec![0.0; 2]], fs: 2.0, labels: vec!["Cz".into()], condition: None, subject: None };
    assert!(write_edf(&f.header, &rec).is_ok());
}

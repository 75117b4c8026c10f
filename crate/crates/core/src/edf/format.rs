use thiserror::Error;

pub const ANNOTATION_LABEL: &str = "EDF Annotations";

const FIXED_HEADER: usize = 256;
const PER_SIGNAL: usize = 256;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EdfError {
    #[error("truncated at byte {offset}: need {needed} bytes, file has {available}")]
    Truncated { offset: usize, needed: usize, available: usize },
    #[error("byte {offset}: field `{field}` = {value:?}: {reason}")]
    Field { offset: usize, field: &'static str, value: String, reason: String },
    #[error("byte {offset}: data section holds {got} bytes, header implies {expected}")]
    DataLength { offset: usize, expected: usize, got: usize },
    #[error("signal {signal} sample {index}: value {value} maps to digital {digital}, outside [{min}, {max}]")]
    OutOfRange { signal: usize, index: usize, value: f64, digital: f64, min: i32, max: i32 },
    #[error("signal {signal}: {reason}")]
    Layout { signal: usize, reason: String },
}

/// Per-signal header fields.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dimension: String,
    pub physical_min: f64,
    pub physical_max: f64,
    pub digital_min: i32,
    pub digital_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalHeader {
    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }

    /// Physical units per digital step.
    pub fn gain(&self) -> f64 {
        (self.physical_max - self.physical_min) / f64::from(self.digital_max - self.digital_min)
    }

    pub fn to_physical(&self, d: i16) -> f64 {
        self.physical_min + (f64::from(d) - f64::from(self.digital_min)) * self.gain()
    }

    /// Inverse of [`to_physical`](Self::to_physical), rounded to the nearest
    /// digital value; `None` when the result leaves the digital range.
    pub fn to_digital(&self, p: f64) -> Option<i16> {
        let d = ((p - self.physical_min) / self.gain() + f64::from(self.digital_min)).round();
        (d >= f64::from(self.digital_min) && d <= f64::from(self.digital_max)).then_some(d as i16)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    /// `dd.mm.yy`
    pub start_date: String,
    /// `hh.mm.ss`
    pub start_time: String,
    pub reserved: String,
    pub num_records: usize,
    /// Seconds per data record.
    pub record_duration: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    pub fn header_bytes(&self) -> usize {
        FIXED_HEADER + PER_SIGNAL * self.signals.len()
    }

    pub fn record_bytes(&self) -> usize {
        2 * self.signals.iter().map(|s| s.samples_per_record).sum::<usize>()
    }

    pub fn file_bytes(&self) -> usize {
        self.header_bytes() + self.num_records * self.record_bytes()
    }

    /// Sampling rate of signal `i`.
    pub fn sample_rate(&self, i: usize) -> f64 {
        self.signals[i].samples_per_record as f64 / self.record_duration
    }
}

/// Header plus raw digital samples, one vector per signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfFile {
    pub header: EdfHeader,
    pub digital: Vec<Vec<i16>>,
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<(usize, &'a [u8]), EdfError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(EdfError::Truncated {
            offset: self.pos,
            needed: n,
            available: self.bytes.len(),
        })?;
        let at = self.pos;
        self.pos = end;
        Ok((at, &self.bytes[at..end]))
    }

    fn text(&mut self, n: usize, field: &'static str) -> Result<(usize, String), EdfError> {
        let (at, raw) = self.take(n)?;
        if let Some(i) = raw.iter().position(|b| !(0x20..=0x7e).contains(b)) {
            return Err(EdfError::Field {
                offset: at + i,
                field,
                value: String::from_utf8_lossy(raw).into_owned(),
                reason: format!("non-printable byte 0x{:02x}", raw[i]),
            });
        }
        let s = std::str::from_utf8(raw).expect("printable ASCII");
        Ok((at, s.trim_end_matches(' ').to_string()))
    }

    fn number<T: std::str::FromStr>(&mut self, n: usize, field: &'static str) -> Result<(usize, T), EdfError> {
        let (at, s) = self.text(n, field)?;
        let v = s.trim().parse().map_err(|_| EdfError::Field {
            offset: at,
            field,
            value: s.clone(),
            reason: "not a number".into(),
        })?;
        Ok((at, v))
    }
}

fn field_err(offset: usize, field: &'static str, value: impl ToString, reason: impl Into<String>) -> EdfError {
    EdfError::Field { offset, field, value: value.to_string(), reason: reason.into() }
}

impl EdfFile {
    pub fn parse(bytes: &[u8]) -> Result<Self, EdfError> {
        let mut c = Cursor { bytes, pos: 0 };
        let (_, version) = c.text(8, "version")?;
        let (_, patient_id) = c.text(80, "patient id")?;
        let (_, recording_id) = c.text(80, "recording id")?;
        let (_, start_date) = c.text(8, "start date")?;
        let (_, start_time) = c.text(8, "start time")?;
        let (hb_at, header_bytes): (usize, usize) = c.number(8, "header bytes")?;
        let (_, reserved) = c.text(44, "reserved")?;
        let (nr_at, num_records): (usize, i64) = c.number(8, "number of data records")?;
        let (dur_at, record_duration): (usize, f64) = c.number(8, "record duration")?;
        let (ns_at, ns): (usize, usize) = c.number(4, "number of signals")?;

        if !(record_duration.is_finite() && record_duration > 0.0) {
            return Err(field_err(dur_at, "record duration", record_duration, "must be positive"));
        }
        if ns == 0 {
            return Err(field_err(ns_at, "number of signals", ns, "must be positive"));
        }
        let expected = ns
            .checked_mul(PER_SIGNAL)
            .and_then(|v| v.checked_add(FIXED_HEADER))
            .ok_or_else(|| field_err(ns_at, "number of signals", ns, "too large"))?;
        if header_bytes != expected {
            return Err(field_err(
                hb_at,
                "header bytes",
                header_bytes,
                format!("expected 256 + 256*{ns} = {expected}"),
            ));
        }
        if bytes.len() < expected {
            return Err(EdfError::Truncated { offset: bytes.len(), needed: expected, available: bytes.len() });
        }

        // Per-signal fields are stored column-wise: all labels, then all
        // transducers, and so on.
        let mut col = |n: usize, field: &'static str| -> Result<Vec<(usize, String)>, EdfError> {
            (0..ns).map(|_| c.text(n, field)).collect()
        };
        let labels = col(16, "label")?;
        let transducers = col(80, "transducer")?;
        let dims = col(8, "physical dimension")?;
        let pmins = col(8, "physical minimum")?;
        let pmaxs = col(8, "physical maximum")?;
        let dmins = col(8, "digital minimum")?;
        let dmaxs = col(8, "digital maximum")?;
        let prefilters = col(80, "prefiltering")?;
        let sprs = col(8, "samples per record")?;
        let reserveds = col(32, "signal reserved")?;

        fn num<T: std::str::FromStr>((at, s): &(usize, String), field: &'static str) -> Result<T, EdfError> {
            s.trim().parse().map_err(|_| field_err(*at, field, s, "not a number"))
        }
        let mut signals = Vec::with_capacity(ns);
        for i in 0..ns {
            let physical_min: f64 = num(&pmins[i], "physical minimum")?;
            let physical_max: f64 = num(&pmaxs[i], "physical maximum")?;
            let digital_min: i32 = num(&dmins[i], "digital minimum")?;
            let digital_max: i32 = num(&dmaxs[i], "digital maximum")?;
            let samples_per_record: usize = num(&sprs[i], "samples per record")?;
            if !(physical_min.is_finite() && physical_max.is_finite() && physical_max > physical_min) {
                return Err(field_err(
                    pmaxs[i].0,
                    "physical maximum",
                    physical_max,
                    format!("must exceed physical minimum {physical_min}"),
                ));
            }
            let i16_range = i32::from(i16::MIN)..=i32::from(i16::MAX);
            if !i16_range.contains(&digital_min) || !i16_range.contains(&digital_max) {
                return Err(field_err(dmins[i].0, "digital minimum", digital_min, "digital range exceeds 16 bits"));
            }
            if digital_max <= digital_min {
                return Err(field_err(
                    dmaxs[i].0,
                    "digital maximum",
                    digital_max,
                    format!("must exceed digital minimum {digital_min}"),
                ));
            }
            signals.push(SignalHeader {
                label: labels[i].1.clone(),
                transducer: transducers[i].1.clone(),
                physical_dimension: dims[i].1.clone(),
                physical_min,
                physical_max,
                digital_min,
                digital_max,
                prefilter: prefilters[i].1.clone(),
                samples_per_record,
                reserved: reserveds[i].1.clone(),
            });
        }

        let mut header = EdfHeader {
            version,
            patient_id,
            recording_id,
            start_date,
            start_time,
            reserved,
            num_records: 0,
            record_duration,
            signals,
        };
        let record_bytes = header.record_bytes();
        let data = &bytes[expected..];
        header.num_records = match num_records {
            // -1 marks an unfinished recording; infer the count from the size.
            -1 if record_bytes > 0 && data.len().is_multiple_of(record_bytes) => data.len() / record_bytes,
            n if n >= 0 => n as usize,
            n => return Err(field_err(nr_at, "number of data records", n, "must be non-negative")),
        };
        let want = header
            .num_records
            .checked_mul(record_bytes)
            .ok_or_else(|| field_err(nr_at, "number of data records", num_records, "too large"))?;
        if data.len() != want {
            if data.len() < want {
                return Err(EdfError::Truncated {
                    offset: bytes.len(),
                    needed: expected + want,
                    available: bytes.len(),
                });
            }
            return Err(EdfError::DataLength { offset: expected, expected: want, got: data.len() });
        }

        let mut digital: Vec<Vec<i16>> =
            header.signals.iter().map(|s| Vec::with_capacity(s.samples_per_record * header.num_records)).collect();
        let mut words = data.chunks_exact(2).map(|w| i16::from_le_bytes([w[0], w[1]]));
        for _ in 0..header.num_records {
            for (s, out) in header.signals.iter().zip(&mut digital) {
                out.extend(words.by_ref().take(s.samples_per_record));
            }
        }
        Ok(EdfFile { header, digital })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>, EdfError> {
        let h = &self.header;
        if self.digital.len() != h.signals.len() {
            return Err(EdfError::Layout {
                signal: self.digital.len().min(h.signals.len()),
                reason: format!("{} sample vectors for {} signals", self.digital.len(), h.signals.len()),
            });
        }
        for (i, (s, d)) in h.signals.iter().zip(&self.digital).enumerate() {
            if d.len() != s.samples_per_record * h.num_records {
                return Err(EdfError::Layout {
                    signal: i,
                    reason: format!("{} samples, header implies {}", d.len(), s.samples_per_record * h.num_records),
                });
            }
            if let Some((j, &v)) =
                d.iter().enumerate().find(|(_, &v)| i32::from(v) < s.digital_min || i32::from(v) > s.digital_max)
            {
                return Err(EdfError::OutOfRange {
                    signal: i,
                    index: j,
                    value: f64::from(v),
                    digital: f64::from(v),
                    min: s.digital_min,
                    max: s.digital_max,
                });
            }
        }
        let mut out = Vec::with_capacity(h.file_bytes());
        let mut put = |s: &str, n: usize, field: &'static str| -> Result<(), EdfError> {
            if s.len() > n || !s.bytes().all(|b| (0x20..=0x7e).contains(&b)) {
                return Err(field_err(out.len(), field, s, format!("must be printable ASCII of at most {n} bytes")));
            }
            out.extend_from_slice(s.as_bytes());
            out.resize(out.len() + n - s.len(), b' ');
            Ok(())
        };
        put(&h.version, 8, "version")?;
        put(&h.patient_id, 80, "patient id")?;
        put(&h.recording_id, 80, "recording id")?;
        put(&h.start_date, 8, "start date")?;
        put(&h.start_time, 8, "start time")?;
        put(&h.header_bytes().to_string(), 8, "header bytes")?;
        put(&h.reserved, 44, "reserved")?;
        put(&h.num_records.to_string(), 8, "number of data records")?;
        put(&format_number(h.record_duration), 8, "record duration")?;
        put(&h.signals.len().to_string(), 4, "number of signals")?;
        let sig = &h.signals;
        for s in sig {
            put(&s.label, 16, "label")?;
        }
        for s in sig {
            put(&s.transducer, 80, "transducer")?;
        }
        for s in sig {
            put(&s.physical_dimension, 8, "physical dimension")?;
        }
        for s in sig {
            put(&format_number(s.physical_min), 8, "physical minimum")?;
        }
        for s in sig {
            put(&format_number(s.physical_max), 8, "physical maximum")?;
        }
        for s in sig {
            put(&s.digital_min.to_string(), 8, "digital minimum")?;
        }
        for s in sig {
            put(&s.digital_max.to_string(), 8, "digital maximum")?;
        }
        for s in sig {
            put(&s.prefilter, 80, "prefiltering")?;
        }
        for s in sig {
            put(&s.samples_per_record.to_string(), 8, "samples per record")?;
        }
        for s in sig {
            put(&s.reserved, 32, "signal reserved")?;
        }
        for r in 0..h.num_records {
            for (s, d) in sig.iter().zip(&self.digital) {
                let n = s.samples_per_record;
                for v in &d[r * n..(r + 1) * n] {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        Ok(out)
    }
}

/// Shortest decimal text for `v`, trimmed to fit an 8-byte field.
fn format_number(v: f64) -> String {
    let s = v.to_string();
    if s.len() <= 8 {
        return s;
    }
    for prec in (0..8).rev() {
        let t = format!("{v:.prec$}");
        if t.len() <= 8 {
            return t;
        }
    }
    s
}

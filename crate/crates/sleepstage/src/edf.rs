//! EDF (European Data Format) parsing and writing.
//!
//! EDF files carry a fixed-width ASCII header (256 bytes plus 256 per
//! signal) followed by data records of little-endian 16-bit samples. Only
//! plain EDF is handled; the target dataset predates EDF+ and its
//! hypnograms arrive as separate text files (see [`crate::hypnogram`]).
//!
//! Parsing is a pure function over a byte buffer, so files can be processed
//! in parallel without coordination.

use crate::recording::{Channel, Recording};
use chrono::{NaiveDate, NaiveDateTime, NaiveTime};
use thiserror::Error;

/// Fixed part of the header, before the per-signal arrays.
const FIXED_HEADER_LEN: usize = 256;
/// Header bytes contributed by each signal.
const PER_SIGNAL_LEN: usize = 256;

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("truncated header: need {needed} bytes, have {have}")]
    TruncatedHeader { needed: usize, have: usize },
    #[error("malformed header field {field}: {detail}")]
    MalformedField { field: &'static str, detail: String },
    #[error("unsupported EDF version tag {0:?} (expected \"0\")")]
    VersionMismatch(String),
    #[error("channel {0:?} not present in file")]
    MissingChannel(String),
    #[error("truncated data: header declares {expected} records, data holds {actual}")]
    TruncatedData { expected: usize, actual: usize },
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

/// Per-signal header entry.
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
}

impl SignalHeader {
    /// Sample rate in Hz given the record duration.
    pub fn sample_rate(&self, record_duration: f64) -> f64 {
        self.samples_per_record as f64 / record_duration
    }

    /// Linear digital→physical map implied by the min/max fields.
    pub fn to_physical(&self, digital: i16) -> f64 {
        let scale = (self.physical_max - self.physical_min)
            / (self.digital_max - self.digital_min) as f64;
        self.physical_min + (digital as i32 - self.digital_min) as f64 * scale
    }
}

/// Decoded EDF header.
#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_datetime: NaiveDateTime,
    pub header_bytes: usize,
    pub n_records: usize,
    pub record_duration: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    /// Bytes occupied by one data record.
    pub fn record_len_bytes(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }

    /// Total recording duration in seconds.
    pub fn duration_seconds(&self) -> f64 {
        self.n_records as f64 * self.record_duration
    }
}

fn field<'a>(bytes: &'a [u8], start: usize, len: usize) -> &'a str {
    std::str::from_utf8(&bytes[start..start + len])
        .unwrap_or("")
        .trim()
}

fn parse_int(bytes: &[u8], start: usize, len: usize, name: &'static str) -> Result<i64, EdfError> {
    let text = field(bytes, start, len);
    text.parse::<i64>().map_err(|_| EdfError::MalformedField {
        field: name,
        detail: format!("expected integer, got {text:?}"),
    })
}

fn parse_float(bytes: &[u8], start: usize, len: usize, name: &'static str) -> Result<f64, EdfError> {
    let text = field(bytes, start, len);
    text.parse::<f64>().map_err(|_| EdfError::MalformedField {
        field: name,
        detail: format!("expected number, got {text:?}"),
    })
}

fn parse_start_datetime(date: &str, time: &str) -> Result<NaiveDateTime, EdfError> {
    let malformed = |detail: String| EdfError::MalformedField {
        field: "start datetime",
        detail,
    };
    let dparts: Vec<&str> = date.split('.').collect();
    let tparts: Vec<&str> = time.split('.').collect();
    if dparts.len() != 3 || tparts.len() != 3 {
        return Err(malformed(format!("got {date:?} {time:?}")));
    }
    let num = |s: &str| s.parse::<u32>().map_err(|_| malformed(format!("got {date:?} {time:?}")));
    let (day, month, yy) = (num(dparts[0])?, num(dparts[1])?, num(dparts[2])?);
    // EDF two-digit year clipping: 85..99 → 1985..1999, else 2000..2084.
    let year = if yy >= 85 { 1900 + yy } else { 2000 + yy } as i32;
    let date = NaiveDate::from_ymd_opt(year, month, day)
        .ok_or_else(|| malformed(format!("invalid date {day}.{month}.{yy}")))?;
    let (h, m, s) = (num(tparts[0])?, num(tparts[1])?, num(tparts[2])?);
    let time = NaiveTime::from_hms_opt(h, m, s)
        .ok_or_else(|| malformed(format!("invalid time {h}.{m}.{s}")))?;
    Ok(NaiveDateTime::new(date, time))
}

/// Parse an EDF header from the start of a file.
///
/// `bytes` must cover the whole header region (256 + 256·n_signals bytes);
/// passing the full file is fine.
pub fn parse_edf_header(bytes: &[u8]) -> Result<EdfHeader, EdfError> {
    if bytes.len() < FIXED_HEADER_LEN {
        return Err(EdfError::TruncatedHeader {
            needed: FIXED_HEADER_LEN,
            have: bytes.len(),
        });
    }

    let version = field(bytes, 0, 8).to_string();
    if version != "0" {
        return Err(EdfError::VersionMismatch(version));
    }
    let patient_id = field(bytes, 8, 80).to_string();
    let recording_id = field(bytes, 88, 80).to_string();
    let start_datetime = parse_start_datetime(field(bytes, 168, 8), field(bytes, 176, 8))?;
    let header_bytes = parse_int(bytes, 184, 8, "header bytes")?;
    let n_records = parse_int(bytes, 236, 8, "number of data records")?;
    let record_duration = parse_float(bytes, 244, 8, "record duration")?;
    let n_signals = parse_int(bytes, 252, 4, "number of signals")?;

    if n_signals <= 0 {
        return Err(EdfError::MalformedField {
            field: "number of signals",
            detail: format!("must be positive, got {n_signals}"),
        });
    }
    let n_signals = n_signals as usize;
    let expected_header = FIXED_HEADER_LEN + PER_SIGNAL_LEN * n_signals;
    if header_bytes != expected_header as i64 {
        return Err(EdfError::MalformedField {
            field: "header bytes",
            detail: format!("declared {header_bytes}, expected {expected_header}"),
        });
    }
    if bytes.len() < expected_header {
        return Err(EdfError::TruncatedHeader {
            needed: expected_header,
            have: bytes.len(),
        });
    }
    if n_records < 0 {
        return Err(EdfError::MalformedField {
            field: "number of data records",
            detail: format!("must be non-negative, got {n_records}"),
        });
    }
    if record_duration <= 0.0 {
        return Err(EdfError::MalformedField {
            field: "record duration",
            detail: format!("must be positive, got {record_duration}"),
        });
    }

    // Per-signal fields are stored as arrays: all labels, all transducers, ...
    let base = FIXED_HEADER_LEN;
    let ns = n_signals;
    let mut signals = Vec::with_capacity(ns);
    for i in 0..ns {
        let label = field(bytes, base + 16 * i, 16).to_string();
        let transducer = field(bytes, base + 16 * ns + 80 * i, 80).to_string();
        let physical_dimension = field(bytes, base + 96 * ns + 8 * i, 8).to_string();
        let physical_min = parse_float(bytes, base + 104 * ns + 8 * i, 8, "physical minimum")?;
        let physical_max = parse_float(bytes, base + 112 * ns + 8 * i, 8, "physical maximum")?;
        let digital_min = parse_int(bytes, base + 120 * ns + 8 * i, 8, "digital minimum")?;
        let digital_max = parse_int(bytes, base + 128 * ns + 8 * i, 8, "digital maximum")?;
        let prefilter = field(bytes, base + 136 * ns + 80 * i, 80).to_string();
        let samples_per_record =
            parse_int(bytes, base + 216 * ns + 8 * i, 8, "samples per record")?;

        if physical_max <= physical_min {
            return Err(EdfError::MalformedField {
                field: "physical min/max",
                detail: format!(
                    "signal {label:?}: physical_max ({physical_max}) must exceed physical_min ({physical_min})"
                ),
            });
        }
        if digital_max <= digital_min {
            return Err(EdfError::MalformedField {
                field: "digital min/max",
                detail: format!(
                    "signal {label:?}: digital_max ({digital_max}) must exceed digital_min ({digital_min})"
                ),
            });
        }
        if samples_per_record <= 0 {
            return Err(EdfError::MalformedField {
                field: "samples per record",
                detail: format!("signal {label:?}: must be positive, got {samples_per_record}"),
            });
        }

        signals.push(SignalHeader {
            label,
            transducer,
            physical_dimension,
            physical_min,
            physical_max,
            digital_min: digital_min as i32,
            digital_max: digital_max as i32,
            prefilter,
            samples_per_record: samples_per_record as usize,
        });
    }

    Ok(EdfHeader {
        version,
        patient_id,
        recording_id,
        start_datetime,
        header_bytes: expected_header,
        n_records: n_records as usize,
        record_duration,
        signals,
    })
}

fn normalize_label(label: &str) -> String {
    label.trim().to_ascii_lowercase()
}

/// Read the wanted channels out of the data-record region of an EDF file.
///
/// `data` is the byte region after the header. Channel name matching is
/// case-insensitive and whitespace-trimmed; when duplicate labels exist the
/// first match wins (real files contain duplicate montage labels) and a
/// warning is logged. Digital samples are converted to physical units and
/// channels are returned in the requested order.
pub fn read_recording(
    header: &EdfHeader,
    data: &[u8],
    wanted: &[&str],
) -> Result<Recording, EdfError> {
    let record_len = header.record_len_bytes();
    let available_records = if record_len == 0 { 0 } else { data.len() / record_len };
    if available_records < header.n_records {
        return Err(EdfError::TruncatedData {
            expected: header.n_records,
            actual: available_records,
        });
    }

    // Resolve wanted names to signal indices, first match wins.
    let mut indices = Vec::with_capacity(wanted.len());
    for name in wanted {
        let target = normalize_label(name);
        let matches: Vec<usize> = header
            .signals
            .iter()
            .enumerate()
            .filter(|(_, s)| normalize_label(&s.label) == target)
            .map(|(i, _)| i)
            .collect();
        match matches.as_slice() {
            [] => return Err(EdfError::MissingChannel(name.to_string())),
            [only] => indices.push(*only),
            [first, ..] => {
                log::warn!(
                    "channel {name:?} matches {} signals; using the first (index {first})",
                    matches.len()
                );
                indices.push(*first);
            }
        }
    }

    // Byte offset of each signal's block inside a record.
    let mut offsets = Vec::with_capacity(header.signals.len());
    let mut off = 0usize;
    for s in &header.signals {
        offsets.push(off);
        off += s.samples_per_record * 2;
    }

    let mut channels = Vec::with_capacity(indices.len());
    for (&sig_idx, name) in indices.iter().zip(wanted) {
        let sig = &header.signals[sig_idx];
        let mut samples = Vec::with_capacity(sig.samples_per_record * header.n_records);
        for rec in 0..header.n_records {
            let start = rec * record_len + offsets[sig_idx];
            for k in 0..sig.samples_per_record {
                let lo = data[start + 2 * k];
                let hi = data[start + 2 * k + 1];
                let digital = i16::from_le_bytes([lo, hi]);
                samples.push(sig.to_physical(digital));
            }
        }
        channels.push(Channel {
            name: name.to_string(),
            samples,
            fs: sig.sample_rate(header.record_duration),
        });
    }

    Ok(Recording {
        subject_id: header.patient_id.clone(),
        channels,
        stages: Vec::new(),
        epoch_seconds: 30,
    })
}

/// Parse header and channels straight from a file on disk.
pub fn read_edf_file(
    path: &std::path::Path,
    wanted: &[&str],
) -> Result<(EdfHeader, Recording), EdfError> {
    let bytes = std::fs::read(path)?;
    let header = parse_edf_header(&bytes)?;
    let recording = read_recording(&header, &bytes[header.header_bytes..], wanted)?;
    Ok((header, recording))
}

fn push_field(out: &mut Vec<u8>, text: &str, width: usize) {
    let mut bytes = text.as_bytes().to_vec();
    bytes.truncate(width);
    bytes.resize(width, b' ');
    out.extend_from_slice(&bytes);
}

fn format_duration(d: f64) -> String {
    if d.fract() == 0.0 {
        format!("{}", d as i64)
    } else {
        format!("{d}")
    }
}

/// Serialize a header back to its fixed-width byte layout.
pub fn write_edf_header(header: &EdfHeader) -> Vec<u8> {
    let ns = header.signals.len();
    let mut out = Vec::with_capacity(FIXED_HEADER_LEN + PER_SIGNAL_LEN * ns);
    push_field(&mut out, &header.version, 8);
    push_field(&mut out, &header.patient_id, 80);
    push_field(&mut out, &header.recording_id, 80);
    let date = header.start_datetime.format("%d.%m.%y").to_string();
    let time = header.start_datetime.format("%H.%M.%S").to_string();
    push_field(&mut out, &date, 8);
    push_field(&mut out, &time, 8);
    push_field(&mut out, &format!("{}", FIXED_HEADER_LEN + PER_SIGNAL_LEN * ns), 8);
    push_field(&mut out, "", 44);
    push_field(&mut out, &format!("{}", header.n_records), 8);
    push_field(&mut out, &format_duration(header.record_duration), 8);
    push_field(&mut out, &format!("{ns}"), 4);

    for s in &header.signals {
        push_field(&mut out, &s.label, 16);
    }
    for s in &header.signals {
        push_field(&mut out, &s.transducer, 80);
    }
    for s in &header.signals {
        push_field(&mut out, &s.physical_dimension, 8);
    }
    for s in &header.signals {
        push_field(&mut out, &format!("{}", s.physical_min), 8);
    }
    for s in &header.signals {
        push_field(&mut out, &format!("{}", s.physical_max), 8);
    }
    for s in &header.signals {
        push_field(&mut out, &format!("{}", s.digital_min), 8);
    }
    for s in &header.signals {
        push_field(&mut out, &format!("{}", s.digital_max), 8);
    }
    for s in &header.signals {
        push_field(&mut out, &s.prefilter, 80);
    }
    for s in &header.signals {
        push_field(&mut out, &format!("{}", s.samples_per_record), 8);
    }
    for _ in &header.signals {
        push_field(&mut out, "", 32);
    }
    out
}

/// Serialize a complete EDF file from a header and per-signal digital
/// samples (`digital[i]` holds signal i's samples for the whole file, in
/// record order). Mainly useful for building fixtures and synthetic data.
pub fn write_edf(header: &EdfHeader, digital: &[Vec<i16>]) -> Result<Vec<u8>, EdfError> {
    assert_eq!(digital.len(), header.signals.len(), "one sample vector per signal");
    for (sig, samples) in header.signals.iter().zip(digital) {
        let expected = sig.samples_per_record * header.n_records;
        if samples.len() != expected {
            return Err(EdfError::MalformedField {
                field: "samples",
                detail: format!(
                    "signal {:?}: expected {expected} samples, got {}",
                    sig.label,
                    samples.len()
                ),
            });
        }
    }
    let mut out = write_edf_header(header);
    for rec in 0..header.n_records {
        for (sig, samples) in header.signals.iter().zip(digital) {
            let spr = sig.samples_per_record;
            for &v in &samples[rec * spr..(rec + 1) * spr] {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    Ok(out)
}

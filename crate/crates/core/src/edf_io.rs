//! EDF and EDF+ file reading and writing.
//!
//! The European Data Format stores a fixed 256-byte ASCII header, one
//! 256-byte ASCII header block per signal, and then data records of 16-bit
//! little-endian two's-complement samples. EDF+ adds an annotation signal
//! (label `EDF Annotations`) carrying time-stamped annotation lists (TALs)
//! delimited by 0x14/0x15 and terminated by 0x00.
//!
//! The reader converts digital samples to physical units with the affine
//! map declared in the header and routes annotation signals to
//! [`AnnotationEvent`]s instead of the data matrix. The writer is the
//! inverse and is used both for test fixtures and for synthetic subjects.

use ndarray::Array2;
use thiserror::Error;

const TAL_DURATION_SEP: u8 = 0x15;
const TAL_FIELD_SEP: u8 = 0x14;
const TAL_TERMINATOR: u8 = 0x00;
const ANNOTATION_LABEL: &str = "EDF Annotations";

#[derive(Debug, Error)]
pub enum EdfError {
    #[error("truncated header: need {need} bytes, have {have}")]
    TruncatedHeader { need: usize, have: usize },
    #[error("field {field:?} is not a valid number: {text:?}")]
    BadNumber { field: &'static str, text: String },
    #[error("header byte count {stated} does not match 256*(n_signals+1) = {expected}")]
    HeaderBytesMismatch { stated: usize, expected: usize },
    #[error("data region too short: need {need} bytes, have {have}")]
    ShortDataRegion { need: usize, have: usize },
    #[error("invalid scaling for signal {index}: dig range [{dig_min}, {dig_max}], phys range [{phys_min}, {phys_max}]")]
    InvalidScaling {
        index: usize,
        dig_min: i32,
        dig_max: i32,
        phys_min: f64,
        phys_max: f64,
    },
    #[error("data signals disagree on samples per record ({0} vs {1})")]
    MixedSamplingRates(usize, usize),
    #[error("record duration must be positive for data signals, got {0}")]
    BadRecordDuration(f64),
    #[error("annotation list is missing its 0x00 terminator")]
    MissingTerminator,
    #[error("malformed annotation timestamp {text:?}")]
    BadTimestamp { text: String },
    #[error("physical value {value} outside writable range [{min}, {max}]")]
    ValueOutOfRange { value: f64, min: f64, max: f64 },
    #[error("recording length {samples} is not a whole number of {per_record}-sample records")]
    PartialRecord { samples: usize, per_record: usize },
    #[error("record duration {duration} s at {fs} Hz does not give an integer sample count")]
    FractionalSamplesPerRecord { duration: f64, fs: f64 },
    #[error("header field {field} value {text:?} does not fit its {width}-byte slot")]
    FieldTooWide {
        field: &'static str,
        text: String,
        width: usize,
    },
    #[error("annotation label {0:?} contains reserved TAL delimiter bytes")]
    ReservedLabelByte(String),
    #[error("recording has no channels or no samples")]
    EmptyRecording,
    #[error("sampling rate must be positive, got {0}")]
    BadSamplingRate(f64),
}

/// Recording start timestamp, second resolution as stored in EDF.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StartDateTime {
    pub year: u16,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

impl Default for StartDateTime {
    fn default() -> Self {
        StartDateTime {
            year: 2009,
            month: 8,
            day: 12,
            hour: 16,
            minute: 15,
            second: 0,
        }
    }
}

/// Per-signal header block.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dim: String,
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i32,
    pub dig_max: i32,
    pub prefiltering: String,
    pub samples_per_record: usize,
    pub reserved: String,
}

impl SignalHeader {
    /// EDF+ convention: the annotation stream is the signal labeled
    /// exactly `EDF Annotations`.
    pub fn is_annotation(&self) -> bool {
        self.label == ANNOTATION_LABEL
    }
}

/// Parsed EDF file header (fixed part plus all signal blocks).
#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start: StartDateTime,
    pub header_bytes: usize,
    pub reserved: String,
    /// Number of data records; `-1` in the file means unknown and is
    /// resolved from the data length by [`read_recording`].
    pub n_records: i64,
    pub record_duration: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    /// Bytes occupied by one data record.
    pub fn record_size(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record * 2).sum()
    }
}

/// A cue or event marker, in seconds relative to recording start.
#[derive(Debug, Clone, PartialEq)]
pub struct AnnotationEvent {
    pub onset: f64,
    pub duration: f64,
    pub label: String,
}

/// Continuous multichannel recording in physical units (microvolts for
/// EEG) with its cue events.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub channel_labels: Vec<String>,
    pub sampling_rate: f64,
    /// channels x samples.
    pub data: Array2<f64>,
    pub events: Vec<AnnotationEvent>,
}

impl Recording {
    pub fn n_channels(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }

    pub fn duration_secs(&self) -> f64 {
        self.n_samples() as f64 / self.sampling_rate
    }
}

fn ascii_field(bytes: &[u8]) -> String {
    // Non-ASCII metadata bytes are replaced rather than rejected.
    let s: String = bytes
        .iter()
        .map(|&b| {
            if b.is_ascii() && !b.is_ascii_control() {
                b as char
            } else {
                '?'
            }
        })
        .collect();
    s.trim().to_string()
}

fn parse_int(bytes: &[u8], field: &'static str) -> Result<i64, EdfError> {
    let text = ascii_field(bytes);
    text.parse::<i64>().map_err(|_| EdfError::BadNumber {
        field,
        text: text.clone(),
    })
}

fn parse_float(bytes: &[u8], field: &'static str) -> Result<f64, EdfError> {
    let text = ascii_field(bytes);
    text.parse::<f64>().map_err(|_| EdfError::BadNumber {
        field,
        text: text.clone(),
    })
}

fn parse_date(bytes: &[u8]) -> Result<(u16, u8, u8), EdfError> {
    let text = ascii_field(bytes);
    let parts: Vec<&str> = text.split('.').collect();
    if parts.len() != 3 {
        return Err(EdfError::BadNumber {
            field: "start_date",
            text,
        });
    }
    let num = |s: &str| {
        s.trim().parse::<u16>().map_err(|_| EdfError::BadNumber {
            field: "start_date",
            text: s.to_string(),
        })
    };
    let (day, month, yy) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
    // EDF clipping rule: 85-99 are 19xx, 00-84 are 20xx.
    let year = if yy >= 85 { 1900 + yy } else { 2000 + yy };
    Ok((year, month as u8, day as u8))
}

fn parse_time(bytes: &[u8]) -> Result<(u8, u8, u8), EdfError> {
    let text = ascii_field(bytes);
    let parts: Vec<&str> = text.split('.').collect();
    if parts.len() != 3 {
        return Err(EdfError::BadNumber {
            field: "start_time",
            text,
        });
    }
    let num = |s: &str| {
        s.trim().parse::<u8>().map_err(|_| EdfError::BadNumber {
            field: "start_time",
            text: s.to_string(),
        })
    };
    Ok((num(parts[0])?, num(parts[1])?, num(parts[2])?))
}

/// Decodes the fixed header and every per-signal block.
pub fn parse_header(bytes: &[u8]) -> Result<EdfHeader, EdfError> {
    if bytes.len() < 256 {
        return Err(EdfError::TruncatedHeader {
            need: 256,
            have: bytes.len(),
        });
    }
    let version = ascii_field(&bytes[0..8]);
    let patient_id = ascii_field(&bytes[8..88]);
    let recording_id = ascii_field(&bytes[88..168]);
    let (year, month, day) = parse_date(&bytes[168..176])?;
    let (hour, minute, second) = parse_time(&bytes[176..184])?;
    let header_bytes = parse_int(&bytes[184..192], "header_bytes")? as usize;
    let reserved = ascii_field(&bytes[192..236]);
    let n_records = parse_int(&bytes[236..244], "n_records")?;
    let record_duration = parse_float(&bytes[244..252], "record_duration")?;
    let n_signals = parse_int(&bytes[252..256], "n_signals")? as usize;

    let expected = 256 * (n_signals + 1);
    if header_bytes != expected {
        return Err(EdfError::HeaderBytesMismatch {
            stated: header_bytes,
            expected,
        });
    }
    if bytes.len() < expected {
        return Err(EdfError::TruncatedHeader {
            need: expected,
            have: bytes.len(),
        });
    }

    // Signal blocks are stored field-major: all labels, then all
    // transducers, and so on.
    let body = &bytes[256..expected];
    let field = |widths_before: usize, width: usize, idx: usize| {
        let start = widths_before * n_signals + width * idx;
        &body[start..start + width]
    };

    let mut signals = Vec::with_capacity(n_signals);
    for i in 0..n_signals {
        let label = ascii_field(field(0, 16, i));
        let transducer = ascii_field(field(16, 80, i));
        let physical_dim = ascii_field(field(96, 8, i));
        let phys_min = parse_float(field(104, 8, i), "phys_min")?;
        let phys_max = parse_float(field(112, 8, i), "phys_max")?;
        let dig_min = parse_int(field(120, 8, i), "dig_min")? as i32;
        let dig_max = parse_int(field(128, 8, i), "dig_max")? as i32;
        let prefiltering = ascii_field(field(136, 80, i));
        let samples_per_record = parse_int(field(216, 8, i), "samples_per_record")? as usize;
        let reserved = ascii_field(field(224, 32, i));
        signals.push(SignalHeader {
            label,
            transducer,
            physical_dim,
            phys_min,
            phys_max,
            dig_min,
            dig_max,
            prefiltering,
            samples_per_record,
            reserved,
        });
    }

    Ok(EdfHeader {
        version,
        patient_id,
        recording_id,
        start: StartDateTime {
            year,
            month,
            day,
            hour,
            minute,
            second,
        },
        header_bytes,
        reserved,
        n_records,
        record_duration,
        signals,
    })
}

/// Parses one buffer of time-stamped annotation lists.
///
/// Each TAL is `onset [0x15 duration] (0x14 label)* 0x14 0x00`; empty
/// labels (including the per-record timekeeping TAL) produce no event.
/// Events are returned in onset order.
pub fn parse_annotations(tal_bytes: &[u8]) -> Result<Vec<AnnotationEvent>, EdfError> {
    let mut events = Vec::new();
    let mut pos = 0;
    while pos < tal_bytes.len() {
        if tal_bytes[pos] == TAL_TERMINATOR {
            // Zero padding between/after TALs.
            pos += 1;
            continue;
        }
        let end = match tal_bytes[pos..].iter().position(|&b| b == TAL_TERMINATOR) {
            Some(off) => pos + off,
            None => return Err(EdfError::MissingTerminator),
        };
        parse_single_tal(&tal_bytes[pos..end], &mut events)?;
        pos = end + 1;
    }
    events.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap());
    Ok(events)
}

fn parse_signed_seconds(bytes: &[u8], what: &str) -> Result<f64, EdfError> {
    let text = String::from_utf8_lossy(bytes).into_owned();
    let ok = matches!(bytes.first(), Some(b'+') | Some(b'-')) || what == "duration";
    if !ok || text.is_empty() {
        return Err(EdfError::BadTimestamp { text });
    }
    text.parse::<f64>()
        .map_err(|_| EdfError::BadTimestamp { text: text.clone() })
}

fn parse_single_tal(tal: &[u8], events: &mut Vec<AnnotationEvent>) -> Result<(), EdfError> {
    let head_end = tal
        .iter()
        .position(|&b| b == TAL_FIELD_SEP)
        .ok_or(EdfError::MissingTerminator)?;
    let head = &tal[..head_end];
    let (onset, duration) = match head.iter().position(|&b| b == TAL_DURATION_SEP) {
        Some(sep) => (
            parse_signed_seconds(&head[..sep], "onset")?,
            parse_signed_seconds(&head[sep + 1..], "duration")?,
        ),
        None => (parse_signed_seconds(head, "onset")?, 0.0),
    };
    for label_bytes in tal[head_end + 1..].split(|&b| b == TAL_FIELD_SEP) {
        let label = String::from_utf8_lossy(label_bytes).trim().to_string();
        if !label.is_empty() {
            events.push(AnnotationEvent {
                onset,
                duration,
                label,
            });
        }
    }
    Ok(())
}

/// Reads a whole EDF/EDF+ byte buffer into a physical-unit [`Recording`].
///
/// Annotation signals are routed to `events`; plain EDF files without an
/// annotation signal yield an empty event list.
pub fn read_recording(bytes: &[u8]) -> Result<Recording, EdfError> {
    let header = parse_header(bytes)?;
    let record_size = header.record_size();
    let data_len = bytes.len() - header.header_bytes;
    let n_records = if header.n_records >= 0 {
        header.n_records as usize
    } else {
        data_len.checked_div(record_size).unwrap_or(0)
    };
    let need = header.header_bytes + n_records * record_size;
    if bytes.len() < need {
        return Err(EdfError::ShortDataRegion {
            need,
            have: bytes.len(),
        });
    }

    let data_signals: Vec<usize> = (0..header.n_signals())
        .filter(|&i| !header.signals[i].is_annotation())
        .collect();
    for &i in &data_signals {
        let s = &header.signals[i];
        if s.dig_min >= s.dig_max || s.phys_min == s.phys_max {
            return Err(EdfError::InvalidScaling {
                index: i,
                dig_min: s.dig_min,
                dig_max: s.dig_max,
                phys_min: s.phys_min,
                phys_max: s.phys_max,
            });
        }
    }

    let mut sampling_rate = 0.0;
    let mut spr = 0usize;
    if let Some(&first) = data_signals.first() {
        spr = header.signals[first].samples_per_record;
        for &i in &data_signals {
            let s = header.signals[i].samples_per_record;
            if s != spr {
                return Err(EdfError::MixedSamplingRates(spr, s));
            }
        }
        if header.record_duration <= 0.0 {
            return Err(EdfError::BadRecordDuration(header.record_duration));
        }
        sampling_rate = spr as f64 / header.record_duration;
    }

    let n_channels = data_signals.len();
    let mut data = Array2::<f64>::zeros((n_channels, n_records * spr));
    let mut events = Vec::new();

    // Per-signal byte offsets within one record.
    let mut offsets = Vec::with_capacity(header.n_signals());
    let mut acc = 0usize;
    for s in &header.signals {
        offsets.push(acc);
        acc += s.samples_per_record * 2;
    }

    for rec_idx in 0..n_records {
        let rec_start = header.header_bytes + rec_idx * record_size;
        for (row, &sig_idx) in data_signals.iter().enumerate() {
            let s = &header.signals[sig_idx];
            let scale = (s.phys_max - s.phys_min) / (s.dig_max - s.dig_min) as f64;
            let start = rec_start + offsets[sig_idx];
            for k in 0..s.samples_per_record {
                let lo = bytes[start + 2 * k];
                let hi = bytes[start + 2 * k + 1];
                let dig = i16::from_le_bytes([lo, hi]) as i32;
                data[[row, rec_idx * spr + k]] =
                    (dig - s.dig_min) as f64 * scale + s.phys_min;
            }
        }
        for (s, &offset) in header.signals.iter().zip(offsets.iter()) {
            if !s.is_annotation() {
                continue;
            }
            let start = rec_start + offset;
            let chunk = &bytes[start..start + s.samples_per_record * 2];
            events.extend(parse_annotations(chunk)?);
        }
    }
    events.sort_by(|a, b| a.onset.partial_cmp(&b.onset).unwrap());

    let channel_labels = data_signals
        .iter()
        .map(|&i| header.signals[i].label.clone())
        .collect();

    Ok(Recording {
        channel_labels,
        sampling_rate,
        data,
        events,
    })
}

/// Metadata for [`write_edf`]; everything not derivable from the
/// [`Recording`] itself.
#[derive(Debug, Clone)]
pub struct EdfWriterMeta {
    pub patient_id: String,
    pub recording_id: String,
    pub start: StartDateTime,
    pub record_duration: f64,
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i16,
    pub dig_max: i16,
    pub physical_dim: String,
    pub prefiltering: String,
    pub transducer: String,
}

impl Default for EdfWriterMeta {
    fn default() -> Self {
        EdfWriterMeta {
            patient_id: "X X X X".to_string(),
            recording_id: "Startdate X X X X".to_string(),
            start: StartDateTime::default(),
            record_duration: 1.0,
            phys_min: -1000.0,
            phys_max: 1000.0,
            dig_min: -32768,
            dig_max: 32767,
            physical_dim: "uV".to_string(),
            prefiltering: String::new(),
            transducer: String::new(),
        }
    }
}

fn push_field(buf: &mut Vec<u8>, text: &str, width: usize, field: &'static str) -> Result<(), EdfError> {
    if text.len() > width {
        return Err(EdfError::FieldTooWide {
            field,
            text: text.to_string(),
            width,
        });
    }
    buf.extend_from_slice(text.as_bytes());
    buf.extend(std::iter::repeat_n(b' ', width - text.len()));
    Ok(())
}

/// Formats a float for an 8-byte header slot, trimming precision only if
/// the shortest representation does not fit.
fn format_header_float(value: f64, field: &'static str) -> Result<String, EdfError> {
    let shortest = format!("{}", value);
    if shortest.len() <= 8 {
        return Ok(shortest);
    }
    for prec in (0..=6).rev() {
        let s = format!("{:.*}", prec, value);
        if s.len() <= 8 {
            return Ok(s);
        }
    }
    Err(EdfError::FieldTooWide {
        field,
        text: shortest,
        width: 8,
    })
}

fn format_seconds(value: f64) -> String {
    // Shortest f64 text round-trips exactly, so events survive the trip.
    format!("{}", value)
}

fn tal_for_event(event: &AnnotationEvent) -> Result<Vec<u8>, EdfError> {
    if event
        .label
        .bytes()
        .any(|b| b == TAL_FIELD_SEP || b == TAL_DURATION_SEP || b == TAL_TERMINATOR)
    {
        return Err(EdfError::ReservedLabelByte(event.label.clone()));
    }
    let mut tal = Vec::new();
    let sign = if event.onset < 0.0 { "" } else { "+" };
    tal.extend_from_slice(format!("{}{}", sign, format_seconds(event.onset)).as_bytes());
    if event.duration != 0.0 {
        tal.push(TAL_DURATION_SEP);
        tal.extend_from_slice(format_seconds(event.duration).as_bytes());
    }
    tal.push(TAL_FIELD_SEP);
    tal.extend_from_slice(event.label.as_bytes());
    tal.push(TAL_FIELD_SEP);
    tal.push(TAL_TERMINATOR);
    Ok(tal)
}

/// Serializes a [`Recording`] to EDF+ bytes.
///
/// Reading the output back reproduces samples to within one digital
/// quantization step and events exactly. The recording must span a whole
/// number of data records and every sample must be inside
/// `[phys_min, phys_max]`.
pub fn write_edf(recording: &Recording, meta: &EdfWriterMeta) -> Result<Vec<u8>, EdfError> {
    if recording.n_channels() == 0 || recording.n_samples() == 0 {
        return Err(EdfError::EmptyRecording);
    }
    if recording.sampling_rate <= 0.0 {
        return Err(EdfError::BadSamplingRate(recording.sampling_rate));
    }
    let spr_f = meta.record_duration * recording.sampling_rate;
    let spr = spr_f.round() as usize;
    if spr == 0 || (spr_f - spr as f64).abs() > 1e-9 {
        return Err(EdfError::FractionalSamplesPerRecord {
            duration: meta.record_duration,
            fs: recording.sampling_rate,
        });
    }
    if !recording.n_samples().is_multiple_of(spr) {
        return Err(EdfError::PartialRecord {
            samples: recording.n_samples(),
            per_record: spr,
        });
    }
    let n_records = recording.n_samples() / spr;

    // Written phys range is what the reader will use, so scaling must be
    // computed from the formatted (possibly precision-trimmed) values.
    let phys_min_text = format_header_float(meta.phys_min, "phys_min")?;
    let phys_max_text = format_header_float(meta.phys_max, "phys_max")?;
    let phys_min: f64 = phys_min_text.parse().unwrap();
    let phys_max: f64 = phys_max_text.parse().unwrap();
    let dig_min = meta.dig_min as i32;
    let dig_max = meta.dig_max as i32;
    if dig_min >= dig_max || phys_min >= phys_max {
        return Err(EdfError::InvalidScaling {
            index: 0,
            dig_min,
            dig_max,
            phys_min,
            phys_max,
        });
    }
    let inv_scale = (dig_max - dig_min) as f64 / (phys_max - phys_min);

    // Group events into the record containing their onset, plus a
    // timekeeping TAL opening every record.
    let mut record_tals: Vec<Vec<u8>> = Vec::with_capacity(n_records);
    for rec_idx in 0..n_records {
        let onset = rec_idx as f64 * meta.record_duration;
        let mut tal = Vec::new();
        tal.extend_from_slice(format!("+{}", format_seconds(onset)).as_bytes());
        tal.push(TAL_FIELD_SEP);
        tal.push(TAL_FIELD_SEP);
        tal.push(TAL_TERMINATOR);
        record_tals.push(tal);
    }
    for event in &recording.events {
        let rec_idx = ((event.onset / meta.record_duration).floor() as i64)
            .clamp(0, n_records as i64 - 1) as usize;
        record_tals[rec_idx].extend(tal_for_event(event)?);
    }
    let annot_bytes = record_tals.iter().map(Vec::len).max().unwrap_or(0);
    let annot_spr = annot_bytes.div_ceil(2) + 8; // headroom, in 2-byte samples

    let n_signals = recording.n_channels() + 1;
    let header_bytes = 256 * (n_signals + 1);
    let mut out = Vec::with_capacity(
        header_bytes + n_records * (recording.n_channels() * spr + annot_spr) * 2,
    );

    push_field(&mut out, "0", 8, "version")?;
    push_field(&mut out, &meta.patient_id, 80, "patient_id")?;
    push_field(&mut out, &meta.recording_id, 80, "recording_id")?;
    let date = format!(
        "{:02}.{:02}.{:02}",
        meta.start.day,
        meta.start.month,
        meta.start.year % 100
    );
    push_field(&mut out, &date, 8, "start_date")?;
    let time = format!(
        "{:02}.{:02}.{:02}",
        meta.start.hour, meta.start.minute, meta.start.second
    );
    push_field(&mut out, &time, 8, "start_time")?;
    push_field(&mut out, &header_bytes.to_string(), 8, "header_bytes")?;
    push_field(&mut out, "EDF+C", 44, "reserved")?;
    push_field(&mut out, &n_records.to_string(), 8, "n_records")?;
    push_field(
        &mut out,
        &format_header_float(meta.record_duration, "record_duration")?,
        8,
        "record_duration",
    )?;
    push_field(&mut out, &n_signals.to_string(), 4, "n_signals")?;

    // Field-major signal blocks; the annotation signal comes last.
    for label in &recording.channel_labels {
        push_field(&mut out, label, 16, "label")?;
    }
    push_field(&mut out, ANNOTATION_LABEL, 16, "label")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &meta.transducer, 80, "transducer")?;
    }
    push_field(&mut out, "", 80, "transducer")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &meta.physical_dim, 8, "physical_dim")?;
    }
    push_field(&mut out, "", 8, "physical_dim")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &phys_min_text, 8, "phys_min")?;
    }
    push_field(&mut out, "-1", 8, "phys_min")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &phys_max_text, 8, "phys_max")?;
    }
    push_field(&mut out, "1", 8, "phys_max")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &dig_min.to_string(), 8, "dig_min")?;
    }
    push_field(&mut out, "-32768", 8, "dig_min")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &dig_max.to_string(), 8, "dig_max")?;
    }
    push_field(&mut out, "32767", 8, "dig_max")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &meta.prefiltering, 80, "prefiltering")?;
    }
    push_field(&mut out, "", 80, "prefiltering")?;
    for _ in 0..recording.n_channels() {
        push_field(&mut out, &spr.to_string(), 8, "samples_per_record")?;
    }
    push_field(&mut out, &annot_spr.to_string(), 8, "samples_per_record")?;
    for _ in 0..n_signals {
        push_field(&mut out, "", 32, "signal_reserved")?;
    }
    debug_assert_eq!(out.len(), header_bytes);

    for (rec_idx, tal) in record_tals.iter().enumerate() {
        for ch in 0..recording.n_channels() {
            for k in 0..spr {
                let value = recording.data[[ch, rec_idx * spr + k]];
                if value < phys_min || value > phys_max {
                    return Err(EdfError::ValueOutOfRange {
                        value,
                        min: phys_min,
                        max: phys_max,
                    });
                }
                let dig = ((value - phys_min) * inv_scale).round() as i64 + dig_min as i64;
                let dig = dig.clamp(dig_min as i64, dig_max as i64) as i16;
                out.extend_from_slice(&dig.to_le_bytes());
            }
        }
        out.extend_from_slice(tal);
        out.extend(std::iter::repeat_n(TAL_TERMINATOR, annot_spr * 2 - tal.len()));
    }

    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn test_recording() -> Recording {
        let fs = 160.0;
        let n = (10.0 * fs) as usize;
        let mut data = Array2::<f64>::zeros((2, n));
        for t in 0..n {
            let x = t as f64 / fs;
            data[[0, t]] = 40.0 * (2.0 * std::f64::consts::PI * 10.0 * x).sin();
            data[[1, t]] = 25.0 * (2.0 * std::f64::consts::PI * 21.0 * x).cos();
        }
        Recording {
            channel_labels: vec!["C3".to_string(), "C4".to_string()],
            sampling_rate: fs,
            data,
            events: vec![
                AnnotationEvent {
                    onset: 1.5,
                    duration: 4.1,
                    label: "T1".to_string(),
                },
                AnnotationEvent {
                    onset: 6.0,
                    duration: 4.1,
                    label: "T2".to_string(),
                },
            ],
        }
    }

    #[test]
    fn header_version_field_trims_padding() {
        let rec = test_recording();
        let bytes = write_edf(&rec, &EdfWriterMeta::default()).unwrap();
        assert_eq!(&bytes[0..8], b"0       ");
        let header = parse_header(&bytes).unwrap();
        assert_eq!(header.version, "0");
    }

    #[test]
    fn header_bytes_match_signal_count() {
        let rec = test_recording();
        let bytes = write_edf(&rec, &EdfWriterMeta::default()).unwrap();
        let header = parse_header(&bytes).unwrap();
        assert_eq!(header.n_signals(), 3);
        assert_eq!(header.header_bytes, 256 * 4);

        // A synthetic 64-signal header: n_signals "64  " implies 16640.
        let mut h64 = bytes[..256].to_vec();
        h64[184..192].copy_from_slice(b"16640   ");
        h64[252..256].copy_from_slice(b"64  ");
        let mut padded = h64.clone();
        padded.resize(16640, b' ');
        // Fill numeric per-signal fields so parsing succeeds.
        let body_patch = |buf: &mut Vec<u8>, before: usize, width: usize, text: &str| {
            for i in 0..64 {
                let start = 256 + before * 64 + width * i;
                let mut field = vec![b' '; width];
                field[..text.len()].copy_from_slice(text.as_bytes());
                buf[start..start + width].copy_from_slice(&field);
            }
        };
        body_patch(&mut padded, 104, 8, "-1000");
        body_patch(&mut padded, 112, 8, "1000");
        body_patch(&mut padded, 120, 8, "-32768");
        body_patch(&mut padded, 128, 8, "32767");
        body_patch(&mut padded, 216, 8, "160");
        let header = parse_header(&padded).unwrap();
        assert_eq!(header.n_signals(), 64);
        assert_eq!(header.header_bytes, 16640);
    }

    #[test]
    fn truncated_header_is_an_error() {
        let short = vec![b' '; 100];
        assert!(matches!(
            parse_header(&short),
            Err(EdfError::TruncatedHeader { need: 256, have: 100 })
        ));
    }

    #[test]
    fn non_numeric_field_is_an_error() {
        let rec = test_recording();
        let mut bytes = write_edf(&rec, &EdfWriterMeta::default()).unwrap();
        bytes[236..244].copy_from_slice(b"oops    ");
        assert!(matches!(
            parse_header(&bytes),
            Err(EdfError::BadNumber { field: "n_records", .. })
        ));
    }

    #[test]
    fn digital_to_physical_is_the_declared_affine_map() {
        // dig 50 in [-100, 100] with phys [-1, 1] maps to 0.5.
        let mut rec = test_recording();
        rec.data = Array2::from_elem((1, 160), 0.5);
        rec.channel_labels = vec!["X".to_string()];
        rec.events.clear();
        let meta = EdfWriterMeta {
            phys_min: -1.0,
            phys_max: 1.0,
            dig_min: -100,
            dig_max: 100,
            ..EdfWriterMeta::default()
        };
        let bytes = write_edf(&rec, &meta).unwrap();
        let back = read_recording(&bytes).unwrap();
        // dig = round((0.5 + 1) * 200/2) - 100 = 50 exactly.
        assert_eq!(back.data[[0, 0]], 0.5);

        // Endpoint identity: dig_min decodes to exactly phys_min.
        let mut rec_min = rec.clone();
        rec_min.data.fill(-1.0);
        let bytes = write_edf(&rec_min, &meta).unwrap();
        let back = read_recording(&bytes).unwrap();
        assert_eq!(back.data[[0, 0]], -1.0);
    }

    #[test]
    fn tal_with_duration_and_label() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"+4.2");
        buf.push(0x15);
        buf.extend_from_slice(b"4.1");
        buf.push(0x14);
        buf.extend_from_slice(b"T1");
        buf.push(0x14);
        buf.push(0x00);
        let events = parse_annotations(&buf).unwrap();
        assert_eq!(events.len(), 1);
        assert_eq!(events[0].onset, 4.2);
        assert_eq!(events[0].duration, 4.1);
        assert_eq!(events[0].label, "T1");
    }

    #[test]
    fn timekeeping_tal_produces_no_event() {
        let buf = [b'+', b'0', 0x14, 0x14, 0x00];
        let events = parse_annotations(&buf).unwrap();
        assert!(events.is_empty());
    }

    #[test]
    fn concatenated_tals_are_sorted_by_onset() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"+9.5");
        buf.push(0x14);
        buf.extend_from_slice(b"T2");
        buf.push(0x14);
        buf.push(0x00);
        buf.extend_from_slice(b"+3");
        buf.push(0x14);
        buf.extend_from_slice(b"T1");
        buf.push(0x14);
        buf.push(0x00);
        let events = parse_annotations(&buf).unwrap();
        assert_eq!(events.len(), 2);
        assert_eq!(events[0].label, "T1");
        assert_eq!(events[1].label, "T2");
        assert!(events[0].onset < events[1].onset);
    }

    #[test]
    fn unterminated_tal_is_an_error() {
        let buf = [b'+', b'1', 0x14, b'T', b'1', 0x14];
        assert!(matches!(
            parse_annotations(&buf),
            Err(EdfError::MissingTerminator)
        ));
    }

    #[test]
    fn onset_without_sign_is_rejected() {
        let buf = [b'4', b'.', b'2', 0x14, b'T', b'1', 0x14, 0x00];
        assert!(matches!(
            parse_annotations(&buf),
            Err(EdfError::BadTimestamp { .. })
        ));
    }

    #[test]
    fn roundtrip_preserves_events_and_samples() {
        let rec = test_recording();
        let bytes = write_edf(&rec, &EdfWriterMeta::default()).unwrap();
        let back = read_recording(&bytes).unwrap();
        assert_eq!(back.events, rec.events);
        assert_eq!(back.channel_labels, rec.channel_labels);
        assert_eq!(back.n_samples(), rec.n_samples());
        let lsb = 2000.0 / 65535.0;
        for (a, b) in rec.data.iter().zip(back.data.iter()) {
            assert!((a - b).abs() <= lsb, "sample error {} exceeds 1 LSB", a - b);
        }
    }

    #[test]
    fn out_of_range_sample_is_an_error() {
        let mut rec = test_recording();
        rec.data[[0, 3]] = 5000.0;
        assert!(matches!(
            write_edf(&rec, &EdfWriterMeta::default()),
            Err(EdfError::ValueOutOfRange { .. })
        ));
    }

    #[test]
    fn empty_event_list_writes_timekeeping_only_annotations() {
        let mut rec = test_recording();
        rec.events.clear();
        let bytes = write_edf(&rec, &EdfWriterMeta::default()).unwrap();
        let header = parse_header(&bytes).unwrap();
        assert!(header.signals.iter().any(|s| s.is_annotation()));
        let back = read_recording(&bytes).unwrap();
        assert!(back.events.is_empty());
    }

    #[test]
    fn plain_edf_without_annotations_reads_with_empty_events() {
        // Strip the annotation signal by rebuilding a 2-signal file.
        let mut no_events = test_recording();
        no_events.events.clear();
        let full = write_edf(&no_events, &EdfWriterMeta::default()).unwrap();
        let header = parse_header(&full).unwrap();
        let spr = header.signals[0].samples_per_record;
        let n_records = header.n_records as usize;
        let mut plain = Vec::new();
        // Header: drop the last signal block fields.
        plain.extend_from_slice(&full[..256]);
        plain[184..192].copy_from_slice(format!("{:<8}", 256 * 3).as_bytes());
        plain[252..256].copy_from_slice(b"2   ");
        let widths = [16usize, 80, 8, 8, 8, 8, 8, 80, 8, 32];
        let mut src = 256;
        for w in widths {
            plain.extend_from_slice(&full[src..src + 2 * w]);
            src += 3 * w;
        }
        let annot_spr = header.signals[2].samples_per_record;
        let data_bytes = spr * 2;
        let mut src = 256 * 4;
        for _ in 0..n_records {
            plain.extend_from_slice(&full[src..src + 2 * data_bytes]);
            src += 2 * data_bytes + annot_spr * 2;
        }
        let back = read_recording(&plain).unwrap();
        assert!(back.events.is_empty());
        assert_eq!(back.n_channels(), 2);
        assert_eq!(back.n_samples(), no_events.n_samples());
    }
}

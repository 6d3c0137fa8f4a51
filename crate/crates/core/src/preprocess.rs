//! Band-pass filtering and epoch extraction.
//!
//! Filtering runs on the continuous recording before epoching so short
//! analysis windows never see filter edge artifacts. The design is a
//! Hamming windowed-sinc FIR, applied once with its group delay
//! compensated, which gives exactly zero phase shift.
//!
//! Transition bandwidths follow the usual heuristic for EEG pipelines:
//! a quarter of the corresponding band edge, floored at 2 Hz and capped
//! by the distance to DC respectively Nyquist.

use crate::edf_io::Recording;
use ndarray::{Array2, Array3, ArrayView2};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use thiserror::Error;

/// Filter length would exceed this many taps: the band is unrealizable
/// at the requested sampling rate.
const MAX_TAPS: usize = 1 << 16;

/// Hamming-window length factor: taps ~= 3.3 / normalized transition width.
const HAMMING_LENGTH_FACTOR: f64 = 3.3;

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("invalid band ({f_lo}, {f_hi}) Hz at fs = {fs} Hz")]
    InvalidBand { f_lo: f64, f_hi: f64, fs: f64 },
    #[error("band ({f_lo}, {f_hi}) Hz too close to Nyquist: transition of {transition} Hz needs {taps} taps")]
    BandTooCloseToNyquist {
        f_lo: f64,
        f_hi: f64,
        transition: f64,
        taps: usize,
    },
    #[error("invalid time window ({t_start}, {t_end}) s")]
    InvalidWindow { t_start: f64, t_end: f64 },
    #[error("recording of {samples} samples is shorter than the {taps}-tap filter")]
    RecordingTooShort { samples: usize, taps: usize },
    #[error("no events matched the label map")]
    NoUsableEvents,
}

/// A pass band in Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BandSpec {
    pub f_lo: f64,
    pub f_hi: f64,
}

impl BandSpec {
    pub fn new(f_lo: f64, f_hi: f64) -> Self {
        BandSpec { f_lo, f_hi }
    }

    pub fn validate(&self, fs: f64) -> Result<(), PreprocessError> {
        if self.f_lo > 0.0 && self.f_lo < self.f_hi && self.f_hi < fs / 2.0 {
            Ok(())
        } else {
            Err(PreprocessError::InvalidBand {
                f_lo: self.f_lo,
                f_hi: self.f_hi,
                fs,
            })
        }
    }
}

/// A post-cue interval in seconds; the cue is t = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWindow {
    pub t_start: f64,
    pub t_end: f64,
}

impl TimeWindow {
    pub fn new(t_start: f64, t_end: f64) -> Self {
        TimeWindow { t_start, t_end }
    }

    pub fn validate(&self) -> Result<(), PreprocessError> {
        if self.t_start >= 0.0 && self.t_start < self.t_end {
            Ok(())
        } else {
            Err(PreprocessError::InvalidWindow {
                t_start: self.t_start,
                t_end: self.t_end,
            })
        }
    }
}

/// Designed FIR filter plus the metadata needed to interpret it.
#[derive(Debug, Clone)]
pub struct FilterSpec {
    taps: Vec<f64>,
    band: BandSpec,
    fs: f64,
}

impl FilterSpec {
    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn band(&self) -> BandSpec {
        self.band
    }

    pub fn fs(&self) -> f64 {
        self.fs
    }

    /// Samples of group delay; output within this distance of either
    /// recording edge is unreliable by contract.
    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    /// Magnitude response at `freq` Hz.
    pub fn magnitude_at(&self, freq: f64) -> f64 {
        let omega = 2.0 * PI * freq / self.fs;
        let mut re = 0.0;
        let mut im = 0.0;
        for (n, &h) in self.taps.iter().enumerate() {
            re += h * (omega * n as f64).cos();
            im -= h * (omega * n as f64).sin();
        }
        (re * re + im * im).sqrt()
    }

    /// L2 norm of the taps: the RMS gain for white-noise input.
    pub fn noise_gain(&self) -> f64 {
        self.taps.iter().map(|h| h * h).sum::<f64>().sqrt()
    }
}

/// Windowed-sinc band-pass taps with pass band `[p_lo, p_hi]` and the
/// given transition width on both sides. Cutoffs sit in the middle of
/// each transition band, so the gain is ~1 at the pass-band edges and
/// ~0 one transition width outside them.
pub(crate) fn hamming_bandpass_taps(
    p_lo: f64,
    p_hi: f64,
    transition: f64,
    fs: f64,
) -> Result<Vec<f64>, PreprocessError> {
    let n_est = (HAMMING_LENGTH_FACTOR * fs / transition).ceil() as usize;
    let n_taps = if n_est.is_multiple_of(2) { n_est + 1 } else { n_est };
    if n_taps > MAX_TAPS {
        return Err(PreprocessError::BandTooCloseToNyquist {
            f_lo: p_lo,
            f_hi: p_hi,
            transition,
            taps: n_taps,
        });
    }
    let c_lo = p_lo - transition / 2.0;
    let c_hi = p_hi + transition / 2.0;
    let w_lo = 2.0 * PI * c_lo / fs;
    let w_hi = 2.0 * PI * c_hi / fs;
    let mid = (n_taps - 1) as f64 / 2.0;

    let mut taps = Vec::with_capacity(n_taps);
    for n in 0..n_taps {
        let x = n as f64 - mid;
        let ideal = if x == 0.0 {
            (w_hi - w_lo) / PI
        } else {
            ((w_hi * x).sin() - (w_lo * x).sin()) / (PI * x)
        };
        let window = 0.54 - 0.46 * (2.0 * PI * n as f64 / (n_taps - 1) as f64).cos();
        taps.push(ideal * window);
    }

    // Normalize to unit gain at the pass-band center.
    let f_center = (c_lo + c_hi) / 2.0;
    let omega = 2.0 * PI * f_center / fs;
    let mut re = 0.0;
    let mut im = 0.0;
    for (n, &h) in taps.iter().enumerate() {
        re += h * (omega * n as f64).cos();
        im -= h * (omega * n as f64).sin();
    }
    let gain = (re * re + im * im).sqrt();
    for h in &mut taps {
        *h /= gain;
    }
    Ok(taps)
}

/// Designs the zero-phase band-pass filter used throughout the pipeline.
///
/// Pass band `[f_lo, f_hi]` with at most ~1 dB ripple; at least ~20 dB
/// attenuation one transition width outside the band, where the lower
/// transition is `min(max(0.25*f_lo, 2), f_lo)` and the upper is
/// `min(max(0.25*f_hi, 2), fs/2 - f_hi)`.
pub fn design_bandpass(band: BandSpec, fs: f64) -> Result<FilterSpec, PreprocessError> {
    band.validate(fs)?;
    let trans_lo = (0.25 * band.f_lo).max(2.0).min(band.f_lo);
    let trans_hi = (0.25 * band.f_hi).max(2.0).min(fs / 2.0 - band.f_hi);
    let transition = trans_lo.min(trans_hi);
    let taps = hamming_bandpass_taps(band.f_lo, band.f_hi, transition, fs).map_err(|e| {
        match e {
            PreprocessError::BandTooCloseToNyquist { taps, .. } => {
                PreprocessError::BandTooCloseToNyquist {
                    f_lo: band.f_lo,
                    f_hi: band.f_hi,
                    transition,
                    taps,
                }
            }
            other => other,
        }
    })?;
    Ok(FilterSpec { taps, band, fs })
}

/// Same-length convolution with the group delay already removed:
/// `y[t] = sum_k h[k] x[t + M - k]` with zero padding at the edges.
pub(crate) fn convolve_zero_phase(x: &[f64], taps: &[f64]) -> Vec<f64> {
    let n = x.len();
    let n_taps = taps.len();
    let mid = (n_taps - 1) / 2;
    let mut padded = vec![0.0; n + 2 * mid];
    padded[mid..mid + n].copy_from_slice(x);
    let taps_rev: Vec<f64> = taps.iter().rev().copied().collect();
    let mut y = Vec::with_capacity(n);
    for t in 0..n {
        let window = &padded[t..t + n_taps];
        let acc: f64 = window
            .iter()
            .zip(taps_rev.iter())
            .map(|(a, b)| a * b)
            .sum();
        y.push(acc);
    }
    y
}

/// Filters every channel of the recording with zero net group delay.
/// Events and labels are carried over unchanged.
pub fn apply_zero_phase(
    recording: &Recording,
    filter: &FilterSpec,
) -> Result<Recording, PreprocessError> {
    let n = recording.n_samples();
    if n < filter.taps.len() {
        return Err(PreprocessError::RecordingTooShort {
            samples: n,
            taps: filter.taps.len(),
        });
    }
    let mut data = Array2::<f64>::zeros(recording.data.raw_dim());
    for (ch, row) in recording.data.outer_iter().enumerate() {
        let x = row.to_vec();
        let y = convolve_zero_phase(&x, &filter.taps);
        for (t, v) in y.into_iter().enumerate() {
            data[[ch, t]] = v;
        }
    }
    Ok(Recording {
        channel_labels: recording.channel_labels.clone(),
        sampling_rate: recording.sampling_rate,
        data,
        events: recording.events.clone(),
    })
}

/// Maps annotation labels to binary class labels.
#[derive(Debug, Clone)]
pub struct LabelMap {
    pairs: BTreeMap<String, u8>,
}

impl LabelMap {
    pub fn from_pairs<I: IntoIterator<Item = (String, u8)>>(pairs: I) -> Self {
        LabelMap {
            pairs: pairs.into_iter().collect(),
        }
    }

    /// The motor-imagery task mapping: T1 = left fist (0), T2 = right
    /// fist (1); T0 rest cues are dropped.
    pub fn task2_default() -> Self {
        Self::from_pairs([("T1".to_string(), 0), ("T2".to_string(), 1)])
    }

    pub fn get(&self, label: &str) -> Option<u8> {
        self.pairs.get(label).copied()
    }
}

/// Labeled, windowed trial tensor for one (band, window) combination.
#[derive(Debug, Clone)]
pub struct EpochSet {
    /// trials x channels x samples.
    pub data: Array3<f64>,
    /// One binary label per trial.
    pub labels: Vec<u8>,
    pub band: BandSpec,
    pub window: TimeWindow,
    pub sampling_rate: f64,
    /// Events whose window ran past the end of the recording.
    pub skipped_events: usize,
}

impl EpochSet {
    pub fn n_trials(&self) -> usize {
        self.data.dim().0
    }

    pub fn n_channels(&self) -> usize {
        self.data.dim().1
    }

    pub fn n_samples(&self) -> usize {
        self.data.dim().2
    }

    pub fn trial(&self, idx: usize) -> ArrayView2<'_, f64> {
        self.data.index_axis(ndarray::Axis(0), idx)
    }

    pub fn has_both_labels(&self) -> bool {
        self.labels.contains(&0) && self.labels.contains(&1)
    }

    /// Pools trials from several epoch sets, preserving order.
    /// All sets must agree on channels, samples, and sampling rate.
    pub fn pool(sets: Vec<EpochSet>) -> Option<EpochSet> {
        let first = sets.first()?;
        let (channels, samples) = (first.n_channels(), first.n_samples());
        let band = first.band;
        let window = first.window;
        let fs = first.sampling_rate;
        if !sets
            .iter()
            .all(|s| s.n_channels() == channels && s.n_samples() == samples)
        {
            return None;
        }
        let n_trials: usize = sets.iter().map(|s| s.n_trials()).sum();
        let mut data = Array3::<f64>::zeros((n_trials, channels, samples));
        let mut labels = Vec::with_capacity(n_trials);
        let mut skipped = 0;
        let mut row = 0;
        for set in sets {
            for i in 0..set.n_trials() {
                data.index_axis_mut(ndarray::Axis(0), row)
                    .assign(&set.trial(i));
                row += 1;
            }
            labels.extend_from_slice(&set.labels);
            skipped += set.skipped_events;
        }
        Some(EpochSet {
            data,
            labels,
            band,
            window,
            sampling_rate: fs,
            skipped_events: skipped,
        })
    }
}

/// Cuts cue-aligned epochs out of a (filtered) recording.
///
/// For each event whose label is in the map, the epoch covers sample
/// indices `[round(onset*fs) + round(t_start*fs), round(onset*fs) +
/// round(t_end*fs))`, so the epoch length depends only on the window and
/// the sampling rate. Events running past the end of the recording are
/// skipped and counted.
pub fn extract_epochs(
    recording: &Recording,
    window: TimeWindow,
    label_map: &LabelMap,
    band: BandSpec,
) -> Result<EpochSet, PreprocessError> {
    window.validate()?;
    let fs = recording.sampling_rate;
    let start_off = (window.t_start * fs).round() as i64;
    let end_off = (window.t_end * fs).round() as i64;
    let epoch_len = (end_off - start_off) as usize;
    let n_samples = recording.n_samples() as i64;

    let mut picks = Vec::new();
    let mut skipped = 0usize;
    for event in &recording.events {
        let Some(label) = label_map.get(&event.label) else {
            continue;
        };
        let base = (event.onset * fs).round() as i64;
        let start = base + start_off;
        let end = base + end_off;
        if start < 0 || end > n_samples {
            skipped += 1;
            continue;
        }
        picks.push((start as usize, label));
    }
    if picks.is_empty() {
        return Err(PreprocessError::NoUsableEvents);
    }

    let n_channels = recording.n_channels();
    let mut data = Array3::<f64>::zeros((picks.len(), n_channels, epoch_len));
    let mut labels = Vec::with_capacity(picks.len());
    for (trial, &(start, label)) in picks.iter().enumerate() {
        for ch in 0..n_channels {
            for k in 0..epoch_len {
                data[[trial, ch, k]] = recording.data[[ch, start + k]];
            }
        }
        labels.push(label);
    }

    Ok(EpochSet {
        data,
        labels,
        band,
        window,
        sampling_rate: fs,
        skipped_events: skipped,
    })
}

//! Deterministic synthetic motor-imagery subjects.
//!
//! Generates continuous recordings with T1/T2 cue annotations and a
//! class-dependent band-power modulation on disjoint channel sets: each
//! label boosts its own channel group inside the effect window only, the
//! way contralateral sensorimotor rhythms separate left- from right-hand
//! imagery. Band-limited components are filtered white noise rather than
//! sinusoids so CSP sees a realistic covariance structure.
//!
//! All randomness flows from one seeded ChaCha stream, so the same spec
//! always produces byte-identical EDF files.

use crate::edf_io::{self, AnnotationEvent, EdfError, EdfWriterMeta, Recording};
use crate::preprocess::{self, BandSpec, PreprocessError, TimeWindow};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("effect band ({0}, {1}) Hz is invalid at fs = {2} Hz")]
    BadBand(f64, f64, f64),
    #[error("effect window ({0}, {1}) s does not fit the {2} s trial period")]
    BadWindow(f64, f64, f64),
    #[error("effect channel {0} is out of range for {1} channels")]
    ChannelOutOfRange(usize, usize),
    #[error("effect channel sets must be disjoint (channel {0} is in both)")]
    OverlappingChannelSets(usize),
    #[error("need at least one trial per label")]
    NoTrials,
    #[error("effect strength must be non-negative, got {0}")]
    BadStrength(f64),
    #[error("noise level must be positive, got {0}")]
    BadNoise(f64),
    #[error(transparent)]
    Filter(#[from] PreprocessError),
    #[error(transparent)]
    Edf(#[from] EdfError),
    #[error("could not write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

/// Parameters of one synthetic subject.
///
/// `effect_strength` is the amplitude of the label-dependent band
/// component relative to the always-on baseline band component; inside
/// the effect window the boosted channel group carries band power
/// `1 + effect_strength^2` times the baseline. Zero strength means no
/// class difference at all.
#[derive(Debug, Clone)]
pub struct SynthSpec {
    pub n_channels: usize,
    pub fs: f64,
    /// Trials per label across the whole subject (all runs pooled).
    pub n_trials_per_label: usize,
    pub n_runs: usize,
    pub effect_band: BandSpec,
    pub effect_window: TimeWindow,
    /// Channels boosted on label-0 trials and on label-1 trials.
    pub effect_channels: [Vec<usize>; 2],
    pub effect_strength: f64,
    /// Broadband noise RMS in microvolts; also the baseline band RMS.
    pub noise_level: f64,
    pub seed: u64,
    /// Cue-to-cue spacing in seconds.
    pub trial_period: f64,
    /// Silence before the first cue.
    pub lead_in: f64,
    pub cue_duration: f64,
}

impl SynthSpec {
    /// A 16-channel subject with an alpha-band effect, matching the
    /// shape of one real dataset subject (3 runs, 90 trials).
    pub fn default_subject(seed: u64) -> Self {
        SynthSpec {
            n_channels: 16,
            fs: 160.0,
            n_trials_per_label: 45,
            n_runs: 3,
            effect_band: BandSpec::new(10.0, 14.0),
            effect_window: TimeWindow::new(0.5, 2.5),
            effect_channels: [vec![2, 3, 4], vec![10, 11, 12]],
            effect_strength: 2.0_f64.sqrt(),
            noise_level: 10.0,
            seed,
            trial_period: 6.0,
            lead_in: 2.0,
            cue_duration: 4.0,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.effect_band.validate(self.fs).is_err() {
            return Err(SynthError::BadBand(
                self.effect_band.f_lo,
                self.effect_band.f_hi,
                self.fs,
            ));
        }
        if self.effect_window.validate().is_err()
            || self.effect_window.t_end > self.trial_period
            || self.cue_duration > self.trial_period
        {
            return Err(SynthError::BadWindow(
                self.effect_window.t_start,
                self.effect_window.t_end,
                self.trial_period,
            ));
        }
        for side in &self.effect_channels {
            for &ch in side {
                if ch >= self.n_channels {
                    return Err(SynthError::ChannelOutOfRange(ch, self.n_channels));
                }
            }
        }
        for &ch in &self.effect_channels[0] {
            if self.effect_channels[1].contains(&ch) {
                return Err(SynthError::OverlappingChannelSets(ch));
            }
        }
        if self.n_trials_per_label == 0 || self.n_runs == 0 {
            return Err(SynthError::NoTrials);
        }
        if self.effect_strength < 0.0 {
            return Err(SynthError::BadStrength(self.effect_strength));
        }
        if self.noise_level.is_nan() || self.noise_level <= 0.0 {
            return Err(SynthError::BadNoise(self.noise_level));
        }
        Ok(())
    }
}

/// Disjoint channel groups mimicking a contralateral layout: one group
/// centered at a quarter of the montage, the other at three quarters.
pub fn contralateral_sets(n_channels: usize) -> [Vec<usize>; 2] {
    let k = (n_channels / 8).max(1);
    let group = |center: usize| -> Vec<usize> {
        (center.saturating_sub(k / 2)..)
            .take(k)
            .filter(|&i| i < n_channels)
            .collect()
    };
    [group(n_channels / 4), group(3 * n_channels / 4)]
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    // Box-Muller; one draw per call keeps the stream layout simple.
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn gaussian_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| gaussian(rng)).collect()
}

/// Generates the subject's runs in run order.
///
/// Labels are globally balanced and shuffled once across the subject;
/// cue annotations are T1 for label 0 and T2 for label 1, with a T0
/// rest marker after each cue.
pub fn generate_synthetic_subject(spec: &SynthSpec) -> Result<Vec<Recording>, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);

    // Global balanced label sequence, dealt to runs in order.
    let total = 2 * spec.n_trials_per_label;
    let mut labels: Vec<u8> = (0..total).map(|i| (i % 2) as u8).collect();
    use rand::seq::SliceRandom;
    labels.shuffle(&mut rng);
    let mut run_sizes = vec![total / spec.n_runs; spec.n_runs];
    for size in run_sizes.iter_mut().take(total % spec.n_runs) {
        *size += 1;
    }

    // The band-limited component uses a filter confined to the effect
    // band: pass band shrunk by one internal transition width so the
    // skirts stay inside [f_lo, f_hi].
    let bw = spec.effect_band.f_hi - spec.effect_band.f_lo;
    let inner = (bw / 4.0).min(2.0);
    let taps = preprocess::hamming_bandpass_taps(
        spec.effect_band.f_lo + inner,
        spec.effect_band.f_hi - inner,
        inner,
        spec.fs,
    )?;
    let noise_gain: f64 = taps.iter().map(|h| h * h).sum::<f64>().sqrt();
    let baseline_scale = spec.noise_level / noise_gain;
    let boost_scale = spec.effect_strength * spec.noise_level / noise_gain;

    let channel_labels: Vec<String> = (0..spec.n_channels)
        .map(|i| format!("SYN{:03}", i))
        .collect();

    let mut recordings = Vec::with_capacity(spec.n_runs);
    let mut label_cursor = 0usize;
    for &run_size in &run_sizes {
        let run_labels = &labels[label_cursor..label_cursor + run_size];
        label_cursor += run_size;

        let run_secs =
            (spec.lead_in + run_size as f64 * spec.trial_period + 1.0).ceil();
        let n = (run_secs * spec.fs).round() as usize;
        let mut data = Array2::<f64>::zeros((spec.n_channels, n));

        // Broadband noise everywhere.
        for ch in 0..spec.n_channels {
            let noise = gaussian_vec(&mut rng, n);
            for (t, v) in noise.into_iter().enumerate() {
                data[[ch, t]] = spec.noise_level * v;
            }
        }

        // Always-on baseline band component on every effect channel.
        for side in &spec.effect_channels {
            for &ch in side {
                let white = gaussian_vec(&mut rng, n);
                let band = preprocess::convolve_zero_phase(&white, &taps);
                for (t, v) in band.into_iter().enumerate() {
                    data[[ch, t]] += baseline_scale * v;
                }
            }
        }

        // Label-gated boost: filtered first, gated after, so the class
        // difference is exactly zero outside the effect window.
        let mut events = Vec::new();
        for (trial, &label) in run_labels.iter().enumerate() {
            let onset = spec.lead_in + trial as f64 * spec.trial_period;
            events.push(AnnotationEvent {
                onset,
                duration: spec.cue_duration,
                label: if label == 0 { "T1" } else { "T2" }.to_string(),
            });
            events.push(AnnotationEvent {
                onset: onset + spec.cue_duration,
                duration: spec.trial_period - spec.cue_duration,
                label: "T0".to_string(),
            });
        }
        if spec.effect_strength > 0.0 {
            for (side, side_channels) in spec.effect_channels.iter().enumerate() {
                for &ch in side_channels {
                    let white = gaussian_vec(&mut rng, n);
                    let band = preprocess::convolve_zero_phase(&white, &taps);
                    for (trial, &label) in run_labels.iter().enumerate() {
                        if usize::from(label) != side {
                            continue;
                        }
                        let onset = spec.lead_in + trial as f64 * spec.trial_period;
                        let start =
                            ((onset + spec.effect_window.t_start) * spec.fs).round() as usize;
                        let end = ((onset + spec.effect_window.t_end) * spec.fs).round() as usize;
                        for t in start..end.min(n) {
                            data[[ch, t]] += boost_scale * band[t];
                        }
                    }
                }
            }
        }

        recordings.push(Recording {
            channel_labels: channel_labels.clone(),
            sampling_rate: spec.fs,
            data,
            events,
        });
    }
    Ok(recordings)
}

/// Writer metadata with a physical range wide enough for the data.
fn meta_for(recordings: &[Recording], subject_id: u32) -> EdfWriterMeta {
    let mut max_abs = 1.0_f64;
    for rec in recordings {
        for &v in rec.data.iter() {
            max_abs = max_abs.max(v.abs());
        }
    }
    let phys = (max_abs * 1.05).ceil();
    EdfWriterMeta {
        patient_id: format!("S{:03}", subject_id),
        recording_id: format!("Startdate X S{:03} synthetic", subject_id),
        phys_min: -phys,
        phys_max: phys,
        ..EdfWriterMeta::default()
    }
}

/// Generates the subject and writes one EDF file per run under
/// `dir/S{sss}/S{sss}R{rr}.edf`, returning the paths.
pub fn write_subject_edf(
    spec: &SynthSpec,
    dir: &Path,
    subject_id: u32,
    run_ids: &[u32],
) -> Result<Vec<PathBuf>, SynthError> {
    let recordings = generate_synthetic_subject(spec)?;
    let meta = meta_for(&recordings, subject_id);
    let subject_dir = dir.join(format!("S{:03}", subject_id));
    std::fs::create_dir_all(&subject_dir).map_err(|source| SynthError::Io {
        path: subject_dir.clone(),
        source,
    })?;
    let mut paths = Vec::with_capacity(recordings.len());
    for (i, recording) in recordings.iter().enumerate() {
        let run_id = run_ids.get(i).copied().unwrap_or((i + 1) as u32);
        let path = subject_dir.join(format!("S{:03}R{:02}.edf", subject_id, run_id));
        let bytes = edf_io::write_edf(recording, &meta)?;
        std::fs::write(&path, bytes).map_err(|source| SynthError::Io {
            path: path.clone(),
            source,
        })?;
        paths.push(path);
    }
    Ok(paths)
}

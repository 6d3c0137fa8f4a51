//! The time-window x frequency-band parameter grid.
//!
//! 23 bands (17 sliding 4-Hz windows stepped by 2 Hz from 4 to 40 Hz,
//! plus six bands commonly reported in the motor-imagery literature)
//! crossed with five post-cue windows gives 115 combinations per
//! subject. Each combination is scored by cross-validated CSP -> LDA
//! accuracy and Cohen's Kappa; per-band filtering is shared across the
//! windows of that band.

use crate::edf_io::Recording;
use crate::eval::{self, CvSummary, EvalError};
use crate::preprocess::{self, BandSpec, EpochSet, LabelMap, PreprocessError, TimeWindow};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("subject has no recordings")]
    NoRecordings,
    #[error("recordings disagree on sampling rate ({0} vs {1} Hz)")]
    MixedSamplingRates(f64, f64),
    #[error("recordings disagree on channel count ({0} vs {1})")]
    MixedChannelCounts(usize, usize),
    #[error("no usable cue events in any run")]
    NoUsableEvents,
    #[error("grid tables disagree on their (band, window) layout")]
    GridMismatch,
    #[error("no grid tables to aggregate")]
    EmptyAggregate,
    #[error("band ({0}, {1}) Hz failed: {2}")]
    Band(f64, f64, #[source] PreprocessError),
    #[error("combination ({f_lo}, {f_hi}) Hz x ({t_start}, {t_end}) s failed: {source}")]
    Cell {
        f_lo: f64,
        f_hi: f64,
        t_start: f64,
        t_end: f64,
        #[source]
        source: EvalError,
    },
}

/// Scores of one (band, window) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell {
    pub band: BandSpec,
    pub window: TimeWindow,
    pub summary: CvSummary,
}

/// Per-subject grid in canonical order: bands outer (sliding ascending,
/// then the literature list), windows inner.
#[derive(Debug, Clone, PartialEq)]
pub struct GridTable {
    pub subject_id: u32,
    pub cells: Vec<GridCell>,
}

impl GridTable {
    pub fn n_cells(&self) -> usize {
        self.cells.len()
    }
}

/// Cross-validation settings for a grid run.
#[derive(Debug, Clone, Copy)]
pub struct GridConfig {
    pub k_folds: usize,
    pub seed: u64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            k_folds: 10,
            seed: 42,
        }
    }
}

/// All 23 analysis bands in canonical order: the 17 sliding 4-Hz bands,
/// then the six literature bands.
pub fn build_band_grid() -> Vec<BandSpec> {
    let mut bands = Vec::with_capacity(23);
    let mut lo = 4.0;
    while lo + 4.0 <= 40.0 {
        bands.push(BandSpec::new(lo, lo + 4.0));
        lo += 2.0;
    }
    for (f_lo, f_hi) in [
        (4.0, 12.0),
        (8.0, 13.0),
        (8.0, 30.0),
        (14.0, 30.0),
        (14.0, 40.0),
        (4.0, 40.0),
    ] {
        bands.push(BandSpec::new(f_lo, f_hi));
    }
    bands
}

/// The five post-cue analysis windows, in seconds.
pub fn build_window_grid() -> Vec<TimeWindow> {
    [
        (0.0, 2.25),
        (0.0, 4.0),
        (0.5, 2.5),
        (0.5, 3.5),
        (1.0, 3.5),
    ]
    .into_iter()
    .map(|(s, e)| TimeWindow::new(s, e))
    .collect()
}

/// Runs the full grid for one subject.
///
/// Each band filters every run once; the windows of that band reuse the
/// filtered runs. Trials are pooled across runs before cross-validation.
pub fn run_subject_grid(
    subject_id: u32,
    recordings: &[Recording],
    config: &GridConfig,
) -> Result<GridTable, GridError> {
    let first = recordings.first().ok_or(GridError::NoRecordings)?;
    let fs = first.sampling_rate;
    let n_channels = first.n_channels();
    for rec in recordings {
        if rec.sampling_rate != fs {
            return Err(GridError::MixedSamplingRates(fs, rec.sampling_rate));
        }
        if rec.n_channels() != n_channels {
            return Err(GridError::MixedChannelCounts(n_channels, rec.n_channels()));
        }
    }

    let bands = build_band_grid();
    let windows = build_window_grid();
    let label_map = LabelMap::task2_default();

    let mut cells = Vec::with_capacity(bands.len() * windows.len());
    for band in &bands {
        let filter = preprocess::design_bandpass(*band, fs)
            .map_err(|e| GridError::Band(band.f_lo, band.f_hi, e))?;
        let filtered: Vec<Recording> = recordings
            .iter()
            .map(|rec| preprocess::apply_zero_phase(rec, &filter))
            .collect::<Result<_, _>>()
            .map_err(|e| GridError::Band(band.f_lo, band.f_hi, e))?;

        for window in &windows {
            let mut sets = Vec::with_capacity(filtered.len());
            for rec in &filtered {
                match preprocess::extract_epochs(rec, *window, &label_map, *band) {
                    Ok(set) => sets.push(set),
                    // A run without usable events contributes nothing.
                    Err(PreprocessError::NoUsableEvents) => continue,
                    Err(e) => return Err(GridError::Band(band.f_lo, band.f_hi, e)),
                }
            }
            let pooled = EpochSet::pool(sets).ok_or(GridError::NoUsableEvents)?;
            let summary = eval::cross_validate_combination(&pooled, config.k_folds, config.seed)
                .map_err(|source| GridError::Cell {
                    f_lo: band.f_lo,
                    f_hi: band.f_hi,
                    t_start: window.t_start,
                    t_end: window.t_end,
                    source,
                })?;
            cells.push(GridCell {
                band: *band,
                window: *window,
                summary,
            });
        }
    }

    Ok(GridTable { subject_id, cells })
}

/// Population mean for one (band, window) combination.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateCell {
    pub band: BandSpec,
    pub window: TimeWindow,
    pub accuracy_mean: f64,
    pub kappa_mean: f64,
    pub n_subjects: usize,
}

/// Per-cell arithmetic mean over subjects. All tables must share the
/// canonical layout.
pub fn aggregate_population(tables: &[GridTable]) -> Result<Vec<AggregateCell>, GridError> {
    let first = tables.first().ok_or(GridError::EmptyAggregate)?;
    for table in tables {
        if table.n_cells() != first.n_cells() {
            return Err(GridError::GridMismatch);
        }
        for (a, b) in table.cells.iter().zip(first.cells.iter()) {
            if a.band != b.band || a.window != b.window {
                return Err(GridError::GridMismatch);
            }
        }
    }
    let n = tables.len();
    let mut out = Vec::with_capacity(first.n_cells());
    for idx in 0..first.n_cells() {
        let mut acc = 0.0;
        let mut kap = 0.0;
        for table in tables {
            acc += table.cells[idx].summary.accuracy_mean;
            kap += table.cells[idx].summary.kappa_mean;
        }
        out.push(AggregateCell {
            band: first.cells[idx].band,
            window: first.cells[idx].window,
            accuracy_mean: acc / n as f64,
            kappa_mean: kap / n as f64,
            n_subjects: n,
        });
    }
    Ok(out)
}

/// The subject's best combination: maximal mean accuracy, ties broken by
/// higher kappa, then lower band start, then earlier window start. The
/// canonical cell order is the final tie-break.
pub fn best_combination_per_subject(table: &GridTable) -> &GridCell {
    let mut best = &table.cells[0];
    for cell in &table.cells[1..] {
        let better = cell.summary.accuracy_mean > best.summary.accuracy_mean
            || (cell.summary.accuracy_mean == best.summary.accuracy_mean
                && (cell.summary.kappa_mean > best.summary.kappa_mean
                    || (cell.summary.kappa_mean == best.summary.kappa_mean
                        && (cell.band.f_lo < best.band.f_lo
                            || (cell.band.f_lo == best.band.f_lo
                                && cell.window.t_start < best.window.t_start)))));
        if better {
            best = cell;
        }
    }
    best
}

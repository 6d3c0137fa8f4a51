//! Offline motor-imagery EEG decoding pipeline.
//!
//! The crate covers the full path from raw EDF/EDF+ recordings to
//! population-level statistics:
//!
//! * [`edf_io`] — bit-exact EDF/EDF+ reader and writer with TAL annotation
//!   parsing, producing physical-unit [`Recording`]s with cue events.
//! * [`preprocess`] — zero-phase FIR band-pass filtering and cue-aligned
//!   epoch extraction.
//! * [`csp`] — Common Spatial Patterns via the generalized eigenproblem
//!   between two class covariances, yielding log-variance features.
//! * [`lda`] — binary Linear Discriminant Analysis with Ledoit-Wolf
//!   shrinkage of the pooled covariance.
//! * [`eval`] — stratified k-fold cross-validation with accuracy and
//!   Cohen's Kappa.
//! * [`grid`] — the 23-band x 5-window parameter grid, per-subject runs,
//!   population aggregation, and per-subject optima.
//! * [`stats`] — two-way repeated-measures ANOVA, pairwise contrasts, the
//!   Bonferroni correction, and F-distribution tail probabilities.
//! * [`synth`] — a deterministic synthetic subject generator with a known
//!   discriminative effect, used as the end-to-end oracle.
//! * [`report`] — CSV emission/parsing and SVG heatmap rendering.

pub mod csp;
pub mod edf_io;
pub mod eval;
pub mod grid;
pub mod lda;
pub mod linalg;
pub mod preprocess;
pub mod report;
pub mod stats;
pub mod synth;

pub use ndarray;

pub use csp::{CspError, CspModel};
pub use edf_io::{AnnotationEvent, EdfError, EdfHeader, Recording};
pub use eval::{CvSummary, EvalError};
pub use grid::{GridCell, GridError, GridTable};
pub use lda::{LdaError, LdaModel};
pub use preprocess::{BandSpec, EpochSet, FilterSpec, PreprocessError, TimeWindow};
pub use stats::{AnovaTable, PairwiseResult, StatsError};
pub use synth::{SynthError, SynthSpec};

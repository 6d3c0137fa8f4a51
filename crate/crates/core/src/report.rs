//! Result serialization: CSV tables and the SVG heatmap.
//!
//! The per-subject CSV schema is fixed and byte-deterministic:
//!
//! ```text
//! subject,band_lo,band_hi,win_start,win_end,accuracy,acc_std,kappa,kappa_std
//! ```
//!
//! with metric columns at six decimals and rows in canonical grid order,
//! so re-emitting the same results reproduces the file bit for bit. The
//! statistics stage reads these files back rather than any in-memory
//! state, keeping it re-runnable on archived results.

use crate::eval::CvSummary;
use crate::grid::{self, AggregateCell, GridCell, GridTable};
use crate::preprocess::{BandSpec, TimeWindow};
use crate::stats::{AnovaTable, PairwiseResult};
use ndarray::Array3;
use std::io::{BufRead, Write};
use thiserror::Error;

pub const RESULTS_HEADER: &str =
    "subject,band_lo,band_hi,win_start,win_end,accuracy,acc_std,kappa,kappa_std";
pub const AGGREGATE_HEADER: &str =
    "band_lo,band_hi,win_start,win_end,accuracy,kappa,n_subjects";
pub const ANOVA_HEADER: &str = "effect,F,df_effect,df_error,p";
pub const PAIRWISE_HEADER: &str =
    "level_a,level_b,F,df1,df2,p,mean_a,sd_a,mean_b,sd_b,degenerate";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("nothing to emit: empty result set")]
    EmptyResults,
    #[error("write failed: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: expected {expected} fields, got {got}")]
    FieldCount {
        line: usize,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: bad number {text:?}")]
    BadNumber { line: usize, text: String },
    #[error("unexpected header {0:?}")]
    BadHeader(String),
    #[error("subject {subject} has {got} cells, the canonical grid has {expected}")]
    IncompleteSubject {
        subject: u32,
        got: usize,
        expected: usize,
    },
    #[error("subject {subject} row {row} does not match the canonical grid order")]
    NonCanonicalOrder { subject: u32, row: usize },
}

/// Six-decimal metric formatting; negative zero prints as zero.
fn metric(v: f64) -> String {
    let v = if v == 0.0 { 0.0 } else { v };
    format!("{:.6}", v)
}

/// One parsed row of a results CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub subject: u32,
    pub band: BandSpec,
    pub window: TimeWindow,
    pub accuracy: f64,
    pub acc_std: f64,
    pub kappa: f64,
    pub kappa_std: f64,
}

/// Emits the per-subject results CSV, one row per (subject, cell),
/// in table order then canonical cell order, with fixed 6-decimal
/// metric formatting.
pub fn emit_results_csv<W: Write>(tables: &[GridTable], out: &mut W) -> Result<(), ReportError> {
    if tables.is_empty() || tables.iter().all(|t| t.cells.is_empty()) {
        return Err(ReportError::EmptyResults);
    }
    writeln!(out, "{}", RESULTS_HEADER)?;
    for table in tables {
        for cell in &table.cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                table.subject_id,
                cell.band.f_lo,
                cell.band.f_hi,
                cell.window.t_start,
                cell.window.t_end,
                metric(cell.summary.accuracy_mean),
                metric(cell.summary.accuracy_std),
                metric(cell.summary.kappa_mean),
                metric(cell.summary.kappa_std),
            )?;
        }
    }
    Ok(())
}

/// Parses a results CSV produced by [`emit_results_csv`].
pub fn parse_results_csv<R: BufRead>(input: R) -> Result<Vec<ResultRow>, ReportError> {
    let mut rows = Vec::new();
    for (idx, line) in input.lines().enumerate() {
        let line = line?;
        let text = line.trim();
        if text.is_empty() {
            continue;
        }
        if idx == 0 {
            if text != RESULTS_HEADER {
                return Err(ReportError::BadHeader(text.to_string()));
            }
            continue;
        }
        let fields: Vec<&str> = text.split(',').collect();
        if fields.len() != 9 {
            return Err(ReportError::FieldCount {
                line: idx + 1,
                expected: 9,
                got: fields.len(),
            });
        }
        let num = |s: &str| -> Result<f64, ReportError> {
            s.parse::<f64>().map_err(|_| ReportError::BadNumber {
                line: idx + 1,
                text: s.to_string(),
            })
        };
        let subject = fields[0]
            .parse::<u32>()
            .map_err(|_| ReportError::BadNumber {
                line: idx + 1,
                text: fields[0].to_string(),
            })?;
        rows.push(ResultRow {
            subject,
            band: BandSpec::new(num(fields[1])?, num(fields[2])?),
            window: TimeWindow::new(num(fields[3])?, num(fields[4])?),
            accuracy: num(fields[5])?,
            acc_std: num(fields[6])?,
            kappa: num(fields[7])?,
            kappa_std: num(fields[8])?,
        });
    }
    if rows.is_empty() {
        return Err(ReportError::EmptyResults);
    }
    Ok(rows)
}

/// Rebuilds per-subject grid tables from parsed rows, verifying each
/// subject covers the canonical grid exactly once, in order.
pub fn tables_from_rows(rows: &[ResultRow]) -> Result<Vec<GridTable>, ReportError> {
    let bands = grid::build_band_grid();
    let windows = grid::build_window_grid();
    let per_subject = bands.len() * windows.len();

    let mut tables: Vec<GridTable> = Vec::new();
    let mut current: Option<GridTable> = None;
    for row in rows {
        let table = match &mut current {
            Some(t) if t.subject_id == row.subject => t,
            _ => {
                if let Some(done) = current.take() {
                    check_complete(&done, per_subject)?;
                    tables.push(done);
                }
                current = Some(GridTable {
                    subject_id: row.subject,
                    cells: Vec::with_capacity(per_subject),
                });
                current.as_mut().unwrap()
            }
        };
        let idx = table.cells.len();
        let expect_band = bands[idx / windows.len()];
        let expect_window = windows[idx % windows.len()];
        if row.band != expect_band || row.window != expect_window {
            return Err(ReportError::NonCanonicalOrder {
                subject: row.subject,
                row: idx,
            });
        }
        table.cells.push(GridCell {
            band: row.band,
            window: row.window,
            summary: CvSummary {
                accuracy_mean: row.accuracy,
                accuracy_std: row.acc_std,
                kappa_mean: row.kappa,
                kappa_std: row.kappa_std,
                n_folds: 0,
                per_fold: Vec::new(),
                skipped_folds: 0,
            },
        });
    }
    if let Some(done) = current.take() {
        check_complete(&done, per_subject)?;
        tables.push(done);
    }
    Ok(tables)
}

fn check_complete(table: &GridTable, expected: usize) -> Result<(), ReportError> {
    if table.n_cells() != expected {
        return Err(ReportError::IncompleteSubject {
            subject: table.subject_id,
            got: table.n_cells(),
            expected,
        });
    }
    Ok(())
}

/// Accuracy cube `subjects x bands x windows` from parsed rows, plus the
/// subject ids in cube order.
pub fn accuracy_cube(rows: &[ResultRow]) -> Result<(Array3<f64>, Vec<u32>), ReportError> {
    let tables = tables_from_rows(rows)?;
    let bands = grid::build_band_grid();
    let windows = grid::build_window_grid();
    let mut cube = Array3::<f64>::zeros((tables.len(), bands.len(), windows.len()));
    let mut subjects = Vec::with_capacity(tables.len());
    for (s, table) in tables.iter().enumerate() {
        subjects.push(table.subject_id);
        for (idx, cell) in table.cells.iter().enumerate() {
            cube[[s, idx / windows.len(), idx % windows.len()]] = cell.summary.accuracy_mean;
        }
    }
    Ok((cube, subjects))
}

/// Emits the population aggregate CSV.
pub fn emit_aggregate_csv<W: Write>(
    cells: &[AggregateCell],
    out: &mut W,
) -> Result<(), ReportError> {
    if cells.is_empty() {
        return Err(ReportError::EmptyResults);
    }
    writeln!(out, "{}", AGGREGATE_HEADER)?;
    for cell in cells {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            cell.band.f_lo,
            cell.band.f_hi,
            cell.window.t_start,
            cell.window.t_end,
            metric(cell.accuracy_mean),
            metric(cell.kappa_mean),
            cell.n_subjects,
        )?;
    }
    Ok(())
}

/// Emits per-subject optima ranked by accuracy (descending), ties broken
/// by kappa then subject id.
pub fn emit_best_per_subject_csv<W: Write>(
    tables: &[GridTable],
    out: &mut W,
) -> Result<(), ReportError> {
    if tables.is_empty() {
        return Err(ReportError::EmptyResults);
    }
    let mut best: Vec<(u32, &GridCell)> = tables
        .iter()
        .map(|t| (t.subject_id, grid::best_combination_per_subject(t)))
        .collect();
    best.sort_by(|a, b| {
        b.1.summary
            .accuracy_mean
            .partial_cmp(&a.1.summary.accuracy_mean)
            .unwrap()
            .then(
                b.1.summary
                    .kappa_mean
                    .partial_cmp(&a.1.summary.kappa_mean)
                    .unwrap(),
            )
            .then(a.0.cmp(&b.0))
    });
    writeln!(out, "{}", RESULTS_HEADER)?;
    for (subject, cell) in best {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            subject,
            cell.band.f_lo,
            cell.band.f_hi,
            cell.window.t_start,
            cell.window.t_end,
            metric(cell.summary.accuracy_mean),
            metric(cell.summary.accuracy_std),
            metric(cell.summary.kappa_mean),
            metric(cell.summary.kappa_std),
        )?;
    }
    Ok(())
}

/// Emits the ANOVA table CSV.
pub fn emit_anova_csv<W: Write>(table: &AnovaTable, out: &mut W) -> Result<(), ReportError> {
    writeln!(out, "{}", ANOVA_HEADER)?;
    for effect in table.effects() {
        writeln!(
            out,
            "{},{:.6},{},{},{:.6e}",
            effect.name, effect.f, effect.df_effect, effect.df_error, effect.p
        )?;
    }
    Ok(())
}

/// Emits pairwise contrast rows.
pub fn emit_pairwise_csv<W: Write>(
    results: &[PairwiseResult],
    out: &mut W,
) -> Result<(), ReportError> {
    if results.is_empty() {
        return Err(ReportError::EmptyResults);
    }
    writeln!(out, "{}", PAIRWISE_HEADER)?;
    for r in results {
        writeln!(
            out,
            "{},{},{:.6},{},{},{:.6e},{:.6},{:.6},{:.6},{:.6},{}",
            r.level_a,
            r.level_b,
            r.f,
            r.df.0,
            r.df.1,
            r.p,
            r.mean_a,
            r.sd_a,
            r.mean_b,
            r.sd_b,
            r.degenerate,
        )?;
    }
    Ok(())
}

// Heatmap geometry and colors.
const CELL_W: usize = 46;
const CELL_H: usize = 34;
const MARGIN_LEFT: usize = 96;
const MARGIN_TOP: usize = 48;
const MARGIN_BOTTOM: usize = 76;
const MARGIN_RIGHT: usize = 24;
const COLOR_LOW: (u8, u8, u8) = (255, 245, 170); // pale yellow
const COLOR_HIGH: (u8, u8, u8) = (186, 14, 42); // deep red
const SLIDING_LABEL_COLOR: &str = "#1d7d35"; // sliding-window bands
const LITERATURE_LABEL_COLOR: &str = "#c2428a"; // literature bands
const N_SLIDING_BANDS: usize = 17;

fn lerp_color(t: f64) -> String {
    let mix = |a: u8, b: u8| -> u8 { (a as f64 + t * (b as f64 - a as f64)).round() as u8 };
    format!(
        "#{:02x}{:02x}{:02x}",
        mix(COLOR_LOW.0, COLOR_HIGH.0),
        mix(COLOR_LOW.1, COLOR_HIGH.1),
        mix(COLOR_LOW.2, COLOR_HIGH.2)
    )
}

/// Renders the population heatmap as SVG 1.1: bands on the x-axis
/// (sliding bands in green, literature bands in pink), windows on the
/// y-axis, one colored and numerically labeled cell per combination.
/// Output bytes are a pure function of the input.
pub fn emit_heatmap_svg<W: Write>(cells: &[AggregateCell], out: &mut W) -> Result<(), ReportError> {
    let bands = grid::build_band_grid();
    let windows = grid::build_window_grid();
    if cells.len() != bands.len() * windows.len() {
        return Err(ReportError::EmptyResults);
    }
    let value = |band_idx: usize, window_idx: usize| -> f64 {
        cells[band_idx * windows.len() + window_idx].accuracy_mean
    };
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for cell in cells {
        lo = lo.min(cell.accuracy_mean);
        hi = hi.max(cell.accuracy_mean);
    }

    let width = MARGIN_LEFT + bands.len() * CELL_W + MARGIN_RIGHT;
    let height = MARGIN_TOP + windows.len() * CELL_H + MARGIN_BOTTOM;
    writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" viewBox="0 0 {width} {height}">"#
    )?;
    writeln!(
        out,
        r##"<rect x="0" y="0" width="{width}" height="{height}" fill="#ffffff"/>"##
    )?;
    writeln!(
        out,
        r##"<text x="{}" y="24" font-family="sans-serif" font-size="15" fill="#222222">Mean accuracy by frequency band (x) and time window (y)</text>"##,
        MARGIN_LEFT
    )?;

    for (bi, _band) in bands.iter().enumerate() {
        for (wi, _window) in windows.iter().enumerate() {
            let v = value(bi, wi);
            let t = if hi > lo { (v - lo) / (hi - lo) } else { 0.5 };
            let x = MARGIN_LEFT + bi * CELL_W;
            let y = MARGIN_TOP + wi * CELL_H;
            let fill = lerp_color(t);
            let text_fill = if t > 0.55 { "#ffffff" } else { "#222222" };
            writeln!(
                out,
                r##"<rect x="{x}" y="{y}" width="{CELL_W}" height="{CELL_H}" fill="{fill}" stroke="#ffffff" stroke-width="1"/>"##
            )?;
            writeln!(
                out,
                r#"<text x="{}" y="{}" font-family="sans-serif" font-size="10" text-anchor="middle" fill="{text_fill}">{:.3}</text>"#,
                x + CELL_W / 2,
                y + CELL_H / 2 + 4,
                v
            )?;
        }
    }

    for (wi, window) in windows.iter().enumerate() {
        let y = MARGIN_TOP + wi * CELL_H + CELL_H / 2 + 4;
        writeln!(
            out,
            r##"<text x="{}" y="{y}" font-family="sans-serif" font-size="11" text-anchor="end" fill="#222222">({}, {}) s</text>"##,
            MARGIN_LEFT - 8,
            window.t_start,
            window.t_end
        )?;
    }
    for (bi, band) in bands.iter().enumerate() {
        let x = MARGIN_LEFT + bi * CELL_W + CELL_W / 2;
        let y = MARGIN_TOP + windows.len() * CELL_H + 10;
        let color = if bi < N_SLIDING_BANDS {
            SLIDING_LABEL_COLOR
        } else {
            LITERATURE_LABEL_COLOR
        };
        writeln!(
            out,
            r#"<text x="{x}" y="{y}" font-family="sans-serif" font-size="10" text-anchor="end" fill="{color}" transform="rotate(-55 {x} {y})">({}, {})</text>"#,
            band.f_lo, band.f_hi
        )?;
    }
    let legend_y = height - 14;
    writeln!(
        out,
        r#"<text x="{}" y="{legend_y}" font-family="sans-serif" font-size="11" fill="{SLIDING_LABEL_COLOR}">sliding-window bands</text>"#,
        MARGIN_LEFT
    )?;
    writeln!(
        out,
        r#"<text x="{}" y="{legend_y}" font-family="sans-serif" font-size="11" fill="{LITERATURE_LABEL_COLOR}">literature bands</text>"#,
        MARGIN_LEFT + 170
    )?;
    writeln!(out, "</svg>")?;
    Ok(())
}

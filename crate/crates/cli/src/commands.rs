//! Subcommand bodies: synth, run, aggregate, stats, report.

use anyhow::{anyhow, bail, Context, Result};
use migrid::grid::{self, GridConfig, GridTable};
use migrid::preprocess::{BandSpec, TimeWindow};
use migrid::report;
use migrid::stats;
use migrid::synth::{self, SynthSpec};
use rayon::prelude::*;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub struct SynthParams {
    pub subjects: Vec<u32>,
    pub runs: Vec<u32>,
    pub channels: usize,
    pub trials_per_label: usize,
    pub effect_band: (f64, f64),
    pub effect_window: (f64, f64),
    pub effect_strength: f64,
    pub noise_level: f64,
    pub seed: u64,
}

/// Writes synthetic subjects into the dataset layout.
pub fn synth_command(data_dir: &Path, params: &SynthParams) -> Result<()> {
    for &subject in &params.subjects {
        let spec = SynthSpec {
            n_channels: params.channels,
            fs: 160.0,
            n_trials_per_label: params.trials_per_label,
            n_runs: params.runs.len(),
            effect_band: BandSpec::new(params.effect_band.0, params.effect_band.1),
            effect_window: TimeWindow::new(params.effect_window.0, params.effect_window.1),
            effect_channels: synth::contralateral_sets(params.channels),
            effect_strength: params.effect_strength,
            noise_level: params.noise_level,
            seed: params.seed.wrapping_add(subject as u64),
            trial_period: 6.0,
            lead_in: 2.0,
            cue_duration: 4.0,
        };
        let paths = synth::write_subject_edf(&spec, data_dir, subject, &params.runs)
            .with_context(|| format!("synthesizing subject {subject}"))?;
        println!(
            "subject {subject}: wrote {} runs under {}",
            paths.len(),
            data_dir.join(format!("S{subject:03}")).display()
        );
    }
    Ok(())
}

fn load_subject(data_dir: &Path, subject: u32, runs: &[u32]) -> Result<Vec<migrid::Recording>> {
    let mut recordings = Vec::with_capacity(runs.len());
    for &run in runs {
        let path = data_dir.join(crate::config::run_file_name(subject, run));
        let bytes =
            std::fs::read(&path).with_context(|| format!("cannot read {}", path.display()))?;
        let recording = migrid::edf_io::read_recording(&bytes)
            .with_context(|| format!("cannot parse {}", path.display()))?;
        recordings.push(recording);
    }
    Ok(recordings)
}

pub struct RunParams {
    pub subjects: Vec<u32>,
    pub runs: Vec<u32>,
    pub k_folds: usize,
    pub seed: u64,
    pub jobs: usize,
}

/// Runs the full grid for every subject and writes `results.csv`.
///
/// Subjects are distributed over a bounded worker pool; the single
/// writer emits tables in subject order after the reduction, so output
/// bytes do not depend on scheduling.
pub fn run_command(data_dir: &Path, out_dir: &Path, params: &RunParams) -> Result<()> {
    if params.k_folds < 2 {
        bail!("--folds must be at least 2");
    }
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let config = GridConfig {
        k_folds: params.k_folds,
        seed: params.seed,
    };

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(params.jobs.max(1))
        .build()
        .context("worker pool")?;
    let outcomes: Vec<(u32, Result<GridTable>)> = pool.install(|| {
        params
            .subjects
            .par_iter()
            .map(|&subject| {
                let result = load_subject(data_dir, subject, &params.runs).and_then(|recs| {
                    grid::run_subject_grid(subject, &recs, &config)
                        .map_err(|e| anyhow!("subject {subject}: {e}"))
                });
                (subject, result)
            })
            .collect()
    });

    let mut tables = Vec::new();
    let mut skipped = Vec::new();
    for (subject, outcome) in outcomes {
        match outcome {
            Ok(table) => tables.push(table),
            Err(e) => {
                eprintln!("skipping subject {subject}: {e:#}");
                skipped.push(subject);
            }
        }
    }
    if tables.is_empty() {
        bail!("no subject produced results");
    }

    let results_path = out_dir.join("results.csv");
    let mut writer = BufWriter::new(
        File::create(&results_path)
            .with_context(|| format!("cannot write {}", results_path.display()))?,
    );
    report::emit_results_csv(&tables, &mut writer)?;
    writer.flush()?;
    println!(
        "wrote {} ({} subjects, {} skipped)",
        results_path.display(),
        tables.len(),
        skipped.len()
    );
    Ok(())
}

fn read_rows(results: &Path) -> Result<Vec<report::ResultRow>> {
    let file = File::open(results)
        .with_context(|| format!("cannot open {}", results.display()))?;
    report::parse_results_csv(BufReader::new(file))
        .with_context(|| format!("cannot parse {}", results.display()))
}

/// Averages per-subject tables into `aggregate.csv`.
pub fn aggregate_command(results: &Path, out_dir: &Path) -> Result<()> {
    let rows = read_rows(results)?;
    let tables = report::tables_from_rows(&rows)?;
    let aggregate = grid::aggregate_population(&tables)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let path = out_dir.join("aggregate.csv");
    let mut writer = BufWriter::new(File::create(&path)?);
    report::emit_aggregate_csv(&aggregate, &mut writer)?;
    writer.flush()?;

    let best = aggregate
        .iter()
        .max_by(|a, b| a.accuracy_mean.partial_cmp(&b.accuracy_mean).unwrap())
        .unwrap();
    println!(
        "wrote {} ({} subjects); best mean cell: ({}, {}) Hz x ({}, {}) s, accuracy {:.4}",
        path.display(),
        best.n_subjects,
        best.band.f_lo,
        best.band.f_hi,
        best.window.t_start,
        best.window.t_end,
        best.accuracy_mean
    );
    Ok(())
}

/// Marginal per-subject means over the other factor.
fn window_marginals(cube: &migrid::ndarray::Array3<f64>) -> Vec<Vec<f64>> {
    let (n_subj, n_bands, n_windows) = cube.dim();
    (0..n_windows)
        .map(|w| {
            (0..n_subj)
                .map(|s| (0..n_bands).map(|b| cube[[s, b, w]]).sum::<f64>() / n_bands as f64)
                .collect()
        })
        .collect()
}

fn band_marginals(cube: &migrid::ndarray::Array3<f64>) -> Vec<Vec<f64>> {
    let (n_subj, n_bands, n_windows) = cube.dim();
    (0..n_bands)
        .map(|b| {
            (0..n_subj)
                .map(|s| (0..n_windows).map(|w| cube[[s, b, w]]).sum::<f64>() / n_windows as f64)
                .collect()
        })
        .collect()
}

/// Repeated-measures ANOVA plus all pairwise contrasts, from the CSV.
pub fn stats_command(results: &Path, out_dir: &Path, alpha: f64) -> Result<()> {
    let rows = read_rows(results)?;
    let (cube, subjects) = report::accuracy_cube(&rows)?;
    let (_, n_bands, n_windows) = cube.dim();
    let table = stats::rm_anova_two_way(cube.view())?;

    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;
    let anova_path = out_dir.join("anova.csv");
    let mut writer = BufWriter::new(File::create(&anova_path)?);
    report::emit_anova_csv(&table, &mut writer)?;
    writer.flush()?;

    let bands = grid::build_band_grid();
    let windows = grid::build_window_grid();
    let window_values = window_marginals(&cube);
    let band_values = band_marginals(&cube);

    let mut window_pairs = Vec::new();
    for i in 0..n_windows {
        for j in (i + 1)..n_windows {
            window_pairs.push(stats::pairwise_rm_f(
                &format!("({}, {}) s", windows[i].t_start, windows[i].t_end),
                &window_values[i],
                &format!("({}, {}) s", windows[j].t_start, windows[j].t_end),
                &window_values[j],
            )?);
        }
    }
    let mut band_pairs = Vec::new();
    for i in 0..n_bands {
        for j in (i + 1)..n_bands {
            band_pairs.push(stats::pairwise_rm_f(
                &format!("({}, {}) Hz", bands[i].f_lo, bands[i].f_hi),
                &band_values[i],
                &format!("({}, {}) Hz", bands[j].f_lo, bands[j].f_hi),
                &band_values[j],
            )?);
        }
    }
    let windows_path = out_dir.join("pairwise_windows.csv");
    let mut writer = BufWriter::new(File::create(&windows_path)?);
    report::emit_pairwise_csv(&window_pairs, &mut writer)?;
    writer.flush()?;
    let bands_path = out_dir.join("pairwise_bands.csv");
    let mut writer = BufWriter::new(File::create(&bands_path)?);
    report::emit_pairwise_csv(&band_pairs, &mut writer)?;
    writer.flush()?;

    let threshold = stats::bonferroni_alpha(alpha, n_bands * n_windows);
    println!("subjects: {}", subjects.len());
    for effect in table.effects() {
        println!(
            "{}: F({}, {}) = {:.4}, p = {:.3e}",
            effect.name, effect.df_effect, effect.df_error, effect.f, effect.p
        );
    }
    println!(
        "Bonferroni threshold: {alpha} / {} = {:.6e}",
        n_bands * n_windows,
        threshold
    );
    let significant = window_pairs
        .iter()
        .chain(band_pairs.iter())
        .filter(|p| !p.degenerate && p.p < threshold)
        .count();
    println!(
        "significant pairwise contrasts at the corrected level: {significant} of {}",
        window_pairs.len() + band_pairs.len()
    );
    println!("wrote {}", anova_path.display());
    println!("wrote {}", windows_path.display());
    println!("wrote {}", bands_path.display());
    Ok(())
}

/// Heatmap and the per-subject optimum table, from the CSV.
pub fn report_command(results: &Path, out_dir: &Path) -> Result<()> {
    let rows = read_rows(results)?;
    let tables = report::tables_from_rows(&rows)?;
    let aggregate = grid::aggregate_population(&tables)?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("cannot create {}", out_dir.display()))?;

    let svg_path = out_dir.join("heatmap.svg");
    let mut writer = BufWriter::new(File::create(&svg_path)?);
    report::emit_heatmap_svg(&aggregate, &mut writer)?;
    writer.flush()?;

    let best_path = out_dir.join("best_per_subject.csv");
    let mut writer = BufWriter::new(File::create(&best_path)?);
    report::emit_best_per_subject_csv(&tables, &mut writer)?;
    writer.flush()?;

    println!("wrote {}", svg_path.display());
    println!("wrote {}", best_path.display());
    Ok(())
}

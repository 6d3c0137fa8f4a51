//! Repeated-measures ANOVA and F-distribution tail probabilities.
//!
//! The two-way within-subjects partition treats subjects as the random
//! factor: each effect is tested against its own subject-by-effect
//! interaction (band against band x subject, window against window x
//! subject, interaction against the three-way residual). No sphericity
//! correction is applied.
//!
//! Tail probabilities come from the regularized incomplete beta
//! function, evaluated with a Lentz continued fraction.

use ndarray::{Array2, ArrayView2, ArrayView3};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("need at least 2 subjects, got {0}")]
    TooFewSubjects(usize),
    #[error("need at least 2 levels, got {0}")]
    TooFewLevels(usize),
    #[error("cube contains non-finite cells")]
    MissingCells,
    #[error("paired vectors differ in length: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("degrees of freedom must be positive, got ({0}, {1})")]
    BadDegreesOfFreedom(usize, usize),
    #[error("F statistic must be non-negative, got {0}")]
    NegativeF(f64),
}

/// One tested effect of the within-subjects ANOVA.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaEffect {
    pub name: String,
    pub f: f64,
    pub df_effect: usize,
    pub df_error: usize,
    pub p: f64,
}

/// Band, window, and interaction effects.
#[derive(Debug, Clone, PartialEq)]
pub struct AnovaTable {
    pub band: AnovaEffect,
    pub window: AnovaEffect,
    pub interaction: AnovaEffect,
}

impl AnovaTable {
    pub fn effects(&self) -> [&AnovaEffect; 3] {
        [&self.band, &self.window, &self.interaction]
    }
}

/// Paired contrast between two grid levels.
#[derive(Debug, Clone, PartialEq)]
pub struct PairwiseResult {
    pub level_a: String,
    pub level_b: String,
    pub f: f64,
    pub df: (usize, usize),
    pub p: f64,
    pub mean_a: f64,
    pub sd_a: f64,
    pub mean_b: f64,
    pub sd_b: f64,
    /// Set when the per-subject differences have zero variance; the
    /// paired statistic is undefined in that case.
    pub degenerate: bool,
}

fn f_ratio(ss_effect: f64, df_effect: usize, ss_error: f64, df_error: usize, scale: f64) -> (f64, f64) {
    let tiny = 1e-12 * scale.max(f64::MIN_POSITIVE);
    let ms_effect = ss_effect / df_effect as f64;
    let ms_error = ss_error / df_error as f64;
    if ss_effect <= tiny {
        return (0.0, 1.0);
    }
    if ss_error <= tiny {
        return (f64::INFINITY, 0.0);
    }
    let f = ms_effect / ms_error;
    let p = f_tail(f, df_effect, df_error).unwrap_or(0.0);
    (f, p)
}

/// Two-way repeated-measures ANOVA over a `subjects x bands x windows`
/// cube of scores.
pub fn rm_anova_two_way(cube: ArrayView3<'_, f64>) -> Result<AnovaTable, StatsError> {
    let (n_subj, n_a, n_b) = cube.dim();
    if n_subj < 2 {
        return Err(StatsError::TooFewSubjects(n_subj));
    }
    if n_a < 2 || n_b < 2 {
        return Err(StatsError::TooFewLevels(n_a.min(n_b)));
    }
    if cube.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::MissingCells);
    }

    let total = cube.iter().sum::<f64>();
    let grand = total / (n_subj * n_a * n_b) as f64;

    let mut mean_s = vec![0.0; n_subj];
    let mut mean_a = vec![0.0; n_a];
    let mut mean_b = vec![0.0; n_b];
    let mut mean_ab = Array2::<f64>::zeros((n_a, n_b));
    let mut mean_as = Array2::<f64>::zeros((n_a, n_subj));
    let mut mean_bs = Array2::<f64>::zeros((n_b, n_subj));
    for s in 0..n_subj {
        for i in 0..n_a {
            for j in 0..n_b {
                let y = cube[[s, i, j]];
                mean_s[s] += y;
                mean_a[i] += y;
                mean_b[j] += y;
                mean_ab[[i, j]] += y;
                mean_as[[i, s]] += y;
                mean_bs[[j, s]] += y;
            }
        }
    }
    mean_s.iter_mut().for_each(|v| *v /= (n_a * n_b) as f64);
    mean_a.iter_mut().for_each(|v| *v /= (n_subj * n_b) as f64);
    mean_b.iter_mut().for_each(|v| *v /= (n_subj * n_a) as f64);
    mean_ab.mapv_inplace(|v| v / n_subj as f64);
    mean_as.mapv_inplace(|v| v / n_b as f64);
    mean_bs.mapv_inplace(|v| v / n_a as f64);

    let ss_a = (n_subj * n_b) as f64 * mean_a.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let ss_b = (n_subj * n_a) as f64 * mean_b.iter().map(|m| (m - grand).powi(2)).sum::<f64>();

    let mut ss_ab = 0.0;
    for i in 0..n_a {
        for j in 0..n_b {
            let dev = mean_ab[[i, j]] - mean_a[i] - mean_b[j] + grand;
            ss_ab += dev * dev;
        }
    }
    ss_ab *= n_subj as f64;

    let mut ss_as = 0.0;
    for i in 0..n_a {
        for s in 0..n_subj {
            let dev = mean_as[[i, s]] - mean_a[i] - mean_s[s] + grand;
            ss_as += dev * dev;
        }
    }
    ss_as *= n_b as f64;

    let mut ss_bs = 0.0;
    for j in 0..n_b {
        for s in 0..n_subj {
            let dev = mean_bs[[j, s]] - mean_b[j] - mean_s[s] + grand;
            ss_bs += dev * dev;
        }
    }
    ss_bs *= n_a as f64;

    // Three-way residual, computed directly from the full decomposition.
    let mut ss_abs = 0.0;
    let mut ss_total = 0.0;
    for s in 0..n_subj {
        for i in 0..n_a {
            for j in 0..n_b {
                let y = cube[[s, i, j]];
                ss_total += (y - grand) * (y - grand);
                let fitted = mean_ab[[i, j]] + mean_as[[i, s]] + mean_bs[[j, s]]
                    - mean_a[i]
                    - mean_b[j]
                    - mean_s[s]
                    + grand;
                let dev = y - fitted;
                ss_abs += dev * dev;
            }
        }
    }

    let df_a = n_a - 1;
    let df_b = n_b - 1;
    let df_ab = df_a * df_b;
    let df_as = df_a * (n_subj - 1);
    let df_bs = df_b * (n_subj - 1);
    let df_abs = df_ab * (n_subj - 1);

    let (f_a, p_a) = f_ratio(ss_a, df_a, ss_as, df_as, ss_total);
    let (f_b, p_b) = f_ratio(ss_b, df_b, ss_bs, df_bs, ss_total);
    let (f_ab, p_ab) = f_ratio(ss_ab, df_ab, ss_abs, df_abs, ss_total);

    Ok(AnovaTable {
        band: AnovaEffect {
            name: "band".to_string(),
            f: f_a,
            df_effect: df_a,
            df_error: df_as,
            p: p_a,
        },
        window: AnovaEffect {
            name: "window".to_string(),
            f: f_b,
            df_effect: df_b,
            df_error: df_bs,
            p: p_b,
        },
        interaction: AnovaEffect {
            name: "band:window".to_string(),
            f: f_ab,
            df_effect: df_ab,
            df_error: df_abs,
            p: p_ab,
        },
    })
}

/// One-way repeated-measures ANOVA over a `subjects x levels` matrix.
///
/// With exactly two levels the F statistic equals the squared paired-t
/// statistic on the same data.
pub fn rm_anova_one_way(data: ArrayView2<'_, f64>) -> Result<AnovaEffect, StatsError> {
    let (n_subj, n_levels) = data.dim();
    if n_subj < 2 {
        return Err(StatsError::TooFewSubjects(n_subj));
    }
    if n_levels < 2 {
        return Err(StatsError::TooFewLevels(n_levels));
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(StatsError::MissingCells);
    }
    let grand = data.iter().sum::<f64>() / (n_subj * n_levels) as f64;
    let mut mean_level = vec![0.0; n_levels];
    let mut mean_subj = vec![0.0; n_subj];
    for s in 0..n_subj {
        for l in 0..n_levels {
            mean_level[l] += data[[s, l]];
            mean_subj[s] += data[[s, l]];
        }
    }
    mean_level.iter_mut().for_each(|v| *v /= n_subj as f64);
    mean_subj.iter_mut().for_each(|v| *v /= n_levels as f64);

    let ss_level =
        n_subj as f64 * mean_level.iter().map(|m| (m - grand).powi(2)).sum::<f64>();
    let mut ss_err = 0.0;
    let mut ss_total = 0.0;
    for s in 0..n_subj {
        for l in 0..n_levels {
            let y = data[[s, l]];
            ss_total += (y - grand) * (y - grand);
            let dev = y - mean_subj[s] - mean_level[l] + grand;
            ss_err += dev * dev;
        }
    }
    let df_level = n_levels - 1;
    let df_err = df_level * (n_subj - 1);
    let (f, p) = f_ratio(ss_level, df_level, ss_err, df_err, ss_total);
    Ok(AnovaEffect {
        name: "level".to_string(),
        f,
        df_effect: df_level,
        df_error: df_err,
        p,
    })
}

fn sample_mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Paired repeated-measures contrast between two per-subject score
/// vectors: `F = t^2` of the paired t-test, df `(1, n - 1)`.
pub fn pairwise_rm_f(
    level_a: &str,
    values_a: &[f64],
    level_b: &str,
    values_b: &[f64],
) -> Result<PairwiseResult, StatsError> {
    if values_a.len() != values_b.len() {
        return Err(StatsError::LengthMismatch(values_a.len(), values_b.len()));
    }
    let n = values_a.len();
    if n < 2 {
        return Err(StatsError::TooFewSubjects(n));
    }
    let diffs: Vec<f64> = values_a
        .iter()
        .zip(values_b.iter())
        .map(|(a, b)| a - b)
        .collect();
    let (mean_d, sd_d) = sample_mean_sd(&diffs);
    let (mean_a, sd_a) = sample_mean_sd(values_a);
    let (mean_b, sd_b) = sample_mean_sd(values_b);

    if sd_d == 0.0 {
        // Zero-variance differences: the contrast is undefined; report a
        // degeneracy flag (all-zero differences have no F at all).
        let f = if mean_d == 0.0 { f64::NAN } else { f64::INFINITY };
        return Ok(PairwiseResult {
            level_a: level_a.to_string(),
            level_b: level_b.to_string(),
            f,
            df: (1, n - 1),
            p: 0.0,
            mean_a,
            sd_a,
            mean_b,
            sd_b,
            degenerate: true,
        });
    }
    let t = mean_d / (sd_d / (n as f64).sqrt());
    let f = t * t;
    let p = f_tail(f, 1, n - 1)?;
    Ok(PairwiseResult {
        level_a: level_a.to_string(),
        level_b: level_b.to_string(),
        f,
        df: (1, n - 1),
        p,
        mean_a,
        sd_a,
        mean_b,
        sd_b,
        degenerate: false,
    })
}

/// Bonferroni-corrected significance level: `alpha / m`.
pub fn bonferroni_alpha(alpha: f64, m: usize) -> f64 {
    debug_assert!(alpha > 0.0 && alpha < 1.0 && m >= 1);
    alpha / m as f64
}

/// Upper tail of the F distribution:
/// `P(F_{df1,df2} > f) = I_x(df2/2, df1/2)` with `x = df2/(df2 + df1 f)`.
pub fn f_tail(f: f64, df1: usize, df2: usize) -> Result<f64, StatsError> {
    if df1 < 1 || df2 < 1 {
        return Err(StatsError::BadDegreesOfFreedom(df1, df2));
    }
    if f < 0.0 {
        return Err(StatsError::NegativeF(f));
    }
    if f == 0.0 {
        return Ok(1.0);
    }
    if f.is_infinite() {
        return Ok(0.0);
    }
    let d1 = df1 as f64;
    let d2 = df2 as f64;
    let x = d2 / (d2 + d1 * f);
    Ok(regularized_incomplete_beta(x, d2 / 2.0, d1 / 2.0))
}

/// ln Gamma(x) by the Lanczos approximation (g = 5, 6 coefficients).
fn ln_gamma(x: f64) -> f64 {
    const COEFFS: [f64; 6] = [
        76.18009172947146,
        -86.50532032941677,
        24.01409824083091,
        -1.231739572450155,
        0.1208650973866179e-2,
        -0.5395239384953e-5,
    ];
    let mut series = 1.000000000190015;
    for (i, &c) in COEFFS.iter().enumerate() {
        series += c / (x + i as f64 + 1.0);
    }
    let tmp = x + 5.5;
    (x + 0.5) * tmp.ln() - tmp + (2.5066282746310005 * series / x).ln()
}

/// Regularized incomplete beta function `I_x(a, b)` via the Lentz
/// continued fraction with 1e-12 convergence.
pub fn regularized_incomplete_beta(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    // Use the symmetry relation where the continued fraction converges
    // fastest.
    if x > (a + 1.0) / (a + b + 2.0) {
        return 1.0 - regularized_incomplete_beta(1.0 - x, b, a);
    }
    let ln_front = a * x.ln() + b * (1.0 - x).ln() - ln_gamma(a) - ln_gamma(b) + ln_gamma(a + b);
    let front = ln_front.exp();
    front * beta_continued_fraction(x, a, b) / a
}

fn beta_continued_fraction(x: f64, a: f64, b: f64) -> f64 {
    const EPS: f64 = 1e-12;
    const TINY: f64 = 1e-300;
    const MAX_ITER: usize = 500;

    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=MAX_ITER {
        let m_f = m as f64;
        let m2 = 2.0 * m_f;
        // Even step.
        let aa = m_f * (b - m_f) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        // Odd step.
        let aa = -(a + m_f) * (qab + m_f) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

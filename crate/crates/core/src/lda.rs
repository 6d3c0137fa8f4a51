//! Binary Linear Discriminant Analysis with covariance shrinkage.
//!
//! The pooled within-class covariance is shrunk toward the scaled
//! identity target `(trace(S)/d) I` with the Ledoit-Wolf optimal
//! intensity ("Honey, I Shrunk the Sample Covariance Matrix", 2004),
//! which keeps the classifier well conditioned when folds are small
//! relative to the feature dimension.

use crate::linalg::{self, LinalgError};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum LdaError {
    #[error("need at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("labels must contain both classes")]
    SingleClass,
    #[error("labels length {labels} does not match sample count {samples}")]
    LabelMismatch { labels: usize, samples: usize },
    #[error("feature vector has dimension {got}, model expects {expected}")]
    DimensionMismatch { got: usize, expected: usize },
    #[error("shrunk covariance is singular even with the shrinkage floor")]
    SingularCovariance(#[source] LinalgError),
}

/// Shrinkage intensity selection for [`fit_lda_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Shrinkage {
    /// Ledoit-Wolf automatic intensity.
    Auto,
    /// Fixed gamma, clamped to [0, 1].
    Fixed(f64),
}

/// Fitted linear discriminant: predict class 1 iff
/// `weights . x + bias > 0`; exact ties resolve to class 0.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    pub weights: Array1<f64>,
    pub bias: f64,
    pub shrinkage: f64,
    pub class_means: [Array1<f64>; 2],
    pub priors: [f64; 2],
}

impl LdaModel {
    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn score(&self, feature: ArrayView1<'_, f64>) -> f64 {
        self.weights.dot(&feature) + self.bias
    }

    pub fn predict(&self, feature: ArrayView1<'_, f64>) -> u8 {
        if self.score(feature) > 0.0 {
            1
        } else {
            0
        }
    }
}

/// Ratio of the estimated misspecification to the dispersion around the
/// identity target, clamped to [0, 1]. Zero dispersion means the sample
/// covariance already equals the target, so the intensity is immaterial.
fn shrinkage_from_parts(beta: f64, delta: f64) -> f64 {
    if delta <= 0.0 {
        return 0.0;
    }
    (beta / delta).clamp(0.0, 1.0)
}

/// Ledoit-Wolf optimal shrinkage intensity toward `(trace(S)/d) I`.
///
/// `centered` must hold one observation per row, already centered (per
/// class, when pooling classes).
pub fn ledoit_wolf_shrinkage(centered: ArrayView2<'_, f64>) -> Result<f64, LdaError> {
    let (n, d) = centered.dim();
    if n < 2 {
        return Err(LdaError::TooFewSamples(n));
    }
    let nf = n as f64;
    let df = d as f64;
    let sample_cov = centered.t().dot(&centered) / nf;
    let mu = sample_cov.diag().sum() / df;

    // delta = ||S - mu I||_F^2 / d
    let mut delta = 0.0;
    for i in 0..d {
        for j in 0..d {
            let target = if i == j { mu } else { 0.0 };
            let diff = sample_cov[[i, j]] - target;
            delta += diff * diff;
        }
    }
    delta /= df;

    // beta_bar = (sum_t ||x_t||^4 - n ||S||_F^2) / (d n^2)
    let cov_norm: f64 = sample_cov.iter().map(|v| v * v).sum();
    let mut quartic = 0.0;
    for row in centered.outer_iter() {
        let sq: f64 = row.iter().map(|v| v * v).sum();
        quartic += sq * sq;
    }
    let beta_bar = ((quartic - nf * cov_norm) / (df * nf * nf)).max(0.0);

    Ok(shrinkage_from_parts(beta_bar.min(delta), delta))
}

/// Fits the discriminant with automatic Ledoit-Wolf shrinkage.
pub fn fit_lda(features: ArrayView2<'_, f64>, labels: &[u8]) -> Result<LdaModel, LdaError> {
    fit_lda_with(features, labels, Shrinkage::Auto)
}

/// Fits the discriminant with an explicit shrinkage policy.
///
/// `weights = shrunk_cov^-1 (mu1 - mu0)`,
/// `bias = -weights . (mu0 + mu1)/2 + ln(prior1/prior0)`.
pub fn fit_lda_with(
    features: ArrayView2<'_, f64>,
    labels: &[u8],
    shrinkage: Shrinkage,
) -> Result<LdaModel, LdaError> {
    let (n, d) = features.dim();
    if labels.len() != n {
        return Err(LdaError::LabelMismatch {
            labels: labels.len(),
            samples: n,
        });
    }
    if n < 2 {
        return Err(LdaError::TooFewSamples(n));
    }
    let count0 = labels.iter().filter(|&&l| l == 0).count();
    let count1 = n - count0;
    if count0 == 0 || count1 == 0 {
        return Err(LdaError::SingleClass);
    }

    let mut means = [Array1::<f64>::zeros(d), Array1::<f64>::zeros(d)];
    for (row, &label) in features.outer_iter().zip(labels.iter()) {
        means[usize::from(label != 0)] += &row;
    }
    means[0] /= count0 as f64;
    means[1] /= count1 as f64;

    // Class-centered observations, in input order.
    let mut centered = Array2::<f64>::zeros((n, d));
    for (i, (row, &label)) in features.outer_iter().zip(labels.iter()).enumerate() {
        let mean = &means[usize::from(label != 0)];
        centered.row_mut(i).assign(&(&row - mean));
    }

    let gamma = match shrinkage {
        Shrinkage::Auto => ledoit_wolf_shrinkage(centered.view())?,
        Shrinkage::Fixed(g) => g.clamp(0.0, 1.0),
    };

    let pooled = centered.t().dot(&centered) / n as f64;
    let mu = pooled.diag().sum() / d as f64;
    let mean_diff = &means[1] - &means[0];

    let solve_with = |g: f64| -> Result<Array1<f64>, LinalgError> {
        let mut shrunk = &pooled * (1.0 - g);
        for i in 0..d {
            shrunk[[i, i]] += g * mu;
        }
        linalg::solve_spd(&shrunk, &mean_diff)
    };
    let (weights, gamma) = match solve_with(gamma) {
        Ok(w) => (w, gamma),
        // Singular at (near-)zero shrinkage: retry with a small floor.
        Err(_) if gamma < 1e-6 => {
            let floor = 1e-6;
            let w = solve_with(floor).map_err(LdaError::SingularCovariance)?;
            (w, floor)
        }
        Err(e) => return Err(LdaError::SingularCovariance(e)),
    };

    let priors = [count0 as f64 / n as f64, count1 as f64 / n as f64];
    let mid = (&means[0] + &means[1]) / 2.0;
    let bias = -weights.dot(&mid) + (priors[1] / priors[0]).ln();

    Ok(LdaModel {
        weights,
        bias,
        shrinkage: gamma,
        class_means: means,
        priors,
    })
}

/// Predicts the binary label for one feature vector.
pub fn predict_lda(model: &LdaModel, feature: ArrayView1<'_, f64>) -> Result<u8, LdaError> {
    if feature.len() != model.n_features() {
        return Err(LdaError::DimensionMismatch {
            got: feature.len(),
            expected: model.n_features(),
        });
    }
    Ok(model.predict(feature))
}

/// Predicts a batch of feature vectors (rows).
pub fn predict_batch(model: &LdaModel, features: ArrayView2<'_, f64>) -> Result<Vec<u8>, LdaError> {
    if features.ncols() != model.n_features() {
        return Err(LdaError::DimensionMismatch {
            got: features.ncols(),
            expected: model.n_features(),
        });
    }
    Ok(features
        .axis_iter(Axis(0))
        .map(|row| model.predict(row))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_covariance_makes_shrinkage_immaterial() {
        // Sample covariance is exactly scaled identity: the shrunk
        // covariance equals S for every gamma.
        let x = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let s = x.t().dot(&x) / 4.0;
        let gamma = ledoit_wolf_shrinkage(x.view()).unwrap();
        let mu = s.diag().sum() / 2.0;
        let mut shrunk = &s * (1.0 - gamma);
        for i in 0..2 {
            shrunk[[i, i]] += gamma * mu;
        }
        for (a, b) in s.iter().zip(shrunk.iter()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn raw_intensity_above_one_is_clamped() {
        assert_eq!(shrinkage_from_parts(1.3, 1.0), 1.0);
        assert_eq!(shrinkage_from_parts(-0.5, 1.0), 0.0);
        assert_eq!(shrinkage_from_parts(0.25, 1.0), 0.25);
    }

    #[test]
    fn gamma_matches_textbook_formula_oracle() {
        let x = array![
            [0.9, -0.4],
            [-1.2, 0.7],
            [0.3, 1.5],
            [-0.1, -0.9],
            [1.8, 0.2],
            [-1.7, -1.1],
        ];
        let gamma = ledoit_wolf_shrinkage(x.view()).unwrap();

        // Independent route: delta and beta from their definitions as
        // Frobenius norms over explicit outer products.
        let (n, d) = x.dim();
        let s = x.t().dot(&x) / n as f64;
        let mu = s.diag().sum() / d as f64;
        let mut delta = 0.0;
        for i in 0..d {
            for j in 0..d {
                let t = if i == j { mu } else { 0.0 };
                delta += (s[[i, j]] - t) * (s[[i, j]] - t);
            }
        }
        delta /= d as f64;
        let mut beta_bar = 0.0;
        for t in 0..n {
            for i in 0..d {
                for j in 0..d {
                    let outer = x[[t, i]] * x[[t, j]];
                    beta_bar += (outer - s[[i, j]]) * (outer - s[[i, j]]);
                }
            }
        }
        beta_bar /= (n * n * d) as f64;
        let expected = (beta_bar.min(delta) / delta).clamp(0.0, 1.0);
        assert!((gamma - expected).abs() < 1e-10, "{gamma} vs {expected}");
    }

    #[test]
    fn too_few_samples_is_an_error() {
        let x = array![[1.0, 2.0]];
        assert!(matches!(
            ledoit_wolf_shrinkage(x.view()),
            Err(LdaError::TooFewSamples(1))
        ));
    }

    #[test]
    fn one_dimensional_threshold_is_the_midpoint() {
        let features = array![[-1.0], [1.0], [1.0], [3.0]];
        let labels = [0u8, 0, 1, 1];
        let model = fit_lda(features.view(), &labels).unwrap();
        assert_eq!(model.score(array![1.0].view()), 0.0);
        assert_eq!(model.predict(array![1.0].view()), 0); // tie rule
        assert_eq!(model.predict(array![0.99].view()), 0);
        assert_eq!(model.predict(array![1.01].view()), 1);
    }

    #[test]
    fn swapping_labels_negates_weights_and_bias() {
        let mut rng = ChaCha8Rng::seed_from_u64(61);
        let n = 30;
        let mut features = Array2::<f64>::zeros((n, 3));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            labels.push(label);
            for j in 0..3 {
                features[[i, j]] = rng.gen_range(-1.0..1.0) + label as f64 * 0.7;
            }
        }
        let swapped: Vec<u8> = labels.iter().map(|&l| 1 - l).collect();
        let a = fit_lda(features.view(), &labels).unwrap();
        let b = fit_lda(features.view(), &swapped).unwrap();
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            assert!((x + y).abs() < 1e-12);
        }
        assert!((a.bias + b.bias).abs() < 1e-12);
    }

    #[test]
    fn monte_carlo_weights_approach_analytic_discriminant() {
        // 2-D Gaussians with shared covariance; weights should approach
        // Sigma^-1 (mu1 - mu0) up to sampling error at n = 10^4.
        let mut rng = ChaCha8Rng::seed_from_u64(67);
        let n_per_class = 10_000;
        // Sigma = A A^T with A = [[1, 0], [0.4, 0.8]]
        let a = [[1.0, 0.0], [0.4, 0.8]];
        let sigma = array![
            [1.0, 0.4],
            [0.4, 0.4 * 0.4 + 0.8 * 0.8]
        ];
        let mu0 = [0.0, 0.0];
        let mu1 = [1.0, 0.5];

        let n = 2 * n_per_class;
        let mut features = Array2::<f64>::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        let normal = move |rng: &mut ChaCha8Rng| {
            // Box-Muller
            let u1: f64 = rng.gen_range(1e-12..1.0);
            let u2: f64 = rng.gen_range(0.0..1.0);
            (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
        };
        for i in 0..n {
            let label = (i >= n_per_class) as u8;
            let mu = if label == 0 { mu0 } else { mu1 };
            let z = [normal(&mut rng), normal(&mut rng)];
            features[[i, 0]] = mu[0] + a[0][0] * z[0] + a[0][1] * z[1];
            features[[i, 1]] = mu[1] + a[1][0] * z[0] + a[1][1] * z[1];
            labels.push(label);
        }
        let model = fit_lda(features.view(), &labels).unwrap();

        let diff = array![mu1[0] - mu0[0], mu1[1] - mu0[1]];
        let analytic = crate::linalg::solve_spd(&sigma, &diff).unwrap();
        let norm = analytic.dot(&analytic).sqrt();
        for (w, t) in model.weights.iter().zip(analytic.iter()) {
            assert!(
                (w - t).abs() <= 0.05 * norm,
                "weight {w} vs analytic {t} (norm {norm})"
            );
        }
    }

    #[test]
    fn prediction_at_own_mean_and_batch_consistency() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        let n = 40;
        let mut features = Array2::<f64>::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            labels.push(label);
            features[[i, 0]] = rng.gen_range(-0.5..0.5) + label as f64 * 3.0;
            features[[i, 1]] = rng.gen_range(-0.5..0.5);
        }
        let model = fit_lda(features.view(), &labels).unwrap();
        assert_eq!(model.predict(model.class_means[1].view()), 1);

        let batch = predict_batch(&model, features.view()).unwrap();
        for (i, row) in features.outer_iter().enumerate() {
            assert_eq!(batch[i], predict_lda(&model, row).unwrap());
        }
    }

    #[test]
    fn single_class_input_is_rejected() {
        let features = array![[1.0], [2.0]];
        assert!(matches!(
            fit_lda(features.view(), &[0, 0]),
            Err(LdaError::SingleClass)
        ));
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let features = array![[-1.0], [-0.8], [0.8], [1.0]];
        let model = fit_lda_with(features.view(), &[0, 0, 1, 1], Shrinkage::Fixed(0.5)).unwrap();
        assert!(matches!(
            predict_lda(&model, array![1.0, 2.0].view()),
            Err(LdaError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn affine_invariance_of_predictions_at_zero_shrinkage() {
        let mut rng = ChaCha8Rng::seed_from_u64(73);
        let n = 60;
        let mut features = Array2::<f64>::zeros((n, 3));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            labels.push(label);
            for j in 0..3 {
                features[[i, j]] = rng.gen_range(-1.0..1.0) + label as f64 * 1.5;
            }
        }
        let transform = array![[1.2, 0.3, -0.4], [0.0, 0.8, 0.25], [0.5, -0.2, 1.1]];
        let mapped = features.dot(&transform.t());

        let base = fit_lda_with(features.view(), &labels, Shrinkage::Fixed(0.0)).unwrap();
        let moved = fit_lda_with(mapped.view(), &labels, Shrinkage::Fixed(0.0)).unwrap();
        for (row_a, row_b) in features.outer_iter().zip(mapped.outer_iter()) {
            let sa = base.score(row_a);
            let sb = moved.score(row_b);
            assert!((sa - sb).abs() < 1e-9, "{sa} vs {sb}");
            assert_eq!(base.predict(row_a), moved.predict(row_b));
        }
    }

    #[test]
    fn full_shrinkage_reduces_to_nearest_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(79);
        let n = 40;
        let mut features = Array2::<f64>::zeros((n, 2));
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let label = (i % 2) as u8;
            labels.push(label);
            features[[i, 0]] = rng.gen_range(-1.0..1.0) + label as f64 * 2.0;
            features[[i, 1]] = rng.gen_range(-1.0..1.0) - label as f64 * 1.0;
        }
        let model = fit_lda_with(features.view(), &labels, Shrinkage::Fixed(1.0)).unwrap();
        let dist = |x: ArrayView1<f64>, m: &Array1<f64>| -> f64 {
            x.iter().zip(m.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
        };
        for row in features.outer_iter() {
            let d0 = dist(row, &model.class_means[0]);
            let d1 = dist(row, &model.class_means[1]);
            if (d0 - d1).abs() > 1e-9 {
                let nearest = (d1 < d0) as u8;
                assert_eq!(model.predict(row), nearest);
            }
        }
    }

    #[test]
    fn degenerate_features_fall_back_to_shrinkage_floor() {
        // Identical rows per class: zero pooled covariance at gamma ~ 0.
        let features = array![[1.0, 2.0], [1.0, 2.0], [3.0, 4.0], [3.0, 4.0]];
        let labels = [0u8, 0, 1, 1];
        let model = fit_lda_with(features.view(), &labels, Shrinkage::Fixed(0.0));
        // Target is also zero here, so the solve cannot succeed at all.
        assert!(model.is_err());

        // With per-class variance in one dimension only the floor helps.
        let features = array![[1.0, 2.0], [1.1, 2.0], [3.0, 4.0], [3.1, 4.0]];
        let model = fit_lda_with(features.view(), &labels, Shrinkage::Fixed(0.0)).unwrap();
        assert!(model.shrinkage >= 1e-6);
    }
}

//! Common Spatial Patterns.
//!
//! CSP solves the generalized eigenvalue problem between two class
//! covariances, `C_left w = lambda (C_left + C_right) w`, and keeps the
//! eigenvectors at both eigenvalue extremes: projections along them have
//! maximal variance ratio between the classes (Ramoser et al., 2000).
//! Log-variance of the projected epochs is the classification feature.
//!
//! The solve whitens the composite covariance with its Cholesky factor
//! and diagonalizes the whitened left covariance, so filters satisfy
//! `w^T (C_left + C_right) w = 1` and eigenvalues land in [0, 1].

use crate::linalg::{self, LinalgError};
use crate::preprocess::EpochSet;
use ndarray::{Array1, Array2, ArrayView2, Axis};
use thiserror::Error;

/// Ridge added to the composite covariance, relative to its mean
/// diagonal; guards rank deficiency from short windows.
const RIDGE_EPSILON: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum CspError {
    #[error("no trials carry label {0}")]
    NoTrialsWithLabel(u8),
    #[error("trial {0} has zero total variance")]
    DegenerateTrial(usize),
    #[error("epoch is degenerate: zero variance along component {0}")]
    DegenerateEpoch(usize),
    #[error("covariance matrices disagree in shape: {0}x{0} vs {1}x{1}")]
    ShapeMismatch(usize, usize),
    #[error("n_components must be even, at least 2, and at most the channel count; got {n_components} for {n_channels} channels")]
    BadComponentCount {
        n_components: usize,
        n_channels: usize,
    },
    #[error("epoch has {got} channels, model expects {expected}")]
    ChannelMismatch { got: usize, expected: usize },
    #[error("composite covariance is singular beyond ridge repair")]
    SingularComposite(#[source] LinalgError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Fitted spatial filters.
///
/// `filters` rows are the selected generalized eigenvectors, ordered as
/// the components with the largest eigenvalues first, then those with
/// the smallest; `eigenvalues` holds the matching lambda in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct CspModel {
    pub filters: Array2<f64>,
    pub eigenvalues: Vec<f64>,
    pub n_components: usize,
}

impl CspModel {
    pub fn n_channels(&self) -> usize {
        self.filters.ncols()
    }
}

/// Covariance of one trial, `X X^T / samples`, without mean removal.
pub fn trial_covariance(epoch: ArrayView2<'_, f64>) -> Array2<f64> {
    let samples = epoch.ncols() as f64;
    epoch.dot(&epoch.t()) / samples
}

/// Scales a covariance to unit trace.
pub fn normalize_trace(cov: &Array2<f64>, trial_idx: usize) -> Result<Array2<f64>, CspError> {
    let trace: f64 = cov.diag().sum();
    if trace.is_nan() || trace <= 0.0 {
        return Err(CspError::DegenerateTrial(trial_idx));
    }
    Ok(cov / trace)
}

/// Average of trace-normalized per-trial covariances for one class.
///
/// Trace normalization makes the estimate robust to inter-trial
/// amplitude differences; the result is symmetric PSD with trace 1.
pub fn class_covariance(epochs: &EpochSet, label: u8) -> Result<Array2<f64>, CspError> {
    let n_channels = epochs.n_channels();
    let mut acc = Array2::<f64>::zeros((n_channels, n_channels));
    let mut count = 0usize;
    for (idx, trial_label) in epochs.labels.iter().enumerate() {
        if *trial_label != label {
            continue;
        }
        let cov = trial_covariance(epochs.trial(idx));
        acc += &normalize_trace(&cov, idx)?;
        count += 1;
    }
    if count == 0 {
        return Err(CspError::NoTrialsWithLabel(label));
    }
    Ok(acc / count as f64)
}

/// All generalized eigenvalues of `c_left w = lambda (c_left + c_right) w`,
/// sorted in descending order.
pub fn generalized_eigenvalues(
    c_left: &Array2<f64>,
    c_right: &Array2<f64>,
) -> Result<Vec<f64>, CspError> {
    let (values, _, _) = whiten_and_diagonalize(c_left, c_right)?;
    Ok(values.to_vec())
}

/// (eigenvalues desc, whitened eigenvectors as columns, Cholesky factor
/// of the ridged composite).
type WhitenedEigen = (Array1<f64>, Array2<f64>, Array2<f64>);

/// Whitens the composite covariance and diagonalizes the whitened left
/// covariance.
fn whiten_and_diagonalize(
    c_left: &Array2<f64>,
    c_right: &Array2<f64>,
) -> Result<WhitenedEigen, CspError> {
    if c_left.nrows() != c_right.nrows() {
        return Err(CspError::ShapeMismatch(c_left.nrows(), c_right.nrows()));
    }
    linalg::check_symmetric(c_left)?;
    linalg::check_symmetric(c_right)?;
    let n = c_left.nrows();

    let mut composite = c_left + c_right;
    let mean_diag = composite.diag().sum() / n as f64;
    let ridge = RIDGE_EPSILON * mean_diag;
    for i in 0..n {
        composite[[i, i]] += ridge;
    }
    let chol = linalg::cholesky(&composite).map_err(CspError::SingularComposite)?;

    // S = L^-1 C_left L^-T, computed column by column.
    let mut half = Array2::<f64>::zeros((n, n));
    for (j, col) in c_left.axis_iter(Axis(1)).enumerate() {
        let solved = linalg::solve_lower(&chol, &col.to_owned());
        half.column_mut(j).assign(&solved);
    }
    let half_t = half.t().to_owned();
    let mut whitened = Array2::<f64>::zeros((n, n));
    for (j, col) in half_t.axis_iter(Axis(1)).enumerate() {
        let solved = linalg::solve_lower(&chol, &col.to_owned());
        whitened.column_mut(j).assign(&solved);
    }
    // Symmetrize away the rounding from the two triangular solves.
    let whitened_sym = (&whitened + &whitened.t()) / 2.0;

    let (values, vectors) = linalg::sym_eig(&whitened_sym)?;
    let values = values.mapv(|v| v.clamp(0.0, 1.0));
    Ok((values, vectors, chol))
}

/// Fits CSP filters from the two class covariances.
///
/// Selects `n_components/2` eigenvectors from each eigenvalue extreme,
/// scales them so `w^T (c_left + c_right) w = 1`, and fixes each
/// filter's sign so its largest-magnitude entry is positive.
pub fn fit_csp(
    c_left: &Array2<f64>,
    c_right: &Array2<f64>,
    n_components: usize,
) -> Result<CspModel, CspError> {
    let n = c_left.nrows();
    if n_components < 2 || !n_components.is_multiple_of(2) || n_components > n {
        return Err(CspError::BadComponentCount {
            n_components,
            n_channels: n,
        });
    }
    let (values, vectors, chol) = whiten_and_diagonalize(c_left, c_right)?;

    let half = n_components / 2;
    let mut selected = Vec::with_capacity(n_components);
    selected.extend(0..half); // largest eigenvalues
    selected.extend((n - half..n).rev()); // smallest, most extreme first

    let mut filters = Array2::<f64>::zeros((n_components, n));
    let mut eigenvalues = Vec::with_capacity(n_components);
    for (row, &col) in selected.iter().enumerate() {
        let v = vectors.column(col).to_owned();
        let mut w = linalg::solve_lower_transpose(&chol, &v);
        let mut max_idx = 0;
        for (i, value) in w.iter().enumerate() {
            if value.abs() > w[max_idx].abs() {
                max_idx = i;
            }
        }
        if w[max_idx] < 0.0 {
            w.mapv_inplace(|v| -v);
        }
        filters.row_mut(row).assign(&w);
        eigenvalues.push(values[col]);
    }

    Ok(CspModel {
        filters,
        eigenvalues,
        n_components,
    })
}

/// Log-variance features from a precomputed trial covariance:
/// `feature_i = log(w_i^T C w_i)`.
pub fn csp_features_from_covariance(
    model: &CspModel,
    cov: &Array2<f64>,
) -> Result<Array1<f64>, CspError> {
    if cov.nrows() != model.n_channels() {
        return Err(CspError::ChannelMismatch {
            got: cov.nrows(),
            expected: model.n_channels(),
        });
    }
    let mut features = Array1::<f64>::zeros(model.n_components);
    for (i, w) in model.filters.outer_iter().enumerate() {
        let variance = w.dot(&cov.dot(&w));
        if variance.is_nan() || variance <= 0.0 || !variance.is_finite() {
            return Err(CspError::DegenerateEpoch(i));
        }
        features[i] = variance.ln();
    }
    Ok(features)
}

/// Log-variance features of one epoch:
/// `feature_i = log(mean_t (w_i^T x_t)^2)`.
pub fn csp_features(model: &CspModel, epoch: ArrayView2<'_, f64>) -> Result<Array1<f64>, CspError> {
    if epoch.nrows() != model.n_channels() {
        return Err(CspError::ChannelMismatch {
            got: epoch.nrows(),
            expected: model.n_channels(),
        });
    }
    csp_features_from_covariance(model, &trial_covariance(epoch))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocess::{BandSpec, TimeWindow};
    use ndarray::{array, Array3};
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn epochs_from(data: Array3<f64>, labels: Vec<u8>) -> EpochSet {
        EpochSet {
            data,
            labels,
            band: BandSpec::new(8.0, 12.0),
            window: TimeWindow::new(0.0, 2.0),
            sampling_rate: 160.0,
            skipped_events: 0,
        }
    }

    fn random_spd(n: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        let mut b = Array2::<f64>::zeros((n, n));
        for v in b.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let mut spd = b.t().dot(&b);
        for i in 0..n {
            spd[[i, i]] += 0.05;
        }
        spd
    }

    #[test]
    fn duplicated_channel_covariance_is_rank_one() {
        let mut data = Array3::<f64>::zeros((1, 2, 4));
        for t in 0..4 {
            let v = (t as f64 + 1.0) * 0.5;
            data[[0, 0, t]] = v;
            data[[0, 1, t]] = v;
        }
        let set = epochs_from(data, vec![0]);
        let cov = class_covariance(&set, 0).unwrap();
        // Rank one with all entries equal; trace normalization pins the
        // diagonal of a 2x2 at 0.5 each.
        for v in cov.iter() {
            assert!((v - 0.5).abs() < 1e-12, "entry {v}");
        }
        let trace: f64 = cov.diag().sum();
        assert!((trace - 1.0).abs() < 1e-12);
        // Rank 1: determinant vanishes.
        let det = cov[[0, 0]] * cov[[1, 1]] - cov[[0, 1]] * cov[[1, 0]];
        assert!(det.abs() < 1e-12);
    }

    #[test]
    fn independent_noise_covariance_approaches_scaled_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let (channels, samples, trials) = (4, 2000, 40);
        let mut data = Array3::<f64>::zeros((trials, channels, samples));
        for v in data.iter_mut() {
            // Uniform on [-sqrt(3), sqrt(3)] has unit variance.
            *v = rng.gen_range(-1.0_f64..1.0) * 3.0_f64.sqrt();
        }
        let set = epochs_from(data, vec![0; trials]);
        let cov = class_covariance(&set, 0).unwrap();
        for i in 0..channels {
            for j in 0..channels {
                let expect = if i == j { 0.25 } else { 0.0 };
                assert!(
                    (cov[[i, j]] - expect).abs() < 0.05,
                    "cov[{i},{j}] = {}",
                    cov[[i, j]]
                );
            }
        }
    }

    #[test]
    fn missing_label_is_an_error() {
        let data = Array3::<f64>::ones((2, 2, 8));
        let set = epochs_from(data, vec![0, 0]);
        assert!(matches!(
            class_covariance(&set, 1),
            Err(CspError::NoTrialsWithLabel(1))
        ));
    }

    #[test]
    fn equal_covariances_give_half_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = random_spd(6, &mut rng);
        let model = fit_csp(&c, &c, 4).unwrap();
        for lambda in &model.eigenvalues {
            assert!((lambda - 0.5).abs() < 1e-9, "lambda {lambda}");
        }
    }

    #[test]
    fn two_by_two_diagonal_case_is_analytic() {
        let c_left = array![[2.0, 0.0], [0.0, 1.0]];
        let c_right = array![[1.0, 0.0], [0.0, 2.0]];
        let model = fit_csp(&c_left, &c_right, 2).unwrap();
        // The 1e-10 ridge shifts the analytic eigenvalues at that order.
        assert!((model.eigenvalues[0] - 2.0 / 3.0).abs() < 1e-9);
        assert!((model.eigenvalues[1] - 1.0 / 3.0).abs() < 1e-9);
        // Filters along the coordinate axes, scaled so w^T (Cl + Cr) w = 1.
        let w0 = model.filters.row(0);
        let w1 = model.filters.row(1);
        assert!(w0[1].abs() < 1e-12 && w1[0].abs() < 1e-12);
        assert!((w0[0] - 1.0 / 3.0_f64.sqrt()).abs() < 1e-9);
        assert!((w1[1] - 1.0 / 3.0_f64.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn eigenvalues_invariant_under_congruence() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.gen_range(2..=8);
            let c1 = random_spd(n, &mut rng);
            let c2 = random_spd(n, &mut rng);
            // Well-conditioned random invertible mixing.
            let mut a = Array2::<f64>::zeros((n, n));
            let scale = 0.25 / (n as f64).sqrt();
            for v in a.iter_mut() {
                *v = rng.gen_range(-1.0..1.0) * scale;
            }
            for i in 0..n {
                a[[i, i]] += 1.0;
            }
            let c1m = a.t().dot(&c1).dot(&a);
            let c2m = a.t().dot(&c2).dot(&a);
            let base = generalized_eigenvalues(&c1, &c2).unwrap();
            let mixed = generalized_eigenvalues(&c1m, &c2m).unwrap();
            for (x, y) in base.iter().zip(mixed.iter()) {
                assert!((x - y).abs() < 1e-6, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn simultaneous_diagonalization_with_full_components() {
        let mut rng = ChaCha8Rng::seed_from_u64(29);
        for n in [2usize, 4, 8, 16] {
            let c1 = random_spd(n, &mut rng);
            let c2 = random_spd(n, &mut rng);
            let model = fit_csp(&c1, &c2, n).unwrap();
            let w = &model.filters;
            let composite = &c1 + &c2;
            let wgw = w.dot(&composite).dot(&w.t());
            let wcw = w.dot(&c1).dot(&w.t());
            for i in 0..n {
                for j in 0..n {
                    let expect = if i == j { 1.0 } else { 0.0 };
                    assert!((wgw[[i, j]] - expect).abs() < 1e-8, "WGW[{i},{j}]");
                    if i != j {
                        assert!(wcw[[i, j]].abs() < 1e-8, "WCW[{i},{j}]");
                    }
                }
            }
        }
    }

    #[test]
    fn swapping_classes_complements_eigenvalues() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let c1 = random_spd(6, &mut rng);
        let c2 = random_spd(6, &mut rng);
        let left = generalized_eigenvalues(&c1, &c2).unwrap();
        let right = generalized_eigenvalues(&c2, &c1).unwrap();
        for (i, lambda) in left.iter().enumerate() {
            let partner = right[left.len() - 1 - i];
            assert!((lambda + partner - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn eigenvalues_invariant_under_channel_permutation() {
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        let n = 5;
        let c1 = random_spd(n, &mut rng);
        let c2 = random_spd(n, &mut rng);
        let perm = [3usize, 0, 4, 1, 2];
        let permute = |c: &Array2<f64>| {
            let mut out = Array2::<f64>::zeros((n, n));
            for i in 0..n {
                for j in 0..n {
                    out[[i, j]] = c[[perm[i], perm[j]]];
                }
            }
            out
        };
        let base = generalized_eigenvalues(&c1, &c2).unwrap();
        let permuted = generalized_eigenvalues(&permute(&c1), &permute(&c2)).unwrap();
        for (x, y) in base.iter().zip(permuted.iter()) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn asymmetric_input_is_rejected() {
        let c1 = array![[1.0, 0.5], [0.1, 1.0]];
        let c2 = array![[1.0, 0.0], [0.0, 1.0]];
        assert!(fit_csp(&c1, &c2, 2).is_err());
    }

    #[test]
    fn odd_or_oversized_component_counts_are_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let c1 = random_spd(4, &mut rng);
        let c2 = random_spd(4, &mut rng);
        assert!(matches!(
            fit_csp(&c1, &c2, 3),
            Err(CspError::BadComponentCount { .. })
        ));
        assert!(matches!(
            fit_csp(&c1, &c2, 6),
            Err(CspError::BadComponentCount { .. })
        ));
    }

    #[test]
    fn feature_scaling_law() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let c1 = random_spd(4, &mut rng);
        let c2 = random_spd(4, &mut rng);
        let model = fit_csp(&c1, &c2, 4).unwrap();
        let mut epoch = Array2::<f64>::zeros((4, 64));
        for v in epoch.iter_mut() {
            *v = rng.gen_range(-1.0..1.0);
        }
        let f1 = csp_features(&model, epoch.view()).unwrap();
        let doubled = &epoch * 2.0;
        let f2 = csp_features(&model, doubled.view()).unwrap();
        for (a, b) in f1.iter().zip(f2.iter()) {
            assert!((b - a - 4.0_f64.ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn all_zero_epoch_is_degenerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(47);
        let c1 = random_spd(4, &mut rng);
        let c2 = random_spd(4, &mut rng);
        let model = fit_csp(&c1, &c2, 4).unwrap();
        let epoch = Array2::<f64>::zeros((4, 32));
        assert!(matches!(
            csp_features(&model, epoch.view()),
            Err(CspError::DegenerateEpoch(_))
        ));
    }

    #[test]
    fn features_match_explicit_projection_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(53);
        let c1 = random_spd(6, &mut rng);
        let c2 = random_spd(6, &mut rng);
        let model = fit_csp(&c1, &c2, 4).unwrap();
        let mut epoch = Array2::<f64>::zeros((6, 100));
        for v in epoch.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let features = csp_features(&model, epoch.view()).unwrap();
        for (i, w) in model.filters.outer_iter().enumerate() {
            let mut acc = 0.0;
            for t in 0..epoch.ncols() {
                let mut proj = 0.0;
                for ch in 0..epoch.nrows() {
                    proj += w[ch] * epoch[[ch, t]];
                }
                acc += proj * proj;
            }
            let oracle = (acc / epoch.ncols() as f64).ln();
            assert!((features[i] - oracle).abs() < 1e-12);
        }
    }
}

//! Stratified k-fold cross-validation of the CSP -> LDA pipeline.
//!
//! Spatial filters and the classifier are refit inside every training
//! fold; nothing from a test fold ever reaches fitting. Per-trial
//! covariances are computed once per combination and reused across
//! folds, which is exact because both the class covariance estimate and
//! the log-variance features are functions of them.

use crate::csp::{self, CspError, CspModel};
use crate::lda::{self, LdaError, LdaModel};
use crate::preprocess::EpochSet;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

/// Spatial filter count used throughout the pipeline.
pub const CSP_COMPONENTS: usize = 4;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("k must be at least 2, got {0}")]
    KTooSmall(usize),
    #[error("k = {k} exceeds the number of trials {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("prediction and truth lengths differ: {preds} vs {truth}")]
    LengthMismatch { preds: usize, truth: usize },
    #[error("empty prediction vector")]
    Empty,
    #[error("epoch set does not contain both classes")]
    SingleClass,
    #[error("need at least {need} channels for the {need}-component CSP, got {got}")]
    TooFewChannels { need: usize, got: usize },
    #[error("every fold was skipped: no fold had both classes in training")]
    AllFoldsSkipped,
    #[error(transparent)]
    Csp(#[from] CspError),
    #[error(transparent)]
    Lda(#[from] LdaError),
}

/// Scores of one evaluated fold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldScore {
    pub accuracy: f64,
    pub kappa: f64,
}

/// Cross-validation summary for one (band, window) combination.
///
/// Means and standard deviations are over evaluated folds; the standard
/// deviation uses the population divisor `n_folds`.
#[derive(Debug, Clone, PartialEq)]
pub struct CvSummary {
    pub accuracy_mean: f64,
    pub accuracy_std: f64,
    pub kappa_mean: f64,
    pub kappa_std: f64,
    pub n_folds: usize,
    pub per_fold: Vec<FoldScore>,
    pub skipped_folds: usize,
}

impl CvSummary {
    fn from_folds(per_fold: Vec<FoldScore>, skipped_folds: usize) -> CvSummary {
        let n = per_fold.len() as f64;
        let acc_mean = per_fold.iter().map(|f| f.accuracy).sum::<f64>() / n;
        let kap_mean = per_fold.iter().map(|f| f.kappa).sum::<f64>() / n;
        let acc_var = per_fold
            .iter()
            .map(|f| (f.accuracy - acc_mean).powi(2))
            .sum::<f64>()
            / n;
        let kap_var = per_fold
            .iter()
            .map(|f| (f.kappa - kap_mean).powi(2))
            .sum::<f64>()
            / n;
        CvSummary {
            accuracy_mean: acc_mean,
            accuracy_std: acc_var.sqrt(),
            kappa_mean: kap_mean,
            kappa_std: kap_var.sqrt(),
            n_folds: per_fold.len(),
            per_fold,
            skipped_folds,
        }
    }
}

/// Deterministic stratified fold assignment.
///
/// Returns `k` disjoint, sorted test-index sets that partition all
/// indices; per-class counts across folds differ by at most one.
pub fn stratified_kfold(labels: &[u8], k: usize, seed: u64) -> Result<Vec<Vec<usize>>, EvalError> {
    if k < 2 {
        return Err(EvalError::KTooSmall(k));
    }
    if k > labels.len() {
        return Err(EvalError::KTooLarge { k, n: labels.len() });
    }
    let mut classes: Vec<u8> = labels.to_vec();
    classes.sort_unstable();
    classes.dedup();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds: Vec<Vec<usize>> = vec![Vec::new(); k];
    // Deal each (shuffled) class round-robin; the running offset keeps
    // total fold sizes balanced across classes.
    let mut offset = 0usize;
    for class in classes {
        let mut indices: Vec<usize> = labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == class)
            .map(|(i, _)| i)
            .collect();
        indices.shuffle(&mut rng);
        let count = indices.len();
        for (j, idx) in indices.into_iter().enumerate() {
            folds[(offset + j) % k].push(idx);
        }
        offset = (offset + count) % k;
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(folds)
}

/// Fraction of exact matches.
pub fn accuracy(preds: &[u8], truth: &[u8]) -> Result<f64, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let matches = preds.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
    Ok(matches as f64 / preds.len() as f64)
}

/// Cohen's Kappa: agreement corrected for chance,
/// `kappa = (p_o - p_e) / (1 - p_e)`, with `p_e` from the marginal
/// products. Returns 0 when `p_e = 1` by convention.
pub fn cohen_kappa(preds: &[u8], truth: &[u8]) -> Result<f64, EvalError> {
    if preds.len() != truth.len() {
        return Err(EvalError::LengthMismatch {
            preds: preds.len(),
            truth: truth.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = preds.len();
    let matches = preds.iter().zip(truth.iter()).filter(|(a, b)| a == b).count();
    let truth0 = truth.iter().filter(|&&l| l == 0).count();
    let preds0 = preds.iter().filter(|&&l| l == 0).count();
    let agree_chance = truth0 * preds0 + (n - truth0) * (n - preds0);
    let p_o = matches as f64 / n as f64;
    let p_e = agree_chance as f64 / (n * n) as f64;
    if p_e >= 1.0 {
        return Ok(0.0);
    }
    Ok((p_o - p_e) / (1.0 - p_e))
}

/// Per-trial covariances, computed once and shared by all folds.
pub(crate) struct TrialCovariances {
    raw: Vec<Array2<f64>>,
    normalized: Vec<Array2<f64>>,
}

fn precompute_covariances(epochs: &EpochSet) -> Result<TrialCovariances, EvalError> {
    let mut raw = Vec::with_capacity(epochs.n_trials());
    let mut normalized = Vec::with_capacity(epochs.n_trials());
    for idx in 0..epochs.n_trials() {
        let cov = csp::trial_covariance(epochs.trial(idx));
        normalized.push(csp::normalize_trace(&cov, idx)?);
        raw.push(cov);
    }
    Ok(TrialCovariances { raw, normalized })
}

fn average_class_covariance(
    covs: &TrialCovariances,
    labels: &[u8],
    indices: &[usize],
    label: u8,
) -> Result<Array2<f64>, EvalError> {
    let n = covs.normalized[0].nrows();
    let mut acc = Array2::<f64>::zeros((n, n));
    let mut count = 0usize;
    for &idx in indices {
        if labels[idx] == label {
            acc += &covs.normalized[idx];
            count += 1;
        }
    }
    if count == 0 {
        return Err(EvalError::Csp(CspError::NoTrialsWithLabel(label)));
    }
    Ok(acc / count as f64)
}

/// Fits CSP and LDA on the given training trials only.
pub(crate) fn fit_fold(
    epochs: &EpochSet,
    covs: &TrialCovariances,
    train: &[usize],
) -> Result<(CspModel, LdaModel), EvalError> {
    let c_left = average_class_covariance(covs, &epochs.labels, train, 0)?;
    let c_right = average_class_covariance(covs, &epochs.labels, train, 1)?;
    let model = csp::fit_csp(&c_left, &c_right, CSP_COMPONENTS)?;

    let mut features = Array2::<f64>::zeros((train.len(), CSP_COMPONENTS));
    let mut labels = Vec::with_capacity(train.len());
    for (row, &idx) in train.iter().enumerate() {
        let f = csp::csp_features_from_covariance(&model, &covs.raw[idx])?;
        features.row_mut(row).assign(&f);
        labels.push(epochs.labels[idx]);
    }
    let classifier = lda::fit_lda(features.view(), &labels)?;
    Ok((model, classifier))
}

/// Runs stratified k-fold cross-validation of the CSP -> LDA pipeline
/// for one (band, window) combination.
///
/// Folds whose training side lacks a class are skipped and counted in
/// `skipped_folds`.
pub fn cross_validate_combination(
    epochs: &EpochSet,
    k: usize,
    seed: u64,
) -> Result<CvSummary, EvalError> {
    if !epochs.has_both_labels() {
        return Err(EvalError::SingleClass);
    }
    if epochs.n_channels() < CSP_COMPONENTS {
        return Err(EvalError::TooFewChannels {
            need: CSP_COMPONENTS,
            got: epochs.n_channels(),
        });
    }
    let folds = stratified_kfold(&epochs.labels, k, seed)?;
    let covs = precompute_covariances(epochs)?;
    let n_trials = epochs.n_trials();

    let mut per_fold = Vec::with_capacity(k);
    let mut skipped = 0usize;
    for test in &folds {
        let in_test = {
            let mut mask = vec![false; n_trials];
            for &idx in test {
                mask[idx] = true;
            }
            mask
        };
        let train: Vec<usize> = (0..n_trials).filter(|&i| !in_test[i]).collect();
        let has_both = train.iter().any(|&i| epochs.labels[i] == 0)
            && train.iter().any(|&i| epochs.labels[i] == 1);
        if !has_both || test.is_empty() {
            skipped += 1;
            continue;
        }
        let (model, classifier) = fit_fold(epochs, &covs, &train)?;

        let mut preds = Vec::with_capacity(test.len());
        let mut truth = Vec::with_capacity(test.len());
        for &idx in test {
            let f = csp::csp_features_from_covariance(&model, &covs.raw[idx])?;
            preds.push(classifier.predict(f.view()));
            truth.push(epochs.labels[idx]);
        }
        per_fold.push(FoldScore {
            accuracy: accuracy(&preds, &truth)?,
            kappa: cohen_kappa(&preds, &truth)?,
        });
    }
    if per_fold.is_empty() {
        return Err(EvalError::AllFoldsSkipped);
    }
    Ok(CvSummary::from_folds(per_fold, skipped))
}

/// Test-only access to per-fold fitting, for leakage checks.
#[cfg(test)]
pub(crate) fn fit_fold_for_test(
    epochs: &EpochSet,
    train: &[usize],
) -> Result<(CspModel, LdaModel), EvalError> {
    let covs = precompute_covariances(epochs)?;
    fit_fold(epochs, &covs, train)
}

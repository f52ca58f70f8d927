//! Classification harness comparing balanced, imbalanced and augmented
//! training sets on one shared real test set.

use serde::{Deserialize, Serialize};

use super::classifier::{Classifier, ClassifierConfig};
use super::scores::{average_precision, binary_scores, pr_curve_auc, roc_auc};
use crate::error::{Error, Result};

/// Fraction of the positive training pool kept in the imbalanced scenario
/// (350 of 7000).
pub const DEFAULT_MINORITY_RATIO: f64 = 0.05;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HarnessConfig {
    pub minority_ratio: f64,
    pub threshold: f64,
    pub classifier: ClassifierConfig,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        HarnessConfig {
            minority_ratio: DEFAULT_MINORITY_RATIO,
            threshold: DEFAULT_THRESHOLD,
            classifier: ClassifierConfig::default(),
        }
    }
}

/// Real beats of the positive (synthesized) class and the negative class.
#[derive(Debug, Clone, Default)]
pub struct HarnessData {
    pub train_pos: Vec<Vec<f64>>,
    pub train_neg: Vec<Vec<f64>>,
    pub test_pos: Vec<Vec<f64>>,
    pub test_neg: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioScores {
    pub n_train_pos: usize,
    pub n_train_neg: usize,
    /// Macro precision at the threshold.
    pub precision: f64,
    pub positive_precision: f64,
    pub recall: f64,
    pub average_precision: f64,
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub confusion: [[f64; 2]; 2],
    /// Shared-test-set scores, kept for plotting.
    #[serde(skip)]
    pub test_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarnessReport {
    pub balanced: ScenarioScores,
    pub imbalanced: ScenarioScores,
    pub real_augmented: ScenarioScores,
    /// Imbalanced plus synthetic positives, one entry per case.
    pub augmented: Vec<(String, ScenarioScores)>,
}

impl HarnessConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.minority_ratio > 0.0 && self.minority_ratio <= 1.0) {
            return Err(Error::Config(format!("minority_ratio must be in (0, 1], got {}", self.minority_ratio)));
        }
        if !self.threshold.is_finite() || self.classifier.epochs == 0 || self.classifier.batch_size == 0 {
            return Err(Error::Config("threshold must be finite and classifier epochs/batch_size positive".into()));
        }
        Ok(())
    }
}

impl HarnessData {
    pub fn minority_count(&self, ratio: f64) -> usize {
        ((ratio * self.train_pos.len() as f64).round() as usize).clamp(1, self.train_pos.len())
    }

    pub fn test_set(&self) -> (Vec<Vec<f64>>, Vec<u8>) {
        let mut beats = self.test_pos.clone();
        beats.extend(self.test_neg.iter().cloned());
        let mut labels = vec![1u8; self.test_pos.len()];
        labels.extend(vec![0u8; self.test_neg.len()]);
        (beats, labels)
    }
}

/// Trains a fresh classifier (fixed init and shuffle seeds) and scores it on
/// the test set.
pub fn run_scenario(
    pos: &[Vec<f64>],
    neg: &[Vec<f64>],
    test: &(Vec<Vec<f64>>, Vec<u8>),
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<ScenarioScores> {
    if pos.is_empty() || neg.is_empty() {
        return Err(Error::Insufficient("each training class needs at least one beat".into()));
    }
    let len = pos[0].len();
    let mut beats = pos.to_vec();
    beats.extend(neg.iter().cloned());
    let mut labels = vec![1u8; pos.len()];
    labels.extend(vec![0u8; neg.len()]);
    let clf = Classifier::new(len, &cfg.classifier, seed)?;
    clf.fit(&beats, &labels, &cfg.classifier, seed.wrapping_add(1))?;
    let (test_beats, test_labels) = test;
    let scores = clf.predict(test_beats)?;
    let b = binary_scores(test_labels, &scores, cfg.threshold)?;
    Ok(ScenarioScores {
        n_train_pos: pos.len(),
        n_train_neg: neg.len(),
        precision: b.macro_precision,
        positive_precision: b.precision,
        recall: b.recall,
        average_precision: average_precision(test_labels, &scores)?,
        pr_auc: pr_curve_auc(test_labels, &scores)?.1,
        roc_auc: roc_auc(test_labels, &scores)?,
        confusion: b.confusion,
        test_scores: scores,
    })
}

/// Runs the balanced, imbalanced and real-augmented baselines and one
/// synthetic-augmented scenario per case.
///
/// The imbalanced set keeps the first `minority_count` positive training
/// beats. Augmentation restores the positive count either with the dropped
/// real beats or with the leading beats of each synthetic pool.
pub fn classification_harness(
    data: &HarnessData,
    synth_by_case: &[(String, Vec<Vec<f64>>)],
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<HarnessReport> {
    cfg.validate()?;
    if data.train_pos.is_empty() || data.train_neg.is_empty() {
        return Err(Error::Insufficient("harness needs real training beats of both classes".into()));
    }
    if data.test_pos.is_empty() || data.test_neg.is_empty() {
        return Err(Error::Insufficient("harness needs real test beats of both classes".into()));
    }
    let m = data.minority_count(cfg.minority_ratio);
    let need = data.train_pos.len() - m;
    for (case, pool) in synth_by_case {
        if pool.len() < need {
            return Err(Error::Insufficient(format!(
                "case {case}: {} synthetic beats, {need} needed (short by {})",
                pool.len(),
                need - pool.len()
            )));
        }
    }
    let test = data.test_set();
    let minority = &data.train_pos[..m];
    let with = |extra: &[Vec<f64>]| {
        let mut p = minority.to_vec();
        p.extend(extra.iter().cloned());
        p
    };
    let neg = &data.train_neg;
    let balanced = run_scenario(&data.train_pos, neg, &test, cfg, seed)?;
    let imbalanced = run_scenario(minority, neg, &test, cfg, seed)?;
    let real_augmented = run_scenario(&with(&data.train_pos[m..]), neg, &test, cfg, seed)?;
    let mut augmented = Vec::with_capacity(synth_by_case.len());
    for (case, pool) in synth_by_case {
        augmented.push((case.clone(), run_scenario(&with(&pool[..need]), neg, &test, cfg, seed)?));
    }
    Ok(HarnessReport { balanced, imbalanced, real_augmented, augmented })
}

//! Evaluation documents combining quality, distribution and harness scores.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::distance::{avg_distance_to_template, mmd_linear, Metric};
use super::harness::{classification_harness, HarnessConfig, HarnessData, ScenarioScores};
use super::scores::{pr_curve_auc, roc_curve, PrPoint};
use crate::error::{Error, Result};
use crate::signal::BeatSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    /// Class the generators synthesize.
    pub positive_label: char,
    pub negative_label: char,
    pub harness: HarnessConfig,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig { positive_label: 'N', negative_label: 'L', harness: HarnessConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateInfo {
    /// Index into the positive test beats.
    pub index: usize,
    pub record: String,
    pub r_peak: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub case_id: String,
    pub n_synthetic: usize,
    pub avg_dtw: f64,
    pub avg_frechet: f64,
    /// Squared linear-kernel MMD against the positive training beats.
    pub mmd: f64,
    /// Macro precision at the harness threshold.
    pub avg_precision: f64,
    /// Step-sum average precision.
    pub average_precision: f64,
    pub pr_auc: f64,
    pub roc_auc: f64,
    pub confusion: [[f64; 2]; 2],
}

/// Plot material for one scenario: curves on the shared test set and a few
/// training beats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseCurves {
    pub case_id: String,
    pub pr: Vec<PrPoint>,
    pub roc: Vec<(f64, f64)>,
    pub examples: Vec<Vec<f64>>,
}

/// Beats kept per case for overlays.
pub const OVERLAY_BEATS: usize = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub seed: u64,
    pub config: EvalConfig,
    pub template: TemplateInfo,
    /// Quality of held-out real beats, the reference row.
    pub real: EvalReport,
    pub balanced: ScenarioScores,
    pub imbalanced: ScenarioScores,
    pub cases: Vec<EvalReport>,
    pub template_samples: Vec<f64>,
    pub curves: Vec<CaseCurves>,
}

fn of_class(beats: &[BeatSeries], label: char) -> Vec<&BeatSeries> {
    beats.iter().filter(|b| b.label == label).collect()
}

fn samples(beats: &[&BeatSeries]) -> Vec<Vec<f64>> {
    beats.iter().map(|b| b.samples.clone()).collect()
}

fn quality(case_id: &str, set: &[Vec<f64>], template: &[f64], reference: &[Vec<f64>], s: &ScenarioScores) -> Result<EvalReport> {
    let report = EvalReport {
        case_id: case_id.to_string(),
        n_synthetic: set.len(),
        avg_dtw: avg_distance_to_template(set, template, Metric::Dtw)?,
        avg_frechet: avg_distance_to_template(set, template, Metric::Frechet)?,
        mmd: mmd_linear(set, reference)?,
        avg_precision: s.precision,
        average_precision: s.average_precision,
        pr_auc: s.pr_auc,
        roc_auc: s.roc_auc,
        confusion: s.confusion,
    };
    let finite = [report.avg_dtw, report.avg_frechet, report.mmd, report.avg_precision, report.pr_auc, report.roc_auc];
    if finite.iter().any(|v| !v.is_finite()) {
        return Err(Error::Undefined(format!("non-finite metric for case {case_id}")));
    }
    Ok(report)
}

/// Scores each synthetic set against real beats. One template is drawn per
/// evaluation from the positive test beats and shared by all cases.
pub fn evaluate(
    real_train: &[BeatSeries],
    real_test: &[BeatSeries],
    synth_by_case: &[(String, Vec<Vec<f64>>)],
    cfg: &EvalConfig,
    seed: u64,
) -> Result<Evaluation> {
    let train_pos = of_class(real_train, cfg.positive_label);
    let test_pos = of_class(real_test, cfg.positive_label);
    if test_pos.len() < 2 {
        return Err(Error::Insufficient(format!(
            "need at least 2 test beats labelled {}, got {}",
            cfg.positive_label,
            test_pos.len()
        )));
    }
    let data = HarnessData {
        train_pos: samples(&train_pos),
        train_neg: samples(&of_class(real_train, cfg.negative_label)),
        test_pos: samples(&test_pos),
        test_neg: samples(&of_class(real_test, cfg.negative_label)),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = rng.random_range(0..test_pos.len());
    let template = &data.test_pos[t];
    let harness = classification_harness(&data, synth_by_case, &cfg.harness, seed)?;

    let others: Vec<Vec<f64>> = data.test_pos.iter().enumerate().filter(|&(i, _)| i != t).map(|(_, b)| b.clone()).collect();
    let real = quality("rl", &others, template, &data.train_pos, &harness.real_augmented)?;
    let (_, test_labels) = data.test_set();
    let curves_of = |case_id: &str, s: &ScenarioScores, beats: &[Vec<f64>]| -> Result<CaseCurves> {
        Ok(CaseCurves {
            case_id: case_id.to_string(),
            pr: pr_curve_auc(&test_labels, &s.test_scores)?.0,
            roc: roc_curve(&test_labels, &s.test_scores)?,
            examples: beats.iter().take(OVERLAY_BEATS).cloned().collect(),
        })
    };
    let mut curves = vec![curves_of("rl", &harness.real_augmented, &others)?];
    let mut cases = Vec::with_capacity(synth_by_case.len());
    for ((case_id, pool), (_, scores)) in synth_by_case.iter().zip(&harness.augmented) {
        cases.push(quality(case_id, pool, template, &data.train_pos, scores)?);
        curves.push(curves_of(case_id, scores, pool)?);
    }
    Ok(Evaluation {
        seed,
        config: cfg.clone(),
        template: TemplateInfo { index: t, record: test_pos[t].record.clone(), r_peak: test_pos[t].r_peak },
        real,
        balanced: harness.balanced,
        imbalanced: harness.imbalanced,
        cases,
        template_samples: template.clone(),
        curves,
    })
}

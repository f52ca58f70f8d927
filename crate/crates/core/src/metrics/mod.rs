//! Quality, distribution and authenticity metrics.

pub mod classifier;
pub mod distance;
pub mod harness;
pub mod report;
pub mod scores;

pub use classifier::{Classifier, ClassifierConfig};
pub use distance::{avg_distance_to_template, dtw, frechet_discrete, mmd_linear, Metric};
pub use harness::{classification_harness, HarnessConfig, HarnessData, HarnessReport, ScenarioScores};
pub use report::{evaluate, CaseCurves, EvalConfig, EvalReport, Evaluation, TemplateInfo};
pub use scores::{average_precision, binary_scores, pr_curve_auc, roc_auc, roc_curve, BinaryScores, PrPoint};

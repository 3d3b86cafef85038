//! Scoring: oracle diagnostics, alignment quality, and paired tests.
//!
//! Two layers deliberately coexist. Raw metric fields are plain f64 ratios
//! and satisfy their algebraic identities (YI = Se + Sp - 1) to machine
//! precision. Presentation values are separate: diagnostic tables truncate to
//! three decimals and recompute YI from the truncated Se/Sp (matching how
//! published diagnostic tables are laid out), while task metrics and p-values
//! round half away from zero. Keeping the layers apart means no report
//! formatting choice ever leaks into downstream arithmetic.

pub mod special;
mod stats;

use serde::{Deserialize, Serialize};

use crate::alignment::{AlignmentSet, ConfusionCounts};

pub use stats::{
    paired_t_test, paired_tests, wilcoxon_signed_rank, PairedTestResult, TestMethod,
    WILCOXON_EXACT_LIMIT,
};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum EvalError {
    #[error("reference alignment is empty")]
    EmptyReference,
    #[error(
        "one-class ask set (positives={positives}, negatives={negatives}): \
         sensitivity/specificity undefined, report counts only"
    )]
    OneClassAskSet { positives: u64, negatives: u64 },
    #[error("paired samples need equal lengths >= 2 (got {x} and {y})")]
    BadPair { x: usize, y: usize },
    #[error("degenerate sample: all paired differences are zero")]
    DegenerateSample,
    #[error("non-finite value in sample")]
    NonFinite,
}

/// Rounds to three decimals, half away from zero. The epsilon absorbs binary
/// representation shortfalls (0.6 stored as 0.5999...96) without disturbing
/// genuine sub-millesimal differences at this magnitude.
pub fn round3(x: f64) -> f64 {
    let scaled = (x.abs() * 1000.0 + 0.5 + 1e-9).floor() / 1000.0;
    if x < 0.0 {
        -scaled
    } else {
        scaled
    }
}

/// Truncates toward zero to three decimals, with the same epsilon guard.
pub fn trunc3(x: f64) -> f64 {
    let scaled = (x.abs() * 1000.0 + 1e-9).floor() / 1000.0;
    if x < 0.0 {
        -scaled
    } else {
        scaled
    }
}

/// Formats a metric with exactly three decimals after [`round3`].
pub fn fmt3(x: f64) -> String {
    format!("{:.3}", round3(x))
}

/// Oracle quality on the ask set: how well accept/reject decisions track
/// reference membership.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticReport {
    pub counts: ConfusionCounts,
    pub sensitivity: f64,
    pub specificity: f64,
    /// Youden index, Se + Sp - 1 of the raw ratios.
    pub youden_index: f64,
}

impl DiagnosticReport {
    /// Table presentation of sensitivity: truncated to three decimals.
    pub fn display_sensitivity(&self) -> f64 {
        trunc3(self.sensitivity)
    }

    /// Table presentation of specificity: truncated to three decimals.
    pub fn display_specificity(&self) -> f64 {
        trunc3(self.specificity)
    }

    /// Table presentation of the Youden index: recomputed from the truncated
    /// Se/Sp so the displayed column stays internally consistent.
    pub fn display_youden(&self) -> f64 {
        round3(trunc3(self.sensitivity) + trunc3(self.specificity) - 1.0)
    }
}

/// Computes Se, Sp and YI from confusion counts.
///
/// Requires both classes present in the ask set; otherwise the ratios are
/// undefined and the error tells the caller to report counts only.
pub fn diagnose(counts: ConfusionCounts) -> Result<DiagnosticReport, EvalError> {
    let positives = counts.positives();
    let negatives = counts.negatives();
    if positives == 0 || negatives == 0 {
        return Err(EvalError::OneClassAskSet {
            positives,
            negatives,
        });
    }
    let sensitivity = counts.tp as f64 / positives as f64;
    let specificity = counts.tn as f64 / negatives as f64;
    Ok(DiagnosticReport {
        counts,
        sensitivity,
        specificity,
        youden_index: sensitivity + specificity - 1.0,
    })
}

/// Alignment quality against a reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub precision: f64,
    pub recall: f64,
    pub f_score: f64,
    pub system_size: usize,
    pub reference_size: usize,
    pub intersection_size: usize,
}

impl TaskReport {
    pub fn display_precision(&self) -> f64 {
        round3(self.precision)
    }

    pub fn display_recall(&self) -> f64 {
        round3(self.recall)
    }

    pub fn display_f_score(&self) -> f64 {
        round3(self.f_score)
    }
}

/// Precision, recall and F-measure of `system` against `reference` over
/// mapping identity keys. Precision of an empty system is defined as 0.
pub fn precision_recall_f(
    system: &AlignmentSet,
    reference: &AlignmentSet,
) -> Result<TaskReport, EvalError> {
    if reference.is_empty() {
        return Err(EvalError::EmptyReference);
    }
    let intersection_size = system.intersection(reference).len();
    let system_size = system.len();
    let reference_size = reference.len();
    let precision = if system_size == 0 {
        0.0
    } else {
        intersection_size as f64 / system_size as f64
    };
    let recall = intersection_size as f64 / reference_size as f64;
    let f_score = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(TaskReport {
        precision,
        recall,
        f_score,
        system_size,
        reference_size,
        intersection_size,
    })
}

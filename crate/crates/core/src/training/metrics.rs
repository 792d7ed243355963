//! Confusion matrices over the four classes and the metrics derived from
//! them: row-normalized percentages, per-class sensitivity, and macro
//! accuracy (the mean of the sensitivities).

use std::fmt::Write as _;

use crate::preprocess::ClassLabel;
use crate::training::TrainingError;

pub const CLASSES: usize = 4;

/// Integer counts; rows are true classes, columns are predictions.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConfusionMatrix {
    counts: [[u64; CLASSES]; CLASSES],
}

impl ConfusionMatrix {
    pub fn new() -> Self {
        Self::default()
    }

    /// Build from paired label lists.
    pub fn from_pairs(
        truths: &[ClassLabel],
        predictions: &[ClassLabel],
    ) -> Result<Self, TrainingError> {
        if truths.len() != predictions.len() {
            return Err(TrainingError::LengthMismatch {
                truths: truths.len(),
                predictions: predictions.len(),
            });
        }
        if truths.is_empty() {
            return Err(TrainingError::EmptyEvaluation);
        }
        let mut m = Self::new();
        for (t, p) in truths.iter().zip(predictions) {
            m.record(*t, *p);
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: ClassLabel, prediction: ClassLabel) {
        self.counts[truth.index()][prediction.index()] += 1;
    }

    pub fn counts(&self) -> &[[u64; CLASSES]; CLASSES] {
        &self.counts
    }

    pub fn row_sum(&self, row: usize) -> u64 {
        self.counts[row].iter().sum()
    }

    /// Rows rescaled to percentages. A row with no evaluated images comes
    /// back all-zero rather than dividing by zero.
    pub fn row_percentages(&self) -> [[f64; CLASSES]; CLASSES] {
        let mut out = [[0.0; CLASSES]; CLASSES];
        for r in 0..CLASSES {
            let total = self.row_sum(r);
            if total == 0 {
                continue;
            }
            for c in 0..CLASSES {
                out[r][c] = self.counts[r][c] as f64 * 100.0 / total as f64;
            }
        }
        out
    }
}

/// Diagonal of a percentage matrix: per-class sensitivity.
pub fn sensitivities(percent: &[[f64; CLASSES]; CLASSES]) -> [f64; CLASSES] {
    let mut out = [0.0; CLASSES];
    for (k, row) in percent.iter().enumerate() {
        out[k] = row[k];
    }
    out
}

/// Mean of the per-class sensitivities, in percent.
pub fn macro_accuracy(percent: &[[f64; CLASSES]; CLASSES]) -> f64 {
    sensitivities(percent).iter().sum::<f64>() / CLASSES as f64
}

/// Elementwise mean of several percentage matrices (fold averaging).
pub fn mean_percentage_matrix(
    matrices: &[[[f64; CLASSES]; CLASSES]],
) -> Result<[[f64; CLASSES]; CLASSES], TrainingError> {
    if matrices.is_empty() {
        return Err(TrainingError::EmptyEvaluation);
    }
    let mut out = [[0.0; CLASSES]; CLASSES];
    for m in matrices {
        for r in 0..CLASSES {
            for c in 0..CLASSES {
                out[r][c] += m[r][c];
            }
        }
    }
    for row in &mut out {
        for v in row.iter_mut() {
            *v /= matrices.len() as f64;
        }
    }
    Ok(out)
}

fn header() -> String {
    let names: Vec<&str> = ClassLabel::ALL.iter().map(|l| l.as_str()).collect();
    format!("section,true_class,{}\n", names.join(","))
}

/// CSV with a `counts` section (raw integers) and a `percent` section
/// (row-normalized), one row per true class in each.
pub fn matrix_to_csv(matrix: &ConfusionMatrix) -> String {
    let mut out = header();
    for (r, label) in ClassLabel::ALL.into_iter().enumerate() {
        let cells: Vec<String> =
            matrix.counts[r].iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "counts,{label},{}", cells.join(","));
    }
    let percent = matrix.row_percentages();
    for (r, label) in ClassLabel::ALL.into_iter().enumerate() {
        let cells: Vec<String> = percent[r].iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(out, "percent,{label},{}", cells.join(","));
    }
    out
}

/// CSV for an already-averaged percentage matrix (no counts section).
pub fn percent_matrix_to_csv(percent: &[[f64; CLASSES]; CLASSES]) -> String {
    let mut out = header();
    for (r, label) in ClassLabel::ALL.into_iter().enumerate() {
        let cells: Vec<String> = percent[r].iter().map(|v| format!("{v:.4}")).collect();
        let _ = writeln!(out, "percent,{label},{}", cells.join(","));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_mean_matrix_reproduces_the_reported_accuracy() {
        // Reference cross-validation mean matrix, reordered to canonical
        // class order (the source lists benign, insitu, invasive, normal).
        // Rows do not sum to exactly 100 — the source prints rounded means.
        let published = [
            [90.0, 2.0, 5.0, 4.0],
            [6.0, 87.0, 6.0, 4.0],
            [3.0, 6.0, 84.0, 5.0],
            [1.0, 5.0, 5.0, 88.0],
        ];
        assert_eq!(sensitivities(&published), [90.0, 87.0, 84.0, 88.0]);
        let acc = macro_accuracy(&published);
        assert!((acc - 87.25).abs() < 1e-12, "macro accuracy {acc}");
        assert_eq!(acc.round() as i64, 87);
    }

    #[test]
    fn perfect_predictions_hit_one_hundred() {
        let mut m = ConfusionMatrix::new();
        for label in ClassLabel::ALL {
            for _ in 0..5 {
                m.record(label, label);
            }
        }
        let pct = m.row_percentages();
        assert_eq!(sensitivities(&pct), [100.0; 4]);
        assert_eq!(macro_accuracy(&pct), 100.0);
    }

    #[test]
    fn constant_predictor_scores_twenty_five_on_balanced_truth() {
        let mut m = ConfusionMatrix::new();
        for label in ClassLabel::ALL {
            for _ in 0..10 {
                m.record(label, ClassLabel::Normal);
            }
        }
        let pct = m.row_percentages();
        assert_eq!(sensitivities(&pct), [100.0, 0.0, 0.0, 0.0]);
        assert_eq!(macro_accuracy(&pct), 25.0);
    }

    #[test]
    fn rows_sum_to_one_hundred() {
        let truths: Vec<ClassLabel> =
            ClassLabel::ALL.into_iter().cycle().take(40).collect();
        let preds: Vec<ClassLabel> = truths
            .iter()
            .enumerate()
            .map(|(i, t)| if i % 3 == 0 { ClassLabel::Invasive } else { *t })
            .collect();
        let m = ConfusionMatrix::from_pairs(&truths, &preds).unwrap();
        for (r, row) in m.row_percentages().iter().enumerate() {
            assert!((row.iter().sum::<f64>() - 100.0).abs() < 1e-9);
            assert_eq!(m.row_sum(r), 10);
        }
    }

    #[test]
    fn from_pairs_validates_inputs() {
        assert!(matches!(
            ConfusionMatrix::from_pairs(&[ClassLabel::Normal], &[]),
            Err(TrainingError::LengthMismatch { truths: 1, predictions: 0 })
        ));
        assert!(matches!(
            ConfusionMatrix::from_pairs(&[], &[]),
            Err(TrainingError::EmptyEvaluation)
        ));
    }

    #[test]
    fn mean_matrix_averages_elementwise() {
        let a = [[100.0, 0.0, 0.0, 0.0]; 4];
        let b = [[50.0, 50.0, 0.0, 0.0]; 4];
        let mean = mean_percentage_matrix(&[a, b]).unwrap();
        for row in mean {
            assert_eq!(row, [75.0, 25.0, 0.0, 0.0]);
        }
        assert!(mean_percentage_matrix(&[]).is_err());
    }

    #[test]
    fn csv_shapes_are_stable() {
        let mut m = ConfusionMatrix::new();
        m.record(ClassLabel::Benign, ClassLabel::Insitu);
        let csv = matrix_to_csv(&m);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 4 + 4);
        assert_eq!(lines[0], "section,true_class,normal,benign,insitu,invasive");
        assert_eq!(lines[2], "counts,benign,0,0,1,0");
        assert_eq!(lines[6], "percent,benign,0.0000,0.0000,100.0000,0.0000");

        let pcsv = percent_matrix_to_csv(&m.row_percentages());
        assert_eq!(pcsv.lines().count(), 1 + 4);
    }
}

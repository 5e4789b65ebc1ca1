//! Confusion matrix, IoU and accuracy.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::IGNORE;
use crate::{Error, Result};

/// Rows are ground truth, columns predictions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(classes: usize) -> Self {
        Self {
            classes,
            counts: vec![0; classes * classes],
        }
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    /// Adds one pair; ignored ground truth is skipped.
    pub fn add(&mut self, pred: usize, truth: usize) -> Result<()> {
        if truth == IGNORE {
            return Ok(());
        }
        if truth >= self.classes || pred >= self.classes {
            return Err(Error::usage(format!(
                "class out of range: truth {truth}, prediction {pred}, {} classes",
                self.classes
            )));
        }
        self.counts[truth * self.classes + pred] += 1;
        Ok(())
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) -> Result<()> {
        if other.classes != self.classes {
            return Err(Error::dim("merge", &[self.classes], &[other.classes]));
        }
        self.counts.iter_mut().zip(&other.counts).for_each(|(a, b)| *a += b);
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|c| self.get(c, c)).sum()
    }

    /// `TP / (TP + FP + FN)` per class, `None` when the denominator is zero.
    pub fn iou(&self) -> Vec<Option<f64>> {
        (0..self.classes)
            .map(|c| {
                let tp = self.get(c, c);
                let row: u64 = (0..self.classes).map(|j| self.get(c, j)).sum();
                let col: u64 = (0..self.classes).map(|i| self.get(i, c)).sum();
                let denom = row + col - tp;
                (denom > 0).then(|| tp as f64 / denom as f64)
            })
            .collect()
    }

    /// Mean over classes with a defined IoU; `None` if there are none.
    pub fn miou(&self) -> Option<f64> {
        let defined: Vec<f64> = self.iou().into_iter().flatten().collect();
        (!defined.is_empty()).then(|| defined.iter().sum::<f64>() / defined.len() as f64)
    }

    pub fn accuracy(&self) -> Option<f64> {
        let total = self.total();
        (total > 0).then(|| self.trace() as f64 / total as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub confusion: ConfusionMatrix,
    pub iou: Vec<Option<f64>>,
    pub miou: Option<f64>,
    pub accuracy: Option<f64>,
}

impl Evaluation {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Self {
        Self {
            iou: confusion.iou(),
            miou: confusion.miou(),
            accuracy: confusion.accuracy(),
            confusion,
        }
    }
}

/// Scores predictions against labels; [`IGNORE`] labels are not counted.
pub fn evaluate(preds: &[usize], labels: &[usize], classes: usize) -> Result<Evaluation> {
    if preds.len() != labels.len() {
        return Err(Error::usage(format!(
            "{} predictions for {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(classes);
    for (&p, &t) in preds.iter().zip(labels) {
        cm.add(p, t)?;
    }
    Ok(Evaluation::from_confusion(cm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect() {
        let e = evaluate(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
        assert_eq!(e.miou, Some(1.0));
        assert_eq!(e.accuracy, Some(1.0));
    }

    #[test]
    fn two_class_hand_case() {
        // confusion [[2,1],[1,2]]
        let e = evaluate(&[0, 0, 1, 1, 1, 0], &[0, 0, 0, 1, 1, 1], 2).unwrap();
        assert_eq!(e.confusion.get(0, 1), 1);
        assert_eq!(e.iou, vec![Some(0.5), Some(0.5)]);
        assert_eq!(e.miou, Some(0.5));
        assert_eq!(e.accuracy, Some(4.0 / 6.0));
    }

    #[test]
    fn all_ignored_is_undefined() {
        let e = evaluate(&[0, 1], &[IGNORE, IGNORE], 2).unwrap();
        assert_eq!(e.confusion.total(), 0);
        assert_eq!(e.miou, None);
        assert_eq!(e.accuracy, None);
    }

    #[test]
    fn absent_class_is_excluded() {
        let e = evaluate(&[0, 0], &[0, 0], 3).unwrap();
        assert_eq!(e.iou, vec![Some(1.0), None, None]);
        assert_eq!(e.miou, Some(1.0));
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(evaluate(&[0], &[0, 1], 2), Err(Error::Usage(_))));
    }
}

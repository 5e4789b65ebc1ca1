//! Batch inference, scoring and throughput.

use std::time::Instant;

use ppseg_core::{ConfusionMatrix, Evaluation, KnnConfig, Model, PointCloud, IGNORE};
use rayon::prelude::*;

use crate::error::Result;

/// Per-point predictions for every cloud; scans run in parallel.
pub fn predict_all(model: &Model, clouds: &[PointCloud], knn: Option<&KnnConfig>) -> Result<Vec<Vec<usize>>> {
    clouds
        .par_iter()
        .map(|c| Ok(model.predict(c, knn)?.points))
        .collect()
}

/// Scores per-point predictions against the clouds' labels.
pub fn score(clouds: &[PointCloud], preds: &[Vec<usize>], classes: usize) -> Result<Evaluation> {
    let mut cm = ConfusionMatrix::new(classes);
    for (c, p) in clouds.iter().zip(preds) {
        let labels = match &c.label {
            Some(l) => l.clone(),
            None => vec![IGNORE; c.len()],
        };
        cm.merge(&ppseg_core::evaluate(p, &labels, classes)?.confusion)?;
    }
    Ok(Evaluation::from_confusion(cm))
}

/// Full scans per second, projection through per-point labels, one thread.
/// Takes the median of `reps` passes over `clouds`.
pub fn scans_per_sec(model: &Model, clouds: &[PointCloud], knn: Option<&KnnConfig>, reps: usize) -> Result<f64> {
    let mut times = Vec::with_capacity(reps.max(1));
    for _ in 0..reps.max(1) {
        let t = Instant::now();
        for c in clouds {
            std::hint::black_box(model.predict(c, knn)?);
        }
        times.push(t.elapsed().as_secs_f64() / clouds.len().max(1) as f64);
    }
    Ok(1.0 / median(&mut times))
}

pub fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return f64::NAN;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

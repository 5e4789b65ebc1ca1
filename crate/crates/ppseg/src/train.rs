//! SGD training over a list of scans.

use std::f64::consts::PI;

use log::{debug, warn};
use ppseg_core::model::PreparedScan;
use ppseg_core::tensor::Sgd;
use ppseg_core::{Model, PointCloud};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::TrainConfig;
use crate::error::Result;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub epoch: usize,
    /// Index into the scan list.
    pub scan: usize,
    pub loss: f64,
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub records: Vec<StepRecord>,
    /// Set when a non-finite loss or gradient stopped training; the model
    /// then holds the parameters from before the failing step.
    pub aborted: Option<ppseg_core::Error>,
}

/// Rotation that moves a scan by whole columns of a `width`-wide image.
pub fn column_shift(cols: usize, width: usize) -> f64 {
    2.0 * PI * cols as f64 / width as f64
}

/// Runs `cfg.epochs` passes, one SGD step per scan, scans optionally
/// shuffled per epoch. `on_step` sees every completed step.
pub fn train(
    model: &mut Model,
    clouds: &[PointCloud],
    cfg: &TrainConfig,
    mut on_step: impl FnMut(&StepRecord, &Model),
) -> Result<TrainOutcome> {
    let mut sgd = Sgd::new(cfg.lr, cfg.momentum)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let prepared: Vec<PreparedScan> = if cfg.azimuth_shift {
        Vec::new()
    } else {
        clouds.iter().map(|c| model.prepare(c)).collect::<ppseg_core::Result<_>>()?
    };
    let width = model.spec.projection.width;
    let mut order: Vec<usize> = (0..clouds.len()).collect();
    let mut records = Vec::with_capacity(cfg.epochs * clouds.len());
    for epoch in 0..cfg.epochs {
        if cfg.shuffle {
            order.shuffle(&mut rng);
        }
        for &i in &order {
            let shifted;
            let scan = if cfg.azimuth_shift {
                let angle = column_shift(rng.gen_range(0..width), width);
                shifted = model.prepare(&clouds[i].rotated_z(angle))?;
                &shifted
            } else {
                &prepared[i]
            };
            match model.train_step(scan, &mut sgd) {
                Ok(loss) => {
                    let rec = StepRecord {
                        step: records.len(),
                        epoch,
                        scan: i,
                        loss,
                    };
                    debug!("step {} epoch {epoch} scan {i} loss {loss:.5}", rec.step);
                    on_step(&rec, model);
                    records.push(rec);
                }
                Err(e) if non_finite(&e) => {
                    warn!("stopping at step {}: {e}", records.len());
                    return Ok(TrainOutcome {
                        records,
                        aborted: Some(e),
                    });
                }
                Err(e) => return Err(e.into()),
            }
        }
    }
    Ok(TrainOutcome { records, aborted: None })
}

fn non_finite(e: &ppseg_core::Error) -> bool {
    match e {
        ppseg_core::Error::NonFinite { .. } | ppseg_core::Error::NonFiniteGradient(_) => true,
        ppseg_core::Error::Stage { source, .. } => non_finite(source),
        _ => false,
    }
}

pub fn write_loss_csv<W: std::io::Write>(out: W, records: &[StepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["step", "epoch", "scan", "loss"])?;
    for r in records {
        w.write_record([r.step.to_string(), r.epoch.to_string(), r.scan.to_string(), r.loss.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

//! Window-size sweep: train, score and time one model per `k`.

use log::info;
use ppseg_core::{Model, PointCloud};

use crate::config::RunConfig;
use crate::error::Result;
use crate::eval::{predict_all, scans_per_sec, score};
use crate::plotdata::AblationRow;
use crate::train::train;

pub fn ablate(
    cfg: &RunConfig,
    classes: usize,
    train_set: &[PointCloud],
    eval_set: &[PointCloud],
    ks: &[usize],
    reps: usize,
) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::with_capacity(ks.len());
    for &k in ks {
        let arch = cfg.arch(classes)?.with_k(k);
        let mut model = Model::new(arch.build()?)?;
        let outcome = train(&mut model, train_set, &cfg.train, |_, _| {})?;
        if let Some(e) = outcome.aborted {
            return Err(e.into());
        }
        let preds = predict_all(&model, eval_set, cfg.knn.as_ref())?;
        let e = score(eval_set, &preds, model.spec.num_classes)?;
        let sps = scans_per_sec(&model, eval_set, cfg.knn.as_ref(), reps)?;
        info!("k={k}: acc {:?} mIoU {:?} {sps:.2} scans/s", e.accuracy, e.miou);
        rows.push(AblationRow {
            k,
            acc: e.accuracy,
            miou: e.miou,
            scans_per_sec: sps,
        });
    }
    Ok(rows)
}

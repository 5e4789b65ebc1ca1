//! Loading labeled scan directories.

use std::path::Path;

use ppseg_core::{synth, LabelMap, PointCloud};

use crate::config::LabelSource;
use crate::error::Result;
use crate::io::{list_scans, read_label_map, read_labeled_scan, ScanFiles};

pub fn label_map(source: &LabelSource) -> Result<LabelMap> {
    match source {
        LabelSource::SemanticKitti => Ok(LabelMap::semantic_kitti()),
        LabelSource::Synthetic => Ok(synth::label_map()),
        LabelSource::File(p) => read_label_map(Path::new(p)),
    }
}

pub struct Dataset {
    pub files: Vec<ScanFiles>,
    pub clouds: Vec<PointCloud>,
}

pub fn load(dir: &Path, map: &LabelMap) -> Result<Dataset> {
    let files = list_scans(dir)?;
    let clouds = files
        .iter()
        .map(|f| read_labeled_scan(&f.scan, f.labels.as_deref(), map))
        .collect::<Result<_>>()?;
    Ok(Dataset { files, clouds })
}

/// Writes `count` synthetic scans as `velodyne/NNNNNN.bin` and
/// `labels/NNNNNN.label` under `dir`.
pub fn write_synthetic(dir: &Path, count: usize, seed: u64, cfg: &synth::SceneConfig) -> Result<()> {
    let map = synth::label_map();
    for sub in ["velodyne", "labels"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| crate::Error::io(&p, e))?;
    }
    for (i, cloud) in synth::scene_set(count, seed, cfg).iter().enumerate() {
        crate::io::write_scan(&dir.join(format!("velodyne/{i:06}.bin")), cloud)?;
        let labels = cloud.label.as_deref().expect("synthetic scans are labeled");
        crate::io::write_predictions(&dir.join(format!("labels/{i:06}.label")), labels, &map)?;
    }
    Ok(())
}

//! SemanticKITTI `.bin` scans and `.label` files.
//!
//! A scan is a flat run of little-endian `f32` quadruples `(x, y, z,
//! remission)`. A label file holds one little-endian `u32` per point: the low
//! 16 bits are the semantic id, the high 16 bits the instance id.

use std::fs;
use std::path::{Path, PathBuf};

use log::warn;
use ppseg_core::{LabelMap, PointCloud, IGNORE};

use crate::error::{Error, Result};

pub const POINT_BYTES: usize = 16;

pub fn decode_scan(bytes: &[u8], name: &str) -> Result<PointCloud> {
    if bytes.len() % POINT_BYTES != 0 {
        let offset = bytes.len() - bytes.len() % POINT_BYTES;
        return Err(Error::format(
            name,
            format!("truncated point record at byte offset {offset} ({} bytes total)", bytes.len()),
        ));
    }
    let n = bytes.len() / POINT_BYTES;
    let mut xyz = Vec::with_capacity(n);
    let mut remission = Vec::with_capacity(n);
    for (i, rec) in bytes.chunks_exact(POINT_BYTES).enumerate() {
        let f = |k: usize| f32::from_le_bytes(rec[4 * k..4 * k + 4].try_into().expect("4 bytes")) as f64;
        let p = [f(0), f(1), f(2)];
        let r = f(3);
        if !(p.iter().all(|v| v.is_finite()) && r.is_finite()) {
            return Err(Error::format(name, format!("non-finite value in point {i} at byte offset {}", i * POINT_BYTES)));
        }
        xyz.push(p);
        remission.push(r);
    }
    Ok(PointCloud::new(xyz, remission)?)
}

/// Points are narrowed to `f32`.
pub fn encode_scan(cloud: &PointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * POINT_BYTES);
    for (p, &r) in cloud.xyz.iter().zip(&cloud.remission) {
        for v in [p[0], p[1], p[2], r] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out
}

pub fn read_scan(path: &Path) -> Result<PointCloud> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_scan(&bytes, &path.display().to_string())
}

pub fn write_scan(path: &Path, cloud: &PointCloud) -> Result<()> {
    fs::write(path, encode_scan(cloud)).map_err(|e| Error::io(path, e))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Labels {
    /// Train classes, [`IGNORE`] for ignored or unknown ids.
    pub train: Vec<usize>,
    pub raw: Vec<u16>,
    pub instance: Vec<u16>,
    /// Entries whose semantic id is not in the map.
    pub unknown: usize,
}

pub fn decode_labels(bytes: &[u8], map: &LabelMap, expected: Option<usize>, name: &str) -> Result<Labels> {
    if bytes.len() % 4 != 0 {
        return Err(Error::format(
            name,
            format!("truncated label at byte offset {}", bytes.len() - bytes.len() % 4),
        ));
    }
    let n = bytes.len() / 4;
    if let Some(want) = expected {
        if want != n {
            return Err(Error::format(name, format!("{n} labels for {want} points")));
        }
    }
    let mut out = Labels {
        train: Vec::with_capacity(n),
        raw: Vec::with_capacity(n),
        instance: Vec::with_capacity(n),
        unknown: 0,
    };
    for e in bytes.chunks_exact(4) {
        let v = u32::from_le_bytes(e.try_into().expect("4 bytes"));
        let raw = (v & 0xffff) as u16;
        out.raw.push(raw);
        out.instance.push((v >> 16) as u16);
        out.train.push(match map.lookup(raw) {
            Some(c) => c,
            None => {
                out.unknown += 1;
                IGNORE
            }
        });
    }
    if out.unknown > 0 {
        warn!("{name}: {} labels with unknown semantic ids mapped to ignore", out.unknown);
    }
    Ok(out)
}

pub fn read_labels(path: &Path, map: &LabelMap, expected: Option<usize>) -> Result<Labels> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_labels(&bytes, map, expected, &path.display().to_string())
}

/// Raw ids of `preds`, instance bits zero.
pub fn encode_predictions(preds: &[usize], map: &LabelMap) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(preds.len() * 4);
    for (i, &c) in preds.iter().enumerate() {
        let raw = map.to_raw(c).ok_or_else(|| {
            ppseg_core::Error::Usage(format!("prediction {i}: class {c} has no raw id in the label map"))
        })?;
        out.extend_from_slice(&u32::from(raw).to_le_bytes());
    }
    Ok(out)
}

pub fn write_predictions(path: &Path, preds: &[usize], map: &LabelMap) -> Result<()> {
    fs::write(path, encode_predictions(preds, map)?).map_err(|e| Error::io(path, e))
}

/// Scan with its labels attached when `labels` is given.
pub fn read_labeled_scan(scan: &Path, labels: Option<&Path>, map: &LabelMap) -> Result<PointCloud> {
    let cloud = read_scan(scan)?;
    let Some(path) = labels else { return Ok(cloud) };
    let l = read_labels(path, map, Some(cloud.len()))?;
    let mut cloud = cloud.with_labels(l.train)?;
    cloud.raw_label = Some(l.raw);
    Ok(cloud)
}

pub fn read_label_map(path: &Path) -> Result<LabelMap> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(LabelMap::parse(&text)?)
}

/// One scan of a sequence directory and its label file, if present.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ScanFiles {
    pub scan: PathBuf,
    pub labels: Option<PathBuf>,
}

/// `dir/velodyne/*.bin` paired with `dir/labels/*.label`, sorted by name.
/// A `.bin` file given directly is returned on its own.
pub fn list_scans(dir: &Path) -> Result<Vec<ScanFiles>> {
    if dir.is_file() {
        return Ok(vec![ScanFiles {
            scan: dir.to_path_buf(),
            labels: None,
        }]);
    }
    let velodyne = dir.join("velodyne");
    let entries = fs::read_dir(&velodyne).map_err(|e| Error::io(&velodyne, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| Error::io(&velodyne, e))?.path();
        if path.extension().and_then(|e| e.to_str()) != Some("bin") {
            continue;
        }
        let stem = path.file_stem().expect("has extension").to_owned();
        let label = dir.join("labels").join(stem).with_extension("label");
        out.push(ScanFiles {
            scan: path,
            labels: label.is_file().then_some(label),
        });
    }
    out.sort_by(|a, b| a.scan.cmp(&b.scan));
    if out.is_empty() {
        return Err(Error::format(velodyne.display().to_string(), "no .bin scans found"));
    }
    Ok(out)
}

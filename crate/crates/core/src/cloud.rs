use alloc::vec::Vec;

use crate::{Error, Result};

/// Train-class id used for unlabeled and unmappable points.
pub const IGNORE: usize = usize::MAX;

/// One LiDAR scan.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointCloud {
    pub xyz: Vec<[f64; 3]>,
    pub remission: Vec<f64>,
    /// Train-space class per point, [`IGNORE`] where unlabeled.
    pub label: Option<Vec<usize>>,
    /// Raw 16-bit semantic ids as stored on disk.
    pub raw_label: Option<Vec<u16>>,
}

impl PointCloud {
    pub fn new(xyz: Vec<[f64; 3]>, remission: Vec<f64>) -> Result<Self> {
        let cloud = Self {
            xyz,
            remission,
            label: None,
            raw_label: None,
        };
        cloud.validate(None)?;
        Ok(cloud)
    }

    pub fn with_labels(mut self, label: Vec<usize>) -> Result<Self> {
        if label.len() != self.len() {
            return Err(Error::dim("labels", &[self.len()], &[label.len()]));
        }
        self.label = Some(label);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.xyz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xyz.is_empty()
    }

    pub fn range(&self, i: usize) -> f64 {
        crate::math::norm3(self.xyz[i])
    }

    /// Checks lengths, finiteness and (when `num_classes` is given) label bounds.
    pub fn validate(&self, num_classes: Option<usize>) -> Result<()> {
        let n = self.xyz.len();
        if self.remission.len() != n {
            return Err(Error::dim("remission", &[n], &[self.remission.len()]));
        }
        if let Some(i) = self.xyz.iter().position(|p| p.iter().any(|v| !v.is_finite())) {
            return Err(Error::usage(alloc::format!("point {i} has a non-finite coordinate")));
        }
        if let Some(i) = self.remission.iter().position(|v| !v.is_finite()) {
            return Err(Error::usage(alloc::format!("point {i} has a non-finite remission")));
        }
        if let Some(label) = &self.label {
            if label.len() != n {
                return Err(Error::dim("labels", &[n], &[label.len()]));
            }
            if let Some(c) = num_classes {
                if let Some(i) = label.iter().position(|&l| l != IGNORE && l >= c) {
                    return Err(Error::usage(alloc::format!(
                        "point {i} has class {} outside [0, {c})",
                        label[i]
                    )));
                }
            }
        }
        if let Some(raw) = &self.raw_label {
            if raw.len() != n {
                return Err(Error::dim("raw labels", &[n], &[raw.len()]));
            }
        }
        Ok(())
    }

    /// Rotates the scan about the vertical axis.
    pub fn rotated_z(&self, angle: f64) -> Self {
        let (s, c) = (crate::math::sin(angle), crate::math::cos(angle));
        let mut out = self.clone();
        for p in &mut out.xyz {
            let [x, y, z] = *p;
            *p = [c * x - s * y, s * x + c * y, z];
        }
        out
    }
}

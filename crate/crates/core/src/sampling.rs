//! Uniform grid sampling of a range image.
//!
//! The fine H×W grid is cut into H'×W' cells of `s_v × s_u` pixels. Each cell
//! contributes its anchor pixel, or the valid pixel closest to the anchor when
//! the anchor is empty, so exactly `M = H'·W'` slots come out regardless of
//! how the points are spread in 3D.

use alloc::format;
use alloc::vec::Vec;

use crate::projection::RangeImage;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Positions and validity of one resolution level.
#[derive(Clone, Debug, PartialEq)]
pub struct GridLevel {
    pub height: usize,
    pub width: usize,
    pub xyz: Vec<[f64; 3]>,
    pub valid: Vec<bool>,
}

impl GridLevel {
    pub fn from_image(image: &RangeImage) -> Self {
        Self {
            height: image.height,
            width: image.width,
            xyz: (0..image.pixels()).map(|p| image.xyz(p)).collect(),
            valid: image.valid.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.height * self.width
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleGrid {
    pub out_height: usize,
    pub out_width: usize,
    /// Anchor inside each stride cell; `None` picks the cell center.
    pub offset: Option<(usize, usize)>,
}

impl SampleGrid {
    pub fn new(out_height: usize, out_width: usize) -> Self {
        Self {
            out_height,
            out_width,
            offset: None,
        }
    }

    pub fn with_offset(mut self, row: usize, col: usize) -> Self {
        self.offset = Some((row, col));
        self
    }

    /// `(s_v, s_u, o_v, o_u)` for an input of `height × width`.
    pub fn strides(&self, height: usize, width: usize) -> Result<(usize, usize, usize, usize)> {
        let (oh, ow) = (self.out_height, self.out_width);
        if oh == 0 || ow == 0 || oh > height || ow > width || height % oh != 0 || width % ow != 0 {
            return Err(Error::config(format!(
                "cannot sample {oh}×{ow} from {height}×{width}: strides must be integral"
            )));
        }
        let (sv, su) = (height / oh, width / ow);
        let (ov, ou) = self.offset.unwrap_or((sv / 2, su / 2));
        if ov >= sv || ou >= su {
            return Err(Error::config(format!("anchor offset ({ov}, {ou}) outside a {sv}×{su} cell")));
        }
        Ok((sv, su, ov, ou))
    }
}

/// Which fine pixel each coarse pixel took.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sampling {
    pub fine_height: usize,
    pub fine_width: usize,
    pub height: usize,
    pub width: usize,
    pub stride: (usize, usize),
    /// Fine pixel index per coarse pixel, `None` when its whole cell is empty.
    pub center: Vec<Option<usize>>,
}

impl Sampling {
    pub fn len(&self) -> usize {
        self.center.len()
    }

    pub fn is_empty(&self) -> bool {
        self.center.is_empty()
    }

    pub fn valid(&self) -> Vec<bool> {
        self.center.iter().map(Option::is_some).collect()
    }

    pub fn valid_count(&self) -> usize {
        self.center.iter().flatten().count()
    }
}

/// Picks one fine pixel per coarse pixel.
pub fn select_centers(valid: &[bool], height: usize, width: usize, grid: &SampleGrid) -> Result<Sampling> {
    if valid.len() != height * width {
        return Err(Error::dim("sample", &[height, width], &[valid.len()]));
    }
    let (sv, su, ov, ou) = grid.strides(height, width)?;
    let (oh, ow) = (grid.out_height, grid.out_width);
    let mut center = Vec::with_capacity(oh * ow);
    for i in 0..oh {
        for j in 0..ow {
            let (av, au) = (i * sv + ov, j * su + ou);
            let anchor = av * width + au;
            if valid[anchor] {
                center.push(Some(anchor));
                continue;
            }
            // Closest valid pixel of the cell, first in row-major order on ties.
            let mut best: Option<(usize, usize)> = None;
            for v in i * sv..(i + 1) * sv {
                for u in j * su..(j + 1) * su {
                    let pix = v * width + u;
                    if !valid[pix] {
                        continue;
                    }
                    let d = v.abs_diff(av).pow(2) + u.abs_diff(au).pow(2);
                    if best.map_or(true, |(bd, _)| d < bd) {
                        best = Some((d, pix));
                    }
                }
            }
            center.push(best.map(|(_, p)| p));
        }
    }
    Ok(Sampling {
        fine_height: height,
        fine_width: width,
        height: oh,
        width: ow,
        stride: (sv, su),
        center,
    })
}

/// Samples a level; the coarse level keeps the chosen pixels' positions.
pub fn sample_level(level: &GridLevel, grid: &SampleGrid) -> Result<(GridLevel, Sampling)> {
    let s = select_centers(&level.valid, level.height, level.width, grid)?;
    let coarse = GridLevel {
        height: s.height,
        width: s.width,
        xyz: s.center.iter().map(|c| c.map_or([0.0; 3], |p| level.xyz[p])).collect(),
        valid: s.valid(),
    };
    Ok((coarse, s))
}

/// Samples a range image: channels, validity and owning points follow the
/// chosen fine pixels.
pub fn sample(image: &RangeImage, grid: &SampleGrid) -> Result<(RangeImage, Sampling)> {
    let s = select_centers(&image.valid, image.height, image.width, grid)?;
    let m = s.len();
    let mut channels = alloc::vec![0.0; 5 * m];
    for (j, c) in s.center.iter().enumerate() {
        if let Some(p) = *c {
            for ch in 0..5 {
                channels[ch * m + j] = image.channel(ch, p);
            }
        }
    }
    let (sv, su) = s.stride;
    let coarse = RangeImage {
        height: s.height,
        width: s.width,
        channels: Tensor::new([5, s.height, s.width], channels)?,
        valid: s.valid(),
        pix2pt: s.center.iter().map(|c| c.and_then(|p| image.pix2pt[p])).collect(),
        pt2pix: image.pt2pix.iter().map(|&(v, u)| (v / sv, u / su)).collect(),
        skipped: image.skipped,
    };
    Ok((coarse, s))
}

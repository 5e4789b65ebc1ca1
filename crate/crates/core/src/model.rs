//! Encoder-decoder assembly: projection, `n` set-abstraction stages, `n`
//! feature-propagation stages in reverse order and a per-pixel classifier.
//!
//! Everything that depends only on geometry (sampling, windows, masks,
//! interpolation weights) is computed once per scan in [`PreparedScan`] and
//! reused across training steps.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::cloud::{PointCloud, IGNORE};
use crate::grouping::{group, GroupingConfig, NeighborhoodBundle};
use crate::knn::{knn_refine, KnnConfig};
use crate::projection::{project, unproject, ProjectionConfig, RangeImage};
use crate::propagation::{interpolation_mix, propagate, FPStageSpec, FineGroup, FpHead};
use crate::sampling::{sample_level, GridLevel, SampleGrid};
use crate::set_abstraction::{aggregate, Aggregation, GroupInputs, Variant};
use crate::tensor::{mlp_forward, Eager, Exec, Graph, MlpSpec, ParamSet, RowMix, Sgd, Tensor};
use crate::{Error, Result};

/// Per-pixel input channels: range and remission.
pub const INPUT_CHANNELS: usize = 2;

/// Feature-propagation head family.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FpKind {
    Plain,
    Spider,
    PointConv,
}

impl FpKind {
    pub fn as_str(self) -> &'static str {
        match self {
            FpKind::Plain => "plain",
            FpKind::Spider => "spider",
            FpKind::PointConv => "pointconv",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "plain" => Some(FpKind::Plain),
            "spider" | "spidercnn" => Some(FpKind::Spider),
            "pointconv" => Some(FpKind::PointConv),
            _ => None,
        }
    }

    /// Head used together with a set-abstraction variant.
    pub fn matching(v: Variant) -> Self {
        match v {
            Variant::PointNet => FpKind::Plain,
            Variant::SpiderCnn => FpKind::Spider,
            Variant::PointConv => FpKind::PointConv,
        }
    }
}

/// Human-editable description of one SA/FP pair.
#[derive(Clone, Debug, PartialEq)]
pub struct StageArch {
    /// Output grid `(rows, cols)` of the sampling step.
    pub grid: (usize, usize),
    pub variant: Variant,
    /// Layer outputs of the SA network; the last one is the stage width.
    pub mlp: Vec<usize>,
    pub c_mid: usize,
    pub k: usize,
    pub radius: f64,
    /// Defaults to `radius / 2`.
    pub sigma: Option<f64>,
    pub dilation: (usize, usize),
    pub fp_variant: FpKind,
    pub fp_mlp: Vec<usize>,
    pub p: f64,
}

/// Architecture knobs from which a [`ModelSpec`] is built.
#[derive(Clone, Debug, PartialEq)]
pub struct Arch {
    pub projection: ProjectionConfig,
    pub stages: Vec<StageArch>,
    /// Hidden widths of the classifier.
    pub head: Vec<usize>,
    pub num_classes: usize,
    pub seed: u64,
    /// Multipliers applied to range and remission.
    pub input_scale: [f64; 2],
}

impl Arch {
    /// Stages that halve both grid axes, one per entry of `widths`.
    pub fn halving(
        projection: ProjectionConfig,
        widths: &[usize],
        radii: &[f64],
        k: usize,
        variant: Variant,
        num_classes: usize,
    ) -> Self {
        let (mut h, mut w) = (projection.height, projection.width);
        let mut stages = Vec::new();
        for (i, (&c, &r)) in widths.iter().zip(radii).enumerate() {
            h /= 2;
            w /= 2;
            let mlp = match variant {
                Variant::PointNet => vec![c, c],
                _ => vec![c],
            };
            // FP i hands the stage-(i-1) width back up, FP 1 ends at the first width.
            let fp_out = if i == 0 { c } else { widths[i - 1] };
            stages.push(StageArch {
                grid: (h.max(1), w.max(1)),
                variant,
                mlp,
                c_mid: 8,
                k,
                radius: r,
                sigma: None,
                dilation: (1, 1),
                fp_variant: FpKind::matching(variant),
                fp_mlp: vec![fp_out],
                p: 2.0,
            });
        }
        Self {
            projection,
            stages,
            head: vec![128],
            num_classes,
            seed: 1,
            input_scale: [0.1, 1.0],
        }
    }

    /// Four stages, widths 32/64/128/256, radii 0.5/1/2/4 m, k = 5.
    pub fn default_for(projection: ProjectionConfig, variant: Variant, num_classes: usize) -> Self {
        Self::halving(projection, &[32, 64, 128, 256], &[0.5, 1.0, 2.0, 4.0], 5, variant, num_classes)
    }

    pub fn with_variant(mut self, variant: Variant) -> Self {
        for s in &mut self.stages {
            if s.variant != variant {
                let c = *s.mlp.last().unwrap_or(&1);
                s.mlp = match variant {
                    Variant::PointNet => vec![c, c],
                    _ => vec![c],
                };
            }
            s.variant = variant;
            s.fp_variant = FpKind::matching(variant);
        }
        self
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.stages.iter_mut().for_each(|s| s.k = k);
        self
    }

    pub fn build(&self) -> Result<ModelSpec> {
        if self.stages.is_empty() {
            return Err(Error::config("a model needs at least one stage"));
        }
        let mut widths = vec![INPUT_CHANNELS];
        let mut stages = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let seed = self.seed.wrapping_mul(1000).wrapping_add(i as u64 * 20);
            let c_prev = *widths.last().unwrap();
            if s.mlp.is_empty() {
                return Err(Error::config(format!("sa{} needs at least one MLP width", i + 1)));
            }
            let sa = Aggregation::from_widths(s.variant, c_prev + 3, &s.mlp, s.c_mid, seed);
            widths.push(*s.mlp.last().unwrap());
            let mut group = GroupingConfig::new(s.k, s.radius);
            if let Some(sigma) = s.sigma {
                group.sigma = sigma;
            }
            group.dilation = s.dilation;
            stages.push((s, sa, group, seed));
        }
        // FP inputs chain from the deepest stage back up.
        let mut fps = vec![None; stages.len()];
        let mut coarse = *widths.last().unwrap();
        for i in (0..stages.len()).rev() {
            let s = stages[i].0;
            let c_in = coarse + widths[i];
            if s.fp_mlp.is_empty() {
                return Err(Error::config(format!("fp{} needs at least one MLP width", i + 1)));
            }
            let seed = stages[i].3 + 10;
            let head = match s.fp_variant {
                FpKind::Plain => {
                    let mut w = vec![c_in];
                    w.extend_from_slice(&s.fp_mlp);
                    FpHead::Plain {
                        mlp: MlpSpec::relu(&w, seed),
                    }
                }
                FpKind::Spider => FpHead::Conv(Aggregation::from_widths(
                    Variant::SpiderCnn,
                    c_in + 3,
                    &s.fp_mlp,
                    s.c_mid,
                    seed,
                )),
                FpKind::PointConv => FpHead::Conv(Aggregation::from_widths(
                    Variant::PointConv,
                    c_in + 3,
                    &s.fp_mlp,
                    s.c_mid,
                    seed,
                )),
            };
            coarse = *s.fp_mlp.last().unwrap();
            fps[i] = Some(FPStageSpec { head, p: s.p });
        }
        let mut head = vec![coarse];
        head.extend_from_slice(&self.head);
        head.push(self.num_classes);
        let spec = ModelSpec {
            projection: self.projection,
            input_scale: self.input_scale,
            stages: stages
                .into_iter()
                .zip(fps)
                .map(|((s, sa, group, _), fp)| StageSpec {
                    grid: SampleGrid::new(s.grid.0, s.grid.1),
                    group,
                    sa,
                    fp: fp.expect("every stage has an FP"),
                })
                .collect(),
            head: MlpSpec::new(&head, self.seed.wrapping_mul(1000).wrapping_add(999)),
            num_classes: self.num_classes,
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageSpec {
    pub grid: SampleGrid,
    pub group: GroupingConfig,
    pub sa: Aggregation,
    pub fp: FPStageSpec,
}

/// Fully resolved network description.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelSpec {
    pub projection: ProjectionConfig,
    pub input_scale: [f64; 2],
    pub stages: Vec<StageSpec>,
    pub head: MlpSpec,
    pub num_classes: usize,
}

impl ModelSpec {
    /// Widths and grid sizes chain from the input through every stage and back.
    pub fn validate(&self) -> Result<()> {
        self.projection.validate()?;
        if self.num_classes == 0 {
            return Err(Error::config("need at least one class"));
        }
        let (mut h, mut w) = (self.projection.height, self.projection.width);
        let mut widths = vec![INPUT_CHANNELS];
        for (i, s) in self.stages.iter().enumerate() {
            let wrap = |e: Error| e.at_stage(i + 1);
            s.grid.strides(h, w).map_err(wrap)?;
            (h, w) = (s.grid.out_height, s.grid.out_width);
            s.group.validate().map_err(wrap)?;
            s.sa.validate(widths[i] + 3).map_err(wrap)?;
            widths.push(s.sa.output_width());
        }
        let mut coarse = *widths.last().unwrap();
        for (i, s) in self.stages.iter().enumerate().rev() {
            s.fp.validate(coarse + widths[i]).map_err(|e| e.at_stage(i + 1))?;
            coarse = s.fp.output_width();
        }
        self.head.validate()?;
        if self.head.input_width() != coarse || self.head.output_width() != self.num_classes {
            return Err(Error::config(format!(
                "classifier maps {} -> {} but the decoder gives {coarse} channels for {} classes",
                self.head.input_width(),
                self.head.output_width(),
                self.num_classes
            )));
        }
        Ok(())
    }

    pub fn init_params(&self) -> Result<ParamSet> {
        let mut params = ParamSet::new();
        for (i, s) in self.stages.iter().enumerate() {
            s.sa.init(&sa_prefix(i), &mut params)?;
            s.fp.init(&fp_prefix(i), &mut params)?;
        }
        self.head.init("head", &mut params)?;
        Ok(params)
    }
}

fn sa_prefix(i: usize) -> String {
    format!("sa{}", i + 1)
}

fn fp_prefix(i: usize) -> String {
    format!("fp{}", i + 1)
}

/// Window tensors of one grouping, ready for the network.
#[derive(Clone, Debug)]
pub struct PreparedGroup {
    pub gather: Arc<RowMix>,
    pub centers: usize,
    pub slots: usize,
    /// `[M, S, 3]`.
    pub local: Tensor,
    /// `[M, S, 1]`.
    pub mask: Tensor,
    /// `[M, 1, 1]`.
    pub density: Tensor,
}

impl PreparedGroup {
    pub fn from_bundle(b: &NeighborhoodBundle) -> Self {
        Self {
            gather: Arc::new(b.gather_mix()),
            centers: b.centers(),
            slots: b.slots,
            local: b.local_tensor(),
            mask: b.mask_tensor(),
            density: b.density_tensor(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct PreparedStage {
    pub level: GridLevel,
    pub bundle: NeighborhoodBundle,
    pub group: PreparedGroup,
    /// Coarse-to-fine interpolation weights.
    pub interp: Arc<RowMix>,
    /// Self-windows on the fine level for conv FP heads.
    pub fine: Option<PreparedGroup>,
}

/// Geometry-only preprocessing of one scan.
#[derive(Clone, Debug)]
pub struct PreparedScan {
    pub image: RangeImage,
    /// `[H·W, 2]`.
    pub input: Tensor,
    /// Per-pixel train class, [`IGNORE`] on empty or unlabeled pixels.
    pub targets: Vec<usize>,
    pub stages: Vec<PreparedStage>,
}

impl PreparedScan {
    pub fn labeled_pixels(&self) -> usize {
        self.targets.iter().filter(|&&t| t != IGNORE).count()
    }
}

impl ModelSpec {
    pub fn prepare(&self, cloud: &PointCloud) -> Result<PreparedScan> {
        let image = project(cloud, &self.projection)?;
        self.prepare_image(image, cloud.label.as_deref())
    }

    /// `labels` are per point; the owning point of each pixel decides.
    pub fn prepare_image(&self, image: RangeImage, labels: Option<&[usize]>) -> Result<PreparedScan> {
        let hw = image.pixels();
        let mut input = vec![0.0; hw * INPUT_CHANNELS];
        for p in 0..hw {
            if image.valid[p] {
                input[2 * p] = image.range(p) * self.input_scale[0];
                input[2 * p + 1] = image.remission(p) * self.input_scale[1];
            }
        }
        let targets = image
            .pix2pt
            .iter()
            .map(|o| match (o, labels) {
                (Some(i), Some(l)) => l[*i],
                _ => IGNORE,
            })
            .collect();
        let mut level = GridLevel::from_image(&image);
        let mut stages = Vec::with_capacity(self.stages.len());
        for (i, s) in self.stages.iter().enumerate() {
            let wrap = |e: Error| e.at_stage(i + 1);
            let (coarse, sampling) = sample_level(&level, &s.grid).map_err(wrap)?;
            let bundle = group(&level, &sampling, &s.group).map_err(wrap)?;
            let interp = Arc::new(interpolation_mix(&bundle, &level, s.fp.p).map_err(wrap)?);
            let fine = if s.fp.needs_fine_group() {
                let identity = SampleGrid::new(level.height, level.width);
                let (_, same) = sample_level(&level, &identity).map_err(wrap)?;
                let mut cfg = s.group;
                cfg.dilation = (1, 1);
                Some(PreparedGroup::from_bundle(&group(&level, &same, &cfg).map_err(wrap)?))
            } else {
                None
            };
            stages.push(PreparedStage {
                level: core::mem::replace(&mut level, coarse),
                group: PreparedGroup::from_bundle(&bundle),
                bundle,
                interp,
                fine,
            });
        }
        Ok(PreparedScan {
            input: Tensor::new([hw, INPUT_CHANNELS], input)?,
            image,
            targets,
            stages,
        })
    }

    /// Per-pixel logits `[H·W, classes]`.
    pub fn forward<X: Exec>(&self, ex: &mut X, params: &ParamSet, scan: &PreparedScan) -> Result<X::T> {
        if scan.stages.len() != self.stages.len() {
            return Err(Error::usage("scan was prepared for a different model"));
        }
        let mut feats = vec![ex.input(scan.input.clone())];
        for (i, (s, ps)) in self.stages.iter().zip(&scan.stages).enumerate() {
            let out = sa_stage(ex, params, i, s, ps, feats[i].clone()).map_err(|e| e.at_stage(i + 1))?;
            feats.push(out);
        }
        let mut x = feats.pop().expect("at least the input");
        for (i, (s, ps)) in self.stages.iter().zip(&scan.stages).enumerate().rev() {
            let skip = feats.pop().expect("one skip per stage");
            x = fp_stage(ex, params, i, s, ps, x, skip).map_err(|e| e.at_stage(i + 1))?;
        }
        mlp_forward(ex, params, "head", &self.head, x)
    }
}

fn sa_stage<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    i: usize,
    s: &StageSpec,
    ps: &PreparedStage,
    f: X::T,
) -> Result<X::T> {
    let g = &ps.group;
    let c = ex.shape(&f)[1];
    let u = ex.row_mix(f, &g.gather)?;
    let u = ex.reshape(u, &[g.centers, g.slots, c])?;
    let local = ex.input(g.local.clone());
    let features = ex.concat_last(u, local.clone())?;
    let mask = ex.input(g.mask.clone());
    let density = ex.input(g.density.clone());
    aggregate(
        ex,
        params,
        &sa_prefix(i),
        &s.sa,
        GroupInputs {
            features,
            local,
            mask,
            density,
        },
    )
}

fn fp_stage<X: Exec>(
    ex: &mut X,
    params: &ParamSet,
    i: usize,
    s: &StageSpec,
    ps: &PreparedStage,
    coarse: X::T,
    skip: X::T,
) -> Result<X::T> {
    let fine = match &ps.fine {
        Some(g) => Some(FineGroup {
            gather: &g.gather,
            slots: g.slots,
            local: ex.input(g.local.clone()),
            mask: ex.input(g.mask.clone()),
            density: ex.input(g.density.clone()),
        }),
        None => None,
    };
    propagate(ex, params, &fp_prefix(i), &s.fp, coarse, Some(skip), &ps.interp, fine)
}

/// Index of the largest entry of each row; lowest index on ties.
pub fn argmax_rows(logits: &Tensor) -> Vec<usize> {
    let c = *logits.shape().last().unwrap_or(&1);
    logits
        .data()
        .chunks(c.max(1))
        .map(|row| {
            let mut best = 0;
            for (j, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = j;
                }
            }
            best
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    /// `[H·W, classes]`.
    pub logits: Tensor,
    pub pixels: Vec<usize>,
    pub points: Vec<usize>,
}

/// Spec plus parameters.
#[derive(Clone, Debug)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: ParamSet,
}

impl Model {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.validate()?;
        let params = spec.init_params()?;
        Ok(Self { spec, params })
    }

    pub fn prepare(&self, cloud: &PointCloud) -> Result<PreparedScan> {
        self.spec.prepare(cloud)
    }

    pub fn logits(&self, scan: &PreparedScan) -> Result<Tensor> {
        self.spec.forward(&mut Eager, &self.params, scan)
    }

    /// Masked cross-entropy; fills the parameter gradients.
    pub fn loss_and_grads(&mut self, scan: &PreparedScan) -> Result<f64> {
        let mut g = Graph::new();
        let logits = self.spec.forward(&mut g, &self.params, scan)?;
        let loss = g.cross_entropy(logits, &scan.targets, IGNORE)?;
        g.backward(loss)?;
        self.params.collect_grads(&g);
        Ok(g.value(loss).item().expect("scalar loss"))
    }

    /// One SGD step on one scan; returns the loss before the update.
    ///
    /// A non-finite loss is reported without touching the parameters.
    pub fn train_step(&mut self, scan: &PreparedScan, sgd: &mut Sgd) -> Result<f64> {
        let loss = self.loss_and_grads(scan)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite { op: "loss" });
        }
        sgd.step(&mut self.params)?;
        Ok(loss)
    }

    pub fn predict_prepared(&self, scan: &PreparedScan, cloud: &PointCloud, knn: Option<&KnnConfig>) -> Result<Prediction> {
        let logits = self.logits(scan)?;
        let pixels = argmax_rows(&logits);
        let points = match knn {
            Some(cfg) => knn_refine(&scan.image, &pixels, cloud, cfg)?,
            None => unproject(&scan.image, &pixels)?,
        };
        Ok(Prediction { logits, pixels, points })
    }

    pub fn predict(&self, cloud: &PointCloud, knn: Option<&KnnConfig>) -> Result<Prediction> {
        let scan = self.prepare(cloud)?;
        self.predict_prepared(&scan, cloud, knn)
    }

    /// Fraction of labeled valid pixels whose argmax matches the target.
    pub fn pixel_accuracy(&self, scan: &PreparedScan) -> Result<Option<f64>> {
        let pixels = argmax_rows(&self.logits(scan)?);
        let (mut hit, mut total) = (0usize, 0usize);
        for (p, &t) in pixels.iter().zip(&scan.targets) {
            if t != IGNORE {
                total += 1;
                hit += usize::from(*p == t);
            }
        }
        Ok((total > 0).then(|| hit as f64 / total as f64))
    }
}

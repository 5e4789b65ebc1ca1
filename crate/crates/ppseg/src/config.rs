//! Flat `key = value` run configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Keys are grouped by prefix:
//! `proj.`, `model.`, `sa<n>.`, `fp<n>.`, `train.`, `knn.` and `data.`. Every
//! key has a default, so an empty file is a valid configuration. `model.*`
//! keys lay out halving stages; `sa<n>.*` / `fp<n>.*` then override single
//! stages (1-based).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use ppseg_core::model::{Arch, FpKind, StageArch};
use ppseg_core::{KnnConfig, ProjectionConfig, Variant};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// Drives scan order and azimuth shifts.
    pub seed: u64,
    /// Visit scans in a fresh random order each epoch instead of file order.
    pub shuffle: bool,
    /// Rotate each training scan by a random whole number of columns.
    pub azimuth_shift: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.01,
            momentum: 0.9,
            seed: 0,
            shuffle: true,
            azimuth_shift: false,
        }
    }
}

/// Where label ids come from: `semantickitti`, `synthetic` or a map file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelSource {
    SemanticKitti,
    Synthetic,
    File(String),
}

impl LabelSource {
    fn as_str(&self) -> &str {
        match self {
            LabelSource::SemanticKitti => "semantickitti",
            LabelSource::Synthetic => "synthetic",
            LabelSource::File(p) => p,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub projection: ProjectionConfig,
    /// Vertical field of view in degrees as written, `(up, down)`.
    pub fov_deg: (f64, f64),
    /// `None` takes the class count of the label map.
    pub classes: Option<usize>,
    pub seed: u64,
    pub head: Vec<usize>,
    pub input_scale: [f64; 2],
    pub stages: Vec<StageArch>,
    pub train: TrainConfig,
    /// `Some` when k-NN refinement is on.
    pub knn: Option<KnnConfig>,
    pub labels: LabelSource,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig::parse("").expect("defaults are valid")
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take<T: FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        let Some((line, v)) = self.map.remove(key) else { return Ok(None) };
        v.parse()
            .map(Some)
            .map_err(|_| Error::config(format!("line {line}: cannot parse `{key} = {v}`")))
    }

    fn take_with<T>(&mut self, key: &str, f: impl Fn(&str) -> Option<T>) -> Result<Option<T>> {
        let Some((line, v)) = self.map.remove(key) else { return Ok(None) };
        f(&v).map(Some)
            .ok_or_else(|| Error::config(format!("line {line}: invalid value `{key} = {v}`")))
    }

    fn list<T: FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        self.take_with(key, |v| v.split(',').map(|s| s.trim().parse().ok()).collect())
    }

    fn pair(&mut self, key: &str) -> Result<Option<(usize, usize)>> {
        self.take_with(key, |v| {
            let (a, b) = v.split_once('x')?;
            Some((a.trim().parse().ok()?, b.trim().parse().ok()?))
        })
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v {
        "true" | "1" | "yes" | "on" => Some(true),
        "false" | "0" | "no" | "off" => Some(false),
        _ => None,
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::config(format!("line {}: expected `key = value`", i + 1)))?;
            let k = k.trim().to_string();
            if map.insert(k.clone(), (i + 1, v.trim().to_string())).is_some() {
                return Err(Error::config(format!("line {}: `{k}` set twice", i + 1)));
            }
        }
        let mut e = Entries { map };

        let mut projection = ProjectionConfig::new(
            e.take("proj.height")?.unwrap_or(64),
            e.take("proj.width")?.unwrap_or(512),
        );
        let up = e.take("proj.fov_up")?.unwrap_or(3.0);
        let down = e.take("proj.fov_down")?.unwrap_or(-25.0);
        projection = projection.with_fov_deg(up, down);

        let variant = e.take_with("model.variant", Variant::parse)?.unwrap_or(Variant::PointNet);
        let widths: Vec<usize> = e.list("model.widths")?.unwrap_or_else(|| vec![32, 64, 128, 256]);
        let radii: Vec<f64> = e.list("model.radii")?.unwrap_or_else(|| vec![0.5, 1.0, 2.0, 4.0]);
        if widths.len() != radii.len() {
            return Err(Error::config(format!(
                "model.widths has {} entries but model.radii has {}",
                widths.len(),
                radii.len()
            )));
        }
        let k = e.take("model.k")?.unwrap_or(5);
        let mut arch = Arch::halving(projection, &widths, &radii, k, variant, 1);
        let classes = e.take("model.classes")?;
        let seed = e.take("model.seed")?.unwrap_or(arch.seed);
        let head = match e.map.get("model.head") {
            Some((_, v)) if v.is_empty() => {
                e.map.remove("model.head");
                Vec::new()
            }
            _ => e.list("model.head")?.unwrap_or(arch.head.clone()),
        };
        let input_scale = match e.list::<f64>("model.input_scale")? {
            Some(v) if v.len() == 2 => [v[0], v[1]],
            Some(_) => return Err(Error::config("model.input_scale needs two values")),
            None => arch.input_scale,
        };

        for (i, s) in arch.stages.iter_mut().enumerate() {
            let n = i + 1;
            if let Some(g) = e.pair(&format!("sa{n}.grid"))? {
                s.grid = g;
            }
            if let Some(v) = e.take_with(&format!("sa{n}.variant"), Variant::parse)? {
                if v != s.variant {
                    let c = *s.mlp.last().expect("halving stage has a width");
                    s.mlp = if v == Variant::PointNet { vec![c, c] } else { vec![c] };
                    s.fp_variant = FpKind::matching(v);
                }
                s.variant = v;
            }
            if let Some(m) = e.list(&format!("sa{n}.mlp"))? {
                s.mlp = m;
            }
            if let Some(v) = e.take(&format!("sa{n}.c_mid"))? {
                s.c_mid = v;
            }
            if let Some(v) = e.take(&format!("sa{n}.k"))? {
                s.k = v;
            }
            if let Some(v) = e.take(&format!("sa{n}.radius"))? {
                s.radius = v;
            }
            if let Some(v) = e.take(&format!("sa{n}.sigma"))? {
                s.sigma = Some(v);
            }
            if let Some(d) = e.pair(&format!("sa{n}.dilation"))? {
                s.dilation = d;
            }
            if let Some(m) = e.list(&format!("fp{n}.mlp"))? {
                s.fp_mlp = m;
            }
            if let Some(v) = e.take(&format!("fp{n}.p"))? {
                s.p = v;
            }
            if let Some(v) = e.take_with(&format!("fp{n}.variant"), FpKind::parse)? {
                s.fp_variant = v;
            }
        }
        arch.seed = seed;

        let d = TrainConfig::default();
        let train = TrainConfig {
            epochs: e.take("train.epochs")?.unwrap_or(d.epochs),
            lr: e.take("train.lr")?.unwrap_or(d.lr),
            momentum: e.take("train.momentum")?.unwrap_or(d.momentum),
            seed: e.take("train.seed")?.unwrap_or(d.seed),
            shuffle: e.take_with("train.shuffle", parse_bool)?.unwrap_or(d.shuffle),
            azimuth_shift: e.take_with("train.azimuth_shift", parse_bool)?.unwrap_or(d.azimuth_shift),
        };

        let kd = KnnConfig::default();
        let knn_on = e.take_with("knn.enabled", parse_bool)?.unwrap_or(false);
        let knn = KnnConfig {
            window: e.take("knn.window")?.unwrap_or(kd.window),
            k: e.take("knn.k")?.unwrap_or(kd.k),
            sigma: e.take("knn.sigma")?.unwrap_or(kd.sigma),
        };
        knn.validate()?;

        let labels = match e.map.remove("data.labels").map(|(_, v)| v) {
            None => LabelSource::SemanticKitti,
            Some(v) if v == "semantickitti" => LabelSource::SemanticKitti,
            Some(v) if v == "synthetic" => LabelSource::Synthetic,
            Some(v) => LabelSource::File(v),
        };

        if let Some((key, (line, _))) = e.map.iter().next() {
            return Err(Error::config(format!("line {line}: unknown key `{key}`")));
        }
        let cfg = RunConfig {
            projection,
            fov_deg: (up, down),
            classes,
            seed,
            head,
            input_scale,
            stages: arch.stages,
            train,
            knn: knn_on.then_some(knn),
            labels,
        };
        cfg.arch(cfg.classes.unwrap_or(1))?.build()?;
        Ok(cfg)
    }

    pub fn arch(&self, classes: usize) -> Result<Arch> {
        if self.stages.is_empty() {
            return Err(Error::config("model.widths must list at least one stage"));
        }
        Ok(Arch {
            projection: self.projection,
            stages: self.stages.clone(),
            head: self.head.clone(),
            num_classes: self.classes.unwrap_or(classes),
            seed: self.seed,
            input_scale: self.input_scale,
        })
    }

    /// Every key spelled out; `parse(to_text())` gives back `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let p = &self.projection;
        let _ = writeln!(s, "proj.height = {}", p.height);
        let _ = writeln!(s, "proj.width = {}", p.width);
        let _ = writeln!(s, "proj.fov_up = {}", self.fov_deg.0);
        let _ = writeln!(s, "proj.fov_down = {}", self.fov_deg.1);
        let first = &self.stages[0];
        let _ = writeln!(s, "model.variant = {}", first.variant.as_str());
        let widths: Vec<usize> = self.stages.iter().map(|st| *st.mlp.last().unwrap_or(&1)).collect();
        let _ = writeln!(s, "model.widths = {}", join(&widths));
        let radii: Vec<String> = self.stages.iter().map(|st| st.radius.to_string()).collect();
        let _ = writeln!(s, "model.radii = {}", radii.join(","));
        let _ = writeln!(s, "model.k = {}", first.k);
        if let Some(c) = self.classes {
            let _ = writeln!(s, "model.classes = {c}");
        }
        let _ = writeln!(s, "model.seed = {}", self.seed);
        let _ = writeln!(s, "model.head = {}", join(&self.head));
        let _ = writeln!(s, "model.input_scale = {},{}", self.input_scale[0], self.input_scale[1]);
        for (i, st) in self.stages.iter().enumerate() {
            let n = i + 1;
            let _ = writeln!(s, "sa{n}.grid = {}x{}", st.grid.0, st.grid.1);
            let _ = writeln!(s, "sa{n}.variant = {}", st.variant.as_str());
            let _ = writeln!(s, "sa{n}.mlp = {}", join(&st.mlp));
            let _ = writeln!(s, "sa{n}.c_mid = {}", st.c_mid);
            let _ = writeln!(s, "sa{n}.k = {}", st.k);
            let _ = writeln!(s, "sa{n}.radius = {}", st.radius);
            if let Some(sigma) = st.sigma {
                let _ = writeln!(s, "sa{n}.sigma = {sigma}");
            }
            let _ = writeln!(s, "sa{n}.dilation = {}x{}", st.dilation.0, st.dilation.1);
            let _ = writeln!(s, "fp{n}.mlp = {}", join(&st.fp_mlp));
            let _ = writeln!(s, "fp{n}.p = {}", st.p);
            let _ = writeln!(s, "fp{n}.variant = {}", st.fp_variant.as_str());
        }
        let t = &self.train;
        let _ = writeln!(s, "train.epochs = {}", t.epochs);
        let _ = writeln!(s, "train.lr = {}", t.lr);
        let _ = writeln!(s, "train.momentum = {}", t.momentum);
        let _ = writeln!(s, "train.seed = {}", t.seed);
        let _ = writeln!(s, "train.shuffle = {}", t.shuffle);
        let _ = writeln!(s, "train.azimuth_shift = {}", t.azimuth_shift);
        let knn = self.knn.unwrap_or_default();
        let _ = writeln!(s, "knn.enabled = {}", self.knn.is_some());
        let _ = writeln!(s, "knn.window = {}", knn.window);
        let _ = writeln!(s, "knn.k = {}", knn.k);
        let _ = writeln!(s, "knn.sigma = {}", knn.sigma);
        let _ = writeln!(s, "data.labels = {}", self.labels.as_str());
        s
    }
}

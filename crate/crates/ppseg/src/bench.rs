//! Neighborhood-construction and end-to-end throughput benchmarks.

use std::time::Instant;

use ppseg_core::baseline::{ball_query, fps};
use ppseg_core::grouping::group;
use ppseg_core::model::Arch;
use ppseg_core::projection::project;
use ppseg_core::sampling::{sample_level, GridLevel};
use ppseg_core::synth::{scene, SceneConfig};
use ppseg_core::{GroupingConfig, Model, PointCloud, ProjectionConfig, SampleGrid, Variant};

use crate::error::{Error, Result};
use crate::eval::{median, scans_per_sec};

#[derive(Clone, Debug, PartialEq)]
pub struct BenchRow {
    pub method: String,
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub median_ms: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupingBench {
    pub n: usize,
    pub m: usize,
    pub k: usize,
    pub radius: f64,
    pub reps: usize,
    pub seed: u64,
}

impl Default for GroupingBench {
    fn default() -> Self {
        Self {
            n: 120_000,
            m: 2048,
            k: 5,
            radius: 1.0,
            reps: 5,
            seed: 0,
        }
    }
}

/// Image size for `n` points and a `rows × cols` sample grid with `m` cells.
///
/// 64 rows and the smallest power-of-two width holding `n` pixels; the grid
/// keeps 16 rows when `m` allows it.
fn layout(n: usize, m: usize) -> Result<(usize, usize, usize, usize)> {
    let h = 64;
    let w = n.div_ceil(h).next_power_of_two().max(1);
    let gh = [16, 8, 4, 2, 1].into_iter().find(|g| m % g == 0 && m / g <= w).unwrap_or(1);
    let gw = m / gh;
    if gh * gw != m || w % gw != 0 {
        return Err(Error::config(format!("cannot lay out {m} samples on a {h}×{w} image")));
    }
    Ok((h, w, gh, gw))
}

/// Synthetic scan of exactly `n` points (64 beams).
pub fn bench_cloud(n: usize, seed: u64) -> PointCloud {
    let steps = n.div_ceil(64).max(1);
    let mut c = scene(seed, &SceneConfig::default().with_azimuth_steps(steps));
    c.xyz.truncate(n);
    c.remission.truncate(n);
    c.label = None;
    c
}

fn time_ms(reps: usize, mut f: impl FnMut() -> Result<()>) -> Result<f64> {
    let mut t = Vec::with_capacity(reps);
    for _ in 0..reps.max(1) {
        let start = Instant::now();
        f()?;
        t.push(start.elapsed().as_secs_f64() * 1e3);
    }
    Ok(median(&mut t))
}

/// Median wall time of FPS + ball query against projection + grid
/// sampling + window grouping, both producing `m` neighborhoods.
pub fn grouping_bench(b: &GroupingBench) -> Result<Vec<BenchRow>> {
    if b.n == 0 || b.m == 0 || b.m > b.n {
        return Err(Error::config(format!("need 0 < M <= n, got n={} M={}", b.n, b.m)));
    }
    let cloud = bench_cloud(b.n, b.seed);
    let (h, w, gh, gw) = layout(b.n, b.m)?;
    let proj = ProjectionConfig::new(h, w);
    let grid = SampleGrid::new(gh, gw);
    let gcfg = GroupingConfig::new(b.k, b.radius);
    gcfg.validate()?;

    let naive = time_ms(b.reps, || {
        let centers = fps(&cloud.xyz, b.m)?;
        let mut total = 0;
        for &c in &centers {
            total += ball_query(&cloud.xyz, cloud.xyz[c], b.radius).len();
        }
        std::hint::black_box(total);
        Ok(())
    })?;
    let projected = time_ms(b.reps, || {
        let image = project(&cloud, &proj)?;
        let level = GridLevel::from_image(&image);
        let (_, sampling) = sample_level(&level, &grid)?;
        std::hint::black_box(group(&level, &sampling, &gcfg)?);
        Ok(())
    })?;
    let row = |method: &str, ms| BenchRow {
        method: method.into(),
        n: b.n,
        m: b.m,
        k: b.k,
        median_ms: ms,
    };
    Ok(vec![row("fps+ball", naive), row("projected", projected)])
}

pub fn write_bench_csv<W: std::io::Write>(out: W, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["method", "n", "M", "k", "median_ms"])?;
    for r in rows {
        w.write_record([r.method.clone(), r.n.to_string(), r.m.to_string(), r.k.to_string(), r.median_ms.to_string()])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ThroughputPoint {
    pub k: usize,
    pub width: usize,
    pub scans_per_sec: f64,
}

/// Inference throughput of the default four-stage model on a fully
/// populated synthetic 64×`width` scan.
pub fn throughput(variant: Variant, k: usize, width: usize, reps: usize) -> Result<ThroughputPoint> {
    let arch = Arch::default_for(ProjectionConfig::new(64, width), variant, 3).with_k(k);
    let model = Model::new(arch.build()?)?;
    let cloud = scene(11, &SceneConfig::default().with_azimuth_steps(width));
    // One untimed pass warms caches and the allocator.
    model.predict(&cloud, None)?;
    let sps = scans_per_sec(&model, std::slice::from_ref(&cloud), None, reps)?;
    Ok(ThroughputPoint {
        k,
        width,
        scans_per_sec: sps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn layouts() {
        assert_eq!(layout(120_000, 2048).unwrap(), (64, 2048, 16, 128));
        assert_eq!(layout(1000, 16).unwrap(), (64, 16, 16, 1));
        assert!(layout(100, 7).is_err());
    }
}

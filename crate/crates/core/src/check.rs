//! Central finite-difference gradient checks.
//!
//! The error of one coordinate is `|a - n| / max(|a|, |n|, floor)`; the floor
//! keeps coordinates whose true gradient is ~0 from turning round-off into
//! huge relative errors.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::baseline::ball_query;
use crate::cloud::{PointCloud, IGNORE};
use crate::grouping::{group, GroupingConfig};
use crate::math;
use crate::projection::{project, ProjectionConfig};
use crate::sampling::{sample_level, GridLevel, SampleGrid};
use crate::model::{FpKind, Model, PreparedScan};
use crate::propagation::{interpolate, interpolation_mix, propagate, FPStageSpec, FineGroup, FpHead};
use crate::set_abstraction::{aggregate, Aggregation, GroupInputs, Variant};
use crate::tensor::kernels::softmax_cross_entropy;
use crate::tensor::{mlp_forward, Eager, Graph, MlpSpec, ParamSet, RowMix, Tensor, Var};
use crate::Result;

/// Default central-difference step.
pub const STEP: f64 = 1e-5;
/// Gradients smaller than this are compared absolutely.
pub const FLOOR: f64 = 1e-3;

/// Coordinates whose error exceeds this are probed for a kink.
const KINK_PROBE: f64 = 1e-6;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(FLOOR)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradReport {
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(input, element)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    /// Coordinates left out because a ReLU or max-pool switch lies inside
    /// the difference window (left and right slopes disagree).
    pub kinks: usize,
}

impl GradReport {
    /// `f(delta)` evaluates the scalar with the coordinate moved by `delta`.
    fn probe(
        &mut self,
        analytic: f64,
        step: f64,
        at: (usize, usize),
        mut f: impl FnMut(f64) -> Result<f64>,
    ) -> Result<()> {
        let (up, down) = (f(step)?, f(-step)?);
        let numeric = (up - down) / (2.0 * step);
        let err = rel_err(analytic, numeric);
        if err > KINK_PROBE {
            let mid = f(0.0)?;
            let (right, left) = ((up - mid) / step, (mid - down) / step);
            // Smooth functions have matching one-sided slopes up to O(step).
            if rel_err(right, left) > 100.0 * step {
                self.kinks += 1;
                return Ok(());
            }
        }
        self.checked += 1;
        if err > self.max_rel_err || self.worst.is_none() {
            self.max_rel_err = self.max_rel_err.max(err);
            self.worst = Some(at);
        }
        Ok(())
    }

    pub fn merge(&mut self, other: &GradReport) {
        self.checked += other.checked;
        self.kinks += other.kinks;
        if other.max_rel_err >= self.max_rel_err {
            self.max_rel_err = other.max_rel_err;
            self.worst = other.worst;
        }
    }
}

/// Compares the tape gradient of a scalar built from `inputs` against
/// central differences over every element of every input.
pub fn check_gradients(
    inputs: &[Tensor],
    build: impl Fn(&mut Graph, &[Var]) -> Result<Var>,
    step: f64,
) -> Result<GradReport> {
    let eval = |xs: &[Tensor]| -> Result<f64> {
        let mut g = Graph::new();
        let vars: Vec<Var> = xs.iter().map(|t| g.leaf(t.clone().with_requires_grad(false))).collect();
        let out = build(&mut g, &vars)?;
        Ok(g.value(out).data().iter().sum())
    };
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone().with_requires_grad(true))).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars.iter().map(|&v| g.grad(v).expect("leaf grad").to_vec()).collect();

    let mut report = GradReport::default();
    let mut xs = inputs.to_vec();
    for t in 0..xs.len() {
        for e in 0..xs[t].len() {
            let orig = xs[t].data()[e];
            report.probe(analytic[t][e], step, (t, e), |delta| {
                xs[t].data_mut()[e] = orig + delta;
                let v = eval(&xs);
                xs[t].data_mut()[e] = orig;
                v
            })?;
        }
    }
    Ok(report)
}

/// `sum(x ⊗ r)` for a fixed random `r`, so every output element carries a
/// distinct weight into the scalar.
pub fn weighted_sum(g: &mut Graph, x: Var, seed: u64) -> Result<Var> {
    let r = random_tensor(g.value(x).shape(), seed, 1.0);
    let r = g.leaf(r);
    let y = g.mul(x, r)?;
    g.sum(y)
}

/// Uniform entries in `[-scale, scale)`.
pub fn random_tensor(shape: &[usize], seed: u64, scale: f64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Tensor::from_fn(shape.to_vec(), |_| rng.gen_range(-scale..scale))
}

/// Overwrites every parameter, biases included, with uniform values in
/// `[-scale, scale)`. Zero biases put ReLUs fed by dead units exactly on
/// their kink, where central differences are meaningless.
pub fn randomize_params(params: &mut ParamSet, seed: u64, scale: f64) {
    let names: Vec<_> = params.names().to_vec();
    for (i, name) in names.iter().enumerate() {
        let t = params.get_mut(name).expect("listed");
        let r = random_tensor(t.shape(), seed.wrapping_add(i as u64), scale);
        t.data_mut().copy_from_slice(r.data());
    }
}

/// Checks the masked cross-entropy gradient of a whole model for
/// `per_tensor` random elements of every parameter tensor.
pub fn check_model(model: &Model, scan: &PreparedScan, per_tensor: usize, seed: u64, step: f64) -> Result<GradReport> {
    let mut m = model.clone();
    m.loss_and_grads(scan)?;
    let loss = |m: &Model| -> Result<f64> {
        let logits = m.logits(scan)?;
        Ok(softmax_cross_entropy(&logits, &scan.targets, IGNORE)?.0.data()[0])
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let names: Vec<_> = m.params.names().to_vec();
    let mut report = GradReport::default();
    for (t, name) in names.iter().enumerate() {
        let len = m.params.get(name).expect("listed").len();
        for _ in 0..per_tensor.min(len) {
            let e = rng.gen_range(0..len);
            let analytic = m.params.get(name).and_then(|p| p.grad()).expect("collected")[e];
            let orig = m.params.get(name).expect("listed").data()[e];
            report.probe(analytic, step, (t, e), |delta| {
                m.params.get_mut(name).expect("listed").data_mut()[e] = orig + delta;
                let v = loss(&m);
                m.params.get_mut(name).expect("listed").data_mut()[e] = orig;
                v
            })?;
        }
    }
    Ok(report)
}

/// Like [`check_gradients`], but perturbs every entry of every tensor in
/// `params` (the inputs are closed over by `build`).
pub fn check_params(
    params: &ParamSet,
    build: impl Fn(&mut Graph, &ParamSet) -> Result<Var>,
    step: f64,
) -> Result<GradReport> {
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new();
        let out = build(&mut g, p)?;
        Ok(g.value(out).data().iter().sum())
    };
    let mut p = params.clone();
    let mut g = Graph::new();
    let out = build(&mut g, &p)?;
    g.backward(out)?;
    p.collect_grads(&g);
    let names: Vec<_> = p.names().to_vec();
    let mut report = GradReport::default();
    for (t, name) in names.iter().enumerate() {
        let analytic = p.get(name).and_then(|x| x.grad()).expect("collected").to_vec();
        for (e, &a) in analytic.iter().enumerate() {
            let orig = p.get(name).expect("listed").data()[e];
            report.probe(a, step, (t, e), |delta| {
                p.get_mut(name).expect("listed").data_mut()[e] = orig + delta;
                let v = eval(&p);
                p.get_mut(name).expect("listed").data_mut()[e] = orig;
                v
            })?;
        }
    }
    Ok(report)
}

fn dims(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.gen_range(1..=4)).collect()
}

/// One random operand pair whose shapes broadcast.
fn broadcast_pair(rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let n = rng.gen_range(1..=3);
    let full = dims(rng, n);
    let mut other = full.clone();
    for d in other.iter_mut() {
        if rng.gen_bool(0.3) {
            *d = 1;
        }
    }
    // Drop some leading axes now and then.
    let drop = rng.gen_range(0..other.len());
    let other = other[drop..].to_vec();
    if rng.gen_bool(0.5) {
        (full, other)
    } else {
        (other, full)
    }
}

fn random_mix(rng: &mut ChaCha8Rng, inputs: usize, outputs: usize) -> RowMix {
    let mut mix = RowMix::new(inputs);
    for _ in 0..outputs {
        let n = rng.gen_range(0..=3);
        let entries: Vec<(usize, f64)> = (0..n).map(|_| (rng.gen_range(0..inputs), rng.gen_range(-1.0..1.0))).collect();
        mix.push_row(entries);
    }
    mix
}

/// Element-level checks of every differentiable tape op on `shapes` random
/// shapes each. Returns one report per op.
pub fn op_suite(shapes: usize, seed: u64) -> Result<Vec<(&'static str, GradReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out: Vec<(&'static str, GradReport)> = Vec::new();
    let mut push = |name: &'static str, r: GradReport| match out.iter_mut().find(|(n, _)| *n == name) {
        Some((_, acc)) => acc.merge(&r),
        None => out.push((name, r)),
    };
    for i in 0..shapes {
        let s = seed.wrapping_mul(7919).wrapping_add(i as u64 * 31);
        let rs = s + 1;
        let (sa, sb) = broadcast_pair(&mut rng);
        let ins = [random_tensor(&sa, s + 2, 1.0), random_tensor(&sb, s + 3, 1.0)];
        push("add", check_gradients(&ins, |g, v| { let y = g.add(v[0], v[1])?; weighted_sum(g, y, rs) }, STEP)?);
        push("mul", check_gradients(&ins, |g, v| { let y = g.mul(v[0], v[1])?; weighted_sum(g, y, rs) }, STEP)?);

        let x = [random_tensor(&dims(&mut rng, 3), s + 4, 1.0)];
        push("relu", check_gradients(&x, |g, v| { let y = g.relu(v[0])?; weighted_sum(g, y, rs) }, STEP)?);
        push("sum", check_gradients(&x, |g, v| { let y = g.sum(v[0])?; weighted_sum(g, y, rs) }, STEP)?);
        push("transpose", check_gradients(&x, |g, v| { let y = g.transpose_last2(v[0])?; weighted_sum(g, y, rs) }, STEP)?);
        let shape = x[0].shape().to_vec();
        let flat: usize = shape.iter().product();
        push("reshape", check_gradients(&x, |g, v| { let y = g.reshape(v[0], &[flat])?; weighted_sum(g, y, rs) }, STEP)?);
        let axis = rng.gen_range(0..3);
        push("max_pool", check_gradients(&x, |g, v| { let y = g.max_pool(v[0], axis)?; weighted_sum(g, y, rs) }, STEP)?);

        let (b, p, q, r) = (rng.gen_range(1..=3), rng.gen_range(1..=4), rng.gen_range(1..=4), rng.gen_range(1..=4));
        let (ba, bb) = match rng.gen_range(0..3) {
            0 => (b, b),
            1 => (1, b),
            _ => (b, 1),
        };
        let ins = [random_tensor(&[ba, p, q], s + 5, 1.0), random_tensor(&[bb, q, r], s + 6, 1.0)];
        push("matmul", check_gradients(&ins, |g, v| { let y = g.matmul(v[0], v[1])?; weighted_sum(g, y, rs) }, STEP)?);

        let lead = dims(&mut rng, 2);
        let (ca, cb) = (rng.gen_range(1..=4), rng.gen_range(1..=4));
        let ins = [
            random_tensor(&[lead[0], lead[1], ca], s + 7, 1.0),
            random_tensor(&[lead[0], lead[1], cb], s + 8, 1.0),
        ];
        push("concat", check_gradients(&ins, |g, v| { let y = g.concat_last(v[0], v[1])?; weighted_sum(g, y, rs) }, STEP)?);

        let (n, m, c) = (rng.gen_range(1..=5), rng.gen_range(1..=6), rng.gen_range(1..=3));
        let mix = Arc::new(random_mix(&mut rng, n, m));
        let x = [random_tensor(&[n, c], s + 9, 1.0)];
        push("row_mix", check_gradients(&x, |g, v| { let y = g.row_mix(v[0], &mix)?; weighted_sum(g, y, rs) }, STEP)?);

        let (rows, classes) = (rng.gen_range(1..=5), rng.gen_range(2..=4));
        let targets: Vec<usize> = (0..rows)
            .map(|_| if rng.gen_bool(0.2) { IGNORE } else { rng.gen_range(0..classes) })
            .collect();
        let x = [random_tensor(&[rows, classes], s + 10, 2.0)];
        push("cross_entropy", check_gradients(&x, |g, v| g.cross_entropy(v[0], &targets, IGNORE), STEP)?);

        let mut widths = vec![rng.gen_range(1..=4)];
        let layers = rng.gen_range(1..=2);
        widths.extend(dims(&mut rng, layers));
        let spec = if rng.gen_bool(0.5) { MlpSpec::new(&widths, s) } else { MlpSpec::relu(&widths, s) };
        let mut params = ParamSet::new();
        spec.init("mlp", &mut params)?;
        randomize_params(&mut params, s + 12, 0.5);
        let x = [random_tensor(&[rng.gen_range(1..=3), rng.gen_range(1..=3), widths[0]], s + 11, 1.0)];
        let build = |g: &mut Graph, p: &ParamSet, x: Var| -> Result<Var> {
            let y = mlp_forward(g, p, "mlp", &spec, x)?;
            weighted_sum(g, y, rs)
        };
        push("mlp (input)", check_gradients(&x, |g, v| build(g, &params, v[0]), STEP)?);
        push("mlp (weights)", check_params(&params, |g, p| { let v = g.leaf(x[0].clone()); build(g, p, v) }, STEP)?);
    }
    Ok(out)
}

/// Random aggregation inputs: `[m, s, c]` features, local offsets, a 0/1
/// mask and positive inverse densities.
pub fn random_group(m: usize, s: usize, c: usize, seed: u64) -> [Tensor; 4] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    [
        random_tensor(&[m, s, c], seed + 1, 1.0),
        random_tensor(&[m, s, 3], seed + 2, 1.0),
        Tensor::from_fn([m, s, 1], |_| if rng.gen_bool(0.7) { 1.0 } else { 0.0 }),
        Tensor::from_fn([m, 1, 1], |_| rng.gen_range(0.1..1.0)),
    ]
}

/// Parameter and input gradients of one aggregation variant on random inputs.
pub fn aggregation_check(variant: Variant, draws: usize, seed: u64) -> Result<GradReport> {
    let mut report = GradReport::default();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for d in 0..draws {
        let s = seed.wrapping_mul(104_729).wrapping_add(d as u64 * 17);
        let (m, slots, c) = (rng.gen_range(1..=3), rng.gen_range(1..=5), rng.gen_range(1..=3));
        let agg = Aggregation::build(variant, c, rng.gen_range(2..=4), rng.gen_range(1..=3), s);
        let mut params = ParamSet::new();
        agg.init("sa", &mut params)?;
        randomize_params(&mut params, s + 6, 0.5);
        let inputs = random_group(m, slots, c, s);
        let build = |g: &mut Graph, p: &ParamSet, v: &[Var]| -> Result<Var> {
            let y = aggregate(
                g,
                p,
                "sa",
                &agg,
                GroupInputs {
                    features: v[0],
                    local: v[1],
                    mask: v[2],
                    density: v[3],
                },
            )?;
            weighted_sum(g, y, s + 5)
        };
        // Mask stays fixed: it is a 0/1 constant.
        let fixed_mask = inputs[2].clone();
        report.merge(&check_gradients(
            &[inputs[0].clone(), inputs[1].clone(), inputs[3].clone()],
            |g, v| {
                let mask = g.leaf(fixed_mask.clone());
                build(g, &params, &[v[0], v[1], mask, v[2]])
            },
            STEP,
        )?);
        report.merge(&check_params(
            &params,
            |g, p| {
                let v: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
                build(g, p, &v)
            },
            STEP,
        )?);
    }
    Ok(report)
}

/// Gradients through interpolation, skip concatenation and the FP head,
/// with a real window layout from a small synthetic scan.
pub fn propagation_check(head: FpKind, seed: u64) -> Result<GradReport> {
    let cloud = crate::synth::scene(seed, &crate::synth::SceneConfig { beams: 8, ..Default::default() }.with_azimuth_steps(16));
    let image = crate::projection::project(&cloud, &crate::projection::ProjectionConfig::new(8, 16))?;
    let level = crate::sampling::GridLevel::from_image(&image);
    let (_, sampling) = crate::sampling::sample_level(&level, &crate::sampling::SampleGrid::new(4, 8))?;
    let cfg = crate::grouping::GroupingConfig::new(3, 6.0);
    let bundle = crate::grouping::group(&level, &sampling, &cfg)?;
    let mix = Arc::new(interpolation_mix(&bundle, &level, 2.0)?);
    let (c, c_skip) = (2, 2);
    let coarse = random_tensor(&[bundle.centers(), c], seed + 1, 1.0);
    let skip = random_tensor(&[level.len(), c_skip], seed + 2, 1.0);
    let spec = FPStageSpec {
        head: match head {
            FpKind::Plain => FpHead::Plain {
                mlp: MlpSpec::relu(&[c + c_skip, 3], seed),
            },
            FpKind::Spider => FpHead::Conv(Aggregation::build(Variant::SpiderCnn, c + c_skip + 3, 2, 2, seed)),
            FpKind::PointConv => FpHead::Conv(Aggregation::build(Variant::PointConv, c + c_skip + 3, 2, 2, seed)),
        },
        p: 2.0,
    };
    let mut params = ParamSet::new();
    spec.init("fp", &mut params)?;
    randomize_params(&mut params, seed + 4, 0.5);
    let fine = if spec.needs_fine_group() {
        let (_, same) = crate::sampling::sample_level(&level, &crate::sampling::SampleGrid::new(8, 16))?;
        Some(crate::model::PreparedGroup::from_bundle(&crate::grouping::group(&level, &same, &cfg)?))
    } else {
        None
    };
    let build = |g: &mut Graph, p: &ParamSet, coarse: Var, skip: Var| -> Result<Var> {
        let fg = fine.as_ref().map(|f| FineGroup {
            gather: &f.gather,
            slots: f.slots,
            local: g.leaf(f.local.clone()),
            mask: g.leaf(f.mask.clone()),
            density: g.leaf(f.density.clone()),
        });
        let y = propagate(g, p, "fp", &spec, coarse, Some(skip), &mix, fg)?;
        weighted_sum(g, y, seed + 3)
    };
    let mut report = check_gradients(&[coarse.clone(), skip.clone()], |g, v| build(g, &params, v[0], v[1]), STEP)?;
    report.merge(&check_params(
        &params,
        |g, p| {
            let (a, b) = (g.leaf(coarse.clone()), g.leaf(skip.clone()));
            build(g, p, a, b)
        },
        STEP,
    )?);
    Ok(report)
}

/// Rays on a regular lattice with random ranges and dropouts, one point per
/// pixel of an `h × w` image with the default field of view.
pub fn lattice_cloud(h: usize, w: usize, seed: u64) -> PointCloud {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (up, down) = (3.0_f64.to_radians(), (-25.0_f64).to_radians());
    let base = rng.gen_range(3.0..15.0);
    let mut xyz = Vec::new();
    for v in 0..h {
        let pitch = up - (v as f64 + 0.5) / h as f64 * (up - down);
        for u in 0..w {
            if rng.gen_bool(0.1) {
                continue;
            }
            let yaw = core::f64::consts::PI * (1.0 - 2.0 * (u as f64 + 0.5) / w as f64);
            let r = base + rng.gen_range(-1.0..1.0) + 0.5 * math::sin(u as f64 * 0.2);
            xyz.push([
                r * math::cos(pitch) * math::cos(yaw),
                r * math::cos(pitch) * math::sin(yaw),
                r * math::sin(pitch),
            ]);
        }
    }
    let n = xyz.len();
    PointCloud::new(xyz, vec![0.5; n]).expect("finite lattice")
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroupingOracle {
    pub centers: usize,
    /// Masked neighbors outside the true ball.
    pub violations: usize,
    /// Centers whose window contains every point within the radius.
    pub covered: usize,
    /// Covered centers whose masked set differs from the ball.
    pub covered_mismatches: usize,
}

/// Projected grouping of one random lattice cloud against brute-force
/// ball queries on the original points.
pub fn grouping_oracle(seed: u64) -> Result<GroupingOracle> {

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let h = [16, 32][rng.gen_range(0..2)];
    let w = [64, 128][rng.gen_range(0..2)];
    let cloud = lattice_cloud(h, w, seed);
    let image = project(&cloud, &ProjectionConfig::new(h, w))?;
    let level = GridLevel::from_image(&image);
    let (_, sampling) = sample_level(&level, &SampleGrid::new(h / 2, w / 2))?;
    let k = [3, 5, 7][rng.gen_range(0..3)];
    let cfg = GroupingConfig::new(k, rng.gen_range(0.3..2.0));
    let bundle = group(&level, &sampling, &cfg)?;
    let mut report = GroupingOracle::default();
    for (m, c) in bundle.center.iter().enumerate() {
        let Some(c) = *c else { continue };
        report.centers += 1;
        let mut got: Vec<usize> = bundle
            .masked_neighbors(m)
            .map(|pix| image.pix2pt[pix].expect("valid pixel"))
            .collect();
        got.sort_unstable();
        let truth = ball_query(&cloud.xyz, level.xyz[c], cfg.radius);
        report.violations += got.iter().filter(|i| truth.binary_search(i).is_err()).count();
        let window: Vec<usize> = bundle.neighbor[m * bundle.slots..(m + 1) * bundle.slots]
            .iter()
            .flatten()
            .map(|&pix| image.pix2pt[pix].expect("valid pixel"))
            .collect();
        if truth.iter().all(|i| window.contains(i)) {
            report.covered += 1;
            if got != truth {
                report.covered_mismatches += 1;
            }
        }
    }
    Ok(report)
}

/// The hand case: one fine pixel at distances 1 and 3 from two samples
/// carrying 0 and 8, `p = 2`. Returns `(hand value, coincident pixel value)`
/// where the coincident pixel sits on the sample carrying `coincident`.
pub fn interpolation_hand_case(coincident: f64) -> Result<(f64, f64)> {

    let mut xyz = vec![[0.0; 3]; 8];
    let mut valid = vec![false; 8];
    for (pix, x) in [(0, 10.0), (1, 11.0), (3, 13.0)] {
        xyz[pix] = [x, 0.0, 0.0];
        valid[pix] = true;
    }
    let level = GridLevel {
        height: 1,
        width: 8,
        xyz,
        valid,
    };
    let (_, sampling) = sample_level(&level, &SampleGrid::new(1, 4).with_offset(0, 1))?;
    let bundle = group(&level, &sampling, &GroupingConfig::new(7, 5.0))?;
    let mix = interpolation_mix(&bundle, &level, 2.0)?;
    let coarse = Tensor::new([4, 1], vec![0.0, 8.0, 0.0, 0.0])?;
    let hand = interpolate(&coarse, &mix)?.data()[0];
    let coarse = Tensor::new([4, 1], vec![coincident, 8.0, 0.0, 0.0])?;
    let same = interpolate(&coarse, &mix)?.data()[1];
    Ok((hand, same))
}

/// Largest `|Σ w - 1|` over covered fine pixels of a random lattice scan, and
/// the largest deviation of interpolating a constant.
pub fn partition_of_unity(seed: u64) -> Result<(f64, f64)> {

    let cloud = lattice_cloud(32, 128, seed);
    let image = project(&cloud, &ProjectionConfig::new(32, 128))?;
    let level = GridLevel::from_image(&image);
    let (_, sampling) = sample_level(&level, &SampleGrid::new(16, 64))?;
    let bundle = group(&level, &sampling, &GroupingConfig::new(5, 1.5))?;
    let mix = interpolation_mix(&bundle, &level, 2.0)?;
    let mut worst = 0.0_f64;
    for i in 0..mix.outputs() {
        let (count, total) = mix.row(i).fold((0, 0.0), |(c, t), (_, w)| (c + 1, t + w));
        if count > 0 {
            worst = worst.max((total - 1.0).abs());
        }
    }
    let c = 3.7;
    let out = mix.apply(&Tensor::full([bundle.centers(), 1], c))?;
    let mut dev = 0.0_f64;
    for i in 0..mix.outputs() {
        if mix.row(i).next().is_some() {
            dev = dev.max((out.data()[i] - c).abs());
        }
    }
    Ok((worst, dev))
}

/// Number of draws where PointConv with `DensityNet ≡ 1` differs bitwise
/// from SpiderCNN with the same remaining parameters.
pub fn variant_reduction(draws: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatches = 0;
    for d in 0..draws {
        let s = seed.wrapping_add(d as u64 * 1000);
        let (m, slots, c) = (rng.gen_range(1..=6), rng.gen_range(1..=9), rng.gen_range(1..=6));
        let (c_out, c_mid) = (rng.gen_range(2..=8), rng.gen_range(1..=6));
        let conv = Aggregation::build(Variant::PointConv, c, c_out, c_mid, s);
        let spider = Aggregation::build(Variant::SpiderCnn, c, c_out, c_mid, s);
        let mut params = ParamSet::new();
        conv.init("sa", &mut params)?;
        randomize_params(&mut params, s + 1, 1.0);
        // DensityNet ≡ 1: zero weights, unit final bias.
        let names: Vec<_> = params.names().iter().filter(|n| n.starts_with("sa.densitynet")).cloned().collect();
        for n in &names {
            params.get_mut(n).expect("listed").data_mut().iter_mut().for_each(|v| *v = 0.0);
        }
        let last = MlpSpec::bias_name("sa.densitynet", 1);
        params.get_mut(&last).expect("two-layer DensityNet").data_mut()[0] = 1.0;
        let [f, l, mk, dens] = random_group(m, slots, c, s + 2);
        let run = |agg: &Aggregation| {
            aggregate(
                &mut Eager,
                &params,
                "sa",
                agg,
                GroupInputs {
                    features: f.clone(),
                    local: l.clone(),
                    mask: mk.clone(),
                    density: dens.clone(),
                },
            )
        };
        let (a, b) = (run(&conv)?, run(&spider)?);
        let same = a.shape() == b.shape() && a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits());
        mismatches += usize::from(!same);
    }
    Ok(mismatches)
}

/// Number of random prediction/label vectors where [`evaluate`](crate::metrics::evaluate)
/// disagrees with per-class counting done directly on the vectors.
pub fn metric_oracle(trials: usize, seed: u64) -> Result<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut bad = 0;
    for _ in 0..trials {
        let classes = rng.gen_range(1..=6);
        let n = rng.gen_range(0..200);
        let preds: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let labels: Vec<usize> = (0..n)
            .map(|_| if rng.gen_bool(0.1) { IGNORE } else { rng.gen_range(0..classes) })
            .collect();
        let e = crate::metrics::evaluate(&preds, &labels, classes)?;
        let mut ok = true;
        let mut ious = Vec::new();
        let (mut hits, mut total) = (0u64, 0u64);
        for c in 0..classes {
            let (mut tp, mut fp, mut fnn) = (0u64, 0u64, 0u64);
            for (&p, &t) in preds.iter().zip(&labels) {
                if t == IGNORE {
                    continue;
                }
                match (p == c, t == c) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fnn += 1,
                    _ => {}
                }
            }
            for cc in 0..classes {
                let want = preds.iter().zip(&labels).filter(|(&pp, &tt)| tt == c && pp == cc).count() as u64;
                ok &= e.confusion.get(c, cc) == want;
            }
            let iou = (tp + fp + fnn > 0).then(|| tp as f64 / (tp + fp + fnn) as f64);
            ok &= e.iou[c] == iou;
            if let Some(v) = iou {
                ious.push(v);
            }
        }
        for (&p, &t) in preds.iter().zip(&labels) {
            if t != IGNORE {
                total += 1;
                hits += u64::from(p == t);
            }
        }
        let miou = (!ious.is_empty()).then(|| ious.iter().sum::<f64>() / ious.len() as f64);
        ok &= match (e.miou, miou) {
            (Some(a), Some(b)) => (a - b).abs() < 1e-12,
            (a, b) => a == b,
        };
        ok &= e.accuracy == (total > 0).then(|| hits as f64 / total as f64);
        ok &= e.confusion.total() == total;
        bad += usize::from(!ok);
    }
    Ok(bad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrong_gradient_is_reported() {
        let mut r = GradReport::default();
        r.probe(1.0, STEP, (0, 0), |d| Ok(2.0 * (0.3 + d))).unwrap();
        assert!((r.max_rel_err - 0.5).abs() < 1e-6);
        assert_eq!(r.kinks, 0);
    }

    #[test]
    fn kink_inside_the_window_is_skipped() {
        let mut r = GradReport::default();
        r.probe(1.0, STEP, (0, 0), |d| Ok((2e-6 + d).abs())).unwrap();
        assert_eq!((r.checked, r.kinks), (0, 1));
    }
}

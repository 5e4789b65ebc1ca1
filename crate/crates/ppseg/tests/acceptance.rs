//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p ppseg --test acceptance`. Exits non-zero when any
//! criterion fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::time::{Duration, Instant};

use ppseg::bench::{grouping_bench, throughput, GroupingBench};
use ppseg::io::{decode_labels, decode_scan, encode_predictions, encode_scan};
use ppseg_core::check::{self, aggregation_check, check_model, op_suite, propagation_check, randomize_params, STEP};
use ppseg_core::model::{Arch, FpKind};
use ppseg_core::synth::{scene, scene_set, SceneConfig};
use ppseg_core::tensor::Sgd;
use ppseg_core::{LabelMap, Model, ProjectionConfig, Variant, IGNORE};

type Verdict = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(limit: Duration, start: Instant, detail: String) -> Verdict {
    let t = start.elapsed();
    ensure(t < limit, format!("{detail}; {:.1}s of {}s", t.as_secs_f64(), limit.as_secs()))
}

fn gradient_suite() -> Verdict {
    let start = Instant::now();
    let mut worst_op = 0.0_f64;
    let mut bad = Vec::new();
    let mut note = |name: String, r: &check::GradReport, tol: f64| {
        if !(r.max_rel_err < tol && r.kinks * 100 <= r.checked && r.checked > 0) {
            bad.push(format!("{name} err {:.2e} kinks {}/{}", r.max_rel_err, r.kinks, r.checked));
        }
    };
    for (op, r) in op_suite(20, 11).map_err(|e| e.to_string())? {
        worst_op = worst_op.max(r.max_rel_err);
        note(op.to_string(), &r, 1e-4);
    }
    for v in [Variant::PointNet, Variant::SpiderCnn, Variant::PointConv] {
        let r = aggregation_check(v, 6, 3).map_err(|e| e.to_string())?;
        worst_op = worst_op.max(r.max_rel_err);
        note(format!("sa {v:?}"), &r, 1e-4);
    }
    for seed in [5, 6] {
        for head in [FpKind::Plain, FpKind::Spider, FpKind::PointConv] {
            let r = propagation_check(head, seed).map_err(|e| e.to_string())?;
            worst_op = worst_op.max(r.max_rel_err);
            note(format!("fp {head:?}"), &r, 1e-4);
        }
    }
    let cloud = scene(9, &SceneConfig { beams: 8, ..SceneConfig::default() }.with_azimuth_steps(32));
    let mut worst_model = 0.0_f64;
    for v in [Variant::PointNet, Variant::SpiderCnn, Variant::PointConv] {
        let arch = Arch::halving(ProjectionConfig::new(8, 32), &[4, 6], &[3.0, 6.0], 3, v, 3);
        let mut model = Model::new(arch.build().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        randomize_params(&mut model.params, 2, 0.5);
        let scan = model.prepare(&cloud).map_err(|e| e.to_string())?;
        let r = check_model(&model, &scan, 2, 1, STEP).map_err(|e| e.to_string())?;
        worst_model = worst_model.max(r.max_rel_err);
        note(format!("model {v:?}"), &r, 1e-3);
    }
    let detail = format!("op max rel err {worst_op:.2e} (< 1e-4), model {worst_model:.2e} (< 1e-3)");
    if !bad.is_empty() {
        return Err(format!("{detail}; {}", bad.join(", ")));
    }
    within(Duration::from_secs(120), start, detail)
}

fn grouping_oracle() -> Verdict {
    let start = Instant::now();
    let mut total = check::GroupingOracle::default();
    for seed in 0..100 {
        let r = check::grouping_oracle(seed).map_err(|e| e.to_string())?;
        total.centers += r.centers;
        total.violations += r.violations;
        total.covered += r.covered;
        total.covered_mismatches += r.covered_mismatches;
    }
    let detail = format!(
        "100 clouds, {} centers, {} violations, {}/{} covered centers differ",
        total.centers, total.violations, total.covered_mismatches, total.covered
    );
    if total.violations > 0 || total.covered_mismatches > 0 || total.covered == 0 {
        return Err(detail);
    }
    within(Duration::from_secs(60), start, detail)
}

fn interpolation_properties() -> Verdict {
    let (hand, same) = check::interpolation_hand_case(5.0).map_err(|e| e.to_string())?;
    let mut sum_err = 0.0_f64;
    for seed in 0..10 {
        let (s, c) = check::partition_of_unity(seed).map_err(|e| e.to_string())?;
        sum_err = sum_err.max(s).max(c);
    }
    let rel = (same - 5.0).abs() / 5.0;
    ensure(
        (hand - 0.8).abs() < 1e-12 && rel < 1e-6 && sum_err < 1e-12,
        format!("hand {hand:.15} (0.8 ± 1e-12), |Σw-1| {sum_err:.1e} (< 1e-12), coincident rel {rel:.1e} (< 1e-6)"),
    )
}

fn variant_reduction() -> Verdict {
    let bad = check::variant_reduction(50, 7).map_err(|e| e.to_string())?;
    ensure(bad == 0, format!("{bad} of 50 draws differ bitwise"))
}

fn overfit_gate() -> Verdict {
    let start = Instant::now();
    let (h, w) = (32, 256);
    let scenes = SceneConfig { beams: h, ..SceneConfig::default() }.with_azimuth_steps(w);
    let clouds = scene_set(5, 100, &scenes);
    let mut reached = Vec::new();
    let mut ok = true;
    for v in [Variant::PointNet, Variant::SpiderCnn, Variant::PointConv] {
        let arch = Arch::halving(ProjectionConfig::new(h, w), &[16, 32], &[1.0, 2.0], 3, v, 3);
        let mut model = Model::new(arch.build().map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        let scans = clouds.iter().map(|c| model.prepare(c)).collect::<Result<Vec<_>, _>>().map_err(|e| e.to_string())?;
        let mut sgd = Sgd::new(0.01, 0.9).map_err(|e| e.to_string())?;
        let mut hit = None;
        let mut acc = 0.0;
        for step in 1..=500 {
            model.train_step(&scans[(step - 1) % scans.len()], &mut sgd).map_err(|e| e.to_string())?;
            if step % 25 == 0 {
                acc = 0.0;
                for s in &scans {
                    acc += model.pixel_accuracy(s).map_err(|e| e.to_string())?.unwrap_or(0.0);
                }
                acc /= scans.len() as f64;
                if acc >= 0.95 {
                    hit = Some(step);
                    break;
                }
            }
        }
        match hit {
            Some(s) => reached.push(format!("{v:?} {acc:.3} at step {s}")),
            None => {
                ok = false;
                reached.push(format!("{v:?} only {acc:.3} after 500 steps"));
            }
        }
    }
    let detail = format!("{} (>= 0.95 within 500)", reached.join(", "));
    if !ok {
        return Err(detail);
    }
    within(Duration::from_secs(600), start, detail)
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[0] > w[1])
}

fn throughput_direction() -> Verdict {
    let run = |k, w| throughput(Variant::PointNet, k, w, 3).map(|t| t.scans_per_sec).map_err(|e| e.to_string());
    let by_k = [run(3, 512)?, run(5, 512)?, run(7, 512)?];
    let by_w = [by_k[1], run(5, 1024)?, run(5, 2048)?];
    let f = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" > ");
    ensure(
        strictly_decreasing(&by_k) && strictly_decreasing(&by_w),
        format!("scans/s k=3,5,7: {}; width 512,1024,2048: {}", f(&by_k), f(&by_w)),
    )
}

fn speedup_direction() -> Verdict {
    let rows = grouping_bench(&GroupingBench {
        reps: 7,
        ..GroupingBench::default()
    })
    .map_err(|e| e.to_string())?;
    let ratio = rows[0].median_ms / rows[1].median_ms;
    ensure(
        ratio >= 50.0,
        format!(
            "n=120000 M=2048 k=5: fps+ball {:.1} ms, projected {:.2} ms, {ratio:.1}x (>= 50x)",
            rows[0].median_ms, rows[1].median_ms
        ),
    )
}

fn metric_oracle() -> Verdict {
    let bad = check::metric_oracle(1000, 3).map_err(|e| e.to_string())?;
    ensure(bad == 0, format!("{bad} of 1000 random vectors disagree"))
}

fn io_golden_files() -> Verdict {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures");
    let read = |n: &str| std::fs::read(dir.join(n)).map_err(|e| format!("{n}: {e}"));
    let scan_bytes = read("two_points.bin")?;
    // 1.0, -2.0, 0.5, 0.25 | 0.0, 3.5, -1.0, 1.0 as little-endian f32
    let expect: [u8; 32] = [
        0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x80, 0x3e, //
        0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x60, 0x40, 0x00, 0x00, 0x80, 0xbf, 0x00, 0x00, 0x80, 0x3f,
    ];
    let mut fails = Vec::new();
    if scan_bytes != expect {
        fails.push("scan fixture bytes");
    }
    let cloud = decode_scan(&scan_bytes, "two_points.bin").map_err(|e| e.to_string())?;
    if cloud.xyz != [[1.0, -2.0, 0.5], [0.0, 3.5, -1.0]] || cloud.remission != [0.25, 1.0] {
        fails.push("scan values");
    }
    if encode_scan(&cloud) != scan_bytes {
        fails.push("scan re-encode");
    }
    let map_text = String::from_utf8(read("map.txt")?).map_err(|e| e.to_string())?;
    let map = LabelMap::parse(&map_text).map_err(|e| e.to_string())?;
    let label_bytes = read("two_labels.label")?;
    if label_bytes != [0x28, 0x00, 0x01, 0x00, 0, 0, 0, 0] {
        fails.push("label fixture bytes");
    }
    let labels = decode_labels(&label_bytes, &map, Some(2), "two_labels.label").map_err(|e| e.to_string())?;
    if labels.train != [3, IGNORE] || labels.instance != [1, 0] {
        fails.push("label values");
    }
    if encode_predictions(&[3], &map).map_err(|e| e.to_string())? != [0x28, 0, 0, 0] {
        fails.push("prediction bytes");
    }
    let all: Vec<usize> = (0..map.num_classes()).collect();
    let bytes = encode_predictions(&all, &map).map_err(|e| e.to_string())?;
    if decode_labels(&bytes, &map, None, "rt").map_err(|e| e.to_string())?.train != all {
        fails.push("label round trip");
    }
    if decode_scan(&scan_bytes[..17], "t").is_ok() || !decode_scan(&[], "e").map_or(false, |c| c.is_empty()) {
        fails.push("length checks");
    }
    ensure(
        fails.is_empty(),
        if fails.is_empty() {
            "scan and label fixtures decode, re-encode bit-exact and round-trip".into()
        } else {
            format!("mismatch: {}", fails.join(", "))
        },
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 9] = [
        ("gradient suite", gradient_suite),
        ("grouping oracle", grouping_oracle),
        ("interpolation properties", interpolation_properties),
        ("variant reduction", variant_reduction),
        ("overfit gate", overfit_gate),
        ("throughput direction", throughput_direction),
        ("speedup direction", speedup_direction),
        ("metric oracle", metric_oracle),
        ("io golden files", io_golden_files),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let verdict = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match verdict {
            Ok(d) => println!("PASS  {name:<26} {d} [{secs:.1}s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name:<26} {d} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}

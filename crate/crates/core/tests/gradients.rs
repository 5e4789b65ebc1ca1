use ppseg_core::check::{aggregation_check, check_model, op_suite, propagation_check, randomize_params, STEP};
use ppseg_core::model::{Arch, FpKind};
use ppseg_core::synth::{scene, SceneConfig};
use ppseg_core::{Model, ProjectionConfig, Variant};

#[test]
fn every_op_matches_central_differences() {
    for (op, r) in op_suite(20, 11).unwrap() {
        assert!(r.max_rel_err < 1e-4, "{op}: {r:?}");
        assert!(r.kinks * 100 <= r.checked, "{op}: {r:?}");
        assert!(r.checked > 0, "{op} checked nothing");
    }
}

#[test]
fn aggregation_variants_match_central_differences() {
    for v in [Variant::PointNet, Variant::SpiderCnn, Variant::PointConv] {
        let r = aggregation_check(v, 6, 3).unwrap();
        assert!(r.max_rel_err < 1e-4, "{v:?}: {r:?}");
        assert!(r.kinks * 100 <= r.checked, "{v:?}: {r:?}");
    }
}

#[test]
fn propagation_heads_match_central_differences() {
    for seed in [5, 6] {
        for head in [FpKind::Plain, FpKind::Spider, FpKind::PointConv] {
            let r = propagation_check(head, seed).unwrap();
            assert!(r.max_rel_err < 1e-4, "{head:?}: {r:?}");
            assert!(r.kinks * 100 <= r.checked, "{head:?}: {r:?}");
        }
    }
}

#[test]
fn tiny_model_end_to_end() {
    let cloud = scene(9, &SceneConfig { beams: 8, ..SceneConfig::default() }.with_azimuth_steps(32));
    for v in [Variant::PointNet, Variant::SpiderCnn, Variant::PointConv] {
        let arch = Arch::halving(ProjectionConfig::new(8, 32), &[4, 6], &[3.0, 6.0], 3, v, 3);
        let mut model = Model::new(arch.build().unwrap()).unwrap();
        randomize_params(&mut model.params, 2, 0.5);
        let scan = model.prepare(&cloud).unwrap();
        let r = check_model(&model, &scan, 2, 1, STEP).unwrap();
        assert!(r.max_rel_err < 1e-3, "{v:?}: {r:?}");
    }
}

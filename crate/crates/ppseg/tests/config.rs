use ppseg::config::{LabelSource, RunConfig};
use ppseg_core::model::FpKind;
use ppseg_core::Variant;

#[test]
fn empty_file_gives_defaults() {
    let c = RunConfig::parse("# nothing\n\n").unwrap();
    assert_eq!((c.projection.height, c.projection.width), (64, 512));
    assert_eq!(c.stages.len(), 4);
    assert_eq!(c.stages[0].grid, (32, 256));
    assert_eq!(c.stages[3].mlp, vec![256, 256]);
    assert_eq!(c.head, vec![128]);
    assert_eq!(c.labels, LabelSource::SemanticKitti);
    assert!(c.knn.is_none());
    let spec = c.arch(20).unwrap().build().unwrap();
    assert_eq!(spec.num_classes, 20);
}

#[test]
fn overrides_apply_per_stage() {
    let c = RunConfig::parse(
        "model.variant = spidercnn\nmodel.widths = 8,16\nmodel.radii = 1,2\nsa2.k = 7\nsa2.dilation = 1x2\n\
         sa1.variant = pointnet\nfp1.variant = plain\nfp2.p = 1.5\nsa1.sigma = 0.3\nknn.enabled = yes\nknn.k = 3\n\
         model.classes = 4\ndata.labels = synthetic\n",
    )
    .unwrap();
    assert_eq!(c.stages[0].variant, Variant::PointNet);
    assert_eq!(c.stages[0].mlp, vec![8, 8]);
    assert_eq!(c.stages[0].fp_variant, FpKind::Plain);
    assert_eq!(c.stages[0].sigma, Some(0.3));
    assert_eq!(c.stages[1].variant, Variant::SpiderCnn);
    assert_eq!((c.stages[1].k, c.stages[1].dilation, c.stages[1].p), (7, (1, 2), 1.5));
    assert_eq!(c.knn.unwrap().k, 3);
    assert_eq!(c.arch(99).unwrap().num_classes, 4);
    assert_eq!(c.labels, LabelSource::Synthetic);
}

#[test]
fn text_round_trip() {
    for text in [
        "",
        "proj.fov_up = 2.5\nproj.fov_down = -24.9\nmodel.widths = 4,6\nmodel.radii = 0.7,1.3\nmodel.head =\n",
        "model.variant = pointconv\nsa1.sigma = 0.125\ntrain.azimuth_shift = true\nknn.enabled = 1\ndata.labels = /tmp/m.txt\n",
    ] {
        let c = RunConfig::parse(text).unwrap();
        let again = RunConfig::parse(&c.to_text()).unwrap();
        assert_eq!(again, c, "{}", c.to_text());
    }
}

#[test]
fn errors_are_config_errors() {
    for bad in [
        "nonsense",
        "proj.height = tall",
        "model.variant = resnet",
        "sa9.k = 3",
        "model.widths = 8,16\nmodel.radii = 1",
        "sa1.k = 4",
        "sa1.grid = 7x7",
        "proj.height = 64\nproj.height = 32",
        "knn.window = 4",
        "model.input_scale = 1",
    ] {
        let err = RunConfig::parse(bad).unwrap_err();
        assert_eq!(err.exit_code(), 2, "{bad}: {err}");
    }
}

use ppseg::bench::{grouping_bench, write_bench_csv, GroupingBench};
use ppseg::checkpoint::{decode, encode, restore};
use ppseg::config::RunConfig;
use ppseg::plotdata::{emit_plotdata, read_plotdata, AblationRow};
use ppseg::train::{train, write_loss_csv};
use ppseg::Error;
use ppseg_core::synth::{scene_set, SceneConfig, CLASSES};
use ppseg_core::{Model, PointCloud};

const SMALL: &str = "proj.height = 16\nproj.width = 128\nmodel.widths = 8,16\nmodel.radii = 1,2\nmodel.k = 3\n\
                     model.head = 16\ndata.labels = synthetic\n";

fn setup(extra: &str) -> (RunConfig, Model, Vec<PointCloud>) {
    let cfg = RunConfig::parse(&format!("{SMALL}{extra}")).unwrap();
    let model = Model::new(cfg.arch(CLASSES).unwrap().build().unwrap()).unwrap();
    let scene = SceneConfig {
        beams: 16,
        ..SceneConfig::default()
    }
    .with_azimuth_steps(128);
    (cfg, model, scene_set(2, 40, &scene))
}

#[test]
fn zero_epochs_keeps_initialization() {
    let (cfg, mut model, clouds) = setup("train.epochs = 0\n");
    let init = model.params.clone();
    let out = train(&mut model, &clouds, &cfg.train, |_, _| {}).unwrap();
    assert!(out.records.is_empty());
    assert_eq!(encode("", &model.params), encode("", &init));
}

#[test]
fn training_is_deterministic() {
    for extra in ["train.epochs = 2\n", "train.epochs = 2\ntrain.azimuth_shift = true\ntrain.seed = 5\n"] {
        let run = || {
            let (cfg, mut model, clouds) = setup(extra);
            let out = train(&mut model, &clouds, &cfg.train, |_, _| {}).unwrap();
            (encode(&cfg.to_text(), &model.params), out.records)
        };
        let (a, ra) = run();
        let (b, rb) = run();
        assert_eq!(ra, rb);
        assert!(a == b, "checkpoints differ");
    }
}

#[test]
fn loss_falls_on_a_two_scan_overfit() {
    // File order keeps both scans equally represented in every window.
    let (cfg, mut model, clouds) = setup("train.epochs = 25\ntrain.shuffle = false\ntrain.momentum = 0.5\n");
    let out = train(&mut model, &clouds, &cfg.train, |_, _| {}).unwrap();
    let losses: Vec<f64> = out.records.iter().map(|r| r.loss).collect();
    assert_eq!(losses.len(), 50);
    let smooth: Vec<f64> = losses.windows(10).map(|w| w.iter().sum::<f64>() / 10.0).collect();
    for (i, w) in smooth.windows(2).enumerate() {
        assert!(w[1] < w[0], "smoothed loss rose at step {}: {smooth:?}", i + 10);
    }
}

#[test]
fn non_finite_loss_stops_with_last_good_parameters() {
    let (cfg, mut model, clouds) = setup("train.epochs = 3\n");
    let mut seen = 0;
    let out = train(&mut model, &clouds, &cfg.train, |_, _| seen += 1).unwrap();
    assert!(out.aborted.is_none());
    // Poison one weight; the next step must refuse to update.
    let name = model.params.names()[0].clone();
    model.params.get_mut(&name).unwrap().data_mut()[0] = f64::NAN;
    let good = model.params.clone();
    let out = train(&mut model, &clouds, &cfg.train, |_, _| {}).unwrap();
    assert!(out.records.is_empty());
    assert!(out.aborted.is_some());
    assert_eq!(encode("", &model.params), encode("", &good));
    assert_eq!(seen, 6);
}

#[test]
fn loss_csv_has_one_row_per_step() {
    let (cfg, mut model, clouds) = setup("train.epochs = 1\n");
    let out = train(&mut model, &clouds, &cfg.train, |_, _| {}).unwrap();
    let mut buf = Vec::new();
    write_loss_csv(&mut buf, &out.records).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "step,epoch,scan,loss");
    assert_eq!(lines.len(), 3);
}

#[test]
fn checkpoint_round_trip_and_restore() {
    let (cfg, mut model, clouds) = setup("train.epochs = 1\n");
    train(&mut model, &clouds, &cfg.train, |_, _| {}).unwrap();
    let bytes = encode(&cfg.to_text(), &model.params);
    assert_eq!(&bytes[..6], b"PPSEG1");
    let ck = decode(&bytes, "m").unwrap();
    assert_eq!(ck.params, model.params);
    let mut fresh = Model::new(RunConfig::parse(&ck.config).unwrap().arch(CLASSES).unwrap().build().unwrap()).unwrap();
    restore(&mut fresh, &ck, "m").unwrap();
    let c = &clouds[0];
    assert_eq!(fresh.predict(c, None).unwrap(), model.predict(c, None).unwrap());

    let err = decode(&bytes[..bytes.len() - 3], "m").unwrap_err();
    assert!(err.to_string().contains("offset"), "{err}");
    assert!(matches!(decode(b"PPSEG2", "m"), Err(Error::Format { .. })));
    let other_cfg = RunConfig::parse(&SMALL.replace("8,16", "8,12")).unwrap();
    let mut other = Model::new(other_cfg.arch(CLASSES).unwrap().build().unwrap()).unwrap();
    assert!(restore(&mut other, &ck, "m").is_err());
}

#[test]
fn plotdata_schema() {
    let mut buf = Vec::new();
    emit_plotdata(&mut buf, &[]).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap(), "k,acc,miou,scans_per_sec\n");
    assert!(read_plotdata(&buf[..]).unwrap().is_empty());
    let rows: Vec<AblationRow> = [3, 5, 7]
        .iter()
        .map(|&k| AblationRow {
            k,
            acc: Some(0.9 - k as f64 / 100.0),
            miou: if k == 7 { None } else { Some(0.5 + 1.0 / 3.0) },
            scans_per_sec: 40.0 / k as f64,
        })
        .collect();
    let mut buf = Vec::new();
    emit_plotdata(&mut buf, &rows).unwrap();
    assert_eq!(String::from_utf8(buf.clone()).unwrap().lines().count(), 4);
    assert_eq!(read_plotdata(&buf[..]).unwrap(), rows);
}

#[test]
fn ablation_gives_one_row_per_k() {
    let (cfg, _, clouds) = setup("train.epochs = 1\n");
    let rows = ppseg::ablate::ablate(&cfg, CLASSES, &clouds, &clouds, &[3, 5, 7], 1).unwrap();
    assert_eq!(rows.iter().map(|r| r.k).collect::<Vec<_>>(), vec![3, 5, 7]);
    assert!(rows.iter().all(|r| r.scans_per_sec > 0.0 && r.acc.is_some()));
}

#[test]
fn small_grouping_bench() {
    let rows = grouping_bench(&GroupingBench {
        n: 4096,
        m: 64,
        k: 5,
        radius: 1.0,
        reps: 1,
        seed: 2,
    })
    .unwrap();
    assert_eq!(rows.len(), 2);
    let mut buf = Vec::new();
    write_bench_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert!(text.starts_with("method,n,M,k,median_ms\nfps+ball,4096,64,5,"));
    assert!(grouping_bench(&GroupingBench { m: 0, ..GroupingBench::default() }).is_err());
}

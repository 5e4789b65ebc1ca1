use std::path::PathBuf;

use ppseg::io::{decode_labels, decode_scan, encode_predictions, encode_scan, read_label_map, read_labels, read_scan};
use ppseg::Error;
use ppseg_core::{LabelMap, PointCloud, IGNORE};
use proptest::prelude::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

const TWO_POINTS: [u8; 32] = [
    0x00, 0x00, 0x80, 0x3f, 0x00, 0x00, 0x00, 0xc0, 0x00, 0x00, 0x00, 0x3f, 0x00, 0x00, 0x80, 0x3e, //
    0x00, 0x00, 0x00, 0x00, 0x00, 0x00, 0x60, 0x40, 0x00, 0x00, 0x80, 0xbf, 0x00, 0x00, 0x80, 0x3f,
];

fn map() -> LabelMap {
    read_label_map(&fixture("map.txt")).unwrap()
}

#[test]
fn scan_golden_file() {
    assert_eq!(std::fs::read(fixture("two_points.bin")).unwrap(), TWO_POINTS);
    let c = read_scan(&fixture("two_points.bin")).unwrap();
    assert_eq!(c.xyz, vec![[1.0, -2.0, 0.5], [0.0, 3.5, -1.0]]);
    assert_eq!(c.remission, vec![0.25, 1.0]);
    assert_eq!(encode_scan(&c), TWO_POINTS);
}

#[test]
fn empty_and_truncated_scans() {
    assert_eq!(decode_scan(&[], "e").unwrap().len(), 0);
    let err = decode_scan(&TWO_POINTS[..17], "t").unwrap_err();
    assert!(matches!(err, Error::Format { .. }));
    assert!(err.to_string().contains("offset 16"), "{err}");
    assert_eq!(err.exit_code(), 3);
}

#[test]
fn label_golden_file() {
    let l = read_labels(&fixture("two_labels.label"), &map(), Some(2)).unwrap();
    assert_eq!(l.train, vec![3, IGNORE]);
    assert_eq!(l.raw, vec![0x28, 0]);
    assert_eq!(l.instance, vec![1, 0]);
    assert_eq!(l.unknown, 0);
}

#[test]
fn label_errors_and_unknown_ids() {
    let bytes = std::fs::read(fixture("two_labels.label")).unwrap();
    assert!(matches!(decode_labels(&bytes, &map(), Some(3), "x"), Err(Error::Format { .. })));
    assert!(matches!(decode_labels(&bytes[..5], &map(), None, "x"), Err(Error::Format { .. })));
    let l = decode_labels(&[99, 0, 0, 0, 40, 0, 7, 0], &map(), None, "x").unwrap();
    assert_eq!(l.train, vec![IGNORE, 3]);
    assert_eq!(l.unknown, 1);
    assert_eq!(l.instance, vec![0, 7]);
}

#[test]
fn prediction_bytes() {
    assert_eq!(encode_predictions(&[3], &map()).unwrap(), [0x28, 0, 0, 0]);
    assert!(encode_predictions(&[], &map()).unwrap().is_empty());
    let err = encode_predictions(&[4], &map()).unwrap_err();
    assert!(matches!(err, Error::Core(ppseg_core::Error::Usage(_))));
}

#[test]
fn files_round_trip() {
    let dir = std::env::temp_dir().join(format!("ppseg-io-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cloud = PointCloud::new(vec![[1.5, -0.25, 3.0]; 3], vec![0.5; 3]).unwrap();
    let (scan, labels) = (dir.join("a.bin"), dir.join("a.label"));
    ppseg::io::write_scan(&scan, &cloud).unwrap();
    ppseg::io::write_predictions(&labels, &[0, 3, 2], &map()).unwrap();
    let back = ppseg::io::read_labeled_scan(&scan, Some(&labels), &map()).unwrap();
    assert_eq!(back.xyz, cloud.xyz);
    assert_eq!(back.label, Some(vec![0, 3, 2]));
    assert_eq!(back.raw_label, Some(vec![10, 40, 15]));
    std::fs::remove_dir_all(&dir).unwrap();
}

proptest! {
    #[test]
    fn predictions_round_trip(preds in proptest::collection::vec(0usize..4, 0..200)) {
        let m = map();
        let bytes = encode_predictions(&preds, &m).unwrap();
        let back = decode_labels(&bytes, &m, Some(preds.len()), "p").unwrap();
        prop_assert_eq!(back.train, preds);
        prop_assert!(back.instance.iter().all(|&i| i == 0));
    }

    #[test]
    fn scans_round_trip(vals in proptest::collection::vec(-1e4f32..1e4, 0..64)) {
        let n = vals.len() / 4;
        let bytes: Vec<u8> = vals[..n * 4].iter().flat_map(|v| v.to_le_bytes()).collect();
        let c = decode_scan(&bytes, "p").unwrap();
        prop_assert_eq!(c.len(), n);
        prop_assert_eq!(encode_scan(&c), bytes);
    }
}

#[test]
fn semantic_kitti_round_trip() {
    let m = LabelMap::semantic_kitti();
    let preds: Vec<usize> = (0..m.num_classes()).collect();
    let bytes = encode_predictions(&preds, &m).unwrap();
    assert_eq!(decode_labels(&bytes, &m, None, "k").unwrap().train, preds);
}

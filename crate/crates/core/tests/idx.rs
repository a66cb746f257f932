//! IDX ingestion against byte-for-byte fixtures.

use std::fs;
use std::path::{Path, PathBuf};

use weightscape::patterns::{encode_idx, load_idx, write_idx, GrayImage};
use weightscape::Error;

fn images_fixture(magic: u32, count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut v = Vec::new();
    for x in [magic, count, rows, cols] {
        v.extend_from_slice(&x.to_be_bytes());
    }
    v.extend_from_slice(pixels);
    v
}

fn labels_fixture(magic: u32, labels: &[u8]) -> Vec<u8> {
    let mut v = Vec::new();
    v.extend_from_slice(&magic.to_be_bytes());
    v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    v.extend_from_slice(labels);
    v
}

fn write_pair(dir: &Path, images: &[u8], labels: &[u8]) -> (PathBuf, PathBuf) {
    let (i, l) = (dir.join("images"), dir.join("labels"));
    fs::write(&i, images).unwrap();
    fs::write(&l, labels).unwrap();
    (i, l)
}

const PIXELS: [u8; 8] = [0, 255, 51, 204, 1, 2, 3, 254];

#[test]
fn fixture_values_are_reproduced_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = write_pair(
        dir.path(),
        &images_fixture(0x803, 2, 2, 2, &PIXELS),
        &labels_fixture(0x801, &[7, 3]),
    );
    let imgs = load_idx(&i, &l).unwrap();
    assert_eq!(imgs.len(), 2);
    assert_eq!(imgs[0].label(), 7);
    assert_eq!(imgs[1].label(), 3);
    let expected: Vec<f64> = PIXELS.iter().map(|&b| f64::from(b) / 255.0).collect();
    assert_eq!(imgs[0].pixels(), &expected[..4]);
    assert_eq!(imgs[1].pixels(), &expected[4..]);
}

#[test]
fn unknown_magic_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = write_pair(
        dir.path(),
        &images_fixture(0x804, 2, 2, 2, &PIXELS),
        &labels_fixture(0x801, &[7, 3]),
    );
    assert!(matches!(load_idx(&i, &l), Err(Error::Format(_))));
    let (i, l) = write_pair(
        dir.path(),
        &images_fixture(0x803, 2, 2, 2, &PIXELS),
        &labels_fixture(0x803, &[7, 3]),
    );
    assert!(matches!(load_idx(&i, &l), Err(Error::Format(_))));
}

#[test]
fn count_mismatch_is_a_consistency_error() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = write_pair(
        dir.path(),
        &images_fixture(0x803, 2, 2, 2, &PIXELS),
        &labels_fixture(0x801, &[7, 3, 1]),
    );
    assert!(matches!(load_idx(&i, &l), Err(Error::Consistency(_))));
}

#[test]
fn truncated_files_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (i, l) = write_pair(
        dir.path(),
        &images_fixture(0x803, 2, 2, 2, &PIXELS[..7]),
        &labels_fixture(0x801, &[7, 3]),
    );
    assert!(matches!(load_idx(&i, &l), Err(Error::Io { .. })));
    let (i, l) = write_pair(dir.path(), &[0, 0, 8], &labels_fixture(0x801, &[7, 3]));
    assert!(matches!(load_idx(&i, &l), Err(Error::Io { .. })));
}

#[test]
fn missing_file_names_the_path() {
    let err = load_idx("/no/such/images", "/no/such/labels").unwrap_err();
    assert!(err.to_string().contains("/no/such/images"), "{err}");
}

#[test]
fn written_pairs_reload_within_quantization() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = vec![
        GrayImage::new(vec![0.0, 0.5, 1.0, 0.2, 0.9, 0.33], 4).unwrap(),
        GrayImage::new(vec![1.0, 1.0, 0.0, 0.0, 0.7, 0.1], 9).unwrap(),
    ];
    let (i, l) = (dir.path().join("i"), dir.path().join("l"));
    write_idx(&imgs, 2, 3, &i, &l).unwrap();
    let back = load_idx(&i, &l).unwrap();
    for (a, b) in imgs.iter().zip(&back) {
        assert_eq!(a.label(), b.label());
        for (x, y) in a.pixels().iter().zip(b.pixels()) {
            assert!((x - y).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }
    let (img_bytes, lbl_bytes) = encode_idx(&back, 2, 3).unwrap();
    assert_eq!(img_bytes, fs::read(&i).unwrap());
    assert_eq!(lbl_bytes, fs::read(&l).unwrap());
    assert!(matches!(encode_idx(&imgs, 2, 2), Err(Error::DimensionMismatch { .. })));
}

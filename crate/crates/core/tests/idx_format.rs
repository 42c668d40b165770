use std::fs;
use std::path::Path;

use hope::data_io::{load_delimited, load_idx, preprocess, read_idx_images, PixelKind, Scheme};
use hope::HopeError;

/// Image file for `n` images of 2x3 pixels; pixel (i, r, c) = 10*i + 3*r + c.
fn image_bytes(n: u32) -> Vec<u8> {
    let mut b = vec![0x00, 0x00, 0x08, 0x03];
    b.extend_from_slice(&n.to_be_bytes());
    b.extend_from_slice(&[0, 0, 0, 2]);
    b.extend_from_slice(&[0, 0, 0, 3]);
    for i in 0..n as u8 {
        for r in 0..2u8 {
            for c in 0..3u8 {
                b.push(10 * i + 3 * r + c);
            }
        }
    }
    b
}

fn label_bytes(labels: &[u8]) -> Vec<u8> {
    let mut b = vec![0x00, 0x00, 0x08, 0x01];
    b.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    b.extend_from_slice(labels);
    b
}

fn write(dir: &Path, name: &str, bytes: &[u8]) -> std::path::PathBuf {
    let p = dir.join(name);
    fs::write(&p, bytes).unwrap();
    p
}

#[test]
fn reads_published_layout() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = write(dir.path(), "img", &image_bytes(3));
    let lbls = write(dir.path(), "lbl", &label_bytes(&[7, 2, 7]));
    let raw = load_idx(&imgs, &lbls).unwrap();
    assert_eq!(raw.kind, PixelKind::Byte);
    assert_eq!(raw.pixels.rows(), 3);
    assert_eq!(raw.pixels.cols(), 6);
    assert_eq!(raw.pixels.row(2), &[20.0, 21.0, 22.0, 23.0, 24.0, 25.0]);
    assert_eq!(raw.labels, vec![7, 2, 7]);

    let ds = preprocess(&raw, Scheme::Scale01, None).unwrap();
    assert_eq!(ds.input_dim(), 7);
    assert_eq!(ds.x().row(1)[..6], [10.0 / 255.0, 11.0 / 255.0, 12.0 / 255.0, 13.0 / 255.0, 14.0 / 255.0, 15.0 / 255.0]);
    assert_eq!(ds.x().get(0, 6), 1.0);
    assert_eq!(ds.labels(), &[2, 1, 2]);
    assert_eq!(ds.preprocessing().label_map, vec![2, 7]);
}

#[test]
fn rejects_wrong_magic() {
    let dir = tempfile::tempdir().unwrap();
    let lbls = write(dir.path(), "lbl", &label_bytes(&[1]));
    let err = read_idx_images(&lbls).unwrap_err();
    assert!(matches!(err, HopeError::BadMagic { expected: 0x803, found: 0x801, .. }));
}

#[test]
fn rejects_truncated_payload() {
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = image_bytes(2);
    bytes.pop();
    let imgs = write(dir.path(), "img", &bytes);
    let err = read_idx_images(&imgs).unwrap_err();
    assert!(matches!(err, HopeError::Truncated { needed: 28, found: 27, .. }));

    let short = write(dir.path(), "short", &[0, 0, 8]);
    assert!(matches!(read_idx_images(&short).unwrap_err(), HopeError::Truncated { .. }));
}

#[test]
fn rejects_count_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = write(dir.path(), "img", &image_bytes(2));
    let lbls = write(dir.path(), "lbl", &label_bytes(&[1, 2, 3]));
    let err = load_idx(&imgs, &lbls).unwrap_err();
    assert!(matches!(err, HopeError::CountMismatch { images: 2, labels: 3 }));
}

#[test]
fn delimited_text_accepts_commas_and_whitespace() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "d.txt", b"3, 0.5, -1.25\n\n1 2.0 4e-1\n");
    let raw = load_delimited(&p).unwrap();
    assert_eq!(raw.kind, PixelKind::Real);
    assert_eq!(raw.labels, vec![3, 1]);
    assert_eq!(raw.pixels.row(1), &[2.0, 0.4]);

    let bad = write(dir.path(), "bad.txt", b"1,2,3\n2,4\n");
    assert!(matches!(load_delimited(&bad).unwrap_err(), HopeError::Parse { line: 2, .. }));
}

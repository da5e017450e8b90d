use std::fs;
use std::path::{Path, PathBuf};

use image::{GrayImage, Luma, Rgb, RgbImage};
use rgflow::dataset::{
    decode_dataset, encode_dataset, load_dataset, load_idx, load_image_folder, save_dataset,
    Dataset, ImagePipeline, ValueRange,
};
use sha2::{Digest, Sha256};

fn golden() -> Dataset {
    Dataset::new(
        vec![vec![1.0, -1.0, 1.0, -1.0], vec![-1.0, -1.0, 1.0, 1.0]],
        2,
        ValueRange::Spin,
        "golden",
    )
    .unwrap()
}

#[test]
fn rgds_bytes_match_the_documented_layout() {
    let mut expected = b"RGDS".to_vec();
    for x in [1u32, 2, 2] {
        expected.extend_from_slice(&x.to_le_bytes());
    }
    expected.push(0);
    for x in [1.0f64, -1.0, 1.0, -1.0, -1.0, -1.0, 1.0, 1.0] {
        expected.extend_from_slice(&x.to_le_bytes());
    }
    expected.extend_from_slice(&6u32.to_le_bytes());
    expected.extend_from_slice(b"golden");
    let bytes = encode_dataset(&golden()).unwrap();
    assert_eq!(bytes, expected);
    let digest: String = Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect();
    assert_eq!(digest, "9628c81af8ec680c4fc20a0e2a56f79c39cd096f45d6633895cdb2080adbf993");
}

#[test]
fn rgds_round_trips_through_a_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.rgds");
    save_dataset(&golden(), &path).unwrap();
    assert_eq!(load_dataset(&path).unwrap(), golden());
    let real = Dataset::new(vec![vec![0.25, -0.5, 1.0, 0.0]], 2, ValueRange::Real, "").unwrap();
    assert_eq!(decode_dataset(&encode_dataset(&real).unwrap()).unwrap(), real);
    // a file written without the provenance trailer still loads
    let bytes = encode_dataset(&golden()).unwrap();
    let bare = decode_dataset(&bytes[..bytes.len() - 10]).unwrap();
    assert_eq!(bare.as_flat(), golden().as_flat());
    assert_eq!(bare.provenance(), "");
    assert!(load_dataset(&dir.path().join("missing.rgds")).is_err());
}

fn write_idx(dir: &Path, images: &[[u8; 4]], labels: &[u8]) -> (PathBuf, PathBuf) {
    let mut img = 0x0000_0803u32.to_be_bytes().to_vec();
    for x in [images.len() as u32, 2, 2] {
        img.extend_from_slice(&x.to_be_bytes());
    }
    for im in images {
        img.extend_from_slice(im);
    }
    let mut lab = 0x0000_0801u32.to_be_bytes().to_vec();
    lab.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    lab.extend_from_slice(labels);
    let (ip, lp) = (dir.join("img.idx"), dir.join("lab.idx"));
    fs::write(&ip, img).unwrap();
    fs::write(&lp, lab).unwrap();
    (ip, lp)
}

#[test]
fn hand_built_idx_file() {
    let dir = tempfile::tempdir().unwrap();
    let (ip, lp) = write_idx(dir.path(), &[[0, 255, 51, 204], [255, 255, 0, 0]], &[7, 3]);
    let ds = load_idx(&ip, Some(&lp)).unwrap();
    assert_eq!((ds.len(), ds.side()), (2, 2));
    let expected = [-1.0, 1.0, -0.6, 0.6, 1.0, 1.0, -1.0, -1.0];
    for (a, b) in ds.as_flat().iter().zip(expected) {
        assert!((a - b).abs() < 1e-12);
    }
    assert_eq!(ds.labels(), Some(&[7u8, 3][..]));
    assert_eq!(ds.range(), ValueRange::Real);

    let other = tempfile::tempdir().unwrap();
    let (ip2, short_labels) = write_idx(other.path(), &[[0; 4], [0; 4]], &[1]);
    assert!(load_idx(&ip2, Some(&short_labels)).is_err());
    let mut bad = fs::read(&ip).unwrap();
    bad[3] = 0x01;
    fs::write(dir.path().join("bad.idx"), &bad).unwrap();
    assert!(load_idx(&dir.path().join("bad.idx"), None).is_err());
    let good = fs::read(&ip).unwrap();
    fs::write(dir.path().join("cut.idx"), &good[..good.len() - 1]).unwrap();
    assert!(load_idx(&dir.path().join("cut.idx"), None).is_err());
}

#[test]
fn mnist_fixture_loads() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data/mnist");
    let train = load_idx(
        &dir.join("train-images-idx3-ubyte"),
        Some(&dir.join("train-labels-idx1-ubyte")),
    )
    .unwrap();
    assert_eq!((train.len(), train.side()), (2000, 28));
    assert!(train.labels().unwrap().iter().all(|&l| l < 10));
    assert!(train.as_flat().iter().all(|x| (-1.0..=1.0).contains(x)));
    let test = load_idx(&dir.join("t10k-images-idx3-ubyte"), None).unwrap();
    assert_eq!(test.len(), 500);
}

fn image_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let gray = GrayImage::from_fn(8, 8, |x, _| Luma([if x < 4 { 0 } else { 255 }]));
    gray.save(dir.path().join("a.png")).unwrap();
    let rgb = RgbImage::from_fn(16, 16, |_, _| Rgb([255, 0, 0]));
    rgb.save(dir.path().join("b.png")).unwrap();
    fs::write(dir.path().join("c.png"), b"not an image").unwrap();
    dir
}

#[test]
fn image_folder_pipeline() {
    let dir = image_dir();
    let pipe = ImagePipeline {
        target_side: 8,
        grayscale: true,
        tile: None,
    };
    let ingest = load_image_folder(dir.path(), pipe).unwrap();
    assert_eq!(ingest.images_loaded, 2);
    assert_eq!(ingest.skipped, vec![dir.path().join("c.png")]);
    let ds = &ingest.dataset;
    assert_eq!((ds.len(), ds.side()), (2, 8));
    // a.png is already 8x8: values map exactly to -1 / +1
    assert_eq!(ds.sample(0)[0], -1.0);
    assert_eq!(ds.sample(0)[7], 1.0);
    // pure red: luma 0.299 -> 2 * 0.299 - 1
    assert!(ds.sample(1).iter().all(|&x| (x - (2.0 * 0.299 - 1.0)).abs() < 1e-5));
    let again = load_image_folder(dir.path(), pipe).unwrap();
    assert_eq!(again.dataset, ingest.dataset);

    let tiled = load_image_folder(
        dir.path(),
        ImagePipeline {
            target_side: 4,
            grayscale: true,
            tile: Some(2),
        },
    )
    .unwrap();
    assert_eq!(tiled.dataset.len(), 8);
    // left tiles of a.png are black, right tiles white
    assert!(tiled.dataset.sample(0).iter().all(|&x| x == -1.0));
    assert!(tiled.dataset.sample(1).iter().all(|&x| x == 1.0));
}

#[test]
fn folder_without_images_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let pipe = ImagePipeline {
        target_side: 4,
        grayscale: true,
        tile: None,
    };
    assert!(load_image_folder(dir.path(), pipe).is_err());
    fs::write(dir.path().join("x.png"), b"junk").unwrap();
    assert!(load_image_folder(dir.path(), pipe).is_err());
}

#[test]
fn split_and_csv() {
    let ds = Dataset::new(
        (0..10).map(|i| vec![if i % 2 == 0 { 1.0 } else { -1.0 }; 4]).collect(),
        2,
        ValueRange::Spin,
        "toy",
    )
    .unwrap();
    let (train, hold) = ds.split(0.3, 5).unwrap();
    assert_eq!((train.len(), hold.len()), (7, 3));
    assert_eq!(ds.split(0.3, 5).unwrap(), (train.clone(), hold));
    assert!(train.provenance().contains("seed=5"));
    let mut buf = Vec::new();
    ds.write_csv(&mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().next(), Some("x0,x1,x2,x3"));
    assert_eq!(text.lines().count(), 11);
}

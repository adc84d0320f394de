use std::fs;
use std::path::Path;

use fat_core::face::{self, part_landmarks, FaceSample, ParsingMask, NUM_LANDMARKS};
use fat_core::io::{
    decode_pgm, encode_pgm, encode_ppm, format_landmarks, load_sample, make_corpus, parse_landmarks, read_landmarks,
    read_pgm, read_ppm, save_sample, write_ppm, Corpus, MANIFEST_NAME,
};
use fat_core::synth::{corpus_params, quantize, synth_face, Group};
use fat_core::{FatError, LandmarkSet};
use fat_tensor::Tensor;
use proptest::prelude::*;

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    files.sort();
    files
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn images_round_trip_bit_exactly((h, w, bytes) in (1usize..9, 1usize..9).prop_flat_map(|(h, w)| {
        (Just(h), Just(w), prop::collection::vec(any::<u8>(), 3 * h * w))
    })) {
        let levels: Vec<f64> = bytes.iter().map(|&b| b as f64 / 255.0).collect();
        let img = Tensor::new(&[3, h, w], levels).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("a.ppm");
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        prop_assert_eq!(back.data(), img.data());
        prop_assert_eq!(encode_ppm(&back).unwrap(), fs::read(&path).unwrap());
    }

    #[test]
    fn masks_round_trip(labels in prop::collection::vec(0u8..=face::MAX_LABEL, 12)) {
        let m = ParsingMask::new(3, 4, labels).unwrap();
        let back = decode_pgm(&encode_pgm(&m), "m").unwrap();
        prop_assert_eq!(back.labels(), m.labels());
    }

    #[test]
    fn landmark_text_round_trips(pts in prop::collection::vec((0.0f64..=1.0, 0.0f64..=1.0), NUM_LANDMARKS)) {
        let lm = LandmarkSet::new(pts.iter().map(|&(x, y)| [x, y]).collect()).unwrap();
        let back = parse_landmarks(&format_landmarks(&lm), "l").unwrap();
        for (a, b) in lm.points().iter().zip(back.points()) {
            prop_assert!((a[0] - b[0]).abs() <= 1e-6 && (a[1] - b[1]).abs() <= 1e-6);
        }
    }
}

#[test]
fn wrong_landmark_count_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.lm");
    let mut text = String::from("FATLM 1 29\n");
    for _ in 0..29 {
        text.push_str("0.5 0.5\n");
    }
    fs::write(&path, text).unwrap();
    let err = read_landmarks(&path).unwrap_err();
    assert!(matches!(err, FatError::Schema(_)), "{err:?}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn mask_with_label_nine_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("x.pgm");
    fs::write(&path, b"P5\n2 2\n255\n\x00\x01\x09\x02").unwrap();
    match read_pgm(&path) {
        Err(FatError::Format { offset, .. }) => assert_eq!(offset, 13),
        other => panic!("{other:?}"),
    }
}

#[test]
fn samples_resolve_their_siblings() {
    let sample = synth_face(&corpus_params(3, 32, 5).1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.ppm");
    save_sample(&path, &sample).unwrap();
    assert!(dir.path().join("s.lm").exists() && dir.path().join("s.pgm").exists());
    let back = load_sample(&path).unwrap();
    let q: Vec<f64> = sample.image.data().iter().map(|&v| quantize(v)).collect();
    assert_eq!(back.image.data(), &q[..]);
    assert_eq!(back.mask.labels(), sample.mask.labels());
    fs::remove_file(dir.path().join("s.pgm")).unwrap();
    assert!(matches!(load_sample(&path), Err(FatError::Io { .. })));
}

#[test]
fn corpus_layout_and_balance() {
    for count in [10, 7] {
        let dir = tempfile::tempdir().unwrap();
        let manifest = make_corpus(dir.path(), count, 32, 1).unwrap();
        assert_eq!(manifest, dir.path().join(MANIFEST_NAME));
        assert_eq!(fs::read_to_string(&manifest).unwrap().lines().count(), count);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 3 * count + 1);
        let corpus = Corpus::open(dir.path()).unwrap();
        let plain = corpus.entries.iter().filter(|e| e.group == Group::Plain).count();
        assert!((2 * plain as isize - count as isize).abs() <= 1);
        for e in &corpus.entries {
            corpus.load(e).unwrap();
        }
        assert_eq!(corpus.pairs().unwrap().len(), count / 2);
    }
    assert!(make_corpus(tempfile::tempdir().unwrap().path(), 1, 32, 0).is_err());
}

#[test]
fn corpus_regeneration_is_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    make_corpus(a.path(), 6, 32, 9).unwrap();
    make_corpus(b.path(), 6, 32, 9).unwrap();
    assert_eq!(dir_bytes(a.path()), dir_bytes(b.path()));
    let c = tempfile::tempdir().unwrap();
    make_corpus(c.path(), 6, 32, 10).unwrap();
    assert_ne!(dir_bytes(a.path()), dir_bytes(c.path()));
}

#[test]
fn unwritable_corpus_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("plain-file");
    fs::write(&file, b"x").unwrap();
    let err = make_corpus(file.join("sub"), 4, 32, 0).unwrap_err();
    assert!(matches!(err, FatError::Io { .. }), "{err:?}");
    assert_eq!(err.exit_code(), 2);
}

/// Every part landmark lies on its part or within one pixel of it.
fn landmarks_touch_their_parts(s: &FaceSample) -> bool {
    let (h, w) = (s.height(), s.width());
    [
        face::LEFT_BROW,
        face::RIGHT_BROW,
        face::LEFT_EYE,
        face::RIGHT_EYE,
        face::LIPS,
    ]
    .iter()
    .all(|&label| {
        s.landmarks.points()[part_landmarks(label).unwrap()].iter().all(|p| {
            let (ci, cj) = (
                (p[1] * h as f64 - 0.5).round() as isize,
                (p[0] * w as f64 - 0.5).round() as isize,
            );
            (ci - 1..=ci + 1).any(|i| {
                (cj - 1..=cj + 1).any(|j| {
                    (0..h as isize).contains(&i)
                        && (0..w as isize).contains(&j)
                        && s.mask.get(i as usize, j as usize) == label
                })
            })
        })
    })
}

#[test]
fn landmarks_and_masks_agree() {
    for i in 0..24 {
        for size in [32, 64] {
            let s = synth_face(&corpus_params(i, size, 77).1).unwrap();
            assert!(landmarks_touch_their_parts(&s), "sample {i} at {size}");
        }
    }
}

#[test]
fn makeup_lips_are_more_saturated() {
    let chroma = |g: Group| {
        let v: Vec<f64> = (0..40)
            .map(|i| corpus_params(i, 32, 4))
            .filter(|(grp, _)| *grp == g)
            .map(|(_, p)| p.lip.iter().fold(0.0f64, |m, &c| m.max(c)) - p.lip.iter().fold(1.0f64, |m, &c| m.min(c)))
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    assert!(chroma(Group::Makeup) > chroma(Group::Plain));
}

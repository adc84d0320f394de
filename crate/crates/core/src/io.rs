//! On-disk formats: binary PPM images, binary PGM label masks, `FATLM`
//! landmark text, and the corpus manifest.
//!
//! `X.ppm` implies siblings `X.lm` and `X.pgm`.

use std::fs;
use std::path::{Path, PathBuf};

use fat_tensor::Tensor;

use crate::error::{FatError, Result};
use crate::face::{FaceSample, LandmarkSet, ParsingMask, MAX_LABEL, NUM_LANDMARKS};
use crate::synth::{self, Group};
use crate::tps::Point;

fn format_err(origin: &str, offset: usize, msg: impl Into<String>) -> FatError {
    FatError::Format {
        path: origin.to_string(),
        offset: offset as u64,
        msg: msg.into(),
    }
}

/// Netpbm header reader: magic, then whitespace-separated decimal fields,
/// `#` comments allowed, one whitespace byte before the raster.
struct Header<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a str,
}

impl<'a> Header<'a> {
    fn skip_space(&mut self) {
        while self.pos < self.bytes.len() {
            match self.bytes[self.pos] {
                b'#' => {
                    while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
                        self.pos += 1;
                    }
                }
                c if c.is_ascii_whitespace() => self.pos += 1,
                _ => break,
            }
        }
    }

    fn number(&mut self, what: &str) -> Result<usize> {
        self.skip_space();
        let start = self.pos;
        while self.pos < self.bytes.len() && self.bytes[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        std::str::from_utf8(&self.bytes[start..self.pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| format_err(self.origin, start, format!("expected {what}")))
    }

    fn parse(bytes: &'a [u8], magic: &[u8; 2], origin: &'a str) -> Result<(usize, usize, &'a [u8])> {
        if bytes.len() < 2 || &bytes[..2] != magic {
            return Err(format_err(
                origin,
                0,
                format!("bad magic, expected {}", String::from_utf8_lossy(magic)),
            ));
        }
        let mut h = Header { bytes, pos: 2, origin };
        let width = h.number("width")?;
        let height = h.number("height")?;
        let maxval_at = h.pos;
        let maxval = h.number("maxval")?;
        if maxval != 255 {
            return Err(format_err(
                origin,
                maxval_at,
                format!("maxval must be 255, got {maxval}"),
            ));
        }
        if width == 0 || height == 0 {
            return Err(format_err(origin, 2, "zero image extent"));
        }
        match bytes.get(h.pos) {
            Some(c) if c.is_ascii_whitespace() => h.pos += 1,
            _ => return Err(format_err(origin, h.pos, "missing whitespace before raster")),
        }
        Ok((width, height, &bytes[h.pos..]))
    }
}

/// `3×H×W` image in `[0, 1]` as binary PPM bytes (values rounded to 8 bits).
pub fn encode_ppm(image: &Tensor) -> Result<Vec<u8>> {
    let s = image.shape();
    if s.len() != 3 || s[0] != 3 {
        return Err(FatError::param("write_ppm", format!("image must be 3×H×W, got {s:?}")));
    }
    let (h, w) = (s[1], s[2]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let d = image.data();
    out.reserve(3 * h * w);
    for p in 0..h * w {
        for c in 0..3 {
            out.push((d[c * h * w + p].clamp(0.0, 1.0) * 255.0).round() as u8);
        }
    }
    Ok(out)
}

pub fn decode_ppm(bytes: &[u8], origin: &str) -> Result<Tensor> {
    let (w, h, raster) = Header::parse(bytes, b"P6", origin)?;
    if raster.len() != 3 * w * h {
        return Err(format_err(
            origin,
            bytes.len() - raster.len(),
            format!("raster holds {} bytes, expected {}", raster.len(), 3 * w * h),
        ));
    }
    let mut data = vec![0.0; 3 * h * w];
    for (p, px) in raster.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + p] = px[c] as f64 / 255.0;
        }
    }
    Ok(Tensor::new(&[3, h, w], data)?)
}

pub fn encode_pgm(mask: &ParsingMask) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", mask.width(), mask.height()).into_bytes();
    out.extend_from_slice(mask.labels());
    out
}

pub fn decode_pgm(bytes: &[u8], origin: &str) -> Result<ParsingMask> {
    let (w, h, raster) = Header::parse(bytes, b"P5", origin)?;
    let base = bytes.len() - raster.len();
    if raster.len() != w * h {
        return Err(format_err(
            origin,
            base,
            format!("raster holds {} bytes, expected {}", raster.len(), w * h),
        ));
    }
    if let Some(i) = raster.iter().position(|&l| l > MAX_LABEL) {
        return Err(format_err(origin, base + i, format!("undefined label {}", raster[i])));
    }
    ParsingMask::new(h, w, raster.to_vec())
}

pub fn format_landmarks(lm: &LandmarkSet) -> String {
    let mut s = format!("FATLM 1 {}\n", lm.len());
    for p in lm.points() {
        s.push_str(&format!("{:.9} {:.9}\n", p[0], p[1]));
    }
    s
}

/// Parses `FATLM` text; the point count must be the schema's 30.
pub fn parse_landmarks(text: &str, origin: &str) -> Result<LandmarkSet> {
    let mut lines = text.lines();
    let header = lines.next().unwrap_or("");
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.len() != 3 || fields[0] != "FATLM" || fields[1] != "1" {
        return Err(format_err(origin, 0, "expected header \"FATLM 1 <N>\""));
    }
    let n: usize = fields[2]
        .parse()
        .map_err(|_| format_err(origin, header.find(fields[2]).unwrap_or(0), "bad point count"))?;
    if n != NUM_LANDMARKS {
        return Err(FatError::Schema(format!(
            "{origin}: {n} landmarks, schema requires {NUM_LANDMARKS}"
        )));
    }
    let mut offset = header.len() + 1;
    let mut points: Vec<Point> = Vec::with_capacity(n);
    for line in lines {
        let t = line.trim();
        if !t.is_empty() {
            let v: Vec<f64> = t
                .split_whitespace()
                .map(str::parse)
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| format_err(origin, offset, format!("bad coordinate line {t:?}")))?;
            if v.len() != 2 || !v.iter().all(|c| (0.0..=1.0).contains(c)) {
                return Err(format_err(
                    origin,
                    offset,
                    format!("expected \"x y\" in [0, 1], got {t:?}"),
                ));
            }
            points.push([v[0], v[1]]);
        }
        offset += line.len() + 1;
    }
    if points.len() != n {
        return Err(FatError::Schema(format!(
            "{origin}: header declares {n} landmarks, file holds {}",
            points.len()
        )));
    }
    LandmarkSet::new(points)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| FatError::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| FatError::io(path, e))
}

pub fn read_ppm(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    decode_ppm(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_ppm(path: impl AsRef<Path>, image: &Tensor) -> Result<()> {
    write_bytes(path.as_ref(), &encode_ppm(image)?)
}

pub fn read_pgm(path: impl AsRef<Path>) -> Result<ParsingMask> {
    let path = path.as_ref();
    decode_pgm(&read_bytes(path)?, &path.display().to_string())
}

pub fn write_pgm(path: impl AsRef<Path>, mask: &ParsingMask) -> Result<()> {
    write_bytes(path.as_ref(), &encode_pgm(mask))
}

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<LandmarkSet> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| FatError::io(path, e))?;
    parse_landmarks(&text, &path.display().to_string())
}

pub fn write_landmarks(path: impl AsRef<Path>, lm: &LandmarkSet) -> Result<()> {
    write_bytes(path.as_ref(), format_landmarks(lm).as_bytes())
}

/// `(X.ppm, X.lm, X.pgm)` for an image path `X.ppm`.
pub fn sibling_paths(image: impl AsRef<Path>) -> (PathBuf, PathBuf, PathBuf) {
    let image = image.as_ref().to_path_buf();
    (image.clone(), image.with_extension("lm"), image.with_extension("pgm"))
}

/// Loads a face from its image path and the sibling landmark and mask files.
pub fn load_sample(image: impl AsRef<Path>) -> Result<FaceSample> {
    let (img, lm, mask) = sibling_paths(image);
    let image = read_ppm(&img)?;
    let landmarks = read_landmarks(&lm)?;
    let mask = read_pgm(&mask)?;
    if image.shape()[1..] != [mask.height(), mask.width()] {
        return Err(FatError::Schema(format!(
            "{}: image {:?} and mask {}×{} disagree",
            img.display(),
            &image.shape()[1..],
            mask.height(),
            mask.width()
        )));
    }
    FaceSample::new(image, landmarks, mask)
}

/// Writes the triple next to `image` (which should end in `.ppm`).
pub fn save_sample(image: impl AsRef<Path>, sample: &FaceSample) -> Result<()> {
    let (img, lm, mask) = sibling_paths(image);
    write_ppm(img, &sample.image)?;
    write_landmarks(lm, &sample.landmarks)?;
    write_pgm(mask, &sample.mask)
}

/// One manifest line: `id group image landmarks mask`, paths relative to
/// the manifest's directory.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub group: Group,
    pub image: String,
    pub landmarks: String,
    pub mask: String,
}

pub const MANIFEST_NAME: &str = "manifest.txt";

pub fn format_manifest(entries: &[ManifestEntry]) -> String {
    entries
        .iter()
        .map(|e| format!("{} {} {} {} {}\n", e.id, e.group, e.image, e.landmarks, e.mask))
        .collect()
}

pub fn parse_manifest(text: &str, origin: &str) -> Result<Vec<ManifestEntry>> {
    let mut offset = 0;
    let mut out = Vec::new();
    for line in text.lines() {
        let f: Vec<&str> = line.split_whitespace().collect();
        if !f.is_empty() {
            if f.len() != 5 {
                return Err(format_err(origin, offset, "expected `id group image landmarks mask`"));
            }
            let group = f[1]
                .parse()
                .map_err(|_| format_err(origin, offset, format!("unknown group {:?}", f[1])))?;
            out.push(ManifestEntry {
                id: f[0].into(),
                group,
                image: f[2].into(),
                landmarks: f[3].into(),
                mask: f[4].into(),
            });
        }
        offset += line.len() + 1;
    }
    Ok(out)
}

/// A corpus directory: its manifest entries and the directory they are
/// relative to.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub dir: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Corpus {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST_NAME);
        let text = fs::read_to_string(&path).map_err(|e| FatError::io(&path, e))?;
        let entries = parse_manifest(&text, &path.display().to_string())?;
        Ok(Corpus { dir, entries })
    }

    pub fn load(&self, entry: &ManifestEntry) -> Result<FaceSample> {
        let image = read_ppm(self.dir.join(&entry.image))?;
        let landmarks = read_landmarks(self.dir.join(&entry.landmarks))?;
        let mask = read_pgm(self.dir.join(&entry.mask))?;
        FaceSample::new(image, landmarks, mask)
    }

    /// Pairs the i-th plain face with the i-th makeup face.
    pub fn pairs(&self) -> Result<Vec<(FaceSample, FaceSample)>> {
        let of = |g: Group| self.entries.iter().filter(move |e| e.group == g);
        of(Group::Plain)
            .zip(of(Group::Makeup))
            .map(|(p, m)| Ok((self.load(p)?, self.load(m)?)))
            .collect()
    }
}

/// Renders `count` faces into `dir` and writes the manifest; returns the
/// manifest path. Groups alternate so their sizes differ by at most one.
pub fn make_corpus(dir: impl AsRef<Path>, count: usize, size: usize, seed: u64) -> Result<PathBuf> {
    use rayon::prelude::*;
    if count < 2 {
        return Err(FatError::param(
            "make_corpus",
            format!("count must be at least 2, got {count}"),
        ));
    }
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| FatError::io(dir, e))?;
    let entries = (0..count)
        .into_par_iter()
        .map(|i| {
            let (group, params) = synth::corpus_params(i, size, seed);
            let sample = synth::synth_face(&params)?;
            let id = format!("face{i:05}");
            save_sample(dir.join(format!("{id}.ppm")), &sample)?;
            Ok(ManifestEntry {
                image: format!("{id}.ppm"),
                landmarks: format!("{id}.lm"),
                mask: format!("{id}.pgm"),
                id,
                group,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let path = dir.join(MANIFEST_NAME);
    write_bytes(&path, format_manifest(&entries).as_bytes())?;
    Ok(path)
}

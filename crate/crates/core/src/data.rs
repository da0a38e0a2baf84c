//! Dataset ingestion: IDX parsing, class filtering, 4×4 block-mean
//! downsampling and the synthetic Gaussian-blob fallback.

use std::f64::consts::PI;
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::arch::DATA_FEATURES;
use crate::graph::EVAL_CAP;

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;
const SIDE: usize = 4;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("IDX format error: {0}")]
    Format(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown dataset {0:?} (expected mnist2, mnist4, fashion2, fashion4, synth2 or synth4)")]
    UnknownDataset(String),
    #[error("{0}")]
    Mismatch(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

/// Samples of 16 features in `[0, π]` with densely remapped labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Vec<[f64; DATA_FEATURES]>,
    labels: Vec<usize>,
    n_classes: usize,
    split: Split,
}

impl Dataset {
    pub fn new(
        features: Vec<[f64; DATA_FEATURES]>,
        labels: Vec<usize>,
        n_classes: usize,
        split: Split,
    ) -> Result<Self, DataError> {
        if features.len() != labels.len() {
            return Err(DataError::Mismatch(format!(
                "{} feature rows vs {} labels",
                features.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(DataError::Mismatch(format!("label {bad} with {n_classes} classes")));
        }
        Ok(Dataset {
            features,
            labels,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self, i: usize) -> &[f64] {
        &self.features[i]
    }

    pub fn label(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn split(&self) -> Split {
        self.split
    }

    /// The first `n` samples.
    pub fn take(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            features: self.features[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            n_classes: self.n_classes,
            split: self.split,
        }
    }
}

/// Decoded IDX payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Idx {
    Labels(Vec<u8>),
    Images { rows: usize, cols: usize, pixels: Vec<Vec<u8>> },
}

/// Parses an IDX container (gzip-compressed input is detected and inflated).
pub fn parse_idx(bytes: &[u8]) -> Result<Idx, DataError> {
    if bytes.starts_with(&[0x1f, 0x8b]) {
        let mut raw = Vec::new();
        GzDecoder::new(bytes)
            .read_to_end(&mut raw)
            .map_err(|e| DataError::Format(format!("gzip: {e}")))?;
        return parse_idx(&raw);
    }
    let word = |i: usize| -> Result<usize, DataError> {
        bytes
            .get(4 * i..4 * i + 4)
            .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]) as usize)
            .ok_or_else(|| DataError::Format("truncated header".into()))
    };
    let magic = word(0)? as u32;
    match magic {
        LABEL_MAGIC => {
            let n = word(1)?;
            let payload = &bytes[8..];
            if payload.len() < n {
                return Err(DataError::Format(format!(
                    "expected {n} labels, found {} bytes",
                    payload.len()
                )));
            }
            Ok(Idx::Labels(payload[..n].to_vec()))
        }
        IMAGE_MAGIC => {
            let (n, rows, cols) = (word(1)?, word(2)?, word(3)?);
            let size = rows * cols;
            let payload = &bytes[16..];
            if payload.len() < n * size {
                return Err(DataError::Format(format!(
                    "expected {n} images of {rows}x{cols}, found {} bytes",
                    payload.len()
                )));
            }
            let pixels = payload[..n * size].chunks(size.max(1)).take(n).map(<[u8]>::to_vec).collect();
            Ok(Idx::Images { rows, cols, pixels })
        }
        other => Err(DataError::Format(format!("bad magic 0x{other:08x}"))),
    }
}

/// Block-mean downsampling to 4×4, then linear scaling of `[0, 255]` to `[0, π]`.
/// Row-major output: feature `4·r + c` is block row `r`, column `c`.
pub fn downsample(pixels: &[u8], rows: usize, cols: usize) -> Result<[f64; DATA_FEATURES], DataError> {
    if rows % SIDE != 0 || cols % SIDE != 0 || pixels.len() != rows * cols {
        return Err(DataError::Format(format!("cannot block-downsample {rows}x{cols} to 4x4")));
    }
    let (bh, bw) = (rows / SIDE, cols / SIDE);
    let mut out = [0.0; DATA_FEATURES];
    for (r, row) in pixels.chunks(cols).enumerate() {
        for (c, &p) in row.iter().enumerate() {
            out[(r / bh) * SIDE + c / bw] += f64::from(p);
        }
    }
    let scale = PI / (255.0 * (bh * bw) as f64);
    for v in &mut out {
        *v *= scale;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist2,
    Mnist4,
    Fashion2,
    Fashion4,
    Synth2,
    Synth4,
}

impl DatasetName {
    /// Original labels kept, in ascending order; position is the new label.
    pub fn classes(self) -> &'static [u8] {
        match self {
            DatasetName::Mnist2 | DatasetName::Fashion2 => &[3, 6],
            DatasetName::Mnist4 | DatasetName::Fashion4 => &[0, 3, 6, 9],
            DatasetName::Synth2 => &[0, 1],
            DatasetName::Synth4 => &[0, 1, 2, 3],
        }
    }

    pub fn n_classes(self) -> usize {
        self.classes().len()
    }

    fn subdir(self) -> Option<&'static str> {
        match self {
            DatasetName::Mnist2 | DatasetName::Mnist4 => Some("mnist"),
            DatasetName::Fashion2 | DatasetName::Fashion4 => Some("fashion"),
            DatasetName::Synth2 | DatasetName::Synth4 => None,
        }
    }

    pub fn is_synthetic(self) -> bool {
        self.subdir().is_none()
    }
}

impl FromStr for DatasetName {
    type Err = DataError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| DataError::UnknownDataset(s.to_string()))
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = serde_json::to_value(self).expect("name serializes");
        f.write_str(s.as_str().expect("string"))
    }
}

fn read_idx_file(dir: &Path, stem: &str) -> Result<Idx, DataError> {
    let plain = dir.join(stem);
    let gz = dir.join(format!("{stem}.gz"));
    let path = if plain.exists() { plain } else { gz };
    let bytes = std::fs::read(&path).map_err(|source| DataError::Io { path: path.clone(), source })?;
    parse_idx(&bytes).map_err(|e| DataError::Format(format!("{}: {e}", path.display())))
}

fn load_split(dir: &Path, prefix: &str, classes: &[u8], split: Split) -> Result<Dataset, DataError> {
    let images = read_idx_file(dir, &format!("{prefix}-images-idx3-ubyte"))?;
    let labels = read_idx_file(dir, &format!("{prefix}-labels-idx1-ubyte"))?;
    let (Idx::Images { rows, cols, pixels }, Idx::Labels(labels)) = (images, labels) else {
        return Err(DataError::Format(format!("{prefix}: image/label files swapped")));
    };
    if pixels.len() != labels.len() {
        return Err(DataError::Mismatch(format!(
            "{prefix}: {} images vs {} labels",
            pixels.len(),
            labels.len()
        )));
    }
    let mut features = Vec::new();
    let mut remapped = Vec::new();
    for (img, label) in pixels.iter().zip(&labels) {
        if let Some(pos) = classes.iter().position(|c| c == label) {
            features.push(downsample(img, rows, cols)?);
            remapped.push(pos);
        }
    }
    Dataset::new(features, remapped, classes.len(), split)
}

/// Sizes of the synthetic splits.
pub const SYNTH_TRAIN: usize = 512;
pub const SYNTH_TEST: usize = EVAL_CAP;

fn synthetic(n_classes: usize, seed: u64) -> (Dataset, Dataset) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers: Vec<[f64; DATA_FEATURES]> = (0..n_classes)
        .map(|_| std::array::from_fn(|_| rng.random_range(0.6..PI - 0.6)))
        .collect();
    let noise = Normal::new(0.0, 0.35).expect("valid normal");
    let mut draw = |n: usize, split: Split| {
        let mut features = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = i % n_classes;
            let center = &centers[class];
            features.push(std::array::from_fn(|k| (center[k] + noise.sample(&mut rng)).clamp(0.0, PI)));
            labels.push(class);
        }
        Dataset::new(features, labels, n_classes, split).expect("consistent synthetic data")
    };
    let train = draw(SYNTH_TRAIN, Split::Train);
    let test = draw(SYNTH_TEST, Split::Test);
    (train, test)
}

/// Loads (or generates) a dataset. Image datasets read
/// `<data_dir>/{mnist,fashion}/{train,t10k}-{images-idx3,labels-idx1}-ubyte[.gz]`.
/// The test split is capped at its first 300 samples.
pub fn prepare(name: DatasetName, data_dir: &Path, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = match name.subdir() {
        None => synthetic(name.n_classes(), seed),
        Some(sub) => {
            let dir = data_dir.join(sub);
            let classes = name.classes();
            (
                load_split(&dir, "train", classes, Split::Train)?,
                load_split(&dir, "t10k", classes, Split::Test)?,
            )
        }
    };
    Ok((train, test.take(EVAL_CAP)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image_file(n: usize, rows: usize, cols: usize, fill: impl Fn(usize) -> u8) -> Vec<u8> {
        let mut b = Vec::new();
        for w in [IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
            b.extend_from_slice(&w.to_be_bytes());
        }
        b.extend((0..n * rows * cols).map(fill));
        b
    }

    #[test]
    fn labels_file() {
        let bytes = [0, 0, 8, 1, 0, 0, 0, 2, 3, 6];
        assert_eq!(parse_idx(&bytes).unwrap(), Idx::Labels(vec![3, 6]));
    }

    #[test]
    fn image_file_parses() {
        let bytes = image_file(1, 28, 28, |i| (i % 256) as u8);
        match parse_idx(&bytes).unwrap() {
            Idx::Images { rows, cols, pixels } => {
                assert_eq!((rows, cols, pixels.len()), (28, 28, 1));
                assert_eq!(pixels[0].len(), 784);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn truncated_and_bad_magic() {
        let mut bytes = image_file(2, 28, 28, |_| 1);
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(parse_idx(&bytes), Err(DataError::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 8, 1, 0, 0, 0, 3, 1]), Err(DataError::Format(_))));
        assert!(matches!(parse_idx(&[0, 0, 8, 2, 0, 0, 0, 0]), Err(DataError::Format(_))));
        assert!(matches!(parse_idx(&[0, 0]), Err(DataError::Format(_))));
    }

    #[test]
    fn gzip_is_transparent() {
        use flate2::write::GzEncoder;
        use std::io::Write;
        let raw = [0, 0, 8, 1, 0, 0, 0, 2, 3, 6];
        let mut enc = GzEncoder::new(Vec::new(), flate2::Compression::default());
        enc.write_all(&raw).unwrap();
        assert_eq!(parse_idx(&enc.finish().unwrap()).unwrap(), Idx::Labels(vec![3, 6]));
    }

    #[test]
    fn downsample_endpoints() {
        assert_eq!(downsample(&[0; 784], 28, 28).unwrap(), [0.0; 16]);
        let full = downsample(&[255; 784], 28, 28).unwrap();
        assert!(full.iter().all(|v| (v - PI).abs() < 1e-9));
    }

    #[test]
    fn downsample_preserves_mean() {
        let img: Vec<u8> = (0..784).map(|i| ((i * 37) % 256) as u8).collect();
        let small = downsample(&img, 28, 28).unwrap();
        let big_mean = img.iter().map(|&p| f64::from(p)).sum::<f64>() / 784.0 * PI / 255.0;
        let small_mean = small.iter().sum::<f64>() / 16.0;
        assert!((big_mean - small_mean).abs() < 1e-9);
    }

    #[test]
    fn block_layout_is_row_major() {
        // Only the top-right 7x7 block is lit.
        let img: Vec<u8> = (0..784).map(|i| if i / 28 < 7 && i % 28 >= 21 { 255 } else { 0 }).collect();
        let f = downsample(&img, 28, 28).unwrap();
        assert!((f[3] - PI).abs() < 1e-12);
        assert_eq!(f.iter().filter(|v| **v > 0.0).count(), 1);
    }

    #[test]
    fn filtering_keeps_order_and_remaps() {
        let dir = std::env::temp_dir().join(format!("qumos-data-{}", std::process::id()));
        let sub = dir.join("mnist");
        std::fs::create_dir_all(&sub).unwrap();
        let labels: Vec<u8> = vec![3, 1, 6, 6, 3, 9];
        for prefix in ["train", "t10k"] {
            let imgs = image_file(labels.len(), 28, 28, |i| (i / 784 * 40) as u8);
            std::fs::write(sub.join(format!("{prefix}-images-idx3-ubyte")), imgs).unwrap();
            let mut lb = vec![0, 0, 8, 1, 0, 0, 0, labels.len() as u8];
            lb.extend(&labels);
            std::fs::write(sub.join(format!("{prefix}-labels-idx1-ubyte")), lb).unwrap();
        }
        let (train, test) = prepare(DatasetName::Mnist2, &dir, 0).unwrap();
        assert_eq!(train.labels(), &[0, 1, 1, 0]);
        // Image k is filled with 40·k; kept images are 0, 2, 3, 4.
        let firsts: Vec<f64> = (0..4).map(|i| train.features(i)[0] * 255.0 / PI).collect();
        for (got, want) in firsts.iter().zip([0.0, 80.0, 120.0, 160.0]) {
            assert!((got - want).abs() < 1e-9);
        }
        assert_eq!(test.len(), 4);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn missing_files_are_io_errors() {
        let err = prepare(DatasetName::Fashion4, Path::new("/nonexistent"), 0).unwrap_err();
        assert!(matches!(err, DataError::Io { .. }));
    }

    #[test]
    fn synthetic_is_seeded_and_bounded() {
        let (a, t) = prepare(DatasetName::Synth4, Path::new(""), 5).unwrap();
        let (b, _) = prepare(DatasetName::Synth4, Path::new(""), 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(t.len(), 300);
        assert_eq!(a.n_classes(), 4);
        assert!((0..a.len()).all(|i| a.features(i).iter().all(|v| (0.0..=PI).contains(v))));
    }

    #[test]
    fn names() {
        assert_eq!("mnist2".parse::<DatasetName>().unwrap(), DatasetName::Mnist2);
        assert_eq!(DatasetName::Fashion4.to_string(), "fashion4");
        assert!("cifar".parse::<DatasetName>().is_err());
    }
}

//! Pattern data: MNIST IDX ingestion, binarization to bipolar patterns,
//! Hamming arithmetic and exhaustive enumeration of small pattern spaces.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// Largest dimension accepted by [`enumerate_space`].
pub const MAX_ENUMERABLE_DIM: usize = 20;

/// Default binarization threshold (midpoint of the intensity range).
pub const DEFAULT_THRESHOLD: f64 = 0.5;

/// A grayscale image with intensities in `[0, 1]` and a class label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrayImage {
    pixels: Vec<f64>,
    label: u8,
}

impl GrayImage {
    pub fn new(pixels: Vec<f64>, label: u8) -> Result<Self> {
        if let Some((i, v)) = pixels
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidArgument(format!(
                "pixel {i} has intensity {v}, outside [0, 1]"
            )));
        }
        Ok(Self { pixels, label })
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn len(&self) -> usize {
        self.pixels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pixels.is_empty()
    }
}

/// A vector of ±1 values: a Hopfield state or stored pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "Vec<i8>", into = "Vec<i8>")]
pub struct BipolarPattern(Vec<i8>);

impl TryFrom<Vec<i8>> for BipolarPattern {
    type Error = Error;

    fn try_from(bits: Vec<i8>) -> Result<Self> {
        Self::new(bits)
    }
}

impl From<BipolarPattern> for Vec<i8> {
    fn from(p: BipolarPattern) -> Self {
        p.0
    }
}

impl BipolarPattern {
    pub fn new(bits: Vec<i8>) -> Result<Self> {
        if let Some((i, b)) = bits.iter().enumerate().find(|(_, b)| **b != 1 && **b != -1) {
            return Err(Error::InvalidArgument(format!(
                "bit {i} is {b}; bipolar patterns hold only -1 or +1"
            )));
        }
        Ok(Self(bits))
    }

    /// Maps `true` to +1 and `false` to −1.
    pub fn from_bools(bits: impl IntoIterator<Item = bool>) -> Self {
        Self(bits.into_iter().map(|b| if b { 1 } else { -1 }).collect())
    }

    pub fn filled(n: usize, value: i8) -> Result<Self> {
        Self::new(vec![value; n])
    }

    pub fn random(n: usize, rng: &mut impl rand::Rng) -> Self {
        Self::from_bools((0..n).map(|_| rng.gen::<bool>()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bits(&self) -> &[i8] {
        &self.0
    }

    pub fn get(&self, i: usize) -> i8 {
        self.0[i]
    }

    /// The pattern as a real vector (network input).
    pub fn to_f64(&self) -> Vec<f64> {
        self.0.iter().map(|&b| f64::from(b)).collect()
    }

    pub fn negated(&self) -> Self {
        Self(self.0.iter().map(|b| -b).collect())
    }

    pub(crate) fn flip_in_place(&mut self, i: usize) {
        self.0[i] = -self.0[i];
    }

    pub(crate) fn set(&mut self, i: usize, v: i8) {
        debug_assert!(v == 1 || v == -1);
        self.0[i] = v;
    }

    /// Reorders positions: result[i] = self[perm[i]].
    pub fn permuted(&self, perm: &[usize]) -> Result<Self> {
        check_dim(self.len(), perm.len())?;
        Ok(Self(perm.iter().map(|&j| self.0[j]).collect()))
    }

    pub fn hamming(&self, other: &Self) -> Result<usize> {
        hamming(self, other)
    }
}

/// An ordered set of equal-length patterns with optional class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatternSet {
    patterns: Vec<BipolarPattern>,
    labels: Option<Vec<u8>>,
}

impl PatternSet {
    pub fn new(patterns: Vec<BipolarPattern>) -> Result<Self> {
        let first = patterns.first().ok_or(Error::EmptyPatternSet)?;
        let n = first.len();
        for p in &patterns {
            check_dim(n, p.len())?;
        }
        Ok(Self {
            patterns,
            labels: None,
        })
    }

    pub fn labeled(patterns: Vec<BipolarPattern>, labels: Vec<u8>) -> Result<Self> {
        let mut set = Self::new(patterns)?;
        if labels.len() != set.patterns.len() {
            return Err(Error::Consistency(format!(
                "{} patterns but {} labels",
                set.patterns.len(),
                labels.len()
            )));
        }
        set.labels = Some(labels);
        Ok(set)
    }

    /// `count` independent uniformly random patterns of dimension `n`.
    pub fn random(n: usize, count: usize, rng: &mut impl rand::Rng) -> Result<Self> {
        Self::new((0..count).map(|_| BipolarPattern::random(n, rng)).collect())
    }

    pub fn patterns(&self) -> &[BipolarPattern] {
        &self.patterns
    }

    pub fn labels(&self) -> Option<&[u8]> {
        self.labels.as_deref()
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.patterns[0].len()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, BipolarPattern> {
        self.patterns.iter()
    }
}

fn read_u32(bytes: &[u8], offset: usize, path: &Path) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| {
            Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::UnexpectedEof, "truncated IDX header"),
            )
        })
}

fn read_payload<'a>(bytes: &'a [u8], offset: usize, len: usize, path: &Path) -> Result<&'a [u8]> {
    bytes.get(offset..offset + len).ok_or_else(|| {
        Error::io(
            path,
            std::io::Error::new(
                std::io::ErrorKind::UnexpectedEof,
                format!(
                    "truncated IDX payload: need {len} bytes, have {}",
                    bytes.len().saturating_sub(offset)
                ),
            ),
        )
    })
}

/// Loads an IDX image file and its label file, rescaling bytes to `[0, 1]`.
pub fn load_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Vec<GrayImage>> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let img_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let lbl_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;

    let magic = read_u32(&img_bytes, 0, images_path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}",
            images_path.display()
        )));
    }
    let magic = read_u32(&lbl_bytes, 0, labels_path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}",
            labels_path.display()
        )));
    }

    let count = read_u32(&img_bytes, 4, images_path)? as usize;
    let rows = read_u32(&img_bytes, 8, images_path)? as usize;
    let cols = read_u32(&img_bytes, 12, images_path)? as usize;
    let label_count = read_u32(&lbl_bytes, 4, labels_path)? as usize;
    if count != label_count {
        return Err(Error::Consistency(format!(
            "{count} images but {label_count} labels"
        )));
    }

    let dim = rows * cols;
    let pixels = read_payload(&img_bytes, 16, count * dim, images_path)?;
    let labels = read_payload(&lbl_bytes, 8, count, labels_path)?;

    pixels
        .chunks_exact(dim.max(1))
        .take(count)
        .zip(labels)
        .map(|(px, &label)| {
            GrayImage::new(px.iter().map(|&b| f64::from(b) / 255.0).collect(), label)
        })
        .collect()
}

/// Encodes images as IDX image and label files. Intensities are quantized to
/// bytes by rounding.
pub fn encode_idx(images: &[GrayImage], rows: usize, cols: usize) -> Result<(Vec<u8>, Vec<u8>)> {
    for img in images {
        check_dim(rows * cols, img.len())?;
    }
    let too_big = |what: &str| Error::Overflow(format!("{what} does not fit an IDX header"));
    let count = u32::try_from(images.len()).map_err(|_| too_big("image count"))?;
    let rows32 = u32::try_from(rows).map_err(|_| too_big("row count"))?;
    let cols32 = u32::try_from(cols).map_err(|_| too_big("column count"))?;

    let mut img_bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    img_bytes.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img_bytes.extend_from_slice(&count.to_be_bytes());
    img_bytes.extend_from_slice(&rows32.to_be_bytes());
    img_bytes.extend_from_slice(&cols32.to_be_bytes());
    for img in images {
        img_bytes.extend(img.pixels().iter().map(|&p| (p * 255.0).round() as u8));
    }

    let mut lbl_bytes = Vec::with_capacity(8 + images.len());
    lbl_bytes.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl_bytes.extend_from_slice(&count.to_be_bytes());
    lbl_bytes.extend(images.iter().map(GrayImage::label));
    Ok((img_bytes, lbl_bytes))
}

/// Writes images as an IDX pair; see [`encode_idx`].
pub fn write_idx(
    images: &[GrayImage],
    rows: usize,
    cols: usize,
    images_path: impl AsRef<Path>,
    labels_path: impl AsRef<Path>,
) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let (img_bytes, lbl_bytes) = encode_idx(images, rows, cols)?;
    fs::write(images_path, img_bytes).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, lbl_bytes).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}

/// `+1` where the pixel is strictly above `threshold`, `−1` elsewhere.
pub fn binarize(img: &GrayImage, threshold: f64) -> BipolarPattern {
    BipolarPattern::from_bools(img.pixels().iter().map(|&p| p > threshold))
}

pub fn hamming(a: &BipolarPattern, b: &BipolarPattern) -> Result<usize> {
    check_dim(a.len(), b.len())?;
    Ok(a.bits().iter().zip(b.bits()).filter(|(x, y)| x != y).count())
}

/// Negates exactly the positions in `indices`.
pub fn flip_bits(p: &BipolarPattern, indices: &BTreeSet<usize>) -> Result<BipolarPattern> {
    let mut out = p.clone();
    for &i in indices {
        if i >= p.len() {
            return Err(Error::IndexOutOfRange {
                index: i,
                len: p.len(),
            });
        }
        out.flip_in_place(i);
    }
    Ok(out)
}

/// One labeled prototype per class present in `images`, in ascending class
/// order: the per-pixel fraction of images whose binarized pixel is `+1`,
/// re-binarized at `0.5` (a pixel is `+1` when the majority of the class has it on).
pub fn class_prototypes(images: &[GrayImage], threshold: f64) -> Result<PatternSet> {
    let first = images.first().ok_or(Error::EmptyPatternSet)?;
    let dim = first.len();
    let mut on_counts: std::collections::BTreeMap<u8, (Vec<usize>, usize)> = Default::default();
    for img in images {
        check_dim(dim, img.len())?;
        let (counts, total) = on_counts
            .entry(img.label())
            .or_insert_with(|| (vec![0; dim], 0));
        *total += 1;
        for (c, &p) in counts.iter_mut().zip(img.pixels()) {
            if p > threshold {
                *c += 1;
            }
        }
    }
    let (labels, patterns) = on_counts
        .into_iter()
        .map(|(label, (counts, total))| {
            let proto = BipolarPattern::from_bools(
                counts.iter().map(|&c| c as f64 / total as f64 > DEFAULT_THRESHOLD),
            );
            (label, proto)
        })
        .unzip();
    PatternSet::labeled(patterns, labels)
}

/// All `2^n` bipolar patterns of dimension `n`.
///
/// Pattern `k` (in yield order `k = 0, 1, ..., 2^n − 1`) has position `i` equal
/// to `+1` when bit `i` of `k` is set and `−1` otherwise, so the first pattern
/// is all `−1` and the last is all `+1`. [`space_index`] inverts the mapping.
pub fn enumerate_space(n: usize) -> Result<SpaceIter> {
    if n > MAX_ENUMERABLE_DIM {
        return Err(Error::SpaceTooLarge(n));
    }
    Ok(SpaceIter {
        n,
        next: 0,
        end: 1u64 << n,
    })
}

/// Position of `p` in the [`enumerate_space`] order.
pub fn space_index(p: &BipolarPattern) -> Result<usize> {
    if p.len() > MAX_ENUMERABLE_DIM {
        return Err(Error::SpaceTooLarge(p.len()));
    }
    Ok(p.bits()
        .iter()
        .enumerate()
        .filter(|(_, &b)| b == 1)
        .fold(0usize, |k, (i, _)| k | (1 << i)))
}

#[derive(Debug, Clone)]
pub struct SpaceIter {
    n: usize,
    next: u64,
    end: u64,
}

impl Iterator for SpaceIter {
    type Item = BipolarPattern;

    fn next(&mut self) -> Option<BipolarPattern> {
        if self.next >= self.end {
            return None;
        }
        let k = self.next;
        self.next += 1;
        Some(BipolarPattern::from_bools((0..self.n).map(|i| k >> i & 1 == 1)))
    }

    fn size_hint(&self) -> (usize, Option<usize>) {
        let rem = (self.end - self.next) as usize;
        (rem, Some(rem))
    }
}

impl ExactSizeIterator for SpaceIter {}

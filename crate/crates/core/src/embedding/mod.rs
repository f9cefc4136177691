//! Frozen per-channel feature extraction, multimodal concatenation and PCA.

mod eigen;
mod pca;

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

pub use eigen::SymmetricEigen;
pub use pca::{pca_fit, PcaModel};

use crate::encoders::SquareMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::{Awareness, Channel};
use crate::dataset::Split;

/// Per-channel embedding width.
pub const FEATURE_DIM: usize = 2048;
/// Width of the seven-channel concatenation.
pub const CONCAT_DIM: usize = FEATURE_DIM * 7;
/// Default number of principal components.
pub const DEFAULT_PCA_K: usize = 100;
pub const DEFAULT_EXTRACTOR_SEED: u64 = 2048;

/// Identifies one image of the dataset: synchronized stem plus channel.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageKey {
    pub stem: String,
    pub channel: Channel,
}

impl ImageKey {
    pub fn new(stem: impl Into<String>, channel: Channel) -> Self {
        ImageKey { stem: stem.into(), channel }
    }
}

/// A frozen image embedding. Implementations must be deterministic and must
/// not mutate state while extracting.
pub trait FeatureExtractor<T: Scalar>: Send + Sync {
    fn name(&self) -> &str;
    fn output_dim(&self) -> usize;
    fn embed(&self, key: &ImageKey, img: &SquareMatrix<T>) -> Result<Vec<T>>;
}

fn validate_image<T: Scalar>(img: &SquareMatrix<T>) -> Result<()> {
    if img.side() == 0 {
        return Err(Error::InvalidImage("empty image".into()));
    }
    if let Some(v) = img.as_slice().iter().find(|v| !(**v >= T::zero() && **v <= T::one())) {
        return Err(Error::InvalidImage(format!("pixel value {v} outside [0, 1]")));
    }
    Ok(())
}

/// Validates the image, then embeds it.
pub fn extract<T: Scalar>(
    ex: &dyn FeatureExtractor<T>,
    key: &ImageKey,
    img: &SquareMatrix<T>,
) -> Result<Vec<T>> {
    validate_image(img)?;
    let v = ex.embed(key, img)?;
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericError("feature vector"));
    }
    Ok(v)
}

/// Embeds the seven channel images of one stem and concatenates them in
/// `Channel::ALL` order.
pub fn extract_multimodal<T: Scalar>(
    ex: &dyn FeatureExtractor<T>,
    stem: &str,
    images: &[SquareMatrix<T>],
) -> Result<Vec<T>> {
    if images.len() != Channel::ALL.len() {
        return Err(Error::ChannelCountError(images.len()));
    }
    let mut concat = Vec::with_capacity(ex.output_dim() * 7);
    for (ch, img) in Channel::ALL.iter().zip(images) {
        concat.extend(extract(ex, &ImageKey::new(stem, *ch), img)?);
    }
    Ok(concat)
}

/// One window's concatenated features with its label and split.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureRecord<T> {
    pub session_id: String,
    pub window_id: String,
    pub concat: Vec<T>,
    pub label: Awareness,
    pub split: Split,
}

/// Seeded random-projection pyramid.
///
/// The image is average-pooled on 2x2, 4x4, 8x8 and 16x16 grids (340 cells),
/// multiplied by a fixed Gaussian matrix scaled by `1/sqrt(340)`, offset by a
/// fixed Gaussian bias with standard deviation 0.1 and squashed with `tanh`.
/// Weights are drawn from ChaCha8 seeded with `seed`: the whole weight matrix
/// row by row first, then the bias. An all-zero image therefore maps to
/// `tanh(bias)`.
pub struct BuiltinExtractor<T> {
    seed: u64,
    /// Row-major `FEATURE_DIM x POOLED`.
    weights: Vec<T>,
    bias: Vec<T>,
}

const PYRAMID: [usize; 4] = [2, 4, 8, 16];
const POOLED: usize = 4 + 16 + 64 + 256;

impl<T: Scalar> BuiltinExtractor<T> {
    pub fn new(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let scale = 1.0 / (POOLED as f64).sqrt();
        let weights = (0..FEATURE_DIM * POOLED)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z * scale)
            })
            .collect();
        let bias = (0..FEATURE_DIM)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                T::of(z * 0.1)
            })
            .collect();
        BuiltinExtractor { seed, weights, bias }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Output for an all-zero image.
    pub fn bias_response(&self) -> Vec<T> {
        self.bias.iter().map(|b| b.tanh()).collect()
    }

    fn pyramid(img: &SquareMatrix<T>) -> Vec<T> {
        let n = img.side();
        let mut out = Vec::with_capacity(POOLED);
        let bounds = |a: usize, l: usize| {
            let lo = (a * n / l).min(n - 1);
            let hi = ((a + 1) * n / l).max(lo + 1).min(n);
            (lo, hi)
        };
        for &l in &PYRAMID {
            for a in 0..l {
                let (r0, r1) = bounds(a, l);
                for b in 0..l {
                    let (c0, c1) = bounds(b, l);
                    let mut acc = T::zero();
                    for i in r0..r1 {
                        for j in c0..c1 {
                            acc = acc + img.get(i, j);
                        }
                    }
                    out.push(acc / T::of(((r1 - r0) * (c1 - c0)) as f64));
                }
            }
        }
        out
    }
}

impl<T: Scalar> Default for BuiltinExtractor<T> {
    fn default() -> Self {
        BuiltinExtractor::new(DEFAULT_EXTRACTOR_SEED)
    }
}

impl<T: Scalar> FeatureExtractor<T> for BuiltinExtractor<T> {
    fn name(&self) -> &str {
        "builtin-pyramid"
    }

    fn output_dim(&self) -> usize {
        FEATURE_DIM
    }

    fn embed(&self, _key: &ImageKey, img: &SquareMatrix<T>) -> Result<Vec<T>> {
        let pooled = Self::pyramid(img);
        Ok(self
            .weights
            .chunks_exact(POOLED)
            .zip(&self.bias)
            .map(|(row, &b)| (crate::scalar::dot(row, &pooled) + b).tanh())
            .collect())
    }
}

/// Magic prefix of the embedding sidecar.
pub const SIDECAR_MAGIC: &[u8; 5] = b"PEMB1";

/// Precomputed embeddings read from a sidecar file.
///
/// Layout: `PEMB1`, then records until end of file, each
/// `u32 LE stem byte length`, UTF-8 stem, `u8` channel tag (index in
/// `Channel::ALL`), and 2048 little-endian `f32` values.
pub struct ExternalExtractor {
    name: String,
    table: HashMap<ImageKey, Vec<f32>>,
}

impl ExternalExtractor {
    pub fn open(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let table = parse_sidecar(&bytes).map_err(|m| Error::format(path, m))?;
        Ok(ExternalExtractor { name: format!("external:{}", path.display()), table })
    }

    pub fn from_table(table: HashMap<ImageKey, Vec<f32>>) -> Self {
        ExternalExtractor { name: "external:memory".into(), table }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn get(&self, key: &ImageKey) -> Option<&[f32]> {
        self.table.get(key).map(|v| v.as_slice())
    }
}

impl<T: Scalar> FeatureExtractor<T> for ExternalExtractor {
    fn name(&self) -> &str {
        &self.name
    }

    fn output_dim(&self) -> usize {
        FEATURE_DIM
    }

    fn embed(&self, key: &ImageKey, _img: &SquareMatrix<T>) -> Result<Vec<T>> {
        self.table
            .get(key)
            .map(|v| v.iter().map(|&x| T::of(x as f64)).collect())
            .ok_or_else(|| Error::MissingEmbedding { stem: key.stem.clone(), channel: key.channel })
    }
}

fn parse_sidecar(bytes: &[u8]) -> std::result::Result<HashMap<ImageKey, Vec<f32>>, String> {
    if bytes.len() < 5 || &bytes[..5] != SIDECAR_MAGIC {
        return Err("missing PEMB1 header".into());
    }
    let mut table = HashMap::new();
    let mut pos = 5;
    while pos < bytes.len() {
        let take = |pos: &mut usize, n: usize| -> std::result::Result<&[u8], String> {
            let s = bytes.get(*pos..*pos + n).ok_or_else(|| format!("truncated record at byte {}", *pos))?;
            *pos += n;
            Ok(s)
        };
        let len = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let stem = std::str::from_utf8(take(&mut pos, len)?)
            .map_err(|_| format!("stem at byte {pos} is not UTF-8"))?
            .to_string();
        let tag = take(&mut pos, 1)?[0];
        let channel = Channel::from_index(tag as usize).ok_or_else(|| format!("bad channel tag {tag}"))?;
        let values = take(&mut pos, FEATURE_DIM * 4)?
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        table.insert(ImageKey { stem, channel }, values);
    }
    Ok(table)
}

/// Serializes embeddings in the sidecar layout.
pub fn encode_sidecar<'a, T: Scalar>(
    records: impl IntoIterator<Item = (&'a ImageKey, &'a [T])>,
) -> Result<Vec<u8>> {
    let mut out = SIDECAR_MAGIC.to_vec();
    for (key, values) in records {
        if values.len() != FEATURE_DIM {
            return Err(Error::DimError { expected: FEATURE_DIM, found: values.len() });
        }
        out.extend_from_slice(&(key.stem.len() as u32).to_le_bytes());
        out.extend_from_slice(key.stem.as_bytes());
        out.push(key.channel.index() as u8);
        for v in values {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

pub fn write_sidecar<'a, T: Scalar>(
    path: &Path,
    records: impl IntoIterator<Item = (&'a ImageKey, &'a [T])>,
) -> Result<()> {
    let bytes = encode_sidecar(records)?;
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Embeds many stems in parallel; output order follows the input.
pub fn extract_batch<T: Scalar>(
    ex: &dyn FeatureExtractor<T>,
    items: &[(String, Vec<SquareMatrix<T>>)],
) -> Result<Vec<Vec<T>>> {
    items
        .par_iter()
        .map(|(stem, imgs)| extract_multimodal(ex, stem, imgs))
        .collect()
}

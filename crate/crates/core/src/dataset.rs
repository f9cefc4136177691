//! Class/channel image folders with synchronized filenames, the JSON-lines
//! manifest that indexes them, and seeded train/validation/test splits.
//!
//! Layout under the dataset root:
//!
//! ```text
//! manifest.jsonl         one entry per window, in time order
//! dataset.meta           key=value snapshot of the specs, seed and split
//! <LL|L|H|HH>/<acc_x|...|temp>/<0001>.png
//! ```

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoders::{encode, from_image, to_image, EncoderKind, EncoderSpec, SquareMatrix};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::{synchronize, windows, Awareness, Channel, MultimodalRecord, ScalingMode, WindowSpec};

pub const MANIFEST_FILE: &str = "manifest.jsonl";
pub const META_FILE: &str = "dataset.meta";
/// Name of the PRNG used for split shuffles, recorded in `dataset.meta`.
pub const SPLIT_PRNG: &str = "chacha8";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// `Random` shuffles individual windows. `Block` keeps time order, so the
/// validation and test windows come from the end of the session and overlap
/// the training windows only at the two boundaries.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SplitMode {
    #[default]
    Random,
    Block,
}

impl SplitMode {
    pub fn name(self) -> &'static str {
        match self {
            SplitMode::Random => "random",
            SplitMode::Block => "block",
        }
    }
}

impl FromStr for SplitMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "random" => Ok(SplitMode::Random),
            "block" => Ok(SplitMode::Block),
            _ => Err(format!("unknown split mode '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions { train: 0.70, val: 0.15, test: 0.15 }
    }
}

impl SplitFractions {
    pub fn validate(&self) -> Result<()> {
        let all = [self.train, self.val, self.test];
        if all.iter().any(|f| !(*f > 0.0)) || ((all.iter().sum::<f64>()) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "split fractions {}/{}/{} must be positive and sum to 1",
                self.train, self.val, self.test
            )));
        }
        Ok(())
    }
}

/// Window counts per split: train and validation take the floor of their
/// share and the test split takes what is left.
pub fn split_counts(n: usize, fractions: &SplitFractions) -> [usize; 3] {
    // The small slack keeps products such as 0.15 * 100 from flooring to 14.
    let train = ((n as f64 * fractions.train) + 1e-9).floor() as usize;
    let val = (((n as f64 * fractions.val) + 1e-9).floor() as usize).min(n - train);
    [train, val, n - train - val]
}

/// Split of each of `n` windows, indexed by time order.
pub fn assign_split(n: usize, seed: u64, fractions: &SplitFractions, mode: SplitMode) -> Vec<Split> {
    let [train, val, _] = split_counts(n, fractions);
    let mut order: Vec<usize> = (0..n).collect();
    if mode == SplitMode::Random {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let mut out = vec![Split::Test; n];
    for (rank, &i) in order.iter().enumerate() {
        out[i] = if rank < train {
            Split::Train
        } else if rank < train + val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ImageFormat {
    Png,
    Jpeg { quality: u8 },
}

impl ImageFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ImageFormat::Png => "png",
            ImageFormat::Jpeg { .. } => "jpg",
        }
    }

    fn meta_value(self) -> String {
        match self {
            ImageFormat::Png => "png".into(),
            ImageFormat::Jpeg { quality } => format!("jpeg:{quality}"),
        }
    }

    fn parse_meta(s: &str) -> Option<Self> {
        match s {
            "png" => Some(ImageFormat::Png),
            _ => s.strip_prefix("jpeg:")?.parse().ok().map(|quality| ImageFormat::Jpeg { quality }),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub session_id: String,
    /// Zero-padded ordinal, restarting at `0001` in every session.
    pub window_id: String,
    pub label: Awareness,
    pub start_s: f64,
    /// Paths relative to the dataset root, one per channel.
    pub paths: BTreeMap<Channel, String>,
    pub split: Split,
}

impl ManifestEntry {
    /// `session_id/window_id`, the key shared by the seven images.
    pub fn stem(&self) -> String {
        format!("{}/{}", self.session_id, self.window_id)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
    pub seed: u64,
    pub split_mode: SplitMode,
    pub fractions: SplitFractions,
    pub window_spec: WindowSpec,
    pub encoder_spec: EncoderSpec,
    pub image_format: ImageFormat,
    pub user_id: String,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BuildOptions {
    pub seed: u64,
    pub split_mode: SplitMode,
    pub fractions: SplitFractions,
    pub image_format: ImageFormat,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            seed: 0,
            split_mode: SplitMode::Random,
            fractions: SplitFractions::default(),
            image_format: ImageFormat::Png,
        }
    }
}

fn relative_path(label: Awareness, channel: Channel, window_id: &str, fmt: ImageFormat) -> String {
    format!("{}/{}/{}.{}", label.name(), channel.folder(), window_id, fmt.extension())
}

fn save_image(img: &image::GrayImage, path: &Path, fmt: ImageFormat) -> Result<()> {
    let res = match fmt {
        ImageFormat::Png => img.save_with_format(path, image::ImageFormat::Png),
        ImageFormat::Jpeg { quality } => {
            let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
            let mut w = BufWriter::new(file);
            image::codecs::jpeg::JpegEncoder::new_with_quality(&mut w, quality).encode_image(img)
        }
    };
    res.map_err(|e| Error::format(path, e.to_string()))
}

/// Windows, encodes and writes one session, then splits and writes the
/// manifest. The record is resampled to `wspec.fs` first if needed.
pub fn build(
    rec: &MultimodalRecord,
    wspec: &WindowSpec,
    espec: &EncoderSpec,
    out_dir: &Path,
    opts: &BuildOptions,
) -> Result<DatasetManifest> {
    espec.validate()?;
    opts.fractions.validate()?;
    let synced = if rec.is_synchronized_at(wspec.fs) { rec.clone() } else { synchronize(rec, wspec.fs)? };
    let groups = windows(&synced, wspec)?;
    for label in Awareness::ALL {
        for ch in Channel::ALL {
            let dir = out_dir.join(label.name()).join(ch.folder());
            fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        }
    }
    let width = groups.len().to_string().len().max(4);
    let entries = groups
        .par_iter()
        .map(|g| {
            let window_id = format!("{:0width$}", g.index + 1);
            let mut paths = BTreeMap::new();
            for w in &g.channels {
                let m = encode::<f64>(w, espec)?.matrix;
                let rel = relative_path(g.label, w.channel, &window_id, opts.image_format);
                save_image(&to_image(&m), &out_dir.join(&rel), opts.image_format)?;
                paths.insert(w.channel, rel);
            }
            Ok(ManifestEntry {
                session_id: synced.session_id.clone(),
                window_id,
                label: g.label,
                start_s: g.start_s,
                paths,
                split: Split::Train,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut manifest = DatasetManifest {
        entries,
        seed: opts.seed,
        split_mode: opts.split_mode,
        fractions: opts.fractions,
        window_spec: *wspec,
        encoder_spec: *espec,
        image_format: opts.image_format,
        user_id: synced.user_id.clone(),
    };
    if !manifest.entries.is_empty() {
        manifest = split(manifest, opts.seed, &opts.fractions, opts.split_mode)?;
    }
    manifest.write(out_dir)?;
    Ok(manifest)
}

/// Reassigns splits. Entries are shuffled as a whole, so windows of several
/// sessions in one manifest share a single partition.
pub fn split(
    mut manifest: DatasetManifest,
    seed: u64,
    fractions: &SplitFractions,
    mode: SplitMode,
) -> Result<DatasetManifest> {
    fractions.validate()?;
    if manifest.entries.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let assignment = assign_split(manifest.entries.len(), seed, fractions, mode);
    for (e, s) in manifest.entries.iter_mut().zip(assignment) {
        e.split = s;
    }
    manifest.seed = seed;
    manifest.fractions = *fractions;
    manifest.split_mode = mode;
    Ok(manifest)
}

/// The seven decoded images of one window.
#[derive(Clone, Debug, PartialEq)]
pub struct LoadedWindow<T> {
    pub session_id: String,
    pub window_id: String,
    pub start_s: f64,
    pub label: Awareness,
    pub split: Split,
    /// Ordered as `Channel::ALL`.
    pub images: Vec<SquareMatrix<T>>,
}

impl<T> LoadedWindow<T> {
    pub fn stem(&self) -> String {
        format!("{}/{}", self.session_id, self.window_id)
    }
}

/// Decodes the seven images of one manifest entry.
pub fn load_window<T: Scalar>(e: &ManifestEntry, root: &Path) -> Result<LoadedWindow<T>> {
    let mut images = Vec::with_capacity(7);
    for ch in Channel::ALL {
        let missing = || Error::ManifestInconsistent { stem: e.stem(), channel: ch };
        let rel = e.paths.get(&ch).ok_or_else(missing)?;
        let path = root.join(rel);
        if !path.is_file() {
            return Err(missing());
        }
        let img = image::open(&path).map_err(|err| Error::format(&path, err.to_string()))?.to_luma8();
        images.push(from_image(&img)?);
    }
    Ok(LoadedWindow {
        session_id: e.session_id.clone(),
        window_id: e.window_id.clone(),
        start_s: e.start_s,
        label: e.label,
        split: e.split,
        images,
    })
}

/// Lazily decodes the manifest's windows in manifest (time) order.
pub fn load<'a, T: Scalar>(
    manifest: &'a DatasetManifest,
    root: &'a Path,
) -> impl Iterator<Item = Result<LoadedWindow<T>>> + 'a {
    manifest.entries.iter().map(move |e| load_window(e, root))
}

/// Decodes every window in parallel.
pub fn load_all<T: Scalar>(manifest: &DatasetManifest, root: &Path) -> Result<Vec<LoadedWindow<T>>> {
    manifest.entries.par_iter().map(|e| load_window(e, root)).collect()
}

impl DatasetManifest {
    pub fn label_counts(&self) -> [usize; Awareness::COUNT] {
        let mut c = [0; Awareness::COUNT];
        for e in &self.entries {
            c[e.label.index()] += 1;
        }
        c
    }

    pub fn split_counts(&self) -> [usize; 3] {
        let mut c = [0; 3];
        for e in &self.entries {
            c[e.split as usize] += 1;
        }
        c
    }

    fn meta_pairs(&self) -> Vec<(&'static str, String)> {
        let w = &self.window_spec;
        let e = &self.encoder_spec;
        vec![
            ("tool_version", env!("CARGO_PKG_VERSION").to_string()),
            ("user_id", self.user_id.clone()),
            ("windows", self.entries.len().to_string()),
            ("seed", self.seed.to_string()),
            ("prng", SPLIT_PRNG.to_string()),
            ("split_mode", self.split_mode.name().to_string()),
            ("split_train", self.fractions.train.to_string()),
            ("split_val", self.fractions.val.to_string()),
            ("split_test", self.fractions.test.to_string()),
            ("window_s", w.window_s.to_string()),
            ("step_s", w.step_s.to_string()),
            ("fs", w.fs.to_string()),
            ("epsilon_mix", w.epsilon_mix.to_string()),
            ("clip_lo_pct", w.clip_lo_pct.to_string()),
            ("clip_hi_pct", w.clip_hi_pct.to_string()),
            ("scaling_mode", w.scaling_mode.name().to_string()),
            ("encoder", e.kind.name().to_string()),
            ("rp_threshold", e.rp_threshold.to_string()),
            ("mtf_states", e.mtf_states.to_string()),
            ("image_format", self.image_format.meta_value()),
        ]
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&serde_json::to_string(e).expect("manifest entries serialize"));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, root: &Path) -> Result<()> {
        fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        let path = root.join(MANIFEST_FILE);
        fs::write(&path, self.to_jsonl()).map_err(|e| Error::io(&path, e))?;
        let path = root.join(META_FILE);
        let mut f = BufWriter::new(fs::File::create(&path).map_err(|e| Error::io(&path, e))?);
        for (k, v) in self.meta_pairs() {
            writeln!(f, "{k}={v}").map_err(|e| Error::io(&path, e))?;
        }
        f.flush().map_err(|e| Error::io(&path, e))
    }

    pub fn read(root: &Path) -> Result<Self> {
        let meta_path = root.join(META_FILE);
        let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        let mut kv = BTreeMap::new();
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format(&meta_path, format!("expected key=value, got '{line}'")))?;
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let get = |k: &str| -> Result<&str> {
            kv.get(k).map(String::as_str).ok_or_else(|| Error::format(&meta_path, format!("missing key '{k}'")))
        };
        fn num<V: FromStr>(p: &Path, k: &str, v: &str) -> Result<V> {
            v.parse().map_err(|_| Error::format(p, format!("bad value '{v}' for '{k}'")))
        }
        let f = |k: &str| -> Result<f64> { num(&meta_path, k, get(k)?) };
        let bad = |k: &str, m: String| Error::format(&meta_path, format!("{k}: {m}"));
        let window_spec = WindowSpec {
            window_s: f("window_s")?,
            step_s: f("step_s")?,
            fs: f("fs")?,
            epsilon_mix: f("epsilon_mix")?,
            clip_lo_pct: f("clip_lo_pct")?,
            clip_hi_pct: f("clip_hi_pct")?,
            scaling_mode: ScalingMode::from_str(get("scaling_mode")?).map_err(|m| bad("scaling_mode", m))?,
        };
        let encoder_spec = EncoderSpec {
            kind: EncoderKind::from_str(get("encoder")?).map_err(|m| bad("encoder", m))?,
            rp_threshold: f("rp_threshold")?,
            mtf_states: num(&meta_path, "mtf_states", get("mtf_states")?)?,
        };
        let image_format = ImageFormat::parse_meta(get("image_format")?)
            .ok_or_else(|| bad("image_format", "expected png or jpeg:<quality>".into()))?;

        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| Error::format(&path, format!("line {}: {e}", i + 1)))
            })
            .collect::<Result<Vec<ManifestEntry>>>()?;
        Ok(DatasetManifest {
            entries,
            seed: num(&meta_path, "seed", get("seed")?)?,
            split_mode: SplitMode::from_str(get("split_mode")?).map_err(|m| bad("split_mode", m))?,
            fractions: SplitFractions {
                train: f("split_train")?,
                val: f("split_val")?,
                test: f("split_test")?,
            },
            window_spec,
            encoder_spec,
            image_format,
            user_id: get("user_id")?.to_string(),
        })
    }
}

//! Flat `key=value` run configuration.
//!
//! Precedence is built-in defaults, then the `--config` file, then command
//! line flags. Every resolved run writes `resolved.conf`, which parses back
//! to the same configuration.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use physimage::classifier::TrainConfig;
use physimage::dataset::{BuildOptions, ImageFormat, SplitFractions, SplitMode};
use physimage::encoders::{EncoderKind, EncoderSpec};
use physimage::evaluation::ExperimentConfig;
use physimage::pipeline::PipelineConfig;
use physimage::signals::{ScalingMode, WindowSpec};
use physimage::synthgen::CohortConfig;

pub const SNAPSHOT_FILE: &str = "resolved.conf";

pub struct KeyDoc {
    pub key: &'static str,
    pub default: &'static str,
    pub help: &'static str,
}

const fn k(key: &'static str, default: &'static str, help: &'static str) -> KeyDoc {
    KeyDoc { key, default, help }
}

pub const KEYS: &[KeyDoc] = &[
    k("input", "", "input path: session dir(s) for encode/encoders, dataset root for features/train/xmatrix/combined/compare, runs.jsonl or its dir for report"),
    k("out", "out", "output directory, created if absent"),
    k("features", "", "directory of <dataset>.pemb embedding files written by `features`; empty embeds on the fly"),
    k("seed", "7", "seed for the cohort, the split and run 0 of training (run r uses seed + r)"),
    k("jobs", "0", "worker threads; 0 uses all cores"),
    // windowing
    k("window_s", "30", "window length in seconds"),
    k("step_s", "3", "window step in seconds"),
    k("fs", "4", "common sampling rate in Hz"),
    k("epsilon_mix", "0.5", "weight of global scaling in combined mode"),
    k("clip_lo_pct", "5", "lower clipping percentile"),
    k("clip_hi_pct", "95", "upper clipping percentile"),
    k("scaling_mode", "combined", "global | local | combined"),
    // encoding and dataset
    k("encoder", "rp-continuous", "rp-continuous | rp-binary | gasf | gadf | mtf"),
    k("rp_threshold", "0.5", "binary RP threshold on the [0,1] scale"),
    k("mtf_states", "4", "MTF quantile states"),
    k("image_format", "png", "png | jpeg"),
    k("jpeg_quality", "95", "JPEG quality 1-100"),
    k("split_mode", "random", "random | block"),
    k("train_frac", "0.7", "train fraction"),
    k("val_frac", "0.15", "validation fraction"),
    k("test_frac", "0.15", "test fraction"),
    // features and training
    k("extractor_seed", "2048", "seed of the builtin feature extractor"),
    k("pca_k", "100", "principal components"),
    k("runs", "5", "repetitions per cell"),
    k("lr", "0.001", "Adam learning rate"),
    k("weight_decay", "0.0001", "L2 weight decay"),
    k("epochs", "25", "training epochs"),
    k("batch_size", "32", "mini-batch size"),
    k("beta1", "0.9", "Adam beta1"),
    k("beta2", "0.999", "Adam beta2"),
    k("adam_eps", "1e-8", "Adam epsilon"),
    k("hidden1", "25", "first hidden layer width"),
    k("hidden2", "10", "second hidden layer width"),
    k("user", "", "user for train/encoders: 1-based index in sorted order or user id"),
    // synthetic cohort
    k("cohort", "preset", "preset | distance"),
    k("users", "4", "users in the preset cohort"),
    k("divergence", "1", "inter-user divergence of the preset cohort"),
    k("noise", "0.35", "noise standard deviation in channel scale units"),
    k("scale", "0.25", "fraction of the reference per-user window counts"),
    k("min_windows", "400", "lower bound on windows per user"),
    k("duration_s", "0", "fixed session length in seconds; 0 derives it from scale"),
    k("min_segment_s", "150", "shortest state segment in seconds"),
    k("distance_windows", "400", "windows of the distance-structured session"),
];

#[derive(Debug)]
pub enum ConfigError {
    UnknownKey(String),
    BadValue { key: String, value: String, reason: String },
    Syntax { line: usize, text: String },
    MissingValue(String),
    Missing(&'static str),
    Io(PathBuf, std::io::Error),
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::UnknownKey(k) => write!(f, "unknown config key '{k}'"),
            ConfigError::BadValue { key, value, reason } => write!(f, "bad value '{value}' for key '{key}': {reason}"),
            ConfigError::Syntax { line, text } => write!(f, "line {line}: expected key=value, got '{text}'"),
            ConfigError::MissingValue(k) => write!(f, "flag --{k} needs a value"),
            ConfigError::Missing(k) => write!(f, "key '{k}' must be set"),
            ConfigError::Io(p, e) => write!(f, "{}: {e}", p.display()),
        }
    }
}

impl std::error::Error for ConfigError {}

type Res<T> = Result<T, ConfigError>;

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<&'static str, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: KEYS.iter().map(|d| (d.key, d.default.to_string())).collect() }
    }
}

fn canonical(key: &str) -> Res<&'static str> {
    let k = key.trim().replace('-', "_");
    KEYS.iter().map(|d| d.key).find(|d| *d == k).ok_or_else(|| ConfigError::UnknownKey(key.trim().to_string()))
}

/// `key=value` lines; blank lines and `#` comments are skipped.
pub fn parse_text(text: &str) -> Res<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax { line: i + 1, text: line.into() })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

/// `--key value` and `--key=value` pairs. Dashes in keys map to underscores.
pub fn parse_flags(args: &[String]) -> Res<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(flag) = a.strip_prefix("--") else {
            return Err(ConfigError::UnknownKey(a.clone()));
        };
        match flag.split_once('=') {
            Some((k, v)) => out.push((k.to_string(), v.to_string())),
            None => {
                let v = it.next().ok_or_else(|| ConfigError::MissingValue(flag.to_string()))?;
                out.push((flag.to_string(), v.clone()));
            }
        }
    }
    Ok(out)
}

fn bad(key: &str, value: &str, reason: impl fmt::Display) -> ConfigError {
    ConfigError::BadValue { key: key.into(), value: value.into(), reason: reason.to_string() }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Res<()> {
        let k = canonical(key)?;
        self.values.insert(k, value.to_string());
        Ok(())
    }

    pub fn apply(&mut self, pairs: &[(String, String)]) -> Res<()> {
        pairs.iter().try_for_each(|(k, v)| self.set(k, v))
    }

    /// Defaults, then the file named by a `config` flag, then the other flags.
    pub fn resolve(flags: &[(String, String)]) -> Res<Self> {
        let mut cfg = RunConfig::default();
        for (_, v) in flags.iter().filter(|(k, _)| k == "config") {
            let path = Path::new(v);
            let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(path.into(), e))?;
            cfg.apply(&parse_text(&text)?)?;
        }
        let rest: Vec<_> = flags.iter().filter(|(k, _)| k != "config").cloned().collect();
        cfg.apply(&rest)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Res<T>
    where
        T::Err: fmt::Display,
    {
        let v = self.raw(key);
        v.parse().map_err(|e| bad(key, v, e))
    }

    pub fn path(&self, key: &'static str) -> Option<PathBuf> {
        let v = self.raw(key);
        (!v.is_empty()).then(|| PathBuf::from(v))
    }

    pub fn required_path(&self, key: &'static str) -> Res<PathBuf> {
        self.path(key).ok_or(ConfigError::Missing(key))
    }

    pub fn out(&self) -> PathBuf {
        self.path("out").unwrap_or_else(|| PathBuf::from("out"))
    }

    /// All keys in documentation order.
    pub fn snapshot(&self) -> String {
        KEYS.iter().map(|d| format!("{}={}\n", d.key, self.raw(d.key))).collect()
    }

    /// Parses every typed view once so bad values surface as config errors.
    pub fn validate(&self) -> Res<()> {
        let w = self.window_spec()?;
        w.validate().map_err(|e| bad("window_s", self.raw("window_s"), e))?;
        let e = self.encoder_spec()?;
        e.validate().map_err(|err| bad("encoder", self.raw("encoder"), err))?;
        let b = self.build_options()?;
        b.fractions.validate().map_err(|err| bad("train_frac", self.raw("train_frac"), err))?;
        let x = self.experiment_config()?;
        if x.n_runs == 0 {
            return Err(bad("runs", self.raw("runs"), "must be at least 1"));
        }
        if x.pca_k == 0 {
            return Err(bad("pca_k", self.raw("pca_k"), "must be at least 1"));
        }
        if x.train.batch_size == 0 {
            return Err(bad("batch_size", self.raw("batch_size"), "must be at least 1"));
        }
        self.cohort_config()?;
        self.get::<usize>("jobs")?;
        self.get::<usize>("distance_windows")?;
        match self.raw("cohort") {
            "preset" | "distance" => Ok(()),
            v => Err(bad("cohort", v, "expected preset or distance")),
        }
    }

    pub fn seed(&self) -> Res<u64> {
        self.get("seed")
    }

    pub fn window_spec(&self) -> Res<WindowSpec> {
        Ok(WindowSpec {
            window_s: self.get("window_s")?,
            step_s: self.get("step_s")?,
            fs: self.get("fs")?,
            epsilon_mix: self.get("epsilon_mix")?,
            clip_lo_pct: self.get("clip_lo_pct")?,
            clip_hi_pct: self.get("clip_hi_pct")?,
            scaling_mode: self.get::<ScalingMode>("scaling_mode")?,
        })
    }

    pub fn encoder_spec(&self) -> Res<EncoderSpec> {
        Ok(EncoderSpec {
            kind: self.get::<EncoderKind>("encoder")?,
            rp_threshold: self.get("rp_threshold")?,
            mtf_states: self.get("mtf_states")?,
        })
    }

    pub fn build_options(&self) -> Res<BuildOptions> {
        let image_format = match self.raw("image_format") {
            "png" => ImageFormat::Png,
            "jpeg" | "jpg" => {
                let q: u8 = self.get("jpeg_quality")?;
                if !(1..=100).contains(&q) {
                    return Err(bad("jpeg_quality", self.raw("jpeg_quality"), "must lie in 1..=100"));
                }
                ImageFormat::Jpeg { quality: q }
            }
            v => return Err(bad("image_format", v, "expected png or jpeg")),
        };
        Ok(BuildOptions {
            seed: self.seed()?,
            split_mode: self.get::<SplitMode>("split_mode")?,
            fractions: SplitFractions {
                train: self.get("train_frac")?,
                val: self.get("val_frac")?,
                test: self.get("test_frac")?,
            },
            image_format,
        })
    }

    pub fn pipeline_config(&self) -> Res<PipelineConfig> {
        let b = self.build_options()?;
        Ok(PipelineConfig {
            window: self.window_spec()?,
            encoder: self.encoder_spec()?,
            split_seed: b.seed,
            split_mode: b.split_mode,
            fractions: b.fractions,
            quantize: true,
        })
    }

    pub fn experiment_config(&self) -> Res<ExperimentConfig> {
        Ok(ExperimentConfig {
            train: TrainConfig {
                lr: self.get("lr")?,
                weight_decay: self.get("weight_decay")?,
                max_epochs: self.get("epochs")?,
                batch_size: self.get("batch_size")?,
                seed: self.seed()?,
                beta1: self.get("beta1")?,
                beta2: self.get("beta2")?,
                eps: self.get("adam_eps")?,
                hidden: [self.get("hidden1")?, self.get("hidden2")?],
            },
            pca_k: self.get("pca_k")?,
            n_runs: self.get("runs")?,
        })
    }

    pub fn cohort_config(&self) -> Res<CohortConfig> {
        let users: usize = self.get("users")?;
        if users == 0 {
            return Err(bad("users", self.raw("users"), "must be at least 1"));
        }
        let duration: f64 = self.get("duration_s")?;
        Ok(CohortConfig {
            n_users: users,
            divergence: self.get("divergence")?,
            noise: self.get("noise")?,
            scale: self.get("scale")?,
            min_windows: self.get("min_windows")?,
            duration_s: (duration > 0.0).then_some(duration),
            min_segment_s: self.get("min_segment_s")?,
            seed: self.seed()?,
        })
    }
}

/// `--help` text listing every key with its default.
pub fn keys_help() -> String {
    let width = KEYS.iter().map(|d| d.key.len()).max().unwrap_or(0);
    let mut s = String::from(
        "Config keys (set in a --config file as key=value, or as --key VALUE after the subcommand):\n",
    );
    for d in KEYS {
        let default = if d.default.is_empty() { "unset".to_string() } else { d.default.to_string() };
        s.push_str(&format!("  {:width$}  {} [default: {default}]\n", d.key, d.help));
    }
    s
}

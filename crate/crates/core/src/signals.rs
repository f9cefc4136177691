//! Raw session ingest, resampling to the common rate, percentile clipping and
//! sliding-window scaling.
//!
//! A session arrives as seven device streams at their native rates. Every
//! channel is linearly resampled onto a shared grid, clipped per channel at
//! session-wide percentiles and then cut into overlapping windows. Each window
//! is scaled into the canonical `[0, 1]` range using global (session) extrema,
//! local (window) extrema, or a blend of both.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Channel {
    #[serde(rename = "acc_x")]
    AccX,
    #[serde(rename = "acc_y")]
    AccY,
    #[serde(rename = "acc_z")]
    AccZ,
    #[serde(rename = "bvp")]
    Bvp,
    #[serde(rename = "eda")]
    Eda,
    #[serde(rename = "hr")]
    Hr,
    #[serde(rename = "temp")]
    Temp,
}

impl Channel {
    /// Canonical channel order; feature concatenation follows it.
    pub const ALL: [Channel; 7] = [
        Channel::AccX,
        Channel::AccY,
        Channel::AccZ,
        Channel::Bvp,
        Channel::Eda,
        Channel::Hr,
        Channel::Temp,
    ];

    /// Sampling rate of the wristband export, in Hz.
    pub fn native_rate(self) -> f64 {
        match self {
            Channel::Bvp => 64.0,
            Channel::AccX | Channel::AccY | Channel::AccZ => 32.0,
            Channel::Eda | Channel::Temp => 4.0,
            Channel::Hr => 1.0,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// Upper-case name used for session CSV files (`ACC_X.csv`).
    pub fn name(self) -> &'static str {
        match self {
            Channel::AccX => "ACC_X",
            Channel::AccY => "ACC_Y",
            Channel::AccZ => "ACC_Z",
            Channel::Bvp => "BVP",
            Channel::Eda => "EDA",
            Channel::Hr => "HR",
            Channel::Temp => "TEMP",
        }
    }

    /// Lower-case name used for dataset sub-folders.
    pub fn folder(self) -> &'static str {
        match self {
            Channel::AccX => "acc_x",
            Channel::AccY => "acc_y",
            Channel::AccZ => "acc_z",
            Channel::Bvp => "bvp",
            Channel::Eda => "eda",
            Channel::Hr => "hr",
            Channel::Temp => "temp",
        }
    }

    pub fn from_index(i: usize) -> Option<Channel> {
        Channel::ALL.get(i).copied()
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Channel {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Channel::ALL
            .into_iter()
            .find(|c| c.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown channel '{s}'"))
    }
}

/// Four-level awareness state, ordered from lowest to highest awareness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Awareness {
    LL,
    L,
    H,
    HH,
}

impl Awareness {
    pub const ALL: [Awareness; 4] = [Awareness::LL, Awareness::L, Awareness::H, Awareness::HH];
    pub const COUNT: usize = 4;

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Awareness> {
        Awareness::ALL.get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Awareness::LL => "LL",
            Awareness::L => "L",
            Awareness::H => "H",
            Awareness::HH => "HH",
        }
    }
}

impl fmt::Display for Awareness {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Awareness {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Awareness::ALL
            .into_iter()
            .find(|a| a.name() == s.trim())
            .ok_or_else(|| format!("unknown awareness label '{s}'"))
    }
}

/// One channel's uniformly sampled series.
#[derive(Clone, Debug, PartialEq)]
pub struct Signal {
    pub channel: Channel,
    /// Session-relative start time in seconds.
    pub t0: f64,
    pub fs: f64,
    pub values: Vec<f64>,
}

impl Signal {
    pub fn new(channel: Channel, t0: f64, fs: f64, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(Error::InvalidSpec(format!("sampling rate {fs} must be positive")));
        }
        if let Some(index) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::CorruptSample { channel, index });
        }
        Ok(Signal { channel, t0, fs, values })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Time between the first and the last sample.
    pub fn span(&self) -> f64 {
        (self.values.len().saturating_sub(1)) as f64 / self.fs
    }

    /// Recording length counting one sample period per sample.
    pub fn duration(&self) -> f64 {
        self.values.len() as f64 / self.fs
    }
}

/// The seven time-aligned channels of one session plus the per-sample label
/// track.
#[derive(Clone, Debug, PartialEq)]
pub struct MultimodalRecord {
    pub user_id: String,
    pub session_id: String,
    /// Indexed by `Channel::index()`.
    channels: Vec<Signal>,
    pub labels: Vec<Awareness>,
    pub label_fs: f64,
}

impl MultimodalRecord {
    pub fn new(
        user_id: impl Into<String>,
        session_id: impl Into<String>,
        mut signals: Vec<Signal>,
        labels: Vec<Awareness>,
        label_fs: f64,
    ) -> Result<Self> {
        signals.sort_by_key(|s| s.channel);
        signals.dedup_by_key(|s| s.channel);
        for ch in Channel::ALL {
            if signals.get(ch.index()).map(|s| s.channel) != Some(ch) {
                return Err(Error::MissingChannel(ch));
            }
        }
        Ok(MultimodalRecord {
            user_id: user_id.into(),
            session_id: session_id.into(),
            channels: signals,
            labels,
            label_fs,
        })
    }

    pub fn signal(&self, channel: Channel) -> &Signal {
        &self.channels[channel.index()]
    }

    pub fn signals(&self) -> &[Signal] {
        &self.channels
    }

    /// True when every channel and the label track share `fs` and length.
    pub fn is_synchronized_at(&self, fs: f64) -> bool {
        let n = self.labels.len();
        (self.label_fs - fs).abs() < 1e-9
            && self
                .channels
                .iter()
                .all(|s| (s.fs - fs).abs() < 1e-9 && s.len() == n)
    }

    /// Session length in seconds at the common rate.
    pub fn duration(&self) -> f64 {
        self.labels.len() as f64 / self.label_fs
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SessionFormat {
    /// One directory with `ACC_X.csv` … `TEMP.csv` and `labels.csv`.
    CsvDirectory,
}

/// Reads a session exported as per-channel CSV files.
pub fn load_session(path: &Path, format: SessionFormat) -> Result<MultimodalRecord> {
    match format {
        SessionFormat::CsvDirectory => load_csv_directory(path),
    }
}

fn load_csv_directory(dir: &Path) -> Result<MultimodalRecord> {
    let mut signals = Vec::with_capacity(7);
    for ch in Channel::ALL {
        let file = dir.join(format!("{}.csv", ch.name()));
        if !file.exists() {
            return Err(Error::MissingChannel(ch));
        }
        let rows = read_csv(&file, "value")?;
        let mut times = Vec::with_capacity(rows.len());
        let mut values = Vec::with_capacity(rows.len());
        for (index, (t, v)) in rows.into_iter().enumerate() {
            let value: f64 = v.parse().map_err(|_| Error::CorruptSample { channel: ch, index })?;
            if !value.is_finite() {
                return Err(Error::CorruptSample { channel: ch, index });
            }
            times.push(t);
            values.push(value);
        }
        if values.is_empty() {
            return Err(Error::EmptySignal);
        }
        let expected = ch.native_rate();
        let fs = infer_rate(&times).unwrap_or(expected);
        if ((fs - expected) / expected).abs() > 1e-3 {
            return Err(Error::RateMismatch { channel: ch, expected, found: fs });
        }
        signals.push(Signal::new(ch, times[0], expected, values)?);
    }

    let label_file = dir.join("labels.csv");
    let rows = read_csv(&label_file, "label")?;
    let times: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let label_fs = infer_rate(&times).unwrap_or(4.0);
    let labels = rows
        .into_iter()
        .enumerate()
        .map(|(i, (_, l))| {
            l.parse::<Awareness>()
                .map_err(|e| Error::format(&label_file, format!("row {}: {e}", i + 1)))
        })
        .collect::<Result<Vec<_>>>()?;

    let (user_id, session_id) = read_session_meta(dir)?;
    MultimodalRecord::new(user_id, session_id, signals, labels, label_fs)
}

/// `session.meta` carries `user_id` and `session_id`; without it both fall
/// back to the directory name.
fn read_session_meta(dir: &Path) -> Result<(String, String)> {
    let fallback = dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "session".to_string());
    let meta = dir.join("session.meta");
    if !meta.exists() {
        return Ok((fallback.clone(), fallback));
    }
    let text = fs::read_to_string(&meta).map_err(|e| Error::io(&meta, e))?;
    let mut user = None;
    let mut session = None;
    for line in text.lines() {
        if let Some((k, v)) = line.split_once('=') {
            match k.trim() {
                "user_id" => user = Some(v.trim().to_string()),
                "session_id" => session = Some(v.trim().to_string()),
                _ => {}
            }
        }
    }
    Ok((user.unwrap_or_else(|| fallback.clone()), session.unwrap_or(fallback)))
}

fn read_csv(path: &Path, value_column: &str) -> Result<Vec<(f64, String)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default().trim();
    if header != format!("t,{value_column}") {
        return Err(Error::format(path, format!("expected header 't,{value_column}', got '{header}'")));
    }
    let mut rows = Vec::new();
    for (i, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let (t, v) = line
            .split_once(',')
            .ok_or_else(|| Error::format(path, format!("row {}: expected two columns", i + 1)))?;
        let t: f64 = t
            .trim()
            .parse()
            .map_err(|_| Error::format(path, format!("row {}: bad timestamp '{t}'", i + 1)))?;
        rows.push((t, v.trim().to_string()));
    }
    Ok(rows)
}

fn infer_rate(times: &[f64]) -> Option<f64> {
    if times.len() < 2 {
        return None;
    }
    let span = times[times.len() - 1] - times[0];
    (span > 0.0).then(|| (times.len() - 1) as f64 / span)
}

/// Linear interpolation onto the grid `t0 + k / target_fs` covering the
/// signal's span.
pub fn resample(s: &Signal, target_fs: f64) -> Result<Signal> {
    if s.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(target_fs > 0.0) {
        return Err(Error::InvalidSpec(format!("target rate {target_fs} must be positive")));
    }
    let count = (s.span() * target_fs + 1e-9).floor() as usize + 1;
    resample_to_len(s, target_fs, count)
}

/// Like [`resample`] but with an explicit sample count; positions past the
/// last native sample hold its value.
pub fn resample_to_len(s: &Signal, target_fs: f64, count: usize) -> Result<Signal> {
    if s.is_empty() {
        return Err(Error::EmptySignal);
    }
    let last = s.len() - 1;
    let ratio = s.fs / target_fs;
    let values = (0..count)
        .map(|k| {
            let pos = k as f64 * ratio;
            let i = pos.floor() as usize;
            if i >= last {
                return s.values[last];
            }
            let frac = pos - i as f64;
            let (a, b) = (s.values[i], s.values[i + 1]);
            if frac == 0.0 {
                a
            } else {
                a + (b - a) * frac
            }
        })
        .collect();
    Ok(Signal { channel: s.channel, t0: s.t0, fs: target_fs, values })
}

/// Brings every channel and the label track to `fs` with identical length.
pub fn synchronize(rec: &MultimodalRecord, fs: f64) -> Result<MultimodalRecord> {
    let channel_len = rec
        .signals()
        .iter()
        .map(|s| (s.duration() * fs + 1e-9).floor() as usize)
        .min()
        .unwrap_or(0);
    let label_len = (rec.duration() * fs + 1e-9).floor() as usize;
    let n = channel_len.min(label_len);
    let signals = rec
        .signals()
        .iter()
        .map(|s| resample_to_len(s, fs, n))
        .collect::<Result<Vec<_>>>()?;
    let ratio = rec.label_fs / fs;
    let labels = (0..n)
        .map(|k| {
            let i = ((k as f64 * ratio) + 1e-9).floor() as usize;
            rec.labels[i.min(rec.labels.len() - 1)]
        })
        .collect();
    MultimodalRecord::new(rec.user_id.clone(), rec.session_id.clone(), signals, labels, fs)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClipBounds {
    pub lo: f64,
    pub hi: f64,
}

/// Percentile with linear interpolation between order statistics.
pub fn percentile(sorted: &[f64], pct: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * pct / 100.0;
    let i = h.floor() as usize;
    if i + 1 >= sorted.len() {
        return sorted[sorted.len() - 1];
    }
    sorted[i] + (sorted[i + 1] - sorted[i]) * (h - i as f64)
}

/// Clamps the whole signal into its `[lo_pct, hi_pct]` percentile band.
pub fn clip(s: &Signal, lo_pct: f64, hi_pct: f64) -> Result<(Signal, ClipBounds)> {
    if s.is_empty() {
        return Err(Error::EmptySignal);
    }
    if !(lo_pct < hi_pct) || lo_pct < 0.0 || hi_pct > 100.0 {
        return Err(Error::InvalidBounds { lo: lo_pct, hi: hi_pct });
    }
    let mut sorted = s.values.clone();
    sorted.sort_by(f64::total_cmp);
    let bounds = ClipBounds { lo: percentile(&sorted, lo_pct), hi: percentile(&sorted, hi_pct) };
    let values = s.values.iter().map(|v| v.clamp(bounds.lo, bounds.hi)).collect();
    Ok((Signal { values, ..s.clone() }, bounds))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScalingMode {
    Global,
    Local,
    Combined,
}

impl ScalingMode {
    pub fn name(self) -> &'static str {
        match self {
            ScalingMode::Global => "global",
            ScalingMode::Local => "local",
            ScalingMode::Combined => "combined",
        }
    }
}

impl FromStr for ScalingMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "global" => Ok(ScalingMode::Global),
            "local" => Ok(ScalingMode::Local),
            "combined" => Ok(ScalingMode::Combined),
            _ => Err(format!("unknown scaling mode '{s}'")),
        }
    }
}

/// Windowing and scaling parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub window_s: f64,
    pub step_s: f64,
    pub fs: f64,
    pub epsilon_mix: f64,
    pub clip_lo_pct: f64,
    pub clip_hi_pct: f64,
    pub scaling_mode: ScalingMode,
}

impl Default for WindowSpec {
    fn default() -> Self {
        WindowSpec {
            window_s: 30.0,
            step_s: 3.0,
            fs: 4.0,
            epsilon_mix: 0.5,
            clip_lo_pct: 5.0,
            clip_hi_pct: 95.0,
            scaling_mode: ScalingMode::Combined,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        let n = self.window_s * self.fs;
        if !(n >= 1.0) || (n - n.round()).abs() > 1e-9 {
            return Err(Error::InvalidSpec(format!(
                "window_s * fs = {n} must be a positive integer"
            )));
        }
        if !(self.step_s > 0.0 && self.step_s <= self.window_s) {
            return Err(Error::InvalidSpec(format!(
                "step_s = {} must lie in (0, window_s]",
                self.step_s
            )));
        }
        if !(0.0..=1.0).contains(&self.epsilon_mix) {
            return Err(Error::InvalidSpec(format!(
                "epsilon_mix = {} must lie in [0, 1]",
                self.epsilon_mix
            )));
        }
        if !(self.clip_lo_pct < self.clip_hi_pct) {
            return Err(Error::InvalidBounds { lo: self.clip_lo_pct, hi: self.clip_hi_pct });
        }
        Ok(())
    }

    /// Samples per window, which is also the image side length.
    pub fn side(&self) -> usize {
        (self.window_s * self.fs).round() as usize
    }

    /// Number of windows in a session of `duration_s` seconds.
    pub fn window_count(&self, duration_s: f64) -> usize {
        if duration_s + 1e-9 < self.window_s {
            return 0;
        }
        ((duration_s - self.window_s) / self.step_s + 1e-9).floor() as usize + 1
    }

    pub fn window_start_index(&self, k: usize) -> usize {
        (k as f64 * self.step_s * self.fs).round() as usize
    }
}

/// One scaled window of one channel.
#[derive(Clone, Debug, PartialEq)]
pub struct ScaledWindow {
    pub channel: Channel,
    pub start_s: f64,
    pub values: Vec<f64>,
    pub label: Awareness,
}

/// The seven channels' windows covering the same interval.
#[derive(Clone, Debug, PartialEq)]
pub struct WindowGroup {
    /// Zero-based position in time order.
    pub index: usize,
    pub start_s: f64,
    pub label: Awareness,
    /// Ordered as `Channel::ALL`.
    pub channels: Vec<ScaledWindow>,
}

fn min_max(values: &[f64]) -> (f64, f64) {
    values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

fn unit_scale(values: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; values.len()];
    }
    values.iter().map(|&v| ((v - lo) / range).clamp(0.0, 1.0)).collect()
}

/// Min-max scaling into `[0, 1]` with global, local or blended extrema.
///
/// A degenerate range (max equal to min) scales to zeros.
pub fn scale_window(
    window: &[f64],
    global_min: f64,
    global_max: f64,
    mode: ScalingMode,
    epsilon_mix: f64,
) -> Vec<f64> {
    match mode {
        ScalingMode::Global => unit_scale(window, global_min, global_max),
        ScalingMode::Local => {
            let (lo, hi) = min_max(window);
            unit_scale(window, lo, hi)
        }
        ScalingMode::Combined => {
            let global = unit_scale(window, global_min, global_max);
            let (lo, hi) = min_max(window);
            let local = unit_scale(window, lo, hi);
            global
                .iter()
                .zip(&local)
                .map(|(g, l)| (epsilon_mix * g + (1.0 - epsilon_mix) * l).clamp(0.0, 1.0))
                .collect()
        }
    }
}

/// Majority label; ties go to the lower-awareness class.
pub fn majority_label(labels: &[Awareness]) -> Awareness {
    let mut counts = [0usize; Awareness::COUNT];
    for l in labels {
        counts[l.index()] += 1;
    }
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    Awareness::ALL[best]
}

/// Clips every channel over the session, then cuts and scales windows.
///
/// The record must already be synchronized at `spec.fs`.
pub fn windows(rec: &MultimodalRecord, spec: &WindowSpec) -> Result<Vec<WindowGroup>> {
    spec.validate()?;
    if !rec.is_synchronized_at(spec.fs) {
        return Err(Error::InvalidSpec(format!(
            "record is not synchronized at {} Hz",
            spec.fs
        )));
    }
    let clipped = rec
        .signals()
        .iter()
        .map(|s| clip(s, spec.clip_lo_pct, spec.clip_hi_pct))
        .collect::<Result<Vec<_>>>()?;

    let n = spec.side();
    let count = spec.window_count(rec.duration());
    let groups = (0..count)
        .into_par_iter()
        .map(|k| {
            let start = spec.window_start_index(k);
            let start_s = k as f64 * spec.step_s;
            let label = majority_label(&rec.labels[start..start + n]);
            let channels = clipped
                .iter()
                .map(|(sig, bounds)| ScaledWindow {
                    channel: sig.channel,
                    start_s,
                    values: scale_window(
                        &sig.values[start..start + n],
                        bounds.lo,
                        bounds.hi,
                        spec.scaling_mode,
                        spec.epsilon_mix,
                    ),
                    label,
                })
                .collect();
            WindowGroup { index: k, start_s, label, channels }
        })
        .collect();
    Ok(groups)
}

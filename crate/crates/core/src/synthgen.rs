//! Seeded synthetic cohort: per-user state responses, labeled state
//! schedules and native-rate multichannel sessions.
//!
//! Every channel follows
//!
//! ```text
//! x(t) = baseline + A_s sin(2π f_s t) + D_s tanh((t - t_seg) / τ) + noise
//! ```
//!
//! where `s` is the scheduled state, `(A_s, f_s, D_s)` its response for this
//! user and channel, `t_seg` the start of the current schedule segment and
//! `τ` = [`DRIFT_TAU_S`].
//! Users differ by a per-channel permutation of the state-to-response
//! mapping, blended in by the cohort's divergence.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signals::{Awareness, Channel, MultimodalRecord, Signal};

/// Per-user window counts of the recorded cohort.
pub const REFERENCE_WINDOWS: [usize; 4] = [2158, 1288, 825, 754];

/// Per-user LL/L/H/HH window counts of the recorded cohort.
pub const REFERENCE_CLASS_COUNTS: [[usize; 4]; 4] = [
    [429, 776, 513, 440],
    [259, 263, 368, 398],
    [192, 263, 133, 237],
    [137, 246, 202, 169],
];

/// Label track rate of generated sessions.
pub const LABEL_FS: f64 = 4.0;

/// Shortest session the generator accepts; one default window.
pub const MIN_DURATION_S: f64 = 30.0;

/// Time constant of the level shift after a state change, in seconds.
pub const DRIFT_TAU_S: f64 = 10.0;

// Response rows shared by all channels, in units of the channel's scale.
const AMPLITUDE: [f64; 4] = [0.3, 0.7, 1.1, 1.5];
const FREQUENCY: [f64; 4] = [0.08, 0.14, 0.22, 0.32];
const DRIFT: [f64; 4] = [-1.0, -0.4, 0.4, 1.0];

/// `(baseline, scale)` per channel, in `Channel::ALL` order.
const CHANNEL_LEVELS: [(f64, f64); 7] =
    [(0.0, 0.4), (0.0, 0.4), (1.0, 0.4), (0.0, 1.0), (2.0, 0.5), (75.0, 8.0), (33.0, 0.3)];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateResponse {
    pub amplitude: f64,
    /// Hz.
    pub frequency: f64,
    /// Asymptotic level shift reached within each segment.
    pub drift: f64,
}

impl StateResponse {
    fn lerp(a: StateResponse, b: StateResponse, w: f64) -> StateResponse {
        StateResponse {
            amplitude: (1.0 - w) * a.amplitude + w * b.amplitude,
            frequency: (1.0 - w) * a.frequency + w * b.frequency,
            drift: (1.0 - w) * a.drift + w * b.drift,
        }
    }

    fn distance(&self, o: &StateResponse, scale: f64) -> f64 {
        let da = (self.amplitude - o.amplitude) / scale;
        let dd = (self.drift - o.drift) / scale;
        // frequencies compared on a log scale
        let df = (self.frequency.max(1e-9) / o.frequency.max(1e-9)).ln();
        (da * da + dd * dd + df * df).sqrt()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChannelProfile {
    pub baseline: f64,
    pub noise_sd: f64,
    /// Indexed by `Awareness::index()`.
    pub responses: [StateResponse; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UserProfile {
    pub user_id: String,
    pub seed: u64,
    /// Indexed by `Channel::index()`.
    pub channels: Vec<ChannelProfile>,
}

impl UserProfile {
    /// Smallest distance between two states' stacked channel responses,
    /// with amplitudes and drifts measured in channel scale units.
    pub fn min_state_separation(&self) -> f64 {
        let mut best = f64::INFINITY;
        for a in 0..4 {
            for b in a + 1..4 {
                let d2: f64 = self
                    .channels
                    .iter()
                    .zip(CHANNEL_LEVELS)
                    .map(|(c, (_, scale))| c.responses[a].distance(&c.responses[b], scale).powi(2))
                    .sum();
                best = best.min(d2.sqrt());
            }
        }
        best
    }

    /// Which shared response row each state uses on each channel, or `None`
    /// for blended (fractional divergence) profiles.
    pub fn state_mapping(&self) -> Option<Vec<[usize; 4]>> {
        self.channels
            .iter()
            .zip(CHANNEL_LEVELS)
            .map(|(c, (_, scale))| {
                let mut m = [0; 4];
                for (s, r) in c.responses.iter().enumerate() {
                    m[s] = (0..4).find(|&k| {
                        (r.amplitude - AMPLITUDE[k] * scale).abs() < 1e-12
                            && (r.frequency - FREQUENCY[k]).abs() < 1e-12
                            && (r.drift - DRIFT[k] * scale).abs() < 1e-12
                    })?;
                }
                Some(m)
            })
            .collect()
    }
}

fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn row(k: usize, scale: f64) -> StateResponse {
    StateResponse { amplitude: AMPLITUDE[k] * scale, frequency: FREQUENCY[k], drift: DRIFT[k] * scale }
}

/// Cohort of `n_users` profiles.
///
/// At divergence 0 every user shares the same state responses and baselines.
/// At divergence 1 each user other than the first maps states to responses
/// through its own per-channel permutation, no two users share the full
/// mapping, and baselines are shifted per user. Intermediate values blend
/// linearly. `noise` is the noise standard deviation in channel scale units.
pub fn preset_cohort(n_users: usize, divergence: f64, noise: f64, seed: u64) -> Vec<UserProfile> {
    let d = divergence.clamp(0.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0xC0_407));
    let identity = [0usize, 1, 2, 3];
    let mut mappings: Vec<Vec<[usize; 4]>> = vec![vec![identity; 7]];
    while mappings.len() < n_users {
        let candidate: Vec<[usize; 4]> = (0..7)
            .map(|_| loop {
                let mut p = identity;
                p.shuffle(&mut rng);
                if p != identity {
                    break p;
                }
            })
            .collect();
        if !mappings.contains(&candidate) {
            mappings.push(candidate);
        }
    }
    let offsets: Vec<[f64; 7]> = (0..n_users)
        .map(|u| {
            std::array::from_fn(|_| {
                let z: f64 = rng.sample(rand_distr::StandardNormal);
                if u == 0 {
                    0.0
                } else {
                    z
                }
            })
        })
        .collect();

    (0..n_users)
        .map(|u| {
            let channels = Channel::ALL
                .iter()
                .map(|ch| {
                    let (base, scale) = CHANNEL_LEVELS[ch.index()];
                    // shared mapping rotates rows so channels disagree on
                    // which state is the strongest
                    let shared = |s: usize| (s + ch.index()) % 4;
                    let perm = mappings[u][ch.index()];
                    let responses = std::array::from_fn(|s| {
                        StateResponse::lerp(row(shared(s), scale), row(perm[shared(s)], scale), d)
                    });
                    ChannelProfile {
                        baseline: base + d * offsets[u][ch.index()] * scale,
                        noise_sd: noise * scale,
                        responses,
                    }
                })
                .collect();
            UserProfile { user_id: format!("user{}", u + 1), seed: derive_seed(seed, u as u64 + 1), channels }
        })
        .collect()
}

/// Single-user profile whose states differ only in the amplitude of a fast
/// oscillation around a fixed level. Pairwise sample distances separate the
/// states; angular encodings of stationary windows largely do not.
pub fn distance_structured_profile(noise: f64, seed: u64) -> UserProfile {
    let channels = Channel::ALL
        .iter()
        .map(|ch| {
            let (base, scale) = CHANNEL_LEVELS[ch.index()];
            // HR is sampled at 1 Hz and cannot carry the oscillation
            let (freq, informative) = if *ch == Channel::Hr { (0.2, false) } else { (0.8, true) };
            let responses = std::array::from_fn(|s| StateResponse {
                amplitude: if informative { AMPLITUDE[s] * scale } else { scale },
                frequency: freq,
                drift: 0.0,
            });
            ChannelProfile { baseline: base, noise_sd: noise * scale, responses }
        })
        .collect();
    UserProfile { user_id: "user1".into(), seed: derive_seed(seed, 0xD157), channels }
}

/// Session of `windows` windows from [`distance_structured_profile`] with
/// equal state shares.
pub fn distance_structured_session(noise: f64, windows: usize, seed: u64) -> Result<MultimodalRecord> {
    let p = distance_structured_profile(noise, seed);
    let duration = 30.0 + 3.0 * windows.saturating_sub(1) as f64;
    let schedule = StateSchedule::preset(duration, [0.25; 4], 150.0, p.seed);
    generate_session(&p, duration, &schedule)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub start_s: f64,
    pub end_s: f64,
    pub state: Awareness,
}

/// Consecutive labeled segments covering a session.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateSchedule {
    pub segments: Vec<Segment>,
}

impl StateSchedule {
    pub fn single(state: Awareness, duration_s: f64) -> Self {
        StateSchedule { segments: vec![Segment { start_s: 0.0, end_s: duration_s, state }] }
    }

    /// Splits `duration_s` (rounded to whole seconds) between the states in
    /// proportion to `weights`, cuts each state's share into about
    /// `n_segments * weight` pieces and shuffles the pieces.
    pub fn from_weights(duration_s: f64, weights: [f64; 4], n_segments: usize, seed: u64) -> Self {
        let total = duration_s.round().max(0.0) as u64;
        let wsum: f64 = weights.iter().sum();
        let share: Vec<f64> = weights.iter().map(|w| total as f64 * w / wsum).collect();
        let mut secs: Vec<u64> = share.iter().map(|s| s.floor() as u64).collect();
        let mut order: Vec<usize> = (0..4).collect();
        order.sort_by(|&a, &b| (share[b] - share[b].floor()).total_cmp(&(share[a] - share[a].floor())));
        let mut left = total - secs.iter().sum::<u64>();
        for &i in order.iter().cycle() {
            if left == 0 {
                break;
            }
            secs[i] += 1;
            left -= 1;
        }
        let mut pieces = Vec::new();
        for (s, &len) in secs.iter().enumerate() {
            if len == 0 {
                continue;
            }
            let k = ((n_segments as f64 * weights[s] / wsum).round() as u64).clamp(1, len);
            for p in 0..k {
                pieces.push((Awareness::ALL[s], len / k + u64::from(p < len % k)));
            }
        }
        pieces.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut t = 0u64;
        let segments = pieces
            .into_iter()
            .map(|(state, len)| {
                let seg = Segment { start_s: t as f64, end_s: (t + len) as f64, state };
                t += len;
                seg
            })
            .collect();
        StateSchedule { segments }
    }

    /// Schedule for a cohort session: at most 16 segments, at least one per
    /// state, each about `min_segment_s` seconds or longer.
    pub fn preset(duration_s: f64, weights: [f64; 4], min_segment_s: f64, seed: u64) -> Self {
        let n = ((duration_s / min_segment_s).floor() as usize).clamp(4, 16);
        Self::from_weights(duration_s, weights, n, seed)
    }

    /// Checks that the segments tile `[0, duration_s)` without gaps.
    pub fn validate(&self, duration_s: f64) -> Result<()> {
        let mut t = 0.0;
        for s in &self.segments {
            if s.start_s > t + 1e-9 || s.end_s <= s.start_s {
                return Err(Error::ScheduleGap { from: t, to: s.start_s });
            }
            t = t.max(s.end_s);
        }
        if t + 1e-9 < duration_s {
            return Err(Error::ScheduleGap { from: t, to: duration_s });
        }
        Ok(())
    }

    /// Seconds scheduled per state, clipped to `duration_s`.
    pub fn state_durations(&self, duration_s: f64) -> [f64; 4] {
        let mut d = [0.0; 4];
        for s in &self.segments {
            d[s.state.index()] += (s.end_s.min(duration_s) - s.start_s).max(0.0);
        }
        d
    }

    fn segment_at(&self, t: f64, hint: &mut usize) -> &Segment {
        while *hint + 1 < self.segments.len() && t >= self.segments[*hint].end_s {
            *hint += 1;
        }
        &self.segments[*hint]
    }
}

/// Generates one session at native channel rates with a 4 Hz label track.
/// The output depends only on the arguments.
pub fn generate_session(profile: &UserProfile, duration_s: f64, schedule: &StateSchedule) -> Result<MultimodalRecord> {
    if !(duration_s >= MIN_DURATION_S) {
        return Err(Error::InvalidSpec(format!(
            "session duration {duration_s} s is shorter than {MIN_DURATION_S} s"
        )));
    }
    if profile.channels.len() != Channel::ALL.len() {
        return Err(Error::ChannelCountError(profile.channels.len()));
    }
    schedule.validate(duration_s)?;

    let signals = Channel::ALL
        .par_iter()
        .map(|&ch| {
            let p = &profile.channels[ch.index()];
            let fs = ch.native_rate();
            let n = (duration_s * fs).round() as usize;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(profile.seed, ch.index() as u64 + 1));
            let noise = (p.noise_sd > 0.0).then(|| Normal::new(0.0, p.noise_sd).expect("finite sd"));
            let mut hint = 0;
            let values = (0..n)
                .map(|i| {
                    let t = i as f64 / fs;
                    let seg = schedule.segment_at(t, &mut hint);
                    let r = &p.responses[seg.state.index()];
                    let mut v = p.baseline
                        + r.amplitude * (std::f64::consts::TAU * r.frequency * t).sin()
                        + r.drift * ((t - seg.start_s) / DRIFT_TAU_S).tanh();
                    if let Some(d) = &noise {
                        v += d.sample(&mut rng);
                    }
                    v
                })
                .collect();
            Signal::new(ch, 0.0, fs, values)
        })
        .collect::<Result<Vec<_>>>()?;

    let n_labels = (duration_s * LABEL_FS).round() as usize;
    let mut hint = 0;
    let labels = (0..n_labels)
        .map(|k| schedule.segment_at(k as f64 / LABEL_FS, &mut hint).state)
        .collect();
    MultimodalRecord::new(profile.user_id.clone(), format!("{}_s01", profile.user_id), signals, labels, LABEL_FS)
}

/// Writes the session in the CSV directory format read by
/// [`crate::signals::load_session`].
pub fn write_session(rec: &MultimodalRecord, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body).map_err(|e| Error::io(&path, e))
    };
    for s in rec.signals() {
        let mut body = String::with_capacity(s.len() * 24);
        body.push_str("t,value\n");
        for (i, v) in s.values.iter().enumerate() {
            let _ = writeln!(body, "{:.6},{}", s.t0 + i as f64 / s.fs, v);
        }
        write(&format!("{}.csv", s.channel.name()), body)?;
    }
    let mut body = String::with_capacity(rec.labels.len() * 16);
    body.push_str("t,label\n");
    for (i, l) in rec.labels.iter().enumerate() {
        let _ = writeln!(body, "{:.6},{}", i as f64 / rec.label_fs, l.name());
    }
    write("labels.csv", body)?;
    write("session.meta", format!("user_id={}\nsession_id={}\n", rec.user_id, rec.session_id))
}

/// Parameters of a generated cohort.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub n_users: usize,
    pub divergence: f64,
    /// Noise standard deviation in channel scale units.
    pub noise: f64,
    /// Fraction of the reference per-user window counts to generate.
    pub scale: f64,
    /// Lower bound on windows per user after scaling.
    pub min_windows: usize,
    /// Fixed session length overriding `scale` when set.
    pub duration_s: Option<f64>,
    pub min_segment_s: f64,
    pub seed: u64,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            n_users: 4,
            divergence: 1.0,
            noise: 0.35,
            scale: 0.25,
            min_windows: 400,
            duration_s: None,
            min_segment_s: 150.0,
            seed: 7,
        }
    }
}

impl CohortConfig {
    /// Session length of user `u` (zero-based) in whole seconds, chosen so
    /// that 30 s windows at a 3 s step give the scaled reference count.
    pub fn duration_for(&self, u: usize) -> f64 {
        if let Some(d) = self.duration_s {
            return d;
        }
        let windows = ((REFERENCE_WINDOWS[u % 4] as f64 * self.scale).round() as usize).max(self.min_windows).max(1);
        30.0 + 3.0 * (windows - 1) as f64
    }

    /// Class proportions of user `u`, taken from the reference counts.
    pub fn weights_for(&self, u: usize) -> [f64; 4] {
        let c = REFERENCE_CLASS_COUNTS[u % 4];
        let total: usize = c.iter().sum();
        std::array::from_fn(|i| c[i] as f64 / total as f64)
    }

    pub fn schedule_for(&self, u: usize, profile: &UserProfile) -> StateSchedule {
        StateSchedule::preset(self.duration_for(u), self.weights_for(u), self.min_segment_s, profile.seed)
    }
}

/// Profiles and sessions of a whole cohort, generated in parallel.
pub fn generate_cohort(cfg: &CohortConfig) -> Result<Vec<(UserProfile, MultimodalRecord)>> {
    if cfg.n_users == 0 {
        return Err(Error::InvalidSpec("n_users must be at least 1".into()));
    }
    preset_cohort(cfg.n_users, cfg.divergence, cfg.noise, cfg.seed)
        .into_par_iter()
        .enumerate()
        .map(|(u, p)| {
            let rec = generate_session(&p, cfg.duration_for(u), &cfg.schedule_for(u, &p))?;
            Ok((p, rec))
        })
        .collect()
}

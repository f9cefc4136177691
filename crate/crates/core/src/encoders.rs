//! Window-to-image encoders: recurrence plots, Gramian angular fields and
//! Markov transition fields.
//!
//! Every encoder maps an `n`-sample window with values in `[0, 1]` to an
//! `n x n` matrix whose entries are also in `[0, 1]`.

use std::fmt;
use std::str::FromStr;

use image::{GrayImage, Luma};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::signals::{Awareness, Channel, ScaledWindow};

/// Dense row-major square matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SquareMatrix<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Scalar> SquareMatrix<T> {
    pub fn zeros(n: usize) -> Self {
        SquareMatrix { n, data: vec![T::zero(); n * n] }
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        SquareMatrix { n, data }
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::InvalidImage("rows do not form a square".into()));
        }
        Ok(SquareMatrix { n, data: rows.concat() })
    }

    pub fn side(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        SquareMatrix { n: self.n, data: self.data.iter().map(|&v| f(v)).collect() }
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        self.data
            .iter()
            .zip(&other.data)
            .fold(T::zero(), |m, (&a, &b)| m.max((a - b).abs()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EncoderKind {
    RpBinary,
    RpContinuous,
    Gasf,
    Gadf,
    Mtf,
}

impl EncoderKind {
    pub fn name(self) -> &'static str {
        match self {
            EncoderKind::RpBinary => "rp-binary",
            EncoderKind::RpContinuous => "rp-continuous",
            EncoderKind::Gasf => "gasf",
            EncoderKind::Gadf => "gadf",
            EncoderKind::Mtf => "mtf",
        }
    }
}

impl FromStr for EncoderKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "rp-binary" => Ok(EncoderKind::RpBinary),
            "rp-continuous" | "rp" => Ok(EncoderKind::RpContinuous),
            "gasf" => Ok(EncoderKind::Gasf),
            "gadf" => Ok(EncoderKind::Gadf),
            "mtf" => Ok(EncoderKind::Mtf),
            _ => Err(format!("unknown encoder '{s}'")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderSpec {
    pub kind: EncoderKind,
    /// Recurrence threshold, binary RP only.
    pub rp_threshold: f64,
    /// Number of quantile states, MTF only.
    pub mtf_states: usize,
}

impl Default for EncoderSpec {
    fn default() -> Self {
        EncoderSpec { kind: EncoderKind::RpContinuous, rp_threshold: 0.5, mtf_states: 4 }
    }
}

impl EncoderSpec {
    pub fn new(kind: EncoderKind) -> Self {
        EncoderSpec { kind, ..Default::default() }
    }

    pub fn mtf(states: usize) -> Self {
        EncoderSpec { kind: EncoderKind::Mtf, mtf_states: states, ..Default::default() }
    }

    /// The six configurations compared in the encoder ranking.
    pub fn comparison_set() -> [EncoderSpec; 6] {
        [
            EncoderSpec::new(EncoderKind::RpContinuous),
            EncoderSpec::new(EncoderKind::RpBinary),
            EncoderSpec::new(EncoderKind::Gasf),
            EncoderSpec::new(EncoderKind::Gadf),
            EncoderSpec::mtf(4),
            EncoderSpec::mtf(128),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.mtf_states < 1 {
            return Err(Error::InvalidSpec("mtf_states must be at least 1".into()));
        }
        if !(self.rp_threshold > 0.0) {
            return Err(Error::InvalidSpec("rp_threshold must be positive".into()));
        }
        Ok(())
    }

    /// Human-readable label used in report tables.
    pub fn label(&self) -> String {
        match self.kind {
            EncoderKind::RpContinuous => "Continuous RP".into(),
            EncoderKind::RpBinary => "Binary RP".into(),
            EncoderKind::Gasf => "GASF".into(),
            EncoderKind::Gadf => "GADF".into(),
            EncoderKind::Mtf => format!("MTF-{}", self.mtf_states),
        }
    }
}

impl fmt::Display for EncoderSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.label())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedWindow<T> {
    pub matrix: SquareMatrix<T>,
    pub encoder: EncoderSpec,
    pub channel: Channel,
    pub start_s: f64,
    pub label: Awareness,
}

/// `M(i, j) = |x_i - x_j|`.
pub fn rp_continuous<T: Scalar>(x: &[T]) -> SquareMatrix<T> {
    SquareMatrix::from_fn(x.len(), |i, j| (x[i] - x[j]).abs())
}

/// `M(i, j) = 1` when `|x_i - x_j| <= threshold`, else 0.
pub fn rp_binary<T: Scalar>(x: &[T], threshold: T) -> SquareMatrix<T> {
    SquareMatrix::from_fn(x.len(), |i, j| {
        if threshold - (x[i] - x[j]).abs() >= T::zero() {
            T::one()
        } else {
            T::zero()
        }
    })
}

fn unit_interval<T: Scalar>(x: &[T]) -> Result<Vec<T>> {
    let tol = T::of(1e-9);
    x.iter()
        .enumerate()
        .map(|(index, &v)| {
            if !(v >= -tol && v <= T::one() + tol) {
                Err(Error::DomainError { index, value: v.as_f64() })
            } else {
                Ok(v.max(T::zero()).min(T::one()))
            }
        })
        .collect()
}

/// `cos(phi_i + phi_j)` with `phi = arccos(x)`, in `[-1, 1]`.
pub fn gasf_raw<T: Scalar>(x: &[T]) -> Result<SquareMatrix<T>> {
    let c = unit_interval(x)?;
    let s: Vec<T> = c.iter().map(|&v| (T::one() - v * v).max(T::zero()).sqrt()).collect();
    Ok(SquareMatrix::from_fn(c.len(), |i, j| c[i] * c[j] - s[i] * s[j]))
}

/// `sin(phi_i - phi_j)` with `phi = arccos(x)`, in `[-1, 1]`.
pub fn gadf_raw<T: Scalar>(x: &[T]) -> Result<SquareMatrix<T>> {
    let c = unit_interval(x)?;
    let s: Vec<T> = c.iter().map(|&v| (T::one() - v * v).max(T::zero()).sqrt()).collect();
    Ok(SquareMatrix::from_fn(c.len(), |i, j| s[i] * c[j] - c[i] * s[j]))
}

fn to_unit<T: Scalar>(m: SquareMatrix<T>) -> SquareMatrix<T> {
    let half = T::of(0.5);
    m.map(|v| ((v + T::one()) * half).max(T::zero()).min(T::one()))
}

pub fn gasf<T: Scalar>(x: &[T]) -> Result<SquareMatrix<T>> {
    gasf_raw(x).map(to_unit)
}

pub fn gadf<T: Scalar>(x: &[T]) -> Result<SquareMatrix<T>> {
    gadf_raw(x).map(to_unit)
}

/// Quantile discretization of a window.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileStates {
    /// State of each sample, in `0..n_states`.
    pub states: Vec<usize>,
    pub n_states: usize,
}

/// Bins `x` at its `k / q` quantiles. Edges that coincide or sit at the
/// window maximum are dropped, which lowers the effective state count.
pub fn quantile_states<T: Scalar>(x: &[T], q: usize) -> QuantileStates {
    let mut sorted: Vec<f64> = x.iter().map(|v| v.as_f64()).collect();
    sorted.sort_by(f64::total_cmp);
    let max = sorted[sorted.len() - 1];
    let mut edges: Vec<f64> = Vec::with_capacity(q.saturating_sub(1));
    for k in 1..q {
        let e = crate::signals::percentile(&sorted, 100.0 * k as f64 / q as f64);
        if e < max && edges.last().is_none_or(|&last| e > last) {
            edges.push(e);
        }
    }
    let states = x
        .iter()
        .map(|v| {
            let v = v.as_f64();
            edges.partition_point(|&e| v > e)
        })
        .collect();
    QuantileStates { states, n_states: edges.len() + 1 }
}

/// First-order transition matrix over the quantized states, row-major
/// `n_states x n_states`. Rows without outgoing transitions are uniform.
pub fn transition_matrix<T: Scalar>(q: &QuantileStates) -> Vec<T> {
    let k = q.n_states;
    let mut counts = vec![0usize; k * k];
    for pair in q.states.windows(2) {
        counts[pair[0] * k + pair[1]] += 1;
    }
    let mut w = vec![T::zero(); k * k];
    for a in 0..k {
        let row = &counts[a * k..(a + 1) * k];
        let total: usize = row.iter().sum();
        for b in 0..k {
            w[a * k + b] = if total == 0 {
                T::one() / T::of(k as f64)
            } else {
                T::of(row[b] as f64) / T::of(total as f64)
            };
        }
    }
    w
}

/// `M(i, j) = W(q(x_i), q(x_j))`.
pub fn mtf<T: Scalar>(x: &[T], states: usize) -> Result<SquareMatrix<T>> {
    if x.len() < 2 {
        return Err(Error::TooShort(x.len()));
    }
    let q = quantile_states(x, states.max(1));
    let w = transition_matrix::<T>(&q);
    let k = q.n_states;
    Ok(SquareMatrix::from_fn(x.len(), |i, j| w[q.states[i] * k + q.states[j]]))
}

/// Encodes raw window values with the configured encoder.
pub fn encode_values<T: Scalar>(x: &[T], spec: &EncoderSpec) -> Result<SquareMatrix<T>> {
    match spec.kind {
        EncoderKind::RpContinuous => Ok(rp_continuous(x)),
        EncoderKind::RpBinary => Ok(rp_binary(x, T::of(spec.rp_threshold))),
        EncoderKind::Gasf => gasf(x),
        EncoderKind::Gadf => gadf(x),
        EncoderKind::Mtf => mtf(x, spec.mtf_states),
    }
}

pub fn encode<T: Scalar>(w: &ScaledWindow, spec: &EncoderSpec) -> Result<EncodedWindow<T>> {
    let x: Vec<T> = w.values.iter().map(|&v| T::of(v)).collect();
    Ok(EncodedWindow {
        matrix: encode_values(&x, spec)?,
        encoder: *spec,
        channel: w.channel,
        start_s: w.start_s,
        label: w.label,
    })
}

/// `round(v * 255)` with halves rounded up.
pub fn quantize<T: Scalar>(v: T) -> u8 {
    let scaled = v.as_f64().clamp(0.0, 1.0) * 255.0;
    (scaled + 0.5).floor() as u8
}

/// 8-bit grayscale rendering, row-major with row 0 at the top.
pub fn to_image<T: Scalar>(m: &SquareMatrix<T>) -> GrayImage {
    let n = m.side() as u32;
    GrayImage::from_fn(n, n, |x, y| Luma([quantize(m.get(y as usize, x as usize))]))
}

/// Inverse of [`to_image`]: pixels mapped back to `p / 255`.
pub fn from_image<T: Scalar>(img: &GrayImage) -> Result<SquareMatrix<T>> {
    let (w, h) = img.dimensions();
    if w != h {
        return Err(Error::InvalidImage(format!("{w}x{h} image is not square")));
    }
    let scale = T::of(255.0);
    Ok(SquareMatrix::from_fn(w as usize, |i, j| {
        T::of(img.get_pixel(j as u32, i as u32)[0] as f64) / scale
    }))
}

/// Round trip through 8-bit quantization.
pub fn quantized<T: Scalar>(m: &SquareMatrix<T>) -> SquareMatrix<T> {
    let scale = T::of(255.0);
    m.map(|v| T::of(quantize(v) as f64) / scale)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(m: &SquareMatrix<f64>) -> Vec<Vec<f64>> {
        (0..m.side()).map(|i| (0..m.side()).map(|j| m.get(i, j)).collect()).collect()
    }

    fn close(a: &SquareMatrix<f64>, b: &[Vec<f64>], tol: f64) -> bool {
        let b = SquareMatrix::from_rows(b).unwrap();
        a.max_abs_diff(&b) <= tol
    }

    #[test]
    fn rp_continuous_two_points() {
        assert_eq!(rows(&rp_continuous(&[0.0, 1.0])), vec![vec![0.0, 1.0], vec![1.0, 0.0]]);
        assert!(rp_continuous(&[0.3; 5]).as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rp_binary_hand_example() {
        let m = rp_binary(&[0.0, 0.4, 1.0], 0.5);
        assert_eq!(rows(&m), vec![vec![1.0, 1.0, 0.0], vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]);
        // boundary counts as recurrent
        let m = rp_binary(&[0.0, 0.5], 0.5);
        assert_eq!(m.get(0, 1), 1.0);
        assert!(rp_binary(&[0.0, 0.3, 1.0], 1.0).as_slice().iter().all(|&v| v == 1.0));
    }

    #[test]
    fn gaf_hand_examples() {
        assert!(close(&gasf_raw(&[0.0, 1.0]).unwrap(), &[vec![-1.0, 0.0], vec![0.0, 1.0]], 1e-12));
        assert!(close(&gasf(&[0.0, 1.0]).unwrap(), &[vec![0.0, 0.5], vec![0.5, 1.0]], 1e-12));
        assert!(close(&gadf_raw(&[0.0, 1.0]).unwrap(), &[vec![0.0, 1.0], vec![-1.0, 0.0]], 1e-12));
        assert!(close(&gadf(&[0.0, 1.0]).unwrap(), &[vec![0.5, 1.0], vec![0.0, 0.5]], 1e-12));
        let g = gadf::<f64>(&[0.1, 0.7, 0.35]).unwrap();
        assert!((0..3).all(|i| (g.get(i, i) - 0.5).abs() < 1e-15));
    }

    #[test]
    fn gaf_domain() {
        assert!(matches!(gasf(&[0.0, 1.1]), Err(Error::DomainError { index: 1, .. })));
        assert!(matches!(gadf(&[-0.01, 0.5]), Err(Error::DomainError { index: 0, .. })));
        assert!(gasf(&[0.0, 1.0 + 1e-10]).is_ok());
    }

    #[test]
    fn mtf_checkerboard() {
        let x = [0.0, 1.0, 0.0, 1.0];
        let q = quantile_states(&x, 2);
        assert_eq!(q.states, vec![0, 1, 0, 1]);
        assert_eq!(transition_matrix::<f64>(&q), vec![0.0, 1.0, 1.0, 0.0]);
        let m = mtf(&x, 2).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                let want = if q.states[i] != q.states[j] { 1.0 } else { 0.0 };
                assert_eq!(m.get(i, j), want);
            }
        }
    }

    #[test]
    fn mtf_ramp() {
        let x = [0.0, 1.0 / 3.0, 2.0 / 3.0, 1.0];
        let q = quantile_states(&x, 2);
        assert_eq!(q.states, vec![0, 0, 1, 1]);
        assert_eq!(transition_matrix::<f64>(&q), vec![0.5, 0.5, 0.0, 1.0]);
        let m = mtf::<f64>(&x, 2).unwrap();
        assert!((m.get(0, 2) - 0.5).abs() < 1e-12);
        assert!((m.get(2, 2) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mtf_constant_collapses() {
        for q in [1, 4, 128] {
            let x = [0.4; 10];
            let states = quantile_states(&x, q);
            assert_eq!(states.n_states, 1);
            assert!(mtf(&x, q).unwrap().as_slice().iter().all(|&v| v == 1.0));
        }
        assert!(matches!(mtf(&[0.5], 4), Err(Error::TooShort(1))));
    }

    #[test]
    fn mtf_empty_rows_are_uniform() {
        // Two distinct values with four requested states: interior bins stay
        // empty and their rows fall back to 1/Q_eff.
        let x = [0.0, 1.0];
        let q = quantile_states(&x, 4);
        assert_eq!(q.n_states, 4);
        let w = transition_matrix::<f64>(&q);
        assert_eq!(&w[4..8], &[0.25; 4]);
        for row in w.chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn image_quantization() {
        assert_eq!(quantize(0.0f64), 0);
        assert_eq!(quantize(1.0f64), 255);
        assert_eq!(quantize(0.5f64), 128);
        let m = SquareMatrix::from_fn(7, |i, j| ((i * 7 + j) as f64 / 48.0).sin().abs());
        let back: SquareMatrix<f64> = from_image(&to_image(&m)).unwrap();
        assert!(m.max_abs_diff(&back) <= 1.0 / 510.0 + 1e-12);
        assert_eq!(back, quantized(&m));
    }

    #[test]
    fn image_orientation() {
        let m = SquareMatrix::from_rows(&[vec![0.0, 1.0], vec![0.0, 0.0]]).unwrap();
        let img = to_image(&m);
        // top row is matrix row 0; column 1 of that row is bright
        assert_eq!(img.get_pixel(1, 0)[0], 255);
        assert_eq!(img.get_pixel(0, 1)[0], 0);
    }

    #[test]
    fn generic_over_f32() {
        let m: SquareMatrix<f32> = rp_continuous(&[0.0f32, 0.25, 1.0]);
        assert_eq!(m.get(0, 2), 1.0);
        let g = gasf(&[0.0f32, 1.0]).unwrap();
        assert!((g.get(0, 1) - 0.5).abs() < 1e-6);
    }
}

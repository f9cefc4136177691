//! Versioned binary checkpoint.
//!
//! ```text
//! "PMLP1"  u8 scalar width (4 | 8)
//! u32 layer count, then (u32 inputs, u32 outputs) per layer
//! f64 lr, f64 weight_decay, u32 max_epochs, u32 batch_size, u64 seed,
//! f64 beta1, f64 beta2, f64 eps
//! per layer: weights then bias, scalar width each
//! u8 has_pca; if 1: u32 dim, u32 k, mean, k component rows,
//!   k explained variances, total variance
//! u32 epoch count, then (u32 epoch, f64 loss, f64 val_f1, f64 val_acc)
//! u32 best epoch
//! ```
//! All integers and floats are little-endian.

use std::fs;
use std::path::Path;

use super::{Dense, EpochStats, MlpModel, TrainConfig};
use crate::embedding::PcaModel;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const CHECKPOINT_MAGIC: &[u8; 5] = b"PMLP1";

/// PCA basis, classifier weights and training metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainedModel<T> {
    pub mlp: MlpModel<T>,
    pub config: TrainConfig,
    pub pca: Option<PcaModel<T>>,
    pub history: Vec<EpochStats>,
    pub best_epoch: usize,
}

struct Writer(Vec<u8>);

impl Writer {
    fn u8(&mut self, v: u8) {
        self.0.push(v);
    }
    fn u32(&mut self, v: usize) {
        self.0.extend_from_slice(&(v as u32).to_le_bytes());
    }
    fn u64(&mut self, v: u64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn f64(&mut self, v: f64) {
        self.0.extend_from_slice(&v.to_le_bytes());
    }
    fn scalars<T: Scalar>(&mut self, vs: &[T]) {
        for &v in vs {
            v.write_le(&mut self.0);
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> std::result::Result<&'a [u8], String> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| format!("truncated checkpoint at byte {}", self.pos))?;
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> std::result::Result<u8, String> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> std::result::Result<usize, String> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize)
    }
    fn u64(&mut self) -> std::result::Result<u64, String> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> std::result::Result<f64, String> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn scalars<T: Scalar>(&mut self, n: usize) -> std::result::Result<Vec<T>, String> {
        let w = T::WIDTH as usize;
        Ok(self.take(n * w)?.chunks_exact(w).map(T::read_le).collect())
    }
}

impl<T: Scalar> TrainedModel<T> {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer(CHECKPOINT_MAGIC.to_vec());
        w.u8(T::WIDTH);
        w.u32(self.mlp.layers.len());
        for l in &self.mlp.layers {
            w.u32(l.inputs);
            w.u32(l.outputs);
        }
        let c = &self.config;
        w.f64(c.lr);
        w.f64(c.weight_decay);
        w.u32(c.max_epochs);
        w.u32(c.batch_size);
        w.u64(c.seed);
        w.f64(c.beta1);
        w.f64(c.beta2);
        w.f64(c.eps);
        for l in &self.mlp.layers {
            w.scalars(&l.weights);
            w.scalars(&l.bias);
        }
        match &self.pca {
            None => w.u8(0),
            Some(p) => {
                w.u8(1);
                w.u32(p.dim());
                w.u32(p.k());
                w.scalars(&p.mean);
                for row in &p.components {
                    w.scalars(row);
                }
                w.scalars(&p.explained_variance);
                w.scalars(&[p.total_variance]);
            }
        }
        w.u32(self.history.len());
        for e in &self.history {
            w.u32(e.epoch);
            w.f64(e.train_loss);
            w.f64(e.val_f1);
            w.f64(e.val_accuracy);
        }
        w.u32(self.best_epoch);
        w.0
    }

    pub fn from_bytes(bytes: &[u8]) -> std::result::Result<Self, String> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(5)? != CHECKPOINT_MAGIC {
            return Err("not a PMLP1 checkpoint".into());
        }
        let width = r.u8()?;
        if width != T::WIDTH {
            return Err(format!("checkpoint stores {width}-byte scalars, expected {}", T::WIDTH));
        }
        let n_layers = r.u32()?;
        let mut dims = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            dims.push((r.u32()?, r.u32()?));
        }
        let lr = r.f64()?;
        let weight_decay = r.f64()?;
        let max_epochs = r.u32()?;
        let batch_size = r.u32()?;
        let seed = r.u64()?;
        let beta1 = r.f64()?;
        let beta2 = r.f64()?;
        let eps = r.f64()?;
        let mut layers = Vec::with_capacity(n_layers);
        for &(inputs, outputs) in &dims {
            let weights = r.scalars(inputs * outputs)?;
            let bias = r.scalars(outputs)?;
            layers.push(Dense { inputs, outputs, weights, bias });
        }
        let hidden = match dims.as_slice() {
            [(_, h1), (_, h2), _] => [*h1, *h2],
            _ => return Err(format!("expected 3 layers, found {n_layers}")),
        };
        let pca = match r.u8()? {
            0 => None,
            1 => {
                let dim = r.u32()?;
                let k = r.u32()?;
                let mean = r.scalars(dim)?;
                let components = (0..k).map(|_| r.scalars(dim)).collect::<std::result::Result<_, _>>()?;
                let explained_variance = r.scalars(k)?;
                let total_variance = r.scalars::<T>(1)?[0];
                Some(PcaModel { mean, components, explained_variance, total_variance })
            }
            f => return Err(format!("bad PCA flag {f}")),
        };
        let n_hist = r.u32()?;
        let mut history = Vec::with_capacity(n_hist);
        for _ in 0..n_hist {
            history.push(EpochStats {
                epoch: r.u32()?,
                train_loss: r.f64()?,
                val_f1: r.f64()?,
                val_accuracy: r.f64()?,
            });
        }
        let best_epoch = r.u32()?;
        if r.pos != bytes.len() {
            return Err(format!("{} trailing bytes", bytes.len() - r.pos));
        }
        Ok(TrainedModel {
            mlp: MlpModel { layers },
            config: TrainConfig { lr, weight_decay, max_epochs, batch_size, seed, beta1, beta2, eps, hidden },
            pca,
            history,
            best_epoch,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes).map_err(|m| Error::format(path, m))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::classifier::MlpShape;
    use rand::SeedableRng;

    fn model<T: Scalar>() -> TrainedModel<T> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mlp = MlpModel::he_init(MlpShape::new(3), &mut rng);
        let pca = PcaModel {
            mean: vec![T::of(0.1), T::of(-0.2), T::of(1.0 / 3.0), T::zero()],
            components: vec![vec![T::one(), T::zero(), T::zero(), T::zero()]; 3],
            explained_variance: vec![T::of(0.7), T::of(0.2), T::of(0.1)],
            total_variance: T::of(1.0),
        };
        TrainedModel {
            mlp,
            config: TrainConfig { seed: 99, ..Default::default() },
            pca: Some(pca),
            history: vec![EpochStats { epoch: 1, train_loss: 1.3, val_f1: 0.4, val_accuracy: 0.5 }],
            best_epoch: 1,
        }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let m = model::<f64>();
        let bytes = m.to_bytes();
        let back = TrainedModel::<f64>::from_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_bytes(), bytes);

        let m32 = model::<f32>();
        assert_eq!(TrainedModel::<f32>::from_bytes(&m32.to_bytes()).unwrap(), m32);
    }

    #[test]
    fn rejects_width_mismatch_and_garbage() {
        let bytes = model::<f64>().to_bytes();
        assert!(TrainedModel::<f32>::from_bytes(&bytes).is_err());
        assert!(TrainedModel::<f64>::from_bytes(&bytes[..bytes.len() - 2]).is_err());
        assert!(TrainedModel::<f64>::from_bytes(b"PMLP0").is_err());
    }
}

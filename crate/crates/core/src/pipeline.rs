//! In-memory path from a session record to labeled feature vectors, and the
//! same step for a dataset already written to disk.

use std::path::Path;

use rayon::prelude::*;

use crate::dataset::{assign_split, load_window, DatasetManifest, SplitFractions, SplitMode};
use crate::embedding::{extract_multimodal, FeatureExtractor, FeatureRecord};
use crate::encoders::{encode, quantized, EncoderSpec};
use crate::error::Result;
use crate::scalar::Scalar;
use crate::signals::{synchronize, windows, MultimodalRecord, WindowSpec};

/// Everything needed to turn a record into split feature records.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PipelineConfig {
    pub window: WindowSpec,
    pub encoder: EncoderSpec,
    pub split_seed: u64,
    pub split_mode: SplitMode,
    pub fractions: SplitFractions,
    /// Round images to 8 bits, as the on-disk dataset does.
    pub quantize: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: WindowSpec::default(),
            encoder: EncoderSpec::default(),
            split_seed: 0,
            split_mode: SplitMode::Random,
            fractions: SplitFractions::default(),
            quantize: true,
        }
    }
}

/// One user's feature records in window order.
#[derive(Clone, Debug, PartialEq)]
pub struct UserFeatures<T> {
    pub user_id: String,
    pub records: Vec<FeatureRecord<T>>,
}

impl<T> UserFeatures<T> {
    pub fn split(&self, split: crate::dataset::Split) -> Vec<&FeatureRecord<T>> {
        self.records.iter().filter(|r| r.split == split).collect()
    }
}

/// Synchronize, window, encode and embed one session.
pub fn featurize<T: Scalar>(
    rec: &MultimodalRecord,
    cfg: &PipelineConfig,
    ex: &dyn FeatureExtractor<T>,
) -> Result<UserFeatures<T>> {
    cfg.encoder.validate()?;
    cfg.fractions.validate()?;
    let synced;
    let rec = if rec.is_synchronized_at(cfg.window.fs) {
        rec
    } else {
        synced = synchronize(rec, cfg.window.fs)?;
        &synced
    };
    let groups = windows(rec, &cfg.window)?;
    let splits = assign_split(groups.len(), cfg.split_seed, &cfg.fractions, cfg.split_mode);
    let width = groups.len().to_string().len().max(4);
    let records = groups
        .par_iter()
        .zip(splits)
        .map(|(g, split)| {
            let window_id = format!("{:0width$}", g.index + 1);
            let stem = format!("{}/{}", rec.session_id, window_id);
            let images = g
                .channels
                .iter()
                .map(|w| {
                    let m = encode::<T>(w, &cfg.encoder)?.matrix;
                    Ok(if cfg.quantize { quantized(&m) } else { m })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FeatureRecord {
                concat: extract_multimodal(ex, &stem, &images)?,
                session_id: rec.session_id.clone(),
                window_id,
                label: g.label,
                split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UserFeatures { user_id: rec.user_id.clone(), records })
}

/// Embeds every window of a dataset written by [`crate::dataset::build`].
pub fn featurize_dataset<T: Scalar>(
    manifest: &DatasetManifest,
    root: &Path,
    ex: &dyn FeatureExtractor<T>,
) -> Result<UserFeatures<T>> {
    let records = manifest
        .entries
        .par_iter()
        .map(|e| {
            let w = load_window::<T>(e, root)?;
            Ok(FeatureRecord {
                concat: extract_multimodal(ex, &w.stem(), &w.images)?,
                session_id: w.session_id,
                window_id: w.window_id,
                label: w.label,
                split: w.split,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UserFeatures { user_id: manifest.user_id.clone(), records })
}

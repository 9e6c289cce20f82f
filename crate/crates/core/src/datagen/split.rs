//! Deterministic 60/20/20 dataset splits with a configurable fully-annotated
//! fraction inside the training pool.

use std::collections::HashSet;

use rand::seq::SliceRandom;

use super::ImageSample;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::stream;

/// Train/val/test partition. Validation and test samples carry full masks
/// only (their scribbles are stripped); the training pool is divided into a
/// fully-annotated and a weakly-annotated part.
#[derive(Clone, Debug)]
pub struct DatasetSplit<F> {
    pub train_full: Vec<ImageSample<F>>,
    pub train_weak: Vec<ImageSample<F>>,
    pub val: Vec<ImageSample<F>>,
    pub test: Vec<ImageSample<F>>,
    /// (full_fraction, weak_fraction) of the training pool.
    pub composition: (f64, f64),
}

impl<F> DatasetSplit<F> {
    pub fn total(&self) -> usize {
        self.train_full.len() + self.train_weak.len() + self.val.len() + self.test.len()
    }
}

/// Shuffle `samples` by `seed`, split 60/20/20 into train/val/test and mark
/// `ceil(full_fraction x |train|)` training samples as fully annotated.
pub fn make_split<F: Real>(
    samples: Vec<ImageSample<F>>,
    full_fraction: f64,
    seed: u64,
) -> Result<DatasetSplit<F>> {
    if !(full_fraction > 0.0 && full_fraction <= 1.0) {
        return Err(Error::arg(format!(
            "full_fraction must lie in (0, 1], got {full_fraction}"
        )));
    }
    let n = samples.len();
    let n_train = (n as f64 * 0.6).floor() as usize;
    let n_val = (n as f64 * 0.2).floor() as usize;
    if n_train == 0 {
        return Err(Error::arg(format!(
            "{n} samples are too few for a 60/20/20 split"
        )));
    }
    let mut ids = HashSet::new();
    for s in &samples {
        if !ids.insert(s.id.clone()) {
            return Err(Error::arg(format!("duplicate sample id {:?}", s.id)));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut stream(seed, "split", 0));

    let n_full = (full_fraction * n_train as f64).ceil() as usize;
    if n_full == 0 {
        return Err(Error::arg(
            "full_fraction yields zero fully-annotated samples",
        ));
    }

    let mut pool: Vec<Option<ImageSample<F>>> = samples.into_iter().map(Some).collect();
    let mut take = |idx: usize| pool[idx].take().expect("index used twice");

    let mut train_full = Vec::with_capacity(n_full);
    let mut train_weak = Vec::with_capacity(n_train - n_full);
    let mut val = Vec::with_capacity(n_val);
    let mut test = Vec::with_capacity(n - n_train - n_val);
    for (pos, &idx) in order.iter().enumerate() {
        let sample = take(idx);
        if pos < n_full {
            train_full.push(sample);
        } else if pos < n_train {
            train_weak.push(sample);
        } else if pos < n_train + n_val {
            val.push(strip_scribbles(sample));
        } else {
            test.push(strip_scribbles(sample));
        }
    }

    Ok(DatasetSplit {
        train_full,
        train_weak,
        val,
        test,
        composition: (full_fraction, 1.0 - full_fraction),
    })
}

fn strip_scribbles<F>(mut sample: ImageSample<F>) -> ImageSample<F> {
    sample.scribble_mask.fill(0);
    sample.indicator.fill(0);
    sample
}

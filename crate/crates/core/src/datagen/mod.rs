//! Synthetic anterior-segment-like scenes, scribble weak annotations derived
//! from pixel-perfect masks, and deterministic dataset splits.
//!
//! Everything here is a pure function of `(seed, parameters)`: identical
//! inputs produce bit-identical samples, which the determinism tests rely on.

mod scene;
mod scribble;
mod split;

pub use scene::{generate_scene, generate_scene_with, SceneConfig};
pub use scribble::{derive_scribble, derive_scribble_with, ScribbleParams};
pub use split::{make_split, DatasetSplit};

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::num::Real;

/// One image with its full mask, scribble mask and scribble indicator.
///
/// The scribble mask is meaningful only where `indicator == 1`; by
/// construction indicated pixels agree with the full mask.
#[derive(Clone, Debug)]
pub struct ImageSample<F> {
    pub id: String,
    /// (H, W, 3), values in [-1, 1].
    pub image: Array3<F>,
    /// (H, W), class indices with background = 0.
    pub full_mask: Array2<u8>,
    /// (H, W), class indices, valid where `indicator == 1`.
    pub scribble_mask: Array2<u8>,
    /// (H, W), 1 marks a weakly-annotated pixel.
    pub indicator: Array2<u8>,
}

impl<F: Real> ImageSample<F> {
    pub fn height(&self) -> usize {
        self.full_mask.dim().0
    }

    pub fn width(&self) -> usize {
        self.full_mask.dim().1
    }

    pub fn num_classes(&self) -> usize {
        usize::from(*self.full_mask.iter().max().unwrap_or(&0)) + 1
    }

    /// Check the structural invariants of a sample. Generated samples satisfy
    /// them by construction; externally ingested ones are checked at load.
    pub fn validate(&self, num_classes: usize) -> Result<()> {
        let (h, w) = self.full_mask.dim();
        if self.image.dim() != (h, w, 3) {
            return Err(Error::shape(format!(
                "sample {}: image {:?} vs mask ({h}, {w})",
                self.id,
                self.image.dim()
            )));
        }
        if self.scribble_mask.dim() != (h, w) || self.indicator.dim() != (h, w) {
            return Err(Error::shape(format!(
                "sample {}: scribble/indicator shape differs from mask",
                self.id
            )));
        }
        if self.image.iter().any(|v| {
            let x = v.as_f64();
            !(-1.0..=1.0).contains(&x) || x.is_nan()
        }) {
            return Err(Error::arg(format!(
                "sample {}: image values outside [-1, 1]",
                self.id
            )));
        }
        for r in 0..h {
            for c in 0..w {
                if usize::from(self.full_mask[(r, c)]) >= num_classes {
                    return Err(Error::arg(format!(
                        "sample {}: class index {} out of range",
                        self.id,
                        self.full_mask[(r, c)]
                    )));
                }
                if self.indicator[(r, c)] != 0
                    && self.scribble_mask[(r, c)] != self.full_mask[(r, c)]
                {
                    return Err(Error::arg(format!(
                        "sample {}: indicated pixel ({r},{c}) disagrees with full mask",
                        self.id
                    )));
                }
            }
        }
        // Every present foreground class must carry at least one scribble.
        for class in 1..num_classes as u8 {
            let present = self.full_mask.iter().any(|&v| v == class);
            if present {
                let scribbled = self
                    .indicator
                    .iter()
                    .zip(self.scribble_mask.iter())
                    .any(|(&ind, &s)| ind != 0 && s == class);
                if !scribbled {
                    return Err(Error::arg(format!(
                        "sample {}: class {class} present but unscribbled",
                        self.id
                    )));
                }
            }
        }
        Ok(())
    }
}

/// One-hot expansion of an integer label map to (H, W, C).
pub fn one_hot(mask: &Array2<u8>, num_classes: usize) -> Array3<u8> {
    let (h, w) = mask.dim();
    let mut y = Array3::zeros((h, w, num_classes));
    for r in 0..h {
        for c in 0..w {
            y[(r, c, usize::from(mask[(r, c)]))] = 1;
        }
    }
    y
}

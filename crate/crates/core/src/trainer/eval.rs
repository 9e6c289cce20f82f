//! Model evaluation: argmax segmentation against full masks, per-class Dice
//! and boundary distance with foreground macro-averages.

use ndarray::{Array2, Array4, Axis};

use super::report::EvalMetrics;
use crate::backbone::Backbone;
use crate::datagen::ImageSample;
use crate::error::{Error, Result};
use crate::metrics::{adb, class_mask, dice};
use crate::num::Real;

/// Argmax over the class axis of one probability map (H, W, C); ties resolve
/// to the lowest class index.
pub fn argmax_labels<F: Real>(probs: &ndarray::ArrayView3<F>) -> Array2<u8> {
    let (h, w, classes) = probs.dim();
    let mut labels = Array2::<u8>::zeros((h, w));
    for r in 0..h {
        for c in 0..w {
            let mut best = probs[(r, c, 0)];
            let mut best_class = 0u8;
            for ch in 1..classes {
                let v = probs[(r, c, ch)];
                if v > best {
                    best = v;
                    best_class = ch as u8;
                }
            }
            labels[(r, c)] = best_class;
        }
    }
    labels
}

/// Evaluate a model on fully-annotated samples: per-foreground-class Dice and
/// ADB averaged over samples, plus their macro-averages. Dropout is forced
/// off for every forward pass.
pub fn evaluate<F: Real>(
    net: &mut Backbone<F>,
    samples: &[ImageSample<F>],
    batch_size: usize,
    pixel_size: f64,
) -> Result<EvalMetrics> {
    if samples.is_empty() {
        return Err(Error::arg("evaluation needs at least one sample"));
    }
    let num_classes = net.spec().num_classes;
    let foreground = num_classes - 1;
    let mut dice_sum = vec![0.0f64; foreground];
    let mut adb_sum = vec![0.0f64; foreground];

    for chunk in samples.chunks(batch_size.max(1)) {
        let batch = stack_images(chunk);
        let probs = net.forward_deterministic(&batch)?;
        for (i, sample) in chunk.iter().enumerate() {
            let pred = argmax_labels(&probs.index_axis(Axis(0), i));
            for class in 1..num_classes as u8 {
                let pm = class_mask(&pred, class);
                let gm = class_mask(&sample.full_mask, class);
                dice_sum[usize::from(class) - 1] += dice(&pm, &gm)?;
                adb_sum[usize::from(class) - 1] += adb(&pm, &gm, pixel_size)?;
            }
        }
    }

    let n = samples.len() as f64;
    let dice_per_class: Vec<f64> = dice_sum.iter().map(|s| s / n).collect();
    let adb_per_class: Vec<f64> = adb_sum.iter().map(|s| s / n).collect();
    let avg_dice = dice_per_class.iter().sum::<f64>() / foreground as f64;
    let avg_adb = adb_per_class.iter().sum::<f64>() / foreground as f64;
    Ok(EvalMetrics {
        dice_per_class,
        adb_per_class,
        avg_dice,
        avg_adb,
    })
}

/// Stack samples into a (B, H, W, 3) batch.
pub fn stack_images<F: Real>(samples: &[ImageSample<F>]) -> Array4<F> {
    let (h, w, c) = samples[0].image.dim();
    let mut batch = Array4::<F>::zeros((samples.len(), h, w, c));
    for (i, s) in samples.iter().enumerate() {
        batch.index_axis_mut(Axis(0), i).assign(&s.image);
    }
    batch
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;

    #[test]
    fn argmax_prefers_lowest_class_on_ties() {
        let probs = Array3::from_shape_vec((1, 2, 2), vec![0.5f64, 0.5, 0.2, 0.8]).unwrap();
        let labels = argmax_labels(&probs.view());
        assert_eq!(labels[(0, 0)], 0);
        assert_eq!(labels[(0, 1)], 1);
    }

    #[test]
    fn evaluate_rejects_empty_input() {
        use crate::backbone::ArchSpec;
        let mut net = Backbone::<f32>::new(ArchSpec::uniform_dropout(2, vec![4, 8], 0.5), 0).unwrap();
        assert!(evaluate(&mut net, &[], 4, 1.0).is_err());
    }
}

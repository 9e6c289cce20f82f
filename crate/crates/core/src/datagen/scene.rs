//! Procedural scene generator: one curved bright band (cornea-like arc) over
//! two lateral wedges (iris-like), with per-scene intensity levels, a smooth
//! illumination gradient and additive Gaussian noise.

use ndarray::{Array2, Array3};
use rand::Rng;

use super::scribble::{derive_scribble_with, ScribbleParams};
use super::ImageSample;
use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::{standard_normal, stream};

#[derive(Clone, Debug)]
pub struct SceneConfig {
    pub height: usize,
    pub width: usize,
    /// 3 = background / arc / wedges; 2 drops the wedges.
    pub num_classes: usize,
    pub scribble: ScribbleParams,
    /// Per-scene pixel noise sigma is drawn from this range.
    pub noise_sigma: (f64, f64),
}

impl SceneConfig {
    pub fn new(height: usize, width: usize, num_classes: usize) -> Self {
        SceneConfig {
            height,
            width,
            num_classes,
            scribble: ScribbleParams::default(),
            noise_sigma: (0.03, 0.08),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.height < 32 || self.width < 32 {
            return Err(Error::arg(format!(
                "scene dimensions must be at least 32x32, got {}x{}",
                self.height, self.width
            )));
        }
        if !(2..=3).contains(&self.num_classes) {
            return Err(Error::arg(format!(
                "scene generator supports 2 or 3 classes, got {}",
                self.num_classes
            )));
        }
        Ok(())
    }
}

/// Generate a scene with default scribble and noise parameters.
pub fn generate_scene<F: Real>(
    seed: u64,
    height: usize,
    width: usize,
    num_classes: usize,
) -> Result<ImageSample<F>> {
    generate_scene_with(&SceneConfig::new(height, width, num_classes), seed)
}

/// Generate a scene; bit-identical output for identical `(config, seed)`.
pub fn generate_scene_with<F: Real>(cfg: &SceneConfig, seed: u64) -> Result<ImageSample<F>> {
    cfg.validate()?;
    let (h, w) = (cfg.height, cfg.width);
    let hf = h as f64;
    let wf = w as f64;
    let mut rng = stream(seed, "scene-geometry", 0);

    // Arc band: |y - y_center(x)| <= thickness/2 with a parabolic center line.
    let apex: f64 = rng.random_range(0.10..0.25) * hf;
    let cx: f64 = rng.random_range(0.40..0.60);
    let curvature: f64 = rng.random_range(0.30..0.80);
    let thickness: f64 = rng.random_range(0.10..0.20) * hf;

    let mut full_mask = Array2::<u8>::zeros((h, w));
    for x in 0..w {
        let xn = x as f64 / wf - cx;
        let yc = apex + curvature * xn * xn * hf;
        for y in 0..h {
            if (y as f64 - yc).abs() <= thickness / 2.0 {
                full_mask[(y, x)] = 1;
            }
        }
    }

    if cfg.num_classes == 3 {
        // Two lateral wedges tapering toward the image center.
        let y_left: f64 = rng.random_range(0.60..0.82) * hf;
        let len_left: f64 = rng.random_range(0.25..0.42) * wf;
        let half_left: f64 = rng.random_range(0.08..0.16) * hf;
        let y_right: f64 = (y_left + rng.random_range(-0.06..0.06) * hf)
            .clamp(0.55 * hf, 0.85 * hf);
        let len_right: f64 = rng.random_range(0.25..0.42) * wf;
        let half_right: f64 = rng.random_range(0.08..0.16) * hf;

        for x in 0..w {
            let xf = x as f64;
            let from_left = xf;
            let from_right = wf - 1.0 - xf;
            for y in 0..h {
                if full_mask[(y, x)] != 0 {
                    continue;
                }
                let yf = y as f64;
                let in_left = from_left < len_left
                    && (yf - y_left).abs() <= half_left * (1.0 - from_left / len_left);
                let in_right = from_right < len_right
                    && (yf - y_right).abs() <= half_right * (1.0 - from_right / len_right);
                if in_left || in_right {
                    full_mask[(y, x)] = 2;
                }
            }
        }
    }

    // Per-scene intensity levels on disjoint bands, then shared illumination
    // gradient, per-channel gain/offset jitter and pixel noise.
    let base_bg: f64 = rng.random_range(-0.90..-0.60);
    let base_arc: f64 = rng.random_range(0.25..0.65);
    let base_wedge: f64 = rng.random_range(-0.25..0.10);
    let illum_amp: f64 = rng.random_range(0.0..0.15);
    let illum_phase: f64 = rng.random_range(0.0..1.0);
    let mut gain = [0.0f64; 3];
    let mut offset = [0.0f64; 3];
    for ch in 0..3 {
        gain[ch] = rng.random_range(0.95..1.05);
        offset[ch] = rng.random_range(-0.04..0.04);
    }
    let sigma: f64 = rng.random_range(cfg.noise_sigma.0..cfg.noise_sigma.1);

    let mut noise_rng = stream(seed, "scene-noise", 0);
    let mut image = Array3::<F>::zeros((h, w, 3));
    for y in 0..h {
        for x in 0..w {
            let base = match full_mask[(y, x)] {
                1 => base_arc,
                2 => base_wedge,
                _ => base_bg,
            };
            let illum = illum_amp
                * (2.0 * std::f64::consts::PI * (x as f64 / wf + illum_phase)).sin();
            for ch in 0..3 {
                let noise: f64 = standard_normal::<f64, _>(&mut noise_rng) * sigma;
                let v = ((base + illum) * gain[ch] + offset[ch] + noise).clamp(-1.0, 1.0);
                image[(y, x, ch)] = F::from_f64(v);
            }
        }
    }

    let (scribble_mask, indicator) =
        derive_scribble_with(&full_mask, &cfg.scribble, seed)?;

    Ok(ImageSample {
        id: format!("scene-{seed:010}"),
        image,
        full_mask,
        scribble_mask,
        indicator,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_bit_identical() {
        let a = generate_scene::<f32>(0, 60, 128, 3).unwrap();
        let b = generate_scene::<f32>(0, 60, 128, 3).unwrap();
        assert_eq!(a.image, b.image);
        assert_eq!(a.full_mask, b.full_mask);
        assert_eq!(a.scribble_mask, b.scribble_mask);
        assert_eq!(a.indicator, b.indicator);
    }

    #[test]
    fn different_seeds_differ() {
        let a = generate_scene::<f32>(0, 60, 128, 3).unwrap();
        let b = generate_scene::<f32>(1, 60, 128, 3).unwrap();
        assert_ne!(a.full_mask, b.full_mask);
    }

    #[test]
    fn invalid_dimensions_rejected() {
        assert!(generate_scene::<f32>(0, 16, 128, 3).is_err());
        assert!(generate_scene::<f32>(0, 60, 8, 3).is_err());
        assert!(generate_scene::<f32>(0, 60, 128, 5).is_err());
    }

    #[test]
    fn foreground_occupancy_within_band() {
        // Frozen from a 100-seed sweep of the generator parameters: each
        // foreground class stays between 2% and 40% of the pixels.
        for seed in 0..100 {
            let s = generate_scene::<f32>(seed, 60, 128, 3).unwrap();
            let total = (60 * 128) as f64;
            for class in [1u8, 2] {
                let count = s.full_mask.iter().filter(|&&v| v == class).count() as f64;
                let frac = count / total;
                assert!(
                    (0.02..=0.40).contains(&frac),
                    "seed {seed} class {class}: occupancy {frac:.4}"
                );
            }
        }
    }

    #[test]
    fn samples_validate() {
        for seed in [0, 7, 21] {
            let s = generate_scene::<f32>(seed, 60, 128, 3).unwrap();
            s.validate(3).unwrap();
        }
    }

    #[test]
    fn two_class_scene_has_no_wedges() {
        let s = generate_scene::<f32>(3, 48, 64, 2).unwrap();
        assert!(s.full_mask.iter().all(|&v| v <= 1));
        s.validate(2).unwrap();
    }
}

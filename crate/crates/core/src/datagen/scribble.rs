//! Scribble derivation: thin stroke-like pixel sets sampled strictly inside
//! each region's eroded interior, mimicking line strokes drawn inside tissue.

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::stream;

#[derive(Clone, Debug)]
pub struct ScribbleParams {
    /// Target fraction of each foreground region covered by its strokes.
    pub stroke_fraction: f64,
    /// Draw one stroke in the background region as well, so partial
    /// cross-entropy sees labeled background pixels.
    pub background_stroke: bool,
    /// When a region is too thin to erode, sample the region itself instead
    /// of failing. Disabling this turns such regions into an error.
    pub fallback_to_region: bool,
}

impl Default for ScribbleParams {
    fn default() -> Self {
        ScribbleParams {
            stroke_fraction: 0.05,
            background_stroke: true,
            fallback_to_region: true,
        }
    }
}

/// Derive scribbles with default parameters (see [`ScribbleParams`]).
pub fn derive_scribble(
    full_mask: &Array2<u8>,
    stroke_fraction: f64,
    seed: u64,
) -> Result<(Array2<u8>, Array2<u8>)> {
    let params = ScribbleParams {
        stroke_fraction,
        ..ScribbleParams::default()
    };
    derive_scribble_with(full_mask, &params, seed)
}

/// Derive `(scribble_mask, indicator)` from a full mask.
///
/// The indicator selects wandering one-pixel-wide strokes inside the eroded
/// interior of every present region; the scribble mask copies the full mask
/// where indicated. Per region the number of indicated pixels tracks
/// `stroke_fraction x region area`.
pub fn derive_scribble_with(
    full_mask: &Array2<u8>,
    params: &ScribbleParams,
    seed: u64,
) -> Result<(Array2<u8>, Array2<u8>)> {
    if !(params.stroke_fraction > 0.0 && params.stroke_fraction <= 1.0) {
        return Err(Error::arg(format!(
            "stroke_fraction must lie in (0, 1], got {}",
            params.stroke_fraction
        )));
    }
    let (h, w) = full_mask.dim();
    let num_classes = usize::from(*full_mask.iter().max().unwrap_or(&0)) + 1;

    let mut areas = vec![0usize; num_classes];
    for &v in full_mask.iter() {
        areas[usize::from(v)] += 1;
    }
    let fg_present: Vec<usize> = (1..num_classes).filter(|&c| areas[c] > 0).collect();
    let mean_fg_area = if fg_present.is_empty() {
        // No foreground: size the background stroke like a small region.
        (h * w) / 50
    } else {
        fg_present.iter().map(|&c| areas[c]).sum::<usize>() / fg_present.len()
    };

    let mut indicator = Array2::<u8>::zeros((h, w));
    let mut scribble = Array2::<u8>::zeros((h, w));

    let mut classes: Vec<usize> = fg_present.clone();
    if params.background_stroke && areas[0] > 0 {
        classes.push(0);
    }
    for class in classes {
        let region = full_mask.mapv(|v| usize::from(v) == class);
        let eroded = erode(&region);
        let allowed = if eroded.iter().any(|&b| b) {
            eroded
        } else if params.fallback_to_region {
            region
        } else {
            return Err(Error::arg(format!(
                "class {class} region too thin to erode and fallback is disabled"
            )));
        };
        let target = if class == 0 {
            (params.stroke_fraction * mean_fg_area as f64).round().max(1.0) as usize
        } else {
            (params.stroke_fraction * areas[class] as f64).round().max(1.0) as usize
        };
        let mut rng = stream(seed, "scribble", class as u64);
        draw_strokes(&allowed, target, &mut rng, &mut indicator);
    }

    for r in 0..h {
        for c in 0..w {
            if indicator[(r, c)] != 0 {
                scribble[(r, c)] = full_mask[(r, c)];
            }
        }
    }
    Ok((scribble, indicator))
}

/// Morphological erosion with the full 3x3 structuring element; pixels on the
/// image border never survive.
fn erode(mask: &Array2<bool>) -> Array2<bool> {
    let (h, w) = mask.dim();
    let mut out = Array2::from_elem((h, w), false);
    for r in 1..h.saturating_sub(1) {
        for c in 1..w.saturating_sub(1) {
            let mut keep = true;
            'scan: for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    if !mask[((r as i64 + dr) as usize, (c as i64 + dc) as usize)] {
                        keep = false;
                        break 'scan;
                    }
                }
            }
            out[(r, c)] = keep;
        }
    }
    out
}

const DIRS: [(i64, i64); 8] = [
    (-1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
    (1, 0),
    (1, -1),
    (0, -1),
    (-1, -1),
];

/// Mark wandering strokes inside `allowed` until roughly `target` pixels are
/// indicated. Each stroke is a direction-biased walk that occasionally turns,
/// restarting from a fresh anchor when it runs into a dead end.
fn draw_strokes(
    allowed: &Array2<bool>,
    target: usize,
    rng: &mut ChaCha8Rng,
    indicator: &mut Array2<u8>,
) {
    let candidates: Vec<(usize, usize)> = {
        let (h, w) = allowed.dim();
        let mut v = Vec::new();
        for r in 0..h {
            for c in 0..w {
                if allowed[(r, c)] {
                    v.push((r, c));
                }
            }
        }
        v
    };
    if candidates.is_empty() {
        return;
    }
    let target = target.min(candidates.len());
    let (h, w) = allowed.dim();
    let mut marked = 0usize;
    for _attempt in 0..16 {
        if marked >= target {
            break;
        }
        let (mut r, mut c) = candidates[rng.random_range(0..candidates.len())];
        let mut dir = rng.random_range(0..8usize);
        let mut steps = 0usize;
        loop {
            if indicator[(r, c)] == 0 {
                indicator[(r, c)] = 1;
                marked += 1;
                if marked >= target {
                    break;
                }
            }
            steps += 1;
            if steps > target * 4 + 8 {
                break;
            }
            // Occasional wiggle keeps strokes from being straight rays.
            if rng.random_range(0.0..1.0) < 0.2 {
                dir = (dir + if rng.random_range(0.0..1.0) < 0.5 { 1 } else { 7 }) % 8;
            }
            let mut moved = false;
            for turn in [0usize, 1, 7, 2, 6] {
                let d = DIRS[(dir + turn) % 8];
                let nr = r as i64 + d.0;
                let nc = c as i64 + d.1;
                if nr >= 0
                    && nc >= 0
                    && (nr as usize) < h
                    && (nc as usize) < w
                    && allowed[(nr as usize, nc as usize)]
                {
                    r = nr as usize;
                    c = nc as usize;
                    dir = (dir + turn) % 8;
                    moved = true;
                    break;
                }
            }
            if !moved {
                break;
            }
        }
    }
}

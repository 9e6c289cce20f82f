//! Segmentation quality metrics: Dice overlap and average boundary distance.
//!
//! Dice is reported on a 0..100 scale. ADB is the symmetric mean distance
//! between the two boundary point sets, scaled by the physical pixel size;
//! distances come from an exact integer squared-distance transform, so the
//! values match an all-pairs brute-force computation bit for bit.

use ndarray::Array2;

use crate::error::{Error, Result};

/// Binary mask for a single class.
pub type ClassMask = Array2<bool>;

/// Extract the binary mask of class `class` from an integer label map.
pub fn class_mask(labels: &Array2<u8>, class: u8) -> ClassMask {
    labels.mapv(|v| v == class)
}

/// Dice coefficient on a 0..100 scale. Two empty masks count as a perfect
/// match (100).
pub fn dice(pred: &ClassMask, gt: &ClassMask) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(format!(
            "dice: pred {:?} vs gt {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    let mut inter = 0u64;
    let mut np = 0u64;
    let mut ng = 0u64;
    for (&p, &g) in pred.iter().zip(gt.iter()) {
        np += u64::from(p);
        ng += u64::from(g);
        inter += u64::from(p && g);
    }
    if np + ng == 0 {
        return Ok(100.0);
    }
    Ok(100.0 * (2 * inter) as f64 / (np + ng) as f64)
}

/// Boundary pixels of a mask in row-major order: mask pixels with at least
/// one 4-neighbor outside the mask (the image border counts as outside).
pub fn boundary_points(mask: &ClassMask) -> Vec<(usize, usize)> {
    let (h, w) = mask.dim();
    let mut points = Vec::new();
    for r in 0..h {
        for c in 0..w {
            if !mask[(r, c)] {
                continue;
            }
            let exposed = r == 0
                || c == 0
                || r == h - 1
                || c == w - 1
                || !mask[(r - 1, c)]
                || !mask[(r + 1, c)]
                || !mask[(r, c - 1)]
                || !mask[(r, c + 1)];
            if exposed {
                points.push((r, c));
            }
        }
    }
    points
}

/// Exact squared Euclidean distance to the nearest seed, per grid cell
/// (Meijster's two-phase transform, integer arithmetic throughout).
fn squared_distance_transform(h: usize, w: usize, seeds: &[(usize, usize)]) -> Array2<i64> {
    // Effectively-infinite vertical distance; squares stay far below i64 range.
    let inf = (h + w) as i64;
    let mut g = Array2::<i64>::from_elem((h, w), inf);
    for &(r, c) in seeds {
        g[(r, c)] = 0;
    }
    // Phase 1: per-column nearest seed distance along the column.
    for c in 0..w {
        for r in 1..h {
            let up = g[(r - 1, c)] + 1;
            if up < g[(r, c)] {
                g[(r, c)] = up;
            }
        }
        for r in (0..h.saturating_sub(1)).rev() {
            let down = g[(r + 1, c)] + 1;
            if down < g[(r, c)] {
                g[(r, c)] = down;
            }
        }
    }
    // Phase 2: per-row lower envelope of the parabolas f(x) = (x-i)^2 + g(i)^2.
    let mut dt = Array2::<i64>::zeros((h, w));
    let mut s = vec![0usize; w];
    let mut t = vec![0i64; w];
    let f = |g_row: &dyn Fn(usize) -> i64, x: i64, i: usize| -> i64 {
        let d = x - i as i64;
        d * d + g_row(i) * g_row(i)
    };
    for r in 0..h {
        let row = |i: usize| g[(r, i)];
        let mut q: isize = 0;
        s[0] = 0;
        t[0] = 0;
        for u in 1..w {
            while q >= 0 && f(&row, t[q as usize], s[q as usize]) > f(&row, t[q as usize], u) {
                q -= 1;
            }
            if q < 0 {
                q = 0;
                s[0] = u;
                t[0] = 0;
            } else {
                let i = s[q as usize] as i64;
                let u_i = u as i64;
                // Integer ceil of the parabola intersection abscissa.
                let num = u_i * u_i - i * i + row(u) * row(u) - row(s[q as usize]) * row(s[q as usize]);
                let den = 2 * (u_i - i);
                let sep = num.div_euclid(den);
                let start = sep + 1;
                if start < w as i64 {
                    q += 1;
                    s[q as usize] = u;
                    t[q as usize] = start;
                }
            }
        }
        for u in (0..w).rev() {
            dt[(r, u)] = f(&row, u as i64, s[q as usize]);
            if q > 0 && (u as i64) == t[q as usize] {
                q -= 1;
            }
        }
    }
    dt
}

/// Mean over `from` of the Euclidean distance to the nearest point of `to`,
/// summed in row-major order of `from`.
fn directed_mean_distance(h: usize, w: usize, from: &[(usize, usize)], to: &[(usize, usize)]) -> f64 {
    let dt = squared_distance_transform(h, w, to);
    let mut sum = 0.0;
    for &(r, c) in from {
        sum += (dt[(r, c)] as f64).sqrt();
    }
    sum / from.len() as f64
}

/// Average distance of boundaries: symmetric mean boundary distance scaled
/// by `pixel_size`. One empty mask against a nonempty one yields the image
/// diagonal as a defined worst-case penalty; two empty masks yield 0.
pub fn adb(pred: &ClassMask, gt: &ClassMask, pixel_size: f64) -> Result<f64> {
    if pred.dim() != gt.dim() {
        return Err(Error::shape(format!(
            "adb: pred {:?} vs gt {:?}",
            pred.dim(),
            gt.dim()
        )));
    }
    let (h, w) = pred.dim();
    let bp = boundary_points(pred);
    let bg = boundary_points(gt);
    match (bp.is_empty(), bg.is_empty()) {
        (true, true) => Ok(0.0),
        (true, false) | (false, true) => {
            Ok(((h * h + w * w) as f64).sqrt() * pixel_size)
        }
        (false, false) => {
            let fwd = directed_mean_distance(h, w, &bp, &bg);
            let rev = directed_mean_distance(h, w, &bg, &bp);
            Ok((fwd + rev) / 2.0 * pixel_size)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn mask_from(h: usize, w: usize, ones: &[(usize, usize)]) -> ClassMask {
        let mut m = Array2::from_elem((h, w), false);
        for &p in ones {
            m[p] = true;
        }
        m
    }

    #[test]
    fn dice_identical_nonempty_is_100() {
        let m = mask_from(4, 4, &[(1, 1), (1, 2), (2, 1)]);
        assert_eq!(dice(&m, &m).unwrap(), 100.0);
    }

    #[test]
    fn dice_disjoint_is_0() {
        let a = mask_from(4, 4, &[(0, 0)]);
        let b = mask_from(4, 4, &[(3, 3)]);
        assert_eq!(dice(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn dice_half_overlap() {
        // |pred| = |gt| = 100, overlap 50 -> 50.0
        let mut pred = Array2::from_elem((20, 20), false);
        let mut gt = Array2::from_elem((20, 20), false);
        for i in 0..100 {
            let (r, c) = (i / 20, i % 20);
            pred[(r, c)] = true;
        }
        for i in 50..150 {
            let (r, c) = (i / 20, i % 20);
            gt[(r, c)] = true;
        }
        assert_eq!(dice(&pred, &gt).unwrap(), 50.0);
    }

    #[test]
    fn dice_both_empty_is_100() {
        let m = Array2::from_elem((3, 3), false);
        assert_eq!(dice(&m, &m).unwrap(), 100.0);
    }

    #[test]
    fn dice_shape_mismatch_rejected() {
        let a = Array2::from_elem((3, 3), false);
        let b = Array2::from_elem((3, 4), false);
        assert!(dice(&a, &b).is_err());
    }

    #[test]
    fn adb_identical_is_0() {
        let m = mask_from(6, 6, &[(2, 2), (2, 3), (3, 2), (3, 3)]);
        assert_eq!(adb(&m, &m, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn adb_shifted_lines() {
        // Two unit-width horizontal lines five rows apart -> 5.0.
        let mut a = Array2::from_elem((10, 8), false);
        let mut b = Array2::from_elem((10, 8), false);
        for c in 0..8 {
            a[(2, c)] = true;
            b[(7, c)] = true;
        }
        assert_eq!(adb(&a, &b, 1.0).unwrap(), 5.0);
    }

    #[test]
    fn adb_empty_vs_nonempty_is_diagonal() {
        let empty = Array2::from_elem((3, 4), false);
        let m = mask_from(3, 4, &[(1, 1)]);
        let expected = ((9 + 16) as f64).sqrt();
        assert_eq!(adb(&empty, &m, 1.0).unwrap(), expected);
        assert_eq!(adb(&m, &empty, 1.0).unwrap(), expected);
        assert_eq!(adb(&empty, &empty, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn adb_pixel_size_scales() {
        let mut a = Array2::from_elem((10, 8), false);
        let mut b = Array2::from_elem((10, 8), false);
        for c in 0..8 {
            a[(2, c)] = true;
            b[(7, c)] = true;
        }
        assert_eq!(adb(&a, &b, 0.5).unwrap(), 2.5);
    }

    #[test]
    fn boundary_of_solid_block_is_its_ring() {
        let mut m = Array2::from_elem((6, 6), false);
        for r in 1..5 {
            for c in 1..5 {
                m[(r, c)] = true;
            }
        }
        let b = boundary_points(&m);
        assert_eq!(b.len(), 12); // 4x4 block has a 12-pixel ring
        assert!(!b.contains(&(2, 2)));
    }

    #[test]
    fn distance_transform_matches_brute_force() {
        let seeds = vec![(0, 0), (3, 5), (6, 2)];
        let dt = squared_distance_transform(8, 7, &seeds);
        for r in 0..8 {
            for c in 0..7 {
                let best = seeds
                    .iter()
                    .map(|&(sr, sc)| {
                        let dr = r as i64 - sr as i64;
                        let dc = c as i64 - sc as i64;
                        dr * dr + dc * dc
                    })
                    .min()
                    .unwrap();
                assert_eq!(dt[(r, c)], best, "at ({r},{c})");
            }
        }
    }
}

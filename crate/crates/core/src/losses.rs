//! Supervision signals: full cross-entropy, partial cross-entropy over
//! indicated pixels, and the uncertainty-masked KL distillation loss.
//!
//! All losses normalize by (number of contributing pixels x C) and use the
//! natural logarithm with inputs clipped below at [`LOG_CLIP`]. Each loss has
//! a companion `_grad` function returning the exact analytic derivative with
//! respect to the probability map that receives gradient during training
//! (the KL teacher is a constant target).

use ndarray::{Array2, Array3};

use crate::error::{Error, Result};
use crate::num::Real;

/// Probability clip applied before every logarithm.
pub const LOG_CLIP: f64 = 1e-8;

/// Per-pixel class probability field, laid out (H, W, C).
pub type ProbMap<F> = Array3<F>;

/// One-hot labels, laid out (H, W, C) with exactly one 1 per pixel.
pub type OneHotLabel = Array3<u8>;

#[inline]
fn clipped<F: Real>(v: F) -> F {
    let eps = F::from_f64(LOG_CLIP);
    if v < eps {
        eps
    } else {
        v
    }
}

fn check_prob_label<F: Real>(m: &ProbMap<F>, y: &OneHotLabel) -> Result<()> {
    if m.dim() != y.dim() {
        return Err(Error::shape(format!(
            "probability map {:?} vs label {:?}",
            m.dim(),
            y.dim()
        )));
    }
    Ok(())
}

fn true_class(y: &OneHotLabel, r: usize, c: usize) -> Result<usize> {
    let classes = y.dim().2;
    let mut hit = None;
    for ch in 0..classes {
        if y[(r, c, ch)] != 0 {
            if hit.is_some() {
                return Err(Error::arg(format!(
                    "label at ({r},{c}) is not one-hot: multiple active classes"
                )));
            }
            hit = Some(ch);
        }
    }
    hit.ok_or_else(|| Error::arg(format!("label at ({r},{c}) is not one-hot: no active class")))
}

/// Vanilla cross-entropy: -(1/(K*C)) sum_k sum_c y(k,c) ln m(k,c).
pub fn cross_entropy<F: Real>(m: &ProbMap<F>, y: &OneHotLabel) -> Result<F> {
    check_prob_label(m, y)?;
    let (h, w, classes) = m.dim();
    let mut sum = F::zero();
    for r in 0..h {
        for c in 0..w {
            let ch = true_class(y, r, c)?;
            sum = sum - clipped(m[(r, c, ch)]).ln();
        }
    }
    Ok(sum / F::from_f64((h * w * classes) as f64))
}

/// Gradient of [`cross_entropy`] with respect to `m`.
pub fn cross_entropy_grad<F: Real>(m: &ProbMap<F>, y: &OneHotLabel) -> Result<Array3<F>> {
    check_prob_label(m, y)?;
    let (h, w, classes) = m.dim();
    let norm = F::from_f64((h * w * classes) as f64);
    let eps = F::from_f64(LOG_CLIP);
    let mut grad = Array3::zeros((h, w, classes));
    for r in 0..h {
        for c in 0..w {
            let ch = true_class(y, r, c)?;
            let v = m[(r, c, ch)];
            if v >= eps {
                grad[(r, c, ch)] = -F::one() / (v * norm);
            }
        }
    }
    Ok(grad)
}

fn check_indicator<F: Real>(m: &ProbMap<F>, s: &Array2<u8>) -> Result<usize> {
    let (h, w, _) = m.dim();
    if s.dim() != (h, w) {
        return Err(Error::shape(format!(
            "indicator {:?} vs probability map {:?}",
            s.dim(),
            m.dim()
        )));
    }
    let count = s.iter().filter(|&&v| v != 0).count();
    if count == 0 {
        return Err(Error::arg(
            "partial cross-entropy needs at least one indicated pixel",
        ));
    }
    Ok(count)
}

/// Partial cross-entropy over indicated pixels:
/// -(1/(sum_k s(k) * C)) sum_k sum_c s(k) y(k,c) ln m(k,c).
///
/// Pixels with `s = 0` contribute exactly zero loss and zero gradient.
pub fn partial_cross_entropy<F: Real>(
    m: &ProbMap<F>,
    y: &OneHotLabel,
    s: &Array2<u8>,
) -> Result<F> {
    check_prob_label(m, y)?;
    let indicated = check_indicator(m, s)?;
    let (h, w, classes) = m.dim();
    let mut sum = F::zero();
    for r in 0..h {
        for c in 0..w {
            if s[(r, c)] == 0 {
                continue;
            }
            let ch = true_class(y, r, c)?;
            sum = sum - clipped(m[(r, c, ch)]).ln();
        }
    }
    Ok(sum / F::from_f64((indicated * classes) as f64))
}

/// Gradient of [`partial_cross_entropy`] with respect to `m`.
pub fn partial_cross_entropy_grad<F: Real>(
    m: &ProbMap<F>,
    y: &OneHotLabel,
    s: &Array2<u8>,
) -> Result<Array3<F>> {
    check_prob_label(m, y)?;
    let indicated = check_indicator(m, s)?;
    let (h, w, classes) = m.dim();
    let norm = F::from_f64((indicated * classes) as f64);
    let eps = F::from_f64(LOG_CLIP);
    let mut grad = Array3::zeros((h, w, classes));
    for r in 0..h {
        for c in 0..w {
            if s[(r, c)] == 0 {
                continue;
            }
            let ch = true_class(y, r, c)?;
            let v = m[(r, c, ch)];
            if v >= eps {
                grad[(r, c, ch)] = -F::one() / (v * norm);
            }
        }
    }
    Ok(grad)
}

fn check_kl_shapes<F: Real>(
    student: &ProbMap<F>,
    teacher: &ProbMap<F>,
    uncertainty: &Array2<F>,
) -> Result<()> {
    if student.dim() != teacher.dim() {
        return Err(Error::shape(format!(
            "student {:?} vs teacher {:?}",
            student.dim(),
            teacher.dim()
        )));
    }
    let (h, w, _) = student.dim();
    if uncertainty.dim() != (h, w) {
        return Err(Error::shape(format!(
            "uncertainty map {:?} vs probability map {:?}",
            uncertainty.dim(),
            student.dim()
        )));
    }
    Ok(())
}

/// Uncertainty-masked KL divergence from the student to a constant teacher:
/// (1/(sum_k I(U(k)<tau) * C)) sum_k sum_c I(U(k)<tau) m_s(k,c) ln(m_s/m_t).
///
/// Pixels at or above the threshold contribute nothing; if no pixel is below
/// it, the loss is exactly zero (a warning is logged) so that a globally
/// unsure teacher does not abort training.
pub fn uncertainty_kl<F: Real>(
    student: &ProbMap<F>,
    teacher: &ProbMap<F>,
    uncertainty: &Array2<F>,
    tau: F,
) -> Result<F> {
    check_kl_shapes(student, teacher, uncertainty)?;
    let (h, w, classes) = student.dim();
    let mut certain = 0usize;
    let mut sum = F::zero();
    for r in 0..h {
        for c in 0..w {
            if !(uncertainty[(r, c)] < tau) {
                continue;
            }
            certain += 1;
            for ch in 0..classes {
                let p = student[(r, c, ch)];
                let q = clipped(teacher[(r, c, ch)]);
                sum = sum + p * (clipped(p).ln() - q.ln());
            }
        }
    }
    if certain == 0 {
        log::warn!("uncertainty_kl: no pixel below tau, loss is 0 for this map");
        return Ok(F::zero());
    }
    Ok(sum / F::from_f64((certain * classes) as f64))
}

/// Gradient of [`uncertainty_kl`] with respect to the student map. The
/// teacher is a constant target and receives no gradient.
pub fn uncertainty_kl_grad<F: Real>(
    student: &ProbMap<F>,
    teacher: &ProbMap<F>,
    uncertainty: &Array2<F>,
    tau: F,
) -> Result<Array3<F>> {
    check_kl_shapes(student, teacher, uncertainty)?;
    let (h, w, classes) = student.dim();
    let mut grad = Array3::zeros((h, w, classes));
    let certain = uncertainty.iter().filter(|&&u| u < tau).count();
    if certain == 0 {
        return Ok(grad);
    }
    let norm = F::from_f64((certain * classes) as f64);
    let eps = F::from_f64(LOG_CLIP);
    for r in 0..h {
        for c in 0..w {
            if !(uncertainty[(r, c)] < tau) {
                continue;
            }
            for ch in 0..classes {
                let p = student[(r, c, ch)];
                let q = clipped(teacher[(r, c, ch)]);
                let log_ratio = clipped(p).ln() - q.ln();
                // d/dp [p ln(clip(p)/q)] = ln(p/q) + 1 above the clip.
                let inner = if p >= eps { log_ratio + F::one() } else { log_ratio };
                grad[(r, c, ch)] = inner / norm;
            }
        }
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, Array3};

    fn prob1<F: Real>(values: &[f64]) -> ProbMap<F> {
        Array3::from_shape_vec((1, 1, values.len()), values.iter().map(|&v| F::from_f64(v)).collect())
            .unwrap()
    }

    fn onehot1(active: usize, classes: usize) -> OneHotLabel {
        let mut y = Array3::zeros((1, 1, classes));
        y[(0, 0, active)] = 1;
        y
    }

    #[test]
    fn cross_entropy_single_pixel_hand_value() {
        // 1 pixel, C=2, y=[1,0], m=[0.8,0.2] -> -ln(0.8)/2
        let m = prob1::<f64>(&[0.8, 0.2]);
        let y = onehot1(0, 2);
        let ce = cross_entropy(&m, &y).unwrap();
        assert!((ce - (-(0.8f64.ln()) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_perfect_prediction_is_nearly_zero() {
        let m = prob1::<f64>(&[1.0, 0.0]);
        let y = onehot1(0, 2);
        assert!(cross_entropy(&m, &y).unwrap() <= 1e-7);
    }

    #[test]
    fn cross_entropy_uniform_is_log_c_over_c() {
        let classes = 4;
        let mut m = Array3::<f64>::zeros((3, 5, classes));
        m.fill(1.0 / classes as f64);
        let mut y = Array3::zeros((3, 5, classes));
        for r in 0..3 {
            for c in 0..5 {
                y[(r, c, (r + c) % classes)] = 1;
            }
        }
        let ce = cross_entropy(&m, &y).unwrap();
        let expected = (classes as f64).ln() / classes as f64;
        assert!((ce - expected).abs() < 1e-14);
    }

    #[test]
    fn partial_cross_entropy_single_indicated_pixel() {
        // 2 pixels, C=2, s=[1,0], y(0)=[0,1], m(0)=[0.3,0.7] -> -ln(0.7)/2
        let m = Array3::from_shape_vec((1, 2, 2), vec![0.3f64, 0.7, 0.9, 0.1]).unwrap();
        let mut y = Array3::zeros((1, 2, 2));
        y[(0, 0, 1)] = 1;
        y[(0, 1, 0)] = 1;
        let s = Array2::from_shape_vec((1, 2), vec![1u8, 0]).unwrap();
        let pce = partial_cross_entropy(&m, &y, &s).unwrap();
        assert!((pce - (-(0.7f64.ln()) / 2.0)).abs() < 1e-15);
    }

    #[test]
    fn partial_cross_entropy_all_indicated_equals_cross_entropy() {
        let m = Array3::from_shape_vec(
            (2, 2, 2),
            vec![0.6f64, 0.4, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1],
        )
        .unwrap();
        let mut y = Array3::zeros((2, 2, 2));
        for r in 0..2 {
            for c in 0..2 {
                y[(r, c, (r * 2 + c) % 2)] = 1;
            }
        }
        let s = Array2::from_elem((2, 2), 1u8);
        let pce = partial_cross_entropy(&m, &y, &s).unwrap();
        let ce = cross_entropy(&m, &y).unwrap();
        assert!((pce - ce).abs() < 1e-12);
    }

    #[test]
    fn partial_cross_entropy_ignores_unindicated_pixels_bit_exactly() {
        let mut m = Array3::from_shape_vec((1, 2, 2), vec![0.3f64, 0.7, 0.9, 0.1]).unwrap();
        let mut y = Array3::zeros((1, 2, 2));
        y[(0, 0, 1)] = 1;
        y[(0, 1, 0)] = 1;
        let s = Array2::from_shape_vec((1, 2), vec![1u8, 0]).unwrap();
        let before = partial_cross_entropy(&m, &y, &s).unwrap();
        m[(0, 1, 0)] = 0.123;
        m[(0, 1, 1)] = 0.877;
        let after = partial_cross_entropy(&m, &y, &s).unwrap();
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn partial_cross_entropy_rejects_empty_indicator() {
        let m = prob1::<f64>(&[0.5, 0.5]);
        let y = onehot1(0, 2);
        let s = Array2::zeros((1, 1));
        assert!(partial_cross_entropy(&m, &y, &s).is_err());
    }

    #[test]
    fn partial_cross_entropy_grad_is_zero_at_masked_pixels() {
        let m = Array3::from_shape_vec((1, 2, 2), vec![0.3f64, 0.7, 0.9, 0.1]).unwrap();
        let mut y = Array3::zeros((1, 2, 2));
        y[(0, 0, 1)] = 1;
        y[(0, 1, 0)] = 1;
        let s = Array2::from_shape_vec((1, 2), vec![1u8, 0]).unwrap();
        let g = partial_cross_entropy_grad(&m, &y, &s).unwrap();
        assert_eq!(g[(0, 1, 0)], 0.0);
        assert_eq!(g[(0, 1, 1)], 0.0);
        assert!(g[(0, 0, 1)] != 0.0);
    }

    #[test]
    fn uncertainty_kl_identical_maps_is_zero() {
        let m = Array3::from_shape_vec((2, 2, 2), vec![0.6f64, 0.4, 0.2, 0.8, 0.5, 0.5, 0.9, 0.1])
            .unwrap();
        let u = Array2::zeros((2, 2));
        let kl = uncertainty_kl(&m, &m, &u, 0.5).unwrap();
        assert!(kl.abs() <= 1e-9);
    }

    #[test]
    fn uncertainty_kl_single_pixel_hand_value() {
        // student [0.5,0.5], teacher [0.9,0.1]:
        // (0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1)) / 2
        let student = prob1::<f64>(&[0.5, 0.5]);
        let teacher = prob1::<f64>(&[0.9, 0.1]);
        let u = Array2::zeros((1, 1));
        let kl = uncertainty_kl(&student, &teacher, &u, 0.5).unwrap();
        let expected = (0.5 * (0.5f64 / 0.9).ln() + 0.5 * (0.5f64 / 0.1).ln()) / 2.0;
        assert!((kl - expected).abs() < 1e-15);
    }

    #[test]
    fn uncertainty_kl_ignores_uncertain_pixels_bit_exactly() {
        let student =
            Array3::from_shape_vec((1, 2, 2), vec![0.5f64, 0.5, 0.4, 0.6]).unwrap();
        let mut teacher =
            Array3::from_shape_vec((1, 2, 2), vec![0.9f64, 0.1, 0.3, 0.7]).unwrap();
        let u = Array2::from_shape_vec((1, 2), vec![0.0f64, 0.9]).unwrap();
        let before = uncertainty_kl(&student, &teacher, &u, 0.5).unwrap();
        teacher[(0, 1, 0)] = 0.99;
        teacher[(0, 1, 1)] = 0.01;
        let after = uncertainty_kl(&student, &teacher, &u, 0.5).unwrap();
        assert_eq!(before.to_bits(), after.to_bits());
    }

    #[test]
    fn uncertainty_kl_all_uncertain_returns_zero() {
        let student = prob1::<f64>(&[0.5, 0.5]);
        let teacher = prob1::<f64>(&[0.9, 0.1]);
        let u = Array2::from_elem((1, 1), 0.7);
        assert_eq!(uncertainty_kl(&student, &teacher, &u, 0.5).unwrap(), 0.0);
        let g = uncertainty_kl_grad(&student, &teacher, &u, 0.5).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn threshold_is_strict() {
        let student = prob1::<f64>(&[0.5, 0.5]);
        let teacher = prob1::<f64>(&[0.9, 0.1]);
        let u = Array2::from_elem((1, 1), 0.5);
        // U == tau exactly: the pixel is not reliable.
        assert_eq!(uncertainty_kl(&student, &teacher, &u, 0.5).unwrap(), 0.0);
    }
}

//! Uncertainty-aware exponential moving average: the micro model's parameters
//! are pulled toward the macro model's with a rate set by how certain the
//! micro model currently is. Fully certain (alpha = 1) leaves the micro model
//! untouched; fully uncertain (alpha = 0) replaces it outright.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::backbone::ParamVector;
use crate::error::{Error, Result};
use crate::num::Real;

/// alpha = (#pixels with U < tau) / K for one uncertainty map.
pub fn compute_alpha<F: Real>(uncertainty: &Array2<F>, tau: F) -> F {
    let total = uncertainty.len();
    debug_assert!(total > 0);
    let certain = uncertainty.iter().filter(|&&u| u < tau).count();
    F::from_f64(certain as f64 / total as f64)
}

/// Mean certain-fraction over a batch of uncertainty maps.
pub fn compute_alpha_batch<F: Real>(maps: &[Array2<F>], tau: F) -> Result<F> {
    if maps.is_empty() {
        return Err(Error::arg("alpha needs at least one uncertainty map"));
    }
    let mut sum = F::zero();
    for m in maps {
        sum = sum + compute_alpha(m, tau);
    }
    Ok(sum / F::from_f64(maps.len() as f64))
}

/// Elementwise `alpha * theta_micro + (1 - alpha) * theta_macro`. The result
/// replaces the micro model's parameters; no gradient is associated with the
/// assignment.
pub fn uema_update<F: Real>(
    theta_micro: &ParamVector<F>,
    theta_macro: &ParamVector<F>,
    alpha: F,
) -> Result<ParamVector<F>> {
    if !(F::zero()..=F::one()).contains(&alpha) {
        return Err(Error::arg(format!(
            "alpha must lie in [0, 1], got {}",
            alpha.as_f64()
        )));
    }
    theta_micro.blend(theta_macro, alpha)
}

/// Running record of the blend rates applied so far.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct UemaState {
    pub alpha_history: Vec<f64>,
}

impl UemaState {
    pub fn record(&mut self, alpha: f64) {
        self.alpha_history.push(alpha);
    }

    pub fn update_count(&self) -> usize {
        self.alpha_history.len()
    }

    pub fn last_alpha(&self) -> Option<f64> {
        self.alpha_history.last().copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ParamBlock;
    use ndarray::Array2;

    fn pv(values: Vec<f64>) -> ParamVector<f64> {
        ParamVector::new(vec![ParamBlock {
            name: "w".into(),
            shape: vec![values.len()],
            values,
        }])
    }

    #[test]
    fn alpha_endpoints() {
        let certain = Array2::<f64>::zeros((4, 4));
        assert_eq!(compute_alpha(&certain, 0.5), 1.0);
        let uncertain = Array2::<f64>::from_elem((4, 4), 0.9);
        assert_eq!(compute_alpha(&uncertain, 0.5), 0.0);
    }

    #[test]
    fn alpha_half() {
        let mut u = Array2::<f64>::zeros((2, 4));
        for c in 0..4 {
            u[(1, c)] = 0.8;
        }
        assert_eq!(compute_alpha(&u, 0.5), 0.5);
    }

    #[test]
    fn alpha_is_monotone_in_uncertainty() {
        let u = Array2::from_shape_fn((4, 4), |(r, c)| 0.02 * (r * 4 + c) as f64);
        let bumped = u.mapv(|v| v + 0.05);
        assert!(compute_alpha(&bumped, 0.2) <= compute_alpha(&u, 0.2));
    }

    #[test]
    fn update_endpoints() {
        let micro = pv(vec![1.0, -2.0, 0.5]);
        let mac = pv(vec![3.0, 4.0, -1.0]);
        assert_eq!(uema_update(&micro, &mac, 1.0).unwrap(), micro);
        assert_eq!(uema_update(&micro, &mac, 0.0).unwrap(), mac);
    }

    #[test]
    fn update_quarter_hand_value() {
        let micro = pv(vec![2.0; 5]);
        let mac = pv(vec![0.0; 5]);
        let out = uema_update(&micro, &mac, 0.25).unwrap();
        assert!(out.iter().all(|&v| v == 0.5));
    }

    #[test]
    fn update_is_fixed_point_on_equal_params() {
        let p = pv(vec![0.3, -0.7, 1.1]);
        for &alpha in &[0.0, 0.25, 0.5, 0.9, 1.0] {
            let out = uema_update(&p, &p, alpha).unwrap();
            for (a, b) in out.iter().zip(p.iter()) {
                assert!((a - b).abs() <= 1e-15);
            }
        }
    }

    #[test]
    fn rejects_alpha_out_of_range() {
        let p = pv(vec![1.0]);
        assert!(uema_update(&p, &p, -0.1).is_err());
        assert!(uema_update(&p, &p, 1.1).is_err());
    }

    #[test]
    fn state_tracks_history() {
        let mut state = UemaState::default();
        assert_eq!(state.last_alpha(), None);
        state.record(0.5);
        state.record(0.75);
        assert_eq!(state.update_count(), 2);
        assert_eq!(state.last_alpha(), Some(0.75));
    }
}

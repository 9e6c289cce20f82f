//! Monte-Carlo dropout uncertainty: T stochastic forward passes yield a mean
//! probability map and a per-pixel mean-of-class-variances uncertainty map.
//! A strict threshold on that map selects the reliable pixels.

use ndarray::{Array2, Array3, Array4, Axis};

use crate::backbone::Backbone;
use crate::error::{Error, Result};
use crate::num::Real;

/// Set of T Monte-Carlo probability maps for one image. The mean map and the
/// uncertainty map are pure functions of the stored samples, so recomputing
/// them reproduces the originals bit-exactly.
#[derive(Clone, Debug)]
pub struct McSampleSet<F> {
    samples: Vec<Array3<F>>,
}

impl<F: Real> McSampleSet<F> {
    pub fn new(samples: Vec<Array3<F>>) -> Result<Self> {
        if samples.len() < 2 {
            return Err(Error::arg(format!(
                "Monte-Carlo estimation needs T >= 2 samples, got {}",
                samples.len()
            )));
        }
        let dim = samples[0].dim();
        if samples.iter().any(|s| s.dim() != dim) {
            return Err(Error::shape("Monte-Carlo samples differ in shape"));
        }
        Ok(McSampleSet { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Per-class mean map mu.
    pub fn mean(&self) -> Array3<F> {
        let mut mean = Array3::<F>::zeros(self.samples[0].raw_dim());
        for s in &self.samples {
            mean = mean + s;
        }
        mean.mapv(|v| v / F::from_f64(self.samples.len() as f64))
    }

    /// Uncertainty U(k) = (1/(T*C)) sum_t sum_c (p_t(k,c) - mu(k,c))^2, the
    /// mean over classes of the population variance across samples. Values lie
    /// in [0, 1/4] because probabilities lie in [0, 1].
    pub fn uncertainty(&self) -> Array2<F> {
        let mean = self.mean();
        let (h, w, classes) = mean.dim();
        let norm = F::from_f64((self.samples.len() * classes) as f64);
        let mut u = Array2::<F>::zeros((h, w));
        for sample in &self.samples {
            for r in 0..h {
                for c in 0..w {
                    let mut acc = F::zero();
                    for ch in 0..classes {
                        let d = sample[(r, c, ch)] - mean[(r, c, ch)];
                        acc = acc + d * d;
                    }
                    u[(r, c)] = u[(r, c)] + acc;
                }
            }
        }
        u.mapv_inplace(|v| v / norm);
        u
    }
}

/// Binary reliability mask: 1 where `U(k) < tau` (strictly).
pub fn reliability_mask<F: Real>(uncertainty: &Array2<F>, tau: F) -> Array2<u8> {
    uncertainty.mapv(|u| u8::from(u < tau))
}

/// Run T dropout-enabled forward passes of `net` over a batch (B, H, W, C_in)
/// and return the per-image mean maps (B, H, W, C) together with the
/// per-image uncertainty maps.
///
/// Dropout is force-enabled for the sampling passes; both the dropout flag
/// and the dropout RNG state are restored afterwards, and the sampling
/// stream itself is seeded from `seed`, so a fixed seed reproduces the
/// estimate bit-exactly.
pub fn mc_uncertainty_batch<F: Real>(
    net: &mut Backbone<F>,
    batch: &Array4<F>,
    t_samples: usize,
    seed: u64,
) -> Result<(Array4<F>, Vec<Array2<F>>)> {
    if t_samples < 2 {
        return Err(Error::arg(format!(
            "Monte-Carlo estimation needs T >= 2, got {t_samples}"
        )));
    }
    let saved_enabled = net.dropout_enabled;
    let (saved_seed, saved_pos) = net.dropout_rng_state();
    net.dropout_enabled = true;
    net.reseed_dropout(seed);

    let mut passes: Vec<Array4<F>> = Vec::with_capacity(t_samples);
    let mut result = Ok(());
    for _ in 0..t_samples {
        match net.forward(batch) {
            Ok(p) => passes.push(p),
            Err(e) => {
                result = Err(e);
                break;
            }
        }
    }
    net.dropout_enabled = saved_enabled;
    net.set_dropout_rng_state(saved_seed, saved_pos);
    result?;

    let (b, h, w, classes) = passes[0].dim();
    let mut means = Array4::<F>::zeros((b, h, w, classes));
    let mut uncertainties = Vec::with_capacity(b);
    for bi in 0..b {
        let per_image: Vec<Array3<F>> = passes
            .iter()
            .map(|p| p.index_axis(Axis(0), bi).to_owned())
            .collect();
        let set = McSampleSet::new(per_image)?;
        means.index_axis_mut(Axis(0), bi).assign(&set.mean());
        uncertainties.push(set.uncertainty());
    }
    Ok((means, uncertainties))
}

/// Single-image convenience wrapper around [`mc_uncertainty_batch`].
pub fn mc_uncertainty<F: Real>(
    net: &mut Backbone<F>,
    image: &Array3<F>,
    t_samples: usize,
    seed: u64,
) -> Result<(Array3<F>, Array2<F>)> {
    let batch = image.clone().insert_axis(Axis(0));
    let (means, mut umaps) = mc_uncertainty_batch(net, &batch, t_samples, seed)?;
    Ok((means.index_axis(Axis(0), 0).to_owned(), umaps.remove(0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backbone::ArchSpec;
    use ndarray::{Array2, Array3, Array4};

    #[test]
    fn antisymmetric_two_sample_example() {
        // C=2, T=2, one pixel with p1=[1,0], p2=[0,1]: mu=[.5,.5], U=0.25.
        let p1 = Array3::from_shape_vec((1, 1, 2), vec![1.0f64, 0.0]).unwrap();
        let p2 = Array3::from_shape_vec((1, 1, 2), vec![0.0f64, 1.0]).unwrap();
        let set = McSampleSet::new(vec![p1, p2]).unwrap();
        let mean = set.mean();
        assert_eq!(mean[(0, 0, 0)], 0.5);
        assert_eq!(mean[(0, 0, 1)], 0.5);
        assert_eq!(set.uncertainty()[(0, 0)], 0.25);
    }

    #[test]
    fn identical_samples_have_zero_uncertainty() {
        let p = Array3::from_elem((2, 3, 2), 0.5f64);
        let set = McSampleSet::new(vec![p.clone(), p.clone(), p]).unwrap();
        assert!(set.uncertainty().iter().all(|&u| u == 0.0));
    }

    #[test]
    fn needs_at_least_two_samples() {
        let p = Array3::from_elem((1, 1, 2), 0.5f64);
        assert!(McSampleSet::new(vec![p]).is_err());
    }

    #[test]
    fn mask_is_strict_and_monotone_in_tau() {
        let u = Array2::from_shape_vec((1, 3), vec![0.0f64, 0.5, 0.6]).unwrap();
        let m = reliability_mask(&u, 0.5);
        assert_eq!(m.as_slice().unwrap(), &[1, 0, 0]);
        let lo: usize = reliability_mask(&u, 0.1).iter().map(|&v| v as usize).sum();
        let hi: usize = reliability_mask(&u, 0.7).iter().map(|&v| v as usize).sum();
        assert!(lo <= hi);
    }

    #[test]
    fn zero_uncertainty_gives_full_mask() {
        let u = Array2::<f64>::zeros((4, 4));
        assert!(reliability_mask(&u, 0.5).iter().all(|&v| v == 1));
    }

    #[test]
    fn mc_passes_restore_state_and_are_reproducible() {
        let spec = ArchSpec::uniform_dropout(2, vec![4, 8], 0.5);
        let mut net = Backbone::<f64>::new(spec, 0).unwrap();
        let batch = Array4::from_elem((1, 8, 8, 3), 0.1f64);

        let state_before = net.dropout_rng_state();
        let (mean_a, u_a) = mc_uncertainty_batch(&mut net, &batch, 4, 7).unwrap();
        assert_eq!(net.dropout_rng_state(), state_before);
        assert!(!net.dropout_enabled);

        let (mean_b, u_b) = mc_uncertainty_batch(&mut net, &batch, 4, 7).unwrap();
        assert_eq!(mean_a, mean_b);
        assert_eq!(u_a, u_b);

        let (_, u_c) = mc_uncertainty_batch(&mut net, &batch, 4, 8).unwrap();
        assert_ne!(u_a, u_c);
    }

    #[test]
    fn uncertainty_stays_within_variance_bound() {
        let spec = ArchSpec::uniform_dropout(3, vec![4, 8], 0.5);
        let mut net = Backbone::<f64>::new(spec, 3).unwrap();
        let batch = Array4::from_elem((2, 8, 8, 3), -0.2f64);
        let (_, umaps) = mc_uncertainty_batch(&mut net, &batch, 8, 0).unwrap();
        for u in &umaps {
            for &v in u.iter() {
                assert!((0.0..=0.25).contains(&v), "U = {v}");
            }
        }
    }

    #[test]
    fn rejects_small_t() {
        let spec = ArchSpec::uniform_dropout(2, vec![4, 8], 0.5);
        let mut net = Backbone::<f64>::new(spec, 0).unwrap();
        let batch = Array4::from_elem((1, 8, 8, 3), 0.0f64);
        assert!(mc_uncertainty_batch(&mut net, &batch, 1, 0).is_err());
    }
}

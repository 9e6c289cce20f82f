//! Small dropout-equipped encoder-decoder segmentation network with uniform
//! parameter access and hand-written backpropagation.
//!
//! The same architecture serves as both the micro and the macro model, which
//! keeps their parameter vectors shape-identical for the moving-average
//! blend. The decoder carries one spatial-dropout layer per level so the
//! micro model can be Monte-Carlo sampled.

mod ops;
mod params;

pub use params::{ParamBlock, ParamVector};

use ndarray::{Array1, Array2, Array4};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::num::Real;
use crate::rng::{standard_normal, stream};

/// Architecture description: channel widths per encoder level (the last entry
/// is the bottleneck width) and one dropout rate per decoder level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ArchSpec {
    pub in_channels: usize,
    pub num_classes: usize,
    pub widths: Vec<usize>,
    pub dropout_rates: Vec<f64>,
}

impl Default for ArchSpec {
    fn default() -> Self {
        ArchSpec::uniform_dropout(3, vec![16, 32, 64], 0.5)
    }
}

impl ArchSpec {
    /// Spec with the same dropout rate after every decoder level.
    pub fn uniform_dropout(num_classes: usize, widths: Vec<usize>, rate: f64) -> Self {
        let levels = widths.len().saturating_sub(1);
        ArchSpec {
            in_channels: 3,
            num_classes,
            widths,
            dropout_rates: vec![rate; levels],
        }
    }

    pub fn levels(&self) -> usize {
        self.widths.len()
    }

    /// Spatial reduction between the input and the bottleneck.
    pub fn downsample_factor(&self) -> usize {
        1 << (self.levels() - 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.levels() < 2 {
            return Err(Error::arg("backbone needs at least two levels"));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(Error::arg("backbone widths must be positive"));
        }
        if self.num_classes < 2 {
            return Err(Error::arg("backbone needs at least two classes"));
        }
        if self.in_channels == 0 {
            return Err(Error::arg("backbone needs at least one input channel"));
        }
        if self.dropout_rates.len() != self.levels() - 1 {
            return Err(Error::arg(format!(
                "expected {} dropout rates (one per decoder level), got {}",
                self.levels() - 1,
                self.dropout_rates.len()
            )));
        }
        if self.dropout_rates.iter().any(|&r| !(0.0..1.0).contains(&r)) {
            return Err(Error::arg("dropout rates must lie in [0, 1)"));
        }
        Ok(())
    }
}

const LEAKY_SLOPE: f64 = 0.1;

#[derive(Clone, Debug)]
struct Conv<F> {
    weight: Array4<F>,
    bias: Array1<F>,
}

impl<F: Real> Conv<F> {
    fn init(cout: usize, cin: usize, k: usize, rng: &mut ChaCha8Rng) -> Self {
        // He-normal fan-in init; biases start at zero.
        let std = (2.0 / (cin * k * k) as f64).sqrt();
        let weight = Array4::from_shape_simple_fn((cout, cin, k, k), || {
            standard_normal::<F, _>(rng) * F::from_f64(std)
        });
        Conv {
            weight,
            bias: Array1::zeros(cout),
        }
    }
}

#[derive(Clone, Debug)]
struct DoubleConv<F> {
    c0: Conv<F>,
    c1: Conv<F>,
}

impl<F: Real> DoubleConv<F> {
    fn init(cin: usize, cout: usize, rng: &mut ChaCha8Rng) -> Self {
        DoubleConv {
            c0: Conv::init(cout, cin, 3, rng),
            c1: Conv::init(cout, cout, 3, rng),
        }
    }
}

/// Encoder-decoder segmentation backbone with a per-pixel softmax head.
#[derive(Clone, Debug)]
pub struct Backbone<F: Real> {
    spec: ArchSpec,
    enc: Vec<DoubleConv<F>>,
    bottleneck: DoubleConv<F>,
    /// Decoder convolutions indexed by level (0 = full resolution).
    dec: Vec<Conv<F>>,
    head: Conv<F>,
    pub dropout_enabled: bool,
    dropout_rng: ChaCha8Rng,
}

struct BlockCache<F> {
    input: Array4<F>,
    act0: Array4<F>,
    act1: Array4<F>,
}

struct EncCache<F> {
    block: BlockCache<F>,
    pool_idx: Array4<u8>,
}

struct DecCache<F> {
    concat: Array4<F>,
    act: Array4<F>,
    dropout_mask: Option<Array2<F>>,
    out: Array4<F>,
}

/// Intermediate activations of one forward pass, retained for backprop.
pub struct ForwardCache<F> {
    enc: Vec<EncCache<F>>,
    bottleneck: BlockCache<F>,
    /// Decoder caches indexed by level (filled from the deepest level down).
    dec: Vec<Option<DecCache<F>>>,
    probs: Array4<F>,
}

impl<F: Real> Backbone<F> {
    /// Build a backbone with He-normal weights drawn deterministically from
    /// `seed`; the dropout stream is seeded from the same value.
    pub fn new(spec: ArchSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = stream(seed, "backbone-init", 0);
        let levels = spec.levels();
        let mut enc = Vec::with_capacity(levels - 1);
        let mut cin = spec.in_channels;
        for &width in &spec.widths[..levels - 1] {
            enc.push(DoubleConv::init(cin, width, &mut rng));
            cin = width;
        }
        let bottleneck = DoubleConv::init(cin, spec.widths[levels - 1], &mut rng);
        let mut dec = Vec::with_capacity(levels - 1);
        for i in 0..levels - 1 {
            dec.push(Conv::init(
                spec.widths[i],
                spec.widths[i + 1] + spec.widths[i],
                3,
                &mut rng,
            ));
        }
        let head = Conv::init(spec.num_classes, spec.widths[0], 1, &mut rng);
        Ok(Backbone {
            spec,
            enc,
            bottleneck,
            dec,
            head,
            dropout_enabled: false,
            dropout_rng: stream(seed, "dropout", 0),
        })
    }

    pub fn spec(&self) -> &ArchSpec {
        &self.spec
    }

    pub fn num_params(&self) -> usize {
        self.params().len()
    }

    /// Reseed the dropout stream (Monte-Carlo sampling saves and restores the
    /// state around its passes).
    pub fn reseed_dropout(&mut self, seed: u64) {
        self.dropout_rng = stream(seed, "dropout", 0);
    }

    pub fn dropout_rng_state(&self) -> ([u8; 32], u128) {
        (self.dropout_rng.get_seed(), self.dropout_rng.get_word_pos())
    }

    pub fn set_dropout_rng_state(&mut self, seed: [u8; 32], word_pos: u128) {
        use rand::SeedableRng;
        self.dropout_rng = ChaCha8Rng::from_seed(seed);
        self.dropout_rng.set_word_pos(word_pos);
    }

    fn check_input(&self, batch: &Array4<F>) -> Result<()> {
        let (_, h, w, c) = batch.dim();
        if c != self.spec.in_channels {
            return Err(Error::shape(format!(
                "expected {} input channels, got {c}",
                self.spec.in_channels
            )));
        }
        let f = self.spec.downsample_factor();
        if h % f != 0 || w % f != 0 {
            return Err(Error::shape(format!(
                "input {h}x{w} not divisible by downsampling factor {f}"
            )));
        }
        const SLACK: f64 = 1e-6;
        if batch.iter().any(|v| {
            let x = v.as_f64();
            x.is_nan() || x < -1.0 - SLACK || x > 1.0 + SLACK
        }) {
            return Err(Error::arg("input values must lie in [-1, 1]"));
        }
        Ok(())
    }

    /// Forward pass producing per-pixel class probabilities (B, H, W, C).
    /// Dropout is applied only when `dropout_enabled` is set.
    pub fn forward(&mut self, batch: &Array4<F>) -> Result<Array4<F>> {
        Ok(self.run(batch, false)?.0)
    }

    /// Forward pass retaining intermediate activations for [`Self::backward`].
    pub fn forward_cached(&mut self, batch: &Array4<F>) -> Result<(Array4<F>, ForwardCache<F>)> {
        let (probs, cache) = self.run(batch, true)?;
        Ok((probs, cache.expect("cache requested")))
    }

    /// Forward with dropout forced off, independent of `dropout_enabled`.
    pub fn forward_deterministic(&mut self, batch: &Array4<F>) -> Result<Array4<F>> {
        let saved = self.dropout_enabled;
        self.dropout_enabled = false;
        let out = self.forward(batch);
        self.dropout_enabled = saved;
        out
    }

    fn run(
        &mut self,
        batch: &Array4<F>,
        want_cache: bool,
    ) -> Result<(Array4<F>, Option<ForwardCache<F>>)> {
        self.check_input(batch)?;
        let slope = F::from_f64(LEAKY_SLOPE);
        let levels = self.spec.levels();
        let x = ops::to_nchw(batch);

        let mut enc_caches = Vec::new();
        let mut skips: Vec<Array4<F>> = Vec::with_capacity(levels - 1);
        let mut cur = x;
        for block in &self.enc {
            let input = cur;
            let act0 = ops::leaky_relu(&ops::conv2d(&input, &block.c0.weight, &block.c0.bias), slope);
            let act1 = ops::leaky_relu(&ops::conv2d(&act0, &block.c1.weight, &block.c1.bias), slope);
            let (pooled, pool_idx) = ops::max_pool2(&act1);
            skips.push(act1.clone());
            if want_cache {
                enc_caches.push(EncCache {
                    block: BlockCache { input, act0, act1 },
                    pool_idx,
                });
            }
            cur = pooled;
        }

        let bott_input = cur;
        let bott_act0 = ops::leaky_relu(
            &ops::conv2d(&bott_input, &self.bottleneck.c0.weight, &self.bottleneck.c0.bias),
            slope,
        );
        let bott_act1 = ops::leaky_relu(
            &ops::conv2d(&bott_act0, &self.bottleneck.c1.weight, &self.bottleneck.c1.bias),
            slope,
        );
        cur = bott_act1.clone();
        let bott_cache = BlockCache {
            input: bott_input,
            act0: bott_act0,
            act1: bott_act1,
        };

        let mut dec_caches: Vec<Option<DecCache<F>>> = (0..levels - 1).map(|_| None).collect();
        for i in (0..levels - 1).rev() {
            let up = ops::upsample2(&cur);
            let concat = ops::concat_channels(&up, &skips[i]);
            let act = ops::leaky_relu(
                &ops::conv2d(&concat, &self.dec[i].weight, &self.dec[i].bias),
                slope,
            );
            let (out, mask) = if self.dropout_enabled && self.spec.dropout_rates[i] > 0.0 {
                let (out, mask) =
                    ops::spatial_dropout(&act, self.spec.dropout_rates[i], &mut self.dropout_rng);
                (out, Some(mask))
            } else {
                (act.clone(), None)
            };
            cur = out.clone();
            if want_cache {
                dec_caches[i] = Some(DecCache {
                    concat,
                    act,
                    dropout_mask: mask,
                    out,
                });
            }
        }

        let logits = ops::conv2d(&cur, &self.head.weight, &self.head.bias);
        let probs = ops::softmax_head(&logits);

        let cache = want_cache.then(|| ForwardCache {
            enc: enc_caches,
            bottleneck: bott_cache,
            dec: dec_caches,
            probs: probs.clone(),
        });
        Ok((probs, cache))
    }

    /// Backpropagate `dprobs` (gradient of a scalar loss with respect to the
    /// probability output, laid out like the output) through the cached pass.
    /// Returns parameter gradients in [`Self::params`] order plus the input
    /// gradient in (B, H, W, C) layout.
    pub fn backward(&self, cache: &ForwardCache<F>, dprobs: &Array4<F>) -> (ParamVector<F>, Array4<F>) {
        let slope = F::from_f64(LEAKY_SLOPE);
        let levels = self.spec.levels();

        let dlogits = ops::softmax_head_backward(&cache.probs, dprobs);
        let head_in = &cache.dec[0].as_ref().expect("decoder cache").out;
        let (mut cur, dw_head, db_head) = ops::conv2d_backward(head_in, &self.head.weight, &dlogits);

        let mut dec_grads: Vec<(Array4<F>, Array1<F>)> = Vec::with_capacity(levels - 1);
        let mut dskips: Vec<Option<Array4<F>>> = (0..levels - 1).map(|_| None).collect();
        for i in 0..levels - 1 {
            let dc = cache.dec[i].as_ref().expect("decoder cache");
            if let Some(mask) = &dc.dropout_mask {
                cur = ops::spatial_dropout_backward(&cur, mask);
            }
            cur = ops::leaky_relu_backward(&dc.act, &cur, slope);
            let (dconcat, dw, db) = ops::conv2d_backward(&dc.concat, &self.dec[i].weight, &cur);
            dec_grads.push((dw, db));
            let (dup, dskip) = ops::split_channels(&dconcat, self.spec.widths[i + 1]);
            dskips[i] = Some(dskip);
            cur = ops::upsample2_backward(&dup);
        }

        let (dbott_in, bott_grads) = backward_double_conv(&self.bottleneck, &cache.bottleneck, &cur, slope);
        cur = dbott_in;

        let mut enc_grads: Vec<[(Array4<F>, Array1<F>); 2]> = Vec::with_capacity(levels - 1);
        for i in (0..levels - 1).rev() {
            let ec = &cache.enc[i];
            let mut dact1 = ops::max_pool2_backward(&cur, &ec.pool_idx);
            dact1 = dact1 + dskips[i].take().expect("skip gradient");
            let (dinput, grads) = backward_double_conv(&self.enc[i], &ec.block, &dact1, slope);
            enc_grads.push(grads);
            cur = dinput;
        }
        enc_grads.reverse();

        let mut blocks = Vec::new();
        for (i, [g0, g1]) in enc_grads.into_iter().enumerate() {
            push_conv_grad(&mut blocks, &format!("enc{i}.conv0"), g0);
            push_conv_grad(&mut blocks, &format!("enc{i}.conv1"), g1);
        }
        let [b0, b1] = bott_grads;
        push_conv_grad(&mut blocks, "bottleneck.conv0", b0);
        push_conv_grad(&mut blocks, "bottleneck.conv1", b1);
        for (i, g) in dec_grads.into_iter().enumerate() {
            push_conv_grad(&mut blocks, &format!("dec{i}.conv"), g);
        }
        push_conv_grad(&mut blocks, "head", (dw_head, db_head));

        (ParamVector::new(blocks), ops::to_nhwc(&cur))
    }

    /// Snapshot all parameters as a flat, ordered, named vector.
    pub fn params(&self) -> ParamVector<F> {
        let mut blocks = Vec::new();
        for (i, block) in self.enc.iter().enumerate() {
            push_conv_params(&mut blocks, &format!("enc{i}.conv0"), &block.c0);
            push_conv_params(&mut blocks, &format!("enc{i}.conv1"), &block.c1);
        }
        push_conv_params(&mut blocks, "bottleneck.conv0", &self.bottleneck.c0);
        push_conv_params(&mut blocks, "bottleneck.conv1", &self.bottleneck.c1);
        for (i, conv) in self.dec.iter().enumerate() {
            push_conv_params(&mut blocks, &format!("dec{i}.conv"), conv);
        }
        push_conv_params(&mut blocks, "head", &self.head);
        ParamVector::new(blocks)
    }

    /// Replace all parameters from a vector produced by a backbone with the
    /// same architecture spec; the round-trip through [`Self::params`] is
    /// bit-exact.
    pub fn set_params(&mut self, params: &ParamVector<F>) -> Result<()> {
        let expected = self.params();
        if !expected.same_layout(params) {
            return Err(Error::shape(
                "parameter vector layout does not match this backbone".to_string(),
            ));
        }
        let mut it = params.blocks().iter();
        let levels = self.spec.levels();
        for i in 0..levels - 1 {
            take_conv_params(&mut it, &mut self.enc[i].c0);
            take_conv_params(&mut it, &mut self.enc[i].c1);
        }
        take_conv_params(&mut it, &mut self.bottleneck.c0);
        take_conv_params(&mut it, &mut self.bottleneck.c1);
        for i in 0..levels - 1 {
            take_conv_params(&mut it, &mut self.dec[i]);
        }
        take_conv_params(&mut it, &mut self.head);
        Ok(())
    }
}

fn backward_double_conv<F: Real>(
    block: &DoubleConv<F>,
    cache: &BlockCache<F>,
    dout: &Array4<F>,
    slope: F,
) -> (Array4<F>, [(Array4<F>, Array1<F>); 2]) {
    let d1 = ops::leaky_relu_backward(&cache.act1, dout, slope);
    let (dact0, dw1, db1) = ops::conv2d_backward(&cache.act0, &block.c1.weight, &d1);
    let d0 = ops::leaky_relu_backward(&cache.act0, &dact0, slope);
    let (dinput, dw0, db0) = ops::conv2d_backward(&cache.input, &block.c0.weight, &d0);
    (dinput, [(dw0, db0), (dw1, db1)])
}

fn push_conv_params<F: Real>(blocks: &mut Vec<ParamBlock<F>>, name: &str, conv: &Conv<F>) {
    blocks.push(ParamBlock {
        name: format!("{name}.weight"),
        shape: conv.weight.shape().to_vec(),
        values: conv.weight.iter().copied().collect(),
    });
    blocks.push(ParamBlock {
        name: format!("{name}.bias"),
        shape: conv.bias.shape().to_vec(),
        values: conv.bias.iter().copied().collect(),
    });
}

fn push_conv_grad<F: Real>(
    blocks: &mut Vec<ParamBlock<F>>,
    name: &str,
    grad: (Array4<F>, Array1<F>),
) {
    blocks.push(ParamBlock {
        name: format!("{name}.weight"),
        shape: grad.0.shape().to_vec(),
        values: grad.0.iter().copied().collect(),
    });
    blocks.push(ParamBlock {
        name: format!("{name}.bias"),
        shape: grad.1.shape().to_vec(),
        values: grad.1.iter().copied().collect(),
    });
}

fn take_conv_params<'a, F: Real>(
    it: &mut std::slice::Iter<'a, ParamBlock<F>>,
    conv: &mut Conv<F>,
) {
    let wb = it.next().expect("weight block");
    for (dst, src) in conv.weight.iter_mut().zip(wb.values.iter()) {
        *dst = *src;
    }
    let bb = it.next().expect("bias block");
    for (dst, src) in conv.bias.iter_mut().zip(bb.values.iter()) {
        *dst = *src;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array4;

    fn tiny_spec() -> ArchSpec {
        ArchSpec::uniform_dropout(2, vec![4, 8], 0.5)
    }

    fn batch(b: usize, h: usize, w: usize) -> Array4<f64> {
        let mut state = 99u64;
        Array4::from_shape_simple_fn((b, h, w, 3), move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 1.8 - 0.9
        })
    }

    #[test]
    fn output_is_a_probability_simplex() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 0).unwrap();
        let x = batch(2, 8, 12);
        let probs = net.forward(&x).unwrap();
        assert_eq!(probs.dim(), (2, 8, 12, 2));
        for bi in 0..2 {
            for y in 0..8 {
                for xx in 0..12 {
                    let s: f64 = (0..2).map(|c| probs[(bi, y, xx, c)]).sum();
                    assert!((s - 1.0).abs() < 1e-5);
                    for c in 0..2 {
                        let p = probs[(bi, y, xx, c)];
                        assert!(p > 0.0 && p < 1.0);
                    }
                }
            }
        }
    }

    #[test]
    fn forward_without_dropout_is_deterministic() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 1).unwrap();
        let x = batch(1, 8, 8);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn forward_with_dropout_varies() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 1).unwrap();
        net.dropout_enabled = true;
        let x = batch(1, 8, 8);
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_ne!(a, b);
    }

    #[test]
    fn same_seed_same_initial_params() {
        let a = Backbone::<f32>::new(tiny_spec(), 42).unwrap();
        let b = Backbone::<f32>::new(tiny_spec(), 42).unwrap();
        assert_eq!(a.params(), b.params());
        let c = Backbone::<f32>::new(tiny_spec(), 43).unwrap();
        assert_ne!(a.params(), c.params());
    }

    #[test]
    fn params_roundtrip_is_bit_exact() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 5).unwrap();
        let x = batch(1, 8, 8);
        let before = net.forward(&x).unwrap();
        let p = net.params();
        net.set_params(&p).unwrap();
        assert_eq!(p, net.params());
        let after = net.forward(&x).unwrap();
        assert_eq!(before, after);
    }

    #[test]
    fn zero_params_give_uniform_output() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 7).unwrap();
        let zeros = net.params().zeros_like();
        net.set_params(&zeros).unwrap();
        let probs = net.forward(&batch(1, 8, 8)).unwrap();
        for v in probs.iter() {
            assert!((v - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn blended_params_are_accepted() {
        let a = Backbone::<f64>::new(tiny_spec(), 1).unwrap().params();
        let b = Backbone::<f64>::new(tiny_spec(), 2).unwrap().params();
        let mix = a.blend(&b, 0.5).unwrap();
        let mut net = Backbone::<f64>::new(tiny_spec(), 3).unwrap();
        net.set_params(&mix).unwrap();
    }

    #[test]
    fn rejects_bad_inputs() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 0).unwrap();
        // Wrong channel count.
        let bad = Array4::<f64>::zeros((1, 8, 8, 4));
        assert!(net.forward(&bad).is_err());
        // Not divisible by the downsampling factor.
        let bad = Array4::<f64>::zeros((1, 7, 8, 3));
        assert!(net.forward(&bad).is_err());
        // Out of range values.
        let bad = Array4::<f64>::from_elem((1, 8, 8, 3), 2.0);
        assert!(net.forward(&bad).is_err());
    }

    #[test]
    fn dropout_rng_state_roundtrip() {
        let mut net = Backbone::<f64>::new(tiny_spec(), 0).unwrap();
        net.dropout_enabled = true;
        let x = batch(1, 8, 8);
        let (seed, pos) = net.dropout_rng_state();
        let a = net.forward(&x).unwrap();
        net.set_dropout_rng_state(seed, pos);
        let b = net.forward(&x).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn backward_matches_finite_differences_on_sampled_params() {
        use crate::datagen::one_hot;
        use crate::losses;

        let spec = ArchSpec::uniform_dropout(2, vec![4, 8], 0.0);
        let mut net = Backbone::<f64>::new(spec, 11).unwrap();
        let x = batch(1, 8, 8);
        let labels = ndarray::Array2::from_shape_fn((8, 8), |(r, c)| ((r + c) % 2) as u8);
        let y = one_hot(&labels, 2);

        let loss_of = |net: &mut Backbone<f64>| -> f64 {
            let probs = net.forward(&x).unwrap();
            let img = probs.index_axis(ndarray::Axis(0), 0).to_owned();
            losses::cross_entropy(&img, &y).unwrap()
        };

        let (probs, cache) = net.forward_cached(&x).unwrap();
        let img = probs.index_axis(ndarray::Axis(0), 0).to_owned();
        let dimg = losses::cross_entropy_grad(&img, &y).unwrap();
        let dprobs = dimg.insert_axis(ndarray::Axis(0));
        let (grads, _) = net.backward(&cache, &dprobs);

        let mut rng = crate::rng::stream(3, "gradcheck", 0);
        let p0 = net.params();
        let n = p0.len();
        use rand::Rng;
        for _ in 0..5 {
            let flat_idx = rng.random_range(0..n);
            let analytic = *grads.iter().nth(flat_idx).unwrap();
            let h = 1e-5;
            let mut plus = p0.clone();
            *plus.iter_mut().nth(flat_idx).unwrap() += h;
            net.set_params(&plus).unwrap();
            let lp = loss_of(&mut net);
            let mut minus = p0.clone();
            *minus.iter_mut().nth(flat_idx).unwrap() -= h;
            net.set_params(&minus).unwrap();
            let lm = loss_of(&mut net);
            net.set_params(&p0).unwrap();
            let fd = (lp - lm) / (2.0 * h);
            let denom = analytic.abs().max(fd.abs()).max(1e-8);
            assert!(
                (analytic - fd).abs() / denom < 1e-3,
                "param {flat_idx}: analytic {analytic} vs fd {fd}"
            );
        }
    }
}

//! Tensor primitives with explicit backward passes. Activations are laid out
//! (B, C, H, W); convolutions run as im2col + GEMM so the heavy lifting stays
//! inside the matrix-multiply kernel.

use ndarray::linalg::general_mat_mul;
use ndarray::{Array1, Array2, Array4, ArrayView3, Axis};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::num::Real;

/// Gather k x k neighborhoods into `cols` of shape (C*k*k, H*W). Out-of-image
/// taps stay zero.
fn im2col<F: Real>(x: &ArrayView3<F>, k: usize, pad: usize, cols: &mut Array2<F>) {
    let (cin, h, w) = x.dim();
    debug_assert_eq!(cols.dim(), (cin * k * k, h * w));
    cols.fill(F::zero());
    for ci in 0..cin {
        let plane = x.index_axis(Axis(0), ci);
        for dy in 0..k {
            for dx in 0..k {
                let row_idx = (ci * k + dy) * k + dx;
                let mut crow = cols.row_mut(row_idx);
                let crow = crow.as_slice_mut().expect("cols row contiguous");
                for y in 0..h {
                    let sy = y as isize + dy as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = pad.saturating_sub(dx);
                    let x1 = (w + pad).saturating_sub(dx).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    let src_row = plane.index_axis(Axis(0), sy as usize);
                    let src = src_row.as_slice().expect("input row contiguous");
                    let s0 = x0 + dx - pad;
                    crow[y * w + x0..y * w + x1].copy_from_slice(&src[s0..s0 + (x1 - x0)]);
                }
            }
        }
    }
}

/// Scatter-add the transpose of [`im2col`]: accumulate column gradients back
/// onto the input grid.
fn col2im_add<F: Real>(cols: &Array2<F>, k: usize, pad: usize, dx_out: &mut ndarray::ArrayViewMut3<F>) {
    let (cin, h, w) = dx_out.dim();
    debug_assert_eq!(cols.dim(), (cin * k * k, h * w));
    for ci in 0..cin {
        let mut plane = dx_out.index_axis_mut(Axis(0), ci);
        for dy in 0..k {
            for dxk in 0..k {
                let row_idx = (ci * k + dy) * k + dxk;
                let crow = cols.row(row_idx);
                let crow = crow.as_slice().expect("cols row contiguous");
                for y in 0..h {
                    let sy = y as isize + dy as isize - pad as isize;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    let x0 = pad.saturating_sub(dxk);
                    let x1 = (w + pad).saturating_sub(dxk).min(w);
                    if x0 >= x1 {
                        continue;
                    }
                    let mut dst_row = plane.index_axis_mut(Axis(0), sy as usize);
                    let dst = dst_row.as_slice_mut().expect("grad row contiguous");
                    let s0 = x0 + dxk - pad;
                    for (d, s) in dst[s0..s0 + (x1 - x0)]
                        .iter_mut()
                        .zip(&crow[y * w + x0..y * w + x1])
                    {
                        *d = *d + *s;
                    }
                }
            }
        }
    }
}

/// Stride-1 convolution with square kernel and symmetric zero padding
/// `pad = (k-1)/2`, preserving the spatial size.
pub fn conv2d<F: Real>(x: &Array4<F>, weight: &Array4<F>, bias: &Array1<F>) -> Array4<F> {
    let (b, cin, h, w) = x.dim();
    let (cout, cin_w, k, k2) = weight.dim();
    debug_assert_eq!(cin, cin_w);
    debug_assert_eq!(k, k2);
    let pad = (k - 1) / 2;
    let w_mat = weight
        .view()
        .into_shape_with_order((cout, cin * k * k))
        .expect("weight contiguous");
    let mut out = Array4::<F>::zeros((b, cout, h, w));
    let mut cols = Array2::<F>::zeros((cin * k * k, h * w));
    for bi in 0..b {
        let xb = x.index_axis(Axis(0), bi);
        im2col(&xb, k, pad, &mut cols);
        let out_b = out.index_axis_mut(Axis(0), bi);
        let mut out_mat = out_b
            .into_shape_with_order((cout, h * w))
            .expect("output contiguous");
        general_mat_mul(F::one(), &w_mat, &cols.view(), F::zero(), &mut out_mat);
        for o in 0..cout {
            let bv = bias[o];
            out_mat.row_mut(o).mapv_inplace(|v| v + bv);
        }
    }
    out
}

/// Backward pass of [`conv2d`]: gradients for the input, weight and bias.
pub fn conv2d_backward<F: Real>(
    x: &Array4<F>,
    weight: &Array4<F>,
    dout: &Array4<F>,
) -> (Array4<F>, Array4<F>, Array1<F>) {
    let (b, cin, h, w) = x.dim();
    let (cout, _, k, _) = weight.dim();
    let pad = (k - 1) / 2;
    let w_mat = weight
        .view()
        .into_shape_with_order((cout, cin * k * k))
        .expect("weight contiguous");
    let mut dx = Array4::<F>::zeros((b, cin, h, w));
    let mut dw = Array4::<F>::zeros(weight.raw_dim());
    let mut db = Array1::<F>::zeros(cout);
    let mut cols = Array2::<F>::zeros((cin * k * k, h * w));
    let mut dcols = Array2::<F>::zeros((cin * k * k, h * w));
    {
        let mut dw_mat = dw
            .view_mut()
            .into_shape_with_order((cout, cin * k * k))
            .expect("weight grad contiguous");
        for bi in 0..b {
            let xb = x.index_axis(Axis(0), bi);
            im2col(&xb, k, pad, &mut cols);
            let dout_b = dout.index_axis(Axis(0), bi);
            let dout_mat = dout_b
                .into_shape_with_order((cout, h * w))
                .expect("dout contiguous");
            general_mat_mul(F::one(), &dout_mat, &cols.t(), F::one(), &mut dw_mat);
            for o in 0..cout {
                db[o] = db[o] + dout_mat.row(o).sum();
            }
            general_mat_mul(F::one(), &w_mat.t(), &dout_mat, F::zero(), &mut dcols);
            let mut dx_b = dx.index_axis_mut(Axis(0), bi);
            col2im_add(&dcols, k, pad, &mut dx_b);
        }
    }
    (dx, dw, db)
}

pub fn leaky_relu<F: Real>(x: &Array4<F>, slope: F) -> Array4<F> {
    x.mapv(|v| if v > F::zero() { v } else { v * slope })
}

/// Backward from the activation output: the output sign equals the input sign
/// for positive slopes.
pub fn leaky_relu_backward<F: Real>(y: &Array4<F>, dy: &Array4<F>, slope: F) -> Array4<F> {
    let mut dx = dy.clone();
    dx.zip_mut_with(y, |d, &v| {
        if v <= F::zero() {
            *d = *d * slope;
        }
    });
    dx
}

/// 2x2 max pooling with stride 2. Ties resolve to the first maximum in
/// (0,0), (0,1), (1,0), (1,1) scan order, recorded in the returned index map.
pub fn max_pool2<F: Real>(x: &Array4<F>) -> (Array4<F>, Array4<u8>) {
    let (b, c, h, w) = x.dim();
    debug_assert!(h % 2 == 0 && w % 2 == 0);
    let (oh, ow) = (h / 2, w / 2);
    let mut out = Array4::<F>::zeros((b, c, oh, ow));
    let mut idx = Array4::<u8>::zeros((b, c, oh, ow));
    for bi in 0..b {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = x[(bi, ci, oy * 2, ox * 2)];
                    let mut best_k = 0u8;
                    for k in 1..4u8 {
                        let v = x[(bi, ci, oy * 2 + (k / 2) as usize, ox * 2 + (k % 2) as usize)];
                        if v > best {
                            best = v;
                            best_k = k;
                        }
                    }
                    out[(bi, ci, oy, ox)] = best;
                    idx[(bi, ci, oy, ox)] = best_k;
                }
            }
        }
    }
    (out, idx)
}

pub fn max_pool2_backward<F: Real>(dy: &Array4<F>, idx: &Array4<u8>) -> Array4<F> {
    let (b, c, oh, ow) = dy.dim();
    let mut dx = Array4::<F>::zeros((b, c, oh * 2, ow * 2));
    for bi in 0..b {
        for ci in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let k = idx[(bi, ci, oy, ox)];
                    let (ry, rx) = (oy * 2 + (k / 2) as usize, ox * 2 + (k % 2) as usize);
                    dx[(bi, ci, ry, rx)] = dy[(bi, ci, oy, ox)];
                }
            }
        }
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2<F: Real>(x: &Array4<F>) -> Array4<F> {
    let (b, c, h, w) = x.dim();
    let mut out = Array4::<F>::zeros((b, c, h * 2, w * 2));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    let v = x[(bi, ci, y, xx)];
                    out[(bi, ci, 2 * y, 2 * xx)] = v;
                    out[(bi, ci, 2 * y, 2 * xx + 1)] = v;
                    out[(bi, ci, 2 * y + 1, 2 * xx)] = v;
                    out[(bi, ci, 2 * y + 1, 2 * xx + 1)] = v;
                }
            }
        }
    }
    out
}

pub fn upsample2_backward<F: Real>(dy: &Array4<F>) -> Array4<F> {
    let (b, c, h2, w2) = dy.dim();
    let (h, w) = (h2 / 2, w2 / 2);
    let mut dx = Array4::<F>::zeros((b, c, h, w));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for xx in 0..w {
                    dx[(bi, ci, y, xx)] = dy[(bi, ci, 2 * y, 2 * xx)]
                        + dy[(bi, ci, 2 * y, 2 * xx + 1)]
                        + dy[(bi, ci, 2 * y + 1, 2 * xx)]
                        + dy[(bi, ci, 2 * y + 1, 2 * xx + 1)];
                }
            }
        }
    }
    dx
}

pub fn concat_channels<F: Real>(a: &Array4<F>, b: &Array4<F>) -> Array4<F> {
    ndarray::concatenate(Axis(1), &[a.view(), b.view()]).expect("channel concat")
}

pub fn split_channels<F: Real>(d: &Array4<F>, c_first: usize) -> (Array4<F>, Array4<F>) {
    let first = d.slice(ndarray::s![.., ..c_first, .., ..]).to_owned();
    let second = d.slice(ndarray::s![.., c_first.., .., ..]).to_owned();
    (first, second)
}

/// Channel-wise (spatial) dropout: whole feature maps are zeroed per sample
/// with probability `rate`, survivors are rescaled by 1/(1-rate). Returns the
/// scale mask per (sample, channel).
pub fn spatial_dropout<F: Real>(
    x: &Array4<F>,
    rate: f64,
    rng: &mut ChaCha8Rng,
) -> (Array4<F>, Array2<F>) {
    let (b, c, _, _) = x.dim();
    let keep_scale = F::from_f64(1.0 / (1.0 - rate));
    let mut mask = Array2::<F>::zeros((b, c));
    for bi in 0..b {
        for ci in 0..c {
            let drop: f64 = rng.random_range(0.0..1.0);
            mask[(bi, ci)] = if drop < rate { F::zero() } else { keep_scale };
        }
    }
    let mut out = x.clone();
    for bi in 0..b {
        for ci in 0..c {
            let m = mask[(bi, ci)];
            out.index_axis_mut(Axis(0), bi)
                .index_axis_mut(Axis(0), ci)
                .mapv_inplace(|v| v * m);
        }
    }
    (out, mask)
}

pub fn spatial_dropout_backward<F: Real>(dy: &Array4<F>, mask: &Array2<F>) -> Array4<F> {
    let (b, c, _, _) = dy.dim();
    let mut dx = dy.clone();
    for bi in 0..b {
        for ci in 0..c {
            let m = mask[(bi, ci)];
            dx.index_axis_mut(Axis(0), bi)
                .index_axis_mut(Axis(0), ci)
                .mapv_inplace(|v| v * m);
        }
    }
    dx
}

/// Per-pixel softmax over channels, emitting (B, H, W, C) probability maps.
pub fn softmax_head<F: Real>(logits: &Array4<F>) -> Array4<F> {
    let (b, c, h, w) = logits.dim();
    let mut probs = Array4::<F>::zeros((b, h, w, c));
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let mut maxv = logits[(bi, 0, y, x)];
                for ci in 1..c {
                    let v = logits[(bi, ci, y, x)];
                    if v > maxv {
                        maxv = v;
                    }
                }
                let mut sum = F::zero();
                for ci in 0..c {
                    let e = (logits[(bi, ci, y, x)] - maxv).exp();
                    probs[(bi, y, x, ci)] = e;
                    sum = sum + e;
                }
                for ci in 0..c {
                    probs[(bi, y, x, ci)] = probs[(bi, y, x, ci)] / sum;
                }
            }
        }
    }
    probs
}

/// Backward through the softmax head: maps (B, H, W, C) probability gradients
/// to (B, C, H, W) logit gradients.
pub fn softmax_head_backward<F: Real>(probs: &Array4<F>, dprobs: &Array4<F>) -> Array4<F> {
    let (b, h, w, c) = probs.dim();
    let mut dlogits = Array4::<F>::zeros((b, c, h, w));
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                let mut dot = F::zero();
                for ci in 0..c {
                    dot = dot + probs[(bi, y, x, ci)] * dprobs[(bi, y, x, ci)];
                }
                for ci in 0..c {
                    let p = probs[(bi, y, x, ci)];
                    dlogits[(bi, ci, y, x)] = p * (dprobs[(bi, y, x, ci)] - dot);
                }
            }
        }
    }
    dlogits
}

/// Reorder an image batch (B, H, W, C) into network layout (B, C, H, W).
pub fn to_nchw<F: Real>(batch: &Array4<F>) -> Array4<F> {
    let (b, h, w, c) = batch.dim();
    let mut out = Array4::<F>::zeros((b, c, h, w));
    for bi in 0..b {
        for y in 0..h {
            for x in 0..w {
                for ci in 0..c {
                    out[(bi, ci, y, x)] = batch[(bi, y, x, ci)];
                }
            }
        }
    }
    out
}

/// Inverse of [`to_nchw`].
pub fn to_nhwc<F: Real>(batch: &Array4<F>) -> Array4<F> {
    let (b, c, h, w) = batch.dim();
    let mut out = Array4::<F>::zeros((b, h, w, c));
    for bi in 0..b {
        for ci in 0..c {
            for y in 0..h {
                for x in 0..w {
                    out[(bi, y, x, ci)] = batch[(bi, ci, y, x)];
                }
            }
        }
    }
    out
}

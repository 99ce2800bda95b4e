//! Layer primitives with manual forward/backward passes: 2-D convolution,
//! batch normalization, channel-wise spectral-temporal attention and the
//! split projection head.

use ndarray::{Array1, Array2, Array3, Array4};
use rayon::prelude::*;

use crate::num::Scalar;

/// 2-D convolution, no bias (batch norm follows every convolution).
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    /// (out_channels, in_channels, kh, kw)
    pub weight: Array4<T>,
    pub stride: usize,
    pub pad: usize,
}

/// Valid output range along one axis for a given kernel offset: all `o` with
/// 0 <= o*stride + k - pad < len.
#[inline]
fn valid_range(len: usize, out_len: usize, stride: usize, pad: usize, k: usize) -> (usize, usize) {
    let lo = if k >= pad {
        0
    } else {
        (pad - k).div_ceil(stride)
    };
    let hi_excl = (len + pad - k + stride - 1) / stride;
    (lo.min(out_len), hi_excl.min(out_len))
}

impl<T: Scalar> Conv2d<T> {
    pub fn out_spatial(&self, h: usize, w: usize) -> (usize, usize) {
        let (_, _, kh, kw) = self.weight.dim();
        (
            (h + 2 * self.pad - kh) / self.stride + 1,
            (w + 2 * self.pad - kw) / self.stride + 1,
        )
    }

    /// x: (N, C_in, H, W) -> (N, C_out, OH, OW), zero padding.
    pub fn forward(&self, x: &Array4<T>) -> Array4<T> {
        let (n, ci, h, w) = x.dim();
        let (co, ci2, kh, kw) = self.weight.dim();
        assert_eq!(ci, ci2, "conv input channels");
        let (oh, ow) = self.out_spatial(h, w);
        let stride = self.stride;
        let pad = self.pad;

        let xs = x.as_slice().expect("contiguous");
        let ws = self.weight.as_slice().expect("contiguous");
        let mut out = Array4::<T>::zeros((n, co, oh, ow));
        let sample = co * oh * ow;
        out.as_slice_mut()
            .unwrap()
            .par_chunks_mut(sample)
            .enumerate()
            .for_each(|(ni, ochunk)| {
                let xbase = ni * ci * h * w;
                for c_out in 0..co {
                    let oplane = &mut ochunk[c_out * oh * ow..(c_out + 1) * oh * ow];
                    for c_in in 0..ci {
                        let xplane = &xs[xbase + c_in * h * w..xbase + (c_in + 1) * h * w];
                        for ky in 0..kh {
                            let (oy_lo, oy_hi) = valid_range(h, oh, stride, pad, ky);
                            for kx in 0..kw {
                                let wv = ws[((c_out * ci + c_in) * kh + ky) * kw + kx];
                                if wv == T::zero() {
                                    continue;
                                }
                                let (ox_lo, ox_hi) = valid_range(w, ow, stride, pad, kx);
                                for oy in oy_lo..oy_hi {
                                    let iy = oy * stride + ky - pad;
                                    let xrow = &xplane[iy * w..(iy + 1) * w];
                                    let orow = &mut oplane[oy * ow..(oy + 1) * ow];
                                    for ox in ox_lo..ox_hi {
                                        let ix = ox * stride + kx - pad;
                                        orow[ox] += wv * xrow[ix];
                                    }
                                }
                            }
                        }
                    }
                }
            });
        out
    }

    /// Returns (grad_input, grad_weight).
    pub fn backward(&self, x: &Array4<T>, gy: &Array4<T>) -> (Array4<T>, Array4<T>) {
        let (n, ci, h, w) = x.dim();
        let (co, _, kh, kw) = self.weight.dim();
        let (_, _, oh, ow) = gy.dim();
        let stride = self.stride;
        let pad = self.pad;

        let xs = x.as_slice().expect("contiguous");
        let ws = self.weight.as_slice().expect("contiguous");
        let gys = gy.as_slice().expect("contiguous");

        // Weight gradient: one output-channel slab per task.
        let mut gw = Array4::<T>::zeros(self.weight.dim());
        gw.as_slice_mut()
            .unwrap()
            .par_chunks_mut(ci * kh * kw)
            .enumerate()
            .for_each(|(c_out, gw_chunk)| {
                for ni in 0..n {
                    let gplane = &gys[(ni * co + c_out) * oh * ow..(ni * co + c_out + 1) * oh * ow];
                    for c_in in 0..ci {
                        let xplane = &xs[(ni * ci + c_in) * h * w..(ni * ci + c_in + 1) * h * w];
                        for ky in 0..kh {
                            let (oy_lo, oy_hi) = valid_range(h, oh, stride, pad, ky);
                            for kx in 0..kw {
                                let (ox_lo, ox_hi) = valid_range(w, ow, stride, pad, kx);
                                let mut acc = T::zero();
                                for oy in oy_lo..oy_hi {
                                    let iy = oy * stride + ky - pad;
                                    let xrow = &xplane[iy * w..(iy + 1) * w];
                                    let grow = &gplane[oy * ow..(oy + 1) * ow];
                                    for ox in ox_lo..ox_hi {
                                        acc += grow[ox] * xrow[ox * stride + kx - pad];
                                    }
                                }
                                gw_chunk[(c_in * kh + ky) * kw + kx] += acc;
                            }
                        }
                    }
                }
            });

        // Input gradient: one sample per task.
        let mut gx = Array4::<T>::zeros(x.dim());
        gx.as_slice_mut()
            .unwrap()
            .par_chunks_mut(ci * h * w)
            .enumerate()
            .for_each(|(ni, gx_chunk)| {
                for c_out in 0..co {
                    let gplane = &gys[(ni * co + c_out) * oh * ow..(ni * co + c_out + 1) * oh * ow];
                    for c_in in 0..ci {
                        let gxplane = &mut gx_chunk[c_in * h * w..(c_in + 1) * h * w];
                        for ky in 0..kh {
                            let (oy_lo, oy_hi) = valid_range(h, oh, stride, pad, ky);
                            for kx in 0..kw {
                                let wv = ws[((c_out * ci + c_in) * kh + ky) * kw + kx];
                                if wv == T::zero() {
                                    continue;
                                }
                                let (ox_lo, ox_hi) = valid_range(w, ow, stride, pad, kx);
                                for oy in oy_lo..oy_hi {
                                    let iy = oy * stride + ky - pad;
                                    let grow = &gplane[oy * ow..(oy + 1) * ow];
                                    let gxrow = &mut gxplane[iy * w..(iy + 1) * w];
                                    for ox in ox_lo..ox_hi {
                                        gxrow[ox * stride + kx - pad] += wv * grow[ox];
                                    }
                                }
                            }
                        }
                    }
                }
            });

        (gx, gw)
    }
}

/// Per-channel batch normalization. Training uses batch statistics and
/// maintains running estimates for inference.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Array1<T>,
    pub beta: Array1<T>,
    pub running_mean: Array1<T>,
    pub running_var: Array1<T>,
    pub eps: T,
    pub momentum: T,
}

#[derive(Debug, Clone)]
pub struct BnCache<T> {
    pub xhat: Array4<T>,
    pub var: Array1<T>,
}

impl<T: Scalar> BatchNorm<T> {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Array1::ones(channels),
            beta: Array1::zeros(channels),
            running_mean: Array1::zeros(channels),
            running_var: Array1::ones(channels),
            eps: T::from_f64(1e-5),
            momentum: T::from_f64(0.9),
        }
    }

    /// Batch-statistics forward; updates the running estimates in place.
    pub fn forward_train(&mut self, x: &Array4<T>) -> (Array4<T>, BnCache<T>) {
        let (n, c, h, w) = x.dim();
        let count = T::from_f64((n * h * w) as f64);
        let xs = x.as_slice().unwrap();
        let plane = h * w;

        let mut mean = Array1::<T>::zeros(c);
        let mut var = Array1::<T>::zeros(c);
        for ch in 0..c {
            let mut s = T::zero();
            for ni in 0..n {
                let base = (ni * c + ch) * plane;
                for &v in &xs[base..base + plane] {
                    s += v;
                }
            }
            let m = s / count;
            let mut sv = T::zero();
            for ni in 0..n {
                let base = (ni * c + ch) * plane;
                for &v in &xs[base..base + plane] {
                    let d = v - m;
                    sv += d * d;
                }
            }
            mean[ch] = m;
            var[ch] = sv / count;
        }

        for ch in 0..c {
            self.running_mean[ch] =
                self.momentum * self.running_mean[ch] + (T::one() - self.momentum) * mean[ch];
            self.running_var[ch] =
                self.momentum * self.running_var[ch] + (T::one() - self.momentum) * var[ch];
        }

        let mut xhat = Array4::<T>::zeros(x.dim());
        let mut y = Array4::<T>::zeros(x.dim());
        {
            let xh = xhat.as_slice_mut().unwrap();
            let ys = y.as_slice_mut().unwrap();
            for ni in 0..n {
                for ch in 0..c {
                    let inv = (var[ch] + self.eps).sqrt().recip();
                    let (g, b, m) = (self.gamma[ch], self.beta[ch], mean[ch]);
                    let base = (ni * c + ch) * plane;
                    for i in base..base + plane {
                        let v = (xs[i] - m) * inv;
                        xh[i] = v;
                        ys[i] = g * v + b;
                    }
                }
            }
        }
        (y, BnCache { xhat, var })
    }

    /// Inference forward with frozen running statistics.
    pub fn forward_infer(&self, x: &Array4<T>) -> Array4<T> {
        let (n, c, h, w) = x.dim();
        let plane = h * w;
        let xs = x.as_slice().unwrap();
        let mut y = Array4::<T>::zeros(x.dim());
        let ys = y.as_slice_mut().unwrap();
        for ni in 0..n {
            for ch in 0..c {
                let inv = (self.running_var[ch] + self.eps).sqrt().recip();
                let (g, b, m) = (self.gamma[ch], self.beta[ch], self.running_mean[ch]);
                let base = (ni * c + ch) * plane;
                for i in base..base + plane {
                    ys[i] = g * (xs[i] - m) * inv + b;
                }
            }
        }
        y
    }

    /// Returns (grad_x, grad_gamma, grad_beta) for the batch-stats forward.
    pub fn backward(&self, cache: &BnCache<T>, gy: &Array4<T>) -> (Array4<T>, Array1<T>, Array1<T>) {
        let (n, c, h, w) = gy.dim();
        let plane = h * w;
        let count = T::from_f64((n * h * w) as f64);
        let gys = gy.as_slice().unwrap();
        let xh = cache.xhat.as_slice().unwrap();

        let mut ggamma = Array1::<T>::zeros(c);
        let mut gbeta = Array1::<T>::zeros(c);
        for ch in 0..c {
            let mut s1 = T::zero();
            let mut s2 = T::zero();
            for ni in 0..n {
                let base = (ni * c + ch) * plane;
                for i in base..base + plane {
                    s1 += gys[i];
                    s2 += gys[i] * xh[i];
                }
            }
            gbeta[ch] = s1;
            ggamma[ch] = s2;
        }

        let mut gx = Array4::<T>::zeros(gy.dim());
        {
            let gxs = gx.as_slice_mut().unwrap();
            for ni in 0..n {
                for ch in 0..c {
                    let inv = (cache.var[ch] + self.eps).sqrt().recip();
                    let scale = self.gamma[ch] * inv;
                    let m1 = gbeta[ch] / count;
                    let m2 = ggamma[ch] / count;
                    let base = (ni * c + ch) * plane;
                    for i in base..base + plane {
                        gxs[i] = scale * (gys[i] - m1 - xh[i] * m2);
                    }
                }
            }
        }
        (gx, ggamma, gbeta)
    }
}

fn i_to_idx() {}

/// ReLU; the mask is recovered from the cached output.
pub fn relu<T: Scalar>(x: &Array4<T>) -> Array4<T> {
    x.mapv(|v| if v > T::zero() { v } else { T::zero() })
}

pub fn relu_backward<T: Scalar>(y: &Array4<T>, gy: &Array4<T>) -> Array4<T> {
    let mut gx = gy.clone();
    gx.zip_mut_with(y, |g, &yv| {
        if yv <= T::zero() {
            *g = T::zero();
        }
    });
    gx
}

/// Channel-wise spectral-temporal attention.
///
/// Per channel c the temporal weights are a softmax over time of the
/// frequency-projected features, the spectral weights a softmax over
/// frequency of the time-projected features, and the mask is their outer
/// product scaled by S. Softmax normalization forces the mask mass per
/// channel to equal S.
#[derive(Debug, Clone)]
pub struct Attention<T> {
    /// (C, T'): projection weights for the spectral branch.
    pub w_spect: Array2<T>,
    /// (C, F'): projection weights for the temporal branch.
    pub w_temp: Array2<T>,
    pub scale: T,
}

#[derive(Debug, Clone)]
pub struct AttnCache<T> {
    /// Input to the attention stage, (N, C, F, T).
    pub x: Array4<T>,
    /// (N, C, F)
    pub a_spect: Array3<T>,
    /// (N, C, T)
    pub a_temp: Array3<T>,
}

fn softmax_inplace<T: Scalar>(v: &mut [T]) {
    let mut max = T::neg_infinity();
    for &x in v.iter() {
        if x > max {
            max = x;
        }
    }
    let mut sum = T::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

impl<T: Scalar> Attention<T> {
    pub fn new(channels: usize, f: usize, t: usize, scale: f64) -> Self {
        // Zero init: attention starts as the uniform mask S/(F*T).
        Self {
            w_spect: Array2::zeros((channels, t)),
            w_temp: Array2::zeros((channels, f)),
            scale: T::from_f64(scale),
        }
    }

    fn weights_for(&self, x: &Array4<T>) -> (Array3<T>, Array3<T>) {
        let (n, c, f, t) = x.dim();
        assert_eq!(self.w_temp.dim(), (c, f), "attention w_temp shape");
        assert_eq!(self.w_spect.dim(), (c, t), "attention w_spect shape");
        let mut a_spect = Array3::<T>::zeros((n, c, f));
        let mut a_temp = Array3::<T>::zeros((n, c, t));
        for ni in 0..n {
            for ch in 0..c {
                // z_temp[t] = sum_f x[f,t] * w_temp[c,f]
                let mut z_temp = vec![T::zero(); t];
                let mut z_spect = vec![T::zero(); f];
                for fi in 0..f {
                    let wtf = self.w_temp[[ch, fi]];
                    for ti in 0..t {
                        let xv = x[[ni, ch, fi, ti]];
                        z_temp[ti] += xv * wtf;
                        z_spect[fi] += xv * self.w_spect[[ch, ti]];
                    }
                }
                softmax_inplace(&mut z_temp);
                softmax_inplace(&mut z_spect);
                for ti in 0..t {
                    a_temp[[ni, ch, ti]] = z_temp[ti];
                }
                for fi in 0..f {
                    a_spect[[ni, ch, fi]] = z_spect[fi];
                }
            }
        }
        (a_spect, a_temp)
    }

    /// The mask A alone for a single feature map (C, F, T):
    /// A[c,f,t] = S * a_spect[c,f] * a_temp[c,t].
    pub fn attention_mask(&self, x: &Array3<T>) -> Array3<T> {
        let (c, f, t) = x.dim();
        let batched = x
            .to_shape((1, c, f, t))
            .expect("reshape")
            .to_owned();
        let (a_spect, a_temp) = self.weights_for(&batched);
        let mut mask = Array3::<T>::zeros((c, f, t));
        for ch in 0..c {
            for fi in 0..f {
                for ti in 0..t {
                    mask[[ch, fi, ti]] =
                        self.scale * a_spect[[0, ch, fi]] * a_temp[[0, ch, ti]];
                }
            }
        }
        mask
    }

    /// Elementwise reweighting X' = A o X, batched.
    pub fn forward(&self, x: &Array4<T>) -> (Array4<T>, AttnCache<T>) {
        let (n, c, f, t) = x.dim();
        let (a_spect, a_temp) = self.weights_for(x);
        let mut y = Array4::<T>::zeros(x.dim());
        for ni in 0..n {
            for ch in 0..c {
                for fi in 0..f {
                    let sf = self.scale * a_spect[[ni, ch, fi]];
                    for ti in 0..t {
                        y[[ni, ch, fi, ti]] = sf * a_temp[[ni, ch, ti]] * x[[ni, ch, fi, ti]];
                    }
                }
            }
        }
        (
            y,
            AttnCache {
                x: x.clone(),
                a_spect,
                a_temp,
            },
        )
    }

    /// Returns (grad_x, grad_w_spect, grad_w_temp).
    pub fn backward(
        &self,
        cache: &AttnCache<T>,
        gy: &Array4<T>,
    ) -> (Array4<T>, Array2<T>, Array2<T>) {
        let x = &cache.x;
        let (n, c, f, t) = x.dim();
        let mut gx = Array4::<T>::zeros(x.dim());
        let mut gw_spect = Array2::<T>::zeros(self.w_spect.dim());
        let mut gw_temp = Array2::<T>::zeros(self.w_temp.dim());
        let s = self.scale;

        for ni in 0..n {
            for ch in 0..c {
                // Direct product path and mask gradient.
                let mut ga_spect = vec![T::zero(); f];
                let mut ga_temp = vec![T::zero(); t];
                for fi in 0..f {
                    let asf = cache.a_spect[[ni, ch, fi]];
                    for ti in 0..t {
                        let att = cache.a_temp[[ni, ch, ti]];
                        let g = gy[[ni, ch, fi, ti]];
                        let xv = x[[ni, ch, fi, ti]];
                        gx[[ni, ch, fi, ti]] = g * s * asf * att;
                        let ga = g * xv; // dL/dA[f,t]
                        ga_spect[fi] += s * ga * att;
                        ga_temp[ti] += s * ga * asf;
                    }
                }

                // Softmax backward: gz = a o (ga - sum(ga o a)).
                let mut dot_s = T::zero();
                for fi in 0..f {
                    dot_s += ga_spect[fi] * cache.a_spect[[ni, ch, fi]];
                }
                let mut gz_spect = vec![T::zero(); f];
                for fi in 0..f {
                    gz_spect[fi] = cache.a_spect[[ni, ch, fi]] * (ga_spect[fi] - dot_s);
                }
                let mut dot_t = T::zero();
                for ti in 0..t {
                    dot_t += ga_temp[ti] * cache.a_temp[[ni, ch, ti]];
                }
                let mut gz_temp = vec![T::zero(); t];
                for ti in 0..t {
                    gz_temp[ti] = cache.a_temp[[ni, ch, ti]] * (ga_temp[ti] - dot_t);
                }

                // Through the projections:
                // z_spect[f] = sum_t x[f,t] w_spect[c,t]
                // z_temp[t]  = sum_f x[f,t] w_temp[c,f]
                for fi in 0..f {
                    for ti in 0..t {
                        let xv = x[[ni, ch, fi, ti]];
                        gw_spect[[ch, ti]] += gz_spect[fi] * xv;
                        gw_temp[[ch, fi]] += gz_temp[ti] * xv;
                        gx[[ni, ch, fi, ti]] += gz_spect[fi] * self.w_spect[[ch, ti]]
                            + gz_temp[ti] * self.w_temp[[ch, fi]];
                    }
                }
            }
        }
        (gx, gw_spect, gw_temp)
    }
}

/// Split projection head: the flattened encoder output is partitioned into
/// `d` contiguous branches of size `i`; each branch runs linear(i->o), ELU,
/// linear(o->1), and the scalars concatenate into the d-dim embedding.
#[derive(Debug, Clone)]
pub struct SplitHead<T> {
    /// (d, o, i)
    pub w1: Array3<T>,
    /// (d, o)
    pub b1: Array2<T>,
    /// (d, o)
    pub w2: Array2<T>,
    /// (d,)
    pub b2: Array1<T>,
}

#[derive(Debug, Clone)]
pub struct HeadCache<T> {
    /// ELU outputs, (N, d, o).
    pub hidden: Array3<T>,
}

fn elu<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        x.exp() - T::one()
    }
}

impl<T: Scalar> SplitHead<T> {
    pub fn branches(&self) -> usize {
        self.w1.dim().0
    }
    pub fn hidden_size(&self) -> usize {
        self.w1.dim().1
    }
    pub fn branch_input(&self) -> usize {
        self.w1.dim().2
    }

    /// x: (N, d*i) -> (N, d) raw branch outputs (pre-normalization).
    pub fn forward(&self, x: &Array2<T>) -> (Array2<T>, HeadCache<T>) {
        let (n, flat) = x.dim();
        let (d, o, i) = self.w1.dim();
        assert_eq!(flat, d * i, "head input size");
        let mut out = Array2::<T>::zeros((n, d));
        let mut hidden = Array3::<T>::zeros((n, d, o));
        for ni in 0..n {
            let row = x.row(ni);
            let xr = row.as_slice().unwrap();
            for b in 0..d {
                let xb = &xr[b * i..(b + 1) * i];
                let mut s = self.b2[b];
                for j in 0..o {
                    let mut h = self.b1[[b, j]];
                    for (k, &xv) in xb.iter().enumerate() {
                        h += self.w1[[b, j, k]] * xv;
                    }
                    let e = elu(h);
                    hidden[[ni, b, j]] = e;
                    s += self.w2[[b, j]] * e;
                }
                out[[ni, b]] = s;
            }
        }
        (out, HeadCache { hidden })
    }

    /// Returns (grad_x, (gw1, gb1, gw2, gb2)).
    #[allow(clippy::type_complexity)]
    pub fn backward(
        &self,
        x: &Array2<T>,
        cache: &HeadCache<T>,
        gy: &Array2<T>,
    ) -> (Array2<T>, (Array3<T>, Array2<T>, Array2<T>, Array1<T>)) {
        let (n, _) = x.dim();
        let (d, o, i) = self.w1.dim();
        let mut gx = Array2::<T>::zeros(x.dim());
        let mut gw1 = Array3::<T>::zeros((d, o, i));
        let mut gb1 = Array2::<T>::zeros((d, o));
        let mut gw2 = Array2::<T>::zeros((d, o));
        let mut gb2 = Array1::<T>::zeros(d);

        for ni in 0..n {
            let xrow = x.row(ni);
            let xr = xrow.as_slice().unwrap();
            for b in 0..d {
                let gs = gy[[ni, b]];
                if gs == T::zero() {
                    continue;
                }
                gb2[b] += gs;
                let xb = &xr[b * i..(b + 1) * i];
                for j in 0..o {
                    let e = cache.hidden[[ni, b, j]];
                    gw2[[b, j]] += gs * e;
                    // ELU'(h): 1 for h > 0, else exp(h) = e + 1.
                    let de = if e > T::zero() { T::one() } else { e + T::one() };
                    let gh = gs * self.w2[[b, j]] * de;
                    gb1[[b, j]] += gh;
                    for (k, &xv) in xb.iter().enumerate() {
                        gw1[[b, j, k]] += gh * xv;
                        gx[[ni, b * i + k]] += gh * self.w1[[b, j, k]];
                    }
                }
            }
        }
        (gx, (gw1, gb1, gw2, gb2))
    }
}

/// Row-wise L2 normalization. Returns (unit rows, input norms).
pub fn l2_normalize<T: Scalar>(v: &Array2<T>) -> (Array2<T>, Array1<T>) {
    let (n, _) = v.dim();
    let mut out = v.clone();
    let mut norms = Array1::<T>::zeros(n);
    for (ni, mut row) in out.rows_mut().into_iter().enumerate() {
        let nv = row.iter().map(|&x| x * x).sum::<T>().sqrt();
        norms[ni] = nv;
        row.mapv_inplace(|x| x / nv);
    }
    (out, norms)
}

/// Backward of row-wise L2 normalization: gv = (ge - e (e . ge)) / |v|.
pub fn l2_normalize_backward<T: Scalar>(
    unit: &Array2<T>,
    norms: &Array1<T>,
    ge: &Array2<T>,
) -> Array2<T> {
    let (n, d) = unit.dim();
    let mut gv = Array2::<T>::zeros((n, d));
    for ni in 0..n {
        let mut dot = T::zero();
        for c in 0..d {
            dot += unit[[ni, c]] * ge[[ni, c]];
        }
        for c in 0..d {
            gv[[ni, c]] = (ge[[ni, c]] - unit[[ni, c]] * dot) / norms[ni];
        }
    }
    gv
}

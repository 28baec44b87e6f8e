//! Layer forward/backward pairs.
//!
//! Conventions shared by every layer here:
//! - forwards take inputs by reference and return fresh outputs plus any
//!   cache the backward needs that the caller does not already hold;
//! - backwards take the upstream gradient `dy`, accumulate parameter
//!   gradients into the `grad` buffers of the `PTensor`s, and return the
//!   input gradient `dx`;
//! - loop orders are fixed, so the same inputs always produce bitwise
//!   identical outputs.
//!
//! Convolutions keep one output (or gradient) row in registers while the
//! three kernel taps of a row are fused into a single vectorizable pass;
//! inputs are copied once into a zero-padded buffer to keep those loops
//! branch-free. Reductions (weight gradients) run in four independent lanes
//! with a fixed tree combine at the end, which vectorizes without giving up
//! run-to-run bitwise determinism.

use super::{PTensor, Scalar, Tensor};

/// Copy `x` into a per-channel buffer padded by one zero pixel on every side.
fn pad1<S: Scalar>(x: &Tensor<S>) -> Vec<S> {
    let (ph, pw) = (x.h + 2, x.w + 2);
    let mut xpad = vec![S::zero(); x.c * ph * pw];
    for c in 0..x.c {
        for y in 0..x.h {
            let src = (c * x.h + y) * x.w;
            let dst = (c * ph + y + 1) * pw + 1;
            xpad[dst..dst + x.w].copy_from_slice(&x.data[src..src + x.w]);
        }
    }
    xpad
}

fn conv_out_dim(n: usize, stride: usize) -> usize {
    (n + 2 - 3) / stride + 1
}

/// Three shifted dot products of `d` against `row` (kernel taps 0, 1, 2),
/// each accumulated in four independent lanes and combined by a fixed tree,
/// so the reduction vectorizes while staying bitwise deterministic.
#[inline]
fn dot3_lanes<S: Scalar>(d: &[S], row: &[S]) -> (S, S, S) {
    let n = d.len();
    debug_assert!(row.len() >= n + 2);
    let mut l0 = [S::zero(); 4];
    let mut l1 = [S::zero(); 4];
    let mut l2 = [S::zero(); 4];
    let mut i = 0;
    while i + 4 <= n {
        for k in 0..4 {
            let dv = d[i + k];
            l0[k] = l0[k] + dv * row[i + k];
            l1[k] = l1[k] + dv * row[i + k + 1];
            l2[k] = l2[k] + dv * row[i + k + 2];
        }
        i += 4;
    }
    while i < n {
        let dv = d[i];
        l0[0] = l0[0] + dv * row[i];
        l1[0] = l1[0] + dv * row[i + 1];
        l2[0] = l2[0] + dv * row[i + 2];
        i += 1;
    }
    (
        (l0[0] + l0[1]) + (l0[2] + l0[3]),
        (l1[0] + l1[1]) + (l1[2] + l1[3]),
        (l2[0] + l2[1]) + (l2[2] + l2[3]),
    )
}

/// The stride-2 variant of [`dot3_lanes`]: `d[j]` pairs with `row[2j + tap]`.
#[inline]
fn dot3_lanes_s2<S: Scalar>(d: &[S], row: &[S]) -> (S, S, S) {
    let n = d.len();
    debug_assert!(row.len() >= 2 * n + 1);
    let mut l0 = [S::zero(); 4];
    let mut l1 = [S::zero(); 4];
    let mut l2 = [S::zero(); 4];
    let mut i = 0;
    while i + 4 <= n {
        for k in 0..4 {
            let dv = d[i + k];
            let ri = 2 * (i + k);
            l0[k] = l0[k] + dv * row[ri];
            l1[k] = l1[k] + dv * row[ri + 1];
            l2[k] = l2[k] + dv * row[ri + 2];
        }
        i += 4;
    }
    while i < n {
        let dv = d[i];
        let ri = 2 * i;
        l0[0] = l0[0] + dv * row[ri];
        l1[0] = l1[0] + dv * row[ri + 1];
        l2[0] = l2[0] + dv * row[ri + 2];
        i += 1;
    }
    (
        (l0[0] + l0[1]) + (l0[2] + l0[3]),
        (l1[0] + l1[1]) + (l1[2] + l1[3]),
        (l2[0] + l2[1]) + (l2[2] + l2[3]),
    )
}

/// 3x3 convolution, zero padding 1, stride 1 or 2. `w` has shape
/// `[c_out, c_in, 3, 3]`, `b` has shape `[c_out]`.
pub fn conv3x3_fwd<S: Scalar>(
    x: &Tensor<S>,
    w: &PTensor<S>,
    b: &PTensor<S>,
    stride: usize,
) -> Tensor<S> {
    assert!(stride == 1 || stride == 2, "stride must be 1 or 2");
    assert_eq!(w.shape.len(), 4, "conv weight must be 4-d");
    let (co, ci) = (w.shape[0], w.shape[1]);
    assert_eq!(&w.shape[1..], &[ci, 3, 3], "conv weight must be [co,ci,3,3]");
    assert_eq!(ci, x.c, "conv input channels mismatch");
    assert_eq!(b.shape, vec![co], "conv bias must be [co]");

    let (oh, ow) = (conv_out_dim(x.h, stride), conv_out_dim(x.w, stride));
    let (ph, pw) = (x.h + 2, x.w + 2);
    let xpad = pad1(x);
    let mut out = Tensor::zeros(co, oh, ow);
    let mut acc = vec![S::zero(); ow];

    for c_o in 0..co {
        let ob = c_o * oh * ow;
        for oy in 0..oh {
            acc.fill(b.data[c_o]);
            for c_i in 0..ci {
                let xb = c_i * ph * pw;
                let wbase = (c_o * ci + c_i) * 9;
                for ky in 0..3 {
                    let iy = oy * stride + ky;
                    let row = &xpad[xb + iy * pw..xb + (iy + 1) * pw];
                    let w0 = w.data[wbase + ky * 3];
                    let w1 = w.data[wbase + ky * 3 + 1];
                    let w2 = w.data[wbase + ky * 3 + 2];
                    if stride == 1 {
                        let r0 = &row[..ow];
                        let r1 = &row[1..1 + ow];
                        let r2 = &row[2..2 + ow];
                        for i in 0..ow {
                            acc[i] = acc[i] + w0 * r0[i] + w1 * r1[i] + w2 * r2[i];
                        }
                    } else {
                        for (o, win) in acc.iter_mut().zip(row.chunks_exact(2)) {
                            *o = *o + w0 * win[0] + w1 * win[1];
                        }
                        let r2 = &row[2..];
                        for (o, &xv) in acc.iter_mut().zip(r2.iter().step_by(2)) {
                            *o = *o + w2 * xv;
                        }
                    }
                }
            }
            out.data[ob + oy * ow..ob + (oy + 1) * ow].copy_from_slice(&acc);
        }
    }
    out
}

/// Backward of [`conv3x3_fwd`]. Accumulates into `w.grad` and `b.grad`,
/// returns the gradient with respect to `x`.
pub fn conv3x3_bwd<S: Scalar>(
    x: &Tensor<S>,
    w: &mut PTensor<S>,
    b: &mut PTensor<S>,
    dy: &Tensor<S>,
    stride: usize,
) -> Tensor<S> {
    let (co, ci) = (w.shape[0], w.shape[1]);
    let (oh, ow) = (conv_out_dim(x.h, stride), conv_out_dim(x.w, stride));
    assert_eq!((dy.c, dy.h, dy.w), (co, oh, ow), "conv dy shape mismatch");

    let (ph, pw) = (x.h + 2, x.w + 2);
    let xpad = pad1(x);

    for c_o in 0..co {
        let db = c_o * oh * ow;
        let mut acc = S::zero();
        for &g in &dy.data[db..db + oh * ow] {
            acc = acc + g;
        }
        b.grad[c_o] = b.grad[c_o] + acc;
    }

    // Weight gradients: one pass per (c_o, row), three taps of a kernel row
    // reduced together in four independent lanes each.
    let mut gacc = vec![S::zero(); ci * 9];
    for c_o in 0..co {
        let db = c_o * oh * ow;
        gacc.fill(S::zero());
        for oy in 0..oh {
            let drow = &dy.data[db + oy * ow..db + (oy + 1) * ow];
            for c_i in 0..ci {
                let xb = c_i * ph * pw;
                for ky in 0..3 {
                    let iy = oy * stride + ky;
                    let row = &xpad[xb + iy * pw..xb + (iy + 1) * pw];
                    let (d0, d1, d2) = if stride == 1 {
                        dot3_lanes(drow, row)
                    } else {
                        dot3_lanes_s2(drow, row)
                    };
                    let gb = (c_i * 3 + ky) * 3;
                    gacc[gb] = gacc[gb] + d0;
                    gacc[gb + 1] = gacc[gb + 1] + d1;
                    gacc[gb + 2] = gacc[gb + 2] + d2;
                }
            }
        }
        let wb = c_o * ci * 9;
        for (g, &a) in w.grad[wb..wb + ci * 9].iter_mut().zip(&gacc) {
            *g = *g + a;
        }
    }

    // Input gradients: three disjoint shifted axpy passes per kernel row,
    // each over a contiguous slice of the padded gradient buffer.
    let mut dxpad = vec![S::zero(); ci * ph * pw];
    for c_o in 0..co {
        let db = c_o * oh * ow;
        for c_i in 0..ci {
            let xb = c_i * ph * pw;
            let wbase = (c_o * ci + c_i) * 9;
            for ky in 0..3 {
                for oy in 0..oh {
                    let iy = oy * stride + ky;
                    let drow = &dy.data[db + oy * ow..db + (oy + 1) * ow];
                    for kx in 0..3 {
                        let wv = w.data[wbase + ky * 3 + kx];
                        let tb = xb + iy * pw + kx;
                        if stride == 1 {
                            let trow = &mut dxpad[tb..tb + ow];
                            for (xg, &g) in trow.iter_mut().zip(drow.iter()) {
                                *xg = *xg + wv * g;
                            }
                        } else {
                            let trow = &mut dxpad[tb..tb + 2 * ow - 1];
                            for (xg, &g) in trow.iter_mut().step_by(2).zip(drow.iter()) {
                                *xg = *xg + wv * g;
                            }
                        }
                    }
                }
            }
        }
    }

    let mut dx = x.zeros_like();
    for c in 0..ci {
        for y in 0..x.h {
            let src = (c * ph + y + 1) * pw + 1;
            let dst = (c * x.h + y) * x.w;
            dx.data[dst..dst + x.w].copy_from_slice(&dxpad[src..src + x.w]);
        }
    }
    dx
}

/// Fully connected layer. `w` has shape `[out, in]`, `b` has shape `[out]`.
pub fn linear_fwd<S: Scalar>(x: &[S], w: &PTensor<S>, b: &PTensor<S>) -> Vec<S> {
    assert_eq!(w.shape.len(), 2, "linear weight must be 2-d");
    let (no, ni) = (w.shape[0], w.shape[1]);
    assert_eq!(x.len(), ni, "linear input length mismatch");
    assert_eq!(b.shape, vec![no], "linear bias must be [out]");
    let mut y = Vec::with_capacity(no);
    for o in 0..no {
        let row = &w.data[o * ni..(o + 1) * ni];
        let mut acc = b.data[o];
        for (&wv, &xv) in row.iter().zip(x.iter()) {
            acc = acc + wv * xv;
        }
        y.push(acc);
    }
    y
}

/// Backward of [`linear_fwd`].
pub fn linear_bwd<S: Scalar>(
    x: &[S],
    w: &mut PTensor<S>,
    b: &mut PTensor<S>,
    dy: &[S],
) -> Vec<S> {
    let (no, ni) = (w.shape[0], w.shape[1]);
    assert_eq!(dy.len(), no, "linear dy length mismatch");
    let mut dx = vec![S::zero(); ni];
    for o in 0..no {
        let g = dy[o];
        b.grad[o] = b.grad[o] + g;
        let row = &w.data[o * ni..(o + 1) * ni];
        let grow = &mut w.grad[o * ni..(o + 1) * ni];
        for i in 0..ni {
            grow[i] = grow[i] + g * x[i];
            dx[i] = dx[i] + g * row[i];
        }
    }
    dx
}

/// Group-normalization epsilon added to the per-group variance.
pub const GN_EPS: f64 = 1e-5;

/// Cache produced by [`group_norm_fwd`] and consumed by [`group_norm_bwd`].
pub struct GroupNormCache<S> {
    pub xhat: Tensor<S>,
    pub rstd: Vec<S>,
}

/// Group normalization with per-channel affine parameters. Statistics are
/// computed over each group of `c / groups` channels of this single sample.
pub fn group_norm_fwd<S: Scalar>(
    x: &Tensor<S>,
    gamma: &PTensor<S>,
    beta: &PTensor<S>,
    groups: usize,
) -> (Tensor<S>, GroupNormCache<S>) {
    assert_eq!(x.c % groups, 0, "channels must divide into groups");
    assert_eq!(gamma.shape, vec![x.c], "gamma must be [c]");
    assert_eq!(beta.shape, vec![x.c], "beta must be [c]");
    let cpg = x.c / groups;
    let plane = x.h * x.w;
    let n = cpg * plane;
    let mut xhat = x.zeros_like();
    let mut y = x.zeros_like();
    let mut rstds = Vec::with_capacity(groups);
    for g in 0..groups {
        let base = g * cpg * plane;
        let chunk = &x.data[base..base + n];
        let mut sum = S::zero();
        for &v in chunk {
            sum = sum + v;
        }
        let mean = sum / S::from_f64(n as f64);
        let mut var = S::zero();
        for &v in chunk {
            let d = v - mean;
            var = var + d * d;
        }
        var = var / S::from_f64(n as f64);
        let rstd = (var + S::from_f64(GN_EPS)).sqrt().recip();
        rstds.push(rstd);
        for c in 0..cpg {
            let ch = g * cpg + c;
            let ga = gamma.data[ch];
            let be = beta.data[ch];
            let off = ch * plane;
            for i in 0..plane {
                let xh = (x.data[off + i] - mean) * rstd;
                xhat.data[off + i] = xh;
                y.data[off + i] = ga * xh + be;
            }
        }
    }
    (y, GroupNormCache { xhat, rstd: rstds })
}

/// Backward of [`group_norm_fwd`].
pub fn group_norm_bwd<S: Scalar>(
    cache: &GroupNormCache<S>,
    gamma: &mut PTensor<S>,
    beta: &mut PTensor<S>,
    dy: &Tensor<S>,
    groups: usize,
) -> Tensor<S> {
    let xhat = &cache.xhat;
    let cpg = xhat.c / groups;
    let plane = xhat.h * xhat.w;
    let n = cpg * plane;
    let mut dx = xhat.zeros_like();
    for g in 0..groups {
        let rstd = cache.rstd[g];
        let mut s1 = S::zero();
        let mut s2 = S::zero();
        for c in 0..cpg {
            let ch = g * cpg + c;
            let off = ch * plane;
            let ga = gamma.data[ch];
            let mut dga = S::zero();
            let mut dbe = S::zero();
            for i in 0..plane {
                let gy = dy.data[off + i];
                let xh = xhat.data[off + i];
                dga = dga + gy * xh;
                dbe = dbe + gy;
                let dxh = gy * ga;
                s1 = s1 + dxh;
                s2 = s2 + dxh * xh;
            }
            gamma.grad[ch] = gamma.grad[ch] + dga;
            beta.grad[ch] = beta.grad[ch] + dbe;
        }
        let inv_n = S::from_f64(1.0 / n as f64);
        s1 = s1 * inv_n;
        s2 = s2 * inv_n;
        for c in 0..cpg {
            let ch = g * cpg + c;
            let off = ch * plane;
            let ga = gamma.data[ch];
            for i in 0..plane {
                let dxh = dy.data[off + i] * ga;
                let xh = xhat.data[off + i];
                dx.data[off + i] = rstd * (dxh - s1 - xh * s2);
            }
        }
    }
    dx
}

/// SiLU (sigmoid-gated) activation: `y = x * sigmoid(x)`.
pub fn silu_fwd<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut y = x.clone();
    for v in y.data.iter_mut() {
        let s = (S::one() + (-*v).exp()).recip();
        *v = *v * s;
    }
    y
}

/// Backward of [`silu_fwd`]; takes the forward input as the cache.
pub fn silu_bwd<S: Scalar>(x: &Tensor<S>, dy: &Tensor<S>) -> Tensor<S> {
    assert_eq!(x.data.len(), dy.data.len(), "silu dy shape mismatch");
    let mut dx = x.clone();
    for (v, &g) in dx.data.iter_mut().zip(dy.data.iter()) {
        let s = (S::one() + (-*v).exp()).recip();
        *v = g * s * (S::one() + *v * (S::one() - s));
    }
    dx
}

/// Nearest-neighbor 2x upsampling.
pub fn upsample2x_fwd<S: Scalar>(x: &Tensor<S>) -> Tensor<S> {
    let mut y = Tensor::zeros(x.c, x.h * 2, x.w * 2);
    for c in 0..x.c {
        for iy in 0..x.h {
            for ix in 0..x.w {
                let v = x.at(c, iy, ix);
                y.set(c, 2 * iy, 2 * ix, v);
                y.set(c, 2 * iy, 2 * ix + 1, v);
                y.set(c, 2 * iy + 1, 2 * ix, v);
                y.set(c, 2 * iy + 1, 2 * ix + 1, v);
            }
        }
    }
    y
}

/// Backward of [`upsample2x_fwd`]: sums each 2x2 block of `dy`.
pub fn upsample2x_bwd<S: Scalar>(dy: &Tensor<S>) -> Tensor<S> {
    assert!(dy.h % 2 == 0 && dy.w % 2 == 0, "upsample dy dims must be even");
    let mut dx = Tensor::zeros(dy.c, dy.h / 2, dy.w / 2);
    for c in 0..dy.c {
        for iy in 0..dx.h {
            for ix in 0..dx.w {
                let s = dy.at(c, 2 * iy, 2 * ix)
                    + dy.at(c, 2 * iy, 2 * ix + 1)
                    + dy.at(c, 2 * iy + 1, 2 * ix)
                    + dy.at(c, 2 * iy + 1, 2 * ix + 1);
                dx.set(c, iy, ix, s);
            }
        }
    }
    dx
}

/// Average pooling with a square window and matching stride `f`.
pub fn avg_pool_fwd<S: Scalar>(x: &Tensor<S>, f: usize) -> Tensor<S> {
    assert!(f >= 1 && x.h % f == 0 && x.w % f == 0, "pool factor must divide dims");
    let mut y = Tensor::zeros(x.c, x.h / f, x.w / f);
    let inv = S::from_f64(1.0 / (f * f) as f64);
    for c in 0..x.c {
        for oy in 0..y.h {
            for ox in 0..y.w {
                let mut acc = S::zero();
                for ky in 0..f {
                    for kx in 0..f {
                        acc = acc + x.at(c, oy * f + ky, ox * f + kx);
                    }
                }
                y.set(c, oy, ox, acc * inv);
            }
        }
    }
    y
}

/// Backward of [`avg_pool_fwd`].
pub fn avg_pool_bwd<S: Scalar>(dy: &Tensor<S>, f: usize) -> Tensor<S> {
    let mut dx = Tensor::zeros(dy.c, dy.h * f, dy.w * f);
    let inv = S::from_f64(1.0 / (f * f) as f64);
    for c in 0..dy.c {
        for oy in 0..dy.h {
            for ox in 0..dy.w {
                let g = dy.at(c, oy, ox) * inv;
                for ky in 0..f {
                    for kx in 0..f {
                        dx.set(c, oy * f + ky, ox * f + kx, g);
                    }
                }
            }
        }
    }
    dx
}

/// Feature-wise scale and shift: `y[c] = x[c] * (1 + scale[c]) + shift[c]`.
/// The `1 +` makes zero-initialized conditioning an identity map.
pub fn film_fwd<S: Scalar>(x: &Tensor<S>, scale: &[S], shift: &[S]) -> Tensor<S> {
    assert_eq!(scale.len(), x.c, "film scale length mismatch");
    assert_eq!(shift.len(), x.c, "film shift length mismatch");
    let mut y = x.clone();
    let plane = x.h * x.w;
    for c in 0..x.c {
        let sc = S::one() + scale[c];
        let sh = shift[c];
        for v in y.data[c * plane..(c + 1) * plane].iter_mut() {
            *v = *v * sc + sh;
        }
    }
    y
}

/// Backward of [`film_fwd`]: returns `(dx, dscale, dshift)`.
pub fn film_bwd<S: Scalar>(
    x: &Tensor<S>,
    scale: &[S],
    dy: &Tensor<S>,
) -> (Tensor<S>, Vec<S>, Vec<S>) {
    let plane = x.h * x.w;
    let mut dx = x.zeros_like();
    let mut dscale = vec![S::zero(); x.c];
    let mut dshift = vec![S::zero(); x.c];
    for c in 0..x.c {
        let sc = S::one() + scale[c];
        let mut dsc = S::zero();
        let mut dsh = S::zero();
        for i in c * plane..(c + 1) * plane {
            let g = dy.data[i];
            dx.data[i] = g * sc;
            dsc = dsc + g * x.data[i];
            dsh = dsh + g;
        }
        dscale[c] = dsc;
        dshift[c] = dsh;
    }
    (dx, dscale, dshift)
}

/// Sinusoidal embedding of an integer timestep: `dim / 2` sine values over
/// geometrically spaced frequencies followed by the matching cosines.
pub fn time_embedding<S: Scalar>(t: usize, dim: usize) -> Vec<S> {
    assert!(dim >= 2 && dim % 2 == 0, "time embedding dim must be even");
    let half = dim / 2;
    let mut emb = vec![S::zero(); dim];
    for i in 0..half {
        let exponent = if half > 1 {
            i as f64 / (half - 1) as f64
        } else {
            0.0
        };
        let freq = 10000f64.powf(-exponent);
        let angle = t as f64 * freq;
        emb[i] = S::from_f64(angle.sin());
        emb[half + i] = S::from_f64(angle.cos());
    }
    emb
}

/// Spatial soft-argmax. For every channel, scores are divided by `temp`,
/// soft-maxed over the plane, and reduced to the expected pixel-center
/// coordinate. Returns interleaved `[u, v]` pairs in `[0, 1]^2` (u from the
/// x axis, v from the y axis) plus the per-channel probability maps.
pub fn softargmax_fwd<S: Scalar>(x: &Tensor<S>, temp: S) -> (Vec<S>, Tensor<S>) {
    let plane = x.h * x.w;
    let mut probs = x.zeros_like();
    let mut coords = Vec::with_capacity(2 * x.c);
    for c in 0..x.c {
        let chunk = &x.data[c * plane..(c + 1) * plane];
        let mut mx = chunk[0];
        for &v in chunk {
            if v > mx {
                mx = v;
            }
        }
        let mut denom = S::zero();
        for (i, &v) in chunk.iter().enumerate() {
            let e = ((v - mx) / temp).exp();
            probs.data[c * plane + i] = e;
            denom = denom + e;
        }
        let mut u = S::zero();
        let mut v = S::zero();
        for iy in 0..x.h {
            for ix in 0..x.w {
                let i = c * plane + iy * x.w + ix;
                let p = probs.data[i] / denom;
                probs.data[i] = p;
                u = u + p * S::from_f64((ix as f64 + 0.5) / x.w as f64);
                v = v + p * S::from_f64((iy as f64 + 0.5) / x.h as f64);
            }
        }
        coords.push(u);
        coords.push(v);
    }
    (coords, probs)
}

/// Backward of [`softargmax_fwd`]: returns `(dx, dtemp)`.
pub fn softargmax_bwd<S: Scalar>(
    x: &Tensor<S>,
    probs: &Tensor<S>,
    temp: S,
    dcoords: &[S],
) -> (Tensor<S>, S) {
    assert_eq!(dcoords.len(), 2 * x.c, "softargmax dcoords length mismatch");
    let plane = x.h * x.w;
    let mut dx = x.zeros_like();
    let mut dtemp = S::zero();
    for c in 0..x.c {
        let du = dcoords[2 * c];
        let dv = dcoords[2 * c + 1];
        // Recompute the expectations from the cached probabilities.
        let mut u = S::zero();
        let mut v = S::zero();
        for iy in 0..x.h {
            for ix in 0..x.w {
                let p = probs.data[c * plane + iy * x.w + ix];
                u = u + p * S::from_f64((ix as f64 + 0.5) / x.w as f64);
                v = v + p * S::from_f64((iy as f64 + 0.5) / x.h as f64);
            }
        }
        for iy in 0..x.h {
            for ix in 0..x.w {
                let i = c * plane + iy * x.w + ix;
                let a = S::from_f64((ix as f64 + 0.5) / x.w as f64);
                let b = S::from_f64((iy as f64 + 0.5) / x.h as f64);
                // dL/dscore_i where score = x / temp.
                let dscore = probs.data[i] * ((a - u) * du + (b - v) * dv);
                dx.data[i] = dscore / temp;
                dtemp = dtemp - dscore * x.data[i] / (temp * temp);
            }
        }
    }
    (dx, dtemp)
}

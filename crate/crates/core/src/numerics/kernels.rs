//! Raw forward/backward kernels over `(N, C, H, W)` buffers.
//!
//! Everything here is single threaded and accumulates in a fixed order, so a
//! given input always produces bit-identical output.

use crate::error::{Result, StssError};

use super::tensor::Tensor;

/// Geometry of one 2-D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub batch: usize,
    pub in_c: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub out_c: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub out_h: usize,
    pub out_w: usize,
}

impl ConvGeom {
    pub fn new(input: &Tensor, weight: &Tensor, stride: usize, padding: usize) -> Result<Self> {
        let (batch, in_c, in_h, in_w) = input.dims4()?;
        let (out_c, w_in, kh, kw) = weight.dims4()?;
        if w_in != in_c {
            return Err(StssError::shape(
                "conv2d",
                format!("input has {in_c} channels, weight expects {w_in}"),
            ));
        }
        if stride == 0 {
            return Err(StssError::shape("conv2d", "stride must be positive"));
        }
        if in_h + 2 * padding < kh || in_w + 2 * padding < kw {
            return Err(StssError::shape(
                "conv2d",
                format!("kernel {kh}x{kw} larger than padded input {in_h}x{in_w}"),
            ));
        }
        Ok(ConvGeom {
            batch,
            in_c,
            in_h,
            in_w,
            out_c,
            kh,
            kw,
            stride,
            padding,
            out_h: (in_h + 2 * padding - kh) / stride + 1,
            out_w: (in_w + 2 * padding - kw) / stride + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    fn out_pixels(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.padding == 0
    }
}

/// `c = a · b + beta · c` for row/column-strided matrices.
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    (rsa, csa): (usize, usize),
    b: &[f32],
    (rsb, csb): (usize, usize),
    beta: f32,
    c: &mut [f32],
    (rsc, csc): (usize, usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * rsc + (n - 1) * csc);
    // SAFETY: the asserts above bound every index sgemm touches.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            rsc as isize,
            csc as isize,
        );
    }
}

fn im2col(g: &ConvGeom, image: &[f32], cols: &mut [f32]) {
    let p = g.out_pixels();
    for ci in 0..g.in_c {
        let plane = &image[ci * g.in_h * g.in_w..(ci + 1) * g.in_h * g.in_w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let dst = &mut cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    let line = &mut dst[oy * g.out_w..(oy + 1) * g.out_w];
                    if iy < 0 || iy >= g.in_h as isize {
                        line.fill(0.0);
                        continue;
                    }
                    let src = &plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        *v = if ix < 0 || ix >= g.in_w as isize {
                            0.0
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(g: &ConvGeom, cols: &[f32], image: &mut [f32]) {
    let p = g.out_pixels();
    for ci in 0..g.in_c {
        let plane = &mut image[ci * g.in_h * g.in_w..(ci + 1) * g.in_h * g.in_w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (ci * g.kh + ky) * g.kw + kx;
                let src = &cols[row * p..(row + 1) * p];
                for oy in 0..g.out_h {
                    let iy = (oy * g.stride + ky) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.in_h as isize {
                        continue;
                    }
                    let line = &mut plane[iy as usize * g.in_w..(iy as usize + 1) * g.in_w];
                    for ox in 0..g.out_w {
                        let ix = (ox * g.stride + kx) as isize - g.padding as isize;
                        if ix >= 0 && ix < g.in_w as isize {
                            line[ix as usize] += src[oy * g.out_w + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
    padding: usize,
) -> Result<Tensor> {
    let g = ConvGeom::new(input, weight, stride, padding)?;
    if let Some(b) = bias {
        if b.len() != g.out_c {
            return Err(StssError::shape(
                "conv2d",
                format!("bias has {} entries for {} outputs", b.len(), g.out_c),
            ));
        }
    }
    let p = g.out_pixels();
    let k = g.patch_len();
    let in_plane = g.in_c * g.in_h * g.in_w;
    let mut out = vec![0.0f32; g.batch * g.out_c * p];
    let mut cols = if g.is_pointwise() {
        Vec::new()
    } else {
        vec![0.0f32; k * p]
    };
    for b in 0..g.batch {
        let image = &input.data()[b * in_plane..(b + 1) * in_plane];
        let dst = &mut out[b * g.out_c * p..(b + 1) * g.out_c * p];
        if let Some(bias) = bias {
            for (oc, chunk) in dst.chunks_mut(p).enumerate() {
                chunk.fill(bias.data()[oc]);
            }
        }
        let beta = if bias.is_some() { 1.0 } else { 0.0 };
        let patches: &[f32] = if g.is_pointwise() {
            image
        } else {
            im2col(&g, image, &mut cols);
            &cols
        };
        gemm(g.out_c, k, p, weight.data(), (k, 1), patches, (p, 1), beta, dst, (p, 1));
    }
    Tensor::new(&[g.batch, g.out_c, g.out_h, g.out_w], out)
}

/// Gradients of a convolution with respect to input, weight and bias. The
/// input gradient is left at zero unless `need_input`.
pub fn conv2d_backward(
    input: &Tensor,
    weight: &Tensor,
    grad_out: &Tensor,
    stride: usize,
    padding: usize,
    need_input: bool,
) -> Result<(Tensor, Tensor, Tensor)> {
    let g = ConvGeom::new(input, weight, stride, padding)?;
    let p = g.out_pixels();
    let k = g.patch_len();
    let in_plane = g.in_c * g.in_h * g.in_w;
    let mut d_input = vec![0.0f32; input.len()];
    let mut d_weight = vec![0.0f32; weight.len()];
    let mut d_bias = vec![0.0f32; g.out_c];
    let mut cols = vec![0.0f32; k * p];
    let mut d_cols = vec![0.0f32; k * p];
    for b in 0..g.batch {
        let image = &input.data()[b * in_plane..(b + 1) * in_plane];
        let gout = &grad_out.data()[b * g.out_c * p..(b + 1) * g.out_c * p];
        for (oc, chunk) in gout.chunks(p).enumerate() {
            d_bias[oc] += chunk.iter().sum::<f32>();
        }
        let patches: &[f32] = if g.is_pointwise() {
            image
        } else {
            im2col(&g, image, &mut cols);
            &cols
        };
        // dW += gout · patchesᵀ
        gemm(g.out_c, p, k, gout, (p, 1), patches, (1, p), 1.0, &mut d_weight, (k, 1));
        if !need_input {
            continue;
        }
        // dpatches = Wᵀ · gout
        let d_img = &mut d_input[b * in_plane..(b + 1) * in_plane];
        if g.is_pointwise() {
            gemm(k, g.out_c, p, weight.data(), (1, k), gout, (p, 1), 0.0, d_img, (p, 1));
        } else {
            gemm(
                k,
                g.out_c,
                p,
                weight.data(),
                (1, k),
                gout,
                (p, 1),
                0.0,
                &mut d_cols,
                (p, 1),
            );
            col2im(&g, &d_cols, d_img);
        }
    }
    Ok((
        Tensor::new(input.shape(), d_input)?,
        Tensor::new(weight.shape(), d_weight)?,
        Tensor::new(&[g.out_c], d_bias)?,
    ))
}

pub fn avg_pool2_forward(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(StssError::shape("avg_pool2", format!("{h}x{w} not even")));
    }
    let (oh, ow) = (h / 2, w / 2);
    let src = x.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    for nc in 0..n * c {
        let s = &src[nc * h * w..(nc + 1) * h * w];
        let d = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
        for y in 0..oh {
            for xx in 0..ow {
                let i = 2 * y * w + 2 * xx;
                d[y * ow + xx] = 0.25 * (s[i] + s[i + 1] + s[i + w] + s[i + w + 1]);
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub fn avg_pool2_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, oh, ow) = grad_out.dims4()?;
    let (h, w) = (oh * 2, ow * 2);
    let mut out = vec![0.0f32; n * c * h * w];
    let g = grad_out.data();
    for nc in 0..n * c {
        for y in 0..h {
            for xx in 0..w {
                out[nc * h * w + y * w + xx] = 0.25 * g[nc * oh * ow + (y / 2) * ow + xx / 2];
            }
        }
    }
    Tensor::new(input_shape, out)
}

/// Source taps for one output coordinate of a 2× half-pixel-centred bilinear upsample.
fn upsample_taps(o: usize, len: usize) -> (usize, usize, f32) {
    let src = ((o as f32 + 0.5) / 2.0 - 0.5).max(0.0);
    let i0 = (src.floor() as usize).min(len - 1);
    let i1 = (i0 + 1).min(len - 1);
    (i0, i1, src - i0 as f32)
}

pub fn upsample_bilinear2_forward(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    let (oh, ow) = (2 * h, 2 * w);
    let ys: Vec<_> = (0..oh).map(|o| upsample_taps(o, h)).collect();
    let xs: Vec<_> = (0..ow).map(|o| upsample_taps(o, w)).collect();
    let src = x.data();
    let mut out = vec![0.0f32; n * c * oh * ow];
    for nc in 0..n * c {
        let s = &src[nc * h * w..(nc + 1) * h * w];
        let d = &mut out[nc * oh * ow..(nc + 1) * oh * ow];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let top = s[y0 * w + x0] * (1.0 - fx) + s[y0 * w + x1] * fx;
                let bot = s[y1 * w + x0] * (1.0 - fx) + s[y1 * w + x1] * fx;
                d[oy * ow + ox] = top * (1.0 - fy) + bot * fy;
            }
        }
    }
    Tensor::new(&[n, c, oh, ow], out)
}

pub fn upsample_bilinear2_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let (n, c, oh, ow) = grad_out.dims4()?;
    let (h, w) = (oh / 2, ow / 2);
    let ys: Vec<_> = (0..oh).map(|o| upsample_taps(o, h)).collect();
    let xs: Vec<_> = (0..ow).map(|o| upsample_taps(o, w)).collect();
    let g = grad_out.data();
    let mut out = vec![0.0f32; n * c * h * w];
    for nc in 0..n * c {
        let gs = &g[nc * oh * ow..(nc + 1) * oh * ow];
        let d = &mut out[nc * h * w..(nc + 1) * h * w];
        for (oy, &(y0, y1, fy)) in ys.iter().enumerate() {
            for (ox, &(x0, x1, fx)) in xs.iter().enumerate() {
                let v = gs[oy * ow + ox];
                d[y0 * w + x0] += v * (1.0 - fy) * (1.0 - fx);
                d[y0 * w + x1] += v * (1.0 - fy) * fx;
                d[y1 * w + x0] += v * fy * (1.0 - fx);
                d[y1 * w + x1] += v * fy * fx;
            }
        }
    }
    Tensor::new(input_shape, out)
}

/// Space-to-depth: `(N, C, H, W)` to `(N, C·f², H/f, W/f)`.
pub fn pixel_unshuffle_forward(x: &Tensor, f: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4()?;
    if f == 0 || h % f != 0 || w % f != 0 {
        return Err(StssError::shape(
            "pixel_unshuffle",
            format!("{h}x{w} not divisible by {f}"),
        ));
    }
    let (oh, ow) = (h / f, w / f);
    let src = x.data();
    let mut out = vec![0.0f32; x.len()];
    for b in 0..n {
        for ci in 0..c {
            for dy in 0..f {
                for dx in 0..f {
                    let oc = (ci * f + dy) * f + dx;
                    let dst = &mut out[((b * c * f * f) + oc) * oh * ow..][..oh * ow];
                    for y in 0..oh {
                        for xx in 0..ow {
                            dst[y * ow + xx] = src[((b * c + ci) * h + y * f + dy) * w + xx * f + dx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(&[n, c * f * f, oh, ow], out)
}

pub fn pixel_unshuffle_backward(input_shape: &[usize], grad_out: &Tensor, f: usize) -> Result<Tensor> {
    let (n, c, h, w) = match input_shape {
        &[n, c, h, w] => (n, c, h, w),
        _ => return Err(StssError::shape("pixel_unshuffle", "rank")),
    };
    let (oh, ow) = (h / f, w / f);
    let g = grad_out.data();
    let mut out = vec![0.0f32; grad_out.len()];
    for b in 0..n {
        for ci in 0..c {
            for dy in 0..f {
                for dx in 0..f {
                    let oc = (ci * f + dy) * f + dx;
                    let src = &g[((b * c * f * f) + oc) * oh * ow..][..oh * ow];
                    for y in 0..oh {
                        for xx in 0..ow {
                            out[((b * c + ci) * h + y * f + dy) * w + xx * f + dx] = src[y * ow + xx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(input_shape, out)
}

/// Windowed ReLU linear attention.
///
/// `out(p) = Σ_{δ ∈ window} relu(⟨q(p), k(p+δ)⟩) · v(p+δ)`, with window
/// positions outside the frame contributing nothing.
pub fn window_attention_forward(q: &Tensor, k: &Tensor, v: &Tensor, window: usize) -> Result<Tensor> {
    let (n, dk, h, w) = check_attention(q, k, v, window)?;
    let dv = v.shape()[1];
    let r = (window / 2) as isize;
    let plane = h * w;
    let (qd, kd, vd) = (q.data(), k.data(), v.data());
    let mut out = vec![0.0f32; n * dv * plane];
    for b in 0..n {
        let qb = &qd[b * dk * plane..][..dk * plane];
        let kb = &kd[b * dk * plane..][..dk * plane];
        let vb = &vd[b * dv * plane..][..dv * plane];
        let ob = &mut out[b * dv * plane..][..dv * plane];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for (ny, nx) in window_iter(y, x, r, h, w) {
                    let nb = ny * w + nx;
                    let mut s = 0.0f32;
                    for c in 0..dk {
                        s += qb[c * plane + p] * kb[c * plane + nb];
                    }
                    if s <= 0.0 {
                        continue;
                    }
                    for c in 0..dv {
                        ob[c * plane + p] += s * vb[c * plane + nb];
                    }
                }
            }
        }
    }
    Tensor::new(&[n, dv, h, w], out)
}

pub fn window_attention_backward(
    q: &Tensor,
    k: &Tensor,
    v: &Tensor,
    grad_out: &Tensor,
    window: usize,
) -> Result<(Tensor, Tensor, Tensor)> {
    let (n, dk, h, w) = check_attention(q, k, v, window)?;
    let dv = v.shape()[1];
    let r = (window / 2) as isize;
    let plane = h * w;
    let (qd, kd, vd, gd) = (q.data(), k.data(), v.data(), grad_out.data());
    let mut gq = vec![0.0f32; q.len()];
    let mut gk = vec![0.0f32; k.len()];
    let mut gv = vec![0.0f32; v.len()];
    for b in 0..n {
        let qb = &qd[b * dk * plane..][..dk * plane];
        let kb = &kd[b * dk * plane..][..dk * plane];
        let vb = &vd[b * dv * plane..][..dv * plane];
        let gb = &gd[b * dv * plane..][..dv * plane];
        let gqb = &mut gq[b * dk * plane..][..dk * plane];
        let gkb = &mut gk[b * dk * plane..][..dk * plane];
        let gvb = &mut gv[b * dv * plane..][..dv * plane];
        for y in 0..h {
            for x in 0..w {
                let p = y * w + x;
                for (ny, nx) in window_iter(y, x, r, h, w) {
                    let nb = ny * w + nx;
                    let mut s = 0.0f32;
                    for c in 0..dk {
                        s += qb[c * plane + p] * kb[c * plane + nb];
                    }
                    if s <= 0.0 {
                        continue;
                    }
                    let mut ds = 0.0f32;
                    for c in 0..dv {
                        ds += gb[c * plane + p] * vb[c * plane + nb];
                        gvb[c * plane + nb] += s * gb[c * plane + p];
                    }
                    for c in 0..dk {
                        gqb[c * plane + p] += ds * kb[c * plane + nb];
                        gkb[c * plane + nb] += ds * qb[c * plane + p];
                    }
                }
            }
        }
    }
    Ok((
        Tensor::new(q.shape(), gq)?,
        Tensor::new(k.shape(), gk)?,
        Tensor::new(v.shape(), gv)?,
    ))
}

fn check_attention(q: &Tensor, k: &Tensor, v: &Tensor, window: usize) -> Result<(usize, usize, usize, usize)> {
    if window % 2 == 0 {
        return Err(StssError::shape(
            "window_attention",
            format!("window {window} must be odd"),
        ));
    }
    let (n, dk, h, w) = q.dims4()?;
    if k.shape() != q.shape() {
        return Err(StssError::shape(
            "window_attention",
            format!("query {:?} vs key {:?}", q.shape(), k.shape()),
        ));
    }
    let (vn, _, vh, vw) = v.dims4()?;
    if (vn, vh, vw) != (n, h, w) {
        return Err(StssError::shape(
            "window_attention",
            format!("query {:?} vs value {:?}", q.shape(), v.shape()),
        ));
    }
    Ok((n, dk, h, w))
}

fn window_iter(y: usize, x: usize, r: isize, h: usize, w: usize) -> impl Iterator<Item = (usize, usize)> {
    let (y, x) = (y as isize, x as isize);
    let ys = (y - r).max(0)..=(y + r).min(h as isize - 1);
    ys.flat_map(move |ny| {
        let xs = (x - r).max(0)..=(x + r).min(w as isize - 1);
        xs.map(move |nx| (ny as usize, nx as usize))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Direct six-loop cross-correlation.
    fn conv_oracle(input: &Tensor, weight: &Tensor, bias: &Tensor, stride: usize, pad: usize) -> Vec<f32> {
        let (n, ci, h, w) = input.dims4().unwrap();
        let (co, _, kh, kw) = weight.dims4().unwrap();
        let oh = (h + 2 * pad - kh) / stride + 1;
        let ow = (w + 2 * pad - kw) / stride + 1;
        let mut out = vec![0.0f64; n * co * oh * ow];
        for b in 0..n {
            for o in 0..co {
                for y in 0..oh {
                    for x in 0..ow {
                        let mut acc = bias.data()[o] as f64;
                        for c in 0..ci {
                            for ky in 0..kh {
                                for kx in 0..kw {
                                    let iy = (y * stride + ky) as isize - pad as isize;
                                    let ix = (x * stride + kx) as isize - pad as isize;
                                    if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                        continue;
                                    }
                                    let iv = input.data()[((b * ci + c) * h + iy as usize) * w + ix as usize];
                                    let wv = weight.data()[((o * ci + c) * kh + ky) * kw + kx];
                                    acc += iv as f64 * wv as f64;
                                }
                            }
                        }
                        out[((b * co + o) * oh + y) * ow + x] = acc;
                    }
                }
            }
        }
        out.into_iter().map(|v| v as f32).collect()
    }

    #[test]
    fn conv_sum_of_ones() {
        let x = Tensor::full(&[1, 1, 3, 3], 1.0);
        let wt = Tensor::full(&[1, 1, 3, 3], 1.0);
        let out = conv2d_forward(&x, &wt, Some(&Tensor::zeros(&[1])), 1, 0).unwrap();
        assert_eq!(out.shape(), &[1, 1, 1, 1]);
        assert_eq!(out.data()[0], 9.0);
    }

    #[test]
    fn conv_identity_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = Tensor::uniform(&[1, 1, 5, 4], -1.0, 1.0, &mut rng);
        let mut wt = Tensor::zeros(&[1, 1, 3, 3]);
        wt.data_mut()[4] = 1.0;
        let out = conv2d_forward(&x, &wt, None, 1, 1).unwrap();
        assert_eq!(out, x);
    }

    #[test]
    fn conv_matches_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for &(stride, pad, k) in &[(1, 1, 3), (1, 0, 3), (2, 1, 3), (1, 0, 1), (2, 0, 2)] {
            let x = Tensor::uniform(&[2, 3, 8, 8], -1.0, 1.0, &mut rng);
            let wt = Tensor::uniform(&[4, 3, k, k], -1.0, 1.0, &mut rng);
            let b = Tensor::uniform(&[4], -1.0, 1.0, &mut rng);
            let got = conv2d_forward(&x, &wt, Some(&b), stride, pad).unwrap();
            let want = conv_oracle(&x, &wt, &b, stride, pad);
            assert_eq!(got.len(), want.len());
            for (g, w) in got.data().iter().zip(&want) {
                assert!((g - w).abs() < 1e-5, "stride {stride} pad {pad}: {g} vs {w}");
            }
        }
    }

    #[test]
    fn conv_rejects_channel_mismatch() {
        let x = Tensor::zeros(&[1, 2, 4, 4]);
        let wt = Tensor::zeros(&[1, 3, 3, 3]);
        assert!(matches!(
            conv2d_forward(&x, &wt, None, 1, 1),
            Err(StssError::Shape { .. })
        ));
    }

    #[test]
    fn upsample_preserves_constants() {
        let x = Tensor::full(&[1, 2, 3, 5], 0.7);
        let up = upsample_bilinear2_forward(&x).unwrap();
        assert_eq!(up.shape(), &[1, 2, 6, 10]);
        assert!(up.data().iter().all(|&v| (v - 0.7).abs() < 1e-7));
    }

    #[test]
    fn pixel_unshuffle_is_a_permutation() {
        let x = Tensor::new(&[1, 1, 2, 4], (0..8).map(|v| v as f32).collect()).unwrap();
        let y = pixel_unshuffle_forward(&x, 2).unwrap();
        assert_eq!(y.shape(), &[1, 4, 1, 2]);
        assert_eq!(y.data(), &[0.0, 2.0, 1.0, 3.0, 4.0, 6.0, 5.0, 7.0]);
        let back = pixel_unshuffle_backward(x.shape(), &y, 2).unwrap();
        assert_eq!(back, x);
    }

    #[test]
    fn attention_requires_odd_window() {
        let q = Tensor::zeros(&[1, 2, 3, 3]);
        assert!(window_attention_forward(&q, &q, &q, 4).is_err());
    }
}

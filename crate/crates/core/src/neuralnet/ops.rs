//! Differentiable building blocks. Every backward function returns the
//! gradients of a scalar loss given the gradient of that loss with respect
//! to the forward output.

use super::tensor::Tensor4;
use crate::error::{Error, Result};
use crate::resample::{bicubic_resample, Factor, Plane, ResampleSpec};

/// `c = a · b + beta · c` for row-major `c` (`m`×`n`). `a` is `m`×`k`
/// (stored `k`×`m` when `trans_a`), `b` is `k`×`n` (stored `n`×`k` when
/// `trans_b`).
#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    trans_a: bool,
    b: &[f64],
    trans_b: bool,
    beta: f64,
    c: &mut [f64],
) {
    assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if trans_a { (1, m) } else { (k, 1) };
    let (rsb, csb) = if trans_b { (1, k) } else { (n, 1) };
    // SAFETY: the slices are at least as long as the strided views
    // described above, and `c` does not alias `a` or `b`.
    unsafe {
        matrixmultiply::dgemm(
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
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy)]
struct ConvGeometry {
    channels: usize,
    height: usize,
    width: usize,
    kh: usize,
    kw: usize,
    pad: usize,
    out_h: usize,
    out_w: usize,
}

impl ConvGeometry {
    fn new(input: &Tensor4, weight: &Tensor4, pad: usize) -> Result<Self> {
        let [_, c, h, w] = input.dims();
        let [_, wc, kh, kw] = weight.dims();
        if wc != c {
            return Err(Error::Shape(format!(
                "kernel expects {wc} input channels, tensor has {c}"
            )));
        }
        if h + 2 * pad < kh || w + 2 * pad < kw {
            return Err(Error::Shape(format!(
                "{kh}x{kw} kernel does not fit a {h}x{w} input padded by {pad}"
            )));
        }
        Ok(Self {
            channels: c,
            height: h,
            width: w,
            kh,
            kw,
            pad,
            out_h: h + 2 * pad - kh + 1,
            out_w: w + 2 * pad - kw + 1,
        })
    }

    fn patch_len(&self) -> usize {
        self.channels * self.kh * self.kw
    }

    fn out_len(&self) -> usize {
        self.out_h * self.out_w
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.pad == 0
    }

    /// Source column range `[x0, x1)` of output columns that read real
    /// (unpadded) input for kernel column `kx`.
    #[inline]
    fn valid_cols(&self, kx: usize) -> (usize, usize) {
        let x0 = self.pad.saturating_sub(kx);
        let x1 = (self.width + self.pad).saturating_sub(kx).min(self.out_w);
        (x0, x1.max(x0))
    }

    /// Unfolds one `(C, H, W)` item into a `(C·kh·kw, out_h·out_w)` matrix.
    fn im2col(&self, item: &[f64], col: &mut [f64]) {
        let (h, w, ow) = (self.height, self.width, self.out_w);
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &item[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let dst = &mut col[row * self.out_len()..(row + 1) * self.out_len()];
                    let (x0, x1) = self.valid_cols(kx);
                    for oy in 0..self.out_h {
                        let out_row = &mut dst[oy * ow..(oy + 1) * ow];
                        let iy = oy as isize + ky as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            out_row.fill(0.0);
                            continue;
                        }
                        let src = &plane[iy as usize * w..(iy as usize + 1) * w];
                        out_row[..x0].fill(0.0);
                        out_row[x1..].fill(0.0);
                        let sx = x0 + kx - self.pad;
                        out_row[x0..x1].copy_from_slice(&src[sx..sx + (x1 - x0)]);
                    }
                    row += 1;
                }
            }
        }
    }

    /// Adjoint of [`Self::im2col`]: accumulates columns back into an item.
    fn col2im(&self, col: &[f64], item: &mut [f64]) {
        let (h, w, ow) = (self.height, self.width, self.out_w);
        let mut row = 0;
        for c in 0..self.channels {
            let plane = &mut item[c * h * w..(c + 1) * h * w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let srcm = &col[row * self.out_len()..(row + 1) * self.out_len()];
                    let (x0, x1) = self.valid_cols(kx);
                    for oy in 0..self.out_h {
                        let iy = oy as isize + ky as isize - self.pad as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * w..(iy as usize + 1) * w];
                        let sx = x0 + kx - self.pad;
                        for (d, s) in dst[sx..sx + (x1 - x0)]
                            .iter_mut()
                            .zip(&srcm[oy * ow + x0..oy * ow + x1])
                        {
                            *d += s;
                        }
                    }
                    row += 1;
                }
            }
        }
    }
}

/// 2D cross-correlation with zero padding. `weight` is
/// `(out_ch, in_ch, kh, kw)`; `bias` has one entry per output channel.
pub fn conv2d_forward(
    input: &Tensor4,
    weight: &Tensor4,
    bias: &[f64],
    padding: usize,
) -> Result<Tensor4> {
    let g = ConvGeometry::new(input, weight, padding)?;
    let out_ch = weight.batch();
    if bias.len() != out_ch {
        return Err(Error::Shape(format!(
            "{} biases for {out_ch} output channels",
            bias.len()
        )));
    }
    let mut out = Tensor4::zeros([input.batch(), out_ch, g.out_h, g.out_w]);
    let mut col = vec![0.0; if g.is_pointwise() { 0 } else { g.patch_len() * g.out_len() }];
    for b in 0..input.batch() {
        let dst = out.item_mut(b);
        for (o, &bo) in bias.iter().enumerate() {
            dst[o * g.out_len()..(o + 1) * g.out_len()].fill(bo);
        }
        let cols = if g.is_pointwise() {
            input.item(b)
        } else {
            g.im2col(input.item(b), &mut col);
            &col
        };
        gemm(out_ch, g.patch_len(), g.out_len(), weight.data(), false, cols, false, 1.0, dst);
    }
    Ok(out)
}

/// Gradients of [`conv2d_forward`]: `(grad_input, grad_weight, grad_bias)`.
/// `grad_input` is skipped when `want_input` is false.
pub fn conv2d_backward_impl(
    grad_out: &Tensor4,
    input: &Tensor4,
    weight: &Tensor4,
    padding: usize,
    want_input: bool,
) -> Result<(Option<Tensor4>, Tensor4, Vec<f64>)> {
    let g = ConvGeometry::new(input, weight, padding)?;
    let out_ch = weight.batch();
    if grad_out.dims() != [input.batch(), out_ch, g.out_h, g.out_w] {
        return Err(Error::Shape(format!(
            "output gradient {:?} does not match the forward output",
            grad_out.dims()
        )));
    }
    let mut grad_w = Tensor4::zeros(weight.dims());
    let mut grad_b = vec![0.0; out_ch];
    let mut grad_in = want_input.then(|| Tensor4::zeros(input.dims()));
    let pointwise = g.is_pointwise();
    let mut col = vec![0.0; if pointwise { 0 } else { g.patch_len() * g.out_len() }];
    let mut gcol = vec![0.0; if pointwise || !want_input { 0 } else { col.len() }];
    for b in 0..input.batch() {
        let go = grad_out.item(b);
        for (o, gb) in grad_b.iter_mut().enumerate() {
            *gb += go[o * g.out_len()..(o + 1) * g.out_len()].iter().sum::<f64>();
        }
        let cols = if pointwise {
            input.item(b)
        } else {
            g.im2col(input.item(b), &mut col);
            &col
        };
        // dW (out_ch × patch) += dY (out_ch × hw) · colsᵀ
        gemm(
            out_ch,
            g.out_len(),
            g.patch_len(),
            go,
            false,
            cols,
            true,
            1.0,
            grad_w.data_mut(),
        );
        if let Some(gi) = grad_in.as_mut() {
            // dcols (patch × hw) = Wᵀ · dY
            if pointwise {
                gemm(g.patch_len(), out_ch, g.out_len(), weight.data(), true, go, false, 0.0, gi.item_mut(b));
            } else {
                gemm(g.patch_len(), out_ch, g.out_len(), weight.data(), true, go, false, 0.0, &mut gcol);
                g.col2im(&gcol, gi.item_mut(b));
            }
        }
    }
    Ok((grad_in, grad_w, grad_b))
}

/// Gradients of [`conv2d_forward`]: `(grad_input, grad_weight, grad_bias)`.
pub fn conv2d_backward(
    grad_out: &Tensor4,
    input: &Tensor4,
    weight: &Tensor4,
    padding: usize,
) -> Result<(Tensor4, Tensor4, Vec<f64>)> {
    let (gi, gw, gb) = conv2d_backward_impl(grad_out, input, weight, padding, true)?;
    Ok((gi.expect("input gradient requested"), gw, gb))
}

pub fn relu_forward(x: &Tensor4) -> Tensor4 {
    let data = x.data().iter().map(|v| v.max(0.0)).collect();
    Tensor4::new(x.dims(), data).expect("same dims")
}

/// Subgradient at zero is zero.
pub fn relu_backward(x: &Tensor4, grad_out: &Tensor4) -> Result<Tensor4> {
    same_dims(x, grad_out)?;
    let data = x
        .data()
        .iter()
        .zip(grad_out.data())
        .map(|(v, g)| if *v > 0.0 { *g } else { 0.0 })
        .collect();
    Tensor4::new(x.dims(), data)
}

/// Parametric ReLU with one learnable slope per channel.
pub fn prelu_forward(x: &Tensor4, slopes: &[f64]) -> Result<Tensor4> {
    check_slopes(x, slopes)?;
    let mut out = x.clone();
    let hw = x.height() * x.width();
    for (i, chunk) in out.data_mut().chunks_mut(hw).enumerate() {
        let a = slopes[i % x.channels()];
        for v in chunk {
            if *v < 0.0 {
                *v *= a;
            }
        }
    }
    Ok(out)
}

/// Returns `(grad_input, grad_slopes)`. Subgradient at zero is zero.
pub fn prelu_backward(x: &Tensor4, slopes: &[f64], grad_out: &Tensor4) -> Result<(Tensor4, Vec<f64>)> {
    check_slopes(x, slopes)?;
    same_dims(x, grad_out)?;
    let hw = x.height() * x.width();
    let mut gx = Tensor4::zeros(x.dims());
    let mut ga = vec![0.0; slopes.len()];
    for (i, ((xs, gs), dst)) in x
        .data()
        .chunks(hw)
        .zip(grad_out.data().chunks(hw))
        .zip(gx.data_mut().chunks_mut(hw))
        .enumerate()
    {
        let c = i % x.channels();
        let a = slopes[c];
        let mut acc = 0.0;
        for ((v, g), d) in xs.iter().zip(gs).zip(dst) {
            if *v > 0.0 {
                *d = *g;
            } else if *v < 0.0 {
                *d = a * g;
                acc += v * g;
            }
        }
        ga[c] += acc;
    }
    Ok((gx, ga))
}

fn check_slopes(x: &Tensor4, slopes: &[f64]) -> Result<()> {
    if slopes.len() != x.channels() {
        return Err(Error::Shape(format!(
            "{} PReLU slopes for {} channels",
            slopes.len(),
            x.channels()
        )));
    }
    Ok(())
}

fn same_dims(a: &Tensor4, b: &Tensor4) -> Result<()> {
    if a.dims() != b.dims() {
        return Err(Error::Shape(format!("dims {:?} vs {:?}", a.dims(), b.dims())));
    }
    Ok(())
}

/// `(b, c·r², h, w) → (b, c, h·r, w·r)` with
/// `out[b, c, y·r + i, x·r + j] = in[b, c·r² + i·r + j, y, x]`.
pub fn pixel_shuffle(input: &Tensor4, r: usize) -> Result<Tensor4> {
    let [b, cin, h, w] = input.dims();
    if r == 0 || cin % (r * r) != 0 {
        return Err(Error::Shape(format!(
            "{cin} channels are not divisible by {r}²"
        )));
    }
    let c = cin / (r * r);
    let mut out = Tensor4::zeros([b, c, h * r, w * r]);
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let src_c = ci * r * r + i * r + j;
                    for y in 0..h {
                        let src = input.index(bi, src_c, y, 0);
                        let dst_row = out.index(bi, ci, y * r + i, 0);
                        let dst = out.data_mut();
                        for x in 0..w {
                            dst[dst_row + x * r + j] = input.data()[src + x];
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Inverse of [`pixel_shuffle`]; also its adjoint, since the map is a
/// permutation.
pub fn pixel_unshuffle(input: &Tensor4, r: usize) -> Result<Tensor4> {
    let [b, c, hr, wr] = input.dims();
    if r == 0 || hr % r != 0 || wr % r != 0 {
        return Err(Error::Shape(format!(
            "{hr}x{wr} is not divisible by {r}"
        )));
    }
    let (h, w) = (hr / r, wr / r);
    let mut out = Tensor4::zeros([b, c * r * r, h, w]);
    for bi in 0..b {
        for ci in 0..c {
            for i in 0..r {
                for j in 0..r {
                    let dst_c = ci * r * r + i * r + j;
                    for y in 0..h {
                        let src_row = input.index(bi, ci, y * r + i, 0);
                        let dst = out.index(bi, dst_c, y, 0);
                        for x in 0..w {
                            let v = input.data()[src_row + x * r + j];
                            out.data_mut()[dst + x] = v;
                        }
                    }
                }
            }
        }
    }
    Ok(out)
}

/// Bicubic enlargement of every plane by an integer factor.
pub fn bicubic_upsample(input: &Tensor4, factor: usize) -> Result<Tensor4> {
    let [b, c, h, w] = input.dims();
    let spec = ResampleSpec::new(Factor::up(factor as u32));
    let mut data = Vec::with_capacity(b * c * h * w * factor * factor);
    for plane in input.data().chunks(h * w) {
        let up = bicubic_resample(&Plane::new(h, w, plane.to_vec())?, &spec)?;
        data.extend_from_slice(&up.data);
    }
    Tensor4::new([b, c, h * factor, w * factor], data)
}

/// Mean squared error and its gradient `2 (pred − target) / N`.
pub fn mse_loss(pred: &Tensor4, target: &Tensor4) -> Result<(f64, Tensor4)> {
    same_dims(pred, target)?;
    let n = pred.len() as f64;
    let mut grad = Tensor4::zeros(pred.dims());
    let mut sum = 0.0;
    for ((p, t), g) in pred.data().iter().zip(target.data()).zip(grad.data_mut()) {
        let d = p - t;
        sum += d * d;
        *g = 2.0 * d / n;
    }
    Ok((sum / n, grad))
}

//! 2-D convolution and transposed convolution over `[N, C, H, W]` maps.
//!
//! Both lower to GEMM through an im2col buffer. Depthwise kernels take a
//! direct path since their per-group GEMMs are degenerate.

use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    /// Zero padding on every side. Reflect padding is applied beforehand with
    /// [`Tensor::pad2d`].
    pub padding: usize,
    pub groups: usize,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Conv2dOptions {
            stride: 1,
            padding: 0,
            groups: 1,
        }
    }
}

#[derive(Clone, Copy)]
struct Geom {
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
}

impl Geom {
    fn rows(&self) -> usize {
        self.c * self.kh * self.kw
    }
    fn cols(&self) -> usize {
        self.ho * self.wo
    }
}

fn im2col<F: Float>(x: &[F], g: Geom, col: &mut [F]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let dst = &mut col[row * cols..(row + 1) * cols];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    let line = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    if iy < 0 || iy as usize >= g.h {
                        line.iter_mut().for_each(|v| *v = F::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for (ox, v) in line.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        *v = if ix < 0 || ix as usize >= g.w { F::zero() } else { src[ix as usize] };
                    }
                }
            }
        }
    }
}

fn col2im<F: Float>(col: &[F], g: Geom, x: &mut [F]) {
    let cols = g.cols();
    for c in 0..g.c {
        let plane = &mut x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let row = (c * g.kh + ky) * g.kw + kx;
                let src = &col[row * cols..(row + 1) * cols];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            dst[ix as usize] += src[oy * g.wo + ox];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_forward<F: Float>(x: &[F], w: &[F], g: Geom, out: &mut [F]) {
    // g.c channels, one kernel each
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        let k = &w[c * g.kh * g.kw..(c + 1) * g.kh * g.kw];
        let o = &mut out[c * g.ho * g.wo..(c + 1) * g.ho * g.wo];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let wv = k[ky * g.kw + kx];
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                    let dst = &mut o[oy * g.wo..(oy + 1) * g.wo];
                    for (ox, d) in dst.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix >= 0 && (ix as usize) < g.w {
                            *d += wv * src[ix as usize];
                        }
                    }
                }
            }
        }
    }
}

fn depthwise_backward<F: Float>(x: &[F], w: &[F], g: Geom, gout: &[F], gx: Option<&mut [F]>, gw: Option<&mut [F]>) {
    let mut gx = gx;
    let mut gw = gw;
    for c in 0..g.c {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        let go = &gout[c * g.ho * g.wo..(c + 1) * g.ho * g.wo];
        for ky in 0..g.kh {
            for kx in 0..g.kw {
                let ki = c * g.kh * g.kw + ky * g.kw + kx;
                let wv = w[ki];
                let mut acc = F::zero();
                for oy in 0..g.ho {
                    let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                    if iy < 0 || iy as usize >= g.h {
                        continue;
                    }
                    let row = iy as usize * g.w;
                    for ox in 0..g.wo {
                        let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                        if ix < 0 || ix as usize >= g.w {
                            continue;
                        }
                        let gv = go[oy * g.wo + ox];
                        acc += gv * plane[row + ix as usize];
                        if let Some(gx) = gx.as_deref_mut() {
                            gx[c * g.h * g.w + row + ix as usize] += gv * wv;
                        }
                    }
                }
                if let Some(gw) = gw.as_deref_mut() {
                    gw[ki] += acc;
                }
            }
        }
    }
}

fn add_channel_bias<F: Float>(out: &mut [F], bias: &[F], n: usize, c: usize, hw: usize) {
    for i in 0..n {
        for (ch, &b) in bias.iter().enumerate().take(c) {
            out[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter_mut().for_each(|v| *v += b);
        }
    }
}

fn bias_grad<F: Float>(g: &[F], n: usize, c: usize, hw: usize) -> Vec<F> {
    let mut gb = vec![F::zero(); c];
    for i in 0..n {
        for (ch, acc) in gb.iter_mut().enumerate() {
            *acc += g[(i * c + ch) * hw..(i * c + ch + 1) * hw].iter().copied().sum::<F>();
        }
    }
    gb
}

fn check_bias<F: Float>(op: &'static str, bias: Option<&Tensor<F>>, c: usize) -> Result<()> {
    match bias {
        Some(b) if b.shape() != [c] => Err(TensorError::shape(op, b.shape(), &[c])),
        _ => Ok(()),
    }
}

impl<F: Float> Tensor<F> {
    /// Cross-correlation of `[N, Cin, H, W]` with `[Cout, Cin/groups, kh, kw]`.
    pub fn conv2d(&self, weight: &Tensor<F>, bias: Option<&Tensor<F>>, opts: Conv2dOptions) -> Result<Tensor<F>> {
        const OP: &str = "conv2d";
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 {
            return Err(TensorError::shape(OP, xs, ws));
        }
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, cin_g, kh, kw) = (ws[0], ws[1], ws[2], ws[3]);
        let groups = opts.groups.max(1);
        if opts.stride == 0 || cin % groups != 0 || cout % groups != 0 || cin / groups != cin_g {
            return Err(TensorError::shape(OP, xs, ws));
        }
        check_bias(OP, bias, cout)?;
        let (hp, wp) = (h + 2 * opts.padding, w + 2 * opts.padding);
        if hp < kh || wp < kw {
            return Err(TensorError::invalid(OP, format!("kernel {kh}x{kw} larger than padded input {hp}x{wp}")));
        }
        let ho = (hp - kh) / opts.stride + 1;
        let wo = (wp - kw) / opts.stride + 1;
        let cout_g = cout / groups;
        let geom = Geom {
            c: cin_g,
            h,
            w,
            kh,
            kw,
            stride: opts.stride,
            pad: opts.padding,
            ho,
            wo,
        };
        let depthwise = cin_g == 1 && cout_g == 1;
        let pointwise = kh == 1 && kw == 1 && opts.stride == 1 && opts.padding == 0;
        let x = self.data();
        let wt = weight.data();
        let (in_n, out_n, in_g, out_g, w_g) = (cin * h * w, cout * ho * wo, cin_g * h * w, cout_g * ho * wo, cout_g * geom.rows());
        let mut out = vec![F::zero(); n * out_n];
        if depthwise {
            let dg = Geom { c: cin, ..geom };
            for i in 0..n {
                depthwise_forward(&x[i * in_n..(i + 1) * in_n], wt, dg, &mut out[i * out_n..(i + 1) * out_n]);
            }
        } else {
            let mut col = if pointwise { Vec::new() } else { vec![F::zero(); geom.rows() * geom.cols()] };
            for i in 0..n {
                for gi in 0..groups {
                    let xg = &x[i * in_n + gi * in_g..i * in_n + (gi + 1) * in_g];
                    let colref: &[F] = if pointwise {
                        xg
                    } else {
                        im2col(xg, geom, &mut col);
                        &col
                    };
                    let dst = &mut out[i * out_n + gi * out_g..i * out_n + (gi + 1) * out_g];
                    F::gemm(cout_g, geom.rows(), geom.cols(), &wt[gi * w_g..], false, colref, false, dst, false);
                }
            }
        }
        if let Some(b) = bias {
            add_channel_bias(&mut out, b.data(), n, cout, ho * wo);
        }
        let mut inputs = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        let (xt, wt_t) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        Tensor::from_op(OP, vec![n, cout, ho, wo], out, inputs, move |ctx| {
            let g = ctx.grad;
            let (x, wt) = (xt.data(), wt_t.data());
            let mut gx = ctx.needs[0].then(|| vec![F::zero(); x.len()]);
            let mut gw = ctx.needs[1].then(|| vec![F::zero(); wt.len()]);
            if depthwise {
                let dg = Geom { c: cin, ..geom };
                for i in 0..n {
                    depthwise_backward(
                        &x[i * in_n..(i + 1) * in_n],
                        wt,
                        dg,
                        &g[i * out_n..(i + 1) * out_n],
                        gx.as_mut().map(|v| &mut v[i * in_n..(i + 1) * in_n]),
                        gw.as_deref_mut(),
                    );
                }
            } else {
                let mut col = vec![F::zero(); if pointwise { 0 } else { geom.rows() * geom.cols() }];
                let mut dcol = vec![F::zero(); geom.rows() * geom.cols()];
                for i in 0..n {
                    for gi in 0..groups {
                        let xg = &x[i * in_n + gi * in_g..i * in_n + (gi + 1) * in_g];
                        let gog = &g[i * out_n + gi * out_g..i * out_n + (gi + 1) * out_g];
                        if let Some(gw) = gw.as_mut() {
                            let colref: &[F] = if pointwise {
                                xg
                            } else {
                                im2col(xg, geom, &mut col);
                                &col
                            };
                            F::gemm(cout_g, geom.cols(), geom.rows(), gog, false, colref, true, &mut gw[gi * w_g..(gi + 1) * w_g], true);
                        }
                        if let Some(gx) = gx.as_mut() {
                            let dst = &mut gx[i * in_n + gi * in_g..i * in_n + (gi + 1) * in_g];
                            if pointwise {
                                F::gemm(geom.rows(), cout_g, geom.cols(), &wt[gi * w_g..], true, gog, false, dst, true);
                            } else {
                                F::gemm(geom.rows(), cout_g, geom.cols(), &wt[gi * w_g..], true, gog, false, &mut dcol, false);
                                col2im(&dcol, geom, dst);
                            }
                        }
                    }
                }
            }
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(ctx.needs[2].then(|| bias_grad(g, n, cout, ho * wo)));
            }
            grads
        })
    }

    /// Transposed convolution of `[N, Cin, H, W]` with `[Cin, Cout, kh, kw]`,
    /// no padding; output is `[(H-1)*stride + kh, (W-1)*stride + kw]`.
    pub fn conv_transpose2d(&self, weight: &Tensor<F>, bias: Option<&Tensor<F>>, stride: usize) -> Result<Tensor<F>> {
        const OP: &str = "conv_transpose2d";
        let (xs, ws) = (self.shape(), weight.shape());
        if xs.len() != 4 || ws.len() != 4 || xs[1] != ws[0] || stride == 0 {
            return Err(TensorError::shape(OP, xs, ws));
        }
        let (n, cin, h, w) = (xs[0], xs[1], xs[2], xs[3]);
        let (cout, kh, kw) = (ws[1], ws[2], ws[3]);
        check_bias(OP, bias, cout)?;
        let (ho, wo) = ((h - 1) * stride + kh, (w - 1) * stride + kw);
        // im2col geometry over the *output* image, producing h x w positions
        let geom = Geom {
            c: cout,
            h: ho,
            w: wo,
            kh,
            kw,
            stride,
            pad: 0,
            ho: h,
            wo: w,
        };
        let (in_n, out_n) = (cin * h * w, cout * ho * wo);
        let x = self.data();
        let wt = weight.data();
        let mut out = vec![F::zero(); n * out_n];
        let mut col = vec![F::zero(); geom.rows() * geom.cols()];
        for i in 0..n {
            F::gemm(geom.rows(), cin, h * w, wt, true, &x[i * in_n..], false, &mut col, false);
            col2im(&col, geom, &mut out[i * out_n..(i + 1) * out_n]);
        }
        if let Some(b) = bias {
            add_channel_bias(&mut out, b.data(), n, cout, ho * wo);
        }
        let mut inputs = vec![self.clone(), weight.clone()];
        if let Some(b) = bias {
            inputs.push(b.clone());
        }
        let (xt, wt_t) = (self.clone(), weight.clone());
        let has_bias = bias.is_some();
        Tensor::from_op(OP, vec![n, cout, ho, wo], out, inputs, move |ctx| {
            let g = ctx.grad;
            let (x, wt) = (xt.data(), wt_t.data());
            let mut gx = ctx.needs[0].then(|| vec![F::zero(); x.len()]);
            let mut gw = ctx.needs[1].then(|| vec![F::zero(); wt.len()]);
            let mut dcol = vec![F::zero(); geom.rows() * geom.cols()];
            for i in 0..n {
                im2col(&g[i * out_n..(i + 1) * out_n], geom, &mut dcol);
                if let Some(gx) = gx.as_mut() {
                    F::gemm(cin, geom.rows(), h * w, wt, false, &dcol, false, &mut gx[i * in_n..(i + 1) * in_n], false);
                }
                if let Some(gw) = gw.as_mut() {
                    F::gemm(cin, h * w, geom.rows(), &x[i * in_n..], false, &dcol, true, gw, true);
                }
            }
            let mut grads = vec![gx, gw];
            if has_bias {
                grads.push(ctx.needs[2].then(|| bias_grad(g, n, cout, ho * wo)));
            }
            grads
        })
    }
}

//! 2-D convolution by explicit patch expansion.
//!
//! `conv2d` lowers to `im2col -> matmul -> reshape/swap`, so its gradient
//! (and the gradient of that gradient) comes from the primitives' rules.
//! [`conv2d_reference`] is the direct loop kernel kept as an oracle.

use super::{Element, Result, Tensor, TensorError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct ConvGeom {
    pub c: usize,
    pub h: usize,
    pub w: usize,
    pub k: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvGeom {
    pub fn ho(&self) -> usize {
        conv_output_size(self.h, self.k, self.stride, self.pad)
    }

    pub fn wo(&self) -> usize {
        conv_output_size(self.w, self.k, self.stride, self.pad)
    }
}

/// `floor((size + 2·pad − k) / stride) + 1`.
pub fn conv_output_size(size: usize, k: usize, stride: usize, pad: usize) -> usize {
    (size + 2 * pad - k) / stride + 1
}

/// Output columns `ox` whose input column `ox + kx − pad` is in bounds (stride 1).
fn unit_stride_span(g: &ConvGeom, kx: usize, wo: usize) -> (usize, usize) {
    let lo = g.pad.saturating_sub(kx);
    let hi = (g.w + g.pad).saturating_sub(kx).min(wo);
    (lo, hi)
}

/// Patches of `x` (N×C×H×W) laid out as rows `(c, ky, kx)` by columns `(n, oy, ox)`.
pub(crate) fn im2col_raw<T: Element>(x: &[T], n: usize, g: &ConvGeom) -> Vec<T> {
    let (ho, wo) = (g.ho(), g.wo());
    // Rows are emitted in output order, so the buffer is filled by pushes
    // and only padding is written as zeros.
    let mut out = Vec::with_capacity(g.c * g.k * g.k * n * ho * wo);
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                for b in 0..n {
                    let plane = &x[(b * g.c + ci) * g.h * g.w..(b * g.c + ci + 1) * g.h * g.w];
                    for oy in 0..ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            out.resize(out.len() + wo, T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * g.w..(iy as usize + 1) * g.w];
                        if g.stride == 1 {
                            let (lo, hi) = unit_stride_span(g, kx, wo);
                            let hi = hi.max(lo);
                            out.resize(out.len() + lo, T::zero());
                            if lo < hi {
                                let off = lo + kx - g.pad;
                                out.extend_from_slice(&src[off..off + hi - lo]);
                            }
                            out.resize(out.len() + wo - hi, T::zero());
                            continue;
                        }
                        out.extend((0..wo).map(|ox| {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize { src[ix as usize] } else { T::zero() }
                        }));
                    }
                }
            }
        }
    }
    out
}

/// Adjoint of [`im2col_raw`]: scatters patch columns back, summing overlaps.
pub(crate) fn col2im_raw<T: Element>(cols_data: &[T], n: usize, g: &ConvGeom) -> Vec<T> {
    let (ho, wo) = (g.ho(), g.wo());
    let l = ho * wo;
    let cols = n * l;
    let mut out = vec![T::zero(); n * g.c * g.h * g.w];
    for ci in 0..g.c {
        for ky in 0..g.k {
            for kx in 0..g.k {
                let row = (ci * g.k + ky) * g.k + kx;
                let irow = &cols_data[row * cols..(row + 1) * cols];
                for b in 0..n {
                    let base = (b * g.c + ci) * g.h * g.w;
                    for oy in 0..ho {
                        let iy = (oy * g.stride + ky) as isize - g.pad as isize;
                        if iy < 0 || iy >= g.h as isize {
                            continue;
                        }
                        let dst = &mut out[base + iy as usize * g.w..base + (iy as usize + 1) * g.w];
                        let src = &irow[b * l + oy * wo..b * l + (oy + 1) * wo];
                        if g.stride == 1 {
                            let (lo, hi) = unit_stride_span(g, kx, wo);
                            if lo < hi {
                                let off = lo + kx - g.pad;
                                for (d, &s) in dst[off..off + hi - lo].iter_mut().zip(&src[lo..hi]) {
                                    *d += s;
                                }
                            }
                            continue;
                        }
                        for (ox, &s) in src.iter().enumerate() {
                            let ix = (ox * g.stride + kx) as isize - g.pad as isize;
                            if ix >= 0 && ix < g.w as isize {
                                dst[ix as usize] += s;
                            }
                        }
                    }
                }
            }
        }
    }
    out
}

fn check_conv<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
) -> Result<(ConvGeom, usize, usize)> {
    let (n, c, h, w) = match *input.shape() {
        [n, c, h, w] => (n, c, h, w),
        _ => {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!("input must be N×C×H×W, got {:?}", input.shape()),
            })
        }
    };
    let (cout, cin, k1, k2) = match *weight.shape() {
        [a, b, c, d] => (a, b, c, d),
        _ => {
            return Err(TensorError::Invalid {
                op: "conv2d",
                msg: format!("weight must be Cout×Cin×K×K, got {:?}", weight.shape()),
            })
        }
    };
    if cin != c {
        return Err(TensorError::Invalid {
            op: "conv2d",
            msg: format!("input has {c} channels but filter bank expects Cin = {cin}"),
        });
    }
    if k1 != k2 {
        return Err(TensorError::Invalid {
            op: "conv2d",
            msg: format!("only square kernels are supported, got {k1}x{k2}"),
        });
    }
    if stride == 0 {
        return Err(TensorError::Invalid { op: "conv2d", msg: "stride must be >= 1".into() });
    }
    Ok((ConvGeom { c, h, w, k: k1, stride, pad: 0 }, n, cout))
}

/// Cross-correlation of an NCHW input with a Cout×Cin×K×K filter bank.
pub fn conv2d<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (mut geom, n, cout) = check_conv(input, weight, stride)?;
    geom.pad = padding;
    if geom.h + 2 * padding < geom.k || geom.w + 2 * padding < geom.k {
        return Err(TensorError::Invalid {
            op: "conv2d",
            msg: format!("kernel {} larger than padded input {}x{}", geom.k, geom.h, geom.w),
        });
    }
    let (ho, wo) = (geom.ho(), geom.wo());
    let cols = input.im2col(geom)?;
    let wmat = weight.reshape(&[cout, geom.c * geom.k * geom.k])?;
    let y = wmat.matmul(&cols)?;
    if n == 1 {
        return y.reshape(&[1, cout, ho, wo]);
    }
    y.reshape(&[cout, n, ho, wo])?.swap01()
}

/// Direct nested-loop convolution used as a test oracle.
pub fn conv2d_reference<T: Element>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let (geom, n, cout) = check_conv(input, weight, stride)?;
    let (c, h, w, k) = (geom.c, geom.h, geom.w, geom.k);
    let ho = conv_output_size(h, k, stride, padding);
    let wo = conv_output_size(w, k, stride, padding);
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![T::zero(); n * cout * ho * wo];
    for b in 0..n {
        for o in 0..cout {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut acc = T::zero();
                    for i in 0..c {
                        for ky in 0..k {
                            for kx in 0..k {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * c + i) * h + iy as usize) * w + ix as usize]
                                    * wt[((o * c + i) * k + ky) * k + kx];
                            }
                        }
                    }
                    out[((b * cout + o) * ho + oy) * wo + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec(out, &[n, cout, ho, wo])
}

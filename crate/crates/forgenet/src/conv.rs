//! Convolution via im2col lowering.
//!
//! A convolution over an NCHW batch is rewritten as one matrix product:
//! every receptive-field patch becomes a row of a column matrix, and the
//! kernel becomes an `[out_channels x patch_len]` matrix. The same explicit
//! matrix is what the bound analysis inspects.

use crate::error::{Error, Result};
use crate::tensor::{matmul, Tensor};

/// Output spatial extents for a convolution, or a dimension error when the
/// kernel does not fit the padded input.
pub fn out_hw(
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Result<(usize, usize)> {
    if stride == 0 {
        return Err(Error::Contract("conv stride must be >= 1".into()));
    }
    if kh > h + 2 * padding || kw > w + 2 * padding {
        return Err(Error::dimension(
            "conv kernel",
            format!("kernel within padded input {}x{}", h + 2 * padding, w + 2 * padding),
            format!("{kh}x{kw}"),
        ));
    }
    Ok(((h + 2 * padding - kh) / stride + 1, (w + 2 * padding - kw) / stride + 1))
}

/// Lowers an `[B, C, H, W]` tensor to patch rows `[B*OH*OW, C*KH*KW]`.
/// Out-of-bounds (padding) positions contribute zeros.
pub fn im2col(
    x: &Tensor,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, usize, usize)> {
    let [b, c, h, w] = nchw_dims(x)?;
    let (oh, ow) = out_hw(h, w, kh, kw, stride, padding)?;
    let patch = c * kh * kw;
    let mut cols = vec![0.0; b * oh * ow * patch];
    let xd = x.data();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh + oy) * ow + ox) * patch;
                for ci in 0..c {
                    for ky in 0..kh {
                        let sy = (oy * stride + ky) as isize - padding as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let sx = (ox * stride + kx) as isize - padding as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let src = ((bi * c + ci) * h + sy as usize) * w + sx as usize;
                            cols[row + (ci * kh + ky) * kw + kx] = xd[src];
                        }
                    }
                }
            }
        }
    }
    Ok((Tensor::new(vec![b * oh * ow, patch], cols), oh, ow))
}

/// Adjoint of [`im2col`]: scatter-adds patch-row gradients back onto the
/// input feature map.
#[allow(clippy::too_many_arguments)]
pub fn col2im(
    dcols: &Tensor,
    b: usize,
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
) -> Tensor {
    let (oh, ow) = out_hw(h, w, kh, kw, stride, padding).expect("shape was validated on forward");
    let patch = c * kh * kw;
    let mut dx = vec![0.0; b * c * h * w];
    let dd = dcols.data();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = ((bi * oh + oy) * ow + ox) * patch;
                for ci in 0..c {
                    for ky in 0..kh {
                        let sy = (oy * stride + ky) as isize - padding as isize;
                        if sy < 0 || sy >= h as isize {
                            continue;
                        }
                        for kx in 0..kw {
                            let sx = (ox * stride + kx) as isize - padding as isize;
                            if sx < 0 || sx >= w as isize {
                                continue;
                            }
                            let dst = ((bi * c + ci) * h + sy as usize) * w + sx as usize;
                            dx[dst] += dd[row + (ci * kh + ky) * kw + kx];
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![b, c, h, w], dx)
}

/// Kernel `[OC, C, KH, KW]` viewed as the explicit `[OC, C*KH*KW]` matrix
/// that multiplies each patch row.
pub fn kernel_matrix(kernel: &Tensor) -> Result<Tensor> {
    let [oc, c, kh, kw] = nchw_dims(kernel)?;
    kernel.reshape(vec![oc, c * kh * kw])
}

/// Full convolution forward: returns the `[B, OC, OH, OW]` output and the
/// patch matrix (kept for the backward pass).
pub fn conv2d_forward(
    x: &Tensor,
    kernel: &Tensor,
    bias: &Tensor,
    stride: usize,
    padding: usize,
) -> Result<(Tensor, Tensor)> {
    let [b, c, _, _] = nchw_dims(x)?;
    let [oc, kc, kh, kw] = nchw_dims(kernel)?;
    if kc != c {
        return Err(Error::dimension(
            "conv input channels",
            format!("{kc}"),
            format!("{c}"),
        ));
    }
    if bias.shape() != [oc] {
        return Err(Error::dimension(
            "conv bias",
            format!("[{oc}]"),
            format!("{:?}", bias.shape()),
        ));
    }
    let (cols, oh, ow) = im2col(x, kh, kw, stride, padding)?;
    let kmat = kernel_matrix(kernel)?;
    let flat = matmul(&cols, &kmat.transposed()?)?; // [B*OH*OW, OC]
    let mut out = vec![0.0; b * oc * oh * ow];
    let fd = flat.data();
    let bd = bias.data();
    for bi in 0..b {
        for oy in 0..oh {
            for ox in 0..ow {
                let row = (bi * oh + oy) * ow + ox;
                for co in 0..oc {
                    out[((bi * oc + co) * oh + oy) * ow + ox] = fd[row * oc + co] + bd[co];
                }
            }
        }
    }
    Ok((Tensor::new(vec![b, oc, oh, ow], out), cols))
}

/// Rearranges an `[B, OC, OH, OW]` gradient into patch-major `[B*OH*OW, OC]`.
pub fn nchw_to_flat(t: &Tensor) -> Result<Tensor> {
    let [b, oc, oh, ow] = nchw_dims(t)?;
    let mut flat = vec![0.0; b * oh * ow * oc];
    let td = t.data();
    for bi in 0..b {
        for co in 0..oc {
            for oy in 0..oh {
                for ox in 0..ow {
                    let row = (bi * oh + oy) * ow + ox;
                    flat[row * oc + co] = td[((bi * oc + co) * oh + oy) * ow + ox];
                }
            }
        }
    }
    Ok(Tensor::new(vec![b * oh * ow, oc], flat))
}

pub(crate) fn nchw_dims(t: &Tensor) -> Result<[usize; 4]> {
    match t.shape() {
        [a, b, c, d] => Ok([*a, *b, *c, *d]),
        other => Err(Error::dimension(
            "NCHW tensor",
            "rank-4 tensor",
            format!("{other:?}"),
        )),
    }
}

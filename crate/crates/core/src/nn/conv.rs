//! 2-D cross-correlation with stride and zero padding.

use super::{NnError, Tensor4};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self { stride: 1, padding: 0 }
    }
}

pub fn output_dim(input: usize, kernel: usize, geom: ConvGeometry) -> Option<usize> {
    let padded = input + 2 * geom.padding;
    if geom.stride == 0 || padded < kernel {
        return None;
    }
    Some((padded - kernel) / geom.stride + 1)
}

fn check_shapes(
    input: [usize; 4],
    kernels: [usize; 4],
    bias_len: usize,
    geom: ConvGeometry,
) -> Result<[usize; 4], NnError> {
    let [n, c_in, h, w] = input;
    let [c_out, k_in, kh, kw] = kernels;
    if k_in != c_in {
        return Err(NnError::ShapeMismatch(format!(
            "conv: input has {c_in} channels, kernels expect {k_in}"
        )));
    }
    if bias_len != c_out {
        return Err(NnError::ShapeMismatch(format!(
            "conv: {c_out} kernels but {bias_len} biases"
        )));
    }
    let oh = output_dim(h, kh, geom);
    let ow = output_dim(w, kw, geom);
    match (oh, ow) {
        (Some(oh), Some(ow)) => Ok([n, c_out, oh, ow]),
        _ => Err(NnError::ShapeMismatch(format!(
            "conv: kernel {kh}x{kw} does not fit input {h}x{w} with {geom:?}"
        ))),
    }
}

/// Range of output positions `o` for which `o*stride + k - padding` lands in
/// `[0, len)`.
#[inline]
fn valid_range(out_len: usize, len: usize, k: usize, geom: ConvGeometry) -> (usize, usize) {
    let s = geom.stride;
    let p = geom.padding as isize;
    let k = k as isize;
    // o*s + k - p >= 0  ->  o >= ceil((p - k)/s)
    let lo = if p - k > 0 { ((p - k) as usize).div_ceil(s) } else { 0 };
    // o*s + k - p <= len - 1  ->  o <= floor((len - 1 + p - k)/s)
    let top = len as isize - 1 + p - k;
    let hi = if top < 0 { 0 } else { (top as usize / s + 1).min(out_len) };
    (lo.min(hi), hi)
}

pub fn conv2d_forward(
    input: &Tensor4,
    kernels: &Tensor4,
    bias: &[f64],
    geom: ConvGeometry,
) -> Result<Tensor4, NnError> {
    let out_shape = check_shapes(input.shape(), kernels.shape(), bias.len(), geom)?;
    let [n, c_out, oh, ow] = out_shape;
    let [_, c_in, h, w] = input.shape();
    let [_, _, kh, kw] = kernels.shape();
    let mut out = Tensor4::zeros(out_shape);
    let s = geom.stride;
    let p = geom.padding;
    let x = input.data();
    let wts = kernels.data();
    let out_data = out.data_mut();
    for b in 0..n {
        for oc in 0..c_out {
            let o_base = (b * c_out + oc) * oh * ow;
            out_data[o_base..o_base + oh * ow].fill(bias[oc]);
            for ic in 0..c_in {
                let i_base = (b * c_in + ic) * h * w;
                for ky in 0..kh {
                    let (y0, y1) = valid_range(oh, h, ky, geom);
                    for kx in 0..kw {
                        let wv = wts[((oc * c_in + ic) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (x0, x1) = valid_range(ow, w, kx, geom);
                        for oy in y0..y1 {
                            let iy = oy * s + ky - p;
                            let orow = o_base + oy * ow;
                            let irow = i_base + iy * w;
                            if s == 1 {
                                let off = kx as isize - p as isize;
                                let src = &x[(irow as isize + x0 as isize + off) as usize
                                    ..(irow as isize + x1 as isize + off) as usize];
                                for (o, v) in out_data[orow + x0..orow + x1].iter_mut().zip(src) {
                                    *o += wv * v;
                                }
                            } else {
                                for ox in x0..x1 {
                                    out_data[orow + ox] += wv * x[irow + ox * s + kx - p];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
    out.check_finite("conv2d_forward")?;
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvGrads {
    pub input: Tensor4,
    pub kernels: Tensor4,
    pub bias: Vec<f64>,
}

pub fn conv2d_backward(
    grad_out: &Tensor4,
    input: &Tensor4,
    kernels: &Tensor4,
    geom: ConvGeometry,
) -> Result<ConvGrads, NnError> {
    let [c_out, _, kh, kw] = kernels.shape();
    let expected = check_shapes(input.shape(), kernels.shape(), c_out, geom)?;
    if grad_out.shape() != expected {
        return Err(NnError::ShapeMismatch(format!(
            "conv backward: upstream {:?}, forward output {:?}",
            grad_out.shape(),
            expected
        )));
    }
    let [n, c_in, h, w] = input.shape();
    let [_, _, oh, ow] = expected;
    let s = geom.stride;
    let p = geom.padding;
    let mut g_in = Tensor4::zeros(input.shape());
    let mut g_k = Tensor4::zeros(kernels.shape());
    let mut g_b = vec![0.0; c_out];
    let go = grad_out.data();
    let x = input.data();
    let wts = kernels.data();
    {
        let gi = g_in.data_mut();
        let gk = g_k.data_mut();
        for b in 0..n {
            for oc in 0..c_out {
                let o_base = (b * c_out + oc) * oh * ow;
                g_b[oc] += go[o_base..o_base + oh * ow].iter().sum::<f64>();
                for ic in 0..c_in {
                    let i_base = (b * c_in + ic) * h * w;
                    for ky in 0..kh {
                        let (y0, y1) = valid_range(oh, h, ky, geom);
                        for kx in 0..kw {
                            let widx = ((oc * c_in + ic) * kh + ky) * kw + kx;
                            let wv = wts[widx];
                            let (x0, x1) = valid_range(ow, w, kx, geom);
                            let mut acc = 0.0;
                            for oy in y0..y1 {
                                let iy = oy * s + ky - p;
                                let orow = o_base + oy * ow;
                                let irow = i_base + iy * w;
                                for ox in x0..x1 {
                                    let ii = irow + ox * s + kx - p;
                                    let g = go[orow + ox];
                                    acc += g * x[ii];
                                    gi[ii] += g * wv;
                                }
                            }
                            gk[widx] += acc;
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads { input: g_in, kernels: g_k, bias: g_b })
}

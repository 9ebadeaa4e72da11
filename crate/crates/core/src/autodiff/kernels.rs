//! Forward and backward kernels for the layer types the embedding network uses.
//!
//! Layouts: 1D signals are `[channels, length]`, convolution kernels are
//! `[out_channels, in_channels, width]`, dense weights are `[in, out]`.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Stride and zero padding of a 1D convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

impl Default for ConvGeometry {
    fn default() -> Self {
        Self {
            stride: 1,
            padding: 0,
        }
    }
}

impl ConvGeometry {
    pub fn output_len(&self, len: usize, width: usize) -> Option<usize> {
        let padded = len + 2 * self.padding;
        if self.stride == 0 || width == 0 || padded < width {
            return None;
        }
        Some((padded - width) / self.stride + 1)
    }
}

fn dims2(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    match *t.shape() {
        [a, b] => Ok((a, b)),
        _ => Err(Error::Config(format!(
            "{what} must be rank 2, got shape {:?}",
            t.shape()
        ))),
    }
}

/// Range of output positions `t` for which `t * stride + tap - padding` lands in `[0, len)`.
fn valid_range(geom: ConvGeometry, tap: usize, len: usize, out_len: usize) -> (usize, usize) {
    let s = geom.stride;
    let lo = if tap >= geom.padding {
        0
    } else {
        (geom.padding - tap).div_ceil(s)
    };
    // largest t with t*s + tap - padding <= len - 1
    let hi = if len + geom.padding > tap {
        ((len - 1 + geom.padding - tap) / s + 1).min(out_len)
    } else {
        0
    };
    (lo, hi.max(lo))
}

pub(crate) fn conv1d_shapes(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    geom: ConvGeometry,
) -> Result<(usize, usize, usize, usize, usize)> {
    let (c_in, len) = dims2(input, "conv1d input")?;
    let (c_out, k_in, width) = match *kernels.shape() {
        [a, b, c] => (a, b, c),
        _ => {
            return Err(Error::Config(format!(
                "conv1d kernels must be rank 3, got shape {:?}",
                kernels.shape()
            )))
        }
    };
    if k_in != c_in {
        return Err(Error::Config(format!(
            "conv1d kernels expect {k_in} input channels, input has {c_in}"
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [c_out] {
            return Err(Error::Config(format!(
                "conv1d bias shape {:?} does not match {c_out} output channels",
                b.shape()
            )));
        }
    }
    let out_len = geom.output_len(len, width).ok_or_else(|| {
        Error::Config(format!(
            "conv1d kernel width {width} does not fit input length {len} (padding {}, stride {})",
            geom.padding, geom.stride
        ))
    })?;
    Ok((c_in, len, c_out, width, out_len))
}

/// Cross-correlation of `input` with `kernels` (no kernel flip).
pub fn conv1d_forward(
    input: &Tensor,
    kernels: &Tensor,
    bias: Option<&Tensor>,
    geom: ConvGeometry,
) -> Result<Tensor> {
    let (c_in, len, c_out, width, out_len) = conv1d_shapes(input, kernels, bias, geom)?;
    let x = input.data();
    let w = kernels.data();
    let mut out = vec![0.0; c_out * out_len];
    for co in 0..c_out {
        let row = &mut out[co * out_len..(co + 1) * out_len];
        if let Some(b) = bias {
            row.fill(b.data()[co]);
        }
        for ci in 0..c_in {
            let xs = &x[ci * len..(ci + 1) * len];
            for tap in 0..width {
                let wv = w[(co * c_in + ci) * width + tap];
                let (lo, hi) = valid_range(geom, tap, len, out_len);
                if geom.stride == 1 {
                    let start = lo + tap - geom.padding;
                    for (o, xv) in row[lo..hi].iter_mut().zip(&xs[start..start + (hi - lo)]) {
                        *o += wv * xv;
                    }
                } else {
                    for t in lo..hi {
                        row[t] += wv * xs[t * geom.stride + tap - geom.padding];
                    }
                }
            }
        }
    }
    Tensor::new(vec![c_out, out_len], out)
}

/// Gradients of a convolution with respect to (input, kernels, bias).
pub fn conv1d_backward(
    input: &Tensor,
    kernels: &Tensor,
    geom: ConvGeometry,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let (c_in, len, c_out, width, out_len) = conv1d_shapes(input, kernels, None, geom)?;
    if grad_out.shape() != [c_out, out_len] {
        return Err(Error::Config(format!(
            "conv1d upstream gradient shape {:?}, expected [{c_out}, {out_len}]",
            grad_out.shape()
        )));
    }
    let x = input.data();
    let w = kernels.data();
    let dy = grad_out.data();
    let mut dx = want_input.then(|| vec![0.0; c_in * len]);
    let mut dw = vec![0.0; w.len()];
    let mut db = vec![0.0; c_out];
    for co in 0..c_out {
        let g = &dy[co * out_len..(co + 1) * out_len];
        db[co] = g.iter().sum();
        for ci in 0..c_in {
            let xs = &x[ci * len..(ci + 1) * len];
            for tap in 0..width {
                let widx = (co * c_in + ci) * width + tap;
                let (lo, hi) = valid_range(geom, tap, len, out_len);
                if geom.stride == 1 {
                    let start = lo + tap - geom.padding;
                    let span = hi - lo;
                    dw[widx] += g[lo..hi]
                        .iter()
                        .zip(&xs[start..start + span])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                    if let Some(dx) = dx.as_mut() {
                        let wv = w[widx];
                        let dxs = &mut dx[ci * len + start..ci * len + start + span];
                        for (d, gv) in dxs.iter_mut().zip(&g[lo..hi]) {
                            *d += wv * gv;
                        }
                    }
                } else {
                    for (t, gv) in g.iter().enumerate().take(hi).skip(lo) {
                        let xi = t * geom.stride + tap - geom.padding;
                        dw[widx] += gv * xs[xi];
                        if let Some(dx) = dx.as_mut() {
                            dx[ci * len + xi] += w[widx] * gv;
                        }
                    }
                }
            }
        }
    }
    let dx = dx.map(|d| Tensor::new(vec![c_in, len], d)).transpose()?;
    Ok((
        dx,
        Tensor::new(kernels.shape().to_vec(), dw)?,
        Tensor::vector(db),
    ))
}

/// Non-overlapping max pooling along the length axis.
///
/// Returns the pooled tensor and, for every output element, the flat index of
/// the input element that produced it. Ties go to the lowest index.
pub fn maxpool1d_forward(input: &Tensor, window: usize) -> Result<(Tensor, Vec<usize>)> {
    let (channels, len) = dims2(input, "maxpool input")?;
    if window == 0 {
        return Err(Error::Config("maxpool window must be at least 1".into()));
    }
    if len < window {
        return Err(Error::Config(format!(
            "maxpool window {window} exceeds input length {len}"
        )));
    }
    let out_len = len / window;
    let x = input.data();
    let mut out = Vec::with_capacity(channels * out_len);
    let mut argmax = Vec::with_capacity(channels * out_len);
    for c in 0..channels {
        for t in 0..out_len {
            let start = c * len + t * window;
            let mut best = start;
            for i in start + 1..start + window {
                if x[i] > x[best] {
                    best = i;
                }
            }
            out.push(x[best]);
            argmax.push(best);
        }
    }
    Ok((Tensor::new(vec![channels, out_len], out)?, argmax))
}

/// Routes each pooled gradient back to the recorded argmax position.
pub fn maxpool1d_backward(input_shape: &[usize], argmax: &[usize], grad_out: &Tensor) -> Tensor {
    let mut dx = Tensor::zeros(input_shape);
    let d = dx.data_mut();
    for (&src, g) in argmax.iter().zip(grad_out.data()) {
        d[src] += g;
    }
    dx
}

pub(crate) fn linear_shapes(
    input: &Tensor,
    weights: &Tensor,
    bias: Option<&Tensor>,
) -> Result<(usize, usize)> {
    let (d_in, d_out) = dims2(weights, "linear weights")?;
    if input.len() != d_in {
        return Err(Error::Config(format!(
            "linear layer expects {d_in} inputs, got {}",
            input.len()
        )));
    }
    if let Some(b) = bias {
        if b.shape() != [d_out] {
            return Err(Error::Config(format!(
                "linear bias shape {:?} does not match {d_out} outputs",
                b.shape()
            )));
        }
    }
    Ok((d_in, d_out))
}

/// `weightsᵀ · input (+ bias)` for a flat input of length `D` and weights `[D, E]`.
pub fn linear_forward(input: &Tensor, weights: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (d_in, d_out) = linear_shapes(input, weights, bias)?;
    let w = weights.data();
    let mut out = match bias {
        Some(b) => b.data().to_vec(),
        None => vec![0.0; d_out],
    };
    for (d, xv) in input.data().iter().enumerate().take(d_in) {
        if *xv == 0.0 {
            continue;
        }
        for (o, wv) in out.iter_mut().zip(&w[d * d_out..(d + 1) * d_out]) {
            *o += xv * wv;
        }
    }
    Ok(Tensor::vector(out))
}

/// Gradients of a dense layer with respect to (input, weights, bias).
pub fn linear_backward(
    input: &Tensor,
    weights: &Tensor,
    grad_out: &Tensor,
    want_input: bool,
) -> Result<(Option<Tensor>, Tensor, Tensor)> {
    let (d_in, d_out) = linear_shapes(input, weights, None)?;
    if grad_out.len() != d_out {
        return Err(Error::Config(format!(
            "linear upstream gradient has {} values, expected {d_out}",
            grad_out.len()
        )));
    }
    let w = weights.data();
    let g = grad_out.data();
    let x = input.data();
    let mut dw = vec![0.0; d_in * d_out];
    for d in 0..d_in {
        let xv = x[d];
        for (slot, gv) in dw[d * d_out..(d + 1) * d_out].iter_mut().zip(g) {
            *slot = xv * gv;
        }
    }
    let dx = want_input.then(|| {
        let v = (0..d_in)
            .map(|d| {
                w[d * d_out..(d + 1) * d_out]
                    .iter()
                    .zip(g)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect();
        Tensor::new(input.shape().to_vec(), v).expect("input shape")
    });
    Ok((
        dx,
        Tensor::new(weights.shape().to_vec(), dw)?,
        Tensor::vector(g.to_vec()),
    ))
}

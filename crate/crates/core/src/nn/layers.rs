//! Fixed-architecture layer stacks with hand-written backward passes.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::conv::{conv2d_backward, conv2d_forward, output_dim, ConvGeometry};
use super::{NnError, Tensor4};

/// Serializable description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv { out_channels: usize, kernel: usize, stride: usize, padding: usize },
    Relu,
    /// 2×2 average pooling, stride 2.
    AvgPool2,
    /// 2× nearest-neighbour upsampling.
    Upsample2,
}

impl LayerSpec {
    pub fn conv3x3(out_channels: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel: 3, stride: 1, padding: 1 }
    }

    pub fn conv1x1(out_channels: usize) -> Self {
        LayerSpec::Conv { out_channels, kernel: 1, stride: 1, padding: 0 }
    }

    /// Output `(channels, height, width)` for the given input.
    pub fn output_shape(&self, c: usize, h: usize, w: usize) -> Result<(usize, usize, usize), NnError> {
        match *self {
            LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                let g = ConvGeometry { stride, padding };
                match (output_dim(h, kernel, g), output_dim(w, kernel, g)) {
                    (Some(oh), Some(ow)) => Ok((out_channels, oh, ow)),
                    _ => Err(NnError::ShapeMismatch(format!(
                        "kernel {kernel} does not fit {h}x{w}"
                    ))),
                }
            }
            LayerSpec::Relu => Ok((c, h, w)),
            LayerSpec::AvgPool2 => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(NnError::ShapeMismatch(format!("avg pool needs even dims, got {h}x{w}")));
                }
                Ok((c, h / 2, w / 2))
            }
            LayerSpec::Upsample2 => Ok((c, h * 2, w * 2)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub weight: Tensor4,
    pub bias: Vec<f64>,
    pub geometry: ConvGeometry,
}

impl Conv2d {
    /// Uniform in ±sqrt(6 / (fan_in + fan_out)); zero bias.
    pub fn init(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        geometry: ConvGeometry,
        rng: &mut impl Rng,
    ) -> Self {
        let fan_in = in_channels * kernel * kernel;
        let fan_out = out_channels * kernel * kernel;
        let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
        let n = out_channels * in_channels * kernel * kernel;
        let data = (0..n).map(|_| rng.gen_range(-limit..limit)).collect();
        Self {
            weight: Tensor4::from_vec([out_channels, in_channels, kernel, kernel], data)
                .expect("shape product matches"),
            bias: vec![0.0; out_channels],
            geometry,
        }
    }

    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(Conv2d),
    Relu,
    AvgPool2,
    Upsample2,
}

impl Layer {
    pub fn spec(&self) -> LayerSpec {
        match self {
            Layer::Conv(c) => LayerSpec::Conv {
                out_channels: c.out_channels(),
                kernel: c.weight.shape()[2],
                stride: c.geometry.stride,
                padding: c.geometry.padding,
            },
            Layer::Relu => LayerSpec::Relu,
            Layer::AvgPool2 => LayerSpec::AvgPool2,
            Layer::Upsample2 => LayerSpec::Upsample2,
        }
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        match self {
            Layer::Conv(c) => conv2d_forward(x, &c.weight, &c.bias, c.geometry),
            Layer::Relu => {
                let data = x.data().iter().map(|v| v.max(0.0)).collect();
                Tensor4::from_vec(x.shape(), data)
            }
            Layer::AvgPool2 => avg_pool2(x),
            Layer::Upsample2 => Ok(upsample2(x)),
        }
    }

    /// Returns the input gradient plus parameter gradients (weight, bias) for
    /// convolution layers.
    pub fn backward(
        &self,
        input: &Tensor4,
        grad_out: &Tensor4,
    ) -> Result<(Tensor4, Option<(Tensor4, Vec<f64>)>), NnError> {
        match self {
            Layer::Conv(c) => {
                let g = conv2d_backward(grad_out, input, &c.weight, c.geometry)?;
                Ok((g.input, Some((g.kernels, g.bias))))
            }
            Layer::Relu => {
                let data = input
                    .data()
                    .iter()
                    .zip(grad_out.data())
                    .map(|(x, g)| if *x > 0.0 { *g } else { 0.0 })
                    .collect();
                Ok((Tensor4::from_vec(input.shape(), data)?, None))
            }
            Layer::AvgPool2 => Ok((avg_pool2_backward(input.shape(), grad_out), None)),
            Layer::Upsample2 => Ok((upsample2_backward(input.shape(), grad_out), None)),
        }
    }
}

fn avg_pool2(x: &Tensor4) -> Result<Tensor4, NnError> {
    let [n, c, h, w] = x.shape();
    if h % 2 != 0 || w % 2 != 0 {
        return Err(NnError::ShapeMismatch(format!("avg pool needs even dims, got {h}x{w}")));
    }
    let mut out = Tensor4::zeros([n, c, h / 2, w / 2]);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h / 2 {
                for xx in 0..w / 2 {
                    let s = x.at(b, ch, 2 * y, 2 * xx)
                        + x.at(b, ch, 2 * y, 2 * xx + 1)
                        + x.at(b, ch, 2 * y + 1, 2 * xx)
                        + x.at(b, ch, 2 * y + 1, 2 * xx + 1);
                    let i = out.index(b, ch, y, xx);
                    out.data_mut()[i] = 0.25 * s;
                }
            }
        }
    }
    Ok(out)
}

fn avg_pool2_backward(input_shape: [usize; 4], g: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = input_shape;
    let mut out = Tensor4::zeros(input_shape);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..h {
                for x in 0..w {
                    let i = out.index(b, ch, y, x);
                    out.data_mut()[i] = 0.25 * g.at(b, ch, y / 2, x / 2);
                }
            }
        }
    }
    out
}

fn upsample2(x: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = x.shape();
    let mut out = Tensor4::zeros([n, c, 2 * h, 2 * w]);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..2 * h {
                for xx in 0..2 * w {
                    let i = out.index(b, ch, y, xx);
                    out.data_mut()[i] = x.at(b, ch, y / 2, xx / 2);
                }
            }
        }
    }
    out
}

fn upsample2_backward(input_shape: [usize; 4], g: &Tensor4) -> Tensor4 {
    let [n, c, h, w] = input_shape;
    let mut out = Tensor4::zeros(input_shape);
    for b in 0..n {
        for ch in 0..c {
            for y in 0..2 * h {
                for x in 0..2 * w {
                    let i = out.index(b, ch, y / 2, x / 2);
                    out.data_mut()[i] += g.at(b, ch, y, x);
                }
            }
        }
    }
    out
}

/// A feed-forward stack of layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Sequential {
    pub layers: Vec<Layer>,
}

/// Activations recorded by [`Sequential::forward_cached`]: `activations[i]`
/// is the input to layer `i`, the last entry is the output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    pub activations: Vec<Tensor4>,
}

impl ForwardCache {
    pub fn output(&self) -> &Tensor4 {
        self.activations.last().expect("cache holds at least the input")
    }
}

impl Sequential {
    pub fn build(in_channels: usize, specs: &[LayerSpec], rng: &mut impl Rng) -> Self {
        let mut c = in_channels;
        let mut layers = Vec::with_capacity(specs.len());
        for spec in specs {
            layers.push(match *spec {
                LayerSpec::Conv { out_channels, kernel, stride, padding } => {
                    let conv =
                        Conv2d::init(c, out_channels, kernel, ConvGeometry { stride, padding }, rng);
                    c = out_channels;
                    Layer::Conv(conv)
                }
                LayerSpec::Relu => Layer::Relu,
                LayerSpec::AvgPool2 => Layer::AvgPool2,
                LayerSpec::Upsample2 => Layer::Upsample2,
            });
        }
        Self { layers }
    }

    pub fn specs(&self) -> Vec<LayerSpec> {
        self.layers.iter().map(Layer::spec).collect()
    }

    pub fn forward(&self, x: &Tensor4) -> Result<Tensor4, NnError> {
        let mut cur = x.clone();
        for layer in &self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    pub fn forward_cached(&self, x: &Tensor4) -> Result<ForwardCache, NnError> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(x.clone());
        for layer in &self.layers {
            let next = layer.forward(activations.last().unwrap())?;
            activations.push(next);
        }
        Ok(ForwardCache { activations })
    }

    /// Back-propagates `grad_out` through the stack. Returns the gradient
    /// w.r.t. the input and one gradient per parameter tensor in
    /// [`Sequential::params`] order.
    pub fn backward(
        &self,
        cache: &ForwardCache,
        grad_out: &Tensor4,
    ) -> Result<(Tensor4, Vec<Vec<f64>>), NnError> {
        let mut grads: Vec<Vec<f64>> = Vec::new();
        let mut g = grad_out.clone();
        for (i, layer) in self.layers.iter().enumerate().rev() {
            let (gi, pg) = layer.backward(&cache.activations[i], &g)?;
            if let Some((gw, gb)) = pg {
                grads.push(gb);
                grads.push(gw.into_vec());
            }
            g = gi;
        }
        grads.reverse();
        Ok((g, grads))
    }

    /// Parameter tensors, weight then bias for each convolution.
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for layer in &self.layers {
            if let Layer::Conv(c) = layer {
                out.push(c.weight.data());
                out.push(&c.bias[..]);
            }
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for layer in &mut self.layers {
            if let Layer::Conv(c) = layer {
                out.push(c.weight.data_mut());
                out.push(&mut c.bias[..]);
            }
        }
        out
    }

    pub fn parameter_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn convs(&self) -> impl Iterator<Item = &Conv2d> {
        self.layers.iter().filter_map(|l| match l {
            Layer::Conv(c) => Some(c),
            _ => None,
        })
    }
}

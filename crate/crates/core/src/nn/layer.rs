use serde::{Deserialize, Serialize};

use super::network::ParamGrad;
use super::Tensor;
use crate::{Error, Result};

const K: usize = 3;
const KK: usize = K * K;

/// 3x3 convolution (cross-correlation) with zero padding 1.
///
/// Weights are laid out `[out][in][ky][kx]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub stride: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

/// `y = W x + b` with `W` laid out `[out][in]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Layer {
    Conv2d(Conv2d),
    Dense(Dense),
    Relu,
    Sigmoid,
    Flatten,
    /// Nearest-neighbour 2x upsampling.
    Upsample2x,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LayerKind {
    Conv2d,
    Dense,
    Relu,
    Sigmoid,
    Flatten,
    Upsample2x,
}

fn conv_out(size: usize, stride: usize) -> usize {
    (size - 1) / stride + 1
}

impl Conv2d {
    pub fn zeros(in_channels: usize, out_channels: usize, stride: usize) -> Self {
        Self {
            in_channels,
            out_channels,
            stride,
            weight: vec![0.0; out_channels * in_channels * KK],
            bias: vec![0.0; out_channels],
        }
    }

    fn dims(&self, input: &Tensor) -> Result<(usize, usize, usize, usize)> {
        match *input.shape() {
            [c, h, w] if c == self.in_channels && h > 0 && w > 0 => {
                Ok((h, w, conv_out(h, self.stride), conv_out(w, self.stride)))
            }
            _ => Err(Error::Shape {
                expected: vec![self.in_channels, 0, 0],
                actual: input.shape().to_vec(),
            }),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        let (h, w, oh, ow) = self.dims(input)?;
        let x = input.data();
        let s = self.stride;
        let mut out = vec![0.0; self.out_channels * oh * ow];
        for o in 0..self.out_channels {
            let plane = &mut out[o * oh * ow..(o + 1) * oh * ow];
            plane.fill(self.bias[o]);
            for i in 0..self.in_channels {
                let xin = &x[i * h * w..(i + 1) * h * w];
                let wk = &self.weight[(o * self.in_channels + i) * KK..][..KK];
                for ky in 0..K {
                    for kx in 0..K {
                        let wv = wk[ky * K + kx];
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let row = &xin[iy as usize * w..][..w];
                            let orow = &mut plane[oy * ow..][..ow];
                            for (ox, ov) in orow.iter_mut().enumerate() {
                                let ix = (ox * s + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    *ov += wv * row[ix as usize];
                                }
                            }
                        }
                    }
                }
            }
        }
        Tensor::new(vec![self.out_channels, oh, ow], out)
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, grads: &mut ParamGrad) -> Result<Tensor> {
        let (h, w, oh, ow) = self.dims(input)?;
        if grad_out.shape() != [self.out_channels, oh, ow] {
            return Err(Error::Shape {
                expected: vec![self.out_channels, oh, ow],
                actual: grad_out.shape().to_vec(),
            });
        }
        let x = input.data();
        let g = grad_out.data();
        let s = self.stride;
        let mut gx = vec![0.0; x.len()];
        for o in 0..self.out_channels {
            let gplane = &g[o * oh * ow..(o + 1) * oh * ow];
            grads.bias[o] += gplane.iter().sum::<f64>();
            for i in 0..self.in_channels {
                let base = (o * self.in_channels + i) * KK;
                let xin = &x[i * h * w..(i + 1) * h * w];
                let gxin = &mut gx[i * h * w..(i + 1) * h * w];
                for ky in 0..K {
                    for kx in 0..K {
                        let wv = self.weight[base + ky * K + kx];
                        let mut gw = 0.0;
                        for oy in 0..oh {
                            let iy = (oy * s + ky) as isize - 1;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            let iy = iy as usize;
                            for ox in 0..ow {
                                let ix = (ox * s + kx) as isize - 1;
                                if ix >= 0 && ix < w as isize {
                                    let gv = gplane[oy * ow + ox];
                                    gw += gv * xin[iy * w + ix as usize];
                                    gxin[iy * w + ix as usize] += gv * wv;
                                }
                            }
                        }
                        grads.weight[base + ky * K + kx] += gw;
                    }
                }
            }
        }
        Tensor::new(input.shape().to_vec(), gx)
    }
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
        }
    }

    fn check(&self, input: &Tensor) -> Result<()> {
        if input.shape() != [self.inputs] {
            return Err(Error::Shape {
                expected: vec![self.inputs],
                actual: input.shape().to_vec(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        self.check(input)?;
        let x = input.data();
        let out = self
            .weight
            .chunks_exact(self.inputs)
            .zip(&self.bias)
            .map(|(row, b)| b + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>())
            .collect();
        Ok(Tensor::vector(out))
    }

    pub fn backward(&self, input: &Tensor, grad_out: &Tensor, grads: &mut ParamGrad) -> Result<Tensor> {
        self.check(input)?;
        if grad_out.shape() != [self.outputs] {
            return Err(Error::Shape {
                expected: vec![self.outputs],
                actual: grad_out.shape().to_vec(),
            });
        }
        let x = input.data();
        let mut gx = vec![0.0; self.inputs];
        for (o, &g) in grad_out.data().iter().enumerate() {
            grads.bias[o] += g;
            let row = &self.weight[o * self.inputs..][..self.inputs];
            let grow = &mut grads.weight[o * self.inputs..][..self.inputs];
            for j in 0..self.inputs {
                grow[j] += g * x[j];
                gx[j] += g * row[j];
            }
        }
        Ok(Tensor::vector(gx))
    }
}

impl Layer {
    pub fn kind(&self) -> LayerKind {
        match self {
            Layer::Conv2d(_) => LayerKind::Conv2d,
            Layer::Dense(_) => LayerKind::Dense,
            Layer::Relu => LayerKind::Relu,
            Layer::Sigmoid => LayerKind::Sigmoid,
            Layer::Flatten => LayerKind::Flatten,
            Layer::Upsample2x => LayerKind::Upsample2x,
        }
    }

    /// Weight and bias slices, if the layer has parameters.
    pub fn params(&self) -> Option<(&[f64], &[f64])> {
        match self {
            Layer::Conv2d(c) => Some((&c.weight, &c.bias)),
            Layer::Dense(d) => Some((&d.weight, &d.bias)),
            _ => None,
        }
    }

    pub fn params_mut(&mut self) -> Option<(&mut [f64], &mut [f64])> {
        match self {
            Layer::Conv2d(c) => Some((&mut c.weight, &mut c.bias)),
            Layer::Dense(d) => Some((&mut d.weight, &mut d.bias)),
            _ => None,
        }
    }

    /// Shape produced for a given input shape, or an error if they don't compose.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let mismatch = |expected: Vec<usize>| Error::Shape {
            expected,
            actual: input.to_vec(),
        };
        match (self, input) {
            (Layer::Conv2d(c), &[ch, h, w]) if ch == c.in_channels && h > 0 && w > 0 => {
                Ok(vec![c.out_channels, conv_out(h, c.stride), conv_out(w, c.stride)])
            }
            (Layer::Conv2d(c), _) => Err(mismatch(vec![c.in_channels, 0, 0])),
            (Layer::Dense(d), &[n]) if n == d.inputs => Ok(vec![d.outputs]),
            (Layer::Dense(d), _) => Err(mismatch(vec![d.inputs])),
            (Layer::Relu | Layer::Sigmoid, s) => Ok(s.to_vec()),
            (Layer::Flatten, s) => Ok(vec![s.iter().product()]),
            (Layer::Upsample2x, &[ch, h, w]) => Ok(vec![ch, 2 * h, 2 * w]),
            (Layer::Upsample2x, _) => Err(mismatch(vec![0, 0, 0])),
        }
    }

    pub fn forward(&self, input: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => c.forward(input),
            Layer::Dense(d) => d.forward(input),
            Layer::Relu => map(input, |v| v.max(0.0)),
            Layer::Sigmoid => map(input, |v| 1.0 / (1.0 + (-v).exp())),
            Layer::Flatten => input.clone().reshaped(vec![input.len()]),
            Layer::Upsample2x => upsample(input),
        }
    }

    /// Propagates `grad_out` back through the layer, adding parameter
    /// gradients into `grads`. `output` is this layer's forward result.
    pub fn backward(
        &self,
        input: &Tensor,
        output: &Tensor,
        grad_out: &Tensor,
        grads: &mut ParamGrad,
    ) -> Result<Tensor> {
        if !matches!(self, Layer::Conv2d(_) | Layer::Dense(_)) && grad_out.shape() != output.shape() {
            return Err(Error::Shape {
                expected: output.shape().to_vec(),
                actual: grad_out.shape().to_vec(),
            });
        }
        match self {
            Layer::Conv2d(c) => c.backward(input, grad_out, grads),
            Layer::Dense(d) => d.backward(input, grad_out, grads),
            Layer::Relu => zip(input, grad_out, |x, g| if x > 0.0 { g } else { 0.0 }),
            Layer::Sigmoid => zip(output, grad_out, |y, g| g * y * (1.0 - y)),
            Layer::Flatten => grad_out.clone().reshaped(input.shape().to_vec()),
            Layer::Upsample2x => upsample_backward(input.shape(), grad_out),
        }
    }
}

fn map(t: &Tensor, f: impl Fn(f64) -> f64) -> Result<Tensor> {
    Tensor::new(t.shape().to_vec(), t.data().iter().map(|&v| f(v)).collect())
}

fn zip(a: &Tensor, g: &Tensor, f: impl Fn(f64, f64) -> f64) -> Result<Tensor> {
    Tensor::new(
        a.shape().to_vec(),
        a.data().iter().zip(g.data()).map(|(&x, &gv)| f(x, gv)).collect(),
    )
}

fn upsample(input: &Tensor) -> Result<Tensor> {
    let &[c, h, w] = input.shape() else {
        return Err(Error::Shape {
            expected: vec![0, 0, 0],
            actual: input.shape().to_vec(),
        });
    };
    let x = input.data();
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0.0; c * oh * ow];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                out[(ch * oh + y) * ow + xx] = x[(ch * h + y / 2) * w + xx / 2];
            }
        }
    }
    Tensor::new(vec![c, oh, ow], out)
}

fn upsample_backward(input_shape: &[usize], grad_out: &Tensor) -> Result<Tensor> {
    let &[c, h, w] = input_shape else {
        return Err(Error::Shape {
            expected: vec![0, 0, 0],
            actual: input_shape.to_vec(),
        });
    };
    let (oh, ow) = (2 * h, 2 * w);
    let g = grad_out.data();
    let mut gx = vec![0.0; c * h * w];
    for ch in 0..c {
        for y in 0..oh {
            for xx in 0..ow {
                gx[(ch * h + y / 2) * w + xx / 2] += g[(ch * oh + y) * ow + xx];
            }
        }
    }
    Tensor::new(input_shape.to_vec(), gx)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_input_yields_bias() {
        let mut c = Conv2d::zeros(1, 2, 1);
        c.weight.iter_mut().enumerate().for_each(|(i, w)| *w = i as f64 * 0.3 - 1.0);
        c.bias = vec![0.25, -0.5];
        let out = c.forward(&Tensor::zeros(vec![1, 3, 3])).unwrap();
        assert_eq!(out.shape(), [2, 3, 3]);
        assert!(out.data()[..9].iter().all(|&v| v == 0.25));
        assert!(out.data()[9..].iter().all(|&v| v == -0.5));
    }

    #[test]
    fn impulse_response_matches_direct_correlation() {
        // Delta at the centre of a 3x3 input: output(oy, ox) picks the kernel
        // tap that lands on (1, 1), i.e. K[2 - oy][2 - ox]; the centre output
        // is K[1][1] and each corner sees the opposite corner of the kernel.
        let mut c = Conv2d::zeros(1, 1, 1);
        c.weight = (1..=9).map(f64::from).collect();
        let mut x = Tensor::zeros(vec![1, 3, 3]);
        x.data_mut()[4] = 1.0;
        let out = c.forward(&x).unwrap();
        let expected: Vec<f64> = (0..9).map(|p| c.weight[8 - p]).collect();
        assert_eq!(out.data(), &expected[..]);
        assert_eq!(out.data()[4], 5.0);
    }

    #[test]
    fn stride_two_halves_spatial_dims() {
        let c = Conv2d::zeros(1, 3, 2);
        let out = c.forward(&Tensor::zeros(vec![1, 4, 4])).unwrap();
        assert_eq!(out.shape(), [3, 2, 2]);
        let c = Conv2d::zeros(1, 1, 1);
        assert_eq!(c.forward(&Tensor::zeros(vec![1, 5, 7])).unwrap().shape(), [1, 5, 7]);
    }

    #[test]
    fn dense_weight_gradient_is_outer_product() {
        let d = Dense {
            inputs: 3,
            outputs: 2,
            weight: vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6],
            bias: vec![0.0, 0.0],
        };
        let x = Tensor::vector(vec![1.0, -2.0, 3.0]);
        let g = Tensor::vector(vec![0.5, -1.0]);
        let mut grads = ParamGrad::zeros(6, 2);
        d.backward(&x, &g, &mut grads).unwrap();
        assert_eq!(grads.weight, vec![0.5, -1.0, 1.5, -1.0, 2.0, -3.0]);
        assert_eq!(grads.bias, vec![0.5, -1.0]);
    }

    #[test]
    fn relu_blocks_gradient_below_zero() {
        let x = Tensor::vector(vec![-1.0, 2.0]);
        let y = Layer::Relu.forward(&x).unwrap();
        let g = Layer::Relu
            .backward(&x, &y, &Tensor::vector(vec![3.0, 3.0]), &mut ParamGrad::default())
            .unwrap();
        assert_eq!(g.data(), [0.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let c = Conv2d::zeros(2, 1, 1);
        assert!(c.forward(&Tensor::zeros(vec![1, 3, 3])).is_err());
        let d = Dense::zeros(4, 2);
        assert!(d.forward(&Tensor::vector(vec![0.0; 3])).is_err());
    }
}

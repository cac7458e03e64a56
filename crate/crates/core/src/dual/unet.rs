//! Plain convolutional U-Net shared by the sinogram and fusion branches.

use ivct_tensor::{Float, PadMode, Tensor};

use crate::error::{Error, Result};
use crate::model::nn::{Conv, ConvUp, Init, ParamBuilder};

/// `k x k` conv with He-scaled weights.
fn he_conv<F: Float>(b: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize, k: usize, stride: usize) -> Conv {
    let std = (2.0 / (cin * k * k) as f64).sqrt();
    b.scoped(name, |b| Conv {
        weight: b.add("weight", &[cout, cin, k, k], Init::Std(std)),
        bias: Some(b.add("bias", &[cout], Init::Zeros)),
        stride,
        pad: if stride == 1 { (k - 1) / 2 } else { 0 },
        pad_mode: PadMode::Reflect,
        groups: 1,
    })
}

/// Residual pair of 3x3 convs: `x + c2(relu(c1(x)))`.
#[derive(Debug, Clone)]
struct ResBlock {
    c1: Conv,
    c2: Conv,
}

impl ResBlock {
    fn build<F: Float>(b: &mut ParamBuilder<F>, name: &str, dim: usize) -> Self {
        b.scoped(name, |b| ResBlock {
            c1: he_conv(b, "conv1", dim, dim, 3, 1),
            c2: he_conv(b, "conv2", dim, dim, 3, 1),
        })
    }

    fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<Tensor<F>> {
        let h = self.c1.forward(p, x)?.relu()?;
        Ok(x.add(&self.c2.forward(p, &h)?)?)
    }
}

#[derive(Debug, Clone)]
pub struct UNet {
    dims: Vec<usize>,
    input: Conv,
    enc: Vec<ResBlock>,
    down: Vec<Conv>,
    up: Vec<ConvUp>,
    merge: Vec<Conv>,
    dec: Vec<ResBlock>,
    output: Conv,
}

impl UNet {
    /// With `zero_output` the final conv starts at zero, so the network
    /// initially returns exactly zero.
    pub fn build<F: Float>(b: &mut ParamBuilder<F>, cin: usize, cout: usize, dims: &[usize], zero_output: bool) -> Self {
        let levels = dims.len();
        let input = he_conv(b, "input", cin, dims[0], 3, 1);
        let enc = (0..levels).map(|i| ResBlock::build(b, &format!("enc{i}"), dims[i])).collect();
        let down = (0..levels - 1).map(|i| he_conv(b, &format!("down{i}"), dims[i], dims[i + 1], 2, 2)).collect();
        let up = (0..levels - 1)
            .map(|i| {
                let std = (2.0 / dims[i + 1] as f64).sqrt();
                b.scoped(format!("up{i}"), |b| ConvUp {
                    weight: b.add("weight", &[dims[i + 1], dims[i], 2, 2], Init::Std(std)),
                    bias: b.add("bias", &[dims[i]], Init::Zeros),
                    factor: 2,
                })
            })
            .collect();
        let merge = (0..levels - 1).map(|i| he_conv(b, &format!("merge{i}"), 2 * dims[i], dims[i], 1, 1)).collect();
        let dec = (0..levels - 1).map(|i| ResBlock::build(b, &format!("dec{i}"), dims[i])).collect();
        let output = if zero_output {
            b.scoped("output", |b| Conv {
                weight: b.add("weight", &[cout, dims[0], 3, 3], Init::Zeros),
                bias: Some(b.add("bias", &[cout], Init::Zeros)),
                stride: 1,
                pad: 1,
                pad_mode: PadMode::Reflect,
                groups: 1,
            })
        } else {
            he_conv(b, "output", dims[0], cout, 3, 1)
        };
        UNet {
            dims: dims.to_vec(),
            input,
            enc,
            down,
            up,
            merge,
            dec,
            output,
        }
    }

    /// Spatial sizes must be divisible by this.
    pub fn divisor(&self) -> usize {
        1 << (self.dims.len() - 1)
    }

    pub fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<Tensor<F>> {
        let s = x.shape();
        let d = self.divisor();
        if s.len() != 4 || s[2] % d != 0 || s[3] % d != 0 {
            return Err(Error::Shape(format!("U-Net input {s:?} needs [N, C, H, W] with H, W divisible by {d}")));
        }
        let mut h = self.input.forward(p, x)?.relu()?;
        let mut skips = Vec::new();
        for (block, down) in self.enc.iter().zip(&self.down) {
            h = block.forward(p, &h)?;
            skips.push(h.clone());
            h = down.forward(p, &h)?.relu()?;
        }
        h = self.enc[self.dims.len() - 1].forward(p, &h)?;
        for i in (0..self.dims.len() - 1).rev() {
            h = self.up[i].forward(p, &h)?.relu()?;
            h = Tensor::concat(&[h, skips[i].clone()], 1)?;
            h = self.merge[i].forward(p, &h)?.relu()?;
            h = self.dec[i].forward(p, &h)?;
        }
        self.output.forward(p, &h)
    }
}

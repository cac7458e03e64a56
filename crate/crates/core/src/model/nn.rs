//! Parameter storage and the few layer types the networks are built from.
//!
//! Layers hold indices into a flat, named parameter list. Forward passes take
//! the parameter values as a slice, so the same architecture can run on
//! trainable leaves, detached copies, or perturbed values for gradient checks.

use ivct_tensor::{Conv2dOptions, Float, PadMode, Rng, Tensor};

use crate::error::{Error, Result};

pub const INIT_STD: f64 = 0.02;

pub type ParamId = usize;

#[derive(Debug, Clone)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
}

/// Collects parameter declarations and their initial values.
pub struct ParamBuilder<'r, F: Float> {
    prefix: Vec<String>,
    specs: Vec<ParamSpec>,
    values: Vec<Tensor<F>>,
    rng: &'r mut Rng,
}

#[derive(Debug, Clone, Copy)]
pub enum Init {
    TruncNormal,
    /// Truncated normal with the given std.
    Std(f64),
    Zeros,
    Const(f64),
}

impl<'r, F: Float> ParamBuilder<'r, F> {
    pub fn new(rng: &'r mut Rng) -> Self {
        ParamBuilder {
            prefix: Vec::new(),
            specs: Vec::new(),
            values: Vec::new(),
            rng,
        }
    }

    pub fn push_scope(&mut self, name: impl Into<String>) {
        self.prefix.push(name.into());
    }

    pub fn pop_scope(&mut self) {
        self.prefix.pop();
    }

    pub fn scoped<T>(&mut self, name: impl Into<String>, f: impl FnOnce(&mut Self) -> T) -> T {
        self.push_scope(name);
        let out = f(self);
        self.pop_scope();
        out
    }

    pub fn add(&mut self, name: &str, shape: &[usize], init: Init) -> ParamId {
        let mut full = self.prefix.join(".");
        if !full.is_empty() {
            full.push('.');
        }
        full.push_str(name);
        let value = match init {
            Init::TruncNormal => self.rng.trunc_normal_tensor(shape, INIT_STD),
            Init::Std(std) => self.rng.trunc_normal_tensor(shape, std),
            Init::Zeros => Tensor::zeros(shape),
            Init::Const(c) => Tensor::full(shape, F::of(c)),
        };
        self.specs.push(ParamSpec {
            name: full,
            shape: shape.to_vec(),
        });
        self.values.push(value);
        self.values.len() - 1
    }

    pub fn finish(self) -> (Vec<ParamSpec>, Vec<Tensor<F>>) {
        (self.specs, self.values)
    }
}

/// 2-D convolution layer with optional bias and border mode.
#[derive(Debug, Clone)]
pub struct Conv {
    pub weight: ParamId,
    pub bias: Option<ParamId>,
    pub stride: usize,
    pub pad: usize,
    pub pad_mode: PadMode,
    pub groups: usize,
}

impl Conv {
    /// `k x k` conv with "same" reflect padding for odd `k`.
    pub fn new<F: Float>(b: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize, k: usize) -> Conv {
        Conv::build(b, name, cin, cout, k, 1, PadMode::Reflect, 1, Init::Zeros)
    }

    pub fn depthwise<F: Float>(b: &mut ParamBuilder<F>, name: &str, channels: usize, k: usize) -> Conv {
        Conv::build(b, name, channels, channels, k, 1, PadMode::Reflect, channels, Init::Zeros)
    }

    /// Non-overlapping `factor x factor` patch merge.
    pub fn down<F: Float>(b: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize, factor: usize) -> Conv {
        let mut c = Conv::build(b, name, cin, cout, factor, factor, PadMode::Zero, 1, Init::Zeros);
        c.pad = 0;
        c
    }

    #[allow(clippy::too_many_arguments)]
    pub fn build<F: Float>(
        b: &mut ParamBuilder<F>,
        name: &str,
        cin: usize,
        cout: usize,
        k: usize,
        stride: usize,
        pad_mode: PadMode,
        groups: usize,
        bias_init: Init,
    ) -> Conv {
        b.scoped(name, |b| Conv {
            weight: b.add("weight", &[cout, cin / groups, k, k], Init::TruncNormal),
            bias: Some(b.add("bias", &[cout], bias_init)),
            stride,
            pad: (k - 1) / 2,
            pad_mode,
            groups,
        })
    }

    pub fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<Tensor<F>> {
        let mut opts = Conv2dOptions {
            stride: self.stride,
            padding: 0,
            groups: self.groups,
        };
        let input = match (self.pad, self.pad_mode) {
            (0, _) => x.clone(),
            (pad, PadMode::Zero) => {
                opts.padding = pad;
                x.clone()
            }
            (pad, PadMode::Reflect) => x.pad2d([pad; 4], PadMode::Reflect)?,
        };
        Ok(input.conv2d(&p[self.weight], self.bias.map(|b| &p[b]), opts)?)
    }
}

/// Stride-`factor` transposed convolution that undoes [`Conv::down`].
#[derive(Debug, Clone)]
pub struct ConvUp {
    pub weight: ParamId,
    pub bias: ParamId,
    pub factor: usize,
}

impl ConvUp {
    pub fn new<F: Float>(b: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize, factor: usize) -> ConvUp {
        b.scoped(name, |b| ConvUp {
            weight: b.add("weight", &[cin, cout, factor, factor], Init::TruncNormal),
            bias: b.add("bias", &[cout], Init::Zeros),
            factor,
        })
    }

    pub fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x.conv_transpose2d(&p[self.weight], Some(&p[self.bias]), self.factor)?)
    }
}

/// Dense layer over the last axis.
#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Linear {
    pub fn new<F: Float>(b: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize) -> Linear {
        Linear::with_bias(b, name, cin, cout, Init::Zeros)
    }

    pub fn with_bias<F: Float>(b: &mut ParamBuilder<F>, name: &str, cin: usize, cout: usize, bias: Init) -> Linear {
        b.scoped(name, |b| Linear {
            weight: b.add("weight", &[cout, cin], Init::TruncNormal),
            bias: b.add("bias", &[cout], bias),
        })
    }

    pub fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x.linear(&p[self.weight], Some(&p[self.bias]))?)
    }
}

/// Fresh trainable leaves sharing the values of `params`.
pub fn trainable<F: Float>(params: &[Tensor<F>]) -> Vec<Tensor<F>> {
    params.iter().map(|t| t.requires_grad(true)).collect()
}

/// Detached copies, safe to use without recording a graph.
pub fn frozen<F: Float>(params: &[Tensor<F>]) -> Vec<Tensor<F>> {
    params.iter().map(|t| t.detach()).collect()
}

pub fn count_scalars(specs: &[ParamSpec]) -> usize {
    specs.iter().map(|s| s.shape.iter().product::<usize>()).sum()
}

/// Converts parameter values to another precision.
pub fn cast_params<F: Float, G: Float>(params: &[Tensor<F>]) -> Vec<Tensor<G>> {
    params
        .iter()
        .map(|t| {
            let data = t.data().iter().map(|v| G::of(v.as_f64())).collect();
            Tensor::from_vec(t.shape(), data).expect("same shape")
        })
        .collect()
}

pub fn check_values<F: Float>(specs: &[ParamSpec], values: &[Tensor<F>]) -> Result<()> {
    if specs.len() != values.len() {
        return Err(Error::Shape(format!("{} parameter values for {} parameters", values.len(), specs.len())));
    }
    for (s, v) in specs.iter().zip(values) {
        if s.shape != v.shape() {
            return Err(Error::Shape(format!("{}: expected {:?}, got {:?}", s.name, s.shape, v.shape())));
        }
    }
    Ok(())
}

/// Mean absolute error.
pub fn l1<F: Float>(a: &Tensor<F>, b: &Tensor<F>) -> Result<Tensor<F>> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!("l1 between {:?} and {:?}", a.shape(), b.shape())));
    }
    Ok(a.sub(b)?.abs()?.mean()?)
}

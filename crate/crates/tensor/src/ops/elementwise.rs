//! Element-wise arithmetic with broadcasting, and pointwise nonlinearities.

use crate::broadcast::{broadcast_shape, broadcast_strides, zip2};
use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    #[inline(always)]
    fn apply<F: Float>(self, a: F, b: F) -> F {
        match self {
            BinOp::Add => a + b,
            BinOp::Sub => a - b,
            BinOp::Mul => a * b,
            BinOp::Div => a / b,
        }
    }
}

fn binary<F: Float>(lhs: &Tensor<F>, rhs: &Tensor<F>, op: BinOp) -> Result<Tensor<F>> {
    let name = op.name();
    let a_shape = lhs.shape().to_vec();
    let b_shape = rhs.shape().to_vec();
    let same = a_shape == b_shape;
    let out_shape = if same {
        a_shape.clone()
    } else {
        broadcast_shape(name, &a_shape, &b_shape)?
    };
    let (a, b) = (lhs.data(), rhs.data());
    let out: Vec<F> = if same {
        a.iter().zip(b).map(|(&x, &y)| op.apply(x, y)).collect()
    } else {
        let sa = broadcast_strides(&a_shape, &out_shape);
        let sb = broadcast_strides(&b_shape, &out_shape);
        let mut out = vec![F::zero(); out_shape.iter().product()];
        zip2(&out_shape, &sa, &sb, |o, i, j| out[o] = op.apply(a[i], b[j]));
        out
    };
    let (l, r) = (lhs.clone(), rhs.clone());
    let shape_for_bwd = out_shape.clone();
    Tensor::from_op(name, out_shape, out, vec![lhs.clone(), rhs.clone()], move |ctx| {
        let g = ctx.grad;
        let (a, b) = (l.data(), r.data());
        let mut ga = ctx.needs[0].then(|| vec![F::zero(); a.len()]);
        let mut gb = ctx.needs[1].then(|| vec![F::zero(); b.len()]);
        let sa = broadcast_strides(l.shape(), &shape_for_bwd);
        let sb = broadcast_strides(r.shape(), &shape_for_bwd);
        zip2(&shape_for_bwd, &sa, &sb, |o, i, j| {
            let go = g[o];
            match op {
                BinOp::Add => {
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += go;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] += go;
                    }
                }
                BinOp::Sub => {
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += go;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] -= go;
                    }
                }
                BinOp::Mul => {
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += go * b[j];
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] += go * a[i];
                    }
                }
                BinOp::Div => {
                    let inv = F::one() / b[j];
                    if let Some(ga) = ga.as_mut() {
                        ga[i] += go * inv;
                    }
                    if let Some(gb) = gb.as_mut() {
                        gb[j] -= go * a[i] * inv * inv;
                    }
                }
            }
        });
        vec![ga, gb]
    })
}

fn unary<F: Float>(
    name: &'static str,
    x: &Tensor<F>,
    forward: impl Fn(F) -> F,
    derivative: impl Fn(F, F) -> F + Send + Sync + 'static,
) -> Result<Tensor<F>> {
    let out: Vec<F> = x.data().iter().map(|&v| forward(v)).collect();
    let input = x.clone();
    Tensor::from_op(name, x.shape().to_vec(), out, vec![x.clone()], move |ctx| {
        let gx = input
            .data()
            .iter()
            .zip(ctx.output)
            .zip(ctx.grad)
            .map(|((&xv, &yv), &g)| g * derivative(xv, yv))
            .collect();
        vec![Some(gx)]
    })
}

impl<F: Float> Tensor<F> {
    pub fn add(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        binary(self, rhs, BinOp::Add)
    }

    pub fn sub(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        binary(self, rhs, BinOp::Sub)
    }

    pub fn mul(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        binary(self, rhs, BinOp::Mul)
    }

    pub fn div(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        if rhs.data().iter().any(|v| *v == F::zero()) {
            return Err(TensorError::invalid("div", "division by zero"));
        }
        binary(self, rhs, BinOp::Div)
    }

    pub fn add_scalar(&self, s: F) -> Result<Tensor<F>> {
        unary("add_scalar", self, move |v| v + s, |_, _| F::one())
    }

    pub fn mul_scalar(&self, s: F) -> Result<Tensor<F>> {
        unary("mul_scalar", self, move |v| v * s, move |_, _| s)
    }

    pub fn neg(&self) -> Result<Tensor<F>> {
        self.mul_scalar(-F::one())
    }

    pub fn square(&self) -> Result<Tensor<F>> {
        unary("square", self, |v| v * v, |x, _| x + x)
    }

    pub fn relu(&self) -> Result<Tensor<F>> {
        unary(
            "relu",
            self,
            |v| if v > F::zero() { v } else { F::zero() },
            |x, _| if x > F::zero() { F::one() } else { F::zero() },
        )
    }

    pub fn abs(&self) -> Result<Tensor<F>> {
        unary("abs", self, |v| v.abs(), |x, _| {
            if x > F::zero() {
                F::one()
            } else if x < F::zero() {
                -F::one()
            } else {
                F::zero()
            }
        })
    }

    pub fn sqrt(&self) -> Result<Tensor<F>> {
        if self.data().iter().any(|v| *v < F::zero()) {
            return Err(TensorError::invalid("sqrt", "negative input"));
        }
        unary("sqrt", self, |v| v.sqrt(), |_, y| F::of(0.5) / y)
    }

    pub fn exp(&self) -> Result<Tensor<F>> {
        unary("exp", self, |v| v.exp(), |_, y| y)
    }

    pub fn ln(&self) -> Result<Tensor<F>> {
        unary("ln", self, |v| v.ln(), |x, _| F::one() / x)
    }

    /// `x^p` for a constant exponent. Inputs must be positive unless `p` is a
    /// positive integer.
    pub fn powf(&self, p: F) -> Result<Tensor<F>> {
        unary("powf", self, move |v| v.powf(p), move |x, _| p * x.powf(p - F::one()))
    }

    /// `max(x, floor)`; the gradient is zero where the floor is active.
    pub fn clamp_min(&self, floor: F) -> Result<Tensor<F>> {
        unary(
            "clamp_min",
            self,
            move |v| if v > floor { v } else { floor },
            move |x, _| if x > floor { F::one() } else { F::zero() },
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor<f64> {
        Tensor::from_f64(shape, v).unwrap()
    }

    #[test]
    fn channel_broadcast_and_grad() {
        let x = t(&[1, 2, 2, 1], &[1.0, 2.0, 3.0, 4.0]).requires_grad(true);
        let p = t(&[2, 1, 1], &[10.0, -1.0]).requires_grad(true);
        let y = x.mul(&p).unwrap();
        assert_eq!(y.data(), &[10.0, 20.0, -3.0, -4.0]);
        y.sum().unwrap().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![10.0, 10.0, -1.0, -1.0]);
        assert_eq!(p.grad().unwrap(), vec![3.0, 7.0]);
    }

    #[test]
    fn div_gradients() {
        let a = t(&[2], &[1.0, 4.0]).requires_grad(true);
        let b = t(&[1], &[2.0]).requires_grad(true);
        a.div(&b).unwrap().sum().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![0.5, 0.5]);
        assert_eq!(b.grad().unwrap(), vec![-(1.0 + 4.0) / 4.0]);
    }

    #[test]
    fn div_by_zero_is_an_error() {
        assert!(t(&[1], &[1.0]).div(&t(&[1], &[0.0])).is_err());
    }

    #[test]
    fn relu_and_abs() {
        let x = t(&[3], &[-1.0, 0.0, 2.0]);
        assert_eq!(x.relu().unwrap().data(), &[0.0, 0.0, 2.0]);
        assert_eq!(x.abs().unwrap().data(), &[1.0, 0.0, 2.0]);
    }

    #[test]
    fn overflow_is_reported() {
        let x = t(&[1], &[1000.0]);
        assert!(matches!(x.exp(), Err(TensorError::NonFinite { op: "exp" })));
    }
}

use crate::element::Float;
use crate::error::{Result, TensorError};
use crate::tensor::Tensor;

struct Dims {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    shared_rhs: bool,
}

fn dims(lhs: &[usize], rhs: &[usize], trans_rhs: bool, op: &'static str) -> Result<(Dims, Vec<usize>)> {
    if lhs.len() < 2 || rhs.len() < 2 {
        return Err(TensorError::shape(op, lhs, rhs));
    }
    let (m, k) = (lhs[lhs.len() - 2], lhs[lhs.len() - 1]);
    let (rk, n) = if trans_rhs {
        (rhs[rhs.len() - 1], rhs[rhs.len() - 2])
    } else {
        (rhs[rhs.len() - 2], rhs[rhs.len() - 1])
    };
    if rk != k {
        return Err(TensorError::shape(op, lhs, rhs));
    }
    let lb = &lhs[..lhs.len() - 2];
    let rb = &rhs[..rhs.len() - 2];
    let shared_rhs = rb.is_empty();
    if !shared_rhs && lb != rb {
        return Err(TensorError::shape(op, lhs, rhs));
    }
    let batch = lb.iter().product();
    let mut out = lb.to_vec();
    out.extend([m, n]);
    Ok((Dims { batch, m, k, n, shared_rhs }, out))
}

fn batched<F: Float>(lhs: &Tensor<F>, rhs: &Tensor<F>, trans_rhs: bool) -> Result<Tensor<F>> {
    let name = if trans_rhs { "matmul_t" } else { "matmul" };
    let (d, out_shape) = dims(lhs.shape(), rhs.shape(), trans_rhs, name)?;
    let (a, b) = (lhs.data(), rhs.data());
    let (sa, sb, sc) = (d.m * d.k, if d.shared_rhs { 0 } else { d.k * d.n }, d.m * d.n);
    let mut out = vec![F::zero(); d.batch * sc];
    for i in 0..d.batch {
        F::gemm(
            d.m,
            d.k,
            d.n,
            &a[i * sa..],
            false,
            &b[i * sb..],
            trans_rhs,
            &mut out[i * sc..(i + 1) * sc],
            false,
        );
    }
    let (l, r) = (lhs.clone(), rhs.clone());
    Tensor::from_op(name, out_shape, out, vec![lhs.clone(), rhs.clone()], move |ctx| {
        let g = ctx.grad;
        let (a, b) = (l.data(), r.data());
        let ga = ctx.needs[0].then(|| {
            let mut ga = vec![F::zero(); a.len()];
            for i in 0..d.batch {
                // dA = dC * op(B)^T
                F::gemm(d.m, d.n, d.k, &g[i * sc..], false, &b[i * sb..], !trans_rhs, &mut ga[i * sa..(i + 1) * sa], false);
            }
            ga
        });
        let gb = ctx.needs[1].then(|| {
            let mut gb = vec![F::zero(); b.len()];
            let nb = d.k * d.n;
            for i in 0..d.batch {
                let dst = if d.shared_rhs { &mut gb[..] } else { &mut gb[i * nb..(i + 1) * nb] };
                let acc = d.shared_rhs && i > 0;
                if trans_rhs {
                    // B is [n, k]: dB = dC^T * A
                    F::gemm(d.n, d.m, d.k, &g[i * sc..], true, &a[i * sa..], false, dst, acc);
                } else {
                    F::gemm(d.k, d.m, d.n, &a[i * sa..], true, &g[i * sc..], false, dst, acc);
                }
            }
            gb
        });
        vec![ga, gb]
    })
}

impl<F: Float> Tensor<F> {
    /// `[.., m, k] x [.., k, n]`. A rank-2 right operand is shared across the
    /// batch.
    pub fn matmul(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        batched(self, rhs, false)
    }

    /// `[.., m, k] x [.., n, k]^T`.
    pub fn matmul_t(&self, rhs: &Tensor<F>) -> Result<Tensor<F>> {
        batched(self, rhs, true)
    }

    /// `x W^T + b` over the last axis, with `W` of shape `[out, in]`.
    pub fn linear(&self, weight: &Tensor<F>, bias: Option<&Tensor<F>>) -> Result<Tensor<F>> {
        let y = self.matmul_t(weight)?;
        match bias {
            Some(b) => y.add(b),
            None => Ok(y),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn matmul_values_and_shared_rhs_grad() {
        let a = Tensor::<f64>::from_f64(&[2, 1, 2], &[1.0, 2.0, 3.0, 4.0]).unwrap().requires_grad(true);
        let b = Tensor::<f64>::from_f64(&[2, 2], &[1.0, 0.0, 0.0, 2.0]).unwrap().requires_grad(true);
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[1.0, 4.0, 3.0, 8.0]);
        c.sum().unwrap().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![1.0, 2.0, 1.0, 2.0]);
        assert_eq!(b.grad().unwrap(), vec![4.0, 4.0, 6.0, 6.0]);
    }

    #[test]
    fn matmul_t_matches_explicit_transpose() {
        let a = Tensor::<f64>::from_f64(&[2, 3], &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let b = Tensor::<f64>::from_f64(&[2, 3], &[0.5, -1.0, 2.0, 1.0, 1.0, 1.0]).unwrap();
        let x = a.matmul_t(&b).unwrap();
        let y = a.matmul(&b.permute(&[1, 0]).unwrap()).unwrap();
        assert_eq!(x.data(), y.data());
    }

    #[test]
    fn inner_dimension_mismatch() {
        let a = Tensor::<f64>::zeros(&[2, 3]);
        let b = Tensor::<f64>::zeros(&[2, 3]);
        assert!(a.matmul(&b).is_err());
    }
}

//! View-aware prompters: a small MLP that maps the sampling vector to one
//! channel vector per stage, applied as `H + p * f(H)`.

use ivct_tensor::{Float, Tensor};

use crate::error::{Error, Result};
use crate::model::nn::{Init, Linear, ParamBuilder};

/// Initial bias of the prompt heads, so fresh prompts sit near one.
pub const PROMPT_BIAS_INIT: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct ViewPrompter {
    pub n_full: usize,
    pub trunk: Vec<Linear>,
    pub heads: Vec<Linear>,
    /// Scalar head gating the global residual (source pathway only).
    pub gate: Option<Linear>,
}

/// Prompt vectors for one pathway, each shaped `[1, C, 1, 1]`.
#[derive(Debug, Clone)]
pub struct StagePrompts<F: Float> {
    pub stages: Vec<Tensor<F>>,
    /// `[1, 1, 1, 1]` when the prompter has a gate head.
    pub gate: Option<Tensor<F>>,
}

impl<F: Float> StagePrompts<F> {
    pub fn zeros(dims: &[usize], gate: bool) -> Self {
        StagePrompts {
            stages: dims.iter().map(|&c| Tensor::zeros(&[1, c, 1, 1])).collect(),
            gate: gate.then(|| Tensor::zeros(&[1, 1, 1, 1])),
        }
    }

    pub fn dims(&self) -> Vec<usize> {
        self.stages.iter().map(|t| t.numel()).collect()
    }
}

impl ViewPrompter {
    pub fn new<F: Float>(b: &mut ParamBuilder<F>, n_full: usize, hidden: &[usize], dims: &[usize], gate: bool) -> Self {
        let mut trunk = Vec::new();
        let mut width = n_full;
        for (i, &h) in hidden.iter().enumerate() {
            trunk.push(Linear::new(b, &format!("trunk{i}"), width, h));
            width = h;
        }
        let heads = dims
            .iter()
            .enumerate()
            .map(|(s, &c)| Linear::with_bias(b, &format!("head{s}"), width, c, Init::Const(PROMPT_BIAS_INIT)))
            .collect();
        let gate = gate.then(|| Linear::with_bias(b, "gate", width, 1, Init::Const(PROMPT_BIAS_INIT)));
        ViewPrompter {
            n_full,
            trunk,
            heads,
            gate,
        }
    }

    pub fn encode<F: Float>(&self, p: &[Tensor<F>], v: &[f64]) -> Result<StagePrompts<F>> {
        if v.len() != self.n_full {
            return Err(Error::Shape(format!(
                "prompter expects sampling vectors of length {}, got {}",
                self.n_full,
                v.len()
            )));
        }
        let mut h = Tensor::from_vec(&[1, v.len()], v.iter().map(|&x| F::of(x)).collect())?;
        for layer in &self.trunk {
            h = layer.forward(p, &h)?.relu()?;
        }
        let as_channels = |t: Tensor<F>| -> Result<Tensor<F>> {
            let c = t.numel();
            Ok(t.reshape(&[1, c, 1, 1])?)
        };
        let stages = self
            .heads
            .iter()
            .map(|head| as_channels(head.forward(p, &h)?))
            .collect::<Result<Vec<_>>>()?;
        let gate = match &self.gate {
            Some(g) => Some(as_channels(g.forward(p, &h)?)?),
            None => None,
        };
        Ok(StagePrompts { stages, gate })
    }
}

/// `h + p * delta`, with `p` broadcast over batch and space.
pub fn modulate<F: Float>(h: &Tensor<F>, p: &Tensor<F>, delta: &Tensor<F>) -> Result<Tensor<F>> {
    let c = h.shape().get(1).copied().unwrap_or(0);
    if p.numel() != c || h.shape() != delta.shape() {
        return Err(Error::Shape(format!(
            "modulating {:?} with prompt of {} channels and update {:?}",
            h.shape(),
            p.numel(),
            delta.shape()
        )));
    }
    let p = if p.ndim() == 4 { p.clone() } else { p.reshape(&[1, c, 1, 1])? };
    Ok(h.add(&p.mul(delta)?)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivct_tensor::Rng;

    fn prompter(dims: &[usize]) -> (ViewPrompter, Vec<Tensor<f64>>) {
        let mut rng = Rng::new(0);
        let mut b = ParamBuilder::<f64>::new(&mut rng);
        let pr = ViewPrompter::new(&mut b, 20, &[16, 8], dims, true);
        (pr, b.finish().1)
    }

    #[test]
    fn prompt_dims_follow_stages() {
        let (pr, p) = prompter(&[24, 48, 96, 48, 24]);
        let v = vec![1.0; 20];
        let out = pr.encode(&p, &v).unwrap();
        assert_eq!(out.dims(), vec![24, 48, 96, 48, 24]);
        let again = pr.encode(&p, &v).unwrap();
        assert_eq!(out.stages[2].data(), again.stages[2].data());
        assert!(pr.encode(&p, &[1.0; 19]).is_err());
    }

    #[test]
    fn one_bit_changes_prompts() {
        let (pr, p) = prompter(&[4, 4, 4, 4, 4]);
        let a: Vec<f64> = (0..20).map(|i| f64::from(i % 2 == 0)).collect();
        let mut b = a.clone();
        b[3] = 1.0;
        let (pa, pb) = (pr.encode(&p, &a).unwrap(), pr.encode(&p, &b).unwrap());
        let d: f64 = pa.stages[0].data().iter().zip(pb.stages[0].data()).map(|(x, y)| (x - y).powi(2)).sum();
        assert!(d > 0.0);
    }

    #[test]
    fn modulation_identities() {
        let h = Tensor::<f64>::from_f64(&[1, 2, 1, 2], &[1.0, -2.0, 0.5, 3.0]).unwrap();
        let f = Tensor::<f64>::from_f64(&[1, 2, 1, 2], &[0.3, 0.1, -4.0, 2.0]).unwrap();
        let zero = Tensor::<f64>::zeros(&[1, 2, 1, 1]);
        assert_eq!(modulate(&h, &zero, &f).unwrap().data(), h.data());
        let p = Tensor::<f64>::from_f64(&[2], &[0.5, -1.5]).unwrap();
        let p2 = p.mul_scalar(2.0).unwrap();
        let d1 = modulate(&h, &p, &f).unwrap().sub(&h).unwrap();
        let d2 = modulate(&h, &p2, &f).unwrap().sub(&h).unwrap();
        for (a, b) in d1.data().iter().zip(d2.data()) {
            assert!((2.0 * a - b).abs() < 1e-12);
        }
        assert!(modulate(&h, &Tensor::zeros(&[3]), &f).is_err());
    }
}

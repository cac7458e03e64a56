//! Central finite-difference checks of reverse-mode gradients, in 64-bit.

use crate::error::Result;
use crate::rng::Rng;
use crate::tensor::Tensor;

pub const FD_STEP: f64 = 1e-5;

/// Norm-wise relative error `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b));
    if scale < 1e-300 {
        0.0
    } else {
        diff / scale
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn with_replaced(inputs: &[Tensor<f64>], which: usize, values: Vec<f64>) -> Vec<Tensor<f64>> {
    let mut out: Vec<Tensor<f64>> = inputs.iter().map(|t| t.detach()).collect();
    out[which] = Tensor::from_vec(inputs[which].shape(), values).expect("same shape");
    out
}

fn analytic(f: &dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>, inputs: &[Tensor<f64>]) -> Result<Vec<Vec<f64>>> {
    let leaves: Vec<Tensor<f64>> = inputs.iter().map(|t| t.detach().requires_grad(true)).collect();
    f(&leaves)?.backward()?;
    Ok(leaves.iter().map(|t| t.grad_or_zeros()).collect())
}

/// Compares the full gradient of scalar `f` with respect to every element of
/// every input against central differences. Returns one relative error per
/// input.
pub fn check_elementwise(
    f: &dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    inputs: &[Tensor<f64>],
    step: f64,
) -> Result<Vec<f64>> {
    let grads = analytic(f, inputs)?;
    let mut errs = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let base = input.to_vec();
        let mut numeric = vec![0.0; base.len()];
        for i in 0..base.len() {
            let mut plus = base.clone();
            plus[i] += step;
            let mut minus = base.clone();
            minus[i] -= step;
            let fp = f(&with_replaced(inputs, k, plus))?.item()?;
            let fm = f(&with_replaced(inputs, k, minus))?.item()?;
            numeric[i] = (fp - fm) / (2.0 * step);
        }
        errs.push(relative_error(&grads[k], &numeric));
    }
    Ok(errs)
}

/// Cheaper check for large inputs: for each input, compares the directional
/// derivative along `probes` random unit directions. Returns the worst
/// relative error per input.
pub fn check_directional(
    f: &dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    inputs: &[Tensor<f64>],
    step: f64,
    probes: usize,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    let grads = analytic(f, inputs)?;
    let mut errs = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let base = input.to_vec();
        let mut worst: f64 = 0.0;
        for _ in 0..probes {
            let mut dir: Vec<f64> = (0..base.len()).map(|_| rng.normal()).collect();
            let n = norm(&dir).max(1e-300);
            dir.iter_mut().for_each(|d| *d /= n);
            let along = |s: f64| -> Result<f64> {
                let moved = base.iter().zip(&dir).map(|(b, d)| b + s * d).collect();
                f(&with_replaced(inputs, k, moved))?.item()
            };
            let numeric = (along(step)? - along(-step)?) / (2.0 * step);
            let exact: f64 = grads[k].iter().zip(&dir).map(|(g, d)| g * d).sum();
            let scale = numeric.abs().max(exact.abs());
            // a direction the function is flat along carries no signal
            if scale > 1e-12 {
                worst = worst.max((numeric - exact).abs() / scale);
            }
        }
        errs.push(worst);
    }
    Ok(errs)
}

/// Stencil disagreement above which a direction counts as crossing a kink.
const KINK_TOL: f64 = 1e-4;

/// [`check_directional`] for piecewise-smooth functions (ReLU, abs). A
/// direction whose central differences at `step` and `step / 2` disagree has
/// a kink inside the stencil and is redrawn, up to `10 * probes` draws per
/// input. Returns `(worst relative error, redrawn directions)` per input; an
/// input where no clean direction was found reports an infinite error.
pub fn check_directional_piecewise(
    f: &dyn Fn(&[Tensor<f64>]) -> Result<Tensor<f64>>,
    inputs: &[Tensor<f64>],
    step: f64,
    probes: usize,
    rng: &mut Rng,
) -> Result<Vec<(f64, usize)>> {
    let grads = analytic(f, inputs)?;
    let mut out = Vec::with_capacity(inputs.len());
    for (k, input) in inputs.iter().enumerate() {
        let base = input.to_vec();
        let (mut worst, mut clean, mut redrawn): (f64, usize, usize) = (0.0, 0, 0);
        for _ in 0..10 * probes {
            if clean == probes {
                break;
            }
            let mut dir: Vec<f64> = (0..base.len()).map(|_| rng.normal()).collect();
            let n = norm(&dir).max(1e-300);
            dir.iter_mut().for_each(|d| *d /= n);
            let along = |s: f64| -> Result<f64> {
                let moved = base.iter().zip(&dir).map(|(b, d)| b + s * d).collect();
                f(&with_replaced(inputs, k, moved))?.item()
            };
            let wide = (along(step)? - along(-step)?) / (2.0 * step);
            let narrow = (along(step / 2.0)? - along(-step / 2.0)?) / step;
            let exact: f64 = grads[k].iter().zip(&dir).map(|(g, d)| g * d).sum();
            let scale = wide.abs().max(narrow.abs()).max(exact.abs());
            if scale <= 1e-12 {
                clean += 1;
                continue;
            }
            if (wide - narrow).abs() / scale > KINK_TOL {
                redrawn += 1;
                continue;
            }
            clean += 1;
            worst = worst.max((wide - exact).abs() / scale);
        }
        out.push((if clean == probes { worst } else { f64::INFINITY }, redrawn));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn detects_correct_and_wrong_gradients() {
        let x = Tensor::<f64>::from_f64(&[3], &[0.3, -1.2, 2.0]).unwrap();
        let good = |t: &[Tensor<f64>]| t[0].square()?.sum();
        let errs = check_elementwise(&good, &[x.clone()], FD_STEP).unwrap();
        assert!(errs[0] < 1e-8);

        // detaching one factor hides half of the product rule from the tape
        let bad = |t: &[Tensor<f64>]| {
            let d = t[0].detach();
            t[0].mul(&d)?.sum()
        };
        let errs = check_elementwise(&bad, &[x], FD_STEP).unwrap();
        assert!(errs[0] > 0.1);
    }

    #[test]
    fn piecewise_check_redraws_kinked_directions() {
        // every element sits within one step of the ReLU kink
        let x = Tensor::<f64>::from_f64(&[4], &[2e-6, -3e-6, 1e-6, 0.5]).unwrap();
        let f = |t: &[Tensor<f64>]| t[0].relu()?.sum();
        let mut rng = Rng::new(1);
        let plain = check_directional(&f, &[x.clone()], FD_STEP, 5, &mut rng).unwrap();
        assert!(plain[0] > 1e-3);
        let (err, redrawn) = check_directional_piecewise(&f, &[x.clone()], FD_STEP, 5, &mut rng).unwrap()[0];
        assert!(err.is_infinite() || err < 1e-8);
        assert!(redrawn > 0);

        let bad = |t: &[Tensor<f64>]| t[0].mul(&t[0].detach())?.sum();
        let y = Tensor::<f64>::from_f64(&[3], &[0.3, -1.2, 2.0]).unwrap();
        let (err, _) = check_directional_piecewise(&bad, &[y], FD_STEP, 3, &mut rng).unwrap()[0];
        assert!(err > 0.1);
    }
}

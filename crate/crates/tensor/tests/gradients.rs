//! Finite-difference checks for every differentiable op, 64-bit, 20 seeds.

use ivct_tensor::gradcheck::{check_elementwise, FD_STEP};
use ivct_tensor::{Conv2dOptions, PadMode, Result, Rng, Tensor};

const SEEDS: u64 = 20;

fn rand(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    rng.uniform_tensor(shape, -1.0, 1.0)
}

fn positive(rng: &mut Rng, shape: &[usize]) -> Tensor<f64> {
    rng.uniform_tensor(shape, 0.5, 2.0)
}

/// Contracts `t` with fixed pseudo-random weights so no gradient is trivially
/// uniform.
fn probe(t: &Tensor<f64>) -> Result<Tensor<f64>> {
    let mut r = Rng::new(t.numel() as u64 ^ 0x5eed);
    let w = r.uniform_tensor(t.shape(), -1.0, 1.0);
    t.mul(&w)?.sum()
}

type Build = fn(&mut Rng) -> Vec<Tensor<f64>>;
type Func = fn(&[Tensor<f64>]) -> Result<Tensor<f64>>;

fn run(name: &str, tol: f64, build: Build, f: Func) {
    for seed in 0..SEEDS {
        let mut rng = Rng::new(seed);
        let inputs = build(&mut rng);
        let errs = check_elementwise(&f, &inputs, FD_STEP).unwrap();
        for (i, e) in errs.iter().enumerate() {
            assert!(*e < tol, "{name}: seed {seed} input {i} rel err {e:e}");
        }
    }
}

#[test]
fn broadcasting_arithmetic() {
    run("add", 1e-6, |r| vec![rand(r, &[2, 3]), rand(r, &[3])], |t| probe(&t[0].add(&t[1])?));
    run("sub", 1e-6, |r| vec![rand(r, &[2, 1, 3]), rand(r, &[4, 1])], |t| probe(&t[0].sub(&t[1])?));
    run("mul", 1e-6, |r| vec![rand(r, &[3, 4]), rand(r, &[3, 1])], |t| probe(&t[0].mul(&t[1])?));
    run("div", 1e-6, |r| vec![rand(r, &[2, 3]), positive(r, &[2, 3])], |t| probe(&t[0].div(&t[1])?));
}

#[test]
fn unary_maps() {
    run("scalars", 1e-6, |r| vec![rand(r, &[5])], |t| probe(&t[0].add_scalar(0.3)?.mul_scalar(-2.0)?.neg()?));
    run("square", 1e-6, |r| vec![rand(r, &[5])], |t| probe(&t[0].square()?));
    run("exp", 1e-6, |r| vec![rand(r, &[5])], |t| probe(&t[0].exp()?));
    run("ln", 1e-6, |r| vec![positive(r, &[5])], |t| probe(&t[0].ln()?));
    run("sqrt", 1e-6, |r| vec![positive(r, &[5])], |t| probe(&t[0].sqrt()?));
    run("powf", 1e-6, |r| vec![positive(r, &[5])], |t| probe(&t[0].powf(1.7)?));
    // kinks at zero are measure-zero for uniform draws; keep away from them
    let away = |r: &mut Rng| {
        let v: Vec<f64> = (0..6).map(|_| {
            let u = r.uniform() * 0.9 + 0.1;
            if r.uniform() < 0.5 { -u } else { u }
        }).collect();
        vec![Tensor::from_vec(&[6], v).unwrap()]
    };
    run("relu", 1e-6, away, |t| probe(&t[0].relu()?));
    run("abs", 1e-6, away, |t| probe(&t[0].abs()?));
    run("clamp_min", 1e-6, away, |t| probe(&t[0].clamp_min(0.0)?));
}

#[test]
fn reductions() {
    run("sum", 1e-6, |r| vec![rand(r, &[3, 4])], |t| t[0].square()?.sum());
    run("mean", 1e-6, |r| vec![rand(r, &[3, 4])], |t| t[0].square()?.mean());
    run("sum_dims", 1e-6, |r| vec![rand(r, &[2, 3, 4])], |t| probe(&t[0].sum_dims(&[0, 2], false)?));
    run("mean_dims", 1e-6, |r| vec![rand(r, &[2, 3, 4])], |t| probe(&t[0].mean_dims(&[1], true)?));
}

#[test]
fn layout_ops() {
    run("reshape", 1e-6, |r| vec![rand(r, &[2, 6])], |t| probe(&t[0].reshape(&[3, 4])?));
    run("permute", 1e-6, |r| vec![rand(r, &[2, 3, 4])], |t| probe(&t[0].permute(&[2, 0, 1])?));
    run("narrow", 1e-6, |r| vec![rand(r, &[3, 5])], |t| probe(&t[0].narrow(1, 1, 3)?));
    run("concat", 1e-6, |r| vec![rand(r, &[2, 3]), rand(r, &[2, 1])], |t| {
        probe(&Tensor::concat(&[t[0].clone(), t[1].clone()], 1)?)
    });
    run("pad zero", 1e-6, |r| vec![rand(r, &[1, 2, 3, 3])], |t| probe(&t[0].pad2d([1, 0, 2, 1], PadMode::Zero)?));
    run("pad reflect", 1e-6, |r| vec![rand(r, &[1, 2, 4, 3])], |t| {
        probe(&t[0].pad2d([2, 1, 1, 2], PadMode::Reflect)?)
    });
    run("crop", 1e-6, |r| vec![rand(r, &[1, 1, 5, 5])], |t| probe(&t[0].crop2d(1, 2, 3, 2)?));
    run("window", 1e-6, |r| vec![rand(r, &[1, 2, 5, 6])], |t| {
        let (w, l) = t[0].window_partition(4)?;
        probe(&w.mul(&w)?.window_merge(&l)?)
    });
}

#[test]
fn matrix_products() {
    run("matmul", 1e-6, |r| vec![rand(r, &[2, 3, 4]), rand(r, &[2, 4, 2])], |t| probe(&t[0].matmul(&t[1])?));
    run("matmul shared", 1e-6, |r| vec![rand(r, &[2, 3, 4]), rand(r, &[4, 2])], |t| probe(&t[0].matmul(&t[1])?));
    run("matmul_t", 1e-6, |r| vec![rand(r, &[3, 4]), rand(r, &[5, 4])], |t| probe(&t[0].matmul_t(&t[1])?));
    run("linear", 1e-6, |r| vec![rand(r, &[2, 4]), rand(r, &[3, 4]), rand(r, &[3])], |t| {
        probe(&t[0].linear(&t[1], Some(&t[2]))?)
    });
}

#[test]
fn convolutions() {
    run("conv 3x3", 1e-6, |r| vec![rand(r, &[1, 1, 4, 4]), rand(r, &[1, 1, 3, 3])], |t| {
        probe(&t[0].conv2d(&t[1], None, Conv2dOptions::default())?)
    });
    run("conv padded bias", 1e-6, |r| vec![rand(r, &[2, 3, 4, 5]), rand(r, &[2, 3, 3, 3]), rand(r, &[2])], |t| {
        probe(&t[0].conv2d(&t[1], Some(&t[2]), Conv2dOptions { padding: 1, ..Default::default() })?)
    });
    run("conv grouped", 1e-6, |r| vec![rand(r, &[1, 4, 4, 4]), rand(r, &[6, 2, 3, 3])], |t| {
        probe(&t[0].conv2d(&t[1], None, Conv2dOptions { padding: 1, groups: 2, ..Default::default() })?)
    });
    run("conv depthwise", 1e-6, |r| vec![rand(r, &[2, 3, 5, 4]), rand(r, &[3, 1, 3, 3]), rand(r, &[3])], |t| {
        probe(&t[0].conv2d(&t[1], Some(&t[2]), Conv2dOptions { padding: 1, groups: 3, ..Default::default() })?)
    });
    run("conv strided", 1e-6, |r| vec![rand(r, &[1, 2, 6, 6]), rand(r, &[3, 2, 2, 2])], |t| {
        probe(&t[0].conv2d(&t[1], None, Conv2dOptions { stride: 2, ..Default::default() })?)
    });
    run("conv 1x1", 1e-6, |r| vec![rand(r, &[2, 3, 3, 3]), rand(r, &[4, 3, 1, 1]), rand(r, &[4])], |t| {
        probe(&t[0].conv2d(&t[1], Some(&t[2]), Conv2dOptions::default())?)
    });
    run("conv_transpose", 1e-6, |r| vec![rand(r, &[2, 3, 3, 2]), rand(r, &[3, 2, 2, 2]), rand(r, &[2])], |t| {
        probe(&t[0].conv_transpose2d(&t[1], Some(&t[2]), 2)?)
    });
}

#[test]
fn spectral_ops() {
    run("fft2", 1e-6, |r| vec![rand(r, &[2, 3, 4])], |t| probe(&t[0].fft2()?));
    run("fft2 complex", 1e-6, |r| vec![rand(r, &[3, 5, 2])], |t| probe(&t[0].fft2_complex()?));
    run("ifft2", 1e-6, |r| vec![rand(r, &[2, 4, 3, 2])], |t| probe(&t[0].ifft2()?));
    run("to_complex/real", 1e-6, |r| vec![rand(r, &[3, 2])], |t| probe(&t[0].to_complex()?.square()?.real()?));
    run("complex_mul", 1e-6, |r| vec![rand(r, &[2, 3, 4, 2]), rand(r, &[3, 4, 2])], |t| {
        probe(&t[0].complex_mul(&t[1])?)
    });
    run("global filter", 1e-6, |r| vec![rand(r, &[1, 2, 4, 4]), rand(r, &[2, 4, 4, 2])], |t| {
        probe(&t[0].fft2()?.complex_mul(&t[1])?.ifft2()?.real()?)
    });
}

#[test]
fn softmax_pool_norm() {
    run("softmax", 1e-6, |r| vec![rand(r, &[2, 3, 4])], |t| probe(&t[0].softmax(1)?));
    run("softmax last", 1e-6, |r| vec![rand(r, &[3, 5])], |t| probe(&t[0].softmax(1)?));
    run("avg_pool", 1e-6, |r| vec![rand(r, &[1, 2, 5, 4])], |t| probe(&t[0].avg_pool2d(2)?));
    run("layer norm", 1e-5, |r| vec![rand(r, &[2, 2, 3, 3]), rand(r, &[1, 2, 1, 1]), rand(r, &[1, 2, 1, 1])], |t| {
        let o = t[0].rescaled_layer_norm(&t[1], &t[2])?;
        let back = o.normalized.mul(&o.std)?.add(&o.mean.square()?)?;
        probe(&back)
    });
}

#[test]
fn composite_graph() {
    // conv -> norm -> softmax -> sum, differentiated against all parameters
    run("composite", 1e-4, |r| {
        vec![
            rand(r, &[2, 2, 5, 5]),
            rand(r, &[3, 2, 3, 3]),
            rand(r, &[3]),
            positive(r, &[1, 3, 1, 1]),
            rand(r, &[1, 3, 1, 1]),
        ]
    }, |t| {
        let h = t[0].conv2d(&t[1], Some(&t[2]), Conv2dOptions { padding: 1, ..Default::default() })?;
        let o = h.rescaled_layer_norm(&t[3], &t[4])?;
        let s = o.normalized.softmax(1)?;
        probe(&s.mul(&o.std)?)
    });
}

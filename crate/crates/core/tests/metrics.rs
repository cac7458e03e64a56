use ivct_core::metrics::{ms_ssim, ssim, ssim_tensor};
use ivct_tensor::gradcheck::check_directional;
use ivct_tensor::{Rng, Tensor, TensorError};

#[test]
fn ms_ssim_gradient_matches_finite_differences() {
    let mut rng = Rng::new(0);
    let a: Tensor<f64> = rng.uniform_tensor(&[2, 1, 24, 24], 0.0, 1.0);
    let b: Tensor<f64> = rng.uniform_tensor(&[2, 1, 24, 24], 0.0, 1.0);
    // blend so the structure terms stay well away from the clamp
    let b = a.mul_scalar(0.7).unwrap().add(&b.mul_scalar(0.3).unwrap()).unwrap();
    let f = |x: &[Tensor<f64>]| {
        ms_ssim(&x[0], &x[1]).map_err(|e| TensorError::Invalid {
            op: "ms_ssim",
            msg: e.to_string(),
        })
    };
    let errs = check_directional(&f, &[a, b], 1e-6, 4, &mut rng).unwrap();
    assert!(errs.iter().all(|&e| e < 1e-6), "{errs:?}");
}

#[test]
fn tensor_and_loop_ssim_agree_on_random_pairs() {
    let mut rng = Rng::new(5);
    for _ in 0..5 {
        let a: Vec<f64> = (0..400).map(|_| rng.uniform()).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.2 * rng.normal()).collect();
        let ta = Tensor::from_vec(&[1, 1, 20, 20], a.clone()).unwrap();
        let tb = Tensor::from_vec(&[1, 1, 20, 20], b.clone()).unwrap();
        let t = ssim_tensor(&ta, &tb).unwrap().item().unwrap();
        assert!((t - ssim(&a, &b).unwrap()).abs() < 1e-9);
    }
}

#[test]
fn noise_lowers_ssim() {
    let mut rng = Rng::new(0);
    let a: Vec<f64> = (0..32 * 32).map(|i| (i % 32) as f64 / 31.0).collect();
    let b: Vec<f64> = a.iter().map(|v| v + 0.05 * rng.normal()).collect();
    assert!(ssim(&a, &b).unwrap() < ssim(&a, &a).unwrap());
}

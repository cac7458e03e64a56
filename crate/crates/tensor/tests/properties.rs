use ivct_tensor::{Rng, Tensor};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn window_roundtrip(h in 1usize..20, w in 1usize..20, c in 1usize..3, win_frac in 0.0f64..1.0, seed in 0u64..1000) {
        let max_win = 2 * h.min(w);
        let win = 1 + ((max_win - 1) as f64 * win_frac) as usize;
        let mut rng = Rng::new(seed);
        let x: Tensor<f64> = rng.uniform_tensor(&[2, c, h, w], -1.0, 1.0);
        let (parts, layout) = x.window_partition(win).unwrap();
        prop_assert_eq!(parts.shape()[2], win);
        let back = parts.window_merge(&layout).unwrap();
        prop_assert_eq!(back.shape(), x.shape());
        prop_assert_eq!(back.data(), x.data());
    }

    #[test]
    fn softmax_rows_are_distributions(vals in proptest::collection::vec(-30.0f64..30.0, 1..24), shift in -50.0f64..50.0) {
        let n = vals.len();
        let x = Tensor::from_vec(&[1, n], vals).unwrap();
        let y = x.softmax(1).unwrap();
        let total: f64 = y.data().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        prop_assert!(y.data().iter().all(|&v| v > 0.0 && v <= 1.0));
        let z = x.add_scalar(shift).unwrap().softmax(1).unwrap();
        for (a, b) in y.data().iter().zip(z.data()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn fft_roundtrip_and_parseval(h in 1usize..9, w in 1usize..9, seed in 0u64..1000) {
        let mut rng = Rng::new(seed);
        let x: Tensor<f64> = rng.uniform_tensor(&[h, w], -2.0, 2.0);
        let f = x.fft2().unwrap();
        let back = f.ifft2().unwrap().real().unwrap();
        for (a, b) in back.data().iter().zip(x.data()) {
            prop_assert!((a - b).abs() < 1e-10);
        }
        let ex: f64 = x.data().iter().map(|v| v * v).sum();
        let ef: f64 = f.data().iter().map(|v| v * v).sum::<f64>() / (h * w) as f64;
        prop_assert!((ex - ef).abs() < 1e-8);
    }

    #[test]
    fn ops_are_deterministic(seed in 0u64..1000) {
        let run = || {
            let mut rng = Rng::new(seed);
            let x: Tensor<f32> = rng.uniform_tensor(&[1, 3, 6, 6], -1.0, 1.0);
            let k: Tensor<f32> = rng.trunc_normal_tensor(&[4, 3, 3, 3], 0.2);
            x.conv2d(&k, None, Default::default()).unwrap().softmax(1).unwrap().to_vec()
        };
        prop_assert_eq!(run(), run());
    }
}

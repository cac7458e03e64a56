use ivct_core::physics::*;
use ivct_core::metrics::psnr;
use ivct_tensor::Rng;

fn small() -> ScanGeometry {
    make_geometry(&GeometryConfig {
        image_size: 16,
        pixel_spacing: 16.0,
        n_detectors: 32,
        n_full_views: 32,
        ..GeometryConfig::desk()
    })
    .unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Dense system matrix built column by column from unit images.
fn dense(g: &ScanGeometry) -> Vec<Vec<f64>> {
    let n = g.image_size * g.image_size;
    (0..n)
        .map(|j| {
            let mut data = vec![0.0; n];
            data[j] = 1.0;
            forward_project_full(&Image::new(g.image_size, g.pixel_spacing, data).unwrap(), g).unwrap().data
        })
        .collect()
}

#[test]
fn adjoint_matches_dense_transpose() {
    let g = small();
    let cols = dense(&g);
    for seed in 0..20 {
        let mut rng = Rng::new(seed);
        let rows = g.n_full_views * g.n_detectors;
        let y: Vec<f64> = (0..rows).map(|_| rng.normal()).collect();
        let sino = Sinogram::new(g.n_detectors, (0..g.n_full_views).collect(), y.clone()).unwrap();
        let at = adjoint_project(&sino, &g).unwrap();
        for (j, col) in cols.iter().enumerate() {
            let want = dot(col, &y);
            assert!((at.data[j] - want).abs() <= 1e-9 * (1.0 + want.abs()), "seed {seed} pixel {j}");
        }
        let x: Vec<f64> = (0..g.image_size * g.image_size).map(|_| rng.uniform()).collect();
        let ax = forward_project_full(&Image::new(16, 16.0, x.clone()).unwrap(), &g).unwrap();
        let lhs = dot(&ax.data, &y);
        assert!((lhs - dot(&x, &at.data)).abs() / lhs.abs() < 1e-4);
    }
}

#[test]
fn fbp_improves_with_views() {
    let g = make_geometry(&GeometryConfig {
        image_size: 128,
        pixel_spacing: 2.0,
        ..GeometryConfig::default()
    })
    .unwrap();
    let img = shepp_logan(128, 2.0);
    let full = forward_project_full(&img, &g).unwrap();
    let scores: Vec<f64> = [18, 36, 72, 144, 720]
        .iter()
        .map(|&n| {
            let views: Vec<usize> = (0..n).map(|i| i * 720 / n).collect();
            let rows = views.iter().flat_map(|&v| full.row(v).to_vec()).collect();
            let r = fbp(&Sinogram::new(g.n_detectors, views, rows).unwrap(), &g).unwrap();
            psnr(&r.data, &img.data, 1.0).unwrap()
        })
        .collect();
    assert!(scores.windows(2).all(|w| w[1] > w[0]), "{scores:?}");
    assert!(scores[4] - scores[0] >= 8.0);
}

#[test]
fn noise_moments_match_delta_method() {
    let model = NoiseModel::default();
    let mut rng = Rng::new(7);
    for s in [0.0, 1.0, 3.0] {
        let n = 40_000;
        let draws: Vec<f64> = (0..n).map(|_| model.sample(s, &mut rng)).collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let lambda = model.photon_intensity * (-s as f64).exp();
        let want_var = 1.0 / lambda + model.gaussian_std.powi(2);
        assert!((var / want_var - 1.0).abs() < 0.05, "s={s}: var {var} vs {want_var}");
        // standard error of the mean is about 5e-5
        assert!((mean - s).abs() < 3e-4, "s={s}: mean {mean}");
    }
}

#[test]
fn phantoms_are_repeatable_and_bounded() {
    for kind in [PhantomKind::SheppLogan, PhantomKind::RandomEllipses] {
        let a = make_phantom(kind, 32, 8.0, &mut Rng::new(3)).unwrap();
        let b = make_phantom(kind, 32, 8.0, &mut Rng::new(3)).unwrap();
        assert_eq!(a, b);
        assert!(a.data.iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

use ivct_core::sampling::Setting;
use ivct_core::training::{sample_setting, TrainPlan};
use ivct_tensor::Rng;

/// Pearson statistic of `counts` against a uniform draw over `lo..=hi`
/// grouped by `bin`.
fn chi_square(counts: &[usize], lo: u64, hi: u64, bin: impl Fn(u64) -> usize) -> f64 {
    let n: usize = counts.iter().sum();
    let mut width = vec![0usize; counts.len()];
    for v in lo..=hi {
        width[bin(v)] += 1;
    }
    let total = (hi - lo + 1) as f64;
    counts
        .iter()
        .zip(&width)
        .map(|(&c, &w)| {
            let e = n as f64 * w as f64 / total;
            (c as f64 - e).powi(2) / e
        })
        .sum()
}

#[test]
fn second_phase_draws_are_uniform() {
    let plan = TrainPlan::full();
    let mut rng = Rng::new(0);
    let svct_bin = |n: u64| ((n - 9) * 8 / 280) as usize;
    let lact_bin = |d: u64| ((d - 60) * 8 / 121) as usize;
    let (mut svct, mut lact) = (vec![0usize; 8], vec![0usize; 8]);
    for _ in 0..40_000 {
        match sample_setting(&plan, 50, &mut rng).unwrap() {
            Setting::Svct { n_view } => {
                assert!((9..=288).contains(&n_view));
                svct[svct_bin(n_view as u64)] += 1;
            }
            Setting::Lact { end_deg, .. } => {
                assert!((60.0..=180.0).contains(&end_deg) && end_deg.fract() == 0.0);
                lact[lact_bin(end_deg as u64)] += 1;
            }
            other => panic!("unexpected setting {other}"),
        }
    }
    // 7 degrees of freedom, 0.999 quantile is 24.32
    let (cs, cl) = (chi_square(&svct, 9, 288, svct_bin), chi_square(&lact, 60, 180, lact_bin));
    assert!(cs < 24.32, "{svct:?} chi2 {cs}");
    assert!(cl < 24.32, "{lact:?} chi2 {cl}");
    let (a, b): (usize, usize) = (svct.iter().sum(), lact.iter().sum());
    assert!((a as f64 / (a + b) as f64 - 0.5).abs() < 0.01);
}

#[test]
fn first_phase_draws_only_listed_settings() {
    let plan = TrainPlan::full();
    let mut rng = Rng::new(1);
    let listed = plan.listed_settings();
    for _ in 0..500 {
        let s = sample_setting(&plan, 10, &mut rng).unwrap();
        assert!(listed.contains(&s), "{s}");
    }
}

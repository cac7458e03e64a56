mod common;

use ivct_core::training::Trainer;

#[test]
fn overfits_two_images() {
    let mut cfg = common::small();
    cfg.plan.lr = 3e-3;
    let mut t = Trainer::new(&cfg).unwrap();
    let losses: Vec<f64> = (0..50).map(|_| t.step().unwrap().loss).collect();
    let head = losses[..5].iter().sum::<f64>() / 5.0;
    let tail = losses[45..].iter().sum::<f64>() / 5.0;
    assert!(tail <= 0.5 * head, "loss {head} -> {tail}");
}

#[test]
fn resume_continues_like_an_uninterrupted_run() {
    let mut cfg = common::small();
    cfg.noise.enabled = true;
    cfg.plan.phases[0].lact = Some(ivct_core::training::SettingPool::Set(vec![90.0]));
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("run.ckpt");

    let mut a = Trainer::new(&cfg).unwrap();
    for _ in 0..3 {
        a.step().unwrap();
    }
    a.save(&path).unwrap();
    let next: Vec<_> = (0..3).map(|_| a.step().unwrap()).collect();

    let mut b = Trainer::resume(&cfg, &path).unwrap();
    let again: Vec<_> = (0..3).map(|_| b.step().unwrap()).collect();
    assert_eq!(next, again);
    let bytes = |t: &Trainer| t.model.params.iter().flat_map(|p| p.to_vec()).map(f32::to_bits).collect::<Vec<_>>();
    assert_eq!(bytes(&a), bytes(&b));
}

#[test]
fn epochs_cover_each_image_once() {
    let mut cfg = common::small();
    cfg.data.n_train = 5;
    let mut t = Trainer::new(&cfg).unwrap();
    let mut rows = Vec::new();
    t.run_epoch(&mut |r| rows.push(r.clone())).unwrap();
    // 5 images at batch size 2: two full batches and one single
    assert_eq!(rows.len(), 3);
    assert_eq!(t.epoch(), 1);
}

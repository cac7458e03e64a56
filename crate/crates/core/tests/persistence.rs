mod common;

use ivct_core::model::Proct;
use ivct_core::training::{load_proct, save_proct};
use ivct_tensor::{Rng, Tensor};

#[test]
fn checkpoint_roundtrip_gives_identical_outputs() {
    let cfg = common::small();
    let model = Proct::<f32>::init(&cfg.model_config().unwrap(), &mut Rng::new(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    let sum = save_proct(&path, &model, None, &Default::default()).unwrap();
    let loaded = load_proct(&path).unwrap();
    assert_eq!(loaded.checksum, sum);
    let mut rng = Rng::new(1);
    let x: Tensor<f32> = rng.uniform_tensor(&[2, 1, 16, 16], 0.0, 1.0);
    let ctx: Tensor<f32> = rng.uniform_tensor(&[2, 2, 16, 16], 0.0, 1.0);
    let v = ivct_core::sampling::svct_vector(12, 48).unwrap().as_f64();
    let bits = |t: Tensor<f32>| t.to_vec().into_iter().map(f32::to_bits).collect::<Vec<_>>();
    assert_eq!(bits(model.forward(&x, &ctx, &v).unwrap()), bits(loaded.model.forward(&x, &ctx, &v).unwrap()));
}

#[test]
fn corrupted_checkpoint_is_rejected() {
    let cfg = common::small();
    let model = Proct::<f32>::init(&cfg.model_config().unwrap(), &mut Rng::new(9)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.ckpt");
    save_proct(&path, &model, None, &Default::default()).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let mid = bytes.len() / 2;
    bytes[mid] ^= 0x40;
    std::fs::write(&path, bytes).unwrap();
    assert!(load_proct(&path).is_err());
}

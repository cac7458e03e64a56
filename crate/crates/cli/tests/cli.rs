use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"
[geometry]
image_size = 16
pixel_spacing = 16.0
n_detectors = 32
n_full_views = 48

[plan]
epochs = 2
batch_size = 2
phases = [{ until_epoch = 2, svct = { set = [12] }, lact = { set = [90] } }]

[data]
n_train = 4
n_holdout = 2

[dual]
sino_dims = [4, 8]
fusion_dims = [4, 8]
steps = 4
"#;

fn ivct(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ivct"))
        .args(args)
        .env("IVCT_THREADS", "1")
        .output()
        .unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    o
}

#[test]
fn simulate_writes_files_and_repeats_without_noise() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(ivct(&["simulate", "--phantom", "shepp-logan", "--scenario", "svct", "--setting", "72", "--noise", "off", "--out", p(out)]));
    }
    let v = ivct_core::io::read_sampling(&a.join("sampling.txt")).unwrap();
    assert_eq!(v.count(), 72);
    for f in ["img_000_sino.ivct", "img_000_input.ivct", "img_000_target.ivct", "img_000_input.png"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let o = ivct(&["simulate", "--phantom", "shepp-logan", "--scenario", "svct", "--setting", "1000", "--out", p(&a)]);
    assert_eq!(code(&o), 2);
    assert!(!o.stderr.is_empty());
    assert_eq!(code(&ivct(&["simulate", "--bogus"])), 2);
}

#[test]
fn train_reconstruct_and_eval() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    std::fs::write(&cfg, SMALL).unwrap();
    let run = dir.path().join("run");
    ok(ivct(&["train", "--config", p(&cfg), "--out", p(&run)]));
    let log = std::fs::read_to_string(run.join("log.csv")).unwrap();
    assert!(log.starts_with("step,epoch,scenario,setting,s_t,loss"));
    assert_eq!(log.lines().count(), 1 + 4);
    assert!(run.join("summary/report.csv").exists());
    let ckpt = run.join("checkpoint.ckpt");
    ok(ivct(&["train", "--config", p(&cfg), "--dual", p(&ckpt), "--out", p(&run)]));

    let sim = dir.path().join("sim");
    ok(ivct(&["simulate", "--geometry", p(&cfg), "--phantom", "random-ellipses", "--scenario", "hybrid", "--setting", "union:90+6", "--out", p(&sim)]));
    let rec = dir.path().join("rec");
    let o = ok(ivct(&[
        "reconstruct", "--config", p(&cfg), "--ckpt", p(&ckpt), "--input", p(&sim.join("img_000_sino.ivct")),
        "--target", p(&sim.join("img_000_target.ivct")), "--dual", "on", "--dual-ckpt", p(&run.join("dual.ckpt")), "--out", p(&rec),
    ]));
    assert!(String::from_utf8_lossy(&o.stdout).contains("fused psnr="));
    assert!(rec.join("fused.png").exists());

    let wrong = dir.path().join("wrong.txt");
    ivct_core::io::write_sampling(&wrong, &ivct_core::sampling::svct_vector(6, 24).unwrap()).unwrap();
    let o = ivct(&[
        "reconstruct", "--config", p(&cfg), "--ckpt", p(&ckpt), "--input", p(&sim.join("img_000_input.png")),
        "--sampling", p(&wrong), "--out", p(&rec),
    ]);
    assert_eq!(code(&o), 5);

    let (e1, e2) = (dir.path().join("e1"), dir.path().join("e2"));
    for out in [&e1, &e2] {
        ok(ivct(&["sweep", "--config", p(&cfg), "--ckpt", p(&ckpt), "--settings", "svct:6..24:6", "--panels", "--out", p(out)]));
    }
    let report = std::fs::read(e1.join("report.csv")).unwrap();
    assert_eq!(report, std::fs::read(e2.join("report.csv")).unwrap());
    let text = String::from_utf8(report).unwrap();
    assert_eq!(text.lines().filter(|l| l.starts_with("svct,")).count(), 8);
    assert!(e1.join("profile.png").exists() && e1.join("panel_svct_6.png").exists());
    assert_eq!(code(&ivct(&["eval", "--config", p(&cfg), "--settings", "", "--out", p(&e1)])), 2);
}

#[test]
fn missing_dataset_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("{SMALL}\n").replace("n_train = 4", "n_train = 4\ndataset_dir = \"/nonexistent/images\"")).unwrap();
    assert_eq!(code(&ivct(&["train", "--config", p(&cfg), "--out", p(&dir.path().join("r"))])), 3);
    assert_eq!(code(&ivct(&["train", "--config", p(&dir.path().join("none.toml")), "--out", p(dir.path())])), 3);
}

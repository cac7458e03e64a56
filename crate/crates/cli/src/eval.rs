//! `ivct eval` and `ivct sweep`: held-out metrics per setting, written as
//! CSV with a PSNR profile plot.

use std::path::PathBuf;

use clap::Args;
use ivct_core::dual::{load_dual, DualReconstructor};
use ivct_core::eval::{evaluate, write_evaluation, Evaluation, ProctReconstructor, Reconstructor, FBP_METHOD};
use ivct_core::io::{load_dataset, save_panel, save_profile_plot};
use ivct_core::physics::Image;
use ivct_core::sampling::Setting;
use ivct_core::training::data::{context_phantom, datasets, ExampleSource};
use ivct_core::training::load_proct;

use crate::common::{load_config, parse_settings, CliError, CliResult};

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// ProCT checkpoint; without it only the FBP row is reported.
    #[arg(long)]
    pub ckpt: Option<PathBuf>,
    /// Dual-domain checkpoint extending `--ckpt`.
    #[arg(long, requires = "ckpt")]
    pub dual_ckpt: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Image directory; defaults to the config's held-out set.
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// e.g. `svct:18,svct:36,lact:90` or `svct:18..144:18`.
    #[arg(long)]
    pub settings: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 4)]
    pub batch: usize,
    /// Write an input | outputs | target panel for the first image of each setting.
    #[arg(long)]
    pub panels: bool,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn run(args: &EvalArgs, sweep: bool) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    let geo = cfg.geometry()?;
    let settings = parse_settings(&args.settings)?;
    if sweep && settings.iter().any(|s| s.scenario() != settings[0].scenario()) {
        return Err(CliError::Usage("a sweep covers a single scenario".into()));
    }
    let images = match &args.dataset {
        Some(dir) => load_dataset(dir, geo.image_size, geo.pixel_spacing)?,
        None => datasets(&cfg.data, &geo)?.1,
    };
    if images.is_empty() {
        return Err(CliError::Usage("no images to evaluate".into()));
    }
    let phantom = context_phantom(&cfg.data, &geo)?;
    let mut src = ExampleSource::new(&geo, cfg.noise, images, &phantom)?;

    let proct = match &args.ckpt {
        Some(p) => {
            let l = load_proct(p)?;
            let c = l.model.config();
            if c.n_full_views != geo.n_full_views || c.image_size != geo.image_size {
                return Err(CliError::Mismatch("checkpoint does not match the geometry".into()));
            }
            Some(l)
        }
        None => None,
    };
    let dual = match &args.dual_ckpt {
        Some(p) => {
            let d = load_dual(p)?;
            d.check_proct(&proct.as_ref().expect("clap requires --ckpt").checksum)?;
            Some(d)
        }
        None => None,
    };
    let mut recon: Option<Box<dyn Reconstructor + '_>> = match (&proct, &dual) {
        (Some(p), Some(d)) => Some(Box::new(DualReconstructor::new(&p.model, &d.net, &d.params, &mut src)?)),
        (Some(p), None) => Some(Box::new(ProctReconstructor { model: &p.model })),
        _ => None,
    };
    let mut ev = evaluate(&mut src, &settings, recon.as_deref_mut(), args.seed, args.batch)?;
    if let Some(p) = &proct {
        ev.report.meta.insert("ckpt".into(), p.checksum.clone());
    }
    if let Some(d) = &dual {
        ev.report.meta.insert("dual_ckpt".into(), d.checksum.clone());
    }
    for s in &settings {
        ev.report.meta.insert(format!("sampling.{s}"), s.vector(&geo)?.to_rle());
    }
    write_evaluation(&args.out, &ev)?;
    plot(&args.out.join("profile.png"), &ev, &settings)?;
    if args.panels {
        panels(args, &mut src, &settings, recon.as_deref_mut())?;
    }
    for r in &ev.report.rows {
        println!("{:<14} {:<12} psnr {:.2} ssim {:.4}", r.setting, r.method, r.psnr_mean, r.ssim_mean);
    }
    Ok(())
}

/// PSNR against the setting value, one series per method.
fn plot(path: &std::path::Path, ev: &Evaluation, settings: &[Setting]) -> CliResult<()> {
    let mut methods: Vec<&str> = vec![FBP_METHOD];
    for r in &ev.report.rows {
        if !methods.contains(&r.method.as_str()) {
            methods.push(&r.method);
        }
    }
    let series: Vec<Vec<(f64, f64)>> = methods
        .iter()
        .map(|m| {
            settings
                .iter()
                .filter_map(|s| ev.report.row(&s.to_string(), m).map(|r| (s.value(), r.psnr_mean)))
                .collect()
        })
        .collect();
    Ok(save_profile_plot(path, &series)?)
}

fn panels(args: &EvalArgs, src: &mut ExampleSource, settings: &[Setting], mut recon: Option<&mut (dyn Reconstructor + '_)>) -> CliResult<()> {
    for (si, s) in settings.iter().enumerate() {
        let v = s.vector(&src.geo)?;
        let ex = src.example(0, &v, &mut ivct_core::eval::example_rng(args.seed, si, 0))?;
        let mut shown: Vec<(Image, Option<String>)> = vec![(ex.x.clone(), None)];
        if let Some(r) = recon.as_deref_mut() {
            for out in r.reconstruct(std::slice::from_ref(&ex))? {
                shown.push((out[0].clone(), None));
            }
        }
        for (img, label) in shown.iter_mut() {
            let (p, _) = ivct_core::eval::score(img, &ex.y)?;
            *label = Some(format!("{p:.2}dB"));
        }
        shown.push((ex.y.clone(), None));
        let refs: Vec<(&Image, Option<String>)> = shown.iter().map(|(i, l)| (i, l.clone())).collect();
        let name = s.to_string().replace([':', '+'], "_");
        save_panel(&args.out.join(format!("panel_{name}.png")), &refs, 0.0, 1.0)?;
    }
    Ok(())
}

//! `ivct simulate`: phantoms or images through the scanner model.

use std::path::PathBuf;

use clap::{Args, ValueEnum};
use ivct_core::io::{load_dataset, save_gray, write_ivct, write_sampling, IvctFile};
use ivct_core::physics::{add_noise, fbp, forward_project_full, make_phantom, Image, PhantomKind};
use ivct_core::sampling::{reduce_sinogram, Setting};
use ivct_tensor::Rng;

use crate::common::{create_dir, load_config, CliError, CliResult};

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Scenario {
    Svct,
    Lact,
    /// `--setting` is a full label such as `union:150+18`.
    Hybrid,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Phantom {
    SheppLogan,
    RandomEllipses,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Run config; only its geometry and noise sections are used.
    #[arg(long = "geometry")]
    pub config: Option<PathBuf>,
    /// Directory of grayscale images.
    #[arg(long, conflicts_with = "phantom")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub phantom: Option<Phantom>,
    /// Phantoms to draw with `--phantom random-ellipses`.
    #[arg(long, default_value_t = 1)]
    pub count: usize,
    #[arg(long, value_enum)]
    pub scenario: Scenario,
    /// View count (svct), arc end in degrees (lact) or hybrid label.
    #[arg(long)]
    pub setting: String,
    #[arg(long, value_enum, default_value = "on")]
    pub noise: Switch,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

pub fn setting_of(scenario: Scenario, value: &str) -> CliResult<Setting> {
    let label = match scenario {
        Scenario::Svct => format!("svct:{value}"),
        Scenario::Lact => format!("lact:{value}"),
        Scenario::Hybrid => value.to_string(),
    };
    let setting: Setting = label.parse()?;
    let ok = match (scenario, setting) {
        (Scenario::Svct, Setting::Svct { .. }) | (Scenario::Lact, Setting::Lact { .. }) => true,
        (Scenario::Hybrid, s) => !matches!(s, Setting::Svct { .. } | Setting::Lact { .. }),
        _ => false,
    };
    if !ok {
        return Err(CliError::Usage(format!("setting {value:?} does not fit the scenario")));
    }
    Ok(setting)
}

pub fn run(args: &SimulateArgs) -> CliResult<()> {
    let mut cfg = load_config(args.config.as_deref())?;
    if args.noise == Switch::Off {
        cfg.noise.enabled = false;
    }
    let geo = cfg.geometry()?;
    let setting = setting_of(args.scenario, &args.setting)?;
    let v = setting.vector(&geo)?;
    let root = Rng::new(args.seed);
    let images: Vec<Image> = match (&args.input, args.phantom) {
        (Some(dir), _) => load_dataset(dir, geo.image_size, geo.pixel_spacing)?,
        (None, Some(Phantom::SheppLogan)) => vec![make_phantom(PhantomKind::SheppLogan, geo.image_size, geo.pixel_spacing, &mut root.fork(0))?],
        (None, Some(Phantom::RandomEllipses)) => (0..args.count as u64)
            .map(|i| make_phantom(PhantomKind::RandomEllipses, geo.image_size, geo.pixel_spacing, &mut root.fork(i)))
            .collect::<Result<_, _>>()?,
        (None, None) => return Err(CliError::Usage("give --input or --phantom".into())),
    };
    create_dir(&args.out)?;
    write_sampling(&args.out.join("sampling.txt"), &v)?;
    for (i, truth) in images.iter().enumerate() {
        let name = format!("img_{i:03}");
        let mut rng = root.fork((1 << 32) + i as u64);
        let sino = add_noise(&forward_project_full(truth, &geo)?, &cfg.noise, &mut rng)?;
        let reduced = reduce_sinogram(&sino, &v)?;
        let x = fbp(&reduced, &geo)?;
        let y = fbp(&sino, &geo)?;
        let path = |suffix: &str| args.out.join(format!("{name}_{suffix}"));
        write_ivct(&path("sino.ivct"), &IvctFile::sinogram(reduced, &geo, Some(v.clone())))?;
        for (tag, img) in [("input", &x), ("target", &y), ("truth", truth)] {
            let mut file = IvctFile::image(img.clone(), &geo);
            if tag == "input" {
                file.sampling = Some(v.clone());
            }
            write_ivct(&path(&format!("{tag}.ivct")), &file)?;
            save_gray(&path(&format!("{tag}.png")), img, 0.0, 1.0)?;
        }
    }
    println!("{} image(s), {setting} ({} views) -> {}", images.len(), v.count(), args.out.display());
    Ok(())
}

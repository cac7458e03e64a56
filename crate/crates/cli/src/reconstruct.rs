//! `ivct reconstruct`: one incomplete-view input through a trained model.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::Args;
use ivct_core::dual::{load_dual, DualInputs, dual_forward};
use ivct_core::io::{load_image, read_ivct, read_sampling, save_gray, write_ivct, IvctFile, Payload};
use ivct_core::metrics::psnr;
use ivct_core::model::nn::frozen;
use ivct_core::physics::{add_noise, fbp, forward_project_full, make_phantom, FbpOperator, Image, PhantomKind, ScanGeometry, Sinogram};
use ivct_core::sampling::{mask_matrix, reduce_sinogram, zero_fill, SamplingVector, ScenarioTag};
use ivct_core::training::load_proct;
use ivct_tensor::{Rng, Tensor};

use crate::common::{create_dir, load_config, write_text, CliError, CliResult};
use crate::simulate::Switch;

#[derive(Debug, Args)]
pub struct ReconstructArgs {
    #[arg(long)]
    pub ckpt: PathBuf,
    /// Run config for the geometry and noise model.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Incomplete-view image (`.ivct`/`.png`) or reduced sinogram (`.ivct`).
    #[arg(long)]
    pub input: PathBuf,
    /// Sampling-vector file; defaults to the one in the input header.
    #[arg(long)]
    pub sampling: Option<PathBuf>,
    /// `shepp-logan`, `random-ellipses`, or two comma-separated image files
    /// (incomplete, full).
    #[arg(long, default_value = "shepp-logan")]
    pub context: String,
    #[arg(long, value_enum, default_value = "off")]
    pub dual: Switch,
    /// Dual-domain checkpoint, needed with `--dual on`.
    #[arg(long)]
    pub dual_ckpt: Option<PathBuf>,
    /// Reference image for a PSNR report.
    #[arg(long)]
    pub target: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn read_image(path: &Path, geo: &ScanGeometry) -> CliResult<Image> {
    if path.extension().is_some_and(|e| e == "ivct") {
        let img = read_ivct(path)?.into_image(path)?;
        img.check_grid(geo)?;
        Ok(img)
    } else {
        Ok(load_image(path, geo.image_size, geo.pixel_spacing)?)
    }
}

/// Incomplete-view image, the measured rows when available, and the vector.
fn read_input(args: &ReconstructArgs, geo: &ScanGeometry) -> CliResult<(Image, Option<Sinogram>, SamplingVector)> {
    let from_file = match &args.sampling {
        Some(p) => Some(read_sampling(p)?),
        None => None,
    };
    if args.input.extension().is_some_and(|e| e == "ivct") {
        let file = read_ivct(&args.input)?;
        let header = file.sampling.clone();
        match file.payload {
            Payload::Sinogram(s) => {
                s.check_geometry(geo)?;
                let v = match from_file.or(header) {
                    Some(v) => v,
                    None => {
                        let mut bits = vec![false; geo.n_full_views];
                        s.view_indices.iter().for_each(|&i| bits[i] = true);
                        SamplingVector::new(bits, ScenarioTag::Custom, "from sinogram rows")?
                    }
                };
                if v.len() != geo.n_full_views || v.indices() != s.view_indices {
                    return Err(CliError::Mismatch("sampling vector does not match the sinogram rows".into()));
                }
                let x = fbp(&s, geo)?;
                return Ok((x, Some(s), v));
            }
            Payload::Image(img) => {
                img.check_grid(geo)?;
                let v = from_file.or(header).ok_or_else(|| CliError::Usage("image input needs --sampling".into()))?;
                return Ok((img, None, v));
            }
        }
    }
    let v = from_file.ok_or_else(|| CliError::Usage("image input needs --sampling".into()))?;
    Ok((read_image(&args.input, geo)?, None, v))
}

fn context_pair(spec: &str, geo: &ScanGeometry, v: &SamplingVector, noise: &ivct_core::physics::NoiseModel, seed: u64) -> CliResult<(Image, Image)> {
    if let Some((a, b)) = spec.split_once(',') {
        return Ok((read_image(Path::new(a.trim()), geo)?, read_image(Path::new(b.trim()), geo)?));
    }
    let kind = match spec {
        "shepp-logan" | "shepp_logan" => PhantomKind::SheppLogan,
        "random-ellipses" | "random_ellipses" => PhantomKind::RandomEllipses,
        other => return Err(CliError::Usage(format!("unknown context {other:?}"))),
    };
    let root = Rng::new(seed);
    let phantom = make_phantom(kind, geo.image_size, geo.pixel_spacing, &mut root.fork(u64::MAX))?;
    let sino = add_noise(&forward_project_full(&phantom, geo)?, noise, &mut root.fork(1))?;
    Ok((fbp(&reduce_sinogram(&sino, v)?, geo)?, fbp(&sino, geo)?))
}

fn stack(images: &[&Image]) -> CliResult<Tensor<f32>> {
    let n = images[0].size;
    let data = images.iter().flat_map(|i| i.data.iter().map(|&v| v as f32)).collect();
    Ok(Tensor::from_vec(&[1, images.len(), n, n], data).map_err(ivct_core::Error::from)?)
}

pub fn run(args: &ReconstructArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    let geo = cfg.geometry()?;
    let loaded = load_proct(&args.ckpt)?;
    let mc = loaded.model.config();
    if mc.n_full_views != geo.n_full_views || mc.image_size != geo.image_size {
        return Err(CliError::Mismatch(format!(
            "checkpoint expects {} views at {} px, geometry has {} views at {} px",
            mc.n_full_views, mc.image_size, geo.n_full_views, geo.image_size
        )));
    }
    let (x, sino, v) = read_input(args, &geo)?;
    if v.len() != mc.n_full_views {
        return Err(CliError::Mismatch(format!("sampling vector has {} entries, checkpoint expects {}", v.len(), mc.n_full_views)));
    }
    let (ci, cf) = context_pair(&args.context, &geo, &v, &cfg.noise, args.seed)?;
    let xt = stack(&[&x])?;
    let ctx = stack(&[&ci, &cf])?;
    let vf = v.as_f64();
    let y = ivct_tensor::no_grad(|| loaded.model.forward(&xt, &ctx, &vf))?;
    let y = Image::from_tensor(&y, geo.pixel_spacing)?;

    create_dir(&args.out)?;
    let mut outputs = vec![("output", y)];
    if args.dual == Switch::On {
        let path = args.dual_ckpt.as_ref().ok_or_else(|| CliError::Usage("--dual on needs --dual-ckpt".into()))?;
        let sino = sino.ok_or_else(|| CliError::Usage("--dual on needs a sinogram input".into()))?;
        let dual = load_dual(path)?;
        dual.check_proct(&loaded.checksum)?;
        let zf = zero_fill(&sino, geo.n_full_views)?;
        let shape = [1, 1, geo.n_full_views, geo.n_detectors];
        let as_f32 = |d: &[f64]| Tensor::from_vec(&shape, d.iter().map(|&x| x as f32).collect()).map_err(ivct_core::Error::from);
        let zf = as_f32(&zf.data)?;
        let mask = as_f32(&mask_matrix(&v, geo.n_detectors))?;
        let op = Arc::new(FbpOperator::new(&geo, &(0..geo.n_full_views).collect::<Vec<_>>())?);
        let inputs = DualInputs {
            x: &xt,
            ctx: &ctx,
            v: &vf,
            zero_filled: &zf,
            mask: &mask,
        };
        let out = ivct_tensor::no_grad(|| {
            dual_forward(&inputs, (&loaded.model.net, &frozen(&loaded.model.params)), (&dual.net, &dual.params), &op)
        })?;
        outputs.push(("sino_branch", Image::from_tensor(&out.sino_image, geo.pixel_spacing)?));
        outputs.push(("fused", Image::from_tensor(&out.fused, geo.pixel_spacing)?));
    }
    outputs.push(("input", x));

    let target = match &args.target {
        Some(p) => Some(read_image(p, &geo)?),
        None => None,
    };
    let mut report = String::new();
    for (name, img) in &outputs {
        let mut file = IvctFile::image(img.clone(), &geo);
        file.sampling = Some(v.clone());
        write_ivct(&args.out.join(format!("{name}.ivct")), &file)?;
        save_gray(&args.out.join(format!("{name}.png")), img, 0.0, 1.0)?;
        if let Some(t) = &target {
            let p = psnr(&img.clamped().data, &t.clamped().data, 1.0)?;
            report.push_str(&format!("{name} psnr={p}\n"));
        }
    }
    if !report.is_empty() {
        print!("{report}");
        write_text(&args.out.join("metrics.txt"), &report)?;
    }
    Ok(())
}

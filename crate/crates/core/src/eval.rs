//! Held-out evaluation: per-setting PSNR/SSIM means for the FBP input and
//! every method a reconstructor provides, written as CSV.
//!
//! Report CSV: `# key=value` metadata lines, then
//! `scenario,setting,method,psnr_mean,ssim_mean,count`. The per-image file
//! has `scenario,setting,method,image,psnr,ssim`.

use std::collections::BTreeMap;
use std::path::Path;

use ivct_tensor::Rng;

use crate::error::{Error, Result};
use crate::metrics::{psnr, ssim};
use crate::model::Proct;
use crate::physics::Image;
use crate::sampling::Setting;
use crate::training::data::{stack_batch, Example, ExampleSource};

pub const FBP_METHOD: &str = "fbp";

/// Produces one image per method for every example of a batch.
pub trait Reconstructor {
    fn methods(&self) -> Vec<String>;
    /// `out[m][i]` is method `m` on example `i`.
    fn reconstruct(&mut self, examples: &[Example]) -> Result<Vec<Vec<Image>>>;
}

/// Splits an `[N, 1, H, W]` tensor into images.
pub fn split_images<F: ivct_tensor::Float>(t: &ivct_tensor::Tensor<F>, pixel_spacing: f64) -> Result<Vec<Image>> {
    let s = t.shape();
    if s.len() != 4 || s[1] != 1 || s[2] != s[3] {
        return Err(Error::Shape(format!("expected [N, 1, H, H], got {s:?}")));
    }
    let n = s[2] * s[3];
    t.to_f64_vec()
        .chunks(n)
        .map(|c| Image::new(s[2], pixel_spacing, c.to_vec()))
        .collect()
}

pub struct ProctReconstructor<'a> {
    pub model: &'a Proct<f32>,
}

impl Reconstructor for ProctReconstructor<'_> {
    fn methods(&self) -> Vec<String> {
        vec!["proct".into()]
    }

    fn reconstruct(&mut self, examples: &[Example]) -> Result<Vec<Vec<Image>>> {
        let batch = stack_batch::<f32>(examples)?;
        let v = examples[0].v.as_f64();
        let out = ivct_tensor::no_grad(|| self.model.forward(&batch.x, &batch.ctx, &v))?;
        Ok(vec![split_images(&out, examples[0].x.pixel_spacing)?])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageRecord {
    pub scenario: String,
    pub setting: String,
    pub method: String,
    pub image: usize,
    pub psnr: f64,
    pub ssim: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub scenario: String,
    pub setting: String,
    pub method: String,
    pub psnr_mean: f64,
    pub ssim_mean: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EvalReport {
    pub meta: BTreeMap<String, String>,
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub report: EvalReport,
    pub images: Vec<ImageRecord>,
}

/// Scores on the `[0, 1]` window both images are clamped to.
pub fn score(pred: &Image, target: &Image) -> Result<(f64, f64)> {
    let (p, t) = (pred.clamped(), target.clamped());
    Ok((psnr(&p.data, &t.data, 1.0)?, ssim(&p.data, &t.data)?))
}

/// Noise stream of one (setting, image) pair, independent of loop order.
pub fn example_rng(seed: u64, setting: usize, image: usize) -> Rng {
    Rng::new(seed).fork(((setting as u64) << 32) | image as u64)
}

pub fn evaluate(
    source: &mut ExampleSource,
    settings: &[Setting],
    recon: Option<&mut (dyn Reconstructor + '_)>,
    seed: u64,
    batch_size: usize,
) -> Result<Evaluation> {
    if source.is_empty() {
        return Err(Error::Invalid("no images to evaluate".into()));
    }
    if settings.is_empty() {
        return Err(Error::Invalid("no settings to evaluate".into()));
    }
    let mut recon = recon;
    let mut methods = vec![FBP_METHOD.to_string()];
    if let Some(r) = recon.as_deref() {
        methods.extend(r.methods());
    }
    let mut images = Vec::new();
    for (si, setting) in settings.iter().enumerate() {
        let v = setting.vector(&source.geo)?;
        let (scenario, label) = (setting.scenario().as_str().to_string(), setting.to_string());
        let indices: Vec<usize> = (0..source.len()).collect();
        for chunk in indices.chunks(batch_size.max(1)) {
            let examples = chunk
                .iter()
                .map(|&i| source.example(i, &v, &mut example_rng(seed, si, i)))
                .collect::<Result<Vec<_>>>()?;
            let mut outputs = vec![examples.iter().map(|e| e.x.clone()).collect::<Vec<_>>()];
            if let Some(r) = recon.as_deref_mut() {
                outputs.extend(r.reconstruct(&examples)?);
            }
            for (m, per_example) in methods.iter().zip(&outputs) {
                for ((&i, img), ex) in chunk.iter().zip(per_example).zip(&examples) {
                    let (p, s) = score(img, &ex.y)?;
                    images.push(ImageRecord {
                        scenario: scenario.clone(),
                        setting: label.clone(),
                        method: m.clone(),
                        image: i,
                        psnr: p,
                        ssim: s,
                    });
                }
            }
        }
    }
    let mut report = EvalReport::default();
    report.meta.insert("geometry".into(), source.geo.summary());
    report.meta.insert("seed".into(), seed.to_string());
    report.meta.insert("images".into(), source.len().to_string());
    report.rows = aggregate(&images, settings, &methods);
    Ok(Evaluation { report, images })
}

/// Means per (setting, method), in setting then method order.
pub fn aggregate(images: &[ImageRecord], settings: &[Setting], methods: &[String]) -> Vec<ReportRow> {
    let mut rows = Vec::new();
    for s in settings {
        let label = s.to_string();
        for m in methods {
            let sel: Vec<&ImageRecord> = images.iter().filter(|r| r.setting == label && &r.method == m).collect();
            if sel.is_empty() {
                continue;
            }
            let n = sel.len() as f64;
            rows.push(ReportRow {
                scenario: sel[0].scenario.clone(),
                setting: label.clone(),
                method: m.clone(),
                psnr_mean: sel.iter().map(|r| r.psnr).sum::<f64>() / n,
                ssim_mean: sel.iter().map(|r| r.ssim).sum::<f64>() / n,
                count: sel.len(),
            });
        }
    }
    rows
}

impl EvalReport {
    pub fn row(&self, setting: &str, method: &str) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.setting == setting && r.method == method)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.meta {
            out.push_str(&format!("# {k}={v}\n"));
        }
        out.push_str("scenario,setting,method,psnr_mean,ssim_mean,count\n");
        for r in &self.rows {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                r.scenario, r.setting, r.method, r.psnr_mean, r.ssim_mean, r.count
            ));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut meta = BTreeMap::new();
        let mut body = String::new();
        for line in text.lines() {
            match line.strip_prefix("# ") {
                Some(kv) => {
                    let (k, v) = kv.split_once('=').ok_or_else(|| Error::Invalid(format!("bad metadata line {line:?}")))?;
                    meta.insert(k.to_string(), v.to_string());
                }
                None => {
                    body.push_str(line);
                    body.push('\n');
                }
            }
        }
        let mut reader = csv::Reader::from_reader(body.as_bytes());
        let bad = |e: csv::Error| Error::Invalid(format!("report CSV: {e}"));
        let mut rows = Vec::new();
        for rec in reader.records() {
            let rec = rec.map_err(bad)?;
            if rec.len() != 6 {
                return Err(Error::Invalid(format!("report row has {} fields", rec.len())));
            }
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| Error::Invalid(format!("bad number {:?}", &rec[i])));
            rows.push(ReportRow {
                scenario: rec[0].to_string(),
                setting: rec[1].to_string(),
                method: rec[2].to_string(),
                psnr_mean: num(3)?,
                ssim_mean: num(4)?,
                count: rec[5].parse().map_err(|_| Error::Invalid(format!("bad count {:?}", &rec[5])))?,
            });
        }
        Ok(EvalReport { meta, rows })
    }
}

pub fn images_to_csv(images: &[ImageRecord]) -> String {
    let mut out = String::from("scenario,setting,method,image,psnr,ssim\n");
    for r in images {
        out.push_str(&format!("{},{},{},{},{},{}\n", r.scenario, r.setting, r.method, r.image, r.psnr, r.ssim));
    }
    out
}

pub fn images_from_csv(text: &str) -> Result<Vec<ImageRecord>> {
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut out = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| Error::Invalid(format!("per-image CSV: {e}")))?;
        let num = |i: usize| rec[i].parse::<f64>().map_err(|_| Error::Invalid(format!("bad number {:?}", &rec[i])));
        out.push(ImageRecord {
            scenario: rec[0].to_string(),
            setting: rec[1].to_string(),
            method: rec[2].to_string(),
            image: rec[3].parse().map_err(|_| Error::Invalid("bad image index".into()))?,
            psnr: num(4)?,
            ssim: num(5)?,
        });
    }
    Ok(out)
}

/// Writes `report.csv` and `images.csv` into `dir`.
pub fn write_evaluation(dir: &Path, eval: &Evaluation) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, text) in [("report.csv", eval.report.to_csv()), ("images.csv", images_to_csv(&eval.images))] {
        let p = dir.join(name);
        std::fs::write(&p, text).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

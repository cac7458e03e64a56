//! `ivct train`: ProCT training, or the dual-domain branches on top of a
//! trained ProCT.

use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::Args;
use ivct_core::config::RunConfig;
use ivct_core::dual::DualTrainer;
use ivct_core::eval::{evaluate, write_evaluation, ProctReconstructor};
use ivct_core::training::data::{context_phantom, ExampleSource};
use ivct_core::training::{load_proct, LogRow, Trainer};

use crate::common::{create_dir, load_config, write_text, CliError, CliResult};

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Continue from a checkpoint written by an earlier run.
    #[arg(long, conflicts_with = "dual")]
    pub resume: Option<PathBuf>,
    /// Train the dual-domain branches against this frozen ProCT checkpoint.
    #[arg(long)]
    pub dual: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

pub const CHECKPOINT: &str = "checkpoint.ckpt";
pub const DUAL_CHECKPOINT: &str = "dual.ckpt";

fn append(path: &Path, lines: &[String], header: &str) -> CliResult<()> {
    let fresh = !path.exists();
    let io = |e: std::io::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    if fresh {
        writeln!(f, "{header}").map_err(io)?;
    }
    for l in lines {
        writeln!(f, "{l}").map_err(io)?;
    }
    Ok(())
}

/// Saves what is needed to inspect a diverged step and passes the error on.
fn dump(out: &Path, t: &Trainer, err: ivct_core::Error, recent: &[String]) -> CliError {
    let mut text = format!("error: {err}\nstep: {}\nepoch: {}\nlast rows:\n{}\n", t.step, t.epoch(), LogRow::HEADER);
    for r in recent {
        text.push_str(r);
        text.push('\n');
    }
    let _ = std::fs::write(out.join("diagnostic.txt"), text);
    let _ = t.save(&out.join("diverged.ckpt"));
    CliError::from(err)
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let cfg = load_config(args.config.as_deref())?;
    create_dir(&args.out)?;
    write_text(&args.out.join("config.toml"), &cfg.to_toml()?)?;
    match &args.dual {
        Some(proct) => run_dual(&cfg, proct, &args.out),
        None => run_proct(&cfg, args.resume.as_deref(), &args.out),
    }
}

fn run_proct(cfg: &RunConfig, resume: Option<&Path>, out: &Path) -> CliResult<()> {
    let mut t = match resume {
        Some(path) => Trainer::resume(cfg, path)?,
        None => Trainer::new(cfg)?,
    };
    let log = out.join("log.csv");
    if resume.is_none() && log.exists() {
        std::fs::remove_file(&log).map_err(|e| CliError::Io(format!("{}: {e}", log.display())))?;
    }
    while !t.finished() {
        let mut rows = Vec::new();
        let mut failure = None;
        let epoch = t.epoch();
        while !t.finished() && t.epoch() == epoch {
            match t.step() {
                Ok(r) => rows.push(r.csv()),
                Err(e) => {
                    failure = Some(e);
                    break;
                }
            }
        }
        append(&log, &rows, LogRow::HEADER)?;
        if let Some(e) = failure {
            let recent = &rows[rows.len().saturating_sub(10)..];
            return Err(dump(out, &t, e, recent));
        }
        t.save(&out.join(CHECKPOINT))?;
        let last = rows.last().map(String::as_str).unwrap_or("-");
        println!("epoch {epoch} done, step {}: {last}", t.step);
    }

    let phantom = context_phantom(&cfg.data, &t.geo)?;
    let mut src = ExampleSource::new(&t.geo, cfg.noise, t.holdout.clone(), &phantom)?;
    let settings = cfg.plan.listed_settings();
    if src.is_empty() || settings.is_empty() {
        return Ok(());
    }
    let mut recon = ProctReconstructor { model: &t.model };
    let ev = evaluate(&mut src, &settings, Some(&mut recon), cfg.plan.seed, cfg.plan.batch_size)?;
    write_evaluation(&out.join("summary"), &ev)?;
    for r in &ev.report.rows {
        println!("{:<12} {:<6} psnr {:.2} ssim {:.4}", r.setting, r.method, r.psnr_mean, r.ssim_mean);
    }
    Ok(())
}

fn run_dual(cfg: &RunConfig, proct: &Path, out: &Path) -> CliResult<()> {
    let loaded = load_proct(proct)?;
    let mut t = DualTrainer::new(cfg, loaded.model, loaded.checksum)?;
    let mut rows = Vec::new();
    while !t.finished() {
        let r = t.step()?;
        if r.step % 20 == 0 {
            println!("dual step {}: loss {:.5}", r.step, r.loss);
        }
        rows.push(r.csv());
    }
    let log = out.join("dual_log.csv");
    if log.exists() {
        std::fs::remove_file(&log).map_err(|e| CliError::Io(format!("{}: {e}", log.display())))?;
    }
    append(&log, &rows, ivct_core::dual::DualLogRow::HEADER)?;
    t.save(&out.join(DUAL_CHECKPOINT))?;
    Ok(())
}

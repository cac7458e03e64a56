//! Grayscale previews, side-by-side panels, profile plots and dataset
//! loading through the `image` crate.

use std::path::{Path, PathBuf};

use image::{imageops, GrayImage, ImageBuffer, ImageReader, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};
use crate::io::files::read_ivct;
use crate::physics::Image;

fn to_gray(img: &Image, lo: f64, hi: f64) -> GrayImage {
    let n = img.size as u32;
    let scale = if hi > lo { 255.0 / (hi - lo) } else { 0.0 };
    GrayImage::from_fn(n, n, |c, r| {
        let v = img.at(r as usize, c as usize);
        Luma([((v - lo) * scale).round().clamp(0.0, 255.0) as u8])
    })
}

fn save(path: &Path, result: image::ImageResult<()>) -> Result<()> {
    result.map_err(|e| Error::format(path, e.to_string()))
}

/// Writes `img` windowed to `[lo, hi]` as 16-bit gray; the format follows
/// the extension (`.png` or `.pgm`).
pub fn save_gray(path: &Path, img: &Image, lo: f64, hi: f64) -> Result<()> {
    let n = img.size as u32;
    let scale = if hi > lo { 65535.0 / (hi - lo) } else { 0.0 };
    let out: ImageBuffer<Luma<u16>, Vec<u16>> = ImageBuffer::from_fn(n, n, |c, r| {
        let v = img.at(r as usize, c as usize);
        Luma([((v - lo) * scale).round().clamp(0.0, 65535.0) as u16])
    });
    save(path, out.save(path))
}

// 3x5 bitmap glyphs, one row per 3-bit group, top row first
fn glyph(ch: char) -> Option<[u8; 5]> {
    Some(match ch {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 7, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 1, 1],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        '.' => [0, 0, 0, 0, 2],
        '-' => [0, 0, 7, 0, 0],
        'd' => [1, 1, 7, 5, 7],
        'B' => [6, 5, 6, 5, 6],
        ' ' => [0; 5],
        _ => return None,
    })
}

/// Draws `text` with its top-left corner at `(x, y)`, `scale` pixels per
/// glyph dot. Characters without a glyph are skipped.
pub fn draw_text(canvas: &mut RgbImage, text: &str, x: u32, y: u32, scale: u32, color: Rgb<u8>) {
    for (i, ch) in text.chars().enumerate() {
        let Some(rows) = glyph(ch) else { continue };
        let x0 = x + i as u32 * 4 * scale;
        for (r, bits) in rows.iter().enumerate() {
            for c in 0..3 {
                if bits & (4 >> c) == 0 {
                    continue;
                }
                for dy in 0..scale {
                    for dx in 0..scale {
                        let (px, py) = (x0 + c * scale + dx, y + r as u32 * scale + dy);
                        if px < canvas.width() && py < canvas.height() {
                            canvas.put_pixel(px, py, color);
                        }
                    }
                }
            }
        }
    }
}

/// Images side by side on one window, each with an optional caption drawn
/// in its top-left corner.
pub fn save_panel(path: &Path, images: &[(&Image, Option<String>)], lo: f64, hi: f64) -> Result<()> {
    let n = images.first().map(|(i, _)| i.size as u32).ok_or_else(|| Error::Invalid("empty panel".into()))?;
    if images.iter().any(|(i, _)| i.size as u32 != n) {
        return Err(Error::Shape("panel images differ in size".into()));
    }
    let gap = 2;
    let width = images.len() as u32 * (n + gap) - gap;
    let mut canvas = RgbImage::from_pixel(width, n, Rgb([0, 0, 0]));
    let scale = (n / 64).max(1);
    for (k, (img, caption)) in images.iter().enumerate() {
        let x0 = k as u32 * (n + gap);
        let gray = to_gray(img, lo, hi);
        for (c, r, p) in gray.enumerate_pixels() {
            canvas.put_pixel(x0 + c, r, Rgb([p[0]; 3]));
        }
        if let Some(text) = caption {
            draw_text(&mut canvas, text, x0 + scale, scale, scale, Rgb([255, 220, 0]));
        }
    }
    save(path, canvas.save(path))
}

const PALETTE: [[u8; 3]; 6] = [[31, 119, 180], [255, 127, 14], [44, 160, 44], [214, 39, 40], [148, 103, 189], [140, 86, 75]];

fn draw_line(canvas: &mut RgbImage, (x0, y0): (f64, f64), (x1, y1): (f64, f64), color: Rgb<u8>) {
    let steps = ((x1 - x0).abs().max((y1 - y0).abs()).ceil() as usize).max(1);
    for s in 0..=steps {
        let t = s as f64 / steps as f64;
        let (x, y) = (x0 + t * (x1 - x0), y0 + t * (y1 - y0));
        for (dx, dy) in [(0, 0), (1, 0), (0, 1)] {
            let (px, py) = (x.round() as i64 + dx, y.round() as i64 + dy);
            if px >= 0 && py >= 0 && (px as u32) < canvas.width() && (py as u32) < canvas.height() {
                canvas.put_pixel(px as u32, py as u32, color);
            }
        }
    }
}

/// Line plot of `(x, y)` series, one color per series in order. Axis
/// extents are written as numbers at the corners.
pub fn save_profile_plot(path: &Path, series: &[Vec<(f64, f64)>]) -> Result<()> {
    let points: Vec<(f64, f64)> = series.iter().flatten().copied().filter(|(x, y)| x.is_finite() && y.is_finite()).collect();
    if points.is_empty() {
        return Err(Error::Invalid("nothing to plot".into()));
    }
    let (w, h, margin) = (640u32, 400u32, 40.0);
    let fold = |f: fn(f64, f64) -> f64, init: f64, pick: fn(&(f64, f64)) -> f64| points.iter().map(pick).fold(init, f);
    let (xmin, xmax) = (fold(f64::min, f64::INFINITY, |p| p.0), fold(f64::max, f64::NEG_INFINITY, |p| p.0));
    let (mut ymin, mut ymax) = (fold(f64::min, f64::INFINITY, |p| p.1), fold(f64::max, f64::NEG_INFINITY, |p| p.1));
    let pad = ((ymax - ymin) * 0.05).max(0.5);
    ymin -= pad;
    ymax += pad;
    let xspan = if xmax > xmin { xmax - xmin } else { 1.0 };
    let to_px = |(x, y): (f64, f64)| {
        (
            margin + (x - xmin) / xspan * (w as f64 - 2.0 * margin),
            h as f64 - margin - (y - ymin) / (ymax - ymin) * (h as f64 - 2.0 * margin),
        )
    };
    let mut canvas = RgbImage::from_pixel(w, h, Rgb([255, 255, 255]));
    let axis = Rgb([60, 60, 60]);
    let (left, bottom) = (margin, h as f64 - margin);
    draw_line(&mut canvas, (left, margin), (left, bottom), axis);
    draw_line(&mut canvas, (left, bottom), (w as f64 - margin, bottom), axis);
    for (k, s) in series.iter().enumerate() {
        let color = Rgb(PALETTE[k % PALETTE.len()]);
        let pts: Vec<(f64, f64)> = s.iter().map(|&p| to_px(p)).collect();
        for pair in pts.windows(2) {
            draw_line(&mut canvas, pair[0], pair[1], color);
        }
        for &(x, y) in &pts {
            draw_line(&mut canvas, (x - 3.0, y), (x + 3.0, y), color);
            draw_line(&mut canvas, (x, y - 3.0), (x, y + 3.0), color);
        }
        // legend swatch per series
        for dy in 0..8 {
            for dx in 0..16 {
                canvas.put_pixel(w - 40 + dx, 8 + k as u32 * 12 + dy, color);
            }
        }
    }
    let black = Rgb([0, 0, 0]);
    draw_text(&mut canvas, &format!("{ymax:.1}"), 2, margin as u32 - 12, 2, black);
    draw_text(&mut canvas, &format!("{ymin:.1}"), 2, bottom as u32 - 4, 2, black);
    draw_text(&mut canvas, &format!("{xmin}"), margin as u32, bottom as u32 + 6, 2, black);
    let xlabel = format!("{xmax}");
    draw_text(&mut canvas, &xlabel, w - margin as u32 - 8 * xlabel.len() as u32, bottom as u32 + 6, 2, black);
    save(path, canvas.save(path))
}

const DATASET_EXTENSIONS: [&str; 4] = ["png", "pgm", "pnm", "ivct"];

/// Grayscale images of a directory, sorted by file name, scaled to `[0, 1]`
/// and resampled to `size x size` when needed.
pub fn load_dataset(dir: &Path, size: usize, pixel_spacing: f64) -> Result<Vec<Image>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| DATASET_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::format(dir, "no images (png, pgm, ivct) in dataset directory"));
    }
    paths.iter().map(|p| load_image(p, size, pixel_spacing)).collect()
}

pub fn load_image(path: &Path, size: usize, pixel_spacing: f64) -> Result<Image> {
    if path.extension().is_some_and(|e| e == "ivct") {
        let img = read_ivct(path)?.into_image(path)?;
        if img.size != size {
            return Err(Error::format(path, format!("image is {0}x{0}, expected {size}x{size}", img.size)));
        }
        return Ok(img);
    }
    let decoded = ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .decode()
        .map_err(|e| Error::format(path, e.to_string()))?;
    let mut gray = decoded.to_luma16();
    if gray.width() as usize != size || gray.height() as usize != size {
        gray = imageops::resize(&gray, size as u32, size as u32, imageops::FilterType::Triangle);
    }
    let data = gray.pixels().map(|p| f64::from(p[0]) / 65535.0).collect();
    Image::new(size, pixel_spacing, data)
}

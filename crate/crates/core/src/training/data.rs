//! Training example synthesis: (X, Y, C, v) tuples from full-dose images.

use std::collections::HashMap;
use std::sync::Arc;

use ivct_tensor::{Float, Rng, Tensor};

use crate::config::DataSection;
use crate::error::{Error, Result};
use crate::io::load_dataset;
use crate::physics::{
    add_noise, forward_project_full, make_phantom, FbpOperator, Image, NoiseModel, PhantomKind, ScanGeometry, Sinogram,
};
use crate::sampling::{reduce_sinogram, SamplingVector};

#[derive(Debug, Clone)]
pub struct Example {
    /// Incomplete-view reconstruction.
    pub x: Image,
    /// Full-view reconstruction from the same noisy sinogram.
    pub y: Image,
    /// Context pair built from the phantom: incomplete, then full view.
    pub ctx_incomplete: Image,
    pub ctx_full: Image,
    pub v: SamplingVector,
    /// Noisy full-view sinogram behind `x` and `y`.
    pub sino: Sinogram,
}

/// Synthesizes examples and caches what does not depend on the draw: clean
/// sinograms and reconstruction operators.
pub struct ExampleSource {
    pub geo: ScanGeometry,
    pub noise: NoiseModel,
    images: Vec<Image>,
    clean: Vec<Option<Sinogram>>,
    phantom_clean: Sinogram,
    operators: HashMap<Vec<usize>, Arc<FbpOperator>>,
}

impl ExampleSource {
    pub fn new(geo: &ScanGeometry, noise: NoiseModel, images: Vec<Image>, phantom: &Image) -> Result<Self> {
        noise.validate()?;
        for img in &images {
            img.check_grid(geo)?;
        }
        Ok(ExampleSource {
            geo: geo.clone(),
            noise,
            clean: vec![None; images.len()],
            images,
            phantom_clean: forward_project_full(phantom, geo)?,
            operators: HashMap::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn image(&self, index: usize) -> &Image {
        &self.images[index]
    }

    pub fn operator(&mut self, views: &[usize]) -> Result<Arc<FbpOperator>> {
        if let Some(op) = self.operators.get(views) {
            return Ok(Arc::clone(op));
        }
        let op = Arc::new(FbpOperator::new(&self.geo, views)?);
        self.operators.insert(views.to_vec(), Arc::clone(&op));
        Ok(op)
    }

    pub fn clean_sinogram(&mut self, index: usize) -> Result<Sinogram> {
        if self.clean[index].is_none() {
            self.clean[index] = Some(forward_project_full(&self.images[index], &self.geo)?);
        }
        Ok(self.clean[index].clone().expect("cached above"))
    }

    fn reconstruct(&mut self, sino: &Sinogram) -> Result<Image> {
        let op = self.operator(&sino.view_indices)?;
        Image::for_geometry(&self.geo, op.apply(&sino.data))
    }

    /// Example for dataset image `index`. Noise for the image is drawn
    /// before noise for the phantom.
    pub fn example(&mut self, index: usize, v: &SamplingVector, rng: &mut Rng) -> Result<Example> {
        if index >= self.images.len() {
            return Err(Error::Invalid(format!("image {index} of {}", self.images.len())));
        }
        v.check_geometry(&self.geo)?;
        let clean = self.clean_sinogram(index)?;
        let sino = add_noise(&clean, &self.noise, rng)?;
        let ctx_sino = add_noise(&self.phantom_clean, &self.noise, rng)?;
        Ok(Example {
            x: self.reconstruct(&reduce_sinogram(&sino, v)?)?,
            y: self.reconstruct(&sino)?,
            ctx_incomplete: self.reconstruct(&reduce_sinogram(&ctx_sino, v)?)?,
            ctx_full: self.reconstruct(&ctx_sino)?,
            v: v.clone(),
            sino,
        })
    }
}

/// One-off example without caching.
pub fn make_example(
    full_image: &Image,
    v: &SamplingVector,
    geo: &ScanGeometry,
    noise: &NoiseModel,
    phantom: &Image,
    rng: &mut Rng,
) -> Result<Example> {
    let mut src = ExampleSource::new(geo, *noise, vec![full_image.clone()], phantom)?;
    src.example(0, v, rng)
}

/// Offset of held-out synthetic phantom streams from the training ones.
const HOLDOUT_STREAM: u64 = 1 << 32;

/// Training and held-out images. Synthetic phantoms use one forked stream
/// per image, so the training set does not depend on the held-out count.
pub fn datasets(data: &DataSection, geo: &ScanGeometry) -> Result<(Vec<Image>, Vec<Image>)> {
    let (size, spacing) = (geo.image_size, geo.pixel_spacing);
    if let Some(dir) = &data.dataset_dir {
        let mut all = load_dataset(dir, size, spacing)?;
        if all.len() <= data.n_holdout {
            return Err(Error::format(
                dir,
                format!("{} images cannot cover {} held-out images plus training", all.len(), data.n_holdout),
            ));
        }
        let holdout = all.split_off(all.len() - data.n_holdout);
        return Ok((all, holdout));
    }
    let root = Rng::new(data.seed);
    let make = |stream: u64| make_phantom(PhantomKind::RandomEllipses, size, spacing, &mut root.fork(stream));
    let train = (0..data.n_train as u64).map(make).collect::<Result<Vec<_>>>()?;
    let holdout = (0..data.n_holdout as u64).map(|i| make(HOLDOUT_STREAM + i)).collect::<Result<Vec<_>>>()?;
    Ok((train, holdout))
}

pub fn context_phantom(data: &DataSection, geo: &ScanGeometry) -> Result<Image> {
    make_phantom(data.context_phantom, geo.image_size, geo.pixel_spacing, &mut Rng::new(data.seed).fork(u64::MAX))
}

/// Network inputs for a batch sharing one sampling vector.
pub struct Batch<F: Float> {
    /// `[N, 1, H, W]`
    pub x: Tensor<F>,
    pub y: Tensor<F>,
    /// `[N, 2, H, W]`: incomplete then full phantom reconstruction.
    pub ctx: Tensor<F>,
}

pub fn stack_batch<F: Float>(examples: &[Example]) -> Result<Batch<F>> {
    let first = examples.first().ok_or_else(|| Error::Invalid("empty batch".into()))?;
    let n = first.x.size;
    if examples.iter().any(|e| e.v != first.v || e.x.size != n) {
        return Err(Error::Invalid("batch members must share size and sampling vector".into()));
    }
    let b = examples.len();
    let cast = |imgs: Vec<&Image>| -> Vec<F> { imgs.iter().flat_map(|i| i.data.iter().map(|&v| F::of(v))).collect() };
    let x = cast(examples.iter().map(|e| &e.x).collect());
    let y = cast(examples.iter().map(|e| &e.y).collect());
    let ctx = cast(examples.iter().flat_map(|e| [&e.ctx_incomplete, &e.ctx_full]).collect());
    Ok(Batch {
        x: Tensor::from_vec(&[b, 1, n, n], x)?,
        y: Tensor::from_vec(&[b, 1, n, n], y)?,
        ctx: Tensor::from_vec(&[b, 2, n, n], ctx)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use crate::physics::{make_geometry, shepp_logan, GeometryConfig};
    use crate::sampling::svct_vector;

    fn geo() -> ScanGeometry {
        make_geometry(&GeometryConfig {
            image_size: 32,
            pixel_spacing: 8.0,
            n_detectors: 64,
            n_full_views: 144,
            ..GeometryConfig::desk()
        })
        .unwrap()
    }

    #[test]
    fn full_vector_gives_identical_pair() {
        let g = geo();
        let img = shepp_logan(32, 8.0);
        let ex = make_example(&img, &SamplingVector::full(144), &g, &NoiseModel::default(), &img, &mut Rng::new(0)).unwrap();
        assert_eq!(ex.x, ex.y);
        assert_eq!(ex.ctx_incomplete, ex.ctx_full);
    }

    #[test]
    fn fewer_views_lower_psnr_and_seed_repeats() {
        let g = geo();
        let img = shepp_logan(32, 8.0);
        let phantom = img.clone();
        let mut src = ExampleSource::new(&g, NoiseModel::off(), vec![img], &phantom).unwrap();
        let mut prev = f64::INFINITY;
        for n in [72, 36, 18, 9] {
            let ex = src.example(0, &svct_vector(n, 144).unwrap(), &mut Rng::new(1)).unwrap();
            let p = psnr(&ex.x.data, &ex.y.data, 1.0).unwrap();
            assert!(p < prev, "{n} views: {p} dB");
            prev = p;
        }
        let v = svct_vector(18, 144).unwrap();
        let mut noisy = ExampleSource::new(&g, NoiseModel::default(), vec![phantom.clone()], &phantom).unwrap();
        let a = noisy.example(0, &v, &mut Rng::new(4)).unwrap();
        let b = noisy.example(0, &v, &mut Rng::new(4)).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.ctx_full, b.ctx_full);
        let batch = stack_batch::<f32>(&[a, b]).unwrap();
        assert_eq!(batch.ctx.shape(), &[2, 2, 32, 32]);
    }
}

//! Prompted dual-pathway hourglass transformer.
//!
//! The source pathway restores the incomplete-view image; the context
//! pathway carries a paired (incomplete, full) example through the same
//! stages and exchanges information with the source inside every mixer.
//! Prompts from the sampling vector scale every residual update, and a
//! prompted scalar gates the global residual, so a network whose prompts are
//! all zero returns its input unchanged.

use ivct_tensor::{Float, NormOutput, Rng, Tensor};

use crate::error::{Error, Result};
use crate::model::config::{ModelConfig, N_STAGES};
use crate::model::nn::{check_values, count_scalars, Conv, ConvUp, Init, Linear, ParamBuilder, ParamId, ParamSpec};
use crate::model::prompt::{modulate, StagePrompts, ViewPrompter};

/// Layer normalization whose removed mean/std come back through learned
/// per-channel maps.
#[derive(Debug, Clone)]
pub struct RescaledNorm {
    weight: ParamId,
    bias: ParamId,
    rescale: Linear,
    rebias: Linear,
}

/// Per-sample affine restore `x * scale + shift`, shapes `[N, C, 1, 1]`.
pub struct Restore<F: Float> {
    scale: Tensor<F>,
    shift: Tensor<F>,
}

impl<F: Float> Restore<F> {
    pub fn apply(&self, x: &Tensor<F>) -> Result<Tensor<F>> {
        Ok(x.mul(&self.scale)?.add(&self.shift)?)
    }
}

impl RescaledNorm {
    fn new<F: Float>(b: &mut ParamBuilder<F>, name: &str, c: usize) -> Self {
        b.scoped(name, |b| RescaledNorm {
            weight: b.add("weight", &[1, c, 1, 1], Init::Const(1.0)),
            bias: b.add("bias", &[1, c, 1, 1], Init::Zeros),
            rescale: Linear::with_bias(b, "rescale", 1, c, Init::Const(1.0)),
            rebias: Linear::new(b, "rebias", 1, c),
        })
    }

    fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<(Tensor<F>, Restore<F>)> {
        let NormOutput { normalized, mean, std } = x.rescaled_layer_norm(&p[self.weight], &p[self.bias])?;
        let (n, c) = (x.shape()[0], x.shape()[1]);
        let map = |l: &Linear, t: &Tensor<F>| -> Result<Tensor<F>> {
            Ok(l.forward(p, &t.reshape(&[n, 1])?)?.reshape(&[n, c, 1, 1])?)
        };
        Ok((
            normalized,
            Restore {
                scale: map(&self.rescale, &std)?,
                shift: map(&self.rebias, &mean)?,
            },
        ))
    }
}

#[derive(Debug, Clone)]
pub struct Attention {
    qk: Conv,
    heads: usize,
    window: usize,
}

impl Attention {
    /// Windowed multi-head attention of `v` with queries/keys from `f`.
    pub fn forward<F: Float>(&self, p: &[Tensor<F>], f: &Tensor<F>, v: &Tensor<F>) -> Result<Tensor<F>> {
        let c = v.shape()[1];
        let qk = self.qk.forward(p, f)?;
        let (q, layout) = qk.narrow(1, 0, c)?.window_partition(self.window)?;
        let (k, _) = qk.narrow(1, c, c)?.window_partition(self.window)?;
        let (vw, _) = v.window_partition(self.window)?;
        let (b, h, d, t) = (layout.count(), self.heads, c / self.heads, self.window * self.window);
        let tokens = |x: &Tensor<F>| -> Result<Tensor<F>> { Ok(x.reshape(&[b, h, d, t])?.permute(&[0, 1, 3, 2])?) };
        let scores = tokens(&q)?.matmul_t(&tokens(&k)?)?.mul_scalar(F::of(1.0 / (d as f64).sqrt()))?;
        let out = scores.softmax(3)?.matmul(&tokens(&vw)?)?;
        let out = out.permute(&[0, 1, 3, 2])?.reshape(&[b, c, self.window, self.window])?;
        Ok(out.window_merge(&layout)?)
    }
}

/// Contextual mixer: optional windowed attention on the source plus a
/// spatial/frequency interaction between the two pathways.
#[derive(Debug, Clone)]
pub struct Mixer {
    v_src: Conv,
    v_con: Conv,
    attention: Option<Attention>,
    depthwise: Conv,
    point_spat: Conv,
    /// Complex filter `[2C, H, W, 2]` applied in the Fourier domain.
    freq: ParamId,
    point_freq: Conv,
    conv_src: Conv,
    conv_con: Conv,
    proj: Conv,
}

impl Mixer {
    fn new<F: Float>(b: &mut ParamBuilder<F>, name: &str, c: usize, size: usize, attention: Option<(usize, usize)>) -> Self {
        b.scoped(name, |b| Mixer {
            v_src: Conv::new(b, "v_src", c, c, 1),
            v_con: Conv::new(b, "v_con", c, c, 1),
            attention: attention.map(|(heads, window)| Attention {
                qk: Conv::new(b, "qk", c, 2 * c, 1),
                heads,
                window,
            }),
            depthwise: Conv::depthwise(b, "depthwise", 2 * c, 3),
            point_spat: Conv::new(b, "point_spat", 2 * c, c, 1),
            freq: b.add("freq", &[2 * c, size, size, 2], Init::TruncNormal),
            point_freq: Conv::new(b, "point_freq", 2 * c, c, 1),
            conv_src: Conv::new(b, "conv_src", c, c, 1),
            conv_con: Conv::new(b, "conv_con", c, c, 1),
            proj: Conv::new(b, "proj", c, c, 1),
        })
    }

    /// Returns `(G, G~)` for normalized source/context features.
    pub fn forward<F: Float>(&self, p: &[Tensor<F>], f: &Tensor<F>, fc: &Tensor<F>) -> Result<(Tensor<F>, Tensor<F>)> {
        if f.shape() != fc.shape() {
            return Err(Error::Shape(format!("pathways disagree: {:?} vs {:?}", f.shape(), fc.shape())));
        }
        let v = self.v_src.forward(p, f)?;
        let vc = self.v_con.forward(p, fc)?;
        let cat = Tensor::concat(&[v.clone(), vc], 1)?;
        let spat = self.point_spat.forward(p, &self.depthwise.forward(p, &cat)?)?;
        let spectrum = cat.fft2()?.complex_mul(&p[self.freq])?;
        let freq = self.point_freq.forward(p, &spectrum.ifft2()?.real()?)?;
        let z = spat.add(&freq)?;
        let g_intr = self.conv_src.forward(p, &z)?.relu()?;
        let g_con = self.conv_con.forward(p, &z)?.relu()?;
        let fused = match &self.attention {
            Some(att) => att.forward(p, f, &v)?.add(&g_intr)?,
            None => g_intr,
        };
        Ok((self.proj.forward(p, &fused)?, g_con))
    }
}

#[derive(Debug, Clone)]
struct Mlp {
    fc1: Conv,
    fc2: Conv,
}

impl Mlp {
    fn new<F: Float>(b: &mut ParamBuilder<F>, name: &str, c: usize, hidden: usize) -> Self {
        b.scoped(name, |b| Mlp {
            fc1: Conv::new(b, "fc1", c, hidden, 1),
            fc2: Conv::new(b, "fc2", hidden, c, 1),
        })
    }

    fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>) -> Result<Tensor<F>> {
        self.fc2.forward(p, &self.fc1.forward(p, x)?.relu()?)
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    norm_src: RescaledNorm,
    norm_con: RescaledNorm,
    mixer: Mixer,
    mlp_norm_src: RescaledNorm,
    mlp_src: Mlp,
    /// Absent in the final block, whose context output is never read.
    mlp_con: Option<(RescaledNorm, Mlp)>,
}

impl Block {
    pub fn forward<F: Float>(
        &self,
        p: &[Tensor<F>],
        h: &Tensor<F>,
        hc: &Tensor<F>,
        prompt: &Tensor<F>,
        prompt_con: &Tensor<F>,
    ) -> Result<(Tensor<F>, Tensor<F>)> {
        let (n, restore) = self.norm_src.forward(p, h)?;
        let (nc, restore_c) = self.norm_con.forward(p, hc)?;
        let (g, gc) = self.mixer.forward(p, &n, &nc)?;
        let h = modulate(h, prompt, &restore.apply(&g)?)?;
        let hc = modulate(hc, prompt_con, &restore_c.apply(&gc)?)?;
        let (m, restore) = self.mlp_norm_src.forward(p, &h)?;
        let h = modulate(&h, prompt, &restore.apply(&self.mlp_src.forward(p, &m)?)?)?;
        let hc = match &self.mlp_con {
            Some((norm, mlp)) => {
                let (m, restore) = norm.forward(p, &hc)?;
                modulate(&hc, prompt_con, &restore.apply(&mlp.forward(p, &m)?)?)?
            }
            None => hc,
        };
        Ok((h, hc))
    }
}

/// Layer layout of the network; parameter values live outside.
#[derive(Debug, Clone)]
pub struct ProctNet {
    pub config: ModelConfig,
    embed_src: Conv,
    embed_con: Conv,
    stages: Vec<Vec<Block>>,
    down: Vec<(Conv, Conv)>,
    up: Vec<(ConvUp, ConvUp)>,
    skip: Vec<(Conv, Conv)>,
    unembed: Conv,
    pub prompter_src: ViewPrompter,
    pub prompter_con: ViewPrompter,
}

/// Prompts for both pathways.
#[derive(Debug, Clone)]
pub struct Prompts<F: Float> {
    pub src: StagePrompts<F>,
    pub con: StagePrompts<F>,
}

impl<F: Float> Prompts<F> {
    pub fn zeros(config: &ModelConfig) -> Self {
        Prompts {
            src: StagePrompts::zeros(&config.embed_dims, true),
            con: StagePrompts::zeros(&config.embed_dims, false),
        }
    }
}

impl ProctNet {
    pub fn build<F: Float>(config: &ModelConfig, b: &mut ParamBuilder<F>) -> Result<Self> {
        config.validate()?;
        let d = &config.embed_dims;
        let embed_src = Conv::new(b, "embed_src", 1, d[0], 3);
        let embed_con = Conv::new(b, "embed_con", 2, d[0], 3);
        let mut stages = Vec::with_capacity(N_STAGES);
        for s in 0..N_STAGES {
            let blocks = (0..config.n_blocks[s])
                .map(|i| {
                    let last = s == N_STAGES - 1 && i + 1 == config.n_blocks[s];
                    let attn = config
                        .block_has_attention(s, i)
                        .then_some((config.n_heads[s], config.window));
                    b.scoped(format!("stage{s}.block{i}"), |b| Block {
                        norm_src: RescaledNorm::new(b, "norm_src", d[s]),
                        norm_con: RescaledNorm::new(b, "norm_con", d[s]),
                        mixer: Mixer::new(b, "mixer", d[s], config.stage_size(s), attn),
                        mlp_norm_src: RescaledNorm::new(b, "mlp_norm_src", d[s]),
                        mlp_src: Mlp::new(b, "mlp_src", d[s], d[s] * config.mlp_ratio[s]),
                        mlp_con: (!last).then(|| {
                            (
                                RescaledNorm::new(b, "mlp_norm_con", d[s]),
                                Mlp::new(b, "mlp_con", d[s], d[s] * config.mlp_ratio[s]),
                            )
                        }),
                    })
                })
                .collect();
            stages.push(blocks);
        }
        let down = (0..2)
            .map(|i| {
                (
                    Conv::down(b, &format!("down{i}_src"), d[i], d[i + 1], 2),
                    Conv::down(b, &format!("down{i}_con"), d[i], d[i + 1], 2),
                )
            })
            .collect();
        // decoder stage 3 reads encoder stage 1, stage 4 reads stage 0
        let up = (0..2)
            .map(|i| {
                (
                    ConvUp::new(b, &format!("up{i}_src"), d[2 + i], d[3 + i], 2),
                    ConvUp::new(b, &format!("up{i}_con"), d[2 + i], d[3 + i], 2),
                )
            })
            .collect();
        let skip = (0..2)
            .map(|i| {
                (
                    Conv::new(b, &format!("skip{i}_src"), d[1 - i], d[3 + i], 1),
                    Conv::new(b, &format!("skip{i}_con"), d[1 - i], d[3 + i], 1),
                )
            })
            .collect();
        let unembed = Conv::new(b, "unembed", d[4], 1, 3);
        let prompter_src = b.scoped("prompter_src", |b| {
            ViewPrompter::new(b, config.n_full_views, &config.prompt_hidden, d, true)
        });
        let prompter_con = b.scoped("prompter_con", |b| {
            ViewPrompter::new(b, config.n_full_views, &config.prompt_hidden, d, false)
        });
        Ok(ProctNet {
            config: config.clone(),
            embed_src,
            embed_con,
            stages,
            down,
            up,
            skip,
            unembed,
            prompter_src,
            prompter_con,
        })
    }

    pub fn prompts<F: Float>(&self, p: &[Tensor<F>], v: &[f64]) -> Result<Prompts<F>> {
        Ok(Prompts {
            src: self.prompter_src.encode(p, v)?,
            con: self.prompter_con.encode(p, v)?,
        })
    }

    /// `x`: `[N, 1, H, W]` incomplete-view image; `ctx`: `[N, 2, H, W]`
    /// context pair.
    pub fn forward_with_prompts<F: Float>(
        &self,
        p: &[Tensor<F>],
        x: &Tensor<F>,
        ctx: &Tensor<F>,
        prompts: &Prompts<F>,
    ) -> Result<Tensor<F>> {
        let size = self.config.image_size;
        let xs = x.shape();
        if xs.len() != 4 || xs[1] != 1 || xs[2] != size || xs[3] != size {
            return Err(Error::Shape(format!("input {xs:?}, expected [N, 1, {size}, {size}]")));
        }
        if ctx.shape() != [xs[0], 2, size, size] {
            return Err(Error::Shape(format!("context {:?} does not match input {xs:?}", ctx.shape())));
        }
        let mut h = self.embed_src.forward(p, x)?;
        let mut hc = self.embed_con.forward(p, ctx)?;
        let mut skips = Vec::new();
        for (s, blocks) in self.stages.iter().enumerate() {
            if s >= 3 {
                let (up_s, up_c) = &self.up[s - 3];
                let (sk_s, sk_c) = &self.skip[s - 3];
                let (enc_s, enc_c): (Tensor<F>, Tensor<F>) = skips.pop().expect("encoder skip");
                h = up_s.forward(p, &h)?.add(&sk_s.forward(p, &enc_s)?)?;
                hc = up_c.forward(p, &hc)?.add(&sk_c.forward(p, &enc_c)?)?;
            }
            for block in blocks {
                (h, hc) = block.forward(p, &h, &hc, &prompts.src.stages[s], &prompts.con.stages[s])?;
            }
            if s < 2 {
                skips.push((h.clone(), hc.clone()));
                h = self.down[s].0.forward(p, &h)?;
                hc = self.down[s].1.forward(p, &hc)?;
            }
        }
        let residual = self.unembed.forward(p, &h)?;
        let gate = prompts.src.gate.as_ref().ok_or_else(|| Error::Shape("source prompts lack the gate".into()))?;
        let y = x.add(&gate.mul(&residual)?)?;
        if y.data().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network output".into()));
        }
        Ok(y)
    }

    pub fn forward<F: Float>(&self, p: &[Tensor<F>], x: &Tensor<F>, ctx: &Tensor<F>, v: &[f64]) -> Result<Tensor<F>> {
        let prompts = self.prompts(p, v)?;
        self.forward_with_prompts(p, x, ctx, &prompts)
    }
}

/// Architecture plus parameter values.
#[derive(Clone)]
pub struct Proct<F: Float> {
    pub net: ProctNet,
    pub specs: Vec<ParamSpec>,
    pub params: Vec<Tensor<F>>,
}

impl<F: Float> Proct<F> {
    pub fn init(config: &ModelConfig, rng: &mut Rng) -> Result<Self> {
        let mut b = ParamBuilder::new(rng);
        let net = ProctNet::build(config, &mut b)?;
        let (specs, params) = b.finish();
        Ok(Proct { net, specs, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.net.config
    }

    pub fn count_params(&self) -> usize {
        count_scalars(&self.specs)
    }

    pub fn with_params(&self, params: Vec<Tensor<F>>) -> Result<Self> {
        check_values(&self.specs, &params)?;
        Ok(Proct {
            net: self.net.clone(),
            specs: self.specs.clone(),
            params,
        })
    }

    pub fn forward(&self, x: &Tensor<F>, ctx: &Tensor<F>, v: &[f64]) -> Result<Tensor<F>> {
        self.net.forward(&self.params, x, ctx, v)
    }
}

impl<F: Float> std::fmt::Debug for Proct<F> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Proct")
            .field("config", &self.net.config.canonical())
            .field("params", &self.count_params())
            .finish()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ivct_tensor::gradcheck::check_directional;

    fn desk(size: usize) -> ModelConfig {
        ModelConfig::desk(36, size)
    }

    fn random(shape: &[usize], rng: &mut Rng) -> Tensor<f64> {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.normal()).collect()).unwrap()
    }

    fn sampling(n: usize) -> Vec<f64> {
        (0..n).map(|i| f64::from(i % 3 == 0)).collect()
    }

    // per-layer arithmetic, written without the builder
    fn closed_form_count(c: &ModelConfig) -> usize {
        let conv = |cin: usize, cout: usize, k: usize| cout * cin * k * k + cout;
        let lin = |i: usize, o: usize| o * i + o;
        let rln = |ch: usize| 2 * ch + 2 * lin(1, ch);
        let d = &c.embed_dims;
        let mut total = conv(1, d[0], 3) + conv(2, d[0], 3) + conv(d[4], 1, 3);
        for i in 0..2 {
            total += 2 * conv(d[i], d[i + 1], 2);
            total += 2 * (d[2 + i] * d[3 + i] * 4 + d[3 + i]);
            total += 2 * conv(d[1 - i], d[3 + i], 1);
        }
        for s in 0..N_STAGES {
            let ch = d[s];
            let side = c.image_size >> [0, 1, 2, 1, 0][s];
            let hidden = ch * c.mlp_ratio[s];
            let n = c.n_blocks[s];
            let n_attn = (c.attn_ratio[s] * n as f64).ceil() as usize;
            let mixer = 5 * conv(ch, ch, 1) + (2 * ch * 9 + 2 * ch) + 2 * conv(2 * ch, ch, 1) + 2 * ch * side * side * 2;
            let mlp = rln(ch) + conv(ch, hidden, 1) + conv(hidden, ch, 1);
            total += n * (2 * rln(ch) + mixer + 2 * mlp) + n_attn * conv(ch, 2 * ch, 1);
        }
        total -= rln(d[4]) + conv(d[4], d[4] * c.mlp_ratio[4], 1) + conv(d[4] * c.mlp_ratio[4], d[4], 1);
        let (h1, h2) = (c.prompt_hidden[0], c.prompt_hidden[1]);
        let trunk = lin(c.n_full_views, h1) + lin(h1, h2);
        let heads: usize = d.iter().map(|&ch| lin(h2, ch)).sum();
        total + 2 * (trunk + heads) + lin(h2, 1)
    }

    #[test]
    fn parameter_count_matches_closed_form() {
        for cfg in [desk(16), desk(64), ModelConfig::full(720, 64)] {
            let model = Proct::<f32>::init(&cfg, &mut Rng::new(3)).unwrap();
            assert_eq!(model.count_params(), closed_form_count(&cfg));
            let other = Proct::<f32>::init(&cfg, &mut Rng::new(9)).unwrap();
            assert_eq!(model.count_params(), other.count_params());
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = Proct::<f32>::init(&desk(16), &mut Rng::new(1)).unwrap();
        let b = Proct::<f32>::init(&desk(16), &mut Rng::new(1)).unwrap();
        for (x, y) in a.params.iter().zip(&b.params) {
            assert_eq!(x.data(), y.data());
        }
    }

    #[test]
    fn rejects_bad_heads() {
        let mut cfg = desk(16);
        cfg.n_heads[2] = 3;
        assert!(Proct::<f32>::init(&cfg, &mut Rng::new(0)).is_err());
    }

    #[test]
    fn zero_prompts_give_identity() {
        let cfg = desk(16);
        let mut rng = Rng::new(5);
        let model = Proct::<f64>::init(&cfg, &mut rng).unwrap();
        let zeros = Prompts::zeros(&cfg);
        for _ in 0..3 {
            let x = random(&[2, 1, 16, 16], &mut rng);
            let ctx = random(&[2, 2, 16, 16], &mut rng);
            let y = model.net.forward_with_prompts(&model.params, &x, &ctx, &zeros).unwrap();
            assert_eq!(y.data(), x.data());
        }
    }

    #[test]
    fn forward_shape_and_repeatability() {
        let cfg = desk(16);
        let mut rng = Rng::new(6);
        let model = Proct::<f32>::init(&cfg, &mut rng).unwrap();
        let x = Tensor::from_vec(&[1, 1, 16, 16], (0..256).map(|i| (i as f32 / 256.0).sin()).collect()).unwrap();
        let ctx = Tensor::<f32>::ones(&[1, 2, 16, 16]);
        let v = sampling(36);
        let y1 = model.forward(&x, &ctx, &v).unwrap();
        let y2 = model.forward(&x, &ctx, &v).unwrap();
        assert_eq!(y1.shape(), x.shape());
        assert_eq!(y1.data(), y2.data());
        assert!(model.forward(&x, &Tensor::ones(&[1, 2, 8, 8]), &v).is_err());
        assert!(model.forward(&x, &ctx, &v[..35]).is_err());
    }

    #[test]
    fn context_reaches_source() {
        let cfg = desk(16);
        let mut rng = Rng::new(7);
        let model = Proct::<f64>::init(&cfg, &mut rng).unwrap();
        let x = random(&[1, 1, 16, 16], &mut rng);
        let ctx = random(&[1, 2, 16, 16], &mut rng);
        let ctx2 = ctx.add_scalar(0.5).unwrap().mul_scalar(1.7).unwrap();
        let v = sampling(36);
        let a = model.forward(&x, &ctx, &v).unwrap();
        let b = model.forward(&x, &ctx2, &v).unwrap();
        let diff: f64 = a.data().iter().zip(b.data()).map(|(p, q)| (p - q).powi(2)).sum();
        assert!(diff > 0.0);

        // with the context value projections zeroed the context is invisible
        let mut p = model.params.clone();
        for (i, spec) in model.specs.iter().enumerate() {
            if spec.name.contains("v_con") {
                p[i] = Tensor::zeros(spec.shape.as_slice());
            }
        }
        let a = model.net.forward(&p, &x, &ctx, &v).unwrap();
        let b = model.net.forward(&p, &x, &ctx2, &v).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn attention_of_uniform_values_is_their_mean() {
        let mut rng = Rng::new(2);
        let mut b = ParamBuilder::<f64>::new(&mut rng);
        let att = Attention {
            qk: Conv::new(&mut b, "qk", 4, 8, 1),
            heads: 2,
            window: 8,
        };
        let p = b.finish().1;
        let f = random(&[1, 4, 8, 8], &mut Rng::new(4));
        // every token carries the same value vector
        let per_channel = [0.5, -1.0, 2.0, 0.25];
        let v = Tensor::from_vec(&[1, 4, 8, 8], per_channel.iter().flat_map(|&c| vec![c; 64]).collect()).unwrap();
        let out = att.forward(&p, &f, &v).unwrap();
        for (a, b) in out.data().iter().zip(v.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    fn te(e: Error) -> ivct_tensor::TensorError {
        ivct_tensor::TensorError::Invalid {
            op: "model",
            msg: e.to_string(),
        }
    }

    /// Fresh O(0.3) values: with the 0.02 init most pre-activations sit so
    /// close to ReLU kinks that a central difference straddles them.
    fn spread(params: &[Tensor<f64>], rng: &mut Rng) -> Vec<Tensor<f64>> {
        params.iter().map(|t| random(t.shape(), rng).mul_scalar(0.3).unwrap()).collect()
    }

    fn probe(y: &Tensor<f64>, rng: &mut Rng) -> Tensor<f64> {
        random(y.shape(), rng)
    }

    #[test]
    fn mixer_gradients_match_finite_differences() {
        let mut rng = Rng::new(11);
        let mut b = ParamBuilder::<f64>::new(&mut rng);
        let mixer = Mixer::new(&mut b, "m", 4, 8, Some((2, 4)));
        let params = spread(&b.finish().1, &mut rng);
        let f = random(&[1, 4, 8, 8], &mut rng);
        let fc = random(&[1, 4, 8, 8], &mut rng);
        let w1 = probe(&f, &mut rng);
        let w2 = probe(&f, &mut rng);
        let n = params.len();
        let mut inputs = params;
        inputs.push(f);
        inputs.push(fc);
        let func = |t: &[Tensor<f64>]| {
            let (g, gc) = mixer.forward(&t[..n], &t[n], &t[n + 1]).map_err(te)?;
            g.mul(&w1)?.sum()?.add(&gc.mul(&w2)?.sum()?)
        };
        let errs = check_directional(&func, &inputs, 1e-6, 3, &mut rng).unwrap();
        for (i, e) in errs.iter().enumerate() {
            assert!(*e < 1e-4, "input {i}: {e}");
        }
    }

    #[test]
    fn full_model_gradients_match_finite_differences() {
        let cfg = desk(16);
        let mut rng = Rng::new(12);
        let model = Proct::<f64>::init(&cfg, &mut rng).unwrap();
        let x = random(&[1, 1, 16, 16], &mut rng);
        let ctx = random(&[1, 2, 16, 16], &mut rng);
        let w = probe(&x, &mut rng);
        let v = sampling(36);
        let func = |t: &[Tensor<f64>]| {
            let y = model.net.forward(t, &x, &ctx, &v).map_err(te)?;
            y.mul(&w)?.sum()
        };
        let params = spread(&model.params, &mut rng);
        let errs = check_directional(&func, &params, 1e-6, 1, &mut rng).unwrap();
        for (i, e) in errs.iter().enumerate() {
            assert!(*e < 1e-3, "{}: {e}", model.specs[i].name);
        }
    }
}

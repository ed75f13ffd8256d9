//! Single-scale image encoder stub and the feature-pyramid adapter that
//! expands its stride-16 embedding into stride {32, 16, 8, 4} maps, then
//! merges them coarse-to-fine into one stride-4 feature map.
//!
//! The encoder is a deterministic seed-initialized stand-in for a large
//! pretrained backbone: 16x16 patchify, linear embedding, fixed sinusoidal
//! position codes, and K pre-norm self-attention + MLP blocks.

use crate::error::{Error, Result};
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::{
    conv2d, layer_norm_rows, matmul, relu, resample, softmax_rows, ConvKernel, LinearMap,
    ResampleMode, Tensor,
};

/// Patch edge of the encoder stub; the embedding stride.
pub const PATCH: usize = 16;

/// Encoder and pyramid widths. Defaults are desk-scale.
#[derive(Debug, Clone, PartialEq)]
pub struct AdfpnConfig {
    /// Token width D of the embedding.
    pub embed_dim: usize,
    /// Number of pre-norm encoder blocks.
    pub depth: usize,
    /// Hidden width of each block's MLP.
    pub mlp_hidden: usize,
    /// Channel count of every pyramid level after the lateral 1x1 convs.
    pub fpn_channels: usize,
    /// Channel count of the merged stride-4 output.
    pub out_channels: usize,
    /// Adds fixed sinusoidal position codes to the patch tokens.
    pub use_pos_codes: bool,
}

impl Default for AdfpnConfig {
    fn default() -> Self {
        AdfpnConfig {
            embed_dim: 64,
            depth: 2,
            mlp_hidden: 128,
            fpn_channels: 32,
            out_channels: 32,
            use_pos_codes: true,
        }
    }
}

/// Stride-16 token grid produced by [`encode_stub`].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageEmbedding {
    /// (H/16, W/16, D) map.
    pub map: Tensor,
    /// Source image (H, W).
    pub source_dims: (usize, usize),
}

/// One pre-norm transformer block: single-head self-attention + MLP, both
/// with residual connections.
#[derive(Debug, Clone)]
pub struct EncoderBlock {
    pub wq: LinearMap,
    pub wk: LinearMap,
    pub wv: LinearMap,
    pub wo: LinearMap,
    pub mlp1: LinearMap,
    pub mlp2: LinearMap,
}

impl EncoderBlock {
    fn seeded(dim: usize, hidden: usize, rng: &mut SplitMix64) -> Result<EncoderBlock> {
        Ok(EncoderBlock {
            wq: LinearMap::seeded(dim, dim, rng)?,
            wk: LinearMap::seeded(dim, dim, rng)?,
            wv: LinearMap::seeded(dim, dim, rng)?,
            wo: LinearMap::seeded(dim, dim, rng)?,
            mlp1: LinearMap::seeded(hidden, dim, rng)?,
            mlp2: LinearMap::seeded(dim, hidden, rng)?,
        })
    }

    /// tokens: (n, D) rows -> (n, D) rows.
    fn forward(&self, tokens: &Tensor) -> Result<Tensor> {
        let normed = layer_norm_rows(tokens)?;
        let q = self.wq.apply_rows(&normed)?;
        let k = self.wk.apply_rows(&normed)?;
        let v = self.wv.apply_rows(&normed)?;
        let scale = 1.0 / (self.wq.out_dim() as f64).sqrt();
        let logits = matmul(&q, &k.transpose()?)?.scale(scale);
        let att = softmax_rows(&logits)?;
        let mixed = self.wo.apply_rows(&matmul(&att, &v)?)?;
        let after_att = tokens.add(&mixed)?;
        let normed2 = layer_norm_rows(&after_att)?;
        let mlp = self.mlp2.apply_rows(&relu(&self.mlp1.apply_rows(&normed2)?))?;
        after_att.add(&mlp)
    }
}

/// All weights of the encoder stub and pyramid, drawn deterministically
/// from one seed.
#[derive(Debug, Clone)]
pub struct AdfpnParams {
    pub cfg: AdfpnConfig,
    /// (16*16*3) -> D patch embedding.
    pub patch_embed: LinearMap,
    pub blocks: Vec<EncoderBlock>,
    /// D -> D transposed convs lifting stride 16 -> 8 and 8 -> 4.
    pub tconv_s8: ConvKernel,
    pub tconv_s4a: ConvKernel,
    pub tconv_s4b: ConvKernel,
    /// 1x1 lateral convs to `fpn_channels`, one per level (strides 32,16,8,4).
    pub laterals: [ConvKernel; 4],
    /// 3x3 smoothing convs applied after each coarse-to-fine addition; the
    /// last one projects to `out_channels`.
    pub smooths: [ConvKernel; 3],
}

impl AdfpnParams {
    pub fn seeded(cfg: AdfpnConfig, seed: u64) -> Result<AdfpnParams> {
        let mut rng = SplitMix64::new(derive_seed(seed, &[0x0adf]));
        let d = cfg.embed_dim;
        let cf = cfg.fpn_channels;
        let patch_embed = LinearMap::seeded(d, PATCH * PATCH * 3, &mut rng)?;
        let blocks = (0..cfg.depth)
            .map(|_| EncoderBlock::seeded(d, cfg.mlp_hidden, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let tconv_s8 = ConvKernel::seeded(d, d, 2, 2, 1, 0, &mut rng)?;
        let tconv_s4a = ConvKernel::seeded(d, d, 2, 2, 1, 0, &mut rng)?;
        let tconv_s4b = ConvKernel::seeded(d, d, 2, 2, 1, 0, &mut rng)?;
        let lateral = |rng: &mut SplitMix64| ConvKernel::seeded(cf, d, 1, 1, 1, 0, rng);
        let laterals = [
            lateral(&mut rng)?,
            lateral(&mut rng)?,
            lateral(&mut rng)?,
            lateral(&mut rng)?,
        ];
        let smooths = [
            ConvKernel::seeded(cf, cf, 3, 3, 1, 1, &mut rng)?,
            ConvKernel::seeded(cf, cf, 3, 3, 1, 1, &mut rng)?,
            ConvKernel::seeded(cfg.out_channels, cf, 3, 3, 1, 1, &mut rng)?,
        ];
        Ok(AdfpnParams {
            cfg,
            patch_embed,
            blocks,
            tconv_s8,
            tconv_s4a,
            tconv_s4b,
            laterals,
            smooths,
        })
    }
}

/// Four maps at strides [32, 16, 8, 4] with a common channel count.
#[derive(Debug, Clone, PartialEq)]
pub struct FeaturePyramid {
    /// Ordered coarse to fine: strides 32, 16, 8, 4.
    pub levels: [Tensor; 4],
}

impl FeaturePyramid {
    pub const STRIDES: [usize; 4] = [32, 16, 8, 4];
}

/// Fixed sinusoidal position code for token `pos` of width `dim`.
fn position_code(pos: usize, dim: usize) -> Vec<f64> {
    let mut code = vec![0.0; dim];
    for i in 0..dim / 2 {
        let freq = 1.0 / 10000f64.powf(2.0 * i as f64 / dim as f64);
        let angle = pos as f64 * freq;
        code[2 * i] = angle.sin();
        code[2 * i + 1] = angle.cos();
    }
    if dim % 2 == 1 {
        let freq = 1.0 / 10000f64.powf((dim - 1) as f64 / dim as f64);
        code[dim - 1] = (pos as f64 * freq).sin();
    }
    code
}

/// Cuts the image into 16x16 patches (row-major) and flattens each into a
/// (y, x, channel)-ordered row of 768 values.
fn patchify(image: &Tensor) -> Result<Tensor> {
    let (h, w, c) = (image.dims()[0], image.dims()[1], image.dims()[2]);
    let (gh, gw) = (h / PATCH, w / PATCH);
    let mut rows = vec![0.0; gh * gw * PATCH * PATCH * c];
    let row_len = PATCH * PATCH * c;
    for py in 0..gh {
        for px in 0..gw {
            let base = (py * gw + px) * row_len;
            for dy in 0..PATCH {
                for dx in 0..PATCH {
                    for ch in 0..c {
                        rows[base + (dy * PATCH + dx) * c + ch] =
                            image.at3(py * PATCH + dy, px * PATCH + dx, ch);
                    }
                }
            }
        }
    }
    Tensor::new(vec![gh * gw, row_len], rows)
}

/// Embeds an (H, W, 3) image into a stride-16 token grid.
pub fn encode_stub(image: &Tensor, params: &AdfpnParams) -> Result<ImageEmbedding> {
    if image.ndim() != 3 || image.dims()[2] != 3 {
        return Err(Error::shape(format!(
            "encode_stub: expected (h, w, 3) image, got {:?}",
            image.dims()
        )));
    }
    let (h, w) = (image.dims()[0], image.dims()[1]);
    if h % PATCH != 0 || w % PATCH != 0 || h == 0 || w == 0 {
        return Err(Error::shape(format!(
            "encode_stub: dims {h}x{w} must be positive multiples of {PATCH}"
        )));
    }
    let mut tokens = params.patch_embed.apply_rows(&patchify(image)?)?;
    let d = params.cfg.embed_dim;
    if params.cfg.use_pos_codes {
        let n = tokens.dims()[0];
        for t in 0..n {
            let code = position_code(t, d);
            for (j, cv) in code.iter().enumerate() {
                tokens.data_mut()[t * d + j] += cv;
            }
        }
    }
    for block in &params.blocks {
        tokens = block.forward(&tokens)?;
    }
    Ok(ImageEmbedding {
        map: tokens.unflatten_spatial(h / PATCH, w / PATCH)?,
        source_dims: (h, w),
    })
}

/// Expands a stride-16 embedding into the four-level pyramid:
/// maxpool2 (32), identity (16), one tconv2 (8), two tconv2 (4), each
/// followed by its 1x1 lateral.
pub fn build_pyramid(e: &ImageEmbedding, params: &AdfpnParams) -> Result<FeaturePyramid> {
    let s32 = resample(&e.map, &ResampleMode::MaxPool2)?;
    let s16 = e.map.clone();
    let s8 = resample(&e.map, &ResampleMode::TConv2(params.tconv_s8.clone()))?;
    let s4 = resample(
        &resample(&e.map, &ResampleMode::TConv2(params.tconv_s4a.clone()))?,
        &ResampleMode::TConv2(params.tconv_s4b.clone()),
    )?;
    Ok(FeaturePyramid {
        levels: [
            conv2d(&s32, &params.laterals[0])?,
            conv2d(&s16, &params.laterals[1])?,
            conv2d(&s8, &params.laterals[2])?,
            conv2d(&s4, &params.laterals[3])?,
        ],
    })
}

/// Merges the pyramid coarse-to-fine: repeatedly upsample the running map,
/// add the next finer level, and smooth with a 3x3 conv. Emits the
/// stride-4 image feature map.
pub fn merge_pyramid(p: &FeaturePyramid, params: &AdfpnParams) -> Result<Tensor> {
    let mut acc = p.levels[0].clone();
    for (i, smooth) in params.smooths.iter().enumerate() {
        let up = resample(&acc, &ResampleMode::NearestUp2)?;
        acc = conv2d(&up.add(&p.levels[i + 1])?, smooth)?;
    }
    Ok(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        Tensor::randn(vec![h, w, 3], 1.0, &mut rng).unwrap()
    }

    fn identity_params(cfg: AdfpnConfig, seed: u64) -> AdfpnParams {
        // Seeded encoder, but pass-through pyramid pieces: uniform tconv
        // taps and identity laterals/smooths (requires D == C_f == C_i).
        let mut p = AdfpnParams::seeded(cfg, seed).unwrap();
        let d = p.cfg.embed_dim;
        let mut w = Tensor::zeros(vec![d, d, 2, 2]).unwrap();
        for c in 0..d {
            for t in 0..4 {
                w.data_mut()[(c * d + c) * 4 + t] = 1.0;
            }
        }
        let uniform = ConvKernel::new(w, None, 1, 0).unwrap();
        p.tconv_s8 = uniform.clone();
        p.tconv_s4a = uniform.clone();
        p.tconv_s4b = uniform;
        for l in p.laterals.iter_mut() {
            *l = ConvKernel::identity_1x1(d).unwrap();
        }
        let mut center = Tensor::zeros(vec![d, d, 3, 3]).unwrap();
        for c in 0..d {
            center.data_mut()[((c * d + c) * 3 + 1) * 3 + 1] = 1.0;
        }
        let id3 = ConvKernel::new(center, None, 1, 1).unwrap();
        p.smooths = [id3.clone(), id3.clone(), id3];
        p
    }

    #[test]
    fn embedding_shape_contract() {
        let params = AdfpnParams::seeded(AdfpnConfig::default(), 3).unwrap();
        let e = encode_stub(&image(64, 64, 1), &params).unwrap();
        assert_eq!(e.map.dims(), &[4, 4, 64]);
        assert_eq!(e.source_dims, (64, 64));
    }

    #[test]
    fn embedding_rejects_indivisible() {
        let params = AdfpnParams::seeded(AdfpnConfig::default(), 3).unwrap();
        assert!(matches!(
            encode_stub(&image(60, 64, 1), &params),
            Err(Error::Shape(_))
        ));
    }

    #[test]
    fn embedding_deterministic() {
        let img = image(64, 96, 9);
        let a = encode_stub(&img, &AdfpnParams::seeded(AdfpnConfig::default(), 5).unwrap()).unwrap();
        let b = encode_stub(&img, &AdfpnParams::seeded(AdfpnConfig::default(), 5).unwrap()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn patch_permutation_equivariance_without_pos_codes() {
        let cfg = AdfpnConfig {
            use_pos_codes: false,
            ..AdfpnConfig::default()
        };
        let params = AdfpnParams::seeded(cfg, 11).unwrap();
        let img = image(32, 64, 21); // 2x4 patch grid
        // Swap patches (0,0) and (1,2) -> token indices 0 and 6.
        let mut swapped = img.clone();
        for dy in 0..PATCH {
            for dx in 0..PATCH {
                for c in 0..3 {
                    let a = img.at3(dy, dx, c);
                    let b = img.at3(PATCH + dy, 2 * PATCH + dx, c);
                    swapped.set3(dy, dx, c, b);
                    swapped.set3(PATCH + dy, 2 * PATCH + dx, c, a);
                }
            }
        }
        let e1 = encode_stub(&img, &params).unwrap().map.flatten_spatial().unwrap();
        let e2 = encode_stub(&swapped, &params)
            .unwrap()
            .map
            .flatten_spatial()
            .unwrap();
        let d = params.cfg.embed_dim;
        let n = e1.dims()[0];
        let perm = |t: usize| match t {
            0 => 6,
            6 => 0,
            other => other,
        };
        for t in 0..n {
            for j in 0..d {
                let lhs = e2.at2(t, j);
                let rhs = e1.at2(perm(t), j);
                assert!(
                    (lhs - rhs).abs() < 1e-9,
                    "token {t} ch {j}: {lhs} vs {rhs}"
                );
            }
        }
    }

    #[test]
    fn pyramid_shape_contract() {
        let params = AdfpnParams::seeded(AdfpnConfig::default(), 4).unwrap();
        let e = encode_stub(&image(64, 64, 2), &params).unwrap();
        let p = build_pyramid(&e, &params).unwrap();
        assert_eq!(p.levels[0].dims(), &[2, 2, 32]);
        assert_eq!(p.levels[1].dims(), &[4, 4, 32]);
        assert_eq!(p.levels[2].dims(), &[8, 8, 32]);
        assert_eq!(p.levels[3].dims(), &[16, 16, 32]);
        let merged = merge_pyramid(&p, &params).unwrap();
        assert_eq!(merged.dims(), &[16, 16, 32]);
    }

    #[test]
    fn zero_embedding_zero_pyramid() {
        let params = AdfpnParams::seeded(AdfpnConfig::default(), 6).unwrap();
        let e = ImageEmbedding {
            map: Tensor::zeros(vec![4, 6, 64]).unwrap(),
            source_dims: (64, 96),
        };
        let p = build_pyramid(&e, &params).unwrap();
        for level in &p.levels {
            assert!(level.data().iter().all(|v| *v == 0.0));
        }
        let merged = merge_pyramid(&p, &params).unwrap();
        assert!(merged.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn constant_embedding_constant_levels() {
        let cfg = AdfpnConfig {
            embed_dim: 8,
            mlp_hidden: 16,
            fpn_channels: 8,
            out_channels: 8,
            ..AdfpnConfig::default()
        };
        let params = identity_params(cfg, 7);
        let e = ImageEmbedding {
            map: Tensor::filled(vec![4, 4, 8], 2.5).unwrap(),
            source_dims: (64, 64),
        };
        let p = build_pyramid(&e, &params).unwrap();
        for level in &p.levels {
            for v in level.data() {
                assert!((v - 2.5).abs() < 1e-12, "level not constant: {v}");
            }
        }
    }

    #[test]
    fn one_hot_coarsest_dilates_to_block() {
        let cfg = AdfpnConfig {
            embed_dim: 8,
            mlp_hidden: 16,
            fpn_channels: 8,
            out_channels: 8,
            ..AdfpnConfig::default()
        };
        let params = identity_params(cfg, 8);
        let mut coarse = Tensor::zeros(vec![2, 2, 8]).unwrap();
        coarse.set3(1, 0, 3, 1.0);
        let p = FeaturePyramid {
            levels: [
                coarse,
                Tensor::zeros(vec![4, 4, 8]).unwrap(),
                Tensor::zeros(vec![8, 8, 8]).unwrap(),
                Tensor::zeros(vec![16, 16, 8]).unwrap(),
            ],
        };
        let merged = merge_pyramid(&p, &params).unwrap();
        // Three nearest-neighbor doublings dilate cell (1,0) to the 8x8
        // block rooted at (8,0), channel 3 only.
        for y in 0..16 {
            for x in 0..16 {
                for c in 0..8 {
                    let want = if (8..16).contains(&y) && x < 8 && c == 3 {
                        1.0
                    } else {
                        0.0
                    };
                    assert_eq!(merged.at3(y, x, c), want, "at ({y},{x},{c})");
                }
            }
        }
    }

    #[test]
    fn pyramid_positive_homogeneity() {
        // maxpool2 is positively homogeneous (not additive), so the
        // merge path is tested under positive scaling with zero biases.
        let params = AdfpnParams::seeded(AdfpnConfig::default(), 10).unwrap();
        let mut rng = SplitMix64::new(40);
        let map = Tensor::randn(vec![4, 4, 64], 1.0, &mut rng).unwrap();
        let e = ImageEmbedding {
            map: map.clone(),
            source_dims: (64, 64),
        };
        let e_scaled = ImageEmbedding {
            map: map.scale(3.0),
            source_dims: (64, 64),
        };
        let m1 = merge_pyramid(&build_pyramid(&e, &params).unwrap(), &params)
            .unwrap()
            .scale(3.0);
        let m2 = merge_pyramid(&build_pyramid(&e_scaled, &params).unwrap(), &params).unwrap();
        assert!(m1.max_abs_diff(&m2) < 1e-9);
    }

    #[test]
    fn encoder_output_is_finite() {
        let params = AdfpnParams::seeded(AdfpnConfig::default(), 12).unwrap();
        let e = encode_stub(&image(96, 160, 33), &params).unwrap();
        assert!(e.map.all_finite());
        let merged = merge_pyramid(&build_pyramid(&e, &params).unwrap(), &params).unwrap();
        assert!(merged.all_finite());
        assert_eq!(merged.dims(), &[24, 40, 32]);
    }
}

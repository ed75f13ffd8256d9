//! Depth-guided wavelet attention: condition the stride-4 image features
//! on an encoded sparse depth map, decompose them into Haar subbands,
//! cross-attend from the full-resolution features into the subband tokens,
//! and recombine the attention output with the inverse-transform branch.

use crate::error::{Error, Result};
use crate::geometry::SparseDepthMap;
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::{
    conv2d, matmul, relu, resample, softmax_rows, ConvKernel, LinearMap, ResampleMode, Tensor,
};
use crate::wavelet::{band_filter, dwt2, idwt2, BandMask, Subbands};

/// Widths and behavior knobs for the depth-guided attention stack.
#[derive(Debug, Clone, PartialEq)]
pub struct DgwaConfig {
    /// Channel width C of the depth-guided features (and depth encoder).
    pub channels: usize,
    /// Channel width of the incoming stride-4 image features.
    pub image_channels: usize,
    /// Query/key projection width.
    pub attn_dim: usize,
    /// Value projection width (the attention output channel count).
    pub value_dim: usize,
    /// Hidden width of the output MLP.
    pub mlp_hidden: usize,
    /// Channel width of the final output map.
    pub out_channels: usize,
    /// Depth normalization constant in meters.
    pub max_range: f64,
    /// Diagnostic band selection applied to the reconstruction branch
    /// (not to the attention tokens). Keep-all is the faithful wiring.
    pub band_mask: BandMask,
}

impl Default for DgwaConfig {
    fn default() -> Self {
        DgwaConfig {
            channels: 16,
            image_channels: 32,
            attn_dim: 16,
            value_dim: 16,
            mlp_hidden: 32,
            out_channels: 16,
            max_range: 80.0,
            band_mask: BandMask::ALL,
        }
    }
}

/// Seed-deterministic weights for the full module.
#[derive(Debug, Clone)]
pub struct DgwaParams {
    pub cfg: DgwaConfig,
    /// Two (conv3x3 + relu + maxpool2) stages: 2 -> C then C -> C.
    pub de_conv1: ConvKernel,
    pub de_conv2: ConvKernel,
    /// 1x1 conv mixing concat(image features, encoded depth) down to C.
    pub guide_conv: ConvKernel,
    /// Query projection from the C-channel guided features.
    pub wq: LinearMap,
    /// Key/value projections from the 4C-channel concatenated subbands.
    pub wk: LinearMap,
    pub wv: LinearMap,
    /// Two-layer output MLP over concat(attention output, reconstruction).
    pub out_mlp1: LinearMap,
    pub out_mlp2: LinearMap,
}

impl DgwaParams {
    pub fn seeded(cfg: DgwaConfig, seed: u64) -> Result<DgwaParams> {
        if cfg.attn_dim == 0 || cfg.channels == 0 {
            return Err(Error::input("attention widths must be positive"));
        }
        let mut rng = SplitMix64::new(derive_seed(seed, &[0xd94a]));
        let c = cfg.channels;
        let de_conv1 = ConvKernel::seeded(c, 2, 3, 3, 1, 1, &mut rng)?;
        let de_conv2 = ConvKernel::seeded(c, c, 3, 3, 1, 1, &mut rng)?;
        let guide_conv = ConvKernel::seeded(c, cfg.image_channels + c, 1, 1, 1, 0, &mut rng)?;
        let wq = LinearMap::seeded(cfg.attn_dim, c, &mut rng)?;
        let wk = LinearMap::seeded(cfg.attn_dim, 4 * c, &mut rng)?;
        let wv = LinearMap::seeded(cfg.value_dim, 4 * c, &mut rng)?;
        let out_mlp1 = LinearMap::seeded(cfg.mlp_hidden, cfg.value_dim + c, &mut rng)?;
        let out_mlp2 = LinearMap::seeded(cfg.out_channels, cfg.mlp_hidden, &mut rng)?;
        Ok(DgwaParams {
            cfg,
            de_conv1,
            de_conv2,
            guide_conv,
            wq,
            wk,
            wv,
            out_mlp1,
            out_mlp2,
        })
    }
}

/// Stride-4 image features conditioned on encoded depth.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGuidedFeatures {
    /// (H/4, W/4, C) map.
    pub map: Tensor,
}

/// Intermediate products of [`dgwa_forward`], exposed for diagnostics and
/// invariant tests.
#[derive(Debug, Clone)]
pub struct DgwaTrace {
    /// Cross-attention output on the query grid.
    pub attended: Tensor,
    /// Inverse-transform branch (after the configured band mask).
    pub reconstruction: Tensor,
    /// Attention weight matrix (query rows x subband-token columns).
    pub attention: Tensor,
    /// Final MLP output.
    pub output: Tensor,
}

/// Encodes a sparse depth map to stride-4 features: normalize depth by
/// `max_range`, then two (conv3x3 + ReLU + maxpool2) stages.
pub fn depth_encode(s: &SparseDepthMap, params: &DgwaParams) -> Result<Tensor> {
    if s.height % 4 != 0 || s.width % 4 != 0 || s.height == 0 || s.width == 0 {
        return Err(Error::shape(format!(
            "depth_encode: dims {}x{} must be positive multiples of 4",
            s.height, s.width
        )));
    }
    let mut input = s.to_tensor()?;
    let inv = 1.0 / params.cfg.max_range;
    for y in 0..s.height {
        for x in 0..s.width {
            input.set3(y, x, 0, input.at3(y, x, 0) * inv);
        }
    }
    let stage1 = resample(&relu(&conv2d(&input, &params.de_conv1)?), &ResampleMode::MaxPool2)?;
    resample(&relu(&conv2d(&stage1, &params.de_conv2)?), &ResampleMode::MaxPool2)
}

/// Fuses stride-4 image features with encoded depth: channel concat, then
/// the 1x1 guide conv down to C channels.
pub fn depth_guide(
    f_i: &Tensor,
    f_d: &Tensor,
    params: &DgwaParams,
) -> Result<DepthGuidedFeatures> {
    if f_i.ndim() != 3 || f_d.ndim() != 3 {
        return Err(Error::shape("depth_guide: inputs must be (h, w, c)"));
    }
    if f_i.dims()[..2] != f_d.dims()[..2] {
        return Err(Error::shape(format!(
            "depth_guide: spatial dims {:?} vs {:?}",
            &f_i.dims()[..2],
            &f_d.dims()[..2]
        )));
    }
    let merged = f_i.concat_channels(f_d)?;
    Ok(DepthGuidedFeatures {
        map: conv2d(&merged, &params.guide_conv)?,
    })
}

/// Cross-attention from guided-feature queries into subband tokens,
/// also returning the row-stochastic weight matrix.
///
/// Queries come from every cell of `q_src` (one token per stride-4 cell);
/// keys and values from every cell of the channel-concatenated subbands
/// (one token per stride-8 cell, 4C channels wide).
pub fn wave_attention_full(
    q_src: &DepthGuidedFeatures,
    s: &Subbands,
    params: &DgwaParams,
) -> Result<(Tensor, Tensor)> {
    let c = q_src.map.dims()[2];
    if c != params.wq.in_dim() {
        return Err(Error::shape(format!(
            "wave_attention: query channels {c} vs wq input {}",
            params.wq.in_dim()
        )));
    }
    if s.band_dims()[2] * 4 != params.wk.in_dim() {
        return Err(Error::shape(format!(
            "wave_attention: subband channels {} vs wk input {}",
            s.band_dims()[2] * 4,
            params.wk.in_dim()
        )));
    }
    let q = params.wq.apply_rows(&q_src.map.flatten_spatial()?)?;
    let tokens = s.concat_channels()?.flatten_spatial()?;
    let k = params.wk.apply_rows(&tokens)?;
    let v = params.wv.apply_rows(&tokens)?;
    let scale = 1.0 / (params.wq.out_dim() as f64).sqrt();
    let att = softmax_rows(&matmul(&q, &k.transpose()?)?.scale(scale))?;
    let out = matmul(&att, &v)?;
    let (h, w) = (q_src.map.dims()[0], q_src.map.dims()[1]);
    Ok((out.unflatten_spatial(h, w)?, att))
}

/// [`wave_attention_full`] without the weight matrix.
pub fn wave_attention(
    q_src: &DepthGuidedFeatures,
    s: &Subbands,
    params: &DgwaParams,
) -> Result<Tensor> {
    Ok(wave_attention_full(q_src, s, params)?.0)
}

/// Full module pass returning all intermediates: Haar-decompose the
/// guided features, attend into the subband tokens, invert the (optionally
/// band-masked) subbands, and mix concat(attended, reconstruction) through
/// the output MLP.
pub fn dgwa_forward_full(q_src: &DepthGuidedFeatures, params: &DgwaParams) -> Result<DgwaTrace> {
    let dims = q_src.map.dims().to_vec();
    if dims[0] % 2 != 0 || dims[1] % 2 != 0 {
        return Err(Error::shape(format!(
            "dgwa_forward: stride-4 dims {}x{} must be even",
            dims[0], dims[1]
        )));
    }
    let s = dwt2(&q_src.map)?;
    let n_q = dims[0] * dims[1];
    let n_kv = s.band_dims()[0] * s.band_dims()[1];
    if n_q != 4 * n_kv {
        return Err(Error::shape(format!(
            "dgwa_forward: expected 4:1 query-to-subband token ratio, got {n_q}:{n_kv}"
        )));
    }
    let (attended, attention) = wave_attention_full(q_src, &s, params)?;
    let reconstruction = idwt2(&band_filter(&s, params.cfg.band_mask))?;
    let merged = attended.concat_channels(&reconstruction)?.flatten_spatial()?;
    let hidden = relu(&params.out_mlp1.apply_rows(&merged)?);
    let output = params
        .out_mlp2
        .apply_rows(&hidden)?
        .unflatten_spatial(dims[0], dims[1])?;
    Ok(DgwaTrace {
        attended,
        reconstruction,
        attention,
        output,
    })
}

/// Final output map of the module at stride 4.
pub fn dgwa_forward(q_src: &DepthGuidedFeatures, params: &DgwaParams) -> Result<Tensor> {
    Ok(dgwa_forward_full(q_src, params)?.output)
}

/// Optional coarsening for downstream consumers wanting a stride larger
/// than 4: applies maxpool2 `times` times.
pub fn coarsen(map: &Tensor, times: usize) -> Result<Tensor> {
    let mut out = map.clone();
    for _ in 0..times {
        out = resample(&out, &ResampleMode::MaxPool2)?;
    }
    Ok(out)
}

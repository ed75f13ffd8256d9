//! Per-cell fusion of LiDAR and camera features: gather image features at
//! projected cell centers, then re-weight the two modality tokens with a
//! tiny self-attention layer and mix them through an MLP. Cells never
//! interact, so the batch may be partitioned freely.

use crate::error::{Error, Result};
use crate::geometry::project_one;
use crate::kitti::CalibrationSet;
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::{matmul, relu, softmax_rows, LinearMap, Tensor};

/// Widths of the fusion stack.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionConfig {
    pub lidar_channels: usize,
    pub cam_channels: usize,
    /// Shared width the two modality tokens are projected to.
    pub token_dim: usize,
    pub mlp_hidden: usize,
    pub out_channels: usize,
}

impl Default for FusionConfig {
    fn default() -> Self {
        FusionConfig {
            lidar_channels: 6,
            cam_channels: 16,
            token_dim: 16,
            mlp_hidden: 32,
            out_channels: 16,
        }
    }
}

/// Seed-deterministic fusion weights.
#[derive(Debug, Clone)]
pub struct FusionParams {
    pub cfg: FusionConfig,
    pub lidar_proj: LinearMap,
    pub cam_proj: LinearMap,
    pub wq: LinearMap,
    pub wk: LinearMap,
    pub wv: LinearMap,
    pub out_mlp1: LinearMap,
    pub out_mlp2: LinearMap,
}

impl FusionParams {
    pub fn seeded(cfg: FusionConfig, seed: u64) -> Result<FusionParams> {
        let mut rng = SplitMix64::new(derive_seed(seed, &[0xf5ed]));
        let d = cfg.token_dim;
        Ok(FusionParams {
            lidar_proj: LinearMap::seeded(d, cfg.lidar_channels, &mut rng)?,
            cam_proj: LinearMap::seeded(d, cfg.cam_channels, &mut rng)?,
            wq: LinearMap::seeded(d, d, &mut rng)?,
            wk: LinearMap::seeded(d, d, &mut rng)?,
            wv: LinearMap::seeded(d, d, &mut rng)?,
            out_mlp1: LinearMap::seeded(cfg.mlp_hidden, 2 * d, &mut rng)?,
            out_mlp2: LinearMap::seeded(cfg.out_channels, cfg.mlp_hidden, &mut rng)?,
            cfg,
        })
    }
}

/// Per-cell modality features plus the cell centers they came from.
///
/// Tensors cannot be empty, so a batch always holds at least one cell;
/// callers with nothing to fuse skip fusion instead.
#[derive(Debug, Clone, PartialEq)]
pub struct FusionCellBatch {
    /// (M, C_l) LiDAR-side features.
    pub lidar_feats: Tensor,
    /// (M, C_c) camera-side features.
    pub cam_feats: Tensor,
    /// M cell centers (x, y, z) in the LiDAR frame.
    pub cell_centers: Vec<[f64; 3]>,
}

impl FusionCellBatch {
    pub fn new(
        lidar_feats: Tensor,
        cam_feats: Tensor,
        cell_centers: Vec<[f64; 3]>,
    ) -> Result<FusionCellBatch> {
        if lidar_feats.ndim() != 2 || cam_feats.ndim() != 2 {
            return Err(Error::shape("fusion batch: features must be (m, c)"));
        }
        let m = cell_centers.len();
        if lidar_feats.dims()[0] != m || cam_feats.dims()[0] != m {
            return Err(Error::shape(format!(
                "fusion batch: rows {} / {} vs {} centers",
                lidar_feats.dims()[0],
                cam_feats.dims()[0],
                m
            )));
        }
        Ok(FusionCellBatch {
            lidar_feats,
            cam_feats,
            cell_centers,
        })
    }

    pub fn len(&self) -> usize {
        self.cell_centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_centers.is_empty()
    }
}

/// Intermediates of [`adaptive_fuse`] for diagnostics and tests.
#[derive(Debug, Clone)]
pub struct FusionTrace {
    /// (M, C_f) fused outputs.
    pub output: Tensor,
    /// (M, 2, d) residual-updated tokens (LiDAR row 0, camera row 1).
    pub updated_tokens: Tensor,
    /// (M, 2, 2) attention weights per cell.
    pub attention: Tensor,
}

/// Samples the stride-4 feature map at each projected cell center.
///
/// Grid node (i, j) corresponds to image pixel (4i, 4j); samples are
/// bilinear between nodes. Centers projecting behind the camera or
/// outside the node lattice yield a zero vector.
pub fn gather_image_features(
    f_out: &Tensor,
    centers: &[[f64; 3]],
    calib: &CalibrationSet,
) -> Result<Tensor> {
    if f_out.ndim() != 3 {
        return Err(Error::shape("gather: feature map must be (h, w, c)"));
    }
    if !calib.is_finite() {
        return Err(Error::input("gather: calibration non-finite"));
    }
    if centers.is_empty() {
        return Err(Error::input("gather: no cell centers given"));
    }
    let (gh, gw, c) = (f_out.dims()[0], f_out.dims()[1], f_out.dims()[2]);
    let mut out = vec![0.0; centers.len() * c];
    for (i, ctr) in centers.iter().enumerate() {
        let Some((u, v, _)) = project_one(calib, ctr[0], ctr[1], ctr[2]) else {
            continue;
        };
        let (gx, gy) = (u / 4.0, v / 4.0);
        if gx < 0.0 || gy < 0.0 || gx > (gw - 1) as f64 || gy > (gh - 1) as f64 {
            continue;
        }
        let x0 = gx.floor() as usize;
        let y0 = gy.floor() as usize;
        let x1 = (x0 + 1).min(gw - 1);
        let y1 = (y0 + 1).min(gh - 1);
        let (fx, fy) = (gx - x0 as f64, gy - y0 as f64);
        for ch in 0..c {
            let top = (1.0 - fx) * f_out.at3(y0, x0, ch) + fx * f_out.at3(y0, x1, ch);
            let bot = (1.0 - fx) * f_out.at3(y1, x0, ch) + fx * f_out.at3(y1, x1, ch);
            out[i * c + ch] = (1.0 - fy) * top + fy * bot;
        }
    }
    Tensor::new(vec![centers.len(), c], out)
}

/// Fuses each cell's modality pair and returns all intermediates.
pub fn adaptive_fuse_full(batch: &FusionCellBatch, params: &FusionParams) -> Result<FusionTrace> {
    let m = batch.len();
    let d = params.cfg.token_dim;
    let l_tok = params.lidar_proj.apply_rows(&batch.lidar_feats)?;
    let c_tok = params.cam_proj.apply_rows(&batch.cam_feats)?;
    let scale = 1.0 / (params.wq.out_dim() as f64).sqrt();
    let cf = params.cfg.out_channels;
    let mut out = vec![0.0; m * cf];
    let mut tokens_out = vec![0.0; m * 2 * d];
    let mut att_out = vec![0.0; m * 4];
    for i in 0..m {
        let mut pair = vec![0.0; 2 * d];
        pair[..d].copy_from_slice(&l_tok.data()[i * d..(i + 1) * d]);
        pair[d..].copy_from_slice(&c_tok.data()[i * d..(i + 1) * d]);
        let tokens = Tensor::new(vec![2, d], pair)?;
        let q = params.wq.apply_rows(&tokens)?;
        let k = params.wk.apply_rows(&tokens)?;
        let v = params.wv.apply_rows(&tokens)?;
        let att = softmax_rows(&matmul(&q, &k.transpose()?)?.scale(scale))?;
        let updated = tokens.add(&matmul(&att, &v)?)?;
        tokens_out[i * 2 * d..(i + 1) * 2 * d].copy_from_slice(updated.data());
        att_out[i * 4..(i + 1) * 4].copy_from_slice(att.data());
        let merged = Tensor::new(vec![1, 2 * d], updated.data().to_vec())?;
        let fused = params
            .out_mlp2
            .apply_rows(&relu(&params.out_mlp1.apply_rows(&merged)?))?;
        out[i * cf..(i + 1) * cf].copy_from_slice(fused.data());
    }
    Ok(FusionTrace {
        output: Tensor::new(vec![m, cf], out)?,
        updated_tokens: Tensor::new(vec![m, 2, d], tokens_out)?,
        attention: Tensor::new(vec![m, 2, 2], att_out)?,
    })
}

/// Fused (M, C_f) features.
pub fn adaptive_fuse(batch: &FusionCellBatch, params: &FusionParams) -> Result<Tensor> {
    Ok(adaptive_fuse_full(batch, params)?.output)
}

//! Denoising-masked-autoencoder scaffolding: seeded patch masking over an
//! image and the reconstruction loss against the clean target.
//!
//! Only the masking and loss protocol live here — exactly
//! `round(ratio * patches)` patches are masked, chosen by seeded shuffle,
//! and the loss is a mean squared error over masked pixels alone. Any
//! encoder/decoder pair can be wired on top for smoke tests; no training
//! machinery is provided.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Boolean mask over a patch grid covering an image.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchMask {
    patch: usize,
    grid_h: usize,
    grid_w: usize,
    masked: Vec<bool>,
}

impl PatchMask {
    pub fn patch(&self) -> usize {
        self.patch
    }

    pub fn grid_dims(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn masked_count(&self) -> usize {
        self.masked.iter().filter(|&&m| m).count()
    }

    pub fn is_masked(&self, gy: usize, gx: usize) -> bool {
        self.masked[gy * self.grid_w + gx]
    }

    /// Whether the pixel at (y, x) falls in a masked patch.
    pub fn pixel_masked(&self, y: usize, x: usize) -> bool {
        self.is_masked(y / self.patch, x / self.patch)
    }

    fn pixel_dims(&self) -> (usize, usize) {
        (self.grid_h * self.patch, self.grid_w * self.patch)
    }
}

/// Masks `round(ratio * patches)` patches of `img`, chosen by seeded
/// shuffle, zeroing their pixels. Height and width must be divisible by
/// `patch`; `ratio` must lie in [0, 1].
pub fn mask_patches(
    img: &Tensor,
    patch: usize,
    ratio: f64,
    seed: u64,
) -> Result<(Tensor, PatchMask)> {
    if img.ndim() != 3 {
        return Err(Error::shape("mask_patches: image must be (h, w, c)"));
    }
    let (h, w) = (img.dims()[0], img.dims()[1]);
    if patch == 0 || h % patch != 0 || w % patch != 0 {
        return Err(Error::shape(format!(
            "mask_patches: image {h}x{w} not divisible into {patch}px patches"
        )));
    }
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::input(format!("mask ratio {ratio} outside [0, 1]")));
    }
    let (gh, gw) = (h / patch, w / patch);
    let n = gh * gw;
    let count = (ratio * n as f64).round() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = SplitMix64::new(seed);
    rng.shuffle(&mut order);
    let mut masked = vec![false; n];
    for &i in order.iter().take(count) {
        masked[i] = true;
    }
    let mask = PatchMask {
        patch,
        grid_h: gh,
        grid_w: gw,
        masked,
    };
    let mut out = img.clone();
    let ch = img.dims()[2];
    for y in 0..h {
        for x in 0..w {
            if mask.pixel_masked(y, x) {
                for c in 0..ch {
                    out.set3(y, x, c, 0.0);
                }
            }
        }
    }
    Ok((out, mask))
}

/// Mean squared error between `pred` and `clean` over masked pixels only;
/// 0 when no patch is masked. Both tensors must match each other and the
/// mask's pixel grid.
pub fn dmae_loss(pred: &Tensor, clean: &Tensor, mask: &PatchMask) -> Result<f64> {
    if pred.dims() != clean.dims() {
        return Err(Error::shape(format!(
            "dmae_loss: pred {:?} vs clean {:?}",
            pred.dims(),
            clean.dims()
        )));
    }
    if pred.ndim() != 3 {
        return Err(Error::shape("dmae_loss: inputs must be (h, w, c)"));
    }
    let (h, w, ch) = (pred.dims()[0], pred.dims()[1], pred.dims()[2]);
    if (h, w) != mask.pixel_dims() {
        return Err(Error::shape(format!(
            "dmae_loss: image {h}x{w} vs mask grid {:?} at {}px",
            mask.grid_dims(),
            mask.patch()
        )));
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for y in 0..h {
        for x in 0..w {
            if !mask.pixel_masked(y, x) {
                continue;
            }
            for c in 0..ch {
                let d = pred.at3(y, x, c) - clean.at3(y, x, c);
                sum += d * d;
                n += 1;
            }
        }
    }
    if n == 0 {
        return Ok(0.0);
    }
    Ok(sum / n as f64)
}

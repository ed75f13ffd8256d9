//! Single-level 2D Haar wavelet analysis and synthesis, applied per channel.
//!
//! The transform is orthonormal: the analysis pair is
//! `low = (a + b) / sqrt(2)`, `high = (a - b) / sqrt(2)` applied first along
//! width, then along height. Band names follow the convention that the first
//! letter is the width filter and the second the height filter, so `lh` holds
//! width-lowpass / height-highpass coefficients. Orthonormality makes energy
//! exactly preserved (Parseval) and the inverse exact up to rounding.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

const INV_SQRT2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// The four Haar subbands of an (h, w, c) map; each band is (h/2, w/2, c).
#[derive(Debug, Clone)]
pub struct Subbands {
    pub ll: Tensor,
    pub lh: Tensor,
    pub hl: Tensor,
    pub hh: Tensor,
    /// Spatial dims of the map the bands came from.
    pub source_dims: (usize, usize, usize),
}

impl Subbands {
    fn check_consistent(&self) -> Result<()> {
        let d = self.ll.dims();
        for (name, band) in [("lh", &self.lh), ("hl", &self.hl), ("hh", &self.hh)] {
            if band.dims() != d {
                return Err(Error::shape(format!(
                    "subband {name} dims {:?} differ from ll {:?}",
                    band.dims(),
                    d
                )));
            }
        }
        let (h, w, c) = self.source_dims;
        if d != [h / 2, w / 2, c] {
            return Err(Error::shape(format!(
                "band dims {d:?} inconsistent with source dims {:?}",
                self.source_dims
            )));
        }
        Ok(())
    }

    /// Band dims (h/2, w/2, c).
    pub fn band_dims(&self) -> &[usize] {
        self.ll.dims()
    }

    /// Total energy over all four bands.
    pub fn energy(&self) -> f64 {
        [&self.ll, &self.lh, &self.hl, &self.hh]
            .iter()
            .flat_map(|b| b.data().iter())
            .map(|v| v * v)
            .sum()
    }

    /// Channel concatenation [ll | lh | hl | hh] as one (h/2, w/2, 4c) map.
    pub fn concat_channels(&self) -> Result<Tensor> {
        self.ll
            .concat_channels(&self.lh)?
            .concat_channels(&self.hl)?
            .concat_channels(&self.hh)
    }
}

/// Which subbands a [`band_filter`] pass keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandMask {
    pub ll: bool,
    pub lh: bool,
    pub hl: bool,
    pub hh: bool,
}

impl BandMask {
    pub const ALL: BandMask = BandMask {
        ll: true,
        lh: true,
        hl: true,
        hh: true,
    };
    pub const LL_ONLY: BandMask = BandMask {
        ll: true,
        lh: false,
        hl: false,
        hh: false,
    };
    /// Keeps everything except the diagonal detail band.
    pub const DROP_HH: BandMask = BandMask {
        ll: true,
        lh: true,
        hl: true,
        hh: false,
    };
    pub const NONE: BandMask = BandMask {
        ll: false,
        lh: false,
        hl: false,
        hh: false,
    };
}

/// Haar analysis of an (h, w, c) map with even spatial dims.
pub fn dwt2(f: &Tensor) -> Result<Subbands> {
    if f.ndim() != 3 {
        return Err(Error::shape("dwt2: input must be (h, w, c)"));
    }
    let (h, w, c) = (f.dims()[0], f.dims()[1], f.dims()[2]);
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::shape(format!("dwt2: dims {h}x{w} must be even")));
    }
    let (bh, bw) = (h / 2, w / 2);
    let mut ll = vec![0.0; bh * bw * c];
    let mut lh = vec![0.0; bh * bw * c];
    let mut hl = vec![0.0; bh * bw * c];
    let mut hh = vec![0.0; bh * bw * c];
    for by in 0..bh {
        for bx in 0..bw {
            for ch in 0..c {
                let a = f.at3(2 * by, 2 * bx, ch);
                let b = f.at3(2 * by, 2 * bx + 1, ch);
                let d = f.at3(2 * by + 1, 2 * bx, ch);
                let e = f.at3(2 * by + 1, 2 * bx + 1, ch);
                // Width pass on each row, then height pass on the results.
                let top_l = (a + b) * INV_SQRT2;
                let top_h = (a - b) * INV_SQRT2;
                let bot_l = (d + e) * INV_SQRT2;
                let bot_h = (d - e) * INV_SQRT2;
                let idx = (by * bw + bx) * c + ch;
                ll[idx] = (top_l + bot_l) * INV_SQRT2;
                lh[idx] = (top_l - bot_l) * INV_SQRT2;
                hl[idx] = (top_h + bot_h) * INV_SQRT2;
                hh[idx] = (top_h - bot_h) * INV_SQRT2;
            }
        }
    }
    let dims = vec![bh, bw, c];
    Ok(Subbands {
        ll: Tensor::new(dims.clone(), ll)?,
        lh: Tensor::new(dims.clone(), lh)?,
        hl: Tensor::new(dims.clone(), hl)?,
        hh: Tensor::new(dims, hh)?,
        source_dims: (h, w, c),
    })
}

/// Exact inverse of [`dwt2`] up to floating rounding.
pub fn idwt2(s: &Subbands) -> Result<Tensor> {
    s.check_consistent()?;
    let (h, w, c) = s.source_dims;
    let (bh, bw) = (h / 2, w / 2);
    let mut out = vec![0.0; h * w * c];
    for by in 0..bh {
        for bx in 0..bw {
            for ch in 0..c {
                let ll = s.ll.at3(by, bx, ch);
                let lh = s.lh.at3(by, bx, ch);
                let hl = s.hl.at3(by, bx, ch);
                let hh = s.hh.at3(by, bx, ch);
                // Invert the height pass, then the width pass.
                let top_l = (ll + lh) * INV_SQRT2;
                let bot_l = (ll - lh) * INV_SQRT2;
                let top_h = (hl + hh) * INV_SQRT2;
                let bot_h = (hl - hh) * INV_SQRT2;
                let a = (top_l + top_h) * INV_SQRT2;
                let b = (top_l - top_h) * INV_SQRT2;
                let d = (bot_l + bot_h) * INV_SQRT2;
                let e = (bot_l - bot_h) * INV_SQRT2;
                let base = ((2 * by) * w + 2 * bx) * c + ch;
                out[base] = a;
                out[base + c] = b;
                out[((2 * by + 1) * w + 2 * bx) * c + ch] = d;
                out[((2 * by + 1) * w + 2 * bx + 1) * c + ch] = e;
            }
        }
    }
    Tensor::new(vec![h, w, c], out)
}

/// Zeroes every band the mask does not keep. An empty mask yields all-zero
/// bands (and hence a zero reconstruction).
pub fn band_filter(s: &Subbands, keep: BandMask) -> Subbands {
    let zero = |t: &Tensor, k: bool| {
        if k {
            t.clone()
        } else {
            Tensor::zeros(t.dims().to_vec()).expect("band dims are valid")
        }
    };
    Subbands {
        ll: zero(&s.ll, keep.ll),
        lh: zero(&s.lh, keep.lh),
        hl: zero(&s.hl, keep.hl),
        hh: zero(&s.hh, keep.hh),
        source_dims: s.source_dims,
    }
}

/// Builds subbands directly from four equally-shaped band tensors.
pub fn subbands_from_parts(ll: Tensor, lh: Tensor, hl: Tensor, hh: Tensor) -> Result<Subbands> {
    let d = ll.dims().to_vec();
    if d.len() != 3 {
        return Err(Error::shape("subbands: bands must be (h, w, c)"));
    }
    let s = Subbands {
        source_dims: (d[0] * 2, d[1] * 2, d[2]),
        ll,
        lh,
        hl,
        hh,
    };
    s.check_consistent()?;
    Ok(s)
}

//! Dense row-major tensors and the small set of kernels the pipeline needs:
//! matrix multiply, row softmax, 2D convolution, and scale resampling.
//!
//! All arithmetic is in f64. Operations are pure functions of their inputs;
//! convolution is cross-correlation (no kernel flip), matching the usual
//! deep-learning convention.

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Dense N-dimensional array of f64, row-major.
///
/// 3D feature maps use height x width x channels order, so the flat index of
/// `(y, x, c)` is `(y * w + x) * ch + c`.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    dims: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, checking that every dim is positive and the data
    /// length matches the dim product.
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if dims.is_empty() || dims.iter().any(|&d| d == 0) {
            return Err(Error::shape(format!("dims must be positive, got {dims:?}")));
        }
        let expect: usize = dims.iter().product();
        if data.len() != expect {
            return Err(Error::shape(format!(
                "data length {} does not match dims {:?} (need {})",
                data.len(),
                dims,
                expect
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let n: usize = dims.iter().product();
        Tensor::new(dims, vec![0.0; n])
    }

    pub fn filled(dims: Vec<usize>, value: f64) -> Result<Self> {
        let n: usize = dims.iter().product();
        Tensor::new(dims, vec![value; n])
    }

    /// Tensor with entries drawn i.i.d. from `N(0, scale^2)`.
    pub fn randn(dims: Vec<usize>, scale: f64, rng: &mut SplitMix64) -> Result<Self> {
        let n: usize = dims.iter().product();
        let data = (0..n).map(|_| scale * rng.next_gaussian()).collect();
        Tensor::new(dims, data)
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn ndim(&self) -> usize {
        self.dims.len()
    }

    /// Element of a 2D tensor.
    #[inline]
    pub fn at2(&self, r: usize, c: usize) -> f64 {
        debug_assert_eq!(self.dims.len(), 2);
        self.data[r * self.dims[1] + c]
    }

    /// Element of a 3D (h, w, ch) tensor.
    #[inline]
    pub fn at3(&self, y: usize, x: usize, c: usize) -> f64 {
        debug_assert_eq!(self.dims.len(), 3);
        self.data[(y * self.dims[1] + x) * self.dims[2] + c]
    }

    #[inline]
    pub fn set3(&mut self, y: usize, x: usize, c: usize, v: f64) {
        debug_assert_eq!(self.dims.len(), 3);
        self.data[(y * self.dims[1] + x) * self.dims[2] + c] = v;
    }

    /// Requires an exact shape, otherwise a shape error naming the context.
    pub fn expect_dims(&self, dims: &[usize], what: &str) -> Result<()> {
        if self.dims != dims {
            return Err(Error::shape(format!(
                "{what}: expected dims {dims:?}, got {:?}",
                self.dims
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Elementwise sum with shape check.
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "add: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + b)
            .collect();
        Tensor::new(self.dims.clone(), data)
    }

    pub fn scale(&self, factor: f64) -> Tensor {
        Tensor {
            dims: self.dims.clone(),
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Concatenates two (h, w, c) maps along the channel axis.
    pub fn concat_channels(&self, other: &Tensor) -> Result<Tensor> {
        if self.ndim() != 3 || other.ndim() != 3 {
            return Err(Error::shape("concat_channels: both inputs must be 3D"));
        }
        if self.dims[0] != other.dims[0] || self.dims[1] != other.dims[1] {
            return Err(Error::shape(format!(
                "concat_channels: spatial dims {:?} vs {:?}",
                &self.dims[..2],
                &other.dims[..2]
            )));
        }
        let (h, w) = (self.dims[0], self.dims[1]);
        let (ca, cb) = (self.dims[2], other.dims[2]);
        let mut data = Vec::with_capacity(h * w * (ca + cb));
        for y in 0..h {
            for x in 0..w {
                let ia = (y * w + x) * ca;
                let ib = (y * w + x) * cb;
                data.extend_from_slice(&self.data[ia..ia + ca]);
                data.extend_from_slice(&other.data[ib..ib + cb]);
            }
        }
        Tensor::new(vec![h, w, ca + cb], data)
    }

    /// Reinterprets an (h, w, c) map as an (h*w, c) token matrix.
    pub fn flatten_spatial(&self) -> Result<Tensor> {
        if self.ndim() != 3 {
            return Err(Error::shape("flatten_spatial: input must be 3D"));
        }
        Tensor::new(vec![self.dims[0] * self.dims[1], self.dims[2]], self.data.clone())
    }

    /// Inverse of `flatten_spatial` for a known grid.
    pub fn unflatten_spatial(&self, h: usize, w: usize) -> Result<Tensor> {
        if self.ndim() != 2 || self.dims[0] != h * w {
            return Err(Error::shape(format!(
                "unflatten_spatial: cannot reshape {:?} to ({h}, {w}, c)",
                self.dims
            )));
        }
        Tensor::new(vec![h, w, self.dims[1]], self.data.clone())
    }

    /// Transpose of a 2D tensor.
    pub fn transpose(&self) -> Result<Tensor> {
        if self.ndim() != 2 {
            return Err(Error::shape("transpose: input must be 2D"));
        }
        let (r, c) = (self.dims[0], self.dims[1]);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                out[j * r + i] = self.data[i * c + j];
            }
        }
        Tensor::new(vec![c, r], out)
    }

    pub fn max_abs_diff(&self, other: &Tensor) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// Mean squared difference over all entries.
    pub fn mse(&self, other: &Tensor) -> Result<f64> {
        if self.dims != other.dims {
            return Err(Error::shape(format!(
                "mse: dims {:?} vs {:?}",
                self.dims, other.dims
            )));
        }
        let n = self.data.len() as f64;
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            / n)
    }
}

/// Dense affine map `y = W x + b` with `W` of shape out_dim x in_dim.
#[derive(Debug, Clone)]
pub struct LinearMap {
    weight: Tensor,
    bias: Tensor,
}

impl LinearMap {
    pub fn new(weight: Tensor, bias: Option<Tensor>) -> Result<Self> {
        if weight.ndim() != 2 {
            return Err(Error::shape("LinearMap: weight must be 2D"));
        }
        let out_dim = weight.dims()[0];
        let bias = match bias {
            Some(b) => {
                b.expect_dims(&[out_dim], "LinearMap bias")?;
                b
            }
            None => Tensor::zeros(vec![out_dim])?,
        };
        Ok(LinearMap { weight, bias })
    }

    /// Zero weight and bias; useful for degenerate-attention wiring.
    pub fn zeros(out_dim: usize, in_dim: usize) -> Result<Self> {
        LinearMap::new(Tensor::zeros(vec![out_dim, in_dim])?, None)
    }

    /// Gaussian weights at scale 1/sqrt(in_dim), zero bias.
    pub fn seeded(out_dim: usize, in_dim: usize, rng: &mut SplitMix64) -> Result<Self> {
        let scale = 1.0 / (in_dim as f64).sqrt();
        LinearMap::new(Tensor::randn(vec![out_dim, in_dim], scale, rng)?, None)
    }

    pub fn in_dim(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn out_dim(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    /// Applies the map to every row of an (n, in_dim) matrix.
    pub fn apply_rows(&self, rows: &Tensor) -> Result<Tensor> {
        if rows.ndim() != 2 || rows.dims()[1] != self.in_dim() {
            return Err(Error::shape(format!(
                "LinearMap: rows {:?} incompatible with in_dim {}",
                rows.dims(),
                self.in_dim()
            )));
        }
        let n = rows.dims()[0];
        let (od, id) = (self.out_dim(), self.in_dim());
        let mut out = vec![0.0; n * od];
        for r in 0..n {
            let x = &rows.data()[r * id..(r + 1) * id];
            for o in 0..od {
                let wrow = &self.weight.data()[o * id..(o + 1) * id];
                let mut acc = self.bias.data()[o];
                for i in 0..id {
                    acc += wrow[i] * x[i];
                }
                out[r * od + o] = acc;
            }
        }
        Tensor::new(vec![n, od], out)
    }

    /// Applies the map to the channel vector at every cell of an (h, w, c) map.
    pub fn apply_cells(&self, map: &Tensor) -> Result<Tensor> {
        let flat = map.flatten_spatial()?;
        self.apply_rows(&flat)?
            .unflatten_spatial(map.dims()[0], map.dims()[1])
    }
}

/// 2D convolution kernel: weight is out_ch x in_ch x kh x kw.
#[derive(Debug, Clone)]
pub struct ConvKernel {
    weight: Tensor,
    bias: Tensor,
    stride: usize,
    padding: usize,
}

impl ConvKernel {
    pub fn new(weight: Tensor, bias: Option<Tensor>, stride: usize, padding: usize) -> Result<Self> {
        if weight.ndim() != 4 {
            return Err(Error::shape("ConvKernel: weight must be 4D"));
        }
        if stride == 0 {
            return Err(Error::shape("ConvKernel: stride must be >= 1"));
        }
        let out_ch = weight.dims()[0];
        let bias = match bias {
            Some(b) => {
                b.expect_dims(&[out_ch], "ConvKernel bias")?;
                b
            }
            None => Tensor::zeros(vec![out_ch])?,
        };
        Ok(ConvKernel {
            weight,
            bias,
            stride,
            padding,
        })
    }

    /// Gaussian weights at scale 1/sqrt(in_ch*kh*kw), zero bias.
    pub fn seeded(
        out_ch: usize,
        in_ch: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        rng: &mut SplitMix64,
    ) -> Result<Self> {
        let scale = 1.0 / ((in_ch * kh * kw) as f64).sqrt();
        let weight = Tensor::randn(vec![out_ch, in_ch, kh, kw], scale, rng)?;
        ConvKernel::new(weight, None, stride, padding)
    }

    /// 1x1 kernel that copies input channel `c` to output channel `c`.
    pub fn identity_1x1(channels: usize) -> Result<Self> {
        let mut w = Tensor::zeros(vec![channels, channels, 1, 1])?;
        for c in 0..channels {
            w.data_mut()[c * channels + c] = 1.0;
        }
        ConvKernel::new(w, None, 1, 0)
    }

    pub fn out_ch(&self) -> usize {
        self.weight.dims()[0]
    }

    pub fn in_ch(&self) -> usize {
        self.weight.dims()[1]
    }

    pub fn kh(&self) -> usize {
        self.weight.dims()[2]
    }

    pub fn kw(&self) -> usize {
        self.weight.dims()[3]
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn padding(&self) -> usize {
        self.padding
    }

    pub fn weight(&self) -> &Tensor {
        &self.weight
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }
}

/// Standard matrix product of (m, k) and (k, n).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.ndim() != 2 || b.ndim() != 2 {
        return Err(Error::shape("matmul: both inputs must be 2D"));
    }
    let (m, k) = (a.dims()[0], a.dims()[1]);
    let (k2, n) = (b.dims()[0], b.dims()[1]);
    if k != k2 {
        return Err(Error::shape(format!(
            "matmul: inner dims {k} vs {k2} (shapes {:?} x {:?})",
            a.dims(),
            b.dims()
        )));
    }
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for p in 0..k {
            let av = a.data()[i * k + p];
            if av == 0.0 {
                continue;
            }
            let brow = &b.data()[p * n..(p + 1) * n];
            let orow = &mut out[i * n..(i + 1) * n];
            for j in 0..n {
                orow[j] += av * brow[j];
            }
        }
    }
    Tensor::new(vec![m, n], out)
}

/// Row-wise softmax of an (r, c) matrix, stabilized by per-row max
/// subtraction so large logits cannot overflow.
pub fn softmax_rows(m: &Tensor) -> Result<Tensor> {
    if m.ndim() != 2 {
        return Err(Error::shape("softmax_rows: input must be 2D"));
    }
    let (r, c) = (m.dims()[0], m.dims()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &m.data()[i * c..(i + 1) * c];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let orow = &mut out[i * c..(i + 1) * c];
        let mut sum = 0.0;
        for j in 0..c {
            let e = (row[j] - max).exp();
            orow[j] = e;
            sum += e;
        }
        for v in orow.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::new(vec![r, c], out)
}

/// Cross-correlation of an (h, w, in_ch) map with a kernel, plus bias.
///
/// Output spatial size is `(h + 2p - kh) / s + 1`; a non-integral size is a
/// shape error rather than a silent floor.
pub fn conv2d(input: &Tensor, k: &ConvKernel) -> Result<Tensor> {
    if input.ndim() != 3 {
        return Err(Error::shape("conv2d: input must be (h, w, c)"));
    }
    let (h, w, cin) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    if cin != k.in_ch() {
        return Err(Error::shape(format!(
            "conv2d: input channels {cin} vs kernel in_ch {}",
            k.in_ch()
        )));
    }
    let (kh, kw, s, p) = (k.kh(), k.kw(), k.stride(), k.padding());
    let span_h = (h + 2 * p).checked_sub(kh);
    let span_w = (w + 2 * p).checked_sub(kw);
    let (span_h, span_w) = match (span_h, span_w) {
        (Some(a), Some(b)) if a % s == 0 && b % s == 0 => (a, b),
        _ => {
            return Err(Error::shape(format!(
                "conv2d: output size not integral for input {h}x{w}, kernel {kh}x{kw}, stride {s}, padding {p}"
            )))
        }
    };
    let (oh, ow) = (span_h / s + 1, span_w / s + 1);
    let cout = k.out_ch();
    let mut out = vec![0.0; oh * ow * cout];
    let wdat = k.weight().data();
    for oy in 0..oh {
        for ox in 0..ow {
            for oc in 0..cout {
                let mut acc = k.bias().data()[oc];
                for ky in 0..kh {
                    let iy = (oy * s + ky) as isize - p as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..kw {
                        let ix = (ox * s + kx) as isize - p as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let ibase = ((iy as usize) * w + ix as usize) * cin;
                        let wbase = ((oc * cin) * kh + ky) * kw + kx;
                        for ic in 0..cin {
                            // weight layout: out_ch x in_ch x kh x kw
                            acc += input.data()[ibase + ic] * wdat[wbase + ic * kh * kw];
                        }
                    }
                }
                out[(oy * ow + ox) * cout + oc] = acc;
            }
        }
    }
    Tensor::new(vec![oh, ow, cout], out)
}

/// Scale-change modes for [`resample`].
#[derive(Debug, Clone)]
pub enum ResampleMode {
    /// 2x2 max pooling with stride 2; halves both spatial dims.
    MaxPool2,
    /// Nearest-neighbor replication; doubles both spatial dims.
    NearestUp2,
    /// Stride-2 transposed convolution with a 2x2 kernel; doubles both
    /// spatial dims. The kernel's stride/padding fields are ignored.
    TConv2(ConvKernel),
}

/// Changes the spatial scale of an (h, w, c) map by a factor of two.
pub fn resample(input: &Tensor, mode: &ResampleMode) -> Result<Tensor> {
    if input.ndim() != 3 {
        return Err(Error::shape("resample: input must be (h, w, c)"));
    }
    let (h, w, c) = (input.dims()[0], input.dims()[1], input.dims()[2]);
    match mode {
        ResampleMode::MaxPool2 => {
            if h % 2 != 0 || w % 2 != 0 {
                return Err(Error::shape(format!(
                    "maxpool2: dims {h}x{w} must be even"
                )));
            }
            let (oh, ow) = (h / 2, w / 2);
            let mut out = vec![0.0; oh * ow * c];
            for y in 0..oh {
                for x in 0..ow {
                    for ch in 0..c {
                        let v = input
                            .at3(2 * y, 2 * x, ch)
                            .max(input.at3(2 * y, 2 * x + 1, ch))
                            .max(input.at3(2 * y + 1, 2 * x, ch))
                            .max(input.at3(2 * y + 1, 2 * x + 1, ch));
                        out[(y * ow + x) * c + ch] = v;
                    }
                }
            }
            Tensor::new(vec![oh, ow, c], out)
        }
        ResampleMode::NearestUp2 => {
            let (oh, ow) = (2 * h, 2 * w);
            let mut out = vec![0.0; oh * ow * c];
            for y in 0..oh {
                for x in 0..ow {
                    for ch in 0..c {
                        out[(y * ow + x) * c + ch] = input.at3(y / 2, x / 2, ch);
                    }
                }
            }
            Tensor::new(vec![oh, ow, c], out)
        }
        ResampleMode::TConv2(k) => {
            if k.kh() != 2 || k.kw() != 2 {
                return Err(Error::shape(format!(
                    "tconv2: kernel must be 2x2, got {}x{}",
                    k.kh(),
                    k.kw()
                )));
            }
            if k.in_ch() != c {
                return Err(Error::shape(format!(
                    "tconv2: input channels {c} vs kernel in_ch {}",
                    k.in_ch()
                )));
            }
            let cout = k.out_ch();
            let (oh, ow) = (2 * h, 2 * w);
            // Non-overlapping scatter: each input pixel owns one 2x2 output block.
            let mut out = vec![0.0; oh * ow * cout];
            for oc in 0..cout {
                let b = k.bias().data()[oc];
                if b != 0.0 {
                    for cell in out[oc..].iter_mut().step_by(cout) {
                        *cell = b;
                    }
                }
            }
            let wdat = k.weight().data();
            for y in 0..h {
                for x in 0..w {
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let obase = ((2 * y + dy) * ow + 2 * x + dx) * cout;
                            for oc in 0..cout {
                                let mut acc = 0.0;
                                for ic in 0..c {
                                    let widx = ((oc * c + ic) * 2 + dy) * 2 + dx;
                                    acc += input.at3(y, x, ic) * wdat[widx];
                                }
                                out[obase + oc] += acc;
                            }
                        }
                    }
                }
            }
            Tensor::new(vec![oh, ow, cout], out)
        }
    }
}

/// ReLU applied elementwise.
pub fn relu(t: &Tensor) -> Tensor {
    Tensor {
        dims: t.dims.clone(),
        data: t.data.iter().map(|v| v.max(0.0)).collect(),
    }
}

/// Per-row standardization to zero mean and unit variance (eps 1e-6).
/// Parameter-free; used by the pre-norm encoder blocks.
pub fn layer_norm_rows(m: &Tensor) -> Result<Tensor> {
    if m.ndim() != 2 {
        return Err(Error::shape("layer_norm_rows: input must be 2D"));
    }
    let (r, c) = (m.dims()[0], m.dims()[1]);
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        let row = &m.data()[i * c..(i + 1) * c];
        let mean = row.iter().sum::<f64>() / c as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
        let inv = 1.0 / (var + 1e-6).sqrt();
        for j in 0..c {
            out[i * c + j] = (row[j] - mean) * inv;
        }
    }
    Tensor::new(vec![r, c], out)
}

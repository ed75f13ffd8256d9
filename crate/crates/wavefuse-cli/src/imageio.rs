//! Binary containers the harness reads and writes: 8-bit RGB images as
//! PPM (P6) and float feature maps as a raw little-endian container with a
//! 16-byte header (4-byte magic + three u32 dims).

use wavefuse_core::{Error, Result, Tensor};

/// Magic for the float container: "WFD8" = wave-fusion dump, f64 elements.
pub const FEATURE_MAGIC: [u8; 4] = *b"WFD8";

/// Encodes an (h, w, 3) tensor as binary PPM. Values are clamped to
/// [0, 255] and rounded to the nearest integer.
pub fn write_ppm(img: &Tensor) -> Result<Vec<u8>> {
    let dims = img.dims();
    if dims.len() != 3 || dims[2] != 3 || dims[0] == 0 || dims[1] == 0 {
        return Err(Error::shape(format!(
            "ppm writer expects a non-empty (h, w, 3) image, got {dims:?}"
        )));
    }
    let (h, w) = (dims[0], dims[1]);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    out.reserve(h * w * 3);
    for v in img.data() {
        out.push(v.clamp(0.0, 255.0).round() as u8);
    }
    Ok(out)
}

/// Decodes a binary PPM (P6, maxval 255) into an (h, w, 3) tensor with
/// values in [0, 255]. Accepts `#` comments anywhere whitespace is legal,
/// per the format.
pub fn read_ppm(bytes: &[u8]) -> Result<Tensor> {
    let mut pos = 0usize;
    let magic = take_token(bytes, &mut pos)?;
    if magic != b"P6" {
        return Err(Error::format(format!(
            "not a binary ppm: magic {:?}",
            String::from_utf8_lossy(&magic)
        )));
    }
    let w = parse_dim(&take_token(bytes, &mut pos)?, "width")?;
    let h = parse_dim(&take_token(bytes, &mut pos)?, "height")?;
    let maxval = parse_dim(&take_token(bytes, &mut pos)?, "maxval")?;
    if maxval != 255 {
        return Err(Error::format(format!(
            "only maxval 255 is supported, got {maxval}"
        )));
    }
    // Exactly one whitespace byte separates the header from the raster.
    if pos >= bytes.len() || !bytes[pos].is_ascii_whitespace() {
        return Err(Error::format("missing separator before ppm raster"));
    }
    pos += 1;
    let need = h * w * 3;
    let raster = &bytes[pos..];
    if raster.len() != need {
        return Err(Error::format(format!(
            "ppm raster holds {} bytes, expected {need}",
            raster.len()
        )));
    }
    let mut img = Tensor::zeros(vec![h, w, 3])?;
    for (dst, src) in img.data_mut().iter_mut().zip(raster) {
        *dst = *src as f64;
    }
    Ok(img)
}

/// Encodes a 3-D tensor as the raw float container: 16-byte header
/// (magic, then h, w, c as u32 little-endian) followed by f64
/// little-endian values in row-major order. Lossless for f64 data.
pub fn write_feature(t: &Tensor) -> Result<Vec<u8>> {
    let dims = t.dims();
    if dims.len() != 3 {
        return Err(Error::shape(format!(
            "feature container stores 3-d maps, got {dims:?}"
        )));
    }
    if dims.iter().any(|&d| d > u32::MAX as usize) {
        return Err(Error::input("feature dims exceed the u32 header field"));
    }
    let mut out = Vec::with_capacity(16 + t.data().len() * 8);
    out.extend_from_slice(&FEATURE_MAGIC);
    for &d in dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Decodes the raw float container written by [`write_feature`]; exact
/// inverse, bit for bit.
pub fn read_feature(bytes: &[u8]) -> Result<Tensor> {
    if bytes.len() < 16 {
        return Err(Error::format(format!(
            "feature container needs a 16-byte header, got {} bytes",
            bytes.len()
        )));
    }
    if bytes[..4] != FEATURE_MAGIC {
        return Err(Error::format("bad feature container magic"));
    }
    let dim_at = |i: usize| {
        u32::from_le_bytes(bytes[4 + 4 * i..8 + 4 * i].try_into().unwrap()) as usize
    };
    let dims = vec![dim_at(0), dim_at(1), dim_at(2)];
    let count = dims.iter().product::<usize>();
    let payload = &bytes[16..];
    if payload.len() != count * 8 {
        return Err(Error::format(format!(
            "feature payload holds {} bytes, expected {}",
            payload.len(),
            count * 8
        )));
    }
    let mut t = Tensor::zeros(dims)?;
    for (i, dst) in t.data_mut().iter_mut().enumerate() {
        *dst = f64::from_le_bytes(payload[8 * i..8 * i + 8].try_into().unwrap());
    }
    Ok(t)
}

fn parse_dim(token: &[u8], what: &str) -> Result<usize> {
    let s = std::str::from_utf8(token)
        .map_err(|_| Error::format(format!("ppm {what} is not ascii")))?;
    let v: usize = s
        .parse()
        .map_err(|_| Error::format(format!("ppm {what} {s:?} is not a number")))?;
    if v == 0 {
        return Err(Error::format(format!("ppm {what} must be positive")));
    }
    Ok(v)
}

/// Next whitespace-delimited header token, skipping `#` comments.
fn take_token(bytes: &[u8], pos: &mut usize) -> Result<Vec<u8>> {
    loop {
        while *pos < bytes.len() && bytes[*pos].is_ascii_whitespace() {
            *pos += 1;
        }
        if *pos < bytes.len() && bytes[*pos] == b'#' {
            while *pos < bytes.len() && bytes[*pos] != b'\n' {
                *pos += 1;
            }
            continue;
        }
        break;
    }
    let start = *pos;
    while *pos < bytes.len() && !bytes[*pos].is_ascii_whitespace() {
        *pos += 1;
    }
    if start == *pos {
        return Err(Error::format("truncated ppm header"));
    }
    Ok(bytes[start..*pos].to_vec())
}

//! Seeded, severity-parameterized corruption generators for images and
//! point clouds: weather overlays, sensor noise, point dropout, and
//! motion-style distortions, each at five severities.
//!
//! Every generator is a pure function of (input, spec): the RNG stream is
//! derived from the spec alone, so equal inputs and specs give bitwise
//! equal outputs. Count-changing operations remove exactly
//! `floor(n * rate)` elements (seeded shuffle selection), never a
//! Bernoulli approximation.

use crate::error::{Error, Result};
use crate::geometry::{Box3D, SparseDepthMap};
use crate::kitti::{LidarPoint, RawPointCloud};
use crate::rng::{derive_seed, SplitMix64};
use crate::tensor::Tensor;
use std::fmt;
use std::str::FromStr;

/// Closed set of corruption kinds: image weather/noise, LiDAR noise and
/// dropout, object-local variants, and motion-style distortions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CorruptionKind {
    None,
    Snow,
    Rain,
    Fog,
    Sunlight,
    GaussImg,
    UniformImg,
    ImpulseImg,
    MotionBlur,
    GaussLidar,
    UniformLidar,
    ImpulseLidar,
    Density,
    Cutout,
    Crosstalk,
    FovLost,
    LocalDensity,
    LocalCutout,
    LocalGauss,
    LocalUniform,
    LocalImpulse,
    MovingObject,
    Compensation,
}

/// Every kind, in a fixed order usable for exhaustive sweeps.
pub const ALL_KINDS: [CorruptionKind; 23] = [
    CorruptionKind::None,
    CorruptionKind::Snow,
    CorruptionKind::Rain,
    CorruptionKind::Fog,
    CorruptionKind::Sunlight,
    CorruptionKind::GaussImg,
    CorruptionKind::UniformImg,
    CorruptionKind::ImpulseImg,
    CorruptionKind::MotionBlur,
    CorruptionKind::GaussLidar,
    CorruptionKind::UniformLidar,
    CorruptionKind::ImpulseLidar,
    CorruptionKind::Density,
    CorruptionKind::Cutout,
    CorruptionKind::Crosstalk,
    CorruptionKind::FovLost,
    CorruptionKind::LocalDensity,
    CorruptionKind::LocalCutout,
    CorruptionKind::LocalGauss,
    CorruptionKind::LocalUniform,
    CorruptionKind::LocalImpulse,
    CorruptionKind::MovingObject,
    CorruptionKind::Compensation,
];

impl CorruptionKind {
    pub fn name(&self) -> &'static str {
        match self {
            CorruptionKind::None => "none",
            CorruptionKind::Snow => "snow",
            CorruptionKind::Rain => "rain",
            CorruptionKind::Fog => "fog",
            CorruptionKind::Sunlight => "sunlight",
            CorruptionKind::GaussImg => "gauss_img",
            CorruptionKind::UniformImg => "uniform_img",
            CorruptionKind::ImpulseImg => "impulse_img",
            CorruptionKind::MotionBlur => "motion_blur",
            CorruptionKind::GaussLidar => "gauss_lidar",
            CorruptionKind::UniformLidar => "uniform_lidar",
            CorruptionKind::ImpulseLidar => "impulse_lidar",
            CorruptionKind::Density => "density",
            CorruptionKind::Cutout => "cutout",
            CorruptionKind::Crosstalk => "crosstalk",
            CorruptionKind::FovLost => "fov_lost",
            CorruptionKind::LocalDensity => "local_density",
            CorruptionKind::LocalCutout => "local_cutout",
            CorruptionKind::LocalGauss => "local_gauss",
            CorruptionKind::LocalUniform => "local_uniform",
            CorruptionKind::LocalImpulse => "local_impulse",
            CorruptionKind::MovingObject => "moving_object",
            CorruptionKind::Compensation => "compensation",
        }
    }

    /// Kinds applicable to images (`none` applies to both signals).
    pub fn is_image(&self) -> bool {
        matches!(
            self,
            CorruptionKind::None
                | CorruptionKind::Snow
                | CorruptionKind::Rain
                | CorruptionKind::Fog
                | CorruptionKind::Sunlight
                | CorruptionKind::GaussImg
                | CorruptionKind::UniformImg
                | CorruptionKind::ImpulseImg
                | CorruptionKind::MotionBlur
        )
    }

    /// Kinds applicable to point clouds (`none` applies to both signals).
    pub fn is_lidar(&self) -> bool {
        !self.is_image() || *self == CorruptionKind::None
    }

    /// Kinds that perturb only points inside object boxes.
    pub fn requires_boxes(&self) -> bool {
        matches!(
            self,
            CorruptionKind::LocalDensity
                | CorruptionKind::LocalCutout
                | CorruptionKind::LocalGauss
                | CorruptionKind::LocalUniform
                | CorruptionKind::LocalImpulse
                | CorruptionKind::MovingObject
        )
    }

    fn index(&self) -> u64 {
        ALL_KINDS.iter().position(|k| k == self).unwrap() as u64
    }
}

impl FromStr for CorruptionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<CorruptionKind> {
        ALL_KINDS
            .iter()
            .find(|k| k.name() == s)
            .copied()
            .ok_or_else(|| Error::kind(format!("unknown corruption kind {s:?}")))
    }
}

impl fmt::Display for CorruptionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A fully specified corruption: kind, severity 1-5, and RNG seed.
/// Serialized as `kind:severity:seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CorruptionSpec {
    pub kind: CorruptionKind,
    pub severity: u8,
    pub seed: u64,
}

impl CorruptionSpec {
    pub fn new(kind: CorruptionKind, severity: u8, seed: u64) -> Result<CorruptionSpec> {
        if !(1..=5).contains(&severity) {
            return Err(Error::input(format!(
                "severity must be 1..=5, got {severity}"
            )));
        }
        Ok(CorruptionSpec {
            kind,
            severity,
            seed,
        })
    }

    /// RNG for this spec; uncorrelated across kinds, severities and seeds.
    fn rng(&self) -> SplitMix64 {
        SplitMix64::new(derive_seed(
            self.seed,
            &[self.kind.index(), self.severity as u64],
        ))
    }
}

impl FromStr for CorruptionSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<CorruptionSpec> {
        let parts: Vec<&str> = s.split(':').collect();
        if parts.len() != 3 {
            return Err(Error::format(format!(
                "corruption spec must be kind:severity:seed, got {s:?}"
            )));
        }
        let kind = CorruptionKind::from_str(parts[0])?;
        let severity = parts[1]
            .parse::<u8>()
            .map_err(|_| Error::format(format!("bad severity {:?}", parts[1])))?;
        let seed = parts[2]
            .parse::<u64>()
            .map_err(|_| Error::format(format!("bad seed {:?}", parts[2])))?;
        CorruptionSpec::new(kind, severity, seed)
    }
}

impl fmt::Display for CorruptionSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.kind, self.severity, self.seed)
    }
}

/// One severity row: named scalar parameters for a kind.
#[derive(Debug, Clone, PartialEq)]
pub struct SeverityParams {
    pub entries: Vec<(&'static str, f64)>,
}

impl SeverityParams {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.entries
            .iter()
            .find(|(n, _)| *n == name)
            .map(|(_, v)| *v)
    }

    fn req(&self, name: &str) -> f64 {
        self.get(name).expect("parameter present in table")
    }
}

/// The five-severity parameter table per kind. Every scalar sequence is
/// monotone from severity 1 to 5 (mild to severe).
fn kind_table(kind: CorruptionKind) -> &'static [(&'static str, [f64; 5])] {
    match kind {
        CorruptionKind::None => &[],
        CorruptionKind::Snow => &[
            ("flake_density", [0.02, 0.04, 0.07, 0.10, 0.14]),
            ("flake_radius", [1.0, 1.0, 2.0, 2.0, 3.0]),
            ("brightness", [180.0, 195.0, 210.0, 225.0, 240.0]),
        ],
        CorruptionKind::Rain => &[
            ("streak_density", [0.01, 0.02, 0.03, 0.05, 0.08]),
            ("streak_len", [6.0, 8.0, 10.0, 12.0, 14.0]),
            ("brightness", [160.0, 170.0, 180.0, 190.0, 200.0]),
        ],
        CorruptionKind::Fog => &[("fog_density", [0.3, 0.45, 0.6, 0.75, 0.9])],
        CorruptionKind::Sunlight => &[
            ("gain", [1.1, 1.2, 1.3, 1.4, 1.5]),
            ("offset", [20.0, 35.0, 50.0, 65.0, 80.0]),
            ("glare_strength", [60.0, 90.0, 120.0, 150.0, 180.0]),
            ("glare_radius_frac", [0.15, 0.20, 0.25, 0.30, 0.35]),
        ],
        CorruptionKind::GaussImg => &[("sigma", [10.2, 15.3, 20.4, 25.5, 30.6])],
        CorruptionKind::UniformImg => &[("half_width", [10.0, 16.0, 22.0, 28.0, 34.0])],
        CorruptionKind::ImpulseImg => &[("rate", [0.01, 0.02, 0.04, 0.07, 0.10])],
        CorruptionKind::MotionBlur => &[("length", [3.0, 5.0, 7.0, 9.0, 11.0])],
        CorruptionKind::GaussLidar => &[("sigma_m", [0.02, 0.04, 0.06, 0.08, 0.10])],
        CorruptionKind::UniformLidar => &[("half_width_m", [0.03, 0.06, 0.09, 0.12, 0.15])],
        CorruptionKind::ImpulseLidar => &[
            ("rate", [0.01, 0.02, 0.03, 0.05, 0.08]),
            ("magnitude_m", [0.5, 1.0, 1.5, 2.0, 2.5]),
        ],
        CorruptionKind::Density => &[("drop_rate", [0.1, 0.2, 0.3, 0.4, 0.5])],
        CorruptionKind::Cutout => &[
            ("n_spheres", [1.0, 2.0, 3.0, 4.0, 5.0]),
            ("radius_m", [1.0, 1.5, 2.0, 2.5, 3.0]),
        ],
        CorruptionKind::Crosstalk => &[
            ("rate", [0.01, 0.02, 0.04, 0.06, 0.08]),
            ("jitter_m", [1.0, 1.5, 2.0, 2.5, 3.0]),
        ],
        CorruptionKind::FovLost => &[("kept_fov_deg", [300.0, 240.0, 180.0, 120.0, 60.0])],
        CorruptionKind::LocalDensity => &[("drop_rate", [0.2, 0.3, 0.4, 0.5, 0.6])],
        CorruptionKind::LocalCutout => &[("radius_scale", [0.3, 0.45, 0.6, 0.75, 0.9])],
        CorruptionKind::LocalGauss => &[("sigma_m", [0.04, 0.08, 0.12, 0.16, 0.20])],
        CorruptionKind::LocalUniform => &[("half_width_m", [0.06, 0.12, 0.18, 0.24, 0.30])],
        CorruptionKind::LocalImpulse => &[
            ("rate", [0.05, 0.10, 0.15, 0.20, 0.25]),
            ("magnitude_m", [0.5, 0.8, 1.1, 1.4, 1.7]),
        ],
        CorruptionKind::MovingObject => &[("shift_m", [0.2, 0.4, 0.6, 0.8, 1.0])],
        CorruptionKind::Compensation => &[("max_angle_deg", [0.5, 1.0, 1.5, 2.0, 2.5])],
    }
}

/// Parameter row for (kind, severity). Severity outside 1..=5 is an
/// input error.
pub fn severity_params(kind: CorruptionKind, severity: u8) -> Result<SeverityParams> {
    if !(1..=5).contains(&severity) {
        return Err(Error::input(format!(
            "severity must be 1..=5, got {severity}"
        )));
    }
    Ok(SeverityParams {
        entries: kind_table(kind)
            .iter()
            .map(|(name, vals)| (*name, vals[(severity - 1) as usize]))
            .collect(),
    })
}

fn clip255(v: f64) -> f64 {
    v.clamp(0.0, 255.0)
}

/// Flags exactly `k` of `n` items, chosen by seeded shuffle.
fn choose_exact(n: usize, k: usize, rng: &mut SplitMix64) -> Vec<bool> {
    let mut idx: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut idx);
    let mut flags = vec![false; n];
    for &i in idx.iter().take(k.min(n)) {
        flags[i] = true;
    }
    flags
}

fn expect_image(img: &Tensor) -> Result<(usize, usize)> {
    if img.ndim() != 3 || img.dims()[2] != 3 {
        return Err(Error::shape(format!(
            "image must be (h, w, 3), got {:?}",
            img.dims()
        )));
    }
    Ok((img.dims()[0], img.dims()[1]))
}

/// Applies an image corruption. `none` is a bitwise identity; output
/// values are clipped to [0, 255]. Fog uses a constant transmittance here;
/// see [`corrupt_image_with_depth`] for the depth-weighted variant.
pub fn corrupt_image(img: &Tensor, spec: &CorruptionSpec) -> Result<Tensor> {
    corrupt_image_with_depth(img, spec, None)
}

/// Image corruption with an optional scene depth map (same H x W as the
/// image) that weights fog attenuation by distance.
pub fn corrupt_image_with_depth(
    img: &Tensor,
    spec: &CorruptionSpec,
    depth: Option<&SparseDepthMap>,
) -> Result<Tensor> {
    let (h, w) = expect_image(img)?;
    if !spec.kind.is_image() {
        return Err(Error::kind(format!(
            "{} is not an image corruption",
            spec.kind
        )));
    }
    if let Some(d) = depth {
        if d.height != h || d.width != w {
            return Err(Error::shape(format!(
                "depth map {}x{} vs image {h}x{w}",
                d.height, d.width
            )));
        }
    }
    let p = severity_params(spec.kind, spec.severity)?;
    let mut rng = spec.rng();
    let mut out = img.clone();
    match spec.kind {
        CorruptionKind::None => {}
        CorruptionKind::GaussImg => {
            let sigma = p.req("sigma");
            for v in out.data_mut() {
                *v = clip255(*v + sigma * rng.next_gaussian());
            }
        }
        CorruptionKind::UniformImg => {
            let a = p.req("half_width");
            for v in out.data_mut() {
                *v = clip255(*v + rng.next_range(-a, a));
            }
        }
        CorruptionKind::ImpulseImg => {
            let rate = p.req("rate");
            for y in 0..h {
                for x in 0..w {
                    if rng.next_f64() < rate {
                        let v = if rng.next_f64() < 0.5 { 0.0 } else { 255.0 };
                        for c in 0..3 {
                            out.set3(y, x, c, v);
                        }
                    }
                }
            }
        }
        CorruptionKind::Fog => {
            let beta = p.req("fog_density");
            // Attenuation reference distance; cells without a LiDAR return
            // are treated as far background.
            const REF_DIST_M: f64 = 20.0;
            const FAR_M: f64 = 30.0;
            for y in 0..h {
                for x in 0..w {
                    let t = match depth {
                        Some(d) => {
                            let dist = if d.is_valid(y, x) { d.depth_at(y, x) } else { FAR_M };
                            (-beta * dist / REF_DIST_M).exp()
                        }
                        None => (-beta).exp(),
                    };
                    for c in 0..3 {
                        let v = img.at3(y, x, c);
                        out.set3(y, x, c, clip255(v * t + 255.0 * (1.0 - t)));
                    }
                }
            }
        }
        CorruptionKind::Snow => {
            let density = p.req("flake_density");
            let radius = p.req("flake_radius") as i64;
            let bright = p.req("brightness");
            let flakes = (density * (h * w) as f64 / 25.0).floor() as usize;
            for _ in 0..flakes {
                let cx = rng.next_below(w) as i64;
                let cy = rng.next_below(h) as i64;
                for dy in -radius..=radius {
                    for dx in -radius..=radius {
                        if dy * dy + dx * dx > radius * radius {
                            continue;
                        }
                        let (py, px) = (cy + dy, cx + dx);
                        if py < 0 || px < 0 || py >= h as i64 || px >= w as i64 {
                            continue;
                        }
                        for c in 0..3 {
                            let cur = out.at3(py as usize, px as usize, c);
                            out.set3(py as usize, px as usize, c, cur.max(bright));
                        }
                    }
                }
            }
        }
        CorruptionKind::Rain => {
            let density = p.req("streak_density");
            let len = p.req("streak_len") as usize;
            let bright = p.req("brightness");
            let streaks = (density * (h * w) as f64 / 40.0).floor() as usize;
            for _ in 0..streaks {
                let x0 = rng.next_below(w) as f64;
                let y0 = rng.next_below(h) as f64;
                let slope = 0.3 + rng.next_range(-0.2, 0.2);
                for step in 0..len {
                    let px = (x0 + slope * step as f64).round() as i64;
                    let py = (y0 + step as f64).round() as i64;
                    if px < 0 || py < 0 || px >= w as i64 || py >= h as i64 {
                        continue;
                    }
                    for c in 0..3 {
                        let cur = out.at3(py as usize, px as usize, c);
                        out.set3(py as usize, px as usize, c, clip255(0.5 * cur + 0.5 * bright));
                    }
                }
            }
        }
        CorruptionKind::Sunlight => {
            let gain = p.req("gain");
            let offset = p.req("offset");
            let strength = p.req("glare_strength");
            let sigma = p.req("glare_radius_frac") * h.min(w) as f64;
            let gx = rng.next_below(w) as f64;
            let gy = rng.next_below((h / 2).max(1)) as f64;
            for y in 0..h {
                for x in 0..w {
                    let d2 = (x as f64 - gx).powi(2) + (y as f64 - gy).powi(2);
                    let glare = strength * (-d2 / (2.0 * sigma * sigma)).exp();
                    for c in 0..3 {
                        let v = img.at3(y, x, c);
                        out.set3(y, x, c, clip255(gain * v + offset + glare));
                    }
                }
            }
        }
        CorruptionKind::MotionBlur => {
            let len = p.req("length") as usize;
            let half = (len / 2) as i64;
            for y in 0..h {
                for x in 0..w {
                    for c in 0..3 {
                        let mut acc = 0.0;
                        let mut taps = 0usize;
                        for k in -half..=half {
                            let px = x as i64 + k;
                            if px < 0 || px >= w as i64 {
                                continue;
                            }
                            acc += img.at3(y, px as usize, c);
                            taps += 1;
                        }
                        out.set3(y, x, c, acc / taps as f64);
                    }
                }
            }
        }
        _ => unreachable!("image kinds are exhaustive"),
    }
    Ok(out)
}

/// Sphere centers and radius used by the cutout kind for a given cloud
/// and spec; exposed so tests can verify the containment contract.
pub fn cutout_spheres(cloud: &RawPointCloud, spec: &CorruptionSpec) -> Result<Vec<([f64; 3], f64)>> {
    if spec.kind != CorruptionKind::Cutout {
        return Err(Error::kind("cutout_spheres requires kind=cutout"));
    }
    let p = severity_params(spec.kind, spec.severity)?;
    let mut rng = spec.rng();
    let n_spheres = p.req("n_spheres") as usize;
    let radius = p.req("radius_m");
    let mut spheres = Vec::with_capacity(n_spheres);
    if cloud.is_empty() {
        return Ok(spheres);
    }
    for _ in 0..n_spheres {
        let i = rng.next_below(cloud.len());
        let c = cloud.points[i];
        spheres.push(([c.x as f64, c.y as f64, c.z as f64], radius));
    }
    Ok(spheres)
}

fn in_any_box(p: &LidarPoint, boxes: &[Box3D]) -> bool {
    boxes
        .iter()
        .any(|b| b.contains(p.x as f64, p.y as f64, p.z as f64))
}

fn jitter_point(p: &LidarPoint, scale: f64, uniform: bool, rng: &mut SplitMix64) -> LidarPoint {
    let draw = |rng: &mut SplitMix64| {
        if uniform {
            rng.next_range(-scale, scale)
        } else {
            scale * rng.next_gaussian()
        }
    };
    LidarPoint {
        x: (p.x as f64 + draw(rng)) as f32,
        y: (p.y as f64 + draw(rng)) as f32,
        z: (p.z as f64 + draw(rng)) as f32,
        intensity: p.intensity,
    }
}

/// Applies a LiDAR corruption. `none` is identity. Object-local kinds
/// (`local_*`, `moving_object`) require ground-truth boxes and leave
/// points outside every box untouched.
pub fn corrupt_lidar(
    cloud: &RawPointCloud,
    spec: &CorruptionSpec,
    boxes: Option<&[Box3D]>,
) -> Result<RawPointCloud> {
    if !spec.kind.is_lidar() {
        return Err(Error::kind(format!(
            "{} is not a point-cloud corruption",
            spec.kind
        )));
    }
    if spec.kind.requires_boxes() && boxes.is_none() {
        return Err(Error::input(format!(
            "{} requires object boxes",
            spec.kind
        )));
    }
    let p = severity_params(spec.kind, spec.severity)?;
    let mut rng = spec.rng();
    let n = cloud.len();
    let points = &cloud.points;
    let result = match spec.kind {
        CorruptionKind::None => points.clone(),
        CorruptionKind::GaussLidar => {
            let sigma = p.req("sigma_m");
            points
                .iter()
                .map(|pt| jitter_point(pt, sigma, false, &mut rng))
                .collect()
        }
        CorruptionKind::UniformLidar => {
            let a = p.req("half_width_m");
            points
                .iter()
                .map(|pt| jitter_point(pt, a, true, &mut rng))
                .collect()
        }
        CorruptionKind::ImpulseLidar => {
            let k = (n as f64 * p.req("rate")).floor() as usize;
            let mag = p.req("magnitude_m");
            let hit = choose_exact(n, k, &mut rng);
            points
                .iter()
                .enumerate()
                .map(|(i, pt)| {
                    if hit[i] {
                        jitter_point(pt, mag, false, &mut rng)
                    } else {
                        *pt
                    }
                })
                .collect()
        }
        CorruptionKind::Density => {
            let k = (n as f64 * p.req("drop_rate")).floor() as usize;
            let drop = choose_exact(n, k, &mut rng);
            points
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop[*i])
                .map(|(_, pt)| *pt)
                .collect()
        }
        CorruptionKind::Cutout => {
            let spheres = cutout_spheres(cloud, spec)?;
            points
                .iter()
                .filter(|pt| {
                    !spheres.iter().any(|(c, r)| {
                        let dx = pt.x as f64 - c[0];
                        let dy = pt.y as f64 - c[1];
                        let dz = pt.z as f64 - c[2];
                        dx * dx + dy * dy + dz * dz <= r * r
                    })
                })
                .copied()
                .collect()
        }
        CorruptionKind::Crosstalk => {
            let k = (n as f64 * p.req("rate")).floor() as usize;
            let jitter = p.req("jitter_m");
            let hit = choose_exact(n, k, &mut rng);
            points
                .iter()
                .enumerate()
                .map(|(i, pt)| {
                    if hit[i] {
                        jitter_point(pt, jitter, false, &mut rng)
                    } else {
                        *pt
                    }
                })
                .collect()
        }
        CorruptionKind::FovLost => {
            let half = p.req("kept_fov_deg").to_radians() / 2.0;
            points
                .iter()
                .filter(|pt| (pt.y as f64).atan2(pt.x as f64).abs() <= half)
                .copied()
                .collect()
        }
        CorruptionKind::LocalDensity => {
            let boxes = boxes.unwrap();
            let inside: Vec<usize> = (0..n).filter(|&i| in_any_box(&points[i], boxes)).collect();
            let k = (inside.len() as f64 * p.req("drop_rate")).floor() as usize;
            let drop_flags = choose_exact(inside.len(), k, &mut rng);
            let mut drop = vec![false; n];
            for (j, &i) in inside.iter().enumerate() {
                drop[i] = drop_flags[j];
            }
            points
                .iter()
                .enumerate()
                .filter(|(i, _)| !drop[*i])
                .map(|(_, pt)| *pt)
                .collect()
        }
        CorruptionKind::LocalCutout => {
            // Deletes the core of each object: points both inside the box
            // and within a sphere around its center, so points outside
            // every box are never touched.
            let boxes = boxes.unwrap();
            let scale = p.req("radius_scale");
            let spheres: Vec<([f64; 3], f64)> = boxes
                .iter()
                .map(|b| {
                    let diag = (b.size[0] * b.size[0]
                        + b.size[1] * b.size[1]
                        + b.size[2] * b.size[2])
                        .sqrt();
                    (b.center, scale * diag / 2.0)
                })
                .collect();
            points
                .iter()
                .filter(|pt| {
                    !boxes.iter().zip(&spheres).any(|(b, (c, r))| {
                        let dx = pt.x as f64 - c[0];
                        let dy = pt.y as f64 - c[1];
                        let dz = pt.z as f64 - c[2];
                        b.contains(pt.x as f64, pt.y as f64, pt.z as f64)
                            && dx * dx + dy * dy + dz * dz <= r * r
                    })
                })
                .copied()
                .collect()
        }
        CorruptionKind::LocalGauss | CorruptionKind::LocalUniform => {
            let boxes = boxes.unwrap();
            let uniform = spec.kind == CorruptionKind::LocalUniform;
            let scale = if uniform {
                p.req("half_width_m")
            } else {
                p.req("sigma_m")
            };
            points
                .iter()
                .map(|pt| {
                    if in_any_box(pt, boxes) {
                        jitter_point(pt, scale, uniform, &mut rng)
                    } else {
                        *pt
                    }
                })
                .collect()
        }
        CorruptionKind::LocalImpulse => {
            let boxes = boxes.unwrap();
            let inside: Vec<usize> = (0..n).filter(|&i| in_any_box(&points[i], boxes)).collect();
            let k = (inside.len() as f64 * p.req("rate")).floor() as usize;
            let mag = p.req("magnitude_m");
            let hit_flags = choose_exact(inside.len(), k, &mut rng);
            let mut hit = vec![false; n];
            for (j, &i) in inside.iter().enumerate() {
                hit[i] = hit_flags[j];
            }
            points
                .iter()
                .enumerate()
                .map(|(i, pt)| {
                    if hit[i] {
                        jitter_point(pt, mag, false, &mut rng)
                    } else {
                        *pt
                    }
                })
                .collect()
        }
        CorruptionKind::MovingObject => {
            let boxes = boxes.unwrap();
            let shift = p.req("shift_m");
            points
                .iter()
                .map(|pt| {
                    // Shift along the heading of the first box containing
                    // the point; untouched outside all boxes.
                    match boxes
                        .iter()
                        .find(|b| b.contains(pt.x as f64, pt.y as f64, pt.z as f64))
                    {
                        Some(b) => {
                            let (s, c) = b.yaw.sin_cos();
                            LidarPoint {
                                x: (pt.x as f64 + shift * c) as f32,
                                y: (pt.y as f64 + shift * s) as f32,
                                z: pt.z,
                                intensity: pt.intensity,
                            }
                        }
                        None => *pt,
                    }
                })
                .collect()
        }
        CorruptionKind::Compensation => {
            const SECTORS: usize = 8;
            let max_angle = p.req("max_angle_deg").to_radians();
            let errors: Vec<f64> = (0..SECTORS)
                .map(|_| rng.next_range(-max_angle, max_angle))
                .collect();
            points
                .iter()
                .map(|pt| {
                    let az = (pt.y as f64).atan2(pt.x as f64);
                    let frac = (az + std::f64::consts::PI) / std::f64::consts::TAU;
                    let sector = ((frac * SECTORS as f64) as usize).min(SECTORS - 1);
                    let (s, c) = errors[sector].sin_cos();
                    LidarPoint {
                        x: (pt.x as f64 * c - pt.y as f64 * s) as f32,
                        y: (pt.x as f64 * s + pt.y as f64 * c) as f32,
                        z: pt.z,
                        intensity: pt.intensity,
                    }
                })
                .collect()
        }
        _ => unreachable!("lidar kinds are exhaustive"),
    };
    Ok(RawPointCloud { points: result })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(kind: CorruptionKind, severity: u8, seed: u64) -> CorruptionSpec {
        CorruptionSpec::new(kind, severity, seed).unwrap()
    }

    fn test_image(h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = SplitMix64::new(seed);
        let mut img = Tensor::zeros(vec![h, w, 3]).unwrap();
        for v in img.data_mut() {
            *v = rng.next_below(256) as f64;
        }
        img
    }

    fn test_cloud(n: usize, seed: u64) -> RawPointCloud {
        let mut rng = SplitMix64::new(seed);
        RawPointCloud {
            points: (0..n)
                .map(|_| LidarPoint {
                    x: rng.next_range(-30.0, 30.0) as f32,
                    y: rng.next_range(-30.0, 30.0) as f32,
                    z: rng.next_range(-2.0, 2.0) as f32,
                    intensity: rng.next_f64() as f32,
                })
                .collect(),
        }
    }

    #[test]
    fn spec_string_round_trip() {
        let s = spec(CorruptionKind::GaussImg, 3, 42);
        assert_eq!(s.to_string(), "gauss_img:3:42");
        assert_eq!(CorruptionSpec::from_str("gauss_img:3:42").unwrap(), s);
        for kind in ALL_KINDS {
            let s = spec(kind, 5, 7);
            assert_eq!(CorruptionSpec::from_str(&s.to_string()).unwrap(), s);
        }
    }

    #[test]
    fn spec_parse_errors() {
        assert!(CorruptionSpec::from_str("blizzard:3:1").is_err());
        assert!(CorruptionSpec::from_str("fog:0:1").is_err());
        assert!(CorruptionSpec::from_str("fog:6:1").is_err());
        assert!(CorruptionSpec::from_str("fog:3").is_err());
        assert!(CorruptionSpec::from_str("fog:3:1:9").is_err());
        assert!(CorruptionSpec::from_str("fog:x:1").is_err());
        assert!(CorruptionSpec::from_str("fog:3:-1").is_err());
    }

    #[test]
    fn severity_table_pinned_values() {
        for (s, want) in [(1, 0.04), (2, 0.06), (3, 0.08), (4, 0.10), (5, 0.12)] {
            let p = severity_params(CorruptionKind::GaussImg, s).unwrap();
            assert!((p.get("sigma").unwrap() / 255.0 - want).abs() < 1e-12);
        }
        for (s, want) in [(1, 0.1), (2, 0.2), (3, 0.3), (4, 0.4), (5, 0.5)] {
            let p = severity_params(CorruptionKind::Density, s).unwrap();
            assert_eq!(p.get("drop_rate").unwrap(), want);
        }
        for (s, want) in [(1, 3.0), (2, 5.0), (3, 7.0), (4, 9.0), (5, 11.0)] {
            let p = severity_params(CorruptionKind::MotionBlur, s).unwrap();
            assert_eq!(p.get("length").unwrap(), want);
        }
        assert!(severity_params(CorruptionKind::Fog, 0).is_err());
        assert!(severity_params(CorruptionKind::Fog, 6).is_err());
    }

    #[test]
    fn severity_table_monotone_per_parameter() {
        for kind in ALL_KINDS {
            for (name, vals) in kind_table(kind) {
                let inc = vals.windows(2).all(|w| w[0] <= w[1]);
                let dec = vals.windows(2).all(|w| w[0] >= w[1]);
                assert!(
                    inc || dec,
                    "{kind} parameter {name} is not monotone: {vals:?}"
                );
            }
        }
    }

    #[test]
    fn none_is_identity_for_both_signals() {
        let img = test_image(16, 24, 1);
        let s = spec(CorruptionKind::None, 3, 9);
        assert_eq!(corrupt_image(&img, &s).unwrap(), img);
        let cloud = test_cloud(200, 2);
        assert_eq!(corrupt_lidar(&cloud, &s, None).unwrap(), cloud);
    }

    #[test]
    fn determinism_across_kinds() {
        let img = test_image(16, 24, 3);
        let cloud = test_cloud(300, 4);
        let boxes = vec![Box3D::car(5.0, 0.0, 0.0, 0.4)];
        for kind in ALL_KINDS {
            let s = spec(kind, 4, 12345);
            if kind.is_image() {
                let a = corrupt_image(&img, &s).unwrap();
                let b = corrupt_image(&img, &s).unwrap();
                assert_eq!(a, b, "{kind} image not deterministic");
            }
            if kind.is_lidar() {
                let a = corrupt_lidar(&cloud, &s, Some(&boxes)).unwrap();
                let b = corrupt_lidar(&cloud, &s, Some(&boxes)).unwrap();
                assert_eq!(a, b, "{kind} lidar not deterministic");
            }
        }
    }

    #[test]
    fn wrong_signal_kind_rejected() {
        let img = test_image(8, 8, 5);
        assert!(matches!(
            corrupt_image(&img, &spec(CorruptionKind::Density, 1, 0)),
            Err(Error::Kind(_))
        ));
        let cloud = test_cloud(10, 6);
        assert!(matches!(
            corrupt_lidar(&cloud, &spec(CorruptionKind::Fog, 1, 0), None),
            Err(Error::Kind(_))
        ));
    }

    #[test]
    fn image_outputs_stay_in_range() {
        let img = test_image(24, 24, 7);
        for kind in ALL_KINDS.iter().filter(|k| k.is_image()) {
            let out = corrupt_image(&img, &spec(*kind, 5, 3)).unwrap();
            assert!(
                out.data().iter().all(|v| (0.0..=255.0).contains(v)),
                "{kind} leaves range"
            );
        }
    }

    #[test]
    fn impulse_pixels_are_salt_or_pepper() {
        let img = test_image(32, 32, 8);
        let out = corrupt_image(&img, &spec(CorruptionKind::ImpulseImg, 5, 4)).unwrap();
        let mut changed = 0;
        for y in 0..32 {
            for x in 0..32 {
                if (0..3).any(|c| out.at3(y, x, c) != img.at3(y, x, c)) {
                    changed += 1;
                    let v = out.at3(y, x, 0);
                    assert!(v == 0.0 || v == 255.0);
                    assert_eq!(out.at3(y, x, 1), v);
                    assert_eq!(out.at3(y, x, 2), v);
                }
            }
        }
        assert!(changed > 0);
    }

    #[test]
    fn density_exact_count() {
        let cloud = test_cloud(1000, 9);
        let out = corrupt_lidar(&cloud, &spec(CorruptionKind::Density, 5, 1), None).unwrap();
        assert_eq!(out.len(), 500);
        let out1 = corrupt_lidar(&cloud, &spec(CorruptionKind::Density, 1, 1), None).unwrap();
        assert_eq!(out1.len(), 900);
        // Survivors keep their original relative order.
        let mut iter = cloud.points.iter();
        for p in &out.points {
            assert!(iter.any(|q| q == p));
        }
    }

    #[test]
    fn point_count_contracts() {
        let cloud = test_cloud(500, 10);
        let boxes = vec![Box3D::car(5.0, 0.0, 0.0, 0.0)];
        for kind in ALL_KINDS.iter().filter(|k| k.is_lidar()) {
            let out = corrupt_lidar(&cloud, &spec(*kind, 3, 2), Some(&boxes)).unwrap();
            match kind {
                CorruptionKind::Density
                | CorruptionKind::Cutout
                | CorruptionKind::FovLost
                | CorruptionKind::LocalDensity
                | CorruptionKind::LocalCutout => {
                    assert!(out.len() <= cloud.len(), "{kind} grew the cloud")
                }
                _ => assert_eq!(out.len(), cloud.len(), "{kind} changed the count"),
            }
        }
    }

    #[test]
    fn cutout_survivors_outside_spheres() {
        let cloud = test_cloud(800, 11);
        let s = spec(CorruptionKind::Cutout, 4, 5);
        let out = corrupt_lidar(&cloud, &s, None).unwrap();
        let spheres = cutout_spheres(&cloud, &s).unwrap();
        assert_eq!(spheres.len(), 4);
        assert!(out.len() < cloud.len());
        for p in &out.points {
            for (c, r) in &spheres {
                let dx = p.x as f64 - c[0];
                let dy = p.y as f64 - c[1];
                let dz = p.z as f64 - c[2];
                assert!(dx * dx + dy * dy + dz * dz > r * r);
            }
        }
    }

    #[test]
    fn fov_lost_keeps_window() {
        let cloud = test_cloud(500, 12);
        let out = corrupt_lidar(&cloud, &spec(CorruptionKind::FovLost, 3, 0), None).unwrap();
        // Severity 3 keeps a 180 degree window: |azimuth| <= 90 deg.
        for p in &out.points {
            assert!((p.y as f64).atan2(p.x as f64).abs() <= std::f64::consts::FRAC_PI_2 + 1e-9);
        }
        assert!(out.len() < cloud.len());
        assert!(!out.is_empty());
    }

    #[test]
    fn local_kinds_leave_outside_points_untouched() {
        let cloud = test_cloud(600, 13);
        let boxes = vec![
            Box3D::car(5.0, 2.0, 0.0, 0.3),
            Box3D::car(-8.0, -4.0, 0.0, -1.0),
        ];
        for kind in [
            CorruptionKind::LocalDensity,
            CorruptionKind::LocalCutout,
            CorruptionKind::LocalGauss,
            CorruptionKind::LocalUniform,
            CorruptionKind::LocalImpulse,
            CorruptionKind::MovingObject,
        ] {
            let out = corrupt_lidar(&cloud, &spec(kind, 5, 3), Some(&boxes)).unwrap();
            let outside: Vec<&LidarPoint> = cloud
                .points
                .iter()
                .filter(|p| !in_any_box(p, &boxes))
                .collect();
            // Every original outside point must appear unchanged.
            for p in outside {
                assert!(
                    out.points.iter().any(|q| q == p),
                    "{kind} modified an outside point"
                );
            }
            // And boxes must be required.
            assert!(matches!(
                corrupt_lidar(&cloud, &spec(kind, 5, 3), None),
                Err(Error::Input(_))
            ));
        }
    }

    #[test]
    fn moving_object_shifts_along_heading() {
        let yaw = 0.7;
        let b = Box3D::car(10.0, 0.0, 0.0, yaw);
        let cloud = RawPointCloud {
            points: vec![LidarPoint {
                x: 10.0,
                y: 0.0,
                z: 0.0,
                intensity: 0.5,
            }],
        };
        let s = spec(CorruptionKind::MovingObject, 5, 0);
        let out = corrupt_lidar(&cloud, &s, Some(&[b])).unwrap();
        let p = out.points[0];
        let want_x = 10.0 + 1.0 * yaw.cos();
        let want_y = 1.0 * yaw.sin();
        assert!((p.x as f64 - want_x).abs() < 1e-6);
        assert!((p.y as f64 - want_y).abs() < 1e-6);
        assert_eq!(p.z, 0.0);
    }

    #[test]
    fn compensation_preserves_range_and_height() {
        let cloud = test_cloud(300, 14);
        let out = corrupt_lidar(&cloud, &spec(CorruptionKind::Compensation, 5, 6), None).unwrap();
        for (a, b) in cloud.points.iter().zip(&out.points) {
            let ra = ((a.x as f64).powi(2) + (a.y as f64).powi(2)).sqrt();
            let rb = ((b.x as f64).powi(2) + (b.y as f64).powi(2)).sqrt();
            assert!((ra - rb).abs() < 1e-4);
            assert_eq!(a.z, b.z);
            assert_eq!(a.intensity, b.intensity);
        }
    }

    #[test]
    fn gauss_severity_increases_image_distortion() {
        let img = test_image(32, 32, 15);
        let mut prev = 0.0;
        for severity in 1..=5 {
            let mut total = 0.0;
            for seed in 0..5 {
                let out =
                    corrupt_image(&img, &spec(CorruptionKind::GaussImg, severity, seed)).unwrap();
                total += out.mse(&img).unwrap();
            }
            let mean = total / 5.0;
            assert!(
                mean > prev,
                "severity {severity} mse {mean} not above {prev}"
            );
            prev = mean;
        }
    }

    #[test]
    fn fog_with_depth_attenuates_far_pixels_more() {
        let img = Tensor::filled(vec![8, 8, 3], 100.0).unwrap();
        let mut depth = SparseDepthMap::new(8, 8);
        depth.record(0, 0, 2.0); // near
        depth.record(7, 7, 60.0); // far
        let s = spec(CorruptionKind::Fog, 3, 0);
        let out = corrupt_image_with_depth(&img, &s, Some(&depth)).unwrap();
        // Fog pushes toward white; the far pixel moves further.
        let near_shift = out.at3(0, 0, 0) - 100.0;
        let far_shift = out.at3(7, 7, 0) - 100.0;
        assert!(far_shift > near_shift);
        assert!(near_shift > 0.0);
    }

    #[test]
    fn motion_blur_preserves_constant_images() {
        let img = Tensor::filled(vec![8, 12, 3], 77.0).unwrap();
        let out = corrupt_image(&img, &spec(CorruptionKind::MotionBlur, 5, 0)).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-12);
    }
}

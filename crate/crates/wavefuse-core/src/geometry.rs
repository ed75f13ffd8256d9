//! Projection of LiDAR points to a sparse image-plane depth map, and
//! oriented-box IoU primitives used by suppression and evaluation.

use crate::error::{Error, Result};
use crate::kitti::{CalibrationSet, RawPointCloud};
use crate::tensor::Tensor;

/// Per-pixel (depth, valid) raster. Depth is in meters where `valid` is
/// true and exactly 0.0 elsewhere.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseDepthMap {
    pub height: usize,
    pub width: usize,
    depth: Vec<f64>,
    valid: Vec<bool>,
}

impl SparseDepthMap {
    pub fn new(height: usize, width: usize) -> SparseDepthMap {
        SparseDepthMap {
            height,
            width,
            depth: vec![0.0; height * width],
            valid: vec![false; height * width],
        }
    }

    pub fn depth_at(&self, y: usize, x: usize) -> f64 {
        self.depth[y * self.width + x]
    }

    pub fn is_valid(&self, y: usize, x: usize) -> bool {
        self.valid[y * self.width + x]
    }

    /// Marks a return at (y, x). Keeps the smaller depth on collision.
    pub fn record(&mut self, y: usize, x: usize, depth: f64) {
        let i = y * self.width + x;
        if !self.valid[i] || depth < self.depth[i] {
            self.depth[i] = depth;
            self.valid[i] = true;
        }
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|v| **v).count()
    }

    /// Two-channel tensor view: channel 0 depth (m), channel 1 validity
    /// mask in {0, 1}. Requires positive dims.
    pub fn to_tensor(&self) -> Result<Tensor> {
        let mut t = Tensor::zeros(vec![self.height, self.width, 2])?;
        for y in 0..self.height {
            for x in 0..self.width {
                t.set3(y, x, 0, self.depth_at(y, x));
                t.set3(y, x, 1, if self.is_valid(y, x) { 1.0 } else { 0.0 });
            }
        }
        Ok(t)
    }
}

/// Oriented 3D box: geometric center in the LiDAR frame, size (l, w, h)
/// with l along the heading, yaw about +z measured from +x.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Box3D {
    pub center: [f64; 3],
    /// (length, width, height), all > 0.
    pub size: [f64; 3],
    /// Normalized to (-pi, pi].
    pub yaw: f64,
}

impl Box3D {
    /// Car anchor size (l, w, h) in meters.
    pub const CAR_ANCHOR_LWH: [f64; 3] = [3.9, 1.6, 1.56];

    pub fn new(center: [f64; 3], size: [f64; 3], yaw: f64) -> Result<Box3D> {
        if !(center.iter().all(|v| v.is_finite()) && yaw.is_finite()) {
            return Err(Error::input("box has non-finite fields"));
        }
        if !size.iter().all(|v| v.is_finite() && *v > 0.0) {
            return Err(Error::input(format!("box size must be positive, got {size:?}")));
        }
        Ok(Box3D {
            center,
            size,
            yaw: normalize_yaw(yaw),
        })
    }

    /// Car-sized box at the given center and yaw.
    pub fn car(x: f64, y: f64, z: f64, yaw: f64) -> Box3D {
        Box3D::new([x, y, z], Box3D::CAR_ANCHOR_LWH, yaw).expect("anchor dims are valid")
    }

    pub fn volume(&self) -> f64 {
        self.size[0] * self.size[1] * self.size[2]
    }

    /// Footprint corners in the x-y plane, counterclockwise.
    pub fn bev_corners(&self) -> [[f64; 2]; 4] {
        let (s, c) = self.yaw.sin_cos();
        let (hl, hw) = (self.size[0] / 2.0, self.size[1] / 2.0);
        let at = |a: f64, b: f64| {
            [
                self.center[0] + a * c - b * s,
                self.center[1] + a * s + b * c,
            ]
        };
        [at(hl, hw), at(-hl, hw), at(-hl, -hw), at(hl, -hw)]
    }

    /// Vertical extent [z_min, z_max].
    pub fn z_range(&self) -> [f64; 2] {
        let hh = self.size[2] / 2.0;
        [self.center[2] - hh, self.center[2] + hh]
    }

    /// True if the x-y point lies inside (or on) the rotated footprint.
    pub fn contains_bev(&self, x: f64, y: f64) -> bool {
        let dx = x - self.center[0];
        let dy = y - self.center[1];
        let (s, c) = self.yaw.sin_cos();
        let along = dx * c + dy * s;
        let across = -dx * s + dy * c;
        along.abs() <= self.size[0] / 2.0 && across.abs() <= self.size[1] / 2.0
    }

    /// True if the 3D point lies inside (or on) the box.
    pub fn contains(&self, x: f64, y: f64, z: f64) -> bool {
        let [z0, z1] = self.z_range();
        z >= z0 && z <= z1 && self.contains_bev(x, y)
    }

    /// Axis-aligned bounds of the footprint: [x0, y0, x1, y1].
    pub fn bev_aabb(&self) -> [f64; 4] {
        let corners = self.bev_corners();
        let mut out = [f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        for [x, y] in corners {
            out[0] = out[0].min(x);
            out[1] = out[1].min(y);
            out[2] = out[2].max(x);
            out[3] = out[3].max(y);
        }
        out
    }
}

/// Maps an angle into (-pi, pi].
pub fn normalize_yaw(yaw: f64) -> f64 {
    let tau = std::f64::consts::TAU;
    let mut y = yaw.rem_euclid(tau);
    if y > std::f64::consts::PI {
        y -= tau;
    }
    y
}

/// Rounds an image coordinate to its pixel index: nearest integer, ties
/// toward the smaller index.
fn pixel_index(coord: f64) -> i64 {
    (coord - 0.5).ceil() as i64
}

/// Projects a point cloud through `calib` onto an H x W image plane.
///
/// Each point with positive projective depth and in-bounds pixel records
/// (depth, valid = 1) at its rounded pixel; pixel collisions keep the
/// smaller depth. The result is independent of point order.
pub fn project_points(
    cloud: &RawPointCloud,
    calib: &CalibrationSet,
    height: usize,
    width: usize,
) -> Result<SparseDepthMap> {
    if height == 0 || width == 0 {
        return Err(Error::input("projection target must be non-empty"));
    }
    if !calib.is_finite() {
        return Err(Error::input("calibration contains non-finite values"));
    }
    let mut map = SparseDepthMap::new(height, width);
    for p in &cloud.points {
        if let Some((u, v, depth)) = project_one(calib, p.x as f64, p.y as f64, p.z as f64) {
            let (px, py) = (pixel_index(u), pixel_index(v));
            if px >= 0 && py >= 0 && (px as usize) < width && (py as usize) < height {
                map.record(py as usize, px as usize, depth);
            }
        }
    }
    Ok(map)
}

/// Projects one LiDAR-frame point; None if it lands behind the camera.
pub fn project_one(calib: &CalibrationSet, x: f64, y: f64, z: f64) -> Option<(f64, f64, f64)> {
    let tr = &calib.tr_velo_to_cam;
    let cam = [
        tr[0][0] * x + tr[0][1] * y + tr[0][2] * z + tr[0][3],
        tr[1][0] * x + tr[1][1] * y + tr[1][2] * z + tr[1][3],
        tr[2][0] * x + tr[2][1] * y + tr[2][2] * z + tr[2][3],
    ];
    let r = &calib.r0_rect;
    let rect = [
        r[0][0] * cam[0] + r[0][1] * cam[1] + r[0][2] * cam[2],
        r[1][0] * cam[0] + r[1][1] * cam[1] + r[1][2] * cam[2],
        r[2][0] * cam[0] + r[2][1] * cam[1] + r[2][2] * cam[2],
    ];
    let p = &calib.p2;
    let hom = [
        p[0][0] * rect[0] + p[0][1] * rect[1] + p[0][2] * rect[2] + p[0][3],
        p[1][0] * rect[0] + p[1][1] * rect[1] + p[1][2] * rect[2] + p[1][3],
        p[2][0] * rect[0] + p[2][1] * rect[1] + p[2][2] * rect[2] + p[2][3],
    ];
    if hom[2] <= 0.0 {
        return None;
    }
    Some((hom[0] / hom[2], hom[1] / hom[2], hom[2]))
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Clips a convex polygon by one half-plane (left of edge a->b).
fn clip_edge(poly: &[[f64; 2]], a: [f64; 2], b: [f64; 2]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(poly.len() + 1);
    for i in 0..poly.len() {
        let cur = poly[i];
        let prev = poly[(i + poly.len() - 1) % poly.len()];
        let cur_in = cross(a, b, cur) >= 0.0;
        let prev_in = cross(a, b, prev) >= 0.0;
        if cur_in != prev_in {
            // Segment crosses the edge line: add the intersection.
            let dc = cross(a, b, cur);
            let dp = cross(a, b, prev);
            let t = dp / (dp - dc);
            out.push([
                prev[0] + t * (cur[0] - prev[0]),
                prev[1] + t * (cur[1] - prev[1]),
            ]);
        }
        if cur_in {
            out.push(cur);
        }
    }
    out
}

fn polygon_area(poly: &[[f64; 2]]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..poly.len() {
        let [x0, y0] = poly[i];
        let [x1, y1] = poly[(i + 1) % poly.len()];
        sum += x0 * y1 - x1 * y0;
    }
    sum.abs() / 2.0
}

/// Intersection area of two counterclockwise convex polygons.
fn convex_intersection_area(a: &[[f64; 2]; 4], b: &[[f64; 2]; 4]) -> f64 {
    let mut poly: Vec<[f64; 2]> = a.to_vec();
    for i in 0..4 {
        if poly.is_empty() {
            break;
        }
        poly = clip_edge(&poly, b[i], b[(i + 1) % 4]);
    }
    polygon_area(&poly)
}

/// Orders a box pair canonically so pair-symmetric computations are
/// bitwise identical regardless of argument order.
fn ordered<'a>(a: &'a Box3D, b: &'a Box3D) -> (&'a Box3D, &'a Box3D) {
    let key = |bx: &Box3D| {
        (
            bx.center[0].to_bits(),
            bx.center[1].to_bits(),
            bx.center[2].to_bits(),
            bx.size[0].to_bits(),
            bx.size[1].to_bits(),
            bx.size[2].to_bits(),
            bx.yaw.to_bits(),
        )
    };
    if key(a) <= key(b) {
        (a, b)
    } else {
        (b, a)
    }
}

fn bev_intersection_area(a: &Box3D, b: &Box3D) -> f64 {
    let (a, b) = ordered(a, b);
    convex_intersection_area(&a.bev_corners(), &b.bev_corners())
}

/// IoU of the two yaw-rotated footprints in the x-y plane.
pub fn rotated_bev_iou(a: &Box3D, b: &Box3D) -> f64 {
    let inter = bev_intersection_area(a, b);
    let union = a.size[0] * a.size[1] + b.size[0] * b.size[1] - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// Volumetric IoU: BEV intersection times z-extent overlap, over the
/// union of the two box volumes.
pub fn iou3d(a: &Box3D, b: &Box3D) -> f64 {
    let [az0, az1] = a.z_range();
    let [bz0, bz1] = b.z_range();
    let dz = (az1.min(bz1) - az0.max(bz0)).max(0.0);
    let inter = bev_intersection_area(a, b) * dz;
    let union = a.volume() + b.volume() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

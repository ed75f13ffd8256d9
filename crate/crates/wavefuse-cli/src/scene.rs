//! Synthetic scene generation: car-sized boxes on a flat ground plane,
//! surface-sampled LiDAR returns, and a flat-shaded camera render over a
//! textured background. Everything is a pure function of (seed, config),
//! so scenes are bitwise reproducible.

use wavefuse_core::{
    derive_seed, project_one, project_points, rotated_bev_iou, Box3D, CalibrationSet, Error,
    LidarPoint, RawPointCloud, Result, SparseDepthMap, SplitMix64, Tensor,
};

use crate::config::BenchConfig;

/// Ground plane height in the sensor frame (sensor at z = 0).
pub const GROUND_Z: f64 = -1.7;

/// Pinhole focal length used for every synthetic scene.
pub const FOCAL: f64 = 120.0;

/// Minimum BEV distance between object centers; keeps point clusters
/// separable and implies zero footprint overlap for car-sized boxes.
const MIN_SEPARATION: f64 = 5.5;

/// Sampled surface points sit this far inside the box faces, so float
/// rounding can never push them outside their own box.
const FACE_INSET: f64 = 0.01;

const PLACEMENT_ATTEMPTS: usize = 1000;

/// One synthetic frame: ground-truth boxes, LiDAR sweep, RGB image in
/// [0, 255], and the camera calibration that ties them together.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub gt_boxes: Vec<Box3D>,
    pub cloud: RawPointCloud,
    pub image: Tensor,
    pub calib: CalibrationSet,
}

/// Generates a scene from a seed. Object boxes are pairwise disjoint in
/// BEV (IoU exactly 0); placement gives up with a generation error after
/// 1000 rejected samples.
pub fn synth_scene(seed: u64, cfg: &BenchConfig) -> Result<SyntheticScene> {
    let mut rng = SplitMix64::new(derive_seed(seed, &[0x5ce7e]));
    let calib = CalibrationSet::simple_pinhole(
        FOCAL,
        cfg.image_width as f64 / 2.0,
        cfg.image_height as f64 / 2.0,
    );

    let span = cfg.objects_max - cfg.objects_min + 1;
    let n_objects = cfg.objects_min + rng.next_below(span);
    let gt_boxes = place_boxes(n_objects, cfg, &mut rng)?;

    let mut points = Vec::with_capacity(n_objects * cfg.box_points + cfg.ground_points);
    for b in &gt_boxes {
        sample_box_surface(b, cfg.box_points, &mut rng, &mut points);
    }
    for _ in 0..cfg.ground_points {
        let x = rng.next_range(cfg.x_min, cfg.x_max);
        let y = rng.next_range(cfg.y_min, cfg.y_max);
        let z = GROUND_Z + rng.next_range(-0.03, 0.03);
        let intensity = rng.next_range(0.05, 0.4);
        points.push(LidarPoint {
            x: x as f32,
            y: y as f32,
            z: z as f32,
            intensity: intensity as f32,
        });
    }

    let image = render_image(&gt_boxes, &calib, cfg, &mut rng)?;

    Ok(SyntheticScene {
        gt_boxes,
        cloud: RawPointCloud { points },
        image,
        calib,
    })
}

/// Depth map of the scene's cloud on the scene's image plane.
pub fn scene_depth(scene: &SyntheticScene, cfg: &BenchConfig) -> Result<SparseDepthMap> {
    project_points(
        &scene.cloud,
        &scene.calib,
        cfg.image_height,
        cfg.image_width,
    )
}

fn place_boxes(n: usize, cfg: &BenchConfig, rng: &mut SplitMix64) -> Result<Vec<Box3D>> {
    // Keep boxes a few meters off the grid edge (and in front of the
    // camera) when the grid is large enough to allow it.
    let lo_x = (cfg.x_min + 3.0).max(3.0);
    let hi_x = cfg.x_max - 3.0;
    let (lo_x, hi_x) = if lo_x < hi_x {
        (lo_x, hi_x)
    } else {
        (cfg.x_min.max(0.5), cfg.x_max)
    };
    let (lo_y, hi_y) = if cfg.y_min + 3.0 < cfg.y_max - 3.0 {
        (cfg.y_min + 3.0, cfg.y_max - 3.0)
    } else {
        (cfg.y_min, cfg.y_max)
    };

    let height = Box3D::CAR_ANCHOR_LWH[2];
    let mut boxes: Vec<Box3D> = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while boxes.len() < n {
        if attempts >= PLACEMENT_ATTEMPTS {
            return Err(Error::generation(format!(
                "placed {} of {n} objects after {PLACEMENT_ATTEMPTS} attempts; grid too crowded",
                boxes.len()
            )));
        }
        attempts += 1;
        let x = rng.next_range(lo_x, hi_x);
        let y = rng.next_range(lo_y, hi_y);
        let yaw = rng.next_range(-std::f64::consts::PI, std::f64::consts::PI);
        let cand = Box3D::new([x, y, GROUND_Z + height / 2.0], Box3D::CAR_ANCHOR_LWH, yaw)?;
        let clear = boxes.iter().all(|b| {
            let dx = b.center[0] - x;
            let dy = b.center[1] - y;
            (dx * dx + dy * dy).sqrt() >= MIN_SEPARATION && rotated_bev_iou(b, &cand) == 0.0
        });
        if clear {
            boxes.push(cand);
        }
    }
    Ok(boxes)
}

/// Samples `n` returns on the four walls and roof of a box, weighted by
/// face area, points inset from the faces by [`FACE_INSET`].
fn sample_box_surface(b: &Box3D, n: usize, rng: &mut SplitMix64, out: &mut Vec<LidarPoint>) {
    let [l, w, h] = b.size;
    let (hl, hw, hh) = (l / 2.0 - FACE_INSET, w / 2.0 - FACE_INSET, h / 2.0 - FACE_INSET);
    // Walls at +-x' and +-y', then the roof.
    let areas = [w * h, w * h, l * h, l * h, l * w];
    let total: f64 = areas.iter().sum();
    let (s, c) = b.yaw.sin_cos();
    for _ in 0..n {
        let mut t = rng.next_range(0.0, total);
        let mut face = 0;
        while face + 1 < areas.len() && t >= areas[face] {
            t -= areas[face];
            face += 1;
        }
        let (lx, ly, lz) = match face {
            0 => (hl, rng.next_range(-hw, hw), rng.next_range(-hh, hh)),
            1 => (-hl, rng.next_range(-hw, hw), rng.next_range(-hh, hh)),
            2 => (rng.next_range(-hl, hl), hw, rng.next_range(-hh, hh)),
            3 => (rng.next_range(-hl, hl), -hw, rng.next_range(-hh, hh)),
            _ => (rng.next_range(-hl, hl), rng.next_range(-hw, hw), hh),
        };
        let x = b.center[0] + lx * c - ly * s;
        let y = b.center[1] + lx * s + ly * c;
        let z = b.center[2] + lz;
        let intensity = rng.next_range(0.3, 0.9);
        out.push(LidarPoint {
            x: x as f32,
            y: y as f32,
            z: z as f32,
            intensity: intensity as f32,
        });
    }
}

/// Flat color assigned to object `i` in draw order.
fn object_color(i: usize) -> [f64; 3] {
    [
        (150 + (i * 53) % 90) as f64,
        (60 + (i * 37) % 80) as f64,
        (60 + (i * 71) % 120) as f64,
    ]
}

fn render_image(
    boxes: &[Box3D],
    calib: &CalibrationSet,
    cfg: &BenchConfig,
    rng: &mut SplitMix64,
) -> Result<Tensor> {
    let (h, w) = (cfg.image_height, cfg.image_width);
    let mut img = Tensor::zeros(vec![h, w, 3])?;
    // Checkered background with per-pixel noise.
    for y in 0..h {
        for x in 0..w {
            let base = 70.0 + 35.0 * (((x / 16) + (y / 16)) % 2) as f64;
            let n = rng.next_range(-12.0, 12.0);
            img.set3(y, x, 0, (base + n + 8.0).clamp(0.0, 255.0));
            img.set3(y, x, 1, (base + n).clamp(0.0, 255.0));
            img.set3(y, x, 2, (base + n - 8.0).clamp(0.0, 255.0));
        }
    }
    // Far to near, so closer objects overdraw.
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].center[0].partial_cmp(&boxes[a].center[0]).unwrap());
    for &i in &order {
        if let Some(hull) = projected_hull(&boxes[i], calib) {
            fill_hull(&mut img, &hull, object_color(i));
        }
    }
    Ok(img)
}

/// Convex hull (counterclockwise) of a box's eight projected corners, or
/// None if any corner falls behind the camera.
fn projected_hull(b: &Box3D, calib: &CalibrationSet) -> Option<Vec<(f64, f64)>> {
    let bev = b.bev_corners();
    let [z0, z1] = b.z_range();
    let mut pts = Vec::with_capacity(8);
    for [x, y] in bev {
        for z in [z0, z1] {
            let (u, v, _) = project_one(calib, x, y, z)?;
            pts.push((u, v));
        }
    }
    Some(convex_hull(pts))
}

/// Andrew's monotone chain; returns the hull counterclockwise in image
/// coordinates (v axis pointing down).
fn convex_hull(mut pts: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let build = |iter: &mut dyn Iterator<Item = (f64, f64)>| {
        let mut chain: Vec<(f64, f64)> = Vec::new();
        for p in iter {
            while chain.len() >= 2
                && cross(chain[chain.len() - 2], chain[chain.len() - 1], p) <= 0.0
            {
                chain.pop();
            }
            chain.push(p);
        }
        chain
    };
    let mut lower = build(&mut pts.iter().copied());
    let mut upper = build(&mut pts.iter().rev().copied());
    lower.pop();
    upper.pop();
    lower.append(&mut upper);
    lower
}

fn fill_hull(img: &mut Tensor, hull: &[(f64, f64)], color: [f64; 3]) {
    if hull.len() < 3 {
        return;
    }
    let (h, w) = (img.dims()[0] as i64, img.dims()[1] as i64);
    let (mut u0, mut v0, mut u1, mut v1) = (f64::MAX, f64::MAX, f64::MIN, f64::MIN);
    for &(u, v) in hull {
        u0 = u0.min(u);
        v0 = v0.min(v);
        u1 = u1.max(u);
        v1 = v1.max(v);
    }
    let px0 = (u0.floor() as i64).max(0);
    let px1 = (u1.ceil() as i64).min(w - 1);
    let py0 = (v0.floor() as i64).max(0);
    let py1 = (v1.ceil() as i64).min(h - 1);
    for py in py0..=py1 {
        for px in px0..=px1 {
            if hull_contains(hull, (px as f64, py as f64)) {
                for c in 0..3 {
                    img.set3(py as usize, px as usize, c, color[c]);
                }
            }
        }
    }
}

fn hull_contains(hull: &[(f64, f64)], p: (f64, f64)) -> bool {
    let n = hull.len();
    for i in 0..n {
        let a = hull[i];
        let b = hull[(i + 1) % n];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (b.1 - a.1) * (p.0 - a.0);
        if cross < 0.0 {
            return false;
        }
    }
    true
}

//! Bit-exact readers and writers for the KITTI on-disk formats: velodyne
//! point-cloud `.bin`, calibration `.txt`, and label `.txt` files.
//!
//! Each reader has a symmetric writer so round trips can be tested. Floats
//! in text files are printed with Rust's shortest round-trip formatting, so
//! `parse(format(x)) == x` field for field.

use crate::error::{Error, Result};

/// One LiDAR return: coordinates in meters (sensor frame), reflectance in
/// [0, 1]. Stored as f32 to match the on-disk width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LidarPoint {
    pub x: f32,
    pub y: f32,
    pub z: f32,
    pub intensity: f32,
}

/// A LiDAR sweep in file order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RawPointCloud {
    pub points: Vec<LidarPoint>,
}

impl RawPointCloud {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Camera projection and rigid transforms from a KITTI calib file.
///
/// `p2` is the 3x4 left-color-camera projection, `r0_rect` the 3x3
/// rectification, `tr_velo_to_cam` the 3x4 LiDAR-to-camera transform.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationSet {
    pub p2: [[f64; 4]; 3],
    pub r0_rect: [[f64; 3]; 3],
    pub tr_velo_to_cam: [[f64; 4]; 3],
}

impl CalibrationSet {
    /// Pinhole camera with identity rectification and extrinsics, looking
    /// down the LiDAR +x axis. Used by synthetic scenes and tests.
    pub fn simple_pinhole(focal: f64, cx: f64, cy: f64) -> CalibrationSet {
        CalibrationSet {
            p2: [
                [focal, 0.0, cx, 0.0],
                [0.0, focal, cy, 0.0],
                [0.0, 0.0, 1.0, 0.0],
            ],
            r0_rect: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
            // LiDAR (x fwd, y left, z up) -> camera (x right, y down, z fwd).
            tr_velo_to_cam: [
                [0.0, -1.0, 0.0, 0.0],
                [0.0, 0.0, -1.0, 0.0],
                [1.0, 0.0, 0.0, 0.0],
            ],
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p2.iter().flatten().all(|v| v.is_finite())
            && self.r0_rect.iter().flatten().all(|v| v.is_finite())
            && self.tr_velo_to_cam.iter().flatten().all(|v| v.is_finite())
    }
}

/// One line of a KITTI label file (ground truth or detection).
#[derive(Debug, Clone, PartialEq)]
pub struct LabelRecord {
    pub class_name: String,
    pub truncation: f64,
    pub occlusion: i64,
    pub alpha: f64,
    /// (x1, y1, x2, y2) in pixels.
    pub bbox2d: [f64; 4],
    /// (height, width, length) in meters.
    pub dims_hwl: [f64; 3],
    /// Object location (x, y, z) in the camera frame, meters.
    pub location: [f64; 3],
    pub rotation_y: f64,
    /// Present iff the line had 16 fields (a detection).
    pub score: Option<f64>,
}

impl LabelRecord {
    /// "DontCare" regions are retained by the parser; evaluators skip them
    /// through this flag rather than never seeing them.
    pub fn is_dont_care(&self) -> bool {
        self.class_name == "DontCare"
    }

    /// 2D box height in pixels; drives the difficulty buckets.
    pub fn bbox_height(&self) -> f64 {
        self.bbox2d[3] - self.bbox2d[1]
    }
}

/// Decodes a velodyne `.bin` payload: little-endian f32 quadruples
/// (x, y, z, intensity) in file order.
pub fn read_velodyne_bin(bytes: &[u8]) -> Result<RawPointCloud> {
    if bytes.len() % 16 != 0 {
        return Err(Error::format(format!(
            "velodyne payload length {} is not a multiple of 16",
            bytes.len()
        )));
    }
    let mut points = Vec::with_capacity(bytes.len() / 16);
    for chunk in bytes.chunks_exact(16) {
        let f = |i: usize| f32::from_le_bytes([chunk[i], chunk[i + 1], chunk[i + 2], chunk[i + 3]]);
        points.push(LidarPoint {
            x: f(0),
            y: f(4),
            z: f(8),
            intensity: f(12),
        });
    }
    Ok(RawPointCloud { points })
}

/// Encodes a point cloud as a velodyne `.bin` payload; exact inverse of
/// [`read_velodyne_bin`].
pub fn write_velodyne_bin(cloud: &RawPointCloud) -> Vec<u8> {
    let mut out = Vec::with_capacity(cloud.len() * 16);
    for p in &cloud.points {
        out.extend_from_slice(&p.x.to_le_bytes());
        out.extend_from_slice(&p.y.to_le_bytes());
        out.extend_from_slice(&p.z.to_le_bytes());
        out.extend_from_slice(&p.intensity.to_le_bytes());
    }
    out
}

fn parse_matrix_line(line: &str, key: &str, expect: usize) -> Result<Vec<f64>> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| Error::format(format!("calib {key}: bad number {tok:?}")))
        })
        .collect::<Result<_>>()?;
    if values.len() != expect {
        return Err(Error::format(format!(
            "calib {key}: expected {expect} values, got {}",
            values.len()
        )));
    }
    Ok(values)
}

/// Parses a KITTI calib file: lines of `KEY: v1 v2 ...`. Keys other than
/// P2, R0_rect, and Tr_velo_to_cam are ignored.
pub fn parse_calib(text: &str) -> Result<CalibrationSet> {
    let mut p2: Option<Vec<f64>> = None;
    let mut r0: Option<Vec<f64>> = None;
    let mut tr: Option<Vec<f64>> = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, rest)) = line.split_once(':') else {
            continue;
        };
        match key.trim() {
            "P2" => p2 = Some(parse_matrix_line(rest, "P2", 12)?),
            "R0_rect" => r0 = Some(parse_matrix_line(rest, "R0_rect", 9)?),
            "Tr_velo_to_cam" => tr = Some(parse_matrix_line(rest, "Tr_velo_to_cam", 12)?),
            _ => {}
        }
    }
    let p2 = p2.ok_or_else(|| Error::format("calib missing key P2"))?;
    let r0 = r0.ok_or_else(|| Error::format("calib missing key R0_rect"))?;
    let tr = tr.ok_or_else(|| Error::format("calib missing key Tr_velo_to_cam"))?;
    let mut calib = CalibrationSet {
        p2: [[0.0; 4]; 3],
        r0_rect: [[0.0; 3]; 3],
        tr_velo_to_cam: [[0.0; 4]; 3],
    };
    for r in 0..3 {
        for c in 0..4 {
            calib.p2[r][c] = p2[r * 4 + c];
            calib.tr_velo_to_cam[r][c] = tr[r * 4 + c];
        }
        for c in 0..3 {
            calib.r0_rect[r][c] = r0[r * 3 + c];
        }
    }
    Ok(calib)
}

/// Writes the three required calib keys in KITTI layout.
pub fn format_calib(calib: &CalibrationSet) -> String {
    let row = |vals: &[f64]| {
        vals.iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(" ")
    };
    let flat4 = |m: &[[f64; 4]; 3]| row(&m.iter().flatten().cloned().collect::<Vec<_>>());
    let flat3 = |m: &[[f64; 3]; 3]| row(&m.iter().flatten().cloned().collect::<Vec<_>>());
    format!(
        "P2: {}\nR0_rect: {}\nTr_velo_to_cam: {}\n",
        flat4(&calib.p2),
        flat3(&calib.r0_rect),
        flat4(&calib.tr_velo_to_cam)
    )
}

/// Parses a KITTI label file: one whitespace-delimited record per line with
/// 15 fields (ground truth) or 16 (detection, trailing score).
pub fn parse_labels(text: &str) -> Result<Vec<LabelRecord>> {
    let mut records = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 15 && fields.len() != 16 {
            return Err(Error::format(format!(
                "label line {}: expected 15 or 16 fields, got {}",
                idx + 1,
                fields.len()
            )));
        }
        let num = |i: usize| -> Result<f64> {
            fields[i].parse::<f64>().map_err(|_| {
                Error::format(format!(
                    "label line {}: field {} is not a number: {:?}",
                    idx + 1,
                    i + 1,
                    fields[i]
                ))
            })
        };
        records.push(LabelRecord {
            class_name: fields[0].to_string(),
            truncation: num(1)?,
            occlusion: num(2)? as i64,
            alpha: num(3)?,
            bbox2d: [num(4)?, num(5)?, num(6)?, num(7)?],
            dims_hwl: [num(8)?, num(9)?, num(10)?],
            location: [num(11)?, num(12)?, num(13)?],
            rotation_y: num(14)?,
            score: if fields.len() == 16 { Some(num(15)?) } else { None },
        });
    }
    Ok(records)
}

/// Formats label records back to KITTI text; inverse of [`parse_labels`].
pub fn format_labels(records: &[LabelRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&format!(
            "{} {} {} {} {} {} {} {} {} {} {} {} {} {} {}",
            r.class_name,
            r.truncation,
            r.occlusion,
            r.alpha,
            r.bbox2d[0],
            r.bbox2d[1],
            r.bbox2d[2],
            r.bbox2d[3],
            r.dims_hwl[0],
            r.dims_hwl[1],
            r.dims_hwl[2],
            r.location[0],
            r.location[1],
            r.location[2],
            r.rotation_y
        ));
        if let Some(s) = r.score {
            out.push_str(&format!(" {s}"));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    const CALIB_SAMPLE: &str = "\
P0: 1 0 0 0 0 1 0 0 0 0 1 0
P1: 1 0 0 0 0 1 0 0 0 0 1 0
P2: 721.5377 0 609.5593 44.857 0 721.5377 172.854 0.2163791 0 0 1 0.002745884
R0_rect: 0.9999239 0.00983776 -0.007445048 -0.0098698 0.9999421 -0.004278459 0.007427559 0.004316297 0.9999631
Tr_velo_to_cam: 0.007533745 -0.9999714 -0.000616602 -0.004069766 0.01480249 0.0007280733 -0.9998902 -0.07631618 0.9998621 0.00752379 0.0148556 -0.2717806
";

    #[test]
    fn velodyne_single_point() {
        let mut bytes = Vec::new();
        for v in [1.0f32, 2.0, 3.0, 0.5] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let cloud = read_velodyne_bin(&bytes).unwrap();
        assert_eq!(cloud.len(), 1);
        assert_eq!(
            cloud.points[0],
            LidarPoint {
                x: 1.0,
                y: 2.0,
                z: 3.0,
                intensity: 0.5
            }
        );
    }

    #[test]
    fn velodyne_empty_and_bad_length() {
        assert!(read_velodyne_bin(&[]).unwrap().is_empty());
        assert!(matches!(
            read_velodyne_bin(&[0u8; 17]),
            Err(Error::Format(_))
        ));
    }

    #[test]
    fn velodyne_round_trip_bit_exact() {
        let mut rng = SplitMix64::new(5);
        let points: Vec<LidarPoint> = (0..500)
            .map(|_| LidarPoint {
                x: rng.next_range(-80.0, 80.0) as f32,
                y: rng.next_range(-80.0, 80.0) as f32,
                z: rng.next_range(-4.0, 3.0) as f32,
                intensity: rng.next_f64() as f32,
            })
            .collect();
        let cloud = RawPointCloud { points };
        let back = read_velodyne_bin(&write_velodyne_bin(&cloud)).unwrap();
        assert_eq!(cloud, back);
    }

    #[test]
    fn calib_canonical_sample() {
        let calib = parse_calib(CALIB_SAMPLE).unwrap();
        assert!((calib.p2[0][0] - 721.5377).abs() < 1e-9);
        assert!((calib.p2[1][2] - 172.854).abs() < 1e-9);
        assert!((calib.tr_velo_to_cam[0][1] - -0.9999714).abs() < 1e-9);
        assert!((calib.r0_rect[2][2] - 0.9999631).abs() < 1e-9);
        assert!((calib.p2[2][2] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn calib_missing_key_rejected() {
        let text = "R0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
        let err = parse_calib(text).unwrap_err();
        assert!(err.to_string().contains("P2"));
    }

    #[test]
    fn calib_wrong_value_count_rejected() {
        let text = "P2: 1 2 3\nR0_rect: 1 0 0 0 1 0 0 0 1\nTr_velo_to_cam: 1 0 0 0 0 1 0 0 0 0 1 0\n";
        assert!(matches!(parse_calib(text), Err(Error::Format(_))));
    }

    #[test]
    fn calib_round_trip() {
        let calib = parse_calib(CALIB_SAMPLE).unwrap();
        let back = parse_calib(&format_calib(&calib)).unwrap();
        assert_eq!(calib, back);
    }

    #[test]
    fn labels_single_car() {
        let text = "Car 0.00 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.70 -1.59\n";
        let recs = parse_labels(text).unwrap();
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].class_name, "Car");
        assert_eq!(recs[0].score, None);
        assert!(!recs[0].is_dont_care());
        assert!((recs[0].dims_hwl[2] - 3.64).abs() < 1e-12);
    }

    #[test]
    fn labels_empty_and_malformed() {
        assert!(parse_labels("").unwrap().is_empty());
        let short = "Car 0.0 0 -1.58 587 173 614 200 1.65 1.67 3.64 -0.65 1.71 46.7\n";
        let err = parse_labels(short).unwrap_err();
        assert!(err.to_string().contains("line 1"), "{err}");
    }

    #[test]
    fn labels_detection_score_and_dont_care() {
        let text = "\
Car 0.0 0 -1.58 587.01 173.33 614.12 200.12 1.65 1.67 3.64 -0.65 1.71 46.7 -1.59 0.92
DontCare -1 -1 -10 503.89 169.71 590.61 190.13 -1 -1 -1 -1000 -1000 -1000 -10
";
        let recs = parse_labels(text).unwrap();
        assert_eq!(recs[0].score, Some(0.92));
        assert!(recs[1].is_dont_care());
        assert_eq!(recs[1].score, None);
    }

    #[test]
    fn labels_round_trip_field_exact() {
        let mut rng = SplitMix64::new(17);
        let recs: Vec<LabelRecord> = (0..40)
            .map(|i| LabelRecord {
                class_name: if i % 7 == 0 { "DontCare" } else { "Car" }.to_string(),
                truncation: rng.next_f64(),
                occlusion: rng.next_below(4) as i64,
                alpha: rng.next_range(-3.14, 3.14),
                bbox2d: [
                    rng.next_range(0.0, 500.0),
                    rng.next_range(0.0, 200.0),
                    rng.next_range(500.0, 1200.0),
                    rng.next_range(200.0, 370.0),
                ],
                dims_hwl: [
                    rng.next_range(1.0, 2.0),
                    rng.next_range(1.4, 2.0),
                    rng.next_range(3.0, 5.0),
                ],
                location: [
                    rng.next_range(-30.0, 30.0),
                    rng.next_range(0.5, 2.5),
                    rng.next_range(3.0, 70.0),
                ],
                rotation_y: rng.next_range(-3.14, 3.14),
                score: if i % 2 == 0 { Some(rng.next_f64()) } else { None },
            })
            .collect();
        let back = parse_labels(&format_labels(&recs)).unwrap();
        assert_eq!(recs, back);
    }
}

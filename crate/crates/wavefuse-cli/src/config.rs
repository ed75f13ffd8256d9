//! Benchmark configuration: a flat `key = value` text format with a fixed
//! key set. Unknown keys are rejected so typos fail loudly instead of
//! silently running defaults.

use wavefuse_core::{CorruptionKind, Error, Result};

/// Everything the benchmark needs: scene generation, corruption matrix,
/// detector thresholds. [`BenchConfig::default`] is the pinned benchmark
/// that the acceptance checks time and reproduce byte for byte.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Number of synthetic scenes in the evaluation set.
    pub scenes: usize,
    /// Inclusive range for objects per scene.
    pub objects_min: usize,
    pub objects_max: usize,
    /// Root seed; every scene, corruption, and parameter seed derives
    /// from it.
    pub base_seed: u64,
    /// Camera image size; both must be multiples of 32 so the image
    /// pyramid strides divide evenly.
    pub image_height: usize,
    pub image_width: usize,
    /// BEV grid cell edge in meters.
    pub cell_size: f64,
    /// BEV extent in the sensor frame, x forward / y left.
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    /// Points sampled on the ground plane per scene.
    pub ground_points: usize,
    /// Points sampled on each object's surface.
    pub box_points: usize,
    /// Corruption kinds in the evaluation matrix.
    pub kinds: Vec<CorruptionKind>,
    /// Severity levels in the matrix, each in 1..=5.
    pub severities: Vec<u8>,
    /// Minimum detection score kept before ranking.
    pub score_thresh: f64,
    /// Candidate cap (by score) ahead of duplicate suppression.
    pub pre_nms_top: usize,
    /// Overlap above which a lower-scored candidate is suppressed.
    pub nms_iou: f64,
    /// BEV overlap a detection needs to claim a ground truth.
    pub match_iou: f64,
    /// Final cap on detections per scene.
    pub max_detections: usize,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            scenes: 20,
            objects_min: 1,
            objects_max: 3,
            base_seed: 7,
            image_height: 96,
            image_width: 160,
            cell_size: 0.05,
            x_min: 0.0,
            x_max: 40.0,
            y_min: -20.0,
            y_max: 20.0,
            ground_points: 1500,
            box_points: 320,
            kinds: vec![
                CorruptionKind::Density,
                CorruptionKind::Cutout,
                CorruptionKind::GaussLidar,
                CorruptionKind::GaussImg,
                CorruptionKind::Fog,
                CorruptionKind::MotionBlur,
            ],
            severities: vec![1, 2, 3, 4, 5],
            score_thresh: 0.05,
            pre_nms_top: 300,
            nms_iou: 0.7,
            match_iou: 0.7,
            max_detections: 100,
        }
    }
}

impl BenchConfig {
    /// Parses the flat config text. Grammar: one `key = value` per line;
    /// blank lines and lines starting with `#` are skipped; list values
    /// are comma-separated. Keys may repeat (last one wins); keys outside
    /// the schema are an error. Missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<BenchConfig> {
        let mut cfg = BenchConfig::default();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::format(format!("config line {}: expected key = value", idx + 1))
            })?;
            let (key, value) = (key.trim(), value.trim());
            cfg.apply(key, value)
                .map_err(|e| Error::format(format!("config line {}: {e}", idx + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "scenes" => self.scenes = parse_num(key, value)?,
            "objects_min" => self.objects_min = parse_num(key, value)?,
            "objects_max" => self.objects_max = parse_num(key, value)?,
            "base_seed" => self.base_seed = parse_num(key, value)?,
            "image_height" => self.image_height = parse_num(key, value)?,
            "image_width" => self.image_width = parse_num(key, value)?,
            "cell_size" => self.cell_size = parse_num(key, value)?,
            "x_min" => self.x_min = parse_num(key, value)?,
            "x_max" => self.x_max = parse_num(key, value)?,
            "y_min" => self.y_min = parse_num(key, value)?,
            "y_max" => self.y_max = parse_num(key, value)?,
            "ground_points" => self.ground_points = parse_num(key, value)?,
            "box_points" => self.box_points = parse_num(key, value)?,
            "kinds" => {
                self.kinds = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?
            }
            "severities" => {
                self.severities = value
                    .split(',')
                    .map(|s| parse_num::<u8>("severities", s.trim()))
                    .collect::<Result<_>>()?
            }
            "score_thresh" => self.score_thresh = parse_num(key, value)?,
            "pre_nms_top" => self.pre_nms_top = parse_num(key, value)?,
            "nms_iou" => self.nms_iou = parse_num(key, value)?,
            "match_iou" => self.match_iou = parse_num(key, value)?,
            "max_detections" => self.max_detections = parse_num(key, value)?,
            other => {
                return Err(Error::format(format!("unknown config key {other:?}")));
            }
        }
        Ok(())
    }

    /// Structural invariants every run relies on.
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::input(msg));
        if self.scenes == 0 {
            return fail("scenes must be at least 1".into());
        }
        if self.objects_min > self.objects_max {
            return fail(format!(
                "object count range [{}, {}] is empty",
                self.objects_min, self.objects_max
            ));
        }
        for (name, v) in [
            ("image_height", self.image_height),
            ("image_width", self.image_width),
        ] {
            if v == 0 || v % 32 != 0 {
                return fail(format!("{name} must be a positive multiple of 32, got {v}"));
            }
        }
        if !(self.cell_size.is_finite() && self.cell_size > 0.0) {
            return fail(format!("cell_size must be positive, got {}", self.cell_size));
        }
        if !(self.x_min < self.x_max) || !(self.y_min < self.y_max) {
            return fail(format!(
                "grid range [{}, {}] x [{}, {}] is empty",
                self.x_min, self.x_max, self.y_min, self.y_max
            ));
        }
        if self.kinds.is_empty() {
            return fail("kinds must list at least one corruption".into());
        }
        if self.severities.is_empty() {
            return fail("severities must list at least one level".into());
        }
        if let Some(bad) = self.severities.iter().find(|s| !(1..=5).contains(*s)) {
            return fail(format!("severity {bad} is outside 1..=5"));
        }
        if !(0.0..=1.0).contains(&self.score_thresh) {
            return fail(format!(
                "score_thresh must be in [0, 1], got {}",
                self.score_thresh
            ));
        }
        for (name, v) in [("nms_iou", self.nms_iou), ("match_iou", self.match_iou)] {
            if !(v > 0.0 && v <= 1.0) {
                return fail(format!("{name} must be in (0, 1], got {v}"));
            }
        }
        if self.pre_nms_top == 0 || self.max_detections == 0 {
            return fail("pre_nms_top and max_detections must be at least 1".into());
        }
        Ok(())
    }

    /// BEV grid shape (rows along x, cols along y) implied by the range
    /// and cell size.
    pub fn grid_dims(&self) -> (usize, usize) {
        let nx = ((self.x_max - self.x_min) / self.cell_size).ceil() as usize;
        let ny = ((self.y_max - self.y_min) / self.cell_size).ceil() as usize;
        (nx.max(1), ny.max(1))
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format(format!("bad value {value:?} for {key}")))
}

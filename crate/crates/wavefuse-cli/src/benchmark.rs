//! The benchmark loop: synthesize the scene set once, score it clean,
//! then score it under every (kind, severity) cell of the corruption
//! matrix. Corruption happens at evaluation time from derived seeds, so
//! the clean scenes are shared and every cell is independently
//! reproducible.

use rayon::prelude::*;
use wavefuse_core::{
    ap_r40, corrupt_image_with_depth, corrupt_lidar, curve_from_labels, derive_seed,
    label_matches, BenchmarkReport, CorruptionKind, CorruptionSpec, Error, IouKind, ReportRow,
    Result,
};

use crate::config::BenchConfig;
use crate::detector::{toy_detect, PipelineParams};
use crate::scene::{scene_depth, synth_scene, SyntheticScene};

/// Applies one corruption to a scene copy: point-cloud kinds touch the
/// cloud (with ground-truth boxes available to the object-local ones),
/// image kinds touch the image, and the depth-aware image kinds see the
/// clean cloud's projected depth.
pub fn corrupt_scene(
    scene: &SyntheticScene,
    kind: CorruptionKind,
    severity: u8,
    seed: u64,
    cfg: &BenchConfig,
) -> Result<SyntheticScene> {
    let spec = CorruptionSpec::new(kind, severity, seed)?;
    let mut out = scene.clone();
    if kind.is_lidar() {
        out.cloud = corrupt_lidar(&scene.cloud, &spec, Some(&scene.gt_boxes))?;
    }
    if kind.is_image() {
        let depth = scene_depth(scene, cfg)?;
        out.image = corrupt_image_with_depth(&scene.image, &spec, Some(&depth))?;
    }
    Ok(out)
}

/// AP of the scene set under an optional corruption, pooling detection
/// labels across scenes into one sweep.
fn evaluate_cell(
    scenes: &[SyntheticScene],
    corruption: Option<(CorruptionKind, u8)>,
    params: &PipelineParams,
    cfg: &BenchConfig,
) -> Result<f64> {
    let mut labels = Vec::new();
    let mut total_gt = 0usize;
    for (si, scene) in scenes.iter().enumerate() {
        let dets = match corruption {
            None => toy_detect(scene, params, cfg)?,
            Some((kind, severity)) => {
                let seed = derive_seed(cfg.base_seed, &[0xc0a, si as u64]);
                let corrupted = corrupt_scene(scene, kind, severity, seed, cfg)?;
                toy_detect(&corrupted, params, cfg)?
            }
        };
        labels.extend(label_matches(
            &dets,
            &scene.gt_boxes,
            cfg.match_iou,
            IouKind::Bev,
        ));
        total_gt += scene.gt_boxes.len();
    }
    if total_gt == 0 {
        return Err(Error::input(
            "scene set has no ground-truth objects; raise objects_min",
        ));
    }
    ap_r40(&curve_from_labels(labels, total_gt))
}

/// Runs the whole benchmark described by `cfg` and assembles the report.
/// Matrix cells run in parallel on the ambient thread pool; results are
/// collected in matrix order, so the report does not depend on thread
/// count or timing.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchmarkReport> {
    cfg.validate()?;
    let params = PipelineParams::seeded(derive_seed(cfg.base_seed, &[0x9a7a]))?;
    let scenes = (0..cfg.scenes)
        .map(|i| synth_scene(derive_seed(cfg.base_seed, &[0x11, i as u64]), cfg))
        .collect::<Result<Vec<_>>>()?;

    let ap_clean = evaluate_cell(&scenes, None, &params, cfg)?;

    let pairs: Vec<(CorruptionKind, u8)> = cfg
        .kinds
        .iter()
        .flat_map(|k| cfg.severities.iter().map(move |s| (*k, *s)))
        .collect();
    let rows = pairs
        .par_iter()
        .map(|&(kind, severity)| {
            let ap = evaluate_cell(&scenes, Some((kind, severity)), &params, cfg)?;
            Ok(ReportRow {
                kind: kind.name().to_string(),
                severity,
                ap,
            })
        })
        .collect::<Result<Vec<ReportRow>>>()?;

    BenchmarkReport::from_results(ap_clean, rows)
}

/// [`run_benchmark`] on a dedicated pool of `threads` workers (None uses
/// the ambient pool). The report is identical either way; only wall time
/// changes.
pub fn run_benchmark_with_threads(cfg: &BenchConfig, threads: Option<usize>) -> Result<BenchmarkReport> {
    match threads {
        None => run_benchmark(cfg),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::generation(format!("thread pool: {e}")))?;
            pool.install(|| run_benchmark(cfg))
        }
    }
}

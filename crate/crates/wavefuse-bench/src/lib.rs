//! Shared inputs for the criterion benchmarks: deterministic tensors,
//! boxes, and precision/recall curves sized like the benchmark harness's
//! own workloads.

use wavefuse_core::{Box3D, PRCurve, SplitMix64, Tensor};

/// Seeded feature map of the given spatial size and channel count.
pub fn bench_map(h: usize, w: usize, c: usize, seed: u64) -> Tensor {
    let mut rng = SplitMix64::new(seed);
    Tensor::randn(vec![h, w, c], 1.0, &mut rng).unwrap()
}

/// Pair of overlapping rotated boxes exercising the polygon-clipping path.
pub fn bench_box_pair(seed: u64) -> (Box3D, Box3D) {
    let mut rng = SplitMix64::new(seed);
    let a = Box3D::car(
        rng.next_range(-2.0, 2.0),
        rng.next_range(-2.0, 2.0),
        0.0,
        rng.next_range(-3.0, 3.0),
    );
    let b = Box3D::car(
        a.center[0] + rng.next_range(-1.5, 1.5),
        a.center[1] + rng.next_range(-1.5, 1.5),
        0.0,
        rng.next_range(-3.0, 3.0),
    );
    (a, b)
}

/// Synthetic sweep curve with the given number of points.
pub fn bench_curve(n: usize, seed: u64) -> PRCurve {
    let mut rng = SplitMix64::new(seed);
    let total_gt = (n / 2).max(1);
    let mut tp = 0usize;
    let mut points = Vec::with_capacity(n);
    for i in 0..n {
        if rng.next_f64() < 0.5 && tp < total_gt {
            tp += 1;
        }
        points.push((tp as f64 / total_gt as f64, tp as f64 / (i + 1) as f64));
    }
    PRCurve { points, total_gt }
}

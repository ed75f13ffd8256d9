//! `bench`: run the corruption-robustness benchmark, corrupt single
//! files, score detection files, or summarize image statistics.
//!
//! Label files (for `eval` and `corrupt --boxes`) use the KITTI record
//! layout, with `location` read as the box center (x, y, z) in the sensor
//! frame and `rotation_y` as the yaw about +z. Detection files carry the
//! 16th score field; classes are ignored (single-class evaluation).

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::json;
use wavefuse_core::{
    ap_r40, corrupt_image, corrupt_lidar, dataset_pixel_stats, match_detections, parse_labels,
    read_velodyne_bin, write_velodyne_bin, Box3D, CorruptionKind, CorruptionSpec, Detection,
    IouKind, LabelRecord,
};
use wavefuse_cli::{read_ppm, run_benchmark_with_threads, write_ppm, BenchConfig};

#[derive(Parser)]
#[command(
    name = "bench",
    version,
    about = "Deterministic corruption-robustness benchmark for multi-modal 3D detection"
)]
struct Cli {
    /// Output format for reports and query results (default: both files
    /// for `run`, plain text for `eval`/`stats`).
    #[arg(long, global = true, value_enum)]
    format: Option<OutFormat>,
    /// Worker threads for the benchmark matrix (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the full benchmark matrix from a config file.
    Run {
        /// Flat `key = value` config file; unknown keys are rejected.
        #[arg(long)]
        config: PathBuf,
        /// Output directory for report.csv / report.json.
        #[arg(long)]
        out: PathBuf,
    },
    /// Corrupt one image (.ppm) or point cloud (.bin) file.
    Corrupt {
        /// Corruption kind name, e.g. fog or gauss_lidar.
        #[arg(long)]
        kind: String,
        /// Severity level 1..=5.
        #[arg(long)]
        severity: u8,
        /// Corruption seed.
        #[arg(long)]
        seed: u64,
        /// Input file; the extension picks the signal (.ppm or .bin).
        #[arg(long = "in")]
        input: PathBuf,
        /// Output file.
        #[arg(long)]
        out: PathBuf,
        /// Label file with object boxes, required by object-local kinds.
        #[arg(long)]
        boxes: Option<PathBuf>,
    },
    /// Score a detection label file against a ground-truth label file.
    Eval {
        #[arg(long)]
        dets: PathBuf,
        #[arg(long)]
        gts: PathBuf,
        /// Overlap a detection needs to claim a ground truth.
        #[arg(long, default_value_t = 0.7)]
        iou: f64,
        /// Overlap kind: bev or 3d.
        #[arg(long, default_value = "bev")]
        overlap: String,
    },
    /// Mean pixel value per image and the Gaussian fit across a directory
    /// of .ppm images.
    Stats {
        #[arg(long)]
        images: PathBuf,
    },
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Run { config, out } => cmd_run(&config, &out, cli.format, cli.threads),
        Cmd::Corrupt {
            kind,
            severity,
            seed,
            input,
            out,
            boxes,
        } => cmd_corrupt(&kind, severity, seed, &input, &out, boxes.as_deref()),
        Cmd::Eval {
            dets,
            gts,
            iou,
            overlap,
        } => cmd_eval(&dets, &gts, iou, &overlap, cli.format),
        Cmd::Stats { images } => cmd_stats(&images, cli.format),
    }
}

fn cmd_run(
    config: &Path,
    out: &Path,
    format: Option<OutFormat>,
    threads: Option<usize>,
) -> Result<()> {
    let text = fs::read_to_string(config)
        .with_context(|| format!("reading config {}", config.display()))?;
    let cfg = BenchConfig::parse(&text)?;
    let report = run_benchmark_with_threads(&cfg, threads)?;
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    if format != Some(OutFormat::Csv) {
        let path = out.join("report.json");
        fs::write(&path, report.to_json() + "\n")
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    if format != Some(OutFormat::Json) {
        let path = out.join("report.csv");
        fs::write(&path, report.to_csv())
            .with_context(|| format!("writing {}", path.display()))?;
        println!("wrote {}", path.display());
    }
    println!(
        "scenes {} | matrix {} kinds x {} severities",
        cfg.scenes,
        cfg.kinds.len(),
        cfg.severities.len()
    );
    println!("ap_clean    {:.4}", report.ap_clean);
    println!("ap_cor_mean {:.4}", report.ap_cor_mean);
    println!("rce         {:.4}%", report.rce);
    Ok(())
}

fn cmd_corrupt(
    kind: &str,
    severity: u8,
    seed: u64,
    input: &Path,
    out: &Path,
    boxes: Option<&Path>,
) -> Result<()> {
    let kind: CorruptionKind = kind.parse()?;
    let spec = CorruptionSpec::new(kind, severity, seed)?;
    let gt = match boxes {
        Some(path) => {
            let text = fs::read_to_string(path)
                .with_context(|| format!("reading boxes {}", path.display()))?;
            Some(gt_boxes(&parse_labels(&text)?)?)
        }
        None => None,
    };
    let ext = input
        .extension()
        .and_then(|e| e.to_str())
        .unwrap_or_default()
        .to_ascii_lowercase();
    match ext.as_str() {
        "ppm" => {
            let bytes =
                fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let img = read_ppm(&bytes)?;
            let corrupted = corrupt_image(&img, &spec)?;
            fs::write(out, write_ppm(&corrupted)?)
                .with_context(|| format!("writing {}", out.display()))?;
        }
        "bin" => {
            let bytes =
                fs::read(input).with_context(|| format!("reading {}", input.display()))?;
            let cloud = read_velodyne_bin(&bytes)?;
            let corrupted = corrupt_lidar(&cloud, &spec, gt.as_deref())?;
            fs::write(out, write_velodyne_bin(&corrupted))
                .with_context(|| format!("writing {}", out.display()))?;
        }
        other => bail!("cannot infer signal from extension {other:?} (use .ppm or .bin)"),
    }
    println!("wrote {}", out.display());
    Ok(())
}

fn cmd_eval(
    dets_path: &Path,
    gts_path: &Path,
    iou: f64,
    overlap: &str,
    format: Option<OutFormat>,
) -> Result<()> {
    let kind = match overlap {
        "bev" => IouKind::Bev,
        "3d" => IouKind::ThreeD,
        other => bail!("unknown overlap kind {other:?} (use bev or 3d)"),
    };
    let dets_text = fs::read_to_string(dets_path)
        .with_context(|| format!("reading detections {}", dets_path.display()))?;
    let gts_text = fs::read_to_string(gts_path)
        .with_context(|| format!("reading ground truth {}", gts_path.display()))?;
    let dets = det_list(&parse_labels(&dets_text)?)?;
    let gts = gt_boxes(&parse_labels(&gts_text)?)?;
    let curve = match_detections(&dets, &gts, iou, kind);
    let ap = ap_r40(&curve)?;
    let pairs = [
        ("ap_r40", format!("{ap}")),
        ("detections", dets.len().to_string()),
        ("ground_truths", gts.len().to_string()),
        ("iou", iou.to_string()),
        ("overlap", overlap.to_string()),
    ];
    print_pairs(&pairs, format);
    Ok(())
}

fn cmd_stats(dir: &Path, format: Option<OutFormat>) -> Result<()> {
    let mut names: Vec<PathBuf> = fs::read_dir(dir)
        .with_context(|| format!("listing {}", dir.display()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.extension()
                .and_then(|e| e.to_str())
                .is_some_and(|e| e.eq_ignore_ascii_case("ppm"))
        })
        .collect();
    names.sort();
    if names.is_empty() {
        bail!("no .ppm images in {}", dir.display());
    }
    let mut images = Vec::with_capacity(names.len());
    for path in &names {
        let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        images.push(read_ppm(&bytes).with_context(|| format!("decoding {}", path.display()))?);
    }
    let stats = dataset_pixel_stats(&images)?;
    let mut pairs: Vec<(String, String)> = names
        .iter()
        .zip(&stats.per_image)
        .map(|(p, m)| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                format!("{m}"),
            )
        })
        .collect();
    pairs.push(("dataset_mean".into(), format!("{}", stats.mean)));
    pairs.push(("dataset_std".into(), format!("{}", stats.std)));
    let borrowed: Vec<(&str, String)> = pairs
        .iter()
        .map(|(k, v)| (k.as_str(), v.clone()))
        .collect();
    print_pairs(&borrowed, format);
    Ok(())
}

fn print_pairs(pairs: &[(&str, String)], format: Option<OutFormat>) {
    match format {
        Some(OutFormat::Csv) => {
            println!("key,value");
            for (k, v) in pairs {
                println!("{k},{v}");
            }
        }
        Some(OutFormat::Json) => {
            let mut map = serde_json::Map::new();
            for (k, v) in pairs {
                // Numbers stay numbers in JSON where they parse as f64.
                let val = v
                    .parse::<f64>()
                    .ok()
                    .and_then(|f| serde_json::Number::from_f64(f).map(serde_json::Value::Number))
                    .unwrap_or_else(|| json!(v));
                map.insert((*k).to_string(), val);
            }
            println!("{}", serde_json::to_string_pretty(&map).expect("valid json"));
        }
        None => {
            for (k, v) in pairs {
                println!("{k} {v}");
            }
        }
    }
}

/// Ground-truth boxes from label records; DontCare rows are skipped.
fn gt_boxes(records: &[LabelRecord]) -> Result<Vec<Box3D>> {
    records
        .iter()
        .filter(|r| !r.is_dont_care())
        .map(record_box)
        .collect::<wavefuse_core::Result<_>>()
        .map_err(Into::into)
}

/// Detections from label records; every row needs the trailing score.
fn det_list(records: &[LabelRecord]) -> Result<Vec<Detection>> {
    let mut out = Vec::with_capacity(records.len());
    for r in records {
        let score = match r.score {
            Some(s) => s,
            None => bail!("detection record for {:?} is missing a score", r.class_name),
        };
        out.push(Detection::new(record_box(r)?, score, r.class_name.clone())?);
    }
    Ok(out)
}

/// Box from a label record: location = center, dims (h, w, l) -> size
/// (l, w, h), rotation_y = yaw.
fn record_box(r: &LabelRecord) -> wavefuse_core::Result<Box3D> {
    Box3D::new(
        r.location,
        [r.dims_hwl[2], r.dims_hwl[1], r.dims_hwl[0]],
        r.rotation_y,
    )
}

//! Subcommand implementations and error-to-exit-code mapping.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::Serialize;

use posecodec::camgeom::Keypoints2D;
use posecodec::decode::{decode_pose, DecodeError};
use posecodec::defaults::ReportHeader;
use posecodec::encode::{render_heatmaps, render_orientation_maps, EncodeMode};
use posecodec::metrics::{evaluate_poses, EvalReport, MetricsError};
use posecodec::skeleton::{
    default_h36m_skeleton, pose_to_limb_vectors, Pose3D, SkeletonError, SkeletonSpec,
};
use posecodec::synth::{
    generate, jitter_protocol, JitterParams, JitterReport, SynthError, SynthScenario,
};
use posecodec::tensorio::{
    read_keypoints, read_maps, read_poses, write_keypoints, write_maps, write_poses, Dtype,
    KeypointRecord, PoseRecord, TensorIoError,
};
use posecodec::{HeatmapStack, OrientationMapStack};

/// CLI failure with its exit-code class: validation failures exit 1, I/O and
/// format problems exit 2 (flag problems exit 3 before commands run).
#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Format(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Format(_) => 2,
        }
    }

    pub fn message(&self) -> String {
        match self {
            CliError::Validation(m) | CliError::Format(m) => m.clone(),
        }
    }
}

impl From<TensorIoError> for CliError {
    fn from(e: TensorIoError) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Format(e.to_string())
    }
}

impl From<SkeletonError> for CliError {
    fn from(e: SkeletonError) -> Self {
        CliError::Validation(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::JointCountMismatch { .. } | MetricsError::FrameCountMismatch { .. } => {
                CliError::Format(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<DecodeError> for CliError {
    fn from(e: DecodeError) -> Self {
        match e {
            DecodeError::ShapeMismatch { .. } => CliError::Format(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<posecodec::encode::EncodeError> for CliError {
    fn from(e: posecodec::encode::EncodeError) -> Self {
        match e {
            posecodec::encode::EncodeError::JointCountMismatch { .. } => {
                CliError::Format(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

impl From<SynthError> for CliError {
    fn from(e: SynthError) -> Self {
        CliError::Validation(e.to_string())
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
#[value(rename_all = "snake_case")]
pub enum ModeArg {
    Orientation,
    /// Torso-normalized limb vectors instead of unit orientations.
    #[value(alias = "limb-vector")]
    LimbVector,
}

impl From<ModeArg> for EncodeMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Orientation => EncodeMode::Orientation,
            ModeArg::LimbVector => EncodeMode::LimbVector,
        }
    }
}

/// Limb-length source for decoding.
#[derive(Debug, Clone)]
pub enum LengthsArg {
    Reference,
    GroundTruth(PathBuf),
}

pub fn parse_lengths(s: &str) -> Result<LengthsArg, String> {
    if s == "ref" {
        Ok(LengthsArg::Reference)
    } else if let Some(path) = s.strip_prefix("gt:") {
        if path.is_empty() {
            Err("expected a pose file after 'gt:'".into())
        } else {
            Ok(LengthsArg::GroundTruth(PathBuf::from(path)))
        }
    } else {
        Err(format!("expected 'ref' or 'gt:<posefile>', got '{s}'"))
    }
}

pub fn parse_root(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected 'x,y,z', got '{s}'"));
    }
    let mut root = [0.0; 3];
    for (i, p) in parts.iter().enumerate() {
        root[i] = p
            .trim()
            .parse::<f64>()
            .map_err(|_| format!("'{p}' is not a number"))?;
    }
    Ok(root)
}

pub fn parse_map_size(s: &str) -> Result<(usize, usize), String> {
    let err = || format!("expected HxW (e.g. 64x64), got '{s}'");
    let (h, w) = s.split_once(['x', 'X']).ok_or_else(err)?;
    let h = h.trim().parse::<usize>().map_err(|_| err())?;
    let w = w.trim().parse::<usize>().map_err(|_| err())?;
    if h == 0 || w == 0 {
        return Err(err());
    }
    Ok((h, w))
}

fn load_skeleton(path: Option<&Path>) -> Result<SkeletonSpec, CliError> {
    match path {
        None => Ok(default_h36m_skeleton()),
        Some(p) => {
            let text = fs::read_to_string(p)?;
            let cfg: posecodec::skeleton::SkeletonConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::Format(format!("{}: {e}", p.display())))?;
            Ok(SkeletonSpec::from_config(cfg)?)
        }
    }
}

fn heat_filename(frame: u64) -> String {
    format!("frame_{frame:06}.heat.posmap")
}

fn orient_filename(frame: u64) -> String {
    format!("frame_{frame:06}.orient.posmap")
}

pub fn encode(
    poses: &Path,
    keypoints: &Path,
    out: &Path,
    mode: ModeArg,
    sigma: f64,
    map_size: (usize, usize),
    skeleton: Option<&Path>,
) -> Result<(), CliError> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(CliError::Validation(format!(
            "--sigma must be positive, got {sigma}"
        )));
    }
    let spec = load_skeleton(skeleton)?;
    let pose_records = read_poses(poses, Some(spec.joint_count()))?;
    let kp_records = read_keypoints(keypoints, Some(spec.joint_count()))?;
    if pose_records.len() != kp_records.len() {
        return Err(CliError::Format(format!(
            "{} pose frames but {} keypoint frames",
            pose_records.len(),
            kp_records.len()
        )));
    }
    fs::create_dir_all(out)?;
    let (h, w) = map_size;
    let mode = EncodeMode::from(mode);
    for (pr, kr) in pose_records.iter().zip(&kp_records) {
        if pr.frame != kr.frame {
            return Err(CliError::Format(format!(
                "frame mismatch between inputs: pose {} vs keypoints {}",
                pr.frame, kr.frame
            )));
        }
        let pose = pr.to_pose()?;
        let kp = kr.to_keypoints();
        let heat = render_heatmaps(&kp, sigma, h, w);
        let orient = render_orientation_maps(&pose, &kp, &spec, h, w, mode)?;
        write_maps(
            &out.join(heat_filename(pr.frame)),
            &heat.to_container(Dtype::F64),
        )?;
        write_maps(
            &out.join(orient_filename(pr.frame)),
            &orient.to_container(Dtype::F64),
        )?;
    }
    println!(
        "encoded {} frames at {}x{} (sigma {sigma}, {mode:?}) -> {}",
        pose_records.len(),
        h,
        w,
        out.display()
    );
    Ok(())
}

/// Frame index parsed from a map filename (digits after the last underscore).
fn frame_of_path(path: &Path) -> Option<u64> {
    let name = path.file_name()?.to_str()?;
    let stem = name.split('.').next()?;
    stem.rsplit('_').next()?.parse().ok()
}

/// Collect per-frame container paths: either a single file or all files in a
/// directory whose names end with `suffix`.
fn collect_maps(input: &Path, suffix: &str) -> Result<BTreeMap<u64, PathBuf>, CliError> {
    let mut out = BTreeMap::new();
    if input.is_dir() {
        for entry in fs::read_dir(input)? {
            let path = entry?.path();
            let Some(name) = path.file_name().and_then(|n| n.to_str()) else {
                continue;
            };
            if !name.ends_with(suffix) {
                continue;
            }
            let frame = frame_of_path(&path).ok_or_else(|| {
                CliError::Format(format!("cannot parse a frame index from '{name}'"))
            })?;
            if out.insert(frame, path).is_some() {
                return Err(CliError::Format(format!(
                    "duplicate frame {frame} in {}",
                    input.display()
                )));
            }
        }
        if out.is_empty() {
            return Err(CliError::Format(format!(
                "no *{suffix} files in {}",
                input.display()
            )));
        }
    } else {
        out.insert(frame_of_path(input).unwrap_or(0), input.to_path_buf());
    }
    Ok(out)
}

pub fn decode(
    heatmaps: &Path,
    orient: &Path,
    lengths: &LengthsArg,
    out: &Path,
    root: [f64; 3],
    skeleton: Option<&Path>,
) -> Result<(), CliError> {
    let spec = load_skeleton(skeleton)?;
    let heat_paths = collect_maps(heatmaps, ".heat.posmap")?;
    let orient_paths = collect_maps(orient, ".orient.posmap")?;
    if heat_paths.keys().ne(orient_paths.keys()) {
        return Err(CliError::Format(
            "heatmap and orientation inputs cover different frame sets".into(),
        ));
    }

    let gt_lengths: Option<BTreeMap<u64, Vec<f64>>> = match lengths {
        LengthsArg::Reference => None,
        LengthsArg::GroundTruth(path) => {
            let records = read_poses(path, Some(spec.joint_count()))?;
            let mut map = BTreeMap::new();
            for r in &records {
                let lv = pose_to_limb_vectors(&r.to_pose()?, &spec)?;
                map.insert(r.frame, lv.lengths_mm);
            }
            Some(map)
        }
    };

    let mut decoded = Vec::with_capacity(heat_paths.len());
    let mut warned_limbs = 0usize;
    for (&frame, heat_path) in &heat_paths {
        let heat = HeatmapStack::from_container(&read_maps(heat_path)?)?;
        let orient_stack = OrientationMapStack::from_container(
            &read_maps(&orient_paths[&frame])?,
            EncodeMode::Orientation,
        )?;
        let lengths_mm: Vec<f64> = match &gt_lengths {
            None => spec.ref_lengths_mm().to_vec(),
            Some(map) => map.get(&frame).cloned().ok_or_else(|| {
                CliError::Format(format!("frame {frame} missing from the gt pose file"))
            })?,
        };
        let result =
            decode_pose(&heat, &orient_stack, &spec, &lengths_mm, root).map_err(CliError::from)?;
        warned_limbs += result
            .warnings
            .iter()
            .filter(|w| w.flat_endpoint_heatmap)
            .count();
        decoded.push(PoseRecord {
            frame,
            joints_mm: result.pose.joints_mm,
        });
    }
    write_poses(out, &decoded)?;
    println!(
        "decoded {} frames -> {}{}",
        decoded.len(),
        out.display(),
        if warned_limbs > 0 {
            format!(" ({warned_limbs} limb warnings)")
        } else {
            String::new()
        }
    );
    Ok(())
}

#[derive(Serialize)]
struct EvalReportFile {
    defaults: ReportHeader,
    metrics: EvalReport,
}

fn print_eval_table(spec: &SkeletonSpec, report: &EvalReport) {
    let d = ReportHeader::current();
    println!(
        "defaults: sigma {} px, map {}x{}, lambda {}, PCK @ {} mm, AUC grid {} mm",
        d.sigma_px, d.map_size[0], d.map_size[1], d.lambda, d.pck_threshold_mm, d.auc_grid_mm
    );
    println!("{:<14} {:>12}", "metric", "value");
    println!("{:<14} {:>12}", "frames", report.n_frames);
    println!("{:<14} {:>12.6}", "MPJPE (mm)", report.mpjpe_mm);
    println!("{:<14} {:>12.6}", "PA-MPJPE (mm)", report.pa_mpjpe_mm);
    println!("{:<14} {:>12.4}", "PCK@150", report.pck);
    println!("{:<14} {:>12.4}", "AUC", report.auc);
    println!("{:<14} {:>12}", "per-joint (mm)", "");
    for (name, err) in spec.joint_names().iter().zip(&report.per_joint_mm) {
        println!("  {:<12} {:>12.6}", name, err);
    }
}

pub fn eval(
    pred: &Path,
    gt: &Path,
    report: &Path,
    skeleton: Option<&Path>,
) -> Result<(), CliError> {
    let spec = load_skeleton(skeleton)?;
    let pred_records = read_poses(pred, Some(spec.joint_count()))?;
    let gt_records = read_poses(gt, Some(spec.joint_count()))?;
    if pred_records.len() != gt_records.len()
        || pred_records
            .iter()
            .zip(&gt_records)
            .any(|(p, g)| p.frame != g.frame)
    {
        return Err(CliError::Format(
            "prediction and ground-truth files cover different frame sets".into(),
        ));
    }
    let preds: Vec<Pose3D> = pred_records
        .iter()
        .map(|r| r.to_pose())
        .collect::<Result<_, _>>()?;
    let gts: Vec<Pose3D> = gt_records
        .iter()
        .map(|r| r.to_pose())
        .collect::<Result<_, _>>()?;
    let eval_report = evaluate_poses(&preds, &gts, spec.root_index())?;
    let file = EvalReportFile {
        defaults: ReportHeader::current(),
        metrics: eval_report,
    };
    let json = serde_json::to_string_pretty(&file).expect("report serializes");
    fs::write(report, json + "\n")?;
    print_eval_table(&spec, &file.metrics);
    Ok(())
}

fn read_scenario(path: &Path) -> Result<SynthScenario, CliError> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Format(format!("{}: {e}", path.display())))
}

pub fn synth(scenario_path: &Path, out: &Path, skeleton: Option<&Path>) -> Result<(), CliError> {
    let spec = load_skeleton(skeleton)?;
    let scenario = read_scenario(scenario_path)?;
    let frames = generate(&scenario, &spec)?;

    fs::create_dir_all(out.join("maps"))?;
    let mut poses = Vec::with_capacity(frames.len());
    let mut keypoints = Vec::with_capacity(frames.len());
    let mut bbox_lines = String::new();
    for rec in &frames {
        write_maps(
            &out.join("maps").join(heat_filename(rec.frame)),
            &rec.heatmaps.to_container(Dtype::F64),
        )?;
        write_maps(
            &out.join("maps").join(orient_filename(rec.frame)),
            &rec.orientation_maps.to_container(Dtype::F64),
        )?;
        poses.push(PoseRecord {
            frame: rec.frame,
            joints_mm: rec.gt_pose.joints_mm.clone(),
        });
        keypoints.push(keypoint_record(rec.frame, &rec.gt_keypoints));
        bbox_lines.push_str(&format!(
            "{}\n",
            serde_json::json!({"frame": rec.frame, "bbox": rec.bbox})
        ));
    }
    write_poses(&out.join("gt_poses.jsonl"), &poses)?;
    write_keypoints(&out.join("gt_keypoints.jsonl"), &keypoints)?;
    fs::write(out.join("bboxes.jsonl"), bbox_lines)?;
    let echo = serde_json::to_string_pretty(&scenario).expect("scenario serializes");
    fs::write(out.join("scenario.json"), echo + "\n")?;
    println!(
        "generated {} frames (seed {}) -> {}",
        frames.len(),
        scenario.seed,
        out.display()
    );
    Ok(())
}

fn keypoint_record(frame: u64, kp: &Keypoints2D) -> KeypointRecord {
    KeypointRecord {
        frame,
        keypoints_px: kp.points_px.clone(),
        visibility: Some(kp.visibility.clone()),
    }
}

#[derive(Serialize)]
struct JitterReportFile {
    defaults: ReportHeader,
    scenario: SynthScenario,
    trials: usize,
    jitter: JitterReport,
}

pub fn bench_jitter(
    scenario_path: &Path,
    trials: usize,
    report: &Path,
    skeleton: Option<&Path>,
) -> Result<(), CliError> {
    let spec = load_skeleton(skeleton)?;
    let scenario = read_scenario(scenario_path)?;
    let frames = generate(&scenario, &spec)?;
    let jitter = jitter_protocol(
        &frames,
        &spec,
        &JitterParams {
            jitter_px: scenario.jitter_px,
            rescale_range: scenario.rescale_range,
            trials,
            seed: scenario.seed,
        },
    )?;
    println!(
        "baseline: PCK {:.2}  AUC {:.2}  MPJPE {:.2} mm over {} frames",
        100.0 * jitter.baseline_pck,
        100.0 * jitter.baseline_auc,
        jitter.baseline_mpjpe_mm,
        jitter.n_frames
    );
    println!(
        "jitter {} px, rescale {}, {} trials: {}",
        jitter.jitter_px,
        jitter.rescale_range,
        jitter.trials,
        jitter.summary_line()
    );
    if jitter.n_decode_failures > 0 {
        println!("decode failures: {}", jitter.n_decode_failures);
    }
    let file = JitterReportFile {
        defaults: ReportHeader::current(),
        scenario,
        trials,
        jitter,
    };
    let json = serde_json::to_string_pretty(&file).expect("report serializes");
    fs::write(report, json + "\n")?;
    Ok(())
}

pub fn selftest() -> Result<(), CliError> {
    let results = posecodec::selftest::run_all();
    let mut failures = 0usize;
    for r in &results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        println!(
            "{status} {name}: {detail} [{secs:.2}s]",
            name = r.name,
            detail = r.detail,
            secs = r.seconds
        );
        if !r.passed {
            failures += 1;
        }
    }
    if failures > 0 {
        Err(CliError::Validation(format!(
            "selftest: {failures}/{} checks failed",
            results.len()
        )))
    } else {
        println!("selftest: all {} checks passed", results.len());
        Ok(())
    }
}

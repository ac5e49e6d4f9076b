//! Synthetic oracle harness: samples plausible poses, projects and encodes
//! them into exact or noise-corrupted map stacks, and runs the decode-window
//! jitter/rescale robustness protocol.
//!
//! Determinism: every frame draws from [`CounterRng`] streams derived from
//! `(seed, frame * 4 + purpose)` (purpose 0 = pose, 1 = orientation-map noise,
//! 2 = heatmap noise), and jitter trials from `(seed, JITTER_STREAM_BASE +
//! trial * n_frames + frame)`, so parallel and serial runs produce identical
//! bytes.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{project, CamError, CameraModel, Keypoints2D};
use crate::decode::{decode_pose, DecodeError};
use crate::encode::{
    render_heatmaps, render_orientation_maps, EncodeError, EncodeMode, HeatmapStack,
    OrientationMapStack,
};
use crate::metrics::{auc, mpjpe, pck, root_aligned_errors, MetricsError, PCK_THRESHOLD_MM};
use crate::rng::CounterRng;
use crate::skeleton::{pose_to_limb_vectors, Pose3D, SkeletonError, SkeletonSpec};

/// Distance from camera to the sampled root joint (~2.5 m).
pub const ROOT_DISTANCE_MM: f64 = 2500.0;

/// Stream offset separating jitter-trial draws from frame-generation draws.
const JITTER_STREAM_BASE: u64 = 1 << 40;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("pose prior needs per-limb rest directions in the skeleton config")]
    MissingRestDirections,
    #[error(transparent)]
    Camera(#[from] CamError),
    #[error(transparent)]
    Encode(#[from] EncodeError),
    #[error(transparent)]
    Skeleton(#[from] SkeletonError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error("decoding failed on frame {frame}: {source}")]
    Decode { frame: u64, source: DecodeError },
}

/// Pose sampling prior.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum PosePrior {
    /// Canonical rest pose; identical across seeds.
    Tpose,
    /// Each limb's rest direction rotated by a uniform angle up to `max_deg`
    /// about a random axis, composed through forward kinematics with the
    /// skeleton's reference lengths.
    RandomAngles { max_deg: f64 },
}

/// Everything needed to reproduce a synthetic run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthScenario {
    pub seed: u64,
    pub n_frames: usize,
    pub camera: CameraModel,
    /// Output map resolution `[H, W]`.
    pub map_size: [usize; 2],
    /// Additive Gaussian sigma on orientation-map values.
    pub noise_sigma: f64,
    /// Additive Gaussian sigma on heatmap values.
    pub heatmap_noise_sigma: f64,
    /// Decode-window translation range in map pixels (bench-jitter).
    pub jitter_px: f64,
    /// Decode-window rescale range r: factors drawn from `[1-r, 1+r]`.
    pub rescale_range: f64,
    pub pose_prior: PosePrior,
    /// Heatmap Gaussian sigma in map pixels.
    #[serde(default = "default_sigma_px")]
    pub sigma_px: f64,
    /// Orientation-map encoding carried by the generated frames.
    #[serde(default)]
    pub mode: EncodeMode,
}

fn default_sigma_px() -> f64 {
    crate::defaults::SIGMA_PX
}

impl SynthScenario {
    /// Canonical scenario: 256 px camera mapped to 64 x 64 maps, random-angle
    /// prior, no corruption.
    pub fn standard(seed: u64, n_frames: usize) -> Self {
        Self {
            seed,
            n_frames,
            camera: CameraModel {
                fx: 230.0,
                fy: 230.0,
                cx: 128.0,
                cy: 128.0,
                image_w: 256,
                image_h: 256,
            },
            map_size: [64, 64],
            noise_sigma: 0.0,
            heatmap_noise_sigma: 0.0,
            jitter_px: 0.0,
            rescale_range: 0.0,
            pose_prior: PosePrior::RandomAngles { max_deg: 35.0 },
            sigma_px: default_sigma_px(),
            mode: EncodeMode::Orientation,
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_frames == 0 {
            return Err(SynthError::InvalidScenario("n_frames must be >= 1".into()));
        }
        for (name, v) in [
            ("noise_sigma", self.noise_sigma),
            ("heatmap_noise_sigma", self.heatmap_noise_sigma),
            ("jitter_px", self.jitter_px),
            ("rescale_range", self.rescale_range),
            ("sigma_px", self.sigma_px),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(SynthError::InvalidScenario(format!(
                    "{name} must be a finite non-negative number, got {v}"
                )));
            }
        }
        if self.sigma_px == 0.0 {
            return Err(SynthError::InvalidScenario("sigma_px must be > 0".into()));
        }
        if self.map_size[0] == 0 || self.map_size[1] == 0 {
            return Err(SynthError::InvalidScenario(
                "map_size must be nonzero".into(),
            ));
        }
        if let PosePrior::RandomAngles { max_deg } = self.pose_prior {
            if !(0.0..=180.0).contains(&max_deg) {
                return Err(SynthError::InvalidScenario(format!(
                    "max_deg must lie in [0, 180], got {max_deg}"
                )));
            }
        }
        self.camera.validate()?;
        Ok(())
    }
}

/// One generated frame: ground truth plus the (possibly corrupted) stacks a
/// network would have predicted.
#[derive(Debug, Clone)]
pub struct FrameRecord {
    pub frame: u64,
    pub gt_pose: Pose3D,
    /// Keypoints at map resolution.
    pub gt_keypoints: Keypoints2D,
    pub heatmaps: HeatmapStack,
    pub orientation_maps: OrientationMapStack,
    /// Tight keypoint bounds padded by 10% per side, `[x, y, w, h]` map px.
    pub bbox: [f64; 4],
}

/// Rotate `v` by `angle` radians about unit `axis` (Rodrigues).
fn rotate_about(v: [f64; 3], axis: [f64; 3], angle: f64) -> [f64; 3] {
    let (s, c) = angle.sin_cos();
    let dot = axis[0] * v[0] + axis[1] * v[1] + axis[2] * v[2];
    let cross = [
        axis[1] * v[2] - axis[2] * v[1],
        axis[2] * v[0] - axis[0] * v[2],
        axis[0] * v[1] - axis[1] * v[0],
    ];
    [
        v[0] * c + cross[0] * s + axis[0] * dot * (1.0 - c),
        v[1] * c + cross[1] * s + axis[1] * dot * (1.0 - c),
        v[2] * c + cross[2] * s + axis[2] * dot * (1.0 - c),
    ]
}

/// Sample a pose from the prior: limb directions composed through forward
/// kinematics with reference lengths, root placed [`ROOT_DISTANCE_MM`] in
/// front of the camera. Deterministic given the generator state.
pub fn sample_pose(
    prior: PosePrior,
    spec: &SkeletonSpec,
    rng: &mut CounterRng,
) -> Result<Pose3D, SynthError> {
    let rest = spec.rest_dirs().ok_or(SynthError::MissingRestDirections)?;
    let mut joints = vec![[0.0f64; 3]; spec.joint_count()];
    joints[spec.root_index()] = [0.0, 0.0, ROOT_DISTANCE_MM];
    for &k in spec.topo_order() {
        let (p, c) = spec.limb(k);
        let dir = match prior {
            PosePrior::Tpose => rest[k],
            PosePrior::RandomAngles { max_deg } => {
                let axis = rng.unit_vector();
                let angle = rng.uniform(0.0, max_deg.to_radians());
                rotate_about(rest[k], axis, angle)
            }
        };
        let l = spec.ref_length_mm(k);
        joints[c] = [
            joints[p][0] + dir[0] * l,
            joints[p][1] + dir[1] * l,
            joints[p][2] + dir[2] * l,
        ];
    }
    Ok(Pose3D { joints_mm: joints })
}

fn add_noise(values: &mut [f64], sigma: f64, rng: &mut CounterRng) {
    for v in values {
        *v += sigma * rng.next_gauss();
    }
}

fn keypoint_bbox(kp: &Keypoints2D) -> [f64; 4] {
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    let mut any = false;
    for (p, &vis) in kp.points_px.iter().zip(&kp.visibility) {
        if !vis {
            continue;
        }
        any = true;
        for c in 0..2 {
            min[c] = min[c].min(p[c]);
            max[c] = max[c].max(p[c]);
        }
    }
    if !any {
        return [0.0; 4];
    }
    let w = max[0] - min[0];
    let h = max[1] - min[1];
    [min[0] - 0.1 * w, min[1] - 0.1 * h, 1.2 * w, 1.2 * h]
}

fn generate_frame(
    scenario: &SynthScenario,
    spec: &SkeletonSpec,
    map_cam: &CameraModel,
    frame: u64,
) -> Result<FrameRecord, SynthError> {
    let [h, w] = scenario.map_size;
    let mut pose_rng = CounterRng::derive(scenario.seed, frame * 4);
    let gt_pose = sample_pose(scenario.pose_prior, spec, &mut pose_rng)?;
    let gt_keypoints = project(&gt_pose, map_cam)?;
    let mut heatmaps = render_heatmaps(&gt_keypoints, scenario.sigma_px, h, w);
    let mut orientation_maps =
        render_orientation_maps(&gt_pose, &gt_keypoints, spec, h, w, scenario.mode)?;
    if scenario.noise_sigma > 0.0 {
        let mut rng = CounterRng::derive(scenario.seed, frame * 4 + 1);
        add_noise(
            orientation_maps.values_mut(),
            scenario.noise_sigma,
            &mut rng,
        );
    }
    if scenario.heatmap_noise_sigma > 0.0 {
        let mut rng = CounterRng::derive(scenario.seed, frame * 4 + 2);
        add_noise(
            heatmaps.values_mut(),
            scenario.heatmap_noise_sigma,
            &mut rng,
        );
    }
    let bbox = keypoint_bbox(&gt_keypoints);
    Ok(FrameRecord {
        frame,
        gt_pose,
        gt_keypoints,
        heatmaps,
        orientation_maps,
        bbox,
    })
}

/// Generate all frames of a scenario with explicit parallelism (`threads <= 1`
/// runs strictly serially). Output is identical for any thread count.
pub fn generate_with_threads(
    scenario: &SynthScenario,
    spec: &SkeletonSpec,
    threads: usize,
) -> Result<Vec<FrameRecord>, SynthError> {
    scenario.validate()?;
    let map_cam = scenario
        .camera
        .scaled_to(scenario.map_size[1], scenario.map_size[0]);
    let frames: Vec<u64> = (0..scenario.n_frames as u64).collect();
    if threads <= 1 {
        frames
            .iter()
            .map(|&f| generate_frame(scenario, spec, &map_cam, f))
            .collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            frames
                .par_iter()
                .map(|&f| generate_frame(scenario, spec, &map_cam, f))
                .collect()
        })
    }
}

/// Generate all frames, parallelism capped by the `POSECODEC_THREADS`
/// environment variable.
pub fn generate(
    scenario: &SynthScenario,
    spec: &SkeletonSpec,
) -> Result<Vec<FrameRecord>, SynthError> {
    generate_with_threads(scenario, spec, crate::runtime_threads())
}

fn resample_plane_nn(src: &[f64], h: usize, w: usize, dx: f64, dy: f64, scale: f64) -> Vec<f64> {
    let (ch, cw) = (h as f64 / 2.0, w as f64 / 2.0);
    let mut out = vec![0.0f64; h * w];
    for i in 0..h {
        let sy = (i as f64 + 0.5 - ch) * scale + ch + dy;
        let row = sy.floor();
        for j in 0..w {
            let sx = (j as f64 + 0.5 - cw) * scale + cw + dx;
            let col = sx.floor();
            if row >= 0.0 && row < h as f64 && col >= 0.0 && col < w as f64 {
                out[i * w + j] = src[row as usize * w + col as usize];
            }
        }
    }
    out
}

/// Re-crop both stacks to a jittered decode window: translated by `(dx, dy)`
/// map pixels and rescaled by `scale` about the window center, resampled by
/// nearest neighbor. Off-window content becomes background.
pub fn jitter_window(
    heatmaps: &HeatmapStack,
    maps: &OrientationMapStack,
    dx: f64,
    dy: f64,
    scale: f64,
) -> (HeatmapStack, OrientationMapStack) {
    let (h, w) = heatmaps.resolution();
    let plane = h * w;
    let mut heat_values = Vec::with_capacity(heatmaps.values().len());
    for n in 0..heatmaps.map_count() {
        heat_values.extend(resample_plane_nn(
            &heatmaps.values()[n * plane..(n + 1) * plane],
            h,
            w,
            dx,
            dy,
            scale,
        ));
    }
    let mut orient_values = Vec::with_capacity(maps.values().len());
    for p in 0..maps.limb_count() * 3 {
        orient_values.extend(resample_plane_nn(
            &maps.values()[p * plane..(p + 1) * plane],
            h,
            w,
            dx,
            dy,
            scale,
        ));
    }
    (
        HeatmapStack::from_values(heatmaps.map_count(), h, w, heat_values),
        OrientationMapStack::from_values(maps.limb_count(), h, w, maps.mode, orient_values),
    )
}

/// Jitter/rescale robustness protocol parameters.
#[derive(Debug, Clone, Copy)]
pub struct JitterParams {
    pub jitter_px: f64,
    pub rescale_range: f64,
    pub trials: usize,
    pub seed: u64,
}

/// Robustness summary: baseline metrics on the unjittered windows and
/// mean +/- sample stddev over jittered trials.
#[derive(Debug, Clone, Serialize)]
pub struct JitterReport {
    pub trials: usize,
    pub jitter_px: f64,
    pub rescale_range: f64,
    pub n_frames: usize,
    pub baseline_pck: f64,
    pub baseline_auc: f64,
    pub baseline_mpjpe_mm: f64,
    pub pck_mean: f64,
    pub pck_std: f64,
    pub auc_mean: f64,
    pub auc_std: f64,
    pub mpjpe_mean_mm: f64,
    pub mpjpe_std_mm: f64,
    pub pck_drop: f64,
    pub auc_drop: f64,
    /// Frames whose decode failed across all trials; their joints count as
    /// misses for PCK/AUC and are excluded from MPJPE.
    pub n_decode_failures: usize,
}

impl JitterReport {
    /// One-line summary in the percent-style `mean+/-std (drop)` format.
    pub fn summary_line(&self) -> String {
        format!(
            "PCK {:.2}\u{b1}{:.2} (\u{2193}{:.2})  AUC {:.2}\u{b1}{:.2} (\u{2193}{:.2})  MPJPE {:.2}\u{b1}{:.2} mm",
            100.0 * self.pck_mean,
            100.0 * self.pck_std,
            100.0 * self.pck_drop,
            100.0 * self.auc_mean,
            100.0 * self.auc_std,
            100.0 * self.auc_drop,
            self.mpjpe_mean_mm,
            self.mpjpe_std_mm,
        )
    }
}

struct TrialMetrics {
    pck: f64,
    auc: f64,
    mpjpe_mm: f64,
    failures: usize,
}

/// Decode every frame through a per-frame jittered window and pool the
/// root-aligned metrics. Failed decodes contribute infinite joint errors.
fn run_trial(
    frames: &[FrameRecord],
    spec: &SkeletonSpec,
    lengths: &[Vec<f64>],
    mut draw: impl FnMut(u64) -> (f64, f64, f64),
) -> Result<TrialMetrics, SynthError> {
    let root = spec.root_index();
    let mut pooled = Vec::with_capacity(frames.len() * spec.joint_count());
    let mut frame_means = Vec::with_capacity(frames.len());
    let mut failures = 0usize;
    for (rec, lens) in frames.iter().zip(lengths) {
        let (dx, dy, scale) = draw(rec.frame);
        let decoded = if dx == 0.0 && dy == 0.0 && scale == 1.0 {
            decode_pose(&rec.heatmaps, &rec.orientation_maps, spec, lens, [0.0; 3])
        } else {
            let (heat, orient) = jitter_window(&rec.heatmaps, &rec.orientation_maps, dx, dy, scale);
            decode_pose(&heat, &orient, spec, lens, [0.0; 3])
        };
        match decoded {
            Ok(result) => {
                let errors = root_aligned_errors(&result.pose, &rec.gt_pose, root)?;
                frame_means.push(errors.iter().sum::<f64>() / errors.len() as f64);
                pooled.extend(errors);
            }
            Err(_) => {
                failures += 1;
                pooled.extend(std::iter::repeat_n(f64::INFINITY, spec.joint_count()));
            }
        }
    }
    let mpjpe_mm = if frame_means.is_empty() {
        f64::INFINITY
    } else {
        frame_means.iter().sum::<f64>() / frame_means.len() as f64
    };
    Ok(TrialMetrics {
        pck: pck(&pooled, PCK_THRESHOLD_MM)?,
        auc: auc(&pooled)?,
        mpjpe_mm,
        failures,
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Run the decode-window jitter/rescale protocol: per trial, each frame's
/// window is translated by uniform offsets in `[-jitter_px, +jitter_px]^2` and
/// rescaled by a factor in `[1 - r, 1 + r]`, then decoded with its
/// ground-truth limb lengths and evaluated against its ground-truth pose.
pub fn jitter_protocol(
    frames: &[FrameRecord],
    spec: &SkeletonSpec,
    params: &JitterParams,
) -> Result<JitterReport, SynthError> {
    if params.trials == 0 {
        return Err(SynthError::InvalidScenario("trials must be >= 1".into()));
    }
    let lengths: Vec<Vec<f64>> = frames
        .iter()
        .map(|rec| Ok(pose_to_limb_vectors(&rec.gt_pose, spec)?.lengths_mm))
        .collect::<Result<_, SynthError>>()?;

    let baseline = run_trial(frames, spec, &lengths, |_| (0.0, 0.0, 1.0))?;

    let n_frames = frames.len() as u64;
    let mut pcks = Vec::with_capacity(params.trials);
    let mut aucs = Vec::with_capacity(params.trials);
    let mut mpjpes = Vec::with_capacity(params.trials);
    let mut failures = 0usize;
    for trial in 0..params.trials as u64 {
        let metrics = run_trial(frames, spec, &lengths, |frame| {
            let mut rng =
                CounterRng::derive(params.seed, JITTER_STREAM_BASE + trial * n_frames + frame);
            let dx = rng.uniform(-params.jitter_px, params.jitter_px);
            let dy = rng.uniform(-params.jitter_px, params.jitter_px);
            let scale = rng.uniform(1.0 - params.rescale_range, 1.0 + params.rescale_range);
            // degenerate draw ranges (width 0) must hit the identity exactly
            let dx = if params.jitter_px == 0.0 { 0.0 } else { dx };
            let dy = if params.jitter_px == 0.0 { 0.0 } else { dy };
            let scale = if params.rescale_range == 0.0 {
                1.0
            } else {
                scale
            };
            (dx, dy, scale)
        })?;
        pcks.push(metrics.pck);
        aucs.push(metrics.auc);
        mpjpes.push(metrics.mpjpe_mm);
        failures += metrics.failures;
    }
    let (pck_mean, pck_std) = mean_std(&pcks);
    let (auc_mean, auc_std) = mean_std(&aucs);
    let (mpjpe_mean_mm, mpjpe_std_mm) = mean_std(&mpjpes);
    Ok(JitterReport {
        trials: params.trials,
        jitter_px: params.jitter_px,
        rescale_range: params.rescale_range,
        n_frames: frames.len(),
        baseline_pck: baseline.pck,
        baseline_auc: baseline.auc,
        baseline_mpjpe_mm: baseline.mpjpe_mm,
        pck_mean,
        pck_std,
        auc_mean,
        auc_std,
        mpjpe_mean_mm,
        mpjpe_std_mm,
        pck_drop: baseline.pck - pck_mean,
        auc_drop: baseline.auc - auc_mean,
        n_decode_failures: failures,
    })
}

/// Decode a generated frame with its own ground-truth lengths and root, and
/// return the MPJPE against the source pose. The zero-noise round trip.
pub fn roundtrip_mpjpe(rec: &FrameRecord, spec: &SkeletonSpec) -> Result<f64, SynthError> {
    let lv = pose_to_limb_vectors(&rec.gt_pose, spec)?;
    let root = rec.gt_pose.joints_mm[spec.root_index()];
    let result = decode_pose(
        &rec.heatmaps,
        &rec.orientation_maps,
        spec,
        &lv.lengths_mm,
        root,
    )
    .map_err(|source| SynthError::Decode {
        frame: rec.frame,
        source,
    })?;
    Ok(mpjpe(&result.pose, &rec.gt_pose, spec.root_index())?)
}

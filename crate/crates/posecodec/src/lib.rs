//! Limb-orientation map codec for 3D human pose.
//!
//! 3D poses factor into per-limb unit orientations and lengths over a skeleton
//! tree. This crate renders the training targets for that representation
//! (per-joint Gaussian heatmaps and per-limb orientation maps whose capsule
//! regions carry the limb's orientation vector), decodes predicted maps back
//! into 3D poses by argmax keypoints, capsule crops, orientation averaging,
//! and iterative tree reconstruction, and evaluates the results with the
//! standard protocol suite (root-aligned MPJPE, Procrustes-aligned MPJPE,
//! PCK@150mm, AUC).
//!
//! No trained network is involved: the [`synth`] module generates exact or
//! noise-corrupted prediction maps from sampled poses, which makes every
//! pipeline property checkable against closed-form oracles. See the `selftest`
//! module (and CLI subcommand) for the built-in invariant suite.

pub mod camgeom;
pub mod decode;
pub mod encode;
pub mod losses;
pub mod metrics;
pub mod rng;
pub mod selftest;
pub mod skeleton;
pub mod synth;
pub mod tensorio;

pub use camgeom::{CameraModel, Keypoints2D};
pub use decode::{decode_pose, DecodeResult};
pub use encode::{EncodeMode, HeatmapStack, OrientationMapStack};
pub use metrics::EvalReport;
pub use skeleton::{default_h36m_skeleton, Pose3D, SkeletonSpec};
pub use synth::SynthScenario;

/// Pipeline defaults, printed into every report header for provenance.
pub mod defaults {
    use serde::Serialize;

    /// Heatmap Gaussian sigma at map resolution, px.
    pub const SIGMA_PX: f64 = 2.0;
    /// Output map resolution `[H, W]` for a 256 x 256 input frame.
    pub const MAP_SIZE: [usize; 2] = [64, 64];
    /// Loss balance factor.
    pub const LAMBDA: f64 = 0.2;
    /// PCK threshold, mm.
    pub const PCK_THRESHOLD_MM: f64 = crate::metrics::PCK_THRESHOLD_MM;
    /// AUC threshold grid description (start:step:stop, mm).
    pub const AUC_GRID: &str = "5:5:150";

    /// Serializable defaults block for report headers.
    #[derive(Debug, Clone, Serialize)]
    pub struct ReportHeader {
        pub sigma_px: f64,
        pub map_size: [usize; 2],
        pub lambda: f64,
        pub pck_threshold_mm: f64,
        pub auc_grid_mm: &'static str,
    }

    impl ReportHeader {
        pub fn current() -> Self {
            ReportHeader {
                sigma_px: SIGMA_PX,
                map_size: MAP_SIZE,
                lambda: LAMBDA,
                pck_threshold_mm: PCK_THRESHOLD_MM,
                auc_grid_mm: AUC_GRID,
            }
        }
    }
}

/// Worker cap for internally parallel operations, from `POSECODEC_THREADS`
/// (unset or unparsable falls back to the machine's parallelism).
pub fn runtime_threads() -> usize {
    match std::env::var("POSECODEC_THREADS") {
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(0) | Err(_) => default_threads(),
            Ok(n) => n,
        },
        Err(_) => default_threads(),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
}

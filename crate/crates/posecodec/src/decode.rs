//! Four-step inference over predicted map stacks: argmax keypoints, capsule
//! crop around each limb, orientation averaging with a final renormalization,
//! and tree-structured 3D reconstruction.
//!
//! Decoding depends only on the two map stacks, the skeleton, the supplied
//! limb lengths, and the root position; bounding-box metadata never enters.

use thiserror::Error;

use crate::camgeom::{rasterize_capsule, Keypoints2D};
use crate::encode::{HeatmapStack, OrientationMapStack};
use crate::skeleton::{reconstruct_pose, Pose3D, SkeletonSpec};

/// Mean region vectors shorter than this have no usable direction.
pub const DEGENERATE_MEAN_NORM: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("stack shapes disagree: heatmaps {heat:?}, orientation maps {orient:?}, skeleton wants {joints} joints / {limbs} limbs")]
    ShapeMismatch {
        heat: (usize, usize, usize),
        orient: (usize, usize, usize),
        joints: usize,
        limbs: usize,
    },
    #[error("limb {limb}: mean region vector has norm {norm:e}, no recoverable orientation")]
    DegenerateOrientation { limb: usize, norm: f64 },
    #[error("limb {limb} endpoint keypoint missing")]
    MissingEndpoint { limb: usize },
    #[error(transparent)]
    Skeleton(#[from] crate::skeleton::SkeletonError),
}

/// Per-limb warning flags raised during decoding.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LimbWarnings {
    /// An endpoint's heatmap was constant; its argmax fell back to (0, 0).
    pub flat_endpoint_heatmap: bool,
}

/// Everything the decoder produced for one frame.
#[derive(Debug, Clone)]
pub struct DecodeResult {
    pub keypoints: Keypoints2D,
    /// Unit orientation per limb.
    pub orientations: Vec<[f64; 3]>,
    /// Pixels averaged per limb.
    pub per_limb_support: Vec<usize>,
    pub pose: Pose3D,
    pub warnings: Vec<LimbWarnings>,
}

/// Integer-coordinate argmax of every map.
///
/// Ties break to the first occurrence in row-major scan order. The second
/// return value flags maps that are constant (no meaningful maximum); such
/// joints are marked invisible in the keypoint set.
pub fn argmax_keypoints(stack: &HeatmapStack) -> (Keypoints2D, Vec<bool>) {
    let (_, w) = stack.resolution();
    let mut points = Vec::with_capacity(stack.map_count());
    let mut visibility = Vec::with_capacity(stack.map_count());
    let mut flat = Vec::with_capacity(stack.map_count());
    for n in 0..stack.map_count() {
        let map = stack.map(n);
        let mut best = f64::NEG_INFINITY;
        let mut min = f64::INFINITY;
        let mut best_idx = 0usize;
        for (idx, &v) in map.iter().enumerate() {
            if v > best {
                best = v;
                best_idx = idx;
            }
            if v < min {
                min = v;
            }
        }
        let is_flat = best == min;
        points.push([(best_idx % w) as f64, (best_idx / w) as f64]);
        visibility.push(!is_flat);
        flat.push(is_flat);
    }
    (
        Keypoints2D {
            points_px: points,
            visibility,
        },
        flat,
    )
}

/// Crop limb `k`'s capsule between its detected endpoints, average the raw
/// pixel vectors over the region, and renormalize the mean once.
///
/// Returns the unit orientation and the region pixel count. Background zeros
/// inside the crop shrink the mean but not its direction, which is what makes
/// the readout robust to imprecise keypoints.
pub fn read_limb_orientation(
    maps: &OrientationMapStack,
    kp: &Keypoints2D,
    spec: &SkeletonSpec,
    limb: usize,
) -> Result<([f64; 3], usize), DecodeError> {
    let (p, c) = spec.limb(limb);
    if p >= kp.joint_count() || c >= kp.joint_count() {
        return Err(DecodeError::MissingEndpoint { limb });
    }
    let (h, w) = maps.resolution();
    let region = rasterize_capsule(kp.points_px[p], kp.points_px[c], spec.width_px(limb), h, w);
    let support = region.pixel_count();
    let mut sum = [0.0f64; 3];
    for (i, j) in region.pixels() {
        let v = maps.vector_at(limb, i, j);
        sum[0] += v[0];
        sum[1] += v[1];
        sum[2] += v[2];
    }
    if support > 0 {
        let inv = 1.0 / support as f64;
        sum = [sum[0] * inv, sum[1] * inv, sum[2] * inv];
    }
    let norm = (sum[0] * sum[0] + sum[1] * sum[1] + sum[2] * sum[2]).sqrt();
    if norm < DEGENERATE_MEAN_NORM {
        return Err(DecodeError::DegenerateOrientation { limb, norm });
    }
    Ok(([sum[0] / norm, sum[1] / norm, sum[2] / norm], support))
}

/// Full decode: keypoints, per-limb orientations, then reconstruction with the
/// supplied lengths from `root_mm`.
pub fn decode_pose(
    heatmaps: &HeatmapStack,
    maps: &OrientationMapStack,
    spec: &SkeletonSpec,
    lengths_mm: &[f64],
    root_mm: [f64; 3],
) -> Result<DecodeResult, DecodeError> {
    let (hh, hw) = heatmaps.resolution();
    let (oh, ow) = maps.resolution();
    if heatmaps.map_count() != spec.joint_count()
        || maps.limb_count() != spec.limb_count()
        || (hh, hw) != (oh, ow)
        || lengths_mm.len() != spec.limb_count()
    {
        return Err(DecodeError::ShapeMismatch {
            heat: (heatmaps.map_count(), hh, hw),
            orient: (maps.limb_count(), oh, ow),
            joints: spec.joint_count(),
            limbs: spec.limb_count(),
        });
    }

    let (keypoints, flat) = argmax_keypoints(heatmaps);
    let mut orientations = Vec::with_capacity(spec.limb_count());
    let mut support = Vec::with_capacity(spec.limb_count());
    let mut warnings = vec![LimbWarnings::default(); spec.limb_count()];
    for (limb, warn) in warnings.iter_mut().enumerate() {
        let (p, c) = spec.limb(limb);
        if flat[p] || flat[c] {
            warn.flat_endpoint_heatmap = true;
        }
        let (u, s) = read_limb_orientation(maps, &keypoints, spec, limb)?;
        orientations.push(u);
        support.push(s);
    }
    let pose = reconstruct_pose(&orientations, lengths_mm, root_mm, spec)?;
    Ok(DecodeResult {
        keypoints,
        orientations,
        per_limb_support: support,
        pose,
        warnings,
    })
}

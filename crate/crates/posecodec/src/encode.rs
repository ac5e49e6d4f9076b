//! Ground-truth training targets: per-joint Gaussian heatmaps and per-limb
//! orientation maps.
//!
//! Grid conventions, shared with the decoder:
//! * Keypoints live on the integer pixel lattice: the heatmap of a joint at
//!   `(x, y)` is the unnormalized Gaussian `exp(-((j-x)^2 + (i-y)^2) / (2s^2))`
//!   sampled at integer `(j, i)`, so an argmax returns integer coordinates
//!   within half a pixel of the keypoint.
//! * Capsule membership tests pixel centers `(j + 0.5, i + 0.5)` against the
//!   segment (see [`crate::camgeom::rasterize_capsule`]).
//!
//! Each limb owns its own 3-channel grid: overlapping limbs never mix values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::{rasterize_capsule, Keypoints2D};
use crate::skeleton::{pose_to_limb_vectors, Pose3D, SkeletonSpec};

#[derive(Debug, Error)]
pub enum EncodeError {
    #[error("keypoints have {kp} joints, pose has {pose}, skeleton has {spec}")]
    JointCountMismatch { kp: usize, pose: usize, spec: usize },
    #[error("limb-vector encoding requires a torso reference length in the skeleton")]
    MissingTorsoLength,
    #[error(transparent)]
    Skeleton(#[from] crate::skeleton::SkeletonError),
}

/// What the nonzero pixels of an orientation map carry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum EncodeMode {
    /// Unit limb orientations.
    #[default]
    Orientation,
    /// Length-bearing limb vectors normalized by the torso reference length
    /// (the "len" ablation encoding).
    LimbVector,
}

/// N per-joint confidence grids. Rendered ground truth lies in `[0, 1]` with a
/// single peak per visible joint; predicted or noise-corrupted stacks may
/// exceed that range.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatmapStack {
    n: usize,
    h: usize,
    w: usize,
    data: Vec<f64>,
}

impl HeatmapStack {
    pub fn zeros(n: usize, h: usize, w: usize) -> Self {
        Self {
            n,
            h,
            w,
            data: vec![0.0; n * h * w],
        }
    }

    pub fn map_count(&self) -> usize {
        self.n
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    #[inline]
    pub fn get(&self, n: usize, i: usize, j: usize) -> f64 {
        self.data[(n * self.h + i) * self.w + j]
    }

    #[inline]
    pub fn set(&mut self, n: usize, i: usize, j: usize, v: f64) {
        self.data[(n * self.h + i) * self.w + j] = v;
    }

    /// One joint's grid, row-major.
    pub fn map(&self, n: usize) -> &[f64] {
        let s = self.h * self.w;
        &self.data[n * s..(n + 1) * s]
    }

    /// Full buffer, `N x H x W` row-major.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_values(n: usize, h: usize, w: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * h * w);
        Self { n, h, w, data }
    }
}

/// K per-limb 3-channel grids (`K x 3 x H x W` row-major). In orientation
/// mode every nonzero pixel carries a unit vector; background pixels are
/// exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationMapStack {
    k: usize,
    h: usize,
    w: usize,
    pub mode: EncodeMode,
    data: Vec<f64>,
}

impl OrientationMapStack {
    pub fn zeros(k: usize, h: usize, w: usize, mode: EncodeMode) -> Self {
        Self {
            k,
            h,
            w,
            mode,
            data: vec![0.0; k * 3 * h * w],
        }
    }

    pub fn limb_count(&self) -> usize {
        self.k
    }

    pub fn resolution(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    #[inline]
    fn idx(&self, k: usize, c: usize, i: usize, j: usize) -> usize {
        ((k * 3 + c) * self.h + i) * self.w + j
    }

    #[inline]
    pub fn vector_at(&self, k: usize, i: usize, j: usize) -> [f64; 3] {
        [
            self.data[self.idx(k, 0, i, j)],
            self.data[self.idx(k, 1, i, j)],
            self.data[self.idx(k, 2, i, j)],
        ]
    }

    #[inline]
    pub fn set_vector(&mut self, k: usize, i: usize, j: usize, v: [f64; 3]) {
        for (c, &value) in v.iter().enumerate() {
            let idx = self.idx(k, c, i, j);
            self.data[idx] = value;
        }
    }

    /// Full buffer, `K x 3 x H x W` row-major.
    pub fn values(&self) -> &[f64] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn from_values(k: usize, h: usize, w: usize, mode: EncodeMode, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), k * 3 * h * w);
        Self {
            k,
            h,
            w,
            mode,
            data,
        }
    }
}

/// Render per-joint Gaussian heatmaps on an `h x w` grid.
///
/// Invisible joints produce all-zero maps.
pub fn render_heatmaps(kp: &Keypoints2D, sigma_px: f64, h: usize, w: usize) -> HeatmapStack {
    assert!(sigma_px > 0.0, "heatmap sigma must be positive");
    let n = kp.joint_count();
    let mut stack = HeatmapStack::zeros(n, h, w);
    let inv = 1.0 / (2.0 * sigma_px * sigma_px);
    for joint in 0..n {
        if !kp.visibility[joint] {
            continue;
        }
        let [x, y] = kp.points_px[joint];
        for i in 0..h {
            let dy = i as f64 - y;
            for j in 0..w {
                let dx = j as f64 - x;
                stack.set(joint, i, j, (-(dx * dx + dy * dy) * inv).exp());
            }
        }
    }
    stack
}

/// Render per-limb orientation maps: capsule pixels carry the limb's value
/// (unit orientation, or limb vector over torso length in
/// [`EncodeMode::LimbVector`]), everything else stays zero.
///
/// Limbs with an invisible endpoint or with zero length render as background.
pub fn render_orientation_maps(
    pose: &Pose3D,
    kp: &Keypoints2D,
    spec: &SkeletonSpec,
    h: usize,
    w: usize,
    mode: EncodeMode,
) -> Result<OrientationMapStack, EncodeError> {
    if kp.joint_count() != spec.joint_count() || pose.joint_count() != spec.joint_count() {
        return Err(EncodeError::JointCountMismatch {
            kp: kp.joint_count(),
            pose: pose.joint_count(),
            spec: spec.joint_count(),
        });
    }
    let torso = match mode {
        EncodeMode::Orientation => 1.0,
        EncodeMode::LimbVector => spec
            .torso_length_mm()
            .ok_or(EncodeError::MissingTorsoLength)?,
    };
    let limb_vectors = pose_to_limb_vectors(pose, spec)?;
    let mut stack = OrientationMapStack::zeros(spec.limb_count(), h, w, mode);
    for (k, &(p, c)) in spec.limbs().iter().enumerate() {
        if !kp.visibility[p] || !kp.visibility[c] {
            continue;
        }
        let value = match mode {
            EncodeMode::Orientation => match limb_vectors.orientations[k] {
                Some(u) => u,
                None => continue, // zero-length limb stays background
            },
            EncodeMode::LimbVector => {
                let v = limb_vectors.vectors[k];
                [v[0] / torso, v[1] / torso, v[2] / torso]
            }
        };
        let region = rasterize_capsule(kp.points_px[p], kp.points_px[c], spec.width_px(k), h, w);
        for (i, j) in region.pixels() {
            stack.set_vector(k, i, j, value);
        }
    }
    Ok(stack)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::camgeom::point_segment_distance;
    use crate::rng::CounterRng;
    use crate::skeleton::default_h36m_skeleton;

    fn kp_single(x: f64, y: f64) -> Keypoints2D {
        Keypoints2D {
            points_px: vec![[x, y]],
            visibility: vec![true],
        }
    }

    #[test]
    fn peak_is_one_at_keypoint() {
        let stack = render_heatmaps(&kp_single(10.0, 20.0), 2.0, 64, 64);
        assert_eq!(stack.get(0, 20, 10), 1.0);
    }

    #[test]
    fn value_at_one_sigma() {
        let sigma = 3.0;
        let stack = render_heatmaps(&kp_single(10.0, 20.0), sigma, 64, 64);
        // pixel exactly sigma to the right of the joint
        let v = stack.get(0, 20, 13);
        assert!((v - (-0.5f64).exp()).abs() < 1e-12, "{v}");
    }

    #[test]
    fn heatmap_matches_per_pixel_oracle() {
        let mut rng = CounterRng::new(15);
        for _ in 0..5 {
            let (x, y) = (rng.uniform(0.0, 63.0), rng.uniform(0.0, 63.0));
            let sigma = rng.uniform(1.0, 4.0);
            let stack = render_heatmaps(&kp_single(x, y), sigma, 64, 64);
            for i in 0..64 {
                for j in 0..64 {
                    let d2 = (j as f64 - x).powi(2) + (i as f64 - y).powi(2);
                    let expected = (-d2 / (2.0 * sigma * sigma)).exp();
                    let got = stack.get(0, i, j);
                    assert!(
                        (got - expected).abs() <= 1e-12 * expected.max(1e-30),
                        "pixel ({i},{j}): {got} vs {expected}"
                    );
                }
            }
        }
    }

    #[test]
    fn invisible_joint_renders_zero_map() {
        let kp = Keypoints2D {
            points_px: vec![[10.0, 10.0]],
            visibility: vec![false],
        };
        let stack = render_heatmaps(&kp, 2.0, 32, 32);
        assert!(stack.values().iter().all(|&v| v == 0.0));
    }

    /// A pose/keypoint pair where all joints of the default skeleton are
    /// visible on the grid.
    fn synthetic_frame(seed: u64) -> (Pose3D, Keypoints2D) {
        let spec = default_h36m_skeleton();
        let cam = crate::camgeom::CameraModel {
            fx: 230.0,
            fy: 230.0,
            cx: 128.0,
            cy: 128.0,
            image_w: 256,
            image_h: 256,
        }
        .scaled_to(64, 64);
        let mut rng = CounterRng::new(seed);
        let joints: Vec<[f64; 3]> = (0..spec.joint_count())
            .map(|_| {
                [
                    rng.uniform(-600.0, 600.0),
                    rng.uniform(-600.0, 600.0),
                    rng.uniform(2000.0, 3200.0),
                ]
            })
            .collect();
        let pose = Pose3D::new(joints).unwrap();
        let kp = crate::camgeom::project(&pose, &cam).unwrap();
        assert!(kp.visibility.iter().all(|&v| v));
        (pose, kp)
    }

    #[test]
    fn limb_along_optical_axis_encodes_unit_z() {
        let spec = default_h36m_skeleton();
        let mut joints = vec![[0.0, 0.0, 2000.0]; 17];
        // give every limb some offset so nothing is zero-length
        for (idx, j) in joints.iter_mut().enumerate() {
            j[0] += 40.0 * idx as f64;
        }
        // limb 0 is (pelvis, r_hip): make it point straight along +z
        joints[1] = [0.0, 0.0, 2300.0];
        let pose = Pose3D::new(joints).unwrap();
        let kp = Keypoints2D {
            points_px: (0..17).map(|i| [4.0 + 3.0 * i as f64, 30.0]).collect(),
            visibility: vec![true; 17],
        };
        let maps =
            render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::Orientation).unwrap();
        let region = rasterize_capsule(kp.points_px[0], kp.points_px[1], spec.width_px(0), 64, 64);
        assert!(!region.is_empty());
        for (i, j) in region.pixels() {
            assert_eq!(maps.vector_at(0, i, j), [0.0, 0.0, 1.0]);
        }
    }

    #[test]
    fn background_pixels_are_exactly_zero() {
        let spec = default_h36m_skeleton();
        let (pose, kp) = synthetic_frame(3);
        let maps =
            render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::Orientation).unwrap();
        for (k, &(p, c)) in spec.limbs().iter().enumerate() {
            for i in 0..64 {
                for j in 0..64 {
                    let center = [j as f64 + 0.5, i as f64 + 0.5];
                    let d = point_segment_distance(center, kp.points_px[p], kp.points_px[c]);
                    if d > spec.width_px(k) {
                        assert_eq!(maps.vector_at(k, i, j), [0.0, 0.0, 0.0]);
                    }
                }
            }
        }
    }

    #[test]
    fn region_values_and_membership_match_oracle() {
        let spec = default_h36m_skeleton();
        for seed in [7, 8, 9] {
            let (pose, kp) = synthetic_frame(seed);
            let maps = render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::Orientation)
                .unwrap();
            let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
            for (k, &(p, c)) in spec.limbs().iter().enumerate() {
                // independent recomputation of the limb orientation
                let (pa, pb) = (pose.joints_mm[p], pose.joints_mm[c]);
                let d = [pb[0] - pa[0], pb[1] - pa[1], pb[2] - pa[2]];
                let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                let u = [d[0] / norm, d[1] / norm, d[2] / norm];
                assert_eq!(lv.orientations[k], Some(u));
                for i in 0..64 {
                    for j in 0..64 {
                        let center = [j as f64 + 0.5, i as f64 + 0.5];
                        let dist = point_segment_distance(center, kp.points_px[p], kp.points_px[c]);
                        let got = maps.vector_at(k, i, j);
                        if dist <= spec.width_px(k) {
                            assert_eq!(got, u, "limb {k} pixel ({i},{j})");
                        } else {
                            assert_eq!(got, [0.0, 0.0, 0.0]);
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn orientation_maps_scale_invariant_limb_vector_maps_scale_linearly() {
        let spec = default_h36m_skeleton();
        let (pose, kp) = synthetic_frame(12);
        for s in [0.5, 2.5] {
            let base = render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::Orientation)
                .unwrap();
            let scaled = render_orientation_maps(
                &pose.scaled(s),
                &kp,
                &spec,
                64,
                64,
                EncodeMode::Orientation,
            )
            .unwrap();
            for (a, b) in base.values().iter().zip(scaled.values()) {
                assert!((a - b).abs() < 1e-12);
            }

            let lv_base =
                render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::LimbVector).unwrap();
            let lv_scaled = render_orientation_maps(
                &pose.scaled(s),
                &kp,
                &spec,
                64,
                64,
                EncodeMode::LimbVector,
            )
            .unwrap();
            for (a, b) in lv_base.values().iter().zip(lv_scaled.values()) {
                let expect = a * s;
                assert!((b - expect).abs() <= 1e-12 * expect.abs().max(1.0));
            }
        }
    }

    #[test]
    fn each_limb_region_carries_one_constant_vector() {
        let spec = default_h36m_skeleton();
        let (pose, kp) = synthetic_frame(23);
        let maps =
            render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::Orientation).unwrap();
        for k in 0..spec.limb_count() {
            let mut seen: Option<[f64; 3]> = None;
            for i in 0..64 {
                for j in 0..64 {
                    let v = maps.vector_at(k, i, j);
                    if v != [0.0, 0.0, 0.0] {
                        match seen {
                            None => seen = Some(v),
                            Some(prev) => assert_eq!(prev, v),
                        }
                    }
                }
            }
            assert!(seen.is_some(), "limb {k} rendered no pixels");
        }
    }

    #[test]
    fn invisible_endpoint_renders_limb_as_background() {
        let spec = default_h36m_skeleton();
        let (pose, mut kp) = synthetic_frame(31);
        kp.visibility[3] = false; // r_ankle: child of limb 2
        let maps =
            render_orientation_maps(&pose, &kp, &spec, 64, 64, EncodeMode::Orientation).unwrap();
        let (h, w) = maps.resolution();
        for i in 0..h {
            for j in 0..w {
                assert_eq!(maps.vector_at(2, i, j), [0.0, 0.0, 0.0]);
            }
        }
    }

    #[test]
    fn limb_vector_mode_without_torso_errors() {
        let spec = crate::skeleton::SkeletonSpec::from_config(crate::skeleton::SkeletonConfig {
            joints: vec!["a".into(), "b".into()],
            parents: vec![0, 0],
            limbs: vec![(0, 1)],
            widths_px: vec![2.0],
            ref_lengths_mm: vec![100.0],
            root: 0,
            torso_mm: None,
            rest_dirs: None,
        })
        .unwrap();
        let pose = Pose3D::new(vec![[0.0, 0.0, 1000.0], [100.0, 0.0, 1000.0]]).unwrap();
        let kp = Keypoints2D {
            points_px: vec![[10.0, 10.0], [20.0, 10.0]],
            visibility: vec![true, true],
        };
        assert!(matches!(
            render_orientation_maps(&pose, &kp, &spec, 32, 32, EncodeMode::LimbVector),
            Err(EncodeError::MissingTorsoLength)
        ));
    }
}

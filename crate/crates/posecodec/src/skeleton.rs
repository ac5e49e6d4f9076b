//! Skeleton topology, reference limb lengths, and pose/limb-vector conversions.
//!
//! A skeleton is a rooted tree over joints. Each tree edge is a limb; a 3D
//! pose is equivalently a set of per-limb vectors (child minus parent), which
//! factor into a unit orientation and a length. Reconstruction walks the tree
//! from the root accumulating `orientation * length` steps.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Limbs shorter than this (in mm) have no defined orientation.
pub const ZERO_LENGTH_MM: f64 = 1e-9;

/// Orientations passed to reconstruction must be unit within this tolerance.
pub const UNIT_NORM_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum SkeletonError {
    #[error("parent array does not describe a single tree rooted at {root}: {reason}")]
    NotATree { root: usize, reason: String },
    #[error("limb list does not cover the tree edges exactly: {0}")]
    BadLimbCover(String),
    #[error("limb {limb} has non-positive width {width}")]
    NonPositiveWidth { limb: usize, width: f64 },
    #[error("limb {limb} has non-positive reference length {length}")]
    NonPositiveRefLength { limb: usize, length: f64 },
    #[error("field {field} has {got} entries, expected {expected}")]
    FieldLengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("root index {root} out of range for {joints} joints")]
    BadRootIndex { root: usize, joints: usize },
    #[error("pose has {got} joints, skeleton has {expected}")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("expected {expected} per-limb values, got {got}")]
    LimbCountMismatch { expected: usize, got: usize },
    #[error("orientation of limb {limb} has norm {norm}, not unit within {UNIT_NORM_TOL}")]
    NonUnitOrientation { limb: usize, norm: f64 },
    #[error("rest direction of limb {limb} has norm {norm}, expected unit")]
    BadRestDirection { limb: usize, norm: f64 },
    #[error("non-finite coordinate in joint {joint}")]
    NonFiniteJoint { joint: usize },
}

/// On-disk skeleton description (see the README for the JSON schema).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SkeletonConfig {
    pub joints: Vec<String>,
    pub parents: Vec<usize>,
    pub limbs: Vec<(usize, usize)>,
    pub widths_px: Vec<f64>,
    pub ref_lengths_mm: Vec<f64>,
    pub root: usize,
    /// Torso reference length used to normalize limb-vector encodings.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub torso_mm: Option<f64>,
    /// Per-limb unit rest directions; required by the synthetic pose priors.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rest_dirs: Option<Vec<[f64; 3]>>,
}

/// Validated skeleton: joint names, parent tree, limbs, widths, and reference
/// lengths. Construct via [`SkeletonSpec::from_config`] or
/// [`default_h36m_skeleton`].
#[derive(Debug, Clone)]
pub struct SkeletonSpec {
    joint_names: Vec<String>,
    parent: Vec<usize>,
    limbs: Vec<(usize, usize)>,
    limb_width_px: Vec<f64>,
    ref_limb_length_mm: Vec<f64>,
    root_index: usize,
    torso_length_mm: Option<f64>,
    rest_dirs: Option<Vec<[f64; 3]>>,
    /// Limb indices in parent-before-child order, ties broken by child index.
    topo_order: Vec<usize>,
    /// Incoming limb of each joint (None for the root).
    limb_of_child: Vec<Option<usize>>,
}

impl SkeletonSpec {
    pub fn from_config(cfg: SkeletonConfig) -> Result<Self, SkeletonError> {
        let n = cfg.joints.len();
        let check = |field: &'static str, got: usize, expected: usize| {
            if got != expected {
                Err(SkeletonError::FieldLengthMismatch {
                    field,
                    expected,
                    got,
                })
            } else {
                Ok(())
            }
        };
        check("parents", cfg.parents.len(), n)?;
        let k = n.saturating_sub(1);
        check("limbs", cfg.limbs.len(), k)?;
        check("widths_px", cfg.widths_px.len(), k)?;
        check("ref_lengths_mm", cfg.ref_lengths_mm.len(), k)?;
        if let Some(dirs) = &cfg.rest_dirs {
            check("rest_dirs", dirs.len(), k)?;
        }
        if cfg.root >= n {
            return Err(SkeletonError::BadRootIndex {
                root: cfg.root,
                joints: n,
            });
        }

        validate_tree(&cfg.parents, cfg.root)?;
        let limb_of_child = validate_limb_cover(&cfg.parents, &cfg.limbs, cfg.root, n)?;

        for (i, &w) in cfg.widths_px.iter().enumerate() {
            if !w.is_finite() || w <= 0.0 {
                return Err(SkeletonError::NonPositiveWidth { limb: i, width: w });
            }
        }
        for (i, &l) in cfg.ref_lengths_mm.iter().enumerate() {
            if !l.is_finite() || l <= 0.0 {
                return Err(SkeletonError::NonPositiveRefLength { limb: i, length: l });
            }
        }
        let rest_dirs = match cfg.rest_dirs {
            Some(dirs) => {
                let mut out = Vec::with_capacity(dirs.len());
                for (i, d) in dirs.iter().enumerate() {
                    let norm = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
                    if (norm - 1.0).abs() > 1e-6 {
                        return Err(SkeletonError::BadRestDirection { limb: i, norm });
                    }
                    out.push([d[0] / norm, d[1] / norm, d[2] / norm]);
                }
                Some(out)
            }
            None => None,
        };

        let topo_order = topological_limb_order(&cfg.parents, &cfg.limbs, cfg.root);

        Ok(Self {
            joint_names: cfg.joints,
            parent: cfg.parents,
            limbs: cfg.limbs,
            limb_width_px: cfg.widths_px,
            ref_limb_length_mm: cfg.ref_lengths_mm,
            root_index: cfg.root,
            torso_length_mm: cfg.torso_mm,
            rest_dirs,
            topo_order,
            limb_of_child,
        })
    }

    /// Parse a skeleton config from JSON text.
    pub fn from_json(text: &str) -> Result<Self, Box<dyn std::error::Error + Send + Sync>> {
        let cfg: SkeletonConfig = serde_json::from_str(text)?;
        Ok(Self::from_config(cfg)?)
    }

    pub fn joint_count(&self) -> usize {
        self.joint_names.len()
    }

    pub fn limb_count(&self) -> usize {
        self.limbs.len()
    }

    pub fn joint_names(&self) -> &[String] {
        &self.joint_names
    }

    pub fn parent(&self, joint: usize) -> usize {
        self.parent[joint]
    }

    pub fn limbs(&self) -> &[(usize, usize)] {
        &self.limbs
    }

    /// Endpoint joints `(parent, child)` of limb `k`.
    pub fn limb(&self, k: usize) -> (usize, usize) {
        self.limbs[k]
    }

    pub fn width_px(&self, k: usize) -> f64 {
        self.limb_width_px[k]
    }

    pub fn widths_px(&self) -> &[f64] {
        &self.limb_width_px
    }

    pub fn ref_length_mm(&self, k: usize) -> f64 {
        self.ref_limb_length_mm[k]
    }

    pub fn ref_lengths_mm(&self) -> &[f64] {
        &self.ref_limb_length_mm
    }

    pub fn root_index(&self) -> usize {
        self.root_index
    }

    pub fn torso_length_mm(&self) -> Option<f64> {
        self.torso_length_mm
    }

    pub fn rest_dirs(&self) -> Option<&[[f64; 3]]> {
        self.rest_dirs.as_deref()
    }

    /// Limb indices ordered parent-before-child (derived once at build).
    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Incoming limb of `joint`, None for the root.
    pub fn child_limb(&self, joint: usize) -> Option<usize> {
        self.limb_of_child[joint]
    }

    /// Joints strictly below limb `k` (the child endpoint and its descendants).
    pub fn subtree_joints(&self, k: usize) -> Vec<usize> {
        let (_, child) = self.limbs[k];
        let mut below = vec![false; self.joint_count()];
        below[child] = true;
        // topo order guarantees parents are marked before their children
        for &kk in &self.topo_order {
            let (p, c) = self.limbs[kk];
            if below[p] {
                below[c] = true;
            }
        }
        (0..self.joint_count()).filter(|&j| below[j]).collect()
    }

    pub fn to_config(&self) -> SkeletonConfig {
        SkeletonConfig {
            joints: self.joint_names.clone(),
            parents: self.parent.clone(),
            limbs: self.limbs.clone(),
            widths_px: self.limb_width_px.clone(),
            ref_lengths_mm: self.ref_limb_length_mm.clone(),
            root: self.root_index,
            torso_mm: self.torso_length_mm,
            rest_dirs: self.rest_dirs.clone(),
        }
    }
}

fn validate_tree(parents: &[usize], root: usize) -> Result<(), SkeletonError> {
    let n = parents.len();
    let fail = |reason: String| SkeletonError::NotATree { root, reason };
    if parents[root] != root {
        return Err(fail(format!(
            "root parent must be itself, got {}",
            parents[root]
        )));
    }
    for (j, &p) in parents.iter().enumerate() {
        if p >= n {
            return Err(fail(format!("joint {j} has out-of-range parent {p}")));
        }
        if j != root && p == j {
            return Err(fail(format!("non-root joint {j} is its own parent")));
        }
    }
    // Walking parent links from every joint must reach the root without
    // revisiting a joint (no cycles, everything connected).
    for start in 0..n {
        let mut seen = vec![false; n];
        let mut j = start;
        while j != root {
            if seen[j] {
                return Err(fail(format!("cycle through joint {j}")));
            }
            seen[j] = true;
            j = parents[j];
        }
    }
    Ok(())
}

fn validate_limb_cover(
    parents: &[usize],
    limbs: &[(usize, usize)],
    root: usize,
    n: usize,
) -> Result<Vec<Option<usize>>, SkeletonError> {
    let mut limb_of_child: Vec<Option<usize>> = vec![None; n];
    for (k, &(p, c)) in limbs.iter().enumerate() {
        if p >= n || c >= n {
            return Err(SkeletonError::BadLimbCover(format!(
                "limb {k} = ({p}, {c}) references a joint out of range"
            )));
        }
        if c == root {
            return Err(SkeletonError::BadLimbCover(format!(
                "limb {k} has the root as child"
            )));
        }
        if parents[c] != p {
            return Err(SkeletonError::BadLimbCover(format!(
                "limb {k} = ({p}, {c}) is not a tree edge (parent of {c} is {})",
                parents[c]
            )));
        }
        if limb_of_child[c].is_some() {
            return Err(SkeletonError::BadLimbCover(format!(
                "joint {c} is the child of more than one limb"
            )));
        }
        limb_of_child[c] = Some(k);
    }
    for j in 0..n {
        if j != root && limb_of_child[j].is_none() {
            return Err(SkeletonError::BadLimbCover(format!(
                "tree edge ({}, {j}) missing from the limb list",
                parents[j]
            )));
        }
    }
    Ok(limb_of_child)
}

fn topological_limb_order(parents: &[usize], limbs: &[(usize, usize)], root: usize) -> Vec<usize> {
    let n = parents.len();
    let mut depth = vec![0usize; n];
    for (j, slot) in depth.iter_mut().enumerate() {
        let mut d = 0;
        let mut cur = j;
        while cur != root {
            cur = parents[cur];
            d += 1;
        }
        *slot = d;
    }
    let mut order: Vec<usize> = (0..limbs.len()).collect();
    order.sort_by_key(|&k| (depth[limbs[k].1], limbs[k].1));
    order
}

/// 3D joint positions in millimeters, camera coordinate frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    pub joints_mm: Vec<[f64; 3]>,
}

impl Pose3D {
    pub fn new(joints_mm: Vec<[f64; 3]>) -> Result<Self, SkeletonError> {
        for (j, p) in joints_mm.iter().enumerate() {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(SkeletonError::NonFiniteJoint { joint: j });
            }
        }
        Ok(Self { joints_mm })
    }

    pub fn joint_count(&self) -> usize {
        self.joints_mm.len()
    }

    /// Pose with every coordinate multiplied by `s`.
    pub fn scaled(&self, s: f64) -> Pose3D {
        Pose3D {
            joints_mm: self
                .joints_mm
                .iter()
                .map(|p| [p[0] * s, p[1] * s, p[2] * s])
                .collect(),
        }
    }

    /// Pose translated by `t`.
    pub fn translated(&self, t: [f64; 3]) -> Pose3D {
        Pose3D {
            joints_mm: self
                .joints_mm
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
        }
    }
}

/// Per-limb displacement vectors, lengths, and unit orientations.
///
/// `orientations[k]` is `None` where the limb is shorter than
/// [`ZERO_LENGTH_MM`] (the zero-length flag from the encode contract).
#[derive(Debug, Clone)]
pub struct LimbVectorSet {
    pub vectors: Vec<[f64; 3]>,
    pub lengths_mm: Vec<f64>,
    pub orientations: Vec<Option<[f64; 3]>>,
}

impl LimbVectorSet {
    /// True if any limb was flagged as zero-length.
    pub fn has_zero_length(&self) -> bool {
        self.orientations.iter().any(|o| o.is_none())
    }
}

/// Default 17-joint human skeleton with 16 limbs, rooted at the pelvis.
///
/// Joint ordering, limb widths and reference lengths are fixed choices of this
/// library (average adult proportions); override with a skeleton config file
/// where different conventions are needed.
pub fn default_h36m_skeleton() -> SkeletonSpec {
    let joints = [
        "pelvis",
        "r_hip",
        "r_knee",
        "r_ankle",
        "l_hip",
        "l_knee",
        "l_ankle",
        "spine",
        "thorax",
        "neck",
        "head",
        "l_shoulder",
        "l_elbow",
        "l_wrist",
        "r_shoulder",
        "r_elbow",
        "r_wrist",
    ];
    let parents = vec![0, 0, 1, 2, 0, 4, 5, 0, 7, 8, 9, 8, 11, 12, 8, 14, 15];
    let limbs: Vec<(usize, usize)> = (1..17).map(|c| (parents[c], c)).collect();
    let ref_lengths = vec![
        105.0, 420.0, 410.0, // right leg: hip offset, thigh, shank
        105.0, 420.0, 410.0, // left leg
        230.0, 240.0, // lower and upper spine
        120.0, 110.0, // neck, head
        170.0, 280.0, 250.0, // left arm: clavicle, upper arm, forearm
        170.0, 280.0, 250.0, // right arm
    ];
    // Rest directions in the camera frame (x right, y down, z toward the
    // scene): an upright T-pose facing the camera.
    let down = [0.0, 1.0, 0.0];
    let up = [0.0, -1.0, 0.0];
    let left = [1.0, 0.0, 0.0]; // person's left = camera +x
    let right = [-1.0, 0.0, 0.0];
    let rest_dirs = vec![
        right, down, down, // right leg
        left, down, down, // left leg
        up, up, // spine
        up, up, // neck, head
        left, left, left, // left arm
        right, right, right, // right arm
    ];
    SkeletonSpec::from_config(SkeletonConfig {
        joints: joints.iter().map(|s| s.to_string()).collect(),
        parents,
        limbs,
        widths_px: vec![2.5; 16],
        ref_lengths_mm: ref_lengths,
        root: 0,
        torso_mm: Some(470.0), // pelvis -> spine -> thorax
        rest_dirs: Some(rest_dirs),
    })
    .expect("built-in skeleton is valid")
}

/// Difference each limb's endpoint joints into vectors, lengths, and unit
/// orientations. Limbs shorter than [`ZERO_LENGTH_MM`] get `None` orientation.
pub fn pose_to_limb_vectors(
    pose: &Pose3D,
    spec: &SkeletonSpec,
) -> Result<LimbVectorSet, SkeletonError> {
    if pose.joint_count() != spec.joint_count() {
        return Err(SkeletonError::JointCountMismatch {
            expected: spec.joint_count(),
            got: pose.joint_count(),
        });
    }
    let k = spec.limb_count();
    let mut vectors = Vec::with_capacity(k);
    let mut lengths = Vec::with_capacity(k);
    let mut orientations = Vec::with_capacity(k);
    for &(p, c) in spec.limbs() {
        let a = pose.joints_mm[p];
        let b = pose.joints_mm[c];
        let v = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let l = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        vectors.push(v);
        lengths.push(l);
        orientations.push(if l < ZERO_LENGTH_MM {
            None
        } else {
            Some([v[0] / l, v[1] / l, v[2] / l])
        });
    }
    Ok(LimbVectorSet {
        vectors,
        lengths_mm: lengths,
        orientations,
    })
}

/// Rebuild joint positions from per-limb orientations and lengths, walking the
/// tree from `root_mm` in topological order.
pub fn reconstruct_pose(
    orientations: &[[f64; 3]],
    lengths_mm: &[f64],
    root_mm: [f64; 3],
    spec: &SkeletonSpec,
) -> Result<Pose3D, SkeletonError> {
    let k = spec.limb_count();
    if orientations.len() != k {
        return Err(SkeletonError::LimbCountMismatch {
            expected: k,
            got: orientations.len(),
        });
    }
    if lengths_mm.len() != k {
        return Err(SkeletonError::LimbCountMismatch {
            expected: k,
            got: lengths_mm.len(),
        });
    }
    for (i, u) in orientations.iter().enumerate() {
        let norm = (u[0] * u[0] + u[1] * u[1] + u[2] * u[2]).sqrt();
        if (norm - 1.0).abs() > UNIT_NORM_TOL {
            return Err(SkeletonError::NonUnitOrientation { limb: i, norm });
        }
    }
    let mut joints = vec![[0.0f64; 3]; spec.joint_count()];
    joints[spec.root_index()] = root_mm;
    for &kk in spec.topo_order() {
        let (p, c) = spec.limb(kk);
        let u = orientations[kk];
        let l = lengths_mm[kk];
        joints[c] = [
            joints[p][0] + u[0] * l,
            joints[p][1] + u[1] * l,
            joints[p][2] + u[2] * l,
        ];
    }
    Ok(Pose3D { joints_mm: joints })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_pose(spec: &SkeletonSpec, rng: &mut CounterRng) -> Pose3D {
        let joints = (0..spec.joint_count())
            .map(|_| {
                [
                    rng.uniform(-800.0, 800.0),
                    rng.uniform(-800.0, 800.0),
                    rng.uniform(1500.0, 3500.0),
                ]
            })
            .collect();
        Pose3D::new(joints).unwrap()
    }

    #[test]
    fn default_skeleton_has_17_joints_16_limbs() {
        let spec = default_h36m_skeleton();
        assert_eq!(spec.joint_count(), 17);
        assert_eq!(spec.limb_count(), 16);
        assert_eq!(spec.root_index(), 0);
    }

    #[test]
    fn every_non_root_joint_in_exactly_one_limb() {
        let spec = default_h36m_skeleton();
        let mut child_count = vec![0usize; spec.joint_count()];
        for &(_, c) in spec.limbs() {
            child_count[c] += 1;
        }
        for j in 0..spec.joint_count() {
            let expected = usize::from(j != spec.root_index());
            assert_eq!(child_count[j], expected, "joint {j}");
        }
    }

    #[test]
    fn all_joints_reachable_from_root_bfs_oracle() {
        // Independent traversal: BFS over child edges built from the limb list.
        let spec = default_h36m_skeleton();
        let n = spec.joint_count();
        let mut children: Vec<Vec<usize>> = vec![Vec::new(); n];
        for &(p, c) in spec.limbs() {
            children[p].push(c);
        }
        let mut visited = vec![false; n];
        let mut queue = std::collections::VecDeque::from([spec.root_index()]);
        visited[spec.root_index()] = true;
        while let Some(j) = queue.pop_front() {
            for &c in &children[j] {
                assert!(!visited[c], "joint {c} reached twice");
                visited[c] = true;
                queue.push_back(c);
            }
        }
        assert!(visited.iter().all(|&v| v), "unreached joints");
    }

    #[test]
    fn limb_vectors_axis_aligned() {
        let spec = default_h36m_skeleton();
        let mut joints = vec![[0.0; 3]; 17];
        joints[1] = [100.0, 0.0, 0.0]; // r_hip, child of limb 0
        let pose = Pose3D::new(joints).unwrap();
        let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
        assert_eq!(lv.vectors[0], [100.0, 0.0, 0.0]);
        assert_eq!(lv.lengths_mm[0], 100.0);
        assert_eq!(lv.orientations[0], Some([1.0, 0.0, 0.0]));
    }

    #[test]
    fn scaling_preserves_orientations_scales_lengths() {
        let spec = default_h36m_skeleton();
        let mut rng = CounterRng::new(11);
        let pose = random_pose(&spec, &mut rng);
        let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
        let lv_scaled = pose_to_limb_vectors(&pose.scaled(2.5), &spec).unwrap();
        for k in 0..spec.limb_count() {
            let (a, b) = (
                lv.orientations[k].unwrap(),
                lv_scaled.orientations[k].unwrap(),
            );
            for c in 0..3 {
                assert!((a[c] - b[c]).abs() < 1e-12, "limb {k} channel {c}");
            }
            let rel =
                (lv_scaled.lengths_mm[k] - 2.5 * lv.lengths_mm[k]).abs() / (2.5 * lv.lengths_mm[k]);
            assert!(rel < 1e-12);
        }
    }

    #[test]
    fn lengths_match_per_edge_distance_oracle() {
        let spec = default_h36m_skeleton();
        let mut rng = CounterRng::new(21);
        for _ in 0..20 {
            let pose = random_pose(&spec, &mut rng);
            let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
            for (k, &(p, c)) in spec.limbs().iter().enumerate() {
                let (a, b) = (pose.joints_mm[p], pose.joints_mm[c]);
                let d =
                    ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
                assert!((lv.lengths_mm[k] - d).abs() <= 1e-12 * d.max(1.0));
            }
        }
    }

    #[test]
    fn zero_length_limb_flagged_not_fatal() {
        let spec = default_h36m_skeleton();
        let joints = vec![[5.0, 5.0, 5.0]; 17]; // fully degenerate pose
        let pose = Pose3D::new(joints).unwrap();
        let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
        assert!(lv.has_zero_length());
        assert!(lv.orientations.iter().all(|o| o.is_none()));
    }

    #[test]
    fn reconstruct_single_limb() {
        let spec = two_limb_chain();
        let pose = reconstruct_pose(
            &[[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]],
            &[100.0, 50.0],
            [0.0, 0.0, 0.0],
            &spec,
        )
        .unwrap();
        assert_eq!(pose.joints_mm[1], [100.0, 0.0, 0.0]);
    }

    #[test]
    fn reconstruct_colinear_chain() {
        let spec = two_limb_chain();
        let pose = reconstruct_pose(
            &[[0.0, 1.0, 0.0], [0.0, 1.0, 0.0]],
            &[50.0, 50.0],
            [0.0, 0.0, 0.0],
            &spec,
        )
        .unwrap();
        assert_eq!(pose.joints_mm[2], [0.0, 100.0, 0.0]);
    }

    fn two_limb_chain() -> SkeletonSpec {
        SkeletonSpec::from_config(SkeletonConfig {
            joints: vec!["a".into(), "b".into(), "c".into()],
            parents: vec![0, 0, 1],
            limbs: vec![(0, 1), (1, 2)],
            widths_px: vec![2.0, 2.0],
            ref_lengths_mm: vec![100.0, 100.0],
            root: 0,
            torso_mm: None,
            rest_dirs: None,
        })
        .unwrap()
    }

    #[test]
    fn non_unit_orientation_rejected() {
        let spec = two_limb_chain();
        let err = reconstruct_pose(
            &[[1.0, 0.0, 0.0], [0.0, 1.01, 0.0]],
            &[100.0, 50.0],
            [0.0, 0.0, 0.0],
            &spec,
        )
        .unwrap_err();
        assert!(matches!(
            err,
            SkeletonError::NonUnitOrientation { limb: 1, .. }
        ));
    }

    #[test]
    fn roundtrip_pose_to_vectors_and_back() {
        let spec = default_h36m_skeleton();
        let mut rng = CounterRng::new(31);
        for _ in 0..1000 {
            let pose = random_pose(&spec, &mut rng);
            let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
            let orients: Vec<[f64; 3]> = lv.orientations.iter().map(|o| o.unwrap()).collect();
            let rebuilt = reconstruct_pose(
                &orients,
                &lv.lengths_mm,
                pose.joints_mm[spec.root_index()],
                &spec,
            )
            .unwrap();
            for j in 0..17 {
                for c in 0..3 {
                    let d = (rebuilt.joints_mm[j][c] - pose.joints_mm[j][c]).abs();
                    assert!(d < 1e-9, "joint {j} channel {c} off by {d}");
                }
            }
        }
    }

    #[test]
    fn reconstruction_translation_equivariant() {
        let spec = default_h36m_skeleton();
        let mut rng = CounterRng::new(41);
        let pose = random_pose(&spec, &mut rng);
        let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
        let orients: Vec<[f64; 3]> = lv.orientations.iter().map(|o| o.unwrap()).collect();
        let t = [37.0, -11.0, 103.0];
        let a = reconstruct_pose(&orients, &lv.lengths_mm, [0.0, 0.0, 0.0], &spec).unwrap();
        let b = reconstruct_pose(&orients, &lv.lengths_mm, t, &spec).unwrap();
        for j in 0..17 {
            for c in 0..3 {
                assert!((b.joints_mm[j][c] - (a.joints_mm[j][c] + t[c])).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn perturbing_one_limb_moves_only_its_subtree() {
        let spec = default_h36m_skeleton();
        let mut rng = CounterRng::new(51);
        let pose = random_pose(&spec, &mut rng);
        let lv = pose_to_limb_vectors(&pose, &spec).unwrap();
        let orients: Vec<[f64; 3]> = lv.orientations.iter().map(|o| o.unwrap()).collect();
        let base = reconstruct_pose(&orients, &lv.lengths_mm, [0.0; 3], &spec).unwrap();

        let theta: f64 = 1e-4;
        for k in 0..spec.limb_count() {
            // rotate orientation k by theta about an axis orthogonal to it
            let u = orients[k];
            let helper = if u[0].abs() < 0.9 {
                [1.0, 0.0, 0.0]
            } else {
                [0.0, 1.0, 0.0]
            };
            let mut axis = [
                u[1] * helper[2] - u[2] * helper[1],
                u[2] * helper[0] - u[0] * helper[2],
                u[0] * helper[1] - u[1] * helper[0],
            ];
            let an = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
            axis = [axis[0] / an, axis[1] / an, axis[2] / an];
            let (s, c) = theta.sin_cos();
            // Rodrigues with axis orthogonal to u: u*cos + (axis x u)*sin
            let cross = [
                axis[1] * u[2] - axis[2] * u[1],
                axis[2] * u[0] - axis[0] * u[2],
                axis[0] * u[1] - axis[1] * u[0],
            ];
            let mut perturbed = orients.clone();
            perturbed[k] = [
                u[0] * c + cross[0] * s,
                u[1] * c + cross[1] * s,
                u[2] * c + cross[2] * s,
            ];
            let moved = reconstruct_pose(&perturbed, &lv.lengths_mm, [0.0; 3], &spec).unwrap();

            let subtree = spec.subtree_joints(k);
            for j in 0..spec.joint_count() {
                let d = (0..3)
                    .map(|c| (moved.joints_mm[j][c] - base.joints_mm[j][c]).powi(2))
                    .sum::<f64>()
                    .sqrt();
                if subtree.contains(&j) {
                    // path length through limb k bounds the displacement
                    let bound = theta * lv.lengths_mm[k] + 1e-9;
                    assert!(d <= bound, "limb {k} joint {j}: {d} > {bound}");
                } else {
                    assert_eq!(d, 0.0, "limb {k} moved joint {j} outside its subtree");
                }
            }
        }
    }

    #[test]
    fn config_rejects_cycles_and_bad_cover() {
        let bad_cycle = SkeletonConfig {
            joints: vec!["a".into(), "b".into(), "c".into()],
            parents: vec![0, 2, 1], // b <-> c cycle
            limbs: vec![(2, 1), (1, 2)],
            widths_px: vec![1.0, 1.0],
            ref_lengths_mm: vec![1.0, 1.0],
            root: 0,
            torso_mm: None,
            rest_dirs: None,
        };
        assert!(matches!(
            SkeletonSpec::from_config(bad_cycle),
            Err(SkeletonError::NotATree { .. })
        ));

        let bad_cover = SkeletonConfig {
            joints: vec!["a".into(), "b".into(), "c".into()],
            parents: vec![0, 0, 1],
            limbs: vec![(0, 1), (0, 1)], // duplicate edge, (1, 2) missing
            widths_px: vec![1.0, 1.0],
            ref_lengths_mm: vec![1.0, 1.0],
            root: 0,
            torso_mm: None,
            rest_dirs: None,
        };
        assert!(matches!(
            SkeletonSpec::from_config(bad_cover),
            Err(SkeletonError::BadLimbCover(_))
        ));
    }
}

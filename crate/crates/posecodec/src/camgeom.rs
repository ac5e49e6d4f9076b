//! Pinhole projection and capsule rasterization.
//!
//! Both the target encoder and the synthetic generator work on 2D keypoints in
//! output-map pixel units; the capsule region (all pixels within a fixed
//! distance of a 2D segment) approximates a limb's image footprint.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::skeleton::Pose3D;

#[derive(Debug, Error)]
pub enum CamError {
    #[error("joint {joint} is behind the camera (z = {z})")]
    BehindCamera { joint: usize, z: f64 },
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
}

/// Pinhole intrinsics: `x = fx * X / Z + cx`, `y = fy * Y / Z + cy`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub image_w: u32,
    pub image_h: u32,
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CamError> {
        if !(self.fx > 0.0 && self.fy > 0.0) {
            return Err(CamError::InvalidCamera(format!(
                "focal lengths must be positive, got fx={} fy={}",
                self.fx, self.fy
            )));
        }
        if !(0.0 <= self.cx && self.cx < self.image_w as f64)
            || !(0.0 <= self.cy && self.cy < self.image_h as f64)
        {
            return Err(CamError::InvalidCamera(format!(
                "principal point ({}, {}) outside {}x{} image",
                self.cx, self.cy, self.image_w, self.image_h
            )));
        }
        Ok(())
    }

    /// Equivalent camera producing coordinates at a different resolution
    /// (e.g. the 4x-downsampled output-map grid).
    pub fn scaled_to(&self, w: usize, h: usize) -> CameraModel {
        let sx = w as f64 / self.image_w as f64;
        let sy = h as f64 / self.image_h as f64;
        CameraModel {
            fx: self.fx * sx,
            fy: self.fy * sy,
            cx: self.cx * sx,
            cy: self.cy * sy,
            image_w: w as u32,
            image_h: h as u32,
        }
    }
}

/// 2D keypoints in output-map pixel units plus per-joint visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct Keypoints2D {
    pub points_px: Vec<[f64; 2]>,
    pub visibility: Vec<bool>,
}

impl Keypoints2D {
    pub fn joint_count(&self) -> usize {
        self.points_px.len()
    }
}

/// Project all joints through the pinhole model.
///
/// Visibility marks points inside `[0, image_w) x [0, image_h)`. Fails if any
/// joint sits at or behind the camera plane.
pub fn project(pose: &Pose3D, cam: &CameraModel) -> Result<Keypoints2D, CamError> {
    let mut points = Vec::with_capacity(pose.joint_count());
    let mut visibility = Vec::with_capacity(pose.joint_count());
    for (j, p) in pose.joints_mm.iter().enumerate() {
        let (x3, y3, z3) = (p[0], p[1], p[2]);
        if z3 <= 0.0 {
            return Err(CamError::BehindCamera { joint: j, z: z3 });
        }
        let x = cam.fx * x3 / z3 + cam.cx;
        let y = cam.fy * y3 / z3 + cam.cy;
        let visible = x >= 0.0 && x < cam.image_w as f64 && y >= 0.0 && y < cam.image_h as f64;
        points.push([x, y]);
        visibility.push(visible);
    }
    Ok(Keypoints2D {
        points_px: points,
        visibility,
    })
}

/// Pixels within a fixed width of a 2D segment, stored as a binary mask.
#[derive(Debug, Clone)]
pub struct CapsuleRegion {
    h: usize,
    w: usize,
    mask: Vec<bool>,
    count: usize,
}

impl CapsuleRegion {
    pub fn resolution(&self) -> (usize, usize) {
        (self.h, self.w)
    }

    #[inline]
    pub fn contains(&self, row: usize, col: usize) -> bool {
        self.mask[row * self.w + col]
    }

    pub fn pixel_count(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    /// Member pixels as (row, col), row-major.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let w = self.w;
        self.mask
            .iter()
            .enumerate()
            .filter(|(_, &m)| m)
            .map(move |(idx, _)| (idx / w, idx % w))
    }
}

/// Distance from point `p` to segment `ab`.
#[inline]
pub fn point_segment_distance(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let ap = [p[0] - a[0], p[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    if len2 == 0.0 {
        return (ap[0] * ap[0] + ap[1] * ap[1]).sqrt();
    }
    let t = ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0);
    let d = [ap[0] - t * ab[0], ap[1] - t * ab[1]];
    (d[0] * d[0] + d[1] * d[1]).sqrt()
}

/// Rasterize the capsule of width `width_px` around segment `ab` on an
/// `h x w` grid.
///
/// Pixel `(i, j)` is a member iff its center `(j + 0.5, i + 0.5)` lies within
/// `width_px` of the segment (inclusive). `a == b` yields the disc around `a`.
/// The region may be empty when the segment lies off-grid.
pub fn rasterize_capsule(
    a: [f64; 2],
    b: [f64; 2],
    width_px: f64,
    h: usize,
    w: usize,
) -> CapsuleRegion {
    assert!(width_px > 0.0, "capsule width must be positive");
    let mut mask = vec![false; h * w];
    let mut count = 0usize;

    // Candidate rows/cols: bounding box of the segment dilated by the width.
    let (min_x, max_x) = (a[0].min(b[0]) - width_px, a[0].max(b[0]) + width_px);
    let (min_y, max_y) = (a[1].min(b[1]) - width_px, a[1].max(b[1]) + width_px);
    let col_lo = (min_x - 0.5).floor().max(0.0) as usize;
    let col_hi = ((max_x - 0.5).ceil() as isize).clamp(-1, w as isize - 1);
    let row_lo = (min_y - 0.5).floor().max(0.0) as usize;
    let row_hi = ((max_y - 0.5).ceil() as isize).clamp(-1, h as isize - 1);
    if col_hi < 0 || row_hi < 0 || min_x > w as f64 || min_y > h as f64 {
        return CapsuleRegion { h, w, mask, count };
    }

    for i in row_lo..=(row_hi as usize) {
        for j in col_lo..=(col_hi as usize) {
            let center = [j as f64 + 0.5, i as f64 + 0.5];
            if point_segment_distance(center, a, b) <= width_px {
                mask[i * w + j] = true;
                count += 1;
            }
        }
    }
    CapsuleRegion { h, w, mask, count }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    #[test]
    fn optical_axis_maps_to_principal_point() {
        let cam = CameraModel {
            fx: 1000.0,
            fy: 1000.0,
            cx: 128.0,
            cy: 128.0,
            image_w: 256,
            image_h: 256,
        };
        let pose = Pose3D::new(vec![[0.0, 0.0, 2000.0]]).unwrap();
        let kp = project(&pose, &cam).unwrap();
        assert_eq!(kp.points_px[0], [128.0, 128.0]);
        assert!(kp.visibility[0]);
    }

    #[test]
    fn projection_formula() {
        let cam = CameraModel {
            fx: 1000.0,
            fy: 900.0,
            cx: 128.0,
            cy: 120.0,
            image_w: 1024,
            image_h: 1024,
        };
        let pose = Pose3D::new(vec![[100.0, 0.0, 1000.0]]).unwrap();
        let kp = project(&pose, &cam).unwrap();
        assert_eq!(kp.points_px[0][0], 228.0);
    }

    #[test]
    fn projection_matches_scalar_oracle() {
        let cam = CameraModel {
            fx: 640.0,
            fy: 610.0,
            cx: 320.5,
            cy: 250.25,
            image_w: 640,
            image_h: 480,
        };
        let mut rng = CounterRng::new(5);
        let joints: Vec<[f64; 3]> = (0..50)
            .map(|_| {
                [
                    rng.uniform(-500.0, 500.0),
                    rng.uniform(-500.0, 500.0),
                    rng.uniform(500.0, 4000.0),
                ]
            })
            .collect();
        let pose = Pose3D::new(joints.clone()).unwrap();
        let kp = project(&pose, &cam).unwrap();
        for (j, p) in joints.iter().enumerate() {
            let ex = cam.fx * p[0] / p[2] + cam.cx;
            let ey = cam.fy * p[1] / p[2] + cam.cy;
            assert_eq!(kp.points_px[j], [ex, ey]);
        }
    }

    #[test]
    fn behind_camera_rejected() {
        let cam = CameraModel {
            fx: 100.0,
            fy: 100.0,
            cx: 32.0,
            cy: 32.0,
            image_w: 64,
            image_h: 64,
        };
        let pose = Pose3D::new(vec![[0.0, 0.0, -5.0]]).unwrap();
        assert!(matches!(
            project(&pose, &cam),
            Err(CamError::BehindCamera { joint: 0, .. })
        ));
    }

    #[test]
    fn uniform_scaling_about_camera_center_leaves_keypoints_unchanged() {
        let cam = CameraModel {
            fx: 300.0,
            fy: 300.0,
            cx: 128.0,
            cy: 128.0,
            image_w: 256,
            image_h: 256,
        };
        let mut rng = CounterRng::new(8);
        let joints: Vec<[f64; 3]> = (0..20)
            .map(|_| {
                [
                    rng.uniform(-400.0, 400.0),
                    rng.uniform(-400.0, 400.0),
                    rng.uniform(1000.0, 3000.0),
                ]
            })
            .collect();
        let pose = Pose3D::new(joints).unwrap();
        let kp = project(&pose, &cam).unwrap();
        let kp_scaled = project(&pose.scaled(1.75), &cam).unwrap();
        for j in 0..20 {
            for c in 0..2 {
                assert!((kp.points_px[j][c] - kp_scaled.points_px[j][c]).abs() < 1e-9);
            }
        }
    }

    /// Independent membership oracle: scan every pixel of the grid and apply
    /// an explicit endpoint/projection case analysis.
    fn capsule_oracle(a: [f64; 2], b: [f64; 2], width: f64, h: usize, w: usize) -> Vec<bool> {
        let mut mask = vec![false; h * w];
        for i in 0..h {
            for j in 0..w {
                let p = [j as f64 + 0.5, i as f64 + 0.5];
                let dx = b[0] - a[0];
                let dy = b[1] - a[1];
                let seg_len2 = dx * dx + dy * dy;
                let d = if seg_len2 == 0.0 {
                    ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt()
                } else {
                    let proj = ((p[0] - a[0]) * dx + (p[1] - a[1]) * dy) / seg_len2;
                    if proj <= 0.0 {
                        ((p[0] - a[0]).powi(2) + (p[1] - a[1]).powi(2)).sqrt()
                    } else if proj >= 1.0 {
                        ((p[0] - b[0]).powi(2) + (p[1] - b[1]).powi(2)).sqrt()
                    } else {
                        let fx = a[0] + proj * dx;
                        let fy = a[1] + proj * dy;
                        ((p[0] - fx).powi(2) + (p[1] - fy).powi(2)).sqrt()
                    }
                };
                mask[i * w + j] = d <= width;
            }
        }
        mask
    }

    #[test]
    fn disc_membership_matches_brute_force() {
        let region = rasterize_capsule([10.0, 10.0], [10.0, 10.0], 1.5, 64, 64);
        let oracle = capsule_oracle([10.0, 10.0], [10.0, 10.0], 1.5, 64, 64);
        for i in 0..64 {
            for j in 0..64 {
                assert_eq!(region.contains(i, j), oracle[i * 64 + j], "pixel ({i},{j})");
            }
        }
        assert!(region.pixel_count() > 0);
    }

    #[test]
    fn horizontal_capsule_symmetric_about_its_row() {
        let region = rasterize_capsule([10.0, 20.0], [30.0, 20.0], 2.0, 40, 40);
        for i in 0..20 {
            for j in 0..40 {
                // rows mirrored about y = 20: row 19 <-> row 20, 18 <-> 21, ...
                let mirror = 39 - i;
                if mirror < 40 {
                    assert_eq!(
                        region.contains(i, j),
                        region.contains(mirror, j),
                        "rows {i}/{mirror} col {j}"
                    );
                }
            }
        }
    }

    #[test]
    fn off_grid_segment_yields_empty_region() {
        let region = rasterize_capsule([-50.0, -50.0], [-40.0, -60.0], 3.0, 32, 32);
        assert!(region.is_empty());
        let region = rasterize_capsule([100.0, 100.0], [120.0, 90.0], 3.0, 32, 32);
        assert!(region.is_empty());
    }

    #[test]
    fn random_capsules_match_full_grid_oracle() {
        let mut rng = CounterRng::new(77);
        for _ in 0..50 {
            let a = [rng.uniform(-10.0, 74.0), rng.uniform(-10.0, 74.0)];
            let b = [rng.uniform(-10.0, 74.0), rng.uniform(-10.0, 74.0)];
            let width = rng.uniform(0.5, 6.0);
            let region = rasterize_capsule(a, b, width, 64, 64);
            let oracle = capsule_oracle(a, b, width, 64, 64);
            for i in 0..64 {
                for j in 0..64 {
                    assert_eq!(
                        region.contains(i, j),
                        oracle[i * 64 + j],
                        "a={a:?} b={b:?} w={width} pixel ({i},{j})"
                    );
                }
            }
        }
    }

    #[test]
    fn capsule_invariant_under_endpoint_swap() {
        let mut rng = CounterRng::new(99);
        for _ in 0..20 {
            let a = [rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0)];
            let b = [rng.uniform(0.0, 64.0), rng.uniform(0.0, 64.0)];
            let w = rng.uniform(0.5, 5.0);
            let fwd = rasterize_capsule(a, b, w, 64, 64);
            let rev = rasterize_capsule(b, a, w, 64, 64);
            for i in 0..64 {
                for j in 0..64 {
                    assert_eq!(fwd.contains(i, j), rev.contains(i, j));
                }
            }
        }
    }

    #[test]
    fn scaled_camera_is_equivalent() {
        let cam = CameraModel {
            fx: 260.0,
            fy: 260.0,
            cx: 128.0,
            cy: 128.0,
            image_w: 256,
            image_h: 256,
        };
        let small = cam.scaled_to(64, 64);
        let pose = Pose3D::new(vec![[300.0, -200.0, 2500.0]]).unwrap();
        let kp_full = project(&pose, &cam).unwrap();
        let kp_map = project(&pose, &small).unwrap();
        assert!((kp_map.points_px[0][0] - kp_full.points_px[0][0] * 0.25).abs() < 1e-12);
        assert!((kp_map.points_px[0][1] - kp_full.points_px[0][1] * 0.25).abs() < 1e-12);
        assert_eq!(kp_map.visibility[0], kp_full.visibility[0]);
    }
}

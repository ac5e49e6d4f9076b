//! Evaluation protocols: root-aligned MPJPE, Procrustes-aligned MPJPE,
//! PCK@150mm, and AUC over a 5:5:150 mm threshold grid.
//!
//! Procrustes alignment fits the least-squares similarity transform
//! (proper rotation, uniform scale, translation) via the SVD of the 3x3
//! cross-covariance with explicit reflection correction, so `det(R) = +1`
//! even for mirrored inputs.

use nalgebra::{Matrix3, Vector3};
use serde::Serialize;
use thiserror::Error;

use crate::skeleton::Pose3D;

/// Default PCK threshold in millimeters.
pub const PCK_THRESHOLD_MM: f64 = 150.0;

/// Default AUC threshold grid: 5, 10, ..., 150 mm (30 thresholds).
pub fn auc_thresholds_mm() -> Vec<f64> {
    (1..=30).map(|i| 5.0 * i as f64).collect()
}

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("poses have {got} joints, expected {expected}")]
    JointCountMismatch { expected: usize, got: usize },
    #[error("empty input")]
    EmptyInput,
    #[error("degenerate joint configuration: {0}")]
    DegenerateConfiguration(String),
    #[error("batch has {preds} predictions but {gts} ground-truth poses")]
    FrameCountMismatch { preds: usize, gts: usize },
}

/// Rigid similarity: `x -> scale * rotation * x + translation`.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SimilarityTransform {
    pub rotation: [[f64; 3]; 3],
    pub scale: f64,
    pub translation: [f64; 3],
}

impl SimilarityTransform {
    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let r = &self.rotation;
        [
            self.scale * (r[0][0] * p[0] + r[0][1] * p[1] + r[0][2] * p[2]) + self.translation[0],
            self.scale * (r[1][0] * p[0] + r[1][1] * p[1] + r[1][2] * p[2]) + self.translation[1],
            self.scale * (r[2][0] * p[0] + r[2][1] * p[1] + r[2][2] * p[2]) + self.translation[2],
        ]
    }
}

/// Evaluation summary over a batch of frames.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    pub n_frames: usize,
    pub mpjpe_mm: f64,
    pub pa_mpjpe_mm: f64,
    /// Fraction of joints within [`PCK_THRESHOLD_MM`], in `[0, 1]`.
    pub pck: f64,
    /// Mean PCK over the 5:5:150 mm grid, in `[0, 1]`.
    pub auc: f64,
    pub per_joint_mm: Vec<f64>,
}

fn check_joint_counts(pred: &Pose3D, gt: &Pose3D) -> Result<usize, MetricsError> {
    if pred.joint_count() != gt.joint_count() {
        return Err(MetricsError::JointCountMismatch {
            expected: gt.joint_count(),
            got: pred.joint_count(),
        });
    }
    Ok(gt.joint_count())
}

/// Per-joint Euclidean errors after translating both poses so the root joints
/// coincide.
pub fn root_aligned_errors(
    pred: &Pose3D,
    gt: &Pose3D,
    root: usize,
) -> Result<Vec<f64>, MetricsError> {
    let n = check_joint_counts(pred, gt)?;
    let pr = pred.joints_mm[root];
    let gr = gt.joints_mm[root];
    Ok((0..n)
        .map(|j| {
            let p = pred.joints_mm[j];
            let g = gt.joints_mm[j];
            let d = [
                (p[0] - pr[0]) - (g[0] - gr[0]),
                (p[1] - pr[1]) - (g[1] - gr[1]),
                (p[2] - pr[2]) - (g[2] - gr[2]),
            ];
            (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
        })
        .collect())
}

/// Mean per-joint position error in mm with the root joints aligned.
pub fn mpjpe(pred: &Pose3D, gt: &Pose3D, root: usize) -> Result<f64, MetricsError> {
    let errors = root_aligned_errors(pred, gt, root)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// Least-squares similarity transform mapping `pred` onto `gt`, and the
/// transformed pose.
pub fn procrustes_align(
    pred: &Pose3D,
    gt: &Pose3D,
) -> Result<(SimilarityTransform, Pose3D), MetricsError> {
    let n = check_joint_counts(pred, gt)?;
    if n < 3 {
        return Err(MetricsError::DegenerateConfiguration(format!(
            "need at least 3 joints, got {n}"
        )));
    }
    let inv_n = 1.0 / n as f64;
    let mut mu_p = Vector3::zeros();
    let mut mu_g = Vector3::zeros();
    for j in 0..n {
        mu_p += Vector3::from(pred.joints_mm[j]);
        mu_g += Vector3::from(gt.joints_mm[j]);
    }
    mu_p *= inv_n;
    mu_g *= inv_n;

    // cross-covariance of gt against pred, plus the pred variance for scale
    let mut cov = Matrix3::zeros();
    let mut var_p = 0.0;
    for j in 0..n {
        let pc = Vector3::from(pred.joints_mm[j]) - mu_p;
        let gc = Vector3::from(gt.joints_mm[j]) - mu_g;
        cov += gc * pc.transpose();
        var_p += pc.norm_squared();
    }
    cov *= inv_n;
    var_p *= inv_n;
    if var_p <= f64::EPSILON {
        return Err(MetricsError::DegenerateConfiguration(
            "all predicted joints coincide".into(),
        ));
    }

    let svd = cov.svd(true, true);
    let u = svd.u.expect("3x3 SVD always yields U");
    let v_t = svd.v_t.expect("3x3 SVD always yields V^T");
    let sv = svd.singular_values;
    if sv[1] <= 1e-12 * sv[0].max(f64::EPSILON) {
        return Err(MetricsError::DegenerateConfiguration(format!(
            "joint covariance has rank < 2 (singular values {:?})",
            [sv[0], sv[1], sv[2]]
        )));
    }

    // reflection correction: flip the weakest axis when det would be -1
    let det_sign = (u.determinant() * v_t.determinant()).signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, det_sign));
    let rotation = u * correction * v_t;
    let scale = (sv[0] + sv[1] + det_sign * sv[2]) / var_p;
    let translation = mu_g - scale * rotation * mu_p;

    let transform = SimilarityTransform {
        rotation: [
            [rotation[(0, 0)], rotation[(0, 1)], rotation[(0, 2)]],
            [rotation[(1, 0)], rotation[(1, 1)], rotation[(1, 2)]],
            [rotation[(2, 0)], rotation[(2, 1)], rotation[(2, 2)]],
        ],
        scale,
        translation: [translation[0], translation[1], translation[2]],
    };
    let aligned = Pose3D {
        joints_mm: pred.joints_mm.iter().map(|&p| transform.apply(p)).collect(),
    };
    Ok((transform, aligned))
}

/// MPJPE after optimal similarity alignment of `pred` onto `gt`.
pub fn pa_mpjpe(pred: &Pose3D, gt: &Pose3D) -> Result<f64, MetricsError> {
    let (_, aligned) = procrustes_align(pred, gt)?;
    let n = gt.joint_count();
    let sum: f64 = (0..n)
        .map(|j| {
            let a = aligned.joints_mm[j];
            let g = gt.joints_mm[j];
            ((a[0] - g[0]).powi(2) + (a[1] - g[1]).powi(2) + (a[2] - g[2]).powi(2)).sqrt()
        })
        .sum();
    Ok(sum / n as f64)
}

/// Fraction of errors at or below `threshold_mm` (inclusive boundary).
pub fn pck(errors_mm: &[f64], threshold_mm: f64) -> Result<f64, MetricsError> {
    assert!(threshold_mm > 0.0, "PCK threshold must be positive");
    if errors_mm.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let hits = errors_mm.iter().filter(|&&e| e <= threshold_mm).count();
    Ok(hits as f64 / errors_mm.len() as f64)
}

/// Mean PCK over an explicit threshold grid.
pub fn auc_over_thresholds(errors_mm: &[f64], thresholds: &[f64]) -> Result<f64, MetricsError> {
    if errors_mm.is_empty() || thresholds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let mut sum = 0.0;
    for &t in thresholds {
        sum += pck(errors_mm, t)?;
    }
    Ok(sum / thresholds.len() as f64)
}

/// Mean PCK over the default 5:5:150 mm grid.
pub fn auc(errors_mm: &[f64]) -> Result<f64, MetricsError> {
    auc_over_thresholds(errors_mm, &auc_thresholds_mm())
}

/// Evaluate a batch: root-aligned MPJPE, per-frame Procrustes MPJPE, pooled
/// PCK/AUC, and the per-joint error breakdown.
pub fn evaluate_poses(
    preds: &[Pose3D],
    gts: &[Pose3D],
    root: usize,
) -> Result<EvalReport, MetricsError> {
    if preds.len() != gts.len() {
        return Err(MetricsError::FrameCountMismatch {
            preds: preds.len(),
            gts: gts.len(),
        });
    }
    if preds.is_empty() {
        return Err(MetricsError::EmptyInput);
    }
    let n_joints = gts[0].joint_count();
    let mut pooled = Vec::with_capacity(preds.len() * n_joints);
    let mut per_joint_sum = vec![0.0f64; n_joints];
    let mut pa_sum = 0.0;
    for (pred, gt) in preds.iter().zip(gts) {
        let errors = root_aligned_errors(pred, gt, root)?;
        if errors.len() != n_joints {
            return Err(MetricsError::JointCountMismatch {
                expected: n_joints,
                got: errors.len(),
            });
        }
        for (j, &e) in errors.iter().enumerate() {
            per_joint_sum[j] += e;
        }
        pooled.extend_from_slice(&errors);
        pa_sum += pa_mpjpe(pred, gt)?;
    }
    let n_frames = preds.len();
    let mpjpe_mm = pooled.iter().sum::<f64>() / pooled.len() as f64;
    Ok(EvalReport {
        n_frames,
        mpjpe_mm,
        pa_mpjpe_mm: pa_sum / n_frames as f64,
        pck: pck(&pooled, PCK_THRESHOLD_MM)?,
        auc: auc(&pooled)?,
        per_joint_mm: per_joint_sum.iter().map(|s| s / n_frames as f64).collect(),
    })
}

//! Built-in invariant suite behind the `selftest` CLI subcommand.
//!
//! Each check pins its tolerance as a constant next to the code that uses it.
//! The checks mirror the library's core guarantees end to end: round-trip
//! exactness, encode scale invariance, analytic-gradient correctness,
//! similarity-alignment recovery, metric oracle agreement, and deterministic
//! bit-exact I/O.

use std::time::Instant;

use crate::encode::{render_orientation_maps, EncodeMode};
use crate::losses::{heatmap_loss, orientation_loss};
use crate::metrics::{auc, mpjpe, pa_mpjpe, pck, procrustes_align};
use crate::rng::CounterRng;
use crate::skeleton::{default_h36m_skeleton, Pose3D};
use crate::synth::{generate_with_threads, roundtrip_mpjpe, sample_pose, PosePrior, SynthScenario};
use crate::tensorio::{Dtype, MapContainer};

/// Round-trip MPJPE bound per frame, mm.
const ROUNDTRIP_MPJPE_MM: f64 = 1e-6;
/// Wall-clock budget for the 1000-frame single-threaded round trip, seconds.
const ROUNDTRIP_BUDGET_S: f64 = 30.0;
/// Elementwise bound for encode scale invariance and linearity.
const SCALE_INVARIANCE_TOL: f64 = 1e-12;
/// Relative bound for analytic vs central finite-difference gradients.
const GRADIENT_REL_TOL: f64 = 1e-4;
/// Finite-difference step.
const GRADIENT_FD_STEP: f64 = 1e-5;
/// Residual bound for similarity-transform recovery, mm.
const PROCRUSTES_RESIDUAL_MM: f64 = 1e-9;
/// Orthonormality/determinant bound for recovered rotations.
const ROTATION_TOL: f64 = 1e-9;
/// Relative bound for MPJPE against the independent mean-distance oracle.
const MPJPE_ORACLE_REL: f64 = 1e-12;

/// Outcome of one check.
#[derive(Debug, Clone)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
    pub seconds: f64,
}

impl CheckResult {
    fn finish(name: &'static str, start: Instant, passed: bool, detail: String) -> Self {
        CheckResult {
            name,
            passed,
            detail,
            seconds: start.elapsed().as_secs_f64(),
        }
    }
}

/// Run the full suite. All checks run even after a failure.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        check_roundtrip_exactness(),
        check_scale_invariance(),
        check_gradient_correctness(),
        check_procrustes_recovery(),
        check_metric_oracles(),
        check_determinism_io(),
    ]
}

/// 1000 seeded poses -> encode -> decode with ground-truth lengths and root;
/// every frame must land within [`ROUNDTRIP_MPJPE_MM`] of its source, inside
/// the single-threaded time budget.
pub fn check_roundtrip_exactness() -> CheckResult {
    let name = "roundtrip_exactness";
    let start = Instant::now();
    let spec = default_h36m_skeleton();
    let scenario = SynthScenario::standard(0x5EED, 1000);
    let frames = match generate_with_threads(&scenario, &spec, 1) {
        Ok(f) => f,
        Err(e) => return CheckResult::finish(name, start, false, format!("generate failed: {e}")),
    };
    let mut worst = 0.0f64;
    for rec in &frames {
        match roundtrip_mpjpe(rec, &spec) {
            Ok(err) => worst = worst.max(err),
            Err(e) => {
                return CheckResult::finish(name, start, false, format!("frame {}: {e}", rec.frame))
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let passed = worst < ROUNDTRIP_MPJPE_MM && elapsed < ROUNDTRIP_BUDGET_S;
    CheckResult::finish(
        name,
        start,
        passed,
        format!(
            "1000 frames, worst MPJPE {worst:.3e} mm (< {ROUNDTRIP_MPJPE_MM:.0e}), {elapsed:.1}s (< {ROUNDTRIP_BUDGET_S:.0}s)"
        ),
    )
}

/// Orientation maps of `s * P` match those of `P` elementwise; limb-vector
/// maps scale linearly in `s`. Checked for s in {0.5, 1, 2.5}.
pub fn check_scale_invariance() -> CheckResult {
    let name = "scale_invariance";
    let start = Instant::now();
    let spec = default_h36m_skeleton();
    let scenario = SynthScenario::standard(0xACE, 6);
    let frames = match generate_with_threads(&scenario, &spec, 1) {
        Ok(f) => f,
        Err(e) => return CheckResult::finish(name, start, false, format!("generate failed: {e}")),
    };
    let mut worst = 0.0f64;
    for rec in &frames {
        for s in [0.5, 1.0, 2.5] {
            let scaled_pose = rec.gt_pose.scaled(s);
            let orient = match render_orientation_maps(
                &scaled_pose,
                &rec.gt_keypoints,
                &spec,
                64,
                64,
                EncodeMode::Orientation,
            ) {
                Ok(m) => m,
                Err(e) => return CheckResult::finish(name, start, false, e.to_string()),
            };
            for (a, b) in rec.orientation_maps.values().iter().zip(orient.values()) {
                worst = worst.max((a - b).abs());
            }

            let lv_base = render_orientation_maps(
                &rec.gt_pose,
                &rec.gt_keypoints,
                &spec,
                64,
                64,
                EncodeMode::LimbVector,
            )
            .expect("default skeleton has a torso length");
            let lv_scaled = render_orientation_maps(
                &scaled_pose,
                &rec.gt_keypoints,
                &spec,
                64,
                64,
                EncodeMode::LimbVector,
            )
            .expect("default skeleton has a torso length");
            for (a, b) in lv_base.values().iter().zip(lv_scaled.values()) {
                let expect = a * s;
                worst = worst.max((b - expect).abs() / expect.abs().max(1.0));
            }
        }
    }
    let passed = worst < SCALE_INVARIANCE_TOL;
    CheckResult::finish(
        name,
        start,
        passed,
        format!("worst deviation {worst:.3e} (< {SCALE_INVARIANCE_TOL:.0e})"),
    )
}

fn central_diff<F: FnMut(&[f64]) -> f64>(values: &[f64], idx: usize, mut f: F) -> f64 {
    let mut plus = values.to_vec();
    plus[idx] += GRADIENT_FD_STEP;
    let mut minus = values.to_vec();
    minus[idx] -= GRADIENT_FD_STEP;
    (f(&plus) - f(&minus)) / (2.0 * GRADIENT_FD_STEP)
}

/// Analytic gradients of both losses vs central finite differences on 20
/// random 8x8 stacks.
pub fn check_gradient_correctness() -> CheckResult {
    let name = "gradient_correctness";
    let start = Instant::now();
    let mut rng = CounterRng::new(0xD1FF);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        // orientation loss on a K=3 stack
        let mut pred = crate::encode::OrientationMapStack::zeros(3, 8, 8, EncodeMode::Orientation);
        let mut gt = pred.clone();
        for v in pred.values_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        for v in gt.values_mut() {
            *v = rng.uniform(-1.0, 1.0);
        }
        let (_, grad) = orientation_loss(&pred, &gt).expect("shapes match");
        for idx in (0..pred.values().len()).step_by(29) {
            let fd = central_diff(pred.values(), idx, |vals| {
                let p = crate::encode::OrientationMapStack::from_values(
                    3,
                    8,
                    8,
                    EncodeMode::Orientation,
                    vals.to_vec(),
                );
                orientation_loss(&p, &gt).unwrap().0
            });
            let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }

        // sigmoid cross-entropy on an N=3 stack of probabilities
        let mut pred_p = crate::encode::HeatmapStack::zeros(3, 8, 8);
        let mut gt_p = pred_p.clone();
        for v in pred_p.values_mut() {
            *v = rng.uniform(0.05, 0.95);
        }
        for v in gt_p.values_mut() {
            *v = rng.uniform(0.05, 0.95);
        }
        let (_, grad) = heatmap_loss(&pred_p, &gt_p).expect("shapes match");
        for idx in (0..pred_p.values().len()).step_by(31) {
            let fd = central_diff(pred_p.values(), idx, |vals| {
                let p = crate::encode::HeatmapStack::from_values(3, 8, 8, vals.to_vec());
                heatmap_loss(&p, &gt_p).unwrap().0
            });
            let rel = (grad[idx] - fd).abs() / grad[idx].abs().max(fd.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    let passed = worst < GRADIENT_REL_TOL;
    CheckResult::finish(
        name,
        start,
        passed,
        format!("max relative gradient error {worst:.3e} (< {GRADIENT_REL_TOL:.0e})"),
    )
}

fn rotation_about(axis: [f64; 3], angle: f64) -> [[f64; 3]; 3] {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (x, y, z) = (axis[0] / n, axis[1] / n, axis[2] / n);
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

/// 200 random poses under random similarity transforms (scale 0.3..3, random
/// rotations, near-planar configurations included): alignment recovers the
/// transform with residual below [`PROCRUSTES_RESIDUAL_MM`] and det(R) = +1.
pub fn check_procrustes_recovery() -> CheckResult {
    let name = "procrustes_recovery";
    let start = Instant::now();
    let spec = default_h36m_skeleton();
    let mut rng = CounterRng::new(0xBEEF);
    let mut worst_residual = 0.0f64;
    let mut worst_rotation = 0.0f64;
    for case in 0..200 {
        let mut gt = match sample_pose(PosePrior::RandomAngles { max_deg: 40.0 }, &spec, &mut rng) {
            Ok(p) => p,
            Err(e) => return CheckResult::finish(name, start, false, e.to_string()),
        };
        if case % 5 == 0 {
            // flatten depth so the covariance is nearly rank 2, the
            // reflection-ambiguous regime for a sign-blind solver
            let z0 = gt.joints_mm[0][2];
            for j in gt.joints_mm.iter_mut() {
                j[2] = z0 + (j[2] - z0) * 1e-3;
            }
        }
        let scale = rng.uniform(0.3, 3.0);
        let rot = rotation_about(rng.unit_vector(), rng.uniform(0.0, std::f64::consts::PI));
        let t = [
            rng.uniform(-1000.0, 1000.0),
            rng.uniform(-1000.0, 1000.0),
            rng.uniform(-1000.0, 1000.0),
        ];
        let pred = Pose3D {
            joints_mm: gt
                .joints_mm
                .iter()
                .map(|&p| {
                    [
                        scale * (rot[0][0] * p[0] + rot[0][1] * p[1] + rot[0][2] * p[2]) + t[0],
                        scale * (rot[1][0] * p[0] + rot[1][1] * p[1] + rot[1][2] * p[2]) + t[1],
                        scale * (rot[2][0] * p[0] + rot[2][1] * p[1] + rot[2][2] * p[2]) + t[2],
                    ]
                })
                .collect(),
        };
        let (tf, _) = match procrustes_align(&pred, &gt) {
            Ok(r) => r,
            Err(e) => return CheckResult::finish(name, start, false, format!("case {case}: {e}")),
        };
        let residual = match pa_mpjpe(&pred, &gt) {
            Ok(r) => r,
            Err(e) => return CheckResult::finish(name, start, false, format!("case {case}: {e}")),
        };
        worst_residual = worst_residual.max(residual);
        // orthonormality and determinant of the recovered rotation
        let r = tf.rotation;
        let mut det = 0.0;
        det += r[0][0] * (r[1][1] * r[2][2] - r[1][2] * r[2][1]);
        det -= r[0][1] * (r[1][0] * r[2][2] - r[1][2] * r[2][0]);
        det += r[0][2] * (r[1][0] * r[2][1] - r[1][1] * r[2][0]);
        worst_rotation = worst_rotation.max((det - 1.0).abs());
        for i in 0..3 {
            for j in 0..3 {
                let dot: f64 = (0..3).map(|k| r[k][i] * r[k][j]).sum();
                let expect = if i == j { 1.0 } else { 0.0 };
                worst_rotation = worst_rotation.max((dot - expect).abs());
            }
        }
    }
    let passed = worst_residual < PROCRUSTES_RESIDUAL_MM && worst_rotation < ROTATION_TOL;
    CheckResult::finish(
        name,
        start,
        passed,
        format!(
            "worst residual {worst_residual:.3e} mm (< {PROCRUSTES_RESIDUAL_MM:.0e}), worst rotation defect {worst_rotation:.3e}"
        ),
    )
}

/// PCK and AUC agree exactly with brute-force counting on 10^4 samples; MPJPE
/// agrees with the per-joint mean-distance oracle to [`MPJPE_ORACLE_REL`].
pub fn check_metric_oracles() -> CheckResult {
    let name = "metric_oracles";
    let start = Instant::now();
    let mut rng = CounterRng::new(0xCAFE);
    let errors: Vec<f64> = (0..10_000).map(|_| rng.uniform(0.0, 400.0)).collect();

    let pck_got = pck(&errors, 150.0).expect("non-empty");
    let mut hits = 0usize;
    for &e in &errors {
        if e <= 150.0 {
            hits += 1;
        }
    }
    let pck_oracle = hits as f64 / errors.len() as f64;

    let auc_got = auc(&errors).expect("non-empty");
    let mut auc_sum = 0.0;
    for i in 1..=30 {
        let t = 5.0 * i as f64;
        let mut count = 0usize;
        for &e in &errors {
            if e <= t {
                count += 1;
            }
        }
        auc_sum += count as f64 / errors.len() as f64;
    }
    let auc_oracle = auc_sum / 30.0;

    let mut worst_mpjpe_rel = 0.0f64;
    for _ in 0..50 {
        let n = 17;
        let make = |rng: &mut CounterRng| {
            Pose3D::new(
                (0..n)
                    .map(|_| {
                        [
                            rng.uniform(-500.0, 500.0),
                            rng.uniform(-500.0, 500.0),
                            rng.uniform(-500.0, 500.0),
                        ]
                    })
                    .collect(),
            )
            .unwrap()
        };
        let a = make(&mut rng);
        let b = make(&mut rng);
        let got = mpjpe(&a, &b, 0).expect("same joint count");
        // independent oracle: explicit root alignment then mean of norms
        let (ar, br) = (a.joints_mm[0], b.joints_mm[0]);
        let mut sum = 0.0;
        for j in 0..n {
            let mut d2 = 0.0;
            for c in 0..3 {
                let diff = (a.joints_mm[j][c] - ar[c]) - (b.joints_mm[j][c] - br[c]);
                d2 += diff * diff;
            }
            sum += d2.sqrt();
        }
        let oracle = sum / n as f64;
        worst_mpjpe_rel = worst_mpjpe_rel.max((got - oracle).abs() / oracle.max(1e-300));
    }

    let passed =
        pck_got == pck_oracle && auc_got == auc_oracle && worst_mpjpe_rel < MPJPE_ORACLE_REL;
    CheckResult::finish(
        name,
        start,
        passed,
        format!(
            "PCK {} {} oracle, AUC {} {} oracle, MPJPE rel err {worst_mpjpe_rel:.3e} (< {MPJPE_ORACLE_REL:.0e})",
            pck_got,
            if pck_got == pck_oracle { "==" } else { "!=" },
            auc_got,
            if auc_got == auc_oracle { "==" } else { "!=" },
        ),
    )
}

/// Identical scenarios serialize to byte-identical containers; container
/// round trips are bit-exact for both dtypes; the CRC flags single-byte
/// corruption.
pub fn check_determinism_io() -> CheckResult {
    let name = "determinism_io";
    let start = Instant::now();
    let spec = default_h36m_skeleton();
    let mut scenario = SynthScenario::standard(0xFEED, 16);
    scenario.noise_sigma = 0.05;
    scenario.heatmap_noise_sigma = 0.02;

    let run_bytes = |threads: usize| -> Result<Vec<Vec<u8>>, crate::synth::SynthError> {
        let frames = generate_with_threads(&scenario, &spec, threads)?;
        Ok(frames
            .iter()
            .flat_map(|rec| {
                [
                    rec.heatmaps.to_container(Dtype::F64).to_bytes(),
                    rec.orientation_maps.to_container(Dtype::F64).to_bytes(),
                ]
            })
            .collect())
    };
    let first = match run_bytes(1) {
        Ok(b) => b,
        Err(e) => return CheckResult::finish(name, start, false, e.to_string()),
    };
    let second = match run_bytes(2) {
        Ok(b) => b,
        Err(e) => return CheckResult::finish(name, start, false, e.to_string()),
    };
    if first != second {
        return CheckResult::finish(
            name,
            start,
            false,
            "repeated generation produced different container bytes".into(),
        );
    }

    // bit-exact round trips for both dtypes
    let mut rng = CounterRng::new(0xB17);
    for dtype in [Dtype::F32, Dtype::F64] {
        let values: Vec<f64> = (0..240)
            .map(|_| {
                let v = rng.uniform(-3.0, 3.0);
                match dtype {
                    Dtype::F32 => (v as f32) as f64,
                    Dtype::F64 => v,
                }
            })
            .collect();
        let c = MapContainer::new(vec![4, 3, 4, 5], dtype, values).expect("valid dims");
        let bytes = c.to_bytes();
        match MapContainer::from_bytes(&bytes) {
            Ok(back) if back == c && back.to_bytes() == bytes => {}
            Ok(_) => {
                return CheckResult::finish(name, start, false, "round trip not bit-exact".into())
            }
            Err(e) => return CheckResult::finish(name, start, false, e.to_string()),
        }
    }

    // single-byte corruption must surface as a CRC mismatch
    let bytes = first[0].clone();
    let header = 10 + 4 * 3;
    let mut detected = true;
    for offset in [header, header + 101, bytes.len() - 5] {
        let mut corrupt = bytes.clone();
        corrupt[offset] ^= 0x10;
        if !matches!(
            MapContainer::from_bytes(&corrupt),
            Err(crate::tensorio::TensorIoError::CrcMismatch { .. })
        ) {
            detected = false;
        }
    }
    let passed = detected;
    CheckResult::finish(
        name,
        start,
        passed,
        format!(
            "{} container byte streams identical across runs; round trips bit-exact; corruption detected: {detected}",
            first.len()
        ),
    )
}

#[cfg(test)]
mod tests {
    use super::*;

    // The full round-trip check runs in the acceptance suite; here only the
    // cheap checks run to keep unit tests fast.

    #[test]
    fn scale_invariance_check_passes() {
        let r = check_scale_invariance();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn gradient_check_passes() {
        let r = check_gradient_correctness();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn procrustes_check_passes() {
        let r = check_procrustes_recovery();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn metric_oracle_check_passes() {
        let r = check_metric_oracles();
        assert!(r.passed, "{}", r.detail);
    }

    #[test]
    fn determinism_io_check_passes() {
        let r = check_determinism_io();
        assert!(r.passed, "{}", r.detail);
    }
}

//! Bit-exact file formats for map stacks, poses, and keypoints.
//!
//! # Map container (`.posmap`)
//!
//! ```text
//! offset 0   magic   8 bytes  "POSMAP01"
//!        8   dtype   1 byte   1 = f32 LE, 2 = f64 LE
//!        9   rank    1 byte
//!       10   dims    rank x u32 LE
//!        .   payload product(dims) x dtype-size bytes, row-major LE
//!        .   crc32   4 bytes LE, CRC-32 (IEEE) of the payload bytes
//! ```
//!
//! Everything is little-endian regardless of host. Heatmap stacks are stored
//! as `N x H x W`, orientation stacks as `K x 3 x H x W`. The pipeline writes
//! f64 payloads so a file round trip does not perturb decoded poses; f32
//! payloads are accepted for compact fixtures and widen losslessly on read.
//!
//! # Pose files (`.jsonl`)
//!
//! Newline-delimited JSON records with strictly increasing frame indices:
//! `{"frame": 0, "joints_mm": [[x, y, z], ...]}` for poses,
//! `{"frame": 0, "keypoints_px": [[x, y], ...], "visibility": [...]}` for
//! keypoints (`visibility` defaults to all-true when absent). serde_json
//! prints floats with shortest round-trip precision, so numeric round trips
//! are exact.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::camgeom::Keypoints2D;
use crate::encode::{EncodeMode, HeatmapStack, OrientationMapStack};
use crate::skeleton::Pose3D;

pub const MAP_MAGIC: &[u8; 8] = b"POSMAP01";

#[derive(Debug, Error)]
pub enum TensorIoError {
    #[error("bad magic: not a POSMAP01 container")]
    BadMagic,
    #[error("payload CRC mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    CrcMismatch { stored: u32, computed: u32 },
    #[error("truncated or inconsistent container: {0}")]
    TruncatedFile(String),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("dims must all be nonzero, got {0:?}")]
    InvalidDims(Vec<u32>),
    #[error("container shape {got:?} does not match expected {expected}")]
    BadShape { expected: String, got: Vec<u32> },
    #[error("frame order violation: frame {frame} after frame {prev}")]
    FrameOrderError { prev: u64, frame: u64 },
    #[error("record for frame {frame} has {got} joints, expected {expected}")]
    JointCountMismatch {
        frame: u64,
        expected: usize,
        got: usize,
    },
    #[error("line {line}: {source}")]
    BadRecord {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Element type of a container payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    fn code(self) -> u8 {
        match self {
            Dtype::F32 => 1,
            Dtype::F64 => 2,
        }
    }

    fn from_code(code: u8) -> Result<Self, TensorIoError> {
        match code {
            1 => Ok(Dtype::F32),
            2 => Ok(Dtype::F64),
            other => Err(TensorIoError::UnsupportedDtype(other)),
        }
    }

    fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

/// In-memory image of a map container. Values are held as f64; an f32
/// container holds exactly the widened f32 values.
#[derive(Debug, Clone, PartialEq)]
pub struct MapContainer {
    pub dims: Vec<u32>,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

impl MapContainer {
    pub fn new(dims: Vec<u32>, dtype: Dtype, values: Vec<f64>) -> Result<Self, TensorIoError> {
        if dims.contains(&0) {
            return Err(TensorIoError::InvalidDims(dims));
        }
        let expected: usize = dims.iter().map(|&d| d as usize).product();
        if values.len() != expected {
            return Err(TensorIoError::TruncatedFile(format!(
                "value count {} does not match dims {:?}",
                values.len(),
                dims
            )));
        }
        Ok(Self {
            dims,
            dtype,
            values,
        })
    }

    /// Serialize to the container byte format.
    pub fn to_bytes(&self) -> Vec<u8> {
        let payload_len = self.values.len() * self.dtype.size();
        let mut out = Vec::with_capacity(8 + 2 + 4 * self.dims.len() + payload_len + 4);
        out.extend_from_slice(MAP_MAGIC);
        out.push(self.dtype.code());
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&d.to_le_bytes());
        }
        let payload_start = out.len();
        match self.dtype {
            Dtype::F32 => {
                for &v in &self.values {
                    out.extend_from_slice(&(v as f32).to_le_bytes());
                }
            }
            Dtype::F64 => {
                for &v in &self.values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        let crc = crc32fast::hash(&out[payload_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    /// Parse a container from bytes, verifying the payload CRC.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, TensorIoError> {
        if bytes.len() < 10 {
            return Err(TensorIoError::TruncatedFile(format!(
                "{} bytes is too short for a header",
                bytes.len()
            )));
        }
        if &bytes[..8] != MAP_MAGIC {
            return Err(TensorIoError::BadMagic);
        }
        let dtype = Dtype::from_code(bytes[8])?;
        let rank = bytes[9] as usize;
        let dims_end = 10 + 4 * rank;
        if bytes.len() < dims_end {
            return Err(TensorIoError::TruncatedFile(
                "header ends inside the dims table".into(),
            ));
        }
        let dims: Vec<u32> = (0..rank)
            .map(|i| {
                let o = 10 + 4 * i;
                u32::from_le_bytes([bytes[o], bytes[o + 1], bytes[o + 2], bytes[o + 3]])
            })
            .collect();
        if dims.contains(&0) {
            return Err(TensorIoError::InvalidDims(dims));
        }
        let count: usize = dims.iter().map(|&d| d as usize).product();
        let payload_len = count * dtype.size();
        let expected_total = dims_end + payload_len + 4;
        if bytes.len() != expected_total {
            return Err(TensorIoError::TruncatedFile(format!(
                "dims {dims:?} imply {expected_total} bytes, file has {}",
                bytes.len()
            )));
        }
        let payload = &bytes[dims_end..dims_end + payload_len];
        let stored = u32::from_le_bytes([
            bytes[expected_total - 4],
            bytes[expected_total - 3],
            bytes[expected_total - 2],
            bytes[expected_total - 1],
        ]);
        let computed = crc32fast::hash(payload);
        if stored != computed {
            return Err(TensorIoError::CrcMismatch { stored, computed });
        }
        let values = match dtype {
            Dtype::F32 => payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
            Dtype::F64 => payload
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
                .collect(),
        };
        Ok(Self {
            dims,
            dtype,
            values,
        })
    }
}

/// Write a map container to `path`.
pub fn write_maps(path: &Path, container: &MapContainer) -> Result<(), TensorIoError> {
    let mut file = BufWriter::new(File::create(path)?);
    file.write_all(&container.to_bytes())?;
    file.flush()?;
    Ok(())
}

/// Read a map container from `path`, verifying magic, shape, and CRC.
pub fn read_maps(path: &Path) -> Result<MapContainer, TensorIoError> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    MapContainer::from_bytes(&bytes)
}

impl HeatmapStack {
    /// Container with dims `N x H x W`.
    pub fn to_container(&self, dtype: Dtype) -> MapContainer {
        let (h, w) = self.resolution();
        MapContainer::new(
            vec![self.map_count() as u32, h as u32, w as u32],
            dtype,
            self.values().to_vec(),
        )
        .expect("stack dims are nonzero")
    }

    pub fn from_container(c: &MapContainer) -> Result<Self, TensorIoError> {
        match c.dims[..] {
            [n, h, w] => Ok(HeatmapStack::from_values(
                n as usize,
                h as usize,
                w as usize,
                c.values.clone(),
            )),
            _ => Err(TensorIoError::BadShape {
                expected: "N x H x W".into(),
                got: c.dims.clone(),
            }),
        }
    }
}

impl OrientationMapStack {
    /// Container with dims `K x 3 x H x W`.
    pub fn to_container(&self, dtype: Dtype) -> MapContainer {
        let (h, w) = self.resolution();
        MapContainer::new(
            vec![self.limb_count() as u32, 3, h as u32, w as u32],
            dtype,
            self.values().to_vec(),
        )
        .expect("stack dims are nonzero")
    }

    pub fn from_container(c: &MapContainer, mode: EncodeMode) -> Result<Self, TensorIoError> {
        match c.dims[..] {
            [k, 3, h, w] => Ok(OrientationMapStack::from_values(
                k as usize,
                h as usize,
                w as usize,
                mode,
                c.values.clone(),
            )),
            _ => Err(TensorIoError::BadShape {
                expected: "K x 3 x H x W".into(),
                got: c.dims.clone(),
            }),
        }
    }
}

/// One frame of 3D joints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PoseRecord {
    pub frame: u64,
    pub joints_mm: Vec<[f64; 3]>,
}

/// One frame of 2D keypoints.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct KeypointRecord {
    pub frame: u64,
    pub keypoints_px: Vec<[f64; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub visibility: Option<Vec<bool>>,
}

impl KeypointRecord {
    pub fn to_keypoints(&self) -> Keypoints2D {
        Keypoints2D {
            points_px: self.keypoints_px.clone(),
            visibility: self
                .visibility
                .clone()
                .unwrap_or_else(|| vec![true; self.keypoints_px.len()]),
        }
    }
}

impl PoseRecord {
    pub fn to_pose(&self) -> Result<Pose3D, crate::skeleton::SkeletonError> {
        Pose3D::new(self.joints_mm.clone())
    }
}

fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<(), TensorIoError> {
    let mut file = BufWriter::new(File::create(path)?);
    for r in records {
        let line = serde_json::to_string(r).expect("records serialize infallibly");
        file.write_all(line.as_bytes())?;
        file.write_all(b"\n")?;
    }
    file.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, TensorIoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(&line).map_err(|source| TensorIoError::BadRecord {
            line: idx + 1,
            source,
        })?;
        out.push(record);
    }
    Ok(out)
}

fn check_order_and_counts<F: Fn(&T) -> (u64, usize), T>(
    records: &[T],
    expected_joints: Option<usize>,
    key: F,
) -> Result<(), TensorIoError> {
    let mut prev: Option<u64> = None;
    for r in records {
        let (frame, joints) = key(r);
        if let Some(p) = prev {
            if frame <= p {
                return Err(TensorIoError::FrameOrderError { prev: p, frame });
            }
        }
        if let Some(expected) = expected_joints {
            if joints != expected {
                return Err(TensorIoError::JointCountMismatch {
                    frame,
                    expected,
                    got: joints,
                });
            }
        }
        prev = Some(frame);
    }
    Ok(())
}

pub fn write_poses(path: &Path, records: &[PoseRecord]) -> Result<(), TensorIoError> {
    check_order_and_counts(records, None, |r| (r.frame, r.joints_mm.len()))?;
    write_jsonl(path, records)
}

/// Read pose records, enforcing strictly increasing frames and, when given,
/// the skeleton's joint count.
pub fn read_poses(
    path: &Path,
    expected_joints: Option<usize>,
) -> Result<Vec<PoseRecord>, TensorIoError> {
    let records: Vec<PoseRecord> = read_jsonl(path)?;
    check_order_and_counts(&records, expected_joints, |r| (r.frame, r.joints_mm.len()))?;
    Ok(records)
}

pub fn write_keypoints(path: &Path, records: &[KeypointRecord]) -> Result<(), TensorIoError> {
    check_order_and_counts(records, None, |r| (r.frame, r.keypoints_px.len()))?;
    write_jsonl(path, records)
}

pub fn read_keypoints(
    path: &Path,
    expected_joints: Option<usize>,
) -> Result<Vec<KeypointRecord>, TensorIoError> {
    let records: Vec<KeypointRecord> = read_jsonl(path)?;
    check_order_and_counts(&records, expected_joints, |r| {
        (r.frame, r.keypoints_px.len())
    })?;
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::CounterRng;

    fn random_container(rng: &mut CounterRng, dtype: Dtype) -> MapContainer {
        let values: Vec<f64> = (0..2 * 3 * 4 * 5)
            .map(|_| {
                let v = rng.uniform(-2.0, 2.0);
                match dtype {
                    Dtype::F32 => (v as f32) as f64,
                    Dtype::F64 => v,
                }
            })
            .collect();
        MapContainer::new(vec![2, 3, 4, 5], dtype, values).unwrap()
    }

    #[test]
    fn roundtrip_bit_exact_both_dtypes() {
        let mut rng = CounterRng::new(1);
        for dtype in [Dtype::F32, Dtype::F64] {
            let c = random_container(&mut rng, dtype);
            let bytes = c.to_bytes();
            let back = MapContainer::from_bytes(&bytes).unwrap();
            assert_eq!(c, back);
            // re-serialization is byte-identical
            assert_eq!(bytes, back.to_bytes());
        }
    }

    #[test]
    fn corrupted_payload_byte_detected() {
        let mut rng = CounterRng::new(2);
        let c = random_container(&mut rng, Dtype::F64);
        let bytes = c.to_bytes();
        let header = 10 + 4 * c.dims.len();
        for offset in [header, header + 17, bytes.len() - 5] {
            let mut corrupt = bytes.clone();
            corrupt[offset] ^= 0x40;
            assert!(
                matches!(
                    MapContainer::from_bytes(&corrupt),
                    Err(TensorIoError::CrcMismatch { .. })
                ),
                "offset {offset}"
            );
        }
    }

    #[test]
    fn inconsistent_dims_detected() {
        let mut rng = CounterRng::new(3);
        let c = random_container(&mut rng, Dtype::F32);
        let mut bytes = c.to_bytes();
        bytes.truncate(bytes.len() - 3);
        assert!(matches!(
            MapContainer::from_bytes(&bytes),
            Err(TensorIoError::TruncatedFile(_))
        ));

        // grow a header dim without adding payload
        let mut bytes = c.to_bytes();
        bytes[10] = bytes[10].wrapping_add(1);
        assert!(matches!(
            MapContainer::from_bytes(&bytes),
            Err(TensorIoError::TruncatedFile(_))
        ));
    }

    #[test]
    fn bad_magic_detected() {
        let mut rng = CounterRng::new(4);
        let mut bytes = random_container(&mut rng, Dtype::F32).to_bytes();
        bytes[0] = b'X';
        assert!(matches!(
            MapContainer::from_bytes(&bytes),
            Err(TensorIoError::BadMagic)
        ));
    }

    #[test]
    fn unknown_dtype_detected() {
        let mut rng = CounterRng::new(5);
        let c = random_container(&mut rng, Dtype::F32);
        let mut bytes = c.to_bytes();
        bytes[8] = 9;
        assert!(matches!(
            MapContainer::from_bytes(&bytes),
            Err(TensorIoError::UnsupportedDtype(9))
        ));
    }

    #[test]
    fn zero_dim_rejected() {
        assert!(matches!(
            MapContainer::new(vec![2, 0, 4], Dtype::F64, vec![]),
            Err(TensorIoError::InvalidDims(_))
        ));
    }

    #[test]
    fn file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stack.posmap");
        let mut rng = CounterRng::new(6);
        let c = random_container(&mut rng, Dtype::F64);
        write_maps(&path, &c).unwrap();
        let back = read_maps(&path).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn pose_file_roundtrip_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        let mut rng = CounterRng::new(7);
        let records: Vec<PoseRecord> = (0..5)
            .map(|frame| PoseRecord {
                frame,
                joints_mm: (0..17)
                    .map(|_| {
                        [
                            rng.uniform(-1000.0, 1000.0),
                            rng.uniform(-1000.0, 1000.0),
                            rng.uniform(-1000.0, 1000.0),
                        ]
                    })
                    .collect(),
            })
            .collect();
        write_poses(&path, &records).unwrap();
        let back = read_poses(&path, Some(17)).unwrap();
        // serde_json round-trips f64 exactly (shortest representation)
        assert_eq!(records, back);
    }

    #[test]
    fn out_of_order_frames_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        std::fs::write(
            &path,
            concat!(
                "{\"frame\":3,\"joints_mm\":[[0,0,0]]}\n",
                "{\"frame\":2,\"joints_mm\":[[0,0,0]]}\n"
            ),
        )
        .unwrap();
        assert!(matches!(
            read_poses(&path, None),
            Err(TensorIoError::FrameOrderError { prev: 3, frame: 2 })
        ));
    }

    #[test]
    fn joint_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        std::fs::write(&path, "{\"frame\":0,\"joints_mm\":[[0,0,0],[1,1,1]]}\n").unwrap();
        assert!(matches!(
            read_poses(&path, Some(17)),
            Err(TensorIoError::JointCountMismatch {
                frame: 0,
                expected: 17,
                got: 2
            })
        ));
    }

    #[test]
    fn keypoint_visibility_defaults_true() {
        let rec = KeypointRecord {
            frame: 0,
            keypoints_px: vec![[1.0, 2.0], [3.0, 4.0]],
            visibility: None,
        };
        let kp = rec.to_keypoints();
        assert_eq!(kp.visibility, vec![true, true]);
    }
}

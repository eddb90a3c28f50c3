//! Binary sequence files and the JSON dataset manifest.
//!
//! Each split is one file of consecutive frames, one frame per sequence.
//! All integers and floats are little-endian; matrices are flattened
//! column-major. Frame layout, with byte offsets relative to the frame
//! start:
//!
//! | offset       | field                                        |
//! |--------------|----------------------------------------------|
//! | 0            | payload length in bytes (u64), excluding this field |
//! | 8            | master seed (u64)                            |
//! | 16           | stream id (u64)                              |
//! | 24           | sequence length M (u64)                      |
//! | 32           | sigma (f64)                                  |
//! | 40           | dt (f64)                                     |
//! | 48           | gyro bias (3 f64)                            |
//! | 72           | velocity bias (3 f64)                        |
//! | 96           | states: (M+1) x (vec(R) 9 f64, p 3 f64)      |
//! | 96 + 96(M+1) | velocities: M x (angular 3 f64, linear 3 f64) |
//! | + 48 M       | measurements: M x (vec(Rm) 9, pm 3, wm 3, vm 3 f64) |
//!
//! The payload length is `184 + 288 M`.

use std::fs::File;
use std::io::{BufReader, BufWriter, ErrorKind, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::so3::Rotation;
use crate::{Error, Result};

use super::{MeasurementFrame, RigidBodyState, Sequence, SequenceMeta, VelocityInput};

pub(crate) const FORMAT_VERSION: u32 = 1;

/// Sequence counts per split.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// One inference set in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InferSet {
    pub sigma: f64,
    pub count: usize,
    pub length: usize,
    pub file: String,
}

/// Generation parameters and file inventory of a dataset directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: u32,
    pub seed: u64,
    pub dt: f64,
    pub sequence_length: usize,
    pub num_sequences: usize,
    pub split_fractions: [f64; 3],
    pub counts: SplitCounts,
    pub train_sigma: f64,
    pub bias_range: f64,
    pub velocity_range: f64,
    pub init_position_range: f64,
    pub integrator_tolerance: f64,
    pub infer: Vec<InferSet>,
}

impl DatasetManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string_pretty(self)
            .expect("manifest serialization cannot fail");
        std::fs::write(path, json.as_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Format {
            path: path.into(),
            reason: e.to_string(),
        })?;
        let total: f64 = manifest.split_fractions.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Format {
                path: path.into(),
                reason: format!("split fractions sum to {total}, expected 1"),
            });
        }
        Ok(manifest)
    }

    /// Locates the inference set for `sigma` (exact match on the stored value).
    pub fn infer_set(&self, sigma: f64) -> Option<&InferSet> {
        self.infer.iter().find(|s| s.sigma == sigma)
    }
}

fn write_vector3<W: Write>(w: &mut W, v: &Vector3<f64>) -> std::io::Result<()> {
    for i in 0..3 {
        w.write_f64::<LittleEndian>(v[i])?;
    }
    Ok(())
}

fn write_matrix3<W: Write>(w: &mut W, m: &Matrix3<f64>) -> std::io::Result<()> {
    for &x in m.as_slice() {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

fn read_vector3<R: Read>(r: &mut R) -> std::io::Result<Vector3<f64>> {
    Ok(Vector3::new(
        r.read_f64::<LittleEndian>()?,
        r.read_f64::<LittleEndian>()?,
        r.read_f64::<LittleEndian>()?,
    ))
}

fn read_matrix3<R: Read>(r: &mut R) -> std::io::Result<Matrix3<f64>> {
    let mut buf = [0.0f64; 9];
    for x in &mut buf {
        *x = r.read_f64::<LittleEndian>()?;
    }
    Ok(Matrix3::from_column_slice(&buf))
}

fn payload_len(m: usize) -> u64 {
    (184 + 288 * m) as u64
}

fn write_frame<W: Write>(w: &mut W, seq: &Sequence) -> std::io::Result<()> {
    let m = seq.len();
    w.write_u64::<LittleEndian>(payload_len(m))?;
    w.write_u64::<LittleEndian>(seq.meta.master_seed)?;
    w.write_u64::<LittleEndian>(seq.meta.stream)?;
    w.write_u64::<LittleEndian>(m as u64)?;
    w.write_f64::<LittleEndian>(seq.meta.sigma)?;
    w.write_f64::<LittleEndian>(seq.meta.dt)?;
    write_vector3(w, &seq.states[0].gyro_bias)?;
    write_vector3(w, &seq.states[0].vel_bias)?;
    for state in &seq.states {
        write_matrix3(w, state.rotation.matrix())?;
        write_vector3(w, &state.position)?;
    }
    for v in &seq.velocities {
        write_vector3(w, &v.angular)?;
        write_vector3(w, &v.linear)?;
    }
    for meas in &seq.measurements {
        write_matrix3(w, meas.rotation.matrix())?;
        write_vector3(w, &meas.position)?;
        write_vector3(w, &meas.angular)?;
        write_vector3(w, &meas.linear)?;
    }
    Ok(())
}

fn read_frame<R: Read>(r: &mut R, path: &Path) -> Result<Option<Sequence>> {
    let declared = match r.read_u64::<LittleEndian>() {
        Ok(len) => len,
        Err(e) if e.kind() == ErrorKind::UnexpectedEof => return Ok(None),
        Err(e) => return Err(Error::io(path, e)),
    };
    let io_err = |e: std::io::Error| Error::io(path, e);
    let master_seed = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let stream = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let m = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    if declared != payload_len(m) {
        return Err(Error::Format {
            path: path.into(),
            reason: format!(
                "frame payload length {declared} does not match sequence length {m}"
            ),
        });
    }
    let sigma = r.read_f64::<LittleEndian>().map_err(io_err)?;
    let dt = r.read_f64::<LittleEndian>().map_err(io_err)?;
    let gyro_bias = read_vector3(r).map_err(io_err)?;
    let vel_bias = read_vector3(r).map_err(io_err)?;

    let rotation_of = |matrix: Matrix3<f64>| {
        Rotation::try_new(matrix).map_err(|e| Error::Format {
            path: path.into(),
            reason: e.to_string(),
        })
    };

    let mut states = Vec::with_capacity(m + 1);
    for _ in 0..=m {
        let rotation = rotation_of(read_matrix3(r).map_err(io_err)?)?;
        let position = read_vector3(r).map_err(io_err)?;
        states.push(RigidBodyState {
            rotation,
            position,
            gyro_bias,
            vel_bias,
        });
    }
    let mut velocities = Vec::with_capacity(m);
    for _ in 0..m {
        velocities.push(VelocityInput {
            angular: read_vector3(r).map_err(io_err)?,
            linear: read_vector3(r).map_err(io_err)?,
        });
    }
    let mut measurements = Vec::with_capacity(m);
    for _ in 0..m {
        let rotation = rotation_of(read_matrix3(r).map_err(io_err)?)?;
        let position = read_vector3(r).map_err(io_err)?;
        let angular = read_vector3(r).map_err(io_err)?;
        let linear = read_vector3(r).map_err(io_err)?;
        measurements.push(MeasurementFrame {
            rotation,
            position,
            angular,
            linear,
        });
    }
    Ok(Some(Sequence {
        states,
        velocities,
        measurements,
        meta: SequenceMeta {
            master_seed,
            stream,
            dt,
            sigma,
        },
    }))
}

/// Writes sequences as consecutive frames.
pub fn write_sequences(path: &Path, sequences: &[Sequence]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for seq in sequences {
        write_frame(&mut w, seq).map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads all frames of a split file.
pub fn read_sequences(path: &Path) -> Result<Vec<Sequence>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut sequences = Vec::new();
    while let Some(seq) = read_frame(&mut r, path)? {
        sequences.push(seq);
    }
    Ok(sequences)
}

/// Reads `<name>.bin` from a dataset directory.
pub fn load_split(dir: &Path, name: &str) -> Result<Vec<Sequence>> {
    read_sequences(&dir.join(format!("{name}.bin")))
}

//! Model checkpoint files.
//!
//! Binary little-endian layout, byte offsets from the start of the file:
//!
//! | offset | field                                   |
//! |--------|-----------------------------------------|
//! | 0      | magic `LOBS` (4 bytes)                  |
//! | 4      | format version (u32)                    |
//! | 8      | input dimension (u32, 36)               |
//! | 12     | hidden size H (u32)                     |
//! | 16     | output dimension (u32, 12)              |
//! | 20     | optimizer step count (u64)              |
//! | 28     | training rng seed (32 bytes)            |
//! | 60     | training rng stream (u64)               |
//! | 68     | training rng word position (u128)       |
//! | 84     | parameter count P (u64)                 |
//! | 92     | parameters (P f64, canonical order)     |
//! | +8P    | first moments (P f64)                   |
//! | +16P   | second moments (P f64)                  |
//!
//! Writes go to a temporary file in the same directory followed by a
//! rename, so concurrent readers never observe a partial checkpoint.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::{Error, Result};

use super::{ObserverParams, OptimizerState, INPUT_DIM, OUTPUT_DIM};

const MAGIC: &[u8; 4] = b"LOBS";
const FORMAT_VERSION: u32 = 1;

/// Serializable snapshot of a counter-mode RNG.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn zeroed() -> Self {
        RngState {
            seed: [0; 32],
            stream: 0,
            word_pos: 0,
        }
    }

    pub fn capture(rng: &rand_chacha::ChaCha12Rng) -> Self {
        RngState {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> rand_chacha::ChaCha12Rng {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha12Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// Parameters, optimizer state and the training RNG at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ObserverParams,
    pub optimizer: OptimizerState,
    pub rng: RngState,
}

pub fn save_checkpoint(path: &Path, checkpoint: &Checkpoint) -> Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    let tmp_path = dir.join(format!(
        ".{}.tmp",
        path.file_name().map(|n| n.to_string_lossy()).unwrap_or_default()
    ));
    {
        let file = File::create(&tmp_path).map_err(|e| Error::io(&tmp_path, e))?;
        let mut w = BufWriter::new(file);
        write_checkpoint(&mut w, checkpoint).map_err(|e| Error::io(&tmp_path, e))?;
        w.flush().map_err(|e| Error::io(&tmp_path, e))?;
    }
    std::fs::rename(&tmp_path, path).map_err(|e| Error::io(path, e))
}

fn write_checkpoint<W: Write>(w: &mut W, checkpoint: &Checkpoint) -> std::io::Result<()> {
    let params = &checkpoint.params;
    let flat = params.to_flat();
    w.write_all(MAGIC)?;
    w.write_u32::<LittleEndian>(FORMAT_VERSION)?;
    w.write_u32::<LittleEndian>(INPUT_DIM as u32)?;
    w.write_u32::<LittleEndian>(params.hidden_size() as u32)?;
    w.write_u32::<LittleEndian>(OUTPUT_DIM as u32)?;
    w.write_u64::<LittleEndian>(checkpoint.optimizer.step)?;
    w.write_all(&checkpoint.rng.seed)?;
    w.write_u64::<LittleEndian>(checkpoint.rng.stream)?;
    w.write_u128::<LittleEndian>(checkpoint.rng.word_pos)?;
    w.write_u64::<LittleEndian>(flat.len() as u64)?;
    for &x in &flat {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in &checkpoint.optimizer.first_moment {
        w.write_f64::<LittleEndian>(x)?;
    }
    for &x in &checkpoint.optimizer.second_moment {
        w.write_f64::<LittleEndian>(x)?;
    }
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let io_err = |e: std::io::Error| Error::io(path, e);
    let format_err = |reason: String| Error::Format {
        path: path.into(),
        reason,
    };

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(io_err)?;
    if &magic != MAGIC {
        return Err(format_err("bad magic, not a checkpoint file".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(io_err)?;
    if version != FORMAT_VERSION {
        return Err(format_err(format!("unsupported format version {version}")));
    }
    let input_dim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let hidden = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    let output_dim = r.read_u32::<LittleEndian>().map_err(io_err)? as usize;
    if input_dim != INPUT_DIM || output_dim != OUTPUT_DIM {
        return Err(format_err(format!(
            "dimensions {input_dim}->{output_dim} do not match this observer (36->12)"
        )));
    }
    let step = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let mut seed = [0u8; 32];
    r.read_exact(&mut seed).map_err(io_err)?;
    let stream = r.read_u64::<LittleEndian>().map_err(io_err)?;
    let word_pos = r.read_u128::<LittleEndian>().map_err(io_err)?;
    let count = r.read_u64::<LittleEndian>().map_err(io_err)? as usize;
    if count != ObserverParams::param_count(hidden) {
        return Err(format_err(format!(
            "parameter count {count} does not match hidden size {hidden}"
        )));
    }

    let mut read_array = |n: usize| -> Result<Vec<f64>> {
        let mut out = vec![0.0; n];
        r.read_f64_into::<LittleEndian>(&mut out).map_err(io_err)?;
        Ok(out)
    };
    let flat = read_array(count)?;
    let first_moment = read_array(count)?;
    let second_moment = read_array(count)?;

    Ok(Checkpoint {
        params: ObserverParams::from_flat(hidden, &flat)?,
        optimizer: OptimizerState {
            first_moment,
            second_moment,
            step,
        },
        rng: RngState {
            seed,
            stream,
            word_pos,
        },
    })
}

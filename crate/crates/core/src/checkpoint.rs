//! Binary parameter checkpoints.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "GCNN1"  geometry:u8  L:u32  n_layers:u32  width:u32  masking:u8
//! support:u8  character:u8  seed:u64  n_params:u64  params:[f64; n_params]
//! ```

use std::fmt;

use thiserror::Error;

use crate::gcnn::{GcnnConfig, Masking};
use crate::lattice::{FilterSupport, Geometry, MAX_SIDE, MIN_SIDE};
use crate::symmetry::CharacterSector;

pub const MAGIC: &[u8; 5] = b"GCNN1";
pub const HEADER_LEN: usize = 5 + 1 + 4 + 4 + 4 + 1 + 1 + 1 + 8 + 8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckpointHeader {
    pub geometry: Geometry,
    pub side: u32,
    pub n_layers: u32,
    pub width: u32,
    pub masking: Masking,
    pub support: FilterSupport,
    pub character: CharacterSector,
    pub seed: u64,
    pub n_params: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeaderDiff {
    pub field: &'static str,
    pub expected: String,
    pub found: String,
}

impl fmt::Display for HeaderDiff {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: expected {}, found {}", self.field, self.expected, self.found)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CheckpointError {
    #[error("checkpoint truncated: need {needed} bytes, have {got}")]
    Truncated { needed: usize, got: usize },
    #[error("not a checkpoint (bad magic)")]
    BadMagic,
    #[error("unknown {field} tag {value}")]
    UnknownTag { field: &'static str, value: u8 },
    #[error("header field {field} out of range: {value}")]
    OutOfRange { field: &'static str, value: u64 },
    #[error("header declares {declared} parameters but the payload holds {bytes} bytes")]
    Length { declared: u64, bytes: usize },
    #[error("parameter {index} is not finite")]
    NonFinite { index: usize },
    #[error("checkpoint does not match the configuration: {}", join(.0))]
    Mismatch(Vec<HeaderDiff>),
}

fn join(diffs: &[HeaderDiff]) -> String {
    diffs.iter().map(ToString::to_string).collect::<Vec<_>>().join("; ")
}

const GEOMETRIES: [Geometry; 2] = [Geometry::Square, Geometry::Triangular];
const SUPPORTS: [FilterSupport; 2] = [FilterSupport::Full, FilterSupport::ThirdNeighbor];
const SECTORS: [CharacterSector; 3] =
    [CharacterSector::Symmetric, CharacterSector::ReflectionOdd, CharacterSector::RotationOdd];

fn tag<T: PartialEq>(table: &[T], v: &T) -> u8 {
    table.iter().position(|x| x == v).expect("every variant is tabulated") as u8
}

fn untag<T: Copy>(table: &[T], field: &'static str, value: u8) -> Result<T, CheckpointError> {
    table.get(value as usize).copied().ok_or(CheckpointError::UnknownTag { field, value })
}

impl CheckpointHeader {
    pub fn new(
        geometry: Geometry,
        side: usize,
        config: &GcnnConfig,
        character: CharacterSector,
        n_params: usize,
    ) -> Self {
        Self {
            geometry,
            side: side as u32,
            n_layers: config.n_layers as u32,
            width: config.width as u32,
            masking: config.masking,
            support: config.support,
            character,
            seed: config.seed,
            n_params: n_params as u64,
        }
    }

    /// Fields that differ from `expected`, in header order.
    pub fn diff(&self, expected: &CheckpointHeader) -> Vec<HeaderDiff> {
        let mut out = Vec::new();
        let mut cmp = |field, e: String, f: String| {
            if e != f {
                out.push(HeaderDiff { field, expected: e, found: f });
            }
        };
        cmp("geometry", expected.geometry.to_string(), self.geometry.to_string());
        cmp("side", expected.side.to_string(), self.side.to_string());
        cmp("n_layers", expected.n_layers.to_string(), self.n_layers.to_string());
        cmp("width", expected.width.to_string(), self.width.to_string());
        cmp("masking", expected.masking.to_string(), self.masking.to_string());
        cmp("support", expected.support.to_string(), self.support.to_string());
        cmp("character", expected.character.name().into(), self.character.name().into());
        cmp("seed", expected.seed.to_string(), self.seed.to_string());
        cmp("n_params", expected.n_params.to_string(), self.n_params.to_string());
        out
    }

    /// The seed is informational and may differ.
    pub fn check_architecture(&self, expected: &CheckpointHeader) -> Result<(), CheckpointError> {
        let diffs: Vec<_> = self.diff(expected).into_iter().filter(|d| d.field != "seed").collect();
        if diffs.is_empty() {
            Ok(())
        } else {
            Err(CheckpointError::Mismatch(diffs))
        }
    }

    fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(MAGIC);
        out.push(tag(&GEOMETRIES, &self.geometry));
        out.extend_from_slice(&self.side.to_le_bytes());
        out.extend_from_slice(&self.n_layers.to_le_bytes());
        out.extend_from_slice(&self.width.to_le_bytes());
        out.push(tag(&Masking::ALL, &self.masking));
        out.push(tag(&SUPPORTS, &self.support));
        out.push(tag(&SECTORS, &self.character));
        out.extend_from_slice(&self.seed.to_le_bytes());
        out.extend_from_slice(&self.n_params.to_le_bytes());
    }

    fn read(bytes: &[u8]) -> Result<Self, CheckpointError> {
        if bytes.len() < HEADER_LEN {
            if !MAGIC.starts_with(&bytes[..bytes.len().min(MAGIC.len())]) {
                return Err(CheckpointError::BadMagic);
            }
            return Err(CheckpointError::Truncated { needed: HEADER_LEN, got: bytes.len() });
        }
        if &bytes[..5] != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().unwrap());
        let u64_at = |i: usize| u64::from_le_bytes(bytes[i..i + 8].try_into().unwrap());
        let header = Self {
            geometry: untag(&GEOMETRIES, "geometry", bytes[5])?,
            side: u32_at(6),
            n_layers: u32_at(10),
            width: u32_at(14),
            masking: untag(&Masking::ALL, "masking", bytes[18])?,
            support: untag(&SUPPORTS, "support", bytes[19])?,
            character: untag(&SECTORS, "character", bytes[20])?,
            seed: u64_at(21),
            n_params: u64_at(29),
        };
        if !(MIN_SIDE..=MAX_SIDE).contains(&(header.side as usize)) {
            return Err(CheckpointError::OutOfRange { field: "side", value: header.side.into() });
        }
        if header.n_layers == 0 {
            return Err(CheckpointError::OutOfRange { field: "n_layers", value: 0 });
        }
        if header.width == 0 {
            return Err(CheckpointError::OutOfRange { field: "width", value: 0 });
        }
        Ok(header)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    /// Flat parameter vector, interleaved re/im.
    pub params: Vec<f64>,
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        debug_assert_eq!(self.header.n_params, self.params.len() as u64);
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.params.len());
        self.header.write(&mut out);
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let header = CheckpointHeader::read(bytes)?;
        let payload = &bytes[HEADER_LEN..];
        if header.n_params.checked_mul(8) != Some(payload.len() as u64) {
            return Err(CheckpointError::Length { declared: header.n_params, bytes: payload.len() });
        }
        let params = payload
            .chunks_exact(8)
            .enumerate()
            .map(|(index, c)| {
                let v = f64::from_le_bytes(c.try_into().unwrap());
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CheckpointError::NonFinite { index })
                }
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { header, params })
    }
}

//! Periodic L×L tori in square and triangular geometry.
//!
//! The triangular lattice is embedded on a square grid with an extra coupling
//! along the (1,1) diagonal, so both geometries share the same row-major site
//! labelling. Grid basis vectors of the triangular embedding sit at 120°, which
//! makes (1,0), (0,1) and (1,1) the three nearest-neighbour directions.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Integer offset on the grid, `(di, dj)`.
pub type Offset = (i64, i64);

/// Smallest side with distinct first, second and third neighbours.
pub const MIN_SIDE: usize = 3;
/// Largest side whose site count fits a 64-bit spin mask.
pub const MAX_SIDE: usize = 8;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum LatticeError {
    #[error("side length {0} is too small, need L >= 3")]
    SideTooSmall(usize),
    #[error("side length {0} is too large for 64-bit spin masks, need L <= 8")]
    SideTooLarge(usize),
    #[error("unknown {kind} `{value}`")]
    UnknownName { kind: &'static str, value: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    Square,
    Triangular,
}

impl Geometry {
    /// Order of the rotation subgroup of the point group (4 or 6).
    pub fn n_rotations(self) -> usize {
        match self {
            Geometry::Square => 4,
            Geometry::Triangular => 6,
        }
    }

    /// Elementary rotation as an integer matrix acting on `(i, j)`.
    pub fn rotation_matrix(self) -> [[i64; 2]; 2] {
        match self {
            // (i, j) -> (-j, i)
            Geometry::Square => [[0, -1], [1, 0]],
            // (i, j) -> (i - j, i)
            Geometry::Triangular => [[1, -1], [1, 0]],
        }
    }

    /// Mirror `(i, j) -> (j, i)`, shared by both geometries.
    pub fn reflection_matrix(self) -> [[i64; 2]; 2] {
        [[0, 1], [1, 0]]
    }

    /// One representative per nearest-neighbour direction; the full shell is
    /// these offsets together with their negatives.
    pub fn nn_directions(self) -> &'static [Offset] {
        match self {
            Geometry::Square => &[(1, 0), (0, 1)],
            Geometry::Triangular => &[(1, 0), (0, 1), (1, 1)],
        }
    }

    pub fn nnn_directions(self) -> &'static [Offset] {
        match self {
            Geometry::Square => &[(1, 1), (1, -1)],
            Geometry::Triangular => &[(1, -1), (2, 1), (1, 2)],
        }
    }

    /// Third shell used by the restricted filter support.
    pub fn third_shell_directions(self) -> &'static [Offset] {
        match self {
            Geometry::Square => &[(2, 0), (0, 2)],
            Geometry::Triangular => &[(2, 0), (0, 2), (2, 2)],
        }
    }

    /// Cartesian position of a grid offset in the isometric embedding.
    pub fn embed(self, offset: Offset) -> (f64, f64) {
        let (i, j) = (offset.0 as f64, offset.1 as f64);
        match self {
            Geometry::Square => (i, j),
            Geometry::Triangular => (i - 0.5 * j, 0.5 * 3f64.sqrt() * j),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Geometry::Square => "square",
            Geometry::Triangular => "triangular",
        }
    }
}

impl fmt::Display for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Geometry {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "square" => Ok(Geometry::Square),
            "triangular" => Ok(Geometry::Triangular),
            other => Err(LatticeError::UnknownName {
                kind: "geometry",
                value: other.to_string(),
            }),
        }
    }
}

/// Which translation offsets a group-convolution tap may span.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterSupport {
    Full,
    ThirdNeighbor,
}

impl FilterSupport {
    pub fn name(self) -> &'static str {
        match self {
            FilterSupport::Full => "full",
            FilterSupport::ThirdNeighbor => "third-neighbor",
        }
    }
}

impl fmt::Display for FilterSupport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for FilterSupport {
    type Err = LatticeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(FilterSupport::Full),
            "third-neighbor" => Ok(FilterSupport::ThirdNeighbor),
            other => Err(LatticeError::UnknownName {
                kind: "filter support",
                value: other.to_string(),
            }),
        }
    }
}

/// Undirected bond `a < b` with the number of offsets that alias onto it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub multiplicity: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatticeSpec {
    geometry: Geometry,
    side: usize,
    nn_bonds: Vec<Bond>,
    nnn_bonds: Vec<Bond>,
    support: FilterSupport,
    support_offsets: Vec<Offset>,
    /// `support_mask[i * L + j]` is true when the residue `(i, j)` lies in the support.
    support_mask: Vec<bool>,
}

/// Row-major site index with both coordinates reduced modulo `side`.
pub fn site_index(i: i64, j: i64, side: usize) -> usize {
    let l = side as i64;
    (i.rem_euclid(l) * l + j.rem_euclid(l)) as usize
}

/// Inverse of [`site_index`].
pub fn site_coords(site: usize, side: usize) -> (usize, usize) {
    (site / side, site % side)
}

impl LatticeSpec {
    pub fn new(geometry: Geometry, side: usize, support: FilterSupport) -> Result<Self, LatticeError> {
        if side < MIN_SIDE {
            return Err(LatticeError::SideTooSmall(side));
        }
        if side > MAX_SIDE {
            return Err(LatticeError::SideTooLarge(side));
        }
        let nn_bonds = build_bonds(side, geometry.nn_directions());
        let nnn_bonds = build_bonds(side, geometry.nnn_directions());
        let support_offsets = support_offsets(geometry, support);
        let mut support_mask = vec![false; side * side];
        match support {
            FilterSupport::Full => support_mask.iter_mut().for_each(|m| *m = true),
            FilterSupport::ThirdNeighbor => {
                for &(i, j) in &support_offsets {
                    support_mask[site_index(i, j, side)] = true;
                }
            }
        }
        Ok(Self {
            geometry,
            side,
            nn_bonds,
            nnn_bonds,
            support,
            support_offsets,
            support_mask,
        })
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.side * self.side
    }

    pub fn nn_bonds(&self) -> &[Bond] {
        &self.nn_bonds
    }

    pub fn nnn_bonds(&self) -> &[Bond] {
        &self.nnn_bonds
    }

    pub fn support(&self) -> FilterSupport {
        self.support
    }

    /// Unreduced support offsets; empty for [`FilterSupport::Full`].
    pub fn support_offsets(&self) -> &[Offset] {
        &self.support_offsets
    }

    /// Whether a translation `(tx, ty)` (any representative mod L) is a live tap.
    pub fn support_contains(&self, tx: i64, ty: i64) -> bool {
        self.support_mask[site_index(tx, ty, self.side)]
    }

    pub fn site_index(&self, i: i64, j: i64) -> usize {
        site_index(i, j, self.side)
    }

    pub fn site_coords(&self, site: usize) -> (usize, usize) {
        site_coords(site, self.side)
    }

    /// Number of nearest neighbours of `site`, counting aliased bonds with multiplicity.
    pub fn nn_degree(&self, site: usize) -> u32 {
        self.nn_bonds
            .iter()
            .filter(|b| b.a == site || b.b == site)
            .map(|b| b.multiplicity)
            .sum()
    }
}

fn build_bonds(side: usize, directions: &[Offset]) -> Vec<Bond> {
    let mut merged: BTreeMap<(usize, usize), u32> = BTreeMap::new();
    for i in 0..side as i64 {
        for j in 0..side as i64 {
            let s = site_index(i, j, side);
            for &(di, dj) in directions {
                let t = site_index(i + di, j + dj, side);
                debug_assert_ne!(s, t, "self bond needs L < 3");
                *merged.entry((s.min(t), s.max(t))).or_default() += 1;
            }
        }
    }
    merged
        .into_iter()
        .map(|((a, b), multiplicity)| Bond { a, b, multiplicity })
        .collect()
}

fn support_offsets(geometry: Geometry, support: FilterSupport) -> Vec<Offset> {
    if support == FilterSupport::Full {
        return Vec::new();
    }
    let mut out = vec![(0, 0)];
    for shell in [
        geometry.nn_directions(),
        geometry.nnn_directions(),
        geometry.third_shell_directions(),
    ] {
        for &(i, j) in shell {
            out.push((i, j));
            out.push((-i, -j));
        }
    }
    out
}

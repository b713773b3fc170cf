//! Wallpaper groups and their subgroups as explicit permutation actions.
//!
//! Every element is stored as `S = T(tx, ty) · R^rot · M^refl`, applied right to
//! left (mirror first, translation last). The groups are semidirect products
//! `T ⋊ P` of a translation subgroup `Z_e × Z_e` (with `e = L`, or `e = 1` when
//! translations are absent) and a point group `P` of integer matrices, and the
//! element with id `p * e² + tx * e + ty` is `(t, p)`. Products are computed
//! from the semidirect law `(t1, p1)(t2, p2) = (t1 + p1·t2, p1 p2)`; the site
//! permutations are built independently and tested against it.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::lattice::{site_coords, site_index, Geometry, LatticeSpec};
use crate::spin::SpinConfiguration;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("{variant} is not a symmetry of the {geometry} lattice")]
    Incompatible { variant: GroupVariant, geometry: Geometry },
    #[error("unknown group variant `{0}`")]
    UnknownVariant(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupVariant {
    /// Full wallpaper group of the square lattice.
    P4m,
    /// Full wallpaper group of the triangular lattice.
    P6m,
    Translations,
    /// d4 or d6 about site 0, depending on the geometry.
    PointGroup,
    /// Identity only; used for lattice-free systems.
    Trivial,
}

impl fmt::Display for GroupVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            GroupVariant::P4m => "p4m",
            GroupVariant::P6m => "p6m",
            GroupVariant::Translations => "translations",
            GroupVariant::PointGroup => "point-group",
            GroupVariant::Trivial => "trivial",
        })
    }
}

impl FromStr for GroupVariant {
    type Err = GroupError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "p4m" => GroupVariant::P4m,
            "p6m" => GroupVariant::P6m,
            "translations" => GroupVariant::Translations,
            "point-group" => GroupVariant::PointGroup,
            "trivial" => GroupVariant::Trivial,
            other => return Err(GroupError::UnknownVariant(other.to_string())),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Decomposition {
    pub tx: usize,
    pub ty: usize,
    pub rot: usize,
    pub refl: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct GroupElement {
    pub id: usize,
    pub decomposition: Decomposition,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct PointOp {
    pub matrix: [[i64; 2]; 2],
    pub rot: usize,
    pub refl: usize,
}

fn mat_mul(a: [[i64; 2]; 2], b: [[i64; 2]; 2]) -> [[i64; 2]; 2] {
    let mut out = [[0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            out[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
        }
    }
    out
}

const IDENTITY: [[i64; 2]; 2] = [[1, 0], [0, 1]];

/// Point ops ordered so that index 0 is the identity: `p = refl * n_rot + rot`.
fn point_ops(geometry: Geometry, with_rotations: bool) -> Vec<PointOp> {
    if !with_rotations {
        return vec![PointOp { matrix: IDENTITY, rot: 0, refl: 0 }];
    }
    let n_rot = geometry.n_rotations();
    let mut ops = Vec::with_capacity(2 * n_rot);
    for refl in 0..2 {
        let mirror = if refl == 1 { geometry.reflection_matrix() } else { IDENTITY };
        let mut rotation = IDENTITY;
        for rot in 0..n_rot {
            ops.push(PointOp { matrix: mat_mul(rotation, mirror), rot, refl });
            rotation = mat_mul(geometry.rotation_matrix(), rotation);
        }
    }
    ops
}

/// A finite symmetry group with its Cayley table and permutation action.
#[derive(Debug, Clone)]
pub struct SymmetryGroup {
    variant: GroupVariant,
    geometry: Option<Geometry>,
    side: usize,
    n_sites: usize,
    trans_extent: usize,
    point_ops: Vec<PointOp>,
    point_cayley: Vec<usize>,
    point_inverse: Vec<usize>,
    /// `point_on_trans[p * n_trans + t]` is the index of `p · t`.
    point_on_trans: Vec<usize>,
    elements: Vec<GroupElement>,
    cayley: Vec<u32>,
    inverse: Vec<usize>,
    site_action: Vec<u32>,
}

/// Report of the first pair breaking `χ(ug) = χ(u) χ(g)`.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum CharacterViolation {
    #[error("character has {got} entries, group has {expected} elements")]
    WrongLength { expected: usize, got: usize },
    #[error("character of the identity is {0}, expected 1")]
    IdentityNotOne(Complex64),
    #[error("χ({u}·{g}) = {product} but χ({u})·χ({g}) = {expected}")]
    NotHomomorphic {
        u: usize,
        g: usize,
        product: Complex64,
        expected: Complex64,
    },
}

const CHARACTER_TOL: f64 = 1e-12;

pub fn build_group(lattice: &LatticeSpec, variant: GroupVariant) -> Result<SymmetryGroup, GroupError> {
    let geometry = lattice.geometry();
    let (with_translations, with_rotations) = match (variant, geometry) {
        (GroupVariant::P4m, Geometry::Square) | (GroupVariant::P6m, Geometry::Triangular) => (true, true),
        (GroupVariant::P4m, _) | (GroupVariant::P6m, _) => {
            return Err(GroupError::Incompatible { variant, geometry })
        }
        (GroupVariant::Translations, _) => (true, false),
        (GroupVariant::PointGroup, _) => (false, true),
        (GroupVariant::Trivial, _) => (false, false),
    };
    let side = lattice.side();
    let extent = if with_translations { side } else { 1 };
    Ok(SymmetryGroup::assemble(
        variant,
        Some(geometry),
        side,
        lattice.n_sites(),
        extent,
        point_ops(geometry, with_rotations),
    ))
}

impl SymmetryGroup {
    /// The full wallpaper group matching the lattice geometry.
    pub fn wallpaper(lattice: &LatticeSpec) -> SymmetryGroup {
        let variant = match lattice.geometry() {
            Geometry::Square => GroupVariant::P4m,
            Geometry::Triangular => GroupVariant::P6m,
        };
        build_group(lattice, variant).expect("wallpaper group always matches its geometry")
    }

    /// The identity-only group on `n_sites` sites without lattice structure.
    pub fn trivial(n_sites: usize) -> SymmetryGroup {
        let ops = vec![PointOp { matrix: IDENTITY, rot: 0, refl: 0 }];
        SymmetryGroup::assemble(GroupVariant::Trivial, None, 0, n_sites, 1, ops)
    }

    fn assemble(
        variant: GroupVariant,
        geometry: Option<Geometry>,
        side: usize,
        n_sites: usize,
        trans_extent: usize,
        point_ops: Vec<PointOp>,
    ) -> SymmetryGroup {
        let n_p = point_ops.len();
        let n_t = trans_extent * trans_extent;
        let find_op = |m: [[i64; 2]; 2]| {
            point_ops
                .iter()
                .position(|op| op.matrix == m)
                .expect("point group closed under products")
        };
        let mut point_cayley = vec![0; n_p * n_p];
        let mut point_inverse = vec![0; n_p];
        for a in 0..n_p {
            for b in 0..n_p {
                let c = find_op(mat_mul(point_ops[a].matrix, point_ops[b].matrix));
                point_cayley[a * n_p + b] = c;
                if c == 0 {
                    point_inverse[a] = b;
                }
            }
        }
        let e = trans_extent as i64;
        let mut point_on_trans = vec![0; n_p * n_t];
        for (p, op) in point_ops.iter().enumerate() {
            for t in 0..n_t {
                let (tx, ty) = ((t / trans_extent) as i64, (t % trans_extent) as i64);
                let m = op.matrix;
                let nx = (m[0][0] * tx + m[0][1] * ty).rem_euclid(e);
                let ny = (m[1][0] * tx + m[1][1] * ty).rem_euclid(e);
                point_on_trans[p * n_t + t] = (nx * e + ny) as usize;
            }
        }

        let order = n_p * n_t;
        let elements: Vec<GroupElement> = (0..order)
            .map(|id| {
                let (p, t) = (id / n_t, id % n_t);
                GroupElement {
                    id,
                    decomposition: Decomposition {
                        tx: t / trans_extent,
                        ty: t % trans_extent,
                        rot: point_ops[p].rot,
                        refl: point_ops[p].refl,
                    },
                }
            })
            .collect();

        let add_t = |a: usize, b: usize| {
            let (ax, ay) = (a / trans_extent, a % trans_extent);
            let (bx, by) = (b / trans_extent, b % trans_extent);
            ((ax + bx) % trans_extent) * trans_extent + (ay + by) % trans_extent
        };
        let neg_t = |a: usize| {
            let (ax, ay) = (a / trans_extent, a % trans_extent);
            ((trans_extent - ax) % trans_extent) * trans_extent + (trans_extent - ay) % trans_extent
        };
        let mut cayley = vec![0u32; order * order];
        for g in 0..order {
            let (p1, t1) = (g / n_t, g % n_t);
            for h in 0..order {
                let (p2, t2) = (h / n_t, h % n_t);
                let t = add_t(t1, point_on_trans[p1 * n_t + t2]);
                let p = point_cayley[p1 * n_p + p2];
                cayley[g * order + h] = (p * n_t + t) as u32;
            }
        }
        let inverse: Vec<usize> = (0..order)
            .map(|g| {
                let (p, t) = (g / n_t, g % n_t);
                let pi = point_inverse[p];
                pi * n_t + neg_t(point_on_trans[pi * n_t + t])
            })
            .collect();

        let mut site_action = vec![0u32; order * n_sites];
        for g in 0..order {
            for s in 0..n_sites {
                site_action[g * n_sites + s] = match geometry {
                    None => s as u32,
                    Some(_) => {
                        let d = elements[g].decomposition;
                        let m = point_ops[g / n_t].matrix;
                        let (i, j) = site_coords(s, side);
                        let (i, j) = (i as i64, j as i64);
                        let ni = m[0][0] * i + m[0][1] * j + d.tx as i64;
                        let nj = m[1][0] * i + m[1][1] * j + d.ty as i64;
                        site_index(ni, nj, side) as u32
                    }
                };
            }
        }

        SymmetryGroup {
            variant,
            geometry,
            side,
            n_sites,
            trans_extent,
            point_ops,
            point_cayley,
            point_inverse,
            point_on_trans,
            elements,
            cayley,
            inverse,
            site_action,
        }
    }

    pub fn variant(&self) -> GroupVariant {
        self.variant
    }

    pub fn geometry(&self) -> Option<Geometry> {
        self.geometry
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn order(&self) -> usize {
        self.elements.len()
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn elements(&self) -> &[GroupElement] {
        &self.elements
    }

    pub fn identity(&self) -> usize {
        0
    }

    pub fn compose(&self, g: usize, h: usize) -> usize {
        self.cayley[g * self.order() + h] as usize
    }

    pub fn inverse(&self, g: usize) -> usize {
        self.inverse[g]
    }

    /// Image of `site` under element `g`.
    pub fn act(&self, g: usize, site: usize) -> usize {
        self.site_action[g * self.n_sites + site] as usize
    }

    pub fn site_permutation(&self, g: usize) -> &[u32] {
        &self.site_action[g * self.n_sites..(g + 1) * self.n_sites]
    }

    /// Element id for a decomposition, if it belongs to the group.
    pub fn element_id(&self, d: Decomposition) -> Option<usize> {
        let p = self.point_ops.iter().position(|op| op.rot == d.rot && op.refl == d.refl)?;
        if d.tx >= self.trans_extent || d.ty >= self.trans_extent {
            return None;
        }
        Some(p * self.n_trans() + d.tx * self.trans_extent + d.ty)
    }

    /// `(g·σ)_{g·s} = σ_s`.
    pub fn apply_to_sites(&self, g: usize, config: &SpinConfiguration) -> SpinConfiguration {
        let perm = self.site_permutation(g);
        let mut out = vec![0i8; config.len()];
        for (s, &v) in config.spins().iter().enumerate() {
            out[perm[s] as usize] = v;
        }
        SpinConfiguration::from_raw(out)
    }

    /// Bitmask version of [`SymmetryGroup::apply_to_sites`].
    pub fn apply_to_bits(&self, g: usize, mut bits: u64) -> u64 {
        let perm = self.site_permutation(g);
        let mut out = 0u64;
        while bits != 0 {
            let s = bits.trailing_zeros() as usize;
            out |= 1 << perm[s];
            bits &= bits - 1;
        }
        out
    }

    /// Smallest mask in the orbit of `bits` and an element `u` with `bits = u · rep`.
    pub fn orbit_representative(&self, bits: u64) -> (u64, usize) {
        let mut best = (bits, 0);
        for g in 1..self.order() {
            let image = self.apply_to_bits(g, bits);
            if image < best.0 {
                best = (image, g);
            }
        }
        (best.0, self.inverse(best.1))
    }

    pub fn validate_character(&self, chi: &[Complex64]) -> Result<(), CharacterViolation> {
        if chi.len() != self.order() {
            return Err(CharacterViolation::WrongLength {
                expected: self.order(),
                got: chi.len(),
            });
        }
        if (chi[0] - 1.0).norm() > CHARACTER_TOL {
            return Err(CharacterViolation::IdentityNotOne(chi[0]));
        }
        for u in 0..self.order() {
            for g in 0..self.order() {
                let product = chi[self.compose(u, g)];
                let expected = chi[u] * chi[g];
                if (product - expected).norm() > CHARACTER_TOL {
                    return Err(CharacterViolation::NotHomomorphic { u, g, product, expected });
                }
            }
        }
        Ok(())
    }

    pub(crate) fn trans_extent(&self) -> usize {
        self.trans_extent
    }

    pub(crate) fn n_trans(&self) -> usize {
        self.trans_extent * self.trans_extent
    }

    pub(crate) fn n_point(&self) -> usize {
        self.point_ops.len()
    }

    pub(crate) fn point_compose(&self, a: usize, b: usize) -> usize {
        self.point_cayley[a * self.n_point() + b]
    }

    pub(crate) fn point_inverse(&self, p: usize) -> usize {
        self.point_inverse[p]
    }

    /// Index of `p · t` for a translation index `t`.
    pub(crate) fn point_on_trans(&self, p: usize, t: usize) -> usize {
        self.point_on_trans[p * self.n_trans() + t]
    }
}

/// Named one-dimensional representations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CharacterSector {
    /// χ ≡ 1.
    Symmetric,
    /// χ = -1 on mirror elements.
    ReflectionOdd,
    /// χ = (-1)^rot.
    RotationOdd,
}

impl CharacterSector {
    pub fn character(self, group: &SymmetryGroup) -> Vec<Complex64> {
        group
            .elements()
            .iter()
            .map(|e| {
                let d = e.decomposition;
                let sign = match self {
                    CharacterSector::Symmetric => 1.0,
                    CharacterSector::ReflectionOdd => {
                        if d.refl == 1 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                    CharacterSector::RotationOdd => {
                        if d.rot % 2 == 1 {
                            -1.0
                        } else {
                            1.0
                        }
                    }
                };
                Complex64::new(sign, 0.0)
            })
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            CharacterSector::Symmetric => "symmetric",
            CharacterSector::ReflectionOdd => "reflection-odd",
            CharacterSector::RotationOdd => "rotation-odd",
        }
    }
}

impl FromStr for CharacterSector {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "symmetric" => Ok(CharacterSector::Symmetric),
            "reflection-odd" => Ok(CharacterSector::ReflectionOdd),
            "rotation-odd" => Ok(CharacterSector::RotationOdd),
            other => Err(format!("unknown character sector `{other}`")),
        }
    }
}

/// Gather tables for group convolution.
#[derive(Debug, Clone)]
pub struct FilterIndexMap {
    order: usize,
    n_sites: usize,
    /// `input[g * N + x]` = `g⁻¹ · x`.
    input: Vec<u32>,
    /// `feature[g * |G| + h]` = `g⁻¹ h`.
    feature: Vec<u32>,
}

impl FilterIndexMap {
    pub fn new(group: &SymmetryGroup) -> Self {
        let order = group.order();
        let n_sites = group.n_sites();
        let mut input = Vec::with_capacity(order * n_sites);
        let mut feature = Vec::with_capacity(order * order);
        for g in 0..order {
            let gi = group.inverse(g);
            input.extend((0..n_sites).map(|x| group.act(gi, x) as u32));
            feature.extend((0..order).map(|h| group.compose(gi, h) as u32));
        }
        Self { order, n_sites, input, feature }
    }

    pub fn input_row(&self, g: usize) -> &[u32] {
        &self.input[g * self.n_sites..(g + 1) * self.n_sites]
    }

    pub fn feature_row(&self, g: usize) -> &[u32] {
        &self.feature[g * self.order..(g + 1) * self.order]
    }

    pub fn input_map(&self, g: usize, x: usize) -> usize {
        self.input[g * self.n_sites + x] as usize
    }

    pub fn feature_map(&self, g: usize, h: usize) -> usize {
        self.feature[g * self.order + h] as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::FilterSupport;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::HashSet;

    fn lattice(geometry: Geometry, side: usize) -> LatticeSpec {
        LatticeSpec::new(geometry, side, FilterSupport::Full).unwrap()
    }

    /// Independent enumeration: apply the coordinate maps literally and count
    /// distinct permutations.
    fn enumerate_distinct_permutations(geometry: Geometry, side: usize) -> usize {
        let l = side as i64;
        let rotate = |(i, j): (i64, i64)| match geometry {
            Geometry::Square => (-j, i),
            Geometry::Triangular => (i - j, i),
        };
        let mut seen = HashSet::new();
        for tx in 0..l {
            for ty in 0..l {
                for rot in 0..geometry.n_rotations() {
                    for refl in 0..2 {
                        let perm: Vec<usize> = (0..side * side)
                            .map(|s| {
                                let mut c = ((s / side) as i64, (s % side) as i64);
                                if refl == 1 {
                                    c = (c.1, c.0);
                                }
                                for _ in 0..rot {
                                    c = rotate(c);
                                }
                                site_index(c.0 + tx, c.1 + ty, side)
                            })
                            .collect();
                        seen.insert(perm);
                    }
                }
            }
        }
        seen.len()
    }

    #[test]
    fn group_orders_match_enumeration() {
        let tri = SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, 6));
        assert_eq!(tri.order(), 432);
        assert_eq!(enumerate_distinct_permutations(Geometry::Triangular, 6), 432);
        let sq = SymmetryGroup::wallpaper(&lattice(Geometry::Square, 6));
        assert_eq!(sq.order(), 288);
        assert_eq!(enumerate_distinct_permutations(Geometry::Square, 6), 288);
        for side in 3..=5 {
            assert_eq!(SymmetryGroup::wallpaper(&lattice(Geometry::Square, side)).order(), 8 * side * side);
            assert_eq!(
                SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, side)).order(),
                12 * side * side
            );
        }
    }

    #[test]
    fn permutations_are_distinct() {
        for geometry in [Geometry::Square, Geometry::Triangular] {
            let g = SymmetryGroup::wallpaper(&lattice(geometry, 4));
            let perms: HashSet<&[u32]> = (0..g.order()).map(|e| g.site_permutation(e)).collect();
            assert_eq!(perms.len(), g.order());
        }
    }

    #[test]
    fn rejects_mismatched_variant() {
        let sq = lattice(Geometry::Square, 4);
        assert_eq!(
            build_group(&sq, GroupVariant::P6m).unwrap_err(),
            GroupError::Incompatible { variant: GroupVariant::P6m, geometry: Geometry::Square }
        );
        assert!(build_group(&lattice(Geometry::Triangular, 4), GroupVariant::P4m).is_err());
    }

    #[test]
    fn translations_are_abelian() {
        for geometry in [Geometry::Square, Geometry::Triangular] {
            let g = build_group(&lattice(geometry, 5), GroupVariant::Translations).unwrap();
            assert_eq!(g.order(), 25);
            for a in 0..g.order() {
                for b in 0..g.order() {
                    assert_eq!(g.compose(a, b), g.compose(b, a));
                }
            }
        }
        let pg = build_group(&lattice(Geometry::Triangular, 5), GroupVariant::PointGroup).unwrap();
        assert_eq!(pg.order(), 12);
    }

    #[test]
    fn group_axioms_and_homomorphism_exhaustive() {
        for geometry in [Geometry::Square, Geometry::Triangular] {
            for side in [3, 4] {
                let g = SymmetryGroup::wallpaper(&lattice(geometry, side));
                let n = g.order();
                assert!(n <= 512);
                for a in 0..n {
                    assert_eq!(g.compose(0, a), a);
                    assert_eq!(g.compose(a, 0), a);
                    assert_eq!(g.compose(a, g.inverse(a)), 0);
                    assert_eq!(g.inverse(g.inverse(a)), a);
                    let mut row = vec![false; n];
                    let mut col = vec![false; n];
                    for b in 0..n {
                        row[g.compose(a, b)] = true;
                        col[g.compose(b, a)] = true;
                        let ab = g.compose(a, b);
                        for s in 0..g.n_sites() {
                            assert_eq!(g.act(ab, s), g.act(a, g.act(b, s)));
                        }
                    }
                    assert!(row.iter().all(|&x| x) && col.iter().all(|&x| x));
                }
            }
        }
    }

    #[test]
    fn associativity_sampled() {
        let g = SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, 6));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..5000 {
            let (a, b, c) = (
                rng.random_range(0..g.order()),
                rng.random_range(0..g.order()),
                rng.random_range(0..g.order()),
            );
            assert_eq!(g.compose(g.compose(a, b), c), g.compose(a, g.compose(b, c)));
            for s in [0, 7, 35] {
                let ab = g.compose(a, b);
                assert_eq!(g.act(ab, s), g.act(a, g.act(b, s)));
            }
        }
    }

    #[test]
    fn decomposition_is_a_bijection() {
        let g = SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, 4));
        let set: HashSet<Decomposition> = g.elements().iter().map(|e| e.decomposition).collect();
        assert_eq!(set.len(), g.order());
        for e in g.elements() {
            let d = e.decomposition;
            assert!(d.tx < 4 && d.ty < 4 && d.rot < 6 && d.refl < 2);
            assert_eq!(g.element_id(d), Some(e.id));
        }
        assert_eq!(g.elements()[0].decomposition, Decomposition { tx: 0, ty: 0, rot: 0, refl: 0 });
    }

    #[test]
    fn elements_follow_translation_rotation_reflection_order() {
        // S = T R M: mirror first, then rotate, then translate.
        let lat = lattice(Geometry::Square, 5);
        let g = SymmetryGroup::wallpaper(&lat);
        let id = g.element_id(Decomposition { tx: 2, ty: 1, rot: 1, refl: 1 }).unwrap();
        // (1,0) -mirror-> (0,1) -rotate-> (-1,0) -translate-> (1,1)
        assert_eq!(g.act(id, lat.site_index(1, 0)), lat.site_index(1, 1));
    }

    #[test]
    fn apply_to_sites_examples() {
        let lat = lattice(Geometry::Square, 6);
        let g = SymmetryGroup::wallpaper(&lat);
        let mut spins = vec![-1i8; 36];
        spins[lat.site_index(1, 0)] = 1;
        let c = SpinConfiguration::new(spins).unwrap();
        assert_eq!(g.apply_to_sites(0, &c), c);
        let r = g.element_id(Decomposition { tx: 0, ty: 0, rot: 1, refl: 0 }).unwrap();
        let rotated = g.apply_to_sites(r, &c);
        // (i, j) -> (-j, i) sends (1, 0) to (0, 1)
        assert_eq!(rotated.spins()[lat.site_index(0, 1)], 1);
        assert_eq!(rotated.spins().iter().filter(|&&s| s == 1).count(), 1);
        assert_eq!(rotated.magnetization(), c.magnetization());

        let tri = lattice(Geometry::Triangular, 6);
        let gt = SymmetryGroup::wallpaper(&tri);
        let r = gt.element_id(Decomposition { tx: 0, ty: 0, rot: 1, refl: 0 }).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let c = SpinConfiguration::random_balanced(36, &mut rng).unwrap();
        let mut x = c.clone();
        for _ in 0..6 {
            x = gt.apply_to_sites(r, &x);
        }
        assert_eq!(x, c);
        let bits = c.to_bits().unwrap();
        assert_eq!(gt.apply_to_bits(r, bits), gt.apply_to_sites(r, &c).to_bits().unwrap());
    }

    #[test]
    fn orbit_representative_reconstructs_config() {
        let g = SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, 4));
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let c = SpinConfiguration::random_balanced(16, &mut rng).unwrap();
            let bits = c.to_bits().unwrap();
            let (rep, u) = g.orbit_representative(bits);
            assert_eq!(g.apply_to_bits(u, rep), bits);
            let h = rng.random_range(0..g.order());
            assert_eq!(g.orbit_representative(g.apply_to_bits(h, bits)).0, rep);
        }
    }

    #[test]
    fn filter_index_map_invariants() {
        let g = SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, 4));
        let map = FilterIndexMap::new(&g);
        let n = g.order();
        assert!(map.feature_row(0).iter().enumerate().all(|(h, &x)| x as usize == h));
        for a in 0..n {
            assert_eq!(map.feature_map(a, a), 0);
            let mut seen = vec![false; n];
            for b in 0..n {
                assert_eq!(map.feature_map(a, b), g.compose(g.inverse(a), b));
                seen[map.feature_map(a, b)] = true;
            }
            assert!(seen.into_iter().all(|x| x));
            for x in 0..g.n_sites() {
                assert_eq!(map.input_map(a, x), g.act(g.inverse(a), x));
            }
        }
    }

    #[test]
    fn translation_feature_map_is_coordinate_difference() {
        let lat = lattice(Geometry::Square, 6);
        let g = build_group(&lat, GroupVariant::Translations).unwrap();
        let map = FilterIndexMap::new(&g);
        for a in g.elements() {
            for b in g.elements() {
                let (da, db) = (a.decomposition, b.decomposition);
                let dx = (db.tx + 6 - da.tx) % 6;
                let dy = (db.ty + 6 - da.ty) % 6;
                let tap = g.elements()[map.feature_map(a.id, b.id)].decomposition;
                assert_eq!((tap.tx, tap.ty), (dx, dy));
            }
        }
    }

    #[test]
    fn characters() {
        let g = SymmetryGroup::wallpaper(&lattice(Geometry::Square, 4));
        assert_eq!(g.validate_character(&CharacterSector::Symmetric.character(&g)), Ok(()));
        assert_eq!(g.validate_character(&CharacterSector::ReflectionOdd.character(&g)), Ok(()));
        assert_eq!(g.validate_character(&CharacterSector::RotationOdd.character(&g)), Ok(()));
        let tri = SymmetryGroup::wallpaper(&lattice(Geometry::Triangular, 4));
        assert_eq!(tri.validate_character(&CharacterSector::RotationOdd.character(&tri)), Ok(()));

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut chi: Vec<Complex64> = (0..g.order())
            .map(|_| Complex64::new(if rng.random_bool(0.5) { 1.0 } else { -1.0 }, 0.0))
            .collect();
        chi[0] = Complex64::new(1.0, 0.0);
        assert!(matches!(
            g.validate_character(&chi),
            Err(CharacterViolation::NotHomomorphic { .. })
        ));
        assert!(matches!(
            g.validate_character(&chi[..3]),
            Err(CharacterViolation::WrongLength { .. })
        ));
    }
}

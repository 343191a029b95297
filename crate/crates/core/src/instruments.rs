//! Hypercube instrument classes.
//!
//! An instrument is a pair of cells `(A, B)` at a resolution level `r`: it
//! switches on for the ordered pair `(i, j)` when observation `i` lies in
//! cell `A` and `j` in cell `B`. A cell is a product of half-open intervals
//! `((a-1)/(2r), a/(2r)]` on the cube coordinates and, in the mixed and
//! finite-support modes, an exact match on a discrete tuple.
//!
//! Instruments are numbered level by level; within level `l` the instrument
//! for cells `(A, B)` is `offset_l + A * C_l + B`, where `C_l` is the number of
//! cells at that level.

use alloc::vec::Vec;

use crate::data::{DiscreteTuple, Sample, TransformedSample};
use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum InstrumentMode {
    /// Cubes on the continuous block times exact discrete matches.
    Mixed,
    /// Exact matches on the full covariate tuple; for covariates with finite
    /// support only.
    FiniteSupport,
    /// Cubes on every coordinate; every covariate must be treated as
    /// continuous.
    AllCube,
}

/// A single decoded instrument.
#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentIndex {
    pub mode: InstrumentMode,
    pub r: u32,
    /// Cube cell of observation `i` (1-based per coordinate).
    pub a: Vec<u32>,
    /// Cube cell of observation `j`.
    pub a_tilde: Vec<u32>,
    /// Discrete tuple of `i` (empty in all-cube mode).
    pub b: DiscreteTuple,
    /// Discrete tuple of `j`.
    pub b_tilde: DiscreteTuple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Level {
    pub r: u32,
    /// Number of cells `C` at this level; the level holds `C^2` instruments.
    pub cells: usize,
    pub weight: f64,
    pub offset: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct InstrumentFamily {
    mode: InstrumentMode,
    r_max: u32,
    /// Number of cube coordinates.
    cube_dims: usize,
    support: Vec<DiscreteTuple>,
    levels: Vec<Level>,
    len: usize,
}

/// Enumerates the family for levels `r = 1..=r_max`.
///
/// `p` is the number of continuous covariates and `support` the discrete
/// support (the full covariate support in finite-support mode). Samples with
/// no discrete covariates have a support consisting of one empty tuple.
pub fn enumerate_instruments(
    mode: InstrumentMode,
    r_max: u32,
    p: usize,
    support: &[DiscreteTuple],
) -> Result<InstrumentFamily> {
    if support.is_empty() {
        return Err(invalid!("discrete support is empty"));
    }
    let mut support = support.to_vec();
    support.sort();
    support.dedup();
    let dlen = support[0].len();
    if support.iter().any(|t| t.len() != dlen) {
        return Err(invalid!("discrete support tuples differ in length"));
    }
    let s = support.len();
    let mut levels = Vec::new();
    let mut offset = 0usize;
    let mut push = |r: u32, cells: usize, weight: f64, levels: &mut Vec<Level>| -> Result<()> {
        let count = cells
            .checked_mul(cells)
            .and_then(|c| c.checked_add(offset))
            .ok_or_else(|| invalid!("instrument family is too large"))?;
        levels.push(Level {
            r,
            cells,
            weight,
            offset,
        });
        offset = count;
        Ok(())
    };
    let cube_dims = match mode {
        InstrumentMode::Mixed | InstrumentMode::AllCube => {
            if r_max < 1 {
                return Err(invalid!("R must be at least 1"));
            }
            let (dims, disc) = if mode == InstrumentMode::AllCube {
                if dlen != 0 {
                    return Err(invalid!(
                        "all_cube mode requires every covariate to be treated as continuous"
                    ));
                }
                (p, 1)
            } else {
                (p, s)
            };
            for r in 1..=r_max {
                let side = 2 * r as usize;
                let cubes = checked_pow(side, dims)?;
                let cells = cubes
                    .checked_mul(disc)
                    .ok_or_else(|| invalid!("instrument family is too large"))?;
                let rr = r as f64;
                let weight = 1.0 / ((rr * rr + 100.0) * (cells as f64) * (cells as f64));
                push(r, cells, weight, &mut levels)?;
            }
            dims
        }
        InstrumentMode::FiniteSupport => {
            if p != 0 {
                return Err(invalid!(
                    "finite_support mode requires all covariates to be discrete (p = 0)"
                ));
            }
            let sf = s as f64;
            push(1, s, 1.0 / (sf * sf), &mut levels)?;
            0
        }
    };
    Ok(InstrumentFamily {
        mode,
        r_max: if mode == InstrumentMode::FiniteSupport {
            1
        } else {
            r_max
        },
        cube_dims,
        support,
        levels,
        len: offset,
    })
}

fn checked_pow(base: usize, exp: usize) -> Result<usize> {
    let mut v = 1usize;
    for _ in 0..exp {
        v = v
            .checked_mul(base)
            .ok_or_else(|| invalid!("instrument family is too large"))?;
    }
    Ok(v)
}

/// Cube cell index (1-based) of a coordinate under the half-open convention,
/// or `None` outside `(0, 1]`.
fn cube_cell(u: f64, side: u32) -> Option<u32> {
    if !(u > 0.0 && u <= 1.0) {
        return None;
    }
    let s = side as f64;
    let mut a = libm::ceil(u * s).clamp(1.0, s) as u32;
    // Guard against rounding in the product.
    while a > 1 && u <= (a - 1) as f64 / s {
        a -= 1;
    }
    while a < side && u > a as f64 / s {
        a += 1;
    }
    Some(a)
}

fn in_cell(u: f64, a: u32, side: u32) -> bool {
    let s = side as f64;
    (a - 1) as f64 / s < u && u <= a as f64 / s
}

impl InstrumentFamily {
    /// Family for a sample: continuous dimension and discrete support are
    /// read off the sample.
    pub fn for_sample(mode: InstrumentMode, r_max: u32, sample: &Sample) -> Result<Self> {
        enumerate_instruments(mode, r_max, sample.p(), sample.discrete_support())
    }

    pub fn mode(&self) -> InstrumentMode {
        self.mode
    }

    pub fn r_max(&self) -> u32 {
        self.r_max
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn levels(&self) -> &[Level] {
        &self.levels
    }

    pub fn support(&self) -> &[DiscreteTuple] {
        &self.support
    }

    /// Level containing instrument `g`.
    pub fn level_of(&self, g: usize) -> usize {
        assert!(g < self.len, "instrument index out of range");
        self.levels.partition_point(|l| l.offset <= g) - 1
    }

    pub fn weight(&self, g: usize) -> f64 {
        self.levels[self.level_of(g)].weight
    }

    pub fn weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len);
        for l in &self.levels {
            w.extend(core::iter::repeat(l.weight).take(l.cells * l.cells));
        }
        w
    }

    /// Cell of a coordinate vector (instrument coordinates: transformed
    /// continuous block then raw discrete block) at level `l`.
    pub fn cell_of(&self, l: usize, x: &[f64]) -> Option<usize> {
        let level = &self.levels[l];
        let side = 2 * level.r;
        let mut cube = 0usize;
        for &u in &x[..self.cube_dims] {
            let a = cube_cell(u, side)?;
            cube = cube * side as usize + (a - 1) as usize;
        }
        match self.mode {
            InstrumentMode::AllCube => Some(cube),
            InstrumentMode::Mixed | InstrumentMode::FiniteSupport => {
                let disc = &x[self.cube_dims..];
                let b = self
                    .support
                    .binary_search_by(|t| cmp_tuple(t.values(), disc))
                    .ok()?;
                Some(cube * self.support.len() + b)
            }
        }
    }

    /// Cell assignment of every observation at every level.
    pub fn assign(&self, sample: &TransformedSample) -> CellAssignment {
        let n = sample.n();
        let cells = self
            .levels
            .iter()
            .enumerate()
            .map(|(l, _)| (0..n).map(|i| self.cell_of(l, sample.coords(i))).collect())
            .collect();
        CellAssignment { cells }
    }

    fn decode_cell(&self, l: usize, mut cell: usize) -> (Vec<u32>, DiscreteTuple) {
        let side = 2 * self.levels[l].r as usize;
        let b = match self.mode {
            InstrumentMode::AllCube => DiscreteTuple::new(&[]),
            _ => {
                let s = self.support.len();
                let b = self.support[cell % s].clone();
                cell /= s;
                b
            }
        };
        let mut a = alloc::vec![0u32; self.cube_dims];
        for u in (0..self.cube_dims).rev() {
            a[u] = (cell % side) as u32 + 1;
            cell /= side;
        }
        (a, b)
    }

    /// Decodes instrument `g`.
    pub fn index(&self, g: usize) -> InstrumentIndex {
        let l = self.level_of(g);
        let level = &self.levels[l];
        let local = g - level.offset;
        let (a, b) = self.decode_cell(l, local / level.cells);
        let (a_tilde, b_tilde) = self.decode_cell(l, local % level.cells);
        InstrumentIndex {
            mode: self.mode,
            r: level.r,
            a,
            a_tilde,
            b,
            b_tilde,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = InstrumentIndex> + '_ {
        (0..self.len).map(|g| self.index(g))
    }
}

fn cmp_tuple(a: &[f64], b: &[f64]) -> core::cmp::Ordering {
    DiscreteTuple::new(a).cmp(&DiscreteTuple::new(b))
}

/// Per-level cell of every observation (`None` when it lies in no cell).
#[derive(Debug, Clone)]
pub struct CellAssignment {
    cells: Vec<Vec<Option<usize>>>,
}

impl CellAssignment {
    #[inline]
    pub fn cell(&self, level: usize, i: usize) -> Option<usize> {
        self.cells[level][i]
    }
}

/// `g(x_i, x_j)` evaluated directly from the definition.
pub fn instrument_indicator(g: &InstrumentIndex, xi: &[f64], xj: &[f64]) -> bool {
    let side = 2 * g.r;
    let dims = g.a.len();
    if xi.len() != dims + g.b.len() || xj.len() != dims + g.b_tilde.len() {
        return false;
    }
    let cubes =
        (0..dims).all(|u| in_cell(xi[u], g.a[u], side) && in_cell(xj[u], g.a_tilde[u], side));
    cubes && g.b.matches(&xi[dims..]) && g.b_tilde.matches(&xj[dims..])
}

impl crate::ustat::PairIndicator for InstrumentIndex {
    fn contains(&self, xi: &[f64], xj: &[f64]) -> bool {
        instrument_indicator(self, xi, xj)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn sup(vals: &[f64]) -> Vec<DiscreteTuple> {
        vals.iter().map(|v| DiscreteTuple::new(&[*v])).collect()
    }

    #[test]
    fn counts_and_weights() {
        let f =
            enumerate_instruments(InstrumentMode::Mixed, 1, 1, &[DiscreteTuple::new(&[])]).unwrap();
        assert_eq!(f.len(), 4);
        assert!(f
            .weights()
            .iter()
            .all(|&w| (w - 1.0 / (101.0 * 4.0)).abs() < 1e-18));

        let f = enumerate_instruments(InstrumentMode::Mixed, 5, 1, &sup(&[0.0, 1.0])).unwrap();
        assert_eq!(f.len(), 880);

        let f = enumerate_instruments(InstrumentMode::FiniteSupport, 1, 0, &sup(&[0.0, 1.0, 2.0]))
            .unwrap();
        assert_eq!(f.len(), 9);
        assert!(f.weights().iter().all(|&w| (w - 1.0 / 9.0).abs() < 1e-18));

        let f = enumerate_instruments(InstrumentMode::AllCube, 2, 2, &[DiscreteTuple::new(&[])])
            .unwrap();
        assert_eq!(f.len(), 16 + 256);
        assert!((f.weight(20) - 1.0 / (104.0 * 256.0)).abs() < 1e-18);
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(enumerate_instruments(InstrumentMode::Mixed, 0, 1, &sup(&[0.0])).is_err());
        assert!(enumerate_instruments(InstrumentMode::Mixed, 1, 1, &[]).is_err());
        assert!(enumerate_instruments(InstrumentMode::FiniteSupport, 1, 1, &sup(&[0.0])).is_err());
    }

    #[test]
    fn half_open_cells() {
        let g = InstrumentIndex {
            mode: InstrumentMode::Mixed,
            r: 1,
            a: vec![1],
            a_tilde: vec![2],
            b: DiscreteTuple::new(&[]),
            b_tilde: DiscreteTuple::new(&[]),
        };
        assert!(instrument_indicator(&g, &[0.5], &[0.7]));
        assert!(!instrument_indicator(&g, &[0.0], &[0.7]));
        assert!(!instrument_indicator(&g, &[0.6], &[0.7]));
        assert!(instrument_indicator(&g, &[0.2], &[1.0]));
    }

    #[test]
    fn discrete_mismatch() {
        let g = InstrumentIndex {
            mode: InstrumentMode::Mixed,
            r: 1,
            a: vec![1],
            a_tilde: vec![1],
            b: DiscreteTuple::new(&[1.0]),
            b_tilde: DiscreteTuple::new(&[0.0]),
        };
        assert!(instrument_indicator(&g, &[0.3, 1.0], &[0.3, 0.0]));
        assert!(!instrument_indicator(&g, &[0.3, 0.0], &[0.3, 0.0]));
    }

    #[test]
    fn cell_boundaries_are_robust() {
        for side in [2u32, 4, 6, 8, 10] {
            for a in 1..=side {
                let u = a as f64 / side as f64;
                assert_eq!(cube_cell(u, side), Some(a));
                assert!(in_cell(u, a, side));
            }
        }
        assert_eq!(cube_cell(0.0, 2), None);
        assert_eq!(cube_cell(1.0 + 1e-12, 2), None);
    }

    #[test]
    fn decode_roundtrip_agrees_with_cells() {
        let f = enumerate_instruments(InstrumentMode::Mixed, 3, 2, &sup(&[0.0, 1.0])).unwrap();
        let xi = [0.41, 0.93, 1.0];
        let xj = [0.07, 0.5, 0.0];
        for (l, level) in f.levels().iter().enumerate() {
            let a = f.cell_of(l, &xi).unwrap();
            let b = f.cell_of(l, &xj).unwrap();
            let mut hits = 0;
            for g in level.offset..level.offset + level.cells * level.cells {
                if instrument_indicator(&f.index(g), &xi, &xj) {
                    hits += 1;
                    assert_eq!(g, level.offset + a * level.cells + b);
                }
            }
            assert_eq!(hits, 1);
        }
    }
}

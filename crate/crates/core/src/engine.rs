//! Batched U-statistics over a whole instrument family and one or more
//! kernel blocks.
//!
//! For each level and block the engine tabulates `Q[i][B] = Σ_{j≠i, j∈B} K_ij`
//! and `R[i][B] = Σ_{j≠i, j∈B} K_ij²`. Every instrument `(A, B)` then has
//! pair sum `Σ_{i∈A} Q[i][B]` and order-3 diagonal sum
//! `Σ_{i∈A} (Q[i][B]² − R[i][B])`. Cross covariances come from per-observation
//! outer products of the nonzero `Q` entries minus a per-pair correction.
//! Everything is accumulated in integers, in a fixed order.

use alloc::vec;
use alloc::vec::Vec;

use crate::instruments::{CellAssignment, InstrumentFamily};
use crate::kernel::PairKernel;
use crate::ustat::{covariance_from_sums, mean_from_sum};

struct LevelTables {
    cells: usize,
    /// `n x cells`, row-major.
    q: Vec<i64>,
}

struct BlockTables {
    kernel: PairKernel,
    levels: Vec<LevelTables>,
    sums: Vec<i64>,
    diag_t3: Vec<i64>,
    overall_sum: i64,
    overall_t3: i64,
}

/// Means and covariances of the moment system
/// `{ m̄_b(g) : block b, instrument g }`.
pub struct MomentSystem<'a> {
    family: &'a InstrumentFamily,
    cells: &'a CellAssignment,
    n: usize,
    blocks: Vec<BlockTables>,
}

/// Instruments switched on by at least one ordered pair of distinct
/// observations. The rest have identically zero moments and are skipped.
pub fn active_instruments(
    family: &InstrumentFamily,
    cells: &CellAssignment,
    n: usize,
) -> Vec<bool> {
    let mut active = vec![false; family.len()];
    for (l, level) in family.levels().iter().enumerate() {
        let mut count = vec![0usize; level.cells];
        for i in 0..n {
            if let Some(c) = cells.cell(l, i) {
                count[c] += 1;
            }
        }
        for a in 0..level.cells {
            for b in 0..level.cells {
                let pairs = count[a] * count[b] - if a == b { count[a] } else { 0 };
                active[level.offset + a * level.cells + b] = pairs > 0;
            }
        }
    }
    active
}

impl<'a> MomentSystem<'a> {
    pub fn new(
        family: &'a InstrumentFamily,
        cells: &'a CellAssignment,
        kernels: Vec<PairKernel>,
    ) -> Self {
        let n = kernels.first().map_or(0, |k| k.n());
        let blocks = kernels
            .into_iter()
            .map(|k| {
                assert_eq!(k.n(), n, "kernel blocks must share the sample");
                build_block(family, cells, k)
            })
            .collect();
        MomentSystem {
            family,
            cells,
            n,
            blocks,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    pub fn family(&self) -> &InstrumentFamily {
        self.family
    }

    /// `m̄_b(g)`.
    pub fn mean(&self, b: usize, g: usize) -> f64 {
        let blk = &self.blocks[b];
        mean_from_sum(self.n, blk.sums[g], blk.kernel.scale())
    }

    /// `σ̂²_b(g) = ĥ2_b(g, g)`; may be slightly negative in finite samples.
    pub fn variance(&self, b: usize, g: usize) -> f64 {
        let blk = &self.blocks[b];
        let s = blk.sums[g];
        covariance_from_sums(
            self.n,
            s,
            s,
            blk.diag_t3[g],
            blk.kernel.scale() * blk.kernel.scale(),
        )
    }

    /// `σ̂²_b(g ≡ 1)`.
    pub fn overall_variance(&self, b: usize) -> f64 {
        let blk = &self.blocks[b];
        let sc = blk.kernel.scale();
        covariance_from_sums(
            self.n,
            blk.overall_sum,
            blk.overall_sum,
            blk.overall_t3,
            sc * sc,
        )
    }

    /// Mean of the block kernel over all ordered pairs (`g ≡ 1`).
    pub fn overall_mean(&self, b: usize) -> f64 {
        let blk = &self.blocks[b];
        mean_from_sum(self.n, blk.overall_sum, blk.kernel.scale())
    }

    /// Row-major covariance matrix `ĥ2` of the selected `(block, instrument)`
    /// moments.
    pub fn covariance(&self, sel: &[(usize, usize)]) -> Vec<f64> {
        let d = sel.len();
        let n = self.n;
        let levels = self.family.levels();
        // compact index of (block, level, local instrument)
        let mut map: Vec<Vec<Vec<u32>>> = self
            .blocks
            .iter()
            .map(|_| {
                levels
                    .iter()
                    .map(|l| vec![u32::MAX; l.cells * l.cells])
                    .collect()
            })
            .collect();
        for (c, &(b, g)) in sel.iter().enumerate() {
            let l = self.family.level_of(g);
            map[b][l][g - levels[l].offset] = c as u32;
        }

        let mut t3 = vec![0i64; d * d];
        let mut entries: Vec<(usize, i64)> = Vec::new();
        for i in 0..n {
            entries.clear();
            for (b, blk) in self.blocks.iter().enumerate() {
                for (l, lt) in blk.levels.iter().enumerate() {
                    let Some(a) = self.cells.cell(l, i) else {
                        continue;
                    };
                    let row = &lt.q[i * lt.cells..(i + 1) * lt.cells];
                    let idx = &map[b][l][a * lt.cells..(a + 1) * lt.cells];
                    for (bb, &v) in row.iter().enumerate() {
                        if v != 0 && idx[bb] != u32::MAX {
                            entries.push((idx[bb] as usize, v));
                        }
                    }
                }
            }
            for &(c1, v1) in &entries {
                let row = &mut t3[c1 * d..(c1 + 1) * d];
                for &(c2, v2) in &entries {
                    row[c2] += v1 * v2;
                }
            }
        }

        let mut pair: Vec<(usize, i64)> = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                pair.clear();
                for (b, blk) in self.blocks.iter().enumerate() {
                    let v = blk.kernel.units(i, j) as i64;
                    if v == 0 {
                        continue;
                    }
                    for (l, lt) in blk.levels.iter().enumerate() {
                        let (Some(a), Some(bb)) = (self.cells.cell(l, i), self.cells.cell(l, j))
                        else {
                            continue;
                        };
                        let c = map[b][l][a * lt.cells + bb];
                        if c != u32::MAX {
                            pair.push((c as usize, v));
                        }
                    }
                }
                for &(c1, v1) in &pair {
                    for &(c2, v2) in &pair {
                        t3[c1 * d + c2] -= v1 * v2;
                    }
                }
            }
        }

        let mut h = vec![0.0; d * d];
        for (c1, &(b1, g1)) in sel.iter().enumerate() {
            let s1 = self.blocks[b1].sums[g1];
            let sc1 = self.blocks[b1].kernel.scale();
            for (c2, &(b2, g2)) in sel.iter().enumerate() {
                let s2 = self.blocks[b2].sums[g2];
                let sc2 = self.blocks[b2].kernel.scale();
                h[c1 * d + c2] = covariance_from_sums(n, s1, s2, t3[c1 * d + c2], sc1 * sc2);
            }
        }
        h
    }
}

fn build_block(
    family: &InstrumentFamily,
    cells: &CellAssignment,
    kernel: PairKernel,
) -> BlockTables {
    let n = kernel.n();
    let mut sums = vec![0i64; family.len()];
    let mut diag_t3 = vec![0i64; family.len()];
    let mut levels = Vec::with_capacity(family.levels().len());
    for (l, level) in family.levels().iter().enumerate() {
        let c = level.cells;
        let mut q = vec![0i64; n * c];
        let mut r = vec![0i64; n * c];
        for i in 0..n {
            if cells.cell(l, i).is_none() {
                continue;
            }
            let row = kernel.row(i);
            for (j, &v) in row.iter().enumerate() {
                if v == 0 || j == i {
                    continue;
                }
                if let Some(bj) = cells.cell(l, j) {
                    let v = v as i64;
                    q[i * c + bj] += v;
                    r[i * c + bj] += v * v;
                }
            }
        }
        for i in 0..n {
            let Some(a) = cells.cell(l, i) else { continue };
            for b in 0..c {
                let qv = q[i * c + b];
                let g = level.offset + a * c + b;
                sums[g] += qv;
                diag_t3[g] += qv * qv - r[i * c + b];
            }
        }
        levels.push(LevelTables { cells: c, q });
    }
    let mut overall_sum = 0i64;
    let mut overall_t3 = 0i64;
    for i in 0..n {
        let mut s = 0i64;
        let mut sq = 0i64;
        for &v in kernel.row(i) {
            let v = v as i64;
            s += v;
            sq += v * v;
        }
        overall_sum += s;
        overall_t3 += s * s - sq;
    }
    BlockTables {
        kernel,
        levels,
        sums,
        diag_t3,
        overall_sum,
        overall_t3,
    }
}

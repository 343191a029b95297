//! Confidence sets by test inversion over a finite grid, and projections of
//! accepted sets onto single coordinates.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::data::{validate_beta, Beta, TransformedSample};
use crate::error::{invalid, Error, Result};
use crate::inference::{DrawMode, MiTest, TestOutcome, TuningParams};
use crate::kernel::PairKernel;
use crate::math;
use crate::par::par_map;

/// Evenly spaced values `lo, lo + step, ..., <= hi`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct Axis {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Axis {
    pub fn new(lo: f64, hi: f64, step: f64) -> Result<Self> {
        let a = Axis { lo, hi, step };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo <= self.hi) {
            return Err(invalid!("axis range must be finite with lo <= hi"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(invalid!("axis step must be positive"));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        libm::floor((self.hi - self.lo) / self.step + 1e-9) as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn value(&self, i: usize) -> f64 {
        math::snap(self.lo + i as f64 * self.step)
    }

    pub fn values(&self) -> Vec<f64> {
        (0..self.len()).map(|i| self.value(i)).collect()
    }

    /// Largest grid value.
    pub fn last(&self) -> f64 {
        self.value(self.len() - 1)
    }
}

/// Search grid: signs of the first coordinate, one axis per remaining β
/// coordinate, and (for joint sets) one `t` axis per `y`, or a single axis
/// shared by every `y`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct ParamGrid {
    pub signs: Vec<f64>,
    pub free: Vec<Axis>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub t_axes: Vec<Axis>,
}

impl ParamGrid {
    pub fn new(signs: Vec<f64>, free: Vec<Axis>) -> Result<Self> {
        let g = ParamGrid {
            signs,
            free,
            t_axes: Vec::new(),
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.signs.is_empty() || self.free.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if self.signs.iter().any(|&s| s != 1.0 && s != -1.0) {
            return Err(Error::Normalization(
                *self.signs.iter().find(|&&s| s != 1.0 && s != -1.0).unwrap(),
            ));
        }
        let mut s = self.signs.clone();
        s.sort_by(f64::total_cmp);
        s.dedup();
        if s.len() != self.signs.len() {
            return Err(invalid!("grid signs must be distinct"));
        }
        for a in self.free.iter().chain(&self.t_axes) {
            a.validate()?;
        }
        Ok(())
    }

    /// Dimension `k` of β.
    pub fn k(&self) -> usize {
        1 + self.free.len()
    }

    /// Number of β points.
    pub fn beta_size(&self) -> usize {
        self.signs.len() * self.free.iter().map(Axis::len).product::<usize>()
    }

    /// Number of joint points for `q` values of `y`.
    pub fn joint_size(&self, q: usize) -> Result<usize> {
        let axes = self.t_axes_for(q)?;
        Ok(self.beta_size() * axes.iter().map(|a| a.len()).product::<usize>())
    }

    fn t_axes_for(&self, q: usize) -> Result<Vec<Axis>> {
        match self.t_axes.len() {
            1 => Ok(alloc::vec![self.t_axes[0]; q]),
            m if m == q => Ok(self.t_axes.clone()),
            m => Err(invalid!("grid has {m} t axes but {q} y values")),
        }
    }

    /// Every β point, signs outermost, later coordinates varying fastest.
    pub fn beta_points(&self) -> Vec<Vec<f64>> {
        let mut axes: Vec<Vec<f64>> = alloc::vec![self.signs.clone()];
        axes.extend(self.free.iter().map(Axis::values));
        cartesian(&axes)
    }

    /// Grid range of coordinate `c` of a β point (the sign has none).
    fn beta_ranges(&self) -> Vec<Option<(f64, f64, f64)>> {
        let mut r = alloc::vec![None];
        r.extend(self.free.iter().map(|a| Some((a.lo, a.last(), a.step))));
        r
    }
}

fn cartesian(axes: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = alloc::vec![Vec::new()];
    for axis in axes {
        let mut next = Vec::with_capacity(out.len() * axis.len());
        for prefix in &out {
            for &v in axis {
                let mut p = prefix.clone();
                p.push(v);
                next.push(p);
            }
        }
        out = next;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvaluatedPoint {
    /// β followed by any `t` coordinates.
    pub params: Vec<f64>,
    pub outcome: TestOutcome,
}

impl EvaluatedPoint {
    pub fn accepted(&self) -> bool {
        !self.outcome.reject
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
    /// Acceptance reaches the lower grid edge.
    pub unbounded_below: bool,
    /// Acceptance reaches the upper grid edge.
    pub unbounded_above: bool,
}

impl core::fmt::Display for Interval {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        if self.unbounded_below {
            write!(f, "(unbounded, ")?;
        } else {
            write!(f, "[{}, ", self.lo)?;
        }
        if self.unbounded_above {
            write!(f, "unbounded)")
        } else {
            write!(f, "{}]", self.hi)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Projection {
    pub coord: usize,
    /// Convex hull of accepted values; `None` for an empty set.
    pub hull: Option<Interval>,
    /// Maximal runs of consecutive accepted grid values.
    pub runs: Vec<Interval>,
}

impl Projection {
    pub fn is_empty(&self) -> bool {
        self.hull.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ConfidenceSet {
    /// Every evaluated grid point, in grid order.
    pub points: Vec<EvaluatedPoint>,
    /// Per coordinate: grid `(lo, hi, step)`, or `None` for the sign.
    pub ranges: Vec<Option<(f64, f64, f64)>>,
    pub projections: Vec<Projection>,
}

impl ConfidenceSet {
    fn new(points: Vec<EvaluatedPoint>, ranges: Vec<Option<(f64, f64, f64)>>) -> Self {
        let mut set = ConfidenceSet {
            points,
            ranges,
            projections: Vec::new(),
        };
        set.projections = (0..set.ranges.len()).map(|c| project(&set, c)).collect();
        set
    }

    pub fn accepted(&self) -> impl Iterator<Item = &EvaluatedPoint> {
        self.points.iter().filter(|p| p.accepted())
    }
}

/// Projection of the accepted points onto coordinate `coord`.
pub fn project(set: &ConfidenceSet, coord: usize) -> Projection {
    let mut vals: Vec<f64> = set.accepted().map(|p| p.params[coord]).collect();
    vals.sort_by(f64::total_cmp);
    vals.dedup();
    let range = set.ranges.get(coord).copied().flatten();
    let make = |lo: f64, hi: f64| Interval {
        lo,
        hi,
        unbounded_below: range.is_some_and(|(glo, _, s)| lo <= glo + 1e-9 * s),
        unbounded_above: range.is_some_and(|(_, ghi, s)| hi >= ghi - 1e-9 * s),
    };
    let Some((&first, &last)) = vals.first().zip(vals.last()) else {
        return Projection {
            coord,
            hull: None,
            runs: Vec::new(),
        };
    };
    let gap = range.map_or(f64::INFINITY, |(_, _, s)| 1.5 * s);
    let mut runs = Vec::new();
    let mut start = first;
    for w in vals.windows(2) {
        if w[1] - w[0] > gap {
            runs.push(make(start, w[0]));
            start = w[1];
        }
    }
    runs.push(make(start, last));
    Projection {
        coord,
        hull: Some(make(first, last)),
        runs,
    }
}

fn kernel_hash(kernels: &[PairKernel]) -> u64 {
    // FNV-1a over the kernel units.
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for k in kernels {
        for i in 0..k.n() {
            for &v in k.row(i) {
                h ^= v as u8 as u64;
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
    }
    h
}

fn same_kernels(a: &[PairKernel], b: &[PairKernel]) -> bool {
    a.len() == b.len()
        && a.iter()
            .zip(b)
            .all(|(x, y)| x.scale() == y.scale() && (0..x.n()).all(|i| x.row(i) == y.row(i)))
}

/// Runs the test at every `(β, ts)` job. With common draws, jobs whose kernel
/// matrices coincide give identical outcomes, so each distinct kernel set is
/// tested once.
fn run_jobs(
    test: &MiTest<'_>,
    jobs: &[(Beta, Vec<f64>)],
    ys: &[f64],
    y_tilde: f64,
) -> Result<Vec<TestOutcome>> {
    let build = |(beta, ts): &(Beta, Vec<f64>)| test.kernels(beta, ys, ts, y_tilde);
    if test.tuning().draw_mode == DrawMode::Fresh {
        return par_map(jobs, |i, job| test.evaluate(build(job)?, i as u64, true))
            .into_iter()
            .collect();
    }
    let hashes: Vec<Result<u64>> = par_map(jobs, |_, job| build(job).map(|k| kernel_hash(&k)));
    let mut reps: Vec<usize> = Vec::new();
    let mut by_hash: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    let mut rep_of = Vec::with_capacity(jobs.len());
    for (i, h) in hashes.into_iter().enumerate() {
        let h = h?;
        let candidates = by_hash.entry(h).or_default();
        let mut found = None;
        if !candidates.is_empty() {
            let mine = build(&jobs[i])?;
            for &r in candidates.iter() {
                if same_kernels(&mine, &build(&jobs[reps[r]])?) {
                    found = Some(r);
                    break;
                }
            }
        }
        let r = match found {
            Some(r) => r,
            None => {
                reps.push(i);
                candidates.push(reps.len() - 1);
                reps.len() - 1
            }
        };
        rep_of.push(r);
    }
    let unique: Vec<Result<TestOutcome>> =
        par_map(&reps, |_, &i| test.evaluate(build(&jobs[i])?, 0, true));
    let unique: Vec<TestOutcome> = unique.into_iter().collect::<Result<_>>()?;
    Ok(rep_of.into_iter().map(|r| unique[r].clone()).collect())
}

fn check_dims(sample: &TransformedSample, grid: &ParamGrid) -> Result<()> {
    grid.validate()?;
    if grid.k() != sample.sample().k() {
        return Err(Error::DimensionMismatch {
            expected: sample.sample().k(),
            got: grid.k(),
        });
    }
    Ok(())
}

/// Confidence set for β: the grid points the test does not reject.
pub fn beta_confidence_set(
    sample: &TransformedSample,
    grid: &ParamGrid,
    tuning: &TuningParams,
) -> Result<ConfidenceSet> {
    check_dims(sample, grid)?;
    let test = MiTest::new(sample, tuning)?;
    let jobs: Vec<(Beta, Vec<f64>)> = grid
        .beta_points()
        .iter()
        .map(|b| Ok((validate_beta(b)?, Vec::new())))
        .collect::<Result<_>>()?;
    let outcomes = run_jobs(&test, &jobs, &[], 1.0)?;
    let points = jobs
        .into_iter()
        .zip(outcomes)
        .map(|((b, _), outcome)| EvaluatedPoint {
            params: b.as_slice().to_vec(),
            outcome,
        })
        .collect();
    Ok(ConfidenceSet::new(points, grid.beta_ranges()))
}

/// Joint confidence set for `(β, T(y_1), ..., T(y_q))` over the full product
/// grid.
pub fn joint_confidence_set(
    sample: &TransformedSample,
    grid: &ParamGrid,
    y_grid: &[f64],
    y_tilde: f64,
    tuning: &TuningParams,
) -> Result<ConfidenceSet> {
    check_dims(sample, grid)?;
    if y_grid.is_empty() {
        return Err(invalid!("joint sets need at least one y value"));
    }
    let t_axes = grid.t_axes_for(y_grid.len())?;
    let test = MiTest::new(sample, tuning)?;
    let ts = cartesian(&t_axes.iter().map(Axis::values).collect::<Vec<_>>());
    let mut jobs = Vec::new();
    for b in grid.beta_points() {
        let beta = validate_beta(&b)?;
        for t in &ts {
            jobs.push((beta.clone(), t.clone()));
        }
    }
    let outcomes = run_jobs(&test, &jobs, y_grid, y_tilde)?;
    let points = jobs
        .into_iter()
        .zip(outcomes)
        .map(|((b, t), outcome)| {
            let mut params = b.as_slice().to_vec();
            params.extend(t);
            EvaluatedPoint { params, outcome }
        })
        .collect();
    let mut ranges = grid.beta_ranges();
    ranges.extend(t_axes.iter().map(|a| Some((a.lo, a.last(), a.step))));
    Ok(ConfidenceSet::new(points, ranges))
}

/// Marginal lower bound of `T(y)` at one `y`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MarginalBound {
    pub y: f64,
    /// Smallest accepted `t` over all β (`None` if nothing is accepted).
    pub lower: Option<f64>,
    /// Acceptance at the bottom of the `t` axis.
    pub unbounded_below: bool,
    /// Acceptance at the top of the `t` axis for some β.
    pub unbounded_above: bool,
    /// Number of joint tests run.
    pub tests: usize,
}

/// Projection of the joint set for `(β, T(y))` onto `T(y)`, one `y` at a
/// time, scanning `t` upwards from the bottom of the axis for each β.
///
/// This returns the same lower endpoint as projecting the full joint grid,
/// without evaluating points above the first acceptance.
pub fn joint_lower_envelope(
    sample: &TransformedSample,
    grid: &ParamGrid,
    y_grid: &[f64],
    t_axis: &Axis,
    y_tilde: f64,
    tuning: &TuningParams,
) -> Result<Vec<MarginalBound>> {
    check_dims(sample, grid)?;
    t_axis.validate()?;
    let test = MiTest::new(sample, tuning)?;
    let betas: Vec<Beta> = grid
        .beta_points()
        .iter()
        .map(|b| validate_beta(b))
        .collect::<Result<_>>()?;
    let t_values = t_axis.values();
    let out = par_map(y_grid, |yi, &y| -> Result<MarginalBound> {
        let mut best: Option<usize> = None;
        let mut top = false;
        let mut tests = 0usize;
        for (bi, beta) in betas.iter().enumerate() {
            let stream = (yi * betas.len() + bi) as u64 * t_values.len() as u64;
            let limit = best.unwrap_or(t_values.len());
            for (ti, &t) in t_values.iter().enumerate().take(limit) {
                tests += 1;
                let o = test.evaluate(
                    test.kernels(beta, &[y], &[t], y_tilde)?,
                    stream + ti as u64,
                    true,
                )?;
                if !o.reject {
                    best = Some(ti);
                    break;
                }
            }
            if !top {
                let ti = t_values.len() - 1;
                if best == Some(ti) {
                    top = true;
                } else {
                    tests += 1;
                    let o = test.evaluate(
                        test.kernels(beta, &[y], &[t_values[ti]], y_tilde)?,
                        stream + ti as u64,
                        true,
                    )?;
                    top = !o.reject;
                }
            }
        }
        Ok(MarginalBound {
            y,
            lower: best.map(|i| t_values[i]),
            unbounded_below: best == Some(0),
            unbounded_above: top,
            tests,
        })
    });
    out.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::inference::Diagnostics;

    fn point(params: &[f64], reject: bool) -> EvaluatedPoint {
        EvaluatedPoint {
            params: params.to_vec(),
            outcome: TestOutcome {
                statistic: 0.0,
                critical_value: Some(1.0),
                reject,
                seed: 0,
                stream: 0,
                diagnostics: Diagnostics::default(),
            },
        }
    }

    fn set(points: Vec<EvaluatedPoint>, hi: f64) -> ConfidenceSet {
        ConfidenceSet::new(points, alloc::vec![None, Some((2.0, hi, 0.1))])
    }

    #[test]
    fn axis_values_hit_round_numbers() {
        let a = Axis::new(-1.0, 9.0, 0.1).unwrap();
        assert_eq!(a.len(), 101);
        assert_eq!(a.value(13), 0.3);
        assert_eq!(a.last(), 9.0);
    }

    #[test]
    fn projection_interval() {
        let s = set(
            alloc::vec![
                point(&[1.0, 2.1], true),
                point(&[1.0, 2.2], false),
                point(&[1.0, 2.3], false),
                point(&[1.0, 2.4], false),
                point(&[1.0, 2.5], true),
            ],
            2.5,
        );
        let p = &s.projections[1];
        let h = p.hull.unwrap();
        assert_eq!((h.lo, h.hi), (2.2, 2.4));
        assert!(!h.unbounded_above && !h.unbounded_below);
        assert_eq!(project(&s, 1), *p);
    }

    #[test]
    fn edge_acceptance_is_unbounded() {
        let s = set(
            alloc::vec![point(&[1.0, 2.4], false), point(&[1.0, 2.5], false)],
            2.5,
        );
        let h = s.projections[1].hull.unwrap();
        assert!(h.unbounded_above);
        assert_eq!(alloc::format!("{h}"), "[2.4, unbounded)");
    }

    #[test]
    fn empty_projection_and_runs() {
        let s = set(alloc::vec![point(&[1.0, 2.4], true)], 2.5);
        assert!(s.projections[1].is_empty());
        let s = set(
            alloc::vec![
                point(&[1.0, 2.0], false),
                point(&[1.0, 2.1], true),
                point(&[1.0, 2.2], false)
            ],
            2.5,
        );
        assert_eq!(s.projections[1].runs.len(), 2);
        let single = set(alloc::vec![point(&[1.0, 2.2], false)], 2.5);
        let h = single.projections[1].hull.unwrap();
        assert_eq!((h.lo, h.hi), (2.2, 2.2));
    }
}

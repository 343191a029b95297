//! Simulation designs with endogenous censoring and Monte Carlo computation
//! of the population bounds on β and on the transformation function.
//!
//! The designs are mixed proportional hazard models
//!
//! ```text
//! log Y* = b1 X1 + b2 X2 + log U + log V
//! log C  = a0 + (g0 + g1 X1 + g2 X2) log U + log W
//! ```
//!
//! with `U, V, W` independent unit exponentials and `X2` uniform on `{0, 1}`.
//! `a0 = +inf` means no censoring.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};

use crate::confset::{Axis, Interval, ParamGrid};
use crate::data::{DiscreteTuple, Observation, Sample};
use crate::error::{invalid, Error, Result};
use crate::math;
use crate::par::par_map;
use crate::rng::stream_rng;

/// Index differences within this distance count as ties.
const INDEX_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ModelId {
    Model1,
    Model2,
    Model3,
    /// Model 2 censoring with Gaussian `X1`.
    Dgp1,
    /// Model 3 censoring with Gaussian `X1`.
    Dgp2,
}

impl ModelId {
    /// Censoring intercept (`None` = no censoring).
    pub fn alpha0(self) -> Option<f64> {
        match self {
            ModelId::Model1 => None,
            ModelId::Model2 | ModelId::Dgp1 => Some(3.0),
            ModelId::Model3 | ModelId::Dgp2 => Some(1.6),
        }
    }

    pub fn default_x1(self) -> X1Law {
        match self {
            ModelId::Dgp1 | ModelId::Dgp2 => X1Law::Normal { sd: 2.0 },
            _ => X1Law::support_i(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "law", rename_all = "snake_case"))]
pub enum X1Law {
    /// Uniform on `{lo, lo + step, ..., hi}`.
    Grid { lo: f64, hi: f64, step: f64 },
    /// `N(0, sd^2)`.
    Normal { sd: f64 },
}

impl X1Law {
    /// `{-2.5, -2.0, ..., 2.5}`.
    pub fn support_i() -> Self {
        X1Law::Grid {
            lo: -2.5,
            hi: 2.5,
            step: 0.5,
        }
    }

    /// `{-5, -4.5, ..., 5}`.
    pub fn support_ii() -> Self {
        X1Law::Grid {
            lo: -5.0,
            hi: 5.0,
            step: 0.5,
        }
    }

    /// `{-5, -4.8, ..., 5}`.
    pub fn support_iii() -> Self {
        X1Law::Grid {
            lo: -5.0,
            hi: 5.0,
            step: 0.2,
        }
    }

    /// Preset by name: `"i"`, `"ii"` or `"iii"`.
    pub fn preset(name: &str) -> Option<Self> {
        match name {
            "i" => Some(Self::support_i()),
            "ii" => Some(Self::support_ii()),
            "iii" => Some(Self::support_iii()),
            _ => None,
        }
    }

    /// Support points of a grid law.
    pub fn points(&self) -> Option<Vec<f64>> {
        match *self {
            X1Law::Grid { lo, hi, step } => Axis::new(lo, hi, step).ok().map(|a| a.values()),
            X1Law::Normal { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct DgpSpec {
    pub model: ModelId,
    /// Censoring intercept; `None` means no censoring.
    pub alpha0: Option<f64>,
    /// Outcome coefficients on `(X1, X2)`.
    pub beta: [f64; 2],
    /// Censoring coefficients `(g0, g1, g2)` on `log U`.
    pub gamma: [f64; 3],
    pub x1: X1Law,
    pub draws_per_point: usize,
    pub seed: u64,
}

impl DgpSpec {
    /// The design's default coefficients and `X1` law.
    pub fn new(model: ModelId) -> Self {
        DgpSpec {
            model,
            alpha0: model.alpha0(),
            beta: [0.5, 1.5],
            gamma: [-0.5, 0.5, -1.0],
            x1: model.default_x1(),
            draws_per_point: 20_000,
            seed: 0,
        }
    }

    pub fn with_x1(mut self, x1: X1Law) -> Self {
        self.x1 = x1;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta[0] == 0.0 || self.beta.iter().chain(&self.gamma).any(|v| !v.is_finite()) {
            return Err(invalid!(
                "DGP coefficients must be finite with a nonzero X1 coefficient"
            ));
        }
        if let Some(a) = self.alpha0 {
            if !a.is_finite() {
                return Err(invalid!("alpha0 must be finite (omit it for no censoring)"));
            }
        }
        match self.x1 {
            X1Law::Grid { lo, hi, step } => {
                Axis::new(lo, hi, step)?;
            }
            X1Law::Normal { sd } => {
                if !(sd > 0.0 && sd.is_finite()) {
                    return Err(invalid!("X1 standard deviation must be positive"));
                }
            }
        }
        Ok(())
    }

    /// Normalised true β: `(sign(b1), b2/|b1|)`.
    pub fn true_beta(&self) -> [f64; 2] {
        [self.beta[0].signum(), self.beta[1] / self.beta[0].abs()]
    }

    /// Normalised true transformation function
    /// `T0(y) = (ln y − ln y_tilde)/|b1|`.
    pub fn true_transformation(&self, y: f64, y_tilde: f64) -> f64 {
        (math::ln(y) - math::ln(y_tilde)) / self.beta[0].abs()
    }

    /// One draw of `(log Y0, D)` at `(x1, x2)`. `U`, `V`, `W` are always drawn
    /// in that order, so designs differing only in censoring share their
    /// latent outcomes path by path.
    fn draw<R: Rng>(&self, rng: &mut R, x1: f64, x2: f64) -> (f64, bool) {
        let u: f64 = rng.sample(Exp1);
        let v: f64 = rng.sample(Exp1);
        let w: f64 = rng.sample(Exp1);
        let ln_u = math::ln(u);
        let ln_y = self.beta[0] * x1 + self.beta[1] * x2 + ln_u + math::ln(v);
        match self.alpha0 {
            None => (ln_y, true),
            Some(a0) => {
                let ln_c = a0
                    + (self.gamma[0] + self.gamma[1] * x1 + self.gamma[2] * x2) * ln_u
                    + math::ln(w);
                if ln_y <= ln_c {
                    (ln_y, true)
                } else {
                    (ln_c, false)
                }
            }
        }
    }
}

/// Draws `n` observations `(Y0, D, (X1, X2))`.
///
/// With a Gaussian `X1` the sample has one continuous covariate and discrete
/// support `{0, 1}`; with a grid law both covariates are discrete and the
/// support is the full product grid.
pub fn simulate_dgp(spec: &DgpSpec, n: usize) -> Result<Sample> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::TooFewObservations {
            required: 1,
            got: 0,
        });
    }
    let mut rng = stream_rng(spec.seed, 0);
    let grid = spec.x1.points();
    let mut obs = Vec::with_capacity(n);
    for _ in 0..n {
        let x1 = match (&grid, spec.x1) {
            (Some(pts), _) => pts[rng.random_range(0..pts.len())],
            (None, X1Law::Normal { sd }) => sd * rng.sample::<f64, _>(StandardNormal),
            _ => unreachable!(),
        };
        let x2 = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let (ln_y0, d) = spec.draw(&mut rng, x1, x2);
        let y0 = math::exp(ln_y0);
        if !(y0 > 0.0 && y0.is_finite()) {
            return Err(Error::Numerical(
                "simulated duration outside the float range".into(),
            ));
        }
        obs.push(Observation {
            y0,
            d,
            x: alloc::vec![x1, x2],
        });
    }
    match grid {
        None => Sample::with_support(
            obs,
            1,
            alloc::vec![DiscreteTuple::new(&[0.0]), DiscreteTuple::new(&[1.0])],
        ),
        Some(pts) => {
            let support = support_points(&pts)
                .iter()
                .map(|x| DiscreteTuple::new(x))
                .collect();
            Sample::with_support(obs, 0, support)
        }
    }
}

fn support_points(x1: &[f64]) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(2 * x1.len());
    for &a in x1 {
        for b in [0.0, 1.0] {
            out.push([a, b]);
        }
    }
    out
}

/// Simulated conditional distributions at every support point.
///
/// Each point has two independent blocks of draws: block A plays the role of
/// observation `i` (through `Y1`), block B the role of `j` (through `Y0`).
/// Every point reuses the same two latent streams, so points with equal index
/// and censoring law get identical outcome draws.
#[derive(Debug, Clone)]
pub struct PopulationTable {
    pub points: Vec<[f64; 2]>,
    pub draws: usize,
    /// Block A: sorted log durations of uncensored draws.
    a_events: Vec<Vec<f64>>,
    /// Block A: number of censored draws.
    a_censored: Vec<usize>,
    /// Block A: sorted log durations of all draws.
    a_all: Vec<Vec<f64>>,
    /// Block B: sorted log durations of all draws.
    b_all: Vec<Vec<f64>>,
    /// `P̂(Y1i >= Y0j | x_s, x_t)`, row-major over support points.
    pair: Vec<f64>,
}

/// Simulates the table for a design with discrete `X1`.
pub fn population_table(spec: &DgpSpec, draws_per_point: usize) -> Result<PopulationTable> {
    spec.validate()?;
    let Some(x1) = spec.x1.points() else {
        return Err(invalid!(
            "population bounds need a discrete X1 support; use a grid law instead of a normal one"
        ));
    };
    if draws_per_point == 0 {
        return Err(invalid!("draws_per_point must be positive"));
    }
    let points = support_points(&x1);
    let blocks = par_map(&points, |_, x| {
        let mut ra = stream_rng(spec.seed, 1);
        let mut rb = stream_rng(spec.seed, 2);
        let mut events = Vec::with_capacity(draws_per_point);
        let mut own = Vec::with_capacity(draws_per_point);
        for _ in 0..draws_per_point {
            let (ly, d) = spec.draw(&mut ra, x[0], x[1]);
            if d {
                events.push(ly);
            }
            own.push(ly);
        }
        let mut all: Vec<f64> = (0..draws_per_point)
            .map(|_| spec.draw(&mut rb, x[0], x[1]).0)
            .collect();
        events.sort_by(f64::total_cmp);
        own.sort_by(f64::total_cmp);
        all.sort_by(f64::total_cmp);
        (events, own, all)
    });
    let mut a_events = Vec::new();
    let mut a_censored = Vec::new();
    let mut a_all = Vec::new();
    let mut b_all = Vec::new();
    for (e, own, b) in blocks {
        a_censored.push(draws_per_point - e.len());
        a_events.push(e);
        a_all.push(own);
        b_all.push(b);
    }
    let s = points.len();
    let n = draws_per_point as f64;
    let rows = par_map(&points, |si, _| {
        (0..s)
            .map(|t| {
                // #{(a, b): Y1a >= Y0b} = censored_a * N + Σ_{a uncensored} #{b : Y0b <= Y0a}
                let b = &b_all[t];
                let mut k = 0usize;
                let mut count = 0usize;
                for &ya in &a_events[si] {
                    while k < b.len() && b[k] <= ya {
                        k += 1;
                    }
                    count += k;
                }
                (a_censored[si] as f64 * n + count as f64) / (n * n)
            })
            .collect::<Vec<f64>>()
    });
    Ok(PopulationTable {
        points,
        draws: draws_per_point,
        a_events,
        a_censored,
        a_all,
        b_all,
        pair: rows.concat(),
    })
}

impl PopulationTable {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// `P̂(Y1i >= Y0j | x_s, x_t)`.
    pub fn pair_prob(&self, s: usize, t: usize) -> f64 {
        self.pair[s * self.len() + t]
    }

    /// `P̂(Y1 >= c | x_s)` from block A: `P̂(D = 0) + P̂(D = 1, Y0 >= c)`.
    pub fn p_y1_ge(&self, s: usize, c: f64) -> f64 {
        let lc = math::ln(c);
        let ev = &self.a_events[s];
        let below = ev.partition_point(|&v| v < lc);
        (self.a_censored[s] + ev.len() - below) as f64 / self.draws as f64
    }

    /// `P̂(Y0 >= c | x_s)` from block B.
    pub fn p_y0_ge(&self, s: usize, c: f64) -> f64 {
        let lc = math::ln(c);
        let all = &self.b_all[s];
        (all.len() - all.partition_point(|&v| v < lc)) as f64 / self.draws as f64
    }

    /// `P̂(Y0 >= c | x_s)` from block A, comparable with [`Self::p_y1_ge`].
    pub fn p_y0_ge_same_block(&self, s: usize, c: f64) -> f64 {
        let lc = math::ln(c);
        let all = &self.a_all[s];
        (all.len() - all.partition_point(|&v| v < lc)) as f64 / self.draws as f64
    }

    /// Censoring rate of block A at support point `s`.
    pub fn censoring_rate(&self, s: usize) -> f64 {
        self.a_censored[s] as f64 / self.draws as f64
    }

    fn index(&self, s: usize, beta: &[f64]) -> f64 {
        beta[0] * self.points[s][0] + beta[1] * self.points[s][1]
    }
}

/// Default tolerance on the `1/2` threshold: twice an upper bound on the
/// standard error of the two-block pairwise estimator, `2 (0.5/N)^{1/2}`.
pub fn default_tolerance(draws: usize) -> f64 {
    2.0 * math::sqrt(0.5 / draws as f64)
}

/// Lower envelope of the transformation-function bound at one `y`.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EnvelopePoint {
    pub y: f64,
    /// Infimum of `T_{B_I}(y)`: the bound set is the open half-line above
    /// it. `None` when the set is unbounded below or `B_I` is empty.
    pub lower: Option<f64>,
    /// Some member of `B_I` leaves `t` unconstrained.
    pub unbounded_below: bool,
    /// Smallest grid `t` inside the bound set (`None` when the grid has none).
    pub grid_lower: Option<f64>,
    /// True normalised value at `y` for simulated designs.
    pub truth: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct BoundResult {
    /// Grid β points and their membership in `B_I`.
    pub betas: Vec<Vec<f64>>,
    pub member: Vec<bool>,
    /// Hull of member values per free β coordinate.
    pub projections: Vec<Option<Interval>>,
    /// Every grid point is a member: the support carries no information.
    pub uninformative: bool,
    pub tolerance: f64,
    pub y_tilde: Option<f64>,
    pub envelope: Vec<EnvelopePoint>,
}

impl BoundResult {
    pub fn members(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.betas
            .iter()
            .zip(&self.member)
            .filter(|(_, &m)| m)
            .map(|(b, _)| b)
    }
}

/// Membership of every grid β in
/// `B_I = {β : P(Y1i >= Y0j | x_i, x_j) >= 1/2 whenever x_i'β >= x_j'β}`.
pub fn compute_bi(
    table: &PopulationTable,
    grid: &ParamGrid,
    tolerance: f64,
) -> Result<BoundResult> {
    grid.validate()?;
    if grid.k() != 2 {
        return Err(Error::DimensionMismatch {
            expected: 2,
            got: grid.k(),
        });
    }
    if !(tolerance >= 0.0) {
        return Err(invalid!("tolerance must be nonnegative"));
    }
    let betas = grid.beta_points();
    let s = table.len();
    let member = par_map(&betas, |_, beta| {
        let idx: Vec<f64> = (0..s).map(|i| table.index(i, beta)).collect();
        (0..s).all(|i| {
            (0..s).all(|j| idx[i] < idx[j] - INDEX_TIE || table.pair_prob(i, j) >= 0.5 - tolerance)
        })
    });
    let mut projections = Vec::new();
    for (c, axis) in grid.free.iter().enumerate() {
        let vals = betas
            .iter()
            .zip(&member)
            .filter(|(_, &m)| m)
            .map(|(b, _)| b[c + 1]);
        let (lo, hi) = vals.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
            (lo.min(v), hi.max(v))
        });
        projections.push((lo <= hi).then(|| Interval {
            lo,
            hi,
            unbounded_below: lo <= axis.lo + 1e-9 * axis.step,
            unbounded_above: hi >= axis.last() - 1e-9 * axis.step,
        }));
    }
    Ok(BoundResult {
        uninformative: member.iter().all(|&m| m),
        betas,
        member,
        projections,
        tolerance,
        y_tilde: None,
        envelope: Vec::new(),
    })
}

/// Lower envelope of `T_{B_I}(y) = ∪_{β ∈ B_I} T_{I,β}(y)` at every `y`.
///
/// `t ∈ T_{I,β}(y)` iff every support pair with `x_i'β − x_j'β >= t`
/// satisfies `P̂(Y1 >= y | x_i) >= P̂(Y0 >= y_tilde | x_j)` (up to the bound's
/// tolerance, both sides from block A), so `T_{I,β}(y)` is the open half-line above the largest index
/// gap among violating pairs.
pub fn compute_tbi(
    table: &PopulationTable,
    bound: &BoundResult,
    spec: Option<&DgpSpec>,
    y_grid: &[f64],
    t_grid: &Axis,
    y_tilde: f64,
) -> Result<BoundResult> {
    t_grid.validate()?;
    if !(y_tilde > 0.0 && y_tilde.is_finite())
        || y_grid.iter().any(|&y| !(y > 0.0 && y.is_finite()))
    {
        return Err(invalid!(
            "durations in the y grid and y_tilde must be positive"
        ));
    }
    let s = table.len();
    let tol = bound.tolerance;
    let members: Vec<&Vec<f64>> = bound.members().collect();
    let p0: Vec<f64> = (0..s)
        .map(|j| table.p_y0_ge_same_block(j, y_tilde))
        .collect();
    let t_values = t_grid.values();
    let envelope = par_map(y_grid, |_, &y| {
        let p1: Vec<f64> = (0..s).map(|i| table.p_y1_ge(i, y)).collect();
        // -inf when some member leaves t unconstrained
        let mut lower = f64::INFINITY;
        for beta in &members {
            let idx: Vec<f64> = (0..s).map(|i| table.index(i, beta)).collect();
            let mut worst = f64::NEG_INFINITY;
            for i in 0..s {
                for j in 0..s {
                    if p1[i] < p0[j] - tol {
                        worst = worst.max(idx[i] - idx[j]);
                    }
                }
            }
            lower = lower.min(worst);
            if lower == f64::NEG_INFINITY {
                break;
            }
        }
        let grid_lower = if lower == f64::NEG_INFINITY {
            t_values.first().copied()
        } else {
            t_values.iter().copied().find(|&t| t > lower + INDEX_TIE)
        };
        EnvelopePoint {
            y,
            lower: lower.is_finite().then_some(lower),
            unbounded_below: lower == f64::NEG_INFINITY,
            grid_lower,
            truth: spec.map(|sp| sp.true_transformation(y, y_tilde)),
        }
    });
    let mut out = bound.clone();
    out.y_tilde = Some(y_tilde);
    out.envelope = envelope;
    Ok(out)
}

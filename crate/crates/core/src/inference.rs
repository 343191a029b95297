//! Moment-inequality tests: the weighted statistic, moment selection, and the
//! simulated Gaussian critical value.

use alloc::vec::Vec;

use crate::data::{Beta, TransformedSample};
use crate::engine::{active_instruments, MomentSystem};
use crate::error::{invalid, Error, Result};
use crate::instruments::{CellAssignment, InstrumentFamily, InstrumentMode};
use crate::kernel::{projections, DurationOrder, PairKernel};
use crate::linalg::PsdFactor;
use crate::math;
use crate::rng::standard_normals;
use crate::ustat::{self, AllPairs, PairIndicator};

/// How a GMS tuning constant is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "rule", rename_all = "snake_case"))]
pub enum TuningRule {
    /// The closed-form default times `scale`.
    Default {
        scale: f64,
    },
    /// For `κ_n`: `(0.6 ln n)^{1/2}` times `scale`, ignoring the censoring rate.
    /// For `B_n` this is the same as `Default`.
    Uncensored {
        scale: f64,
    },
    Fixed {
        value: f64,
    },
}

impl TuningRule {
    pub const DEFAULT: TuningRule = TuningRule::Default { scale: 1.0 };
}

/// Whether grid points share the standard normal draws behind the critical
/// value.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum DrawMode {
    /// Every test uses stream 0 of the seed.
    Common,
    /// Test number `s` uses stream `s + 1`.
    Fresh,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct TuningParams {
    /// Truncation level `R` of the instrument family.
    pub r_max: u32,
    pub epsilon: f64,
    pub alpha: f64,
    pub eta: f64,
    pub n_reps: usize,
    pub seed: u64,
    pub bn_rule: TuningRule,
    pub kappan_rule: TuningRule,
    pub draw_mode: DrawMode,
    pub mode: InstrumentMode,
    /// Largest number of simultaneously simulated moments.
    pub max_moments: usize,
    /// Keep per-instrument diagnostics in every outcome.
    pub keep_diagnostics: bool,
}

impl Default for TuningParams {
    fn default() -> Self {
        TuningParams {
            r_max: 5,
            epsilon: 1e-4,
            alpha: 0.05,
            eta: 1e-6,
            n_reps: 1000,
            seed: 0,
            bn_rule: TuningRule::DEFAULT,
            kappan_rule: TuningRule::DEFAULT,
            draw_mode: DrawMode::Common,
            mode: InstrumentMode::Mixed,
            max_moments: 4000,
            keep_diagnostics: false,
        }
    }
}

impl TuningParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 0.5) {
            return Err(invalid!("alpha must lie in (0, 1/2), got {}", self.alpha));
        }
        if !(self.eta > 0.0 && self.eta < self.alpha) {
            return Err(invalid!("eta must lie in (0, alpha), got {}", self.eta));
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(invalid!("epsilon must be positive, got {}", self.epsilon));
        }
        if self.r_max < 1 {
            return Err(invalid!("R must be at least 1"));
        }
        if self.n_reps < 100 {
            return Err(invalid!("n_reps must be at least 100, got {}", self.n_reps));
        }
        for (name, rule) in [("bn_rule", self.bn_rule), ("kappan_rule", self.kappan_rule)] {
            let v = match rule {
                TuningRule::Default { scale } | TuningRule::Uncensored { scale } => scale,
                TuningRule::Fixed { value } => value,
            };
            if !(v > 0.0 && v.is_finite()) {
                return Err(invalid!("{name} must be positive and finite"));
            }
        }
        Ok(())
    }

    /// `(B_n, κ_n)` for a sample of size `n` with censoring rate `rate`.
    pub fn resolve(&self, n: usize, rate: f64) -> Result<(f64, f64)> {
        let needs_default = |r: TuningRule| !matches!(r, TuningRule::Fixed { .. });
        let (bd, kd) = if needs_default(self.bn_rule) || needs_default(self.kappan_rule) {
            default_tuning(n, rate)?
        } else {
            (0.0, 0.0)
        };
        let bn = match self.bn_rule {
            TuningRule::Default { scale } | TuningRule::Uncensored { scale } => bd * scale,
            TuningRule::Fixed { value } => value,
        };
        let kn = match self.kappan_rule {
            TuningRule::Default { scale } => kd * scale,
            TuningRule::Uncensored { scale } => math::sqrt(0.6 * math::ln(n as f64)) * scale,
            TuningRule::Fixed { value } => value,
        };
        Ok((bn, kn))
    }
}

/// `B_n = (0.8 ln n / ln ln n)^{1/2}` and
/// `κ_n = ((1 − p̂^{1/3})^{2/5} 0.6 ln n)^{1/2}`.
///
/// Requires `n > 15` so that `ln ln n > 0`.
pub fn default_tuning(n: usize, censor_rate: f64) -> Result<(f64, f64)> {
    if n <= 15 {
        return Err(Error::SmallSampleTuning(n));
    }
    if !(0.0..1.0).contains(&censor_rate) {
        return Err(invalid!(
            "censoring rate must lie in [0, 1), got {censor_rate}"
        ));
    }
    let ln = math::ln(n as f64);
    let bn = math::sqrt(0.8 * ln / math::ln(ln));
    let shrink = math::powf(1.0 - math::powf(censor_rate, 1.0 / 3.0), 0.4);
    let kn = math::sqrt(shrink * 0.6 * ln);
    Ok((bn, kn))
}

/// Per-moment detail kept when `keep_diagnostics` is set.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentDiagnostic {
    /// 0 for the β-moment, `l` for the `l`-th transformation moment.
    pub block: usize,
    pub instrument: usize,
    pub mean: f64,
    pub sigma_bar: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Diagnostics {
    /// Moments with at least one contributing pair.
    pub moments: usize,
    /// Moments dropped because `σ̄ = 0`.
    pub dropped: usize,
    /// Moments with a negative sample mean.
    pub violated: usize,
    /// Moments whose GMS shift is positive.
    pub selected: usize,
    /// Rank of the clipped covariance used for simulation.
    pub rank: usize,
    /// Total magnitude of negative eigenvalues removed by clipping.
    pub clipped: f64,
    pub bn: f64,
    pub kappan: f64,
    #[cfg_attr(
        feature = "serde",
        serde(skip_serializing_if = "Vec::is_empty", default)
    )]
    pub detail: Vec<MomentDiagnostic>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestOutcome {
    pub statistic: f64,
    /// `None` when the statistic is zero and the simulation was skipped: a zero
    /// statistic never exceeds a nonnegative critical value.
    pub critical_value: Option<f64>,
    pub reject: bool,
    pub seed: u64,
    pub stream: u64,
    pub diagnostics: Diagnostics,
}

/// One moment entering the statistic.
#[derive(Debug, Clone, Copy)]
struct Term {
    block: usize,
    instrument: usize,
    weight: f64,
    sigma_bar: f64,
    phi: f64,
}

/// A test prepared for one sample: instrument family, cell assignment,
/// duration comparisons and tuning constants are computed once and reused
/// across parameter values.
pub struct MiTest<'a> {
    sample: &'a TransformedSample,
    family: InstrumentFamily,
    cells: CellAssignment,
    order: DurationOrder,
    active: Vec<usize>,
    weights: Vec<f64>,
    tuning: TuningParams,
    bn: f64,
    kappan: f64,
}

impl<'a> MiTest<'a> {
    pub fn new(sample: &'a TransformedSample, tuning: &TuningParams) -> Result<Self> {
        let family = InstrumentFamily::for_sample(tuning.mode, tuning.r_max, sample.sample())?;
        Self::with_family(sample, family, tuning)
    }

    pub fn with_family(
        sample: &'a TransformedSample,
        family: InstrumentFamily,
        tuning: &TuningParams,
    ) -> Result<Self> {
        tuning.validate()?;
        let n = sample.n();
        if n < 3 {
            return Err(Error::TooFewObservations {
                required: 3,
                got: n,
            });
        }
        let (bn, kappan) = tuning.resolve(n, sample.sample().censoring_rate())?;
        let cells = family.assign(sample);
        let active: Vec<usize> = active_instruments(&family, &cells, n)
            .iter()
            .enumerate()
            .filter_map(|(g, &a)| a.then_some(g))
            .collect();
        if active.len() > tuning.max_moments {
            return Err(Error::TooManyInstruments {
                count: active.len(),
                cap: tuning.max_moments,
            });
        }
        let weights = family.weights();
        Ok(MiTest {
            sample,
            order: DurationOrder::new(sample.observations()),
            family,
            cells,
            active,
            weights,
            tuning: tuning.clone(),
            bn,
            kappan,
        })
    }

    pub fn family(&self) -> &InstrumentFamily {
        &self.family
    }

    pub fn tuning(&self) -> &TuningParams {
        &self.tuning
    }

    /// `(B_n, κ_n)` in use.
    pub fn gms_constants(&self) -> (f64, f64) {
        (self.bn, self.kappan)
    }

    /// Instruments with at least one contributing pair.
    pub fn active_count(&self) -> usize {
        self.active.len()
    }

    /// Kernel blocks for `β` and, for the joint hypothesis, `(y_l, t_l)`.
    pub fn kernels(
        &self,
        beta: &Beta,
        ys: &[f64],
        ts: &[f64],
        y_tilde: f64,
    ) -> Result<Vec<PairKernel>> {
        if ys.len() != ts.len() {
            return Err(Error::DimensionMismatch {
                expected: ys.len(),
                got: ts.len(),
            });
        }
        let obs = self.sample.observations();
        let proj = projections(obs, beta)?;
        let mut out = Vec::with_capacity(1 + ys.len());
        out.push(PairKernel::beta_moment(&self.order, &proj));
        for (&y, &t) in ys.iter().zip(ts) {
            out.push(PairKernel::transformation_moment(obs, &proj, y, t, y_tilde));
        }
        Ok(out)
    }

    /// Test of `β` alone.
    pub fn test(&self, beta: &Beta, stream: u64) -> Result<TestOutcome> {
        self.evaluate(self.kernels(beta, &[], &[], 1.0)?, stream, false)
    }

    /// Joint test of `β` and `T(y_l) = t_l`.
    pub fn joint_test(
        &self,
        beta: &Beta,
        ys: &[f64],
        ts: &[f64],
        y_tilde: f64,
        stream: u64,
    ) -> Result<TestOutcome> {
        self.evaluate(self.kernels(beta, ys, ts, y_tilde)?, stream, false)
    }

    fn terms(&self, system: &MomentSystem<'_>, keep: bool) -> (f64, Vec<Term>, Diagnostics) {
        let n = system.n();
        let sqrt_n = math::sqrt(n as f64);
        let eps = self.tuning.epsilon;
        let mut stat = 0.0;
        let mut terms = Vec::with_capacity(self.active.len() * system.n_blocks());
        let mut diag = Diagnostics {
            bn: self.bn,
            kappan: self.kappan,
            ..Diagnostics::default()
        };
        for b in 0..system.n_blocks() {
            let overall = system.overall_variance(b).max(0.0);
            for &g in &self.active {
                diag.moments += 1;
                let mean = system.mean(b, g);
                let sigma2 = system.variance(b, g).max(0.0) + eps * overall;
                if mean < 0.0 {
                    diag.violated += 1;
                }
                if !(sigma2 > 0.0) {
                    diag.dropped += 1;
                    continue;
                }
                let sigma_bar = math::sqrt(sigma2);
                let w = self.weights[g];
                let z = sqrt_n * mean / sigma_bar;
                stat += statistic_term(n, mean, sigma_bar, w);
                let phi = gms_value(z, overall, self.bn, self.kappan);
                if phi > 0.0 {
                    diag.selected += 1;
                }
                if keep {
                    diag.detail.push(MomentDiagnostic {
                        block: b,
                        instrument: g,
                        mean,
                        sigma_bar,
                        selected: phi > 0.0,
                    });
                }
                terms.push(Term {
                    block: b,
                    instrument: g,
                    weight: w,
                    sigma_bar,
                    phi,
                });
            }
        }
        (stat, terms, diag)
    }

    /// Statistic and (unless `skip_if_zero` applies) critical value for the
    /// given kernel blocks.
    pub fn evaluate(
        &self,
        kernels: Vec<PairKernel>,
        stream: u64,
        skip_if_zero: bool,
    ) -> Result<TestOutcome> {
        let system = MomentSystem::new(&self.family, &self.cells, kernels);
        let (statistic, terms, mut diagnostics) = self.terms(&system, self.tuning.keep_diagnostics);
        let draw_stream = match self.tuning.draw_mode {
            DrawMode::Common => 0,
            DrawMode::Fresh => stream + 1,
        };
        let mut outcome = TestOutcome {
            statistic,
            critical_value: None,
            reject: false,
            seed: self.tuning.seed,
            stream: draw_stream,
            diagnostics: Diagnostics::default(),
        };
        if !(skip_if_zero && statistic == 0.0) {
            let (cv, rank, clipped) = self.critical_value(&system, &terms, draw_stream)?;
            diagnostics.rank = rank;
            diagnostics.clipped = clipped;
            outcome.critical_value = Some(cv);
            outcome.reject = statistic > cv;
        }
        outcome.diagnostics = diagnostics;
        Ok(outcome)
    }

    fn critical_value(
        &self,
        system: &MomentSystem<'_>,
        terms: &[Term],
        stream: u64,
    ) -> Result<(f64, usize, f64)> {
        let sel: Vec<(usize, usize)> = terms.iter().map(|t| (t.block, t.instrument)).collect();
        let h = system.covariance(&sel);
        let factor = PsdFactor::new(&h, sel.len())?;
        let reps = self.tuning.n_reps;
        let z = standard_normals(self.tuning.seed, stream, sel.len() * reps);
        let v = factor.transform(&z, reps);
        let draws = asymptotic_draws(
            &v,
            reps,
            terms.iter().map(|t| (t.weight, t.phi, t.sigma_bar)),
        );
        let cv = order_statistic(draws, self.tuning.alpha, self.tuning.eta);
        Ok((cv, factor.rank(), factor.clipped))
    }
}

/// `Σ_g w [(v_g + φ_g)/σ̄_g]_-²` for each draw; `v` holds `reps` blocks of one
/// value per moment.
fn asymptotic_draws(
    v: &[f64],
    reps: usize,
    terms: impl Iterator<Item = (f64, f64, f64)> + Clone,
) -> Vec<f64> {
    let d = v.len().checked_div(reps).unwrap_or(0);
    (0..reps)
        .map(|r| {
            let row = &v[r * d..(r + 1) * d];
            row.iter()
                .zip(terms.clone())
                .map(|(&x, (w, phi, s))| {
                    let neg = math::neg_part((x + phi) / s);
                    w * neg * neg
                })
                .sum()
        })
        .collect()
}

/// Order statistic `⌈reps (1 − α + η)⌉` (1-based) of the ascending draws.
pub fn order_statistic(mut draws: Vec<f64>, alpha: f64, eta: f64) -> f64 {
    let reps = draws.len();
    assert!(reps > 0, "no draws");
    draws.sort_by(|a, b| a.total_cmp(b));
    let k = math::ceil(reps as f64 * (1.0 - alpha + eta)) as usize;
    draws[k.clamp(1, reps) - 1]
}

/// One term `w [√n m̄/σ̄]_-²` of the test statistic.
#[inline]
pub fn statistic_term(n: usize, mean: f64, sigma_bar: f64, weight: f64) -> f64 {
    let neg = math::neg_part(math::sqrt(n as f64) * mean / sigma_bar);
    weight * neg * neg
}

/// Draws of `Σ_g w_g [(v_g + φ_g)/σ̄_g]_-²` with `v ~ N(0, h)`, where `h` is
/// row-major `d x d` and clipped to its PSD part.
pub fn simulate_asymptotic_draws(
    h: &[f64],
    weights: &[f64],
    phi: &[f64],
    sigma_bar: &[f64],
    n_reps: usize,
    seed: u64,
    stream: u64,
) -> Result<Vec<f64>> {
    let d = weights.len();
    if h.len() != d * d || phi.len() != d || sigma_bar.len() != d {
        return Err(invalid!("critical value inputs have inconsistent lengths"));
    }
    let factor = PsdFactor::new(h, d)?;
    let z = standard_normals(seed, stream, d * n_reps);
    let v = factor.transform(&z, n_reps);
    let terms = weights
        .iter()
        .zip(phi)
        .zip(sigma_bar)
        .map(|((&w, &p), &s)| (w, p, s));
    Ok(asymptotic_draws(&v, n_reps, terms))
}

/// Critical value from explicit pieces (see [`simulate_asymptotic_draws`]).
pub fn critical_value_from_parts(
    h: &[f64],
    weights: &[f64],
    phi: &[f64],
    sigma_bar: &[f64],
    tuning: &TuningParams,
    stream: u64,
) -> Result<f64> {
    let draws = simulate_asymptotic_draws(
        h,
        weights,
        phi,
        sigma_bar,
        tuning.n_reps,
        tuning.seed,
        stream,
    )?;
    Ok(order_statistic(draws, tuning.alpha, tuning.eta))
}

/// `φ = σ̂²(1) B_n` when `κ_n^{-1} z > 1`, where `z = √n m̄/σ̄`, else 0.
#[inline]
fn gms_value(z: f64, overall_variance: f64, bn: f64, kappan: f64) -> f64 {
    if z / kappan > 1.0 {
        overall_variance * bn
    } else {
        0.0
    }
}

/// GMS shift of the β-moment for one instrument.
pub fn gms_shift<G: PairIndicator + ?Sized>(
    sample: &TransformedSample,
    beta: &Beta,
    g: &G,
    bn: f64,
    kappan: f64,
    epsilon: f64,
) -> Result<f64> {
    let mean = ustat::mbar(sample, beta, g)?;
    let sigma2 = ustat::sigma_bar2(sample, beta, g, epsilon)?;
    if !(sigma2 > 0.0) {
        return Ok(0.0);
    }
    let overall = ustat::h2hat(sample, beta, &AllPairs, &AllPairs)?.max(0.0);
    let z = math::sqrt(sample.n() as f64) * mean / math::sqrt(sigma2);
    Ok(gms_value(z, overall, bn, kappan))
}

fn statistic_only(
    sample: &TransformedSample,
    family: &InstrumentFamily,
    epsilon: f64,
    build: impl FnOnce(&MiTest<'_>) -> Result<Vec<PairKernel>>,
) -> Result<f64> {
    let tuning = TuningParams {
        epsilon,
        r_max: family.r_max(),
        mode: family.mode(),
        bn_rule: TuningRule::Fixed { value: 1.0 },
        kappan_rule: TuningRule::Fixed { value: 1.0 },
        max_moments: usize::MAX,
        ..TuningParams::default()
    };
    let t = MiTest::with_family(sample, family.clone(), &tuning)?;
    let system = MomentSystem::new(&t.family, &t.cells, build(&t)?);
    Ok(t.terms(&system, false).0)
}

/// `T_{n,R}(β) = Σ_g w(g) [√n m̄(β,g)/σ̄(β,g)]_-²`.
pub fn test_statistic(
    sample: &TransformedSample,
    beta: &Beta,
    family: &InstrumentFamily,
    epsilon: f64,
) -> Result<f64> {
    statistic_only(sample, family, epsilon, |t| t.kernels(beta, &[], &[], 1.0))
}

/// The joint statistic for `β` and `T(y_l) = t_l`, `l = 1..q`.
pub fn joint_test_statistic(
    sample: &TransformedSample,
    beta: &Beta,
    y_grid: &[f64],
    t_vector: &[f64],
    y_tilde: f64,
    family: &InstrumentFamily,
    epsilon: f64,
) -> Result<f64> {
    statistic_only(sample, family, epsilon, |t| {
        t.kernels(beta, y_grid, t_vector, y_tilde)
    })
}

/// Simulated critical value of the β test (always simulated).
pub fn simulate_critical_value(
    sample: &TransformedSample,
    beta: &Beta,
    family: &InstrumentFamily,
    tuning: &TuningParams,
) -> Result<f64> {
    let t = MiTest::with_family(sample, family.clone(), tuning)?;
    let out = t.test(beta, 0)?;
    Ok(out.critical_value.expect("simulation is not skipped"))
}

/// Test of `H0: β0 = β`.
pub fn point_test(
    sample: &TransformedSample,
    beta: &Beta,
    tuning: &TuningParams,
) -> Result<TestOutcome> {
    MiTest::new(sample, tuning)?.test(beta, 0)
}

/// Test of `H0: β0 = β, T(y_l) = t_l` for all `l`.
pub fn joint_point_test(
    sample: &TransformedSample,
    beta: &Beta,
    y_grid: &[f64],
    t_vector: &[f64],
    y_tilde: f64,
    tuning: &TuningParams,
) -> Result<TestOutcome> {
    MiTest::new(sample, tuning)?.joint_test(beta, y_grid, t_vector, y_tilde, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tuning_values() {
        let (b, k) = default_tuning(250, 0.16).unwrap();
        // mpmath at 30 digits
        assert!((b - 1.607_853_200_378_644_3).abs() < 1e-13, "{b}");
        assert!((k - 1.556_352_621_581_020_4).abs() < 1e-13, "{k}");
        let (_, k0) = default_tuning(250, 0.0).unwrap();
        assert!((k0 - (0.6 * 250f64.ln()).sqrt()).abs() < 1e-15);
        assert!(default_tuning(16, 0.1).is_ok());
        assert_eq!(default_tuning(15, 0.1), Err(Error::SmallSampleTuning(15)));
    }

    #[test]
    fn gms_boundary_is_strict() {
        assert_eq!(gms_value(1.5, 0.04, 1.6, 1.5), 0.0);
        assert!((gms_value(3.0, 0.04, 1.6, 1.5) - 0.064).abs() < 1e-15);
        assert_eq!(gms_value(-3.0, 0.04, 1.6, 1.5), 0.0);
    }

    #[test]
    fn order_statistic_index() {
        let draws: Vec<f64> = (1..=1000).map(|v| v as f64).collect();
        assert_eq!(order_statistic(draws, 0.05, 1e-6), 951.0);
        let draws: Vec<f64> = (1..=100).rev().map(|v| v as f64).collect();
        assert_eq!(order_statistic(draws, 0.05, 1e-6), 96.0);
    }

    #[test]
    fn tuning_validation() {
        let mut t = TuningParams::default();
        assert!(t.validate().is_ok());
        t.alpha = 0.5;
        assert!(t.validate().is_err());
        t = TuningParams {
            eta: 0.1,
            ..TuningParams::default()
        };
        assert!(t.validate().is_err());
        t = TuningParams {
            n_reps: 50,
            ..TuningParams::default()
        };
        assert!(t.validate().is_err());
    }
}

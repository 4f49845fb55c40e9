//! Root sequences `E^{[D,d]}` of `H_D^d(E) = 0` tracked over increasing `D`.
//!
//! Seeds come from a residual scan on a rectangular grid at a fixed dimension.
//! Each seed is polished by Newton's method on `log H` and then continued:
//! the root at `D` seeds the search at `D + 1`. Sequences that settle are the
//! physical energies; the rest are classified as stagnated or lost.

use std::collections::BTreeMap;

use log::{debug, trace};
use rug::Assign;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hankel::{self, HankelError, HankelEvaluation};
use crate::numerics::{BigComplex, NumericsError, PrecisionPolicy};
use crate::potential::PotentialModel;
use crate::series::{riccati_coefficients, SeriesRequest};

pub const MAX_NEWTON_ITERATIONS: usize = 60;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("Newton iteration did not converge after {iterations} iterations (last step {last_step:e})")]
    NoConvergence { iterations: usize, last_step: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
    #[error(transparent)]
    Hankel(#[from] HankelError),
    #[error("trace has {0} recorded dimensions; at least 3 are needed")]
    TooShort(usize),
    #[error("invalid search region: {0}")]
    InvalidRegion(String),
    #[error("invalid dimension range {min}..={max} (minimum must be at least 2)")]
    InvalidRange { min: usize, max: usize },
}

/// Rectangle of the complex energy plane and its scan resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchRegion {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
    pub grid_re: usize,
    pub grid_im: usize,
}

impl Default for SearchRegion {
    /// Covers the resonances of the `7.5 r² e^{-r} - 1/r` model up to `Re E = 8`.
    fn default() -> Self {
        SearchRegion {
            re_min: 0.0,
            re_max: 8.0,
            im_min: -4.0,
            im_max: 0.0,
            grid_re: 60,
            grid_im: 30,
        }
    }
}

impl SearchRegion {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.re_min < self.re_max) || !(self.im_min < self.im_max) {
            return Err(SolverError::InvalidRegion(format!(
                "need re_min < re_max and im_min < im_max, got [{}, {}] x [{}, {}]",
                self.re_min, self.re_max, self.im_min, self.im_max
            )));
        }
        if self.grid_re < 4 || self.grid_im < 4 {
            return Err(SolverError::InvalidRegion(format!(
                "grid must have at least 4 points per axis, got {}x{}",
                self.grid_re, self.grid_im
            )));
        }
        Ok(())
    }

    fn point(&self, i: usize, j: usize) -> (f64, f64) {
        let re = self.re_min + (self.re_max - self.re_min) * i as f64 / (self.grid_re - 1) as f64;
        let im = self.im_min + (self.im_max - self.im_min) * j as f64 / (self.grid_im - 1) as f64;
        (re, im)
    }

    fn spacing(&self) -> f64 {
        let dre = (self.re_max - self.re_min) / (self.grid_re - 1) as f64;
        let dim = (self.im_max - self.im_min) / (self.grid_im - 1) as f64;
        dre.max(dim)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceStatus {
    Converging,
    Converged,
    Stagnated,
    Lost,
}

impl TraceStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceStatus::Converging => "converging",
            TraceStatus::Converged => "converged",
            TraceStatus::Stagnated => "stagnated",
            TraceStatus::Lost => "lost",
        }
    }
}

/// One root sequence over a contiguous range of Hankel dimensions.
#[derive(Debug, Clone)]
pub struct ResonanceTrace {
    pub l: u32,
    pub d: usize,
    /// Ordering label among converged traces of the same `(l, d)`.
    pub nu: Option<usize>,
    pub roots: BTreeMap<usize, BigComplex>,
    pub best: BigComplex,
    pub best_uncertainty: f64,
    pub status: TraceStatus,
    pub digits_used: u32,
    /// Newton ran out of precision while extending this trace.
    pub precision_exhausted: bool,
}

impl ResonanceTrace {
    pub fn new(l: u32, d: usize, dimension: usize, root: BigComplex) -> Self {
        let digits_used = root.digits();
        let mut roots = BTreeMap::new();
        roots.insert(dimension, root.clone());
        ResonanceTrace {
            l,
            d,
            nu: None,
            roots,
            best: root,
            best_uncertainty: f64::INFINITY,
            status: TraceStatus::Converging,
            digits_used,
            precision_exhausted: false,
        }
    }

    pub fn last_dimension(&self) -> usize {
        *self.roots.keys().next_back().expect("trace has at least one root")
    }

    pub fn last_root(&self) -> &BigComplex {
        self.roots.values().next_back().expect("trace has at least one root")
    }

    /// `|E^{[D]} - E^{[D-1]}|` for every recorded `D` after the first.
    pub fn steps(&self) -> Vec<(usize, f64)> {
        let pairs: Vec<_> = self.roots.iter().collect();
        pairs
            .windows(2)
            .map(|w| (*w[1].0, w[1].1.sub_ref(w[0].1).abs_f64()))
            .collect()
    }

    fn l_component(&self, part: impl Fn(&BigComplex) -> &rug::Float) -> BTreeMap<usize, f64> {
        let pairs: Vec<_> = self.roots.iter().collect();
        pairs
            .windows(2)
            .map(|w| {
                let a = part(w[0].1);
                let b = part(w[1].1);
                let diff = rug::Float::with_val(a.prec().max(b.prec()), a - b);
                let value = if diff.is_zero() {
                    f64::NEG_INFINITY
                } else {
                    diff.abs().log10().to_f64()
                };
                (*w[0].0, value)
            })
            .collect()
    }

    /// `L_D = log10 |Re E^{[D]} - Re E^{[D+1]}|`, `-inf` where they coincide.
    pub fn l_re(&self) -> BTreeMap<usize, f64> {
        self.l_component(|z| &z.re)
    }

    /// `L_D` for the imaginary parts.
    pub fn l_im(&self) -> BTreeMap<usize, f64> {
        self.l_component(|z| &z.im)
    }

    /// Full width `Γ = 2 |Im E|`.
    pub fn gamma(&self) -> f64 {
        2.0 * self.best.im.to_f64().abs()
    }
}

/// A single `L_D` value, or the marker for identical consecutive roots.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LogDifference {
    Value(f64),
    Coincident,
}

impl LogDifference {
    fn from_f64(x: f64) -> Self {
        if x == f64::NEG_INFINITY {
            LogDifference::Coincident
        } else {
            LogDifference::Value(x)
        }
    }
}

impl std::fmt::Display for LogDifference {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LogDifference::Value(v) => write!(f, "{v:.6}"),
            LogDifference::Coincident => write!(f, "-inf"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub dimension: usize,
    pub l_re: LogDifference,
    pub l_im: LogDifference,
}

/// The `(D, L_re, L_im)` series behind a convergence-rate plot.
pub fn convergence_report(trace: &ResonanceTrace) -> Result<Vec<ConvergenceRow>, SolverError> {
    if trace.roots.len() < 3 {
        return Err(SolverError::TooShort(trace.roots.len()));
    }
    let re = trace.l_re();
    let im = trace.l_im();
    Ok(re
        .iter()
        .map(|(&dimension, &l_re)| ConvergenceRow {
            dimension,
            l_re: LogDifference::from_f64(l_re),
            l_im: LogDifference::from_f64(im[&dimension]),
        })
        .collect())
}

/// Least-squares slope of `ys` against `xs`.
pub fn least_squares_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

/// Stopping and classification parameters for root continuation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContinuationSettings {
    /// Converged once consecutive roots differ by at most this much.
    pub tol_target: f64,
    /// Number of consecutive steps that must meet `tol_target`.
    pub confirmations: usize,
    pub trend_window: usize,
    pub stagnation_window: usize,
    pub stagnation_slope: f64,
    /// A root moving farther than this between dimensions ends the trace.
    pub migration_limit: f64,
    /// Step cap for the first polish of a scan seed.
    pub initial_step_cap: f64,
}

impl Default for ContinuationSettings {
    fn default() -> Self {
        ContinuationSettings {
            tol_target: 1e-20,
            confirmations: 2,
            trend_window: 5,
            stagnation_window: 8,
            stagnation_slope: -0.05,
            migration_limit: 0.5,
            initial_step_cap: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NewtonOptions {
    /// Stop once `|step| < tol * max(1, |E|)`.
    pub tol: f64,
    pub max_iterations: usize,
    /// Largest step magnitude; longer Newton steps are shortened.
    pub max_step: Option<f64>,
}

impl NewtonOptions {
    pub fn with_tol(tol: f64) -> Self {
        NewtonOptions {
            tol,
            max_iterations: MAX_NEWTON_ITERATIONS,
            max_step: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct NewtonOutcome {
    pub root: BigComplex,
    pub iterations: usize,
    pub digits: u32,
    pub last_step: f64,
}

/// Result of evaluating `d/dE log g` at a trial point.
pub enum LogDerivative {
    /// `g(E) = 0` exactly.
    ExactRoot,
    Value(BigComplex),
    /// The evaluation lost too many digits at this precision.
    Singular,
}

/// Newton's method on `log g`, `E ← E - 1 / (g'/g)`.
///
/// `log_derivative(E, digits)` supplies `g'/g`. Near a cluster of `m` roots
/// the iteration converges linearly with ratio `1 - 1/m`; when the step ratio
/// settles the step is multiplied by the estimated `m`.
pub fn newton_on<F>(
    seed: &BigComplex,
    policy: &PrecisionPolicy,
    start_digits: u32,
    opts: &NewtonOptions,
    mut log_derivative: F,
) -> Result<NewtonOutcome, SolverError>
where
    F: FnMut(&BigComplex, u32) -> Result<LogDerivative, SolverError>,
{
    let mut digits = start_digits;
    let mut energy = seed.with_digits(digits);
    let mut total_iterations = 0;
    loop {
        let mut last_step = f64::INFINITY;
        let mut prev_ratio = f64::NAN;
        let mut best_step = f64::INFINITY;
        let mut since_best = 0;
        let mut escalate = false;
        for _ in 0..opts.max_iterations {
            total_iterations += 1;
            let q = match log_derivative(&energy, digits)? {
                LogDerivative::ExactRoot => {
                    return Ok(NewtonOutcome {
                        root: energy,
                        iterations: total_iterations,
                        digits,
                        last_step: 0.0,
                    })
                }
                LogDerivative::Singular => {
                    if last_step < opts.tol * energy.abs_f64().max(1.0) * 1e3 {
                        return Ok(NewtonOutcome {
                            root: energy,
                            iterations: total_iterations,
                            digits,
                            last_step,
                        });
                    }
                    escalate = true;
                    break;
                }
                LogDerivative::Value(q) => q,
            };
            if !q.is_finite() {
                return Ok(NewtonOutcome {
                    root: energy,
                    iterations: total_iterations,
                    digits,
                    last_step: 0.0,
                });
            }
            if q.is_zero() {
                return Err(SolverError::NoConvergence {
                    iterations: total_iterations,
                    last_step,
                });
            }
            let mut step = q.recip();
            let mut size = step.abs_f64();

            let ratio = size / last_step;
            if ratio > 0.3 && ratio < 0.98 && (ratio - prev_ratio).abs() < 0.03 {
                let multiplicity = (1.0 / (1.0 - ratio)).round().max(1.0);
                if multiplicity > 1.0 {
                    let m = BigComplex::from_f64(multiplicity, 0.0, digits);
                    step = step.mul_ref(&m);
                    size *= multiplicity;
                    trace!("newton: multiplicity estimate {multiplicity}");
                }
            }
            prev_ratio = ratio;

            if let Some(cap) = opts.max_step {
                if size > cap {
                    let scale = BigComplex::from_f64(cap / size, 0.0, digits);
                    step = step.mul_ref(&scale);
                    size = cap;
                }
            }
            energy = energy.sub_ref(&step);
            last_step = size;
            if size < opts.tol * energy.abs_f64().max(1.0) {
                return Ok(NewtonOutcome {
                    root: energy,
                    iterations: total_iterations,
                    digits,
                    last_step,
                });
            }
            if size < best_step * 0.9 {
                best_step = size;
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= 12 {
                    escalate = true;
                    break;
                }
            }
        }
        if !escalate {
            return Err(SolverError::NoConvergence {
                iterations: total_iterations,
                last_step,
            });
        }
        let next = policy.escalate(digits)?;
        debug!("newton: escalating precision {digits} -> {next} digits");
        digits = next;
        energy = energy.with_digits(digits);
    }
}

/// `H_D^d` and `H'/H` at `energy`, computed at `digits`.
pub fn evaluate_hankel(
    model: &PotentialModel,
    l: u32,
    d: usize,
    dimension: usize,
    energy: &BigComplex,
    digits: u32,
) -> Result<HankelEvaluation, HankelError> {
    let series = riccati_coefficients(&SeriesRequest {
        model,
        l,
        energy,
        order: hankel::required_order(dimension, d),
        digits,
        derivatives: true,
    });
    hankel::evaluate(&series, dimension, d)
}

/// Scale-free residual `log10(|H| / Π row norms)` at one energy.
pub fn log10_residual(
    model: &PotentialModel,
    l: u32,
    d: usize,
    dimension: usize,
    energy: &BigComplex,
    digits: u32,
) -> Result<f64, HankelError> {
    let series = riccati_coefficients(&SeriesRequest {
        model,
        l,
        energy,
        order: hankel::required_order(dimension, d),
        digits,
        derivatives: false,
    });
    hankel::log10_root_residual(&series, dimension, d)
}

/// Polish `seed` to a root of `H_D^d`, canonicalized to `Im E <= 0`.
pub fn newton_polish(
    model: &PotentialModel,
    l: u32,
    d: usize,
    dimension: usize,
    seed: &BigComplex,
    policy: &PrecisionPolicy,
    opts: &NewtonOptions,
) -> Result<NewtonOutcome, SolverError> {
    let start = policy.working_digits(dimension);
    let mut outcome = newton_on(seed, policy, start, opts, |e, digits| {
        match evaluate_hankel(model, l, d, dimension, e, digits) {
            Ok(HankelEvaluation { dlog: Some(q), .. }) => Ok(LogDerivative::Value(q)),
            Ok(HankelEvaluation { dlog: None, .. }) => Ok(LogDerivative::ExactRoot),
            Err(HankelError::SingularToPrecision { .. }) => Ok(LogDerivative::Singular),
            Err(e) => Err(e.into()),
        }
    })?;
    outcome.root = canonical_root(outcome.root, opts.tol);
    Ok(outcome)
}

/// Reflect into the lower half plane and flush imaginary parts below `tol`.
fn canonical_root(mut root: BigComplex, tol: f64) -> BigComplex {
    if root.im.is_sign_positive() {
        root = root.conj();
    }
    let threshold = tol * root.abs_f64().max(1.0);
    if root.im.to_f64().abs() < threshold {
        root.im.assign(0);
    }
    root
}

/// Newton seeds from a grid scan at dimension `dimension`: strict local minima
/// of the scale-free residual, then the landing points of [`newton_step_seeds`].
pub fn seed_scan(
    model: &PotentialModel,
    l: u32,
    d: usize,
    dimension: usize,
    region: &SearchRegion,
    policy: &PrecisionPolicy,
) -> Result<Vec<BigComplex>, SolverError> {
    region.validate()?;
    let digits = policy.working_digits(dimension);
    let (nr, ni) = (region.grid_re, region.grid_im);
    let mut grid = vec![f64::NAN; nr * ni];
    for i in 0..nr {
        for j in 0..ni {
            let (re, im) = region.point(i, j);
            let e = BigComplex::from_f64(re, im, digits);
            grid[i * ni + j] = log10_residual(model, l, d, dimension, &e, digits)?;
        }
    }

    let mut seeds: Vec<(f64, f64, f64)> = Vec::new();
    for i in 1..nr - 1 {
        // bottom row excluded; the top row (Im = im_max) is kept
        for j in 1..ni {
            let value = grid[i * ni + j];
            if !value.is_finite() && value != f64::NEG_INFINITY {
                continue;
            }
            let mut is_min = true;
            'neighbors: for di in -1i64..=1 {
                for dj in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (a, b) = (i as i64 + di, j as i64 + dj);
                    if b >= ni as i64 {
                        continue;
                    }
                    let other = grid[a as usize * ni + b as usize];
                    if !(value < other) {
                        is_min = false;
                        break 'neighbors;
                    }
                }
            }
            if is_min {
                let (re, im) = region.point(i, j);
                seeds.push((re, im, value));
            }
        }
    }
    seeds.sort_by(|a, b| a.2.total_cmp(&b.2));
    let mut unique: Vec<(f64, f64, f64)> = Vec::new();
    for s in seeds {
        if unique.iter().all(|u| (u.0 - s.0).hypot(u.1 - s.1) > 1e-3) {
            unique.push(s);
        }
    }
    debug!("seed_scan: l = {l}, d = {d}, D = {dimension}: {} residual minima", unique.len());
    let mut seeds: Vec<BigComplex> = unique
        .into_iter()
        .map(|(re, im, _)| BigComplex::from_f64(re, im, digits))
        .collect();
    for extra in newton_step_seeds(model, l, d, dimension, region, policy, NEWTON_SEED_REACH)? {
        if seeds.iter().all(|s| s.sub_ref(&extra).abs_f64() > 1e-3) {
            seeds.push(extra);
        }
    }
    Ok(seeds)
}

/// Grid points whose Newton step `1 / (H'/H)` lands within `reach` grid
/// spacings, mapped to their landing points and deduplicated.
///
/// The normalized residual carries a background slope in `Re E` that can hide
/// shallow minima; the Newton step does not.
pub fn newton_step_seeds(
    model: &PotentialModel,
    l: u32,
    d: usize,
    dimension: usize,
    region: &SearchRegion,
    policy: &PrecisionPolicy,
    reach: f64,
) -> Result<Vec<BigComplex>, SolverError> {
    region.validate()?;
    let digits = policy.working_digits(dimension);
    let limit = reach * region.spacing();
    let mut landings: Vec<(f64, f64, f64)> = Vec::new();
    for i in 0..region.grid_re {
        for j in 0..region.grid_im {
            let (re, im) = region.point(i, j);
            let e = BigComplex::from_f64(re, im, digits);
            let q = match evaluate_hankel(model, l, d, dimension, &e, digits) {
                Ok(HankelEvaluation { dlog: Some(q), .. }) => q,
                Ok(HankelEvaluation { dlog: None, .. }) => {
                    landings.push((re, im, 0.0));
                    continue;
                }
                Err(HankelError::SingularToPrecision { .. }) => continue,
                Err(e) => return Err(e.into()),
            };
            if q.is_zero() || !q.is_finite() {
                continue;
            }
            let step = q.recip().to_c64();
            let size = step.norm();
            if size <= limit {
                let (x, y) = (re - step.re, (im - step.im).min(0.0));
                if x >= region.re_min && x <= region.re_max && y >= region.im_min {
                    landings.push((x, y, size));
                }
            }
        }
    }
    landings.sort_by(|a, b| a.2.total_cmp(&b.2));
    let merge = region.spacing();
    let mut unique: Vec<(f64, f64, f64)> = Vec::new();
    for p in landings {
        if unique.iter().all(|u| (u.0 - p.0).hypot(u.1 - p.1) > merge) {
            unique.push(p);
        }
    }
    debug!("newton_step_seeds: l = {l}, d = {d}, D = {dimension}: {} seeds", unique.len());
    Ok(unique
        .into_iter()
        .map(|(re, im, _)| BigComplex::from_f64(re, im, digits))
        .collect())
}

/// Reach of the Newton-step scan in grid spacings.
pub const NEWTON_SEED_REACH: f64 = 0.75;

struct ActiveTrace {
    trace: ResonanceTrace,
    /// Magnitude of the most recent accepted step.
    scale: f64,
    done: bool,
}

fn newton_tol(settings: &ContinuationSettings, digits: u32) -> f64 {
    (settings.tol_target * 1e-3).max(10f64.powf(-(f64::from(digits) / 3.0)))
}

fn advance(
    model: &PotentialModel,
    active: &mut ActiveTrace,
    dimension: usize,
    policy: &PrecisionPolicy,
    settings: &ContinuationSettings,
) {
    let trace = &mut active.trace;
    let prev = trace.last_root().clone();
    let digits = policy.working_digits(dimension);
    let tol = newton_tol(settings, digits);
    let opts = NewtonOptions {
        tol,
        max_iterations: MAX_NEWTON_ITERATIONS,
        max_step: Some((8.0 * active.scale).max(tol * 10.0)),
    };

    let mut seeds = vec![prev.clone()];
    // a real root may be the shadow of a narrow resonance: look just below the axis
    if prev.im.to_f64().abs() < active.scale {
        let mut shifted = prev.clone();
        shifted.im.assign(-active.scale);
        seeds.push(shifted);
    }
    let mut candidates: Vec<BigComplex> = Vec::new();
    for s in &seeds {
        match newton_polish(model, trace.l, trace.d, dimension, s, policy, &opts) {
            Ok(o) => candidates.push(o.root),
            Err(SolverError::Numerics(NumericsError::PrecisionExhausted { .. })) => trace.precision_exhausted = true,
            Err(_) => {}
        }
    }
    let Some(next) = candidates
        .into_iter()
        .min_by(|a, b| a.sub_ref(&prev).abs_f64().total_cmp(&b.sub_ref(&prev).abs_f64()))
    else {
        debug!("trace l={} lost at D={dimension}: Newton failure", trace.l);
        trace.status = TraceStatus::Lost;
        active.done = true;
        return;
    };
    let step = next.sub_ref(&prev).abs_f64();
    if step > settings.migration_limit {
        debug!("trace l={} lost at D={dimension}: migrated by {step}", trace.l);
        trace.status = TraceStatus::Lost;
        active.done = true;
        return;
    }
    trace.digits_used = trace.digits_used.max(next.digits());
    trace.roots.insert(dimension, next);
    active.scale = step.max(tol);
    classify(active, settings, false);
}

fn log_steps(steps: &[(usize, f64)]) -> (Vec<f64>, Vec<f64>) {
    steps
        .iter()
        .map(|&(dim, s)| (dim as f64, if s > 0.0 { s.log10() } else { -1000.0 }))
        .unzip()
}

fn classify(active: &mut ActiveTrace, settings: &ContinuationSettings, final_pass: bool) {
    let trace = &mut active.trace;
    let steps = trace.steps();
    if let Some(&(_, last)) = steps.last() {
        trace.best = trace.last_root().clone();
        trace.best_uncertainty = last;
    }
    let confirmations = settings.confirmations.max(1);
    if steps.len() >= confirmations
        && steps[steps.len() - confirmations..]
            .iter()
            .all(|&(_, s)| s <= settings.tol_target)
    {
        trace.status = TraceStatus::Converged;
        active.done = true;
        return;
    }
    if steps.len() >= settings.stagnation_window {
        let (xs, ys) = log_steps(&steps[steps.len() - settings.stagnation_window..]);
        if least_squares_slope(&xs, &ys) >= settings.stagnation_slope {
            trace.status = TraceStatus::Stagnated;
            active.done = true;
            return;
        }
    }
    if final_pass {
        let window = settings.trend_window.min(steps.len());
        trace.status = if window >= 2 {
            let (xs, ys) = log_steps(&steps[steps.len() - window..]);
            if least_squares_slope(&xs, &ys) < settings.stagnation_slope {
                TraceStatus::Converging
            } else {
                TraceStatus::Stagnated
            }
        } else {
            TraceStatus::Converging
        };
    }
}

/// Follow each seed from `dimensions.start()` up to `dimensions.end()`.
pub fn continue_in_d(
    model: &PotentialModel,
    l: u32,
    d: usize,
    seeds: &[BigComplex],
    dimensions: std::ops::RangeInclusive<usize>,
    policy: &PrecisionPolicy,
    settings: &ContinuationSettings,
) -> Result<Vec<ResonanceTrace>, SolverError> {
    let (d_min, d_max) = (*dimensions.start(), *dimensions.end());
    if d_min < 2 || d_max < d_min {
        return Err(SolverError::InvalidRange {
            min: d_min,
            max: d_max,
        });
    }
    let merge_distance = 10.0 * settings.tol_target;
    let digits = policy.working_digits(d_min);
    let tol = newton_tol(settings, digits);
    let opts = NewtonOptions {
        tol,
        max_iterations: MAX_NEWTON_ITERATIONS,
        max_step: Some(settings.initial_step_cap),
    };

    let mut active: Vec<ActiveTrace> = Vec::new();
    for seed in seeds {
        match newton_polish(model, l, d, d_min, seed, policy, &opts) {
            Ok(outcome) => {
                let root = outcome.root;
                if active
                    .iter()
                    .any(|a| a.trace.last_root().sub_ref(&root).abs_f64() <= merge_distance.max(tol * 10.0))
                {
                    continue;
                }
                active.push(ActiveTrace {
                    trace: ResonanceTrace::new(l, d, d_min, root),
                    scale: settings.initial_step_cap,
                    done: false,
                });
            }
            Err(e) => debug!("seed {seed:?} failed to polish at D={d_min}: {e}"),
        }
    }

    for dimension in (d_min + 1)..=d_max {
        if active.iter().all(|a| a.done) {
            break;
        }
        for a in active.iter_mut().filter(|a| !a.done) {
            advance(model, a, dimension, policy, settings);
        }
        // traces that landed on the same root collapse into the earliest one
        for i in 0..active.len() {
            if active[i].done || active[i].trace.last_dimension() != dimension {
                continue;
            }
            for j in (i + 1)..active.len() {
                if active[j].done || active[j].trace.last_dimension() != dimension {
                    continue;
                }
                let gap = active[i]
                    .trace
                    .last_root()
                    .sub_ref(active[j].trace.last_root())
                    .abs_f64();
                if gap <= merge_distance.max(newton_tol(settings, policy.working_digits(dimension)) * 10.0) {
                    active[j].done = true;
                    active[j].trace.status = TraceStatus::Lost;
                    active[j].trace.roots.clear();
                }
            }
        }
        trace!("D = {dimension}: {} active traces", active.iter().filter(|a| !a.done).count());
    }

    let mut traces: Vec<ResonanceTrace> = Vec::new();
    for mut a in active {
        if a.trace.roots.is_empty() {
            continue;
        }
        if !a.done {
            classify(&mut a, settings, true);
        }
        if a.trace.roots.len() == 1 {
            a.trace.status = TraceStatus::Lost;
        }
        traces.push(a.trace);
    }
    dedupe_converged(&mut traces);
    assign_labels(&mut traces);
    Ok(traces)
}

fn dedupe_converged(traces: &mut Vec<ResonanceTrace>) {
    let mut keep = vec![true; traces.len()];
    for i in 0..traces.len() {
        if traces[i].status != TraceStatus::Converged || !keep[i] {
            continue;
        }
        for j in (i + 1)..traces.len() {
            if traces[j].status != TraceStatus::Converged || !keep[j] {
                continue;
            }
            let allowance = 10.0 * traces[i].best_uncertainty.max(traces[j].best_uncertainty);
            if traces[i].best.sub_ref(&traces[j].best).abs_f64() <= allowance {
                keep[j] = false;
            }
        }
    }
    let mut k = 0;
    traces.retain(|_| {
        k += 1;
        keep[k - 1]
    });
}

/// Number converged traces `ν = 0, 1, …` per `(l, d)` by ascending `Re E`.
pub fn assign_labels(traces: &mut [ResonanceTrace]) {
    let mut groups: BTreeMap<(u32, usize), Vec<usize>> = BTreeMap::new();
    for (i, t) in traces.iter_mut().enumerate() {
        t.nu = None;
        if t.status == TraceStatus::Converged {
            groups.entry((t.l, t.d)).or_default().push(i);
        }
    }
    for idx in groups.values_mut() {
        idx.sort_by(|&a, &b| traces[a].best.re.total_cmp(&traces[b].best.re));
        for (nu, &i) in idx.iter().enumerate() {
            traces[i].nu = Some(nu);
        }
    }
}

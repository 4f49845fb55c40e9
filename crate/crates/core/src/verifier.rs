//! Independent checks of computed energies.
//!
//! Two oracles: the analytic Coulomb spectrum for pure `Z/r` models, and a
//! Siegert-condition residual from direct integration of the Riccati equation.
//! The integration runs in double precision on
//! `f' = (f² + 2E) - 2((l+1) f + Z)/r - 2 v(r)`, started from the Taylor series
//! near the origin, and compares `g = Φ'/Φ = (l+1)/r - f` at the far end with
//! the large-`r` expansion `g ~ ik - iZ/(kr) + …`.
//!
//! By default the path is the ray `r = t e^{iθ}` tilted just enough that the
//! outgoing wave is recessive there, so any incoming admixture (a wrong `E`)
//! grows along the path instead of being washed out.

use num_complex::Complex64;
use rug::{Float, Rational};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{digits_to_bits, BigComplex};
use crate::potential::PotentialModel;
use crate::series::{riccati_coefficients, SeriesRequest};
use crate::solver::{ResonanceTrace, TraceStatus};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum VerifierError {
    #[error("Φ has a node near r = {radius:.4} on the integration path (|f| = {magnitude:e})")]
    PoleEncountered { radius: f64, magnitude: f64 },
    #[error("need 0 < r0 < R, got r0 = {r0}, R = {radius}")]
    InvalidInterval { r0: f64, radius: f64 },
    #[error("trace status is {0}; only converged traces can be verified")]
    NotConverged(&'static str),
}

/// Integration and matching parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiegertOptions {
    pub r0: f64,
    pub radius: f64,
    pub steps: usize,
    /// Taylor order used to start the integration at `r0`.
    pub series_order: usize,
    /// Highest power of `1/r` in the asymptote; the sum stops early once terms grow.
    pub asymptotic_order: usize,
    /// Tilt the path so that `arg(k r) = phase / (|k| R)`.
    pub rotate: bool,
    pub phase: f64,
    /// Constant offset `-i·shift` applied to the whole path.
    pub shift: f64,
    pub pole_threshold: f64,
    /// Steps are uniform in `ln(t + a)` along the path when set to `a`,
    /// uniform in `t` otherwise.
    pub grid_offset: Option<f64>,
    /// Integrate `1/f` while `|f| > 2`; without it a node of `Φ` on the path
    /// raises [`VerifierError::PoleEncountered`].
    pub invert_near_poles: bool,
}

impl Default for SiegertOptions {
    fn default() -> Self {
        SiegertOptions {
            r0: 0.1,
            radius: 30.0,
            steps: 12000,
            series_order: 40,
            asymptotic_order: 8,
            rotate: true,
            phase: 0.5,
            shift: 0.0,
            pole_threshold: 1e8,
            grid_offset: Some(0.3),
            invert_near_poles: true,
        }
    }
}

impl SiegertOptions {
    /// Real-axis path, uniform steps, first-order Coulomb asymptote `ik - iZ/(kR)`.
    pub fn real_axis() -> Self {
        SiegertOptions {
            rotate: false,
            asymptotic_order: 1,
            grid_offset: None,
            invert_near_poles: false,
            ..SiegertOptions::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct SiegertResidual {
    pub energy: BigComplex,
    pub k: BigComplex,
    pub radius: f64,
    /// `|g(R) - g_asym(R)|`.
    pub residual: f64,
    pub g_at_r: Complex64,
    /// Complex end point of the path.
    pub endpoint: Complex64,
}

/// `-1/(2n²)` for `n = l+1 … n_max`.
pub fn hydrogen_levels(l: u32, n_max: u32) -> Vec<f64> {
    (l + 1..=n_max)
        .map(|n| hydrogen_level(&Rational::from(-1), n).to_f64())
        .collect()
}

/// `-Z²/(2n²)`, exact.
pub fn hydrogen_level(z: &Rational, n: u32) -> Rational {
    let z2 = Rational::from(z * z);
    -(z2 / Rational::from(2 * u64::from(n) * u64::from(n)))
}

/// `k = sqrt(2E)` with `Re k ≥ 0`, and `Im k > 0` on the negative real axis.
pub fn momentum(energy: &BigComplex) -> BigComplex {
    let digits = energy.digits();
    let bits = digits_to_bits(digits);
    let wr = Float::with_val(bits, &energy.re * 2u32);
    let wi = Float::with_val(bits, &energy.im * 2u32);
    let modulus = BigComplex::from_parts(wr.clone(), wi.clone(), digits).abs();
    let re = Float::with_val(bits, &modulus + &wr) / 2u32;
    let mut im = Float::with_val(bits, &modulus - &wr) / 2u32;
    let re = re.sqrt();
    im = im.sqrt();
    if wi < 0 {
        im = -im;
    }
    BigComplex::from_parts(re, im, digits)
}

fn path(k: Complex64, opts: &SiegertOptions) -> (Complex64, Complex64) {
    let theta = if opts.rotate {
        let phi = opts.phase / (k.norm() * opts.radius);
        (phi - k.arg()).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let dir = Complex64::from_polar(1.0, theta);
    let offset = Complex64::new(0.0, -opts.shift);
    (dir * opts.r0 + offset, dir * opts.radius + offset)
}

/// `Σ_n c_n r^{-n}` for `g = Φ'/Φ` of the pure Coulomb problem at large `r`.
fn asymptote(k: Complex64, z: f64, l: u32, r: Complex64, order: usize) -> Complex64 {
    let ll = f64::from(l * (l + 1));
    let i = Complex64::i();
    let mut c = vec![i * k];
    if order >= 1 {
        c.push(z / c[0]);
    }
    let inv = 1.0 / r;
    let mut sum = c[0];
    let mut power = Complex64::new(1.0, 0.0);
    let mut last_term = f64::INFINITY;
    for n in 1..=order {
        if n >= 2 {
            let m = n - 1;
            let mut s = Complex64::new(m as f64, 0.0) * c[m];
            for j in 1..=m {
                s -= c[j] * c[m + 1 - j];
            }
            if m == 1 {
                s += ll;
            }
            c.push(s / (2.0 * c[0]));
        }
        power *= inv;
        let term = c[n] * power;
        if n >= 2 && term.norm() > last_term {
            break;
        }
        last_term = term.norm();
        sum += term;
    }
    sum
}

/// `Φ'/Φ` at the end of an outward integration compared with the outgoing asymptote.
pub fn siegert_residual(
    model: &PotentialModel,
    l: u32,
    energy: &BigComplex,
    opts: &SiegertOptions,
) -> Result<SiegertResidual, VerifierError> {
    if !(opts.r0 > 0.0 && opts.r0 < opts.radius) {
        return Err(VerifierError::InvalidInterval {
            r0: opts.r0,
            radius: opts.radius,
        });
    }
    let k_big = momentum(energy);
    let k = k_big.to_c64();
    let e = energy.to_c64();
    let z = model.coulomb_strength().to_f64();
    let (start, end) = path(k, opts);

    let series = riccati_coefficients(&SeriesRequest {
        model,
        l,
        energy,
        order: opts.series_order,
        digits: energy.digits().max(40),
        derivatives: false,
    });
    let f = series
        .f
        .iter()
        .rev()
        .fold(Complex64::new(0.0, 0.0), |acc, c| acc * start + c.to_c64());

    let lp1 = f64::from(l + 1);
    let source = |r: Complex64| 2.0 * e - 2.0 * z / r - 2.0 * model.regular_c64(r);
    let rhs_f = |r: Complex64, f: Complex64| f * f - 2.0 * lp1 * f / r + source(r);
    // w = 1/f passes smoothly through the poles of f at nodes of Φ
    let rhs_w = |r: Complex64, w: Complex64| -1.0 + 2.0 * lp1 * w / r - source(r) * w * w;
    let span = end - start;
    let length = opts.radius - opts.r0;
    // path parameter t runs over [r0, R]; s in [0, 1] is the integration variable
    let (t_of_s, dt_ds): (Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>) = match opts.grid_offset {
        Some(a) => {
            let lo = (opts.r0 + a).ln();
            let width = (opts.radius + a).ln() - lo;
            (
                Box::new(move |s| (lo + width * s).exp() - a),
                Box::new(move |s| width * (lo + width * s).exp()),
            )
        }
        None => (Box::new(move |s| opts.r0 + length * s), Box::new(move |_| length)),
    };
    let point = |s: f64| start + span * ((t_of_s(s) - opts.r0) / length);
    let velocity = |s: f64| span * (dt_ds(s) / length);
    let h = 1.0 / opts.steps as f64;
    let mut inverted = false;
    let mut y = f;
    for n in 0..opts.steps {
        let s0 = n as f64 * h;
        if opts.invert_near_poles {
            if !inverted && y.norm() > 2.0 {
                inverted = true;
                y = 1.0 / y;
            } else if inverted && y.norm() > 2.0 {
                inverted = false;
                y = 1.0 / y;
            }
        }
        let (r, rm, rn) = (point(s0), point(s0 + 0.5 * h), point(s0 + h));
        let (v, vm, vn) = (velocity(s0), velocity(s0 + 0.5 * h), velocity(s0 + h));
        let rhs = |r: Complex64, y: Complex64| if inverted { rhs_w(r, y) } else { rhs_f(r, y) };
        let k1 = h * v * rhs(r, y);
        let k2 = h * vm * rhs(rm, y + k1 * 0.5);
        let k3 = h * vm * rhs(rm, y + k2 * 0.5);
        let k4 = h * vn * rhs(rn, y + k3);
        y += (k1 + 2.0 * k2 + 2.0 * k3 + k4) / 6.0;
        let magnitude = if inverted { 1.0 / y.norm() } else { y.norm() };
        if !(magnitude <= opts.pole_threshold) || !y.is_finite() {
            return Err(VerifierError::PoleEncountered {
                radius: rn.norm(),
                magnitude,
            });
        }
    }
    let f = if inverted { 1.0 / y } else { y };

    let g = lp1 / end - f;
    let target = asymptote(k, z, l, end, opts.asymptotic_order);
    Ok(SiegertResidual {
        energy: energy.clone(),
        k: k_big,
        radius: opts.radius,
        residual: (g - target).norm(),
        g_at_r: g,
        endpoint: end,
    })
}

/// [`siegert_residual`], retried once with a perturbed `r0` and then on a
/// path displaced to `Im r = -0.05` when `Φ` has a node on the way.
pub fn siegert_residual_retrying(
    model: &PotentialModel,
    l: u32,
    energy: &BigComplex,
    opts: &SiegertOptions,
) -> Result<SiegertResidual, VerifierError> {
    match siegert_residual(model, l, energy, opts) {
        Err(VerifierError::PoleEncountered { .. }) => {}
        other => return other,
    }
    let perturbed = SiegertOptions {
        r0: opts.r0 * 1.37,
        ..opts.clone()
    };
    match siegert_residual(model, l, energy, &perturbed) {
        Err(VerifierError::PoleEncountered { .. }) => {}
        other => return other,
    }
    let displaced = SiegertOptions {
        shift: opts.shift + 0.05,
        ..opts.clone()
    };
    siegert_residual(model, l, energy, &displaced)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyThresholds {
    /// Largest acceptable Siegert residual at the best estimate.
    pub residual: f64,
    /// Smallest offset used to probe for a local minimum.
    pub probe_floor: f64,
    /// Allowed distance from the analytic Coulomb level.
    pub hydrogen_tolerance: f64,
    pub options: SiegertOptions,
}

impl Default for VerifyThresholds {
    fn default() -> Self {
        VerifyThresholds {
            residual: 1e-4,
            probe_floor: 1e-6,
            hydrogen_tolerance: 1e-12,
            options: SiegertOptions::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VerifyMethod {
    HydrogenOracle,
    Siegert,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport {
    pub pass: bool,
    pub method: VerifyMethod,
    /// Siegert residual at `best`, or the distance to the nearest Coulomb level.
    pub residual: f64,
    /// Residuals at the probe points `best ± h`, `best ± ih`.
    pub neighbours: Vec<f64>,
    pub local_minimum: bool,
    pub detail: String,
}

fn hydrogen_check(trace: &ResonanceTrace, model: &PotentialModel, thresholds: &VerifyThresholds) -> VerificationReport {
    let z = model.coulomb_strength();
    let fail = |detail: String| VerificationReport {
        pass: false,
        method: VerifyMethod::HydrogenOracle,
        residual: f64::INFINITY,
        neighbours: Vec::new(),
        local_minimum: false,
        detail,
    };
    let e = trace.best.re.to_f64();
    if *z >= 0 || e >= 0.0 {
        return fail("no bound states to compare against".into());
    }
    let n_est = (z.to_f64().powi(2) / (2.0 * -e)).sqrt().round().max(1.0) as u32;
    let n = n_est.max(trace.l + 1);
    let level = BigComplex::from_rational(&hydrogen_level(z, n), &Rational::new(), trace.best.digits());
    let distance = trace.best.sub_ref(&level).abs_f64();
    let allowed = thresholds.hydrogen_tolerance.max(10.0 * trace.best_uncertainty);
    VerificationReport {
        pass: distance <= allowed,
        method: VerifyMethod::HydrogenOracle,
        residual: distance,
        neighbours: Vec::new(),
        local_minimum: true,
        detail: format!("n = {n}, |E - E_n| = {distance:e}"),
    }
}

/// Check a converged trace against an independent oracle.
pub fn verify_trace(
    trace: &ResonanceTrace,
    model: &PotentialModel,
    thresholds: &VerifyThresholds,
) -> Result<VerificationReport, VerifierError> {
    if trace.status != TraceStatus::Converged {
        return Err(VerifierError::NotConverged(trace.status.as_str()));
    }
    if model.is_pure_coulomb() {
        return Ok(hydrogen_check(trace, model, thresholds));
    }
    let opts = &thresholds.options;
    let at_best = match siegert_residual_retrying(model, trace.l, &trace.best, opts) {
        Ok(r) => r.residual,
        Err(e) => {
            return Ok(VerificationReport {
                pass: false,
                method: VerifyMethod::Siegert,
                residual: f64::INFINITY,
                neighbours: Vec::new(),
                local_minimum: false,
                detail: e.to_string(),
            })
        }
    };
    let h = trace.best_uncertainty.max(thresholds.probe_floor);
    let digits = trace.best.digits();
    let neighbours: Vec<f64> = [(h, 0.0), (-h, 0.0), (0.0, h), (0.0, -h)]
        .iter()
        .map(|&(dr, di)| {
            let probe = trace.best.add_ref(&BigComplex::from_f64(dr, di, digits));
            siegert_residual_retrying(model, trace.l, &probe, opts)
                .map(|r| r.residual)
                .unwrap_or(f64::INFINITY)
        })
        .collect();
    let local_minimum = neighbours.iter().all(|&n| at_best <= n);
    let below = at_best < thresholds.residual;
    Ok(VerificationReport {
        pass: local_minimum && below,
        method: VerifyMethod::Siegert,
        residual: at_best,
        neighbours,
        local_minimum,
        detail: format!(
            "residual {at_best:e} ({}), {}",
            if below { "below threshold" } else { "above threshold" },
            if local_minimum { "local minimum" } else { "not a local minimum" }
        ),
    })
}

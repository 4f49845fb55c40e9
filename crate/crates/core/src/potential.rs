//! Central-field potentials `V(r) = Z/r + Σ_j v_j r^j`.
//!
//! The regular part is described by its Taylor coefficients about the origin,
//! generated on demand and memoized. Coefficients are exact rationals so the
//! recurrence can be run either in exact arithmetic (oracles) or converted
//! once per precision level for numerical work.

use std::collections::HashMap;
use std::fmt;
use std::sync::{Arc, Mutex};

use rug::{Float, Rational};

use crate::numerics::digits_to_bits;

type CoefficientFn = dyn Fn(usize) -> Rational + Send + Sync;

/// Shape of the regular (non-Coulomb) part of the potential.
#[derive(Clone)]
pub enum RegularPart {
    /// `V0 r^2 e^{-r}`.
    ScaledExponential { v0: Rational },
    /// Finite polynomial `Σ c_j r^j`.
    Polynomial(Vec<Rational>),
    /// Arbitrary coefficient generator; must be deterministic.
    Custom(Arc<CoefficientFn>),
}

impl fmt::Debug for RegularPart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RegularPart::ScaledExponential { v0 } => write!(f, "ScaledExponential {{ v0: {v0} }}"),
            RegularPart::Polynomial(c) => write!(f, "Polynomial({} terms)", c.len()),
            RegularPart::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl RegularPart {
    fn generate(&self, j: usize) -> Rational {
        match self {
            RegularPart::ScaledExponential { v0 } => {
                if j < 2 {
                    return Rational::new();
                }
                let mut fact = rug::Integer::from(1);
                for k in 2..=(j - 2) as u32 {
                    fact *= k;
                }
                let mut c = Rational::from(v0 / Rational::from(fact));
                if j % 2 == 1 {
                    c = -c;
                }
                c
            }
            RegularPart::Polynomial(c) => c.get(j).cloned().unwrap_or_default(),
            RegularPart::Custom(f) => f(j),
        }
    }

    fn is_zero(&self) -> bool {
        match self {
            RegularPart::ScaledExponential { v0 } => *v0 == 0,
            RegularPart::Polynomial(c) => c.iter().all(|x| *x == 0),
            RegularPart::Custom(_) => false,
        }
    }
}

#[derive(Default)]
struct CoefficientCache {
    exact: Vec<Rational>,
    by_bits: HashMap<u32, Vec<Float>>,
}

/// Coulomb strength plus Taylor coefficients of the regular part.
pub struct PotentialModel {
    z: Rational,
    regular: RegularPart,
    cache: Mutex<CoefficientCache>,
}

impl Clone for PotentialModel {
    fn clone(&self) -> Self {
        PotentialModel::new(self.z.clone(), self.regular.clone())
    }
}

impl fmt::Debug for PotentialModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PotentialModel")
            .field("z", &self.z.to_string())
            .field("regular", &self.regular)
            .finish()
    }
}

impl PotentialModel {
    pub fn new(z: Rational, regular: RegularPart) -> Self {
        PotentialModel {
            z,
            regular,
            cache: Mutex::new(CoefficientCache::default()),
        }
    }

    /// `V(r) = V0 r^2 e^{-r} + Z/r`.
    pub fn scaled_exponential(v0: Rational, z: Rational) -> Self {
        PotentialModel::new(z, RegularPart::ScaledExponential { v0 })
    }

    /// Convenience for binary-exact inputs such as `7.5` and `-1`.
    pub fn scaled_exponential_f64(v0: f64, z: f64) -> Self {
        let v0 = Rational::from_f64(v0).expect("finite V0");
        let z = Rational::from_f64(z).expect("finite Z");
        PotentialModel::scaled_exponential(v0, z)
    }

    /// Pure Coulomb potential `Z/r`.
    pub fn coulomb(z: Rational) -> Self {
        PotentialModel::new(z, RegularPart::Polynomial(Vec::new()))
    }

    pub fn coulomb_strength(&self) -> &Rational {
        &self.z
    }

    pub fn regular(&self) -> &RegularPart {
        &self.regular
    }

    /// True when the regular part vanishes identically.
    pub fn is_pure_coulomb(&self) -> bool {
        self.regular.is_zero()
    }

    /// Exact Taylor coefficient `v_j` of the regular part.
    pub fn coefficient(&self, j: usize) -> Rational {
        self.ensure_exact(j + 1);
        self.cache.lock().unwrap().exact[j].clone()
    }

    /// `v_0 … v_{n-1}` exactly.
    pub fn coefficients_exact(&self, n: usize) -> Vec<Rational> {
        self.ensure_exact(n);
        self.cache.lock().unwrap().exact[..n].to_vec()
    }

    /// `v_0 … v_{n-1}` rounded to `digits`, converted once per precision level.
    pub fn coefficients_at(&self, n: usize, digits: u32) -> Vec<Float> {
        self.ensure_exact(n);
        let bits = digits_to_bits(digits);
        let mut cache = self.cache.lock().unwrap();
        let CoefficientCache { exact, by_bits } = &mut *cache;
        let floats = by_bits.entry(bits).or_default();
        for q in exact.iter().skip(floats.len()).take(n.saturating_sub(floats.len())) {
            floats.push(Float::with_val(bits, q));
        }
        floats[..n].to_vec()
    }

    fn ensure_exact(&self, n: usize) {
        let mut cache = self.cache.lock().unwrap();
        while cache.exact.len() < n {
            let j = cache.exact.len();
            let c = self.regular.generate(j);
            cache.exact.push(c);
        }
    }

    /// `V(r)` in double precision from the closed form where one exists.
    pub fn eval_c64(&self, r: num_complex::Complex64) -> num_complex::Complex64 {
        self.regular_c64(r) + self.z.to_f64() / r
    }

    /// The regular part alone in double precision.
    pub fn regular_c64(&self, r: num_complex::Complex64) -> num_complex::Complex64 {
        match &self.regular {
            RegularPart::ScaledExponential { v0 } => v0.to_f64() * r * r * (-r).exp(),
            RegularPart::Polynomial(c) => c
                .iter()
                .rev()
                .fold(num_complex::Complex64::new(0.0, 0.0), |acc, cj| acc * r + cj.to_f64()),
            RegularPart::Custom(_) => {
                let v = self.coefficients_exact(60);
                v.iter()
                    .rev()
                    .fold(num_complex::Complex64::new(0.0, 0.0), |acc, cj| acc * r + cj.to_f64())
            }
        }
    }
}

//! Taylor coefficients of the regularized logarithmic derivative
//! `f(r) = (l+1)/r - Φ'(r)/Φ(r) = Σ f_j r^j`.
//!
//! `f` satisfies the Riccati equation `f' = f² - 2(l+1) f / r - 2V + 2E`.
//! Matching powers of `r` gives
//!
//! ```text
//! f_0 = -Z / (l+1)
//! (n + 2l + 3) f_{n+1} = Σ_{j=0..n} f_j f_{n-j} + 2E δ_{n0} - 2 v_n
//! ```
//!
//! and differentiating term by term in `E`,
//! `(n + 2l + 3) f'_{n+1} = 2 Σ_{j=0..n} f_j f'_{n-j} + 2 δ_{n0}`.

use rug::{Assign, Float, Rational};

use crate::numerics::{digits_to_bits, BigComplex};
use crate::potential::PotentialModel;

/// Inputs for one evaluation of the coefficient recurrence.
#[derive(Debug, Clone)]
pub struct SeriesRequest<'a> {
    pub model: &'a PotentialModel,
    pub l: u32,
    pub energy: &'a BigComplex,
    /// Highest coefficient index `M`.
    pub order: usize,
    pub digits: u32,
    /// Also compute `∂f_j/∂E`.
    pub derivatives: bool,
}

/// `f_0 … f_M` and, when requested, their energy derivatives.
#[derive(Debug, Clone)]
pub struct SeriesEvaluation {
    pub f: Vec<BigComplex>,
    pub df_de: Option<Vec<BigComplex>>,
    pub digits: u32,
}

impl SeriesEvaluation {
    pub fn order(&self) -> usize {
        self.f.len() - 1
    }
}

/// `Σ_{j=0..n} a_j b_{n-j}` for the symmetric case `a == b`.
fn self_convolution(f: &[BigComplex], n: usize, acc: &mut BigComplex, tmp: &mut Float) {
    for j in 0..(n + 1) / 2 {
        acc.add_mul_assign(&f[j], &f[n - j], tmp);
    }
    acc.re *= 2u32;
    acc.im *= 2u32;
    if n % 2 == 0 {
        acc.add_mul_assign(&f[n / 2], &f[n / 2], tmp);
    }
}

pub fn riccati_coefficients(req: &SeriesRequest<'_>) -> SeriesEvaluation {
    assert!(req.order >= 1, "series order must be at least 1");
    let digits = req.digits;
    let bits = digits_to_bits(digits);
    let m = req.order;
    let l = u64::from(req.l);
    let energy = req.energy.with_digits(digits);
    let v = req.model.coefficients_at(m, digits);

    let mut f: Vec<BigComplex> = Vec::with_capacity(m + 1);
    let f0 = -Rational::from(req.model.coulomb_strength() / Rational::from(l + 1));
    f.push(BigComplex::from_rational(&f0, &Rational::new(), digits));
    let mut df: Vec<BigComplex> = Vec::with_capacity(if req.derivatives { m + 1 } else { 0 });
    if req.derivatives {
        df.push(BigComplex::zero(digits));
    }

    let mut tmp = Float::new(bits);
    for n in 0..m {
        let denom = (n as u64 + 2 * l + 3) as u32;

        let mut next = BigComplex::zero(digits);
        self_convolution(&f, n, &mut next, &mut tmp);
        if n == 0 {
            tmp.assign(&energy.re * 2u32);
            next.re += &tmp;
            tmp.assign(&energy.im * 2u32);
            next.im += &tmp;
        }
        tmp.assign(&v[n] * 2u32);
        next.re -= &tmp;
        next.re /= denom;
        next.im /= denom;

        if req.derivatives {
            let mut dnext = BigComplex::zero(digits);
            for j in 0..=n {
                dnext.add_mul_assign(&f[j], &df[n - j], &mut tmp);
            }
            dnext.re *= 2u32;
            dnext.im *= 2u32;
            if n == 0 {
                dnext.re += 2u32;
            }
            dnext.re /= denom;
            dnext.im /= denom;
            df.push(dnext);
        }
        f.push(next);
    }

    SeriesEvaluation {
        f,
        df_de: req.derivatives.then_some(df),
        digits,
    }
}

/// The same recurrence in exact rational arithmetic at a rational energy.
pub fn riccati_coefficients_exact(
    model: &PotentialModel,
    l: u32,
    energy: &Rational,
    order: usize,
) -> Vec<Rational> {
    let v = model.coefficients_exact(order);
    let l = u64::from(l);
    let mut f = Vec::with_capacity(order + 1);
    f.push(-Rational::from(model.coulomb_strength() / Rational::from(l + 1)));
    for n in 0..order {
        let mut s = Rational::new();
        for j in 0..=n {
            s += Rational::from(&f[j] * &f[n - j]);
        }
        if n == 0 {
            s += Rational::from(energy * 2u32);
        }
        s -= Rational::from(&v[n] * 2u32);
        s /= Rational::from(n as u64 + 2 * l + 3);
        f.push(s);
    }
    f
}

/// Degree of `f_j` as a polynomial in `E`.
pub fn coefficient_degree(j: usize, _l: u32) -> usize {
    if j == 0 {
        0
    } else {
        (j + 1) / 2
    }
}

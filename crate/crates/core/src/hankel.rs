//! Hankel determinants `H_D^d(E) = det[f_{i+j+d-1}(E)]_{i,j=1..D}` and their
//! logarithmic energy derivative.
//!
//! The determinant comes from an LU factorization with partial pivoting. The
//! logarithmic derivative uses Jacobi's formula `d log det M = tr(M^{-1} M')`,
//! reusing the factors, so Newton never needs the raw derivative `H'`.

use rug::{Assign, Float};
use thiserror::Error;

use crate::numerics::{digits_to_bits, BigComplex};
use crate::series::SeriesEvaluation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HankelError {
    #[error("series order {available} is too short for D = {dimension}, d = {displacement} (needs {needed})")]
    InsufficientOrder {
        dimension: usize,
        displacement: usize,
        needed: usize,
        available: usize,
    },
    #[error("series was evaluated without energy derivatives")]
    MissingDerivatives,
    #[error("Hankel matrix of dimension {dimension} is singular to {digits} digits (condition ~1e{condition_estimate:.1})")]
    SingularToPrecision {
        dimension: usize,
        digits: u32,
        condition_estimate: f64,
    },
}

/// Determinant and logarithmic derivative at one trial energy.
#[derive(Debug, Clone)]
pub struct HankelEvaluation {
    pub value: BigComplex,
    /// `H'/H`; `None` exactly when `value` is zero.
    pub dlog: Option<BigComplex>,
    pub dimension: usize,
    pub displacement: usize,
    pub digits_used: u32,
    /// `log10(max |entry| / min |pivot|)`, roughly the decimal digits lost.
    pub condition_estimate: f64,
}

/// Highest coefficient index needed for `H_D^d`.
pub fn required_order(dimension: usize, displacement: usize) -> usize {
    2 * dimension + displacement - 1
}

fn check_order(series: &SeriesEvaluation, dimension: usize, displacement: usize) -> Result<(), HankelError> {
    assert!(dimension >= 1, "Hankel dimension must be positive");
    let needed = required_order(dimension, displacement);
    if series.order() < needed {
        return Err(HankelError::InsufficientOrder {
            dimension,
            displacement,
            needed,
            available: series.order(),
        });
    }
    Ok(())
}

/// The `D×D` matrix with 1-based entry `(i, j) = f_{i+j+d-1}`.
pub fn hankel_matrix(
    series: &SeriesEvaluation,
    dimension: usize,
    displacement: usize,
) -> Result<Vec<Vec<BigComplex>>, HankelError> {
    check_order(series, dimension, displacement)?;
    Ok((0..dimension)
        .map(|i| {
            (0..dimension)
                .map(|j| series.f[i + j + displacement + 1].clone())
                .collect()
        })
        .collect())
}

struct LuFactors {
    dim: usize,
    /// Row-major; strictly lower part holds L (unit diagonal), upper holds U.
    lu: Vec<BigComplex>,
    perm: Vec<usize>,
    odd_swaps: bool,
    /// Index of the first exactly-zero pivot column, if any.
    zero_pivot: Option<usize>,
    max_entry: Float,
    min_pivot: Float,
}

impl LuFactors {
    fn at(&self, i: usize, j: usize) -> &BigComplex {
        &self.lu[i * self.dim + j]
    }

    fn determinant(&self, digits: u32) -> BigComplex {
        if self.zero_pivot.is_some() {
            return BigComplex::zero(digits);
        }
        let mut det = self.at(0, 0).clone();
        for k in 1..self.dim {
            det = det.mul_ref(self.at(k, k));
        }
        if self.odd_swaps {
            det = -det;
        }
        det
    }

    fn condition_estimate(&self) -> f64 {
        if self.zero_pivot.is_some() || self.min_pivot.is_zero() {
            return f64::INFINITY;
        }
        let ratio = Float::with_val(self.max_entry.prec(), &self.max_entry / &self.min_pivot);
        ratio.log10().to_f64().max(0.0)
    }

    /// `tr(M^{-1} B)` for the derivative matrix `B` (row-major, unpermuted).
    fn trace_solve(&self, b: &[BigComplex], digits: u32) -> BigComplex {
        let n = self.dim;
        let bits = digits_to_bits(digits);
        let mut tmp = Float::new(bits);
        let mut trace = BigComplex::zero(digits);
        let mut y: Vec<BigComplex> = vec![BigComplex::zero(digits); n];
        for col in 0..n {
            // L y = P b_col
            for i in 0..n {
                let mut acc = b[self.perm[i] * n + col].clone();
                for k in 0..i {
                    acc.sub_mul_assign(self.at(i, k), &y[k], &mut tmp);
                }
                y[i] = acc;
            }
            // U x = y, only down to component `col`
            for i in (col..n).rev() {
                let mut acc = y[i].clone();
                for k in (i + 1)..n {
                    acc.sub_mul_assign(self.at(i, k), &y[k], &mut tmp);
                }
                y[i] = acc.div_ref(self.at(i, i));
            }
            trace.re += &y[col].re;
            trace.im += &y[col].im;
        }
        trace
    }
}

fn factorize(mut a: Vec<BigComplex>, dim: usize, digits: u32) -> LuFactors {
    let bits = digits_to_bits(digits);
    let mut tmp = Float::new(bits);
    let mut max_entry = Float::new(bits);
    for x in &a {
        let m = x.norm1();
        if m > max_entry {
            max_entry = m;
        }
    }
    let mut perm: Vec<usize> = (0..dim).collect();
    let mut odd_swaps = false;
    let mut zero_pivot = None;
    let mut min_pivot = Float::with_val(bits, rug::float::Special::Infinity);

    for k in 0..dim {
        let mut best = k;
        let mut best_mag = a[k * dim + k].norm1();
        for i in (k + 1)..dim {
            let m = a[i * dim + k].norm1();
            if m > best_mag {
                best = i;
                best_mag = m;
            }
        }
        if best != k {
            for j in 0..dim {
                a.swap(k * dim + j, best * dim + j);
            }
            perm.swap(k, best);
            odd_swaps = !odd_swaps;
        }
        if best_mag < min_pivot {
            min_pivot.assign(&best_mag);
        }
        if best_mag.is_zero() {
            zero_pivot.get_or_insert(k);
            continue;
        }
        let inv_pivot = a[k * dim + k].recip();
        for i in (k + 1)..dim {
            let factor = a[i * dim + k].mul_ref(&inv_pivot);
            let (upper, lower) = a.split_at_mut(i * dim);
            let pivot_row = &upper[k * dim..k * dim + dim];
            let row = &mut lower[..dim];
            for j in (k + 1)..dim {
                row[j].sub_mul_assign(&factor, &pivot_row[j], &mut tmp);
            }
            row[k] = factor;
        }
    }

    LuFactors {
        dim,
        lu: a,
        perm,
        odd_swaps,
        zero_pivot,
        max_entry,
        min_pivot,
    }
}

fn flat_matrix(coeffs: &[BigComplex], dimension: usize, displacement: usize) -> Vec<BigComplex> {
    let mut out = Vec::with_capacity(dimension * dimension);
    for i in 0..dimension {
        for j in 0..dimension {
            out.push(coeffs[i + j + displacement + 1].clone());
        }
    }
    out
}

/// `H_D^d` and `H'/H` at the energy the series was built for.
pub fn evaluate(
    series: &SeriesEvaluation,
    dimension: usize,
    displacement: usize,
) -> Result<HankelEvaluation, HankelError> {
    check_order(series, dimension, displacement)?;
    let df = series.df_de.as_ref().ok_or(HankelError::MissingDerivatives)?;
    let digits = series.digits;
    let lu = factorize(flat_matrix(&series.f, dimension, displacement), dimension, digits);
    let value = lu.determinant(digits);
    let condition_estimate = lu.condition_estimate();

    if lu.zero_pivot.is_some() {
        return Ok(HankelEvaluation {
            value,
            dlog: None,
            dimension,
            displacement,
            digits_used: digits,
            condition_estimate,
        });
    }
    if condition_estimate > f64::from(digits) / 2.0 {
        return Err(HankelError::SingularToPrecision {
            dimension,
            digits,
            condition_estimate,
        });
    }
    let dmat = flat_matrix(df, dimension, displacement);
    let dlog = lu.trace_solve(&dmat, digits);
    Ok(HankelEvaluation {
        value,
        dlog: Some(dlog),
        dimension,
        displacement,
        digits_used: digits,
        condition_estimate,
    })
}

/// `log10` of `|H|` divided by the product of the row max-norms.
/// `-inf` when the determinant vanishes (including the all-zero matrix).
pub fn log10_root_residual(
    series: &SeriesEvaluation,
    dimension: usize,
    displacement: usize,
) -> Result<f64, HankelError> {
    check_order(series, dimension, displacement)?;
    let digits = series.digits;
    let flat = flat_matrix(&series.f, dimension, displacement);
    let mut log_norms = 0.0;
    for i in 0..dimension {
        let row_max = flat[i * dimension..(i + 1) * dimension]
            .iter()
            .map(BigComplex::log10_abs)
            .fold(f64::NEG_INFINITY, f64::max);
        if row_max == f64::NEG_INFINITY {
            return Ok(f64::NEG_INFINITY);
        }
        log_norms += row_max;
    }
    let lu = factorize(flat, dimension, digits);
    Ok(lu.determinant(digits).log10_abs() - log_norms)
}

/// Scale-free root metric `|H| / Π_i max_j |M_ij|`, zero for a vanishing matrix.
pub fn root_condition_residual(
    series: &SeriesEvaluation,
    dimension: usize,
    displacement: usize,
) -> Result<f64, HankelError> {
    Ok(10f64.powf(log10_root_residual(series, dimension, displacement)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::potential::PotentialModel;
    use crate::series::{riccati_coefficients, SeriesRequest};
    use rand::{Rng, SeedableRng};

    fn synthetic(values: &[(f64, f64)], digits: u32) -> SeriesEvaluation {
        let f: Vec<BigComplex> = values
            .iter()
            .map(|&(re, im)| BigComplex::from_f64(re, im, digits))
            .collect();
        let df = vec![BigComplex::zero(digits); f.len()];
        SeriesEvaluation {
            f,
            df_de: Some(df),
            digits,
        }
    }

    #[test]
    fn matrix_layout() {
        let s = synthetic(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0), (3.0, 0.0), (4.0, 0.0)], 30);
        let m1 = hankel_matrix(&s, 1, 0).unwrap();
        assert_eq!(m1[0][0], s.f[1]);
        let m2 = hankel_matrix(&s, 2, 0).unwrap();
        assert_eq!(m2[0], vec![s.f[1].clone(), s.f[2].clone()]);
        assert_eq!(m2[1], vec![s.f[2].clone(), s.f[3].clone()]);
        let m2d = hankel_matrix(&s, 2, 1).unwrap();
        assert_eq!(m2d[0], vec![s.f[2].clone(), s.f[3].clone()]);
        assert_eq!(m2d[1], vec![s.f[3].clone(), s.f[4].clone()]);
        assert_eq!(m2d[0][1], m2d[1][0]);
    }

    #[test]
    fn insufficient_order() {
        let s = synthetic(&[(0.0, 0.0), (1.0, 0.0), (2.0, 0.0)], 30);
        assert!(matches!(
            hankel_matrix(&s, 2, 0),
            Err(HankelError::InsufficientOrder { needed: 3, available: 2, .. })
        ));
        assert!(evaluate(&s, 1, 2).is_err());
    }

    #[test]
    fn two_by_two_value() {
        let s = synthetic(&[(0.0, 0.0), (1.0, 0.0), (0.0, 0.0), (1.0, 0.0)], 30);
        let h = evaluate(&s, 2, 0).unwrap();
        assert_eq!(h.value.re.to_f64(), 1.0);
        assert!(h.value.im.is_zero());
        assert_eq!(root_condition_residual(&s, 2, 0).unwrap(), 1.0);
    }

    #[test]
    fn two_by_two_matches_expansion() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let vals: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0))).collect();
            let s = synthetic(&vals, 40);
            let h = evaluate(&s, 2, 0).unwrap().value;
            let expected = s.f[1].mul_ref(&s.f[3]).sub_ref(&s.f[2].mul_ref(&s.f[2]));
            let err = h.sub_ref(&expected).abs_f64();
            assert!(err < 1e-35, "err {err}");
        }
    }

    #[test]
    fn residual_is_scale_free() {
        let vals = [(0.0, 0.0), (1.3, 0.2), (-0.7, 0.1), (2.1, -0.4)];
        let s = synthetic(&vals, 40);
        let scaled: Vec<(f64, f64)> = vals.iter().map(|&(a, b)| (a * 1e3, b * 1e3)).collect();
        let t = synthetic(&scaled, 40);
        let r1 = root_condition_residual(&s, 2, 0).unwrap();
        let r2 = root_condition_residual(&t, 2, 0).unwrap();
        assert!((r1 - r2).abs() < 1e-12 * r1);
    }

    #[test]
    fn hydrogen_ground_state_determinant_vanishes() {
        let m = PotentialModel::scaled_exponential_f64(0.0, -1.0);
        let e = BigComplex::from_f64(-0.5, 0.0, 60);
        for dim in 1..8 {
            let s = riccati_coefficients(&SeriesRequest {
                model: &m,
                l: 0,
                energy: &e,
                order: required_order(dim, 0),
                digits: 60,
                derivatives: true,
            });
            let h = evaluate(&s, dim, 0).unwrap();
            assert!(h.value.is_zero());
            assert!(h.dlog.is_none());
            assert_eq!(root_condition_residual(&s, dim, 0).unwrap(), 0.0);
        }
    }

    #[test]
    fn first_dimension_root_at_minus_half() {
        // f_1 = (1 + 2E)/3 for l = 0, Z = -1, independent of V0
        let m = PotentialModel::scaled_exponential_f64(7.5, -1.0);
        let e = BigComplex::from_f64(-0.5, 0.0, 40);
        let s = riccati_coefficients(&SeriesRequest {
            model: &m,
            l: 0,
            energy: &e,
            order: 1,
            digits: 40,
            derivatives: true,
        });
        assert!(evaluate(&s, 1, 0).unwrap().value.is_zero());
    }

    #[test]
    fn singular_to_precision_is_reported() {
        // rank-one up to a 1e-30 perturbation, examined at 40 digits
        let mut s = synthetic(&[(0.0, 0.0), (1.0, 0.0), (1.0, 0.0), (1.0, 0.0)], 40);
        s.f[3] = BigComplex::parse("1.000000000000000000000000000001", "0", 40).unwrap();
        assert!(matches!(evaluate(&s, 2, 0), Err(HankelError::SingularToPrecision { .. })));
    }

    #[test]
    fn missing_derivatives() {
        let mut s = synthetic(&[(0.0, 0.0), (1.0, 0.0)], 30);
        s.df_de = None;
        assert_eq!(evaluate(&s, 1, 0).unwrap_err(), HankelError::MissingDerivatives);
    }
}

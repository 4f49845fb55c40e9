use riccati_pade::numerics::{BigComplex, PrecisionPolicy};
use riccati_pade::potential::PotentialModel;
use riccati_pade::solver::{
    continue_in_d, newton_polish, seed_scan, ContinuationSettings, NewtonOptions, SearchRegion, TraceStatus,
};
use rug::Rational;

fn hydrogen_region() -> SearchRegion {
    SearchRegion {
        re_min: -0.6,
        re_max: -0.05,
        im_min: -0.01,
        im_max: 0.0,
        grid_re: 56,
        grid_im: 6,
    }
}

fn polished(model: &PotentialModel, l: u32, dimension: usize, seeds: &[BigComplex]) -> Vec<BigComplex> {
    let policy = PrecisionPolicy::default();
    let opts = NewtonOptions {
        max_step: Some(0.1),
        ..NewtonOptions::with_tol(1e-20)
    };
    seeds
        .iter()
        .filter_map(|s| newton_polish(model, l, 0, dimension, s, &policy, &opts).ok())
        .map(|o| o.root)
        .collect()
}

fn near(roots: &[BigComplex], re: f64, im: f64, tol: f64) -> bool {
    roots
        .iter()
        .any(|r| (r.re.to_f64() - re).hypot(r.im.to_f64() - im) < tol)
}

#[test]
fn hydrogen_scan_finds_the_two_lowest_levels() {
    let model = PotentialModel::coulomb(Rational::from(-1));
    let seeds = seed_scan(&model, 0, 0, 4, &hydrogen_region(), &PrecisionPolicy::default()).unwrap();
    let roots = polished(&model, 0, 4, &seeds);
    assert!(near(&roots, -0.5, 0.0, 1e-12));
    assert!(near(&roots, -0.125, 0.0, 1e-3));
}

#[test]
fn default_scan_reaches_all_s_wave_resonances() {
    let model = PotentialModel::scaled_exponential_f64(7.5, -1.0);
    let seeds = seed_scan(&model, 0, 0, 12, &SearchRegion::default(), &PrecisionPolicy::default()).unwrap();
    let roots = polished(&model, 0, 12, &seeds);
    // D = 12 is far from converged for the broad state
    for (re, im, tol) in [(1.7805, -4.8e-5, 1e-3), (4.1015, -0.5786, 5e-3), (4.6635, -2.6832, 0.15)] {
        assert!(near(&roots, re, im, tol), "missing {re} {im}i");
    }
}

#[test]
fn region_without_roots_gives_no_seeds() {
    let model = PotentialModel::scaled_exponential_f64(7.5, -1.0);
    let region = SearchRegion {
        re_min: 100.0,
        re_max: 101.0,
        im_min: -1.0,
        im_max: 0.0,
        grid_re: 8,
        grid_im: 8,
    };
    let seeds = seed_scan(&model, 0, 0, 12, &region, &PrecisionPolicy::default()).unwrap();
    assert!(seeds.is_empty(), "{} seeds", seeds.len());
}

#[test]
fn invalid_region_is_rejected() {
    let model = PotentialModel::coulomb(Rational::from(-1));
    let region = SearchRegion {
        re_min: 1.0,
        re_max: 0.0,
        ..SearchRegion::default()
    };
    assert!(seed_scan(&model, 0, 0, 4, &region, &PrecisionPolicy::default()).is_err());
}

#[test]
fn hydrogen_continuation_converges_tightly() {
    let model = PotentialModel::coulomb(Rational::from(-1));
    let policy = PrecisionPolicy::default();
    let settings = ContinuationSettings {
        tol_target: 1e-30,
        ..ContinuationSettings::default()
    };
    let seeds = vec![BigComplex::from_f64(-0.49, 0.0, 30), BigComplex::from_f64(-0.13, 0.0, 30)];
    let traces = continue_in_d(&model, 0, 0, &seeds, 4..=40, &policy, &settings).unwrap();
    for level in [-0.5, -0.125] {
        let t = traces
            .iter()
            .find(|t| (t.best.re.to_f64() - level).abs() < 1e-6)
            .unwrap_or_else(|| panic!("no trace at {level}"));
        assert_eq!(t.status, TraceStatus::Converged);
        assert!(t.best_uncertainty < 1e-30, "{level}: {:e}", t.best_uncertainty);
        assert!(t.best.im.is_zero());
    }
}

#[test]
fn duplicate_seeds_merge_into_one_trace() {
    let model = PotentialModel::scaled_exponential_f64(7.5, -1.0);
    let policy = PrecisionPolicy::default();
    let settings = ContinuationSettings::default();
    let one = vec![BigComplex::from_f64(3.85, -0.14, 30)];
    let two = vec![
        BigComplex::from_f64(3.85, -0.14, 30),
        BigComplex::from_f64(3.849, -0.137, 30),
    ];
    let a = continue_in_d(&model, 1, 0, &one, 12..=40, &policy, &settings).unwrap();
    let b = continue_in_d(&model, 1, 0, &two, 12..=40, &policy, &settings).unwrap();
    assert_eq!(a.len(), 1);
    assert_eq!(b.len(), 1);
    assert_eq!(a[0].status, TraceStatus::Converged);
    assert!(a[0].best.sub_ref(&b[0].best).abs_f64() < 1e-18);
}

#[test]
fn inverted_dimension_range_is_rejected() {
    let model = PotentialModel::coulomb(Rational::from(-1));
    let seeds = vec![BigComplex::from_f64(-0.5, 0.0, 30)];
    let r = continue_in_d(
        &model,
        0,
        0,
        &seeds,
        10..=5,
        &PrecisionPolicy::default(),
        &ContinuationSettings::default(),
    );
    assert!(r.is_err());
}

mod common;

use agglom::econometrics::{fit_ols_fe, fit_sem_fe, lm_tests};
use agglom::numerics::least_squares;
use agglom::spatial::global_moran;
use agglom::synth::{gen_density_panel, DensityParams};
use common::*;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

#[test]
fn ols_fe_recovers_coefficients() {
    let w = grid_weights(5, 6);
    let p = slm_panel(&w, 0.0, 0.1, 40, 0);
    let fit = fit_ols_fe(&design(&p.panel)).unwrap();
    for (c, truth) in fit.coefficients.iter().zip([1.0, -0.5]) {
        assert!((c.estimate.value - truth).abs() <= 3.0 * c.estimate.se, "{} {:?}", c.name, c.estimate);
    }
}

#[test]
fn density_elasticities_are_recovered_in_logs() {
    let p = DensityParams {
        omega: 1.7,
        beta1: 0.6,
        beta2: 0.25,
        sigma: 0.05,
        cities: 30,
        periods: 16,
        start_year: 2003,
        labor_mu: 1.0,
        labor_sd: 0.5,
        capital_mu: 2.0,
        capital_sd: 0.5,
    };
    let ds = gen_density_panel(&p, 41).unwrap();
    let rows: Vec<(f64, f64, f64)> = (0..30)
        .flat_map(|c| (0..16).map(move |t| (c, t)))
        .map(|(c, t)| (ds.at(c, t, 0).unwrap().ln(), ds.at(c, t, 1).unwrap().ln(), ds.at(c, t, 2).unwrap().ln()))
        .collect();
    let x = DMatrix::from_fn(rows.len(), 3, |i, j| match j {
        0 => 1.0,
        1 => rows[i].1,
        _ => rows[i].2,
    });
    let y = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.0));
    let b = least_squares(&x, &y).unwrap().coefficients;
    assert!((b[0] - 1.7f64.ln()).abs() < 0.05);
    assert!((b[1] - 0.6).abs() < 0.02);
    assert!((b[2] - 0.25).abs() < 0.02);
}

#[test]
fn lm_tests_have_nominal_size() {
    let w = grid_weights(5, 6);
    let rejections: Vec<[bool; 4]> = (0..500u64)
        .into_par_iter()
        .map(|rep| {
            let p = slm_panel(&w, 0.0, 1.0, 42, rep);
            let d = design(&p.panel);
            let ols = fit_ols_fe(&d).unwrap();
            let lm = lm_tests(&d, &ols, &w).unwrap();
            [lm.lm_lag.p < 0.05, lm.lm_error.p < 0.05, lm.robust_lm_lag.p < 0.05, lm.robust_lm_error.p < 0.05]
        })
        .collect();
    for k in 0..4 {
        let rate = rejections.iter().filter(|r| r[k]).count() as f64 / rejections.len() as f64;
        assert!((0.02..=0.09).contains(&rate), "test {k}: rejection rate {rate}");
    }
}

#[test]
fn lm_lag_dominates_under_lag_process() {
    let w = grid_weights(5, 6);
    let wins = (0..200u64)
        .into_par_iter()
        .filter(|&rep| {
            let p = slm_panel(&w, 0.5, 1.0, 43, rep);
            let d = design(&p.panel);
            let ols = fit_ols_fe(&d).unwrap();
            let lm = lm_tests(&d, &ols, &w).unwrap();
            lm.lm_lag.statistic > lm.lm_error.statistic
        })
        .count();
    assert!(wins > 100, "{wins} of 200");
}

#[test]
fn sem_disturbances_are_positively_autocorrelated() {
    let w = grid_weights(5, 6);
    let positive = (0..200u64)
        .into_par_iter()
        .filter(|&rep| {
            let p = sem_panel(&w, 0.5, 1.0, 44, rep);
            // Moran's I of u_t averaged over the periods of one replicate
            let total: f64 = p
                .disturbances
                .iter()
                .map(|u| global_moran(u, &w, 0, 0).unwrap().statistic)
                .sum();
            total > 0.0
        })
        .count();
    assert!(positive >= 190, "{positive} of 200");
}

#[test]
fn sem_without_spatial_error_matches_ols() {
    let w = grid_weights(5, 6);
    let p = sem_panel(&w, 0.0, 0.5, 45, 0);
    let d = design(&p.panel);
    let sem = fit_sem_fe(&d, &w).unwrap();
    let ols = fit_ols_fe(&d).unwrap();
    let lambda = sem.spatial.unwrap();
    assert!(lambda.value.abs() < 3.0 * lambda.se, "{lambda:?}");
    for (a, b) in sem.coefficients.iter().zip(&ols.coefficients) {
        assert!((a.estimate.value - b.estimate.value).abs() < b.estimate.se);
    }
    assert!(sem.loglik >= ols.loglik - 1e-9);
}

mod common;

use agglom::econometrics::{
    build_design, fit_ols_fe, fit_sem_fe, fit_slm_fe, lm_tests, numerical_hessian, ModelSpec, SlmProfile, SpatialData,
};
use agglom::numerics::{eig_sym, least_squares, maximize_1d, SymMatrix};
use agglom::panel::PanelDataset;
use agglom::spatial::{build_weights, global_moran};
use agglom::synth::city_names;
use approx::assert_relative_eq;
use common::*;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rand_distr::StandardNormal;

/// Kronecker product `I_T (x) W`, year-major.
fn block_diag(w: &DMatrix<f64>, t: usize) -> DMatrix<f64> {
    let n = w.nrows();
    let mut out = DMatrix::zeros(n * t, n * t);
    for s in 0..t {
        out.view_mut((s * n, s * n), (n, n)).copy_from(w);
    }
    out
}

/// Stacks a design's `(y, X)` year-major after explicit city demeaning.
fn stacked(ds: &PanelDataset) -> (DVector<f64>, DMatrix<f64>) {
    let (n, t, k) = (ds.cities().len(), ds.years().len(), ds.variables().len() - 1);
    let col = |v: usize| -> DVector<f64> {
        let mut out = DVector::zeros(n * t);
        for c in 0..n {
            let m: f64 = (0..t).map(|s| ds.at(c, s, v).unwrap()).sum::<f64>() / t as f64;
            for s in 0..t {
                out[s * n + c] = ds.at(c, s, v).unwrap() - m;
            }
        }
        out
    };
    let mut x = DMatrix::zeros(n * t, k);
    for j in 0..k {
        x.set_column(j, &col(j + 1));
    }
    (col(0), x)
}

#[test]
fn ols_fe_matches_dummy_variable_regression() {
    let mut r = rng(11);
    let n = 7;
    let years: Vec<i32> = (2000..2006).collect();
    let mut ds = PanelDataset::new(city_names(n), years.clone(), vec!["y".into(), "x1".into(), "x2".into()]).unwrap();
    for c in 0..n {
        let fe = r.random_range(-3.0..3.0);
        for t in 0..years.len() {
            let x1: f64 = r.sample(StandardNormal);
            let x2: f64 = r.sample(StandardNormal);
            let e: f64 = r.sample(StandardNormal);
            ds.set_at(c, t, 0, Some(fe + 0.7 * x1 - 1.2 * x2 + 0.3 * e));
            ds.set_at(c, t, 1, Some(x1));
            ds.set_at(c, t, 2, Some(x2));
        }
    }
    // drop a few cells to make the panel unbalanced
    ds.set_at(2, 3, 0, None);
    ds.set_at(5, 0, 1, None);
    let d = build_design(&ds, &two_regressor_spec()).unwrap();
    let fit = fit_ols_fe(&d).unwrap();

    let rows = d.nobs();
    let mut z = DMatrix::zeros(rows, 2 + n);
    for i in 0..rows {
        z[(i, 0)] = d.x[(i, 0)];
        z[(i, 1)] = d.x[(i, 1)];
        z[(i, 2 + d.city_idx[i])] = 1.0;
    }
    let ztz = z.transpose() * &z;
    let coef = ztz.try_inverse().unwrap() * z.transpose() * &d.y;
    let resid = &d.y - &z * &coef;
    let rss = resid.norm_squared();
    let s2 = rss / rows as f64;
    let cov = (z.transpose() * &z).try_inverse().unwrap() * s2;

    for j in 0..2 {
        let est = fit.coefficients[j].estimate;
        assert_relative_eq!(est.value, coef[j], epsilon = 1e-10);
        assert_relative_eq!(est.se, cov[(j, j)].sqrt(), epsilon = 1e-10);
    }
    assert_relative_eq!(fit.sigma2, s2, epsilon = 1e-12);
    let loglik = -0.5 * rows as f64 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0);
    assert_relative_eq!(fit.loglik, loglik, epsilon = 1e-9);
}

#[test]
fn least_squares_matches_normal_equations() {
    let mut r = rng(12);
    for _ in 0..20 {
        let n = r.random_range(5..30);
        let k = r.random_range(1..5);
        let x = DMatrix::from_fn(n, k, |_, _| r.sample::<f64, _>(StandardNormal));
        let y = DVector::from_fn(n, |_, _| r.sample::<f64, _>(StandardNormal));
        let ls = least_squares(&x, &y).unwrap();
        let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
        assert!((ls.coefficients - &beta).amax() < 1e-10);
        assert_relative_eq!(ls.rss, (&y - &x * beta).norm_squared(), epsilon = 1e-10);
    }
}

#[test]
fn symmetric_eigen_matches_nalgebra() {
    let mut r = rng(13);
    for _ in 0..20 {
        let n = r.random_range(1..9);
        let a = DMatrix::from_fn(n, n, |_, _| r.sample::<f64, _>(StandardNormal));
        let s = &a + a.transpose();
        let ours = eig_sym(&SymMatrix::new(s.clone()).unwrap());
        let mut theirs: Vec<f64> = SymmetricEigen::new(s.clone()).eigenvalues.iter().copied().collect();
        theirs.sort_by(f64::total_cmp);
        let mut mine = ours.values.clone();
        mine.sort_by(f64::total_cmp);
        for (a, b) in mine.iter().zip(&theirs) {
            assert!((a - b).abs() < 1e-10);
        }
        for k in 0..n {
            let v = ours.vector(k);
            assert!((&s * &v - ours.values[k] * &v).norm() < 1e-9);
        }
    }
}

#[test]
fn weight_spectrum_satisfies_trace_and_determinant_identities() {
    let mut r = rng(14);
    for _ in 0..20 {
        let n = r.random_range(3..10);
        let w = random_weights(&mut r, n, true);
        let wm = w.matrix().clone();
        let mut power = DMatrix::<f64>::identity(n, n);
        for k in 1..=4 {
            power = &power * &wm;
            let moment: f64 = w.spectrum().iter().map(|l| l.powi(k)).sum();
            assert!((moment - power.trace()).abs() < 1e-9, "power {k}");
        }
        for l in w.spectrum() {
            let det = (&wm - *l * DMatrix::<f64>::identity(n, n)).determinant();
            assert!(det.abs() < 1e-8, "det at {l} is {det}");
        }
        assert_relative_eq!(w.max_eigenvalue(), 1.0, epsilon = 1e-10);
    }
}

#[test]
fn maximize_matches_closed_form_optima() {
    let m = maximize_1d(|x| -(x - 0.3f64).powi(2), -1.0, 1.0, 201, 1e-10).unwrap();
    assert!((m.x - 0.3).abs() < 1e-7);
    // x ln x has its minimum at 1/e
    let m = maximize_1d(|x: f64| -x * x.ln(), 0.01, 2.0, 201, 1e-10).unwrap();
    assert!((m.x - (-1.0f64).exp()).abs() < 1e-7);
    // two local maxima, the global one on the right
    let f = |x: f64| (-(x + 1.0).powi(2) * 20.0).exp() + 1.5 * (-(x - 1.2).powi(2) * 20.0).exp();
    let m = maximize_1d(f, -3.0, 3.0, 201, 1e-10).unwrap();
    assert!((m.x - 1.2).abs() < 1e-4);
}

fn slm_analytic_hessian(data: &SpatialData, rho: f64, beta: &DVector<f64>, s2: f64) -> DMatrix<f64> {
    let k = beta.len();
    let nobs = data.nobs() as f64;
    let t = data.periods as f64;
    let e = &data.y - rho * &data.wy - &data.x * beta;
    let mut h = DMatrix::zeros(k + 2, k + 2);
    h[(0, 0)] = -t * data.spectrum.iter().map(|l| l * l / (1.0 - rho * l).powi(2)).sum::<f64>()
        - data.wy.norm_squared() / s2;
    let xwy = data.x.transpose() * &data.wy;
    let xe = data.x.transpose() * &e;
    let xx = data.x.transpose() * &data.x;
    for j in 0..k {
        h[(0, j + 1)] = -xwy[j] / s2;
        h[(j + 1, k + 1)] = -xe[j] / (s2 * s2);
        for l in 0..k {
            h[(j + 1, l + 1)] = -xx[(j, l)] / s2;
        }
    }
    h[(0, k + 1)] = -data.wy.dot(&e) / (s2 * s2);
    h[(k + 1, k + 1)] = nobs / (2.0 * s2 * s2) - e.norm_squared() / (s2 * s2 * s2);
    h.fill_lower_triangle_with_upper_triangle();
    h
}

fn sem_analytic_hessian(data: &SpatialData, lambda: f64, beta: &DVector<f64>, s2: f64) -> DMatrix<f64> {
    let k = beta.len();
    let nobs = data.nobs() as f64;
    let t = data.periods as f64;
    let xs = &data.x - lambda * &data.wx;
    let e = &data.y - lambda * &data.wy - &xs * beta;
    let uw = &data.wy - &data.wx * beta;
    let mut h = DMatrix::zeros(k + 2, k + 2);
    h[(0, 0)] = -t * data.spectrum.iter().map(|l| l * l / (1.0 - lambda * l).powi(2)).sum::<f64>()
        - uw.norm_squared() / s2;
    let cross = -(xs.transpose() * &uw) - data.wx.transpose() * &e;
    let xe = xs.transpose() * &e;
    let xx = xs.transpose() * &xs;
    for j in 0..k {
        h[(0, j + 1)] = cross[j] / s2;
        h[(j + 1, k + 1)] = -xe[j] / (s2 * s2);
        for l in 0..k {
            h[(j + 1, l + 1)] = -xx[(j, l)] / s2;
        }
    }
    h[(0, k + 1)] = -e.dot(&uw) / (s2 * s2);
    h[(k + 1, k + 1)] = nobs / (2.0 * s2 * s2) - e.norm_squared() / (s2 * s2 * s2);
    h.fill_lower_triangle_with_upper_triangle();
    h
}

fn assert_close_matrices(a: &DMatrix<f64>, b: &DMatrix<f64>, rel: f64) {
    let scale = b.amax();
    for (x, y) in a.iter().zip(b.iter()) {
        assert!((x - y).abs() <= rel * scale, "{x} vs {y} (scale {scale})");
    }
}

fn standard_errors(h: &DMatrix<f64>) -> Vec<f64> {
    let cov = (-h).try_inverse().unwrap();
    (0..h.nrows()).map(|k| cov[(k, k)].sqrt()).collect()
}

#[test]
fn slm_hessian_and_standard_errors_match_analytic_forms() {
    let w = grid_weights(4, 5);
    for rep in 0..3 {
        let p = slm_panel(&w, 0.3, 0.5, 15, rep);
        let d = design(&p.panel);
        let data = SpatialData::new(&d, &w).unwrap();
        let fit = fit_slm_fe(&d, &w).unwrap();
        let rho = fit.spatial.unwrap().value;
        let beta = DVector::from_vec(fit.beta());
        let k = beta.len();
        let analytic = slm_analytic_hessian(&data, rho, &beta, fit.sigma2);

        let mut theta = vec![rho];
        theta.extend(beta.iter());
        theta.push(fit.sigma2);
        let mut floors = vec![1.0; k + 1];
        floors.push(fit.sigma2);
        let numeric = numerical_hessian(
            |th| data.slm_loglik(th[0], &DVector::from_column_slice(&th[1..=k]), th[k + 1]),
            &theta,
            &floors,
        );
        assert_close_matrices(&numeric, &analytic, 1e-5);

        let se = standard_errors(&analytic);
        assert_relative_eq!(fit.spatial.unwrap().se, se[0], max_relative = 1e-4);
        for j in 0..k {
            assert_relative_eq!(fit.coefficients[j].estimate.se, se[j + 1], max_relative = 1e-4);
        }
    }
}

#[test]
fn sem_hessian_and_standard_errors_match_analytic_forms() {
    let w = grid_weights(4, 5);
    for rep in 0..3 {
        let p = sem_panel(&w, 0.4, 0.5, 16, rep);
        let d = design(&p.panel);
        let data = SpatialData::new(&d, &w).unwrap();
        let fit = fit_sem_fe(&d, &w).unwrap();
        let lambda = fit.spatial.unwrap().value;
        let beta = DVector::from_vec(fit.beta());
        let k = beta.len();
        let analytic = sem_analytic_hessian(&data, lambda, &beta, fit.sigma2);

        let mut theta = vec![lambda];
        theta.extend(beta.iter());
        theta.push(fit.sigma2);
        let mut floors = vec![1.0; k + 1];
        floors.push(fit.sigma2);
        let numeric = numerical_hessian(
            |th| data.sem_loglik(th[0], &DVector::from_column_slice(&th[1..=k]), th[k + 1]),
            &theta,
            &floors,
        );
        assert_close_matrices(&numeric, &analytic, 1e-5);

        let se = standard_errors(&analytic);
        assert_relative_eq!(fit.spatial.unwrap().se, se[0], max_relative = 1e-4);
        for j in 0..k {
            assert_relative_eq!(fit.coefficients[j].estimate.se, se[j + 1], max_relative = 1e-4);
        }
    }
}

#[test]
fn slm_estimate_maximizes_full_likelihood_on_a_fine_grid() {
    let w = grid_weights(5, 6);
    let p = slm_panel(&w, 0.5, 0.3, 17, 0);
    let d = design(&p.panel);
    let data = SpatialData::new(&d, &w).unwrap();
    let fit = fit_slm_fe(&d, &w).unwrap();
    let profile = SlmProfile::new(&data).unwrap();
    let (lo, hi) = data.interval;
    let best = (1..2000)
        .map(|i| lo + (hi - lo) * i as f64 / 2000.0)
        .map(|r| profile.loglik(&data, r))
        .fold(f64::NEG_INFINITY, f64::max);
    assert!(fit.loglik >= best - 1e-9);
    // concentrated value agrees with the full likelihood at the estimate
    let full = data.slm_loglik(fit.spatial.unwrap().value, &DVector::from_vec(fit.beta()), fit.sigma2);
    assert_relative_eq!(full, fit.loglik, epsilon = 1e-8);
}

#[test]
fn lm_statistics_match_kronecker_forms() {
    let w = grid_weights(4, 4);
    let p = slm_panel(&w, 0.2, 1.0, 18, 0);
    let d = design(&p.panel);
    let ols = fit_ols_fe(&d).unwrap();
    let lm = lm_tests(&d, &ols, &w).unwrap();

    // oracle on the stacked, year-major layout; grid cities are already sorted
    let (y, x) = stacked(&p.panel);
    let t = p.panel.years().len();
    let wn = w.matrix().clone();
    let big_w = block_diag(&wn, t);
    let beta = (x.transpose() * &x).try_inverse().unwrap() * x.transpose() * &y;
    let e = &y - &x * &beta;
    let s2 = e.norm_squared() / e.len() as f64;
    let nt = e.len();
    let m = DMatrix::<f64>::identity(nt, nt) - &x * (x.transpose() * &x).try_inverse().unwrap() * x.transpose();
    let t_w = t as f64 * (wn.transpose() * &wn + &wn * &wn).trace();
    let wxb = &big_w * &x * &beta;
    let j = ((&wxb).transpose() * &m * &wxb)[(0, 0)] / s2 + t_w;
    let lag_score = e.dot(&(&big_w * &y)) / s2;
    let err_score = e.dot(&(&big_w * &e)) / s2;

    assert_relative_eq!(lm.lm_lag.statistic, lag_score.powi(2) / j, max_relative = 1e-9);
    assert_relative_eq!(lm.lm_error.statistic, err_score.powi(2) / t_w, max_relative = 1e-9);
    assert_relative_eq!(lm.robust_lm_lag.statistic, (lag_score - err_score).powi(2) / (j - t_w), max_relative = 1e-9);
    assert_relative_eq!(
        lm.robust_lm_error.statistic,
        (err_score - t_w / j * lag_score).powi(2) / (t_w * (1.0 - t_w / j)),
        max_relative = 1e-9
    );
}

#[test]
fn chi_square_tail_matches_statrs_cdf() {
    use agglom::econometrics::chi2_1_survival;
    use statrs::distribution::{ChiSquared, ContinuousCDF};
    let chi = ChiSquared::new(1.0).unwrap();
    for x in [0.01, 0.5, 1.0, 2.706, 3.841, 6.635, 12.0] {
        assert_relative_eq!(chi2_1_survival(x), 1.0 - chi.cdf(x), epsilon = 1e-10);
    }
}

#[test]
fn moran_variance_matches_gaussian_simulation() {
    let cities = city_names(6);
    let edges = [
        ("C01", "C02"),
        ("C02", "C03"),
        ("C03", "C04"),
        ("C04", "C05"),
        ("C05", "C06"),
        ("C01", "C04"),
    ];
    let w = build_weights(&edges, &cities, true).unwrap();
    let mut r = rng(19);
    let draws: Vec<f64> = (0..200_000)
        .map(|_| {
            let x: Vec<f64> = (0..6).map(|_| r.sample(StandardNormal)).collect();
            global_moran(&x, &w, 0, 0).unwrap().statistic
        })
        .collect();
    let first = global_moran(&[1.0, 2.0, 0.5, -1.0, 3.0, 0.0], &w, 0, 0).unwrap();
    assert_relative_eq!(mean(&draws), first.expectation, epsilon = 0.003);
    let var = sd(&draws).powi(2);
    assert_relative_eq!(var, first.variance, max_relative = 0.02);
}

#[test]
fn quadratic_spec_fits_exact_inverted_u() {
    // noise-free curve: the coefficients come back exactly
    let n = 6;
    let years: Vec<i32> = (0..5).collect();
    let mut ds = PanelDataset::new(city_names(n), years.clone(), vec!["y".into(), "f".into()]).unwrap();
    let mut r = rng(20);
    for c in 0..n {
        for t in 0..years.len() {
            let f = r.random_range(0.5..3.5);
            ds.set_at(c, t, 0, Some(c as f64 + 0.8 * f - 0.2 * f * f));
            ds.set_at(c, t, 1, Some(f));
        }
    }
    let spec = ModelSpec {
        name: "u".into(),
        dependent: "y".into(),
        focal: "f".into(),
        include_quadratic: true,
        controls: vec![],
        year_effects: false,
    };
    let fit = fit_ols_fe(&build_design(&ds, &spec).unwrap()).unwrap();
    assert_relative_eq!(fit.coefficient("f").unwrap().value, 0.8, epsilon = 1e-9);
    assert_relative_eq!(fit.coefficient("f2").unwrap().value, -0.2, epsilon = 1e-9);
}

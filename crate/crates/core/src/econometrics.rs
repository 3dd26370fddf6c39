//! Fixed-effects panel regressions: within OLS and maximum-likelihood
//! spatial lag / spatial error models, LM diagnostics and table output.
//!
//! Spatial models are estimated by concentrating `beta` and `sigma^2` out of
//! the likelihood and searching the one-dimensional spatial parameter over
//! the interval where `I - rho W` stays nonsingular. The log-determinant
//! uses the cached spectrum of `W`. Standard errors come from a
//! central-difference Hessian of the full log-likelihood.

use std::collections::HashMap;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::numerics::{least_squares, maximize_1d, NumericsError};
use crate::panel::PanelDataset;
use crate::spatial::SpatialWeights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EconError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("{rows} usable rows, need at least {needed}")]
    InsufficientObservations { rows: usize, needed: usize },
    #[error("design is rank deficient after the within transform at column {column:?}")]
    RankDeficientDesign { column: String },
    #[error("spatial models need a balanced panel: {0}")]
    UnbalancedPanel(String),
    #[error("weights do not match the design: {0}")]
    WeightsMismatch(String),
    #[error("estimation did not converge: {0}")]
    NonConvergence(String),
    #[error("{parameter} estimate {value} is on the edge of the search interval ({lo}, {hi})")]
    BoundarySolution { parameter: &'static str, value: f64, lo: f64, hi: f64 },
    #[error(transparent)]
    Numerics(#[from] NumericsError),
}

/// One regression: dependent, focal regressor (optionally with its
/// square) and controls, with city fixed effects.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub name: String,
    pub dependent: String,
    pub focal: String,
    #[serde(default)]
    pub include_quadratic: bool,
    #[serde(default)]
    pub controls: Vec<String>,
    /// Adds period fixed effects on top of the city effects.
    #[serde(default)]
    pub year_effects: bool,
}

impl ModelSpec {
    pub fn quadratic_name(&self) -> String {
        format!("{}2", self.focal)
    }

    pub fn with_quadratic(&self, include: bool) -> ModelSpec {
        ModelSpec {
            include_quadratic: include,
            ..self.clone()
        }
    }

    pub fn regressor_names(&self) -> Vec<String> {
        let mut names = vec![self.focal.clone()];
        if self.include_quadratic {
            names.push(self.quadratic_name());
        }
        names.extend(self.controls.iter().cloned());
        names
    }
}

/// Stacked observations after listwise deletion, city-major then year.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrices {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub names: Vec<String>,
    pub city_idx: Vec<usize>,
    pub year_idx: Vec<usize>,
    pub cities: Vec<String>,
    pub years: Vec<i32>,
    pub balanced: bool,
    pub year_effects: bool,
}

impl DesignMatrices {
    pub fn nobs(&self) -> usize {
        self.y.len()
    }
}

pub fn build_design(ds: &PanelDataset, spec: &ModelSpec) -> Result<DesignMatrices, EconError> {
    if spec.controls.contains(&spec.focal) {
        return Err(EconError::InvalidSpec(format!(
            "focal regressor {:?} also listed as a control",
            spec.focal
        )));
    }
    if spec.controls.contains(&spec.dependent) || spec.focal == spec.dependent {
        return Err(EconError::InvalidSpec(format!(
            "dependent variable {:?} also used as a regressor",
            spec.dependent
        )));
    }
    let lookup = |v: &str| ds.variable_index(v).map_err(|_| EconError::UnknownVariable(v.to_string()));
    let dep = lookup(&spec.dependent)?;
    let focal = lookup(&spec.focal)?;
    let controls: Vec<usize> = spec.controls.iter().map(|c| lookup(c)).collect::<Result<_, _>>()?;
    let names = spec.regressor_names();
    let k = names.len();

    let mut y = Vec::new();
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut city_raw = Vec::new();
    let mut year_raw = Vec::new();
    for c in 0..ds.cities().len() {
        for t in 0..ds.years().len() {
            let Some(yv) = ds.at(c, t, dep) else { continue };
            let Some(fv) = ds.at(c, t, focal) else { continue };
            let mut row = Vec::with_capacity(k);
            row.push(fv);
            if spec.include_quadratic {
                row.push(fv * fv);
            }
            let mut complete = true;
            for &v in &controls {
                match ds.at(c, t, v) {
                    Some(x) => row.push(x),
                    None => {
                        complete = false;
                        break;
                    }
                }
            }
            if !complete {
                continue;
            }
            y.push(yv);
            rows.push(row);
            city_raw.push(c);
            year_raw.push(t);
        }
    }
    if y.len() < k + 2 {
        return Err(EconError::InsufficientObservations { rows: y.len(), needed: k + 2 });
    }
    Ok(assemble(
        y,
        rows,
        names,
        &city_raw,
        &year_raw,
        ds.cities(),
        ds.years(),
        spec.year_effects,
    ))
}

#[allow(clippy::too_many_arguments)]
fn assemble(
    y: Vec<f64>,
    rows: Vec<Vec<f64>>,
    names: Vec<String>,
    city_raw: &[usize],
    year_raw: &[usize],
    all_cities: &[String],
    all_years: &[i32],
    year_effects: bool,
) -> DesignMatrices {
    let mut present_c: Vec<usize> = city_raw.to_vec();
    present_c.sort_unstable();
    present_c.dedup();
    let mut present_t: Vec<usize> = year_raw.to_vec();
    present_t.sort_unstable();
    present_t.dedup();
    let cmap: HashMap<usize, usize> = present_c.iter().enumerate().map(|(i, &c)| (c, i)).collect();
    let tmap: HashMap<usize, usize> = present_t.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let nobs = y.len();
    let k = names.len();
    let x = DMatrix::from_fn(nobs, k, |r, j| rows[r][j]);
    DesignMatrices {
        y: DVector::from_vec(y),
        x,
        names,
        city_idx: city_raw.iter().map(|c| cmap[c]).collect(),
        year_idx: year_raw.iter().map(|t| tmap[t]).collect(),
        balanced: nobs == present_c.len() * present_t.len(),
        cities: present_c.iter().map(|&c| all_cities[c].clone()).collect(),
        years: present_t.iter().map(|&t| all_years[t]).collect(),
        year_effects,
    }
}

/// Reduces an unbalanced design to its largest balanced block, either by
/// dropping incomplete cities or by dropping incomplete years, whichever
/// keeps more rows (ties keep more cities).
pub fn balance(d: &DesignMatrices) -> Result<DesignMatrices, EconError> {
    if d.balanced {
        return Ok(d.clone());
    }
    let (nc, nt) = (d.cities.len(), d.years.len());
    let mut present = vec![vec![false; nt]; nc];
    for (&c, &t) in d.city_idx.iter().zip(&d.year_idx) {
        present[c][t] = true;
    }
    let full_cities: Vec<usize> = (0..nc).filter(|&c| present[c].iter().all(|&p| p)).collect();
    let full_years: Vec<usize> = (0..nt).filter(|&t| (0..nc).all(|c| present[c][t])).collect();
    let by_cities = full_cities.len() * nt;
    let by_years = nc * full_years.len();
    let keep: Box<dyn Fn(usize, usize) -> bool> = if by_years >= by_cities {
        Box::new(move |_c, t| full_years.contains(&t))
    } else {
        Box::new(move |c, _t| full_cities.contains(&c))
    };

    let rows: Vec<usize> = (0..d.nobs()).filter(|&r| keep(d.city_idx[r], d.year_idx[r])).collect();
    let k = d.names.len();
    if rows.len() < k + 2 {
        return Err(EconError::InsufficientObservations { rows: rows.len(), needed: k + 2 });
    }
    let y: Vec<f64> = rows.iter().map(|&r| d.y[r]).collect();
    let xrows: Vec<Vec<f64>> = rows.iter().map(|&r| d.x.row(r).iter().copied().collect()).collect();
    let c: Vec<usize> = rows.iter().map(|&r| d.city_idx[r]).collect();
    let t: Vec<usize> = rows.iter().map(|&r| d.year_idx[r]).collect();
    Ok(assemble(y, xrows, d.names.clone(), &c, &t, &d.cities, &d.years, d.year_effects))
}

const WITHIN_MAX_SWEEPS: usize = 1000;

/// Removes city means (and year means when `year_effects` is set, by
/// alternating projections, exact after one sweep on balanced panels).
pub fn within(d: &DesignMatrices, values: &[f64]) -> Vec<f64> {
    let mut out = demean_by(values, &d.city_idx, d.cities.len());
    if d.year_effects {
        let scale = values.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(f64::MIN_POSITIVE);
        for _ in 0..WITHIN_MAX_SWEEPS {
            let by_year = demean_by(&out, &d.year_idx, d.years.len());
            let next = demean_by(&by_year, &d.city_idx, d.cities.len());
            let change = next.iter().zip(&out).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            out = next;
            if change <= 1e-14 * scale {
                break;
            }
        }
    }
    out
}

fn demean_by(values: &[f64], group: &[usize], groups: usize) -> Vec<f64> {
    let mut sum = vec![0.0; groups];
    let mut count = vec![0usize; groups];
    for (v, &g) in values.iter().zip(group) {
        sum[g] += v;
        count[g] += 1;
    }
    values
        .iter()
        .zip(group)
        .map(|(v, &g)| v - sum[g] / count[g] as f64)
        .collect()
}

fn within_matrix(d: &DesignMatrices, m: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = m.clone();
    for j in 0..m.ncols() {
        let col: Vec<f64> = m.column(j).iter().copied().collect();
        let dm = within(d, &col);
        out.set_column(j, &DVector::from_vec(dm));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    #[serde(rename = "OLS-FE")]
    OlsFe,
    #[serde(rename = "SLM-FE")]
    SlmFe,
    #[serde(rename = "SEM-FE")]
    SemFe,
}

impl ModelKind {
    pub fn label(self) -> &'static str {
        match self {
            ModelKind::OlsFe => "OLS-FE",
            ModelKind::SlmFe => "SLM-FE",
            ModelKind::SemFe => "SEM-FE",
        }
    }

    pub fn spatial_symbol(self) -> Option<&'static str> {
        match self {
            ModelKind::OlsFe => None,
            ModelKind::SlmFe => Some("rho"),
            ModelKind::SemFe => Some("lambda"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub se: f64,
    pub t: f64,
}

impl Estimate {
    fn new(value: f64, se: f64) -> Estimate {
        Estimate { value, se, t: value / se }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Coefficient {
    pub name: String,
    #[serde(flatten)]
    pub estimate: Estimate,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpatialFit {
    pub kind: ModelKind,
    pub spatial: Option<Estimate>,
    pub coefficients: Vec<Coefficient>,
    pub sigma2: f64,
    pub loglik: f64,
    pub r2: f64,
    pub nobs: usize,
    /// Within-transformed residuals (structural residuals for spatial
    /// models).
    #[serde(skip)]
    pub residuals: Vec<f64>,
}

impl SpatialFit {
    pub fn coefficient(&self, name: &str) -> Option<&Estimate> {
        self.coefficients.iter().find(|c| c.name == name).map(|c| &c.estimate)
    }

    pub fn beta(&self) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.estimate.value).collect()
    }
}

fn gaussian_loglik(rss: f64, nobs: usize) -> f64 {
    let n = nobs as f64;
    -0.5 * n * ((2.0 * std::f64::consts::PI * rss / n).ln() + 1.0)
}

/// Maps a least-squares rank failure (or a column annihilated by the
/// within transform) to the offending regressor name.
fn check_within_rank(d: &DesignMatrices, xt: &DMatrix<f64>) -> Result<(), EconError> {
    for j in 0..d.x.ncols() {
        let raw = d.x.column(j).norm();
        if xt.column(j).norm() <= 1e-9 * raw || raw == 0.0 {
            return Err(EconError::RankDeficientDesign { column: d.names[j].clone() });
        }
    }
    Ok(())
}

fn ls_named(d: &DesignMatrices, x: &DMatrix<f64>, y: &DVector<f64>) -> Result<crate::numerics::LeastSquares, EconError> {
    least_squares(x, y).map_err(|e| match e {
        NumericsError::RankDeficient { column } => EconError::RankDeficientDesign {
            column: d.names[column].clone(),
        },
        other => EconError::Numerics(other),
    })
}

/// Within (city fixed effects) OLS. `sigma^2 = RSS / NT`; standard errors
/// use that ML variance.
pub fn fit_ols_fe(d: &DesignMatrices) -> Result<SpatialFit, EconError> {
    let yt = DVector::from_vec(within(d, d.y.as_slice()));
    let xt = within_matrix(d, &d.x);
    check_within_rank(d, &xt)?;
    let ls = ls_named(d, &xt, &yt)?;
    let nobs = d.nobs();
    let sigma2 = ls.rss / nobs as f64;
    let xtx = xt.transpose() * &xt;
    let inv = xtx
        .cholesky()
        .ok_or_else(|| EconError::RankDeficientDesign { column: d.names[0].clone() })?
        .inverse();
    let coefficients = d
        .names
        .iter()
        .enumerate()
        .map(|(j, name)| Coefficient {
            name: name.clone(),
            estimate: Estimate::new(ls.coefficients[j], (sigma2 * inv[(j, j)]).sqrt()),
        })
        .collect();
    let tss = yt.norm_squared();
    Ok(SpatialFit {
        kind: ModelKind::OlsFe,
        spatial: None,
        coefficients,
        sigma2,
        loglik: gaussian_loglik(ls.rss, nobs),
        r2: 1.0 - ls.rss / tss,
        nobs,
        residuals: ls.residuals.iter().copied().collect(),
    })
}

/// Inset from the admissible interval endpoints.
pub const SEARCH_INSET: f64 = 1e-6;
pub const SEARCH_GRID: usize = 201;
pub const SEARCH_TOL: f64 = 1e-8;
pub const HESSIAN_STEP: f64 = 1e-5;

/// Within-transformed data with the spatial lags needed by both models.
#[derive(Debug, Clone)]
pub struct SpatialData {
    pub y: DVector<f64>,
    pub wy: DVector<f64>,
    pub x: DMatrix<f64>,
    pub wx: DMatrix<f64>,
    pub spectrum: Vec<f64>,
    pub periods: usize,
    pub interval: (f64, f64),
    names: Vec<String>,
}

impl SpatialData {
    pub fn new(d: &DesignMatrices, w: &SpatialWeights) -> Result<SpatialData, EconError> {
        if !d.balanced {
            return Err(EconError::UnbalancedPanel(format!(
                "{} rows for {} cities x {} years",
                d.nobs(),
                d.cities.len(),
                d.years.len()
            )));
        }
        if w.len() != d.cities.len() {
            return Err(EconError::WeightsMismatch(format!(
                "weights cover {} cities, design has {}",
                w.len(),
                d.cities.len()
            )));
        }
        let order: Vec<usize> = d
            .cities
            .iter()
            .map(|c| {
                w.city_index(c)
                    .ok_or_else(|| EconError::WeightsMismatch(format!("city {c:?} missing from weights")))
            })
            .collect::<Result<_, _>>()?;
        let w = w.reordered(&order);
        let (lo, hi) = w.admissible_interval();
        if !lo.is_finite() || !hi.is_finite() {
            return Err(EconError::WeightsMismatch("weight matrix has no spatial structure".into()));
        }

        let n = d.cities.len();
        let mut row_of = vec![usize::MAX; n * d.years.len()];
        for r in 0..d.nobs() {
            row_of[d.city_idx[r] * d.years.len() + d.year_idx[r]] = r;
        }
        let lag = |v: &[f64]| -> Vec<f64> {
            let wm = w.matrix();
            (0..v.len())
                .map(|r| {
                    let (c, t) = (d.city_idx[r], d.year_idx[r]);
                    (0..n)
                        .map(|j| wm[(c, j)] * v[row_of[j * d.years.len() + t]])
                        .sum()
                })
                .collect()
        };

        let wy_raw = lag(d.y.as_slice());
        let mut wx_raw = d.x.clone();
        for j in 0..d.x.ncols() {
            let col: Vec<f64> = d.x.column(j).iter().copied().collect();
            wx_raw.set_column(j, &DVector::from_vec(lag(&col)));
        }
        let xt = within_matrix(d, &d.x);
        check_within_rank(d, &xt)?;
        Ok(SpatialData {
            y: DVector::from_vec(within(d, d.y.as_slice())),
            wy: DVector::from_vec(within(d, &wy_raw)),
            x: xt,
            wx: within_matrix(d, &wx_raw),
            spectrum: w.spectrum().to_vec(),
            periods: d.years.len(),
            interval: (lo, hi),
            names: d.names.clone(),
        })
    }

    pub fn nobs(&self) -> usize {
        self.y.len()
    }

    pub fn log_det(&self, rho: f64) -> f64 {
        self.spectrum.iter().map(|l| (1.0 - rho * l).abs().ln()).sum()
    }

    fn search_bounds(&self) -> (f64, f64) {
        (self.interval.0 + SEARCH_INSET, self.interval.1 - SEARCH_INSET)
    }

    /// Full SLM log-likelihood at `(rho, beta, sigma2)`.
    pub fn slm_loglik(&self, rho: f64, beta: &DVector<f64>, sigma2: f64) -> f64 {
        let e = &self.y - rho * &self.wy - &self.x * beta;
        let n = self.nobs() as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() + self.periods as f64 * self.log_det(rho)
            - e.norm_squared() / (2.0 * sigma2)
    }

    /// Full SEM log-likelihood at `(lambda, beta, sigma2)`.
    pub fn sem_loglik(&self, lambda: f64, beta: &DVector<f64>, sigma2: f64) -> f64 {
        let ys = &self.y - lambda * &self.wy;
        let xs = &self.x - lambda * &self.wx;
        let e = ys - xs * beta;
        let n = self.nobs() as f64;
        -0.5 * n * (2.0 * std::f64::consts::PI * sigma2).ln() + self.periods as f64 * self.log_det(lambda)
            - e.norm_squared() / (2.0 * sigma2)
    }

    /// SEM `beta(lambda)` and `sigma^2(lambda)` from the spatially filtered
    /// regression.
    pub fn sem_profile(&self, lambda: f64) -> Result<(DVector<f64>, f64), EconError> {
        let ys = &self.y - lambda * &self.wy;
        let xs = &self.x - lambda * &self.wx;
        let ls = least_squares(&xs, &ys).map_err(|e| match e {
            NumericsError::RankDeficient { column } => EconError::RankDeficientDesign {
                column: self.names[column].clone(),
            },
            other => EconError::Numerics(other),
        })?;
        Ok((ls.coefficients, ls.rss / self.nobs() as f64))
    }
}

/// Concentrated SLM likelihood, `-NT/2 (ln(2 pi s2(rho)) + 1) + T sum ln|1 - rho l_i|`.
pub struct SlmProfile {
    b0: DVector<f64>,
    b1: DVector<f64>,
    e00: f64,
    e01: f64,
    e11: f64,
}

impl SlmProfile {
    pub fn new(data: &SpatialData) -> Result<SlmProfile, EconError> {
        let ls0 = least_squares(&data.x, &data.y)?;
        let ls1 = least_squares(&data.x, &data.wy)?;
        Ok(SlmProfile {
            e00: ls0.residuals.norm_squared(),
            e01: ls0.residuals.dot(&ls1.residuals),
            e11: ls1.residuals.norm_squared(),
            b0: ls0.coefficients,
            b1: ls1.coefficients,
        })
    }

    pub fn sigma2(&self, rho: f64, nobs: usize) -> f64 {
        (self.e00 - 2.0 * rho * self.e01 + rho * rho * self.e11) / nobs as f64
    }

    pub fn beta(&self, rho: f64) -> DVector<f64> {
        &self.b0 - rho * &self.b1
    }

    pub fn loglik(&self, data: &SpatialData, rho: f64) -> f64 {
        let n = data.nobs();
        let s2 = self.sigma2(rho, n);
        -0.5 * n as f64 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0) + data.periods as f64 * data.log_det(rho)
    }
}

/// Concentrated SEM likelihood at `lambda`.
pub fn sem_concentrated_loglik(data: &SpatialData, lambda: f64) -> f64 {
    match data.sem_profile(lambda) {
        Ok((_, s2)) => {
            -0.5 * data.nobs() as f64 * ((2.0 * std::f64::consts::PI * s2).ln() + 1.0)
                + data.periods as f64 * data.log_det(lambda)
        }
        Err(_) => f64::NAN,
    }
}

fn check_boundary(parameter: &'static str, value: f64, lo: f64, hi: f64) -> Result<(), EconError> {
    if value - lo < SEARCH_INSET || hi - value < SEARCH_INSET {
        return Err(EconError::BoundarySolution { parameter, value, lo, hi });
    }
    Ok(())
}

/// Central-difference Hessian. Steps are `HESSIAN_STEP * max(|theta_k|, floor_k)`.
pub fn numerical_hessian<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], floors: &[f64]) -> DMatrix<f64> {
    let p = theta.len();
    let h: Vec<f64> = theta
        .iter()
        .zip(floors)
        .map(|(t, fl)| HESSIAN_STEP * t.abs().max(*fl))
        .collect();
    let eval = |di: usize, si: f64, dj: usize, sj: f64| {
        let mut x = theta.to_vec();
        x[di] += si * h[di];
        x[dj] += sj * h[dj];
        f(&x)
    };
    let f0 = f(theta);
    let mut hess = DMatrix::<f64>::zeros(p, p);
    for i in 0..p {
        let fp = {
            let mut x = theta.to_vec();
            x[i] += h[i];
            f(&x)
        };
        let fm = {
            let mut x = theta.to_vec();
            x[i] -= h[i];
            f(&x)
        };
        hess[(i, i)] = (fp - 2.0 * f0 + fm) / (h[i] * h[i]);
        for j in 0..i {
            let v = (eval(i, 1.0, j, 1.0) - eval(i, 1.0, j, -1.0) - eval(i, -1.0, j, 1.0) + eval(i, -1.0, j, -1.0))
                / (4.0 * h[i] * h[j]);
            hess[(i, j)] = v;
            hess[(j, i)] = v;
        }
    }
    hess
}

/// Standard errors from the inverse of the negative Hessian.
fn hessian_standard_errors<F: Fn(&[f64]) -> f64>(f: F, theta: &[f64], floors: &[f64]) -> Result<Vec<f64>, EconError> {
    let hess = numerical_hessian(f, theta, floors);
    let info = -hess;
    let chol = info
        .cholesky()
        .ok_or_else(|| EconError::NonConvergence("negative Hessian is not positive definite".into()))?;
    let cov = chol.inverse();
    let se: Vec<f64> = (0..theta.len()).map(|k| cov[(k, k)].sqrt()).collect();
    if se.iter().any(|s| !s.is_finite()) {
        return Err(EconError::NonConvergence("non-finite standard errors".into()));
    }
    Ok(se)
}

fn squared_correlation(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.sum() / n, b.sum() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b.iter()) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma).powi(2);
        sbb += (y - mb).powi(2);
    }
    sab * sab / (saa * sbb)
}

fn theta_floors(k: usize) -> Vec<f64> {
    let mut floors = vec![1.0; k + 1];
    floors.push(0.0);
    floors
}

fn assemble_spatial_fit(
    kind: ModelKind,
    names: &[String],
    param: f64,
    beta: &DVector<f64>,
    sigma2: f64,
    se: &[f64],
    loglik: f64,
    r2: f64,
    residuals: DVector<f64>,
) -> SpatialFit {
    SpatialFit {
        kind,
        spatial: Some(Estimate::new(param, se[0])),
        coefficients: names
            .iter()
            .enumerate()
            .map(|(j, name)| Coefficient {
                name: name.clone(),
                estimate: Estimate::new(beta[j], se[j + 1]),
            })
            .collect(),
        sigma2,
        loglik,
        r2,
        nobs: residuals.len(),
        residuals: residuals.iter().copied().collect(),
    }
}

/// Spatial lag model with city fixed effects.
pub fn fit_slm_fe(d: &DesignMatrices, w: &SpatialWeights) -> Result<SpatialFit, EconError> {
    let data = SpatialData::new(d, w)?;
    fit_slm_data(&data, &d.names)
}

pub fn fit_slm_data(data: &SpatialData, names: &[String]) -> Result<SpatialFit, EconError> {
    let profile = SlmProfile::new(data)?;
    let (lo, hi) = data.search_bounds();
    let best = maximize_1d(|r| profile.loglik(data, r), lo, hi, SEARCH_GRID, SEARCH_TOL)?;
    let rho = best.x;
    check_boundary("rho", rho, lo, hi)?;
    let beta = profile.beta(rho);
    let sigma2 = profile.sigma2(rho, data.nobs());
    let k = beta.len();

    let mut theta = vec![rho];
    theta.extend(beta.iter());
    theta.push(sigma2);
    let mut floors = theta_floors(k);
    floors[k + 1] = sigma2;
    let se = hessian_standard_errors(
        |th| data.slm_loglik(th[0], &DVector::from_column_slice(&th[1..=k]), th[k + 1]),
        &theta,
        &floors,
    )?;

    let fitted = rho * &data.wy + &data.x * &beta;
    let residuals = &data.y - &fitted;
    let r2 = squared_correlation(&fitted, &data.y);
    Ok(assemble_spatial_fit(ModelKind::SlmFe, names, rho, &beta, sigma2, &se, best.value, r2, residuals))
}

/// Spatial error model with city fixed effects.
pub fn fit_sem_fe(d: &DesignMatrices, w: &SpatialWeights) -> Result<SpatialFit, EconError> {
    let data = SpatialData::new(d, w)?;
    fit_sem_data(&data, &d.names)
}

pub fn fit_sem_data(data: &SpatialData, names: &[String]) -> Result<SpatialFit, EconError> {
    data.sem_profile(0.0)?;
    let (lo, hi) = data.search_bounds();
    let best = maximize_1d(|l| sem_concentrated_loglik(data, l), lo, hi, SEARCH_GRID, SEARCH_TOL)?;
    let lambda = best.x;
    check_boundary("lambda", lambda, lo, hi)?;
    let (beta, sigma2) = data.sem_profile(lambda)?;
    let k = beta.len();

    let mut theta = vec![lambda];
    theta.extend(beta.iter());
    theta.push(sigma2);
    let mut floors = theta_floors(k);
    floors[k + 1] = sigma2;
    let se = hessian_standard_errors(
        |th| data.sem_loglik(th[0], &DVector::from_column_slice(&th[1..=k]), th[k + 1]),
        &theta,
        &floors,
    )?;

    let fitted = &data.x * &beta;
    let ys = &data.y - lambda * &data.wy;
    let xs = &data.x - lambda * &data.wx;
    let residuals = ys - xs * &beta;
    let r2 = squared_correlation(&fitted, &data.y);
    Ok(assemble_spatial_fit(ModelKind::SemFe, names, lambda, &beta, sigma2, &se, best.value, r2, residuals))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmStatistic {
    pub statistic: f64,
    pub p: f64,
}

impl LmStatistic {
    fn new(statistic: f64) -> LmStatistic {
        let statistic = if statistic.is_finite() { statistic.max(0.0) } else { 0.0 };
        LmStatistic {
            statistic,
            p: chi2_1_survival(statistic),
        }
    }
}

/// Upper tail of the chi-square distribution with one degree of freedom.
pub fn chi2_1_survival(x: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else {
        erfc((x / 2.0).sqrt())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LmDiagnostics {
    pub lm_lag: LmStatistic,
    pub lm_error: LmStatistic,
    pub robust_lm_lag: LmStatistic,
    pub robust_lm_error: LmStatistic,
}

/// Pooled Lagrange-multiplier tests on the within OLS residuals.
pub fn lm_tests(d: &DesignMatrices, ols: &SpatialFit, w: &SpatialWeights) -> Result<LmDiagnostics, EconError> {
    if ols.kind != ModelKind::OlsFe {
        return Err(EconError::InvalidSpec("LM tests need an OLS-FE fit".into()));
    }
    let data = SpatialData::new(d, w)?;
    let n_obs = data.nobs() as f64;
    let e = DVector::from_column_slice(&ols.residuals);
    if e.len() != data.nobs() {
        return Err(EconError::InvalidSpec("residuals do not match the design".into()));
    }
    let sigma2 = e.norm_squared() / n_obs;
    let beta = DVector::from_vec(ols.beta());

    // lag operator on within-transformed vectors (W commutes with city demeaning)
    let order: Vec<usize> = d.cities.iter().map(|c| w.city_index(c).unwrap()).collect();
    let wr = w.reordered(&order);
    let nt = d.years.len();
    let mut row_of = vec![0usize; d.cities.len() * nt];
    for r in 0..d.nobs() {
        row_of[d.city_idx[r] * nt + d.year_idx[r]] = r;
    }
    let lag = |v: &DVector<f64>| -> DVector<f64> {
        let wm = wr.matrix();
        DVector::from_fn(v.len(), |r, _| {
            let (c, t) = (d.city_idx[r], d.year_idx[r]);
            (0..d.cities.len()).map(|j| wm[(c, j)] * v[row_of[j * nt + t]]).sum()
        })
    };

    let we = lag(&e);
    let wm = wr.matrix();
    let trace_w = (wm.transpose() * wm + wm * wm).trace();
    let t_tw = nt as f64 * trace_w;
    let wxb = lag(&(&data.x * &beta));
    let m_wxb = least_squares(&data.x, &wxb)?.residuals;
    let j = (m_wxb.norm_squared() + t_tw * sigma2) / sigma2;

    let lag_score = e.dot(&data.wy) / sigma2;
    let err_score = e.dot(&we) / sigma2;
    Ok(LmDiagnostics {
        lm_lag: LmStatistic::new(lag_score * lag_score / j),
        lm_error: LmStatistic::new(err_score * err_score / t_tw),
        robust_lm_lag: LmStatistic::new((lag_score - err_score).powi(2) / (j - t_tw)),
        robust_lm_error: LmStatistic::new((err_score - t_tw / j * lag_score).powi(2) / (t_tw * (1.0 - t_tw / j))),
    })
}

/// Significance stars from `|t|` under the normal approximation.
pub fn stars(t: f64) -> &'static str {
    let a = t.abs();
    if a >= 2.576 {
        "***"
    } else if a >= 1.960 {
        "**"
    } else if a >= 1.645 {
        "*"
    } else {
        ""
    }
}

pub fn format_coefficient(value: f64) -> String {
    format!("{value:.3}")
}

pub fn format_t(t: f64) -> String {
    format!("({t:.2})")
}

/// Single-line cell, e.g. `0.020*** (3.05)`.
pub fn format_cell(value: f64, t: f64) -> String {
    format!("{}{} {}", format_coefficient(value), stars(t), format_t(t))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableCoefficient {
    pub name: String,
    pub value: f64,
    pub se: f64,
    pub t: f64,
    pub stars: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TableModel {
    pub name: String,
    pub kind: ModelKind,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub spatial_param: Option<Estimate>,
    pub coefficients: Vec<TableCoefficient>,
    pub sigma2: f64,
    pub loglik: f64,
    pub r2: f64,
    pub nobs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegressionTable {
    pub spec: String,
    pub dependent: String,
    pub models: Vec<TableModel>,
}

/// Column-per-model table in the fits' order.
pub fn summarize(fits: &[SpatialFit], spec: &ModelSpec) -> RegressionTable {
    let models = fits
        .iter()
        .enumerate()
        .map(|(i, f)| TableModel {
            name: format!("({}) {}", i + 1, f.kind.label()),
            kind: f.kind,
            spatial_param: f.spatial,
            coefficients: f
                .coefficients
                .iter()
                .map(|c| TableCoefficient {
                    name: c.name.clone(),
                    value: c.estimate.value,
                    se: c.estimate.se,
                    t: c.estimate.t,
                    stars: stars(c.estimate.t).to_string(),
                })
                .collect(),
            sigma2: f.sigma2,
            loglik: f.loglik,
            r2: f.r2,
            nobs: f.nobs,
        })
        .collect();
    RegressionTable {
        spec: spec.name.clone(),
        dependent: spec.dependent.clone(),
        models,
    }
}

impl RegressionTable {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("table serializes")
    }

    /// Aligned text: coefficient with stars, t-statistic beneath.
    pub fn render_text(&self) -> String {
        let mut row_names: Vec<String> = Vec::new();
        for m in &self.models {
            for c in &m.coefficients {
                if !row_names.contains(&c.name) {
                    row_names.push(c.name.clone());
                }
            }
        }
        let mut lines: Vec<(String, Vec<String>)> = Vec::new();
        let blank = || vec![String::new(); self.models.len()];
        lines.push(("VARIABLES".into(), (1..=self.models.len()).map(|i| format!("({i})")).collect()));
        lines.push((String::new(), self.models.iter().map(|_| self.dependent.clone()).collect()));
        for name in &row_names {
            let mut coef = blank();
            let mut tline = blank();
            for (k, m) in self.models.iter().enumerate() {
                if let Some(c) = m.coefficients.iter().find(|c| &c.name == name) {
                    coef[k] = format!("{}{}", format_coefficient(c.value), c.stars);
                    tline[k] = format_t(c.t);
                }
            }
            lines.push((name.clone(), coef));
            lines.push((String::new(), tline));
        }
        let symbols: Vec<&str> = self.models.iter().filter_map(|m| m.kind.spatial_symbol()).collect();
        if !symbols.is_empty() {
            let label = if symbols.iter().all(|s| *s == symbols[0]) {
                symbols[0].to_string()
            } else {
                "rho/lambda".to_string()
            };
            let mut coef = blank();
            let mut tline = blank();
            for (k, m) in self.models.iter().enumerate() {
                if let Some(e) = m.spatial_param {
                    coef[k] = format!("{}{}", format_coefficient(e.value), stars(e.t));
                    tline[k] = format_t(e.t);
                }
            }
            lines.push((label, coef));
            lines.push((String::new(), tline));
        }
        lines.push(("Observations".into(), self.models.iter().map(|m| m.nobs.to_string()).collect()));
        let r2_label = if symbols.is_empty() { "R-squared" } else { "Pseudo R-squared" };
        lines.push((r2_label.into(), self.models.iter().map(|m| format!("{:.3}", m.r2)).collect()));
        lines.push(("Log-likelihood".into(), self.models.iter().map(|m| format!("{:.3}", m.loglik)).collect()));

        let first = lines.iter().map(|(l, _)| l.chars().count()).max().unwrap_or(0) + 2;
        let widths: Vec<usize> = (0..self.models.len())
            .map(|k| lines.iter().map(|(_, c)| c[k].chars().count()).max().unwrap_or(0) + 2)
            .collect();
        let mut out = String::new();
        for (label, cells) in &lines {
            let mut line = format!("{label:<first$}");
            for (cell, w) in cells.iter().zip(&widths) {
                let _ = write!(line, "{cell:<w$}");
            }
            out.push_str(line.trim_end());
            out.push('\n');
        }
        out.push_str("t-statistics in parentheses\n*** p<0.01, ** p<0.05, * p<0.1\n");
        out
    }
}

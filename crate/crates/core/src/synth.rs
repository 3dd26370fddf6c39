//! Synthetic panels: output-density production model, spatial lag and
//! spatial error data-generating processes, and the bundled demo data.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indices::{group_location_quotient, IndexError};
use crate::panel::{PanelDataset, PanelError};
use crate::rng::{substream, StreamRng};
use crate::spatial::{build_weights, SpatialError, SpatialWeights};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("{name} = {value} outside the admissible interval ({lo}, {hi})")]
    InadmissibleParameter { name: &'static str, value: f64, lo: f64, hi: f64 },
    #[error("I - {value} W is singular")]
    SingularReducedForm { value: f64 },
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Spatial(#[from] SpatialError),
}

/// City labels `C01`, `C02`, ... padded to the width of `n`.
pub fn city_names(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(2);
    (1..=n).map(|i| format!("C{i:0width$}")).collect()
}

fn years_from(start: i32, periods: usize) -> Vec<i32> {
    (0..periods as i32).map(|t| start + t).collect()
}

fn normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}

fn default_start_year() -> i32 {
    2003
}

fn default_unit() -> f64 {
    1.0
}

fn default_half() -> f64 {
    0.5
}

/// Output density `p = Omega (N/L)^b1 (K/L)^b2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityParams {
    pub omega: f64,
    pub beta1: f64,
    pub beta2: f64,
    #[serde(default)]
    pub sigma: f64,
    pub cities: usize,
    pub periods: usize,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    #[serde(default)]
    pub labor_mu: f64,
    #[serde(default = "default_half")]
    pub labor_sd: f64,
    #[serde(default)]
    pub capital_mu: f64,
    #[serde(default = "default_half")]
    pub capital_sd: f64,
}

impl DensityParams {
    fn validate(&self) -> Result<(), SynthError> {
        if !(self.omega > 0.0 && self.omega.is_finite()) {
            return Err(SynthError::InvalidParameter(format!("omega must be positive, got {}", self.omega)));
        }
        if !(self.sigma >= 0.0 && self.sigma.is_finite()) {
            return Err(SynthError::InvalidParameter(format!("sigma must be nonnegative, got {}", self.sigma)));
        }
        if !(self.labor_sd >= 0.0 && self.capital_sd >= 0.0) {
            return Err(SynthError::InvalidParameter("input dispersions must be nonnegative".into()));
        }
        if self.cities == 0 || self.periods == 0 {
            return Err(SynthError::InvalidParameter("cities and periods must be positive".into()));
        }
        if ![self.beta1, self.beta2, self.labor_mu, self.capital_mu].iter().all(|v| v.is_finite()) {
            return Err(SynthError::InvalidParameter("non-finite parameter".into()));
        }
        Ok(())
    }
}

pub fn output_density(omega: f64, labor_density: f64, capital_density: f64, beta1: f64, beta2: f64) -> f64 {
    omega * labor_density.powf(beta1) * capital_density.powf(beta2)
}

/// Panel with `density`, `labor_density` and `capital_density`, input
/// densities lognormal and multiplicative noise `exp(sigma e)`.
pub fn gen_density_panel(p: &DensityParams, seed: u64) -> Result<PanelDataset, SynthError> {
    p.validate()?;
    let mut ds = PanelDataset::new(
        city_names(p.cities),
        years_from(p.start_year, p.periods),
        vec!["density".into(), "labor_density".into(), "capital_density".into()],
    )?;
    let labor = LogNormal::new(p.labor_mu, p.labor_sd).map_err(|e| SynthError::InvalidParameter(e.to_string()))?;
    let capital = LogNormal::new(p.capital_mu, p.capital_sd).map_err(|e| SynthError::InvalidParameter(e.to_string()))?;
    let mut rng = substream(seed, 0);
    for c in 0..p.cities {
        for t in 0..p.periods {
            let n = labor.sample(&mut rng);
            let k = capital.sample(&mut rng);
            let e = normal(&mut rng);
            let density = output_density(p.omega, n, k, p.beta1, p.beta2) * (p.sigma * e).exp();
            ds.set_at(c, t, 0, Some(density));
            ds.set_at(c, t, 1, Some(n));
            ds.set_at(c, t, 2, Some(k));
        }
    }
    Ok(ds)
}

fn default_dependent() -> String {
    "y".into()
}

fn default_periods() -> usize {
    16
}

/// Parameters shared by the spatial lag and spatial error generators;
/// `rho` is the lag parameter or the error parameter respectively.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlmDgpParams {
    pub rho: f64,
    pub beta: Vec<f64>,
    #[serde(default = "default_unit")]
    pub fe_spread: f64,
    #[serde(default = "default_unit")]
    pub sigma: f64,
    #[serde(default)]
    pub seed: u64,
    /// Replicate index selecting an independent substream.
    #[serde(default)]
    pub stream: u64,
    #[serde(default = "default_periods")]
    pub periods: usize,
    #[serde(default = "default_start_year")]
    pub start_year: i32,
    #[serde(default = "default_dependent")]
    pub dependent: String,
}

/// Exogenous regressors for the spatial generators.
#[derive(Debug, Clone, PartialEq)]
pub enum Exogenous {
    /// `k = beta.len()` standard-normal columns named `x1..xk`.
    StandardNormal,
    /// One `n x k` matrix per period, rows in the weights' city order.
    Supplied { names: Vec<String>, periods: Vec<DMatrix<f64>> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub panel: PanelDataset,
    pub fixed_effects: Vec<f64>,
    /// Per-period composite disturbance (`e_t` for the lag model, `u_t` for
    /// the error model).
    pub disturbances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Process {
    Lag,
    Error,
}

/// `y_t = (I - rho W)^-1 (X_t beta + mu + e_t)`.
pub fn gen_slm_panel(p: &SlmDgpParams, w: &SpatialWeights, x: &Exogenous) -> Result<SyntheticPanel, SynthError> {
    generate(p, w, x, Process::Lag)
}

/// `y_t = X_t beta + mu + u_t` with `u_t = (I - lambda W)^-1 v_t`.
pub fn gen_sem_panel(p: &SlmDgpParams, w: &SpatialWeights, x: &Exogenous) -> Result<SyntheticPanel, SynthError> {
    generate(p, w, x, Process::Error)
}

fn check_spatial_parameter(name: &'static str, value: f64, w: &SpatialWeights) -> Result<(), SynthError> {
    if !value.is_finite() {
        return Err(SynthError::InvalidParameter(format!("{name} must be finite")));
    }
    if w.spectrum().iter().any(|l| (1.0 - value * l).abs() < 1e-12) {
        return Err(SynthError::SingularReducedForm { value });
    }
    let (lo, hi) = w.admissible_interval();
    if !(value > lo && value < hi) {
        return Err(SynthError::InadmissibleParameter { name, value, lo, hi });
    }
    Ok(())
}

fn generate(p: &SlmDgpParams, w: &SpatialWeights, x: &Exogenous, process: Process) -> Result<SyntheticPanel, SynthError> {
    let name = match process {
        Process::Lag => "rho",
        Process::Error => "lambda",
    };
    check_spatial_parameter(name, p.rho, w)?;
    if !(p.sigma >= 0.0 && p.fe_spread >= 0.0) {
        return Err(SynthError::InvalidParameter("sigma and fe_spread must be nonnegative".into()));
    }
    if p.periods == 0 {
        return Err(SynthError::InvalidParameter("periods must be positive".into()));
    }
    let n = w.len();
    let k = p.beta.len();
    let names: Vec<String> = match x {
        Exogenous::StandardNormal => (1..=k).map(|j| format!("x{j}")).collect(),
        Exogenous::Supplied { names, periods } => {
            if names.len() != k {
                return Err(SynthError::InvalidParameter(format!(
                    "{} regressor names for {} coefficients",
                    names.len(),
                    k
                )));
            }
            if periods.len() != p.periods || periods.iter().any(|m| m.nrows() != n || m.ncols() != k) {
                return Err(SynthError::InvalidParameter(format!(
                    "supplied regressors must be {} matrices of {n} x {k}",
                    p.periods
                )));
            }
            names.clone()
        }
    };
    if names.contains(&p.dependent) {
        return Err(SynthError::InvalidParameter(format!("dependent {:?} clashes with a regressor", p.dependent)));
    }

    let a = DMatrix::<f64>::identity(n, n) - p.rho * w.matrix();
    let lu = a.lu();
    let beta = DVector::from_column_slice(&p.beta);
    let mut rng = substream(p.seed, p.stream);
    let mu: Vec<f64> = (0..n).map(|_| p.fe_spread * normal(&mut rng)).collect();

    let mut variables = vec![p.dependent.clone()];
    variables.extend(names.iter().cloned());
    let mut ds = PanelDataset::new(w.cities().to_vec(), years_from(p.start_year, p.periods), variables)?;
    let mut disturbances = Vec::with_capacity(p.periods);
    for t in 0..p.periods {
        let xt = match x {
            Exogenous::StandardNormal => DMatrix::from_fn(n, k, |_, _| normal(&mut rng)),
            Exogenous::Supplied { periods, .. } => periods[t].clone(),
        };
        let shock = DVector::from_fn(n, |_, _| p.sigma * normal(&mut rng));
        let mean = &xt * &beta + DVector::from_column_slice(&mu);
        let (yt, dist) = match process {
            Process::Lag => {
                let y = lu
                    .solve(&(mean + &shock))
                    .ok_or(SynthError::SingularReducedForm { value: p.rho })?;
                (y, shock)
            }
            Process::Error => {
                let u = lu.solve(&shock).ok_or(SynthError::SingularReducedForm { value: p.rho })?;
                (mean + &u, u)
            }
        };
        for c in 0..n {
            ds.set_at(c, t, 0, Some(yt[c]));
            for j in 0..k {
                ds.set_at(c, t, j + 1, Some(xt[(c, j)]));
            }
        }
        disturbances.push(dist.iter().copied().collect());
    }
    Ok(SyntheticPanel {
        panel: ds,
        fixed_effects: mu,
        disturbances,
    })
}

/// Rook contiguity on a `rows x cols` grid, cities numbered row-major.
pub fn grid_edges(rows: usize, cols: usize, cities: &[String]) -> Vec<(String, String)> {
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            let i = r * cols + c;
            if c + 1 < cols {
                edges.push((cities[i].clone(), cities[i + 1].clone()));
            }
            if r + 1 < rows {
                edges.push((cities[i].clone(), cities[i + cols].clone()));
            }
        }
    }
    edges
}

pub const DEMO_ROWS: usize = 5;
pub const DEMO_COLS: usize = 6;
pub const DEMO_PERIODS: usize = 16;
pub const DEMO_RHO: f64 = 0.4;
pub const DEMO_MANUFACTURING: &str = "MFG";
pub const DEMO_PRODUCER_SERVICES: [&str; 5] = ["TRANS", "IT", "FIN", "LEASE", "SCI"];
pub const DEMO_OTHER: &str = "OTHER";
pub const DEMO_DEPENDENT: &str = "LUI";
pub const DEMO_FOCAL: &str = "LQagman";
pub const DEMO_CONTROLS: [&str; 6] = ["GDP", "ABUND", "TEC", "EDUC", "URBAN", "STR"];
pub const DEMO_BETA: [f64; 7] = [0.02, 0.0001, -0.1, -0.001, 0.002, 0.106, 0.078];
pub const DEMO_INDICATORS: [&str; 5] = ["land_investment", "pop_density", "land_output", "green_ratio", "land_emission"];

#[derive(Debug, Clone)]
pub struct DemoData {
    pub panel: PanelDataset,
    pub edges: Vec<(String, String)>,
    pub weights: SpatialWeights,
}

/// Spatially smoothed standard-normal field, `(I - 0.3 W)^-1 e`.
fn smooth_field(rng: &mut StreamRng, w: &SpatialWeights) -> Vec<f64> {
    let n = w.len();
    let e = DVector::from_fn(n, |_, _| normal(rng));
    let a = DMatrix::<f64>::identity(n, n) - 0.3 * w.matrix();
    a.lu().solve(&e).expect("0.3 is inside the admissible interval").iter().copied().collect()
}

/// 6 x 5 rook grid of 30 cities over 16 years with sector employment,
/// land-use indicators, controls and a spatially lagged outcome `LUI`
/// driven by the manufacturing location quotient.
pub fn gen_demo(seed: u64) -> Result<DemoData, SynthError> {
    let n = DEMO_ROWS * DEMO_COLS;
    let cities = city_names(n);
    let edges = grid_edges(DEMO_ROWS, DEMO_COLS, &cities);
    let w = build_weights(&edges, &cities, true)?;
    let years = years_from(2003, DEMO_PERIODS);

    let mut sectors = vec![DEMO_MANUFACTURING.to_string()];
    sectors.extend(DEMO_PRODUCER_SERVICES.iter().map(|s| s.to_string()));
    sectors.push(DEMO_OTHER.to_string());
    let mut variables = sectors.clone();
    variables.extend(DEMO_INDICATORS.iter().map(|s| s.to_string()));
    variables.extend(DEMO_CONTROLS.iter().map(|s| s.to_string()));
    variables.push(DEMO_DEPENDENT.to_string());
    let mut ds = PanelDataset::new(cities.clone(), years.clone(), variables)?;
    let var = |name: &str, ds: &PanelDataset| ds.variable_index(name).expect("demo variable");

    // employment: city size with growth, manufacturing share as a bounded walk
    let mut rng = substream(seed, 0);
    let size = LogNormal::new(4.0, 0.6).expect("valid lognormal");
    for c in 0..n {
        let base: f64 = size.sample(&mut rng);
        let growth = 0.02 + 0.02 * rng.random::<f64>();
        let mut mfg_share = 0.15 + 0.3 * rng.random::<f64>();
        let ps_base: Vec<f64> = (0..5).map(|_| 0.02 + 0.04 * rng.random::<f64>()).collect();
        for t in 0..DEMO_PERIODS {
            let total = base * (growth * t as f64).exp();
            mfg_share = (mfg_share + 0.015 * normal(&mut rng)).clamp(0.05, 0.6);
            let ps: Vec<f64> = ps_base
                .iter()
                .map(|b| (b * (1.0 + 0.03 * t as f64) * (0.1 * normal(&mut rng)).exp()).min(0.07))
                .collect();
            let other = 1.0 - mfg_share - ps.iter().sum::<f64>();
            ds.set_at(c, t, 0, Some(total * mfg_share));
            for (j, s) in ps.iter().enumerate() {
                ds.set_at(c, t, 1 + j, Some(total * s));
            }
            ds.set_at(c, t, 6, Some(total * other));
        }
    }

    // controls: spatially smoothed city levels plus trend and noise
    let mut rng = substream(seed, 1);
    let levels: [(f64, f64, f64, f64); 6] = [
        (60.0, 20.0, 4.0, 3.0),   // GDP
        (0.2, 0.08, 0.0, 0.03),   // ABUND
        (2.0, 0.8, 0.1, 0.3),     // TEC
        (5.0, 1.5, 0.15, 0.5),    // EDUC
        (0.6, 0.1, 0.01, 0.02),   // URBAN
        (1.0, 0.2, -0.01, 0.05),  // STR
    ];
    for (name, &(mean, spread, trend, noise)) in DEMO_CONTROLS.iter().zip(&levels) {
        let v = var(name, &ds);
        let field = smooth_field(&mut rng, &w);
        for c in 0..n {
            for t in 0..DEMO_PERIODS {
                let value = (mean + spread * field[c] + trend * t as f64 + noise * normal(&mut rng)).max(0.01 * mean.abs());
                ds.set_at(c, t, v, Some(value));
            }
        }
    }

    // land-use indicators: positive lognormal levels with trends
    let mut rng = substream(seed, 2);
    let trends = [0.06, 0.01, 0.08, 0.005, -0.03];
    for (name, trend) in DEMO_INDICATORS.iter().zip(trends) {
        let v = var(name, &ds);
        let field = smooth_field(&mut rng, &w);
        for c in 0..n {
            for t in 0..DEMO_PERIODS {
                let value = (1.0 + 0.5 * field[c] + trend * t as f64 + 0.1 * normal(&mut rng)).exp();
                ds.set_at(c, t, v, Some(value));
            }
        }
    }

    // outcome: spatial lag process on the manufacturing LQ and controls
    let mfg = vec![DEMO_MANUFACTURING.to_string()];
    let control_idx: Vec<usize> = DEMO_CONTROLS.iter().map(|c| var(c, &ds)).collect();
    let mut regressors = Vec::with_capacity(DEMO_PERIODS);
    for (t, &year) in years.iter().enumerate() {
        let table = ds.extract_employment(year, &sectors)?;
        let lq = group_location_quotient(&table, &mfg, None)?;
        regressors.push(DMatrix::from_fn(n, 7, |c, j| {
            if j == 0 {
                lq.values[c]
            } else {
                ds.at(c, t, control_idx[j - 1]).expect("control set above")
            }
        }));
    }
    let mut names = vec![DEMO_FOCAL.to_string()];
    names.extend(DEMO_CONTROLS.iter().map(|s| s.to_string()));
    let params = SlmDgpParams {
        rho: DEMO_RHO,
        beta: DEMO_BETA.to_vec(),
        fe_spread: 0.03,
        sigma: 0.01,
        seed,
        stream: 3,
        periods: DEMO_PERIODS,
        start_year: 2003,
        dependent: DEMO_DEPENDENT.to_string(),
    };
    let out = gen_slm_panel(&params, &w, &Exogenous::Supplied { names, periods: regressors })?;
    let dep = var(DEMO_DEPENDENT, &ds);
    for c in 0..n {
        for t in 0..DEMO_PERIODS {
            ds.set_at(c, t, dep, out.panel.at(c, t, 0));
        }
    }
    Ok(DemoData { panel: ds, edges, weights: w })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn ring(n: usize) -> SpatialWeights {
        let cities = city_names(n);
        let edges: Vec<(String, String)> = (0..n).map(|i| (cities[i].clone(), cities[(i + 1) % n].clone())).collect();
        build_weights(&edges, &cities, true).unwrap()
    }

    fn slm(rho: f64, sigma: f64, fe: f64) -> SlmDgpParams {
        SlmDgpParams {
            rho,
            beta: vec![1.0, -0.5],
            fe_spread: fe,
            sigma,
            seed: 11,
            stream: 0,
            periods: 4,
            start_year: 2003,
            dependent: "y".into(),
        }
    }

    fn density(sigma: f64, b1: f64, b2: f64) -> DensityParams {
        DensityParams {
            omega: 2.0,
            beta1: b1,
            beta2: b2,
            sigma,
            cities: 5,
            periods: 3,
            start_year: 2003,
            labor_mu: 0.0,
            labor_sd: 0.5,
            capital_mu: 0.0,
            capital_sd: 0.5,
        }
    }

    #[test]
    fn density_closed_forms() {
        assert_abs_diff_eq!(output_density(2.0, 4.0, 1.0, 0.5, 0.0), 4.0, epsilon = 1e-15);
        let ds = gen_density_panel(&density(0.0, 0.0, 0.0), 3).unwrap();
        for c in 0..5 {
            for t in 0..3 {
                assert_eq!(ds.at(c, t, 0), Some(2.0));
            }
        }
        let ds = gen_density_panel(&density(0.3, 0.6, 0.3), 3).unwrap();
        for c in 0..5 {
            for t in 0..3 {
                assert!(ds.at(c, t, 0).unwrap() > 0.0);
            }
        }
        assert_eq!(ds, gen_density_panel(&density(0.3, 0.6, 0.3), 3).unwrap());
    }

    #[test]
    fn density_validation() {
        let mut p = density(0.1, 0.5, 0.5);
        p.omega = 0.0;
        assert!(matches!(gen_density_panel(&p, 1), Err(SynthError::InvalidParameter(_))));
        let mut p = density(-0.1, 0.5, 0.5);
        p.sigma = -0.1;
        assert!(matches!(gen_density_panel(&p, 1), Err(SynthError::InvalidParameter(_))));
    }

    #[test]
    fn zero_rho_is_identity_reduced_form() {
        let w = ring(6);
        let out = gen_slm_panel(&slm(0.0, 0.3, 1.0), &w, &Exogenous::StandardNormal).unwrap();
        for t in 0..4 {
            for c in 0..6 {
                let x1 = out.panel.at(c, t, 1).unwrap();
                let x2 = out.panel.at(c, t, 2).unwrap();
                let expected = x1 - 0.5 * x2 + out.fixed_effects[c] + out.disturbances[t][c];
                assert_abs_diff_eq!(out.panel.at(c, t, 0).unwrap(), expected, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn slm_structural_plug_back() {
        let w = ring(7);
        let out = gen_slm_panel(&slm(0.4, 0.0, 0.0), &w, &Exogenous::StandardNormal).unwrap();
        for t in 0..4 {
            let y = DVector::from_fn(7, |c, _| out.panel.at(c, t, 0).unwrap());
            let x = DMatrix::from_fn(7, 2, |c, j| out.panel.at(c, t, j + 1).unwrap());
            let r = &y - 0.4 * w.matrix() * &y - x * DVector::from_vec(vec![1.0, -0.5]);
            assert!(r.norm() <= 1e-10);
        }
    }

    #[test]
    fn sem_structural_plug_back() {
        let w = ring(7);
        let out = gen_sem_panel(&slm(0.5, 0.7, 0.0), &w, &Exogenous::StandardNormal).unwrap();
        for t in 0..4 {
            let u = DVector::from_column_slice(&out.disturbances[t]);
            let y = DVector::from_fn(7, |c, _| out.panel.at(c, t, 0).unwrap());
            let x = DMatrix::from_fn(7, 2, |c, j| out.panel.at(c, t, j + 1).unwrap());
            let mean = x * DVector::from_vec(vec![1.0, -0.5]);
            assert!((&y - &mean - &u).norm() <= 1e-10);
            // v = (I - lambda W) u has the drawn scale
            let v = &u - 0.5 * w.matrix() * &u;
            assert!(v.norm() > 0.0);
        }
    }

    #[test]
    fn sign_of_rho_matters() {
        let w = ring(6);
        let a = gen_slm_panel(&slm(0.4, 0.3, 1.0), &w, &Exogenous::StandardNormal).unwrap();
        let b = gen_slm_panel(&slm(-0.4, 0.3, 1.0), &w, &Exogenous::StandardNormal).unwrap();
        assert_ne!(a.panel, b.panel);
    }

    #[test]
    fn inadmissible_and_singular() {
        let w = ring(6);
        assert!(matches!(
            gen_slm_panel(&slm(1.0, 0.3, 1.0), &w, &Exogenous::StandardNormal),
            Err(SynthError::SingularReducedForm { .. })
        ));
        assert!(matches!(
            gen_slm_panel(&slm(1.5, 0.3, 1.0), &w, &Exogenous::StandardNormal),
            Err(SynthError::InadmissibleParameter { name: "rho", .. })
        ));
        assert!(matches!(
            gen_sem_panel(&slm(-1.2, 0.3, 1.0), &w, &Exogenous::StandardNormal),
            Err(SynthError::InadmissibleParameter { name: "lambda", .. })
        ));
    }

    #[test]
    fn supplied_regressors_checked() {
        let w = ring(4);
        let x = Exogenous::Supplied {
            names: vec!["a".into()],
            periods: vec![DMatrix::zeros(4, 1); 4],
        };
        assert!(matches!(
            gen_slm_panel(&slm(0.2, 0.1, 0.0), &w, &x),
            Err(SynthError::InvalidParameter(_))
        ));
    }

    #[test]
    fn demo_is_reproducible_and_complete() {
        let a = gen_demo(20240101).unwrap();
        let b = gen_demo(20240101).unwrap();
        assert_eq!(a.panel.to_long_string(), b.panel.to_long_string());
        assert_eq!(a.panel.cities().len(), 30);
        assert_eq!(a.panel.years().len(), 16);
        assert_eq!(a.panel.missing_count(), 0);
        assert_eq!(a.edges.len(), 5 * 5 + 4 * 6);
    }
}

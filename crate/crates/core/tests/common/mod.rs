#![allow(dead_code)]

use agglom::econometrics::{build_design, DesignMatrices, ModelSpec};
use agglom::panel::PanelDataset;
use agglom::spatial::{build_weights, SpatialWeights};
use agglom::synth::{city_names, grid_edges, gen_sem_panel, gen_slm_panel, Exogenous, SlmDgpParams, SyntheticPanel};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn fixture(path: &str) -> std::path::PathBuf {
    std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(path)
}

pub fn grid_weights(rows: usize, cols: usize) -> SpatialWeights {
    let cities = city_names(rows * cols);
    build_weights(&grid_edges(rows, cols, &cities), &cities, true).unwrap()
}

/// Random connected-ish undirected graph on `n` cities: a path plus extra
/// random edges.
pub fn random_weights(rng: &mut ChaCha8Rng, n: usize, standardize: bool) -> SpatialWeights {
    let cities: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let mut edges = Vec::new();
    for i in 1..n {
        edges.push((cities[i - 1].clone(), cities[i].clone()));
    }
    for i in 0..n {
        for j in (i + 2)..n {
            if rng.random::<f64>() < 0.3 {
                edges.push((cities[i].clone(), cities[j].clone()));
            }
        }
    }
    build_weights(&edges, &cities, standardize).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn two_regressor_spec() -> ModelSpec {
    ModelSpec {
        name: "mc".into(),
        dependent: "y".into(),
        focal: "x1".into(),
        include_quadratic: false,
        controls: vec!["x2".into()],
        year_effects: false,
    }
}

pub fn dgp(rho: f64, sigma: f64, seed: u64, stream: u64) -> SlmDgpParams {
    SlmDgpParams {
        rho,
        beta: vec![1.0, -0.5],
        fe_spread: 1.0,
        sigma,
        seed,
        stream,
        periods: 16,
        start_year: 2003,
        dependent: "y".into(),
    }
}

pub fn slm_panel(w: &SpatialWeights, rho: f64, sigma: f64, seed: u64, stream: u64) -> SyntheticPanel {
    gen_slm_panel(&dgp(rho, sigma, seed, stream), w, &Exogenous::StandardNormal).unwrap()
}

pub fn sem_panel(w: &SpatialWeights, lambda: f64, sigma: f64, seed: u64, stream: u64) -> SyntheticPanel {
    gen_sem_panel(&dgp(lambda, sigma, seed, stream), w, &Exogenous::StandardNormal).unwrap()
}

pub fn design(ds: &PanelDataset) -> DesignMatrices {
    build_design(ds, &two_regressor_spec()).unwrap()
}

/// Regressors for an inverted-U design: focal `f ~ U(0.5, 3.5)`, its
/// square, and one standard-normal control.
pub fn inverted_u_regressors(n: usize, periods: usize, seed: u64) -> Vec<DMatrix<f64>> {
    let mut r = rng(seed);
    (0..periods)
        .map(|_| {
            let mut m = DMatrix::zeros(n, 3);
            for i in 0..n {
                let f = 0.5 + 3.0 * r.random::<f64>();
                let z: f64 = r.sample(rand_distr::StandardNormal);
                m[(i, 0)] = f;
                m[(i, 1)] = f * f;
                m[(i, 2)] = z;
            }
            m
        })
        .collect()
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sd(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

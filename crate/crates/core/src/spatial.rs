//! Contiguity weights and Moran's I.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::numerics::{eig_sym, SymMatrix};
use crate::rng::{derive_seed, substream};

#[derive(Debug, Error)]
pub enum SpatialError {
    #[error("edge references unknown city {0:?}")]
    UnknownCity(String),
    #[error("self-loop on city {0:?}")]
    SelfLoop(String),
    #[error("duplicate city {0:?} on the weight axis")]
    DuplicateCity(String),
    #[error("value vector is constant")]
    ConstantVector,
    #[error("weight matrix has no nonzero entries")]
    EmptyWeights,
    #[error("need at least 3 observations, have {0}")]
    TooFewObservations(usize),
    #[error("{values} values supplied for {cities} cities")]
    LengthMismatch { values: usize, cities: usize },
    #[error("malformed adjacency file: {0}")]
    MalformedAdjacency(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Contiguity weights over a city axis, with the eigenvalues of the
/// weight matrix cached for log-determinant evaluation.
#[derive(Debug, Clone)]
pub struct SpatialWeights {
    cities: Vec<String>,
    adjacency: DMatrix<f64>,
    weights: DMatrix<f64>,
    standardized: bool,
    spectrum: Vec<f64>,
}

impl SpatialWeights {
    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn len(&self) -> usize {
        self.cities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cities.is_empty()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Binary symmetric adjacency the weights were built from.
    pub fn adjacency(&self) -> &DMatrix<f64> {
        &self.adjacency
    }

    pub fn is_standardized(&self) -> bool {
        self.standardized
    }

    /// Eigenvalues of the weight matrix, ascending.
    pub fn spectrum(&self) -> &[f64] {
        &self.spectrum
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.spectrum.first().copied().unwrap_or(0.0)
    }

    pub fn max_eigenvalue(&self) -> f64 {
        self.spectrum.last().copied().unwrap_or(0.0)
    }

    pub fn city_index(&self, city: &str) -> Option<usize> {
        self.cities.iter().position(|c| c == city)
    }

    /// Cities with no neighbours.
    pub fn isolated(&self) -> Vec<&str> {
        (0..self.len())
            .filter(|&i| self.adjacency.row(i).iter().all(|&a| a == 0.0))
            .map(|i| self.cities[i].as_str())
            .collect()
    }

    /// Sum of all weights.
    pub fn s0(&self) -> f64 {
        self.weights.sum()
    }

    /// `W x` for a vector on this city axis.
    pub fn lag(&self, x: &[f64]) -> Vec<f64> {
        let n = self.len();
        (0..n)
            .map(|i| (0..n).map(|j| self.weights[(i, j)] * x[j]).sum())
            .collect()
    }

    /// `sum_i ln|1 - rho * lambda_i|`, i.e. `ln|det(I - rho W)|`.
    pub fn log_det(&self, rho: f64) -> f64 {
        self.spectrum.iter().map(|l| (1.0 - rho * l).abs().ln()).sum()
    }

    /// Open interval of spatial parameters for which `I - rho W` is
    /// nonsingular and contains zero.
    pub fn admissible_interval(&self) -> (f64, f64) {
        let lo = self.min_eigenvalue();
        let hi = self.max_eigenvalue();
        let lower = if lo < 0.0 { 1.0 / lo } else { f64::NEG_INFINITY };
        let upper = if hi > 0.0 { 1.0 / hi } else { f64::INFINITY };
        (lower, upper)
    }

    /// Same weights re-expressed on a reordered city axis (`order[k]` is the
    /// old index of the k-th new city).
    pub fn reordered(&self, order: &[usize]) -> SpatialWeights {
        let n = order.len();
        SpatialWeights {
            cities: order.iter().map(|&i| self.cities[i].clone()).collect(),
            adjacency: DMatrix::from_fn(n, n, |r, c| self.adjacency[(order[r], order[c])]),
            weights: DMatrix::from_fn(n, n, |r, c| self.weights[(order[r], order[c])]),
            standardized: self.standardized,
            spectrum: self.spectrum.clone(),
        }
    }
}

/// Builds binary contiguity weights from undirected edges.
///
/// A row-standardized `W = D^{-1} A` is similar to the symmetric
/// `D^{-1/2} A D^{-1/2}`, so the spectrum is computed on that form (rows of
/// isolated cities stay zero and contribute eigenvalue 0).
pub fn build_weights<S: AsRef<str>>(edges: &[(S, S)], cities: &[String], standardize: bool) -> Result<SpatialWeights, SpatialError> {
    let mut pos = HashMap::with_capacity(cities.len());
    for (i, c) in cities.iter().enumerate() {
        if pos.insert(c.as_str(), i).is_some() {
            return Err(SpatialError::DuplicateCity(c.clone()));
        }
    }
    let n = cities.len();
    let mut adjacency = DMatrix::<f64>::zeros(n, n);
    for (a, b) in edges {
        let (a, b) = (a.as_ref(), b.as_ref());
        let i = *pos.get(a).ok_or_else(|| SpatialError::UnknownCity(a.to_string()))?;
        let j = *pos.get(b).ok_or_else(|| SpatialError::UnknownCity(b.to_string()))?;
        if i == j {
            return Err(SpatialError::SelfLoop(a.to_string()));
        }
        adjacency[(i, j)] = 1.0;
        adjacency[(j, i)] = 1.0;
    }

    let degree: Vec<f64> = (0..n).map(|i| adjacency.row(i).sum()).collect();
    let (weights, symmetric_form) = if standardize {
        let w = DMatrix::from_fn(n, n, |i, j| {
            if degree[i] > 0.0 {
                adjacency[(i, j)] / degree[i]
            } else {
                0.0
            }
        });
        let s = DMatrix::from_fn(n, n, |i, j| {
            if adjacency[(i, j)] > 0.0 {
                adjacency[(i, j)] / (degree[i] * degree[j]).sqrt()
            } else {
                0.0
            }
        });
        (w, s)
    } else {
        (adjacency.clone(), adjacency.clone())
    };
    let spectrum = eig_sym(&SymMatrix::new(symmetric_form).expect("contiguity form is symmetric")).values;
    Ok(SpatialWeights {
        cities: cities.to_vec(),
        adjacency,
        weights,
        standardized: standardize,
        spectrum,
    })
}

/// Reads `city_a,city_b` edge rows.
pub fn read_edges<R: Read>(reader: R) -> Result<Vec<(String, String)>, SpatialError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
    if header != ["city_a", "city_b"] {
        return Err(SpatialError::MalformedAdjacency(format!(
            "expected header city_a,city_b, found {}",
            header.join(",")
        )));
    }
    let mut edges = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        edges.push((rec[0].trim().to_string(), rec[1].trim().to_string()));
    }
    Ok(edges)
}

pub fn load_edges(path: &Path) -> Result<Vec<(String, String)>, SpatialError> {
    read_edges(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub const DEFAULT_PERMUTATIONS: usize = 999;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MoranResult {
    #[serde(rename = "I")]
    pub statistic: f64,
    pub expectation: f64,
    pub variance: f64,
    pub z: f64,
    pub p: f64,
    pub permutations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Quadrant {
    HH,
    LL,
    HL,
    LH,
}

impl Quadrant {
    /// Zero counts as positive on both axes.
    pub fn from_signs(value: f64, lag: f64) -> Quadrant {
        match (value >= 0.0, lag >= 0.0) {
            (true, true) => Quadrant::HH,
            (false, false) => Quadrant::LL,
            (true, false) => Quadrant::HL,
            (false, true) => Quadrant::LH,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalMoran {
    pub city: String,
    pub local_i: f64,
    /// `sum_j w_ij z_j` on the centred values.
    pub lag: f64,
    pub quadrant: Quadrant,
    pub p: f64,
    /// Moran scatter coordinates: standardized value and its spatial lag.
    pub scatter_x: f64,
    pub scatter_y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LisaResult {
    pub cities: Vec<LocalMoran>,
    pub permutations: usize,
}

fn centred(x: &[f64], w: &SpatialWeights) -> Result<Vec<f64>, SpatialError> {
    let n = x.len();
    if n != w.len() {
        return Err(SpatialError::LengthMismatch { values: n, cities: w.len() });
    }
    if n < 3 {
        return Err(SpatialError::TooFewObservations(n));
    }
    if w.s0() == 0.0 {
        return Err(SpatialError::EmptyWeights);
    }
    let mean = x.iter().sum::<f64>() / n as f64;
    let z: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let scale = x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if z.iter().all(|v| v.abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE)) {
        return Err(SpatialError::ConstantVector);
    }
    Ok(z)
}

fn moran_statistic(z: &[f64], w: &DMatrix<f64>, s0: f64) -> f64 {
    let n = z.len();
    let zv = DVector::from_column_slice(z);
    let cross = zv.dot(&(w * &zv));
    let ss = zv.norm_squared();
    (n as f64 / s0) * cross / ss
}

/// One-tailed pseudo p-value toward the side of `observed` relative to
/// `expectation`.
fn pseudo_p(observed: f64, expectation: f64, draws: impl Iterator<Item = f64>, permutations: usize) -> f64 {
    let extreme = if observed >= expectation {
        draws.filter(|&d| d >= observed).count()
    } else {
        draws.filter(|&d| d <= observed).count()
    };
    (1 + extreme) as f64 / (permutations + 1) as f64
}

/// Global Moran's I with the normality-based variance and a seeded
/// permutation test.
pub fn global_moran(x: &[f64], w: &SpatialWeights, permutations: usize, seed: u64) -> Result<MoranResult, SpatialError> {
    let z = centred(x, w)?;
    let n = z.len() as f64;
    let wm = w.matrix();
    let s0 = w.s0();
    let statistic = moran_statistic(&z, wm, s0);
    let expectation = -1.0 / (n - 1.0);

    let m = w.len();
    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for i in 0..m {
        let mut row = 0.0;
        let mut col = 0.0;
        for j in 0..m {
            s1 += (wm[(i, j)] + wm[(j, i)]).powi(2);
            row += wm[(i, j)];
            col += wm[(j, i)];
        }
        s2 += (row + col).powi(2);
    }
    s1 *= 0.5;
    let variance = (n * n * s1 - n * s2 + 3.0 * s0 * s0) / ((n * n - 1.0) * s0 * s0) - expectation * expectation;
    let z_score = (statistic - expectation) / variance.sqrt();

    let draws: Vec<f64> = (0..permutations)
        .into_par_iter()
        .map(|r| {
            let mut rng = substream(seed, r as u64);
            let mut zp = z.clone();
            zp.shuffle(&mut rng);
            moran_statistic(&zp, wm, s0)
        })
        .collect();
    let p = pseudo_p(statistic, expectation, draws.into_iter(), permutations);

    Ok(MoranResult {
        statistic,
        expectation,
        variance,
        z: z_score,
        p,
        permutations,
    })
}

const LOCAL_STREAM_LABEL: u64 = 0x4C49_5341; // "LISA"

/// Local Moran's I with conditional permutation inference: city i keeps
/// its value while the remaining values are shuffled over the other
/// locations.
pub fn local_moran(x: &[f64], w: &SpatialWeights, permutations: usize, seed: u64) -> Result<LisaResult, SpatialError> {
    let z = centred(x, w)?;
    let n = z.len();
    let m2 = z.iter().map(|v| v * v).sum::<f64>() / n as f64;
    let sd = m2.sqrt();
    let wm = w.matrix();
    let lags = w.lag(&z);

    let cities = (0..n)
        .into_par_iter()
        .map(|i| {
            let local_i = z[i] / m2 * lags[i];
            let expectation = -wm.row(i).sum() / (n as f64 - 1.0);
            let others: Vec<f64> = (0..n).filter(|&j| j != i).map(|j| z[j]).collect();
            let city_seed = derive_seed(derive_seed(seed, LOCAL_STREAM_LABEL), i as u64);
            let draws = (0..permutations).map(|r| {
                let mut rng = substream(city_seed, r as u64);
                let mut perm = others.clone();
                perm.shuffle(&mut rng);
                let mut lag = 0.0;
                let mut k = 0;
                for j in 0..n {
                    if j == i {
                        continue;
                    }
                    lag += wm[(i, j)] * perm[k];
                    k += 1;
                }
                z[i] / m2 * lag
            });
            let p = pseudo_p(local_i, expectation, draws, permutations);
            LocalMoran {
                city: w.cities()[i].clone(),
                local_i,
                lag: lags[i],
                quadrant: Quadrant::from_signs(z[i], lags[i]),
                p,
                scatter_x: z[i] / sd,
                scatter_y: lags[i] / sd,
            }
        })
        .collect();
    Ok(LisaResult { cities, permutations })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn names(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("c{i}")).collect()
    }

    fn grid2x2() -> SpatialWeights {
        // c0 c1
        // c2 c3
        build_weights(&[("c0", "c1"), ("c0", "c2"), ("c1", "c3"), ("c2", "c3")], &names(4), false).unwrap()
    }

    #[test]
    fn single_edge_standardized() {
        let w = build_weights(&[("c0", "c1")], &names(2), true).unwrap();
        assert_eq!(w.matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
    }

    #[test]
    fn path_graph_middle_row() {
        let w = build_weights(&[("c0", "c1"), ("c1", "c2")], &names(3), true).unwrap();
        assert_eq!(w.matrix().row(1).iter().copied().collect::<Vec<_>>(), vec![0.5, 0.0, 0.5]);
        assert!(w.isolated().is_empty());
    }

    #[test]
    fn four_cycle_spectrum() {
        let w = build_weights(&[("c0", "c1"), ("c1", "c2"), ("c2", "c3"), ("c3", "c0")], &names(4), true).unwrap();
        let expect = [-1.0, 0.0, 0.0, 1.0];
        for (a, b) in w.spectrum().iter().zip(expect) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
        }
        assert_eq!(w.admissible_interval().0, -1.0);
    }

    #[test]
    fn edge_errors() {
        assert!(matches!(
            build_weights(&[("c0", "zz")], &names(2), true),
            Err(SpatialError::UnknownCity(c)) if c == "zz"
        ));
        assert!(matches!(
            build_weights(&[("c1", "c1")], &names(2), true),
            Err(SpatialError::SelfLoop(_))
        ));
    }

    #[test]
    fn isolated_city_has_zero_row() {
        let w = build_weights(&[("c0", "c1")], &names(3), true).unwrap();
        assert_eq!(w.isolated(), vec!["c2"]);
        assert_eq!(w.matrix().row(2).sum(), 0.0);
        assert!(w.spectrum().contains(&0.0) || w.spectrum().iter().any(|l| l.abs() < 1e-15));
    }

    #[test]
    fn checkerboard_is_minus_one() {
        let r = global_moran(&[1.0, -1.0, -1.0, 1.0], &grid2x2(), 99, 1).unwrap();
        assert_abs_diff_eq!(r.statistic, -1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(r.expectation, -1.0 / 3.0, epsilon = 1e-15);
        let lisa = local_moran(&[1.0, -1.0, -1.0, 1.0], &grid2x2(), 99, 1).unwrap();
        for c in &lisa.cities {
            assert!(c.local_i < 0.0);
            assert!(matches!(c.quadrant, Quadrant::HL | Quadrant::LH));
        }
    }

    #[test]
    fn input_errors() {
        let w = grid2x2();
        assert!(matches!(global_moran(&[2.0; 4], &w, 9, 0), Err(SpatialError::ConstantVector)));
        assert!(matches!(
            global_moran(&[1.0, 2.0], &w, 9, 0),
            Err(SpatialError::LengthMismatch { .. })
        ));
        let empty = build_weights::<&str>(&[], &names(3), true).unwrap();
        assert!(matches!(
            global_moran(&[1.0, 2.0, 3.0], &empty, 9, 0),
            Err(SpatialError::EmptyWeights)
        ));
    }

    #[test]
    fn isolated_city_local_values() {
        let w = build_weights(&[("c0", "c1"), ("c1", "c2")], &names(4), true).unwrap();
        let lisa = local_moran(&[1.0, 2.0, 4.0, 0.5], &w, 49, 3).unwrap();
        let iso = &lisa.cities[3];
        assert_eq!(iso.local_i, 0.0);
        assert_eq!(iso.lag, 0.0);
        assert_eq!(iso.quadrant, Quadrant::LH);
        assert_eq!(iso.p, 1.0);
    }

    #[test]
    fn permutation_p_is_seed_deterministic() {
        let w = build_weights(&[("c0", "c1"), ("c1", "c2"), ("c2", "c3"), ("c3", "c4")], &names(5), true).unwrap();
        let x = [1.0, 2.0, 3.0, 5.0, 8.0];
        let a = global_moran(&x, &w, 199, 42).unwrap();
        let b = global_moran(&x, &w, 199, 42).unwrap();
        assert_eq!(a, b);
        assert!(a.p > 0.0 && a.p <= 1.0);
        let la = local_moran(&x, &w, 199, 42).unwrap();
        let lb = local_moran(&x, &w, 199, 42).unwrap();
        assert_eq!(la, lb);
    }

    #[test]
    fn zero_permutations_gives_unit_p() {
        let r = global_moran(&[1.0, -1.0, -1.0, 1.0], &grid2x2(), 0, 1).unwrap();
        assert_eq!(r.p, 1.0);
    }

    #[test]
    fn edge_csv() {
        let edges = read_edges("city_a,city_b\nA,B\nB,C\n".as_bytes()).unwrap();
        assert_eq!(edges, vec![("A".to_string(), "B".to_string()), ("B".into(), "C".into())]);
        assert!(matches!(
            read_edges("a,b\nA,B\n".as_bytes()),
            Err(SpatialError::MalformedAdjacency(_))
        ));
    }
}

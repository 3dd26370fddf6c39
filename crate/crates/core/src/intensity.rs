//! Land-use intensity scoring from normalized indicator panels.
//!
//! Indicators are min-max normalized over the pooled panel, weighted either
//! by the principal eigenvector of the summed per-period cross-product
//! matrices or by the entropy method, and combined into one score per
//! city-year. Score ranks over time give the dynamic classification.

use std::collections::HashSet;
use std::fmt;
use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numerics::{eig_sym, SymMatrix};
use crate::panel::PanelDataset;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IntensityError {
    #[error("indicator {0:?} is constant over the panel")]
    ConstantIndicator(String),
    #[error("indicator {variable:?} is missing at ({city}, {year})")]
    MissingValues { city: String, year: i32, variable: String },
    #[error("unknown indicator variable {0:?}")]
    UnknownVariable(String),
    #[error("duplicate indicator {0:?}")]
    DuplicateIndicator(String),
    #[error("cross-product matrix is zero; no weight direction exists")]
    DegenerateSpectrum,
    #[error("indicator {0:?} is zero for every observation")]
    AllZeroIndicator(String),
    #[error("entropy weights need at least two observations")]
    SingleObservation,
    #[error("every indicator has maximal entropy; weights are undefined")]
    UninformativeIndicators,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("normalized value {value} outside [0, 1]")]
    OutOfRange { value: f64 },
    #[error("need at least {needed} {axis} (have {have})")]
    TooSmall { axis: &'static str, needed: usize, have: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Orientation {
    #[default]
    Positive,
    Negative,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Dimension {
    LandUseIntensity,
    EconomicBenefit,
    EcologicalBenefit,
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Dimension::LandUseIntensity => "land-use-intensity",
            Dimension::EconomicBenefit => "economic-benefit",
            Dimension::EcologicalBenefit => "ecological-benefit",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorSpec {
    pub name: String,
    #[serde(default)]
    pub orientation: Orientation,
    pub dimension: Dimension,
}

/// Indicator values mapped into [0, 1], stored city-major, then year, then
/// indicator.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedPanel {
    cities: Vec<String>,
    years: Vec<i32>,
    indicators: Vec<IndicatorSpec>,
    values: Vec<f64>,
}

impl NormalizedPanel {
    /// Builds a panel from already-normalized values (`values[c][t][j]`
    /// flattened).
    pub fn from_values(
        cities: Vec<String>,
        years: Vec<i32>,
        indicators: Vec<IndicatorSpec>,
        values: Vec<f64>,
    ) -> Result<Self, IntensityError> {
        let expected = cities.len() * years.len() * indicators.len();
        if values.len() != expected {
            return Err(IntensityError::DimensionMismatch(format!(
                "{} values, expected {expected}",
                values.len()
            )));
        }
        if let Some(&value) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(IntensityError::OutOfRange { value });
        }
        Ok(NormalizedPanel {
            cities,
            years,
            indicators,
            values,
        })
    }

    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn indicators(&self) -> &[IndicatorSpec] {
        &self.indicators
    }

    pub fn get(&self, c: usize, t: usize, j: usize) -> f64 {
        self.values[(c * self.years.len() + t) * self.indicators.len() + j]
    }

    /// Copy with cities and years reordered by the given permutations.
    pub fn permuted(&self, city_order: &[usize], year_order: &[usize]) -> NormalizedPanel {
        let m = self.indicators.len();
        let mut values = Vec::with_capacity(self.values.len());
        for &c in city_order {
            for &t in year_order {
                for j in 0..m {
                    values.push(self.get(c, t, j));
                }
            }
        }
        NormalizedPanel {
            cities: city_order.iter().map(|&c| self.cities[c].clone()).collect(),
            years: year_order.iter().map(|&t| self.years[t]).collect(),
            indicators: self.indicators.clone(),
            values,
        }
    }

    fn observations(&self) -> usize {
        self.cities.len() * self.years.len()
    }
}

/// Min-max normalization pooled over all cities and years.
pub fn normalize(ds: &PanelDataset, specs: &[IndicatorSpec]) -> Result<NormalizedPanel, IntensityError> {
    let mut seen = HashSet::new();
    let mut idx = Vec::with_capacity(specs.len());
    for spec in specs {
        if !seen.insert(spec.name.as_str()) {
            return Err(IntensityError::DuplicateIndicator(spec.name.clone()));
        }
        idx.push(
            ds.variable_index(&spec.name)
                .map_err(|_| IntensityError::UnknownVariable(spec.name.clone()))?,
        );
    }
    let (nc, nt, m) = (ds.cities().len(), ds.years().len(), specs.len());
    let mut raw = vec![0.0; nc * nt * m];
    let mut lo = vec![f64::INFINITY; m];
    let mut hi = vec![f64::NEG_INFINITY; m];
    for c in 0..nc {
        for t in 0..nt {
            for (j, &v) in idx.iter().enumerate() {
                let x = ds.at(c, t, v).ok_or_else(|| IntensityError::MissingValues {
                    city: ds.cities()[c].clone(),
                    year: ds.years()[t],
                    variable: specs[j].name.clone(),
                })?;
                raw[(c * nt + t) * m + j] = x;
                lo[j] = lo[j].min(x);
                hi[j] = hi[j].max(x);
            }
        }
    }
    for j in 0..m {
        if !(hi[j] > lo[j]) {
            return Err(IntensityError::ConstantIndicator(specs[j].name.clone()));
        }
    }
    for (k, x) in raw.iter_mut().enumerate() {
        let j = k % m;
        let range = hi[j] - lo[j];
        *x = match specs[j].orientation {
            Orientation::Positive => (*x - lo[j]) / range,
            Orientation::Negative => (hi[j] - *x) / range,
        };
    }
    Ok(NormalizedPanel {
        cities: ds.cities().to_vec(),
        years: ds.years().to_vec(),
        indicators: specs.to_vec(),
        values: raw,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum WeightMode {
    UnitNorm,
    SumOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WeightMethod {
    #[default]
    Vh,
    Entropy,
}

impl std::str::FromStr for WeightMethod {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "vh" => Ok(WeightMethod::Vh),
            "entropy" => Ok(WeightMethod::Entropy),
            other => Err(format!("unknown weight method {other:?}")),
        }
    }
}

/// Nonnegative indicator weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub names: Vec<String>,
    pub weights: Vec<f64>,
    pub mode: WeightMode,
}

impl WeightVector {
    pub fn sum_one(&self) -> WeightVector {
        let total: f64 = self.weights.iter().sum();
        WeightVector {
            names: self.names.clone(),
            weights: self.weights.iter().map(|w| w / total).collect(),
            mode: WeightMode::SumOne,
        }
    }

    pub fn unit_norm(&self) -> WeightVector {
        let norm = self.weights.iter().map(|w| w * w).sum::<f64>().sqrt();
        WeightVector {
            names: self.names.clone(),
            weights: self.weights.iter().map(|w| w / norm).collect(),
            mode: WeightMode::UnitNorm,
        }
    }
}

/// Components this close to zero are clamped to exactly zero.
pub const CLAMP_EPS: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct VhWeights {
    /// Unit-norm principal eigenvector of `H`.
    pub weights: WeightVector,
    pub lambda_max: f64,
    pub cross_product: DMatrix<f64>,
}

/// `H = sum_k A_k^T A_k` where `A_k` is the city × indicator matrix of period k.
pub fn cross_product_matrix(np: &NormalizedPanel) -> DMatrix<f64> {
    let m = np.indicators.len();
    let mut h = DMatrix::<f64>::zeros(m, m);
    for c in 0..np.cities.len() {
        for t in 0..np.years.len() {
            for a in 0..m {
                let xa = np.get(c, t, a);
                for b in a..m {
                    h[(a, b)] += xa * np.get(c, t, b);
                }
            }
        }
    }
    for a in 0..m {
        for b in 0..a {
            h[(a, b)] = h[(b, a)];
        }
    }
    h
}

/// Scatter-degree weights: the unit eigenvector of `H` for its largest
/// eigenvalue.
///
/// `H` is entrywise nonnegative and symmetric, so it is a direct sum of
/// irreducible nonnegative blocks and the top eigenspace is spanned by
/// nonnegative vectors with disjoint supports. Taking absolute values of
/// the computed eigenvector therefore stays inside that eigenspace even
/// when the top eigenvalue is repeated.
pub fn vh_weights(np: &NormalizedPanel) -> Result<VhWeights, IntensityError> {
    check_size(np, 2, 1)?;
    let h = cross_product_matrix(np);
    if h.iter().all(|&x| x == 0.0) {
        return Err(IntensityError::DegenerateSpectrum);
    }
    let eig = eig_sym(&SymMatrix::new(h.clone()).expect("cross-product matrix is symmetric"));
    let k = eig.max_index();
    let lambda_max = eig.values[k];
    let mut w: Vec<f64> = eig.vector(k).iter().copied().collect();
    if w.iter().sum::<f64>() < 0.0 {
        w.iter_mut().for_each(|x| *x = -*x);
    }
    for x in w.iter_mut() {
        *x = if x.abs() <= CLAMP_EPS { 0.0 } else { x.abs() };
    }
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.iter_mut().for_each(|x| *x /= norm);
    Ok(VhWeights {
        weights: WeightVector {
            names: np.indicators.iter().map(|s| s.name.clone()).collect(),
            weights: w,
            mode: WeightMode::UnitNorm,
        },
        lambda_max,
        cross_product: h,
    })
}

/// Entropy weights over pooled city-year observations (sum-one mode).
pub fn entropy_weights(np: &NormalizedPanel) -> Result<WeightVector, IntensityError> {
    let n = np.observations();
    if n < 2 {
        return Err(IntensityError::SingleObservation);
    }
    let m = np.indicators.len();
    let ln_n = (n as f64).ln();
    let mut divergence = Vec::with_capacity(m);
    for j in 0..m {
        let column: Vec<f64> = (0..np.cities.len())
            .flat_map(|c| (0..np.years.len()).map(move |t| (c, t)))
            .map(|(c, t)| np.get(c, t, j))
            .collect();
        let total: f64 = column.iter().sum();
        if total <= 0.0 {
            return Err(IntensityError::AllZeroIndicator(np.indicators[j].name.clone()));
        }
        let entropy = -column
            .iter()
            .filter(|&&x| x > 0.0)
            .map(|&x| {
                let p = x / total;
                p * p.ln()
            })
            .sum::<f64>()
            / ln_n;
        divergence.push((1.0 - entropy).max(0.0));
    }
    let total: f64 = divergence.iter().sum();
    if total <= 0.0 {
        return Err(IntensityError::UninformativeIndicators);
    }
    Ok(WeightVector {
        names: np.indicators.iter().map(|s| s.name.clone()).collect(),
        weights: divergence.iter().map(|d| d / total).collect(),
        mode: WeightMode::SumOne,
    })
}

/// Scores `y_i(t) = sum_j w_j x_ij(t)`, city-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityScores {
    pub cities: Vec<String>,
    pub years: Vec<i32>,
    pub values: Vec<f64>,
}

impl IntensityScores {
    pub fn get(&self, c: usize, t: usize) -> f64 {
        self.values[c * self.years.len() + t]
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["city", "year", "score"])?;
        for (c, city) in self.cities.iter().enumerate() {
            for (t, year) in self.years.iter().enumerate() {
                w.write_record([city.as_str(), &year.to_string(), &self.get(c, t).to_string()])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn score(np: &NormalizedPanel, w: &WeightVector) -> Result<IntensityScores, IntensityError> {
    let m = np.indicators.len();
    if w.weights.len() != m {
        return Err(IntensityError::DimensionMismatch(format!(
            "{} weights for {m} indicators",
            w.weights.len()
        )));
    }
    let values = np
        .values
        .chunks(m.max(1))
        .map(|row| row.iter().zip(&w.weights).map(|(x, wj)| x * wj).sum())
        .take(np.observations())
        .collect();
    Ok(IntensityScores {
        cities: np.cities.clone(),
        years: np.years.clone(),
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Fluctuating,
    Jumping,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IntensityLevel {
    High,
    Moderate,
    Low,
}

impl Stability {
    pub fn from_difference(diff: usize) -> Stability {
        match diff {
            0..=5 => Stability::Stable,
            6..=10 => Stability::Fluctuating,
            _ => Stability::Jumping,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Fluctuating => "fluctuating",
            Stability::Jumping => "jumping",
        }
    }
}

impl IntensityLevel {
    pub fn from_mean_rank(rank: f64) -> IntensityLevel {
        if rank <= 10.0 {
            IntensityLevel::High
        } else if rank <= 20.0 {
            IntensityLevel::Moderate
        } else {
            IntensityLevel::Low
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            IntensityLevel::High => "high",
            IntensityLevel::Moderate => "moderate",
            IntensityLevel::Low => "low",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DynamicClass {
    pub city: String,
    pub ranks: Vec<usize>,
    pub max_sequence_difference: usize,
    pub mean_rank: f64,
    pub stability: Stability,
    pub intensity: IntensityLevel,
}

/// Per-year ranks (1 = highest score, ties broken by city identifier),
/// returned city-major.
pub fn yearly_ranks(scores: &IntensityScores) -> Vec<Vec<usize>> {
    let (nc, nt) = (scores.cities.len(), scores.years.len());
    let mut ranks = vec![vec![0; nt]; nc];
    for t in 0..nt {
        let mut order: Vec<usize> = (0..nc).collect();
        order.sort_by(|&a, &b| {
            scores
                .get(b, t)
                .total_cmp(&scores.get(a, t))
                .then_with(|| scores.cities[a].cmp(&scores.cities[b]))
        });
        for (r, &c) in order.iter().enumerate() {
            ranks[c][t] = r + 1;
        }
    }
    ranks
}

pub fn dynamic_classify(scores: &IntensityScores) -> Result<Vec<DynamicClass>, IntensityError> {
    let (nc, nt) = (scores.cities.len(), scores.years.len());
    if nc < 2 {
        return Err(IntensityError::TooSmall { axis: "cities", needed: 2, have: nc });
    }
    if nt < 2 {
        return Err(IntensityError::TooSmall { axis: "years", needed: 2, have: nt });
    }
    let ranks = yearly_ranks(scores);
    Ok(scores
        .cities
        .iter()
        .zip(ranks)
        .map(|(city, r)| {
            let hi = *r.iter().max().unwrap();
            let lo = *r.iter().min().unwrap();
            let mean_rank = r.iter().sum::<usize>() as f64 / nt as f64;
            DynamicClass {
                city: city.clone(),
                max_sequence_difference: hi - lo,
                mean_rank,
                stability: Stability::from_difference(hi - lo),
                intensity: IntensityLevel::from_mean_rank(mean_rank),
                ranks: r,
            }
        })
        .collect())
}

pub fn write_classification_csv<W: Write>(writer: W, classes: &[DynamicClass]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["city", "max_sequence_difference", "mean_rank", "stability", "intensity"])?;
    for k in classes {
        w.write_record([
            k.city.as_str(),
            &k.max_sequence_difference.to_string(),
            &k.mean_rank.to_string(),
            k.stability.as_str(),
            k.intensity.as_str(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn check_size(np: &NormalizedPanel, cities: usize, indicators: usize) -> Result<(), IntensityError> {
    if np.cities.len() < cities {
        return Err(IntensityError::TooSmall { axis: "cities", needed: cities, have: np.cities.len() });
    }
    if np.years.is_empty() {
        return Err(IntensityError::TooSmall { axis: "periods", needed: 1, have: 0 });
    }
    if np.indicators.len() < indicators {
        return Err(IntensityError::TooSmall {
            axis: "indicators",
            needed: indicators,
            have: np.indicators.len(),
        });
    }
    Ok(())
}

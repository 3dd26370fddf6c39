//! Agglomeration measures over one year of city × sector employment.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("city {0:?} has zero total employment")]
    ZeroCityTotal(String),
    #[error("sector {0:?} has zero total employment in the reference table")]
    ZeroSectorTotal(String),
    #[error("city {0:?} has zero employment over the chosen sector subset")]
    ZeroSubsetTotal(String),
    #[error("unknown sector {0:?}")]
    UnknownSector(String),
    #[error("negative or non-finite employment {value} at ({city}, {sector})")]
    InvalidEmployment { city: String, sector: String, value: f64 },
    #[error("employment table shape: {0}")]
    Shape(String),
    #[error("index series are not aligned: {0}")]
    AxisMismatch(String),
    #[error("both location quotients are zero for city {0:?}")]
    BothZero(String),
    #[error("invalid index value {value} for city {city:?}")]
    InvalidValue { city: String, value: f64 },
}

/// Employment by city and sector for one year, row-major by city.
#[derive(Debug, Clone, PartialEq)]
pub struct EmploymentTable {
    year: i32,
    cities: Vec<String>,
    sectors: Vec<String>,
    employment: Vec<f64>,
}

impl EmploymentTable {
    pub fn new(year: i32, cities: Vec<String>, sectors: Vec<String>, employment: Vec<f64>) -> Result<Self, IndexError> {
        if employment.len() != cities.len() * sectors.len() {
            return Err(IndexError::Shape(format!(
                "{} values for {} cities x {} sectors",
                employment.len(),
                cities.len(),
                sectors.len()
            )));
        }
        for (i, city) in cities.iter().enumerate() {
            for (j, sector) in sectors.iter().enumerate() {
                let value = employment[i * sectors.len() + j];
                if !(value >= 0.0) || !value.is_finite() {
                    return Err(IndexError::InvalidEmployment {
                        city: city.clone(),
                        sector: sector.clone(),
                        value,
                    });
                }
            }
        }
        Ok(EmploymentTable {
            year,
            cities,
            sectors,
            employment,
        })
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn sectors(&self) -> &[String] {
        &self.sectors
    }

    pub fn get(&self, city: usize, sector: usize) -> f64 {
        self.employment[city * self.sectors.len() + sector]
    }

    pub fn sector_index(&self, sector: &str) -> Result<usize, IndexError> {
        self.sectors
            .iter()
            .position(|s| s == sector)
            .ok_or_else(|| IndexError::UnknownSector(sector.to_string()))
    }

    fn sector_indices(&self, sectors: &[String]) -> Result<Vec<usize>, IndexError> {
        sectors.iter().map(|s| self.sector_index(s)).collect()
    }

    pub fn city_total(&self, city: usize) -> f64 {
        (0..self.sectors.len()).map(|j| self.get(city, j)).sum()
    }

    fn group_employment(&self, city: usize, group: &[usize]) -> f64 {
        group.iter().map(|&j| self.get(city, j)).sum()
    }

    /// Multiplies every entry by `factor`.
    pub fn scaled(&self, factor: f64) -> EmploymentTable {
        EmploymentTable {
            employment: self.employment.iter().map(|e| e * factor).collect(),
            ..self.clone()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum IndexKind {
    /// Location quotient of a sector or of a named group of sectors.
    Lq(String),
    /// Location quotient of a named sector group, rendered `LQ<name>`.
    Group(String),
    Rdi,
    Cogg,
}

impl fmt::Display for IndexKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IndexKind::Lq(s) => write!(f, "LQ_{s}"),
            IndexKind::Group(s) => write!(f, "LQ{s}"),
            IndexKind::Rdi => f.write_str("RDI"),
            IndexKind::Cogg => f.write_str("COGG"),
        }
    }
}

/// One index value per city for a single year.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexSeries {
    pub kind: IndexKind,
    pub year: i32,
    pub cities: Vec<String>,
    pub values: Vec<f64>,
}

impl IndexSeries {
    pub fn value_of(&self, city: &str) -> Option<f64> {
        self.cities.iter().position(|c| c == city).map(|i| self.values[i])
    }
}

/// Location quotient of a single sector.
///
/// `LQ_i = (x_is / sum_s x_is) / (sum_i x_is / sum_i sum_s x_is)` where the
/// denominator comes from `reference`, or from `table` itself when no
/// reference is supplied.
pub fn location_quotient(
    table: &EmploymentTable,
    sector: &str,
    reference: Option<&EmploymentTable>,
) -> Result<IndexSeries, IndexError> {
    let mut series = group_location_quotient(table, &[sector.to_string()], reference)?;
    series.kind = IndexKind::Lq(sector.to_string());
    Ok(series)
}

/// Location quotient of the combined employment of a group of sectors.
pub fn group_location_quotient(
    table: &EmploymentTable,
    group: &[String],
    reference: Option<&EmploymentTable>,
) -> Result<IndexSeries, IndexError> {
    let reference = reference.unwrap_or(table);
    let local = table.sector_indices(group)?;
    let refs = reference.sector_indices(group)?;

    let ref_group: f64 = (0..reference.cities.len())
        .map(|i| reference.group_employment(i, &refs))
        .sum();
    let ref_total: f64 = reference.employment.iter().sum();
    if ref_group <= 0.0 {
        return Err(IndexError::ZeroSectorTotal(group.join("+")));
    }
    let ref_share = ref_group / ref_total;

    let values = (0..table.cities.len())
        .map(|i| {
            let total = table.city_total(i);
            if total <= 0.0 {
                return Err(IndexError::ZeroCityTotal(table.cities[i].clone()));
            }
            Ok((table.group_employment(i, &local) / total) / ref_share)
        })
        .collect::<Result<Vec<_>, _>>()?;

    Ok(IndexSeries {
        kind: IndexKind::Lq(group.join("+")),
        year: table.year,
        cities: table.cities.clone(),
        values,
    })
}

/// Relative diversification index `1 - sum_j S_ij^2` over a sector subset.
pub fn rdi(table: &EmploymentTable, sectors: &[String]) -> Result<IndexSeries, IndexError> {
    let idx = table.sector_indices(sectors)?;
    let values = (0..table.cities.len())
        .map(|i| {
            let total = table.group_employment(i, &idx);
            if total <= 0.0 {
                return Err(IndexError::ZeroSubsetTotal(table.cities[i].clone()));
            }
            let herfindahl: f64 = idx.iter().map(|&j| (table.get(i, j) / total).powi(2)).sum();
            Ok(1.0 - herfindahl)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IndexSeries {
        kind: IndexKind::Rdi,
        year: table.year,
        cities: table.cities.clone(),
        values,
    })
}

/// Which terms enter the co-agglomeration index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CoggFormula {
    /// `1 - |a - b| / (a + b) + (a + b)`
    #[default]
    BalancePlusHeight,
    /// `1 - |a - b| / (a + b)`
    BalanceOnly,
    /// `a + b`
    HeightOnly,
}

impl FromStr for CoggFormula {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "balance-plus-height" => Ok(CoggFormula::BalancePlusHeight),
            "balance-only" => Ok(CoggFormula::BalanceOnly),
            "height-only" => Ok(CoggFormula::HeightOnly),
            other => Err(format!("unknown co-agglomeration formula {other:?}")),
        }
    }
}

impl CoggFormula {
    pub fn apply(self, a: f64, b: f64) -> f64 {
        let height = a + b;
        let balance = 1.0 - (a - b).abs() / height;
        match self {
            CoggFormula::BalancePlusHeight => balance + height,
            CoggFormula::BalanceOnly => balance,
            CoggFormula::HeightOnly => height,
        }
    }
}

/// Co-agglomeration of two location-quotient series on the same city axis.
pub fn coagglomeration(lq_m: &IndexSeries, lq_s: &IndexSeries, formula: CoggFormula) -> Result<IndexSeries, IndexError> {
    if lq_m.cities != lq_s.cities {
        return Err(IndexError::AxisMismatch("city axes differ".into()));
    }
    if lq_m.year != lq_s.year {
        return Err(IndexError::AxisMismatch(format!("years {} and {}", lq_m.year, lq_s.year)));
    }
    let values = lq_m
        .cities
        .iter()
        .zip(lq_m.values.iter().zip(&lq_s.values))
        .map(|(city, (&a, &b))| {
            for v in [a, b] {
                if !(v >= 0.0) || !v.is_finite() {
                    return Err(IndexError::InvalidValue { city: city.clone(), value: v });
                }
            }
            if a + b == 0.0 {
                return Err(IndexError::BothZero(city.clone()));
            }
            Ok(formula.apply(a, b))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(IndexSeries {
        kind: IndexKind::Cogg,
        year: lq_m.year,
        cities: lq_m.cities.clone(),
        values,
    })
}

/// Specialization tier: 1 above 2.0, 2 in (1.5, 2.0], 3 in [1.0, 1.5], 4 below 1.0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LqTier {
    First = 1,
    Second = 2,
    Third = 3,
    Fourth = 4,
}

impl LqTier {
    pub fn from_lq(lq: f64) -> Option<LqTier> {
        if !lq.is_finite() {
            None
        } else if lq > 2.0 {
            Some(LqTier::First)
        } else if lq > 1.5 {
            Some(LqTier::Second)
        } else if lq >= 1.0 {
            Some(LqTier::Third)
        } else {
            Some(LqTier::Fourth)
        }
    }

    pub fn number(self) -> u8 {
        self as u8
    }
}

pub fn classify_lq_tiers(lq: &IndexSeries) -> Result<Vec<LqTier>, IndexError> {
    lq.cities
        .iter()
        .zip(&lq.values)
        .map(|(city, &v)| {
            LqTier::from_lq(v).ok_or_else(|| IndexError::InvalidValue {
                city: city.clone(),
                value: v,
            })
        })
        .collect()
}

/// Writes series as `city,year,index,value` rows.
pub fn write_index_csv<W: Write>(writer: W, series: &[IndexSeries]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["city", "year", "index", "value"])?;
    for s in series {
        let kind = s.kind.to_string();
        let year = s.year.to_string();
        for (city, v) in s.cities.iter().zip(&s.values) {
            w.write_record([city.as_str(), &year, &kind, &v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn table(rows: &[&[f64]], sectors: &[&str]) -> EmploymentTable {
        let cities = (0..rows.len()).map(|i| format!("c{i}")).collect();
        EmploymentTable::new(
            2003,
            cities,
            sectors.iter().map(|s| s.to_string()).collect(),
            rows.iter().flat_map(|r| r.iter().copied()).collect(),
        )
        .unwrap()
    }

    fn names(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn identical_shares_give_unit_lq() {
        let t = table(&[&[1.0, 3.0], &[2.0, 6.0], &[5.0, 15.0]], &["m", "s"]);
        let lq = location_quotient(&t, "m", None).unwrap();
        for v in lq.values {
            assert_abs_diff_eq!(v, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn two_city_hand_example() {
        let t = table(&[&[10.0, 30.0], &[20.0, 40.0]], &["m", "s"]);
        let lq = location_quotient(&t, "m", None).unwrap();
        assert_abs_diff_eq!(lq.values[0], (10.0 / 40.0) / (30.0 / 100.0), epsilon = 1e-15);
        assert_abs_diff_eq!(lq.values[0], 0.833_333_333_333_333_4, epsilon = 1e-15);
        assert_eq!(lq.kind.to_string(), "LQ_m");
    }

    #[test]
    fn external_reference_denominator() {
        let t = table(&[&[30.0, 70.0]], &["m", "s"]);
        let nation = table(&[&[250.0, 750.0]], &["m", "s"]);
        let lq = location_quotient(&t, "m", Some(&nation)).unwrap();
        assert_abs_diff_eq!(lq.values[0], 0.3 / 0.25, epsilon = 1e-15);
    }

    #[test]
    fn lq_errors_name_offender() {
        let t = table(&[&[0.0, 0.0], &[1.0, 1.0]], &["m", "s"]);
        assert_eq!(
            location_quotient(&t, "m", None).unwrap_err(),
            IndexError::ZeroCityTotal("c0".into())
        );
        let t = table(&[&[0.0, 1.0]], &["m", "s"]);
        assert_eq!(
            location_quotient(&t, "m", None).unwrap_err(),
            IndexError::ZeroSectorTotal("m".into())
        );
        assert!(matches!(
            location_quotient(&t, "x", None),
            Err(IndexError::UnknownSector(_))
        ));
    }

    #[test]
    fn negative_employment_rejected() {
        let err = EmploymentTable::new(2003, names(&["a"]), names(&["m"]), vec![-1.0]).unwrap_err();
        assert!(matches!(err, IndexError::InvalidEmployment { .. }));
    }

    #[test]
    fn rdi_cases() {
        let t = table(&[&[5.0, 0.0, 0.0], &[50.0, 30.0, 20.0]], &["a", "b", "c"]);
        let r = rdi(&t, &names(&["a", "b", "c"])).unwrap();
        assert_eq!(r.values[0], 0.0);
        assert_abs_diff_eq!(r.values[1], 0.62, epsilon = 1e-15);

        let t = table(&[&[1.0, 1.0, 1.0, 1.0, 1.0]], &["a", "b", "c", "d", "e"]);
        let r = rdi(&t, &names(&["a", "b", "c", "d", "e"])).unwrap();
        assert_abs_diff_eq!(r.values[0], 0.8, epsilon = 1e-15);

        let t = table(&[&[0.0, 0.0, 3.0]], &["a", "b", "c"]);
        assert_eq!(
            rdi(&t, &names(&["a", "b"])).unwrap_err(),
            IndexError::ZeroSubsetTotal("c0".into())
        );
    }

    fn series(values: &[f64]) -> IndexSeries {
        IndexSeries {
            kind: IndexKind::Lq("m".into()),
            year: 2003,
            cities: (0..values.len()).map(|i| format!("c{i}")).collect(),
            values: values.to_vec(),
        }
    }

    #[test]
    fn cogg_closed_forms() {
        let a = series(&[1.0, 2.0, 0.7]);
        let b = series(&[1.0, 0.0, 0.7]);
        let c = coagglomeration(&a, &b, CoggFormula::BalancePlusHeight).unwrap();
        assert_eq!(c.values[0], 3.0);
        assert_eq!(c.values[1], 2.0);
        let c = coagglomeration(&a, &b, CoggFormula::BalanceOnly).unwrap();
        assert_eq!(c.values[2], 1.0);
        let c = coagglomeration(&a, &b, CoggFormula::HeightOnly).unwrap();
        assert_abs_diff_eq!(c.values[2], 1.4, epsilon = 1e-15);
    }

    #[test]
    fn cogg_errors() {
        let a = series(&[0.0]);
        assert_eq!(
            coagglomeration(&a, &a, CoggFormula::default()).unwrap_err(),
            IndexError::BothZero("c0".into())
        );
        let b = series(&[1.0, 2.0]);
        assert!(matches!(
            coagglomeration(&a, &b, CoggFormula::default()),
            Err(IndexError::AxisMismatch(_))
        ));
        let neg = series(&[-0.5]);
        assert!(matches!(
            coagglomeration(&neg, &series(&[1.0]), CoggFormula::default()),
            Err(IndexError::InvalidValue { .. })
        ));
    }

    #[test]
    fn tier_boundaries() {
        assert_eq!(LqTier::from_lq(2.3), Some(LqTier::First));
        assert_eq!(LqTier::from_lq(2.0), Some(LqTier::Second));
        assert_eq!(LqTier::from_lq(1.5000001), Some(LqTier::Second));
        assert_eq!(LqTier::from_lq(1.5), Some(LqTier::Third));
        assert_eq!(LqTier::from_lq(1.0), Some(LqTier::Third));
        assert_eq!(LqTier::from_lq(0.99), Some(LqTier::Fourth));
        assert_eq!(LqTier::from_lq(0.0), Some(LqTier::Fourth));
        assert_eq!(LqTier::from_lq(f64::NAN), None);
        let tiers = classify_lq_tiers(&series(&[2.3, 1.0, 0.99])).unwrap();
        assert_eq!(tiers.iter().map(|t| t.number()).collect::<Vec<_>>(), vec![1, 3, 4]);
    }

    #[test]
    fn index_csv_layout() {
        let mut buf = Vec::new();
        write_index_csv(&mut buf, &[series(&[1.25])]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "city,year,index,value\nc0,2003,LQ_m,1.25\n");
    }

    #[test]
    fn formula_names_parse() {
        assert_eq!("balance-only".parse::<CoggFormula>().unwrap(), CoggFormula::BalanceOnly);
        assert!("eg".parse::<CoggFormula>().is_err());
    }
}

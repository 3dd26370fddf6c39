//! City × year × variable panels, CSV ingestion and gap filling.

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::indices::EmploymentTable;

#[derive(Debug, Error)]
pub enum PanelError {
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("duplicate observation at row {row}: ({city}, {year}, {variable})")]
    DuplicateObservation {
        row: usize,
        city: String,
        year: i32,
        variable: String,
    },
    #[error("non-numeric value {value:?} at row {row}, column {column:?}")]
    NonNumericValue {
        row: usize,
        column: String,
        value: String,
    },
    #[error("series ({city}, {variable}) has no observed values")]
    AllMissingSeries { city: String, variable: String },
    #[error("unknown sector {0:?}")]
    UnknownSector(String),
    #[error("year {0} is not on the panel's year axis")]
    MissingYear(i32),
    #[error("unknown city {0:?}")]
    UnknownCity(String),
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("missing value at ({city}, {year}, {variable})")]
    MissingValue {
        city: String,
        year: i32,
        variable: String,
    },
    #[error("invalid axes: {0}")]
    InvalidAxes(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// On-disk layout of a panel CSV file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Schema {
    /// `city,year,variable,value`
    #[default]
    Long,
    /// `city,year,<var...>`
    Wide,
}

impl FromStr for Schema {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "long" => Ok(Schema::Long),
            "wide" => Ok(Schema::Wide),
            other => Err(format!("unknown schema {other:?}")),
        }
    }
}

/// A city-year panel. Missing cells are `None`.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    cities: Vec<String>,
    years: Vec<i32>,
    variables: Vec<String>,
    values: Vec<Option<f64>>,
    city_pos: HashMap<String, usize>,
    var_pos: HashMap<String, usize>,
}

fn positions(names: &[String], what: &str) -> Result<HashMap<String, usize>, PanelError> {
    let mut map = HashMap::with_capacity(names.len());
    for (i, n) in names.iter().enumerate() {
        if map.insert(n.clone(), i).is_some() {
            return Err(PanelError::InvalidAxes(format!("duplicate {what} {n:?}")));
        }
    }
    Ok(map)
}

impl PanelDataset {
    /// Creates an all-missing panel over the given axes.
    pub fn new(cities: Vec<String>, years: Vec<i32>, variables: Vec<String>) -> Result<Self, PanelError> {
        if years.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PanelError::InvalidAxes("years must be strictly increasing".into()));
        }
        let city_pos = positions(&cities, "city")?;
        let var_pos = positions(&variables, "variable")?;
        let len = cities.len() * years.len() * variables.len();
        Ok(PanelDataset {
            cities,
            years,
            variables,
            values: vec![None; len],
            city_pos,
            var_pos,
        })
    }

    pub fn cities(&self) -> &[String] {
        &self.cities
    }

    pub fn years(&self) -> &[i32] {
        &self.years
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn city_index(&self, city: &str) -> Result<usize, PanelError> {
        self.city_pos
            .get(city)
            .copied()
            .ok_or_else(|| PanelError::UnknownCity(city.to_string()))
    }

    pub fn year_index(&self, year: i32) -> Result<usize, PanelError> {
        self.years
            .binary_search(&year)
            .map_err(|_| PanelError::MissingYear(year))
    }

    pub fn variable_index(&self, variable: &str) -> Result<usize, PanelError> {
        self.var_pos
            .get(variable)
            .copied()
            .ok_or_else(|| PanelError::UnknownVariable(variable.to_string()))
    }

    pub fn has_variable(&self, variable: &str) -> bool {
        self.var_pos.contains_key(variable)
    }

    fn offset(&self, c: usize, t: usize, v: usize) -> usize {
        (c * self.years.len() + t) * self.variables.len() + v
    }

    /// Value by axis positions.
    pub fn at(&self, c: usize, t: usize, v: usize) -> Option<f64> {
        self.values[self.offset(c, t, v)]
    }

    pub fn set_at(&mut self, c: usize, t: usize, v: usize, value: Option<f64>) {
        let o = self.offset(c, t, v);
        self.values[o] = value;
    }

    /// Value by name; `Ok(None)` is a missing cell.
    pub fn get(&self, city: &str, year: i32, variable: &str) -> Result<Option<f64>, PanelError> {
        Ok(self.at(
            self.city_index(city)?,
            self.year_index(year)?,
            self.variable_index(variable)?,
        ))
    }

    pub fn set(&mut self, city: &str, year: i32, variable: &str, value: Option<f64>) -> Result<(), PanelError> {
        let (c, t, v) = (
            self.city_index(city)?,
            self.year_index(year)?,
            self.variable_index(variable)?,
        );
        self.set_at(c, t, v, value);
        Ok(())
    }

    /// Present value or a `MissingValue` error naming the cell.
    pub fn require(&self, c: usize, t: usize, v: usize) -> Result<f64, PanelError> {
        self.at(c, t, v).ok_or_else(|| PanelError::MissingValue {
            city: self.cities[c].clone(),
            year: self.years[t],
            variable: self.variables[v].clone(),
        })
    }

    /// Year-ordered series for one city and variable.
    pub fn series(&self, c: usize, v: usize) -> Vec<Option<f64>> {
        (0..self.years.len()).map(|t| self.at(c, t, v)).collect()
    }

    pub fn missing_count(&self) -> usize {
        self.values.iter().filter(|v| v.is_none()).count()
    }

    /// Appends a variable (all missing) and returns its index. Existing
    /// variables with the same name are reused.
    pub fn add_variable(&mut self, name: &str) -> usize {
        if let Some(&v) = self.var_pos.get(name) {
            return v;
        }
        let nv_old = self.variables.len();
        let cells = self.cities.len() * self.years.len();
        let mut values = Vec::with_capacity(cells * (nv_old + 1));
        for cell in 0..cells {
            values.extend_from_slice(&self.values[cell * nv_old..(cell + 1) * nv_old]);
            values.push(None);
        }
        self.values = values;
        self.variables.push(name.to_string());
        self.var_pos.insert(name.to_string(), nv_old);
        nv_old
    }

    /// New panel restricted to the named variables, in the given order.
    pub fn select(&self, variables: &[String]) -> Result<PanelDataset, PanelError> {
        let idx: Vec<usize> = variables
            .iter()
            .map(|v| self.variable_index(v))
            .collect::<Result<_, _>>()?;
        let mut out = PanelDataset::new(self.cities.clone(), self.years.clone(), variables.to_vec())?;
        for c in 0..self.cities.len() {
            for t in 0..self.years.len() {
                for (k, &v) in idx.iter().enumerate() {
                    out.set_at(c, t, k, self.at(c, t, v));
                }
            }
        }
        Ok(out)
    }

    /// Fills gaps in every (city, variable) series.
    ///
    /// Interior gaps are interpolated linearly in year index, leading and
    /// trailing gaps take the nearest observed value. Observed cells are
    /// never touched.
    pub fn interpolate_missing(&self) -> Result<PanelDataset, PanelError> {
        let mut out = self.clone();
        let nt = self.years.len();
        for c in 0..self.cities.len() {
            for v in 0..self.variables.len() {
                let series = self.series(c, v);
                let observed: Vec<usize> = (0..nt).filter(|&t| series[t].is_some()).collect();
                let (Some(&first), Some(&last)) = (observed.first(), observed.last()) else {
                    if nt == 0 {
                        continue;
                    }
                    return Err(PanelError::AllMissingSeries {
                        city: self.cities[c].clone(),
                        variable: self.variables[v].clone(),
                    });
                };
                if observed.len() == nt {
                    continue;
                }
                let first_val = series[first].unwrap();
                let last_val = series[last].unwrap();
                for t in 0..first {
                    out.set_at(c, t, v, Some(first_val));
                }
                for t in (last + 1)..nt {
                    out.set_at(c, t, v, Some(last_val));
                }
                for pair in observed.windows(2) {
                    let (a, b) = (pair[0], pair[1]);
                    if b - a < 2 {
                        continue;
                    }
                    let (ya, yb) = (series[a].unwrap(), series[b].unwrap());
                    for t in (a + 1)..b {
                        let frac = (t - a) as f64 / (b - a) as f64;
                        out.set_at(c, t, v, Some(ya + frac * (yb - ya)));
                    }
                }
            }
        }
        Ok(out)
    }

    /// Employment slice for one year with sectors in the declared order.
    pub fn extract_employment(&self, year: i32, sectors: &[String]) -> Result<EmploymentTable, PanelError> {
        let t = self.year_index(year)?;
        let idx: Vec<usize> = sectors
            .iter()
            .map(|s| {
                self.var_pos
                    .get(s)
                    .copied()
                    .ok_or_else(|| PanelError::UnknownSector(s.clone()))
            })
            .collect::<Result<_, _>>()?;
        let mut employment = Vec::with_capacity(self.cities.len() * idx.len());
        for c in 0..self.cities.len() {
            for &v in &idx {
                employment.push(self.require(c, t, v)?);
            }
        }
        EmploymentTable::new(year, self.cities.clone(), sectors.to_vec(), employment)
            .map_err(|e| PanelError::InvalidAxes(e.to_string()))
    }

    /// Writes the canonical long-schema CSV. Missing cells are written as
    /// empty strings so the file loads back to the same panel.
    pub fn write_long<W: Write>(&self, writer: W) -> Result<(), PanelError> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["city", "year", "variable", "value"])?;
        for (c, city) in self.cities.iter().enumerate() {
            for (t, year) in self.years.iter().enumerate() {
                for (v, var) in self.variables.iter().enumerate() {
                    let value = self.at(c, t, v).map(|x| x.to_string()).unwrap_or_default();
                    w.write_record([city.as_str(), &year.to_string(), var.as_str(), &value])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_long_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_long(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

impl fmt::Display for PanelDataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "panel: {} cities x {} years x {} variables ({} missing)",
            self.cities.len(),
            self.years.len(),
            self.variables.len(),
            self.missing_count()
        )
    }
}

fn parse_cell(raw: &str, row: usize, column: &str) -> Result<Option<f64>, PanelError> {
    let s = raw.trim();
    if s.is_empty() || s.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    s.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| PanelError::NonNumericValue {
            row,
            column: column.to_string(),
            value: raw.to_string(),
        })
}

fn parse_year(raw: &str, row: usize) -> Result<i32, PanelError> {
    raw.trim().parse::<i32>().map_err(|_| PanelError::NonNumericValue {
        row,
        column: "year".to_string(),
        value: raw.to_string(),
    })
}

struct Observation {
    row: usize,
    city: String,
    year: i32,
    variable: String,
    value: Option<f64>,
}

fn push_unique<T: Clone + Eq + std::hash::Hash>(order: &mut Vec<T>, seen: &mut HashMap<T, usize>, item: &T) {
    if !seen.contains_key(item) {
        seen.insert(item.clone(), order.len());
        order.push(item.clone());
    }
}

/// Reads a panel from any reader. Row numbers in errors are 1-based file
/// lines (the header is line 1).
pub fn read_panel<R: Read>(reader: R, schema: Schema) -> Result<PanelDataset, PanelError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let mut obs = Vec::new();
    let mut variables = Vec::new();
    let mut var_seen = HashMap::new();
    match schema {
        Schema::Long => {
            if header != ["city", "year", "variable", "value"] {
                return Err(PanelError::MalformedHeader(format!(
                    "expected city,year,variable,value, found {}",
                    header.join(",")
                )));
            }
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let row = i + 2;
                let variable = rec[2].trim().to_string();
                push_unique(&mut variables, &mut var_seen, &variable);
                obs.push(Observation {
                    row,
                    city: rec[0].trim().to_string(),
                    year: parse_year(&rec[1], row)?,
                    value: parse_cell(&rec[3], row, "value")?,
                    variable,
                });
            }
        }
        Schema::Wide => {
            if header.len() < 3 || header[0] != "city" || header[1] != "year" {
                return Err(PanelError::MalformedHeader(format!(
                    "expected city,year,<variables...>, found {}",
                    header.join(",")
                )));
            }
            for name in &header[2..] {
                if name.is_empty() || var_seen.contains_key(name) {
                    return Err(PanelError::MalformedHeader(format!(
                        "empty or repeated variable column {name:?}"
                    )));
                }
                push_unique(&mut variables, &mut var_seen, name);
            }
            for (i, rec) in rdr.records().enumerate() {
                let rec = rec?;
                let row = i + 2;
                let city = rec[0].trim().to_string();
                let year = parse_year(&rec[1], row)?;
                for (k, name) in header[2..].iter().enumerate() {
                    obs.push(Observation {
                        row,
                        city: city.clone(),
                        year,
                        variable: name.clone(),
                        value: parse_cell(&rec[k + 2], row, name)?,
                    });
                }
            }
        }
    }

    let mut cities = Vec::new();
    let mut city_seen = HashMap::new();
    let mut years: Vec<i32> = obs.iter().map(|o| o.year).collect();
    years.sort_unstable();
    years.dedup();
    for o in &obs {
        push_unique(&mut cities, &mut city_seen, &o.city);
    }

    let mut ds = PanelDataset::new(cities, years, variables)?;
    let mut filled = vec![false; ds.values.len()];
    for o in obs {
        let (c, t, v) = (
            ds.city_index(&o.city)?,
            ds.year_index(o.year)?,
            ds.variable_index(&o.variable)?,
        );
        let off = ds.offset(c, t, v);
        if filled[off] {
            return Err(PanelError::DuplicateObservation {
                row: o.row,
                city: o.city,
                year: o.year,
                variable: o.variable,
            });
        }
        filled[off] = true;
        ds.values[off] = o.value;
    }
    Ok(ds)
}

pub fn load_panel(path: &Path, schema: Schema) -> Result<PanelDataset, PanelError> {
    let file = std::fs::File::open(path)?;
    read_panel(std::io::BufReader::new(file), schema)
}

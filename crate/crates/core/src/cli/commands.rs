//! Command bodies. Each returns the files to place in its run directory.

use std::collections::BTreeSet;

use serde::Serialize;
use serde_json::json;

use crate::econometrics::{
    balance, build_design, fit_ols_fe, fit_sem_fe, fit_slm_fe, lm_tests, summarize, DesignMatrices, LmDiagnostics,
    ModelSpec, SpatialFit,
};
use crate::indices::{
    classify_lq_tiers, coagglomeration, group_location_quotient, location_quotient, rdi, write_index_csv,
    EmploymentTable, IndexKind, IndexSeries,
};
use crate::intensity::{
    dynamic_classify, entropy_weights, normalize, score, vh_weights, write_classification_csv, yearly_ranks,
    IntensityScores, WeightMethod, WeightVector,
};
use crate::panel::{load_panel, PanelDataset};
use crate::spatial::{build_weights, global_moran, load_edges, local_moran, SpatialWeights};
use crate::synth::{gen_demo, gen_density_panel, gen_sem_panel, gen_slm_panel, DensityParams, Exogenous, SlmDgpParams};

use super::{CliError, Generator, LoadedConfig, ModelChoice, Outputs};

pub const MANUFACTURING_GROUP: &str = "agman";
pub const SERVICES_GROUP: &str = "agser";
pub const SCORE_VARIABLE: &str = "score";

fn csv_bytes<F>(f: F) -> Result<Vec<u8>, CliError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| CliError::data("Csv", e.to_string()))?;
    Ok(buf)
}

fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(value).expect("output serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn load_study_panel(lc: &LoadedConfig) -> Result<PanelDataset, CliError> {
    let path = lc.input("panel", lc.config.inputs.panel.as_ref())?;
    let ds = load_panel(&path, lc.config.inputs.schema).map_err(|e| CliError::from(e).at(&path))?;
    if lc.config.inputs.interpolate {
        return ds.interpolate_missing().map_err(|e| CliError::from(e).at(&path));
    }
    Ok(ds)
}

pub fn load_weights(lc: &LoadedConfig, cities: &[String]) -> Result<SpatialWeights, CliError> {
    let path = lc.input("adjacency", lc.config.inputs.adjacency.as_ref())?;
    let edges = load_edges(&path).map_err(|e| CliError::from(e).at(&path))?;
    build_weights(&edges, cities, lc.config.inputs.standardize).map_err(|e| CliError::from(e).at(&path))
}

fn check_sectors(lc: &LoadedConfig, ds: &PanelDataset) -> Result<Vec<String>, CliError> {
    let sectors = lc.config.sectors.all();
    for s in &sectors {
        if !ds.has_variable(s) {
            return Err(CliError::config(
                "UnknownSector",
                format!("sector {s:?} is not a variable of the panel"),
            ));
        }
    }
    Ok(sectors)
}

/// All index series, ordered by index then year.
pub fn compute_indices(lc: &LoadedConfig, ds: &PanelDataset) -> Result<Vec<IndexSeries>, CliError> {
    let sectors = check_sectors(lc, ds)?;
    let reference = match &lc.config.inputs.reference_panel {
        Some(p) => {
            let path = lc.input("reference_panel", Some(p))?;
            let r = load_panel(&path, lc.config.inputs.schema).map_err(|e| CliError::from(e).at(&path))?;
            for s in &sectors {
                if !r.has_variable(s) {
                    return Err(CliError::config(
                        "UnknownSector",
                        format!("sector {s:?} missing from the reference panel"),
                    ));
                }
            }
            Some((r, path))
        }
        None => None,
    };
    let sc = &lc.config.sectors;
    let mut per_kind: Vec<Vec<IndexSeries>> = Vec::new();
    for &year in ds.years() {
        let table = ds.extract_employment(year, &sectors)?;
        let ref_table: Option<EmploymentTable> = match &reference {
            Some((r, path)) => Some(r.extract_employment(year, &sectors).map_err(|e| CliError::from(e).at(path))?),
            None => None,
        };
        let rt = ref_table.as_ref();
        let mut man = group_location_quotient(&table, &sc.manufacturing, rt)?;
        man.kind = IndexKind::Group(MANUFACTURING_GROUP.into());
        let mut ser = group_location_quotient(&table, &sc.producer_services, rt)?;
        ser.kind = IndexKind::Group(SERVICES_GROUP.into());
        let cogg = coagglomeration(&man, &ser, lc.config.cogg)?;
        let mut year_series = vec![man, ser];
        for s in sc.manufacturing.iter().chain(&sc.producer_services) {
            year_series.push(location_quotient(&table, s, rt)?);
        }
        year_series.push(rdi(&table, &sc.producer_services)?);
        year_series.push(cogg);
        if per_kind.is_empty() {
            per_kind = year_series.into_iter().map(|s| vec![s]).collect();
        } else {
            for (k, s) in year_series.into_iter().enumerate() {
                per_kind[k].push(s);
            }
        }
    }
    Ok(per_kind.into_iter().flatten().collect())
}

pub struct IntensityRun {
    pub method: WeightMethod,
    pub weights: WeightVector,
    pub lambda_max: Option<f64>,
    pub scores: IntensityScores,
}

pub fn compute_intensity(lc: &LoadedConfig, ds: &PanelDataset, method: WeightMethod) -> Result<IntensityRun, CliError> {
    if lc.config.indicators.is_empty() {
        return Err(CliError::config("NoIndicators", "no indicators configured".into()));
    }
    let np = normalize(ds, &lc.config.indicators)?;
    let (weights, lambda_max) = match method {
        WeightMethod::Vh => {
            let vh = vh_weights(&np)?;
            (vh.weights, Some(vh.lambda_max))
        }
        WeightMethod::Entropy => (entropy_weights(&np)?, None),
    };
    let scores = score(&np, &weights.sum_one())?;
    Ok(IntensityRun { method, weights, lambda_max, scores })
}

fn is_index_name(name: &str) -> bool {
    name == format!("LQ{MANUFACTURING_GROUP}")
        || name == format!("LQ{SERVICES_GROUP}")
        || name.starts_with("LQ_")
        || name == IndexKind::Rdi.to_string()
        || name == IndexKind::Cogg.to_string()
}

/// Adds any of `needed` that are derived quantities (index series or the
/// intensity score) and not already panel variables.
pub fn derive_variables(lc: &LoadedConfig, ds: &PanelDataset, needed: &[String]) -> Result<PanelDataset, CliError> {
    let missing: Vec<&String> = needed.iter().filter(|v| !ds.has_variable(v)).collect();
    if missing.is_empty() {
        return Ok(ds.clone());
    }
    for v in &missing {
        if !is_index_name(v) && v.as_str() != SCORE_VARIABLE {
            return Err(CliError::config(
                "UnknownVariable",
                format!("variable {v:?} is neither in the panel nor derivable"),
            ));
        }
    }
    let mut out = ds.clone();
    if missing.iter().any(|v| is_index_name(v)) {
        let series = compute_indices(lc, ds)?;
        for name in missing.iter().filter(|v| is_index_name(v)) {
            let mut found = false;
            let var = out.add_variable(name);
            for s in series.iter().filter(|s| &&s.kind.to_string() == name) {
                found = true;
                let t = out.year_index(s.year)?;
                for (c, v) in s.values.iter().enumerate() {
                    out.set_at(c, t, var, Some(*v));
                }
            }
            if !found {
                return Err(CliError::config(
                    "UnknownVariable",
                    format!("index {name:?} is not produced by the configured sectors"),
                ));
            }
        }
    }
    if missing.iter().any(|v| v.as_str() == SCORE_VARIABLE) {
        let run = compute_intensity(lc, ds, lc.config.intensity.method)?;
        let var = out.add_variable(SCORE_VARIABLE);
        for c in 0..ds.cities().len() {
            for t in 0..ds.years().len() {
                out.set_at(c, t, var, Some(run.scores.get(c, t)));
            }
        }
    }
    Ok(out)
}

pub fn indices(lc: &LoadedConfig) -> Result<Outputs, CliError> {
    let ds = load_study_panel(lc)?;
    let series = compute_indices(lc, &ds)?;
    let indices_csv = csv_bytes(|buf| write_index_csv(buf, &series))?;

    let man_kind = IndexKind::Group(MANUFACTURING_GROUP.into());
    let mut tiers = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut tiers);
        let err = |e: csv::Error| CliError::data("Csv", e.to_string());
        w.write_record(["city", "year", "lq", "tier"]).map_err(err)?;
        for s in series.iter().filter(|s| s.kind == man_kind) {
            let t = classify_lq_tiers(s)?;
            for ((city, v), tier) in s.cities.iter().zip(&s.values).zip(t) {
                w.write_record([city.as_str(), &s.year.to_string(), &v.to_string(), &tier.number().to_string()])
                    .map_err(err)?;
            }
        }
        w.flush().map_err(|e| CliError::data("Io", e.to_string()))?;
    }
    Ok(vec![("indices.csv".into(), indices_csv), ("lq_tiers.csv".into(), tiers)])
}

pub fn intensity(lc: &LoadedConfig, method: Option<WeightMethod>) -> Result<Outputs, CliError> {
    let ds = load_study_panel(lc)?;
    let run = compute_intensity(lc, &ds, method.unwrap_or(lc.config.intensity.method))?;
    let sum_one = run.weights.sum_one();
    let unit = run.weights.unit_norm();
    let indicators: Vec<_> = lc
        .config
        .indicators
        .iter()
        .enumerate()
        .map(|(j, spec)| {
            json!({
                "name": spec.name,
                "dimension": spec.dimension,
                "orientation": spec.orientation,
                "weight": sum_one.weights[j],
                "unit_norm_weight": unit.weights[j],
            })
        })
        .collect();
    let mut weights = json!({ "method": run.method, "indicators": indicators });
    if let Some(l) = run.lambda_max {
        weights["lambda_max"] = json!(l);
    }

    let classes = dynamic_classify(&run.scores)?;
    let ranks = yearly_ranks(&run.scores);
    let mut rank_csv = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut rank_csv);
        let err = |e: csv::Error| CliError::data("Csv", e.to_string());
        w.write_record(["city", "year", "score", "rank"]).map_err(err)?;
        for (c, city) in run.scores.cities.iter().enumerate() {
            for (t, year) in run.scores.years.iter().enumerate() {
                w.write_record([
                    city.as_str(),
                    &year.to_string(),
                    &run.scores.get(c, t).to_string(),
                    &ranks[c][t].to_string(),
                ])
                .map_err(err)?;
            }
        }
        w.flush().map_err(|e| CliError::data("Io", e.to_string()))?;
    }
    Ok(vec![
        ("scores.csv".into(), csv_bytes(|buf| run.scores.write_csv(buf))?),
        ("weights.json".into(), json_bytes(&weights)),
        ("classification.csv".into(), csv_bytes(|buf| write_classification_csv(buf, &classes))?),
        ("trajectories.csv".into(), rank_csv),
    ])
}

pub fn moran(lc: &LoadedConfig, variable: Option<&str>, year: Option<i32>) -> Result<Outputs, CliError> {
    let variable = variable
        .map(str::to_string)
        .or_else(|| lc.config.moran.variable.clone())
        .ok_or_else(|| CliError::config("MissingArgument", "no --variable given and moran.variable unset".into()))?;
    let year = year
        .or(lc.config.moran.year)
        .ok_or_else(|| CliError::config("MissingArgument", "no --year given and moran.year unset".into()))?;
    let permutations = lc.config.moran.permutations;
    let seed = if permutations > 0 { lc.seed()? } else { lc.config.seed.unwrap_or(0) };

    let ds = load_study_panel(lc)?;
    let ds = derive_variables(lc, &ds, std::slice::from_ref(&variable))?;
    let w = load_weights(lc, ds.cities())?;
    let v = ds.variable_index(&variable)?;
    let t = ds.year_index(year)?;
    let x: Vec<f64> = (0..ds.cities().len())
        .map(|c| ds.require(c, t, v))
        .collect::<Result<_, _>>()?;
    let isolated = w.isolated();
    if !isolated.is_empty() {
        eprintln!("warning: isolated cities with no neighbours: {isolated:?}");
    }
    let global = global_moran(&x, &w, permutations, seed)?;
    let local = local_moran(&x, &w, permutations, seed)?;
    let out = json!({
        "variable": variable,
        "year": year,
        "n": x.len(),
        "seed": seed,
        "isolated": isolated,
        "global": global,
        "local": local.cities,
    });
    Ok(vec![("moran.json".into(), json_bytes(&out))])
}

fn model_variables(spec: &ModelSpec) -> Vec<String> {
    let mut v = vec![spec.dependent.clone(), spec.focal.clone()];
    v.extend(spec.controls.iter().cloned());
    v
}

fn fit_one(model: ModelChoice, d: &DesignMatrices, w: Option<&SpatialWeights>) -> Result<SpatialFit, CliError> {
    Ok(match model {
        ModelChoice::Ols => fit_ols_fe(d)?,
        ModelChoice::Slm => fit_slm_fe(d, w.expect("weights loaded for spatial models"))?,
        ModelChoice::Sem => fit_sem_fe(d, w.expect("weights loaded for spatial models"))?,
    })
}

#[derive(Serialize)]
struct LmColumn {
    column: String,
    nobs: usize,
    #[serde(flatten)]
    diagnostics: LmDiagnostics,
}

pub fn fit(lc: &LoadedConfig, model: ModelChoice, spec: Option<&str>) -> Result<Outputs, CliError> {
    let specs: Vec<&ModelSpec> = match spec {
        Some(name) => vec![lc.model(name)?],
        None if lc.config.models.is_empty() => {
            return Err(CliError::config("UnknownModelSpec", "no model specs configured".into()));
        }
        None => lc.config.models.iter().collect(),
    };
    let ds = load_study_panel(lc)?;
    let needed: Vec<String> = specs
        .iter()
        .flat_map(|s| model_variables(s))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let ds = derive_variables(lc, &ds, &needed)?;
    let spatial = model != ModelChoice::Ols;
    let weights = if spatial || lc.config.inputs.adjacency.is_some() {
        Some(load_weights(lc, ds.cities())?)
    } else {
        None
    };

    let mut outputs = Outputs::new();
    for spec in specs {
        let mut columns = vec![spec.with_quadratic(false)];
        if spec.include_quadratic {
            columns.push(spec.with_quadratic(true));
        }
        let mut fits = Vec::new();
        let mut lm = Vec::new();
        for col in &columns {
            let mut d = build_design(&ds, col)?;
            if spatial && !d.balanced {
                let before = d.nobs();
                d = balance(&d)?;
                eprintln!(
                    "note: {}: balanced panel keeps {} of {} rows",
                    spec.name,
                    d.nobs(),
                    before
                );
            }
            fits.push(fit_one(model, &d, weights.as_ref())?);
            if model == ModelChoice::Ols {
                if let Some(w) = &weights {
                    let b = balance(&d)?;
                    let ols = fit_ols_fe(&b)?;
                    lm.push(LmColumn {
                        column: if col.include_quadratic { "quadratic" } else { "linear" }.into(),
                        nobs: b.nobs(),
                        diagnostics: lm_tests(&b, &ols, w)?,
                    });
                }
            }
        }
        let table = summarize(&fits, spec);
        outputs.push((format!("{}.txt", spec.name), table.render_text().into_bytes()));
        outputs.push((format!("{}.json", spec.name), format!("{}\n", table.to_json()).into_bytes()));
        if !lm.is_empty() {
            outputs.push((format!("{}_lm.json", spec.name), json_bytes(&lm)));
        }
    }
    Ok(outputs)
}

/// Parses generator parameters, taking the seed from the file when present
/// and from the configuration otherwise.
fn params_with_seed(lc: &LoadedConfig, params: Option<&str>) -> Result<(serde_json::Value, u64), CliError> {
    let mut value: serde_json::Value = match params {
        Some(text) => serde_json::from_str(text)
            .map_err(|e| CliError::config("MalformedParams", e.to_string()))?,
        None => json!({}),
    };
    let seed = match value.get("seed") {
        Some(s) => s
            .as_u64()
            .ok_or_else(|| CliError::config("MalformedParams", "seed must be a nonnegative integer".into()))?,
        None => lc.seed()?,
    };
    value["seed"] = json!(seed);
    Ok((value, seed))
}

fn edges_csv(edges: &[(String, String)]) -> Result<Vec<u8>, CliError> {
    csv_bytes(|buf| {
        let mut w = csv::Writer::from_writer(buf);
        w.write_record(["city_a", "city_b"])?;
        for (a, b) in edges {
            w.write_record([a, b])?;
        }
        w.flush()?;
        Ok(())
    })
}

pub fn synth(lc: &LoadedConfig, generator: Generator, params: Option<&str>) -> Result<Outputs, CliError> {
    let (value, seed) = params_with_seed(lc, params)?;
    let parse_err = |e: serde_json::Error| CliError::config("MalformedParams", e.to_string());
    let panel = match generator {
        Generator::Demo => {
            let demo = gen_demo(seed)?;
            return Ok(vec![
                ("panel.csv".into(), demo.panel.to_long_string().into_bytes()),
                ("adjacency.csv".into(), edges_csv(&demo.edges)?),
            ]);
        }
        Generator::Density => {
            if params.is_none() {
                return Err(CliError::config("MissingInput", "--params is required".into()));
            }
            let p: DensityParams = serde_json::from_value(value).map_err(parse_err)?;
            gen_density_panel(&p, seed)?
        }
        Generator::Slm | Generator::Sem => {
            if params.is_none() {
                return Err(CliError::config("MissingInput", "--params is required".into()));
            }
            let p: SlmDgpParams = serde_json::from_value(value).map_err(parse_err)?;
            let path = lc.input("adjacency", lc.config.inputs.adjacency.as_ref())?;
            let edges = load_edges(&path).map_err(|e| CliError::from(e).at(&path))?;
            let cities: Vec<String> = edges
                .iter()
                .flat_map(|(a, b)| [a.clone(), b.clone()])
                .collect::<BTreeSet<_>>()
                .into_iter()
                .collect();
            let w = build_weights(&edges, &cities, lc.config.inputs.standardize).map_err(|e| CliError::from(e).at(&path))?;
            let out = if generator == Generator::Slm {
                gen_slm_panel(&p, &w, &Exogenous::StandardNormal)?
            } else {
                gen_sem_panel(&p, &w, &Exogenous::StandardNormal)?
            };
            out.panel
        }
    };
    Ok(vec![("panel.csv".into(), panel.to_long_string().into_bytes())])
}

//! CSV and JSON dataset files. All floats are written with shortest
//! round-trip formatting and files are written atomically (temp + rename).

use std::fs;
use std::path::Path;

use crate::data::{Observation, OutcomeTable};
use crate::error::{Error, Result};
use crate::graph::{TreatmentCatalog, TreatmentId};
use crate::numerics::Tensor;

/// Write via a sibling temp file and rename, so readers never observe a
/// partial file.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    let display = path.display().to_string();
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| Error::io(display.clone(), e))?;
        }
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp_path = std::path::PathBuf::from(tmp);
    fs::write(&tmp_path, bytes).map_err(|e| Error::io(tmp_path.display().to_string(), e))?;
    fs::rename(&tmp_path, path).map_err(|e| Error::io(display, e))
}

fn parse_field<T: std::str::FromStr>(
    file: &str,
    row: usize,
    field: &str,
    raw: &str,
) -> Result<T> {
    raw.trim().parse::<T>().map_err(|_| {
        Error::schema(
            file,
            format!("row {row}, field {field}"),
            format!("cannot parse {raw:?}"),
        )
    })
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::schema(path.display().to_string(), "open", e.to_string()))
}

// ── Covariates: unit_id, x0..x{D-1} ─────────────────────────────────

pub fn write_covariates_csv(path: &Path, covariates: &Tensor) -> Result<()> {
    let mut out = String::from("unit_id");
    for d in 0..covariates.cols() {
        out.push_str(&format!(",x{d}"));
    }
    out.push('\n');
    for u in 0..covariates.rows() {
        out.push_str(&u.to_string());
        for v in covariates.row(u) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_covariates_csv(path: &Path) -> Result<Tensor> {
    let file = path.display().to_string();
    let mut reader = csv_reader(path)?;
    let width = reader
        .headers()
        .map_err(|e| Error::schema(&file, "header", e.to_string()))?
        .len();
    if width < 2 {
        return Err(Error::schema(&file, "header", "expected unit_id plus covariates"));
    }
    let dim = width - 1;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::schema(&file, format!("row {row}"), e.to_string()))?;
        if record.len() != width {
            return Err(Error::schema(
                &file,
                format!("row {row}"),
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let unit: usize = parse_field(&file, row, "unit_id", &record[0])?;
        if unit != i {
            return Err(Error::schema(
                &file,
                format!("row {row}, field unit_id"),
                format!("unit ids must be dense and ordered; expected {i}, found {unit}"),
            ));
        }
        for d in 0..dim {
            let v: f64 = parse_field(&file, row, &format!("x{d}"), &record[d + 1])?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::schema(&file, "body", "no covariate rows"));
    }
    Tensor::matrix(rows, dim, data)
}

// ── Outcome table: unit_id, t1..t|T| ────────────────────────────────

pub fn write_outcomes_csv(path: &Path, outcomes: &Tensor) -> Result<()> {
    let mut out = String::from("unit_id");
    for t in 1..=outcomes.cols() {
        out.push_str(&format!(",t{t}"));
    }
    out.push('\n');
    for u in 0..outcomes.rows() {
        out.push_str(&u.to_string());
        for v in outcomes.row(u) {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    atomic_write(path, out.as_bytes())
}

pub fn read_outcomes_csv(path: &Path) -> Result<Tensor> {
    let file = path.display().to_string();
    let mut reader = csv_reader(path)?;
    let width = reader
        .headers()
        .map_err(|e| Error::schema(&file, "header", e.to_string()))?
        .len();
    if width < 2 {
        return Err(Error::schema(&file, "header", "expected unit_id plus treatments"));
    }
    let treatments = width - 1;
    let mut data = Vec::new();
    let mut rows = 0usize;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::schema(&file, format!("row {row}"), e.to_string()))?;
        if record.len() != width {
            return Err(Error::schema(
                &file,
                format!("row {row}"),
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let unit: usize = parse_field(&file, row, "unit_id", &record[0])?;
        if unit != i {
            return Err(Error::schema(
                &file,
                format!("row {row}, field unit_id"),
                format!("unit ids must be dense and ordered; expected {i}, found {unit}"),
            ));
        }
        for t in 0..treatments {
            let v: f64 = parse_field(&file, row, &format!("t{}", t + 1), &record[t + 1])?;
            data.push(v);
        }
        rows += 1;
    }
    if rows == 0 {
        return Err(Error::schema(&file, "body", "no outcome rows"));
    }
    Tensor::matrix(rows, treatments, data)
}

// ── Observations: unit_id, treatment_id, outcome ────────────────────

pub fn write_observations_csv(path: &Path, observations: &[Observation]) -> Result<()> {
    let mut out = String::from("unit_id,treatment_id,outcome\n");
    for o in observations {
        out.push_str(&format!("{},{},{}\n", o.unit_index, o.treatment, o.outcome));
    }
    atomic_write(path, out.as_bytes())
}

/// Read observations and resolve covariates against the table; enforces
/// referential integrity of unit and treatment ids.
pub fn read_observations_csv(
    path: &Path,
    table: &OutcomeTable,
    catalog: &TreatmentCatalog,
) -> Result<Vec<Observation>> {
    let file = path.display().to_string();
    let mut reader = csv_reader(path)?;
    let headers = reader
        .headers()
        .map_err(|e| Error::schema(&file, "header", e.to_string()))?
        .clone();
    let expected = ["unit_id", "treatment_id", "outcome"];
    if headers.len() != 3 || headers.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(Error::schema(
            &file,
            "header",
            format!("expected columns {expected:?}"),
        ));
    }
    let mut out = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|e| Error::schema(&file, format!("row {row}"), e.to_string()))?;
        let unit: usize = parse_field(&file, row, "unit_id", &record[0])?;
        let tid: usize = parse_field(&file, row, "treatment_id", &record[1])?;
        let outcome: f64 = parse_field(&file, row, "outcome", &record[2])?;
        if unit >= table.n_units() {
            return Err(Error::schema(
                &file,
                format!("row {row}, field unit_id"),
                format!("unit {unit} not present in the covariates file"),
            ));
        }
        if tid == 0 || tid > catalog.len() {
            return Err(Error::schema(
                &file,
                format!("row {row}, field treatment_id"),
                format!(
                    "treatment {tid} has no graph in the catalog (1..={})",
                    catalog.len()
                ),
            ));
        }
        if !outcome.is_finite() {
            return Err(Error::schema(
                &file,
                format!("row {row}, field outcome"),
                "outcome must be finite",
            ));
        }
        out.push(Observation {
            unit_index: unit,
            covariates: table.unit_covariates(unit).to_vec(),
            treatment: TreatmentId(tid),
            outcome,
        });
    }
    Ok(out)
}

// ── Whole datasets ──────────────────────────────────────────────────

pub struct DatasetPaths<'a> {
    pub catalog: &'a Path,
    pub covariates: &'a Path,
    pub outcomes: &'a Path,
}

pub fn save_dataset(
    paths: &DatasetPaths,
    catalog: &TreatmentCatalog,
    table: &OutcomeTable,
) -> Result<()> {
    catalog.save(paths.catalog)?;
    write_covariates_csv(paths.covariates, table.covariates())?;
    write_outcomes_csv(paths.outcomes, table.outcomes())
}

pub fn load_dataset(paths: &DatasetPaths) -> Result<(TreatmentCatalog, OutcomeTable)> {
    let catalog = TreatmentCatalog::load(paths.catalog)?;
    let covariates = read_covariates_csv(paths.covariates)?;
    let outcomes = read_outcomes_csv(paths.outcomes)?;
    if outcomes.cols() != catalog.len() {
        return Err(Error::schema(
            paths.outcomes.display().to_string(),
            "header",
            format!(
                "{} outcome columns vs {} catalog treatments",
                outcomes.cols(),
                catalog.len()
            ),
        ));
    }
    if outcomes.rows() != covariates.rows() {
        return Err(Error::schema(
            paths.outcomes.display().to_string(),
            "body",
            format!(
                "{} outcome rows vs {} covariate rows",
                outcomes.rows(),
                covariates.rows()
            ),
        ));
    }
    let table = OutcomeTable::new(covariates, outcomes)?;
    Ok((catalog, table))
}

//! CSV ingestion and emission of samples.
//!
//! Format: a header row with columns `x1..xd` plus an optional `weight`
//! column (absent means uniform weights); comma separator, UTF-8, LF line
//! endings. Floats are written with 17 significant digits so a written
//! sample re-ingests to the identical sample.

use std::path::Path;

use tscatter::Sample;

pub fn read_sample(path: &Path) -> Result<Sample, String> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| format!("cannot open {}: {e}", path.display()))?;
    let headers = reader
        .headers()
        .map_err(|e| format!("cannot read CSV header: {e}"))?
        .clone();

    let mut weight_col = None;
    let mut coord_cols = Vec::new();
    for (idx, name) in headers.iter().enumerate() {
        if name == "weight" {
            if weight_col.is_some() {
                return Err("duplicate weight column".into());
            }
            weight_col = Some(idx);
        } else {
            coord_cols.push((idx, name.to_string()));
        }
    }
    let dim = coord_cols.len();
    if dim == 0 {
        return Err("no coordinate columns (expected x1..xd)".into());
    }
    for (k, (_, name)) in coord_cols.iter().enumerate() {
        let expected = format!("x{}", k + 1);
        if name != &expected {
            return Err(format!(
                "unexpected column {name:?}; coordinate columns must be named x1..x{dim} in order"
            ));
        }
    }

    let mut points = Vec::new();
    let mut weights = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format!("row {}: {e}", row_idx + 2))?;
        let parse = |idx: usize| -> Result<f64, String> {
            record
                .get(idx)
                .ok_or_else(|| format!("row {}: missing column {idx}", row_idx + 2))?
                .trim()
                .parse::<f64>()
                .map_err(|e| format!("row {}: {e}", row_idx + 2))
        };
        let point: Vec<f64> = coord_cols
            .iter()
            .map(|&(idx, _)| parse(idx))
            .collect::<Result<_, _>>()?;
        points.push(point);
        if let Some(idx) = weight_col {
            weights.push(parse(idx)?);
        }
    }
    if points.is_empty() {
        return Err("CSV has no data rows".into());
    }

    let sample = if weight_col.is_some() {
        Sample::new(points, weights)
    } else {
        Sample::uniform(points)
    };
    sample.map_err(|e| format!("invalid sample: {e}"))
}

pub fn write_sample(sample: &Sample, path: &Path) -> Result<(), String> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| format!("cannot create {}: {e}", path.display()))?;
    let dim = sample.dim();
    let mut header: Vec<String> = (1..=dim).map(|k| format!("x{k}")).collect();
    header.push("weight".into());
    writer
        .write_record(&header)
        .map_err(|e| format!("cannot write header: {e}"))?;
    for (point, weight) in sample.iter() {
        let mut row: Vec<String> = point.iter().map(|v| format!("{v:.16e}")).collect();
        row.push(format!("{weight:.16e}"));
        writer
            .write_record(&row)
            .map_err(|e| format!("cannot write row: {e}"))?;
    }
    writer.flush().map_err(|e| format!("cannot flush: {e}"))
}

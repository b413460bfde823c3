use std::path::Path;

use super::{table, DataError, Dataset, JoinedTable};
use crate::artifact::{csv_string, write_atomic, write_json};

fn io_err(path: &Path, source: std::io::Error) -> DataError {
    DataError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dataset CSV: a `#` schema comment line, a header, then one sample per
/// row (date, features, normalized target).
pub fn dataset_csv(ds: &Dataset) -> String {
    let s = &ds.schema;
    let n = &s.normalization;
    let comment = format!(
        "# hydroverify dataset; n_stations={}; use_runoff={}; use_day={}; lag_window={}; temp_range=[{},{}]; runoff_range=[{},{}]; day_scale={}\n",
        s.features.n_stations,
        s.features.use_runoff,
        s.features.use_day,
        s.features.lag_window,
        n.temp_min,
        n.temp_max,
        n.runoff_min,
        n.runoff_max,
        n.day_scale
    );
    let mut header: Vec<&str> = vec!["date"];
    header.extend(s.feature_names.iter().map(String::as_str));
    header.push("target");
    let rows = ds.samples.iter().map(|smp| {
        std::iter::once(smp.date.to_string())
            .chain(smp.x.iter().map(|v| v.to_string()))
            .chain(std::iter::once(smp.target.to_string()))
            .collect::<Vec<_>>()
    });
    comment + &csv_string(&header, rows)
}

/// Writes `<stem>.csv` and the sidecar `<stem>.schema.json`.
pub fn write_dataset(dir: &Path, stem: &str, ds: &Dataset) -> Result<(), DataError> {
    let csv_path = dir.join(format!("{stem}.csv"));
    write_atomic(&csv_path, dataset_csv(ds).as_bytes()).map_err(|e| io_err(&csv_path, e))?;
    let schema_path = dir.join(format!("{stem}.schema.json"));
    write_json(&schema_path, &ds.schema).map_err(|e| io_err(&schema_path, e))
}

/// Writes a joined table back out in the ingest formats: one air file per
/// station plus `hydro.csv`. Returns the air file paths in station order.
pub fn write_source_csvs(dir: &Path, t: &JoinedTable) -> Result<Vec<std::path::PathBuf>, DataError> {
    let mut air_paths = Vec::new();
    for (s, name) in t.stations().iter().enumerate() {
        let path = dir.join(format!("{name}.csv"));
        let body = csv_string(
            &table::AIR_HEADER,
            t.rows()
                .iter()
                .map(|r| [r.date.to_string(), r.air_temps[s].to_string()]),
        );
        write_atomic(&path, body.as_bytes()).map_err(|e| io_err(&path, e))?;
        air_paths.push(path);
    }
    let path = dir.join("hydro.csv");
    let body = csv_string(
        &table::HYDRO_HEADER,
        t.rows()
            .iter()
            .map(|r| [r.date.to_string(), r.water_temp.to_string(), r.runoff.to_string()]),
    );
    write_atomic(&path, body.as_bytes()).map_err(|e| io_err(&path, e))?;
    Ok(air_paths)
}

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::DataError;

/// Missing-measurement marker used by the upstream data providers.
pub const SENTINEL: f64 = -999.0;

pub const AIR_HEADER: [&str; 2] = ["date", "air_temp_c"];
pub const HYDRO_HEADER: [&str; 3] = ["date", "water_temp_c", "runoff_m3s"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailyRecord {
    pub date: NaiveDate,
    /// One daily mean per air station, in station order.
    pub air_temps: Vec<f64>,
    pub water_temp: f64,
    pub runoff: f64,
}

/// Date-aligned daily records. Construction enforces strictly increasing
/// dates, a constant station count and the absence of the sentinel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JoinedTable {
    stations: Vec<String>,
    rows: Vec<DailyRecord>,
}

impl JoinedTable {
    pub fn new(stations: Vec<String>, rows: Vec<DailyRecord>) -> Result<Self, DataError> {
        if rows.is_empty() {
            return Err(DataError::EmptyTable);
        }
        let n = stations.len();
        if n == 0 {
            return Err(DataError::Invariant("table needs at least one air station".into()));
        }
        for (i, row) in rows.iter().enumerate() {
            if row.air_temps.len() != n {
                return Err(DataError::Invariant(format!(
                    "row {} ({}) has {} air values, expected {n}",
                    i,
                    row.date,
                    row.air_temps.len()
                )));
            }
            let values = row.air_temps.iter().chain([&row.water_temp, &row.runoff]);
            for v in values {
                if *v == SENTINEL || !v.is_finite() {
                    return Err(DataError::Invariant(format!(
                        "row {} ({}) contains a missing or non-finite value",
                        i, row.date
                    )));
                }
            }
            if i > 0 && rows[i - 1].date >= row.date {
                return Err(DataError::Invariant(format!(
                    "dates not strictly increasing at row {i} ({})",
                    row.date
                )));
            }
        }
        Ok(Self { stations, rows })
    }

    pub fn rows(&self) -> &[DailyRecord] {
        &self.rows
    }

    pub fn stations(&self) -> &[String] {
        &self.stations
    }

    pub fn n_stations(&self) -> usize {
        self.stations.len()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Restricts the table to a subset of air stations, in the given order.
    pub fn select_stations(&self, indices: &[usize]) -> Result<Self, DataError> {
        if let Some(&bad) = indices.iter().find(|&&i| i >= self.n_stations()) {
            return Err(DataError::Schema(format!(
                "station index {bad} out of range for {} stations",
                self.n_stations()
            )));
        }
        let stations = indices.iter().map(|&i| self.stations[i].clone()).collect();
        let rows = self
            .rows
            .iter()
            .map(|r| DailyRecord {
                date: r.date,
                air_temps: indices.iter().map(|&i| r.air_temps[i]).collect(),
                water_temp: r.water_temp,
                runoff: r.runoff,
            })
            .collect();
        Self::new(stations, rows)
    }
}

fn open_reader(path: &Path) -> Result<csv::Reader<std::fs::File>, DataError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_path(path)
        .map_err(|e| DataError::from_csv(path, e))
}

fn check_header(path: &Path, reader: &mut csv::Reader<std::fs::File>, expected: &[&str]) -> Result<(), DataError> {
    let header = reader.headers().map_err(|e| DataError::from_csv(path, e))?;
    let found: Vec<&str> = header.iter().collect();
    if found != expected {
        return Err(DataError::Header {
            path: path.to_path_buf(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: u64, name: &str, raw: &str) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    raw.parse::<T>().map_err(|e| DataError::Parse {
        path: path.to_path_buf(),
        line,
        message: format!("field `{name}` = {raw:?}: {e}"),
    })
}

/// Reads one CSV with the given header. Rows carrying the sentinel in any
/// value column are dropped; duplicate dates are rejected.
fn read_series(path: &Path, header: &[&str]) -> Result<BTreeMap<NaiveDate, Vec<f64>>, DataError> {
    let mut reader = open_reader(path)?;
    check_header(path, &mut reader, header)?;
    let mut out = BTreeMap::new();
    let mut seen = std::collections::BTreeSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| DataError::from_csv(path, e))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("expected {} fields, found {}", header.len(), record.len()),
            });
        }
        let date: NaiveDate = parse_field(path, line, header[0], &record[0])?;
        if !seen.insert(date) {
            return Err(DataError::Parse {
                path: path.to_path_buf(),
                line,
                message: format!("duplicate date {date}"),
            });
        }
        let mut values = Vec::with_capacity(header.len() - 1);
        for (i, name) in header.iter().enumerate().skip(1) {
            let v: f64 = parse_field(path, line, name, &record[i])?;
            if !v.is_finite() {
                return Err(DataError::Parse {
                    path: path.to_path_buf(),
                    line,
                    message: format!("field `{name}` is not finite"),
                });
            }
            values.push(v);
        }
        if values.contains(&SENTINEL) {
            continue;
        }
        out.insert(date, values);
    }
    Ok(out)
}

/// Joins one air-temperature file per station with the hydrological record
/// on exact calendar date. Only dates present (and sentinel-free) in every
/// file survive.
pub fn ingest<P: AsRef<Path>>(air_csv_paths: &[P], hydro_csv_path: &Path) -> Result<JoinedTable, DataError> {
    if air_csv_paths.is_empty() {
        return Err(DataError::Schema(
            "at least one air-temperature file is required".into(),
        ));
    }
    let air: Vec<_> = air_csv_paths
        .iter()
        .map(|p| read_series(p.as_ref(), &AIR_HEADER))
        .collect::<Result<_, _>>()?;
    let hydro = read_series(hydro_csv_path, &HYDRO_HEADER)?;

    let mut rows = Vec::new();
    for (date, hv) in &hydro {
        let air_temps: Option<Vec<f64>> = air.iter().map(|s| s.get(date).map(|v| v[0])).collect();
        if let Some(air_temps) = air_temps {
            rows.push(DailyRecord {
                date: *date,
                air_temps,
                water_temp: hv[0],
                runoff: hv[1],
            });
        }
    }
    if rows.is_empty() {
        return Err(DataError::EmptyTable);
    }
    let stations = air_csv_paths.iter().map(|p| station_name(p.as_ref())).collect();
    JoinedTable::new(stations, rows)
}

fn station_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| PathBuf::from(path).display().to_string())
}

use std::fmt;
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::{DataError, JoinedTable, NormalizationSpec};

pub const DEFAULT_LAG_WINDOW: usize = 4;

/// Which inputs a model sees: air temperatures always, optionally runoff and
/// the day of the year.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, PartialOrd, Ord)]
pub enum InputVariant {
    #[serde(rename = "A")]
    Air,
    #[serde(rename = "A+R")]
    AirRunoff,
    #[serde(rename = "A+D")]
    AirDay,
    #[serde(rename = "A+R+D")]
    AirRunoffDay,
}

impl InputVariant {
    pub const ALL: [InputVariant; 4] = [
        InputVariant::Air,
        InputVariant::AirRunoff,
        InputVariant::AirDay,
        InputVariant::AirRunoffDay,
    ];

    pub fn uses_runoff(self) -> bool {
        matches!(self, InputVariant::AirRunoff | InputVariant::AirRunoffDay)
    }

    pub fn uses_day(self) -> bool {
        matches!(self, InputVariant::AirDay | InputVariant::AirRunoffDay)
    }

    pub fn label(self) -> &'static str {
        match self {
            InputVariant::Air => "A",
            InputVariant::AirRunoff => "A+R",
            InputVariant::AirDay => "A+D",
            InputVariant::AirRunoffDay => "A+R+D",
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for InputVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.replace(' ', "").to_ascii_uppercase().as_str() {
            "A" => Ok(InputVariant::Air),
            "A+R" => Ok(InputVariant::AirRunoff),
            "A+D" => Ok(InputVariant::AirDay),
            "A+R+D" => Ok(InputVariant::AirRunoffDay),
            other => Err(format!(
                "unknown input variant `{other}` (expected A, A+R, A+D or A+R+D)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub n_stations: usize,
    pub use_runoff: bool,
    pub use_day: bool,
    /// Current day plus previous days.
    pub lag_window: usize,
}

impl FeatureConfig {
    pub fn new(n_stations: usize, variant: InputVariant) -> Self {
        Self {
            n_stations,
            use_runoff: variant.uses_runoff(),
            use_day: variant.uses_day(),
            lag_window: DEFAULT_LAG_WINDOW,
        }
    }

    pub fn with_lag_window(mut self, lag_window: usize) -> Self {
        self.lag_window = lag_window;
        self
    }

    pub fn input_dim(&self) -> usize {
        self.n_stations * self.lag_window
            + if self.use_runoff { self.lag_window } else { 0 }
            + usize::from(self.use_day)
    }

    pub fn variant(&self) -> InputVariant {
        match (self.use_runoff, self.use_day) {
            (false, false) => InputVariant::Air,
            (true, false) => InputVariant::AirRunoff,
            (false, true) => InputVariant::AirDay,
            (true, true) => InputVariant::AirRunoffDay,
        }
    }

    /// Feature kinds in vector order: station-major air lags, runoff lags,
    /// then the day of year.
    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        let mut kinds = Vec::with_capacity(self.input_dim());
        for station in 0..self.n_stations {
            for lag in 0..self.lag_window {
                kinds.push(FeatureKind::Air { station, lag });
            }
        }
        if self.use_runoff {
            for lag in 0..self.lag_window {
                kinds.push(FeatureKind::Runoff { lag });
            }
        }
        if self.use_day {
            kinds.push(FeatureKind::DayOfYear);
        }
        kinds
    }

    fn validate(&self) -> Result<(), DataError> {
        if self.n_stations == 0 {
            return Err(DataError::Schema("feature config needs at least one station".into()));
        }
        if self.lag_window == 0 {
            return Err(DataError::Schema(
                "lag window must cover at least the current day".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureKind {
    Air { station: usize, lag: usize },
    Runoff { lag: usize },
    DayOfYear,
}

impl FeatureKind {
    pub fn label(&self) -> String {
        fn lag_suffix(lag: usize) -> String {
            if lag == 0 {
                "t0".to_string()
            } else {
                format!("t-{lag}")
            }
        }
        match self {
            FeatureKind::Air { station, lag } => format!("air_s{}_{}", station + 1, lag_suffix(*lag)),
            FeatureKind::Runoff { lag } => format!("runoff_{}", lag_suffix(*lag)),
            FeatureKind::DayOfYear => "day_of_year".to_string(),
        }
    }

    /// Physical value of a normalized coordinate of this kind.
    pub fn denormalize(&self, norm: &NormalizationSpec, v: f64) -> f64 {
        match self {
            FeatureKind::Air { .. } => norm.denormalize_temperature(v),
            FeatureKind::Runoff { .. } => norm.denormalize_runoff(v),
            FeatureKind::DayOfYear => norm.denormalize_day(v),
        }
    }

    pub fn normalize(&self, norm: &NormalizationSpec, v: f64) -> f64 {
        match self {
            FeatureKind::Air { .. } => norm.normalize_temperature(v),
            FeatureKind::Runoff { .. } => norm.normalize_runoff(v),
            FeatureKind::DayOfYear => norm.normalize_day(v),
        }
    }
}

/// Everything needed to reproduce (and check compatibility with) the
/// feature vectors a model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub features: FeatureConfig,
    pub normalization: NormalizationSpec,
    pub feature_names: Vec<String>,
    #[serde(default)]
    pub station_names: Vec<String>,
}

impl DatasetSchema {
    pub fn new(features: FeatureConfig, normalization: NormalizationSpec, station_names: Vec<String>) -> Self {
        let feature_names = features.feature_kinds().iter().map(FeatureKind::label).collect();
        Self {
            features,
            normalization,
            feature_names,
            station_names,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.features.input_dim()
    }

    pub fn feature_kinds(&self) -> Vec<FeatureKind> {
        self.features.feature_kinds()
    }

    /// Internal consistency: names match the configured layout.
    pub fn validate(&self) -> Result<(), DataError> {
        self.features.validate()?;
        if !self.normalization.is_valid() {
            return Err(DataError::Schema("invalid normalization constants".into()));
        }
        let expected: Vec<String> = self.feature_kinds().iter().map(FeatureKind::label).collect();
        if expected != self.feature_names {
            return Err(DataError::Schema(format!(
                "feature names do not match the configured layout ({} names, {} expected)",
                self.feature_names.len(),
                expected.len()
            )));
        }
        Ok(())
    }

    /// Compatibility for feeding data of this schema into a model trained on
    /// `other`. Station names are informational only.
    pub fn is_compatible(&self, other: &DatasetSchema) -> bool {
        self.features == other.features
            && self.normalization == other.normalization
            && self.feature_names == other.feature_names
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub date: NaiveDate,
    pub x: Vec<f64>,
    /// Normalized water temperature.
    pub target: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub samples: Vec<Sample>,
    pub schema: DatasetSchema,
    /// Raw values outside the normalization range that were clamped to it.
    #[serde(default)]
    pub clamped_values: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.schema.input_dim()
    }

    pub fn subset(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            schema: self.schema.clone(),
            clamped_values: 0,
        }
    }
}

fn day_of_year(date: NaiveDate) -> f64 {
    // Leap-year day 366 shares the last slot so the feature stays in [0, 1].
    f64::from(date.ordinal().min(365))
}

/// Builds one sample per date whose whole lag window (t, t-1, ...) is
/// present in the table as consecutive calendar days.
pub fn build_features(table: &JoinedTable, cfg: &FeatureConfig) -> Result<Dataset, DataError> {
    build_features_with(table, cfg, NormalizationSpec::default())
}

pub fn build_features_with(
    table: &JoinedTable,
    cfg: &FeatureConfig,
    norm: NormalizationSpec,
) -> Result<Dataset, DataError> {
    cfg.validate()?;
    if cfg.n_stations != table.n_stations() {
        return Err(DataError::Schema(format!(
            "feature config expects {} stations, table has {}",
            cfg.n_stations,
            table.n_stations()
        )));
    }
    if !norm.is_valid() {
        return Err(DataError::Schema("invalid normalization constants".into()));
    }
    let rows = table.rows();
    let lag = cfg.lag_window;
    let mut clamped = 0usize;
    let mut unit = |v: f64| {
        if (0.0..=1.0).contains(&v) {
            v
        } else {
            clamped += 1;
            v.clamp(0.0, 1.0)
        }
    };

    let mut samples = Vec::new();
    for t in (lag - 1)..rows.len() {
        let date = rows[t].date;
        let window_ok = (1..lag).all(|k| {
            let expected = date - chrono::Duration::days(k as i64);
            rows[t - k].date == expected
        });
        if !window_ok {
            continue;
        }
        let mut x = Vec::with_capacity(cfg.input_dim());
        for s in 0..cfg.n_stations {
            for k in 0..lag {
                x.push(unit(norm.normalize_temperature(rows[t - k].air_temps[s])));
            }
        }
        if cfg.use_runoff {
            for k in 0..lag {
                x.push(unit(norm.normalize_runoff(rows[t - k].runoff)));
            }
        }
        if cfg.use_day {
            x.push(unit(norm.normalize_day(day_of_year(date))));
        }
        samples.push(Sample {
            date,
            x,
            target: norm.normalize_temperature(rows[t].water_temp),
        });
    }
    if clamped > 0 {
        log::warn!("{clamped} feature values fell outside the normalization range and were clamped");
    }
    Ok(Dataset {
        samples,
        schema: DatasetSchema::new(*cfg, norm, table.stations().to_vec()),
        clamped_values: clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::DailyRecord;

    fn table(dates: &[&str], n_stations: usize, air: f64) -> JoinedTable {
        let rows = dates
            .iter()
            .map(|d| DailyRecord {
                date: d.parse().unwrap(),
                air_temps: vec![air; n_stations],
                water_temp: 10.0,
                runoff: 1.0,
            })
            .collect();
        JoinedTable::new((0..n_stations).map(|i| format!("s{i}")).collect(), rows).unwrap()
    }

    #[test]
    fn dimension_two_stations_all_inputs() {
        assert_eq!(FeatureConfig::new(2, InputVariant::AirRunoffDay).input_dim(), 13);
    }

    #[test]
    fn dimension_four_stations_air_only() {
        assert_eq!(FeatureConfig::new(4, InputVariant::Air).input_dim(), 16);
    }

    #[test]
    fn extreme_air_values_hit_unit_bounds() {
        let dates = ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04"];
        let hot = build_features(&table(&dates, 1, 60.0), &FeatureConfig::new(1, InputVariant::Air)).unwrap();
        assert_eq!(hot.samples.len(), 1);
        assert!(hot.samples[0].x.iter().all(|&v| v == 1.0));
        let cold = build_features(&table(&dates, 1, -45.0), &FeatureConfig::new(1, InputVariant::Air)).unwrap();
        assert!(cold.samples[0].x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gap_in_window_suppresses_sample() {
        // 2020-01-03 missing: t = 01-05 has t-2 absent
        let dates = [
            "2020-01-01",
            "2020-01-02",
            "2020-01-04",
            "2020-01-05",
            "2020-01-06",
            "2020-01-07",
        ];
        let ds = build_features(&table(&dates, 1, 5.0), &FeatureConfig::new(1, InputVariant::Air)).unwrap();
        let got: Vec<String> = ds.samples.iter().map(|s| s.date.to_string()).collect();
        assert_eq!(got, vec!["2020-01-07"]);
    }

    #[test]
    fn feature_layout_matches_window_rule() {
        let rows: Vec<DailyRecord> = (0..5)
            .map(|i| DailyRecord {
                date: NaiveDate::from_ymd_opt(2021, 3, 1 + i).unwrap(),
                air_temps: vec![f64::from(i), 10.0 + f64::from(i)],
                water_temp: 5.0 + f64::from(i),
                runoff: f64::from(i),
            })
            .collect();
        let t = JoinedTable::new(vec!["a".into(), "b".into()], rows).unwrap();
        let cfg = FeatureConfig::new(2, InputVariant::AirRunoffDay);
        let ds = build_features(&t, &cfg).unwrap();
        assert_eq!(ds.samples.len(), 2);
        let n = NormalizationSpec::default();
        let s = &ds.samples[1]; // t = index 4
        let expected: Vec<f64> = [4.0, 3.0, 2.0, 1.0]
            .iter()
            .map(|&v| n.normalize_temperature(v))
            .chain([14.0, 13.0, 12.0, 11.0].iter().map(|&v| n.normalize_temperature(v)))
            .chain([4.0, 3.0, 2.0, 1.0].iter().map(|&v| n.normalize_runoff(v)))
            .chain(std::iter::once(n.normalize_day(64.0)))
            .collect();
        assert_eq!(s.x, expected);
        assert_eq!(s.target, n.normalize_temperature(9.0));
        assert_eq!(ds.schema.feature_names[0], "air_s1_t0");
        assert_eq!(ds.schema.feature_names[5], "air_s2_t-1");
        assert_eq!(ds.schema.feature_names[12], "day_of_year");
    }

    #[test]
    fn station_mismatch_is_schema_error() {
        let dates = ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04"];
        let err = build_features(&table(&dates, 2, 5.0), &FeatureConfig::new(3, InputVariant::Air));
        assert!(matches!(err, Err(DataError::Schema(_))));
    }

    #[test]
    fn out_of_range_values_are_clamped_and_counted() {
        let dates = ["2020-01-01", "2020-01-02", "2020-01-03", "2020-01-04"];
        let ds = build_features(&table(&dates, 1, 80.0), &FeatureConfig::new(1, InputVariant::Air)).unwrap();
        assert_eq!(ds.clamped_values, 4);
        assert!(ds.samples[0].x.iter().all(|&v| v == 1.0));
    }

    #[test]
    fn leap_day_stays_in_unit_range() {
        let dates = ["2020-12-28", "2020-12-29", "2020-12-30", "2020-12-31"];
        let ds = build_features(&table(&dates, 1, 1.0), &FeatureConfig::new(1, InputVariant::AirDay)).unwrap();
        assert_eq!(*ds.samples[0].x.last().unwrap(), 1.0);
    }

    #[test]
    fn variant_parsing() {
        assert_eq!("a+r+d".parse::<InputVariant>().unwrap(), InputVariant::AirRunoffDay);
        assert_eq!("A + D".parse::<InputVariant>().unwrap(), InputVariant::AirDay);
        assert!("A+X".parse::<InputVariant>().is_err());
        for v in InputVariant::ALL {
            assert_eq!(v.label().parse::<InputVariant>().unwrap(), v);
            assert_eq!(FeatureConfig::new(1, v).variant(), v);
        }
    }
}

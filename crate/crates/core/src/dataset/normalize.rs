use serde::{Deserialize, Serialize};

/// Affine scaling of the raw physical measurements onto `[0, 1]`.
///
/// Temperatures (air and water) share one map, runoff has its own, and the
/// day of the year is divided by `day_scale^-1` days.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationSpec {
    pub temp_min: f64,
    pub temp_max: f64,
    pub runoff_min: f64,
    pub runoff_max: f64,
    pub day_scale: f64,
}

impl Default for NormalizationSpec {
    fn default() -> Self {
        Self {
            temp_min: -45.0,
            temp_max: 60.0,
            runoff_min: -1.0,
            runoff_max: 40.0,
            day_scale: 1.0 / 365.0,
        }
    }
}

impl NormalizationSpec {
    pub fn temp_span(&self) -> f64 {
        self.temp_max - self.temp_min
    }

    pub fn runoff_span(&self) -> f64 {
        self.runoff_max - self.runoff_min
    }

    pub fn normalize_temperature(&self, celsius: f64) -> f64 {
        (celsius - self.temp_min) / self.temp_span()
    }

    pub fn denormalize_temperature(&self, v: f64) -> f64 {
        self.temp_min + self.temp_span() * v
    }

    /// Converts a width in normalized units to a width in °C.
    pub fn temperature_delta(&self, dv: f64) -> f64 {
        self.temp_span() * dv
    }

    pub fn normalize_runoff(&self, m3s: f64) -> f64 {
        (m3s - self.runoff_min) / self.runoff_span()
    }

    pub fn denormalize_runoff(&self, v: f64) -> f64 {
        self.runoff_min + self.runoff_span() * v
    }

    pub fn runoff_delta(&self, dv: f64) -> f64 {
        self.runoff_span() * dv
    }

    pub fn normalize_day(&self, day_of_year: f64) -> f64 {
        day_of_year * self.day_scale
    }

    pub fn denormalize_day(&self, v: f64) -> f64 {
        v / self.day_scale
    }

    pub(crate) fn is_valid(&self) -> bool {
        let finite = [
            self.temp_min,
            self.temp_max,
            self.runoff_min,
            self.runoff_max,
            self.day_scale,
        ]
        .iter()
        .all(|v| v.is_finite());
        finite && self.temp_max > self.temp_min && self.runoff_max > self.runoff_min && self.day_scale > 0.0
    }
}

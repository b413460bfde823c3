use std::f64::consts::PI;

use chrono::{Datelike, NaiveDate};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{DailyRecord, DataError, JoinedTable};

/// Logistic air-to-water temperature curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MohseniParams {
    /// Upper asymptote (°C).
    pub alpha: f64,
    /// Lower asymptote (°C).
    pub mu: f64,
    /// Air temperature at the inflection point (°C).
    pub beta: f64,
    /// Steepness (1/°C).
    pub gamma: f64,
}

impl Default for MohseniParams {
    fn default() -> Self {
        Self {
            alpha: 22.0,
            mu: 0.5,
            beta: 12.0,
            gamma: 0.22,
        }
    }
}

impl MohseniParams {
    pub fn water_temperature(&self, air: f64) -> f64 {
        self.mu + (self.alpha - self.mu) / (1.0 + (self.gamma * (self.beta - air)).exp())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub mohseni: MohseniParams,
    pub air_mean: f64,
    pub air_amplitude: f64,
    /// Day of year at which the annual sinusoid crosses its mean going up.
    pub air_phase_day: f64,
    /// Standard deviation of the day-to-day weather anomaly shared by all stations (°C).
    pub air_noise_sd: f64,
    /// Lag-one autocorrelation of the weather anomaly, in [0, 1).
    pub air_persistence: f64,
    /// Water-temperature noise (°C).
    pub sigma: f64,
    pub n_days: usize,
    pub start_date: NaiveDate,
    pub n_stations: usize,
    /// Per-station additive offsets (°C); missing entries are zero.
    pub station_offsets: Vec<f64>,
    pub runoff_mean: f64,
    pub runoff_amplitude: f64,
    pub runoff_phase_day: f64,
    pub runoff_noise_sd: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            mohseni: MohseniParams::default(),
            air_mean: 9.0,
            air_amplitude: 9.5,
            air_phase_day: 110.0,
            air_noise_sd: 3.0,
            air_persistence: 0.7,
            sigma: 0.3,
            n_days: 2000,
            start_date: NaiveDate::from_ymd_opt(2000, 1, 1).expect("valid date"),
            n_stations: 2,
            station_offsets: vec![0.0, -1.3],
            runoff_mean: 0.8,
            runoff_amplitude: 0.4,
            runoff_phase_day: 30.0,
            runoff_noise_sd: 0.15,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<(), DataError> {
        let m = &self.mohseni;
        let finite = [
            m.alpha,
            m.mu,
            m.beta,
            m.gamma,
            self.air_mean,
            self.air_amplitude,
            self.air_phase_day,
            self.air_noise_sd,
            self.air_persistence,
            self.sigma,
            self.runoff_mean,
            self.runoff_amplitude,
            self.runoff_phase_day,
            self.runoff_noise_sd,
        ]
        .iter()
        .chain(&self.station_offsets)
        .all(|v| v.is_finite());
        let fail = |msg: &str| Err(DataError::InvalidConfig(msg.to_string()));
        if !finite {
            return fail("synthetic parameters must be finite");
        }
        if m.alpha <= m.mu {
            return fail("alpha (upper asymptote) must exceed mu (lower asymptote)");
        }
        if m.gamma <= 0.0 {
            return fail("gamma must be positive");
        }
        if self.sigma < 0.0 || self.air_noise_sd < 0.0 || self.runoff_noise_sd < 0.0 {
            return fail("noise standard deviations must be non-negative");
        }
        if !(0.0..1.0).contains(&self.air_persistence) {
            return fail("air_persistence must lie in [0, 1)");
        }
        if self.n_days == 0 {
            return fail("n_days must be positive");
        }
        if self.n_stations == 0 {
            return fail("n_stations must be positive");
        }
        if self.station_offsets.len() > self.n_stations {
            return fail("more station offsets than stations");
        }
        Ok(())
    }

    fn offset(&self, station: usize) -> f64 {
        self.station_offsets.get(station).copied().unwrap_or(0.0)
    }
}

fn annual(day_of_year: u32, phase_day: f64) -> f64 {
    (2.0 * PI * (f64::from(day_of_year) - phase_day) / 365.0).sin()
}

/// Synthetic stream: sinusoidal air temperature with a persistent weather
/// anomaly, water temperature from the logistic curve plus Gaussian noise,
/// and a seasonal runoff clipped at zero.
pub fn synthesize(cfg: &SynthConfig) -> Result<JoinedTable, DataError> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let innovation = (1.0 - cfg.air_persistence * cfg.air_persistence).sqrt();

    let mut anomaly = 0.0;
    let mut rows = Vec::with_capacity(cfg.n_days);
    for day in 0..cfg.n_days {
        let date = cfg.start_date + chrono::Duration::days(day as i64);
        let doy = date.ordinal();
        let shock = unit.sample(&mut rng);
        anomaly = if day == 0 {
            cfg.air_noise_sd * shock
        } else {
            cfg.air_persistence * anomaly + innovation * cfg.air_noise_sd * shock
        };
        let air = cfg.air_mean + cfg.air_amplitude * annual(doy, cfg.air_phase_day) + anomaly;
        let water = cfg.mohseni.water_temperature(air) + cfg.sigma * unit.sample(&mut rng);
        let runoff = (cfg.runoff_mean
            + cfg.runoff_amplitude * annual(doy, cfg.runoff_phase_day)
            + cfg.runoff_noise_sd * unit.sample(&mut rng))
        .max(0.0);
        rows.push(DailyRecord {
            date,
            air_temps: (0..cfg.n_stations).map(|s| air + cfg.offset(s)).collect(),
            water_temp: water,
            runoff,
        });
    }
    let stations = (0..cfg.n_stations).map(|s| format!("station{}", s + 1)).collect();
    JoinedTable::new(stations, rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logistic_midpoint() {
        let p = MohseniParams::default();
        let cfg = SynthConfig {
            sigma: 0.0,
            air_amplitude: 0.0,
            air_noise_sd: 0.0,
            air_mean: p.beta,
            station_offsets: vec![],
            n_days: 30,
            ..SynthConfig::default()
        };
        let t = synthesize(&cfg).unwrap();
        for r in t.rows() {
            assert!((r.water_temp - (p.alpha + p.mu) / 2.0).abs() < 1e-12);
            assert!((r.air_temps[0] - p.beta).abs() < 1e-12);
        }
    }

    #[test]
    fn logistic_asymptotes() {
        let p = MohseniParams::default();
        assert!((p.water_temperature(1e4) - p.alpha).abs() < 1e-12);
        assert!((p.water_temperature(-1e4) - p.mu).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let cfg = SynthConfig {
            seed: 7,
            ..SynthConfig::default()
        };
        assert_eq!(synthesize(&cfg).unwrap(), synthesize(&cfg).unwrap());
        let other = SynthConfig { seed: 8, ..cfg.clone() };
        assert_ne!(synthesize(&cfg).unwrap(), synthesize(&other).unwrap());
    }

    #[test]
    fn runoff_nonnegative_and_shape() {
        let cfg = SynthConfig {
            runoff_mean: 0.1,
            runoff_noise_sd: 1.0,
            n_stations: 3,
            ..SynthConfig::default()
        };
        let t = synthesize(&cfg).unwrap();
        assert_eq!(t.len(), cfg.n_days);
        assert_eq!(t.n_stations(), 3);
        assert!(t.rows().iter().all(|r| r.runoff >= 0.0));
        let r = &t.rows()[10];
        assert!((r.air_temps[1] - r.air_temps[0] - cfg.station_offsets[1]).abs() < 1e-12);
    }

    #[test]
    fn invalid_parameters_rejected() {
        let mut cfg = SynthConfig::default();
        cfg.mohseni.alpha = cfg.mohseni.mu;
        assert!(matches!(synthesize(&cfg), Err(DataError::InvalidConfig(_))));
        let mut cfg = SynthConfig::default();
        cfg.mohseni.gamma = 0.0;
        assert!(synthesize(&cfg).is_err());
        let cfg = SynthConfig {
            sigma: -0.1,
            ..SynthConfig::default()
        };
        assert!(synthesize(&cfg).is_err());
    }
}
